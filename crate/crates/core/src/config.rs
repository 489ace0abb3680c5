//! Run configuration: a flat JSON document, named presets, and validation.
//!
//! Precedence, lowest to highest: built-in defaults, config file, preset,
//! individual command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objects::Connectivity;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input_dir: PathBuf,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Minutes between consecutive frames.
    #[serde(default = "defaults::interval_minutes")]
    pub interval_minutes: f64,
    /// Superlevel threshold defining cloud objects.
    #[serde(default = "defaults::detection_threshold")]
    pub detection_threshold: f64,
    /// Pixel connectivity for object detection: 4 or 8.
    #[serde(default = "defaults::connectivity")]
    pub connectivity: u8,
    /// Objects strictly smaller than this many pixels are dropped.
    #[serde(default = "defaults::min_area_px")]
    pub min_area_px: u64,
    /// Merge-tree simplification stops once the live node count is below
    /// this cap.
    #[serde(default = "defaults::zone_node_cap")]
    pub zone_node_cap: usize,
    /// Zone-area threshold increment per simplification round, in pixels.
    #[serde(default = "defaults::zone_step")]
    pub zone_step: u64,
    /// Objects within this distance belong to one cloud system.
    #[serde(default = "defaults::merge_radius_km")]
    pub merge_radius_km: f64,
    /// Weight of the structural term; 1 - alpha weighs attribute distance.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Exponent of the matching objective.
    #[serde(default = "defaults::q")]
    pub q: u32,
    /// Inclusive search range for the transported mass.
    #[serde(default = "defaults::m_range")]
    pub m_range: [f64; 2],
    #[serde(default = "defaults::m_step")]
    pub m_step: f64,
    /// Displacement screen radius. Exactly one of this and
    /// `speed_limit_m_per_s` must be set.
    #[serde(default)]
    pub max_match_km: Option<f64>,
    /// Alternative screen specification; converted via the frame interval.
    #[serde(default)]
    pub speed_limit_m_per_s: Option<f64>,
    /// Valid-match ratio threshold.
    #[serde(default = "defaults::r")]
    pub r: f64,
    /// Echoed into outputs; the pipeline itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    /// Range-normalize attribute and structural costs before fusing.
    #[serde(default)]
    pub normalize_costs: bool,
    /// Write per-pair coupling CSVs.
    #[serde(default)]
    pub dump_couplings: bool,
}

mod defaults {
    pub fn interval_minutes() -> f64 {
        15.0
    }
    pub fn detection_threshold() -> f64 {
        2.0
    }
    pub fn connectivity() -> u8 {
        8
    }
    pub fn min_area_px() -> u64 {
        10
    }
    pub fn zone_node_cap() -> usize {
        5000
    }
    pub fn zone_step() -> u64 {
        5
    }
    pub fn merge_radius_km() -> f64 {
        4.0
    }
    pub fn alpha() -> f64 {
        0.4
    }
    pub fn q() -> u32 {
        2
    }
    pub fn m_range() -> [f64; 2] {
        [0.6, 0.9]
    }
    pub fn m_step() -> f64 {
        0.05
    }
    pub fn r() -> f64 {
        0.1
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Named parameter bundles for the supported observation regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Marine,
    LandMorning,
    LandMidday,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "marine" => Ok(Preset::Marine),
            "land-morning" => Ok(Preset::LandMorning),
            "land-midday" => Ok(Preset::LandMidday),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected marine, land-morning, or land-midday)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Marine => "marine",
            Preset::LandMorning => "land-morning",
            Preset::LandMidday => "land-midday",
        }
    }

    /// Installs the preset's detection and matching parameters. The screen
    /// is given as a speed limit, so it adapts to the frame interval.
    pub fn apply(self, cfg: &mut RunConfig) {
        let (threshold, min_area, alpha, speed) = match self {
            Preset::Marine => (2.0, 10, 0.4, 30.0),
            Preset::LandMorning => (9.0, 0, 0.2, 40.0),
            Preset::LandMidday => (10.0, 0, 0.2, 40.0),
        };
        cfg.detection_threshold = threshold;
        cfg.min_area_px = min_area;
        cfg.alpha = alpha;
        cfg.speed_limit_m_per_s = Some(speed);
        cfg.max_match_km = None;
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            line: err.line(),
            msg: err.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.input_dir.as_os_str().is_empty() {
            return bad("input_dir is required".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is required".into());
        }
        if !(self.interval_minutes > 0.0) {
            return bad(format!("interval_minutes must be positive, got {}", self.interval_minutes));
        }
        if !(self.detection_threshold > 0.0) {
            return bad(format!(
                "detection_threshold must be positive, got {}",
                self.detection_threshold
            ));
        }
        if self.connectivity != 4 && self.connectivity != 8 {
            return bad(format!("connectivity must be 4 or 8, got {}", self.connectivity));
        }
        if self.zone_node_cap < 2 {
            return bad(format!("zone_node_cap must be at least 2, got {}", self.zone_node_cap));
        }
        if self.zone_step == 0 {
            return bad("zone_step must be positive".into());
        }
        if !(self.merge_radius_km >= 0.0) {
            return bad(format!("merge_radius_km must be nonnegative, got {}", self.merge_radius_km));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.q == 0 {
            return bad("q must be at least 1".into());
        }
        let [lo, hi] = self.m_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("m_range [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"));
        }
        if !(self.m_step > 0.0) {
            return bad(format!("m_step must be positive, got {}", self.m_step));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return bad(format!("r must lie in (0, 1], got {}", self.r));
        }
        match (self.max_match_km, self.speed_limit_m_per_s) {
            (Some(km), None) if km > 0.0 => Ok(()),
            (None, Some(speed)) if speed > 0.0 => Ok(()),
            (Some(_), Some(_)) => {
                bad("set exactly one of max_match_km and speed_limit_m_per_s, not both".into())
            }
            (None, None) => {
                bad("one of max_match_km or speed_limit_m_per_s is required".into())
            }
            _ => bad("the displacement screen must be positive".into()),
        }
    }

    /// The screen radius in km, deriving it from the speed limit when given:
    /// speed (m/s) x interval (min) x 60 (s/min) / 1000 (m/km).
    pub fn resolved_max_match_km(&self) -> f64 {
        match (self.max_match_km, self.speed_limit_m_per_s) {
            (Some(km), _) => km,
            (None, Some(speed)) => speed * self.interval_minutes * 60.0 / 1000.0,
            (None, None) => f64::NAN,
        }
    }

    pub fn connectivity_kind(&self) -> Connectivity {
        if self.connectivity == 4 {
            Connectivity::Four
        } else {
            Connectivity::Eight
        }
    }
}
