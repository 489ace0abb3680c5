//! System-level matching and trajectory assembly.
//!
//! Couplings act on anchor points; systems aggregate anchors. The matching
//! score between two systems is the total coupling mass between their anchor
//! sets. Valid links are mutual best matches or links carrying at least a
//! fraction `r` of both endpoints' score totals; a greedy area-descending
//! pass picks one-to-one main matches, and the remaining valid links become
//! merge and split events.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::measure::MeasureNetwork;
use crate::objects::CloudSystem;
use crate::pfgw::Coupling;

/// Sparse table of matching scores between the systems of two adjacent
/// frames. Zero scores are not stored; row and column totals are exact sums
/// of the stored entries in ascending index order.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    rows: usize,
    cols: usize,
    scores: BTreeMap<(usize, usize), f64>,
    row_totals: Vec<f64>,
    col_totals: Vec<f64>,
}

impl ScoreTable {
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for ((x, y), s) in entries {
            if x >= rows || y >= cols {
                return Err(Error::InvalidArgument(format!(
                    "score index ({x}, {y}) outside {rows}x{cols} table"
                )));
            }
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidArgument(format!("score ({x}, {y}) = {s} is invalid")));
            }
            if s == 0.0 {
                continue;
            }
            if scores.insert((x, y), s).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate score entry ({x}, {y})")));
            }
        }
        let mut row_totals = vec![0.0; rows];
        let mut col_totals = vec![0.0; cols];
        for (&(x, _), &s) in &scores {
            row_totals[x] += s;
        }
        // Column totals accumulate in ascending (y, x) order so they are
        // reproducible sums as well.
        let mut by_col: Vec<((usize, usize), f64)> =
            scores.iter().map(|(&(x, y), &s)| ((y, x), s)).collect();
        by_col.sort_by_key(|&(k, _)| k);
        for ((y, _), s) in by_col {
            col_totals[y] += s;
        }
        Ok(ScoreTable { rows, cols, scores, row_totals, col_totals })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn score(&self, x: usize, y: usize) -> f64 {
        self.scores.get(&(x, y)).copied().unwrap_or(0.0)
    }

    pub fn row_total(&self, x: usize) -> f64 {
        self.row_totals[x]
    }

    pub fn col_total(&self, y: usize) -> f64 {
        self.col_totals[y]
    }

    /// Stored (positive) entries in ascending (x, y) order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.scores.iter().map(|(&k, &s)| (k, s))
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }
}

/// Sums coupling mass between the anchor sets of every system pair.
pub fn compute_matching_scores(
    coupling: &Coupling,
    systems_t: &[CloudSystem],
    systems_t1: &[CloudSystem],
    net_t: &MeasureNetwork,
    net_t1: &MeasureNetwork,
) -> Result<ScoreTable> {
    if coupling.matrix.dim() != (net_t.len(), net_t1.len()) {
        return Err(Error::InvalidArgument(format!(
            "coupling shape {:?} does not match networks ({}, {})",
            coupling.matrix.dim(),
            net_t.len(),
            net_t1.len()
        )));
    }
    let index_sets = |systems: &[CloudSystem], net: &MeasureNetwork| -> Result<Vec<Vec<usize>>> {
        systems
            .iter()
            .map(|sys| {
                sys.anchors
                    .iter()
                    .map(|&a| net.index_of(a).ok_or(Error::AnchorNotInNetwork { node: a }))
                    .collect()
            })
            .collect()
    };
    let rows_of = index_sets(systems_t, net_t)?;
    let cols_of = index_sets(systems_t1, net_t1)?;

    let mut entries = Vec::new();
    for (x, rows) in rows_of.iter().enumerate() {
        for (y, cols) in cols_of.iter().enumerate() {
            let mut s = 0.0;
            for &i in rows {
                for &j in cols {
                    s += coupling.matrix[(i, j)];
                }
            }
            if s > 0.0 {
                entries.push(((x, y), s));
            }
        }
    }
    ScoreTable::from_entries(systems_t.len(), systems_t1.len(), entries)
}

pub fn system_areas(systems: &[CloudSystem]) -> Vec<u64> {
    systems.iter().map(|s| s.area_px).collect()
}

/// Best partner of each row: highest score, ties toward the larger-area
/// partner, then the lower index.
fn best_partners(
    table: &ScoreTable,
    partner_areas: &[u64],
    by_row: bool,
) -> Vec<Option<usize>> {
    let n = if by_row { table.rows } else { table.cols };
    let mut best: Vec<Option<(f64, u64, usize)>> = vec![None; n];
    for (&(x, y), &s) in &table.scores {
        let (slot, partner) = if by_row { (x, y) } else { (y, x) };
        let key = (s, partner_areas[partner], partner);
        let better = match best[slot] {
            None => true,
            Some((bs, ba, bp)) => {
                s > bs || (s == bs && (key.1 > ba || (key.1 == ba && partner < bp)))
            }
        };
        if better {
            best[slot] = Some(key);
        }
    }
    best.into_iter().map(|b| b.map(|(_, _, p)| p)).collect()
}

/// Links that are mutual best matches, or that carry at least `r` times the
/// larger of the two endpoint score totals. Returned in ascending order.
pub fn enumerate_valid_matches(
    table: &ScoreTable,
    areas_t: &[u64],
    areas_t1: &[u64],
    r: f64,
) -> Result<Vec<(usize, usize)>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio r must lie in (0, 1], got {r}")));
    }
    if areas_t.len() != table.rows || areas_t1.len() != table.cols {
        return Err(Error::InvalidArgument("area lists do not match score table shape".into()));
    }
    let best_y = best_partners(table, areas_t1, true);
    let best_x = best_partners(table, areas_t, false);
    let mut valid = Vec::new();
    for (&(x, y), &s) in &table.scores {
        let mutual = best_y[x] == Some(y) && best_x[y] == Some(x);
        let strong = s >= r * table.row_totals[x].max(table.col_totals[y]);
        if mutual || strong {
            valid.push((x, y));
        }
    }
    Ok(valid)
}

/// Greedy one-to-one matching: sources in descending area order each take
/// their largest-area valid partner still unmatched. Ties break toward the
/// lower index on both sides.
pub fn select_main_matching(
    valid: &[(usize, usize)],
    areas_t: &[u64],
    areas_t1: &[u64],
) -> BTreeMap<usize, usize> {
    let mut order: Vec<usize> = (0..areas_t.len()).collect();
    order.sort_by_key(|&x| (std::cmp::Reverse(areas_t[x]), x));
    let mut taken = vec![false; areas_t1.len()];
    let mut main = BTreeMap::new();
    for x in order {
        let pick = valid
            .iter()
            .filter(|&&(vx, vy)| vx == x && !taken[vy])
            .map(|&(_, vy)| vy)
            .max_by_key(|&vy| (areas_t1[vy], std::cmp::Reverse(vy)));
        if let Some(y) = pick {
            taken[y] = true;
            main.insert(x, y);
        }
    }
    main
}

/// Per-frame system summary carried into trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSummary {
    pub system_id: u32,
    pub area_px: u64,
    pub centroid_km: (f64, f64),
    pub mean_value: f64,
}

impl From<&CloudSystem> for SystemSummary {
    fn from(sys: &CloudSystem) -> Self {
        SystemSummary {
            system_id: sys.system_id,
            area_px: sys.area_px,
            centroid_km: sys.centroid_km,
            mean_value: sys.mean_value,
        }
    }
}

/// Valid links and the selected main matching for one adjacent frame pair.
#[derive(Debug, Clone, Default)]
pub struct TransitionLinks {
    pub valid: Vec<(usize, usize)>,
    pub main: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrajectoryKind {
    Main,
    Secondary,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryKind::Main => "main",
            TrajectoryKind::Secondary => "secondary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub time_index: usize,
    pub system_id: u32,
    pub area_px: u64,
    pub centroid_km: (f64, f64),
    pub mean_value: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: u32,
    pub kind: TrajectoryKind,
    pub entries: Vec<TrajectoryEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Birth,
    Split,
    Merge,
    Termination,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Birth => "birth",
            EventKind::Split => "split",
            EventKind::Merge => "merge",
            EventKind::Termination => "termination",
        }
    }
}

/// A tracked event. Split and merge events are stamped with the source frame
/// of their transition; `from_ids` are system ids in that frame and `to_ids`
/// system ids in the following frame. Birth and termination events carry the
/// frame where the trajectory starts or ends.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrackEvent {
    pub time_index: usize,
    pub kind: EventKind,
    pub from_ids: Vec<u32>,
    pub to_ids: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
    pub events: Vec<TrackEvent>,
}

/// Chains main matches into trajectories and derives the event list.
///
/// Every trajectory has exactly one origin record and at most one end
/// record: a plain birth event, unless the trajectory starts as a split
/// target (the split event is its origin); a termination event when it ends
/// before the last frame, unless it ends by merging (the merge event is its
/// end). Trajectories alive at the final frame get no end event.
pub fn assemble_trajectories(
    frames: &[Vec<SystemSummary>],
    transitions: &[TransitionLinks],
) -> Result<TrajectorySet> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to assemble".into()));
    }
    if transitions.len() + 1 != frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames require {} transitions, got {}",
            frames.len(),
            frames.len() - 1,
            transitions.len()
        )));
    }
    for (t, links) in transitions.iter().enumerate() {
        let (nt, nt1) = (frames[t].len(), frames[t + 1].len());
        let in_range = |&(x, y): &(usize, usize)| x < nt && y < nt1;
        if !links.valid.iter().all(in_range)
            || !links.main.iter().all(|(&x, &y)| in_range(&(x, y)))
        {
            return Err(Error::InvalidArgument(format!(
                "link index out of range at transition {t}"
            )));
        }
        let targets: BTreeSet<usize> = links.main.values().copied().collect();
        if targets.len() != links.main.len() {
            return Err(Error::InvalidArgument(format!(
                "main matching at transition {t} is not one-to-one"
            )));
        }
    }

    let last_frame = frames.len() - 1;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    // Trajectory slot of each system, per frame.
    let mut traj_of: Vec<Vec<usize>> = Vec::with_capacity(frames.len());

    let entry = |t: usize, sys: &SystemSummary| TrajectoryEntry {
        time_index: t,
        system_id: sys.system_id,
        area_px: sys.area_px,
        centroid_km: sys.centroid_km,
        mean_value: sys.mean_value,
    };
    let start = |trajectories: &mut Vec<Trajectory>, t: usize, sys: &SystemSummary| {
        let slot = trajectories.len();
        trajectories.push(Trajectory {
            id: slot as u32 + 1,
            kind: TrajectoryKind::Main,
            entries: vec![entry(t, sys)],
        });
        slot
    };

    traj_of.push(frames[0].iter().map(|sys| start(&mut trajectories, 0, sys)).collect());
    for (t, links) in transitions.iter().enumerate() {
        let mut source_of: BTreeMap<usize, usize> = BTreeMap::new();
        for (&x, &y) in &links.main {
            source_of.insert(y, x);
        }
        let mut row = Vec::with_capacity(frames[t + 1].len());
        for (y, sys) in frames[t + 1].iter().enumerate() {
            match source_of.get(&y) {
                Some(&x) => {
                    let slot = traj_of[t][x];
                    trajectories[slot].entries.push(entry(t + 1, sys));
                    row.push(slot);
                }
                None => row.push(start(&mut trajectories, t + 1, sys)),
            }
        }
        traj_of.push(row);
    }

    let mut events = Vec::new();
    // (frame, system_id) origins and ends covered by split/merge events.
    let mut split_covered: BTreeSet<(usize, u32)> = BTreeSet::new();
    let mut merge_covered: BTreeSet<(usize, u32)> = BTreeSet::new();

    for (t, links) in transitions.iter().enumerate() {
        let sys_id_t = |x: usize| frames[t][x].system_id;
        let sys_id_t1 = |y: usize| frames[t + 1][y].system_id;
        let mut split_targets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut merge_sources: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(x, y) in &links.valid {
            match links.main.get(&x) {
                Some(&main_y) if main_y == y => {}
                Some(_) => split_targets.entry(x).or_default().push(y),
                None => merge_sources.entry(y).or_default().push(x),
            }
        }
        for (x, mut extra) in split_targets {
            let main_y = links.main[&x];
            extra.push(main_y);
            extra.sort_unstable();
            extra.dedup();
            for &y in &extra {
                if Some(&x) != links.main.iter().find(|&(_, &my)| my == y).map(|(mx, _)| mx) {
                    split_covered.insert((t + 1, sys_id_t1(y)));
                }
            }
            events.push(TrackEvent {
                time_index: t,
                kind: EventKind::Split,
                from_ids: vec![sys_id_t(x)],
                to_ids: extra.iter().map(|&y| sys_id_t1(y)).collect(),
            });
        }
        for (y, mut sources) in merge_sources {
            for &x in &sources {
                merge_covered.insert((t, sys_id_t(x)));
            }
            if let Some((&main_x, _)) = links.main.iter().find(|&(_, &my)| my == y) {
                sources.push(main_x);
            }
            sources.sort_unstable();
            sources.dedup();
            events.push(TrackEvent {
                time_index: t,
                kind: EventKind::Merge,
                from_ids: sources.iter().map(|&x| sys_id_t(x)).collect(),
                to_ids: vec![sys_id_t1(y)],
            });
        }
    }

    for traj in &trajectories {
        let first = traj.entries.first().expect("trajectories are nonempty");
        if !split_covered.contains(&(first.time_index, first.system_id)) {
            events.push(TrackEvent {
                time_index: first.time_index,
                kind: EventKind::Birth,
                from_ids: Vec::new(),
                to_ids: vec![first.system_id],
            });
        }
        let last = traj.entries.last().expect("trajectories are nonempty");
        if last.time_index < last_frame
            && !merge_covered.contains(&(last.time_index, last.system_id))
        {
            events.push(TrackEvent {
                time_index: last.time_index,
                kind: EventKind::Termination,
                from_ids: vec![last.system_id],
                to_ids: Vec::new(),
            });
        }
    }
    events.sort();
    Ok(TrajectorySet { trajectories, events })
}
