//! End-to-end run orchestration: per-frame topology extraction, per-pair
//! matching, trajectory assembly, metrics, and artifact output.
//!
//! Everything is computed in memory first; files are only written once the
//! whole run has succeeded, so a failing run leaves no partial outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::{load_sequence, write_label_map, FieldSequence, ScalarField};
use crate::measure::{to_measure_network, MeasureNetwork};
use crate::merge_tree::{auto_simplify, build_merge_tree, MergeTree, NodeId, ZoneMap};
use crate::metrics::{summarize_run, StatsReport};
use crate::objects::{
    attach_anchor_points, build_cloud_systems, detect_objects, filter_small_objects,
    CloudObjectLabeling, CloudSystem,
};
use crate::pfgw::{auto_select_mass, MassSelection};
use crate::tracker::{
    assemble_trajectories, compute_matching_scores, enumerate_valid_matches,
    select_main_matching, system_areas, SystemSummary, TrajectorySet, TransitionLinks,
};

/// Everything derived from a single frame.
pub struct FrameArtifacts {
    pub time_index: usize,
    /// Zone-area threshold the automatic simplification settled on.
    pub simplify_threshold_px: u64,
    pub tree: MergeTree,
    pub zones: ZoneMap,
    pub labeling: CloudObjectLabeling,
    pub systems: Vec<CloudSystem>,
    /// Absent when the frame has no systems.
    pub network: Option<MeasureNetwork>,
}

/// Matching results for the transition `time_index -> time_index + 1`.
pub struct PairArtifacts {
    pub time_index: usize,
    /// Absent when either side of the pair has no systems.
    pub selection: Option<MassSelection>,
    pub links: TransitionLinks,
}

pub struct RunOutput {
    pub sequence: FieldSequence,
    pub frames: Vec<FrameArtifacts>,
    pub pairs: Vec<PairArtifacts>,
    pub trajectories: TrajectorySet,
    pub report: StatsReport,
}

/// Frame stage: merge tree, simplification, objects, systems, network.
pub fn process_frame(field: &ScalarField, cfg: &RunConfig) -> Result<FrameArtifacts> {
    let (tree, zones) = build_merge_tree(field)?;
    let (tree, zones, threshold) =
        auto_simplify(&tree, &zones, cfg.zone_node_cap, cfg.zone_step)?;
    let labeling = detect_objects(field, cfg.detection_threshold, cfg.connectivity_kind())?;
    let labeling = filter_small_objects(&labeling, cfg.min_area_px);
    let anchors = attach_anchor_points(&labeling, &tree)?;
    let systems = build_cloud_systems(&labeling, &anchors, cfg.merge_radius_km)?;
    let network = if systems.is_empty() {
        None
    } else {
        let union: BTreeSet<NodeId> =
            systems.iter().flat_map(|s| s.anchors.iter().copied()).collect();
        Some(to_measure_network(&tree, field.spacing_km, Some(&union))?)
    };
    Ok(FrameArtifacts {
        time_index: field.time_index,
        simplify_threshold_px: threshold,
        tree,
        zones,
        labeling,
        systems,
        network,
    })
}

/// Pair stage: mass search, matching scores, valid links, main matching.
pub fn process_pair(
    t: usize,
    a: &FrameArtifacts,
    b: &FrameArtifacts,
    cfg: &RunConfig,
) -> Result<PairArtifacts> {
    let (net_a, net_b) = match (&a.network, &b.network) {
        (Some(x), Some(y)) => (x, y),
        _ => return Ok(PairArtifacts { time_index: t, selection: None, links: TransitionLinks::default() }),
    };
    let selection = auto_select_mass(
        net_a,
        net_b,
        cfg.alpha,
        cfg.q,
        (cfg.m_range[0], cfg.m_range[1]),
        cfg.m_step,
        cfg.resolved_max_match_km(),
        cfg.normalize_costs,
    )?;
    let table =
        compute_matching_scores(&selection.result.coupling, &a.systems, &b.systems, net_a, net_b)?;
    let areas_a = system_areas(&a.systems);
    let areas_b = system_areas(&b.systems);
    let valid = enumerate_valid_matches(&table, &areas_a, &areas_b, cfg.r)?;
    let main = select_main_matching(&valid, &areas_a, &areas_b);
    Ok(PairArtifacts { time_index: t, selection: Some(selection), links: TransitionLinks { valid, main } })
}

/// Runs the full computation over an already loaded sequence.
pub fn compute(sequence: FieldSequence, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let frame_results: Vec<Result<FrameArtifacts>> = sequence
        .frames
        .par_iter()
        .map(|f| process_frame(f, cfg).map_err(|e| e.context(format!("frame {}", f.time_index))))
        .collect();
    // Sequential unwrap keeps the reported error (the first) deterministic.
    let frames: Vec<FrameArtifacts> = frame_results.into_iter().collect::<Result<_>>()?;

    let pair_results: Vec<Result<PairArtifacts>> = (0..frames.len().saturating_sub(1))
        .into_par_iter()
        .map(|t| {
            process_pair(t, &frames[t], &frames[t + 1], cfg)
                .map_err(|e| e.context(format!("frame pair {t} -> {}", t + 1)))
        })
        .collect();
    let pairs: Vec<PairArtifacts> = pair_results.into_iter().collect::<Result<_>>()?;

    let summaries: Vec<Vec<SystemSummary>> = frames
        .iter()
        .map(|f| f.systems.iter().map(SystemSummary::from).collect())
        .collect();
    let links: Vec<TransitionLinks> = pairs.iter().map(|p| p.links.clone()).collect();
    let trajectories = assemble_trajectories(&summaries, &links)?;
    let report = summarize_run(&trajectories, sequence.interval_minutes);
    Ok(RunOutput { sequence, frames, pairs, trajectories, report })
}

/// Loads the input directory and runs the computation.
pub fn run_in_memory(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let sequence = load_sequence(&cfg.input_dir, cfg.interval_minutes)?;
    compute(sequence, cfg)
}

/// Full run: compute on a worker pool of `jobs` threads (rayon default when
/// absent), then write all artifacts.
pub fn run_pipeline(cfg: &RunConfig, jobs: Option<usize>) -> Result<RunOutput> {
    let output = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(|| run_in_memory(cfg)),
        None => run_in_memory(cfg),
    }?;
    write_outputs(&output, cfg)?;
    Ok(output)
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| Error::Io { path, source })
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes every artifact of a completed run into `cfg.output_dir`.
pub fn write_outputs(output: &RunOutput, cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;

    let mut trajectories = String::from(
        "trajectory_id,kind,time_index,system_id,centroid_x_km,centroid_y_km,area_px,mean_value\n",
    );
    for traj in &output.trajectories.trajectories {
        for e in &traj.entries {
            writeln!(
                trajectories,
                "{},{},{},{},{},{},{},{}",
                traj.id,
                traj.kind.as_str(),
                e.time_index,
                e.system_id,
                e.centroid_km.0,
                e.centroid_km.1,
                e.area_px,
                e.mean_value
            )
            .expect("string write");
        }
    }
    write_text(dir, "trajectories.csv", &trajectories)?;

    let mut events = String::from("time_index,kind,from_ids,to_ids\n");
    for e in &output.trajectories.events {
        writeln!(
            events,
            "{},{},{},{}",
            e.time_index,
            e.kind.as_str(),
            join_ids(&e.from_ids),
            join_ids(&e.to_ids)
        )
        .expect("string write");
    }
    write_text(dir, "events.csv", &events)?;

    let mut per_traj = String::from(
        "trajectory_id,kind,entry_count,timespan_minutes,sd_mean_value,linearity_loss_km\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in &output.report.per_trajectory {
        writeln!(
            per_traj,
            "{},{},{},{},{},{}",
            m.trajectory_id,
            m.kind,
            m.entry_count,
            m.timespan_minutes,
            opt(m.sd_mean_value),
            opt(m.linearity_loss_km)
        )
        .expect("string write");
    }
    write_text(dir, "per_trajectory.csv", &per_traj)?;

    let mut histogram =
        String::from("low_timesteps,high_timesteps,low_minutes,high_minutes,count\n");
    for b in &output.report.timespan_histogram {
        writeln!(
            histogram,
            "{},{},{},{},{}",
            b.low_timesteps, b.high_timesteps, b.low_minutes, b.high_minutes, b.count
        )
        .expect("string write");
    }
    write_text(dir, "timespan_histogram.csv", &histogram)?;

    let mut objects = String::from(
        "time_index,label,system_id,area_px,centroid_x_km,centroid_y_km,mean_value\n",
    );
    for frame in &output.frames {
        let mut system_of: BTreeMap<u32, u32> = BTreeMap::new();
        for sys in &frame.systems {
            for &label in &sys.member_labels {
                system_of.insert(label, sys.system_id);
            }
        }
        for obj in &frame.labeling.objects {
            writeln!(
                objects,
                "{},{},{},{},{},{},{}",
                frame.time_index,
                obj.label,
                system_of.get(&obj.label).copied().unwrap_or(0),
                obj.area_px,
                obj.centroid_km.0,
                obj.centroid_km.1,
                obj.mean_value
            )
            .expect("string write");
        }
    }
    write_text(dir, "objects.csv", &objects)?;

    #[derive(Serialize)]
    struct StatsDocument<'a> {
        config: &'a RunConfig,
        #[serde(flatten)]
        report: &'a StatsReport,
    }
    let stats = serde_json::to_string_pretty(&StatsDocument {
        config: cfg,
        report: &output.report,
    })
    .map_err(|e| Error::InvalidArgument(format!("stats serialization failed: {e}")))?;
    write_text(dir, "stats.json", &(stats + "\n"))?;

    let echo = serde_json::to_string_pretty(cfg)
        .map_err(|e| Error::InvalidArgument(format!("config serialization failed: {e}")))?;
    write_text(dir, "config.json", &(echo + "\n"))?;

    for frame in &output.frames {
        let labeling = &frame.labeling;
        write_label_map(
            &labeling.labels,
            labeling.width,
            labeling.height,
            &dir.join(format!("objects_{:04}.pgm", frame.time_index)),
        )?;
        let mut system_of: BTreeMap<u32, u32> = BTreeMap::new();
        for sys in &frame.systems {
            for &label in &sys.member_labels {
                system_of.insert(label, sys.system_id);
            }
        }
        let system_grid: Vec<u32> = labeling
            .labels
            .iter()
            .map(|&l| if l == 0 { 0 } else { system_of.get(&l).copied().unwrap_or(0) })
            .collect();
        write_label_map(
            &system_grid,
            labeling.width,
            labeling.height,
            &dir.join(format!("systems_{:04}.pgm", frame.time_index)),
        )?;
    }

    if cfg.dump_couplings {
        let mut couplings = String::from("t,node_id_t,node_id_t1,mass\n");
        for pair in &output.pairs {
            let Some(selection) = &pair.selection else { continue };
            let (Some(net_a), Some(net_b)) = (
                &output.frames[pair.time_index].network,
                &output.frames[pair.time_index + 1].network,
            ) else {
                continue;
            };
            for ((i, j), &mass) in selection.result.coupling.matrix.indexed_iter() {
                if mass > 0.0 {
                    writeln!(
                        couplings,
                        "{},{},{},{}",
                        pair.time_index, net_a.node_ids[i], net_b.node_ids[j], mass
                    )
                    .expect("string write");
                }
            }
        }
        write_text(dir, "couplings.csv", &couplings)?;
    }
    Ok(())
}
