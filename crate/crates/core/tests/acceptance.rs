//! Acceptance suite: one test per release criterion, each ending in a single
//! pass line. Oracles live in `common` and are independent reimplementations.

mod common;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topotrack::config::RunConfig;
use topotrack::field::{generate_synthetic, BlobSpec, SyntheticSpec};
use topotrack::measure::{all_nodes_measure_network, MeasureNetwork};
use topotrack::merge_tree::{build_merge_tree, MergeTree, NodeId, NodeKind};
use topotrack::metrics::{population_sd, tls_rmse_km};
use topotrack::objects::CloudSystem;
use topotrack::pfgw::{solve_pfgw, solve_pfgw_from};
use topotrack::pipeline::{compute, run_pipeline, RunOutput};
use topotrack::tracker::{
    assemble_trajectories, compute_matching_scores, enumerate_valid_matches,
    select_main_matching, system_areas, EventKind, SystemSummary, TrajectoryKind,
    TransitionLinks,
};

/// Ten-node reference tree: five maxima (`ids` 2, 4, 6, 7, 9), four saddles,
/// one root. The subtree under the saddle at id 8 (with the maximum at id 9)
/// is the branch absent from the eight-node counterpart.
fn reference_tree_large() -> MergeTree {
    use NodeKind::{Maximum, Root, Saddle};
    MergeTree::from_parts(&[
        (Root, 0.0, (1, 0), None),
        (Saddle, 1.0, (2, 0), Some(0)),
        (Maximum, 10.0, (3, 0), Some(1)),
        (Saddle, 2.0, (4, 0), Some(1)),
        (Maximum, 9.0, (5, 0), Some(3)),
        (Saddle, 3.0, (6, 0), Some(3)),
        (Maximum, 8.0, (7, 0), Some(8)),
        (Maximum, 7.0, (8, 0), Some(5)),
        (Saddle, 4.0, (20, 0), Some(5)),
        (Maximum, 5.0, (21, 0), Some(8)),
    ])
    .unwrap()
}

/// The same tree with the extra branch removed: the maximum at id 6 hangs
/// directly off the saddle at id 5.
fn reference_tree_small() -> MergeTree {
    use NodeKind::{Maximum, Root, Saddle};
    MergeTree::from_parts(&[
        (Root, 0.0, (1, 0), None),
        (Saddle, 1.0, (2, 0), Some(0)),
        (Maximum, 10.0, (3, 0), Some(1)),
        (Saddle, 2.0, (4, 0), Some(1)),
        (Maximum, 9.0, (5, 0), Some(3)),
        (Saddle, 3.0, (6, 0), Some(3)),
        (Maximum, 8.0, (7, 0), Some(5)),
        (Maximum, 7.0, (8, 0), Some(5)),
    ])
    .unwrap()
}

#[test]
fn criterion_1_reference_coupling_is_diagonal() {
    let started = Instant::now();
    let net1 = all_nodes_measure_network(&reference_tree_large(), (1.0, 1.0)).unwrap();
    let net2 = all_nodes_measure_network(&reference_tree_small(), (1.0, 1.0)).unwrap();
    assert_eq!(net1.len(), 10);
    assert_eq!(net2.len(), 8);

    let result = solve_pfgw(&net1, &net2, 0.4, 0.8, 2).unwrap();
    let c = &result.coupling.matrix;
    for i in 0..8 {
        assert!(
            (c[(i, i)] - 0.1).abs() <= 1e-6,
            "diagonal entry {i} is {}, expected 0.1",
            c[(i, i)]
        );
        for j in 0..8 {
            if j != i {
                assert!(
                    c[(i, j)].abs() <= 1e-6,
                    "off-diagonal mass at ({i}, {j}): {}",
                    c[(i, j)]
                );
            }
        }
    }
    for i in 8..10 {
        for j in 0..8 {
            assert_eq!(c[(i, j)], 0.0, "row {i} must be identically zero");
        }
    }
    assert!(
        (result.coupling.mass - 0.8).abs() <= 1e-9,
        "total mass {}",
        result.coupling.mass
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("criterion 1 (reference coupling, m = 0.8): PASS");
}

fn forked_coupling() -> topotrack::pfgw::Coupling {
    let mut c = Array2::zeros((1, 4));
    // Two-term sums reproduce 0.27 and 0.32 bit-exactly: each difference is
    // a Sterbenz subtraction, hence exact.
    c[(0, 0)] = 0.15;
    c[(0, 1)] = 0.27 - 0.15;
    c[(0, 2)] = 0.17;
    c[(0, 3)] = 0.32 - 0.17;
    let mass = c.sum();
    topotrack::pfgw::Coupling { matrix: c, mass }
}

fn anchor_net(node_ids: Vec<u32>) -> MeasureNetwork {
    let n = node_ids.len();
    MeasureNetwork {
        node_ids,
        masses: vec![1.0 / n as f64; n],
        distances: Array2::zeros((n, n)),
        attributes: vec![(0.0, 0.0); n],
    }
}

fn system(id: u32, anchors: &[NodeId], area: u64) -> CloudSystem {
    CloudSystem {
        system_id: id,
        member_labels: std::iter::once(id).collect(),
        anchors: anchors.iter().copied().collect(),
        area_px: area,
        centroid_km: (0.0, 0.0),
        mean_value: 1.0,
    }
}

#[test]
fn criterion_2_fork_scores_validity_and_split() {
    let net_t = anchor_net(vec![0]);
    let net_t1 = anchor_net(vec![0, 1, 2, 3]);
    let x = system(1, &[0], 30);
    let y = system(2, &[0, 1], 10);
    let z = system(3, &[2, 3], 20);
    let systems_t = vec![x];
    let systems_t1 = vec![y, z];

    let table =
        compute_matching_scores(&forked_coupling(), &systems_t, &systems_t1, &net_t, &net_t1)
            .unwrap();
    let s_xy = table.score(0, 0);
    let s_xz = table.score(0, 1);
    assert_eq!(s_xy.to_bits(), 0.27f64.to_bits(), "S(X, Y) must equal 0.27 exactly");
    assert_eq!(s_xz.to_bits(), 0.32f64.to_bits(), "S(X, Z) must equal 0.32 exactly");

    let areas_t = system_areas(&systems_t);
    let areas_t1 = system_areas(&systems_t1);
    let valid = enumerate_valid_matches(&table, &areas_t, &areas_t1, 0.1).unwrap();
    assert_eq!(valid, vec![(0, 0), (0, 1)], "both links must be valid at r = 0.1");

    let main = select_main_matching(&valid, &areas_t, &areas_t1);
    assert_eq!(main.get(&0), Some(&1), "main match must take the larger area");

    let frames = vec![
        systems_t.iter().map(SystemSummary::from).collect::<Vec<_>>(),
        systems_t1.iter().map(SystemSummary::from).collect::<Vec<_>>(),
    ];
    let transitions = vec![TransitionLinks { valid, main }];
    let set = assemble_trajectories(&frames, &transitions).unwrap();
    let splits: Vec<_> = set.events.iter().filter(|e| e.kind == EventKind::Split).collect();
    assert_eq!(splits.len(), 1);
    assert_eq!(splits[0].time_index, 0);
    assert_eq!(splits[0].from_ids, vec![1]);
    assert_eq!(splits[0].to_ids, vec![2, 3]);
    println!("criterion 2 (fork scores 0.27/0.32, split event): PASS");
}

#[test]
fn criterion_3_merge_tree_matches_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..200 {
        // Half the grids use six discrete levels to provoke plateaus and
        // tie-breaks; the rest draw continuous values.
        let f = if case % 2 == 0 {
            common::random_field(&mut rng, 16, 16, 6)
        } else {
            let mut f = common::random_field(&mut rng, 16, 16, 2);
            f.values = (0..256).map(|_| rng.random_range(0.0..100.0)).collect();
            f
        };
        let (tree, _) = build_merge_tree(&f).unwrap();

        let mut crossings = f.values.clone();
        crossings.sort_by(f64::total_cmp);
        crossings.dedup();
        for &v in &crossings {
            assert_eq!(
                tree.component_count_at(v),
                common::flood_fill_count(&f, v),
                "component count mismatch at v = {v} (case {case})"
            );
        }

        let mut leaf_pixels: Vec<usize> = tree
            .leaves()
            .iter()
            .map(|&l| {
                let (c, r) = tree.node(l).pixel;
                r as usize * 16 + c as usize
            })
            .collect();
        leaf_pixels.sort_unstable();
        assert_eq!(leaf_pixels, common::local_max_scan(&f), "leaf mismatch (case {case})");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!("criterion 3 (200 grids vs flood fill and local-max scan): PASS");
}

#[test]
fn criterion_4_feasibility_and_monotone_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let n1 = rng.random_range(2..=30);
        let n2 = rng.random_range(2..=30);
        let net1 = common::random_network(&mut rng, n1, 100.0);
        let net2 = common::random_network(&mut rng, n2, 100.0);
        let alpha = rng.random_range(0.0..=1.0);
        let m = rng.random_range(0.05..=1.0);

        let result = solve_pfgw(&net1, &net2, alpha, m, 2).unwrap();
        let c = &result.coupling.matrix;
        for x in c.iter() {
            assert!(*x >= 0.0, "negative coupling entry {x} (case {case})");
        }
        for (i, row) in c.rows().into_iter().enumerate() {
            assert!(
                row.sum() <= net1.masses[i] + 1e-9,
                "row {i} exceeds its cap (case {case})"
            );
        }
        for (j, col) in c.columns().into_iter().enumerate() {
            assert!(
                col.sum() <= net2.masses[j] + 1e-9,
                "column {j} exceeds its cap (case {case})"
            );
        }
        assert!(
            (c.sum() - m).abs() <= 1e-9,
            "total mass {} vs requested {m} (case {case})",
            c.sum()
        );
        for w in result.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "objective increased {} -> {} (case {case})",
                w[0],
                w[1]
            );
        }
    }
    println!("criterion 4 (100 couplings feasible, descent monotone): PASS");
}

#[test]
fn criterion_5_self_distance_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let n = rng.random_range(1..=20);
        let net = common::random_network(&mut rng, n, 100.0);
        let alpha = rng.random_range(0.0..=1.0);
        let identity = Array2::from_diag(&ndarray::Array1::from(net.masses.clone()));
        let result = solve_pfgw_from(&net, &net, alpha, 1.0, 2, Some(&identity)).unwrap();
        assert!(
            result.distance_q <= 1e-6,
            "self distance {} (case {case}, n = {n}, alpha = {alpha})",
            result.distance_q
        );
    }
    println!("criterion 5 (50 self-matches at m = 1): PASS");
}

#[test]
fn criterion_6_alpha_zero_equals_linear_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..50 {
        let n1 = rng.random_range(1..=10);
        let n2 = rng.random_range(1..=10);
        let net1 = common::random_network(&mut rng, n1, 50.0);
        let net2 = common::random_network(&mut rng, n2, 50.0);
        let m = rng.random_range(0.1..=1.0);

        let result = solve_pfgw(&net1, &net2, 0.0, m, 2).unwrap();

        // Squared Euclidean attribute costs, mirroring the solver's q = 2
        // fast path.
        let mut cost = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let (x1, y1) = net1.attributes[i];
                let (x2, y2) = net2.attributes[j];
                cost[(i, j)] = (x1 - x2) * (x1 - x2) + (y1 - y2) * (y1 - y2);
            }
        }
        let oracle = common::partial_ot_optimum(&cost, &net1.masses, &net2.masses, m);
        assert!(
            (result.distance_q - oracle).abs() <= 1e-9,
            "solver {} vs oracle {} (case {case})",
            result.distance_q,
            oracle
        );
    }
    println!("criterion 6 (alpha = 0 matches exact linear transport): PASS");
}

fn motion_config() -> RunConfig {
    let cfg = RunConfig {
        input_dir: "unused".into(),
        output_dir: "unused".into(),
        max_match_km: Some(27.0),
        ..RunConfig::default()
    };
    cfg.validate().unwrap();
    cfg
}

fn translating_spec() -> SyntheticSpec {
    SyntheticSpec {
        width_px: 64,
        height_px: 64,
        spacing_km: [1.0, 1.0],
        frames: 20,
        interval_minutes: 15.0,
        blobs: vec![BlobSpec {
            amplitude: 8.0,
            width_km: 3.0,
            centers: (0..20).map(|t| [10.0 + 2.0 * t as f64, 32.0]).collect(),
        }],
    }
}

/// Two equal blobs share a center for ten frames, then move apart at
/// 2 px/frame each; the superlevel set pinches off once the midpoint drops
/// below the detection threshold.
fn splitting_spec() -> SyntheticSpec {
    let center = |t: usize, sign: f64| {
        let offset = 2.0 * t.saturating_sub(9) as f64;
        [32.0 + sign * offset, 32.0]
    };
    SyntheticSpec {
        width_px: 64,
        height_px: 64,
        spacing_km: [1.0, 1.0],
        frames: 20,
        interval_minutes: 15.0,
        blobs: vec![
            BlobSpec {
                amplitude: 8.0,
                width_km: 3.0,
                centers: (0..20).map(|t| center(t, -1.0)).collect(),
            },
            BlobSpec {
                amplitude: 8.0,
                width_km: 3.0,
                centers: (0..20).map(|t| center(t, 1.0)).collect(),
            },
        ],
    }
}

fn run_scenario(spec: &SyntheticSpec) -> RunOutput {
    let seq = generate_synthetic(spec).unwrap();
    compute(seq, &motion_config()).unwrap()
}

#[test]
fn criterion_7_synthetic_motion_end_to_end() {
    let started = Instant::now();

    let out = run_scenario(&translating_spec());
    assert_eq!(out.trajectories.trajectories.len(), 1, "expected a single trajectory");
    let traj = &out.trajectories.trajectories[0];
    assert_eq!(traj.kind, TrajectoryKind::Main);
    assert_eq!(traj.entries.len(), 20, "trajectory must cover all frames");
    let centroids: Vec<(f64, f64)> = traj.entries.iter().map(|e| e.centroid_km).collect();
    let linearity = tls_rmse_km(&centroids);
    assert!(linearity < 0.1, "linearity loss {linearity} km");
    let timespan = out.report.per_trajectory[0].timespan_minutes;
    assert_eq!(timespan, 20.0 * 15.0, "timespan must be 20 steps");

    let out = run_scenario(&splitting_spec());
    // Ground truth from the detection stage alone: the first frame that
    // resolves two systems.
    let first_two = out
        .frames
        .iter()
        .position(|f| f.systems.len() == 2)
        .expect("the blobs must eventually separate");
    assert!(first_two > 0 && first_two < 19, "separation inside the run, got {first_two}");
    assert!(
        out.frames.iter().skip(first_two).all(|f| f.systems.len() == 2),
        "systems must stay separated"
    );
    let splits: Vec<_> =
        out.trajectories.events.iter().filter(|e| e.kind == EventKind::Split).collect();
    assert_eq!(splits.len(), 1, "expected exactly one split event");
    assert_eq!(
        splits[0].time_index,
        first_two - 1,
        "split must be stamped with the source frame"
    );
    assert_eq!(splits[0].to_ids.len(), 2);
    let alive_after: Vec<_> = out
        .trajectories
        .trajectories
        .iter()
        .filter(|t| {
            t.kind == TrajectoryKind::Main
                && t.entries.last().unwrap().time_index == 19
                && t.entries.first().unwrap().time_index <= first_two
        })
        .collect();
    assert_eq!(alive_after.len(), 2, "two main trajectories must persist after the split");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!("criterion 7 (translation and split scenarios end to end): PASS");
}

#[test]
fn criterion_8_metric_closed_forms_and_filters() {
    let linearity = tls_rmse_km(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
    assert!(
        (linearity - (2.0f64 / 9.0).sqrt()).abs() <= 1e-9,
        "triangle linearity {linearity}"
    );
    let sd = population_sd(&[1.0, 2.0, 3.0]);
    assert!((sd - (2.0f64 / 3.0).sqrt()).abs() <= 1e-12, "population sd {sd}");

    // A 2-entry trajectory fails the entry filter; the 5-entry trajectory
    // sits exactly at the run median, which the strict comparison rejects;
    // only the 9-entry one clears both filters.
    let mk = |id: u32, n: usize| topotrack::tracker::Trajectory {
        id,
        kind: TrajectoryKind::Main,
        entries: (0..n)
            .map(|t| topotrack::tracker::TrajectoryEntry {
                time_index: t,
                system_id: 1,
                area_px: 10,
                centroid_km: (t as f64, 0.5 * t as f64),
                mean_value: 2.0 + t as f64,
            })
            .collect(),
    };
    let set = topotrack::tracker::TrajectorySet {
        trajectories: vec![mk(1, 2), mk(2, 5), mk(3, 9)],
        events: Vec::new(),
    };
    let report = topotrack::metrics::summarize_run(&set, 15.0);
    let records = &report.per_trajectory;
    assert_eq!(records.len(), 3);
    assert!(records[0].sd_mean_value.is_none() && records[0].linearity_loss_km.is_none());
    assert!(records[1].sd_mean_value.is_none() && records[1].linearity_loss_km.is_none());
    assert!(records[2].sd_mean_value.is_some() && records[2].linearity_loss_km.is_some());
    assert_eq!(report.sd_mean_value.count, 1);
    assert_eq!(report.linearity_loss_km.count, 1);
    println!("criterion 8 (closed-form metrics, filters as absence): PASS");
}

#[test]
fn criterion_9_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frames");
    let output = dir.path().join("out");
    let seq = generate_synthetic(&splitting_spec()).unwrap();
    topotrack::field::write_sequence(&seq, &input).unwrap();

    let cfg = RunConfig {
        input_dir: input,
        output_dir: output.clone(),
        max_match_km: Some(27.0),
        dump_couplings: true,
        ..RunConfig::default()
    };
    cfg.validate().unwrap();

    run_pipeline(&cfg, Some(2)).unwrap();
    let trajectories = std::fs::read(output.join("trajectories.csv")).unwrap();
    let stats = std::fs::read(output.join("stats.json")).unwrap();

    run_pipeline(&cfg, Some(1)).unwrap();
    assert_eq!(
        trajectories,
        std::fs::read(output.join("trajectories.csv")).unwrap(),
        "trajectories.csv changed between reruns"
    );
    assert_eq!(
        stats,
        std::fs::read(output.join("stats.json")).unwrap(),
        "stats.json changed between reruns"
    );
    println!("criterion 9 (byte-identical reruns): PASS");
}
