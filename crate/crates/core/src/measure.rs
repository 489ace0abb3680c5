//! Measure networks: tree nodes as weighted points with pairwise structural
//! distances and planar attributes, the inputs to partial transport matching.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::merge_tree::{MergeTree, NodeId, NodeKind};

/// Weighted point set over tree nodes. `masses` sums to 1; `distances[i][j]`
/// is the tree distance between nodes `node_ids[i]` and `node_ids[j]`;
/// `attributes[i]` is the node's location in km.
#[derive(Debug, Clone)]
pub struct MeasureNetwork {
    pub node_ids: Vec<NodeId>,
    pub masses: Vec<f64>,
    pub distances: Array2<f64>,
    pub attributes: Vec<(f64, f64)>,
}

impl MeasureNetwork {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn index_of(&self, node: NodeId) -> Option<usize> {
        self.node_ids.binary_search(&node).ok()
    }
}

fn check_live(tree: &MergeTree, id: NodeId) -> Result<()> {
    if (id as usize) < tree.nodes.len() && tree.node(id).alive {
        Ok(())
    } else {
        Err(Error::UnknownNode(id))
    }
}

fn depth(tree: &MergeTree, mut id: NodeId) -> usize {
    let mut d = 0;
    while let Some(p) = tree.node(id).parent {
        id = p;
        d += 1;
    }
    d
}

/// Sum of absolute value changes along the unique tree path between `u` and
/// `v`. Both legs descend monotonically to the lowest common ancestor, so the
/// sum telescopes to `(f(u) - f(lca)) + (f(v) - f(lca))`.
pub fn tree_distance(tree: &MergeTree, u: NodeId, v: NodeId) -> Result<f64> {
    check_live(tree, u)?;
    check_live(tree, v)?;
    if u == v {
        return Ok(0.0);
    }
    let (mut a, mut b) = (u, v);
    let (mut da, mut db) = (depth(tree, a), depth(tree, b));
    while da > db {
        a = tree.node(a).parent.unwrap();
        da -= 1;
    }
    while db > da {
        b = tree.node(b).parent.unwrap();
        db -= 1;
    }
    while a != b {
        a = tree.node(a).parent.unwrap();
        b = tree.node(b).parent.unwrap();
    }
    let lca = tree.node(a).value;
    Ok((tree.node(u).value - lca) + (tree.node(v).value - lca))
}

fn network_from_nodes(
    tree: &MergeTree,
    spacing_km: (f64, f64),
    ids: Vec<NodeId>,
) -> Result<MeasureNetwork> {
    let n = ids.len();
    if n == 0 {
        return Err(Error::InvalidArgument("measure network needs at least one node".into()));
    }
    let mut masses = vec![1.0 / n as f64; n];
    if n > 1 {
        let partial: f64 = masses[..n - 1].iter().sum();
        // Exact complement keeps the total at 1 despite rounding in 1/n.
        masses[n - 1] = 1.0 - partial;
    } else {
        masses[0] = 1.0;
    }
    let mut distances = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = tree_distance(tree, ids[i], ids[j])?;
            distances[(i, j)] = d;
            distances[(j, i)] = d;
        }
    }
    let attributes = ids
        .iter()
        .map(|&id| {
            let (col, row) = tree.node(id).pixel;
            (col as f64 * spacing_km.0, row as f64 * spacing_km.1)
        })
        .collect();
    Ok(MeasureNetwork { node_ids: ids, masses, distances, attributes })
}

/// Builds the network over the tree's live maxima, optionally restricted to
/// an anchor subset. Saddles and the root carry no mass and are represented
/// only through the path distances.
pub fn to_measure_network(
    tree: &MergeTree,
    spacing_km: (f64, f64),
    filter: Option<&BTreeSet<NodeId>>,
) -> Result<MeasureNetwork> {
    let ids = match filter {
        None => tree.maxima(),
        Some(keep) => {
            for &id in keep {
                check_live(tree, id)?;
                if tree.node(id).kind != NodeKind::Maximum {
                    return Err(Error::InvalidArgument(format!(
                        "filter node {id} is not a maximum"
                    )));
                }
            }
            tree.maxima().into_iter().filter(|id| keep.contains(id)).collect()
        }
    };
    network_from_nodes(tree, spacing_km, ids)
}

/// Uniform mass over every live node, maxima and saddles alike. Only useful
/// for small didactic trees where saddle correspondence matters.
pub fn all_nodes_measure_network(
    tree: &MergeTree,
    spacing_km: (f64, f64),
) -> Result<MeasureNetwork> {
    let ids: Vec<NodeId> = tree.live_nodes().map(|n| n.id).collect();
    network_from_nodes(tree, spacing_km, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::merge_tree::build_merge_tree;
    use proptest::prelude::*;
    use std::collections::BinaryHeap;

    fn field_from(width: usize, height: usize, values: &[f64]) -> ScalarField {
        let mut f = ScalarField::new(width, height, (1.0, 1.0)).unwrap();
        f.values = values.to_vec();
        f
    }

    #[test]
    fn chain_distances_telescope() {
        let f = field_from(6, 1, &[1.0, 6.0, 3.0, 5.0, 2.0, 4.0]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let id_of = |v: f64| tree.live_nodes().find(|n| n.value == v).unwrap().id;
        // Peaks 6 and 5 meet at 3: (6-3) + (5-3) = 5.
        assert_eq!(tree_distance(&tree, id_of(6.0), id_of(5.0)).unwrap(), 5.0);
        // Peaks 6 and 4 meet at 2: (6-2) + (4-2) = 6.
        assert_eq!(tree_distance(&tree, id_of(6.0), id_of(4.0)).unwrap(), 6.0);
        // Adjacent nodes differ by |delta f|.
        assert_eq!(tree_distance(&tree, id_of(6.0), id_of(3.0)).unwrap(), 3.0);
        assert_eq!(tree_distance(&tree, id_of(3.0), id_of(2.0)).unwrap(), 1.0);
        assert_eq!(tree_distance(&tree, id_of(6.0), id_of(6.0)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_dead_or_unknown_nodes() {
        let f = field_from(3, 1, &[2.0, 1.0, 0.5]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        assert!(matches!(tree_distance(&tree, 0, 99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn maxima_network_masses_and_attributes() {
        let f = field_from(6, 1, &[1.0, 6.0, 3.0, 5.0, 2.0, 4.0]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let net = to_measure_network(&tree, (2.0, 1.0), None).unwrap();
        assert_eq!(net.len(), 3);
        assert_eq!(net.masses.iter().sum::<f64>(), 1.0);
        for &m in &net.masses {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        // Attribute = pixel location in km.
        assert_eq!(net.attributes[0], (2.0, 0.0));
        assert!(net.distances[(0, 0)] == 0.0);
        assert_eq!(net.distances[(0, 1)], net.distances[(1, 0)]);
    }

    #[test]
    fn all_nodes_network_covers_saddles_and_root() {
        let f = field_from(6, 1, &[1.0, 6.0, 3.0, 5.0, 2.0, 4.0]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let net = all_nodes_measure_network(&tree, (1.0, 1.0)).unwrap();
        assert_eq!(net.len(), 6);
        assert_eq!(net.masses.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn filter_restricts_and_validates() {
        let f = field_from(6, 1, &[1.0, 6.0, 3.0, 5.0, 2.0, 4.0]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let maxima = tree.maxima();
        let keep: BTreeSet<NodeId> = maxima.iter().take(2).copied().collect();
        let net = to_measure_network(&tree, (1.0, 1.0), Some(&keep)).unwrap();
        assert_eq!(net.len(), 2);
        assert_eq!(net.masses, vec![0.5, 0.5]);

        let bogus: BTreeSet<NodeId> = BTreeSet::from([tree.root]);
        assert!(to_measure_network(&tree, (1.0, 1.0), Some(&bogus)).is_err());
        let unknown: BTreeSet<NodeId> = BTreeSet::from([999]);
        assert!(matches!(
            to_measure_network(&tree, (1.0, 1.0), Some(&unknown)),
            Err(Error::UnknownNode(999))
        ));
    }

    #[test]
    fn empty_network_is_an_error() {
        let f = field_from(3, 1, &[2.0, 1.0, 0.5]);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let empty: BTreeSet<NodeId> = BTreeSet::new();
        assert!(to_measure_network(&tree, (1.0, 1.0), Some(&empty)).is_err());
    }

    #[test]
    fn peaks_in_one_bump_are_closer_than_across_bumps() {
        // Bump A: two peaks split by a high saddle. Bump B: far away, joined
        // to A only through a deep valley.
        let mut v = vec![0.5; 20];
        v[1] = 9.0;
        v[2] = 8.0; // saddle between 9 and 8.5 once 8.5 appears
        v[3] = 8.5;
        v[15] = 7.0;
        let f = field_from(20, 1, &v);
        let (tree, _) = build_merge_tree(&f).unwrap();
        let id_of = |val: f64| tree.live_nodes().find(|n| n.value == val).unwrap().id;
        let (a1, a2, b) = (id_of(9.0), id_of(8.5), id_of(7.0));
        let within = tree_distance(&tree, a1, a2).unwrap();
        assert!(within < tree_distance(&tree, a1, b).unwrap());
        assert!(within < tree_distance(&tree, a2, b).unwrap());
    }

    /// Dijkstra over the live tree edges with |delta f| weights.
    fn dijkstra_distance(tree: &MergeTree, src: NodeId, dst: NodeId) -> f64 {
        let n = tree.nodes.len();
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for node in tree.live_nodes() {
            if let Some(p) = node.parent {
                let w = (node.value - tree.node(p).value).abs();
                adj[node.id as usize].push((p, w));
                adj[p as usize].push((node.id, w));
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        dist[src as usize] = 0.0;
        let mut heap: BinaryHeap<(std::cmp::Reverse<u64>, u32)> = BinaryHeap::new();
        heap.push((std::cmp::Reverse(0), src));
        while let Some((std::cmp::Reverse(dbits), u)) = heap.pop() {
            let d = f64::from_bits(dbits);
            if d > dist[u as usize] {
                continue;
            }
            if u == dst {
                break;
            }
            for &(v, w) in &adj[u as usize] {
                let nd = d + w;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    // Nonnegative floats order identically to their bits.
                    heap.push((std::cmp::Reverse(nd.to_bits()), v));
                }
            }
        }
        dist[dst as usize]
    }

    fn random_field(seed: u64, width: usize, height: usize) -> ScalarField {
        let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).max(3);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let values: Vec<f64> = (0..width * height).map(|_| (next() % 97) as f64 / 7.0).collect();
        field_from(width, height, &values)
    }

    proptest! {
        #[test]
        fn distances_match_dijkstra(seed in 0u64..120) {
            let f = random_field(seed, 9, 7);
            let (tree, _) = build_merge_tree(&f).unwrap();
            let net = to_measure_network(&tree, (1.0, 1.0), None).unwrap();
            for i in 0..net.len() {
                for j in 0..net.len() {
                    let oracle = dijkstra_distance(&tree, net.node_ids[i], net.node_ids[j]);
                    prop_assert!((net.distances[(i, j)] - oracle).abs() <= 1e-9 * (1.0 + oracle));
                }
            }
        }

        #[test]
        fn four_point_condition_holds(seed in 200u64..280) {
            let f = random_field(seed, 8, 6);
            let (tree, _) = build_merge_tree(&f).unwrap();
            let net = all_nodes_measure_network(&tree, (1.0, 1.0)).unwrap();
            let n = net.len();
            let d = |a: usize, b: usize| net.distances[(a, b)];
            for i in 0..n.min(7) {
                for j in 0..n.min(7) {
                    for k in 0..n.min(7) {
                        for l in 0..n.min(7) {
                            let s1 = d(i, j) + d(k, l);
                            let s2 = d(i, k) + d(j, l);
                            let s3 = d(i, l) + d(j, k);
                            let mut sums = [s1, s2, s3];
                            sums.sort_by(f64::total_cmp);
                            // The two largest pairings agree on a tree metric.
                            prop_assert!(sums[2] - sums[1] <= 1e-9 * (1.0 + sums[2]));
                        }
                    }
                }
            }
        }

        #[test]
        fn masses_are_uniform_and_sum_to_one(seed in 300u64..360) {
            let f = random_field(seed, 10, 5);
            let (tree, _) = build_merge_tree(&f).unwrap();
            let net = to_measure_network(&tree, (1.0, 1.0), None).unwrap();
            prop_assert_eq!(net.masses.iter().sum::<f64>(), 1.0);
            let n = net.len() as f64;
            for &m in &net.masses {
                prop_assert!((m - 1.0 / n).abs() <= f64::EPSILON * n);
            }
        }
    }
}
