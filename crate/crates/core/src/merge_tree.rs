//! Merge trees of superlevel-set connectivity.
//!
//! Pixels are swept in decreasing value order with a union-find over the
//! 8-neighborhood. A pixel with no processed neighbor opens a leaf (a local
//! maximum), a pixel joining k >= 2 components closes their branches at a
//! saddle, and the last pixel closes the single remaining branch at the root.
//! Ties between equal values are broken by row-major pixel index: the lower
//! index counts as infinitesimally larger, so every comparison is strict.
//!
//! Each non-root node identifies the edge to its parent. The zone of an edge
//! is the set of pixels absorbed while that edge was growing; zones partition
//! the non-missing pixels and their areas drive simplification.

use crate::error::{Error, Result};
use crate::field::ScalarField;

pub type NodeId = u32;

/// `(kind, value, (col, row), parent)` tuple accepted by
/// [`MergeTree::from_parts`].
pub type NodePart = (NodeKind, f64, (u32, u32), Option<NodeId>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Maximum,
    Saddle,
    Root,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Maximum => "maximum",
            NodeKind::Saddle => "saddle",
            NodeKind::Root => "root",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MergeTreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub value: f64,
    /// Pixel location `(col, row)` of the critical point.
    pub pixel: (u32, u32),
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub alive: bool,
}

#[derive(Debug, Clone)]
pub struct MergeTree {
    pub nodes: Vec<MergeTreeNode>,
    pub root: NodeId,
}

impl MergeTree {
    pub fn node(&self, id: NodeId) -> &MergeTreeNode {
        &self.nodes[id as usize]
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &MergeTreeNode> {
        self.nodes.iter().filter(|n| n.alive)
    }

    pub fn live_count(&self) -> usize {
        self.live_nodes().count()
    }

    /// Live maxima in ascending node-id order.
    pub fn maxima(&self) -> Vec<NodeId> {
        self.live_nodes()
            .filter(|n| n.kind == NodeKind::Maximum)
            .map(|n| n.id)
            .collect()
    }

    /// Live childless non-root nodes; always maxima by construction.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.live_nodes()
            .filter(|n| n.children.is_empty() && n.id != self.root)
            .map(|n| n.id)
            .collect()
    }

    /// Number of superlevel-set components of `{f >= v}`, read off the tree:
    /// edges whose child clears `v` while the parent does not, plus the root's
    /// own component when the whole range clears `v`.
    pub fn component_count_at(&self, v: f64) -> usize {
        let mut count = 0;
        for n in self.live_nodes() {
            match n.parent {
                Some(p) => {
                    if n.value >= v && self.node(p).value < v {
                        count += 1;
                    }
                }
                None => {
                    if n.value >= v {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// One line per live node: `node_id kind value col row parent_id`,
    /// with -1 standing for the root's absent parent.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for n in self.live_nodes() {
            let parent = n.parent.map_or(-1i64, |p| p as i64);
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                n.id,
                n.kind.as_str(),
                n.value,
                n.pixel.0,
                n.pixel.1,
                parent
            ));
        }
        out
    }

    /// Builds a tree from explicit nodes for tests and synthetic inputs.
    /// `parents` entries are `(kind, value, (col, row), parent)`; values must
    /// strictly decrease from child to parent.
    pub fn from_parts(parts: &[NodePart]) -> Result<Self> {
        let mut nodes: Vec<MergeTreeNode> = parts
            .iter()
            .enumerate()
            .map(|(id, &(kind, value, pixel, parent))| MergeTreeNode {
                id: id as NodeId,
                kind,
                value,
                pixel,
                parent,
                children: Vec::new(),
                alive: true,
            })
            .collect();
        let mut root = None;
        for i in 0..nodes.len() {
            match nodes[i].parent {
                None => {
                    if nodes[i].kind != NodeKind::Root || root.is_some() {
                        return Err(Error::InvalidArgument(
                            "exactly one parentless root node required".into(),
                        ));
                    }
                    root = Some(i as NodeId);
                }
                Some(p) => {
                    if p as usize >= nodes.len() || p as usize == i {
                        return Err(Error::UnknownNode(p));
                    }
                    if !(nodes[i].value > nodes[p as usize].value) {
                        return Err(Error::InvalidArgument(format!(
                            "node {i} value must exceed its parent's"
                        )));
                    }
                    nodes[p as usize].children.push(i as NodeId);
                }
            }
        }
        let root = root.ok_or_else(|| Error::InvalidArgument("no root node".into()))?;
        for n in &nodes {
            if n.children.is_empty() && n.id != root && n.kind != NodeKind::Maximum {
                return Err(Error::InvalidArgument(format!("leaf node {} must be a maximum", n.id)));
            }
            if !n.children.is_empty() && n.kind == NodeKind::Maximum {
                return Err(Error::InvalidArgument(format!("maximum {} cannot have children", n.id)));
            }
        }
        Ok(MergeTree { nodes, root })
    }
}

/// Per-pixel assignment of pixels to tree edges. An edge is named by its
/// child-end node id; missing pixels map to no edge.
#[derive(Debug, Clone)]
pub struct ZoneMap {
    pub width: usize,
    pub height: usize,
    pub edge_of_pixel: Vec<Option<NodeId>>,
    /// Zone areas in pixels, indexed by the edge's child node id.
    pub zone_area: Vec<u64>,
    /// Number of non-missing pixels; zone areas sum to this.
    pub assigned_px: u64,
}

impl ZoneMap {
    pub fn area_of(&self, edge: NodeId) -> u64 {
        self.zone_area[edge as usize]
    }
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
        hi
    }
}

/// Sweeps the field and returns the merge tree with its zone map.
pub fn build_merge_tree(field: &ScalarField) -> Result<(MergeTree, ZoneMap)> {
    let n = field.len();
    if n < 2 {
        return Err(Error::EmptyField);
    }
    let values: Vec<f64> = (0..n).map(|i| field.value_or_zero(i)).collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b as usize].total_cmp(&values[a as usize]).then(a.cmp(&b))
    });

    let mut uf = UnionFind::new(n);
    let mut processed = vec![false; n];
    // Top node of each component's growing edge, stored at the union-find root.
    let mut comp_node = vec![u32::MAX; n];
    let mut nodes: Vec<MergeTreeNode> = Vec::new();
    let mut edge_of_pixel: Vec<Option<NodeId>> = vec![None; n];
    let mut neighbor_buf = Vec::with_capacity(8);
    let mut roots_buf: Vec<u32> = Vec::with_capacity(8);

    let new_node = |nodes: &mut Vec<MergeTreeNode>, kind, value, pixel: usize| -> NodeId {
        let id = nodes.len() as NodeId;
        let (col, row) = (pixel % field.width, pixel / field.width);
        nodes.push(MergeTreeNode {
            id,
            kind,
            value,
            pixel: (col as u32, row as u32),
            parent: None,
            children: Vec::new(),
            alive: true,
        });
        id
    };

    for &p in &order {
        let pu = p as usize;
        processed[pu] = true;
        field.neighbors8(pu, &mut neighbor_buf);
        roots_buf.clear();
        for &q in &neighbor_buf {
            if processed[q] {
                let r = uf.find(q as u32);
                if !roots_buf.contains(&r) {
                    roots_buf.push(r);
                }
            }
        }
        let edge = match roots_buf.len() {
            0 => {
                let id = new_node(&mut nodes, NodeKind::Maximum, values[pu], pu);
                comp_node[uf.find(p) as usize] = id;
                id
            }
            1 => {
                let top = comp_node[roots_buf[0] as usize];
                let merged = uf.union(p, roots_buf[0]);
                comp_node[merged as usize] = top;
                top
            }
            _ => {
                let id = new_node(&mut nodes, NodeKind::Saddle, values[pu], pu);
                let mut merged = p;
                for &r in &roots_buf {
                    let child = comp_node[r as usize];
                    nodes[child as usize].parent = Some(id);
                    nodes[id as usize].children.push(child);
                    merged = uf.union(merged, r);
                }
                comp_node[uf.find(merged) as usize] = id;
                id
            }
        };
        if !field.missing[pu] {
            edge_of_pixel[pu] = Some(edge);
        }
    }

    let last = *order.last().unwrap() as usize;
    let top = comp_node[uf.find(last as u32) as usize];
    let root;
    let top_pixel = nodes[top as usize].pixel;
    if (top_pixel.0 as usize, top_pixel.1 as usize) == (last % field.width, last / field.width) {
        // The final merge happened at the global minimum itself; that saddle
        // is the root. Its pixel moves to the lowest-id child edge.
        nodes[top as usize].kind = NodeKind::Root;
        root = top;
        let target = *nodes[top as usize].children.iter().min().expect("root merge has children");
        for e in edge_of_pixel.iter_mut() {
            if *e == Some(top) {
                *e = Some(target);
            }
        }
    } else {
        root = new_node(&mut nodes, NodeKind::Root, values[last], last);
        nodes[top as usize].parent = Some(root);
        nodes[root as usize].children.push(top);
    }

    let mut zone_area = vec![0u64; nodes.len()];
    let mut assigned = 0u64;
    for e in edge_of_pixel.iter().flatten() {
        zone_area[*e as usize] += 1;
        assigned += 1;
    }
    let tree = MergeTree { nodes, root };
    let zones = ZoneMap {
        width: field.width,
        height: field.height,
        edge_of_pixel,
        zone_area,
        assigned_px: assigned,
    };
    Ok((tree, zones))
}

/// Zone-redirect structure used while splicing: `find` resolves a dead edge
/// to the live edge that absorbed its pixels.
struct ZoneMerge {
    into: Vec<u32>,
    area: Vec<u64>,
}

impl ZoneMerge {
    fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.into[root as usize] != root {
            root = self.into[root as usize];
        }
        let mut cur = x;
        while self.into[cur as usize] != root {
            let next = self.into[cur as usize];
            self.into[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn absorb(&mut self, from: u32, to: u32) {
        let (rf, rt) = (self.find(from), self.find(to));
        if rf != rt {
            self.into[rf as usize] = rt;
            self.area[rt as usize] += self.area[rf as usize];
            self.area[rf as usize] = 0;
        }
    }
}

/// Removes every leaf whose edge zone is smaller than `min_zone_px`, in
/// ascending zone-area order (ties by node id). A saddle left with a single
/// child is spliced out: the surviving child edge spans to the saddle's
/// parent and absorbs both the saddle's and the removed leaf's zones. When
/// siblings remain, the largest-area sibling edge absorbs the removed zone.
/// The last leaf is never removed.
pub fn simplify_by_zone_area(
    tree: &MergeTree,
    zones: &ZoneMap,
    min_zone_px: u64,
) -> (MergeTree, ZoneMap) {
    let mut tree = tree.clone();
    let mut merge = ZoneMerge {
        into: (0..tree.nodes.len() as u32).collect(),
        area: zones.zone_area.clone(),
    };

    loop {
        let leaves = tree.leaves();
        if leaves.len() <= 1 {
            break;
        }
        let candidate = leaves
            .iter()
            .map(|&l| {
                let root = merge.find(l) as usize;
                (merge.area[root], l)
            })
            .filter(|&(a, _)| a < min_zone_px)
            .min();
        let Some((_, leaf)) = candidate else { break };

        let saddle = tree.nodes[leaf as usize].parent.expect("leaf has a parent");
        tree.nodes[leaf as usize].alive = false;
        tree.nodes[saddle as usize].children.retain(|&c| c != leaf);

        let siblings = tree.nodes[saddle as usize].children.clone();
        if siblings.len() == 1 && saddle != tree.root {
            let child = siblings[0];
            merge.absorb(leaf, child);
            merge.absorb(saddle, child);
            let grand = tree.nodes[saddle as usize].parent.expect("saddle has a parent");
            tree.nodes[saddle as usize].alive = false;
            tree.nodes[child as usize].parent = Some(grand);
            let slot = tree.nodes[grand as usize]
                .children
                .iter()
                .position(|&c| c == saddle)
                .expect("saddle is its parent's child");
            tree.nodes[grand as usize].children[slot] = child;
        } else {
            let sib = *siblings
                .iter()
                .max_by_key(|&&c| {
                    let root = merge.find(c) as usize;
                    (merge.area[root], std::cmp::Reverse(c))
                })
                .expect("removed leaf leaves a sibling");
            merge.absorb(leaf, sib);
        }
    }

    let mut edge_of_pixel = zones.edge_of_pixel.clone();
    for e in edge_of_pixel.iter_mut() {
        if let Some(id) = *e {
            *e = Some(merge.find(id));
        }
    }
    let zones = ZoneMap {
        width: zones.width,
        height: zones.height,
        edge_of_pixel,
        zone_area: merge.area,
        assigned_px: zones.assigned_px,
    };
    (tree, zones)
}

/// Raises the zone threshold from 0 in increments of `step` until the live
/// node count drops below `node_cap`, re-simplifying the already simplified
/// tree at each stage. Returns the final tree, zones, and the threshold used.
pub fn auto_simplify(
    tree: &MergeTree,
    zones: &ZoneMap,
    node_cap: usize,
    step: u64,
) -> Result<(MergeTree, ZoneMap, u64)> {
    if step == 0 {
        return Err(Error::InvalidArgument("zone threshold step must be positive".into()));
    }
    let mut threshold = 0u64;
    let (mut cur_tree, mut cur_zones) = simplify_by_zone_area(tree, zones, threshold);
    loop {
        if cur_tree.live_count() < node_cap {
            return Ok((cur_tree, cur_zones, threshold));
        }
        if cur_tree.leaves().len() <= 1 {
            return Err(Error::NodeCapUnreachable { cap: node_cap, nodes: cur_tree.live_count() });
        }
        threshold += step;
        let (t, z) = simplify_by_zone_area(&cur_tree, &cur_zones, threshold);
        cur_tree = t;
        cur_zones = z;
    }
}
