//! Thresholded connected components ("objects"), their anchor points, and
//! proximity-linked groups of objects ("systems").

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::merge_tree::{MergeTree, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CloudObject {
    pub label: u32,
    pub area_px: u64,
    pub centroid_km: (f64, f64),
    pub mean_value: f64,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

/// Labeled partition of the above-threshold pixels. Label 0 is background.
#[derive(Debug, Clone)]
pub struct CloudObjectLabeling {
    pub width: usize,
    pub height: usize,
    pub spacing_km: (f64, f64),
    pub labels: Vec<u32>,
    /// Objects in label order; `objects[k].label == k + 1`.
    pub objects: Vec<CloudObject>,
}

/// A proximity-linked group of objects sharing one trackable identity.
#[derive(Debug, Clone)]
pub struct CloudSystem {
    pub system_id: u32,
    pub member_labels: BTreeSet<u32>,
    pub anchors: BTreeSet<NodeId>,
    pub area_px: u64,
    pub centroid_km: (f64, f64),
    pub mean_value: f64,
}

/// Flood-fills pixels with `value >= threshold` into labeled objects.
/// Labels are assigned in row-major discovery order starting at 1, so the
/// labeling is deterministic.
pub fn detect_objects(
    field: &ScalarField,
    threshold: f64,
    connectivity: Connectivity,
) -> Result<CloudObjectLabeling> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "detection threshold must be positive and finite, got {threshold}"
        )));
    }
    let n = field.len();
    let mut labels = vec![0u32; n];
    let mut objects = Vec::new();
    let offsets = connectivity.offsets();
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != 0 || field.value_or_zero(start) < threshold {
            continue;
        }
        let label = objects.len() as u32 + 1;
        let mut pixels = Vec::new();
        labels[start] = label;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (col, row) = field.col_row(p);
            for &(dc, dr) in offsets {
                let (c, r) = (col as i64 + dc, row as i64 + dr);
                if c < 0 || r < 0 || c >= field.width as i64 || r >= field.height as i64 {
                    continue;
                }
                let q = r as usize * field.width + c as usize;
                if labels[q] == 0 && field.value_or_zero(q) >= threshold {
                    labels[q] = label;
                    stack.push(q);
                }
            }
        }
        pixels.sort_unstable();
        objects.push(summarize_object(field, label, pixels));
    }
    Ok(CloudObjectLabeling {
        width: field.width,
        height: field.height,
        spacing_km: field.spacing_km,
        labels,
        objects,
    })
}

fn summarize_object(field: &ScalarField, label: u32, pixels: Vec<usize>) -> CloudObject {
    let mut sum = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for &p in &pixels {
        sum += field.value_or_zero(p);
        let (x, y) = field.km_of_pixel(p);
        cx += x;
        cy += y;
    }
    let area = pixels.len() as f64;
    CloudObject {
        label,
        area_px: pixels.len() as u64,
        centroid_km: (cx / area, cy / area),
        mean_value: sum / area,
        pixels,
    }
}

/// Drops objects with `area_px < min_area_px` and renumbers the survivors
/// 1..K in their original order. Idempotent.
pub fn filter_small_objects(labeling: &CloudObjectLabeling, min_area_px: u64) -> CloudObjectLabeling {
    let mut remap = vec![0u32; labeling.objects.len() + 1];
    let mut objects = Vec::new();
    for obj in &labeling.objects {
        if obj.area_px >= min_area_px {
            let new_label = objects.len() as u32 + 1;
            remap[obj.label as usize] = new_label;
            let mut kept = obj.clone();
            kept.label = new_label;
            objects.push(kept);
        }
    }
    let labels = labeling.labels.iter().map(|&l| remap[l as usize]).collect();
    CloudObjectLabeling {
        width: labeling.width,
        height: labeling.height,
        spacing_km: labeling.spacing_km,
        labels,
        objects,
    }
}

/// Maps each object label to the live tree maxima located inside it.
/// Every object must own at least one maximum; a simplification threshold
/// that swallowed an object's last maximum is reported as an error.
pub fn attach_anchor_points(
    labeling: &CloudObjectLabeling,
    tree: &MergeTree,
) -> Result<BTreeMap<u32, BTreeSet<NodeId>>> {
    let mut map: BTreeMap<u32, BTreeSet<NodeId>> = BTreeMap::new();
    for obj in &labeling.objects {
        map.insert(obj.label, BTreeSet::new());
    }
    for node in tree.live_nodes() {
        if node.kind != NodeKind::Maximum {
            continue;
        }
        let (col, row) = (node.pixel.0 as usize, node.pixel.1 as usize);
        if col >= labeling.width || row >= labeling.height {
            return Err(Error::UnknownNode(node.id));
        }
        let label = labeling.labels[row * labeling.width + col];
        if label != 0 {
            map.get_mut(&label)
                .ok_or(Error::UnknownNode(node.id))?
                .insert(node.id);
        }
    }
    for (&label, anchors) in &map {
        if anchors.is_empty() {
            return Err(Error::ObjectWithoutAnchor { label });
        }
    }
    Ok(map)
}

/// Groups objects into systems: two objects link when their nearest pixel
/// pair lies within `merge_radius_km`, and systems are the transitive
/// closure of that relation. System ids follow the smallest member label.
pub fn build_cloud_systems(
    labeling: &CloudObjectLabeling,
    anchors: &BTreeMap<u32, BTreeSet<NodeId>>,
    merge_radius_km: f64,
) -> Result<Vec<CloudSystem>> {
    if !(merge_radius_km >= 0.0) || !merge_radius_km.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "merge radius must be nonnegative and finite, got {merge_radius_km}"
        )));
    }
    let k = labeling.objects.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let (sx, sy) = labeling.spacing_km;
    let r2 = merge_radius_km * merge_radius_km;
    // Window half-widths in pixels covering the radius.
    let rx = (merge_radius_km / sx).ceil() as i64;
    let ry = (merge_radius_km / sy).ceil() as i64;

    let mut parent: Vec<u32> = (0..k as u32).collect();
    fn find(parent: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    if merge_radius_km > 0.0 {
        let (w, h) = (labeling.width, labeling.height);
        for obj in &labeling.objects {
            for &p in &obj.pixels {
                let (col, row) = (p % w, p / w);
                // Only boundary pixels can realize the nearest pair.
                let mut boundary = false;
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (c, r) = (col as i64 + dc, row as i64 + dr);
                        if c < 0 || r < 0 || c >= w as i64 || r >= h as i64 {
                            boundary = true;
                            break 'scan;
                        }
                        if labeling.labels[r as usize * w + c as usize] != obj.label {
                            boundary = true;
                            break 'scan;
                        }
                    }
                }
                if !boundary {
                    continue;
                }
                for dr in -ry..=ry {
                    for dc in -rx..=rx {
                        let (c, r) = (col as i64 + dc, row as i64 + dr);
                        if c < 0 || r < 0 || c >= w as i64 || r >= h as i64 {
                            continue;
                        }
                        let other = labeling.labels[r as usize * w + c as usize];
                        if other == 0 || other == obj.label {
                            continue;
                        }
                        let (dx, dy) = (dc as f64 * sx, dr as f64 * sy);
                        if dx * dx + dy * dy <= r2 {
                            let (a, b) = (find(&mut parent, obj.label - 1), find(&mut parent, other - 1));
                            if a != b {
                                parent[a as usize] = b;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for label in 1..=k as u32 {
        groups.entry(find(&mut parent, label - 1)).or_default().push(label);
    }
    // Order systems by smallest member label.
    let mut member_sets: Vec<Vec<u32>> = groups.into_values().collect();
    member_sets.sort_by_key(|m| m[0]);

    let mut systems = Vec::new();
    for (i, members) in member_sets.into_iter().enumerate() {
        let mut area = 0u64;
        let mut value_sum = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        let mut anchor_set = BTreeSet::new();
        for &label in &members {
            let obj = &labeling.objects[label as usize - 1];
            let w = obj.area_px as f64;
            area += obj.area_px;
            value_sum += obj.mean_value * w;
            cx += obj.centroid_km.0 * w;
            cy += obj.centroid_km.1 * w;
            if let Some(a) = anchors.get(&label) {
                anchor_set.extend(a.iter().copied());
            }
        }
        let total = area as f64;
        systems.push(CloudSystem {
            system_id: i as u32 + 1,
            member_labels: members.into_iter().collect(),
            anchors: anchor_set,
            area_px: area,
            centroid_km: (cx / total, cy / total),
            mean_value: value_sum / total,
        });
    }
    Ok(systems)
}
