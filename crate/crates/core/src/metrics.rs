//! Region similarity (J), contour accuracy (F) and their aggregation over
//! objects, sequences and visibility-duration buckets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{disk_offsets, BinaryMask};
use crate::model::ObjectId;

fn same_size(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// Intersection over union; two empty masks score 1.
pub fn region_j(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_size(pred, gt)?;
    Ok(pred.iou(gt))
}

/// Boundary match tolerance for an image: `ceil(0.008 * diagonal)` pixels.
pub fn default_tolerance(width: u32, height: u32) -> u32 {
    let diag = ((width as f64).powi(2) + (height as f64).powi(2)).sqrt();
    (0.008 * diag).ceil() as u32
}

/// Boundary F-measure under one-to-one matching of boundary pixels: a pred and
/// a GT boundary pixel may be paired when their Euclidean distance is at most
/// `tolerance`, and precision and recall are the size of a maximum matching over
/// each boundary's length.
pub fn contour_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: u32) -> Result<f64> {
    same_size(pred, gt)?;
    let pb: Vec<(u32, u32)> = pred.boundary().iter_set().collect();
    let gb: Vec<(u32, u32)> = gt.boundary().iter_set().collect();
    if pb.is_empty() && gb.is_empty() {
        return Ok(1.0);
    }
    if pb.is_empty() || gb.is_empty() {
        return Ok(0.0);
    }
    let matched = boundary_matching(pred.width(), pred.height(), &pb, &gb, tolerance);
    let precision = matched as f64 / pb.len() as f64;
    let recall = matched as f64 / gb.len() as f64;
    Ok(f_measure(precision, recall))
}

/// Size of a maximum matching between `left` and `right` pixels within
/// `tolerance` (Hopcroft-Karp).
fn boundary_matching(width: u32, height: u32, left: &[(u32, u32)], right: &[(u32, u32)], tolerance: u32) -> usize {
    const NONE: usize = usize::MAX;
    let (w, h) = (width as i64, height as i64);
    let mut right_at = vec![NONE; (width as usize) * (height as usize)];
    for (i, &(x, y)) in right.iter().enumerate() {
        right_at[y as usize * width as usize + x as usize] = i;
    }
    let offsets = disk_offsets(tolerance);
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|&(x, y)| {
            offsets
                .iter()
                .filter_map(|&(dx, dy)| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        return None;
                    }
                    let j = right_at[(ny * w + nx) as usize];
                    (j != NONE).then_some(j)
                })
                .collect()
        })
        .collect();

    let mut match_l = vec![NONE; left.len()];
    let mut match_r = vec![NONE; right.len()];
    let mut dist = vec![0u32; left.len()];
    let mut matched = 0;
    // Greedy start, then augmenting phases.
    for u in 0..left.len() {
        if let Some(&v) = adj[u].iter().find(|&&v| match_r[v] == NONE) {
            match_l[u] = v;
            match_r[v] = u;
            matched += 1;
        }
    }
    loop {
        // BFS layers from free left vertices.
        let mut queue = std::collections::VecDeque::new();
        for u in 0..left.len() {
            if match_l[u] == NONE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let m = match_r[v];
                if m == NONE {
                    found = true;
                } else if dist[m] == u32::MAX {
                    dist[m] = dist[u] + 1;
                    queue.push_back(m);
                }
            }
        }
        if !found {
            break;
        }
        let mut it = vec![0usize; left.len()];
        for u in 0..left.len() {
            if match_l[u] == NONE && augment(u, &adj, &mut match_l, &mut match_r, &mut dist, &mut it) {
                matched += 1;
            }
        }
    }
    matched
}

// Iterative DFS along BFS layers; `it` keeps each vertex's next edge.
fn augment(
    root: usize,
    adj: &[Vec<usize>],
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [u32],
    it: &mut [usize],
) -> bool {
    const NONE: usize = usize::MAX;
    let mut stack = vec![root];
    while let Some(&u) = stack.last() {
        if it[u] == adj[u].len() {
            dist[u] = u32::MAX;
            stack.pop();
            continue;
        }
        let v = adj[u][it[u]];
        it[u] += 1;
        let m = match_r[v];
        if m == NONE {
            // Flip the path: each stacked vertex takes the edge it just advanced on.
            for &a in stack.iter().rev() {
                let b = adj[a][it[a] - 1];
                match_l[a] = b;
                match_r[b] = a;
            }
            return true;
        }
        if dist[m] == dist[u] + 1 {
            stack.push(m);
        }
    }
    false
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Visibility-duration bucket: number of frames in which the object is visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibilityBucket {
    /// 1 to 5 frames.
    Short,
    /// 6 to 30 frames.
    Medium,
    /// 31 frames or more.
    Long,
}

impl VisibilityBucket {
    pub fn from_frames(visible: usize) -> Option<Self> {
        match visible {
            0 => None,
            1..=5 => Some(Self::Short),
            6..=30 => Some(Self::Medium),
            _ => Some(Self::Long),
        }
    }
}

/// Ground truth for one object: the first annotated frame plus every annotated
/// frame (`None` where the frame has no annotation).
#[derive(Debug, Clone)]
pub struct ObjectGt {
    pub first_frame: usize,
    pub masks: Vec<Option<BinaryMask>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub j: f64,
    pub f: f64,
    /// The prediction for this frame was missing and scored 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectScore {
    pub object: ObjectId,
    pub frames: Vec<FrameScore>,
    pub j_mean: f64,
    pub f_mean: f64,
    pub jf: f64,
    pub visible_frames: usize,
    pub bucket: Option<VisibilityBucket>,
}

impl ObjectScore {
    pub fn is_scored(&self) -> bool {
        !self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceScore {
    pub sequence: String,
    pub objects: Vec<ObjectScore>,
    pub j_mean: f64,
    pub f_mean: f64,
    pub jf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketScore {
    pub objects: usize,
    pub jf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetScore {
    pub sequences: Vec<SequenceScore>,
    pub j_mean: f64,
    pub f_mean: f64,
    pub jf: f64,
    pub buckets: BTreeMap<VisibilityBucket, BucketScore>,
    pub missing_predictions: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Scores one object's predictions over every annotated frame after its first
/// annotated frame. `pred[t]` is `None` when no prediction was produced.
pub fn score_object(
    object: ObjectId,
    gt: &ObjectGt,
    pred: &[Option<BinaryMask>],
    tolerance: Option<u32>,
) -> Result<ObjectScore> {
    let mut frames = Vec::new();
    let mut visible = 0;
    for (t, g) in gt.masks.iter().enumerate() {
        let Some(g) = g else { continue };
        if !g.is_empty() {
            visible += 1;
        }
        if t <= gt.first_frame {
            continue;
        }
        let tol = tolerance.unwrap_or_else(|| default_tolerance(g.width(), g.height()));
        match pred.get(t).and_then(|p| p.as_ref()) {
            Some(p) => frames.push(FrameScore {
                frame: t,
                j: region_j(p, g)?,
                f: contour_f(p, g, tol)?,
                missing: false,
            }),
            None => frames.push(FrameScore {
                frame: t,
                j: 0.0,
                f: 0.0,
                missing: true,
            }),
        }
    }
    let j_mean = mean(frames.iter().map(|f| f.j));
    let f_mean = mean(frames.iter().map(|f| f.f));
    Ok(ObjectScore {
        object,
        j_mean,
        f_mean,
        jf: (j_mean + f_mean) / 2.0,
        frames,
        visible_frames: visible,
        bucket: VisibilityBucket::from_frames(visible),
    })
}

/// Per-object scores for a sequence; the sequence mean is over scored objects.
pub fn score_sequence(
    sequence: &str,
    gt: &BTreeMap<ObjectId, ObjectGt>,
    pred: &BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
    tolerance: Option<u32>,
) -> Result<SequenceScore> {
    let empty = Vec::new();
    let objects = gt
        .iter()
        .map(|(&id, g)| score_object(id, g, pred.get(&id).unwrap_or(&empty), tolerance))
        .collect::<Result<Vec<_>>>()?;
    let scored = || objects.iter().filter(|o| o.is_scored());
    let j_mean = mean(scored().map(|o| o.j_mean));
    let f_mean = mean(scored().map(|o| o.f_mean));
    Ok(SequenceScore {
        sequence: sequence.to_string(),
        j_mean,
        f_mean,
        jf: (j_mean + f_mean) / 2.0,
        objects,
    })
}

/// Dataset means over all scored objects of all sequences.
pub fn aggregate(sequences: Vec<SequenceScore>) -> DatasetScore {
    let all = || sequences.iter().flat_map(|s| s.objects.iter()).filter(|o| o.is_scored());
    let j_mean = mean(all().map(|o| o.j_mean));
    let f_mean = mean(all().map(|o| o.f_mean));
    let mut buckets: BTreeMap<VisibilityBucket, Vec<f64>> = BTreeMap::new();
    for o in all() {
        if let Some(b) = o.bucket {
            buckets.entry(b).or_default().push(o.jf);
        }
    }
    let missing_predictions = sequences
        .iter()
        .flat_map(|s| s.objects.iter())
        .flat_map(|o| o.frames.iter())
        .filter(|f| f.missing)
        .count();
    DatasetScore {
        j_mean,
        f_mean,
        jf: (j_mean + f_mean) / 2.0,
        buckets: buckets
            .into_iter()
            .map(|(b, v)| {
                (
                    b,
                    BucketScore {
                        objects: v.len(),
                        jf: mean(v.into_iter()),
                    },
                )
            })
            .collect(),
        missing_predictions,
        sequences,
    }
}
