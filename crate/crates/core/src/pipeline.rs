//! The per-video loop: sample query points, track them, prompt the segmenter
//! frame by frame, and optionally reinitialize the points.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{track_chunked, SegmenterBackend, TrackerBackend};
use crate::config::{PipelineConfig, ReinitVariant};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, LabeledPoint, MaskPrediction, ObjectId, PriorHandle, TrajectoryBundle};
use crate::sampling::{derive_seed, sample_background, sample_positive};

/// How an object enters the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    /// First-appearance mask; points are sampled from it and the mask itself is
    /// not used further.
    Mask { frame: usize, mask: BinaryMask },
    /// Explicit points, all for this object.
    Points {
        frame: usize,
        points: Vec<LabeledPoint>,
    },
}

impl Seed {
    pub fn frame(&self) -> usize {
        match self {
            Seed::Mask { frame, .. } | Seed::Points { frame, .. } => *frame,
        }
    }
}

/// Labeled points of one object at one reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPointSet {
    pub object: ObjectId,
    pub frame: usize,
    pub positives: Vec<LabeledPoint>,
    pub negatives: Vec<LabeledPoint>,
    /// Other objects' positives at the same frame, used as negatives.
    #[serde(default)]
    pub cross_negatives: Vec<LabeledPoint>,
}

impl QueryPointSet {
    /// Positives first, then negatives, then cross-object negatives.
    pub fn queries(&self) -> Vec<LabeledPoint> {
        self.positives
            .iter()
            .chain(&self.negatives)
            .chain(&self.cross_negatives)
            .copied()
            .collect()
    }
}

/// Samples the query points of `object` from a mask at `frame`.
pub fn sample_query_points(
    object: ObjectId,
    frame: &Frame,
    mask: &BinaryMask,
    config: &PipelineConfig,
) -> Result<QueryPointSet> {
    let t = frame.index() as u64;
    let pos_seed = derive_seed(&[config.rng_seed, object.0 as u64, t, 1]);
    let neg_seed = derive_seed(&[config.rng_seed, object.0 as u64, t, 2]);
    let positives = sample_positive(
        config.psm,
        mask,
        frame,
        config.positive_per_mask,
        pos_seed,
        object,
    )?;
    let negatives = match sample_background(mask, frame, config.negative_per_mask, neg_seed, object) {
        Ok(n) => n,
        // The mask covers the whole frame: there is no background to sample.
        Err(Error::EmptyMask) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(QueryPointSet {
        object,
        frame: frame.index(),
        positives,
        negatives,
        cross_negatives: Vec::new(),
    })
}

/// Result of prompting the segmenter on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSegmentation {
    pub mask: BinaryMask,
    pub prior: Option<PriorHandle>,
    /// No visible positive point: the mask is empty and no call was made.
    pub no_visible_positive: bool,
    pub calls: usize,
}

/// Prompts the segmenter with the visible points of one frame: once with the
/// positives alone, then `1 + refinement_iterations` times with positives,
/// negatives and the previous answer as a dense prior.
pub fn two_pass_segment<S: SegmenterBackend + ?Sized>(
    segmenter: &mut S,
    frame: &Frame,
    points: &[LabeledPoint],
    config: &PipelineConfig,
) -> Result<FrameSegmentation> {
    let positives: Vec<LabeledPoint> = points.iter().filter(|p| p.is_positive()).copied().collect();
    if positives.is_empty() {
        return Ok(FrameSegmentation {
            mask: BinaryMask::new(frame.width(), frame.height()),
            prior: None,
            no_visible_positive: true,
            calls: 0,
        });
    }
    let use_prior = segmenter.capabilities().accepts_dense_prior;
    let mut out = segmenter.segment(frame, &positives, None)?;
    let all: Vec<LabeledPoint> = positives
        .iter()
        .chain(points.iter().filter(|p| !p.is_positive()))
        .copied()
        .collect();
    for _ in 0..=config.refinement_iterations {
        let prior = if use_prior { out.prior } else { None };
        out = segmenter.segment(frame, &all, prior)?;
    }
    Ok(FrameSegmentation {
        mask: out.mask,
        prior: out.prior,
        no_visible_positive: false,
        calls: config.calls_per_frame(),
    })
}

pub const PATCH_RADIUS: i64 = 3;

/// Mean squared difference between the 7x7 RGB patches (values in [0, 1])
/// around two positions. Off-image pixels are clamped to the border.
pub fn patch_distance(a: &Frame, pa: [f32; 2], b: &Frame, pb: [f32; 2]) -> f64 {
    let (ax, ay) = (pa[0].floor() as i64, pa[1].floor() as i64);
    let (bx, by) = (pb[0].floor() as i64, pb[1].floor() as i64);
    let mut sum = 0.0;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            let ca = a.rgb_clamped(ax + dx, ay + dy);
            let cb = b.rgb_clamped(bx + dx, by + dy);
            for c in 0..3 {
                let d = (ca[c] as f64 - cb[c] as f64) / 255.0;
                sum += d * d;
            }
        }
    }
    let n = (2 * PATCH_RADIUS + 1).pow(2) as f64 * 3.0;
    sum / n
}

/// Marks point `i` occluded at frame `t` when its patch at `t` differs from its
/// patch on the bundle's first frame by more than `threshold`.
pub fn filter_by_patch_similarity(
    frame0: &Frame,
    frame_t: &Frame,
    bundle: &TrajectoryBundle,
    threshold: f64,
) -> Result<TrajectoryBundle> {
    let t = frame_t
        .index()
        .checked_sub(bundle.start_frame)
        .filter(|&t| t < bundle.num_frames())
        .ok_or_else(|| Error::invalid("frame lies outside the trajectory bundle"))?;
    let mut out = bundle.clone();
    for i in 0..bundle.num_points() {
        let d = patch_distance(frame0, bundle.points[0][i], frame_t, bundle.points[t][i]);
        if d > threshold {
            out.occlusion[t][i] = 1.0;
        }
    }
    Ok(out)
}

/// Points of the bundle at frame offset `t` that are visible: occlusion score
/// below the threshold and inside the frame.
fn visible_points(
    bundle: &TrajectoryBundle,
    t: usize,
    frame: &Frame,
    threshold: f32,
) -> (Vec<LabeledPoint>, usize) {
    let mut out = Vec::new();
    let mut hidden = 0;
    for i in 0..bundle.num_points() {
        let [x, y] = bundle.points[t][i];
        if bundle.occlusion[t][i] < threshold && frame.contains(x, y) {
            out.push(LabeledPoint {
                x,
                y,
                label: bundle.labels[i],
                object: bundle.objects[i],
            });
        } else {
            hidden += 1;
        }
    }
    (out, hidden)
}

/// Picks the reinitialization frame from a window of predicted mask areas.
///
/// `areas[o][k]` is the area of object `o` at window frame `k`; the return
/// value indexes the window. `None` means every mask in the window is empty.
/// Variants B and C are per object and expect a single row.
pub fn reinit_trigger(
    variant: ReinitVariant,
    areas: &[Vec<usize>],
    initial_areas: &[usize],
    band: f64,
) -> Option<usize> {
    let len = areas.first().map_or(0, Vec::len);
    if len == 0 || areas.iter().all(|row| row.iter().all(|&a| a == 0)) {
        return None;
    }
    let similar = |a: usize, init: usize| {
        a > 0 && init > 0 && (a as f64 - init as f64).abs() / init as f64 <= band
    };
    match variant {
        ReinitVariant::Off => None,
        ReinitVariant::A => Some(len - 1),
        ReinitVariant::B => {
            let row = &areas[0];
            let nonempty: Vec<usize> = row.iter().copied().filter(|&a| a > 0).collect();
            let mean = nonempty.iter().sum::<usize>() as f64 / nonempty.len() as f64;
            // First minimum wins: earliest frame on ties.
            row.iter()
                .enumerate()
                .filter(|(_, &a)| a > 0)
                .fold(None::<(usize, f64)>, |best, (k, &a)| {
                    let d = (a as f64 - mean).abs();
                    match best {
                        Some((_, bd)) if bd <= d => best,
                        _ => Some((k, d)),
                    }
                })
                .map(|(k, _)| k)
        }
        ReinitVariant::C => {
            let row = &areas[0];
            let init = initial_areas.first().copied().unwrap_or(0);
            (0..len)
                .find(|&k| similar(row[k], init))
                .or_else(|| (0..len).rev().find(|&k| row[k] > 0))
        }
        ReinitVariant::D => (0..len)
            .find(|&k| {
                areas
                    .iter()
                    .zip(initial_areas)
                    .all(|(row, &init)| similar(row[k], init))
            })
            .or(Some(len - 1)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReinitEvent {
    pub object: ObjectId,
    pub frame: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub reinit_events: Vec<ReinitEvent>,
    /// Object to the frame after which it was considered gone.
    pub disappeared: BTreeMap<ObjectId, usize>,
    /// Frames segmented without any visible positive point.
    pub empty_prompt_frames: BTreeMap<ObjectId, Vec<usize>>,
    /// Number of (point, frame) pairs withheld from prompts as occluded.
    pub occluded_points: BTreeMap<ObjectId, usize>,
    pub tracker_calls: usize,
    pub segmenter_calls: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub config: PipelineConfig,
    /// Initial query sets followed by every reinitialized set, in order.
    pub query_sets: Vec<QueryPointSet>,
    /// Per object, one slot per frame; `None` before the object's seed frame.
    pub predictions: BTreeMap<ObjectId, Vec<Option<MaskPrediction>>>,
    pub diagnostics: Diagnostics,
}

impl PipelineRun {
    pub fn masks(&self) -> BTreeMap<ObjectId, Vec<Option<BinaryMask>>> {
        self.predictions
            .iter()
            .map(|(&id, v)| (id, v.iter().map(|p| p.as_ref().map(|p| p.mask.clone())).collect()))
            .collect()
    }
}

struct ObjectState {
    set: QueryPointSet,
    initial_area: usize,
}

struct Runner<'a, T: ?Sized, S: ?Sized> {
    frames: &'a [Frame],
    config: &'a PipelineConfig,
    tracker: &'a mut T,
    segmenter: &'a mut S,
    predictions: BTreeMap<ObjectId, Vec<Option<MaskPrediction>>>,
    diag: Diagnostics,
    query_sets: Vec<QueryPointSet>,
}

impl<T: TrackerBackend + ?Sized, S: SegmenterBackend + ?Sized> Runner<'_, T, S> {
    fn store(&mut self, object: ObjectId, t: usize, seg: FrameSegmentation) {
        if seg.no_visible_positive {
            self.diag.empty_prompt_frames.entry(object).or_default().push(t);
        }
        self.diag.segmenter_calls += seg.calls;
        self.predictions.get_mut(&object).expect("object registered")[t] = Some(MaskPrediction {
            mask: seg.mask,
            dense_prior: seg.prior,
            object,
            frame: t,
        });
    }

    fn area(&self, object: ObjectId, t: usize) -> usize {
        self.predictions[&object][t].as_ref().map_or(0, |p| p.mask.area())
    }

    /// Segments the reference frame itself from the query points.
    fn segment_reference(&mut self, set: &QueryPointSet) -> Result<()> {
        let frame = &self.frames[set.frame];
        let seg = two_pass_segment(self.segmenter, frame, &set.queries(), self.config)?;
        self.store(set.object, set.frame, seg);
        Ok(())
    }

    /// Tracks the object's points over `(cur, end]` and segments those frames.
    fn propagate(&mut self, set: &QueryPointSet, end: usize) -> Result<()> {
        let cur = set.frame;
        if end <= cur {
            return Ok(());
        }
        let frames = &self.frames[cur..=end];
        let queries = set.queries();
        let mut bundle = track_chunked(self.tracker, &queries, frames)?;
        self.diag.tracker_calls += 1;
        for k in 1..frames.len() {
            if let Some(th) = self.config.patch_similarity_threshold {
                bundle = filter_by_patch_similarity(&frames[0], &frames[k], &bundle, th)?;
            }
            let (pts, hidden) =
                visible_points(&bundle, k, &frames[k], self.config.occlusion_threshold);
            *self.diag.occluded_points.entry(set.object).or_default() += hidden;
            let seg = two_pass_segment(self.segmenter, &frames[k], &pts, self.config)?;
            self.store(set.object, cur + k, seg);
        }
        Ok(())
    }

    fn halt(&mut self, object: ObjectId, after: usize) {
        let (w, h) = (self.frames[0].width(), self.frames[0].height());
        let slots = self.predictions.get_mut(&object).expect("object registered");
        for (t, slot) in slots.iter_mut().enumerate().skip(after + 1) {
            *slot = Some(MaskPrediction {
                mask: BinaryMask::new(w, h),
                dense_prior: None,
                object,
                frame: t,
            });
        }
        self.diag.disappeared.insert(object, after);
    }

    /// Runs a group of objects that share a reference frame. Synchronized
    /// variants reinitialize the whole group at one frame.
    fn run_group(&mut self, mut group: Vec<ObjectState>) -> Result<()> {
        let last = self.frames.len() - 1;
        let variant = self.config.reinit;
        for o in &group {
            self.segment_reference(&o.set)?;
        }
        for o in &mut group {
            o.initial_area = self.area(o.set.object, o.set.frame);
        }
        while !group.is_empty() {
            let cur = group[0].set.frame;
            let end = match variant {
                ReinitVariant::Off => last,
                _ => (cur + self.config.horizon).min(last),
            };
            for o in &group {
                self.propagate(&o.set, end)?;
            }
            if variant == ReinitVariant::Off || end == last {
                return Ok(());
            }
            let areas: Vec<Vec<usize>> = group
                .iter()
                .map(|o| (cur + 1..=end).map(|t| self.area(o.set.object, t)).collect())
                .collect();
            let initial: Vec<usize> = group.iter().map(|o| o.initial_area).collect();
            let Some(k) = reinit_trigger(variant, &areas, &initial, self.config.area_similarity_band)
            else {
                for o in &group {
                    self.halt(o.set.object, end);
                }
                return Ok(());
            };
            let r = cur + 1 + k;
            let mut next = Vec::new();
            for o in group {
                let id = o.set.object;
                if self.area(id, r) == 0 {
                    self.halt(id, r);
                    continue;
                }
                let mask = self.predictions[&id][r].as_ref().expect("predicted").mask.clone();
                let set = sample_query_points(id, &self.frames[r], &mask, self.config)?;
                self.diag.reinit_events.push(ReinitEvent { object: id, frame: r });
                // Predictions after the reinit frame are recomputed from the new points.
                for slot in self.predictions.get_mut(&id).unwrap().iter_mut().skip(r + 1) {
                    *slot = None;
                }
                next.push(ObjectState {
                    set,
                    initial_area: o.initial_area,
                });
            }
            if self.config.cross_object_negatives {
                add_cross_negatives(&mut next);
            }
            self.query_sets.extend(next.iter().map(|o| o.set.clone()));
            group = next;
        }
        Ok(())
    }
}

fn add_cross_negatives(states: &mut [ObjectState]) {
    let positives: Vec<(usize, ObjectId, Vec<LabeledPoint>)> = states
        .iter()
        .map(|o| (o.set.frame, o.set.object, o.set.positives.clone()))
        .collect();
    for o in states.iter_mut() {
        o.set.cross_negatives = positives
            .iter()
            .filter(|(f, id, _)| *f == o.set.frame && *id != o.set.object)
            .flat_map(|(_, _, ps)| ps.iter().map(|p| LabeledPoint::negative(p.x, p.y, o.set.object)))
            .collect();
    }
}

/// Runs the pipeline over `frames` (indices `0..n`) for every seeded object.
pub fn run<T, S>(
    frames: &[Frame],
    seeds: &BTreeMap<ObjectId, Seed>,
    config: &PipelineConfig,
    tracker: &mut T,
    segmenter: &mut S,
) -> Result<PipelineRun>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    let started = Instant::now();
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("no frames given"));
    }
    if frames.iter().enumerate().any(|(i, f)| f.index() != i) {
        return Err(Error::invalid("frame indices must run 0..n"));
    }
    let n = frames.len();
    let mut states = Vec::new();
    for (&id, seed) in seeds {
        let t = seed.frame();
        if t >= n {
            return Err(Error::invalid(format!("object {id} is seeded at missing frame {t}")));
        }
        let set = match seed {
            Seed::Mask { mask, .. } => {
                if mask.width() != frames[0].width() || mask.height() != frames[0].height() {
                    return Err(Error::invalid("seed mask size does not match the frames"));
                }
                sample_query_points(id, &frames[t], mask, config)?
            }
            Seed::Points { points, .. } => {
                if points.iter().any(|p| p.object != id) {
                    return Err(Error::invalid("seed points must belong to their object"));
                }
                if !points.iter().any(|p| p.is_positive()) {
                    return Err(Error::invalid(format!("object {id} has no positive point")));
                }
                if points.iter().any(|p| !frames[t].contains(p.x, p.y)) {
                    return Err(Error::invalid("seed point lies outside the frame"));
                }
                QueryPointSet {
                    object: id,
                    frame: t,
                    positives: points.iter().filter(|p| p.is_positive()).copied().collect(),
                    negatives: points.iter().filter(|p| !p.is_positive()).copied().collect(),
                    cross_negatives: Vec::new(),
                }
            }
        };
        states.push(ObjectState {
            set,
            initial_area: 0,
        });
    }
    if config.cross_object_negatives {
        add_cross_negatives(&mut states);
    }
    let query_sets = states.iter().map(|o| o.set.clone()).collect();
    let mut runner = Runner {
        frames,
        config,
        tracker,
        segmenter,
        predictions: seeds.keys().map(|&id| (id, vec![None; n])).collect(),
        diag: Diagnostics::default(),
        query_sets,
    };
    let synced = matches!(config.reinit, ReinitVariant::A | ReinitVariant::D);
    let mut groups: BTreeMap<(usize, u32), Vec<ObjectState>> = BTreeMap::new();
    for s in states {
        let key = if synced {
            (s.set.frame, 0)
        } else {
            (s.set.frame, s.set.object.0)
        };
        groups.entry(key).or_default().push(s);
    }
    for (_, g) in groups {
        runner.run_group(g)?;
    }
    runner.diag.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(PipelineRun {
        config: config.clone(),
        query_sets: runner.query_sets,
        predictions: runner.predictions,
        diagnostics: runner.diag,
    })
}
