//! Simulated annotator: a frame-by-frame baseline without tracking, the online
//! single-pass method and the offline checkpoint method, all built on one
//! corrective interaction primitive.
//!
//! An interaction is adding or removing a point. Skipping a frame is free.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{track_chunked, SegmenterBackend, TrackerBackend};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, Label, LabeledPoint, ObjectId};
use crate::pipeline::two_pass_segment;
use crate::video::VideoSequence;

pub const DEFAULT_MAX_INT: usize = 300;
pub const DEFAULT_MAX_INT_PER_FRAME: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// Offline pass thresholds: steps of 0.1 up to 0.9, then 0.95.
pub const CHECKPOINT_THRESHOLDS: [f64; 10] = [0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_int: usize,
    pub max_int_per_frame: usize,
    pub threshold: f64,
    pub checkpoint_thresholds: Vec<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_int: DEFAULT_MAX_INT,
            max_int_per_frame: DEFAULT_MAX_INT_PER_FRAME,
            threshold: DEFAULT_THRESHOLD,
            checkpoint_thresholds: CHECKPOINT_THRESHOLDS.to_vec(),
        }
    }
}

impl Budget {
    pub fn with_max_int(mut self, max_int: usize) -> Self {
        self.max_int = max_int;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_int < 1 {
            return Err(Error::invalid("max_int must be at least 1: the first point costs one"));
        }
        if self.max_int_per_frame < 1 {
            return Err(Error::invalid("max_int_per_frame must be at least 1"));
        }
        if !self.threshold.is_finite() || self.checkpoint_thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        Ok(())
    }
}

pub type PointId = u64;

/// A point and the trajectory it was given when added. It prompts frames
/// `origin..end` where the tracker saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPoint {
    pub id: PointId,
    pub label: Label,
    pub origin: usize,
    /// Exclusive. Removal lowers it; re-tracking extends it only for points
    /// never removed.
    pub end: usize,
    #[serde(default)]
    pub removed_at: Option<usize>,
    /// Position and occlusion score per frame from `origin`.
    pub track: Vec<([f32; 2], f32)>,
}

impl MemoryPoint {
    pub fn at(&self, frame: usize) -> Option<([f32; 2], f32)> {
        if frame < self.origin || frame >= self.end {
            return None;
        }
        self.track.get(frame - self.origin).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MemoryEvent {
    Add {
        point: PointId,
        frame: usize,
        label: Label,
        x: f32,
        y: f32,
    },
    Remove {
        point: PointId,
        frame: usize,
    },
}

/// Points of one object with add/remove lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMemory {
    pub object: ObjectId,
    pub num_frames: usize,
    pub points: Vec<MemoryPoint>,
    pub events: Vec<MemoryEvent>,
    next_id: PointId,
}

impl PointMemory {
    pub fn new(object: ObjectId, num_frames: usize) -> Self {
        Self {
            object,
            num_frames,
            points: Vec::new(),
            events: Vec::new(),
            next_id: 1,
        }
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.num_frames {
            return Err(Error::invalid(format!(
                "frame {frame} outside a {}-frame video",
                self.num_frames
            )));
        }
        Ok(())
    }

    fn push(&mut self, label: Label, origin: usize, track: Vec<([f32; 2], f32)>) -> PointId {
        let id = self.next_id;
        self.next_id += 1;
        let [x, y] = track[0].0;
        self.points.push(MemoryPoint {
            id,
            label,
            origin,
            end: origin + track.len(),
            removed_at: None,
            track,
        });
        self.events.push(MemoryEvent::Add {
            point: id,
            frame: origin,
            label,
            x,
            y,
        });
        id
    }

    /// Adds a point that prompts only `frame`.
    pub fn add_to_frame(&mut self, frame: usize, label: Label, x: f32, y: f32) -> Result<PointId> {
        self.check_frame(frame)?;
        Ok(self.push(label, frame, vec![([x, y], 0.0)]))
    }

    /// Adds a point on `frame` and tracks it to the end of the video.
    pub fn add_to_frame_and_future<T: TrackerBackend + ?Sized>(
        &mut self,
        frame: usize,
        label: Label,
        x: f32,
        y: f32,
        frames: &[Frame],
        tracker: &mut T,
    ) -> Result<PointId> {
        self.check_frame(frame)?;
        if frames.len() != self.num_frames {
            return Err(Error::invalid("frame count differs from the point memory"));
        }
        let query = LabeledPoint {
            x,
            y,
            label,
            object: self.object,
        };
        let track = if frame + 1 == frames.len() {
            vec![([x, y], 0.0)]
        } else {
            let b = track_chunked(tracker, &[query], &frames[frame..])?;
            b.points
                .iter()
                .zip(&b.occlusion)
                .map(|(p, o)| (p[0], o[0]))
                .collect()
        };
        Ok(self.push(label, frame, track))
    }

    /// Removes the point from `frame` onward; earlier frames keep it.
    pub fn remove_point_and_future(&mut self, id: PointId, frame: usize) -> Result<()> {
        let p = self
            .points
            .iter_mut()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::NotFound(format!("point {id}")))?;
        if frame < p.origin || frame >= p.end {
            return Err(Error::invalid(format!("point {id} is not present on frame {frame}")));
        }
        p.end = frame;
        p.removed_at = Some(frame);
        self.events.push(MemoryEvent::Remove { point: id, frame });
        Ok(())
    }

    /// Replaces the trajectory of a present point from `frame` on with `track`,
    /// whose first entry is the position on `frame`. A removed point still ends
    /// where it was removed.
    pub fn retrack(&mut self, id: PointId, frame: usize, track: &[([f32; 2], f32)]) -> Result<()> {
        let n = self.num_frames;
        let p = self
            .points
            .iter_mut()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::NotFound(format!("point {id}")))?;
        if p.at(frame).is_none() {
            return Err(Error::invalid(format!("point {id} is not present on frame {frame}")));
        }
        if frame + track.len() != n {
            return Err(Error::invalid("a re-tracked trajectory must reach the last frame"));
        }
        p.track.truncate(frame - p.origin);
        p.track.extend_from_slice(track);
        if p.removed_at.is_none() {
            p.end = n;
        }
        Ok(())
    }

    pub fn get(&self, id: PointId) -> Option<&MemoryPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    /// Points that prompt `frame`: present, below the occlusion threshold and
    /// inside the image, in add order.
    pub fn visible_at(&self, frame: usize, occlusion_threshold: f32, width: u32, height: u32) -> Vec<(PointId, LabeledPoint)> {
        self.points
            .iter()
            .filter_map(|p| {
                let ([x, y], occ) = p.at(frame)?;
                let inside = x >= 0.0 && y >= 0.0 && x < width as f32 && y < height as f32;
                (occ < occlusion_threshold && inside).then_some((
                    p.id,
                    LabeledPoint {
                        x,
                        y,
                        label: p.label,
                        object: self.object,
                    },
                ))
            })
            .collect()
    }
}

/// What one corrective interaction does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Correction {
    RemovePoint { point: PointId },
    AddPoint { label: Label, x: f32, y: f32 },
    /// Prediction already equals the ground truth.
    NoOp,
}

/// Centre of the region pixel farthest from the region's complement; ties go
/// to the first pixel in raster order.
pub fn pole_of_inaccessibility(region: &BinaryMask) -> Option<(f32, f32)> {
    if region.is_empty() {
        return None;
    }
    let dt = region.squared_distance_transform();
    let mut best = 0;
    for (i, &d) in dt.iter().enumerate() {
        if d > dt[best] {
            best = i;
        }
    }
    let w = region.width() as usize;
    Some(((best % w) as f32 + 0.5, (best / w) as f32 + 0.5))
}

/// Chooses the correction for one frame from the prediction, the ground truth
/// and the points currently prompting that frame (in add order).
pub fn decide_interaction(pred: &BinaryMask, gt: &BinaryMask, points: &[(PointId, LabeledPoint)]) -> Result<Correction> {
    if !pred.same_size(gt) {
        return Err(Error::invalid("prediction and ground truth differ in size"));
    }
    let fp = pred.and_not(gt);
    let fn_ = gt.and_not(pred);
    let inside = |m: &BinaryMask, p: &LabeledPoint| m.contains_point(p.x, p.y);
    if let Some((id, _)) = points.iter().find(|(_, p)| !p.is_positive() && inside(&fn_, p)) {
        return Ok(Correction::RemovePoint { point: *id });
    }
    if let Some((id, _)) = points.iter().find(|(_, p)| p.is_positive() && inside(&fp, p)) {
        return Ok(Correction::RemovePoint { point: *id });
    }
    let (region, label) = if fn_.area() > fp.area() {
        (&fn_, Label::Positive)
    } else {
        (&fp, Label::Negative)
    };
    Ok(match pole_of_inaccessibility(region) {
        Some((x, y)) => Correction::AddPoint { label, x, y },
        None => Correction::NoOp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    /// 1-based count of interactions consumed including this one.
    pub index: usize,
    pub frame: usize,
    /// Offline pass, 0-based; `None` outside the offline method.
    pub pass: Option<usize>,
    pub correction: Correction,
    /// Point added or removed.
    pub point: Option<PointId>,
}

/// Mean IoU over all frames after `interactions` interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub interactions: usize,
    pub mean_iou: f64,
}

/// Prompts frames from a point memory, re-prompting only frames whose
/// visible points changed.
pub struct Predictor<'a, S: ?Sized> {
    frames: &'a [Frame],
    segmenter: &'a mut S,
    config: &'a PipelineConfig,
    cache: Vec<Option<(Vec<LabeledPoint>, BinaryMask)>>,
    pub segmenter_calls: usize,
}

impl<'a, S: SegmenterBackend + ?Sized> Predictor<'a, S> {
    pub fn new(frames: &'a [Frame], segmenter: &'a mut S, config: &'a PipelineConfig) -> Self {
        Self {
            frames,
            segmenter,
            config,
            cache: vec![None; frames.len()],
            segmenter_calls: 0,
        }
    }

    pub fn points_at(&self, memory: &PointMemory, frame: usize) -> Vec<(PointId, LabeledPoint)> {
        let f = &self.frames[frame];
        memory.visible_at(frame, self.config.occlusion_threshold, f.width(), f.height())
    }

    pub fn predict(&mut self, memory: &PointMemory, frame: usize) -> Result<BinaryMask> {
        let points: Vec<LabeledPoint> = self.points_at(memory, frame).into_iter().map(|p| p.1).collect();
        if let Some((cached, mask)) = &self.cache[frame] {
            if *cached == points {
                return Ok(mask.clone());
            }
        }
        let out = two_pass_segment(self.segmenter, &self.frames[frame], &points, self.config)?;
        self.segmenter_calls += out.calls;
        self.cache[frame] = Some((points, out.mask.clone()));
        Ok(out.mask)
    }

    pub fn predict_all(&mut self, memory: &PointMemory) -> Result<Vec<BinaryMask>> {
        (0..self.frames.len()).map(|t| self.predict(memory, t)).collect()
    }
}

pub fn mean_iou(pred: &[BinaryMask], gt: &[BinaryMask]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gt).map(|(p, g)| p.iou(g)).sum::<f64>() / pred.len() as f64
}

/// Applies `correction` on `frame`. Added points are tracked forward when a
/// tracker is given and stay on their frame otherwise.
fn apply<T: TrackerBackend + ?Sized>(
    memory: &mut PointMemory,
    frame: usize,
    correction: Correction,
    frames: &[Frame],
    tracker: Option<&mut T>,
) -> Result<Option<PointId>> {
    match correction {
        Correction::RemovePoint { point } => {
            memory.remove_point_and_future(point, frame)?;
            Ok(Some(point))
        }
        Correction::AddPoint { label, x, y } => Ok(Some(match tracker {
            Some(t) => memory.add_to_frame_and_future(frame, label, x, y, frames, t)?,
            None => memory.add_to_frame(frame, label, x, y)?,
        })),
        Correction::NoOp => Ok(None),
    }
}

/// One corrective interaction on `frame`: decides against the ground truth and
/// updates the memory.
pub fn perform_interaction<S, T>(
    predictor: &mut Predictor<'_, S>,
    tracker: Option<&mut T>,
    memory: &mut PointMemory,
    frame: usize,
    pred: &BinaryMask,
    gt: &BinaryMask,
) -> Result<(Correction, Option<PointId>)>
where
    S: SegmenterBackend + ?Sized,
    T: TrackerBackend + ?Sized,
{
    let points = predictor.points_at(memory, frame);
    let c = decide_interaction(pred, gt, &points)?;
    let id = apply(memory, frame, c, predictor.frames, tracker)?;
    Ok((c, id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SamOnly,
    Online,
    Offline,
}

/// Outcome of simulating one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSimulation {
    pub object: ObjectId,
    pub method: Method,
    #[serde(skip)]
    pub predictions: Vec<BinaryMask>,
    pub mean_iou: f64,
    pub log: Vec<InteractionEvent>,
    /// Mean IoU of the memory's full prediction after every interaction.
    pub curve: Vec<CurvePoint>,
    /// Offline only: mean IoU of each kept checkpoint, starting with the
    /// single-point initialization.
    pub checkpoints: Vec<CurvePoint>,
    pub memory: PointMemory,
}

impl ObjectSimulation {
    pub fn interactions(&self) -> usize {
        self.log.len()
    }

    /// Mean IoU the method returns when given `budget` interactions. For the
    /// online and frame-by-frame methods a smaller budget runs a prefix of the
    /// same interactions; for the offline method it returns the last
    /// checkpoint that fits.
    pub fn iou_at_budget(&self, budget: usize) -> f64 {
        let samples = match self.method {
            Method::Offline => &self.checkpoints,
            _ => &self.curve,
        };
        samples
            .iter()
            .take_while(|c| c.interactions <= budget)
            .last()
            .map_or(0.0, |c| c.mean_iou)
    }
}

struct Recorder<'g> {
    gt: &'g [BinaryMask],
    log: Vec<InteractionEvent>,
    curve: Vec<CurvePoint>,
}

impl<'g> Recorder<'g> {
    fn new(gt: &'g [BinaryMask]) -> Self {
        Self {
            gt,
            log: Vec::new(),
            curve: Vec::new(),
        }
    }

    fn record<S: SegmenterBackend + ?Sized>(
        &mut self,
        predictor: &mut Predictor<'_, S>,
        memory: &PointMemory,
        frame: usize,
        pass: Option<usize>,
        correction: Correction,
        point: Option<PointId>,
    ) -> Result<()> {
        let index = self.log.len() + 1;
        self.log.push(InteractionEvent {
            index,
            frame,
            pass,
            correction,
            point,
        });
        let all = predictor.predict_all(memory)?;
        self.curve.push(CurvePoint {
            interactions: index,
            mean_iou: mean_iou(&all, self.gt),
        });
        Ok(())
    }
}

fn check_inputs(frames: &[Frame], gt: &[BinaryMask]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames given"));
    }
    if frames.len() != gt.len() {
        return Err(Error::invalid("one ground-truth mask per frame is required"));
    }
    for (i, (f, g)) in frames.iter().zip(gt).enumerate() {
        if f.index() != i {
            return Err(Error::invalid(format!("frame {i} carries index {}", f.index())));
        }
        if f.width() != g.width() || f.height() != g.height() {
            return Err(Error::invalid(format!("ground truth of frame {i} has the wrong size")));
        }
    }
    Ok(())
}

/// Frame-by-frame annotation without tracking: each frame gets
/// `int_per_frame` interactions on its own points. Every scheduled
/// interaction is consumed, including no-ops on an already perfect frame.
pub fn simulate_sam_only<S: SegmenterBackend + ?Sized>(
    object: ObjectId,
    frames: &[Frame],
    gt: &[BinaryMask],
    int_per_frame: usize,
    segmenter: &mut S,
    config: &PipelineConfig,
) -> Result<ObjectSimulation> {
    check_inputs(frames, gt)?;
    let mut memory = PointMemory::new(object, frames.len());
    let mut predictor = Predictor::new(frames, segmenter, config);
    let mut rec = Recorder::new(gt);
    for i in 0..frames.len() {
        for _ in 0..int_per_frame {
            let m = predictor.predict(&memory, i)?;
            let (c, id) = perform_interaction::<S, dyn TrackerBackend>(&mut predictor, None, &mut memory, i, &m, &gt[i])?;
            rec.record(&mut predictor, &memory, i, None, c, id)?;
        }
    }
    let predictions = predictor.predict_all(&memory)?;
    Ok(ObjectSimulation {
        object,
        method: Method::SamOnly,
        mean_iou: mean_iou(&predictions, gt),
        predictions,
        log: rec.log,
        curve: rec.curve,
        checkpoints: Vec::new(),
        memory,
    })
}

/// First interaction: a positive point at the pole of inaccessibility of the
/// first non-empty ground-truth mask.
fn select_first_point<S, T>(
    predictor: &mut Predictor<'_, S>,
    tracker: &mut T,
    memory: &mut PointMemory,
    gt: &[BinaryMask],
    rec: &mut Recorder<'_>,
) -> Result<()>
where
    S: SegmenterBackend + ?Sized,
    T: TrackerBackend + ?Sized,
{
    let Some(first) = gt.iter().position(|m| !m.is_empty()) else {
        return Err(Error::invalid("the object never appears in the ground truth"));
    };
    let (x, y) = pole_of_inaccessibility(&gt[first]).expect("mask is non-empty");
    let c = Correction::AddPoint {
        label: Label::Positive,
        x,
        y,
    };
    let id = apply(memory, first, c, predictor.frames, Some(tracker))?;
    rec.record(predictor, memory, first, None, c, id)
}

/// Single pass through the video: skip frames at or above the threshold,
/// otherwise one interaction, until the budget is spent.
pub fn simulate_online<T, S>(
    object: ObjectId,
    frames: &[Frame],
    gt: &[BinaryMask],
    budget: &Budget,
    tracker: &mut T,
    segmenter: &mut S,
    config: &PipelineConfig,
) -> Result<ObjectSimulation>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    check_inputs(frames, gt)?;
    budget.validate()?;
    let mut memory = PointMemory::new(object, frames.len());
    let mut predictor = Predictor::new(frames, segmenter, config);
    let mut rec = Recorder::new(gt);
    select_first_point(&mut predictor, tracker, &mut memory, gt, &mut rec)?;
    let mut remaining = budget.max_int - 1;
    for i in 0..frames.len() {
        let m = predictor.predict(&memory, i)?;
        if m.iou(&gt[i]) >= budget.threshold {
            continue;
        }
        if remaining == 0 {
            break;
        }
        let (c, id) = perform_interaction(&mut predictor, Some(&mut *tracker), &mut memory, i, &m, &gt[i])?;
        rec.record(&mut predictor, &memory, i, None, c, id)?;
        remaining -= 1;
    }
    let predictions = predictor.predict_all(&memory)?;
    Ok(ObjectSimulation {
        object,
        method: Method::Online,
        mean_iou: mean_iou(&predictions, gt),
        predictions,
        log: rec.log,
        curve: rec.curve,
        checkpoints: Vec::new(),
        memory,
    })
}

/// Passes with rising IoU thresholds, up to `max_int_per_frame` interactions
/// per frame per pass. A pass that would overrun the budget is abandoned and
/// the last completed pass's predictions are returned.
pub fn simulate_offline<T, S>(
    object: ObjectId,
    frames: &[Frame],
    gt: &[BinaryMask],
    budget: &Budget,
    tracker: &mut T,
    segmenter: &mut S,
    config: &PipelineConfig,
) -> Result<ObjectSimulation>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    check_inputs(frames, gt)?;
    budget.validate()?;
    let mut memory = PointMemory::new(object, frames.len());
    let mut predictor = Predictor::new(frames, segmenter, config);
    let mut rec = Recorder::new(gt);
    select_first_point(&mut predictor, tracker, &mut memory, gt, &mut rec)?;
    let mut remaining = budget.max_int - 1;
    let mut best = predictor.predict_all(&memory)?;
    let mut checkpoints = vec![CurvePoint {
        interactions: rec.log.len(),
        mean_iou: mean_iou(&best, gt),
    }];
    'passes: for (pass, &threshold) in budget.checkpoint_thresholds.iter().enumerate() {
        for i in 0..frames.len() {
            for _ in 0..budget.max_int_per_frame {
                let m = predictor.predict(&memory, i)?;
                if m.iou(&gt[i]) >= threshold {
                    break;
                }
                if remaining == 0 {
                    break 'passes;
                }
                let (c, id) = perform_interaction(&mut predictor, Some(&mut *tracker), &mut memory, i, &m, &gt[i])?;
                rec.record(&mut predictor, &memory, i, Some(pass), c, id)?;
                remaining -= 1;
            }
        }
        best = predictor.predict_all(&memory)?;
        checkpoints.push(CurvePoint {
            interactions: rec.log.len(),
            mean_iou: mean_iou(&best, gt),
        });
    }
    Ok(ObjectSimulation {
        object,
        method: Method::Offline,
        mean_iou: mean_iou(&best, gt),
        predictions: best,
        log: rec.log,
        curve: rec.curve,
        checkpoints,
        memory,
    })
}

/// Per-object simulations of one sequence. Every object has its own memory and
/// its own budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSimulation {
    pub sequence: String,
    pub objects: BTreeMap<ObjectId, ObjectSimulation>,
}

impl SequenceSimulation {
    pub fn mean_iou(&self) -> f64 {
        mean_of(self.objects.values().map(|o| o.mean_iou))
    }

    pub fn iou_at_budget(&self, budget: usize) -> f64 {
        mean_of(self.objects.values().map(|o| o.iou_at_budget(budget)))
    }

    pub fn interactions(&self) -> usize {
        self.objects.values().map(|o| o.interactions()).sum()
    }
}

fn mean_of(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Ground truth of one object with every frame annotated.
pub fn dense_gt(seq: &VideoSequence, object: ObjectId) -> Result<Vec<BinaryMask>> {
    let masks = seq
        .gt
        .get(&object)
        .ok_or_else(|| Error::NotFound(format!("object {object}")))?;
    masks
        .iter()
        .enumerate()
        .map(|(t, m)| {
            m.clone().ok_or_else(|| {
                Error::invalid(format!("simulation needs ground truth on every frame; frame {t} has none"))
            })
        })
        .collect()
}

/// Simulates every object of `seq` that appears at all. `per_frame` is the
/// frame-by-frame method's interactions per frame.
pub fn simulate_sequence<T, S>(
    method: Method,
    seq: &VideoSequence,
    budget: &Budget,
    per_frame: usize,
    tracker: &mut T,
    segmenter: &mut S,
    config: &PipelineConfig,
) -> Result<SequenceSimulation>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    let mut objects = BTreeMap::new();
    for id in seq.seeds().into_keys() {
        let gt = dense_gt(seq, id)?;
        let sim = match method {
            Method::SamOnly => simulate_sam_only(id, &seq.frames, &gt, per_frame, segmenter, config)?,
            Method::Online => simulate_online(id, &seq.frames, &gt, budget, tracker, segmenter, config)?,
            Method::Offline => simulate_offline(id, &seq.frames, &gt, budget, tracker, segmenter, config)?,
        };
        objects.insert(id, sim);
    }
    Ok(SequenceSimulation {
        sequence: seq.name.clone(),
        objects,
    })
}

/// `budget,mean_iou,sequence` rows for budgets `0..=max_budget`, per sequence
/// and then averaged over sequences as sequence `mean`.
pub fn curve_csv(sims: &[SequenceSimulation], max_budget: usize) -> String {
    let mut out = String::from("budget,mean_iou,sequence\n");
    for s in sims {
        for b in 0..=max_budget {
            out.push_str(&format!("{b},{:.6},{}\n", s.iou_at_budget(b), s.sequence));
        }
    }
    if !sims.is_empty() {
        for b in 0..=max_budget {
            let m = mean_of(sims.iter().map(|s| s.iou_at_budget(b)));
            out.push_str(&format!("{b},{m:.6},mean\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    #[test]
    fn pole_is_centre_of_square() {
        let m = rect(9, 9, 2, 2, 7, 7);
        assert_eq!(pole_of_inaccessibility(&m), Some((4.5, 4.5)));
        assert_eq!(pole_of_inaccessibility(&BinaryMask::new(3, 3)), None);
    }

    #[test]
    fn remove_keeps_earlier_frames() {
        let mut m = PointMemory::new(ObjectId(1), 5);
        let id = m.push(Label::Positive, 1, vec![([1.5, 1.5], 0.0); 4]);
        m.remove_point_and_future(id, 3).unwrap();
        let at = |t| m.visible_at(t, 0.5, 8, 8).len();
        assert_eq!((at(0), at(1), at(2), at(3), at(4)), (0, 1, 1, 0, 0));
        assert!(m.remove_point_and_future(id, 3).is_err());
        assert!(matches!(m.remove_point_and_future(99, 1), Err(Error::NotFound(_))));
    }

    #[test]
    fn occluded_points_do_not_prompt() {
        let mut m = PointMemory::new(ObjectId(1), 2);
        m.push(Label::Positive, 0, vec![([1.5, 1.5], 0.0), ([1.5, 1.5], 0.9)]);
        assert_eq!(m.visible_at(0, 0.5, 4, 4).len(), 1);
        assert!(m.visible_at(1, 0.5, 4, 4).is_empty());
    }

    #[test]
    fn budget_needs_the_first_point() {
        assert!(Budget::default().with_max_int(0).validate().is_err());
        assert!(Budget::default().validate().is_ok());
    }
}
