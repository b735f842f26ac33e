//! Tracker and segmenter backend interfaces, plus the length-prefixed JSON wire
//! protocol used to reach out-of-process model sidecars.

pub mod client;
pub mod server;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, LabeledPoint, PriorHandle, TrajectoryBundle};

pub use client::{connect_segmenter, connect_tracker, Connection, RemoteSegmenter, RemoteTracker};
pub use server::{BackendServer, Session};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerCapabilities {
    pub predicts_occlusion: bool,
    /// Maximum number of frames per request, for windowed trackers.
    #[serde(default)]
    pub window_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterCapabilities {
    pub accepts_dense_prior: bool,
    pub proposes_masks: bool,
}

/// One segmenter answer: the mask and a handle to the dense prior the backend
/// kept for re-prompting.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: BinaryMask,
    pub prior: Option<PriorHandle>,
}

pub trait TrackerBackend: Send {
    fn capabilities(&self) -> TrackerCapabilities;

    /// Tracks `queries` (all located on `frames[0]`) through `frames`, which must
    /// have contiguous indices.
    fn track(&mut self, queries: &[LabeledPoint], frames: &[Frame]) -> Result<TrajectoryBundle>;
}

pub trait SegmenterBackend: Send {
    fn capabilities(&self) -> SegmenterCapabilities;

    fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation>;

    fn propose_masks(&mut self, _frame: &Frame, _max_proposals: usize) -> Result<Vec<BinaryMask>> {
        Err(Error::UnsupportedCapability("mask proposals".into()))
    }
}

impl<T: TrackerBackend + ?Sized> TrackerBackend for Box<T> {
    fn capabilities(&self) -> TrackerCapabilities {
        (**self).capabilities()
    }

    fn track(&mut self, queries: &[LabeledPoint], frames: &[Frame]) -> Result<TrajectoryBundle> {
        (**self).track(queries, frames)
    }
}

impl<T: SegmenterBackend + ?Sized> SegmenterBackend for Box<T> {
    fn capabilities(&self) -> SegmenterCapabilities {
        (**self).capabilities()
    }

    fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation> {
        (**self).segment(frame, points, prior)
    }

    fn propose_masks(&mut self, frame: &Frame, max_proposals: usize) -> Result<Vec<BinaryMask>> {
        (**self).propose_masks(frame, max_proposals)
    }
}

/// Checks that frame indices are contiguous and increasing.
pub fn check_contiguous(frames: &[Frame]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames given"));
    }
    for w in frames.windows(2) {
        if w[1].index() != w[0].index() + 1 {
            return Err(Error::invalid(format!(
                "frames are not contiguous: {} followed by {}",
                w[0].index(),
                w[1].index()
            )));
        }
    }
    Ok(())
}

/// Verifies a tracker answer against the request it answers.
pub fn check_bundle(bundle: &TrajectoryBundle, queries: &[LabeledPoint], frames: &[Frame]) -> Result<()> {
    bundle.validate()?;
    if bundle.num_points() != queries.len() || bundle.num_frames() != frames.len() {
        return Err(Error::protocol(format!(
            "tracker returned {}x{} trajectories for {}x{} request",
            bundle.num_frames(),
            bundle.num_points(),
            frames.len(),
            queries.len()
        )));
    }
    if bundle.start_frame != frames[0].index() {
        return Err(Error::protocol("tracker bundle starts at the wrong frame"));
    }
    Ok(())
}

/// Tracks through `frames`, splitting the request into windows when the tracker
/// advertises a window size. Consecutive windows overlap by one frame; each
/// window after the first is queried with the positions the previous window
/// predicted on the shared frame.
pub fn track_chunked<T: TrackerBackend + ?Sized>(
    tracker: &mut T,
    queries: &[LabeledPoint],
    frames: &[Frame],
) -> Result<TrajectoryBundle> {
    check_contiguous(frames)?;
    if queries.is_empty() {
        return Err(Error::invalid("at least one query point is required"));
    }
    let window = tracker.capabilities().window_size.unwrap_or(usize::MAX).max(2);
    if frames.len() <= window {
        let b = tracker.track(queries, frames)?;
        check_bundle(&b, queries, frames)?;
        return Ok(b);
    }
    let mut out = TrajectoryBundle {
        start_frame: frames[0].index(),
        points: Vec::with_capacity(frames.len()),
        occlusion: Vec::with_capacity(frames.len()),
        labels: queries.iter().map(|q| q.label).collect(),
        objects: queries.iter().map(|q| q.object).collect(),
    };
    let mut start = 0;
    let mut current: Vec<LabeledPoint> = queries.to_vec();
    loop {
        let end = (start + window).min(frames.len());
        let chunk = &frames[start..end];
        let b = tracker.track(&current, chunk)?;
        check_bundle(&b, &current, chunk)?;
        // The shared first frame of a later window keeps the earlier window's values.
        let skip = usize::from(start > 0);
        out.points.extend(b.points.iter().skip(skip).cloned());
        out.occlusion.extend(b.occlusion.iter().skip(skip).cloned());
        if end == frames.len() {
            break;
        }
        current = b.points[b.points.len() - 1]
            .iter()
            .zip(queries)
            .map(|(&[x, y], q)| LabeledPoint { x, y, ..*q })
            .collect();
        start = end - 1;
    }
    Ok(out)
}

/// Wraps a segmenter and records every prompt it receives.
pub struct RecordingSegmenter<S> {
    pub inner: S,
    pub prompts: Vec<(usize, Vec<LabeledPoint>, Option<PriorHandle>)>,
}

impl<S> RecordingSegmenter<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            prompts: Vec::new(),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.len()
    }
}

impl<S: SegmenterBackend> SegmenterBackend for RecordingSegmenter<S> {
    fn capabilities(&self) -> SegmenterCapabilities {
        self.inner.capabilities()
    }

    fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation> {
        self.prompts.push((frame.index(), points.to_vec(), prior));
        self.inner.segment(frame, points, prior)
    }

    fn propose_masks(&mut self, frame: &Frame, max_proposals: usize) -> Result<Vec<BinaryMask>> {
        self.inner.propose_masks(frame, max_proposals)
    }
}
