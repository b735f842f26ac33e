//! DAVIS-style dataset I/O, the MOTS-to-VOS converter, and the evaluation
//! drivers built on the pipeline.

pub mod labelmap;
pub mod mots;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{connect_segmenter, connect_tracker, SegmenterBackend, TrackerBackend};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::metrics::{self, DatasetScore, ObjectGt, SequenceScore};
use crate::model::{longest_side_dims, resize_longest_side, Frame, ObjectId};
use crate::pipeline::{self, sample_query_points, PipelineRun, Seed};
use crate::synthetic::{self, SceneSpec};
use crate::video::VideoSequence;

pub use labelmap::{read_indexed_png, write_indexed_png, LabelMap};
pub use mots::{convert_mots, convert_mots_dir, MotsConversion, MotsTrack, MAX_OBJECTS_PER_VIDEO};

/// One loaded sequence with the file stems of its frames.
#[derive(Debug, Clone)]
pub struct VosDatapoint {
    pub sequence: VideoSequence,
    pub frame_names: Vec<String>,
}

impl VosDatapoint {
    pub fn first_appearances(&self) -> BTreeMap<ObjectId, usize> {
        self.sequence
            .gt
            .keys()
            .filter_map(|&id| Some((id, self.sequence.first_appearance(id)?)))
            .collect()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.sort();
    Ok(v)
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("jpg" | "jpeg" | "png")
    )
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Frame image files of a directory, ordered by numeric stem where possible.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| is_image(p)).collect();
    files.sort_by_key(|p| (stem(p).parse::<u64>().ok(), stem(p)));
    Ok(files)
}

pub fn read_frame(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|e| Error::dataset(format!("{}: {e}", path.display())))?
        .to_rgb8();
    Frame::from_image(index, img)
}

/// Loads one sequence from `JPEGImages/<name>` and, when present,
/// `Annotations/<name>`.
pub fn load_davis_sequence(root: &Path, name: &str) -> Result<VosDatapoint> {
    let files = frame_files(&root.join("JPEGImages").join(name))?;
    if files.is_empty() {
        return Err(Error::dataset(format!("sequence {name} has no frames")));
    }
    let frames = files
        .par_iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect::<Result<Vec<_>>>()?;
    let frame_names: Vec<String> = files.iter().map(|p| stem(p)).collect();
    let mut sequence = VideoSequence::new(name, frames)
        .map_err(|e| Error::dataset(format!("{name}: {e}")))?;
    let ann_dir = root.join("Annotations").join(name);
    if ann_dir.is_dir() {
        let (w, h) = (sequence.width(), sequence.height());
        let maps = frame_names
            .par_iter()
            .map(|n| {
                let p = ann_dir.join(format!("{n}.png"));
                if !p.exists() {
                    return Ok(None);
                }
                let m = read_indexed_png(&p)?;
                if m.width != w || m.height != h {
                    return Err(Error::dataset(format!(
                        "{}: annotation size differs from its frame",
                        p.display()
                    )));
                }
                Ok(Some(m))
            })
            .collect::<Result<Vec<_>>>()?;
        sequence.gt = gt_from_label_maps(&maps);
    }
    Ok(VosDatapoint {
        sequence,
        frame_names,
    })
}

/// Working copy with the longest side at `target`: frames are resampled
/// bilinearly and ground truth by nearest neighbour.
pub fn resize_sequence(seq: &VideoSequence, target: u32) -> Result<VideoSequence> {
    let (w, h) = longest_side_dims(seq.width(), seq.height(), target)?;
    let frames = seq
        .frames
        .par_iter()
        .map(|f| resize_longest_side(f, target).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    let mut out = VideoSequence::new(seq.name.clone(), frames)?;
    out.gt = resize_masks(&seq.gt, w, h);
    Ok(out)
}

/// Nearest-neighbour resampling of every mask, e.g. predictions back to the
/// original resolution.
pub fn resize_masks(
    masks: &BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
    width: u32,
    height: u32,
) -> BTreeMap<ObjectId, Vec<Option<BinaryMask>>> {
    masks
        .iter()
        .map(|(&id, v)| {
            let v = v.iter().map(|m| m.as_ref().map(|m| m.resize_nearest(width, height))).collect();
            (id, v)
        })
        .collect()
}

/// Per-object masks from per-frame label maps; an object exists when its label
/// occurs anywhere. Frames without a map stay unannotated.
pub fn gt_from_label_maps(maps: &[Option<LabelMap>]) -> BTreeMap<ObjectId, Vec<Option<BinaryMask>>> {
    let mut ids: Vec<u16> = maps.iter().flatten().flat_map(|m| m.present()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|l| {
            let masks = maps.iter().map(|m| m.as_ref().map(|m| m.mask_of(l))).collect();
            (ObjectId(l as u32), masks)
        })
        .collect()
}

/// Loads every sequence under `root/JPEGImages`.
pub fn load_davis_dir(root: &Path) -> Result<Vec<VosDatapoint>> {
    let img_root = root.join("JPEGImages");
    if !img_root.is_dir() {
        return Err(Error::dataset(format!("{} has no JPEGImages directory", root.display())));
    }
    let names: Vec<String> = sorted_entries(&img_root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    if names.is_empty() {
        return Err(Error::dataset("dataset contains no sequences"));
    }
    names.par_iter().map(|n| load_davis_sequence(root, n)).collect()
}

/// Label map of one frame; objects painted in ascending id order, so the
/// higher id wins where masks overlap.
pub fn compose_labels(
    masks: &BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
    t: usize,
    width: u32,
    height: u32,
) -> Result<LabelMap> {
    let mut map = LabelMap::new(width, height);
    for (id, v) in masks {
        if let Some(Some(m)) = v.get(t) {
            let l = u16::try_from(id.0).map_err(|_| Error::invalid("object id too large"))?;
            map.paint(l, m)?;
        }
    }
    Ok(map)
}

/// Writes `<dir>/<name>.png` for every frame.
pub fn write_masks(
    dir: &Path,
    frame_names: &[String],
    masks: &BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
    width: u32,
    height: u32,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, name) in frame_names.iter().enumerate() {
        let map = compose_labels(masks, t, width, height)?;
        write_indexed_png(&map, &dir.join(format!("{name}.png")))?;
    }
    Ok(())
}

pub fn frame_name(t: usize) -> String {
    format!("{t:05}")
}

/// Writes a sequence in DAVIS layout with lossless PNG frames.
pub fn write_davis_sequence(root: &Path, seq: &VideoSequence) -> Result<()> {
    let img_dir = root.join("JPEGImages").join(&seq.name);
    fs::create_dir_all(&img_dir)?;
    seq.frames.par_iter().try_for_each(|f| {
        f.to_image()
            .save(img_dir.join(format!("{}.png", frame_name(f.index()))))
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    })?;
    let names: Vec<String> = (0..seq.len()).map(frame_name).collect();
    if !seq.gt.is_empty() {
        write_masks(
            &root.join("Annotations").join(&seq.name),
            &names,
            &seq.gt,
            seq.width(),
            seq.height(),
        )?;
    }
    Ok(())
}

pub const SCENES_DIR: &str = "scenes";

/// Renders scenes into a DAVIS-layout dataset and stores each spec next to it
/// so the builtin oracle backends can be rebuilt from the dataset alone.
pub fn write_scene_dataset(root: &Path, specs: &[SceneSpec]) -> Result<()> {
    fs::create_dir_all(root.join(SCENES_DIR))?;
    for spec in specs {
        let seq = synthetic::render(spec)?;
        write_davis_sequence(root, &seq)?;
        fs::write(
            root.join(SCENES_DIR).join(format!("{}.json", spec.name)),
            serde_json::to_vec_pretty(spec)?,
        )?;
    }
    Ok(())
}

pub fn load_scene_spec(root: &Path, name: &str) -> Result<SceneSpec> {
    let p = root.join(SCENES_DIR).join(format!("{name}.json"));
    let bytes = fs::read(&p).map_err(|e| Error::NotFound(format!("{}: {e}", p.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub type Backends = (Box<dyn TrackerBackend>, Box<dyn SegmenterBackend>);

/// Where the tracker and segmenter of a run come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSource {
    /// Oracle backends rebuilt from the dataset's `scenes/<seq>.json`.
    Builtin { root: PathBuf },
    /// A sidecar address; the tracker and the segmenter get one connection each.
    Remote { address: String },
}

impl BackendSource {
    pub fn parse(spec: &str, dataset_root: &Path) -> Self {
        if spec == "builtin" {
            BackendSource::Builtin {
                root: dataset_root.to_path_buf(),
            }
        } else {
            BackendSource::Remote {
                address: spec.to_string(),
            }
        }
    }

    pub fn open(&self, sequence: &str) -> Result<Backends> {
        match self {
            BackendSource::Builtin { root } => {
                let spec = load_scene_spec(root, sequence)?;
                Ok((
                    Box::new(synthetic::OracleTracker::new(&spec)?),
                    Box::new(synthetic::OracleSegmenter::new(&spec)?),
                ))
            }
            BackendSource::Remote { address } => Ok((
                Box::new(connect_tracker(address)?),
                Box::new(connect_segmenter(address)?),
            )),
        }
    }
}

/// Samples every object's query points from its first-appearance mask. Only
/// the points leave this function.
pub fn seed_points(seq: &VideoSequence, config: &PipelineConfig) -> Result<BTreeMap<ObjectId, Seed>> {
    seq.seeds()
        .into_iter()
        .map(|(id, (t, mask))| {
            let set = sample_query_points(id, &seq.frames[t], &mask, config)?;
            let points = set.positives.into_iter().chain(set.negatives).collect();
            Ok((id, Seed::Points { frame: t, points }))
        })
        .collect()
}

/// Semi-supervised protocol: each object is seeded by points sampled from its
/// first-appearance ground truth.
pub fn run_semisupervised<T, S>(
    seq: &VideoSequence,
    config: &PipelineConfig,
    tracker: &mut T,
    segmenter: &mut S,
) -> Result<PipelineRun>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    let seeds = seed_points(seq, config)?;
    pipeline::run(&seq.frames, &seeds, config, tracker, segmenter)
}

/// Instance protocol: mask proposals on frame 0 become objects `1..=k`; objects
/// appearing later are never picked up.
pub fn run_first_frame_proposals<T, S>(
    seq: &VideoSequence,
    max_proposals: usize,
    config: &PipelineConfig,
    tracker: &mut T,
    segmenter: &mut S,
) -> Result<PipelineRun>
where
    T: TrackerBackend + ?Sized,
    S: SegmenterBackend + ?Sized,
{
    if !segmenter.capabilities().proposes_masks {
        return Err(Error::UnsupportedCapability("mask proposals".into()));
    }
    let proposals = segmenter.propose_masks(&seq.frames[0], max_proposals)?;
    let mut seeds = BTreeMap::new();
    for (k, mask) in proposals.into_iter().enumerate() {
        let id = ObjectId(k as u32 + 1);
        let set = sample_query_points(id, &seq.frames[0], &mask, config)?;
        let points = set.positives.into_iter().chain(set.negatives).collect();
        seeds.insert(id, Seed::Points { frame: 0, points });
    }
    pipeline::run(&seq.frames, &seeds, config, tracker, segmenter)
}

/// Runs `f` on every sequence in parallel; one sequence failing does not stop
/// the others.
pub fn run_batch<'a, R: Send>(
    seqs: &'a [VosDatapoint],
    f: impl Fn(&'a VosDatapoint) -> Result<R> + Sync + Send,
) -> Vec<Result<R>> {
    seqs.par_iter().map(f).collect()
}

/// Scores one run against the sequence's ground truth.
pub fn score_run(seq: &VideoSequence, run: &PipelineRun) -> Result<SequenceScore> {
    metrics::score_sequence(&seq.name, &seq.metrics_gt(), &run.masks(), None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub sequence: String,
    pub diagnostics: Option<pipeline::Diagnostics>,
    pub error: Option<String>,
}

/// Loads predictions written as `<pred>/<seq>/<frame>.png`.
fn load_predictions(
    dir: &Path,
    frame_names: &[String],
) -> Result<BTreeMap<ObjectId, Vec<Option<BinaryMask>>>> {
    let maps: Vec<Option<LabelMap>> = frame_names
        .iter()
        .map(|n| {
            let p = dir.join(format!("{n}.png"));
            p.exists().then(|| read_indexed_png(&p)).transpose()
        })
        .collect::<Result<_>>()?;
    let mut out = gt_from_label_maps(&maps);
    // A present file with no pixels of an object is an empty prediction.
    for v in out.values_mut() {
        for (slot, m) in v.iter_mut().zip(&maps) {
            if let (None, Some(m)) = (&slot, m) {
                *slot = Some(BinaryMask::new(m.width, m.height));
            }
        }
    }
    Ok(out)
}

/// Scores a prediction directory against a DAVIS-layout ground truth root.
pub fn evaluate_dirs(pred: &Path, gt_root: &Path) -> Result<DatasetScore> {
    let ann_root = gt_root.join("Annotations");
    let ann_root = if ann_root.is_dir() { ann_root } else { gt_root.to_path_buf() };
    let seqs: Vec<PathBuf> = sorted_entries(&ann_root)?.into_iter().filter(|p| p.is_dir()).collect();
    if seqs.is_empty() {
        return Err(Error::dataset("ground truth contains no sequences"));
    }
    let scores = seqs
        .par_iter()
        .map(|dir| {
            let name = dir.file_name().unwrap().to_string_lossy().into_owned();
            let files: Vec<PathBuf> = frame_files(dir)?;
            let names: Vec<String> = files.iter().map(|p| stem(p)).collect();
            let maps = files
                .iter()
                .map(|p| read_indexed_png(p).map(Some))
                .collect::<Result<Vec<_>>>()?;
            let gt: BTreeMap<ObjectId, ObjectGt> = gt_from_label_maps(&maps)
                .into_iter()
                .filter_map(|(id, masks)| {
                    let first = masks.iter().position(|m| m.as_ref().is_some_and(|m| !m.is_empty()))?;
                    Some((
                        id,
                        ObjectGt {
                            first_frame: first,
                            masks,
                        },
                    ))
                })
                .collect();
            let pred = load_predictions(&pred.join(&name), &names)?;
            metrics::score_sequence(&name, &gt, &pred, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics::aggregate(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_objects_follow_present_labels() {
        let mut a = LabelMap::new(4, 4);
        a.labels[0] = 1;
        let mut b = LabelMap::new(4, 4);
        b.labels[5] = 2;
        b.labels[6] = 1;
        let gt = gt_from_label_maps(&[Some(a), None, Some(b)]);
        assert_eq!(gt.keys().copied().collect::<Vec<_>>(), vec![ObjectId(1), ObjectId(2)]);
        assert!(gt[&ObjectId(2)][0].as_ref().unwrap().is_empty());
        assert!(gt[&ObjectId(2)][1].is_none());
        assert_eq!(gt[&ObjectId(2)][2].as_ref().unwrap().area(), 1);
    }
}
