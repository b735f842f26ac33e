//! Session-based annotation service over HTTP.
//!
//! A session holds a video, one point memory per object and the latest
//! predictions. Placing or removing a point re-prompts only the edited frame;
//! propagation tracks the points of one frame forward and runs in the
//! background. Every mutation is undoable and persisted to the state directory.
//! The routes are described in `docs/annotation-api.md`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backend::track_chunked;
use crate::config::PipelineConfig;
use crate::datasets::labelmap::{encode_indexed_png, encode_mask_png};
use crate::datasets::{self, compose_labels, frame_name, Backends};
use crate::error::{Error, Result};
use crate::interaction::{MemoryEvent, PointId, PointMemory};
use crate::mask::BinaryMask;
use crate::model::{Frame, Label, ObjectId};
use crate::pipeline::two_pass_segment;
use crate::synthetic::{self, SceneSpec};
use crate::video::VideoSequence;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 64 << 20;
const SESSION_FILE: &str = "session.json";
const FRAMES_DIR: &str = "frames";

/// Where a session's tracker and segmenter come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendBinding {
    /// Oracle backends of a synthetic scene.
    Scene { spec: SceneSpec },
    Remote { address: String },
    None,
}

impl BackendBinding {
    fn open(&self) -> Result<Backends> {
        match self {
            BackendBinding::Scene { spec } => Ok((
                Box::new(synthetic::OracleTracker::new(spec)?),
                Box::new(synthetic::OracleSegmenter::new(spec)?),
            )),
            BackendBinding::Remote { address } => datasets::BackendSource::Remote {
                address: address.clone(),
            }
            .open(""),
            BackendBinding::None => Err(Error::UnsupportedCapability("a session without backends".into())),
        }
    }
}

/// The undoable part of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Snapshot {
    pub memories: BTreeMap<ObjectId, PointMemory>,
    pub predictions: BTreeMap<ObjectId, Vec<Option<BinaryMask>>>,
    /// Session-wide point id to the owning object and its id in that memory.
    pub point_index: BTreeMap<u64, (ObjectId, PointId)>,
    pub next_point: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub name: String,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub config: PipelineConfig,
    pub binding: BackendBinding,
    pub current: Snapshot,
    pub undo: Vec<Snapshot>,
    pub redo: Vec<Snapshot>,
}

impl SessionState {
    fn commit(&mut self, next: Snapshot) {
        let prev = std::mem::replace(&mut self.current, next);
        self.undo.push(prev);
        self.redo.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationState {
    Idle,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub state: PropagationState,
    pub from: Option<usize>,
    pub objects: Vec<ObjectId>,
    pub completed_frames: usize,
    pub total_frames: usize,
    pub error: Option<String>,
}

impl Default for Progress {
    fn default() -> Self {
        Self {
            state: PropagationState::Idle,
            from: None,
            objects: Vec::new(),
            completed_frames: 0,
            total_frames: 0,
            error: None,
        }
    }
}

pub struct Session {
    frames: Arc<Vec<Frame>>,
    state: Mutex<SessionState>,
    progress: Mutex<Progress>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Session {
    pub fn state(&self) -> SessionState {
        lock(&self.state).clone()
    }

    pub fn progress(&self) -> Progress {
        lock(&self.progress).clone()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    fn ensure_idle(&self) -> Result<()> {
        if lock(&self.progress).state == PropagationState::Running {
            return Err(Error::Precondition("a propagation is running".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub state_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            state_dir: None,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }
}

pub struct Service {
    options: ServiceOptions,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub root: PathBuf,
    pub sequence: String,
}

/// Body of `POST /sessions`. Exactly one of `frames`, `scene` and `dataset`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub name: Option<String>,
    /// Base64-encoded PNG or JPEG images.
    pub frames: Option<Vec<String>>,
    pub scene: Option<SceneSpec>,
    pub dataset: Option<DatasetRef>,
    /// `builtin` (dataset scenes only) or a sidecar address.
    pub backend: Option<String>,
    pub config: Option<PipelineConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddPoint {
    pub frame: usize,
    pub x: f32,
    pub y: f32,
    pub label: Label,
    pub object: ObjectId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preview {
    pub frame: usize,
    pub object: ObjectId,
    pub area: usize,
    /// Indexed PNG of the mask, base64.
    pub png: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointEdit {
    pub point_id: u64,
    pub preview: Preview,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointInfo {
    pub point_id: u64,
    pub object: ObjectId,
    pub label: Label,
    pub origin: usize,
    pub end: usize,
    pub x: f32,
    pub y: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub name: String,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub points: Vec<PointInfo>,
    pub predicted_frames: Vec<usize>,
    pub undo_depth: usize,
    pub redo_depth: usize,
    pub propagation: Progress,
}

fn summary(state: &SessionState, progress: Progress) -> SessionSummary {
    let mut points = Vec::new();
    for (&pid, &(obj, local)) in &state.current.point_index {
        if let Some(p) = state.current.memories.get(&obj).and_then(|m| m.get(local)) {
            points.push(PointInfo {
                point_id: pid,
                object: obj,
                label: p.label,
                origin: p.origin,
                end: p.end,
                x: p.track[0].0[0],
                y: p.track[0].0[1],
            });
        }
    }
    let predicted_frames = (0..state.num_frames)
        .filter(|&t| state.current.predictions.values().any(|v| matches!(v.get(t), Some(Some(_)))))
        .collect();
    SessionSummary {
        id: state.id.clone(),
        name: state.name.clone(),
        num_frames: state.num_frames,
        width: state.width,
        height: state.height,
        points,
        predicted_frames,
        undo_depth: state.undo.len(),
        redo_depth: state.redo.len(),
        propagation: progress,
    }
}

fn decode_frames(encoded: &[String]) -> Result<Vec<Frame>> {
    encoded
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(s)
                .map_err(|e| Error::invalid(format!("frame {i}: {e}")))?;
            let img = image::load_from_memory(&bytes)
                .map_err(|e| Error::invalid(format!("frame {i}: {e}")))?
                .to_rgb8();
            Frame::from_image(i, img)
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn preview_of(frame: usize, object: ObjectId, mask: &BinaryMask) -> Result<Preview> {
    let label = u8::try_from(object.0).unwrap_or(u8::MAX);
    Ok(Preview {
        frame,
        object,
        area: mask.area(),
        png: base64::engine::general_purpose::STANDARD.encode(encode_mask_png(mask, label)?),
    })
}

impl Service {
    /// Starts a service, reloading every session persisted in the state
    /// directory.
    pub fn open(options: ServiceOptions) -> Result<Arc<Self>> {
        let svc = Service {
            options,
            sessions: Mutex::new(HashMap::new()),
        };
        if let Some(dir) = &svc.options.state_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let p = entry?.path();
                if p.join(SESSION_FILE).is_file() {
                    let s = svc.load_session(&p)?;
                    let id = lock(&s.state).id.clone();
                    lock(&svc.sessions).insert(id, Arc::new(s));
                }
            }
        }
        Ok(Arc::new(svc))
    }

    fn load_session(&self, dir: &Path) -> Result<Session> {
        let state: SessionState = serde_json::from_slice(&fs::read(dir.join(SESSION_FILE))?)?;
        let frames = (0..state.num_frames)
            .map(|t| datasets::read_frame(&dir.join(FRAMES_DIR).join(format!("{}.png", frame_name(t))), t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Session {
            frames: Arc::new(frames),
            state: Mutex::new(state),
            progress: Mutex::new(Progress::default()),
        })
    }

    fn session_dir(&self, id: &str) -> Option<PathBuf> {
        self.options.state_dir.as_ref().map(|d| d.join(id))
    }

    fn persist(&self, state: &SessionState) -> Result<()> {
        if let Some(dir) = self.session_dir(&state.id) {
            fs::create_dir_all(&dir)?;
            write_atomic(&dir.join(SESSION_FILE), &serde_json::to_vec(state)?)?;
        }
        Ok(())
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut v: Vec<String> = lock(&self.sessions).keys().cloned().collect();
        v.sort();
        v
    }

    pub fn create_session(&self, req: CreateSession) -> Result<String> {
        let config = req.config.unwrap_or_default();
        config.validate()?;
        let sources = [req.frames.is_some(), req.scene.is_some(), req.dataset.is_some()];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::invalid("give exactly one of frames, scene and dataset"));
        }
        let remote = |b: &Option<String>| match b.as_deref() {
            Some("builtin") => Err(Error::invalid("builtin backends need a synthetic scene")),
            Some(a) => Ok(BackendBinding::Remote { address: a.to_string() }),
            None => Ok(BackendBinding::None),
        };
        let (name, frames, binding) = if let Some(encoded) = &req.frames {
            let frames = decode_frames(encoded)?;
            (req.name.clone().unwrap_or_else(|| "upload".into()), frames, remote(&req.backend)?)
        } else if let Some(spec) = req.scene {
            if req.backend.as_deref().is_some_and(|b| b != "builtin") {
                return Err(Error::invalid("a scene session uses the builtin backends"));
            }
            let seq = synthetic::render(&spec)?;
            (req.name.clone().unwrap_or_else(|| spec.name.clone()), seq.frames, BackendBinding::Scene { spec })
        } else {
            let d = req.dataset.expect("checked above");
            let dp = datasets::load_davis_sequence(&d.root, &d.sequence)?;
            let binding = match req.backend.as_deref() {
                Some("builtin") => BackendBinding::Scene {
                    spec: datasets::load_scene_spec(&d.root, &d.sequence)?,
                },
                _ => remote(&req.backend)?,
            };
            (req.name.clone().unwrap_or(d.sequence), dp.sequence.frames, binding)
        };
        let seq = VideoSequence::new(name.clone(), frames)?;
        let id = format!("{:016x}", rand::random::<u64>());
        let state = SessionState {
            id: id.clone(),
            name,
            num_frames: seq.len(),
            width: seq.width(),
            height: seq.height(),
            config,
            binding,
            current: Snapshot {
                next_point: 1,
                ..Snapshot::default()
            },
            undo: Vec::new(),
            redo: Vec::new(),
        };
        if let Some(dir) = self.session_dir(&id) {
            let fdir = dir.join(FRAMES_DIR);
            fs::create_dir_all(&fdir)?;
            for f in &seq.frames {
                f.to_image()
                    .save(fdir.join(format!("{}.png", frame_name(f.index()))))
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
        }
        self.persist(&state)?;
        let session = Session {
            frames: Arc::new(seq.frames),
            state: Mutex::new(state),
            progress: Mutex::new(Progress::default()),
        };
        lock(&self.sessions).insert(id.clone(), Arc::new(session));
        Ok(id)
    }

    /// Re-prompts one frame of one object from the snapshot's memory.
    fn preview(
        session: &Session,
        state: &SessionState,
        snap: &mut Snapshot,
        frame: usize,
        object: ObjectId,
    ) -> Result<Preview> {
        let f = &session.frames[frame];
        let points: Vec<_> = snap
            .memories
            .get(&object)
            .map(|m| {
                m.visible_at(frame, state.config.occlusion_threshold, f.width(), f.height())
                    .into_iter()
                    .map(|p| p.1)
                    .collect()
            })
            .unwrap_or_default();
        let mask = if points.iter().any(|p| p.is_positive()) {
            let (_, mut segmenter) = state.binding.open()?;
            two_pass_segment(&mut segmenter, f, &points, &state.config)?.mask
        } else {
            BinaryMask::new(f.width(), f.height())
        };
        let slot = snap
            .predictions
            .entry(object)
            .or_insert_with(|| vec![None; state.num_frames]);
        slot[frame] = Some(mask.clone());
        preview_of(frame, object, &mask)
    }

    pub fn add_point(&self, id: &str, req: AddPoint) -> Result<PointEdit> {
        let session = self.session(id)?;
        let mut state = lock(&session.state);
        session.ensure_idle()?;
        if req.frame >= state.num_frames {
            return Err(Error::invalid(format!("frame {} outside the video", req.frame)));
        }
        let inside = req.x.is_finite()
            && req.y.is_finite()
            && req.x >= 0.0
            && req.y >= 0.0
            && req.x < state.width as f32
            && req.y < state.height as f32;
        if !inside {
            return Err(Error::invalid(format!("point ({}, {}) outside the frame", req.x, req.y)));
        }
        if req.object.0 == 0 || req.object.0 > u16::MAX as u32 {
            return Err(Error::invalid("object ids run from 1 to 65535"));
        }
        let mut snap = state.current.clone();
        let n = state.num_frames;
        let memory = snap
            .memories
            .entry(req.object)
            .or_insert_with(|| PointMemory::new(req.object, n));
        let local = memory.add_to_frame(req.frame, req.label, req.x, req.y)?;
        let pid = snap.next_point;
        snap.next_point += 1;
        snap.point_index.insert(pid, (req.object, local));
        let preview = Self::preview(&session, &state, &mut snap, req.frame, req.object)?;
        state.commit(snap);
        self.persist(&state)?;
        Ok(PointEdit { point_id: pid, preview })
    }

    /// Removes a point from `frame` (default: the frame it was placed on) and
    /// everything after.
    pub fn remove_point(&self, id: &str, pid: u64, frame: Option<usize>) -> Result<PointEdit> {
        let session = self.session(id)?;
        let mut state = lock(&session.state);
        session.ensure_idle()?;
        let mut snap = state.current.clone();
        let &(object, local) = snap
            .point_index
            .get(&pid)
            .ok_or_else(|| Error::NotFound(format!("point {pid}")))?;
        let memory = snap.memories.get_mut(&object).expect("indexed point has a memory");
        let origin = memory.get(local).expect("indexed point exists").origin;
        let frame = frame.unwrap_or(origin);
        memory.remove_point_and_future(local, frame)?;
        let preview = Self::preview(&session, &state, &mut snap, frame, object)?;
        state.commit(snap);
        self.persist(&state)?;
        Ok(PointEdit { point_id: pid, preview })
    }

    pub fn undo(&self, id: &str) -> Result<SessionSummary> {
        self.step(id, true)
    }

    pub fn redo(&self, id: &str) -> Result<SessionSummary> {
        self.step(id, false)
    }

    fn step(&self, id: &str, back: bool) -> Result<SessionSummary> {
        let session = self.session(id)?;
        let mut state = lock(&session.state);
        session.ensure_idle()?;
        let st = &mut *state;
        let (from, to) = if back {
            (&mut st.undo, &mut st.redo)
        } else {
            (&mut st.redo, &mut st.undo)
        };
        let snap = from
            .pop()
            .ok_or_else(|| Error::Precondition(format!("nothing to {}", if back { "undo" } else { "redo" })))?;
        to.push(std::mem::replace(&mut st.current, snap));
        self.persist(&state)?;
        Ok(summary(&state, session.progress()))
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        let session = self.session(id)?;
        let state = lock(&session.state);
        Ok(summary(&state, session.progress()))
    }

    /// Starts tracking the visible points of `from` to the end of the video and
    /// re-prompting every frame from `from` on. Returns immediately; the
    /// result is committed when the background job finishes.
    pub fn start_propagation(self: &Arc<Self>, id: &str, from: usize) -> Result<Progress> {
        let session = self.session(id)?;
        let (state, objects) = {
            let state = lock(&session.state);
            let mut progress = lock(&session.progress);
            if progress.state == PropagationState::Running {
                return Err(Error::Precondition("a propagation is already running".into()));
            }
            if from >= state.num_frames {
                return Err(Error::invalid(format!("frame {from} outside the video")));
            }
            let (w, h) = (state.width, state.height);
            let objects: Vec<ObjectId> = state
                .current
                .memories
                .iter()
                .filter(|(_, m)| {
                    m.visible_at(from, state.config.occlusion_threshold, w, h)
                        .iter()
                        .any(|p| p.1.is_positive())
                })
                .map(|(&o, _)| o)
                .collect();
            if objects.is_empty() {
                return Err(Error::Precondition(format!("no positive point on frame {from}")));
            }
            *progress = Progress {
                state: PropagationState::Running,
                from: Some(from),
                objects: objects.clone(),
                completed_frames: 0,
                total_frames: objects.len() * (state.num_frames - from),
                error: None,
            };
            (state.clone(), objects)
        };
        let svc = Arc::clone(self);
        let session2 = Arc::clone(&session);
        std::thread::spawn(move || {
            let result = propagate(&session2, &state, &objects, from).and_then(|snap| {
                let mut st = lock(&session2.state);
                st.commit(snap);
                svc.persist(&st)
            });
            let mut progress = lock(&session2.progress);
            match result {
                Ok(()) => progress.state = PropagationState::Done,
                Err(e) => {
                    log::warn!("propagation failed: {e}");
                    progress.state = PropagationState::Failed;
                    progress.error = Some(e.to_string());
                }
            }
        });
        Ok(session.progress())
    }

    /// Blocks until the session's propagation is no longer running.
    pub fn wait_propagation(&self, id: &str) -> Result<Progress> {
        let session = self.session(id)?;
        loop {
            let p = session.progress();
            if p.state != PropagationState::Running {
                return Ok(p);
            }
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
    }

    /// Indexed PNG of all objects, or a single object's mask.
    pub fn mask_png(&self, id: &str, frame: usize, object: Option<ObjectId>) -> Result<Vec<u8>> {
        let session = self.session(id)?;
        let state = lock(&session.state);
        if frame >= state.num_frames {
            return Err(Error::NotFound(format!("frame {frame}")));
        }
        let preds = &state.current.predictions;
        match object {
            Some(o) => {
                let mask = preds
                    .get(&o)
                    .and_then(|v| v[frame].clone())
                    .ok_or_else(|| Error::NotFound(format!("no mask for object {o} on frame {frame}")))?;
                encode_mask_png(&mask, u8::try_from(o.0).unwrap_or(u8::MAX))
            }
            None => {
                if !preds.values().any(|v| v[frame].is_some()) {
                    return Err(Error::NotFound(format!("no mask on frame {frame}")));
                }
                let map = compose_labels(preds, frame, state.width, state.height)?;
                let mut out = Vec::new();
                encode_indexed_png(&map, &mut out)?;
                Ok(out)
            }
        }
    }

    /// Tar archive in DAVIS layout plus `points.json` with every memory event.
    pub fn export(&self, id: &str) -> Result<Vec<u8>> {
        let session = self.session(id)?;
        let state = lock(&session.state).clone();
        let preds = &state.current.predictions;
        if !preds.values().flatten().any(|m| m.is_some()) {
            return Err(Error::Precondition("nothing to export".into()));
        }
        let mut tar = tar::Builder::new(Vec::new());
        let mut append = |path: String, data: &[u8]| -> Result<()> {
            let mut h = tar::Header::new_gnu();
            h.set_size(data.len() as u64);
            h.set_mode(0o644);
            h.set_cksum();
            tar.append_data(&mut h, path, Cursor::new(data))?;
            Ok(())
        };
        for (t, f) in session.frames.iter().enumerate() {
            let mut img = Vec::new();
            f.to_image()
                .write_to(&mut Cursor::new(&mut img), image::ImageFormat::Png)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            append(format!("JPEGImages/{}/{}.png", state.name, frame_name(t)), &img)?;
            let map = compose_labels(preds, t, state.width, state.height)?;
            let mut png = Vec::new();
            encode_indexed_png(&map, &mut png)?;
            append(format!("Annotations/{}/{}.png", state.name, frame_name(t)), &png)?;
        }
        let points = PointsExport::new(&state);
        append("points.json".into(), &serde_json::to_vec_pretty(&points)?)?;
        Ok(tar.into_inner()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointsExport {
    pub sequence: String,
    pub events: BTreeMap<ObjectId, Vec<MemoryEvent>>,
    pub point_index: BTreeMap<u64, (ObjectId, PointId)>,
}

impl PointsExport {
    fn new(state: &SessionState) -> Self {
        Self {
            sequence: state.name.clone(),
            events: state
                .current
                .memories
                .iter()
                .map(|(&o, m)| (o, m.events.clone()))
                .collect(),
            point_index: state.current.point_index.clone(),
        }
    }
}

/// Background half of propagation; works on a copy of the session state.
fn propagate(session: &Session, state: &SessionState, objects: &[ObjectId], from: usize) -> Result<Snapshot> {
    let (mut tracker, mut segmenter) = state.binding.open()?;
    let frames = &session.frames;
    let cfg = &state.config;
    let mut snap = state.current.clone();
    for &object in objects {
        let memory = snap.memories.get_mut(&object).expect("object has a memory");
        let f = &frames[from];
        let visible = memory.visible_at(from, cfg.occlusion_threshold, f.width(), f.height());
        if from + 1 < frames.len() {
            let queries: Vec<_> = visible.iter().map(|p| p.1).collect();
            let bundle = track_chunked(&mut tracker, &queries, &frames[from..])?;
            for (k, (pid, _)) in visible.iter().enumerate() {
                let track: Vec<([f32; 2], f32)> = bundle
                    .points
                    .iter()
                    .zip(&bundle.occlusion)
                    .map(|(p, o)| (p[k], o[k]))
                    .collect();
                memory.retrack(*pid, from, &track)?;
            }
        }
        let mut masks = Vec::with_capacity(frames.len() - from);
        for f in &frames[from..] {
            let points: Vec<_> = memory
                .visible_at(f.index(), cfg.occlusion_threshold, f.width(), f.height())
                .into_iter()
                .map(|p| p.1)
                .collect();
            masks.push(two_pass_segment(&mut segmenter, f, &points, cfg)?.mask);
            lock(&session.progress).completed_frames += 1;
        }
        let slot = snap
            .predictions
            .entry(object)
            .or_insert_with(|| vec![None; frames.len()]);
        for (t, m) in (from..).zip(masks) {
            slot[t] = Some(m);
        }
    }
    Ok(snap)
}

// HTTP layer.

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    limit: Option<usize>,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Precondition(_) => StatusCode::CONFLICT,
            Error::UnsupportedCapability(_) => StatusCode::NOT_IMPLEMENTED,
            Error::Transport(_) | Error::Protocol(_) => StatusCode::BAD_GATEWAY,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
            limit: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::json!({ "error": self.code, "message": self.message });
        if let Some(l) = self.limit {
            body["limit"] = l.into();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn body_json<T: serde::de::DeserializeOwned>(body: std::result::Result<Bytes, BytesRejection>, limit: usize) -> ApiResult<T> {
    let bytes = body.map_err(|r| {
        let too_large = r.status() == StatusCode::PAYLOAD_TOO_LARGE;
        ApiError {
            status: r.status(),
            code: if too_large { "payload_too_large" } else { "invalid_input" },
            message: if too_large {
                format!("request body exceeds the {limit}-byte upload limit")
            } else {
                r.body_text()
            },
            limit: too_large.then_some(limit),
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::from(e).into())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))?
        .map_err(ApiError::from)
}

async fn create(State(svc): State<Arc<Service>>, body: std::result::Result<Bytes, BytesRejection>) -> ApiResult<Response> {
    let req: CreateSession = body_json(body, svc.options.max_upload_bytes)?;
    let s = Arc::clone(&svc);
    let id = blocking(move || s.create_session(req)).await?;
    let summary = svc.summary(&id)?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn list(State(svc): State<Arc<Service>>) -> Json<Vec<String>> {
    Json(svc.session_ids())
}

async fn get_session(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    Ok(Json(svc.summary(&id)?))
}

async fn add_point(
    State(svc): State<Arc<Service>>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let req: AddPoint = body_json(body, svc.options.max_upload_bytes)?;
    let edit = blocking(move || svc.add_point(&id, req)).await?;
    Ok((StatusCode::CREATED, Json(edit)).into_response())
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    frame: Option<usize>,
}

async fn remove_point(
    State(svc): State<Arc<Service>>,
    UrlPath((id, pid)): UrlPath<(String, u64)>,
    Query(q): Query<FrameQuery>,
) -> ApiResult<Json<PointEdit>> {
    Ok(Json(blocking(move || svc.remove_point(&id, pid, q.frame)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropagateRequest {
    #[serde(default)]
    from: usize,
}

async fn propagate_start(
    State(svc): State<Arc<Service>>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let bytes_empty = matches!(&body, Ok(b) if b.is_empty());
    let req: PropagateRequest = if bytes_empty {
        PropagateRequest { from: 0 }
    } else {
        body_json(body, svc.options.max_upload_bytes)?
    };
    let p = svc.start_propagation(&id, req.from)?;
    Ok((StatusCode::ACCEPTED, Json(p)).into_response())
}

async fn propagate_status(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Progress>> {
    Ok(Json(svc.session(&id)?.progress()))
}

#[derive(Debug, Deserialize)]
struct ObjectQuery {
    object: Option<u32>,
}

async fn mask(
    State(svc): State<Arc<Service>>,
    UrlPath((id, frame)): UrlPath<(String, usize)>,
    Query(q): Query<ObjectQuery>,
) -> ApiResult<Response> {
    let png = svc.mask_png(&id, frame, q.object.map(ObjectId))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn export(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let name = id.clone();
    let archive = blocking(move || svc.export(&id)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-tar".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{name}.tar\"")),
        ],
        archive,
    )
        .into_response())
}

async fn undo(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    Ok(Json(blocking(move || svc.undo(&id)).await?))
}

async fn redo(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    Ok(Json(blocking(move || svc.redo(&id)).await?))
}

pub fn router(svc: Arc<Service>) -> Router {
    let limit = svc.options.max_upload_bytes;
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/points", post(add_point))
        .route("/sessions/{id}/points/{pid}", delete(remove_point))
        .route("/sessions/{id}/propagate", post(propagate_start).get(propagate_status))
        .route("/sessions/{id}/masks/{frame}", get(mask))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/redo", post(redo))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(svc)
}

/// Serves until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, svc: Arc<Service>) -> Result<()> {
    axum::serve(listener, router(svc)).await?;
    Ok(())
}
