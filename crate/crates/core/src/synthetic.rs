//! Parametric videos with exact ground truth, and oracle tracker and segmenter
//! backends that read the geometry directly.
//!
//! A pixel belongs to a shape when its centre lies inside the shape's geometry.
//! Layers are the scene's objects followed by its occluders; higher depth draws
//! on top, equal depths draw in list order. An object's ground truth at frame t
//! is the set of pixels whose topmost layer is that object.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backend::{
    SegmenterBackend, SegmenterCapabilities, Segmentation, TrackerBackend, TrackerCapabilities,
};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, LabeledPoint, ObjectId, PriorHandle, TrajectoryBundle};
use crate::sampling::derive_seed as mix;
use crate::video::VideoSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Disk { radius: f64 },
    /// Axis-aligned, centred on the anchor; covers `[-w/2, w/2) x [-h/2, h/2)`.
    Rect { width: f64, height: f64 },
    /// Vertices relative to the anchor, even-odd fill.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Geometry {
    fn contains(&self, dx: f64, dy: f64) -> bool {
        match self {
            Geometry::Disk { radius } => dx * dx + dy * dy <= radius * radius,
            Geometry::Rect { width, height } => {
                dx >= -width / 2.0 && dx < width / 2.0 && dy >= -height / 2.0 && dy < height / 2.0
            }
            Geometry::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let [xi, yi] = vertices[i];
                    let [xj, yj] = vertices[(i + n - 1) % n];
                    if (yi > dy) != (yj > dy) && dx < (xj - xi) * (dy - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }

    fn area(&self) -> f64 {
        match self {
            Geometry::Disk { radius } => std::f64::consts::PI * radius * radius,
            Geometry::Rect { width, height } => width.max(0.0) * height.max(0.0),
            Geometry::Polygon { vertices } => {
                let n = vertices.len();
                let twice: f64 = (0..n)
                    .map(|i| {
                        let [x0, y0] = vertices[i];
                        let [x1, y1] = vertices[(i + 1) % n];
                        x0 * y1 - x1 * y0
                    })
                    .sum();
                (twice / 2.0).abs()
            }
        }
    }
}

/// Closed-form anchor position over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Constant {
        x: f64,
        y: f64,
    },
    /// Moves only while `start <= t <= stop`.
    Linear {
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop: Option<f64>,
    },
    /// `x + ax * sin(2 pi t / period + phase)`, likewise for y.
    Sinusoidal {
        x: f64,
        y: f64,
        ax: f64,
        ay: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Motion {
    pub fn position(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        match *self {
            Motion::Constant { x, y } => (x, y),
            Motion::Linear {
                x,
                y,
                vx,
                vy,
                start,
                stop,
            } => {
                let s = start.unwrap_or(0.0);
                let dt = t.min(stop.unwrap_or(f64::INFINITY)).max(s) - s;
                (x + vx * dt, y + vy * dt)
            }
            Motion::Sinusoidal {
                x,
                y,
                ax,
                ay,
                period,
                phase,
            } => {
                let a = std::f64::consts::TAU * t / period + phase;
                (x + ax * a.sin(), y + ay * a.sin())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub geometry: Geometry,
    pub color: [u8; 3],
    pub motion: Motion,
    #[serde(default)]
    pub depth: i32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub boundary_dilation_px: u32,
    pub point_jitter_sigma: f64,
    pub occlusion_flip_prob: f64,
    pub mask_flip_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Tracked objects; object ids are 1-based list positions.
    pub shapes: Vec<ShapeSpec>,
    /// Layers without ground truth of their own.
    #[serde(default)]
    pub occluders: Vec<ShapeSpec>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> [u8; 3] {
    [24, 24, 24]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::invalid("scene needs a non-empty canvas and at least one frame"));
        }
        if self.shapes.len() + self.occluders.len() >= u16::MAX as usize {
            return Err(Error::invalid("too many layers"));
        }
        for (i, s) in self.shapes.iter().chain(&self.occluders).enumerate() {
            let a = s.geometry.area();
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!("layer {i} has zero area")));
            }
            let (x, y) = s.motion.position(0);
            if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
                return Err(Error::invalid(format!("layer {i} starts outside the canvas")));
            }
            if let Motion::Sinusoidal { period, .. } = s.motion {
                if !(period > 0.0) {
                    return Err(Error::invalid("sinusoidal period must be positive"));
                }
            }
        }
        let n = &self.noise;
        let prob = 0.0..=1.0;
        if !(n.point_jitter_sigma >= 0.0)
            || !prob.contains(&n.occlusion_flip_prob)
            || !prob.contains(&n.mask_flip_prob)
        {
            return Err(Error::invalid("noise parameters out of range"));
        }
        Ok(())
    }

    pub fn object_ids(&self) -> Vec<ObjectId> {
        (1..=self.shapes.len() as u32).map(ObjectId).collect()
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

const NO_LAYER: u16 = u16::MAX;

/// Geometry queries over a validated scene.
#[derive(Debug)]
pub struct World {
    spec: SceneSpec,
    /// Layer indices bottom to top.
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl World {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let depths: Vec<i32> = spec.shapes.iter().chain(&spec.occluders).map(|s| s.depth).collect();
        let mut order: Vec<usize> = (0..depths.len()).collect();
        order.sort_by_key(|&i| depths[i]);
        let mut rank = vec![0; order.len()];
        for (r, &l) in order.iter().enumerate() {
            rank[l] = r;
        }
        Ok(Self { spec, order, rank })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    fn layer(&self, l: usize) -> &ShapeSpec {
        let n = self.spec.shapes.len();
        if l < n {
            &self.spec.shapes[l]
        } else {
            &self.spec.occluders[l - n]
        }
    }

    pub fn num_layers(&self) -> usize {
        self.order.len()
    }

    /// Object id of a layer, `None` for occluders.
    pub fn object_of(&self, l: usize) -> Option<ObjectId> {
        (l < self.spec.shapes.len()).then(|| ObjectId(l as u32 + 1))
    }

    fn layer_contains(&self, l: usize, t: usize, x: f64, y: f64) -> bool {
        let s = self.layer(l);
        let (ax, ay) = s.motion.position(t);
        s.geometry.contains(x - ax, y - ay)
    }

    fn in_canvas(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.spec.width as f64 && y < self.spec.height as f64
    }

    /// Topmost layer at a continuous position, if any.
    pub fn topmost(&self, t: usize, x: f64, y: f64) -> Option<usize> {
        if !self.in_canvas(x, y) {
            return None;
        }
        self.order
            .iter()
            .rev()
            .copied()
            .find(|&l| self.layer_contains(l, t, x, y))
    }

    /// Whether a layer drawn above `layer` covers the position. `None` stands
    /// for the background, which every layer covers.
    pub fn covered_above(&self, t: usize, layer: Option<usize>, x: f64, y: f64) -> bool {
        let min_rank = layer.map_or(0, |l| self.rank[l] + 1);
        self.order[min_rank..]
            .iter()
            .any(|&l| self.layer_contains(l, t, x, y))
    }

    /// Topmost layer of every pixel centre, `NO_LAYER` for background.
    fn label_map(&self, t: usize) -> Vec<u16> {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut out = vec![NO_LAYER; w as usize * h as usize];
        for &l in &self.order {
            let s = self.layer(l);
            let (ax, ay) = s.motion.position(t);
            for y in 0..h {
                let cy = y as f64 + 0.5 - ay;
                let row = y as usize * w as usize;
                for x in 0..w {
                    if s.geometry.contains(x as f64 + 0.5 - ax, cy) {
                        out[row + x as usize] = l as u16;
                    }
                }
            }
        }
        out
    }

    fn masks_from_labels(&self, labels: &[u16]) -> Vec<BinaryMask> {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut masks = vec![BinaryMask::new(w, h); self.num_layers()];
        for y in 0..h {
            for x in 0..w {
                let l = labels[(y * w + x) as usize];
                if l != NO_LAYER {
                    masks[l as usize].set(x, y, true);
                }
            }
        }
        masks
    }

    /// Visible mask of every layer at frame `t`.
    pub fn visible_masks(&self, t: usize) -> Vec<BinaryMask> {
        self.masks_from_labels(&self.label_map(t))
    }

    pub fn render_frame(&self, t: usize) -> Frame {
        let labels = self.label_map(t);
        let mut px = Vec::with_capacity(labels.len() * 3);
        for &l in &labels {
            let c = if l == NO_LAYER {
                self.spec.background
            } else {
                self.layer(l as usize).color
            };
            px.extend_from_slice(&c);
        }
        Frame::new(t, self.spec.width, self.spec.height, px).expect("canvas size is valid")
    }
}

/// Renders every frame and the per-object visible ground truth.
pub fn render(spec: &SceneSpec) -> Result<VideoSequence> {
    let world = World::new(spec.clone())?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt: BTreeMap<ObjectId, Vec<Option<BinaryMask>>> =
        spec.object_ids().into_iter().map(|id| (id, Vec::new())).collect();
    for t in 0..spec.frames {
        let labels = world.label_map(t);
        let masks = world.masks_from_labels(&labels);
        for (l, m) in masks.into_iter().enumerate().take(spec.shapes.len()) {
            gt.get_mut(&ObjectId(l as u32 + 1)).unwrap().push(Some(m));
        }
        frames.push(world.render_frame(t));
    }
    let mut seq = VideoSequence::new(spec.name.clone(), frames)?;
    seq.gt = gt;
    Ok(seq)
}

/// Stateless oracle tracker: each query follows the closed-form motion of the
/// topmost layer under it on the query frame.
pub struct OracleTracker {
    world: Arc<World>,
    window: Option<usize>,
}

impl OracleTracker {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        Ok(Self {
            world: Arc::new(World::new(spec.clone())?),
            window: None,
        })
    }

    /// Advertises a window size and rejects longer requests, like a chunked
    /// tracker would.
    pub fn windowed(mut self, window: usize) -> Self {
        self.window = Some(window.max(2));
        self
    }

    fn track_point(&self, q: &LabeledPoint, t0: usize, t: usize) -> ([f32; 2], f32) {
        let w = &self.world;
        let noise = w.spec.noise;
        let (qx, qy) = (q.x as f64, q.y as f64);
        if t == t0 {
            return ([q.x, q.y], 0.0);
        }
        let owner = w.topmost(t0, qx, qy);
        let (x, y) = match owner {
            Some(l) => {
                let m = &w.layer(l).motion;
                let (x0, y0) = m.position(t0);
                let (x1, y1) = m.position(t);
                (qx + x1 - x0, qy + y1 - y0)
            }
            None => (qx, qy),
        };
        let occluded = !w.in_canvas(x, y) || w.covered_above(t, owner, x, y);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
            w.spec.seed,
            t0 as u64,
            t as u64,
            q.x.to_bits() as u64,
            q.y.to_bits() as u64,
            q.object.0 as u64,
            q.is_positive() as u64,
        ]));
        let (mut jx, mut jy) = (0.0, 0.0);
        if noise.point_jitter_sigma > 0.0 {
            let n = Normal::new(0.0, noise.point_jitter_sigma).expect("sigma is finite");
            jx = n.sample(&mut rng);
            jy = n.sample(&mut rng);
        }
        let flip = noise.occlusion_flip_prob > 0.0 && rng.gen_bool(noise.occlusion_flip_prob);
        let occ = if occluded != flip { 1.0 } else { 0.0 };
        ([(x + jx) as f32, (y + jy) as f32], occ)
    }
}

impl TrackerBackend for OracleTracker {
    fn capabilities(&self) -> TrackerCapabilities {
        TrackerCapabilities {
            predicts_occlusion: true,
            window_size: self.window,
        }
    }

    fn track(&mut self, queries: &[LabeledPoint], frames: &[Frame]) -> Result<TrajectoryBundle> {
        crate::backend::check_contiguous(frames)?;
        if queries.is_empty() {
            return Err(Error::invalid("at least one query point is required"));
        }
        if let Some(w) = self.window {
            if frames.len() > w {
                return Err(Error::invalid(format!(
                    "request spans {} frames, window is {w}",
                    frames.len()
                )));
            }
        }
        let t0 = frames[0].index();
        let mut points = Vec::with_capacity(frames.len());
        let mut occlusion = Vec::with_capacity(frames.len());
        for f in frames {
            let (p, o): (Vec<_>, Vec<_>) = queries
                .iter()
                .map(|q| self.track_point(q, t0, f.index()))
                .unzip();
            points.push(p);
            occlusion.push(o);
        }
        Ok(TrajectoryBundle {
            start_frame: t0,
            points,
            occlusion,
            labels: queries.iter().map(|q| q.label).collect(),
            objects: queries.iter().map(|q| q.object).collect(),
        })
    }
}

const MAX_PRIORS: usize = 4096;

/// Decision behind one oracle answer; a prior replays its mask only when the
/// new prompt leads to the same decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Decision {
    frame: usize,
    target: Option<usize>,
    subtract: Vec<usize>,
}

/// Oracle segmenter: the visible mask of the majority layer under the positive
/// points, minus the layers under negative points, with optional noise.
pub struct OracleSegmenter {
    world: Arc<World>,
    priors: HashMap<u64, (Decision, BinaryMask)>,
    issued: VecDeque<u64>,
    next_prior: u64,
    cache: HashMap<usize, Arc<Vec<BinaryMask>>>,
}

impl OracleSegmenter {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        Ok(Self {
            world: Arc::new(World::new(spec.clone())?),
            priors: HashMap::new(),
            issued: VecDeque::new(),
            next_prior: 1,
            cache: HashMap::new(),
        })
    }

    fn visible(&mut self, t: usize) -> Arc<Vec<BinaryMask>> {
        if self.cache.len() > 64 {
            self.cache.clear();
        }
        let world = &self.world;
        self.cache
            .entry(t)
            .or_insert_with(|| Arc::new(world.visible_masks(t)))
            .clone()
    }

    fn decide(&self, t: usize, points: &[LabeledPoint]) -> Decision {
        let w = &self.world;
        let mut votes: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (i, p) in points.iter().filter(|p| p.is_positive()).enumerate() {
            if let Some(l) = w.topmost(t, p.x as f64, p.y as f64) {
                let e = votes.entry(l).or_insert((0, i));
                e.0 += 1;
            }
        }
        // Most votes; ties go to the layer hit by the earliest positive.
        let target = votes
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(&l, _)| l);
        let mut subtract: Vec<usize> = points
            .iter()
            .filter(|p| !p.is_positive())
            .filter_map(|p| w.topmost(t, p.x as f64, p.y as f64))
            .filter(|&l| Some(l) != target)
            .collect();
        subtract.sort_unstable();
        subtract.dedup();
        Decision {
            frame: t,
            target,
            subtract,
        }
    }

    fn answer(&mut self, d: &Decision) -> BinaryMask {
        let (w, h) = (self.world.spec.width, self.world.spec.height);
        let Some(target) = d.target else {
            return BinaryMask::new(w, h);
        };
        let vis = self.visible(d.frame);
        let noise = self.world.spec.noise;
        let mut m = vis[target].dilate(noise.boundary_dilation_px);
        for &l in &d.subtract {
            m = m.and_not(&vis[l]);
        }
        if noise.mask_flip_prob > 0.0 {
            let mut key = vec![self.world.spec.seed, d.frame as u64, target as u64];
            key.extend(d.subtract.iter().map(|&l| l as u64 + 1_000_000));
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&key));
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(noise.mask_flip_prob) {
                        let v = m.get(x, y);
                        m.set(x, y, !v);
                    }
                }
            }
        }
        m
    }

    fn issue(&mut self, d: Decision, mask: BinaryMask) -> PriorHandle {
        let id = self.next_prior;
        self.next_prior += 1;
        self.priors.insert(id, (d, mask));
        self.issued.push_back(id);
        while self.issued.len() > MAX_PRIORS {
            if let Some(old) = self.issued.pop_front() {
                self.priors.remove(&old);
            }
        }
        PriorHandle(id)
    }
}

impl SegmenterBackend for OracleSegmenter {
    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            accepts_dense_prior: true,
            proposes_masks: true,
        }
    }

    fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation> {
        if points.is_empty() {
            return Err(Error::invalid("at least one point is required"));
        }
        let spec = &self.world.spec;
        if frame.width() != spec.width || frame.height() != spec.height {
            return Err(Error::invalid("frame size does not match the scene"));
        }
        let d = self.decide(frame.index(), points);
        let mask = match prior {
            Some(h) => {
                let (pd, pm) = self
                    .priors
                    .get(&h.0)
                    .ok_or_else(|| Error::protocol(format!("unknown prior handle {}", h.0)))?;
                if *pd == d {
                    pm.clone()
                } else {
                    self.answer(&d)
                }
            }
            None => self.answer(&d),
        };
        let handle = self.issue(d, mask.clone());
        Ok(Segmentation {
            mask,
            prior: Some(handle),
        })
    }

    /// Visible masks of all layers, largest first, near-duplicates removed.
    fn propose_masks(&mut self, frame: &Frame, max_proposals: usize) -> Result<Vec<BinaryMask>> {
        if max_proposals == 0 {
            return Err(Error::invalid("max_proposals must be at least 1"));
        }
        let vis = self.visible(frame.index());
        let mut cands: Vec<&BinaryMask> = vis.iter().filter(|m| !m.is_empty()).collect();
        cands.sort_by_key(|m| std::cmp::Reverse(m.area()));
        let mut out: Vec<BinaryMask> = Vec::new();
        for m in cands {
            if out.len() == max_proposals {
                break;
            }
            if out.iter().all(|o| o.iou(m) <= 0.9) {
                out.push(m.clone());
            }
        }
        Ok(out)
    }
}

fn shape(geometry: Geometry, color: [u8; 3], motion: Motion, depth: i32) -> ShapeSpec {
    ShapeSpec {
        geometry,
        color,
        motion,
        depth,
    }
}

fn lin(x: f64, y: f64, vx: f64, vy: f64) -> Motion {
    Motion::Linear {
        x,
        y,
        vx,
        vy,
        start: None,
        stop: None,
    }
}

const PALETTE: [[u8; 3]; 6] = [
    [220, 60, 50],
    [60, 170, 70],
    [70, 90, 220],
    [230, 200, 40],
    [200, 70, 200],
    [60, 200, 210],
];

/// Ten 128x128, 24-frame scenes with one to three moving objects, depth
/// overlaps and small occluders. `seed` perturbs positions and velocities.
pub fn standard_suite(seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x5C0E]));
    (0..10)
        .map(|i| {
            let mut j = |a: f64| rng.gen_range(-a..=a);
            let n = 1 + i % 3;
            let mut shapes = Vec::new();
            for k in 0..n {
                let (x, y) = (
                    28.0 + 36.0 * k as f64 + j(4.0),
                    36.0 + 24.0 * ((i + k) % 3) as f64 + j(4.0),
                );
                let geometry = match (i + k) % 4 {
                    0 => Geometry::Disk { radius: 11.0 + j(2.0) },
                    1 => Geometry::Rect {
                        width: 22.0 + j(3.0),
                        height: 16.0 + j(3.0),
                    },
                    2 => Geometry::Polygon {
                        vertices: vec![[-12.0, 10.0], [12.0, 10.0], [0.0, -13.0]],
                    },
                    _ => Geometry::Polygon {
                        vertices: vec![
                            [-11.0, -11.0],
                            [3.0, -11.0],
                            [3.0, 1.0],
                            [11.0, 1.0],
                            [11.0, 11.0],
                            [-11.0, 11.0],
                        ],
                    },
                };
                let motion = if (i + k) % 3 == 2 {
                    Motion::Sinusoidal {
                        x,
                        y,
                        ax: 10.0 + j(3.0),
                        ay: 6.0 + j(2.0),
                        period: 24.0,
                        phase: j(1.0),
                    }
                } else {
                    lin(x, y, 0.8 + j(0.4), if k % 2 == 0 { 0.5 } else { -0.5 } + j(0.3))
                };
                shapes.push(shape(geometry, PALETTE[(i + k) % PALETTE.len()], motion, k as i32));
            }
            let mut occluders = Vec::new();
            if i % 2 == 1 {
                occluders.push(shape(
                    Geometry::Rect {
                        width: 8.0,
                        height: 14.0,
                    },
                    [240, 240, 240],
                    lin(8.0 + j(2.0), 40.0 + 24.0 * (i % 3) as f64, 1.6, 0.0),
                    10,
                ));
            }
            SceneSpec {
                name: format!("scene{i:02}"),
                width: 128,
                height: 128,
                frames: 24,
                background: default_background(),
                shapes,
                occluders,
                noise: Noise::default(),
                seed: mix(&[seed, i as u64]),
            }
        })
        .collect()
}

/// Ten scenes built to separate single-point prompting from multi-point
/// prompting: thin or concave objects swept by occluder bars.
pub fn ablation_suite(seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0xAB1A]));
    (0..10)
        .map(|i| {
            let mut j = |a: f64| rng.gen_range(-a..=a);
            let n = 1 + i % 2;
            let mut shapes = Vec::new();
            for k in 0..n {
                let (x, y) = (40.0 + 48.0 * k as f64 + j(4.0), 64.0 + j(10.0));
                let geometry = match (i + k) % 3 {
                    0 => Geometry::Rect {
                        width: 34.0 + j(4.0),
                        height: 24.0 + j(4.0),
                    },
                    1 => Geometry::Disk { radius: 15.0 + j(2.0) },
                    _ => Geometry::Polygon {
                        vertices: vec![
                            [-16.0, -14.0],
                            [16.0, -14.0],
                            [16.0, 14.0],
                            [-16.0, 14.0],
                        ],
                    },
                };
                shapes.push(shape(
                    geometry,
                    PALETTE[(i + k) % PALETTE.len()],
                    lin(x, y, 0.6 + j(0.3), j(0.4)),
                    k as i32,
                ));
            }
            // Vertical bars sweeping across the objects.
            let occluders = (0..2)
                .map(|b| {
                    let dir = if b == 0 { 1.0 } else { -1.0 };
                    let x = if b == 0 { 6.0 } else { 122.0 };
                    shape(
                        Geometry::Rect {
                            width: 9.0 + j(2.0),
                            height: 128.0,
                        },
                        [240, 240, 240],
                        lin(x + j(3.0), 64.0, dir * (4.5 + j(1.0)), 0.0),
                        10,
                    )
                })
                .collect();
            SceneSpec {
                name: format!("ablation{i:02}"),
                width: 128,
                height: 128,
                frames: 24,
                background: default_background(),
                shapes,
                occluders,
                noise: Noise::default(),
                seed: mix(&[seed, 0xAB, i as u64]),
            }
        })
        .collect()
}

/// A static bar whose left part is the only visible part at frame 0. An
/// occluder lifts off the right part over frames 2 to 8, and another drops
/// over the left part during frames 8 to 10, hiding it for good.
pub fn emerging_segment_scene(seed: u64) -> SceneSpec {
    let gate = |x: f64, y: f64, vy: f64, start: f64, stop: f64, width: f64, height: f64| {
        shape(
            Geometry::Rect { width, height },
            [240, 240, 240],
            Motion::Linear {
                x,
                y,
                vx: 0.0,
                vy,
                start: Some(start),
                stop: Some(stop),
            },
            1,
        )
    };
    SceneSpec {
        name: "emerging".into(),
        width: 128,
        height: 128,
        frames: 24,
        background: default_background(),
        shapes: vec![shape(
            Geometry::Rect {
                width: 96.0,
                height: 40.0,
            },
            PALETTE[0],
            Motion::Constant { x: 64.0, y: 64.0 },
            0,
        )],
        occluders: vec![
            // Covers x in [60, 124) and lifts away, fully clear of the bar at frame 8.
            gate(92.0, 64.0, -7.0, 0.0, 8.0, 64.0, 60.0),
            // Covers x in [10, 62) and drops onto the bar's left part.
            gate(36.0, 0.0, 22.0, 8.0, 10.0, 52.0, 80.0),
        ],
        noise: Noise::default(),
        seed,
    }
}

/// A disk moves behind a large occluder and stays hidden from frame 7 on.
pub fn disappearing_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        name: "disappearing".into(),
        width: 128,
        height: 128,
        frames: 24,
        background: default_background(),
        shapes: vec![shape(
            Geometry::Disk { radius: 10.0 },
            PALETTE[2],
            lin(20.0, 64.0, 6.0, 0.0),
            0,
        )],
        occluders: vec![shape(
            Geometry::Rect {
                width: 80.0,
                height: 128.0,
            },
            [240, 240, 240],
            Motion::Constant { x: 88.0, y: 64.0 },
            1,
        )],
        noise: Noise::default(),
        seed,
    }
}
