//! Shared value types passed between the sampling, tracking, segmentation and
//! evaluation stages.

use std::fmt;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// One RGB video frame, 8 bits per channel, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    index: usize,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame(#{} {}x{})", self.index, self.width, self.height)
    }
}

impl Frame {
    pub fn new(index: usize, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame has a zero dimension"));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::invalid(format!(
                "frame buffer has {} bytes, expected {}x{}x3",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: usize, width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(index, width, height, pixels)
    }

    pub fn from_image(index: usize, img: RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        Self::new(index, w, h, img.into_raw())
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("frame buffer size is an invariant")
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Pixel lookup with coordinates clamped to the image.
    #[inline]
    pub fn rgb_clamped(&self, x: i64, y: i64) -> [u8; 3] {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.rgb(cx, cy)
    }

    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f32 && y < self.height as f32
    }
}

/// Per-axis factors from original to resized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub sx: f64,
    pub sy: f64,
}

impl Scale {
    pub const IDENTITY: Scale = Scale { sx: 1.0, sy: 1.0 };

    pub fn to_resized(&self, x: f32, y: f32) -> (f32, f32) {
        ((x as f64 * self.sx) as f32, (y as f64 * self.sy) as f32)
    }

    pub fn to_original(&self, x: f32, y: f32) -> (f32, f32) {
        ((x as f64 / self.sx) as f32, (y as f64 / self.sy) as f32)
    }
}

/// Target size when the longest side becomes `target`; the short side is
/// `round(short * target / long)`, at least 1.
pub fn longest_side_dims(width: u32, height: u32, target: u32) -> Result<(u32, u32)> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("zero-dimension frame"));
    }
    if target == 0 {
        return Err(Error::invalid("resize target must be at least 1"));
    }
    let short = |s: u32, l: u32| ((s as f64 * target as f64 / l as f64).round() as u32).max(1);
    Ok(if width >= height {
        (target, short(height, width))
    } else {
        (short(width, height), target)
    })
}

/// Resizes so that the longest side equals `target`, preserving aspect ratio.
pub fn resize_longest_side(frame: &Frame, target: u32) -> Result<(Frame, Scale)> {
    let (w, h) = longest_side_dims(frame.width, frame.height, target)?;
    if (w, h) == (frame.width, frame.height) {
        return Ok((frame.clone(), Scale::IDENTITY));
    }
    let img = image::imageops::resize(&frame.to_image(), w, h, FilterType::Triangle);
    let scale = Scale {
        sx: w as f64 / frame.width as f64,
        sy: h as f64 / frame.height as f64,
    };
    Ok((Frame::from_image(frame.index, img)?, scale))
}

/// Positive integer object identifier, unique within a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f32,
    pub y: f32,
    pub label: Label,
    pub object: ObjectId,
}

impl LabeledPoint {
    pub fn positive(x: f32, y: f32, object: ObjectId) -> Self {
        Self {
            x,
            y,
            label: Label::Positive,
            object,
        }
    }

    pub fn negative(x: f32, y: f32, object: ObjectId) -> Self {
        Self {
            x,
            y,
            label: Label::Negative,
            object,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == Label::Positive
    }

    /// Centre of pixel `(px, py)`.
    pub fn at_pixel(px: u32, py: u32, label: Label, object: ObjectId) -> Self {
        Self {
            x: px as f32 + 0.5,
            y: py as f32 + 0.5,
            label,
            object,
        }
    }
}

/// Point trajectories and occlusion scores for frames
/// `start_frame..start_frame + len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub start_frame: usize,
    /// `points[t][i]` is the position of point `i` at frame `start_frame + t`.
    pub points: Vec<Vec<[f32; 2]>>,
    pub occlusion: Vec<Vec<f32>>,
    pub labels: Vec<Label>,
    pub objects: Vec<ObjectId>,
}

impl TrajectoryBundle {
    pub fn num_frames(&self) -> usize {
        self.points.len()
    }

    pub fn num_points(&self) -> usize {
        self.labels.len()
    }

    pub fn end_frame(&self) -> usize {
        self.start_frame + self.points.len()
    }

    /// Checks shape consistency and occlusion range.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.objects.len() != n {
            return Err(Error::protocol("labels/objects length mismatch"));
        }
        if self.points.len() != self.occlusion.len() {
            return Err(Error::protocol("points/occlusion frame count mismatch"));
        }
        for (p, o) in self.points.iter().zip(&self.occlusion) {
            if p.len() != n || o.len() != n {
                return Err(Error::protocol("trajectory row has the wrong number of points"));
            }
            if o.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::protocol("occlusion score outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Points at absolute frame `frame`, paired with their occlusion score.
    pub fn at(&self, frame: usize) -> Option<Vec<(LabeledPoint, f32)>> {
        let t = frame.checked_sub(self.start_frame)?;
        let row = self.points.get(t)?;
        Some(
            row.iter()
                .zip(&self.occlusion[t])
                .zip(self.labels.iter().zip(&self.objects))
                .map(|((&[x, y], &occ), (&label, &object))| {
                    (
                        LabeledPoint {
                            x,
                            y,
                            label,
                            object,
                        },
                        occ,
                    )
                })
                .collect(),
        )
    }
}

/// Opaque token naming a dense mask prior held by a segmenter session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorHandle(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPrediction {
    pub mask: BinaryMask,
    pub dense_prior: Option<PriorHandle>,
    pub object: ObjectId,
    pub frame: usize,
}
