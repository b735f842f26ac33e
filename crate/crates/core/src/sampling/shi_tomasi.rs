//! Minimum-eigenvalue corner response and corner selection under a mask.

use crate::mask::BinaryMask;
use crate::model::Frame;

const GAUSS_SIGMA: f64 = 1.0;
const GAUSS_RADIUS: i64 = 2;
/// Accepted corners are more than this many pixels apart.
pub const NMS_RADIUS: f64 = 3.0;
/// Corners weaker than this fraction of the strongest response are dropped.
pub const QUALITY_LEVEL: f64 = 0.01;

#[inline]
fn gray(frame: &Frame, x: i64, y: i64) -> f64 {
    let [r, g, b] = frame.rgb_clamped(x, y);
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn gaussian_kernel() -> Vec<f64> {
    let k: Vec<f64> = (-GAUSS_RADIUS..=GAUSS_RADIUS)
        .map(|d| (-((d * d) as f64) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Dense response map over a rectangular region of the frame.
pub struct ResponseMap {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ResponseMap {
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> Option<f64> {
        let (lx, ly) = (x - self.x0, y - self.y0);
        if lx < 0 || ly < 0 || lx >= self.width as i64 || ly >= self.height as i64 {
            return None;
        }
        Some(self.values[ly as usize * self.width + lx as usize])
    }
}

/// Minimum eigenvalue of the Gaussian-weighted structure tensor (3x3 Sobel
/// gradients, clamped borders) for every pixel of the inclusive rectangle
/// `[x0, x1] x [y0, y1]`.
pub fn min_eigen_response(frame: &Frame, x0: i64, y0: i64, x1: i64, y1: i64) -> ResponseMap {
    let (w_img, h_img) = (frame.width() as i64, frame.height() as i64);
    let r = GAUSS_RADIUS;
    // Gradient region: the rectangle grown by the window radius, clipped.
    let gx0 = (x0 - r).max(0);
    let gy0 = (y0 - r).max(0);
    let gx1 = (x1 + r).min(w_img - 1);
    let gy1 = (y1 + r).min(h_img - 1);
    let gw = (gx1 - gx0 + 1) as usize;
    let gh = (gy1 - gy0 + 1) as usize;
    let mut ixx = vec![0.0; gw * gh];
    let mut iyy = vec![0.0; gw * gh];
    let mut ixy = vec![0.0; gw * gh];
    for y in gy0..=gy1 {
        for x in gx0..=gx1 {
            let g = |dx: i64, dy: i64| gray(frame, x + dx, y + dy);
            let dx = (g(1, -1) + 2.0 * g(1, 0) + g(1, 1)) - (g(-1, -1) + 2.0 * g(-1, 0) + g(-1, 1));
            let dy = (g(-1, 1) + 2.0 * g(0, 1) + g(1, 1)) - (g(-1, -1) + 2.0 * g(0, -1) + g(1, -1));
            let i = (y - gy0) as usize * gw + (x - gx0) as usize;
            ixx[i] = dx * dx;
            iyy[i] = dy * dy;
            ixy[i] = dx * dy;
        }
    }
    let kernel = gaussian_kernel();
    let width = (x1 - x0 + 1) as usize;
    let height = (y1 - y0 + 1) as usize;
    let mut values = vec![0.0; width * height];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for (ky, wy) in kernel.iter().enumerate() {
                let sy = (y + ky as i64 - r).clamp(0, h_img - 1);
                for (kx, wx) in kernel.iter().enumerate() {
                    let sx = (x + kx as i64 - r).clamp(0, w_img - 1);
                    let i = (sy - gy0) as usize * gw + (sx - gx0) as usize;
                    let wgt = wy * wx;
                    a += wgt * ixx[i];
                    b += wgt * ixy[i];
                    c += wgt * iyy[i];
                }
            }
            let half_tr = (a + c) / 2.0;
            let disc = (((a - c) / 2.0).powi(2) + b * b).sqrt();
            let lambda = (half_tr - disc).max(0.0);
            values[(y - y0) as usize * width + (x - x0) as usize] = lambda;
        }
    }
    ResponseMap {
        x0,
        y0,
        width,
        height,
        values,
    }
}

/// Bounding box of set pixels, inclusive.
fn bbox(mask: &BinaryMask) -> Option<(i64, i64, i64, i64)> {
    let mut it = mask.iter_set();
    let (fx, fy) = it.next()?;
    let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx, fy);
    for (x, y) in it {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    Some((x0 as i64, y0 as i64, x1 as i64, y1 as i64))
}

/// Up to `count` corners inside `mask`, strongest first. Candidates are local
/// 3x3 maxima at or above the quality floor; accepted corners are pairwise more
/// than [`NMS_RADIUS`] apart. Pixels in `exclude` are never returned.
pub fn corners(
    frame: &Frame,
    mask: &BinaryMask,
    count: usize,
    exclude: &[(u32, u32)],
) -> Vec<(u32, u32)> {
    let Some((x0, y0, x1, y1)) = bbox(mask) else {
        return Vec::new();
    };
    // One extra pixel so the 3x3 maximum test sees neighbours outside the mask.
    let (rx0, ry0) = ((x0 - 1).max(0), (y0 - 1).max(0));
    let (rx1, ry1) = (
        (x1 + 1).min(frame.width() as i64 - 1),
        (y1 + 1).min(frame.height() as i64 - 1),
    );
    let resp = min_eigen_response(frame, rx0, ry0, rx1, ry1);
    let max = mask
        .iter_set()
        .filter_map(|(x, y)| resp.get(x as i64, y as i64))
        .fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = QUALITY_LEVEL * max;
    let mut cands: Vec<(f64, u32, u32)> = mask
        .iter_set()
        .filter_map(|(x, y)| {
            let v = resp.get(x as i64, y as i64)?;
            if v <= 0.0 || v < floor {
                return None;
            }
            let local_max = (-1..=1i64).all(|dy| {
                (-1..=1i64).all(|dx| {
                    resp.get(x as i64 + dx, y as i64 + dy)
                        .is_none_or(|n| n <= v)
                })
            });
            local_max.then_some((v, x, y))
        })
        .collect();
    // Strongest first; iter_set order (raster) breaks ties because the sort is stable.
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(u32, u32)> = Vec::new();
    for (_, x, y) in cands {
        if out.len() == count {
            break;
        }
        if exclude.contains(&(x, y)) {
            continue;
        }
        let far = out.iter().all(|&(ox, oy)| {
            let dx = ox as f64 - x as f64;
            let dy = oy as f64 - y as f64;
            (dx * dx + dy * dy).sqrt() > NMS_RADIUS
        });
        if far {
            out.push((x, y));
        }
    }
    out
}
