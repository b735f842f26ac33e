//! Packed binary masks and the handful of morphology routines the engine needs.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major bitset of `width * height` pixels.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        let len = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; word_count(len)],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut m = Self::new(width, height);
        m.words.iter_mut().for_each(|w| *w = u64::MAX);
        m.clear_tail();
        m
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Builds a mask from one byte per pixel; any non-zero byte is set.
    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "mask buffer has {} bytes, expected {}x{}",
                bytes.len(),
                width,
                height
            )));
        }
        let mut m = Self::new(width, height);
        for (i, &b) in bytes.iter().enumerate() {
            if b != 0 {
                m.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.get_index(i) as u8).collect()
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_size(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn clear_tail(&mut self) {
        let rem = self.len() % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.get_index(y as usize * self.width as usize + x as usize)
    }

    /// Lookup with signed coordinates; anything outside the image reads as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.get(x as u32, y as u32)
    }

    /// Whether the pixel containing the continuous point `(x, y)` is set.
    #[inline]
    pub fn contains_point(&self, x: f32, y: f32) -> bool {
        if !x.is_finite() || !y.is_finite() {
            return false;
        }
        self.get_signed(x.floor() as i64, y.floor() as i64)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = y as usize * self.width as usize + x as usize;
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set pixels in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * 64 + tz;
                Some(((i % w) as u32, (i / w) as u32))
            })
        })
    }

    fn zip_words(&self, other: &BinaryMask, f: impl Fn(u64, u64) -> u64) -> BinaryMask {
        assert!(self.same_size(other), "mask size mismatch");
        let mut out = BinaryMask {
            width: self.width,
            height: self.height,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        };
        out.clear_tail();
        out
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn xor(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_words(other, |a, b| a ^ b)
    }

    pub fn not(&self) -> BinaryMask {
        let mut out = BinaryMask {
            width: self.width,
            height: self.height,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.clear_tail();
        out
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        assert!(self.same_size(other), "mask size mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_area(&self, other: &BinaryMask) -> usize {
        assert!(self.same_size(other), "mask size mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let union = self.union_area(other);
        if union == 0 {
            return 1.0;
        }
        self.intersection_area(other) as f64 / union as f64
    }

    /// Set pixels with at least one 4-neighbour unset. Pixels outside the image do
    /// not count as unset, so a mask touching the border has no boundary there.
    pub fn boundary(&self) -> BinaryMask {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = BinaryMask::new(self.width, self.height);
        for (x, y) in self.iter_set() {
            let (xi, yi) = (x as i64, y as i64);
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (xi + dx, yi + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && !self.get(nx as u32, ny as u32)
            });
            if edge {
                out.set(x, y, true);
            }
        }
        out
    }

    /// Dilation by a Euclidean disk `{(dx, dy) : dx² + dy² ≤ r²}`.
    pub fn dilate(&self, radius: u32) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let offsets = disk_offsets(radius);
        let mut out = self.clone();
        let (w, h) = (self.width as i64, self.height as i64);
        // Only the outer rim can grow the mask.
        for (x, y) in self.rim().iter_set() {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.set(nx as u32, ny as u32, true);
                }
            }
        }
        out
    }

    /// Erosion by a Euclidean disk; pixels outside the image count as unset.
    pub fn erode(&self, radius: u32) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let offsets = disk_offsets(radius);
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.get(x, y)
                && offsets
                    .iter()
                    .all(|&(dx, dy)| self.get_signed(x as i64 + dx, y as i64 + dy))
        })
    }

    /// Set pixels with any 4-neighbour unset or outside the image.
    fn rim(&self) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for (x, y) in self.iter_set() {
            let (xi, yi) = (x as i64, y as i64);
            if [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dx, dy)| !self.get_signed(xi + dx, yi + dy))
            {
                out.set(x, y, true);
            }
        }
        out
    }

    /// Nearest-neighbour resampling to a new size.
    pub fn resize_nearest(&self, width: u32, height: u32) -> BinaryMask {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        BinaryMask::from_fn(width, height, |x, y| {
            let ox = (((x as f64 + 0.5) * sx) as u32).min(self.width - 1);
            let oy = (((y as f64 + 0.5) * sy) as u32).min(self.height - 1);
            self.get(ox, oy)
        })
    }

    /// 8-connected components, in order of their first pixel in raster order.
    pub fn connected_components(&self) -> Vec<BinaryMask> {
        let mut seen = BinaryMask::new(self.width, self.height);
        let mut comps = Vec::new();
        let (w, h) = (self.width as i64, self.height as i64);
        for (x, y) in self.iter_set() {
            if seen.get(x, y) {
                continue;
            }
            let mut comp = BinaryMask::new(self.width, self.height);
            let mut stack = vec![(x, y)];
            seen.set(x, y, true);
            while let Some((cx, cy)) = stack.pop() {
                comp.set(cx, cy, true);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if self.get(nx, ny) && !seen.get(nx, ny) {
                            seen.set(nx, ny, true);
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// Squared Euclidean distance from each set pixel to the nearest unset pixel,
    /// treating everything outside the image as unset. Unset pixels get 0.
    pub fn squared_distance_transform(&self) -> Vec<f64> {
        let (w, h) = (self.width as usize, self.height as usize);
        let inf = 1e20;
        // Pad by one pixel of background on every side.
        let (pw, ph) = (w + 2, h + 2);
        let mut grid = vec![0.0f64; pw * ph];
        for (x, y) in self.iter_set() {
            grid[(y as usize + 1) * pw + x as usize + 1] = inf;
        }
        let mut col = vec![0.0; ph];
        let mut out_col = vec![0.0; ph];
        for x in 0..pw {
            for y in 0..ph {
                col[y] = grid[y * pw + x];
            }
            edt_1d(&col, &mut out_col);
            for y in 0..ph {
                grid[y * pw + x] = out_col[y];
            }
        }
        let mut row = vec![0.0; pw];
        let mut out_row = vec![0.0; pw];
        for y in 0..ph {
            row.copy_from_slice(&grid[y * pw..(y + 1) * pw]);
            edt_1d(&row, &mut out_row);
            grid[y * pw..(y + 1) * pw].copy_from_slice(&out_row);
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = grid[(y + 1) * pw + x + 1];
            }
        }
        out
    }

    /// Packed little-endian bytes of the bitset; used by the JSON encoding.
    fn packed_bytes(&self) -> Vec<u8> {
        let n = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n);
        out
    }

    fn from_packed(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        let len = width as usize * height as usize;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::invalid("packed mask has wrong length"));
        }
        let mut words = vec![0u64; word_count(len)];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        let mut m = BinaryMask {
            width,
            height,
            words,
        };
        m.clear_tail();
        Ok(m)
    }
}

/// Integer offsets inside a Euclidean disk of the given radius.
pub fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                v.push((dx, dy));
            }
        }
    }
    v
}

// Felzenszwalb & Huttenlocher lower envelope of parabolas.
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        // z[0] is -inf so this never underflows
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[derive(Serialize, Deserialize)]
struct PackedMask {
    width: u32,
    height: u32,
    bits: String,
}

impl Serialize for BinaryMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PackedMask {
            width: self.width,
            height: self.height,
            bits: B64.encode(self.packed_bytes()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PackedMask::deserialize(d)?;
        let bytes = B64.decode(p.bits).map_err(serde::de::Error::custom)?;
        BinaryMask::from_packed(p.width, p.height, &bytes).map_err(serde::de::Error::custom)
    }
}

/// Number of set pixels.
pub fn mask_area(mask: &BinaryMask) -> usize {
    mask.area()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_examples() {
        assert_eq!(mask_area(&BinaryMask::new(4, 4)), 0);
        assert_eq!(mask_area(&BinaryMask::full(4, 4)), 16);
        let checker = BinaryMask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
        let enumerated = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .filter(|&(x, y)| (x + y) % 2 == 0)
            .count();
        assert_eq!(enumerated, 8);
        assert_eq!(mask_area(&checker), enumerated);
    }

    #[test]
    fn full_mask_tail_bits_cleared() {
        let m = BinaryMask::full(5, 3);
        assert_eq!(m.area(), 15);
        assert_eq!(m.not().area(), 0);
    }

    #[test]
    fn dilate_matches_brute_force() {
        let m = BinaryMask::from_fn(20, 17, |x, y| (x * 7 + y * 3) % 11 == 0 && x > 3);
        for r in 0..4u32 {
            let fast = m.dilate(r);
            let slow = BinaryMask::from_fn(20, 17, |x, y| {
                m.iter_set().any(|(sx, sy)| {
                    let dx = sx as i64 - x as i64;
                    let dy = sy as i64 - y as i64;
                    dx * dx + dy * dy <= (r * r) as i64
                })
            });
            assert_eq!(fast, slow, "radius {r}");
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let m = BinaryMask::from_fn(13, 9, |x, y| x > 1 && y > 0 && (x + y) % 7 != 0);
        let dt = m.squared_distance_transform();
        for y in 0..9i64 {
            for x in 0..13i64 {
                let expected = if !m.get(x as u32, y as u32) {
                    0.0
                } else {
                    let mut best = f64::INFINITY;
                    for yy in -1..=9i64 {
                        for xx in -1..=13i64 {
                            if !m.get_signed(xx, yy) {
                                let d = ((xx - x).pow(2) + (yy - y).pow(2)) as f64;
                                best = best.min(d);
                            }
                        }
                    }
                    best
                };
                assert_eq!(dt[(y * 13 + x) as usize], expected, "at {x},{y}");
            }
        }
    }

    #[test]
    fn components_split_blobs() {
        let m = BinaryMask::from_fn(10, 10, |x, y| (x < 3 && y < 3) || (x > 6 && y > 6));
        let comps = m.connected_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area(), 9);
        assert!(comps[0].get(0, 0));
    }

    #[test]
    fn serde_roundtrip() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x ^ y) & 1 == 1);
        let s = serde_json::to_string(&m).unwrap();
        let back: BinaryMask = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn boundary_ignores_image_border() {
        let full = BinaryMask::full(6, 6);
        assert!(full.boundary().is_empty());
        let sq = BinaryMask::from_fn(8, 8, |x, y| (2..6).contains(&x) && (2..6).contains(&y));
        assert_eq!(sq.boundary().area(), 12);
    }
}
