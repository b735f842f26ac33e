//! Query point selection from a mask: random, k-medoids, Shi-Tomasi corners, and a
//! mixed strategy, plus negative sampling from a target's background.
//!
//! Every sampler is a pure function of `(mask, frame, count, seed)` and returns
//! pixel coordinates; [`to_points`] turns them into pixel-centre [`LabeledPoint`]s.

pub mod kmedoids;
pub mod shi_tomasi;

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PointSelection;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, Label, LabeledPoint, ObjectId};

pub type Pixel = (u32, u32);

/// Above this many mask pixels k-medoids runs on a seeded subsample.
pub const KMEDOIDS_MAX_POINTS: usize = 1500;

#[derive(Debug, Clone, Copy)]
pub struct SamplingRequest<'a> {
    pub mask: &'a BinaryMask,
    pub frame: Option<&'a Frame>,
    pub count: usize,
    pub seed: u64,
}

impl<'a> SamplingRequest<'a> {
    pub fn new(mask: &'a BinaryMask, count: usize, seed: u64) -> Self {
        Self {
            mask,
            frame: None,
            count,
            seed,
        }
    }

    pub fn with_frame(mut self, frame: &'a Frame) -> Self {
        self.frame = Some(frame);
        self
    }

    fn check(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        if self.mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(f) = self.frame {
            if f.width() != self.mask.width() || f.height() != self.mask.height() {
                return Err(Error::invalid("frame and mask sizes differ"));
            }
        }
        Ok(())
    }

    fn frame(&self) -> Result<&'a Frame> {
        self.frame
            .ok_or_else(|| Error::invalid("this sampling method needs the frame image"))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of integers into one well-mixed seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |h, &p| splitmix(h ^ p))
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `count` pixels drawn from `pool`: distinct when possible, otherwise every pixel
/// is used once per round (sampling with replacement) until `count` is reached.
fn draw(pool: &[Pixel], count: usize, rng: &mut ChaCha8Rng) -> Vec<Pixel> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let take = (count - out.len()).min(pool.len());
        out.extend(index::sample(rng, pool.len(), take).iter().map(|i| pool[i]));
    }
    out
}

/// Uniformly random mask pixels.
pub fn sample_random(req: &SamplingRequest) -> Result<Vec<Pixel>> {
    req.check()?;
    random_excluding(req.mask, req.count, req.seed, &[])
}

fn random_excluding(mask: &BinaryMask, count: usize, seed: u64, exclude: &[Pixel]) -> Result<Vec<Pixel>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let excluded: HashSet<Pixel> = exclude.iter().copied().collect();
    let fresh: Vec<Pixel> = mask.iter_set().filter(|p| !excluded.contains(p)).collect();
    let mut r = rng(seed, 1);
    if fresh.len() >= count {
        return Ok(draw(&fresh, count, &mut r));
    }
    // Not enough unused pixels: take all of them, then repeat from the full mask.
    let mut out = draw(&fresh, fresh.len(), &mut r);
    let all: Vec<Pixel> = mask.iter_set().collect();
    out.extend(draw(&all, count - out.len(), &mut r));
    Ok(out)
}

/// Medoids of a k-medoids clustering of the mask pixel coordinates.
pub fn sample_kmedoids(req: &SamplingRequest) -> Result<Vec<Pixel>> {
    req.check()?;
    let pixels: Vec<Pixel> = req.mask.iter_set().collect();
    if pixels.len() <= req.count {
        let mut r = rng(req.seed, 2);
        return Ok(draw(&pixels, req.count, &mut r));
    }
    let mut r = rng(req.seed, 3);
    let pool: Vec<Pixel> = if pixels.len() > KMEDOIDS_MAX_POINTS {
        let mut idx = index::sample(&mut r, pixels.len(), KMEDOIDS_MAX_POINTS).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pixels[i]).collect()
    } else {
        pixels
    };
    let coords: Vec<[f64; 2]> = pool.iter().map(|&(x, y)| [x as f64, y as f64]).collect();
    let res = kmedoids::kmedoids(&coords, req.count, &mut r);
    let mut meds: Vec<Pixel> = res.medoids.iter().map(|&i| pool[i]).collect();
    meds.sort_by_key(|&(x, y)| (y, x));
    Ok(meds)
}

/// Shi-Tomasi corners under the mask, padded with random mask pixels.
pub fn sample_shi_tomasi(req: &SamplingRequest) -> Result<Vec<Pixel>> {
    req.check()?;
    shi_tomasi_excluding(req, &[])
}

fn shi_tomasi_excluding(req: &SamplingRequest, exclude: &[Pixel]) -> Result<Vec<Pixel>> {
    let frame = req.frame()?;
    let mut out = shi_tomasi::corners(frame, req.mask, req.count, exclude);
    if out.len() < req.count {
        let mut taken: Vec<Pixel> = exclude.to_vec();
        taken.extend_from_slice(&out);
        let pad = random_excluding(req.mask, req.count - out.len(), req.seed ^ 0x5348_4954, &taken)?;
        out.extend(pad);
    }
    Ok(out)
}

/// Split of `count` across (k-medoids, Shi-Tomasi, random); remainders go to
/// k-medoids first, then Shi-Tomasi.
pub fn mixed_split(count: usize) -> (usize, usize, usize) {
    let base = count / 3;
    let rem = count % 3;
    (
        base + usize::from(rem >= 1),
        base + usize::from(rem >= 2),
        base,
    )
}

/// Concatenation of k-medoids, Shi-Tomasi and random samples, in that order.
pub fn sample_mixed(req: &SamplingRequest) -> Result<Vec<Pixel>> {
    req.check()?;
    req.frame()?;
    let (nk, ns, nr) = mixed_split(req.count);
    let mut out = Vec::with_capacity(req.count);
    if nk > 0 {
        out.extend(sample_kmedoids(&SamplingRequest { count: nk, ..*req })?);
    }
    if ns > 0 {
        let sub = SamplingRequest {
            count: ns,
            seed: req.seed.wrapping_add(1),
            ..*req
        };
        let st = shi_tomasi_excluding(&sub, &out)?;
        out.extend(st);
    }
    if nr > 0 {
        let r = random_excluding(req.mask, nr, req.seed.wrapping_add(2), &out)?;
        out.extend(r);
    }
    Ok(out)
}

pub fn sample(method: PointSelection, req: &SamplingRequest) -> Result<Vec<Pixel>> {
    match method {
        PointSelection::Random => sample_random(req),
        PointSelection::Kmedoids => sample_kmedoids(req),
        PointSelection::ShiTomasi => sample_shi_tomasi(req),
        PointSelection::Mixed => sample_mixed(req),
    }
}

pub fn to_points(pixels: &[Pixel], label: Label, object: ObjectId) -> Vec<LabeledPoint> {
    pixels
        .iter()
        .map(|&(x, y)| LabeledPoint::at_pixel(x, y, label, object))
        .collect()
}

/// Positive query points for `object` using the configured method.
pub fn sample_positive(
    method: PointSelection,
    mask: &BinaryMask,
    frame: &Frame,
    count: usize,
    seed: u64,
    object: ObjectId,
) -> Result<Vec<LabeledPoint>> {
    let req = SamplingRequest::new(mask, count, seed).with_frame(frame);
    Ok(to_points(&sample(method, &req)?, Label::Positive, object))
}

/// Mixed-sampled negatives on the complement of `target_mask`.
pub fn sample_background(
    target_mask: &BinaryMask,
    frame: &Frame,
    count: usize,
    seed: u64,
    object: ObjectId,
) -> Result<Vec<LabeledPoint>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let background = target_mask.not();
    let req = SamplingRequest::new(&background, count, seed).with_frame(frame);
    Ok(to_points(&sample_mixed(&req)?, Label::Negative, object))
}

/// Negatives for `target`: mixed samples from the target's background, followed by
/// the other objects' positive points relabelled as negatives when
/// `other_positives` is given (multi-object mode).
pub fn sample_negative(
    target: ObjectId,
    masks: &BTreeMap<ObjectId, BinaryMask>,
    frame: &Frame,
    count: usize,
    seed: u64,
    other_positives: Option<&[LabeledPoint]>,
) -> Result<Vec<LabeledPoint>> {
    let mask = masks
        .get(&target)
        .ok_or_else(|| Error::invalid(format!("no mask for object {target}")))?;
    let mut out = sample_background(mask, frame, count, seed, target)?;
    if let Some(others) = other_positives {
        out.extend(
            others
                .iter()
                .filter(|p| p.object != target && p.is_positive())
                .map(|p| LabeledPoint::negative(p.x, p.y, target)),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) <= r * r
        })
    }

    #[test]
    fn random_single_pixel() {
        let mut m = BinaryMask::new(5, 5);
        m.set(3, 1, true);
        assert_eq!(sample_random(&SamplingRequest::new(&m, 1, 9)).unwrap(), vec![(3, 1)]);
    }

    #[test]
    fn random_is_reproducible_and_contained() {
        let m = BinaryMask::full(10, 10);
        let a = sample_random(&SamplingRequest::new(&m, 8, 42)).unwrap();
        let b = sample_random(&SamplingRequest::new(&m, 8, 42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn random_with_replacement_on_tiny_mask() {
        let mut m = BinaryMask::new(6, 6);
        let px = [(0, 0), (4, 2), (5, 5)];
        for &(x, y) in &px {
            m.set(x, y, true);
        }
        let s = sample_random(&SamplingRequest::new(&m, 8, 1)).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|p| px.contains(p)));
        // every pixel is used before any repeats
        for p in &px {
            assert!(s.iter().filter(|&q| q == p).count() >= 2);
        }
    }

    #[test]
    fn empty_mask_errors() {
        let m = BinaryMask::new(4, 4);
        let req = SamplingRequest::new(&m, 1, 0);
        assert!(matches!(sample_random(&req), Err(Error::EmptyMask)));
        assert!(matches!(sample_kmedoids(&req), Err(Error::EmptyMask)));
        let f = Frame::filled(0, 4, 4, [0; 3]).unwrap();
        assert!(matches!(sample_shi_tomasi(&req.with_frame(&f)), Err(Error::EmptyMask)));
    }

    #[test]
    fn shi_tomasi_requires_frame() {
        let m = BinaryMask::full(4, 4);
        let req = SamplingRequest::new(&m, 1, 0);
        assert!(matches!(sample_shi_tomasi(&req), Err(Error::InvalidInput(_))));
        assert!(matches!(sample_mixed(&req), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kmedoids_exact_count_returns_pixels() {
        let mut m = BinaryMask::new(8, 8);
        let px = [(1, 1), (6, 2), (3, 7)];
        for &(x, y) in &px {
            m.set(x, y, true);
        }
        let mut s = sample_kmedoids(&SamplingRequest::new(&m, 3, 5)).unwrap();
        s.sort();
        let mut e = px.to_vec();
        e.sort();
        assert_eq!(s, e);
    }

    #[test]
    fn mixed_split_rule() {
        assert_eq!(mixed_split(3), (1, 1, 1));
        assert_eq!(mixed_split(8), (3, 3, 2));
        assert_eq!(mixed_split(1), (1, 0, 0));
        assert_eq!(mixed_split(2), (1, 1, 0));
    }

    #[test]
    fn mixed_count_one_is_a_medoid() {
        let m = disk(40, 40, 20.0, 20.0, 9.0);
        let f = Frame::filled(0, 40, 40, [50, 50, 50]).unwrap();
        let req = SamplingRequest::new(&m, 1, 3).with_frame(&f);
        assert_eq!(sample_mixed(&req).unwrap(), sample_kmedoids(&req).unwrap());
    }

    #[test]
    fn negatives_on_half_frame() {
        let mut masks = BTreeMap::new();
        masks.insert(ObjectId(1), BinaryMask::from_fn(20, 10, |x, _| x < 10));
        let f = Frame::filled(0, 20, 10, [0; 3]).unwrap();
        let n = sample_negative(ObjectId(1), &masks, &f, 1, 0, None).unwrap();
        assert_eq!(n.len(), 1);
        assert!(n[0].x >= 10.0 && n[0].label == Label::Negative);
    }

    #[test]
    fn negatives_72_distinct() {
        let mut masks = BTreeMap::new();
        masks.insert(ObjectId(1), disk(64, 64, 32.0, 32.0, 14.0));
        let f = Frame::filled(0, 64, 64, [10, 20, 30]).unwrap();
        let n = sample_negative(ObjectId(1), &masks, &f, 72, 7, None).unwrap();
        assert_eq!(n.len(), 72);
        let distinct: HashSet<(u32, u32)> = n.iter().map(|p| (p.x as u32, p.y as u32)).collect();
        assert_eq!(distinct.len(), 72);
        assert!(n.iter().all(|p| !masks[&ObjectId(1)].contains_point(p.x, p.y)));
    }

    #[test]
    fn negatives_may_land_on_other_objects() {
        // object 1 on the left, object 2 fills the rest except a thin strip
        let m1 = BinaryMask::from_fn(30, 30, |x, _| x < 10);
        let m2 = BinaryMask::from_fn(30, 30, |x, _| x >= 12);
        let mut masks = BTreeMap::new();
        masks.insert(ObjectId(1), m1.clone());
        masks.insert(ObjectId(2), m2.clone());
        let f = Frame::filled(0, 30, 30, [0; 3]).unwrap();
        let others = vec![LabeledPoint::positive(20.5, 5.5, ObjectId(2))];
        let n = sample_negative(ObjectId(1), &masks, &f, 12, 3, Some(&others)).unwrap();
        assert_eq!(n.len(), 13);
        assert!(n.iter().all(|p| !m1.contains_point(p.x, p.y)));
        assert!(n.iter().any(|p| m2.contains_point(p.x, p.y)));
        assert_eq!(n.last().unwrap().object, ObjectId(1));
        assert_eq!(n.last().unwrap().label, Label::Negative);
    }

    #[test]
    fn empty_background_errors() {
        let mut masks = BTreeMap::new();
        masks.insert(ObjectId(1), BinaryMask::full(5, 5));
        let f = Frame::filled(0, 5, 5, [0; 3]).unwrap();
        assert!(matches!(
            sample_negative(ObjectId(1), &masks, &f, 1, 0, None),
            Err(Error::EmptyMask)
        ));
    }
}
