use ptseg::BinaryMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Boundary: set pixels with an unset 4-neighbour inside the image.
pub fn oracle_boundary(m: &BinaryMask) -> Vec<(i64, i64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x as u32, y as u32) {
                continue;
            }
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && !m.get(nx as u32, ny as u32)
            });
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

/// Maximum one-to-one matching by plain augmenting paths over all pairs.
pub fn oracle_matching(a: &[(i64, i64)], b: &[(i64, i64)], tol: u32) -> usize {
    let t2 = (tol as i64).pow(2);
    let near = |i: usize, j: usize| {
        let (dx, dy) = (a[i].0 - b[j].0, a[i].1 - b[j].1);
        dx * dx + dy * dy <= t2
    };
    fn try_kuhn(
        i: usize,
        nb: usize,
        near: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for j in 0..nb {
            if near(i, j) && !seen[j] {
                seen[j] = true;
                if owner[j].is_none() || try_kuhn(owner[j].unwrap(), nb, near, seen, owner) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; b.len()];
    let mut n = 0;
    for i in 0..a.len() {
        let mut seen = vec![false; b.len()];
        if try_kuhn(i, b.len(), &near, &mut seen, &mut owner) {
            n += 1;
        }
    }
    n
}

pub fn oracle_f(pred: &BinaryMask, gt: &BinaryMask, tol: u32) -> f64 {
    let (pb, gb) = (oracle_boundary(pred), oracle_boundary(gt));
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let m = oracle_matching(&pb, &gb, tol) as f64;
    let (p, r) = (m / pb.len() as f64, m / gb.len() as f64);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn oracle_j(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.get(x, y), b.get(x, y));
            i += usize::from(p && q);
            u += usize::from(p || q);
        }
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

pub fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh)
}

/// Random mask: union of a few rectangles and disks, sometimes salted.
pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for _ in 0..rng.gen_range(0..4) {
        let (cx, cy) = (rng.gen_range(0..w) as i64, rng.gen_range(0..h) as i64);
        let r = rng.gen_range(1..=(w.min(h) / 3).max(1)) as i64;
        let disk = rng.gen_bool(0.5);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (dx, dy) = (x - cx, y - cy);
                let inside = if disk {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= r / 2 + 1
                };
                if inside {
                    m.set(x as u32, y as u32, true);
                }
            }
        }
    }
    if rng.gen_bool(0.3) {
        for _ in 0..rng.gen_range(1..20) {
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let v = m.get(x, y);
            m.set(x, y, !v);
        }
    }
    m
}

