//! PAM-style k-medoids on 2-D points with Euclidean distance.
//!
//! Initialization picks a seeded random first medoid and then repeatedly adds the
//! point farthest from the current medoid set. The swap phase evaluates every
//! (medoid, non-medoid) exchange per pass using cached nearest and second-nearest
//! distances, applies the best improving one, and stops when no swap improves
//! the total distance. The result is therefore locally optimal under single swaps.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct KMedoids {
    /// Indices into the input slice.
    pub medoids: Vec<usize>,
    /// Sum of distances from every point to its nearest medoid.
    pub cost: f64,
    pub swaps: usize,
}

const MAX_PASSES: usize = 200;
const EPS: f64 = 1e-9;

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Total distance of every point to its nearest medoid.
pub fn total_cost(points: &[[f64; 2]], medoids: &[usize]) -> f64 {
    points
        .iter()
        .map(|&p| {
            medoids
                .iter()
                .map(|&m| dist(p, points[m]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn farthest_point_init(points: &[[f64; 2]], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len();
    let mut medoids = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    medoids.push(first);
    let mut nearest: Vec<f64> = points.iter().map(|&p| dist(p, points[first])).collect();
    while medoids.len() < k {
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        medoids.push(best);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist(*p, points[best]));
        }
    }
    medoids
}

struct Assignment {
    near: Vec<usize>,
    dn: Vec<f64>,
    ds: Vec<f64>,
}

fn assign(points: &[[f64; 2]], medoids: &[usize]) -> Assignment {
    let n = points.len();
    let mut near = vec![0; n];
    let mut dn = vec![f64::INFINITY; n];
    let mut ds = vec![f64::INFINITY; n];
    for (i, &p) in points.iter().enumerate() {
        for (mi, &m) in medoids.iter().enumerate() {
            let d = dist(p, points[m]);
            if d < dn[i] {
                ds[i] = dn[i];
                dn[i] = d;
                near[i] = mi;
            } else if d < ds[i] {
                ds[i] = d;
            }
        }
    }
    Assignment { near, dn, ds }
}

/// Runs k-medoids; requires `1 <= k <= points.len()`.
pub fn kmedoids(points: &[[f64; 2]], k: usize, rng: &mut impl Rng) -> KMedoids {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=n");
    let n = points.len();
    let mut medoids = farthest_point_init(points, k, rng);
    if k == n {
        return KMedoids {
            medoids,
            cost: 0.0,
            swaps: 0,
        };
    }
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut swaps = 0;
    for _ in 0..MAX_PASSES {
        let a = assign(points, &medoids);
        // Loss increase when medoid slot m is dropped without replacement.
        let mut removal = vec![0.0f64; k];
        if k > 1 {
            for i in 0..n {
                removal[a.near[i]] += a.ds[i] - a.dn[i];
            }
        }
        let mut best: Option<(f64, usize, usize)> = None;
        let mut delta_m = vec![0.0f64; k];
        for c in 0..n {
            if is_medoid[c] {
                continue;
            }
            let pc = points[c];
            let mut acc = 0.0;
            if k == 1 {
                // Dropping the only medoid sends every point to the candidate.
                let new_cost: f64 = points.iter().map(|&p| dist(p, pc)).sum();
                let old: f64 = a.dn.iter().sum();
                delta_m[0] = new_cost - old;
            } else {
                delta_m.copy_from_slice(&removal);
                for i in 0..n {
                    let d = dist(points[i], pc);
                    if d < a.dn[i] {
                        acc += d - a.dn[i];
                        delta_m[a.near[i]] += a.dn[i] - a.ds[i];
                    } else if d < a.ds[i] {
                        delta_m[a.near[i]] += d - a.ds[i];
                    }
                }
            }
            for (m, &dm) in delta_m.iter().enumerate() {
                let delta = dm + acc;
                if best.is_none_or(|(bd, _, _)| delta < bd) {
                    best = Some((delta, m, c));
                }
            }
        }
        match best {
            Some((delta, m, c)) if delta < -EPS => {
                is_medoid[medoids[m]] = false;
                is_medoid[c] = true;
                medoids[m] = c;
                swaps += 1;
            }
            _ => break,
        }
    }
    let cost = total_cost(points, &medoids);
    KMedoids {
        medoids,
        cost,
        swaps,
    }
}
