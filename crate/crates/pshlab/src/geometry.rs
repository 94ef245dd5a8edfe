//! Small geometric utilities shared across the crate: points in
//! R^{2n} ~ C^n, the complex structure, orthonormal frames, and
//! deterministic sampling helpers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Point = DVector<f64>;

/// Applies the complex structure J (multiplication by i) under the
/// identification z_k = x_{2k} + i x_{2k+1}.
pub fn apply_i(v: &Point) -> Point {
    let mut out = Point::zeros(v.len());
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

/// |z|^2 as a field value.
pub fn norm_sq(z: &Point) -> f64 {
    z.norm_squared()
}

/// Completes `last` (assumed unit) to an orthonormal basis of R^dim whose
/// final column is `last`. Deterministic Gram-Schmidt over the standard
/// basis, skipping near-parallel seeds.
pub fn frame_with_last_axis(last: &Point) -> DMatrix<f64> {
    let dim = last.len();
    let mut cols: Vec<Point> = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut e = Point::zeros(dim);
        e[k] = 1.0;
        let mut v = e;
        v -= last * last.dot(&v);
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
        if cols.len() == dim - 1 {
            break;
        }
    }
    assert_eq!(cols.len(), dim - 1, "frame completion failed");
    cols.push(last.clone());
    DMatrix::from_columns(&cols)
}

/// Gram-matrix deviation from the identity, used by atlas invariants.
pub fn orthonormality_defect(frame: &DMatrix<f64>) -> f64 {
    let gram = frame.transpose() * frame;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Uniform point on the unit sphere of R^dim from a seeded rng.
pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Point {
    loop {
        let mut v = Point::zeros(dim);
        for k in 0..dim {
            // Box-Muller keeps us independent of rand_distr.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            v[k] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Uniform point in the ball B(center, radius).
pub fn random_in_ball<R: Rng>(rng: &mut R, center: &Point, radius: f64) -> Point {
    let dim = center.len();
    let dir = random_unit_vector(rng, dim);
    let u: f64 = rng.gen_range(0.0..1.0f64);
    center + dir * (radius * u.powf(1.0 / dim as f64))
}

/// Halton sequence point (base-coprime van der Corput per axis), index >= 0.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(dim <= PRIMES.len());
    (0..dim)
        .map(|d| {
            let base = PRIMES[d];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// First `count` Halton points inside the unit ball of R^dim (rejection
/// from the enclosing cube; deterministic).
pub fn halton_ball_nodes(count: usize, dim: usize) -> Vec<Point> {
    let mut nodes = Vec::with_capacity(count);
    let mut idx = 0usize;
    while nodes.len() < count {
        let h = halton(idx, dim);
        idx += 1;
        let v = Point::from_iterator(dim, h.iter().map(|u| 2.0 * u - 1.0));
        if v.norm_squared() <= 1.0 {
            nodes.push(v);
        }
        assert!(idx < 100 * count + 10_000, "rejection sampling stalled");
    }
    nodes
}

/// Greedy net: indices of a subset of `candidates` such that every candidate
/// lies within `spacing` of a selected point. Deterministic in input order.
pub fn greedy_net(candidates: &[Point], spacing: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for (i, p) in candidates.iter().enumerate() {
        let covered = chosen
            .iter()
            .any(|&j| (p - &candidates[j]).norm() <= spacing);
        if !covered {
            chosen.push(i);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complex_structure_squares_to_minus_one() {
        let v = Point::from_vec(vec![1.0, 2.0, -0.5, 3.0]);
        let jv = apply_i(&v);
        let jjv = apply_i(&jv);
        assert!((jjv + &v).norm() < 1e-15);
        assert!((jv.dot(&v)).abs() < 1e-15);
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [2usize, 4, 6] {
            for _ in 0..20 {
                let w = random_unit_vector(&mut rng, dim);
                let f = frame_with_last_axis(&w);
                assert!(orthonormality_defect(&f) < 1e-12);
                assert!((f.column(dim - 1) - &w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn halton_nodes_fill_the_ball() {
        let nodes = halton_ball_nodes(512, 2);
        assert_eq!(nodes.len(), 512);
        assert!(nodes.iter().all(|p| p.norm() <= 1.0));
        // Symmetric enough that the mean is near the origin.
        let mean = nodes.iter().fold(Point::zeros(2), |a, b| a + b) / 512.0;
        assert!(mean.norm() < 0.05);
    }
}
