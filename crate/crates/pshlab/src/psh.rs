//! Numerical plurisubharmonicity machinery: scalar fields with definition
//! regions, circle-mean sub-mean-value tests along complex lines, finite
//! difference Levi forms, empirical moduli of continuity, and a
//! deterministic quasi-Monte-Carlo mollifier.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::domain::BoundedDomain;
use crate::geometry::{apply_i, halton_ball_nodes, random_unit_vector, Point};

#[derive(Debug, Error)]
pub enum PshError {
    #[error("evaluation point or stencil leaves the field's region")]
    RegionViolation,
    #[error("stencil hit a non-finite field value")]
    NonFinite,
}

pub type PshResult<T> = Result<T, PshError>;

type EvalFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type RegionFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// Extended-real-valued function on a region of C^n; -inf values are legal
/// and mark "undefined here" pieces in max constructions.
#[derive(Clone)]
pub struct ScalarField {
    pub label: String,
    eval: EvalFn,
    region: RegionFn,
}

impl ScalarField {
    pub fn new(label: impl Into<String>, region: RegionFn, eval: EvalFn) -> Self {
        ScalarField {
            label: label.into(),
            eval,
            region,
        }
    }

    /// Field defined on all of R^{2n}.
    pub fn everywhere(label: impl Into<String>, eval: EvalFn) -> Self {
        ScalarField::new(label, Arc::new(|_: &Point| true), eval)
    }

    pub fn value(&self, z: &Point) -> f64 {
        (self.eval)(z)
    }

    pub fn in_region(&self, z: &Point) -> bool {
        (self.region)(z)
    }

    /// Pointwise maximum; -inf acts as the identity, the region is the
    /// union of the pieces' regions.
    pub fn max_of(label: impl Into<String>, pieces: Vec<ScalarField>) -> ScalarField {
        let pieces = Arc::new(pieces);
        let pieces_r = pieces.clone();
        ScalarField::new(
            label,
            Arc::new(move |z: &Point| pieces_r.iter().any(|p| p.in_region(z))),
            Arc::new(move |z: &Point| {
                pieces
                    .iter()
                    .filter(|p| p.in_region(z))
                    .map(|p| p.value(z))
                    .fold(f64::NEG_INFINITY, f64::max)
            }),
        )
    }
}

/// Trapezoidal mean of u over the complex circle
/// {center + radius e^{i theta} direction}; exact for trigonometric
/// polynomials of degree below nodes/2. Returns -inf if any node is -inf.
pub fn circle_mean(
    u: &ScalarField,
    center: &Point,
    direction: &Point,
    radius: f64,
    nodes: usize,
) -> PshResult<f64> {
    assert!(nodes >= 16, "too few quadrature nodes");
    let jdir = apply_i(direction);
    let mut acc = 0.0f64;
    for k in 0..nodes {
        let th = 2.0 * std::f64::consts::PI * k as f64 / nodes as f64;
        let p = center + (direction * th.cos() + &jdir * th.sin()) * radius;
        if !u.in_region(&p) {
            return Err(PshError::RegionViolation);
        }
        let v = u.value(&p);
        if v == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        if !v.is_finite() {
            return Err(PshError::NonFinite);
        }
        acc += v;
    }
    Ok(acc / nodes as f64)
}

#[derive(Debug, Serialize)]
pub struct PshWitness {
    pub center: Vec<f64>,
    pub radius: f64,
    pub defect: f64,
}

#[derive(Debug, Serialize)]
pub struct PshReport {
    pub verdict: bool,
    pub worst_defect: f64,
    pub checked: usize,
    pub skipped: usize,
    pub witnesses: Vec<PshWitness>,
}

/// Sub-mean-value test over sampled centers, complex directions and radii:
/// passes iff circle_mean - u(center) >= -tol everywhere. Configurations
/// whose circle leaves the region are skipped and counted.
pub fn check_psh(
    u: &ScalarField,
    sample_points: &[Point],
    directions: usize,
    radii: &[f64],
    tol: f64,
    seed: u64,
) -> PshResult<PshReport> {
    let nodes = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for z in sample_points {
        if !u.in_region(z) {
            skipped += 1;
            continue;
        }
        let uz = u.value(z);
        if uz == f64::NEG_INFINITY {
            skipped += 1;
            continue;
        }
        for _ in 0..directions {
            let dir = random_unit_vector(&mut rng, z.len());
            for &r in radii {
                match circle_mean(u, z, &dir, r, nodes) {
                    Ok(mean) => {
                        let defect = if mean == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            mean - uz
                        };
                        checked += 1;
                        if defect < worst {
                            worst = defect;
                        }
                        if defect < -tol && witnesses.len() < 32 {
                            witnesses.push(PshWitness {
                                center: z.as_slice().to_vec(),
                                radius: r,
                                defect,
                            });
                        }
                    }
                    Err(PshError::RegionViolation) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(PshReport {
        verdict: witnesses.is_empty() && checked > 0,
        worst_defect: worst,
        checked,
        skipped,
        witnesses,
    })
}

/// Finite-difference complex Hessian at a point.
pub struct LeviReport {
    pub point: Point,
    pub hessian: DMatrix<Complex64>,
    pub min_eigenvalue: f64,
    pub step: f64,
    pub asymmetry: f64,
}

fn stencil_value(u: &ScalarField, p: &Point) -> PshResult<f64> {
    if !u.in_region(p) {
        return Err(PshError::RegionViolation);
    }
    let v = u.value(p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(PshError::NonFinite)
    }
}

/// Central-difference Levi form dd^c-normalized as H_jk = d^2 u / dz_j dz_k-bar,
/// assembled from real second differences along e_j, i e_j, e_k, i e_k; the
/// matrix is Hermitian-symmetrized and the asymmetry recorded. The
/// comparison dd^c u >= c dd^c |z|^2 corresponds to H >= c I.
pub fn levi_form(u: &ScalarField, point: &Point, h: f64) -> PshResult<LeviReport> {
    let dim = point.len();
    assert!(dim % 2 == 0, "levi form needs C^n coordinates");
    let n = dim / 2;
    let axis = |k: usize, im: bool| -> Point {
        let mut e = Point::zeros(dim);
        e[2 * k + usize::from(im)] = 1.0;
        e
    };
    let u0 = stencil_value(u, point)?;
    let second = |a: &Point| -> PshResult<f64> {
        let up = stencil_value(u, &(point + a * h))?;
        let dn = stencil_value(u, &(point - a * h))?;
        Ok((up - 2.0 * u0 + dn) / (h * h))
    };
    let mixed = |a: &Point, b: &Point| -> PshResult<f64> {
        let pp = stencil_value(u, &(point + a * h + b * h))?;
        let pm = stencil_value(u, &(point + a * h - b * h))?;
        let mp = stencil_value(u, &(point - a * h + b * h))?;
        let mm = stencil_value(u, &(point - a * h - b * h))?;
        Ok((pp - pm - mp + mm) / (4.0 * h * h))
    };

    let mut hess = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let xj = axis(j, false);
        let yj = axis(j, true);
        for k in 0..n {
            let xk = axis(k, false);
            let yk = axis(k, true);
            let (re, im) = if j == k {
                ((second(&xj)? + second(&yj)?) / 4.0, 0.0)
            } else {
                (
                    (mixed(&xj, &xk)? + mixed(&yj, &yk)?) / 4.0,
                    (mixed(&xj, &yk)? - mixed(&yj, &xk)?) / 4.0,
                )
            };
            hess[(j, k)] = Complex64::new(re, im);
        }
    }
    let adjoint = hess.adjoint();
    let mut asymmetry = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            asymmetry = asymmetry.max((hess[(j, k)] - adjoint[(j, k)]).norm());
        }
    }
    let herm = (&hess + &adjoint) * Complex64::new(0.5, 0.0);
    let min_eigenvalue = hermitian_min_eigenvalue(&herm);
    Ok(LeviReport {
        point: point.clone(),
        hessian: herm,
        min_eigenvalue,
        step: h,
        asymmetry,
    })
}

/// Smallest eigenvalue of a complex Hermitian matrix via the real symmetric
/// embedding [[A, -B], [B, A]] of H = A + iB, whose spectrum is that of H
/// with doubled multiplicities.
pub fn hermitian_min_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut em = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let a = h[(j, k)].re;
            let b = h[(j, k)].im;
            em[(j, k)] = a;
            em[(j + n, k + n)] = a;
            em[(j, k + n)] = -b;
            em[(j + n, k)] = b;
        }
    }
    let eig = em.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Empirical modulus-of-continuity envelope: binned running max of
/// |u(p) - u(q)| over sampled closure pairs at distance <= r.
#[derive(Debug, Clone, Serialize)]
pub struct ModulusTable {
    pub rs: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl ModulusTable {
    /// Conservative envelope value at distance r: the bin at or above r.
    pub fn value(&self, r: f64) -> f64 {
        for (rr, om) in self.rs.iter().zip(&self.omegas) {
            if *rr >= r {
                return *om;
            }
        }
        *self.omegas.last().unwrap_or(&0.0)
    }
}

pub fn modulus_of_continuity(
    u: &ScalarField,
    domain: &BoundedDomain,
    pair_samples: usize,
    seed: u64,
) -> ModulusTable {
    assert!(pair_samples >= 1000, "too few pairs for a stable envelope");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = 48usize;
    let r_min = 1e-6 * domain.diameter;
    let r_max = domain.diameter;
    let rs: Vec<f64> = (0..bins)
        .map(|k| r_min * (r_max / r_min).powf(k as f64 / (bins - 1) as f64))
        .collect();
    let mut omegas = vec![0.0f64; bins];
    let anchors = domain.sample_interior(&mut rng, (pair_samples / 8).max(8));
    let mut placed = 0usize;
    let mut guard = 0usize;
    while placed < pair_samples {
        guard += 1;
        if guard > 40 * pair_samples {
            break;
        }
        let p = &anchors[rng.gen_range(0..anchors.len())];
        let r = r_min * (r_max / r_min).powf(rng.gen_range(0.0..1.0f64));
        let q = p + random_unit_vector(&mut rng, p.len()) * r;
        if !domain.in_closure(&q) || !u.in_region(&q) || !u.in_region(p) {
            continue;
        }
        let gap = (u.value(p) - u.value(&q)).abs();
        let d = (p - &q).norm();
        let bin = rs.iter().position(|&rr| rr >= d).unwrap_or(bins - 1);
        if gap > omegas[bin] {
            omegas[bin] = gap;
        }
        placed += 1;
    }
    // Running max makes the envelope monotone.
    for k in 1..bins {
        omegas[k] = omegas[k].max(omegas[k - 1]);
    }
    ModulusTable { rs, omegas }
}

/// Kernel constant of the mollifier: mollify(|z|^2, r) = |z|^2 + c r^2 with
/// c computed by the same quadrature, so it is exactly self-consistent.
pub fn mollifier_kernel_constant(dim: usize) -> f64 {
    let nodes = mollifier_nodes(dim);
    let mut wsum = 0.0;
    let mut msum = 0.0;
    for nd in &nodes {
        let w = mollifier_weight(nd.norm());
        wsum += w;
        msum += w * nd.norm_squared();
    }
    msum / wsum
}

fn mollifier_weight(t: f64) -> f64 {
    let s = (1.0 - t * t).max(0.0);
    s * s * s
}

/// 2^12 fixed kernel nodes: 2^11 Halton ball points plus their negatives,
/// so every odd moment vanishes exactly and affine fields are reproduced.
fn mollifier_nodes(dim: usize) -> Vec<Point> {
    let half = halton_ball_nodes(1 << 11, dim);
    let mut nodes = Vec::with_capacity(1 << 12);
    for nd in half {
        nodes.push(-&nd);
        nodes.push(nd);
    }
    nodes
}

/// Weighted quasi-Monte-Carlo average over B(z, radius) with a fixed smooth
/// radial kernel; the region shrinks by the kernel radius.
pub fn mollify(u: &ScalarField, radius: f64) -> ScalarField {
    assert!(radius > 0.0);
    let base = u.clone();
    let base_r = u.clone();
    let label = format!("mollify({}, {:.3e})", u.label, radius);
    // Node set is fixed per dimension and shared; built lazily on first use.
    let cache: Arc<std::sync::OnceLock<(Vec<Point>, Vec<f64>, f64)>> =
        Arc::new(std::sync::OnceLock::new());
    let cache_r = cache.clone();
    let make = move |dim: usize| -> (Vec<Point>, Vec<f64>, f64) {
        let nodes = mollifier_nodes(dim);
        let weights: Vec<f64> = nodes.iter().map(|n| mollifier_weight(n.norm())).collect();
        let total: f64 = weights.iter().sum();
        (nodes, weights, total)
    };
    let make_r = make.clone();
    ScalarField::new(
        label,
        Arc::new(move |z: &Point| {
            let (nodes, _, _) = cache_r.get_or_init(|| make_r(z.len()));
            nodes.iter().all(|nd| base_r.in_region(&(z + nd * radius)))
        }),
        Arc::new(move |z: &Point| {
            let (nodes, weights, total) = cache.get_or_init(|| make(z.len()));
            let mut acc = 0.0;
            for (nd, w) in nodes.iter().zip(weights) {
                let v = base.value(&(z + nd * radius));
                if v == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                acc += w * v;
            }
            acc / total
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn norm_sq_field() -> ScalarField {
        ScalarField::everywhere("|z|^2", Arc::new(|z: &Point| z.norm_squared()))
    }

    fn pt(v: Vec<f64>) -> Point {
        Point::from_vec(v)
    }

    #[test]
    fn circle_mean_of_norm_squared_adds_radius_squared() {
        let u = norm_sq_field();
        let c = pt(vec![0.3, -0.2, 0.1, 0.5]);
        let dir = pt(vec![1.0, 0.0, 0.0, 0.0]);
        let m = circle_mean(&u, &c, &dir, 0.25, 64).unwrap();
        assert_abs_diff_eq!(m, c.norm_squared() + 0.25 * 0.25, epsilon = 1e-14);
    }

    #[test]
    fn circle_mean_pluriharmonic_and_log_modulus() {
        let re_z1 = ScalarField::everywhere("Re z1", Arc::new(|z: &Point| z[0]));
        let c = pt(vec![0.4, 0.1]);
        let dir = pt(vec![1.0, 0.0]);
        let m = circle_mean(&re_z1, &c, &dir, 0.3, 64).unwrap();
        assert_abs_diff_eq!(m, 0.4, epsilon = 1e-14);

        // log|z1| is harmonic away from the origin: mean-value equality on
        // circles not encircling 0.
        let log_mod = ScalarField::everywhere(
            "log|z1|",
            Arc::new(|z: &Point| 0.5 * (z[0] * z[0] + z[1] * z[1]).ln()),
        );
        let c = pt(vec![1.0, 0.5]);
        let m = circle_mean(&log_mod, &c, &dir, 0.3, 256).unwrap();
        assert_abs_diff_eq!(m, 0.5 * (1.25f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn check_psh_passes_convex_and_fails_concave() {
        let pts: Vec<Point> = vec![pt(vec![0.0, 0.0]), pt(vec![0.2, -0.3]), pt(vec![-0.4, 0.1])];
        let radii = [0.01, 0.05, 0.1];
        let up = check_psh(&norm_sq_field(), &pts, 4, &radii, 1e-9, 7).unwrap();
        assert!(up.verdict);
        assert!(up.worst_defect >= 0.01 * 0.01 - 1e-12);

        let down = ScalarField::everywhere("-|z|^2", Arc::new(|z: &Point| -z.norm_squared()));
        let dn = check_psh(&down, &pts, 4, &radii, 1e-9, 7).unwrap();
        assert!(!dn.verdict);
        assert!(!dn.witnesses.is_empty());
    }

    #[test]
    fn check_psh_neg_log_distance_on_disc() {
        // -log(1 - |z|) on the unit disc is PSH (radially convex increasing).
        let u = ScalarField::new(
            "-log delta",
            Arc::new(|z: &Point| z.norm() < 1.0),
            Arc::new(|z: &Point| -(1.0 - z.norm()).ln()),
        );
        let pts: Vec<Point> = vec![
            pt(vec![0.0, 0.0]),
            pt(vec![0.5, 0.0]),
            pt(vec![-0.3, 0.6]),
            pt(vec![0.1, -0.8]),
        ];
        let radii = [1e-3, 1e-2, 5e-2];
        let rep = check_psh(&u, &pts, 6, &radii, 1e-9, 11).unwrap();
        assert!(rep.verdict, "worst defect {}", rep.worst_defect);
    }

    #[test]
    fn levi_form_identity_and_pluriharmonic() {
        let u = norm_sq_field();
        let z = pt(vec![0.1, 0.2, -0.3, 0.05]);
        let rep = levi_form(&u, &z, 1e-3).unwrap();
        assert_eq!(rep.hessian.nrows(), 2);
        for j in 0..2 {
            for k in 0..2 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((rep.hessian[(j, k)] - Complex64::new(want, 0.0)).norm() < 1e-8);
            }
        }
        assert!((rep.min_eigenvalue - 1.0).abs() < 1e-8);

        // Re(z1^2) = x^2 - y^2 is pluriharmonic: zero Levi form.
        let ph = ScalarField::everywhere(
            "Re z1^2",
            Arc::new(|z: &Point| z[0] * z[0] - z[1] * z[1]),
        );
        let rep = levi_form(&ph, &pt(vec![0.3, -0.2]), 1e-3).unwrap();
        assert!(rep.hessian[(0, 0)].norm() < 1e-9);
    }

    #[test]
    fn levi_form_off_diagonal_coupling() {
        // u = Re(z1 conj(z2)) has complex Hessian [[0, 1/2], [1/2, 0]]
        // under H_jk = d^2 u / dz_j dz_k-bar: eigenvalues +-1/2.
        let u = ScalarField::everywhere(
            "Re(z1 z2bar)",
            Arc::new(|z: &Point| z[0] * z[2] + z[1] * z[3]),
        );
        let rep = levi_form(&u, &pt(vec![0.1, 0.0, -0.2, 0.3]), 1e-3).unwrap();
        assert!((rep.hessian[(0, 1)].re - 0.5).abs() < 1e-8);
        assert!((rep.min_eigenvalue + 0.5).abs() < 1e-8);
    }

    #[test]
    fn levi_form_quartic_shows_second_order_convergence() {
        // |z1|^4 has H_11 = 4|z1|^2 with a genuine O(h^2) truncation error,
        // so halving h divides the error by about 4.
        let u = ScalarField::everywhere(
            "|z1|^4",
            Arc::new(|z: &Point| (z[0] * z[0] + z[1] * z[1]).powi(2)),
        );
        let z = pt(vec![0.6, 0.3]);
        let exact = 4.0 * z.norm_squared();
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&h| (levi_form(&u, &z, h).unwrap().hessian[(0, 0)].re - exact).abs())
            .collect();
        for k in 0..2 {
            let ratio = errs[k] / errs[k + 1];
            assert!(
                (ratio - 4.0).abs() <= 4.0 * 0.5,
                "ratio {ratio} errs {errs:?}"
            );
        }
    }

    #[test]
    fn levi_form_cubic_is_superconvergent() {
        // Symmetric second differences are exact on cubics, so the error on
        // |z|^2 + Re(z1^3) sits at rounding level for every step.
        let u = ScalarField::everywhere(
            "|z|^2 + Re z1^3",
            Arc::new(|z: &Point| {
                z.norm_squared() + z[0] * z[0] * z[0] - 3.0 * z[0] * z[1] * z[1]
            }),
        );
        let z = pt(vec![0.2, -0.1]);
        for h in [1e-2, 5e-3, 2.5e-3] {
            let rep = levi_form(&u, &z, h).unwrap();
            assert!((rep.hessian[(0, 0)].re - 1.0).abs() < 1e-9, "h={h}");
        }
    }

    #[test]
    fn modulus_envelope_of_linear_field() {
        let dom = crate::catalog::build_domain("ball", &Default::default()).unwrap();
        let u = ScalarField::everywhere("Re z1", Arc::new(|z: &Point| z[0]));
        let table = modulus_of_continuity(&u, &dom, 4000, 23);
        for (r, om) in table.rs.iter().zip(&table.omegas) {
            assert!(*om <= *r + 1e-12);
        }
        // Near the diameter the envelope should approach the true modulus.
        let r_big = table.rs[table.rs.len() - 4];
        assert!(table.value(r_big) >= 0.5 * r_big);
    }

    #[test]
    fn mollify_affine_invariance_and_kernel_constant() {
        let aff = ScalarField::everywhere("affine", Arc::new(|z: &Point| 2.0 * z[0] - z[1] + 3.0));
        let sm = mollify(&aff, 0.1);
        let z = pt(vec![0.2, -0.4]);
        assert!((sm.value(&z) - aff.value(&z)).abs() < 1e-6);

        let c = mollifier_kernel_constant(2);
        assert!(c > 0.0 && c < 1.0);
        let sq = mollify(&norm_sq_field(), 0.2);
        let want = z.norm_squared() + c * 0.2 * 0.2;
        assert!((sq.value(&z) - want).abs() < 1e-10);
    }

    #[test]
    fn mollify_shrinks_region_and_preserves_psh() {
        let u = ScalarField::new(
            "-log delta",
            Arc::new(|z: &Point| z.norm() < 1.0),
            Arc::new(|z: &Point| -(1.0 - z.norm()).ln()),
        );
        let sm = mollify(&u, 0.05);
        assert!(sm.in_region(&pt(vec![0.0, 0.0])));
        assert!(!sm.in_region(&pt(vec![0.96, 0.0])));
        let pts: Vec<Point> = vec![pt(vec![0.0, 0.0]), pt(vec![0.4, -0.3])];
        let rep = check_psh(&sm, &pts, 3, &[1e-2, 5e-2], 1e-9, 3).unwrap();
        assert!(rep.verdict, "worst defect {}", rep.worst_defect);
    }

    #[test]
    fn max_of_fields_stays_psh_and_handles_neg_inf() {
        let a = norm_sq_field();
        let b = ScalarField::everywhere("re", Arc::new(|z: &Point| z[0] - 0.2));
        let nowhere = ScalarField::new(
            "empty",
            Arc::new(|_: &Point| true),
            Arc::new(|_: &Point| f64::NEG_INFINITY),
        );
        let m = ScalarField::max_of("max", vec![a, b, nowhere]);
        let pts: Vec<Point> = vec![pt(vec![0.0, 0.0]), pt(vec![0.5, 0.1]), pt(vec![-0.7, 0.3])];
        let rep = check_psh(&m, &pts, 4, &[1e-3, 1e-2, 1e-1], 1e-9, 5).unwrap();
        assert!(rep.verdict, "worst defect {}", rep.worst_defect);
        assert!(m.value(&pt(vec![2.0, 0.0])) == 4.0f64.max(1.8));
    }
}
