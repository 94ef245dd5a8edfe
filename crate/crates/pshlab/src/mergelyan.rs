//! Uniform approximation of a function plurisubharmonic on the domain and
//! continuous up to the boundary by functions plurisubharmonic on a
//! neighborhood of the closure: translated copies glued with smooth
//! cutoffs over the shrinking cover, v = max_j f_j with
//! f_j = phi_j + 3 omega(nu) (xi_j + c |z|^2).
//!
//! The cutoffs xi_k are built as a maximum of smooth radial pits centered
//! at the K_k samples: each pit plus c|z|^2 is plurisubharmonic by the
//! closed-form curvature bound, and a maximum of plurisubharmonic
//! functions stays plurisubharmonic, so the construction is sound for any
//! sampling density.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cover::Cover;
use crate::domain::DomainError;
use crate::geometry::{random_in_ball, Point};
use crate::psh::ScalarField;
use crate::special::SpecialError;

#[derive(Debug, Error)]
pub enum MergelyanError {
    #[error("translation size {nu} must be positive and below eps_w/2 = {limit}")]
    NuTooLarge { nu: f64, limit: f64 },
    #[error("a translated sample point left the domain (atlas direction inconsistency)")]
    TranslateEscapes,
    #[error("approximant undefined at distance {at_distance} from a boundary sample")]
    MarginViolated { at_distance: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

pub type MergelyanResult<T> = Result<T, MergelyanError>;

/// Quintic smoothstep, C^2 across both clamp joints.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// max |S''| on [0,1] for the quintic smoothstep, attained at (3 +- sqrt 3)/6.
pub fn smoothstep_d2_max() -> f64 {
    10.0 / 3f64.sqrt()
}

/// The cutoff family xi_k over a cover: 0 near K_k, -1 outside B_k, and
/// xi_k + curvature_bound |z|^2 plurisubharmonic.
pub struct CutoffFamily {
    pub cover: Arc<Cover>,
    /// Ramp half-width a = eps_w / 4.
    pub ramp: f64,
    /// c with xi_k + c |z|^2 plurisubharmonic: the closed-form bound
    /// max|S''| (4/eps_w)^2 times a safety factor 2.
    pub curvature_bound: f64,
}

pub fn build_cutoffs(cover: Arc<Cover>) -> CutoffFamily {
    let ramp = cover.eps_w / 4.0;
    let curvature_bound = 2.0 * smoothstep_d2_max() / (ramp * ramp);
    CutoffFamily {
        cover,
        ramp,
        curvature_bound,
    }
}

impl CutoffFamily {
    pub fn xi(&self, k: usize, z: &Point) -> f64 {
        let d = self.cover.dist_to_k(k, z);
        -smoothstep((d - self.ramp) / self.ramp)
    }
}

/// The glued approximant v = max_j f_j, kept as data so pieces stay
/// individually inspectable.
pub struct Approximant {
    pub cutoffs: Arc<CutoffFamily>,
    pub phi: ScalarField,
    pub nu: f64,
    pub omega_nu: f64,
    /// Per-piece translation nu * w_j; the core piece does not translate.
    pub shifts: Vec<Point>,
}

impl Approximant {
    pub fn cover(&self) -> &Cover {
        &self.cutoffs.cover
    }

    /// Where piece j contributes: the closed B_j intersected with the
    /// pulled-back domain for the patch pieces; the core piece covers all
    /// of the domain (its correction is globally plurisubharmonic, and
    /// near the boundary it is dominated by the patch pieces).
    pub fn piece_region(&self, j: usize, z: &Point) -> bool {
        let cover = self.cover();
        if j == 0 {
            return cover.domain.is_inside(z);
        }
        if cover.w_depth(j, z) < cover.eps_w / 2.0 {
            return false;
        }
        cover.domain.is_inside(&(z + &self.shifts[j]))
    }

    pub fn piece_value(&self, j: usize, z: &Point) -> f64 {
        if !self.piece_region(j, z) {
            return f64::NEG_INFINITY;
        }
        let shifted = z + &self.shifts[j];
        let correction = self.cutoffs.xi(j, z)
            + self.cutoffs.curvature_bound * z.norm_squared();
        self.phi.value(&shifted) + 3.0 * self.omega_nu * correction
    }

    pub fn value(&self, z: &Point) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.cover().piece_count() {
            let fj = self.piece_value(j, z);
            if fj > best {
                best = fj;
            }
        }
        best
    }

    pub fn in_region(&self, z: &Point) -> bool {
        (0..self.cover().piece_count()).any(|j| self.piece_region(j, z))
    }

    /// The approximant as a field over the union of the piece regions, a
    /// neighborhood of the closure.
    pub fn field(self: &Arc<Self>) -> ScalarField {
        let a = self.clone();
        let b = self.clone();
        ScalarField::new(
            format!("approximant({}, nu={:.3e})", self.phi.label, self.nu),
            Arc::new(move |z: &Point| b.in_region(z)),
            Arc::new(move |z: &Point| a.value(z)),
        )
    }
}

/// Assembles the approximant for translation size nu and modulus value
/// omega_nu = omega_phi(nu). Verifies on samples that every translated
/// evaluation point stays inside the domain.
pub fn build_approximant(
    cutoffs: Arc<CutoffFamily>,
    phi: ScalarField,
    nu: f64,
    omega_nu: f64,
    seed: u64,
) -> MergelyanResult<Arc<Approximant>> {
    let cover = cutoffs.cover.clone();
    let limit = cover.eps_w / 2.0;
    if !(nu > 0.0 && nu < limit) {
        return Err(MergelyanError::NuTooLarge { nu, limit });
    }
    let domain = cover.domain.clone();
    let dim = domain.real_dim();
    let mut shifts = vec![Point::zeros(dim)];
    for patch in &domain.atlas {
        shifts.push(patch.w_dir() * nu);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (j, patch) in domain.atlas.iter().enumerate() {
        let shift = &shifts[j + 1];
        let radius = 4.0 * patch.radius - cover.eps_w / 2.0;
        let mut found = 0usize;
        let mut tries = 0usize;
        while found < 16 && tries < 400 {
            tries += 1;
            let z = random_in_ball(&mut rng, &patch.center, radius);
            if !domain.is_inside(&z) {
                continue;
            }
            found += 1;
            if !domain.is_inside(&(&z + shift)) {
                return Err(MergelyanError::TranslateEscapes);
            }
        }
    }

    Ok(Arc::new(Approximant {
        cutoffs,
        phi,
        nu,
        omega_nu,
        shifts,
    }))
}

/// sup |phi - v| over interior samples plus points pushed a small step
/// inside from boundary samples; returns (sup, points tested).
pub fn sup_deviation(approx: &Approximant, samples: usize, seed: u64) -> (f64, usize) {
    let cover = approx.cover();
    let domain = &cover.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = domain.sample_interior(&mut rng, samples);
    if let Ok(boundary) = domain.sample_boundary_with(&mut rng, samples / 4) {
        for q in boundary {
            if let Some(p) = domain.covering_patch(&q) {
                let z = &q + domain.atlas[p].w_dir() * (0.1 * cover.eps_w);
                if domain.is_inside(&z) {
                    pts.push(z);
                }
            }
        }
    }
    let mut sup = 0.0f64;
    for z in &pts {
        let dev = (approx.phi.value(z) - approx.value(z)).abs();
        if dev > sup {
            sup = dev;
        }
    }
    (sup, pts.len())
}

/// Hand-off quality at the piece seams: at samples z on the sphere
/// bounding B_j, the best other piece must exceed f_j by at least
/// omega(nu). Returns (min over samples of f_best - f_j, samples tested).
pub fn crossing_domination(approx: &Approximant, seed: u64) -> (f64, usize) {
    let cover = approx.cover();
    let domain = &cover.domain;
    let dim = domain.real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_gap = f64::INFINITY;
    let mut tested = 0usize;
    for j in 1..cover.piece_count() {
        let patch = &domain.atlas[j - 1];
        let radius = 4.0 * patch.radius - cover.eps_w / 2.0;
        let n = if dim == 2 { 64 } else { 128 };
        for i in 0..n {
            let dir = if dim == 2 {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                Point::from_vec(vec![a.cos(), a.sin()])
            } else {
                crate::geometry::random_unit_vector(&mut rng, dim)
            };
            let z = &patch.center + dir * radius;
            let fj = approx.piece_value(j, &z);
            if !fj.is_finite() {
                continue;
            }
            let mut best_other = f64::NEG_INFINITY;
            for k in 0..cover.piece_count() {
                if k != j {
                    best_other = best_other.max(approx.piece_value(k, &z));
                }
            }
            tested += 1;
            min_gap = min_gap.min(best_other - fj);
        }
    }
    (min_gap, tested)
}

/// Verifies on boundary samples that the approximant is defined on the
/// gain-sized collar B(z, f(nu)) around the closure, and returns the
/// certified margin f(nu).
pub fn certify_neighborhood(approx: &Approximant, seed: u64) -> MergelyanResult<f64> {
    let cover = approx.cover();
    let domain = &cover.domain;
    let margin = domain.regularity.gain.gain(approx.nu)?;
    let dim = domain.real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boundary = domain.sample_boundary_with(&mut rng, 256)?;
    let n_dirs = if dim == 2 { 16 } else { 32 };
    let mut dirs = Vec::with_capacity(n_dirs);
    if dim == 2 {
        for i in 0..n_dirs {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n_dirs as f64;
            dirs.push(Point::from_vec(vec![a.cos(), a.sin()]));
        }
    } else {
        for _ in 0..n_dirs {
            dirs.push(crate::geometry::random_unit_vector(&mut rng, dim));
        }
    }
    for q in &boundary {
        for dir in &dirs {
            for frac in [0.5, 0.999] {
                let z = q + dir * (frac * margin);
                if !approx.in_region(&z) {
                    return Err(MergelyanError::MarginViolated {
                        at_distance: frac * margin,
                    });
                }
            }
        }
    }
    Ok(margin)
}

/// Mollification at a quarter of the certified margin: smooth on the
/// closure, plurisubharmonic where the approximant is.
pub fn smooth_approximant(approx: &Arc<Approximant>, margin: f64) -> ScalarField {
    crate::psh::mollify(&approx.field(), margin / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build_domain;
    use crate::cover::build_cover;
    use crate::geometry::norm_sq;
    use crate::psh::{check_psh, modulus_of_continuity};
    use std::collections::BTreeMap;
    use std::sync::OnceLock;

    fn ball_cutoffs() -> Arc<CutoffFamily> {
        static CELL: OnceLock<Arc<CutoffFamily>> = OnceLock::new();
        CELL.get_or_init(|| {
            let dom = build_domain("ball", &BTreeMap::new()).unwrap();
            let cover = build_cover(dom, 11).unwrap();
            Arc::new(build_cutoffs(cover))
        })
        .clone()
    }

    fn re_z1() -> ScalarField {
        ScalarField::everywhere("re_z1", Arc::new(|z: &Point| z[0]))
    }

    #[test]
    fn cutoff_range_plateau_and_support() {
        let cutoffs = ball_cutoffs();
        let cover = &cutoffs.cover;
        let eps_w = cover.eps_w;
        for k in 1..cover.piece_count().min(9) {
            for p in cover.k_clouds[k].iter().step_by(11) {
                assert_eq!(cutoffs.xi(k, p), 0.0, "cutoff must vanish on K_{k}");
            }
            // Well outside B_k the cutoff sits at -1.
            let patch = &cover.domain.atlas[k - 1];
            let far = &patch.center * (1.0 - 6.0 * patch.radius / patch.center.norm());
            assert!(cover.w_depth(k, &far) < eps_w / 2.0);
            assert_eq!(cutoffs.xi(k, &far), -1.0);
            // And everywhere the value stays within [-1, 0].
            let probe = &patch.center * 0.5;
            let v = cutoffs.xi(k, &probe);
            assert!((-1.0..=0.0).contains(&v));
        }
    }

    #[test]
    fn nu_ceiling_is_enforced() {
        let cutoffs = ball_cutoffs();
        let eps_w = cutoffs.cover.eps_w;
        match build_approximant(cutoffs, re_z1(), eps_w, 0.1, 3) {
            Err(MergelyanError::NuTooLarge { .. }) => {}
            _ => panic!("expected NuTooLarge"),
        }
    }

    #[test]
    fn approximant_tracks_target_and_refines() {
        let cutoffs = ball_cutoffs();
        let cover = cutoffs.cover.clone();
        let phi = re_z1();
        let table = modulus_of_continuity(&phi, &cover.domain, 3000, 5);
        let nu = 0.02;
        let sup_bound = |nu: f64, om: f64| {
            let s = (cover.domain.enclosing_center.norm() + cover.domain.enclosing_radius).powi(2);
            let _ = nu;
            om * (1.0 + 3.0 * cutoffs.curvature_bound * s)
        };

        let a1 = build_approximant(cutoffs.clone(), re_z1(), nu, table.value(nu), 3).unwrap();
        let (dev1, n1) = sup_deviation(&a1, 1200, 9);
        assert!(n1 > 1200);
        assert!(
            dev1 <= sup_bound(nu, table.value(nu)),
            "deviation {dev1} above bound {}",
            sup_bound(nu, table.value(nu))
        );

        let a2 = build_approximant(cutoffs.clone(), re_z1(), nu / 2.0, table.value(nu / 2.0), 3)
            .unwrap();
        let (dev2, _) = sup_deviation(&a2, 1200, 9);
        assert!(
            dev2 <= dev1 * 1.05 + 1e-12,
            "halving nu should not worsen the fit: {dev2} vs {dev1}"
        );
    }

    #[test]
    fn approximant_is_psh_and_dominates_at_seams() {
        let cutoffs = ball_cutoffs();
        let cover = cutoffs.cover.clone();
        let phi = re_z1();
        let table = modulus_of_continuity(&phi, &cover.domain, 3000, 5);
        let nu = 0.02;
        let omega_nu = table.value(nu);
        let approx = build_approximant(cutoffs, phi, nu, omega_nu, 3).unwrap();

        let (gap, tested) = crossing_domination(&approx, 17);
        assert!(tested > 200);
        assert!(
            gap >= omega_nu * (1.0 - 1e-6),
            "seam gap {gap} below omega(nu) = {omega_nu}"
        );

        let field = Arc::new(approx).field();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = cover.domain.sample_interior(&mut rng, 50);
        let report = check_psh(&field, &pts, 2, &[1e-3, 1e-2], 1e-9, 23).unwrap();
        assert!(report.verdict, "worst defect {}", report.worst_defect);
    }

    #[test]
    fn certified_neighborhood_margin() {
        let cutoffs = ball_cutoffs();
        let phi = ScalarField::everywhere("norm_sq", Arc::new(|z: &Point| norm_sq(z)));
        let nu = 0.02;
        let approx = build_approximant(cutoffs, phi, nu, 2.0 * nu, 3).unwrap();
        let margin = certify_neighborhood(&approx, 29).unwrap();
        assert!(margin > 0.0);

        // The mollified approximant stays close to the raw one well inside.
        let arc = Arc::new(approx);
        let smooth = smooth_approximant(&arc, margin);
        let z = Point::from_vec(vec![0.3, -0.2]);
        let raw = arc.value(&z);
        assert!((smooth.value(&z) - raw).abs() < 0.2 * raw.abs().max(1.0));
    }
}
