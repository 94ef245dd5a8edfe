//! Bounded plurisubharmonic exhaustion functions on low-regularity graph
//! domains: per-patch translated-distance candidates patched together by
//! plateau bumps and a quadratic fallback, the supremum over translation
//! sizes on a geometric grid, and the quantitative checks (negativity,
//! two-sided distance bounds, sup attainment, Levi-form floor).

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{BoundedDomain, DistanceOracle, DomainError};
use crate::geometry::Point;
use crate::mergelyan::{smoothstep, smoothstep_d2_max};
use crate::psh::{check_psh, levi_form, PshError, ScalarField};
use crate::special::SpecialError;

#[derive(Debug, Error)]
pub enum ExhaustionError {
    #[error("gamma = {gamma} too small; domination needs at least {needed}")]
    GammaTooSmall { gamma: f64, needed: f64 },
    #[error("omega ratio fails positivity/decay on the grid: omega({eps_low}) = {omega_low} vs omega({eps_high}) = {omega_high}")]
    OmegaRatioViolation {
        eps_low: f64,
        omega_low: f64,
        eps_high: f64,
        omega_high: f64,
    },
    #[error("sup attained at eps = {attained} below threshold {threshold} (delta = {delta})")]
    AttainmentViolation {
        attained: f64,
        threshold: f64,
        delta: f64,
        trace: Vec<(f64, f64)>,
    },
    #[error("translated point escapes the domain")]
    TranslateEscapes,
    #[error("point lies outside the field's region")]
    OutsideRegion,
    #[error("lambda calibration failed to certify the bump")]
    LambdaCalibration,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Psh(#[from] PshError),
}

pub type ExhaustionResult<T> = Result<T, ExhaustionError>;

/// Which candidate realizes a maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Patch(usize),
    Fallback,
}

/// Build-time knobs; zero fields mean "derive or calibrate".
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionConfig {
    /// Top of the translation range; 0 derives eps_w / c.
    pub eps0: f64,
    /// Divisor c in eps0 = eps_w / c.
    pub c: f64,
    /// Geometric grid ratio.
    pub rho: f64,
    /// Hard floor of the grid; appended exactly as the last member.
    pub grid_floor: f64,
    /// Patch-boundary domination constant; 0 calibrates.
    pub gamma: f64,
    /// C in lambda = C log(eps/f(eps)); 0 calibrates from the bump.
    pub lambda_constant: f64,
    pub seed: u64,
}

impl Default for ExhaustionConfig {
    fn default() -> Self {
        ExhaustionConfig {
            eps0: 0.0,
            c: 2.0,
            rho: 0.9,
            grid_floor: 1e-10,
            gamma: 0.0,
            lambda_constant: 0.0,
            seed: 7,
        }
    }
}

/// Constants fitted from runs; NaN until the corresponding check has run.
#[derive(Debug, Clone, Serialize)]
pub struct FittedConstants {
    /// Sandwich lower constant (global inequality for v_eps).
    pub c1_hat: f64,
    /// Sandwich upper constant.
    pub c2_hat: f64,
    /// Lower-bound constant of the exhaustion in terms of omega(delta).
    pub c1: f64,
    /// Constant inside the Levi-floor logarithm.
    pub c_tilde1: f64,
    /// Attainment threshold eps* >= c_hat delta.
    pub c_hat: f64,
    /// Levi-floor multiplier.
    pub c_levi: f64,
}

impl Default for FittedConstants {
    fn default() -> Self {
        FittedConstants {
            c1_hat: f64::NAN,
            c2_hat: f64::NAN,
            c1: f64::NAN,
            c_tilde1: f64::NAN,
            c_hat: f64::NAN,
            c_levi: f64::NAN,
        }
    }
}

/// One grid member with its derived quantities cached.
#[derive(Debug, Clone, Serialize)]
pub struct GridEps {
    pub eps: f64,
    /// log(1/eps).
    pub l: f64,
    /// Gain f(eps).
    pub f: f64,
    /// log(eps / f(eps)).
    pub log_factor: f64,
    /// lambda(eps) = lambda_constant * log_factor.
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRecord {
    pub point: Vec<f64>,
    pub delta: f64,
    pub lower: f64,
    pub w: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct BoundsReport {
    pub samples: usize,
    pub negative: bool,
    pub worst_w: f64,
    /// Fitted constant of the omega-rate lower bound, halves A/B for
    /// stability inspection.
    pub c1_fit: f64,
    pub c1_fit_a: f64,
    pub c1_fit_b: f64,
    pub upper_holds: bool,
    pub upper_margin: f64,
    /// Fitted sandwich constants for v_eps.
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub records: Vec<BoundRecord>,
}

#[derive(Debug, Serialize)]
pub struct AttainmentReport {
    pub point: Vec<f64>,
    pub delta: f64,
    pub attained_at: f64,
    pub lower_fraction: f64,
    pub branch: Branch,
    /// (eps, w_eps) over the per-point grid.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct AttainmentFit {
    pub c_hat: f64,
    pub c_hat_a: f64,
    pub c_hat_b: f64,
    /// (delta, attained eps*).
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct LeviFloorRecord {
    pub delta: f64,
    pub min_eigenvalue: f64,
    pub floor_shape: f64,
}

#[derive(Debug, Serialize)]
pub struct LeviFloorReport {
    pub c_fit: f64,
    pub passes: bool,
    pub kept: usize,
    pub skipped: usize,
    pub total: usize,
    pub records: Vec<LeviFloorRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayRecord {
    pub k: u32,
    pub delta: f64,
    pub w: f64,
    pub eps_star: f64,
    /// Exact upper envelope log(f(eps0)/(delta+f(eps0)))/log(1/eps0).
    pub upper: f64,
    /// omega(delta), the rate shape of the lower envelope.
    pub omega: f64,
    /// -log 2 / log(1/delta), the constant-free part of the lower envelope.
    pub log_term: f64,
}

/// The exhaustion artifact: immutable after build, evaluation is pure.
pub struct Exhaustion {
    pub domain: Arc<BoundedDomain>,
    oracle: DistanceOracle,
    pub eps0: f64,
    pub rho: f64,
    pub grid_floor: f64,
    pub gamma: f64,
    pub lambda_constant: f64,
    pub seed: u64,
    grid: Vec<GridEps>,
}

struct WDetail {
    delta: f64,
    w: f64,
    eps_star: f64,
    branch: Branch,
}

impl Exhaustion {
    pub fn eps_grid(&self) -> Vec<f64> {
        self.grid.iter().map(|g| g.eps).collect()
    }

    pub fn grid_entry(&self, eps: f64) -> ExhaustionResult<GridEps> {
        let f = self.domain.regularity.gain.gain(eps)?;
        let log_factor = (eps / f).ln();
        Ok(GridEps {
            eps,
            l: (1.0 / eps).ln(),
            f,
            log_factor,
            lambda: self.lambda_constant * log_factor,
        })
    }

    pub fn lambda(&self, eps: f64) -> ExhaustionResult<f64> {
        Ok(self.grid_entry(eps)?.lambda)
    }

    /// Boundary distance through the fast oracle.
    pub fn delta(&self, z: &Point) -> ExhaustionResult<f64> {
        Ok(self.oracle.distance(z)?)
    }

    /// Atlas patches whose half-ball contains z.
    pub fn active_patches(&self, z: &Point) -> Vec<usize> {
        self.domain
            .atlas
            .iter()
            .enumerate()
            .filter(|(_, p)| (z - &p.center).norm() <= p.radius / 2.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Radial plateau bump: log(eps/f) on B(x_j, r_j/3), zero outside
    /// B(x_j, r_j/2), smoothstep ramp in between.
    pub fn bump_value(&self, j: usize, ge: &GridEps, z: &Point) -> f64 {
        let patch = &self.domain.atlas[j];
        let rho = (z - &patch.center).norm();
        let t = (patch.radius / 2.0 - rho) / (patch.radius / 6.0);
        ge.log_factor * smoothstep(t)
    }

    /// log(1/delta(z + eps w_j)); the point must sit in the candidate's
    /// region Omega-bar intersected with the closed half-ball.
    pub fn v_eps_j(&self, j: usize, ge: &GridEps, z: &Point) -> ExhaustionResult<f64> {
        let patch = &self.domain.atlas[j];
        if (z - &patch.center).norm() > patch.radius / 2.0 || !self.domain.in_closure(z) {
            return Err(ExhaustionError::OutsideRegion);
        }
        let zt = z + patch.w_dir() * ge.eps;
        if !self.domain.is_inside(&zt) {
            return Err(ExhaustionError::TranslateEscapes);
        }
        let d = self.oracle.distance(&zt)?;
        Ok((1.0 / d).ln())
    }

    fn patched_candidate(&self, j: usize, ge: &GridEps, z: &Point) -> ExhaustionResult<f64> {
        let v = self.v_eps_j(j, ge, z)?;
        Ok(v + self.bump_value(j, ge, z) + ge.lambda * (z.norm_squared() - self.gamma))
    }

    /// Max over active patched candidates and the quadratic fallback.
    pub fn v_eps_value(&self, z: &Point, ge: &GridEps) -> ExhaustionResult<(f64, Branch)> {
        let delta = self.oracle.distance(z)?;
        self.v_eps_value_inner(z, ge, delta, &self.active_patches(z))
    }

    /// Core max with the boundary distance and active-patch list hoisted.
    fn v_eps_value_inner(
        &self,
        z: &Point,
        ge: &GridEps,
        delta: f64,
        active: &[usize],
    ) -> ExhaustionResult<(f64, Branch)> {
        let zsq = z.norm_squared();
        let mut best = zsq - ge.lambda;
        let mut branch = Branch::Fallback;
        if !active.is_empty() {
            // Domination shortcut: delta(z + eps w_j) >= delta(z) - eps and
            // the bump is at most log(eps/f), so every patched candidate is
            // capped by log(1/(delta-eps)) + log(eps/f) + lambda(|z|^2-gamma).
            // When the cap already loses to the fallback the oracle calls
            // are skipped; computed values are exact either way.
            let cap = if delta > ge.eps {
                (1.0 / (delta - ge.eps)).ln()
                    + ge.log_factor.max(0.0)
                    + ge.lambda * (zsq - self.gamma)
            } else {
                f64::INFINITY
            };
            if cap > best {
                for &j in active {
                    let cand = self.patched_candidate(j, ge, z)?;
                    if cand > best {
                        best = cand;
                        branch = Branch::Patch(j);
                    }
                }
            }
        }
        Ok((best, branch))
    }

    pub fn w_eps_value(&self, z: &Point, ge: &GridEps) -> ExhaustionResult<f64> {
        Ok(self.v_eps_value(z, ge)?.0 / ge.l - 1.0)
    }

    /// Per-point grid: the shared geometric grid plus the insert
    /// eps = delta(z) when it falls inside the range.
    fn per_point_grid(&self, delta: f64) -> ExhaustionResult<Vec<GridEps>> {
        let mut out = self.grid.clone();
        if delta > 0.0 && delta <= self.eps0 && delta > self.grid_floor {
            out.push(self.grid_entry(delta)?);
        }
        Ok(out)
    }

    fn w_detail(&self, z: &Point) -> ExhaustionResult<WDetail> {
        let delta = self.oracle.distance(z)?;
        let active = self.active_patches(z);
        let mut best = f64::NEG_INFINITY;
        let mut eps_star = 0.0;
        let mut branch = Branch::Fallback;
        for ge in self.per_point_grid(delta)? {
            let (v, b) = self.v_eps_value_inner(z, &ge, delta, &active)?;
            let w = v / ge.l - 1.0;
            if w > best {
                best = w;
                eps_star = ge.eps;
                branch = b;
            }
        }
        Ok(WDetail {
            delta,
            w: best,
            eps_star,
            branch,
        })
    }

    /// The exhaustion value w(z) = max over the per-point eps grid.
    pub fn w_value(&self, z: &Point) -> ExhaustionResult<f64> {
        Ok(self.w_detail(z)?.w)
    }

    /// Per-eps trace (eps, w_eps) plus the attained maximum.
    pub fn trace(&self, z: &Point) -> ExhaustionResult<AttainmentReport> {
        let delta = self.oracle.distance(z)?;
        let active = self.active_patches(z);
        let mut trace = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut eps_star = 0.0;
        let mut branch = Branch::Fallback;
        for ge in self.per_point_grid(delta)? {
            let (v, b) = self.v_eps_value_inner(z, &ge, delta, &active)?;
            let w = v / ge.l - 1.0;
            trace.push((ge.eps, w));
            if w > best {
                best = w;
                eps_star = ge.eps;
                branch = b;
            }
        }
        Ok(AttainmentReport {
            point: z.as_slice().to_vec(),
            delta,
            attained_at: eps_star,
            lower_fraction: eps_star / delta,
            branch,
            trace,
        })
    }

    /// w as a field on the closure, extended by zero on the boundary.
    pub fn field(self: &Arc<Self>) -> ScalarField {
        let me = self.clone();
        let me_r = self.clone();
        ScalarField::new(
            format!("exhaustion({})", self.domain.name),
            Arc::new(move |z: &Point| me_r.domain.in_closure(z)),
            Arc::new(move |z: &Point| {
                if !me.domain.is_inside(z) {
                    return 0.0;
                }
                me.w_value(z).unwrap_or(f64::NAN)
            }),
        )
    }

    /// The fixed-eps piece w_eps as a field on Omega.
    pub fn w_eps_field(self: &Arc<Self>, eps: f64) -> ExhaustionResult<ScalarField> {
        let ge = self.grid_entry(eps)?;
        let me = self.clone();
        let me_r = self.clone();
        Ok(ScalarField::new(
            format!("w_eps({}, {:.3e})", self.domain.name, eps),
            Arc::new(move |z: &Point| me_r.domain.is_inside(z)),
            Arc::new(move |z: &Point| me.w_eps_value(z, &ge).unwrap_or(f64::NAN)),
        ))
    }

    /// The single-patch candidate log(1/delta(z + eps w_j)) as a field on
    /// Omega-bar intersected with the closed half-ball.
    pub fn v_eps_j_field(self: &Arc<Self>, j: usize, eps: f64) -> ExhaustionResult<ScalarField> {
        let ge = self.grid_entry(eps)?;
        let me = self.clone();
        let me_r = self.clone();
        Ok(ScalarField::new(
            format!("v_eps_j({}, {}, {:.3e})", self.domain.name, j, eps),
            Arc::new(move |z: &Point| {
                me_r.domain.in_closure(z)
                    && (z - &me_r.domain.atlas[j].center).norm() <= me_r.domain.atlas[j].radius / 2.0
            }),
            Arc::new(move |z: &Point| me.v_eps_j(j, &ge, z).unwrap_or(f64::NAN)),
        ))
    }

    /// omega(delta) through the domain's gain.
    pub fn omega(&self, delta: f64) -> ExhaustionResult<f64> {
        Ok(self.domain.regularity.gain.omega_ratio(delta)?)
    }

    /// Exact upper envelope log(f(eps0)/(delta + f(eps0))) / log(1/eps0).
    pub fn upper_envelope(&self, delta: f64) -> f64 {
        let top = &self.grid[0];
        (top.f / (delta + top.f)).ln() / top.l
    }

    /// Lower envelope -log2/log(1/delta) - c1 * omega(delta).
    pub fn lower_envelope(&self, delta: f64, c1: f64) -> ExhaustionResult<f64> {
        Ok(-(2f64.ln()) / (1.0 / delta).ln() - c1 * self.omega(delta)?)
    }

    /// Near-boundary interior samples with oracle-verified depth in
    /// [lo, hi], drawn from the boundary atlas.
    pub fn sample_near_boundary(
        &self,
        count: usize,
        lo: f64,
        hi: f64,
        seed: u64,
    ) -> ExhaustionResult<Vec<Point>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count {
            guard += 1;
            if guard > 3000 * count.max(1) + 30_000 {
                return Err(ExhaustionError::Domain(DomainError::ConvergenceFailure));
            }
            let q = self.domain.sample_boundary_with(&mut rng, 1)?[0].clone();
            let j = match self.domain.covering_patch(&q) {
                Some(j) => j,
                None => continue,
            };
            let t = lo * (hi / lo).powf(rng.gen_range(0.0..1.0f64));
            let z = &q + self.domain.atlas[j].w_dir() * t;
            if !self.domain.is_inside(&z) {
                continue;
            }
            let d = self.oracle.distance(&z)?;
            if d >= lo && d <= hi {
                out.push(z);
            }
        }
        Ok(out)
    }

    /// Negativity, the omega-rate lower bound with fitted constant, the
    /// exact upper bound, and the global sandwich fit, over a mixed
    /// interior / near-boundary sample set.
    pub fn check_bounds(&self, samples: usize, seed: u64) -> ExhaustionResult<BoundsReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Negativity is an interior property; the delta-dependent envelope
        // fits additionally need points with delta below eps0, so a fixed
        // near-boundary set rides along.
        let n_near = (samples / 10).clamp(1, 400);
        let mut pts = self.domain.sample_interior(&mut rng, samples);
        pts.extend(self.sample_near_boundary(
            n_near,
            (self.eps0 * 1e-2).max(1e-6),
            self.eps0 * 0.98,
            seed ^ 0x5EED_0001,
        )?);

        let sandwich_idx: Vec<usize> = {
            let n = self.grid.len();
            vec![0, n / 4, n / 2, 3 * n / 4, n - 1]
        };

        struct PerSample {
            rec: BoundRecord,
            c1_needed: Option<f64>,
            upper_margin: Option<f64>,
            c1_hat: f64,
            c2_hat: f64,
        }

        let eval_one = |z: &Point| -> ExhaustionResult<PerSample> {
            let d = self.w_detail(z)?;
            let gain = &self.domain.regularity.gain;
            let omega = if d.delta < gain.eps_max && d.delta < 1.0 {
                Some(gain.omega_ratio(d.delta)?)
            } else {
                None
            };
            let c1_needed = omega.map(|om| ((-d.w - 2f64.ln() / (1.0 / d.delta).ln()) / om).max(0.0));
            let upper = self.upper_envelope(d.delta);
            let upper_margin = if d.delta < self.eps0 {
                Some(upper - d.w)
            } else {
                None
            };
            let lower = match (omega, c1_needed) {
                (Some(_), Some(_)) => f64::NAN, // filled by caller with the global fit
                _ => f64::NAN,
            };
            let mut c1_hat = f64::NEG_INFINITY;
            let mut c2_hat = f64::INFINITY;
            let active = self.active_patches(z);
            for &i in &sandwich_idx {
                let ge = &self.grid[i];
                let (v, _) = self.v_eps_value_inner(z, ge, d.delta, &active)?;
                c1_hat = c1_hat.max(((1.0 / (d.delta + ge.eps)).ln() - v) / ge.lambda);
                c2_hat = c2_hat.min(((1.0 / (d.delta + ge.f)).ln() - v) / ge.lambda);
            }
            Ok(PerSample {
                rec: BoundRecord {
                    point: z.as_slice().to_vec(),
                    delta: d.delta,
                    lower,
                    w: d.w,
                    upper,
                },
                c1_needed,
                upper_margin,
                c1_hat,
                c2_hat,
            })
        };

        let results: Vec<ExhaustionResult<PerSample>> =
            pts.par_iter().map(eval_one).collect();
        let mut per: Vec<PerSample> = Vec::with_capacity(results.len());
        for r in results {
            per.push(r?);
        }

        let mut worst_w = f64::NEG_INFINITY;
        let mut c1_fit_a = 0.0f64;
        let mut c1_fit_b = 0.0f64;
        let mut upper_margin = f64::INFINITY;
        let mut c1_hat = f64::NEG_INFINITY;
        let mut c2_hat = f64::INFINITY;
        for (i, s) in per.iter().enumerate() {
            worst_w = worst_w.max(s.rec.w);
            if let Some(c) = s.c1_needed {
                if i % 2 == 0 {
                    c1_fit_a = c1_fit_a.max(c);
                } else {
                    c1_fit_b = c1_fit_b.max(c);
                }
            }
            if let Some(m) = s.upper_margin {
                upper_margin = upper_margin.min(m);
            }
            c1_hat = c1_hat.max(s.c1_hat);
            c2_hat = c2_hat.min(s.c2_hat);
        }
        let c1_fit = c1_fit_a.max(c1_fit_b);
        let mut records: Vec<BoundRecord> = per
            .iter()
            .take(512)
            .map(|s| {
                let mut rec = s.rec.clone();
                rec.lower = self.lower_envelope(rec.delta.min(0.99 * self.domain.regularity.gain.eps_max), c1_fit)
                    .unwrap_or(f64::NAN);
                rec
            })
            .collect();
        records.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
        Ok(BoundsReport {
            samples: per.len(),
            negative: worst_w < 0.0,
            worst_w,
            c1_fit,
            c1_fit_a,
            c1_fit_b,
            upper_holds: upper_margin >= -1e-9,
            upper_margin,
            c1_hat,
            c2_hat,
            records,
        })
    }

    /// Fits the attainment threshold c_hat = min eps*/delta over
    /// near-boundary samples, split into halves for stability inspection.
    pub fn fit_attainment(&self, count: usize, seed: u64) -> ExhaustionResult<AttainmentFit> {
        let pts = self.sample_near_boundary(
            count,
            (self.eps0 * 1e-2).max(1e-6),
            self.eps0 * 0.98,
            seed,
        )?;
        let details: Vec<ExhaustionResult<WDetail>> =
            pts.par_iter().map(|z| self.w_detail(z)).collect();
        let mut pairs = Vec::with_capacity(count);
        for d in details {
            let d = d?;
            pairs.push((d.delta, d.eps_star));
        }
        let ratio = |sl: &[(f64, f64)]| {
            sl.iter()
                .map(|(d, e)| e / d)
                .fold(f64::INFINITY, f64::min)
        };
        let half = pairs.len() / 2;
        let c_hat_a = ratio(&pairs[..half]);
        let c_hat_b = ratio(&pairs[half..]);
        Ok(AttainmentFit {
            c_hat: c_hat_a.min(c_hat_b),
            c_hat_a,
            c_hat_b,
            pairs,
        })
    }

    /// Verifies eps* >= c_hat * delta(z) at one point, with the full trace
    /// attached to the violation if it fails.
    pub fn check_sup_attainment(
        &self,
        z: &Point,
        c_hat: f64,
    ) -> ExhaustionResult<AttainmentReport> {
        let rep = self.trace(z)?;
        let threshold = c_hat * rep.delta;
        if rep.attained_at < threshold {
            return Err(ExhaustionError::AttainmentViolation {
                attained: rep.attained_at,
                threshold,
                delta: rep.delta,
                trace: rep.trace,
            });
        }
        Ok(rep)
    }

    /// Constant inside the Levi-floor logarithm; e * c_tilde keeps the
    /// argument above 1 on the whole grid.
    pub fn c_tilde1(&self) -> f64 {
        use crate::special::GainForm;
        let base = match self.domain.regularity.gain.form {
            GainForm::LogLipschitz { c_tilde, .. } => c_tilde,
            GainForm::LogLipschitzSimplified { c1 } => c1,
            _ => 1.0,
        };
        std::f64::consts::E * base.max(1.0)
    }

    fn floor_shape(&self, delta: f64) -> f64 {
        let l = (1.0 / delta).ln();
        (self.c_tilde1() * l).ln() / l
    }

    /// Levi min-eigenvalue of the attained fixed-eps piece at each sample,
    /// against the floor shape log(c_tilde1 log(1/delta))/log(1/delta).
    /// Samples whose active branch changes within the stencil are skipped
    /// as non-smooth points and counted.
    pub fn check_levi_floor(
        self: &Arc<Self>,
        samples: &[Point],
        h: f64,
    ) -> ExhaustionResult<LeviFloorReport> {
        let dim = self.domain.real_dim();
        let mut offsets: Vec<Point> = Vec::new();
        for i in 0..dim {
            let mut e = Point::zeros(dim);
            e[i] = h;
            offsets.push(e.clone());
            offsets.push(-e);
        }
        for i in 0..dim {
            for k in (i + 1)..dim {
                let mut e = Point::zeros(dim);
                e[i] = h;
                e[k] = h;
                offsets.push(e.clone());
                offsets.push(-e.clone());
                e[k] = -h;
                offsets.push(e.clone());
                offsets.push(-e);
            }
        }

        enum Outcome {
            Skipped,
            Kept(LeviFloorRecord),
        }
        let eval_one = |z: &Point| -> ExhaustionResult<Outcome> {
            let d0 = self.w_detail(z)?;
            for off in &offsets {
                let p = z + off;
                if !self.domain.is_inside(&p) {
                    return Ok(Outcome::Skipped);
                }
                let d = self.w_detail(&p)?;
                if d.eps_star != d0.eps_star || d.branch != d0.branch {
                    return Ok(Outcome::Skipped);
                }
            }
            let field = self.clone().w_eps_field(d0.eps_star)?;
            let report = levi_form(&field, z, h)?;
            Ok(Outcome::Kept(LeviFloorRecord {
                delta: d0.delta,
                min_eigenvalue: report.min_eigenvalue,
                floor_shape: self.floor_shape(d0.delta),
            }))
        };

        let outcomes: Vec<ExhaustionResult<Outcome>> =
            samples.par_iter().map(eval_one).collect();
        let mut kept = 0usize;
        let mut skipped = 0usize;
        let mut c_fit = f64::INFINITY;
        let mut records = Vec::new();
        for o in outcomes {
            match o? {
                Outcome::Skipped => skipped += 1,
                Outcome::Kept(rec) => {
                    kept += 1;
                    c_fit = c_fit.min(rec.min_eigenvalue / rec.floor_shape);
                    if records.len() < 256 {
                        records.push(rec);
                    }
                }
            }
        }
        let total = samples.len();
        Ok(LeviFloorReport {
            c_fit,
            passes: kept * 5 >= total * 4 && c_fit > 0.0 && c_fit.is_finite(),
            kept,
            skipped,
            total,
            records,
        })
    }

    /// Inward-ray records at depths 2^-k toward the boundary anchor that
    /// maximizes |q| (so the quadratic term is monotone along the ray).
    pub fn ray_records(&self, ks: RangeInclusive<u32>) -> ExhaustionResult<Vec<RayRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x4A7);
        let boundary = self.domain.sample_boundary_with(&mut rng, 512)?;
        let q = boundary
            .into_iter()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .expect("boundary samples");
        let j = self
            .domain
            .covering_patch(&q)
            .ok_or(DomainError::NoCoveringPatch)?;
        let dir = self.domain.atlas[j].w_dir();
        let mut out = Vec::new();
        for k in ks {
            let target = 2f64.powi(-(k as i32));
            // Bracket delta(q + t dir) = target; delta <= t always.
            let mut hi = target;
            let depth_at = |t: f64| -> ExhaustionResult<f64> {
                let z = &q + &dir * t;
                if !self.domain.is_inside(&z) {
                    return Ok(0.0);
                }
                Ok(self.oracle.distance(&z)?)
            };
            let mut guard = 0;
            while depth_at(hi)? < target {
                hi *= 1.5;
                guard += 1;
                if guard > 40 {
                    return Err(ExhaustionError::Domain(DomainError::ConvergenceFailure));
                }
            }
            let mut lo = target * 0.25;
            while depth_at(lo)? > target {
                lo *= 0.5;
                guard += 1;
                if guard > 80 {
                    return Err(ExhaustionError::Domain(DomainError::ConvergenceFailure));
                }
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if depth_at(mid)? < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z = &q + &dir * (0.5 * (lo + hi));
            let d = self.w_detail(&z)?;
            out.push(RayRecord {
                k,
                delta: d.delta,
                w: d.w,
                eps_star: d.eps_star,
                upper: self.upper_envelope(d.delta),
                omega: self.omega(d.delta.min(0.99 * self.domain.regularity.gain.eps_max))?,
                log_term: -(2f64.ln()) / (1.0 / d.delta).ln(),
            });
        }
        Ok(out)
    }
}

/// Smallest power of two at or above x.
fn pow2_at_least(x: f64) -> f64 {
    let mut p = 1.0f64;
    while p < x {
        p *= 2.0;
    }
    p
}

fn calibrate_lambda(domain: &Arc<BoundedDomain>, seed: u64) -> ExhaustionResult<f64> {
    // The bump scales linearly in log(eps/f), and so does lambda, so the
    // plurisubharmonicity of psi_j + lambda |z|^2 reduces to the
    // eps-independent profile S((r/2 - rho)/(r/6)) + C |z|^2. The binding
    // patch is the smallest one; C doubles until the sub-mean-value test
    // passes, then once more as the safety factor.
    let jm = (0..domain.atlas.len())
        .min_by(|&a, &b| {
            domain.atlas[a]
                .radius
                .partial_cmp(&domain.atlas[b].radius)
                .unwrap()
        })
        .ok_or(DomainError::NoAtlas)?;
    let patch = &domain.atlas[jm];
    let center = patch.center.clone();
    let r = patch.radius;
    let dim = domain.real_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBB);
    let mut pts: Vec<Point> = Vec::new();
    for _ in 0..120 {
        let rho = rng.gen_range(0.28 * r..0.55 * r);
        pts.push(&center + crate::geometry::random_unit_vector(&mut rng, dim) * rho);
    }
    let radii = [r / 24.0, r / 12.0];

    // Closed-form seed: |S''| 36/r^2 plus the tangential term 18 |S'| / r^2.
    let seed_c = (36.0 * smoothstep_d2_max() + 18.0 * 1.875) / (4.0 * (r / 6.0).powi(2))
        * (r / 6.0).powi(2)
        / r.powi(2)
        * 36.0;
    let mut c = pow2_at_least(seed_c / 64.0).max(1.0);
    for _ in 0..60 {
        let cc = c;
        let cv = center.clone();
        let field = ScalarField::everywhere(
            "bump-profile",
            Arc::new(move |z: &Point| {
                let rho = (z - &cv).norm();
                let t = (r / 2.0 - rho) / (r / 6.0);
                smoothstep(t) + cc * z.norm_squared()
            }),
        );
        let rep = check_psh(&field, &pts, 2, &radii, 1e-10, seed ^ 0xCC)?;
        if rep.verdict {
            return Ok(2.0 * c);
        }
        c *= 2.0;
    }
    Err(ExhaustionError::LambdaCalibration)
}

fn calibrate_gamma(exh: &Exhaustion, seed: u64) -> ExhaustionResult<f64> {
    // Required gamma so that at sampled points of each half-ball boundary
    // the local patched candidate falls below the best other candidate.
    // Patch-versus-patch comparisons are gamma-free, so only the fallback
    // comparison binds: gamma >= (cand_core - |z|^2)/lambda + |z|^2 + 1.
    let domain = &exh.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A);
    let n_patches = domain.atlas.len();
    let stride = (n_patches / 64).max(1);
    let eps_ids = {
        let n = exh.grid.len();
        [0, n / 2, n - 1]
    };
    let mut needed = 1.0f64;
    for j in (0..n_patches).step_by(stride) {
        let patch = &domain.atlas[j];
        let mut pts = Vec::new();
        let mut guard = 0;
        while pts.len() < 100 && guard < 4000 {
            guard += 1;
            let dir = crate::geometry::random_unit_vector(&mut rng, domain.real_dim());
            let z = &patch.center + dir * (patch.radius / 2.0);
            if domain.in_closure(&z) {
                pts.push(z);
            }
        }
        for z in &pts {
            for &i in &eps_ids {
                let ge = &exh.grid[i];
                let core = match exh.v_eps_j(j, ge, z) {
                    Ok(v) => v + exh.bump_value(j, ge, z),
                    Err(ExhaustionError::OutsideRegion) => continue,
                    Err(e) => return Err(e),
                };
                // Best other patched candidate, gamma-free part.
                let mut other = f64::NEG_INFINITY;
                for k in exh.active_patches(z) {
                    if k == j {
                        continue;
                    }
                    if let Ok(v) = exh.v_eps_j(k, ge, z) {
                        other = other.max(v + exh.bump_value(k, ge, z));
                    }
                }
                if core <= other {
                    continue;
                }
                let zsq = z.norm_squared();
                needed = needed.max((core - zsq) / ge.lambda + zsq + 1.0);
            }
        }
    }
    Ok(2.0 * pow2_at_least(needed))
}

pub fn build_exhaustion(
    domain: Arc<BoundedDomain>,
    cfg: ExhaustionConfig,
) -> ExhaustionResult<Arc<Exhaustion>> {
    if domain.atlas.is_empty() {
        return Err(ExhaustionError::Domain(DomainError::NoAtlas));
    }
    let oracle = DistanceOracle::new(domain.clone())?;
    let gain = domain.regularity.gain.clone();
    let eps0 = if cfg.eps0 > 0.0 {
        cfg.eps0
    } else {
        (domain.eps_w() / cfg.c).min(0.9 * gain.eps_max)
    };
    assert!(cfg.rho > 0.0 && cfg.rho < 1.0, "grid ratio must be in (0,1)");
    assert!(cfg.grid_floor > 0.0 && cfg.grid_floor < eps0);

    // Hyperconvexity hypothesis: omega must decay along the grid.
    let om_hi = gain.omega_ratio(eps0)?;
    let om_lo = gain.omega_ratio(cfg.grid_floor)?;
    if !(om_lo > 0.0 && om_hi > 0.0 && om_lo <= 0.7 * om_hi) {
        return Err(ExhaustionError::OmegaRatioViolation {
            eps_low: cfg.grid_floor,
            omega_low: om_lo,
            eps_high: eps0,
            omega_high: om_hi,
        });
    }

    let lambda_constant = if cfg.lambda_constant > 0.0 {
        cfg.lambda_constant
    } else {
        calibrate_lambda(&domain, cfg.seed)?
    };

    let mut exh = Exhaustion {
        domain,
        oracle,
        eps0,
        rho: cfg.rho,
        grid_floor: cfg.grid_floor,
        gamma: 1.0,
        lambda_constant,
        seed: cfg.seed,
        grid: Vec::new(),
    };
    // Geometric grid with the floor appended exactly, so grid refinement
    // keeps the terminal member fixed.
    let mut eps = eps0;
    while eps > cfg.grid_floor * (1.0 + 1e-12) {
        exh.grid.push(exh.grid_entry(eps)?);
        eps *= cfg.rho;
    }
    exh.grid.push(exh.grid_entry(cfg.grid_floor)?);

    let gamma = if cfg.gamma > 0.0 {
        let needed = calibrate_gamma(&exh, cfg.seed)?;
        if cfg.gamma < needed / 2.0 {
            return Err(ExhaustionError::GammaTooSmall {
                gamma: cfg.gamma,
                needed: needed / 2.0,
            });
        }
        cfg.gamma
    } else {
        calibrate_gamma(&exh, cfg.seed)?
    };
    exh.gamma = gamma;
    Ok(Arc::new(exh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build_domain;
    use std::collections::BTreeMap;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn oracle_agrees_with_reference_distances() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let oracle = DistanceOracle::new(ball.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for z in ball.sample_interior(&mut rng, 40) {
            let exact = 1.0 - z.norm();
            let got = oracle.distance(&z).unwrap();
            assert!(
                (got - exact).abs() <= 1e-7 * (1.0 + exact),
                "ball oracle {got} vs exact {exact}"
            );
        }

        let cusp = build_domain("ll_cusp", &BTreeMap::new()).unwrap();
        let oracle = DistanceOracle::new(cusp.clone()).unwrap();
        for z in cusp.sample_interior(&mut rng, 12) {
            let reference = cusp.distance_to_boundary(&z).unwrap();
            let got = oracle.distance(&z).unwrap();
            assert!(
                (got - reference).abs() <= 2e-6 * (1.0 + reference),
                "cusp oracle {got} vs reference {reference}"
            );
        }
    }

    #[test]
    fn grid_is_decreasing_with_exact_floor() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let exh = build_exhaustion(ball, ExhaustionConfig::default()).unwrap();
        let grid = exh.eps_grid();
        assert_eq!(*grid.last().unwrap(), 1e-10);
        assert!(grid[0] <= exh.eps0);
        for pair in grid.windows(2) {
            assert!(pair[1] < pair[0], "grid must strictly decrease");
        }
    }

    #[test]
    fn hoelder_gain_fails_omega_decay() {
        let dom = build_domain("hoelder_cusp", &BTreeMap::new()).unwrap();
        match build_exhaustion(dom, ExhaustionConfig::default()) {
            Err(ExhaustionError::OmegaRatioViolation { .. }) => {}
            Err(other) => panic!("expected omega violation, got {other:?}"),
            Ok(_) => panic!("expected omega violation, got an artifact"),
        }
    }

    #[test]
    fn bump_plateau_support_and_lambda() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let exh = build_exhaustion(ball.clone(), ExhaustionConfig::default()).unwrap();
        let ge = exh.grid_entry(exh.eps0 / 2.0).unwrap();
        let patch = &ball.atlas[0];
        let w = patch.w_dir();
        let inner = &patch.center + &w * (0.1 * patch.radius);
        let outer = &patch.center + &w * (0.7 * patch.radius);
        assert!(
            (exh.bump_value(0, &ge, &inner) - ge.log_factor).abs() < 1e-12,
            "plateau must equal log(eps/f)"
        );
        assert_eq!(exh.bump_value(0, &ge, &outer), 0.0);
        assert!(exh.lambda_constant > 0.0 && ge.lambda > 0.0);
        // Closed-form curvature scale: the calibrated constant must be of
        // the order 1/r_min^2 and certainly above the naive Laplacian bound
        // divided by a generous slack.
        let r_min = ball.eps_w();
        assert!(exh.lambda_constant >= 1.0 / (r_min * r_min));
    }

    #[test]
    fn ball_exhaustion_negative_and_fallback_deep_inside() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let exh = build_exhaustion(
            ball.clone(),
            ExhaustionConfig {
                rho: 0.7,
                ..ExhaustionConfig::default()
            },
        )
        .unwrap();
        assert!(exh.gamma > 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for z in ball.sample_interior(&mut rng, 60) {
            let w = exh.w_value(&z).unwrap();
            assert!(w < 0.0, "w must be negative, got {w}");
        }
        // Centre point: no half-ball contains it, so the fallback branch
        // is forced.
        let center = Point::zeros(2);
        assert!(exh.active_patches(&center).is_empty());
        let rep = exh.trace(&center).unwrap();
        assert_eq!(rep.branch, Branch::Fallback);
        // Sup at the grid endpoint is allowed for delta near eps0.
        assert!(rep.attained_at > 0.0);
    }

    #[test]
    fn v_eps_sandwich_and_continuity_across_half_ball() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let exh = build_exhaustion(
            ball.clone(),
            ExhaustionConfig {
                rho: 0.7,
                ..ExhaustionConfig::default()
            },
        )
        .unwrap();
        let ge = exh.grid_entry(exh.eps0 * 0.8).unwrap();
        let patch = &ball.atlas[0];
        let w = patch.w_dir();
        // Points inside the half-ball: sandwich for the single-patch piece.
        for t in [0.05, 0.2, 0.4] {
            let z = &patch.center + &w * (t * patch.radius);
            let delta = exh.delta(&z).unwrap();
            let v = exh.v_eps_j(0, &ge, &z).unwrap();
            let lo = (1.0 / (delta + ge.eps)).ln();
            let hi = (1.0 / (delta + ge.f)).ln();
            assert!(
                lo - 1e-9 <= v && v <= hi + 1e-9,
                "sandwich broken: {lo} <= {v} <= {hi}"
            );
        }
        // Two-sided continuity of v_eps across the half-ball boundary.
        let s = patch.radius / 2.0;
        let just_in = &patch.center + &w * (s - 1e-7);
        let just_out = &patch.center + &w * (s + 1e-7);
        let (vi, _) = exh.v_eps_value(&just_in, &ge).unwrap();
        let (vo, _) = exh.v_eps_value(&just_out, &ge).unwrap();
        assert!(
            (vi - vo).abs() < 1e-3 * (1.0 + vi.abs()),
            "v_eps jumps across the half-ball boundary: {vi} vs {vo}"
        );
    }

    #[test]
    fn ll_cusp_exhaustion_smoke() {
        let cusp = build_domain("ll_cusp", &BTreeMap::new()).unwrap();
        let exh = build_exhaustion(
            cusp.clone(),
            ExhaustionConfig {
                rho: 0.7,
                ..ExhaustionConfig::default()
            },
        )
        .unwrap();

        let rep = exh.check_bounds(60, 9).unwrap();
        assert!(rep.negative, "w must be negative, worst = {}", rep.worst_w);
        assert!(rep.upper_holds, "upper margin {}", rep.upper_margin);
        assert!(rep.c1_fit.is_finite() && rep.c1_fit >= 0.0);
        assert!(
            rep.c1_hat.is_finite() && rep.c2_hat.is_finite() && rep.c1_hat >= rep.c2_hat,
        );

        // Along the inward ray toward the outermost boundary point the
        // exhaustion is nondecreasing in depth index.
        let rays = exh.ray_records(3..=10).unwrap();
        for pair in rays.windows(2) {
            assert!(
                pair[1].w >= pair[0].w - 1e-9,
                "ray not monotone: {} then {}",
                pair[0].w,
                pair[1].w
            );
        }
        for r in &rays {
            assert!(r.w < 0.0 && r.w <= r.upper + 1e-9);
        }

        // Levi floor on a handful of moderately deep samples; the step is
        // large enough that the huge additive constant of the fallback
        // branch does not drown the second differences.
        let pts = exh.sample_near_boundary(6, 3e-2, 8e-2, 4).unwrap();
        let lev = exh.check_levi_floor(&pts, 5e-3).unwrap();
        assert_eq!(lev.kept + lev.skipped, 6);
        assert!(lev.kept >= 4, "too many non-smooth skips: {}", lev.skipped);
        assert!(lev.c_fit > 0.0, "Levi floor constant {}", lev.c_fit);

        // Attainment fit is positive and the per-point check accepts its
        // own fitted constant.
        let fit = exh.fit_attainment(24, 13).unwrap();
        assert!(fit.c_hat > 0.0);
        let z = exh.sample_near_boundary(1, 1e-3, 1e-2, 21).unwrap();
        exh.check_sup_attainment(&z[0], fit.c_hat).unwrap();
    }

    #[test]
    fn grid_refinement_is_stable() {
        let ball = build_domain("ball", &params(&[("n", 1.0)])).unwrap();
        let coarse = build_exhaustion(ball.clone(), ExhaustionConfig::default()).unwrap();
        let fine = build_exhaustion(
            ball.clone(),
            ExhaustionConfig {
                rho: 0.95,
                ..ExhaustionConfig::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sup = 0.0f64;
        for z in ball.sample_interior(&mut rng, 25) {
            let a = coarse.w_value(&z).unwrap();
            let b = fine.w_value(&z).unwrap();
            sup = sup.max((a - b).abs());
        }
        assert!(sup <= 1e-3, "grid refinement moved w by {sup}");
    }
}
