//! Real-branch Lambert W evaluation and the derived translation-gain
//! functions: the analytic engine for the Log-Lipschitz estimates.
//!
//! Both real branches are computed by an asymptotic initial guess refined
//! with Halley iteration; a short series in `sqrt(2(e*x + 1))` takes over
//! near the branch point `-1/e` where the iteration is ill conditioned.

use std::f64::consts::E;

use thiserror::Error;

/// Half-width of the branch-point neighbourhood where the series is used.
const BRANCH_POINT_WINDOW: f64 = 1e-6;
const MAX_HALLEY_STEPS: usize = 50;

#[derive(Debug, Error)]
pub enum SpecialError {
    #[error("argument {x} outside the domain of {what}")]
    DomainError { what: &'static str, x: f64 },
    #[error("{what} did not converge for argument {x}")]
    ConvergenceFailure { what: &'static str, x: f64 },
}

pub type SpecialResult<T> = Result<T, SpecialError>;

/// The two real branches of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambertBranch {
    /// W0 on (-1/e, inf) with range [-1, inf).
    Principal,
    /// W-1 on (-1/e, 0) with range (-inf, -1].
    Lower,
}

/// Evaluates the requested real branch of W, solving `w * exp(w) = x`.
pub fn lambert_w(branch: LambertBranch, x: f64) -> SpecialResult<f64> {
    let min_x = -1.0 / E;
    match branch {
        LambertBranch::Principal => {
            if !x.is_finite() || x < min_x - 1e-14 {
                return Err(SpecialError::DomainError {
                    what: "W0",
                    x,
                });
            }
        }
        LambertBranch::Lower => {
            if !x.is_finite() || x < min_x - 1e-14 || x >= 0.0 {
                return Err(SpecialError::DomainError {
                    what: "W-1",
                    x,
                });
            }
        }
    }
    // Clamp tiny excursions below -1/e coming from upstream rounding.
    let x = x.max(min_x);

    if (x - min_x).abs() < BRANCH_POINT_WINDOW {
        return Ok(branch_point_series(branch, x));
    }

    let mut w = initial_guess(branch, x);
    for _ in 0..MAX_HALLEY_STEPS {
        let ew = w.exp();
        let f = w * ew - x;
        let fp = ew * (w + 1.0);
        // Halley step: f'' = e^w (w + 2).
        let denom = fp - f * (w + 2.0) / (2.0 * (w + 1.0));
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        w = next;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            let resid = (w * w.exp() - x).abs();
            let tol = if x.abs() <= 1.0 { 1e-12 } else { 1e-12 * x.abs() };
            if resid <= tol {
                return Ok(w);
            }
        }
    }
    // One more residual check before giving up: Halley may have stalled at
    // an acceptable answer without a final small step.
    let resid = (w * w.exp() - x).abs();
    let tol = if x.abs() <= 1.0 { 1e-12 } else { 1e-12 * x.abs() };
    if resid <= tol {
        Ok(w)
    } else {
        Err(SpecialError::ConvergenceFailure {
            what: "lambert_w",
            x,
        })
    }
}

/// W0 shorthand.
pub fn lambert_w0(x: f64) -> SpecialResult<f64> {
    lambert_w(LambertBranch::Principal, x)
}

/// W-1 shorthand.
pub fn lambert_wm1(x: f64) -> SpecialResult<f64> {
    lambert_w(LambertBranch::Lower, x)
}

/// Three-term expansion around the double root at x = -1/e.
fn branch_point_series(branch: LambertBranch, x: f64) -> f64 {
    let q = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    let p = match branch {
        LambertBranch::Principal => q,
        LambertBranch::Lower => -q,
    };
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn initial_guess(branch: LambertBranch, x: f64) -> f64 {
    match branch {
        LambertBranch::Principal => {
            if x > 3.0 {
                // w ~ ln x - ln ln x for large x.
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            } else if x > -0.2 {
                // Series around 0: W0(x) = x - x^2 + 3/2 x^3 - ...
                x * (1.0 - x + 1.5 * x * x)
            } else {
                branch_point_series(LambertBranch::Principal, x)
            }
        }
        LambertBranch::Lower => {
            if x < -0.27 {
                branch_point_series(LambertBranch::Lower, x)
            } else {
                // w ~ ln(-x) - ln(-ln(-x)) as x -> 0^-.
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    }
}

/// Translation-gain function shapes appearing in the distance estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainForm {
    /// f(eps) = eps / c.
    Lipschitz { c: f64 },
    /// f(eps) = (eps / c)^(1/gamma), gamma in (0,1).
    Hoelder { c: f64, gamma: f64 },
    /// f(eps) = -eps / (c_tilde * W-1(-eps/c)).
    LogLipschitz { c: f64, c_tilde: f64 },
    /// f(eps) = eps / (c1 * log(1/eps)), the simplified Log-Lipschitz gain.
    LogLipschitzSimplified { c1: f64 },
}

/// A gain function together with its validity interval (0, eps_max).
#[derive(Debug, Clone, Copy)]
pub struct GainFunction {
    pub form: GainForm,
    pub eps_max: f64,
}

impl GainFunction {
    pub fn new(form: GainForm, eps_max: f64) -> Self {
        GainFunction { form, eps_max }
    }

    /// The guaranteed distance gain f(eps) under an inward translation by eps.
    pub fn gain(&self, eps: f64) -> SpecialResult<f64> {
        if !(eps > 0.0 && eps < self.eps_max) {
            return Err(SpecialError::DomainError {
                what: "gain",
                x: eps,
            });
        }
        match self.form {
            GainForm::Lipschitz { c } => Ok(eps / c),
            GainForm::Hoelder { c, gamma } => Ok((eps / c).powf(1.0 / gamma)),
            GainForm::LogLipschitz { c, c_tilde } => {
                let w = lambert_wm1(-eps / c)?;
                Ok(-eps / (c_tilde * w))
            }
            GainForm::LogLipschitzSimplified { c1 } => {
                if eps >= 1.0 {
                    return Err(SpecialError::DomainError {
                        what: "simplified gain",
                        x: eps,
                    });
                }
                Ok(eps / (c1 * (1.0 / eps).ln()))
            }
        }
    }

    /// The ratio omega(eps) = log(eps / f(eps)) / log(1/eps).
    ///
    /// Controls the blow-up compensation in the exhaustion construction;
    /// the hyperconvexity hypothesis is omega(eps) -> 0 as eps -> 0.
    pub fn omega_ratio(&self, eps: f64) -> SpecialResult<f64> {
        if !(eps > 0.0 && eps < 1.0 && eps < self.eps_max) {
            return Err(SpecialError::DomainError {
                what: "omega_ratio",
                x: eps,
            });
        }
        let f = self.gain(eps)?;
        Ok((eps / f).ln() / (1.0 / eps).ln())
    }

    /// Closed-form derivative of the exact Log-Lipschitz gain,
    /// -1 / (c_tilde (1 + W-1(-eps/c))); positive on (0, c/e).
    pub fn loglip_gain_derivative(&self, eps: f64) -> SpecialResult<f64> {
        match self.form {
            GainForm::LogLipschitz { c, c_tilde } => {
                let w = lambert_wm1(-eps / c)?;
                Ok(-1.0 / (c_tilde * (1.0 + w)))
            }
            _ => Err(SpecialError::DomainError {
                what: "loglip_gain_derivative",
                x: eps,
            }),
        }
    }
}

/// Graph profile of the model Log-Lipschitz cusp, `1 + |x| W0(1/|x|)`,
/// extended by its limit value 1 at x = 0.
pub fn cusp_profile(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let ax = x.abs();
    // W0(1/|x|) is well inside the principal domain for every x != 0.
    let w = lambert_w0(1.0 / ax).expect("W0 on positive arguments");
    1.0 + ax * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent bisection oracle for W-1 on [-10 - |extra|, -1].
    fn wm1_bisection(x: f64) -> f64 {
        let g = |w: f64| w * w.exp() - x;
        let (mut lo, mut hi) = (-745.0, -1.0);
        assert!(g(lo) * g(hi) <= 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn w0_trivial_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(E).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lambert_w0(0.5).unwrap(), 0.35173371124919583, epsilon = 1e-14);
    }

    #[test]
    fn branch_point_values() {
        let bp = -1.0 / E;
        assert_abs_diff_eq!(lambert_w0(bp).unwrap(), -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(lambert_wm1(bp).unwrap(), -1.0, epsilon = 1e-8);
        // Branch consistency just off the tip.
        let x = bp + 1e-9;
        assert!(lambert_w0(x).unwrap() >= -1.0);
        assert!(lambert_wm1(x).unwrap() <= -1.0);
    }

    #[test]
    fn wm1_matches_bisection_oracle() {
        // Frozen from the oracle (also cross-checked against mpmath).
        let oracle = wm1_bisection(-0.1);
        assert_abs_diff_eq!(oracle, -3.5771520639572972, epsilon = 1e-12);
        assert_abs_diff_eq!(lambert_wm1(-0.1).unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(
            lambert_wm1(-0.2).unwrap(),
            -2.5426413577735264,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            lambert_wm1(-1e-6).unwrap(),
            -16.626508901372473,
            epsilon = 1e-11
        );
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_wm1(-0.5).is_err());
        assert!(lambert_wm1(0.1).is_err());
        assert!(lambert_wm1(0.0).is_err());
    }

    #[test]
    fn round_trip_log_spaced() {
        // W0 over positive arguments.
        for k in 0..1000 {
            let t = k as f64 / 999.0;
            let x = 10f64.powf(-12.0 + 24.0 * t);
            let w = lambert_w0(x).unwrap();
            let resid = (w * w.exp() - x).abs();
            let tol = if x.abs() <= 1.0 { 1e-12 } else { 1e-12 * x };
            assert!(resid <= tol, "x={x} resid={resid}");
        }
        // W-1 over (-1/e, 0).
        for k in 0..1000 {
            let t = k as f64 / 999.0;
            let mag = 10f64.powf(-15.0 + t * (-(1.0f64 / E).ln() - 1e-9 + 15.0));
            let x = -mag.min(1.0 / E - 1e-12);
            let w = lambert_wm1(x).unwrap();
            let resid = (w * w.exp() - x).abs();
            assert!(resid <= 1e-12, "x={x} resid={resid}");
            assert!(w <= -1.0);
        }
    }

    proptest! {
        #[test]
        fn prop_w0_round_trip(x in -0.36f64..1e6) {
            prop_assume!(x > -1.0 / E);
            let w = lambert_w0(x).unwrap();
            let resid = (w * w.exp() - x).abs();
            let tol = if x.abs() <= 1.0 { 1e-12 } else { 1e-12 * x.abs() };
            prop_assert!(resid <= tol.max(1e-13));
            prop_assert!(w >= -1.0 - 1e-12);
        }
    }

    #[test]
    fn gain_trivial_values() {
        let lip = GainFunction::new(GainForm::Lipschitz { c: 2.0 }, 1.0);
        assert_abs_diff_eq!(lip.gain(0.1).unwrap(), 0.05);

        // At eps = 1/e with C = C_tilde = 1, W-1(-1/e) = -1 so f = 1/e.
        let ll = GainFunction::new(
            GainForm::LogLipschitz { c: 1.0, c_tilde: 1.0 },
            0.5,
        );
        assert_abs_diff_eq!(ll.gain(1.0 / E).unwrap(), 1.0 / E, epsilon = 1e-7);
    }

    #[test]
    fn gain_bounded_by_eps() {
        let specs = [
            GainFunction::new(GainForm::Lipschitz { c: 2.0 }, 0.3),
            GainFunction::new(GainForm::Hoelder { c: 1.5, gamma: 0.5 }, 0.3),
            GainFunction::new(GainForm::LogLipschitz { c: 1.0, c_tilde: 1.0 }, 0.3),
            GainFunction::new(GainForm::LogLipschitzSimplified { c1: 1.0 }, 0.3),
        ];
        for f in specs {
            for k in 1..60 {
                let eps = 0.3 * k as f64 / 61.0;
                let g = f.gain(eps).unwrap();
                assert!(g > 0.0 && g <= eps + 1e-15, "{:?} eps={eps} g={g}", f.form);
            }
        }
    }

    #[test]
    fn loglip_gain_increasing_with_fd_derivative_match() {
        let c = 1.0;
        let f = GainFunction::new(GainForm::LogLipschitz { c, c_tilde: 1.0 }, c / E);
        for k in 1..=100 {
            let eps = (c / E) * k as f64 / 102.0;
            let h = eps * 1e-6;
            let fd = (f.gain(eps + h).unwrap() - f.gain(eps - h).unwrap()) / (2.0 * h);
            let exact = f.loglip_gain_derivative(eps).unwrap();
            assert!(exact > 0.0);
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12), "eps={eps}");
        }
    }

    #[test]
    fn omega_ratio_values_and_decay() {
        // Simplified gain with c1 = 1 at eps = e^-e: log(log(1/eps))/log(1/eps) = 1/e.
        let simp = GainFunction::new(GainForm::LogLipschitzSimplified { c1: 1.0 }, 0.5);
        let eps = (-E).exp();
        assert_abs_diff_eq!(simp.omega_ratio(eps).unwrap(), 1.0 / E, epsilon = 1e-12);

        // Lipschitz: omega = log(c)/log(1/eps) -> 0.
        let lip = GainFunction::new(GainForm::Lipschitz { c: 2.0 }, 0.5);
        assert_abs_diff_eq!(
            lip.omega_ratio(1e-3).unwrap(),
            2f64.ln() / 1e3f64.ln(),
            epsilon = 1e-13
        );

        // Exact Log-Lipschitz form: strictly decreasing along eps = 10^-k and
        // small at the far end.
        let ll = GainFunction::new(GainForm::LogLipschitz { c: 1.0, c_tilde: 1.0 }, 0.5);
        let mut prev = f64::INFINITY;
        for k in 2..=10 {
            let omega = ll.omega_ratio(10f64.powi(-k)).unwrap();
            assert!(omega > 0.0);
            assert!(omega < prev, "k={k}");
            prev = omega;
        }
        assert!(ll.omega_ratio(1e-10).unwrap() < 0.25);
    }

    #[test]
    fn omega_ratio_rejects_eps_ge_one() {
        let lip = GainFunction::new(GainForm::Lipschitz { c: 2.0 }, 4.0);
        assert!(lip.omega_ratio(1.0).is_err());
        assert!(lip.omega_ratio(2.0).is_err());
    }

    #[test]
    fn loglip_vs_simplified_ratio_bounded() {
        let ll = GainFunction::new(GainForm::LogLipschitz { c: 1.0, c_tilde: 1.0 }, 0.5);
        let simp = GainFunction::new(GainForm::LogLipschitzSimplified { c1: 1.0 }, 0.5);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for k in 0..200 {
            let eps = 10f64.powf(-6.0 + 5.0 * k as f64 / 199.0);
            let r = ll.gain(eps).unwrap() / simp.gain(eps).unwrap();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        assert!(lo > 0.0 && hi.is_finite());
        // Fitted comparability constant for the grid.
        let c_hat = hi.max(1.0 / lo);
        assert!(c_hat < 10.0, "c_hat={c_hat}");
    }

    #[test]
    fn cusp_profile_values() {
        assert_eq!(cusp_profile(0.0), 1.0);
        assert_abs_diff_eq!(cusp_profile(1e-8), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cusp_profile(1.0 / E), 1.0 + 1.0 / E, epsilon = 1e-12);
        assert_eq!(cusp_profile(-0.25), cusp_profile(0.25));
    }

    #[test]
    fn cusp_profile_loglip_modulus() {
        // Fitted Log-Lipschitz constant over random pairs in B(0, 1/10).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut c_fit = 0.0f64;
        for _ in 0..10_000 {
            let x: f64 = rng.gen_range(-0.1..0.1);
            let y: f64 = rng.gen_range(-0.1..0.1);
            let d = (x - y).abs();
            if d < 1e-12 {
                continue;
            }
            let num = (cusp_profile(x) - cusp_profile(y)).abs();
            c_fit = c_fit.max(num / (d * (1.0 / d).ln()));
        }
        assert!(c_fit.is_finite() && c_fit > 0.0 && c_fit < 20.0, "c_fit={c_fit}");
    }
}
