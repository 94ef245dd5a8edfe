//! Derivative-free minimizers used by the distance computations: golden
//! section search in one dimension and a compact Nelder-Mead simplex for
//! the low-dimensional patch charts. Graph functions may have cusps, so
//! nothing here assumes smoothness.

/// Golden-section minimum of `f` on [a, b] to absolute x-tolerance `tol`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Nelder-Mead on R^dim starting from `x0` with initial step `scale`.
/// Returns (argmin, min). `budget` caps the number of reflections.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    scale: f64,
    budget: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for k in 0..dim {
        let mut p = x0.to_vec();
        p[k] += scale;
        let fp = f(&p);
        simplex.push((p, fp));
    }

    for _ in 0..budget {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }
        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in simplex.iter().take(dim) {
            for k in 0..dim {
                centroid[k] += v.0[k] / dim as f64;
            }
        }
        let worst_point = simplex[dim].0.clone();
        let reflect: Vec<f64> = (0..dim)
            .map(|k| centroid[k] + (centroid[k] - worst_point[k]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - worst_point[k]))
                .collect();
            let fe = f(&expand);
            simplex[dim] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + 0.5 * (worst_point[k] - centroid[k]))
                .collect();
            let fc = f(&contract);
            if fc < simplex[dim].1 {
                simplex[dim] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..dim {
                        v.0[k] = best_point[k] + 0.5 * (v.0[k] - best_point[k]);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0).into()
}

/// Root of a monotone-crossing function on [lo, hi] by bisection; assumes
/// g(lo) and g(hi) have opposite signs. Returns the midpoint after `iters`.
pub fn bisect_root<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let mut glo = g(lo);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if (glo <= 0.0) == (gm <= 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_cusp_minimum() {
        // Non-smooth: |x - 0.3| + small curvature.
        let (x, v) = golden_section(|x| (x - 0.3).abs() + 0.1 * x * x, -1.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-10);
        assert!(v < 0.0091);
    }

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let f = |p: &[f64]| (p[0] - 1.0).powi(2) + 3.0 * (p[1] + 0.5).powi(2);
        let (x, v) = nelder_mead(f, &[0.0, 0.0], 0.5, 400, 1e-14);
        assert!(v < 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn bisect_root_converges() {
        let r = bisect_root(|x| x * x - 2.0, 0.0, 2.0, 80);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
