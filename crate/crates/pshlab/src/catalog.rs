//! Catalog of reference domains: the unit ball, the polydisc, a Lipschitz
//! cone domain, a Hoelder cusp domain, the Log-Lipschitz cusp domain, and
//! the Hartogs triangle (membership-only probe entry).
//!
//! The planar domains with a boundary cusp all share one shape: the region
//! above a profile graph y = phi(x), phi(0) = 0, intersected with the disc
//! B((0, 0.75), 1). Their atlases combine graph patches along the profile,
//! radial patches along the closing arc, and two corner patches where the
//! pieces meet.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::domain::{BoundedDomain, GraphPatch, RegularityClass, RegularitySpec};
use crate::geometry::{frame_with_last_axis, greedy_net, halton, Point};
use crate::optim::bisect_root;
use crate::special::{cusp_profile, GainForm, GainFunction};

/// Graph value reported when a chart line never meets the boundary.
pub const NO_CROSSING: f64 = 1e6;

const CAP_CENTER_Y: f64 = 0.75;
const CAP_RADIUS: f64 = 1.0;
const PATCH_CAP: f64 = 0.05;
const SHRINK: f64 = 4.5;
const CORNER_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown catalog domain `{0}`")]
    UnknownDomain(String),
    #[error("bad parameter `{name}` = {value}")]
    BadParameter { name: &'static str, value: f64 },
}

pub struct DomainCatalogEntry {
    pub name: &'static str,
    pub builder: fn(&BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError>,
}

pub fn catalog() -> Vec<DomainCatalogEntry> {
    vec![
        DomainCatalogEntry { name: "ball", builder: build_ball },
        DomainCatalogEntry { name: "polydisc", builder: build_polydisc },
        DomainCatalogEntry { name: "cone", builder: build_cone },
        DomainCatalogEntry { name: "hoelder_cusp", builder: build_hoelder_cusp },
        DomainCatalogEntry { name: "ll_cusp", builder: build_ll_cusp },
        DomainCatalogEntry { name: "hartogs", builder: build_hartogs },
    ]
}

pub fn build_domain(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<Arc<BoundedDomain>, CatalogError> {
    for entry in catalog() {
        if entry.name == name {
            return (entry.builder)(params);
        }
    }
    Err(CatalogError::UnknownDomain(name.to_string()))
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn lipschitz_spec(norm: f64) -> RegularitySpec {
    RegularitySpec {
        class: RegularityClass::Lipschitz,
        norm,
        gain: GainFunction::new(
            GainForm::Lipschitz {
                c: (1.0 + norm * norm).sqrt(),
            },
            0.25,
        ),
    }
}

// ---------------------------------------------------------------------------
// Unit ball in C^n, n = 1 or 2.
// ---------------------------------------------------------------------------

fn build_ball(params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    let n = param(params, "n", 1.0) as usize;
    if n != 1 && n != 2 {
        return Err(CatalogError::BadParameter { name: "n", value: n as f64 });
    }
    let dim = 2 * n;
    let default_r = if n == 1 { 0.15 } else { 0.24 };
    let r = param(params, "patch_radius", default_r);
    if !(r > 0.0 && r < 1.0) {
        return Err(CatalogError::BadParameter { name: "patch_radius", value: r });
    }

    let centers: Vec<Point> = if n == 1 {
        let m = param(params, "patches", (2.0 * std::f64::consts::PI / (0.75 * r)).ceil()) as usize;
        (0..m)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                Point::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()
    } else {
        let candidates: Vec<Point> = (0..20_000)
            .map(|i| {
                let h = halton(i, dim);
                let mut v = Point::from_iterator(dim, h.iter().map(|u| 2.0 * u - 1.0));
                while v.norm() < 1e-3 {
                    v[0] += 0.5;
                }
                v.normalize()
            })
            .collect();
        greedy_net(&candidates, 0.75 * r)
            .into_iter()
            .map(|i| candidates[i].clone())
            .collect()
    };

    let reg = lipschitz_spec(1.0);
    let atlas: Vec<GraphPatch> = centers
        .into_iter()
        .map(|q| {
            let w = -q.clone();
            let frame = frame_with_last_axis(&w);
            let graph: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(move |yp: &[f64]| {
                let s: f64 = yp.iter().map(|y| y * y).sum();
                if s < 1.0 {
                    1.0 - (1.0 - s).sqrt()
                } else {
                    NO_CROSSING
                }
            });
            GraphPatch::new(q, r, frame, graph, reg.clone())
        })
        .collect();

    let mut dom = BoundedDomain::new(
        "ball",
        n,
        atlas,
        reg,
        Arc::new(|z: &Point| z.norm() - 1.0),
        Point::zeros(dim),
        Point::zeros(dim),
        1.0,
    );
    dom.closed_form_distance = Some(Arc::new(|z: &Point| 1.0 - z.norm()));
    Ok(Arc::new(dom))
}

// ---------------------------------------------------------------------------
// Polydisc {|z1| < 1, |z2| < 1} in C^2.
// ---------------------------------------------------------------------------

fn complex_parts(p: &Point) -> [(f64, f64); 2] {
    [(p[0], p[1]), (p[2], p[3])]
}

/// First entry time of the line p0 + t w into the polydisc, or None if the
/// line misses it. Solves the two disc-crossing quadratics exactly.
fn polydisc_entry(p0: &Point, w: &Point) -> Option<f64> {
    let z = complex_parts(p0);
    let v = complex_parts(w);
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for i in 0..2 {
        let a = v[i].0 * v[i].0 + v[i].1 * v[i].1;
        let b = z[i].0 * v[i].0 + z[i].1 * v[i].1;
        let c = z[i].0 * z[i].0 + z[i].1 * z[i].1 - 1.0;
        if a < 1e-14 {
            if c >= 0.0 {
                return None;
            }
            continue;
        }
        let disc = b * b - a * c;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        t_enter = t_enter.max((-b - sq) / a);
        t_exit = t_exit.min((-b + sq) / a);
    }
    if t_enter < t_exit {
        Some(t_enter)
    } else {
        None
    }
}

fn build_polydisc(params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    let r = param(params, "patch_radius", 0.3);
    if !(r > 0.05 && r < 0.4) {
        return Err(CatalogError::BadParameter { name: "patch_radius", value: r });
    }
    let tau = std::f64::consts::TAU;
    // Boundary candidates from both faces; the sqrt radial map is uniform
    // on each face and automatically dense along the shared edge.
    let mut candidates: Vec<Point> = Vec::with_capacity(20_000);
    for i in 0..10_000 {
        let h = halton(i, 3);
        let (th, rad, ph) = (tau * h[0], h[1].sqrt(), tau * h[2]);
        candidates.push(Point::from_vec(vec![
            th.cos(),
            th.sin(),
            rad * ph.cos(),
            rad * ph.sin(),
        ]));
        candidates.push(Point::from_vec(vec![
            rad * ph.cos(),
            rad * ph.sin(),
            th.cos(),
            th.sin(),
        ]));
    }
    let centers: Vec<Point> = greedy_net(&candidates, 0.8 * r)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect();

    let reg = lipschitz_spec(1.0);
    let atlas: Vec<GraphPatch> = centers
        .into_iter()
        .map(|q| {
            let w = (-q.clone()).normalize();
            let frame = frame_with_last_axis(&w);
            let q2 = q.clone();
            let frame2 = frame.clone();
            let w2 = w.clone();
            let graph: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(move |yp: &[f64]| {
                let mut p0 = q2.clone();
                for (k, y) in yp.iter().enumerate() {
                    p0 += Point::from(frame2.column(k)) * *y;
                }
                polydisc_entry(&p0, &w2).unwrap_or(NO_CROSSING)
            });
            GraphPatch::new(q, r, frame, graph, reg.clone())
        })
        .collect();

    let level: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = Arc::new(|z: &Point| {
        let p = complex_parts(z);
        let m1 = (p[0].0 * p[0].0 + p[0].1 * p[0].1).sqrt();
        let m2 = (p[1].0 * p[1].0 + p[1].1 * p[1].1).sqrt();
        m1.max(m2) - 1.0
    });
    let mut dom = BoundedDomain::new(
        "polydisc",
        2,
        atlas,
        reg,
        level,
        Point::zeros(4),
        Point::zeros(4),
        std::f64::consts::SQRT_2,
    );
    dom.closed_form_distance = Some(Arc::new(|z: &Point| {
        let p = complex_parts(z);
        let m1 = (p[0].0 * p[0].0 + p[0].1 * p[0].1).sqrt();
        let m2 = (p[1].0 * p[1].0 + p[1].1 * p[1].1).sqrt();
        (1.0 - m1).min(1.0 - m2)
    }));
    Ok(Arc::new(dom))
}

// ---------------------------------------------------------------------------
// Planar profile domains: {y > phi(x)} ∩ B((0, 0.75), 1).
// ---------------------------------------------------------------------------

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

struct ProfileSpec {
    name: &'static str,
    phi: Profile,
    regularity: RegularitySpec,
}

fn cap_center() -> Point {
    Point::from_vec(vec![0.0, CAP_CENTER_Y])
}

fn graph_point(phi: &Profile, x: f64) -> Point {
    Point::from_vec(vec![x, phi(x)])
}

fn arc_point(theta: f64) -> Point {
    cap_center() + Point::from_vec(vec![theta.cos(), theta.sin()]) * CAP_RADIUS
}

/// x-coordinate of the right corner where the profile graph meets the cap
/// circle.
fn corner_x(phi: &Profile) -> f64 {
    let g = |x: f64| {
        let y = phi(x);
        x * x + (y - CAP_CENTER_Y) * (y - CAP_CENTER_Y) - CAP_RADIUS * CAP_RADIUS
    };
    bisect_root(g, 0.2, 1.3, 80)
}

fn min_dist_to(points: &[Point], q: &Point) -> f64 {
    points
        .iter()
        .map(|p| (p - q).norm())
        .fold(f64::INFINITY, f64::min)
}

fn build_profile_domain(spec: ProfileSpec) -> Arc<BoundedDomain> {
    let phi = spec.phi.clone();
    let xc = corner_x(&phi);
    let corner_r = graph_point(&phi, xc);
    let corner_l = Point::from_vec(vec![-corner_r[0], corner_r[1]]);
    let c0 = cap_center();
    let corner_angle = (corner_r[1] - CAP_CENTER_Y).atan2(corner_r[0]);

    // Dense boundary polyline (graph part, denser near the apex) used for
    // patch sizing and the covering check.
    let mut graph_pts: Vec<Point> = Vec::with_capacity(4001);
    for k in 0..=4000 {
        let u = -1.0 + 2.0 * k as f64 / 4000.0;
        let x = xc * u.abs().powi(2) * u.signum();
        graph_pts.push(graph_point(&phi, x));
    }
    let mut arc_pts: Vec<Point> = Vec::with_capacity(2001);
    for k in 0..=2000 {
        let th = corner_angle
            + (std::f64::consts::PI - 2.0 * corner_angle) * k as f64 / 2000.0;
        arc_pts.push(arc_point(th));
    }

    let identity = DMatrix::<f64>::identity(2, 2);
    let mut atlas: Vec<GraphPatch> = Vec::new();

    // Graph patches walked outward from the apex in arclength steps.
    let graph_radius = |x: f64| -> f64 {
        let q = graph_point(&phi, x);
        PATCH_CAP.min((CAP_RADIUS - (q - &c0).norm()) / SHRINK)
    };
    let mut xs: Vec<f64> = vec![0.0];
    let mut x = 0.0f64;
    loop {
        let q = graph_point(&phi, x);
        if (&q - &corner_r).norm() < 0.6 * CORNER_RADIUS || graph_radius(x) < 1.5e-3 {
            break;
        }
        let step = |nx: f64| {
            (graph_point(&phi, nx) - &q).norm()
                - 0.55 * graph_radius(x).min(graph_radius(nx))
        };
        let hi = (x + 0.2).min(xc - 1e-6);
        if step(hi) < 0.0 {
            break;
        }
        x = bisect_root(step, x + 1e-9, hi, 60);
        xs.push(x);
    }
    let mut signed_xs: Vec<f64> = xs.iter().skip(1).map(|&x| -x).collect();
    signed_xs.extend(xs);
    for &x in &signed_xs {
        let q = graph_point(&phi, x);
        let r = graph_radius(x);
        let phi_j = phi.clone();
        let graph: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> =
            Arc::new(move |yp: &[f64]| phi_j(x + yp[0]) - phi_j(x));
        atlas.push(GraphPatch::new(
            q,
            r,
            identity.clone(),
            graph,
            spec.regularity.clone(),
        ));
    }

    // Arc patches walked from near the right corner over the top; mirrored.
    let arc_radius = |th: f64| -> f64 {
        PATCH_CAP.min(min_dist_to(&graph_pts, &arc_point(th)) / SHRINK)
    };
    let arc_reg = lipschitz_spec(1.0);
    let mut thetas: Vec<f64> = Vec::new();
    let mut th = corner_angle + 0.6 * CORNER_RADIUS / CAP_RADIUS;
    while th < std::f64::consts::FRAC_PI_2 {
        thetas.push(th);
        let q = arc_point(th);
        let step = |nt: f64| (arc_point(nt) - &q).norm() - 0.55 * arc_radius(th).min(arc_radius(nt));
        let hi = th + 0.2;
        if step(hi) < 0.0 {
            thetas.push(std::f64::consts::FRAC_PI_2);
            break;
        }
        th = bisect_root(step, th + 1e-9, hi, 60);
    }
    let mirrored: Vec<f64> = thetas
        .iter()
        .filter(|&&t| t < std::f64::consts::FRAC_PI_2 - 1e-9)
        .map(|&t| std::f64::consts::PI - t)
        .collect();
    thetas.extend(mirrored);
    for &th in &thetas {
        let q = arc_point(th);
        let w = (&c0 - &q) / CAP_RADIUS;
        let frame = frame_with_last_axis(&w);
        let graph: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(move |yp: &[f64]| {
            let u = yp[0];
            if u.abs() < CAP_RADIUS {
                CAP_RADIUS - (CAP_RADIUS * CAP_RADIUS - u * u).sqrt()
            } else {
                NO_CROSSING
            }
        });
        atlas.push(GraphPatch::new(q, arc_radius(th), frame, graph, arc_reg.clone()));
    }

    // Level function: above the profile and inside the cap disc.
    let phi_level = phi.clone();
    let c0_level = c0.clone();
    let level: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = Arc::new(move |z: &Point| {
        (phi_level(z[0]) - z[1]).max((z - &c0_level).norm() - CAP_RADIUS)
    });

    // Corner patches: inward direction bisects the graph and circle normals;
    // the chart surface is the first membership crossing along that line.
    for corner in [corner_r.clone(), corner_l.clone()] {
        let side = corner[0].signum();
        let h = 1e-6;
        let slope = side * (phi(corner[0].abs()) - phi(corner[0].abs() - h)) / h;
        let n_graph = Point::from_vec(vec![-slope, 1.0]).normalize();
        let n_circle = (&c0 - &corner) / CAP_RADIUS;
        let w = (n_graph + n_circle).normalize();
        let frame = frame_with_last_axis(&w);
        let level_c = level.clone();
        let qc = corner.clone();
        let frame_c = frame.clone();
        let w_c = w.clone();
        let graph: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(move |yp: &[f64]| {
            let p0 = &qc + Point::from(frame_c.column(0)) * yp[0];
            let g = |t: f64| level_c(&(&p0 + &w_c * t));
            let t_start = -(4.0 * CORNER_RADIUS + 0.05);
            let mut prev = t_start;
            let mut gp = g(prev);
            let mut t = t_start;
            while t < 0.6 {
                t += 0.004;
                let gt = g(t);
                if gp > 0.0 && gt <= 0.0 {
                    return bisect_root(g, prev, t, 60);
                }
                prev = t;
                gp = gt;
            }
            NO_CROSSING
        });
        let norm = 1.0 + slope.abs();
        atlas.push(GraphPatch::new(
            corner,
            CORNER_RADIUS,
            frame,
            graph,
            lipschitz_spec(norm),
        ));
    }

    // Covering check: every dense boundary sample must lie in a patch ball.
    let mut boundary = graph_pts;
    boundary.extend(arc_pts);
    for p in &boundary {
        let covered = atlas
            .iter()
            .any(|patch| (p - &patch.center).norm() < patch.radius);
        assert!(covered, "{}: atlas fails to cover boundary near {:?}", spec.name, p);
    }

    let interior = Point::from_vec(vec![0.0, CAP_CENTER_Y]);
    let dom = BoundedDomain::new(
        spec.name,
        1,
        atlas,
        spec.regularity,
        level,
        interior,
        c0,
        CAP_RADIUS,
    );
    Arc::new(dom)
}

fn build_cone(params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    let slope = param(params, "slope", 1.0);
    if !(slope > 0.0 && slope <= 4.0) {
        return Err(CatalogError::BadParameter { name: "slope", value: slope });
    }
    let phi: Profile = Arc::new(move |x: f64| slope * x.abs());
    let mut dom = build_profile_domain(ProfileSpec {
        name: "cone",
        phi: phi.clone(),
        regularity: lipschitz_spec(slope),
    });
    // Exact distance: min over the two cone half-lines (clamped at the
    // apex) and the cap circle.
    let dom_mut = Arc::get_mut(&mut dom).expect("fresh domain");
    let c0 = cap_center();
    dom_mut.closed_form_distance = Some(Arc::new(move |z: &Point| {
        let (x, y) = (z[0], z[1]);
        let denom = 1.0 + slope * slope;
        let mut d_graph = f64::INFINITY;
        for s in [1.0f64, -1.0] {
            let foot = (s * x + slope * y) / denom;
            d_graph = d_graph.min(if foot >= 0.0 {
                (y - slope * s * x).abs() / denom.sqrt()
            } else {
                (x * x + y * y).sqrt()
            });
        }
        d_graph.min(CAP_RADIUS - (z - &c0).norm())
    }));
    Ok(dom)
}

fn build_hoelder_cusp(params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    let c = param(params, "c", 1.0);
    let gamma = param(params, "gamma", 0.5);
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CatalogError::BadParameter { name: "gamma", value: gamma });
    }
    if !(c > 0.0 && c <= 4.0) {
        return Err(CatalogError::BadParameter { name: "c", value: c });
    }
    let phi: Profile = Arc::new(move |x: f64| c * x.abs().powf(gamma));
    let regularity = RegularitySpec {
        class: RegularityClass::Hoelder(gamma),
        norm: c,
        gain: GainFunction::new(
            GainForm::Hoelder {
                c: 2.0 * c.max(1.0),
                gamma,
            },
            0.25,
        ),
    };
    Ok(build_profile_domain(ProfileSpec {
        name: "hoelder_cusp",
        phi,
        regularity,
    }))
}

fn build_ll_cusp(_params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    // Profile |x| W0(1/|x|), the cusp profile shifted to phi(0) = 0.
    let phi: Profile = Arc::new(|x: f64| cusp_profile(x) - 1.0);
    let regularity = RegularitySpec {
        class: RegularityClass::LogLipschitz,
        norm: 1.0,
        gain: GainFunction::new(
            GainForm::LogLipschitz { c: 1.0, c_tilde: 1.0 },
            0.999 / std::f64::consts::E,
        ),
    };
    Ok(build_profile_domain(ProfileSpec {
        name: "ll_cusp",
        phi,
        regularity,
    }))
}

// ---------------------------------------------------------------------------
// Hartogs triangle, membership-only probe entry.
// ---------------------------------------------------------------------------

fn build_hartogs(_params: &BTreeMap<String, f64>) -> Result<Arc<BoundedDomain>, CatalogError> {
    let level: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = Arc::new(|z: &Point| {
        let p = complex_parts(z);
        let m1 = (p[0].0 * p[0].0 + p[0].1 * p[0].1).sqrt();
        let m2 = (p[1].0 * p[1].0 + p[1].1 * p[1].1).sqrt();
        (m1 - m2).max(m2 - 1.0)
    });
    let regularity = RegularitySpec {
        class: RegularityClass::C0,
        norm: 1.0,
        gain: GainFunction::new(GainForm::Lipschitz { c: 1.0 }, 0.25),
    };
    let dom = BoundedDomain::new(
        "hartogs",
        2,
        Vec::new(),
        regularity,
        level,
        Point::from_vec(vec![0.0, 0.0, 0.5, 0.0]),
        Point::zeros(4),
        std::f64::consts::SQRT_2,
    );
    Ok(Arc::new(dom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Membership;
    use crate::geometry::orthonormality_defect;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn defaults() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn catalog_has_the_six_reference_domains() {
        let names: Vec<&str> = catalog().iter().map(|e| e.name).collect();
        for required in ["ball", "polydisc", "cone", "hoelder_cusp", "ll_cusp", "hartogs"] {
            assert!(names.contains(&required), "{required} missing");
        }
        assert!(build_domain("torus", &defaults()).is_err());
    }

    #[test]
    fn ball_distances_are_radial() {
        let dom = build_domain("ball", &defaults()).unwrap();
        let z = Point::zeros(2);
        assert!((dom.distance_to_boundary(&z).unwrap() - 1.0).abs() < 1e-9);
        let z = Point::from_vec(vec![0.3, 0.0]);
        assert!((dom.distance_to_boundary(&z).unwrap() - 0.7).abs() < 1e-9);
        let outside = Point::from_vec(vec![1.5, 0.0]);
        assert!(dom.distance_to_boundary(&outside).is_err());
    }

    #[test]
    fn atlases_are_orthonormal_and_anchored() {
        for name in ["ball", "polydisc", "cone", "hoelder_cusp", "ll_cusp"] {
            let dom = build_domain(name, &defaults()).unwrap();
            assert!(!dom.atlas.is_empty(), "{name}");
            for patch in &dom.atlas {
                assert!(orthonormality_defect(&patch.frame) < 1e-12, "{name}");
                let at_zero = patch.graph(&vec![0.0; patch.horizontal_dim()]);
                assert!(at_zero.abs() < 1e-9, "{name}: graph(0) = {at_zero}");
            }
        }
    }

    #[test]
    fn graphs_separate_inside_from_outside() {
        // Display test of the atlas: sampled points above the chart graph
        // are inside, below are outside, within each B(x_j, 4 r_j).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["ball", "polydisc", "cone", "hoelder_cusp", "ll_cusp"] {
            let dom = build_domain(name, &defaults()).unwrap();
            let stride = (dom.atlas.len() / 40).max(1);
            for patch in dom.atlas.iter().step_by(stride) {
                for _ in 0..40 {
                    let d = patch.horizontal_dim();
                    let yp: Vec<f64> = (0..d)
                        .map(|_| rng.gen_range(-2.8 * patch.radius..2.8 * patch.radius))
                        .collect();
                    let psi = patch.graph(&yp);
                    if psi.abs() > 100.0 {
                        continue;
                    }
                    let surf = patch.surface_point(&yp);
                    if (&surf - &patch.center).norm() > 3.0 * patch.radius {
                        continue;
                    }
                    let off = rng.gen_range(1e-4..patch.radius);
                    let above = &surf + patch.w_dir() * off;
                    let below = &surf - patch.w_dir() * off;
                    if (&above - &patch.center).norm() < 4.0 * patch.radius {
                        assert_eq!(
                            dom.membership(&above),
                            Membership::Inside,
                            "{name}: above graph must be inside"
                        );
                    }
                    if (&below - &patch.center).norm() < 4.0 * patch.radius {
                        assert_eq!(
                            dom.membership(&below),
                            Membership::Outside,
                            "{name}: below graph must be outside"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn polydisc_distance_matches_closed_form() {
        let dom = build_domain("polydisc", &defaults()).unwrap();
        let closed = dom.closed_form_distance.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = dom.sample_interior(&mut rng, 25);
        for z in pts {
            let d = dom.distance_to_boundary(&z).unwrap();
            let want = closed(&z);
            assert!(
                (d - want).abs() <= 1e-6 * want.max(1e-3),
                "delta {d} vs closed form {want}"
            );
        }
    }

    #[test]
    fn cone_distance_matches_closed_form() {
        let dom = build_domain("cone", &defaults()).unwrap();
        let closed = dom.closed_form_distance.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = dom.sample_interior(&mut rng, 40);
        for z in pts {
            let d = dom.distance_to_boundary(&z).unwrap();
            let want = closed(&z);
            assert!(
                (d - want).abs() <= 1e-6 * want.max(1e-3),
                "delta {d} vs closed form {want} at {z:?}"
            );
        }
    }

    #[test]
    fn ll_cusp_apex_distance_agrees_with_brute_oracle() {
        let dom = build_domain("ll_cusp", &defaults()).unwrap();
        for h in [0.02, 0.05, 0.2] {
            let z = Point::from_vec(vec![0.0, h]);
            let fast = dom.distance_to_boundary(&z).unwrap();
            let brute = dom.brute_force_distance(&z, 1_000_000, 2).unwrap();
            assert!(
                (fast - brute).abs() <= 1e-4 * brute,
                "h={h}: fast {fast} vs brute {brute}"
            );
            // The cusp pinches: distance is well below the height.
            assert!(fast < h);
        }
    }

    #[test]
    fn hartogs_is_probe_only() {
        let dom = build_domain("hartogs", &defaults()).unwrap();
        assert!(dom.atlas.is_empty());
        let inside = Point::from_vec(vec![0.1, 0.0, 0.5, 0.0]);
        assert_eq!(dom.membership(&inside), Membership::Inside);
        let origin = Point::zeros(4);
        assert!(dom.in_closure(&origin));
        assert_eq!(dom.membership(&origin), Membership::Boundary);
        assert!(dom.distance_to_boundary(&inside).is_err());
    }

    #[test]
    fn distance_is_one_lipschitz_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for name in ["cone", "ll_cusp"] {
            let dom = build_domain(name, &defaults()).unwrap();
            let pts = dom.sample_interior(&mut rng, 30);
            for pair in pts.chunks(2) {
                if pair.len() < 2 {
                    continue;
                }
                let d0 = dom.distance_to_boundary(&pair[0]).unwrap();
                let d1 = dom.distance_to_boundary(&pair[1]).unwrap();
                let gap = (&pair[0] - &pair[1]).norm();
                assert!((d0 - d1).abs() <= gap + 1e-7, "{name}");
            }
        }
    }
}
