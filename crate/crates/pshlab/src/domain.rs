//! Bounded domains in C^n ~ R^{2n} described by boundary atlases of graph
//! patches: membership, distance to the boundary, the segment property and
//! the inward-translation estimates on the distance function.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{random_unit_vector, Point};
use crate::optim::{bisect_root, golden_section, nelder_mead};
use crate::special::GainFunction;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("point is outside the domain")]
    PointOutsideDomain,
    #[error("distance minimization did not converge")]
    ConvergenceFailure,
    #[error("sampled boundary point lies in no atlas ball")]
    NoCoveringPatch,
    #[error("the shrunk cover fails to cover the closure")]
    CoverDegenerate,
    #[error("domain has no boundary atlas (probe-only catalog entry)")]
    NoAtlas,
    #[error("translated point escapes the domain")]
    TranslateEscapes,
}

pub type DomainResult<T> = Result<T, DomainError>;

/// Boundary regularity classes of graph functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RegularityClass {
    C0,
    Hoelder(f64),
    Lipschitz,
    LogLipschitz,
}

impl RegularityClass {
    /// Modulus shape m(d) with |phi(a) - phi(b)| <= norm * m(|a-b|).
    /// Returns None for bare C0 (no quantitative modulus).
    pub fn modulus(&self, d: f64) -> Option<f64> {
        if d <= 0.0 {
            return Some(0.0);
        }
        match self {
            RegularityClass::C0 => None,
            RegularityClass::Hoelder(gamma) => Some(d.powf(*gamma)),
            RegularityClass::Lipschitz => Some(d),
            RegularityClass::LogLipschitz => {
                // Only meaningful on small scales; clamp so m stays increasing.
                let d = d.min(0.3);
                Some(d * (1.0 / d).ln())
            }
        }
    }
}

/// Regularity class, norm bound and guaranteed translation gain.
#[derive(Debug, Clone)]
pub struct RegularitySpec {
    pub class: RegularityClass,
    pub norm: f64,
    pub gain: GainFunction,
}

type GraphFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type LevelFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// One boundary chart: the boundary is the graph of `graph_fn` over the
/// hyperplane orthogonal to the last frame vector (the inward direction),
/// valid inside B(center, 4 radius).
#[derive(Clone)]
pub struct GraphPatch {
    pub center: Point,
    pub radius: f64,
    /// Orthonormal; the last column is the inward graph direction w_j.
    pub frame: DMatrix<f64>,
    graph_fn: GraphFn,
    pub regularity: RegularitySpec,
    /// Bound on |surface(y') - center| over the chart, for pruning.
    reach: f64,
}

impl GraphPatch {
    pub fn new(
        center: Point,
        radius: f64,
        frame: DMatrix<f64>,
        graph_fn: GraphFn,
        regularity: RegularitySpec,
    ) -> Self {
        let mut patch = GraphPatch {
            center,
            radius,
            frame,
            graph_fn,
            regularity,
            reach: 0.0,
        };
        patch.reach = patch.estimate_reach();
        patch
    }

    pub fn horizontal_dim(&self) -> usize {
        self.center.len() - 1
    }

    /// Inward graph direction w_j in ambient coordinates.
    pub fn w_dir(&self) -> Point {
        Point::from(self.frame.column(self.center.len() - 1))
    }

    pub fn graph(&self, yprime: &[f64]) -> f64 {
        (self.graph_fn)(yprime)
    }

    /// Local coordinates (y', y_n) of an ambient point.
    pub fn to_local(&self, z: &Point) -> (Vec<f64>, f64) {
        let rel = z - &self.center;
        let local = self.frame.transpose() * rel;
        let dim = local.len();
        (local.as_slice()[..dim - 1].to_vec(), local[dim - 1])
    }

    /// Ambient point (y', graph(y')) on the chart surface.
    pub fn surface_point(&self, yprime: &[f64]) -> Point {
        let dim = self.center.len();
        let mut local = Point::zeros(dim);
        local.as_mut_slice()[..dim - 1].copy_from_slice(yprime);
        local[dim - 1] = self.graph(yprime);
        &self.center + &self.frame * local
    }

    /// Height above the graph in local coordinates; positive means the
    /// point is on the interior side of the chart.
    pub fn height_above_graph(&self, z: &Point) -> f64 {
        let (yp, yn) = self.to_local(z);
        yn - self.graph(&yp)
    }

    /// Bound on |surface(y') - center| over the chart.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    fn estimate_reach(&self) -> f64 {
        let d = self.horizontal_dim();
        let span = 4.0 * self.radius;
        let per_axis = if d == 1 { 41 } else { 7 };
        let mut reach = 0.0f64;
        let mut idx = vec![0usize; d];
        loop {
            let yp: Vec<f64> = idx
                .iter()
                .map(|&i| -span + 2.0 * span * i as f64 / (per_axis - 1) as f64)
                .collect();
            // Charts may report "no boundary along this line" with a huge
            // graph value; those lines carry no surface and are skipped.
            if self.graph(&yp).abs() < 100.0 {
                let p = self.surface_point(&yp);
                reach = reach.max((p - &self.center).norm());
            }
            // odometer
            let mut k = 0;
            loop {
                if k == d {
                    return reach * 1.2 + 1e-9;
                }
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Minimum distance from z to the chart surface over B'(0, 4 radius),
    /// coarse grid seeding a derivative-free polish.
    pub fn distance_to_graph(&self, z: &Point) -> f64 {
        let d = self.horizontal_dim();
        let span = 4.0 * self.radius;
        let dist = |yp: &[f64]| (self.surface_point(yp) - z).norm();
        if d == 1 {
            let n = 33usize;
            let mut best_i = 0;
            let mut best = f64::INFINITY;
            for i in 0..n {
                let y = -span + 2.0 * span * i as f64 / (n - 1) as f64;
                let v = dist(&[y]);
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
            let h = 2.0 * span / (n - 1) as f64;
            let lo = (-span + h * (best_i as f64 - 1.0)).max(-span);
            let hi = (-span + h * (best_i as f64 + 1.0)).min(span);
            let (_, v) = golden_section(|y| dist(&[y]), lo, hi, 1e-13 * (1.0 + span));
            v.min(best)
        } else {
            let n = if d == 2 { 13 } else { 7 };
            let mut best_y = vec![0.0; d];
            let mut best = f64::INFINITY;
            let mut idx = vec![0usize; d];
            'outer: loop {
                let yp: Vec<f64> = idx
                    .iter()
                    .map(|&i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
                    .collect();
                let v = dist(&yp);
                if v < best {
                    best = v;
                    best_y = yp;
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break 'outer;
                    }
                    idx[k] += 1;
                    if idx[k] < n {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
            let h = 2.0 * span / (n - 1) as f64;
            let (_, v) = nelder_mead(|yp| dist(yp), &best_y, h, 200, 1e-13);
            v.min(best)
        }
    }
}

/// How a point relates to the domain, with a boundary tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Membership {
    Inside,
    Outside,
    Boundary,
}

/// A bounded domain with boundary atlas and membership level function
/// (negative inside, positive outside).
pub struct BoundedDomain {
    pub name: String,
    pub complex_dim: usize,
    pub atlas: Vec<GraphPatch>,
    pub regularity: RegularitySpec,
    level: LevelFn,
    pub diameter: f64,
    pub interior_point: Point,
    pub enclosing_center: Point,
    pub enclosing_radius: f64,
    pub boundary_tol: f64,
    /// Closed-form distance when available; used by test oracles only.
    pub closed_form_distance: Option<LevelFn>,
}

impl BoundedDomain {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        complex_dim: usize,
        atlas: Vec<GraphPatch>,
        regularity: RegularitySpec,
        level: LevelFn,
        interior_point: Point,
        enclosing_center: Point,
        enclosing_radius: f64,
    ) -> Self {
        let mut dom = BoundedDomain {
            name: name.into(),
            complex_dim,
            atlas,
            regularity,
            level,
            diameter: 0.0,
            interior_point,
            enclosing_center,
            enclosing_radius,
            boundary_tol: 1e-9,
            closed_form_distance: None,
        };
        dom.diameter = dom.estimate_diameter();
        dom
    }

    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim
    }

    pub fn level(&self, z: &Point) -> f64 {
        (self.level)(z)
    }

    pub fn membership(&self, z: &Point) -> Membership {
        let l = self.level(z);
        if l < -self.boundary_tol {
            Membership::Inside
        } else if l > self.boundary_tol {
            Membership::Outside
        } else {
            Membership::Boundary
        }
    }

    pub fn is_inside(&self, z: &Point) -> bool {
        self.level(z) < 0.0
    }

    pub fn in_closure(&self, z: &Point) -> bool {
        self.level(z) <= self.boundary_tol
    }

    /// eps_w = min_j r_j, the core margin of the atlas.
    pub fn eps_w(&self) -> f64 {
        self.atlas
            .iter()
            .map(|p| p.radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Default validity ceiling for translation sizes.
    pub fn eps1(&self) -> f64 {
        (self.eps_w() / 2.0).min(0.1)
    }

    fn estimate_diameter(&self) -> f64 {
        if self.atlas.is_empty() {
            return 2.0 * self.enclosing_radius;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_D1A8);
        let pts = self.sample_boundary_with(&mut rng, 400).unwrap_or_default();
        let mut sup = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            for q in pts.iter().skip(i + 1) {
                sup = sup.max((p - q).norm());
            }
        }
        (sup * 1.005).max(1e-12)
    }

    /// Distance from an interior point to the boundary: minimum of the
    /// per-patch chart distances, guarded by membership bracketing along
    /// sampled rays.
    pub fn distance_to_boundary(&self, z: &Point) -> DomainResult<f64> {
        if !self.is_inside(z) {
            return Err(DomainError::PointOutsideDomain);
        }
        if self.atlas.is_empty() {
            return Err(DomainError::NoAtlas);
        }
        let ray_bound = self.ray_crossing_bound(z);
        let mut best = ray_bound;

        let mut order: Vec<usize> = (0..self.atlas.len()).collect();
        order.sort_by(|&a, &b| {
            let da = (z - &self.atlas[a].center).norm();
            let db = (z - &self.atlas[b].center).norm();
            da.partial_cmp(&db).unwrap()
        });
        for j in order {
            let patch = &self.atlas[j];
            let lower = (z - &patch.center).norm() - patch.reach;
            if lower >= best {
                continue;
            }
            best = best.min(patch.distance_to_graph(z));
        }
        if best.is_finite() && best > 0.0 {
            Ok(best)
        } else {
            Err(DomainError::ConvergenceFailure)
        }
    }

    /// Cheap lower bound on the boundary distance: every boundary point lies
    /// on some patch surface, so the distance is at least
    /// min_j (|z - x_j| - reach_j). Costs one pass over the atlas, may be
    /// negative, never overestimates.
    pub fn quick_distance_lower_bound(&self, z: &Point) -> f64 {
        self.atlas
            .iter()
            .map(|p| (z - &p.center).norm() - p.reach)
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the boundary distance from membership bisection along
    /// a handful of fixed rays.
    fn ray_crossing_bound(&self, z: &Point) -> f64 {
        let dim = self.real_dim();
        let mut dirs: Vec<Point> = Vec::new();
        for k in 0..dim {
            let mut e = Point::zeros(dim);
            e[k] = 1.0;
            dirs.push(e.clone());
            dirs.push(-e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xD15_7A4C);
        for _ in 0..4 {
            dirs.push(random_unit_vector(&mut rng, dim));
        }
        let mut best = f64::INFINITY;
        for dir in &dirs {
            let mut t = 1e-3 * self.enclosing_radius;
            let mut bracketed = None;
            while t < 4.0 * self.enclosing_radius {
                if self.level(&(z + dir * t)) >= 0.0 {
                    bracketed = Some(t);
                    break;
                }
                t *= 2.0;
            }
            if let Some(hi) = bracketed {
                let cross = bisect_root(|s| self.level(&(z + dir * s)), hi / 2.0, hi, 50);
                best = best.min(cross);
            }
        }
        best
    }

    /// Dense boundary-sampling distance oracle: `samples` chart samples in
    /// total, refined `rounds` times around the incumbent.
    pub fn brute_force_distance(&self, z: &Point, samples: usize, rounds: usize) -> DomainResult<f64> {
        if self.atlas.is_empty() {
            return Err(DomainError::NoAtlas);
        }
        let per_patch = (samples / self.atlas.len()).max(16);
        let mut best = f64::INFINITY;
        for patch in &self.atlas {
            let lower = (z - &patch.center).norm() - patch.reach;
            if lower >= best {
                continue;
            }
            let d = patch.horizontal_dim();
            let span = 4.0 * patch.radius;
            let n = (per_patch as f64).powf(1.0 / d as f64).ceil().max(3.0) as usize;
            let mut center = vec![0.0f64; d];
            let mut halfspan = span;
            for _ in 0..=rounds {
                let (by, bv) = grid_min(
                    |yp| (patch.surface_point(yp) - z).norm(),
                    &center,
                    halfspan,
                    n,
                );
                if bv < best {
                    best = bv;
                }
                center = by;
                halfspan = 2.0 * halfspan / (n - 1) as f64;
            }
        }
        Ok(best)
    }

    /// Uniform interior samples by rejection from the enclosing ball.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<Point> {
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count {
            let p = crate::geometry::random_in_ball(rng, &self.enclosing_center, self.enclosing_radius);
            if self.is_inside(&p) {
                out.push(p);
            }
            guard += 1;
            assert!(guard < 20_000 * count.max(1) + 100_000, "interior sampling stalled");
        }
        out
    }

    /// Boundary samples drawn from the atlas charts, each within its patch
    /// ball B(x_j, r_j).
    pub fn sample_boundary_with<R: Rng>(&self, rng: &mut R, count: usize) -> DomainResult<Vec<Point>> {
        if self.atlas.is_empty() {
            return Err(DomainError::NoAtlas);
        }
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count {
            let j = rng.gen_range(0..self.atlas.len());
            let patch = &self.atlas[j];
            let d = patch.horizontal_dim();
            let mut yp = vec![0.0; d];
            for y in yp.iter_mut() {
                *y = rng.gen_range(-0.9 * patch.radius..0.9 * patch.radius);
            }
            let p = patch.surface_point(&yp);
            if (&p - &patch.center).norm() < patch.radius {
                out.push(p);
            }
            guard += 1;
            assert!(guard < 10_000 * count.max(1) + 100_000, "boundary sampling stalled");
        }
        Ok(out)
    }

    /// Points at prescribed depth below the boundary: boundary sample plus
    /// depth along the covering patch's inward direction, kept when the
    /// realized distance brackets the request.
    pub fn sample_near_boundary<R: Rng>(
        &self,
        rng: &mut R,
        count: usize,
        depth_lo: f64,
        depth_hi: f64,
    ) -> DomainResult<Vec<Point>> {
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count {
            guard += 1;
            assert!(guard < 5_000 * count.max(1) + 50_000, "near-boundary sampling stalled");
            let q = self.sample_boundary_with(rng, 1)?[0].clone();
            let j = match self.covering_patch(&q) {
                Some(j) => j,
                None => continue,
            };
            let t = depth_lo * (depth_hi / depth_lo).powf(rng.gen_range(0.0..1.0f64));
            let z = &q + self.atlas[j].w_dir() * t;
            if !self.is_inside(&z) {
                continue;
            }
            if let Ok(d) = self.distance_to_boundary(&z) {
                if d >= depth_lo * 0.5 && d <= depth_hi {
                    out.push(z);
                }
            }
        }
        Ok(out)
    }

    /// Index of an atlas ball B(x_j, r_j) containing the point.
    pub fn covering_patch(&self, p: &Point) -> Option<usize> {
        self.atlas
            .iter()
            .position(|patch| (p - &patch.center).norm() < patch.radius)
    }

    /// Segment-property check: every sampled boundary point must have its
    /// whole neighbourhood in the closure pushed inside by the covering
    /// patch direction, for every t in the grid scaled by eps_w.
    pub fn check_segment_property(
        &self,
        boundary_samples: usize,
        t_grid: &[f64],
        seed: u64,
    ) -> DomainResult<SegmentReport> {
        assert!(boundary_samples >= 1);
        if self.atlas.is_empty() {
            return Err(DomainError::NoAtlas);
        }
        let eps_w = self.eps_w();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boundary = self.sample_boundary_with(&mut rng, boundary_samples)?;
        let mut witnesses = Vec::new();
        for p in &boundary {
            let j = self.covering_patch(p).ok_or(DomainError::NoCoveringPatch)?;
            let patch = &self.atlas[j];
            let w = patch.w_dir();
            // The point itself plus nearby closure points.
            let mut nearby = vec![p.clone()];
            for _ in 0..6 {
                let q = p + random_unit_vector(&mut rng, self.real_dim())
                    * rng.gen_range(0.0..0.2 * patch.radius);
                if self.in_closure(&q) {
                    nearby.push(q);
                }
            }
            for z in &nearby {
                for &t in t_grid {
                    let tt = t * eps_w;
                    if !self.is_inside(&(z + &w * tt)) {
                        witnesses.push(SegmentWitness {
                            point: z.as_slice().to_vec(),
                            t: tt,
                            patch: j,
                        });
                    }
                }
            }
        }
        Ok(SegmentReport {
            passes: witnesses.is_empty(),
            tested: boundary.len(),
            witnesses,
        })
    }

    /// Verifies delta(z) + s f(eps) <= delta(z + eps w_j) <= delta(z) + eps
    /// on a sample grid, reporting the best constant rescaling s of the
    /// gain for which the lower bound holds.
    pub fn check_translation_estimate(
        &self,
        patch_index: usize,
        sample_points: &[Point],
        eps_grid: &[f64],
        c: f64,
    ) -> DomainResult<TranslationReport> {
        let patch = &self.atlas[patch_index];
        let w = patch.w_dir();
        let gain = &patch.regularity.gain;
        let mut fitted = f64::INFINITY;
        let mut upper_defect = f64::INFINITY;
        let mut violations = Vec::new();
        let mut tested = 0usize;
        for z in sample_points {
            if !self.is_inside(z) || (z - &patch.center).norm() > patch.radius / c {
                continue;
            }
            let d0 = self.distance_to_boundary(z)?;
            for &eps in eps_grid {
                let zt = z + &w * eps;
                if !self.is_inside(&zt) {
                    return Err(DomainError::TranslateEscapes);
                }
                let d1 = self.distance_to_boundary(&zt)?;
                tested += 1;
                let f = gain.gain(eps).map_err(|_| DomainError::ConvergenceFailure)?;
                let ratio = (d1 - d0) / f;
                fitted = fitted.min(ratio);
                let upper = d0 + eps - d1;
                upper_defect = upper_defect.min(upper);
                if ratio <= 0.0 || upper < -1e-7 * (1.0 + d0) {
                    violations.push(TranslationViolation {
                        point: z.as_slice().to_vec(),
                        eps,
                        delta: d0,
                        delta_translated: d1,
                        gain: f,
                    });
                }
            }
        }
        Ok(TranslationReport {
            holds: violations.is_empty() && fitted > 0.0 && tested > 0,
            fitted_constant: fitted,
            upper_defect,
            tested,
            violations,
        })
    }

    /// Direction-probe refutation of the segment property at a point
    /// (atlas-free mode, used by counterexample domains): a direction
    /// fails when some closure point near `base` leaves the domain under
    /// some translate t in (0,1).
    pub fn probe_segment_at(
        &self,
        base: &Point,
        neighborhood: f64,
        directions: &[Point],
        t_grid: &[f64],
        seed: u64,
    ) -> ProbeReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failed = Vec::with_capacity(directions.len());
        for w in directions {
            let mut witness = false;
            // Candidate closure points: the base point, reflected translates
            // and random closure samples in the neighbourhood.
            let mut candidates: Vec<Point> = vec![base.clone()];
            for &t in t_grid {
                let refl = base - w * (t * neighborhood);
                if self.in_closure(&refl) {
                    candidates.push(refl);
                }
            }
            for _ in 0..32 {
                let q = base
                    + random_unit_vector(&mut rng, self.real_dim())
                        * rng.gen_range(0.0..neighborhood);
                if self.in_closure(&q) {
                    candidates.push(q);
                }
            }
            'dir: for z in &candidates {
                for &t in t_grid {
                    if !self.is_inside(&(z + w * t)) {
                        witness = true;
                        break 'dir;
                    }
                }
            }
            failed.push(witness);
        }
        ProbeReport {
            all_fail: failed.iter().all(|&f| f),
            failed,
        }
    }
}

fn grid_min<F: Fn(&[f64]) -> f64>(
    f: F,
    center: &[f64],
    halfspan: f64,
    n: usize,
) -> (Vec<f64>, f64) {
    let d = center.len();
    let mut idx = vec![0usize; d];
    let mut best = f64::INFINITY;
    let mut best_y = center.to_vec();
    loop {
        let yp: Vec<f64> = idx
            .iter()
            .zip(center)
            .map(|(&i, &c)| c - halfspan + 2.0 * halfspan * i as f64 / (n - 1) as f64)
            .collect();
        let v = f(&yp);
        if v < best {
            best = v;
            best_y = yp;
        }
        let mut k = 0;
        loop {
            if k == d {
                return (best_y, best);
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SegmentWitness {
    pub point: Vec<f64>,
    pub t: f64,
    pub patch: usize,
}

#[derive(Debug, Serialize)]
pub struct SegmentReport {
    pub passes: bool,
    pub tested: usize,
    pub witnesses: Vec<SegmentWitness>,
}

#[derive(Debug, Serialize)]
pub struct TranslationViolation {
    pub point: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub delta_translated: f64,
    pub gain: f64,
}

#[derive(Debug, Serialize)]
pub struct TranslationReport {
    pub holds: bool,
    pub fitted_constant: f64,
    pub upper_defect: f64,
    pub tested: usize,
    pub violations: Vec<TranslationViolation>,
}

#[derive(Debug, Serialize)]
pub struct ProbeReport {
    pub all_fail: bool,
    pub failed: Vec<bool>,
}

/// Dense chart net of one patch, used by the fast distance oracle.
struct PatchNet {
    patch: usize,
    /// (surface point, chart coordinate), in chart order.
    pts: Vec<(Point, f64)>,
    /// Largest gap between consecutive surface points.
    gap: f64,
    /// Lower bound |z - center| - reach is computed per query.
    center: Point,
    reach: f64,
}

/// Fast boundary-distance oracle. For planar domains it precomputes a
/// dense net of chart surface points per patch and answers queries by a
/// pruned net scan followed by a one-dimensional polish on the owning
/// charts. Higher-dimensional domains fall back to the per-patch
/// minimization of `distance_to_boundary`.
pub struct DistanceOracle {
    domain: Arc<BoundedDomain>,
    nets: Vec<PatchNet>,
}

impl DistanceOracle {
    pub fn new(domain: Arc<BoundedDomain>) -> DomainResult<Self> {
        if domain.atlas.is_empty() {
            return Err(DomainError::NoAtlas);
        }
        let mut nets = Vec::new();
        if domain.real_dim() == 2 {
            for (j, patch) in domain.atlas.iter().enumerate() {
                let span = 3.9 * patch.radius;
                let h = patch.radius / 16.0;
                let m = (2.0 * span / h).ceil() as usize + 1;
                let mut pts: Vec<(Point, f64)> = Vec::with_capacity(m);
                for i in 0..m {
                    let y = -span + 2.0 * span * i as f64 / (m - 1) as f64;
                    if patch.graph(&[y]).abs() >= 100.0 {
                        continue;
                    }
                    let p = patch.surface_point(&[y]);
                    if (&p - &patch.center).norm() <= span {
                        pts.push((p, y));
                    }
                }
                if pts.len() < 2 {
                    continue;
                }
                let gap = pts
                    .windows(2)
                    .map(|w| (&w[1].0 - &w[0].0).norm())
                    .fold(0.0f64, f64::max);
                nets.push(PatchNet {
                    patch: j,
                    pts,
                    gap,
                    center: patch.center.clone(),
                    reach: patch.reach(),
                });
            }
        }
        Ok(DistanceOracle { domain, nets })
    }

    pub fn domain(&self) -> &Arc<BoundedDomain> {
        &self.domain
    }

    /// Distance from z to the boundary set. The point need not be inside;
    /// interior callers get the usual boundary distance.
    pub fn distance(&self, z: &Point) -> DomainResult<f64> {
        if self.nets.is_empty() {
            return self.domain.distance_to_boundary(z);
        }
        // Pruned net scan: patches in order of their centre lower bound,
        // keeping the best entry per visited patch.
        let mut order: Vec<(f64, usize)> = self
            .nets
            .iter()
            .enumerate()
            .map(|(k, net)| ((z - &net.center).norm() - net.reach, k))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut best = f64::INFINITY;
        // (net index, entry index, entry distance)
        let mut visited: Vec<(usize, usize, f64)> = Vec::new();
        for &(lb, k) in &order {
            if lb >= best {
                break;
            }
            let net = &self.nets[k];
            let mut bi = 0usize;
            let mut bd2 = f64::INFINITY;
            for (i, (p, _)) in net.pts.iter().enumerate() {
                let d2 = (z - p).norm_squared();
                if d2 < bd2 {
                    bd2 = d2;
                    bi = i;
                }
            }
            let bd = bd2.sqrt();
            best = best.min(bd);
            visited.push((k, bi, bd));
        }
        // Polish the charts whose nearest entry could hide the true foot:
        // the foot lies within one net gap of its patch's best entry.
        let mut out = best;
        for &(k, bi, bd) in &visited {
            let net = &self.nets[k];
            if bd > best + net.gap {
                continue;
            }
            let patch = &self.domain.atlas[net.patch];
            let lo = net.pts[bi.saturating_sub(1)].1;
            let hi = net.pts[(bi + 1).min(net.pts.len() - 1)].1;
            let dist = |y: f64| (patch.surface_point(&[y]) - z).norm();
            // Seed with a subgrid, then polish the bracketing cell.
            let n = 17usize;
            let mut si = 0usize;
            let mut sv = f64::INFINITY;
            for i in 0..n {
                let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let v = dist(y);
                if v < sv {
                    sv = v;
                    si = i;
                }
            }
            let step = (hi - lo) / (n - 1) as f64;
            let a = lo + step * (si as f64 - 1.0);
            let b = lo + step * (si as f64 + 1.0);
            let (_, v) = golden_section(dist, a.max(lo), b.min(hi), 1e-13 * (1.0 + hi - lo));
            out = out.min(v.min(sv));
        }
        if out.is_finite() {
            Ok(out)
        } else {
            Err(DomainError::ConvergenceFailure)
        }
    }
}
