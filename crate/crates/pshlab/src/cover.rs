//! The shrinking cover used by the approximation construction: W_j =
//! B(x_j, 4 r_j) around each patch plus the interior core W_0 = {delta >
//! eps_w}, the margin sets B_j (eps_w/2) and B_j^- (eps_w), the gap widths
//! d_j, and the compacts K_k = union over j of K_{j,k}.
//!
//! K_k is represented two ways: a membership predicate built from the cheap
//! sphere-shell bands, and a point cloud for smooth distance queries. All
//! evaluation-time paths avoid the full boundary-distance computation; the
//! interior core only enters through a conservative lower bound, so cloud
//! points are guaranteed to sit inside the closed B_k^- they are assigned
//! to (the property the cutoff construction actually needs), at the cost of
//! a slightly sparser core band.
//!
//! Piece indexing throughout: 0 is the interior core, j >= 1 is atlas patch
//! j - 1.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{BoundedDomain, DomainError, DomainResult};
use crate::geometry::{random_unit_vector, Point};

pub struct Cover {
    pub domain: Arc<BoundedDomain>,
    pub eps_w: f64,
    /// Gap widths d_j (piece indexing), already shrunk by the safety 0.9.
    pub d: Vec<f64>,
    /// Whether every estimated d_j met the eps_w/2 floor.
    pub d_floor_ok: bool,
    /// Point clouds sampling each K_k, used for smooth distance queries.
    pub k_clouds: Vec<Vec<Point>>,
    /// Dense boundary net (n = 1 only) with covering radius `net_radius`;
    /// min distance to the net minus the radius is a cheap valid lower
    /// bound for the boundary distance.
    pub boundary_net: Vec<Point>,
    pub net_radius: f64,
}

impl Cover {
    pub fn piece_count(&self) -> usize {
        self.domain.atlas.len() + 1
    }

    /// Signed depth of z inside W_j (positive inside). For the interior
    /// core this is delta(z) - eps_w and costs a distance computation;
    /// prefer `core_depth_lower` on hot paths.
    pub fn w_depth(&self, j: usize, z: &Point) -> f64 {
        if j == 0 {
            match self.domain.distance_to_boundary(z) {
                Ok(d) => d - self.eps_w,
                Err(_) => -1.0,
            }
        } else {
            let patch = &self.domain.atlas[j - 1];
            4.0 * patch.radius - (z - &patch.center).norm()
        }
    }

    /// Conservative core depth from cheap boundary-distance lower bounds:
    /// the atlas pruning bound, sharpened by the boundary net when one was
    /// built.
    pub fn core_depth_lower(&self, z: &Point) -> f64 {
        let mut lb = self.domain.quick_distance_lower_bound(z);
        if !self.boundary_net.is_empty() {
            let mut near = f64::INFINITY;
            for q in &self.boundary_net {
                let d = (z - q).norm_squared();
                if d < near {
                    near = d;
                }
            }
            lb = lb.max(near.sqrt() - self.net_radius);
        }
        lb - self.eps_w
    }

    pub fn in_w(&self, j: usize, z: &Point) -> bool {
        self.w_depth(j, z) > 0.0
    }

    pub fn in_b(&self, j: usize, z: &Point) -> bool {
        self.w_depth(j, z) > self.eps_w / 2.0
    }

    pub fn in_b_minus(&self, j: usize, z: &Point) -> bool {
        self.w_depth(j, z) > self.eps_w
    }

    /// Distance from z to the sphere bounding B_j, for j >= 1 (exact).
    pub fn dist_to_b_boundary(&self, j: usize, z: &Point) -> f64 {
        debug_assert!(j >= 1);
        (self.w_depth(j, z) - self.eps_w / 2.0).abs()
    }

    /// Membership predicate of the cheaply decidable part of K_k: the
    /// sphere-shell bands {dist(z, boundary B_j) <= d_j} for j >= 1,
    /// intersected with the closure of B_k^-. The core band K_{0,k} is
    /// carried by the point cloud instead.
    pub fn k_member(&self, k: usize, z: &Point) -> bool {
        if !self.domain.in_closure(z) {
            return false;
        }
        let deep_enough = if k == 0 {
            self.core_depth_lower(z) >= self.eps_w
        } else {
            self.w_depth(k, z) >= self.eps_w
        };
        if !deep_enough {
            return false;
        }
        (1..self.piece_count())
            .any(|j| j != k && self.dist_to_b_boundary(j, z) <= self.d[j])
    }

    /// Distance from z to the sampled K_k: zero on members of the shell
    /// bands, otherwise the nearest cloud point. Never underestimates the
    /// true distance by more than the cloud spacing.
    pub fn dist_to_k(&self, k: usize, z: &Point) -> f64 {
        if self.k_member(k, z) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for p in &self.k_clouds[k] {
            let d = (z - p).norm();
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Samples the interior and checks that the B_k^- together cover it;
    /// returns the number of samples checked.
    pub fn check_b_minus_covering(&self, samples: usize, seed: u64) -> DomainResult<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = self.domain.sample_interior(&mut rng, samples);
        for z in &pts {
            let patch_covered =
                (1..self.piece_count()).any(|j| self.w_depth(j, z) > self.eps_w);
            if patch_covered {
                continue;
            }
            if self.core_depth_lower(z) > self.eps_w || self.w_depth(0, z) > self.eps_w {
                continue;
            }
            return Err(DomainError::CoverDegenerate);
        }
        Ok(pts.len())
    }
}

/// Sample points on the sphere bounding B_j (j >= 1) that lie in the
/// closure, roughly `spacing` apart (capped).
fn sphere_shell_samples(
    domain: &BoundedDomain,
    eps_w: f64,
    j: usize,
    rng: &mut ChaCha8Rng,
    spacing: f64,
) -> Vec<Point> {
    let dim = domain.real_dim();
    let patch = &domain.atlas[j - 1];
    let radius = 4.0 * patch.radius - eps_w / 2.0;
    let mut out = Vec::new();
    if dim == 2 {
        let n = ((2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize).clamp(48, 512);
        for i in 0..n {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let z = &patch.center + Point::from_vec(vec![a.cos(), a.sin()]) * radius;
            if domain.in_closure(&z) {
                out.push(z);
            }
        }
    } else {
        for _ in 0..512 {
            let z = &patch.center + random_unit_vector(rng, dim) * radius;
            if domain.in_closure(&z) {
                out.push(z);
            }
        }
    }
    out
}

/// Sample points near the core level set {delta = 1.5 eps_w} by marching
/// inward from boundary samples. With `exact` the landing distance is
/// verified against the full boundary distance; otherwise the nominal
/// offset is trusted (used for cloud seeding, where the depth filters
/// downstream keep stray points harmless).
fn core_shell_samples(
    domain: &BoundedDomain,
    eps_w: f64,
    rng: &mut ChaCha8Rng,
    count: usize,
    exact: bool,
) -> Vec<Point> {
    let target = 1.5 * eps_w;
    let mut out = Vec::new();
    let boundary = domain.sample_boundary_with(rng, count).unwrap_or_default();
    for q in boundary {
        let patch = match domain.covering_patch(&q) {
            Some(p) => p,
            None => continue,
        };
        let w = domain.atlas[patch].w_dir();
        if !exact {
            let z = &q + &w * target;
            if domain.is_inside(&z) {
                out.push(z);
            }
            continue;
        }
        let mut t = target;
        for _ in 0..4 {
            let z = &q + &w * t;
            if !domain.is_inside(&z) {
                break;
            }
            match domain.distance_to_boundary(&z) {
                Ok(d) if (d - target).abs() <= 0.05 * eps_w => {
                    out.push(z);
                    break;
                }
                Ok(d) => {
                    t += target - d;
                    if t <= 0.0 {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    }
    out
}

/// Dense boundary point net for planar domains from per-patch chart grids.
/// The covering radius is taken as half the largest gap between
/// consecutive surface samples of any patch, so the atlas covering of the
/// boundary (chart radius r_j) transfers to the net.
fn build_boundary_net(domain: &BoundedDomain, eps_w: f64) -> (Vec<Point>, f64) {
    let mut net = Vec::new();
    let mut radius = 0.0f64;
    for patch in &domain.atlas {
        let h = (patch.radius / 16.0).min(eps_w / 4.0);
        let n = ((2.0 * patch.radius / h).ceil() as usize).max(8);
        let mut prev: Option<Point> = None;
        for i in 0..=n {
            let y = -patch.radius + 2.0 * patch.radius * i as f64 / n as f64;
            let g = patch.graph(&[y]);
            if g.abs() > 100.0 {
                prev = None;
                continue;
            }
            let p = patch.surface_point(&[y]);
            if let Some(q) = &prev {
                radius = radius.max((&p - q).norm() / 2.0);
            }
            prev = Some(p.clone());
            net.push(p);
        }
    }
    (net, radius.max(1e-12))
}

/// Whether w lies in the union of the B_k^- over k != exclude. The pieces
/// are plain balls, so points outside the closure still count for k >= 1.
fn in_piece_union(cover: &Cover, exclude: usize, w: &Point) -> bool {
    let m = cover.piece_count();
    for k in 1..m {
        if k != exclude && cover.w_depth(k, w) > cover.eps_w {
            return true;
        }
    }
    if exclude != 0 && cover.domain.is_inside(w) {
        if cover.core_depth_lower(w) > cover.eps_w {
            return true;
        }
        if cover.w_depth(0, w) > cover.eps_w {
            return true;
        }
    }
    false
}

/// Builds the shrinking cover: estimates each d_j on boundary samples of
/// B_j as the deepest containment in the other pieces' B^- (conservative
/// shrink 0.9), and collects the K_k point clouds.
pub fn build_cover(domain: Arc<BoundedDomain>, seed: u64) -> DomainResult<Arc<Cover>> {
    if domain.atlas.is_empty() {
        return Err(DomainError::NoAtlas);
    }
    let eps_w = domain.eps_w();
    let m = domain.atlas.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (boundary_net, net_radius) = if domain.real_dim() == 2 {
        build_boundary_net(&domain, eps_w)
    } else {
        (Vec::new(), 0.0)
    };

    let mut cover = Cover {
        domain: domain.clone(),
        eps_w,
        d: vec![0.0; m],
        d_floor_ok: true,
        k_clouds: vec![Vec::new(); m],
        boundary_net,
        net_radius,
    };

    // Shell samples per piece: a dense set for cloud seeding and a thin
    // subsample for the d_j estimate (which may need full distance
    // computations on deep-interior shell points).
    let mut shells: Vec<Vec<Point>> = Vec::with_capacity(m);
    shells.push(core_shell_samples(&domain, eps_w, &mut rng, 96, true));
    for j in 1..m {
        shells.push(sphere_shell_samples(&domain, eps_w, j, &mut rng, eps_w / 2.0));
    }

    // Probe directions for the gap-floor verification.
    let dim = domain.real_dim();
    let mut probe_dirs: Vec<Point> = Vec::new();
    if dim == 2 {
        for i in 0..16 {
            let a = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            probe_dirs.push(Point::from_vec(vec![a.cos(), a.sin()]));
        }
    } else {
        for _ in 0..24 {
            probe_dirs.push(random_unit_vector(&mut rng, dim));
        }
    }

    for j in 0..m {
        if shells[j].is_empty() {
            // The whole shell lies outside the closure; the piece borders
            // no other piece inside the domain and needs no gap.
            cover.d[j] = eps_w / 2.0;
            continue;
        }
        let stride = (shells[j].len() / 96).max(1);
        let mut worst = f64::INFINITY;
        let mut floor_verified = true;
        for z in shells[j].iter().step_by(stride) {
            // Single-piece containment depth, a lower bound on the distance
            // to the boundary of the union of the other B_k^-.
            let mut best_depth = f64::NEG_INFINITY;
            for k in 1..m {
                if k == j {
                    continue;
                }
                best_depth = best_depth.max(cover.w_depth(k, z) - eps_w);
                if best_depth > eps_w {
                    break;
                }
            }
            if j != 0 && best_depth <= 0.0 {
                // Fall back to the true core depth: the cheap bounds assume
                // a boundary-covering atlas, which is exactly what the
                // degeneracy check must not presuppose.
                best_depth = best_depth.max(cover.w_depth(0, z) - eps_w);
            }
            if best_depth <= 0.0 {
                return Err(DomainError::CoverDegenerate);
            }
            worst = worst.min(best_depth);
            // The pieces overlap, so the true gap exceeds the single-piece
            // depth; certify the eps_w/2 floor directly by checking that the
            // ball B(z, 0.45 eps_w) stays inside the union.
            if floor_verified && best_depth < 0.45 * eps_w {
                for dir in &probe_dirs {
                    let w = z + dir * (0.45 * eps_w);
                    if !in_piece_union(&cover, j, &w) {
                        floor_verified = false;
                        break;
                    }
                }
            }
        }
        let mut dj = 0.9 * worst.min(4.0 * eps_w);
        if floor_verified {
            dj = dj.max(0.45 * eps_w);
        } else {
            cover.d_floor_ok = false;
        }
        cover.d[j] = dj;
    }

    // K_k clouds from the sphere shells, thickened into their +-d_j bands.
    // Assignment filters guarantee cloud_k lies in the closed B_k^-.
    for j in 1..m {
        let dj = cover.d[j];
        let center = domain.atlas[j - 1].center.clone();
        for z0 in &shells[j] {
            let rel = z0 - &center;
            let n = rel.norm();
            if n <= 1e-12 {
                continue;
            }
            let dir = rel / n;
            for l in 0..3 {
                let t = -dj + dj * l as f64;
                let z = z0 + &dir * t;
                if !domain.in_closure(&z) {
                    continue;
                }
                for k in 0..m {
                    if k == j {
                        continue;
                    }
                    let deep = if k == 0 {
                        cover.core_depth_lower(&z) >= eps_w
                    } else {
                        cover.w_depth(k, &z) >= eps_w
                    };
                    if deep {
                        cover.k_clouds[k].push(z.clone());
                    }
                }
            }
        }
    }

    // The core band {delta near 1.5 eps_w} feeds the clouds of the sphere
    // pieces; nominal offsets suffice here because the depth filter keeps
    // every kept point inside the closed B_k^-.
    let band = core_shell_samples(&domain, eps_w, &mut rng, 2048, false);
    for q in band {
        for k in 1..m {
            if cover.w_depth(k, &q) >= eps_w {
                cover.k_clouds[k].push(q.clone());
            }
        }
    }

    Ok(Arc::new(cover))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build_domain;
    use std::collections::BTreeMap;

    #[test]
    fn ball_cover_core_contains_origin() {
        // Six oversized patches still cover the circle; the origin sits in
        // the interior core alone.
        let mut params = BTreeMap::new();
        params.insert("patches".to_string(), 6.0);
        params.insert("patch_radius".to_string(), 0.5);
        let dom = build_domain("ball", &params).unwrap();
        let cover = build_cover(dom, 42).unwrap();
        let origin = Point::zeros(2);
        assert!(cover.in_w(0, &origin));
        assert!(cover.check_b_minus_covering(2000, 1).is_ok());
    }

    #[test]
    fn single_patch_atlas_is_degenerate() {
        let mut params = BTreeMap::new();
        params.insert("patches".to_string(), 1.0);
        params.insert("patch_radius".to_string(), 0.5);
        let dom = build_domain("ball", &params).unwrap();
        match build_cover(dom, 42) {
            Err(DomainError::CoverDegenerate) => {}
            Err(other) => panic!("expected CoverDegenerate, got {other:?}"),
            Ok(_) => panic!("expected CoverDegenerate, got a cover"),
        }
    }

    #[test]
    fn default_ball_cover_properties() {
        let dom = build_domain("ball", &BTreeMap::new()).unwrap();
        let cover = build_cover(dom.clone(), 7).unwrap();
        assert!(cover.d_floor_ok, "d = {:?}", &cover.d[..4.min(cover.d.len())]);
        assert!(cover.check_b_minus_covering(3000, 2).is_ok());

        // Every cloud point of K_k sits inside the closed B_k^-, hence at
        // distance >= eps_w/2 from the boundary of B_k.
        let eps_w = cover.eps_w;
        for k in 1..cover.piece_count() {
            assert!(!cover.k_clouds[k].is_empty(), "K_{k} cloud empty");
            for p in cover.k_clouds[k].iter().step_by(7) {
                assert!(
                    cover.w_depth(k, p) >= eps_w - 1e-9,
                    "K_{k} too close to its B_k boundary"
                );
            }
        }
        for p in cover.k_clouds[0].iter().step_by(7) {
            assert!(cover.w_depth(0, p) >= eps_w - 1e-9);
        }
    }

    #[test]
    fn ll_cusp_cover_is_nondegenerate() {
        let dom = build_domain("ll_cusp", &BTreeMap::new()).unwrap();
        let cover = build_cover(dom, 7).unwrap();
        assert!(cover.check_b_minus_covering(1000, 3).is_ok());
        assert!(cover.d.iter().all(|&d| d > 0.0));
    }
}
