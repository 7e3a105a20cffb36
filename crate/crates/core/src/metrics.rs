//! Reconstruction metrics: Chamfer distance, normal consistency, F-score.
//!
//! Nearest neighbors come from a kd-tree whose results are bit-identical to
//! an O(n²) scan, including tie handling: among equally distant points the
//! one with the lowest index wins. That makes the spatial index directly
//! checkable against a brute-force oracle.

use crate::error::{Error, Result};
use crate::flow::LatentTokens;
use crate::geom::Vec3;

/// Chamfer scale factor: metrics are reported ×100, i.e. in centimeters for
/// unit-normalized objects.
const CD_SCALE: f64 = 100.0;
/// Default F-score distance threshold for unit-normalized objects.
pub const DEFAULT_TAU: f64 = 0.05;

#[inline]
fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

// ── Spatial index ─────────────────────────────────────────────────────────────

/// Exact nearest-neighbor kd-tree over 3D points.
///
/// Distance ties resolve to the lowest original point index, matching the
/// brute-force convention.
pub struct KdTree {
    pts: Vec<Vec3>,
    /// Permutation of point indices arranged as a median-split binary tree.
    order: Vec<u32>,
    /// Split axis for each node position in `order`.
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(pts: &[Vec3]) -> Self {
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut axis = vec![0u8; pts.len()];
        let mut tree = KdTree {
            pts: pts.to_vec(),
            order: Vec::new(),
            axis: Vec::new(),
        };
        if !pts.is_empty() {
            build_rec(&tree.pts, &mut order, &mut axis, 0);
        }
        tree.order = order;
        tree.axis = axis;
        tree
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Index of and squared distance to the nearest point.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        debug_assert!(!self.pts.is_empty());
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), &mut best);
        best
    }

    fn search(&self, q: Vec3, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let d2 = dist2(q, self.pts[idx]);
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let ax = self.axis[mid] as usize;
        let delta = q[ax] - self.pts[idx][ax];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // The far half may hold an equally distant, lower-index point, so
        // recurse on equality as well.
        if delta * delta <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build_rec(pts: &[Vec3], order: &mut [u32], axis: &mut [u8], base: usize) {
    if order.is_empty() {
        return;
    }
    // Split on the widest axis of the current range.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = pts[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut ax = 0;
    for k in 1..3 {
        if hi[k] - lo[k] > hi[ax] - lo[ax] {
            ax = k;
        }
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let (pa, pb) = (pts[a as usize][ax], pts[b as usize][ax]);
        pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
    });
    axis[base + mid] = ax as u8;
    let (left, rest) = order.split_at_mut(mid);
    build_rec(pts, left, axis, base);
    build_rec(pts, &mut rest[1..], axis, base + mid + 1);
}

// ── Metrics ───────────────────────────────────────────────────────────────────

fn require_points(which: &str, pts: &[Vec3]) -> Result<()> {
    if pts.is_empty() {
        return Err(Error::UndefinedMetric(format!("{which} point set is empty")));
    }
    Ok(())
}

/// Symmetric Chamfer distance ×100:
/// `100 · ½ (meanₐ min_b ‖a−b‖ + mean_b minₐ ‖a−b‖)`.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    require_points("first", a)?;
    require_points("second", b)?;
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let ab = a.iter().map(|p| tb.nearest(*p).1.sqrt()).sum::<f64>() / a.len() as f64;
    let ba = b.iter().map(|p| ta.nearest(*p).1.sqrt()).sum::<f64>() / b.len() as f64;
    Ok(CD_SCALE * 0.5 * (ab + ba))
}

fn require_unit_normals(normals: &[Vec3]) -> Result<()> {
    for n in normals {
        let len2 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
        if (len2 - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("non-unit normal {n:?}")));
        }
    }
    Ok(())
}

/// Normal consistency in [0, 100]: mean absolute cosine between each point's
/// normal and its nearest neighbor's normal, symmetrized.
pub fn normal_consistency(
    a: &[Vec3],
    na: &[Vec3],
    b: &[Vec3],
    nb: &[Vec3],
) -> Result<f64> {
    require_points("first", a)?;
    require_points("second", b)?;
    if a.len() != na.len() || b.len() != nb.len() {
        return Err(Error::Dimension(
            "points and normals must have equal length".into(),
        ));
    }
    require_unit_normals(na)?;
    require_unit_normals(nb)?;
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let ab = a
        .iter()
        .zip(na)
        .map(|(p, n)| {
            let (j, _) = tb.nearest(*p);
            crate::geom::dot(*n, nb[j]).abs()
        })
        .sum::<f64>()
        / a.len() as f64;
    let ba = b
        .iter()
        .zip(nb)
        .map(|(p, n)| {
            let (j, _) = ta.nearest(*p);
            crate::geom::dot(*n, na[j]).abs()
        })
        .sum::<f64>()
        / b.len() as f64;
    Ok(100.0 * 0.5 * (ab + ba))
}

/// F-score in [0, 100] at distance threshold `tau`.
pub fn fscore(a: &[Vec3], b: &[Vec3], tau: f64) -> Result<f64> {
    require_points("first", a)?;
    require_points("second", b)?;
    if tau <= 0.0 {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let tau2 = tau * tau;
    let precision =
        a.iter().filter(|p| tb.nearest(**p).1 <= tau2).count() as f64 / a.len() as f64;
    let recall = b.iter().filter(|p| ta.nearest(**p).1 <= tau2).count() as f64 / b.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

/// Per-object metrics bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub cd: f64,
    pub nc: f64,
    pub f1: f64,
    pub tau: f64,
    pub sample_count: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "cd,nc,f1,tau,sample_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{}",
            self.cd, self.nc, self.f1, self.tau, self.sample_count
        )
    }
}

/// Evaluate generated latent tokens against dense ground-truth samples.
///
/// Token layout is xyz + normal; generated normals are re-normalized since
/// the flow output is unconstrained (near-zero normals fall back to +y).
pub fn evaluate_reconstruction(
    gen: &LatentTokens,
    gt_points: &[Vec3],
    gt_normals: &[Vec3],
    tau: f64,
) -> Result<MetricsReport> {
    let (points, normals) = gen.split_points_normals()?;
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("generated token positions".into()));
    }
    let cd = chamfer(&points, gt_points)?;
    let nc = normal_consistency(&points, &normals, gt_points, gt_normals)?;
    let f1 = fscore(&points, gt_points, tau)?;
    Ok(MetricsReport {
        cd,
        nc,
        f1,
        tau,
        sample_count: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Brute-force nearest neighbor with the same tie rule.
    fn nn_brute(q: Vec3, pts: &[Vec3]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d2 = dist2(q, *p);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut r = crate::rng::rng(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn kdtree_matches_brute_force_with_ties() {
        for trial in 0..50 {
            let mut r = crate::rng::rng(1000 + trial);
            let n = r.random_range(1..200);
            // Snap to a coarse grid so exact distance ties actually occur.
            let pts: Vec<Vec3> = (0..n)
                .map(|_| {
                    std::array::from_fn(|_| (r.random_range(-4i32..=4i32) as f64) * 0.25)
                })
                .collect();
            let tree = KdTree::build(&pts);
            for _ in 0..50 {
                let q: Vec3 =
                    std::array::from_fn(|_| (r.random_range(-4i32..=4i32) as f64) * 0.25);
                let (bi, bd) = nn_brute(q, &pts);
                let (ti, td) = tree.nearest(q);
                assert_eq!((bi, bd), (ti, td), "trial {trial}");
            }
        }
    }

    #[test]
    fn chamfer_trivial_values() {
        let a = cloud(64, 3);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);

        let p = vec![[0.0, 0.0, 0.0]];
        let q = vec![[1.0, 0.0, 0.0]];
        assert!((chamfer(&p, &q).unwrap() - 100.0).abs() < 1e-12);

        let p2 = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let q2 = vec![[0.0, 0.0, 0.0]];
        assert!((chamfer(&p2, &q2).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_symmetric_exactly() {
        let a = cloud(80, 4);
        let b = cloud(90, 5);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
    }

    #[test]
    fn chamfer_rejects_empty() {
        let a = cloud(4, 6);
        assert!(chamfer(&a, &[]).is_err());
        assert!(chamfer(&[], &a).is_err());
    }

    #[test]
    fn chamfer_union_bound() {
        // chamfer(A, A∪B) ≤ chamfer(A, B)
        for seed in 0..10 {
            let a = cloud(40, 100 + seed);
            let b = cloud(30, 200 + seed);
            let mut ab = a.clone();
            ab.extend_from_slice(&b);
            assert!(chamfer(&a, &ab).unwrap() <= chamfer(&a, &b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn normal_consistency_extremes() {
        let a = cloud(32, 7);
        let ny = vec![[0.0, 1.0, 0.0]; 32];
        let nx = vec![[1.0, 0.0, 0.0]; 32];
        assert!((normal_consistency(&a, &ny, &a, &ny).unwrap() - 100.0).abs() < 1e-9);
        assert!(normal_consistency(&a, &ny, &a, &nx).unwrap().abs() < 1e-9);
        // Flipped orientation counts as consistent.
        let nyneg = vec![[0.0, -1.0, 0.0]; 32];
        assert!((normal_consistency(&a, &ny, &a, &nyneg).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn normal_consistency_rejects_bad_normals() {
        let a = cloud(8, 8);
        let bad = vec![[0.5, 0.0, 0.0]; 8];
        let good = vec![[1.0, 0.0, 0.0]; 8];
        assert!(normal_consistency(&a, &bad, &a, &good).is_err());
    }

    #[test]
    fn fscore_extremes() {
        let a = cloud(64, 9);
        assert!((fscore(&a, &a, 0.01).unwrap() - 100.0).abs() < 1e-9);
        let far: Vec<Vec3> = a.iter().map(|p| [p[0] + 100.0, p[1], p[2]]).collect();
        assert_eq!(fscore(&a, &far, 0.5).unwrap(), 0.0);
        assert!(fscore(&a, &a, 0.0).is_err());
    }

    #[test]
    fn metrics_match_brute_force_on_random_clouds() {
        for seed in 0..20 {
            let a = cloud(128, 300 + seed);
            let b = cloud(128, 400 + seed);
            let na: Vec<Vec3> = a
                .iter()
                .map(|p| crate::geom::normalize_or(*p, [0.0, 1.0, 0.0]))
                .collect();
            let nb: Vec<Vec3> = b
                .iter()
                .map(|p| crate::geom::normalize_or(*p, [0.0, 1.0, 0.0]))
                .collect();

            // Brute-force chamfer / NC / F1.
            let nn_dir = |from: &[Vec3], to: &[Vec3]| -> Vec<(usize, f64)> {
                from.iter().map(|p| nn_brute(*p, to)).collect()
            };
            let ab = nn_dir(&a, &b);
            let ba = nn_dir(&b, &a);
            let cd_bf = 100.0
                * 0.5
                * (ab.iter().map(|(_, d)| d.sqrt()).sum::<f64>() / a.len() as f64
                    + ba.iter().map(|(_, d)| d.sqrt()).sum::<f64>() / b.len() as f64);
            let nc_bf = 100.0
                * 0.5
                * (ab.iter()
                    .enumerate()
                    .map(|(i, (j, _))| crate::geom::dot(na[i], nb[*j]).abs())
                    .sum::<f64>()
                    / a.len() as f64
                    + ba.iter()
                        .enumerate()
                        .map(|(i, (j, _))| crate::geom::dot(nb[i], na[*j]).abs())
                        .sum::<f64>()
                        / b.len() as f64);
            let tau = 0.25;
            let p = ab.iter().filter(|(_, d)| *d <= tau * tau).count() as f64 / a.len() as f64;
            let r = ba.iter().filter(|(_, d)| *d <= tau * tau).count() as f64 / b.len() as f64;
            let f1_bf = if p + r == 0.0 {
                0.0
            } else {
                100.0 * 2.0 * p * r / (p + r)
            };

            assert!((chamfer(&a, &b).unwrap() - cd_bf).abs() < 1e-9);
            assert!((normal_consistency(&a, &na, &b, &nb).unwrap() - nc_bf).abs() < 1e-9);
            assert!((fscore(&a, &b, tau).unwrap() - f1_bf).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let a = cloud(60, 11);
        let b = cloud(70, 12);
        let mut b_perm = b.clone();
        b_perm.reverse();
        assert!((chamfer(&a, &b).unwrap() - chamfer(&a, &b_perm).unwrap()).abs() < 1e-12);
        assert!(
            (fscore(&a, &b, 0.3).unwrap() - fscore(&a, &b_perm, 0.3).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn evaluate_reconstruction_on_subsample() {
        // Tokens drawn from the ground truth itself: tiny CD, perfect F1 at a
        // tau above the sampling gap.
        let shape = crate::corpus::generate_shape(&crate::corpus::ShapeSpec {
            family: crate::corpus::Family::Chair,
            params: [0.5; 4],
            seed: 77,
        })
        .unwrap();
        let gt_p = shape.points.clone();
        let gt_n = shape.normals.clone();
        let n = 64;
        let tokens = LatentTokens::from_points_normals(&gt_p[..n], &gt_n[..n]);
        let report = evaluate_reconstruction(&tokens, &gt_p, &gt_n, 0.25).unwrap();
        assert!(report.cd < 10.0, "cd {}", report.cd);
        assert!((report.f1 - 100.0).abs() < 1e-9, "f1 {}", report.f1);
        assert!(report.nc > 50.0);
        assert_eq!(report.sample_count, n);

        // Far-away tokens score zero F1.
        let far: Vec<Vec3> = gt_p[..n].iter().map(|p| [p[0] + 50.0, p[1], p[2]]).collect();
        let tokens_far = LatentTokens::from_points_normals(&far, &gt_n[..n]);
        let report = evaluate_reconstruction(&tokens_far, &gt_p, &gt_n, 0.25).unwrap();
        assert_eq!(report.f1, 0.0);
    }
}
