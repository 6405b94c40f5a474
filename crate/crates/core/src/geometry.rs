//! PCA plane estimation from pooled neighborhood statistics.
//!
//! The covariance of a neighborhood is eigendecomposed; the eigenvector of the
//! smallest eigenvalue is the plane normal, sign-flipped so it points toward
//! the sensor. A neighborhood with fewer than `n_min` points is rejected.

use nalgebra::{Matrix3, Vector3};

use crate::error::Error;
use crate::grid::NeighborhoodStats;

/// Eigenvalues this far below zero are treated as rounding noise and clamped;
/// anything more negative means the matrix is not a covariance.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-9;

/// Oriented local plane with the spectrum of its source covariance.
#[derive(Debug, Clone, Copy)]
pub struct PlaneEstimate {
    /// Plane anchor: mean of the supporting points.
    pub center: Vector3<f64>,
    /// Unit normal, oriented so `normal . (sensor - center) >= 0`.
    pub normal: Vector3<f64>,
    /// Eigenvalues in descending order, clamped at zero (meters squared).
    pub eigvals: [f64; 3],
    /// Orthonormal eigenvectors matching `eigvals`; `eigvecs[2]` is parallel
    /// to the normal up to sign.
    pub eigvecs: [Vector3<f64>; 3],
    /// Neighborhood level the statistics came from.
    pub level: u32,
}

impl PlaneEstimate {
    /// Signed distance of `p` from the plane, positive on the sensor side.
    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(&(p - self.center))
    }

    /// Orthogonal projection of `p` onto the plane.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }
}

/// Eigendecomposition of a symmetric 3x3 matrix.
///
/// Returns eigenvalues in descending order with matching orthonormal
/// eigenvectors. Uses the closed-form trigonometric solution with cross
/// product eigenvectors on the hot path and falls back to cyclic Jacobi
/// sweeps when the spectrum is too degenerate for the analytic route.
pub fn eigen3_symmetric(m: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if scale == 0.0 {
        return ([0.0; 3], axes());
    }
    let a = sym / scale;
    let (vals, vecs) = analytic(&a).unwrap_or_else(|| jacobi(&a));
    ([vals[0] * scale, vals[1] * scale, vals[2] * scale], vecs)
}

fn axes() -> [Vector3<f64>; 3] {
    [Vector3::x(), Vector3::y(), Vector3::z()]
}

/// Closed-form eigensolver for a symmetric matrix normalized to unit scale.
/// Returns `None` when the result fails residual or orthogonality checks.
fn analytic(a: &Matrix3<f64>) -> Option<([f64; 3], [Vector3<f64>; 3])> {
    let q = a.trace() / 3.0;
    let b = a - Matrix3::identity() * q;
    let p2 = b.iter().map(|v| v * v).sum::<f64>() / 6.0;
    if p2 < 1e-28 {
        // numerically a multiple of the identity
        return Some(([q, q, q], axes()));
    }
    let p = p2.sqrt();
    let half_det = ((b / p).determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = half_det.acos() / 3.0;

    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    let mut vals = [hi, mid, lo];
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());

    let v_hi = cross_product_eigenvector(a, vals[0])?;
    let v_lo = cross_product_eigenvector(a, vals[2])?;
    let v_mid = v_lo.cross(&v_hi);
    let mid_norm = v_mid.norm();
    if mid_norm < 1e-8 {
        return None;
    }
    let vecs = [v_hi, v_mid / mid_norm, v_lo];

    // validate: residuals and pairwise orthogonality, else fall back
    for (val, vec) in vals.iter().zip(vecs.iter()) {
        if (a * vec - vec * *val).norm() > 1e-10 {
            return None;
        }
    }
    if vecs[0].dot(&vecs[2]).abs() > 1e-10 {
        return None;
    }
    Some((vals, vecs))
}

/// Eigenvector of `a` for eigenvalue `val` from the largest cross product of
/// rows of `a - val I`; `None` if all cross products vanish (repeated root).
fn cross_product_eigenvector(a: &Matrix3<f64>, val: f64) -> Option<Vector3<f64>> {
    let m = a - Matrix3::identity() * val;
    let r0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let r2 = Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().partial_cmp(&b.norm_squared()).unwrap())
        .unwrap();
    let norm = best.norm();
    if norm < 1e-10 {
        None
    } else {
        Some(best / norm)
    }
}

/// Cyclic Jacobi sweeps; robust for repeated eigenvalues.
fn jacobi(a: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let mut d = *a;
    let mut v = Matrix3::identity();
    for _ in 0..64 {
        // largest off-diagonal element
        let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
        let (p, q) = *pairs
            .iter()
            .max_by(|x, y| {
                d[(x.0, x.1)]
                    .abs()
                    .partial_cmp(&d[(y.0, y.1)].abs())
                    .unwrap()
            })
            .unwrap();
        let apq = d[(p, q)];
        if apq.abs() <= 1e-15 {
            break;
        }
        let theta = 0.5 * (d[(q, q)] - d[(p, p)]) / apq;
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let mut rot = Matrix3::identity();
        rot[(p, p)] = c;
        rot[(q, q)] = c;
        rot[(p, q)] = s;
        rot[(q, p)] = -s;
        d = rot.transpose() * d * rot;
        v *= rot;
    }
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| (d[(i, i)], Vector3::from(v.column(i).into_owned())))
        .collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    (
        [pairs[0].0, pairs[1].0, pairs[2].0],
        [pairs[0].1, pairs[1].1, pairs[2].1],
    )
}

/// Fits an oriented plane to pooled neighborhood statistics.
///
/// Returns `Ok(None)` when the neighborhood has fewer than `n_min` points
/// (rejection, not an error). Eigenvalues slightly below zero are clamped;
/// values below `-EIGENVALUE_TOLERANCE` report a corrupt covariance.
pub fn fit_plane(
    stats: &NeighborhoodStats,
    sensor_pose: &Vector3<f64>,
    n_min: u32,
) -> Result<Option<PlaneEstimate>, Error> {
    if stats.count < n_min as u64 {
        return Ok(None);
    }
    let (raw_vals, eigvecs) = eigen3_symmetric(&stats.cov);
    let mut eigvals = [0.0; 3];
    for (out, &val) in eigvals.iter_mut().zip(raw_vals.iter()) {
        if val < -EIGENVALUE_TOLERANCE {
            return Err(Error::InvalidCovariance(val));
        }
        *out = val.max(0.0);
    }
    let least_dominant = eigvecs[2];
    // orientation toward the sensor; an exact tie keeps +e3
    let normal = if least_dominant.dot(&(sensor_pose - stats.mean)) >= 0.0 {
        least_dominant
    } else {
        -least_dominant
    };
    Ok(Some(PlaneEstimate {
        center: stats.mean,
        normal,
        eigvals,
        eigvecs,
        level: stats.level,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StatGrid;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn neighborhood_of(points: &[Vector3<f64>], level: u32) -> NeighborhoodStats {
        let stats = crate::grid::VoxelStats::from_points(points.iter());
        NeighborhoodStats {
            level,
            count: stats.count(),
            mean: stats.mean(),
            cov: stats.cov(),
        }
    }

    fn grid_plane_points(n_side: usize, extent: f64, z: f64) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                let x = -extent + 2.0 * extent * i as f64 / (n_side - 1) as f64;
                let y = -extent + 2.0 * extent * j as f64 / (n_side - 1) as f64;
                pts.push(Vector3::new(x, y, z));
            }
        }
        pts
    }

    #[test]
    fn plane_fit_recovers_horizontal_plane() {
        let pts = grid_plane_points(10, 1.0, 0.0);
        let stats = neighborhood_of(&pts, 1);
        let plane = fit_plane(&stats, &Vector3::new(0.0, 0.0, 10.0), 10)
            .unwrap()
            .expect("enough points");
        assert!((plane.normal - Vector3::z()).norm() < 1e-9);
        assert!(plane.eigvals[2].abs() < 1e-12);
    }

    #[test]
    fn plane_fit_flips_normal_toward_sensor() {
        let pts = grid_plane_points(10, 1.0, 0.0);
        let stats = neighborhood_of(&pts, 1);
        let plane = fit_plane(&stats, &Vector3::new(0.0, 0.0, -10.0), 10)
            .unwrap()
            .unwrap();
        assert!((plane.normal - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn plane_fit_rejects_sparse_neighborhood() {
        let pts = grid_plane_points(4, 1.0, 0.0);
        let stats = neighborhood_of(&pts, 1);
        assert!(fit_plane(&stats, &Vector3::z(), 10).unwrap().is_some());
        let few = neighborhood_of(&pts[..9], 1);
        assert!(fit_plane(&few, &Vector3::z(), 10).unwrap().is_none());
    }

    #[test]
    fn noisy_plane_normal_within_two_degrees() {
        // 200 noisy samples of x + y + z = 1, sigma = 0.01. Oracle: ordinary
        // least squares regression z = ax + by + c on the same samples, an
        // independent route to the normal.
        let mut rng = StdRng::seed_from_u64(101);
        let mut pts = Vec::with_capacity(200);
        for _ in 0..200 {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            let z = 1.0 - x - y + rng.random_range(-0.01..0.01) * 1.7320508;
            pts.push(Vector3::new(x, y, z));
        }
        let stats = neighborhood_of(&pts, 1);
        let sensor = Vector3::new(1.0, 1.0, 10.0);
        let plane = fit_plane(&stats, &sensor, 10).unwrap().unwrap();

        let expected = Vector3::new(1.0, 1.0, 1.0) / 3.0f64.sqrt();
        let angle = plane.normal.dot(&expected).clamp(-1.0, 1.0).acos();
        assert!(
            angle.to_degrees() < 2.0,
            "normal off by {} degrees",
            angle.to_degrees()
        );

        // least-squares oracle
        let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut sxz, mut syz, mut sz) = (0.0, 0.0, 0.0);
        for p in &pts {
            sxx += p.x * p.x;
            sxy += p.x * p.y;
            syy += p.y * p.y;
            sx += p.x;
            sy += p.y;
            sxz += p.x * p.z;
            syz += p.y * p.z;
            sz += p.z;
        }
        let n = pts.len() as f64;
        let a = nalgebra::Matrix3::new(sxx, sxy, sx, sxy, syy, sy, sx, sy, n);
        let rhs = Vector3::new(sxz, syz, sz);
        let coeff = a.lu().solve(&rhs).unwrap();
        let ols_normal = Vector3::new(-coeff.x, -coeff.y, 1.0).normalize();
        let agreement = plane.normal.dot(&ols_normal).abs().clamp(-1.0, 1.0).acos();
        assert!(agreement.to_degrees() < 1.0, "PCA and OLS disagree");
    }

    #[test]
    fn eigen_identity_matrix() {
        let (vals, vecs) = eigen3_symmetric(&Matrix3::identity());
        assert_eq!(vals, [1.0, 1.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                let dot = vecs[i].dot(&vecs[j]);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let (vals, vecs) = eigen3_symmetric(&Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 1.0)));
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
        assert!(vecs[0].x.abs() > 1.0 - 1e-9);
        assert!(vecs[1].y.abs() > 1.0 - 1e-9);
        assert!(vecs[2].z.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn eigen_zero_matrix() {
        let (vals, vecs) = eigen3_symmetric(&Matrix3::zeros());
        assert_eq!(vals, [0.0, 0.0, 0.0]);
        assert!((vecs[0].dot(&vecs[1])).abs() < 1e-12);
    }

    #[test]
    fn eigen_repeated_eigenvalues() {
        // rank-1 plus identity: eigenvalues (2, 1, 1)
        let u = Vector3::new(1.0, 1.0, 1.0) / 3.0f64.sqrt();
        let m = Matrix3::identity() + u * u.transpose();
        let (vals, vecs) = check_reconstruction(&m);
        assert!((vals[0] - 2.0).abs() < 1e-9);
        assert!((vals[1] - 1.0).abs() < 1e-9);
        assert!((vals[2] - 1.0).abs() < 1e-9);
        assert!((vecs[0].dot(&u).abs() - 1.0).abs() < 1e-7);
    }

    fn check_reconstruction(m: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
        let (vals, vecs) = eigen3_symmetric(m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2], "not sorted");
        let mut recon = Matrix3::zeros();
        for i in 0..3 {
            recon += vecs[i] * vecs[i].transpose() * vals[i];
        }
        let scale = m.norm().max(1.0);
        assert!(
            (recon - m).norm() <= 1e-6 * scale,
            "reconstruction residual {} for {m}",
            (recon - m).norm()
        );
        for i in 0..3 {
            assert!((vecs[i].norm() - 1.0).abs() < 1e-7);
            for j in (i + 1)..3 {
                assert!(vecs[i].dot(&vecs[j]).abs() < 1e-7, "not orthogonal");
            }
        }
        (vals, vecs)
    }

    fn random_psd(rng: &mut StdRng, scale: f64) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-scale..scale));
        a * a.transpose()
    }

    #[test]
    fn eigen_random_psd_reconstruction() {
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..200 {
            let m = random_psd(&mut rng, 2.0);
            check_reconstruction(&m);
        }
    }

    #[test]
    fn eigen_jacobi_agrees_with_analytic() {
        let mut rng = StdRng::seed_from_u64(47);
        for _ in 0..100 {
            let m = random_psd(&mut rng, 1.5);
            let scale = m.norm().max(1.0);
            let (vals_a, _) = eigen3_symmetric(&m);
            let (vals_j, vecs_j) = jacobi(&(m / scale));
            for i in 0..3 {
                assert!((vals_a[i] - vals_j[i] * scale).abs() < 1e-8 * scale);
                let v = vecs_j[i];
                assert!(((m / scale) * v - v * vals_j[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = StdRng::seed_from_u64(53);
        for _ in 0..25 {
            let pts: Vec<Vector3<f64>> = (0..100)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-0.05..0.05),
                    )
                })
                .collect();
            let rot = Rotation3::from_euler_angles(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let sensor = Vector3::new(0.3, -0.2, 5.0);

            let base = fit_plane(&neighborhood_of(&pts, 1), &sensor, 10)
                .unwrap()
                .unwrap();
            let rotated_pts: Vec<_> = pts.iter().map(|p| rot * p).collect();
            let rotated = fit_plane(&neighborhood_of(&rotated_pts, 1), &(rot * sensor), 10)
                .unwrap()
                .unwrap();
            assert!(
                (rot * base.normal - rotated.normal).norm() < 1e-6,
                "rotation equivariance violated"
            );
        }
    }

    #[test]
    fn scale_invariance_of_direction() {
        let pts = grid_plane_points(8, 1.0, 0.0);
        let mut tilted: Vec<Vector3<f64>> = pts
            .iter()
            .map(|p| Vector3::new(p.x, p.y, 0.3 * p.x + 0.1 * p.y))
            .collect();
        tilted.push(Vector3::new(0.33, -0.41, 0.2));
        let sensor = Vector3::new(0.0, 0.0, 8.0);
        let base = fit_plane(&neighborhood_of(&tilted, 1), &sensor, 10)
            .unwrap()
            .unwrap();
        for scale in [0.1, 2.0, 25.0] {
            let scaled: Vec<_> = tilted
                .iter()
                .map(|p| base.center + (p - base.center) * scale)
                .collect();
            let fitted = fit_plane(&neighborhood_of(&scaled, 1), &sensor, 10)
                .unwrap()
                .unwrap();
            assert!(
                (fitted.normal - base.normal).norm() < 1e-7,
                "direction changed under scaling by {scale}"
            );
        }
    }

    #[test]
    fn degenerate_collinear_points_still_fit() {
        // collinear data: lambda2 ~ lambda3 ~ 0; the estimate must come back
        // (downstream confidence gating suppresses it)
        let pts: Vec<_> = (0..20)
            .map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        let plane = fit_plane(&neighborhood_of(&pts, 2), &Vector3::new(0.0, 0.0, 5.0), 10)
            .unwrap()
            .unwrap();
        assert!(plane.eigvals[1] < 1e-12);
        assert!((plane.normal.norm() - 1.0).abs() < 1e-9);
        assert!(plane.normal.dot(&Vector3::x()).abs() < 1e-6);
    }

    #[test]
    fn corrupt_covariance_reports_error() {
        let stats = NeighborhoodStats {
            level: 1,
            count: 50,
            mean: Vector3::zeros(),
            cov: Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, -0.1)),
        };
        let err = fit_plane(&stats, &Vector3::z(), 10);
        assert!(matches!(err, Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn orientation_invariant_on_grid_neighborhoods() {
        // the sensor-orientation rule must hold on every estimate produced
        // from real grid data
        let mut rng = StdRng::seed_from_u64(59);
        let sensor = Vector3::new(0.0, 0.0, 1.5);
        let mut grid = StatGrid::new(0.5, sensor).unwrap();
        for _ in 0..2000 {
            let p = Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-0.2..0.2),
            );
            grid.insert_point(&p).unwrap();
        }
        let mut checked = 0;
        for vertex in grid.candidate_vertices(2) {
            let stats = grid.neighborhood_stats(&vertex, 2);
            if let Some(plane) = fit_plane(&stats, &sensor, 10).unwrap() {
                assert!(plane.normal.dot(&(sensor - plane.center)) >= 0.0);
                checked += 1;
            }
        }
        assert!(checked > 100, "fixture too sparse: {checked}");
    }

    proptest! {
        #[test]
        fn eigen_reconstruction_property(seed in 0u64..5000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let m = random_psd(&mut rng, 3.0);
            check_reconstruction(&m);
        }
    }
}
