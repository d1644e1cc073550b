//! Fisheye camera geometry.
//!
//! The projection maps a 3D point (X, Y, Z), Z > 0, through normalized
//! coordinates x = X/Z, y = Y/Z, radius r = sqrt(x^2 + y^2) and incidence
//! angle theta = arctan(r) to the image radius
//! phi(theta) = theta (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8),
//! then u = fx * (x/r) phi + cx, v = fy * (y/r) phi + cy.
//!
//! The numeric inverse of phi is only needed offline (ray generation for the
//! renderer and round-trip tests); the training path never inverts it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::raster::{DepthGrid, SampleGrid};

/// Default bound on the incidence angle when a config does not provide one.
pub const THETA_MAX_DEFAULT: f64 = 1.65;

/// Below this normalized radius the projection uses the analytic limit
/// (x/r) phi(arctan r) -> x, avoiding the 0/0 at the optical axis.
const RADIAL_EPS: f64 = 1e-8;

const MONOTONICITY_SAMPLES: usize = 1024;

/// Polynomial fisheye intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub width: usize,
    pub height: usize,
    /// Maximum valid incidence angle in radians.
    pub theta_max: f64,
}

impl FisheyeIntrinsics {
    /// Validates focal lengths, the theta_max range, and strict monotonicity
    /// of the distortion polynomial over 1024 samples of [0, theta_max].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k: [f64; 4],
        width: usize,
        height: usize,
        theta_max: f64,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 || !fx.is_finite() || !fy.is_finite() || fx.is_nan() || fy.is_nan() {
            return Err(Error::InvalidParam(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if theta_max <= 0.0 || theta_max.is_nan() || theta_max > std::f64::consts::FRAC_PI_2 + 0.35 {
            return Err(Error::InvalidParam(format!(
                "theta_max must lie in (0, pi/2 + 0.35], got {theta_max}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("image extent must be nonzero".into()));
        }
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            width,
            height,
            theta_max,
        };
        let mut prev = intr.phi(0.0);
        for i in 1..=MONOTONICITY_SAMPLES {
            let theta = theta_max * i as f64 / MONOTONICITY_SAMPLES as f64;
            let cur = intr.phi(theta);
            if cur <= prev || cur.is_nan() {
                return Err(Error::InvalidParam(format!(
                    "distortion polynomial is not strictly increasing near theta = {theta:.6}"
                )));
            }
            prev = cur;
        }
        Ok(intr)
    }

    #[inline]
    fn phi(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        theta * (1.0 + t2 * (self.k1 + t2 * (self.k2 + t2 * (self.k3 + t2 * self.k4))))
    }

    #[inline]
    fn phi_deriv(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        1.0 + t2 * (3.0 * self.k1 + t2 * (5.0 * self.k2 + t2 * (7.0 * self.k3 + t2 * 9.0 * self.k4)))
    }

    /// Image radius phi(theta) of an incidence angle.
    pub fn distortion_radius(&self, theta: f64) -> Result<f64> {
        if !(0.0..=self.theta_max).contains(&theta) {
            return Err(Error::Domain(format!(
                "theta {theta} outside [0, {}]",
                self.theta_max
            )));
        }
        Ok(self.phi(theta))
    }

    /// Largest image radius representable by this model, phi(theta_max).
    pub fn max_radius(&self) -> f64 {
        self.phi(self.theta_max)
    }

    /// Radial scale g(r) = phi(arctan r) / r applied to normalized
    /// coordinates; g(0) = 1 by the analytic limit.
    #[inline]
    pub(crate) fn radial_scale(&self, r: f64) -> f64 {
        if r < RADIAL_EPS {
            1.0
        } else {
            self.phi(r.atan()) / r
        }
    }

    /// d g / d r, with the r -> 0 limit 0 (g is even in r).
    #[inline]
    pub(crate) fn radial_scale_deriv(&self, r: f64) -> f64 {
        if r < RADIAL_EPS {
            0.0
        } else {
            let theta = r.atan();
            (self.phi_deriv(theta) * r / (1.0 + r * r) - self.phi(theta)) / (r * r)
        }
    }

    /// Project one camera-frame point. Invalid points (behind the camera or
    /// beyond theta_max) are flagged, never rejected.
    pub fn project_point(&self, p: &Vector3<f64>) -> PixelProjection {
        if p.z <= 0.0 || p.z.is_nan() || !p.x.is_finite() || !p.y.is_finite() {
            return PixelProjection { u: 0.0, v: 0.0, valid: false };
        }
        let x = p.x / p.z;
        let y = p.y / p.z;
        let r = x.hypot(y);
        if r.atan() > self.theta_max {
            return PixelProjection { u: 0.0, v: 0.0, valid: false };
        }
        let g = self.radial_scale(r);
        PixelProjection {
            u: self.fx * x * g + self.cx,
            v: self.fy * y * g + self.cy,
            valid: true,
        }
    }

    /// Project a set of points.
    pub fn project(&self, points: &[Vector3<f64>]) -> Vec<PixelProjection> {
        points.iter().map(|p| self.project_point(p)).collect()
    }

    /// Projection plus its 2x3 Jacobian with respect to the camera-frame
    /// point. The Jacobian is only meaningful when the projection is valid.
    pub(crate) fn project_with_jacobian(&self, p: &Vector3<f64>) -> (PixelProjection, [[f64; 3]; 2]) {
        let proj = self.project_point(p);
        if !proj.valid {
            return (proj, [[0.0; 3]; 2]);
        }
        let z_inv = 1.0 / p.z;
        let x = p.x * z_inv;
        let y = p.y * z_inv;
        let r = x.hypot(y);
        let g = self.radial_scale(r);
        // Jacobian of (x g, y g) with respect to (x, y).
        let (a11, a12, a21, a22) = if r < RADIAL_EPS {
            (g, 0.0, 0.0, g)
        } else {
            let gp_over_r = self.radial_scale_deriv(r) / r;
            (
                g + gp_over_r * x * x,
                gp_over_r * x * y,
                gp_over_r * x * y,
                g + gp_over_r * y * y,
            )
        };
        // Chain through x = X/Z, y = Y/Z.
        let du_dx = self.fx * a11;
        let du_dy = self.fx * a12;
        let dv_dx = self.fy * a21;
        let dv_dy = self.fy * a22;
        let jac = [
            [
                du_dx * z_inv,
                du_dy * z_inv,
                -(du_dx * x + du_dy * y) * z_inv,
            ],
            [
                dv_dx * z_inv,
                dv_dy * z_inv,
                -(dv_dx * x + dv_dy * y) * z_inv,
            ],
        ];
        (proj, jac)
    }

    /// Numeric inverse of `distortion_radius`: bisection on [0, theta_max]
    /// followed by a Newton polish, to |phi(theta) - radius| < 1e-10.
    pub fn invert_distortion(&self, radius_d: f64) -> Result<f64> {
        let max_r = self.max_radius();
        if !radius_d.is_finite() || radius_d < 0.0 || radius_d > max_r * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Domain(format!(
                "radius {radius_d} outside invertible range [0, {max_r}]"
            )));
        }
        if radius_d == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0f64, self.theta_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.phi(mid) < radius_d {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let mut theta = 0.5 * (lo + hi);
        for _ in 0..3 {
            let d = self.phi_deriv(theta);
            if d.abs() < 1e-14 {
                break;
            }
            theta = (theta - (self.phi(theta) - radius_d) / d).clamp(lo, hi);
        }
        Ok(theta.clamp(0.0, self.theta_max))
    }

    /// Unit ray direction through a pixel. Requires the pixel radius to lie
    /// inside the invertible range.
    pub fn unproject_ray(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        let rd = xd.hypot(yd);
        if rd < RADIAL_EPS {
            return Ok(Vector3::new(0.0, 0.0, 1.0));
        }
        let theta = self.invert_distortion(rd)?;
        let s = theta.sin() / rd;
        Ok(Vector3::new(s * xd, s * yd, theta.cos()))
    }
}

/// Result of projecting one point: continuous pixel coordinates plus a
/// validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

/// Pinhole intrinsics of the rectified intermediate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl RectifiedIntrinsics {
    /// Normalized pinhole ray through a rectified pixel, Z component 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Derive the rectified grid from fisheye intrinsics: focal lengths scaled
/// by `scale`, principal point fixed at the grid center (w-1)/2, (h-1)/2.
pub fn rectified_intrinsics(intr: &FisheyeIntrinsics, scale: f64) -> Result<RectifiedIntrinsics> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidParam(format!("focal scale must be positive, got {scale}")));
    }
    Ok(RectifiedIntrinsics {
        fx: scale * intr.fx,
        fy: scale * intr.fy,
        cx: (intr.width as f64 - 1.0) / 2.0,
        cy: (intr.height as f64 - 1.0) / 2.0,
        width: intr.width,
        height: intr.height,
    })
}

/// Rigid transform (rotation + translation), rotation kept orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    /// Checks R^T R = I and det R = +1 to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        if err > 1e-9 {
            return Err(Error::InvalidParam(format!("rotation is not orthonormal (error {err:.3e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("rotation determinant {det} is not +1")));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("translation must be finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation about `axis_angle` (Rodrigues) followed by `translation`.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::from_scaled_axis(axis_angle).into_inner();
        Self { rotation, translation }
    }

    /// Exponential of a 6-vector tangent increment (omega, delta_t):
    /// rotation by Rodrigues, translation applied additively after rotating
    /// the current pose, i.e. exp(xi) = (exp(omega^), delta_t).
    pub fn exp(tangent: &[f64; 6]) -> Self {
        Self::from_axis_angle(
            Vector3::new(tangent[0], tangent[1], tangent[2]),
            Vector3::new(tangent[3], tangent[4], tangent[5]),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Composition: (self o other)(p) = self(other(p)).
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose { rotation: rt, translation: -(rt * self.translation) }
    }
}

/// Apply a pose to every point.
pub fn transform_points(points: &[Vector3<f64>], pose: &RigidPose) -> Vec<Vector3<f64>> {
    points.iter().map(|p| pose.transform(p)).collect()
}

/// Per rectified pixel, the fisheye image location of its pinhole ray.
/// Entries are invalid where the ray leaves the model's angular range or the
/// projection falls outside the fisheye image extent.
pub fn fisheye_lookup_grid(intr: &FisheyeIntrinsics, rect: &RectifiedIntrinsics) -> SampleGrid {
    let mut grid = SampleGrid::new(rect.width, rect.height);
    let w_max = intr.width as f64 - 1.0;
    let h_max = intr.height as f64 - 1.0;
    for y in 0..rect.height {
        for x in 0..rect.width {
            let ray = rect.ray(x as f64, y as f64);
            let p = intr.project_point(&ray);
            let in_bounds = p.valid && p.u >= 0.0 && p.u <= w_max && p.v >= 0.0 && p.v <= h_max;
            grid.set(x, y, p.u, p.v, in_bounds);
        }
    }
    grid
}

/// Unproject a rectified-grid depth map into camera-frame points using the
/// Z-depth convention: the point at (x, y) is D(x, y) * ray(x, y), so its Z
/// component equals the stored depth. Invalid pixels yield the zero vector.
pub fn unproject_rectified(depth: &DepthGrid, rect: &RectifiedIntrinsics) -> Result<Vec<Vector3<f64>>> {
    if depth.width() != rect.width || depth.height() != rect.height {
        return Err(Error::Contract("depth extent does not match rectified grid".into()));
    }
    let mut points = Vec::with_capacity(rect.width * rect.height);
    for y in 0..rect.height {
        for x in 0..rect.width {
            if depth.valid(x, y) {
                let d = depth.value(x, y);
                if d <= 0.0 || d.is_nan() {
                    return Err(Error::Contract(format!(
                        "nonpositive depth {d} at valid pixel ({x}, {y})"
                    )));
                }
                points.push(rect.ray(x as f64, y as f64) * d);
            } else {
                points.push(Vector3::zeros());
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain_intrinsics() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new(1.0, 1.0, 0.0, 0.0, [0.0; 4], 640, 400, 1.5).unwrap()
    }

    fn distorted_intrinsics() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new(
            300.0,
            300.0,
            320.0,
            200.0,
            [-0.05, 0.004, 0.0, 0.0],
            640,
            400,
            THETA_MAX_DEFAULT,
        )
        .unwrap()
    }

    #[test]
    fn distortion_radius_examples() {
        let intr = distorted_intrinsics();
        assert_eq!(intr.distortion_radius(0.0).unwrap(), 0.0);

        let identity = plain_intrinsics();
        assert_eq!(identity.distortion_radius(0.5).unwrap(), 0.5);

        let k1 = FisheyeIntrinsics::new(1.0, 1.0, 0.0, 0.0, [0.1, 0.0, 0.0, 0.0], 64, 64, 1.5).unwrap();
        let expect = 0.5 * (1.0 + 0.1 * 0.25);
        assert!((k1.distortion_radius(0.5).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.5125).abs() < 1e-12);

        assert!(intr.distortion_radius(-0.1).is_err());
        assert!(intr.distortion_radius(intr.theta_max + 0.01).is_err());
    }

    #[test]
    fn construction_rejects_non_monotone_polynomial() {
        // Strong negative k1 makes phi turn over inside [0, theta_max].
        let r = FisheyeIntrinsics::new(1.0, 1.0, 0.0, 0.0, [-0.5, 0.0, 0.0, 0.0], 64, 64, 1.5);
        assert!(r.is_err());
        assert!(FisheyeIntrinsics::new(-1.0, 1.0, 0.0, 0.0, [0.0; 4], 64, 64, 1.5).is_err());
        assert!(FisheyeIntrinsics::new(1.0, 1.0, 0.0, 0.0, [0.0; 4], 64, 64, 2.5).is_err());
    }

    #[test]
    fn project_on_axis_hits_principal_point() {
        let intr = distorted_intrinsics();
        let p = intr.project_point(&Vector3::new(0.0, 0.0, 2.0));
        assert!(p.valid);
        assert_eq!((p.u, p.v), (320.0, 200.0));
    }

    #[test]
    fn project_forty_five_degrees_no_distortion() {
        let intr = plain_intrinsics();
        let p = intr.project_point(&Vector3::new(1.0, 0.0, 1.0));
        assert!(p.valid);
        assert!((p.u - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(p.v.abs() < 1e-12);
    }

    #[test]
    fn project_behind_camera_is_invalid() {
        let intr = distorted_intrinsics();
        assert!(!intr.project_point(&Vector3::new(0.0, 0.0, -1.0)).valid);
        assert!(!intr.project_point(&Vector3::new(0.0, 0.0, 0.0)).valid);
        assert!(!intr.project_point(&Vector3::new(f64::NAN, 0.0, 1.0)).valid);
    }

    #[test]
    fn invert_distortion_examples() {
        let identity = plain_intrinsics();
        assert_eq!(identity.invert_distortion(0.0).unwrap(), 0.0);
        assert!((identity.invert_distortion(0.5).unwrap() - 0.5).abs() < 1e-10);

        let k1 = FisheyeIntrinsics::new(1.0, 1.0, 0.0, 0.0, [0.1, 0.0, 0.0, 0.0], 64, 64, 1.5).unwrap();
        assert!((k1.invert_distortion(0.5125).unwrap() - 0.5).abs() < 1e-9);

        assert!(identity.invert_distortion(identity.max_radius() + 0.1).is_err());
        assert!(identity.invert_distortion(-0.01).is_err());
    }

    #[test]
    fn invert_distortion_matches_forward_everywhere() {
        let intr = distorted_intrinsics();
        for i in 0..200 {
            let theta = intr.theta_max * i as f64 / 199.0;
            let r = intr.phi(theta);
            let back = intr.invert_distortion(r).unwrap();
            assert!((intr.phi(back) - r).abs() < 1e-10, "theta {theta}");
        }
    }

    #[test]
    fn unproject_examples() {
        let intr = distorted_intrinsics();
        let d = intr.unproject_ray(intr.cx, intr.cy).unwrap();
        assert_eq!(d, Vector3::new(0.0, 0.0, 1.0));

        let plain = plain_intrinsics();
        let d = plain.unproject_ray(std::f64::consts::FRAC_PI_4, 0.0).unwrap();
        let s = 0.5f64.sqrt();
        assert!((d.x - s).abs() < 1e-12 && d.y.abs() < 1e-12 && (d.z - s).abs() < 1e-12);
    }

    #[test]
    fn unproject_project_round_trip_on_random_pixels() {
        let intr = distorted_intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let max_r = intr.max_radius();
        let mut checked = 0;
        while checked < 1000 {
            let u = rng.random_range(0.0..intr.width as f64 - 1.0);
            let v = rng.random_range(0.0..intr.height as f64 - 1.0);
            let xd = (u - intr.cx) / intr.fx;
            let yd = (v - intr.cy) / intr.fy;
            if xd.hypot(yd) > 0.99 * max_r {
                continue;
            }
            let dir = intr.unproject_ray(u, v).unwrap();
            assert!((dir.norm() - 1.0).abs() < 1e-12);
            let z = rng.random_range(0.2..50.0);
            let p = intr.project_point(&(dir * (z / dir.z)));
            assert!(p.valid);
            assert!((p.u - u).abs() < 1e-6 && (p.v - v).abs() < 1e-6, "pixel ({u}, {v})");
            checked += 1;
        }
    }

    #[test]
    fn pinhole_small_angle_limit() {
        let intr = plain_intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = rng.random_range(0.0..1e-3);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let (x, y) = (r * phase.cos(), r * phase.sin());
            let p = intr.project_point(&Vector3::new(x, y, 1.0));
            assert!(p.valid);
            assert!((p.u - x).abs() <= 5e-7 && (p.v - y).abs() <= 5e-7);
        }
    }

    #[test]
    fn validity_is_monotone_in_theta() {
        // theta_max below pi/2 so forward projections can actually exceed it.
        let intr =
            FisheyeIntrinsics::new(300.0, 300.0, 320.0, 200.0, [-0.05, 0.004, 0.0, 0.0], 640, 400, 1.2)
                .unwrap();
        // First invalid angle along a fixed azimuth; everything beyond stays invalid.
        let mut first_invalid = None;
        for i in 0..500 {
            let theta = 0.003 * i as f64;
            if theta >= std::f64::consts::FRAC_PI_2 {
                break;
            }
            let r = theta.tan();
            let p = intr.project_point(&Vector3::new(r, 0.0, 1.0));
            if !p.valid && first_invalid.is_none() {
                first_invalid = Some(theta);
            }
            if let Some(t0) = first_invalid {
                if theta > t0 {
                    assert!(!p.valid, "validity regressed at theta {theta}");
                }
            }
        }
        assert!(first_invalid.is_some(), "theta_max never exceeded in sweep");
    }

    #[test]
    fn rectified_intrinsics_examples() {
        let intr = distorted_intrinsics();
        let rect = rectified_intrinsics(&intr, 0.8).unwrap();
        assert!((rect.fx - 240.0).abs() < 1e-12);
        assert!((rect.cx - 319.5).abs() < 1e-12);
        assert!((rect.cy - 199.5).abs() < 1e-12);

        let rect1 = rectified_intrinsics(&intr, 1.0).unwrap();
        assert_eq!(rect1.fx, intr.fx);
        assert!(rectified_intrinsics(&intr, 0.0).is_err());
    }

    #[test]
    fn lookup_grid_center_and_fov_edge() {
        // theta_max tight enough that the rectified corner rays fall outside it.
        let intr = FisheyeIntrinsics::new(
            30.0,
            30.0,
            47.5,
            29.5,
            [-0.05, 0.004, 0.0, 0.0],
            96,
            60,
            1.1,
        )
        .unwrap();
        let rect = rectified_intrinsics(&intr, 0.8).unwrap();
        let grid = fisheye_lookup_grid(&intr, &rect);
        // Rectified center ray is on-axis, so it lands on the principal point.
        let (u, v, ok) = grid.get(47, 29);
        assert!(ok);
        let ray = rect.ray(47.0, 29.0);
        let expect = intr.project_point(&ray);
        assert_eq!((u, v), (expect.u, expect.v));
        // Corners exceed theta_max for this model: invalid.
        let (_, _, corner_ok) = grid.get(0, 0);
        assert!(!corner_ok);
    }

    #[test]
    fn lookup_grid_matches_hand_projection_without_distortion() {
        // k = 0, unit focal: u = cx' + fx * (x/r) * atan(r) for the corner ray.
        let intr = FisheyeIntrinsics::new(10.0, 10.0, 1.5, 1.5, [0.0; 4], 4, 4, 1.5).unwrap();
        let rect = rectified_intrinsics(&intr, 1.0).unwrap();
        let grid = fisheye_lookup_grid(&intr, &rect);
        for y in 0..4 {
            for x in 0..4 {
                let xr = (x as f64 - 1.5) / 10.0;
                let yr = (y as f64 - 1.5) / 10.0;
                let r = xr.hypot(yr);
                let (eu, ev) = if r == 0.0 {
                    (1.5, 1.5)
                } else {
                    let s = r.atan() / r;
                    (10.0 * xr * s + 1.5, 10.0 * yr * s + 1.5)
                };
                let (u, v, ok) = grid.get(x, y);
                assert!(ok);
                assert!((u - eu).abs() < 1e-12 && (v - ev).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unproject_rectified_examples() {
        let intr = distorted_intrinsics();
        let rect = rectified_intrinsics(&intr, 1.0).unwrap();
        let depth = DepthGrid::constant(rect.width, rect.height, 5.0).unwrap();
        let pts = unproject_rectified(&depth, &rect).unwrap();
        // Center pixel: cx = 319.5 => pixel (319.5, 199.5) is between samples;
        // check the ray scaling on an explicit pixel instead.
        let idx = 200 * rect.width + 320;
        let ray = rect.ray(320.0, 200.0);
        assert!((pts[idx] - ray * 5.0).norm() < 1e-12);
        assert!((pts[idx].z - 5.0).abs() < 1e-12);

        // Hand case: ray (0.5, 0, 1) and depth 2 gives (1, 0, 2).
        let small = RectifiedIntrinsics { fx: 2.0, fy: 2.0, cx: 0.0, cy: 0.0, width: 2, height: 1 };
        let d = DepthGrid::constant(2, 1, 2.0).unwrap();
        let pts = unproject_rectified(&d, &small).unwrap();
        assert!((pts[1] - Vector3::new(1.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_validation_and_composition() {
        let r = nalgebra::Rotation3::from_scaled_axis(Vector3::new(0.1, -0.2, 0.3)).into_inner();
        let pose = RigidPose::new(r, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let composed = pose.compose(&pose.inverse());
        let err = (composed.rotation() - Matrix3::identity()).abs().max();
        assert!(err < 1e-9);
        assert!(composed.translation().norm() < 1e-9);

        // Non-orthonormal rejected.
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidPose::new(skewed, Vector3::zeros()).is_err());
    }

    #[test]
    fn transform_points_examples() {
        let pts = vec![Vector3::new(0.0, 0.0, 2.0)];
        let id = RigidPose::identity();
        assert_eq!(transform_points(&pts, &id)[0], pts[0]);

        let shift = RigidPose::from_axis_angle(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(transform_points(&pts, &shift)[0], Vector3::new(1.0, 0.0, 2.0));
    }

    #[test]
    fn full_round_trip_points_recovered() {
        let intr = distorted_intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10_000 {
            let theta = rng.random_range(0.0..0.95 * intr.theta_max);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let z = rng.random_range(0.2..50.0);
            let r = theta.tan();
            let p = Vector3::new(r * phase.cos() * z, r * phase.sin() * z, z);
            let proj = intr.project_point(&p);
            if !proj.valid {
                continue;
            }
            let dir = intr.unproject_ray(proj.u, proj.v).unwrap();
            let rec = dir * (z / dir.z);
            assert!((rec - p).norm() <= 1e-6 * p.norm().max(1.0), "point {p:?}");
            checked += 1;
        }
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let intr = distorted_intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..200 {
            let p = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..5.0),
            );
            let (proj, jac) = intr.project_with_jacobian(&p);
            if !proj.valid {
                continue;
            }
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                let plus = intr.project_point(&(p + dp));
                let minus = intr.project_point(&(p - dp));
                if !plus.valid || !minus.valid {
                    continue;
                }
                let fd_u = (plus.u - minus.u) / (2.0 * h);
                let fd_v = (plus.v - minus.v) / (2.0 * h);
                assert!(
                    (fd_u - jac[0][axis]).abs() < 1e-5 * (1.0 + fd_u.abs()),
                    "du/dp[{axis}] fd {fd_u} vs {}",
                    jac[0][axis]
                );
                assert!(
                    (fd_v - jac[1][axis]).abs() < 1e-5 * (1.0 + fd_v.abs()),
                    "dv/dp[{axis}] fd {fd_v} vs {}",
                    jac[1][axis]
                );
            }
        }
    }
}
