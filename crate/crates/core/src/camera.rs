//! Kannala-Brandt fisheye camera model and world-to-camera poses.
//!
//! The radial distortion polynomial maps the incidence angle `theta`
//! (between a ray and the optical axis) to a distorted angle
//!
//! ```text
//! theta_d = theta + k1*theta^3 + k2*theta^5 + k3*theta^7 + k4*theta^9
//! ```
//!
//! and a camera-space point `(x, y, z)` projects to
//!
//! ```text
//! u = cx + fx * theta_d * x / d,   v = cy + fy * theta_d * y / d
//! ```
//!
//! with `d = sqrt(x^2 + y^2)` and `theta = atan2(d, z)`. With all `k = 0`
//! this is the ideal equidistant fisheye; rays up to `theta_max` (which may
//! exceed 90 degrees) are considered inside the field of view.
//!
//! [`FisheyeIntrinsics::projection_jacobian`] evaluates the analytic
//! derivative of the pixel coordinates w.r.t. the camera-space point, which
//! is what the splat rasterizer uses to push 3D covariances into the image.
//! Its own derivative w.r.t. the point (needed for exact position gradients
//! through splat shapes) is obtained by evaluating the same expressions on
//! first-order dual numbers.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Relative on-axis threshold: below `d < AXIS_EPS_REL * |z|` the
/// equidistant expressions are numerically unstable and the exact pinhole
/// limit is used instead.
pub const AXIS_EPS_REL: f64 = 1e-8;

/// Grid resolution for the monotonicity check at construction.
const MONOTONICITY_SAMPLES: usize = 4096;

/// Newton iteration budget and residual tolerance for unprojection.
const UNPROJECT_MAX_ITERS: usize = 50;
const UNPROJECT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("distortion polynomial is not strictly increasing on [0, {theta_max}] (near theta = {theta})")]
    NonMonotonic { theta: f64, theta_max: f64 },
    #[error("angle {theta} outside valid domain [0, {theta_max}]")]
    DomainTheta { theta: f64, theta_max: f64 },
    #[error("incidence angle {theta} exceeds field of view (theta_max = {theta_max})")]
    OutOfFov { theta: f64, theta_max: f64 },
    #[error("degenerate camera-space point (norm ~ 0)")]
    DegeneratePoint,
    #[error("pixel maps outside the invertible image region")]
    OutOfRange,
    #[error("unprojection did not converge within {UNPROJECT_MAX_ITERS} iterations")]
    NoConvergence,
    #[error("matrix is not a rotation (orthonormality residual {residual})")]
    NotARotation { residual: f64 },
    #[error("degenerate pose construction: {0}")]
    DegeneratePose(String),
}

/// Camera-space point with cached derived quantities.
///
/// `radial` is the distance to the optical axis, `depth` the Euclidean
/// distance to the camera center (used as the splat sort key), and `theta`
/// the incidence angle measured from the +z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamPoint {
    pub p: Vector3<f64>,
    pub radial: f64,
    pub depth: f64,
    pub theta: f64,
}

impl CamPoint {
    pub fn new(p: Vector3<f64>) -> Self {
        let radial = p.x.hypot(p.y);
        Self {
            p,
            radial,
            depth: p.norm(),
            theta: radial.atan2(p.z),
        }
    }
}

/// Kannala-Brandt intrinsics for one camera.
///
/// Constructed through [`FisheyeIntrinsics::new`], which rejects parameter
/// sets whose distortion polynomial is not strictly increasing on
/// `[0, theta_max]` (a non-invertible model would alias distinct rays to the
/// same radius).
#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Radial polynomial coefficients `[k1, k2, k3, k4]`.
    pub k: [f64; 4],
    pub width: u32,
    pub height: u32,
    /// Largest admissible incidence angle, in radians. May exceed pi/2.
    pub theta_max: f64,
}

impl FisheyeIntrinsics {
    /// 100 degrees: a slightly conservative default for ~200-degree fisheye
    /// lenses.
    pub const DEFAULT_THETA_MAX: f64 = 100.0 * std::f64::consts::PI / 180.0;

    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k: [f64; 4],
        width: u32,
        height: u32,
        theta_max: f64,
    ) -> Result<Self, CameraError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            k,
            width,
            height,
            theta_max,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// [`FisheyeIntrinsics::new`] with [`Self::DEFAULT_THETA_MAX`].
    pub fn with_default_fov(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k: [f64; 4],
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        Self::new(fx, fy, cx, cy, k, width, height, Self::DEFAULT_THETA_MAX)
    }

    fn validate(&self) -> Result<(), CameraError> {
        let finite = self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.theta_max.is_finite()
            && self.k.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::InvalidIntrinsics(
                "non-finite parameter".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidIntrinsics(
                "image dimensions must be nonzero".into(),
            ));
        }
        if self.theta_max <= 0.0 || self.theta_max >= std::f64::consts::PI {
            return Err(CameraError::InvalidIntrinsics(format!(
                "theta_max must lie in (0, pi), got {}",
                self.theta_max
            )));
        }
        // Strict monotonicity of theta_d over a dense grid. This is a
        // necessary condition for unprojection to be well defined; the grid
        // is fine enough that any practical violation shows up.
        let mut prev = 0.0f64;
        for i in 1..MONOTONICITY_SAMPLES {
            let theta = self.theta_max * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64;
            let td = kb_polynomial(theta, &self.k);
            if td <= prev {
                return Err(CameraError::NonMonotonic {
                    theta,
                    theta_max: self.theta_max,
                });
            }
            prev = td;
        }
        Ok(())
    }

    /// Distorted angle `theta_d(theta)`.
    pub fn distorted_angle(&self, theta: f64) -> Result<f64, CameraError> {
        self.check_theta_domain(theta)?;
        Ok(kb_polynomial(theta, &self.k))
    }

    /// `d theta_d / d theta`.
    pub fn distorted_angle_derivative(&self, theta: f64) -> Result<f64, CameraError> {
        self.check_theta_domain(theta)?;
        Ok(kb_polynomial_derivative(theta, &self.k))
    }

    fn check_theta_domain(&self, theta: f64) -> Result<(), CameraError> {
        if !theta.is_finite() || theta < 0.0 || theta > self.theta_max {
            return Err(CameraError::DomainTheta {
                theta,
                theta_max: self.theta_max,
            });
        }
        Ok(())
    }

    /// Largest distorted angle, i.e. `theta_d(theta_max)`. The image of the
    /// field of view is the disk of radius `fx * max_distorted_angle` (resp.
    /// `fy`) around the principal point.
    pub fn max_distorted_angle(&self) -> f64 {
        kb_polynomial(self.theta_max, &self.k)
    }

    /// Projects a camera-space point to pixel coordinates.
    ///
    /// Points exactly on the optical axis map to the principal point.
    /// Points behind the camera are admissible as long as their incidence
    /// angle stays within `theta_max`.
    pub fn project(&self, p: &CamPoint) -> Result<Vector2<f64>, CameraError> {
        if p.depth < 1e-12 {
            return Err(CameraError::DegeneratePoint);
        }
        if p.theta > self.theta_max {
            return Err(CameraError::OutOfFov {
                theta: p.theta,
                theta_max: self.theta_max,
            });
        }
        if p.radial <= AXIS_EPS_REL * p.p.z.abs() {
            return Ok(Vector2::new(self.cx, self.cy));
        }
        let theta_d = kb_polynomial(p.theta, &self.k);
        let scale = theta_d / p.radial;
        Ok(Vector2::new(
            self.cx + self.fx * scale * p.p.x,
            self.cy + self.fy * scale * p.p.y,
        ))
    }

    /// Analytic Jacobian of the projection w.r.t. the camera-space point.
    ///
    /// Returned as a 3x3 matrix whose first two rows are
    /// `d(u, v) / d(x, y, z)` and whose third row is identically zero (the
    /// projection has no third output; the padding keeps the matrix
    /// composable with 3x3 rotations).
    ///
    /// Near the optical axis (`d < AXIS_EPS_REL * |z|`) the expressions
    /// degrade to 0/0; there the exact pinhole limit
    /// `[[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]` is substituted.
    pub fn projection_jacobian(&self, p: &CamPoint) -> Result<Matrix3<f64>, CameraError> {
        self.jacobian_guard(p)?;
        if p.radial <= AXIS_EPS_REL * p.p.z.abs() {
            return Ok(self.pinhole_limit_jacobian(p));
        }
        let rows = jacobian_rows(p.p.x, p.p.y, p.p.z, self.fx, self.fy, &self.k);
        Ok(rows_to_matrix(&rows))
    }

    /// Jacobian together with its derivative w.r.t. each camera-space
    /// coordinate: `(J, [dJ/dx, dJ/dy, dJ/dz])`.
    ///
    /// The derivative tensor is evaluated by running the Jacobian expressions
    /// on dual numbers, so it is exact to machine precision and cannot drift
    /// from the primal formula.
    pub fn projection_jacobian_with_point_derivatives(
        &self,
        p: &CamPoint,
    ) -> Result<(Matrix3<f64>, [Matrix3<f64>; 3]), CameraError> {
        self.jacobian_guard(p)?;
        if p.radial <= AXIS_EPS_REL * p.p.z.abs() {
            return Ok(self.pinhole_limit_jacobian_derivatives(p));
        }
        let x = Jet3::variable(p.p.x, 0);
        let y = Jet3::variable(p.p.y, 1);
        let z = Jet3::variable(p.p.z, 2);
        let rows = jacobian_rows(x, y, z, self.fx, self.fy, &self.k);
        let mut j = Matrix3::zeros();
        let mut dj = [Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros()];
        for (r, row) in rows.iter().enumerate() {
            for (c, entry) in row.iter().enumerate() {
                j[(r, c)] = entry.v;
                for (axis, grad) in dj.iter_mut().enumerate() {
                    grad[(r, c)] = entry.d[axis];
                }
            }
        }
        Ok((j, dj))
    }

    fn jacobian_guard(&self, p: &CamPoint) -> Result<(), CameraError> {
        if p.depth < 1e-12 {
            return Err(CameraError::DegeneratePoint);
        }
        if p.theta > self.theta_max {
            return Err(CameraError::OutOfFov {
                theta: p.theta,
                theta_max: self.theta_max,
            });
        }
        Ok(())
    }

    fn pinhole_limit_jacobian(&self, p: &CamPoint) -> Matrix3<f64> {
        let z = p.p.z;
        let mut j = Matrix3::zeros();
        j[(0, 0)] = self.fx / z;
        j[(0, 2)] = -self.fx * p.p.x / (z * z);
        j[(1, 1)] = self.fy / z;
        j[(1, 2)] = -self.fy * p.p.y / (z * z);
        j
    }

    fn pinhole_limit_jacobian_derivatives(
        &self,
        p: &CamPoint,
    ) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
        let z = p.p.z;
        let z2 = z * z;
        let z3 = z2 * z;
        let j = self.pinhole_limit_jacobian(p);
        let mut dx = Matrix3::zeros();
        dx[(0, 2)] = -self.fx / z2;
        let mut dy = Matrix3::zeros();
        dy[(1, 2)] = -self.fy / z2;
        let mut dz = Matrix3::zeros();
        dz[(0, 0)] = -self.fx / z2;
        dz[(0, 2)] = 2.0 * self.fx * p.p.x / z3;
        dz[(1, 1)] = -self.fy / z2;
        dz[(1, 2)] = 2.0 * self.fy * p.p.y / z3;
        (j, [dx, dy, dz])
    }

    /// Inverts the projection: pixel -> unit ray in camera space.
    ///
    /// Solves `theta_d(theta) = r_d` by safeguarded Newton iteration
    /// (bisection fallback keeps the iterate inside `[0, theta_max]`;
    /// monotonicity guarantees a unique root).
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Result<Vector3<f64>, CameraError> {
        let a = (pixel.x - self.cx) / self.fx;
        let b = (pixel.y - self.cy) / self.fy;
        let rd = a.hypot(b);
        if rd < 1e-14 {
            return Ok(Vector3::z());
        }
        let theta = self.solve_theta(rd)?;
        let (s, c) = theta.sin_cos();
        Ok(Vector3::new(s * a / rd, s * b / rd, c))
    }

    /// Incidence angle of the ray through a pixel, or an error if the pixel
    /// lies outside the image of the field of view.
    pub fn pixel_theta(&self, pixel: &Vector2<f64>) -> Result<f64, CameraError> {
        let a = (pixel.x - self.cx) / self.fx;
        let b = (pixel.y - self.cy) / self.fy;
        let rd = a.hypot(b);
        if rd < 1e-14 {
            return Ok(0.0);
        }
        self.solve_theta(rd)
    }

    fn solve_theta(&self, rd: f64) -> Result<f64, CameraError> {
        let rd_max = self.max_distorted_angle();
        // Tiny relative slack so pixels produced by projecting theta_max
        // rays survive the round trip.
        if rd > rd_max * (1.0 + 1e-12) {
            return Err(CameraError::OutOfRange);
        }
        let rd = rd.min(rd_max);
        let mut lo = 0.0f64;
        let mut hi = self.theta_max;
        let mut theta = rd.clamp(0.0, self.theta_max);
        for _ in 0..UNPROJECT_MAX_ITERS {
            let f = kb_polynomial(theta, &self.k) - rd;
            if f.abs() <= UNPROJECT_TOL {
                return Ok(theta);
            }
            if f > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let fp = kb_polynomial_derivative(theta, &self.k);
            let mut next = theta - f / fp;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            theta = next;
        }
        if (kb_polynomial(theta, &self.k) - rd).abs() <= UNPROJECT_TOL {
            Ok(theta)
        } else {
            Err(CameraError::NoConvergence)
        }
    }
}

/// World-to-camera rigid transform: `p_cam = R * p_world + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    /// Orthonormality tolerance for pose construction.
    pub const ROTATION_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if residual > Self::ROTATION_TOL || rotation.determinant() <= 0.0 {
            return Err(CameraError::NotARotation { residual });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose from a `[w, x, y, z]` quaternion (normalized here) and
    /// a translation, as stored by COLMAP.
    pub fn from_quaternion(q: [f64; 4], translation: Vector3<f64>) -> Result<Self, CameraError> {
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if norm < 1e-12 {
            return Err(CameraError::DegeneratePose(
                "quaternion norm ~ 0".into(),
            ));
        }
        let q = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
        Ok(Self {
            rotation: quat_to_rotation(&q),
            translation,
        })
    }

    /// Camera center in world coordinates (`-R^T t`).
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p_world: &Vector3<f64>) -> CamPoint {
        CamPoint::new(self.rotation * p_world + self.translation)
    }

    /// Pose looking from `eye` toward `target`, +z forward, with a +z world
    /// up-hint (falls back to +y when the view direction is vertical).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Result<Self, CameraError> {
        let forward = target - eye;
        let norm = forward.norm();
        if norm < 1e-12 {
            return Err(CameraError::DegeneratePose(
                "look_at eye coincides with target".into(),
            ));
        }
        let z_axis = forward / norm;
        let mut up = Vector3::new(0.0, 0.0, 1.0);
        if up.cross(&z_axis).norm() < 1e-9 {
            up = Vector3::new(0.0, 1.0, 0.0);
        }
        let x_axis = up.cross(&z_axis).normalize();
        let y_axis = z_axis.cross(&x_axis);
        let rotation = Matrix3::from_rows(&[
            x_axis.transpose(),
            y_axis.transpose(),
            z_axis.transpose(),
        ]);
        let translation = -(rotation * eye);
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Geodesic angle between the two rotations, in `[0, pi]`.
    pub fn rotation_angle_to(&self, other: &CameraPose) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let cos = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        cos.acos()
    }
}

/// Rotation matrix from a unit `[w, x, y, z]` quaternion.
///
/// Shared by pose import and by the Gaussian covariance factorization so
/// both sides agree bit-for-bit on the convention.
pub fn quat_to_rotation(q: &[f64; 4]) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `theta_d = theta * (1 + k1 t2 + k2 t2^2 + k3 t2^3 + k4 t2^4)`, `t2 = theta^2`.
fn kb_polynomial<T: Real>(theta: T, k: &[f64; 4]) -> T {
    let t2 = theta * theta;
    theta * poly_even(t2, 1.0, k[0], k[1], k[2], k[3])
}

/// `d theta_d / d theta = 1 + 3 k1 t2 + 5 k2 t2^2 + 7 k3 t2^3 + 9 k4 t2^4`.
fn kb_polynomial_derivative<T: Real>(theta: T, k: &[f64; 4]) -> T {
    let t2 = theta * theta;
    poly_even(t2, 1.0, 3.0 * k[0], 5.0 * k[1], 7.0 * k[2], 9.0 * k[3])
}

/// Horner evaluation of `c0 + c1 t + c2 t^2 + c3 t^3 + c4 t^4`.
fn poly_even<T: Real>(t: T, c0: f64, c1: f64, c2: f64, c3: f64, c4: f64) -> T {
    ((t.scale(c4).addf(c3) * t).addf(c2) * t)
        .addf(c1)
        .mul_add_self(t, c0)
}

/// First two rows of the projection Jacobian, generic over plain floats and
/// dual numbers. `d > 0` is assumed (the on-axis branch is handled by the
/// caller).
fn jacobian_rows<T: Real>(x: T, y: T, z: T, fx: f64, fy: f64, k: &[f64; 4]) -> [[T; 3]; 2] {
    let d2 = x * x + y * y;
    let d = d2.sqrt();
    let r2 = d2 + z * z; // squared Euclidean distance
    let theta = d.atan2(z);
    let theta_d = kb_polynomial(theta, k);
    let theta_dp = kb_polynomial_derivative(theta, k);

    // theta'_d / (D^2 d^2): weight of the angular part of the derivative.
    let a = theta_dp / (r2 * d2);
    // theta_d / d^3: weight of the azimuthal part.
    let b = theta_d / (d2 * d);
    // theta'_d / D^2: weight of the z column.
    let c = theta_dp / r2;

    let xx = x * x;
    let yy = y * y;
    let xy = x * y;
    [
        [
            (xx * z * a + yy * b).scale(fx),
            (xy * z * a - xy * b).scale(fx),
            (x * c).scale(-fx),
        ],
        [
            (xy * z * a - xy * b).scale(fy),
            (yy * z * a + xx * b).scale(fy),
            (y * c).scale(-fy),
        ],
    ]
}

fn rows_to_matrix(rows: &[[f64; 3]; 2]) -> Matrix3<f64> {
    Matrix3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], 0.0, 0.0, 0.0,
    )
}

/// Minimal scalar abstraction so the Jacobian expressions can be evaluated
/// on `f64` and on dual numbers from a single source of truth.
trait Real:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn sqrt(self) -> Self;
    /// `self.atan2(other)` with `self` as the y argument.
    fn atan2(self, other: Self) -> Self;
    /// Multiplication by a constant.
    fn scale(self, c: f64) -> Self;
    /// Addition of a constant.
    fn addf(self, c: f64) -> Self;
    /// `self * t + c` with a constant `c`.
    fn mul_add_self(self, t: Self, c: f64) -> Self {
        (self * t).addf(c)
    }
}

impl Real for f64 {
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan2(self, other: Self) -> Self {
        f64::atan2(self, other)
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn addf(self, c: f64) -> Self {
        self + c
    }
}

/// First-order dual number carrying partials w.r.t. three variables.
#[derive(Debug, Clone, Copy)]
struct Jet3 {
    v: f64,
    d: [f64; 3],
}

impl Jet3 {
    fn variable(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Self { v, d }
    }
}

impl std::ops::Add for Jet3 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            v: self.v + rhs.v,
            d: [
                self.d[0] + rhs.d[0],
                self.d[1] + rhs.d[1],
                self.d[2] + rhs.d[2],
            ],
        }
    }
}

impl std::ops::Sub for Jet3 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            v: self.v - rhs.v,
            d: [
                self.d[0] - rhs.d[0],
                self.d[1] - rhs.d[1],
                self.d[2] - rhs.d[2],
            ],
        }
    }
}

impl std::ops::Mul for Jet3 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            v: self.v * rhs.v,
            d: [
                self.d[0] * rhs.v + self.v * rhs.d[0],
                self.d[1] * rhs.v + self.v * rhs.d[1],
                self.d[2] * rhs.v + self.v * rhs.d[2],
            ],
        }
    }
}

impl std::ops::Div for Jet3 {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let v = self.v / rhs.v;
        Self {
            v,
            d: [
                (self.d[0] - v * rhs.d[0]) / rhs.v,
                (self.d[1] - v * rhs.d[1]) / rhs.v,
                (self.d[2] - v * rhs.d[2]) / rhs.v,
            ],
        }
    }
}

impl Real for Jet3 {
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let inv = 0.5 / s;
        Self {
            v: s,
            d: [self.d[0] * inv, self.d[1] * inv, self.d[2] * inv],
        }
    }

    fn atan2(self, other: Self) -> Self {
        // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
        let denom = self.v * self.v + other.v * other.v;
        Self {
            v: self.v.atan2(other.v),
            d: [
                (other.v * self.d[0] - self.v * other.d[0]) / denom,
                (other.v * self.d[1] - self.v * other.d[1]) / denom,
                (other.v * self.d[2] - self.v * other.d[2]) / denom,
            ],
        }
    }

    fn scale(self, c: f64) -> Self {
        Self {
            v: self.v * c,
            d: [self.d[0] * c, self.d[1] * c, self.d[2] * c],
        }
    }

    fn addf(self, c: f64) -> Self {
        Self {
            v: self.v + c,
            d: self.d,
        }
    }
}
