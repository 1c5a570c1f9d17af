//! Tile-based rasterization of 3D Gaussians through the fisheye camera.
//!
//! Each Gaussian is projected by linearizing the fisheye projection at its
//! camera-space mean: with `J` the projection Jacobian and `R` the
//! world-to-camera rotation, the image covariance is the upper-left 2x2
//! block of `(J R) Sigma (J R)^T`. Splats are depth-sorted globally by
//! Euclidean distance (not z: under a wide field of view, z ordering is
//! wrong toward the periphery), binned into 16x16-pixel tiles, and
//! alpha-composited front to back per pixel.
//!
//! [`render_backward`] recomputes the forward pass per tile and propagates
//! image gradients to every Gaussian parameter analytically, including the
//! curvature of the projection (the derivative of `J` w.r.t. the mean),
//! which matters at large incidence angles.

mod backward;
mod forward;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{CameraPose, FisheyeIntrinsics};
use crate::img::Image;
use crate::scene::{covariance_from, SceneModel};
use crate::sh;

pub use backward::render_backward;
pub use forward::render;

/// Rasterization tile edge, in pixels.
pub const TILE_SIZE: usize = 16;
/// Low-pass floor added to the diagonal of every image covariance, in px^2.
/// Guarantees a splat never falls below ~one pixel in extent.
pub const COV2D_LOW_PASS: f64 = 0.3;
/// Upper clamp on per-splat blending alpha.
pub const ALPHA_CLAMP: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub const ALPHA_CUTOFF: f64 = 1.0 / 255.0;
/// Front-to-back compositing stops once transmittance would fall below this.
pub const TRANSMITTANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CullReason {
    /// Euclidean distance below the near threshold.
    NearPlane,
    /// Incidence angle beyond `theta_max` (or a degenerate point).
    OutOfFov,
    /// Projected footprint does not intersect the image.
    OffScreen,
    /// Non-invertible image covariance.
    Degenerate,
}

/// Image-space footprint of a single Gaussian. When `culled` is set the
/// remaining fields hold whatever was computed before the cull and are not
/// meaningful.
#[derive(Debug, Clone)]
pub struct SplatProjection {
    pub mean2d: Vector2<f64>,
    /// Linearized image covariance, before the low-pass floor.
    pub cov2d: Matrix2<f64>,
    /// 3-sigma extent in pixels, from the largest eigenvalue of the
    /// low-passed covariance.
    pub radius: f64,
    /// Euclidean distance to the camera center: the compositing sort key.
    pub depth: f64,
    pub culled: Option<CullReason>,
}

impl SplatProjection {
    fn culled(reason: CullReason) -> Self {
        Self {
            mean2d: Vector2::zeros(),
            cov2d: Matrix2::zeros(),
            radius: 0.0,
            depth: 0.0,
            culled: Some(reason),
        }
    }
}

/// Rendering parameters shared by the forward and backward passes.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Splats closer than this (Euclidean) are culled.
    pub near: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            near: 0.05,
        }
    }
}

/// Forward rasterization output.
#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub image: Image,
    /// Per-pixel accumulated opacity (`1 - transmittance`), row-major.
    pub alpha: Vec<f64>,
    /// Per-pixel number of composited splats, row-major.
    pub contrib: Vec<u32>,
}

/// Gradients of a scalar loss w.r.t. every Gaussian parameter, plus the
/// densification statistic. Indexed like `scene.gaussians`; Gaussians culled
/// in this view hold exact zeros.
#[derive(Debug, Clone)]
pub struct SceneGradients {
    pub position: Vec<Vector3<f64>>,
    pub rotation: Vec<[f64; 4]>,
    pub log_scale: Vec<Vector3<f64>>,
    pub opacity_logit: Vec<f64>,
    pub sh: Vec<Vec<[f64; 3]>>,
    /// Norm of the image-space positional gradient in screen-relative units
    /// (pixel gradients scaled by half the image size), accumulated by the
    /// trainer to drive densification.
    pub mean2d_norm: Vec<f64>,
    /// Whether the Gaussian survived culling for this view.
    pub visible: Vec<bool>,
}

impl SceneGradients {
    pub fn zeros(scene: &SceneModel) -> Self {
        let n = scene.len();
        let coeffs = sh::coeff_count(scene.sh_degree);
        Self {
            position: vec![Vector3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            log_scale: vec![Vector3::zeros(); n],
            opacity_logit: vec![0.0; n],
            sh: vec![vec![[0.0; 3]; coeffs]; n],
            mean2d_norm: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    /// Elementwise accumulation (view gradients within a batch sum).
    pub fn accumulate(&mut self, other: &SceneGradients) {
        assert_eq!(self.position.len(), other.position.len());
        for i in 0..self.position.len() {
            self.position[i] += other.position[i];
            for k in 0..4 {
                self.rotation[i][k] += other.rotation[i][k];
            }
            self.log_scale[i] += other.log_scale[i];
            self.opacity_logit[i] += other.opacity_logit[i];
            for (a, b) in self.sh[i].iter_mut().zip(&other.sh[i]) {
                for ch in 0..3 {
                    a[ch] += b[ch];
                }
            }
            self.mean2d_norm[i] += other.mean2d_norm[i];
            self.visible[i] = self.visible[i] || other.visible[i];
        }
    }
}

/// Projects one Gaussian, applying the standard culling chain: near
/// distance, field of view, covariance conditioning, image bounds.
pub fn project_gaussian(
    position: &Vector3<f64>,
    covariance: &Matrix3<f64>,
    pose: &CameraPose,
    intr: &FisheyeIntrinsics,
    near: f64,
) -> SplatProjection {
    let campt = pose.world_to_camera(position);
    if campt.depth < near {
        return SplatProjection::culled(CullReason::NearPlane);
    }
    let mean2d = match intr.project(&campt) {
        Ok(px) => px,
        Err(_) => return SplatProjection::culled(CullReason::OutOfFov),
    };
    let j = match intr.projection_jacobian(&campt) {
        Ok(j) => j,
        Err(_) => return SplatProjection::culled(CullReason::OutOfFov),
    };
    let m = j * pose.rotation;
    let full = m * covariance * m.transpose();
    let cov2d = Matrix2::new(full[(0, 0)], full[(0, 1)], full[(1, 0)], full[(1, 1)]);

    let reg = regularized(&cov2d);
    let det = reg[(0, 0)] * reg[(1, 1)] - reg[(0, 1)] * reg[(1, 0)];
    if !(det > 0.0) || !reg.iter().all(|v| v.is_finite()) {
        return SplatProjection::culled(CullReason::Degenerate);
    }
    let radius = 3.0 * max_eigenvalue(&reg).sqrt();

    let (w, h) = (intr.width as f64, intr.height as f64);
    if mean2d.x + radius <= 0.0
        || mean2d.x - radius >= w
        || mean2d.y + radius <= 0.0
        || mean2d.y - radius >= h
    {
        return SplatProjection::culled(CullReason::OffScreen);
    }

    SplatProjection {
        mean2d,
        cov2d,
        radius,
        depth: campt.depth,
        culled: None,
    }
}

pub(crate) fn regularized(cov2d: &Matrix2<f64>) -> Matrix2<f64> {
    let mut reg = *cov2d;
    reg[(0, 0)] += COV2D_LOW_PASS;
    reg[(1, 1)] += COV2D_LOW_PASS;
    reg
}

/// Largest eigenvalue of a symmetric 2x2 matrix (closed form).
pub(crate) fn max_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    mid + (half_diff * half_diff + m[(0, 1)] * m[(1, 0)]).sqrt()
}

fn inverse2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// One visible splat, fully resolved for rasterization.
pub(crate) struct PreparedSplat {
    pub gidx: u32,
    pub mean2d: Vector2<f64>,
    /// Inverse of the low-passed image covariance.
    pub conic: Matrix2<f64>,
    pub radius: f64,
    pub depth: f64,
    pub opacity: f64,
    /// Clamped SH color at the view direction.
    pub color: [f64; 3],
    /// Per channel: whether the unclamped color was strictly inside (0, 1)
    /// (i.e. whether gradient flows through the clamp).
    pub clamp_pass: [bool; 3],
}

pub(crate) struct PreparedView {
    pub splats: Vec<PreparedSplat>,
    /// Per tile, indices into `splats` in front-to-back order.
    pub tile_lists: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

/// Projects, sorts, and tile-bins the whole scene for one view.
pub(crate) fn prepare_view(
    scene: &SceneModel,
    pose: &CameraPose,
    intr: &FisheyeIntrinsics,
    opts: &RenderOptions,
) -> PreparedView {
    let cam_center = pose.camera_center();
    let degree = scene.sh_active_degree;

    let splats: Vec<PreparedSplat> = scene
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(gidx, g)| {
            let cov = covariance_from(&g.rotation, &g.log_scale);
            let proj = project_gaussian(&g.position, &cov, pose, intr, opts.near);
            if proj.culled.is_some() {
                return None;
            }
            let conic = inverse2(&regularized(&proj.cov2d))?;
            let view = g.position - cam_center;
            let dir = view / view.norm();
            let raw = sh::eval_color(&g.sh, degree, &dir);
            let mut color = [0.0; 3];
            let mut clamp_pass = [false; 3];
            for ch in 0..3 {
                color[ch] = raw[ch].clamp(0.0, 1.0);
                clamp_pass[ch] = raw[ch] > 0.0 && raw[ch] < 1.0;
            }
            Some(PreparedSplat {
                gidx: gidx as u32,
                mean2d: proj.mean2d,
                conic,
                radius: proj.radius,
                depth: proj.depth,
                opacity: g.opacity(),
                color,
                clamp_pass,
            })
        })
        .collect();

    // Global front-to-back order; ties resolved by the stable Gaussian
    // index so rendering is a pure function of the scene.
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
        sa.depth
            .partial_cmp(&sb.depth)
            .unwrap()
            .then(sa.gidx.cmp(&sb.gidx))
    });

    let tiles_x = (intr.width as usize).div_ceil(TILE_SIZE);
    let tiles_y = (intr.height as usize).div_ceil(TILE_SIZE);
    let mut tile_lists = vec![Vec::new(); tiles_x * tiles_y];
    for &si in &order {
        let sp = &splats[si as usize];
        let x0 = ((sp.mean2d.x - sp.radius) / TILE_SIZE as f64)
            .floor()
            .max(0.0) as usize;
        let y0 = ((sp.mean2d.y - sp.radius) / TILE_SIZE as f64)
            .floor()
            .max(0.0) as usize;
        let x1 = (((sp.mean2d.x + sp.radius) / TILE_SIZE as f64).floor() as isize)
            .min(tiles_x as isize - 1);
        let y1 = (((sp.mean2d.y + sp.radius) / TILE_SIZE as f64).floor() as isize)
            .min(tiles_y as isize - 1);
        if x1 < x0 as isize || y1 < y0 as isize {
            continue;
        }
        for ty in y0..=(y1 as usize) {
            for tx in x0..=(x1 as usize) {
                tile_lists[ty * tiles_x + tx].push(si);
            }
        }
    }

    PreparedView {
        splats,
        tile_lists,
        tiles_x,
        tiles_y,
    }
}

/// Per-splat blending weight at a pixel center: `alpha`, the unclamped
/// Gaussian value `g = exp(power)`, and the pixel offset `delta`.
#[inline]
pub(crate) fn splat_alpha(
    sp: &PreparedSplat,
    pixel: Vector2<f64>,
) -> Option<(f64, f64, Vector2<f64>)> {
    let d = pixel - sp.mean2d;
    let power = -0.5
        * (sp.conic[(0, 0)] * d.x * d.x
            + sp.conic[(1, 1)] * d.y * d.y
            + 2.0 * sp.conic[(0, 1)] * d.x * d.y);
    if power > 0.0 {
        return None;
    }
    let g = power.exp();
    let alpha = (sp.opacity * g).min(ALPHA_CLAMP);
    if alpha < ALPHA_CUTOFF {
        return None;
    }
    Some((alpha, g, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CamPoint;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new(
            110.0,
            110.0,
            64.0,
            64.0,
            [0.05, -0.01, 0.0, 0.0],
            128,
            128,
            FisheyeIntrinsics::DEFAULT_THETA_MAX,
        )
        .unwrap()
    }

    fn identity_pose() -> CameraPose {
        CameraPose::new(Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    #[test]
    fn culling_reasons() {
        let intr = intr();
        let pose = identity_pose();
        let cov = Matrix3::identity() * 1e-4;

        let behind = project_gaussian(&Vector3::new(0.0, 0.0, -3.0), &cov, &pose, &intr, 0.05);
        assert_eq!(behind.culled, Some(CullReason::OutOfFov));

        let near = project_gaussian(&Vector3::new(0.0, 0.0, 0.01), &cov, &pose, &intr, 0.05);
        assert_eq!(near.culled, Some(CullReason::NearPlane));

        // In the field of view (theta < 100 deg) but its image circle lies
        // far outside the 128px sensor: theta ~ 99 deg maps to radius
        // fx * theta_d(1.728) ~ 230 px from center.
        let off = project_gaussian(&Vector3::new(6.0, 0.0, -0.9), &cov, &pose, &intr, 0.05);
        assert_eq!(off.culled, Some(CullReason::OffScreen));

        let visible = project_gaussian(&Vector3::new(0.2, 0.1, 2.0), &cov, &pose, &intr, 0.05);
        assert_eq!(visible.culled, None);
        assert_relative_eq!(visible.depth, (0.2f64 * 0.2 + 0.01 + 4.0).sqrt());
    }

    #[test]
    fn on_axis_isotropic_gaussian_projects_isotropically() {
        let intr = intr();
        let pose = identity_pose();
        let sigma = 0.02f64;
        let z = 2.0;
        let proj = project_gaussian(
            &Vector3::new(0.0, 0.0, z),
            &(Matrix3::identity() * sigma * sigma),
            &pose,
            &intr,
            0.05,
        );
        assert_eq!(proj.culled, None);
        // Pinhole limit: image std = f * sigma / z in both axes.
        let expected = (intr.fx * sigma / z).powi(2);
        assert_relative_eq!(proj.cov2d[(0, 0)], expected, max_relative = 1e-9);
        assert_relative_eq!(proj.cov2d[(1, 1)], expected, max_relative = 1e-9);
        assert!(proj.cov2d[(0, 1)].abs() < 1e-12);
        assert_eq!(proj.mean2d, Vector2::new(intr.cx, intr.cy));
    }

    #[test]
    fn radius_covers_three_sigma() {
        let m = Matrix2::new(4.0, 1.0, 1.0, 2.0);
        let lam = max_eigenvalue(&m);
        // Oracle: eigenvalues of [[4,1],[1,2]] are 3 +- sqrt(2).
        assert_relative_eq!(lam, 3.0 + 2.0f64.sqrt(), max_relative = 1e-12);
    }

    /// Monte-Carlo oracle: empirical pixel covariance of exactly projected
    /// samples from the 3D Gaussian must match the linearized covariance
    /// within sampling error.
    #[test]
    fn projected_covariance_matches_monte_carlo() {
        // A wide sensor so trials out to theta ~ 1.3 rad stay on screen.
        let intr = FisheyeIntrinsics::new(
            110.0,
            110.0,
            160.0,
            160.0,
            [0.05, -0.01, 0.0, 0.0],
            320,
            320,
            FisheyeIntrinsics::DEFAULT_THETA_MAX,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 20_000;
        for trial in 0..10 {
            // Random small Gaussian somewhere in the field of view.
            let theta: f64 = rng.gen_range(0.1..1.3);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let depth: f64 = rng.gen_range(1.0..3.0);
            let center = Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ) * depth;
            let pose = identity_pose();
            let q = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            ];
            let log_scale = Vector3::new(
                rng.gen_range(-6.0..-4.5),
                rng.gen_range(-6.0..-4.5),
                rng.gen_range(-6.0..-4.5),
            );
            let cov = covariance_from(&q, &log_scale);
            let proj = project_gaussian(&center, &cov, &pose, &intr, 0.05);
            assert_eq!(proj.culled, None, "trial {trial}");

            // Sample world points, project exactly, accumulate moments.
            let l = crate::scene::covariance_factor(&q, &log_scale);
            let mut mean = Vector2::zeros();
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                let z = Vector3::new(
                    gauss_sample(&mut rng),
                    gauss_sample(&mut rng),
                    gauss_sample(&mut rng),
                );
                let p = center + l * z;
                let px = intr.project(&CamPoint::new(p)).unwrap();
                mean += px;
                pts.push(px);
            }
            mean /= n as f64;
            let mut c = [0.0f64; 3]; // xx, xy, yy
            for p in &pts {
                let d = p - mean;
                c[0] += d.x * d.x;
                c[1] += d.x * d.y;
                c[2] += d.y * d.y;
            }
            for v in &mut c {
                *v /= (n - 1) as f64;
            }
            // 3 standard errors of a Gaussian covariance estimate.
            let se = |cii: f64, cjj: f64, cij: f64| {
                ((cii * cjj + cij * cij) / (n as f64 - 1.0)).sqrt()
            };
            let checks = [
                (proj.cov2d[(0, 0)], c[0], se(c[0], c[0], c[0])),
                (proj.cov2d[(0, 1)], c[1], se(c[0], c[2], c[1])),
                (proj.cov2d[(1, 1)], c[2], se(c[2], c[2], c[2])),
            ];
            for (analytic, empirical, se) in checks {
                assert!(
                    (analytic - empirical).abs() < 3.0 * se,
                    "trial {trial}: analytic {analytic} vs MC {empirical} (3se = {})",
                    3.0 * se
                );
            }
        }
    }

    fn gauss_sample(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
