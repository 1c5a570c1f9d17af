//! Backward rasterization: propagates an image-space gradient to every
//! Gaussian parameter.
//!
//! Two stages. Stage A replays the forward compositing per tile and turns
//! pixel gradients into per-splat image-space gradients (2D mean, conic,
//! color, opacity) with a reverse suffix scan; per-tile results are merged
//! sequentially in tile order so the output is independent of thread
//! scheduling. Stage B maps those image-space gradients through the
//! projection to the 3D parameters: positions pick up both the first-order
//! term (the projection Jacobian) and the second-order term from the
//! covariance linearization (the Jacobian's own derivative w.r.t. the
//! camera-space mean), which is what keeps optimization honest at large
//! incidence angles.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{quat_to_rotation, CameraPose, FisheyeIntrinsics};
use crate::img::Image;
use crate::scene::{covariance_factor, covariance_from, SceneModel};
use crate::sh;

use super::{
    prepare_view, splat_alpha, PreparedSplat, PreparedView, RenderOptions, SceneGradients,
    ALPHA_CLAMP, TILE_SIZE, TRANSMITTANCE_FLOOR,
};

/// Image-space gradient of one splat: everything stage B needs.
#[derive(Clone)]
struct Grad2D {
    mean: Vector2<f64>,
    /// Gradient w.r.t. the conic (inverse regularized covariance).
    conic: Matrix2<f64>,
    /// Gradient w.r.t. the clamped view-dependent color.
    color: [f64; 3],
    /// Gradient w.r.t. the opacity (post-sigmoid).
    opacity: f64,
}

impl Default for Grad2D {
    fn default() -> Self {
        Self {
            mean: Vector2::zeros(),
            conic: Matrix2::zeros(),
            color: [0.0; 3],
            opacity: 0.0,
        }
    }
}

impl Grad2D {
    fn add(&mut self, other: &Grad2D) {
        self.mean += other.mean;
        self.conic += other.conic;
        for ch in 0..3 {
            self.color[ch] += other.color[ch];
        }
        self.opacity += other.opacity;
    }

    fn is_zero(&self) -> bool {
        self.mean == Vector2::zeros()
            && self.conic == Matrix2::zeros()
            && self.color == [0.0; 3]
            && self.opacity == 0.0
    }
}

/// Full parameter gradient of one visible splat, before scattering back to
/// scene order.
struct SplatGrads {
    gidx: u32,
    position: Vector3<f64>,
    rotation: [f64; 4],
    log_scale: Vector3<f64>,
    opacity_logit: f64,
    sh: Vec<[f64; 3]>,
    mean2d_norm: f64,
}

/// Computes `dL/dparams` for every Gaussian given `dL/dpixel` in
/// `grad_image` (same resolution as the render). The compositing state is
/// recomputed rather than stored, so this pairs with any [`super::render`]
/// call that used the same scene, pose, and options.
pub fn render_backward(
    scene: &SceneModel,
    pose: &CameraPose,
    intr: &FisheyeIntrinsics,
    opts: &RenderOptions,
    grad_image: &Image,
) -> SceneGradients {
    assert_eq!(
        (grad_image.width, grad_image.height),
        (intr.width as usize, intr.height as usize),
        "gradient image resolution must match the camera"
    );
    let pv = prepare_view(scene, pose, intr, opts);
    let (w, h) = (intr.width as usize, intr.height as usize);

    // Stage A: per-tile image-space gradients, merged in tile order.
    let tile_grads: Vec<Vec<Grad2D>> = (0..pv.tile_lists.len())
        .into_par_iter()
        .map(|t| backward_tile(&pv, t, w, h, grad_image, &opts.background))
        .collect();
    let mut accum = vec![Grad2D::default(); pv.splats.len()];
    for (list, grads) in pv.tile_lists.iter().zip(&tile_grads) {
        for (&si, gr) in list.iter().zip(grads) {
            accum[si as usize].add(gr);
        }
    }

    // Stage B: chain through projection, covariance, SH, and activations.
    let cam_center = pose.camera_center();
    let per_splat: Vec<SplatGrads> = pv
        .splats
        .par_iter()
        .zip(&accum)
        .map(|(sp, g2)| splat_backward(scene, pose, intr, &cam_center, sp, g2))
        .collect();

    let mut out = SceneGradients::zeros(scene);
    for sg in per_splat {
        let i = sg.gidx as usize;
        out.position[i] = sg.position;
        out.rotation[i] = sg.rotation;
        out.log_scale[i] = sg.log_scale;
        out.opacity_logit[i] = sg.opacity_logit;
        out.sh[i] = sg.sh;
        out.mean2d_norm[i] = sg.mean2d_norm;
        out.visible[i] = true;
    }
    out
}

/// Replays compositing for one tile and back-propagates the enclosed pixel
/// gradients. Returns one `Grad2D` per tile-list entry (same order).
fn backward_tile(
    pv: &PreparedView,
    t: usize,
    w: usize,
    h: usize,
    grad_image: &Image,
    bg: &[f64; 3],
) -> Vec<Grad2D> {
    let list = &pv.tile_lists[t];
    let mut grads = vec![Grad2D::default(); list.len()];
    if list.is_empty() {
        return grads;
    }
    let tx0 = (t % pv.tiles_x) * TILE_SIZE;
    let ty0 = (t / pv.tiles_x) * TILE_SIZE;
    let tw = TILE_SIZE.min(w - tx0);
    let th = TILE_SIZE.min(h - ty0);

    // (entry index, alpha, g, delta, transmittance in front of the splat)
    let mut hits: Vec<(usize, f64, f64, Vector2<f64>, f64)> = Vec::with_capacity(list.len());

    for py in 0..th {
        for px in 0..tw {
            let g_pix = grad_image.get(tx0 + px, ty0 + py);
            if g_pix == [0.0; 3] {
                continue;
            }
            let pixel = Vector2::new((tx0 + px) as f64 + 0.5, (ty0 + py) as f64 + 0.5);

            // Forward replay, recording each composited splat.
            hits.clear();
            let mut transmittance = 1.0f64;
            for (e, &si) in list.iter().enumerate() {
                let sp = &pv.splats[si as usize];
                let Some((alpha, g, delta)) = splat_alpha(sp, pixel) else {
                    continue;
                };
                let next = transmittance * (1.0 - alpha);
                if next < TRANSMITTANCE_FLOOR {
                    break;
                }
                hits.push((e, alpha, g, delta, transmittance));
                transmittance = next;
            }

            // Reverse scan. `suffix` holds the color composited behind the
            // current splat, background included; the pixel derivative w.r.t.
            // alpha_i is then  c_i T_i - suffix / (1 - alpha_i).
            let mut suffix = [
                transmittance * bg[0],
                transmittance * bg[1],
                transmittance * bg[2],
            ];
            for &(e, alpha, g, delta, t_front) in hits.iter().rev() {
                let sp = &pv.splats[list[e] as usize];
                let gr = &mut grads[e];
                let mut g_alpha = 0.0;
                for ch in 0..3 {
                    g_alpha +=
                        g_pix[ch] * (sp.color[ch] * t_front - suffix[ch] / (1.0 - alpha));
                    gr.color[ch] += g_pix[ch] * alpha * t_front;
                    suffix[ch] += sp.color[ch] * alpha * t_front;
                }
                // When alpha sits on the 0.99 clamp its derivative w.r.t.
                // opacity and footprint is zero; color still flows.
                if sp.opacity * g <= ALPHA_CLAMP {
                    gr.opacity += g * g_alpha;
                    let d_power = alpha * g_alpha;
                    let a_delta = sp.conic * delta;
                    gr.mean += d_power * a_delta;
                    gr.conic += (-0.5 * d_power) * (delta * delta.transpose());
                }
            }
        }
    }
    grads
}

fn splat_backward(
    scene: &SceneModel,
    pose: &CameraPose,
    intr: &FisheyeIntrinsics,
    cam_center: &Vector3<f64>,
    sp: &PreparedSplat,
    g2: &Grad2D,
) -> SplatGrads {
    let mut out = SplatGrads {
        gidx: sp.gidx,
        position: Vector3::zeros(),
        rotation: [0.0; 4],
        log_scale: Vector3::zeros(),
        opacity_logit: 0.0,
        sh: vec![[0.0; 3]; sh::coeff_count(scene.sh_degree)],
        mean2d_norm: 0.0,
    };
    if g2.is_zero() {
        return out;
    }
    let gauss = &scene.gaussians[sp.gidx as usize];

    // Conic -> regularized image covariance: dA = -A dSigma A.
    let a = sp.conic;
    let g_sigma_reg = -(a * g2.conic * a);
    let mut pad = Matrix3::zeros();
    for r in 0..2 {
        for c in 0..2 {
            pad[(r, c)] = g_sigma_reg[(r, c)];
        }
    }

    let campt = pose.world_to_camera(&gauss.position);
    let (j, dj) = intr
        .projection_jacobian_with_point_derivatives(&campt)
        .expect("splat projected in the forward pass");
    let r = pose.rotation;
    let m = j * r;
    let cov = covariance_from(&gauss.rotation, &gauss.log_scale);

    // Image covariance -> world covariance (M fixed).
    let g_sigma_world = m.transpose() * pad * m;

    // Position, camera frame: first-order through the projected mean plus
    // the curvature term through Sigma2D = (J R) Sigma (J R)^T.
    let mut g_pos_cam = Vector3::zeros();
    for k in 0..3 {
        let n_k = (dj[k] * r) * cov * m.transpose();
        let mut curv = 0.0;
        for rr in 0..2 {
            for cc in 0..2 {
                curv += g_sigma_reg[(rr, cc)] * n_k[(rr, cc)];
            }
        }
        g_pos_cam[k] = 2.0 * curv + j[(0, k)] * g2.mean.x + j[(1, k)] * g2.mean.y;
    }
    let mut g_pos_world = r.transpose() * g_pos_cam;

    // Color: clamp gate, SH coefficients, and the view-direction term
    // (projected onto the unit sphere tangent, divided by the distance).
    let d_rgb = [
        if sp.clamp_pass[0] { g2.color[0] } else { 0.0 },
        if sp.clamp_pass[1] { g2.color[1] } else { 0.0 },
        if sp.clamp_pass[2] { g2.color[2] } else { 0.0 },
    ];
    if d_rgb != [0.0; 3] {
        let view = gauss.position - cam_center;
        let dist = view.norm();
        let dir = view / dist;
        let d_dir = sh::eval_color_backward(
            &gauss.sh,
            scene.sh_active_degree,
            &dir,
            &d_rgb,
            &mut out.sh,
        );
        g_pos_world += (d_dir - dir * dir.dot(&d_dir)) / dist;
    }
    out.position = g_pos_world;

    out.opacity_logit = sp.opacity * (1.0 - sp.opacity) * g2.opacity;

    // World covariance -> log scales and quaternion through Sigma = L L^T,
    // L = R(q / |q|) diag(exp(s)).
    let l = covariance_factor(&gauss.rotation, &gauss.log_scale);
    let g_l = (g_sigma_world + g_sigma_world.transpose()) * l;
    let qn = gauss.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qhat = [
        gauss.rotation[0] / qn,
        gauss.rotation[1] / qn,
        gauss.rotation[2] / qn,
        gauss.rotation[3] / qn,
    ];
    let rq = quat_to_rotation(&qhat);
    let rt_gl = rq.transpose() * g_l;
    let scales = gauss.log_scale.map(f64::exp);
    for jx in 0..3 {
        out.log_scale[jx] = rt_gl[(jx, jx)] * scales[jx];
    }
    let g_rq = g_l * Matrix3::from_diagonal(&scales);
    let dr = rotation_quat_derivatives(&qhat);
    let mut g_qhat = [0.0; 4];
    for (mi, drm) in dr.iter().enumerate() {
        g_qhat[mi] = g_rq.component_mul(drm).sum();
    }
    let radial = (0..4).map(|i| qhat[i] * g_qhat[i]).sum::<f64>();
    for mi in 0..4 {
        out.rotation[mi] = (g_qhat[mi] - qhat[mi] * radial) / qn;
    }

    // Densification statistic: screen-relative norm of the 2D positional
    // gradient, so thresholds transfer across image resolutions.
    out.mean2d_norm = (g2.mean.x * intr.width as f64 / 2.0)
        .hypot(g2.mean.y * intr.height as f64 / 2.0);
    out
}

/// Entrywise derivatives of the rotation matrix w.r.t. the four components
/// of a unit quaternion `[w, x, y, z]` (polynomial parametrization; the
/// radial component is removed by the normalization chain in the caller).
fn rotation_quat_derivatives(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        2.0 * Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0),
        2.0 * Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x),
        2.0 * Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y),
        2.0 * Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0),
    ]
}
