//! The Gaussian scene model.
//!
//! Each primitive is an anisotropic 3D Gaussian parameterized for
//! unconstrained optimization: per-axis log standard deviations, a unit
//! quaternion for orientation, an opacity logit, and spherical-harmonic
//! color coefficients. The world covariance is the factorization
//! `Sigma = (R S)(R S)^T` with `S = diag(exp(log_scale))`, which is positive
//! semi-definite by construction for any parameter values.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::camera::quat_to_rotation;
use crate::sh;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("gaussian {index} has {got} SH coefficient triples, expected {expected}")]
    ShLength {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("gaussian {index} has a near-zero rotation quaternion")]
    ZeroRotation { index: usize },
    #[error("gaussian {index} has a non-finite parameter")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: Vector3<f64>,
    /// Orientation quaternion `[w, x, y, z]`; normalized after each
    /// optimizer step, and re-normalized defensively wherever it is used.
    pub rotation: [f64; 4],
    /// Per-axis log standard deviations.
    pub log_scale: Vector3<f64>,
    /// Opacity in logit space; `sigmoid` maps it to the blending opacity.
    pub opacity_logit: f64,
    /// SH coefficients, one `[r, g, b]` triple per basis function.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    /// World-space standard deviations.
    pub fn scales(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_from(&self.rotation, &self.log_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub gaussians: Vec<Gaussian>,
    /// Degree for which coefficients are allocated.
    pub sh_degree: usize,
    /// Degree actually evaluated at render time; raised on a schedule during
    /// training, never beyond `sh_degree`.
    pub sh_active_degree: usize,
}

impl SceneModel {
    pub fn new(gaussians: Vec<Gaussian>, sh_degree: usize) -> Result<Self, SceneError> {
        let expected = sh::coeff_count(sh_degree);
        for (index, g) in gaussians.iter().enumerate() {
            if g.sh.len() != expected {
                return Err(SceneError::ShLength {
                    index,
                    got: g.sh.len(),
                    expected,
                });
            }
            let qn = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if qn < 1e-12 {
                return Err(SceneError::ZeroRotation { index });
            }
            let finite = g.position.iter().all(|v| v.is_finite())
                && g.log_scale.iter().all(|v| v.is_finite())
                && g.opacity_logit.is_finite()
                && g.rotation.iter().all(|v| v.is_finite())
                && g.sh.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(SceneError::NonFinite { index });
            }
        }
        Ok(Self {
            gaussians,
            sh_degree,
            sh_active_degree: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Initializes one Gaussian per SfM point: position at the point, color
    /// as the DC spherical harmonic, opacity 0.1, isotropic scale set from
    /// the mean distance to the three nearest neighbors (a proxy for local
    /// point density), identity orientation.
    ///
    /// Colors are expected in `[0, 1]`.
    pub fn init_from_points(points: &[(Vector3<f64>, [f64; 3])], sh_degree: usize) -> Self {
        let coeffs = sh::coeff_count(sh_degree);
        let opacity_logit = inverse_sigmoid(0.1);
        let gaussians = points
            .iter()
            .enumerate()
            .map(|(i, (pos, color))| {
                let dist = mean_knn_distance(points, i, 3).max(1e-7);
                let mut shc = vec![[0.0; 3]; coeffs];
                for ch in 0..3 {
                    shc[0][ch] = sh::color_to_dc(color[ch]);
                }
                Gaussian {
                    position: *pos,
                    rotation: [1.0, 0.0, 0.0, 0.0],
                    log_scale: Vector3::repeat(dist.ln()),
                    opacity_logit,
                    sh: shc,
                }
            })
            .collect();
        Self {
            gaussians,
            sh_degree,
            sh_active_degree: 0,
        }
    }

    /// Raises the active SH degree by one, saturating at the stored degree.
    pub fn raise_active_degree(&mut self) {
        self.sh_active_degree = (self.sh_active_degree + 1).min(self.sh_degree);
    }

    pub fn normalize_rotations(&mut self) {
        for g in &mut self.gaussians {
            let n = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                for v in &mut g.rotation {
                    *v /= n;
                }
            }
        }
    }

    /// Clamps every opacity down to `ceiling` (in opacity space, not logit
    /// space). Used by the periodic opacity reset during training.
    pub fn clamp_opacity(&mut self, ceiling: f64) {
        let max_logit = inverse_sigmoid(ceiling);
        for g in &mut self.gaussians {
            g.opacity_logit = g.opacity_logit.min(max_logit);
        }
    }
}

/// Mean distance from `points[i]` to its `k` nearest neighbors; falls back
/// to 0.1 when the cloud has no other points.
fn mean_knn_distance(points: &[(Vector3<f64>, [f64; 3])], i: usize, k: usize) -> f64 {
    let mut dists: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, (p, _))| (p - points[i].0).norm())
        .collect();
    if dists.is_empty() {
        return 0.1;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let take = dists.len().min(k);
    dists[..take].iter().sum::<f64>() / take as f64
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn inverse_sigmoid(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// World covariance `Sigma = (R S)(R S)^T` from a (not necessarily unit)
/// quaternion and log scales. The quaternion is normalized here, matching
/// the gradient chain used in the backward pass.
pub fn covariance_from(rotation: &[f64; 4], log_scale: &Vector3<f64>) -> Matrix3<f64> {
    let l = covariance_factor(rotation, log_scale);
    l * l.transpose()
}

/// The factor `L = R S` with the quaternion normalized.
pub fn covariance_factor(rotation: &[f64; 4], log_scale: &Vector3<f64>) -> Matrix3<f64> {
    let n = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = [
        rotation[0] / n,
        rotation[1] / n,
        rotation[2] / n,
        rotation[3] / n,
    ];
    let r = quat_to_rotation(&q);
    let s = log_scale.map(f64::exp);
    Matrix3::from_columns(&[r.column(0) * s.x, r.column(1) * s.y, r.column(2) * s.z])
}

/// Thresholds controlling adaptive density control.
#[derive(Debug, Clone)]
pub struct DensifyParams {
    /// Mean accumulated image-space positional gradient norm above which a
    /// Gaussian is under-reconstructing and gets cloned or split.
    pub grad_threshold: f64,
    /// Opacity below which a Gaussian is removed.
    pub opacity_threshold: f64,
    /// World-space standard deviation above which a candidate is split into
    /// two smaller Gaussians instead of cloned.
    pub scale_split_threshold: f64,
    /// Hard cap on scene size; candidates are admitted by descending
    /// gradient magnitude until the cap is reached.
    pub max_gaussians: usize,
}

/// Provenance of each row of the scene after [`densify_and_prune`], in the
/// new row order. Lets the optimizer carry its per-row state across the
/// resize (fresh rows start with zeroed moments).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Kept { old: usize },
    Cloned { from: usize },
    SplitChild { from: usize },
}

/// Scale shrink factor applied to both children of a split.
pub const SPLIT_SCALE_SHRINK: f64 = 1.6;

/// Adaptive density control: prunes low-opacity Gaussians, clones small
/// high-gradient ones in place, and splits large high-gradient ones into two
/// children offset by half a standard deviation along the major axis.
///
/// `mean_grad2d[i]` is the per-Gaussian positional gradient statistic
/// (accumulated image-space gradient norm divided by the number of
/// observations). The split offset is deterministic, so density control
/// consumes no randomness.
///
/// Row order of the result: survivors in original order, then clones, then
/// split children (each group in original-index order).
pub fn densify_and_prune(
    scene: &mut SceneModel,
    mean_grad2d: &[f64],
    params: &DensifyParams,
) -> Vec<RowSource> {
    assert_eq!(mean_grad2d.len(), scene.len());
    let n = scene.len();
    let prune: Vec<bool> = scene
        .gaussians
        .iter()
        .map(|g| g.opacity() < params.opacity_threshold)
        .collect();

    // Candidate selection under the size cap, by descending gradient.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| !prune[i] && mean_grad2d[i] >= params.grad_threshold)
        .collect();
    candidates.sort_by(|&a, &b| {
        mean_grad2d[b]
            .partial_cmp(&mean_grad2d[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let surviving = (0..n).filter(|&i| !prune[i]).count();
    // Every admitted candidate grows the scene by exactly one row (clone:
    // +1; split: -1 parent, +2 children).
    let budget = params.max_gaussians.saturating_sub(surviving);
    candidates.truncate(budget);

    let mut is_clone = vec![false; n];
    let mut is_split = vec![false; n];
    for &i in &candidates {
        let max_scale = scene.gaussians[i].scales().max();
        if max_scale > params.scale_split_threshold {
            is_split[i] = true;
        } else {
            is_clone[i] = true;
        }
    }

    let mut rows = Vec::with_capacity(scene.len() + candidates.len());
    let mut sources = Vec::with_capacity(scene.len() + candidates.len());
    for (i, g) in scene.gaussians.iter().enumerate() {
        if prune[i] || is_split[i] {
            continue;
        }
        rows.push(g.clone());
        sources.push(RowSource::Kept { old: i });
    }
    for i in 0..n {
        if is_clone[i] {
            rows.push(scene.gaussians[i].clone());
            sources.push(RowSource::Cloned { from: i });
        }
    }
    for (i, g) in scene.gaussians.iter().enumerate() {
        if !is_split[i] {
            continue;
        }
        let scales = g.scales();
        let axis = scales.imax();
        let q = normalized_quat(&g.rotation);
        let dir = quat_to_rotation(&q).column(axis).into_owned();
        let offset = dir * (0.5 * scales[axis]);
        let child_log_scale = g.log_scale.map(|s| s - SPLIT_SCALE_SHRINK.ln());
        for sign in [1.0, -1.0] {
            let mut child = g.clone();
            child.position = g.position + offset * sign;
            child.log_scale = child_log_scale;
            rows.push(child);
            sources.push(RowSource::SplitChild { from: i });
        }
    }
    scene.gaussians = rows;
    sources
}

fn normalized_quat(q: &[f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Number of `f_rest_*` slots in the interchange PLY layout (degree 3, three
/// channels, DC excluded).
const PLY_REST_COEFFS: usize = 45;

/// Writes the scene in the binary PLY layout understood by common
/// Gaussian-splat viewers: little-endian `float` properties
/// `x y z, nx ny nz` (normals zeroed), `f_dc_0..2`, `f_rest_0..44`
/// (channel-major: all red coefficients, then green, then blue),
/// `opacity` (logit), `scale_0..2` (log scales), `rot_0..3` (`w x y z`).
///
/// Scenes stored at lower SH degree pad the remaining slots with zeros.
pub fn export_ply<W: std::io::Write>(scene: &SceneModel, w: &mut W) -> std::io::Result<()> {
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", scene.len()));
    let mut props: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    props.extend((0..3).map(|i| format!("f_dc_{i}")));
    props.extend((0..PLY_REST_COEFFS).map(|i| format!("f_rest_{i}")));
    props.push("opacity".into());
    props.extend((0..3).map(|i| format!("scale_{i}")));
    props.extend((0..4).map(|i| format!("rot_{i}")));
    for p in &props {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;

    let mut row = Vec::with_capacity(props.len());
    for g in &scene.gaussians {
        row.clear();
        row.extend(g.position.iter().map(|v| *v as f32));
        row.extend([0.0f32; 3]); // normals, unused
        for ch in 0..3 {
            row.push(g.sh[0][ch] as f32);
        }
        for ch in 0..3 {
            for m in 1..=PLY_REST_COEFFS / 3 {
                row.push(g.sh.get(m).map_or(0.0, |t| t[ch] as f32));
            }
        }
        row.push(g.opacity_logit as f32);
        row.extend(g.log_scale.iter().map(|v| *v as f32));
        row.extend(g.rotation.iter().map(|v| *v as f32));
        for v in &row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn export_ply_file(scene: &SceneModel, path: &std::path::Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    export_ply(scene, &mut f)
}
