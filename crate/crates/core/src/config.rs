//! Run configuration (TOML) and the run manifest.
//!
//! A single optional TOML file drives the whole pipeline; every field has a
//! default, unknown keys are rejected, and the parsed configuration converts
//! into the typed parameter structs of the other modules. Each command also
//! writes a manifest recording what ran, with which inputs, and what it
//! produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::FisheyeIntrinsics;
use crate::synth::{hemisphere_rig, ring_rig, Sphere, SphereScene};
use crate::train::{DensifySchedule, LearningRates, Strategy, TrainParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Top-level configuration. Every section and field is optional in the
/// file; omitted values take the defaults below.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub camera: CameraConfig,
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub train: TrainConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// The full default configuration as a commented-free TOML document,
    /// suitable as a starting point for editing.
    pub fn default_toml() -> String {
        toml::to_string_pretty(&Config::default()).expect("default config serializes")
    }
}

/// Fisheye camera shared by the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels. Omitted: chosen so the full field of view
    /// just fits inside the shorter image side.
    pub fx: Option<f64>,
    /// Defaults to `fx`.
    pub fy: Option<f64>,
    /// Principal point; defaults to the image center.
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    /// Radial distortion coefficients of the angle polynomial.
    pub k: [f64; 4],
    /// Half field of view in degrees.
    pub theta_max_deg: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
            k: [0.0; 4],
            theta_max_deg: 100.0,
        }
    }
}

impl CameraConfig {
    pub fn to_intrinsics(&self) -> Result<FisheyeIntrinsics, ConfigError> {
        if self.width == 0 || self.height == 0 {
            return Err(ConfigError::Invalid(format!(
                "camera resolution {}x{} is empty",
                self.width, self.height
            )));
        }
        let theta_max = self.theta_max_deg.to_radians();
        if !(theta_max > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "theta_max_deg must be positive, got {}",
                self.theta_max_deg
            )));
        }
        let half = f64::from(self.width.min(self.height)) / 2.0;
        let fx = self.fx.unwrap_or((half - 0.5) / theta_max);
        let fy = self.fy.unwrap_or(fx);
        let cx = self.cx.unwrap_or(f64::from(self.width) / 2.0);
        let cy = self.cy.unwrap_or(f64::from(self.height) / 2.0);
        FisheyeIntrinsics::new(
            fx,
            fy,
            cx,
            cy,
            self.k,
            self.width,
            self.height,
            theta_max,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// One flat-shaded sphere of the synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub color: [f64; 3],
}

/// Camera arrangement of the synthetic rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    Ring,
    Hemisphere,
}

/// Synthetic dataset: scene content and rig geometry. The defaults describe
/// a three-sphere scene built to exercise the whole fisheye field: a large
/// anchor sphere at the origin that every camera sees near its image
/// center, a small sphere riding close to the camera shell so that nearby
/// cameras catch it only far off-axis (past 60 degrees) while cameras
/// across the rig see it centrally, and a mid-field sphere on the opposite
/// azimuth for balance. Content beyond 60 degrees is what separates a
/// fisheye-native reconstruction from one that only ever fits the
/// near-pinhole core of the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub spheres: Vec<SphereSpec>,
    pub background: [f64; 3],
    pub rig: RigKind,
    pub views: usize,
    /// Distance of the cameras from the target.
    pub rig_radius: f64,
    /// Height offset of the ring rig (ignored by the hemisphere rig).
    pub rig_height: f64,
    pub target: [f64; 3],
    /// Surface samples per sphere used to seed the point cloud.
    pub points_per_sphere: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            spheres: vec![
                SphereSpec {
                    center: [0.0, 0.0, 0.0],
                    radius: 0.55,
                    color: [0.85, 0.25, 0.20],
                },
                // Rim sphere: at 95% of the rig radius, low-elevation
                // cameras on its side of the rig see it 65-75 degrees
                // off-axis, i.e. genuinely in the fisheye periphery.
                SphereSpec {
                    center: [1.32, 0.93, 0.04],
                    radius: 0.25,
                    color: [0.20, 0.65, 0.85],
                },
                SphereSpec {
                    center: [-0.62, -0.78, 0.22],
                    radius: 0.26,
                    color: [0.95, 0.80, 0.25],
                },
            ],
            background: [0.06, 0.06, 0.08],
            rig: RigKind::Hemisphere,
            views: 16,
            rig_radius: 1.7,
            rig_height: 0.6,
            target: [0.0, 0.0, 0.0],
            points_per_sphere: 250,
        }
    }
}

impl SynthConfig {
    pub fn to_scene(&self, camera: &CameraConfig) -> Result<SphereScene, ConfigError> {
        let intr = camera.to_intrinsics()?;
        let target = Vector3::from(self.target);
        let rig = match self.rig {
            RigKind::Ring => ring_rig(self.views, self.rig_radius, self.rig_height, target, &intr),
            RigKind::Hemisphere => hemisphere_rig(self.views, self.rig_radius, target, &intr),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let scene = SphereScene {
            spheres: self
                .spheres
                .iter()
                .map(|s| Sphere {
                    center: Vector3::from(s.center),
                    radius: s.radius,
                    color: s.color,
                })
                .collect(),
            background: self.background,
            rig,
        };
        scene
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(scene)
    }
}

/// View-association graph construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Covisible neighbors retained per camera before the angle re-ranking.
    pub keep_k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { keep_k: 8 }
    }
}

/// Optimization settings; mirrors the trainer's parameter struct plus the
/// initial SH degree of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u32,
    /// One of `single`, `random_select`, `graph`.
    pub strategy: String,
    pub views_per_step: usize,
    pub lambda_ssim: f64,
    pub seed: u64,
    pub background: [f64; 3],
    pub near: f64,
    /// SH degree the scene is allocated with (bands unlock during training).
    pub sh_degree: usize,
    pub sh_raise_every: u32,
    pub holdout_every: usize,
    pub eval_every: u32,
    pub checkpoint_every: u32,
    pub lr: LrConfig,
    pub densify: DensifyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        Self {
            iterations: p.iterations,
            strategy: p.strategy.to_string(),
            views_per_step: p.views_per_step,
            lambda_ssim: p.lambda_ssim,
            seed: p.seed,
            background: [0.06, 0.06, 0.08],
            near: p.near,
            sh_degree: 3,
            sh_raise_every: p.sh_raise_every,
            holdout_every: p.holdout_every,
            eval_every: 100,
            checkpoint_every: 0,
            lr: LrConfig::default(),
            densify: DensifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub position_start: f64,
    pub position_end: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub log_scale: f64,
    pub rotation: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        let lr = LearningRates::default();
        Self {
            position_start: lr.position_start,
            position_end: lr.position_end,
            sh_dc: lr.sh_dc,
            sh_rest: lr.sh_rest,
            opacity: lr.opacity,
            log_scale: lr.log_scale,
            rotation: lr.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub start: u32,
    pub stop: u32,
    pub every: u32,
    pub grad_threshold: f64,
    pub opacity_threshold: f64,
    pub scale_split_ratio: f64,
    pub max_gaussians: usize,
    pub opacity_reset_every: u32,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        let d = DensifySchedule::default();
        Self {
            start: d.start,
            stop: d.stop,
            every: d.every,
            grad_threshold: d.grad_threshold,
            opacity_threshold: d.opacity_threshold,
            scale_split_ratio: d.scale_split_ratio,
            max_gaussians: d.max_gaussians,
            opacity_reset_every: d.opacity_reset_every,
        }
    }
}

impl TrainConfig {
    pub fn to_params(&self) -> Result<TrainParams, ConfigError> {
        let strategy: Strategy = self
            .strategy
            .parse()
            .map_err(ConfigError::Invalid)?;
        if self.sh_degree > 3 {
            return Err(ConfigError::Invalid(format!(
                "sh_degree must be at most 3, got {}",
                self.sh_degree
            )));
        }
        Ok(TrainParams {
            iterations: self.iterations,
            strategy,
            views_per_step: self.views_per_step,
            lambda_ssim: self.lambda_ssim,
            seed: self.seed,
            background: self.background,
            near: self.near,
            sh_raise_every: self.sh_raise_every,
            holdout_every: self.holdout_every,
            eval_every: self.eval_every,
            lr: LearningRates {
                position_start: self.lr.position_start,
                position_end: self.lr.position_end,
                sh_dc: self.lr.sh_dc,
                sh_rest: self.lr.sh_rest,
                opacity: self.lr.opacity,
                log_scale: self.lr.log_scale,
                rotation: self.lr.rotation,
            },
            densify: DensifySchedule {
                start: self.densify.start,
                stop: self.densify.stop,
                every: self.densify.every,
                grad_threshold: self.densify.grad_threshold,
                opacity_threshold: self.densify.opacity_threshold,
                scale_split_ratio: self.densify.scale_split_ratio,
                max_gaussians: self.densify.max_gaussians,
                opacity_reset_every: self.densify.opacity_reset_every,
            },
        })
    }
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    /// The subcommand that ran.
    pub command: String,
    /// Crate version that produced the outputs.
    pub version: String,
    pub seed: u64,
    /// Worker threads the run used.
    pub workers: usize,
    /// Wall-clock timings per phase, seconds.
    pub timings_sec: BTreeMap<String, f64>,
    /// Files the run produced, relative to the manifest.
    pub outputs: Vec<String>,
    /// Free-form remarks (deviations, fallbacks, warnings).
    pub notes: Vec<String>,
    /// The effective configuration.
    pub config: Config,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: Config) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            workers: rayon::current_num_threads(),
            timings_sec: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            config,
        }
    }

    /// Serializes to TOML and atomically replaces `path`.
    pub fn write(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut tmp_name = path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| ConfigError::Io { path: p, source }
        };
        std::fs::write(&tmp, text).map_err(io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io(path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configuration_round_trips_through_toml() {
        let config = Config::default();
        let text = Config::default_toml();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_file_fills_in_defaults() {
        let text = "[train]\niterations = 50\nseed = 9\n";
        let config: Config = toml::from_str(text).unwrap();
        assert_eq!(config.train.iterations, 50);
        assert_eq!(config.train.seed, 9);
        assert_eq!(config.train.strategy, "single");
        assert_eq!(config.camera, CameraConfig::default());
        assert_eq!(config.synth.views, 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[train]\nitertions = 50\n";
        assert!(toml::from_str::<Config>(text).is_err());
        let text = "[trian]\niterations = 50\n";
        assert!(toml::from_str::<Config>(text).is_err());
    }

    #[test]
    fn load_reports_parse_errors_with_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[camera\nwidth = 3").unwrap();
        match Config::load(&path) {
            Err(ConfigError::Parse { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected a parse error, got {other:?}"),
        }
        assert!(matches!(
            Config::load(&dir.path().join("missing.toml")),
            Err(ConfigError::Io { .. })
        ));
    }

    #[test]
    fn default_camera_fits_the_field_of_view_inside_the_image() {
        let intr = CameraConfig::default().to_intrinsics().unwrap();
        // The most distorted ray still projects inside the image.
        let theta = intr.theta_max;
        let r = intr.fx * theta; // no distortion in the default camera
        assert!(r <= f64::from(intr.width) / 2.0, "r = {r}");
        assert!(r >= f64::from(intr.width) / 2.0 - 1.0, "r = {r}");
    }

    #[test]
    fn camera_overrides_take_precedence() {
        let config = CameraConfig {
            fx: Some(40.0),
            fy: Some(41.0),
            cx: Some(60.0),
            ..CameraConfig::default()
        };
        let intr = config.to_intrinsics().unwrap();
        assert_eq!(intr.fx, 40.0);
        assert_eq!(intr.fy, 41.0);
        assert_eq!(intr.cx, 60.0);
        assert_eq!(intr.cy, 64.0);

        let bad = CameraConfig {
            width: 0,
            ..CameraConfig::default()
        };
        assert!(bad.to_intrinsics().is_err());
    }

    #[test]
    fn synth_config_builds_a_valid_scene() {
        let config = Config::default();
        let scene = config.synth.to_scene(&config.camera).unwrap();
        assert_eq!(scene.rig.len(), 16);
        assert_eq!(scene.spheres.len(), 3);
        scene.validate().unwrap();
        // The rim sphere sits close to the camera shell, so near cameras see
        // it far from the optical axis.
        let span = scene.spheres[1].center.norm() + scene.spheres[1].radius;
        assert!(span / config.synth.rig_radius > 0.9);
        // ... but no camera is inside or touching any sphere.
        for rv in &scene.rig {
            let eye = rv.pose.camera_center();
            for s in &scene.spheres {
                let clearance = (eye - s.center).norm() - s.radius;
                assert!(clearance > 0.3, "camera within {clearance} of a sphere");
            }
        }

        let ring = SynthConfig {
            rig: RigKind::Ring,
            views: 6,
            ..config.synth.clone()
        };
        assert_eq!(ring.to_scene(&config.camera).unwrap().rig.len(), 6);
    }

    #[test]
    fn default_scene_has_content_in_the_fisheye_periphery() {
        // Views 0 and 8 double as held-out views under the every-eighth
        // holdout used by the end-to-end tests. They must see sphere content
        // well past 60 degrees off-axis, otherwise peripheral quality
        // metrics degenerate into comparing background pixels.
        let config = Config::default();
        let scene = config.synth.to_scene(&config.camera).unwrap();
        let theta_lo = 60f64.to_radians();
        for view in [0usize, 8] {
            let rv = &scene.rig[view];
            let img = crate::synth::oracle_render(&scene, view);
            let mut peripheral = 0usize;
            for y in 0..img.height {
                for x in 0..img.width {
                    let px = nalgebra::Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let Ok(dir) = rv.intr.unproject(&px) else {
                        continue;
                    };
                    if dir.xy().norm().atan2(dir.z) <= theta_lo {
                        continue;
                    }
                    let c = img.get(x, y);
                    let off = (0..3).any(|ch| (c[ch] - scene.background[ch]).abs() > 0.05);
                    if off {
                        peripheral += 1;
                    }
                }
            }
            assert!(
                peripheral >= 100,
                "view {view}: only {peripheral} non-background pixels past 60 degrees"
            );
        }
    }

    #[test]
    fn train_config_converts_to_parameters() {
        let mut config = TrainConfig::default();
        config.strategy = "graph".to_string();
        config.iterations = 77;
        let params = config.to_params().unwrap();
        assert_eq!(params.strategy, Strategy::Graph);
        assert_eq!(params.iterations, 77);
        assert_eq!(params.lr.position_start, 1.6e-4);
        assert_eq!(params.densify.every, 100);

        config.strategy = "closest".to_string();
        assert!(matches!(config.to_params(), Err(ConfigError::Invalid(_))));

        config.strategy = "single".to_string();
        config.sh_degree = 4;
        assert!(matches!(config.to_params(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn manifest_round_trips_and_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");

        let mut manifest = RunManifest::new("synth", 7, Config::default());
        manifest.timings_sec.insert("render".into(), 1.25);
        manifest.outputs.push("images/view_000.png".into());
        manifest.notes.push("first note".into());
        manifest.write(&path).unwrap();

        let back: RunManifest =
            toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.command, "synth");
        assert_eq!(back.seed, 7);
        assert_eq!(back.timings_sec["render"], 1.25);
        assert_eq!(back.outputs, manifest.outputs);
        assert_eq!(back.config, manifest.config);
        assert!(!back.version.is_empty());

        // Overwriting leaves no temporary file behind.
        manifest.notes.push("second note".into());
        manifest.write(&path).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
        let again: RunManifest =
            toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(again.notes.len(), 2);
    }
}
