//! Synthetic fisheye datasets: analytically ray-traced spheres, camera
//! rigs, and export in the sparse-reconstruction layout the pipeline
//! ingests. The ray tracer is the ground-truth oracle for end-to-end
//! reconstruction tests: it shares no code with the splat rasterizer
//! beyond the camera model.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{CameraError, CameraPose, FisheyeIntrinsics};
use crate::colmap::{self, ColmapError, SfmImage, SfmModel, SfmPoint};
use crate::img::{Image, ImgError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Image(#[from] ImgError),
    #[error("camera rig is empty")]
    EmptyRig,
    #[error("sphere radius must be positive, got {0}")]
    BadRadius(f64),
}

#[derive(Debug, Clone)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub color: [f64; 3],
}

/// One rig camera: pose plus intrinsics.
#[derive(Debug, Clone)]
pub struct RigView {
    pub pose: CameraPose,
    pub intr: FisheyeIntrinsics,
}

/// Flat-shaded spheres plus the cameras observing them.
#[derive(Debug, Clone)]
pub struct SphereScene {
    pub spheres: Vec<Sphere>,
    pub background: [f64; 3],
    pub rig: Vec<RigView>,
}

impl SphereScene {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.rig.is_empty() {
            return Err(SynthError::EmptyRig);
        }
        for s in &self.spheres {
            if !(s.radius > 0.0) {
                return Err(SynthError::BadRadius(s.radius));
            }
        }
        Ok(())
    }
}

/// Supersampling grid per pixel axis (4x4 samples, box filtered).
const SUPERSAMPLE: usize = 4;

/// Cameras evenly spaced on a circle of `radius` around `target` at height
/// offset `height`, all looking at the target.
pub fn ring_rig(
    count: usize,
    radius: f64,
    height: f64,
    target: Vector3<f64>,
    intr: &FisheyeIntrinsics,
) -> Result<Vec<RigView>, CameraError> {
    (0..count)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / count as f64;
            let eye = target + Vector3::new(radius * phi.cos(), radius * phi.sin(), height);
            Ok(RigView {
                pose: CameraPose::look_at(eye, target)?,
                intr: intr.clone(),
            })
        })
        .collect()
}

/// Cameras on the upper hemisphere of radius `radius` around `target`,
/// placed by the Fibonacci lattice (deterministic, near-uniform), all
/// looking at the target.
pub fn hemisphere_rig(
    count: usize,
    radius: f64,
    target: Vector3<f64>,
    intr: &FisheyeIntrinsics,
) -> Result<Vec<RigView>, CameraError> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = (i as f64 + 0.5) / count as f64; // uniform area in z
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = Vector3::new(rho * phi.cos(), rho * phi.sin(), z);
            let eye = target + radius * dir;
            Ok(RigView {
                pose: CameraPose::look_at(eye, target)?,
                intr: intr.clone(),
            })
        })
        .collect()
}

/// Nearest positive ray-sphere intersection distance, if any.
fn ray_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, sphere: &Sphere) -> Option<f64> {
    let oc = origin - sphere.center;
    let b = oc.dot(dir);
    let c = oc.dot(&oc) - sphere.radius * sphere.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    const T_MIN: f64 = 1e-9;
    let t1 = -b - sq;
    if t1 > T_MIN {
        return Some(t1);
    }
    let t2 = -b + sq;
    (t2 > T_MIN).then_some(t2)
}

fn nearest_hit(scene: &SphereScene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scene.spheres.iter().enumerate() {
        if let Some(t) = ray_sphere(origin, dir, s) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Ground-truth render of one rig view: per pixel, 4x4 supersampled rays
/// are unprojected through the fisheye model, intersected analytically
/// with every sphere, and flat-shaded with the nearest hit's color.
/// Out-of-view rays shade as background.
pub fn oracle_render(scene: &SphereScene, view: usize) -> Image {
    let rv = &scene.rig[view];
    let (w, h) = (rv.intr.width as usize, rv.intr.height as usize);
    let origin = rv.pose.camera_center();
    let rot_t = rv.pose.rotation.transpose();
    let inv_n = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;

    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0.0f64; w * 3];
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        let color = match rv.intr.unproject(&nalgebra::Vector2::new(px, py)) {
                            Ok(dir_cam) => {
                                let dir_world = rot_t * dir_cam;
                                match nearest_hit(scene, &origin, &dir_world) {
                                    Some(i) => scene.spheres[i].color,
                                    None => scene.background,
                                }
                            }
                            Err(_) => scene.background,
                        };
                        for ch in 0..3 {
                            acc[ch] += color[ch];
                        }
                    }
                }
                for ch in 0..3 {
                    row[x * 3 + ch] = acc[ch] * inv_n;
                }
            }
            row
        })
        .collect();

    let mut img = Image::new(w, h);
    for (y, row) in rows.iter().enumerate() {
        img.data[y * w * 3..(y + 1) * w * 3].copy_from_slice(row);
    }
    img
}

/// Whether a world point is visible from a rig view: inside the field of
/// view, inside the image bounds, and not occluded by any sphere.
pub(crate) fn point_visible(scene: &SphereScene, view: &RigView, p: &Vector3<f64>) -> bool {
    let campt = view.pose.world_to_camera(p);
    let Ok(pixel) = view.intr.project(&campt) else {
        return false;
    };
    if pixel.x < 0.0
        || pixel.y < 0.0
        || pixel.x >= view.intr.width as f64
        || pixel.y >= view.intr.height as f64
    {
        return false;
    }
    let origin = view.pose.camera_center();
    let to_p = p - origin;
    let dist = to_p.norm();
    if dist < 1e-12 {
        return false;
    }
    let dir = to_p / dist;
    for s in &scene.spheres {
        if let Some(t) = ray_sphere(&origin, &dir, s) {
            // A hit strictly in front of the point occludes it; the
            // point's own surface registers at t == dist.
            if t < dist * (1.0 - 1e-9) {
                return false;
            }
        }
    }
    true
}

/// Deterministic near-uniform samples on a sphere surface (Fibonacci).
fn sphere_surface_samples(sphere: &Sphere, count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            sphere.center + sphere.radius * Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Renders every rig view to `dir/images/`, writes the sparse
/// reconstruction (`cameras.txt`, `images.txt`, `points3D.txt`) plus a
/// flat `intrinsics.txt`, and returns the model. Feature tracks come from
/// `points_per_sphere` surface samples per sphere, each listing exactly
/// the views where the sample is unoccluded and in view; samples seen by
/// fewer than two views are dropped.
pub fn export_as_dataset(
    scene: &SphereScene,
    dir: &Path,
    points_per_sphere: usize,
) -> Result<SfmModel, SynthError> {
    scene.validate()?;
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|source| SynthError::Io {
        path: images_dir.clone(),
        source,
    })?;

    let mut model = SfmModel::default();

    // Deduplicate identical intrinsics into shared camera records.
    let mut camera_ids: Vec<u32> = Vec::with_capacity(scene.rig.len());
    for rv in &scene.rig {
        let key = colmap::intrinsics_to_text(&rv.intr);
        let found = model
            .cameras
            .iter()
            .find(|(_, c)| colmap::intrinsics_to_text(c) == key)
            .map(|(&id, _)| id);
        let id = match found {
            Some(id) => id,
            None => {
                let id = model.cameras.len() as u32 + 1;
                model.cameras.insert(id, rv.intr.clone());
                id
            }
        };
        camera_ids.push(id);
    }

    for (i, rv) in scene.rig.iter().enumerate() {
        let name = format!("images/view_{i:03}.png");
        let img = oracle_render(scene, i);
        crate::img::save_png(&img, &dir.join(&name))?;
        model.images.insert(
            i as u32 + 1,
            SfmImage {
                pose: rv.pose.clone(),
                camera_id: camera_ids[i],
                name,
            },
        );
    }

    let mut next_point = 1u64;
    for sphere in &scene.spheres {
        for p in sphere_surface_samples(sphere, points_per_sphere) {
            let track: Vec<u32> = scene
                .rig
                .iter()
                .enumerate()
                .filter(|(_, rv)| point_visible(scene, rv, &p))
                .map(|(i, _)| i as u32 + 1)
                .collect();
            if track.len() < 2 {
                continue;
            }
            model.points.insert(
                next_point,
                SfmPoint {
                    position: p,
                    rgb: sphere.color,
                    track,
                },
            );
            next_point += 1;
        }
    }

    colmap::write_colmap_text(dir, &model)?;
    let intr_path = dir.join("intrinsics.txt");
    std::fs::write(&intr_path, colmap::intrinsics_to_text(&scene.rig[0].intr)).map_err(
        |source| SynthError::Io {
            path: intr_path,
            source,
        },
    )?;
    Ok(model)
}
