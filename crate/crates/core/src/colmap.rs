//! COLMAP text-format sparse reconstructions: `cameras.txt`, `images.txt`,
//! `points3D.txt`. Reads OPENCV_FISHEYE and PINHOLE camera records, poses
//! in COLMAP's world-to-camera quaternion convention, and 3D points with
//! their feature tracks (the covisibility source for the camera graph).
//! Also writes the same layout, so synthetic datasets round-trip through
//! the standard pipeline entry point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::camera::{CameraError, CameraPose, FisheyeIntrinsics};

#[derive(Debug, Error)]
pub enum ColmapError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{file}:{line}: unsupported camera model {model} (expected OPENCV_FISHEYE or PINHOLE)")]
    UnsupportedModel {
        file: String,
        line: usize,
        model: String,
    },
    #[error("{file}:{line}: {msg}")]
    DanglingReference {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{file}:{line}: invalid camera or pose: {source}")]
    Invalid {
        file: String,
        line: usize,
        #[source]
        source: CameraError,
    },
}

/// One registered image: pose (world-to-camera), owning camera, file name.
#[derive(Debug, Clone)]
pub struct SfmImage {
    pub pose: CameraPose,
    pub camera_id: u32,
    pub name: String,
}

/// One triangulated point with the IDs of the images observing it.
#[derive(Debug, Clone)]
pub struct SfmPoint {
    pub position: Vector3<f64>,
    /// Stored color, [0, 1] per channel.
    pub rgb: [f64; 3],
    pub track: Vec<u32>,
}

/// A sparse reconstruction: everything training needs besides the pixels.
#[derive(Debug, Clone, Default)]
pub struct SfmModel {
    pub cameras: BTreeMap<u32, FisheyeIntrinsics>,
    pub images: BTreeMap<u32, SfmImage>,
    pub points: BTreeMap<u64, SfmPoint>,
}

/// Half field of view assigned to PINHOLE records (which carry no
/// distortion and cannot represent >= 90 degrees).
pub const PINHOLE_THETA_MAX: f64 = 89.0 * std::f64::consts::PI / 180.0;

/// Loads `cameras.txt`, `images.txt`, and `points3D.txt` from `dir`.
pub fn load_colmap_text(dir: &Path) -> Result<SfmModel, ColmapError> {
    let read = |name: &str| -> Result<String, ColmapError> {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|source| ColmapError::Io { path, source })
    };
    let mut model = SfmModel::default();
    parse_cameras(&read("cameras.txt")?, &mut model)?;
    parse_images(&read("images.txt")?, &mut model)?;
    parse_points(&read("points3D.txt")?, &mut model)?;
    Ok(model)
}

fn perr(file: &str, line: usize, msg: impl Into<String>) -> ColmapError {
    ColmapError::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn tok<T: std::str::FromStr>(
    file: &str,
    line: usize,
    field: &str,
    s: Option<&str>,
) -> Result<T, ColmapError> {
    let s = s.ok_or_else(|| perr(file, line, format!("missing field {field}")))?;
    s.parse()
        .map_err(|_| perr(file, line, format!("invalid {field}: {s:?}")))
}

fn parse_cameras(text: &str, model: &mut SfmModel) -> Result<(), ColmapError> {
    const F: &str = "cameras.txt";
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let id: u32 = tok(F, lineno, "CAMERA_ID", it.next())?;
        let model_name = it
            .next()
            .ok_or_else(|| perr(F, lineno, "missing MODEL"))?;
        let width: u32 = tok(F, lineno, "WIDTH", it.next())?;
        let height: u32 = tok(F, lineno, "HEIGHT", it.next())?;
        let mut params = Vec::new();
        for (n, s) in it.enumerate() {
            params.push(tok::<f64>(F, lineno, &format!("PARAMS[{n}]"), Some(s))?);
        }
        let (k, theta_max, expected) = match model_name {
            "OPENCV_FISHEYE" => (
                [0.0; 4],
                FisheyeIntrinsics::DEFAULT_THETA_MAX,
                8usize,
            ),
            "PINHOLE" => ([0.0; 4], PINHOLE_THETA_MAX, 4usize),
            other => {
                return Err(ColmapError::UnsupportedModel {
                    file: F.into(),
                    line: lineno,
                    model: other.to_string(),
                })
            }
        };
        if params.len() != expected {
            return Err(perr(
                F,
                lineno,
                format!("{model_name} expects {expected} params, got {}", params.len()),
            ));
        }
        let k = if model_name == "OPENCV_FISHEYE" {
            [params[4], params[5], params[6], params[7]]
        } else {
            k
        };
        let intr = FisheyeIntrinsics::new(
            params[0], params[1], params[2], params[3], k, width, height, theta_max,
        )
        .map_err(|source| ColmapError::Invalid {
            file: F.into(),
            line: lineno,
            source,
        })?;
        if model.cameras.insert(id, intr).is_some() {
            return Err(perr(F, lineno, format!("duplicate camera ID {id}")));
        }
    }
    Ok(())
}

fn parse_images(text: &str, model: &mut SfmModel) -> Result<(), ColmapError> {
    const F: &str = "images.txt";
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            i += 1;
            continue;
        }
        let mut it = line.split_whitespace();
        let id: u32 = tok(F, lineno, "IMAGE_ID", it.next())?;
        let qw: f64 = tok(F, lineno, "QW", it.next())?;
        let qx: f64 = tok(F, lineno, "QX", it.next())?;
        let qy: f64 = tok(F, lineno, "QY", it.next())?;
        let qz: f64 = tok(F, lineno, "QZ", it.next())?;
        let tx: f64 = tok(F, lineno, "TX", it.next())?;
        let ty: f64 = tok(F, lineno, "TY", it.next())?;
        let tz: f64 = tok(F, lineno, "TZ", it.next())?;
        let camera_id: u32 = tok(F, lineno, "CAMERA_ID", it.next())?;
        let name = it
            .next()
            .ok_or_else(|| perr(F, lineno, "missing NAME"))?
            .to_string();
        if !model.cameras.contains_key(&camera_id) {
            return Err(ColmapError::DanglingReference {
                file: F.into(),
                line: lineno,
                msg: format!("image {id} references unknown camera {camera_id}"),
            });
        }
        let pose = CameraPose::from_quaternion([qw, qx, qy, qz], Vector3::new(tx, ty, tz))
            .map_err(|source| ColmapError::Invalid {
                file: F.into(),
                line: lineno,
                source,
            })?;
        if model
            .images
            .insert(
                id,
                SfmImage {
                    pose,
                    camera_id,
                    name,
                },
            )
            .is_some()
        {
            return Err(perr(F, lineno, format!("duplicate image ID {id}")));
        }
        // The record's second line lists 2D observations as (X, Y,
        // POINT3D_ID) triplets; it may be empty but must exist.
        let Some(obs) = lines.get(i + 1) else {
            return Err(perr(F, lineno, format!("image {id}: missing observations line")));
        };
        let fields: Vec<&str> = obs.split_whitespace().collect();
        if fields.len() % 3 != 0 {
            return Err(perr(
                F,
                lineno + 1,
                format!("observations count {} is not a multiple of 3", fields.len()),
            ));
        }
        for (n, chunk) in fields.chunks(3).enumerate() {
            tok::<f64>(F, lineno + 1, &format!("X[{n}]"), Some(chunk[0]))?;
            tok::<f64>(F, lineno + 1, &format!("Y[{n}]"), Some(chunk[1]))?;
            tok::<i64>(F, lineno + 1, &format!("POINT3D_ID[{n}]"), Some(chunk[2]))?;
        }
        i += 2;
    }
    Ok(())
}

fn parse_points(text: &str, model: &mut SfmModel) -> Result<(), ColmapError> {
    const F: &str = "points3D.txt";
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 {
            return Err(perr(F, lineno, "expected at least 8 fields"));
        }
        let id: u64 = tok(F, lineno, "POINT3D_ID", Some(fields[0]))?;
        let x: f64 = tok(F, lineno, "X", Some(fields[1]))?;
        let y: f64 = tok(F, lineno, "Y", Some(fields[2]))?;
        let z: f64 = tok(F, lineno, "Z", Some(fields[3]))?;
        let r: u8 = tok(F, lineno, "R", Some(fields[4]))?;
        let g: u8 = tok(F, lineno, "G", Some(fields[5]))?;
        let b: u8 = tok(F, lineno, "B", Some(fields[6]))?;
        tok::<f64>(F, lineno, "ERROR", Some(fields[7]))?;
        let rest = &fields[8..];
        if rest.len() % 2 != 0 {
            return Err(perr(F, lineno, "track must be (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        let mut track = Vec::with_capacity(rest.len() / 2);
        for (n, pair) in rest.chunks(2).enumerate() {
            let image_id: u32 = tok(F, lineno, &format!("IMAGE_ID[{n}]"), Some(pair[0]))?;
            tok::<i64>(F, lineno, &format!("POINT2D_IDX[{n}]"), Some(pair[1]))?;
            if !model.images.contains_key(&image_id) {
                return Err(ColmapError::DanglingReference {
                    file: F.into(),
                    line: lineno,
                    msg: format!("point {id} track references unknown image {image_id}"),
                });
            }
            track.push(image_id);
        }
        let point = SfmPoint {
            position: Vector3::new(x, y, z),
            rgb: [r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0],
            track,
        };
        if model.points.insert(id, point).is_some() {
            return Err(perr(F, lineno, format!("duplicate point ID {id}")));
        }
    }
    Ok(())
}

/// Writes the model back out as COLMAP text (OPENCV_FISHEYE records, one
/// two-line image block each, tracks with zeroed 2D indices). Floats use
/// Rust's shortest round-trip formatting, so load(write(m)) == m.
pub fn write_colmap_text(dir: &Path, model: &SfmModel) -> Result<(), ColmapError> {
    std::fs::create_dir_all(dir).map_err(|source| ColmapError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, contents: String| -> Result<(), ColmapError> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|source| ColmapError::Io { path, source })
    };

    let mut cameras = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
    for (id, c) in &model.cameras {
        writeln!(
            cameras,
            "{id} OPENCV_FISHEYE {} {} {} {} {} {} {} {} {} {}",
            c.width, c.height, c.fx, c.fy, c.cx, c.cy, c.k[0], c.k[1], c.k[2], c.k[3]
        )
        .unwrap();
    }
    write("cameras.txt", cameras)?;

    let mut images = String::from("# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n");
    for (id, im) in &model.images {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            im.pose.rotation,
        ));
        let t = im.pose.translation;
        writeln!(
            images,
            "{id} {} {} {} {} {} {} {} {} {}\n",
            q.w, q.i, q.j, q.k, t.x, t.y, t.z, im.camera_id, im.name
        )
        .unwrap();
    }
    write("images.txt", images)?;

    let mut points = String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[]\n");
    for (id, p) in &model.points {
        let quant = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        write!(
            points,
            "{id} {} {} {} {} {} {} 0",
            p.position.x,
            p.position.y,
            p.position.z,
            quant(p.rgb[0]),
            quant(p.rgb[1]),
            quant(p.rgb[2])
        )
        .unwrap();
        for image_id in &p.track {
            write!(points, " {image_id} 0").unwrap();
        }
        points.push('\n');
    }
    write("points3D.txt", points)
}

/// Writes intrinsics as a flat `key = value` block (fx, fy, cx, cy, k1..k4,
/// width, height, theta_max).
pub fn intrinsics_to_text(intr: &FisheyeIntrinsics) -> String {
    format!(
        "fx = {}\nfy = {}\ncx = {}\ncy = {}\nk1 = {}\nk2 = {}\nk3 = {}\nk4 = {}\nwidth = {}\nheight = {}\ntheta_max = {}\n",
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.k[0],
        intr.k[1],
        intr.k[2],
        intr.k[3],
        intr.width,
        intr.height,
        intr.theta_max
    )
}

/// Parses the block written by [`intrinsics_to_text`]. Keys may appear in
/// any order; unknown keys are rejected.
pub fn intrinsics_from_text(text: &str) -> Result<FisheyeIntrinsics, ColmapError> {
    const F: &str = "intrinsics";
    let mut vals: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(F, i + 1, "expected key = value"))?;
        let key = key.trim();
        let value: f64 = tok(F, i + 1, key, Some(value.trim()))?;
        let known = [
            "fx", "fy", "cx", "cy", "k1", "k2", "k3", "k4", "width", "height", "theta_max",
        ];
        if !known.contains(&key) {
            return Err(perr(F, i + 1, format!("unknown key {key:?}")));
        }
        if vals.insert(key, value).is_some() {
            return Err(perr(F, i + 1, format!("duplicate key {key:?}")));
        }
    }
    let get = |key: &str| {
        vals.get(key)
            .copied()
            .ok_or_else(|| perr(F, 0, format!("missing key {key:?}")))
    };
    FisheyeIntrinsics::new(
        get("fx")?,
        get("fy")?,
        get("cx")?,
        get("cy")?,
        [get("k1")?, get("k2")?, get("k3")?, get("k4")?],
        get("width")? as u32,
        get("height")? as u32,
        get("theta_max")?,
    )
    .map_err(|source| ColmapError::Invalid {
        file: F.into(),
        line: 0,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use tempfile::tempdir;

    const MINIMAL_CAMERAS: &str =
        "# comment\n1 OPENCV_FISHEYE 640 480 300 300 320 240 0.05 -0.01 0.001 0\n";
    const MINIMAL_IMAGES: &str = "1 1 0 0 0 0.5 -0.25 2 1 images/a.png\n\n";
    const MINIMAL_POINTS: &str = "";

    fn write_fixture(dir: &Path, cameras: &str, images: &str, points: &str) {
        std::fs::write(dir.join("cameras.txt"), cameras).unwrap();
        std::fs::write(dir.join("images.txt"), images).unwrap();
        std::fs::write(dir.join("points3D.txt"), points).unwrap();
    }

    #[test]
    fn minimal_fixture_loads() {
        let dir = tempdir().unwrap();
        write_fixture(dir.path(), MINIMAL_CAMERAS, MINIMAL_IMAGES, MINIMAL_POINTS);
        let m = load_colmap_text(dir.path()).unwrap();
        assert_eq!(m.cameras.len(), 1);
        assert_eq!(m.images.len(), 1);
        assert!(m.points.is_empty());
        let im = &m.images[&1];
        assert_eq!(im.name, "images/a.png");
        assert_eq!(im.camera_id, 1);
        // Identity quaternion: pose rotation is the identity.
        assert_relative_eq!(im.pose.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(
            im.pose.translation,
            Vector3::new(0.5, -0.25, 2.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(m.cameras[&1].k[0], 0.05);
    }

    #[test]
    fn pinhole_maps_to_zero_distortion() {
        let dir = tempdir().unwrap();
        write_fixture(
            dir.path(),
            "1 PINHOLE 64 64 100 101 32 32\n",
            "",
            "",
        );
        let m = load_colmap_text(dir.path()).unwrap();
        let c = &m.cameras[&1];
        assert_eq!(c.k, [0.0; 4]);
        assert_relative_eq!(c.theta_max, PINHOLE_THETA_MAX);
        assert_eq!((c.fx, c.fy), (100.0, 101.0));
    }

    #[test]
    fn unsupported_model_is_named() {
        let dir = tempdir().unwrap();
        write_fixture(dir.path(), "1 SIMPLE_RADIAL 64 64 100 32 32 0.1\n", "", "");
        let err = load_colmap_text(dir.path()).unwrap_err();
        match err {
            ColmapError::UnsupportedModel { model, line, .. } => {
                assert_eq!(model, "SIMPLE_RADIAL");
                assert_eq!(line, 1);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        write_fixture(
            dir.path(),
            "# header\n\n1 OPENCV_FISHEYE 64 64 100 100 32 32 0 0 0 oops\n",
            "",
            "",
        );
        let err = load_colmap_text(dir.path()).unwrap_err();
        match err {
            ColmapError::Parse { line, file, .. } => {
                assert_eq!(line, 3);
                assert_eq!(file, "cameras.txt");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn dangling_camera_and_track_references_rejected() {
        let dir = tempdir().unwrap();
        write_fixture(
            dir.path(),
            MINIMAL_CAMERAS,
            "1 1 0 0 0 0 0 2 7 a.png\n\n",
            "",
        );
        assert!(matches!(
            load_colmap_text(dir.path()).unwrap_err(),
            ColmapError::DanglingReference { .. }
        ));

        write_fixture(
            dir.path(),
            MINIMAL_CAMERAS,
            MINIMAL_IMAGES,
            "5 0 0 1 200 10 10 0.1 1 0 99 0\n",
        );
        match load_colmap_text(dir.path()).unwrap_err() {
            ColmapError::DanglingReference { msg, .. } => assert!(msg.contains("99")),
            other => panic!("wrong error: {other}"),
        }
    }

    fn sample_model() -> SfmModel {
        let mut model = SfmModel::default();
        model.cameras.insert(
            1,
            FisheyeIntrinsics::new(
                120.0,
                118.0,
                64.0,
                63.5,
                [0.05, -0.01, 0.002, -0.0001],
                128,
                128,
                FisheyeIntrinsics::DEFAULT_THETA_MAX,
            )
            .unwrap(),
        );
        model.cameras.insert(
            2,
            FisheyeIntrinsics::new(
                90.0,
                90.0,
                32.0,
                32.0,
                [0.0; 4],
                64,
                64,
                PINHOLE_THETA_MAX,
            )
            .unwrap(),
        );
        for (i, eye) in [
            Vector3::new(2.0, 0.1, 1.0),
            Vector3::new(-1.5, 1.2, 0.7),
            Vector3::new(0.3, -2.0, 1.4),
        ]
        .iter()
        .enumerate()
        {
            let pose = CameraPose::look_at(*eye, Vector3::zeros()).unwrap();
            model.images.insert(
                i as u32 + 1,
                SfmImage {
                    pose,
                    camera_id: 1 + (i as u32 % 2),
                    name: format!("images/view_{i:03}.png"),
                },
            );
        }
        model.points.insert(
            10,
            SfmPoint {
                position: Vector3::new(0.1, 0.2, 0.3),
                rgb: [1.0, 0.0, 100.0 / 255.0],
                track: vec![1, 2, 3],
            },
        );
        model.points.insert(
            11,
            SfmPoint {
                position: Vector3::new(-0.4, 0.0, 0.9),
                rgb: [0.0, 1.0, 0.0],
                track: vec![2, 3],
            },
        );
        model
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempdir().unwrap();
        let model = sample_model();
        write_colmap_text(dir.path(), &model).unwrap();
        let back = load_colmap_text(dir.path()).unwrap();

        assert_eq!(back.cameras.len(), model.cameras.len());
        for (id, c) in &model.cameras {
            let b = &back.cameras[id];
            assert_eq!((b.fx, b.fy, b.cx, b.cy), (c.fx, c.fy, c.cx, c.cy));
            assert_eq!(b.k, c.k);
            assert_eq!((b.width, b.height), (c.width, c.height));
        }
        for (id, im) in &model.images {
            let b = &back.images[id];
            assert_eq!(b.name, im.name);
            assert_eq!(b.camera_id, im.camera_id);
            // Matrix -> quaternion -> matrix costs a couple of ulps.
            assert_relative_eq!(b.pose.rotation, im.pose.rotation, epsilon = 1e-12);
            assert_relative_eq!(b.pose.translation, im.pose.translation, epsilon = 1e-15);
        }
        for (id, p) in &model.points {
            let b = &back.points[id];
            assert_eq!(b.position, p.position);
            assert_eq!(b.rgb, p.rgb);
            assert_eq!(b.track, p.track);
        }
    }

    #[test]
    fn load_is_order_independent() {
        let dir = tempdir().unwrap();
        let model = sample_model();
        write_colmap_text(dir.path(), &model).unwrap();
        let a = load_colmap_text(dir.path()).unwrap();

        // Reverse record order in every file (keeping two-line image blocks
        // together) and reload.
        let reverse_simple = |name: &str| {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            let mut lines: Vec<&str> = text
                .lines()
                .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                .collect();
            lines.reverse();
            std::fs::write(dir.path().join(name), lines.join("\n") + "\n").unwrap();
        };
        reverse_simple("cameras.txt");
        reverse_simple("points3D.txt");
        let text = std::fs::read_to_string(dir.path().join("images.txt")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut blocks: Vec<(&str, &str)> = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            let t = lines[i].trim();
            if t.is_empty() || t.starts_with('#') {
                i += 1;
                continue;
            }
            blocks.push((lines[i], lines[i + 1]));
            i += 2;
        }
        blocks.reverse();
        let mut out = String::new();
        for (h, o) in blocks {
            out.push_str(h);
            out.push('\n');
            out.push_str(o);
            out.push('\n');
        }
        std::fs::write(dir.path().join("images.txt"), out).unwrap();

        let b = load_colmap_text(dir.path()).unwrap();
        assert_eq!(a.cameras.len(), b.cameras.len());
        assert_eq!(a.images.len(), b.images.len());
        assert_eq!(a.points.len(), b.points.len());
        for (id, im) in &a.images {
            assert_eq!(b.images[id].pose.rotation, im.pose.rotation);
            assert_eq!(b.images[id].name, im.name);
        }
        for (id, p) in &a.points {
            assert_eq!(b.points[id].track, p.track);
        }
    }

    #[test]
    fn intrinsics_text_round_trip() {
        let intr = FisheyeIntrinsics::new(
            123.25,
            118.0,
            64.5,
            63.5,
            [0.05, -0.01, 0.002, -0.0001],
            128,
            130,
            1.6,
        )
        .unwrap();
        let text = intrinsics_to_text(&intr);
        let back = intrinsics_from_text(&text).unwrap();
        assert_eq!((back.fx, back.fy, back.cx, back.cy), (intr.fx, intr.fy, intr.cx, intr.cy));
        assert_eq!(back.k, intr.k);
        assert_eq!((back.width, back.height), (intr.width, intr.height));
        assert_eq!(back.theta_max, intr.theta_max);

        assert!(intrinsics_from_text("fx = 1\nbogus = 2\n").is_err());
        assert!(intrinsics_from_text("fx = 100\n").is_err());
    }

    #[test]
    fn empty_observation_lines_parse() {
        // Image with zero observations followed by another image.
        let dir = tempdir().unwrap();
        write_fixture(
            dir.path(),
            MINIMAL_CAMERAS,
            "1 1 0 0 0 0 0 2 1 a.png\n\n2 1 0 0 0 0 0 3 1 b.png\n0.5 0.5 7 1.5 2.5 -1\n",
            "",
        );
        let m = load_colmap_text(dir.path()).unwrap();
        assert_eq!(m.images.len(), 2);
        assert_eq!(m.images[&2].name, "b.png");
    }
}
