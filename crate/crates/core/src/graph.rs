//! Camera association graph: ranks view pairs by shared feature tracks,
//! then re-sorts the strongest neighbors by pose angular divergence. The
//! training loop draws companion views for each primary camera from this
//! graph.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::camera::CameraPose;
use crate::colmap::SfmModel;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("camera {0} not present in the graph or camera list")]
    UnknownCamera(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub dst: u32,
    /// Number of 3D points observed by both cameras.
    pub shared: u32,
    /// Geodesic rotation angle between the two poses, radians. Zero until
    /// [`build_max_angle_association`] fills it in.
    pub angle: f64,
}

/// Per-camera ordered neighbor lists. After [`build_camera_association`]
/// the lists are sorted by shared count descending (ties by ascending ID)
/// and membership is symmetric. After [`build_max_angle_association`] each
/// list is truncated to the strongest `keep_k` and re-sorted by angular
/// divergence descending; truncation can make membership asymmetric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraGraph {
    pub neighbors: BTreeMap<u32, Vec<GraphEdge>>,
}

impl CameraGraph {
    pub fn edges(&self, camera: u32) -> &[GraphEdge] {
        self.neighbors.get(&camera).map_or(&[], Vec::as_slice)
    }
}

/// Counts, for every camera pair, the 3D points whose tracks contain both
/// cameras. Duplicate observations of one image within a track count once.
pub fn build_camera_association(model: &SfmModel) -> CameraGraph {
    let ids: Vec<u32> = model.images.keys().copied().collect();
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for point in model.points.values() {
        let mut track: Vec<u32> = point.track.clone();
        track.sort_unstable();
        track.dedup();
        for i in 0..track.len() {
            for j in i + 1..track.len() {
                *counts.entry((track[i], track[j])).or_insert(0) += 1;
            }
        }
    }
    let mut neighbors: BTreeMap<u32, Vec<GraphEdge>> =
        ids.iter().map(|&id| (id, Vec::new())).collect();
    for (&(a, b), &shared) in &counts {
        neighbors.get_mut(&a).unwrap().push(GraphEdge {
            dst: b,
            shared,
            angle: 0.0,
        });
        neighbors.get_mut(&b).unwrap().push(GraphEdge {
            dst: a,
            shared,
            angle: 0.0,
        });
    }
    for list in neighbors.values_mut() {
        list.sort_by(|x, y| y.shared.cmp(&x.shared).then(x.dst.cmp(&y.dst)));
    }
    CameraGraph { neighbors }
}

/// Keeps each camera's `keep_k` strongest-overlap neighbors and reorders
/// that retained set by geodesic rotation angle, largest first (ties by
/// ascending ID). `poses` maps image ID to pose.
pub fn build_max_angle_association(
    graph: &CameraGraph,
    poses: &BTreeMap<u32, CameraPose>,
    keep_k: usize,
) -> Result<CameraGraph, GraphError> {
    let mut out = CameraGraph::default();
    for (&src, list) in &graph.neighbors {
        let src_pose = poses.get(&src).ok_or(GraphError::UnknownCamera(src))?;
        let mut kept: Vec<GraphEdge> = list.iter().take(keep_k).cloned().collect();
        for e in &mut kept {
            let dst_pose = poses.get(&e.dst).ok_or(GraphError::UnknownCamera(e.dst))?;
            e.angle = src_pose.rotation_angle_to(dst_pose);
        }
        kept.sort_by(|x, y| {
            y.angle
                .partial_cmp(&x.angle)
                .unwrap()
                .then(x.dst.cmp(&y.dst))
        });
        out.neighbors.insert(src, kept);
    }
    Ok(out)
}

/// Picks the batch for one optimization step: the primary camera plus the
/// first `n - 1` entries of its neighbor list. If the list is short, pads
/// with uniformly random distinct cameras from `all_cameras` (the RNG is
/// consumed only on shortfall, so fully-connected cameras select
/// deterministically).
pub fn select_views<R: Rng>(
    graph: &CameraGraph,
    primary: u32,
    n: usize,
    all_cameras: &[u32],
    rng: &mut R,
) -> Vec<u32> {
    let mut selected = vec![primary];
    for e in graph.edges(primary) {
        if selected.len() >= n {
            break;
        }
        if !selected.contains(&e.dst) {
            selected.push(e.dst);
        }
    }
    if selected.len() < n {
        let mut pool: Vec<u32> = all_cameras
            .iter()
            .copied()
            .filter(|c| !selected.contains(c))
            .collect();
        while selected.len() < n && !pool.is_empty() {
            let idx = rng.gen_range(0..pool.len());
            selected.push(pool.swap_remove(idx));
        }
    }
    selected
}

/// Serializes a graph as one line per directed edge:
/// `src dst shared_count angle_rad`. Cameras with no neighbors appear as
/// `src - 0 0` so the camera set round-trips.
pub fn graph_to_text(graph: &CameraGraph) -> String {
    let mut out = String::from("# src dst shared_count angle_rad\n");
    for (&src, list) in &graph.neighbors {
        if list.is_empty() {
            writeln!(out, "{src} - 0 0").unwrap();
        }
        for e in list {
            writeln!(out, "{src} {} {} {}", e.dst, e.shared, e.angle).unwrap();
        }
    }
    out
}

pub fn graph_from_text(text: &str) -> Result<CameraGraph, GraphError> {
    let mut graph = CameraGraph::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(GraphError::Parse {
                line: i + 1,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, GraphError> {
            s.parse().map_err(|_| GraphError::Parse {
                line: i + 1,
                msg: format!("invalid {what}: {s:?}"),
            })
        };
        let src = parse(fields[0], "src")? as u32;
        let entry = graph.neighbors.entry(src).or_default();
        if fields[1] == "-" {
            continue;
        }
        let dst = parse(fields[1], "dst")? as u32;
        let shared = parse(fields[2], "shared_count")? as u32;
        let angle = parse(fields[3], "angle_rad")?;
        entry.push(GraphEdge { dst, shared, angle });
    }
    Ok(graph)
}

pub fn write_graph(path: &Path, graph: &CameraGraph) -> Result<(), GraphError> {
    std::fs::write(path, graph_to_text(graph)).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_graph(path: &Path) -> Result<CameraGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    graph_from_text(&text)
}
