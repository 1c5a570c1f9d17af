//! Binary checkpoints of the full optimization state.
//!
//! A checkpoint captures everything [`TrainState`] holds — scene parameters,
//! Adam moments, the RNG position, densification statistics — so resuming
//! from disk is bit-identical to never having stopped. The file layout is
//! little-endian, versioned, and guarded by a SHA-256 checksum over the
//! payload; writes go through a temporary file and an atomic rename.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::{Gaussian, SceneModel};
use crate::sh;
use crate::train::{AdamState, TrainState};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Highest SH degree the format (and the renderer) supports.
const MAX_SH_DEGREE: u32 = 3;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: format version {got}, this build reads version {want}")]
    Version { path: PathBuf, got: u32, want: u32 },
    #[error("{path}: payload is {got} bytes but the header declares {want}")]
    Length { path: PathBuf, got: usize, want: usize },
    #[error("{path}: checksum mismatch, file is corrupt")]
    Checksum { path: PathBuf },
    #[error("{path}: malformed payload at byte {offset}: {what}")]
    Malformed {
        path: PathBuf,
        offset: usize,
        what: String,
    },
}

/// Serializes `state` and atomically replaces `path`.
pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<(), CheckpointError> {
    let payload = encode_payload(state);
    let digest = Sha256::digest(&payload);

    let mut bytes = Vec::with_capacity(4 + 4 + 8 + 32 + payload.len());
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&digest);
    bytes.extend_from_slice(&payload);

    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CheckpointError::Io { path: p, source }
    };
    std::fs::write(&tmp, &bytes).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))?;
    Ok(())
}

/// Reads, verifies, and decodes a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainState, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad_magic = || CheckpointError::BadMagic {
        path: path.to_path_buf(),
    };
    if bytes.len() < 4 + 4 + 8 + 32 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad_magic());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            path: path.to_path_buf(),
            got: version,
            want: CHECKPOINT_VERSION,
        });
    }
    let declared = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let digest: [u8; 32] = bytes[16..48].try_into().unwrap();
    let payload = &bytes[48..];
    if payload.len() != declared {
        return Err(CheckpointError::Length {
            path: path.to_path_buf(),
            got: payload.len(),
            want: declared,
        });
    }
    if <[u8; 32]>::from(Sha256::digest(payload)) != digest {
        return Err(CheckpointError::Checksum {
            path: path.to_path_buf(),
        });
    }
    decode_payload(payload, path)
}

fn encode_payload(state: &TrainState) -> Vec<u8> {
    let mut w = Vec::new();
    let scene = &state.scene;
    let n = scene.len();

    w.extend_from_slice(&state.iteration.to_le_bytes());
    w.extend_from_slice(&state.extent.to_le_bytes());
    w.extend_from_slice(&state.rng.get_seed());
    w.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    w.extend_from_slice(&state.rng.get_stream().to_le_bytes());

    w.extend_from_slice(&(scene.sh_degree as u32).to_le_bytes());
    w.extend_from_slice(&(scene.sh_active_degree as u32).to_le_bytes());
    w.extend_from_slice(&(n as u64).to_le_bytes());
    for g in &scene.gaussians {
        put_vec3(&mut w, &g.position);
        for v in &g.rotation {
            w.extend_from_slice(&v.to_le_bytes());
        }
        put_vec3(&mut w, &g.log_scale);
        w.extend_from_slice(&g.opacity_logit.to_le_bytes());
        for coeff in &g.sh {
            for ch in coeff {
                w.extend_from_slice(&ch.to_le_bytes());
            }
        }
    }

    let adam = &state.adam;
    w.extend_from_slice(&adam.step.to_le_bytes());
    for i in 0..n {
        put_vec3(&mut w, &adam.m_position[i]);
        put_vec3(&mut w, &adam.v_position[i]);
        for v in adam.m_rotation[i].iter().chain(&adam.v_rotation[i]) {
            w.extend_from_slice(&v.to_le_bytes());
        }
        put_vec3(&mut w, &adam.m_log_scale[i]);
        put_vec3(&mut w, &adam.v_log_scale[i]);
        w.extend_from_slice(&adam.m_opacity[i].to_le_bytes());
        w.extend_from_slice(&adam.v_opacity[i].to_le_bytes());
        for coeff in adam.m_sh[i].iter().chain(&adam.v_sh[i]) {
            for ch in coeff {
                w.extend_from_slice(&ch.to_le_bytes());
            }
        }
    }

    for a in &state.grad_acc {
        w.extend_from_slice(&a.to_le_bytes());
    }
    for c in &state.grad_cnt {
        w.extend_from_slice(&c.to_le_bytes());
    }
    w
}

fn put_vec3(w: &mut Vec<u8>, v: &Vector3<f64>) {
    for k in 0..3 {
        w.extend_from_slice(&v[k].to_le_bytes());
    }
}

fn decode_payload(payload: &[u8], path: &Path) -> Result<TrainState, CheckpointError> {
    let mut r = Reader {
        buf: payload,
        off: 0,
        path,
    };

    let iteration = r.u32()?;
    let extent = r.f64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
    let stream = r.u64()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    let sh_degree = r.u32()?;
    let sh_active = r.u32()?;
    if sh_degree > MAX_SH_DEGREE || sh_active > sh_degree {
        return Err(r.malformed(format!(
            "SH degrees {sh_active}/{sh_degree} out of range"
        )));
    }
    let coeffs = sh::coeff_count(sh_degree as usize);
    let n = r.u64()? as usize;
    // A trustworthy row count cannot need more bytes than the payload holds.
    let per_row = (3 + 4 + 3 + 1 + 3 * coeffs) * 8;
    if n.saturating_mul(per_row) > payload.len() {
        return Err(r.malformed(format!("row count {n} exceeds payload size")));
    }

    let mut gaussians = Vec::with_capacity(n);
    for _ in 0..n {
        let position = r.vec3()?;
        let rotation = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let log_scale = r.vec3()?;
        let opacity_logit = r.f64()?;
        let mut sh_rows = Vec::with_capacity(coeffs);
        for _ in 0..coeffs {
            sh_rows.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        gaussians.push(Gaussian {
            position,
            rotation,
            log_scale,
            opacity_logit,
            sh: sh_rows,
        });
    }
    let scene = SceneModel {
        gaussians,
        sh_degree: sh_degree as usize,
        sh_active_degree: sh_active as usize,
    };

    let mut adam = AdamState::zeros(n, coeffs);
    adam.step = r.u64()?;
    for i in 0..n {
        adam.m_position[i] = r.vec3()?;
        adam.v_position[i] = r.vec3()?;
        for k in 0..4 {
            adam.m_rotation[i][k] = r.f64()?;
        }
        for k in 0..4 {
            adam.v_rotation[i][k] = r.f64()?;
        }
        adam.m_log_scale[i] = r.vec3()?;
        adam.v_log_scale[i] = r.vec3()?;
        adam.m_opacity[i] = r.f64()?;
        adam.v_opacity[i] = r.f64()?;
        for c in 0..coeffs {
            adam.m_sh[i][c] = [r.f64()?, r.f64()?, r.f64()?];
        }
        for c in 0..coeffs {
            adam.v_sh[i][c] = [r.f64()?, r.f64()?, r.f64()?];
        }
    }

    let mut grad_acc = Vec::with_capacity(n);
    for _ in 0..n {
        grad_acc.push(r.f64()?);
    }
    let mut grad_cnt = Vec::with_capacity(n);
    for _ in 0..n {
        grad_cnt.push(r.u32()?);
    }

    if r.off != payload.len() {
        return Err(r.malformed(format!(
            "{} trailing bytes after the payload",
            payload.len() - r.off
        )));
    }

    Ok(TrainState {
        iteration,
        scene,
        adam,
        rng,
        grad_acc,
        grad_cnt,
        extent,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    off: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.off + n > self.buf.len() {
            return Err(self.malformed(format!(
                "needed {n} bytes, {} left",
                self.buf.len() - self.off
            )));
        }
        let s = &self.buf[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec3(&mut self) -> Result<Vector3<f64>, CheckpointError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn malformed(&self, what: String) -> CheckpointError {
        CheckpointError::Malformed {
            path: self.path.to_path_buf(),
            offset: self.off,
            what,
        }
    }
}
