//! Image losses and quality metrics: L1, SSIM (value and analytic
//! gradient), PSNR, and field-of-view boundary masks.
//!
//! SSIM follows the reference formulation: 11x11 Gaussian window with
//! sigma 1.5, stability constants `C1 = 0.01^2`, `C2 = 0.03^2`, evaluated on
//! valid windows only (no padding) and averaged over the three channels.

use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::FisheyeIntrinsics;
use crate::img::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask length {got} does not match image ({expected} pixels)")]
    MaskLength { got: usize, expected: usize },
}

fn check_sizes(a: &Image, b: &Image) -> Result<(), LossError> {
    if !a.same_size(b) {
        return Err(LossError::SizeMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    Ok(())
}

/// Mean absolute error over all pixels and channels.
pub fn l1(a: &Image, b: &Image) -> Result<f64, LossError> {
    check_sizes(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

/// L1 value and its gradient w.r.t. `a`. Ties (`a == b`) get subgradient 0.
pub fn l1_with_gradient(a: &Image, b: &Image) -> Result<(f64, Image), LossError> {
    check_sizes(a, b)?;
    let n = a.data.len() as f64;
    let mut grad = Image::new(a.width, a.height);
    let mut sum = 0.0;
    for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        let d = x - y;
        sum += d.abs();
        grad.data[i] = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// Peak signal-to-noise ratio in dB for unit-range images. Identical images
/// yield `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, LossError> {
    check_sizes(a, b)?;
    let n = a.data.len() as f64;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    Ok(mse_to_psnr(mse))
}

/// PSNR restricted to pixels selected by `mask` (length `width * height`).
pub fn psnr_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<f64, LossError> {
    check_sizes(a, b)?;
    check_mask(a, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, selected) in mask.iter().enumerate() {
        if !selected {
            continue;
        }
        for ch in 0..3 {
            let d = a.data[p * 3 + ch] - b.data[p * 3 + ch];
            sum += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    Ok(mse_to_psnr(sum / count as f64))
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

fn check_mask(a: &Image, mask: &[bool]) -> Result<(), LossError> {
    if mask.len() != a.width * a.height {
        return Err(LossError::MaskLength {
            got: mask.len(),
            expected: a.width * a.height,
        });
    }
    Ok(())
}

/// Normalized 1D Gaussian window (the 2D window is its outer product).
fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c) * (i as f64 - c)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode convolution of a `width x height` plane with the
/// SSIM kernel; output is `(width - 10) x (height - 10)`.
fn conv_valid(plane: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let vw = width - SSIM_WINDOW + 1;
    let vh = height - SSIM_WINDOW + 1;
    // Horizontal pass over full rows.
    let mut tmp = vec![0.0; vw * height];
    for y in 0..height {
        for ox in 0..vw {
            let mut s = 0.0;
            for (u, kv) in k.iter().enumerate() {
                s += kv * plane[y * width + ox + u];
            }
            tmp[y * vw + ox] = s;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; vw * vh];
    for oy in 0..vh {
        for ox in 0..vw {
            let mut s = 0.0;
            for (v, kv) in k.iter().enumerate() {
                s += kv * tmp[(oy + v) * vw + ox];
            }
            out[oy * vw + ox] = s;
        }
    }
    out
}

/// Adjoint of [`conv_valid`]: scatters a valid-grid coefficient map back
/// onto the input grid (the transpose of the convolution operator).
fn conv_valid_adjoint(
    coeff: &[f64],
    width: usize,
    height: usize,
    k: &[f64; SSIM_WINDOW],
) -> Vec<f64> {
    let vw = width - SSIM_WINDOW + 1;
    let vh = height - SSIM_WINDOW + 1;
    // Vertical adjoint: (py, ox) <- sum over oy in [py-10, py] of k[py-oy].
    let mut tmp = vec![0.0; vw * height];
    for py in 0..height {
        let oy_lo = py.saturating_sub(SSIM_WINDOW - 1);
        let oy_hi = py.min(vh - 1);
        for ox in 0..vw {
            let mut s = 0.0;
            let mut oy = oy_lo;
            while oy <= oy_hi {
                s += k[py - oy] * coeff[oy * vw + ox];
                oy += 1;
            }
            tmp[py * vw + ox] = s;
        }
    }
    // Horizontal adjoint.
    let mut out = vec![0.0; width * height];
    for py in 0..height {
        for px in 0..width {
            let ox_lo = px.saturating_sub(SSIM_WINDOW - 1);
            let ox_hi = px.min(vw - 1);
            let mut s = 0.0;
            let mut ox = ox_lo;
            while ox <= ox_hi {
                s += k[px - ox] * tmp[py * vw + ox];
                ox += 1;
            }
            out[py * width + px] = s;
        }
    }
    out
}

struct SsimChannelMaps {
    /// Per-window SSIM values.
    s: Vec<f64>,
    /// dS/dmu_x, dS/dE[x^2], dS/dE[xy] per window (for the gradient).
    c_mu: Vec<f64>,
    c_xx: Vec<f64>,
    c_xy: Vec<f64>,
}

fn ssim_channel(
    x: &[f64],
    y: &[f64],
    width: usize,
    height: usize,
    k: &[f64; SSIM_WINDOW],
    with_grad: bool,
) -> SsimChannelMaps {
    let mu_x = conv_valid(x, width, height, k);
    let mu_y = conv_valid(y, width, height, k);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let e_xx = conv_valid(&xx, width, height, k);
    let e_yy = conv_valid(&yy, width, height, k);
    let e_xy = conv_valid(&xy, width, height, k);

    let n = mu_x.len();
    let mut maps = SsimChannelMaps {
        s: vec![0.0; n],
        c_mu: vec![0.0; if with_grad { n } else { 0 }],
        c_xx: vec![0.0; if with_grad { n } else { 0 }],
        c_xy: vec![0.0; if with_grad { n } else { 0 }],
    };
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + SSIM_C1;
        let a2 = 2.0 * cov + SSIM_C2;
        let b1 = mx * mx + my * my + SSIM_C1;
        let b2 = var_x + var_y + SSIM_C2;
        let s = (a1 * a2) / (b1 * b2);
        maps.s[i] = s;
        if with_grad {
            maps.c_mu[i] = 2.0 * s * (my * (1.0 / a1 - 1.0 / a2) + mx * (1.0 / b2 - 1.0 / b1));
            maps.c_xx[i] = -s / b2;
            maps.c_xy[i] = 2.0 * s / a2;
        }
    }
    maps
}

fn ssim_guard(a: &Image, b: &Image) -> Result<(), LossError> {
    check_sizes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(LossError::TooSmall(a.width, a.height));
    }
    Ok(())
}

/// Mean SSIM over all valid windows and channels; 1.0 for identical images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, LossError> {
    ssim_guard(a, b)?;
    let k = ssim_kernel();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let maps = ssim_channel(
            &a.channel_plane(ch),
            &b.channel_plane(ch),
            a.width,
            a.height,
            &k,
            false,
        );
        total += maps.s.iter().sum::<f64>();
        count += maps.s.len();
    }
    Ok(total / count as f64)
}

/// SSIM and its analytic gradient w.r.t. `a`.
pub fn ssim_with_gradient(a: &Image, b: &Image) -> Result<(f64, Image), LossError> {
    ssim_guard(a, b)?;
    let k = ssim_kernel();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut grad = Image::new(a.width, a.height);
    for ch in 0..3 {
        let x = a.channel_plane(ch);
        let y = b.channel_plane(ch);
        let maps = ssim_channel(&x, &y, a.width, a.height, &k, true);
        total += maps.s.iter().sum::<f64>();
        count += maps.s.len();

        // d(mean SSIM)/dx = adj(C_mu) + 2 x .* adj(C_xx) + y .* adj(C_xy),
        // normalized afterwards by the total window/channel count.
        let g_mu = conv_valid_adjoint(&maps.c_mu, a.width, a.height, &k);
        let g_xx = conv_valid_adjoint(&maps.c_xx, a.width, a.height, &k);
        let g_xy = conv_valid_adjoint(&maps.c_xy, a.width, a.height, &k);
        for p in 0..x.len() {
            grad.data[p * 3 + ch] = g_mu[p] + 2.0 * x[p] * g_xx[p] + y[p] * g_xy[p];
        }
    }
    let scale = 1.0 / count as f64;
    for v in &mut grad.data {
        *v *= scale;
    }
    Ok((total * scale, grad))
}

/// SSIM averaged over valid windows whose center pixel is selected by
/// `mask`.
pub fn ssim_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<f64, LossError> {
    ssim_guard(a, b)?;
    check_mask(a, mask)?;
    let k = ssim_kernel();
    let vw = a.width - SSIM_WINDOW + 1;
    let vh = a.height - SSIM_WINDOW + 1;
    let half = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let maps = ssim_channel(
            &a.channel_plane(ch),
            &b.channel_plane(ch),
            a.width,
            a.height,
            &k,
            false,
        );
        for oy in 0..vh {
            for ox in 0..vw {
                let center = (oy + half) * a.width + (ox + half);
                if mask[center] {
                    total += maps.s[oy * vw + ox];
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    Ok(total / count as f64)
}

/// Training loss `(1 - lambda) * L1 + lambda * (1 - SSIM)` with its gradient
/// w.r.t. `render`. With `lambda = 0` the SSIM term (and its window-size
/// requirement) is skipped entirely.
pub fn photometric_loss(
    render: &Image,
    gt: &Image,
    lambda: f64,
) -> Result<(f64, Image), LossError> {
    let (l1_val, mut grad) = l1_with_gradient(render, gt)?;
    if lambda == 0.0 {
        return Ok((l1_val, grad));
    }
    let (ssim_val, ssim_grad) = ssim_with_gradient(render, gt)?;
    let loss = (1.0 - lambda) * l1_val + lambda * (1.0 - ssim_val);
    for (g, s) in grad.data.iter_mut().zip(&ssim_grad.data) {
        *g = (1.0 - lambda) * *g - lambda * s;
    }
    Ok((loss, grad))
}

/// Per-pixel mask of the field-of-view band `theta_lo < theta <= theta_max`,
/// evaluated at pixel centers. Pixels outside the image of the field of view
/// are unmasked.
pub fn boundary_mask(intr: &FisheyeIntrinsics, theta_lo: f64) -> Vec<bool> {
    let (w, h) = (intr.width as usize, intr.height as usize);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            if let Ok(theta) = intr.pixel_theta(&px) {
                mask[y * w + x] = theta > theta_lo;
            }
        }
    }
    mask
}
