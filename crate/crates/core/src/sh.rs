//! Real spherical harmonics for view-dependent color, degrees 0 through 3.
//!
//! Uses the basis layout and sign convention of the reference Gaussian
//! splatting implementation (band 1 carries `(-y, z, -x)` factors), so
//! exported scenes are interpreted identically by existing viewers. Colors
//! are `basis . coefficients + 0.5`; the DC offset keeps an all-zero
//! coefficient vector at mid gray.

use nalgebra::Vector3;

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const MAX_SH_DEGREE: usize = 3;
pub const MAX_SH_COEFFS: usize = 16;

/// Number of coefficients per channel for a given degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values at a unit direction. Entries past `coeff_count(degree)` are
/// zero.
pub fn basis(degree: usize, dir: &Vector3<f64>) -> [f64; MAX_SH_COEFFS] {
    let mut b = [0.0; MAX_SH_COEFFS];
    let (x, y, z) = (dir.x, dir.y, dir.z);
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = SH_C3[0] * y * (3.0 * xx - yy);
            b[10] = SH_C3[1] * x * y * z;
            b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = SH_C3[5] * z * (xx - yy);
            b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Basis values together with their gradients w.r.t. the (ambient, not
/// sphere-constrained) direction vector. The caller is responsible for
/// projecting out the radial component when the direction comes from a
/// normalization.
pub fn basis_with_gradient(
    degree: usize,
    dir: &Vector3<f64>,
) -> ([f64; MAX_SH_COEFFS], [Vector3<f64>; MAX_SH_COEFFS]) {
    let b = basis(degree, dir);
    let mut g = [Vector3::zeros(); MAX_SH_COEFFS];
    let (x, y, z) = (dir.x, dir.y, dir.z);
    if degree >= 1 {
        g[1] = Vector3::new(0.0, -SH_C1, 0.0);
        g[2] = Vector3::new(0.0, 0.0, SH_C1);
        g[3] = Vector3::new(-SH_C1, 0.0, 0.0);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[4] = SH_C2[0] * Vector3::new(y, x, 0.0);
        g[5] = SH_C2[1] * Vector3::new(0.0, z, y);
        g[6] = SH_C2[2] * Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z);
        g[7] = SH_C2[3] * Vector3::new(z, 0.0, x);
        g[8] = SH_C2[4] * Vector3::new(2.0 * x, -2.0 * y, 0.0);
        if degree >= 3 {
            g[9] = SH_C3[0] * Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
            g[10] = SH_C3[1] * Vector3::new(y * z, x * z, x * y);
            g[11] = SH_C3[2] * Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
            g[12] = SH_C3[3]
                * Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
            g[13] = SH_C3[4] * Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
            g[14] = SH_C3[5] * Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy);
            g[15] = SH_C3[6] * Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
        }
    }
    (b, g)
}

/// Unclamped RGB at a unit viewing direction: `basis . sh + 0.5` per channel.
/// `sh` holds one `[r, g, b]` triple per coefficient.
pub fn eval_color(sh: &[[f64; 3]], degree: usize, dir: &Vector3<f64>) -> [f64; 3] {
    let b = basis(degree, dir);
    let n = coeff_count(degree).min(sh.len());
    let mut rgb = [0.5; 3];
    for (m, triple) in sh.iter().take(n).enumerate() {
        for ch in 0..3 {
            rgb[ch] += b[m] * triple[ch];
        }
    }
    rgb
}

/// Backward pass of [`eval_color`]: given `d_rgb = dL/d(unclamped color)`,
/// accumulates `dL/dsh` into `d_sh` (same layout as `sh`) and returns
/// `dL/ddir` (ambient; not yet projected onto the sphere tangent).
pub fn eval_color_backward(
    sh: &[[f64; 3]],
    degree: usize,
    dir: &Vector3<f64>,
    d_rgb: &[f64; 3],
    d_sh: &mut [[f64; 3]],
) -> Vector3<f64> {
    let (b, g) = basis_with_gradient(degree, dir);
    let n = coeff_count(degree).min(sh.len());
    let mut d_dir = Vector3::zeros();
    for m in 0..n {
        let mut weight = 0.0;
        for ch in 0..3 {
            d_sh[m][ch] += b[m] * d_rgb[ch];
            weight += sh[m][ch] * d_rgb[ch];
        }
        d_dir += g[m] * weight;
    }
    d_dir
}

/// Maps a `[0, 1]` albedo to the DC coefficient reproducing it from every
/// direction at degree 0.
pub fn color_to_dc(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

/// Inverse of [`color_to_dc`].
pub fn dc_to_color(dc: f64) -> f64 {
    SH_C0 * dc + 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n < 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let sh = vec![[0.0; 3]; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let c = eval_color(&sh, 3, &random_dir(&mut rng));
            assert_eq!(c, [0.5; 3]);
        }
    }

    #[test]
    fn degree_zero_is_view_independent() {
        let mut sh = vec![[0.0; 3]; 1];
        sh[0] = [0.7, -0.2, 1.3];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reference = eval_color(&sh, 0, &Vector3::z());
        for _ in 0..100 {
            let c = eval_color(&sh, 0, &random_dir(&mut rng));
            assert_eq!(c, reference);
        }
        for ch in 0..3 {
            assert_relative_eq!(reference[ch], SH_C0 * sh[0][ch] + 0.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn degree_one_z_band_splits_poles() {
        // Only the band-1 z coefficient set: the color difference between
        // +z and -z viewing directions is exactly 2 * SH_C1 * coefficient.
        let mut sh = vec![[0.0; 3]; 4];
        sh[2] = [0.25, -0.5, 0.1];
        let up = eval_color(&sh, 1, &Vector3::z());
        let down = eval_color(&sh, 1, &-Vector3::z());
        for ch in 0..3 {
            assert_relative_eq!(
                up[ch] - down[ch],
                2.0 * SH_C1 * sh[2][ch],
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn basis_is_orthonormal_under_monte_carlo() {
        // Monte Carlo estimate of <b_i, b_j> over the sphere; the basis is
        // orthonormal (up to sign conventions) so the Gram matrix should be
        // close to identity. This pins the numeric constants.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = 200_000;
        let mut gram = [[0.0f64; 16]; 16];
        for _ in 0..samples {
            // Uniform sphere direction via normalized Gaussian-ish rejection.
            let d = random_dir(&mut rng);
            let b = basis(3, &d);
            for i in 0..16 {
                for j in i..16 {
                    gram[i][j] += b[i] * b[j];
                }
            }
        }
        let norm = 4.0 * std::f64::consts::PI / samples as f64;
        for i in 0..16 {
            for j in i..16 {
                let expected = if i == j { 1.0 } else { 0.0 };
                let got = gram[i][j] * norm;
                assert!(
                    (got - expected).abs() < 0.03,
                    "<b{i}, b{j}> = {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..50 {
            let d = random_dir(&mut rng);
            let (_, g) = basis_with_gradient(3, &d);
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                // Ambient derivative: do not re-normalize the perturbed dir.
                let hi = basis(3, &(d + dp));
                let lo = basis(3, &(d - dp));
                for m in 0..16 {
                    let fd = (hi[m] - lo[m]) / (2.0 * h);
                    assert!(
                        (g[m][axis] - fd).abs() < 1e-6,
                        "basis {m} axis {axis}: analytic {} vs fd {}",
                        g[m][axis],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn eval_color_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut sh = vec![[0.0; 3]; 16];
        for triple in &mut sh {
            for v in triple.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let dir = random_dir(&mut rng);
        let d_rgb = [0.3, -1.1, 0.7];

        let mut d_sh = vec![[0.0; 3]; 16];
        let d_dir = eval_color_backward(&sh, 3, &dir, &d_rgb, &mut d_sh);

        let h = 1e-6;
        // Coefficient gradients.
        for m in 0..16 {
            for ch in 0..3 {
                let mut plus = sh.clone();
                plus[m][ch] += h;
                let mut minus = sh.clone();
                minus[m][ch] -= h;
                let up = eval_color(&plus, 3, &dir);
                let dn = eval_color(&minus, 3, &dir);
                let mut fd = 0.0;
                for c in 0..3 {
                    fd += d_rgb[c] * (up[c] - dn[c]) / (2.0 * h);
                }
                assert!(
                    (d_sh[m][ch] - fd).abs() < 1e-6,
                    "sh[{m}][{ch}]: {} vs {}",
                    d_sh[m][ch],
                    fd
                );
            }
        }
        // Direction gradient (ambient).
        for axis in 0..3 {
            let mut dp = Vector3::zeros();
            dp[axis] = h;
            let up = eval_color(&sh, 3, &(dir + dp));
            let dn = eval_color(&sh, 3, &(dir - dp));
            let mut fd = 0.0;
            for c in 0..3 {
                fd += d_rgb[c] * (up[c] - dn[c]) / (2.0 * h);
            }
            assert!(
                (d_dir[axis] - fd).abs() < 1e-6,
                "dir[{axis}]: {} vs {}",
                d_dir[axis],
                fd
            );
        }
    }

    #[test]
    fn dc_round_trip() {
        for c in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert_relative_eq!(dc_to_color(color_to_dc(c)), c, epsilon = 1e-15);
        }
    }
}
