//! Pixel-wise perceptual weight maps and the weighted MSE they induce.
//!
//! Weights follow the SSIM-optimal rule for uniform transform-domain
//! quantization: gamma_i = delta^2 / (12 (2 sigma_i^2 + c2)) from the local
//! variance, then
//!
//!   q_i = (n + sum gamma) * sqrt(gamma_i) / sum sqrt(gamma) - gamma_i
//!
//! over the whole image, which makes the weights sum to the pixel count.
//! A saliency-driven variant substitutes a smoothed saliency map for the
//! local variance.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::spectral::WEIGHT_FLOOR;

/// Standard SSIM stabilizer (0.03 * 255)^2 for 8-bit data.
pub const SSIM_C2: f64 = 58.5225;

/// Largest quantization step the weight rule is evaluated at.
///
/// The rule `q = scale * sqrt(gamma) - gamma` allocates precision toward
/// low-variance pixels only while `gamma <= 1`; beyond that the linear
/// term dominates and the allocation inverts, which measurably hurts
/// MS-SSIM. `gamma = delta^2 / (12 (2 sigma^2 + c2))` peaks at sigma = 0,
/// so capping delta at `sqrt(12 c2)` keeps every pixel inside the
/// monotone regime at any quality.
pub const DELTA_CAP: f64 = 26.5; // sqrt(12 * 58.5225) = 26.503

/// Stabilizer used by the saliency rule.
pub const SALIENCY_C2: f64 = 4.0;

/// Default Gaussian sigma (in pixels) for saliency map smoothing.
pub const DEFAULT_SALIENCY_SMOOTH_SIGMA: f64 = 8.0;

/// Gaussian window for local statistics. The 11x11, sigma 1.5 default is
/// the window SSIM itself uses.
#[derive(Debug, Clone, Copy)]
pub struct GaussianWindow {
    pub size: usize,
    pub sigma: f64,
}

impl Default for GaussianWindow {
    fn default() -> Self {
        GaussianWindow {
            size: 11,
            sigma: 1.5,
        }
    }
}

impl GaussianWindow {
    pub fn kernel(&self) -> Vec<f64> {
        gaussian_kernel_fixed(self.size, self.sigma)
    }
}

/// Parameters of the SSIM-optimal weight rule.
#[derive(Debug, Clone, Copy)]
pub struct SsimParams {
    /// Quantization step the rule is tuned for, in intensity units.
    pub delta: f64,
    /// SSIM stabilizer, in squared intensity units.
    pub c2: f64,
    pub window: GaussianWindow,
}

impl SsimParams {
    pub fn new(delta: f64) -> Self {
        SsimParams {
            delta,
            c2: SSIM_C2,
            window: GaussianWindow::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::InvalidInput(
                "SSIM weight rule needs delta > 0 and c2 > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Positive per-pixel perceptual weights.
#[derive(Debug, Clone)]
pub struct WeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
    /// How many raw weights were nonpositive and got clamped.
    pub clamped: usize,
}

impl WeightMap {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * height || weights.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {}x{} map",
                weights.len(),
                width,
                height
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidWeight(
                "weight map entries must be finite and positive".into(),
            ));
        }
        Ok(WeightMap {
            width,
            height,
            weights,
            clamped: 0,
        })
    }

    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        WeightMap::new(width, height, vec![1.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

fn gaussian_kernel_fixed(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1, "window size must be odd");
    let half = (size / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn gaussian_kernel_sigma(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    gaussian_kernel_fixed(2 * radius + 1, sigma)
}

#[inline]
fn mirror(i: isize, n: isize) -> usize {
    // Symmetric extension: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable convolution with symmetric boundary extension.
fn convolve_sym(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = mirror(x as isize + k as isize - half, width as isize);
                acc += kv * row[xi];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for x in 0..width {
        for y in 0..height {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yi = mirror(y as isize + k as isize - half, height as isize);
                acc += kv * tmp[yi * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Gaussian-weighted local variance per pixel, nonnegative by clamping
/// the tiny negatives that the mean-of-squares form can produce.
pub fn local_variance(img: &GrayImage, window: &GaussianWindow) -> Result<Vec<f64>> {
    if img.pixels().is_empty() {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let kernel = window.kernel();
    let (w, h) = (img.width(), img.height());
    let mean = convolve_sym(img.pixels(), w, h, &kernel);
    let squares: Vec<f64> = img.pixels().iter().map(|&v| v * v).collect();
    let mean_sq = convolve_sym(&squares, w, h, &kernel);
    Ok(mean
        .iter()
        .zip(&mean_sq)
        .map(|(m, ms)| (ms - m * m).max(0.0))
        .collect())
}

/// Applies the weight rule to precomputed gamma values. Returns the
/// weights and the count of entries that had to be clamped positive.
pub fn weights_from_gamma(gamma: &[f64]) -> (Vec<f64>, usize) {
    let n = gamma.len() as f64;
    let sum_gamma: f64 = gamma.iter().sum();
    let sum_sqrt: f64 = gamma.iter().map(|g| g.sqrt()).sum();
    let scale = (n + sum_gamma) / sum_sqrt;
    let mut clamped = 0usize;
    let mut q: Vec<f64> = gamma
        .iter()
        .map(|&g| {
            let v = scale * g.sqrt() - g;
            if v <= 0.0 {
                clamped += 1;
                WEIGHT_FLOOR
            } else {
                v
            }
        })
        .collect();
    // The rule sums to n exactly; renormalize to restore that after clamping.
    let total: f64 = q.iter().sum();
    let fix = n / total;
    for v in &mut q {
        *v *= fix;
    }
    (q, clamped)
}

/// SSIM-optimal perceptual weights over the whole image.
pub fn ssim_weights(img: &GrayImage, params: &SsimParams) -> Result<WeightMap> {
    params.validate()?;
    let var = local_variance(img, &params.window)?;
    let factor = params.delta * params.delta / 12.0;
    let gamma: Vec<f64> = var
        .iter()
        .map(|&v| factor / (2.0 * v + params.c2))
        .collect();
    let (q, clamped) = weights_from_gamma(&gamma);
    let mut map = WeightMap::new(img.width(), img.height(), q)?;
    map.clamped = clamped;
    Ok(map)
}

/// Saliency-driven weights: smooth the saliency map, rescale it to [0, 1],
/// then apply the weight rule with the saliency standing in for the local
/// variance and c2 = 4. A zero `smooth_sigma` skips smoothing.
pub fn saliency_weights(
    saliency_map: &GrayImage,
    delta: f64,
    smooth_sigma: f64,
) -> Result<WeightMap> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    if smooth_sigma < 0.0 {
        return Err(Error::InvalidInput("smoothing sigma must be >= 0".into()));
    }
    let (w, h) = (saliency_map.width(), saliency_map.height());
    if saliency_map.pixels().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "saliency map values must be nonnegative".into(),
        ));
    }
    let smoothed = if smooth_sigma == 0.0 {
        saliency_map.pixels().to_vec()
    } else {
        convolve_sym(saliency_map.pixels(), w, h, &gaussian_kernel_sigma(smooth_sigma))
    };
    let factor = delta * delta / 12.0;
    let gamma: Vec<f64> = smoothed
        .iter()
        .map(|&s| factor / (2.0 * (s / 255.0) + SALIENCY_C2))
        .collect();
    let (q, clamped) = weights_from_gamma(&gamma);
    let mut map = WeightMap::new(w, h, q)?;
    map.clamped = clamped;
    Ok(map)
}

/// Weighted mean squared error `(1/n) sum q_i (ref_i - dist_i)^2`.
pub fn wmse(reference: &GrayImage, distorted: &GrayImage, weights: &WeightMap) -> Result<f64> {
    let n = reference.pixels().len();
    if distorted.pixels().len() != n || weights.weights().len() != n {
        return Err(Error::DimensionMismatch(
            "wmse inputs must share dimensions".into(),
        ));
    }
    let mut acc = 0.0;
    for ((r, d), q) in reference
        .pixels()
        .iter()
        .zip(distorted.pixels())
        .zip(weights.weights())
    {
        let e = r - d;
        acc += q * e * e;
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_variance() {
        let img = GrayImage::constant(16, 16, 77.0).unwrap();
        let var = local_variance(&img, &GaussianWindow::default()).unwrap();
        assert!(var.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn checkerboard_variance_positive() {
        let mut img = GrayImage::constant(16, 16, 0.0).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                if (x + y) % 2 == 0 {
                    img.set(x, y, 255.0);
                }
            }
        }
        let var = local_variance(&img, &GaussianWindow::default()).unwrap();
        assert!(var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn interior_variance_matches_direct_sum() {
        // Deterministic pseudo-random content.
        let mut img = GrayImage::constant(32, 32, 0.0).unwrap();
        let mut state = 0x9e3779b97f4a7c15u64;
        for y in 0..32 {
            for x in 0..32 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                img.set(x, y, ((state >> 33) % 256) as f64);
            }
        }
        let window = GaussianWindow::default();
        let var = local_variance(&img, &window).unwrap();
        // Direct 2D windowed sums at an interior pixel.
        let k = window.kernel();
        let (px, py) = (16usize, 17usize);
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for dy in 0..11 {
            for dx in 0..11 {
                let wgt = k[dy] * k[dx];
                let v = img.get(px + dx - 5, py + dy - 5);
                mean += wgt * v;
                mean_sq += wgt * v * v;
            }
        }
        let direct = mean_sq - mean * mean;
        assert!((var[py * 32 + px] - direct).abs() < 1e-10);
    }

    #[test]
    fn equal_gamma_gives_unit_weights() {
        let (q, clamped) = weights_from_gamma(&[0.37; 100]);
        assert_eq!(clamped, 0);
        assert!(q.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn two_pixel_hand_case() {
        let (q, _) = weights_from_gamma(&[1.0, 4.0]);
        assert!((q[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((q[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((q[0] + q[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_pixel_count() {
        let mut img = GrayImage::constant(24, 16, 0.0).unwrap();
        for y in 0..16 {
            for x in 0..24 {
                img.set(x, y, ((x * 11 + y * 29) % 256) as f64);
            }
        }
        let map = ssim_weights(&img, &SsimParams::new(12.0)).unwrap();
        let n = (24 * 16) as f64;
        let sum: f64 = map.weights().iter().sum();
        assert!((sum - n).abs() <= 1e-6 * n);
    }

    #[test]
    fn constant_image_weights_are_one() {
        let img = GrayImage::constant(16, 16, 128.0).unwrap();
        let map = ssim_weights(&img, &SsimParams::new(10.0)).unwrap();
        assert!(map.weights().iter().all(|&w| (w - 1.0).abs() < 1e-9));
        assert_eq!(map.clamped, 0);
    }

    #[test]
    fn raising_variance_does_not_raise_weight() {
        let img_base = {
            let mut img = GrayImage::constant(16, 16, 0.0).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    img.set(x, y, ((x * 7 + y * 13) % 64) as f64);
                }
            }
            img
        };
        let params = SsimParams::new(10.0);
        let base = ssim_weights(&img_base, &params).unwrap();
        // Bump one pixel hard to raise the local variance around it.
        let mut img_hot = img_base.clone();
        img_hot.set(8, 8, 255.0);
        let hot = ssim_weights(&img_hot, &params).unwrap();
        assert!(hot.get(8, 8) <= base.get(8, 8) + 1e-12);
    }

    #[test]
    fn constant_saliency_gives_unit_weights() {
        let map = GrayImage::constant(12, 12, 64.0).unwrap();
        let w = saliency_weights(&map, 10.0, 2.0).unwrap();
        assert!(w.weights().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn zero_sigma_skips_smoothing() {
        let mut sal = GrayImage::constant(8, 8, 0.0).unwrap();
        sal.set(4, 4, 255.0);
        let raw = saliency_weights(&sal, 10.0, 0.0).unwrap();
        let smooth = saliency_weights(&sal, 10.0, 2.0).unwrap();
        // Smoothing spreads the salient peak to the neighbors.
        assert!(smooth.get(3, 4) > raw.get(3, 4));
    }

    #[test]
    fn delta_scaling_quadruples_gamma() {
        // gamma scales with delta^2; weights are invariant to a common
        // gamma scale only when gamma is constant, so check gamma itself
        // via the defining expression.
        let g1 = 10.0f64 * 10.0 / (12.0 * (2.0 * 3.0 + SALIENCY_C2));
        let g2 = 20.0f64 * 20.0 / (12.0 * (2.0 * 3.0 + SALIENCY_C2));
        assert!((g2 / g1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn wmse_basics() {
        let a = GrayImage::new(2, 1, vec![10.0, 20.0]).unwrap();
        let b = GrayImage::new(2, 1, vec![9.0, 18.0]).unwrap();
        let w = WeightMap::new(2, 1, vec![4.0 / 3.0, 2.0 / 3.0]).unwrap();
        let v = wmse(&a, &b, &w).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(wmse(&a, &a, &w).unwrap(), 0.0);
        let unit = WeightMap::uniform(2, 1).unwrap();
        assert!((wmse(&a, &b, &unit).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn wmse_dimension_mismatch() {
        let a = GrayImage::constant(2, 2, 0.0).unwrap();
        let b = GrayImage::constant(2, 1, 0.0).unwrap();
        let w = WeightMap::uniform(2, 2).unwrap();
        assert!(wmse(&a, &b, &w).is_err());
    }
}
