//! Quality metrics (PSNR, SSIM, MS-SSIM) and Bjontegaard delta bit-rate
//! over rate-distortion curves.
//!
//! SSIM follows the reference formulation: 11x11 Gaussian window with
//! sigma 1.5, c1 = (0.01 * 255)^2, c2 = (0.03 * 255)^2, statistics taken
//! over valid window positions only. MS-SSIM uses the standard five
//! scales with 2x2 mean-pool downsampling and exponents
//! (0.0448, 0.2856, 0.3001, 0.2363, 0.1333).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

const C1: f64 = 6.5025; // (0.01 * 255)^2
const C2: f64 = 58.5225; // (0.03 * 255)^2
const WINDOW: usize = 11;
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Minimum dimension for 5-scale MS-SSIM: one full window at the coarsest
/// scale, 11 * 2^4.
pub const MS_SSIM_MIN_DIM: usize = 176;

pub fn psnr(reference: &GrayImage, distorted: &GrayImage) -> Result<f64> {
    check_dims(reference, distorted)?;
    let mse: f64 = reference
        .pixels()
        .iter()
        .zip(distorted.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn ssim_kernel() -> [f64; WINDOW] {
    let sigma = 1.5f64;
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as isize - half;
        *v = (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable Gaussian filter: output is
/// (h - 10) x (w - 10).
fn filter_valid(data: &[f64], w: usize, h: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * data[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean luminance term and mean contrast-structure term over the valid
/// region.
fn ssim_terms(a: &GrayImage, b: &GrayImage) -> Result<(f64, f64)> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} smaller than the {WINDOW}x{WINDOW} SSIM window"
        )));
    }
    let kernel = ssim_kernel();
    let ax = a.pixels();
    let bx = b.pixels();
    let sq_a: Vec<f64> = ax.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = bx.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = ax.iter().zip(bx).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(ax, w, h, &kernel);
    let mu_b = filter_valid(bx, w, h, &kernel);
    let m_aa = filter_valid(&sq_a, w, h, &kernel);
    let m_bb = filter_valid(&sq_b, w, h, &kernel);
    let m_ab = filter_valid(&ab, w, h, &kernel);
    let mut lum = 0.0;
    let mut cs = 0.0;
    for i in 0..mu_a.len() {
        let ma = mu_a[i];
        let mb = mu_b[i];
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        lum += (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        cs += (2.0 * cov + C2) / (va + vb + C2);
    }
    let count = mu_a.len() as f64;
    Ok((lum / count, cs / count))
}

/// Structural similarity of two 8-bit-range grayscale images.
pub fn ssim(reference: &GrayImage, distorted: &GrayImage) -> Result<f64> {
    // The luminance and contrast-structure means are taken jointly, as in
    // the reference implementation (mean of the pointwise product map).
    check_dims(reference, distorted)?;
    let (w, h) = (reference.width(), reference.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} smaller than the {WINDOW}x{WINDOW} SSIM window"
        )));
    }
    let kernel = ssim_kernel();
    let ax = reference.pixels();
    let bx = distorted.pixels();
    let sq_a: Vec<f64> = ax.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = bx.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = ax.iter().zip(bx).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(ax, w, h, &kernel);
    let mu_b = filter_valid(bx, w, h, &kernel);
    let m_aa = filter_valid(&sq_a, w, h, &kernel);
    let m_bb = filter_valid(&sq_b, w, h, &kernel);
    let m_ab = filter_valid(&ab, w, h, &kernel);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let ma = mu_a[i];
        let mb = mu_b[i];
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / mu_a.len() as f64)
}

fn downsample2(img: &GrayImage) -> GrayImage {
    let w = img.width() / 2;
    let h = img.height() / 2;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = img.get(2 * x, 2 * y)
                + img.get(2 * x + 1, 2 * y)
                + img.get(2 * x, 2 * y + 1)
                + img.get(2 * x + 1, 2 * y + 1);
            data.push(s / 4.0);
        }
    }
    GrayImage::new(w, h, data).expect("downsampled image is nonempty")
}

/// Five-scale MS-SSIM. Requires both dimensions to be at least
/// [`MS_SSIM_MIN_DIM`].
pub fn ms_ssim(reference: &GrayImage, distorted: &GrayImage) -> Result<f64> {
    check_dims(reference, distorted)?;
    if reference.width() < MS_SSIM_MIN_DIM || reference.height() < MS_SSIM_MIN_DIM {
        return Err(Error::InvalidInput(format!(
            "MS-SSIM needs at least {MS_SSIM_MIN_DIM}x{MS_SSIM_MIN_DIM} pixels, got {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    let mut a = reference.clone();
    let mut b = distorted.clone();
    let mut score = 1.0f64;
    for (scale, &weight) in MS_WEIGHTS.iter().enumerate() {
        let (lum, cs) = ssim_terms(&a, &b)?;
        if scale + 1 == MS_WEIGHTS.len() {
            score *= (lum * cs).max(0.0).powf(weight);
        } else {
            score *= cs.max(0.0).powf(weight);
            a = downsample2(&a);
            b = downsample2(&b);
        }
    }
    Ok(score)
}

/// One rate-distortion curve: (bits per pixel, metric) points with
/// strictly increasing rates.
#[derive(Debug, Clone)]
pub struct RdCurve {
    pub image: String,
    pub codec: String,
    pub metric: String,
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    pub fn new(
        image: impl Into<String>,
        codec: impl Into<String>,
        metric: impl Into<String>,
        mut points: Vec<(f64, f64)>,
    ) -> Result<RdCurve> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(
                "rate-distortion curve needs strictly increasing rates".into(),
            ));
        }
        if points.iter().any(|&(r, m)| !(r > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput(
                "rate-distortion points must be positive-rate and finite".into(),
            ));
        }
        Ok(RdCurve {
            image: image.into(),
            codec: codec.into(),
            metric: metric.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Least-squares cubic fit of log-rate as a function of the metric,
/// centered on the integration interval for conditioning. Coefficients
/// are for powers of (x - mid).
fn fit_log_rate(curve: &RdCurve, mid: f64) -> [f64; 4] {
    let n = curve.points.len();
    let mut a = DMatrix::<f64>::zeros(n, 4);
    let mut y = DMatrix::<f64>::zeros(n, 1);
    for (i, &(rate, metric)) in curve.points.iter().enumerate() {
        let x = metric - mid;
        a[(i, 0)] = 1.0;
        a[(i, 1)] = x;
        a[(i, 2)] = x * x;
        a[(i, 3)] = x * x * x;
        y[(i, 0)] = rate.ln();
    }
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .expect("least-squares solve");
    [sol[(0, 0)], sol[(1, 0)], sol[(2, 0)], sol[(3, 0)]]
}

fn integrate_cubic(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let anti = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 + c[3] * x * x * x * x / 4.0;
    anti(hi) - anti(lo)
}

/// Bjontegaard delta bit-rate of `test` against `anchor`, in percent.
/// Negative values mean the test codec spends fewer bits at equal
/// quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    if anchor.points.len() < 4 || test.points.len() < 4 {
        return Err(Error::InvalidInput(
            "BD-rate needs at least 4 points per curve".into(),
        ));
    }
    let metric_range = |c: &RdCurve| {
        let lo = c.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = c.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (a_lo, a_hi) = metric_range(anchor);
    let (t_lo, t_hi) = metric_range(test);
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "curves share no metric range: [{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}]"
        )));
    }
    let mid = 0.5 * (lo + hi);
    let ca = fit_log_rate(anchor, mid);
    let ct = fit_log_rate(test, mid);
    let ia = integrate_cubic(&ca, lo - mid, hi - mid);
    let it = integrate_cubic(&ct, lo - mid, hi - mid);
    let avg_diff = (it - ia) / (hi - lo);
    Ok(100.0 * (avg_diff.exp() - 1.0))
}
