//! Deterministic synthetic grayscale images with natural-image-like
//! statistics: multi-octave value noise gated by a smooth texture mask,
//! low-frequency illumination, and a few soft-edged structures. Used by
//! the test suites and benchmarks, where real photographs are not
//! available.

use crate::imageio::GrayImage;

/// SplitMix64; tiny, seedable, stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Bilinear value noise in [-1, 1] on a lattice with the given spacing.
fn value_noise(rng: &mut SplitMix64, w: usize, h: usize, spacing: usize) -> Vec<f64> {
    value_noise_oriented(rng, w, h, spacing, 0.0, 1.0)
}

/// Value noise sampled on rotated, anisotropically stretched coordinates:
/// correlation length along `theta` is `stretch` times the cross length.
fn value_noise_oriented(
    rng: &mut SplitMix64,
    w: usize,
    h: usize,
    spacing: usize,
    theta: f64,
    stretch: f64,
) -> Vec<f64> {
    let diag = ((w * w + h * h) as f64).sqrt();
    let gspan = (diag / spacing as f64 * stretch.max(1.0)) as usize + 4;
    let lattice: Vec<f64> = (0..gspan * gspan).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
    let (s, c) = theta.sin_cos();
    let off = diag / spacing as f64 + 2.0;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 * c + y as f64 * s) / (spacing as f64 * stretch) + off * 0.5;
            let v = (-(x as f64) * s + y as f64 * c) / spacing as f64 + off * 0.5;
            let u0 = u.floor();
            let v0 = v.floor();
            let tu = u - u0;
            let tv = v - v0;
            let ui = (u0 as isize).rem_euclid(gspan as isize - 1) as usize;
            let vi = (v0 as isize).rem_euclid(gspan as isize - 1) as usize;
            let v00 = lattice[vi * gspan + ui];
            let v01 = lattice[vi * gspan + ui + 1];
            let v10 = lattice[(vi + 1) * gspan + ui];
            let v11 = lattice[(vi + 1) * gspan + ui + 1];
            let a = v00 + (v01 - v00) * tu;
            let b = v10 + (v11 - v10) * tu;
            out[y * w + x] = a + (b - a) * tv;
        }
    }
    out
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Deterministic synthetic image. Distinct seeds give distinct content
/// with smooth sky-like areas, textured areas, and object-like edges.
pub fn synth_image(seed: u64, width: usize, height: usize) -> GrayImage {
    assert!(width >= 16 && height >= 16, "synthetic images start at 16x16");
    let mut rng = SplitMix64::new(seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1));
    let n = width * height;

    let illum_spacing = (width.max(height) / 2).max(8);
    let illumination = value_noise(&mut rng, width, height, illum_spacing);
    // Coherent regions: sky-like smooth areas next to textured ones.
    let mask_field = value_noise(&mut rng, width, height, (width.max(height) / 4).max(8));

    let octaves: [(usize, f64); 5] = [(32, 30.0), (16, 24.0), (8, 20.0), (4, 17.0), (2, 14.0)];
    let mut detail = vec![0.0; n];
    for &(spacing, amp) in &octaves {
        if spacing >= width.min(height) {
            continue;
        }
        let layer = value_noise(&mut rng, width, height, spacing);
        for (d, l) in detail.iter_mut().zip(&layer) {
            *d += amp * l;
        }
    }
    // Per-pixel grain on top of the lattice octaves.
    for d in detail.iter_mut() {
        *d += 9.0 * (2.0 * rng.next_f64() - 1.0);
    }

    let mut img = vec![0.0; n];
    for i in 0..n {
        // Texture gate: ~0 in smooth regions, ~1 in textured ones.
        let gate = smoothstep(0.5 + 1.8 * mask_field[i]);
        img[i] = 120.0 + 55.0 * illumination[i] + gate * detail[i];
    }

    // A few soft-edged discs for object boundaries.
    let discs = 3 + (rng.next_u64() % 4) as usize;
    for _ in 0..discs {
        let cx = rng.next_f64() * width as f64;
        let cy = rng.next_f64() * height as f64;
        let radius = (0.05 + 0.15 * rng.next_f64()) * width.min(height) as f64;
        let amp = (rng.next_f64() - 0.5) * 90.0;
        let edge = radius * 0.15 + 1.0;
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < radius + edge {
                    let t = 1.0 - smoothstep((d - (radius - edge)) / (2.0 * edge));
                    img[y * width + x] += amp * t;
                }
            }
        }
    }

    let data: Vec<f64> = img
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0))
        .collect();
    GrayImage::new(width, height, data).expect("synthetic image dimensions are valid")
}
