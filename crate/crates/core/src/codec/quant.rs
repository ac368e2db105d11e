//! Quantization tables: JPEG Annex K luminance base table, quality
//! scaling, projection into an arbitrary transform basis, and the uniform
//! quantizer itself.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::transforms::dct_basis_2d;

/// Annex K luminance table in natural (row-major frequency) order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Natural index of the j-th zig-zag position.
pub const ZIGZAG_TO_NATURAL: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Scales the base table with the standard quality mapping
/// (5000/Q below 50, 200 - 2Q at and above), clamping entries to [1, 255].
/// Returned in natural order.
pub fn scaled_table(quality: u8) -> Result<[f64; 64]> {
    if quality == 0 || quality > 100 {
        return Err(Error::InvalidInput(format!(
            "quality must be in 1..=100, got {quality}"
        )));
    }
    let q = quality as f64;
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(ANNEX_K_LUMA.iter()) {
        let v = ((base as f64 * scale + 50.0) / 100.0).floor();
        *o = v.clamp(1.0, 255.0);
    }
    Ok(out)
}

/// Quantization step the weight rule assumes at a given quality: the mean
/// of the active scaled table.
pub fn delta_for_quality(quality: u8) -> Result<f64> {
    let t = scaled_table(quality)?;
    Ok(t.iter().sum::<f64>() / 64.0)
}

/// Projects a scaled table (natural order) into a transform basis.
///
/// With `d_j` the 2D DCT vectors in zig-zag order and `u_k` the basis
/// columns in scan order, each output step is the convex combination
/// `t'_k = sum_j w_kj t_j` with `w_kj = (d_j^T Q u_k)^2` normalized over
/// j. A basis equal to the DCT reduces this to a permutation of the
/// input table. Output entries are floored at 1.
pub fn project_quant_table(
    table_natural: &[f64; 64],
    u: &DMatrix<f64>,
    q: &[f64],
) -> Result<Vec<f64>> {
    let n = 64usize;
    if u.nrows() != n || u.ncols() != n || q.len() != n {
        return Err(Error::DimensionMismatch(
            "quant table projection requires an 8x8 block basis".into(),
        ));
    }
    let (dct, _, order) = dct_basis_2d(8);
    // DCT columns arranged by zig-zag position, with the matching table
    // entries.
    let mut dct_cols: Vec<usize> = Vec::with_capacity(n);
    let mut t_zig: Vec<f64> = Vec::with_capacity(n);
    for zz in 0..n {
        let natural = ZIGZAG_TO_NATURAL[zz];
        let (k, l) = (natural / 8, natural % 8);
        let col = order
            .iter()
            .position(|&p| p == (k, l))
            .expect("frequency pair present");
        dct_cols.push(col);
        t_zig.push(table_natural[natural]);
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut overlaps = [0.0f64; 64];
        let mut total = 0.0;
        for (j, &col) in dct_cols.iter().enumerate() {
            let mut dot = 0.0;
            for p in 0..n {
                dot += dct[(p, col)] * q[p] * u[(p, k)];
            }
            let o = dot * dot;
            overlaps[j] = o;
            total += o;
        }
        if !(total > 0.0) {
            return Err(Error::InvalidInput(
                "basis column has no energy overlap with the DCT".into(),
            ));
        }
        let mut step = 0.0;
        for (j, &o) in overlaps.iter().enumerate() {
            step += o / total * t_zig[j];
        }
        out.push(step.max(1.0));
    }
    Ok(out)
}

/// Uniform quantizer, rounding half away from zero.
pub fn quantize(coeffs: &[f64], table: &[f64]) -> Vec<i32> {
    coeffs
        .iter()
        .zip(table)
        .map(|(c, t)| (c / t).round() as i32)
        .collect()
}

pub fn dequantize(levels: &[i32], table: &[f64]) -> Vec<f64> {
    levels
        .iter()
        .zip(table)
        .map(|(&l, t)| l as f64 * t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::dct_grid_laplacian;
    use crate::transforms::build_iagft;

    #[test]
    fn quality_50_is_base_table() {
        let t = scaled_table(50).unwrap();
        for (a, &b) in t.iter().zip(ANNEX_K_LUMA.iter()) {
            assert_eq!(*a, b as f64);
        }
    }

    #[test]
    fn quality_bounds() {
        assert!(scaled_table(0).is_err());
        assert!(scaled_table(101).is_err());
        let hi = scaled_table(100).unwrap();
        assert!(hi.iter().all(|&v| v == 1.0));
        let lo = scaled_table(1).unwrap();
        assert!(lo.iter().all(|&v| v >= 1.0 && v <= 255.0));
    }

    #[test]
    fn dct_basis_projection_is_permutation() {
        let g = dct_grid_laplacian(8).unwrap();
        let q = vec![1.0; 64];
        let basis = build_iagft(&g, &q).unwrap();
        let t = scaled_table(50).unwrap();
        let projected = project_quant_table(&t, basis.u(), basis.weights()).unwrap();
        // Scan position k corresponds to a frequency pair; its projected
        // step must equal the table entry at that pair.
        let (_, _, order) = dct_basis_2d(8);
        for (k, &(i, j)) in order.iter().enumerate() {
            let natural = i * 8 + j;
            assert!(
                (projected[k] - t[natural]).abs() < 1e-9,
                "scan {k} pair {:?}",
                (i, j)
            );
        }
    }

    #[test]
    fn flat_table_projects_to_itself() {
        let g = dct_grid_laplacian(8).unwrap();
        // A weighted basis far from the DCT still maps a flat table to
        // itself because the overlap weights are convex.
        let q: Vec<f64> = (0..64).map(|i| 0.5 + (i % 7) as f64 * 0.25).collect();
        let basis = build_iagft(&g, &q).unwrap();
        let t = [17.0; 64];
        let projected = project_quant_table(&t, basis.u(), basis.weights()).unwrap();
        for v in projected {
            assert!((v - 17.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quantizer_convention() {
        let table = vec![10.0, 2.0, 1.0];
        assert_eq!(quantize(&[0.0, 2.0, -3.6], &table), vec![0, 1, -4]);
        // Exactly one step quantizes to index 1.
        assert_eq!(quantize(&[10.0], &table[..1]), vec![1]);
        // Half a step rounds away from zero.
        assert_eq!(quantize(&[5.0, -5.0], &[10.0, 10.0]), vec![1, -1]);
    }

    #[test]
    fn reconstruction_error_bounded_by_half_step() {
        let table = scaled_table(37).unwrap();
        let mut state = 5u64;
        for _ in 0..200 {
            let coeffs: Vec<f64> = (0..64)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 33) % 4000) as f64 - 2000.0
                })
                .collect();
            let levels = quantize(&coeffs, &table);
            let back = dequantize(&levels, &table);
            for ((c, b), t) in coeffs.iter().zip(&back).zip(table.iter()) {
                assert!((c - b).abs() <= t / 2.0 + 1e-9);
            }
        }
    }
}
