//! Rate-distortion evaluation harness: quality sweeps, CSV emission, and
//! per-image / aggregate BD-rate tables against the DCT anchor.

use std::collections::BTreeMap;
use std::io::Write;

use crate::codec::{decode, encode, EncodeOptions, TransformVariant};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::metrics::{bd_rate, ms_ssim, psnr, ssim, RdCurve};
use crate::model::TrainedModel;

/// One measured rate-distortion point.
#[derive(Debug, Clone)]
pub struct RdRecord {
    pub image: String,
    pub codec: String,
    pub quality: u8,
    pub bpp: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub msssim: f64,
    pub encode_seconds: f64,
}

/// Encodes and decodes one image across a quality sweep, measuring rate
/// and quality against the cropped original.
pub fn rd_sweep(
    img: &GrayImage,
    image_id: &str,
    codec_id: &str,
    model: &TrainedModel,
    variant: TransformVariant,
    qualities: &[u8],
    opts: &EncodeOptions,
) -> Result<Vec<RdRecord>> {
    let reference = img.center_crop_to_multiple(model.config.block_side)?;
    let mut records = Vec::with_capacity(qualities.len());
    for &q in qualities {
        let mut opts = opts.clone();
        opts.variant = variant;
        let encoded = encode(img, model, q, &opts)?;
        let decoded = decode(&encoded.bytes, model)?;
        records.push(RdRecord {
            image: image_id.to_string(),
            codec: codec_id.to_string(),
            quality: q,
            bpp: encoded.stats.bpp,
            psnr: psnr(&reference, &decoded)?,
            ssim: ssim(&reference, &decoded)?,
            msssim: ms_ssim(&reference, &decoded)?,
            encode_seconds: encoded.stats.seconds,
        });
    }
    Ok(records)
}

/// Builds the MS-SSIM rate-distortion curve for one (image, codec) pair.
/// Ties or inversions in rate (possible from entropy-coder granularity at
/// neighboring qualities) are collapsed, keeping the better metric.
pub fn curve_for(records: &[RdRecord], image: &str, codec: &str) -> Result<RdCurve> {
    let mut pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.image == image && r.codec == codec)
        .map(|r| (r.bpp, r.msssim))
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no records for image {image} codec {codec}"
        )));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (r, m) in pts {
        match dedup.last_mut() {
            Some((lr, lm)) if r <= *lr => {
                if m > *lm {
                    *lm = m;
                }
            }
            _ => dedup.push((r, m)),
        }
    }
    RdCurve::new(image, codec, "msssim", dedup)
}

/// Per-image BD-rates of `test_codec` against `anchor_codec`, with the
/// aggregate row (average, sample standard deviation, min, max).
#[derive(Debug, Clone)]
pub struct BdSummary {
    pub codec: String,
    pub per_image: Vec<(String, f64)>,
    pub avg: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn bd_summary(
    records: &[RdRecord],
    anchor_codec: &str,
    test_codec: &str,
) -> Result<BdSummary> {
    let mut images: Vec<String> = Vec::new();
    for r in records {
        if !images.contains(&r.image) {
            images.push(r.image.clone());
        }
    }
    let mut per_image = Vec::new();
    for image in &images {
        let anchor = curve_for(records, image, anchor_codec)?;
        let test = curve_for(records, image, test_codec)?;
        per_image.push((image.clone(), bd_rate(&anchor, &test)?));
    }
    if per_image.is_empty() {
        return Err(Error::InvalidInput("no images to summarize".into()));
    }
    let values: Vec<f64> = per_image.iter().map(|(_, v)| *v).collect();
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>()
            / (values.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BdSummary {
        codec: test_codec.to_string(),
        per_image,
        avg,
        std,
        min,
        max,
    })
}

/// Emits records as CSV with the fixed column set.
pub fn write_csv(records: &[RdRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "image,codec,quality,bpp,psnr,ssim,msssim")?;
    for r in records {
        let psnr = if r.psnr.is_finite() {
            format!("{:.6}", r.psnr)
        } else {
            "inf".to_string()
        };
        writeln!(
            out,
            "{},{},{},{:.6},{},{:.8},{:.8}",
            r.image, r.codec, r.quality, r.bpp, psnr, r.ssim, r.msssim
        )?;
    }
    Ok(())
}

/// Mean encode time per codec, for the complexity comparison.
pub fn mean_encode_seconds(records: &[RdRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.codec.clone()).or_insert((0.0, 0));
        e.0 += r.encode_seconds;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_image;

    #[test]
    fn sweep_and_summary_on_anchor() {
        let model = TrainedModel::dct_anchor(8).unwrap();
        let img = synth_image(42, 192, 192);
        let qualities = [30u8, 50, 70, 90];
        let mut records = rd_sweep(
            &img,
            "img0",
            "anchor",
            &model,
            TransformVariant::Standard,
            &qualities,
            &EncodeOptions::default(),
        )
        .unwrap();
        // Self-comparison of the anchor with itself is exactly zero.
        let mut dup = records.clone();
        for r in &mut dup {
            r.codec = "copy".into();
        }
        records.extend(dup);
        let summary = bd_summary(&records, "anchor", "copy").unwrap();
        assert_eq!(summary.avg, 0.0);
        assert_eq!(summary.min, 0.0);
        assert_eq!(summary.max, 0.0);

        let mut csv = Vec::new();
        write_csv(&records, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("image,codec,quality,bpp,psnr,ssim,msssim\n"));
        assert_eq!(text.lines().count(), 1 + records.len());
    }

    #[test]
    fn rate_grows_with_quality() {
        let model = TrainedModel::dct_anchor(8).unwrap();
        let img = synth_image(9, 184, 184);
        let records = rd_sweep(
            &img,
            "i",
            "anchor",
            &model,
            TransformVariant::Standard,
            &[20, 50, 80],
            &EncodeOptions::default(),
        )
        .unwrap();
        assert!(records[0].bpp < records[1].bpp);
        assert!(records[1].bpp < records[2].bpp);
        assert!(records[0].msssim < records[2].msssim);
    }
}
