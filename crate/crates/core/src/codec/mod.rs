//! The modified JPEG pipeline: block split, per-class IAGFT, projected
//! quantization tables, uniform quantization, entropy coding of the
//! coefficients and the class map, bitstream assembly, and the decoder.
//!
//! The entropy layer is baseline JPEG's (differential DC, run-length AC,
//! Annex K luminance Huffman tables) applied over the generalized scan
//! order, so codec variants differ only in the transform.

pub mod huffman;
pub mod quant;

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model::{ClassGraph, TrainedModel, TransformMode, WeightRule};
use crate::perceptual::{
    saliency_weights, ssim_weights, SsimParams, WeightMap, DEFAULT_SALIENCY_SMOOTH_SIGMA,
};
use crate::transforms::{build_iagft, build_separable, IagftBasis, SepTransform, SeparableMode};
use crate::weightvq::{assign_classes, ClassMap};

use huffman::BlockCodec;
use quant::{dequantize, project_quant_table, quantize, scaled_table};

pub const BITSTREAM_MAGIC: [u8; 4] = *b"PGCF";
pub const BITSTREAM_VERSION: u16 = 1;
const UNIT_WEIGHT_FLAG: u8 = 0x80;
const MAX_DIM: usize = 65535;
const MAX_PIXELS: usize = 1 << 24;

/// Which transform the codec applies on top of the model's graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformVariant {
    /// The model's own mode and perceptual weights.
    Standard,
    /// Plain GFT of the learned graphs: uniform weights, classes and side
    /// information unchanged.
    UnitWeights,
}

/// How encode-time perceptual weights are computed.
#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub rule: WeightRule,
    pub saliency: Option<GrayImage>,
    pub smooth_sigma: f64,
    pub variant: TransformVariant,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            rule: WeightRule::Ssim,
            saliency: None,
            smooth_sigma: DEFAULT_SALIENCY_SMOOTH_SIGMA,
            variant: TransformVariant::Standard,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodeStats {
    pub bpp: f64,
    pub bytes: usize,
    pub seconds: f64,
    pub clamped_coeffs: usize,
    pub class_counts: Vec<usize>,
    pub weights_clamped: usize,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub stats: EncodeStats,
}

enum ClassTransform {
    NonSep(IagftBasis),
    Sep(SepTransform),
}

struct ClassState {
    transform: ClassTransform,
    /// Projected quantization steps in scan order.
    table: Vec<f64>,
    /// Scan order for separable transforms (frequency pairs).
    scan: Vec<(usize, usize)>,
}

impl ClassState {
    fn forward_scan(&self, block: &[f64]) -> Result<Vec<f64>> {
        match &self.transform {
            ClassTransform::NonSep(b) => b.forward(block),
            ClassTransform::Sep(t) => {
                let coeffs = t.forward(block)?;
                Ok(self.scan.iter().map(|&(i, j)| coeffs[(i, j)]).collect())
            }
        }
    }

    fn inverse_scan(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        match &self.transform {
            ClassTransform::NonSep(b) => b.inverse(coeffs),
            ClassTransform::Sep(t) => {
                let m = t.side();
                let mut grid = DMatrix::<f64>::zeros(m, m);
                for (&(i, j), &c) in self.scan.iter().zip(coeffs) {
                    grid[(i, j)] = c;
                }
                t.inverse(&grid)
            }
        }
    }
}

/// Per-class transforms and projected tables for one (model, quality,
/// variant) triple. Built once per image, shared by every block.
pub struct CodecState {
    block_side: usize,
    classes: Vec<ClassState>,
}

impl CodecState {
    pub fn prepare(
        model: &TrainedModel,
        quality: u8,
        variant: TransformVariant,
    ) -> Result<CodecState> {
        let side = model.config.block_side;
        if side != 8 {
            return Err(Error::InvalidInput(format!(
                "codec supports block side 8, model uses {side}"
            )));
        }
        let n = side * side;
        let base_table = scaled_table(quality)?;
        let mut classes = Vec::with_capacity(model.classes.len());
        for (class, graph) in model.classes.iter().enumerate() {
            let weights: Vec<f64> = match variant {
                TransformVariant::Standard => model.class_weights(class).to_vec(),
                TransformVariant::UnitWeights => vec![1.0; n],
            };
            let (transform, scan) = match graph {
                ClassGraph::NonSep(g) => {
                    let basis = build_iagft(g, &weights)?;
                    (ClassTransform::NonSep(basis), Vec::new())
                }
                ClassGraph::Sep(pair) => {
                    let q_block = DMatrix::from_fn(side, side, |r, c| weights[r * side + c]);
                    let mode = match model.config.mode {
                        TransformMode::SepRank1 => SeparableMode::Rank1,
                        TransformMode::SepRowCol => SeparableMode::RowCol,
                        TransformMode::NonSep => {
                            return Err(Error::ModelMismatch(
                                "separable class graph in a non-separable model".into(),
                            ))
                        }
                    };
                    let t = build_separable(pair, &q_block, mode)?;
                    let scan = t.scan_order();
                    (ClassTransform::Sep(t), scan)
                }
            };
            let state = ClassState {
                transform,
                table: Vec::new(),
                scan,
            };
            let (inv, qvec) = assembled_inverse(&state, &weights, n)?;
            let table = project_quant_table(&base_table, &inv, &qvec)?;
            classes.push(ClassState { table, ..state });
        }
        Ok(CodecState {
            block_side: side,
            classes,
        })
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }
}

/// Assembled inverse-transform matrix (columns in scan order) and the
/// pixel-domain weight vector, for quant-table projection.
fn assembled_inverse(
    state: &ClassState,
    weights: &[f64],
    n: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    match &state.transform {
        ClassTransform::NonSep(b) => Ok((b.u().clone(), b.weights().to_vec())),
        ClassTransform::Sep(t) => {
            let mut inv = DMatrix::<f64>::zeros(n, n);
            let mut unit = vec![0.0; n];
            for k in 0..n {
                unit[k] = 1.0;
                let pixels = state.inverse_scan(&unit)?;
                unit[k] = 0.0;
                for (p, v) in pixels.iter().enumerate() {
                    inv[(p, k)] = *v;
                }
            }
            let qvec = match t {
                SepTransform::Rank1(b) => {
                    let m = b.side();
                    (0..n).map(|p| b.q_row[p / m] * b.q_col[p % m]).collect()
                }
                SepTransform::RowCol(_) => weights.to_vec(),
            };
            Ok((inv, qvec))
        }
    }
}

fn weight_map_for(
    img: &GrayImage,
    quality: u8,
    opts: &EncodeOptions,
) -> Result<WeightMap> {
    let delta = quant::delta_for_quality(quality)?.min(crate::perceptual::DELTA_CAP);
    match opts.rule {
        WeightRule::Ssim => ssim_weights(img, &SsimParams::new(delta)),
        WeightRule::Saliency => {
            let map = opts.saliency.as_ref().ok_or_else(|| {
                Error::InvalidInput("saliency rule requires a saliency map".into())
            })?;
            if map.width() < img.width() || map.height() < img.height() {
                return Err(Error::DimensionMismatch(format!(
                    "saliency map {}x{} smaller than image {}x{}",
                    map.width(),
                    map.height(),
                    img.width(),
                    img.height()
                )));
            }
            let cropped = crop_like(map, img)?;
            saliency_weights(&cropped, delta, opts.smooth_sigma)
        }
    }
}

fn crop_like(map: &GrayImage, img: &GrayImage) -> Result<GrayImage> {
    if map.width() == img.width() && map.height() == img.height() {
        return Ok(map.clone());
    }
    let x0 = (map.width() - img.width()) / 2;
    let y0 = (map.height() - img.height()) / 2;
    let mut data = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            data.push(map.get(x0 + x, y0 + y));
        }
    }
    GrayImage::new(img.width(), img.height(), data)
}

/// Transform + quantization stage: every block mapped to quantized
/// coefficient levels in scan order. Levels are clamped to the entropy
/// layer's codable range; the clamp count is reported.
pub fn quantized_blocks(
    img: &GrayImage,
    state: &CodecState,
    classes: &ClassMap,
) -> Result<(Vec<Vec<i32>>, usize)> {
    let side = state.block_side;
    let bx = img.width() / side;
    let by = img.height() / side;
    if classes.blocks_x != bx || classes.blocks_y != by {
        return Err(Error::DimensionMismatch(
            "class map does not match the block grid".into(),
        ));
    }
    let mut out = Vec::with_capacity(bx * by);
    let mut clamped = 0usize;
    for b_y in 0..by {
        for b_x in 0..bx {
            let class = classes.label(b_x, b_y) as usize;
            let cs = &state.classes[class];
            let mut block = img.block(b_x, b_y, side);
            for v in &mut block {
                *v -= 128.0;
            }
            let coeffs = cs.forward_scan(&block)?;
            let mut levels = quantize(&coeffs, &cs.table);
            let dc = levels[0].clamp(-1024, 1023);
            if dc != levels[0] {
                clamped += 1;
                levels[0] = dc;
            }
            for l in levels[1..].iter_mut() {
                let c = (*l).clamp(-1023, 1023);
                if c != *l {
                    clamped += 1;
                    *l = c;
                }
            }
            out.push(levels);
        }
    }
    Ok((out, clamped))
}

/// Run-length codes a class map: u32 run count, then (class u8, run u16)
/// pairs in raster order.
pub fn code_class_map(cm: &ClassMap) -> Vec<u8> {
    let mut runs: Vec<(u8, u16)> = Vec::new();
    for &label in &cm.labels {
        match runs.last_mut() {
            Some((c, r)) if *c == label && *r < u16::MAX => *r += 1,
            _ => runs.push((label, 1)),
        }
    }
    let mut out = Vec::with_capacity(4 + runs.len() * 3);
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for (c, r) in runs {
        out.push(c);
        out.extend_from_slice(&r.to_le_bytes());
    }
    out
}

pub fn decode_class_map(
    bytes: &[u8],
    blocks_x: usize,
    blocks_y: usize,
    n_classes: usize,
) -> Result<ClassMap> {
    if bytes.len() < 4 {
        return Err(Error::parse(0, "class map segment too short"));
    }
    let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() != 4 + count * 3 {
        return Err(Error::parse(4, "class map length mismatch"));
    }
    let total = blocks_x * blocks_y;
    let mut labels = Vec::with_capacity(total);
    for i in 0..count {
        let off = 4 + i * 3;
        let class = bytes[off];
        let run = u16::from_le_bytes(bytes[off + 1..off + 3].try_into().unwrap()) as usize;
        if run == 0 || (class as usize) >= n_classes {
            return Err(Error::parse(off, "invalid class map run"));
        }
        if labels.len() + run > total {
            return Err(Error::parse(off, "class map runs exceed block count"));
        }
        labels.extend(std::iter::repeat(class).take(run));
    }
    if labels.len() != total {
        return Err(Error::parse(bytes.len(), "class map runs cover too few blocks"));
    }
    ClassMap::new(labels, blocks_x, blocks_y, n_classes)
}

fn mode_byte(model: &TrainedModel, variant: TransformVariant) -> u8 {
    let mut b = model.config.mode.code();
    if variant == TransformVariant::UnitWeights {
        b |= UNIT_WEIGHT_FLAG;
    }
    b
}

/// Encodes a grayscale image. The image is center-cropped to a block
/// multiple first; the class map and quality are embedded so decode needs
/// only the bitstream and the matching model file.
pub fn encode(
    img: &GrayImage,
    model: &TrainedModel,
    quality: u8,
    opts: &EncodeOptions,
) -> Result<Encoded> {
    let start = Instant::now();
    let side = model.config.block_side;
    let cropped = img.center_crop_to_multiple(side)?;
    let wmap = weight_map_for(&cropped, quality, opts)?;
    let classes = assign_classes(&wmap, &model.codebook, side)?;
    let state = CodecState::prepare(model, quality, opts.variant)?;
    let (levels, clamped) = quantized_blocks(&cropped, &state, &classes)?;
    let coeff_bytes = BlockCodec::luma(side * side).encode_blocks(&levels)?;
    let cm_bytes = code_class_map(&classes);

    let mut bytes = Vec::with_capacity(32 + cm_bytes.len() + coeff_bytes.len());
    bytes.extend_from_slice(&BITSTREAM_MAGIC);
    bytes.extend_from_slice(&BITSTREAM_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(cropped.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(cropped.height() as u32).to_le_bytes());
    bytes.push(quality);
    bytes.push(mode_byte(model, opts.variant));
    bytes.push(model.config.n_c as u8);
    bytes.extend_from_slice(&model.hash().to_le_bytes());
    bytes.extend_from_slice(&(cm_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&cm_bytes);
    bytes.extend_from_slice(&(coeff_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&coeff_bytes);

    let mut class_counts = vec![0usize; model.config.n_c];
    for &l in &classes.labels {
        class_counts[l as usize] += 1;
    }
    let bpp = bytes.len() as f64 * 8.0 / (cropped.width() * cropped.height()) as f64;
    Ok(Encoded {
        stats: EncodeStats {
            bpp,
            bytes: bytes.len(),
            seconds: start.elapsed().as_secs_f64(),
            clamped_coeffs: clamped,
            class_counts,
            weights_clamped: wmap.clamped,
        },
        bytes,
    })
}

struct Header {
    width: usize,
    height: usize,
    quality: u8,
    mode: u8,
    n_c: usize,
    model_hash: u64,
    cm_range: (usize, usize),
    coeff_range: (usize, usize),
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let need = |pos: usize, n: usize| -> Result<()> {
        if pos + n > bytes.len() {
            Err(Error::parse(pos, "bitstream truncated"))
        } else {
            Ok(())
        }
    };
    need(0, 4)?;
    if bytes[0..4] != BITSTREAM_MAGIC {
        return Err(Error::parse(0, "bad bitstream magic"));
    }
    need(4, 2)?;
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != BITSTREAM_VERSION {
        return Err(Error::parse(4, format!("unsupported bitstream version {version}")));
    }
    need(6, 8)?;
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    need(14, 3)?;
    let quality = bytes[14];
    let mode = bytes[15];
    let n_c = bytes[16] as usize;
    need(17, 8)?;
    let model_hash = u64::from_le_bytes(bytes[17..25].try_into().unwrap());
    need(25, 4)?;
    let cm_len = u32::from_le_bytes(bytes[25..29].try_into().unwrap()) as usize;
    need(29, cm_len)?;
    let cm_range = (29, 29 + cm_len);
    let pos = cm_range.1;
    need(pos, 4)?;
    let coeff_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    need(pos + 4, coeff_len)?;
    let coeff_range = (pos + 4, pos + 4 + coeff_len);
    if coeff_range.1 != bytes.len() {
        return Err(Error::parse(coeff_range.1, "trailing bytes after coefficient segment"));
    }
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(Error::parse(6, "image dimensions out of range"));
    }
    if width.saturating_mul(height) > MAX_PIXELS {
        return Err(Error::parse(6, "image too large"));
    }
    Ok(Header {
        width,
        height,
        quality,
        mode,
        n_c,
        model_hash,
        cm_range,
        coeff_range,
    })
}

/// Parses a bitstream down to its quantized coefficient blocks.
pub fn decode_levels(
    bytes: &[u8],
    model: &TrainedModel,
) -> Result<(CodecState, ClassMap, Vec<Vec<i32>>, usize, usize, u8)> {
    let header = parse_header(bytes)?;
    if header.model_hash != model.hash() {
        return Err(Error::ModelMismatch(
            "bitstream was encoded with a different model".into(),
        ));
    }
    let variant = if header.mode & UNIT_WEIGHT_FLAG != 0 {
        TransformVariant::UnitWeights
    } else {
        TransformVariant::Standard
    };
    if header.mode & !UNIT_WEIGHT_FLAG != model.config.mode.code() {
        return Err(Error::ModelMismatch("bitstream mode disagrees with model".into()));
    }
    if header.n_c != model.config.n_c {
        return Err(Error::ModelMismatch("class count disagrees with model".into()));
    }
    let side = model.config.block_side;
    if header.width % side != 0 || header.height % side != 0 {
        return Err(Error::parse(6, "dimensions are not block multiples"));
    }
    if header.quality == 0 || header.quality > 100 {
        return Err(Error::parse(14, "quality out of range"));
    }
    let bx = header.width / side;
    let by = header.height / side;
    let classes = decode_class_map(
        &bytes[header.cm_range.0..header.cm_range.1],
        bx,
        by,
        model.config.n_c,
    )?;
    let state = CodecState::prepare(model, header.quality, variant)?;
    let levels = BlockCodec::luma(side * side)
        .decode_blocks(&bytes[header.coeff_range.0..header.coeff_range.1], bx * by)?;
    Ok((state, classes, levels, header.width, header.height, header.quality))
}

/// Full decode to a grayscale image.
pub fn decode(bytes: &[u8], model: &TrainedModel) -> Result<GrayImage> {
    let (state, classes, levels, width, height, _) = decode_levels(bytes, model)?;
    let side = state.block_side;
    let bx = width / side;
    let mut img = GrayImage::constant(width, height, 0.0)?;
    for (k, block_levels) in levels.iter().enumerate() {
        let (b_y, b_x) = (k / bx, k % bx);
        let class = classes.label(b_x, b_y) as usize;
        let cs = &state.classes[class];
        let coeffs = dequantize(block_levels, &cs.table);
        let mut pixels = cs.inverse_scan(&coeffs)?;
        for v in &mut pixels {
            *v = (*v + 128.0).clamp(0.0, 255.0);
        }
        img.set_block(b_x, b_y, side, &pixels);
    }
    Ok(img)
}
