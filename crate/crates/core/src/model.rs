//! Trained model container and its binary file format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic "PGFT" | version u16 | block_side u8 | n_c u8 | mode u8 |
//! topology kind u8 | seed u64 | rule u8 | train_delta_quality u8 |
//! codebook: n_c u16, n u16, n_c * n f64 |
//! per class: graph blob(s), then the class weight vector (n f64)
//! ```
//!
//! A graph blob is `kind u8 | node_count u16 | upper-triangle edge weights
//! as f64`. Non-separable classes store one blob, separable classes store
//! the row factor then the column factor.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graphs::{
    dct_grid_laplacian, topology_mask, CglMatrix, EdgeMask, Topology, TopologyKind,
};
use crate::graphlearn::SeparablePair;
use crate::spectral::SymMatrix;
use crate::weightvq::WeightCodebook;

pub const MODEL_MAGIC: [u8; 4] = *b"PGFT";
pub const MODEL_VERSION: u16 = 1;

/// Which transform family the model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMode {
    NonSep,
    SepRowCol,
    SepRank1,
}

impl TransformMode {
    pub fn code(self) -> u8 {
        match self {
            TransformMode::NonSep => 0,
            TransformMode::SepRowCol => 1,
            TransformMode::SepRank1 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => TransformMode::NonSep,
            1 => TransformMode::SepRowCol,
            2 => TransformMode::SepRank1,
            _ => return Err(Error::InvalidInput(format!("unknown mode code {code}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformMode::NonSep => "nonsep",
            TransformMode::SepRowCol => "sep-rc",
            TransformMode::SepRank1 => "sep-r1",
        }
    }

    pub fn is_separable(self) -> bool {
        !matches!(self, TransformMode::NonSep)
    }
}

/// Weight rule used at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    Ssim,
    Saliency,
}

impl WeightRule {
    pub fn code(self) -> u8 {
        match self {
            WeightRule::Ssim => 0,
            WeightRule::Saliency => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => WeightRule::Ssim,
            1 => WeightRule::Saliency,
            _ => return Err(Error::InvalidInput(format!("unknown rule code {code}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightRule::Ssim => "ssim",
            WeightRule::Saliency => "saliency",
        }
    }
}

/// Configuration echo stored in the model file.
#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub block_side: usize,
    pub n_c: usize,
    pub mode: TransformMode,
    pub topology: TopologyKind,
    pub seed: u64,
    pub rule: WeightRule,
    pub train_delta_quality: u8,
}

/// Learned statistical model of one perceptual class.
#[derive(Debug, Clone)]
pub enum ClassGraph {
    NonSep(CglMatrix),
    Sep(SeparablePair),
}

/// Everything the codec needs at encode and decode time.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub codebook: WeightCodebook,
    pub classes: Vec<ClassGraph>,
}

impl TrainedModel {
    /// Baseline model: one class of uniform weights over the unit-weight
    /// grid graph, i.e. plain JPEG's DCT inside this codec's pipeline.
    pub fn dct_anchor(block_side: usize) -> Result<TrainedModel> {
        let n = block_side * block_side;
        Ok(TrainedModel {
            config: ModelConfig {
                block_side,
                n_c: 1,
                mode: TransformMode::NonSep,
                topology: TopologyKind::Grid4,
                seed: 0,
                rule: WeightRule::Ssim,
                train_delta_quality: 50,
            },
            codebook: WeightCodebook {
                codewords: vec![vec![1.0; n]],
                n,
            },
            classes: vec![ClassGraph::NonSep(dct_grid_laplacian(block_side)?)],
        })
    }

    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.codebook.codewords[class]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(self.config.block_side as u8);
        out.push(self.config.n_c as u8);
        out.push(self.config.mode.code());
        out.push(self.config.topology.code());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.push(self.config.rule.code());
        out.push(self.config.train_delta_quality);
        out.extend_from_slice(&(self.codebook.n_classes() as u16).to_le_bytes());
        out.extend_from_slice(&(self.codebook.n as u16).to_le_bytes());
        for cw in &self.codebook.codewords {
            for v in cw {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (class, graph) in self.classes.iter().enumerate() {
            match graph {
                ClassGraph::NonSep(g) => write_graph(&mut out, g),
                ClassGraph::Sep(pair) => {
                    write_graph(&mut out, &pair.m_row);
                    write_graph(&mut out, &pair.m_col);
                }
            }
            for v in &self.codebook.codewords[class] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        if magic != MODEL_MAGIC {
            return Err(Error::parse(0, "bad model magic"));
        }
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(Error::parse(4, format!("unsupported model version {version}")));
        }
        let block_side = r.u8()? as usize;
        let n_c = r.u8()? as usize;
        let mode = TransformMode::from_code(r.u8()?)?;
        let topology = TopologyKind::from_code(r.u8()?)?;
        let seed = r.u64()?;
        let rule = WeightRule::from_code(r.u8()?)?;
        let train_delta_quality = r.u8()?;
        if block_side < 2 || n_c == 0 {
            return Err(Error::parse(r.pos, "invalid model header"));
        }
        let cb_classes = r.u16()? as usize;
        let cb_n = r.u16()? as usize;
        if cb_classes != n_c || cb_n != block_side * block_side {
            return Err(Error::parse(r.pos, "codebook does not match header"));
        }
        let mut codewords = Vec::with_capacity(n_c);
        for _ in 0..n_c {
            let mut cw = Vec::with_capacity(cb_n);
            for _ in 0..cb_n {
                let v = r.f64()?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::parse(r.pos, "codeword entries must be positive"));
                }
                cw.push(v);
            }
            codewords.push(cw);
        }
        let mut classes = Vec::with_capacity(n_c);
        for class in 0..n_c {
            let graph = if mode.is_separable() {
                let m_row = read_graph(&mut r, block_side)?;
                let m_col = read_graph(&mut r, block_side)?;
                ClassGraph::Sep(SeparablePair { m_row, m_col })
            } else {
                ClassGraph::NonSep(read_graph(&mut r, block_side * block_side)?)
            };
            for k in 0..cb_n {
                let v = r.f64()?;
                if v.to_bits() != codewords[class][k].to_bits() {
                    return Err(Error::parse(
                        r.pos,
                        "class weight echo disagrees with codebook",
                    ));
                }
            }
            classes.push(graph);
        }
        if !r.done() {
            return Err(Error::parse(r.pos, "trailing bytes after model payload"));
        }
        Ok(TrainedModel {
            config: ModelConfig {
                block_side,
                n_c,
                mode,
                topology,
                seed,
                rule,
                train_delta_quality,
            },
            codebook: WeightCodebook {
                codewords,
                n: cb_n,
            },
            classes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        TrainedModel::from_bytes(&std::fs::read(path)?)
    }

    /// 64-bit FNV-1a over the serialized model; embedded in bitstreams to
    /// refuse decoding with the wrong transforms.
    pub fn hash(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Picks the serialization kind whose canonical mask equals the graph's.
fn mask_kind(mask: &EdgeMask) -> TopologyKind {
    let n = mask.node_count();
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n && side >= 2 {
        for kind in [TopologyKind::Grid4, TopologyKind::Grid8] {
            if let Ok(m) = topology_mask(&Topology::new(kind, side)) {
                if &m == mask {
                    return kind;
                }
            }
        }
    }
    if let Ok(m) = topology_mask(&Topology::new(TopologyKind::Path, n)) {
        if &m == mask {
            return TopologyKind::Path;
        }
    }
    TopologyKind::Full
}

fn write_graph(out: &mut Vec<u8>, g: &CglMatrix) {
    out.push(mask_kind(g.mask()).code());
    out.extend_from_slice(&(g.dim() as u16).to_le_bytes());
    for w in g.packed_weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

fn read_graph(r: &mut Reader, expect_nodes: usize) -> Result<CglMatrix> {
    let kind = TopologyKind::from_code(r.u8()?)
        .map_err(|_| Error::parse(r.pos, "bad graph kind"))?;
    let n = r.u16()? as usize;
    if n != expect_nodes {
        return Err(Error::parse(
            r.pos,
            format!("graph covers {n} nodes, expected {expect_nodes}"),
        ));
    }
    let mask = match kind {
        TopologyKind::Full => EdgeMask::complete(n),
        TopologyKind::Path => topology_mask(&Topology::new(TopologyKind::Path, n))
            .map_err(|e| Error::parse(r.pos, e.to_string()))?,
        TopologyKind::Grid4 | TopologyKind::Grid8 => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(Error::parse(r.pos, "grid graph size is not square"));
            }
            topology_mask(&Topology::new(kind, side))
                .map_err(|e| Error::parse(r.pos, e.to_string()))?
        }
    };
    let mut w = SymMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = r.f64()?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parse(r.pos, "edge weights must be nonnegative"));
            }
            w.set(i, j, v);
        }
    }
    CglMatrix::from_weights_masked(&w, mask).map_err(|e| Error::parse(r.pos, e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.pos, "unexpected end of model file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
