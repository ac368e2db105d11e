//! Graph learning: per-class covariance estimation, constrained CGL
//! estimation by coordinate descent on the log-determinant objective, and
//! the bi-convex alternation that yields separable Laplacian pairs.
//!
//! The CGL estimate minimizes
//!
//!   J(L) = -log det(L + 1 1^T / n) + tr(L S)
//!
//! over Laplacians with a fixed support mask, nonpositive off-diagonals
//! and zero row sums. Writing L as a sum of weighted edge terms
//! `w_e (e_i - e_j)(e_i - e_j)^T` turns this into a convex problem in the
//! nonnegative edge weights, which cyclic exact coordinate minimization
//! solves with rank-1 determinant and inverse updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::{CglMatrix, EdgeMask, Topology, TopologyKind};
use crate::imageio::GrayImage;
use crate::model::{ClassGraph, ModelConfig, TrainedModel, TransformMode, WeightRule};
use crate::perceptual::{saliency_weights, ssim_weights, SsimParams};
use crate::spectral::{logdet_pd, SymMatrix};
use crate::weightvq::{assign_classes, extract_block_weights, train_codebook_traced};

/// Covariance of one perceptual class, estimated from its blocks after
/// removing each block's mean intensity.
#[derive(Debug, Clone)]
pub struct ClassCovariance {
    pub s: SymMatrix,
    /// Number of contributing blocks.
    pub count: usize,
}

/// Pair of factor Laplacians for a separable transform. `m_row` couples
/// the block's row indices (vertical correlation), `m_col` its column
/// indices.
#[derive(Debug, Clone)]
pub struct SeparablePair {
    pub m_row: CglMatrix,
    pub m_col: CglMatrix,
}

/// Termination controls for the CGL coordinate descent.
#[derive(Debug, Clone, Copy)]
pub struct CglLearnOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CglLearnOptions {
    fn default() -> Self {
        CglLearnOptions {
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

/// Termination controls for the separable alternation.
#[derive(Debug, Clone, Copy)]
pub struct SepLearnOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub inner: CglLearnOptions,
}

impl Default for SepLearnOptions {
    fn default() -> Self {
        SepLearnOptions {
            tol: 1e-7,
            max_sweeps: 50,
            inner: CglLearnOptions::default(),
        }
    }
}

/// Sample covariance of the blocks carrying `class_id`, with each block
/// centered at its own mean intensity. Ill-conditioned estimates get a
/// small diagonal load.
pub fn class_covariance(
    blocks: &[Vec<f64>],
    labels: &[u8],
    class_id: u8,
) -> Result<ClassCovariance> {
    if blocks.len() != labels.len() {
        return Err(Error::DimensionMismatch(
            "one label per block required".into(),
        ));
    }
    let members: Vec<&Vec<f64>> = blocks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == class_id)
        .map(|(b, _)| b)
        .collect();
    if members.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "class {} has {} blocks, need at least 2",
            class_id,
            members.len()
        )));
    }
    let n = members[0].len();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut centered = DVector::<f64>::zeros(n);
    for block in &members {
        let mean = block.iter().sum::<f64>() / n as f64;
        for (i, v) in block.iter().enumerate() {
            centered[i] = v - mean;
        }
        acc.ger(1.0, &centered, &centered, 1.0);
    }
    acc /= (members.len() - 1) as f64;
    let mut s = SymMatrix::from_dense(&acc);

    // Diagonal load when the spectrum is too spread for stable inversion.
    let eig = crate::spectral::sym_eig(&s)?;
    let max = eig.values[n - 1].abs();
    let min = eig.values[0].max(0.0);
    if max > 0.0 && (min <= 0.0 || max / min > 1e10) {
        let eps = 1e-6 * s.trace() / n as f64;
        for i in 0..n {
            s.set(i, i, s.get(i, i) + eps);
        }
    }
    Ok(ClassCovariance {
        s,
        count: members.len(),
    })
}

/// `-log det(L + 1 1^T / n) + tr(L S)`, the learning objective.
pub fn cgl_objective(l: &CglMatrix, s: &SymMatrix) -> Result<f64> {
    let n = l.dim();
    let mut theta = l.laplacian().to_dense();
    let jn = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n {
            theta[(i, j)] += jn;
        }
    }
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += l.laplacian().get(i, j) * s.get(i, j);
        }
    }
    Ok(-logdet_pd(&theta)? + trace)
}

/// `-log det(M) + tr(M S)` for a dense positive definite M. Used to
/// cross-check the factored separable objective.
pub fn dense_objective(m: &DMatrix<f64>, s: &SymMatrix) -> Result<f64> {
    let n = m.nrows();
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += m[(i, j)] * s.get(i, j);
        }
    }
    Ok(-logdet_pd(m)? + trace)
}

struct EdgeProblem {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// Per-edge quadratic cost `(e_i - e_j)^T S (e_i - e_j)`.
    gains: Vec<f64>,
}

impl EdgeProblem {
    fn new(s: &SymMatrix, mask: &EdgeMask) -> Self {
        let edges = mask.edges();
        let gains = edges
            .iter()
            .map(|&(i, j)| {
                let g = s.get(i, i) + s.get(j, j) - 2.0 * s.get(i, j);
                // Zero difference-variance makes the objective unbounded
                // along this edge; keep a tiny floor.
                g.max(1e-12)
            })
            .collect();
        EdgeProblem {
            n: s.dim(),
            edges,
            gains,
        }
    }

    fn theta(&self, weights: &[f64]) -> DMatrix<f64> {
        let jn = 1.0 / self.n as f64;
        let mut theta = DMatrix::from_element(self.n, self.n, jn);
        for (&(i, j), &w) in self.edges.iter().zip(weights) {
            theta[(i, i)] += w;
            theta[(j, j)] += w;
            theta[(i, j)] -= w;
            theta[(j, i)] -= w;
        }
        theta
    }

    fn objective(&self, weights: &[f64]) -> Result<f64> {
        let trace: f64 = self
            .gains
            .iter()
            .zip(weights)
            .map(|(g, w)| g * w)
            .sum();
        Ok(-logdet_pd(&self.theta(weights))? + trace)
    }
}

/// Cyclic exact coordinate descent over edge weights. Every update solves
/// the 1-D restriction in closed form and projects onto w >= 0, so the
/// objective never increases and the iterates stay feasible.
fn solve_edge_weights(
    problem: &EdgeProblem,
    init: Vec<f64>,
    opts: &CglLearnOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut weights = init;
    let mut trace = vec![problem.objective(&weights)?];
    let mut buf = DVector::<f64>::zeros(problem.n);
    for _ in 0..opts.max_iter {
        // Fresh inverse each sweep; rank-1 updates drift over thousands of
        // edge steps.
        let theta = problem.theta(&weights);
        let mut theta_inv = theta
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidInput(
                    "objective became singular; covariance is not usable".into(),
                )
            })?
            .inverse();
        for (e, &(i, j)) in problem.edges.iter().enumerate() {
            let g = problem.gains[e];
            let c = theta_inv[(i, i)] + theta_inv[(j, j)] - 2.0 * theta_inv[(i, j)];
            if c <= 0.0 {
                continue;
            }
            let step = (1.0 / g - 1.0 / c).max(-weights[e]);
            if step == 0.0 {
                continue;
            }
            let denom = 1.0 + step * c;
            if denom <= 0.0 {
                continue;
            }
            weights[e] += step;
            // Sherman-Morrison downdate of the inverse for the rank-1
            // change step * (e_i - e_j)(e_i - e_j)^T.
            for r in 0..problem.n {
                buf[r] = theta_inv[(r, i)] - theta_inv[(r, j)];
            }
            let scale = step / denom;
            for r in 0..problem.n {
                let br = buf[r];
                if br == 0.0 {
                    continue;
                }
                for cidx in 0..problem.n {
                    theta_inv[(r, cidx)] -= scale * br * buf[cidx];
                }
            }
        }
        let obj = problem.objective(&weights)?;
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() <= opts.tol * prev.abs().max(1.0) {
            break;
        }
    }
    Ok((weights, trace))
}

fn check_covariance(s: &ClassCovariance) -> Result<()> {
    let eig = crate::spectral::sym_eig(&s.s)?;
    if eig.values[0] < -1e-8 {
        return Err(Error::InvalidInput(format!(
            "covariance is not positive semidefinite (min eigenvalue {})",
            eig.values[0]
        )));
    }
    Ok(())
}

/// Feasible starting point: project the diagonally loaded inverse
/// covariance onto the constraint set, keeping sign-correct off-diagonals
/// and flooring every allowed edge so the initial graph is connected.
fn initial_weights(s: &SymMatrix, edges: &[(usize, usize)]) -> Vec<f64> {
    let n = s.dim();
    let mut loaded = s.to_dense();
    let load = 1e-3 * (s.trace() / n as f64).max(1e-12);
    for i in 0..n {
        loaded[(i, i)] += load;
    }
    let precision = match loaded.cholesky() {
        Some(ch) => ch.inverse(),
        None => return vec![1.0; edges.len()],
    };
    let mean_diag = (0..n).map(|i| precision[(i, i)]).sum::<f64>() / n as f64;
    let floor = 1e-3 * mean_diag.abs().max(1e-12);
    edges
        .iter()
        .map(|&(i, j)| (-precision[(i, j)]).max(floor))
        .collect()
}

/// Learns a CGL under a topology constraint. Returns the Laplacian and
/// the per-sweep objective trajectory (non-increasing).
pub fn learn_cgl(
    s: &ClassCovariance,
    topo: &Topology,
    opts: &CglLearnOptions,
) -> Result<(CglMatrix, Vec<f64>)> {
    if topo.node_count() != s.s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "topology covers {} nodes, covariance {}",
            topo.node_count(),
            s.s.dim()
        )));
    }
    check_covariance(s)?;
    let mask = crate::graphs::topology_mask(topo)?;
    let problem = EdgeProblem::new(&s.s, &mask);
    let init = initial_weights(&s.s, &problem.edges);
    let (weights, trace) = solve_edge_weights(&problem, init, opts)?;
    let cgl = CglMatrix::from_edge_weights(mask, &problem.edges, &weights)?;
    Ok((cgl, trace))
}

fn warm_start_weights(cgl: &CglMatrix, edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(i, j)| cgl.edge_weight(i, j))
        .collect()
}

/// `G(c,c') = sum_{r,r'} A(r,r') S(r' m + c', r m + c)`: contracts the row
/// factor out of the full covariance, leaving the effective covariance of
/// the column subproblem. `contract_cols` is the mirror image.
fn contract_rows(a: &DMatrix<f64>, s: &SymMatrix, m: usize) -> SymMatrix {
    let mut g = DMatrix::<f64>::zeros(m, m);
    for c in 0..m {
        for cp in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                for rp in 0..m {
                    acc += a[(r, rp)] * s.get(rp * m + cp, r * m + c);
                }
            }
            g[(c, cp)] = acc;
        }
    }
    SymMatrix::from_dense(&g)
}

fn contract_cols(b: &DMatrix<f64>, s: &SymMatrix, m: usize) -> SymMatrix {
    let mut g = DMatrix::<f64>::zeros(m, m);
    for r in 0..m {
        for rp in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                for cp in 0..m {
                    acc += b[(c, cp)] * s.get(rp * m + cp, r * m + c);
                }
            }
            g[(r, rp)] = acc;
        }
    }
    SymMatrix::from_dense(&g)
}

fn plus_j(l: &CglMatrix) -> DMatrix<f64> {
    let m = l.dim();
    let jm = 1.0 / m as f64;
    let mut out = l.laplacian().to_dense();
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] += jm;
        }
    }
    out
}

/// Separable objective in factored form:
/// `-m log det(M_r + J) - m log det(M_c + J) + tr(((M_r + J) x (M_c + J)) S)`
/// without ever assembling the Kronecker product.
pub fn separable_objective(pair: &SeparablePair, s: &SymMatrix) -> Result<f64> {
    let m = pair.m_row.dim();
    if pair.m_col.dim() != m || s.dim() != m * m {
        return Err(Error::DimensionMismatch(
            "factor sizes do not match the covariance".into(),
        ));
    }
    let a = plus_j(&pair.m_row);
    let b = plus_j(&pair.m_col);
    let g = contract_rows(&a, s, m);
    let mut trace = 0.0;
    for i in 0..m {
        for j in 0..m {
            trace += b[(i, j)] * g.get(i, j);
        }
    }
    Ok(-(m as f64) * logdet_pd(&a)? - (m as f64) * logdet_pd(&b)? + trace)
}

/// Assembled `(M_r + J) (Kronecker) (M_c + J)` for consistency checks and
/// small-scale oracles.
pub fn assemble_separable(pair: &SeparablePair) -> DMatrix<f64> {
    let m = pair.m_row.dim();
    let a = plus_j(&pair.m_row);
    let b = plus_j(&pair.m_col);
    let n = m * m;
    DMatrix::from_fn(n, n, |p, q| {
        let (r, c) = (p / m, p % m);
        let (rp, cp) = (q / m, q % m);
        a[(r, rp)] * b[(c, cp)]
    })
}

/// Learns a separable CGL pair by alternating exact minimization over one
/// factor with the other fixed. Each half-sweep reduces to a CGL problem
/// of size sqrt(n) with a contracted covariance; warm starts keep the
/// objective non-increasing. Returns the pair and the objective after the
/// initialization and each half-sweep.
pub fn learn_separable(
    s: &ClassCovariance,
    side: usize,
    opts: &SepLearnOptions,
) -> Result<(SeparablePair, Vec<f64>)> {
    if side < 2 || side * side != s.s.dim() {
        return Err(Error::InvalidInput(format!(
            "covariance dimension {} is not the square of side {}",
            s.s.dim(),
            side
        )));
    }
    check_covariance(s)?;
    let m = side;
    let mask = EdgeMask::complete(m);
    let mut pair = SeparablePair {
        m_row: crate::graphs::path_laplacian(m)?,
        m_col: crate::graphs::path_laplacian(m)?,
    };
    let mut trace = vec![separable_objective(&pair, &s.s)?];
    for _ in 0..opts.max_sweeps {
        let sweep_start = *trace.last().unwrap();

        // Column factor with the row factor fixed.
        let a = plus_j(&pair.m_row);
        let mut g = contract_rows(&a, &s.s, m);
        scale_sym(&mut g, 1.0 / m as f64);
        let problem = EdgeProblem::new(&g, &mask);
        let warm = warm_start_weights(&pair.m_col, &problem.edges);
        let (w, _) = solve_edge_weights(&problem, warm, &opts.inner)?;
        pair.m_col = CglMatrix::from_edge_weights(mask.clone(), &problem.edges, &w)?;
        trace.push(separable_objective(&pair, &s.s)?);

        // Row factor with the column factor fixed.
        let b = plus_j(&pair.m_col);
        let mut g = contract_cols(&b, &s.s, m);
        scale_sym(&mut g, 1.0 / m as f64);
        let problem = EdgeProblem::new(&g, &mask);
        let warm = warm_start_weights(&pair.m_row, &problem.edges);
        let (w, _) = solve_edge_weights(&problem, warm, &opts.inner)?;
        pair.m_row = CglMatrix::from_edge_weights(mask.clone(), &problem.edges, &w)?;
        trace.push(separable_objective(&pair, &s.s)?);

        let now = *trace.last().unwrap();
        if (sweep_start - now).abs() <= opts.tol * sweep_start.abs().max(1.0) {
            break;
        }
    }
    pair = normalize_traces(pair)?;
    Ok((pair, trace))
}

fn scale_sym(s: &mut SymMatrix, factor: f64) {
    let n = s.dim();
    for i in 0..n {
        for j in i..n {
            s.set(i, j, s.get(i, j) * factor);
        }
    }
}

/// Training controls for the full pipeline.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub block_side: usize,
    pub n_c: usize,
    pub mode: TransformMode,
    pub topology: TopologyKind,
    pub rule: WeightRule,
    pub seed: u64,
    /// Quality whose quantization step parameterizes the training-time
    /// weight rule.
    pub train_delta_quality: u8,
    pub cgl: CglLearnOptions,
    pub sep: SepLearnOptions,
    pub saliency_smooth_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            block_side: 8,
            n_c: 2,
            mode: TransformMode::NonSep,
            topology: TopologyKind::Full,
            rule: WeightRule::Ssim,
            seed: 0,
            train_delta_quality: 50,
            cgl: CglLearnOptions::default(),
            sep: SepLearnOptions::default(),
            saliency_smooth_sigma: crate::perceptual::DEFAULT_SALIENCY_SMOOTH_SIGMA,
        }
    }
}

/// What happened during training, for logging and tests.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub images_used: usize,
    pub images_skipped: usize,
    pub class_counts: Vec<usize>,
    /// Classes that fell back to the DCT graph / unit path pair.
    pub fallbacks: Vec<bool>,
    pub objective_traces: Vec<Vec<f64>>,
    pub kmeans_wcss: Vec<f64>,
}

/// Full training stage: perceptual weights, codebook, segmentation,
/// per-class covariances, per-class graph learning.
///
/// `saliency` supplies one map per image when the rule needs it. Classes
/// with fewer than `2n` blocks fall back to the DCT grid graph (unit path
/// pair in separable modes).
pub fn train_model(
    images: &[GrayImage],
    saliency: Option<&[GrayImage]>,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no training images".into()));
    }
    if cfg.block_side < 2 {
        return Err(Error::InvalidInput("block side must be at least 2".into()));
    }
    if cfg.n_c == 0 || cfg.n_c > 255 {
        return Err(Error::InvalidInput("class count must be in 1..=255".into()));
    }
    if cfg.rule == WeightRule::Saliency {
        match saliency {
            Some(maps) if maps.len() == images.len() => {}
            _ => {
                return Err(Error::InvalidInput(
                    "saliency rule needs one map per training image".into(),
                ))
            }
        }
    }
    let side = cfg.block_side;
    let n = side * side;
    let delta = crate::codec::quant::delta_for_quality(cfg.train_delta_quality)?
        .min(crate::perceptual::DELTA_CAP);

    let mut report = TrainReport::default();
    let mut weight_vectors: Vec<Vec<f64>> = Vec::new();
    let mut pixel_blocks: Vec<Vec<f64>> = Vec::new();
    let mut per_image_maps = Vec::new();
    for (idx, img) in images.iter().enumerate() {
        let cropped = match img.center_crop_to_multiple(side) {
            Ok(c) => c,
            Err(_) => {
                report.images_skipped += 1;
                continue;
            }
        };
        let wmap = match cfg.rule {
            WeightRule::Ssim => ssim_weights(&cropped, &SsimParams::new(delta))?,
            WeightRule::Saliency => {
                let map = &saliency.unwrap()[idx];
                let map = map.center_crop_to_multiple(side)?;
                if map.width() != cropped.width() || map.height() != cropped.height() {
                    return Err(Error::DimensionMismatch(format!(
                        "saliency map for image {idx} does not match its dimensions"
                    )));
                }
                saliency_weights(&map, delta, cfg.saliency_smooth_sigma)?
            }
        };
        weight_vectors.extend(extract_block_weights(&wmap, side)?);
        let bx = cropped.width() / side;
        let by = cropped.height() / side;
        for b_y in 0..by {
            for b_x in 0..bx {
                pixel_blocks.push(cropped.block(b_x, b_y, side));
            }
        }
        per_image_maps.push((wmap, bx * by));
        report.images_used += 1;
    }
    if report.images_used == 0 {
        return Err(Error::InvalidInput(
            "no training image is at least one block large".into(),
        ));
    }
    if cfg.n_c > weight_vectors.len() {
        return Err(Error::InvalidInput(format!(
            "{} classes requested but only {} training blocks",
            cfg.n_c,
            weight_vectors.len()
        )));
    }

    let (codebook, wcss) = train_codebook_traced(&weight_vectors, cfg.n_c, cfg.seed)?;
    report.kmeans_wcss = wcss;

    let mut labels: Vec<u8> = Vec::with_capacity(pixel_blocks.len());
    for (wmap, _) in &per_image_maps {
        let cm = assign_classes(wmap, &codebook, side)?;
        labels.extend_from_slice(&cm.labels);
    }
    debug_assert_eq!(labels.len(), pixel_blocks.len());

    report.class_counts = vec![0usize; cfg.n_c];
    for &l in &labels {
        report.class_counts[l as usize] += 1;
    }

    let mut classes = Vec::with_capacity(cfg.n_c);
    for class in 0..cfg.n_c {
        let count = report.class_counts[class];
        if count < 2 * n {
            report.fallbacks.push(true);
            report.objective_traces.push(Vec::new());
            classes.push(fallback_graph(cfg, side)?);
            continue;
        }
        report.fallbacks.push(false);
        let cov = class_covariance(&pixel_blocks, &labels, class as u8)?;
        match cfg.mode {
            TransformMode::NonSep => {
                let topo = Topology::new(cfg.topology, side);
                let (g, trace) = learn_cgl(&cov, &topo, &cfg.cgl)?;
                report.objective_traces.push(trace);
                classes.push(ClassGraph::NonSep(g));
            }
            TransformMode::SepRowCol | TransformMode::SepRank1 => {
                let (pair, trace) = learn_separable(&cov, side, &cfg.sep)?;
                report.objective_traces.push(trace);
                classes.push(ClassGraph::Sep(pair));
            }
        }
    }

    let model = TrainedModel {
        config: ModelConfig {
            block_side: side,
            n_c: cfg.n_c,
            mode: cfg.mode,
            topology: cfg.topology,
            seed: cfg.seed,
            rule: cfg.rule,
            train_delta_quality: cfg.train_delta_quality,
        },
        codebook,
        classes,
    };
    Ok((model, report))
}

fn fallback_graph(cfg: &TrainConfig, side: usize) -> Result<ClassGraph> {
    Ok(match cfg.mode {
        TransformMode::NonSep => ClassGraph::NonSep(crate::graphs::dct_grid_laplacian(side)?),
        _ => ClassGraph::Sep(SeparablePair {
            m_row: crate::graphs::path_laplacian(side)?,
            m_col: crate::graphs::path_laplacian(side)?,
        }),
    })
}

/// Canonical representative for the factor scaling ambiguity:
/// trace(M_r) == trace(M_c) after this, leaving M_r (x) M_c unchanged.
fn normalize_traces(pair: SeparablePair) -> Result<SeparablePair> {
    let tr_r = pair.m_row.laplacian().trace();
    let tr_c = pair.m_col.laplacian().trace();
    if tr_r <= 0.0 || tr_c <= 0.0 {
        return Ok(pair);
    }
    let alpha = (tr_c / tr_r).sqrt();
    let scale_cgl = |g: &CglMatrix, factor: f64| -> Result<CglMatrix> {
        let mask = g.mask().clone();
        let edges = mask.edges();
        let weights: Vec<f64> = edges
            .iter()
            .map(|&(i, j)| g.edge_weight(i, j) * factor)
            .collect();
        CglMatrix::from_edge_weights(mask, &edges, &weights)
    };
    Ok(SeparablePair {
        m_row: scale_cgl(&pair.m_row, alpha)?,
        m_col: scale_cgl(&pair.m_col, 1.0 / alpha)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{dct_grid_laplacian, TopologyKind};

    fn cov_from_sym(s: SymMatrix, count: usize) -> ClassCovariance {
        ClassCovariance { s, count }
    }

    #[test]
    fn constant_blocks_have_zero_covariance() {
        let blocks = vec![vec![5.0; 4], vec![9.0; 4], vec![1.0; 4]];
        let labels = vec![0, 0, 0];
        let cov = class_covariance(&blocks, &labels, 0).unwrap();
        assert_eq!(cov.count, 3);
        assert!(cov.s.frobenius_norm() < 1e-12);
    }

    #[test]
    fn hand_computed_covariance() {
        let blocks = vec![vec![1.0, 3.0], vec![2.0, 2.0]];
        let labels = vec![1, 1];
        let cov = class_covariance(&blocks, &labels, 1).unwrap();
        // DC removal leaves S singular, so the diagonal load (1e-6 of the
        // mean diagonal) is always present on top of the hand result.
        assert!((cov.s.get(0, 0) - 1.0).abs() < 2e-6);
        assert!((cov.s.get(0, 1) + 1.0).abs() < 1e-12);
        assert!((cov.s.get(1, 1) - 1.0).abs() < 2e-6);
    }

    #[test]
    fn covariance_matches_direct_recomputation() {
        let mut blocks = Vec::new();
        let mut state = 7u64;
        for _ in 0..20 {
            let b: Vec<f64> = (0..4)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 33) % 256) as f64
                })
                .collect();
            blocks.push(b);
        }
        let labels = vec![0u8; 20];
        let cov = class_covariance(&blocks, &labels, 0).unwrap();
        // Direct oracle with explicit loops.
        let n = 4;
        let mut expect = vec![vec![0.0; n]; n];
        for b in &blocks {
            let m: f64 = b.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                for j in 0..n {
                    expect[i][j] += (b[i] - m) * (b[j] - m);
                }
            }
        }
        // Apply the same singularity load the estimator uses.
        let mut trace = 0.0;
        for i in 0..n {
            trace += expect[i][i] / (blocks.len() - 1) as f64;
        }
        let eps = 1e-6 * trace / n as f64;
        for i in 0..n {
            for j in 0..n {
                let mut e = expect[i][j] / (blocks.len() - 1) as f64;
                if i == j {
                    e += eps;
                }
                assert!((cov.s.get(i, j) - e).abs() < 1e-9 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn one_block_is_insufficient() {
        let blocks = vec![vec![1.0, 2.0]];
        let labels = vec![3u8];
        assert!(matches!(
            class_covariance(&blocks, &labels, 3),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn two_node_closed_form_optimum() {
        // Objective reduces to -log(2w) + w (s11 + s22 - 2 s12) with
        // optimum w = 1 / (s11 + s22 - 2 s12).
        let s = SymMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => 2.0,
            (1, 1) => 1.5,
            _ => 0.5,
        });
        let cov = cov_from_sym(s, 10);
        let topo = Topology::new(TopologyKind::Path, 2);
        let (cgl, trace) = learn_cgl(&cov, &topo, &CglLearnOptions::default()).unwrap();
        let expect = 1.0 / (2.0 + 1.5 - 1.0);
        assert!((cgl.edge_weight(0, 1) - expect).abs() < 1e-9);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn recovers_exact_model() {
        // S = (L* + J)^{-1} makes L* the optimum over its own topology.
        let l_star = dct_grid_laplacian(3).unwrap();
        let n = 9;
        let mut theta = l_star.laplacian().to_dense();
        for i in 0..n {
            for j in 0..n {
                theta[(i, j)] += 1.0 / n as f64;
            }
        }
        let s = SymMatrix::from_dense(&theta.cholesky().unwrap().inverse());
        let cov = cov_from_sym(s, 100);
        let topo = Topology::new(TopologyKind::Grid4, 3);
        let (learned, _) = learn_cgl(&cov, &topo, &CglLearnOptions::default()).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = learned.laplacian().get(i, j) - l_star.laplacian().get(i, j);
                err += d * d;
                norm += l_star.laplacian().get(i, j).powi(2);
            }
        }
        assert!((err / norm).sqrt() < 1e-3, "relative error {}", (err / norm).sqrt());
    }

    #[test]
    fn learned_graph_respects_mask() {
        let l_star = dct_grid_laplacian(3).unwrap();
        let n = 9;
        let mut theta = l_star.laplacian().to_dense();
        for i in 0..n {
            for j in 0..n {
                theta[(i, j)] += 1.0 / n as f64;
            }
        }
        let s = SymMatrix::from_dense(&theta.cholesky().unwrap().inverse());
        let cov = cov_from_sym(s, 100);
        let topo = Topology::new(TopologyKind::Grid4, 3);
        let (learned, _) = learn_cgl(&cov, &topo, &CglLearnOptions::default()).unwrap();
        let mask = crate::graphs::topology_mask(&topo).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                if !mask.contains(i, j) {
                    assert_eq!(learned.laplacian().get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn separable_objective_matches_dense_form() {
        let pair = SeparablePair {
            m_row: crate::graphs::path_laplacian(3).unwrap(),
            m_col: crate::graphs::path_laplacian(3).unwrap(),
        };
        let n = 9;
        let s = SymMatrix::from_fn(n, |i, j| {
            if i == j {
                3.0
            } else {
                1.0 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        let factored = separable_objective(&pair, &s).unwrap();
        let dense = dense_objective(&assemble_separable(&pair), &s).unwrap();
        assert!(
            (factored - dense).abs() < 1e-10,
            "factored {factored} dense {dense}"
        );
    }

    #[test]
    fn kronecker_logdet_identity() {
        let mut state = 99u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            0.2 + ((state >> 33) % 100) as f64 / 50.0
        };
        for _ in 0..5 {
            let m = 4usize;
            let mut wa = SymMatrix::zeros(m);
            let mut wb = SymMatrix::zeros(m);
            for i in 0..m {
                for j in (i + 1)..m {
                    wa.set(i, j, next());
                    wb.set(i, j, next());
                }
            }
            let pair = SeparablePair {
                m_row: CglMatrix::from_weights(&wa).unwrap(),
                m_col: CglMatrix::from_weights(&wb).unwrap(),
            };
            let a = plus_j(&pair.m_row);
            let b = plus_j(&pair.m_col);
            let lhs = logdet_pd(&assemble_separable(&pair)).unwrap();
            let rhs = m as f64 * (logdet_pd(&a).unwrap() + logdet_pd(&b).unwrap());
            assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn separable_recovery_on_exact_model() {
        // Equal-trace factors so the canonical scaling is a no-op at the
        // optimum.
        let a = crate::graphs::path_laplacian(3).unwrap();
        let b = crate::graphs::path_laplacian(3).unwrap();
        let pair_star = SeparablePair {
            m_row: a,
            m_col: b,
        };
        let m_dense = assemble_separable(&pair_star);
        let s = SymMatrix::from_dense(&m_dense.cholesky().unwrap().inverse());
        let star_obj = separable_objective(&pair_star, &s).unwrap();
        let cov = cov_from_sym(s.clone(), 100);
        let (learned, trace) = learn_separable(&cov, 3, &SepLearnOptions::default()).unwrap();
        let learned_obj = separable_objective(&learned, &s).unwrap();
        assert!(
            (learned_obj - star_obj).abs() < 1e-3,
            "learned {learned_obj} star {star_obj}"
        );
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {:?}", w);
        }
    }

    #[test]
    fn tiny_block_matches_grid_search() {
        // n = 4 separable model against brute force over one-parameter
        // path factors (w_row, w_col).
        let pair_star = SeparablePair {
            m_row: scaled_path2(0.7),
            m_col: scaled_path2(1.3),
        };
        let m_dense = assemble_separable(&pair_star);
        let s = SymMatrix::from_dense(&m_dense.cholesky().unwrap().inverse());
        let cov = cov_from_sym(s.clone(), 100);
        let (_, trace) = learn_separable(&cov, 2, &SepLearnOptions::default()).unwrap();
        let learned_obj = *trace.last().unwrap();
        let mut best = f64::INFINITY;
        let mut w = 0.01;
        while w < 5.0 {
            let mut v = 0.01;
            while v < 5.0 {
                let cand = SeparablePair {
                    m_row: scaled_path2(w),
                    m_col: scaled_path2(v),
                };
                let obj = separable_objective(&cand, &s).unwrap();
                if obj < best {
                    best = obj;
                }
                v *= 1.02;
            }
            w *= 1.02;
        }
        assert!(
            learned_obj <= best + 1e-2,
            "learned {learned_obj} grid best {best}"
        );
    }

    fn scaled_path2(w: f64) -> CglMatrix {
        let mut wm = SymMatrix::zeros(2);
        wm.set(0, 1, w);
        CglMatrix::from_weights(&wm).unwrap()
    }

    fn textured_image(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut state = seed | 1;
        let mut img = GrayImage::constant(w, h, 0.0).unwrap();
        for y in 0..h {
            for x in 0..w {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                // Smooth left half, noisy right half.
                let v = if x < w / 2 {
                    100.0 + 40.0 * (y as f64 / h as f64)
                } else {
                    128.0 + ((state >> 33) % 100) as f64 - 50.0
                };
                img.set(x, y, v.clamp(0.0, 255.0));
            }
        }
        img
    }

    #[test]
    fn constant_training_image_falls_back() {
        let images = vec![GrayImage::constant(32, 32, 99.0).unwrap()];
        let cfg = TrainConfig {
            n_c: 1,
            ..TrainConfig::default()
        };
        let (model, report) = train_model(&images, None, &cfg).unwrap();
        assert_eq!(report.fallbacks, vec![true]);
        match &model.classes[0] {
            ClassGraph::NonSep(g) => assert!(g.is_unit_grid()),
            _ => panic!("expected a non-separable class graph"),
        }
    }

    #[test]
    fn training_is_reproducible_bytes() {
        let images: Vec<GrayImage> = (0..3).map(|i| textured_image(i * 7 + 1, 64, 64)).collect();
        let cfg = TrainConfig {
            cgl: CglLearnOptions {
                tol: 1e-6,
                max_iter: 60,
            },
            ..TrainConfig::default()
        };
        let (a, _) = train_model(&images, None, &cfg).unwrap();
        let (b, _) = train_model(&images, None, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn trained_classes_differ_statistically() {
        let images: Vec<GrayImage> = (0..4).map(|i| textured_image(i * 13 + 5, 96, 96)).collect();
        let cfg = TrainConfig {
            cgl: CglLearnOptions {
                tol: 1e-6,
                max_iter: 80,
            },
            ..TrainConfig::default()
        };
        let (model, report) = train_model(&images, None, &cfg).unwrap();
        assert_eq!(model.classes.len(), 2);
        assert!(report.class_counts.iter().all(|&c| c > 0));
        // Both classes learned (enough blocks on each side of the image).
        assert_eq!(report.fallbacks, vec![false, false]);
        for trace in &report.objective_traces {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
        // Higher perceptual weight goes with the smooth region, whose
        // pixels correlate more; that class's graph carries more total
        // edge weight.
        let mean_weight: Vec<f64> = model
            .codebook
            .codewords
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let total_edge_weight: Vec<f64> = model
            .classes
            .iter()
            .map(|g| match g {
                ClassGraph::NonSep(g) => g.packed_weights().iter().sum::<f64>(),
                _ => unreachable!(),
            })
            .collect();
        let hi = if mean_weight[0] > mean_weight[1] { 0 } else { 1 };
        assert!(
            total_edge_weight[hi] > total_edge_weight[1 - hi],
            "high-importance class should carry stronger correlations: {:?} vs {:?}",
            total_edge_weight,
            mean_weight
        );
    }

    #[test]
    fn separable_training_runs() {
        let images: Vec<GrayImage> = (0..2).map(|i| textured_image(i + 40, 64, 64)).collect();
        let cfg = TrainConfig {
            mode: TransformMode::SepRank1,
            sep: SepLearnOptions {
                max_sweeps: 10,
                ..SepLearnOptions::default()
            },
            ..TrainConfig::default()
        };
        let (model, _) = train_model(&images, None, &cfg).unwrap();
        assert!(matches!(model.classes[0], ClassGraph::Sep(_)));
        let bytes = model.to_bytes();
        let back = TrainedModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(train_model(&[], None, &TrainConfig::default()).is_err());
    }
}

