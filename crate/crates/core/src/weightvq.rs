//! Block-level weight vector quantization: codebook training (k-means)
//! and per-block class assignment, the codec's perceptual segmentation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::perceptual::WeightMap;
use crate::spectral::WEIGHT_FLOOR;

const LLOYD_TOL: f64 = 1e-6;
const LLOYD_MAX_ITERS: usize = 100;

/// Trained codebook of block-level weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCodebook {
    /// `n_c` codewords, each of length `n` (block pixel count).
    pub codewords: Vec<Vec<f64>>,
    /// Block pixel count.
    pub n: usize,
}

impl WeightCodebook {
    pub fn n_classes(&self) -> usize {
        self.codewords.len()
    }

    pub fn block_side(&self) -> usize {
        (self.n as f64).sqrt().round() as usize
    }
}

/// Per-block class labels over the block grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub labels: Vec<u8>,
    pub blocks_x: usize,
    pub blocks_y: usize,
}

impl ClassMap {
    pub fn new(labels: Vec<u8>, blocks_x: usize, blocks_y: usize, n_classes: usize) -> Result<Self> {
        if labels.len() != blocks_x * blocks_y {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {}x{} block grid",
                labels.len(),
                blocks_x,
                blocks_y
            )));
        }
        if labels.iter().any(|&l| (l as usize) >= n_classes) {
            return Err(Error::InvalidInput("class label out of range".into()));
        }
        Ok(ClassMap {
            labels,
            blocks_x,
            blocks_y,
        })
    }

    #[inline]
    pub fn label(&self, bx: usize, by: usize) -> u8 {
        self.labels[by * self.blocks_x + bx]
    }
}

/// Splits a weight map into per-block vectors, blocks in raster order and
/// each block vectorized row-major.
pub fn extract_block_weights(map: &WeightMap, block_side: usize) -> Result<Vec<Vec<f64>>> {
    if block_side == 0
        || map.width() % block_side != 0
        || map.height() % block_side != 0
    {
        return Err(Error::InvalidInput(format!(
            "map {}x{} is not a multiple of block side {}",
            map.width(),
            map.height(),
            block_side
        )));
    }
    let bx = map.width() / block_side;
    let by = map.height() / block_side;
    let mut out = Vec::with_capacity(bx * by);
    for b_y in 0..by {
        for b_x in 0..bx {
            let mut v = Vec::with_capacity(block_side * block_side);
            for r in 0..block_side {
                for c in 0..block_side {
                    v.push(map.get(b_x * block_side + c, b_y * block_side + r));
                }
            }
            out.push(v);
        }
    }
    Ok(out)
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest codeword in Euclidean distance, ties going to the
/// lowest index.
fn nearest(codewords: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_d = dist_sq(&codewords[0], v);
    for (i, c) in codewords.iter().enumerate().skip(1) {
        let d = dist_sq(c, v);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// k-means with k-means++ seeding. Returns the codebook and the
/// within-cluster sum of squares after each Lloyd iteration.
pub fn train_codebook_traced(
    samples: &[Vec<f64>],
    n_c: usize,
    seed: u64,
) -> Result<(WeightCodebook, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if n_c == 0 || n_c > samples.len() {
        return Err(Error::InvalidInput(format!(
            "cannot train {} codewords from {} samples",
            n_c,
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch(
            "training samples differ in length".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_c);
    centers.push(samples[rng.gen_range(0..samples.len())].clone());
    let mut d2: Vec<f64> = samples.iter().map(|s| dist_sq(s, &centers[0])).collect();
    while centers.len() < n_c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut idx = 0usize;
            for (i, &d) in d2.iter().enumerate() {
                t -= d;
                if t <= 0.0 {
                    idx = i;
                    break;
                }
                idx = i;
            }
            idx
        } else {
            rng.gen_range(0..samples.len())
        };
        centers.push(samples[pick].clone());
        for (i, s) in samples.iter().enumerate() {
            let d = dist_sq(s, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    // Lloyd iterations.
    let mut wcss_trace = Vec::new();
    let mut assignment = vec![0usize; samples.len()];
    for _ in 0..LLOYD_MAX_ITERS {
        let mut wcss = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let a = nearest(&centers, s);
            assignment[i] = a;
            wcss += dist_sq(s, &centers[a]);
        }
        wcss_trace.push(wcss);
        let mut sums = vec![vec![0.0; dim]; n_c];
        let mut counts = vec![0usize; n_c];
        for (i, s) in samples.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (acc, v) in sums[assignment[i]].iter_mut().zip(s) {
                *acc += v;
            }
        }
        let mut movement = 0.0f64;
        for (k, center) in centers.iter_mut().enumerate() {
            if counts[k] == 0 {
                // Empty cluster keeps its centroid.
                continue;
            }
            let inv = 1.0 / counts[k] as f64;
            let mut shift = 0.0;
            for (c, s) in center.iter_mut().zip(&sums[k]) {
                let new = s * inv;
                shift += (new - *c) * (new - *c);
                *c = new;
            }
            movement = movement.max(shift.sqrt());
        }
        if movement < LLOYD_TOL {
            break;
        }
    }

    for c in &mut centers {
        for v in c.iter_mut() {
            if *v < WEIGHT_FLOOR {
                *v = WEIGHT_FLOOR;
            }
        }
    }
    Ok((
        WeightCodebook {
            codewords: centers,
            n: dim,
        },
        wcss_trace,
    ))
}

pub fn train_codebook(samples: &[Vec<f64>], n_c: usize, seed: u64) -> Result<WeightCodebook> {
    train_codebook_traced(samples, n_c, seed).map(|(cb, _)| cb)
}

/// Labels every block of the map with its nearest codeword.
pub fn assign_classes(
    map: &WeightMap,
    cb: &WeightCodebook,
    block_side: usize,
) -> Result<ClassMap> {
    if block_side * block_side != cb.n {
        return Err(Error::DimensionMismatch(format!(
            "codebook dimension {} does not match block side {}",
            cb.n, block_side
        )));
    }
    let blocks = extract_block_weights(map, block_side)?;
    let labels: Vec<u8> = blocks
        .iter()
        .map(|b| nearest(&cb.codewords, b) as u8)
        .collect();
    ClassMap::new(
        labels,
        map.width() / block_side,
        map.height() / block_side,
        cb.n_classes(),
    )
}
