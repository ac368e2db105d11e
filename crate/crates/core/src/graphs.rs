//! Combinatorial graph Laplacians, topology masks, and the canonical
//! reference graphs (paths and the 2D grid whose GFT is the DCT-II).
//!
//! Node indexing is row-major raster order within a block: pixel (r, c)
//! maps to index `r * side + c`. Every module downstream assumes this.

use crate::error::{Error, Result};
use crate::spectral::SymMatrix;

/// Structural constraint families for learned graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Full,
    Grid8,
    Grid4,
    Path,
}

impl TopologyKind {
    pub fn code(self) -> u8 {
        match self {
            TopologyKind::Full => 0,
            TopologyKind::Grid8 => 1,
            TopologyKind::Grid4 => 2,
            TopologyKind::Path => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => TopologyKind::Full,
            1 => TopologyKind::Grid8,
            2 => TopologyKind::Grid4,
            3 => TopologyKind::Path,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown topology kind code {code}"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Full => "full",
            TopologyKind::Grid8 => "grid8",
            TopologyKind::Grid4 => "grid4",
            TopologyKind::Path => "path",
        }
    }
}

/// A constraint family instantiated at a concrete size. Grid and full
/// topologies cover a `side * side` pixel block; a path covers `side`
/// nodes in a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub side: usize,
}

impl Topology {
    pub fn new(kind: TopologyKind, side: usize) -> Self {
        Topology { kind, side }
    }

    pub fn node_count(&self) -> usize {
        match self.kind {
            TopologyKind::Path => self.side,
            _ => self.side * self.side,
        }
    }
}

/// Set of allowed edges over unordered node pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    n: usize,
    // Upper triangle without the diagonal, row by row.
    allowed: Vec<bool>,
}

impl EdgeMask {
    pub fn empty(n: usize) -> Self {
        EdgeMask {
            n,
            allowed: vec![false; n * (n - 1) / 2],
        }
    }

    pub fn complete(n: usize) -> Self {
        EdgeMask {
            n,
            allowed: vec![true; n * (n - 1) / 2],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.allowed[k] = true;
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.allowed[self.idx(i, j)]
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.allowed.iter().filter(|&&b| b).count()
    }

    /// Edges as (i, j) with i < j, in deterministic lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.allowed[self.idx(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_subset_of(&self, other: &EdgeMask) -> bool {
        self.n == other.n
            && self
                .allowed
                .iter()
                .zip(&other.allowed)
                .all(|(a, b)| !*a || *b)
    }
}

/// Edge mask realizing a topology. Grid4 connects horizontal/vertical
/// raster neighbors, grid8 adds the diagonals, full connects all pairs,
/// path chains consecutive indices.
pub fn topology_mask(t: &Topology) -> Result<EdgeMask> {
    if t.side < 2 {
        return Err(Error::InvalidInput(format!(
            "topology side must be at least 2, got {}",
            t.side
        )));
    }
    let n = t.node_count();
    let mut mask = EdgeMask::empty(n);
    match t.kind {
        TopologyKind::Full => {
            mask = EdgeMask::complete(n);
        }
        TopologyKind::Path => {
            for i in 0..n - 1 {
                mask.insert(i, i + 1);
            }
        }
        TopologyKind::Grid4 | TopologyKind::Grid8 => {
            let s = t.side;
            for r in 0..s {
                for c in 0..s {
                    let u = r * s + c;
                    if c + 1 < s {
                        mask.insert(u, u + 1);
                    }
                    if r + 1 < s {
                        mask.insert(u, u + s);
                    }
                    if t.kind == TopologyKind::Grid8 {
                        if r + 1 < s && c + 1 < s {
                            mask.insert(u, u + s + 1);
                        }
                        if r + 1 < s && c > 0 {
                            mask.insert(u, u + s - 1);
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Combinatorial graph Laplacian `L = D - W` together with the edge mask
/// the nonzero pattern is constrained to.
#[derive(Debug, Clone)]
pub struct CglMatrix {
    laplacian: SymMatrix,
    mask: EdgeMask,
}

impl CglMatrix {
    /// Builds `L = D - W` from a symmetric nonnegative weight matrix with a
    /// zero diagonal. The mask defaults to the complete graph.
    pub fn from_weights(w: &SymMatrix) -> Result<Self> {
        Self::from_weights_masked(w, EdgeMask::complete(w.dim()))
    }

    pub fn from_weights_masked(w: &SymMatrix, mask: EdgeMask) -> Result<Self> {
        let n = w.dim();
        if mask.node_count() != n {
            return Err(Error::DimensionMismatch(format!(
                "mask covers {} nodes, weights cover {}",
                mask.node_count(),
                n
            )));
        }
        if !w.is_finite() {
            return Err(Error::InvalidInput("weights must be finite".into()));
        }
        for i in 0..n {
            if w.get(i, i) != 0.0 {
                return Err(Error::InvalidWeight(
                    "weight matrix must have a zero diagonal".into(),
                ));
            }
            for j in (i + 1)..n {
                let wij = w.get(i, j);
                if wij < 0.0 {
                    return Err(Error::InvalidWeight(format!(
                        "negative edge weight at ({i},{j})"
                    )));
                }
                if wij != 0.0 && !mask.contains(i, j) {
                    return Err(Error::InvalidWeight(format!(
                        "weight outside topology mask at ({i},{j})"
                    )));
                }
            }
        }
        let mut l = SymMatrix::zeros(n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if j != i {
                    degree += w.get(i, j);
                }
            }
            l.set(i, i, degree);
            for j in (i + 1)..n {
                l.set(i, j, -w.get(i, j));
            }
        }
        Ok(CglMatrix { laplacian: l, mask })
    }

    /// Builds directly from per-edge weights over a mask's edge list.
    pub fn from_edge_weights(
        mask: EdgeMask,
        edges: &[(usize, usize)],
        weights: &[f64],
    ) -> Result<Self> {
        let n = mask.node_count();
        let mut w = SymMatrix::zeros(n);
        for (&(i, j), &wij) in edges.iter().zip(weights) {
            w.set(i, j, wij);
        }
        CglMatrix::from_weights_masked(&w, mask)
    }

    pub fn dim(&self) -> usize {
        self.laplacian.dim()
    }

    pub fn laplacian(&self) -> &SymMatrix {
        &self.laplacian
    }

    pub fn mask(&self) -> &EdgeMask {
        &self.mask
    }

    /// Edge weight `w(i,j) = -L(i,j)` for i != j.
    pub fn edge_weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            -self.laplacian.get(i, j)
        }
    }

    /// Upper-triangle edge weights over all node pairs (i < j), row by row.
    /// This is the serialization payload.
    pub fn packed_weights(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.edge_weight(i, j));
            }
        }
        out
    }

    /// True when this equals the unit-weight grid Laplacian of its size,
    /// i.e. the graph whose GFT is the 2D DCT-II.
    pub fn is_unit_grid(&self) -> bool {
        let n = self.dim();
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || side < 2 {
            return false;
        }
        let reference = match dct_grid_laplacian(side) {
            Ok(g) => g,
            Err(_) => return false,
        };
        for i in 0..n {
            for j in i..n {
                if self.laplacian.get(i, j) != reference.laplacian.get(i, j) {
                    return false;
                }
            }
        }
        true
    }
}

/// Unit-weight path Laplacian over `n` nodes. Its eigenvectors are the
/// 1D DCT-II basis.
pub fn path_laplacian(n: usize) -> Result<CglMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput(
            "path graph needs at least 2 nodes".into(),
        ));
    }
    let topo = Topology::new(TopologyKind::Path, n);
    let mask = topology_mask(&topo)?;
    let mut w = SymMatrix::zeros(n);
    for i in 0..n - 1 {
        w.set(i, i + 1, 1.0);
    }
    CglMatrix::from_weights_masked(&w, mask)
}

/// Kronecker-sum Laplacian of two unit-weight paths: the `side * side`
/// grid graph whose GFT (with uniform weights) is the 2D DCT-II.
pub fn dct_grid_laplacian(side: usize) -> Result<CglMatrix> {
    if side < 2 {
        return Err(Error::InvalidInput(
            "grid side must be at least 2".into(),
        ));
    }
    let topo = Topology::new(TopologyKind::Grid4, side);
    let mask = topology_mask(&topo)?;
    let n = side * side;
    let mut w = SymMatrix::zeros(n);
    for r in 0..side {
        for c in 0..side {
            let u = r * side + c;
            if c + 1 < side {
                w.set(u, u + 1, 1.0);
            }
            if r + 1 < side {
                w.set(u, u + side, 1.0);
            }
        }
    }
    CglMatrix::from_weights_masked(&w, mask)
}
