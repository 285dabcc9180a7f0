use std::collections::HashMap;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::femcore::CsrMatrix;
use crate::geometry::{CoarsePartition, FineMesh};
use crate::{Error, Result};

/// Numbering of the fine DG velocity space: P1 within each block,
/// discontinuous across coarse edges.
///
/// Nodes on perforation boundaries carry the no-slip condition strongly and
/// have no DOFs. DOF `offset(b) + 2 k + c` is component `c` at the `k`-th node
/// of block `b`.
#[derive(Clone, Debug)]
pub struct DgLayout {
    /// Global node ids of each block, ascending.
    pub block_nodes: Vec<Vec<usize>>,
    pub offsets: Vec<usize>,
    pub n_dofs: usize,
    local: Vec<HashMap<usize, usize>>,
}

impl DgLayout {
    pub fn new(mesh: &FineMesh, partition: &CoarsePartition) -> Self {
        let mut block_nodes = Vec::with_capacity(partition.n_blocks());
        let mut offsets = Vec::with_capacity(partition.n_blocks() + 1);
        let mut local = Vec::with_capacity(partition.n_blocks());
        let mut n = 0;
        for tris in &partition.blocks {
            let mut nodes: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangles[t]).collect();
            nodes.sort_unstable();
            nodes.dedup();
            nodes.retain(|&v| !mesh.is_perforation_node(v));
            offsets.push(n);
            n += 2 * nodes.len();
            local.push(nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect());
            block_nodes.push(nodes);
        }
        offsets.push(n);
        Self { block_nodes, offsets, n_dofs: n, local }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_nodes.len()
    }

    pub fn dof(&self, block: usize, node: usize, comp: usize) -> Option<usize> {
        self.local[block].get(&node).map(|k| self.offsets[block] + 2 * k + comp)
    }

    pub fn local_index(&self, block: usize, node: usize) -> Option<usize> {
        self.local[block].get(&node).copied()
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn block_len(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }
}

/// Per-block basis of a velocity space, as fine DG coefficient columns.
#[derive(Clone, Debug)]
pub enum BlockBasis {
    /// The full fine DG space.
    Identity,
    /// Column `j` of entry `b` is a field supported in block `b`, expressed
    /// in the block's local DOFs.
    Columns(Vec<DMatrix<f64>>),
}

/// A velocity space spanned by block-supported fine functions.
#[derive(Clone, Debug)]
pub struct BlockSpace {
    pub basis: BlockBasis,
    /// Coarse DOF offsets per block; the last entry is the dimension.
    pub offsets: Vec<usize>,
}

impl BlockSpace {
    pub fn identity(layout: &DgLayout) -> Self {
        Self { basis: BlockBasis::Identity, offsets: layout.offsets.clone() }
    }

    /// Validates shapes and linear independence of every block.
    pub fn from_columns(layout: &DgLayout, columns: Vec<DMatrix<f64>>) -> Result<Self> {
        if columns.len() != layout.n_blocks() {
            return Err(Error::DimensionMismatch { expected: layout.n_blocks(), actual: columns.len() });
        }
        let mut offsets = vec![0];
        for (b, c) in columns.iter().enumerate() {
            if c.nrows() != layout.block_len(b) {
                return Err(Error::DimensionMismatch { expected: layout.block_len(b), actual: c.nrows() });
            }
            if c.ncols() == 0 {
                return Err(Error::InvalidInput(format!("block {b} has an empty basis")));
            }
            let gram = c.transpose() * c;
            let eig = gram.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 1e-12 * hi) {
                return Err(Error::InvalidInput(format!(
                    "basis of block {b} is linearly dependent (Gram eigenvalues {lo:e} .. {hi:e})"
                )));
            }
            offsets.push(offsets[b] + c.ncols());
        }
        Ok(Self { basis: BlockBasis::Columns(columns), offsets })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_dim(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.basis, BlockBasis::Identity)
    }

    /// Sparse prolongation from coarse coefficients to fine DG DOFs.
    pub fn prolongation(&self, layout: &DgLayout) -> CsrMatrix {
        match &self.basis {
            BlockBasis::Identity => {
                let t: Vec<_> = (0..layout.n_dofs).map(|i| (i, i, 1.0)).collect();
                CsrMatrix::from_triplets(layout.n_dofs, layout.n_dofs, &t)
            }
            BlockBasis::Columns(cols) => {
                let mut t = Vec::new();
                for (b, c) in cols.iter().enumerate() {
                    for j in 0..c.ncols() {
                        for i in 0..c.nrows() {
                            let v = c[(i, j)];
                            if v != 0.0 {
                                t.push((layout.offsets[b] + i, self.offsets[b] + j, v));
                            }
                        }
                    }
                }
                CsrMatrix::from_triplets(layout.n_dofs, self.dim(), &t)
            }
        }
    }

    /// Fine DG field of the given coarse coefficients.
    pub fn downscale(&self, layout: &DgLayout, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: coefficients.len() });
        }
        match &self.basis {
            BlockBasis::Identity => Ok(coefficients.to_vec()),
            BlockBasis::Columns(cols) => {
                let mut out = vec![0.0; layout.n_dofs];
                for (b, c) in cols.iter().enumerate() {
                    let x = &coefficients[self.offsets[b]..self.offsets[b + 1]];
                    for j in 0..c.ncols() {
                        if x[j] == 0.0 {
                            continue;
                        }
                        for i in 0..c.nrows() {
                            out[layout.offsets[b] + i] += c[(i, j)] * x[j];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Fine DG field of basis vector `k`.
    pub fn basis_vector(&self, layout: &DgLayout, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[k] = 1.0;
        self.downscale(layout, &e).expect("index within dimension")
    }
}
