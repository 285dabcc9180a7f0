//! Spectral reduction of snapshot spaces into the offline (coarse) velocity
//! space.
//!
//! Per block, the pencil `A Φ = λ S Φ` with `A = ∫∇u:∇v` and
//! `S = (1/H) ∫_∂ u·v` is solved in snapshot coordinates and the
//! eigenvectors of the smallest eigenvalues form the basis.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgform::{BlockSpace, DgContext, DgLayout};
use crate::femcore::{dense_generalized_eigensolve, P1Triangle, GAUSS2};
use crate::geometry::{CoarsePartition, FineMesh};
use crate::snapshots::{support_forms, SnapshotMode, SnapshotSpace};
use crate::{Error, Result};

/// Domain on which the spectral problem is posed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralVariant {
    /// On `K`; oversampled snapshots are restricted first.
    Block,
    /// On `K⁺`, restricting the eigenfunctions afterwards.
    Oversampled,
}

impl SpectralVariant {
    pub fn code(self) -> u8 {
        match self {
            SpectralVariant::Block => 0,
            SpectralVariant::Oversampled => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SpectralVariant::Block),
            1 => Some(SpectralVariant::Oversampled),
            _ => None,
        }
    }

    /// The variant a snapshot mode is meant to be reduced with.
    pub fn for_mode(mode: SnapshotMode) -> Self {
        match mode {
            SnapshotMode::OversampledUnrestricted => SpectralVariant::Oversampled,
            _ => SpectralVariant::Block,
        }
    }
}

/// Offline basis of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOfflineBasis {
    pub block: usize,
    pub mode: SnapshotMode,
    pub variant: SpectralVariant,
    /// All eigenvalues of the pencil, ascending.
    pub eigenvalues: Vec<f64>,
    /// Basis columns in the block's [`DgLayout`] order.
    pub columns: DMatrix<f64>,
    /// Eigenpair index of each column.
    pub eigen_index: Vec<usize>,
    /// Eigenpair indices dropped as dependent after restriction.
    pub dropped: Vec<usize>,
}

impl BlockOfflineBasis {
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// The basis built from the first `l` eigenpairs.
    pub fn prefix(&self, l: usize) -> BlockOfflineBasis {
        let keep: Vec<usize> = (0..self.dim()).filter(|&j| self.eigen_index[j] < l).collect();
        BlockOfflineBasis {
            columns: self.columns.select_columns(&keep),
            eigen_index: keep.iter().map(|&j| self.eigen_index[j]).collect(),
            dropped: self.dropped.iter().copied().filter(|&k| k < l).collect(),
            ..self.clone()
        }
    }
}

/// Snapshot-projected `(A, S)` over the support of `space`.
pub fn block_pencil(mesh: &FineMesh, space: &SnapshotSpace, coarse_h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (k, mb) = support_forms(mesh, space)?;
    let x = &space.columns;
    let a = x.transpose() * k.mul_dense(x);
    let s = x.transpose() * mb.mul_dense(x) / coarse_h;
    Ok(((&a + a.transpose()) * 0.5, (&s + s.transpose()) * 0.5))
}

/// Rows of the block's layout nodes inside `nodes` (ascending).
fn layout_rows(layout: &DgLayout, block: usize, nodes: &[usize]) -> Result<Vec<usize>> {
    let mut rows = Vec::with_capacity(layout.block_len(block));
    for v in &layout.block_nodes[block] {
        let k = nodes
            .binary_search(v)
            .map_err(|_| Error::InvariantViolation(format!("block node {v} missing from snapshot support")))?;
        rows.extend([2 * k, 2 * k + 1]);
    }
    Ok(rows)
}

/// Indices of columns kept by modified Gram–Schmidt, in order; a column is
/// dropped when less than `tol` of its norm survives orthogonalization.
fn independent_columns(x: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut q: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        for qi in &q {
            let d = qi.dot(&r);
            r -= qi * d;
        }
        let rn = r.norm();
        if norm > 0.0 && rn > tol * norm {
            q.push(r / rn);
            keep.push(j);
        }
    }
    keep
}

/// Reduces one block to its `l` dominant modes.
pub fn reduce_block(
    mesh: &FineMesh,
    partition: &CoarsePartition,
    layout: &DgLayout,
    space: &SnapshotSpace,
    l: usize,
    variant: SpectralVariant,
    pod_tol: f64,
) -> Result<BlockOfflineBasis> {
    let b = space.block;
    let restricted;
    let sp = match variant {
        SpectralVariant::Block if space.support != partition.blocks[b] => {
            restricted = space.restricted(mesh, partition, pod_tol)?;
            &restricted
        }
        _ => space,
    };
    if l == 0 || l > sp.dim() {
        return Err(Error::InvalidInput(format!(
            "block {b}: requested {l} basis functions from a snapshot space of dimension {}",
            sp.dim()
        )));
    }
    let (a, s) = block_pencil(mesh, sp, partition.coarse_h)?;
    let eig = dense_generalized_eigensolve(&a, &s)?;
    let phi = &sp.columns * eig.vectors.columns(0, l);
    let rows = layout_rows(layout, b, &sp.nodes)?;
    let local = DMatrix::from_fn(rows.len(), l, |r, c| phi[(rows[r], c)]);
    let (columns, eigen_index, dropped) = if sp.support == partition.blocks[b] {
        (local, (0..l).collect(), Vec::new())
    } else {
        let keep = independent_columns(&local, 1e-6);
        let dropped: Vec<usize> = (0..l).filter(|k| !keep.contains(k)).collect();
        if !dropped.is_empty() {
            log::warn!("block {b}: dropped {} dependent offline functions after restriction", dropped.len());
        }
        (local.select_columns(&keep), keep, dropped)
    };
    Ok(BlockOfflineBasis { block: b, mode: space.mode, variant, eigenvalues: eig.values, columns, eigen_index, dropped })
}

/// Reduces every block in parallel with `l[b]` modes.
pub fn reduce_all(
    mesh: &FineMesh,
    partition: &CoarsePartition,
    layout: &DgLayout,
    snapshots: &[SnapshotSpace],
    l: &[usize],
    variant: SpectralVariant,
    pod_tol: f64,
) -> Result<Vec<BlockOfflineBasis>> {
    if l.len() != snapshots.len() {
        return Err(Error::DimensionMismatch { expected: snapshots.len(), actual: l.len() });
    }
    snapshots
        .par_iter()
        .zip(l.par_iter())
        .map(|(s, &lb)| reduce_block(mesh, partition, layout, s, lb, variant, pod_tol))
        .collect()
}

/// Rank report of the edge-mean matrix `M_jl = ∫_{E_l} φ_j·n` of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeanCheck {
    pub block: usize,
    pub n_edges: usize,
    pub rank: usize,
    /// Smallest of the `min(L, n_edges)` singular values.
    pub sigma_min: f64,
}

impl EdgeMeanCheck {
    pub fn full_rank(&self) -> bool {
        self.rank == self.n_edges
    }
}

/// Edge-normal means of every basis column over the block's coarse edges.
pub fn edge_mean_matrix(ctx: &DgContext, basis: &BlockOfflineBasis) -> DMatrix<f64> {
    let b = basis.block;
    let edges = &ctx.partition.block_edges[b];
    let mut m = DMatrix::zeros(basis.dim(), edges.len());
    for (col, &e) in edges.iter().enumerate() {
        let ce = &ctx.partition.edges[e];
        for seg in &ce.segments {
            let t = if ce.plus == b { seg.plus_triangle } else { seg.minus_triangle.expect("interior edge") };
            let el = P1Triangle::new(ctx.mesh.vertices(t)).expect("positive area");
            let [p, q] = ctx.mesh.edges[seg.edge].nodes.map(|v| ctx.mesh.nodes[v]);
            for (s, w) in GAUSS2 {
                let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                for (a, &v) in ctx.mesh.triangles[t].iter().enumerate() {
                    let Some(k) = ctx.layout.local_index(b, v) else { continue };
                    let hat = 1.0 + el.grads[a][0] * (x[0] - el.vertices[a][0]) + el.grads[a][1] * (x[1] - el.vertices[a][1]);
                    let wt = w * seg.length * hat;
                    for j in 0..basis.dim() {
                        m[(j, col)] +=
                            wt * (basis.columns[(2 * k, j)] * seg.normal[0] + basis.columns[(2 * k + 1, j)] * seg.normal[1]);
                    }
                }
            }
        }
    }
    m
}

pub fn check_edge_means(ctx: &DgContext, basis: &BlockOfflineBasis) -> EdgeMeanCheck {
    let m = edge_mean_matrix(ctx, basis);
    let n_edges = m.ncols();
    let sv = m.svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax && smax > 0.0).count();
    EdgeMeanCheck { block: basis.block, n_edges, rank, sigma_min: sv.min() }
}

/// Global offline space plus the per-block edge-mean reports. Rank
/// deficiencies are logged, not fatal.
pub fn assemble_global_offline(
    ctx: &DgContext,
    bases: &[BlockOfflineBasis],
) -> Result<(BlockSpace, Vec<EdgeMeanCheck>)> {
    let checks: Vec<EdgeMeanCheck> = bases.par_iter().map(|b| check_edge_means(ctx, b)).collect();
    for c in checks.iter().filter(|c| !c.full_rank()) {
        log::warn!(
            "block {}: edge-mean matrix has rank {} over {} coarse edges (smallest singular value {:e})",
            c.block,
            c.rank,
            c.n_edges,
            c.sigma_min
        );
    }
    let space = BlockSpace::from_columns(&ctx.layout, bases.iter().map(|b| b.columns.clone()).collect())?;
    Ok((space, checks))
}
