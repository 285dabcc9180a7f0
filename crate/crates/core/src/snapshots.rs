//! Snapshot spaces: local Stokes solves on each coarse block (or its
//! oversampled extension) driven by boundary deltas or Gaussian noise.
//!
//! Every column is a fine P1 velocity over the nodes of its support, with
//! rows `2 k + c` for the `k`-th node and component `c`. Nodes on
//! perforation boundaries always carry zero data and never drive a solve.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::femcore::{CsrMatrix, LocalDomain, LocalStokesSolver};
use crate::geometry::{grow_layers, CoarsePartition, FineMesh};
use crate::{Error, Result};

/// How the snapshots of a block are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    /// Per-node, per-component deltas on `∂K`.
    Standard,
    /// Deltas on `∂K⁺`, POD, then restriction to `K`.
    OversampledRestricted,
    /// Deltas on `∂K⁺`, POD, kept on `K⁺` for the oversampled eigenproblem.
    OversampledUnrestricted,
    /// Gaussian boundary data on `∂K⁺`.
    Randomized,
}

impl SnapshotMode {
    pub fn name(self) -> &'static str {
        match self {
            SnapshotMode::Standard => "standard",
            SnapshotMode::OversampledRestricted => "oversampled_restricted",
            SnapshotMode::OversampledUnrestricted => "oversampled_unrestricted",
            SnapshotMode::Randomized => "randomized",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SnapshotMode::Standard => 0,
            SnapshotMode::OversampledRestricted => 1,
            SnapshotMode::OversampledUnrestricted => 2,
            SnapshotMode::Randomized => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [
            SnapshotMode::Standard,
            SnapshotMode::OversampledRestricted,
            SnapshotMode::OversampledUnrestricted,
            SnapshotMode::Randomized,
        ]
        .into_iter()
        .find(|m| m.code() == code)
    }

    pub fn is_oversampled(self) -> bool {
        !matches!(self, SnapshotMode::Standard)
    }
}

/// Parameters of a snapshot construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSettings {
    pub mode: SnapshotMode,
    /// Fine layers added around each block; ignored by [`SnapshotMode::Standard`].
    pub layers: usize,
    /// Relative singular-value cutoff of the POD.
    pub pod_tol: f64,
    /// Number of random samples per block.
    pub count: usize,
    pub seed: u64,
}

impl Default for SnapshotSettings {
    fn default() -> Self {
        Self { mode: SnapshotMode::Standard, layers: 4, pod_tol: 1e-10, count: 36, seed: 0 }
    }
}

/// Snapshot columns of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSpace {
    pub block: usize,
    pub mode: SnapshotMode,
    pub layers: usize,
    /// Triangles the columns live on, ascending.
    pub support: Vec<usize>,
    /// Global node of each row pair, ascending.
    pub nodes: Vec<usize>,
    pub columns: DMatrix<f64>,
    /// Divergence constant of the solve behind each column (combined
    /// linearly along with the columns).
    pub divergence: Vec<f64>,
}

impl SnapshotSpace {
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Restricts the columns to the block's own triangles and keeps an
    /// orthonormal basis of their traces on `∂K` (boundary-mass inner
    /// product). Fields with no trace cannot be selected by the spectral
    /// problem and are dropped.
    pub fn restricted(&self, mesh: &FineMesh, partition: &CoarsePartition, pod_tol: f64) -> Result<SnapshotSpace> {
        let domain = LocalDomain::new(mesh, &partition.blocks[self.block]);
        let rows = row_map(&self.nodes, &domain.nodes)?;
        let restricted = DMatrix::from_fn(rows.len(), self.dim(), |r, c| self.columns[(rows[r], c)]);
        let forms = domain.forms(mesh)?;
        let trace_dofs: Vec<usize> = domain.boundary.iter().flat_map(|&l| [2 * l, 2 * l + 1]).collect();
        let mb = forms.boundary_mass.select(&trace_dofs, &trace_dofs).to_dense();
        let traces = DMatrix::from_fn(trace_dofs.len(), self.dim(), |r, c| restricted[(trace_dofs[r], c)]);
        let t = weighted_pod(&traces, &mb, pod_tol)?;
        if t.ncols() == 0 {
            return Err(Error::EmptyAfterPod { block: self.block });
        }
        Ok(SnapshotSpace {
            block: self.block,
            mode: self.mode,
            layers: self.layers,
            support: domain.triangles.clone(),
            nodes: domain.nodes.clone(),
            columns: &restricted * &t,
            divergence: combine(&self.divergence, &t),
        })
    }
}

/// Rows of `sub` inside `nodes` (both ascending), as row-pair offsets.
fn row_map(nodes: &[usize], sub: &[usize]) -> Result<Vec<usize>> {
    let mut rows = Vec::with_capacity(2 * sub.len());
    for v in sub {
        let k = nodes
            .binary_search(v)
            .map_err(|_| Error::InvariantViolation(format!("node {v} lies outside the snapshot support")))?;
        rows.extend([2 * k, 2 * k + 1]);
    }
    Ok(rows)
}

fn combine(values: &[f64], t: &DMatrix<f64>) -> Vec<f64> {
    (t.transpose() * DVector::from_column_slice(values)).iter().copied().collect()
}

/// POD coefficients `T` such that the columns of `x T` are orthonormal in
/// the `w` inner product and span the dominant part of `span(x)`.
///
/// Modes whose singular value falls below `tol` times the largest are
/// dropped. `w` must be symmetric positive definite.
pub fn weighted_pod(x: &DMatrix<f64>, w: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("POD inner product".into()))?;
    let y = chol.l().transpose() * x;
    let svd = y.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > tol * smax)
        .collect();
    keep.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(DMatrix::from_fn(x.ncols(), keep.len(), |r, c| vt[(keep[c], r)] / svd.singular_values[keep[c]]))
}

/// Boundary positions (into `domain.boundary`) of the nodes that carry data.
fn driven_boundary(mesh: &FineMesh, domain: &LocalDomain) -> Vec<usize> {
    (0..domain.boundary.len())
        .filter(|&k| !mesh.is_perforation_node(domain.nodes[domain.boundary[k]]))
        .collect()
}

fn solve_data(
    mesh: &FineMesh,
    block: usize,
    mode: SnapshotMode,
    layers: usize,
    domain: LocalDomain,
    data: &DMatrix<f64>,
) -> Result<SnapshotSpace> {
    let solver = LocalStokesSolver::new(mesh, domain)?;
    let sols = solver.solve_columns(data)?;
    let n = 2 * solver.domain.n_nodes();
    let mut columns = DMatrix::zeros(n, sols.len());
    for (j, s) in sols.iter().enumerate() {
        columns.column_mut(j).copy_from_slice(&s.velocity);
    }
    Ok(SnapshotSpace {
        block,
        mode,
        layers,
        support: solver.domain.triangles.clone(),
        nodes: solver.domain.nodes.clone(),
        columns,
        divergence: sols.iter().map(|s| s.divergence_constant).collect(),
    })
}

fn delta_data(mesh: &FineMesh, domain: &LocalDomain) -> DMatrix<f64> {
    let driven = driven_boundary(mesh, domain);
    let mut data = DMatrix::zeros(2 * domain.boundary.len(), 2 * driven.len());
    for (j, &k) in driven.iter().enumerate() {
        data[(2 * k, 2 * j)] = 1.0;
        data[(2 * k + 1, 2 * j + 1)] = 1.0;
    }
    data
}

/// Two snapshots per non-perforation boundary node of `K`, ordered
/// `(node, component)`.
pub fn build_standard_snapshots(mesh: &FineMesh, partition: &CoarsePartition, block: usize) -> Result<SnapshotSpace> {
    let domain = LocalDomain::new(mesh, &partition.blocks[block]);
    let data = delta_data(mesh, &domain);
    solve_data(mesh, block, SnapshotMode::Standard, 0, domain, &data)
}

/// Delta-driven snapshots on `K⁺`, deduplicated by POD in the
/// `∫∇u:∇v + ∫u·v` inner product, then optionally restricted to `K`.
pub fn build_oversampled_snapshots(
    mesh: &FineMesh,
    partition: &CoarsePartition,
    block: usize,
    layers: usize,
    restrict: bool,
    pod_tol: f64,
) -> Result<SnapshotSpace> {
    let support = grow_layers(mesh, &partition.blocks[block], layers);
    let domain = LocalDomain::new(mesh, &support);
    let forms = domain.forms(mesh)?;
    let data = delta_data(mesh, &domain);
    let mode = if restrict { SnapshotMode::OversampledRestricted } else { SnapshotMode::OversampledUnrestricted };
    let raw = solve_data(mesh, block, mode, layers, domain, &data)?;
    let w = forms.stiffness.add(&forms.mass).to_dense();
    let t = weighted_pod(&raw.columns, &w, pod_tol)?;
    if t.ncols() == 0 {
        return Err(Error::EmptyAfterPod { block });
    }
    let pod = SnapshotSpace { columns: &raw.columns * &t, divergence: combine(&raw.divergence, &t), ..raw };
    if restrict {
        pod.restricted(mesh, partition, pod_tol)
    } else {
        Ok(pod)
    }
}

/// `count` solves on `K⁺` with i.i.d. standard normal data at every driven
/// boundary DOF. Block `b` draws from stream `b` of a ChaCha8 generator
/// seeded with `seed`.
pub fn build_randomized_snapshots(
    mesh: &FineMesh,
    partition: &CoarsePartition,
    block: usize,
    layers: usize,
    count: usize,
    seed: u64,
) -> Result<SnapshotSpace> {
    if count == 0 {
        return Err(Error::InvalidInput("randomized snapshot count must be at least 1".into()));
    }
    let support = grow_layers(mesh, &partition.blocks[block], layers);
    let domain = LocalDomain::new(mesh, &support);
    let driven = driven_boundary(mesh, &domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    let mut data = DMatrix::zeros(2 * domain.boundary.len(), count);
    for j in 0..count {
        for &k in &driven {
            for c in 0..2 {
                data[(2 * k + c, j)] = StandardNormal.sample(&mut rng);
            }
        }
    }
    solve_data(mesh, block, SnapshotMode::Randomized, layers, domain, &data)
}

/// Snapshot spaces of every block, computed in parallel.
pub fn build_snapshots(
    mesh: &FineMesh,
    partition: &CoarsePartition,
    settings: &SnapshotSettings,
) -> Result<Vec<SnapshotSpace>> {
    (0..partition.n_blocks())
        .into_par_iter()
        .map(|b| match settings.mode {
            SnapshotMode::Standard => build_standard_snapshots(mesh, partition, b),
            SnapshotMode::OversampledRestricted => {
                build_oversampled_snapshots(mesh, partition, b, settings.layers, true, settings.pod_tol)
            }
            SnapshotMode::OversampledUnrestricted => {
                build_oversampled_snapshots(mesh, partition, b, settings.layers, false, settings.pod_tol)
            }
            SnapshotMode::Randomized => {
                build_randomized_snapshots(mesh, partition, b, settings.layers, settings.count, settings.seed)
            }
        })
        .collect()
}

/// Fine P1 forms over the support of `space`: stiffness and the boundary
/// mass of `∂(support)`, in the row order of its columns.
pub fn support_forms(mesh: &FineMesh, space: &SnapshotSpace) -> Result<(CsrMatrix, CsrMatrix)> {
    let domain = LocalDomain::new(mesh, &space.support);
    let forms = domain.forms(mesh)?;
    Ok((forms.stiffness, forms.boundary_mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femcore::principal_angles;
    use crate::geometry::{generate_perforated_mesh, BlockShape, Circle, PerforationSet};

    fn mesh(shape: BlockShape) -> (FineMesh, CoarsePartition) {
        let perf = PerforationSet::new(vec![Circle::new([0.625, 0.375], 0.05)]).unwrap();
        generate_perforated_mesh(&perf, 0.25, 6, shape).unwrap()
    }

    fn perforated_block(mesh: &FineMesh, part: &CoarsePartition) -> usize {
        (0..part.n_blocks())
            .find(|&b| part.blocks[b].iter().any(|&t| mesh.triangles[t].iter().any(|&v| mesh.is_perforation_node(v))))
            .unwrap()
    }

    #[test]
    fn standard_count_and_compatibility() {
        let (mesh, part) = mesh(BlockShape::Rectangular);
        for b in [0, perforated_block(&mesh, &part)] {
            let s = build_standard_snapshots(&mesh, &part, b).unwrap();
            let domain = LocalDomain::new(&mesh, &part.blocks[b]);
            let m = domain.boundary.iter().filter(|&&l| !mesh.is_perforation_node(domain.nodes[l])).count();
            assert_eq!(s.dim(), 2 * m);
            // ∫_K div u equals the boundary flux of the delta
            for j in 0..s.dim() {
                let mut div = 0.0;
                for &t in &s.support {
                    let el = crate::femcore::P1Triangle::new(mesh.vertices(t)).unwrap();
                    for (a, &v) in mesh.triangles[t].iter().enumerate() {
                        let k = s.nodes.binary_search(&v).unwrap();
                        div += el.area * (s.columns[(2 * k, j)] * el.grads[a][0] + s.columns[(2 * k + 1, j)] * el.grads[a][1]);
                    }
                }
                let mut g = vec![[0.0; 2]; domain.n_nodes()];
                for l in 0..domain.n_nodes() {
                    if domain.boundary.contains(&l) {
                        g[l] = [s.columns[(2 * l, j)], s.columns[(2 * l + 1, j)]];
                    }
                }
                let flux = domain.boundary_flux(&g);
                assert!((div - flux).abs() < 1e-10, "column {j}: {div} vs {flux}");
                assert!((s.divergence[j] * domain.area - flux).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn x_deltas_superpose_to_unit_flow() {
        let (mesh, part) = mesh(BlockShape::Triangular);
        let b = perforated_block(&mesh, &part);
        let s = build_standard_snapshots(&mesh, &part, b).unwrap();
        let sum: DVector<f64> = (0..s.dim()).step_by(2).map(|j| s.columns.column(j).into_owned()).sum();
        let domain = LocalDomain::new(&mesh, &part.blocks[b]);
        let data: Vec<[f64; 2]> = domain
            .boundary
            .iter()
            .map(|&l| if mesh.is_perforation_node(domain.nodes[l]) { [0.0, 0.0] } else { [1.0, 0.0] })
            .collect();
        let direct = LocalStokesSolver::new(&mesh, domain).unwrap().solve(&data).unwrap();
        let err = (sum - DVector::from_vec(direct.velocity)).amax();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn zero_layers_restricted_matches_standard_span() {
        let (mesh, part) = mesh(BlockShape::Rectangular);
        let b = perforated_block(&mesh, &part);
        let std = build_standard_snapshots(&mesh, &part, b).unwrap();
        let os = build_oversampled_snapshots(&mesh, &part, b, 0, true, 1e-10).unwrap();
        assert_eq!(std.nodes, os.nodes);
        assert_eq!(std.dim(), os.dim());
        let angles = principal_angles(&std.columns, &os.columns);
        assert!(angles.iter().all(|&a| a < 1e-8), "{angles:?}");
    }

    #[test]
    fn pod_removes_duplicates_and_is_orthonormal() {
        let (mesh, part) = mesh(BlockShape::Rectangular);
        let s = build_standard_snapshots(&mesh, &part, 5).unwrap();
        let domain = LocalDomain::new(&mesh, &s.support);
        let forms = domain.forms(&mesh).unwrap();
        let w = forms.stiffness.add(&forms.mass).to_dense();
        let t = weighted_pod(&s.columns, &w, 1e-10).unwrap();
        assert_eq!(t.ncols(), s.dim());
        let mut dup = s.columns.clone().insert_column(s.dim(), 0.0);
        dup.set_column(s.dim(), &s.columns.column(3));
        let t2 = weighted_pod(&dup, &w, 1e-10).unwrap();
        assert_eq!(t2.ncols(), s.dim());
        let modes = &dup * &t2;
        let gram = modes.transpose() * &w * &modes;
        assert!((gram - DMatrix::identity(s.dim(), s.dim())).amax() < 1e-10);
    }

    #[test]
    fn oversampled_restricted_is_independent() {
        let (mesh, part) = mesh(BlockShape::Triangular);
        let b = perforated_block(&mesh, &part);
        let os = build_oversampled_snapshots(&mesh, &part, b, 2, true, 1e-10).unwrap();
        assert_eq!(os.support, part.blocks[b]);
        let gram = os.columns.transpose() * &os.columns;
        let eig = gram.symmetric_eigenvalues();
        assert!(eig.min() > 1e-12 * eig.max());
        let unres = build_oversampled_snapshots(&mesh, &part, b, 2, false, 1e-10).unwrap();
        assert!(unres.support.len() > part.blocks[b].len());
    }

    #[test]
    fn randomized_is_deterministic_and_compatible() {
        let (mesh, part) = mesh(BlockShape::Rectangular);
        let b = perforated_block(&mesh, &part);
        let a = build_randomized_snapshots(&mesh, &part, b, 2, 3, 7).unwrap();
        let c = build_randomized_snapshots(&mesh, &part, b, 2, 3, 7).unwrap();
        assert_eq!(a, c);
        let d = build_randomized_snapshots(&mesh, &part, b, 2, 3, 8).unwrap();
        assert_ne!(a.columns, d.columns);

        let one = build_randomized_snapshots(&mesh, &part, b, 2, 1, 11).unwrap();
        let domain = LocalDomain::new(&mesh, &one.support);
        let mut div = 0.0;
        for &t in &one.support {
            let el = crate::femcore::P1Triangle::new(mesh.vertices(t)).unwrap();
            for (a, &v) in mesh.triangles[t].iter().enumerate() {
                let k = one.nodes.binary_search(&v).unwrap();
                div += el.area * (one.columns[(2 * k, 0)] * el.grads[a][0] + one.columns[(2 * k + 1, 0)] * el.grads[a][1]);
            }
        }
        let g: Vec<[f64; 2]> = (0..domain.n_nodes()).map(|l| [one.columns[(2 * l, 0)], one.columns[(2 * l + 1, 0)]]).collect();
        let g: Vec<[f64; 2]> = (0..g.len()).map(|l| if domain.boundary.contains(&l) { g[l] } else { [0.0; 2] }).collect();
        assert!((div - domain.boundary_flux(&g)).abs() < 1e-10);
    }

    #[test]
    fn full_random_count_spans_oversampled_space() {
        // a small block so 2 M⁺ solves stay cheap
        let (mesh, part) = generate_perforated_mesh(&PerforationSet::empty(), 0.5, 3, BlockShape::Rectangular).unwrap();
        let full = build_oversampled_snapshots(&mesh, &part, 0, 1, false, 1e-10).unwrap();
        let rnd = build_randomized_snapshots(&mesh, &part, 0, 1, full.dim(), 3).unwrap();
        assert_eq!(full.nodes, rnd.nodes);
        let angles = principal_angles(&full.columns, &rnd.columns);
        assert_eq!(angles.len(), full.dim());
        assert!(angles.iter().all(|&a| a < 1e-8), "{angles:?}");
    }

    #[test]
    fn congruent_blocks_give_equal_snapshots() {
        let (mesh, part) = generate_perforated_mesh(&PerforationSet::empty(), 0.25, 4, BlockShape::Rectangular).unwrap();
        let (a, b) = (build_standard_snapshots(&mesh, &part, 5).unwrap(), build_standard_snapshots(&mesh, &part, 10).unwrap());
        // blocks 5 and 10 are translates; node order is preserved by the grid numbering
        assert_eq!(a.dim(), b.dim());
        assert!((&a.columns - &b.columns).amax() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_columns() {
        let (mesh, part) = mesh(BlockShape::Rectangular);
        let domain = LocalDomain::new(&mesh, &part.blocks[3]);
        let data = DMatrix::zeros(2 * domain.boundary.len(), 2);
        let s = solve_data(&mesh, 3, SnapshotMode::Standard, 0, domain, &data).unwrap();
        assert!(s.columns.iter().all(|v| *v == 0.0));
    }
}
