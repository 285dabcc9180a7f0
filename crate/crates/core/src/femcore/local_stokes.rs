use std::collections::HashMap;

use nalgebra::DMatrix;

use super::element::P1Triangle;
use super::linalg::{CsrMatrix, SparseDirectSolver};
use crate::geometry::FineMesh;
use crate::{Error, Result};

/// Brezzi–Pitkäranta coefficient of the local pressure stabilization.
pub const PRESSURE_STABILIZATION: f64 = 0.05;

/// A connected set of fine triangles with local node numbering.
#[derive(Clone, Debug)]
pub struct LocalDomain {
    pub triangles: Vec<usize>,
    /// Global node ids, ascending; the position is the local id.
    pub nodes: Vec<usize>,
    /// Local ids of the nodes on `∂D`, ascending by global id.
    pub boundary: Vec<usize>,
    /// Local ids of the interior nodes, ascending.
    pub interior: Vec<usize>,
    pub area: f64,
    local: HashMap<usize, usize>,
    /// Boundary edges as local node pairs with their outward normals and lengths.
    boundary_edges: Vec<([usize; 2], [f64; 2], f64)>,
}

impl LocalDomain {
    pub fn new(mesh: &FineMesh, triangles: &[usize]) -> Self {
        let mut triangles = triangles.to_vec();
        triangles.sort_unstable();
        triangles.dedup();
        let mut nodes: Vec<usize> = triangles.iter().flat_map(|&t| mesh.triangles[t]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let in_domain: std::collections::HashSet<usize> = triangles.iter().copied().collect();
        let mut on_boundary = vec![false; nodes.len()];
        let mut boundary_edges = Vec::new();
        for &t in &triangles {
            for e in mesh.triangle_edges(t) {
                let inside = mesh.edges[e].triangles.iter().flatten().filter(|s| in_domain.contains(s)).count();
                if inside == 1 {
                    let [a, b] = mesh.edges[e].nodes;
                    let (la, lb) = (local[&a], local[&b]);
                    on_boundary[la] = true;
                    on_boundary[lb] = true;
                    boundary_edges.push(([la, lb], mesh.outward_normal(e, t), mesh.edge_length(e)));
                }
            }
        }
        let boundary = (0..nodes.len()).filter(|&i| on_boundary[i]).collect();
        let interior = (0..nodes.len()).filter(|&i| !on_boundary[i]).collect();
        let area = triangles.iter().map(|&t| mesh.area(t)).sum();
        Self { triangles, nodes, boundary, interior, area, local, boundary_edges }
    }

    pub fn local_id(&self, global: usize) -> Option<usize> {
        self.local.get(&global).copied()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// `∫_{∂D} g·n` for the piecewise-linear interpolant of nodal data `g`
    /// (indexed by local node).
    pub fn boundary_flux(&self, g: &[[f64; 2]]) -> f64 {
        self.boundary_edges
            .iter()
            .map(|([a, b], n, len)| {
                let m = [(g[*a][0] + g[*b][0]) / 2.0, (g[*a][1] + g[*b][1]) / 2.0];
                len * (m[0] * n[0] + m[1] * n[1])
            })
            .sum()
    }
}

/// Vector-valued P1 forms on a [`LocalDomain`], indexed `2 l + c` over local nodes.
#[derive(Clone, Debug)]
pub struct LocalForms {
    /// `∫_D ∇u : ∇v`.
    pub stiffness: CsrMatrix,
    /// `∫_D u · v`.
    pub mass: CsrMatrix,
    /// `∫_{∂D} u · v`.
    pub boundary_mass: CsrMatrix,
}

impl LocalDomain {
    pub fn forms(&self, mesh: &FineMesh) -> Result<LocalForms> {
        let n = 2 * self.n_nodes();
        let (mut tk, mut tm, mut tb) = (Vec::new(), Vec::new(), Vec::new());
        for &tri in &self.triangles {
            let el = P1Triangle::new(mesh.vertices(tri))?;
            let loc = mesh.triangles[tri].map(|v| self.local[&v]);
            let (k, m) = (el.stiffness(), el.mass());
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..2 {
                        tk.push((2 * loc[a] + c, 2 * loc[b] + c, k[a][b]));
                        tm.push((2 * loc[a] + c, 2 * loc[b] + c, m[a][b]));
                    }
                }
            }
        }
        for ([a, b], _, len) in &self.boundary_edges {
            for (p, q, w) in [(a, a, 2.0), (a, b, 1.0), (b, a, 1.0), (b, b, 2.0)] {
                for c in 0..2 {
                    tb.push((2 * p + c, 2 * q + c, len * w / 6.0));
                }
            }
        }
        Ok(LocalForms {
            stiffness: CsrMatrix::from_triplets(n, n, &tk),
            mass: CsrMatrix::from_triplets(n, n, &tm),
            boundary_mass: CsrMatrix::from_triplets(n, n, &tb),
        })
    }
}

/// Local Stokes problem: Dirichlet data on `∂D`, constant divergence `c`.
#[derive(Clone, Debug)]
pub struct LocalStokesProblem {
    pub domain: LocalDomain,
    /// Velocity at each boundary node, in the order of `domain.boundary`.
    pub boundary_data: Vec<[f64; 2]>,
}

impl LocalStokesProblem {
    pub fn new(domain: LocalDomain, boundary_data: Vec<[f64; 2]>) -> Result<Self> {
        if boundary_data.len() != domain.boundary.len() {
            return Err(Error::DimensionMismatch { expected: domain.boundary.len(), actual: boundary_data.len() });
        }
        Ok(Self { domain, boundary_data })
    }

    /// Samples `g` at the boundary nodes.
    pub fn from_fn(mesh: &FineMesh, triangles: &[usize], g: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let domain = LocalDomain::new(mesh, triangles);
        let boundary_data = domain.boundary.iter().map(|&l| g(mesh.nodes[domain.nodes[l]])).collect();
        Self { domain, boundary_data }
    }

    /// The compatible divergence constant `(1/|D|) ∫_{∂D} g·n`.
    pub fn divergence_constant(&self) -> f64 {
        let mut g = vec![[0.0; 2]; self.domain.n_nodes()];
        for (k, &l) in self.domain.boundary.iter().enumerate() {
            g[l] = self.boundary_data[k];
        }
        self.domain.boundary_flux(&g) / self.domain.area
    }
}

#[derive(Clone, Debug)]
pub struct LocalStokesSolution {
    /// Velocity coefficients `(node, component)` over `domain.nodes`.
    pub velocity: Vec<f64>,
    /// Nodal pressure over `domain.nodes`, zero mean.
    pub nodal_pressure: Vec<f64>,
    pub divergence_constant: f64,
}

impl LocalStokesSolution {
    /// Piecewise-constant pressure: the mean of the nodal values per triangle.
    pub fn triangle_pressure(&self, mesh: &FineMesh, domain: &LocalDomain) -> Vec<f64> {
        domain
            .triangles
            .iter()
            .map(|&t| mesh.triangles[t].iter().map(|v| self.nodal_pressure[domain.local[v]]).sum::<f64>() / 3.0)
            .collect()
    }
}

/// Factored P1/P1 stabilized Stokes operator on one domain.
///
/// Unknowns are interior velocities, all nodal pressures and one multiplier
/// for the zero-mean pressure constraint. Boundary velocities are eliminated.
pub struct LocalStokesSolver {
    pub domain: LocalDomain,
    solver: SparseDirectSolver,
    /// Couplings of boundary velocity DOFs into the momentum and continuity rows.
    coupling: CsrMatrix,
    mean: Vec<f64>,
    n_free: usize,
}

impl LocalStokesSolver {
    pub fn new(mesh: &FineMesh, domain: LocalDomain) -> Result<Self> {
        let nn = domain.n_nodes();
        let mut free_index = vec![usize::MAX; nn];
        for (k, &l) in domain.interior.iter().enumerate() {
            free_index[l] = k;
        }
        let mut bnd_index = vec![usize::MAX; nn];
        for (k, &l) in domain.boundary.iter().enumerate() {
            bnd_index[l] = k;
        }
        let n_free = 2 * domain.interior.len();
        let n_sys = n_free + nn + 1;
        let mut t = Vec::new();
        let mut c = Vec::new();
        let mut mean = vec![0.0; nn];
        for &tri in &domain.triangles {
            let el = P1Triangle::new(mesh.vertices(tri))?;
            let loc = mesh.triangles[tri].map(|v| domain.local[&v]);
            let k = el.stiffness();
            let ht = el.longest_edge();
            let stab = PRESSURE_STABILIZATION * ht * ht;
            for a in 0..3 {
                mean[loc[a]] += el.area / 3.0;
                for b in 0..3 {
                    // velocity-velocity
                    for comp in 0..2 {
                        let (ra, cb) = (loc[a], loc[b]);
                        if free_index[ra] != usize::MAX {
                            let row = 2 * free_index[ra] + comp;
                            if free_index[cb] != usize::MAX {
                                t.push((row, 2 * free_index[cb] + comp, k[a][b]));
                            } else {
                                c.push((row, 2 * bnd_index[cb] + comp, k[a][b]));
                            }
                        }
                    }
                    // continuity row for pressure node a, velocity node b:
                    // −∫ φ_a ∂_c φ_b = −∂_c φ_b |T| / 3
                    for comp in 0..2 {
                        let v = -el.grads[b][comp] * el.area / 3.0;
                        let prow = n_free + loc[a];
                        if free_index[loc[b]] != usize::MAX {
                            let col = 2 * free_index[loc[b]] + comp;
                            t.push((prow, col, v));
                            t.push((col, prow, v));
                        } else {
                            c.push((prow, 2 * bnd_index[loc[b]] + comp, v));
                        }
                    }
                    t.push((n_free + loc[a], n_free + loc[b], -stab * k[a][b]));
                }
            }
        }
        for (l, &m) in mean.iter().enumerate() {
            t.push((n_free + l, n_sys - 1, m));
            t.push((n_sys - 1, n_free + l, m));
        }
        let solver = SparseDirectSolver::new(CsrMatrix::from_triplets(n_sys, n_sys, &t))?;
        let coupling = CsrMatrix::from_triplets(n_sys, 2 * domain.boundary.len(), &c);
        Ok(Self { domain, solver, coupling, mean, n_free })
    }

    /// Solves for each column of boundary data. Column `j` of `data` holds the
    /// velocity at the boundary nodes, `(node, component)` ordered.
    pub fn solve_columns(&self, data: &DMatrix<f64>) -> Result<Vec<LocalStokesSolution>> {
        let nb = self.domain.boundary.len();
        if data.nrows() != 2 * nb {
            return Err(Error::DimensionMismatch { expected: 2 * nb, actual: data.nrows() });
        }
        let nn = self.domain.n_nodes();
        let n_sys = self.solver.dim();
        let mut consts = Vec::with_capacity(data.ncols());
        let mut rhs = -self.coupling.mul_dense(data);
        for j in 0..data.ncols() {
            let mut g = vec![[0.0; 2]; nn];
            for (k, &l) in self.domain.boundary.iter().enumerate() {
                g[l] = [data[(2 * k, j)], data[(2 * k + 1, j)]];
            }
            let c = self.domain.boundary_flux(&g) / self.domain.area;
            for (l, m) in self.mean.iter().enumerate() {
                rhs[(self.n_free + l, j)] -= c * m;
            }
            consts.push(c);
        }
        let _ = n_sys;
        let x = self.solver.solve_columns(&rhs)?;
        let mut out = Vec::with_capacity(data.ncols());
        for j in 0..data.ncols() {
            let mut velocity = vec![0.0; 2 * nn];
            for (k, &l) in self.domain.interior.iter().enumerate() {
                velocity[2 * l] = x[(2 * k, j)];
                velocity[2 * l + 1] = x[(2 * k + 1, j)];
            }
            for (k, &l) in self.domain.boundary.iter().enumerate() {
                velocity[2 * l] = data[(2 * k, j)];
                velocity[2 * l + 1] = data[(2 * k + 1, j)];
            }
            let nodal_pressure = (0..nn).map(|l| x[(self.n_free + l, j)]).collect();
            out.push(LocalStokesSolution { velocity, nodal_pressure, divergence_constant: consts[j] });
        }
        Ok(out)
    }

    pub fn solve(&self, boundary_data: &[[f64; 2]]) -> Result<LocalStokesSolution> {
        let col = DMatrix::from_iterator(2 * boundary_data.len(), 1, boundary_data.iter().flatten().copied());
        Ok(self.solve_columns(&col)?.remove(0))
    }
}

/// Factors and solves a single local Stokes problem.
pub fn solve_local_stokes(mesh: &FineMesh, problem: &LocalStokesProblem) -> Result<LocalStokesSolution> {
    LocalStokesSolver::new(mesh, problem.domain.clone())?.solve(&problem.boundary_data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femcore::element::{element_divergence, TRI_DEG4};
    use crate::geometry::{generate_perforated_mesh, BlockShape, PerforationSet};

    fn square(refinement: usize) -> FineMesh {
        generate_perforated_mesh(&PerforationSet::empty(), 1.0, refinement, BlockShape::Rectangular).unwrap().0
    }

    fn all_triangles(mesh: &FineMesh) -> Vec<usize> {
        (0..mesh.triangles.len()).collect()
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = square(4);
        let p = LocalStokesProblem::from_fn(&mesh, &all_triangles(&mesh), |_| [0.0, 0.0]);
        let s = solve_local_stokes(&mesh, &p).unwrap();
        assert!(s.velocity.iter().chain(&s.nodal_pressure).all(|v| *v == 0.0));
    }

    #[test]
    fn translation_is_reproduced() {
        let mesh = square(6);
        let p = LocalStokesProblem::from_fn(&mesh, &all_triangles(&mesh), |_| [1.0, 0.0]);
        let s = solve_local_stokes(&mesh, &p).unwrap();
        for l in 0..p.domain.n_nodes() {
            assert!((s.velocity[2 * l] - 1.0).abs() < 1e-10 && s.velocity[2 * l + 1].abs() < 1e-10);
        }
        assert!(s.nodal_pressure.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn divergence_constant_is_matched() {
        let mesh = square(6);
        let p = LocalStokesProblem::from_fn(&mesh, &all_triangles(&mesh), |x| [x[0] * x[1], x[0].sin()]);
        let s = solve_local_stokes(&mesh, &p).unwrap();
        let c = p.divergence_constant();
        assert!((s.divergence_constant - c).abs() < 1e-15);
        let mut div = 0.0;
        for &t in &p.domain.triangles {
            let row = element_divergence(mesh.vertices(t)).unwrap();
            for (a, v) in mesh.triangles[t].iter().enumerate() {
                let l = p.domain.local_id(*v).unwrap();
                div -= row[2 * a] * s.velocity[2 * l] + row[2 * a + 1] * s.velocity[2 * l + 1];
            }
        }
        let flux = c * p.domain.area;
        assert!((div - flux).abs() <= 1e-10 * flux.abs().max(1e-300));
        let mean: f64 = s.triangle_pressure(&mesh, &p.domain).iter().zip(&p.domain.triangles)
            .map(|(q, &t)| q * mesh.area(t)).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn linear_in_boundary_data() {
        let mesh = square(5);
        let domain = LocalDomain::new(&mesh, &all_triangles(&mesh));
        let solver = LocalStokesSolver::new(&mesh, domain.clone()).unwrap();
        let g1: Vec<[f64; 2]> = domain.boundary.iter().map(|&l| mesh.nodes[domain.nodes[l]]).collect();
        let g2: Vec<[f64; 2]> = domain.boundary.iter().enumerate().map(|(k, _)| [(k as f64).cos(), 0.3]).collect();
        let sum: Vec<[f64; 2]> = g1.iter().zip(&g2).map(|(a, b)| [a[0] + b[0], a[1] + b[1]]).collect();
        let (s1, s2, s12) = (solver.solve(&g1).unwrap(), solver.solve(&g2).unwrap(), solver.solve(&sum).unwrap());
        for i in 0..s1.velocity.len() {
            assert!((s1.velocity[i] + s2.velocity[i] - s12.velocity[i]).abs() < 1e-10);
        }
    }

    fn poiseuille_l2_error(refinement: usize) -> f64 {
        let mesh = square(refinement);
        let exact = |x: [f64; 2]| [x[1] * (1.0 - x[1]), 0.0];
        let p = LocalStokesProblem::from_fn(&mesh, &all_triangles(&mesh), exact);
        let s = solve_local_stokes(&mesh, &p).unwrap();
        let mut err = 0.0;
        for t in 0..mesh.triangles.len() {
            let el = P1Triangle::new(mesh.vertices(t)).unwrap();
            let loc = mesh.triangles[t].map(|v| p.domain.local_id(v).unwrap());
            for (bary, w) in TRI_DEG4 {
                let x = el.map(bary);
                let u = exact(x);
                for c in 0..2 {
                    let uh: f64 = (0..3).map(|a| bary[a] * s.velocity[2 * loc[a] + c]).sum();
                    err += w * el.area * (uh - u[c]).powi(2);
                }
            }
        }
        err.sqrt()
    }

    #[test]
    fn poiseuille_converges_at_second_order() {
        let e: Vec<f64> = [8, 16, 32].iter().map(|&r| poiseuille_l2_error(r)).collect();
        for w in e.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "errors {e:?}");
        }
    }
}
