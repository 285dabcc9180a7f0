use super::space::DgLayout;
use crate::femcore::{element_divergence, element_laplacian, CsrMatrix, P1Triangle, GAUSS2, TRI_DEG4};
use crate::geometry::{CoarseEdgeKind, CoarsePartition, EdgeMarker, EdgeSegment, FineMesh};
use crate::problem::ProblemData;
use crate::{Error, Point, Result};

/// Fine-level DG operators on the full space `V_h^DG`.
#[derive(Clone, Debug)]
pub struct DgOperators {
    /// `a_DG`.
    pub a: CsrMatrix,
    /// `b_DG`: one row per block, then one per multiplier edge.
    pub b: CsrMatrix,
    /// Energy norm `‖u‖_A²` as a quadratic form.
    pub a_norm: CsrMatrix,
    /// Diagonal of the pressure norm `‖(q, q̂)‖_Q²`.
    pub q_mass: Vec<f64>,
}

/// One side of a fine edge segment.
#[derive(Clone, Copy)]
struct Side {
    triangle: usize,
    block: usize,
    /// Sign of this side's trace in the jump.
    sign: f64,
    /// Weight of this side in the average.
    weight: f64,
}

/// Geometry, numbering and penalty shared by all DG assemblies.
pub struct DgContext<'a> {
    pub mesh: &'a FineMesh,
    pub partition: &'a CoarsePartition,
    pub layout: DgLayout,
    pub gamma: f64,
    /// Coarse edges that carry a multiplier `p̂`: interior and Dirichlet edges.
    pub multiplier_edges: Vec<usize>,
    block_of: Vec<usize>,
}

impl<'a> DgContext<'a> {
    pub fn new(mesh: &'a FineMesh, partition: &'a CoarsePartition, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("penalty must be positive, got {gamma}")));
        }
        if partition.block_of_triangles(mesh.triangles.len()).iter().any(|&b| b == usize::MAX) {
            return Err(Error::MeshMismatch);
        }
        let multiplier_edges = (0..partition.edges.len())
            .filter(|&e| Self::has_dg_terms(partition.edges[e].kind))
            .collect();
        Ok(Self {
            mesh,
            partition,
            layout: DgLayout::new(mesh, partition),
            gamma,
            multiplier_edges,
            block_of: partition.block_of_triangles(mesh.triangles.len()),
        })
    }

    fn has_dg_terms(kind: CoarseEdgeKind) -> bool {
        matches!(kind, CoarseEdgeKind::Interior | CoarseEdgeKind::Boundary(EdgeMarker::Dirichlet))
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.n_blocks()
    }

    /// Number of pressure unknowns: one per block and one per multiplier edge.
    pub fn n_pressure(&self) -> usize {
        self.n_blocks() + self.multiplier_edges.len()
    }

    /// Zero-mean pressure weights `|K|`, needed only when the pressure is
    /// determined up to a constant (no Neumann boundary).
    pub fn gauge(&self) -> Option<Vec<f64>> {
        let neumann = self.partition.edges.iter().any(|e| e.marker() == EdgeMarker::Neumann);
        if neumann {
            return None;
        }
        let mut g = vec![0.0; self.n_pressure()];
        g[..self.n_blocks()].copy_from_slice(&self.partition.block_area);
        Some(g)
    }

    pub fn block_of(&self, triangle: usize) -> usize {
        self.block_of[triangle]
    }

    fn sides(&self, edge: usize, seg: &EdgeSegment) -> Vec<Side> {
        let ce = &self.partition.edges[edge];
        match seg.minus_triangle {
            Some(mt) => vec![
                Side { triangle: seg.plus_triangle, block: ce.plus, sign: 1.0, weight: 0.5 },
                Side { triangle: mt, block: ce.minus.expect("interior edge"), sign: -1.0, weight: 0.5 },
            ],
            None => vec![Side { triangle: seg.plus_triangle, block: ce.plus, sign: 1.0, weight: 1.0 }],
        }
    }

    /// Gauss points and weights (including the length) of a segment.
    fn gauss(&self, seg: &EdgeSegment) -> [(Point, f64); 2] {
        let [a, b] = self.mesh.edges[seg.edge].nodes;
        let (p, q) = (self.mesh.nodes[a], self.mesh.nodes[b]);
        GAUSS2.map(|(s, w)| ([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])], w * seg.length))
    }

    fn element(&self, t: usize) -> P1Triangle {
        P1Triangle::new(self.mesh.vertices(t)).expect("mesh triangles have positive area")
    }

    fn hat(el: &P1Triangle, a: usize, x: Point) -> f64 {
        let v = el.vertices[a];
        1.0 + el.grads[a][0] * (x[0] - v[0]) + el.grads[a][1] * (x[1] - v[1])
    }

    /// DOFs of the three vertices of `t` in `block` for component `c`.
    fn dofs(&self, block: usize, t: usize, c: usize) -> [Option<usize>; 3] {
        self.mesh.triangles[t].map(|v| self.layout.dof(block, v, c))
    }

    /// Assembles `a_DG`, `b_DG`, the energy norm and the pressure norm.
    pub fn assemble(&self) -> Result<DgOperators> {
        let n = self.layout.n_dofs;
        let inv_h = 1.0 / self.mesh.h;
        let mut ta = Vec::new();
        let mut tn = Vec::new();
        let mut tb = Vec::new();

        for t in 0..self.mesh.triangles.len() {
            let blk = self.block_of[t];
            let k = element_laplacian(self.mesh.vertices(t))?;
            let div = element_divergence(self.mesh.vertices(t))?;
            for c in 0..2 {
                let d = self.dofs(blk, t, c);
                for a in 0..3 {
                    let Some(i) = d[a] else { continue };
                    tb.push((blk, i, div[2 * a + c]));
                    for b in 0..3 {
                        if let Some(j) = d[b] {
                            ta.push((i, j, k[2 * a + c][2 * b + c]));
                            tn.push((i, j, k[2 * a + c][2 * b + c]));
                        }
                    }
                }
            }
        }

        let mut edge_row = vec![None; self.partition.edges.len()];
        for (r, &e) in self.multiplier_edges.iter().enumerate() {
            edge_row[e] = Some(self.n_blocks() + r);
        }

        for (e, ce) in self.partition.edges.iter().enumerate() {
            let dg = Self::has_dg_terms(ce.kind);
            for seg in &ce.segments {
                let sides = self.sides(e, seg);
                let gauss = self.gauss(seg);
                let els: Vec<P1Triangle> = sides.iter().map(|s| self.element(s.triangle)).collect();
                for (si, s) in sides.iter().enumerate() {
                    for (ti, t) in sides.iter().enumerate() {
                        for c in 0..2 {
                            let ds = self.dofs(s.block, s.triangle, c);
                            let dt = self.dofs(t.block, t.triangle, c);
                            for a in 0..3 {
                                let Some(i) = ds[a] else { continue };
                                let dn_a = els[si].grads[a][0] * seg.normal[0] + els[si].grads[a][1] * seg.normal[1];
                                for b in 0..3 {
                                    let Some(j) = dt[b] else { continue };
                                    let dn_b = els[ti].grads[b][0] * seg.normal[0] + els[ti].grads[b][1] * seg.normal[1];
                                    let mut jump = 0.0;
                                    let mut cons = 0.0;
                                    for (x, w) in gauss {
                                        let (pa, pb) = (Self::hat(&els[si], a, x), Self::hat(&els[ti], b, x));
                                        jump += w * s.sign * t.sign * pa * pb;
                                        cons += w * (t.weight * dn_b * s.sign * pa + s.weight * dn_a * t.sign * pb);
                                    }
                                    tn.push((i, j, inv_h * jump));
                                    if dg {
                                        ta.push((i, j, self.gamma * inv_h * jump - cons));
                                    }
                                }
                            }
                        }
                    }
                    if let Some(row) = edge_row[e] {
                        for c in 0..2 {
                            let ds = self.dofs(s.block, s.triangle, c);
                            for a in 0..3 {
                                let Some(i) = ds[a] else { continue };
                                let v: f64 = gauss.iter().map(|(x, w)| w * s.sign * Self::hat(&els[si], a, *x)).sum();
                                tb.push((row, i, v * seg.normal[c]));
                            }
                        }
                    }
                }
            }
        }

        let np = self.n_pressure();
        let mut q_mass = self.partition.block_area.clone();
        q_mass.extend(self.multiplier_edges.iter().map(|&e| self.mesh.h * self.partition.edges[e].length));
        Ok(DgOperators {
            a: CsrMatrix::from_triplets(n, n, &ta),
            b: CsrMatrix::from_triplets(np, n, &tb),
            a_norm: CsrMatrix::from_triplets(n, n, &tn),
            q_mass,
        })
    }

    /// Right-hand sides `(rhs_u, rhs_p)` of the hybrid system.
    pub fn assemble_rhs(&self, problem: &ProblemData) -> (Vec<f64>, Vec<f64>) {
        let mut rhs_u = vec![0.0; self.layout.n_dofs];
        let mut rhs_p = vec![0.0; self.n_pressure()];
        if !problem.f.is_zero() {
            for t in 0..self.mesh.triangles.len() {
                let el = self.element(t);
                let blk = self.block_of[t];
                for (bary, w) in TRI_DEG4 {
                    let f = problem.f.eval(el.map(bary));
                    for c in 0..2 {
                        for (a, d) in self.dofs(blk, t, c).iter().enumerate() {
                            if let Some(i) = d {
                                rhs_u[*i] += w * el.area * f[c] * bary[a];
                            }
                        }
                    }
                }
            }
        }
        let inv_h = 1.0 / self.mesh.h;
        let mut row = self.n_blocks();
        for (e, ce) in self.partition.edges.iter().enumerate() {
            let marker = ce.marker();
            let carries = Self::has_dg_terms(ce.kind);
            for seg in &ce.segments {
                if marker == EdgeMarker::Interior {
                    break;
                }
                let side = self.sides(e, seg)[0];
                let el = self.element(side.triangle);
                for (x, w) in self.gauss(seg) {
                    let g = match marker {
                        EdgeMarker::Dirichlet => problem.g_d.eval(x),
                        _ => problem.g_n.eval(x),
                    };
                    if marker == EdgeMarker::Dirichlet {
                        rhs_p[row] += w * (g[0] * seg.normal[0] + g[1] * seg.normal[1]);
                    }
                    for c in 0..2 {
                        for (a, d) in self.dofs(side.block, side.triangle, c).iter().enumerate() {
                            let Some(i) = d else { continue };
                            let phi = Self::hat(&el, a, x);
                            rhs_u[*i] += match marker {
                                EdgeMarker::Dirichlet => {
                                    let dn = el.grads[a][0] * seg.normal[0] + el.grads[a][1] * seg.normal[1];
                                    w * (self.gamma * inv_h * g[c] * phi - dn * g[c])
                                }
                                _ => w * g[c] * phi,
                            };
                        }
                    }
                }
            }
            if carries {
                row += 1;
            }
        }
        (rhs_u, rhs_p)
    }

    /// `∫_E [u]·[v]` over coarse edge `edge` for fine DG fields `u`, `v`.
    pub fn edge_jump_integral(&self, edge: usize, u: &[f64], v: &[f64]) -> f64 {
        let ce = &self.partition.edges[edge];
        let mut total = 0.0;
        for seg in &ce.segments {
            let sides = self.sides(edge, seg);
            for (x, w) in self.gauss(seg) {
                let mut ju = [0.0; 2];
                let mut jv = [0.0; 2];
                for s in &sides {
                    let (tu, tv) = (self.trace(u, s.block, s.triangle, x), self.trace(v, s.block, s.triangle, x));
                    for c in 0..2 {
                        ju[c] += s.sign * tu[c];
                        jv[c] += s.sign * tv[c];
                    }
                }
                total += w * (ju[0] * jv[0] + ju[1] * jv[1]);
            }
        }
        total
    }

    /// `∫_E [u]·n` over coarse edge `edge` with the stored normal.
    pub fn edge_normal_jump(&self, edge: usize, u: &[f64]) -> f64 {
        let ce = &self.partition.edges[edge];
        let mut total = 0.0;
        for seg in &ce.segments {
            for s in self.sides(edge, seg) {
                for (x, w) in self.gauss(seg) {
                    let t = self.trace(u, s.block, s.triangle, x);
                    total += w * s.sign * (t[0] * seg.normal[0] + t[1] * seg.normal[1]);
                }
            }
        }
        total
    }

    /// Value of the DG field `u` of `block` restricted to triangle `t` at `x`.
    pub fn trace(&self, u: &[f64], block: usize, t: usize, x: Point) -> [f64; 2] {
        let el = self.element(t);
        let mut out = [0.0; 2];
        for c in 0..2 {
            for (a, d) in self.dofs(block, t, c).iter().enumerate() {
                if let Some(i) = d {
                    out[c] += u[*i] * Self::hat(&el, a, x);
                }
            }
        }
        out
    }

    /// Nodal values of `u` on triangle `t` (zero at perforation nodes).
    pub fn triangle_values(&self, u: &[f64], t: usize) -> [[f64; 2]; 3] {
        let blk = self.block_of[t];
        let mut out = [[0.0; 2]; 3];
        for c in 0..2 {
            for (a, d) in self.dofs(blk, t, c).iter().enumerate() {
                if let Some(i) = d {
                    out[a][c] = u[*i];
                }
            }
        }
        out
    }
}
