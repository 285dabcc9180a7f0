//! Error norms, conservation audits, stability scans and parameter studies.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dgform::{BlockSpace, DgContext, DgOperators};
use crate::femcore::{CsrMatrix, P1Triangle, SparseDirectSolver, GAUSS2};
use crate::geometry::EdgeMarker;
use crate::mssolver::{solve_multiscale, HybridSolution};
use crate::offline::{assemble_global_offline, reduce_all, SpectralVariant};
use crate::problem::ProblemData;
use crate::snapshots::{build_snapshots, SnapshotMode, SnapshotSettings};
use crate::{Error, Result};

/// Relative errors in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub e_u_l2: f64,
    pub e_u_h1: f64,
    pub e_u_dg: f64,
    pub e_p_l2: f64,
}

/// One row of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub m_off: usize,
    pub dof: usize,
    pub e_u_l2: f64,
    pub e_u_dg: f64,
    pub e_u_h1: f64,
    pub e_p_l2: f64,
    /// `max_K |∫_{∂K} u·n|`.
    pub conservation_max: f64,
    /// Largest balance residual, with Dirichlet-edge fluxes replaced by the
    /// prescribed inflow.
    pub balance_max: f64,
    /// Blocks whose edge-mean matrix is rank deficient.
    pub rank_deficient_blocks: usize,
    pub gamma: f64,
    pub layers: usize,
    pub mode: SnapshotMode,
    pub seed: u64,
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        100.0 * (num / den).sqrt()
    }
}

/// Squared L² and broken H¹ seminorm of a fine DG field.
fn fine_norms(ctx: &DgContext, u: &[f64]) -> (f64, f64) {
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..ctx.mesh.triangles.len() {
        let el = P1Triangle::new(ctx.mesh.vertices(t)).expect("positive area");
        let (m, k) = (el.mass(), el.stiffness());
        let v = ctx.triangle_values(u, t);
        for a in 0..3 {
            for b in 0..3 {
                let d = v[a][0] * v[b][0] + v[a][1] * v[b][1];
                l2 += m[a][b] * d;
                h1 += k[a][b] * d;
            }
        }
    }
    (l2, h1)
}

/// Relative errors of `approx` against `reference`.
///
/// The H¹ norm is the broken norm including its L² part; the pressure error
/// compares the per-block pressures in L².
pub fn compute_errors(
    ctx: &DgContext,
    ops: &DgOperators,
    approx: &HybridSolution,
    reference: &HybridSolution,
) -> Result<ErrorNorms> {
    if approx.u.len() != reference.u.len() || approx.p.len() != reference.p.len() || approx.u.len() != ctx.layout.n_dofs
    {
        return Err(Error::MeshMismatch);
    }
    let d: Vec<f64> = reference.u.iter().zip(&approx.u).map(|(a, b)| a - b).collect();
    let (dl2, dh1) = fine_norms(ctx, &d);
    let (rl2, rh1) = fine_norms(ctx, &reference.u);
    let area = &ctx.partition.block_area;
    let dp: f64 = reference.p.iter().zip(&approx.p).zip(area).map(|((a, b), k)| k * (a - b).powi(2)).sum();
    let rp: f64 = reference.p.iter().zip(area).map(|(a, k)| k * a * a).sum();
    Ok(ErrorNorms {
        e_u_l2: relative(dl2, rl2),
        e_u_h1: relative(dl2 + dh1, rl2 + rh1),
        e_u_dg: relative(ops.a.bilinear(&d, &d).max(0.0), ops.a.bilinear(&reference.u, &reference.u)),
        e_p_l2: relative(dp, rp),
    })
}

/// Per-block boundary fluxes of a fine DG velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationAudit {
    /// `∫_{∂K} u·n` with the outward normal of each block.
    pub flux: Vec<f64>,
    /// The same balance with `∫_E g_D·n` in place of each Dirichlet-edge flux.
    pub balance: Vec<f64>,
}

impl ConservationAudit {
    pub fn max_flux(&self) -> f64 {
        self.flux.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_balance(&self) -> f64 {
        self.balance.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn audit_conservation(ctx: &DgContext, u: &[f64], problem: &ProblemData) -> ConservationAudit {
    let n = ctx.n_blocks();
    let (mut flux, mut balance) = (vec![0.0; n], vec![0.0; n]);
    for b in 0..n {
        for &e in &ctx.partition.block_edges[b] {
            let ce = &ctx.partition.edges[e];
            let sign = ce.sign_for(b);
            let (mut through, mut inflow) = (0.0, 0.0);
            for seg in &ce.segments {
                let t = if ce.plus == b { seg.plus_triangle } else { seg.minus_triangle.expect("interior edge") };
                let [p, q] = ctx.mesh.edges[seg.edge].nodes.map(|v| ctx.mesh.nodes[v]);
                for (s, w) in GAUSS2 {
                    let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                    let tr = ctx.trace(u, b, t, x);
                    through += w * seg.length * (tr[0] * seg.normal[0] + tr[1] * seg.normal[1]);
                    if ce.marker() == EdgeMarker::Dirichlet {
                        let g = problem.g_d.eval(x);
                        inflow += w * seg.length * (g[0] * seg.normal[0] + g[1] * seg.normal[1]);
                    }
                }
            }
            flux[b] += sign * through;
            balance[b] += sign * if ce.marker() == EdgeMarker::Dirichlet { inflow } else { through };
        }
    }
    ConservationAudit { flux, balance }
}

/// `a_DG(v, v) / ‖v‖_A²` for `samples` standard normal coefficient vectors
/// of the space with prolongation `prolongation`.
pub fn coercivity_ratios(ops: &DgOperators, prolongation: &CsrMatrix, samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let c: Vec<f64> = (0..prolongation.ncols).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = prolongation.matvec(&c);
            ops.a.bilinear(&v, &v) / ops.a_norm.bilinear(&v, &v)
        })
        .collect()
}

/// Discrete inf-sup constant of `b_DG` over `space` in the energy and
/// pressure norms.
///
/// Computed as the square root of the smallest eigenvalue of
/// `Q^{-1/2} B A⁻¹ Bᵀ Q^{-1/2}`; when no Neumann edge exists the constant
/// pressure lies in the kernel of `Bᵀ` and is deflated.
pub fn inf_sup_constant(ctx: &DgContext, ops: &DgOperators, space: &BlockSpace) -> Result<f64> {
    let p = space.prolongation(&ctx.layout);
    let a = p.transpose().mul(&ops.a_norm.mul(&p));
    let a = a.add(&a.transpose()).scale(0.5);
    let b = ops.b.mul(&p);
    let bt = b.transpose().to_dense();
    let x = SparseDirectSolver::new(a)?.solve_columns(&bt)?;
    let s = b.mul_dense(&x);
    let q: Vec<f64> = ops.q_mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let n = q.len();
    let mut c = DMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]) * q[i] * q[j]);
    if ctx.gauge().is_some() {
        let z = DVector::from_iterator(n, ops.q_mass.iter().map(|m| m.sqrt())).normalize();
        let shift = c.trace();
        c += &z * z.transpose() * shift;
    }
    let lambda = c.symmetric_eigenvalues().min();
    Ok(lambda.max(0.0).sqrt())
}

/// Offline sizes and snapshot configurations of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub m_off: Vec<usize>,
    pub arms: Vec<SnapshotSettings>,
}

impl StudyPlan {
    /// `M_off ∈ {4, 8, 16, 32}`, without and with 4-layer oversampling.
    pub fn standard(seed: u64) -> Self {
        let base = SnapshotSettings { seed, ..SnapshotSettings::default() };
        Self {
            m_off: vec![4, 8, 16, 32],
            arms: vec![
                SnapshotSettings { mode: SnapshotMode::Standard, layers: 0, ..base },
                SnapshotSettings { mode: SnapshotMode::OversampledRestricted, layers: 4, ..base },
            ],
        }
    }
}

/// Rows are ordered by arm, then by `M_off`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub rows: Vec<ErrorReport>,
}

pub const CSV_HEADER: &str = "m_off,dof,e_u_l2,e_u_dg,e_u_h1,e_p_l2,conservation_max";

impl Study {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.1},{:.1},{:.1},{:.1},{:.3e}\n",
                r.m_off, r.dof, r.e_u_l2, r.e_u_dg, r.e_u_h1, r.e_p_l2, r.conservation_max
            ));
        }
        out
    }
}

/// Multiscale solutions of one snapshot configuration for each offline size,
/// reduced once at the largest size and truncated.
pub fn run_arm(
    ctx: &DgContext,
    ops: &DgOperators,
    problem: &ProblemData,
    reference: &HybridSolution,
    m_off: &[usize],
    settings: &SnapshotSettings,
) -> Result<Vec<(ErrorReport, HybridSolution)>> {
    let snapshots = build_snapshots(ctx.mesh, ctx.partition, settings)?;
    let l_max = m_off.iter().copied().max().unwrap_or(0);
    let variant = SpectralVariant::for_mode(settings.mode);
    let full = reduce_all(
        ctx.mesh,
        ctx.partition,
        &ctx.layout,
        &snapshots,
        &vec![l_max; snapshots.len()],
        variant,
        settings.pod_tol,
    )?;
    let mut out = Vec::with_capacity(m_off.len());
    for &l in m_off {
        let bases: Vec<_> = full.iter().map(|b| b.prefix(l)).collect();
        let (space, checks) = assemble_global_offline(ctx, &bases)?;
        let sol = solve_multiscale(ctx, ops, &space, problem)?;
        let norms = compute_errors(ctx, ops, &sol, reference)?;
        let audit = audit_conservation(ctx, &sol.u, problem);
        log::info!(
            "{} M_off={l}: dof {} residual {:.1e} e_dg {:.2}%",
            settings.mode.name(),
            sol.dof(),
            sol.residual,
            norms.e_u_dg
        );
        out.push((
            ErrorReport {
                m_off: l,
                dof: sol.dof(),
                e_u_l2: norms.e_u_l2,
                e_u_dg: norms.e_u_dg,
                e_u_h1: norms.e_u_h1,
                e_p_l2: norms.e_p_l2,
                conservation_max: audit.max_flux(),
                balance_max: audit.max_balance(),
                rank_deficient_blocks: checks.iter().filter(|c| !c.full_rank()).count(),
                gamma: ctx.gamma,
                layers: if settings.mode == SnapshotMode::Standard { 0 } else { settings.layers },
                mode: settings.mode,
                seed: settings.seed,
            },
            sol,
        ));
    }
    Ok(out)
}

/// Runs every arm of `plan` against a shared reference solution.
pub fn run_study(
    ctx: &DgContext,
    ops: &DgOperators,
    problem: &ProblemData,
    reference: &HybridSolution,
    plan: &StudyPlan,
) -> Result<Study> {
    let mut rows = Vec::new();
    for arm in &plan.arms {
        rows.extend(run_arm(ctx, ops, problem, reference, &plan.m_off, arm)?.into_iter().map(|(r, _)| r));
    }
    Ok(Study { rows })
}
