//! Coarse multiscale and fine reference solves of the hybrid system.

use serde::{Deserialize, Serialize};

use crate::dgform::{BlockSpace, DgContext, DgLayout, DgOperators, HybridSystem};
use crate::problem::ProblemData;
use crate::Result;

/// Solution of the hybrid system, with the velocity expressed as a fine DG
/// field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridSolution {
    /// Fine DG velocity coefficients.
    pub u: Vec<f64>,
    /// Pressure per coarse block.
    pub p: Vec<f64>,
    /// Multiplier per interior or Dirichlet coarse edge.
    pub p_hat: Vec<f64>,
    /// Coefficients in the solve space.
    pub coefficients: Vec<f64>,
    /// Relative residual of the full saddle-point system.
    pub residual: f64,
    pub n_velocity: usize,
    pub n_pressure: usize,
}

impl HybridSolution {
    /// Unknowns of the coarse system: velocity, pressures and multipliers.
    pub fn dof(&self) -> usize {
        self.n_velocity + self.n_pressure
    }

    /// `(p, p̂)` stacked in constraint-row order.
    pub fn pressure_vector(&self) -> Vec<f64> {
        self.p.iter().chain(&self.p_hat).copied().collect()
    }
}

/// Solves the hybrid system with velocities in `space`.
pub fn solve_in_space(
    ctx: &DgContext,
    ops: &DgOperators,
    space: &BlockSpace,
    problem: &ProblemData,
) -> Result<HybridSolution> {
    let (rhs_u, rhs_p) = ctx.assemble_rhs(problem);
    let system = HybridSystem::project(ops, &ctx.layout, space, &rhs_u, rhs_p, ctx.gauge());
    let sol = system.solve()?;
    let u = space.downscale(&ctx.layout, &sol.u)?;
    Ok(HybridSolution {
        u,
        p: sol.p,
        p_hat: sol.p_hat,
        residual: sol.residual,
        n_velocity: system.n_u(),
        n_pressure: system.n_p(),
        coefficients: sol.u,
    })
}

/// Multiscale solution in an offline space.
pub fn solve_multiscale(
    ctx: &DgContext,
    ops: &DgOperators,
    space: &BlockSpace,
    problem: &ProblemData,
) -> Result<HybridSolution> {
    solve_in_space(ctx, ops, space, problem)
}

/// Reference solution: every fine DG velocity, coarse pressures.
pub fn solve_reference(ctx: &DgContext, ops: &DgOperators, problem: &ProblemData) -> Result<HybridSolution> {
    solve_in_space(ctx, ops, &BlockSpace::identity(&ctx.layout), problem)
}

/// Fine DG field of coarse coefficients.
pub fn downscale(layout: &DgLayout, space: &BlockSpace, coefficients: &[f64]) -> Result<Vec<f64>> {
    space.downscale(layout, coefficients)
}
