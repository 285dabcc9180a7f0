//! Shared fixtures for the benchmarks.

use msstokes_core::{CoarsePartition, FineMesh, Preset, ProblemData};

/// Small-inclusion preset on a 4×4 coarse grid with Dirichlet inflow.
pub fn fixture(refinement: usize) -> (FineMesh, CoarsePartition, ProblemData) {
    let problem = ProblemData::example1();
    let (mut mesh, part) = Preset::SmallInclusions.generate(0.25, refinement, 1).expect("preset mesh");
    let part = problem.outer.apply(&mut mesh, &part).expect("outer markers");
    (mesh, part, problem)
}
