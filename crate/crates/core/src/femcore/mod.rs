//! Fine-grid P1 kernels, local Stokes solves and the linear-algebra layer.

pub mod element;
pub mod linalg;
pub mod local_stokes;

pub use element::{element_divergence, element_laplacian, P1Triangle, GAUSS2, TRI_DEG2, TRI_DEG4};
pub use linalg::{
    dense_generalized_eigensolve, orthonormal_columns, principal_angles, sparse_saddle_solve, CsrMatrix,
    GeneralizedEigen, SparseDirectSolver,
};
pub use local_stokes::{
    solve_local_stokes, LocalDomain, LocalForms, LocalStokesProblem, LocalStokesSolution, LocalStokesSolver,
    PRESSURE_STABILIZATION,
};
