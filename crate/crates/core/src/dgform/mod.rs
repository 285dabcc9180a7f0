//! Hybridized DG forms over block-supported velocity spaces.
//!
//! Velocities are P1 within each coarse block and discontinuous across
//! coarse edges. Element pressures are constant per block, and edge
//! multipliers are constant per interior or Dirichlet coarse edge.

mod assemble;
mod space;
mod system;

pub use assemble::{DgContext, DgOperators};
pub use space::{BlockBasis, BlockSpace, DgLayout};
pub use system::{HybridSystem, SystemSolution};
