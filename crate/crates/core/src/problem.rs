//! Source terms and boundary data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::geometry::{build_oversampled, CoarsePartition, EdgeMarker, FineMesh};
use crate::{Point, Result};

/// A vector field on the plane.
#[derive(Clone)]
pub enum VectorField {
    Constant([f64; 2]),
    Expressions(Box<[Expr; 2]>),
    Function(Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Constant(c) => write!(f, "Constant({c:?})"),
            VectorField::Expressions(e) => write!(f, "Expressions({}, {})", e[0], e[1]),
            VectorField::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl VectorField {
    pub fn zero() -> Self {
        VectorField::Constant([0.0, 0.0])
    }

    pub fn parse(x: &str, y: &str) -> Result<Self> {
        Ok(VectorField::Expressions(Box::new([Expr::parse(x)?, Expr::parse(y)?])))
    }

    pub fn from_fn(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        VectorField::Function(Arc::new(f))
    }

    pub fn eval(&self, p: Point) -> [f64; 2] {
        match self {
            VectorField::Constant(c) => *c,
            VectorField::Expressions(e) => [e[0].eval(p[0], p[1]), e[1].eval(p[0], p[1])],
            VectorField::Function(f) => f(p),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorField::Constant([a, b]) if *a == 0.0 && *b == 0.0)
    }
}

/// Condition on the outer boundary of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    Dirichlet,
    Neumann,
    /// Per side, in the order `x = 0`, `x = 1`, `y = 0`, `y = 1`.
    Sides([SideCondition; 4]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideCondition {
    Dirichlet,
    Neumann,
}

impl OuterBoundary {
    fn marker_at(self, p: Point, q: Point) -> EdgeMarker {
        let pick = |c: SideCondition| match c {
            SideCondition::Dirichlet => EdgeMarker::Dirichlet,
            SideCondition::Neumann => EdgeMarker::Neumann,
        };
        match self {
            OuterBoundary::Dirichlet => EdgeMarker::Dirichlet,
            OuterBoundary::Neumann => EdgeMarker::Neumann,
            OuterBoundary::Sides(s) => {
                let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                let d = [mid[0], 1.0 - mid[0], mid[1], 1.0 - mid[1]];
                let side = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
                pick(s[side])
            }
        }
    }

    /// Re-marks the outer edges of `mesh` and rebuilds the partition so that
    /// coarse boundary edges follow the new markers.
    pub fn apply(self, mesh: &mut FineMesh, partition: &CoarsePartition) -> Result<CoarsePartition> {
        let markers: Vec<EdgeMarker> = mesh
            .edges
            .iter()
            .map(|e| {
                if e.marker.is_outer() {
                    self.marker_at(mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]])
                } else {
                    e.marker
                }
            })
            .collect();
        for (e, m) in mesh.edges.iter_mut().zip(markers) {
            e.marker = m;
        }
        let rebuilt = CoarsePartition::build(mesh, partition.coarse_h)?;
        Ok(build_oversampled(&rebuilt, mesh, partition.layers))
    }
}

/// Source term, boundary data and boundary condition type.
///
/// Perforation boundaries always carry the no-slip condition `u = 0`.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub f: VectorField,
    pub g_d: VectorField,
    pub g_n: VectorField,
    pub outer: OuterBoundary,
}

impl ProblemData {
    /// Uniform inflow: `f = 0`, `u = (1, 0)` on the outer boundary.
    pub fn example1() -> Self {
        Self {
            f: VectorField::zero(),
            g_d: VectorField::Constant([1.0, 0.0]),
            g_n: VectorField::zero(),
            outer: OuterBoundary::Dirichlet,
        }
    }

    /// Body force `f = (1, 1)` with a traction-free outer boundary.
    pub fn example2() -> Self {
        Self {
            f: VectorField::Constant([1.0, 1.0]),
            g_d: VectorField::zero(),
            g_n: VectorField::zero(),
            outer: OuterBoundary::Neumann,
        }
    }

    pub fn zero(outer: OuterBoundary) -> Self {
        Self { f: VectorField::zero(), g_d: VectorField::zero(), g_n: VectorField::zero(), outer }
    }
}
