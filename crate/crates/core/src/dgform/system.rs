use super::assemble::DgOperators;
use super::space::{BlockSpace, DgLayout};
use crate::femcore::{CsrMatrix, SparseDirectSolver};
use crate::{Error, Result};

/// The hybrid saddle-point system in a given velocity space.
///
/// ```text
/// [ A  Bᵀ 0 ] [u]   [rhs_u]
/// [ B  0  m ] [p] = [rhs_p]
/// [ 0  mᵀ 0 ] [λ]   [  0  ]
/// ```
///
/// `p` stacks element pressures and edge multipliers; the last row is present
/// only when a gauge `m` is.
#[derive(Clone, Debug)]
pub struct HybridSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    pub gauge: Option<Vec<f64>>,
    pub n_blocks: usize,
}

/// Raw solution vectors of a [`HybridSystem`].
#[derive(Clone, Debug)]
pub struct SystemSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub p_hat: Vec<f64>,
    /// Relative residual of the full system.
    pub residual: f64,
}

impl HybridSystem {
    /// Projects fine operators into `space`: `Pᵀ A P`, `B P`, `Pᵀ rhs_u`.
    pub fn project(
        ops: &DgOperators,
        layout: &DgLayout,
        space: &BlockSpace,
        rhs_u: &[f64],
        rhs_p: Vec<f64>,
        gauge: Option<Vec<f64>>,
    ) -> Self {
        let n_blocks = layout.n_blocks();
        if space.is_identity() {
            return Self { a: ops.a.clone(), b: ops.b.clone(), rhs_u: rhs_u.to_vec(), rhs_p, gauge, n_blocks };
        }
        let p = space.prolongation(layout);
        let pt = p.transpose();
        let a = pt.mul(&ops.a.mul(&p));
        let a = a.add(&a.transpose()).scale(0.5);
        Self { a, b: ops.b.mul(&p), rhs_u: pt.matvec(rhs_u), rhs_p, gauge, n_blocks }
    }

    pub fn n_u(&self) -> usize {
        self.a.nrows
    }

    pub fn n_p(&self) -> usize {
        self.b.nrows
    }

    fn kkt(&self) -> CsrMatrix {
        let (n, m) = (self.n_u(), self.n_p());
        let extra = usize::from(self.gauge.is_some());
        let mut t = self.a.triplets();
        for (r, c, v) in self.b.triplets() {
            t.push((n + r, c, v));
            t.push((c, n + r, v));
        }
        if let Some(g) = &self.gauge {
            for (r, &v) in g.iter().enumerate() {
                if v != 0.0 {
                    t.push((n + r, n + m, v));
                    t.push((n + m, n + r, v));
                }
            }
        }
        CsrMatrix::from_triplets(n + m + extra, n + m + extra, &t)
    }

    pub fn solve(&self) -> Result<SystemSolution> {
        let (n, m) = (self.n_u(), self.n_p());
        let kkt = self.kkt();
        let mut rhs: Vec<f64> = self.rhs_u.iter().chain(&self.rhs_p).copied().collect();
        if self.gauge.is_some() {
            rhs.push(0.0);
        }
        let x = SparseDirectSolver::new(kkt.clone())
            .and_then(|s| s.solve(&rhs))
            .map_err(|e| match e {
                Error::SingularSystem { residual, .. } => Error::SingularSystem { residual, detail: self.diagnose() },
                other => other,
            })?;
        let r: f64 = kkt.matvec(&x).iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bn: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(SystemSolution {
            u: x[..n].to_vec(),
            p: x[n..n + self.n_blocks].to_vec(),
            p_hat: x[n + self.n_blocks..n + m].to_vec(),
            residual: if bn > 0.0 { r / bn } else { r },
        })
    }

    fn diagnose(&self) -> String {
        // constant pressure with unit multipliers lies in the kernel of Bᵀ
        // exactly when no Neumann edge breaks the balance
        let ones = vec![1.0; self.n_p()];
        let bt1 = self.b.matvec_transpose(&ones);
        let scale = self.b.norm_inf().max(f64::MIN_POSITIVE);
        let kernel = bt1.iter().all(|v| v.abs() <= 1e-10 * scale);
        if kernel && self.gauge.is_none() {
            "pressure gauge missing: constant pressures are not determined".into()
        } else {
            format!(
                "constraint matrix is rank deficient in a velocity space of dimension {} ({} pressure unknowns)",
                self.n_u(),
                self.n_p()
            )
        }
    }
}
