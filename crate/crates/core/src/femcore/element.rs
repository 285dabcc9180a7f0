use crate::{Error, Point, Result};

/// Degree-2 rule on the reference triangle: barycentric points and weights
/// summing to one (scale by the area).
pub const TRI_DEG2: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const D4_A: f64 = 0.445_948_490_915_965;
const D4_B: f64 = 0.091_576_213_509_771;
const D4_WA: f64 = 0.223_381_589_678_011;
const D4_WB: f64 = 0.109_951_743_655_322;

/// Six-point degree-4 rule (Dunavant), weights summing to one.
pub const TRI_DEG4: [([f64; 3], f64); 6] = [
    ([1.0 - 2.0 * D4_A, D4_A, D4_A], D4_WA),
    ([D4_A, 1.0 - 2.0 * D4_A, D4_A], D4_WA),
    ([D4_A, D4_A, 1.0 - 2.0 * D4_A], D4_WA),
    ([1.0 - 2.0 * D4_B, D4_B, D4_B], D4_WB),
    ([D4_B, 1.0 - 2.0 * D4_B, D4_B], D4_WB),
    ([D4_B, D4_B, 1.0 - 2.0 * D4_B], D4_WB),
];

/// Two-point Gauss rule on `[0, 1]`: (parameter, weight).
pub const GAUSS2: [(f64, f64); 2] = [
    (0.5 - 0.288_675_134_594_812_9, 0.5),
    (0.5 + 0.288_675_134_594_812_9, 0.5),
];

/// Linear Lagrange triangle.
#[derive(Clone, Copy, Debug)]
pub struct P1Triangle {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Constant gradients of the three hat functions.
    pub grads: [[f64; 2]; 3],
}

impl P1Triangle {
    pub fn new(vertices: [Point; 3]) -> Result<Self> {
        let [p, q, r] = vertices;
        let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        let area = 0.5 * det;
        if !(area > 0.0) {
            return Err(Error::DegenerateElement { area });
        }
        let grads = [
            [(q[1] - r[1]) / det, (r[0] - q[0]) / det],
            [(r[1] - p[1]) / det, (p[0] - r[0]) / det],
            [(p[1] - q[1]) / det, (q[0] - p[0]) / det],
        ];
        Ok(Self { vertices, area, grads })
    }

    pub fn map(&self, bary: [f64; 3]) -> Point {
        let [p, q, r] = self.vertices;
        [
            bary[0] * p[0] + bary[1] * q[0] + bary[2] * r[0],
            bary[0] * p[1] + bary[1] * q[1] + bary[2] * r[1],
        ]
    }

    pub fn longest_edge(&self) -> f64 {
        let [p, q, r] = self.vertices;
        let d = |a: Point, b: Point| (a[0] - b[0]).hypot(a[1] - b[1]);
        d(p, q).max(d(q, r)).max(d(r, p))
    }

    /// `∫ ∇φ_i · ∇φ_j`.
    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = self.area * (self.grads[i][0] * self.grads[j][0] + self.grads[i][1] * self.grads[j][1]);
            }
        }
        k
    }

    /// `∫ φ_i φ_j`.
    pub fn mass(&self) -> [[f64; 3]; 3] {
        let mut m = [[self.area / 12.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = self.area / 6.0;
        }
        m
    }
}

/// Vector Laplacian `∫ ∇u : ∇v` with DOFs ordered `(node, component)`.
pub fn element_laplacian(vertices: [Point; 3]) -> Result<[[f64; 6]; 6]> {
    let k = P1Triangle::new(vertices)?.stiffness();
    let mut out = [[0.0; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..2 {
                out[2 * a + c][2 * b + c] = k[a][b];
            }
        }
    }
    Ok(out)
}

/// Row `r` with `r · v = −∫_T div v` for P1 `v`, DOFs ordered `(node, component)`.
pub fn element_divergence(vertices: [Point; 3]) -> Result<[f64; 6]> {
    let t = P1Triangle::new(vertices)?;
    let mut row = [0.0; 6];
    for a in 0..3 {
        for c in 0..2 {
            row[2 * a + c] = -t.area * t.grads[a][c];
        }
    }
    Ok(row)
}
