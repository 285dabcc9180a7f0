//! Convergence of the fine reference solve on an unperforated domain for the
//! divergence-free field u = curl(sin²(πx) sin²(πy)) with p = 0.

use std::f64::consts::PI;

use msstokes_core::geometry::generate_perforated_mesh;
use msstokes_core::mssolver::solve_reference;
use msstokes_core::{BlockShape, DgContext, OuterBoundary, PerforationSet, ProblemData, VectorField};

fn exact(p: [f64; 2]) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    [PI * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(), -PI * (2.0 * PI * x).sin() * (PI * y).sin().powi(2)]
}

fn exact_grad(p: [f64; 2]) -> [[f64; 2]; 2] {
    let (x, y) = (p[0], p[1]);
    let (s, c) = ((PI * x).sin(), (PI * x).cos());
    let (sy, cy) = ((PI * y).sin(), (PI * y).cos());
    [
        [2.0 * PI * PI * s * c * (2.0 * PI * y).sin(), 2.0 * PI * PI * s * s * (2.0 * PI * y).cos()],
        [-2.0 * PI * PI * (2.0 * PI * x).cos() * sy * sy, -2.0 * PI * PI * (2.0 * PI * x).sin() * sy * cy],
    ]
}

/// `-Δu`.
fn forcing(p: [f64; 2]) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    let k = 2.0 * PI.powi(3);
    [
        -k * (2.0 * PI * y).sin() * (2.0 * (2.0 * PI * x).cos() - 1.0),
        k * (2.0 * PI * x).sin() * (2.0 * (2.0 * PI * y).cos() - 1.0),
    ]
}

#[test]
fn forcing_matches_finite_differences() {
    let d = 1e-4;
    for p in [[0.3, 0.7], [0.55, 0.12], [0.9, 0.4]] {
        let lap: Vec<f64> = (0..2)
            .map(|c| {
                let at = |dx: f64, dy: f64| exact([p[0] + dx, p[1] + dy])[c];
                (at(d, 0.0) + at(-d, 0.0) + at(0.0, d) + at(0.0, -d) - 4.0 * at(0.0, 0.0)) / (d * d)
            })
            .collect();
        let f = forcing(p);
        for c in 0..2 {
            assert!((f[c] + lap[c]).abs() < 1e-4 * f[c].abs().max(1.0), "{c}: {} vs {}", f[c], -lap[c]);
        }
        let g = exact_grad(p);
        for c in 0..2 {
            let dx = (exact([p[0] + d, p[1]])[c] - exact([p[0] - d, p[1]])[c]) / (2.0 * d);
            let dy = (exact([p[0], p[1] + d])[c] - exact([p[0], p[1] - d])[c]) / (2.0 * d);
            assert!((g[c][0] - dx).abs() < 1e-6 && (g[c][1] - dy).abs() < 1e-6);
        }
    }
}

/// Broken H¹ seminorm error plus the coarse-edge jump term of the DG norm.
fn dg_error(refinement: usize) -> f64 {
    let (mesh, part) = generate_perforated_mesh(&PerforationSet::empty(), 0.25, refinement, BlockShape::Rectangular).unwrap();
    let problem = ProblemData {
        f: VectorField::from_fn(forcing),
        g_d: VectorField::zero(),
        g_n: VectorField::zero(),
        outer: OuterBoundary::Dirichlet,
    };
    let ctx = DgContext::new(&mesh, &part, 4.0).unwrap();
    let ops = ctx.assemble().unwrap();
    let sol = solve_reference(&ctx, &ops, &problem).unwrap();

    // 7-point degree-5 rule, barycentric.
    let (a1, b1) = (0.059_715_871_789_770, 0.470_142_064_105_115);
    let (a2, b2) = (0.797_426_985_353_087, 0.101_286_507_323_456);
    let (w0, w1, w2) = (0.225, 0.132_394_152_788_506, 0.125_939_180_544_827);
    let mut rule = vec![([1.0 / 3.0; 3], w0)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        rule.extend([([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]);
    }

    let mut volume = 0.0;
    for t in 0..mesh.triangles.len() {
        let [p0, p1, p2] = mesh.vertices(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = det / 2.0;
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        let v = ctx.triangle_values(&sol.u, t);
        let mut gh = [[0.0; 2]; 2];
        for a in 0..3 {
            for c in 0..2 {
                for d in 0..2 {
                    gh[c][d] += v[a][c] * grads[a][d];
                }
            }
        }
        for (l, w) in &rule {
            let x = [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ];
            let g = exact_grad(x);
            let diff: f64 = (0..2).flat_map(|c| (0..2).map(move |d| (c, d))).map(|(c, d)| (g[c][d] - gh[c][d]).powi(2)).sum();
            volume += w * area * diff;
        }
    }

    let mut jumps = 0.0;
    for ce in &part.edges {
        for seg in &ce.segments {
            let nodes = mesh.edges[seg.edge].nodes;
            let side = |t: usize| {
                let v = ctx.triangle_values(&sol.u, t);
                nodes.map(|n| v[mesh.triangles[t].iter().position(|&m| m == n).unwrap()])
            };
            let plus = side(seg.plus_triangle);
            let minus = seg.minus_triangle.map(side).unwrap_or([[0.0; 2]; 2]);
            let j: Vec<[f64; 2]> = (0..2).map(|k| [plus[k][0] - minus[k][0], plus[k][1] - minus[k][1]]).collect();
            for c in 0..2 {
                jumps += seg.length / 3.0 * (j[0][c].powi(2) + j[0][c] * j[1][c] + j[1][c].powi(2)) / mesh.h;
            }
        }
    }
    (volume + jumps).sqrt()
}

#[test]
fn dg_error_halves_with_h() {
    let errors: Vec<f64> = [4, 8, 16].into_iter().map(dg_error).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.3).contains(&ratio), "errors {errors:?}, ratio {ratio}");
    }
}
