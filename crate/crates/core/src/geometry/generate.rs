use std::collections::HashMap;

use super::{edge_key, signed_area, BlockShape, CoarsePartition, EdgeMarker, FineMesh, PerforationSet};
use crate::{Error, Point, Result};

const MAX_SNAP_PASSES: usize = 8;

/// Generates a fitted triangulation of the unit square minus `perforations`.
///
/// The background grid has square cells of size `h = coarse_h / refinement`,
/// each split along its `/` diagonal. Triangles whose centroid falls inside a
/// circle are removed and the nodes of the resulting hole boundaries (plus any
/// node left inside a circle) are projected radially onto the circle. The
/// projection is repeated until no kept centroid lies inside a circle.
pub fn generate_perforated_mesh(
    perforations: &PerforationSet,
    coarse_h: f64,
    refinement: usize,
    shape: BlockShape,
) -> Result<(FineMesh, CoarsePartition)> {
    let n_coarse = (1.0 / coarse_h).round();
    if !(coarse_h > 0.0) || n_coarse < 1.0 || (n_coarse * coarse_h - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("coarse size {coarse_h} does not divide 1")));
    }
    if refinement < 2 {
        return Err(Error::InvalidInput(format!("refinement must be at least 2, got {refinement}")));
    }
    let n_coarse = n_coarse as usize;
    let n = n_coarse * refinement;
    let h = 1.0 / n as f64;

    let circles = perforations.circles();
    for (i, c) in circles.iter().enumerate() {
        if 2.0 * c.radius <= 2.0 * h {
            return Err(Error::CircleTooSmall { index: i, radius: c.radius });
        }
        let [x, y] = c.center;
        let clearance = (x - c.radius).min(1.0 - x - c.radius).min(y - c.radius).min(1.0 - y - c.radius);
        if clearance < h {
            return Err(Error::InvalidInput(format!(
                "circle {i} is closer than one fine cell to the outer boundary"
            )));
        }
        for (j, d) in circles.iter().enumerate().skip(i + 1) {
            if c.distance_to_center(d.center) - c.radius - d.radius < 2.0 * h {
                return Err(Error::InvalidInput(format!(
                    "circles {i} and {j} are closer than two fine cells"
                )));
            }
        }
    }

    let stride = n + 1;
    let mut nodes: Vec<Point> = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut tags = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            let (ci, cj) = (i / refinement, j / refinement);
            let (a, b) = (i % refinement, j % refinement);
            let square = cj * n_coarse + ci;
            let (lower_tag, upper_tag) = match shape {
                BlockShape::Rectangular => (square, square),
                BlockShape::Triangular => {
                    // coarse squares are split along their own `/` diagonal
                    let lower = 2 * square;
                    let upper = 2 * square + 1;
                    if a > b {
                        (lower, lower)
                    } else if a < b {
                        (upper, upper)
                    } else {
                        (lower, upper)
                    }
                }
            };
            triangles.push([v00, v10, v11]);
            tags.push(lower_tag);
            triangles.push([v00, v11, v01]);
            tags.push(upper_tag);
        }
    }

    // circle that swallowed each triangle
    let mut removed: Vec<Option<usize>> = triangles
        .iter()
        .map(|tri| perforations.containing(centroid(&nodes, tri)))
        .collect();

    for (c, circle) in circles.iter().enumerate() {
        let encloses = removed.iter().any(|r| *r == Some(c));
        let cuts = triangles.iter().any(|tri| {
            (0..3).any(|k| {
                let (p, q) = (nodes[tri[k]], nodes[tri[(k + 1) % 3]]);
                (circle.distance_to_center(p) < circle.radius) != (circle.distance_to_center(q) < circle.radius)
            })
        });
        if !encloses && !cuts {
            return Err(Error::CircleTooSmall { index: c, radius: circle.radius });
        }
    }

    let mut snapped: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut converged = false;
    for _ in 0..MAX_SNAP_PASSES {
        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edge_tris.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        let mut target: Vec<Option<usize>> = vec![None; nodes.len()];
        for ((a, b), ts) in &edge_tris {
            if ts.len() != 2 {
                continue;
            }
            let (t0, t1) = (ts[0], ts[1]);
            let circle = match (removed[t0], removed[t1]) {
                (None, Some(c)) | (Some(c), None) => c,
                _ => continue,
            };
            target[*a] = Some(circle);
            target[*b] = Some(circle);
        }
        let mut used = vec![false; nodes.len()];
        for (t, tri) in triangles.iter().enumerate() {
            if removed[t].is_none() {
                for &v in tri {
                    used[v] = true;
                }
            }
        }
        for (v, p) in nodes.iter().enumerate() {
            if used[v] && target[v].is_none() {
                target[v] = perforations.containing(*p);
            }
        }
        for (v, c) in target.iter().enumerate() {
            if let (true, Some(c)) = (used[v], c) {
                nodes[v] = circles[*c].project(nodes[v]);
                snapped[v] = Some(*c);
            }
        }

        let mut changed = false;
        for (t, tri) in triangles.iter().enumerate() {
            if removed[t].is_some() {
                continue;
            }
            let hit = perforations.containing(centroid(&nodes, tri)).or_else(|| {
                // a triangle folded over by the projection lies between the
                // circle and its inscribed polygon
                let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
                if area >= 1e-10 * h * h {
                    return None;
                }
                tri.iter().find_map(|&v| snapped[v])
            });
            if hit.is_some() {
                removed[t] = hit;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }

    if converged {
        collapse_short_edges(&mut nodes, &mut triangles, &mut removed, &snapped, circles, h);
    }

    let kept: Vec<usize> = (0..triangles.len()).filter(|&t| removed[t].is_none()).collect();
    if !converged {
        let t = kept.first().copied().unwrap_or(0);
        return Err(Error::SnapDegeneracy { triangle: t, area: 0.0 });
    }
    for &t in &kept {
        let tri = triangles[t];
        let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        if area < 1e-10 * h * h {
            return Err(Error::SnapDegeneracy { triangle: t, area });
        }
    }

    let mut new_index = vec![usize::MAX; nodes.len()];
    let mut new_nodes = Vec::new();
    for &t in &kept {
        for &v in &triangles[t] {
            if new_index[v] == usize::MAX {
                new_index[v] = 0;
            }
        }
    }
    for (v, slot) in new_index.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = new_nodes.len();
            new_nodes.push(nodes[v]);
        }
    }
    let new_tris: Vec<[usize; 3]> = kept
        .iter()
        .map(|&t| triangles[t].map(|v| new_index[v]))
        .collect();
    let new_tags: Vec<usize> = kept.iter().map(|&t| tags[t]).collect();

    let mut count: HashMap<(usize, usize), u8> = HashMap::new();
    for tri in &new_tris {
        for k in 0..3 {
            *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
        }
    }
    let on_outer = |p: Point| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
    let markers: HashMap<(usize, usize), EdgeMarker> = count
        .into_iter()
        .filter(|(_, c)| *c == 1)
        .map(|((a, b), _)| {
            let (p, q) = (new_nodes[a], new_nodes[b]);
            let same_side = (p[0] == q[0] && (p[0] == 0.0 || p[0] == 1.0))
                || (p[1] == q[1] && (p[1] == 0.0 || p[1] == 1.0));
            let marker = if on_outer(p) && on_outer(q) && same_side {
                EdgeMarker::Dirichlet
            } else {
                EdgeMarker::Perforation
            };
            ((a, b), marker)
        })
        .collect();

    let mesh = FineMesh::from_parts(new_nodes, new_tris, new_tags, &markers, Some(h), perforations.clone())?;
    let partition = CoarsePartition::build(&mesh, coarse_h)?;
    Ok((mesh, partition))
}

/// Merges pairs of nodes projected onto the same circle that ended up much
/// closer than `h`, removing the slivers between them.
fn collapse_short_edges(
    nodes: &mut [Point],
    triangles: &mut [[usize; 3]],
    removed: &mut [Option<usize>],
    snapped: &[Option<usize>],
    circles: &[super::Circle],
    h: f64,
) {
    let min_len = 0.3 * h;
    let mut node_tris: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (t, tri) in triangles.iter().enumerate() {
        if removed[t].is_none() {
            for &v in tri {
                node_tris[v].push(t);
            }
        }
    }
    let mut touched = vec![false; nodes.len()];
    for t in 0..triangles.len() {
        for k in 0..3 {
            if removed[t].is_some() {
                break;
            }
            let (a, b) = (triangles[t][k], triangles[t][(k + 1) % 3]);
            let c = match (snapped[a], snapped[b]) {
                (Some(ca), Some(cb)) if ca == cb => ca,
                _ => continue,
            };
            if touched[a] || touched[b] {
                continue;
            }
            let (p, q) = (nodes[a], nodes[b]);
            if (p[0] - q[0]).hypot(p[1] - q[1]) >= min_len {
                continue;
            }
            let (keep, drop) = (a.min(b), a.max(b));
            let merged = circles[c].project([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
            let affected: Vec<usize> = node_tris[keep].iter().chain(&node_tris[drop]).copied().collect();
            // refuse collapses that would fold a neighbour
            let ok = affected.iter().all(|&s| {
                let tri = triangles[s];
                if tri.contains(&keep) && tri.contains(&drop) {
                    return true;
                }
                let pts = tri.map(|v| if v == keep || v == drop { merged } else { nodes[v] });
                signed_area(pts[0], pts[1], pts[2]) > 0.05 * h * h
            });
            if !ok {
                continue;
            }
            nodes[keep] = merged;
            for &s in &affected {
                if removed[s].is_some() {
                    continue;
                }
                if triangles[s].contains(&keep) && triangles[s].contains(&drop) {
                    removed[s] = Some(c);
                } else {
                    for v in triangles[s].iter_mut() {
                        if *v == drop {
                            *v = keep;
                        }
                    }
                }
                for &v in &triangles[s] {
                    touched[v] = true;
                }
            }
            touched[keep] = true;
            touched[drop] = true;
        }
    }
}

fn centroid(nodes: &[Point], tri: &[usize; 3]) -> Point {
    let (p, q, r) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
}
