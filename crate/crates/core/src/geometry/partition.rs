use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{EdgeMarker, FineMesh};
use crate::{Error, Point, Result};

/// Classification of a coarse edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoarseEdgeKind {
    /// Shared by two blocks.
    Interior,
    /// On the outer boundary, with its condition.
    Boundary(EdgeMarker),
}

/// One fine edge of a coarse edge chain.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSegment {
    pub edge: usize,
    /// Triangle on the `K⁺` side.
    pub plus_triangle: usize,
    /// Triangle on the `K⁻` side; `None` on the boundary.
    pub minus_triangle: Option<usize>,
    /// Unit normal pointing from `K⁺` to `K⁻` (outward on the boundary).
    pub normal: Point,
    pub length: f64,
}

/// A coarse edge: a chain of fine edges between two blocks or on `∂Ω`.
#[derive(Clone, Debug)]
pub struct CoarseEdge {
    pub kind: CoarseEdgeKind,
    pub plus: usize,
    pub minus: Option<usize>,
    pub segments: Vec<EdgeSegment>,
    pub length: f64,
}

impl CoarseEdge {
    pub fn is_interior(&self) -> bool {
        self.kind == CoarseEdgeKind::Interior
    }

    pub fn marker(&self) -> EdgeMarker {
        match self.kind {
            CoarseEdgeKind::Interior => EdgeMarker::Interior,
            CoarseEdgeKind::Boundary(m) => m,
        }
    }

    /// Orientation sign of the stored normal as seen from `block`.
    pub fn sign_for(&self, block: usize) -> f64 {
        if block == self.plus {
            1.0
        } else {
            -1.0
        }
    }
}

/// Coarse blocks, coarse edges and oversampled neighborhoods.
#[derive(Clone, Debug)]
pub struct CoarsePartition {
    pub coarse_h: f64,
    /// Fine triangles of each block, ascending.
    pub blocks: Vec<Vec<usize>>,
    pub block_area: Vec<f64>,
    pub edges: Vec<CoarseEdge>,
    /// Coarse edges touching each block.
    pub block_edges: Vec<Vec<usize>>,
    /// Oversampled triangle set of each block, ascending.
    pub oversampled: Vec<Vec<usize>>,
    pub layers: usize,
}

impl CoarsePartition {
    /// Builds coarse blocks from the mesh block tags.
    ///
    /// Every block must be nonempty and connected through shared fine edges.
    /// Outer boundary edges are grouped per block, marker and side of the
    /// unit square; perforation edges do not form coarse edges.
    pub fn build(mesh: &FineMesh, coarse_h: f64) -> Result<Self> {
        if !(coarse_h > 0.0) {
            return Err(Error::InvalidInput(format!("coarse size {coarse_h} must be positive")));
        }
        let n_blocks = mesh.n_blocks();
        let mut blocks = vec![Vec::new(); n_blocks];
        for (t, &b) in mesh.block_tags.iter().enumerate() {
            blocks[b].push(t);
        }
        for (b, tris) in blocks.iter().enumerate() {
            if tris.is_empty() {
                return Err(Error::InvariantViolation(format!("block {b} has no triangles")));
            }
            check_connected(mesh, b, tris)?;
        }

        #[derive(Hash, PartialEq, Eq)]
        enum Key {
            Interior(usize, usize),
            Boundary(usize, EdgeMarker, u8),
        }
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut edges: Vec<CoarseEdge> = Vec::new();
        for (e, fe) in mesh.edges.iter().enumerate() {
            let t0 = fe.triangles[0].expect("every edge has a triangle");
            let (key, plus, minus, plus_tri, minus_tri, kind) = match fe.triangles[1] {
                Some(t1) => {
                    let (b0, b1) = (mesh.block_tags[t0], mesh.block_tags[t1]);
                    if b0 == b1 {
                        continue;
                    }
                    let (pt, mt) = if b0 < b1 { (t0, t1) } else { (t1, t0) };
                    let (pb, mb) = (b0.min(b1), b0.max(b1));
                    (Key::Interior(pb, mb), pb, Some(mb), pt, Some(mt), CoarseEdgeKind::Interior)
                }
                None => {
                    if !fe.marker.is_outer() {
                        continue;
                    }
                    let b = mesh.block_tags[t0];
                    let n = mesh.outward_normal(e, t0);
                    let side = if n[0].abs() >= n[1].abs() {
                        if n[0] > 0.0 { 0 } else { 1 }
                    } else if n[1] > 0.0 {
                        2
                    } else {
                        3
                    };
                    (Key::Boundary(b, fe.marker, side), b, None, t0, None, CoarseEdgeKind::Boundary(fe.marker))
                }
            };
            let segment = EdgeSegment {
                edge: e,
                plus_triangle: plus_tri,
                minus_triangle: minus_tri,
                normal: mesh.outward_normal(e, plus_tri),
                length: mesh.edge_length(e),
            };
            let i = *index.entry(key).or_insert_with(|| {
                edges.push(CoarseEdge { kind, plus, minus, segments: Vec::new(), length: 0.0 });
                edges.len() - 1
            });
            edges[i].segments.push(segment);
        }

        for ce in edges.iter_mut() {
            let first = &mesh.edges[ce.segments[0].edge];
            let (p, q) = (mesh.nodes[first.nodes[0]], mesh.nodes[first.nodes[1]]);
            let dir = [q[0] - p[0], q[1] - p[1]];
            let pos = |s: &EdgeSegment| {
                let [a, b] = mesh.edges[s.edge].nodes;
                let (u, v) = (mesh.nodes[a], mesh.nodes[b]);
                0.5 * ((u[0] + v[0]) * dir[0] + (u[1] + v[1]) * dir[1])
            };
            ce.segments.sort_by(|s, t| pos(s).total_cmp(&pos(t)));
            ce.length = ce.segments.iter().map(|s| s.length).sum();
        }

        let mut block_edges = vec![Vec::new(); n_blocks];
        for (i, ce) in edges.iter().enumerate() {
            block_edges[ce.plus].push(i);
            if let Some(m) = ce.minus {
                block_edges[m].push(i);
            }
        }
        let block_area = blocks.iter().map(|tris| tris.iter().map(|&t| mesh.area(t)).sum()).collect();

        Ok(Self {
            coarse_h,
            oversampled: blocks.clone(),
            blocks,
            block_area,
            edges,
            block_edges,
            layers: 0,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_interior()).count()
    }

    /// Block that owns every fine triangle.
    pub fn block_of_triangles(&self, n_triangles: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; n_triangles];
        for (b, tris) in self.blocks.iter().enumerate() {
            for &t in tris {
                owner[t] = b;
            }
        }
        owner
    }
}

fn check_connected(mesh: &FineMesh, block: usize, tris: &[usize]) -> Result<()> {
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut queue = VecDeque::from([tris[0]]);
    seen.insert(tris[0]);
    while let Some(t) = queue.pop_front() {
        for e in mesh.triangle_edges(t) {
            for nb in mesh.edges[e].triangles.iter().flatten() {
                if mesh.block_tags[*nb] == block && seen.insert(*nb) {
                    queue.push_back(*nb);
                }
            }
        }
    }
    if seen.len() != tris.len() {
        return Err(Error::InvariantViolation(format!(
            "block {block} is not connected ({} of {} triangles reachable)",
            seen.len(),
            tris.len()
        )));
    }
    Ok(())
}

/// Extends every block by `layers` rings of vertex-adjacent fine triangles.
pub fn build_oversampled(partition: &CoarsePartition, mesh: &FineMesh, layers: usize) -> CoarsePartition {
    let mut out = partition.clone();
    out.layers = layers;
    out.oversampled = partition.blocks.iter().map(|tris| grow_layers(mesh, tris, layers)).collect();
    out
}

/// `tris` plus `layers` rings of vertex-adjacent triangles, ascending.
pub fn grow_layers(mesh: &FineMesh, tris: &[usize], layers: usize) -> Vec<usize> {
    let mut set: BTreeSet<usize> = tris.iter().copied().collect();
    for _ in 0..layers {
        let nodes: BTreeSet<usize> = set.iter().flat_map(|&t| mesh.triangles[t]).collect();
        for v in nodes {
            set.extend(mesh.node_triangles(v).iter().copied());
        }
    }
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_perforated_mesh, BlockShape, Circle, PerforationSet};

    #[test]
    fn zero_layers_is_identity() {
        let (mesh, part) =
            generate_perforated_mesh(&PerforationSet::empty(), 0.25, 4, BlockShape::Rectangular).unwrap();
        let os = build_oversampled(&part, &mesh, 0);
        assert_eq!(os.oversampled, part.blocks);
    }

    #[test]
    fn one_layer_matches_brute_force() {
        let (mesh, part) =
            generate_perforated_mesh(&PerforationSet::empty(), 0.25, 4, BlockShape::Rectangular).unwrap();
        let os = build_oversampled(&part, &mesh, 1);
        let b = 5; // interior block of a 4 by 4 grid
        let nodes: Vec<usize> = part.blocks[b].iter().flat_map(|&t| mesh.triangles[t]).collect();
        let brute: Vec<usize> = (0..mesh.triangles.len())
            .filter(|&t| mesh.triangles[t].iter().any(|v| nodes.contains(v)))
            .collect();
        assert_eq!(os.oversampled[b], brute);
        // 32 own triangles, 32 along the sides, 6 at the corners (the `/`
        // diagonal touches only one triangle at two of them)
        assert_eq!(brute.len(), 70);
        for t in &part.blocks[b] {
            assert!(os.oversampled[b].contains(t));
        }
    }

    #[test]
    fn areas_partition_domain() {
        let perf = PerforationSet::new(vec![Circle::new([0.43, 0.32], 0.04)]).unwrap();
        let (mesh, part) = generate_perforated_mesh(&perf, 0.25, 8, BlockShape::Triangular).unwrap();
        let sum: f64 = part.block_area.iter().sum();
        assert!((sum - mesh.total_area()).abs() <= 1e-12 * sum);
        let mut all: Vec<usize> = part.blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..mesh.triangles.len()).collect::<Vec<_>>());
    }

    #[test]
    fn coarse_edge_counts_and_normals() {
        let (mesh, part) =
            generate_perforated_mesh(&PerforationSet::empty(), 0.5, 4, BlockShape::Rectangular).unwrap();
        assert_eq!(part.n_interior_edges(), 4);
        assert_eq!(part.edges.len(), 12);
        for ce in &part.edges {
            assert!((ce.length - 0.5).abs() < 1e-14);
            for s in &ce.segments {
                if let Some(mt) = s.minus_triangle {
                    let n = mesh.outward_normal(s.edge, mt);
                    assert!((n[0] + s.normal[0]).abs() < 1e-15 && (n[1] + s.normal[1]).abs() < 1e-15);
                    assert_eq!(mesh.block_tags[s.plus_triangle], ce.plus);
                    assert_eq!(Some(mesh.block_tags[mt]), ce.minus);
                }
            }
        }
        let tri = generate_perforated_mesh(&PerforationSet::empty(), 0.5, 4, BlockShape::Triangular).unwrap().1;
        // 4 diagonals, 4 internal grid edges, 8 boundary edges
        assert_eq!(tri.n_interior_edges(), 8);
        assert_eq!(tri.edges.len(), 16);
    }

    #[test]
    fn disconnected_block_rejected() {
        use std::collections::HashMap;
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [3.0, 0.0], [2.0, 1.0]];
        let mesh = FineMesh::from_parts(
            nodes,
            vec![[0, 1, 2], [3, 4, 5]],
            vec![0, 0],
            &HashMap::new(),
            None,
            PerforationSet::empty(),
        )
        .unwrap();
        assert!(matches!(CoarsePartition::build(&mesh, 1.0), Err(Error::InvariantViolation(_))));
    }
}
