//! Fine triangulations of perforated domains and their coarse partitions.

mod generate;
mod partition;
mod presets;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

pub use generate::generate_perforated_mesh;
pub use partition::{build_oversampled, grow_layers, CoarseEdge, CoarseEdgeKind, CoarsePartition, EdgeSegment};
pub use presets::Preset;

/// A circular perforation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn distance_to_center(&self, p: Point) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }

    /// Strict interior test with a relative tolerance on the radius.
    pub fn contains(&self, p: Point) -> bool {
        self.distance_to_center(p) < self.radius * (1.0 - 1e-12)
    }

    /// Radial projection of `p` onto the circle.
    pub fn project(&self, p: Point) -> Point {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let r = d[0].hypot(d[1]);
        if r == 0.0 {
            return [self.center[0] + self.radius, self.center[1]];
        }
        [
            self.center[0] + self.radius * d[0] / r,
            self.center[1] + self.radius * d[1] / r,
        ]
    }
}

/// Disjoint circles strictly inside the unit square.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerforationSet {
    circles: Vec<Circle>,
}

impl PerforationSet {
    pub fn new(circles: Vec<Circle>) -> Result<Self> {
        for (i, c) in circles.iter().enumerate() {
            if !(c.radius > 0.0) {
                return Err(Error::InvalidInput(format!("circle {i} has radius {}", c.radius)));
            }
            let [x, y] = c.center;
            if x - c.radius <= 0.0 || x + c.radius >= 1.0 || y - c.radius <= 0.0 || y + c.radius >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "circle {i} at ({x}, {y}) with radius {} touches the outer boundary",
                    c.radius
                )));
            }
        }
        for i in 0..circles.len() {
            for j in (i + 1)..circles.len() {
                let d = circles[i].distance_to_center(circles[j].center);
                if d <= circles[i].radius + circles[j].radius {
                    return Err(Error::InvalidInput(format!("circles {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { circles })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn circles(&self) -> &[Circle] {
        &self.circles
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty()
    }

    /// Index of the circle strictly containing `p`, if any.
    pub fn containing(&self, p: Point) -> Option<usize> {
        self.circles.iter().position(|c| c.contains(p))
    }

    /// Index of the circle whose boundary is closest to `p`.
    pub fn nearest(&self, p: Point) -> Option<usize> {
        self.circles
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c.distance_to_center(p) - c.radius).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Boundary classification of a fine edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeMarker {
    Interior,
    Dirichlet,
    Neumann,
    Perforation,
}

impl EdgeMarker {
    pub fn code(self) -> u32 {
        match self {
            EdgeMarker::Interior => 0,
            EdgeMarker::Dirichlet => 1,
            EdgeMarker::Neumann => 2,
            EdgeMarker::Perforation => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(EdgeMarker::Interior),
            1 => Some(EdgeMarker::Dirichlet),
            2 => Some(EdgeMarker::Neumann),
            3 => Some(EdgeMarker::Perforation),
            _ => None,
        }
    }

    /// True for edges on the outer boundary of the unit square.
    pub fn is_outer(self) -> bool {
        matches!(self, EdgeMarker::Dirichlet | EdgeMarker::Neumann)
    }
}

/// Coarse block layout of the structured generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockShape {
    Triangular,
    Rectangular,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FineEdge {
    pub nodes: [usize; 2],
    pub marker: EdgeMarker,
    /// Adjacent triangles; the second is `None` on the boundary.
    pub triangles: [Option<usize>; 2],
}

/// Conforming P1 triangulation of the perforated domain.
///
/// Triangles are counterclockwise. Every triangle carries the id of the
/// coarse block it belongs to.
#[derive(Clone, Debug)]
pub struct FineMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub block_tags: Vec<usize>,
    pub edges: Vec<FineEdge>,
    /// Fine mesh size used by the penalty and the energy norm.
    pub h: f64,
    pub perforations: PerforationSet,
    triangle_edges: Vec<[usize; 3]>,
    node_triangles: Vec<Vec<usize>>,
    perforation_node: Vec<bool>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

impl FineMesh {
    /// Builds topology and validates every mesh invariant.
    ///
    /// Boundary edges missing from `markers` default to
    /// [`EdgeMarker::Dirichlet`]; interior edges are always `Interior`.
    pub fn from_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        block_tags: Vec<usize>,
        markers: &HashMap<(usize, usize), EdgeMarker>,
        h: Option<f64>,
        perforations: PerforationSet,
    ) -> Result<Self> {
        if block_tags.len() != triangles.len() {
            return Err(Error::InvariantViolation(format!(
                "{} block tags for {} triangles",
                block_tags.len(),
                triangles.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::InvariantViolation(format!("triangle {t} references a missing node")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvariantViolation(format!("triangle {t} repeats a node")));
            }
        }

        let mut seen = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(prev) = seen.insert(key, t) {
                return Err(Error::InvariantViolation(format!(
                    "non-conforming: triangles {prev} and {t} are duplicates"
                )));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<FineEdge> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = edge_key(a, b);
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(FineEdge {
                        nodes: [a, b],
                        marker: EdgeMarker::Interior,
                        triangles: [None, None],
                    });
                    edges.len() - 1
                });
                let slot = &mut edges[e].triangles;
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::InvariantViolation(format!(
                        "non-conforming: edge ({a}, {b}) is shared by more than two triangles"
                    )));
                }
                te[k] = e;
            }
            triangle_edges.push(te);
        }

        for (key, marker) in markers {
            let Some(&e) = edge_index.get(key) else {
                return Err(Error::InvariantViolation(format!(
                    "marked edge ({}, {}) is not an edge of the mesh",
                    key.0, key.1
                )));
            };
            let boundary = edges[e].triangles[1].is_none();
            if boundary == (*marker == EdgeMarker::Interior) {
                return Err(Error::InvariantViolation(format!(
                    "edge ({}, {}) marked {:?} but it is {}",
                    key.0,
                    key.1,
                    marker,
                    if boundary { "a boundary edge" } else { "interior" }
                )));
            }
            edges[e].marker = *marker;
        }
        for e in edges.iter_mut() {
            if e.triangles[1].is_none() && e.marker == EdgeMarker::Interior {
                e.marker = EdgeMarker::Dirichlet;
            }
        }

        let mut node_triangles = vec![Vec::new(); nodes.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                node_triangles[v].push(t);
            }
        }
        let mut perforation_node = vec![false; nodes.len()];
        for e in &edges {
            if e.marker == EdgeMarker::Perforation {
                perforation_node[e.nodes[0]] = true;
                perforation_node[e.nodes[1]] = true;
            }
        }

        let h = match h {
            Some(h) => h,
            None => edges
                .iter()
                .map(|e| {
                    let (p, q) = (nodes[e.nodes[0]], nodes[e.nodes[1]]);
                    (p[0] - q[0]).hypot(p[1] - q[1])
                })
                .fold(0.0, f64::max),
        };

        let mesh = Self {
            nodes,
            triangles,
            block_tags,
            edges,
            h,
            perforations,
            triangle_edges,
            node_triangles,
            perforation_node,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        for (v, tris) in self.node_triangles.iter().enumerate() {
            if tris.is_empty() {
                return Err(Error::InvariantViolation(format!("node {v} belongs to no triangle")));
            }
        }
        for t in 0..self.triangles.len() {
            let a = self.area(t);
            if !(a > 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "triangle {t} has non-positive area {a:e}"
                )));
            }
        }
        if !self.perforations.is_empty() {
            for (v, p) in self.nodes.iter().enumerate() {
                if let Some(c) = self.perforations.containing(*p) {
                    return Err(Error::InvariantViolation(format!(
                        "node {v} lies inside perforation {c}"
                    )));
                }
            }
            for e in self.edges.iter().filter(|e| e.marker == EdgeMarker::Perforation) {
                for &v in &e.nodes {
                    let p = self.nodes[v];
                    let on_circle = self.perforations.circles().iter().any(|c| {
                        (c.distance_to_center(p) - c.radius).abs() <= 1e-12 * c.radius
                    });
                    if !on_circle {
                        return Err(Error::InvariantViolation(format!(
                            "perforation edge endpoint {v} is not on a circle"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.vertices(t);
        signed_area(p, q, r)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [p, q, r] = self.vertices(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Edge indices of triangle `t`; edge `k` joins local vertices `k` and `k+1`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn node_triangles(&self, v: usize) -> &[usize] {
        &self.node_triangles[v]
    }

    pub fn is_perforation_node(&self, v: usize) -> bool {
        self.perforation_node[v]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].nodes;
        let (p, q) = (self.nodes[a], self.nodes[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// Unit normal of edge `e` pointing out of triangle `t`.
    pub fn outward_normal(&self, e: usize, t: usize) -> Point {
        let [a, b] = self.edges[e].nodes;
        let (p, q) = (self.nodes[a], self.nodes[b]);
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        let mut n = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
        let c = self.centroid(t);
        let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        if n[0] * (m[0] - c[0]) + n[1] * (m[1] - c[1]) < 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn n_blocks(&self) -> usize {
        self.block_tags.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Overrides the marker of every outer boundary edge.
    pub fn set_outer_marker(&mut self, marker: EdgeMarker) {
        assert!(marker.is_outer());
        for e in self.edges.iter_mut() {
            if e.marker.is_outer() {
                e.marker = marker;
            }
        }
    }

    /// Boundary edges with their markers, keyed by sorted node pair.
    pub fn boundary_markers(&self) -> HashMap<(usize, usize), EdgeMarker> {
        self.edges
            .iter()
            .filter(|e| e.marker != EdgeMarker::Interior)
            .map(|e| (edge_key(e.nodes[0], e.nodes[1]), e.marker))
            .collect()
    }

    /// Stable content hash used to key caches.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for p in &self.nodes {
            hasher.update(p[0].to_le_bytes());
            hasher.update(p[1].to_le_bytes());
        }
        for (tri, tag) in self.triangles.iter().zip(&self.block_tags) {
            for v in tri {
                hasher.update((*v as u64).to_le_bytes());
            }
            hasher.update((*tag as u64).to_le_bytes());
        }
        for e in &self.edges {
            hasher.update(e.marker.code().to_le_bytes());
        }
        hasher.update(self.h.to_le_bytes());
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
