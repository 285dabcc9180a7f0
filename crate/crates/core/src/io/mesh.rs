use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::geometry::{edge_key, signed_area, Circle, EdgeMarker, FineMesh, PerforationSet};
use crate::{Error, Point, Result};

/// Reads a mesh in the native format or Gmsh v2 ASCII, chosen by content.
pub fn import_mesh(path: impl AsRef<Path>) -> Result<FineMesh> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with("$MeshFormat") {
        parse_gmsh(&text)
    } else {
        parse_native(&text)
    }
}

/// Native ASCII format.
///
/// ```text
/// $Header        h <fine size>                   (optional)
/// $Circles       index cx cy r                   (optional)
/// $Nodes         index x y
/// $Triangles     index n1 n2 n3 coarse_block_id
/// $Edges         index n1 n2 marker              (boundary edges only)
/// ```
///
/// Each section closes with `$End<Name>`. Indices run from 0 in order and
/// markers use [`EdgeMarker::code`]. Unlisted boundary edges are Dirichlet.
pub fn write_native(mesh: &FineMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "$Header\nh {}\n$EndHeader", mesh.h);
    if !mesh.perforations.is_empty() {
        s.push_str("$Circles\n");
        for (i, c) in mesh.perforations.circles().iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", c.center[0], c.center[1], c.radius);
        }
        s.push_str("$EndCircles\n");
    }
    s.push_str("$Nodes\n");
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{i} {} {}", p[0], p[1]);
    }
    s.push_str("$EndNodes\n$Triangles\n");
    for (i, (t, b)) in mesh.triangles.iter().zip(&mesh.block_tags).enumerate() {
        let _ = writeln!(s, "{i} {} {} {} {b}", t[0], t[1], t[2]);
    }
    s.push_str("$EndTriangles\n$Edges\n");
    for (i, e) in mesh.edges.iter().filter(|e| e.marker != EdgeMarker::Interior).enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", e.nodes[0], e.nodes[1], e.marker.code());
    }
    s.push_str("$EndEdges\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate().peekable() }
    }

    /// Next nonblank line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                return Some((i + 1, l));
            }
        }
        None
    }

    fn line_hint(&mut self) -> usize {
        self.inner.peek().map_or(0, |(i, _)| i + 1)
    }

    /// Lines up to `$End<name>`.
    fn section(&mut self, name: &str) -> Result<Vec<(usize, &'a str)>> {
        let end = format!("$End{name}");
        let mut out = Vec::new();
        loop {
            match self.next() {
                Some((_, l)) if l == end => return Ok(out),
                Some((n, l)) if l.starts_with('$') => {
                    return Err(parse_err(n, format!("expected {end}, found {l}")));
                }
                Some(item) => out.push(item),
                None => return Err(parse_err(self.line_hint(), format!("missing {end}"))),
            }
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn fields<T: FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(line, format!("expected {count} fields, found {}", parts.len())));
    }
    parts.iter().map(|p| p.parse().map_err(|_| parse_err(line, format!("cannot parse `{p}`")))).collect()
}

fn indexed<T: FromStr>(rows: &[(usize, &str)], width: usize) -> Result<Vec<(usize, Vec<T>)>> {
    let mut out = Vec::with_capacity(rows.len());
    for (k, &(line, text)) in rows.iter().enumerate() {
        let mut parts = text.splitn(2, char::is_whitespace);
        let idx: usize =
            parts.next().unwrap_or("").parse().map_err(|_| parse_err(line, "bad index"))?;
        if idx != k {
            return Err(parse_err(line, format!("index {idx} out of sequence (expected {k})")));
        }
        out.push((line, fields(line, parts.next().unwrap_or(""), width)?));
    }
    Ok(out)
}

pub fn parse_native(text: &str) -> Result<FineMesh> {
    let mut lines = Lines::new(text);
    let mut h = None;
    let mut circles = Vec::new();
    let mut nodes: Option<Vec<Point>> = None;
    let mut triangles = Vec::new();
    let mut tags = Vec::new();
    let mut markers = HashMap::new();
    while let Some((n, head)) = lines.next() {
        match head {
            "$Header" => {
                for (line, l) in lines.section("Header")? {
                    let kv: Vec<&str> = l.split_whitespace().collect();
                    match kv.as_slice() {
                        ["h", v] => h = Some(v.parse().map_err(|_| parse_err(line, "bad h"))?),
                        _ => return Err(parse_err(line, format!("unknown header entry `{l}`"))),
                    }
                }
            }
            "$Circles" => {
                for (_, v) in indexed::<f64>(&lines.section("Circles")?, 3)? {
                    circles.push(Circle::new([v[0], v[1]], v[2]));
                }
            }
            "$Nodes" => {
                nodes = Some(indexed::<f64>(&lines.section("Nodes")?, 2)?.into_iter().map(|(_, v)| [v[0], v[1]]).collect());
            }
            "$Triangles" => {
                for (_, v) in indexed::<usize>(&lines.section("Triangles")?, 4)? {
                    triangles.push([v[0], v[1], v[2]]);
                    tags.push(v[3]);
                }
            }
            "$Edges" => {
                for (line, v) in indexed::<usize>(&lines.section("Edges")?, 3)? {
                    let marker = u32::try_from(v[2])
                        .ok()
                        .and_then(EdgeMarker::from_code)
                        .ok_or_else(|| parse_err(line, format!("unknown marker {}", v[2])))?;
                    markers.insert(edge_key(v[0], v[1]), marker);
                }
            }
            _ => return Err(parse_err(n, format!("unknown section `{head}`"))),
        }
    }
    let nodes = nodes.ok_or_else(|| parse_err(0, "missing $Nodes section"))?;
    if triangles.is_empty() {
        return Err(parse_err(0, "missing $Triangles section"));
    }
    let perforations = PerforationSet::new(circles)?;
    FineMesh::from_parts(nodes, triangles, tags, &markers, h, perforations)
}

/// Gmsh v2 ASCII: line (type 1) and triangle (type 2) elements.
///
/// Line physical tags are marker codes. Triangle physical tags become coarse
/// block ids, renumbered densely in ascending tag order. Triangles are
/// reoriented counterclockwise and nodes not used by any triangle dropped.
pub fn parse_gmsh(text: &str) -> Result<FineMesh> {
    let mut lines = Lines::new(text);
    let mut raw_nodes: HashMap<usize, Point> = HashMap::new();
    let mut raw_tris: Vec<([usize; 3], usize)> = Vec::new();
    let mut raw_lines: Vec<(usize, [usize; 2], usize)> = Vec::new();
    while let Some((n, head)) = lines.next() {
        match head {
            "$MeshFormat" => {
                let body = lines.section("MeshFormat")?;
                let (line, l) = body.first().copied().ok_or_else(|| parse_err(n, "empty $MeshFormat"))?;
                let parts: Vec<&str> = l.split_whitespace().collect();
                if parts.len() != 3 || !parts[0].starts_with('2') || parts[1] != "0" {
                    return Err(parse_err(line, "only Gmsh v2 ASCII is supported"));
                }
            }
            "$Nodes" => {
                let body = lines.section("Nodes")?;
                let count = counted(n, &body)?;
                for &(line, l) in &body[1..] {
                    let parts: Vec<&str> = l.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(parse_err(line, "expected `id x y z`"));
                    }
                    let id: usize = parts[0].parse().map_err(|_| parse_err(line, "bad node id"))?;
                    let x: f64 = parts[1].parse().map_err(|_| parse_err(line, "bad x"))?;
                    let y: f64 = parts[2].parse().map_err(|_| parse_err(line, "bad y"))?;
                    if raw_nodes.insert(id, [x, y]).is_some() {
                        return Err(parse_err(line, format!("duplicate node id {id}")));
                    }
                }
                debug_assert_eq!(count, raw_nodes.len());
            }
            "$Elements" => {
                let body = lines.section("Elements")?;
                counted(n, &body)?;
                for &(line, l) in &body[1..] {
                    let v: Vec<usize> = l
                        .split_whitespace()
                        .map(|p| p.parse().map_err(|_| parse_err(line, format!("cannot parse `{p}`"))))
                        .collect::<Result<_>>()?;
                    if v.len() < 3 || v.len() < 3 + v[2] {
                        return Err(parse_err(line, "truncated element"));
                    }
                    let (ty, ntags) = (v[1], v[2]);
                    let physical = if ntags > 0 { v[3] } else { 0 };
                    let conn = &v[3 + ntags..];
                    let want = match ty {
                        1 => 2,
                        2 => 3,
                        15 => 1,
                        _ => return Err(parse_err(line, format!("unsupported element type {ty}"))),
                    };
                    if conn.len() != want {
                        return Err(parse_err(line, format!("element type {ty} needs {want} nodes")));
                    }
                    match ty {
                        1 => raw_lines.push((line, [conn[0], conn[1]], physical)),
                        2 => raw_tris.push(([conn[0], conn[1], conn[2]], physical)),
                        _ => {}
                    }
                }
            }
            "$PhysicalNames" => {
                lines.section("PhysicalNames")?;
            }
            _ => return Err(parse_err(n, format!("unknown section `{head}`"))),
        }
    }
    if raw_tris.is_empty() {
        return Err(parse_err(0, "no triangle elements"));
    }

    let mut used: Vec<usize> = raw_tris.iter().flat_map(|(t, _)| *t).collect();
    used.sort_unstable();
    used.dedup();
    let mut index = HashMap::with_capacity(used.len());
    let mut nodes = Vec::with_capacity(used.len());
    for id in used {
        let p = raw_nodes
            .get(&id)
            .ok_or_else(|| Error::InvariantViolation(format!("element references missing node {id}")))?;
        index.insert(id, nodes.len());
        nodes.push(*p);
    }
    let blocks: BTreeMap<usize, usize> = {
        let mut tags: Vec<usize> = raw_tris.iter().map(|(_, p)| *p).collect();
        tags.sort_unstable();
        tags.dedup();
        tags.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
    };
    let mut triangles = Vec::with_capacity(raw_tris.len());
    let mut tags = Vec::with_capacity(raw_tris.len());
    for (t, phys) in &raw_tris {
        let mut tri = t.map(|v| index[&v]);
        if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
        tags.push(blocks[phys]);
    }
    let mut markers = HashMap::new();
    for (line, [a, b], phys) in raw_lines {
        let marker = u32::try_from(phys)
            .ok()
            .and_then(EdgeMarker::from_code)
            .filter(|m| *m != EdgeMarker::Interior)
            .ok_or_else(|| parse_err(line, format!("physical tag {phys} is not a boundary marker")))?;
        let (Some(&a), Some(&b)) = (index.get(&a), index.get(&b)) else {
            return Err(parse_err(line, "line element off the triangulation"));
        };
        markers.insert(edge_key(a, b), marker);
    }
    FineMesh::from_parts(nodes, triangles, tags, &markers, None, PerforationSet::empty())
}

fn counted(header_line: usize, body: &[(usize, &str)]) -> Result<usize> {
    let (line, first) = body.first().copied().ok_or_else(|| parse_err(header_line, "missing count"))?;
    let count: usize = first.parse().map_err(|_| parse_err(line, "bad count"))?;
    if body.len() - 1 != count {
        return Err(parse_err(line, format!("count {count} but {} entries", body.len() - 1)));
    }
    Ok(count)
}
