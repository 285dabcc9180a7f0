use std::io::Write;

use crate::dgform::DgLayout;
use crate::geometry::FineMesh;
use crate::{Error, Result};

/// Solution fields for [`write_vtk`].
#[derive(Clone, Copy, Debug)]
pub struct VtkFields<'a> {
    pub layout: &'a DgLayout,
    /// Fine DG velocity coefficients.
    pub u: &'a [f64],
    /// Pressure per coarse block.
    pub p: &'a [f64],
}

/// Writes a legacy ASCII VTK unstructured grid.
///
/// Without fields the mesh nodes are written as is, with the coarse block id
/// as cell data. With fields every block gets its own copy of its nodes so
/// the discontinuous velocity is kept; perforation nodes carry zero velocity.
pub fn write_vtk<W: Write>(out: &mut W, mesh: &FineMesh, fields: Option<VtkFields<'_>>) -> Result<()> {
    let n_tris = mesh.triangles.len();
    let (points, cells, velocity) = match fields {
        None => (mesh.nodes.clone(), mesh.triangles.clone(), None),
        Some(f) => {
            if f.u.len() != f.layout.n_dofs {
                return Err(Error::DimensionMismatch { expected: f.layout.n_dofs, actual: f.u.len() });
            }
            if f.p.len() != f.layout.n_blocks() {
                return Err(Error::DimensionMismatch { expected: f.layout.n_blocks(), actual: f.p.len() });
            }
            let mut points = Vec::new();
            let mut velocity = Vec::new();
            let mut cells = vec![[0usize; 3]; n_tris];
            let mut local = std::collections::HashMap::new();
            for b in 0..f.layout.n_blocks() {
                local.clear();
                for (t, tri) in mesh.triangles.iter().enumerate().filter(|(t, _)| mesh.block_tags[*t] == b) {
                    for (k, &v) in tri.iter().enumerate() {
                        cells[t][k] = *local.entry(v).or_insert_with(|| {
                            points.push(mesh.nodes[v]);
                            velocity.push(match f.layout.dof(b, v, 0) {
                                Some(d) => [f.u[d], f.u[d + 1]],
                                None => [0.0, 0.0],
                            });
                            points.len() - 1
                        });
                    }
                }
            }
            (points, cells, Some(velocity))
        }
    };

    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "msstokes")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {n_tris} {}", 4 * n_tris)?;
    for c in &cells {
        writeln!(out, "3 {} {} {}", c[0], c[1], c[2])?;
    }
    writeln!(out, "CELL_TYPES {n_tris}")?;
    for _ in 0..n_tris {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {n_tris}")?;
    writeln!(out, "SCALARS block int 1\nLOOKUP_TABLE default")?;
    for b in &mesh.block_tags {
        writeln!(out, "{b}")?;
    }
    if let (Some(f), Some(vel)) = (fields, velocity) {
        writeln!(out, "SCALARS p double 1\nLOOKUP_TABLE default")?;
        for b in &mesh.block_tags {
            writeln!(out, "{}", f.p[*b])?;
        }
        writeln!(out, "POINT_DATA {}", points.len())?;
        writeln!(out, "VECTORS u double")?;
        for v in vel {
            writeln!(out, "{} {} 0", v[0], v[1])?;
        }
    }
    Ok(())
}
