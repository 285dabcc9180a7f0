//! Mesh files, VTK export and the binary offline cache.

mod cache;
mod mesh;
mod vtk;

pub use cache::{Cache, CacheKey, CACHE_MAGIC};
pub use mesh::{import_mesh, parse_gmsh, parse_native, write_native};
pub use vtk::{write_vtk, VtkFields};
