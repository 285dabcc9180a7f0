//! TOML run configuration.

use std::path::{Path, PathBuf};

use msstokes_core::geometry::generate_perforated_mesh;
use msstokes_core::io::import_mesh;
use msstokes_core::{
    BlockShape, Circle, CoarsePartition, FineMesh, OuterBoundary, PerforationSet, Preset, ProblemData, SnapshotMode,
    SnapshotSettings, VectorField,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::output")]
    pub output: PathBuf,
    /// Seed of the randomized snapshots.
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub preset: Option<Preset>,
    /// `[cx, cy, r]` per circle.
    pub circles: Option<Vec<[f64; 3]>>,
    /// Native or Gmsh v2 file; block ids come from the file.
    pub mesh_file: Option<PathBuf>,
    #[serde(default = "defaults::coarse_h")]
    pub coarse_h: f64,
    #[serde(default = "defaults::refinement")]
    pub refinement: usize,
    pub block_shape: Option<BlockShape>,
    /// Seed of the preset layouts.
    #[serde(default = "defaults::geometry_seed")]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Example1,
    Example2,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub example: Example,
    /// Expressions in `x`, `y`; used when `example = "custom"`.
    pub f: Option<[String; 2]>,
    pub g_d: Option<[String; 2]>,
    pub g_n: Option<[String; 2]>,
    pub outer: Option<OuterBoundary>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { example: Example::Example1, f: None, g_d: None, g_n: None, outer: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::mode")]
    pub mode: SnapshotMode,
    #[serde(default = "defaults::layers")]
    pub layers: usize,
    #[serde(default = "defaults::pod_tol")]
    pub pod_tol: f64,
    /// Random samples per block for randomized snapshots.
    #[serde(default = "defaults::count")]
    pub count: usize,
    #[serde(default = "defaults::m_off")]
    pub m_off: Vec<usize>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: defaults::gamma(),
            mode: defaults::mode(),
            layers: defaults::layers(),
            pod_tol: defaults::pod_tol(),
            count: defaults::count(),
            m_off: defaults::m_off(),
            workers: 0,
        }
    }
}

mod defaults {
    use std::path::PathBuf;

    use msstokes_core::SnapshotMode;

    pub fn output() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn coarse_h() -> f64 {
        0.1
    }
    pub fn refinement() -> usize {
        8
    }
    pub fn geometry_seed() -> u64 {
        1
    }
    pub fn gamma() -> f64 {
        4.0
    }
    pub fn mode() -> SnapshotMode {
        SnapshotMode::Standard
    }
    pub fn layers() -> usize {
        4
    }
    pub fn pod_tol() -> f64 {
        1e-10
    }
    pub fn count() -> usize {
        36
    }
    pub fn m_off() -> Vec<usize> {
        vec![4, 8, 16, 32]
    }
}

/// Overrides taken from command-line flags.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub m_off: Option<Vec<usize>>,
    pub layers: Option<usize>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(file) = &cfg.geometry.mesh_file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.geometry.mesh_file = Some(base.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = &o.m_off {
            self.solver.m_off = m.clone();
        }
        if let Some(l) = o.layers {
            self.solver.layers = l;
        }
        if let Some(g) = o.gamma {
            self.solver.gamma = g;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.solver.workers = w;
        }
        if let Some(out) = &o.out {
            self.output = out.clone();
        }
    }

    /// Checks every field; the first failure names the field.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        let sources = [g.preset.is_some(), g.circles.is_some(), g.mesh_file.is_some()].iter().filter(|b| **b).count();
        if sources > 1 {
            return Err(invalid("geometry", "give only one of preset, circles, mesh_file"));
        }
        if !(g.coarse_h > 0.0 && g.coarse_h <= 1.0) {
            return Err(invalid("geometry.coarse_h", format!("{} is not in (0, 1]", g.coarse_h)));
        }
        let n = 1.0 / g.coarse_h;
        if (n - n.round()).abs() > 1e-9 {
            return Err(invalid("geometry.coarse_h", "must divide 1 evenly"));
        }
        if g.mesh_file.is_none() && g.refinement < 2 {
            return Err(invalid("geometry.refinement", "must be at least 2"));
        }
        if let Some(circles) = &g.circles {
            for (i, c) in circles.iter().enumerate() {
                if !(c[2] > 0.0) || !c.iter().all(|v| v.is_finite()) {
                    return Err(invalid("geometry.circles", format!("circle {i} is invalid")));
                }
            }
        }
        if let (Some(p), Some(s)) = (g.preset, g.block_shape) {
            if p.block_shape() != s {
                return Err(invalid("geometry.block_shape", "conflicts with the preset"));
            }
        }
        let p = &self.problem;
        if p.example != Example::Custom && (p.f.is_some() || p.g_d.is_some() || p.g_n.is_some()) {
            return Err(invalid("problem", "f, g_d and g_n are only read when example = \"custom\""));
        }
        self.problem_data()?;
        let s = &self.solver;
        if !(s.gamma > 0.0 && s.gamma.is_finite()) {
            return Err(invalid("solver.gamma", "must be positive"));
        }
        if !(s.pod_tol > 0.0 && s.pod_tol < 1.0) {
            return Err(invalid("solver.pod_tol", "must lie in (0, 1)"));
        }
        if s.m_off.is_empty() || s.m_off.contains(&0) {
            return Err(invalid("solver.m_off", "needs positive basis counts"));
        }
        if s.mode == SnapshotMode::Randomized && s.count == 0 {
            return Err(invalid("solver.count", "must be positive"));
        }
        if s.mode == SnapshotMode::OversampledUnrestricted && s.layers == 0 {
            return Err(invalid("solver.layers", "oversampling needs at least one layer"));
        }
        Ok(())
    }

    pub fn problem_data(&self) -> Result<ProblemData, CliError> {
        let p = &self.problem;
        let mut data = match p.example {
            Example::Example1 => ProblemData::example1(),
            Example::Example2 => ProblemData::example2(),
            Example::Custom => {
                let field = |name: &str, v: &Option<[String; 2]>| match v {
                    None => Ok(VectorField::zero()),
                    Some([x, y]) => VectorField::parse(x, y).map_err(|e| invalid(&format!("problem.{name}"), e)),
                };
                ProblemData {
                    f: field("f", &p.f)?,
                    g_d: field("g_d", &p.g_d)?,
                    g_n: field("g_n", &p.g_n)?,
                    outer: OuterBoundary::Dirichlet,
                }
            }
        };
        if let Some(outer) = p.outer {
            data.outer = outer;
        }
        Ok(data)
    }

    pub fn snapshot_settings(&self) -> SnapshotSettings {
        let s = &self.solver;
        SnapshotSettings { mode: s.mode, layers: s.layers, pod_tol: s.pod_tol, count: s.count, seed: self.seed }
    }

    /// Mesh and partition with the outer boundary markers of the problem.
    pub fn build_mesh(&self) -> Result<(FineMesh, CoarsePartition), CliError> {
        let g = &self.geometry;
        let (mut mesh, part) = if let Some(file) = &g.mesh_file {
            let mesh = import_mesh(file).map_err(CliError::Mesh)?;
            let part = CoarsePartition::build(&mesh, g.coarse_h).map_err(CliError::Mesh)?;
            (mesh, part)
        } else if let Some(preset) = g.preset {
            preset.generate(g.coarse_h, g.refinement, g.seed).map_err(CliError::Mesh)?
        } else {
            let circles = g.circles.clone().unwrap_or_default();
            let perf = PerforationSet::new(circles.into_iter().map(|c| Circle::new([c[0], c[1]], c[2])).collect())
                .map_err(CliError::Mesh)?;
            let shape = g.block_shape.unwrap_or(BlockShape::Rectangular);
            generate_perforated_mesh(&perf, g.coarse_h, g.refinement, shape).map_err(CliError::Mesh)?
        };
        let outer = self.problem_data()?.outer;
        let part = outer.apply(&mut mesh, &part).map_err(CliError::Mesh)?;
        Ok((mesh, part))
    }

    /// SHA-256 of the canonical JSON form of the whole configuration.
    /// Hash of everything that affects results; `output` and `workers` are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        canonical.solver.workers = 0;
        hash_json(&canonical)
    }

    pub fn geometry_hash(&self) -> String {
        hash_json(&(&self.geometry, &self.problem.outer, &self.problem.example))
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(value).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
