//! Staged pipeline with on-disk caching.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msstokes_core::analysis::{audit_conservation, compute_errors, run_study, ErrorReport, StudyPlan};
use msstokes_core::io::{parse_native, write_native, write_vtk, Cache, CacheKey, VtkFields};
use msstokes_core::mssolver::{solve_multiscale, solve_reference};
use msstokes_core::offline::{assemble_global_offline, reduce_all};
use msstokes_core::{
    BlockOfflineBasis, CoarsePartition, DgContext, DgOperators, FineMesh, HybridSolution, ProblemData, SnapshotMode,
    SnapshotSettings, SnapshotSpace, SpectralVariant,
};
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, RunConfig};
use crate::CliError;

/// Pipeline stage selected by `solve --stage`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Reference,
    Snapshots,
    Offline,
    Multiscale,
    Errors,
    All,
}

/// Cached multiscale result of one offline size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiscaleRecord {
    pub m_off: usize,
    pub rank_deficient_blocks: usize,
    pub solution: HybridSolution,
}

/// Reports of `solve --stage errors`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub config_hash: String,
    pub mesh_hash: String,
    pub reference_residual: f64,
    pub rows: Vec<ErrorReport>,
}

/// Outputs of `study`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyManifest {
    pub config_hash: String,
    pub mesh_hash: String,
    pub csv_sha256: String,
    pub config: RunConfig,
    pub rows: Vec<ErrorReport>,
    /// Seconds per phase.
    pub timings: Vec<(String, f64)>,
}

pub struct Session {
    pub config: RunConfig,
    pub problem: ProblemData,
    pub cache: Cache,
    pub out: PathBuf,
    pub quiet: bool,
}

pub struct MeshBundle {
    pub mesh: FineMesh,
    pub partition: CoarsePartition,
    pub hash: String,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn solver_err(e: msstokes_core::Error) -> CliError {
    CliError::Solver(e)
}

impl Session {
    pub fn new(config: RunConfig, quiet: bool) -> Result<Self, CliError> {
        config.validate()?;
        let problem = config.problem_data()?;
        let out = config.output.clone();
        let cache_dir = match std::env::var_os("MSSTOKES_CACHE") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => out.join("cache"),
        };
        let cache = Cache::new(cache_dir)?;
        Ok(Self { config, problem, cache, out, quiet })
    }

    fn say(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn mesh_path(&self) -> PathBuf {
        self.cache.dir().join(format!("mesh-{}.msh", &self.config.geometry_hash()[..32]))
    }

    /// Builds the mesh, stores it in the cache and writes the native file and
    /// a VTK preview to the output directory.
    pub fn cmd_mesh(&self) -> Result<MeshBundle, CliError> {
        let t = Instant::now();
        let (mesh, partition) = self.config.build_mesh()?;
        let text = write_native(&mesh);
        write_file(&self.mesh_path(), &text)?;
        write_file(&self.out.join("mesh.msh"), &text)?;
        let mut vtk = Vec::new();
        write_vtk(&mut vtk, &mesh, None).map_err(CliError::Mesh)?;
        write_file(&self.out.join("mesh.vtk"), vtk)?;
        let hash = mesh.content_hash();
        self.say(format!(
            "mesh: {} nodes, {} triangles, {} blocks, {} coarse edges, h = {:.4e}, {:.2} s",
            mesh.nodes.len(),
            mesh.triangles.len(),
            partition.n_blocks(),
            partition.edges.len(),
            mesh.h,
            t.elapsed().as_secs_f64()
        ));
        Ok(MeshBundle { mesh, partition, hash })
    }

    /// Cached mesh; `MissingPrerequisite` when absent.
    pub fn load_mesh(&self) -> Result<MeshBundle, CliError> {
        let path = self.mesh_path();
        let text = fs::read_to_string(&path)
            .map_err(|_| CliError::MissingPrerequisite("mesh (run `msstokes mesh` first)".into()))?;
        let mesh = parse_native(&text).map_err(CliError::Mesh)?;
        let partition = CoarsePartition::build(&mesh, self.config.geometry.coarse_h).map_err(CliError::Mesh)?;
        let hash = mesh.content_hash();
        Ok(MeshBundle { mesh, partition, hash })
    }

    fn mesh_or_build(&self) -> Result<MeshBundle, CliError> {
        match self.load_mesh() {
            Ok(m) => Ok(m),
            Err(CliError::MissingPrerequisite(_)) => self.cmd_mesh(),
            Err(e) => Err(e),
        }
    }

    fn reference_key(&self, mesh_hash: &str) -> String {
        hash_json(&(mesh_hash, &self.config.problem, self.config.solver.gamma))
    }

    fn reference_path(&self, mesh_hash: &str) -> PathBuf {
        self.cache.dir().join(format!("reference-{}.json", &self.reference_key(mesh_hash)[..32]))
    }

    fn effective_settings(&self) -> SnapshotSettings {
        let mut s = self.config.snapshot_settings();
        if s.mode == SnapshotMode::Standard {
            s.layers = 0;
        }
        if s.mode != SnapshotMode::Randomized {
            s.seed = 0;
            s.count = 0;
        }
        s
    }

    fn snapshot_key(&self, mesh_hash: &str, block: usize, offline: Option<(usize, SpectralVariant)>) -> CacheKey {
        let s = self.effective_settings();
        CacheKey {
            mesh_hash: mesh_hash.to_string(),
            block,
            mode: s.mode,
            layers: s.layers,
            pod_tol: s.pod_tol,
            seed: s.seed,
            samples: s.count,
            offline,
        }
    }

    fn l_max(&self) -> usize {
        self.config.solver.m_off.iter().copied().max().unwrap_or(0)
    }

    fn variant(&self) -> SpectralVariant {
        SpectralVariant::for_mode(self.config.solver.mode)
    }

    fn multiscale_path(&self, mesh_hash: &str, m_off: usize) -> PathBuf {
        let key = hash_json(&(
            self.reference_key(mesh_hash),
            self.snapshot_key(mesh_hash, 0, Some((self.l_max(), self.variant()))).describe(),
            m_off,
        ));
        self.cache.dir().join(format!("multiscale-{}.json", &key[..32]))
    }

    fn context<'a>(&self, m: &'a MeshBundle) -> Result<(DgContext<'a>, DgOperators), CliError> {
        let ctx = DgContext::new(&m.mesh, &m.partition, self.config.solver.gamma).map_err(solver_err)?;
        let ops = ctx.assemble().map_err(solver_err)?;
        Ok((ctx, ops))
    }

    pub fn stage_reference(&self, m: &MeshBundle) -> Result<HybridSolution, CliError> {
        let t = Instant::now();
        let (ctx, ops) = self.context(m)?;
        let sol = solve_reference(&ctx, &ops, &self.problem).map_err(solver_err)?;
        write_file(&self.reference_path(&m.hash), serde_json::to_vec(&sol)?)?;
        self.say(format!(
            "reference: {} velocity + {} pressure unknowns, residual {:.2e}, {:.2} s",
            sol.n_velocity,
            sol.n_pressure,
            sol.residual,
            t.elapsed().as_secs_f64()
        ));
        Ok(sol)
    }

    fn load_reference(&self, m: &MeshBundle) -> Result<Option<HybridSolution>, CliError> {
        match fs::read(self.reference_path(&m.hash)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(_) => Ok(None),
        }
    }

    pub fn stage_snapshots(&self, m: &MeshBundle) -> Result<Vec<SnapshotSpace>, CliError> {
        let t = Instant::now();
        let settings = self.effective_settings();
        let spaces = msstokes_core::snapshots::build_snapshots(&m.mesh, &m.partition, &settings).map_err(solver_err)?;
        for s in &spaces {
            self.cache.store_snapshots(&self.snapshot_key(&m.hash, s.block, None), s)?;
        }
        let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
        self.say(format!(
            "snapshots: {} blocks, mode {}, dimension {}..{}, {:.2} s",
            spaces.len(),
            settings.mode.name(),
            dims.iter().min().unwrap_or(&0),
            dims.iter().max().unwrap_or(&0),
            t.elapsed().as_secs_f64()
        ));
        Ok(spaces)
    }

    fn load_snapshots(&self, m: &MeshBundle) -> Result<Option<Vec<SnapshotSpace>>, CliError> {
        let mut out = Vec::with_capacity(m.partition.n_blocks());
        for b in 0..m.partition.n_blocks() {
            match self.cache.load_snapshots(&self.snapshot_key(&m.hash, b, None))? {
                Some(s) => out.push(s),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    pub fn stage_offline(&self, m: &MeshBundle, snapshots: &[SnapshotSpace]) -> Result<Vec<BlockOfflineBasis>, CliError> {
        let t = Instant::now();
        let ctx = DgContext::new(&m.mesh, &m.partition, self.config.solver.gamma).map_err(solver_err)?;
        let l = self.l_max();
        let bases = reduce_all(
            &m.mesh,
            &m.partition,
            &ctx.layout,
            snapshots,
            &vec![l; snapshots.len()],
            self.variant(),
            self.config.solver.pod_tol,
        )
        .map_err(solver_err)?;
        for b in &bases {
            self.cache.store_offline(&self.snapshot_key(&m.hash, b.block, Some((l, self.variant()))), b)?;
        }
        let dropped: usize = bases.iter().map(|b| b.dropped.len()).sum();
        self.say(format!(
            "offline: {} blocks, L = {l}, variant {:?}, {dropped} dependent modes dropped, {:.2} s",
            bases.len(),
            self.variant(),
            t.elapsed().as_secs_f64()
        ));
        Ok(bases)
    }

    fn load_offline(&self, m: &MeshBundle) -> Result<Option<Vec<BlockOfflineBasis>>, CliError> {
        let l = self.l_max();
        let mut out = Vec::with_capacity(m.partition.n_blocks());
        for b in 0..m.partition.n_blocks() {
            match self.cache.load_offline(&self.snapshot_key(&m.hash, b, Some((l, self.variant()))))? {
                Some(s) => out.push(s),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    pub fn stage_multiscale(
        &self,
        m: &MeshBundle,
        bases: &[BlockOfflineBasis],
    ) -> Result<Vec<MultiscaleRecord>, CliError> {
        let (ctx, ops) = self.context(m)?;
        let mut out = Vec::new();
        for &l in &self.config.solver.m_off {
            let t = Instant::now();
            let prefix: Vec<_> = bases.iter().map(|b| b.prefix(l)).collect();
            let (space, checks) = assemble_global_offline(&ctx, &prefix).map_err(solver_err)?;
            let solution = solve_multiscale(&ctx, &ops, &space, &self.problem).map_err(solver_err)?;
            let rec = MultiscaleRecord {
                m_off: l,
                rank_deficient_blocks: checks.iter().filter(|c| !c.full_rank()).count(),
                solution,
            };
            write_file(&self.multiscale_path(&m.hash, l), serde_json::to_vec(&rec)?)?;
            self.say(format!(
                "multiscale: M_off = {l}, {} unknowns, residual {:.2e}, {:.2} s",
                rec.solution.dof(),
                rec.solution.residual,
                t.elapsed().as_secs_f64()
            ));
            out.push(rec);
        }
        Ok(out)
    }

    fn load_multiscale(&self, m: &MeshBundle) -> Result<Option<Vec<MultiscaleRecord>>, CliError> {
        let mut out = Vec::new();
        for &l in &self.config.solver.m_off {
            match fs::read(self.multiscale_path(&m.hash, l)) {
                Ok(bytes) => out.push(serde_json::from_slice(&bytes)?),
                Err(_) => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    pub fn stage_errors(
        &self,
        m: &MeshBundle,
        reference: &HybridSolution,
        records: &[MultiscaleRecord],
    ) -> Result<SolveReport, CliError> {
        let (ctx, ops) = self.context(m)?;
        let settings = self.effective_settings();
        let mut rows = Vec::new();
        for rec in records {
            let norms = compute_errors(&ctx, &ops, &rec.solution, reference).map_err(solver_err)?;
            let audit = audit_conservation(&ctx, &rec.solution.u, &self.problem);
            let row = ErrorReport {
                m_off: rec.m_off,
                dof: rec.solution.dof(),
                e_u_l2: norms.e_u_l2,
                e_u_dg: norms.e_u_dg,
                e_u_h1: norms.e_u_h1,
                e_p_l2: norms.e_p_l2,
                conservation_max: audit.max_flux(),
                balance_max: audit.max_balance(),
                rank_deficient_blocks: rec.rank_deficient_blocks,
                gamma: self.config.solver.gamma,
                layers: settings.layers,
                mode: settings.mode,
                seed: self.config.seed,
            };
            self.say(format_row(&row));
            let mut vtk = Vec::new();
            let fields = VtkFields { layout: &ctx.layout, u: &rec.solution.u, p: &rec.solution.p };
            write_vtk(&mut vtk, &m.mesh, Some(fields)).map_err(solver_err)?;
            write_file(&self.out.join(format!("solution_m{}.vtk", rec.m_off)), vtk)?;
            rows.push(row);
        }
        let report = SolveReport {
            config_hash: self.config.hash(),
            mesh_hash: m.hash.clone(),
            reference_residual: reference.residual,
            rows,
        };
        write_file(&self.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        Ok(report)
    }

    pub fn cmd_solve(&self, stage: Stage) -> Result<Option<SolveReport>, CliError> {
        let missing = |what: &str| CliError::MissingPrerequisite(format!("{what} (run an earlier stage first)"));
        let m = if stage == Stage::All { self.mesh_or_build()? } else { self.load_mesh()? };
        match stage {
            Stage::Reference => {
                self.stage_reference(&m)?;
            }
            Stage::Snapshots => {
                self.stage_snapshots(&m)?;
            }
            Stage::Offline => {
                let snaps = self.load_snapshots(&m)?.ok_or_else(|| missing("snapshots"))?;
                self.stage_offline(&m, &snaps)?;
            }
            Stage::Multiscale => {
                let bases = self.load_offline(&m)?.ok_or_else(|| missing("offline basis"))?;
                self.stage_multiscale(&m, &bases)?;
            }
            Stage::Errors => {
                let reference = self.load_reference(&m)?.ok_or_else(|| missing("reference solution"))?;
                let records = self.load_multiscale(&m)?.ok_or_else(|| missing("multiscale solutions"))?;
                return Ok(Some(self.stage_errors(&m, &reference, &records)?));
            }
            Stage::All => {
                let reference = match self.load_reference(&m)? {
                    Some(r) => r,
                    None => self.stage_reference(&m)?,
                };
                let bases = match self.load_offline(&m)? {
                    Some(b) => b,
                    None => {
                        let snaps = match self.load_snapshots(&m)? {
                            Some(s) => s,
                            None => self.stage_snapshots(&m)?,
                        };
                        self.stage_offline(&m, &snaps)?
                    }
                };
                let records = self.stage_multiscale(&m, &bases)?;
                return Ok(Some(self.stage_errors(&m, &reference, &records)?));
            }
        }
        Ok(None)
    }

    /// Runs both arms of the study and writes `study.csv` and `manifest.json`.
    pub fn cmd_study(&self) -> Result<StudyManifest, CliError> {
        let mut timings = Vec::new();
        let t = Instant::now();
        let m = self.mesh_or_build()?;
        timings.push(("mesh".to_string(), t.elapsed().as_secs_f64()));
        let t = Instant::now();
        let (ctx, ops) = self.context(&m)?;
        let reference = match self.load_reference(&m)? {
            Some(r) => r,
            None => self.stage_reference(&m)?,
        };
        timings.push(("reference".to_string(), t.elapsed().as_secs_f64()));
        let t = Instant::now();
        let mut plan = StudyPlan::standard(self.config.seed);
        plan.m_off = self.config.solver.m_off.clone();
        for arm in plan.arms.iter_mut().filter(|a| a.mode != SnapshotMode::Standard) {
            arm.layers = self.config.solver.layers;
        }
        for arm in plan.arms.iter_mut() {
            arm.pod_tol = self.config.solver.pod_tol;
        }
        let study = run_study(&ctx, &ops, &self.problem, &reference, &plan).map_err(solver_err)?;
        timings.push(("study".to_string(), t.elapsed().as_secs_f64()));
        let csv = study.to_csv();
        write_file(&self.out.join("study.csv"), &csv)?;
        for row in &study.rows {
            self.say(format_row(row));
        }
        let manifest = StudyManifest {
            config_hash: self.config.hash(),
            mesh_hash: m.hash.clone(),
            csv_sha256: hash_bytes(csv.as_bytes()),
            config: self.config.clone(),
            rows: study.rows,
            timings,
        };
        write_file(&self.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn hash_bytes(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn format_row(r: &ErrorReport) -> String {
    let flag = if r.rank_deficient_blocks > 0 { format!("  [{} rank-warned blocks]", r.rank_deficient_blocks) } else { String::new() };
    format!(
        "{:<24} M_off {:>3}  DOF {:>6}  L2 {:>6.1}%  DG {:>6.1}%  H1 {:>6.1}%  p {:>7.1}%  cons {:.2e}{flag}",
        r.mode.name(),
        r.m_off,
        r.dof,
        r.e_u_l2,
        r.e_u_dg,
        r.e_u_h1,
        r.e_p_l2,
        r.conservation_max
    )
}

/// Prints the reports found in an output directory.
pub fn cmd_report(out: &Path) -> Result<(), CliError> {
    let mut found = false;
    if let Ok(bytes) = fs::read(out.join("manifest.json")) {
        let manifest: StudyManifest = serde_json::from_slice(&bytes)?;
        println!("study (config {})", &manifest.config_hash[..12]);
        for r in &manifest.rows {
            println!("  {}", format_row(r));
        }
        found = true;
    }
    if let Ok(bytes) = fs::read(out.join("report.json")) {
        let report: SolveReport = serde_json::from_slice(&bytes)?;
        println!("solve (config {}, reference residual {:.2e})", &report.config_hash[..12], report.reference_residual);
        for r in &report.rows {
            println!("  {}", format_row(r));
        }
        found = true;
    }
    if found {
        Ok(())
    } else {
        Err(CliError::MissingPrerequisite(format!("no report in {}", out.display())))
    }
}
