use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::geometry::hex;
use crate::offline::{BlockOfflineBasis, SpectralVariant};
use crate::snapshots::{SnapshotMode, SnapshotSpace};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"MSSC";
const VERSION: u32 = 1;
const KIND_SNAPSHOTS: u8 = 1;
const KIND_OFFLINE: u8 = 2;

/// Identity of one cached per-block artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheKey {
    pub mesh_hash: String,
    pub block: usize,
    pub mode: SnapshotMode,
    pub layers: usize,
    pub pod_tol: f64,
    pub seed: u64,
    /// Random samples per block; 0 for deterministic modes.
    pub samples: usize,
    /// `(L_i, variant)` for offline bases; `None` for snapshot spaces.
    pub offline: Option<(usize, SpectralVariant)>,
}

impl CacheKey {
    pub fn describe(&self) -> String {
        let mut s = format!(
            "mesh={} block={} mode={} layers={} pod_tol={:?} seed={} samples={}",
            self.mesh_hash,
            self.block,
            self.mode.name(),
            self.layers,
            self.pod_tol,
            self.seed,
            self.samples
        );
        if let Some((l, v)) = self.offline {
            s.push_str(&format!(" l={l} variant={}", v.code()));
        }
        s
    }

    pub fn file_name(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.describe().as_bytes());
        let prefix = if self.offline.is_some() { "off" } else { "snap" };
        format!("{prefix}-{}.mssc", &hex(&digest)[..32])
    }
}

/// Directory of binary `MSSC` files.
///
/// Every file starts with the magic, a format version, the artifact kind and
/// the full key text, which is checked on load.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    pub fn store_snapshots(&self, key: &CacheKey, space: &SnapshotSpace) -> Result<()> {
        let mut w = Encoder::header(KIND_SNAPSHOTS, key);
        w.usize(space.block);
        w.u8(space.mode.code());
        w.usize(space.layers);
        w.usizes(&space.support);
        w.usizes(&space.nodes);
        w.matrix(&space.columns);
        w.f64s(&space.divergence);
        self.write(key, w.buf)
    }

    pub fn load_snapshots(&self, key: &CacheKey) -> Result<Option<SnapshotSpace>> {
        let Some(mut r) = self.open(key, KIND_SNAPSHOTS)? else { return Ok(None) };
        let block = r.usize()?;
        let mode = SnapshotMode::from_code(r.u8()?).ok_or_else(|| corrupt("snapshot mode"))?;
        Ok(Some(SnapshotSpace {
            block,
            mode,
            layers: r.usize()?,
            support: r.usizes()?,
            nodes: r.usizes()?,
            columns: r.matrix()?,
            divergence: r.f64s()?,
        }))
    }

    pub fn store_offline(&self, key: &CacheKey, basis: &BlockOfflineBasis) -> Result<()> {
        let mut w = Encoder::header(KIND_OFFLINE, key);
        w.usize(basis.block);
        w.u8(basis.mode.code());
        w.u8(basis.variant.code());
        w.f64s(&basis.eigenvalues);
        w.matrix(&basis.columns);
        w.usizes(&basis.eigen_index);
        w.usizes(&basis.dropped);
        self.write(key, w.buf)
    }

    pub fn load_offline(&self, key: &CacheKey) -> Result<Option<BlockOfflineBasis>> {
        let Some(mut r) = self.open(key, KIND_OFFLINE)? else { return Ok(None) };
        let block = r.usize()?;
        let mode = SnapshotMode::from_code(r.u8()?).ok_or_else(|| corrupt("snapshot mode"))?;
        let variant = SpectralVariant::from_code(r.u8()?).ok_or_else(|| corrupt("spectral variant"))?;
        Ok(Some(BlockOfflineBasis {
            block,
            mode,
            variant,
            eigenvalues: r.f64s()?,
            columns: r.matrix()?,
            eigen_index: r.usizes()?,
            dropped: r.usizes()?,
        }))
    }

    fn write(&self, key: &CacheKey, bytes: Vec<u8>) -> Result<()> {
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&bytes)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn open(&self, key: &CacheKey, kind: u8) -> Result<Option<Decoder>> {
        let path = self.path(key);
        let mut buf = Vec::new();
        match fs::File::open(&path) {
            Ok(mut f) => f.read_to_end(&mut buf)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut r = Decoder { buf, pos: 0 };
        if r.take(4)? != CACHE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if r.u32()? != VERSION {
            return Ok(None);
        }
        if r.u8()? != kind {
            return Err(corrupt("artifact kind"));
        }
        let text = r.take_len()?;
        if text != key.describe().as_bytes() {
            return Ok(None);
        }
        Ok(Some(r))
    }
}

fn corrupt(what: &str) -> Error {
    Error::InvalidInput(format!("corrupt cache file: {what}"))
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn header(kind: u8, key: &CacheKey) -> Self {
        let mut w = Self { buf: CACHE_MAGIC.to_vec() };
        w.buf.extend_from_slice(&VERSION.to_le_bytes());
        w.u8(kind);
        let text = key.describe();
        w.usize(text.len());
        w.buf.extend_from_slice(text.as_bytes());
        w
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn usize(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }

    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.buf.extend_from_slice(&x.to_le_bytes()));
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.usize(m.nrows());
        self.f64s(m.as_slice());
    }
}

struct Decoder {
    buf: Vec<u8>,
    pos: usize,
}

impl Decoder {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn take_len(&mut self) -> Result<&[u8]> {
        let n = self.usize()?;
        self.take(n)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length"))
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.usize()?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let data = self.f64s()?;
        if rows == 0 {
            return if data.is_empty() { Ok(DMatrix::zeros(0, 0)) } else { Err(corrupt("matrix shape")) };
        }
        if data.len() % rows != 0 {
            return Err(corrupt("matrix shape"));
        }
        Ok(DMatrix::from_vec(rows, data.len() / rows, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_perforated_mesh, BlockShape, Circle, PerforationSet};
    use crate::snapshots::build_standard_snapshots;

    fn key(block: usize) -> CacheKey {
        CacheKey {
            mesh_hash: "abc".into(),
            block,
            mode: SnapshotMode::Standard,
            layers: 0,
            pod_tol: 1e-10,
            seed: 0,
            samples: 0,
            offline: None,
        }
    }

    #[test]
    fn snapshot_round_trip_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let perf = PerforationSet::new(vec![Circle::new([0.75, 0.25], 0.08)]).unwrap();
        let (mesh, part) = generate_perforated_mesh(&perf, 0.5, 8, BlockShape::Rectangular).unwrap();
        let space = build_standard_snapshots(&mesh, &part, 1).unwrap();
        assert!(cache.load_snapshots(&key(1)).unwrap().is_none());
        cache.store_snapshots(&key(1), &space).unwrap();
        let back = cache.load_snapshots(&key(1)).unwrap().unwrap();
        assert_eq!(back.columns, space.columns);
        assert_eq!(back.nodes, space.nodes);
        assert_eq!(back.divergence, space.divergence);
        let bytes = std::fs::read(cache.path(&key(1))).unwrap();
        assert_eq!(&bytes[..4], CACHE_MAGIC);

        let mut other = key(1);
        other.pod_tol = 1e-9;
        assert_ne!(other.file_name(), key(1).file_name());
        assert!(cache.load_snapshots(&other).unwrap().is_none());
        assert!(cache.load_offline(&key(1)).is_err());
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let mut enc = Encoder::header(KIND_SNAPSHOTS, &key(0));
        enc.usize(0);
        std::fs::write(cache.path(&key(0)), &enc.buf).unwrap();
        assert!(cache.load_snapshots(&key(0)).is_err());
    }
}
