//! Binary cache of eigenpair sets.
//!
//! Layout (little endian): magic `CUSPEIG\0`, format version (u32), problem
//! hash, grid hash, tol (f64), k, dimension, pair count (u64 each), then the
//! eigenvalues, sup norms, residuals and vectors as f64 arrays, a pencil flag
//! byte optionally followed by A and B in compressed-row form, and finally a
//! SHA-256 checksum of every preceding byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{hex, pencil_hash, relative_residual, ContentHasher, EigenMeta, EigenPairSet, SparseSymmetricForm};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CUSPEIG\0";
const EXTENSION: &str = "eig";
const QUARANTINE: &str = "quarantine";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a cache file (bad magic)")]
    BadMagic,
    #[error("unsupported cache format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("stored hashes or parameters do not match the request")]
    KeyMismatch,
    #[error("stored pencil does not hash to the recorded problem hash")]
    PencilMismatch,
    #[error("malformed payload: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

/// Header fields of one cached entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntryInfo {
    pub file: PathBuf,
    pub problem_hash: [u8; 32],
    pub grid_hash: [u8; 32],
    pub tol: f64,
    pub k: usize,
    pub dimension: usize,
    pub n_pairs: usize,
    pub has_pencil: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyOutcome {
    /// Checksum good and, when a pencil is stored, the recomputed residual of
    /// the first pair is within tolerance.
    Ok { recomputed_residual: Option<f64> },
    Quarantined { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub entries: Vec<(PathBuf, VerifyOutcome)>,
}

impl VerifyReport {
    pub fn quarantined(&self) -> usize {
        self.entries.iter().filter(|(_, o)| matches!(o, VerifyOutcome::Quarantined { .. })).count()
    }
}

struct Decoded {
    info: CacheEntryInfo,
    set: EigenPairSet,
    pencil: Option<(SparseSymmetricForm, SparseSymmetricForm)>,
}

/// Directory-backed cache. Writes go through a temporary file and a rename.
#[derive(Debug, Clone)]
pub struct EigenCache {
    dir: PathBuf,
}

impl EigenCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key_name(problem_hash: &[u8; 32], grid_hash: &[u8; 32], k: usize, tol: f64) -> String {
        let h = ContentHasher::new()
            .bytes(problem_hash)
            .bytes(grid_hash)
            .u64(k as u64)
            .f64(tol)
            .finish();
        format!("{}.{EXTENSION}", hex(&h[..16]))
    }

    fn path_for(&self, meta: &EigenMeta, k: usize) -> PathBuf {
        self.dir.join(Self::key_name(&meta.problem_hash, &meta.grid_hash, k, meta.tol))
    }

    /// Stores `set` under its own meta and `k`. The pencil, when given, lets
    /// `verify` recompute a residual later.
    pub fn store(
        &self,
        set: &EigenPairSet,
        k: usize,
        pencil: Option<(&SparseSymmetricForm, &SparseSymmetricForm)>,
    ) -> Result<PathBuf, CacheError> {
        let bytes = encode(set, k, pencil);
        let path = self.path_for(&set.meta, k);
        let tmp = self.dir.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("entry"),
            std::process::id()
        ));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Looks up an entry. Returns `Ok(None)` on a miss; a present but corrupt
    /// or mismatched entry is quarantined and reported as an error.
    pub fn load(
        &self,
        problem_hash: &[u8; 32],
        grid_hash: &[u8; 32],
        k: usize,
        tol: f64,
    ) -> Result<Option<EigenPairSet>, CacheError> {
        let path = self.dir.join(Self::key_name(problem_hash, grid_hash, k, tol));
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let result = decode(&bytes, &path).and_then(|d| {
            let i = &d.info;
            if &i.problem_hash != problem_hash || &i.grid_hash != grid_hash || i.k != k || i.tol.to_bits() != tol.to_bits() {
                Err(CacheError::KeyMismatch)
            } else {
                Ok(d.set)
            }
        });
        match result {
            Ok(set) => Ok(Some(set)),
            Err(e) => {
                self.quarantine(&path)?;
                Err(e)
            }
        }
    }

    fn entry_paths(&self) -> Result<Vec<PathBuf>, CacheError> {
        let mut out = Vec::new();
        for e in fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let e = e.map_err(io_err(&self.dir))?;
            let p = e.path();
            if p.is_file() && p.extension().and_then(|s| s.to_str()) == Some(EXTENSION) {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Header of every readable entry, plus the paths that failed to decode.
    pub fn status(&self) -> Result<(Vec<CacheEntryInfo>, Vec<PathBuf>), CacheError> {
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for p in self.entry_paths()? {
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            match decode(&bytes, &p) {
                Ok(d) => good.push(d.info),
                Err(_) => bad.push(p),
            }
        }
        Ok((good, bad))
    }

    /// Removes all entries (the quarantine directory is kept).
    pub fn clear(&self) -> Result<usize, CacheError> {
        let paths = self.entry_paths()?;
        for p in &paths {
            fs::remove_file(p).map_err(io_err(p))?;
        }
        Ok(paths.len())
    }

    pub fn quarantine_dir(&self) -> PathBuf {
        self.dir.join(QUARANTINE)
    }

    fn quarantine(&self, path: &Path) -> Result<PathBuf, CacheError> {
        let qdir = self.quarantine_dir();
        fs::create_dir_all(&qdir).map_err(io_err(&qdir))?;
        let target = qdir.join(path.file_name().unwrap_or_default());
        fs::rename(path, &target).map_err(io_err(path))?;
        log::warn!("quarantined cache entry {}", path.display());
        Ok(target)
    }

    /// Checks every entry; entries with a bad checksum, a pencil that does not
    /// match the problem hash, or a recomputed residual above 10·tol are moved
    /// to the quarantine directory.
    pub fn verify(&self) -> Result<VerifyReport, CacheError> {
        let mut entries = Vec::new();
        for p in self.entry_paths()? {
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            let outcome = match decode(&bytes, &p) {
                Err(e) => Err(e.to_string()),
                Ok(d) => check_residual(&d),
            };
            let outcome = match outcome {
                Ok(r) => VerifyOutcome::Ok { recomputed_residual: r },
                Err(reason) => {
                    self.quarantine(&p)?;
                    VerifyOutcome::Quarantined { reason }
                }
            };
            entries.push((p, outcome));
        }
        Ok(VerifyReport { entries })
    }
}

fn check_residual(d: &Decoded) -> Result<Option<f64>, String> {
    let Some((a, b)) = &d.pencil else { return Ok(None) };
    if pencil_hash(a, b) != d.info.problem_hash {
        return Err(CacheError::PencilMismatch.to_string());
    }
    if d.set.is_empty() {
        return Ok(None);
    }
    let r = relative_residual(a, b, d.set.eigenvalues[0], &d.set.vectors[0]);
    let limit = 10.0 * d.info.tol.max(f64::EPSILON);
    if r.is_finite() && r <= limit {
        Ok(Some(r))
    } else {
        Err(format!("recomputed residual {r:e} exceeds {limit:e}"))
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_form(out: &mut Vec<u8>, a: &SparseSymmetricForm) {
    put_u64(out, a.dimension() as u64);
    put_u64(out, a.nnz() as u64);
    for &p in a.row_ptr() {
        put_u64(out, p as u64);
    }
    for &c in a.col_idx() {
        put_u64(out, c as u64);
    }
    put_f64s(out, a.values());
}

fn encode(
    set: &EigenPairSet,
    k: usize,
    pencil: Option<(&SparseSymmetricForm, &SparseSymmetricForm)>,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&set.meta.problem_hash);
    out.extend_from_slice(&set.meta.grid_hash);
    out.extend_from_slice(&set.meta.tol.to_le_bytes());
    put_u64(&mut out, k as u64);
    put_u64(&mut out, set.dimension() as u64);
    put_u64(&mut out, set.len() as u64);
    put_f64s(&mut out, &set.eigenvalues);
    put_f64s(&mut out, &set.sup_norms);
    put_f64s(&mut out, &set.residuals);
    for v in &set.vectors {
        put_f64s(&mut out, v);
    }
    match pencil {
        Some((a, b)) => {
            out.push(1);
            put_form(&mut out, a);
            put_form(&mut out, b);
        }
        None => out.push(0),
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let end = self.pos.checked_add(n).ok_or(CacheError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CacheError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CacheError> {
        let v = self.u64()?;
        // every counted item occupies at least one byte
        if v as usize > self.buf.len() {
            return Err(CacheError::Malformed(format!("count {v} exceeds file size")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CacheError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn hash(&mut self) -> Result<[u8; 32], CacheError> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    fn form(&mut self) -> Result<SparseSymmetricForm, CacheError> {
        let dim = self.len()?;
        let nnz = self.len()?;
        let row_ptr = (0..=dim).map(|_| self.len()).collect::<Result<Vec<_>, _>>()?;
        let col_idx = (0..nnz).map(|_| self.len()).collect::<Result<Vec<_>, _>>()?;
        let values = self.f64s(nnz)?;
        SparseSymmetricForm::from_csr(dim, row_ptr, col_idx, values)
            .map_err(|e| CacheError::Malformed(e.to_string()))
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<Decoded, CacheError> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CacheError::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(CacheError::ChecksumMismatch);
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CACHE_FORMAT_VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let problem_hash = r.hash()?;
    let grid_hash = r.hash()?;
    let tol = r.f64()?;
    let k = r.u64()? as usize;
    let dimension = r.len()?;
    let n = r.len()?;
    let eigenvalues = r.f64s(n)?;
    let sup_norms = r.f64s(n)?;
    let residuals = r.f64s(n)?;
    let vectors = (0..n).map(|_| r.f64s(dimension)).collect::<Result<Vec<_>, _>>()?;
    let has_pencil = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(CacheError::Malformed(format!("pencil flag {other}"))),
    };
    let pencil = if has_pencil { Some((r.form()?, r.form()?)) } else { None };
    if r.pos != body.len() {
        return Err(CacheError::Malformed("trailing bytes".into()));
    }
    let info = CacheEntryInfo {
        file: path.to_path_buf(),
        problem_hash,
        grid_hash,
        tol,
        k,
        dimension,
        n_pairs: n,
        has_pencil,
    };
    let set = EigenPairSet {
        eigenvalues,
        vectors,
        sup_norms,
        residuals,
        meta: EigenMeta { problem_hash, grid_hash, tol },
    };
    Ok(Decoded { info, set, pencil })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve_generalized, EigenOptions};

    fn sample() -> (SparseSymmetricForm, SparseSymmetricForm, EigenPairSet) {
        let a = SparseSymmetricForm::from_diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = SparseSymmetricForm::identity(4);
        let mut set = solve_generalized(&a, &b, 2, &EigenOptions::with_tol(1e-10)).unwrap();
        set.meta.grid_hash = [7; 32];
        (a, b, set)
    }

    #[test]
    fn round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::open(dir.path()).unwrap();
        let (a, b, set) = sample();
        assert!(cache.load(&set.meta.problem_hash, &set.meta.grid_hash, 2, 1e-10).unwrap().is_none());
        cache.store(&set, 2, Some((&a, &b))).unwrap();
        let back = cache.load(&set.meta.problem_hash, &set.meta.grid_hash, 2, 1e-10).unwrap().unwrap();
        assert_eq!(back, set);
        let (entries, bad) = cache.status().unwrap();
        assert_eq!(entries.len(), 1);
        assert!(bad.is_empty());
        assert!(entries[0].has_pencil);
        let report = cache.verify().unwrap();
        assert_eq!(report.quarantined(), 0);
        assert!(matches!(report.entries[0].1, VerifyOutcome::Ok { recomputed_residual: Some(_) }));
        assert_eq!(cache.clear().unwrap(), 1);
        assert_eq!(cache.status().unwrap().0.len(), 0);
    }

    #[test]
    fn corruption_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::open(dir.path()).unwrap();
        let (_, _, set) = sample();
        let path = cache.store(&set, 2, None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[100] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        let report = cache.verify().unwrap();
        assert_eq!(report.quarantined(), 1);
        assert!(!path.exists());
        assert!(cache.quarantine_dir().join(path.file_name().unwrap()).exists());
    }

    #[test]
    fn mismatched_pencil_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::open(dir.path()).unwrap();
        let (a, _, set) = sample();
        let other = SparseSymmetricForm::from_diagonal(&[1.0, 1.0, 1.0, 2.0]).unwrap();
        cache.store(&set, 2, Some((&a, &other))).unwrap();
        assert_eq!(cache.verify().unwrap().quarantined(), 1);
    }

    #[test]
    fn header_key_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::open(dir.path()).unwrap();
        let (_, _, set) = sample();
        let path = cache.store(&set, 2, None).unwrap();
        // pretend the same bytes were stored under a different key
        let alias = dir.path().join(EigenCache::key_name(&[1; 32], &[2; 32], 2, 1e-10));
        fs::copy(&path, &alias).unwrap();
        let err = cache.load(&[1; 32], &[2; 32], 2, 1e-10).unwrap_err();
        assert!(matches!(err, CacheError::KeyMismatch));
        assert!(!alias.exists());
    }
}
