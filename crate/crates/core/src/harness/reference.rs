//! Reference solutions and their on-disk cache.
//!
//! An entry is a pair of files named after the hex SHA-256 of the
//! canonical JSON key: `<hash>.bin` holds the coefficients as little-endian
//! `(re, im)` f64 pairs, `<hash>.json` the key, basis and checksum. Entries
//! that fail to parse or verify are recomputed and overwritten.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ReferenceMethod;
use crate::error::{Error, Result};
use crate::problem::{Model, ModelParams, ProblemSpec, StateVector};
use crate::sam::{MacroScheme, SamConfig, SamSolver};
use crate::spectral::BasisKey;
use crate::splitting::{Sequence, Splitter, SplittingOrder, SplittingScheme};

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "STROBO_CACHE_DIR";

const FORMAT_VERSION: u32 = 1;

/// Everything a reference solution depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceKey {
    pub model: Model,
    pub params: ModelParams,
    pub horizon: f64,
    pub method: ReferenceMethod,
    pub sequence: Sequence,
}

impl ReferenceKey {
    pub fn digest(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    key: ReferenceKey,
    basis: BasisKey,
    len: usize,
    sha256: String,
}

/// Directory of cached reference states.
#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$STROBO_CACHE_DIR` when set, otherwise `fallback`.
    pub fn from_env_or(fallback: Option<PathBuf>) -> Option<Self> {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or(fallback)
            .map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, key: &ReferenceKey) -> Result<(PathBuf, PathBuf)> {
        let h = key.digest()?;
        Ok((self.dir.join(format!("{h}.bin")), self.dir.join(format!("{h}.json"))))
    }

    /// The cached state, `Ok(None)` when absent, or a cache error when the
    /// entry exists but is unusable.
    pub fn load(&self, key: &ReferenceKey, basis: BasisKey) -> Result<Option<StateVector>> {
        let (bin, meta) = self.paths(key)?;
        if !bin.exists() && !meta.exists() {
            return Ok(None);
        }
        let bad = |reason: String| Error::Cache { path: meta.clone(), reason };
        let text = fs::read_to_string(&meta).map_err(|e| bad(e.to_string()))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if side.version != FORMAT_VERSION {
            return Err(bad(format!("format version {}", side.version)));
        }
        if &side.key != key || side.basis != basis || side.len != basis.len() {
            return Err(bad("key or basis does not match".into()));
        }
        let bytes = fs::read(&bin).map_err(|e| bad(e.to_string()))?;
        if hex::encode(Sha256::digest(&bytes)) != side.sha256 {
            return Err(bad("checksum mismatch".into()));
        }
        if bytes.len() != 16 * side.len {
            return Err(bad(format!("{} bytes for {} coefficients", bytes.len(), side.len)));
        }
        let coeffs = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        StateVector::new(basis, coeffs).map(Some)
    }

    pub fn store(&self, key: &ReferenceKey, state: &StateVector) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let (bin, meta) = self.paths(key)?;
        let mut bytes = Vec::with_capacity(16 * state.len());
        for c in state.coeffs() {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        let side = Sidecar {
            version: FORMAT_VERSION,
            key: key.clone(),
            basis: state.basis(),
            len: state.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        // Write to temporaries first so that a concurrent reader never sees
        // half an entry.
        let tmp_bin = bin.with_extension(format!("bin.{}.tmp", std::process::id()));
        let tmp_meta = meta.with_extension(format!("json.{}.tmp", std::process::id()));
        fs::write(&tmp_bin, &bytes)?;
        fs::write(&tmp_meta, serde_json::to_string_pretty(&side)?)?;
        fs::rename(&tmp_bin, &bin)?;
        fs::rename(&tmp_meta, &meta)?;
        Ok(())
    }
}

/// Physical state at `horizon` from the model's initial datum, computed
/// by `method`.
pub fn compute_reference(
    problem: &Arc<ProblemSpec>,
    method: ReferenceMethod,
    sequence: Sequence,
    horizon: f64,
) -> Result<StateVector> {
    let u0 = problem.initial_state();
    match method {
        ReferenceMethod::Splitting { h } => {
            // Round the step down so that it divides the horizon.
            let n = (horizon / h * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            Splitter::with_sequence(
                Arc::clone(problem),
                SplittingOrder::Yoshida4,
                horizon / n as f64,
                sequence,
            )
            .steps(&u0, n)
        }
        ReferenceMethod::Sam { eps_h, h, delta } => {
            let micro = SplittingScheme::with_step(SplittingOrder::Yoshida4, h, problem.period())?
                .sequence(sequence);
            let big_h = eps_h / problem.epsilon_eff();
            let mut cfg = SamConfig::new(Arc::clone(problem), micro, delta, MacroScheme::Rk4, big_h)?;
            cfg.horizon = Some(horizon);
            super::sam_physical_final(&SamSolver::new(cfg)?).map(|(u, _)| u)
        }
    }
}

/// Cached [`compute_reference`]. A corrupt entry is replaced.
pub fn reference_solution(
    problem: &Arc<ProblemSpec>,
    params: &ModelParams,
    method: ReferenceMethod,
    sequence: Sequence,
    horizon: f64,
    cache: Option<&ReferenceCache>,
) -> Result<StateVector> {
    let key = ReferenceKey { model: problem.model(), params: *params, horizon, method, sequence };
    if let Some(c) = cache {
        if let Ok(Some(u)) = c.load(&key, problem.basis_key()) {
            return Ok(u);
        }
    }
    let u = compute_reference(problem, method, sequence, horizon)?;
    if let Some(c) = cache {
        c.store(&key, &u)?;
    }
    Ok(u)
}
