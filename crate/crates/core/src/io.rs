//! Files in and out: dataset CSV, result JSON, arrow and kernel CSV dumps,
//! the TOML run configuration, run manifests and the quantile cache.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design_density::DesignConfig;
use crate::error::{Error, Result};
use crate::geometry::{ModelKind, RawDataset};
use crate::kernels::{GridSpec, KernelTable};
use crate::limit_sim::QuantileResult;
use crate::testing::{Arrow, Procedure, TestDecision, TestOutcome, Verdict};

/// Env var with the default worker count.
pub const THREADS_ENV: &str = "RCM_THREADS";

/// Shortest round-trip decimal form, so load → save reproduces the bytes.
fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_dataset<W: Write>(w: W, raw: &RawDataset) -> Result<()> {
    let d = raw.dim;
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    if raw.beta.is_some() {
        header.extend((1..=d).map(|i| format!("beta{i}")));
    }
    wr.write_record(&header)?;
    for i in 0..raw.len() {
        let mut rec: Vec<String> = raw.row(i).iter().map(|&x| num(x)).collect();
        rec.push(num(raw.y[i]));
        if let Some(b) = raw.beta_row(i) {
            rec.extend(b.iter().map(|&x| num(x)));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, raw: &RawDataset) -> Result<()> {
    write_dataset(fs::File::create(path)?, raw)
}

/// Reads `x1,…,xd,y[,beta1,…,betad]`. With `intercept` the x1 column must be
/// identically one. Row numbers in errors count data rows from 1.
pub fn read_dataset<R: Read>(r: R, intercept: bool) -> Result<RawDataset> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::config("header", "no y column"))?;
    let d = y_col;
    if d < 2 {
        return Err(Error::config("header", "need at least two regressor columns x1, x2"));
    }
    for (i, h) in header[..d].iter().enumerate() {
        if *h != format!("x{}", i + 1) {
            return Err(Error::config("header", format!("column {} is {h:?}, expected x{}", i + 1, i + 1)));
        }
    }
    let extra = &header[d + 1..];
    let has_beta = match extra.len() {
        0 => false,
        k if k == d && extra.iter().enumerate().all(|(i, h)| *h == format!("beta{}", i + 1)) => true,
        _ => {
            return Err(Error::config(
                "header",
                format!("columns after y must be beta1..beta{d} or nothing, got {extra:?}"),
            ))
        }
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut beta = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Data { row, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Data { row, msg: format!("{} fields, expected {}", rec.len(), header.len()) });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data { row, msg: format!("column {}: cannot parse {f:?}", header[j]) })
            })
            .collect::<Result<Vec<f64>>>()?;
        if intercept && vals[0] != 1.0 {
            return Err(Error::Data { row, msg: format!("x1 = {} but the intercept model needs x1 = 1", vals[0]) });
        }
        x.extend_from_slice(&vals[..d]);
        y.push(vals[d]);
        if has_beta {
            beta.extend_from_slice(&vals[d + 1..]);
        }
    }
    let model = if intercept { ModelKind::Intercept } else { ModelKind::NoIntercept };
    let mut raw = RawDataset::new(d, x, y, model)?;
    if has_beta {
        raw.beta = Some(beta);
    }
    Ok(raw)
}

pub fn load_dataset(path: &Path, intercept: bool) -> Result<RawDataset> {
    let f = fs::File::open(path).map_err(|e| Error::config("data", format!("{}: {e}", path.display())))?;
    read_dataset(f, intercept)
}

/// Result JSON of one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub procedure: Procedure,
    pub alpha: f64,
    pub family: Vec<TestDecision>,
    pub verdict: Verdict,
    pub quantile: QuantileResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
}

impl ResultDocument {
    pub fn new(outcome: TestOutcome, seed: u64, config_hash: String) -> Self {
        Self {
            procedure: outcome.procedure,
            alpha: outcome.alpha,
            family: outcome.family,
            verdict: outcome.verdict,
            quantile: outcome.quantile,
            diagnostics: outcome.diagnostics,
            seed,
            config_hash,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = fs::File::open(path).map_err(|e| Error::config("path", format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(f)?)
}

/// `t_x,t_y,v_x,v_y` rows, one per rejected decrease.
pub fn write_arrows<W: Write>(w: W, arrows: &[Arrow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_x", "t_y", "v_x", "v_y"])?;
    for a in arrows {
        if a.t.len() != 2 {
            return Err(Error::config("d", "arrows are two-dimensional"));
        }
        wr.write_record([num(a.t[0]), num(a.t[1]), num(a.v[0]), num(a.v[1])])?;
    }
    wr.flush()?;
    Ok(())
}

/// `u,psi` on the table grid.
pub fn write_kernel<W: Write>(w: W, kt: &KernelTable) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["u", "psi"])?;
    for (u, p) in kt.abscissae().into_iter().zip(kt.values()) {
        wr.write_record([num(u), num(*p)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Bandwidth entry: a number or the word "auto".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Value(f64),
    Word(String),
}

impl Bandwidth {
    fn resolve(&self, key: &str) -> Result<Option<f64>> {
        match self {
            Bandwidth::Value(h) if *h > 0.0 => Ok(Some(*h)),
            Bandwidth::Value(h) => Err(Error::config(key, format!("bandwidth must be positive, got {h}"))),
            Bandwidth::Word(w) if w == "auto" => Ok(None),
            Bandwidth::Word(w) => Err(Error::config(key, format!("expected a number or \"auto\", got {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileKind {
    Theoretical,
    Calibrated,
}

/// Run configuration. Every field is optional so that a file and the
/// command line can be layered; see `overlay`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    /// Worker threads; falls back to RCM_THREADS, then all cores.
    pub threads: Option<usize>,
    pub data: Option<PathBuf>,
    pub intercept: Option<bool>,
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub h_star: Option<Bandwidth>,
    pub h_plus: Option<Bandwidth>,
    pub kernel: Option<GridSpec>,
    pub quantile: Option<QuantileKind>,
    pub n_mc: Option<usize>,
    pub n_reps: Option<usize>,
    pub null_scenario: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub b0: Option<Vec<f64>>,
    pub scales: Option<Vec<f64>>,
    pub a1: Option<Vec<f64>>,
    pub a2: Option<Vec<f64>>,
    pub h0: Option<f64>,
    pub width: Option<f64>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay_fields!(
            self, top, seed, alpha, threads, data, intercept, scenario, n, h_star, h_plus, kernel, quantile, n_mc,
            n_reps, null_scenario, cache_dir, b0, scales, a1, a2, h0, width, out
        )
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::config("seed", "a seed is required"))
    }

    pub fn alpha(&self) -> Result<f64> {
        let a = self.alpha.unwrap_or(0.05);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::config("alpha", format!("level must lie in (0, 1), got {a}")));
        }
        Ok(a)
    }

    pub fn design(&self) -> Result<DesignConfig> {
        let h_star = match &self.h_star {
            Some(b) => b.resolve("h_star")?,
            None => None,
        };
        let h_plus = match &self.h_plus {
            Some(b) => b.resolve("h_plus")?,
            None => None,
        };
        Ok(DesignConfig { h_star, h_plus, ..Default::default() })
    }

    pub fn kernel_table(&self, d: usize) -> Result<KernelTable> {
        match self.kernel {
            Some(g) => crate::kernels::build_kernel_table(d, g),
            None => KernelTable::new(d),
        }
    }

    /// Checks shared by all subcommands: seed present, α in range,
    /// referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.alpha()?;
        self.design()?;
        if let Some(p) = &self.data {
            if !p.is_file() {
                return Err(Error::config("data", format!("{} does not exist", p.display())));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "need at least one thread"));
        }
        Ok(())
    }

    /// Content hash of everything that can change results: the
    /// configuration without thread count and output locations, plus the
    /// bytes of the input dataset.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let canonical = RunConfig { threads: None, out: None, cache_dir: None, data: None, ..self.clone() };
        h.update(serde_json::to_vec(&canonical)?);
        if let Some(p) = &self.data {
            h.update(fs::read(p)?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Worker count from the flag/config value, then RCM_THREADS, then all cores.
pub fn resolve_threads(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

/// Written next to every result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// SHA-256 over a sequence of byte strings, each length-prefixed.
pub fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn f64_bytes(xs: &[f64]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Quantiles stored as JSON files named by a content hash of everything
/// they depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCache {
    pub dir: PathBuf,
}

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<QuantileResult> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, q: &QuantileResult) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        // write then rename so concurrent readers never see a partial file
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        fs::write(&tmp, to_json(q)?)?;
        fs::rename(tmp, self.path(key))?;
        Ok(())
    }

    pub fn get_or_compute(&self, key: &str, f: impl FnOnce() -> Result<QuantileResult>) -> Result<QuantileResult> {
        if let Some(q) = self.get(key) {
            return Ok(q);
        }
        let q = f()?;
        self.put(key, &q)?;
        Ok(q)
    }
}
