//! Experiment configuration: defaults, `key = value` files and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel_models::ModelKind;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::pilot_probing::Case;

pub const DESK_SIZE: usize = 16;
pub const PAPER_SIZE: usize = 36;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub models: Vec<ModelKind>,
    /// Weight of the random part of the eigenmode coupling.
    pub richness: f64,
    pub schemes: Vec<Case>,
    pub kernels: Vec<KernelFamily>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// SNR at which error clouds, coverage and the pilot/MI table are reported.
    pub report_snr_db: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_rx: DESK_SIZE,
            n_tx: DESK_SIZE,
            models: vec![ModelKind::Kronecker, ModelKind::Weichselberger],
            richness: 0.5,
            schemes: Case::ALL.to_vec(),
            kernels: KernelFamily::ALL.to_vec(),
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 100,
            seed: 2024,
            restarts: 4,
            max_iters: 200,
            grad_tol: 1e-6,
            report_snr_db: 0.0,
            output_dir: PathBuf::from("results"),
        }
    }
}

fn config_err(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key} = {value}`: {why}"))
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| config_err(key, value, e))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config_err(key, value, "empty list"));
    }
    Ok(items)
}

/// `N` or `NxM` (receive x transmit).
pub fn parse_size(value: &str) -> Result<(usize, usize)> {
    let lower = value.trim().to_ascii_lowercase();
    match lower.split_once('x') {
        Some((r, t)) => Ok((parse_one("size", r)?, parse_one("size", t)?)),
        None => {
            let n = parse_one("size", &lower)?;
            Ok((n, n))
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "size" => (self.n_rx, self.n_tx) = parse_size(v)?,
            "n_rx" => self.n_rx = parse_one(key, v)?,
            "n_tx" => self.n_tx = parse_one(key, v)?,
            "model" | "models" => self.models = parse_list(key, v)?,
            "richness" => self.richness = parse_one(key, v)?,
            "scheme" | "schemes" => self.schemes = parse_list(key, v)?,
            "kernel" | "kernels" => self.kernels = parse_list(key, v)?,
            "snr" | "snr_db" => self.snr_grid_db = parse_list(key, v)?,
            "trials" => self.trials = parse_one(key, v)?,
            "seed" => self.seed = parse_one(key, v)?,
            "restarts" => self.restarts = parse_one(key, v)?,
            "max_iters" => self.max_iters = parse_one(key, v)?,
            "grad_tol" => self.grad_tol = parse_one(key, v)?,
            "report_snr_db" => self.report_snr_db = parse_one(key, v)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(v),
            "paper_scale" => {
                if parse_one::<bool>(key, v)? {
                    (self.n_rx, self.n_tx) = (PAPER_SIZE, PAPER_SIZE);
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| e.context(format!("line {}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_rx == 0 || self.n_tx == 0 {
            return fail("array sizes must be at least 1");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return fail("SNR grid must be nonempty and finite");
        }
        if self.models.is_empty() || self.schemes.is_empty() || self.kernels.is_empty() {
            return fail("models, schemes and kernels must be nonempty");
        }
        if !(0.0..=1.0).contains(&self.richness) {
            return fail("richness must lie in [0, 1]");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if !(self.grad_tol > 0.0) {
            return fail("grad_tol must be positive");
        }
        Ok(())
    }

    /// Serializes the configuration in the format read by [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        fn join<T: std::fmt::Display>(items: &[T]) -> String {
            items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let _ = writeln!(s, "size = {}x{}", self.n_rx, self.n_tx);
        let _ = writeln!(s, "models = {}", self.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "richness = {}", self.richness);
        let _ = writeln!(s, "schemes = {}", join(&self.schemes));
        let _ = writeln!(s, "kernels = {}", join(&self.kernels));
        let _ = writeln!(s, "snr_db = {}", join(&self.snr_grid_db));
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "restarts = {}", self.restarts);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "grad_tol = {:e}", self.grad_tol);
        let _ = writeln!(s, "report_snr_db = {}", self.report_snr_db);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }
}
