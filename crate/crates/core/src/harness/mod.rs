//! Seeded Monte Carlo sweeps over channel model, probing scheme, kernel and SNR.
//!
//! Within a trial every estimator sees the same channel draw and the same
//! receiver-noise stream. Seeds are derived from the base seed, the model
//! kind, the trial index and the SNR value, so runs over sub-grids reproduce
//! the corresponding slice of a larger run.

pub mod config;
pub mod output;

use rayon::prelude::*;

use crate::baselines::{estimate_ls, observe_full, MmseFilter};
use crate::channel_models::{default_coupling, vectorized_covariance, ChannelMatrix, ChannelModel, ModelKind};
use crate::error::{Error, Result};
use crate::gpr::{fit, predict, reconstruct, FitOptions, OptimizerConfig};
use crate::kernels::{Hyper, KernelFamily, KernelSpec};
use crate::metrics::{coverage_tally, error_samples, mi_fidelity, mutual_information, relative_mi, CoverageTally, ErrorCloud};
use crate::pilot_probing::{build_pilot_matrix, extract_training_set, make_scheme, observe, Case, ProbingScheme};
use crate::rng::derive_path;
use crate::spatial_correlation::{build_covariance, ArrayGeometry};

pub use config::ExperimentConfig;
pub use output::{format_float, write_outputs, OutputFiles};

pub const TRUTH: &str = "truth";
pub const LS: &str = "ls";
pub const MMSE: &str = "mmse";
pub const GPR: &str = "gpr";
/// Scheme label of the full-pilot baselines.
pub const FULL: &str = "full";
pub const NONE: &str = "none";

pub const MI_BITS: &str = "mi_bits";
pub const NMSE: &str = "nmse";
pub const COVERED_JOINT: &str = "covered_joint";
pub const COVERED_RE: &str = "covered_re";
pub const COVERED_IM: &str = "covered_im";
pub const COVERED_MODULUS: &str = "covered_modulus";
pub const N_ASSESSED: &str = "n_assessed";
pub const THETA_GAMMA: &str = "theta_gamma";
pub const THETA_LENGTHSCALE: &str = "theta_lengthscale";
pub const THETA_ALPHA: &str = "theta_alpha";

const STREAM_COUPLING: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_FIT: u64 = 4;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CSI_GPR_THREADS";

/// One scalar outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub model: &'static str,
    pub scheme: &'static str,
    pub kernel: &'static str,
    pub estimator: &'static str,
    pub snr_db: f64,
    /// 1-based.
    pub trial: usize,
    pub metric: &'static str,
    pub value: f64,
}

impl ResultRow {
    fn sort_key(&self) -> impl Ord + '_ {
        (
            self.trial,
            self.scheme,
            self.kernel,
            OrdF64(self.snr_db),
            self.model,
            self.estimator,
            self.metric,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Per-trial complex errors at unobserved entries, at the report SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSampleSet {
    pub model: &'static str,
    pub scheme: &'static str,
    pub kernel: &'static str,
    pub trial: usize,
    pub samples: Vec<(f64, f64)>,
}

/// Everything produced by a sweep, in deterministic order.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub error_samples: Vec<ErrorSampleSet>,
}

/// One line of the pilot-length / MI table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub estimator: &'static str,
    pub pilot_length: usize,
    pub pilot_saving_pct: f64,
    pub relative_mi_pct: f64,
    pub mi_fidelity_pct: f64,
}

impl ResultSet {
    /// Trial-averaged value of one series.
    pub fn mean(&self, model: &str, scheme: &str, kernel: &str, estimator: &str, snr_db: f64, metric: &str) -> Option<f64> {
        let (sum, n) = self
            .rows
            .iter()
            .filter(|r| {
                r.model == model
                    && r.scheme == scheme
                    && r.kernel == kernel
                    && r.estimator == estimator
                    && r.snr_db == snr_db
                    && r.metric == metric
            })
            .fold((0.0, 0usize), |(s, n), r| (s + r.value, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    fn require_mean(&self, model: &str, scheme: &str, kernel: &str, estimator: &str, snr_db: f64, metric: &str) -> Result<f64> {
        self.mean(model, scheme, kernel, estimator, snr_db, metric).ok_or_else(|| {
            Error::MissingSeries(format!("{model}/{scheme}/{kernel}/{estimator} {metric} at {snr_db} dB"))
        })
    }

    /// Trial-averaged MI of an estimator (`truth`, `ls`, `mmse`) or a GP scheme.
    pub fn mean_mi(&self, model: ModelKind, series: Series, snr_db: f64) -> Result<f64> {
        let (scheme, kernel, estimator) = series.labels();
        self.require_mean(model.name(), scheme, kernel, estimator, snr_db, MI_BITS)
    }

    /// Coverage counts pooled over trials.
    pub fn coverage(&self, model: ModelKind, scheme: Case, kernel: KernelFamily, snr_db: f64) -> Result<CoverageTally> {
        let mut t = CoverageTally::default();
        let mut seen = false;
        for r in self.rows.iter().filter(|r| {
            r.model == model.name()
                && r.scheme == scheme.name()
                && r.kernel == kernel.name()
                && r.estimator == GPR
                && r.snr_db == snr_db
        }) {
            let v = r.value as usize;
            match r.metric {
                COVERED_JOINT => t.joint += v,
                COVERED_RE => t.re += v,
                COVERED_IM => t.im += v,
                COVERED_MODULUS => t.modulus += v,
                N_ASSESSED => {
                    t.count += v;
                    seen = true;
                }
                _ => {}
            }
        }
        if !seen {
            return Err(Error::MissingSeries(format!(
                "coverage for {}/{scheme}/{kernel} at {snr_db} dB",
                model.name()
            )));
        }
        Ok(t)
    }

    /// Errors at unobserved entries pooled over trials (report SNR only).
    pub fn pooled_errors(&self, model: ModelKind, scheme: Case, kernel: KernelFamily) -> Vec<(f64, f64)> {
        self.error_samples
            .iter()
            .filter(|s| s.model == model.name() && s.scheme == scheme.name() && s.kernel == kernel.name())
            .flat_map(|s| s.samples.iter().copied())
            .collect()
    }

    pub fn error_cloud(&self, model: ModelKind, scheme: Case, kernel: KernelFamily) -> Result<ErrorCloud> {
        ErrorCloud::from_samples(self.pooled_errors(model, scheme, kernel))
    }

    /// Model used for the pilot/MI table: Weichselberger when present.
    pub fn table_model(&self) -> ModelKind {
        if self.config.models.contains(&ModelKind::Weichselberger) {
            ModelKind::Weichselberger
        } else {
            self.config.models[0]
        }
    }

    /// Kernel used for the pilot/MI table: rational quadratic when present.
    pub fn table_kernel(&self) -> KernelFamily {
        if self.config.kernels.contains(&KernelFamily::RationalQuadratic) {
            KernelFamily::RationalQuadratic
        } else {
            self.config.kernels[0]
        }
    }

    /// Pilot length, pilot saving and MI relative to the true channel at the
    /// report SNR, for each probing case followed by LS and MMSE.
    pub fn table2(&self) -> Result<Vec<Table2Row>> {
        let cfg = &self.config;
        let snr = cfg.report_snr_db;
        let model = self.table_model();
        let kernel = self.table_kernel();
        let truth = self.mean_mi(model, Series::Truth, snr)?;
        let nt = cfg.n_tx;
        let row = |estimator: &'static str, pilot_length: usize, mi: f64| -> Result<Table2Row> {
            Ok(Table2Row {
                estimator,
                pilot_length,
                pilot_saving_pct: 100.0 * (nt - pilot_length) as f64 / nt as f64,
                relative_mi_pct: relative_mi(mi, truth)?,
                mi_fidelity_pct: mi_fidelity(mi, truth)?,
            })
        };
        let mut out = Vec::new();
        for &case in &cfg.schemes {
            let scheme = make_scheme(case, cfg.n_rx, cfg.n_tx)?;
            let mi = self.mean_mi(model, Series::Gpr(case, kernel), snr)?;
            out.push(row(case.name(), scheme.pilot_length(), mi)?);
        }
        out.push(row(LS, nt, self.mean_mi(model, Series::Ls, snr)?)?);
        out.push(row(MMSE, nt, self.mean_mi(model, Series::Mmse, snr)?)?);
        Ok(out)
    }

    /// Keys of the (scheme, kernel) grid actually present.
    pub fn gp_series(&self) -> Vec<(Case, KernelFamily)> {
        let cfg = &self.config;
        cfg.schemes
            .iter()
            .flat_map(|&c| cfg.kernels.iter().map(move |&k| (c, k)))
            .collect()
    }
}

/// An MI series: the true channel, a baseline, or GP reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Truth,
    Ls,
    Mmse,
    Gpr(Case, KernelFamily),
}

impl Series {
    /// `(scheme, kernel, estimator)` labels used in result rows.
    pub fn labels(self) -> (&'static str, &'static str, &'static str) {
        match self {
            Series::Truth => (NONE, NONE, TRUTH),
            Series::Ls => (FULL, NONE, LS),
            Series::Mmse => (FULL, NONE, MMSE),
            Series::Gpr(c, k) => (c.name(), k.name(), GPR),
        }
    }
}

fn model_index(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Kronecker => 0,
        ModelKind::Weichselberger => 1,
    }
}

fn case_index(case: Case) -> u64 {
    Case::ALL.iter().position(|&c| c == case).unwrap_or(0) as u64
}

fn kernel_index(kernel: KernelFamily) -> u64 {
    KernelFamily::ALL.iter().position(|&k| k == kernel).unwrap_or(0) as u64
}

/// `σ² = 1/ρ` for unit-power channels.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Builds the channel model for `kind` from the configured array geometry.
pub fn build_model(config: &ExperimentConfig, kind: ModelKind) -> Result<ChannelModel> {
    let r_tx = build_covariance(&ArrayGeometry::ula(config.n_tx)?)?;
    let r_rx = build_covariance(&ArrayGeometry::ula(config.n_rx)?)?;
    match kind {
        ModelKind::Kronecker => Ok(ChannelModel::kronecker(r_tx, r_rx)),
        ModelKind::Weichselberger => {
            let omega = default_coupling(&r_tx, &r_rx, config.richness, derive_path(config.seed, &[STREAM_COUPLING]))?;
            ChannelModel::weichselberger(r_tx, r_rx, omega)
        }
    }
}

pub fn channel_seed(config: &ExperimentConfig, kind: ModelKind, trial: usize) -> u64 {
    derive_path(config.seed, &[STREAM_CHANNEL, model_index(kind), trial as u64])
}

pub fn noise_seed(config: &ExperimentConfig, kind: ModelKind, trial: usize, snr_db: f64) -> u64 {
    derive_path(config.seed, &[STREAM_NOISE, model_index(kind), trial as u64, snr_db.to_bits()])
}

struct ModelContext {
    kind: ModelKind,
    model: ChannelModel,
    filters: Vec<MmseFilter>,
    schemes: Vec<ProbingScheme>,
}

struct TrialOutput {
    rows: Vec<ResultRow>,
    errors: Vec<ErrorSampleSet>,
}

fn squared_error(a: &ChannelMatrix, b: &ChannelMatrix) -> f64 {
    (a.entries() - b.entries()).iter().map(|z| z.norm_sqr()).sum()
}

fn run_trial(cfg: &ExperimentConfig, ctx: &ModelContext, trial: usize) -> Result<TrialOutput> {
    let model = ctx.kind.name();
    let h = ctx.model.sample(channel_seed(cfg, ctx.kind, trial));
    let power: f64 = h.entries().iter().map(|z| z.norm_sqr()).sum();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let rho = snr_linear(snr_db);
        let sigma2 = noise_variance(snr_db);
        // CN(0, σ²) noise puts σ²/2 on each of the real and imaginary parts.
        let component_noise = 0.5 * sigma2;
        let seed = noise_seed(cfg, ctx.kind, trial, snr_db);
        let mut push = |series: Series, metric: &'static str, value: f64| {
            let (scheme, kernel, estimator) = series.labels();
            rows.push(ResultRow {
                model,
                scheme,
                kernel,
                estimator,
                snr_db,
                trial,
                metric,
                value,
            });
        };
        push(Series::Truth, MI_BITS, mutual_information(&h, rho)?);

        let full = observe_full(&h, sigma2, seed)?;
        let ls = estimate_ls(&full)?;
        push(Series::Ls, MI_BITS, mutual_information(&ls, rho)?);
        push(Series::Ls, NMSE, squared_error(&ls, &h) / power);
        let mmse = ctx.filters[si].apply(&full.received)?;
        push(Series::Mmse, MI_BITS, mutual_information(&mmse, rho)?);
        push(Series::Mmse, NMSE, squared_error(&mmse, &h) / power);

        for scheme in &ctx.schemes {
            let case = scheme.case();
            let obs = observe(&h, scheme, sigma2, seed)?;
            let train = extract_training_set(&obs);
            let test = scheme.test_indices();
            for &family in &cfg.kernels {
                let options = FitOptions {
                    restarts: cfg.restarts,
                    optimizer: OptimizerConfig {
                        max_iters: cfg.max_iters,
                        grad_tol: cfg.grad_tol,
                        ..OptimizerConfig::default()
                    },
                    seed: derive_path(
                        cfg.seed,
                        &[STREAM_FIT, model_index(ctx.kind), trial as u64, snr_db.to_bits(), case_index(case), kernel_index(family)],
                    ),
                };
                let gp = fit(&KernelSpec::with_defaults(family), component_noise, &train.points, &train.real(), &train.imag(), &options)
                    .map_err(|e| e.context(format!("fit {}/{case}/{family} trial {trial} at {snr_db} dB", model)))?;
                let post = predict(&gp, &test)?;
                let est = reconstruct(&gp, &post, scheme)?;
                let tally = coverage_tally(&h, &post, &test)?;
                let series = Series::Gpr(case, family);
                push(series, MI_BITS, mutual_information(&est, rho)?);
                push(series, NMSE, squared_error(&est, &h) / power);
                push(series, COVERED_JOINT, tally.joint as f64);
                push(series, COVERED_RE, tally.re as f64);
                push(series, COVERED_IM, tally.im as f64);
                push(series, COVERED_MODULUS, tally.modulus as f64);
                push(series, N_ASSESSED, tally.count as f64);
                let k = gp.kernel();
                push(series, THETA_GAMMA, k.gamma());
                push(series, THETA_LENGTHSCALE, k.lengthscale());
                if family == KernelFamily::RationalQuadratic {
                    push(series, THETA_ALPHA, k.get(Hyper::Alpha));
                }
                if snr_db == cfg.report_snr_db {
                    errors.push(ErrorSampleSet {
                        model,
                        scheme: case.name(),
                        kernel: family.name(),
                        trial,
                        samples: error_samples(&h, &est, &test)?,
                    });
                }
            }
        }
    }
    Ok(TrialOutput { rows, errors })
}

fn prepare(cfg: &ExperimentConfig, kind: ModelKind) -> Result<ModelContext> {
    let model = build_model(cfg, kind)?;
    let pilots = build_pilot_matrix(cfg.n_tx, cfg.n_tx)?;
    let r_h = vectorized_covariance(&model);
    let filters = cfg
        .snr_grid_db
        .par_iter()
        .map(|&snr| MmseFilter::new(&r_h, &pilots, noise_variance(snr), cfg.n_rx))
        .collect::<Result<Vec<_>>>()?;
    let schemes = cfg
        .schemes
        .iter()
        .map(|&c| make_scheme(c, cfg.n_rx, cfg.n_tx))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelContext {
        kind,
        model,
        filters,
        schemes,
    })
}

/// Runs the sweep in memory. Any failing trial aborts the run.
pub fn simulate(config: &ExperimentConfig) -> Result<ResultSet> {
    config.validate()?;
    let contexts = config
        .models
        .iter()
        .map(|&kind| prepare(config, kind).map_err(|e| e.context(format!("setting up {}", kind.name()))))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|m| (1..=config.trials).map(move |t| (m, t)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(m, t)| {
            run_trial(config, &contexts[m], t).map_err(|e| e.context(format!("{} trial {t}", contexts[m].kind.name())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut error_sets = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        error_sets.extend(out.errors);
    }
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    error_sets.sort_by(|a, b| (a.model, a.scheme, a.kernel, a.trial).cmp(&(b.model, b.scheme, b.kernel, b.trial)));
    Ok(ResultSet {
        config: config.clone(),
        rows,
        error_samples: error_sets,
    })
}

/// Worker count requested through [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Simulates and writes every output file into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(ResultSet, OutputFiles)> {
    let threads = threads_from_env()?;
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| simulate(config))?,
        None => simulate(config)?,
    };
    let files = write_outputs(&results, &config.output_dir)?;
    Ok((results, files))
}
