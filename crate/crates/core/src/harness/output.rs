//! CSV emitters for the result set.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::ErrorCloud;

use super::{ResultSet, Series};

pub const RESULTS_HEADER: [&str; 8] = ["model", "scheme", "kernel", "estimator", "snr_db", "trial", "metric_name", "value"];

/// Shortest-form rendering with 9 significant digits (like C's `%.9g`).
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Shortest representation that parses back to exactly `v`.
pub fn format_exact(v: f64) -> String {
    v.to_string()
}

fn fixed2(v: f64) -> String {
    format!("{v:.2}")
}

struct Csv {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Csv {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e))?;
        writer.write_record(header).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, writer })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub table2: Option<PathBuf>,
    pub fig2_samples: Option<PathBuf>,
    pub fig2_ellipses: Option<PathBuf>,
    pub fig3: PathBuf,
    pub fig4: PathBuf,
    pub fig5: Option<PathBuf>,
    pub manifest: PathBuf,
}

pub fn write_results(results: &ResultSet, dir: &Path) -> Result<PathBuf> {
    let mut csv = Csv::create(dir.join("results.csv"), &RESULTS_HEADER)?;
    for r in &results.rows {
        csv.row([
            r.model.to_string(),
            r.scheme.to_string(),
            r.kernel.to_string(),
            r.estimator.to_string(),
            format_float(r.snr_db),
            r.trial.to_string(),
            r.metric.to_string(),
            format_float(r.value),
        ])?;
    }
    csv.finish()
}

pub fn write_table2(results: &ResultSet, dir: &Path) -> Result<PathBuf> {
    let rows = results.table2()?;
    let mut csv = Csv::create(
        dir.join("table2.csv"),
        &["estimator", "pilot_length", "pilot_saving_pct", "relative_mi_pct", "mi_fidelity_pct"],
    )?;
    for r in rows {
        csv.row([
            r.estimator.to_string(),
            r.pilot_length.to_string(),
            fixed2(r.pilot_saving_pct),
            format_float(r.relative_mi_pct),
            format_float(r.mi_fidelity_pct),
        ])?;
    }
    csv.finish()
}

/// Pooled error samples and their 95% ellipses at the report SNR, written
/// at full precision so the ellipses can be recomputed from the samples.
pub fn write_fig2(results: &ResultSet, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let mut samples = Csv::create(
        dir.join("fig2_samples.csv"),
        &["model", "scheme", "kernel", "trial", "err_re", "err_im"],
    )?;
    for set in &results.error_samples {
        for &(re, im) in &set.samples {
            samples.row([
                set.model.to_string(),
                set.scheme.to_string(),
                set.kernel.to_string(),
                set.trial.to_string(),
                format_exact(re),
                format_exact(im),
            ])?;
        }
    }
    let mut ellipses = Csv::create(
        dir.join("fig2_ellipses.csv"),
        &[
            "model", "scheme", "kernel", "snr_db", "n_samples", "center_re", "center_im", "cov_re_re", "cov_re_im",
            "cov_im_im", "semi_major", "semi_minor", "angle_rad", "area", "level",
        ],
    )?;
    for &model in &results.config.models {
        for (case, kernel) in results.gp_series() {
            let pooled = results.pooled_errors(model, case, kernel);
            if pooled.len() < 3 {
                continue;
            }
            let cloud = ErrorCloud::from_samples(pooled)?;
            let (a, b) = cloud.semi_axes();
            ellipses.row([
                model.name().to_string(),
                case.name().to_string(),
                kernel.name().to_string(),
                format_float(results.config.report_snr_db),
                cloud.samples.len().to_string(),
                format_exact(cloud.center[0]),
                format_exact(cloud.center[1]),
                format_exact(cloud.covariance[0][0]),
                format_exact(cloud.covariance[0][1]),
                format_exact(cloud.covariance[1][1]),
                format_exact(a),
                format_exact(b),
                format_exact(cloud.angle()),
                format_exact(cloud.area()),
                format_exact(cloud.level),
            ])?;
        }
    }
    Ok((samples.finish()?, ellipses.finish()?))
}

/// Mean MI versus SNR: the true channel, both baselines and every GP scheme/kernel.
pub fn write_fig3(results: &ResultSet, dir: &Path) -> Result<PathBuf> {
    let mut csv = Csv::create(dir.join("fig3.csv"), &["model", "series", "kernel", "snr_db", "mi_bits"])?;
    let cfg = &results.config;
    for &model in &cfg.models {
        let mut series = vec![Series::Truth, Series::Ls, Series::Mmse];
        series.extend(results.gp_series().into_iter().map(|(c, k)| Series::Gpr(c, k)));
        for s in series {
            let (scheme, kernel, estimator) = s.labels();
            let name = if estimator == super::GPR { scheme } else { estimator };
            for &snr in &cfg.snr_grid_db {
                csv.row([
                    model.name().to_string(),
                    name.to_string(),
                    kernel.to_string(),
                    format_float(snr),
                    format_float(results.mean_mi(model, s, snr)?),
                ])?;
            }
        }
    }
    csv.finish()
}

/// Mean MI versus SNR per probing case, one series per kernel.
pub fn write_fig4(results: &ResultSet, dir: &Path) -> Result<PathBuf> {
    let mut csv = Csv::create(dir.join("fig4.csv"), &["model", "scheme", "kernel", "snr_db", "mi_bits", "nmse"])?;
    let cfg = &results.config;
    for &model in &cfg.models {
        for (case, kernel) in results.gp_series() {
            for &snr in &cfg.snr_grid_db {
                let (scheme, kname, estimator) = Series::Gpr(case, kernel).labels();
                let nmse = results
                    .mean(model.name(), scheme, kname, estimator, snr, super::NMSE)
                    .ok_or_else(|| Error::MissingSeries(format!("nmse {scheme}/{kname}")))?;
                csv.row([
                    model.name().to_string(),
                    scheme.to_string(),
                    kname.to_string(),
                    format_float(snr),
                    format_float(results.mean_mi(model, Series::Gpr(case, kernel), snr)?),
                    format_float(nmse),
                ])?;
            }
        }
    }
    csv.finish()
}

/// Empirical coverage of the 95% intervals per model, case and kernel.
pub fn write_fig5(results: &ResultSet, dir: &Path) -> Result<PathBuf> {
    let mut csv = Csv::create(
        dir.join("fig5.csv"),
        &[
            "model", "scheme", "kernel", "snr_db", "nominal", "coverage_joint", "coverage_re", "coverage_im",
            "coverage_modulus", "count",
        ],
    )?;
    let snr = results.config.report_snr_db;
    for &model in &results.config.models {
        for (case, kernel) in results.gp_series() {
            let rep = results.coverage(model, case, kernel, snr)?.report();
            csv.row([
                model.name().to_string(),
                case.name().to_string(),
                kernel.name().to_string(),
                format_float(snr),
                format_float(rep.nominal),
                format_float(rep.empirical),
                format_float(rep.empirical_re),
                format_float(rep.empirical_im),
                format_float(rep.empirical_modulus),
                rep.count.to_string(),
            ])?;
        }
    }
    csv.finish()
}

fn write_manifest(results: &ResultSet, dir: &Path, written: &[&Path], notes: &[String]) -> Result<PathBuf> {
    let path = dir.join("run_manifest.txt");
    let mut text = format!("csi-gpr {}\n", env!("CARGO_PKG_VERSION"));
    text.push_str(&results.config.to_text());
    text.push_str(&format!(
        "table_model = {}\ntable_kernel = {}\n",
        results.table_model().name(),
        results.table_kernel().name()
    ));
    for f in written {
        text.push_str(&format!("file = {}\n", f.file_name().unwrap_or_default().to_string_lossy()));
    }
    for n in notes {
        text.push_str(&format!("note = {n}\n"));
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, the figure files, `table2.csv` and a run manifest.
///
/// Outputs tied to the report SNR (error clouds, coverage, the pilot/MI
/// table) are only written when that SNR is part of the sweep.
pub fn write_outputs(results: &ResultSet, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snr = results.config.report_snr_db;
    let has_report_snr = results.config.snr_grid_db.contains(&snr);
    let mut notes = Vec::new();

    let results_path = write_results(results, dir)?;
    let fig3 = write_fig3(results, dir)?;
    let fig4 = write_fig4(results, dir)?;
    let (table2, fig2, fig5) = if has_report_snr {
        let fig2 = write_fig2(results, dir)?;
        (Some(write_table2(results, dir)?), Some(fig2), Some(write_fig5(results, dir)?))
    } else {
        notes.push(format!(
            "report SNR {} dB not in sweep; table2, fig2 and fig5 not written",
            format_float(snr)
        ));
        (None, None, None)
    };

    let mut written: Vec<&Path> = vec![&results_path, &fig3, &fig4];
    if let Some(p) = &table2 {
        written.push(p);
    }
    if let Some((a, b)) = &fig2 {
        written.push(a);
        written.push(b);
    }
    if let Some(p) = &fig5 {
        written.push(p);
    }
    let manifest = write_manifest(results, dir, &written, &notes)?;
    let (fig2_samples, fig2_ellipses) = match fig2 {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(OutputFiles {
        results: results_path,
        table2,
        fig2_samples,
        fig2_ellipses,
        fig3,
        fig4,
        fig5,
        manifest,
    })
}
