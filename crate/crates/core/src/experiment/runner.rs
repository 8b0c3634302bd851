use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::fusion::{refine_from, IterationTrace};
use crate::grid::{Grid, Mask};
use crate::io;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::probability::GaussianDepthMap;
use crate::synthetic::make_window;

/// In-memory outcome of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub prior: GaussianDepthMap,
    pub fused: GaussianDepthMap,
    pub gt: Grid<f64>,
    pub region: Option<Mask>,
    pub trace: IterationTrace,
    /// `prior:all`, `fused:all`, then `prior:<kind>`, `fused:<kind>`,
    /// `prior:outside`, `fused:outside` when a corruption is present.
    pub reports: Vec<MetricsReport>,
}

impl ExperimentResult {
    pub fn report(&self, label: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.region_label == label)
    }

    pub fn prior_report(&self) -> &MetricsReport {
        &self.reports[0]
    }

    pub fn fused_report(&self) -> &MetricsReport {
        &self.reports[1]
    }

    /// `(prior, fused)` metrics over the corrupted region.
    pub fn region_reports(&self) -> Option<(&MetricsReport, &MetricsReport)> {
        let kind = self.config.corruption.as_ref()?.label();
        Some((
            self.report(&format!("prior:{kind}"))?,
            self.report(&format!("fused:{kind}"))?,
        ))
    }

    pub fn metrics_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        MetricsReport::write_csv(&self.reports, &mut buf)?;
        Ok(buf)
    }
}

/// Builds the window, runs the configured arm and evaluates; no file output.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let fusion = config.effective_fusion();
    let coeffs = fusion.coefficients()?;
    let synth = make_window(
        &config.scene,
        &config.camera,
        &config.trajectory,
        config.corruption.as_ref(),
        &config.effective_prior(),
    )?;
    let prior = synth.window.reference().prior.clone();
    let (fused, trace) = refine_from(&synth.window, &prior, &fusion, &coeffs, Some(&synth.gt))?;

    let cap = config.depth_cap;
    let mut reports = vec![
        compute_metrics(&prior, &synth.gt, None, cap, "prior:all")?,
        compute_metrics(&fused, &synth.gt, None, cap, "fused:all")?,
    ];
    if let (Some(region), Some(c)) = (&synth.region, &config.corruption) {
        let outside = region.complement();
        let kind = c.label();
        for (mask, name) in [(region, kind), (&outside, "outside")] {
            if mask.count() == 0 {
                continue;
            }
            reports.push(compute_metrics(
                &prior,
                &synth.gt,
                Some(mask),
                cap,
                &format!("prior:{name}"),
            )?);
            reports.push(compute_metrics(
                &fused,
                &synth.gt,
                Some(mask),
                cap,
                &format!("fused:{name}"),
            )?);
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        prior,
        fused,
        gt: synth.gt,
        region: synth.region,
        trace,
        reports,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    arm: &'a str,
    overrides: &'a [String],
    outputs: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Writes every artifact of `result` into `dir`. Returns the files written.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path, overrides: &[String]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    io::write_gaussian_map(dir, "final", &result.fused)?;
    io::write_gaussian_map(dir, "prior", &result.prior)?;
    let (a, b) = io::gaussian_map_paths(dir, "final");
    let (c, d) = io::gaussian_map_paths(dir, "prior");
    written.extend([a, b, c, d]);

    let gt_path = dir.join("gt.pfm");
    io::save_pfm(&gt_path, &result.gt)?;
    written.push(gt_path);
    let error: Grid<f64> = Grid::from_vec(
        result.gt.width(),
        result.gt.height(),
        result
            .fused
            .mu()
            .as_slice()
            .iter()
            .zip(result.gt.as_slice())
            .map(|(m, g)| m - g)
            .collect(),
    )?;
    let err_path = dir.join("error.pfm");
    io::save_pfm(&err_path, &error)?;
    written.push(err_path);

    let trace_dir = dir.join("trace");
    result.trace.export(&trace_dir)?;
    written.push(trace_dir);

    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, result.metrics_csv()?)?;
    written.push(metrics_path);

    if let Some(region) = &result.region {
        let p = dir.join("mask.pgm");
        io::save_pgm_mask(&p, region)?;
        written.push(p);
    }

    if result.config.png {
        let lo = result.gt.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = result.gt.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s_hi = result.prior.sigma().as_slice().iter().copied().fold(0.0, f64::max);
        let e_hi = error.as_slice().iter().map(|e| e.abs()).fold(0.0, f64::max).max(1e-9);
        let abs_err = error.map(|e| e.abs());
        let pngs: [(&str, &Grid<f64>, f64, f64); 5] = [
            ("gt.png", &result.gt, lo, hi),
            ("prior_mu.png", result.prior.mu(), lo, hi),
            ("final_mu.png", result.fused.mu(), lo, hi),
            ("final_sigma.png", result.fused.sigma(), 0.0, s_hi),
            ("abs_error.png", &abs_err, 0.0, e_hi),
        ];
        for (name, grid, lo, hi) in pngs {
            let p = dir.join(name);
            io::save_png_colormap(&p, grid, lo, hi)?;
            written.push(p);
        }
    }

    let manifest_path = dir.join("manifest.json");
    let rel = |p: &PathBuf| p.strip_prefix(dir).unwrap_or(p).display().to_string();
    let mut outputs: Vec<String> = written.iter().map(rel).collect();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: result.config.seed,
        arm: result.config.arm.as_str(),
        overrides,
        outputs,
        config: &result.config,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(manifest_path);
    Ok(written)
}

/// Runs one experiment and writes its artifacts to `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &[])
}

/// As [`run_experiment`], recording command-line `overrides` in the manifest.
pub fn run_experiment_with(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentResult> {
    let result = execute(config)?;
    write_artifacts(&result, &config.output_dir, overrides)?;
    Ok(result)
}

/// One row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub prior: MetricsReport,
    pub fused: MetricsReport,
}

/// Runs `template` once per value of `axis` (shared seed), writing each run
/// to `<output_dir>/<axis>_<value>/` and the aggregate to `<output_dir>/sweep.csv`.
pub fn run_sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    let rows = sweep(template, axis, values, true)?;
    fs::create_dir_all(&template.output_dir)?;
    fs::write(template.output_dir.join("sweep.csv"), sweep_csv(axis, &rows)?)?;
    Ok(rows)
}

/// Sweep without touching the file system unless `write_runs` is set.
pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64], write_runs: bool) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&value| {
            let mut config = axis.apply(template, value)?;
            config.output_dir = template.output_dir.join(format!("{axis}_{value}"));
            let result = if write_runs {
                run_experiment_with(&config, &[format!("{axis}={value}")])?
            } else {
                execute(&config)?
            };
            Ok(SweepRow {
                value,
                prior: result.prior_report().clone(),
                fused: result.fused_report().clone(),
            })
        })
        .collect()
}

/// `axis,value,<metrics columns of the fused map>`.
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["axis", "value"];
        header.extend(MetricsReport::CSV_HEADER);
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![axis.as_str().to_string(), r.value.to_string()];
            rec.extend(r.fused.csv_record());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(buf)
}
