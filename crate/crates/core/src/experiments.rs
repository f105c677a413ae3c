//! The reproduction harness: noise-grid plans, multi-seed averaging,
//! gamma sweeps, and deterministic result emission.
//!
//! A plan plus a master seed fully determines every output byte.
//! Per-repetition seeds come from `run_seed(master, cell, rep)` where
//! the cell index covers (noise setting, gamma) but not the algorithm,
//! so algorithms are compared on shared exploration and noise draws.

use crate::bandit_feedback::NoiseRates;
use crate::datasets::Dataset;
use crate::error::{CoreError, DataError};
use crate::learners::{
    run_banditron, run_rcine, run_rcnbf, run_rcnbf_capturing, LearnerConfig, RunMetrics,
};
use crate::linear_model::{run_perceptron, Label};
use crate::nrest::{EstimationProfile, FeedbackRecord, NrestEstimator};
use crate::seeding::{run_seed, substream, STREAM_SHUFFLE};
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// The algorithms the harness can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Perceptron,
    Banditron,
    Rcnbf,
    Rcine,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Perceptron => "perceptron",
            Algorithm::Banditron => "banditron",
            Algorithm::Rcnbf => "rcnbf",
            Algorithm::Rcine => "rcine",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "perceptron" => Some(Algorithm::Perceptron),
            "banditron" => Some(Algorithm::Banditron),
            "rcnbf" => Some(Algorithm::Rcnbf),
            "rcine" => Some(Algorithm::Rcine),
            _ => None,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A full experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub dataset_name: String,
    pub algorithms: Vec<Algorithm>,
    pub noise_settings: Vec<(f64, f64)>,
    pub gamma_grid: Vec<f64>,
    /// Independent repetitions per cell.
    pub seeds: usize,
    /// Trial cap; runs stop at the dataset size if smaller.
    pub trials: usize,
    /// RCINE re-estimation window.
    pub buffer_period: usize,
    pub master_seed: u64,
    /// Number of log-spaced trial indices recorded per curve.
    pub record_points: usize,
    /// Estimator settings for RCINE cells.
    pub estimation_profile: EstimationProfile,
}

impl ExperimentPlan {
    /// The default grid: the five noise settings plus the intermediate
    /// symmetric case, ten repetitions, desk-scale horizon.
    pub fn new(dataset_name: &str) -> Self {
        ExperimentPlan {
            dataset_name: dataset_name.to_string(),
            algorithms: vec![Algorithm::Banditron, Algorithm::Rcnbf],
            noise_settings: vec![
                (0.0, 0.0),
                (0.15, 0.15),
                (0.25, 0.25),
                (0.4, 0.2),
                (0.2, 0.4),
                (0.4, 0.4),
            ],
            gamma_grid: vec![0.005, 0.01, 0.02, 0.04, 0.08, 0.15, 0.3, 0.45],
            seeds: 10,
            trials: 10_000,
            buffer_period: 10_000,
            master_seed: 0,
            record_points: 50,
            estimation_profile: EstimationProfile::synsep(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.algorithms.is_empty() {
            return Err(CoreError::param("algorithms", "empty set"));
        }
        if self.gamma_grid.is_empty() {
            return Err(CoreError::param("gamma_grid", "empty grid"));
        }
        if self.noise_settings.is_empty() {
            return Err(CoreError::param("noise_settings", "empty list"));
        }
        for &(r0, r1) in &self.noise_settings {
            NoiseRates::new(r0, r1)?;
        }
        if self.seeds == 0 {
            return Err(CoreError::param("seeds", "need at least one repetition"));
        }
        Ok(())
    }

    /// The log-spaced 1-based trial indices recorded for a horizon.
    pub fn record_grid(&self, trials: usize) -> Vec<usize> {
        log_spaced_indices(trials, self.record_points)
    }
}

/// Up to `points` log-spaced 1-based indices ending at `trials`.
pub fn log_spaced_indices(trials: usize, points: usize) -> Vec<usize> {
    if trials == 0 || points == 0 {
        return Vec::new();
    }
    let hi = (trials as f64).log10();
    let mut out: Vec<usize> = (0..points)
        .map(|i| {
            let exp = hi * i as f64 / (points.max(2) - 1) as f64;
            (10f64.powf(exp).round() as usize).clamp(1, trials)
        })
        .collect();
    out.dedup();
    out
}

/// One cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub rho0: f64,
    pub rho1: f64,
    pub gamma: f64,
}

impl CellKey {
    /// Deterministic file stem for emitted CSVs.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_r0-{}_r1-{}_g-{}",
            self.algorithm, self.rho0, self.rho1, self.gamma
        )
    }
}

/// Aggregated curves for one cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub record_trials: Vec<usize>,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
    pub per_seed_final: Vec<f64>,
    /// Diagnostic when the cell aborted; the other cells still ran.
    pub failure: Option<String>,
}

/// All cells of a finished plan.
#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellResult>,
}

impl AggregateResult {
    /// The gamma with the lowest final mean error for an algorithm and
    /// noise setting; ties go to the smaller gamma (grid order).
    pub fn best_gamma(&self, algorithm: Algorithm, rho0: f64, rho1: f64) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| {
                c.failure.is_none()
                    && c.key.algorithm == algorithm
                    && c.key.rho0 == rho0
                    && c.key.rho1 == rho1
            })
            .min_by(|a, b| a.final_mean.total_cmp(&b.final_mean))
            .map(|c| c.key.gamma)
    }
}

fn run_cell_once(
    dataset: &Dataset,
    plan: &ExperimentPlan,
    key: &CellKey,
    seed: u64,
) -> Result<RunMetrics, CoreError> {
    let trials = plan.trials.min(dataset.len());
    let mut shuffle = substream(seed, STREAM_SHUFFLE);
    let order = dataset.shuffled(&mut shuffle);
    let stream = order.into_iter().take(trials);
    let rates = NoiseRates::new(key.rho0, key.rho1)?;
    match key.algorithm {
        Algorithm::Perceptron => Ok(run_perceptron(stream, dataset.classes, dataset.dims).metrics),
        Algorithm::Banditron => Ok(run_banditron(
            stream,
            dataset.classes,
            dataset.dims,
            key.gamma,
            Some(&rates),
            seed,
        )?
        .metrics),
        Algorithm::Rcnbf => {
            let config = LearnerConfig {
                gamma: key.gamma,
                rates,
                buffer_period: plan.buffer_period,
                classes: dataset.classes,
                dims: dataset.dims,
            };
            Ok(run_rcnbf(stream, &config, seed)?.metrics)
        }
        Algorithm::Rcine => {
            let config = LearnerConfig {
                gamma: key.gamma,
                rates,
                buffer_period: plan.buffer_period,
                classes: dataset.classes,
                dims: dataset.dims,
            };
            let mut estimator = NrestEstimator::new(plan.estimation_profile.clone());
            Ok(run_rcine(stream, &config, seed, &mut estimator)?.metrics)
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every cell of the plan, averaging error-rate curves over the
/// plan's repetitions. Cells run in parallel; aggregation order is
/// fixed by the grid, so results are independent of scheduling.
pub fn run_plan(plan: &ExperimentPlan, dataset: &Dataset) -> Result<AggregateResult, CoreError> {
    plan.validate()?;
    let trials = plan.trials.min(dataset.len());
    let grid = plan.record_grid(trials);

    // Cell seeds ignore the algorithm: paired draws across algorithms.
    let mut cells: Vec<(CellKey, u32)> = Vec::new();
    for algorithm in &plan.algorithms {
        for (noise_idx, &(rho0, rho1)) in plan.noise_settings.iter().enumerate() {
            for (gamma_idx, &gamma) in plan.gamma_grid.iter().enumerate() {
                let stream_cell = (noise_idx * plan.gamma_grid.len() + gamma_idx) as u32;
                cells.push((
                    CellKey {
                        algorithm: *algorithm,
                        rho0,
                        rho1,
                        gamma,
                    },
                    stream_cell,
                ));
            }
        }
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|(key, stream_cell)| {
            let compute = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                let metrics: Result<Vec<RunMetrics>, CoreError> = (0..plan.seeds)
                    .into_par_iter()
                    .map(|rep| {
                        let seed = run_seed(plan.master_seed, *stream_cell, rep as u32);
                        run_cell_once(dataset, plan, key, seed)
                    })
                    .collect();
                metrics
            }));
            match compute {
                Ok(Ok(metrics)) => {
                    let per_seed_final: Vec<f64> =
                        metrics.iter().map(RunMetrics::final_error_rate).collect();
                    let (final_mean, final_std) = mean_std(&per_seed_final);
                    let mut mean_error = Vec::with_capacity(grid.len());
                    let mut std_error = Vec::with_capacity(grid.len());
                    for &t in &grid {
                        let at: Vec<f64> =
                            metrics.iter().map(|m| m.error_rate_at(t)).collect();
                        let (m, s) = mean_std(&at);
                        mean_error.push(m);
                        std_error.push(s);
                    }
                    CellResult {
                        key: key.clone(),
                        record_trials: grid.clone(),
                        mean_error,
                        std_error,
                        final_mean,
                        final_std,
                        per_seed_final,
                        failure: None,
                    }
                }
                Ok(Err(err)) => failed_cell(key, &grid, err.to_string()),
                Err(panic) => failed_cell(key, &grid, panic_message(panic)),
            }
        })
        .collect();

    Ok(AggregateResult {
        plan: plan.clone(),
        cells: results,
    })
}

fn failed_cell(key: &CellKey, grid: &[usize], message: String) -> CellResult {
    log::error!("cell {} aborted: {message}", key.file_stem());
    CellResult {
        key: key.clone(),
        record_trials: grid.to_vec(),
        mean_error: Vec::new(),
        std_error: Vec::new(),
        final_mean: f64::NAN,
        final_std: f64::NAN,
        per_seed_final: Vec::new(),
        failure: Some(message),
    }
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// One row of a gamma sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub gamma: f64,
    pub final_mean: f64,
    pub final_std: f64,
}

/// Sweep result: the table plus the argmin gamma.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub best_gamma: f64,
}

/// Evaluates the plan's gamma grid for a single algorithm and noise
/// setting and returns the per-gamma final errors with the argmin.
pub fn sweep_gamma(plan: &ExperimentPlan, dataset: &Dataset) -> Result<SweepTable, CoreError> {
    if plan.algorithms.len() != 1 || plan.noise_settings.len() != 1 {
        return Err(CoreError::param(
            "plan",
            "gamma sweep needs exactly one algorithm and one noise setting",
        ));
    }
    let result = run_plan(plan, dataset)?;
    let mut rows = Vec::with_capacity(plan.gamma_grid.len());
    for cell in &result.cells {
        if let Some(reason) = &cell.failure {
            return Err(CoreError::param("sweep", reason.clone()));
        }
        rows.push(SweepRow {
            gamma: cell.key.gamma,
            final_mean: cell.final_mean,
            final_std: cell.final_std,
        });
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.final_mean.total_cmp(&b.final_mean))
        .expect("non-empty grid");
    Ok(SweepTable {
        best_gamma: best.gamma,
        rows,
    })
}

/// Writes one CSV per cell (`trial,mean_error_rate,std_error_rate`,
/// rows ascending), a plan manifest, and optionally a log-log SVG chart
/// of the mean curves. Returns the written paths.
pub fn emit_results(
    result: &AggregateResult,
    out_dir: &Path,
    chart: bool,
) -> Result<Vec<PathBuf>, DataError> {
    std::fs::create_dir_all(out_dir).map_err(|source| DataError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for cell in &result.cells {
        if cell.failure.is_some() {
            continue;
        }
        let path = out_dir.join(format!("{}.csv", cell.key.file_stem()));
        let mut body = String::from("trial,mean_error_rate,std_error_rate\n");
        for (i, &t) in cell.record_trials.iter().enumerate() {
            body.push_str(&format!("{t},{},{}\n", cell.mean_error[i], cell.std_error[i]));
        }
        write_file(&path, body.as_bytes())?;
        written.push(path);
    }

    let manifest_path = out_dir.join("manifest.txt");
    write_file(&manifest_path, manifest_text(result).as_bytes())?;
    written.push(manifest_path);

    if chart {
        let chart_path = out_dir.join(format!("{}_curves.svg", result.plan.dataset_name));
        write_file(&chart_path, chart_svg(result).as_bytes())?;
        written.push(chart_path);
    }
    Ok(written)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    std::fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn manifest_text(result: &AggregateResult) -> String {
    let plan = &result.plan;
    let mut out = String::new();
    out.push_str(&format!("dataset={}\n", plan.dataset_name));
    out.push_str(&format!(
        "algorithms={}\n",
        plan.algorithms
            .iter()
            .map(Algorithm::name)
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(&format!(
        "noise_settings={}\n",
        plan.noise_settings
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect::<Vec<_>>()
            .join(";")
    ));
    out.push_str(&format!(
        "gamma_grid={}\n",
        plan.gamma_grid
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(&format!("seeds={}\n", plan.seeds));
    out.push_str(&format!("trials={}\n", plan.trials));
    out.push_str(&format!("buffer_period={}\n", plan.buffer_period));
    out.push_str(&format!("master_seed={}\n", plan.master_seed));
    out.push_str(&format!("record_points={}\n", plan.record_points));
    out.push_str(&format!(
        "estimation_profile={}\n",
        plan.estimation_profile.name
    ));
    out.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(
        "seed_scheme=run = splitmix64(master XOR splitmix64(cell << 32 | rep)); \
         cell = noise_index * gamma_count + gamma_index (algorithm excluded, \
         so algorithms share draws); substreams exploration=1 noise=2 shuffle=3 estimator=4\n",
    );
    for cell in &result.cells {
        match &cell.failure {
            None => out.push_str(&format!(
                "cell.{}.final={} std={}\n",
                cell.key.file_stem(),
                cell.final_mean,
                cell.final_std
            )),
            Some(reason) => out.push_str(&format!(
                "cell.{}.failed={}\n",
                cell.key.file_stem(),
                reason
            )),
        }
    }
    out
}

const CHART_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Minimal log-log SVG rendering of the mean error curves.
fn chart_svg(result: &AggregateResult) -> String {
    let width = 860.0;
    let height = 600.0;
    let margin = 70.0;
    let mut points: Vec<(&CellResult, Vec<(f64, f64)>)> = Vec::new();
    let mut x_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y_range = (f64::INFINITY, f64::NEG_INFINITY);
    for cell in &result.cells {
        if cell.failure.is_some() {
            continue;
        }
        let series: Vec<(f64, f64)> = cell
            .record_trials
            .iter()
            .zip(&cell.mean_error)
            .filter(|&(_, &e)| e > 0.0)
            .map(|(&t, &e)| ((t as f64).log10(), e.log10()))
            .collect();
        for &(x, y) in &series {
            x_range = (x_range.0.min(x), x_range.1.max(x));
            y_range = (y_range.0.min(y), y_range.1.max(y));
        }
        if !series.is_empty() {
            points.push((cell, series));
        }
    }
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if points.is_empty() {
        svg.push_str("<text x=\"40\" y=\"40\">no positive error rates to plot</text>\n</svg>\n");
        return svg;
    }
    let spread = |range: (f64, f64)| {
        if range.1 > range.0 {
            range
        } else {
            (range.0 - 0.5, range.1 + 0.5)
        }
    };
    let (x0, x1) = spread(x_range);
    let (y0, y1) = spread(y_range);
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (width - 2.0 * margin);
    let sy = |y: f64| height - margin - (y - y0) / (y1 - y0) * (height - 2.0 * margin);
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n",
        margin,
        height - margin,
        width - margin
    ));
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
        margin,
        height - margin,
        margin
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\">log10 trial</text>\n",
        width / 2.0 - 30.0,
        height - 20.0
    ));
    svg.push_str(&format!(
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {0})\">log10 error rate</text>\n",
        height / 2.0
    ));
    for (i, (cell, series)) in points.iter().enumerate() {
        let color = CHART_COLORS[i % CHART_COLORS.len()];
        let path: Vec<String> = series
            .iter()
            .map(|&(x, y)| format!("{},{}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{}</text>\n",
            width - margin - 220.0,
            margin + 16.0 * i as f64,
            cell.key.file_stem()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Runs RCNBF over the first `trials` examples of the seeded shuffle and
/// writes the feedback records of the trials after `capture_after` to a
/// CSV (`feature...,sampled_label,noisy_feedback`). Returns the record
/// count.
pub fn capture_buffer(
    dataset: &Dataset,
    config: &LearnerConfig,
    trials: usize,
    capture_after: usize,
    seed: u64,
    path: &Path,
) -> Result<usize, DataError> {
    let trials = trials.min(dataset.len());
    let mut shuffle = substream(seed, STREAM_SHUFFLE);
    let order = dataset.shuffled(&mut shuffle);
    let (_, records) = run_rcnbf_capturing(
        order.into_iter().take(trials),
        config,
        seed,
        capture_after,
    )?;
    save_records(&records, path)?;
    Ok(records.len())
}

/// Writes feedback records in the capture CSV format.
pub fn save_records(records: &[FeedbackRecord], path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    for record in records {
        for v in &record.features {
            write!(out, "{v},").map_err(io_err)?;
        }
        writeln!(
            out,
            "{},{}",
            record.sampled_label,
            u8::from(record.noisy_feedback)
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a capture CSV back into records.
pub fn load_records(path: &Path) -> Result<Vec<FeedbackRecord>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(DataError::Schema {
                path: display,
                line: line_no,
                expected: width.unwrap_or(3),
                got: fields.len(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(DataError::Schema {
                    path: display,
                    line: line_no,
                    expected: w,
                    got: fields.len(),
                })
            }
            _ => {}
        }
        let d = fields.len() - 2;
        let mut features = Vec::with_capacity(d);
        for field in &fields[..d] {
            features.push(field.trim().parse().map_err(|_| DataError::Parse {
                path: display.clone(),
                line: line_no,
                reason: format!("feature `{field}` is not a number"),
            })?);
        }
        let label: usize = fields[d].trim().parse().map_err(|_| DataError::Parse {
            path: display.clone(),
            line: line_no,
            reason: format!("label `{}` is not a positive integer", fields[d]),
        })?;
        if label == 0 {
            return Err(DataError::Parse {
                path: display,
                line: line_no,
                reason: "labels are 1-based; got 0".into(),
            });
        }
        let bit: u8 = fields[d + 1].trim().parse().map_err(|_| DataError::Parse {
            path: display.clone(),
            line: line_no,
            reason: format!("feedback `{}` is not 0 or 1", fields[d + 1]),
        })?;
        if bit > 1 {
            return Err(DataError::Parse {
                path: display,
                line: line_no,
                reason: format!("feedback bit must be 0 or 1, got {bit}"),
            });
        }
        records.push(FeedbackRecord {
            features,
            sampled_label: Label::new(label),
            noisy_feedback: bit == 1,
        });
    }
    if records.is_empty() {
        return Err(DataError::Empty { path: display });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synsep, SynSepSpec};
    use crate::seeding::substream;

    fn tiny_dataset() -> Dataset {
        let spec = SynSepSpec {
            size: 600,
            seed: 5,
            ..SynSepSpec::default()
        };
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        generate_synsep(&spec, &mut rng).unwrap().0
    }

    fn tiny_plan() -> ExperimentPlan {
        let mut plan = ExperimentPlan::new("synsep");
        plan.algorithms = vec![Algorithm::Banditron, Algorithm::Rcnbf];
        plan.noise_settings = vec![(0.0, 0.0)];
        plan.gamma_grid = vec![0.05];
        plan.seeds = 2;
        plan.trials = 300;
        plan.master_seed = 11;
        plan
    }

    #[test]
    fn log_grid_is_sorted_unique_and_capped() {
        let grid = log_spaced_indices(10_000, 50);
        assert!(grid.len() <= 50);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*grid.first().unwrap(), 1);
        assert_eq!(*grid.last().unwrap(), 10_000);
        assert!(log_spaced_indices(0, 50).is_empty());
    }

    #[test]
    fn empty_horizon_plan_runs_clean() {
        let ds = tiny_dataset();
        let mut plan = tiny_plan();
        plan.seeds = 1;
        plan.trials = 0;
        let result = run_plan(&plan, &ds).unwrap();
        for cell in &result.cells {
            assert!(cell.failure.is_none());
            assert!(cell.record_trials.is_empty());
            assert!(cell.mean_error.is_empty());
        }
    }

    #[test]
    fn zero_noise_cells_identical_across_algorithms() {
        let ds = tiny_dataset();
        let plan = tiny_plan();
        let result = run_plan(&plan, &ds).unwrap();
        let banditron = result
            .cells
            .iter()
            .find(|c| c.key.algorithm == Algorithm::Banditron)
            .unwrap();
        let rcnbf = result
            .cells
            .iter()
            .find(|c| c.key.algorithm == Algorithm::Rcnbf)
            .unwrap();
        assert_eq!(banditron.mean_error, rcnbf.mean_error);
        assert_eq!(banditron.per_seed_final, rcnbf.per_seed_final);
    }

    #[test]
    fn aggregate_mean_is_arithmetic_mean_of_seeds() {
        let ds = tiny_dataset();
        let plan = tiny_plan();
        let result = run_plan(&plan, &ds).unwrap();
        for cell in &result.cells {
            let by_hand: f64 =
                cell.per_seed_final.iter().sum::<f64>() / cell.per_seed_final.len() as f64;
            assert_eq!(cell.final_mean, by_hand);
            assert!(cell.mean_error.iter().all(|&m| (0.0..=1.0).contains(&m)));
            assert!(cell.std_error.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn sweep_single_gamma_is_argmin() {
        let ds = tiny_dataset();
        let mut plan = tiny_plan();
        plan.algorithms = vec![Algorithm::Banditron];
        plan.gamma_grid = vec![0.08];
        let table = sweep_gamma(&plan, &ds).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.best_gamma, 0.08);
    }

    #[test]
    fn sweep_requires_single_algorithm() {
        let ds = tiny_dataset();
        let plan = tiny_plan();
        assert!(sweep_gamma(&plan, &ds).is_err());
    }

    #[test]
    fn emit_writes_csvs_manifest_and_reruns_identically() {
        let ds = tiny_dataset();
        let plan = tiny_plan();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let first = emit_results(&run_plan(&plan, &ds).unwrap(), dir_a.path(), true).unwrap();
        let second = emit_results(&run_plan(&plan, &ds).unwrap(), dir_b.path(), true).unwrap();
        assert_eq!(first.len(), second.len());
        // 2 cells + manifest + chart.
        assert_eq!(first.len(), 4);
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.file_name(), b.file_name());
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
        let csv = std::fs::read_to_string(&first[0]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "trial,mean_error_rate,std_error_rate");
        let trials: Vec<usize> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(trials.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn capture_roundtrip_and_channel_marginal() {
        let spec = SynSepSpec {
            size: 2_000,
            seed: 5,
            ..SynSepSpec::default()
        };
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        let ds = generate_synsep(&spec, &mut rng).unwrap().0;
        let rates = NoiseRates::new(0.3, 0.3).unwrap();
        let config = LearnerConfig {
            gamma: 0.1,
            rates,
            buffer_period: 5_000,
            classes: ds.classes,
            dims: ds.dims,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buffer.csv");
        let written = capture_buffer(&ds, &config, 2_000, 0, 21, &path).unwrap();
        assert_eq!(written, 2_000);
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 2_000);

        // Replay the stream to recover the clean-match rate and compare
        // the observed feedback mix to the channel-implied marginal.
        let mut shuffle = substream(21, STREAM_SHUFFLE);
        let order = ds.shuffled(&mut shuffle);
        let matches = order
            .iter()
            .zip(&records)
            .filter(|(ex, r)| ex.label == r.sampled_label)
            .count() as f64;
        let clean_rate = matches / records.len() as f64;
        let implied =
            clean_rate * (1.0 - rates.rho1()) + (1.0 - clean_rate) * rates.rho0();
        let ones = records.iter().filter(|r| r.noisy_feedback).count() as f64;
        let frac = ones / records.len() as f64;
        assert!(
            (frac - implied).abs() <= 0.05,
            "feedback mix {frac:.3} vs channel-implied {implied:.3}"
        );

        // Round-trip exactness.
        let copy = dir.path().join("copy.csv");
        save_records(&records, &copy).unwrap();
        let back = load_records(&copy).unwrap();
        assert_eq!(back, records);
    }
}
