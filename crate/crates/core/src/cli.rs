//! Experiment runner behind the `fastk` binary: config parsing and the
//! `simulate`, `bounds`, `schedule` and `plot` subcommands.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    fixed_k_curve, piecewise_bound_curve, switching_schedule, uniform_grid, BoundParams,
    SwitchEntry, SwitchSchedule, DEFAULT_GRID_POINTS,
};
use crate::cluster::{MonteCarloConfig, OrderStatSummary, ResponseTimeModel};
use crate::engine::{read_trace_csv, write_trace_csv, AdaptiveParams, DataSpec, Mode, RunConfig, Simulation, Trace};
use crate::plot::{line_chart_svg, ChartOptions, Series};
use crate::util::write_atomic;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Top-level experiment description. Fields a subcommand does not need may
/// be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub dataset: Option<DataSpec>,
    pub workers: usize,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<u64>,
    /// Shared wall-clock horizon for simulations and bound curves.
    #[serde(default)]
    pub horizon: Option<f64>,
    pub response_time: ResponseTimeModel,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeConfig {
    Fixed {
        k: usize,
    },
    /// Explicit switch entries, or (when omitted) the bound-optimal schedule
    /// computed from the `bounds` block.
    Scheduled {
        #[serde(default)]
        k_start: Option<usize>,
        #[serde(default)]
        entries: Option<Vec<SwitchEntry>>,
    },
    Adaptive {
        k_start: usize,
        #[serde(default)]
        k_cap: Option<usize>,
        thresh: i64,
        burnin: Burnin,
        step: usize,
    },
    Async,
}

/// Burn-in as an iteration count or as a fraction of the number of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Burnin {
    Count(u64),
    Fraction { fraction_of_m: f64 },
}

impl Burnin {
    pub fn resolve(&self, m: usize) -> Result<u64> {
        match *self {
            Burnin::Count(c) => Ok(c),
            Burnin::Fraction { fraction_of_m } if fraction_of_m > 0.0 && fraction_of_m.is_finite() => {
                Ok((fraction_of_m * m as f64).round() as u64)
            }
            Burnin::Fraction { fraction_of_m } => Err(Error::Config(format!(
                "burnin fraction must be positive, got {fraction_of_m}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub params: BoundParams,
    #[serde(default = "one")]
    pub k_start: usize,
    /// Use `H_n - H_{n-k}` for exponential order-statistic means instead
    /// of `(H_n - H_{n-k}) / rate`.
    #[serde(default)]
    pub drop_rate_factor: bool,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub grid_points: Option<usize>,
}

fn one() -> usize {
    1
}

impl ModeConfig {
    pub fn label(&self) -> String {
        match self {
            ModeConfig::Fixed { k } => format!("fixed_k{k}"),
            ModeConfig::Scheduled { .. } => "scheduled".into(),
            ModeConfig::Adaptive { .. } => "adaptive".into(),
            ModeConfig::Async => "async".into(),
        }
    }
}

/// Command-line overrides shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the config's seed list with this single seed.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Json(inner) => Error::Parse {
            path: path.into(),
            message: inner.to_string(),
        },
        Error::Config(message) => Error::Parse {
            path: path.into(),
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)?;
    if cfg.version != CONFIG_VERSION {
        return Err(Error::Config(format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            cfg.version
        )));
    }
    if cfg.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, ov: &Overrides) -> PathBuf {
    ov.out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn bounds_block(cfg: &ExperimentConfig) -> Result<&BoundsConfig> {
    cfg.bounds
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `bounds` block".into()))
}

fn order_stats(cfg: &ExperimentConfig, b: &BoundsConfig) -> Result<OrderStatSummary> {
    OrderStatSummary::compute(
        &cfg.response_time,
        cfg.workers,
        b.drop_rate_factor,
        b.monte_carlo.unwrap_or_default(),
    )
}

/// The bound-optimal schedule for the config's `bounds` block.
pub fn compute_schedule(cfg: &ExperimentConfig) -> Result<SwitchSchedule> {
    let b = bounds_block(cfg)?;
    let stats = order_stats(cfg, b)?;
    switching_schedule(&b.params, &stats, cfg.workers, b.k_start)
}

/// Builds the engine configuration for one mode.
pub fn run_config(cfg: &ExperimentConfig, mode: &ModeConfig, seed: u64) -> Result<RunConfig> {
    let dataset = cfg
        .dataset
        .ok_or_else(|| Error::Config("simulate needs a `dataset` block".into()))?;
    let eta = cfg.eta.ok_or_else(|| Error::Config("simulate needs `eta`".into()))?;
    let max_iterations = cfg
        .max_iterations
        .ok_or_else(|| Error::Config("simulate needs `max_iterations`".into()))?;
    let mode = match mode {
        ModeConfig::Fixed { k } => Mode::Fixed { k: *k },
        ModeConfig::Scheduled { k_start, entries } => {
            let schedule = match entries {
                Some(entries) => SwitchSchedule {
                    k_start: k_start.unwrap_or(1),
                    k_max: cfg.workers,
                    entries: entries.clone(),
                    diagnostics: Vec::new(),
                },
                None => compute_schedule(cfg)?,
            };
            Mode::Scheduled { schedule }
        }
        ModeConfig::Adaptive {
            k_start,
            k_cap,
            thresh,
            burnin,
            step,
        } => Mode::Adaptive(AdaptiveParams {
            k_start: *k_start,
            k_cap: *k_cap,
            thresh: *thresh,
            burnin: burnin.resolve(dataset.m)?,
            step: *step,
        }),
        ModeConfig::Async => Mode::Async,
    };
    Ok(RunConfig {
        dataset,
        workers: cfg.workers,
        eta,
        max_iterations,
        horizon: cfg.horizon,
        response_time: cfg.response_time,
        mode,
        master_seed: seed,
    })
}

#[derive(Debug, Default)]
pub struct Report {
    pub written: Vec<PathBuf>,
    /// Human-readable lines for standard output.
    pub summary: Vec<String>,
    /// Runs that failed, by label.
    pub failures: Vec<(String, Error)>,
}

impl Report {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn labels(modes: &[ModeConfig]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for m in modes {
        *seen.entry(m.label()).or_default() += 1;
    }
    let mut idx: HashMap<String, usize> = HashMap::new();
    modes
        .iter()
        .map(|m| {
            let base = m.label();
            if seen[&base] > 1 {
                let i = idx.entry(base.clone()).or_default();
                *i += 1;
                format!("{base}_{i}")
            } else {
                base
            }
        })
        .collect()
}

fn summarize(label: &str, seed: u64, trace: &Trace) -> String {
    let mut line = format!("{label} seed={seed}: iterations={}", trace.records.len());
    if let Some(last) = trace.records.last() {
        let _ = write!(
            line,
            " final_error={:.6e} final_wall_clock={:.3}",
            last.error, last.wall_clock
        );
    }
    if trace.diverged {
        line.push_str(" diverged");
    }
    let switches = trace.switches();
    if !switches.is_empty() {
        let list: Vec<String> = switches.iter().map(|(t, k)| format!("{t:.2}->k{k}")).collect();
        let _ = write!(line, " switches=[{}]", list.join(", "));
    }
    line
}

/// Runs every (mode, seed) pair on the shared dataset and writes one trace
/// CSV per pair.
pub fn cmd_simulate(config_path: &Path, ov: &Overrides) -> Result<Report> {
    let cfg = load_config(config_path)?;
    simulate(&cfg, ov)
}

pub fn simulate(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Report> {
    if cfg.modes.is_empty() {
        return Err(Error::Config("simulate needs at least one entry in `modes`".into()));
    }
    let seeds = match ov.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(Error::Config("`seeds` must not be empty".into()));
    }
    let spec = cfg
        .dataset
        .ok_or_else(|| Error::Config("simulate needs a `dataset` block".into()))?;
    let sim = Simulation::from_spec(spec, cfg.workers)?;
    let dir = out_dir(cfg, ov);
    let labels = labels(&cfg.modes);

    let jobs: Vec<(usize, u64)> = (0..cfg.modes.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(String, u64, Result<(PathBuf, Trace)>)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let label = labels[i].clone();
            let outcome = run_config(cfg, &cfg.modes[i], seed).and_then(|rc| {
                let trace = sim.run(&rc)?;
                let path = dir.join(format!("{label}_seed{seed}.csv"));
                write_trace_csv(&path, &trace.records)?;
                Ok((path, trace))
            });
            (label, seed, outcome)
        })
        .collect();

    let mut report = Report::default();
    for (label, seed, outcome) in results {
        match outcome {
            Ok((path, trace)) => {
                report.summary.push(summarize(&label, seed, &trace));
                report.written.push(path);
            }
            Err(e) => report.failures.push((format!("{label} seed={seed}"), e)),
        }
    }
    Ok(report)
}

/// Fixed-k bound curves for `k = 1..n` plus the scheduled (adaptive) curve,
/// each evaluated on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurves {
    pub grid: Vec<f64>,
    pub fixed: Vec<(usize, Vec<f64>)>,
    pub adaptive: Vec<f64>,
    pub schedule: SwitchSchedule,
}

impl BoundCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for (k, _) in &self.fixed {
            let _ = write!(out, ",k{k}");
        }
        out.push_str(",adaptive\n");
        for (i, t) in self.grid.iter().enumerate() {
            let _ = write!(out, "{t}");
            for (_, vals) in &self.fixed {
                let _ = write!(out, ",{}", vals[i]);
            }
            let _ = writeln!(out, ",{}", self.adaptive[i]);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let mut series: Vec<Series> = self
            .fixed
            .iter()
            .map(|(k, vals)| Series {
                label: format!("k = {k}"),
                points: self.grid.iter().copied().zip(vals.iter().copied()).collect(),
            })
            .collect();
        series.push(Series {
            label: "adaptive".into(),
            points: self.grid.iter().copied().zip(self.adaptive.iter().copied()).collect(),
        });
        let opts = ChartOptions {
            title: "Error bound vs wall-clock time".into(),
            y_label: "error bound".into(),
            ..ChartOptions::default()
        };
        line_chart_svg(&series, &opts)
    }
}

pub fn bound_curves(cfg: &ExperimentConfig) -> Result<BoundCurves> {
    let b = bounds_block(cfg)?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| Error::Config("bounds needs `horizon`".into()))?;
    let grid = uniform_grid(horizon, b.grid_points.unwrap_or(DEFAULT_GRID_POINTS))?;
    let stats = order_stats(cfg, b)?;
    let schedule = switching_schedule(&b.params, &stats, cfg.workers, b.k_start)?;
    let fixed = (1..=cfg.workers)
        .map(|k| {
            let vals = fixed_k_curve(&b.params, &stats, k, &grid)?
                .into_iter()
                .map(|(_, v)| v)
                .collect();
            Ok((k, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let adaptive = piecewise_bound_curve(&b.params, &schedule, &stats, &grid)?
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    Ok(BoundCurves {
        grid,
        fixed,
        adaptive,
        schedule,
    })
}

/// Writes `bounds.csv`, `schedule.csv` and `bounds.svg`.
pub fn cmd_bounds(config_path: &Path, ov: &Overrides) -> Result<Report> {
    let cfg = load_config(config_path)?;
    let curves = bound_curves(&cfg)?;
    let dir = out_dir(&cfg, ov);
    let mut report = Report::default();
    for (name, body) in [
        ("bounds.csv", curves.to_csv()),
        ("schedule.csv", curves.schedule.to_csv()),
        ("bounds.svg", curves.to_svg()),
    ] {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        report.written.push(path);
    }
    report.summary.push(format!(
        "{} fixed-k curves + adaptive over {} grid points; switches: {}",
        curves.fixed.len(),
        curves.grid.len(),
        schedule_line(&curves.schedule)
    ));
    report.summary.extend(diagnostic_lines(&curves.schedule));
    Ok(report)
}

fn schedule_line(s: &SwitchSchedule) -> String {
    let list: Vec<String> = s.entries.iter().map(|e| format!("t={:.4} k={}", e.time, e.k)).collect();
    format!("[{}]", list.join(", "))
}

fn diagnostic_lines(s: &SwitchSchedule) -> Vec<String> {
    s.diagnostics
        .iter()
        .map(|d| format!("diagnostic: {}", serde_json::to_string(d).expect("serializable")))
        .collect()
}

pub fn schedule_json(schedule: &SwitchSchedule) -> String {
    let mut s = serde_json::to_string_pretty(schedule).expect("serializable");
    s.push('\n');
    s
}

/// Writes `schedule.json`; the JSON is also returned as the summary.
pub fn cmd_schedule(config_path: &Path, ov: &Overrides) -> Result<Report> {
    let cfg = load_config(config_path)?;
    let schedule = compute_schedule(&cfg)?;
    let json = schedule_json(&schedule);
    let path = out_dir(&cfg, ov).join("schedule.json");
    write_atomic(&path, json.as_bytes())?;
    Ok(Report {
        written: vec![path],
        summary: vec![json.trim_end().to_owned()],
        failures: Vec::new(),
    })
}

/// Overlays the error-vs-time curves of the given traces.
pub fn plot_traces(traces: &[PathBuf]) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("plot needs at least one trace".into()));
    }
    let series = traces
        .iter()
        .map(|p| {
            let records = read_trace_csv(p)?;
            let label = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok(Series {
                label,
                points: records.iter().map(|r| (r.wall_clock, r.error)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = ChartOptions {
        title: "Error vs wall-clock time".into(),
        ..ChartOptions::default()
    };
    Ok(line_chart_svg(&series, &opts))
}

pub fn cmd_plot(out: &Path, traces: &[PathBuf]) -> Result<Report> {
    let svg = plot_traces(traces)?;
    write_atomic(out, svg.as_bytes())?;
    Ok(Report {
        written: vec![out.to_path_buf()],
        summary: vec![format!("{} series", traces.len())],
        failures: Vec::new(),
    })
}
