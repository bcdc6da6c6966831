//! Simulated synchronous fastest-k SGD with fixed, scheduled and adaptive
//! `k`, and an asynchronous single-worker-update baseline.
//!
//! Time is simulated: every synchronous iteration draws fresh response times
//! for all `n` workers and advances the clock by the k-th smallest. Error is
//! measured outside simulated time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::SwitchSchedule;
use crate::cluster::ResponseTimeModel;
use crate::datagen::{dot, generate_synthetic, shard, Dataset, Shard};
use crate::model::{accumulate_gradient, solve_optimum, ModelState, Optimum, Suboptimality};
use crate::util::{rng_from_seed, write_atomic, SimRng};
use crate::{Error, Result};

/// Shape and seed of the synthetic dataset a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveParams {
    pub k_start: usize,
    /// Largest `k` the counter may switch to. Defaults to the largest
    /// `k_start + i * step` not exceeding `n`.
    #[serde(default)]
    pub k_cap: Option<usize>,
    pub thresh: i64,
    pub burnin: u64,
    pub step: usize,
}

impl AdaptiveParams {
    pub fn resolved_cap(&self, n: usize) -> usize {
        self.k_cap.unwrap_or_else(|| {
            if self.step == 0 || self.k_start > n {
                self.k_start
            } else {
                self.k_start + (n - self.k_start) / self.step * self.step
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Fixed { k: usize },
    Scheduled { schedule: SwitchSchedule },
    Adaptive(AdaptiveParams),
    Async,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DataSpec,
    /// Number of workers `n`; must divide `m`.
    pub workers: usize,
    pub eta: f64,
    /// Maximum number of master updates `J`.
    pub max_iterations: u64,
    /// Optional wall-clock budget. A run stops before starting an update
    /// once the clock has reached it.
    pub horizon: Option<f64>,
    pub response_time: ResponseTimeModel,
    pub mode: Mode,
    pub master_seed: u64,
}

/// One master update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub wall_clock: f64,
    /// `k` used for this update (1 for asynchronous updates).
    pub k: usize,
    /// `F(w_j) - F*` after the update.
    pub error: f64,
    pub count_negative: i64,
    /// Whether `k` increases for the next update.
    pub switched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub final_state: ModelState,
    /// The run stopped early because the error stopped being finite; the
    /// last record then carries an infinite error.
    pub diverged: bool,
}

impl Trace {
    /// Switch times as `(wall_clock, new k)` pairs.
    pub fn switches(&self) -> Vec<(f64, usize)> {
        self.records
            .windows(2)
            .filter(|w| w[1].k != w[0].k)
            .map(|w| (w[0].wall_clock, w[1].k))
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        trace_to_csv(&self.records)
    }
}

pub const TRACE_HEADER: &str = "iteration,wall_clock,k,error,count_negative,switched";

pub fn trace_to_csv(records: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(body.len() + TRACE_HEADER.len() + 1);
    writeln!(out, "{TRACE_HEADER}").expect("write to vec");
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &trace_to_csv(records)?)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("expected header {TRACE_HEADER}"),
        });
    }
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e| Error::Parse {
                path: path.into(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Result of one synchronous fastest-k update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ModelState,
    pub gradient: Vec<f64>,
    pub elapsed: f64,
    /// 1-based ids of the `k` fastest workers, ascending.
    pub winners: Vec<usize>,
}

/// Indices (0-based) of the `k` smallest times, ties broken towards the
/// lower index, returned in ascending index order, plus the k-th time.
fn fastest(times: &[f64], k: usize) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    let by_time = |a: &usize, b: &usize| times[*a].total_cmp(&times[*b]).then(a.cmp(b));
    order.select_nth_unstable_by(k - 1, by_time);
    let elapsed = times[order[k - 1]];
    order.truncate(k);
    order.sort_unstable();
    (order, elapsed)
}

/// One fastest-k iteration: draw `n` response times, average the partial
/// gradients of the `k` fastest workers and take a step of size `eta`.
pub fn step_fastest_k(
    state: &ModelState,
    k: usize,
    eta: f64,
    shards: &[Shard],
    dataset: &Dataset,
    model: &ResponseTimeModel,
    rng: &mut SimRng,
) -> Result<StepOutcome> {
    let n = shards.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    if state.weights.len() != dataset.cols() {
        return Err(Error::DimensionMismatch {
            expected: dataset.cols(),
            actual: state.weights.len(),
        });
    }
    model.validate()?;
    let mut times = vec![0.0; n];
    let mut gradient = vec![0.0; dataset.cols()];
    let mut scratch = vec![0.0; dataset.cols()];
    let (winners, elapsed) = fastest_k_update(
        &state.weights, k, shards, dataset, model, rng, &mut times, &mut gradient, &mut scratch,
    );
    let weights = state
        .weights
        .iter()
        .zip(&gradient)
        .map(|(w, g)| w - eta * g)
        .collect();
    Ok(StepOutcome {
        state: ModelState {
            weights,
            iteration: state.iteration + 1,
            wall_clock: state.wall_clock + elapsed,
        },
        gradient,
        elapsed,
        winners: winners.into_iter().map(|i| i + 1).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn fastest_k_update(
    weights: &[f64],
    k: usize,
    shards: &[Shard],
    dataset: &Dataset,
    model: &ResponseTimeModel,
    rng: &mut SimRng,
    times: &mut [f64],
    gradient: &mut [f64],
    scratch: &mut [f64],
) -> (Vec<usize>, f64) {
    model.sample_into(rng, times);
    let (winners, elapsed) = fastest(times, k);
    gradient.fill(0.0);
    for &i in &winners {
        accumulate_gradient(dataset, shards[i].row_indices.iter().copied(), weights, scratch);
        gradient.iter_mut().zip(scratch.iter()).for_each(|(g, p)| *g += p);
    }
    let inv = 1.0 / k as f64;
    gradient.iter_mut().for_each(|g| *g *= inv);
    (winners, elapsed)
}

/// Sign-of-inner-product stationarity counter that drives adaptive `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PflugState {
    /// Negative minus non-negative consecutive gradient products since the
    /// last switch.
    pub count_negative: i64,
    /// Iterations since the last switch.
    pub count_iter: u64,
    pub prev_gradient: Option<Vec<f64>>,
    pub thresh: i64,
    pub burnin: u64,
    pub step: usize,
}

impl PflugState {
    pub fn new(thresh: i64, burnin: u64, step: usize) -> Self {
        Self {
            count_negative: 0,
            count_iter: 1,
            prev_gradient: None,
            thresh,
            burnin,
            step,
        }
    }

    /// Feeds this iteration's gradient estimate and returns the `k` for the
    /// next iteration and whether it changed.
    ///
    /// The counter moves up on a negative product with the previous estimate
    /// and down otherwise. `k` grows by `step` once the counter exceeds
    /// `thresh`, more than `burnin` iterations passed since the last switch
    /// and `k + step <= k_cap`; both counters then restart. `count_iter`
    /// is incremented on every call, after the switch test.
    pub fn update(&mut self, gradient: &[f64], k: usize, k_cap: usize) -> (usize, bool) {
        if let Some(prev) = &self.prev_gradient {
            if dot(gradient, prev) < 0.0 {
                self.count_negative += 1;
            } else {
                self.count_negative -= 1;
            }
        }
        let mut new_k = k;
        let mut switched = false;
        if self.count_negative > self.thresh
            && self.count_iter > self.burnin
            && k + self.step <= k_cap
        {
            new_k = k + self.step;
            switched = true;
            self.count_negative = 0;
            self.count_iter = 0;
        }
        self.count_iter += 1;
        match &mut self.prev_gradient {
            Some(prev) => prev.copy_from_slice(gradient),
            None => self.prev_gradient = Some(gradient.to_vec()),
        }
        (new_k, switched)
    }
}

/// Functional form of [`PflugState::update`].
pub fn pflug_update(
    mut state: PflugState,
    current_gradient: &[f64],
    k: usize,
    k_cap: usize,
) -> (PflugState, usize, bool) {
    let (new_k, switched) = state.update(current_gradient, k, k_cap);
    (state, new_k, switched)
}

/// A dataset cut into worker shards together with its exact optimum.
#[derive(Debug, Clone)]
pub struct Simulation {
    dataset: Dataset,
    shards: Vec<Shard>,
    optimum: Optimum,
    suboptimality: Suboptimality,
}

impl Simulation {
    pub fn new(dataset: Dataset, workers: usize) -> Result<Self> {
        let shards = shard(&dataset, workers)?;
        let optimum = solve_optimum(&dataset)?;
        let suboptimality = Suboptimality::new(&dataset, &optimum);
        Ok(Self {
            dataset,
            shards,
            optimum,
            suboptimality,
        })
    }

    pub fn from_spec(spec: DataSpec, workers: usize) -> Result<Self> {
        Self::new(generate_synthetic(spec.m, spec.d, spec.seed)?, workers)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    /// `F(w) - F*`.
    pub fn error(&self, weights: &[f64]) -> f64 {
        self.suboptimality.eval(weights)
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        let ds = &self.dataset;
        let spec = config.dataset;
        if spec.m != ds.rows() || spec.d != ds.cols() || ds.seed().is_some_and(|s| s != spec.seed) {
            return Err(Error::InvalidArgument(format!(
                "run expects dataset {spec:?}, simulation holds m={} d={} seed={:?}",
                ds.rows(),
                ds.cols(),
                ds.seed()
            )));
        }
        if config.workers != self.workers() {
            return Err(Error::InvalidArgument(format!(
                "run expects {} workers, simulation has {}",
                config.workers,
                self.workers()
            )));
        }
        if !(config.eta >= 0.0 && config.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be non-negative, got {}", config.eta)));
        }
        if config.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let Some(h) = config.horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!("horizon must be positive, got {h}")));
            }
        }
        config.response_time.validate()?;
        let n = self.workers();
        match &config.mode {
            Mode::Fixed { k } if *k == 0 || *k > n => Err(Error::KOutOfRange { k: *k, n }),
            Mode::Scheduled { schedule } => schedule.validate(n),
            Mode::Adaptive(p) => {
                let cap = p.resolved_cap(n);
                if p.step == 0 || p.thresh < 1 || p.burnin == 0 {
                    Err(Error::InvalidArgument(
                        "adaptive mode needs step, thresh and burnin of at least 1".into(),
                    ))
                } else if p.k_start == 0 || p.k_start > cap || cap > n {
                    Err(Error::InvalidArgument(format!(
                        "adaptive mode needs 1 <= k_start ({}) <= k_cap ({cap}) <= n ({n})",
                        p.k_start
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn run(&self, config: &RunConfig) -> Result<Trace> {
        self.check(config)?;
        match config.mode {
            Mode::Async => Ok(self.async_updates(config, |_| ())),
            _ => Ok(self.run_sync(config)),
        }
    }

    fn run_sync(&self, config: &RunConfig) -> Trace {
        let n = self.workers();
        let d = self.dataset.cols();
        let mut rng = rng_from_seed(config.master_seed);
        let mut state = ModelState::zeros(d);
        let mut times = vec![0.0; n];
        let mut gradient = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut records = Vec::new();
        let mut diverged = false;

        let (mut k, k_cap, mut pflug) = match &config.mode {
            Mode::Fixed { k } => (*k, *k, None),
            Mode::Scheduled { schedule } => (schedule.k_start, schedule.final_k(), None),
            Mode::Adaptive(p) => (
                p.k_start,
                p.resolved_cap(n),
                Some(PflugState::new(p.thresh, p.burnin, p.step)),
            ),
            Mode::Async => unreachable!("handled by async_updates"),
        };

        for _ in 0..config.max_iterations {
            if config.horizon.is_some_and(|h| state.wall_clock >= h) {
                break;
            }
            if let Mode::Scheduled { schedule } = &config.mode {
                k = schedule.k_at(state.wall_clock);
            }
            let (_, elapsed) = fastest_k_update(
                &state.weights,
                k,
                &self.shards,
                &self.dataset,
                &config.response_time,
                &mut rng,
                &mut times,
                &mut gradient,
                &mut scratch,
            );
            for (w, g) in state.weights.iter_mut().zip(&gradient) {
                *w -= config.eta * g;
            }
            state.iteration += 1;
            state.wall_clock += elapsed;

            let (next_k, switched, count_negative) = match (&config.mode, pflug.as_mut()) {
                (Mode::Adaptive(_), Some(p)) => {
                    let (next, switched) = p.update(&gradient, k, k_cap);
                    (next, switched, p.count_negative)
                }
                (Mode::Scheduled { schedule }, _) => {
                    let next = schedule.k_at(state.wall_clock);
                    (next, next != k, 0)
                }
                _ => (k, false, 0),
            };
            let error = self.error(&state.weights);
            records.push(TraceRecord {
                iteration: state.iteration,
                wall_clock: state.wall_clock,
                k,
                error: if error.is_finite() { error } else { f64::INFINITY },
                count_negative,
                switched,
            });
            if !error.is_finite() {
                diverged = true;
                break;
            }
            k = next_k;
        }
        Trace {
            records,
            final_state: state,
            diverged,
        }
    }

    /// Asynchronous baseline with per-update details passed to `observe`.
    pub fn run_async_with<F: FnMut(&AsyncUpdate)>(&self, config: &RunConfig, observe: F) -> Result<Trace> {
        self.check(config)?;
        if config.mode != Mode::Async {
            return Err(Error::InvalidArgument("run_async requires async mode".into()));
        }
        Ok(self.async_updates(config, observe))
    }

    fn async_updates<F: FnMut(&AsyncUpdate)>(&self, config: &RunConfig, mut observe: F) -> Trace {
        let n = self.workers();
        let d = self.dataset.cols();
        let mut rng = rng_from_seed(config.master_seed);
        let mut state = ModelState::zeros(d);
        let mut gradient = vec![0.0; d];
        // model copy and version each worker is computing on
        let mut snapshots = vec![state.weights.clone(); n];
        let mut versions = vec![0u64; n];
        let mut queue = BinaryHeap::with_capacity(n);
        for worker in 0..n {
            let time = config.response_time.sample(&mut rng);
            queue.push(Completion { time, worker });
        }
        let mut records = Vec::new();
        let mut diverged = false;
        while (records.len() as u64) < config.max_iterations {
            let Some(Completion { time, worker }) = queue.pop() else {
                break;
            };
            if config.horizon.is_some_and(|h| time > h) {
                break;
            }
            accumulate_gradient(
                &self.dataset,
                self.shards[worker].row_indices.iter().copied(),
                &snapshots[worker],
                &mut gradient,
            );
            for (w, g) in state.weights.iter_mut().zip(&gradient) {
                *w -= config.eta * g;
            }
            observe(&AsyncUpdate {
                worker_id: worker + 1,
                wall_clock: time,
                staleness: state.iteration - versions[worker],
            });
            state.iteration += 1;
            state.wall_clock = time;
            let error = self.error(&state.weights);
            records.push(TraceRecord {
                iteration: state.iteration,
                wall_clock: time,
                k: 1,
                error: if error.is_finite() { error } else { f64::INFINITY },
                count_negative: 0,
                switched: false,
            });
            if !error.is_finite() {
                diverged = true;
                break;
            }
            snapshots[worker].copy_from_slice(&state.weights);
            versions[worker] = state.iteration;
            let next = time + config.response_time.sample(&mut rng);
            queue.push(Completion { time: next, worker });
        }
        Trace {
            records,
            final_state: state,
            diverged,
        }
    }
}

/// Details of one asynchronous master update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncUpdate {
    pub worker_id: usize,
    pub wall_clock: f64,
    /// Master updates applied between the worker receiving its model and
    /// this update.
    pub staleness: u64,
}

/// Min-heap entry: earliest completion first, lower worker index on ties.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Completion {
    time: f64,
    worker: usize,
}

impl Eq for Completion {}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.worker.cmp(&self.worker))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generates the configured dataset and runs one synchronous mode.
pub fn run(config: &RunConfig) -> Result<Trace> {
    Simulation::from_spec(config.dataset, config.workers)?.run(config)
}

/// Generates the configured dataset and runs the asynchronous baseline.
pub fn run_async(config: &RunConfig) -> Result<Trace> {
    Simulation::from_spec(config.dataset, config.workers)?.run_async_with(config, |_| ())
}
