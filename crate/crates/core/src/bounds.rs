//! Closed-form error bounds for fastest-k SGD with a fixed step size and the
//! bound-optimal times at which to increase `k`.
//!
//! With `a = 1 - eta c` and floor `f_k = eta L sigma^2 / (2 c k s)`:
//!
//! - after `j` iterations: `f_k + a^j (F0 - f_k)`;
//! - after wall-clock time `t`: `f_k + a^{(t / mu_k)(1 - eps)} (F0 - f_k)`.
//!
//! The switching schedule moves from `k` to `k + 1` at the first time the
//! `k + 1` bound, restarted from the current bound value, would fall faster
//! than the `k` bound.

use serde::{Deserialize, Serialize};

use crate::cluster::OrderStatSummary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Step size.
    pub eta: f64,
    /// Lipschitz constant of the gradient.
    pub lipschitz: f64,
    /// Strong-convexity constant.
    pub strong_convexity: f64,
    /// Variance bound on a single-shard gradient estimate.
    pub sigma2: f64,
    /// Rows per worker.
    pub shard_size: f64,
    /// `F(w0) - F*`.
    pub initial_gap: f64,
    /// Slack in the wall-clock bound, in `[0, 1)`.
    #[serde(default)]
    pub epsilon: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("lipschitz", self.lipschitz),
            ("strong_convexity", self.strong_convexity),
            ("sigma2", self.sigma2),
            ("shard_size", self.shard_size),
            ("initial_gap", self.initial_gap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.eta * self.strong_convexity >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "eta * c = {} must be below 1",
                self.eta * self.strong_convexity
            )));
        }
        Ok(())
    }

    /// Stationary error floor `eta L sigma^2 / (2 c k s)`.
    pub fn floor(&self, k: usize) -> f64 {
        self.eta * self.lipschitz * self.sigma2
            / (2.0 * self.strong_convexity * k as f64 * self.shard_size)
    }

    /// `ln(1 - eta c)`, negative.
    fn log_contraction(&self) -> f64 {
        (-self.eta * self.strong_convexity).ln_1p()
    }

    /// `floor + (1 - eta c)^exponent (start - floor)`.
    fn decay(&self, k: usize, start: f64, exponent: f64) -> f64 {
        let floor = self.floor(k);
        floor + (exponent * self.log_contraction()).exp() * (start - floor)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// Error bound after `j` iterations with a fixed `k`.
pub fn error_bound_iterations(params: &BoundParams, k: usize, j: u64) -> Result<f64> {
    params.validate()?;
    check_k(k)?;
    Ok(params.decay(k, params.initial_gap, j as f64))
}

/// Error bound after wall-clock time `t` with a fixed `k` whose iterations
/// take `mu_k` on average.
pub fn error_bound_time(params: &BoundParams, mu_k: f64, k: usize, t: f64) -> Result<f64> {
    params.validate()?;
    check_k(k)?;
    check_time_inputs(mu_k, t)?;
    Ok(params.decay(k, params.initial_gap, t / mu_k * (1.0 - params.epsilon)))
}

fn check_time_inputs(mu_k: f64, t: f64) -> Result<()> {
    if !(mu_k > 0.0 && mu_k.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu_k must be positive, got {mu_k}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    Ok(())
}

/// Probability with which the wall-clock bound holds:
/// `max(0, 1 - sigma_k^2 / eps^2 * (2 / (t mu_k) + 1 / t^2))`.
pub fn confidence_level(params: &BoundParams, sigma_k2: f64, mu_k: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if params.epsilon == 0.0 {
        return Err(Error::InvalidParams(
            "confidence level is undefined for epsilon = 0".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if !(mu_k > 0.0) || sigma_k2 < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need mu_k > 0 and sigma_k^2 >= 0 (got {mu_k}, {sigma_k2})"
        )));
    }
    let miss = sigma_k2 / (params.epsilon * params.epsilon) * (2.0 / (t * mu_k) + 1.0 / (t * t));
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEntry {
    pub time: f64,
    pub k: usize,
}

/// Why a schedule deviates from a plain one-step-per-k staircase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScheduleDiagnostic {
    /// The bound value at the start of segment `k` is at (or below) the `k`
    /// floor, so the switching formula has no solution; the schedule stops
    /// at `k`.
    NonPositiveLogArgument { k: usize, value: f64 },
    /// The formula put the `k -> k + 1` switch at or before the start of the
    /// `k` segment; the switch is applied immediately at `time`.
    ZeroLengthSegment { k: usize, time: f64 },
}

/// `k_start` is active from time 0; each entry raises `k` at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub k_start: usize,
    pub k_max: usize,
    pub entries: Vec<SwitchEntry>,
    #[serde(default)]
    pub diagnostics: Vec<ScheduleDiagnostic>,
}

impl SwitchSchedule {
    /// A schedule that never switches.
    pub fn constant(k: usize) -> Self {
        Self {
            k_start: k,
            k_max: k,
            entries: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    /// Largest scheduled `k` whose switch time is at or before `t`.
    pub fn k_at(&self, t: f64) -> usize {
        self.entries
            .iter()
            .take_while(|e| e.time <= t)
            .last()
            .map_or(self.k_start, |e| e.k)
    }

    pub fn final_k(&self) -> usize {
        self.entries.last().map_or(self.k_start, |e| e.k)
    }

    /// Checks ordering and range; used on schedules read from configs.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_start == 0 || self.final_k() > n {
            return Err(Error::InvalidArgument(format!(
                "schedule k values must lie in 1..={n}"
            )));
        }
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_k = self.k_start;
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.time >= 0.0 && e.time.is_finite()) || e.time <= prev_t || (i > 0 && e.k <= prev_k) || (i == 0 && e.k < prev_k) {
                return Err(Error::InvalidArgument(
                    "schedule times and k values must be strictly increasing".into(),
                ));
            }
            prev_t = e.time;
            prev_k = e.k;
        }
        Ok(())
    }

    /// `t,k` rows, starting with `0,k_start`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,k\n");
        out.push_str(&format!("0,{}\n", self.k_start));
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.time, e.k));
        }
        out
    }
}

/// Bound-optimal switching schedule from `k_start` up to `n`.
///
/// Time advances recursively from `t_0 = 0`:
///
/// ```text
/// t_k = t_{k-1} + mu_k / -ln(1 - eta c)
///       * [ ln(mu_{k+1} - mu_k) - ln(eta L sigma^2 mu_k)
///           + ln(2 c k (k+1) s E_{k-1} - eta L (k+1) sigma^2) ]
/// ```
///
/// where `E_{k-1}` is the piecewise bound value at `t_{k-1}` (`F0` at
/// `t_0`). The slack `epsilon` is ignored here.
pub fn switching_schedule(
    params: &BoundParams,
    order_stats: &OrderStatSummary,
    n: usize,
    k_start: usize,
) -> Result<SwitchSchedule> {
    params.validate()?;
    if n == 0 || n > order_stats.n {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must lie in 1..={} (order statistics available)",
            order_stats.n
        )));
    }
    if k_start == 0 || k_start > n {
        return Err(Error::KOutOfRange { k: k_start, n });
    }
    let eta_l_sigma2 = params.eta * params.lipschitz * params.sigma2;
    let (c, s) = (params.strong_convexity, params.shard_size);
    let rate = -params.log_contraction();

    let mut schedule = SwitchSchedule {
        k_start,
        k_max: n,
        entries: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut t_prev = 0.0;
    let mut gap = params.initial_gap;
    for k in k_start..n {
        let mu_k = order_stats.mean(k)?;
        let mu_next = order_stats.mean(k + 1)?;
        let spacing = mu_next - mu_k;
        if !(spacing > 0.0) {
            return Err(Error::EqualOrderStatMeans { k, mean: mu_k });
        }
        let kf = k as f64;
        let lead = 2.0 * c * kf * (kf + 1.0) * s * gap;
        let arg = lead - eta_l_sigma2 * (kf + 1.0);
        if !(arg > 1e-12 * lead.abs()) {
            schedule
                .diagnostics
                .push(ScheduleDiagnostic::NonPositiveLogArgument { k, value: arg });
            break;
        }
        let dt = mu_k / rate * (spacing.ln() - (eta_l_sigma2 * mu_k).ln() + arg.ln());
        if !dt.is_finite() {
            schedule
                .diagnostics
                .push(ScheduleDiagnostic::NonPositiveLogArgument { k, value: arg });
            break;
        }
        if dt <= 0.0 {
            schedule
                .diagnostics
                .push(ScheduleDiagnostic::ZeroLengthSegment { k, time: t_prev });
            match schedule.entries.last_mut() {
                Some(last) if last.time == t_prev => last.k = k + 1,
                _ => schedule.entries.push(SwitchEntry { time: t_prev, k: k + 1 }),
            }
            continue;
        }
        let t_k = t_prev + dt;
        gap = params.decay(k, gap, dt / mu_k);
        schedule.entries.push(SwitchEntry { time: t_k, k: k + 1 });
        t_prev = t_k;
    }
    Ok(schedule)
}

/// `n_points` evenly spaced times covering `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) || n_points < 2 {
        return Err(Error::EmptyGrid);
    }
    let last = (n_points - 1) as f64;
    Ok((0..n_points).map(|i| horizon * i as f64 / last).collect())
}

pub const DEFAULT_GRID_POINTS: usize = 2000;

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "time grid must be non-negative and sorted ascending".into(),
        ));
    }
    Ok(())
}

/// Wall-clock bound for a fixed `k` at each grid time.
pub fn fixed_k_curve(
    params: &BoundParams,
    order_stats: &OrderStatSummary,
    k: usize,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_grid(t_grid)?;
    let mu_k = order_stats.mean(k)?;
    t_grid
        .iter()
        .map(|&t| Ok((t, error_bound_time(params, mu_k, k, t)?)))
        .collect()
}

/// Bound under a switching schedule. Each segment restarts the wall-clock
/// bound for its `k` from the bound value reached at the switch, so the
/// curve is continuous.
pub fn piecewise_bound_curve(
    params: &BoundParams,
    schedule: &SwitchSchedule,
    order_stats: &OrderStatSummary,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    check_grid(t_grid)?;
    let exponent_scale = 1.0 - params.epsilon;

    struct Segment {
        start: f64,
        k: usize,
        mu: f64,
        value: f64,
    }
    let mut segments = vec![Segment {
        start: 0.0,
        k: schedule.k_start,
        mu: order_stats.mean(schedule.k_start)?,
        value: params.initial_gap,
    }];
    for e in &schedule.entries {
        let last = segments.last().expect("non-empty");
        let elapsed = (e.time - last.start).max(0.0);
        let value = params.decay(last.k, last.value, elapsed / last.mu * exponent_scale);
        segments.push(Segment {
            start: e.time,
            k: e.k,
            mu: order_stats.mean(e.k)?,
            value,
        });
    }

    let mut idx = 0;
    Ok(t_grid
        .iter()
        .map(|&t| {
            while idx + 1 < segments.len() && segments[idx + 1].start <= t {
                idx += 1;
            }
            let seg = &segments[idx];
            let bound = params.decay(seg.k, seg.value, (t - seg.start) / seg.mu * exponent_scale);
            (t, bound)
        })
        .collect())
}
