//! Worker response-time models and moments of their order statistics.
//!
//! The time of one fastest-k iteration is the k-th smallest of the `n` iid
//! worker response times. Its mean `mu_k` and variance `sigma_k^2` feed the
//! wall-clock error bound and the switching schedule.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::util::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseTimeModel {
    Exponential { rate: f64 },
    ShiftedExponential { shift: f64, rate: f64 },
    Deterministic { value: f64 },
}

impl ResponseTimeModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::ShiftedExponential { shift, rate } => {
                rate > 0.0 && rate.is_finite() && shift >= 0.0 && shift.is_finite()
            }
            Self::Deterministic { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("{self:?}")))
        }
    }

    /// True when distinct workers tie with probability zero.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Deterministic { .. })
    }

    /// Draws one response time. Assumes the model is valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::ShiftedExponential { shift, rate } => {
                shift + Exp::new(rate).expect("validated rate").sample(rng)
            }
            Self::Deterministic { value } => value,
        }
    }

    /// Fills `out` with iid draws.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            Self::Exponential { rate } => {
                let exp = Exp::new(rate).expect("validated rate");
                out.iter_mut().for_each(|t| *t = exp.sample(rng));
            }
            Self::ShiftedExponential { shift, rate } => {
                let exp = Exp::new(rate).expect("validated rate");
                out.iter_mut().for_each(|t| *t = shift + exp.sample(rng));
            }
            Self::Deterministic { value } => out.fill(value),
        }
    }
}

pub fn sample_response_times<R: Rng + ?Sized>(
    model: &ResponseTimeModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    let mut out = vec![0.0; n];
    model.sample_into(rng, &mut out);
    Ok(out)
}

/// The k-th smallest of `times` (1-based `k`). The input is not modified.
pub fn kth_order_statistic(times: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > times.len() {
        return Err(Error::KOutOfRange { k, n: times.len() });
    }
    let mut copy = times.to_vec();
    let (_, kth, _) = copy.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Means and variances of `X_(1) .. X_(n)`; index `k - 1` holds order `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatSummary {
    pub n: usize,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub method: Method,
}

impl OrderStatSummary {
    pub fn mean(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        Ok(self.means[k - 1])
    }

    pub fn variance(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        Ok(self.variances[k - 1])
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n {
            return Err(Error::KOutOfRange { k, n: self.n });
        }
        Ok(())
    }

    /// Closed-form moments, available for exponential and deterministic times.
    ///
    /// For `Exp(rate)`, `mu_k = (H_n - H_{n-k}) / rate` and
    /// `sigma_k^2 = sum_{i=n-k+1}^{n} 1 / (rate i)^2`. With
    /// `drop_rate_factor` the `1/rate` (and `1/rate^2`) scaling is omitted,
    /// i.e. `mu_k = H_n - H_{n-k}` as if the rate were one.
    pub fn analytic(model: &ResponseTimeModel, n: usize, drop_rate_factor: bool) -> Option<Self> {
        if n == 0 || model.validate().is_err() {
            return None;
        }
        let (means, variances) = match *model {
            ResponseTimeModel::Exponential { rate } => {
                let scale = if drop_rate_factor { 1.0 } else { rate };
                let mut means = Vec::with_capacity(n);
                let mut variances = Vec::with_capacity(n);
                let (mut m, mut v) = (0.0, 0.0);
                // the k-th order statistic adds the spacing 1/(rate (n-k+1))
                for i in (1..=n).rev() {
                    let term = 1.0 / (scale * i as f64);
                    m += term;
                    v += term * term;
                    means.push(m);
                    variances.push(v);
                }
                (means, variances)
            }
            ResponseTimeModel::Deterministic { value } => (vec![value; n], vec![0.0; n]),
            ResponseTimeModel::ShiftedExponential { .. } => return None,
        };
        Some(Self {
            n,
            means,
            variances,
            method: Method::Analytic,
        })
    }

    /// Estimates all `n` means and (unbiased) variances from `samples`
    /// sorted draws of `n` response times.
    pub fn monte_carlo(model: &ResponseTimeModel, n: usize, mc: MonteCarloConfig) -> Result<Self> {
        model.validate()?;
        if n == 0 || mc.samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "Monte Carlo needs n >= 1 and at least 2 samples (n={n}, samples={})",
                mc.samples
            )));
        }
        let mut rng = rng_from_seed(mc.seed);
        let mut draw = vec![0.0; n];
        let mut means = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for count in 1..=mc.samples {
            model.sample_into(&mut rng, &mut draw);
            draw.sort_unstable_by(f64::total_cmp);
            // Welford update per order
            for ((x, mean), acc) in draw.iter().zip(&mut means).zip(&mut m2) {
                let delta = x - *mean;
                *mean += delta / count as f64;
                *acc += delta * (x - *mean);
            }
        }
        let denom = (mc.samples - 1) as f64;
        Ok(Self {
            n,
            means,
            variances: m2.into_iter().map(|v| v / denom).collect(),
            method: Method::MonteCarlo {
                samples: mc.samples,
                seed: mc.seed,
            },
        })
    }

    /// Analytic moments where available, Monte Carlo otherwise.
    pub fn compute(
        model: &ResponseTimeModel,
        n: usize,
        drop_rate_factor: bool,
        mc: MonteCarloConfig,
    ) -> Result<Self> {
        model.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one worker".into()));
        }
        match Self::analytic(model, n, drop_rate_factor) {
            Some(s) => Ok(s),
            None => Self::monte_carlo(model, n, mc),
        }
    }
}

/// `mu_k` for `n` workers; Monte Carlo with [`MonteCarloConfig::default`]
/// when no closed form exists.
pub fn mean_order_statistic(model: &ResponseTimeModel, n: usize, k: usize) -> Result<f64> {
    mean_order_statistic_with(model, n, k, MonteCarloConfig::default())
}

pub fn mean_order_statistic_with(
    model: &ResponseTimeModel,
    n: usize,
    k: usize,
    mc: MonteCarloConfig,
) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    OrderStatSummary::compute(model, n, false, mc)?.mean(k)
}

/// `sigma_k^2` for `n` workers; same fallback as [`mean_order_statistic`].
pub fn var_order_statistic(model: &ResponseTimeModel, n: usize, k: usize) -> Result<f64> {
    var_order_statistic_with(model, n, k, MonteCarloConfig::default())
}

pub fn var_order_statistic_with(
    model: &ResponseTimeModel,
    n: usize,
    k: usize,
    mc: MonteCarloConfig,
) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    OrderStatSummary::compute(model, n, false, mc)?.variance(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXP1: ResponseTimeModel = ResponseTimeModel::Exponential { rate: 1.0 };

    #[test]
    fn deterministic_samples() {
        let mut rng = rng_from_seed(1);
        let m = ResponseTimeModel::Deterministic { value: 2.0 };
        assert_eq!(sample_response_times(&m, 3, &mut rng).unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn exponential_sample_means() {
        for (rate, expect, tol) in [(1.0, 1.0, 0.01), (5.0, 0.2, 0.002)] {
            let mut rng = rng_from_seed(17);
            let m = ResponseTimeModel::Exponential { rate };
            let xs = sample_response_times(&m, 1_000_000, &mut rng).unwrap();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((mean - expect).abs() < tol, "rate {rate}: {mean}");
        }
    }

    #[test]
    fn invalid_models() {
        for m in [
            ResponseTimeModel::Exponential { rate: 0.0 },
            ResponseTimeModel::ShiftedExponential { shift: -1.0, rate: 1.0 },
            ResponseTimeModel::Deterministic { value: 0.0 },
        ] {
            assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));
        }
    }

    #[test]
    fn kth_smallest() {
        let t = [3.0, 1.0, 2.0];
        assert_eq!(kth_order_statistic(&t, 1).unwrap(), 1.0);
        assert_eq!(kth_order_statistic(&t, 2).unwrap(), 2.0);
        assert_eq!(kth_order_statistic(&t, 3).unwrap(), 3.0);
        assert!(kth_order_statistic(&t, 0).is_err());
        assert!(kth_order_statistic(&t, 4).is_err());
    }

    #[test]
    fn harmonic_means() {
        let h5 = mean_order_statistic(&EXP1, 5, 5).unwrap();
        assert!((h5 - 137.0 / 60.0).abs() < 1e-15);
        let rate = 5.0;
        let single = mean_order_statistic(&ResponseTimeModel::Exponential { rate }, 1, 1).unwrap();
        assert!((single - 1.0 / rate).abs() < 1e-15);
    }

    #[test]
    fn unscaled_harmonic_means() {
        let m = ResponseTimeModel::Exponential { rate: 5.0 };
        let scaled = OrderStatSummary::analytic(&m, 5, false).unwrap();
        let raw = OrderStatSummary::analytic(&m, 5, true).unwrap();
        // H_5 - H_4 = 1/5, H_5 - H_3 = 1/5 + 1/4
        assert!((raw.mean(1).unwrap() - 0.2).abs() < 1e-15);
        assert!((raw.mean(2).unwrap() - 0.45).abs() < 1e-15);
        for k in 1..=5 {
            assert!((raw.mean(k).unwrap() / 5.0 - scaled.mean(k).unwrap()).abs() < 1e-15);
            assert!((raw.variance(k).unwrap() / 25.0 - scaled.variance(k).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_variances() {
        let det = ResponseTimeModel::Deterministic { value: 3.0 };
        assert_eq!(var_order_statistic(&det, 7, 4).unwrap(), 0.0);
        assert_eq!(var_order_statistic(&EXP1, 1, 1).unwrap(), 1.0);
        assert!((var_order_statistic(&EXP1, 5, 2).unwrap() - 0.1025).abs() < 1e-15);
    }

    #[test]
    fn shifted_exponential_minimum_by_monte_carlo() {
        let m = ResponseTimeModel::ShiftedExponential { shift: 1.0, rate: 1.0 };
        let mu = mean_order_statistic(&m, 5, 1).unwrap();
        assert!((mu - 1.2).abs() < 0.012, "{mu}");
        let s = OrderStatSummary::compute(&m, 5, false, MonteCarloConfig::default()).unwrap();
        assert!(matches!(s.method, Method::MonteCarlo { samples: 1_000_000, seed: 0 }));
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let mc = MonteCarloConfig { samples: 200_000, seed: 5 };
        for n in [1, 3, 10] {
            let a = OrderStatSummary::analytic(&EXP1, n, false).unwrap();
            let b = OrderStatSummary::monte_carlo(&EXP1, n, mc).unwrap();
            for k in 1..=n {
                let rel = (a.mean(k).unwrap() - b.mean(k).unwrap()).abs() / a.mean(k).unwrap();
                assert!(rel < 0.01, "n={n} k={k} rel={rel}");
            }
            // mu_n is the mean of the maximum
            assert_eq!(b.means[n - 1], b.mean(n).unwrap());
        }
    }

    #[test]
    fn k_out_of_range() {
        assert!(matches!(mean_order_statistic(&EXP1, 3, 4), Err(Error::KOutOfRange { k: 4, n: 3 })));
        assert!(var_order_statistic(&EXP1, 3, 0).is_err());
    }

    #[test]
    fn summary_json_round_trip() {
        let s = OrderStatSummary::analytic(&EXP1, 4, false).unwrap();
        let back: OrderStatSummary = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let m: ResponseTimeModel = serde_json::from_str(r#"{"kind":"shifted_exponential","shift":1,"rate":2}"#).unwrap();
        assert_eq!(m, ResponseTimeModel::ShiftedExponential { shift: 1.0, rate: 2.0 });
    }

    proptest! {
        #[test]
        fn kth_matches_sorting(mut xs in proptest::collection::vec(0.0f64..100.0, 1..40), pick in 0usize..40) {
            let k = pick % xs.len() + 1;
            let before = xs.clone();
            let got = kth_order_statistic(&xs, k).unwrap();
            prop_assert_eq!(&xs, &before);
            xs.sort_by(f64::total_cmp);
            prop_assert_eq!(got, xs[k - 1]);
        }

        #[test]
        fn analytic_means_increase(n in 1usize..60, rate in 0.1f64..10.0) {
            let s = OrderStatSummary::analytic(&ResponseTimeModel::Exponential { rate }, n, false).unwrap();
            prop_assert!(s.means.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.variances.iter().all(|&v| v > 0.0));
        }
    }
}
