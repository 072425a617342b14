//! Maximum-likelihood fits of four candidate distributions to a positive sample,
//! AIC model selection and bootstrapped shape statistics.

use std::f64::consts::PI;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

pub const MIN_SAMPLE: usize = 10;
pub const NEWTON_MAX_ITER: usize = 200;
const NEWTON_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistModel {
    Normal,
    Lognormal,
    Gamma,
    Weibull,
}

impl DistModel {
    pub const ALL: [DistModel; 4] = [DistModel::Normal, DistModel::Lognormal, DistModel::Gamma, DistModel::Weibull];

    pub fn label(self) -> &'static str {
        match self {
            DistModel::Normal => "normal",
            DistModel::Lognormal => "lognormal",
            DistModel::Gamma => "gamma",
            DistModel::Weibull => "weibull",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFit {
    pub model: DistModel,
    /// Normal and lognormal: `mean`, `sd`. Gamma: `shape`, `scale`. Weibull: `shape`, `scale`.
    pub parameters: IndexMap<String, f64>,
    pub log_likelihood: f64,
    pub aic: f64,
}

impl ModelFit {
    fn new(model: DistModel, params: [(&str, f64); 2], log_likelihood: f64) -> Self {
        ModelFit {
            model,
            parameters: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            log_likelihood,
            aic: 2.0 * params.len() as f64 - 2.0 * log_likelihood,
        }
    }

    pub fn param(&self, name: &str) -> f64 {
        self.parameters[name]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub seed: u64,
    pub skewness_mean: f64,
    pub skewness_sd: f64,
    pub kurtosis_mean: f64,
    pub kurtosis_sd: f64,
    /// `(skewness, kurtosis)` per resample.
    #[serde(default, skip_serializing)]
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistFitResult {
    pub n: usize,
    pub models: Vec<ModelFit>,
    pub best_model: DistModel,
    pub skewness: f64,
    /// Non-excess kurtosis (3 for a normal population).
    pub kurtosis: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

impl DistFitResult {
    pub fn fit(&self, model: DistModel) -> &ModelFit {
        self.models.iter().find(|m| m.model == model).expect("all models are fitted")
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "{} observations, need at least {MIN_SAMPLE}",
            sample.len()
        )));
    }
    if let Some(bad) = sample.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::DomainError(format!("sample value {bad} is not positive and finite")));
    }
    if sample.iter().all(|v| *v == sample[0]) {
        return Err(Error::ZeroVariance);
    }
    Ok(())
}

fn mean_and_pop_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    (mu, var)
}

pub fn fit_normal(sample: &[f64]) -> ModelFit {
    let n = sample.len() as f64;
    let (mu, var) = mean_and_pop_var(sample);
    let ll = -0.5 * n * (2.0 * PI * var).ln() - 0.5 * n;
    ModelFit::new(DistModel::Normal, [("mean", mu), ("sd", var.sqrt())], ll)
}

/// Normal fit of `ln x`; `mean` and `sd` are on the log scale.
pub fn fit_lognormal(sample: &[f64]) -> ModelFit {
    let logs: Vec<f64> = sample.iter().map(|x| x.ln()).collect();
    let normal = fit_normal(&logs);
    let ll = normal.log_likelihood - logs.iter().sum::<f64>();
    ModelFit::new(DistModel::Lognormal, [("mean", normal.param("mean")), ("sd", normal.param("sd"))], ll)
}

/// First derivative of the digamma function.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0
        + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))))
}

/// Safeguarded Newton iteration for a root of a monotone function on `(lo, hi)`.
/// `f` returns the value and derivative. Falls back to bisection whenever a
/// Newton step leaves the bracket.
fn newton_bracketed(
    what: &'static str,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    increasing: bool,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    let mut x = start.clamp(lo, hi);
    let mut trace = Vec::new();
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, dfx) = f(x);
        trace.push(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= NEWTON_RTOL * x.abs() || (hi - lo) <= NEWTON_RTOL * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Unconverged {
        what,
        iterations: NEWTON_MAX_ITER,
        trace,
    })
}

/// Expands `hi` until `f(hi)` has the sign it takes to the right of the root.
fn upper_bracket(mut hi: f64, increasing: bool, f: impl Fn(f64) -> f64) -> Option<f64> {
    for _ in 0..200 {
        let v = f(hi);
        if v.is_finite() && ((v > 0.0) == increasing) {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}

fn lower_bracket(mut lo: f64, increasing: bool, f: impl Fn(f64) -> f64) -> Option<f64> {
    for _ in 0..200 {
        let v = f(lo);
        if v.is_finite() && ((v < 0.0) == increasing) {
            return Some(lo);
        }
        lo /= 2.0;
    }
    None
}

pub fn fit_gamma(sample: &[f64]) -> Result<ModelFit> {
    let n = sample.len() as f64;
    let (mu, var) = mean_and_pop_var(sample);
    let mean_log = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mu.ln() - mean_log;
    if !(s > 0.0) {
        return Err(Error::ZeroVariance);
    }
    // ln k - digamma(k) decreases from +inf to 0, so there is one root for s > 0.
    let g = |k: f64| k.ln() - digamma(k) - s;
    let start = mu * mu / var;
    let unconverged = || Error::Unconverged {
        what: "gamma shape",
        iterations: 0,
        trace: vec![start],
    };
    let hi = upper_bracket(start.max(1.0), false, g).ok_or_else(unconverged)?;
    let lo = lower_bracket(start.min(1.0), false, g).ok_or_else(unconverged)?;
    let k = newton_bracketed("gamma shape", lo, hi, start, false, |k| (g(k), 1.0 / k - trigamma(k)))?;
    let scale = mu / k;
    let sum_log: f64 = sample.iter().map(|x| x.ln()).sum();
    let ll = (k - 1.0) * sum_log - n * mu / scale - n * ln_gamma(k) - n * k * scale.ln();
    Ok(ModelFit::new(DistModel::Gamma, [("shape", k), ("scale", scale)], ll))
}

pub fn fit_weibull(sample: &[f64]) -> Result<ModelFit> {
    let n = sample.len() as f64;
    let xmax = sample.iter().copied().fold(f64::MIN, f64::max);
    let logs: Vec<f64> = sample.iter().map(|x| x.ln()).collect();
    let rel: Vec<f64> = sample.iter().map(|x| (x / xmax).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;

    // Profile score sum(x^k ln x) / sum(x^k) - 1/k - mean(ln x), increasing in k.
    let moments = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (r, l) in rel.iter().zip(&logs) {
            let w = (k * r).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        (s0, s1, s2)
    };
    let h = |k: f64| {
        let (s0, s1, _) = moments(k);
        s1 / s0 - 1.0 / k - mean_log
    };
    let dh = |k: f64| {
        let (s0, s1, s2) = moments(k);
        let ratio = s1 / s0;
        s2 / s0 - ratio * ratio + 1.0 / (k * k)
    };
    let (_, var_log) = mean_and_pop_var(&logs);
    let start = PI / (6.0 * var_log).sqrt();
    let unconverged = || Error::Unconverged {
        what: "weibull shape",
        iterations: 0,
        trace: vec![start],
    };
    let hi = upper_bracket(start.max(1.0), true, h).ok_or_else(unconverged)?;
    let lo = lower_bracket(start.min(1.0), true, h).ok_or_else(unconverged)?;
    let k = newton_bracketed("weibull shape", lo, hi, start, true, |k| (h(k), dh(k)))?;
    let (s0, _, _) = moments(k);
    let scale = xmax * (s0 / n).powf(1.0 / k);
    let sum_log: f64 = logs.iter().sum();
    let ll = n * k.ln() - n * k * scale.ln() + (k - 1.0) * sum_log
        - sample.iter().map(|x| (x / scale).powf(k)).sum::<f64>();
    Ok(ModelFit::new(DistModel::Weibull, [("shape", k), ("scale", scale)], ll))
}

/// Bias-corrected sample skewness and (non-excess) kurtosis.
pub fn shape_statistics(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mu = sample.iter().sum::<f64>() / n;
    let central = |p: i32| sample.iter().map(|x| (x - mu).powi(p)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let skew = (n * (n - 1.0)).sqrt() / (n - 2.0) * m3 / m2.powf(1.5);
    let kurt = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * m4 / (m2 * m2) - 3.0 * (n - 1.0)) + 3.0;
    (skew, kurt)
}

/// Skewness and kurtosis over `resamples` bootstrap draws. Resample `b` uses
/// stream `b` of a ChaCha8 generator seeded with `seed`, so results do not
/// depend on evaluation order.
pub fn bootstrap_shape(sample: &[f64], resamples: usize, seed: u64) -> BootstrapSummary {
    let n = sample.len();
    let pairs: Vec<(f64, f64)> = (0..resamples)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let draw: Vec<f64> = (0..n).map(|_| sample[rng.random_range(0..n)]).collect();
            shape_statistics(&draw)
        })
        .collect();
    let finite: Vec<(f64, f64)> = pairs.iter().copied().filter(|(s, k)| s.is_finite() && k.is_finite()).collect();
    let skews: Vec<f64> = finite.iter().map(|p| p.0).collect();
    let kurts: Vec<f64> = finite.iter().map(|p| p.1).collect();
    let summary = |v: &[f64]| {
        if v.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        (m, sd)
    };
    let (skewness_mean, skewness_sd) = summary(&skews);
    let (kurtosis_mean, kurtosis_sd) = summary(&kurts);
    BootstrapSummary {
        resamples,
        seed,
        skewness_mean,
        skewness_sd,
        kurtosis_mean,
        kurtosis_sd,
        pairs,
    }
}

/// Fits normal, lognormal, gamma and Weibull models and picks the lowest AIC
/// (earlier models in that order win exact ties).
pub fn fit_distributions(sample: &[f64], bootstrap: Option<(usize, u64)>) -> Result<DistFitResult> {
    check_sample(sample)?;
    let models = vec![fit_normal(sample), fit_lognormal(sample), fit_gamma(sample)?, fit_weibull(sample)?];
    let best_model = models
        .iter()
        .fold(None::<&ModelFit>, |best, m| match best {
            Some(b) if b.aic <= m.aic => Some(b),
            _ => Some(m),
        })
        .map(|m| m.model)
        .expect("four models");
    let (skewness, kurtosis) = shape_statistics(sample);
    Ok(DistFitResult {
        n: sample.len(),
        models,
        best_model,
        skewness,
        kurtosis,
        bootstrap: bootstrap.map(|(b, seed)| bootstrap_shape(sample, b, seed)),
    })
}

/// Bootstrap pairs as CSV with a `resample,skewness,kurtosis` header.
pub fn bootstrap_csv(summary: &BootstrapSummary) -> String {
    let mut out = String::from("resample,skewness,kurtosis\n");
    for (i, (s, k)) in summary.pairs.iter().enumerate() {
        out.push_str(&format!("{i},{s},{k}\n"));
    }
    out
}
