//! Ablated likelihoods, ablated information and bootstrap intervals.
//!
//! ```text
//! A(f, k) = (L_ablated - L_full) / (L_none - L_full)
//! ```
//!
//! Values outside `[0, 1]` are reported as they come out: a filtered prefix
//! can beat the full-information model on a finite sample.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no windows to aggregate")]
    NoWindows,
    #[error("window {0} has no scored positions")]
    EmptyWindow(String),
    #[error("log-probability {value} in window {window} is not a finite value <= 0")]
    InvalidScore { window: String, value: f64 },
    #[error("reports disagree on {0}")]
    Mismatch(&'static str),
    #[error("no reports to average")]
    NoSeeds,
    #[error("invalid bootstrap settings: {0}")]
    InvalidBootstrap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowKey {
    pub doc_id: String,
    pub start: usize,
}

impl std::fmt::Display for WindowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.doc_id, self.start)
    }
}

/// Held-out NLL of one arm in one stratum, in nats per word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub spec: String,
    pub condition: String,
    pub seeds: Vec<u64>,
    pub windows: Vec<WindowKey>,
    pub position_counts: Vec<usize>,
    pub per_window_nll: Vec<f64>,
    pub mean_nll: f64,
    pub window_count: usize,
}

fn weighted_mean(values: &[f64], weights: &[usize]) -> f64 {
    let total: usize = weights.iter().sum();
    values
        .iter()
        .zip(weights)
        .map(|(v, &w)| v * w as f64)
        .sum::<f64>()
        / total as f64
}

impl LikelihoodReport {
    fn from_windows(
        spec: &str,
        condition: &str,
        seeds: Vec<u64>,
        windows: Vec<WindowKey>,
        position_counts: Vec<usize>,
        per_window_nll: Vec<f64>,
    ) -> Self {
        let mean_nll = weighted_mean(&per_window_nll, &position_counts);
        Self {
            spec: spec.to_string(),
            condition: condition.to_string(),
            seeds,
            window_count: windows.len(),
            windows,
            position_counts,
            per_window_nll,
            mean_nll,
        }
    }

    /// The same report with every per-position NLL shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let nll: Vec<f64> = self.per_window_nll.iter().map(|v| v + c).collect();
        Self::from_windows(
            &self.spec,
            &self.condition,
            self.seeds.clone(),
            self.windows.clone(),
            self.position_counts.clone(),
            nll,
        )
    }

    fn same_windows(&self, other: &Self) -> Result<(), MetricsError> {
        if self.condition != other.condition {
            return Err(MetricsError::Mismatch("condition"));
        }
        if self.windows != other.windows || self.position_counts != other.position_counts {
            return Err(MetricsError::Mismatch("window set"));
        }
        Ok(())
    }
}

/// Negate and average log-probabilities per window, then across windows
/// weighted by scored-position counts.
pub fn aggregate_likelihood(
    spec: &str,
    condition: &str,
    seed: u64,
    windows: &[(WindowKey, Vec<f64>)],
) -> Result<LikelihoodReport, MetricsError> {
    if windows.is_empty() {
        return Err(MetricsError::NoWindows);
    }
    let mut keys = Vec::with_capacity(windows.len());
    let mut counts = Vec::with_capacity(windows.len());
    let mut nll = Vec::with_capacity(windows.len());
    for (key, scores) in windows {
        if scores.is_empty() {
            return Err(MetricsError::EmptyWindow(key.to_string()));
        }
        if let Some(&value) = scores.iter().find(|v| !(v.is_finite() && **v <= 0.0)) {
            return Err(MetricsError::InvalidScore {
                window: key.to_string(),
                value,
            });
        }
        keys.push(key.clone());
        counts.push(scores.len());
        nll.push(-scores.iter().sum::<f64>() / scores.len() as f64);
    }
    Ok(LikelihoodReport::from_windows(
        spec,
        condition,
        vec![seed],
        keys,
        counts,
        nll,
    ))
}

/// Pointwise mean of per-window NLLs across seeds.
pub fn average_over_seeds(reports: &[LikelihoodReport]) -> Result<LikelihoodReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoSeeds)?;
    for r in &reports[1..] {
        first.same_windows(r)?;
        if r.spec != first.spec {
            return Err(MetricsError::Mismatch("spec"));
        }
    }
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    let k = reports.len() as f64;
    let nll: Vec<f64> = (0..first.window_count)
        .map(|i| reports.iter().map(|r| r.per_window_nll[i]).sum::<f64>() / k)
        .collect();
    let mut seeds: Vec<u64> = reports.iter().flat_map(|r| r.seeds.iter().copied()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    Ok(LikelihoodReport::from_windows(
        &first.spec,
        &first.condition,
        seeds,
        first.windows.clone(),
        first.position_counts.clone(),
        nll,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.resamples < 100 {
            return Err(MetricsError::InvalidBootstrap(format!(
                "{} resamples, need at least 100",
                self.resamples
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(MetricsError::InvalidBootstrap(format!(
                "confidence {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblatedInformationResult {
    pub spec: String,
    pub condition: String,
    /// `None` when the denominator is not positive.
    pub a: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub degenerate: bool,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Set when the interval could not be estimated from resamples.
    pub ci_degenerate: bool,
    pub seeds_used: Vec<u64>,
    pub window_count: usize,
    pub nll_ablated: f64,
    pub nll_full: f64,
    pub nll_none: f64,
}

fn ratio(abl: f64, full: f64, none: f64) -> Option<f64> {
    let den = none - full;
    (den > 0.0).then(|| (abl - full) / den)
}

/// `A = (L_ablated - L_full) / (L_none - L_full)` with a percentile
/// bootstrap interval over windows.
pub fn ablated_information(
    ablated: &LikelihoodReport,
    full: &LikelihoodReport,
    none: &LikelihoodReport,
    bootstrap: &BootstrapConfig,
) -> Result<AblatedInformationResult, MetricsError> {
    ablated.same_windows(full)?;
    ablated.same_windows(none)?;
    let numerator = ablated.mean_nll - full.mean_nll;
    let denominator = none.mean_nll - full.mean_nll;
    let a = ratio(ablated.mean_nll, full.mean_nll, none.mean_nll);
    let (ci_low, ci_high, ci_degenerate) = match a {
        None => (None, None, true),
        Some(a) => {
            let (lo, hi, degenerate) = bootstrap_ci(ablated, full, none, bootstrap)?;
            (Some(lo.min(a)), Some(hi.max(a)), degenerate)
        }
    };
    let mut seeds: Vec<u64> = [ablated, full, none]
        .iter()
        .flat_map(|r| r.seeds.iter().copied())
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    Ok(AblatedInformationResult {
        spec: ablated.spec.clone(),
        condition: ablated.condition.clone(),
        a,
        numerator,
        denominator,
        degenerate: a.is_none(),
        ci_low,
        ci_high,
        ci_degenerate,
        seeds_used: seeds,
        window_count: ablated.window_count,
        nll_ablated: ablated.mean_nll,
        nll_full: full.mean_nll,
        nll_none: none.mean_nll,
    })
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// A over a multiset of window indices.
pub fn resampled_ratio(
    indices: &[usize],
    ablated: &LikelihoodReport,
    full: &LikelihoodReport,
    none: &LikelihoodReport,
) -> Option<f64> {
    let mut sums = [0.0f64; 3];
    let mut total = 0usize;
    for &i in indices {
        let w = ablated.position_counts[i];
        total += w;
        for (s, r) in sums.iter_mut().zip([ablated, full, none]) {
            *s += r.per_window_nll[i] * w as f64;
        }
    }
    let t = total as f64;
    ratio(sums[0] / t, sums[1] / t, sums[2] / t)
}

/// Percentile bootstrap over windows. Each resample draws from its own
/// substream of `config.seed`, so the interval does not depend on thread
/// count. Resamples with a non-positive denominator are dropped. Returns
/// `(low, high, degenerate)`; fewer than two windows give a zero-width
/// interval at the point estimate.
pub fn bootstrap_ci(
    ablated: &LikelihoodReport,
    full: &LikelihoodReport,
    none: &LikelihoodReport,
    config: &BootstrapConfig,
) -> Result<(f64, f64, bool), MetricsError> {
    config.validate()?;
    ablated.same_windows(full)?;
    ablated.same_windows(none)?;
    let point = ratio(ablated.mean_nll, full.mean_nll, none.mean_nll);
    let n = ablated.window_count;
    if n < 2 {
        let a = point.unwrap_or(f64::NAN);
        return Ok((a, a, true));
    }
    let mut values: Vec<f64> = (0..config.resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = rng::stream(rng::mix(&[config.seed, r as u64]));
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            resampled_ratio(&idx, ablated, full, none)
        })
        .collect();
    if values.is_empty() {
        let a = point.unwrap_or(f64::NAN);
        return Ok((a, a, true));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - config.confidence) / 2.0;
    Ok((percentile(&values, tail), percentile(&values, 1.0 - tail), false))
}
