//! Data-driven block length and bandwidth, and the test configuration.
//!
//! Block length: Politis–White automatic selection (with the Patton–Politis–
//! White correction) applied to each lag-product sequence, averaged over lags.
//! Bandwidth: blocked leave-out cross-validation of the local linear smoother
//! on each lag-product sequence, averaged over lags and clamped to
//! `[n^{-1/5}, n^{-1/7}]`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::bootstrap::{BlockKernel, MIN_BOOT};
use crate::error::{Error, Result};
use crate::estimator::{self, grid_fit, Mode, ResidualScheme, TimeSeries};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::statistic::RhoSign;

/// Minimum series length for the automatic selectors.
pub const MIN_TUNING_LEN: usize = 50;

/// Number of bandwidth candidates in the cross-validation grid.
pub const CV_CANDIDATES: usize = 25;

/// Largest bandwidth ever returned by the automatic selector; keeps
/// `I_{n,h} = [h_n, 1-h_n]` non-empty for short series.
const MAX_AUTO_BANDWIDTH: f64 = 0.45;

/// Upper bound on cross-validation evaluation points per lag.
const CV_MAX_POINTS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// Either `"auto"` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting<T> {
    Auto(Auto),
    Value(T),
}

impl<T> Setting<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Setting::Auto(_) => None,
            Setting::Value(v) => Some(v),
        }
    }

    pub fn is_auto(&self) -> bool {
        matches!(self, Setting::Auto(_))
    }
}

impl<T> Default for Setting<T> {
    fn default() -> Self {
        Setting::Auto(Auto::Auto)
    }
}

impl<T: FromStr> FromStr for Setting<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Setting::Auto(Auto::Auto));
        }
        s.parse()
            .map(Setting::Value)
            .map_err(|_| Error::Config(format!("expected `auto` or a number, got `{s}`")))
    }
}

impl<T: fmt::Display> fmt::Display for Setting<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Auto(_) => f.write_str("auto"),
            Setting::Value(v) => v.fmt(f),
        }
    }
}

/// All knobs of one test run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TuningConfig {
    pub bandwidth: Setting<f64>,
    pub block_length: Setting<usize>,
    pub lags: usize,
    pub rho: Setting<f64>,
    pub boot: usize,
    pub alpha: f64,
    pub delta: f64,
    pub mode: Mode,
    pub seed: u64,
    pub center: bool,
    pub kernel: KernelFamily,
    pub residuals: ResidualScheme,
    /// Evaluate `K*` at the block start instead of at every in-block index.
    pub kernel_at_block_start: bool,
    pub rho_sign: RhoSign,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            bandwidth: Setting::default(),
            block_length: Setting::default(),
            lags: 3,
            rho: Setting::default(),
            boot: 2000,
            alpha: 0.05,
            delta: 0.0,
            mode: Mode::Correlation,
            seed: 0,
            center: false,
            kernel: KernelFamily::Triweight,
            residuals: ResidualScheme::FirstOrder,
            kernel_at_block_start: false,
            rho_sign: RhoSign::Enlarge,
        }
    }
}

impl TuningConfig {
    pub fn block_kernel(&self) -> BlockKernel {
        if self.kernel_at_block_start {
            BlockKernel::BlockStart
        } else {
            BlockKernel::InBlock
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if let Some(&b) = self.bandwidth.value() {
            if !(b > 0.0 && b < 0.5) {
                return fail(format!("bandwidth {b} outside (0, 1/2)"));
            }
        }
        if let Some(&l) = self.block_length.value() {
            if l == 0 || l > n / 2 {
                return fail(format!("block length {l} outside [1, {}]", n / 2));
            }
        }
        if self.lags == 0 || 4 * self.lags >= n {
            return fail(format!("lags = {} must satisfy 1 <= d_n < n/4 = {}", self.lags, n as f64 / 4.0));
        }
        if let Some(&r) = self.rho.value() {
            if !(r >= 0.0) {
                return fail(format!("rho {r} must be non-negative"));
            }
        }
        if self.boot < MIN_BOOT {
            return fail(format!("boot = {} below the minimum {MIN_BOOT}", self.boot));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.delta >= 0.0) {
            return fail(format!("delta {} must be non-negative", self.delta));
        }
        Ok(())
    }
}

/// A selected tuning value with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned<T> {
    pub value: T,
    /// Average over lags before rounding or clamping.
    pub raw: f64,
    pub per_lag: Vec<f64>,
    pub warnings: Vec<String>,
}

fn check_len(series: &TimeSeries) -> Result<()> {
    if series.len() < MIN_TUNING_LEN {
        return Err(Error::TooShort {
            n: series.len(),
            min: MIN_TUNING_LEN,
        });
    }
    Ok(())
}

/// Flat-top lag window `λ(x)`.
fn flat_top(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.5 {
        1.0
    } else if a <= 1.0 {
        2.0 * (1.0 - a)
    } else {
        0.0
    }
}

/// Politis–White block length for the circular/moving block bootstrap, or
/// `None` for a zero-variance sequence.
pub fn politis_white(z: &[f64]) -> Option<f64> {
    let n = z.len();
    let nf = n as f64;
    let mean = z.iter().sum::<f64>() / nf;
    let c: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let acov = |k: usize| c[k..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / nf;
    let r0 = acov(0);
    if !(r0 > 0.0) || !r0.is_finite() {
        return None;
    }
    let kn = 5usize.max(nf.log10().sqrt().ceil() as usize);
    let m_max = (nf.sqrt().ceil() as usize + kn).min(n - 1);
    let b_max = (3.0 * nf.sqrt()).min(nf / 3.0).ceil();
    let crit = 2.0 * (nf.log10() / nf).sqrt();

    let rho: Vec<f64> = (1..=m_max).map(|k| acov(k) / r0).collect();
    let insignificant: Vec<bool> = rho.iter().map(|r| r.abs() < crit).collect();
    // First lag m whose run m..m+kn-1 is entirely insignificant.
    let run_start = (0..m_max.saturating_sub(kn) + 1)
        .find(|&i| i + kn <= m_max && insignificant[i..i + kn].iter().all(|&b| b))
        .map(|i| i + 1);
    let m_hat = match run_start {
        Some(m) => m,
        None => rho
            .iter()
            .enumerate()
            .filter(|(_, r)| r.abs() >= crit)
            .map(|(i, _)| i + 1)
            .max()
            .unwrap_or(1),
    };
    let big_m = (2 * m_hat).min(m_max);

    let mut g = 0.0;
    let mut lrv = r0;
    for k in 1..=big_m {
        let w = flat_top(k as f64 / big_m as f64);
        let rk = acov(k);
        g += 2.0 * w * k as f64 * rk;
        lrv += 2.0 * w * rk;
    }
    let d = 4.0 / 3.0 * lrv * lrv;
    if !(d > 0.0) {
        return Some(1.0);
    }
    let b = (2.0 * g * g / d).cbrt() * nf.cbrt();
    Some(b.clamp(1.0, b_max))
}

/// Average Politis–White block length over the lag products `h = 1..d_n`.
pub fn select_block_length(series: &TimeSeries, lags: usize) -> Result<Tuned<usize>> {
    check_len(series)?;
    let n = series.len();
    let mut warnings = Vec::new();
    let fallback = (n as f64).cbrt().ceil();
    let per_lag: Vec<f64> = (1..=lags)
        .map(|h| {
            let y = estimator::lag_products(series, h)?;
            Ok(politis_white(&y).unwrap_or_else(|| {
                warnings.push(format!(
                    "lag {h}: zero-variance lag products, block length falls back to {fallback}"
                ));
                fallback
            }))
        })
        .collect::<Result<_>>()?;
    let raw = per_lag.iter().sum::<f64>() / per_lag.len() as f64;
    let cap = ((n / 2).max(1)) as f64;
    Ok(Tuned {
        value: raw.round().clamp(1.0, cap) as usize,
        raw,
        per_lag,
        warnings,
    })
}

/// Geometric grid of `CV_CANDIDATES` bandwidths on `[0.25 n^{-1/5}, 4 n^{-1/7}]`.
pub fn bandwidth_candidates(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let lo = 0.25 * nf.powf(-0.2);
    let hi = 4.0 * nf.powf(-1.0 / 7.0);
    let steps = (CV_CANDIDATES - 1) as f64;
    (0..CV_CANDIDATES)
        .map(|k| lo * (hi / lo).powf(k as f64 / steps))
        .collect()
}

/// `[n^{-1/5}, n^{-1/7}]`, capped so the interior grid stays non-empty.
pub fn bandwidth_band(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let hi = nf.powf(-1.0 / 7.0).min(MAX_AUTO_BANDWIDTH);
    (nf.powf(-0.2).min(hi), hi)
}

/// Blocked leave-out CV score: mean squared error of predicting `y_j` from a
/// local linear fit that omits indices `|i − j| < block`.
pub fn cv_score(y: &[f64], n: usize, family: KernelFamily, bandwidth: f64, block: usize) -> f64 {
    let spec = KernelSpec::unchecked(family, bandwidth);
    let m = y.len();
    let stride = m.div_ceil(CV_MAX_POINTS).max(1);
    let reach = block.max(1) - 1;
    let mut sse = 0.0;
    let mut count = 0usize;
    let mut tried = 0usize;
    for j in (1..=m).step_by(stride) {
        tried += 1;
        let skip = (j.saturating_sub(reach).max(1), j + reach);
        if let Ok(fit) = grid_fit(y, n, j as f64 / n as f64, &spec, Some(skip), None) {
            let e = y[j - 1] - fit.c0;
            sse += e * e;
            count += 1;
        }
    }
    if count * 2 < tried {
        return f64::INFINITY;
    }
    sse / count as f64
}

/// CV-optimal bandwidth for a generic signal, or `None` when no candidate
/// produced a finite score.
pub fn cv_bandwidth(y: &[f64], n: usize, family: KernelFamily, block: usize) -> Option<f64> {
    bandwidth_candidates(n)
        .into_iter()
        .map(|b| (b, cv_score(y, n, family, b, block)))
        .filter(|(_, s)| s.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(b, _)| b)
}

/// Cross-validated bandwidth averaged over the lag products `h = 1..d_n`,
/// clamped to [`bandwidth_band`].
pub fn select_bandwidth(series: &TimeSeries, lags: usize, block: usize, family: KernelFamily) -> Result<Tuned<f64>> {
    check_len(series)?;
    let n = series.len();
    let fallback = (n as f64).powf(-0.2);
    let mut warnings = Vec::new();
    let per_lag: Vec<f64> = (1..=lags)
        .map(|h| {
            let y = estimator::lag_products(series, h)?;
            Ok(cv_bandwidth(&y, n, family, block).unwrap_or_else(|| {
                warnings.push(format!("lag {h}: no finite CV score, bandwidth falls back to {fallback:.4}"));
                fallback
            }))
        })
        .collect::<Result<_>>()?;
    let raw = per_lag.iter().sum::<f64>() / per_lag.len() as f64;
    let (lo, hi) = bandwidth_band(n);
    Ok(Tuned {
        value: raw.clamp(lo, hi),
        raw,
        per_lag,
        warnings,
    })
}

pub(crate) fn resolve_block_length(series: &TimeSeries, config: &TuningConfig, warnings: &mut Vec<String>) -> Result<usize> {
    let n = series.len();
    let l = match config.block_length.value() {
        Some(&l) => l,
        None => {
            let t = select_block_length(series, config.lags)?;
            warnings.extend(t.warnings);
            t.value
        }
    };
    let nf = n as f64;
    let (lo, hi) = (nf.powf(0.325), nf.cbrt());
    if (l as f64) < lo || (l as f64) > hi {
        warnings.push(format!(
            "block length {l} outside the theory band [n^0.325, n^(1/3)] = [{lo:.2}, {hi:.2}]"
        ));
    }
    Ok(l)
}

pub(crate) fn resolve_bandwidth(
    series: &TimeSeries,
    config: &TuningConfig,
    block: usize,
    warnings: &mut Vec<String>,
) -> Result<f64> {
    let n = series.len();
    match config.bandwidth.value() {
        Some(&b) => {
            let nf = n as f64;
            let (lo, hi) = (nf.powf(-0.2), nf.powf(-1.0 / 7.0));
            if b < lo || b > hi {
                warnings.push(format!(
                    "bandwidth {b} outside [n^(-1/5), n^(-1/7)] = [{lo:.4}, {hi:.4}]"
                ));
            }
            Ok(b)
        }
        None => {
            let t = select_bandwidth(series, config.lags, block, config.kernel)?;
            warnings.extend(t.warnings);
            Ok(t.value)
        }
    }
}

/// Kernel for mean removal: explicit bandwidth if given, otherwise CV on the
/// series itself with its own Politis–White block length.
pub(crate) fn mean_bandwidth(series: &TimeSeries, config: &TuningConfig, warnings: &mut Vec<String>) -> Result<KernelSpec> {
    if let Some(&b) = config.bandwidth.value() {
        return KernelSpec::new(config.kernel, b);
    }
    check_len(series)?;
    let n = series.len();
    let x = series.values();
    let block = politis_white(x).map_or(1, |b| b.round() as usize).clamp(1, n / 2);
    let b = cv_bandwidth(x, n, config.kernel, block).unwrap_or_else(|| {
        warnings.push("mean removal: no finite CV score, using n^(-1/5)".into());
        (n as f64).powf(-0.2)
    });
    let (lo, hi) = bandwidth_band(n);
    KernelSpec::new(config.kernel, b.clamp(lo, hi))
}
