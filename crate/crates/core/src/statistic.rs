//! Sup statistic, extremal sets and the test report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AcfSurface, Mode};

/// `d̂∞,n`: largest absolute value on the surface grid.
pub fn sup_statistic(surface: &AcfSurface) -> f64 {
    surface
        .points()
        .map(|(_, _, v)| v.abs())
        .fold(0.0, f64::max)
}

/// `T̂_{n,Δ} = √(n·h_n)·(d̂ − Δ)`.
pub fn test_statistic(d_hat: f64, delta: f64, n: usize, bandwidth: f64) -> f64 {
    (n as f64 * bandwidth).sqrt() * (d_hat - delta)
}

/// Dispersion-scaled extremal-set threshold
/// `ρ_n = 0.1·σ̂·√(log(n h_n) / (n h_n))`.
///
/// `σ̂²` averages, over lags, the spread of `γ̂(h, j/n)` for `j = 1..n-h`
/// around its mean, with the surface held constant outside its grid.
pub fn rho_rule(surface: &AcfSurface) -> Result<f64> {
    let nh = surface.n as f64 * surface.bandwidth;
    if nh <= 1.0 {
        return Err(Error::Config(format!(
            "n·h_n = {nh} must exceed 1 for the extremal-set threshold"
        )));
    }
    let n = surface.n;
    let mut total = 0.0;
    for curve in &surface.curves {
        let len = n - curve.lag;
        let mean = (1..=len).map(|j| curve.extended(j)).sum::<f64>() / len as f64;
        let ss: f64 = (1..=len)
            .map(|j| {
                let d = curve.extended(j) - mean;
                d * d
            })
            .sum();
        total += ss / len as f64;
    }
    let sigma = (total / surface.curves.len() as f64).sqrt();
    Ok(0.1 * sigma * (nh.ln() / nh).sqrt())
}

/// One signed point `(h, j)` of an extremal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtremalPoint {
    pub lag: usize,
    /// 1-based grid index, `t = j/n`.
    pub j: usize,
    /// `+1` or `−1`.
    pub sign: i8,
}

/// How `ρ` enters the negative branch of the extremal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSign {
    /// `−γ̂ + ρ ≥ d̂` (both branches enlarged).
    #[default]
    Enlarge,
    /// `−γ̂ − ρ ≥ d̂`. Only for debugging; breaks monotonicity in `ρ`.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSet {
    pub elements: Vec<ExtremalPoint>,
    pub rho: f64,
    pub d_hat: f64,
}

impl ExtremalSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, p: &ExtremalPoint) -> bool {
        self.elements.binary_search(p).is_ok()
    }
}

/// `Ê⁺_ρ ∪ Ê⁻_ρ` on the surface grid. Elements are sorted by `(lag, j, sign)`.
pub fn extremal_set(surface: &AcfSurface, rho: f64) -> ExtremalSet {
    extremal_set_with(surface, rho, RhoSign::Enlarge)
}

pub fn extremal_set_with(surface: &AcfSurface, rho: f64, rho_sign: RhoSign) -> ExtremalSet {
    let d_hat = sup_statistic(surface);
    let minus_rho = match rho_sign {
        RhoSign::Enlarge => rho,
        RhoSign::Matched => -rho,
    };
    let mut elements = Vec::new();
    for (lag, j, v) in surface.points() {
        if -v + minus_rho >= d_hat {
            elements.push(ExtremalPoint { lag, j, sign: -1 });
        }
        if v + rho >= d_hat {
            elements.push(ExtremalPoint { lag, j, sign: 1 });
        }
    }
    elements.sort_unstable();
    ExtremalSet {
        elements,
        rho,
        d_hat,
    }
}

/// Tuning values actually used for one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningRecord {
    pub bandwidth: f64,
    pub lags: usize,
    pub block_length: usize,
    pub rho: f64,
    pub boot: usize,
    pub mode: Mode,
    pub seed: u64,
    pub centered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestReport {
    pub n: usize,
    pub d_hat_inf: f64,
    pub delta: f64,
    pub t_stat: f64,
    pub q_star: f64,
    pub alpha: f64,
    pub reject: bool,
    pub adaptive_delta: f64,
    pub extremal_set_size: usize,
    pub grid_size: usize,
    pub tuning: TuningRecord,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestReport {
    /// Decision for another `Δ` with the same bootstrap quantile.
    pub fn reject_at(&self, delta: f64) -> bool {
        test_statistic(self.d_hat_inf, delta, self.n, self.tuning.bandwidth) >= self.q_star
    }
}

/// `max(0, d̂ − q*·(n h_n)^{-1/2})`.
pub fn adaptive_delta(d_hat: f64, q_star: f64, n: usize, bandwidth: f64) -> f64 {
    (d_hat - q_star / (n as f64 * bandwidth).sqrt()).max(0.0)
}

pub fn build_report(
    surface: &AcfSurface,
    delta: f64,
    q_star: f64,
    alpha: f64,
    tuning: TuningRecord,
) -> Result<TestReport> {
    if !q_star.is_finite() {
        return Err(Error::Config(format!("bootstrap quantile is not finite: {q_star}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta must be non-negative, got {delta}")));
    }
    let d_hat = sup_statistic(surface);
    let t_stat = test_statistic(d_hat, delta, surface.n, surface.bandwidth);
    Ok(TestReport {
        n: surface.n,
        d_hat_inf: d_hat,
        delta,
        t_stat,
        q_star,
        alpha,
        reject: t_stat >= q_star,
        adaptive_delta: adaptive_delta(d_hat, q_star, surface.n, surface.bandwidth),
        extremal_set_size: 0,
        grid_size: surface.grid_size(),
        tuning,
        warnings: Vec::new(),
    })
}
