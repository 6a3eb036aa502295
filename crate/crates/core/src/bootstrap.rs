//! Block multiplier bootstrap restricted to the estimated extremal set.
//!
//! For each signed extremal point `e = (h, t, s)` the table holds
//!
//! ```text
//! A_e[j] = l^{-1/2} Σ_{k=0}^{l-1} ε̂_{(j+k)h} K*(((j+k)/n − t) / h_n),   j = 1..n−max(l,h)+1
//! ```
//!
//! and one bootstrap draw is `max_e s·(n h_n)^{-1/2} Σ_j ν_j A_e[j]` with a
//! single standard normal vector `ν` shared by all elements. Residuals past
//! `j = n−h` do not exist and contribute zero.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{self, AcfSurface, ResidualMatrix, TimeSeries};
use crate::kernel::KernelSpec;
use crate::rng::{self, Domain};
use crate::statistic::{self, ExtremalPoint, ExtremalSet, TestReport, TuningRecord};
use crate::tuning::{self, TuningConfig};

/// Where `K*` is evaluated inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKernel {
    /// At every in-block index `(j+k)/n − t`.
    #[default]
    InBlock,
    /// Frozen at the block start `j/n − t`.
    BlockStart,
}

/// Block sums of one signed extremal point. Only the non-zero stretch
/// `offset..offset+values.len()` (0-based in `ν`) is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub point: ExtremalPoint,
    /// Full vector length `n − max(l, h) + 1`.
    pub len: usize,
    pub offset: usize,
    pub values: Vec<f64>,
}

impl BlockSums {
    #[inline]
    fn dot(&self, nu: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&nu[self.offset..self.offset + self.values.len()])
            .map(|(a, v)| a * v)
            .sum()
    }

    /// `A_e` expanded to its full length.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        out[self.offset..self.offset + self.values.len()].copy_from_slice(&self.values);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSumTable {
    pub n: usize,
    pub bandwidth: f64,
    pub block_length: usize,
    pub entries: Vec<BlockSums>,
    multiplier_len: usize,
}

impl BlockSumTable {
    /// Number of multipliers consumed by one draw.
    pub fn multiplier_len(&self) -> usize {
        self.multiplier_len
    }

    /// `(n h_n)^{-1/2}`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.n as f64 * self.bandwidth).sqrt()
    }

    /// Bootstrap statistic for a given multiplier vector.
    pub fn draw_with(&self, nu: &[f64]) -> f64 {
        assert!(nu.len() >= self.multiplier_len, "multiplier vector too short");
        let scale = self.scale();
        self.entries
            .iter()
            .map(|e| e.point.sign as f64 * scale * e.dot(nu))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Conditional standard deviation of element `idx`'s linear form.
    pub fn element_sd(&self, idx: usize) -> f64 {
        let e = &self.entries[idx];
        self.scale() * e.values.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Precomputes `A_e` for every element of `eset`.
pub fn block_sums(
    residuals: &ResidualMatrix,
    eset: &ExtremalSet,
    block_length: usize,
    spec: &KernelSpec,
    placement: BlockKernel,
) -> Result<BlockSumTable> {
    let first_row = residuals
        .rows
        .first()
        .ok_or_else(|| Error::Config("empty residual matrix".into()))?;
    let n = first_row.len() + 1;
    if block_length == 0 || block_length > n / 2 {
        return Err(Error::Config(format!(
            "block length {block_length} outside [1, {}]",
            n / 2
        )));
    }
    if eset.is_empty() {
        return Err(Error::Config("extremal set is empty".into()));
    }
    let nf = n as f64;
    let l = block_length;
    let inv_sqrt_l = 1.0 / (l as f64).sqrt();

    let entries: Vec<BlockSums> = eset
        .elements
        .iter()
        .map(|&point| {
            let row = residuals.row(point.lag);
            let t = point.j as f64 / nf;
            let len = n - l.max(point.lag) + 1;
            let mut full = vec![0.0; len];
            match placement {
                BlockKernel::InBlock => {
                    // prefix[i] = Σ_{m<i} z_m with z_m = ε̂_{(m+1)h} K*(((m+1)/n − t)/h_n)
                    let mut prefix = Vec::with_capacity(row.len() + 1);
                    prefix.push(0.0);
                    let mut acc = 0.0;
                    for (m, e) in row.iter().enumerate() {
                        acc += e * spec.kstar_weight((m + 1) as f64 / nf - t);
                        prefix.push(acc);
                    }
                    for (k, slot) in full.iter_mut().enumerate() {
                        let hi = (k + l).min(row.len());
                        let lo = k.min(hi);
                        *slot = inv_sqrt_l * (prefix[hi] - prefix[lo]);
                    }
                }
                BlockKernel::BlockStart => {
                    let mut prefix = Vec::with_capacity(row.len() + 1);
                    prefix.push(0.0);
                    let mut acc = 0.0;
                    for e in row {
                        acc += e;
                        prefix.push(acc);
                    }
                    for (k, slot) in full.iter_mut().enumerate() {
                        let w = spec.kstar_weight((k + 1) as f64 / nf - t);
                        if w != 0.0 {
                            let hi = (k + l).min(row.len());
                            let lo = k.min(hi);
                            *slot = inv_sqrt_l * w * (prefix[hi] - prefix[lo]);
                        }
                    }
                }
            }
            let start = full.iter().position(|v| *v != 0.0).unwrap_or(0);
            let end = full.iter().rposition(|v| *v != 0.0).map_or(start, |p| p + 1);
            BlockSums {
                point,
                len,
                offset: start,
                values: full[start..end].to_vec(),
            }
        })
        .collect();

    if let Some(bad) = entries.iter().find(|e| e.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!(
            "non-finite block sum at lag {}, j = {}",
            bad.point.lag, bad.point.j
        )));
    }
    let multiplier_len = entries.iter().map(|e| e.len).max().unwrap_or(0);
    Ok(BlockSumTable {
        n,
        bandwidth: spec.bandwidth,
        block_length,
        entries,
        multiplier_len,
    })
}

/// Supplies the i.i.d. multipliers `ν_j` for one draw.
pub trait MultiplierSource {
    fn fill(&mut self, out: &mut [f64]);
}

/// Standard normal multipliers from any generator.
pub struct GaussianMultipliers<R>(pub R);

impl<R: Rng> MultiplierSource for GaussianMultipliers<R> {
    fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.0.sample(StandardNormal);
        }
    }
}

/// One bootstrap draw with a fresh multiplier vector.
pub fn bootstrap_draw<M: MultiplierSource>(table: &BlockSumTable, source: &mut M) -> f64 {
    let mut nu = vec![0.0; table.multiplier_len()];
    source.fill(&mut nu);
    table.draw_with(&nu)
}

pub const MIN_BOOT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub values: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    pub bandwidth: f64,
}

impl BootstrapDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `boot` draws; draw `b` uses its own stream derived from `(seed, b)`.
pub fn bootstrap_draws(table: &BlockSumTable, boot: usize, seed: u64) -> Result<BootstrapDraws> {
    if boot < MIN_BOOT {
        return Err(Error::Config(format!(
            "at least {MIN_BOOT} bootstrap replicates required, got {boot}"
        )));
    }
    let values: Vec<f64> = (0..boot)
        .into_par_iter()
        .map_init(
            || vec![0.0; table.multiplier_len()],
            |nu, b| {
                let mut src = GaussianMultipliers(rng::stream(seed, Domain::Bootstrap, b as u64));
                src.fill(nu);
                table.draw_with(nu)
            },
        )
        .collect();
    Ok(BootstrapDraws {
        values,
        seed,
        n: table.n,
        bandwidth: table.bandwidth,
    })
}

/// Empirical `(1−α)`-quantile: order statistic `⌈B(1−α)⌉` (1-based).
pub fn bootstrap_quantile(draws: &BootstrapDraws, alpha: f64) -> Result<f64> {
    empirical_quantile(&draws.values, alpha)
}

pub(crate) fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if values.is_empty() {
        return Err(Error::Config("no bootstrap draws".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    let rank = ((b * (1.0 - alpha)) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Everything computed by one run of the test.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub report: TestReport,
    pub series: TimeSeries,
    pub surface: AcfSurface,
    pub extremal: ExtremalSet,
    pub draws: BootstrapDraws,
}

/// Full pipeline: centering, tuning, surface, extremal set, bootstrap, report.
pub fn run_test(series: &TimeSeries, config: &TuningConfig) -> Result<TestReport> {
    run_test_detailed(series, config).map(|o| o.report)
}

pub fn run_test_detailed(series: &TimeSeries, config: &TuningConfig) -> Result<TestOutcome> {
    config.validate(series.len())?;
    let mut warnings = Vec::new();

    let series = if config.center {
        let mean_spec = tuning::mean_bandwidth(series, config, &mut warnings)?;
        estimator::center_series(series, &mean_spec)?
    } else {
        series.clone()
    };

    let block_length = tuning::resolve_block_length(&series, config, &mut warnings)?;
    let bandwidth = tuning::resolve_bandwidth(&series, config, block_length, &mut warnings)?;
    let spec = KernelSpec::new(config.kernel, bandwidth)?;

    let surface = estimator::acf_surface(&series, config.lags, &spec, config.mode)?;
    let rho = match config.rho.value() {
        Some(&r) => r,
        None => statistic::rho_rule(&surface)?,
    };
    let extremal = statistic::extremal_set_with(&surface, rho, config.rho_sign);
    let grid = surface.grid_size();
    if extremal.len() * 5 > grid {
        warnings.push(format!(
            "extremal set holds {} of {} grid points; rho = {rho:.3e} may be too large",
            extremal.len(),
            grid
        ));
    }

    let resid = estimator::residuals(&series, &surface, config.residuals)?;
    let table = block_sums(&resid, &extremal, block_length, &spec, config.block_kernel())?;
    let draws = bootstrap_draws(&table, config.boot, config.seed)?;
    let q_star = bootstrap_quantile(&draws, config.alpha)?;

    let record = TuningRecord {
        bandwidth,
        lags: config.lags,
        block_length,
        rho,
        boot: config.boot,
        mode: config.mode,
        seed: config.seed,
        centered: config.center,
    };
    let mut report = statistic::build_report(&surface, config.delta, q_star, config.alpha, record)?;
    report.extremal_set_size = extremal.len();
    for w in &warnings {
        warn!("{w}");
    }
    report.warnings = warnings;
    Ok(TestOutcome {
        report,
        series,
        surface,
        extremal,
        draws,
    })
}
