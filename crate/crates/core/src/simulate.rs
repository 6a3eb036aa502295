//! tvAR(1) data generation and rejection-curve experiments.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap;
use crate::error::{Error, Result};
use crate::estimator::TimeSeries;
use crate::rng::{self, Domain};
use crate::tuning::TuningConfig;

/// Minimum number of replications for [`rejection_curve`].
pub const MIN_REPLICATIONS: usize = 100;

/// Coefficient function `φ(t)` of the recursion `X_i = φ(i/n) X_{i-1} + ε_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiFunction {
    /// `0.2 sin(2πt)`
    Sin02,
    /// `0.2`
    Const02,
    Constant(f64),
}

impl PhiFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            PhiFunction::Sin02 => 0.2 * (2.0 * PI * t).sin(),
            PhiFunction::Const02 => 0.2,
            PhiFunction::Constant(c) => c,
        }
    }

    /// `sup_t |φ(t)|`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            PhiFunction::Sin02 | PhiFunction::Const02 => 0.2,
            PhiFunction::Constant(c) => c.abs(),
        }
    }
}

impl fmt::Display for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiFunction::Sin02 => f.write_str("sin02"),
            PhiFunction::Const02 => f.write_str("const02"),
            PhiFunction::Constant(c) => write!(f, "const({c})"),
        }
    }
}

impl FromStr for PhiFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "sin02" => Ok(PhiFunction::Sin02),
            "const02" => Ok(PhiFunction::Const02),
            _ => {
                let inner = lower
                    .strip_prefix("const(")
                    .and_then(|r| r.strip_suffix(')'))
                    .unwrap_or(&lower);
                inner
                    .parse()
                    .map(PhiFunction::Constant)
                    .map_err(|_| Error::Config(format!("unknown design `{s}`; expected sin02, const02 or a number")))
            }
        }
    }
}

/// Simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub phi: PhiFunction,
    pub n: usize,
    pub replications: usize,
    pub delta_grid: Vec<f64>,
    pub lags: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub burn_in: usize,
}

impl SimDesign {
    pub fn new(phi: PhiFunction, n: usize) -> Self {
        SimDesign {
            phi,
            n,
            replications: 1000,
            delta_grid: (0..=10).map(|k| k as f64 * 0.03).collect(),
            lags: vec![3],
            alpha: 0.1,
            seed: 0,
            burn_in: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.sup_abs() <= 0.999) {
            return Err(Error::Config(format!("|phi| = {} exceeds 0.999", self.phi.sup_abs())));
        }
        if self.burn_in < 100 {
            return Err(Error::Config(format!("burn-in {} below 100", self.burn_in)));
        }
        if self.n < crate::estimator::MIN_SERIES_LEN {
            return Err(Error::TooShort {
                n: self.n,
                min: crate::estimator::MIN_SERIES_LEN,
            });
        }
        Ok(())
    }
}

/// One path of the tvAR(1) recursion with standard normal innovations,
/// started from the stationary law of `φ(0)` followed by `burn_in` discarded
/// steps with coefficient `φ(0)`.
pub fn generate_tvar<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<TimeSeries> {
    design.validate()?;
    let phi0 = design.phi.eval(0.0);
    let mut eps = || -> f64 { rng.sample(StandardNormal) };
    let mut x = eps() / (1.0 - phi0 * phi0).sqrt();
    for _ in 0..design.burn_in {
        x = phi0 * x + eps();
    }
    let n = design.n;
    let values = (1..=n)
        .map(|i| {
            x = design.phi.eval(i as f64 / n as f64) * x + eps();
            x
        })
        .collect();
    TimeSeries::new(values)
}

/// Rejection frequency at one `(Δ, d_n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub d_n: usize,
    pub reject_rate: f64,
    pub se: f64,
    pub design: String,
}

/// Rejection curves plus per-replication decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionCurve {
    pub points: Vec<CurvePoint>,
    /// `decisions[lag_index][replication][delta_index]`.
    pub decisions: Vec<Vec<Vec<bool>>>,
}

impl RejectionCurve {
    pub fn rate(&self, delta: f64, d_n: usize) -> Option<&CurvePoint> {
        self.points
            .iter()
            .find(|p| p.d_n == d_n && (p.delta - delta).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the test on `R` independent paths for each `d_n`, reusing one
/// bootstrap quantile per path across the `Δ` grid. `config` supplies every
/// other knob; its `lags`, `alpha` and `seed` are overridden by the design.
pub fn rejection_curve(design: &SimDesign, config: &TuningConfig) -> Result<RejectionCurve> {
    design.validate()?;
    if design.replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "{} replications, need at least {MIN_REPLICATIONS}",
            design.replications
        )));
    }
    if design.lags.is_empty() || design.delta_grid.is_empty() {
        return Err(Error::Config("empty lag list or delta grid".into()));
    }
    if let Some(d) = design.delta_grid.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::Config(format!("delta {d} must be non-negative")));
    }

    let mut decisions = Vec::with_capacity(design.lags.len());
    let mut points = Vec::new();
    let r = design.replications as f64;
    for &d_n in &design.lags {
        let per_rep: Vec<Vec<bool>> = (0..design.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = rng::child_seed(design.seed, Domain::Replication, rep as u64);
                let mut data_rng = rng::stream(seed, Domain::Replication, 0);
                let series = generate_tvar(design, &mut data_rng)?;
                let cfg = TuningConfig {
                    lags: d_n,
                    alpha: design.alpha,
                    seed,
                    delta: 0.0,
                    ..config.clone()
                };
                let report = bootstrap::run_test(&series, &cfg)?;
                Ok(design.delta_grid.iter().map(|&d| report.reject_at(d)).collect())
            })
            .collect::<Result<_>>()?;
        for (k, &delta) in design.delta_grid.iter().enumerate() {
            let hits = per_rep.iter().filter(|row| row[k]).count() as f64;
            let p = hits / r;
            points.push(CurvePoint {
                delta,
                d_n,
                reject_rate: p,
                se: (p * (1.0 - p) / r).sqrt(),
                design: design.phi.to_string(),
            });
        }
        decisions.push(per_rep);
    }
    Ok(RejectionCurve { points, decisions })
}
