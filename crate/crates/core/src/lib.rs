//! Relevant white-noise testing for locally stationary time series.
//!
//! The test asks whether the largest local autocorrelation (or
//! autocovariance) over lags `1..d_n` and rescaled time exceeds a margin
//! `Δ`. The statistic is calibrated by a block multiplier bootstrap that is
//! restricted to the estimated extremal set.
//!
//! ```no_run
//! use relwn::{run_test, TimeSeries, TuningConfig};
//!
//! let x: Vec<f64> = (0..600).map(|i| (i as f64 * 0.7).sin()).collect();
//! let series = TimeSeries::new(x).unwrap();
//! let cfg = TuningConfig { delta: 0.1, seed: 1, ..TuningConfig::default() };
//! let report = run_test(&series, &cfg).unwrap();
//! println!("{}", report.adaptive_delta);
//! ```

pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod rng;
pub mod simulate;
pub mod statistic;
pub mod tuning;

pub use bootstrap::{run_test, run_test_detailed, BlockKernel, BootstrapDraws, TestOutcome};
pub use error::{Error, Result};
pub use estimator::{acf_surface, AcfSurface, Mode, ResidualScheme, TimeSeries};
pub use kernel::{KernelFamily, KernelSpec};
pub use simulate::{generate_tvar, rejection_curve, PhiFunction, SimDesign};
pub use statistic::{ExtremalSet, RhoSign, TestReport, TuningRecord};
pub use tuning::{Setting, TuningConfig};
