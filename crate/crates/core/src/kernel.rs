//! Smoothing kernels on `[-1, 1]` and the jackknife kernel `K*`.
//!
//! Bandwidth scaling follows `K_h(u) = K(u / h)` (no `1/h` factor); the
//! normalisation lives in the estimator and bootstrap scaling instead.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Kernel family. Only `Triweight` is twice continuously differentiable on
/// the whole line; the others are kept for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Triweight,
    /// Biweight, `(15/16)(1-x²)²`. First derivative only at `±1`.
    Quartic,
    /// `(3/4)(1-x²)`. Not differentiable at `±1`.
    Epanechnikov,
}

impl KernelFamily {
    /// Evaluates the unscaled kernel.
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return 0.0;
        }
        let u = 1.0 - x * x;
        match self {
            KernelFamily::Triweight => 35.0 / 32.0 * u * u * u,
            KernelFamily::Quartic => 15.0 / 16.0 * u * u,
            KernelFamily::Epanechnikov => 0.75 * u,
        }
    }

    /// `K*(x) = 2√2·K(√2·x) − K(x)`.
    #[inline]
    pub fn eval_star(self, x: f64) -> f64 {
        2.0 * SQRT_2 * self.eval(SQRT_2 * x) - self.eval(x)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelFamily::Triweight => "triweight",
            KernelFamily::Quartic => "quartic",
            KernelFamily::Epanechnikov => "epanechnikov",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triweight" => Ok(KernelFamily::Triweight),
            "quartic" | "biweight" => Ok(KernelFamily::Quartic),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A kernel family together with a bandwidth in `(0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth < 0.5) {
            return Err(Error::Config(format!(
                "bandwidth must lie in (0, 1/2), got {bandwidth}"
            )));
        }
        Ok(KernelSpec { family, bandwidth })
    }

    pub fn triweight(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Triweight, bandwidth)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.family.eval(x)
    }

    #[inline]
    pub fn kstar_eval(&self, x: f64) -> f64 {
        self.family.eval_star(x)
    }

    /// `K((u) / h)` at this spec's bandwidth.
    #[inline]
    pub fn weight(&self, u: f64) -> f64 {
        self.family.eval(u / self.bandwidth)
    }

    /// `K*((u) / h)` at this spec's bandwidth.
    #[inline]
    pub fn kstar_weight(&self, u: f64) -> f64 {
        self.family.eval_star(u / self.bandwidth)
    }

    /// Same family, bandwidth multiplied by `factor`. Skips the `(0, 1/2)`
    /// check since the jackknife and cross-validation need other widths.
    pub(crate) fn rescaled(&self, factor: f64) -> KernelSpec {
        KernelSpec {
            family: self.family,
            bandwidth: self.bandwidth * factor,
        }
    }

    pub(crate) fn unchecked(family: KernelFamily, bandwidth: f64) -> KernelSpec {
        KernelSpec { family, bandwidth }
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, x: f64) -> f64 {
    spec.eval(x)
}

/// Free-function form of [`KernelSpec::kstar_eval`].
pub fn kstar_eval(spec: &KernelSpec, x: f64) -> f64 {
    spec.kstar_eval(x)
}
