//! Local autocovariance surface estimation.
//!
//! Lag products `Y_{jh} = X_{j+h} X_j` are smoothed against rescaled time
//! `j/n` with a local linear fit, and the two fits at bandwidths `h_n/√2` and
//! `h_n` are combined as `2·fine − coarse` to cancel the leading bias term.
//! Indices in the public API are 1-based in `j` (matching `j/n`), while the
//! vectors themselves are 0-based.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Minimum series length accepted by [`TimeSeries::new`].
pub const MIN_SERIES_LEN: usize = 20;

/// Relative threshold on the weighted design determinant.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_SERIES_LEN {
            return Err(Error::TooShort {
                n: values.len(),
                min: MIN_SERIES_LEN,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(TimeSeries {
            values,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.values.len() {
            return Err(Error::Data(format!(
                "{} timestamps for {} values",
                timestamps.len(),
                self.values.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// `c·X`, keeping timestamps.
    pub fn scaled(&self, c: f64) -> Result<TimeSeries> {
        let mut out = TimeSeries::new(self.values.iter().map(|v| c * v).collect())?;
        out.timestamps = self.timestamps.clone();
        Ok(out)
    }
}

/// Whether the surface holds autocovariances or autocorrelations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "cov")]
    Covariance,
    #[default]
    #[serde(alias = "corr")]
    Correlation,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Covariance => "covariance",
            Mode::Correlation => "correlation",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cov" | "covariance" => Ok(Mode::Covariance),
            "corr" | "correlation" => Ok(Mode::Correlation),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// `(X_{j+h} X_j)` for `j = 1..n-h`; squares when `h = 0`.
pub fn lag_products(series: &TimeSeries, h: usize) -> Result<Vec<f64>> {
    let x = series.values();
    let n = x.len();
    if h >= n {
        return Err(Error::InvalidLag { lag: h, n });
    }
    Ok(x[h..].iter().zip(x).map(|(a, b)| a * b).collect())
}

/// Intercept and slope of a local linear fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub c0: f64,
    pub c1: f64,
}

#[derive(Default)]
struct Moments {
    s0: f64,
    s1: f64,
    s2: f64,
    t0: f64,
    t1: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, w: f64, d: f64, y: f64) {
        let wd = w * d;
        self.s0 += w;
        self.s1 += wd;
        self.s2 += wd * d;
        self.t0 += w * y;
        self.t1 += wd * y;
    }

    fn solve(&self, lag: Option<usize>, t: f64) -> Result<LinearFit> {
        let scale = self.s0 * self.s2;
        let det = scale - self.s1 * self.s1;
        if !(scale > 0.0) || det <= SINGULAR_TOL * scale {
            return Err(Error::SingularFit { lag, t });
        }
        Ok(LinearFit {
            c0: (self.s2 * self.t0 - self.s1 * self.t1) / det,
            c1: (self.s0 * self.t1 - self.s1 * self.t0) / det,
        })
    }
}

/// Weighted least squares line through `(positions[i], y[i])` around `t`,
/// with weights `K((x - t) / h_n)`.
pub fn local_linear_fit(
    y: &[f64],
    positions: &[f64],
    t: f64,
    spec: &KernelSpec,
) -> Result<LinearFit> {
    if y.len() != positions.len() {
        return Err(Error::Config(format!(
            "{} responses for {} positions",
            y.len(),
            positions.len()
        )));
    }
    let mut m = Moments::default();
    for (&yi, &xi) in y.iter().zip(positions) {
        let d = xi - t;
        let w = spec.weight(d);
        if w > 0.0 {
            m.push(w, d, yi);
        }
    }
    m.solve(None, t)
}

/// Local linear fit of `y[j-1]` against `j/n`, `j = 1..=y.len()`, scanning
/// only the kernel window. `skip` masks a 1-based index range out of the
/// fit (used by blocked cross-validation).
pub(crate) fn grid_fit(
    y: &[f64],
    n: usize,
    t: f64,
    spec: &KernelSpec,
    skip: Option<(usize, usize)>,
    lag: Option<usize>,
) -> Result<LinearFit> {
    let nf = n as f64;
    let b = spec.bandwidth;
    let lo = (((t - b) * nf).floor().max(1.0)) as usize;
    let hi = (((t + b) * nf).ceil().min(y.len() as f64)).max(0.0) as usize;
    let mut m = Moments::default();
    for j in lo..=hi {
        if let Some((a, z)) = skip {
            if j >= a && j <= z {
                continue;
            }
        }
        let d = j as f64 / nf - t;
        let w = spec.weight(d);
        if w > 0.0 {
            m.push(w, d, y[j - 1]);
        }
    }
    m.solve(lag, t)
}

/// Bias-corrected smoother of a generic signal `y[j-1]` observed at `j/n`:
/// `2·c0(h_n/√2) − c0(h_n)`.
pub fn smooth_signal(y: &[f64], n: usize, t: f64, spec: &KernelSpec) -> Result<f64> {
    jackknife(y, n, t, spec, None)
}

fn jackknife(y: &[f64], n: usize, t: f64, spec: &KernelSpec, lag: Option<usize>) -> Result<f64> {
    let fine = grid_fit(y, n, t, &spec.rescaled(1.0 / SQRT_2), None, lag)?;
    let coarse = grid_fit(y, n, t, spec, None, lag)?;
    Ok(2.0 * fine.c0 - coarse.c0)
}

/// Bias-corrected local linear estimate of `γ(h, t)`.
pub fn bias_corrected_gamma(series: &TimeSeries, h: usize, t: f64, spec: &KernelSpec) -> Result<f64> {
    let y = lag_products(series, h)?;
    jackknife(&y, series.len(), t, spec, Some(h))
}

/// First and last 1-based grid indices `j` with `j/n ∈ [h_n, 1-h_n] ∩ [0, 1-h/n]`,
/// or `None` when that set is empty.
pub fn grid_bounds(n: usize, lag: usize, bandwidth: f64) -> Option<(usize, usize)> {
    let nf = n as f64;
    let mut lo = (bandwidth * nf).ceil().max(1.0) as usize;
    while lo > 1 && (lo - 1) as f64 / nf >= bandwidth {
        lo -= 1;
    }
    while (lo as f64) / nf < bandwidth {
        lo += 1;
    }
    let upper_t = 1.0 - bandwidth;
    let mut hi = (upper_t * nf).floor().max(0.0) as usize;
    while ((hi + 1) as f64) / nf <= upper_t {
        hi += 1;
    }
    while hi > 0 && (hi as f64) / nf > upper_t {
        hi -= 1;
    }
    let hi = hi.min(n.saturating_sub(lag));
    (lo <= hi && hi >= 1).then_some((lo, hi))
}

/// Values of one lag on its grid `j = first..first+values.len()-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCurve {
    pub lag: usize,
    /// 1-based index of the first grid point.
    pub first: usize,
    pub values: Vec<f64>,
}

impl LagCurve {
    pub fn last(&self) -> usize {
        self.first + self.values.len() - 1
    }

    /// Value at grid index `j`, or at the nearest grid point when `j` falls
    /// outside the grid.
    #[inline]
    pub fn extended(&self, j: usize) -> f64 {
        let k = j.clamp(self.first, self.last()) - self.first;
        self.values[k]
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        j.checked_sub(self.first).and_then(|k| self.values.get(k)).copied()
    }

    /// `(j, value)` pairs over the grid.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.first + k, v))
    }
}

/// Estimated `γ̂(h, j/n)` (or `ρ̂`) for `h = 1..d_n` on the interior grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSurface {
    pub mode: Mode,
    pub n: usize,
    pub bandwidth: f64,
    /// Tested values, one curve per lag `1..=d_n`.
    pub curves: Vec<LagCurve>,
    /// Autocovariance curves backing `curves` (identical in covariance mode).
    pub covariances: Vec<LagCurve>,
    /// `γ̂(0, ·)` on the lag-0 grid; present in correlation mode.
    pub variance: Option<LagCurve>,
}

impl AcfSurface {
    pub fn max_lag(&self) -> usize {
        self.curves.len()
    }

    pub fn curve(&self, lag: usize) -> &LagCurve {
        &self.curves[lag - 1]
    }

    pub fn value(&self, lag: usize, j: usize) -> Option<f64> {
        self.curves.get(lag.checked_sub(1)?)?.get(j)
    }

    pub fn grid_size(&self) -> usize {
        self.curves.iter().map(|c| c.values.len()).sum()
    }

    /// `(lag, j, value)` over the whole surface.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.curves
            .iter()
            .flat_map(|c| c.iter().map(move |(j, v)| (c.lag, j, v)))
    }
}

fn smooth_curve(
    y: &[f64],
    n: usize,
    lag: usize,
    spec: &KernelSpec,
    bounds: (usize, usize),
) -> Result<LagCurve> {
    let nf = n as f64;
    let values = (bounds.0..=bounds.1)
        .map(|j| jackknife(y, n, j as f64 / nf, spec, Some(lag)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LagCurve {
        lag,
        first: bounds.0,
        values,
    })
}

/// Bias-corrected surface over `h = 1..=d_n` and the grid `{j/n} ∩ I_{n,h}`.
pub fn acf_surface(series: &TimeSeries, max_lag: usize, spec: &KernelSpec, mode: Mode) -> Result<AcfSurface> {
    let n = series.len();
    if max_lag == 0 {
        return Err(Error::Config("number of lags must be at least 1".into()));
    }
    if max_lag >= n {
        return Err(Error::InvalidLag { lag: max_lag, n });
    }
    let bounds: Vec<(usize, usize)> = (0..=max_lag)
        .map(|h| {
            grid_bounds(n, h, spec.bandwidth).ok_or(Error::EmptyGrid {
                lag: h,
                bandwidth: spec.bandwidth,
                n,
            })
        })
        .collect::<Result<_>>()?;

    let covariances = (1..=max_lag)
        .into_par_iter()
        .map(|h| {
            let y = lag_products(series, h)?;
            smooth_curve(&y, n, h, spec, bounds[h])
        })
        .collect::<Result<Vec<_>>>()?;

    match mode {
        Mode::Covariance => Ok(AcfSurface {
            mode,
            n,
            bandwidth: spec.bandwidth,
            curves: covariances.clone(),
            covariances,
            variance: None,
        }),
        Mode::Correlation => {
            let y0 = lag_products(series, 0)?;
            let variance = smooth_curve(&y0, n, 0, spec, bounds[0])?;
            if let Some((index, value)) = variance.iter().find(|&(_, v)| !(v > 0.0)) {
                return Err(Error::NonPositiveVariance { index, value });
            }
            let curves = covariances
                .iter()
                .map(|c| LagCurve {
                    lag: c.lag,
                    first: c.first,
                    values: c
                        .iter()
                        .map(|(j, g)| g / variance.get(j).expect("lag grid inside lag-0 grid"))
                        .collect(),
                })
                .collect();
            Ok(AcfSurface {
                mode,
                n,
                bandwidth: spec.bandwidth,
                curves,
                covariances,
                variance: Some(variance),
            })
        }
    }
}

/// How correlation-mode residuals account for the estimated denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualScheme {
    /// `ε̂_{jh} / γ̂(0, j/n)`.
    #[default]
    FirstOrder,
    /// `(ε̂_{jh} − ρ̂(h, j/n)·ε̂_{j0}) / γ̂(0, j/n)`.
    FullDelta,
}

/// Residuals `ε̂_{jh}`, row `h-1` holding `j = 1..n-h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub mode: Mode,
    pub rows: Vec<Vec<f64>>,
}

impl ResidualMatrix {
    pub fn row(&self, lag: usize) -> &[f64] {
        &self.rows[lag - 1]
    }
}

/// `ε̂_{jh} = X_{j+h}X_j − γ̂_h(j/n)`, with the surface held constant outside
/// its grid. Correlation-mode rows are rescaled per `scheme`.
pub fn residuals(series: &TimeSeries, surface: &AcfSurface, scheme: ResidualScheme) -> Result<ResidualMatrix> {
    if series.len() != surface.n {
        return Err(Error::Config(format!(
            "surface fitted on n = {}, series has n = {}",
            surface.n,
            series.len()
        )));
    }
    let mut rows = Vec::with_capacity(surface.max_lag());
    for cov in &surface.covariances {
        let y = lag_products(series, cov.lag)?;
        let mut row: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(i, yv)| yv - cov.extended(i + 1))
            .collect();
        if let (Mode::Correlation, Some(var)) = (surface.mode, surface.variance.as_ref()) {
            let curve = surface.curve(cov.lag);
            let x = series.values();
            for (i, r) in row.iter_mut().enumerate() {
                let j = i + 1;
                let g0 = var.extended(j);
                *r = match scheme {
                    ResidualScheme::FirstOrder => *r / g0,
                    ResidualScheme::FullDelta => {
                        let e0 = x[i] * x[i] - g0;
                        (*r - curve.extended(j) * e0) / g0
                    }
                };
            }
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i + 1 });
        }
        rows.push(row);
    }
    Ok(ResidualMatrix {
        mode: surface.mode,
        rows,
    })
}

/// Removes a bias-corrected local linear estimate of the time-varying mean.
pub fn center_series(series: &TimeSeries, spec: &KernelSpec) -> Result<TimeSeries> {
    let x = series.values();
    let n = x.len();
    let nf = n as f64;
    let centered = (1..=n)
        .into_par_iter()
        .map(|j| Ok(x[j - 1] - smooth_signal(x, n, j as f64 / nf, spec)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = TimeSeries::new(centered)?;
    out.timestamps = series.timestamps.clone();
    Ok(out)
}
