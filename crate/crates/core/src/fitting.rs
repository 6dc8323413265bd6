//! Log-distance curve fitting and shadow-fading characterization.
//!
//! Samples are grouped into fixed-width distance bins and the mean path
//! loss is taken per bin; the log-distance line is then fitted by ordinary
//! least squares over the binned means. Shadow fading is characterized by
//! the per-sample residuals against the fitted line, not the binned-mean
//! residuals — binning would artificially shrink the spread.

use serde::Serialize;
use thiserror::Error;

use crate::models::LdplParams;
use crate::{cast, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: all samples fall in a single distance bin")]
    DegenerateInput,
    #[error("bin width must be > 0, got {0}")]
    InvalidBinWidth(f64),
    #[error("distance must be > 0, got {0}")]
    NonPositiveDistance(f64),
}

/// One (distance, path loss) observation, the fitting unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlPoint<T> {
    pub distance_m: T,
    pub pl_db: T,
}

/// One distance bin: all samples with `floor(d / w) == center / w - 1/2`.
///
/// Alongside the bin center we keep the in-bin mean of `log10(distance)`,
/// which is the regressor the fit uses; the center is the bin's label. Using
/// the in-bin mean keeps noiseless data exactly on the fitted line
/// regardless of where samples sit inside their bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBin<T> {
    pub center_m: T,
    pub mean_pl_db: T,
    pub mean_log10_d: T,
    pub count: usize,
}

/// Result of a log-distance fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// Fitted coefficients; `sigma_db` is the per-sample residual spread.
    pub params: LdplParams<T>,
    /// Per-sample residuals against the fitted line, in input order.
    pub residuals: Vec<T>,
    /// Coefficient of determination over the binned means.
    pub r_squared: T,
    pub sample_count: usize,
    pub bin_count: usize,
}

/// The JSON shape of a fit, `{n, pl_d0, d0, sigma, r_squared, sample_count,
/// bin_count}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub n: f64,
    pub pl_d0: f64,
    pub d0: f64,
    pub sigma: f64,
    pub r_squared: f64,
    pub sample_count: usize,
    pub bin_count: usize,
}

impl<T: Scalar> FitResult<T> {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            n: to_f64(self.params.n),
            pl_d0: to_f64(self.params.pl_d0_db),
            d0: to_f64(self.params.d0_m),
            sigma: to_f64(self.params.sigma_db),
            r_squared: to_f64(self.r_squared),
            sample_count: self.sample_count,
            bin_count: self.bin_count,
        }
    }
}

/// Groups samples into distance bins of the given width (default 10 m in
/// the pipeline). Each sample lands in the bin centered at
/// `floor(d / w) * w + w / 2`; the bin carries the arithmetic mean of the
/// path losses.
pub fn bin_by_distance<T: Scalar>(
    points: &[PlPoint<T>],
    bin_width_m: T,
) -> Result<Vec<DistanceBin<T>>, FitError> {
    if points.is_empty() {
        return Err(FitError::EmptyInput);
    }
    if !(bin_width_m > T::zero()) {
        return Err(FitError::InvalidBinWidth(to_f64(bin_width_m)));
    }

    // Accumulate keyed by integer bin index to avoid float-keyed maps.
    let mut acc: std::collections::BTreeMap<i64, (T, T, usize)> = std::collections::BTreeMap::new();
    for p in points {
        if !(p.distance_m > T::zero()) {
            return Err(FitError::NonPositiveDistance(to_f64(p.distance_m)));
        }
        let idx = (p.distance_m / bin_width_m)
            .floor()
            .to_i64()
            .expect("bin index fits i64");
        let entry = acc.entry(idx).or_insert((T::zero(), T::zero(), 0));
        entry.0 = entry.0 + p.pl_db;
        entry.1 = entry.1 + p.distance_m.log10();
        entry.2 += 1;
    }

    let half = cast::<T>(0.5);
    Ok(acc
        .into_iter()
        .map(|(idx, (pl_sum, log_sum, count))| {
            let count_t = cast::<T>(count as f64);
            DistanceBin {
                center_m: (cast::<T>(idx as f64) + half) * bin_width_m,
                mean_pl_db: pl_sum / count_t,
                mean_log10_d: log_sum / count_t,
                count,
            }
        })
        .collect())
}

/// Ordinary least squares of the binned mean path loss against
/// `10 * log10(d / d0)`: the slope is the exponent `n`, the intercept is
/// `pl_d0`. With `weighted` the bins are weighted by their sample counts
/// (off in the standard procedure).
pub fn fit_ldpl_bins<T: Scalar>(
    bins: &[DistanceBin<T>],
    d0_m: T,
    weighted: bool,
) -> Result<(T, T), FitError> {
    if bins.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let first = bins[0].mean_log10_d;
    if bins.len() < 2 || bins.iter().all(|b| b.mean_log10_d == first) {
        return Err(FitError::DegenerateInput);
    }

    let ten = cast::<T>(10.0);
    let log_d0 = d0_m.log10();
    let mut w_sum = T::zero();
    let mut x_sum = T::zero();
    let mut y_sum = T::zero();
    for b in bins {
        let w = if weighted { cast::<T>(b.count as f64) } else { T::one() };
        let x = ten * (b.mean_log10_d - log_d0);
        w_sum = w_sum + w;
        x_sum = x_sum + w * x;
        y_sum = y_sum + w * b.mean_pl_db;
    }
    let x_mean = x_sum / w_sum;
    let y_mean = y_sum / w_sum;

    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for b in bins {
        let w = if weighted { cast::<T>(b.count as f64) } else { T::one() };
        let dx = ten * (b.mean_log10_d - log_d0) - x_mean;
        let dy = b.mean_pl_db - y_mean;
        sxx = sxx + w * dx * dx;
        sxy = sxy + w * dx * dy;
    }
    if sxx == T::zero() {
        return Err(FitError::DegenerateInput);
    }
    let n = sxy / sxx;
    let pl_d0 = y_mean - n * x_mean;
    Ok((n, pl_d0))
}

/// Full log-distance fit: bin, fit the line over binned means, then compute
/// per-sample residuals and their (population) standard deviation as the
/// shadow-fading sigma.
pub fn fit_ldpl<T: Scalar>(
    points: &[PlPoint<T>],
    bin_width_m: T,
    d0_m: T,
    weighted: bool,
) -> Result<FitResult<T>, FitError> {
    let bins = bin_by_distance(points, bin_width_m)?;
    let (n, pl_d0) = fit_ldpl_bins(&bins, d0_m, weighted)?;

    let ten = cast::<T>(10.0);
    let residuals: Vec<T> = points
        .iter()
        .map(|p| p.pl_db - (pl_d0 + ten * n * (p.distance_m / d0_m).log10()))
        .collect();
    let (_, sigma) = normal_fit(&residuals)?;

    // r^2 over the fitted domain (binned means).
    let bin_n = cast::<T>(bins.len() as f64);
    let y_mean = bins.iter().map(|b| b.mean_pl_db).sum::<T>() / bin_n;
    let log_d0 = d0_m.log10();
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for b in &bins {
        let fitted = pl_d0 + ten * n * (b.mean_log10_d - log_d0);
        let r = b.mean_pl_db - fitted;
        ss_res = ss_res + r * r;
        let d = b.mean_pl_db - y_mean;
        ss_tot = ss_tot + d * d;
    }
    let r_squared = if ss_tot == T::zero() {
        T::one()
    } else {
        (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
    };

    Ok(FitResult {
        params: LdplParams {
            n,
            pl_d0_db: pl_d0,
            d0_m,
            sigma_db: sigma,
        },
        residuals,
        r_squared,
        sample_count: points.len(),
        bin_count: bins.len(),
    })
}

/// Empirical CDF of the residuals as a right-continuous step function:
/// `(value, P(X <= value))` per distinct value, final probability exactly 1.
pub fn residual_ecdf<T: Scalar>(residuals: &[T]) -> Result<Vec<(T, T)>, FitError> {
    if residuals.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let mut sorted: Vec<T> = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
    let n = cast::<T>(sorted.len() as f64);
    let mut steps: Vec<(T, T)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let p = cast::<T>((i + 1) as f64) / n;
        match steps.last_mut() {
            Some(last) if last.0 == *v => last.1 = p,
            _ => steps.push((*v, p)),
        }
    }
    Ok(steps)
}

/// Kolmogorov-style sup distance between an ECDF step function (as
/// produced by [`residual_ecdf`]) and a reference CDF, accounting for both
/// sides of every step.
pub fn ecdf_sup_distance<T: Scalar>(steps: &[(T, T)], reference: impl Fn(T) -> T) -> T {
    let mut sup = T::zero();
    let mut prev = T::zero();
    for (value, p) in steps {
        let cdf = reference(*value);
        sup = sup.max((*p - cdf).abs()).max((prev - cdf).abs());
        prev = *p;
    }
    sup
}

/// Sample mean and population standard deviation of the residuals.
pub fn normal_fit<T: Scalar>(residuals: &[T]) -> Result<(T, T), FitError> {
    if residuals.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let n = cast::<T>(residuals.len() as f64);
    let mean = residuals.iter().copied().sum::<T>() / n;
    let var = residuals
        .iter()
        .map(|r| (*r - mean) * (*r - mean))
        .sum::<T>()
        / n;
    Ok((mean, var.sqrt()))
}

fn to_f64<T: Scalar>(value: T) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
