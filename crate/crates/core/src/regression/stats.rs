use crate::error::{Error, Result};
use crate::regression::surface::RationalQuadricSurface;
use crate::scalar::Scalar;

/// One observation `(β3, β4) → d2` with a positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    w: T,
}

impl<T: Scalar> DataPoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        DataPoint {
            x,
            y,
            z,
            w: T::one(),
        }
    }

    pub fn weighted(x: T, y: T, z: T, w: T) -> Result<Self> {
        if !(w > T::zero() && w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight must be positive, got {w}"
            )));
        }
        Ok(DataPoint { x, y, z, w })
    }

    pub fn w(&self) -> T {
        self.w
    }
}

/// Goodness-of-fit summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    pub n: usize,
    /// `Σ wᵢ εᵢ²`
    pub sse: T,
    /// `√(SSE / n)`
    pub rmse: T,
    /// Pearson correlation between predictions and observations.
    pub r: T,
    /// `1 − SSE/SST`
    pub r_squared: T,
    /// `SSR/SST`; differs from `r_squared` for non-linear models.
    pub r_squared_ssr: T,
    /// False when `r_squared` falls outside `[0, 1]` (model worse than the mean).
    pub r_squared_in_unit_range: bool,
    /// `εᵢ = zᵢ − ẑᵢ`
    pub residuals: Vec<T>,
    /// `None` when fewer than two residuals or zero residual variance.
    pub standardized_residuals: Option<Vec<T>>,
}

/// Evaluates `surface` on `data` and summarizes the fit.
pub fn fit_report<T: Scalar>(
    surface: &RationalQuadricSurface<T>,
    data: &[DataPoint<T>],
) -> Result<FitReport<T>> {
    let predicted = data
        .iter()
        .enumerate()
        .map(|(i, p)| surface.evaluate(p.x, p.y).map_err(|e| e.at_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    let observed: Vec<T> = data.iter().map(|p| p.z).collect();
    let weights: Vec<T> = data.iter().map(|p| p.w).collect();
    report_from_predictions(&observed, &predicted, &weights)
}

/// Summarizes arbitrary predictions against observations.
pub fn report_from_predictions<T: Scalar>(
    observed: &[T],
    predicted: &[T],
    weights: &[T],
) -> Result<FitReport<T>> {
    let n = observed.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "fit report needs at least one point".into(),
        ));
    }
    if predicted.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    let w_sum: T = weights.iter().copied().sum();
    let z_bar = observed
        .iter()
        .zip(weights)
        .map(|(&z, &w)| w * z)
        .sum::<T>()
        / w_sum;

    let residuals: Vec<T> = observed
        .iter()
        .zip(predicted)
        .map(|(&z, &zh)| z - zh)
        .collect();
    let sse: T = residuals
        .iter()
        .zip(weights)
        .map(|(&e, &w)| w * e * e)
        .sum();
    let sst: T = observed
        .iter()
        .zip(weights)
        .map(|(&z, &w)| w * (z - z_bar) * (z - z_bar))
        .sum();
    if !(sst > T::zero()) {
        return Err(Error::Degenerate(
            "all observations identical (SST = 0)".into(),
        ));
    }
    let ssr: T = predicted
        .iter()
        .zip(weights)
        .map(|(&zh, &w)| w * (zh - z_bar) * (zh - z_bar))
        .sum();

    let rmse = (sse / T::lit(n as f64)).sqrt();
    let r_squared = T::one() - sse / sst;
    let r = pearson(predicted, observed).unwrap_or_else(T::zero);
    let standardized_residuals = standardized_residuals(&residuals).ok();

    Ok(FitReport {
        n,
        sse,
        rmse,
        r,
        r_squared,
        r_squared_ssr: ssr / sst,
        r_squared_in_unit_range: r_squared >= T::zero() && r_squared <= T::one(),
        residuals,
        standardized_residuals,
    })
}

/// `rᵢ = εᵢ / s` with `s` the sample standard deviation of the residuals.
pub fn standardized_residuals<T: Scalar>(residuals: &[T]) -> Result<Vec<T>> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::Degenerate(
            "standardized residuals need at least two residuals".into(),
        ));
    }
    let mean = residuals.iter().copied().sum::<T>() / T::lit(n as f64);
    let var = residuals
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<T>()
        / T::lit((n - 1) as f64);
    let s = var.sqrt();
    if !(s > T::zero()) {
        return Err(Error::Degenerate("residuals have zero variance".into()));
    }
    Ok(residuals.iter().map(|&e| e / s).collect())
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = T::lit(n as f64);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero() && syy > T::zero()) {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

/// Mean and sample standard deviation; sd is zero for a single value.
pub fn mean_sd<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().copied().sum::<T>() / T::lit(n as f64);
    if n == 1 {
        return Some((mean, T::zero()));
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::lit((n - 1) as f64);
    Some((mean, var.sqrt()))
}

/// Quantile with linear interpolation between order statistics
/// (`q ∈ [0, 1]`, Hyndman–Fan type 7). `sorted` must be ascending.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = T::lit(h - lo as f64);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}
