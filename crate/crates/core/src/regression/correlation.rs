use crate::error::{Error, Result};
use crate::regression::stats::pearson;
use crate::scalar::Scalar;

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("cannot rank NaN".into()));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("not NaN"));
    let mut ranks = vec![T::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1..=end
        let avg = T::lit((start + end + 1) as f64 / 2.0);
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

/// Spearman's rank correlation (Pearson correlation of average ranks).
pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "spearman: lengths {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "spearman needs at least two pairs".into(),
        ));
    }
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    pearson(&rx, &ry).ok_or_else(|| Error::Degenerate("spearman: a rank vector is constant".into()))
}

/// Ordinary least squares line plus the rank correlation of the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    /// `None` when `y` is constant.
    pub rho: Option<T>,
}

pub fn linear_regression<T: Scalar>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::InvalidArgument(
            "linear regression: length mismatch".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "linear regression needs two points".into(),
        ));
    }
    let nf = T::lit(n as f64);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxx = sxx + (a - mx) * (a - mx);
        sxy = sxy + (a - mx) * (b - my);
    }
    if !(sxx > T::zero()) {
        return Err(Error::Degenerate(
            "linear regression: x has zero variance".into(),
        ));
    }
    let slope = sxy / sxx;
    let rho = match spearman_rho(x, y) {
        Ok(r) => Some(r),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        rho,
    })
}
