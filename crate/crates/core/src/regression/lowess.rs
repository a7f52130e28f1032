//! Robust locally weighted scatterplot smoothing (Cleveland, 1979).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_FRAC: f64 = 2.0 / 3.0;
pub const DEFAULT_ITERATIONS: usize = 3;

/// Smooths `y` against `x` with local linear fits over the `⌈frac·n⌉`
/// nearest neighbours, followed by `iterations` bisquare reweighting rounds.
/// Output is aligned with the input order.
pub fn lowess<T: Scalar>(x: &[T], y: &[T], frac: f64, iterations: usize) -> Result<Vec<T>> {
    lowess_with_delta(x, y, frac, iterations, T::zero())
}

/// [`lowess`] with Cleveland's `delta` shortcut: points whose abscissa lies
/// within `delta` of the last fitted point are linearly interpolated instead
/// of fitted. `delta = 0` fits every distinct abscissa.
pub fn lowess_with_delta<T: Scalar>(
    x: &[T],
    y: &[T],
    frac: f64,
    iterations: usize,
    delta: T,
) -> Result<Vec<T>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "lowess: x has {n} values, y has {}",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(
            "lowess needs at least 3 points".into(),
        ));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lowess: frac {frac} not in (0, 1]"
        )));
    }
    if !(delta >= T::zero()) {
        return Err(Error::InvalidArgument(
            "lowess: delta must be non-negative".into(),
        ));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("lowess: non-finite input".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite"));
    let xs: Vec<T> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<T> = order.iter().map(|&i| y[i]).collect();

    let q = ((frac * n as f64).ceil() as usize).clamp(2, n);
    let mut robust = vec![T::one(); n];
    let mut fitted = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];

    for iter in 0..=iterations {
        smooth_pass(&xs, &ys, q, delta, &robust, &mut weights, &mut fitted);
        if iter == iterations {
            break;
        }
        let residuals: Vec<T> = ys.iter().zip(&fitted).map(|(&a, &b)| a - b).collect();
        let mut abs: Vec<T> = residuals.iter().map(|r| r.abs()).collect();
        let s = median(&mut abs);
        if !(s > T::zero()) {
            break;
        }
        let six_s = T::lit(6.0) * s;
        for (rw, &r) in robust.iter_mut().zip(&residuals) {
            let u = r / six_s;
            *rw = if u.abs() < T::one() {
                let t = T::one() - u * u;
                t * t
            } else {
                T::zero()
            };
        }
    }

    let mut out = vec![T::zero(); n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = fitted[k];
    }
    Ok(out)
}

fn smooth_pass<T: Scalar>(
    xs: &[T],
    ys: &[T],
    q: usize,
    delta: T,
    robust: &[T],
    weights: &mut [T],
    fitted: &mut [T],
) {
    let n = xs.len();
    let mut nleft = 0usize;
    let mut nright = q - 1;
    let mut last: Option<usize> = None;
    let mut i = 0usize;

    loop {
        let xi = xs[i];
        while nright < n - 1 && xi - xs[nleft] > xs[nright + 1] - xi {
            nleft += 1;
            nright += 1;
        }
        fitted[i] = local_fit(xs, ys, xi, nleft, nright, robust, weights).unwrap_or(ys[i]);

        if let Some(l) = last {
            if i > l + 1 {
                let (x0, x1) = (xs[l], xs[i]);
                let (f0, f1) = (fitted[l], fitted[i]);
                for k in (l + 1)..i {
                    let t = (xs[k] - x0) / (x1 - x0);
                    fitted[k] = f0 + (f1 - f0) * t;
                }
            }
        }

        // ties share the fit
        let mut l = i;
        while l + 1 < n && xs[l + 1] == xi {
            l += 1;
            fitted[l] = fitted[i];
        }
        last = Some(l);
        if l == n - 1 {
            break;
        }

        // next fitted point: the last one within delta, at least l + 1
        let cut = xs[l] + delta;
        let mut k = l + 1;
        while k < n && xs[k] <= cut {
            k += 1;
        }
        i = (l + 1).max(k - 1);
    }
}

/// Tricube-weighted local linear estimate at `xi` from window `[nleft, nright]`.
fn local_fit<T: Scalar>(
    xs: &[T],
    ys: &[T],
    xi: T,
    nleft: usize,
    nright: usize,
    robust: &[T],
    weights: &mut [T],
) -> Option<T> {
    let h = (xi - xs[nleft]).max(xs[nright] - xi);
    let mut sw = T::zero();
    for j in nleft..=nright {
        let d = (xs[j] - xi).abs();
        let w = if h > T::zero() {
            let u = d / h;
            if u < T::one() {
                let t = T::one() - u * u * u;
                t * t * t
            } else {
                T::zero()
            }
        } else if d == T::zero() {
            T::one()
        } else {
            T::zero()
        };
        weights[j] = w * robust[j];
        sw = sw + weights[j];
    }
    if !(sw > T::zero()) {
        return None;
    }
    let range = nleft..=nright;
    let xbar = range.clone().map(|j| weights[j] * xs[j]).sum::<T>() / sw;
    let ybar = range.clone().map(|j| weights[j] * ys[j]).sum::<T>() / sw;
    let sxx = range
        .clone()
        .map(|j| weights[j] * (xs[j] - xbar) * (xs[j] - xbar))
        .sum::<T>();
    let scale = xs[xs.len() - 1] - xs[0];
    if !(sxx.sqrt() > T::lit(1e-7) * scale * sw.sqrt()) {
        return Some(ybar);
    }
    let sxy = range
        .map(|j| weights[j] * (xs[j] - xbar) * (ys[j] - ybar))
        .sum::<T>();
    Some(ybar + sxy / sxx * (xi - xbar))
}

fn median<T: Scalar>(v: &mut [T]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y = vec![4.25; 20];
        let out = lowess(&x, &y, DEFAULT_FRAC, DEFAULT_ITERATIONS).unwrap();
        assert!(out.iter().all(|&v| (v - 4.25).abs() < 1e-12));
    }

    #[test]
    fn affine_reproduced() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 30) as f64 / 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let out = lowess(&x, &y, 1.0, 0).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = [0.0, 1.0, 2.0];
        assert!(lowess(&x, &[1.0, 2.0], 0.5, 0).is_err());
        assert!(lowess(&x, &[1.0, 2.0, 3.0], 0.0, 0).is_err());
        assert!(lowess(&x, &[1.0, 2.0, 3.0], 1.5, 0).is_err());
        assert!(lowess(&[0.0, 1.0], &[1.0, 2.0], 0.5, 0).is_err());
    }

    #[test]
    fn outlier_is_downweighted() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.3 * (1.7 * v).sin()).collect();
        y[20] += 50.0;
        let plain = lowess(&x, &y, 0.3, 0).unwrap();
        let robust = lowess(&x, &y, 0.3, 3).unwrap();
        assert!((plain[20] - 10.0).abs() > 5.0);
        assert!((robust[20] - 10.0).abs() < 0.5);
    }

    #[test]
    fn delta_interpolation_close_to_full_fit() {
        let x: Vec<f64> = (0..500).map(|i| i as f64 / 50.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let full = lowess(&x, &y, 0.2, 0).unwrap();
        let fast = lowess_with_delta(&x, &y, 0.2, 0, 0.04).unwrap();
        for (a, b) in full.iter().zip(&fast) {
            assert!((a - b).abs() < 5e-3);
        }
    }
}
