//! Local polish of a GA solution.
//!
//! Two stages, both in `f64`. First, starting points from linear fits: the
//! quadric polynomial `N` with `D = 1`, and the reweighted linearization
//! `N − z·D = z` with rows scaled by `1/D_prev²` (Sanathanan–Koerner),
//! started from the GA winner's denominator and from `D = 1`. On noisy data
//! the linearization likes to park a pole–zero pair inside the domain, which
//! the pole penalty then rejects; the polynomial start is always pole-free.
//!
//! Second, Levenberg–Marquardt from every finite candidate on `f64` on the weighted residuals `√wᵢ (zᵢ − N/D)`. Each step
//! solves the damped, column-scaled least-squares problem through one thin
//! SVD, so retrying with a larger damping factor is cheap. Steps are clipped
//! to the coefficient bounds and only accepted when the penalized fitness
//! decreases.

use nalgebra::{DMatrix, DVector};

use super::{fitness, Chromosome, FitnessContext, GaConfig, GENES};
use crate::scalar::Scalar;

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-15;
const LAMBDA_MAX: f64 = 1e12;
const RELATIVE_TOLERANCE: f64 = 1e-12;
const LINEARIZED_ITERATIONS: usize = 30;
/// Singular values below this fraction of the largest are dropped.
const RCOND: f64 = 1e-13;

fn basis(x: f64, y: f64) -> [f64; 6] {
    [1.0, x, y, x * x, y * y, x * y]
}

/// Scales columns to unit norm in place and returns the scale factors.
fn normalize_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| {
            let c = m.column(j).norm();
            let c = if c > 0.0 && c.is_finite() { c } else { 1.0 };
            m.column_mut(j).scale_mut(1.0 / c);
            c
        })
        .collect()
}

fn clip<T: Scalar>(genes: &[f64], config: &GaConfig<T>) -> [T; GENES] {
    std::array::from_fn(|j| {
        let (lo, hi) = config.coefficient_bounds[j];
        T::lit(genes[j]).max(lo).min(hi)
    })
}

/// Least-squares quadric polynomial (`D = 1`).
fn polynomial<T: Scalar>(
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
) -> Option<Chromosome<T>> {
    let data = ctx.data();
    let mut m = DMatrix::<f64>::zeros(data.len(), 6);
    let mut rhs = DVector::<f64>::zeros(data.len());
    for (i, p) in data.iter().enumerate() {
        let sw = p.w().as_f64().sqrt();
        for (k, b) in basis(p.x.as_f64(), p.y.as_f64()).into_iter().enumerate() {
            m[(i, k)] = sw * b;
        }
        rhs[i] = sw * p.z.as_f64();
    }
    let scale = normalize_columns(&mut m);
    let svd = m.svd(true, true);
    let cutoff = RCOND * svd.singular_values.max();
    let solved = svd.solve(&rhs, cutoff).ok()?;
    let mut raw = [0.0; GENES];
    for k in 0..6 {
        raw[2 * k] = solved[k] / scale[k];
    }
    let genes = clip(&raw, config);
    Some(Chromosome {
        genes,
        fitness: fitness(&genes, ctx, config),
    })
}

/// Reweighted linear fits started from `denominator` (`a2, a4, …, a10`).
fn linearized<T: Scalar>(
    denominator: [f64; 5],
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
) -> Option<Chromosome<T>> {
    let data = ctx.data();
    let n = data.len();
    let mut den_coeffs = denominator;
    let mut best: Option<Chromosome<T>> = None;
    for _ in 0..LINEARIZED_ITERATIONS {
        let mut m = DMatrix::<f64>::zeros(n, GENES);
        let mut rhs = DVector::<f64>::zeros(n);
        for (i, p) in data.iter().enumerate() {
            let (x, y, z) = (p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
            let b = basis(x, y);
            let den = 1.0 + (0..5).map(|k| den_coeffs[k] * b[k + 1]).sum::<f64>();
            let sw = p.w().as_f64().sqrt() / den;
            rhs[i] = sw * z;
            for k in 0..6 {
                m[(i, 2 * k)] = sw * b[k];
            }
            for k in 0..5 {
                m[(i, 2 * k + 1)] = -sw * z * b[k + 1];
            }
        }
        if !(m.iter().all(|v| v.is_finite()) && rhs.iter().all(|v| v.is_finite())) {
            break;
        }
        let scale = normalize_columns(&mut m);
        let svd = m.svd(true, true);
        let cutoff = RCOND * svd.singular_values.max();
        let solved = match svd.solve(&rhs, cutoff) {
            Ok(v) => v,
            Err(_) => break,
        };
        let raw: Vec<f64> = (0..GENES).map(|j| solved[j] / scale[j]).collect();
        let genes = clip(&raw, config);
        let f = fitness(&genes, ctx, config);
        let previous = best.map(|c| c.fitness);
        if best.is_none_or(|c| f < c.fitness) {
            best = Some(Chromosome { genes, fitness: f });
        }
        for k in 0..5 {
            den_coeffs[k] = genes[2 * k + 1].as_f64();
        }
        if let Some(prev) = previous {
            if (prev - f).abs().as_f64() <= RELATIVE_TOLERANCE * prev.as_f64().abs() {
                break;
            }
        }
    }
    best
}

/// Runs up to `iterations` accepted-or-rejected LM steps from `start`.
/// The returned chromosome never has a worse fitness than `start`.
pub fn refine<T: Scalar>(
    start: &Chromosome<T>,
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
    iterations: usize,
) -> Chromosome<T> {
    let from_ga: [f64; 5] = std::array::from_fn(|k| start.genes[2 * k + 1].as_f64());
    let mut candidates = vec![*start];
    candidates.extend(polynomial(ctx, config));
    for den in [from_ga, [0.0; 5]] {
        candidates.extend(linearized(den, ctx, config));
    }
    let mut best = *start;
    for c in candidates.iter().filter(|c| c.fitness.is_finite()) {
        let polished = levenberg_marquardt(c, ctx, config, iterations);
        if polished.fitness < best.fitness {
            best = polished;
        }
    }
    best
}

fn levenberg_marquardt<T: Scalar>(
    start: &Chromosome<T>,
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
    iterations: usize,
) -> Chromosome<T> {
    let mut best = *start;
    let data = ctx.data();
    let n = data.len();
    let mut lambda = LAMBDA_START;

    for _ in 0..iterations {
        if best.fitness == T::zero() {
            break;
        }
        let genes: [f64; GENES] = std::array::from_fn(|j| best.genes[j].as_f64());
        let surface = best.surface();
        let mut jac = DMatrix::<f64>::zeros(n, GENES);
        let mut resid = DVector::<f64>::zeros(n);
        for (i, p) in data.iter().enumerate() {
            let (x, y) = (p.x.as_f64(), p.y.as_f64());
            let basis = basis(x, y);
            let num = surface.numerator_at(p.x, p.y).as_f64();
            let den = surface.denominator_at(p.x, p.y).as_f64();
            let zh = num / den;
            let sw = p.w().as_f64().sqrt();
            resid[i] = sw * (p.z.as_f64() - zh);
            for k in 0..6 {
                jac[(i, 2 * k)] = sw * basis[k] / den;
            }
            for k in 0..5 {
                jac[(i, 2 * k + 1)] = -sw * zh * basis[k + 1] / den;
            }
        }
        if !(jac.iter().all(|v| v.is_finite()) && resid.iter().all(|v| v.is_finite())) {
            break;
        }

        let scale = normalize_columns(&mut jac);
        let svd = jac.svd(true, true);
        let (u, v_t) = match (&svd.u, &svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => break,
        };
        let ut_r = u.transpose() * &resid;
        let sigma = &svd.singular_values;

        let mut improved = false;
        while lambda <= LAMBDA_MAX {
            let filtered = DVector::from_fn(sigma.len(), |k, _| {
                sigma[k] / (sigma[k] * sigma[k] + lambda) * ut_r[k]
            });
            let step = v_t.transpose() * filtered;
            let moved: Vec<f64> = (0..GENES).map(|j| genes[j] + step[j] / scale[j]).collect();
            let candidate = clip(&moved, config);
            let f = fitness(&candidate, ctx, config);
            if f < best.fitness {
                let gain = (best.fitness - f).as_f64();
                let converged = gain <= RELATIVE_TOLERANCE * best.fitness.as_f64();
                best = Chromosome {
                    genes: candidate,
                    fitness: f,
                };
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    best
}
