use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wristkin::regression::DataPoint;
use wristkin::sga::{fit_surface, fit_surface_observed, GaConfig};

/// `z = 10 + 2x − y` on `[0, 2] × [−1, 1]`.
fn plane(n: usize, sigma: f64, seed: u64) -> Vec<DataPoint<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0));
            let e = if sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            DataPoint::new(x, y, 10.0 + 2.0 * x - y + e)
        })
        .collect()
}

fn truth_rmse(data: &[DataPoint<f64>], fit: &wristkin::sga::GaFit<f64>) -> f64 {
    let sse: f64 = data
        .iter()
        .map(|p| (fit.surface.evaluate(p.x, p.y).unwrap() - (10.0 + 2.0 * p.x - p.y)).powi(2))
        .sum();
    (sse / data.len() as f64).sqrt()
}

#[test]
fn recovers_a_plane() {
    let data = plane(500, 0.0, 1);
    let fit = fit_surface(&data, &GaConfig::with_seed(4)).unwrap();
    assert!(fit.report.rmse < 0.1, "rmse {}", fit.report.rmse);
    assert!(truth_rmse(&data, &fit) < 0.1);
}

#[test]
fn noisy_plane_reaches_the_noise_floor() {
    let data = plane(500, 1.0, 2);
    let fit = fit_surface(&data, &GaConfig::with_seed(4)).unwrap();
    assert!(
        (0.7..=1.5).contains(&fit.report.rmse),
        "rmse {}",
        fit.report.rmse
    );
}

#[test]
fn same_seed_same_coefficients() {
    let data = plane(200, 0.5, 3);
    let config = GaConfig {
        generations: 300,
        ..GaConfig::with_seed(9)
    };
    let a = fit_surface(&data, &config).unwrap();
    let b = fit_surface(&data, &config).unwrap();
    assert_eq!(
        a.surface.coefficients().map(f64::to_bits),
        b.surface.coefficients().map(f64::to_bits)
    );
    assert_eq!(a.best_history, b.best_history);
}

#[test]
fn best_fitness_never_increases_and_genes_stay_in_bounds() {
    let data = plane(200, 0.5, 5);
    let mut config = GaConfig {
        generations: 400,
        stall_generations: 0,
        ..GaConfig::with_seed(1)
    };
    config.coefficient_bounds[0] = (-50.0, 50.0);
    config.coefficient_bounds[1] = (-0.5, 0.5);
    let mut previous = f64::INFINITY;
    let mut generations = 0;
    let fit = fit_surface_observed(&data, &config, |_, population| {
        generations += 1;
        let best = population
            .iter()
            .map(|c| c.fitness)
            .fold(f64::INFINITY, f64::min);
        assert!(best <= previous, "best rose from {previous} to {best}");
        previous = best;
        for c in population {
            for (g, (lo, hi)) in c.genes.iter().zip(config.coefficient_bounds) {
                assert!(lo <= *g && *g <= hi, "{g} outside [{lo}, {hi}]");
            }
        }
    })
    .unwrap();
    assert_eq!(generations, 401);
    assert!(fit.best_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.best.fitness <= fit.ga_best.fitness);
    for (g, (lo, hi)) in fit.best.genes.iter().zip(config.coefficient_bounds) {
        assert!(lo <= *g && *g <= hi);
    }
}

#[test]
fn refinement_can_be_disabled() {
    let data = plane(200, 0.5, 6);
    let config = GaConfig {
        generations: 50,
        refine_iterations: 0,
        ..GaConfig::with_seed(2)
    };
    let fit = fit_surface(&data, &config).unwrap();
    assert_eq!(fit.best, fit.ga_best);
}

#[test]
fn too_few_points() {
    let data = plane(10, 0.0, 7);
    assert!(fit_surface(&data, &GaConfig::default()).is_err());
}
