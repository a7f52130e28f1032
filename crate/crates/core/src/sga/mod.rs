//! Real-coded simple genetic algorithm for fitting [`RationalQuadricSurface`]
//! coefficients by minimizing a pole-penalized SSE.
//!
//! One generation: random pairing of parents, uniform crossover, per-gene
//! Gaussian mutation clipped to bounds, then elitist truncation over
//! parents ∪ offspring (distinct genomes ranked ahead of duplicates).
//!
//! The best chromosome of the final generation is then polished by a
//! bounded Levenberg–Marquardt search (see [`refine`]); the GA alone stalls
//! far above the noise floor on this model.
//!
//! Randomness is drawn from ChaCha8 substreams keyed by
//! `(seed, generation, pair)`, so results do not depend on evaluation order
//! or on whether the `parallel` feature is enabled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::regression::{
    fit_report, DataPoint, Domain, FitReport, RationalQuadricSurface, DOMAIN_GRID,
};
use crate::scalar::Scalar;

mod refine;
pub use refine::refine;

pub const GENES: usize = 11;

/// Denominator magnitude below which a grid point counts as a pole.
pub const PENALTY_POLE_THRESHOLD: f64 = 1e-3;

/// Minimum number of observations accepted by [`fit_surface`].
pub const MIN_FIT_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig<T> {
    pub population_size: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each gene's bound width.
    pub mutation_scale: f64,
    pub generations: usize,
    /// Stop when the best fitness improved by less than `stall_tolerance`
    /// over this many generations. Zero disables early stopping.
    pub stall_generations: usize,
    pub stall_tolerance: T,
    /// Inclusive `(lo, hi)` per gene, in `a1..a11` order.
    pub coefficient_bounds: [(T, T); GENES],
    /// Added once per domain grid point where `|denominator| < 1e-3`.
    pub pole_penalty_weight: T,
    /// Levenberg–Marquardt iterations applied to the GA winner; zero skips
    /// the polish.
    pub refine_iterations: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for GaConfig<T> {
    fn default() -> Self {
        GaConfig {
            population_size: 20,
            crossover_rate: 0.85,
            mutation_rate: 0.005,
            mutation_scale: 0.05,
            generations: 5000,
            stall_generations: 500,
            stall_tolerance: T::lit(1e-9),
            coefficient_bounds: [(T::lit(-5000.0), T::lit(5000.0)); GENES],
            pole_penalty_weight: T::lit(1e6),
            refine_iterations: 200,
            seed: 0,
        }
    }
}

impl<T: Scalar> GaConfig<T> {
    pub fn with_seed(seed: u64) -> Self {
        GaConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.population_size < 4 {
            return bad(format!("population_size {} < 4", self.population_size));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if !(self.mutation_scale >= 0.0 && self.mutation_scale.is_finite()) {
            return bad(format!("mutation_scale {} invalid", self.mutation_scale));
        }
        for (j, &(lo, hi)) in self.coefficient_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("empty or non-finite bounds for a{}", j + 1));
            }
        }
        if !(self.pole_penalty_weight >= T::zero()) {
            return bad("pole_penalty_weight must be non-negative".into());
        }
        Ok(())
    }
}

/// A candidate coefficient vector and its penalized SSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromosome<T> {
    pub genes: [T; GENES],
    pub fitness: T,
}

impl<T: Scalar> Chromosome<T> {
    pub fn surface(&self) -> RationalQuadricSurface<T> {
        let n = &self.genes;
        RationalQuadricSurface {
            numerator: [n[0], n[2], n[4], n[6], n[8], n[10]],
            denominator: [n[1], n[3], n[5], n[7], n[9]],
        }
    }
}

/// Observations plus the pole-check grid over their bounding box.
#[derive(Debug, Clone)]
pub struct FitnessContext<'a, T> {
    data: &'a [DataPoint<T>],
    grid: Vec<(T, T)>,
}

impl<'a, T: Scalar> FitnessContext<'a, T> {
    pub fn new(data: &'a [DataPoint<T>]) -> Result<Self> {
        let domain = Domain::bounding(data.iter().map(|p| (p.x, p.y)))
            .ok_or_else(|| Error::InvalidArgument("no data".into()))?;
        Ok(FitnessContext {
            data,
            grid: domain.grid(DOMAIN_GRID).collect(),
        })
    }

    pub fn data(&self) -> &[DataPoint<T>] {
        self.data
    }
}

/// Penalized SSE: `Σ wᵢ(zᵢ − ẑᵢ)² + weight × #{grid points with |den| < 1e-3}`.
/// Non-finite values map to `+∞`.
pub fn fitness<T: Scalar>(
    genes: &[T; GENES],
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
) -> T {
    let surface = Chromosome {
        genes: *genes,
        fitness: T::zero(),
    }
    .surface();
    let sse: T = ctx
        .data
        .iter()
        .map(|p| {
            let e = p.z - surface.evaluate_unchecked(p.x, p.y);
            p.w() * e * e
        })
        .sum();
    let limit = T::lit(PENALTY_POLE_THRESHOLD);
    let poles = ctx
        .grid
        .iter()
        .filter(|&&(x, y)| !(surface.denominator_at(x, y).abs() >= limit))
        .count();
    let total = sse + config.pole_penalty_weight * T::lit(poles as f64);
    if total.is_finite() {
        total
    } else {
        T::infinity()
    }
}

const INIT_STREAM: u64 = u64::MAX;
const PAIRING_SLOT: u64 = 0;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn generation_stream(seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    substream(seed, (generation << 20) | (slot & 0xF_FFFF))
}

/// Uniform random population within bounds, evaluated.
pub fn initial_population<T: Scalar>(
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
) -> Vec<Chromosome<T>> {
    let mut rng = substream(config.seed, INIT_STREAM);
    let genomes: Vec<[T; GENES]> = (0..config.population_size)
        .map(|_| {
            std::array::from_fn(|j| {
                let (lo, hi) = config.coefficient_bounds[j];
                let (lo, hi) = (lo.as_f64(), hi.as_f64());
                let v = if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                };
                T::lit(v)
            })
        })
        .collect();
    evaluate_all(genomes, ctx, config)
}

fn evaluate_all<T: Scalar>(
    genomes: Vec<[T; GENES]>,
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
) -> Vec<Chromosome<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        genomes
            .into_par_iter()
            .map(|genes| Chromosome {
                genes,
                fitness: fitness(&genes, ctx, config),
            })
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        genomes
            .into_iter()
            .map(|genes| Chromosome {
                genes,
                fitness: fitness(&genes, ctx, config),
            })
            .collect()
    }
}

fn breed_pair<T: Scalar>(
    a: &[T; GENES],
    b: &[T; GENES],
    rng: &mut ChaCha8Rng,
    config: &GaConfig<T>,
) -> [[T; GENES]; 2] {
    let (mut c1, mut c2) = (*a, *b);
    if rng.random_bool(config.crossover_rate) {
        for j in 0..GENES {
            if rng.random_bool(0.5) {
                std::mem::swap(&mut c1[j], &mut c2[j]);
            }
        }
    }
    for child in [&mut c1, &mut c2] {
        for (j, gene) in child.iter_mut().enumerate() {
            if rng.random_bool(config.mutation_rate) {
                let (lo, hi) = config.coefficient_bounds[j];
                let sigma = config.mutation_scale * (hi - lo).as_f64();
                let step = if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
                } else {
                    0.0
                };
                *gene = (*gene + T::lit(step)).max(lo).min(hi);
            }
        }
    }
    [c1, c2]
}

/// Produces the next generation from `population`.
pub fn step_generation<T: Scalar>(
    population: &[Chromosome<T>],
    ctx: &FitnessContext<'_, T>,
    config: &GaConfig<T>,
    generation: u64,
) -> Vec<Chromosome<T>> {
    let size = population.len();
    let mut pairing = generation_stream(config.seed, generation, PAIRING_SLOT);
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut pairing);
    if size % 2 == 1 {
        // odd count: the leftover parent mates with a random partner
        let partner = order[pairing.random_range(0..size - 1)];
        order.push(partner);
    }

    let offspring: Vec<[T; GENES]> = order
        .chunks_exact(2)
        .enumerate()
        .flat_map(|(k, pair)| {
            let mut rng = generation_stream(config.seed, generation, k as u64 + 1);
            breed_pair(
                &population[pair[0]].genes,
                &population[pair[1]].genes,
                &mut rng,
                config,
            )
        })
        .take(size)
        .collect();
    let offspring = evaluate_all(offspring, ctx, config);

    select_survivors(population.iter().chain(offspring.iter()).copied(), size)
}

/// Elitist truncation: best distinct genomes first, duplicates fill any gap.
fn select_survivors<T: Scalar, I>(pool: I, size: usize) -> Vec<Chromosome<T>>
where
    I: Iterator<Item = Chromosome<T>>,
{
    let mut pool: Vec<Chromosome<T>> = pool.collect();
    pool.sort_by(|a, b| rank_key(a.fitness).total_cmp(&rank_key(b.fitness)));
    let mut survivors: Vec<Chromosome<T>> = Vec::with_capacity(size);
    let mut duplicates = Vec::new();
    for c in pool {
        if survivors.len() == size {
            break;
        }
        if survivors.iter().any(|s| s.genes == c.genes) {
            duplicates.push(c);
        } else {
            survivors.push(c);
        }
    }
    let missing = size - survivors.len();
    survivors.extend(duplicates.into_iter().take(missing));
    survivors.sort_by(|a, b| rank_key(a.fitness).total_cmp(&rank_key(b.fitness)));
    survivors
}

fn rank_key<T: Scalar>(f: T) -> f64 {
    let v = f.as_f64();
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Result of a GA run.
#[derive(Debug, Clone)]
pub struct GaFit<T> {
    pub surface: RationalQuadricSurface<T>,
    pub report: FitReport<T>,
    pub best: Chromosome<T>,
    /// Best chromosome of the last generation, before refinement.
    pub ga_best: Chromosome<T>,
    /// Best penalized fitness after initialization and after each generation.
    pub best_history: Vec<T>,
    pub generations_run: usize,
}

/// Fits the surface to `data`.
pub fn fit_surface<T: Scalar>(data: &[DataPoint<T>], config: &GaConfig<T>) -> Result<GaFit<T>> {
    fit_surface_observed(data, config, |_, _| {})
}

/// [`fit_surface`] with a callback receiving each generation's population
/// (generation 0 is the initial population).
pub fn fit_surface_observed<T, F>(
    data: &[DataPoint<T>],
    config: &GaConfig<T>,
    mut observe: F,
) -> Result<GaFit<T>>
where
    T: Scalar,
    F: FnMut(usize, &[Chromosome<T>]),
{
    config.validate()?;
    if data.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_FIT_POINTS} points, got {}",
            data.len()
        )));
    }
    let first = data[0];
    if data.iter().all(|p| p.x == first.x) || data.iter().all(|p| p.y == first.y) {
        return Err(Error::Degenerate("all x or all y values identical".into()));
    }

    let ctx = FitnessContext::new(data)?;
    let mut population = initial_population(&ctx, config);
    population.sort_by(|a, b| rank_key(a.fitness).total_cmp(&rank_key(b.fitness)));
    observe(0, &population);
    let mut history = vec![population[0].fitness];

    let mut generations_run = 0;
    for g in 1..=config.generations {
        population = step_generation(&population, &ctx, config, g as u64);
        observe(g, &population);
        history.push(population[0].fitness);
        generations_run = g;
        let window = config.stall_generations;
        if window > 0 && g >= window && history[g - window] - history[g] < config.stall_tolerance {
            break;
        }
    }

    let ga_best = population[0];
    let best = if config.refine_iterations > 0 {
        refine(&ga_best, &ctx, config, config.refine_iterations)
    } else {
        ga_best
    };
    let surface = best.surface();
    let report = fit_report(&surface, data)?;
    Ok(GaFit {
        surface,
        report,
        best,
        ga_best,
        best_history: history,
        generations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_data(n: usize) -> Vec<DataPoint<f64>> {
        (0..n)
            .map(|i| {
                let x = (i % 10) as f64 / 10.0;
                let y = (i / 10) as f64 / 10.0;
                DataPoint::new(x, y, 10.0 + 2.0 * x - y)
            })
            .collect()
    }

    #[test]
    fn default_hyperparameters() {
        let c = GaConfig::<f64>::default();
        assert_eq!(c.population_size, 20);
        assert_eq!(c.crossover_rate, 0.85);
        assert_eq!(c.mutation_rate, 0.005);
        assert_eq!(c.generations, 5000);
        assert_eq!(c.coefficient_bounds[0], (-5000.0, 5000.0));
        assert_eq!(c.pole_penalty_weight, 1e6);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let c = GaConfig::<f64> {
            population_size: 3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = GaConfig::<f64> {
            mutation_rate: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = GaConfig::<f64>::default();
        c.coefficient_bounds[4] = (1.0, -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn exact_genes_have_zero_fitness() {
        let data = plane_data(100);
        let ctx = FitnessContext::new(&data).unwrap();
        let mut genes = [0.0; GENES];
        genes[0] = 10.0;
        genes[2] = 2.0;
        genes[4] = -1.0;
        assert!(fitness(&genes, &ctx, &GaConfig::default()) < 1e-9);
    }

    #[test]
    fn mean_predictor_fitness_is_sst() {
        let data = plane_data(100);
        let ctx = FitnessContext::new(&data).unwrap();
        let mean = data.iter().map(|p| p.z).sum::<f64>() / 100.0;
        let sst: f64 = data.iter().map(|p| (p.z - mean).powi(2)).sum();
        let mut genes = [0.0; GENES];
        genes[0] = mean;
        assert!((fitness(&genes, &ctx, &GaConfig::default()) - sst).abs() < 1e-9);
    }

    #[test]
    fn pole_inside_domain_is_penalized() {
        // domain x ∈ [0, 0.9]; 1 + a2·x = 0 at x = 0.5 which is not on the 50-point grid,
        // so use a2 = -1/x_grid for an exact grid abscissa
        let data = plane_data(100);
        let ctx = FitnessContext::new(&data).unwrap();
        let x_grid = 0.9 * 25.0 / 49.0;
        let mut genes = [0.0; GENES];
        genes[0] = 10.0;
        genes[1] = -1.0 / x_grid;
        let config = GaConfig::default();
        assert!(fitness(&genes, &ctx, &config) >= config.pole_penalty_weight);
    }

    #[test]
    fn no_op_operators_keep_population() {
        let data = plane_data(100);
        let ctx = FitnessContext::new(&data).unwrap();
        let config = GaConfig {
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            ..GaConfig::with_seed(3)
        };
        let pop = initial_population(&ctx, &config);
        let next = step_generation(&pop, &ctx, &config, 1);
        let key = |c: &Chromosome<f64>| c.genes.map(f64::to_bits);
        let mut a: Vec<_> = pop.iter().map(key).collect();
        let mut b: Vec<_> = next.iter().map(key).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn clones_without_mutation_are_a_fixed_point() {
        let data = plane_data(100);
        let ctx = FitnessContext::new(&data).unwrap();
        let config = GaConfig {
            mutation_rate: 0.0,
            ..GaConfig::with_seed(9)
        };
        let mut genes = [0.5; GENES];
        genes[1] = 0.0;
        let c = Chromosome {
            genes,
            fitness: fitness(&genes, &ctx, &config),
        };
        let pop = vec![c; 20];
        assert_eq!(step_generation(&pop, &ctx, &config, 7), pop);
    }

    #[test]
    fn replay_is_bit_identical() {
        let data = plane_data(100);
        let config = GaConfig {
            generations: 200,
            ..GaConfig::with_seed(42)
        };
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        fit_surface_observed(&data, &config, |_, p| t1.push(p.to_vec())).unwrap();
        fit_surface_observed(&data, &config, |_, p| t2.push(p.to_vec())).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn degenerate_data_rejected() {
        let data: Vec<_> = (0..30)
            .map(|i| DataPoint::new(1.0, i as f64, i as f64))
            .collect();
        assert!(matches!(
            fit_surface(&data, &GaConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_surface(&plane_data(10), &GaConfig::default()).is_err());
    }
}
