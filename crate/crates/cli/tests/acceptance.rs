//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wristkin::dataset::{
    derive_joint_series, reference_surface, subject_split, synthesize_cohort, validation_stats,
    SyntheticConfig, TrackingSession,
};
use wristkin::homogeneous::compose_chain;
use wristkin::regression::{
    fit_report, lowess, paper_surface, report_from_predictions, spearman_rho, DataPoint,
};
use wristkin::scalar::deg;
use wristkin::sga::{fit_surface, fit_surface_observed, GaConfig};
use wristkin::wrist_model::{
    forward_kinematics, inverse_kinematics, link_transforms, JointState, SubjectParams,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_state(
    rng: &mut ChaCha8Rng,
    theta4_max_deg: f64,
) -> (JointState<f64>, SubjectParams<f64>) {
    let state = JointState::new(
        deg(rng.random_range(-20.0..=20.0)),
        deg(rng.random_range(-theta4_max_deg..=theta4_max_deg)),
        rng.random_range(-50.0..=50.0),
    )
    .unwrap();
    let subject = SubjectParams::new("acc", rng.random_range(80.0..=120.0), [0.0; 3]).unwrap();
    (state, subject)
}

fn fk_ik_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..10_000).map(|_| random_state(&mut rng, 85.0)).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (state, subject) in &cases {
        let back = inverse_kinematics(&forward_kinematics(state, subject), subject)
            .map_err(|e| e.to_string())?;
        worst = worst
            .max((back.theta3() - state.theta3()).abs())
            .max((back.theta4() - state.theta4()).abs())
            .max((back.d2() - state.d2()).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-9 && elapsed < Duration::from_secs(1),
        format!("max error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn closed_form_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases: Vec<_> = (0..1_000).map(|_| random_state(&mut rng, 85.0)).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (state, subject) in &cases {
        let closed = forward_kinematics(state, subject).to_matrix();
        let product = compose_chain(link_transforms(state, subject).iter()).to_matrix();
        for (r1, r2) in closed.iter().zip(&product) {
            for (a, b) in r1.iter().zip(r2) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("max elementwise difference {worst:.2e}, {elapsed:.2?}"),
    )
}

fn published_anchor() -> Outcome {
    let v = paper_surface::<f64>()
        .evaluate(0.0, 0.0)
        .map_err(|e| e.to_string())?;
    check(v == 18.00, format!("evaluate(0, 0) = {v}"))
}

fn statistic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_rmse, mut worst_r2) = (0.0f64, 0.0f64);
    for _ in 0..1_000 {
        let n = rng.random_range(2..300);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let zh: Vec<f64> = z.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
        let rep = report_from_predictions(&z, &zh, &vec![1.0; n]).map_err(|e| e.to_string())?;
        // two-pass reference sums
        let mean = z.iter().sum::<f64>() / n as f64;
        let sst: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
        let sse: f64 = z.iter().zip(&zh).map(|(a, b)| (a - b).powi(2)).sum();
        worst_rmse = worst_rmse.max((rep.rmse * rep.rmse * n as f64 - rep.sse).abs());
        worst_r2 = worst_r2.max((rep.r_squared - (1.0 - sse / sst)).abs());
    }
    let z: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 10.0).collect();
    let perfect = report_from_predictions(&z, &z, &[1.0; 50]).map_err(|e| e.to_string())?;
    check(
        worst_rmse <= 1e-10 && worst_r2 <= 1e-10 && perfect.r_squared == 1.0,
        format!(
            "|rmse²n − sse| ≤ {worst_rmse:.2e}, |R² − (1 − SSE/SST)| ≤ {worst_r2:.2e}, perfect R² = {}",
            perfect.r_squared
        ),
    )
}

fn joint_data(sessions: &[TrackingSession]) -> Vec<DataPoint<f64>> {
    sessions
        .iter()
        .flat_map(|s| derive_joint_series(s).expect("reachable").data_points())
        .collect()
}

fn spearman_sanity() -> Outcome {
    let mut config = SyntheticConfig::new(reference_surface(), 3, 5);
    config.noise_sigma_mm = 1.35;
    let data = joint_data(&synthesize_cohort(&config).map_err(|e| e.to_string())?);
    let beta4: Vec<f64> = data.iter().map(|p| p.y).collect();
    let d2: Vec<f64> = data.iter().map(|p| p.z).collect();
    let rho = spearman_rho(&beta4, &d2).map_err(|e| e.to_string())?;
    let self_rho = spearman_rho(&beta4, &beta4).map_err(|e| e.to_string())?;
    check(
        rho <= -0.9 && self_rho == 1.0,
        format!("ρ(β4, d2) = {rho:.4}, ρ(x, x) = {self_rho}"),
    )
}

struct Cohort {
    fit: Vec<TrackingSession>,
    validate: Vec<TrackingSession>,
}

fn cohort(noise: f64) -> Cohort {
    let mut config = SyntheticConfig::new(reference_surface(), 25, 7);
    config.noise_sigma_mm = noise;
    let sessions = synthesize_cohort(&config).expect("synthesis");
    let (fit_idx, val_idx) = subject_split(25, 9, 3).expect("split");
    Cohort {
        fit: fit_idx.iter().map(|&i| sessions[i].clone()).collect(),
        validate: val_idx.iter().map(|&i| sessions[i].clone()).collect(),
    }
}

fn ga_recovery() -> Outcome {
    let c = cohort(1.35);
    let data = joint_data(&c.fit);
    let start = Instant::now();
    let fit = fit_surface(&data, &GaConfig::with_seed(11)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let held_out = fit_report(&fit.surface, &joint_data(&c.validate)).map_err(|e| e.to_string())?;
    let summary = validation_stats(&fit.surface, &c.validate).map_err(|e| e.to_string())?;
    check(
        held_out.rmse <= 2.0
            && held_out.r_squared >= 0.85
            && summary.pooled_mean.abs() <= 0.5
            && elapsed < Duration::from_secs(120),
        format!(
            "held-out rmse {:.4} mm, R² {:.4}, mean residual {:+.3} ± {:.3} mm, {} generations, {elapsed:.2?}",
            held_out.rmse, held_out.r_squared, summary.pooled_mean, summary.pooled_sd, fit.generations_run
        ),
    )
}

fn noiseless_pipeline() -> Outcome {
    let c = cohort(0.0);
    let fit =
        fit_surface(&joint_data(&c.fit), &GaConfig::with_seed(12)).map_err(|e| e.to_string())?;
    let all: Vec<TrackingSession> = c.fit.iter().chain(&c.validate).cloned().collect();
    let rep = fit_report(&fit.surface, &joint_data(&all)).map_err(|e| e.to_string())?;
    let summary = validation_stats(&fit.surface, &all).map_err(|e| e.to_string())?;
    let worst_pct = summary
        .subjects
        .iter()
        .map(|s| s.pct_error.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    check(
        rep.rmse < 0.2 && worst_pct < 2.0 && summary.subjects.len() == 25,
        format!(
            "rmse {:.2e} mm over 25 subjects, worst subject percentage error {worst_pct:.2e}%",
            rep.rmse
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_wristkin"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    run_cli(&[
        "synth",
        "--subjects",
        "12",
        "--noise",
        "1.35",
        "--seed",
        "21",
        "--out",
        &p("data"),
    ])?;
    for run in ["a", "b"] {
        run_cli(&[
            "fit",
            "--data",
            &p("data"),
            "--n-fit",
            "4",
            "--seed",
            "5",
            "--out",
            &p(run),
        ])?;
    }
    let same = |name: &str| -> Result<bool, String> {
        let read =
            |dir: &str| std::fs::read(Path::new(&p(dir)).join(name)).map_err(|e| e.to_string());
        Ok(read("a")? == read("b")?)
    };
    let (surface, report) = (same("surface.json")?, same("fit_report.json")?);
    check(
        surface && report,
        format!("surface.json identical: {surface}, fit_report.json identical: {report}"),
    )
}

/// Brute-force LOWESS: per point, bandwidth from the sorted distance list
/// and a 2×2 weighted normal-equation solve.
fn lowess_oracle(x: &[f64], y: &[f64], frac: f64, iterations: usize) -> Vec<f64> {
    let n = x.len();
    let q = ((frac * n as f64).ceil() as usize).clamp(2, n);
    let mut robust = vec![1.0; n];
    let mut fit = vec![0.0; n];
    for iter in 0..=iterations {
        for i in 0..n {
            let mut dist: Vec<f64> = x.iter().map(|&xj| (xj - x[i]).abs()).collect();
            dist.sort_by(f64::total_cmp);
            let h = dist[q - 1];
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..n {
                let u = (x[j] - x[i]).abs() / h;
                let w = if u < 1.0 {
                    (1.0 - u.powi(3)).powi(3)
                } else {
                    0.0
                } * robust[j];
                s0 += w;
                s1 += w * x[j];
                s2 += w * x[j] * x[j];
                t0 += w * y[j];
                t1 += w * x[j] * y[j];
            }
            let b = (s0 * t1 - s1 * t0) / (s0 * s2 - s1 * s1);
            fit[i] = (t0 - b * s1) / s0 + b * x[i];
        }
        if iter == iterations {
            break;
        }
        let res: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
        let mut abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let m = if n % 2 == 1 {
            abs[n / 2]
        } else {
            0.5 * (abs[n / 2 - 1] + abs[n / 2])
        };
        for (r, e) in robust.iter_mut().zip(&res) {
            let u = e / (6.0 * m);
            *r = if u.abs() < 1.0 {
                (1.0 - u * u).powi(2)
            } else {
                0.0
            };
        }
    }
    fit
}

fn lowess_correctness() -> Outcome {
    let x: Vec<f64> = (0..60)
        .map(|i| ((i * 37) % 60) as f64 * 0.25 - 3.0)
        .collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let affine = lowess(&x, &y, 1.0, 0).map_err(|e| e.to_string())?;
    let affine_err = affine
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let x: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..10.0)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| v.sin() + noise.sample(&mut rng))
        .collect();
    let mut oracle_err = 0.0f64;
    for (frac, iterations) in [(0.3, 0), (2.0 / 3.0, 3)] {
        let got = lowess(&x, &y, frac, iterations).map_err(|e| e.to_string())?;
        let want = lowess_oracle(&x, &y, frac, iterations);
        oracle_err = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(oracle_err, f64::max);
    }
    check(
        affine_err <= 1e-9 && oracle_err <= 1e-8,
        format!("affine error {affine_err:.2e}, oracle disagreement {oracle_err:.2e}"),
    )
}

fn ga_convergence() -> Outcome {
    let c = cohort(1.35);
    let data = joint_data(&c.fit);
    let config = GaConfig {
        generations: 5_000,
        stall_generations: 0,
        ..GaConfig::with_seed(13)
    };
    let (mut previous, mut increases, mut violations, mut logged) =
        (f64::INFINITY, 0usize, 0usize, 0usize);
    fit_surface_observed(&data, &config, |_, population| {
        logged += 1;
        let best = population
            .iter()
            .map(|c| c.fitness)
            .fold(f64::INFINITY, f64::min);
        if best > previous {
            increases += 1;
        }
        previous = best;
        for c in population {
            for (g, (lo, hi)) in c.genes.iter().zip(config.coefficient_bounds) {
                if !(lo <= *g && *g <= hi) {
                    violations += 1;
                }
            }
        }
    })
    .map_err(|e| e.to_string())?;
    check(
        logged == 5_001 && increases == 0 && violations == 0,
        format!(
            "{} generations logged, {increases} increases, {violations} bound violations",
            logged - 1
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("FK/IK round trip", fk_ik_round_trip),
        ("closed-form consistency", closed_form_consistency),
        ("published-surface anchor", published_anchor),
        ("statistic identities", statistic_identities),
        ("Spearman sanity", spearman_sanity),
        ("GA recovery", ga_recovery),
        ("noiseless pipeline identity", noiseless_pipeline),
        ("determinism", cli_determinism),
        ("LOWESS correctness", lowess_correctness),
        ("GA convergence property", ga_convergence),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2}. {name}: {detail}", k + 1);
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
