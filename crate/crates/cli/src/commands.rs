use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wristkin::dataset::{self, SyntheticConfig, TrackingSession};
use wristkin::homogeneous::Pose;
use wristkin::regression::{
    fit_report, linear_regression, lowess_with_delta, spearman_rho, DataPoint, Domain, FitReport,
    RationalQuadricSurface,
};
use wristkin::sga::{fit_surface, GaConfig};
use wristkin::wrist_model::{forward_kinematics, inverse_kinematics, JointState, SubjectParams};

use crate::check::{self, Kind};
use crate::manifest::{write_json, RunManifest};
use crate::{AngleUnit, Common, Usage};

pub const SURFACE_FILE: &str = "surface.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const SPLIT_FILE: &str = "split.json";

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| Usage("--out <dir> is required for this command".into()))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Shortest round-trip decimal; empty for `None`.
fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

// ---------------------------------------------------------------- kinematics

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub frame: String,
    pub a4_mm: f64,
    pub n: [f64; 3],
    pub o: [f64; 3],
    pub a: [f64; 3],
    pub p: [f64; 3],
}

#[derive(Debug, Serialize)]
pub struct JointFile {
    pub angle_unit: AngleUnit,
    pub theta3: f64,
    pub theta4: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub d2_mm: f64,
}

pub fn fk(common: &Common, theta3: f64, theta4: f64, d2: f64, a4: f64) -> Result<()> {
    let state = JointState::new(theta3, theta4, d2)?;
    let subject = SubjectParams::new("cli", a4, [0.0; 3])?;
    let pose = forward_kinematics(&state, &subject);
    // adding +0.0 turns -0.0 into 0.0
    let clean = |v: [f64; 3]| v.map(|x| x + 0.0);
    let out = PoseFile {
        frame: "base".into(),
        a4_mm: a4,
        n: clean(pose.n()),
        o: clean(pose.o()),
        a: clean(pose.a()),
        p: clean(pose.position()),
    };
    emit(&serde_json::to_string_pretty(&out)?)?;
    if common.out.is_some() {
        let dir = out_dir(common)?;
        let mut manifest = RunManifest::new(
            "fk",
            None,
            json!({ "theta3_rad": theta3, "theta4_rad": theta4, "d2_mm": d2, "a4_mm": a4 }),
        );
        let path = dir.join("pose.json");
        write_json(&path, &out)?;
        manifest.output(&path);
        manifest.write(dir)?;
    }
    Ok(())
}

pub fn ik(common: &Common, pose_path: &Path, a4: Option<f64>) -> Result<()> {
    let text = if pose_path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(pose_path).with_context(|| format!("reading {}", pose_path.display()))?
    };
    let file: PoseFile = serde_json::from_str(&text).map_err(|e| wristkin::Error::Schema {
        path: pose_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.frame != "base" {
        return Err(wristkin::Error::Schema {
            path: pose_path.to_path_buf(),
            message: format!("frame `{}`, expected `base`", file.frame),
        }
        .into());
    }
    let a4 = a4.unwrap_or(file.a4_mm);
    let pose = Pose::from_columns(file.n, file.o, file.a, file.p)?;
    let subject = SubjectParams::new("cli", a4, [0.0; 3])?;
    let state = inverse_kinematics(&pose, &subject)?;
    let unit = common.angle_unit;
    let out = JointFile {
        angle_unit: unit,
        theta3: unit.from_rad(state.theta3()),
        theta4: unit.from_rad(state.theta4()),
        beta3: unit.from_rad(state.beta3()),
        beta4: unit.from_rad(state.beta4()),
        d2_mm: state.d2(),
    };
    emit(&serde_json::to_string_pretty(&out)?)?;
    if common.out.is_some() {
        let dir = out_dir(common)?;
        let mut manifest = RunManifest::new("ik", None, json!({ "a4_mm": a4, "angle_unit": unit }));
        manifest.input(pose_path);
        let path = dir.join("joint_state.json");
        write_json(&path, &out)?;
        manifest.output(&path);
        manifest.write(dir)?;
    }
    Ok(())
}

// ------------------------------------------------------------------- synth

pub struct SynthArgs {
    pub subjects: usize,
    pub noise_mm: f64,
    pub surface: Option<PathBuf>,
    pub cycles: u32,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Radians.
    pub flexion_max: f64,
    pub extension_max: f64,
    pub rud_amplitude: f64,
}

pub fn synth(common: &Common, args: &SynthArgs) -> Result<()> {
    let dir = out_dir(common)?;
    let truth = match &args.surface {
        Some(p) => dataset::load_surface(p)?,
        None => dataset::reference_surface(),
    };
    let mut config = SyntheticConfig::new(truth, args.subjects, common.seed);
    config.noise_sigma_mm = args.noise_mm;
    config.cycles_per_subject = args.cycles;
    config.duration_s = args.duration_s;
    config.sample_rate_hz = args.rate_hz;
    config.flexion_max = args.flexion_max;
    config.extension_max = args.extension_max;
    config.rud_amplitude = args.rud_amplitude;
    config.validate().map_err(|e| Usage(e.to_string()))?;

    let mut manifest = RunManifest::new(
        "synth",
        Some(common.seed),
        json!({
            "subjects": args.subjects,
            "noise_sigma_mm": args.noise_mm,
            "cycles_per_subject": args.cycles,
            "duration_s": args.duration_s,
            "sample_rate_hz": args.rate_hz,
            "flexion_max_rad": args.flexion_max,
            "extension_max_rad": args.extension_max,
            "rud_amplitude_rad": args.rud_amplitude,
            "a4_range_mm": config.a4_range_mm,
            "p_lorg_range_mm": config.p_lorg_range_mm,
        }),
    );
    if let Some(p) = &args.surface {
        manifest.input(p);
    }
    for session in dataset::synthesize_cohort(&config)? {
        let (csv, meta) = dataset::session_paths(dir, session.subject_id());
        dataset::save_session(&session, &csv, &meta)?;
        manifest.output(&csv);
        manifest.output(&meta);
    }
    let truth_path = dir.join("truth_surface.json");
    dataset::save_surface(&config.ground_truth, &truth_path)?;
    manifest.output(&truth_path);
    manifest.write(dir)?;
    eprintln!("wrote {} sessions to {}", args.subjects, dir.display());
    Ok(())
}

// ---------------------------------------------------------- data selection

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Set {
    All,
    Fit,
    Validate,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub seed: u64,
    pub fit: Vec<String>,
    pub validate: Vec<String>,
}

pub struct Selection<'a> {
    pub data: &'a Path,
    pub split: Option<&'a Path>,
    pub set: Set,
}

impl Selection<'_> {
    fn load(&self, manifest: &mut RunManifest) -> Result<Vec<TrackingSession>> {
        manifest.input(self.data);
        let sessions = dataset::load_session_dir(self.data)?;
        if sessions.is_empty() {
            return Err(wristkin::Error::EmptySession(format!(
                "no sessions in {}",
                self.data.display()
            ))
            .into());
        }
        let ids: Vec<String> = match (self.set, self.split) {
            (Set::All, _) => return Ok(sessions),
            (_, None) => {
                return Err(Usage("--set fit|validate needs --split <split.json>".into()).into())
            }
            (set, Some(path)) => {
                manifest.input(path);
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let split: SplitFile =
                    serde_json::from_str(&text).map_err(|e| wristkin::Error::Schema {
                        path: path.to_path_buf(),
                        message: e.to_string(),
                    })?;
                if set == Set::Fit {
                    split.fit
                } else {
                    split.validate
                }
            }
        };
        ids.iter()
            .map(|id| {
                sessions
                    .iter()
                    .find(|s| s.subject_id() == id)
                    .cloned()
                    .ok_or_else(|| {
                        anyhow!(wristkin::Error::EmptySession(format!(
                            "subject {id} not found in data"
                        )))
                    })
            })
            .collect()
    }
}

struct Observation {
    subject: String,
    index: usize,
    t: f64,
    point: DataPoint<f64>,
}

fn observations(sessions: &[TrackingSession]) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for session in sessions {
        let series = dataset::derive_joint_series(session)?;
        for (index, (js, point)) in series.samples.iter().zip(series.data_points()).enumerate() {
            out.push(Observation {
                subject: session.subject_id().to_string(),
                index,
                t: js.t,
                point,
            });
        }
    }
    Ok(out)
}

fn points(obs: &[Observation]) -> Vec<DataPoint<f64>> {
    obs.iter().map(|o| o.point).collect()
}

fn report_json(report: &FitReport<f64>) -> serde_json::Value {
    json!({
        "sse": report.sse,
        "rmse": report.rmse,
        "r": report.r,
        "r_squared": report.r_squared,
        "n": report.n,
    })
}

// --------------------------------------------------------------------- fit

pub fn fit(common: &Common, data: &Path, n_fit: Option<usize>, ga: GaConfig<f64>) -> Result<()> {
    let dir = out_dir(common)?;
    let mut manifest = RunManifest::new(
        "fit",
        Some(common.seed),
        json!({
            "n_fit": n_fit,
            "population_size": ga.population_size,
            "crossover_rate": ga.crossover_rate,
            "mutation_rate": ga.mutation_rate,
            "mutation_scale": ga.mutation_scale,
            "generations": ga.generations,
            "stall_generations": ga.stall_generations,
            "stall_tolerance": ga.stall_tolerance,
            "coefficient_bounds": ga.coefficient_bounds,
            "pole_penalty_weight": ga.pole_penalty_weight,
            "refine_iterations": ga.refine_iterations,
        }),
    );
    manifest.input(data);
    let sessions = dataset::load_session_dir(data)?;
    if sessions.is_empty() {
        return Err(
            wristkin::Error::EmptySession(format!("no sessions in {}", data.display())).into(),
        );
    }
    let (fit_idx, val_idx) = match n_fit {
        Some(k) => dataset::subject_split(sessions.len(), k, common.seed)
            .map_err(|e| Usage(e.to_string()))?,
        None => ((0..sessions.len()).collect(), Vec::new()),
    };
    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter()
            .map(|&i| sessions[i].subject_id().to_string())
            .collect()
    };
    let split = SplitFile {
        seed: common.seed,
        fit: ids(&fit_idx),
        validate: ids(&val_idx),
    };
    let fit_sessions: Vec<TrackingSession> = fit_idx.iter().map(|&i| sessions[i].clone()).collect();
    let data_points = points(&observations(&fit_sessions)?);

    let result = fit_surface(&data_points, &ga)?;
    let domain = Domain::bounding(data_points.iter().map(|p| (p.x, p.y))).expect("non-empty");
    result.surface.check_pole_free(&domain)?;

    let surface_path = dir.join(SURFACE_FILE);
    dataset::save_surface(&result.surface, &surface_path)?;
    let report_path = dir.join(FIT_REPORT_FILE);
    write_json(&report_path, &report_json(&result.report))?;
    let split_path = dir.join(SPLIT_FILE);
    write_json(&split_path, &split)?;
    let grid_path = dir.join("surface_grid.csv");
    write_text(&grid_path, &surface_grid(&result.surface, &domain)?)?;
    let history_path = dir.join("ga_history.csv");
    let mut history = format!("{}\n", check::HISTORY_HEADER);
    for (g, f) in result.best_history.iter().enumerate() {
        writeln!(history, "{g},{f}").expect("string write");
    }
    write_text(&history_path, &history)?;
    for p in [
        &surface_path,
        &report_path,
        &split_path,
        &grid_path,
        &history_path,
    ] {
        manifest.output(p);
    }
    manifest.write(dir)?;
    eprintln!(
        "fit on {} samples from {} subjects: rmse {:.4} mm, r² {:.4}, {} generations",
        result.report.n,
        fit_sessions.len(),
        result.report.rmse,
        result.report.r_squared,
        result.generations_run
    );
    Ok(())
}

/// Fitted surface on a 50×50 grid over the fit domain (radians).
fn surface_grid(surface: &RationalQuadricSurface<f64>, domain: &Domain<f64>) -> Result<String> {
    let mut out = format!("{}\n", check::GRID_HEADER);
    for (x, y) in domain.grid(wristkin::regression::DOMAIN_GRID) {
        let z = surface.evaluate(x, y)?;
        writeln!(out, "{x},{y},{z}").expect("string write");
    }
    Ok(out)
}

// ----------------------------------------------------------------- predict

pub fn predict(common: &Common, selection: &Selection<'_>, surface_path: &Path) -> Result<()> {
    let dir = out_dir(common)?;
    let mut manifest = RunManifest::new("predict", None, json!({ "set": selection.set }));
    let surface = dataset::load_surface(surface_path)?;
    manifest.input(surface_path);
    let obs = observations(&selection.load(&mut manifest)?)?;
    let report = fit_report(&surface, &points(&obs))?;

    let mut csv = format!("{}\n", check::PREDICTIONS_HEADER);
    for (o, e) in obs.iter().zip(&report.residuals) {
        let p = o.point;
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            o.subject,
            o.index,
            o.t,
            p.x,
            p.y,
            p.z,
            p.z - e
        )
        .expect("string write");
    }
    let pred_path = dir.join("predictions.csv");
    write_text(&pred_path, &csv)?;
    let report_path = dir.join(FIT_REPORT_FILE);
    write_json(&report_path, &report_json(&report))?;
    manifest.output(&pred_path);
    manifest.output(&report_path);
    manifest.write(dir)?;
    eprintln!(
        "{} samples: rmse {:.4} mm, r² {:.4}",
        report.n, report.rmse, report.r_squared
    );
    Ok(())
}

// ---------------------------------------------------------------- validate

pub fn validate(common: &Common, selection: &Selection<'_>, surface_path: &Path) -> Result<()> {
    let dir = out_dir(common)?;
    let mut manifest = RunManifest::new("validate", None, json!({ "set": selection.set }));
    let surface = dataset::load_surface(surface_path)?;
    manifest.input(surface_path);
    let sessions = selection.load(&mut manifest)?;
    let summary = dataset::validation_stats(&surface, &sessions)?;
    let report = fit_report(&surface, &points(&observations(&sessions)?))?;

    let mut csv = format!("{}\n", check::PER_SUBJECT_HEADER);
    for s in &summary.subjects {
        let q = s.quartiles;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            s.subject_id,
            s.n(),
            s.mean,
            s.sd,
            num(s.pct_error),
            q.min,
            q.q1,
            q.median,
            q.q3,
            q.max
        )
        .expect("string write");
    }
    let csv_path = dir.join("per_subject.csv");
    write_text(&csv_path, &csv)?;
    let summary_path = dir.join("validation.json");
    write_json(
        &summary_path,
        &json!({
            "subjects": summary.subjects.len(),
            "pooled_n": summary.pooled_n,
            "pooled_mean_residual_mm": summary.pooled_mean,
            "pooled_sd_residual_mm": summary.pooled_sd,
            "pct_error_mean": summary.pct_error_mean,
            "pct_error_sd": summary.pct_error_sd,
            "rmse": report.rmse,
            "r": report.r,
            "r_squared": report.r_squared,
        }),
    )?;
    manifest.output(&csv_path);
    manifest.output(&summary_path);
    manifest.write(dir)?;
    eprintln!(
        "{} subjects, {} samples: residual {:.3} ± {:.3} mm, rmse {:.4} mm, r² {:.4}",
        summary.subjects.len(),
        summary.pooled_n,
        summary.pooled_mean,
        summary.pooled_sd,
        report.rmse,
        report.r_squared
    );
    Ok(())
}

// --------------------------------------------------------------- residuals

pub fn residuals(
    common: &Common,
    selection: &Selection<'_>,
    surface_path: &Path,
    frac: f64,
    iterations: usize,
    delta: Option<f64>,
) -> Result<()> {
    let dir = out_dir(common)?;
    let surface = dataset::load_surface(surface_path)?;
    let mut manifest = RunManifest::new(
        "residuals",
        None,
        json!({ "set": selection.set, "frac": frac, "iterations": iterations, "delta": delta }),
    );
    manifest.input(surface_path);
    let obs = observations(&selection.load(&mut manifest)?)?;
    let report = fit_report(&surface, &points(&obs))?;
    let index: Vec<f64> = (0..report.n).map(|i| i as f64).collect();
    // default: interpolate within 1% of the index range
    let delta = delta.unwrap_or(0.01 * report.n as f64);
    let smooth = lowess_with_delta(&index, &report.residuals, frac, iterations, delta).map_err(
        |e| match e {
            wristkin::Error::InvalidArgument(m) => anyhow!(Usage(m)),
            e => e.into(),
        },
    )?;

    let mut csv = format!("{}\n", check::RESIDUALS_HEADER);
    for (i, (e, s)) in report.residuals.iter().zip(&smooth).enumerate() {
        let z = report.standardized_residuals.as_ref().map(|r| r[i]);
        writeln!(csv, "{i},{e},{},{s}", num(z)).expect("string write");
    }
    let path = dir.join("residuals.csv");
    write_text(&path, &csv)?;
    manifest.output(&path);
    manifest.write(dir)?;
    Ok(())
}

// ------------------------------------------------------------------- stats

pub fn stats(common: &Common, selection: &Selection<'_>) -> Result<()> {
    let dir = out_dir(common)?;
    let mut manifest = RunManifest::new("stats", None, json!({ "set": selection.set }));
    let obs = observations(&selection.load(&mut manifest)?)?;
    let beta4: Vec<f64> = obs.iter().map(|o| o.point.y).collect();
    let d2: Vec<f64> = obs.iter().map(|o| o.point.z).collect();
    let line = linear_regression(&beta4, &d2)?;
    let rho = spearman_rho(&beta4, &d2)?;
    let path = dir.join("stats.json");
    write_json(
        &path,
        &json!({
            "n": obs.len(),
            "x": "beta4_rad",
            "y": "d2_mm",
            "slope_mm_per_rad": line.slope,
            "intercept_mm": line.intercept,
            "spearman_rho": rho,
        }),
    )?;
    manifest.output(&path);
    manifest.write(dir)?;
    eprintln!(
        "n = {}: d2 = {:.4} + {:.4}·β4, spearman ρ = {:.4}",
        obs.len(),
        line.intercept,
        line.slope,
        rho
    );
    Ok(())
}

// ------------------------------------------------------------------- check

/// Returns the number of files that failed.
pub fn check_files(paths: &[PathBuf], kind: Option<Kind>) -> usize {
    let mut failed = 0;
    for path in paths {
        let result = kind
            .or_else(|| Kind::detect(path))
            .ok_or_else(|| anyhow!("cannot tell the schema of {}; pass --kind", path.display()))
            .and_then(|k| check::check_file(path, k).map(|_| k));
        match result {
            Ok(k) => {
                let _ = emit(&format!("ok\t{:?}\t{}", k, path.display()));
            }
            Err(e) => {
                failed += 1;
                let _ = emit(&format!(
                    "FAIL\t{}\t{}",
                    path.display(),
                    crate::describe(&e)
                ));
            }
        }
    }
    failed
}
