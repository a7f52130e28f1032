//! `wristkin`: kinematics queries, synthetic sessions, surface fitting,
//! validation and plot-data export.
//!
//! Exit status: 0 success, 2 usage error, 3 data error, 4 numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wristkin::sga::GaConfig;

mod check;
mod commands;
mod manifest;

use commands::{Selection, Set, SynthArgs};

#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Deg,
    Rad,
}

impl AngleUnit {
    pub fn to_rad(self, v: f64) -> f64 {
        match self {
            AngleUnit::Deg => v.to_radians(),
            AngleUnit::Rad => v,
        }
    }

    pub fn from_rad(self, v: f64) -> f64 {
        match self {
            AngleUnit::Deg => v.to_degrees(),
            AngleUnit::Rad => v,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed for commands that use one.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Unit of angles given on or printed to the command line. Files are
    /// always in radians.
    #[arg(long, global = true, value_enum, default_value_t = AngleUnit::Deg)]
    pub angle_unit: AngleUnit,
}

#[derive(Debug, Parser)]
#[command(
    name = "wristkin",
    version,
    about = "Wrist kinematic model with a moving rotation center"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory of `<id>.csv` + `<id>.json` session pairs.
    #[arg(long)]
    data: PathBuf,
    /// `split.json` written by `fit`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Which subjects of the split to use.
    #[arg(long, value_enum, default_value_t = Set::All)]
    set: Set,
}

impl DataArgs {
    fn selection(&self) -> Selection<'_> {
        Selection {
            data: &self.data,
            split: self.split.as_deref(),
            set: self.set,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward kinematics: joint state to base-frame fingertip pose.
    Fk {
        #[arg(
            long,
            allow_hyphen_values = true,
            required_unless_present = "theta3_deg"
        )]
        theta3: Option<f64>,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "theta3")]
        theta3_deg: Option<f64>,
        #[arg(
            long,
            allow_hyphen_values = true,
            required_unless_present = "theta4_deg"
        )]
        theta4: Option<f64>,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "theta4")]
        theta4_deg: Option<f64>,
        /// Prismatic offset (mm).
        #[arg(long, allow_hyphen_values = true)]
        d2: f64,
        /// Capitate-to-fingertip length (mm).
        #[arg(long)]
        a4: f64,
    },
    /// Inverse kinematics on a pose file printed by `fk` ("-" reads stdin).
    Ik {
        #[arg(long)]
        pose: PathBuf,
        /// Overrides the `a4_mm` stored in the pose file.
        #[arg(long)]
        a4: Option<f64>,
    },
    /// Synthesize tracking sessions from a known surface.
    Synth {
        #[arg(long, default_value_t = 25)]
        subjects: usize,
        /// Gaussian noise added to d2 (mm).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Ground-truth surface file; defaults to the built-in reference.
        #[arg(long)]
        surface: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        cycles: u32,
        #[arg(long, default_value_t = 40.0)]
        duration: f64,
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long, default_value_t = 30.0)]
        flexion_max: f64,
        #[arg(long, default_value_t = 10.0)]
        extension_max: f64,
        #[arg(long, default_value_t = 5.0)]
        rud: f64,
    },
    /// Fit the rational surface with the genetic algorithm.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Number of subjects to fit on; the rest are held out. All when omitted.
        #[arg(long)]
        n_fit: Option<usize>,
        #[arg(long, default_value_t = 20)]
        population: usize,
        #[arg(long, default_value_t = 0.85)]
        crossover: f64,
        #[arg(long, default_value_t = 0.005)]
        mutation: f64,
        #[arg(long, default_value_t = 5000)]
        generations: usize,
        /// Early-stop window in generations; 0 disables.
        #[arg(long, default_value_t = 500)]
        stall: usize,
        #[arg(long, default_value_t = 200)]
        refine_iterations: usize,
    },
    /// Predict d2 with a surface and report fit statistics.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        surface: PathBuf,
    },
    /// Per-subject residual statistics of a surface.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        surface: PathBuf,
    },
    /// Residual series with standardized values and a LOWESS trend.
    Residuals {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, default_value_t = wristkin::regression::DEFAULT_FRAC)]
        frac: f64,
        #[arg(long, default_value_t = wristkin::regression::DEFAULT_ITERATIONS)]
        iterations: usize,
        /// LOWESS interpolation distance in samples; 1% of the series by default.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Linear regression and Spearman correlation of d2 against β4.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Validate file schemas.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Schema to apply; guessed from each file name otherwise.
        #[arg(long, value_enum)]
        kind: Option<check::Kind>,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let common = &cli.common;
    let unit = common.angle_unit;
    match cli.command {
        Command::Fk {
            theta3,
            theta3_deg,
            theta4,
            theta4_deg,
            d2,
            a4,
        } => {
            let t3 = theta3
                .map(|v| unit.to_rad(v))
                .or(theta3_deg.map(f64::to_radians))
                .expect("clap");
            let t4 = theta4
                .map(|v| unit.to_rad(v))
                .or(theta4_deg.map(f64::to_radians))
                .expect("clap");
            commands::fk(common, t3, t4, d2, a4)?;
        }
        Command::Ik { pose, a4 } => commands::ik(common, &pose, a4)?,
        Command::Synth {
            subjects,
            noise,
            surface,
            cycles,
            duration,
            rate,
            flexion_max,
            extension_max,
            rud,
        } => commands::synth(
            common,
            &SynthArgs {
                subjects,
                noise_mm: noise,
                surface,
                cycles,
                duration_s: duration,
                rate_hz: rate,
                flexion_max: unit.to_rad(flexion_max),
                extension_max: unit.to_rad(extension_max),
                rud_amplitude: unit.to_rad(rud),
            },
        )?,
        Command::Fit {
            data,
            n_fit,
            population,
            crossover,
            mutation,
            generations,
            stall,
            refine_iterations,
        } => {
            let ga = GaConfig {
                population_size: population,
                crossover_rate: crossover,
                mutation_rate: mutation,
                generations,
                stall_generations: stall,
                refine_iterations,
                seed: common.seed,
                ..GaConfig::default()
            };
            ga.validate().map_err(|e| Usage(e.to_string()))?;
            commands::fit(common, &data, n_fit, ga)?;
        }
        Command::Predict { data, surface } => {
            commands::predict(common, &data.selection(), &surface)?
        }
        Command::Validate { data, surface } => {
            commands::validate(common, &data.selection(), &surface)?
        }
        Command::Residuals {
            data,
            surface,
            frac,
            iterations,
            delta,
        } => commands::residuals(common, &data.selection(), &surface, frac, iterations, delta)?,
        Command::Stats { data } => commands::stats(common, &data.selection())?,
        Command::Check { files, kind } => {
            if commands::check_files(&files, kind) > 0 {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<wristkin::Error>() {
        Some(wristkin::Error::InvalidArgument(_)) => 2,
        Some(e) if e.is_numeric() => 4,
        _ => 3,
    }
}

/// The error chain on one line, skipping causes a parent already quotes.
pub fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if text.contains(&msg) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&msg);
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
