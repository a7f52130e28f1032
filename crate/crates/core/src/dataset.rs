//! Tracking sessions: file IO, joint-series derivation, synthetic cohorts
//! that mimic the flexion-extension protocol, subject splits and
//! per-subject validation statistics.
//!
//! File formats:
//! - session data: CSV `t,px,py,pz,nx,ny,nz,ox,oy,oz,ax,ay,az`
//!   (seconds, mm, direction cosines of the fingertip frame in sensor frame L)
//! - session metadata: JSON `{subject_id, a4_mm, p_lorg_mm, handedness, protocol?}`
//! - surface: JSON `{numerator: [a1,a3,a5,a7,a9,a11], denominator: [a2,a4,a6,a8,a10], angle_unit: "rad"}`

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogeneous::Pose;
use crate::regression::{mean_sd, quantile_sorted, DataPoint, RationalQuadricSurface};
use crate::scalar::deg;
use crate::wrist_model::{
    base_to_sensor, forward_kinematics, inverse_kinematics, sensor_to_base, JointState,
    SubjectParams,
};

pub const SESSION_HEADER: [&str; 13] = [
    "t", "px", "py", "pz", "nx", "ny", "nz", "ox", "oy", "oz", "ax", "ay", "az",
];

/// Orientation drift accepted as-is.
pub const ORIENTATION_TOLERANCE: f64 = 1e-6;
/// Orientation drift beyond which a sample is rejected; between the two
/// thresholds the rotation is re-orthonormalized.
pub const ORIENTATION_MAX_DRIFT: f64 = 1e-3;

/// Samples with `|d2|` below this are excluded from percentage errors (mm).
pub const PCT_ERROR_MIN_D2: f64 = 1.0;

/// Decimal places written for every number in session CSV files.
pub const CSV_DECIMALS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub cycles: u32,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Fingertip pose in sensor frame L.
    pub pose: Pose<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSession {
    pub subject: SubjectParams<f64>,
    pub handedness: Handedness,
    pub protocol: Option<Protocol>,
    samples: Vec<Sample>,
}

impl TrackingSession {
    /// Validates strictly increasing timestamps and pose invariants
    /// (within [`ORIENTATION_TOLERANCE`]).
    pub fn new(
        subject: SubjectParams<f64>,
        handedness: Handedness,
        protocol: Option<Protocol>,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::Monotonicity { row: i });
            }
            if i > 0 && !(s.t > samples[i - 1].t) {
                return Err(Error::Monotonicity { row: i });
            }
            s.pose
                .check(ORIENTATION_TOLERANCE)
                .map_err(|e| Error::Orientation {
                    row: i,
                    message: e.to_string(),
                })?;
        }
        Ok(TrackingSession {
            subject,
            handedness,
            protocol,
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject.subject_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample {
    pub t: f64,
    pub state: JointState<f64>,
}

/// Joint-space trajectory aligned 1:1 with a session.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSeries {
    pub samples: Vec<JointSample>,
}

impl JointSeries {
    /// `(β3, β4) → d2` observations with unit weight.
    pub fn data_points(&self) -> Vec<DataPoint<f64>> {
        self.samples
            .iter()
            .map(|s| DataPoint::new(s.state.beta3(), s.state.beta4(), s.state.d2()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// On-disk metadata schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMeta {
    pub subject_id: String,
    pub a4_mm: f64,
    pub p_lorg_mm: [f64; 3],
    pub handedness: Handedness,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
}

impl SessionMeta {
    pub fn subject(&self) -> Result<SubjectParams<f64>> {
        SubjectParams::new(self.subject_id.clone(), self.a4_mm, self.p_lorg_mm)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_meta(path: &Path) -> Result<SessionMeta> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))?;
    if !(meta.a4_mm > 0.0 && meta.a4_mm.is_finite()) {
        return Err(schema(path, "a4_mm must be a positive number"));
    }
    if !meta.p_lorg_mm.iter().all(|v| v.is_finite()) {
        return Err(schema(path, "p_lorg_mm must be finite"));
    }
    if let Some(p) = meta.protocol {
        if !(p.duration_s > 0.0 && p.duration_s.is_finite()) {
            return Err(schema(path, "protocol.duration_s must be positive"));
        }
    }
    Ok(meta)
}

/// Parses session CSV rows into validated samples. `path` is only used in
/// error messages.
pub fn read_samples<R: Read>(reader: R, path: &Path) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| schema(path, e.to_string()))?
        .clone();
    if header.iter().ne(SESSION_HEADER.iter().copied()) {
        return Err(schema(
            path,
            format!("expected header `{}`", SESSION_HEADER.join(",")),
        ));
    }
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| schema(path, format!("row {row}: {e}")))?;
        if record.len() != SESSION_HEADER.len() {
            return Err(schema(path, format!("row {row}: expected 13 fields")));
        }
        let mut v = [0.0f64; 13];
        for (k, field) in record.iter().enumerate() {
            v[k] = field.parse().map_err(|_| {
                schema(
                    path,
                    format!(
                        "row {row}: `{field}` is not a number ({})",
                        SESSION_HEADER[k]
                    ),
                )
            })?;
            if !v[k].is_finite() {
                return Err(schema(
                    path,
                    format!("row {row}: non-finite {}", SESSION_HEADER[k]),
                ));
            }
        }
        let r = [
            [v[4], v[7], v[10]],
            [v[5], v[8], v[11]],
            [v[6], v[9], v[12]],
        ];
        let pose = clean_orientation(r, [v[1], v[2], v[3]], row)?;
        if let Some(prev) = samples.last().map(|s: &Sample| s.t) {
            if !(v[0] > prev) {
                return Err(Error::Monotonicity { row });
            }
        }
        samples.push(Sample { t: v[0], pose });
    }
    Ok(samples)
}

fn clean_orientation(r: [[f64; 3]; 3], p: [f64; 3], row: usize) -> Result<Pose<f64>> {
    let raw = Pose::from_parts_unchecked(r, p);
    let det = raw.determinant();
    if !(det > 0.0) {
        return Err(Error::Orientation {
            row,
            message: format!("rotation determinant {det} (reflection or singular)"),
        });
    }
    let drift = raw.orthonormality_error().max((det - 1.0).abs());
    if drift <= ORIENTATION_TOLERANCE {
        Ok(raw)
    } else if drift <= ORIENTATION_MAX_DRIFT {
        raw.reorthonormalized().map_err(|e| Error::Orientation {
            row,
            message: e.to_string(),
        })
    } else {
        Err(Error::Orientation {
            row,
            message: format!("orientation drift {drift:e} exceeds {ORIENTATION_MAX_DRIFT:e}"),
        })
    }
}

/// Loads and validates a session from its data and metadata files.
pub fn load_session(data_path: &Path, meta_path: &Path) -> Result<TrackingSession> {
    let meta = read_meta(meta_path)?;
    let subject = meta
        .subject()
        .map_err(|e| schema(meta_path, e.to_string()))?;
    let file = fs::File::open(data_path).map_err(io_err(data_path))?;
    let samples = read_samples(std::io::BufReader::new(file), data_path)?;
    TrackingSession::new(subject, meta.handedness, meta.protocol, samples)
}

/// Writes session rows with fixed [`CSV_DECIMALS`] formatting.
pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> std::io::Result<()> {
    writeln!(w, "{}", SESSION_HEADER.join(","))?;
    for s in samples {
        let (p, n, o, a) = (s.pose.position(), s.pose.n(), s.pose.o(), s.pose.a());
        let fields = [
            s.t, p[0], p[1], p[2], n[0], n[1], n[2], o[0], o[1], o[2], a[0], a[1], a[2],
        ];
        let line: Vec<String> = fields.iter().map(|v| fixed(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

fn fixed(v: f64) -> String {
    let s = format!("{v:.CSV_DECIMALS$}");
    // avoid "-0.000000000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn session_meta(session: &TrackingSession) -> SessionMeta {
    SessionMeta {
        subject_id: session.subject.subject_id.clone(),
        a4_mm: session.subject.a4(),
        p_lorg_mm: session.subject.p_lorg,
        handedness: session.handedness,
        protocol: session.protocol,
    }
}

pub fn save_session(session: &TrackingSession, data_path: &Path, meta_path: &Path) -> Result<()> {
    let file = fs::File::create(data_path).map_err(io_err(data_path))?;
    let mut w = std::io::BufWriter::new(file);
    write_samples(&mut w, &session.samples).map_err(io_err(data_path))?;
    w.flush().map_err(io_err(data_path))?;
    let json = serde_json::to_string_pretty(&session_meta(session)).expect("meta serializes");
    fs::write(meta_path, json + "\n").map_err(io_err(meta_path))
}

/// `<dir>/<id>.csv` and `<dir>/<id>.json`.
pub fn session_paths(dir: &Path, subject_id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{subject_id}.csv")),
        dir.join(format!("{subject_id}.json")),
    )
}

/// Loads every `<id>.csv` + `<id>.json` pair in `dir`, sorted by file name.
pub fn load_session_dir(dir: &Path) -> Result<Vec<TrackingSession>> {
    let mut stems: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| p.with_extension("json").is_file())
        .collect();
    stems.sort();
    stems
        .iter()
        .map(|csv| load_session(csv, &csv.with_extension("json")))
        .collect()
}

/// On-disk surface schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    pub numerator: [f64; 6],
    pub denominator: [f64; 5],
    pub angle_unit: String,
}

impl From<&RationalQuadricSurface<f64>> for SurfaceFile {
    fn from(s: &RationalQuadricSurface<f64>) -> Self {
        SurfaceFile {
            numerator: s.numerator,
            denominator: s.denominator,
            angle_unit: "rad".into(),
        }
    }
}

pub fn surface_to_json(surface: &RationalQuadricSurface<f64>) -> String {
    serde_json::to_string_pretty(&SurfaceFile::from(surface)).expect("surface serializes") + "\n"
}

pub fn parse_surface(text: &str, path: &Path) -> Result<RationalQuadricSurface<f64>> {
    let file: SurfaceFile = serde_json::from_str(text).map_err(|e| schema(path, e.to_string()))?;
    if file.angle_unit != "rad" {
        return Err(schema(
            path,
            format!("angle_unit must be \"rad\", got {:?}", file.angle_unit),
        ));
    }
    RationalQuadricSurface::new(file.numerator, file.denominator)
        .map_err(|e| schema(path, e.to_string()))
}

pub fn load_surface(path: &Path) -> Result<RationalQuadricSurface<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_surface(&text, path)
}

pub fn save_surface(surface: &RationalQuadricSurface<f64>, path: &Path) -> Result<()> {
    fs::write(path, surface_to_json(surface)).map_err(io_err(path))
}

/// Per sample: sensor frame → base frame, then inverse kinematics.
pub fn derive_joint_series(session: &TrackingSession) -> Result<JointSeries> {
    let samples = session
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let base = sensor_to_base(&s.pose, &session.subject);
            inverse_kinematics(&base, &session.subject)
                .map(|state| JointSample { t: s.t, state })
                .map_err(|e| e.at_sample(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JointSeries { samples })
}

/// Settings for synthetic tracking sessions. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub ground_truth: RationalQuadricSurface<f64>,
    pub n_subjects: usize,
    pub cycles_per_subject: u32,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub flexion_max: f64,
    pub extension_max: f64,
    pub rud_amplitude: f64,
    pub noise_sigma_mm: f64,
    pub a4_range_mm: (f64, f64),
    /// Each component of `⁰P_LORG` is drawn uniformly from this range (mm).
    pub p_lorg_range_mm: (f64, f64),
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(ground_truth: RationalQuadricSurface<f64>, n_subjects: usize, seed: u64) -> Self {
        SyntheticConfig {
            ground_truth,
            n_subjects,
            cycles_per_subject: 10,
            duration_s: 40.0,
            sample_rate_hz: 50.0,
            flexion_max: deg(30.0),
            extension_max: deg(10.0),
            rud_amplitude: deg(5.0),
            noise_sigma_mm: 0.0,
            a4_range_mm: (90.0, 110.0),
            p_lorg_range_mm: (-100.0, 100.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.flexion_max >= 0.0 && self.extension_max >= 0.0) {
            return bad("flexion_max and extension_max must be non-negative");
        }
        if self.flexion_max >= std::f64::consts::FRAC_PI_2
            || self.extension_max >= std::f64::consts::FRAC_PI_2
        {
            return bad("flexion/extension range must stay below 90 degrees");
        }
        if !(self.noise_sigma_mm >= 0.0 && self.noise_sigma_mm.is_finite()) {
            return bad("noise_sigma_mm must be non-negative");
        }
        if !(self.rud_amplitude.abs() < std::f64::consts::FRAC_PI_2) {
            return bad("rud_amplitude must be below 90 degrees");
        }
        if !(self.duration_s > 0.0 && self.sample_rate_hz > 0.0) {
            return bad("duration and sample rate must be positive");
        }
        let (lo, hi) = self.a4_range_mm;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("a4 range must be positive and non-empty");
        }
        let (lo, hi) = self.p_lorg_range_mm;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad("p_lorg range must be non-empty");
        }
        Ok(())
    }

    /// Flexion-extension angle at time `t`: one smooth sinusoid per cycle
    /// spanning `[-extension_max, flexion_max]`, starting at neutral and
    /// heading into extension first.
    pub fn beta4_at(&self, t: f64) -> f64 {
        let mid = 0.5 * (self.flexion_max - self.extension_max);
        let amp = 0.5 * (self.flexion_max + self.extension_max);
        if amp == 0.0 {
            return 0.0;
        }
        let phase0 = std::f64::consts::PI + (mid / amp).asin();
        let freq = self.cycles_per_subject as f64 / self.duration_s;
        mid + amp * (phase0 + std::f64::consts::TAU * freq * t).sin()
    }

    /// Radio-ulnar deviation `θ3` at time `t`: double the FE frequency with
    /// a per-subject phase.
    pub fn theta3_at(&self, t: f64, phase: f64) -> f64 {
        let freq = self.cycles_per_subject as f64 / self.duration_s;
        self.rud_amplitude * (phase + 2.0 * std::f64::consts::TAU * freq * t).sin()
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

/// Synthetic surface used as a ground truth by default: pole-free on the
/// physiological range, `d2` decreasing from ~24 mm in extension to ~11 mm
/// in flexion.
pub fn reference_surface() -> RationalQuadricSurface<f64> {
    RationalQuadricSurface {
        numerator: [20.0 - 2.0 * std::f64::consts::PI, 4.0, -18.0, 0.0, 6.0, 0.0],
        denominator: [0.0, 0.2, 0.0, 0.0, 0.0],
    }
}

pub fn subject_label(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// Generates one synthetic session and its ground-truth joint series.
pub fn synthesize_with_truth(
    config: &SyntheticConfig,
    subject_index: usize,
) -> Result<(TrackingSession, JointSeries)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(subject_index as u64);

    let (a_lo, a_hi) = config.a4_range_mm;
    let a4 = if a_hi > a_lo {
        rng.random_range(a_lo..=a_hi)
    } else {
        a_lo
    };
    let (p_lo, p_hi) = config.p_lorg_range_mm;
    let p_lorg: [f64; 3] = std::array::from_fn(|_| {
        if p_hi > p_lo {
            rng.random_range(p_lo..=p_hi)
        } else {
            p_lo
        }
    });
    let rud_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let subject = SubjectParams::new(subject_label(subject_index), a4, p_lorg)?;
    let noise = if config.noise_sigma_mm > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma_mm).expect("valid sigma"))
    } else {
        None
    };

    let n = config.sample_count();
    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / config.sample_rate_hz;
        let theta4 = config.beta4_at(t);
        let theta3 = config.theta3_at(t, rud_phase);
        let beta3 = theta3 + std::f64::consts::FRAC_PI_2;
        let mut d2 = config
            .ground_truth
            .evaluate(beta3, theta4)
            .map_err(|e| e.at_sample(k))?;
        if let Some(dist) = &noise {
            d2 += dist.sample(&mut rng);
        }
        let state = JointState::new(theta3, theta4, d2)?;
        let pose_in_l = base_to_sensor(&forward_kinematics(&state, &subject), &subject);
        samples.push(Sample { t, pose: pose_in_l });
        truth.push(JointSample { t, state });
    }
    let session = TrackingSession::new(
        subject,
        Handedness::Right,
        Some(Protocol {
            cycles: config.cycles_per_subject,
            duration_s: config.duration_s,
        }),
        samples,
    )?;
    Ok((session, JointSeries { samples: truth }))
}

pub fn synthesize_session(
    config: &SyntheticConfig,
    subject_index: usize,
) -> Result<TrackingSession> {
    synthesize_with_truth(config, subject_index).map(|(s, _)| s)
}

/// All `config.n_subjects` sessions.
pub fn synthesize_cohort(config: &SyntheticConfig) -> Result<Vec<TrackingSession>> {
    (0..config.n_subjects)
        .map(|i| synthesize_session(config, i))
        .collect()
}

/// Seeded random partition of `0..count` into `(fit, validation)` index
/// sets; both sorted ascending.
pub fn subject_split(count: usize, n_fit: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_fit >= count {
        return Err(Error::InvalidArgument(format!(
            "n_fit = {n_fit} must be smaller than the number of sessions ({count})"
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fit = idx[..n_fit].to_vec();
    let mut val = idx[n_fit..].to_vec();
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            min: *v.first()?,
            q1: quantile_sorted(&v, 0.25)?,
            median: quantile_sorted(&v, 0.5)?,
            q3: quantile_sorted(&v, 0.75)?,
            max: *v.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectValidation {
    pub subject_id: String,
    /// `d̂2 − d2` per sample (mm).
    pub residuals: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Mean `|d̂2 − d2| / |d2| · 100` over samples with `|d2| ≥ 1 mm`.
    pub pct_error: Option<f64>,
    pub quartiles: Quartiles,
}

impl SubjectValidation {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub subjects: Vec<SubjectValidation>,
    /// Mean and sd of all residuals pooled across subjects.
    pub pooled_mean: f64,
    pub pooled_sd: f64,
    pub pooled_n: usize,
    /// Mean and sd of the per-subject percentage errors.
    pub pct_error_mean: Option<f64>,
    pub pct_error_sd: Option<f64>,
}

/// Residual statistics of `surface` against each session's derived `d2`.
pub fn validation_stats(
    surface: &RationalQuadricSurface<f64>,
    sessions: &[TrackingSession],
) -> Result<ValidationSummary> {
    if sessions.is_empty() {
        return Err(Error::EmptySession("no sessions to validate".into()));
    }
    let mut subjects = Vec::with_capacity(sessions.len());
    let mut pooled = Vec::new();
    for session in sessions {
        if session.is_empty() {
            return Err(Error::EmptySession(session.subject_id().to_string()));
        }
        let series = derive_joint_series(session)?;
        let mut residuals = Vec::with_capacity(series.len());
        let mut pct = Vec::new();
        for (i, js) in series.samples.iter().enumerate() {
            let d2 = js.state.d2();
            let d2_hat = surface
                .evaluate(js.state.beta3(), js.state.beta4())
                .map_err(|e| e.at_sample(i))?;
            let r = d2_hat - d2;
            residuals.push(r);
            if d2.abs() >= PCT_ERROR_MIN_D2 {
                pct.push(r.abs() / d2.abs() * 100.0);
            }
        }
        let (mean, sd) = mean_sd(&residuals).expect("non-empty");
        let pct_error = mean_sd(&pct).map(|(m, _)| m);
        pooled.extend_from_slice(&residuals);
        subjects.push(SubjectValidation {
            subject_id: session.subject_id().to_string(),
            quartiles: Quartiles::of(&residuals).expect("non-empty"),
            residuals,
            mean,
            sd,
            pct_error,
        });
    }
    let (pooled_mean, pooled_sd) = mean_sd(&pooled).expect("non-empty");
    let pcts: Vec<f64> = subjects.iter().filter_map(|s| s.pct_error).collect();
    let pct_stats = mean_sd(&pcts);
    Ok(ValidationSummary {
        pooled_n: pooled.len(),
        subjects,
        pooled_mean,
        pooled_sd,
        pct_error_mean: pct_stats.map(|p| p.0),
        pct_error_sd: pct_stats.map(|p| p.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(noise: f64, n_subjects: usize) -> SyntheticConfig {
        let mut c = SyntheticConfig::new(reference_surface(), n_subjects, 11);
        c.noise_sigma_mm = noise;
        c
    }

    #[test]
    fn reference_surface_is_pole_free_on_protocol_range() {
        let s = reference_surface();
        let domain = crate::regression::Domain {
            x: (
                std::f64::consts::FRAC_PI_2 - deg(5.0),
                std::f64::consts::FRAC_PI_2 + deg(5.0),
            ),
            y: (-deg(10.0), deg(30.0)),
        };
        s.check_pole_free(&domain).unwrap();
    }

    #[test]
    fn protocol_phase_order() {
        let c = synth(0.0, 1);
        assert!(c.beta4_at(0.0).abs() < 1e-12);
        // extension first
        assert!(c.beta4_at(0.05) < 0.0);
        let period = c.duration_s / c.cycles_per_subject as f64;
        assert!(c.beta4_at(period).abs() < 1e-9);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for k in 0..4000 {
            let b = c.beta4_at(k as f64 * period / 4000.0);
            lo = lo.min(b);
            hi = hi.max(b);
        }
        assert!((lo + deg(10.0)).abs() < 1e-5);
        assert!((hi - deg(30.0)).abs() < 1e-5);
    }

    #[test]
    fn noiseless_round_trip() {
        let (session, truth) = synthesize_with_truth(&synth(0.0, 1), 0).unwrap();
        let derived = derive_joint_series(&session).unwrap();
        assert_eq!(derived.len(), truth.len());
        for (a, b) in derived.samples.iter().zip(&truth.samples) {
            assert_eq!(a.t, b.t);
            assert!((a.state.beta3() - b.state.beta3()).abs() < 1e-9);
            assert!((a.state.beta4() - b.state.beta4()).abs() < 1e-9);
            assert!((a.state.d2() - b.state.d2()).abs() < 1e-9);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let c = synth(1.0, 3);
        assert_eq!(
            synthesize_session(&c, 2).unwrap(),
            synthesize_session(&c, 2).unwrap()
        );
        assert_ne!(
            synthesize_session(&c, 1).unwrap(),
            synthesize_session(&c, 2).unwrap()
        );
    }

    #[test]
    fn out_of_reach_sample_is_named() {
        let s = SubjectParams::new("x", 100.0, [0.0; 3]).unwrap();
        let good = base_to_sensor(
            &forward_kinematics(&JointState::new(0.0, 0.1, 3.0).unwrap(), &s),
            &s,
        );
        let bad_base = Pose::translation([0.0, 0.0, 150.0]);
        let bad = base_to_sensor(&bad_base, &s);
        let session = TrackingSession::new(
            s,
            Handedness::Right,
            None,
            vec![Sample { t: 0.0, pose: good }, Sample { t: 0.1, pose: bad }],
        )
        .unwrap();
        match derive_joint_series(&session) {
            Err(Error::Sample { index, source }) => {
                assert_eq!(index, 1);
                assert!(matches!(*source, Error::OutOfReach { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (fit, val) = subject_split(25, 9, 5).unwrap();
        assert_eq!((fit.len(), val.len()), (9, 16));
        assert!(fit.iter().all(|i| !val.contains(i)));
        assert_eq!(subject_split(25, 9, 5).unwrap(), (fit, val));
        let (fit, val) = subject_split(25, 0, 5).unwrap();
        assert!(fit.is_empty());
        assert_eq!(val.len(), 25);
        assert!(subject_split(25, 25, 5).is_err());
    }

    #[test]
    fn generator_surface_has_zero_residuals() {
        let c = synth(0.0, 2);
        let sessions = synthesize_cohort(&c).unwrap();
        let summary = validation_stats(&c.ground_truth, &sessions).unwrap();
        for s in &summary.subjects {
            assert!(s.residuals.iter().all(|r| r.abs() < 1e-9));
            assert!(s.pct_error.unwrap() < 1e-7);
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            validation_stats(&reference_surface(), &[]),
            Err(Error::EmptySession(_))
        ));
    }

    #[test]
    fn surface_json_round_trip() {
        let s = crate::regression::paper_surface::<f64>();
        let text = surface_to_json(&s);
        assert_eq!(parse_surface(&text, Path::new("s.json")).unwrap(), s);
        let deg_text = text.replace("\"rad\"", "\"deg\"");
        assert!(parse_surface(&deg_text, Path::new("s.json")).is_err());
    }

    #[test]
    fn quartiles_of_small_set() {
        let q = Quartiles::of(&[3.0, 1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!(
            (q.min, q.q1, q.median, q.q3, q.max),
            (1.0, 2.0, 3.0, 4.0, 5.0)
        );
        assert!(Quartiles::of(&[]).is_none());
    }
}
