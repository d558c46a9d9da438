//! JSON scenario files, end-to-end runs and artifact export.
//!
//! A run designs (or loads) the stress weights, validates the gain, builds the
//! six-motion basis, picks `h`, integrates the schedule and writes
//! `trajectory.csv`, `metadata.json` and, when `p(0)` lies in the shape set,
//! `spectral_report.json`. All outputs are deterministic functions of the
//! scenario file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formation::{affine_map, shape_distance, AffineCoords, Configuration, FormationError, Graph, ReferenceShape, ShapeBasis};
use crate::linalg::{self, C64};
use crate::motion::{build_motion_basis, MotionBasis, MotionError, MuConstraints, MOTION_NAMES};
use crate::sim::{compare_with_analytic, exponential_fit, integrate, IntegrationOptions, Integrator, Schedule, Segment, SimError, Trajectory};
use crate::spectral::{analytic_solution, build_chains, classify, stability_bound, SpectralError, StabilityBound, IN_SHAPE_TOL, ZERO_TOL};
use crate::stress::{design_weights_complete, design_weights_general, gain_spectrum, GainMatrix, GainReport, StressError, StressWeights};

pub const FORMAT_VERSION: u32 = 1;

/// Overrides the output root of every scenario.
pub const OUTPUT_ENV: &str = "AFFINE_FORMATION_OUT";

/// Safety factor applied to `h_l` when `h` is `"auto"`.
pub const AUTO_H_FACTOR: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario: {0}")]
    Invalid(String),
    #[error("formation: {0}")]
    Formation(#[from] FormationError),
    #[error("stress-weights: {0}")]
    Stress(#[from] StressError),
    #[error("motion-design: {0}")]
    Motion(#[from] MotionError),
    #[error("spectral-analysis: {0}")]
    Spectral(#[from] SpectralError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
}

impl ScenarioError {
    /// Process exit status: 1 io, 2 validation, 3 design, 4 divergence,
    /// 5 conditioning.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Io { .. } => 1,
            ScenarioError::Invalid(_) | ScenarioError::Formation(_) => 2,
            ScenarioError::Stress(StressError::Parse(_))
            | ScenarioError::Stress(StressError::Formation(_))
            | ScenarioError::Stress(StressError::LengthMismatch { .. })
            | ScenarioError::Stress(StressError::BadGain { .. }) => 2,
            ScenarioError::Stress(_) | ScenarioError::Motion(_) => 3,
            ScenarioError::Spectral(SpectralError::IllConditioned { .. })
            | ScenarioError::Spectral(SpectralError::LyapunovResidual { .. }) => 5,
            ScenarioError::Spectral(SpectralError::Formation(_))
            | ScenarioError::Spectral(SpectralError::LengthMismatch { .. }) => 2,
            ScenarioError::Spectral(_) => 3,
            ScenarioError::Sim(SimError::Divergence { .. }) => 4,
            ScenarioError::Sim(SimError::Motion(_)) => 3,
            ScenarioError::Sim(_) => 2,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkSpec {
    pub nodes: usize,
    /// One-based node pairs.
    pub edges: Vec<(usize, usize)>,
    /// Reference positions as `[x, y]`.
    pub shape: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameworkSource {
    Inline(FrameworkSpec),
    File { file: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightSource {
    Complete,
    General {
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainChoice {
    Auto,
    Value(f64),
}

impl Serialize for GainChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GainChoice::Auto => s.serialize_str("auto"),
            GainChoice::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for GainChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(GainChoice::Value(v)),
            Raw::Str(s) if s == "auto" => Ok(GainChoice::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "h must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub t_start: f64,
    /// `[vx, vy, vax, vay, vhx, vhy]`.
    pub delta_v: AffineCoords,
    /// Falls back to the scenario-level `kappa`.
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Explicit positions `[x, y]`.
    Positions(Vec<[f64; 2]>),
    /// `affine_map(Δ, p*)`.
    Affine(AffineCoords),
    /// `p* + offset·1`.
    Offset([f64; 2]),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub method: Integrator,
    pub dt: f64,
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub framework: FrameworkSource,
    /// Diagonal of `K`; identity when omitted.
    #[serde(default)]
    pub gain: Option<Vec<f64>>,
    /// Complete design on complete graphs, general design otherwise.
    #[serde(default)]
    pub weights: Option<WeightSource>,
    pub h: GainChoice,
    pub kappa: f64,
    pub segments: Vec<SegmentSpec>,
    pub total_time: f64,
    pub initial: InitialCondition,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// One-based `(i, j)` pairs with `μ_ij` forced to zero.
    #[serde(default)]
    pub mu_pins: Vec<(usize, usize)>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if s.format_version != FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                s.format_version
            )));
        }
        if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name == "." || s.name == ".." {
            return Err(invalid(format!("invalid scenario name {:?}", s.name)));
        }
        if !s.kappa.is_finite() {
            return Err(invalid("kappa must be finite"));
        }
        if let GainChoice::Value(h) = s.h {
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(format!("h must be positive, got {h}")));
            }
        }
        Ok(s)
    }

    pub fn schedule(&self) -> Result<Schedule, ScenarioError> {
        let segs = self
            .segments
            .iter()
            .map(|s| Segment {
                t_start: s.t_start,
                delta_v: s.delta_v,
                kappa: s.kappa.unwrap_or(self.kappa),
            })
            .collect();
        Ok(Schedule::new(segs, self.total_time)?)
    }
}

/// A scenario together with the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
    pub source_hash: String,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), ScenarioError> {
    fs::write(path, contents).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checksum of a matrix's little-endian row-major bytes.
pub fn matrix_checksum(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn load(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = read(path)?;
    let scenario = Scenario::from_json(&text)?;
    Ok(LoadedScenario {
        scenario,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        source_hash: sha256_hex(text.as_bytes()),
    })
}

fn points_to_config(points: &[[f64; 2]]) -> Configuration {
    Configuration::from_iterator(points.len(), points.iter().map(|p| C64::new(p[0], p[1])))
}

fn pairs(x: &Configuration) -> Vec<[f64; 2]> {
    x.iter().map(|z| [z.re, z.im]).collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn complex_pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// Everything derived from the framework before any integration.
pub struct Design {
    pub graph: Graph,
    pub shape: ReferenceShape,
    pub basis: ShapeBasis,
    pub weights: StressWeights,
    pub weight_method: String,
    pub gain: GainMatrix,
    pub gain_report: GainReport,
    pub motion: MotionBasis,
    pub warnings: Vec<String>,
}

impl LoadedScenario {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn framework(&self) -> Result<(Graph, ReferenceShape), ScenarioError> {
        let spec = match &self.scenario.framework {
            FrameworkSource::Inline(f) => f.clone(),
            FrameworkSource::File { file } => {
                let path = self.resolve(file);
                serde_json::from_str::<FrameworkSpec>(&read(&path)?)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?
            }
        };
        if spec.shape.len() != spec.nodes {
            return Err(invalid(format!(
                "framework has {} nodes but {} shape points",
                spec.nodes,
                spec.shape.len()
            )));
        }
        let graph = Graph::from_one_based(spec.nodes, &spec.edges)?;
        let shape = ReferenceShape::new(points_to_config(&spec.shape))?;
        Ok((graph, shape))
    }

    /// Weight design, gain check and motion basis.
    pub fn design(&self) -> Result<Design, ScenarioError> {
        let s = &self.scenario;
        let (graph, shape) = self.framework()?;
        let n = graph.node_count();
        let basis = ShapeBasis::new(&shape)?;
        let mut warnings = Vec::new();
        let source = s.weights.clone().unwrap_or(if graph.is_complete() {
            WeightSource::Complete
        } else {
            WeightSource::General { seed: 0 }
        });
        let (weights, weight_method) = match &source {
            WeightSource::Complete => (design_weights_complete(&graph, &shape)?, "complete".to_string()),
            WeightSource::General { seed } => {
                let d = design_weights_general(&graph, &shape, *seed)?;
                if d.warning.is_some() {
                    warnings.push(format!(
                        "stress-weights: no positive semidefinite stress found (stress space dimension {}, min complement eigenvalue {:.3e})",
                        d.stress_dimension, d.min_complement_eigenvalue
                    ));
                }
                (d.weights, format!("general(seed={seed})"))
            }
            WeightSource::File { path } => {
                let path = self.resolve(path);
                (
                    StressWeights::from_json(&graph, &shape, &read(&path)?)?,
                    format!("file({})", path.display()),
                )
            }
        };
        let gain = match &s.gain {
            None => GainMatrix::identity(n),
            Some(k) => GainMatrix::new(k.clone())?,
        };
        if gain.len() != n {
            return Err(invalid(format!("gain has {} entries, framework has {n} agents", gain.len())));
        }
        let gain_report = gain_spectrum(&weights, &gain)?;
        let mut pins = MuConstraints::new();
        for &(i, j) in &s.mu_pins {
            if i == 0 || j == 0 || i > n || j > n || !graph.has_edge(i - 1, j - 1) {
                return Err(invalid(format!("mu pin ({i}, {j}) is not an edge")));
            }
            pins = pins.pin(i - 1, j - 1);
        }
        let motion = build_motion_basis(&graph, &shape, &pins)?;
        Ok(Design {
            graph,
            shape,
            basis,
            weights,
            weight_method,
            gain,
            gain_report,
            motion,
            warnings,
        })
    }

    pub fn initial(&self, shape: &ReferenceShape) -> Result<Configuration, ScenarioError> {
        let p = match &self.scenario.initial {
            InitialCondition::Positions(pts) => {
                if pts.len() != shape.len() {
                    return Err(invalid(format!(
                        "initial positions have {} agents, framework has {}",
                        pts.len(),
                        shape.len()
                    )));
                }
                points_to_config(pts)
            }
            InitialCondition::Affine(d) => affine_map(d, shape.positions()),
            InitialCondition::Offset(o) => shape.positions().map(|z| z + C64::new(o[0], o[1])),
        };
        if p.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("initial condition is not finite"));
        }
        Ok(p)
    }

    /// Output directory: `$AFFINE_FORMATION_OUT/<name>` when set, else the
    /// scenario's `output_dir` (relative to the scenario file), else
    /// `out/<name>` relative to the working directory.
    pub fn output_dir(&self, root_override: Option<&Path>) -> PathBuf {
        if let Some(root) = root_override {
            return root.join(&self.scenario.name);
        }
        if let Ok(root) = std::env::var(OUTPUT_ENV) {
            if !root.is_empty() {
                return PathBuf::from(root).join(&self.scenario.name);
            }
        }
        match &self.scenario.output_dir {
            Some(d) => self.resolve(d),
            None => PathBuf::from("out").join(&self.scenario.name),
        }
    }
}

fn in_shape(p: &Configuration, basis: &ShapeBasis) -> bool {
    shape_distance(p, basis) <= IN_SHAPE_TOL * linalg::norm_c(p).max(1.0)
}

/// Summary returned by [`run`].
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub output_dir: PathBuf,
    pub h: f64,
    pub h_l: Option<f64>,
    pub labels: Vec<String>,
    pub samples: usize,
    pub final_shape_error: f64,
    pub max_shape_distance: f64,
    pub decay_rate: Option<f64>,
    pub analytic_max_error: Option<f64>,
    pub warnings: Vec<String>,
}

/// Full result of a run, before anything is written.
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub csv: String,
    pub metadata: Value,
    pub spectral: Option<Value>,
}

fn bound_for(d: &Design, seg: &Segment) -> Result<StabilityBound, SpectralError> {
    let m_bt = d.motion.combine(&seg.delta_v).m_bt();
    stability_bound(&d.weights, &d.gain, &m_bt, seg.kappa, &d.basis)
}

/// Runs the scenario in memory.
pub fn execute(loaded: &LoadedScenario) -> Result<RunOutput, ScenarioError> {
    let s = &loaded.scenario;
    let design = loaded.design()?;
    let schedule = loaded.scenario.schedule()?;
    let p0 = loaded.initial(&design.shape)?;
    let p0_in_s = in_shape(&p0, &design.basis);
    let mut warnings = design.warnings.clone();

    // h_l per segment; the largest governs "auto"
    let mut bounds = Vec::new();
    let mut bound_errors = Vec::new();
    for (k, seg) in schedule.segments().iter().enumerate() {
        match bound_for(&design, seg) {
            Ok(b) => bounds.push(Some(b)),
            Err(e) => {
                bound_errors.push(format!("segment {k}: {e}"));
                bounds.push(None)
            }
        }
    }
    let h_l = if bounds.iter().all(Option::is_some) {
        bounds.iter().flatten().map(|b| b.h_l).reduce(f64::max)
    } else {
        None
    };
    let h = match s.h {
        GainChoice::Value(h) => h,
        GainChoice::Auto => {
            if let Some(e) = bounds.iter().zip(schedule.segments()).find_map(|(b, seg)| {
                b.is_none().then(|| bound_for(&design, seg).expect_err("bound failed"))
            }) {
                return Err(e.into());
            }
            let hl = h_l.unwrap_or(0.0);
            if hl > 0.0 {
                AUTO_H_FACTOR * hl
            } else {
                1.0
            }
        }
    };
    for e in &bound_errors {
        warnings.push(format!("spectral-analysis: stability bound unavailable for {e}"));
    }
    if let Some(hl) = h_l {
        if h <= hl {
            warnings.push(format!("h = {h} does not exceed h_l = {hl}"));
        }
    }

    if !design.gain_report.passed {
        let numeric_h = matches!(s.h, GainChoice::Value(_));
        if p0_in_s && numeric_h {
            warnings.push(format!(
                "stress-weights: gain validation failed (zero eigenvalues: {}, offending: {}); continuing because p(0) is in the shape set",
                design.gain_report.zero_count,
                design.gain_report.offending.len()
            ));
        } else {
            return Err(StressError::GainRejected(Box::new(design.gain_report.clone())).into());
        }
    }

    let loops = schedule.assemble(&design.weights, &design.gain, &design.motion, h)?;
    let opts = IntegrationOptions {
        method: s.integrator.method,
        dt: s.integrator.dt,
        sample_every: s.integrator.sample_every,
    };
    let trajectory = integrate(&p0, &schedule, &loops, &design.basis, &opts)?;

    let classifications: Vec<_> = schedule
        .segments()
        .iter()
        .map(|seg| classify(&seg.delta_v, seg.kappa, ZERO_TOL))
        .collect();
    let labels: Vec<String> = classifications.iter().map(|c| c.label.to_string()).collect();

    // closed form, chained across segments from the analytic state at each switch
    let mut spectral = None;
    let mut analytic_max_error = None;
    if p0_in_s {
        let mut seg_reports = Vec::new();
        let mut start = p0.clone();
        let mut max_err: f64 = 0.0;
        let mut max_norm: f64 = 0.0;
        for (k, (seg, c)) in schedule.segments().iter().zip(&classifications).enumerate() {
            let rep = build_chains(c)?;
            let an = analytic_solution(&start, &rep, &design.basis)?;
            let t1 = schedule.segment_end(k);
            let mut local = Trajectory::default();
            for (i, (&t, st)) in trajectory.times.iter().zip(&trajectory.states).enumerate() {
                let here = if k + 1 == schedule.segments().len() {
                    t >= seg.t_start
                } else {
                    t >= seg.t_start && t < t1 || (t == t1 && trajectory.segment[i] == k)
                };
                if here {
                    local.times.push(t - seg.t_start);
                    local.states.push(st.clone());
                }
            }
            let cmp = compare_with_analytic(&local, &an);
            max_err = max_err.max(cmp.max_error);
            max_norm = max_norm.max(cmp.max_norm);
            let residual = rep.residual_on(&loops[k].closed_loop, &design.basis);
            let mut v = an.to_json();
            v["segment"] = json!(k);
            v["t_start"] = json!(seg.t_start);
            v["closed_loop_residual"] = json!(residual);
            v["analytic_max_error"] = json!(cmp.max_error);
            seg_reports.push(v);
            start = an.evaluate(t1 - seg.t_start);
        }
        analytic_max_error = Some(max_err);
        spectral = Some(json!({
            "name": s.name,
            "segments": seg_reports,
            "analytic_max_error": max_err,
            "analytic_relative_error": if max_norm > 0.0 { max_err / max_norm } else { max_err },
        }));
    }

    let fit = exponential_fit(&trajectory);
    let max_shape_distance = trajectory.shape_error.iter().cloned().fold(0.0, f64::max);
    let csv = trajectory_csv(&trajectory);
    let output_dir = loaded.output_dir(None);
    let segments_meta: Vec<Value> = schedule
        .segments()
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            let c = &classifications[k];
            json!({
                "t_start": seg.t_start,
                "t_end": schedule.segment_end(k),
                "delta_v": seg.delta_v,
                "kappa": seg.kappa,
                "case": c.label.as_str(),
                "branch": format!("{:?}", c.branch),
                "eigenvalues": complex_pairs(&c.eigenvalues),
                "h_l": bounds[k].as_ref().map(|b| b.h_l),
                "mbt_norm": linalg::spectral_norm(&loops[k].m_bt),
                "m_checksum": matrix_checksum(loops[k].motion.m_matrix()),
                "closed_loop_checksum": matrix_checksum(&loops[k].closed_loop),
            })
        })
        .collect();
    let metadata = json!({
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "scenario_sha256": loaded.source_hash,
        "agents": design.graph.node_count(),
        "edges": design.graph.one_based_edges(),
        "weights": {
            "method": design.weight_method,
            "laplacian_checksum": matrix_checksum(design.weights.laplacian()),
            "spectrum": design.weights.spectrum(),
        },
        "gain": {
            "entries": design.gain.entries(),
            "report": design.gain_report,
        },
        "h": h,
        "h_mode": match s.h { GainChoice::Auto => "auto", GainChoice::Value(_) => "explicit" },
        "h_l": h_l,
        "kappa": s.kappa,
        "segments": segments_meta,
        "case_labels": labels,
        "integrator": {
            "method": opts.method.as_str(),
            "dt": opts.dt,
            "sample_every": opts.sample_every,
        },
        "initial_in_shape_set": p0_in_s,
        "samples": trajectory.len(),
        "final": {
            "t": trajectory.times.last(),
            "shape_error": trajectory.shape_error.last(),
            "velocity_error": trajectory.velocity_error.last(),
            "positions": trajectory.final_state().map(pairs),
        },
        "max_shape_distance": max_shape_distance,
        "exponential_fit": fit,
        "analytic_max_error": analytic_max_error,
        "motion_basis_max_residual": design.motion.max_residual(),
        "warnings": warnings,
    });
    let summary = RunSummary {
        name: s.name.clone(),
        output_dir,
        h,
        h_l,
        labels,
        samples: trajectory.len(),
        final_shape_error: trajectory.shape_error.last().copied().unwrap_or(0.0),
        max_shape_distance,
        decay_rate: fit.map(|f| f.rate),
        analytic_max_error,
        warnings,
    };
    Ok(RunOutput {
        summary,
        trajectory,
        csv,
        metadata,
        spectral,
    })
}

fn to_pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn create_dir(dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Runs the scenario and writes its artifacts.
pub fn run(loaded: &LoadedScenario, out_root: Option<&Path>) -> Result<RunSummary, ScenarioError> {
    let mut out = execute(loaded)?;
    let dir = loaded.output_dir(out_root);
    create_dir(&dir)?;
    write(&dir.join("trajectory.csv"), out.csv.as_bytes())?;
    write(&dir.join("metadata.json"), &to_pretty(&out.metadata))?;
    let spectral_path = dir.join("spectral_report.json");
    match &out.spectral {
        Some(v) => write(&spectral_path, &to_pretty(v))?,
        None => {
            if spectral_path.exists() {
                fs::remove_file(&spectral_path).map_err(|source| ScenarioError::Io {
                    path: spectral_path.clone(),
                    source,
                })?;
            }
        }
    }
    out.summary.output_dir = dir;
    Ok(out.summary)
}

/// CSV header and rows: `t`, `x_i,y_i` per agent, `shape_error`,
/// `velocity_error`, `segment`, then `u_i` per agent.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let n = tr.states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x_{i},y_{i}");
    }
    out.push_str(",shape_error,velocity_error,segment");
    for i in 1..=n {
        let _ = write!(out, ",u_{i}");
    }
    out.push('\n');
    for k in 0..tr.len() {
        let _ = write!(out, "{:e}", tr.times[k]);
        for z in tr.states[k].iter() {
            let _ = write!(out, ",{:e},{:e}", z.re, z.im);
        }
        let _ = write!(out, ",{:e},{:e},{}", tr.shape_error[k], tr.velocity_error[k], tr.segment[k]);
        for u in &tr.control_norms[k] {
            let _ = write!(out, ",{u:e}");
        }
        out.push('\n');
    }
    out
}

/// Design-only bundle: `L`, gain spectrum, the six basis matrices and `h_l`
/// for the first segment.
pub fn design_bundle(loaded: &LoadedScenario) -> Result<Value, ScenarioError> {
    let design = loaded.design()?;
    let schedule = loaded.scenario.schedule()?;
    let first = &schedule.segments()[0];
    let bound = match bound_for(&design, first) {
        Ok(b) => json!({
            "kappa": first.kappa,
            "delta_v": first.delta_v,
            "h_l": b.h_l,
            "q_norm": b.q_norm,
            "mbt_norm": b.mbt_norm,
            "residual": b.residual,
            "block_eigenvalues": complex_pairs(&b.block_eigenvalues),
        }),
        Err(e) => json!({
            "kappa": first.kappa,
            "delta_v": first.delta_v,
            "h_l": Value::Null,
            "error": e.to_string(),
        }),
    };
    let l = design.weights.laplacian();
    let spectrum = design.weights.spectrum();
    let scale = linalg::spectral_norm(l).max(f64::MIN_POSITIVE);
    let zero_eigenvalues = spectrum.iter().filter(|v| v.abs() < 1e-8 * scale).count();
    let motions: Vec<Value> = (0..6)
        .map(|k| {
            let m = design.motion.component(k);
            json!({
                "name": MOTION_NAMES[k],
                "m": matrix_rows(m.m_matrix()),
                "m_bt": matrix_rows(&m.m_bt()),
            })
        })
        .collect();
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "name": loaded.scenario.name,
        "scenario_sha256": loaded.source_hash,
        "agents": design.graph.node_count(),
        "edges": design.graph.one_based_edges(),
        "weights": {
            "method": design.weight_method,
            "edge_weights": design.weights.weights(),
            "laplacian": matrix_rows(l),
            "spectrum": spectrum,
            "zero_eigenvalues": zero_eigenvalues,
            "stress_residual": design.weights.stress_residual(&design.shape),
        },
        "gain": {
            "entries": design.gain.entries(),
            "report": design.gain_report,
        },
        "motion_basis": motions,
        "motion_basis_max_residual": design.motion.max_residual(),
        "stability_bound": bound,
        "warnings": design.warnings,
    }))
}

/// Writes `design.json` into the output directory.
pub fn design(loaded: &LoadedScenario, out_root: Option<&Path>) -> Result<(PathBuf, Value), ScenarioError> {
    let bundle = design_bundle(loaded)?;
    let dir = loaded.output_dir(out_root);
    create_dir(&dir)?;
    let path = dir.join("design.json");
    write(&path, &to_pretty(&bundle))?;
    Ok((path, bundle))
}

/// Scenario files (`*.json`) directly inside `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let entries = fs::read_dir(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_scenario(extra: &str) -> String {
        format!(
            r#"{{
  "format_version": 1,
  "name": "unit",
  "framework": {{
    "nodes": 4,
    "edges": [[1,2],[2,3],[3,4],[1,3],[2,4],[4,1]],
    "shape": [[-1,-1],[-1,1],[1,1],[1,-1]]
  }},
  "kappa": 1.0,
  "segments": [{{"t_start": 0.0, "delta_v": [1,0,0,0,0,0]}}],
  "total_time": 1.0,
  "integrator": {{"method": "rk4", "dt": 0.01}}{extra}
}}"#
        )
    }

    fn loaded(text: &str) -> LoadedScenario {
        LoadedScenario {
            scenario: Scenario::from_json(text).unwrap(),
            base_dir: PathBuf::new(),
            source_hash: sha256_hex(text.as_bytes()),
        }
    }

    #[test]
    fn parses_h_forms() {
        let a = Scenario::from_json(&square_scenario(r#", "h": "auto", "initial": {"offset": [0, 0]}"#)).unwrap();
        assert_eq!(a.h, GainChoice::Auto);
        let b = Scenario::from_json(&square_scenario(r#", "h": 2.5, "initial": {"affine": [0,0,1,1,0,0]}"#)).unwrap();
        assert_eq!(b.h, GainChoice::Value(2.5));
        assert!(Scenario::from_json(&square_scenario(r#", "h": "big", "initial": {"offset": [0, 0]}"#)).is_err());
        assert!(Scenario::from_json(&square_scenario(r#", "h": -1, "initial": {"offset": [0, 0]}"#)).is_err());
    }

    #[test]
    fn rejects_wrong_version_and_unknown_fields() {
        let s = square_scenario(r#", "h": 1, "initial": {"offset": [0, 0]}"#);
        let e = Scenario::from_json(&s.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = Scenario::from_json(&s.replace("\"kappa\"", "\"bogus\": 1, \"kappa\"")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn auto_h_is_five_times_bound() {
        let l = loaded(&square_scenario(r#", "h": "auto", "initial": {"positions": [[-1.2,-1],[-1,1.1],[1,1],[1,-1]]}"#));
        let out = execute(&l).unwrap();
        let hl = out.summary.h_l.unwrap();
        assert!(hl > 0.0);
        assert!((out.summary.h - 5.0 * hl).abs() < 1e-12);
        assert!(out.spectral.is_none());
    }

    #[test]
    fn in_shape_run_reports_analytic_agreement() {
        let l = loaded(&square_scenario(r#", "h": 1, "initial": {"affine": [0.1,0,1,1,0.2,0]}"#));
        let out = execute(&l).unwrap();
        assert_eq!(out.summary.labels, vec!["C5"]);
        assert!(out.summary.analytic_max_error.unwrap() < 1e-10);
        let sp = out.spectral.unwrap();
        assert_eq!(sp["segments"][0]["case_label"], "C5");
        assert_eq!(sp["segments"][0]["alphas"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn csv_has_documented_columns() {
        let l = loaded(&square_scenario(r#", "h": 1, "initial": {"offset": [0, 0]}"#));
        let out = execute(&l).unwrap();
        let header = out.csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,x_1,y_1,x_2,y_2,x_3,y_3,x_4,y_4,shape_error,velocity_error,segment,u_1,u_2,u_3,u_4"
        );
        assert_eq!(out.csv.lines().count(), out.trajectory.len() + 1);
        let row: Vec<f64> = out.csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row[1], -1.0);
        assert_eq!(row[2], -1.0);
    }

    #[test]
    fn execution_is_deterministic() {
        let l = loaded(&square_scenario(r#", "h": 3, "initial": {"positions": [[-1.2,-1],[-1,1.1],[1,1],[1,-1]]}"#));
        let a = execute(&l).unwrap();
        let b = execute(&l).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(to_pretty(&a.metadata), to_pretty(&b.metadata));
    }

    #[test]
    fn tree_graph_fails_in_design() {
        let text = r#"{
  "format_version": 1, "name": "tree",
  "framework": {"nodes": 4, "edges": [[1,2],[2,3],[3,4]], "shape": [[-1,-1],[-1,1],[1,1],[1,-1]]},
  "h": 1, "kappa": 1, "segments": [{"t_start": 0, "delta_v": [0,0,0,0,0,0]}], "total_time": 1,
  "initial": {"offset": [0,0]}, "integrator": {"dt": 0.1}
}"#;
        let err = design_bundle(&loaded(text)).err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn negative_gain_off_shape_is_a_design_failure() {
        let l = loaded(&square_scenario(r#", "h": 1, "gain": [-1,-1,-1,-1], "initial": {"positions": [[-1.2,-1],[-1,1.1],[1,1],[1,-1]]}"#));
        let err = execute(&l).err().unwrap();
        assert!(matches!(err, ScenarioError::Stress(StressError::GainRejected(_))));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn divergence_maps_to_exit_four() {
        let text = square_scenario(r#", "h": 0.01, "initial": {"positions": [[-1.2,-1],[-1,1.1],[1,1],[1,-1]]}"#)
            .replace("[1,0,0,0,0,0]", "[0,0,4,4,0,0]")
            .replace("\"total_time\": 1.0", "\"total_time\": 20.0")
            .replace("\"kappa\": 1.0", "\"kappa\": 2.0");
        let err = execute(&loaded(&text)).err().unwrap();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn design_bundle_reports_square_laplacian() {
        let l = loaded(&square_scenario(r#", "h": 1, "initial": {"offset": [0, 0]}"#));
        let b = design_bundle(&l).unwrap();
        let lap = &b["weights"]["laplacian"];
        assert_eq!(lap[0][0].as_f64().unwrap(), 0.25);
        assert_eq!(lap[0][1].as_f64().unwrap(), -0.25);
        assert_eq!(b["weights"]["zero_eigenvalues"], 3);
        assert_eq!(b["motion_basis"].as_array().unwrap().len(), 6);
        assert!(b["stability_bound"]["h_l"].as_f64().unwrap() > 0.0);
    }
}
