//! Run configuration, command orchestration and report emission.
//!
//! Every command returns a [`RunOutput`]: a serialisable report plus named
//! column files. Writing is left to [`write_outputs`] so that a single caller
//! owns every output file.

use crate::arcs::{
    detect_delta_u_arc, find_periodic_point, iterate_arc, lattice_periodic_points, make_u_arc, periodic_census,
    ArcError, ArcGrowthSeries, DeltaArcOutcome, PeriodicPoint, PeriodicSearch, SubdivisionOptions,
};
use crate::cone::{
    build_cone, certify_partial_hyperbolicity, dichotomy_search, e_perp_core, ConeCertificate, ConeConfig,
    DichotomyOutcome,
};
use crate::homology::{
    area_length_consistency, diameter_growth, homology_matrix, radius_consistency, AreaMeasurement,
    DiameterSeries, GrowthReport, HomologyAction, HomologyVerdict, VerdictKind, HOMOLOGY_SAMPLES,
};
use crate::linalg::{Mat2, TangentVector};
use crate::orbit::{sample_lambda_set, LambdaSearch, OrbitError};
use crate::perturb::{
    collapsed_diameter, cycle_witness, franks_surgery, full_kernel_surgery, shear_sink_variant,
    shear_symmetric_cycle, sink_surgery, transitivity_probe, KernelSurgeryOptions, PerturbError, PerturbedMap,
    SurgeryRequest, TransitivityProbe,
};
use crate::splitting::{
    angle_profile, check_domination, splitting_grid, AngleProfile, DominationCertificate, GridSpec, SplittingConfig,
};
use crate::surface_map::{canonical, locate_critical_set, CriticalSet, MapError, SurfaceEndomorphism, TorusMap, TorusPoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read map `{path}`: {source}")]
    MapRead { path: String, source: std::io::Error },
    #[error("map `{path}`: {source}")]
    Map { path: String, source: MapError },
    #[error("cannot write `{path}`: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        3
    }
}

/// Verdict of a command, mapped onto the process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Certified,
    Failed,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Certified => 0,
            Outcome::Failed => 1,
            Outcome::Inconclusive => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum PerturbRecipe {
    /// Surgery whose target equals `Df` at the point.
    Noop { point: [f64; 2], inner_radius: f64, outer_radius: f64 },
    /// Target matrix (rows) when given, else `scale · Df(point)`.
    Franks {
        point: [f64; 2],
        #[serde(default = "unit_scale")]
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<[[f64; 2]; 2]>,
        inner_radius: f64,
        outer_radius: f64,
    },
    /// Kernel surgery along the symmetric cycle of the shear family with
    /// the given amplitude; replaces the configured map.
    FullKernel { amplitude: f64, half_period: usize, inner_radius: f64 },
    /// Sink at the fixed point (0,0): of the conformal-multiplier shear
    /// variant when `mu` is given, else of the configured map.
    Sink {
        #[serde(default)]
        mu: Option<f64>,
        inner_radius: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for PerturbRecipe {
    fn default() -> Self {
        PerturbRecipe::Noop {
            point: [0.3, 0.7],
            inner_radius: 0.01,
            outer_radius: 0.02,
        }
    }
}

/// All tunable parameters of a run. The output directory and thread count
/// do not influence results and are left out of the serialised form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Canonical map name or path to a map file.
    pub map: String,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: Option<usize>,
    pub seed: u64,
    /// Cone and splitting grid resolution.
    pub grid: usize,
    /// Horizon N for the singular-limit E field and M for backward branches.
    pub horizon: usize,
    pub eta: f64,
    pub k_max: usize,
    pub ell_max: usize,
    pub n_max: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub delta: f64,
    pub critical_resolution: usize,
    pub critical_tolerance: f64,
    pub critical_margin: f64,
    pub lambda_count: usize,
    pub lambda_attempts: usize,
    pub arc_start: [f64; 2],
    pub arc_length: f64,
    pub arc_iterates: usize,
    pub arc_resolution: usize,
    pub arc_max_segment: f64,
    pub area_epsilon: f64,
    pub area_samples: usize,
    pub diameter_radius: f64,
    pub periodic_seed: [f64; 2],
    pub periodic_max: usize,
    pub census_max: usize,
    pub census_resolution: usize,
    pub probe_steps: usize,
    pub probe_grid: usize,
    pub perturb: PerturbRecipe,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: String::new(),
            out: PathBuf::from("endocert-out"),
            threads: None,
            seed: 0,
            grid: 64,
            horizon: crate::splitting::DEFAULT_HORIZON,
            eta: crate::cone::DEFAULT_ETA,
            k_max: 5,
            ell_max: 5,
            n_max: 3,
            alpha: 0.05,
            epsilon: 0.1,
            nu: 0.05,
            delta: 0.1,
            critical_resolution: 128,
            critical_tolerance: 1e-12,
            critical_margin: 1e-2,
            lambda_count: 16,
            lambda_attempts: 400,
            arc_start: [0.1234, 0.5678],
            arc_length: 1e-3,
            arc_iterates: 12,
            arc_resolution: 16,
            arc_max_segment: 1e-2,
            area_epsilon: 0.05,
            area_samples: 200_000,
            diameter_radius: 1e-3,
            periodic_seed: [0.001, 0.001],
            periodic_max: 12,
            census_max: 3,
            census_resolution: 48,
            probe_steps: 1_000_000,
            probe_grid: 64,
            perturb: PerturbRecipe::default(),
        }
    }
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(name: &str, v: T, lo: T, hi: T) -> Result<(), PipelineError> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn positive_below(name: &str, v: f64, hi: f64) -> Result<(), PipelineError> {
    if v > 0.0 && v < hi {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{name} = {v} outside (0, {hi})")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parameter ranges:
    ///
    /// | field | range |
    /// |---|---|
    /// | grid | 8..=2048 |
    /// | horizon | 1..=400 |
    /// | eta | (0, π/4) |
    /// | k_max, ell_max, n_max | 1..=32 |
    /// | alpha | (0, π/2) |
    /// | epsilon | [0, 1] |
    /// | nu, delta | (0, 0.5) |
    /// | critical_resolution | 16..=4096 |
    /// | arc_iterates | 0..=200 |
    /// | census_max | 0..=6 |
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.map.trim().is_empty() {
            return Err(PipelineError::Config("no map given".into()));
        }
        in_range("grid", self.grid, 8, 2048)?;
        in_range("horizon", self.horizon, 1, 400)?;
        positive_below("eta", self.eta, FRAC_PI_4)?;
        in_range("k_max", self.k_max, 1, 32)?;
        in_range("ell_max", self.ell_max, 1, 32)?;
        in_range("n_max", self.n_max, 1, 32)?;
        positive_below("alpha", self.alpha, std::f64::consts::FRAC_PI_2)?;
        in_range("epsilon", self.epsilon, 0.0, 1.0)?;
        positive_below("nu", self.nu, 0.5)?;
        positive_below("delta", self.delta, 0.5)?;
        in_range("critical_resolution", self.critical_resolution, 16, 4096)?;
        positive_below("critical_tolerance", self.critical_tolerance, 1e-3)?;
        positive_below("critical_margin", self.critical_margin, 0.5)?;
        in_range("lambda_count", self.lambda_count, 0, 10_000)?;
        in_range("lambda_attempts", self.lambda_attempts, 1, 1_000_000)?;
        positive_below("arc_length", self.arc_length, 1.0)?;
        in_range("arc_iterates", self.arc_iterates, 0, 200)?;
        in_range("arc_resolution", self.arc_resolution, 1, 100_000)?;
        positive_below("arc_max_segment", self.arc_max_segment, 1.0)?;
        positive_below("area_epsilon", self.area_epsilon, 0.5)?;
        in_range("area_samples", self.area_samples, 0, 100_000_000)?;
        positive_below("diameter_radius", self.diameter_radius, 0.25)?;
        in_range("periodic_max", self.periodic_max, 1, 64)?;
        in_range("census_max", self.census_max, 0, 6)?;
        in_range("census_resolution", self.census_resolution, 4, 1024)?;
        in_range("probe_steps", self.probe_steps, 1, 1_000_000_000)?;
        in_range("probe_grid", self.probe_grid, 2, 4096)?;
        if let PerturbRecipe::Franks { target: Some(rows), .. } = &self.perturb {
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(PipelineError::Config("franks target matrix must be finite".into()));
            }
        }
        match &self.perturb {
            PerturbRecipe::Noop {
                inner_radius,
                outer_radius,
                ..
            }
            | PerturbRecipe::Franks {
                inner_radius,
                outer_radius,
                ..
            } => {
                if !(*inner_radius > 0.0 && outer_radius > inner_radius && *outer_radius < 0.25) {
                    return Err(PipelineError::Config(format!(
                        "surgery radii r = {inner_radius}, R = {outer_radius} must satisfy 0 < r < R < 1/4"
                    )));
                }
            }
            PerturbRecipe::FullKernel {
                half_period, inner_radius, ..
            } => {
                in_range("half_period", *half_period, 1, 24)?;
                positive_below("inner_radius", *inner_radius, 0.1)?;
            }
            PerturbRecipe::Sink { inner_radius, .. } => positive_below("inner_radius", *inner_radius, 0.125)?,
        }
        Ok(())
    }

    fn cone_config(&self, require_expansion: bool) -> ConeConfig {
        ConeConfig {
            eta: self.eta,
            grid: self.grid,
            horizon: self.horizon,
            k_max: self.k_max,
            ell_max: self.ell_max,
            n_max: self.n_max,
            alpha: self.alpha,
            require_expansion,
        }
    }

    fn splitting_config(&self) -> SplittingConfig {
        SplittingConfig {
            horizon_e: self.horizon,
            horizon_f: self.horizon,
            ..SplittingConfig::default()
        }
    }
}

/// Resolves a canonical name or reads a map file.
pub fn load_map(spec: &str) -> Result<SurfaceEndomorphism, PipelineError> {
    if canonical::NAMES.contains(&spec) {
        return canonical::by_name(spec).map_err(|source| PipelineError::Map {
            path: spec.into(),
            source,
        });
    }
    let text = std::fs::read_to_string(spec).map_err(|source| PipelineError::MapRead {
        path: spec.into(),
        source,
    })?;
    SurfaceEndomorphism::from_toml_str(&text).map_err(|source| PipelineError::Map {
        path: spec.into(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapIdentity {
    pub name: String,
    pub source: String,
    pub linear: [[i64; 2]; 2],
    pub perturbation_terms: usize,
    pub perturbation_bound: f64,
    pub sha256: String,
}

impl MapIdentity {
    pub fn of(f: &SurfaceEndomorphism, source: &str) -> Self {
        Self {
            name: f.name.clone(),
            source: source.to_string(),
            linear: f.linear.rows(),
            perturbation_terms: f.perturbation.len(),
            perturbation_bound: f.perturbation_bound(),
            sha256: f.content_hash(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSummary {
    pub resolution: usize,
    pub det_tolerance: f64,
    pub samples: usize,
    pub kernel_dim_two: usize,
    pub max_abs_det: f64,
}

impl CriticalSummary {
    fn of(c: &CriticalSet) -> Self {
        Self {
            resolution: c.resolution,
            det_tolerance: c.det_tolerance,
            samples: c.len(),
            kernel_dim_two: c.samples.iter().filter(|s| s.kernel_dim == 2).count(),
            max_abs_det: c.samples.iter().map(|s| s.det.abs()).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingSummary {
    pub grid: usize,
    pub horizon: usize,
    /// Grid points where E or F could not be computed.
    pub failures: usize,
    pub angles: Option<AngleProfile>,
    /// Domination at ℓ = 1 (always reported).
    pub ratio_at_one: Option<DominationCertificate>,
    /// First valid ℓ ≤ ell_max, or the best one.
    pub domination: Option<DominationCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomologySection {
    pub seed: u64,
    pub samples: usize,
    pub action: HomologyAction,
    pub verdict: HomologyVerdict,
    pub diameters: Option<DiameterSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSection {
    pub start: TorusPoint,
    pub direction: TangentVector,
    pub initial_length: f64,
    pub iterates: usize,
    pub max_segment: f64,
    pub max_turn: f64,
    pub series: ArcGrowthSeries,
    pub final_nodes: usize,
    pub delta: f64,
    pub delta_outcome: Option<DeltaArcOutcome>,
    pub area: Option<AreaMeasurement>,
    pub growth: GrowthReport,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomySection {
    pub epsilon: f64,
    pub pool: usize,
    pub pool_error: Option<String>,
    pub arm: String,
    pub certificate: Option<ConeCertificate>,
    pub witness_start: Option<TorusPoint>,
    pub witness_m: Option<usize>,
    pub witness_step_angle: Option<f64>,
    pub witness_cost: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub starts: usize,
    pub orbit_length: usize,
    pub resolution: usize,
    pub coverage: f64,
    pub min_coverage: f64,
}

impl ProbeSummary {
    fn of(p: &TransitivityProbe) -> Self {
        Self {
            starts: p.per_start.len(),
            orbit_length: p.orbit_length,
            resolution: p.resolution,
            coverage: p.coverage,
            min_coverage: p.per_start.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationSection {
    pub recipe: PerturbRecipe,
    pub epsilon: f64,
    pub surgeries: usize,
    pub c1_distance: Option<f64>,
    pub overhead_factor: Option<f64>,
    pub kernel_iterate: Option<usize>,
    pub product_norm: Option<f64>,
    pub kernel_dimension: Option<u8>,
    pub collapse_diameter: Option<f64>,
    pub witness_cost: Option<f64>,
    pub sink_scaling: Option<f64>,
    pub sink_spectral_radius: Option<f64>,
    pub before: Option<ProbeSummary>,
    pub after: Option<ProbeSummary>,
    pub probe_note: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CensusRow {
    pub period: usize,
    pub newton: usize,
    /// `|det(A^l − I)|`.
    pub lattice_formula: u64,
    /// Brute-force lattice enumeration; `None` unless the map is linear.
    pub lattice_enumeration: Option<usize>,
    pub matches: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicSection {
    pub seed_point: TorusPoint,
    pub nu: f64,
    pub max_period: usize,
    pub point: Option<PeriodicPoint>,
    pub error: Option<String>,
    pub census_resolution: usize,
    pub census: Vec<CensusRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Unix seconds; excluded from the report hash.
    pub started_unix: Option<u64>,
    pub finished_unix: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificationReport {
    pub command: String,
    pub map: MapIdentity,
    pub config: RunConfig,
    pub critical: Option<CriticalSummary>,
    pub splitting: Option<SplittingSummary>,
    pub cone: Option<ConeCertificate>,
    pub homology: Option<HomologySection>,
    pub arcs: Option<ArcSection>,
    pub dichotomy: Option<DichotomySection>,
    pub perturbation: Option<PerturbationSection>,
    pub periodic: Option<PeriodicSection>,
    pub outcome: Outcome,
    pub summary: String,
    pub data_files: Vec<String>,
    pub provenance: Provenance,
    /// SHA-256 of the JSON form with timestamps and this field blanked.
    pub report_hash: String,
}

impl CertificationReport {
    fn new(command: &str, map: MapIdentity, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            map,
            config: cfg.clone(),
            critical: None,
            splitting: None,
            cone: None,
            homology: None,
            arcs: None,
            dichotomy: None,
            perturbation: None,
            periodic: None,
            outcome: Outcome::Inconclusive,
            summary: String::new(),
            data_files: Vec::new(),
            provenance: Provenance {
                version: VERSION.into(),
                command: command.into(),
                seed: cfg.seed,
                started_unix: None,
                finished_unix: None,
            },
            report_hash: String::new(),
        }
    }

    pub fn compute_hash(&self) -> String {
        let mut r = self.clone();
        r.provenance.started_unix = None;
        r.provenance.finished_unix = None;
        r.report_hash.clear();
        let bytes = serde_json::to_vec(&r).expect("report serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_text(&self) -> String {
        render_text(self)
    }
}

pub struct RunOutput {
    pub report: CertificationReport,
    /// `(file name, whitespace-delimited columns)`.
    pub columns: Vec<(String, String)>,
}

fn unix_now() -> Option<u64> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn finish(mut report: CertificationReport, columns: Vec<(String, String)>, started: Option<u64>) -> RunOutput {
    report.data_files = columns.iter().map(|(n, _)| n.clone()).collect();
    report.report_hash = report.compute_hash();
    report.provenance.started_unix = started;
    report.provenance.finished_unix = unix_now();
    RunOutput { report, columns }
}

/// Writes `<command>.json`, `<command>.txt` and the column files into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>, PipelineError> {
    let werr = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(werr(dir))?;
    let cmd = &out.report.command;
    let mut files = vec![
        (format!("{cmd}.json"), out.report.to_json()),
        (format!("{cmd}.txt"), out.report.to_text()),
    ];
    files.extend(out.columns.iter().cloned());
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(werr(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn prepare(cfg: &RunConfig) -> Result<SurfaceEndomorphism, PipelineError> {
    cfg.validate()?;
    load_map(&cfg.map)
}

fn critical_columns(c: &CriticalSet) -> String {
    let mut out = String::from("# x y det kernel_dim\n");
    for s in &c.samples {
        let _ = writeln!(out, "{:.15e} {:.15e} {:.6e} {}", s.point.x(), s.point.y(), s.det, s.kernel_dim);
    }
    out
}

fn splitting_summary<M: TorusMap + ?Sized>(f: &M, cfg: &RunConfig) -> (SplittingSummary, String) {
    let grid = GridSpec::new(cfg.grid);
    let results = splitting_grid(f, grid, &cfg.splitting_config());
    let failures = results.iter().filter(|r| r.is_err()).count();
    let samples: Vec<_> = results.into_iter().filter_map(Result::ok).collect();
    let mut cols = String::from("# x y e_u e_v f_u f_v angle\n");
    for s in &samples {
        let _ = writeln!(
            cols,
            "{:.6e} {:.6e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
            s.base.x(),
            s.base.y(),
            s.e.u,
            s.e.v,
            s.f.u,
            s.f.v,
            s.angle
        );
    }
    let (ratio_at_one, domination) = if failures == 0 && !samples.is_empty() {
        let one = check_domination(f, &samples, 1, cfg.alpha, Some(grid));
        let mut best = one.clone();
        if !one.valid {
            for ell in 2..=cfg.ell_max {
                let c = check_domination(f, &samples, ell, cfg.alpha, Some(grid));
                let stop = c.valid;
                if stop || c.worst_ratio < best.worst_ratio {
                    best = c;
                }
                if stop {
                    break;
                }
            }
        }
        (Some(one), Some(best))
    } else {
        (None, None)
    };
    (
        SplittingSummary {
            grid: cfg.grid,
            horizon: cfg.horizon,
            failures,
            angles: angle_profile(&samples),
            ratio_at_one,
            domination,
        },
        cols,
    )
}

fn homology_section<M: TorusMap + ?Sized>(
    f: &M,
    cfg: &RunConfig,
    certificate_valid: bool,
    with_diameters: bool,
) -> Result<HomologySection, PipelineError> {
    let action = homology_matrix(f, cfg.seed).map_err(|e| PipelineError::Module {
        module: "homology",
        message: e.to_string(),
    })?;
    let verdict = radius_consistency(&action, certificate_valid);
    let diameters = with_diameters.then(|| {
        diameter_growth(
            f,
            TorusPoint::new(cfg.arc_start[0], cfg.arc_start[1]),
            cfg.diameter_radius,
            cfg.arc_iterates,
        )
    });
    Ok(HomologySection {
        seed: cfg.seed,
        samples: HOMOLOGY_SAMPLES,
        action,
        verdict,
        diameters,
    })
}

fn cone_outcome(c: &ConeCertificate) -> Outcome {
    if c.valid {
        return Outcome::Certified;
    }
    // A clause whose grid minimum passes but whose margin is eaten by the
    // Lipschitz slack is undecided at this resolution.
    let clauses = [Some(&c.invariance), Some(&c.transversality), c.expansion.as_ref().map(|e| &e.clause)];
    let failing: Vec<_> = clauses.into_iter().flatten().filter(|cl| !cl.pass).collect();
    let undecided = failing.iter().all(|cl| {
        let threshold = if cl.clause.starts_with("expansion") { 1.0 } else { 0.0 };
        cl.raw_min > threshold
    });
    if undecided {
        Outcome::Inconclusive
    } else {
        Outcome::Failed
    }
}

/// Critical set, splitting, cone certification and homology verdict.
pub fn cmd_certify(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    let f = prepare(cfg)?;
    let mut report = CertificationReport::new("certify", MapIdentity::of(&f, &cfg.map), cfg);
    let crit = locate_critical_set(&f, cfg.critical_resolution, cfg.critical_tolerance);
    report.critical = Some(CriticalSummary::of(&crit));
    let mut columns = vec![("certify_critical.dat".to_string(), critical_columns(&crit))];

    let (split, split_cols) = splitting_summary(&f, cfg);
    columns.push(("certify_splitting.dat".into(), split_cols));
    let dominated = split.domination.as_ref().is_some_and(|d| d.valid);
    report.splitting = Some(split);

    let cert = certify_partial_hyperbolicity(&f, &cfg.cone_config(true), Some(&crit)).map_err(|e| PipelineError::Module {
        module: "cone_certifier",
        message: e.to_string(),
    })?;
    let hom = homology_section(&f, cfg, cert.valid || dominated, false)?;
    let mut outcome = cone_outcome(&cert);
    if hom.verdict.kind != VerdictKind::Consistent && outcome == Outcome::Certified {
        outcome = Outcome::Failed;
    }
    report.summary = match &cert.first_failure {
        None => format!(
            "partially hyperbolic certificate valid: k={}, λ={:.6}; {}",
            cert.k,
            cert.lambda().unwrap_or(f64::NAN),
            hom.verdict.message
        ),
        Some(clause) => format!("certificate failed at `{clause}`; {}", hom.verdict.message),
    };
    report.cone = Some(cert);
    report.homology = Some(hom);
    report.outcome = outcome;
    Ok(finish(report, columns, started))
}

fn arc_columns(series: &ArcGrowthSeries) -> String {
    series.to_columns()
}

/// Iterates a u-arc through the cone about `E^⊥`, fits the growth exponent,
/// runs the δ-escape check and measures the area/length ratio of the image.
pub fn cmd_arcs(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    let f = prepare(cfg)?;
    let mut report = CertificationReport::new("arcs", MapIdentity::of(&f, &cfg.map), cfg);
    let cone = build_cone(e_perp_core(&f, cfg.horizon), cfg.eta).map_err(|e| PipelineError::Config(e.to_string()))?;
    let start = TorusPoint::new(cfg.arc_start[0], cfg.arc_start[1]);
    let direction = cone.core_at(start);
    let arc = match make_u_arc(start.lift(), direction, cfg.arc_length, &cone, cfg.arc_resolution) {
        Ok(a) => a,
        Err(e @ ArcError::ConeViolation { .. }) => {
            // The cone field turns faster than the arc is long: no u-arc here.
            report.summary = format!("no straight u-arc at {start}: {e}");
            report.outcome = Outcome::Inconclusive;
            return Ok(finish(report, Vec::new(), started));
        }
        Err(e) => {
            return Err(PipelineError::Module {
                module: "arc_dynamics",
                message: e.to_string(),
            })
        }
    };
    let opts = SubdivisionOptions::for_cone(cfg.eta, cfg.arc_max_segment);
    let diameters = diameter_growth(&f, start, cfg.diameter_radius, cfg.arc_iterates);
    let mut section = ArcSection {
        start,
        direction,
        initial_length: arc.length(),
        iterates: cfg.arc_iterates,
        max_segment: opts.max_segment,
        max_turn: opts.max_turn,
        series: ArcGrowthSeries::from_lengths(vec![arc.length()]),
        final_nodes: arc.nodes.len(),
        delta: cfg.delta,
        delta_outcome: None,
        area: None,
        growth: GrowthReport {
            arc_exponent: None,
            diameter_exponent: diameters.exponent,
            area_constant: None,
            epsilon: cfg.area_epsilon,
        },
        error: None,
    };
    let mut columns = Vec::new();
    let mut outcome = Outcome::Inconclusive;
    match iterate_arc(&f, &arc, cfg.arc_iterates, &opts) {
        Ok((series, image)) => {
            section.final_nodes = image.nodes.len();
            if cfg.area_samples > 0 {
                match area_length_consistency(&image.nodes, cfg.area_epsilon, cfg.area_samples, cfg.seed) {
                    Ok(a) => {
                        section.growth.area_constant = Some(a.ratio);
                        section.area = Some(a);
                    }
                    Err(e) => section.error = Some(format!("area: {e}")),
                }
            }
            columns.push(("arcs_image.dat".to_string(), image.to_columns()));
            section.growth.arc_exponent = (series.lengths.len() > 1).then_some(series.exponent);
            section.series = series;
        }
        Err(ArcError::SubdivisionBlowup { partial, iterate, budget }) => {
            section.error = Some(format!("node budget {budget} exhausted at iterate {iterate}"));
            section.series = *partial;
        }
        Err(e) => {
            return Err(PipelineError::Module {
                module: "arc_dynamics",
                message: e.to_string(),
            })
        }
    }
    columns.insert(0, ("arcs_lengths.dat".to_string(), arc_columns(&section.series)));
    let mut dcols = String::from("# n diameter\n");
    for (n, d) in diameters.diameters.iter().enumerate() {
        let _ = writeln!(dcols, "{n} {d:.15e}");
    }
    columns.push(("arcs_diameters.dat".to_string(), dcols));
    if cfg.arc_iterates > 0 {
        match detect_delta_u_arc(&f, &arc, cfg.delta, cfg.arc_iterates.max(30), &opts) {
            Ok(d) => section.delta_outcome = Some(d),
            Err(e) => {
                if section.error.is_none() {
                    section.error = Some(format!("delta check: {e}"));
                }
            }
        }
    }
    if section.error.is_none() {
        let escaped = matches!(section.delta_outcome, Some(DeltaArcOutcome::Escaped { .. }));
        let growing = section.growth.arc_exponent.is_some_and(|e| e > 0.0);
        outcome = match (cfg.arc_iterates, growing && escaped) {
            (0, _) => Outcome::Inconclusive,
            (_, true) => Outcome::Certified,
            _ => Outcome::Failed,
        };
    }
    report.summary = match section.growth.arc_exponent {
        Some(e) => format!(
            "u-arc growth exponent {e:.6} over {} iterates; δ-check {:?}",
            section.series.lengths.len() - 1,
            section.delta_outcome
        ),
        None => "no iterates requested; initial length only".to_string(),
    };
    report.arcs = Some(section);
    report.outcome = outcome;
    Ok(finish(report, columns, started))
}

/// Certificate arm, rotation-witness arm or inconclusive.
pub fn cmd_dichotomy(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    let f = prepare(cfg)?;
    if cfg.epsilon <= 0.0 {
        return Err(PipelineError::Config("dichotomy needs ε > 0".into()));
    }
    let mut report = CertificationReport::new("dichotomy", MapIdentity::of(&f, &cfg.map), cfg);
    let crit = locate_critical_set(&f, cfg.critical_resolution, cfg.critical_tolerance);
    report.critical = Some(CriticalSummary::of(&crit));
    let search = LambdaSearch {
        margin: cfg.critical_margin,
        seed: cfg.seed,
        max_attempts: cfg.lambda_attempts,
        ..LambdaSearch::default()
    };
    let (pool, pool_error) = match sample_lambda_set(&f, &crit, cfg.lambda_count, &search) {
        Ok(p) => (p, None),
        Err(e) => {
            let msg = e.to_string();
            match e {
                OrbitError::LambdaSearchExhausted { partial, .. } => (partial, Some(msg)),
                _ => (Vec::new(), Some(msg)),
            }
        }
    };
    let outcome = dichotomy_search(&f, cfg.epsilon, &pool, &crit, cfg.critical_margin, &cfg.cone_config(false));
    let mut section = DichotomySection {
        epsilon: cfg.epsilon,
        pool: pool.len(),
        pool_error,
        arm: outcome.arm().to_string(),
        certificate: None,
        witness_start: None,
        witness_m: None,
        witness_step_angle: None,
        witness_cost: None,
        reason: None,
    };
    let mut columns = Vec::new();
    report.outcome = match outcome {
        DichotomyOutcome::Certificate(c) => {
            report.summary = format!("domination certificate on the {}² grid", c.grid.resolution);
            section.certificate = Some(*c);
            Outcome::Certified
        }
        DichotomyOutcome::Witness(w) => {
            report.summary = format!("rotation witness: m = {}, C¹ cost {:.4e} < ε = {}", w.m, w.c1_cost, cfg.epsilon);
            section.witness_start = Some(w.segment.point(w.start));
            section.witness_m = Some(w.m);
            section.witness_step_angle = Some(w.step_angle);
            section.witness_cost = Some(w.c1_cost);
            columns.push(("dichotomy_witness.dat".to_string(), w.segment.to_columns(&f, &crit, cfg.critical_margin)));
            Outcome::Failed
        }
        DichotomyOutcome::Inconclusive { reason } => {
            report.summary = reason.clone();
            section.reason = Some(reason);
            Outcome::Inconclusive
        }
    };
    report.dichotomy = Some(section);
    Ok(finish(report, columns, started))
}

/// Homology action, radius verdict (using grid domination) and disk diameters.
pub fn cmd_homology(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    let f = prepare(cfg)?;
    let mut report = CertificationReport::new("homology", MapIdentity::of(&f, &cfg.map), cfg);
    let (split, _) = splitting_summary(&f, cfg);
    let dominated = split.domination.as_ref().is_some_and(|d| d.valid);
    report.splitting = Some(split);
    let hom = homology_section(&f, cfg, dominated, true)?;
    let mut columns = Vec::new();
    if let Some(d) = &hom.diameters {
        let mut cols = String::from("# n diameter\n");
        for (n, v) in d.diameters.iter().enumerate() {
            let _ = writeln!(cols, "{n} {v:.15e}");
        }
        columns.push(("homology_diameters.dat".to_string(), cols));
    }
    report.outcome = match hom.verdict.kind {
        VerdictKind::Consistent => Outcome::Certified,
        VerdictKind::Obstructed | VerdictKind::NotRobustlyTransitive => Outcome::Failed,
    };
    report.summary = hom.verdict.message.clone();
    report.homology = Some(hom);
    Ok(finish(report, columns, started))
}

fn ring_starts(center: TorusPoint, radius: f64) -> Vec<TorusPoint> {
    std::iter::once(center)
        .chain((0..8).map(|k| center.translated(TangentVector::from_angle(k as f64 * std::f64::consts::FRAC_PI_4) * radius)))
        .collect()
}

fn empty_perturbation(cfg: &RunConfig) -> PerturbationSection {
    PerturbationSection {
        recipe: cfg.perturb.clone(),
        epsilon: cfg.epsilon,
        surgeries: 0,
        c1_distance: None,
        overhead_factor: None,
        kernel_iterate: None,
        product_norm: None,
        kernel_dimension: None,
        collapse_diameter: None,
        witness_cost: None,
        sink_scaling: None,
        sink_spectral_radius: None,
        before: None,
        after: None,
        probe_note: crate::perturb::PROBE_DISCLAIMER.to_string(),
        error: None,
    }
}

fn record_map(section: &mut PerturbationSection, g: &PerturbedMap) {
    section.surgeries = g.surgeries.len();
    section.c1_distance = Some(g.c1_distance);
    section.overhead_factor = Some(g.overhead_factor());
}

/// Runs the configured surgery recipe with before/after transitivity probes.
pub fn cmd_perturb(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    cfg.validate()?;
    let (f, source) = match &cfg.perturb {
        PerturbRecipe::FullKernel { amplitude, .. } => (canonical::shearcrit_with_amplitude(*amplitude), "recipe"),
        PerturbRecipe::Sink { mu: Some(mu), .. } => (shear_sink_variant(*mu), "recipe"),
        _ => (load_map(&cfg.map)?, cfg.map.as_str()),
    };
    let mut report = CertificationReport::new("perturb", MapIdentity::of(&f, source), cfg);
    let mut section = empty_perturbation(cfg);
    let mut columns = Vec::new();
    let probe = |g: &dyn TorusMap, starts: &[TorusPoint]| transitivity_probe(g, starts, cfg.probe_steps, cfg.probe_grid);
    let result: Result<(), PerturbError> = (|| {
        match &cfg.perturb {
            PerturbRecipe::Noop {
                point,
                inner_radius,
                outer_radius,
            }
            | PerturbRecipe::Franks {
                point,
                inner_radius,
                outer_radius,
                ..
            } => {
                let p = TorusPoint::new(point[0], point[1]);
                let target = match &cfg.perturb {
                    PerturbRecipe::Franks { target: Some(rows), .. } => Mat2::from_rows(*rows),
                    PerturbRecipe::Franks { scale, .. } => f.derivative(p).matrix.scaled(*scale),
                    _ => f.derivative(p).matrix,
                };
                let starts = ring_starts(p, inner_radius / 4.0);
                section.before = Some(ProbeSummary::of(&probe(&f, &starts)));
                let g = franks_surgery(&f, &[SurgeryRequest { point: p, target }], *inner_radius, *outer_radius, cfg.epsilon)?;
                record_map(&mut section, &g);
                let after = probe(&g, &starts);
                columns.push(("perturb_visits.dat".to_string(), after.to_columns()));
                columns.push(("perturb_surgeries.dat".to_string(), g.to_columns()));
                section.after = Some(ProbeSummary::of(&after));
            }
            PerturbRecipe::FullKernel {
                amplitude,
                half_period,
                inner_radius,
            } => {
                let cycle = shear_symmetric_cycle(*amplitude, *half_period)
                    .ok_or_else(|| PerturbError::NoWitness(format!("no symmetric cycle with half period {half_period}")))?;
                let w = cycle_witness(&f, &cycle, cfg.epsilon.max(f64::MIN_POSITIVE))
                    .ok_or_else(|| PerturbError::NoWitness("alignment has no solution on the cycle".into()))?;
                let opts = KernelSurgeryOptions {
                    inner_radius: *inner_radius,
                    ..KernelSurgeryOptions::default()
                };
                let ks = full_kernel_surgery(&f, &DichotomyOutcome::Witness(Box::new(w)), &opts)?;
                record_map(&mut section, &ks.map);
                section.kernel_iterate = Some(ks.m);
                section.product_norm = Some(ks.product_norm);
                section.kernel_dimension = Some(ks.kernel_dimension);
                section.witness_cost = Some(ks.witness_cost);
                section.collapse_diameter = Some(collapsed_diameter(&ks.map, ks.point, inner_radius / 2.0, ks.m, 64));
                let starts = ring_starts(ks.point, inner_radius / 4.0);
                section.before = Some(ProbeSummary::of(&probe(&f, &starts)));
                let after = probe(&ks.map, &starts);
                columns.push(("perturb_visits.dat".to_string(), after.to_columns()));
                columns.push(("perturb_surgeries.dat".to_string(), ks.map.to_columns()));
                section.after = Some(ProbeSummary::of(&after));
            }
            PerturbRecipe::Sink { inner_radius, .. } => {
                let p = TorusPoint::new(0.0, 0.0);
                let s = sink_surgery(&f, p, 1, cfg.epsilon, *inner_radius)?;
                record_map(&mut section, &s.map);
                section.sink_scaling = Some(s.scaling);
                section.sink_spectral_radius = Some(s.spectral_radius);
                let starts = ring_starts(p, inner_radius / 4.0);
                section.before = Some(ProbeSummary::of(&probe(&f, &starts)));
                let after = probe(&s.map, &starts);
                columns.push(("perturb_visits.dat".to_string(), after.to_columns()));
                columns.push(("perturb_surgeries.dat".to_string(), s.map.to_columns()));
                section.after = Some(ProbeSummary::of(&after));
            }
        }
        Ok(())
    })();
    report.outcome = match &result {
        Ok(()) => Outcome::Certified,
        Err(_) => Outcome::Failed,
    };
    report.summary = match (&result, &section.before, &section.after) {
        (Err(e), ..) => format!("surgery rejected: {e}"),
        (Ok(()), Some(b), Some(a)) => format!(
            "surgery applied (C¹ distance {:.3e}); probe coverage {:.4} before, {:.4} after",
            section.c1_distance.unwrap_or(f64::NAN),
            b.coverage,
            a.coverage
        ),
        _ => "surgery applied".to_string(),
    };
    section.error = result.err().map(|e| e.to_string());
    report.perturbation = Some(section);
    Ok(finish(report, columns, started))
}

/// Box-method periodic point from the seed and the period census with the
/// lattice oracle.
pub fn cmd_periodic(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let started = unix_now();
    let f = prepare(cfg)?;
    let mut report = CertificationReport::new("periodic", MapIdentity::of(&f, &cfg.map), cfg);
    let seed_point = TorusPoint::new(cfg.periodic_seed[0], cfg.periodic_seed[1]);
    let search = PeriodicSearch {
        nu: cfg.nu,
        max_period: cfg.periodic_max,
        horizon: cfg.horizon,
        ..PeriodicSearch::default()
    };
    let found = find_periodic_point(&f, seed_point, &search);
    let linear = f.perturbation.is_empty();
    let census: Vec<CensusRow> = (1..=cfg.census_max)
        .map(|l| {
            let m = f.linear.pow(l as u32).rows();
            let formula = ((m[0][0] - 1) * (m[1][1] - 1) - m[0][1] * m[1][0]).unsigned_abs();
            let newton = periodic_census(&f, l, cfg.census_resolution).len();
            let enumeration = linear.then(|| lattice_periodic_points(f.linear, l as u32).len());
            CensusRow {
                period: l,
                newton,
                lattice_formula: formula,
                lattice_enumeration: enumeration,
                matches: newton as u64 == formula && enumeration.is_none_or(|e| e as u64 == formula),
            }
        })
        .collect();
    let mut cols = String::from("# period newton lattice_formula lattice_enumeration\n");
    for r in &census {
        let _ = writeln!(
            cols,
            "{} {} {} {}",
            r.period,
            r.newton,
            r.lattice_formula,
            r.lattice_enumeration.map_or("-".to_string(), |e| e.to_string())
        );
    }
    let census_ok = census.iter().all(|r| r.matches);
    let (point, error) = match found {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e)),
    };
    report.outcome = match (&point, &error, census_ok) {
        (_, _, false) => Outcome::Failed,
        (Some(_), _, true) => Outcome::Certified,
        (None, Some(ArcError::ContractionStall(_) | ArcError::NoReturnFound { .. }), true) => Outcome::Inconclusive,
        _ => Outcome::Failed,
    };
    report.summary = match (&point, &error) {
        (Some(p), _) => format!(
            "periodic point {} of period {} (residual {:.3e}); census {}",
            p.point,
            p.period,
            p.residual,
            if census_ok { "matches" } else { "MISMATCH" }
        ),
        (None, Some(e)) => format!("box method: {e}; census {}", if census_ok { "matches" } else { "MISMATCH" }),
        _ => unreachable!(),
    };
    report.periodic = Some(PeriodicSection {
        seed_point,
        nu: cfg.nu,
        max_period: cfg.periodic_max,
        point,
        error: error.map(|e| e.to_string()),
        census_resolution: cfg.census_resolution,
        census,
    });
    Ok(finish(report, vec![("periodic_census.dat".to_string(), cols)], started))
}

/// Dispatch by command name.
pub fn run_command(command: &str, cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    match command {
        "certify" => cmd_certify(cfg),
        "arcs" => cmd_arcs(cfg),
        "dichotomy" => cmd_dichotomy(cfg),
        "homology" => cmd_homology(cfg),
        "perturb" => cmd_perturb(cfg),
        "periodic" => cmd_periodic(cfg),
        other => Err(PipelineError::Config(format!("unknown command `{other}`"))),
    }
}

fn render_text(r: &CertificationReport) -> String {
    let mut o = String::new();
    let c = &r.config;
    let _ = writeln!(o, "endocert {} report", r.command);
    let _ = writeln!(
        o,
        "map: {} (source {}) linear {:?}, {} trig terms, |φ|≤{:.4}, sha256 {}",
        r.map.name, r.map.source, r.map.linear, r.map.perturbation_terms, r.map.perturbation_bound, r.map.sha256
    );
    if let Some(cs) = &r.critical {
        let _ = writeln!(
            o,
            "\n[critical set] locate_critical_set resolution={} det_tol={:.1e}\n  samples={} two-dim kernels={} max|det|={:.2e}",
            cs.resolution, cs.det_tolerance, cs.samples, cs.kernel_dim_two, cs.max_abs_det
        );
    }
    if let Some(s) = &r.splitting {
        let _ = writeln!(
            o,
            "\n[splitting] splitting_grid grid={}² horizon N=M={} failures={}",
            s.grid, s.horizon, s.failures
        );
        if let Some(a) = &s.angles {
            let _ = writeln!(
                o,
                "  E/F angle min={:.6} mean={:.6} max={:.6} rad",
                a.min, a.mean, a.max
            );
        }
        for (label, d) in [("ℓ=1", &s.ratio_at_one), ("search", &s.domination)] {
            if let Some(d) = d {
                let _ = writeln!(
                    o,
                    "  check_domination {label}: ℓ={} worst ratio={:.12} min angle={:.6} α={} samples={} valid={}",
                    d.ell, d.worst_ratio, d.min_angle, d.alpha, d.sample_count, d.valid
                );
            }
        }
    }
    if let Some(cert) = &r.cone {
        let _ = writeln!(
            o,
            "\n[cone] certify_partial_hyperbolicity core={} η={} grid={}² angular={} metric={}",
            cert.cone_core, cert.eta, cert.grid.resolution, cert.angular_samples, cert.metric
        );
        for cl in [&cert.invariance, &cert.transversality] {
            let _ = writeln!(
                o,
                "  {}: raw min={:.6e} slack={:.3e} margin={:.6e} worst at {} pass={}",
                cl.clause, cl.raw_min, cl.lipschitz_slack, cl.margin, cl.worst_point, cl.pass
            );
        }
        if let Some(e) = &cert.expansion {
            let _ = writeln!(
                o,
                "  {}: raw λ={:.9} slack={:.3e} λ={:.9} worst at {} pass={}",
                e.clause.clause, e.clause.raw_min, e.clause.lipschitz_slack, e.lambda, e.clause.worst_point, e.pass
            );
        }
        let _ = writeln!(
            o,
            "  valid={} first failure={}",
            cert.valid,
            cert.first_failure.as_deref().unwrap_or("none")
        );
    }
    if let Some(h) = &r.homology {
        let m = h.action.matrix.rows();
        let _ = writeln!(
            o,
            "\n[homology] homology_matrix seed={} samples={}\n  matrix {:?} spectral radius={:.9}\n  verdict {:?}: {}",
            h.seed, h.samples, m, h.action.spectral_radius, h.verdict.kind, h.verdict.message
        );
        if let Some(note) = &h.verdict.identity_class_note {
            let _ = writeln!(o, "  note: {note}");
        }
        if let Some(d) = &h.diameters {
            let _ = writeln!(
                o,
                "  diameter_growth center={} r={} n={} exponent={:.6} subexponential={}",
                d.center,
                d.radius,
                d.diameters.len() - 1,
                d.exponent,
                d.subexponential
            );
        }
    }
    if let Some(a) = &r.arcs {
        let _ = writeln!(
            o,
            "\n[arcs] iterate_arc start={} direction=({:.6}, {:.6}) length={:.3e} max segment={} max turn={:.4}",
            a.start, a.direction.u, a.direction.v, a.initial_length, a.max_segment, a.max_turn
        );
        let _ = writeln!(
            o,
            "  iterates={} exponent={:.9} doubling times={:?} final nodes={}",
            a.series.lengths.len() - 1,
            a.series.exponent,
            a.series.doubling_times,
            a.final_nodes
        );
        let _ = writeln!(o, "  detect_delta_u_arc δ={}: {:?}", a.delta, a.delta_outcome);
        if let Some(m) = &a.area {
            let _ = writeln!(
                o,
                "  area_length_consistency ε={} samples={} seed={}: area={:.6e}±{:.1e} length={:.6e} ratio={:.4}ε",
                m.epsilon,
                m.samples,
                m.seed,
                m.area,
                m.std_error,
                m.length,
                m.ratio / m.epsilon
            );
        }
        let _ = writeln!(o, "  diameter exponent (r={}) = {:.6}", c.diameter_radius, a.growth.diameter_exponent);
        if let Some(e) = &a.error {
            let _ = writeln!(o, "  error: {e}");
        }
    }
    if let Some(d) = &r.dichotomy {
        let _ = writeln!(
            o,
            "\n[dichotomy] dichotomy_search ε={} pool={} segments arm={}",
            d.epsilon, d.pool, d.arm
        );
        if let Some(e) = &d.pool_error {
            let _ = writeln!(o, "  pool: {e}");
        }
        if let (Some(p), Some(m), Some(phi), Some(cost)) = (d.witness_start, d.witness_m, d.witness_step_angle, d.witness_cost) {
            let _ = writeln!(o, "  witness from {p}: m={m} step angle={phi:.6e} C¹ cost={cost:.6e}");
        }
        if let Some(reason) = &d.reason {
            let _ = writeln!(o, "  {reason}");
        }
    }
    if let Some(p) = &r.perturbation {
        let _ = writeln!(o, "\n[perturbation] recipe {:?} ε={}", p.recipe, p.epsilon);
        if let (Some(d), Some(h)) = (p.c1_distance, p.overhead_factor) {
            let _ = writeln!(o, "  surgeries={} sampled C¹ distance={d:.6e} overhead factor={h:.4}", p.surgeries);
        }
        if let (Some(m), Some(n), Some(k)) = (p.kernel_iterate, p.product_norm, p.kernel_dimension) {
            let _ = writeln!(o, "  ‖Dg^{m}‖={n:.3e} kernel dimension={k}");
        }
        if let Some(d) = p.collapse_diameter {
            let _ = writeln!(o, "  collapse diameter of g^m(B(c, r/2)) = {d:.3e}");
        }
        if let Some(w) = p.witness_cost {
            let _ = writeln!(o, "  witness C¹ cost={w:.4e}");
        }
        if let (Some(s), Some(rho)) = (p.sink_scaling, p.sink_spectral_radius) {
            let _ = writeln!(o, "  sink scaling={s:.6} spectral radius after={rho:.6}");
        }
        for (label, probe) in [("before", &p.before), ("after", &p.after)] {
            if let Some(pr) = probe {
                let _ = writeln!(
                    o,
                    "  probe {label}: {} starts × {} steps on {}² cells, coverage max={:.4} min={:.4}",
                    pr.starts, pr.orbit_length, pr.resolution, pr.coverage, pr.min_coverage
                );
            }
        }
        let _ = writeln!(o, "  ({})", p.probe_note);
        if let Some(e) = &p.error {
            let _ = writeln!(o, "  error: {e}");
        }
    }
    if let Some(p) = &r.periodic {
        let _ = writeln!(
            o,
            "\n[periodic] find_periodic_point seed={} ν={} max period={}",
            p.seed_point, p.nu, p.max_period
        );
        match (&p.point, &p.error) {
            (Some(pp), _) => {
                let shadow = pp.shadowing.iter().copied().fold(0.0, f64::max);
                let _ = writeln!(
                    o,
                    "  point {} period {} residual={:.3e} max shadowing={:.3e} E rate={:.6}",
                    pp.point, pp.period, pp.residual, shadow, pp.e_rate
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(o, "  {e}");
            }
            _ => {}
        }
        let _ = writeln!(o, "  census (Newton seeds {}²):", p.census_resolution);
        for row in &p.census {
            let _ = writeln!(
                o,
                "    l={} newton={} |det(A^l−I)|={} enumeration={} match={}",
                row.period,
                row.newton,
                row.lattice_formula,
                row.lattice_enumeration.map_or("-".to_string(), |e| e.to_string()),
                row.matches
            );
        }
    }
    let _ = writeln!(o, "\noutcome: {:?} (exit {})", r.outcome, r.exit_code());
    let _ = writeln!(o, "summary: {}", r.summary);
    let _ = writeln!(
        o,
        "provenance: endocert {} seed={} report hash {}",
        r.provenance.version, r.provenance.seed, r.report_hash
    );
    if !r.data_files.is_empty() {
        let _ = writeln!(o, "data files: {}", r.data_files.join(" "));
    }
    o
}
