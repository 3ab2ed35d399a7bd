//! Cone fields and their grid certification: invariance, transversality to
//! kernels, and expansion. Also the dichotomy search that either certifies
//! a cone field or exhibits a rotation witness near the critical set.
//!
//! Every check evaluates a pointwise quantity on a grid, takes its minimum,
//! and subtracts a Lipschitz slack estimated from the largest difference
//! between neighbouring grid values (times √2/2, the distance from any
//! point to its nearest node in grid units).

use crate::linalg::{line_angle_between, signed_line_angle, wrap_line_angle, Mat2, ScaledMatrix, TangentVector};
use crate::orbit::OrbitSegment;
use crate::splitting::{check_domination, singular_e, splitting_grid, DominationCertificate, GridSpec, SplittingConfig};
use crate::surface_map::{derivative_power, CriticalSet, TorusMap, TorusPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_ETA: f64 = 0.2;
pub const ANGULAR_SAMPLES: usize = 64;
/// Margins at or below this are treated as zero (rounding noise).
pub const MARGIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone half-angle {0} outside (0, π/4)")]
    InvalidHalfAngle(f64),
    #[error("iterate count must be at least 1")]
    ZeroIterate,
}

type DirectionField = Arc<dyn Fn(TorusPoint) -> TangentVector + Send + Sync>;

/// Where the cone's central line comes from.
#[derive(Clone)]
pub enum ConeCore {
    Constant(TangentVector),
    Field { label: String, field: DirectionField },
}

impl fmt::Debug for ConeCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeCore::Constant(v) => write!(f, "Constant({}, {})", v.u, v.v),
            ConeCore::Field { label, .. } => write!(f, "Field({label})"),
        }
    }
}

impl ConeCore {
    pub fn field(label: impl Into<String>, field: impl Fn(TorusPoint) -> TangentVector + Send + Sync + 'static) -> Self {
        ConeCore::Field {
            label: label.into(),
            field: Arc::new(field),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ConeCore::Constant(v) => format!("constant ({:.6}, {:.6})", v.u, v.v),
            ConeCore::Field { label, .. } => label.clone(),
        }
    }
}

/// Directions within angle `eta` of the core line at each point.
#[derive(Clone, Debug)]
pub struct ConeField {
    pub core: ConeCore,
    pub eta: f64,
}

/// Cone about `core` with half-angle `eta ∈ (0, π/4)`.
pub fn build_cone(core: ConeCore, eta: f64) -> Result<ConeField, ConeError> {
    if !(eta > 0.0 && eta < FRAC_PI_4) {
        return Err(ConeError::InvalidHalfAngle(eta));
    }
    Ok(ConeField { core, eta })
}

impl ConeField {
    pub fn core_at(&self, p: TorusPoint) -> TangentVector {
        let c = match &self.core {
            ConeCore::Constant(v) => *v,
            ConeCore::Field { field, .. } => field(p),
        };
        c.normalized().unwrap_or(TangentVector::new(1.0, 0.0))
    }

    pub fn contains(&self, p: TorusPoint, v: TangentVector) -> bool {
        line_angle_between(self.core_at(p), v) <= self.eta
    }

    /// Closure of the complement: the cone about the perpendicular line with
    /// half-angle `π/2 − η`.
    pub fn dual(&self) -> ConeField {
        let core = match &self.core {
            ConeCore::Constant(v) => ConeCore::Constant(v.perp()),
            ConeCore::Field { label, field } => {
                let field = field.clone();
                ConeCore::field(format!("perp of {label}"), move |p| field(p).perp())
            }
        };
        ConeField {
            core,
            eta: FRAC_PI_2 - self.eta,
        }
    }

    /// `samples` interior directions plus both boundary rays, ordered by angle.
    pub fn directions(&self, p: TorusPoint, samples: usize) -> Vec<(f64, TangentVector)> {
        let c = self.core_at(p);
        let n = samples + 2;
        (0..n)
            .map(|i| {
                let t = -self.eta + 2.0 * self.eta * i as f64 / (n - 1) as f64;
                (t, c.rotated(t))
            })
            .collect()
    }
}

/// Cone core `E(x)^⊥`, the side opposite to the most contracted direction.
pub fn e_perp_core<M: TorusMap + Clone + 'static>(f: &M, horizon: usize) -> ConeCore {
    let g = f.clone();
    ConeCore::field(format!("E-perp (singular limit, N={horizon})"), move |p| {
        singular_e(&g, p, horizon).map(|e| e.perp()).unwrap_or(TangentVector::new(1.0, 0.0))
    })
}

/// Cone core `E(x)`.
pub fn e_core<M: TorusMap + Clone + 'static>(f: &M, horizon: usize) -> ConeCore {
    let g = f.clone();
    ConeCore::field(format!("E (singular limit, N={horizon})"), move |p| {
        singular_e(&g, p, horizon).unwrap_or(TangentVector::new(0.0, 1.0))
    })
}

/// Outcome of one grid clause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: String,
    /// Minimum of the pointwise quantity over the grid.
    pub raw_min: f64,
    pub lipschitz_slack: f64,
    /// `raw_min − lipschitz_slack`.
    pub margin: f64,
    pub worst_point: TorusPoint,
    pub grid: GridSpec,
    pub pass: bool,
}

fn lipschitz_slack(values: &[f64], res: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..res {
        for i in 0..res {
            let v = values[j * res + i];
            let right = values[j * res + (i + 1) % res];
            let up = values[((j + 1) % res) * res + i];
            for w in [right, up] {
                let d = (v - w).abs();
                if d.is_finite() {
                    worst = worst.max(d);
                }
            }
        }
    }
    worst * SQRT_2 / 2.0
}

fn grid_clause(clause: &str, grid: GridSpec, values: Vec<f64>, threshold: f64) -> ClauseResult {
    let mut worst = 0;
    for (k, v) in values.iter().enumerate() {
        let vk = if v.is_nan() { f64::NEG_INFINITY } else { *v };
        let vw = if values[worst].is_nan() { f64::NEG_INFINITY } else { values[worst] };
        if vk < vw {
            worst = k;
        }
    }
    let raw = if values[worst].is_nan() { f64::NEG_INFINITY } else { values[worst] };
    let slack = lipschitz_slack(&values, grid.resolution);
    let margin = raw - slack;
    ClauseResult {
        clause: clause.to_string(),
        raw_min: raw,
        lipschitz_slack: slack,
        margin,
        worst_point: grid.point(worst),
        grid,
        pass: margin > threshold,
    }
}

/// Angular clearance of `Df^k` applied to the cone at `p`, relative to the
/// cone at `f^k(p)`; positive when the image lies strictly inside.
pub fn invariance_clearance<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, p: TorusPoint, k: usize, samples: usize) -> f64 {
    let prod = derivative_power(f, p, k);
    let mut q = p;
    for _ in 0..k {
        q = f.evaluate(q);
    }
    let target = cone.core_at(q);
    let m = prod.matrix;
    let dirs = cone.directions(p, samples);
    let images: Vec<Option<TangentVector>> = dirs.iter().map(|(_, u)| m.apply(*u).normalized()).collect();
    let mid = dirs.len() / 2;
    // Unwrap image angles outward from the centre so an arc that passes the
    // line perpendicular to the target core is seen as leaving the cone.
    let mut excursion: f64 = 0.0;
    let start = (0..dirs.len())
        .map(|o| if o % 2 == 0 { mid + o / 2 } else { mid.wrapping_sub(o / 2 + 1) })
        .filter(|&i| i < dirs.len())
        .find(|&i| images[i].is_some());
    let Some(start) = start else {
        return f64::NEG_INFINITY;
    };
    let a0 = signed_line_angle(target, images[start].unwrap());
    excursion = excursion.max(a0.abs());
    for range in [
        Box::new(start + 1..dirs.len()) as Box<dyn Iterator<Item = usize>>,
        Box::new((0..start).rev()),
    ] {
        let mut prev = a0;
        let mut prev_dir = images[start].unwrap();
        for i in range {
            if let Some(d) = images[i] {
                let step = wrap_line_angle(signed_line_angle(prev_dir, d));
                prev += step;
                prev_dir = d;
                excursion = excursion.max(prev.abs());
            }
        }
    }
    cone.eta - excursion
}

/// min over the cone at `p` of `‖P u‖` (log form), exact for a single matrix:
/// the sampled directions plus the contracting singular direction when it
/// lies inside the cone.
fn log_min_norm_over_cone(prod: &ScaledMatrix, cone: &ConeField, p: TorusPoint, samples: usize) -> f64 {
    let (_, _, svd) = prod.log_singular_values();
    let mut best = f64::INFINITY;
    for (_, u) in cone.directions(p, samples) {
        best = best.min(prod.log_norm_applied(u));
    }
    if cone.contains(p, svd.v_min) {
        best = best.min(prod.log_norm_applied(svd.v_min));
    }
    best
}

/// min over `n ≤ n_max` and unit `u` in the cone at `p` of `‖Df^n u‖`.
pub fn transversality_value<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, p: TorusPoint, n_max: usize, samples: usize) -> f64 {
    let mut prod = ScaledMatrix::identity();
    let mut x = p;
    let mut best = f64::INFINITY;
    for _ in 0..n_max {
        prod.left_multiply(f.derivative(x).matrix);
        x = f.evaluate(x);
        best = best.min(log_min_norm_over_cone(&prod, cone, p, samples).exp());
    }
    best
}

/// min over unit `u` in the cone at `p` of `‖Df^ℓ u‖^{1/ℓ}`.
pub fn expansion_value<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, p: TorusPoint, ell: usize, samples: usize) -> f64 {
    let prod = derivative_power(f, p, ell);
    (log_min_norm_over_cone(&prod, cone, p, samples) / ell as f64).exp()
}

fn evaluate_grid(grid: GridSpec, eval: impl Fn(TorusPoint) -> f64 + Sync) -> Vec<f64> {
    (0..grid.len()).into_par_iter().map(|k| eval(grid.point(k))).collect()
}

pub fn check_invariance<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, k: usize, grid: GridSpec) -> Result<ClauseResult, ConeError> {
    if k == 0 {
        return Err(ConeError::ZeroIterate);
    }
    let values = evaluate_grid(grid, |p| invariance_clearance(f, cone, p, k, ANGULAR_SAMPLES));
    Ok(grid_clause(&format!("invariance k={k}"), grid, values, MARGIN_FLOOR))
}

pub fn check_transversality<M: TorusMap + ?Sized>(
    f: &M,
    cone: &ConeField,
    n_max: usize,
    grid: GridSpec,
    extra_points: &[TorusPoint],
) -> Result<ClauseResult, ConeError> {
    if n_max == 0 {
        return Err(ConeError::ZeroIterate);
    }
    let values = evaluate_grid(grid, |p| transversality_value(f, cone, p, n_max, ANGULAR_SAMPLES));
    let mut res = grid_clause(&format!("transversality n_max={n_max}"), grid, values, MARGIN_FLOOR);
    // Critical samples are off-grid but are where kernels live.
    for p in extra_points {
        let v = transversality_value(f, cone, *p, n_max, ANGULAR_SAMPLES);
        if v - res.lipschitz_slack < res.margin {
            res.raw_min = v;
            res.margin = v - res.lipschitz_slack;
            res.worst_point = *p;
        }
    }
    res.pass = res.margin > MARGIN_FLOOR;
    Ok(res)
}

/// Expansion clause; `margin` holds `λ − 1` and `raw_min` the unslacked λ.
pub fn check_expansion<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, ell: usize, grid: GridSpec) -> Result<ExpansionResult, ConeError> {
    if ell == 0 {
        return Err(ConeError::ZeroIterate);
    }
    let values = evaluate_grid(grid, |p| expansion_value(f, cone, p, ell, ANGULAR_SAMPLES));
    let clause = grid_clause(&format!("expansion ell={ell}"), grid, values, 1.0 + MARGIN_FLOOR);
    Ok(ExpansionResult {
        ell,
        lambda: clause.margin,
        pass: clause.pass,
        clause,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub ell: usize,
    /// Slack-corrected expansion constant.
    pub lambda: f64,
    pub pass: bool,
    pub clause: ClauseResult,
}

/// Re-evaluates a clause on a patch around `point` with 10× finer spacing
/// and 10× the angular samples; returns the patch margin.
pub fn reevaluate_clause<M: TorusMap + ?Sized>(
    f: &M,
    cone: &ConeField,
    clause: &ClauseResult,
    iterate: usize,
    refine: usize,
) -> f64 {
    let h = clause.grid.spacing / refine as f64;
    let half = refine as i64;
    let side = (2 * half + 1) as usize;
    let samples = ANGULAR_SAMPLES * refine;
    let kind = clause.clause.split_whitespace().next().unwrap_or("");
    let values: Vec<f64> = (0..side * side)
        .into_par_iter()
        .map(|k| {
            let i = (k % side) as i64 - half;
            let j = (k / side) as i64 - half;
            let p = TorusPoint::new(clause.worst_point.x() + i as f64 * h, clause.worst_point.y() + j as f64 * h);
            match kind {
                "invariance" => invariance_clearance(f, cone, p, iterate, samples),
                "transversality" => transversality_value(f, cone, p, iterate, samples),
                _ => expansion_value(f, cone, p, iterate, samples),
            }
        })
        .collect();
    let raw = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut diff: f64 = 0.0;
    for j in 0..side {
        for i in 0..side {
            let v = values[j * side + i];
            if i + 1 < side {
                diff = diff.max((v - values[j * side + i + 1]).abs());
            }
            if j + 1 < side {
                diff = diff.max((v - values[(j + 1) * side + i]).abs());
            }
        }
    }
    let margin = raw - diff * SQRT_2 / 2.0;
    if kind == "expansion" {
        margin - 1.0
    } else {
        margin
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeConfig {
    pub eta: f64,
    pub grid: usize,
    pub horizon: usize,
    pub k_max: usize,
    pub ell_max: usize,
    pub n_max: usize,
    /// Minimal E/F angle for a domination certificate.
    pub alpha: f64,
    pub require_expansion: bool,
}

impl Default for ConeConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            grid: 64,
            horizon: crate::splitting::DEFAULT_HORIZON,
            k_max: 5,
            ell_max: 5,
            n_max: 3,
            alpha: 0.05,
            require_expansion: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub cone_core: String,
    pub eta: f64,
    pub k: usize,
    pub invariance: ClauseResult,
    pub n_max: usize,
    pub transversality: ClauseResult,
    /// Absent for domination-only certificates.
    pub expansion: Option<ExpansionResult>,
    pub grid: GridSpec,
    pub angular_samples: usize,
    pub metric: String,
    pub valid: bool,
    /// Name of the first failing clause, in pipeline order.
    pub first_failure: Option<String>,
}

impl ConeCertificate {
    pub fn lambda(&self) -> Option<f64> {
        self.expansion.as_ref().map(|e| e.lambda)
    }
}

/// Searches `k ≤ k_max` for an invariant iterate; returns the first passing
/// clause or the one with the best margin.
pub fn search_invariance<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, k_max: usize, grid: GridSpec) -> (usize, ClauseResult) {
    let mut best: Option<(usize, ClauseResult)> = None;
    for k in 1..=k_max.max(1) {
        let r = check_invariance(f, cone, k, grid).expect("k ≥ 1");
        if r.pass {
            return (k, r);
        }
        if best.as_ref().is_none_or(|(_, b)| r.margin > b.margin) {
            best = Some((k, r));
        }
    }
    best.expect("at least one iterate")
}

pub fn search_expansion<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, ell_max: usize, grid: GridSpec) -> ExpansionResult {
    let mut best: Option<ExpansionResult> = None;
    for ell in 1..=ell_max.max(1) {
        let r = check_expansion(f, cone, ell, grid).expect("ℓ ≥ 1");
        if r.pass {
            return r;
        }
        if best.as_ref().is_none_or(|b| r.lambda > b.lambda) {
            best = Some(r);
        }
    }
    best.expect("at least one iterate")
}

/// Runs invariance, transversality and (optionally) expansion on `cone`.
pub fn certify_cone<M: TorusMap + ?Sized>(f: &M, cone: &ConeField, cfg: &ConeConfig, crit: Option<&CriticalSet>) -> ConeCertificate {
    let grid = GridSpec::new(cfg.grid);
    let (k, invariance) = search_invariance(f, cone, cfg.k_max, grid);
    let extra: Vec<TorusPoint> = crit.map(|c| c.samples.iter().map(|s| s.point).collect()).unwrap_or_default();
    let transversality = check_transversality(f, cone, cfg.n_max, grid, &extra).expect("n_max ≥ 1");
    let expansion = cfg.require_expansion.then(|| search_expansion(f, cone, cfg.ell_max, grid));
    let first_failure = if !invariance.pass {
        Some(invariance.clause.clone())
    } else if !transversality.pass {
        Some(transversality.clause.clone())
    } else {
        expansion.as_ref().filter(|e| !e.pass).map(|e| e.clause.clause.clone())
    };
    ConeCertificate {
        cone_core: cone.core.describe(),
        eta: cone.eta,
        k,
        invariance,
        n_max: cfg.n_max,
        transversality,
        expansion,
        grid,
        angular_samples: ANGULAR_SAMPLES,
        metric: "flat (Euclidean in the standard trivialisation of TT²)".to_string(),
        valid: first_failure.is_none(),
        first_failure,
    }
}

/// Full certification: E field by the singular limit, cone of half-angle η
/// about `E^⊥`, and every clause.
pub fn certify_partial_hyperbolicity<M: TorusMap + Clone + 'static>(
    f: &M,
    cfg: &ConeConfig,
    crit: Option<&CriticalSet>,
) -> Result<ConeCertificate, ConeError> {
    let cone = build_cone(e_perp_core(f, cfg.horizon), cfg.eta)?;
    Ok(certify_cone(f, &cone, cfg, crit))
}

/// Domination certificate on a grid, searching `ℓ ≤ ell_max`.
pub fn grid_domination<M: TorusMap + ?Sized>(f: &M, grid: GridSpec, ell_max: usize, alpha: f64, cfg: &SplittingConfig) -> Option<DominationCertificate> {
    let samples: Vec<_> = splitting_grid(f, grid, cfg).into_iter().collect::<Result<_, _>>().ok()?;
    let mut best: Option<DominationCertificate> = None;
    for ell in 1..=ell_max.max(1) {
        let c = check_domination(f, &samples, ell, alpha, Some(grid));
        if c.valid {
            return Some(c);
        }
        if best.as_ref().is_none_or(|b| c.worst_ratio < b.worst_ratio) {
            best = Some(c);
        }
    }
    best
}

/// A segment `x_a … x_b` between two near-critical points together with a
/// uniform per-step rotation that carries the image line of `Df(x_a)`
/// onto the kernel line of `Df(x_b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationWitness {
    pub segment: OrbitSegment,
    pub start: i64,
    pub end: i64,
    /// Signed rotation applied after each derivative at indices `a..b`.
    pub step_angle: f64,
    pub steps: usize,
    /// max over steps of `‖R ∘ L − L‖` plus the rank-one truncation costs.
    pub c1_cost: f64,
    pub epsilon: f64,
    /// `m = b − a + 1`, the iterate whose derivative vanishes after surgery.
    pub m: usize,
}

impl RotationWitness {
    pub fn rotation(&self) -> Mat2 {
        Mat2::rotation(self.step_angle)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DichotomyOutcome {
    Certificate(Box<ConeCertificate>),
    Witness(Box<RotationWitness>),
    Inconclusive { reason: String },
}

impl DichotomyOutcome {
    pub fn arm(&self) -> &'static str {
        match self {
            DichotomyOutcome::Certificate(_) => "certificate",
            DichotomyOutcome::Witness(_) => "witness",
            DichotomyOutcome::Inconclusive { .. } => "inconclusive",
        }
    }
}

/// The line reached at `x_b` from the image of `Df(x_a)` when every step is
/// followed by a rotation of `phi`.
fn propagate_line<M: TorusMap + ?Sized>(f: &M, seg: &OrbitSegment, a: i64, b: i64, phi: f64) -> Option<TangentVector> {
    let r = Mat2::rotation(phi);
    let pa = f.derivative(seg.point(a)).matrix.rank_one_truncation();
    let mut d = r.apply(pa.svd().u_max);
    for i in (a + 1)..b {
        d = (r * f.derivative(seg.point(i)).matrix).apply(d).normalized()?;
    }
    Some(d)
}

/// C¹ cost of rotating every step by `phi` plus the rank-one truncations at both ends.
pub fn rotation_cost<M: TorusMap + ?Sized>(f: &M, seg: &OrbitSegment, a: i64, b: i64, phi: f64) -> f64 {
    let s = 2.0 * (phi / 2.0).sin().abs();
    let mut cost: f64 = 0.0;
    for i in a..b {
        let m = f.derivative(seg.point(i)).matrix;
        let m = if i == a { m.rank_one_truncation() } else { m };
        cost = cost.max(s * m.op_norm());
    }
    let trunc = |i: i64| f.derivative(seg.point(i)).matrix.svd().sigma_min;
    cost + trunc(a).max(trunc(b))
}

/// Solves for the per-step rotation aligning the image at `x_a` with the
/// kernel at `x_b`, restricted to `|phi| ≤ phi_max`.
pub fn solve_alignment<M: TorusMap + ?Sized>(f: &M, seg: &OrbitSegment, a: i64, b: i64, phi_max: f64) -> Option<f64> {
    assert!(b > a);
    let kb = f.derivative(seg.point(b)).matrix.svd().v_min;
    let g = |phi: f64| propagate_line(f, seg, a, b, phi).map(|d| signed_line_angle(kb, d));
    let n = 400;
    let mut best: Option<f64> = None;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let phi = -phi_max + 2.0 * phi_max * i as f64 / n as f64;
        let Some(v) = g(phi) else {
            prev = None;
            continue;
        };
        if v == 0.0 {
            best = best.filter(|b: &f64| b.abs() <= phi.abs()).or(Some(phi));
        }
        if let Some((p0, v0)) = prev {
            // A sign change with a jump near ±π/2 is the line wrapping, not a root.
            if v0 * v < 0.0 && (v0 - v).abs() < FRAC_PI_2 {
                let (mut lo, mut hi, mut vlo) = (p0, phi, v0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let Some(vm) = g(mid) else { break };
                    if vm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (vm > 0.0) == (vlo > 0.0) {
                        lo = mid;
                        vlo = vm;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
                        break;
                    }
                }
                let root = 0.5 * (lo + hi);
                if best.is_none_or(|b| root.abs() < b.abs()) {
                    best = Some(root);
                }
            }
        }
        prev = Some((phi, v));
    }
    best
}

/// Best rotation witness in `seg` between near-critical indices.
pub fn find_witness<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    crit: &CriticalSet,
    margin: f64,
    epsilon: f64,
    max_span: usize,
) -> Option<RotationWitness> {
    let crit_idx: Vec<i64> = seg.indices().filter(|&i| crit.contains(f, seg.point(i), margin)).collect();
    let mut best: Option<RotationWitness> = None;
    for (ia, &a) in crit_idx.iter().enumerate() {
        for &b in &crit_idx[ia + 1..] {
            if (b - a) as usize > max_span {
                break;
            }
            let norm_max = (a..b).map(|i| f.derivative(seg.point(i)).matrix.op_norm()).fold(0.0, f64::max);
            if norm_max == 0.0 {
                continue;
            }
            let phi_max = 2.0 * (epsilon / (2.0 * norm_max)).min(1.0).asin();
            let Some(phi) = solve_alignment(f, seg, a, b, phi_max) else {
                continue;
            };
            let cost = rotation_cost(f, seg, a, b, phi);
            if cost >= epsilon {
                continue;
            }
            if best.as_ref().is_none_or(|w| cost < w.c1_cost) {
                best = Some(RotationWitness {
                    segment: seg.clone(),
                    start: a,
                    end: b,
                    step_angle: phi,
                    steps: (b - a) as usize,
                    c1_cost: cost,
                    epsilon,
                    m: (b - a + 1) as usize,
                });
            }
        }
    }
    best
}

/// Certificate arm if a domination cone certifies on the grid, witness arm
/// if some pooled segment admits an ε-rotation alignment, else inconclusive.
pub fn dichotomy_search<M: TorusMap + Clone + 'static>(
    f: &M,
    epsilon: f64,
    pool: &[OrbitSegment],
    crit: &CriticalSet,
    margin: f64,
    cfg: &ConeConfig,
) -> DichotomyOutcome {
    assert!(epsilon > 0.0, "ε must be positive");
    let dom_cfg = ConeConfig {
        require_expansion: false,
        ..cfg.clone()
    };
    if let Ok(cert) = certify_partial_hyperbolicity(f, &dom_cfg, Some(crit)) {
        if cert.valid {
            return DichotomyOutcome::Certificate(Box::new(cert));
        }
    }
    let witness = pool
        .iter()
        .filter_map(|seg| find_witness(f, seg, crit, margin, epsilon, 64))
        .min_by(|a, b| a.c1_cost.total_cmp(&b.c1_cost));
    match witness {
        Some(w) => DichotomyOutcome::Witness(Box::new(w)),
        None if crit.is_empty() => DichotomyOutcome::Inconclusive {
            reason: "no domination certificate at this resolution, and the map has no critical points, so no rotation witness can exist".into(),
        },
        None => DichotomyOutcome::Inconclusive {
            reason: format!("no domination certificate and no rotation witness within ε = {epsilon} in {} pooled segments", pool.len()),
        },
    }
}

/// Constraint linking the rotation angle α to the C¹ budget:
/// `‖Df‖ · 2 sin(α/2) < ε`.
pub fn implied_rotation_cost(df_norm: f64, alpha: f64) -> f64 {
    df_norm * 2.0 * (alpha / 2.0).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface_map::canonical::*;

    fn unstable_cat() -> TangentVector {
        TangentVector::new(1.0, (5f64.sqrt() - 1.0) / 2.0)
    }

    #[test]
    fn build_cone_examples() {
        let c = build_cone(ConeCore::Constant(TangentVector::new(1.0, 0.0)), 0.2).unwrap();
        assert!(c.contains(TorusPoint::new(0.0, 0.0), TangentVector::new(1.0, 0.1f64.tan())));
        assert!(build_cone(ConeCore::Constant(TangentVector::new(1.0, 0.0)), 0.9).is_err());
        let d = c.dual();
        assert!(d.contains(TorusPoint::new(0.0, 0.0), TangentVector::new(0.0, 1.0)));
    }

    #[test]
    fn cat_invariance_signs() {
        let g = GridSpec::new(16);
        let c = build_cone(ConeCore::Constant(unstable_cat()), 0.2).unwrap();
        let r = check_invariance(&cat(), &c, 1, g).unwrap();
        let oracle = 0.2 - (((3.0 - 5f64.sqrt()) / (3.0 + 5f64.sqrt())) * 0.2f64.tan()).atan();
        assert!((r.margin - oracle).abs() < 1e-12 && r.pass);
        let s = build_cone(ConeCore::Constant(unstable_cat().perp()), 0.2).unwrap();
        assert!(check_invariance(&cat(), &s, 1, g).unwrap().margin < 0.0);
        let id = crate::SurfaceEndomorphism::linear("id", crate::LinearPart::IDENTITY);
        let r = check_invariance(&id, &c, 3, g).unwrap();
        assert!(r.margin.abs() < 1e-13 && !r.pass);
    }

    #[test]
    fn cat_expansion_matches_cone_corrected_bound() {
        let g = GridSpec::new(8);
        let (lp, lm) = ((3.0 + 5f64.sqrt()) / 2.0, (3.0 - 5f64.sqrt()) / 2.0);
        let eta: f64 = 0.1;
        let c = build_cone(ConeCore::Constant(unstable_cat()), eta).unwrap();
        let r = check_expansion(&cat(), &c, 1, g).unwrap();
        let oracle = (lp * lp * eta.cos().powi(2) + lm * lm * eta.sin().powi(2)).sqrt();
        assert!((r.lambda - oracle).abs() < 1e-12 && r.lambda >= 2.4);
    }

    #[test]
    fn shearcrit_transversality() {
        let g = GridSpec::new(32);
        let h = build_cone(ConeCore::Constant(TangentVector::new(1.0, 0.0)), 0.2).unwrap();
        let r = check_transversality(&shearcrit(), &h, 3, g, &[]).unwrap();
        assert!(r.pass);
        let k = build_cone(ConeCore::Constant(TangentVector::new(1.0, -2.0)), 0.2).unwrap();
        let ys = shear_critical_height(3.0);
        let r = check_transversality(&shearcrit(), &k, 3, g, &[TorusPoint::new(0.2, ys)]).unwrap();
        assert!(r.raw_min < 1e-12 && !r.pass);
    }

    #[test]
    fn alignment_one_step() {
        let phi = 0.03;
        let map = shearcrit();
        let seg = crate::orbit::forward_orbit(&map, TorusPoint::new(0.1, 0.2), 1);
        // Away from the critical set v_min and u_max still define the lines.
        let target = map.derivative(seg.point(1)).matrix.svd().v_min;
        let u = map.derivative(seg.point(0)).matrix.svd().u_max;
        let need = signed_line_angle(u, target);
        let got = solve_alignment(&map, &seg, 0, 1, need.abs() + phi).unwrap();
        assert!((got - need).abs() < 1e-14);
    }
}
