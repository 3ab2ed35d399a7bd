//! E/F directions, their invariance, angle and finite-time domination.
//!
//! `E` comes from the kernel of `Df^{τ⁺+1}` when the forward window meets the
//! critical set, otherwise from the most contracted right singular direction
//! of `Df^N`. `F` comes from the image of `Df^{|τ⁻|}` at `x_{τ⁻}`, otherwise
//! from the dominant image direction of `Df^M` along the recorded backward
//! branch.

use crate::linalg::{line_angle_between, TangentVector};
use crate::orbit::{entry_times_at, BranchChoice, OrbitSegment};
use crate::surface_map::{derivative_along, derivative_power, kernel_dimension_of, CriticalSet, TorusMap, TorusPoint};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

pub const DEFAULT_HORIZON: usize = 40;
/// Successive horizon estimates closer than this (radians) count as converged.
pub const CONVERGENCE_ANGLE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplittingError {
    #[error("derivative product at index {index} has a two-dimensional kernel")]
    DegenerateKernel { index: i64 },
    #[error("image of the derivative product from index {index} is numerically zero")]
    RankZeroImage { index: i64 },
    #[error("window has {available} backward points, {needed} needed")]
    InsufficientWindow { needed: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EProvenance {
    KernelFormula { tau_plus: i64 },
    SingularLimit { horizon: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FProvenance {
    ImageFormula { tau_minus: i64 },
    PushForwardLimit { horizon: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EEstimate {
    pub direction: TangentVector,
    pub provenance: EProvenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FEstimate {
    pub direction: TangentVector,
    pub provenance: FProvenance,
}

/// Parameters shared by the E/F computations.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplittingConfig {
    pub horizon_e: usize,
    pub horizon_f: usize,
    /// Critical-membership margin for τ± (ignored without a critical set).
    pub margin: f64,
    /// Absolute rank tolerance; `None` uses the relative default.
    pub rank_tolerance: Option<f64>,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            horizon_e: DEFAULT_HORIZON,
            horizon_f: DEFAULT_HORIZON,
            margin: 1e-6,
            rank_tolerance: None,
        }
    }
}

/// Most contracted forward direction of `Df^N` at `p`.
pub fn singular_e<M: TorusMap + ?Sized>(f: &M, p: TorusPoint, horizon: usize) -> Result<TangentVector, SplittingError> {
    let prod = derivative_power(f, p, horizon.max(1));
    if prod.is_zero() {
        return Err(SplittingError::DegenerateKernel { index: 0 });
    }
    let (_, _, svd) = prod.log_singular_values();
    Ok(svd.v_min)
}

/// Dominant image direction of the product along `points` (oldest first).
pub fn pushed_f<M: TorusMap + ?Sized>(f: &M, points: &[TorusPoint]) -> Option<TangentVector> {
    let prod = derivative_along(f, points);
    if prod.is_zero() {
        return None;
    }
    Some(prod.log_singular_values().2.u_max)
}

/// E at window index `j`.
pub fn compute_e<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    j: i64,
    crit: Option<&CriticalSet>,
    cfg: &SplittingConfig,
) -> Result<EEstimate, SplittingError> {
    if let Some(cs) = crit {
        let t = entry_times_at(f, seg, j, cs, cfg.margin);
        if let Some(tp) = t.tau_plus {
            let prod = derivative_along(f, seg.slice(j, j + tp));
            if kernel_dimension_of(&prod, cfg.rank_tolerance) == 2 {
                return Err(SplittingError::DegenerateKernel { index: j });
            }
            let (_, _, svd) = prod.log_singular_values();
            return Ok(EEstimate {
                direction: svd.v_min,
                provenance: EProvenance::KernelFormula { tau_plus: tp },
            });
        }
    }
    let direction = singular_e(f, seg.point(j), cfg.horizon_e).map_err(|_| SplittingError::DegenerateKernel { index: j })?;
    Ok(EEstimate {
        direction,
        provenance: EProvenance::SingularLimit { horizon: cfg.horizon_e },
    })
}

/// F at window index `j`, along the segment's recorded backward branch.
pub fn compute_f<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    j: i64,
    crit: Option<&CriticalSet>,
    cfg: &SplittingConfig,
) -> Result<FEstimate, SplittingError> {
    if let Some(cs) = crit {
        let t = entry_times_at(f, seg, j, cs, cfg.margin);
        if let Some(tm) = t.tau_minus {
            let start = j + tm;
            let dir = pushed_f(f, seg.slice(start, j - 1)).ok_or(SplittingError::RankZeroImage { index: start })?;
            return Ok(FEstimate {
                direction: dir,
                provenance: FProvenance::ImageFormula { tau_minus: tm },
            });
        }
    }
    let available = (j - seg.first_index()) as usize;
    if available < cfg.horizon_f || cfg.horizon_f == 0 {
        return Err(SplittingError::InsufficientWindow {
            needed: cfg.horizon_f.max(1),
            available,
        });
    }
    let start = j - cfg.horizon_f as i64;
    let dir = pushed_f(f, seg.slice(start, j - 1)).ok_or(SplittingError::RankZeroImage { index: start })?;
    Ok(FEstimate {
        direction: dir,
        provenance: FProvenance::PushForwardLimit { horizon: cfg.horizon_f },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingSample {
    pub base: TorusPoint,
    pub e: TangentVector,
    pub f: TangentVector,
    /// Angle between the lines, in [0, π/2].
    pub angle: f64,
    pub e_provenance: EProvenance,
    pub f_provenance: FProvenance,
    pub branch: Vec<BranchChoice>,
}

impl SplittingSample {
    pub fn from_directions(base: TorusPoint, e: EEstimate, fdir: FEstimate, branch: Vec<BranchChoice>) -> Self {
        let e_dir = e.direction.normalized().unwrap_or(e.direction);
        let f_dir = fdir.direction.normalized().unwrap_or(fdir.direction);
        Self {
            base,
            e: e_dir,
            f: f_dir,
            angle: line_angle_between(e_dir, f_dir),
            e_provenance: e.provenance,
            f_provenance: fdir.provenance,
            branch,
        }
    }
}

pub fn splitting_at<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    j: i64,
    crit: Option<&CriticalSet>,
    cfg: &SplittingConfig,
) -> Result<SplittingSample, SplittingError> {
    let e = compute_e(f, seg, j, crit, cfg)?;
    let fd = compute_f(f, seg, j, crit, cfg)?;
    Ok(SplittingSample::from_directions(seg.point(j), e, fd, seg.branch.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub worst_e_deviation: f64,
    pub worst_f_deviation: f64,
    pub worst_index: usize,
    /// Steps where `Df·E` vanished (kernel containment).
    pub kernel_steps: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `Df E(x_i) ⊆ E(x_{i+1})` and `Df F(x_i) = F(x_{i+1})` along
/// consecutive samples of one orbit.
pub fn check_invariance<M: TorusMap + ?Sized>(f: &M, samples: &[SplittingSample], tolerance: f64) -> InvarianceReport {
    let mut worst_e = 0.0f64;
    let mut worst_f = 0.0f64;
    let mut worst_index = 0;
    let mut kernel_steps = 0;
    for (i, w) in samples.windows(2).enumerate() {
        let m = f.derivative(w[0].base).matrix;
        let scale = m.max_abs_entry().max(f64::MIN_POSITIVE);
        let ie = m.apply(w[0].e);
        let de = if ie.norm() <= 1e-9 * scale {
            kernel_steps += 1;
            0.0
        } else {
            line_angle_between(ie, w[1].e)
        };
        let iff = m.apply(w[0].f);
        let df = if iff.norm() == 0.0 { FRAC_PI_2 } else { line_angle_between(iff, w[1].f) };
        if de.max(df) > worst_e.max(worst_f) {
            worst_index = i;
        }
        worst_e = worst_e.max(de);
        worst_f = worst_f.max(df);
    }
    InvarianceReport {
        worst_e_deviation: worst_e,
        worst_f_deviation: worst_f,
        worst_index,
        kernel_steps,
        tolerance,
        pass: worst_e <= tolerance && worst_f <= tolerance,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            spacing: 1.0 / resolution as f64,
        }
    }

    pub fn point(&self, k: usize) -> TorusPoint {
        let i = k % self.resolution;
        let j = k / self.resolution;
        TorusPoint::new(i as f64 * self.spacing, j as f64 * self.spacing)
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationCertificate {
    pub ell: usize,
    /// max over samples of ‖Df^ℓ|E‖ / ‖Df^ℓ|F‖; also the best constant achievable.
    pub worst_ratio: f64,
    pub min_angle: f64,
    pub sample_count: usize,
    pub alpha: f64,
    pub grid: Option<GridSpec>,
    pub worst_point: Option<TorusPoint>,
    pub valid: bool,
}

/// `‖Df^ℓ|E‖ / ‖Df^ℓ|F‖` at one sample.
pub fn domination_ratio<M: TorusMap + ?Sized>(f: &M, s: &SplittingSample, ell: usize) -> f64 {
    let prod = derivative_power(f, s.base, ell);
    (prod.log_norm_applied(s.e) - prod.log_norm_applied(s.f)).exp()
}

/// Worst ratio, minimal angle and validity (`ratio ≤ ½`, `angle ≥ α`).
pub fn check_domination<M: TorusMap + ?Sized>(
    f: &M,
    samples: &[SplittingSample],
    ell: usize,
    alpha: f64,
    grid: Option<GridSpec>,
) -> DominationCertificate {
    use rayon::prelude::*;
    assert!(ell >= 1);
    let ratios: Vec<f64> = samples.par_iter().map(|s| domination_ratio(f, s, ell)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = None;
    for (s, r) in samples.iter().zip(&ratios) {
        // NaN ratios (both norms zero) count as failures.
        let r = if r.is_nan() { f64::INFINITY } else { *r };
        if r > worst {
            worst = r;
            worst_point = Some(s.base);
        }
    }
    let min_angle = samples.iter().map(|s| s.angle).fold(f64::INFINITY, f64::min);
    DominationCertificate {
        ell,
        worst_ratio: worst,
        min_angle,
        sample_count: samples.len(),
        alpha,
        grid,
        worst_point,
        valid: !samples.is_empty() && worst <= 0.5 && min_angle >= alpha,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crosscheck {
    /// Kernel formula against singular limit, or `N` against `2N`.
    pub e_discrepancy: f64,
    pub e_routes_independent: bool,
    /// Image formula against push-forward, or `M` against `M/2`.
    pub f_discrepancy: Option<f64>,
    pub f_routes_independent: bool,
}

impl Crosscheck {
    pub fn max(&self) -> f64 {
        self.e_discrepancy.max(self.f_discrepancy.unwrap_or(0.0))
    }
}

/// Angle between the two E estimates and the two F estimates at index 0.
pub fn uniqueness_crosscheck<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    crit: Option<&CriticalSet>,
    cfg: &SplittingConfig,
) -> Result<Crosscheck, SplittingError> {
    let formula_e = compute_e(f, seg, 0, crit, cfg)?;
    let limit_e = singular_e(f, seg.point(0), cfg.horizon_e)?;
    let (e_discrepancy, e_routes_independent) = match formula_e.provenance {
        EProvenance::KernelFormula { .. } => (line_angle_between(formula_e.direction, limit_e), true),
        EProvenance::SingularLimit { .. } => {
            let longer = singular_e(f, seg.point(0), 2 * cfg.horizon_e)?;
            (line_angle_between(longer, limit_e), false)
        }
    };
    let available = seg.back;
    let mut f_routes_independent = false;
    let f_discrepancy = if available == 0 {
        None
    } else {
        let m = cfg.horizon_f.min(available);
        let push = pushed_f(f, seg.slice(-(m as i64), -1));
        let formula = crit.and_then(|_| compute_f(f, seg, 0, crit, cfg).ok());
        match (formula, push) {
            (Some(FEstimate { direction, provenance: FProvenance::ImageFormula { .. } }), Some(p)) => {
                f_routes_independent = true;
                Some(line_angle_between(direction, p))
            }
            (_, Some(p)) if m >= 2 => {
                let half = m / 2;
                pushed_f(f, seg.slice(-(half as i64), -1)).map(|q| line_angle_between(p, q))
            }
            _ => None,
        }
    };
    Ok(Crosscheck {
        e_discrepancy,
        e_routes_independent,
        f_discrepancy,
        f_routes_independent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleProfile {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Counts over 18 equal bins of [0, π/2].
    pub histogram: Vec<usize>,
    /// Set when some sample has E and F (numerically) on the same line.
    pub degenerate: bool,
}

pub const ANGLE_BINS: usize = 18;

pub fn angle_profile(samples: &[SplittingSample]) -> Option<AngleProfile> {
    if samples.is_empty() {
        return None;
    }
    let mut histogram = vec![0; ANGLE_BINS];
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for s in samples {
        min = min.min(s.angle);
        max = max.max(s.angle);
        sum += s.angle;
        let bin = ((s.angle / FRAC_PI_2) * ANGLE_BINS as f64).floor() as usize;
        histogram[bin.min(ANGLE_BINS - 1)] += 1;
    }
    Some(AngleProfile {
        min,
        mean: sum / samples.len() as f64,
        max,
        histogram,
        degenerate: min <= 1e-12,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub k: usize,
    pub value: f64,
    pub provenance: FProvenance,
}

/// `(1/k) Σ_{i<k} log ‖Df|F(x_i)‖`, with `F(x_0)` from the window and
/// `F(x_{i+1})` obtained by pushing forward.
pub fn lyapunov_along_f<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    k: usize,
    crit: Option<&CriticalSet>,
    cfg: &SplittingConfig,
) -> Result<LyapunovEstimate, SplittingError> {
    assert!(k >= 1);
    let f0 = compute_f(f, seg, 0, crit, cfg)?;
    let mut x = seg.point(0);
    let mut dir = f0.direction;
    let mut sum = 0.0;
    for _ in 0..k {
        let img = f.derivative(x).matrix.apply(dir);
        let n = img.norm();
        sum += n.ln();
        dir = img.normalized().unwrap_or(dir);
        x = f.evaluate(x);
    }
    Ok(LyapunovEstimate {
        k,
        value: sum / k as f64,
        provenance: f0.provenance,
    })
}

/// Splitting samples over a grid, using the limit routes with principal
/// backward branches of length `horizon_f`.
pub fn splitting_grid<M: TorusMap + ?Sized>(
    f: &M,
    grid: GridSpec,
    cfg: &SplittingConfig,
) -> Vec<Result<SplittingSample, SplittingError>> {
    use crate::orbit::{backward_branch, BranchSelector};
    use rayon::prelude::*;
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let p = grid.point(k);
            let seg = backward_branch(f, p, cfg.horizon_f, &BranchSelector::Principal, 16).map_err(|_| {
                SplittingError::InsufficientWindow {
                    needed: cfg.horizon_f,
                    available: 0,
                }
            })?;
            splitting_at(f, &seg, 0, None, cfg)
        })
        .collect()
}
