//! Local derivative surgeries on torus maps: linear replacement, kernel
//! creation along a rotation witness, sink creation, and an orbit-coverage
//! probe.

use crate::cone::{rotation_cost, solve_alignment, DichotomyOutcome, RotationWitness};
use crate::linalg::{Mat2, TangentVector};
use crate::orbit::{forward_orbit, OrbitSegment};
use crate::surface_map::{
    derivative_along, kernel_dimension, wrap_displacement, Coord, LiftPoint, LinearPart, SurfaceEndomorphism,
    TorusMap, TorusPoint, TrigTerm,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

/// Sup of `|ρ'|·(R − r)` for the smoothstep profile.
pub const BUMP_SLOPE: f64 = 1.5;
/// Tolerance for `‖Dg^m‖` after a kernel surgery.
pub const KERNEL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("measured C¹ distance {measured:.3e} exceeds allowance {allowance:.3e}")]
    BudgetExceeded { measured: f64, allowance: f64 },
    #[error("surgery balls {0} and {1} overlap or contain each other's centres")]
    BallOverlap(usize, usize),
    #[error("orbit point {index} lies inside surgery ball {ball}")]
    OrbitPointInBall { ball: usize, index: i64 },
    #[error("invalid radii r = {inner}, R = {outer}")]
    InvalidRadii { inner: f64, outer: f64 },
    #[error("no rotation witness: {0}")]
    NoWitness(String),
    #[error("witness does not collapse the derivative: ‖Dg^{m}‖ = {norm:.3e}")]
    WitnessInvalid { m: usize, norm: f64 },
    #[error("required per-step scaling gap {gap:.4} is not below ε = {epsilon:.4}")]
    GapTooLarge { gap: f64, epsilon: f64 },
    #[error("point is not periodic with period {period} (residual {residual:.3e})")]
    NotPeriodic { period: usize, residual: f64 },
}

/// Replaces `f` near `center` by the affine map with derivative `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSurgery {
    pub center: TorusPoint,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub target: Mat2,
}

impl LocalSurgery {
    pub fn new(center: TorusPoint, inner_radius: f64, outer_radius: f64, target: Mat2) -> Result<Self, PerturbError> {
        if !(inner_radius > 0.0 && outer_radius > inner_radius && outer_radius < 0.25) {
            return Err(PerturbError::InvalidRadii {
                inner: inner_radius,
                outer: outer_radius,
            });
        }
        Ok(Self {
            center,
            inner_radius,
            outer_radius,
            target,
        })
    }

    /// Bound on `|ρ'|`.
    pub fn bump_derivative_bound(&self) -> f64 {
        BUMP_SLOPE / (self.outer_radius - self.inner_radius)
    }

    /// `1 + R + 1.5 R / (R − r)`: the factor by which the C¹ distance may
    /// exceed `‖L − Df(c)‖`, up to curvature of `f` on the ball.
    pub fn overhead_factor(&self) -> f64 {
        1.0 + self.outer_radius + BUMP_SLOPE * self.outer_radius / (self.outer_radius - self.inner_radius)
    }

    /// `(ρ(d), ρ'(d))`.
    pub fn bump(&self, d: f64) -> (f64, f64) {
        let (r, big) = (self.inner_radius, self.outer_radius);
        if d <= r {
            (1.0, 0.0)
        } else if d >= big {
            (0.0, 0.0)
        } else {
            let w = big - r;
            let t = (d - r) / w;
            (1.0 - t * t * (3.0 - 2.0 * t), -6.0 * t * (1.0 - t) / w)
        }
    }

    /// Displacement from the nearest lift of the centre.
    fn offset(&self, p: LiftPoint) -> TangentVector {
        wrap_displacement(p.minus(&self.center.lift()))
    }

    fn contains(&self, p: LiftPoint) -> bool {
        self.offset(p).norm() < self.outer_radius
    }

    fn apply<M: TorusMap + ?Sized>(&self, f: &M, p: LiftPoint, fp: LiftPoint) -> LiftPoint {
        let w = self.offset(p);
        let (rho, _) = self.bump(w.norm());
        if rho == 0.0 {
            return fp;
        }
        let c = p.offset(-w);
        let h = f.lift(c).offset(self.target.apply(w)).minus(&fp);
        fp.offset(h * rho)
    }

    fn apply_jacobian<M: TorusMap + ?Sized>(&self, f: &M, p: LiftPoint, fp: LiftPoint, dfp: Mat2) -> Mat2 {
        let w = self.offset(p);
        let d = w.norm();
        let (rho, drho) = self.bump(d);
        if rho == 0.0 && drho == 0.0 {
            return dfp;
        }
        let c = p.offset(-w);
        let h = f.lift(c).offset(self.target.apply(w)).minus(&fp);
        let mut out = dfp + (self.target - dfp).scaled(rho);
        if drho != 0.0 && d > 0.0 {
            let grad = w * (drho / d);
            out = out + crate::linalg::outer(h, grad);
        }
        out
    }
}

/// A base map with disjoint local surgeries applied at evaluation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedMap {
    pub base: SurfaceEndomorphism,
    pub surgeries: Vec<LocalSurgery>,
    /// Sampled C¹ distance to the base map.
    pub c1_distance: f64,
}

impl PerturbedMap {
    pub fn new(base: SurfaceEndomorphism, surgeries: Vec<LocalSurgery>) -> Result<Self, PerturbError> {
        check_disjoint(&surgeries)?;
        let mut g = Self {
            base,
            surgeries,
            c1_distance: 0.0,
        };
        let samples = surgery_samples(&g.surgeries, 48, 96);
        g.c1_distance = c1_distance(&g.base, &g, &samples);
        Ok(g)
    }

    /// Largest overhead factor over the surgeries.
    pub fn overhead_factor(&self) -> f64 {
        self.surgeries.iter().map(|s| s.overhead_factor()).fold(1.0, f64::max)
    }

    /// On an affine base a surgery with target `A` is the identity; skipping
    /// it keeps evaluations bit-identical to the base.
    fn active(&self, p: LiftPoint) -> Option<&LocalSurgery> {
        let affine = self.base.perturbation.is_empty().then(|| self.base.linear.as_mat2());
        self.surgeries
            .iter()
            .find(|s| s.contains(p))
            .filter(|s| affine != Some(s.target))
    }

    pub fn to_columns(&self) -> String {
        let mut out = String::from("# cx cy r R l11 l12 l21 l22\n");
        for s in &self.surgeries {
            let t = s.target;
            let _ = writeln!(
                out,
                "{:.15e} {:.15e} {:.6e} {:.6e} {:.15e} {:.15e} {:.15e} {:.15e}",
                s.center.x(),
                s.center.y(),
                s.inner_radius,
                s.outer_radius,
                t.a,
                t.b,
                t.c,
                t.d
            );
        }
        out
    }
}

impl TorusMap for PerturbedMap {
    fn linear_part(&self) -> LinearPart {
        self.base.linear
    }

    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let fp = self.base.lift(p);
        match self.active(p) {
            Some(s) => s.apply(&self.base, p, fp),
            None => fp,
        }
    }

    fn jacobian(&self, p: LiftPoint) -> Mat2 {
        let dfp = self.base.jacobian(p);
        match self.active(p) {
            Some(s) => s.apply_jacobian(&self.base, p, self.base.lift(p), dfp),
            None => dfp,
        }
    }

    fn label(&self) -> String {
        format!("{}+{} surgeries", self.base.name, self.surgeries.len())
    }
}

fn check_disjoint(surgeries: &[LocalSurgery]) -> Result<(), PerturbError> {
    for (i, a) in surgeries.iter().enumerate() {
        for (j, b) in surgeries.iter().enumerate().skip(i + 1) {
            let d = a.center.distance(&b.center);
            if d < a.outer_radius + b.outer_radius {
                return Err(PerturbError::BallOverlap(i, j));
            }
        }
    }
    Ok(())
}

/// Polar sample points covering every surgery ball, including the rays
/// along the singular directions of `L − Df(c)`.
pub fn surgery_samples(surgeries: &[LocalSurgery], radial: usize, angular: usize) -> Vec<TorusPoint> {
    let mut out = Vec::new();
    for s in surgeries {
        out.push(s.center);
        let mut angles: Vec<f64> = (0..angular).map(|k| 2.0 * PI * k as f64 / angular as f64).collect();
        for v in [s.target.svd().v_max, s.target.svd().v_min] {
            angles.push(v.angle());
            angles.push(v.angle() + PI);
        }
        for i in 1..=radial {
            let d = s.outer_radius * i as f64 / radial as f64;
            for &th in &angles {
                out.push(s.center.translated(TangentVector::from_angle(th) * d));
            }
        }
        // Dense radii in the bump annulus, where the C¹ sup sits.
        for i in 0..=radial {
            let d = s.inner_radius + (s.outer_radius - s.inner_radius) * i as f64 / radial as f64;
            for &th in &angles {
                out.push(s.center.translated(TangentVector::from_angle(th) * d));
            }
        }
    }
    out
}

/// Sup over `samples` of torus displacement plus operator-norm derivative deviation.
pub fn c1_distance<F: TorusMap + ?Sized, G: TorusMap + ?Sized>(f: &F, g: &G, samples: &[TorusPoint]) -> f64 {
    use rayon::prelude::*;
    samples
        .par_iter()
        .map(|p| {
            let l = p.lift();
            let disp = wrap_displacement(g.lift(l).minus(&f.lift(l))).norm();
            let dev = (g.jacobian(l) - f.jacobian(l)).op_norm();
            disp + dev
        })
        .reduce(|| 0.0, f64::max)
}

/// Closed-form C¹ distance of a single surgery with `L = Df(c) + B` on a linear map.
pub fn linear_surgery_bound(s: &LocalSurgery, b_norm: f64) -> f64 {
    let n = 20_000;
    let mut best: f64 = 0.0;
    for i in 0..=n {
        let d = s.outer_radius * i as f64 / n as f64;
        let (rho, drho) = s.bump(d);
        best = best.max(rho * d + rho.max((rho + d * drho).abs()));
    }
    b_norm * best
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurgeryRequest {
    pub point: TorusPoint,
    pub target: Mat2,
}

/// Blends `f` into the requested affine maps on disjoint balls.
///
/// The measured C¹ distance must not exceed `ε` times the largest
/// overhead factor.
pub fn franks_surgery(
    f: &SurfaceEndomorphism,
    requests: &[SurgeryRequest],
    inner_radius: f64,
    outer_radius: f64,
    epsilon: f64,
) -> Result<PerturbedMap, PerturbError> {
    let mut surgeries = Vec::with_capacity(requests.len());
    for r in requests {
        let deviation = (r.target - f.derivative(r.point).matrix).op_norm();
        if deviation >= epsilon && deviation > 0.0 {
            return Err(PerturbError::BudgetExceeded {
                measured: deviation,
                allowance: epsilon,
            });
        }
        surgeries.push(LocalSurgery::new(r.point, inner_radius, outer_radius, r.target)?);
    }
    let g = PerturbedMap::new(f.clone(), surgeries)?;
    let allowance = epsilon * g.overhead_factor();
    if g.c1_distance > allowance {
        return Err(PerturbError::BudgetExceeded {
            measured: g.c1_distance,
            allowance,
        });
    }
    Ok(g)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSurgery {
    pub map: PerturbedMap,
    /// Iterate with vanishing derivative at `point`.
    pub m: usize,
    pub point: TorusPoint,
    /// `‖Dg^m(point)‖`.
    pub product_norm: f64,
    pub kernel_dimension: u8,
    pub witness_cost: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelSurgeryOptions {
    /// Inner radius at the first witness point.
    pub inner_radius: f64,
    /// `R / r` for every ball.
    pub outer_ratio: f64,
    /// Extra room for the pushed ball in the next inner radius.
    pub growth_margin: f64,
}

impl Default for KernelSurgeryOptions {
    fn default() -> Self {
        Self {
            inner_radius: 1e-5,
            outer_ratio: 2.0,
            growth_margin: 1.5,
        }
    }
}

/// Derivatives replacing `Df` along the witness: rotated rank-one
/// truncation at `a`, rotated derivatives strictly between, rank-one
/// truncation at `b`.
pub fn witness_targets<M: TorusMap + ?Sized>(f: &M, w: &RotationWitness) -> Vec<Mat2> {
    let r = w.rotation();
    (w.start..=w.end)
        .map(|i| {
            let d = f.derivative(w.segment.point(i)).matrix;
            if i == w.start {
                r * d.rank_one_truncation()
            } else if i == w.end {
                d.rank_one_truncation()
            } else {
                r * d
            }
        })
        .collect()
}

/// Applies the witness derivatives at `x_a, …, x_b` so that `Dg^m(x_a) = 0`.
///
/// Inner radii grow along the segment so that the image of
/// `B(x_a, r_a / 2)` stays inside the affine region of every ball.
pub fn full_kernel_surgery(
    f: &SurfaceEndomorphism,
    outcome: &DichotomyOutcome,
    opts: &KernelSurgeryOptions,
) -> Result<KernelSurgery, PerturbError> {
    let w = match outcome {
        DichotomyOutcome::Witness(w) => w.as_ref(),
        DichotomyOutcome::Certificate(_) => {
            return Err(PerturbError::NoWitness(
                "the map carries a domination certificate, so no kernel can be created by a small perturbation".into(),
            ))
        }
        DichotomyOutcome::Inconclusive { reason } => return Err(PerturbError::NoWitness(reason.clone())),
    };
    let targets = witness_targets(f, w);
    let mut surgeries = Vec::with_capacity(targets.len());
    let mut radius = opts.inner_radius;
    let mut pushed = Mat2::IDENTITY;
    for (k, i) in (w.start..=w.end).enumerate() {
        let c = w.segment.point(i);
        surgeries.push(LocalSurgery::new(c, radius, opts.outer_ratio * radius, targets[k])?);
        pushed = targets[k] * pushed;
        radius = opts.inner_radius.max(opts.growth_margin * pushed.op_norm() * opts.inner_radius / 2.0);
    }
    let mut g = PerturbedMap::new(f.clone(), surgeries)?;
    // Non-surgered points of the segment must stay outside every ball.
    for i in w.segment.indices() {
        if (w.start..=w.end).contains(&i) {
            continue;
        }
        let p = w.segment.point(i);
        if let Some(j) = g.surgeries.iter().position(|s| s.center.distance(&p) < s.outer_radius) {
            return Err(PerturbError::OrbitPointInBall { ball: j, index: i });
        }
    }
    let x = w.segment.point(w.start);
    let mut pts = vec![x];
    for _ in 1..w.m {
        pts.push(g.evaluate(*pts.last().unwrap()));
    }
    let prod = derivative_along(&g, &pts);
    let product_norm = prod.to_matrix().map(|m| m.op_norm()).unwrap_or(f64::INFINITY);
    if product_norm > KERNEL_TOLERANCE {
        return Err(PerturbError::WitnessInvalid {
            m: w.m,
            norm: product_norm,
        });
    }
    // The product is zero up to rounding, so rank is judged against the
    // absolute collapse tolerance rather than relative to its own size.
    let kernel_dimension = kernel_dimension(&g, x, w.m, Some(KERNEL_TOLERANCE));
    g.c1_distance = c1_distance(f, &g, &surgery_samples(&g.surgeries, 48, 96));
    Ok(KernelSurgery {
        map: g,
        m: w.m,
        point: x,
        product_norm,
        kernel_dimension,
        witness_cost: w.c1_cost,
    })
}

/// Torus diameter of `g^m(B(center, radius))`, sampled on the boundary and centre.
pub fn collapsed_diameter<M: TorusMap + ?Sized>(g: &M, center: TorusPoint, radius: f64, m: usize, samples: usize) -> f64 {
    let mut pts: Vec<TorusPoint> = std::iter::once(center)
        .chain((0..samples).flat_map(|k| {
            let th = 2.0 * PI * k as f64 / samples as f64;
            [0.5, 1.0].map(|s| center.translated(TangentVector::from_angle(th) * (s * radius)))
        }))
        .collect();
    for _ in 0..m {
        for p in pts.iter_mut() {
            *p = g.evaluate(*p);
        }
    }
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            d = d.max(p.distance(q));
        }
    }
    d
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SinkSurgery {
    pub map: PerturbedMap,
    pub point: TorusPoint,
    pub period: usize,
    /// Largest eigenvalue modulus of `Df^l(p)`.
    pub omega: f64,
    /// Per-step derivative scaling applied along the orbit, clipped at 1.
    pub scaling: f64,
    /// Spectral radius of `Dh^l(p)` after surgery.
    pub spectral_radius: f64,
}

/// Scales the derivative along the orbit of the periodic point `p` by
/// `|ω|^{−1/l} − ε` (at most 1), making `p` a sink.
pub fn sink_surgery(
    f: &SurfaceEndomorphism,
    p: TorusPoint,
    period: usize,
    epsilon: f64,
    inner_radius: f64,
) -> Result<SinkSurgery, PerturbError> {
    let orbit = forward_orbit(f, p, period);
    let residual = orbit.point(period as i64).distance(&p);
    if residual > 1e-9 {
        return Err(PerturbError::NotPeriodic { period, residual });
    }
    let pts: Vec<TorusPoint> = (0..period as i64).map(|i| orbit.point(i)).collect();
    let prod = derivative_along(f, &pts).to_matrix().expect("finite product");
    let omega = prod.spectral_radius();
    let per_step = omega.powf(-1.0 / period as f64);
    let gap = 1.0 - per_step;
    if gap >= epsilon {
        return Err(PerturbError::GapTooLarge { gap, epsilon });
    }
    let scaling = (per_step - epsilon).min(1.0);
    let surgeries = pts
        .iter()
        .map(|q| LocalSurgery::new(*q, inner_radius, 2.0 * inner_radius, f.derivative(*q).matrix.scaled(scaling)))
        .collect::<Result<Vec<_>, _>>()?;
    let g = PerturbedMap::new(f.clone(), surgeries)?;
    let gpts: Vec<TorusPoint> = {
        let mut v = vec![p];
        for _ in 1..period {
            v.push(g.evaluate(*v.last().unwrap()));
        }
        v
    };
    let spectral_radius = derivative_along(&g, &gpts).to_matrix().expect("finite").spectral_radius();
    Ok(SinkSurgery {
        map: g,
        point: p,
        period,
        omega,
        scaling,
        spectral_radius,
    })
}

/// Shown with every probe result.
pub const PROBE_DISCLAIMER: &str =
    "coverage is a heuristic falsifier: low coverage refutes density at probe scale, high coverage proves nothing";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitivityProbe {
    pub orbit_length: usize,
    pub resolution: usize,
    /// Max over starts of the visited-cell fraction.
    pub coverage: f64,
    pub per_start: Vec<f64>,
    /// Visit counts of the best start, row-major in y.
    pub visits: Vec<u64>,
    pub note: String,
}

impl TransitivityProbe {
    pub fn to_columns(&self) -> String {
        let mut out = String::from("# cell ix iy visits\n");
        for (k, v) in self.visits.iter().enumerate() {
            let _ = writeln!(out, "{k} {} {} {v}", k % self.resolution, k / self.resolution);
        }
        out
    }
}

fn cell_of(p: TorusPoint, res: usize) -> usize {
    let ix = ((p.x() * res as f64) as usize).min(res - 1);
    let iy = ((p.y() * res as f64) as usize).min(res - 1);
    iy * res + ix
}

pub fn transitivity_probe<M: TorusMap + ?Sized>(g: &M, starts: &[TorusPoint], orbit_length: usize, resolution: usize) -> TransitivityProbe {
    use rayon::prelude::*;
    let runs: Vec<Vec<u64>> = starts
        .par_iter()
        .map(|s| {
            let mut visits = vec![0u64; resolution * resolution];
            let mut p = *s;
            for _ in 0..orbit_length {
                visits[cell_of(p, resolution)] += 1;
                p = g.evaluate(p);
            }
            visits
        })
        .collect();
    let total = (resolution * resolution) as f64;
    let per_start: Vec<f64> = runs
        .iter()
        .map(|v| v.iter().filter(|c| **c > 0).count() as f64 / total)
        .collect();
    let best = per_start
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    TransitivityProbe {
        orbit_length,
        resolution,
        coverage: per_start.get(best).copied().unwrap_or(0.0),
        visits: runs.into_iter().nth(best).unwrap_or_default(),
        per_start,
        note: PROBE_DISCLAIMER.to_string(),
    }
}

/// `A = [[2,1],[0,2]]` with `Df(0,0) = μ·I`: a fixed point of adjustable
/// conformal multiplier inside the shear family.
pub fn shear_sink_variant(mu: f64) -> SurfaceEndomorphism {
    let k = (mu - 2.0) / (2.0 * PI);
    SurfaceEndomorphism::new(
        format!("shearsink({mu})"),
        LinearPart::new(2, 1, 0, 2),
        vec![
            TrigTerm::sin(Coord::X, k, (1, 0)),
            TrigTerm::sin(Coord::X, -1.0 / (2.0 * PI), (0, 1)),
            TrigTerm::sin(Coord::Y, k, (0, 1)),
        ],
    )
}

/// Symmetric cycle of the shear family's circle factor
/// `g(y) = 2y + (a/2π) sin 2πy`, passing near the critical circle `y*`
/// and, `k` steps later, near `−y*`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShearCycle {
    pub amplitude: f64,
    pub half_period: usize,
    pub points: Vec<TorusPoint>,
    /// `|y_0 − y*|`.
    pub critical_offset: f64,
}

fn circle_lift(a: f64, y: f64) -> f64 {
    2.0 * y + a / (2.0 * PI) * (2.0 * PI * y).sin()
}

/// Root of `g^k(y) + y ∈ Z` closest to the critical height, with the
/// matching periodic x-coordinates.
pub fn shear_symmetric_cycle(amplitude: f64, k: usize) -> Option<ShearCycle> {
    let ys = crate::canonical::shear_critical_height(amplitude);
    let h = |y: f64| (0..k).fold(y, |v, _| circle_lift(amplitude, v)) + y;
    let mut best: Option<f64> = None;
    for width in [0.05, 0.2, 0.5] {
    if best.is_some() {
        break;
    }
    let n = 200_000;
    let mut prev = (ys - width, h(ys - width));
    for i in 1..=n {
        let y = ys - width + 2.0 * width * i as f64 / n as f64;
        let v = h(y);
        if v.floor() != prev.1.floor() {
            let target = v.floor().max(prev.1.floor());
            let (mut lo, mut hi) = (prev.0, y);
            let up = v > prev.1;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if (h(mid) < target) == up {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            if best.is_none_or(|b| (root - ys).abs() < (b - ys).abs()) {
                best = Some(root);
            }
        }
        prev = (y, v);
    }
    }
    let y0 = best?;
    let p = 2 * k;
    let mut ys_orbit = vec![y0];
    for i in 1..p {
        // Use the symmetry for the second half to keep the cycle exact.
        let y = if i < k { circle_lift(amplitude, ys_orbit[i - 1]).rem_euclid(1.0) } else { (-ys_orbit[i - k]).rem_euclid(1.0) };
        ys_orbit.push(y);
    }
    // x_{n+1} = 2 x_n + y_n on a p-cycle.
    let s: f64 = ys_orbit.iter().enumerate().map(|(n, y)| 2f64.powi((p - 1 - n) as i32) * y).sum();
    let x0 = (-s / (2f64.powi(p as i32) - 1.0)).rem_euclid(1.0);
    let mut points = vec![TorusPoint::new(x0, y0)];
    for i in 1..p {
        let prev = points[i - 1];
        points.push(TorusPoint::new(2.0 * prev.x() + ys_orbit[i - 1], ys_orbit[i]));
    }
    Some(ShearCycle {
        amplitude,
        half_period: k,
        points,
        critical_offset: (y0 - ys).abs(),
    })
}

/// Rotation witness from `x_0` (near `y*`) to `x_k` (near `−y*`) on a
/// symmetric shear cycle, with the per-step rotation from alignment.
pub fn cycle_witness<M: TorusMap + ?Sized>(f: &M, cycle: &ShearCycle, epsilon: f64) -> Option<RotationWitness> {
    let seg = cycle_segment(cycle);
    let k = cycle.half_period as i64;
    let phi = solve_alignment(f, &seg, 0, k, PI / 2.0)?;
    Some(RotationWitness {
        c1_cost: rotation_cost(f, &seg, 0, k, phi),
        segment: seg,
        start: 0,
        end: k,
        step_angle: phi,
        steps: k as usize,
        epsilon,
        m: k as usize + 1,
    })
}

/// The cycle as an orbit segment `x_0, …, x_{p−1}`.
pub fn cycle_segment(cycle: &ShearCycle) -> OrbitSegment {
    OrbitSegment {
        back: 0,
        points: cycle.points.clone(),
        branch: Vec::new(),
        residuals: vec![0.0; cycle.points.len()],
    }
}
