//! u-arcs and their length growth, stable curves along E, ν-boxes, and
//! periodic points from box contraction.
//!
//! Curves live in the universal cover so that lengths are unwrapped.

use crate::cone::ConeField;
use crate::linalg::{line_angle_between, ScaledMatrix, TangentVector};
use crate::splitting::singular_e;
use crate::surface_map::{derivative_power, LiftPoint, LinearPart, TorusMap, TorusPoint};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum ArcError {
    #[error("chord {segment} leaves the cone (angle {angle:.3e} > η = {eta:.3e})")]
    ConeViolation { segment: usize, angle: f64, eta: f64 },
    #[error("node budget {budget} exceeded at iterate {iterate}")]
    SubdivisionBlowup {
        budget: usize,
        iterate: usize,
        partial: Box<ArcGrowthSeries>,
    },
    #[error("no return within ν/2 for periods {min_period}..={max_period}")]
    NoReturnFound { min_period: usize, max_period: usize },
    #[error("strip contraction stalled: {0}")]
    ContractionStall(String),
    #[error("E direction unavailable at {0}")]
    NoStableDirection(TorusPoint),
}

/// Polyline in the lift whose chords lie in a cone field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UArc {
    /// Parameter of each node along the original arc, in [0, 1].
    pub params: Vec<f64>,
    pub nodes: Vec<LiftPoint>,
    pub max_segment: f64,
    pub cone_eta: f64,
    pub cone_core: String,
}

fn polyline_length(nodes: &[LiftPoint]) -> f64 {
    nodes.windows(2).map(|w| w[1].minus(&w[0]).norm()).sum()
}

impl UArc {
    pub fn length(&self) -> f64 {
        polyline_length(&self.nodes)
    }

    pub fn start(&self) -> LiftPoint {
        self.nodes[0]
    }

    pub fn end(&self) -> LiftPoint {
        *self.nodes.last().expect("nonempty arc")
    }

    /// Point on the original straight arc at parameter `t`.
    fn base_point(&self, t: f64) -> LiftPoint {
        let a = self.start();
        let b = self.end();
        LiftPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Checks every chord against the cone at its left endpoint.
    pub fn verify_cone(&self, cone: &ConeField) -> Result<(), ArcError> {
        for (i, w) in self.nodes.windows(2).enumerate() {
            let chord = w[1].minus(&w[0]);
            if chord.norm() == 0.0 {
                continue;
            }
            let angle = line_angle_between(chord, cone.core_at(w[0].project()));
            if angle > cone.eta {
                return Err(ArcError::ConeViolation {
                    segment: i,
                    angle,
                    eta: cone.eta,
                });
            }
        }
        Ok(())
    }

    pub fn to_columns(&self) -> String {
        let mut out = String::from("# t x y\n");
        for (t, p) in self.params.iter().zip(&self.nodes) {
            let _ = writeln!(out, "{t:.15e} {:.15e} {:.15e}", p.x, p.y);
        }
        out
    }
}

/// Straight u-arc of the given length from `start` along `direction`.
pub fn make_u_arc(
    start: LiftPoint,
    direction: TangentVector,
    length: f64,
    cone: &ConeField,
    resolution: usize,
) -> Result<UArc, ArcError> {
    let u = direction.normalized().expect("nonzero direction");
    let n = resolution.max(1);
    let params: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let nodes = params.iter().map(|t| start.offset(u * (t * length))).collect();
    let arc = UArc {
        params,
        nodes,
        max_segment: length / n as f64,
        cone_eta: cone.eta,
        cone_core: cone.core.describe(),
    };
    arc.verify_cone(cone)?;
    Ok(arc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcGrowthSeries {
    /// `ℓ(f^n γ)` for n = 0..N.
    pub lengths: Vec<f64>,
    /// Least-squares slope of `log ℓ` against n.
    pub exponent: f64,
    /// First iterate at which the length reaches `2^j ℓ(γ)`, j = 1, 2, ….
    pub doubling_times: Vec<usize>,
}

impl ArcGrowthSeries {
    pub fn from_lengths(lengths: Vec<f64>) -> Self {
        let logs: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
        let exponent = least_squares_slope(&logs);
        let mut doubling_times = Vec::new();
        if let Some(&l0) = lengths.first() {
            let mut target = 2.0 * l0;
            for (n, &l) in lengths.iter().enumerate() {
                while l >= target {
                    doubling_times.push(n);
                    target *= 2.0;
                }
            }
        }
        Self {
            lengths,
            exponent,
            doubling_times,
        }
    }

    pub fn to_columns(&self) -> String {
        let mut out = String::from("# n length log_length\n");
        for (n, l) in self.lengths.iter().enumerate() {
            let _ = writeln!(out, "{n} {l:.15e} {:.15e}", l.ln());
        }
        out
    }
}

/// Slope of the least-squares line through `(i, y_i)`; 0 for fewer than two points.
pub fn least_squares_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mx = (n - 1) as f64 / 2.0;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SubdivisionOptions {
    /// Largest allowed chord in the image.
    pub max_segment: f64,
    /// Largest turn between consecutive chords before refining.
    pub max_turn: f64,
    pub node_budget: usize,
    /// Parameter gaps below this are never split.
    pub min_param_gap: f64,
}

impl SubdivisionOptions {
    /// Turn threshold η/4.
    pub fn for_cone(eta: f64, max_segment: f64) -> Self {
        Self {
            max_segment,
            max_turn: eta / 4.0,
            node_budget: 2_000_000,
            min_param_gap: 1e-12,
        }
    }
}

fn lift_iterate<M: TorusMap + ?Sized>(f: &M, p: LiftPoint, n: usize) -> LiftPoint {
    (0..n).fold(p, |q, _| f.lift(q))
}

fn turn(a: LiftPoint, b: LiftPoint, c: LiftPoint) -> f64 {
    let u = b.minus(&a);
    let v = c.minus(&b);
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return 0.0;
    }
    u.cross(v).atan2(u.dot(v)).abs()
}

/// Refines the image polyline (parameters `params`, images `nodes` of the
/// `n`-th iterate) until chords and turns satisfy `opts`.
fn refine<M: TorusMap + ?Sized>(
    f: &M,
    arc: &UArc,
    n: usize,
    params: &mut Vec<f64>,
    nodes: &mut Vec<LiftPoint>,
    opts: &SubdivisionOptions,
) -> Result<(), usize> {
    loop {
        let len = nodes.len();
        let mut split = vec![false; len.saturating_sub(1)];
        let mut any = false;
        for i in 0..len - 1 {
            if params[i + 1] - params[i] < opts.min_param_gap {
                continue;
            }
            let chord = nodes[i + 1].minus(&nodes[i]).norm();
            let bent = (i > 0 && turn(nodes[i - 1], nodes[i], nodes[i + 1]) > opts.max_turn)
                || (i + 2 < len && turn(nodes[i], nodes[i + 1], nodes[i + 2]) > opts.max_turn);
            if chord > opts.max_segment || bent {
                split[i] = true;
                any = true;
            }
        }
        if !any {
            return Ok(());
        }
        let extra = split.iter().filter(|s| **s).count();
        if len + extra > opts.node_budget {
            return Err(len + extra);
        }
        let mids: Vec<(usize, f64, LiftPoint)> = {
            use rayon::prelude::*;
            split
                .par_iter()
                .enumerate()
                .filter(|(_, s)| **s)
                .map(|(i, _)| {
                    let t = 0.5 * (params[i] + params[i + 1]);
                    (i, t, lift_iterate(f, arc.base_point(t), n))
                })
                .collect()
        };
        let mut new_params = Vec::with_capacity(len + extra);
        let mut new_nodes = Vec::with_capacity(len + extra);
        let mut m = mids.iter().peekable();
        for i in 0..len {
            new_params.push(params[i]);
            new_nodes.push(nodes[i]);
            if let Some((j, t, p)) = m.peek() {
                if *j == i {
                    new_params.push(*t);
                    new_nodes.push(*p);
                    m.next();
                }
            }
        }
        *params = new_params;
        *nodes = new_nodes;
    }
}

/// Iterates `γ` `n` times, re-subdividing the image after each step.
///
/// Returns the length series and the final image arc. On budget overflow
/// the error carries the series up to the last completed iterate.
pub fn iterate_arc<M: TorusMap + ?Sized>(
    f: &M,
    arc: &UArc,
    n: usize,
    opts: &SubdivisionOptions,
) -> Result<(ArcGrowthSeries, UArc), ArcError> {
    let mut params = arc.params.clone();
    let mut nodes = arc.nodes.clone();
    let mut lengths = vec![polyline_length(&nodes)];
    for k in 1..=n {
        nodes = {
            use rayon::prelude::*;
            nodes.par_iter().map(|p| f.lift(*p)).collect()
        };
        if let Err(_count) = refine(f, arc, k, &mut params, &mut nodes, opts) {
            return Err(ArcError::SubdivisionBlowup {
                budget: opts.node_budget,
                iterate: k,
                partial: Box::new(ArcGrowthSeries::from_lengths(lengths)),
            });
        }
        lengths.push(polyline_length(&nodes));
    }
    let image = UArc {
        params,
        nodes,
        max_segment: opts.max_segment,
        cone_eta: arc.cone_eta,
        cone_core: arc.cone_core.clone(),
    };
    Ok((ArcGrowthSeries::from_lengths(lengths), image))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeltaArcOutcome {
    /// All iterate lengths stayed ≤ δ up to `n_max`.
    Bounded { n_max: usize },
    /// First iterate whose length exceeded δ.
    Escaped { n: usize, length: f64 },
}

pub fn detect_delta_u_arc<M: TorusMap + ?Sized>(
    f: &M,
    arc: &UArc,
    delta: f64,
    n_max: usize,
    opts: &SubdivisionOptions,
) -> Result<DeltaArcOutcome, ArcError> {
    let l0 = arc.length();
    if l0 > delta {
        return Ok(DeltaArcOutcome::Escaped { n: 0, length: l0 });
    }
    let mut params = arc.params.clone();
    let mut nodes = arc.nodes.clone();
    for k in 1..=n_max {
        nodes = nodes.iter().map(|p| f.lift(*p)).collect();
        if refine(f, arc, k, &mut params, &mut nodes, opts).is_err() {
            return Err(ArcError::SubdivisionBlowup {
                budget: opts.node_budget,
                iterate: k,
                partial: Box::new(ArcGrowthSeries::from_lengths(vec![l0])),
            });
        }
        let l = polyline_length(&nodes);
        if l > delta {
            return Ok(DeltaArcOutcome::Escaped { n: k, length: l });
        }
    }
    Ok(DeltaArcOutcome::Bounded { n_max })
}

/// Unit-speed curve tangent to E, parameterised by arclength in [−α, α].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StableCurve {
    pub base: TorusPoint,
    pub halfwidth: f64,
    /// Arclength parameter of each node, increasing from −α to α.
    pub params: Vec<f64>,
    pub nodes: Vec<LiftPoint>,
    /// Set when the E field could not be oriented continuously; the curve
    /// is truncated at the flip.
    pub orientation_flip: bool,
}

impl StableCurve {
    pub fn length(&self) -> f64 {
        polyline_length(&self.nodes)
    }

    pub fn to_columns(&self) -> String {
        let mut out = String::from("# s x y\n");
        for (t, p) in self.params.iter().zip(&self.nodes) {
            let _ = writeln!(out, "{t:.15e} {:.15e} {:.15e}", p.x, p.y);
        }
        out
    }
}

/// A direction field source for stable curves.
pub trait LineField: Sync {
    fn direction(&self, p: TorusPoint) -> Option<TangentVector>;
}

/// E by the singular limit of `Df^N`.
pub struct SingularE<'a, M: TorusMap + ?Sized> {
    pub map: &'a M,
    pub horizon: usize,
}

impl<M: TorusMap + ?Sized> LineField for SingularE<'_, M> {
    fn direction(&self, p: TorusPoint) -> Option<TangentVector> {
        singular_e(self.map, p, self.horizon).ok()
    }
}

/// Below this |cos| between successive field evaluations the orientation is ambiguous.
const FLIP_COS: f64 = 0.5;

fn oriented(field: &dyn LineField, p: LiftPoint, reference: TangentVector) -> Option<TangentVector> {
    let d = field.direction(p.project())?.normalized()?;
    let c = d.dot(reference);
    if c.abs() < FLIP_COS {
        return None;
    }
    Some(if c < 0.0 { -d } else { d })
}

fn rk4_side(field: &dyn LineField, x: LiftPoint, initial: TangentVector, alpha: f64, step: f64) -> (Vec<LiftPoint>, Vec<f64>, bool) {
    let mut pts = vec![x];
    let mut ss = vec![0.0];
    let mut p = x;
    let mut dir = initial;
    let mut s = 0.0;
    while s < alpha - 1e-15 {
        let h = step.min(alpha - s);
        let k1 = match oriented(field, p, dir) {
            Some(v) => v,
            None => return (pts, ss, true),
        };
        let k2 = oriented(field, p.offset(k1 * (h / 2.0)), k1);
        let k3 = k2.and_then(|k2| oriented(field, p.offset(k2 * (h / 2.0)), k1));
        let k4 = k3.and_then(|k3| oriented(field, p.offset(k3 * h), k1));
        let (Some(k2), Some(k3), Some(k4)) = (k2, k3, k4) else {
            return (pts, ss, true);
        };
        let incr = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        p = p.offset(incr);
        s += h;
        dir = k1;
        pts.push(p);
        ss.push(s);
    }
    (pts, ss, false)
}

/// Integrates `ξ' = E(ξ)`, `‖ξ'‖ = 1` through `x` to arclength `±α` by RK4.
pub fn integrate_stable_curve(field: &dyn LineField, x: TorusPoint, alpha: f64, step: f64) -> Result<StableCurve, ArcError> {
    let e0 = field
        .direction(x)
        .and_then(|d| d.normalized())
        .ok_or(ArcError::NoStableDirection(x))?;
    // Fix a global sign: first nonzero component positive.
    let e0 = if e0.u < 0.0 || (e0.u == 0.0 && e0.v < 0.0) { -e0 } else { e0 };
    let base = x.lift();
    let (fwd, sf, flip_f) = rk4_side(field, base, e0, alpha, step);
    let (bwd, sb, flip_b) = rk4_side(field, base, -e0, alpha, step);
    let mut nodes: Vec<LiftPoint> = bwd.iter().skip(1).rev().copied().collect();
    let mut params: Vec<f64> = sb.iter().skip(1).rev().map(|s| -s).collect();
    nodes.extend(fwd);
    params.extend(sf);
    Ok(StableCurve {
        base: x,
        halfwidth: alpha,
        params,
        nodes,
        orientation_flip: flip_f || flip_b,
    })
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: LiftPoint, a: LiftPoint, b: LiftPoint) -> f64 {
    let ab = b.minus(&a);
    let ap = p.minus(&a);
    let l2 = ab.dot(ab);
    let t = if l2 == 0.0 { 0.0 } else { (ap.dot(ab) / l2).clamp(0.0, 1.0) };
    (ap - ab * t).norm()
}

/// Symmetric Hausdorff distance between two polylines (nodes against segments).
pub fn hausdorff(a: &[LiftPoint], b: &[LiftPoint]) -> f64 {
    let one = |x: &[LiftPoint], y: &[LiftPoint]| {
        x.iter()
            .map(|p| {
                y.windows(2)
                    .map(|w| point_segment_distance(*p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionSeries {
    /// Polyline length of `f^j ∘ ξ`, j = 0..n.
    pub lengths: Vec<f64>,
    /// `lengths[j+1] / lengths[j]`.
    pub ratios: Vec<f64>,
    /// Geometric-mean rate from the least-squares slope.
    pub rate: f64,
    /// Smallest per-segment length ratio at the first step.
    pub min_segment_ratio: f64,
}

pub fn stable_contraction_check<M: TorusMap + ?Sized>(f: &M, curve: &StableCurve, n: usize) -> ContractionSeries {
    let mut nodes = curve.nodes.clone();
    let mut lengths = vec![polyline_length(&nodes)];
    let mut min_segment_ratio = f64::INFINITY;
    for j in 0..n {
        let next: Vec<LiftPoint> = nodes.iter().map(|p| f.lift(*p)).collect();
        if j == 0 {
            for (w0, w1) in nodes.windows(2).zip(next.windows(2)) {
                let l0 = w0[1].minus(&w0[0]).norm();
                if l0 > 0.0 {
                    min_segment_ratio = min_segment_ratio.min(w1[1].minus(&w1[0]).norm() / l0);
                }
            }
        }
        nodes = next;
        lengths.push(polyline_length(&nodes));
    }
    let ratios = lengths.windows(2).map(|w| w[1] / w[0]).collect();
    let logs: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
    ContractionSeries {
        rate: least_squares_slope(&logs).exp(),
        lengths,
        ratios,
        min_segment_ratio,
    }
}

/// Region swept by stable fibres of halfwidth ν through points of a u-arc.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NuBox {
    pub center: UArc,
    pub bottom: StableCurve,
    pub top: StableCurve,
    /// Fibres through interior nodes of the centre arc.
    pub fibers: Vec<StableCurve>,
    pub nu: f64,
}

/// Intersection point of the closed segments `[a, b]` and `[c, d]`, if any.
fn segment_intersection(a: LiftPoint, b: LiftPoint, c: LiftPoint, d: LiftPoint) -> Option<LiftPoint> {
    let r = b.minus(&a);
    let s = d.minus(&c);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let ac = c.minus(&a);
    let t = ac.cross(s) / denom;
    let u = ac.cross(r) / denom;
    const SLOP: f64 = 1e-12;
    if (-SLOP..=1.0 + SLOP).contains(&t) && (-SLOP..=1.0 + SLOP).contains(&u) {
        Some(a.offset(r * t))
    } else {
        None
    }
}

/// Number of distinct intersection points of two polylines. Touching at a
/// shared vertex counts once.
pub fn crossing_count(a: &[LiftPoint], b: &[LiftPoint]) -> usize {
    let mut hits: Vec<LiftPoint> = Vec::new();
    for s in a.windows(2) {
        for t in b.windows(2) {
            if let Some(p) = segment_intersection(s[0], s[1], t[0], t[1]) {
                if !hits.iter().any(|q| q.minus(&p).norm() < 1e-10) {
                    hits.push(p);
                }
            }
        }
    }
    hits.len()
}

impl NuBox {
    /// Crossing count of every fibre (bottom, interior, top) with the centre arc.
    pub fn fiber_crossings(&self) -> Vec<usize> {
        std::iter::once(&self.bottom)
            .chain(self.fibers.iter())
            .chain(std::iter::once(&self.top))
            .map(|s| {
                crossing_count(&s.nodes, &self.center.nodes)
            })
            .collect()
    }
}

fn curve_at(field: &dyn LineField, p: LiftPoint, nu: f64, step: f64) -> Result<StableCurve, ArcError> {
    let mut c = integrate_stable_curve(field, p.project(), nu, step)?;
    // Translate into the lift sheet of p.
    let shift = p.minus(&p.project().lift());
    for q in c.nodes.iter_mut() {
        *q = q.offset(shift);
    }
    Ok(c)
}

/// Fibres of arclength ν on each side through the endpoints of `arc` and
/// through `interior` evenly spaced interior nodes.
pub fn build_nu_box(field: &dyn LineField, arc: &UArc, nu: f64, step: f64, interior: usize) -> Result<NuBox, ArcError> {
    let bottom = curve_at(field, arc.start(), nu, step)?;
    let top = curve_at(field, arc.end(), nu, step)?;
    let len = arc.nodes.len();
    let mut fibers = Vec::with_capacity(interior);
    for k in 1..=interior {
        let idx = k * (len - 1) / (interior + 1);
        if idx == 0 || idx == len - 1 {
            continue;
        }
        fibers.push(curve_at(field, arc.nodes[idx], nu, step)?);
    }
    Ok(NuBox {
        center: arc.clone(),
        bottom,
        top,
        fibers,
        nu,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub point: TorusPoint,
    pub period: usize,
    /// `‖f^l(p) − p‖` on the torus.
    pub residual: f64,
    /// `d(f^j(p), f^j(x))` for j = 0..l.
    pub shadowing: Vec<f64>,
    /// Finite-time contraction rate of E along the orbit of x.
    pub e_rate: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PeriodicSearch {
    pub nu: f64,
    /// Minimal period N.
    pub min_period: usize,
    pub max_period: usize,
    pub horizon: usize,
    /// Horizon for the ‖Df^j|E‖ ≤ Cλ^j precondition.
    pub contraction_horizon: usize,
}

impl Default for PeriodicSearch {
    fn default() -> Self {
        Self {
            nu: 0.05,
            min_period: 1,
            max_period: 12,
            horizon: crate::splitting::DEFAULT_HORIZON,
            contraction_horizon: 20,
        }
    }
}

/// Rate `‖Df^J|E(x)‖^{1/J}` along the forward orbit.
pub fn e_contraction_rate<M: TorusMap + ?Sized>(f: &M, x: TorusPoint, horizon: usize, j: usize) -> Option<f64> {
    let e = singular_e(f, x, horizon).ok()?;
    let prod = derivative_power(f, x, j);
    Some((prod.log_norm_applied(e) / j as f64).exp())
}

fn lift_power<M: TorusMap + ?Sized>(f: &M, p: LiftPoint, l: usize) -> LiftPoint {
    lift_iterate(f, p, l)
}

/// Periodic point shadowing a near-return of `x`.
///
/// Requires E to contract along the orbit of `x`. Finds the first
/// `l ∈ [N, max_period]` with `d(f^l x, x) < ν/2`, then in the chart
/// `x + s·u + t·e` (e = E(x), u = e^⊥) alternates a bisection in `s`
/// across the expanding strip with the contracting update of `t`, and
/// polishes with Newton on `f̃^l(p) − p − k`.
pub fn find_periodic_point<M: TorusMap + ?Sized>(f: &M, x: TorusPoint, search: &PeriodicSearch) -> Result<PeriodicPoint, ArcError> {
    let rate = e_contraction_rate(f, x, search.horizon, search.contraction_horizon)
        .ok_or_else(|| ArcError::ContractionStall("E undefined at x".into()))?;
    if rate >= 1.0 - 1e-3 {
        return Err(ArcError::ContractionStall(format!(
            "‖Df^j|E‖^(1/j) = {rate:.6} at j = {}, no contraction along E",
            search.contraction_horizon
        )));
    }
    let nu = search.nu;
    let xl = x.lift();
    let mut y = xl;
    let mut found = None;
    for l in 1..=search.max_period {
        y = f.lift(y);
        if l >= search.min_period.max(1) && y.project().distance(&x) < nu / 2.0 {
            found = Some(l);
            break;
        }
    }
    let l = found.ok_or(ArcError::NoReturnFound {
        min_period: search.min_period,
        max_period: search.max_period,
    })?;
    let img = lift_power(f, xl, l);
    // Lattice translate of the return.
    let k = TangentVector::new((img.x - xl.x).round(), (img.y - xl.y).round());
    let e = singular_e(f, x, search.horizon).map_err(|_| ArcError::ContractionStall("E undefined".into()))?;
    let e = e.normalized().expect("unit E");
    let u = e.perp();
    let chart = |s: f64, t: f64| xl.offset(u * s + e * t);
    // G(s, t): chart coordinates of f̃^l(chart(s,t)) − k.
    let g = |s: f64, t: f64| {
        let q = lift_power(f, chart(s, t), l).minus(&xl) - k;
        (q.dot(u), q.dot(e))
    };
    let mut t = 0.0;
    let mut s = 0.0;
    let mut prev_width = f64::INFINITY;
    for _ in 0..200 {
        let h = |s: f64| g(s, t).0 - s;
        let (mut lo, mut hi) = (-nu, nu);
        let (hlo, hhi) = (h(lo), h(hi));
        if hlo.signum() == hhi.signum() {
            return Err(ArcError::ContractionStall(format!(
                "expanding strip does not cross the box at t = {t:.3e} (period {l})"
            )));
        }
        let sign_lo = hlo > 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (h(mid) > 0.0) == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        s = 0.5 * (lo + hi);
        let t_new = g(s, t).1;
        let width = (t_new - t).abs();
        if width > prev_width * 0.999 && width > 1e-14 {
            return Err(ArcError::ContractionStall(format!(
                "contracting strip stopped shrinking at width {width:.3e}"
            )));
        }
        prev_width = width;
        t = t_new;
        if width <= 1e-16 {
            break;
        }
    }
    // Newton polish on the lift.
    let mut p = chart(s, t);
    for _ in 0..5 {
        let r = lift_power(f, p, l).minus(&p) - k;
        if r.norm() < 1e-15 {
            break;
        }
        let mut prod = ScaledMatrix::identity();
        let mut q = p;
        for _ in 0..l {
            prod.left_multiply(f.jacobian(q));
            q = f.lift(q);
        }
        let Some(jm) = prod.to_matrix() else { break };
        let Some(inv) = (jm - crate::linalg::Mat2::IDENTITY).inverse() else {
            break;
        };
        p = p.offset(-inv.apply(r));
    }
    let point = p.project();
    let mut orbit_p = point;
    for _ in 0..l {
        orbit_p = f.evaluate(orbit_p);
    }
    let residual = orbit_p.distance(&point);
    let mut shadowing = Vec::with_capacity(l);
    let (mut a, mut b) = (point, x);
    for _ in 0..l {
        shadowing.push(a.distance(&b));
        a = f.evaluate(a);
        b = f.evaluate(b);
    }
    if shadowing.iter().any(|d| *d >= nu) {
        return Err(ArcError::ContractionStall(format!(
            "periodic point found but shadowing distance {:.3e} ≥ ν",
            shadowing.iter().copied().fold(0.0, f64::max)
        )));
    }
    Ok(PeriodicPoint {
        point,
        period: l,
        residual,
        shadowing,
        e_rate: rate,
    })
}

/// Distinct solutions of `f^l(p) = p` from Newton iteration on a grid of
/// seeds, deduplicated at `1e-7` and sorted.
pub fn periodic_census<M: TorusMap + ?Sized>(f: &M, l: usize, resolution: usize) -> Vec<TorusPoint> {
    use rayon::prelude::*;
    let h = 1.0 / resolution as f64;
    let mut roots: Vec<TorusPoint> = (0..resolution * resolution)
        .into_par_iter()
        .filter_map(|idx| {
            let mut p = LiftPoint::new((idx % resolution) as f64 * h + 0.5 * h, (idx / resolution) as f64 * h + 0.5 * h);
            let img = lift_power(f, p, l);
            let k = TangentVector::new((img.x - p.x).round(), (img.y - p.y).round());
            for _ in 0..50 {
                let r = lift_power(f, p, l).minus(&p) - k;
                if r.norm() < 1e-13 {
                    return Some(p.project());
                }
                let mut prod = ScaledMatrix::identity();
                let mut q = p;
                for _ in 0..l {
                    prod.left_multiply(f.jacobian(q));
                    q = f.lift(q);
                }
                let inv = (prod.to_matrix()? - crate::linalg::Mat2::IDENTITY).inverse()?;
                let step = inv.apply(r);
                if step.norm() > 0.5 {
                    return None;
                }
                p = p.offset(-step);
            }
            None
        })
        .collect();
    roots.sort_by(|a, b| a.x().total_cmp(&b.x()).then(a.y().total_cmp(&b.y())));
    let mut out: Vec<TorusPoint> = Vec::new();
    for r in roots {
        if !out.iter().any(|q| q.distance(&r) < 1e-7) {
            out.push(r);
        }
    }
    out
}

/// Brute-force oracle for linear maps: every `x` on the `(1/D)`-grid, with
/// `D = det(A^l − I)`, such that `(A^l − I)x` is integral. Empty when `D = 0`.
pub fn lattice_periodic_points(linear: LinearPart, l: u32) -> Vec<TorusPoint> {
    let [[a, b], [c, d]] = linear.pow(l).rows();
    let (a, d) = (a - 1, d - 1);
    let det = (a * d - b * c).abs();
    let mut out = Vec::new();
    for i in 0..det {
        for j in 0..det {
            if (a * i + b * j) % det == 0 && (c * i + d * j) % det == 0 {
                out.push(TorusPoint::new(i as f64 / det as f64, j as f64 / det as f64));
            }
        }
    }
    out
}
