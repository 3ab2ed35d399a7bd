//! Torus endomorphisms of the form `f̃ = A + φ` on the universal cover, with
//! `A` an integer matrix and `φ` a finite Z²-periodic trigonometric sum.
//!
//! Derivatives are analytic. The flat metric of R² is used for every norm
//! and angle in the crate.

use crate::linalg::{line_angle_between, Mat2, ScaledMatrix, TangentVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

pub use crate::linalg::TangentVector as Tangent;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map file parse error: {0}")]
    Parse(String),
    #[error("invalid map definition: {0}")]
    Invalid(String),
    #[error("unknown canonical map `{0}`")]
    UnknownCanonical(String),
}

/// A point of T² = R²/Z², both coordinates in [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

fn reduce_unit(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: reduce_unit(x),
            y: reduce_unit(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Canonical lift in [0, 1)².
    pub fn lift(&self) -> LiftPoint {
        LiftPoint::new(self.x, self.y)
    }

    /// Shortest displacement `other − self` on the torus, each component in [-½, ½].
    pub fn displacement_to(&self, other: &TorusPoint) -> TangentVector {
        wrap_displacement(TangentVector::new(other.x - self.x, other.y - self.y))
    }

    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.displacement_to(other).norm()
    }

    pub fn translated(&self, w: TangentVector) -> TorusPoint {
        TorusPoint::new(self.x + w.u, self.y + w.v)
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.12}, {:.12})", self.x, self.y)
    }
}

/// Reduces a displacement to its shortest representative modulo Z².
pub fn wrap_displacement(w: TangentVector) -> TangentVector {
    TangentVector::new(w.u - w.u.round(), w.v - w.v.round())
}

/// Torus distance.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> f64 {
    a.distance(b)
}

/// A point of the universal cover R².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftPoint {
    pub x: f64,
    pub y: f64,
}

impl LiftPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn project(&self) -> TorusPoint {
        TorusPoint::new(self.x, self.y)
    }

    pub fn offset(&self, w: TangentVector) -> LiftPoint {
        LiftPoint::new(self.x + w.u, self.y + w.v)
    }

    pub fn minus(&self, other: &LiftPoint) -> TangentVector {
        TangentVector::new(self.x - other.x, self.y - other.y)
    }

    /// Representative of this point's torus class in [0, 1)².
    pub fn reduced(&self) -> LiftPoint {
        self.project().lift()
    }
}

/// Integer matrix `A` of the lift; it preserves Z² and is the homology action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinearPart {
    pub a11: i64,
    pub a12: i64,
    pub a21: i64,
    pub a22: i64,
}

impl LinearPart {
    pub const fn new(a11: i64, a12: i64, a21: i64, a22: i64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub const IDENTITY: LinearPart = LinearPart::new(1, 0, 0, 1);

    pub fn det(&self) -> i64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn degree(&self) -> u64 {
        self.det().unsigned_abs()
    }

    pub fn as_mat2(&self) -> Mat2 {
        Mat2::new(
            self.a11 as f64,
            self.a12 as f64,
            self.a21 as f64,
            self.a22 as f64,
        )
    }

    pub fn rows(&self) -> [[i64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn from_rows(r: [[i64; 2]; 2]) -> Self {
        Self::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a11 as f64 * x + self.a12 as f64 * y,
            self.a21 as f64 * x + self.a22 as f64 * y,
        )
    }

    pub fn mul(&self, o: &LinearPart) -> LinearPart {
        LinearPart::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn pow(&self, n: u32) -> LinearPart {
        (0..n).fold(LinearPart::IDENTITY, |acc, _| self.mul(&acc))
    }
}

/// Which coordinate of the lift a perturbation term is added to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coord {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sin,
    Cos,
}

/// One term `amplitude · mode(2π(p x + q y) + phase)` added to `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub target: Coord,
    pub amplitude: f64,
    pub freq: (i64, i64),
    pub phase: f64,
    pub mode: Mode,
}

impl TrigTerm {
    pub fn sin(target: Coord, amplitude: f64, freq: (i64, i64)) -> Self {
        Self {
            target,
            amplitude,
            freq,
            phase: 0.0,
            mode: Mode::Sin,
        }
    }

    fn argument(&self, p: &LiftPoint) -> f64 {
        TAU * (self.freq.0 as f64 * p.x + self.freq.1 as f64 * p.y) + self.phase
    }

    fn value(&self, p: &LiftPoint) -> f64 {
        let t = self.argument(p);
        match self.mode {
            Mode::Sin => self.amplitude * t.sin(),
            Mode::Cos => self.amplitude * t.cos(),
        }
    }

    /// Gradient of the term with respect to (x, y).
    fn gradient(&self, p: &LiftPoint) -> (f64, f64) {
        let t = self.argument(p);
        let dt = match self.mode {
            Mode::Sin => self.amplitude * t.cos(),
            Mode::Cos => -self.amplitude * t.sin(),
        };
        (
            dt * TAU * self.freq.0 as f64,
            dt * TAU * self.freq.1 as f64,
        )
    }
}

/// A self-map of T² together with a lift to R².
///
/// Implementors provide the lift and its Jacobian; everything else in the
/// crate is written against this trait so that surgered maps and the
/// trigonometric family are interchangeable.
pub trait TorusMap: Send + Sync {
    fn linear_part(&self) -> LinearPart;

    /// The lift `f̃`, with no reduction mod 1.
    fn lift(&self, p: LiftPoint) -> LiftPoint;

    /// Analytic Jacobian of the lift at `p`.
    fn jacobian(&self, p: LiftPoint) -> Mat2;

    fn label(&self) -> String;

    fn evaluate(&self, p: TorusPoint) -> TorusPoint {
        self.lift(p.lift()).project()
    }

    fn derivative(&self, p: TorusPoint) -> DerivativeMatrix {
        DerivativeMatrix {
            matrix: self.jacobian(p.lift()),
            base: p,
        }
    }
}

impl<T: TorusMap + ?Sized> TorusMap for &T {
    fn linear_part(&self) -> LinearPart {
        (**self).linear_part()
    }
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        (**self).lift(p)
    }
    fn jacobian(&self, p: LiftPoint) -> Mat2 {
        (**self).jacobian(p)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// `f̃ = A + φ` with `φ` a finite trigonometric sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEndomorphism {
    pub name: String,
    pub linear: LinearPart,
    pub perturbation: Vec<TrigTerm>,
}

impl SurfaceEndomorphism {
    pub fn new(name: impl Into<String>, linear: LinearPart, perturbation: Vec<TrigTerm>) -> Self {
        Self {
            name: name.into(),
            linear,
            perturbation,
        }
    }

    pub fn linear(name: impl Into<String>, linear: LinearPart) -> Self {
        Self::new(name, linear, Vec::new())
    }

    pub fn with_term(mut self, term: TrigTerm) -> Self {
        self.perturbation.push(term);
        self
    }

    /// Largest |φ| component bound (sum of amplitudes per coordinate).
    pub fn perturbation_bound(&self) -> f64 {
        let (mut bx, mut by) = (0.0, 0.0);
        for t in &self.perturbation {
            match t.target {
                Coord::X => bx += t.amplitude.abs(),
                Coord::Y => by += t.amplitude.abs(),
            }
        }
        f64::hypot(bx, by)
    }

    /// Stable content hash of the definition.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("map serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Parses the structured-text map definition.
    pub fn from_toml_str(text: &str) -> Result<Self, MapError> {
        let file: MapFile = toml::from_str(text).map_err(|e| MapError::Parse(e.to_string()))?;
        file.into_map()
    }

    pub fn to_toml_string(&self) -> String {
        let file = MapFile {
            name: Some(self.name.clone()),
            linear: self.linear.rows(),
            term: self
                .perturbation
                .iter()
                .map(|t| TermBlock {
                    coord: match t.target {
                        Coord::X => 1,
                        Coord::Y => 2,
                    },
                    amplitude: t.amplitude,
                    freq: [t.freq.0, t.freq.1],
                    phase: t.phase,
                    mode: t.mode,
                })
                .collect(),
        };
        toml::to_string(&file).expect("map file serialises")
    }
}

impl TorusMap for SurfaceEndomorphism {
    fn linear_part(&self) -> LinearPart {
        self.linear
    }

    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let (mut x, mut y) = self.linear.apply(p.x, p.y);
        if !self.perturbation.is_empty() {
            // φ is periodic; evaluating on the reduced point keeps the trig
            // arguments small when lift coordinates grow large.
            let r = p.reduced();
            for t in &self.perturbation {
                let v = t.value(&r);
                match t.target {
                    Coord::X => x += v,
                    Coord::Y => y += v,
                }
            }
        }
        LiftPoint::new(x, y)
    }

    fn jacobian(&self, p: LiftPoint) -> Mat2 {
        let mut m = self.linear.as_mat2();
        let r = p.reduced();
        for t in &self.perturbation {
            let (gx, gy) = t.gradient(&r);
            match t.target {
                Coord::X => {
                    m.a += gx;
                    m.b += gy;
                }
                Coord::Y => {
                    m.c += gx;
                    m.d += gy;
                }
            }
        }
        m
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TermBlock {
    coord: u8,
    amplitude: f64,
    freq: [i64; 2],
    #[serde(default)]
    phase: f64,
    mode: Mode,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    #[serde(default)]
    name: Option<String>,
    linear: [[i64; 2]; 2],
    #[serde(default)]
    term: Vec<TermBlock>,
}

impl MapFile {
    fn into_map(self) -> Result<SurfaceEndomorphism, MapError> {
        let mut terms = Vec::with_capacity(self.term.len());
        for (i, t) in self.term.into_iter().enumerate() {
            let target = match t.coord {
                1 => Coord::X,
                2 => Coord::Y,
                c => {
                    return Err(MapError::Invalid(format!(
                        "term {i}: coord must be 1 or 2, got {c}"
                    )))
                }
            };
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(MapError::Invalid(format!("term {i}: non-finite value")));
            }
            terms.push(TrigTerm {
                target,
                amplitude: t.amplitude,
                freq: (t.freq[0], t.freq[1]),
                phase: t.phase,
                mode: t.mode,
            });
        }
        Ok(SurfaceEndomorphism::new(
            self.name.unwrap_or_else(|| "unnamed".to_string()),
            LinearPart::from_rows(self.linear),
            terms,
        ))
    }
}

/// Df at a base point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DerivativeMatrix {
    pub matrix: Mat2,
    pub base: TorusPoint,
}

/// Chain-rule product `Df_{f^{n-1}(p)} ⋯ Df_p` along the forward orbit.
pub fn derivative_power<M: TorusMap + ?Sized>(f: &M, p: TorusPoint, n: usize) -> ScaledMatrix {
    let mut prod = ScaledMatrix::identity();
    let mut x = p;
    for _ in 0..n {
        prod.left_multiply(f.derivative(x).matrix);
        x = f.evaluate(x);
    }
    prod
}

/// Product of derivatives along an explicit point sequence, e.g. a chosen
/// backward branch: `Df_{points[k-1]} ⋯ Df_{points[0]}`.
pub fn derivative_along<M: TorusMap + ?Sized>(f: &M, points: &[TorusPoint]) -> ScaledMatrix {
    let mut prod = ScaledMatrix::identity();
    for x in points {
        prod.left_multiply(f.derivative(*x).matrix);
    }
    prod
}

/// Default rank threshold: 1e-9 times the largest entry.
pub const DEFAULT_RANK_RTOL: f64 = 1e-9;

/// Numerical kernel dimension of a (scaled) matrix product.
///
/// With `tolerance = None` singular values are compared against
/// `1e-9 · (largest entry)`; otherwise against the given absolute value.
pub fn kernel_dimension_of(prod: &ScaledMatrix, tolerance: Option<f64>) -> u8 {
    if prod.is_zero() {
        return 2;
    }
    let (log_max, log_min, _) = prod.log_singular_values();
    let log_thr = match tolerance {
        Some(t) if t > 0.0 => t.ln(),
        Some(_) => f64::NEG_INFINITY,
        None => DEFAULT_RANK_RTOL.ln() + prod.log_max_entry(),
    };
    let mut dim = 0;
    if log_min <= log_thr {
        dim += 1;
    }
    if log_max <= log_thr {
        dim += 1;
    }
    dim
}

pub fn kernel_dimension<M: TorusMap + ?Sized>(
    f: &M,
    p: TorusPoint,
    n: usize,
    tolerance: Option<f64>,
) -> u8 {
    assert!(n >= 1, "kernel_dimension needs n ≥ 1");
    kernel_dimension_of(&derivative_power(f, p, n), tolerance)
}

/// A refined point of the critical set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CriticalSample {
    pub point: TorusPoint,
    pub det: f64,
    pub kernel: Option<TangentVector>,
    pub kernel_dim: u8,
}

/// Sampled critical set with the tolerances used to build it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalSet {
    pub samples: Vec<CriticalSample>,
    pub resolution: usize,
    pub det_tolerance: f64,
}

impl CriticalSet {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Estimated distance from `p` to Cr(f).
    ///
    /// Projects `p` onto {det Df = 0} with a few Newton steps on the
    /// determinant; falls back to the nearest stored sample when the
    /// projection does not settle. Infinite when no samples exist.
    pub fn distance<M: TorusMap + ?Sized>(&self, f: &M, p: TorusPoint) -> f64 {
        if self.samples.is_empty() {
            return f64::INFINITY;
        }
        let nearest = self
            .samples
            .iter()
            .map(|s| s.point.distance(&p))
            .fold(f64::INFINITY, f64::min);
        match project_to_critical(f, p, self.det_tolerance) {
            Some(q) => q.distance(&p).min(nearest),
            None => nearest,
        }
    }

    pub fn contains<M: TorusMap + ?Sized>(&self, f: &M, p: TorusPoint, margin: f64) -> bool {
        self.distance(f, p) <= margin
    }
}

fn det_at<M: TorusMap + ?Sized>(f: &M, p: LiftPoint) -> f64 {
    f.jacobian(p).det()
}

fn det_gradient<M: TorusMap + ?Sized>(f: &M, p: LiftPoint) -> TangentVector {
    let h = 1e-6;
    let gx = (det_at(f, LiftPoint::new(p.x + h, p.y)) - det_at(f, LiftPoint::new(p.x - h, p.y)))
        / (2.0 * h);
    let gy = (det_at(f, LiftPoint::new(p.x, p.y + h)) - det_at(f, LiftPoint::new(p.x, p.y - h)))
        / (2.0 * h);
    TangentVector::new(gx, gy)
}

/// Newton projection onto the zero set of det Df.
pub fn project_to_critical<M: TorusMap + ?Sized>(
    f: &M,
    p: TorusPoint,
    det_tolerance: f64,
) -> Option<TorusPoint> {
    let mut q = p.lift();
    for _ in 0..20 {
        let d = det_at(f, q);
        if d.abs() <= det_tolerance.min(1e-13) {
            return Some(q.project());
        }
        let g = det_gradient(f, q);
        let g2 = g.dot(g);
        if g2 < 1e-20 {
            return None;
        }
        let step = g * (-d / g2);
        if step.norm() > 0.05 {
            return None;
        }
        q = q.offset(step);
    }
    let d = det_at(f, q);
    (d.abs() <= det_tolerance).then(|| q.project())
}

fn critical_sample<M: TorusMap + ?Sized>(f: &M, p: TorusPoint, det_tol: f64) -> CriticalSample {
    let m = f.derivative(p).matrix;
    let svd = m.svd();
    let prod = ScaledMatrix::from_matrix(m);
    let thr = det_tol.max(DEFAULT_RANK_RTOL * m.max_abs_entry());
    let kernel_dim = if svd.sigma_max <= thr {
        2
    } else {
        1u8.max(kernel_dimension_of(&prod, Some(thr)))
    };
    CriticalSample {
        point: p,
        det: m.det(),
        kernel: (kernel_dim == 1).then_some(svd.v_min),
        kernel_dim,
    }
}

fn bisect_det<M: TorusMap + ?Sized>(
    f: &M,
    a: LiftPoint,
    b: LiftPoint,
    det_tol: f64,
) -> Option<LiftPoint> {
    let (mut lo, mut hi) = (a, b);
    let mut dlo = det_at(f, lo);
    for _ in 0..200 {
        let mid = LiftPoint::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
        let dm = det_at(f, mid);
        if dm.abs() <= det_tol {
            return Some(mid);
        }
        if (dm > 0.0) == (dlo > 0.0) {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
        if lo.minus(&hi).norm() < 1e-17 {
            break;
        }
    }
    let mid = LiftPoint::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
    (det_at(f, mid).abs() <= det_tol).then_some(mid)
}

/// Samples Cr(f) on a `resolution × resolution` grid.
///
/// Every grid edge along which det Df changes sign is bisected until
/// |det| ≤ `det_tolerance`; nodes already below the tolerance are kept
/// directly. An empty list means no critical points were detected.
pub fn locate_critical_set<M: TorusMap + ?Sized>(
    f: &M,
    resolution: usize,
    det_tolerance: f64,
) -> CriticalSet {
    assert!(resolution >= 16, "critical-set grid resolution must be ≥ 16");
    let h = 1.0 / resolution as f64;
    let node = |i: usize, j: usize| LiftPoint::new(i as f64 * h, j as f64 * h);
    let dets: Vec<f64> = (0..resolution * resolution)
        .map(|k| det_at(f, node(k % resolution, k / resolution)))
        .collect();
    let det_of = |i: usize, j: usize| dets[(j % resolution) * resolution + (i % resolution)];
    let mut found: Vec<LiftPoint> = Vec::new();
    for j in 0..resolution {
        for i in 0..resolution {
            let d0 = det_of(i, j);
            if d0.abs() <= det_tolerance {
                found.push(node(i, j));
                continue;
            }
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                let d1 = det_of(i + di, j + dj);
                if d1.abs() > det_tolerance && (d0 > 0.0) != (d1 > 0.0) {
                    if let Some(p) = bisect_det(f, node(i, j), node(i + di, j + dj), det_tolerance)
                    {
                        found.push(p);
                    }
                }
            }
        }
    }
    let mut samples: Vec<CriticalSample> = Vec::with_capacity(found.len());
    for p in found {
        let tp = p.project();
        if samples.iter().rev().take(8).any(|s| s.point.distance(&tp) < 1e-9) {
            continue;
        }
        samples.push(critical_sample(f, tp, det_tolerance));
    }
    CriticalSet {
        samples,
        resolution,
        det_tolerance,
    }
}

/// Checks `f̃(p + v) − f̃(p) = A v` for the basis lattice vectors and (1,1).
pub fn lattice_equivariance_defect<M: TorusMap + ?Sized>(f: &M, p: LiftPoint) -> f64 {
    let a = f.linear_part();
    let base = f.lift(p);
    [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        .into_iter()
        .map(|(vx, vy)| {
            let q = f.lift(LiftPoint::new(p.x + vx, p.y + vy));
            let (ex, ey) = a.apply(vx, vy);
            ((q.x - base.x) - ex).abs().max(((q.y - base.y) - ey).abs())
        })
        .fold(0.0, f64::max)
}

/// Angle between a critical sample's kernel and a reference direction.
pub fn kernel_angle(sample: &CriticalSample, reference: TangentVector) -> Option<f64> {
    sample.kernel.map(|k| line_angle_between(k, reference))
}

/// The shipped example maps.
pub mod canonical {
    use super::*;
    use std::f64::consts::PI;

    /// Names accepted by [`by_name`].
    pub const NAMES: [&str; 5] = ["cat", "exp", "diag", "shearcrit", "idhom"];

    /// Arnold's cat map `[[2,1],[1,1]]`.
    pub fn cat() -> SurfaceEndomorphism {
        SurfaceEndomorphism::linear("cat", LinearPart::new(2, 1, 1, 1))
    }

    /// Expanding linear map `[[3,1],[1,2]]` of degree 5.
    pub fn exp() -> SurfaceEndomorphism {
        SurfaceEndomorphism::linear("exp", LinearPart::new(3, 1, 1, 2))
    }

    /// `diag(2, 1)`: doubling in x, identity in y.
    pub fn diag() -> SurfaceEndomorphism {
        SurfaceEndomorphism::linear("diag", LinearPart::new(2, 0, 0, 1))
    }

    /// `[[2,1],[0,2]]` plus `(3/2π) sin(2πy)` on the second coordinate;
    /// critical along the circles where `2 + 3 cos(2πy) = 0`.
    pub fn shearcrit() -> SurfaceEndomorphism {
        shearcrit_with_amplitude(3.0).renamed("shearcrit")
    }

    /// The shear family `[[2,1],[0,2]] + ((a/2π) sin 2πy)` on the second
    /// coordinate. Critical circles exist for `a > 2`.
    pub fn shearcrit_with_amplitude(a: f64) -> SurfaceEndomorphism {
        SurfaceEndomorphism::new(
            format!("shearcrit[a={a}]"),
            LinearPart::new(2, 1, 0, 2),
            vec![TrigTerm::sin(Coord::Y, a / (2.0 * PI), (0, 1))],
        )
    }

    /// Homotopic to the identity: `(x + 0.1 sin 2πy, y + 0.1 sin 2πx)`.
    pub fn idhom() -> SurfaceEndomorphism {
        SurfaceEndomorphism::new(
            "idhom",
            LinearPart::IDENTITY,
            vec![
                TrigTerm::sin(Coord::X, 0.1, (0, 1)),
                TrigTerm::sin(Coord::Y, 0.1, (1, 0)),
            ],
        )
    }

    pub fn by_name(name: &str) -> Result<SurfaceEndomorphism, MapError> {
        match name {
            "cat" => Ok(cat()),
            "exp" => Ok(exp()),
            "diag" => Ok(diag()),
            "shearcrit" => Ok(shearcrit()),
            "idhom" => Ok(idhom()),
            other => Err(MapError::UnknownCanonical(other.to_string())),
        }
    }

    /// `y*` with `cos(2π y*) = −2/a`, the lower critical circle of the shear family.
    pub fn shear_critical_height(a: f64) -> f64 {
        (-2.0 / a).acos() / (2.0 * PI)
    }
}

impl SurfaceEndomorphism {
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::canonical::*;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn evaluate_examples() {
        let cat = cat();
        assert_eq!(cat.evaluate(TorusPoint::new(0.0, 0.0)), TorusPoint::new(0.0, 0.0));
        let q = cat.evaluate(TorusPoint::new(0.5, 0.5));
        assert!((q.x() - 0.5).abs() < 1e-15 && q.y().abs() < 1e-15);

        let s = shearcrit();
        let q = s.evaluate(TorusPoint::new(0.0, 0.25));
        assert!((q.x() - 0.25).abs() < 1e-15);
        assert!((q.y() - (0.5 + 3.0 / (2.0 * PI))).abs() < 1e-15);
    }

    #[test]
    fn lift_examples() {
        let cat = cat();
        assert_eq!(cat.lift(LiftPoint::new(1.0, 0.0)), LiftPoint::new(2.0, 1.0));
        let d = cat
            .lift(LiftPoint::new(1.0, 1.0))
            .minus(&cat.lift(LiftPoint::new(0.0, 0.0)));
        assert_eq!((d.u, d.v), (3.0, 2.0));
        let q = idhom().lift(LiftPoint::new(0.25, 0.0));
        assert!((q.x - 0.25).abs() < 1e-15 && (q.y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let m = cat().derivative(TorusPoint::new(0.3, 0.7)).matrix;
        assert_eq!(m, Mat2::new(2.0, 1.0, 1.0, 1.0));
        let y = 0.2;
        let m = shearcrit().derivative(TorusPoint::new(0.4, y)).matrix;
        let expect = Mat2::new(2.0, 1.0, 0.0, 2.0 + 3.0 * (2.0 * PI * y).cos());
        assert!((m - expect).max_abs_entry() < 1e-14);
        let ys = shear_critical_height(3.0);
        assert!((ys - 0.36614).abs() < 1e-5);
        let m = shearcrit().derivative(TorusPoint::new(0.1, ys)).matrix;
        assert!(m.det().abs() < 1e-14);
    }

    #[test]
    fn derivative_power_examples() {
        let p = derivative_power(&cat(), TorusPoint::new(0.2, 0.9), 2);
        assert_eq!(p.to_matrix().unwrap(), Mat2::new(5.0, 3.0, 3.0, 2.0));
        let p = derivative_power(&diag(), TorusPoint::new(0.2, 0.9), 3);
        assert_eq!(p.to_matrix().unwrap(), Mat2::new(8.0, 0.0, 0.0, 1.0));
        let ys = shear_critical_height(3.0);
        let p = derivative_power(&shearcrit(), TorusPoint::new(0.0, ys), 1);
        assert_eq!(kernel_dimension_of(&p, None), 1);
        let (_, _, svd) = p.log_singular_values();
        let k = TangentVector::new(1.0, -2.0);
        assert!(line_angle_between(svd.v_min, k) < 1e-12);
    }

    #[test]
    fn kernel_dimension_examples() {
        assert_eq!(kernel_dimension(&cat(), TorusPoint::new(0.1, 0.2), 7, None), 0);
        let ys = shear_critical_height(3.0);
        assert_eq!(kernel_dimension(&shearcrit(), TorusPoint::new(0.3, ys), 1, None), 1);
        assert_eq!(kernel_dimension_of(&ScaledMatrix::from_matrix(Mat2::ZERO), None), 2);
    }

    #[test]
    fn critical_set_of_cat_is_empty() {
        assert!(locate_critical_set(&cat(), 32, 1e-12).is_empty());
    }

    #[test]
    fn critical_set_of_shearcrit() {
        let cs = locate_critical_set(&shearcrit(), 64, 1e-12);
        let ys = shear_critical_height(3.0);
        assert!(!cs.is_empty());
        for s in &cs.samples {
            let d = (s.point.y() - ys).abs().min((s.point.y() - (1.0 - ys)).abs());
            assert!(d < 1e-10, "sample off the critical circles: {}", s.point);
            assert_eq!(s.kernel_dim, 1);
            let k = s.kernel.unwrap();
            assert!(line_angle_between(k, TangentVector::new(1.0, -2.0)) < 1e-8);
            let img = s.point;
            let dk = shearcrit().derivative(img).matrix.apply(k).norm();
            assert!(dk <= 10.0 * 1e-12);
        }
        let low = cs.samples.iter().filter(|s| s.point.y() < 0.5).count();
        let high = cs.len() - low;
        assert!(low >= 64 && high >= 64);
    }

    #[test]
    fn map_file_roundtrip() {
        let text = r#"
name = "shear"
linear = [[2, 1], [0, 2]]

[[term]]
coord = 2
amplitude = 0.477
freq = [0, 1]
phase = 0.0
mode = "sin"
"#;
        let m = SurfaceEndomorphism::from_toml_str(text).unwrap();
        assert_eq!(m.linear, LinearPart::new(2, 1, 0, 2));
        assert_eq!(m.perturbation.len(), 1);
        let back = SurfaceEndomorphism::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(back, m);
        assert!(SurfaceEndomorphism::from_toml_str("linear = [[1, 0]]").is_err());
        let bad = "linear = [[1,0],[0,1]]\n[[term]]\ncoord = 3\namplitude = 1.0\nfreq = [0,1]\nmode = \"sin\"\n";
        assert!(matches!(
            SurfaceEndomorphism::from_toml_str(bad),
            Err(MapError::Invalid(_))
        ));
    }

    #[test]
    fn torus_point_reduction() {
        let p = TorusPoint::new(-1e-18, 1.0);
        assert!(p.x() >= 0.0 && p.x() < 1.0);
        assert_eq!(p.y(), 0.0);
        let a = TorusPoint::new(0.99, 0.5);
        let b = TorusPoint::new(0.01, 0.5);
        assert!((a.distance(&b) - 0.02).abs() < 1e-12);
    }
}
