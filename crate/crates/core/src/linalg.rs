//! Fixed-size 2×2 linear algebra used throughout the crate.
//!
//! Everything here is closed form: singular value decomposition via the
//! rotation/scale factorisation, eigenvalues via the characteristic
//! polynomial, and line angles via `atan2` so that nearly parallel lines
//! keep full relative precision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

/// A vector in the standard trivialisation of the tangent bundle of T².
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentVector {
    pub u: f64,
    pub v: f64,
}

impl TangentVector {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Unit vector at angle `theta` from the positive first axis.
    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn norm(self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.u * other.u + self.v * other.v
    }

    pub fn cross(self, other: Self) -> f64 {
        self.u * other.v - self.v * other.u
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(Self::new(self.u / n, self.v / n))
        } else {
            None
        }
    }

    pub fn perp(self) -> Self {
        Self::new(-self.v, self.u)
    }

    /// Angle of the vector in (-π, π].
    pub fn angle(self) -> f64 {
        self.v.atan2(self.u)
    }

    /// Angle of the spanned line, reduced to [0, π).
    pub fn line_angle(self) -> f64 {
        self.angle().rem_euclid(PI)
    }

    pub fn rotated(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.u - s * self.v, s * self.u + c * self.v)
    }

    /// Representative of the same line with a non-negative dot product against `reference`.
    pub fn aligned_with(self, reference: Self) -> Self {
        if self.dot(reference) < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Add for TangentVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.u + o.u, self.v + o.v)
    }
}

impl Sub for TangentVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.u - o.u, self.v - o.v)
    }
}

impl Neg for TangentVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.u, -self.v)
    }
}

impl Mul<f64> for TangentVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.u * s, self.v * s)
    }
}

/// Angle between the lines spanned by `a` and `b`, in [0, π/2].
pub fn line_angle_between(a: TangentVector, b: TangentVector) -> f64 {
    let c = a.cross(b).abs();
    let d = a.dot(b).abs();
    c.atan2(d)
}

/// Signed angle that rotates the line of `from` onto the line of `to`, in (-π/2, π/2].
pub fn signed_line_angle(from: TangentVector, to: TangentVector) -> f64 {
    wrap_line_angle(to.angle() - from.angle())
}

/// Reduces an angle difference between lines to (-π/2, π/2].
pub fn wrap_line_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// A real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Singular value decomposition `M = σ₁ u₁ v₁ᵀ + σ₂ u₂ v₂ᵀ` with σ₁ ≥ σ₂ ≥ 0.
#[derive(Clone, Copy, Debug)]
pub struct Svd2 {
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Right singular vector of the largest singular value (most expanded direction).
    pub v_max: TangentVector,
    /// Right singular vector of the smallest singular value (most contracted direction).
    pub v_min: TangentVector,
    /// Left singular vector of the largest singular value (dominant image direction).
    pub u_max: TangentVector,
    pub u_min: TangentVector,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.c, self.d]]
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn scale(s: f64) -> Self {
        Self::new(s, 0.0, 0.0, s)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn apply(&self, w: TangentVector) -> TangentVector {
        TangentVector::new(self.a * w.u + self.b * w.v, self.c * w.u + self.d * w.v)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Self::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn svd(&self) -> Svd2 {
        let e = 0.5 * (self.a + self.d);
        let f = 0.5 * (self.a - self.d);
        let g = 0.5 * (self.c + self.b);
        let h = 0.5 * (self.c - self.b);
        let q = e.hypot(h);
        let r = f.hypot(g);
        let sx = q + r;
        let sy = q - r;
        let a1 = g.atan2(f);
        let a2 = h.atan2(e);
        let theta = 0.5 * (a2 - a1);
        let phi = 0.5 * (a2 + a1);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let v_max = TangentVector::new(ct, -st);
        let v_min = TangentVector::new(st, ct);
        let u_max = TangentVector::new(cp, sp);
        let mut u_min = TangentVector::new(-sp, cp);
        if sy < 0.0 {
            u_min = -u_min;
        }
        // |det| / σ₁ is more accurate than q − r when the matrix is nearly singular.
        let sigma_min = if sx > 0.0 { self.det().abs() / sx } else { 0.0 };
        Svd2 {
            sigma_max: sx,
            sigma_min,
            v_max,
            v_min,
            u_max,
            u_min,
        }
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        let e = 0.5 * (self.a + self.d);
        let f = 0.5 * (self.a - self.d);
        let g = 0.5 * (self.c + self.b);
        let h = 0.5 * (self.c - self.b);
        e.hypot(h) + f.hypot(g)
    }

    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let t = 0.5 * self.trace();
        let disc = t * t - self.det();
        if disc >= 0.0 {
            let s = disc.sqrt();
            // Stable pairing: the larger root first, the smaller via det / larger.
            let big = if t >= 0.0 { t + s } else { t - s };
            let small = if big != 0.0 { self.det() / big } else { t - s };
            [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
        } else {
            let s = (-disc).sqrt();
            [Complex64::new(t, s), Complex64::new(t, -s)]
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[0].norm().max(ev[1].norm())
    }

    /// Closest matrix of rank at most one (drops the smallest singular value).
    pub fn rank_one_truncation(&self) -> Self {
        let s = self.svd();
        outer(s.u_max, s.v_max).scaled(s.sigma_max)
    }
}

/// The rank-one matrix `u vᵀ`.
pub fn outer(u: TangentVector, v: TangentVector) -> Mat2 {
    Mat2::new(u.u * v.u, u.u * v.v, u.v * v.u, u.v * v.v)
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

/// Product of many 2×2 matrices kept as `scale · exp(log_scale)`, with the
/// determinant tracked separately so that the smallest singular value of a
/// long, badly conditioned product stays accurate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaledMatrix {
    /// Factor kept within [2^-256, 2^256] by exact power-of-two rescaling.
    pub matrix: Mat2,
    pub log_scale: f64,
    /// log |det| of the full product (−∞ when singular).
    pub log_abs_det: f64,
    pub det_sign: f64,
}

impl ScaledMatrix {
    pub fn identity() -> Self {
        Self {
            matrix: Mat2::IDENTITY,
            log_scale: 0.0,
            log_abs_det: 0.0,
            det_sign: 1.0,
        }
    }

    pub fn from_matrix(m: Mat2) -> Self {
        let mut s = Self::identity();
        s.left_multiply(m);
        s
    }

    /// Replaces the product `P` with `m · P`.
    pub fn left_multiply(&mut self, m: Mat2) {
        self.matrix = m * self.matrix;
        let det = m.det();
        self.log_abs_det += det.abs().ln();
        if det < 0.0 {
            self.det_sign = -self.det_sign;
        }
        self.renormalize();
    }

    // Rescales by a power of two, which is exact, whenever the factor
    // leaves [2^-256, 2^256].
    fn renormalize(&mut self) {
        let big = self.matrix.max_abs_entry();
        if big > 0.0 && big.is_finite() && !(2f64.powi(-256)..=2f64.powi(256)).contains(&big) {
            let e = big.log2().round() as i32;
            self.matrix = self.matrix.scaled(2f64.powi(-e));
            self.log_scale += e as f64 * std::f64::consts::LN_2;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.max_abs_entry() == 0.0
    }

    /// The product as a plain matrix when representable in f64.
    pub fn to_matrix(&self) -> Option<Mat2> {
        if self.is_zero() {
            return Some(Mat2::ZERO);
        }
        let s = 2f64.powf((self.log_scale / std::f64::consts::LN_2).round());
        if !s.is_finite() || s == 0.0 {
            return None;
        }
        let m = self.matrix.scaled(s);
        m.is_finite().then_some(m)
    }

    /// log of the largest entry magnitude (−∞ for the zero matrix).
    pub fn log_max_entry(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.matrix.max_abs_entry().ln() + self.log_scale
        }
    }

    /// Singular data of the normalised factor plus log singular values of the product.
    pub fn log_singular_values(&self) -> (f64, f64, Svd2) {
        let svd = self.matrix.svd();
        if self.is_zero() {
            return (f64::NEG_INFINITY, f64::NEG_INFINITY, svd);
        }
        let log_max = svd.sigma_max.ln() + self.log_scale;
        let log_min = self.log_abs_det - log_max;
        (log_max, log_min, svd)
    }

    /// Norm of the product applied to a unit vector, in log form.
    pub fn log_norm_applied(&self, w: TangentVector) -> f64 {
        let img = self.matrix.apply(w).norm();
        if img == 0.0 {
            f64::NEG_INFINITY
        } else {
            img.ln() + self.log_scale
        }
    }
}

/// Angle wrapped to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(m: &Mat2) -> Mat2 {
        let s = m.svd();
        outer(s.u_max, s.v_max).scaled(s.sigma_max) + outer(s.u_min, s.v_min).scaled(s.sigma_min)
    }

    #[test]
    fn svd_reconstructs() {
        for m in [
            Mat2::new(2.0, 1.0, 1.0, 1.0),
            Mat2::new(2.0, 1.0, 0.0, 0.0),
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Mat2::new(-3.0, 0.5, 7.0, -2.0),
            Mat2::new(1.0, 0.0, 0.0, -1.0),
        ] {
            let r = reconstruct(&m);
            assert!((r - m).max_abs_entry() < 1e-12, "{m:?} vs {r:?}");
        }
    }

    #[test]
    fn kernel_of_rank_one() {
        let m = Mat2::new(2.0, 1.0, 0.0, 0.0);
        let s = m.svd();
        assert!(s.sigma_min.abs() < 1e-15);
        let k = TangentVector::new(1.0, -2.0).normalized().unwrap();
        assert!(line_angle_between(s.v_min, k) < 1e-15);
        assert!(line_angle_between(s.u_max, TangentVector::new(1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn cat_eigenvalues() {
        let ev = Mat2::new(2.0, 1.0, 1.0, 1.0).eigenvalues();
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((ev[0].re - phi2).abs() < 1e-14);
        assert!((ev[1].re - 1.0 / phi2).abs() < 1e-14);
    }

    #[test]
    fn scaled_product_tracks_large_powers() {
        let a = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let mut p = ScaledMatrix::identity();
        for _ in 0..2000 {
            p.left_multiply(a);
        }
        let (lmax, lmin, _) = p.log_singular_values();
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((lmax / 2000.0 - l).abs() < 1e-12);
        assert!((lmin / 2000.0 + l).abs() < 1e-12);
        assert!(p.to_matrix().is_none());
    }

    #[test]
    fn line_angles() {
        let a = TangentVector::new(1.0, 0.0);
        let b = TangentVector::new(-1.0, 1e-12);
        assert!((line_angle_between(a, b) - 1e-12).abs() < 1e-24);
        assert!((signed_line_angle(a, TangentVector::new(0.0, 1.0)) - FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_line_angle(3.0 * PI / 4.0) + PI / 4.0).abs() < 1e-15);
    }
}
