//! Homology action of the lift, the spectral-radius verdicts, arc
//! neighbourhood area against length, and lift diameter growth.

use crate::arcs::least_squares_slope;
use crate::linalg::TangentVector;
use crate::surface_map::{LiftPoint, LinearPart, TorusMap, TorusPoint};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Rounding residual above which a lattice displacement is not an integer.
pub const INTEGER_RESIDUAL: f64 = 1e-9;
/// Number of random base points for the displacement measurement.
pub const HOMOLOGY_SAMPLES: usize = 100;
/// Fitted exponents below this count as sub-exponential.
pub const SUBEXPONENTIAL_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomologyError {
    #[error("lattice displacement {value:?} at {at:?} is not integral (residual {residual:.3e})")]
    NonIntegerDisplacement {
        at: LiftPoint,
        value: [f64; 2],
        residual: f64,
    },
    #[error("measured displacement {measured:?} differs from declared linear part {declared:?}")]
    DeclaredMismatch {
        measured: [[i64; 2]; 2],
        declared: [[i64; 2]; 2],
    },
    #[error("arc polyline self-intersects at segments {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("arc has zero length")]
    DegenerateArc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomologyAction {
    pub matrix: LinearPart,
    /// Eigenvalues as `[re, im]`.
    pub eigenvalues: [[f64; 2]; 2],
    pub spectral_radius: f64,
}

impl HomologyAction {
    pub fn from_linear(matrix: LinearPart) -> Self {
        let m = matrix.as_mat2();
        let ev: [Complex64; 2] = m.eigenvalues();
        Self {
            matrix,
            eigenvalues: [[ev[0].re, ev[0].im], [ev[1].re, ev[1].im]],
            spectral_radius: m.spectral_radius(),
        }
    }
}

/// Measures `f̃(x̃ + e_i) − f̃(x̃)` at seeded random base points and checks
/// it against the declared linear part.
pub fn homology_matrix<M: TorusMap + ?Sized>(f: &M, seed: u64) -> Result<HomologyAction, HomologyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut measured: Option<[[i64; 2]; 2]> = None;
    for _ in 0..HOMOLOGY_SAMPLES {
        let x = LiftPoint::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let fx = f.lift(x);
        let mut cols = [[0i64; 2]; 2];
        for (i, e) in [TangentVector::new(1.0, 0.0), TangentVector::new(0.0, 1.0)].into_iter().enumerate() {
            let d = f.lift(x.offset(e)).minus(&fx);
            let r = [d.u.round(), d.v.round()];
            let residual = (d.u - r[0]).abs().max((d.v - r[1]).abs());
            if residual > INTEGER_RESIDUAL {
                return Err(HomologyError::NonIntegerDisplacement {
                    at: x,
                    value: [d.u, d.v],
                    residual,
                });
            }
            cols[i] = [r[0] as i64, r[1] as i64];
        }
        // Columns are the images of e_1, e_2.
        let rows = [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]];
        match measured {
            None => measured = Some(rows),
            Some(m) if m != rows => {
                return Err(HomologyError::DeclaredMismatch {
                    measured: rows,
                    declared: m,
                })
            }
            _ => {}
        }
    }
    let rows = measured.expect("at least one sample");
    let declared = f.linear_part().rows();
    if rows != declared {
        return Err(HomologyError::DeclaredMismatch { measured: rows, declared });
    }
    Ok(HomologyAction::from_linear(LinearPart::from_rows(rows)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Consistent,
    /// Radius ≤ 1 together with a valid domination certificate: the map
    /// cannot be transitive.
    Obstructed,
    /// Radius ≤ 1 without a certificate.
    NotRobustlyTransitive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomologyVerdict {
    pub kind: VerdictKind,
    pub spectral_radius: f64,
    pub certificate_valid: bool,
    /// Emitted whenever the radius is ≤ 1: such a map is not robustly transitive.
    pub identity_class_note: Option<String>,
    pub message: String,
}

/// Radius comparisons allow this much slack above 1.
const RADIUS_TOLERANCE: f64 = 1e-12;

pub fn radius_consistency(action: &HomologyAction, certificate_valid: bool) -> HomologyVerdict {
    let r = action.spectral_radius;
    let small = r <= 1.0 + RADIUS_TOLERANCE;
    let note = small.then(|| {
        format!("spectral radius {r:.6} ≤ 1: not robustly transitive (C¹-open transitivity needs an eigenvalue of modulus > 1)")
    });
    let (kind, message) = if small && certificate_valid {
        (
            VerdictKind::Obstructed,
            format!("OBSTRUCTED: valid dominated splitting with spectral radius {r:.6} ≤ 1, so the map cannot be transitive"),
        )
    } else if small {
        (
            VerdictKind::NotRobustlyTransitive,
            format!("no certificate; spectral radius {r:.6} ≤ 1, not robustly transitive"),
        )
    } else {
        (
            VerdictKind::Consistent,
            format!("CONSISTENT: spectral radius {r:.6} > 1"),
        )
    };
    HomologyVerdict {
        kind,
        spectral_radius: r,
        certificate_valid,
        identity_class_note: note,
        message,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaMeasurement {
    pub area: f64,
    pub length: f64,
    pub epsilon: f64,
    /// `area / length`.
    pub ratio: f64,
    /// One-sigma Monte-Carlo error of `area`.
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

struct SegmentIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SegmentIndex {
    fn build(nodes: &[LiftPoint], pad: f64, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, w) in nodes.windows(2).enumerate() {
            let (x0, x1) = (w[0].x.min(w[1].x) - pad, w[0].x.max(w[1].x) + pad);
            let (y0, y1) = (w[0].y.min(w[1].y) - pad, w[0].y.max(w[1].y) + pad);
            for cx in (x0 / cell).floor() as i64..=(x1 / cell).floor() as i64 {
                for cy in (y0 / cell).floor() as i64..=(y1 / cell).floor() as i64 {
                    buckets.entry((cx, cy)).or_default().push(i);
                }
            }
        }
        Self { cell, buckets }
    }

    fn candidates(&self, p: LiftPoint) -> &[usize] {
        let key = ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64);
        self.buckets.get(&key).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn segments_touch(a: LiftPoint, b: LiftPoint, c: LiftPoint, d: LiftPoint) -> bool {
    let o = |p: LiftPoint, q: LiftPoint, r: LiftPoint| q.minus(&p).cross(r.minus(&p));
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Lexicographically first pair of non-adjacent segments that cross.
pub fn find_self_intersection(nodes: &[LiftPoint]) -> Option<(usize, usize)> {
    if nodes.len() < 4 {
        return None;
    }
    let seglen = nodes
        .windows(2)
        .map(|w| w[1].minus(&w[0]).norm())
        .fold(0.0, f64::max)
        .max(1e-12);
    let index = SegmentIndex::build(nodes, 0.0, seglen);
    let mut first: Option<(usize, usize)> = None;
    for segs in index.buckets.values() {
        for (a, &i) in segs.iter().enumerate() {
            for &j in &segs[a + 1..] {
                let (i, j) = (i.min(j), i.max(j));
                if j <= i + 1 {
                    continue;
                }
                if segments_touch(nodes[i], nodes[i + 1], nodes[j], nodes[j + 1]) && first.is_none_or(|f| (i, j) < f) {
                    first = Some((i, j));
                }
            }
        }
    }
    first
}

/// Monte-Carlo area of the ε-neighbourhood of a lifted polyline.
///
/// Samples uniformly from the capsule around a segment chosen with
/// probability proportional to capsule area, and weights each sample by
/// the inverse of the number of capsules containing it. This is unbiased
/// for the area of the union.
pub fn area_length_consistency(nodes: &[LiftPoint], epsilon: f64, samples: usize, seed: u64) -> Result<AreaMeasurement, HomologyError> {
    use rayon::prelude::*;
    if let Some((i, j)) = find_self_intersection(nodes) {
        return Err(HomologyError::SelfIntersection(i, j));
    }
    let lens: Vec<f64> = nodes.windows(2).map(|w| w[1].minus(&w[0]).norm()).collect();
    let length: f64 = lens.iter().sum();
    if length == 0.0 {
        return Err(HomologyError::DegenerateArc);
    }
    let disk = std::f64::consts::PI * epsilon * epsilon;
    let caps: Vec<f64> = lens.iter().map(|l| 2.0 * epsilon * l + disk).collect();
    let mut cumulative = Vec::with_capacity(caps.len());
    let mut acc = 0.0;
    for c in &caps {
        acc += c;
        cumulative.push(acc);
    }
    let total = acc;
    let index = SegmentIndex::build(nodes, epsilon, 2.0 * epsilon);
    const CHUNK: usize = 16_384;
    let chunks = samples.div_ceil(CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let target = rng.gen::<f64>() * total;
                let j = cumulative.partition_point(|v| *v < target).min(caps.len() - 1);
                let (a, b) = (nodes[j], nodes[j + 1]);
                let p = sample_capsule(&mut rng, a, b, lens[j], epsilon);
                let hits = index
                    .candidates(p)
                    .iter()
                    .filter(|&&k| crate::arcs::point_segment_distance(p, nodes[k], nodes[k + 1]) <= epsilon)
                    .count()
                    .max(1);
                let w = total / hits as f64;
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    let n = samples as f64;
    let area = sum / n;
    let var = (sum_sq / n - area * area).max(0.0);
    Ok(AreaMeasurement {
        area,
        length,
        epsilon,
        ratio: area / length,
        std_error: (var / n).sqrt(),
        samples,
        seed,
    })
}

fn sample_capsule(rng: &mut ChaCha8Rng, a: LiftPoint, b: LiftPoint, len: f64, eps: f64) -> LiftPoint {
    let rect = 2.0 * eps * len;
    let disk = std::f64::consts::PI * eps * eps;
    let dir = if len > 0.0 { b.minus(&a) * (1.0 / len) } else { TangentVector::new(1.0, 0.0) };
    let normal = dir.perp();
    if rng.gen::<f64>() * (rect + disk) < rect {
        let t = rng.gen::<f64>() * len;
        let s = (rng.gen::<f64>() * 2.0 - 1.0) * eps;
        a.offset(dir * t + normal * s)
    } else {
        let r = eps * rng.gen::<f64>().sqrt();
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        let v = TangentVector::new(r * th.cos(), r * th.sin());
        // The two half-discs of the caps: behind a, ahead of b.
        let along = v.u * dir.u + v.v * dir.v;
        if along < 0.0 {
            a.offset(v)
        } else {
            b.offset(v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterSeries {
    pub center: TorusPoint,
    pub radius: f64,
    /// Lift diameter of the image of the sampled disk boundary, n = 0..N.
    pub diameters: Vec<f64>,
    pub exponent: f64,
    pub subexponential: bool,
}

/// Boundary sample count for diameter measurements.
pub const DISK_BOUNDARY_SAMPLES: usize = 256;

pub fn diameter_growth<M: TorusMap + ?Sized>(f: &M, center: TorusPoint, radius: f64, n: usize) -> DiameterSeries {
    let c = center.lift();
    let mut pts: Vec<LiftPoint> = (0..DISK_BOUNDARY_SAMPLES)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / DISK_BOUNDARY_SAMPLES as f64;
            c.offset(TangentVector::new(radius * th.cos(), radius * th.sin()))
        })
        .collect();
    let diam = |pts: &[LiftPoint]| {
        let mut d: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                d = d.max(p.minus(q).norm());
            }
        }
        d
    };
    let mut diameters = vec![diam(&pts)];
    for _ in 0..n {
        for p in pts.iter_mut() {
            *p = f.lift(*p);
        }
        diameters.push(diam(&pts));
    }
    let logs: Vec<f64> = diameters.iter().map(|d| d.ln()).collect();
    let exponent = least_squares_slope(&logs);
    DiameterSeries {
        center,
        radius,
        diameters,
        exponent,
        subexponential: exponent < SUBEXPONENTIAL_THRESHOLD,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub arc_exponent: Option<f64>,
    pub diameter_exponent: f64,
    /// Measured `area / length` of the arc's ε-neighbourhood.
    pub area_constant: Option<f64>,
    pub epsilon: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::*;
    use crate::surface_map::{Coord, Mode, SurfaceEndomorphism, TrigTerm};

    #[test]
    fn canonical_homology() {
        let h = homology_matrix(&cat(), 1).unwrap();
        assert_eq!(h.matrix.rows(), [[2, 1], [1, 1]]);
        assert!((h.spectral_radius - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        let h = homology_matrix(&idhom(), 1).unwrap();
        assert_eq!(h.matrix, LinearPart::IDENTITY);
        assert!((h.spectral_radius - 1.0).abs() < 1e-12);
        let h = homology_matrix(&shearcrit(), 1).unwrap();
        assert_eq!(h.matrix.rows(), [[2, 1], [0, 2]]);
        assert!((h.spectral_radius - 2.0).abs() < 1e-12);
    }

    #[test]
    fn drift_lift_rejected() {
        let mut bad = cat();
        bad.perturbation.push(TrigTerm {
            target: Coord::X,
            amplitude: 0.1,
            freq: (0, 1),
            phase: 0.0,
            mode: Mode::Sin,
        });
        assert!(homology_matrix(&bad, 3).is_ok());
        struct Drift;
        impl TorusMap for Drift {
            fn linear_part(&self) -> LinearPart {
                LinearPart::IDENTITY
            }
            fn lift(&self, p: LiftPoint) -> LiftPoint {
                LiftPoint::new(1.5 * p.x, p.y)
            }
            fn jacobian(&self, _: LiftPoint) -> crate::Mat2 {
                crate::Mat2::new(1.5, 0.0, 0.0, 1.0)
            }
            fn label(&self) -> String {
                "drift".into()
            }
        }
        assert!(matches!(
            homology_matrix(&Drift, 3),
            Err(HomologyError::NonIntegerDisplacement { .. })
        ));
    }

    #[test]
    fn verdict_rules() {
        let cat_h = HomologyAction::from_linear(cat().linear);
        assert_eq!(radius_consistency(&cat_h, true).kind, VerdictKind::Consistent);
        let id = HomologyAction::from_linear(LinearPart::IDENTITY);
        let v = radius_consistency(&id, false);
        assert_eq!(v.kind, VerdictKind::NotRobustlyTransitive);
        assert!(v.identity_class_note.is_some());
        let v = radius_consistency(&id, true);
        assert_eq!(v.kind, VerdictKind::Obstructed);
        assert!(v.identity_class_note.is_some());
    }

    #[test]
    fn straight_segment_area() {
        let (l, eps) = (1.0, 0.05);
        let nodes: Vec<LiftPoint> = (0..=100).map(|i| LiftPoint::new(0.3 + l * i as f64 / 100.0, 0.2 + 0.5 * l * i as f64 / 100.0)).collect();
        let len = nodes.last().unwrap().minus(&nodes[0]).norm();
        let m = area_length_consistency(&nodes, eps, 200_000, 7).unwrap();
        let want = 2.0 * eps * len + std::f64::consts::PI * eps * eps;
        assert!((m.area - want).abs() < 0.02 * want, "{} vs {want}", m.area);
        let again = area_length_consistency(&nodes, eps, 200_000, 7).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn self_intersection_flagged() {
        let nodes = [
            LiftPoint::new(0.0, 0.0),
            LiftPoint::new(1.0, 0.0),
            LiftPoint::new(1.0, 1.0),
            LiftPoint::new(0.5, -1.0),
        ];
        assert!(matches!(
            area_length_consistency(&nodes, 0.01, 1000, 1),
            Err(HomologyError::SelfIntersection(0, 2))
        ));
    }

    #[test]
    fn diameters() {
        let cat_d = diameter_growth(&cat(), TorusPoint::new(0.3, 0.3), 0.1, 10);
        assert!((cat_d.exponent - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 0.02);
        let shift = SurfaceEndomorphism::linear("shift", LinearPart::IDENTITY).with_term(TrigTerm {
            target: Coord::X,
            amplitude: 0.3,
            freq: (0, 0),
            phase: 1.0,
            mode: Mode::Sin,
        });
        let d = diameter_growth(&shift, TorusPoint::new(0.1, 0.1), 0.1, 20);
        assert!(d.diameters.iter().all(|x| (x - d.diameters[0]).abs() < 1e-12));
    }
}
