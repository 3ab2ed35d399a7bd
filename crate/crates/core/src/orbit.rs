//! Finite orbit windows, backward branches through preimages, and the
//! entry/exit times of an orbit into the critical set.

use crate::linalg::TangentVector;
use crate::surface_map::{CriticalSet, LiftPoint, TorusMap, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Residual below which a Newton root is accepted (torus metric).
pub const PREIMAGE_TOLERANCE: f64 = 1e-11;
/// Two roots closer than this are the same preimage.
pub const DEDUP_THRESHOLD: f64 = 1e-7;
/// Roots whose Jacobian has `σ_min` below this are flagged near-critical.
pub const NEAR_CRITICAL_SIGMA: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("no preimage found at backward step {step}")]
    NoPreimageFound { step: usize, partial: Box<OrbitSegment> },
    #[error("Λ search exhausted after {attempts} attempts ({found} of {requested} segments)")]
    LambdaSearchExhausted {
        attempts: usize,
        found: usize,
        requested: usize,
        /// Segments found before the budget ran out.
        partial: Vec<OrbitSegment>,
    },
    #[error("branch index {index} out of range ({available} preimages) at backward step {step}")]
    BranchIndexOutOfRange {
        step: usize,
        index: usize,
        available: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub point: TorusPoint,
    pub residual: f64,
    pub near_critical: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreimageSet {
    pub target: TorusPoint,
    /// Sorted lexicographically by (x, y).
    pub solutions: Vec<Preimage>,
    pub expected_degree: u64,
}

impl PreimageSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn any_near_critical(&self) -> bool {
        self.solutions.iter().any(|s| s.near_critical)
    }
}

/// Damped Newton on the lift for `f̃(p) = target` (target is a fixed lift).
fn newton_lift<M: TorusMap + ?Sized>(f: &M, seed: LiftPoint, target: LiftPoint) -> Option<LiftPoint> {
    let mut p = seed;
    let mut r = f.lift(p).minus(&target);
    let mut rn = r.norm();
    for _ in 0..60 {
        if rn <= PREIMAGE_TOLERANCE * 0.1 {
            break;
        }
        let j = f.jacobian(p);
        let inv = j.inverse()?;
        let step = inv.apply(r);
        if !step.u.is_finite() || !step.v.is_finite() {
            return None;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let q = p.offset(step * (-t));
            let rq = f.lift(q).minus(&target);
            let qn = rq.norm();
            if qn < rn || qn <= PREIMAGE_TOLERANCE * 0.1 {
                p = q;
                r = rq;
                rn = qn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (rn <= PREIMAGE_TOLERANCE).then_some(p)
}

fn residual<M: TorusMap + ?Sized>(f: &M, s: TorusPoint, q: TorusPoint) -> f64 {
    f.evaluate(s).distance(&q)
}

fn make_preimage<M: TorusMap + ?Sized>(f: &M, p: LiftPoint, q: TorusPoint) -> Preimage {
    let point = p.project();
    let sigma = f.jacobian(p).svd().sigma_min;
    Preimage {
        point,
        residual: residual(f, point, q),
        near_critical: sigma < NEAR_CRITICAL_SIGMA,
    }
}

fn lex_cmp(a: &TorusPoint, b: &TorusPoint) -> std::cmp::Ordering {
    a.x().total_cmp(&b.x()).then(a.y().total_cmp(&b.y()))
}

/// All preimages of `q`, found by Newton iteration on the lift from a
/// `resolution × resolution` grid of seeds.
///
/// Each seed targets the lattice translate of `q̃` nearest to its image.
/// Roots are deduplicated at [`DEDUP_THRESHOLD`] and returned in
/// lexicographic order, so the result does not depend on scheduling.
pub fn preimages<M: TorusMap + ?Sized>(f: &M, q: TorusPoint, resolution: usize) -> PreimageSet {
    let degree = f.linear_part().degree();
    let resolution = resolution.max((4 * degree as usize).max(16));
    let h = 1.0 / resolution as f64;
    let qx = q.x();
    let qy = q.y();
    let mut roots: Vec<LiftPoint> = (0..resolution * resolution)
        .into_par_iter()
        .filter_map(|k| {
            let seed = LiftPoint::new((k % resolution) as f64 * h + 0.5 * h, (k / resolution) as f64 * h + 0.5 * h);
            let img = f.lift(seed);
            let target = LiftPoint::new(qx + (img.x - qx).round(), qy + (img.y - qy).round());
            newton_lift(f, seed, target)
        })
        .collect();
    roots.sort_by(|a, b| lex_cmp(&a.project(), &b.project()));
    let mut solutions: Vec<Preimage> = Vec::new();
    for p in roots {
        let tp = p.project();
        if solutions.iter().any(|s| s.point.distance(&tp) < DEDUP_THRESHOLD) {
            continue;
        }
        solutions.push(make_preimage(f, p, q));
    }
    solutions.sort_by(|a, b| lex_cmp(&a.point, &b.point));
    PreimageSet {
        target: q,
        solutions,
        expected_degree: degree,
    }
}

/// A single preimage from the seed `A⁻¹ q̃`; cheap, and exact for linear maps.
///
/// Falls back to the first lexicographic preimage when the seeded solve fails.
pub fn principal_preimage<M: TorusMap + ?Sized>(f: &M, q: TorusPoint, resolution: usize) -> Option<Preimage> {
    let a = f.linear_part().as_mat2();
    if let Some(inv) = a.inverse() {
        let s = inv.apply(TangentVector::new(q.x(), q.y()));
        let seed = LiftPoint::new(s.u, s.v);
        let img = f.lift(seed);
        let target = LiftPoint::new(q.x() + (img.x - q.x()).round(), q.y() + (img.y - q.y()).round());
        if let Some(p) = newton_lift(f, seed, target) {
            return Some(make_preimage(f, p, q));
        }
    }
    preimages(f, q, resolution).solutions.into_iter().next()
}

/// How backward steps pick among several preimages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchSelector {
    /// Always the first preimage in lexicographic order.
    Deterministic,
    /// Uniform choice from a ChaCha stream with the given seed.
    Random { seed: u64 },
    /// Explicit indices, one per backward step (step 1 first).
    Indices(Vec<usize>),
    /// The Newton root seeded at `A⁻¹ q̃`.
    Principal,
}

/// One backward choice: index taken among `available` sorted preimages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchChoice {
    pub index: usize,
    pub available: usize,
}

/// Window `x_{-m}, …, x_n` with `f(x_i) = x_{i+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    /// Number of backward points `m`.
    pub back: usize,
    /// `points[k]` is `x_{k − back}`.
    pub points: Vec<TorusPoint>,
    /// `branch[s]` records the choice made for `x_{-(s+1)}`.
    pub branch: Vec<BranchChoice>,
    /// `residuals[k] = d(f(x_{k−back}), x_{k−back+1})`.
    pub residuals: Vec<f64>,
}

impl OrbitSegment {
    pub fn single(p: TorusPoint) -> Self {
        Self {
            back: 0,
            points: vec![p],
            branch: Vec::new(),
            residuals: Vec::new(),
        }
    }

    pub fn first_index(&self) -> i64 {
        -(self.back as i64)
    }

    pub fn last_index(&self) -> i64 {
        self.points.len() as i64 - 1 - self.back as i64
    }

    pub fn forward_len(&self) -> usize {
        self.last_index().max(0) as usize
    }

    pub fn contains_index(&self, i: i64) -> bool {
        i >= self.first_index() && i <= self.last_index()
    }

    pub fn point(&self, i: i64) -> TorusPoint {
        assert!(self.contains_index(i), "index {i} outside window");
        self.points[(i + self.back as i64) as usize]
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.first_index()..=self.last_index()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Points `x_i, x_{i+1}, …, x_j` (inclusive).
    pub fn slice(&self, i: i64, j: i64) -> &[TorusPoint] {
        let a = (i + self.back as i64) as usize;
        let b = (j + self.back as i64) as usize;
        &self.points[a..=b]
    }

    /// Appends forward iterates of the last point until index `n`.
    pub fn extend_forward<M: TorusMap + ?Sized>(&mut self, f: &M, n: usize) {
        while self.last_index() < n as i64 {
            let last = *self.points.last().expect("nonempty window");
            self.points.push(f.evaluate(last));
            self.residuals.push(0.0);
        }
    }

    /// Re-indexes so that the current `x_i` becomes `x_0`.
    pub fn recentered(&self, i: i64) -> OrbitSegment {
        assert!(self.contains_index(i));
        let new_back = (i + self.back as i64) as usize;
        let mut branch = self.branch.clone();
        branch.truncate(new_back.min(branch.len()));
        OrbitSegment {
            back: new_back,
            points: self.points.clone(),
            branch,
            residuals: self.residuals.clone(),
        }
    }

    /// Columnar dump: index, x, y, det Df, critical flag.
    pub fn to_columns<M: TorusMap + ?Sized>(&self, f: &M, crit: &CriticalSet, margin: f64) -> String {
        let mut out = String::from("# index x y det_df critical\n");
        for i in self.indices() {
            let p = self.point(i);
            let det = f.derivative(p).matrix.det();
            let c = crit.contains(f, p, margin) as u8;
            let _ = writeln!(out, "{i} {:.15e} {:.15e} {:.15e} {c}", p.x(), p.y(), det);
        }
        out
    }
}

/// Window `x_0, …, x_n` by direct evaluation.
pub fn forward_orbit<M: TorusMap + ?Sized>(f: &M, p: TorusPoint, n: usize) -> OrbitSegment {
    let mut seg = OrbitSegment::single(p);
    seg.extend_forward(f, n);
    seg
}

/// Window `x_{-m}, …, x_0` ending at `p`.
///
/// `resolution` is the preimage seed grid. On solver failure the error
/// carries the partial window built so far.
pub fn backward_branch<M: TorusMap + ?Sized>(
    f: &M,
    p: TorusPoint,
    m: usize,
    selector: &BranchSelector,
    resolution: usize,
) -> Result<OrbitSegment, OrbitError> {
    let mut rng = match selector {
        BranchSelector::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    // Built newest-first, reversed at the end.
    let mut rev_points = vec![p];
    let mut rev_residuals = Vec::with_capacity(m);
    let mut branch = Vec::with_capacity(m);
    let finish = |rev_points: &Vec<TorusPoint>, rev_residuals: &Vec<f64>, branch: &Vec<BranchChoice>| {
        let mut points = rev_points.clone();
        points.reverse();
        let mut residuals = rev_residuals.clone();
        residuals.reverse();
        OrbitSegment {
            back: points.len() - 1,
            points,
            branch: branch.clone(),
            residuals,
        }
    };
    for step in 1..=m {
        let q = *rev_points.last().expect("nonempty");
        let chosen = match selector {
            BranchSelector::Principal => principal_preimage(f, q, resolution).map(|s| (s, BranchChoice { index: 0, available: 1 })),
            _ => {
                let set = preimages(f, q, resolution);
                if set.is_empty() {
                    None
                } else {
                    let idx = match selector {
                        BranchSelector::Deterministic => 0,
                        BranchSelector::Random { .. } => rng.as_mut().expect("rng").gen_range(0..set.len()),
                        BranchSelector::Indices(v) => {
                            let idx = v.get(step - 1).copied().unwrap_or(0);
                            if idx >= set.len() {
                                return Err(OrbitError::BranchIndexOutOfRange {
                                    step,
                                    index: idx,
                                    available: set.len(),
                                });
                            }
                            idx
                        }
                        BranchSelector::Principal => unreachable!(),
                    };
                    Some((
                        set.solutions[idx],
                        BranchChoice {
                            index: idx,
                            available: set.len(),
                        },
                    ))
                }
            }
        };
        match chosen {
            Some((s, choice)) => {
                rev_points.push(s.point);
                rev_residuals.push(s.residual);
                branch.push(choice);
            }
            None => {
                return Err(OrbitError::NoPreimageFound {
                    step,
                    partial: Box::new(finish(&rev_points, &rev_residuals, &branch)),
                })
            }
        }
    }
    Ok(finish(&rev_points, &rev_residuals, &branch))
}

/// Window `x_{-m}, …, x_n` through `p = x_0`.
pub fn orbit_window<M: TorusMap + ?Sized>(
    f: &M,
    p: TorusPoint,
    m: usize,
    n: usize,
    selector: &BranchSelector,
    resolution: usize,
) -> Result<OrbitSegment, OrbitError> {
    let mut seg = backward_branch(f, p, m, selector, resolution)?;
    seg.extend_forward(f, n);
    Ok(seg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryTimes {
    pub tau_minus: Option<i64>,
    pub tau_plus: Option<i64>,
    pub margin: f64,
}

/// `τ⁺` and `τ⁻` relative to index `j` of the window.
///
/// `τ⁺ = min{i ≥ j : x_i critical}` and `τ⁻ = max{i < j : x_i critical and
/// x_{i+1} not critical}`, both returned as offsets from `j`.
pub fn entry_times_at<M: TorusMap + ?Sized>(
    f: &M,
    seg: &OrbitSegment,
    j: i64,
    crit: &CriticalSet,
    margin: f64,
) -> EntryTimes {
    let is_crit = |i: i64| crit.contains(f, seg.point(i), margin);
    let tau_plus = (j..=seg.last_index()).find(|&i| is_crit(i)).map(|i| i - j);
    let mut tau_minus = None;
    let mut next_crit = is_crit(j);
    for i in (seg.first_index()..j).rev() {
        let c = is_crit(i);
        if c && !next_crit {
            tau_minus = Some(i - j);
            break;
        }
        next_crit = c;
    }
    EntryTimes {
        tau_minus,
        tau_plus,
        margin,
    }
}

pub fn entry_times<M: TorusMap + ?Sized>(f: &M, seg: &OrbitSegment, crit: &CriticalSet, margin: f64) -> EntryTimes {
    entry_times_at(f, seg, 0, crit, margin)
}

/// Budget and window shape for [`sample_lambda_set`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub back: usize,
    pub forward: usize,
    pub margin: f64,
    pub max_attempts: usize,
    pub seed: u64,
    pub resolution: usize,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self {
            back: 20,
            forward: 20,
            margin: 1e-2,
            max_attempts: 2000,
            seed: 0,
            resolution: 16,
        }
    }
}

/// Finite-window surrogates of the Λ set: segments with a backward exit
/// and a forward entry into the critical set.
///
/// Each attempt plants a refined critical sample at a random forward index
/// and walks a random backward branch from it, so the forward hit is exact
/// and only the backward hit is left to chance.
pub fn sample_lambda_set<M: TorusMap + ?Sized>(
    f: &M,
    crit: &CriticalSet,
    count: usize,
    search: &LambdaSearch,
) -> Result<Vec<OrbitSegment>, OrbitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut found = Vec::new();
    if crit.is_empty() {
        return Err(OrbitError::LambdaSearchExhausted {
            attempts: 0,
            found: 0,
            requested: count,
            partial: Vec::new(),
        });
    }
    let mut attempts = 0;
    while found.len() < count && attempts < search.max_attempts {
        attempts += 1;
        let c = crit.samples[rng.gen_range(0..crit.len())].point;
        let hit = rng.gen_range(0..=search.forward);
        let branch_seed: u64 = rng.gen();
        let seg = match backward_branch(
            f,
            c,
            search.back + hit,
            &BranchSelector::Random { seed: branch_seed },
            search.resolution,
        ) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let mut seg = seg.recentered(-(hit as i64));
        seg.extend_forward(f, search.forward);
        let t = entry_times(f, &seg, crit, search.margin);
        if t.tau_minus.is_some() && t.tau_plus.is_some() {
            found.push(seg);
        }
    }
    if found.len() < count {
        return Err(OrbitError::LambdaSearchExhausted {
            attempts,
            found: found.len(),
            requested: count,
            partial: found,
        });
    }
    Ok(found)
}
