//! Randomised invariants for every module.

use endocert::arcs::{
    build_nu_box, detect_delta_u_arc, find_periodic_point, iterate_arc, make_u_arc, DeltaArcOutcome, PeriodicSearch,
    SingularE, SubdivisionOptions,
};
use endocert::canonical::{self, cat, diag, exp, idhom, shearcrit, shearcrit_with_amplitude};
use endocert::cone::{build_cone, check_expansion, check_invariance, reevaluate_clause, ConeCore};
use endocert::homology::homology_matrix;
use endocert::linalg::line_angle_between;
use endocert::orbit::{backward_branch, entry_times, forward_orbit, preimages, BranchSelector};
use endocert::perturb::{shear_sink_variant, sink_surgery, LocalSurgery, PerturbedMap};
use endocert::pipeline::{cmd_certify, RunConfig};
use endocert::splitting::{
    angle_profile, check_domination, compute_e, lyapunov_along_f, splitting_grid, GridSpec, SplittingConfig,
};
use endocert::surface_map::{derivative_power, lattice_equivariance_defect, locate_critical_set, Coord, TrigTerm};
use endocert::{LiftPoint, Mat2, SurfaceEndomorphism, TangentVector, TorusMap, TorusPoint};
use proptest::prelude::*;

fn shipped(i: usize) -> SurfaceEndomorphism {
    canonical::by_name(canonical::NAMES[i % canonical::NAMES.len()]).unwrap()
}

fn covering(i: usize) -> SurfaceEndomorphism {
    [cat(), exp(), diag()][i % 3].clone()
}

fn unstable_cat() -> TangentVector {
    TangentVector::new(1.0, (5f64.sqrt() - 1.0) / 2.0)
}

fn stable_cat() -> TangentVector {
    unstable_cat().perp()
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..1.0f64
}

fn point() -> impl Strategy<Value = TorusPoint> {
    (unit(), unit()).prop_map(|(x, y)| TorusPoint::new(x, y))
}

fn splitting_samples(f: &SurfaceEndomorphism, res: usize) -> Vec<endocert::splitting::SplittingSample> {
    splitting_grid(f, GridSpec::new(res), &SplittingConfig::default())
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lift_is_lattice_equivariant(i in 0usize..5, x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let f = shipped(i);
        prop_assert!(lattice_equivariance_defect(&f, LiftPoint::new(x, y)) <= 1e-12);
    }

    #[test]
    fn derivative_chain_rule(i in 0usize..5, p in point(), n in 1usize..6, m in 1usize..6) {
        let f = shipped(i);
        let whole = derivative_power(&f, p, n + m).to_matrix().unwrap();
        let mid = forward_orbit(&f, p, m).point(m as i64);
        let split = derivative_power(&f, mid, n).to_matrix().unwrap() * derivative_power(&f, p, m).to_matrix().unwrap();
        let scale = whole.max_abs_entry().max(split.max_abs_entry());
        prop_assert!((whole - split).max_abs_entry() <= 1e-10 * scale);
    }

    #[test]
    fn critical_samples_annihilate_kernel(a in 2.5..6.0f64, res in 16usize..64) {
        let f = shearcrit_with_amplitude(a);
        let tol = 1e-12;
        let cs = locate_critical_set(&f, res, tol);
        prop_assert!(!cs.is_empty());
        for s in &cs.samples {
            prop_assert!(s.det.abs() <= tol);
            let k = s.kernel.expect("rank-one sample carries a kernel");
            prop_assert!(f.derivative(s.point).matrix.apply(k).norm() <= 10.0 * tol);
        }
    }

    #[test]
    fn preimages_are_sound(i in 0usize..5, q in point()) {
        let f = shipped(i);
        for s in &preimages(&f, q, 16).solutions {
            prop_assert!(f.evaluate(s.point).distance(&q) <= 1e-9);
        }
    }

    #[test]
    fn preimages_are_complete_on_covering_maps(i in 0usize..3, p in point()) {
        let f = covering(i);
        let q = f.evaluate(p);
        let set = preimages(&f, q, 16);
        prop_assert_eq!(set.len() as i64, f.linear.det().abs());
        prop_assert!(set.solutions.iter().any(|s| s.point.distance(&p) < 1e-8));
    }

    #[test]
    fn branches_are_deterministic(i in 0usize..5, p in point(), seed in any::<u64>(), m in 1usize..12) {
        let f = shipped(i);
        let sel = BranchSelector::Random { seed };
        let a = backward_branch(&f, p, m, &sel, 16);
        let b = backward_branch(&f, p, m, &sel, 16);
        prop_assert_eq!(serde_json::to_string(&a.ok()).unwrap(), serde_json::to_string(&b.ok()).unwrap());
    }

    #[test]
    fn extending_a_window_keeps_entry_times(p in point(), seed in any::<u64>(), m in 1usize..6, n in 1usize..10) {
        let f = shearcrit();
        let cs = locate_critical_set(&f, 64, 1e-12);
        let margin = 2e-2;
        let sel = BranchSelector::Random { seed };
        let short = backward_branch(&f, p, m, &sel, 16);
        let long = backward_branch(&f, p, m + 4, &sel, 16);
        let (Ok(mut short), Ok(mut long)) = (short, long) else { return Ok(()) };
        prop_assume!(long.points[4..] == short.points[..]);
        short.extend_forward(&f, n);
        long.extend_forward(&f, n + 6);
        let (s, l) = (entry_times(&f, &short, &cs, margin), entry_times(&f, &long, &cs, margin));
        if let Some(t) = s.tau_plus {
            prop_assert_eq!(l.tau_plus, Some(t));
        }
        if let Some(t) = s.tau_minus {
            prop_assert_eq!(l.tau_minus, Some(t));
        }
    }

    #[test]
    fn kernel_formula_e_is_annihilated(k in 0usize..1000) {
        let f = shearcrit();
        let cs = locate_critical_set(&f, 64, 1e-12);
        let c = cs.samples[k % cs.len()].point;
        let seg = forward_orbit(&f, c, 4);
        let e = compute_e(&f, &seg, 0, Some(&cs), &SplittingConfig::default()).unwrap();
        prop_assert!(f.derivative(c).matrix.apply(e.direction).norm() <= 1e-9);
    }

    #[test]
    fn singular_e_ignores_the_backward_branch(i in 0usize..5, p in point(), s1 in any::<u64>(), s2 in any::<u64>(), m in 1usize..10) {
        let f = shipped(i);
        let cfg = SplittingConfig::default();
        let a = backward_branch(&f, p, m, &BranchSelector::Random { seed: s1 }, 16);
        let b = backward_branch(&f, p, m, &BranchSelector::Random { seed: s2 }, 16);
        let (Ok(a), Ok(b)) = (a, b) else { return Ok(()) };
        let (Ok(ea), Ok(eb)) = (compute_e(&f, &a, 0, None, &cfg), compute_e(&f, &b, 0, None, &cfg)) else { return Ok(()) };
        prop_assert!(line_angle_between(ea.direction, eb.direction) <= 1e-8);
    }

    #[test]
    fn nearby_points_have_nearby_e(i in 0usize..2, p in point(), theta in 0.0..6.3f64, d in 1e-9..1e-3f64) {
        let f = [cat(), exp()][i].clone();
        let q = p.translated(TangentVector::from_angle(theta) * d);
        let cfg = SplittingConfig::default();
        let e = |x: TorusPoint| compute_e(&f, &forward_orbit(&f, x, 1), 0, None, &cfg).unwrap().direction;
        prop_assert!(line_angle_between(e(p), e(q)) <= 1e-8);
    }

    #[test]
    fn domination_persists_at_twice_the_gap(i in 0usize..3, ell in 1usize..4, res in 4usize..24) {
        let f = covering(i);
        let samples = splitting_samples(&f, res);
        let one = check_domination(&f, &samples, ell, 0.05, None);
        let two = check_domination(&f, &samples, 2 * ell, 0.05, None);
        prop_assert!(one.valid);
        prop_assert!(two.valid);
        // Exact invariant lines of a linear map give constant (squared) ratios.
        prop_assert!(two.worst_ratio <= one.worst_ratio.powi(2) * (1.0 + 1e-9));
    }

    #[test]
    fn cat_invariance_margin_grows_with_k(eta in 0.05..0.6f64) {
        let cone = build_cone(ConeCore::Constant(unstable_cat()), eta).unwrap();
        let grid = GridSpec::new(8);
        let margins: Vec<f64> = (1..=5).map(|k| check_invariance(&cat(), &cone, k, grid).unwrap().raw_min).collect();
        for w in margins.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "margins {:?}", margins);
        }
    }

    #[test]
    fn expansion_is_bounded_by_lyapunov(i in 0usize..2, p in point()) {
        let f = [cat(), exp()][i].clone();
        let cfg = SplittingConfig::default();
        let mut seg = backward_branch(&f, p, cfg.horizon_f, &BranchSelector::Principal, 16).unwrap();
        seg.extend_forward(&f, 1);
        let s = endocert::splitting::splitting_at(&f, &seg, 0, None, &cfg).unwrap();
        let lyap = lyapunov_along_f(&f, &seg, 20, None, &cfg).unwrap().value;
        let cone = build_cone(ConeCore::Constant(s.f), 0.2).unwrap();
        let lambda = check_expansion(&f, &cone, 1, GridSpec::new(8)).unwrap().lambda;
        prop_assert!(lambda <= lyap.exp() + 0.05, "λ {} vs e^lyap {}", lambda, lyap.exp());
    }

    #[test]
    fn failed_clauses_reproduce_at_finer_resolution(eta in 0.05..0.5f64, k in 1usize..4) {
        // A cone about the stable direction cannot be forward invariant.
        let cone = build_cone(ConeCore::Constant(stable_cat()), eta).unwrap();
        let clause = check_invariance(&cat(), &cone, k, GridSpec::new(8)).unwrap();
        prop_assert!(!clause.pass);
        prop_assert!(reevaluate_clause(&cat(), &cone, &clause, k, 10) < 0.0);
    }

    #[test]
    fn arc_length_converges_under_refinement(i in 0usize..2, p in point(), theta in -0.15..0.15f64, n in 1usize..5) {
        let (f, u) = [(cat(), unstable_cat()), (idhom(), TangentVector::new(1.0, 0.0))][i].clone();
        let dir = u.rotated(theta);
        let cone = build_cone(ConeCore::Constant(dir), 0.2).unwrap();
        let arc = make_u_arc(p.lift(), dir, 0.01, &cone, 8).unwrap();
        let coarse = iterate_arc(&f, &arc, n, &SubdivisionOptions::for_cone(0.2, 2e-3)).unwrap().0;
        let fine = iterate_arc(&f, &arc, n, &SubdivisionOptions::for_cone(0.2, 1e-3)).unwrap().0;
        for (a, b) in coarse.lengths.iter().zip(&fine.lengths) {
            prop_assert!((a - b).abs() <= 1e-3 * b);
        }
    }

    #[test]
    fn cat_u_arcs_double_quickly(p in point(), theta in -0.2..0.2f64, len in 0.025..0.05f64) {
        let delta = 0.05;
        let n0 = ((4.0f64 * delta / delta).ln() / 0.96).ceil() as usize + 1;
        let dir = unstable_cat().rotated(theta);
        let cone = build_cone(ConeCore::Constant(unstable_cat()), 0.2).unwrap();
        let arc = make_u_arc(p.lift(), dir, len, &cone, 4).unwrap();
        let out = detect_delta_u_arc(&cat(), &arc, 2.0 * delta, n0, &SubdivisionOptions::for_cone(0.2, 1e-2)).unwrap();
        prop_assert!(matches!(out, DeltaArcOutcome::Escaped { n, .. } if n <= n0), "{:?}", out);
    }

    #[test]
    fn stable_fibres_cross_the_centre_once(p in point(), len in 0.01..0.05f64, nu in 0.005..0.03f64) {
        let cone = build_cone(ConeCore::Constant(unstable_cat()), 0.2).unwrap();
        let arc = make_u_arc(p.lift(), unstable_cat(), len, &cone, 32).unwrap();
        let field = SingularE { map: &cat(), horizon: 40 };
        let boxed = build_nu_box(&field, &arc, nu, nu / 20.0, 5).unwrap();
        prop_assert!(boxed.fiber_crossings().iter().all(|&c| c == 1));
    }

    #[test]
    fn periodic_points_meet_their_contracts(x in 0.0..0.02f64, y in 0.0..0.02f64) {
        let f = cat();
        let search = PeriodicSearch::default();
        let start = TorusPoint::new(x, y);
        let Ok(p) = find_periodic_point(&f, start, &search) else { return Ok(()) };
        prop_assert!(p.period >= search.min_period && p.period <= search.max_period);
        let l = p.period as i64;
        let orbit = forward_orbit(&f, p.point, p.period);
        prop_assert!((orbit.point(l).distance(&p.point) - p.residual).abs() <= 1e-15);
        prop_assert!(p.residual <= 1e-9);
        let shadow = forward_orbit(&f, start, p.period);
        prop_assert_eq!(p.shadowing.len(), p.period);
        for (j, s) in p.shadowing.iter().enumerate() {
            prop_assert!((orbit.point(j as i64).distance(&shadow.point(j as i64)) - s).abs() <= 1e-12);
            prop_assert!(*s < search.nu);
        }
    }

    #[test]
    fn homology_ignores_trig_terms(
        terms in prop::collection::vec((any::<bool>(), -0.2..0.2f64, -3i64..4, -3i64..4, 0.0..6.3f64), 3),
        seed in any::<u64>(),
    ) {
        let mut f = cat();
        for (cx, amp, a, b, phase) in terms {
            let mut t = TrigTerm::sin(if cx { Coord::X } else { Coord::Y }, amp, (a, b));
            t.phase = phase;
            f = f.with_term(t);
        }
        prop_assert_eq!(homology_matrix(&f, seed).unwrap().matrix, cat().linear);
    }

    #[test]
    fn linear_arc_growth_is_bounded_by_spectral_radius(i in 0usize..3, p in point(), theta in 0.0..3.14f64) {
        let f = covering(i);
        let dir = TangentVector::from_angle(theta);
        let cone = build_cone(ConeCore::Constant(dir), 0.1).unwrap();
        let arc = make_u_arc(p.lift(), dir, 1e-3, &cone, 4).unwrap();
        let series = iterate_arc(&f, &arc, 8, &SubdivisionOptions::for_cone(0.1, 1e-2)).unwrap().0;
        let rho = f.linear.as_mat2().spectral_radius();
        prop_assert!(series.exponent <= rho.ln() + 0.1);
    }

    #[test]
    fn surgery_is_local(i in 0usize..5, c in point(), r in 1e-3..0.05f64, q in point(), entries in prop::array::uniform4(-3.0..3.0f64)) {
        let f = shipped(i);
        let s = LocalSurgery::new(c, r, 2.0 * r, Mat2::from_rows([[entries[0], entries[1]], [entries[2], entries[3]]])).unwrap();
        let g = PerturbedMap::new(f.clone(), vec![s]).unwrap();
        prop_assume!(q.distance(&c) >= 2.0 * r);
        prop_assert_eq!(g.lift(q.lift()), f.lift(q.lift()));
        prop_assert_eq!(g.jacobian(q.lift()), f.jacobian(q.lift()));
    }

    #[test]
    fn surgery_pins_the_derivative(i in 0usize..5, c in point(), r in 1e-3..0.05f64, entries in prop::array::uniform4(-3.0..3.0f64)) {
        let f = shipped(i);
        let target = Mat2::from_rows([[entries[0], entries[1]], [entries[2], entries[3]]]);
        let g = PerturbedMap::new(f, vec![LocalSurgery::new(c, r, 2.0 * r, target).unwrap()]).unwrap();
        prop_assert!((g.derivative(c).matrix - target).max_abs_entry() <= 1e-12);
    }

    #[test]
    fn idhom_lyapunov_matches_a_direct_product(p in point(), k in 1usize..30) {
        let f = idhom();
        let cfg = SplittingConfig::default();
        let mut seg = backward_branch(&f, p, cfg.horizon_f, &BranchSelector::Principal, 16).unwrap();
        seg.extend_forward(&f, 1);
        let est = lyapunov_along_f(&f, &seg, k, None, &cfg).unwrap();
        let f0 = endocert::splitting::compute_f(&f, &seg, 0, None, &cfg).unwrap().direction;
        let oracle = derivative_power(&f, p, k).log_norm_applied(f0) / k as f64;
        prop_assert!((est.value - oracle).abs() <= 1e-9);
        // |off-diagonal| ≤ 0.2π bounds every singular value of Df.
        prop_assert!(est.value >= 0.372f64.ln() && est.value <= 1.628f64.ln());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sinks_attract_their_ball(mu in 1.01..1.08f64, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let f = shear_sink_variant(mu);
        let p = TorusPoint::new(0.0, 0.0);
        let r = 0.01;
        let s = sink_surgery(&f, p, 1, 0.1, r).unwrap();
        prop_assert!(s.spectral_radius < 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let w = TangentVector::from_angle(rng.gen_range(0.0..std::f64::consts::TAU)) * (r * rng.gen::<f64>().sqrt());
            let end = (0..1000).fold(p.translated(w), |x, _| s.map.evaluate(x));
            prop_assert!(end.distance(&p) <= 1e-8, "start {:?} ended at {}", w, end);
        }
    }
}

#[test]
fn domination_and_cone_invariance_agree_on_linear_maps() {
    for f in [cat(), exp(), diag()] {
        let samples = splitting_samples(&f, 16);
        let profile = angle_profile(&samples).unwrap();
        let fdir = samples[0].f;
        let eta = (profile.min / 2.0).min(std::f64::consts::FRAC_PI_4 - 1e-3);
        let cone = build_cone(ConeCore::Constant(fdir), eta).unwrap();
        for ell in 1..=3 {
            let dominated = check_domination(&f, &samples, ell, 0.05, None).valid;
            let invariant = check_invariance(&f, &cone, ell, GridSpec::new(16)).unwrap().pass;
            assert_eq!(dominated, invariant, "{} at ℓ={ell}", f.name);
            assert!(dominated);
        }
    }
}

#[test]
fn partial_hyperbolicity_forces_expanding_homology() {
    for name in canonical::NAMES {
        let cfg = RunConfig {
            map: name.to_string(),
            grid: 32,
            ..RunConfig::default()
        };
        let out = cmd_certify(&cfg).unwrap();
        let valid = out.report.cone.as_ref().is_some_and(|c| c.valid);
        let radius = canonical::by_name(name).unwrap().linear.as_mat2().spectral_radius();
        if valid {
            assert!(radius > 1.0, "{name}: certified with spectral radius {radius}");
        }
    }
}
