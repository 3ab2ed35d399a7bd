//! Acceptance criteria 1–9. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

use endocert::arcs::{
    detect_delta_u_arc, find_periodic_point, iterate_arc, lattice_periodic_points, make_u_arc, periodic_census,
    DeltaArcOutcome, PeriodicSearch, SubdivisionOptions,
};
use endocert::canonical::{self, cat, diag, exp, idhom, shearcrit};
use endocert::cone::{build_cone, check_expansion, ConeCore};
use endocert::homology::{area_length_consistency, homology_matrix, radius_consistency, VerdictKind};
use endocert::linalg::line_angle_between;
use endocert::orbit::{backward_branch, entry_times, forward_orbit, preimages, BranchSelector};
use endocert::perturb::{
    collapsed_diameter, cycle_witness, full_kernel_surgery, shear_symmetric_cycle, transitivity_probe,
    KernelSurgeryOptions,
};
use endocert::pipeline::{cmd_certify, RunConfig};
use endocert::splitting::{check_domination, compute_e, splitting_grid, uniqueness_crosscheck, EProvenance, GridSpec, SplittingConfig};
use endocert::surface_map::{derivative_power, lattice_equivariance_defect, locate_critical_set};
use endocert::cone::DichotomyOutcome;
use endocert::{LiftPoint, TangentVector, TorusMap, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, LN_2};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what)
    }
}

fn golden() -> (f64, f64) {
    let s = 5f64.sqrt();
    ((3.0 + s) / 2.0, (3.0 - s) / 2.0)
}

fn criterion_1() -> Outcome {
    let cfg = RunConfig {
        map: "cat".into(),
        grid: 256,
        ..RunConfig::default()
    };
    let out = cmd_certify(&cfg).map_err(|e| e.to_string())?;
    let cert = out.report.cone.as_ref().ok_or("no cone section")?;
    check(cert.valid, format!("cat certificate invalid: {:?}", cert.first_failure))?;
    let (lp, lm) = golden();
    let eta = cfg.eta;
    // min over the cone about the unstable line of ‖Av‖; A is symmetric.
    let bound = (lp * lp * eta.cos().powi(2) + lm * lm * eta.sin().powi(2)).sqrt();
    let lambda = cert.lambda().ok_or("no expansion clause")?;
    let rel = (lambda - bound).abs() / bound;
    check(rel < 0.05, format!("λ = {lambda} vs bound {bound} (rel {rel:.3e})"))?;
    let split = out.report.splitting.as_ref().ok_or("no splitting section")?;
    let d1 = split.ratio_at_one.as_ref().ok_or("no ℓ=1 domination")?;
    let want = (3.0 - 5f64.sqrt()) / (3.0 + 5f64.sqrt());
    let rrel = (d1.worst_ratio - want).abs() / want;
    check(rrel < 0.01, format!("ℓ=1 ratio {} vs {want}", d1.worst_ratio))?;

    let e = exp();
    let a = e.linear.as_mat2();
    let grid = GridSpec::new(256);
    let mut lambdas = Vec::new();
    for ev in a.eigenvalues() {
        let l = ev.re;
        // eigenvector of the symmetric [[3,1],[1,2]]: (1, l − 3)
        let core = ConeCore::Constant(TangentVector::new(1.0, l - 3.0));
        let cone = build_cone(core, eta).map_err(|e| e.to_string())?;
        let r = check_expansion(&e, &cone, 1, grid).map_err(|e| e.to_string())?;
        lambdas.push(r.lambda);
    }
    check(lambdas.iter().all(|l| *l > 1.0), format!("exp expansion constants {lambdas:?}"))?;
    Ok(format!(
        "cat λ={lambda:.6} (bound {bound:.6}), ℓ=1 ratio={:.6}; exp cone λ={:.4}/{:.4}",
        d1.worst_ratio, lambdas[0], lambdas[1]
    ))
}

fn criterion_2() -> Outcome {
    let f = diag();
    let grid = GridSpec::new(64);
    let samples: Vec<_> = splitting_grid(&f, grid, &SplittingConfig::default())
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let c = check_domination(&f, &samples, 1, 0.05, Some(grid));
    check((c.worst_ratio - 0.5).abs() <= 1e-12, format!("worst ratio {}", c.worst_ratio))?;
    for s in &samples {
        let ee = line_angle_between(s.e, TangentVector::new(0.0, 1.0));
        let ff = line_angle_between(s.f, TangentVector::new(1.0, 0.0));
        check(ee <= 1e-12 && ff <= 1e-12, format!("E/F off axis at {}: {ee:.2e} {ff:.2e}", s.base))?;
        check((s.angle - FRAC_PI_2).abs() <= 1e-12, format!("angle {} at {}", s.angle, s.base))?;
    }
    Ok(format!("worst ratio {:.15} over {} samples", c.worst_ratio, samples.len()))
}

fn criterion_3() -> Outcome {
    let f = shearcrit();
    let crit = locate_critical_set(&f, 64, 1e-12);
    check(!crit.is_empty(), "no critical samples".into())?;
    let cfg = SplittingConfig::default();
    let target = TangentVector::new(1.0, -2.0);
    let mut worst_kernel: f64 = 0.0;
    for s in &crit.samples {
        let seg = forward_orbit(&f, s.point, 3);
        let e = compute_e(&f, &seg, 0, Some(&crit), &cfg).map_err(|e| e.to_string())?;
        check(
            matches!(e.provenance, EProvenance::KernelFormula { tau_plus: 0 }),
            format!("provenance {:?} at {}", e.provenance, s.point),
        )?;
        worst_kernel = worst_kernel.max(line_angle_between(e.direction, target));
    }
    check(worst_kernel <= 1e-8, format!("kernel E off (1,−2) by {worst_kernel:.2e}"))?;

    // Segments ending in a critical point, read from up to 8 steps before it.
    let mut worst_cross: f64 = 0.0;
    let mut n = 0;
    let mut seed = 0u64;
    while n < 100 {
        seed += 1;
        let c = crit.samples[(seed as usize * 7) % crit.len()].point;
        let back = 1 + (seed % 8) as usize;
        let seg = backward_branch(&f, c, back, &BranchSelector::Random { seed }, 16).map_err(|e| e.to_string())?;
        let mut seg = seg.recentered(-(back as i64));
        seg.extend_forward(&f, 40);
        if entry_times(&f, &seg, &crit, cfg.margin).tau_plus.is_none() {
            continue;
        }
        let x = uniqueness_crosscheck(&f, &seg, Some(&crit), &cfg).map_err(|e| e.to_string())?;
        check(x.e_routes_independent, "E crosscheck fell back to the N/2N comparison".into())?;
        worst_cross = worst_cross.max(x.e_discrepancy);
        n += 1;
    }
    check(worst_cross <= 1e-6, format!("kernel vs singular-limit E differ by {worst_cross:.2e}"))?;
    Ok(format!(
        "{} critical samples within {worst_kernel:.2e} of (1,−2); crosscheck max {worst_cross:.2e} on {n} segments",
        crit.len()
    ))
}

fn criterion_4() -> Outcome {
    let eta = 0.2;
    let (lp, _) = golden();
    let f = cat();
    let u = TangentVector::new(1.0, lp - 2.0);
    let cone = build_cone(ConeCore::Constant(u), eta).map_err(|e| e.to_string())?;
    let opts = SubdivisionOptions::for_cone(eta, 1e-2);
    let arc = make_u_arc(LiftPoint::new(0.1234, 0.5678), u, 1e-3, &cone, 16).map_err(|e| e.to_string())?;
    let (series, _) = iterate_arc(&f, &arc, 12, &opts).map_err(|e| e.to_string())?;
    let rel = (series.exponent - lp.ln()).abs() / lp.ln();
    check(rel < 0.02, format!("cat exponent {} vs {}", series.exponent, lp.ln()))?;

    let d = diag();
    let hcone = build_cone(ConeCore::Constant(TangentVector::new(1.0, 0.0)), eta).map_err(|e| e.to_string())?;
    let harc = make_u_arc(LiftPoint::new(0.3, 0.3), TangentVector::new(1.0, 0.0), 1e-3, &hcone, 8).map_err(|e| e.to_string())?;
    let (ds, _) = iterate_arc(&d, &harc, 12, &opts).map_err(|e| e.to_string())?;
    check((ds.exponent - LN_2).abs() <= 1e-12, format!("diag exponent {}", ds.exponent))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_n = 0;
    for _ in 0..200 {
        let start = LiftPoint::new(rng.gen(), rng.gen());
        let dir = u.rotated(rng.gen_range(-eta..eta));
        let len = rng.gen_range(1e-4..0.1);
        let a = make_u_arc(start, dir, len, &cone, 4).map_err(|e| e.to_string())?;
        match detect_delta_u_arc(&f, &a, 0.1, 30, &opts).map_err(|e| e.to_string())? {
            DeltaArcOutcome::Escaped { n, .. } => worst_n = worst_n.max(n),
            DeltaArcOutcome::Bounded { .. } => return Err(format!("u-arc from {start:?} stayed below δ")),
        }
    }
    Ok(format!(
        "cat exponent {:.9} (rel {rel:.1e}), diag {:.15}, 200 u-arcs escaped by n={worst_n}",
        series.exponent, ds.exponent
    ))
}

fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    for name in canonical::NAMES {
        let f = canonical::by_name(name).map_err(|e| e.to_string())?;
        let h = homology_matrix(&f, 5).map_err(|e| e.to_string())?;
        check(h.matrix == f.linear, format!("{name}: {:?} vs {:?}", h.matrix.rows(), f.linear.rows()))?;
        lines.push(name);
    }
    let h = homology_matrix(&idhom(), 5).map_err(|e| e.to_string())?;
    let plain = radius_consistency(&h, false);
    check(plain.identity_class_note.is_some(), "idhom note missing".into())?;
    let injected = radius_consistency(&h, true);
    check(injected.kind == VerdictKind::Obstructed, format!("injected verdict {:?}", injected.kind))?;
    Ok(format!("exact A for {}; idhom note present; injected certificate OBSTRUCTED", lines.join("/")))
}

fn criterion_6() -> Outcome {
    let f = canonical::shearcrit_with_amplitude(4.0);
    let cycle = shear_symmetric_cycle(4.0, 6).ok_or("no symmetric cycle")?;
    let w = cycle_witness(&f, &cycle, 1.0).ok_or("no alignment on the cycle")?;
    let opts = KernelSurgeryOptions::default();
    let ks = full_kernel_surgery(&f, &DichotomyOutcome::Witness(Box::new(w)), &opts).map_err(|e| e.to_string())?;
    check(ks.product_norm <= 1e-10, format!("‖Dg^m‖ = {:.3e}", ks.product_norm))?;
    let diam = collapsed_diameter(&ks.map, ks.point, opts.inner_radius / 2.0, ks.m, 64);
    check(diam <= 1e-8, format!("collapse diameter {diam:.3e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let starts: Vec<TorusPoint> = (0..8)
        .map(|_| {
            let v = TangentVector::from_angle(rng.gen_range(0.0..std::f64::consts::TAU)) * (opts.inner_radius * rng.gen_range(0.0..0.5));
            ks.point.translated(v)
        })
        .collect();
    let steps = 1_000_000;
    let before = transitivity_probe(&f, &starts, steps, 64);
    let after = transitivity_probe(&ks.map, &starts, steps, 64);
    let after_max = after.per_start.iter().copied().fold(0.0, f64::max);
    let before_min = before.per_start.iter().copied().fold(1.0, f64::min);
    check(after_max <= 0.05, format!("perturbed coverage {after_max}"))?;
    check(before_min >= 0.9, format!("unperturbed coverage {before_min}"))?;
    Ok(format!(
        "m={} ‖Dg^m‖={:.1e} collapse {diam:.1e}; coverage {before_min:.3} → {after_max:.4}",
        ks.m, ks.product_norm
    ))
}

fn criterion_7() -> Outcome {
    let f = cat();
    let search = PeriodicSearch::default();
    let p = find_periodic_point(&f, TorusPoint::new(0.001, 0.001), &search).map_err(|e| e.to_string())?;
    check(p.period == 1, format!("period {}", p.period))?;
    check(p.point.distance(&TorusPoint::new(0.0, 0.0)) <= 1e-9, format!("point {}", p.point))?;
    check(p.residual <= 1e-9, format!("residual {:.2e}", p.residual))?;
    let shadow = p.shadowing.iter().copied().fold(0.0, f64::max);
    check(shadow < search.nu, format!("shadowing {shadow}"))?;
    let mut counts = Vec::new();
    for l in 1..=3u32 {
        let m = f.linear.pow(l).rows();
        let det = ((m[0][0] - 1) * (m[1][1] - 1) - m[0][1] * m[1][0]).unsigned_abs() as usize;
        let oracle = lattice_periodic_points(f.linear, l);
        let newton = periodic_census(&f, l as usize, 48);
        check(oracle.len() == det, format!("l={l}: enumeration {} vs |det| {det}", oracle.len()))?;
        check(newton.len() == det, format!("l={l}: Newton census {} vs {det}", newton.len()))?;
        for q in &oracle {
            check(newton.iter().any(|r| r.distance(q) < 1e-9), format!("l={l}: lattice point {q} missed"))?;
        }
        counts.push(det);
    }
    Ok(format!("fixed point residual {:.1e}, shadowing {shadow:.1e}; counts {counts:?}", p.residual))
}

fn criterion_8() -> Outcome {
    let eps = 0.05;
    let (len, samples) = (0.7, 1_000_000);
    // Many collinear pieces so the overlap weighting is exercised; a single
    // capsule is exact by construction.
    let seg: Vec<LiftPoint> = (0..=200)
        .map(|i| {
            let t = len * i as f64 / 200.0;
            LiftPoint::new(0.1 + t * 0.6, 0.2 + t * 0.8)
        })
        .collect();
    let m = area_length_consistency(&seg, eps, samples, 8).map_err(|e| e.to_string())?;
    let exact = 2.0 * eps * len + std::f64::consts::PI * eps * eps;
    let rel = (m.area - exact).abs() / exact;
    check(rel < 0.02, format!("segment area {} ± {:.1e} vs {exact}", m.area, m.std_error))?;

    let (lp, _) = golden();
    let u = TangentVector::new(1.0, lp - 2.0);
    let cone = build_cone(ConeCore::Constant(u), 0.2).map_err(|e| e.to_string())?;
    let arc = make_u_arc(LiftPoint::new(0.2, 0.3), u, 0.05, &cone, 16).map_err(|e| e.to_string())?;
    let opts = SubdivisionOptions::for_cone(0.2, 1e-2);
    let mut worst = f64::INFINITY;
    for n in 0..=6 {
        let (_, image) = iterate_arc(&cat(), &arc, n, &opts).map_err(|e| e.to_string())?;
        let a = area_length_consistency(&image.nodes, eps, samples, 80 + n as u64).map_err(|e| e.to_string())?;
        worst = worst.min(a.ratio);
    }
    check(worst >= 1.5 * eps, format!("area/length ratio fell to {worst}"))?;
    Ok(format!(
        "segment area rel err {rel:.2e} (σ {:.1e}); min cat arc ratio {:.3}ε",
        m.std_error / exact,
        worst / eps
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-5;
    let (mut eq, mut fd, mut chain) = (0.0f64, 0.0f64, 0.0f64);
    for name in canonical::NAMES {
        let f = canonical::by_name(name).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let p = LiftPoint::new(rng.gen(), rng.gen());
            eq = eq.max(lattice_equivariance_defect(&f, p));
            let j = f.jacobian(p);
            let col = |dx: f64, dy: f64| {
                let a = f.lift(LiftPoint::new(p.x + dx, p.y + dy));
                let b = f.lift(LiftPoint::new(p.x - dx, p.y - dy));
                ((a.x - b.x) / (2.0 * h), (a.y - b.y) / (2.0 * h))
            };
            let (ax, cx) = col(h, 0.0);
            let (by, dy) = col(0.0, h);
            fd = fd.max((ax - j.a).abs()).max((by - j.b).abs()).max((cx - j.c).abs()).max((dy - j.d).abs());

            let tp = p.project();
            let (n, m) = (rng.gen_range(1..5usize), rng.gen_range(1..5usize));
            let whole = derivative_power(&f, tp, n + m).to_matrix().ok_or("overflow")?;
            let mid = (0..m).fold(tp, |q, _| f.evaluate(q));
            let split = derivative_power(&f, mid, n).to_matrix().ok_or("overflow")? * derivative_power(&f, tp, m).to_matrix().ok_or("overflow")?;
            let scale = whole.max_abs_entry().max(1e-300);
            chain = chain.max((whole - split).max_abs_entry() / scale);
        }
    }
    check(eq <= 1e-12, format!("lattice equivariance defect {eq:.2e}"))?;
    check(fd <= 1e-6, format!("finite-difference mismatch {fd:.2e}"))?;
    check(chain <= 1e-10, format!("chain-rule mismatch {chain:.2e}"))?;
    let mut counts = Vec::new();
    for f in [cat(), exp(), diag(), idhom()] {
        let degree = f.linear.det().unsigned_abs() as usize;
        for _ in 0..1000 {
            let q = TorusPoint::new(rng.gen(), rng.gen());
            let set = preimages(&f, q, 16);
            check(set.len() == degree, format!("{}: {} preimages of {q}, want {degree}", f.name, set.len()))?;
        }
        counts.push(degree);
    }
    Ok(format!(
        "equivariance {eq:.1e}, finite differences {fd:.1e}, chain rule {chain:.1e}; preimage degrees {counts:?}"
    ))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 9] = [
        (1, "linear-map certification", Duration::from_secs(30), criterion_1),
        (2, "boundary domination", Duration::from_secs(5), criterion_2),
        (3, "critical-point splitting", Duration::from_secs(60), criterion_3),
        (4, "u-arc exponential growth", Duration::from_secs(30), criterion_4),
        (5, "homology obstruction", Duration::from_secs(10), criterion_5),
        (6, "kernel surgery demonstration", Duration::from_secs(60), criterion_6),
        (7, "periodic points", Duration::from_secs(30), criterion_7),
        (8, "lift-area consistency", Duration::from_secs(60), criterion_8),
        (9, "invariance and derivative suites", Duration::from_secs(30), criterion_9),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        let t = Instant::now();
        let result = run();
        let dt = t.elapsed();
        let result = match result {
            Ok(msg) if dt > budget => Err(format!("{msg}; runtime {dt:.1?} over {budget:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("criterion {n} ({name}): PASS [{dt:.1?}] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{dt:.1?}] {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
