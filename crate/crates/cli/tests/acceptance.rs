//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::f64::consts::FRAC_PI_4;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rbsde::catalog::{make_ball, make_sector_domain, SectorDomain, SectorDomainSpec};
use rbsde::geometry::{
    build_pseudo_distance, check_smallness, compute_gamma, estimate_r0, PseudoDistance, R0Options,
    SearchBudget, SmallnessCase, SmallnessQuery, Vector,
};
use rbsde::lattice::{sample_paths, BrownianLattice, ForwardDiffusion};
use rbsde::solver::{
    solve_brute_force_tree, solve_path_dependent, solve_penalized, solve_reflected, var_statistics,
    PathTerminalFn, PenalizationConfig, ReflectedRun, ReflectedSolution, ScheduleOptions,
    TerminalFn, ZeroGenerator,
};
use rbsde::validation::{
    check_distance_rate, check_holder, check_skorokhod, check_var_domination, circle_oracle,
    estimate_exp_moments, stability_experiment, Nu,
};

type Outcome = (bool, String);

fn arc_terminal(s: &SectorDomain, nu: Nu) -> TerminalFn {
    let s = s.clone();
    Arc::new(move |x: &Vector| s.circle_to_frame(nu.at(x[0])))
}

fn circle_oracle_exactness() -> Outcome {
    let t = Instant::now();
    let l = BrownianLattice::new(1.0, 1000, 1).unwrap();
    let o = circle_oracle(0.5, Nu::sign(0.5), &l).unwrap();
    let mut worst_norm: f64 = 0.0;
    for k in 0..=1000 {
        for i in 0..=k {
            worst_norm = worst_norm.max((o.y(k, i).norm() - 1.0).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let err = (o.expected_var - 0.125).abs();
    (
        err <= 1e-10 && worst_norm <= 1e-12 && secs < 1.0,
        format!(
            "E[Var] = {:.17}, | |Y| - 1 | <= {worst_norm:.1e}, {secs:.3} s",
            o.expected_var
        ),
    )
}

fn geometry_constants() -> Outcome {
    let t = Instant::now();
    let s = make_sector_domain(&SectorDomainSpec::new(FRAC_PI_4, 0.2)).unwrap();
    let g = compute_gamma(&s.domain, &s.core, Some(&s.inner_arc()), 2001, 1).unwrap();
    let r0 = estimate_r0(&s.domain, &R0Options::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ok = (g.gamma - FRAC_PI_4.cos()).abs() <= 1e-3
        && (r0.r0 - 1.0).abs() <= 1e-2
        && r0.pairs >= 100_000
        && r0.worst_value >= -1e-10
        && secs < 10.0;
    (
        ok,
        format!(
            "gamma_arc = {:.6}, R0 = {:.6}, worst pair value {:.2e} over {} pairs, {secs:.2} s",
            g.gamma, r0.r0, r0.worst_value, r0.pairs
        ),
    )
}

fn smallness_at(alpha: f64) -> (bool, f64) {
    let s = make_sector_domain(&SectorDomainSpec::new(alpha, 0.2)).unwrap();
    let gamma = compute_gamma(&s.domain, &s.core, Some(&s.inner_arc()), 2001, 1)
        .unwrap()
        .gamma;
    let r0 = estimate_r0(&s.domain, &R0Options::default()).unwrap().r0;
    let arc = s.inner_arc();
    let xi_bound = (0..=400)
        .map(|i| s.core.phi_c(&arc.point(i as f64 / 400.0)).max(0.0))
        .fold(0.0, f64::max);
    let q = SmallnessQuery {
        case: SmallnessCase::I,
        gamma,
        r0,
        theta: 2.0,
        xi_bound: Some(xi_bound),
        f_sign_ok: true,
        samples: 1000,
        seed: 1,
    };
    let rep = check_smallness(&s.domain, &s.core, &q).unwrap();
    (
        rep.smallness_case == SmallnessCase::I,
        rep.margins["case_i.margin"],
    )
}

fn smallness_gate() -> Outcome {
    let (pass08, m08) = smallness_at(0.8);
    let (pass09, m09) = smallness_at(0.9);
    (pass08 && !pass09, format!("alpha 0.8: holds = {pass08} (margin {m08:.4}); alpha 0.9: holds = {pass09} (margin {m09:.4})"))
}

fn convex_sanity() -> Outcome {
    let (d, c) = make_ball(1.0, 2);
    let p = build_pseudo_distance(&d, &c, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 100, 1).unwrap();
    let g: TerminalFn = Arc::new(|_: &Vector| DVector::from_vec(vec![0.4, -0.3]));
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let mut worst_z: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for n in [4, 8, 16, 32, 64, 128, 256] {
        let f = solve_penalized(
            &p,
            &g,
            &ZeroGenerator,
            &fwd,
            &l,
            &PenalizationConfig::with_default_caps(n, 1.0),
        )
        .unwrap();
        worst_z =
            f.z.iter()
                .flat_map(|s| s.data.iter())
                .fold(worst_z, |m, v| m.max(v.abs()));
        worst_var = worst_var.max(var_statistics(&f, &p).1);
    }
    (
        worst_z <= 1e-8 && worst_var <= 1e-8,
        format!("sup |Z| = {worst_z:.1e}, sup Var_T(K) = {worst_var:.1e}"),
    )
}

struct SectorRun {
    sector: SectorDomain,
    pseudo: PseudoDistance,
    lattice: BrownianLattice,
    nu: Nu,
    run: ReflectedRun,
    solution: ReflectedSolution,
}

fn sector_run() -> SectorRun {
    let alpha = 0.7;
    let sector = make_sector_domain(&SectorDomainSpec::new(alpha, 0.2)).unwrap();
    let pseudo =
        build_pseudo_distance(&sector.domain, &sector.core, &SearchBudget::default()).unwrap();
    let lattice = BrownianLattice::new(1.0, 200, 1).unwrap();
    let nu = Nu::SmoothCdf { alpha };
    let g = arc_terminal(&sector, nu);
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let run = solve_reflected(
        &pseudo,
        &g,
        &ZeroGenerator,
        &fwd,
        &lattice,
        &ScheduleOptions::powers_of_two(4, 512),
    )
    .unwrap();
    let solution = ReflectedSolution::from_paths(
        run.last().clone(),
        &sample_paths(&lattice, 50, 21),
        &pseudo,
        &ZeroGenerator,
    )
    .unwrap();
    SectorRun {
        sector,
        pseudo,
        lattice,
        nu,
        run,
        solution,
    }
}

fn penalized_convergence(r: &SectorRun) -> Outcome {
    let diffs: Vec<f64> = r.run.table.iter().filter_map(|row| row.diff_prev).collect();
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let o = circle_oracle(r.sector.spec.alpha, r.nu, &r.lattice).unwrap();
    let f = r.run.last();
    let mut err: f64 = 0.0;
    for k in 0..=r.lattice.n_steps {
        for i in 0..=k {
            err = err.max((f.y_at(k, i) - r.sector.circle_to_frame(o.theta[k][i])).norm());
        }
    }
    let npsi: Vec<f64> = r.run.table.iter().map(|row| row.sup_n_psi).collect();
    let hi = npsi.iter().copied().fold(0.0, f64::max);
    let lo = npsi.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = hi / lo;
    (
        decreasing && err <= 5e-2 && ratio <= 3.0,
        format!(
            "differences decreasing = {decreasing}, oracle error {err:.3e}, n psi ratio {ratio:.3}"
        ),
    )
}

fn distance_rate(r: &SectorRun) -> Outcome {
    let rep = check_distance_rate(&r.run.table, -0.8).unwrap();
    (rep.passed, format!("slope {:.4}", rep.fitted["slope"]))
}

fn skorokhod(r: &SectorRun) -> Outcome {
    let rep = check_skorokhod(&r.solution, &r.pseudo, 1.0, 4, 99, 1e-6);
    (
        rep.passed && rep.samples >= 200,
        format!(
            "{} test processes, worst violation {:.3e}",
            rep.samples, rep.worst_violation
        ),
    )
}

fn var_identity(r: &SectorRun) -> Outcome {
    let dt = r.lattice.dt();
    let band = 10.0 * r.run.table.last().unwrap().sup_dist;
    let mut worst: f64 = 0.0;
    for q in &r.solution.paths {
        let scale: f64 = q.z.iter().map(|z| z.norm_squared() * dt).sum();
        for k in 0..q.dk.len() {
            let y = &q.y[k];
            let on = r.pseudo.psi(y) <= band && r.pseudo.domain.phi(y) >= -band;
            let predicted = if on {
                0.5 * q.z[k].norm_squared() * dt
            } else {
                0.0
            };
            worst = worst.max((q.var[k + 1] - q.var[k] - predicted).abs() / scale);
        }
    }
    let dom = check_var_domination(&r.solution, &r.pseudo, 1.0, &ZeroGenerator, band, 0.05);
    (
        worst <= 0.05 && dom.passed,
        format!(
            "per-step identity deviation {worst:.3e} of sum |Z|^2 dt, domination excess {:.3e}",
            dom.worst_violation
        ),
    )
}

fn holder(r: &SectorRun) -> Outcome {
    let fields: Vec<_> = r.run.fields.iter().filter(|f| f.config.n >= 16).collect();
    let rep = check_holder(&fields, 0.5, 2.0);
    (
        rep.passed && rep.samples == 6,
        format!(
            "quotient ratio {:.4} over {} intensities",
            rep.worst_violation, rep.samples
        ),
    )
}

fn exp_moments() -> Outcome {
    let l = BrownianLattice::new(1.0, 1000, 1).unwrap();
    let o = circle_oracle(0.5, Nu::sign(0.5), &l).unwrap();
    let totals: Vec<f64> = sample_paths(&l, 20_000, 5)
        .iter()
        .map(|p| o.path_var(p))
        .collect();
    let rep = estimate_exp_moments(&totals, 2.0, 1.1, 1.0, 0.1).unwrap();
    let est = rep.fitted["estimate"];
    let exact = o.exp_moment(2.2);
    (
        rep.passed && est.is_finite(),
        format!(
            "estimate {est:.5} (lattice value {exact:.5}), relative change {:.3e}",
            rep.worst_violation
        ),
    )
}

fn stability(r: &SectorRun) -> Outcome {
    let config = r.run.last().config;
    let samples = sample_paths(&r.lattice, 50, 8);
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let solve = |delta: f64| {
        let g = arc_terminal(&r.sector, r.nu.scaled(1.0 - delta));
        let f = solve_penalized(&r.pseudo, &g, &ZeroGenerator, &fwd, &r.lattice, &config)?;
        ReflectedSolution::from_paths(f, &samples, &r.pseudo, &ZeroGenerator)
    };
    let zero_tol = 2.0 * config.picard_tol * r.lattice.n_steps as f64;
    let rep = stability_experiment(&solve, &[0.1, 0.05, 0.025], zero_tol).unwrap();
    let errs: Vec<String> = ["0.1", "0.05", "0.025"]
        .iter()
        .map(|d| format!("{:.4e}", rep.fitted[&format!("error_delta_{d}")]))
        .collect();
    (
        rep.passed,
        format!(
            "errors [{}], re-solve error {:.1e}",
            errs.join(", "),
            rep.fitted["zero_error"]
        ),
    )
}

fn path_dependent() -> Outcome {
    let s = make_sector_domain(&SectorDomainSpec::new(0.6, 0.15)).unwrap();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 10, 1).unwrap();
    let frame = s.clone();
    let g: PathTerminalFn = Arc::new(move |xs: &[Vector]| {
        frame.circle_to_frame(0.6 * (2.0 * xs[0][0] - xs[1][0]).tanh())
    });
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let cfg = PenalizationConfig::uncapped(64);
    let a = solve_path_dependent(&p, &[4, 10], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    let b = solve_brute_force_tree(&p, &[4, 10], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for len in 0..=10usize {
        for code in 0..(1usize << len) {
            let prefix: Vec<u8> = (0..len)
                .map(|j| ((code >> (len - 1 - j)) & 1) as u8)
                .collect();
            worst = worst.max((a.y_along(&prefix) - b.y_along(&prefix)).amax());
            compared += 1;
        }
    }
    (
        worst <= 1e-10,
        format!("max difference {worst:.2e} over {compared} tree nodes"),
    )
}

fn determinism() -> Outcome {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/circle_alpha05.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_rbsde"))
            .args(["run", cfg, "-o"])
            .arg(d.path())
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return (false, format!("run exited with {status}"));
        }
    }
    let mut same = true;
    for f in ["geometry.json", "convergence.csv", "checks.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        same &= a == b;
    }
    (
        same,
        "geometry.json, convergence.csv and checks.json compared byte for byte".into(),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 circle oracle exactness", circle_oracle_exactness()),
        ("2 sector geometry constants", geometry_constants()),
        ("3 smallness gate", smallness_gate()),
        ("4 convex sanity", convex_sanity()),
    ];
    let r = sector_run();
    results.push((
        "5 penalized convergence to oracle",
        penalized_convergence(&r),
    ));
    results.push(("6 distance rate", distance_rate(&r)));
    results.push(("7 Skorokhod property", skorokhod(&r)));
    results.push(("8 variation identity", var_identity(&r)));
    results.push(("9 Hölder uniformity", holder(&r)));
    results.push(("10 exponential moments", exp_moments()));
    results.push(("11 stability", stability(&r)));
    results.push(("12 path-dependent equivalence", path_dependent()));
    results.push(("13 determinism", determinism()));
    for (name, (ok, detail)) in &results {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, (ok, _))| !ok)
        .map(|(n, _)| *n)
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
