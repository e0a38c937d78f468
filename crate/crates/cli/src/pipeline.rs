use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rbsde::geometry::{
    build_pseudo_distance, check_smallness, compute_gamma, estimate_r0, GeometryReport,
    PseudoDistance, R0Options, SearchBudget, SmallnessCase, SmallnessQuery,
};
use rbsde::lattice::sample_paths;
use rbsde::solver::{
    solve_penalized, solve_reflected, CapRule, ConvergenceRow, ReflectedRun, ReflectedSolution,
    ScheduleOptions, StepMethod, TerminalFn,
};
use rbsde::validation::{
    check_distance_rate, check_holder, check_skorokhod, check_var_domination, circle_oracle,
    estimate_exp_moments, gamma_martingale_check, stability_experiment, CheckReport,
};
use serde_json::{json, Value};

use crate::build::{build_problem, build_terminal, Problem};
use crate::config::{Method, RunConfig};
use crate::error::CliError;

/// Geometric constants of the configured domain.
pub struct GeometryPhase {
    pub report: GeometryReport,
    pub json: Value,
}

fn smallness_case(name: &str) -> SmallnessCase {
    match name {
        "i" => SmallnessCase::I,
        "ii" => SmallnessCase::II,
        "iii" => SmallnessCase::III,
        "iv" => SmallnessCase::IV,
        _ => SmallnessCase::None,
    }
}

/// `sup phi_C^+(xi)` and `sup |xi|` over the terminal nodes.
fn terminal_bounds(p: &Problem) -> Result<(f64, f64), CliError> {
    let x = p
        .diffusion
        .states(&p.lattice)
        .map_err(CliError::from_solver)?;
    let last = &x[p.lattice.n_steps];
    let mut phi_c: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for i in 0..last.nodes() {
        let xi = (p.terminal)(&last.vector(i));
        phi_c = phi_c.max(p.core.phi_c(&xi).max(0.0));
        norm = norm.max(xi.norm());
    }
    Ok((phi_c, norm))
}

pub fn geometry_phase(cfg: &RunConfig, p: &Problem) -> Result<GeometryPhase, CliError> {
    let g = &cfg.geometry;
    let r0 = estimate_r0(
        &p.domain,
        &R0Options {
            pairs: g.r0_pairs,
            cap: g.r0_cap,
            seed: cfg.seed,
            ..R0Options::default()
        },
    )
    .map_err(CliError::from_solver)?;
    let arc = match (&p.sector, g.gamma_on_arc) {
        (Some(s), true) => Some(s.inner_arc()),
        (None, true) => {
            return Err(CliError::Config(
                "geometry.gamma_on_arc needs the sector domain".into(),
            ))
        }
        _ => None,
    };
    let gamma = compute_gamma(&p.domain, &p.core, arc.as_ref(), g.gamma_samples, cfg.seed)
        .map_err(CliError::from_solver)?;
    let case = smallness_case(&g.smallness_case);
    let (phi_c_xi, norm_xi) = terminal_bounds(p)?;
    let mut report = GeometryReport::new(gamma.gamma, r0.r0, g.theta);
    if case != SmallnessCase::None {
        let q = SmallnessQuery {
            case,
            gamma: gamma.gamma,
            r0: r0.r0,
            theta: g.theta,
            xi_bound: Some(if case == SmallnessCase::III {
                norm_xi
            } else {
                phi_c_xi
            }),
            f_sign_ok: p.generator_sign_ok,
            samples: g.boundary_samples,
            seed: cfg.seed,
        };
        report =
            check_smallness(&p.domain, &p.core, &q).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let json = json!({
        "domain": p.domain.name,
        "core": p.core.name,
        "dim": p.domain.dim(),
        "report": report,
        "admissible": report.admissible,
        "smallness_requested": g.smallness_case,
        "smallness_passed": case != SmallnessCase::None && report.smallness_case == case,
        "r0": {
            "r0": r0.r0,
            "hessian_bound": r0.hessian_bound,
            "worst_value": r0.worst_value,
            "pairs": r0.pairs,
            "capped": r0.capped,
        },
        "gamma": {
            "gamma": gamma.gamma,
            "argmin": gamma.argmin.as_slice(),
            "samples": gamma.samples,
            "subset": if arc.is_some() { "inner_arc" } else { "boundary" },
        },
        "terminal": { "sup_phi_c_plus": phi_c_xi, "sup_norm": norm_xi },
    });
    Ok(GeometryPhase { report, json })
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn convergence_csv(table: &[ConvergenceRow]) -> String {
    let mut s =
        String::from("n,sup_dist,sup_n_psi,holder_quotient,var_mean,var_max,picard_max_iters\n");
    for r in table {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            fmt_f(r.sup_dist),
            fmt_f(r.sup_n_psi),
            fmt_f(r.holder_quotient),
            fmt_f(r.var_mean),
            fmt_f(r.var_max),
            r.picard_max_iters
        );
    }
    s
}

fn schedule_options(cfg: &RunConfig) -> ScheduleOptions {
    let s = &cfg.solver;
    ScheduleOptions {
        schedule: s.schedule.clone(),
        stop_tol: s.stop_tol,
        caps: match (s.cap_psi, s.cap_zsq) {
            (Some(cap_psi), Some(cap_zsq)) => CapRule::Fixed { cap_psi, cap_zsq },
            _ => CapRule::Default,
        },
        picard_tol: s.picard_tol,
        picard_max_iters: s.picard_max_iters,
        method: match s.method {
            Method::Newton => StepMethod::Newton,
            Method::Picard => StepMethod::Picard {
                damping_after: s.damping_after,
            },
        },
        holder_alpha: s.holder_alpha,
    }
}

fn failed_report(name: &str, tolerance: f64, why: &str) -> CheckReport {
    let mut r = CheckReport::new(name, f64::INFINITY, tolerance, 0);
    r.fitted.insert(format!("unavailable: {why}"), f64::NAN);
    r
}

/// Terminal with the arc angle or the constant value scaled by `1 - delta`.
fn perturbed_terminal(cfg: &RunConfig, p: &Problem, delta: f64) -> Result<TerminalFn, CliError> {
    use crate::config::TerminalConfig as T;
    let s = 1.0 - delta;
    let t = match &cfg.terminal {
        T::ArcPointPair { plus, minus } => T::ArcPointPair {
            plus: s * plus,
            minus: s * minus,
        },
        T::ArcSmooth { alpha } => T::ArcSmooth { alpha: s * alpha },
        T::Constant { value } => T::Constant {
            value: value.iter().map(|v| s * v).collect(),
        },
    };
    Ok(build_terminal(&t, p.sector.as_ref(), p.domain.dim())?.0)
}

struct CheckContext<'a> {
    cfg: &'a RunConfig,
    problem: &'a Problem,
    pseudo: &'a PseudoDistance,
    run: &'a ReflectedRun,
    solution: &'a ReflectedSolution,
    r0: f64,
}

fn run_check(name: &str, c: &CheckContext) -> Result<CheckReport, CliError> {
    let ch = &c.cfg.checks;
    let p = c.problem;
    let dt = p.lattice.dt();
    let last_dist = c.run.table.last().map_or(0.0, |r| r.sup_dist);
    Ok(match name {
        "skorokhod" => check_skorokhod(
            c.solution,
            c.pseudo,
            c.r0,
            ch.test_processes,
            c.cfg.seed,
            ch.skorokhod_tol,
        ),
        "var_domination" => check_var_domination(
            c.solution,
            c.pseudo,
            c.r0,
            p.generator.as_ref(),
            ch.band_factor * last_dist,
            ch.var_slack,
        ),
        "gamma_martingale" => gamma_martingale_check(
            &c.solution.paths,
            &p.domain,
            dt,
            ch.boundary_tol,
            ch.var_slack,
            ch.angle_tol,
        ),
        "distance_rate" => match check_distance_rate(&c.run.table, ch.rate_gate) {
            Ok(r) => r,
            Err(e) => failed_report("distance_rate", ch.rate_gate, &e.to_string()),
        },
        "holder" => {
            let fields: Vec<_> = c
                .run
                .fields
                .iter()
                .filter(|f| f.config.n >= ch.holder_min_n)
                .collect();
            check_holder(&fields, c.cfg.solver.holder_alpha, ch.holder_ratio)
        }
        "kernel_vanishes" => {
            let mut worst: f64 = 0.0;
            for (f, row) in c.run.fields.iter().zip(&c.run.table) {
                let z =
                    f.z.iter()
                        .flat_map(|s| s.data.iter())
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(z).max(row.var_max);
            }
            CheckReport::new("kernel_vanishes", worst, 1e-8, c.run.fields.len())
        }
        "oracle" => oracle_check(c)?,
        "exp_moments" => {
            let samples = sample_paths(&p.lattice, ch.exp_paths, c.cfg.seed.wrapping_add(1));
            let sol = ReflectedSolution::from_paths(
                c.run.last().clone(),
                &samples,
                c.pseudo,
                p.generator.as_ref(),
            )
            .map_err(CliError::from_solver)?;
            let totals: Vec<f64> = sol.paths.iter().map(|q| q.var_total()).collect();
            estimate_exp_moments(&totals, ch.exp_theta, ch.exp_p, c.r0, ch.exp_rel_tol)
                .map_err(CliError::from_solver)?
        }
        "stability" => {
            let config = c.run.last().config;
            let samples = sample_paths(&p.lattice, ch.paths, c.cfg.seed);
            let solve = |delta: f64| {
                let g = perturbed_terminal(c.cfg, p, delta)
                    .map_err(|e| rbsde::RbsdeError::InfeasibleSpec(e.to_string()))?;
                let f = solve_penalized(
                    c.pseudo,
                    &g,
                    p.generator.as_ref(),
                    &p.diffusion,
                    &p.lattice,
                    &config,
                )?;
                ReflectedSolution::from_paths(f, &samples, c.pseudo, p.generator.as_ref())
            };
            let zero_tol = 2.0 * c.cfg.solver.picard_tol * p.lattice.n_steps as f64;
            stability_experiment(&solve, &ch.stability_deltas, zero_tol)
                .map_err(CliError::from_solver)?
        }
        other => return Err(CliError::Config(format!("unknown check `{other}`"))),
    })
}

/// Sup-node distance between the final field and the closed-form circle solution.
fn oracle_check(c: &CheckContext) -> Result<CheckReport, CliError> {
    let p = c.problem;
    let (Some(s), Some(nu)) = (&p.sector, p.nu) else {
        return Err(CliError::Config(
            "the oracle check needs the sector domain with an arc terminal".into(),
        ));
    };
    if p.lattice.driver_dim != 1
        || !matches!(p.diffusion.mode, rbsde::lattice::DiffusionMode::Identity)
    {
        return Err(CliError::Config(
            "the oracle check needs the identity diffusion with one driver".into(),
        ));
    }
    let o = circle_oracle(s.spec.alpha, nu, &p.lattice).map_err(CliError::from_solver)?;
    let f = c.run.last();
    let err = (0..=p.lattice.n_steps)
        .into_par_iter()
        .map(|k| {
            (0..=k)
                .map(|i| (f.y_at(k, i) - s.circle_to_frame(o.theta[k][i])).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let mut r = CheckReport::new(
        "oracle",
        err,
        c.cfg.checks.oracle_tol,
        p.lattice.nodes_at(p.lattice.n_steps),
    );
    let reference = oracle_summary(c.cfg, p)?;
    for key in [
        "expected_var",
        "half_variance",
        "max_conditional_var",
        "steps",
    ] {
        r.fitted.insert(
            format!("oracle_{key}"),
            reference[key].as_f64().unwrap_or(f64::NAN),
        );
    }
    r.fitted.insert(
        "solver_var_mean".into(),
        c.run.table.last().map_or(f64::NAN, |row| row.var_mean),
    );
    Ok(r)
}

/// Circle oracle on the oracle lattice.
pub fn oracle_summary(cfg: &RunConfig, p: &Problem) -> Result<Value, CliError> {
    let (Some(s), Some(nu)) = (&p.sector, p.nu) else {
        return Err(CliError::Config(
            "the oracle needs the sector domain with an arc terminal".into(),
        ));
    };
    let steps = cfg.oracle.steps.unwrap_or(cfg.lattice.steps);
    let lattice = rbsde::lattice::BrownianLattice::new(cfg.lattice.horizon, steps, 1)
        .map_err(CliError::from_solver)?;
    let o = circle_oracle(s.spec.alpha, nu, &lattice).map_err(CliError::from_solver)?;
    Ok(json!({
        "alpha": s.spec.alpha,
        "steps": steps,
        "expected_var": o.expected_var,
        "half_variance": o.half_variance,
        "max_conditional_var": o.max_conditional_var,
        "theta0": o.theta[0][0],
    }))
}

fn paths_csv(solution: &ReflectedSolution, count: usize) -> String {
    let mut s = String::from("path,k");
    let d = solution.field.dim;
    for a in 0..d {
        let _ = write!(s, ",y{a}");
    }
    for a in 0..d {
        let _ = write!(s, ",k{a}");
    }
    s.push_str(",var\n");
    for (pi, q) in solution.paths.iter().take(count).enumerate() {
        for k in 0..q.y.len() {
            let _ = write!(s, "{pi},{k}");
            for v in q.y[k].iter().chain(q.k[k].iter()) {
                let _ = write!(s, ",{}", fmt_f(*v));
            }
            let _ = writeln!(s, ",{}", fmt_f(q.var[k]));
        }
    }
    s
}

fn install_threads(n: usize) {
    if n > 0 {
        // a pool installed by an earlier run in the same process stays in place
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// `geometry` verb: writes `geometry.json` only.
pub fn run_geometry(cfg: &RunConfig, out: &Path) -> Result<GeometryPhase, CliError> {
    install_threads(cfg.threads);
    fs::create_dir_all(out)?;
    let p = build_problem(cfg)?;
    let g = geometry_phase(cfg, &p)?;
    write_json(&out.join("geometry.json"), &g.json)?;
    if !g.report.admissible {
        return Err(CliError::Geometry(format!(
            "gamma = {}, R0 = {}",
            g.report.gamma, g.report.r0
        )));
    }
    Ok(g)
}

/// `oracle` verb: writes `oracle.json` only.
pub fn run_oracle(cfg: &RunConfig, out: &Path) -> Result<Value, CliError> {
    fs::create_dir_all(out)?;
    let p = build_problem(cfg)?;
    let v = oracle_summary(cfg, &p)?;
    write_json(&out.join("oracle.json"), &v)?;
    Ok(v)
}

/// Summary of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checks: Vec<CheckReport>,
    pub table: Vec<ConvergenceRow>,
}

/// `run` verb: geometry, solver schedule and checks, with all outputs.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    install_threads(cfg.threads);
    fs::create_dir_all(out)?;
    let p = build_problem(cfg)?;
    let geo = geometry_phase(cfg, &p)?;
    write_json(&out.join("geometry.json"), &geo.json)?;
    if !geo.report.admissible {
        return Err(CliError::Geometry(format!(
            "gamma = {}, R0 = {}",
            geo.report.gamma, geo.report.r0
        )));
    }
    let budget = SearchBudget {
        seed: cfg.seed.wrapping_add(17),
        ..SearchBudget::default()
    };
    let pseudo =
        build_pseudo_distance(&p.domain, &p.core, &budget).map_err(CliError::from_solver)?;
    let run = solve_reflected(
        &pseudo,
        &p.terminal,
        p.generator.as_ref(),
        &p.diffusion,
        &p.lattice,
        &schedule_options(cfg),
    )
    .map_err(CliError::from_solver)?;
    fs::write(out.join("convergence.csv"), convergence_csv(&run.table))?;
    if cfg.solver.stop_tol > 0.0 {
        run.ensure_converged().map_err(CliError::from_solver)?;
    }
    let samples = sample_paths(
        &p.lattice,
        cfg.checks.paths.max(cfg.checks.dump_paths),
        cfg.seed,
    );
    let solution =
        ReflectedSolution::from_paths(run.last().clone(), &samples, &pseudo, p.generator.as_ref())
            .map_err(CliError::from_solver)?;
    if cfg.checks.dump_paths > 0 {
        fs::write(
            out.join("paths.csv"),
            paths_csv(&solution, cfg.checks.dump_paths),
        )?;
    }
    let ctx = CheckContext {
        cfg,
        problem: &p,
        pseudo: &pseudo,
        run: &run,
        solution: &solution,
        r0: geo.report.r0,
    };
    let mut checks = Vec::with_capacity(cfg.checks.run.len());
    for name in &cfg.checks.run {
        checks.push(run_check(name, &ctx)?);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let mut summary = json!({
        "passed": failed == 0,
        "checks": checks,
        "final_n": run.last().config.n,
        "converged": run.converged,
        "pseudo_distance": {
            "r": pseudo.r,
            "eps": pseudo.eps,
            "kappa": pseudo.kappa,
            "margin": pseudo.margin,
            "lip_grad_psi": pseudo.lip_grad_psi,
        },
    });
    if p.nu.is_some() {
        summary["oracle"] = oracle_summary(cfg, &p)?;
    }
    write_json(&out.join("checks.json"), &summary)?;
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed });
    }
    Ok(RunOutcome {
        checks,
        table: run.table,
    })
}
