use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{RbsdeError, Result};
use crate::geometry::{outward_normal, project, LevelSetDomain, Matrix, PseudoDistance, Vector};
use crate::solver::{
    holder_quotient, ConvergenceRow, Generator, PathSolution, ReflectedSolution, SolverField,
};

/// Outcome of one check: passes exactly when `worst_violation <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub fitted: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(name: &str, worst_violation: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.to_string(),
            passed: worst_violation <= tolerance,
            worst_violation,
            tolerance,
            samples,
            fitted: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.fitted.insert(key.to_string(), value);
        self
    }
}

/// Test process `V` for the variational characterization: mean reversion
/// toward the origin driven by a random linear image of the path increments,
/// kept in the closed domain. Every fourth process instead follows the
/// solution pushed inward along the normal.
fn test_process(
    pseudo: &PseudoDistance,
    r0: f64,
    path: &PathSolution,
    rng_seed: u64,
    which: usize,
) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(which as u64);
    let domain = &pseudo.domain;
    let d = domain.dim();
    let n = path.y.len() - 1;
    let dt = 1.0 / n as f64;
    if which % 4 == 3 {
        let push = rng.random_range(0.0..0.5);
        return path
            .y
            .iter()
            .map(|y| {
                let base = project(domain, y, r0).unwrap_or_else(|_| y.clone());
                let normal = domain.grad_phi(&base);
                let cand = &base - normal.normalize() * push;
                if domain.phi(&cand) <= 0.0 {
                    cand
                } else {
                    base
                }
            })
            .collect();
    }
    let dp = path.dw.first().map_or(1, |w| w.len());
    let mix = Matrix::from_fn(d, dp, |_, _| rng.random_range(-1.0..1.0));
    let speed = rng.random_range(0.1..3.0);
    let mut v = domain.sample_interior(&mut rng);
    let mut out = Vec::with_capacity(n + 1);
    out.push(v.clone());
    for k in 0..n {
        let cand = &v - &v * (speed * dt) + &mix * &path.dw[k];
        v = if domain.phi(&cand) <= 0.0 {
            cand
        } else {
            match project(domain, &cand, r0) {
                Ok(p) => p,
                Err(_) => v,
            }
        };
        out.push(v.clone());
    }
    out
}

/// `sum_k (Y_k - V_k).Delta K_k + c |Y_k - V_k|^2 n(Y_k).Delta K_k` for one test process.
pub fn skorokhod_sum(pseudo: &PseudoDistance, r0: f64, path: &PathSolution, v: &[Vector]) -> f64 {
    let c = 1.0 / (2.0 * r0);
    (0..path.dk.len())
        .map(|k| {
            let y = &path.y[k];
            let normal = outward_normal(pseudo, y).unwrap_or_else(|_| Vector::zeros(y.len()));
            let diff = y - &v[k];
            diff.dot(&path.dk[k]) + c * diff.norm_squared() * normal.dot(&path.dk[k])
        })
        .sum()
}

/// `sum_k (Y_k - V_k).Delta K_k + c |Y_k - V_k|^2 n(Y_k).Delta K_k >= -tol`
/// with `c = 1 / (2 R0)`, for `n_test` processes on every path.
pub fn check_skorokhod(
    solution: &ReflectedSolution,
    pseudo: &PseudoDistance,
    r0: f64,
    n_test: usize,
    seed: u64,
    tol: f64,
) -> CheckReport {
    skorokhod_on_paths(&solution.paths, pseudo, r0, n_test, seed, tol)
}

/// As [`check_skorokhod`] on explicit paths.
pub fn skorokhod_on_paths(
    paths: &[PathSolution],
    pseudo: &PseudoDistance,
    r0: f64,
    n_test: usize,
    seed: u64,
    tol: f64,
) -> CheckReport {
    let c = 1.0 / (2.0 * r0);
    let worst = paths
        .par_iter()
        .enumerate()
        .map(|(pi, path)| {
            let normals: Vec<Vector> = path
                .y
                .iter()
                .take(path.dk.len())
                .map(|y| outward_normal(pseudo, y).unwrap_or_else(|_| Vector::zeros(y.len())))
                .collect();
            let mut worst = f64::NEG_INFINITY;
            for j in 0..n_test {
                let v = test_process(pseudo, r0, path, seed.wrapping_add(pi as u64), j);
                let mut sum = 0.0;
                for k in 0..path.dk.len() {
                    let diff = &path.y[k] - &v[k];
                    sum += diff.dot(&path.dk[k])
                        + c * diff.norm_squared() * normals[k].dot(&path.dk[k]);
                }
                worst = worst.max(-sum);
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
        + 0.0;
    CheckReport::new("skorokhod", worst, tol, paths.len() * n_test).with("c", c)
}

fn z_energy(path: &PathSolution, dt: f64) -> f64 {
    path.z.iter().map(|z| z.norm_squared() * dt).sum()
}

/// Per step `Delta Var <= 1_boundary ([n.F]^+ + |Z|^2 / (2 R0)) dt`, with the
/// excess measured relative to `sum |Z|^2 dt` on the same path.
pub fn check_var_domination(
    solution: &ReflectedSolution,
    pseudo: &PseudoDistance,
    r0: f64,
    generator: &dyn Generator,
    band: f64,
    rel_slack: f64,
) -> CheckReport {
    let field = &solution.field;
    let dt = field.lattice.dt();
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for path in &solution.paths {
        let scale = z_energy(path, dt).max(f64::MIN_POSITIVE);
        for k in 0..path.dk.len() {
            let y = &path.y[k];
            let dvar = path.var[k + 1] - path.var[k];
            let on_boundary = pseudo.psi(y) <= band && pseudo.domain.phi(y) >= -band;
            let rhs = if on_boundary {
                let n = outward_normal(pseudo, y).unwrap_or_else(|_| Vector::zeros(y.len()));
                let t = field.lattice.time(k);
                let f = generator.eval(t, &path.x[k], y, &path.z[k]);
                let nf = n.dot(&f).max(0.0);
                (nf + path.z[k].norm_squared() / (2.0 * r0)) * dt
            } else {
                0.0
            };
            worst = worst.max((dvar - rhs) / scale);
            steps += 1;
        }
    }
    CheckReport::new("var_domination", worst, rel_slack, steps).with("band", band)
}

/// Boundary residence, the variation identity
/// `dVar = [-Tr(Z^T hess phi(Y) Z) / 2]^+ dt` and the direction of `K`.
///
/// The identity is gated per step relative to `sum |Z|^2 dt`; the aggregate
/// relative deviation over whole paths is reported as `aggregate`.
pub fn gamma_martingale_check(
    paths: &[PathSolution],
    domain: &LevelSetDomain,
    dt: f64,
    boundary_tol: f64,
    rel_slack: f64,
    angle_tol: f64,
) -> CheckReport {
    let mut max_phi: f64 = 0.0;
    let mut per_step: f64 = 0.0;
    let mut aggregate: f64 = 0.0;
    let mut max_angle: f64 = 0.0;
    let mut steps = 0;
    for path in paths {
        let scale = z_energy(path, dt).max(f64::MIN_POSITIVE);
        let mut total = 0.0;
        for (k, y) in path.y.iter().enumerate() {
            let e = domain.eval(y);
            max_phi = max_phi.max(e.value.abs());
            if k == path.dk.len() {
                break;
            }
            let z = &path.z[k];
            let tr = (z.transpose() * &e.hess * z).trace();
            let predicted = (-0.5 * tr).max(0.0) * dt;
            let dvar = path.var[k + 1] - path.var[k];
            per_step = per_step.max((dvar - predicted).abs() / scale);
            total += dvar - predicted;
            let dk = &path.dk[k];
            if dk.norm() > 0.0 {
                let cos = dk.dot(&e.grad) / (dk.norm() * e.grad.norm());
                max_angle = max_angle.max(cos.clamp(-1.0, 1.0).acos());
            }
            steps += 1;
        }
        aggregate = aggregate.max(total.abs() / scale);
    }
    let phi_excess = max_phi / boundary_tol;
    let angle_excess = max_angle / angle_tol;
    let id_excess = per_step / rel_slack;
    let worst = phi_excess.max(angle_excess).max(id_excess);
    let mut r = CheckReport::new("gamma_martingale", worst, 1.0, steps)
        .with("max_abs_phi", max_phi)
        .with("per_step", per_step)
        .with("aggregate", aggregate)
        .with("max_angle", max_angle);
    r.fitted.insert("boundary_tol".into(), boundary_tol);
    r
}

/// Least-squares slope of `log sup_dist` against `log n`, dropping the
/// smallest `n`; passes when the slope is at most `gate`.
pub fn check_distance_rate(table: &[ConvergenceRow], gate: f64) -> Result<CheckReport> {
    if table.len() < 5 {
        return Err(RbsdeError::InsufficientData {
            needed: 5,
            got: table.len(),
        });
    }
    let mut rows: Vec<&ConvergenceRow> = table.iter().collect();
    rows.sort_by_key(|r| r.n);
    let pts: Vec<(f64, f64)> = rows[1..]
        .iter()
        .filter(|r| r.sup_dist > 0.0)
        .map(|r| ((r.n as f64).ln(), r.sup_dist.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(RbsdeError::InsufficientData {
            needed: 2,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(CheckReport::new("distance_rate", slope, gate, pts.len())
        .with("slope", slope)
        .with("intercept", my - slope * mx))
}

/// Ratio of the largest to the smallest Hölder quotient across fields.
pub fn check_holder(fields: &[&SolverField], alpha_prime: f64, max_ratio: f64) -> CheckReport {
    let q: Vec<f64> = fields
        .iter()
        .map(|f| holder_quotient(f, alpha_prime))
        .collect();
    if q.len() < 3 {
        return CheckReport::new("holder", f64::INFINITY, max_ratio, q.len());
    }
    let hi = q.iter().copied().fold(0.0, f64::max);
    let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    let mut r = CheckReport::new("holder", ratio, max_ratio, q.len())
        .with("max_quotient", hi)
        .with("min_quotient", lo);
    for (f, v) in fields.iter().zip(&q) {
        r.fitted.insert(format!("quotient_n{}", f.config.n), *v);
    }
    r
}

/// `S^2`, `H^2` and `S^2` lattice distances between two solutions on the same paths.
pub fn solution_distance(a: &ReflectedSolution, b: &ReflectedSolution) -> (f64, f64, f64) {
    let dt = a.field.lattice.dt();
    let m = a.paths.len().max(1) as f64;
    let (mut sy, mut sz, mut sk) = (0.0, 0.0, 0.0);
    for (p, q) in a.paths.iter().zip(&b.paths) {
        sy +=
            p.y.iter()
                .zip(&q.y)
                .map(|(u, v)| (u - v).norm_squared())
                .fold(0.0, f64::max);
        sz +=
            p.z.iter()
                .zip(&q.z)
                .map(|(u, v)| (u - v).norm_squared() * dt)
                .sum::<f64>();
        sk +=
            p.k.iter()
                .zip(&q.k)
                .map(|(u, v)| (u - v).norm_squared())
                .fold(0.0, f64::max);
    }
    ((sy / m).sqrt(), (sz / m).sqrt(), (sk / m).sqrt())
}

/// Solves the problem with the terminal condition perturbed by each `delta`
/// and compares with the unperturbed solution. Passes when the combined
/// error strictly decreases along `deltas` (given in decreasing order) and a
/// second unperturbed solve reproduces the base within `zero_tol`.
pub fn stability_experiment(
    solve: &dyn Fn(f64) -> Result<ReflectedSolution>,
    deltas: &[f64],
    zero_tol: f64,
) -> Result<CheckReport> {
    let base = solve(0.0)?;
    let again = solve(0.0)?;
    let (y0, z0, k0) = solution_distance(&base, &again);
    let zero_err = y0 + z0 + k0;
    let mut errors = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let s = solve(d)?;
        let (y, z, k) = solution_distance(&base, &s);
        errors.push(y + z + k);
    }
    let mut worst: f64 = 0.0;
    for w in errors.windows(2) {
        // a nonnegative gap means the error failed to decrease
        worst = worst.max(w[1] - w[0] + f64::MIN_POSITIVE);
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let passed = monotone && zero_err <= zero_tol;
    let mut r = CheckReport::new(
        "stability",
        if passed { 0.0 } else { worst.max(zero_err) },
        0.0,
        deltas.len() + 1,
    )
    .with("zero_error", zero_err);
    r.passed = passed;
    for (d, e) in deltas.iter().zip(&errors) {
        r.fitted.insert(format!("error_delta_{d}"), *e);
    }
    Ok(r)
}

/// Monte Carlo `E[exp(theta p Var_T(K) / R0)]` over all samples, compared
/// with the estimate from the first half of the samples.
pub fn estimate_exp_moments(
    var_totals: &[f64],
    theta: f64,
    p: f64,
    r0: f64,
    rel_tol: f64,
) -> Result<CheckReport> {
    if var_totals.len() < 2 {
        return Err(RbsdeError::InsufficientData {
            needed: 2,
            got: var_totals.len(),
        });
    }
    let c = theta * p / r0;
    let mean = |xs: &[f64]| xs.iter().map(|v| (c * v).exp()).sum::<f64>() / xs.len() as f64;
    let full = mean(var_totals);
    let half = mean(&var_totals[..var_totals.len() / 2]);
    let change = if full.is_finite() {
        (full - half).abs() / full
    } else {
        f64::INFINITY
    };
    Ok(
        CheckReport::new("exp_moments", change, rel_tol, var_totals.len())
            .with("estimate", full)
            .with("estimate_half", half)
            .with("exponent", c),
    )
}
