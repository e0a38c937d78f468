use rayon::prelude::*;
use serde::Serialize;

use super::penalized::{solve_penalized, SolverField};
use super::{Generator, PenalizationConfig, StepMethod, TerminalFn};
use crate::error::{RbsdeError, Result};
use crate::geometry::{distance_to_domain, PseudoDistance};
use crate::lattice::{BrownianLattice, ForwardDiffusion};

/// Choice of truncation caps along the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapRule {
    /// `M1 = 10 max(C, 1) / n` with `C` the previous `sup n psi`, `M2 = 100`.
    Default,
    Fixed {
        cap_psi: f64,
        cap_zsq: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptions {
    /// Increasing penalization intensities.
    pub schedule: Vec<u32>,
    /// Stop once the sup-node change between consecutive intensities is below this.
    pub stop_tol: f64,
    pub caps: CapRule,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub method: StepMethod,
    /// Hölder exponent used for the per-intensity quotient.
    pub holder_alpha: f64,
}

impl ScheduleOptions {
    pub fn powers_of_two(from: u32, to: u32) -> Self {
        let mut schedule = Vec::new();
        let mut n = from.max(1);
        while n <= to {
            schedule.push(n);
            n *= 2;
        }
        Self {
            schedule,
            stop_tol: 0.0,
            caps: CapRule::Default,
            picard_tol: 1e-12,
            picard_max_iters: 200,
            method: StepMethod::Newton,
            holder_alpha: 0.5,
        }
    }
}

/// Per-intensity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub sup_dist: f64,
    pub sup_n_psi: f64,
    pub holder_quotient: f64,
    pub var_mean: f64,
    pub var_max: f64,
    pub picard_max_iters: u32,
    /// Sup-node change of `Y` from the previous intensity.
    pub diff_prev: Option<f64>,
}

/// Fields and diagnostics for every intensity that was run.
#[derive(Debug, Clone)]
pub struct ReflectedRun {
    pub fields: Vec<SolverField>,
    pub table: Vec<ConvergenceRow>,
    pub converged: bool,
    pub stop_tol: f64,
}

impl ReflectedRun {
    pub fn last(&self) -> &SolverField {
        self.fields.last().expect("a run holds at least one field")
    }

    /// `Ok` when the stop tolerance was reached before the schedule ran out.
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            return Ok(());
        }
        let last_diff = self
            .table
            .last()
            .and_then(|r| r.diff_prev)
            .unwrap_or(f64::INFINITY);
        Err(RbsdeError::ScheduleExhausted {
            last_diff,
            stop_tol: self.stop_tol,
        })
    }
}

/// `E[Var_T(K)]` and the largest `Var_T(K)` over all lattice paths, by
/// backward recursion on `|Delta K|`.
pub fn var_statistics(field: &SolverField, pseudo: &PseudoDistance) -> (f64, f64) {
    let l = &field.lattice;
    let dt = l.dt();
    let mut mean = vec![0.0; l.nodes_at(l.n_steps)];
    let mut max = mean.clone();
    for k in (0..l.n_steps).rev() {
        let nodes = l.nodes_at(k);
        let inc: Vec<f64> = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let (pen, w) = field
                    .config
                    .penalty(pseudo, &field.y_at(k, i), &field.z_at(k, i));
                pen.norm() * w * dt
            })
            .collect();
        let mut m = vec![0.0; nodes];
        let mut x = vec![0.0; nodes];
        for i in 0..nodes {
            let kids: Vec<usize> = (0..l.branching()).map(|b| l.child(k, i, b)).collect();
            m[i] = inc[i] + kids.iter().map(|&c| mean[c]).sum::<f64>() / kids.len() as f64;
            x[i] = inc[i] + kids.iter().map(|&c| max[c]).fold(0.0, f64::max);
        }
        mean = m;
        max = x;
    }
    (mean[0], max[0])
}

/// Discrete Hölder quotient
/// `sup |u(t,x) - u(t',x')| / (|t - t'|^(a/2) + |x - x'|^a)` over a fixed
/// subsample of node pairs.
pub fn holder_quotient(field: &SolverField, alpha: f64) -> f64 {
    let l = &field.lattice;
    let per_axis = if l.driver_dim == 1 { 24 } else { 6 };
    let step_stride = (l.n_steps / 40).max(1);
    let mut pts = Vec::new();
    let mut k = 0;
    loop {
        let stride = ((k + 1) / per_axis).max(1);
        for i in 0..l.nodes_at(k) {
            let c = l.coords(k, i);
            if c.iter().take(l.driver_dim).all(|&ca| ca % stride == 0) {
                pts.push((l.time(k), field.x_at(k, i), field.y_at(k, i)));
            }
        }
        if k == l.n_steps {
            break;
        }
        k = (k + step_stride).min(l.n_steps);
    }
    (0..pts.len())
        .into_par_iter()
        .map(|a| {
            let (ta, xa, ya) = &pts[a];
            let mut best: f64 = 0.0;
            for (tb, xb, yb) in &pts[a + 1..] {
                let den = (ta - tb).abs().powf(alpha / 2.0) + (xa - xb).norm().powf(alpha);
                if den > 0.0 {
                    best = best.max((ya - yb).norm() / den);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

fn sup_distance_and_penalty(field: &SolverField, pseudo: &PseudoDistance) -> (f64, f64) {
    let n = field.config.n as f64;
    field
        .y
        .par_iter()
        .map(|step| {
            let mut dist: f64 = 0.0;
            let mut npsi: f64 = 0.0;
            for i in 0..step.nodes() {
                let y = step.vector(i);
                let phi = pseudo.domain.phi(&y);
                if phi > 0.0 {
                    dist = dist.max(distance_to_domain(&pseudo.domain, &y).unwrap_or(phi));
                    npsi = npsi.max(n * pseudo.psi(&y));
                }
            }
            (dist, npsi)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

/// Runs the penalized solver along the schedule and records diagnostics.
pub fn solve_reflected(
    pseudo: &PseudoDistance,
    terminal: &TerminalFn,
    generator: &dyn Generator,
    diffusion: &ForwardDiffusion,
    lattice: &BrownianLattice,
    opts: &ScheduleOptions,
) -> Result<ReflectedRun> {
    if opts.schedule.is_empty() || opts.schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RbsdeError::InfeasibleSpec(
            "schedule must be nonempty and increasing".into(),
        ));
    }
    let mut fields: Vec<SolverField> = Vec::new();
    let mut table = Vec::new();
    let mut c_est = 1.0;
    let mut converged = false;
    for &n in &opts.schedule {
        let (cap_psi, cap_zsq) = match opts.caps {
            CapRule::Default => {
                let c = PenalizationConfig::with_default_caps(n, c_est);
                (c.cap_psi, c.cap_zsq)
            }
            CapRule::Fixed { cap_psi, cap_zsq } => (cap_psi, cap_zsq),
        };
        let config = PenalizationConfig {
            n,
            cap_psi,
            cap_zsq,
            picard_tol: opts.picard_tol,
            picard_max_iters: opts.picard_max_iters,
            method: opts.method,
        };
        let field = solve_penalized(pseudo, terminal, generator, diffusion, lattice, &config)?;
        let (sup_dist, sup_n_psi) = sup_distance_and_penalty(&field, pseudo);
        let (var_mean, var_max) = var_statistics(&field, pseudo);
        let diff_prev = fields.last().map(|prev| field.sup_difference(prev));
        table.push(ConvergenceRow {
            n,
            sup_dist,
            sup_n_psi,
            holder_quotient: holder_quotient(&field, opts.holder_alpha),
            var_mean,
            var_max,
            picard_max_iters: field.max_iterations(),
            diff_prev,
        });
        c_est = sup_n_psi;
        fields.push(field);
        // with Y in the closed domain at every node the penalty never fires and
        // the field solves the equation for every intensity
        if sup_n_psi == 0.0 || diff_prev.is_some_and(|d| d <= opts.stop_tol) {
            converged = true;
            break;
        }
    }
    Ok(ReflectedRun {
        fields,
        table,
        converged,
        stop_tol: opts.stop_tol,
    })
}
