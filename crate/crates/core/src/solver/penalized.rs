use rayon::prelude::*;

use super::{Generator, PenalizationConfig, StepContext, StepMethod, TerminalFn};
use crate::error::{RbsdeError, Result};
use crate::geometry::{Matrix, PseudoDistance, Vector};
use crate::lattice::{
    conditional_expectation, z_projection, BrownianLattice, ForwardDiffusion, PathSample, StepField,
};

/// Markovian fields `u^n(t_k, x) = Y_k`, `v^n(t_k, x) = Z_k` on the lattice.
#[derive(Debug, Clone)]
pub struct SolverField {
    pub lattice: BrownianLattice,
    pub config: PenalizationConfig,
    /// Dimension of `Y`.
    pub dim: usize,
    /// Forward states, steps `0..=N`.
    pub x: Vec<StepField>,
    /// `Y`, steps `0..=N`.
    pub y: Vec<StepField>,
    /// `Z` as column-major `dim x d'` blocks, steps `0..N`.
    pub z: Vec<StepField>,
    /// Largest iteration count per step.
    pub iterations: Vec<u32>,
    /// Contraction heuristic `dt (K_fy + n M1 Lip(grad psi) (1 + M2))`.
    pub contraction: f64,
}

impl SolverField {
    pub fn y_at(&self, k: usize, idx: usize) -> Vector {
        self.y[k].vector(idx)
    }

    pub fn z_at(&self, k: usize, idx: usize) -> Matrix {
        Matrix::from_column_slice(self.dim, self.lattice.driver_dim, self.z[k].get(idx))
    }

    pub fn x_at(&self, k: usize, idx: usize) -> Vector {
        self.x[k].vector(idx)
    }

    pub fn max_iterations(&self) -> u32 {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    /// Largest node-wise difference of `Y` with another field on the same lattice.
    pub fn sup_difference(&self, other: &SolverField) -> f64 {
        self.y
            .iter()
            .zip(&other.y)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }
}

/// Backward sweep from `terminal` at step `k_end` down to step `k_start`.
/// Only nodes accepted by `active` are solved; their children must be active.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sweep(
    pseudo: &PseudoDistance,
    generator: &dyn Generator,
    lattice: &BrownianLattice,
    x: &[StepField],
    config: &PenalizationConfig,
    k_start: usize,
    k_end: usize,
    terminal: StepField,
    active: &(dyn Fn(usize, usize) -> bool + Sync),
) -> Result<(Vec<StepField>, Vec<StepField>, Vec<u32>)> {
    let dim = terminal.width;
    let dp = lattice.driver_dim;
    let ctx = StepContext {
        pseudo,
        generator,
        config,
        dt: lattice.dt(),
    };
    let steps = k_end - k_start;
    let mut ys = vec![StepField::zeros(0, dim); steps + 1];
    let mut zs = vec![StepField::zeros(0, dim * dp); steps];
    let mut iters = vec![0u32; steps];
    ys[steps] = terminal;
    for k in (k_start..k_end).rev() {
        let local = k - k_start;
        let next = &ys[local + 1];
        let t = lattice.time(k);
        let nodes = lattice.nodes_at(k);
        let solved: Vec<Result<Option<(Vector, Matrix, u32)>>> = (0..nodes)
            .into_par_iter()
            .map(|idx| {
                if !active(k, idx) {
                    return Ok(None);
                }
                let e = conditional_expectation(lattice, next, k, idx)?;
                let z = z_projection(lattice, next, k, idx)?;
                let xk = x[k].vector(idx);
                match ctx.solve(t, &xk, &e, &z) {
                    Ok(s) => Ok(Some((s.y, z, s.iterations))),
                    Err(residual) => Err(RbsdeError::PicardDivergence {
                        n: config.n,
                        step: k,
                        node: idx,
                        residual,
                    }),
                }
            })
            .collect();
        let mut yf = StepField::zeros(nodes, dim);
        let mut zf = StepField::zeros(nodes, dim * dp);
        let mut worst = 0;
        for (idx, r) in solved.into_iter().enumerate() {
            if let Some((y, z, it)) = r? {
                yf.data[idx * dim..(idx + 1) * dim].copy_from_slice(y.as_slice());
                zf.data[idx * dim * dp..(idx + 1) * dim * dp].copy_from_slice(z.as_slice());
                worst = worst.max(it);
            }
        }
        ys[local] = yf;
        zs[local] = zf;
        iters[local] = worst;
    }
    Ok((ys, zs, iters))
}

pub(crate) fn terminal_field(
    pseudo: &PseudoDistance,
    lattice: &BrownianLattice,
    x_terminal: &StepField,
    terminal: &(dyn Fn(usize, &Vector) -> Vector + Sync),
    active: &dyn Fn(usize) -> bool,
) -> Result<StepField> {
    let nodes = lattice.nodes_at(lattice.n_steps);
    let mut out: Option<StepField> = None;
    for idx in 0..nodes {
        if !active(idx) {
            continue;
        }
        let g = terminal(idx, &x_terminal.vector(idx));
        let phi = pseudo.domain.phi(&g);
        if phi > 1e-9 {
            return Err(RbsdeError::TerminalOutsideDomain { node: idx, phi });
        }
        let f = out.get_or_insert_with(|| StepField::zeros(nodes, g.len()));
        f.data[idx * g.len()..(idx + 1) * g.len()].copy_from_slice(g.as_slice());
    }
    out.ok_or_else(|| RbsdeError::LatticeMismatch("no active terminal node".into()))
}

/// Solves the penalized equation backward on the lattice.
pub fn solve_penalized(
    pseudo: &PseudoDistance,
    terminal: &TerminalFn,
    generator: &dyn Generator,
    diffusion: &ForwardDiffusion,
    lattice: &BrownianLattice,
    config: &PenalizationConfig,
) -> Result<SolverField> {
    config.validate()?;
    let contraction =
        config.contraction(lattice.dt(), generator.lipschitz_y(), pseudo.lip_grad_psi);
    if matches!(config.method, StepMethod::Picard { .. }) && contraction >= 1.0 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "fixed-point contraction heuristic {contraction} is not below one; use Newton steps or refine the time grid"
        )));
    }
    let x = diffusion.states(lattice)?;
    let term = terminal_field(
        pseudo,
        lattice,
        &x[lattice.n_steps],
        &|_, xn| terminal(xn),
        &|_| true,
    )?;
    let dim = term.width;
    if dim != pseudo.dim() {
        return Err(RbsdeError::LatticeMismatch(format!(
            "terminal has dimension {dim}, domain {}",
            pseudo.dim()
        )));
    }
    let (y, z, iterations) = sweep(
        pseudo,
        generator,
        lattice,
        &x,
        config,
        0,
        lattice.n_steps,
        term,
        &|_, _| true,
    )?;
    Ok(SolverField {
        lattice: *lattice,
        config: *config,
        dim,
        x,
        y,
        z,
        iterations,
        contraction,
    })
}

/// One path of the penalized solution with its reflection process.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    /// `Y_k`, `k = 0..=N`.
    pub y: Vec<Vector>,
    /// `Z_k`, `k = 0..N`.
    pub z: Vec<Matrix>,
    /// `Delta K_k = n rho(psi(Y_k)) grad psi(Y_k) (1 + rho(|Z_k|^2)) dt`.
    pub dk: Vec<Vector>,
    /// Accumulated `K`, `k = 0..=N`.
    pub k: Vec<Vector>,
    /// `Var_k(K) = sum |Delta K|`.
    pub var: Vec<f64>,
    /// Part of `K` from `n Psi` alone.
    pub phi_part: Vec<Vector>,
    /// Part of `K` from `n Psi |Z|^2`.
    pub theta_part: Vec<Vector>,
    /// `K` recovered from the discrete equation with the full martingale increment.
    pub k_residual: Vec<Vector>,
    /// `max_k |K_k - K^res_k|`.
    pub discrepancy: f64,
    /// `Delta W_k` along the path.
    pub dw: Vec<Vector>,
    /// Forward state `X_k`, `k = 0..N`.
    pub x: Vec<Vector>,
}

impl PathSolution {
    pub fn var_total(&self) -> f64 {
        *self.var.last().unwrap_or(&0.0)
    }
}

/// Reads the solution along a sampled path and accumulates `K`.
pub fn extract_k_path(
    field: &SolverField,
    path: &PathSample,
    pseudo: &PseudoDistance,
    generator: &dyn Generator,
) -> Result<PathSolution> {
    let l = &field.lattice;
    let nsteps = l.n_steps;
    if path.nodes.len() != nsteps + 1 || path.branches.len() != nsteps {
        return Err(RbsdeError::LatticeMismatch(format!(
            "path has {} steps, lattice {}",
            path.branches.len(),
            nsteps
        )));
    }
    for (k, &idx) in path.nodes.iter().enumerate() {
        if idx >= l.nodes_at(k) {
            return Err(RbsdeError::LatticeMismatch(format!(
                "node {idx} does not exist at step {k}"
            )));
        }
    }
    let cfg = &field.config;
    let dt = l.dt();
    let d = field.dim;
    let mut out = PathSolution {
        y: Vec::with_capacity(nsteps + 1),
        z: Vec::with_capacity(nsteps),
        dk: Vec::with_capacity(nsteps),
        k: vec![Vector::zeros(d)],
        var: vec![0.0],
        phi_part: vec![Vector::zeros(d)],
        theta_part: vec![Vector::zeros(d)],
        k_residual: vec![Vector::zeros(d)],
        discrepancy: 0.0,
        dw: Vec::with_capacity(nsteps),
        x: Vec::with_capacity(nsteps),
    };
    for k in 0..nsteps {
        let idx = path.nodes[k];
        let y = field.y_at(k, idx);
        let z = field.z_at(k, idx);
        let (pen, weight) = cfg.penalty(pseudo, &y, &z);
        let dphi = &pen * dt;
        let dtheta = &pen * ((weight - 1.0) * dt);
        let dk = &dphi + &dtheta;
        let e = conditional_expectation(l, &field.y[k + 1], k, idx)?;
        let f = generator.eval(l.time(k), &field.x_at(k, idx), &y, &z);
        let dk_res = &e - &y + f * dt;
        let kn = out.k[k].clone() + &dk;
        let kr = out.k_residual[k].clone() + dk_res;
        out.discrepancy = out.discrepancy.max((&kn - &kr).amax());
        out.var.push(out.var[k] + dk.norm());
        out.phi_part.push(out.phi_part[k].clone() + dphi);
        out.theta_part.push(out.theta_part[k].clone() + dtheta);
        out.k.push(kn);
        out.k_residual.push(kr);
        out.dk.push(dk);
        out.dw.push(l.increment(path.branches[k] as usize));
        out.x.push(field.x_at(k, idx));
        out.y.push(y);
        out.z.push(z);
    }
    out.y.push(field.y_at(nsteps, path.nodes[nsteps]));
    Ok(out)
}

/// Final field together with solutions along sampled paths.
#[derive(Debug, Clone)]
pub struct ReflectedSolution {
    pub field: SolverField,
    pub paths: Vec<PathSolution>,
}

impl ReflectedSolution {
    pub fn from_paths(
        field: SolverField,
        samples: &[PathSample],
        pseudo: &PseudoDistance,
        generator: &dyn Generator,
    ) -> Result<Self> {
        let paths = samples
            .par_iter()
            .map(|p| extract_k_path(&field, p, pseudo, generator))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { field, paths })
    }
}
