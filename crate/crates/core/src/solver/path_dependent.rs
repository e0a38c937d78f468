use std::sync::Arc;

use super::penalized::{sweep, terminal_field};
use super::{Generator, PenalizationConfig, StepContext};
use crate::error::{RbsdeError, Result};
use crate::geometry::{Matrix, PseudoDistance, Vector};
use crate::lattice::{BrownianLattice, DiffusionMode, ForwardDiffusion, StepField};

/// Terminal `g(X_{t_1}, ..., X_{t_l})`.
pub type PathTerminalFn = Arc<dyn Fn(&[Vector]) -> Vector + Send + Sync>;

/// Solution over the state augmented by the frozen value `X_{t_1}`.
#[derive(Debug, Clone)]
pub struct PathDependentSolution {
    pub lattice: BrownianLattice,
    /// Step index of `t_1` when `l = 2`.
    pub split: Option<usize>,
    /// `Y` on steps `0..=t_1` (all steps when `l = 1`).
    pub head: Vec<StepField>,
    /// For each node `j` at step `t_1`, `Y` on steps `t_1..=N` of its cone.
    pub tails: Vec<Vec<StepField>>,
}

impl PathDependentSolution {
    /// `Y` at the end of a partial path given by its branch sequence.
    pub fn y_along(&self, branches: &[u8]) -> Vector {
        let mut idx = 0;
        let mut anchor = 0;
        for (k, &b) in branches.iter().enumerate() {
            if Some(k) == self.split {
                anchor = idx;
            }
            idx = self.lattice.child(k, idx, b as usize);
        }
        let k = branches.len();
        match self.split {
            Some(s) if k > s => self.tails[anchor][k - s].vector(idx),
            Some(s) if k == s => self.head[k].vector(idx),
            _ => self.head[k].vector(idx),
        }
    }

    pub fn y0(&self) -> Vector {
        self.head[0].vector(0)
    }
}

fn check_times(times: &[usize], lattice: &BrownianLattice) -> Result<()> {
    if times.is_empty() || times.len() > 2 {
        return Err(RbsdeError::UnsupportedDepth(times.len()));
    }
    if *times.last().unwrap() != lattice.n_steps
        || times.windows(2).any(|w| w[0] >= w[1])
        || times[0] == 0
    {
        return Err(RbsdeError::LatticeMismatch(format!(
            "observation steps {times:?} must increase, start after 0 and end at {}",
            lattice.n_steps
        )));
    }
    Ok(())
}

/// Interval-by-interval backward construction: on `[t_1, T]` the Markovian
/// problem is solved for every frozen value of `X_{t_1}`, and the resulting
/// time-`t_1` values become the terminal condition on `[0, t_1]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_path_dependent(
    pseudo: &PseudoDistance,
    times: &[usize],
    terminal: &PathTerminalFn,
    generator: &dyn Generator,
    diffusion: &ForwardDiffusion,
    lattice: &BrownianLattice,
    config: &PenalizationConfig,
) -> Result<PathDependentSolution> {
    check_times(times, lattice)?;
    config.validate()?;
    let x = diffusion.states(lattice)?;
    let nsteps = lattice.n_steps;
    if times.len() == 1 {
        let term = terminal_field(
            pseudo,
            lattice,
            &x[nsteps],
            &|_, xn| terminal(std::slice::from_ref(xn)),
            &|_| true,
        )?;
        let (head, _, _) = sweep(
            pseudo,
            generator,
            lattice,
            &x,
            config,
            0,
            nsteps,
            term,
            &|_, _| true,
        )?;
        return Ok(PathDependentSolution {
            lattice: *lattice,
            split: None,
            head,
            tails: Vec::new(),
        });
    }
    let k1 = times[0];
    let dp = lattice.driver_dim;
    let mut tails = Vec::with_capacity(lattice.nodes_at(k1));
    let mut anchor_values = None::<StepField>;
    for j in 0..lattice.nodes_at(k1) {
        let cj = lattice.coords(k1, j);
        let in_cone = move |k: usize, idx: usize| {
            let c = lattice.coords(k, idx);
            (0..dp).all(|a| c[a] >= cj[a] && c[a] <= cj[a] + (k - k1))
        };
        let x1 = x[k1].vector(j);
        let term = terminal_field(
            pseudo,
            lattice,
            &x[nsteps],
            &|_, xn| terminal(&[x1.clone(), xn.clone()]),
            &|idx| in_cone(nsteps, idx),
        )?;
        let (ys, _, _) = sweep(
            pseudo, generator, lattice, &x, config, k1, nsteps, term, &in_cone,
        )?;
        let anchor = anchor_values
            .get_or_insert_with(|| StepField::zeros(lattice.nodes_at(k1), ys[0].width));
        let w = anchor.width;
        anchor.data[j * w..(j + 1) * w].copy_from_slice(ys[0].get(j));
        tails.push(ys);
    }
    let anchor = anchor_values.expect("at least one node at the split step");
    let (head, _, _) = sweep(
        pseudo,
        generator,
        lattice,
        &x,
        config,
        0,
        k1,
        anchor,
        &|_, _| true,
    )?;
    Ok(PathDependentSolution {
        lattice: *lattice,
        split: Some(k1),
        head,
        tails,
    })
}

/// `Y` on every node of the full non-recombining tree, level by level,
/// nodes numbered by their branch sequence read in base `2^{d'}`.
#[derive(Debug, Clone)]
pub struct TreeSolution {
    pub branching: usize,
    pub levels: Vec<Vec<Vector>>,
}

impl TreeSolution {
    pub fn y_along(&self, branches: &[u8]) -> Vector {
        let p = branches
            .iter()
            .fold(0usize, |acc, &b| acc * self.branching + b as usize);
        self.levels[branches.len()][p].clone()
    }
}

/// Exhaustive backward induction on the non-recombining tree of all `2^{d' N}`
/// paths, with the forward state rebuilt along each path. Identity diffusion only.
#[allow(clippy::too_many_arguments)]
pub fn solve_brute_force_tree(
    pseudo: &PseudoDistance,
    times: &[usize],
    terminal: &PathTerminalFn,
    generator: &dyn Generator,
    diffusion: &ForwardDiffusion,
    lattice: &BrownianLattice,
    config: &PenalizationConfig,
) -> Result<TreeSolution> {
    check_times(times, lattice)?;
    if !matches!(diffusion.mode, DiffusionMode::Identity) {
        return Err(RbsdeError::LatticeMismatch(
            "the exhaustive tree supports the identity diffusion only".into(),
        ));
    }
    let b = lattice.branching();
    let nsteps = lattice.n_steps;
    let total: f64 = (0..=nsteps).map(|k| (b as f64).powi(k as i32)).sum();
    if total > (1u64 << 22) as f64 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "tree with {total} nodes is too large"
        )));
    }
    let mut xs: Vec<Vec<Vector>> = vec![vec![diffusion.x0.clone()]];
    for k in 0..nsteps {
        let level: Vec<Vector> = xs[k]
            .iter()
            .flat_map(|x| (0..b).map(move |br| x + lattice.increment(br)))
            .collect();
        xs.push(level);
    }
    let leaves = &xs[nsteps];
    let mut levels: Vec<Vec<Vector>> = vec![Vec::new(); nsteps + 1];
    let mut last = Vec::with_capacity(leaves.len());
    for p in 0..leaves.len() {
        let obs: Vec<Vector> = times
            .iter()
            .map(|&t| xs[t][p / b.pow((nsteps - t) as u32)].clone())
            .collect();
        last.push(terminal(&obs));
    }
    levels[nsteps] = last;
    let ctx = StepContext {
        pseudo,
        generator,
        config,
        dt: lattice.dt(),
    };
    let dt = lattice.dt();
    for k in (0..nsteps).rev() {
        let mut level = Vec::with_capacity(xs[k].len());
        for p in 0..xs[k].len() {
            let kids: Vec<&Vector> = (0..b).map(|br| &levels[k + 1][p * b + br]).collect();
            let dim = kids[0].len();
            let mut e = Vector::zeros(dim);
            for c in &kids {
                e += *c;
            }
            e /= b as f64;
            let mut z = Matrix::zeros(dim, lattice.driver_dim);
            for (br, c) in kids.iter().enumerate() {
                z += *c * lattice.increment(br).transpose();
            }
            z /= b as f64 * dt;
            let s = ctx
                .solve(lattice.time(k), &xs[k][p], &e, &z)
                .map_err(|residual| RbsdeError::PicardDivergence {
                    n: config.n,
                    step: k,
                    node: p,
                    residual,
                })?;
            level.push(s.y);
        }
        levels[k] = level;
    }
    Ok(TreeSolution {
        branching: b,
        levels,
    })
}
