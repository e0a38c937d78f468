//! Recombining binomial lattice for a `d'`-dimensional Brownian motion with
//! `d' <= 2`, forward diffusions on it and reproducible path sampling.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RbsdeError, Result};
use crate::geometry::{Matrix, Vector};

/// Binomial lattice: at step `k` each axis holds `k + 1` nodes with
/// `W = (2j - k) sqrt(dt)`; node `(j1, j2)` has flat index `j1 (k + 1) + j2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianLattice {
    pub horizon: f64,
    pub n_steps: usize,
    pub driver_dim: usize,
}

impl BrownianLattice {
    pub fn new(horizon: f64, n_steps: usize, driver_dim: usize) -> Result<Self> {
        if !(1..=2).contains(&driver_dim) {
            return Err(RbsdeError::LatticeMismatch(format!(
                "driver dimension {driver_dim} is not supported, use 1 or 2"
            )));
        }
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(RbsdeError::LatticeMismatch(format!(
                "invalid horizon {horizon} or step count {n_steps}"
            )));
        }
        Ok(Self {
            horizon,
            n_steps,
            driver_dim,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt().sqrt()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.n_steps as f64
    }

    /// Number of children per node.
    pub fn branching(&self) -> usize {
        1 << self.driver_dim
    }

    pub fn nodes_at(&self, k: usize) -> usize {
        (k + 1).pow(self.driver_dim as u32)
    }

    /// Per-axis indices of a flat node index.
    pub fn coords(&self, k: usize, idx: usize) -> [usize; 2] {
        if self.driver_dim == 1 {
            [idx, 0]
        } else {
            [idx / (k + 1), idx % (k + 1)]
        }
    }

    pub fn index(&self, k: usize, coords: [usize; 2]) -> usize {
        if self.driver_dim == 1 {
            coords[0]
        } else {
            coords[0] * (k + 1) + coords[1]
        }
    }

    /// Brownian value at a node.
    pub fn w(&self, k: usize, idx: usize) -> Vector {
        let c = self.coords(k, idx);
        let s = self.sqrt_dt();
        Vector::from_fn(self.driver_dim, |a, _| (2.0 * c[a] as f64 - k as f64) * s)
    }

    /// Child of node `idx` at step `k` reached by the increment signs
    /// encoded in `branch` (bit `a` set means `+sqrt(dt)` on axis `a`).
    pub fn child(&self, k: usize, idx: usize, branch: usize) -> usize {
        let mut c = self.coords(k, idx);
        for (a, ca) in c.iter_mut().enumerate().take(self.driver_dim) {
            *ca += (branch >> a) & 1;
        }
        self.index(k + 1, c)
    }

    /// Increment `Delta W` along a branch.
    pub fn increment(&self, branch: usize) -> Vector {
        let s = self.sqrt_dt();
        Vector::from_fn(
            self.driver_dim,
            |a, _| if (branch >> a) & 1 == 1 { s } else { -s },
        )
    }
}

/// Values of an `R^m`-valued field on all nodes of one step, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct StepField {
    pub width: usize,
    pub data: Vec<f64>,
}

impl StepField {
    pub fn zeros(nodes: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; nodes * width],
        }
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn get(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.width..(idx + 1) * self.width]
    }

    pub fn vector(&self, idx: usize) -> Vector {
        Vector::from_column_slice(self.get(idx))
    }
}

fn children_checked(
    lattice: &BrownianLattice,
    next: &StepField,
    k: usize,
    idx: usize,
) -> Result<Vec<usize>> {
    let kids: Vec<usize> = (0..lattice.branching())
        .map(|b| lattice.child(k, idx, b))
        .collect();
    for &c in &kids {
        if c >= next.nodes() {
            return Err(RbsdeError::MissingChild { step: k, node: idx });
        }
    }
    Ok(kids)
}

/// Mean of a step-`k+1` field over the children of a step-`k` node.
pub fn conditional_expectation(
    lattice: &BrownianLattice,
    next: &StepField,
    k: usize,
    idx: usize,
) -> Result<Vector> {
    let kids = children_checked(lattice, next, k, idx)?;
    let mut out = Vector::zeros(next.width);
    for &c in &kids {
        out += next.vector(c);
    }
    Ok(out / kids.len() as f64)
}

/// `E_k[Y_{k+1} Delta W^T] / dt`, an `m x d'` matrix.
pub fn z_projection(
    lattice: &BrownianLattice,
    next: &StepField,
    k: usize,
    idx: usize,
) -> Result<Matrix> {
    let kids = children_checked(lattice, next, k, idx)?;
    let dt = lattice.dt();
    let mut z = Matrix::zeros(next.width, lattice.driver_dim);
    for (b, &c) in kids.iter().enumerate() {
        z += next.vector(c) * lattice.increment(b).transpose();
    }
    Ok(z / (kids.len() as f64 * dt))
}

/// Coefficient `(t, x) -> value` of the forward equation.
pub type Coefficient<T> = Arc<dyn Fn(f64, &Vector) -> T + Send + Sync>;

/// Forward state `X` on the lattice.
#[derive(Clone)]
pub enum DiffusionMode {
    /// `X = x0 + W`.
    Identity,
    /// Node-wise Euler steps, averaged over the parents of each node.
    Euler {
        drift: Coefficient<Vector>,
        sigma: Coefficient<Matrix>,
    },
}

impl fmt::Debug for DiffusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("Identity"),
            Self::Euler { .. } => f.write_str("Euler"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardDiffusion {
    pub x0: Vector,
    pub mode: DiffusionMode,
}

impl ForwardDiffusion {
    pub fn identity(x0: Vector) -> Self {
        Self {
            x0,
            mode: DiffusionMode::Identity,
        }
    }

    pub fn euler(
        x0: Vector,
        drift: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
        sigma: impl Fn(f64, &Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            x0,
            mode: DiffusionMode::Euler {
                drift: Arc::new(drift),
                sigma: Arc::new(sigma),
            },
        }
    }

    /// Smallest eigenvalue of `sigma sigma^T` over the given sample points.
    pub fn min_ellipticity(&self, points: &[(f64, Vector)]) -> f64 {
        match &self.mode {
            DiffusionMode::Identity => 1.0,
            DiffusionMode::Euler { sigma, .. } => points
                .iter()
                .map(|(t, x)| {
                    let s = sigma(*t, x);
                    (&s * s.transpose()).symmetric_eigenvalues().min()
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// State at every node of every step.
    pub fn states(&self, lattice: &BrownianLattice) -> Result<Vec<StepField>> {
        let m = self.x0.len();
        if let DiffusionMode::Identity = self.mode {
            if m != lattice.driver_dim {
                return Err(RbsdeError::LatticeMismatch(format!(
                    "identity diffusion needs x0 of dimension {}, got {m}",
                    lattice.driver_dim
                )));
            }
        }
        let mut out = Vec::with_capacity(lattice.n_steps + 1);
        out.push(StepField {
            width: m,
            data: self.x0.as_slice().to_vec(),
        });
        for k in 0..lattice.n_steps {
            let nodes = lattice.nodes_at(k + 1);
            let next = match &self.mode {
                DiffusionMode::Identity => {
                    let mut f = StepField::zeros(nodes, m);
                    for i in 0..nodes {
                        let x = &self.x0 + lattice.w(k + 1, i);
                        f.data[i * m..(i + 1) * m].copy_from_slice(x.as_slice());
                    }
                    f
                }
                DiffusionMode::Euler { drift, sigma } => {
                    let prev = &out[k];
                    let t = lattice.time(k);
                    let dt = lattice.dt();
                    let mut sum = StepField::zeros(nodes, m);
                    let mut count = vec![0usize; nodes];
                    for p in 0..lattice.nodes_at(k) {
                        let x = prev.vector(p);
                        let base = &x + drift(t, &x) * dt;
                        let s = sigma(t, &x);
                        for b in 0..lattice.branching() {
                            let c = lattice.child(k, p, b);
                            let xc = &base + &s * lattice.increment(b);
                            for a in 0..m {
                                sum.data[c * m + a] += xc[a];
                            }
                            count[c] += 1;
                        }
                    }
                    for (c, &n) in count.iter().enumerate() {
                        for a in 0..m {
                            sum.data[c * m + a] /= n as f64;
                        }
                    }
                    sum
                }
            };
            out.push(next);
        }
        Ok(out)
    }
}

/// One sampled lattice path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSample {
    pub seed: u64,
    /// Branch taken at each step (bit `a` set means an up move on axis `a`).
    pub branches: Vec<u8>,
    /// Flat node index at each step `0..=N`.
    pub nodes: Vec<usize>,
}

impl PathSample {
    /// Increment signs `+1/-1` for step `k` and axis `a`.
    pub fn sign(&self, k: usize, a: usize) -> i8 {
        if (self.branches[k] >> a) & 1 == 1 {
            1
        } else {
            -1
        }
    }
}

/// `count` independent paths; path `i` draws from the ChaCha8 stream `i` of
/// the generator seeded with `seed`.
pub fn sample_paths(lattice: &BrownianLattice, count: usize, seed: u64) -> Vec<PathSample> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut branches = Vec::with_capacity(lattice.n_steps);
            let mut nodes = Vec::with_capacity(lattice.n_steps + 1);
            nodes.push(0);
            for k in 0..lattice.n_steps {
                let b = rng.random_range(0..lattice.branching()) as u8;
                branches.push(b);
                let next = lattice.child(k, nodes[k], b as usize);
                nodes.push(next);
            }
            PathSample {
                seed,
                branches,
                nodes,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(l: &BrownianLattice, k: usize, f: impl Fn(&Vector) -> f64) -> StepField {
        let n = l.nodes_at(k);
        StepField {
            width: 1,
            data: (0..n).map(|i| f(&l.w(k, i))).collect(),
        }
    }

    #[test]
    fn moments_are_exact() {
        for dp in [1, 2] {
            let l = BrownianLattice::new(1.0, 8, dp).unwrap();
            let k = 5;
            let c = field(&l, k + 1, |_| 3.0);
            let w = field(&l, k + 1, |w| w[0]);
            let w2 = field(&l, k + 1, |w| w[0] * w[0]);
            for i in 0..l.nodes_at(k) {
                let w0 = l.w(k, i)[0];
                assert!((conditional_expectation(&l, &c, k, i).unwrap()[0] - 3.0).abs() < 1e-15);
                assert!((conditional_expectation(&l, &w, k, i).unwrap()[0] - w0).abs() < 1e-15);
                assert!(
                    (conditional_expectation(&l, &w2, k, i).unwrap()[0] - w0 * w0 - l.dt()).abs()
                        < 1e-14
                );
            }
        }
    }

    #[test]
    fn z_of_affine_and_central_difference() {
        let l = BrownianLattice::new(1.0, 10, 2).unwrap();
        let k = 4;
        let aff = field(&l, k + 1, |w| 2.0 * w[0] - 0.5 * w[1] + 1.0);
        for i in 0..l.nodes_at(k) {
            let z = z_projection(&l, &aff, k, i).unwrap();
            assert!((z[(0, 0)] - 2.0).abs() < 1e-12 && (z[(0, 1)] + 0.5).abs() < 1e-12);
        }
        let l1 = BrownianLattice::new(1.0, 10, 1).unwrap();
        let g = field(&l1, k + 1, |w| w[0].sin());
        for i in 0..l1.nodes_at(k) {
            let w0 = l1.w(k, i)[0];
            let s = l1.sqrt_dt();
            let expected = ((w0 + s).sin() - (w0 - s).sin()) / (2.0 * s);
            assert!((z_projection(&l1, &g, k, i).unwrap()[(0, 0)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn missing_child_is_reported() {
        let l = BrownianLattice::new(1.0, 4, 1).unwrap();
        let short = StepField::zeros(2, 1);
        assert_eq!(
            conditional_expectation(&l, &short, 2, 2),
            Err(RbsdeError::MissingChild { step: 2, node: 2 })
        );
    }

    #[test]
    fn euler_with_constant_coefficients_is_exact() {
        let l = BrownianLattice::new(1.0, 6, 1).unwrap();
        let fwd = ForwardDiffusion::euler(
            Vector::from_vec(vec![0.5]),
            |_, _| Vector::from_vec(vec![0.3]),
            |_, _| Matrix::from_element(1, 1, 2.0),
        );
        let xs = fwd.states(&l).unwrap();
        for (k, step) in xs.iter().enumerate() {
            for i in 0..l.nodes_at(k) {
                let exact = 0.5 + 0.3 * l.time(k) + 2.0 * l.w(k, i)[0];
                assert!((step.get(i)[0] - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paths_are_reproducible_and_consistent() {
        let l = BrownianLattice::new(1.0, 20, 2).unwrap();
        let a = sample_paths(&l, 50, 9);
        assert_eq!(a, sample_paths(&l, 50, 9));
        for p in &a {
            for k in 0..20 {
                let dw = l.w(k + 1, p.nodes[k + 1]) - l.w(k, p.nodes[k]);
                for ax in 0..2 {
                    assert!((dw[ax] - p.sign(k, ax) as f64 * l.sqrt_dt()).abs() < 1e-12);
                }
            }
        }
    }
}
