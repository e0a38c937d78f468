use std::f64::consts::FRAC_PI_2;

use statrs::function::erf::erf;

use crate::error::{RbsdeError, Result};
use crate::geometry::{Matrix, Vector};
use crate::lattice::{BrownianLattice, PathSample};
use crate::solver::PathSolution;

/// Terminal angle `nu` as a function of `W_T`, with values in `[-alpha, alpha]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nu {
    /// `plus` for `W_T > 0`, `minus` for `W_T < 0`.
    PointPair {
        plus: f64,
        minus: f64,
    },
    /// `alpha (2 Phi(W_T) - 1)` with `Phi` the standard normal cdf.
    SmoothCdf {
        alpha: f64,
    },
    Constant(f64),
}

impl Nu {
    /// Symmetric two-valued `nu = alpha sign(W_T)`.
    pub fn sign(alpha: f64) -> Self {
        Self::PointPair {
            plus: alpha,
            minus: -alpha,
        }
    }

    /// Value at a terminal node; ties of the point pair at `W_T = 0` take the midpoint.
    pub fn at(&self, w: f64) -> f64 {
        match *self {
            Self::PointPair { plus, minus } => {
                if w > 0.0 {
                    plus
                } else if w < 0.0 {
                    minus
                } else {
                    0.5 * (plus + minus)
                }
            }
            Self::SmoothCdf { alpha } => alpha * erf(w / std::f64::consts::SQRT_2),
            Self::Constant(c) => c,
        }
    }

    /// Value on the last edge into a terminal node: a point-pair tie at
    /// `W_T = 0` takes the side of `W_{T - dt}`.
    pub fn edge(&self, w: f64, w_parent: f64) -> f64 {
        match *self {
            Self::PointPair { plus, minus } if w.abs() < 1e-12 => {
                if w_parent > 0.0 {
                    plus
                } else {
                    minus
                }
            }
            _ => self.at(w),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            Self::PointPair { plus, minus } => Self::PointPair {
                plus: s * plus,
                minus: s * minus,
            },
            Self::SmoothCdf { alpha } => Self::SmoothCdf { alpha: s * alpha },
            Self::Constant(c) => Self::Constant(s * c),
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            Self::PointPair { plus, minus } => plus.abs().max(minus.abs()),
            Self::SmoothCdf { alpha } => alpha.abs(),
            Self::Constant(c) => c.abs(),
        }
    }
}

/// Closed-form circle solution: `theta` is the lattice martingale with
/// terminal value `nu`, `Y = (cos theta, sin theta)`, `Z = eta (-sin theta, cos theta)^T`
/// and `dVar = eta^2 / 2 dt`.
#[derive(Debug, Clone)]
pub struct CircleOracle {
    pub alpha: f64,
    pub nu: Nu,
    pub lattice: BrownianLattice,
    /// `theta`, steps `0..=N`.
    pub theta: Vec<Vec<f64>>,
    /// `eta`, steps `0..N`.
    pub eta: Vec<Vec<f64>>,
    /// `E[int_0^T dVar]` by backward recursion.
    pub expected_var: f64,
    /// `(E[nu^2] - E[nu]^2) / 2` under the lattice law.
    pub half_variance: f64,
    /// Largest `E_t[int_t^T dVar]` over all nodes.
    pub max_conditional_var: f64,
}

impl CircleOracle {
    pub fn y(&self, k: usize, idx: usize) -> Vector {
        let (s, c) = self.theta[k][idx].sin_cos();
        Vector::from_vec(vec![c, s])
    }

    pub fn z(&self, k: usize, idx: usize) -> Matrix {
        let (s, c) = self.theta[k][idx].sin_cos();
        let e = self.eta[k][idx];
        Matrix::from_column_slice(2, 1, &[-e * s, e * c])
    }

    /// `Var_T(K)` along a path.
    pub fn path_var(&self, path: &PathSample) -> f64 {
        let dt = self.lattice.dt();
        (0..self.lattice.n_steps)
            .map(|k| 0.5 * self.eta[k][path.nodes[k]].powi(2) * dt)
            .sum()
    }

    /// Exact `E[exp(c Var_T(K))]` under the lattice law.
    pub fn exp_moment(&self, c: f64) -> f64 {
        let l = &self.lattice;
        let dt = l.dt();
        let mut m = vec![1.0; l.nodes_at(l.n_steps)];
        for k in (0..l.n_steps).rev() {
            m = (0..l.nodes_at(k))
                .map(|i| (c * 0.5 * self.eta[k][i].powi(2) * dt).exp() * 0.5 * (m[i] + m[i + 1]))
                .collect();
        }
        m[0]
    }

    /// The oracle along a path, with `Y`, `Z` and `K` pushed through an
    /// affine embedding `y -> shift + rot y` of the plane.
    pub fn path_solution(&self, path: &PathSample, rot: &Matrix, shift: &Vector) -> PathSolution {
        let l = &self.lattice;
        let n = l.n_steps;
        let dt = l.dt();
        let mut out = PathSolution {
            y: Vec::with_capacity(n + 1),
            z: Vec::with_capacity(n),
            dk: Vec::with_capacity(n),
            k: vec![Vector::zeros(2)],
            var: vec![0.0],
            phi_part: vec![Vector::zeros(2)],
            theta_part: vec![Vector::zeros(2)],
            k_residual: vec![Vector::zeros(2)],
            discrepancy: 0.0,
            dw: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
        };
        for k in 0..n {
            let idx = path.nodes[k];
            let y = self.y(k, idx);
            let e = self.eta[k][idx];
            let dvar = 0.5 * e * e * dt;
            // K moves along the outward normal -Y of the region outside the disk
            let dk = rot * (&y * -dvar);
            out.k.push(&out.k[k] + &dk);
            out.k_residual.push(&out.k_residual[k] + &dk);
            out.phi_part.push(out.phi_part[k].clone());
            out.theta_part.push(&out.theta_part[k] + &dk);
            out.var.push(out.var[k] + dvar);
            out.dk.push(dk);
            out.dw.push(l.increment(path.branches[k] as usize));
            out.x.push(l.w(k, idx));
            out.y.push(shift + rot * y);
            out.z.push(rot * self.z(k, idx));
        }
        out.y.push(shift + rot * self.y(n, path.nodes[n]));
        out
    }
}

/// Builds the oracle by exact backward averaging on a one-dimensional lattice.
pub fn circle_oracle(alpha: f64, nu: Nu, lattice: &BrownianLattice) -> Result<CircleOracle> {
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "alpha = {alpha} outside (0, pi/2)"
        )));
    }
    if nu.bound() > alpha + 1e-15 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "terminal angle bound {} exceeds alpha",
            nu.bound()
        )));
    }
    if lattice.driver_dim != 1 {
        return Err(RbsdeError::LatticeMismatch(
            "the circle oracle is driven by one Brownian motion".into(),
        ));
    }
    let n = lattice.n_steps;
    let s = lattice.sqrt_dt();
    let dt = lattice.dt();
    let mut theta = vec![Vec::new(); n + 1];
    let mut eta = vec![Vec::new(); n];
    theta[n] = (0..=n).map(|i| nu.at(lattice.w(n, i)[0])).collect();
    // last step from edge values so that the two-valued terminal never hits its tie
    let mut second = vec![0.0; n + 1];
    let mut half_var_terms = (0.0, 0.0);
    {
        let k = n - 1;
        let mut th = Vec::with_capacity(n);
        let mut et = Vec::with_capacity(n);
        for (i, sec) in second.iter_mut().enumerate().take(n) {
            let wp = lattice.w(k, i)[0];
            let dn = nu.edge(lattice.w(n, i)[0], wp);
            let up = nu.edge(lattice.w(n, i + 1)[0], wp);
            th.push(0.5 * (dn + up));
            et.push((up - dn) / (2.0 * s));
            *sec = 0.5 * (dn * dn + up * up);
        }
        theta[k] = th;
        eta[k] = et;
    }
    let mut m2 = second[..n].to_vec();
    for k in (0..n - 1).rev() {
        let next = &theta[k + 1];
        let th = (0..=k).map(|i| 0.5 * (next[i] + next[i + 1])).collect();
        eta[k] = (0..=k)
            .map(|i| (next[i + 1] - next[i]) / (2.0 * s))
            .collect();
        theta[k] = th;
        m2 = (0..=k).map(|i| 0.5 * (m2[i] + m2[i + 1])).collect();
    }
    half_var_terms.0 = m2[0];
    half_var_terms.1 = theta[0][0];
    let half_variance = 0.5 * (half_var_terms.0 - half_var_terms.1 * half_var_terms.1);

    let mut v = vec![0.0; n];
    let mut vmax: f64 = 0.0;
    for k in (0..n).rev() {
        v = (0..=k)
            .map(|i| {
                let cont = if k + 1 < n {
                    0.5 * (v[i] + v[i + 1])
                } else {
                    0.0
                };
                0.5 * eta[k][i].powi(2) * dt + cont
            })
            .collect();
        vmax = v.iter().copied().fold(vmax, f64::max);
    }
    Ok(CircleOracle {
        alpha,
        nu,
        lattice: *lattice,
        theta,
        eta,
        expected_var: v[0],
        half_variance,
        max_conditional_var: vmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_terminal_equality_case() {
        let l = BrownianLattice::new(1.0, 1000, 1).unwrap();
        let o = circle_oracle(0.5, Nu::sign(0.5), &l).unwrap();
        assert!((o.expected_var - 0.125).abs() < 1e-10, "{}", o.expected_var);
        assert!((o.half_variance - 0.125).abs() < 1e-12);
        for k in 0..=1000 {
            for i in 0..=k {
                assert!((o.y(k, i).norm() - 1.0).abs() < 1e-12);
                assert!(o.theta[k][i].abs() <= 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn constant_terminal_is_static() {
        let l = BrownianLattice::new(1.0, 20, 1).unwrap();
        let o = circle_oracle(0.7, Nu::Constant(0.3), &l).unwrap();
        assert_eq!(o.expected_var, 0.0);
        assert!(o.eta.iter().flatten().all(|&e| e == 0.0));
        assert!(o.theta.iter().flatten().all(|&t| t == 0.3));
    }

    #[test]
    fn conditional_variation_is_bounded() {
        let l = BrownianLattice::new(1.0, 200, 1).unwrap();
        let o = circle_oracle(0.7, Nu::SmoothCdf { alpha: 0.7 }, &l).unwrap();
        assert!(o.max_conditional_var <= 0.5 * 0.49 + 1e-12);
        assert!((o.expected_var - o.half_variance).abs() < 1e-12);
    }
}
