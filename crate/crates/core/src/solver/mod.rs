//! Backward lattice solver for the penalized equation, extraction of the
//! reflection process, the schedule over penalization intensities and the
//! discrete path-dependent mode.

mod path_dependent;
mod penalized;
mod reflected;

use std::sync::Arc;

use crate::error::{RbsdeError, Result};
use crate::geometry::{Matrix, PseudoDistance, Vector};

pub use path_dependent::{
    solve_brute_force_tree, solve_path_dependent, PathDependentSolution, PathTerminalFn,
    TreeSolution,
};
pub use penalized::{
    extract_k_path, solve_penalized, PathSolution, ReflectedSolution, SolverField,
};
pub use reflected::{
    holder_quotient, solve_reflected, var_statistics, CapRule, ConvergenceRow, ReflectedRun,
    ScheduleOptions,
};

/// Terminal condition `g(X_N)`.
pub type TerminalFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Driver `F(t, x, y, z)` with its `y`-Jacobian.
pub trait Generator: Send + Sync {
    fn eval(&self, t: f64, x: &Vector, y: &Vector, z: &Matrix) -> Vector;

    fn jacobian_y(&self, t: f64, x: &Vector, y: &Vector, z: &Matrix) -> Matrix;

    /// Lipschitz constant in `y`.
    fn lipschitz_y(&self) -> f64;
}

/// `F = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroGenerator;

impl Generator for ZeroGenerator {
    fn eval(&self, _t: f64, _x: &Vector, y: &Vector, _z: &Matrix) -> Vector {
        Vector::zeros(y.len())
    }

    fn jacobian_y(&self, _t: f64, _x: &Vector, y: &Vector, _z: &Matrix) -> Matrix {
        Matrix::zeros(y.len(), y.len())
    }

    fn lipschitz_y(&self) -> f64 {
        0.0
    }
}

/// `F(t, x, y, z) = a y + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGenerator {
    pub a: f64,
    pub b: Vector,
}

impl Generator for LinearGenerator {
    fn eval(&self, _t: f64, _x: &Vector, y: &Vector, _z: &Matrix) -> Vector {
        y * self.a + &self.b
    }

    fn jacobian_y(&self, _t: f64, _x: &Vector, y: &Vector, _z: &Matrix) -> Matrix {
        Matrix::identity(y.len(), y.len()) * self.a
    }

    fn lipschitz_y(&self) -> f64 {
        self.a.abs()
    }
}

/// How the implicit one-step equation is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    /// Newton's method on the one-step residual with backtracking.
    Newton,
    /// Fixed-point iteration, damped by one half after `damping_after` sweeps.
    Picard { damping_after: usize },
}

/// Penalization intensity, truncation caps and iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizationConfig {
    pub n: u32,
    /// `M1`, truncation level of `psi`.
    pub cap_psi: f64,
    /// `M2`, truncation level of `|z|^2`.
    pub cap_zsq: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub method: StepMethod,
}

impl PenalizationConfig {
    /// Default caps `M1 = 10 max(c, 1) / n`, `M2 = 100`.
    pub fn with_default_caps(n: u32, c_estimate: f64) -> Self {
        Self {
            n,
            cap_psi: 10.0 * c_estimate.max(1.0) / n as f64,
            cap_zsq: 100.0,
            picard_tol: 1e-12,
            picard_max_iters: 200,
            method: StepMethod::Newton,
        }
    }

    /// Uncapped penalty.
    pub fn uncapped(n: u32) -> Self {
        Self {
            cap_psi: f64::INFINITY,
            cap_zsq: f64::INFINITY,
            ..Self::with_default_caps(n, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0
            || !(self.cap_psi > 0.0)
            || !(self.cap_zsq > 0.0)
            || !(self.picard_tol > 0.0)
            || self.picard_max_iters == 0
        {
            return Err(RbsdeError::InfeasibleSpec(format!(
                "invalid penalization config {self:?}"
            )));
        }
        Ok(())
    }

    /// `dt (K_fy + n M1 Lip(grad psi) (1 + M2))`.
    pub fn contraction(&self, dt: f64, lip_f: f64, lip_grad_psi: f64) -> f64 {
        dt * (lip_f + self.n as f64 * self.cap_psi * lip_grad_psi * (1.0 + self.cap_zsq))
    }

    /// Penalty direction and weight at `y`: returns
    /// `n rho_M1(psi) grad psi` and `1 + rho_M2(|z|^2)`.
    pub(crate) fn penalty(&self, pseudo: &PseudoDistance, y: &Vector, z: &Matrix) -> (Vector, f64) {
        let e = pseudo.eval(y);
        let weight = 1.0 + z.norm_squared().min(self.cap_zsq);
        (e.grad * (self.n as f64 * e.value.min(self.cap_psi)), weight)
    }
}

/// Everything needed to solve one implicit step.
pub(crate) struct StepContext<'a> {
    pub pseudo: &'a PseudoDistance,
    pub generator: &'a dyn Generator,
    pub config: &'a PenalizationConfig,
    pub dt: f64,
}

/// Outcome of one node solve.
pub(crate) struct NodeSolve {
    pub y: Vector,
    pub iterations: u32,
}

impl StepContext<'_> {
    fn residual(&self, t: f64, x: &Vector, e: &Vector, z: &Matrix, y: &Vector, zw: f64) -> Vector {
        let ps = self.pseudo.eval(y);
        let f = self.generator.eval(t, x, y, z);
        let n = self.config.n as f64;
        y - e - f * self.dt + ps.grad * (n * ps.value.min(self.config.cap_psi) * zw * self.dt)
    }

    /// Solves `Y = e + F(t, x, Y, z) dt - n rho(psi(Y)) grad psi(Y) (1 + rho(|z|^2)) dt`.
    pub fn solve(
        &self,
        t: f64,
        x: &Vector,
        e: &Vector,
        z: &Matrix,
    ) -> std::result::Result<NodeSolve, f64> {
        let cfg = self.config;
        let zw = 1.0 + z.norm_squared().min(cfg.cap_zsq);
        let n = cfg.n as f64;
        let d = e.len();
        let mut y = e.clone();
        let mut g = self.residual(t, x, e, z, &y, zw);
        let mut res = g.amax();
        for it in 0..cfg.picard_max_iters {
            if res <= cfg.picard_tol {
                return Ok(NodeSolve {
                    y,
                    iterations: it as u32,
                });
            }
            match cfg.method {
                StepMethod::Newton => {
                    let ps = self.pseudo.eval(&y);
                    let mut j =
                        Matrix::identity(d, d) - self.generator.jacobian_y(t, x, &y, z) * self.dt;
                    if ps.value > 0.0 {
                        let active = if ps.value < cfg.cap_psi { 1.0 } else { 0.0 };
                        let pen = &ps.grad * ps.grad.transpose() * active
                            + &ps.hess * ps.value.min(cfg.cap_psi);
                        j += pen * (n * zw * self.dt);
                    }
                    let step = match j.lu().solve(&g) {
                        Some(s) => s,
                        None => g.clone(),
                    };
                    let mut scale = 1.0;
                    loop {
                        let cand = &y - &step * scale;
                        let gc = self.residual(t, x, e, z, &cand, zw);
                        let rc = gc.amax();
                        if rc < res || scale < 1e-6 {
                            y = cand;
                            g = gc;
                            res = rc;
                            break;
                        }
                        scale *= 0.5;
                    }
                }
                StepMethod::Picard { damping_after } => {
                    let next = &y - &g;
                    y = if it >= damping_after {
                        (&y + next) * 0.5
                    } else {
                        next
                    };
                    g = self.residual(t, x, e, z, &y, zw);
                    res = g.amax();
                }
            }
            if !res.is_finite() {
                return Err(res);
            }
        }
        if res <= cfg.picard_tol {
            Ok(NodeSolve {
                y,
                iterations: cfg.picard_max_iters as u32,
            })
        } else {
            Err(res)
        }
    }
}
