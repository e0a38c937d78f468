use std::sync::Arc;

use crate::error::{RbsdeError, Result};
use crate::geometry::{ConvexCore, LevelEval, LevelSet, LevelSetDomain, Matrix, Vector};

/// `phi_d(y) = phi_2(r(y), y_d)` with `r(y) = |(y_1, ..., y_{d-1})|`.
///
/// The planar field must be even in its first coordinate.
pub struct RevolvedLevel {
    planar: Arc<dyn LevelSet>,
    dim: usize,
}

const AXIS_EPS: f64 = 1e-12;

impl RevolvedLevel {
    pub fn new(planar: Arc<dyn LevelSet>, dim: usize) -> Self {
        Self { planar, dim }
    }

    /// Like [`LevelSet::eval`] but refuses points on the symmetry axis, where
    /// the chain rule through `r` is singular.
    pub fn eval_off_axis(&self, y: &Vector) -> Result<LevelEval> {
        let r = y.rows(0, self.dim - 1).norm();
        if r == 0.0 {
            return Err(RbsdeError::AxisDegeneracy);
        }
        Ok(self.eval(y))
    }
}

impl LevelSet for RevolvedLevel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let d = self.dim;
        let m = d - 1;
        let r = y.rows(0, m).norm();
        let p = self.planar.eval(&Vector::from_vec(vec![r, y[m]]));
        let (g1, g2) = (p.grad[0], p.grad[1]);
        let (h11, h12, h22) = (p.hess[(0, 0)], p.hess[(0, 1)], p.hess[(1, 1)]);
        let mut grad = Vector::zeros(d);
        let mut hess = Matrix::zeros(d, d);
        grad[m] = g2;
        hess[(m, m)] = h22;
        if r <= AXIS_EPS {
            // planar limit: g1 / r -> h11 and the radial direction is arbitrary
            for i in 0..m {
                hess[(i, i)] = h11;
            }
            return LevelEval {
                value: p.value,
                grad,
                hess,
            };
        }
        let u = y.rows(0, m) / r;
        for i in 0..m {
            grad[i] = g1 * u[i];
            hess[(i, m)] = h12 * u[i];
            hess[(m, i)] = h12 * u[i];
            for j in 0..m {
                let delta = if i == j { 1.0 } else { 0.0 };
                hess[(i, j)] = h11 * u[i] * u[j] + g1 * (delta - u[i] * u[j]) / r;
            }
        }
        LevelEval {
            value: p.value,
            grad,
            hess,
        }
    }
}

/// Rotationally symmetric extension of a planar domain to `R^d`. For `d = 2`
/// the planar domain is returned unchanged.
pub fn revolve_to_dim(planar: &LevelSetDomain, d: usize) -> Result<LevelSetDomain> {
    if planar.dim() != 2 || d < 2 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "revolve needs a planar domain and d >= 2, got dim {} and d {d}",
            planar.dim()
        )));
    }
    if d == 2 {
        return Ok(planar.clone());
    }
    Ok(LevelSetDomain {
        name: format!("revolve({}, d={d})", planar.name),
        level: Arc::new(RevolvedLevel::new(planar.level.clone(), d)),
        bounding_radius: planar.bounding_radius,
        grad_floor: planar.grad_floor,
    })
}

/// Rotationally symmetric extension of a planar core.
pub fn revolve_core(planar: &ConvexCore, d: usize) -> ConvexCore {
    if d == 2 {
        return planar.clone();
    }
    ConvexCore {
        name: format!("revolve({}, d={d})", planar.name),
        level: Arc::new(RevolvedLevel::new(planar.level.clone(), d)),
        contains_origin: planar.contains_origin,
        ball_radius: planar.ball_radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::make_ball;
    use crate::geometry::{fd_relative_error, vector};

    #[test]
    fn revolved_ball_matches_direct_ball() {
        let (planar, _) = make_ball(1.0, 2);
        let (direct, _) = make_ball(1.0, 3);
        let rev = revolve_to_dim(&planar, 3).unwrap();
        for p in [[0.3, -0.2, 0.5], [1.5, 0.1, -0.7], [0.0, 0.0, 0.4]] {
            let y = vector(&p);
            assert!((rev.phi(&y) - direct.phi(&y)).abs() < 1e-12);
            assert!(fd_relative_error(rev.level.as_ref(), &y, 1e-4) < 1e-6);
        }
    }

    #[test]
    fn axis_is_reported() {
        let (planar, _) = make_ball(1.0, 2);
        let rev = RevolvedLevel::new(planar.level.clone(), 3);
        assert_eq!(
            rev.eval_off_axis(&vector(&[0.0, 0.0, 0.5])),
            Err(RbsdeError::AxisDegeneracy)
        );
        assert!(rev.eval_off_axis(&vector(&[0.1, 0.0, 0.5])).is_ok());
    }
}
