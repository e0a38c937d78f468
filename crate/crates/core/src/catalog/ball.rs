use std::sync::Arc;

use crate::geometry::{
    smooth_radius, ConvexCore, LevelEval, LevelSet, LevelSetDomain, Matrix, RhoBridge, Vector,
};

/// `phi(y) = h(|y|) - radius`, with `h` the even polynomial replacing `|y|`
/// on `[0, radius / 4]`.
#[derive(Debug, Clone, Copy)]
struct BallLevel {
    dim: usize,
    radius: f64,
}

impl LevelSet for BallLevel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let (h, a, b) = smooth_radius(y.norm_squared(), 0.25 * self.radius);
        LevelEval {
            value: h - self.radius,
            grad: y * a,
            hess: Matrix::identity(self.dim, self.dim) * a + (y * y.transpose()) * b,
        }
    }
}

/// `phi_C(y) = rho_eps(|y| - radius)`: a ball core whose level function is
/// the distance outside and C2 through the center.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BallCoreLevel {
    pub dim: usize,
    pub radius: f64,
    pub bridge: RhoBridge,
}

impl LevelSet for BallCoreLevel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let d = self.dim;
        let r = y.norm();
        let (v, d1, d2) = self.bridge.eval(r - self.radius);
        if r == 0.0 {
            return LevelEval {
                value: v,
                grad: Vector::zeros(d),
                hess: Matrix::zeros(d, d),
            };
        }
        let yh = y / r;
        let proj = &yh * yh.transpose();
        let hess = &proj * d2 + (Matrix::identity(d, d) - &proj) * (d1 / r);
        LevelEval {
            value: v,
            grad: yh * d1,
            hess,
        }
    }
}

/// Ball core of the given radius centered at the origin, bridged over the
/// whole inner ball.
pub fn ball_core(dim: usize, radius: f64) -> ConvexCore {
    ConvexCore {
        name: format!("ball_core(r={radius})"),
        level: Arc::new(BallCoreLevel {
            dim,
            radius,
            bridge: RhoBridge::new(radius),
        }),
        contains_origin: true,
        ball_radius: Some(radius),
    }
}

/// Ball of the given radius in `R^dim` with the concentric core of half the
/// radius.
pub fn make_ball(radius: f64, dim: usize) -> (LevelSetDomain, ConvexCore) {
    assert!(
        radius > 0.0 && dim >= 1,
        "ball needs a positive radius and dimension"
    );
    let domain = LevelSetDomain {
        name: format!("ball(r={radius})"),
        level: Arc::new(BallLevel { dim, radius }),
        bounding_radius: 1.05 * radius + 1.0,
        grad_floor: 1.0,
    };
    (domain, ball_core(dim, 0.5 * radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fd_relative_error, vector};

    #[test]
    fn distance_form_outside() {
        let (d, c) = make_ball(1.0, 2);
        assert!((d.phi(&vector(&[2.0, 0.0])) - 1.0).abs() < 1e-15);
        assert!(d.phi(&Vector::zeros(2)) < 0.0);
        assert!((c.phi_c(&vector(&[0.0, 2.0])) - 1.5).abs() < 1e-15);
        assert!((c.phi_c(&Vector::zeros(2)) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn derivatives_near_center_and_boundary() {
        let (d, c) = make_ball(1.0, 3);
        for p in [[0.01, 0.2, -0.1], [0.6, 0.5, 0.4], [0.0, 0.0, 1.3]] {
            let y = vector(&p);
            assert!(fd_relative_error(d.level.as_ref(), &y, 1e-4) < 1e-6);
            assert!(fd_relative_error(c.level.as_ref(), &y, 1e-4) < 1e-6);
        }
    }
}
