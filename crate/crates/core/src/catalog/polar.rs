use std::f64::consts::PI;
use std::sync::Arc;

use super::ball::ball_core;
use crate::error::{RbsdeError, Result};
use crate::geometry::{
    smoothstep_d2, ConvexCore, LevelEval, LevelSet, LevelSetDomain, Matrix, Vector,
};

/// Planar domain `{|y - o| < rho(angle)}` with `rho(t) = sum_k a_k cos(k t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarStarSpec {
    /// Cosine coefficients `a_0, a_1, ...`.
    pub coeffs: Vec<f64>,
    /// Polar origin `o` of the radius function.
    pub offset: [f64; 2],
    /// Radius of the core ball about the coordinate origin; defaults to a
    /// quarter of the inscribed radius.
    pub core_radius: Option<f64>,
}

impl PolarStarSpec {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            offset: [0.0, 0.0],
            core_radius: None,
        }
    }

    /// `rho`, `rho'`, `rho''` at angle `t`.
    pub fn radius(&self, t: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for (k, a) in self.coeffs.iter().enumerate() {
            let k = k as f64;
            let (s, c) = (k * t).sin_cos();
            out.0 += a * c;
            out.1 -= a * k * s;
            out.2 -= a * k * k * c;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct PolarLevel {
    spec: PolarStarSpec,
    /// Blend radius about `o`: pure `r - rho` beyond `2 r1`, constant inside `r1`.
    r1: f64,
    inner: f64,
}

impl LevelSet for PolarLevel {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let u = Vector::from_vec(vec![y[0] - self.spec.offset[0], y[1] - self.spec.offset[1]]);
        let r = u.norm();
        let constant = -0.5 * self.inner;
        if r <= self.r1 {
            return LevelEval {
                value: constant,
                grad: Vector::zeros(2),
                hess: Matrix::zeros(2, 2),
            };
        }
        let t = u[1].atan2(u[0]);
        let (rho, rho1, rho2) = self.spec.radius(t);
        let er = &u / r;
        let et = Vector::from_vec(vec![-er[1], er[0]]);
        let a = r - rho;
        let ga = &er - &et * (rho1 / r);
        let sym = &er * et.transpose() + &et * er.transpose();
        let ha = sym * (rho1 / (r * r)) + (&et * et.transpose()) * ((1.0 - rho2 / r) / r);
        let (s, s1, s2) = smoothstep_d2((r - self.r1) / self.r1);
        if s == 1.0 {
            return LevelEval {
                value: a,
                grad: ga,
                hess: ha,
            };
        }
        // blend w = s((r - r1) / r1) between the constant and r - rho
        let w1 = s1 / self.r1;
        let w2 = s2 / (self.r1 * self.r1);
        let gw = &er * w1;
        let hw = (&er * er.transpose()) * w2
            + (Matrix::identity(2, 2) - &er * er.transpose()) * (w1 / r);
        let diff = a - constant;
        let value = constant + s * diff;
        let grad = &ga * s + &gw * diff;
        let hess = &ha * s + (&gw * ga.transpose() + &ga * gw.transpose()) + hw * diff;
        LevelEval { value, grad, hess }
    }
}

/// Strictly star-shaped planar domain with a ball core about the origin.
///
/// The margin `inf (y/|y|).(grad phi/|grad phi|)` over the boundary is taken
/// with respect to the coordinate origin, so an offset polar origin can break
/// star-shapedness.
pub fn make_polar_star(spec: &PolarStarSpec) -> Result<(LevelSetDomain, ConvexCore)> {
    if spec.coeffs.is_empty() {
        return Err(RbsdeError::InfeasibleSpec(
            "polar_star needs at least one coefficient".into(),
        ));
    }
    let m = 4096;
    let mut rho_min = f64::INFINITY;
    let mut rho_max: f64 = 0.0;
    for i in 0..m {
        let (r, _, _) = spec.radius(2.0 * PI * i as f64 / m as f64);
        rho_min = rho_min.min(r);
        rho_max = rho_max.max(r);
    }
    if rho_min <= 0.0 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "radius function reaches {rho_min}"
        )));
    }
    let level = PolarLevel {
        spec: spec.clone(),
        r1: 0.2 * rho_min,
        inner: rho_min,
    };
    let o = Vector::from_vec(spec.offset.to_vec());
    let mut margin = f64::INFINITY;
    for i in 0..m {
        let t = 2.0 * PI * i as f64 / m as f64;
        let (r, _, _) = spec.radius(t);
        let y = &o + Vector::from_vec(vec![t.cos(), t.sin()]) * r;
        let n = y.norm();
        if n == 0.0 {
            margin = margin.min(0.0);
            continue;
        }
        let g = level.eval(&y).grad;
        margin = margin.min(y.dot(&g) / (n * g.norm()));
    }
    if margin <= 0.0 {
        return Err(RbsdeError::NotStarShaped { margin });
    }
    let inscribed = rho_min - o.norm();
    let core_radius = spec.core_radius.unwrap_or(0.25 * inscribed);
    if !(core_radius > 0.0 && core_radius < inscribed) {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "core radius {core_radius} does not fit inside the domain"
        )));
    }
    let domain = LevelSetDomain {
        name: format!("polar_star({:?})", spec.coeffs),
        level: Arc::new(level),
        bounding_radius: 1.05 * (rho_max + o.norm()) + 1.0,
        grad_floor: 1.0,
    };
    Ok((domain, ball_core(2, core_radius)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fd_relative_error, vector};

    #[test]
    fn constant_radius_is_unit_ball() {
        let (d, _) = make_polar_star(&PolarStarSpec::new(vec![1.0])).unwrap();
        for p in [[2.0, 0.0], [0.3, -0.8], [-1.0, 1.0]] {
            let y = vector(&p);
            assert!((d.phi(&y) - (y.norm() - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn trefoil_derivatives() {
        let (d, _) = make_polar_star(&PolarStarSpec::new(vec![1.0, 0.0, 0.0, 0.3])).unwrap();
        for p in [
            [0.9, 0.1],
            [-0.5, 0.6],
            [0.25, 0.05],
            [0.1, 0.3],
            [1.4, -0.2],
        ] {
            let e = fd_relative_error(d.level.as_ref(), &vector(&p), 1e-5);
            assert!(e < 1e-6, "{p:?} {e}");
        }
    }

    #[test]
    fn shifted_lobe_is_not_star_shaped() {
        let mut spec = PolarStarSpec::new(vec![1.0, 0.9]);
        spec.offset = [0.1, 0.0];
        assert!(matches!(
            make_polar_star(&spec),
            Err(RbsdeError::NotStarShaped { .. })
        ));
    }
}
