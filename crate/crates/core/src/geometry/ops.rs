use nalgebra::DMatrix;

use super::level_set::{LevelSetDomain, Vector};
use super::pseudo::PseudoDistance;
use crate::error::{RbsdeError, Result};

const PROJECT_MAX_ITERS: usize = 100;

/// Closest point of the closed domain.
///
/// Points of the closure are returned unchanged. Outside, Newton's method is
/// run on `x + t grad phi(x) = y, phi(x) = 0`, started from the first-order
/// projection. Fails when the distance reaches `r0`, where the projection may
/// be multivalued.
pub fn project(domain: &LevelSetDomain, y: &Vector, r0: f64) -> Result<Vector> {
    let e = domain.eval(y);
    if e.value <= 0.0 {
        return Ok(y.clone());
    }
    let d = y.len();
    let g2 = e.grad.norm_squared();
    if g2 < 1e-300 {
        return Err(RbsdeError::DegenerateGradient {
            norm: g2.sqrt(),
            floor: domain.grad_floor,
        });
    }
    let mut x = y - &e.grad * (e.value / g2);
    let mut t = e.value / g2;
    let mut residual = f64::INFINITY;
    for _ in 0..PROJECT_MAX_ITERS {
        let ex = domain.eval(&x);
        let mut f = Vector::zeros(d + 1);
        for i in 0..d {
            f[i] = x[i] + t * ex.grad[i] - y[i];
        }
        f[d] = ex.value;
        residual = f.amax();
        if residual < 1e-14 * (1.0 + y.amax()) {
            break;
        }
        let mut j = DMatrix::<f64>::zeros(d + 1, d + 1);
        for r in 0..d {
            for c in 0..d {
                j[(r, c)] = t * ex.hess[(r, c)] + if r == c { 1.0 } else { 0.0 };
            }
            j[(r, d)] = ex.grad[r];
            j[(d, r)] = ex.grad[r];
        }
        let step = match j.lu().solve(&f) {
            Some(s) => s,
            None => break,
        };
        for i in 0..d {
            x[i] -= step[i];
        }
        t -= step[d];
        if step.amax() < 1e-16 * (1.0 + x.amax()) {
            let ex = domain.eval(&x);
            residual = ex.value.abs();
            break;
        }
    }
    if !(residual < 1e-9) {
        return Err(RbsdeError::NonConvergence {
            what: "projection",
            iterations: PROJECT_MAX_ITERS,
            residual,
        });
    }
    let dist = (y - &x).norm();
    if dist >= r0 {
        return Err(RbsdeError::OutsideUniquenessBand { distance: dist, r0 });
    }
    Ok(x)
}

/// Euclidean distance to the closed domain, through [`project`].
pub fn distance_to_domain(domain: &LevelSetDomain, y: &Vector) -> Result<f64> {
    let x = project(domain, y, f64::INFINITY)?;
    Ok((y - x).norm())
}

/// Unit outward normal extended off the boundary by `grad psi / |grad psi|`
/// and by zero inside the domain.
pub fn outward_normal(pseudo: &PseudoDistance, y: &Vector) -> Result<Vector> {
    let e = pseudo.domain.eval(y);
    if e.value < 0.0 {
        return Ok(Vector::zeros(y.len()));
    }
    if e.value == 0.0 {
        let n = e.grad.norm();
        if n < pseudo.domain.grad_floor * (1.0 - 1e-9) {
            return Err(RbsdeError::DegenerateGradient {
                norm: n,
                floor: pseudo.domain.grad_floor,
            });
        }
        return Ok(e.grad / n);
    }
    let g = pseudo.grad_psi(y);
    let n = g.norm();
    if n < pseudo.domain.grad_floor * (1.0 - 1e-9) {
        return Err(RbsdeError::DegenerateGradient {
            norm: n,
            floor: pseudo.domain.grad_floor,
        });
    }
    Ok(g / n)
}
