use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{RbsdeError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEval {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// A C2 scalar field on `R^d`, evaluated all at once since most
/// implementations share the expensive part (closest points, angles).
pub trait LevelSet: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, y: &Vector) -> LevelEval;

    fn value(&self, y: &Vector) -> f64 {
        self.eval(y).value
    }
}

/// Domain `D = {phi < 0}`.
#[derive(Clone)]
pub struct LevelSetDomain {
    pub name: String,
    pub level: Arc<dyn LevelSet>,
    /// `phi > 0` whenever `|y| >= bounding_radius - 1`.
    pub bounding_radius: f64,
    /// Lower bound on `|grad phi|` near the boundary.
    pub grad_floor: f64,
}

impl fmt::Debug for LevelSetDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetDomain")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("bounding_radius", &self.bounding_radius)
            .field("grad_floor", &self.grad_floor)
            .finish()
    }
}

impl LevelSetDomain {
    pub fn dim(&self) -> usize {
        self.level.dim()
    }

    pub fn phi(&self, y: &Vector) -> f64 {
        self.level.value(y)
    }

    pub fn eval(&self, y: &Vector) -> LevelEval {
        self.level.eval(y)
    }

    pub fn grad_phi(&self, y: &Vector) -> Vector {
        self.level.eval(y).grad
    }

    pub fn hess_phi(&self, y: &Vector) -> Matrix {
        self.level.eval(y).hess
    }

    pub fn contains(&self, y: &Vector) -> bool {
        self.phi(y) < 0.0
    }

    /// Uniform sample from the closed domain by rejection in the bounding box.
    pub fn sample_interior(&self, rng: &mut ChaCha8Rng) -> Vector {
        let r = self.bounding_radius;
        loop {
            let y = Vector::from_fn(self.dim(), |_, _| rng.random_range(-r..r));
            if self.phi(&y) <= 0.0 {
                return y;
            }
        }
    }

    /// Checks the structural invariants on `n` random points: positivity far
    /// out, the gradient floor near the boundary and finite-difference
    /// consistency of the derivatives. Returns the worst relative
    /// finite-difference error.
    pub fn check_invariants(&self, n: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        for _ in 0..n {
            let dir = random_unit(d, &mut rng);
            let y = dir * (self.bounding_radius * (1.0 + rng.random::<f64>()));
            let v = self.phi(&y);
            if v <= 0.0 {
                return Err(RbsdeError::VerificationFailed {
                    violation: v,
                    y: y.as_slice().to_vec(),
                    y_prime: vec![],
                });
            }
        }
        let boundary = sample_boundary(self, n, seed ^ 0x5eed)?;
        for y in &boundary {
            let g = self.grad_phi(y).norm();
            if g < self.grad_floor * (1.0 - 1e-9) {
                return Err(RbsdeError::DegenerateGradient {
                    norm: g,
                    floor: self.grad_floor,
                });
            }
        }
        let mut worst: f64 = 0.0;
        for y in boundary.iter().take(n) {
            let offset = random_unit(d, &mut rng) * (0.05 * rng.random::<f64>());
            worst = worst.max(fd_relative_error(self.level.as_ref(), &(y + offset), 1e-4));
        }
        Ok(worst)
    }
}

/// Convex core `C = {phi_C < 0}` with `phi_C` the distance to `C` outside `C`.
#[derive(Clone)]
pub struct ConvexCore {
    pub name: String,
    pub level: Arc<dyn LevelSet>,
    pub contains_origin: bool,
    /// Radius when the core is a Euclidean ball centered at the origin.
    pub ball_radius: Option<f64>,
}

impl fmt::Debug for ConvexCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexCore")
            .field("name", &self.name)
            .field("contains_origin", &self.contains_origin)
            .field("ball_radius", &self.ball_radius)
            .finish()
    }
}

/// Worst deviations found by [`ConvexCore::check_invariants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreDiagnostics {
    pub origin_value: f64,
    pub midpoint_excess: f64,
    pub distance_error: f64,
}

impl ConvexCore {
    pub fn phi_c(&self, y: &Vector) -> f64 {
        self.level.value(y)
    }

    pub fn grad_phi_c(&self, y: &Vector) -> Vector {
        self.level.eval(y).grad
    }

    /// Samples midpoint convexity and the outside-distance identity, the
    /// latter against a projected-gradient computation of the closest point.
    pub fn check_invariants(&self, radius: f64, n: usize, seed: u64) -> CoreDiagnostics {
        let d = self.level.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origin_value = self.phi_c(&Vector::zeros(d));
        let mut midpoint_excess = f64::NEG_INFINITY;
        let mut distance_error: f64 = 0.0;
        for _ in 0..n {
            let x = Vector::from_fn(d, |_, _| rng.random_range(-radius..radius));
            let y = Vector::from_fn(d, |_, _| rng.random_range(-radius..radius));
            let mid = (&x + &y) * 0.5;
            let excess = self.phi_c(&mid) - 0.5 * (self.phi_c(&x) + self.phi_c(&y));
            midpoint_excess = midpoint_excess.max(excess);
            if self.phi_c(&y) > 1e-3 {
                let p = projected_descent(self, &y);
                distance_error = distance_error.max((self.phi_c(&y) - (&y - p).norm()).abs());
            }
        }
        CoreDiagnostics {
            origin_value,
            midpoint_excess,
            distance_error,
        }
    }
}

/// Closest point of the closed core by alternating a step toward `y` with a
/// Newton pull-back onto `{phi_C <= 0}`.
fn projected_descent(core: &ConvexCore, y: &Vector) -> Vector {
    let mut x = Vector::zeros(y.len());
    for _ in 0..5000 {
        let prev = x.clone();
        x += (y - &x) * 0.5;
        for _ in 0..50 {
            let e = core.level.eval(&x);
            if e.value <= 0.0 {
                break;
            }
            let g2 = e.grad.norm_squared();
            x -= &e.grad * (e.value / g2);
            if e.value < 1e-15 {
                break;
            }
        }
        if (&x - prev).norm() < 1e-14 {
            break;
        }
    }
    x
}

pub(crate) fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Worst relative error between analytic and central-difference derivatives.
pub fn fd_relative_error(level: &dyn LevelSet, y: &Vector, h: f64) -> f64 {
    let d = level.dim();
    let e = level.eval(y);
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += h;
        ym[i] -= h;
        let ep = level.eval(&yp);
        let em = level.eval(&ym);
        let g = (ep.value - em.value) / (2.0 * h);
        worst = worst.max((g - e.grad[i]).abs() / e.grad.norm().max(1.0));
        let hcol = (&ep.grad - &em.grad) / (2.0 * h);
        for j in 0..d {
            worst = worst.max((hcol[j] - e.hess[(j, i)]).abs() / e.hess.norm().max(1.0));
        }
    }
    worst
}

/// Points on `{phi = 0}`: rejection into a coarse band followed by Newton
/// corrections along the gradient until `|phi| <= 1e-13`.
pub fn sample_boundary(domain: &LevelSetDomain, count: usize, seed: u64) -> Result<Vec<Vector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim();
    let r = domain.bounding_radius;
    let band = 0.1 * r;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(RbsdeError::EmptyBoundarySample);
        }
        let mut y = Vector::from_fn(d, |_, _| rng.random_range(-r..r));
        if domain.phi(&y).abs() > band {
            continue;
        }
        let mut ok = false;
        for _ in 0..60 {
            let e = domain.eval(&y);
            if e.value.abs() <= 1e-13 {
                ok = true;
                break;
            }
            let g2 = e.grad.norm_squared();
            if g2 < 1e-20 {
                break;
            }
            y -= &e.grad * (e.value / g2);
        }
        if ok {
            out.push(y);
        }
    }
    if out.is_empty() {
        return Err(RbsdeError::EmptyBoundarySample);
    }
    Ok(out)
}

/// Builds a vector from a slice.
pub fn vector(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}
