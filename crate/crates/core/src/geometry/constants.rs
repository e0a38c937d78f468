use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::level_set::{random_unit, sample_boundary, ConvexCore, LevelSetDomain, Vector};
use crate::error::{RbsdeError, Result};

/// Options for [`estimate_r0`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R0Options {
    /// Number of verification pairs.
    pub pairs: usize,
    /// Boundary points used for the curvature bound.
    pub boundary_samples: usize,
    /// Value returned when the sampled Hessian bound is nonbinding.
    pub cap: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for R0Options {
    fn default() -> Self {
        Self {
            pairs: 100_000,
            boundary_samples: 4000,
            cap: 10.0,
            tol: 1e-10,
            seed: 3,
        }
    }
}

/// Certified exterior-sphere radius with its verification record.
#[derive(Debug, Clone, PartialEq)]
pub struct R0Estimate {
    pub r0: f64,
    /// Sampled supremum of the negative part of the Hessian spectrum on the boundary.
    pub hessian_bound: f64,
    /// Smallest value of `(y - y').n(y) + |y - y'|^2 / (2 R0)` over the pairs.
    pub worst_value: f64,
    pub pairs: usize,
    pub capped: bool,
}

/// Estimates `R0 = grad_floor / sup lambda_-(hess phi)` from boundary samples
/// and verifies the exterior-sphere inequality on sampled pairs
/// `y` on the boundary, `y'` in the closed domain.
///
/// Only the negative part of the spectrum enters the bound: directions in
/// which the boundary bends away from the domain cannot produce violations.
pub fn estimate_r0(domain: &LevelSetDomain, opts: &R0Options) -> Result<R0Estimate> {
    let boundary = sample_boundary(domain, opts.boundary_samples, opts.seed)?;
    let mut lam: f64 = 0.0;
    let mut normals = Vec::with_capacity(boundary.len());
    for y in &boundary {
        let e = domain.eval(y);
        let ev = e.hess.symmetric_eigenvalues();
        lam = lam.max(-ev.min());
        normals.push(&e.grad / e.grad.norm());
    }
    let capped = lam * opts.cap <= domain.grad_floor;
    let r0 = if capped {
        opts.cap
    } else {
        domain.grad_floor / lam
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(11));
    let interior: Vec<Vector> = (0..2000)
        .map(|_| domain.sample_interior(&mut rng))
        .collect();
    let d = domain.dim();
    let mut worst = f64::INFINITY;
    let mut worst_pair = (Vector::zeros(d), Vector::zeros(d));
    let mut count = 0usize;
    while count < opts.pairs {
        let i = rng.random_range(0..boundary.len());
        let y = &boundary[i];
        let n = &normals[i];
        let y_prime = match count % 3 {
            0 => boundary[rng.random_range(0..boundary.len())].clone(),
            1 => interior[rng.random_range(0..interior.len())].clone(),
            _ => {
                let scale = 10f64.powf(rng.random_range(-4.0..0.0));
                let cand = y + random_unit(d, &mut rng) * scale;
                if domain.phi(&cand) > 0.0 {
                    continue;
                }
                cand
            }
        };
        let diff = y - &y_prime;
        let v = diff.dot(n) + diff.norm_squared() / (2.0 * r0);
        if v < worst {
            worst = v;
            worst_pair = (y.clone(), y_prime);
        }
        count += 1;
    }
    if worst < -opts.tol {
        return Err(RbsdeError::VerificationFailed {
            violation: worst,
            y: worst_pair.0.as_slice().to_vec(),
            y_prime: worst_pair.1.as_slice().to_vec(),
        });
    }
    Ok(R0Estimate {
        r0,
        hessian_bound: lam,
        worst_value: worst,
        pairs: count,
        capped,
    })
}

/// A parameterized piece of the boundary, `t` in `[0, 1]`.
#[derive(Clone)]
pub struct BoundarySubset {
    pub name: String,
    pub curve: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
}

impl fmt::Debug for BoundarySubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySubset")
            .field("name", &self.name)
            .finish()
    }
}

impl BoundarySubset {
    pub fn new(
        name: impl Into<String>,
        curve: impl Fn(f64) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            curve: Arc::new(curve),
        }
    }

    pub fn point(&self, t: f64) -> Vector {
        (self.curve)(t)
    }
}

/// Sampled infimum of `grad phi_C . n` with the point where it is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub argmin: Vector,
    pub samples: usize,
}

fn core_angle(domain: &LevelSetDomain, core: &ConvexCore, y: &Vector) -> f64 {
    let g = domain.grad_phi(y);
    core.grad_phi_c(y).dot(&g) / g.norm()
}

/// Pushes a point back onto `{phi = 0}` along the gradient.
fn newton_to_boundary(domain: &LevelSetDomain, mut y: Vector) -> Vector {
    for _ in 0..60 {
        let e = domain.eval(&y);
        if e.value.abs() <= 1e-14 {
            break;
        }
        y -= &e.grad * (e.value / e.grad.norm_squared());
    }
    y
}

/// `gamma = inf_{y in dD} grad phi_C(y) . grad phi(y) / |grad phi(y)|`,
/// sampled and refined locally from the worst samples. With a subset the
/// infimum runs over that curve only.
pub fn compute_gamma(
    domain: &LevelSetDomain,
    core: &ConvexCore,
    subset: Option<&BoundarySubset>,
    n_samples: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    if n_samples == 0 {
        return Err(RbsdeError::EmptyBoundarySample);
    }
    if let Some(sub) = subset {
        let m = n_samples.max(2);
        let f = |t: f64| core_angle(domain, core, &sub.point(t));
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for i in 0..m {
            let t = i as f64 / (m - 1) as f64;
            let v = f(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let h = 1.0 / (m - 1) as f64;
        let (t, v) = golden_min(&f, (best_t - h).max(0.0), (best_t + h).min(1.0));
        if v < best {
            best = v;
            best_t = t;
        }
        return Ok(GammaEstimate {
            gamma: best,
            argmin: sub.point(best_t),
            samples: m,
        });
    }

    let pts = sample_boundary(domain, n_samples, seed)?;
    let mut vals: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, y)| (core_angle(domain, core, y), i))
        .collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = vals[0].0;
    let mut arg = pts[vals[0].1].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
    for &(v0, i) in vals.iter().take(5) {
        let (v, y) = refine_on_boundary(domain, core, pts[i].clone(), v0, &mut rng);
        if v < best {
            best = v;
            arg = y;
        }
    }
    Ok(GammaEstimate {
        gamma: best,
        argmin: arg,
        samples: pts.len(),
    })
}

fn refine_on_boundary(
    domain: &LevelSetDomain,
    core: &ConvexCore,
    mut y: Vector,
    mut v: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, Vector) {
    let d = y.len();
    let mut step = 1e-2;
    while step > 1e-9 {
        let g = domain.grad_phi(&y);
        let n = &g / g.norm();
        let mut improved = false;
        for _ in 0..(2 * d) {
            let mut dir = random_unit(d, rng);
            dir -= &n * n.dot(&dir);
            if dir.norm() < 1e-8 {
                continue;
            }
            dir /= dir.norm();
            for sign in [1.0, -1.0] {
                let cand = newton_to_boundary(domain, &y + &dir * (sign * step));
                let cv = core_angle(domain, core, &cand);
                if cv < v {
                    v = cv;
                    y = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (v, y)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// The four alternative smallness conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallnessCase {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    II,
    #[serde(rename = "iii")]
    III,
    #[serde(rename = "iv")]
    IV,
    #[serde(rename = "none")]
    None,
}

/// Data needed to evaluate a smallness condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessQuery {
    pub case: SmallnessCase,
    pub gamma: f64,
    pub r0: f64,
    pub theta: f64,
    /// `||phi_C^+(xi)||_inf` for case (i), `||xi||_inf` for case (iii).
    pub xi_bound: Option<f64>,
    /// Whether `grad phi_C . f <= 0` holds outside the core.
    pub f_sign_ok: bool,
    pub samples: usize,
    pub seed: u64,
}

/// Geometric constants and the outcome of the smallness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub gamma: f64,
    pub r0: f64,
    pub smallness_case: SmallnessCase,
    pub theta: f64,
    pub margins: BTreeMap<String, f64>,
    pub samples: BTreeMap<String, usize>,
    #[serde(skip)]
    pub admissible: bool,
}

impl GeometryReport {
    pub fn new(gamma: f64, r0: f64, theta: f64) -> Self {
        Self {
            gamma,
            r0,
            smallness_case: SmallnessCase::None,
            theta,
            margins: BTreeMap::new(),
            samples: BTreeMap::new(),
            admissible: gamma > 0.0 && r0 > 0.0,
        }
    }
}

/// Evaluates one smallness condition. The report names the case when it
/// holds and `None` otherwise; `margins` holds `rhs - lhs` and both sides.
pub fn check_smallness(
    domain: &LevelSetDomain,
    core: &ConvexCore,
    q: &SmallnessQuery,
) -> Result<GeometryReport> {
    if q.theta < 1.0 {
        return Err(RbsdeError::CaseInapplicable(format!(
            "theta = {} is below one",
            q.theta
        )));
    }
    let mut report = GeometryReport::new(q.gamma, q.r0, q.theta);
    let sup_over_domain = |f: &dyn Fn(&Vector) -> f64| -> Result<f64> {
        let pts = sample_boundary(domain, q.samples, q.seed)?;
        Ok(pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max))
    };
    let (label, lhs, rhs, sign_needed) = match q.case {
        SmallnessCase::I => {
            let xi = q.xi_bound.ok_or_else(|| {
                RbsdeError::CaseInapplicable("case i needs a bound on phi_C^+(xi)".into())
            })?;
            ("i", xi, q.gamma * q.r0 / q.theta, true)
        }
        SmallnessCase::II => {
            let sup = sup_over_domain(&|y| core.phi_c(y).max(0.0))?;
            report.samples.insert("domain_boundary".into(), q.samples);
            ("ii", sup, q.gamma * q.r0 / q.theta, false)
        }
        SmallnessCase::III | SmallnessCase::IV => {
            let lambda = core.ball_radius.ok_or_else(|| {
                RbsdeError::CaseInapplicable("cases iii and iv need a ball core".into())
            })?;
            let rhs = lambda * lambda + 2.0 * q.r0 * q.r0 / q.theta;
            if q.case == SmallnessCase::III {
                let xi = q.xi_bound.ok_or_else(|| {
                    RbsdeError::CaseInapplicable("case iii needs a bound on |xi|".into())
                })?;
                ("iii", xi * xi, rhs, true)
            } else {
                let sup = sup_over_domain(&|y| y.norm_squared())?;
                report.samples.insert("domain_boundary".into(), q.samples);
                ("iv", sup, rhs, false)
            }
        }
        SmallnessCase::None => return Ok(report),
    };
    report.margins.insert(format!("case_{label}.lhs"), lhs);
    report.margins.insert(format!("case_{label}.rhs"), rhs);
    report
        .margins
        .insert(format!("case_{label}.margin"), rhs - lhs);
    if lhs < rhs && (!sign_needed || q.f_sign_ok) {
        report.smallness_case = q.case;
    }
    Ok(report)
}
