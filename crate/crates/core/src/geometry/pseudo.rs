use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::level_set::{random_unit, sample_boundary, ConvexCore, LevelSetDomain, Matrix, Vector};
use super::ops::distance_to_domain;
use super::smooth::smoothstep_d2;
use crate::error::{RbsdeError, Result};

/// Value, gradient and Hessian of the pseudo-distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiEval {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// Sample sizes and limits for the `(eps, kappa)` search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub samples: usize,
    pub band_samples: usize,
    pub max_halvings: usize,
    pub max_doublings: usize,
    pub margin_target: f64,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            samples: 4000,
            band_samples: 1500,
            max_halvings: 20,
            max_doublings: 30,
            margin_target: 1e-3,
            seed: 17,
        }
    }
}

/// Smooth surrogate of the distance to the domain, vanishing on the closure.
///
/// `psi = phi_t + kappa |y| step(phi_t / eps)` with
/// `phi_t = phi^+ (1 - step(|y| - R - 1)) + step(|y| - R)`.
#[derive(Debug, Clone)]
pub struct PseudoDistance {
    pub domain: LevelSetDomain,
    pub core: ConvexCore,
    pub r: f64,
    pub eps: f64,
    pub kappa: f64,
    /// Verified infimum of `grad phi_C . grad psi` off the domain.
    pub margin: f64,
    /// Sampled `(c, C)` with `c d(y, D) <= psi(y) <= C d(y, D)` on a band.
    pub comparison: (f64, f64),
    /// Sampled bound on the Hessian of `psi` on the band, used as a Lipschitz
    /// constant for `grad psi`.
    pub lip_grad_psi: f64,
    /// Sampled infimum of `|grad psi|` off the domain.
    pub min_grad_norm: f64,
}

impl PseudoDistance {
    /// Assembles the pseudo-distance for given parameters without any search
    /// or verification.
    pub fn with_parameters(
        domain: LevelSetDomain,
        core: ConvexCore,
        r: f64,
        eps: f64,
        kappa: f64,
    ) -> Self {
        Self {
            domain,
            core,
            r,
            eps,
            kappa,
            margin: f64::NAN,
            comparison: (f64::NAN, f64::NAN),
            lip_grad_psi: f64::NAN,
            min_grad_norm: f64::NAN,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn eval(&self, y: &Vector) -> PsiEval {
        let d = y.len();
        let e = self.domain.eval(y);
        if e.value < 0.0 {
            return PsiEval {
                value: 0.0,
                grad: Vector::zeros(d),
                hess: Matrix::zeros(d, d),
            };
        }
        let r = y.norm();
        let (phi_t, g_t, h_t) = if r <= self.r {
            (e.value, e.grad, e.hess)
        } else {
            let yh = y / r;
            let (ta, ta1, ta2) = smoothstep_d2(r - self.r - 1.0);
            let (tb, tb1, tb2) = smoothstep_d2(r - self.r);
            let a = 1.0 - ta;
            let proj = &yh * yh.transpose();
            let tang = Matrix::identity(d, d) - &proj;
            let radial_hess = |g1: f64, g2: f64| &proj * g2 + &tang * (g1 / r);
            let value = e.value * a + tb;
            let grad = &e.grad * a + &yh * (-e.value * ta1 + tb1);
            let cross = &e.grad * yh.transpose() + &yh * e.grad.transpose();
            let hess = &e.hess * a - cross * ta1
                + radial_hess(-ta1, -ta2) * e.value
                + radial_hess(tb1, tb2);
            (value, grad, hess)
        };
        let q = phi_t / self.eps;
        let (t, t1, t2) = smoothstep_d2(q);
        if t == 0.0 && t1 == 0.0 && t2 == 0.0 {
            return PsiEval {
                value: phi_t,
                grad: g_t,
                hess: h_t,
            };
        }
        let k = self.kappa;
        let yh = y / r;
        let value = phi_t + k * r * t;
        let grad = &g_t + (&yh * t + &g_t * (r * t1 / self.eps)) * k;
        let cross = &yh * g_t.transpose() + &g_t * yh.transpose();
        let tang = Matrix::identity(d, d) - &yh * yh.transpose();
        let extra = cross * (t1 / self.eps)
            + tang * (t / r)
            + (&g_t * g_t.transpose()) * (r * t2 / (self.eps * self.eps))
            + &h_t * (r * t1 / self.eps);
        let hess = h_t + extra * k;
        PsiEval { value, grad, hess }
    }

    pub fn psi(&self, y: &Vector) -> f64 {
        self.eval(y).value
    }

    pub fn grad_psi(&self, y: &Vector) -> Vector {
        self.eval(y).grad
    }

    pub fn hess_psi(&self, y: &Vector) -> Matrix {
        self.eval(y).hess
    }

    /// `Psi = psi grad psi`.
    pub fn big_psi(&self, y: &Vector) -> Vector {
        let e = self.eval(y);
        e.grad * e.value
    }
}

/// Points outside the domain: a uniform cloud in a box around `B_{R+3}` and a
/// band obtained by pushing boundary points outward by log-uniform amounts.
fn outside_samples(
    domain: &LevelSetDomain,
    r: f64,
    budget: &SearchBudget,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let d = domain.dim();
    let box_r = r + 3.0;
    let mut cloud = Vec::with_capacity(budget.samples);
    while cloud.len() < budget.samples {
        let y = Vector::from_fn(d, |_, _| rng.random_range(-box_r..box_r));
        if y.norm() < box_r && domain.phi(&y) > 0.0 {
            cloud.push(y);
        }
    }
    let boundary = sample_boundary(domain, budget.band_samples, budget.seed.wrapping_add(1))?;
    let mut band = Vec::with_capacity(boundary.len());
    for b in &boundary {
        let g = domain.grad_phi(b);
        let n = &g / g.norm();
        let h = 10f64.powf(rng.random_range(-6.0..-0.3));
        let y = b + n * h;
        if domain.phi(&y) > 0.0 {
            band.push(y);
        }
    }
    Ok((cloud, band))
}

/// Finds `(R, eps, kappa)` and verifies the resulting pseudo-distance.
///
/// `R` is the bounding radius plus one. `eps` is halved from one until every
/// sample with `0 < phi <= eps` lies in `B_R` with `grad phi_C . grad phi > 0`;
/// `kappa` is doubled from one until `grad phi_C . grad psi` reaches the
/// margin target on all samples.
pub fn build_pseudo_distance(
    domain: &LevelSetDomain,
    core: &ConvexCore,
    budget: &SearchBudget,
) -> Result<PseudoDistance> {
    let r = domain.bounding_radius + 1.0;
    let (cloud, band) = outside_samples(domain, r, budget)?;
    let all: Vec<&Vector> = cloud.iter().chain(band.iter()).collect();

    let mut eps = 1.0;
    let mut eps_ok = false;
    for _ in 0..=budget.max_halvings {
        let ok = all.iter().all(|y| {
            let e = domain.eval(y);
            if e.value <= 0.0 || e.value > eps || y.norm() >= r + 1.0 {
                return true;
            }
            y.norm() < r && core.grad_phi_c(y).dot(&e.grad) > 0.0
        });
        if ok {
            eps_ok = true;
            break;
        }
        eps *= 0.5;
    }
    if !eps_ok {
        return Err(RbsdeError::ParameterSearchFailed {
            best_margin: f64::NEG_INFINITY,
            eps,
            kappa: f64::NAN,
        });
    }

    let core_grads: Vec<Vector> = all.iter().map(|y| core.grad_phi_c(y)).collect();
    let mut kappa = 1.0;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..=budget.max_doublings {
        let candidate =
            PseudoDistance::with_parameters(domain.clone(), core.clone(), r, eps, kappa);
        let margin = all
            .iter()
            .zip(&core_grads)
            .map(|(y, gc)| gc.dot(&candidate.grad_psi(y)))
            .fold(f64::INFINITY, f64::min);
        best = best.max(margin);
        if margin >= budget.margin_target {
            return Ok(verify(candidate, margin, &cloud, &band));
        }
        kappa *= 2.0;
    }
    Err(RbsdeError::ParameterSearchFailed {
        best_margin: best,
        eps,
        kappa,
    })
}

fn spectral_norm(m: &Matrix) -> f64 {
    m.clone().symmetric_eigenvalues().amax()
}

fn verify(mut p: PseudoDistance, margin: f64, cloud: &[Vector], band: &[Vector]) -> PseudoDistance {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for y in band {
        let e = p.eval(y);
        lip = lip.max(spectral_norm(&e.hess));
        if let Ok(dist) = distance_to_domain(&p.domain, y) {
            if dist > 1e-9 {
                lo = lo.min(e.value / dist);
                hi = hi.max(e.value / dist);
            }
        }
    }
    let min_grad = cloud
        .iter()
        .chain(band.iter())
        .map(|y| p.grad_psi(y).norm())
        .fold(f64::INFINITY, f64::min);
    p.margin = margin;
    p.comparison = (lo, hi);
    p.lip_grad_psi = lip;
    p.min_grad_norm = min_grad;
    p
}

/// Smallest `C` with `z^T hess(psi^2) z >= -C psi |z|^2` over sampled points
/// of the band outside the domain and random unit directions.
pub fn check_hessian_psi_sq(pseudo: &PseudoDistance, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boundary = sample_boundary(&pseudo.domain, n_samples, seed.wrapping_add(7))?;
    let d = pseudo.dim();
    let mut worst: f64 = 0.0;
    let mut used = 0usize;
    for b in &boundary {
        let g = pseudo.domain.grad_phi(b);
        let y = b + &g / g.norm() * 10f64.powf(rng.random_range(-4.0..-0.5));
        let e = pseudo.eval(&y);
        if e.value <= 0.0 {
            continue;
        }
        used += 1;
        let z = random_unit(d, &mut rng);
        let h2 = (&e.grad * e.grad.transpose()) * 2.0 + &e.hess * (2.0 * e.value);
        let q = (z.transpose() * &h2 * &z)[(0, 0)];
        worst = worst.max(-q / e.value);
    }
    if used == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(worst)
}
