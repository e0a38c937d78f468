use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rbsde::catalog::{
    make_ball, make_polar_star, make_sector_domain, revolve_core, revolve_to_dim, PolarStarSpec,
    SectorDomain, SectorDomainSpec,
};
use rbsde::geometry::{ConvexCore, LevelSetDomain, Vector};
use rbsde::lattice::{BrownianLattice, ForwardDiffusion};
use rbsde::solver::{Generator, LinearGenerator, TerminalFn, ZeroGenerator};
use rbsde::validation::Nu;

use crate::config::{
    CoreConfig, DomainConfig, ForwardMode, GeneratorConfig, LatticeConfig, RunConfig,
    TerminalConfig,
};
use crate::error::CliError;

/// Everything a run needs, assembled from the configuration.
pub struct Problem {
    pub domain: LevelSetDomain,
    pub core: ConvexCore,
    pub sector: Option<SectorDomain>,
    /// Arc angle as a function of `W_T`, for arc terminals.
    pub nu: Option<Nu>,
    pub terminal: TerminalFn,
    pub generator: Box<dyn Generator>,
    /// Whether `grad phi_C . F <= 0` is known to hold outside the core.
    pub generator_sign_ok: bool,
    pub diffusion: ForwardDiffusion,
    pub lattice: BrownianLattice,
}

fn polar(
    coeffs: Vec<f64>,
    offset: [f64; 2],
    core: &CoreConfig,
) -> Result<(LevelSetDomain, ConvexCore), CliError> {
    let spec = PolarStarSpec {
        coeffs,
        offset,
        core_radius: core.radius,
    };
    make_polar_star(&spec).map_err(CliError::from_solver)
}

fn sector(alpha: f64, eta: f64, eps_corner: f64, tension: f64) -> Result<SectorDomain, CliError> {
    make_sector_domain(&SectorDomainSpec {
        alpha,
        eta,
        eps_corner,
        tension,
    })
    .map_err(CliError::from_solver)
}

fn ball(
    radius: f64,
    dim: usize,
    core: &CoreConfig,
) -> Result<(LevelSetDomain, ConvexCore), CliError> {
    if radius.is_nan() || radius <= 0.0 || dim == 0 {
        return Err(CliError::Config(format!(
            "ball needs radius > 0 and dim >= 1, got {radius} and {dim}"
        )));
    }
    let (d, c) = make_ball(radius, dim);
    Ok(match core.radius {
        Some(r) => (d, rbsde::catalog::ball_core(dim, r)),
        None => (d, c),
    })
}

pub fn build_domain(
    cfg: &RunConfig,
) -> Result<(LevelSetDomain, ConvexCore, Option<SectorDomain>), CliError> {
    match &cfg.domain {
        DomainConfig::Ball { radius, dim } => {
            ball(*radius, *dim, &cfg.core).map(|(d, c)| (d, c, None))
        }
        DomainConfig::PolarStar { coeffs, offset } => {
            polar(coeffs.clone(), *offset, &cfg.core).map(|(d, c)| (d, c, None))
        }
        DomainConfig::Sector {
            alpha,
            eta,
            eps_corner,
            tension,
        } => {
            let s = sector(*alpha, *eta, *eps_corner, *tension)?;
            Ok((s.domain.clone(), s.core.clone(), Some(s)))
        }
        DomainConfig::Revolve {
            base,
            dim,
            alpha,
            eta,
            coeffs,
            radius,
        } => {
            let missing =
                |k: &str| CliError::Config(format!("revolve with base `{base}` needs `{k}`"));
            let (d, c) = match base.as_str() {
                "ball" => ball(radius.unwrap_or(1.0), 2, &cfg.core)?,
                "polar_star" => polar(
                    coeffs.clone().ok_or_else(|| missing("coeffs"))?,
                    [0.0, 0.0],
                    &cfg.core,
                )?,
                _ => {
                    let s = sector(
                        alpha.ok_or_else(|| missing("alpha"))?,
                        eta.ok_or_else(|| missing("eta"))?,
                        0.1,
                        1.5,
                    )?;
                    (s.domain, s.core)
                }
            };
            let rd = revolve_to_dim(&d, *dim).map_err(CliError::from_solver)?;
            Ok((rd, revolve_core(&c, *dim), None))
        }
    }
}

pub fn build_lattice(l: &LatticeConfig) -> Result<(BrownianLattice, ForwardDiffusion), CliError> {
    let lattice =
        BrownianLattice::new(l.horizon, l.steps, l.driver_dim).map_err(CliError::from_solver)?;
    let x0 = DVector::from_vec(l.x0.clone().unwrap_or_else(|| vec![0.0; l.driver_dim]));
    let diffusion = match l.mode {
        ForwardMode::Identity => {
            if x0.len() != l.driver_dim {
                return Err(CliError::Config(
                    "identity mode needs x0 of the driver dimension".into(),
                ));
            }
            ForwardDiffusion::identity(x0)
        }
        ForwardMode::Euler => {
            let m = x0.len();
            let drift = DVector::from_vec(l.drift.clone().unwrap_or_else(|| vec![0.0; m]));
            let rows = l
                .sigma
                .clone()
                .ok_or_else(|| CliError::Config("euler mode needs lattice.sigma".into()))?;
            if drift.len() != m || rows.len() != m || rows.iter().any(|r| r.len() != l.driver_dim) {
                return Err(CliError::Config(format!(
                    "euler mode needs drift of length {m} and sigma of shape {m}x{}",
                    l.driver_dim
                )));
            }
            let sigma = DMatrix::from_row_iterator(m, l.driver_dim, rows.into_iter().flatten());
            ForwardDiffusion::euler(x0, move |_, _| drift.clone(), move |_, _| sigma.clone())
        }
    };
    Ok((lattice, diffusion))
}

/// Terminal function and, for arc terminals, the angle map `nu`.
pub fn build_terminal(
    t: &TerminalConfig,
    sector: Option<&SectorDomain>,
    dim: usize,
) -> Result<(TerminalFn, Option<Nu>), CliError> {
    let arc = |nu: Nu| -> Result<(TerminalFn, Option<Nu>), CliError> {
        let s = sector
            .ok_or_else(|| CliError::Config("arc terminals need the sector domain".into()))?
            .clone();
        if nu.bound() > s.spec.alpha {
            return Err(CliError::Config(format!(
                "arc angles up to {} leave the arc of half-angle {}",
                nu.bound(),
                s.spec.alpha
            )));
        }
        Ok((
            Arc::new(move |x: &Vector| s.circle_to_frame(nu.at(x[0]))),
            Some(nu),
        ))
    };
    match t {
        TerminalConfig::ArcPointPair { plus, minus } => arc(Nu::PointPair {
            plus: *plus,
            minus: *minus,
        }),
        TerminalConfig::ArcSmooth { alpha } => arc(Nu::SmoothCdf { alpha: *alpha }),
        TerminalConfig::Constant { value } => {
            if value.len() != dim {
                return Err(CliError::Config(format!(
                    "constant terminal has length {}, domain dimension {dim}",
                    value.len()
                )));
            }
            let v = DVector::from_vec(value.clone());
            Ok((Arc::new(move |_: &Vector| v.clone()), None))
        }
    }
}

/// Generator and whether its sign condition is known to hold.
pub fn build_generator(
    g: &GeneratorConfig,
    dim: usize,
) -> Result<(Box<dyn Generator>, bool), CliError> {
    match g {
        GeneratorConfig::Zero => Ok((Box::new(ZeroGenerator), true)),
        GeneratorConfig::Linear { a, b } => {
            let b = if b.is_empty() {
                vec![0.0; dim]
            } else {
                b.clone()
            };
            if b.len() != dim {
                return Err(CliError::Config(format!(
                    "linear generator offset has length {}, domain dimension {dim}",
                    b.len()
                )));
            }
            // a y with a <= 0 points toward the origin, inside a core centered there
            let sign_ok = *a <= 0.0 && b.iter().all(|&v| v == 0.0);
            Ok((
                Box::new(LinearGenerator {
                    a: *a,
                    b: DVector::from_vec(b),
                }),
                sign_ok,
            ))
        }
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let (domain, core, sector) = build_domain(cfg)?;
    let (lattice, diffusion) = build_lattice(&cfg.lattice)?;
    let dim = domain.dim();
    let (terminal, nu) = build_terminal(&cfg.terminal, sector.as_ref(), dim)?;
    let (generator, generator_sign_ok) = build_generator(&cfg.generator, dim)?;
    Ok(Problem {
        domain,
        core,
        sector,
        nu,
        terminal,
        generator,
        generator_sign_ok,
        diffusion,
        lattice,
    })
}
