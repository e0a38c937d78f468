use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

/// Environment variable consulted when the config names no output directory.
pub const OUTPUT_DIR_ENV: &str = "RBSDE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 keeps the default pool.
    #[serde(default)]
    pub threads: usize,
    pub domain: DomainConfig,
    #[serde(default)]
    pub core: CoreConfig,
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Ball {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "two")]
        dim: usize,
    },
    PolarStar {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: [f64; 2],
    },
    Sector {
        alpha: f64,
        eta: f64,
        #[serde(default = "default_eps_corner")]
        eps_corner: f64,
        #[serde(default = "default_tension")]
        tension: f64,
    },
    /// Surface of revolution of a planar catalog domain.
    Revolve {
        base: String,
        dim: usize,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        coeffs: Option<Vec<f64>>,
        #[serde(default)]
        radius: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreConfig {
    /// Radius of the ball core for ball and polar_star domains.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    /// Arc angle `plus` for `W_T > 0` and `minus` for `W_T < 0` (sector only).
    ArcPointPair {
        plus: f64,
        minus: f64,
    },
    /// Arc angle `alpha (2 Phi(W_T) - 1)` (sector only).
    ArcSmooth {
        alpha: f64,
    },
    Constant {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    #[default]
    Zero,
    /// `F = a y + b`.
    Linear {
        a: f64,
        #[serde(default)]
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub horizon: f64,
    pub steps: usize,
    pub driver_dim: usize,
    /// Defaults to the origin of the driver space.
    pub x0: Option<Vec<f64>>,
    pub mode: ForwardMode,
    /// Constant drift for the Euler mode.
    pub drift: Option<Vec<f64>>,
    /// Constant diffusion matrix for the Euler mode, by rows.
    pub sigma: Option<Vec<Vec<f64>>>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 100,
            driver_dim: 1,
            x0: None,
            mode: ForwardMode::Identity,
            drift: None,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    Identity,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub schedule: Vec<u32>,
    pub stop_tol: f64,
    /// Fixed caps; both absent selects the default rule.
    pub cap_psi: Option<f64>,
    pub cap_zsq: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub method: Method,
    pub damping_after: usize,
    pub holder_alpha: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: vec![4, 8, 16, 32, 64, 128, 256],
            stop_tol: 0.0,
            cap_psi: None,
            cap_zsq: None,
            picard_tol: 1e-12,
            picard_max_iters: 200,
            method: Method::Newton,
            damping_after: 50,
            holder_alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    /// Checks to run, from [`CHECK_NAMES`].
    pub run: Vec<String>,
    /// Sampled paths for the path-wise checks.
    pub paths: usize,
    /// Test processes per path for the Skorokhod check.
    pub test_processes: usize,
    pub skorokhod_tol: f64,
    pub var_slack: f64,
    /// Band as a multiple of the final distance to the domain.
    pub band_factor: f64,
    pub boundary_tol: f64,
    pub angle_tol: f64,
    pub rate_gate: f64,
    pub holder_min_n: u32,
    pub holder_ratio: f64,
    pub oracle_tol: f64,
    pub exp_paths: usize,
    pub exp_theta: f64,
    pub exp_p: f64,
    pub exp_rel_tol: f64,
    pub stability_deltas: Vec<f64>,
    /// Sampled paths written to `paths.csv`; 0 disables the dump.
    pub dump_paths: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            run: Vec::new(),
            paths: 50,
            test_processes: 4,
            skorokhod_tol: 1e-6,
            var_slack: 0.05,
            band_factor: 10.0,
            boundary_tol: 1e-2,
            angle_tol: 0.1,
            rate_gate: -0.8,
            holder_min_n: 16,
            holder_ratio: 2.0,
            oracle_tol: 5e-2,
            exp_paths: 10_000,
            exp_theta: 2.0,
            exp_p: 1.1,
            exp_rel_tol: 0.1,
            stability_deltas: vec![0.1, 0.05, 0.025],
            dump_paths: 0,
        }
    }
}

pub const CHECK_NAMES: [&str; 9] = [
    "distance_rate",
    "exp_moments",
    "gamma_martingale",
    "holder",
    "kernel_vanishes",
    "oracle",
    "skorokhod",
    "stability",
    "var_domination",
];

/// Closed-form circle solution reported alongside the run.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Steps of the oracle lattice; defaults to the solver lattice.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub r0_pairs: usize,
    pub r0_cap: f64,
    pub gamma_samples: usize,
    /// Restrict the infimum defining gamma to the inner arc of a sector.
    pub gamma_on_arc: bool,
    pub smallness_case: String,
    pub theta: f64,
    pub boundary_samples: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            r0_pairs: 100_000,
            r0_cap: 10.0,
            gamma_samples: 2000,
            gamma_on_arc: false,
            smallness_case: "none".into(),
            theta: 2.0,
            boundary_samples: 2000,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

fn default_eps_corner() -> f64 {
    0.1
}

fn default_tension() -> f64 {
    1.5
}

/// Applies `section.key=value` (or `key=value` at top level). The value is
/// read as a TOML literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{spec}` is not of the form key=value"))
    })?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{k}` in `{path}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.lattice.steps < 2 {
            return bad(format!(
                "lattice.steps = {} must be at least 2",
                self.lattice.steps
            ));
        }
        if self.solver.schedule.is_empty() {
            return bad("solver.schedule is empty".into());
        }
        if self.solver.schedule.windows(2).any(|w| w[0] >= w[1]) || self.solver.schedule[0] == 0 {
            return bad("solver.schedule must be positive and increasing".into());
        }
        if self.solver.cap_psi.is_some() != self.solver.cap_zsq.is_some() {
            return bad("solver.cap_psi and solver.cap_zsq must be given together".into());
        }
        for c in &self.checks.run {
            if !CHECK_NAMES.contains(&c.as_str()) {
                return bad(format!(
                    "unknown check `{c}`; known: {}",
                    CHECK_NAMES.join(", ")
                ));
            }
        }
        if !["none", "i", "ii", "iii", "iv"].contains(&self.geometry.smallness_case.as_str()) {
            return bad(format!(
                "unknown smallness case `{}`",
                self.geometry.smallness_case
            ));
        }
        if let DomainConfig::Revolve { base, .. } = &self.domain {
            if !["ball", "polar_star", "sector"].contains(&base.as_str()) {
                return bad(format!(
                    "revolve base `{base}` is not a planar catalog domain"
                ));
            }
        }
        let arc = matches!(
            self.terminal,
            TerminalConfig::ArcPointPair { .. } | TerminalConfig::ArcSmooth { .. }
        );
        if arc && !matches!(self.domain, DomainConfig::Sector { .. }) {
            return bad("arc terminals need the sector domain".into());
        }
        Ok(())
    }

    /// Output directory from the config, then the environment, then `out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [domain]
        name = "ball"
        [terminal]
        name = "constant"
        value = [0.1, 0.0]
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(
            c.domain,
            DomainConfig::Ball {
                radius: 1.0,
                dim: 2
            }
        );
        assert_eq!(c.generator, GeneratorConfig::Zero);
        assert_eq!(c.lattice.steps, 100);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::parse(
            MINIMAL,
            &[
                "lattice.steps=7".into(),
                "domain.radius=2.5".into(),
                "seed=9".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.lattice.steps, 7);
        assert_eq!(
            c.domain,
            DomainConfig::Ball {
                radius: 2.5,
                dim: 2
            }
        );
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for o in [
            "lattice.steps=1",
            "solver.schedule=[]",
            "checks.run=[\"bogus\"]",
            "domain.color=3",
        ] {
            assert!(
                matches!(
                    RunConfig::parse(MINIMAL, &[o.into()]),
                    Err(CliError::Config(_))
                ),
                "{o}"
            );
        }
        assert!(RunConfig::parse(MINIMAL, &["no_equals".into()]).is_err());
        let arc = MINIMAL.replace(
            "name = \"constant\"\n        value = [0.1, 0.0]",
            "name = \"arc_smooth\"\n alpha = 0.5",
        );
        assert!(RunConfig::parse(&arc, &[]).is_err());
    }
}
