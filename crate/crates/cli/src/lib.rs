//! Configuration-driven runner: geometry report, penalization schedule and
//! validation checks with CSV and JSON outputs.

pub mod build;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{run, run_geometry, run_oracle, RunOutcome};

/// Catalog entry: kind, name and parameter schema.
pub struct CatalogEntry {
    pub kind: &'static str,
    pub name: &'static str,
    pub params: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        kind: "domain",
        name: "ball",
        params: "radius: f64 = 1, dim: usize = 2",
    },
    CatalogEntry {
        kind: "domain",
        name: "polar_star",
        params: "coeffs: [f64], offset: [f64; 2] = [0, 0]",
    },
    CatalogEntry {
        kind: "domain",
        name: "revolve",
        params: "base: ball|polar_star|sector, dim: usize, plus the base parameters",
    },
    CatalogEntry {
        kind: "domain",
        name: "sector",
        params: "alpha: f64, eta: f64, eps_corner: f64 = 0.1, tension: f64 = 1.5",
    },
    CatalogEntry {
        kind: "generator",
        name: "linear",
        params: "a: f64, b: [f64] = 0",
    },
    CatalogEntry {
        kind: "generator",
        name: "zero",
        params: "",
    },
    CatalogEntry {
        kind: "terminal",
        name: "arc_point_pair",
        params: "plus: f64, minus: f64 (sector only)",
    },
    CatalogEntry {
        kind: "terminal",
        name: "arc_smooth",
        params: "alpha: f64 (sector only)",
    },
    CatalogEntry {
        kind: "terminal",
        name: "constant",
        params: "value: [f64]",
    },
];

/// Sorted catalog table, one entry per line.
pub fn list_catalog() -> String {
    let mut rows: Vec<&CatalogEntry> = CATALOG.iter().collect();
    rows.sort_by_key(|e| (e.kind, e.name));
    let mut s = format!("{:<10} {:<15} {}\n", "KIND", "NAME", "PARAMETERS");
    for e in rows {
        s.push_str(format!("{:<10} {:<15} {}", e.kind, e.name, e.params).trim_end());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_is_sorted_and_complete() {
        let s = list_catalog();
        for name in [
            "ball",
            "polar_star",
            "sector",
            "revolve",
            "arc_point_pair",
            "zero",
        ] {
            assert!(
                s.lines().any(|l| l.split_whitespace().nth(1) == Some(name)),
                "{name}"
            );
        }
        let keys: Vec<(String, String)> = s
            .lines()
            .skip(1)
            .map(|l| {
                let mut w = l.split_whitespace();
                (w.next().unwrap().to_string(), w.next().unwrap().to_string())
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
