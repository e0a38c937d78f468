use std::sync::Arc;

use nalgebra::DVector;
use rbsde::catalog::{make_ball, make_sector_domain, SectorDomainSpec};
use rbsde::geometry::{build_pseudo_distance, SearchBudget};
use rbsde::lattice::{BrownianLattice, ForwardDiffusion};
use rbsde::solver::{
    solve_brute_force_tree, solve_path_dependent, PathTerminalFn, PenalizationConfig, ZeroGenerator,
};
use rbsde::RbsdeError;

fn all_prefixes(len: usize, b: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| (0..b as u8).map(move |c| [p.clone(), vec![c]].concat()))
            .collect();
    }
    out
}

#[test]
fn two_observation_terminal_matches_the_full_tree() {
    let s = make_sector_domain(&SectorDomainSpec::new(0.6, 0.15)).unwrap();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 8, 1).unwrap();
    let frame = s.clone();
    let g: PathTerminalFn = Arc::new(move |xs: &[DVector<f64>]| {
        frame.circle_to_frame(0.6 * (xs[0][0] - 0.5 * xs[1][0]).tanh())
    });
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let cfg = PenalizationConfig::uncapped(32);
    let a = solve_path_dependent(&p, &[3, 8], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    let b = solve_brute_force_tree(&p, &[3, 8], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    for len in 0..=8 {
        for prefix in all_prefixes(len, 2) {
            assert!(
                (a.y_along(&prefix) - b.y_along(&prefix)).amax() < 1e-10,
                "{prefix:?}"
            );
        }
    }
}

#[test]
fn two_dimensional_driver_matches_the_full_tree() {
    let (d, c) = make_ball(1.0, 2);
    let p = build_pseudo_distance(&d, &c, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 4, 2).unwrap();
    let g: PathTerminalFn = Arc::new(|xs: &[DVector<f64>]| {
        let v = &xs[0] * 2.0 - &xs[1];
        &v * (0.9 / (1.0 + v.norm()))
    });
    let fwd = ForwardDiffusion::identity(DVector::zeros(2));
    let cfg = PenalizationConfig::uncapped(16);
    let a = solve_path_dependent(&p, &[2, 4], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    let b = solve_brute_force_tree(&p, &[2, 4], &g, &ZeroGenerator, &fwd, &l, &cfg).unwrap();
    for len in 0..=4 {
        for prefix in all_prefixes(len, 4) {
            assert!(
                (a.y_along(&prefix) - b.y_along(&prefix)).amax() < 1e-10,
                "{prefix:?}"
            );
        }
    }
}

#[test]
fn three_observations_are_rejected() {
    let (d, c) = make_ball(1.0, 2);
    let p = build_pseudo_distance(&d, &c, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 6, 1).unwrap();
    let g: PathTerminalFn = Arc::new(|xs: &[DVector<f64>]| {
        DVector::zeros(2) + DVector::from_element(2, 0.0 * xs[0][0])
    });
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let r = solve_path_dependent(
        &p,
        &[2, 4, 6],
        &g,
        &ZeroGenerator,
        &fwd,
        &l,
        &PenalizationConfig::uncapped(4),
    );
    assert!(matches!(r, Err(RbsdeError::UnsupportedDepth(3))));
}
