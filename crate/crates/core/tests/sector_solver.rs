use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rbsde::catalog::{make_sector_domain, SectorDomainSpec};
use rbsde::geometry::{build_pseudo_distance, SearchBudget};
use rbsde::lattice::{sample_paths, BrownianLattice, ForwardDiffusion};
use rbsde::solver::{
    solve_reflected, ReflectedSolution, ScheduleOptions, TerminalFn, ZeroGenerator,
};
use rbsde::validation::{
    check_distance_rate, check_skorokhod, check_var_domination, circle_oracle,
    gamma_martingale_check, skorokhod_on_paths, Nu,
};

#[test]
fn penalized_sector_tracks_the_circle_oracle() {
    let alpha = 0.6;
    let s = make_sector_domain(&SectorDomainSpec::new(alpha, 0.15)).unwrap();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 60, 1).unwrap();
    let nu = Nu::SmoothCdf { alpha };
    let frame = s.clone();
    let g: TerminalFn = Arc::new(move |x: &DVector<f64>| frame.circle_to_frame(nu.at(x[0])));
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let run = solve_reflected(
        &p,
        &g,
        &ZeroGenerator,
        &fwd,
        &l,
        &ScheduleOptions::powers_of_two(4, 256),
    )
    .unwrap();
    let diffs: Vec<f64> = run.table.iter().filter_map(|r| r.diff_prev).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");

    let oracle = circle_oracle(alpha, nu, &l).unwrap();
    let f = run.last();
    let mut err: f64 = 0.0;
    for k in 0..=l.n_steps {
        for i in 0..=k {
            err = err.max((f.y_at(k, i) - s.circle_to_frame(oracle.theta[k][i])).norm());
        }
    }
    assert!(err < 5e-3, "{err}");
    let rate = check_distance_rate(&run.table, -0.8).unwrap();
    assert!(rate.passed, "{rate:?}");

    let samples = sample_paths(&l, 20, 5);
    let sol = ReflectedSolution::from_paths(f.clone(), &samples, &p, &ZeroGenerator).unwrap();
    assert!(sol.paths.iter().all(|q| q.discrepancy < 1e-9));
    let sk = check_skorokhod(&sol, &p, 1.0, 8, 3, 1e-6);
    assert!(sk.passed, "{sk:?}");
    let band = 10.0 * run.table.last().unwrap().sup_dist;
    let vd = check_var_domination(&sol, &p, 1.0, &ZeroGenerator, band, 0.05);
    assert!(vd.passed, "{vd:?}");
    let gm = gamma_martingale_check(&sol.paths, &p.domain, l.dt(), 1e-2, 0.05, 0.1);
    assert!(gm.passed, "{gm:?}");

    // the oracle embedded in the frame satisfies the same properties with no slack
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let op: Vec<_> = samples
        .iter()
        .map(|q| oracle.path_solution(q, &rot, &s.arc_center))
        .collect();
    let gm = gamma_martingale_check(&op, &p.domain, l.dt(), 1e-9, 1e-9, 1e-6);
    assert!(gm.passed, "{gm:?}");
    assert!(skorokhod_on_paths(&op, &p, 1.0, 8, 3, 1e-9).passed);
}

#[test]
fn checks_are_deterministic() {
    let alpha = 0.5;
    let s = make_sector_domain(&SectorDomainSpec::new(alpha, 0.1)).unwrap();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 30, 1).unwrap();
    let oracle = circle_oracle(alpha, Nu::sign(alpha), &l).unwrap();
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let paths: Vec<_> = sample_paths(&l, 10, 1)
        .iter()
        .map(|q| oracle.path_solution(q, &rot, &s.arc_center))
        .collect();
    let a = skorokhod_on_paths(&paths, &p, 1.0, 6, 9, 1e-6);
    let b = skorokhod_on_paths(&paths, &p, 1.0, 6, 9, 1e-6);
    assert_eq!(a, b);
}
