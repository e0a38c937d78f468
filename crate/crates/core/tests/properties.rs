use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rbsde::catalog::{
    make_ball, make_polar_star, make_sector_domain, PolarStarSpec, SectorDomainSpec,
};
use rbsde::geometry::{build_pseudo_distance, compute_gamma, project, SearchBudget};
use rbsde::lattice::ForwardDiffusion;
use rbsde::lattice::{
    conditional_expectation, sample_paths, z_projection, BrownianLattice, StepField,
};
use rbsde::solver::{
    solve_penalized, LinearGenerator, PenalizationConfig, ReflectedSolution, TerminalFn,
    ZeroGenerator,
};
use rbsde::validation::{circle_oracle, skorokhod_sum, Nu};

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent(s in 0.0f64..0.1, t in 0.0f64..std::f64::consts::TAU) {
        let spec = PolarStarSpec::new(vec![1.0, 0.0, 0.0, 0.2]);
        let (d, _) = make_polar_star(&spec).unwrap();
        let r = spec.radius(t).0 * (1.0 + s);
        let y = v2(r * t.cos(), r * t.sin());
        let p = project(&d, &y, 0.2).unwrap();
        prop_assert!(d.phi(&p).abs() < 1e-9);
        let q = project(&d, &p, 0.2).unwrap();
        prop_assert!((&p - &q).norm() < 1e-9);
    }

    #[test]
    fn gamma_is_rotation_invariant_on_the_ball(shift in 0.0f64..1.0) {
        let (d, c) = make_ball(1.0, 2);
        let a = compute_gamma(&d, &c, None, 200, 1).unwrap().gamma;
        let b = compute_gamma(&d, &c, None, 200, 1 + (shift * 1000.0) as u64).unwrap().gamma;
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn lattice_moments_are_exact(n in 2usize..40, dp in 1usize..3, k_frac in 0.0f64..1.0) {
        let l = BrownianLattice::new(1.0, n, dp).unwrap();
        let k = ((n - 1) as f64 * k_frac) as usize;
        let width = dp;
        let mut next = StepField::zeros(l.nodes_at(k + 1), width);
        for i in 0..l.nodes_at(k + 1) {
            let w = l.w(k + 1, i);
            next.data[i * width..(i + 1) * width].copy_from_slice(w.as_slice());
        }
        for i in 0..l.nodes_at(k) {
            let e = conditional_expectation(&l, &next, k, i).unwrap();
            prop_assert!((&e - l.w(k, i)).amax() < 1e-12);
            let z = z_projection(&l, &next, k, i).unwrap();
            prop_assert!((z - DMatrix::identity(dp, dp)).amax() < 1e-10);
        }
    }

    #[test]
    fn oracle_stays_on_the_circle(alpha in 0.05f64..1.5, n in 2usize..120) {
        let l = BrownianLattice::new(1.0, n, 1).unwrap();
        let o = circle_oracle(alpha, Nu::SmoothCdf { alpha }, &l).unwrap();
        for k in 0..=n {
            for i in 0..=k {
                prop_assert!((o.y(k, i).norm() - 1.0).abs() < 1e-12);
            }
        }
        for k in 0..n {
            for i in 0..=k {
                let mean = 0.5 * (o.theta[k + 1][i] + o.theta[k + 1][i + 1]);
                prop_assert!((mean - o.theta[k][i]).abs() < 1e-14);
            }
        }
        prop_assert!((o.expected_var - o.half_variance).abs() < 1e-12);
    }
}

#[test]
fn skorokhod_vanishes_for_the_solution_itself() {
    let s = make_sector_domain(&SectorDomainSpec::new(0.6, 0.15)).unwrap();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 40, 1).unwrap();
    let o = circle_oracle(0.6, Nu::sign(0.6), &l).unwrap();
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    for q in sample_paths(&l, 10, 2) {
        let path = o.path_solution(&q, &rot, &s.arc_center);
        assert_eq!(skorokhod_sum(&p, 1.0, &path, &path.y), 0.0);
    }
}

#[test]
fn interior_constant_terminal_has_no_reflection() {
    let (d, c) = make_ball(1.0, 2);
    let p = build_pseudo_distance(&d, &c, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 50, 1).unwrap();
    let g: TerminalFn = Arc::new(|_: &DVector<f64>| v2(0.2, -0.1));
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    for n in [4, 64, 256] {
        let f = solve_penalized(
            &p,
            &g,
            &ZeroGenerator,
            &fwd,
            &l,
            &PenalizationConfig::uncapped(n),
        )
        .unwrap();
        let sol =
            ReflectedSolution::from_paths(f, &sample_paths(&l, 20, 4), &p, &ZeroGenerator).unwrap();
        for q in &sol.paths {
            assert!(q.var_total() == 0.0);
            assert!(q.z.iter().all(|z| z.amax() == 0.0));
        }
    }
}

#[test]
fn linear_generator_inside_matches_closed_form() {
    // F = a y: Y_t = exp(a (T - t)) xi while Y stays in the domain
    let (d, c) = make_ball(2.0, 2);
    let p = build_pseudo_distance(&d, &c, &SearchBudget::default()).unwrap();
    let l = BrownianLattice::new(1.0, 40, 1).unwrap();
    let a = 0.3;
    let gen = LinearGenerator {
        a,
        b: DVector::zeros(2),
    };
    let g: TerminalFn = Arc::new(|_: &DVector<f64>| v2(0.5, 0.0));
    let fwd = ForwardDiffusion::identity(DVector::zeros(1));
    let f = solve_penalized(&p, &g, &gen, &fwd, &l, &PenalizationConfig::uncapped(16)).unwrap();
    // implicit steps give (1 - a dt)^{-N}
    let expected = 0.5 * (1.0 - a * l.dt()).powi(-(l.n_steps as i32));
    assert!((f.y_at(0, 0)[0] - expected).abs() < 1e-12);
}
