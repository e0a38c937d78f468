use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use rbsde::catalog::{make_sector_domain, SectorDomainSpec};
use rbsde::geometry::{build_pseudo_distance, compute_gamma, estimate_r0, R0Options, SearchBudget};

#[test]
fn sector_constants_quarter_pi() {
    let s = make_sector_domain(&SectorDomainSpec::new(FRAC_PI_4, 0.2)).unwrap();
    let t = Instant::now();
    let r0 = estimate_r0(&s.domain, &R0Options::default()).unwrap();
    eprintln!("r0 {:?} in {:?}", r0, t.elapsed());
    assert!((r0.r0 - 1.0).abs() < 1e-2);
    let t = Instant::now();
    let g = compute_gamma(&s.domain, &s.core, Some(&s.inner_arc()), 2001, 1).unwrap();
    eprintln!("gamma arc {:?} in {:?}", g, t.elapsed());
    assert!((g.gamma - FRAC_PI_4.cos()).abs() < 1e-3);
    let full = compute_gamma(&s.domain, &s.core, None, 4000, 1).unwrap();
    eprintln!("gamma full {:?}", full);
    assert!(full.gamma > 0.0);
}

#[test]
fn sector_pseudo_distance_margin() {
    let s = make_sector_domain(&SectorDomainSpec::new(0.7, 0.2)).unwrap();
    let t = Instant::now();
    let p = build_pseudo_distance(&s.domain, &s.core, &SearchBudget::default()).unwrap();
    eprintln!(
        "eps {} kappa {} margin {} cmp {:?} lip {} mingrad {} in {:?}",
        p.eps,
        p.kappa,
        p.margin,
        p.comparison,
        p.lip_grad_psi,
        p.min_grad_norm,
        t.elapsed()
    );
    assert!(p.margin > 0.0);
}
