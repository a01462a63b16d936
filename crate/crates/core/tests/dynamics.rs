mod common;

use common::*;
use qcyield_core::evolution::classify_longtime_with;
use qcyield_core::*;
use std::f64::consts::PI;

fn patchy(delta: f64) -> ModelParams {
    let dom = DomainSpec::periodic_2d(1.0, 1.0, 16, 16).unwrap();
    let mu = two_valued(dom, 0.3, 6.0, -0.5, 8);
    let ones = GridField::constant(dom, 1.0);
    ModelParams::new(0.05, mu, ones.clone(), ones, delta, None).unwrap()
}

#[test]
fn unharvested_flow_approaches_p0() {
    let params = patchy(0.0);
    let p0 = solve_logistic_steady(&params).unwrap();
    let u0 = GridField::constant(*params.domain(), 0.05);
    let traj = integrate(&params, &u0, 2000.0, 0.1).unwrap();
    assert!(traj.converged);
    assert!(traj.final_state.p.sup_distance(&p0.p) < 1e-7);
    assert_eq!(traj.final_state.classification, Classification::Significant);
}

#[test]
fn extinction_when_lambda1_is_nonnegative() {
    let dom = DomainSpec::new(Boundary::Neumann, &[1.0], &[32]).unwrap();
    let mu = GridField::from_fn(dom, |x| -1.0 + 0.5 * (PI * x[0]).cos()).unwrap();
    let ones = GridField::constant(dom, 1.0);
    let params = ModelParams::new(1.0, mu, ones.clone(), ones, 0.0, None).unwrap();
    assert!(params.lambda1() > 0.0);
    let p0 = solve_logistic_steady(&params).unwrap();
    assert_eq!(p0.p.sup_norm(), 0.0);
    assert_eq!(p0.classification, Classification::Remnant);
    let traj = integrate(&params, &GridField::constant(dom, 2.0), 200.0, 0.1).unwrap();
    assert!(traj.final_state.p.max() < 1e-6);
}

#[test]
fn flow_from_p0_is_nonincreasing_and_splits_at_thresholds() {
    let base = patchy(0.0);
    let t = thresholds(&base, base.eigenpair()).unwrap();
    let opts = EvolveOptions::default();
    let (c, state, inc) = classify_longtime_with(&base.with_delta(0.9 * t.delta1).unwrap(), &opts).unwrap();
    assert_eq!(c, Classification::Significant);
    assert!(inc <= 1e-12);
    assert!(state.residual < 1e-8);
    let (c, _, inc) = classify_longtime_with(&base.with_delta(1.1 * t.delta2).unwrap(), &opts).unwrap();
    assert_eq!(c, Classification::Remnant);
    assert!(inc <= 1e-12);
}

#[test]
fn delta_star_lies_between_thresholds() {
    let base = patchy(0.0);
    let t = locate_delta_star(&base, 1e-3).unwrap();
    let (lo, hi) = t.delta_star_bracket.unwrap();
    assert!(hi - lo <= 1e-3);
    assert!(lo >= t.delta1 && hi <= t.delta2 + 1e-3);
}

#[test]
fn at_most_two_ordered_solutions_in_one_dimension() {
    let dom = DomainSpec::periodic_1d(1.0, 48).unwrap();
    let mu = GridField::from_fn(dom, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).cos()).unwrap();
    let ones = GridField::constant(dom, 1.0);
    let base = ModelParams::new(0.1, mu, ones.clone(), ones, 0.0, None).unwrap();
    let t = thresholds(&base, base.eigenpair()).unwrap();
    let m = count_significant_solutions(&base.with_delta(0.95 * t.delta1).unwrap(), 24, 3).unwrap();
    assert!(m.guarantee_applies);
    assert!(m.count >= 1 && m.count <= 2, "count {}", m.count);
    assert!(m.ordered);
}

#[test]
fn proportional_harvest_equals_reduced_growth() {
    let dom = DomainSpec::periodic_2d(1.0, 1.0, 12, 12).unwrap();
    let mu = two_valued(dom, 0.4, 5.0, 0.0, 1);
    let nu = GridField::constant(dom, 1.0);
    let q = random_field(dom, 0.0, 1.0, 2);
    let u0 = GridField::constant(dom, 0.5);
    let a = integrate_proportional(0.1, &mu, &nu, &q, &u0, 3.0, 0.01).unwrap();
    let tau = mu.zip_map(&q, |m, r| m - r).unwrap();
    let ones = GridField::constant(dom, 1.0);
    let params = ModelParams::new(0.1, tau, nu, ones, 0.0, None).unwrap();
    let b = integrate(&params, &u0, 3.0, 0.01).unwrap();
    assert_eq!(a.final_state.p, b.final_state.p);
}
