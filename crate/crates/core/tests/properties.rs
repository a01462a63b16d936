mod common;

use common::*;
use proptest::prelude::*;
use qcyield_core::spectral::second_eigenvalue_given;
use qcyield_core::study::PolyFit;
use qcyield_core::*;

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![
        Just(Boundary::Periodic),
        Just(Boundary::Neumann),
        Just(Boundary::Dirichlet)
    ]
}

fn domain() -> impl Strategy<Value = DomainSpec> {
    (boundary(), 3usize..9, 3usize..9, 0.5f64..2.0, 0.5f64..2.0, any::<bool>()).prop_map(
        |(bc, m0, m1, l0, l1, two)| {
            if two {
                DomainSpec::new(bc, &[l0, l1], &[m0, m1]).unwrap()
            } else {
                DomainSpec::new(bc, &[l0], &[m0 * m1]).unwrap()
            }
        },
    )
}

fn dot(a: &GridField, b: &GridField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
}

fn norm(a: &GridField) -> f64 {
    dot(a, a).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn diffusion_is_self_adjoint_and_nonpositive(dom in domain(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_field(dom, -1.0, 1.0, s1);
        let b = random_field(dom, -1.0, 1.0, s2);
        let la = apply_diffusion(&a, 1.0);
        let lb = apply_diffusion(&b, 1.0);
        let scale = norm(&a) * norm(&b) * dom.spacing(0).powi(-2).max(1.0);
        prop_assert!((dot(&la, &b) - dot(&a, &lb)).abs() <= 1e-12 * scale);
        prop_assert!(dot(&la, &a) <= 1e-12 * scale);
    }

    #[test]
    fn rayleigh_quotient_bounds_lambda1(dom in domain(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let sigma = random_field(dom, -5.0, 5.0, s1);
        let psi = random_field(dom, -1.0, 1.0, s2);
        let e = principal_eigenpair(&sigma, 0.8).unwrap();
        let r = rayleigh_quotient(&psi, &sigma, 0.8).unwrap();
        prop_assert!(r >= e.lambda - 1e-9 * e.lambda.abs().max(1.0));
        let rq = rayleigh_quotient(&e.phi, &sigma, 0.8).unwrap();
        prop_assert!((rq - e.lambda).abs() <= 1e-8 * e.lambda.abs().max(1.0));
    }

    #[test]
    fn principal_pair_is_simple_and_positive(dom in domain(), s in any::<u64>()) {
        let mu = random_field(dom, 0.0, 8.0, s);
        let e = principal_eigenpair(&mu, 1.0).unwrap();
        prop_assert!(e.phi_min > 0.0);
        prop_assert!((e.phi.sup_norm() - 1.0).abs() < 1e-14);
        let l2 = second_eigenvalue_given(&mu, 1.0, &e).unwrap();
        prop_assert!(e.lambda < l2);
    }

    #[test]
    fn lambda1_is_monotone_in_mu(dom in domain(), s in any::<u64>(), t in any::<u64>()) {
        let a = random_field(dom, -2.0, 4.0, s);
        let bump = random_field(dom, 0.0, 3.0, t);
        let b = a.zip_map(&bump, |x, y| x + y).unwrap();
        let la = principal_eigenpair(&a, 1.0).unwrap().lambda;
        let lb = principal_eigenpair(&b, 1.0).unwrap().lambda;
        prop_assert!(la >= lb - 1e-9);
    }

    #[test]
    fn shift_covariance(dom in domain(), s in any::<u64>(), c in -5.0f64..5.0) {
        let a = random_field(dom, 0.0, 6.0, s);
        let ea = principal_eigenpair(&a, 1.0).unwrap();
        let eb = principal_eigenpair(&a.map(|v| v + c), 1.0).unwrap();
        prop_assert!((eb.lambda - (ea.lambda - c)).abs() <= 1e-10 * (1.0 + ea.lambda.abs()));
        prop_assert!(ea.phi.sup_distance(&eb.phi) <= 1e-7);
    }

    #[test]
    fn rho_is_monotone_and_bounded(a in -1.0f64..2.0, b in -1.0f64..2.0, eps in 1e-4f64..1.0) {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let (rx, ry) = (rho_eps(x * eps, eps), rho_eps(y * eps, eps));
        prop_assert!((0.0..=1.0).contains(&rx));
        prop_assert!(rx <= ry + 1e-15);
    }

    #[test]
    fn rearrangements_preserve_distribution(s in any::<u64>(), axis in 0usize..2, m0 in 3usize..10, m1 in 3usize..10) {
        let dom = DomainSpec::new(Boundary::Neumann, &[1.0, 1.0], &[m0, m1]).unwrap();
        let q = random_field(dom, -1.0, 1.0, s);
        let sorted = |f: &GridField| {
            let mut v = f.values().to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        for r in [
            steiner_rearrange(&q, axis).unwrap(),
            monotone_rearrange(&q, axis, Monotone::Increasing).unwrap(),
            monotone_rearrange(&q, axis, Monotone::Decreasing).unwrap(),
        ] {
            prop_assert_eq!(sorted(&r), sorted(&q));
        }
    }

    #[test]
    fn aggregation_index_is_translation_invariant(seed in any::<u64>(), n in 3usize..12, dr in 0usize..12, dc in 0usize..12) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<bool> = (0..n * n).map(|_| rng.random()).collect();
        let l = Landscape::from_cells(n, cells.clone()).unwrap();
        let shifted: Vec<bool> = (0..n * n)
            .map(|k| {
                let (r, c) = (k / n, k % n);
                cells[((r + dr) % n) * n + (c + dc) % n]
            })
            .collect();
        let m = Landscape::from_cells(n, shifted).unwrap();
        prop_assert_eq!(aggregation_index(&l), aggregation_index(&m));
        prop_assert_eq!(l.n_plus(), m.n_plus());
    }

    #[test]
    fn fit_is_permutation_invariant(seed in any::<u64>(), rot in 1usize..59) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(3000.0..5000.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 1000.0).sin() + 0.05 * rng.random::<f64>()).collect();
        let a = PolyFit::fit(&x, &y, 9, 0.99).unwrap();
        let mut idx: Vec<usize> = (0..60).collect();
        idx.rotate_left(rot);
        idx.reverse();
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let b = PolyFit::fit(&xp, &yp, 9, 0.99).unwrap();
        for (c, d) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((c - d).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn comparison_principle(s in any::<u64>(), t in any::<u64>(), delta in 0.0f64..0.3) {
        let dom = DomainSpec::periodic_2d(1.0, 1.0, 10, 10).unwrap();
        let mu = random_field(dom, 0.5, 3.0, s);
        let params = ModelParams::new(
            0.1, mu, GridField::constant(dom, 1.0), GridField::constant(dom, 1.0), delta, None,
        ).unwrap();
        let lo = random_field(dom, 0.0, 1.0, t);
        let gap = random_field(dom, 0.0, 1.0, t ^ 1);
        let hi = lo.zip_map(&gap, |a, b| a + b).unwrap();
        let a = integrate(&params, &lo, 4.0, 0.05).unwrap();
        let b = integrate(&params, &hi, 4.0, 0.05).unwrap();
        for (u, v) in a.final_state.p.values().iter().zip(b.final_state.p.values()) {
            prop_assert!(*u <= v + 1e-9);
        }
    }

    #[test]
    fn thresholds_are_ordered(s in any::<u64>(), nu_var in 0.0f64..0.5, h_lo in 0.2f64..1.0) {
        let dom = DomainSpec::periodic_2d(1.0, 1.0, 12, 12).unwrap();
        let mu = two_valued(dom, 0.3, 10.0, 0.0, s);
        let nu = random_field(dom, 1.0 - nu_var, 1.0 + nu_var + 1e-9, s ^ 7);
        let h = random_field(dom, h_lo, 1.0, s ^ 9);
        let params = ModelParams::new(1.0, mu, nu, h, 0.0, None).unwrap();
        let t = thresholds(&params, params.eigenpair()).unwrap();
        prop_assert!(t.delta1 <= t.delta2);
    }
}
