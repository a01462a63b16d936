use qcyield_core::landscape::{generate_with, max_aggregation, AnnealSchedule};
use qcyield_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn brute_force_s(n: usize, cells: &[bool]) -> u64 {
    let mut s = 0;
    for r in 0..n {
        for c in 0..n {
            let here = cells[r * n + c];
            let right = cells[r * n + (c + 1) % n];
            let down = cells[((r + 1) % n) * n + c];
            s += u64::from(here == right) + u64::from(here == down);
        }
    }
    s
}

#[test]
fn aggregation_index_matches_edge_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [3, 4, 7, 20] {
        for _ in 0..10 {
            let cells: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.3)).collect();
            let l = Landscape::from_cells(n, cells.clone()).unwrap();
            assert_eq!(aggregation_index(&l), brute_force_s(n, &cells));
        }
    }
}

#[test]
fn generated_landscapes_hit_their_targets() {
    for (k, target) in [3000u64, 3600, 4200, 4800].into_iter().enumerate() {
        let l = generate(50, 0.2, target, 100 + k as u64, 500).unwrap();
        assert_eq!(l.n_plus(), 500);
        assert_eq!(aggregation_index(&l), l.s());
        assert_eq!(l.s(), target);
    }
}

#[test]
fn generator_reaches_near_maximal_aggregation() {
    let top = max_aggregation(50, 500);
    let reached: Vec<u64> = (0..20u64)
        .into_par_iter()
        .map(|seed| generate_with(50, 0.2, top, seed, 500, &AnnealSchedule::default()).unwrap().s())
        .collect();
    for (seed, s) in reached.iter().enumerate() {
        assert!(*s as f64 >= 0.99 * top as f64, "seed {seed}: s = {s} of {top}");
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate(30, 0.2, 1500, 9, 200).unwrap();
    let b = generate(30, 0.2, 1500, 9, 200).unwrap();
    assert_eq!(a, b);
}

#[test]
fn growth_field_blocks_repeat_cells() {
    let cells = vec![true, false, false, false, true, false, false, false, true];
    let l = Landscape::from_cells(3, cells).unwrap();
    let dom = DomainSpec::periodic_2d(1.0, 1.0, 6, 6).unwrap();
    let mu = to_growth_field(&l, 10.0, -1.0, &dom).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let want = if i / 2 == j / 2 { 10.0 } else { -1.0 };
            assert_eq!(mu.get(i, j), want);
        }
    }
    let bad = DomainSpec::periodic_2d(1.0, 1.0, 7, 6).unwrap();
    assert!(to_growth_field(&l, 10.0, 0.0, &bad).is_err());
}

#[test]
fn text_and_pbm_output() {
    let l = generate(12, 0.25, 200, 3, 100).unwrap();
    let mut buf = Vec::new();
    l.write_text(&mut buf).unwrap();
    assert_eq!(Landscape::read_text(&buf[..]).unwrap(), l);
    let mut pbm = Vec::new();
    l.write_pbm(&mut pbm).unwrap();
    let text = String::from_utf8(pbm).unwrap();
    assert!(text.starts_with("P1\n12 12\n"));
    assert_eq!(text.matches('1').count() - 3, l.n_plus());
}

#[test]
fn steiner_profile_is_symmetric_decreasing() {
    let dom = DomainSpec::new(Boundary::Dirichlet, &[1.0, 1.0], &[9, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = GridField::new(dom, (0..36).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let r = steiner_rearrange(&q, 0).unwrap();
    for j in 0..4 {
        let col: Vec<f64> = (0..9).map(|i| r.get(i, j)).collect();
        for i in 0..4 {
            assert!(col[i] <= col[i + 1], "column {j} rises to the centre");
            assert!(col[8 - i] <= col[7 - i]);
        }
    }
}
