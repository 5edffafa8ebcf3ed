mod common;

use perc_core::events::{EventSpec, SetSpec};
use perc_core::oracle::{binomial, exact_event_polynomial, exact_probability, oracle_mc_crosscheck, verify_bk_chain, EDGE_CAP};
use perc_core::{Error, LatticeSpec, Region};
use proptest::prelude::*;

fn z2() -> LatticeSpec {
    LatticeSpec::hypercubic(2)
}

fn square() -> Region {
    Region::rectangle(z2(), &[0, 0], &[1, 1]).unwrap()
}

fn corner() -> EventSpec {
    EventSpec::Connect {
        x: SetSpec::Vertices { coords: vec![vec![0, 0]] },
        y: SetSpec::Vertices { coords: vec![vec![1, 1]] },
        z: SetSpec::All,
    }
}

#[test]
fn sure_and_impossible_coefficients() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let sure = exact_event_polynomial(&r, &EventSpec::Sure).unwrap();
    assert_eq!(sure.coeffs, (0..=16).map(|k| binomial(16, k)).collect::<Vec<_>>());
    let none = exact_event_polynomial(&r, &EventSpec::Impossible).unwrap();
    assert!(none.coeffs.iter().all(|&c| c == 0));
}

#[test]
fn unit_square_polynomial() {
    let poly = exact_event_polynomial(&square(), &corner()).unwrap();
    assert_eq!(poly.coeffs, vec![0, 0, 2, 4, 1]);
    assert_eq!(exact_probability(&poly, 0.5).unwrap(), 0.4375);
    assert_eq!(exact_probability(&poly, 0.0).unwrap(), 0.0);
    assert_eq!(exact_probability(&poly, 1.0).unwrap(), 1.0);
}

#[test]
fn e2_coefficients_match_brute_force() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let es: Vec<(common::C, common::C)> = (0..16)
        .map(|e| {
            let (a, b) = r.edge(e);
            ((r.coord(a)[0], r.coord(a)[1]), (r.coord(b)[0], r.coord(b)[1]))
        })
        .collect();
    let mut brute = vec![0u64; 17];
    for mask in 0u64..1 << 16 {
        if common::crossing_count(&es, mask, 1, 2) >= 2 {
            brute[mask.count_ones() as usize] += 1;
        }
    }
    let poly = exact_event_polynomial(&r, &EventSpec::e2(&[0, 0], 1, 2)).unwrap();
    assert_eq!(poly.coeffs, brute);
    assert_eq!(&brute[..2], &[0, 0]);
}

#[test]
fn cap_exceeded_is_reported() {
    let r = Region::ball(z2(), &[0, 0], 3).unwrap();
    assert!(r.edge_count() > EDGE_CAP);
    match exact_event_polynomial(&r, &EventSpec::Sure) {
        Err(Error::CapExceeded { edges, cap }) => assert_eq!((edges, cap), (r.edge_count(), EDGE_CAP)),
        other => panic!("expected cap error, got {other:?}"),
    }
}

#[test]
fn bk_chain_margins() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let m = verify_bk_chain(&r, &[0, 0], 1, 2, &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(m[0].holds, None);
    assert!(m[1].lower_slack.unwrap() > 0.0 && m[1].upper_slack.unwrap() > 0.0);
    assert_eq!(m[1].holds, Some(true));
    assert_eq!(m[2].p_e2, 0.0);
    assert_eq!(m[2].conditional, Some(0.0));
    assert_eq!(m[2].holds, Some(true));
}

#[test]
fn crosscheck_z_scores() {
    let r = square();
    assert_eq!(oracle_mc_crosscheck(&r, 0.0, &corner(), 1000, 1).unwrap(), 0.0);
    assert_eq!(oracle_mc_crosscheck(&r, 1.0, &corner(), 1000, 1).unwrap(), 0.0);
    assert!(oracle_mc_crosscheck(&r, 0.5, &corner(), 100_000, 1).unwrap().abs() <= 4.0);
    let zs: Vec<f64> = (0..20).map(|s| oracle_mc_crosscheck(&r, 0.5, &corner(), 10_000, 100 + s).unwrap()).collect();
    assert!(zs.iter().all(|z| z.abs() <= 5.0), "{zs:?}");
    let excursions = zs.iter().filter(|z| z.abs() > 3.0).count();
    println!("z excursions beyond 3: {excursions} of 20");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_are_bounded_by_binomials(p in 0.0f64..=1.0, n in 1u32..3) {
        let r = Region::ball(z2(), &[0, 0], n).unwrap();
        let e = r.edge_count();
        let poly = exact_event_polynomial(&r, &EventSpec::e1(&[0, 0], 1, n)).unwrap();
        for (k, &c) in poly.coeffs.iter().enumerate() {
            prop_assert!(c <= binomial(e, k));
        }
        let v = exact_probability(&poly, p).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn complement_sums_to_one(p in 0.0f64..=1.0) {
        let r = Region::ball(z2(), &[0, 0], 2).unwrap();
        let e = EventSpec::e2(&[0, 0], 1, 2);
        let a = exact_probability(&exact_event_polynomial(&r, &e).unwrap(), p).unwrap();
        let b = exact_probability(&exact_event_polynomial(&r, &EventSpec::Not { event: Box::new(e) }).unwrap(), p).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
