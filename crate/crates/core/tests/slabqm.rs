use perc_core::estimators::connection_ratio;
use perc_core::exec::Exec;
use perc_core::lattice::plane_linf;
use perc_core::oracle::{enumerate_counts, bernstein};
use perc_core::percolation::{connected_in, LazyConfiguration};
use perc_core::slabqm::*;
use perc_core::{Configuration, Error, LatticeSpec, Region};

fn slab(k: u32) -> LatticeSpec {
    LatticeSpec::slab(3, k)
}

/// Open edges: the layer-0 ring on ∂Q(2) plus the listed paths.
fn instance(region: &Region, paths: &[&[[i32; 3]]]) -> Configuration {
    let mut open = Vec::new();
    for e in 0..region.edge_count() {
        let (a, b) = region.edge(e);
        let (ca, cb) = (region.coord(a), region.coord(b));
        if plane_linf(ca) == 2 && plane_linf(cb) == 2 && ca[2] == 0 && cb[2] == 0 {
            open.push(e);
        }
    }
    for path in paths {
        for w in path.windows(2) {
            let a = region.index_of(&w[0]).unwrap();
            let b = region.index_of(&w[1]).unwrap();
            open.push(region.edge_index(a, b).expect("adjacent"));
        }
    }
    Configuration::from_open_edges(region.edge_count(), open)
}

fn probe(k: u32, x: [i32; 3], y: [i32; 3]) -> SlabProbe {
    let region = Region::slab_box(slab(k), 4).unwrap();
    SlabProbe::with_sets(region, 1, &[x.to_vec()], &[y.to_vec()]).unwrap()
}

fn run(probe: &SlabProbe, cfg: &Configuration) -> (Classification, ModificationReport) {
    let class = classify_case(probe, cfg).unwrap().expect("in the bad event");
    let rep = check_modification(probe, cfg, &class).unwrap();
    (class, rep)
}

#[test]
fn handcrafted_case_a2() {
    let pr = probe(1, [0, 0, 1], [4, 1, 1]);
    let cfg = instance(&pr.region, &[&[[0, 0, 1], [1, 0, 1], [2, 0, 1]], &[[4, 1, 1], [3, 1, 1], [2, 1, 1]]]);
    let (class, rep) = run(&pr, &cfg);
    assert_eq!(class.subevent, Subevent::A);
    assert_eq!(class.circuit.len(), 16);
    assert_eq!(rep.case, CaseTag::A2);
    assert_eq!(rep.columns, vec![[2, 0], [2, 1]]);
    assert_eq!(rep.reconstructed, rep.columns);
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.edits <= 24);
    assert_eq!(rep.d_bound, 24);
    assert_eq!(rep.d_bound_as_printed, 24);
    // The two vertical links from u and v down to the ring.
    assert_eq!(rep.edits, 2);
    assert_eq!((rep.pi_u.len(), rep.pi_v.len()), (2, 2));
}

#[test]
fn handcrafted_case_a1_needs_three_layers() {
    let pr = probe(2, [0, 0, 1], [4, 0, 2]);
    let cfg = instance(&pr.region, &[&[[0, 0, 1], [1, 0, 1], [2, 0, 1]], &[[4, 0, 2], [3, 0, 2], [2, 0, 2]]]);
    let (class, rep) = run(&pr, &cfg);
    assert_eq!(class.subevent, Subevent::A);
    assert_eq!(rep.case, CaseTag::A1);
    assert_eq!(rep.columns, vec![[2, 0]]);
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.edits <= pr.column_bound());
    assert_eq!(pr.column_bound(), 18);
    assert_eq!(rep.edits, 2);
}

#[test]
fn handcrafted_case_b1_and_c() {
    let pr = probe(1, [0, 0, 1], [4, 1, 0]);
    let cfg = instance(&pr.region, &[&[[0, 0, 1], [1, 0, 1], [2, 0, 1]], &[[4, 1, 0], [3, 1, 0], [2, 1, 0]]]);
    let (class, rep) = run(&pr, &cfg);
    assert_eq!(class.subevent, Subevent::B);
    assert_eq!((rep.case, rep.swapped), (CaseTag::B1, false));
    assert_eq!(rep.columns, vec![[2, 0]]);
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.edits <= 12);

    let pr = probe(1, [0, 0, 0], [4, 1, 1]);
    let cfg = instance(&pr.region, &[&[[0, 0, 0], [1, 0, 0], [2, 0, 0]], &[[4, 1, 1], [3, 1, 1], [2, 1, 1]]]);
    let (class, rep) = run(&pr, &cfg);
    assert_eq!(class.subevent, Subevent::C);
    assert_eq!((rep.case, rep.swapped), (CaseTag::B1, true));
    assert_eq!(rep.columns, vec![[2, 1]]);
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn handcrafted_case_b2_with_v_on_the_circuit() {
    let pr = probe(1, [0, 0, 1], [4, 0, 0]);
    let cfg = instance(&pr.region, &[&[[0, 0, 1], [1, 0, 1], [2, 0, 1]], &[[4, 0, 0], [3, 0, 0], [2, 0, 0]]]);
    let (class, rep) = run(&pr, &cfg);
    assert_eq!(class.subevent, Subevent::B);
    assert_eq!(rep.case, CaseTag::B2);
    assert!(rep.passed(), "{rep:?}");
    assert_eq!(rep.edits, 1);
}

#[test]
fn image_differs_only_around_designated_columns() {
    let pr = probe(1, [0, 0, 1], [4, 1, 1]);
    let mut cfg = instance(&pr.region, &[&[[0, 0, 1], [1, 0, 1], [2, 0, 1]], &[[4, 1, 1], [3, 1, 1], [2, 1, 1]]]);
    // Clutter that the map must close: a dangling edge at (2,0,1) and one at (2,1,0).
    let r = &pr.region;
    let e1 = r.edge_index(r.index_of(&[2, 0, 1]).unwrap(), r.index_of(&[3, 0, 1]).unwrap()).unwrap();
    let e2 = r.edge_index(r.index_of(&[2, 1, 0]).unwrap(), r.index_of(&[1, 1, 0]).unwrap()).unwrap();
    cfg.set(e1, true);
    cfg.set(e2, true);
    let (_, rep) = run(&pr, &cfg);
    assert!(rep.local);
    assert!(rep.passed(), "{rep:?}");
    assert_eq!(rep.edits, 4);
}

#[test]
fn extremes_are_not_classified() {
    let pr = SlabProbe::standard(slab(1), 1).unwrap();
    let e = pr.region.edge_count();
    assert!(classify_case(&pr, &Configuration::all(e, true)).unwrap().is_none());
    assert!(classify_case(&pr, &Configuration::all(e, false)).unwrap().is_none());
    let err = verify_modification(&pr, 1.0, 500, None, 1, &Exec::new(1)).unwrap_err();
    assert!(matches!(err, Error::Starvation { .. }));
}

#[test]
fn geometry_is_checked() {
    let region = Region::slab_box(slab(1), 4).unwrap();
    assert!(matches!(
        SlabProbe::with_sets(region.clone(), 1, &[vec![3, 0, 0]], &[vec![4, 0, 0]]),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        SlabProbe::with_sets(region.clone(), 1, &[vec![0, 0, 0]], &[vec![3, 0, 0]]),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        SlabProbe::with_sets(region, 2, &[vec![0, 0, 0]], &[vec![4, 0, 0]]),
        Err(Error::Input(_))
    ));
    let planar = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 12).unwrap();
    let all = planar.all_vertices();
    assert!(SlabProbe::new(planar, 1, all.clone(), all.clone(), all).is_err());
}

#[test]
fn sampled_modifications_all_pass() {
    let pr = SlabProbe::standard(slab(1), 1).unwrap();
    let s = verify_modification(&pr, 0.45, 400_000, Some(200), 17, &Exec::new(0)).unwrap();
    assert!(s.hits() >= 200, "{} hits in {} samples", s.hits(), s.samples);
    assert_eq!(s.failed, 0, "{}", s.failures.first().cloned().unwrap_or_default());
    assert!(s.max_edits <= 24);
    assert_eq!(s.case_counts[0], 0, "a1 needs two free vertices in a column");
}

#[test]
fn sampled_modifications_on_thick_slab() {
    let pr = SlabProbe::standard(slab(2), 1).unwrap();
    let s = verify_modification(&pr, 0.4, 300_000, Some(100), 5, &Exec::new(0)).unwrap();
    assert_eq!(s.failed, 0, "{}", s.failures.first().cloned().unwrap_or_default());
    assert!(s.max_edits <= pr.d_bound());
}

#[test]
fn verification_is_worker_invariant() {
    let pr = SlabProbe::standard(slab(1), 1).unwrap();
    let a = verify_modification(&pr, 0.45, 20_000, None, 3, &Exec::new(1)).unwrap();
    let b = verify_modification(&pr, 0.45, 20_000, None, 3, &Exec::new(4)).unwrap();
    assert_eq!((a.case_counts, a.reports.clone()), (b.case_counts, b.reports.clone()));
}

#[test]
fn fkg_direction_holds() {
    let pr = SlabProbe::standard(slab(1), 1).unwrap();
    for p in [0.35, 0.45, 0.6] {
        let rep = fkg_check(&pr, p, 20_000, 8, &Exec::new(0)).unwrap();
        assert!(rep.consistent(4.0), "{rep:?}");
    }
}

#[test]
fn constants_at_p_one() {
    let region = Region::slab_box(slab(1), 4).unwrap();
    let probes = vec![QmProbe {
        label: "origin".into(),
        x: vec![vec![0, 0, 0]],
        y: vec![vec![4, 4, 1]],
    }];
    let rep = qm_constant_report(&region, 1.0, 1, &probes, 200, 1, None, &Exec::new(1)).unwrap();
    assert_eq!(rep.ratios[0].ratio.ratio.mean, 1.0);
    assert_eq!(rep.c_star, Some(1.0));
    let bad = vec![QmProbe {
        label: "far".into(),
        x: vec![vec![2, 0, 0]],
        y: vec![vec![4, 4, 1]],
    }];
    assert!(qm_constant_report(&region, 0.5, 1, &bad, 200, 1, None, &Exec::new(1)).is_err());
}

#[test]
fn constants_at_moderate_p() {
    let region = Region::slab_box(slab(1), 4).unwrap();
    let probes = vec![
        QmProbe {
            label: "point".into(),
            x: vec![vec![0, 0, 0]],
            y: vec![vec![4, 0, 0]],
        },
        QmProbe {
            label: "column".into(),
            x: vec![vec![0, 0, 0], vec![0, 0, 1]],
            y: vec![vec![4, 4, 1]],
        },
    ];
    let rep = qm_constant_report(&region, 0.5, 1, &probes, 20_000, 2, Some(0.4), &Exec::new(0)).unwrap();
    let c = rep.c_star.unwrap();
    for r in &rep.ratios {
        assert!(r.ratio.ratio.mean > 0.0);
        assert!(c <= r.ratio.ratio.mean);
    }
    assert!((rep.delta.unwrap() - 0.1).abs() < 1e-12);
}

/// The ratio estimator against exact enumeration on a 20-edge planar slab strip.
#[test]
fn ratio_matches_enumeration_on_small_strip() {
    let spec = LatticeSpec::slab(2, 0);
    let r = Region::rectangle(spec, &[0, 0], &[4, 2]).unwrap();
    let edges = r.edge_count();
    assert!(edges <= 24);
    let x = r.set_of([[0, 1].as_slice()]).unwrap();
    let y = r.set_of([[4, 1].as_slice()]).unwrap();
    let s = r.set_where(|c| c[0] == 2);
    let z = r.all_vertices();
    let prob = |a: &perc_core::VertexSet, b: &perc_core::VertexSet, p: f64| {
        let counts = enumerate_counts(&r, edges, |m, _| connected_in(&r, &m, a, b, &z)).unwrap();
        bernstein(&counts, p)
    };
    let p = 0.55;
    let exact = prob(&x, &y, p) / (prob(&x, &s, p) * prob(&y, &s, p));
    let mc = connection_ratio(&r, p, &x, &y, &s, &z, 40_000, 4, &Exec::new(0)).unwrap();
    let z_score = (mc.ratio.mean - exact).abs() / mc.ratio.stderr;
    assert!(z_score < 4.0, "exact {exact}, mc {:?}", mc.ratio);
}

#[test]
fn lazy_and_stored_classification_agree() {
    let pr = SlabProbe::standard(slab(1), 1).unwrap();
    for i in 0..300 {
        let lazy = LazyConfiguration::new(0.45, 9, i);
        let stored = Configuration::capture(pr.region.edge_count(), &lazy);
        assert_eq!(classify_case(&pr, &lazy).unwrap(), classify_case(&pr, &stored).unwrap());
    }
}
