mod common;

use perc_core::lattice::{metric_sets, Metric};
use perc_core::percolation::{connected_in, crossing_cluster_count, label_clusters, sample_configuration, LazyConfiguration, MaskStates};
use perc_core::{Configuration, EdgeStates, LatticeSpec, Region};
use proptest::prelude::*;

fn z2() -> LatticeSpec {
    LatticeSpec::hypercubic(2)
}

fn coord_edges(r: &Region) -> Vec<(common::C, common::C)> {
    (0..r.edge_count())
        .map(|e| {
            let (a, b) = r.edge(e);
            let (a, b) = (r.coord(a), r.coord(b));
            ((a[0], a[1]), (b[0], b[1]))
        })
        .collect()
}

#[test]
fn extreme_probabilities() {
    let r = Region::ball(z2(), &[0, 0], 3).unwrap();
    assert_eq!(sample_configuration(&r, 0.0, 1, 0).unwrap().open_count(), 0);
    assert_eq!(sample_configuration(&r, 1.0, 1, 0).unwrap().open_count(), r.edge_count());
    assert!(sample_configuration(&r, 1.5, 1, 0).is_err());
}

#[test]
fn open_fraction_is_binomial() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let samples = 100_000u64;
    let open: usize = (0..samples).map(|i| sample_configuration(&r, 0.5, 42, i).unwrap().open_count()).sum();
    let trials = (16 * samples) as f64;
    let sigma = (0.25 / trials).sqrt();
    assert!((open as f64 / trials - 0.5).abs() <= 4.0 * sigma);
}

#[test]
fn lazy_and_stored_agree() {
    let r = Region::ball(z2(), &[0, 0], 4).unwrap();
    for i in 0..20 {
        let c = sample_configuration(&r, 0.37, 9, i).unwrap();
        let lazy = LazyConfiguration::new(0.37, 9, i);
        assert!((0..r.edge_count()).all(|e| c.is_open(e) == lazy.is_open(e)));
    }
}

#[test]
fn unit_square_clusters() {
    let r = Region::rectangle(z2(), &[0, 0], &[1, 1]).unwrap();
    let e = r.edge_index(r.index_of(&[0, 0]).unwrap(), r.index_of(&[1, 0]).unwrap()).unwrap();
    let cfg = Configuration::from_open_edges(4, [e]);
    let lab = label_clusters(&r, &cfg, &r.all_vertices());
    assert_eq!(lab.cluster_count, 3);
    let (a, b) = (r.index_of(&[0, 0]).unwrap(), r.index_of(&[1, 0]).unwrap());
    assert!(lab.same_cluster(a, b));
    assert!(!lab.same_cluster(a, r.index_of(&[1, 1]).unwrap()));
    let closed = label_clusters(&r, &Configuration::all(4, false), &r.all_vertices());
    assert_eq!(closed.cluster_count, 4);
    let open = label_clusters(&r, &Configuration::all(4, true), &r.all_vertices());
    assert_eq!(open.cluster_count, 1);
}

#[test]
fn connections() {
    let r = Region::rectangle(z2(), &[0, 0], &[1, 1]).unwrap();
    let x = r.set_of([[0, 0].as_slice()]).unwrap();
    let y = r.set_of([[1, 1].as_slice()]).unwrap();
    let both = r.set_of([[0, 0].as_slice(), [1, 0].as_slice()]).unwrap();
    let closed = Configuration::all(4, false);
    assert!(connected_in(&r, &closed, &x, &both, &r.all_vertices()));
    assert!(!connected_in(&r, &closed, &x, &y, &r.all_vertices()));
    // Exact connection probability against brute-force enumeration.
    let es = coord_edges(&r);
    let vs: Vec<common::C> = (0..4).map(|v| (r.coord(v)[0], r.coord(v)[1])).collect();
    let exact = common::enumerate_probability(4, 0.5, &|mask| {
        common::components(&vs, &es, &|e| mask >> e & 1 == 1)
            .iter()
            .any(|c| c.contains(&(0, 0)) && c.contains(&(1, 1)))
    });
    assert_eq!(exact, 0.4375);
    let lib = common::enumerate_probability(4, 0.5, &|m| connected_in(&r, &MaskStates(m), &x, &y, &r.all_vertices()));
    assert_eq!(lib, exact);
}

#[test]
fn crossing_counts_match_enumeration() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let s = metric_sets(&r, &[0, 0], 1, 2, Metric::Ambient).unwrap();
    let es = coord_edges(&r);
    for mask in 0u64..1 << 16 {
        let lib = crossing_cluster_count(&r, &MaskStates(mask), &s.annulus, &s.shell_m, &s.shell_n);
        assert_eq!(lib, common::crossing_count(&es, mask, 1, 2), "mask {mask:#x}");
        if mask.count_ones() == 1 {
            assert!(lib < 2);
        }
    }
    assert_eq!(crossing_cluster_count(&r, &Configuration::all(16, true), &s.annulus, &s.shell_m, &s.shell_n), 1);
    assert_eq!(crossing_cluster_count(&r, &Configuration::all(16, false), &s.annulus, &s.shell_m, &s.shell_n), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn labels_match_dfs(mask in any::<u64>(), n in 1u32..4) {
        let r = Region::ball(z2(), &[0, 0], n).unwrap();
        let bits = mask & ((1u64 << r.edge_count().min(63)) - 1);
        let cfg = MaskStates(bits);
        let lab = label_clusters(&r, &cfg, &r.all_vertices());
        let vs: Vec<common::C> = (0..r.vertex_count()).map(|v| (r.coord(v)[0], r.coord(v)[1])).collect();
        let comps = common::components(&vs, &coord_edges(&r), &|e| e < 63 && bits >> e & 1 == 1);
        prop_assert_eq!(lab.cluster_count, comps.len());
        for c in &comps {
            let ids: Vec<usize> = c.iter().map(|&(x, y)| r.index_of(&[x, y]).unwrap()).collect();
            for w in ids.windows(2) {
                prop_assert!(lab.same_cluster(w[0], w[1]));
            }
        }
    }

    #[test]
    fn connection_is_monotone(seed in any::<u64>(), p in 0.05f64..0.9) {
        let r = Region::ball(z2(), &[0, 0], 5).unwrap();
        let x = r.set_of([[0, 0].as_slice()]).unwrap();
        let s = metric_sets(&r, &[0, 0], 5, 5, Metric::Ambient).unwrap().shell_n;
        let low = sample_configuration(&r, p, seed, 0).unwrap();
        let high = sample_configuration(&r, p + 0.1, seed, 0).unwrap();
        prop_assert!(low.bits().iter().zip(high.bits()).all(|(a, b)| !a || *b));
        if connected_in(&r, &low, &x, &s, &r.all_vertices()) {
            prop_assert!(connected_in(&r, &high, &x, &s, &r.all_vertices()));
        }
    }
}
