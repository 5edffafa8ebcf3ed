mod common;

use perc_core::lattice::{build_slab_box_sets, column_projection, metric_sets, Metric};
use perc_core::{LatticeSpec, Region};
use proptest::prelude::*;

fn z2() -> LatticeSpec {
    LatticeSpec::hypercubic(2)
}

#[test]
fn planar_balls_match_brute_force() {
    for n in 0..=5 {
        let r = Region::ball(z2(), &[0, 0], n).unwrap();
        let (vs, es) = common::diamond(n as i32);
        assert_eq!((r.vertex_count(), r.edge_count()), (vs.len(), es.len()), "n={n}");
    }
    let r1 = Region::ball(z2(), &[0, 0], 1).unwrap();
    assert_eq!((r1.vertex_count(), r1.edge_count()), (5, 4));
    let r2 = Region::ball(z2(), &[0, 0], 2).unwrap();
    assert_eq!((r2.vertex_count(), r2.edge_count()), (13, 16));
}

#[test]
fn slab_ball_and_zero_radius() {
    let s = LatticeSpec::slab(3, 1);
    let r = Region::ball(s, &[0, 0, 0], 1).unwrap();
    assert_eq!(r.vertex_count(), 6);
    let sets = metric_sets(&r, &[0, 0, 0], 1, 1, Metric::Ambient).unwrap();
    assert_eq!(sets.shell_n.count(), 5);
    for spec in [z2(), LatticeSpec::hypercubic(3), s] {
        let origin = vec![0; spec.d];
        let r = Region::ball(spec, &origin, 0).unwrap();
        assert_eq!((r.vertex_count(), r.edge_count()), (1, 0));
    }
}

#[test]
fn diamond_annulus_sets() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let s = metric_sets(&r, &[0, 0], 1, 2, Metric::Ambient).unwrap();
    assert_eq!((s.shell_m.count(), s.shell_n.count(), s.annulus.count()), (4, 8, 12));
    let same = metric_sets(&r, &[0, 0], 2, 2, Metric::Ambient).unwrap();
    assert_eq!(same.annulus, same.shell_m);
    assert_eq!(same.annulus, same.shell_n);
    let full = metric_sets(&r, &[0, 0], 0, 2, Metric::Ambient).unwrap();
    assert_eq!(full.annulus, full.ball_n);
    assert!(metric_sets(&r, &[0, 0], 2, 1, Metric::Ambient).is_err());
}

#[test]
fn slab_boxes() {
    let (q, boundary, _) = build_slab_box_sets(LatticeSpec::slab(3, 1), 1, 1).unwrap();
    assert_eq!((q.vertex_count(), boundary.count()), (18, 16));
    let q2 = Region::slab_box(LatticeSpec::slab(2, 0), 2).unwrap();
    assert_eq!(q2.vertex_count(), 25);
    let (q3, b3, a3) = build_slab_box_sets(LatticeSpec::slab(3, 2), 3, 3).unwrap();
    assert_eq!(a3, b3);
    // (7^2 - 5^2) in-plane sites times 3 layers.
    assert_eq!(b3.count(), 24 * 3);
    assert_eq!(q3.vertex_count(), 49 * 3);
    assert!(build_slab_box_sets(z2(), 1, 2).is_err());
}

#[test]
fn columns() {
    let q = Region::slab_box(LatticeSpec::slab(3, 1), 3).unwrap();
    let w = q.set_of([[2, 3, 0].as_slice()]).unwrap();
    let col = column_projection(&q, &w).unwrap();
    let coords: Vec<Vec<i32>> = col.iter().map(|v| q.coord(v).to_vec()).collect();
    assert_eq!(coords.len(), 2);
    assert!(coords.contains(&vec![2, 3, 0]) && coords.contains(&vec![2, 3, 1]));
    assert!(column_projection(&q, &q.empty_set()).unwrap().is_empty());
    assert_eq!(column_projection(&q, &col).unwrap(), col);
}

#[test]
fn induced_restrictions() {
    let r = Region::ball(z2(), &[0, 0], 2).unwrap();
    let all = r.induced_restriction(&r.all_vertices()).unwrap();
    assert_eq!((all.vertex_count(), all.edge_count()), (13, 16));
    let empty = r.induced_restriction(&r.empty_set()).unwrap();
    assert_eq!((empty.vertex_count(), empty.edge_count()), (0, 0));
    let ann = metric_sets(&r, &[0, 0], 1, 2, Metric::Ambient).unwrap().annulus;
    let a = r.induced_restriction(&ann).unwrap();
    let (vs, _) = common::diamond(2);
    let ring: Vec<common::C> = vs.into_iter().filter(|&c| common::l1(c) >= 1).collect();
    assert_eq!((a.vertex_count(), a.edge_count()), (12, common::edges_within(&ring).len()));
    assert_eq!(a.edge_count(), 12);
}

#[test]
fn invalid_inputs() {
    assert!(Region::ball(LatticeSpec::hypercubic(1), &[0], 2).is_err());
    assert!(Region::ball(LatticeSpec::slab(3, 1), &[0, 0, 2], 1).is_err());
    assert!(Region::ball(z2(), &[0, 0, 0], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ball_edges_join_neighbours(n in 0u32..5, cx in -3i32..3, cy in -3i32..3) {
        let r = Region::ball(z2(), &[cx, cy], n).unwrap();
        for &(a, b) in r.edges() {
            let (a, b) = (r.coord(a as usize), r.coord(b as usize));
            prop_assert_eq!((a[0] - b[0]).abs() + (a[1] - b[1]).abs(), 1);
        }
        for v in 0..r.vertex_count() {
            let c = r.coord(v);
            prop_assert!(((c[0] - cx).abs() + (c[1] - cy).abs()) as u32 <= n);
            prop_assert_eq!(r.index_of(c), Some(v));
        }
    }

    #[test]
    fn shells_partition_the_ball(n in 1u32..6, d in 2usize..4) {
        let spec = LatticeSpec::hypercubic(d);
        let origin = vec![0; d];
        let r = Region::ball(spec, &origin, n).unwrap();
        let dist = r.distances_from(&origin, Metric::Ambient).unwrap();
        let total: usize = (0..=n).map(|k| r.distance_band(&dist, k, k).count()).sum();
        prop_assert_eq!(total, r.vertex_count());
    }
}
