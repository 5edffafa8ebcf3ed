//! Brute-force reference computations, independent of the library: explicit
//! coordinate graphs, depth-first search and full enumeration.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

pub type C = (i32, i32);

/// Vertices and nearest-neighbour edges of `{|x|+|y| <= n}` in the plane.
pub fn diamond(n: i32) -> (Vec<C>, Vec<(C, C)>) {
    let mut vs = Vec::new();
    for x in -n..=n {
        for y in -n..=n {
            if x.abs() + y.abs() <= n {
                vs.push((x, y));
            }
        }
    }
    (vs.clone(), edges_within(&vs))
}

pub fn edges_within(vs: &[C]) -> Vec<(C, C)> {
    let set: BTreeSet<C> = vs.iter().copied().collect();
    let mut es = Vec::new();
    for &(x, y) in vs {
        for nb in [(x + 1, y), (x, y + 1)] {
            if set.contains(&nb) {
                es.push(((x, y), nb));
            }
        }
    }
    es
}

pub fn l1(c: C) -> i32 {
    c.0.abs() + c.1.abs()
}

/// Components of the open subgraph on `vs` (edges with both ends in `vs`).
pub fn components(vs: &[C], es: &[(C, C)], open: &dyn Fn(usize) -> bool) -> Vec<BTreeSet<C>> {
    let idx: HashMap<C, usize> = vs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut adj = vec![Vec::new(); vs.len()];
    for (e, (a, b)) in es.iter().enumerate() {
        if let (Some(&i), Some(&j)) = (idx.get(a), idx.get(b)) {
            if open(e) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut seen = vec![false; vs.len()];
    let mut out = Vec::new();
    for s in 0..vs.len() {
        if seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            comp.insert(vs[v]);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// `P(p) = sum over all 2^|E| configurations` of the indicator, weighted.
pub fn enumerate_probability(edges: usize, p: f64, holds: &dyn Fn(u64) -> bool) -> f64 {
    (0u64..1 << edges)
        .filter(|&mask| holds(mask))
        .map(|mask| {
            let k = mask.count_ones() as i32;
            p.powi(k) * (1.0 - p).powi(edges as i32 - k)
        })
        .sum()
}

/// Number of crossing clusters of the annulus `m <= |c|_1 <= n`.
pub fn crossing_count(es: &[(C, C)], mask: u64, m: i32, n: i32) -> usize {
    let (ball, _) = diamond(n);
    let ann: Vec<C> = ball.into_iter().filter(|&c| l1(c) >= m).collect();
    components(&ann, es, &|e| mask >> e & 1 == 1)
        .iter()
        .filter(|c| c.iter().any(|&v| l1(v) == m) && c.iter().any(|&v| l1(v) == n))
        .count()
}
