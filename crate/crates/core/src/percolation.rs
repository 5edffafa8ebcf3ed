//! Bernoulli bond configurations and connectivity inside vertex subsets.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, input, Result};
use crate::lattice::{Region, RegionDescriptor, NONE};
use crate::rng::{bernoulli_at, stream_key};
use crate::vertex_set::VertexSet;

/// Read access to edge states. Implemented by stored, lazily drawn and
/// enumerated configurations so every event is evaluated by one code path.
pub trait EdgeStates {
    fn is_open(&self, e: usize) -> bool;
}

impl<T: EdgeStates + ?Sized> EdgeStates for &T {
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        (**self).is_open(e)
    }
}

/// One stored sample `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub p: f64,
    pub seed: u64,
    pub sample_index: u64,
    open: Vec<bool>,
}

impl EdgeStates for Configuration {
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        self.open[e]
    }
}

impl Configuration {
    pub fn from_bits(open: Vec<bool>) -> Self {
        Self {
            p: f64::NAN,
            seed: 0,
            sample_index: 0,
            open,
        }
    }

    pub fn all(edges: usize, open: bool) -> Self {
        Self::from_bits(vec![open; edges])
    }

    pub fn from_open_edges(edges: usize, open: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::all(edges, false);
        for e in open {
            c.open[e] = true;
        }
        c
    }

    /// Copy any edge-state source into stored form.
    pub fn capture(edges: usize, states: &impl EdgeStates) -> Self {
        Self::from_bits((0..edges).map(|e| states.is_open(e)).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.open
    }

    pub fn edge_count(&self) -> usize {
        self.open.len()
    }

    pub fn set(&mut self, e: usize, open: bool) {
        self.open[e] = open;
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&b| b).count()
    }

    /// Edges whose state differs.
    pub fn diff(&self, other: &Self) -> Vec<usize> {
        self.open
            .iter()
            .zip(&other.open)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(e, _)| e)
            .collect()
    }

    /// Text export: a `#` header with provenance, then `edge_index open_bit` lines.
    pub fn to_text(&self, region: &RegionDescriptor) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "# region {}", serde_json::to_string(region)?).unwrap();
        writeln!(s, "# p {}", self.p).unwrap();
        writeln!(s, "# seed {}", self.seed).unwrap();
        writeln!(s, "# sample_index {}", self.sample_index).unwrap();
        for (e, &b) in self.open.iter().enumerate() {
            writeln!(s, "{e} {}", b as u8).unwrap();
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<(RegionDescriptor, Self)> {
        let mut region = None;
        let mut cfg = Self::from_bits(Vec::new());
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# ") {
                let (key, val) = h.split_once(' ').unwrap_or((h, ""));
                match key {
                    "region" => region = Some(serde_json::from_str(val)?),
                    "p" => cfg.p = val.parse().map_err(|_| crate::Error::Input(format!("bad p {val}")))?,
                    "seed" => cfg.seed = val.parse().map_err(|_| crate::Error::Input(format!("bad seed {val}")))?,
                    "sample_index" => {
                        cfg.sample_index = val
                            .parse()
                            .map_err(|_| crate::Error::Input(format!("bad index {val}")))?
                    }
                    _ => {}
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(e), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return input(format!("bad configuration line {line:?}"));
            };
            let e: usize = e.parse().map_err(|_| crate::Error::Input(format!("bad edge {e}")))?;
            if e != cfg.open.len() {
                return input("configuration lines out of order");
            }
            cfg.open.push(match b {
                "0" => false,
                "1" => true,
                _ => return input(format!("bad bit {b}")),
            });
        }
        let region = region.ok_or_else(|| crate::Error::Input("missing region header".into()))?;
        Ok((region, cfg))
    }
}

/// Edge states drawn on demand from `stream(seed, sample_index)`. Bit-identical
/// to [`sample_configuration`] for the same arguments.
#[derive(Debug, Clone, Copy)]
pub struct LazyConfiguration {
    key: u64,
    p: f64,
}

impl LazyConfiguration {
    pub fn new(p: f64, seed: u64, sample_index: u64) -> Self {
        Self {
            key: stream_key(seed, sample_index),
            p,
        }
    }
}

impl EdgeStates for LazyConfiguration {
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        bernoulli_at(self.key, e as u64, self.p)
    }
}

/// Configuration encoded as a bitmask (edge `e` open iff bit `e` set).
#[derive(Debug, Clone, Copy)]
pub struct MaskStates(pub u64);

impl EdgeStates for MaskStates {
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        self.0 >> e & 1 == 1
    }
}

pub fn sample_configuration(region: &Region, p: f64, seed: u64, sample_index: u64) -> Result<Configuration> {
    check_probability(p)?;
    let lazy = LazyConfiguration::new(p, seed, sample_index);
    let mut c = Configuration::capture(region.edge_count(), &lazy);
    c.p = p;
    c.seed = seed;
    c.sample_index = sample_index;
    Ok(c)
}

/// Disjoint sets with union by size and path compression.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.parent.clear();
        self.parent.extend(0..n as u32);
        self.size.clear();
        self.size.resize(n, 1);
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        while self.parent[x] as usize != root {
            let next = self.parent[x] as usize;
            self.parent[x] = root as u32;
            x = next;
        }
        root
    }

    /// Returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Open clusters of the subgraph induced by `Z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    /// Cluster id per vertex: smallest member index, or [`NONE`] outside `Z`.
    pub labels: Vec<u32>,
    pub cluster_count: usize,
    /// `(cluster id, vertex count)` sorted by id.
    pub sizes: Vec<(u32, usize)>,
}

impl ClusterLabeling {
    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.labels[a] != NONE && self.labels[a] == self.labels[b]
    }
}

pub fn label_clusters(region: &Region, config: &impl EdgeStates, z: &VertexSet) -> ClusterLabeling {
    let n = region.vertex_count();
    let mut uf = UnionFind::new(n);
    for (e, &(a, b)) in region.edges().iter().enumerate() {
        let (a, b) = (a as usize, b as usize);
        if z.contains(a) && z.contains(b) && config.is_open(e) {
            uf.union(a, b);
        }
    }
    let mut root_label = vec![NONE; n];
    let mut labels = vec![NONE; n];
    let mut counts: Vec<usize> = vec![0; n];
    for v in z.iter() {
        let r = uf.find(v);
        if root_label[r] == NONE {
            // Vertices are visited in increasing order, so this is the smallest member.
            root_label[r] = v as u32;
        }
        labels[v] = root_label[r];
        counts[root_label[r] as usize] += 1;
    }
    let sizes: Vec<(u32, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i as u32, c))
        .collect();
    ClusterLabeling {
        labels,
        cluster_count: sizes.len(),
        sizes,
    }
}

/// Reusable breadth-first search state with generation stamps, so repeated
/// queries on a large region do not clear buffers.
#[derive(Debug, Default, Clone)]
pub struct Explorer {
    stamp: Vec<u32>,
    gen: u32,
    queue: VecDeque<u32>,
    pub parent: Vec<u32>,
}

impl Explorer {
    pub fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            gen: 0,
            queue: VecDeque::new(),
            parent: Vec::new(),
        }
    }

    /// Starts a new visitation generation; [`Explorer::extend`] calls share it.
    pub fn begin(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.gen = self.gen.wrapping_add(1);
        if self.gen == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.gen = 1;
        }
        self.queue.clear();
    }

    #[inline]
    pub fn visited(&self, v: usize) -> bool {
        self.stamp[v] == self.gen
    }

    /// Breadth-first search over open edges from `sources`, staying inside
    /// `allowed`. `visit` sees each reached vertex once (sources included);
    /// returning `true` stops the search, and `search` then returns `true`.
    pub fn search(
        &mut self,
        region: &Region,
        states: &impl EdgeStates,
        sources: impl IntoIterator<Item = usize>,
        allowed: impl Fn(usize) -> bool,
        visit: impl FnMut(usize) -> bool,
    ) -> bool {
        self.begin(region.vertex_count());
        self.extend(region, states, sources, allowed, visit)
    }

    /// Continues the current generation: vertices visited by earlier calls
    /// since [`Explorer::begin`] are neither revisited nor re-reported.
    pub fn extend(
        &mut self,
        region: &Region,
        states: &impl EdgeStates,
        sources: impl IntoIterator<Item = usize>,
        allowed: impl Fn(usize) -> bool,
        mut visit: impl FnMut(usize) -> bool,
    ) -> bool {
        self.queue.clear();
        for s in sources {
            if !allowed(s) || self.stamp[s] == self.gen {
                continue;
            }
            self.stamp[s] = self.gen;
            if visit(s) {
                return true;
            }
            self.queue.push_back(s as u32);
        }
        while let Some(x) = self.queue.pop_front() {
            for &(y, e) in region.neighbors(x as usize) {
                let y = y as usize;
                if self.stamp[y] == self.gen || !allowed(y) || !states.is_open(e as usize) {
                    continue;
                }
                self.stamp[y] = self.gen;
                if visit(y) {
                    return true;
                }
                self.queue.push_back(y as u32);
            }
        }
        false
    }

    /// Like [`Explorer::search`] but records BFS parents for path recovery.
    pub fn search_with_parents(
        &mut self,
        region: &Region,
        states: &impl EdgeStates,
        sources: impl IntoIterator<Item = usize>,
        allowed: impl Fn(usize) -> bool,
    ) {
        let n = region.vertex_count();
        self.parent.clear();
        self.parent.resize(n, NONE);
        self.begin(n);
        for s in sources {
            if !allowed(s) || self.stamp[s] == self.gen {
                continue;
            }
            self.stamp[s] = self.gen;
            self.parent[s] = s as u32;
            self.queue.push_back(s as u32);
        }
        while let Some(x) = self.queue.pop_front() {
            for &(y, e) in region.neighbors(x as usize) {
                let y = y as usize;
                if self.stamp[y] == self.gen || !allowed(y) || !states.is_open(e as usize) {
                    continue;
                }
                self.stamp[y] = self.gen;
                self.parent[y] = x;
                self.queue.push_back(y as u32);
            }
        }
    }

    /// Vertices from `v` back to its BFS source (inclusive).
    pub fn path_to_source(&self, mut v: usize) -> Vec<usize> {
        let mut out = vec![v];
        while self.parent[v] as usize != v {
            v = self.parent[v] as usize;
            out.push(v);
        }
        out
    }

    /// The set reached by a completed search.
    pub fn reached(&self, n: usize) -> VertexSet {
        VertexSet::from_indices(n, (0..n).filter(|&v| self.stamp[v] == self.gen))
    }
}

/// `X <-> Y in Z`: some `x` in `X∩Z` and `y` in `Y∩Z` are joined by an open
/// path with every vertex in `Z`. Inputs are intersected with `Z`.
pub fn connected_in(
    region: &Region,
    config: &impl EdgeStates,
    x: &VertexSet,
    y: &VertexSet,
    z: &VertexSet,
) -> bool {
    let mut ex = Explorer::new(region.vertex_count());
    connected_in_with(&mut ex, region, config, x, y, z)
}

pub fn connected_in_with(
    ex: &mut Explorer,
    region: &Region,
    config: &impl EdgeStates,
    x: &VertexSet,
    y: &VertexSet,
    z: &VertexSet,
) -> bool {
    ex.search(region, config, x.iter(), |v| z.contains(v), |v| y.contains(v))
}

/// Number of clusters of the annulus that meet both `inner` and `outer`.
pub fn crossing_cluster_count(
    region: &Region,
    config: &impl EdgeStates,
    annulus: &VertexSet,
    inner: &VertexSet,
    outer: &VertexSet,
) -> usize {
    let mut uf = UnionFind::new(region.vertex_count());
    crossing_cluster_count_with(&mut uf, region, config, annulus, inner, outer)
}

pub fn crossing_cluster_count_with(
    uf: &mut UnionFind,
    region: &Region,
    config: &impl EdgeStates,
    annulus: &VertexSet,
    inner: &VertexSet,
    outer: &VertexSet,
) -> usize {
    let n = region.vertex_count();
    uf.reset(n);
    for v in annulus.iter() {
        for &(w, e) in region.neighbors(v) {
            let w = w as usize;
            if w > v && annulus.contains(w) && config.is_open(e as usize) {
                uf.union(v, w);
            }
        }
    }
    let mut touches_inner = std::collections::HashSet::new();
    for v in inner.iter().filter(|&v| annulus.contains(v)) {
        touches_inner.insert(uf.find(v));
    }
    let mut crossing = std::collections::HashSet::new();
    for v in outer.iter().filter(|&v| annulus.contains(v)) {
        let r = uf.find(v);
        if touches_inner.contains(&r) {
            crossing.insert(r);
        }
    }
    crossing.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{metric_sets, LatticeSpec, Metric};
    use proptest::prelude::*;

    fn square() -> Region {
        Region::rectangle(LatticeSpec::hypercubic(2), &[0, 0], &[1, 1]).unwrap()
    }

    #[test]
    fn extremes() {
        let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 3).unwrap();
        assert_eq!(sample_configuration(&r, 0.0, 1, 2).unwrap().open_count(), 0);
        assert_eq!(sample_configuration(&r, 1.0, 1, 2).unwrap().open_count(), r.edge_count());
        assert!(sample_configuration(&r, 1.5, 1, 2).is_err());
        assert!(sample_configuration(&r, -0.1, 1, 2).is_err());
    }

    #[test]
    fn lazy_matches_stored() {
        let r = Region::ball(LatticeSpec::slab(3, 1), &[0, 0, 0], 4).unwrap();
        let c = sample_configuration(&r, 0.37, 99, 12).unwrap();
        let lazy = LazyConfiguration::new(0.37, 99, 12);
        for e in 0..r.edge_count() {
            assert_eq!(c.is_open(e), lazy.is_open(e));
        }
        assert_eq!(c, sample_configuration(&r, 0.37, 99, 12).unwrap());
    }

    #[test]
    fn open_fraction_is_binomial() {
        let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 2).unwrap();
        let samples = 100_000u64;
        let open: usize = (0..samples)
            .map(|i| sample_configuration(&r, 0.5, 2024, i).unwrap().open_count())
            .sum();
        let total = samples as f64 * 16.0;
        let sigma = (0.25 / total).sqrt();
        assert!((open as f64 / total - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn unit_square_labels() {
        let r = square();
        let a = r.require_index(&[0, 0]).unwrap();
        let b = r.require_index(&[1, 0]).unwrap();
        let e = r.edge_index(a, b).unwrap();
        let cfg = Configuration::from_open_edges(r.edge_count(), [e]);
        let lab = label_clusters(&r, &cfg, &r.all_vertices());
        assert_eq!(lab.cluster_count, 3);
        assert!(lab.same_cluster(a, b));
        let full = label_clusters(&r, &Configuration::all(4, true), &r.all_vertices());
        assert_eq!(full.cluster_count, 1);
        let none = label_clusters(&r, &Configuration::all(4, false), &r.all_vertices());
        assert_eq!(none.cluster_count, 4);
        let part = label_clusters(&r, &Configuration::all(4, true), &VertexSet::from_indices(4, [0, 3]));
        assert_eq!(part.labels[1], NONE);
        assert_eq!(part.cluster_count, 2);
    }

    #[test]
    fn corner_connection_and_shared_vertex() {
        let r = square();
        let x = r.set_of([&[0, 0][..]]).unwrap();
        let y = r.set_of([&[1, 1][..]]).unwrap();
        let all = r.all_vertices();
        assert!(!connected_in(&r, &Configuration::all(4, false), &x, &y, &all));
        assert!(connected_in(&r, &Configuration::all(4, true), &x, &y, &all));
        assert!(connected_in(&r, &Configuration::all(4, false), &x, &x, &all));
        // x outside Z: false unless in Y∩Z.
        let z = r.set_of([&[1, 1][..], &[1, 0][..]]).unwrap();
        assert!(!connected_in(&r, &Configuration::all(4, true), &x, &y, &z));
    }

    #[test]
    fn crossing_counts() {
        let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 2).unwrap();
        let s = metric_sets(&r, &[0, 0], 1, 2, Metric::Ambient).unwrap();
        let count = |c: &Configuration| crossing_cluster_count(&r, c, &s.annulus, &s.shell_m, &s.shell_n);
        assert_eq!(count(&Configuration::all(r.edge_count(), true)), 1);
        assert_eq!(count(&Configuration::all(r.edge_count(), false)), 0);
        let ann_edges: Vec<usize> = (0..r.edge_count())
            .filter(|&e| {
                let (a, b) = r.edge(e);
                s.annulus.contains(a) && s.annulus.contains(b)
            })
            .collect();
        assert_eq!(ann_edges.len(), 12);
        for &e in &ann_edges {
            let c = Configuration::from_open_edges(r.edge_count(), [e]);
            assert_eq!(count(&c), 1);
        }
    }

    #[test]
    fn text_round_trip() {
        let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 2).unwrap();
        let c = sample_configuration(&r, 0.5, 7, 3).unwrap();
        let text = c.to_text(r.descriptor()).unwrap();
        assert!(text.starts_with("# region "));
        let (desc, back) = Configuration::from_text(&text).unwrap();
        assert_eq!(&desc, r.descriptor());
        assert_eq!(back, c);
    }

    fn brute_connected(r: &Region, c: &Configuration, x: usize, y: usize, z: &VertexSet) -> bool {
        label_clusters(r, c, z).same_cluster(x, y)
    }

    proptest! {
        #[test]
        fn opening_an_edge_preserves_connections(seed in any::<u64>(), p in 0.0f64..1.0, flip in 0usize..40) {
            let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 4).unwrap();
            let mut c = sample_configuration(&r, p, seed, 0).unwrap();
            let all = r.all_vertices();
            let queries: Vec<(usize, usize)> = (0..r.vertex_count()).step_by(5)
                .flat_map(|a| (0..r.vertex_count()).step_by(7).map(move |b| (a, b))).collect();
            let before: Vec<bool> = queries.iter().map(|&(a, b)| brute_connected(&r, &c, a, b, &all)).collect();
            c.set(flip % r.edge_count(), true);
            for (q, was) in queries.iter().zip(before) {
                if was {
                    prop_assert!(brute_connected(&r, &c, q.0, q.1, &all));
                }
            }
        }

        #[test]
        fn bfs_agrees_with_labels_and_restriction_is_monotone(seed in any::<u64>(), p in 0.2f64..0.8, a in 0usize..61, b in 0usize..61) {
            let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 5).unwrap();
            let c = sample_configuration(&r, p, seed, 1).unwrap();
            let dist = r.distances_from(&[0, 0], Metric::Ambient).unwrap();
            let z_small = r.distance_band(&dist, 0, 4);
            let z_big = r.all_vertices();
            let x = VertexSet::from_indices(r.vertex_count(), [a]);
            let y = VertexSet::from_indices(r.vertex_count(), [b]);
            for z in [&z_small, &z_big] {
                let lab = label_clusters(&r, &c, z);
                prop_assert_eq!(connected_in(&r, &c, &x, &y, z), lab.same_cluster(a, b));
            }
            if connected_in(&r, &c, &x, &y, &z_small) {
                prop_assert!(connected_in(&r, &c, &x, &y, &z_big));
            }
        }
    }
}
