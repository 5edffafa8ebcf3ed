//! Finite regions of hypercubic lattices and slabs.
//!
//! A [`Region`] is an induced subgraph with deterministic vertex order
//! (lexicographic on coordinates) and edge order (sorted endpoint pairs).
//! Graph-metric balls, spheres and annuli live here, as do the slab boxes
//! `Q(n) = [-n,n]^2 x {0..k}^(d-2)` with their boundaries and annuli.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::vertex_set::VertexSet;

pub type Coord = Vec<i32>;

/// Sentinel for "not reachable" / "not in region".
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    Hypercubic,
    /// `Z^2 x {0..k}^(d-2)`.
    Slab { k: u32 },
    /// Hand-written edge list; coordinates are `[label]`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    #[serde(flatten)]
    pub family: Family,
    pub d: usize,
}

impl LatticeSpec {
    pub fn hypercubic(d: usize) -> Self {
        Self {
            family: Family::Hypercubic,
            d,
        }
    }

    pub fn slab(d: usize, k: u32) -> Self {
        Self {
            family: Family::Slab { k },
            d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::Explicit => Ok(()),
            _ if self.d < 2 => input(format!("dimension {} < 2", self.d)),
            _ => Ok(()),
        }
    }

    pub fn is_slab(&self) -> bool {
        matches!(self.family, Family::Slab { .. })
    }

    pub fn thickness(&self) -> Option<u32> {
        match self.family {
            Family::Slab { k } => Some(k),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Hypercubic => "hypercubic",
            Family::Slab { .. } => "slab",
            Family::Explicit => "explicit",
        }
    }

    /// Maximum vertex degree of the infinite graph.
    pub fn degree_bound(&self) -> usize {
        match self.family {
            Family::Hypercubic => 2 * self.d,
            Family::Slab { k } => 4 + (self.d - 2) * if k == 0 { 0 } else { 2 },
            Family::Explicit => usize::MAX,
        }
    }

    /// Whether `c` is a vertex of the infinite graph.
    pub fn contains(&self, c: &[i32]) -> bool {
        if c.len() != self.d {
            return false;
        }
        match self.family {
            Family::Hypercubic | Family::Explicit => true,
            Family::Slab { k } => c[2..].iter().all(|&x| x >= 0 && x <= k as i32),
        }
    }

    pub fn check_coord(&self, c: &[i32]) -> Result<()> {
        if self.family == Family::Explicit {
            return input("explicit graphs have no ambient lattice");
        }
        if !self.contains(c) {
            return input(format!("coordinate {c:?} is not a vertex of {self:?}"));
        }
        Ok(())
    }

    /// Lattice neighbours in a fixed order: axis 0 (-1, +1), axis 1, ...
    pub fn neighbors(&self, c: &[i32]) -> Vec<Coord> {
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            for delta in [-1, 1] {
                let mut n = c.to_vec();
                n[axis] += delta;
                if self.contains(&n) {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Ambient graph distance. Both families are products of paths, so this is L1.
    pub fn distance(&self, a: &[i32], b: &[i32]) -> u32 {
        a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
    }
}

/// In-plane sup norm `max(|z1|, |z2|)`, the norm behind `Q(n)`.
pub fn plane_linf(c: &[i32]) -> u32 {
    c[0].unsigned_abs().max(c[1].unsigned_abs())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "construction")]
pub enum Construction {
    Ball { center: Coord, radius: u32 },
    Box { n: u32 },
    Rectangle { lo: Coord, hi: Coord },
    Explicit { vertices: usize },
    Restriction { parent: Box<RegionDescriptor>, size: usize },
}

/// Structured-text description of how a region was built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub spec: LatticeSpec,
    #[serde(flatten)]
    pub construction: Construction,
}

#[derive(Debug, Clone)]
struct DenseIndex {
    lo: Vec<i32>,
    extent: Vec<usize>,
    slots: Vec<u32>,
}

impl DenseIndex {
    fn build(d: usize, coords: &[i32], n: usize) -> Self {
        if n == 0 {
            return Self {
                lo: vec![0; d],
                extent: vec![0; d],
                slots: Vec::new(),
            };
        }
        let mut lo = vec![i32::MAX; d];
        let mut hi = vec![i32::MIN; d];
        for v in 0..n {
            for a in 0..d {
                let x = coords[v * d + a];
                lo[a] = lo[a].min(x);
                hi[a] = hi[a].max(x);
            }
        }
        let extent: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
        let total = extent.iter().product();
        let mut idx = Self {
            lo,
            extent,
            slots: vec![NONE; total],
        };
        for v in 0..n {
            let slot = idx.slot(&coords[v * d..(v + 1) * d]).expect("in box");
            idx.slots[slot] = v as u32;
        }
        idx
    }

    #[inline]
    fn slot(&self, c: &[i32]) -> Option<usize> {
        let mut s = 0usize;
        for (a, &x) in c.iter().enumerate() {
            let off = x - self.lo[a];
            if off < 0 || off as usize >= self.extent[a] {
                return None;
            }
            s = s * self.extent[a] + off as usize;
        }
        Some(s)
    }

    fn get(&self, c: &[i32]) -> Option<usize> {
        if c.len() != self.lo.len() {
            return None;
        }
        self.slot(c)
            .map(|s| self.slots[s])
            .filter(|&v| v != NONE)
            .map(|v| v as usize)
    }
}

/// Immutable induced subgraph with stable indexing.
#[derive(Debug, Clone)]
pub struct Region {
    spec: LatticeSpec,
    dim: usize,
    coords: Vec<i32>,
    index: DenseIndex,
    edges: Vec<(u32, u32)>,
    adj_start: Vec<u32>,
    adj: Vec<(u32, u32)>,
    descriptor: RegionDescriptor,
}

impl Region {
    /// Induced subgraph of the lattice on an arbitrary finite vertex set.
    pub fn from_vertices(
        spec: LatticeSpec,
        vertices: impl IntoIterator<Item = Coord>,
        construction: Construction,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.family == Family::Explicit {
            return input("use Region::explicit for edge-list graphs");
        }
        let set: BTreeSet<Coord> = vertices.into_iter().collect();
        for c in &set {
            spec.check_coord(c)?;
        }
        let d = spec.d;
        let n = set.len();
        let coords: Vec<i32> = set.into_iter().flatten().collect();
        let index = DenseIndex::build(d, &coords, n);
        let mut edges = Vec::new();
        for v in 0..n {
            let c = &coords[v * d..(v + 1) * d];
            for nb in spec.neighbors(c) {
                if let Some(u) = index.get(&nb) {
                    if u > v {
                        edges.push((v as u32, u as u32));
                    }
                }
            }
        }
        Ok(Self::assemble(
            spec,
            d,
            coords,
            index,
            edges,
            RegionDescriptor { spec, construction },
        ))
    }

    /// Graph given by an explicit edge list on vertices `0..n`.
    pub fn explicit(n: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for &(a, b) in edge_list {
            if a >= n || b >= n || a == b {
                return input(format!("bad edge ({a},{b}) for {n} vertices"));
            }
            edges.insert((a.min(b) as u32, a.max(b) as u32));
        }
        let spec = LatticeSpec {
            family: Family::Explicit,
            d: 1,
        };
        let coords: Vec<i32> = (0..n as i32).collect();
        let index = DenseIndex::build(1, &coords, n);
        Ok(Self::assemble(
            spec,
            1,
            coords,
            index,
            edges.into_iter().collect(),
            RegionDescriptor {
                spec,
                construction: Construction::Explicit { vertices: n },
            },
        ))
    }

    fn assemble(
        spec: LatticeSpec,
        dim: usize,
        coords: Vec<i32>,
        index: DenseIndex,
        mut edges: Vec<(u32, u32)>,
        descriptor: RegionDescriptor,
    ) -> Self {
        edges.sort_unstable();
        let n = coords.len() / dim.max(1);
        let mut deg = vec![0u32; n + 1];
        for &(a, b) in &edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut adj_start = vec![0u32; n + 1];
        for v in 0..n {
            adj_start[v + 1] = adj_start[v] + deg[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0u32, 0u32); 2 * edges.len()];
        // Edge order is sorted, so each adjacency list ends up in edge-index order.
        for (e, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a as usize] as usize] = (b, e as u32);
            fill[a as usize] += 1;
            adj[fill[b as usize] as usize] = (a, e as u32);
            fill[b as usize] += 1;
        }
        Self {
            spec,
            dim,
            coords,
            index,
            edges,
            adj_start,
            adj,
            descriptor,
        }
    }

    /// Graph-metric ball `B(v,n)` of the ambient lattice.
    pub fn ball(spec: LatticeSpec, center: &[i32], radius: u32) -> Result<Self> {
        spec.validate()?;
        spec.check_coord(center)?;
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(center.to_vec());
        queue.push_back((center.to_vec(), 0u32));
        while let Some((c, dist)) = queue.pop_front() {
            if dist == radius {
                continue;
            }
            for nb in spec.neighbors(&c) {
                if seen.insert(nb.clone()) {
                    queue.push_back((nb, dist + 1));
                }
            }
        }
        Self::from_vertices(
            spec,
            seen,
            Construction::Ball {
                center: center.to_vec(),
                radius,
            },
        )
    }

    /// Axis-aligned box `lo <= x <= hi` (inclusive). Slab layer bounds are clipped.
    pub fn rectangle(spec: LatticeSpec, lo: &[i32], hi: &[i32]) -> Result<Self> {
        spec.validate()?;
        if lo.len() != spec.d || hi.len() != spec.d || lo.iter().zip(hi).any(|(a, b)| a > b) {
            return input(format!("bad rectangle bounds {lo:?}..{hi:?}"));
        }
        let mut out = Vec::new();
        let mut cur = lo.to_vec();
        loop {
            if spec.contains(&cur) {
                out.push(cur.clone());
            }
            let mut axis = spec.d;
            loop {
                if axis == 0 {
                    return Self::from_vertices(
                        spec,
                        out,
                        Construction::Rectangle {
                            lo: lo.to_vec(),
                            hi: hi.to_vec(),
                        },
                    );
                }
                axis -= 1;
                if cur[axis] < hi[axis] {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = lo[axis];
            }
        }
    }

    /// Slab box `Q(n)`.
    pub fn slab_box(spec: LatticeSpec, n: u32) -> Result<Self> {
        let Some(k) = spec.thickness() else {
            return input("slab boxes need a slab spec");
        };
        let n = n as i32;
        let mut lo = vec![-n, -n];
        let mut hi = vec![n, n];
        lo.extend(std::iter::repeat(0).take(spec.d - 2));
        hi.extend(std::iter::repeat(k as i32).take(spec.d - 2));
        let mut r = Self::rectangle(spec, &lo, &hi)?;
        r.descriptor.construction = Construction::Box { n: n as u32 };
        Ok(r)
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &RegionDescriptor {
        &self.descriptor
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn coord(&self, v: usize) -> &[i32] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn index_of(&self, c: &[i32]) -> Option<usize> {
        self.index.get(c)
    }

    pub fn require_index(&self, c: &[i32]) -> Result<usize> {
        self.index_of(c)
            .ok_or_else(|| crate::Error::Input(format!("vertex {c:?} not in region")))
    }

    #[inline]
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let (a, b) = self.edges[e];
        (a as usize, b as usize)
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b) as u32, a.max(b) as u32);
        self.edges.binary_search(&key).ok()
    }

    /// `(neighbour, edge index)` pairs, in edge-index order.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[self.adj_start[v] as usize..self.adj_start[v + 1] as usize]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    pub fn all_vertices(&self) -> VertexSet {
        VertexSet::full(self.vertex_count())
    }

    pub fn empty_set(&self) -> VertexSet {
        VertexSet::empty(self.vertex_count())
    }

    pub fn set_of<'a>(&self, coords: impl IntoIterator<Item = &'a [i32]>) -> Result<VertexSet> {
        let mut s = self.empty_set();
        for c in coords {
            s.insert(self.require_index(c)?);
        }
        Ok(s)
    }

    pub fn set_where(&self, pred: impl Fn(&[i32]) -> bool) -> VertexSet {
        VertexSet::from_indices(
            self.vertex_count(),
            (0..self.vertex_count()).filter(|&v| pred(self.coord(v))),
        )
    }

    /// Induced subgraph on `z`, keeping coordinate labels.
    pub fn induced_restriction(&self, z: &VertexSet) -> Result<Region> {
        if z.universe() != self.vertex_count() {
            return input("vertex set belongs to a different region");
        }
        let construction = Construction::Restriction {
            parent: Box::new(self.descriptor.clone()),
            size: z.count(),
        };
        if self.spec.family == Family::Explicit {
            let keep: Vec<usize> = z.iter().collect();
            let coords: Vec<i32> = keep.iter().map(|&v| self.coords[v]).collect();
            let index = DenseIndex::build(1, &coords, keep.len());
            let mut relabel = vec![NONE; self.vertex_count()];
            for (i, &v) in keep.iter().enumerate() {
                relabel[v] = i as u32;
            }
            let edges = self
                .edges
                .iter()
                .filter(|(a, b)| relabel[*a as usize] != NONE && relabel[*b as usize] != NONE)
                .map(|(a, b)| (relabel[*a as usize], relabel[*b as usize]))
                .collect();
            return Ok(Self::assemble(
                self.spec,
                1,
                coords,
                index,
                edges,
                RegionDescriptor {
                    spec: self.spec,
                    construction,
                },
            ));
        }
        Self::from_vertices(
            self.spec,
            z.iter().map(|v| self.coord(v).to_vec()),
            construction,
        )
    }

    /// Distances from `v` to every region vertex.
    pub fn distances_from(&self, v: &[i32], metric: Metric) -> Result<Vec<u32>> {
        match (metric, self.spec.family) {
            (Metric::Ambient, Family::Hypercubic | Family::Slab { .. }) => {
                self.spec.check_coord(v)?;
                Ok((0..self.vertex_count())
                    .map(|u| self.spec.distance(v, self.coord(u)))
                    .collect())
            }
            _ => {
                let s = self.require_index(v)?;
                Ok(self.bfs_distances(s))
            }
        }
    }

    fn bfs_distances(&self, s: usize) -> Vec<u32> {
        let mut dist = vec![NONE; self.vertex_count()];
        let mut q = VecDeque::new();
        dist[s] = 0;
        q.push_back(s);
        while let Some(x) = q.pop_front() {
            for &(y, _) in self.neighbors(x) {
                if dist[y as usize] == NONE {
                    dist[y as usize] = dist[x] + 1;
                    q.push_back(y as usize);
                }
            }
        }
        dist
    }

    /// `{x : dist(x) in [lo, hi]}` for a precomputed distance vector.
    pub fn distance_band(&self, dist: &[u32], lo: u32, hi: u32) -> VertexSet {
        VertexSet::from_indices(
            self.vertex_count(),
            (0..self.vertex_count()).filter(|&u| dist[u] != NONE && dist[u] >= lo && dist[u] <= hi),
        )
    }

    /// Vertices with in-plane sup norm in `[lo, hi]` (slab boxes).
    pub fn plane_band(&self, lo: u32, hi: u32) -> VertexSet {
        self.set_where(|c| {
            let r = plane_linf(c);
            r >= lo && r <= hi
        })
    }
}

/// Which graph metric defines balls and shells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Metric of the infinite lattice, intersected with the region.
    #[default]
    Ambient,
    /// Metric of the region's own induced graph.
    Restricted,
}

/// `B(v,n)`, `S(v,m)`, `S(v,n)`, `A(v,m,n)` inside a region.
#[derive(Debug, Clone)]
pub struct MetricSets {
    pub ball_n: VertexSet,
    pub shell_m: VertexSet,
    pub shell_n: VertexSet,
    pub annulus: VertexSet,
}

pub fn metric_sets(region: &Region, v: &[i32], m: u32, n: u32, metric: Metric) -> Result<MetricSets> {
    if m > n {
        return input(format!("annulus radii inverted: m={m} > n={n}"));
    }
    let dist = region.distances_from(v, metric)?;
    Ok(MetricSets {
        ball_n: region.distance_band(&dist, 0, n),
        shell_m: region.distance_band(&dist, m, m),
        shell_n: region.distance_band(&dist, n, n),
        // B(v, m-1) is empty when m = 0.
        annulus: region.distance_band(&dist, m, n),
    })
}

/// `Q(n)` as a region together with `dQ(n)` and `An(m,n)` inside it.
pub fn build_slab_box_sets(spec: LatticeSpec, m: u32, n: u32) -> Result<(Region, VertexSet, VertexSet)> {
    if !spec.is_slab() {
        return input("slab box sets need a slab spec");
    }
    if m < 1 || m > n {
        return input(format!("need 1 <= m <= n, got m={m}, n={n}"));
    }
    let q = Region::slab_box(spec, n)?;
    let boundary = q.plane_band(n, n);
    let annulus = q.plane_band(m, n);
    Ok((q, boundary, annulus))
}

/// The column set `W-bar`: every vertex sharing in-plane coordinates with some `w` in `W`.
pub fn column_projection(region: &Region, w: &VertexSet) -> Result<VertexSet> {
    if !region.spec().is_slab() {
        return input("column projection needs a slab region");
    }
    let planes: BTreeSet<(i32, i32)> = w
        .iter()
        .map(|v| {
            let c = region.coord(v);
            (c[0], c[1])
        })
        .collect();
    Ok(region.set_where(|c| planes.contains(&(c[0], c[1]))))
}

/// Vertices of the column through vertex `v`.
pub fn column_of(region: &Region, v: usize) -> Vec<usize> {
    let c = region.coord(v);
    let (a, b) = (c[0], c[1]);
    (0..region.vertex_count())
        .filter(|&u| {
            let cu = region.coord(u);
            cu[0] == a && cu[1] == b
        })
        .collect()
}
