//! Named events: annulus crossings, unique crossing, cylinders and open
//! circuits around slab boxes.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::lattice::{metric_sets, plane_linf, Coord, Family, Metric, Region};
use crate::percolation::{crossing_cluster_count_with, EdgeStates, Explorer, UnionFind};
use crate::vertex_set::VertexSet;

/// Names a vertex set of a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum SetSpec {
    All,
    Vertices { coords: Vec<Coord> },
    /// `S(center, r)`.
    Shell { center: Coord, r: u32 },
    /// `B(center, r)`.
    Ball { center: Coord, r: u32 },
    /// `A(center, m, n)`.
    Annulus { center: Coord, m: u32, n: u32 },
    /// `Q(n)`: in-plane sup norm at most `n`.
    SlabBox { n: u32 },
    /// `dQ(n)`.
    SlabBoundary { n: u32 },
    /// `An(m, n)`.
    SlabAnnulus { m: u32, n: u32 },
}

pub(crate) fn metric_for(region: &Region) -> Metric {
    match region.spec().family {
        Family::Explicit => Metric::Restricted,
        _ => Metric::Ambient,
    }
}

impl SetSpec {
    pub fn resolve(&self, region: &Region) -> Result<VertexSet> {
        let band = |center: &Coord, lo: u32, hi: u32| -> Result<VertexSet> {
            if lo > hi {
                return input(format!("radii inverted: {lo} > {hi}"));
            }
            let dist = region.distances_from(center, metric_for(region))?;
            Ok(region.distance_band(&dist, lo, hi))
        };
        match self {
            SetSpec::All => Ok(region.all_vertices()),
            SetSpec::Vertices { coords } => region.set_of(coords.iter().map(|c| c.as_slice())),
            SetSpec::Shell { center, r } => band(center, *r, *r),
            SetSpec::Ball { center, r } => band(center, 0, *r),
            SetSpec::Annulus { center, m, n } => band(center, *m, *n),
            SetSpec::SlabBox { n } => Ok(region.plane_band(0, *n)),
            SetSpec::SlabBoundary { n } => Ok(region.plane_band(*n, *n)),
            SetSpec::SlabAnnulus { m, n } => {
                if m > n {
                    return input(format!("radii inverted: {m} > {n}"));
                }
                Ok(region.plane_band(*m, *n))
            }
        }
    }
}

/// Structured description of an event, as named on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    Sure,
    Impossible,
    /// `S(v,m) <-> S(v,n)` in `z` (default `A(v,m,n)`).
    E1 {
        center: Coord,
        m: u32,
        n: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<SetSpec>,
    },
    /// At least two crossing clusters of `A(v,m,n)`.
    E2 { center: Coord, m: u32, n: u32 },
    /// Exactly one crossing cluster of `A(v,m,n)`.
    F { center: Coord, m: u32, n: u32 },
    /// `x <-> y` in `z`.
    Connect { x: SetSpec, y: SetSpec, z: SetSpec },
    /// Listed edges in the required states (all open when `states` is absent).
    Cylinder {
        edges: Vec<(Coord, Coord)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        states: Option<Vec<bool>>,
    },
    /// The `2d` edges at `center` all open.
    Star { center: Coord },
    /// Open circuit around `Q(2m)` inside `An(2m,3m)`.
    Circuit { m: u32 },
    And { events: Vec<EventSpec> },
    Not { event: Box<EventSpec> },
}

impl EventSpec {
    pub fn e1(center: &[i32], m: u32, n: u32) -> Self {
        EventSpec::E1 {
            center: center.to_vec(),
            m,
            n,
            z: None,
        }
    }

    pub fn e2(center: &[i32], m: u32, n: u32) -> Self {
        EventSpec::E2 {
            center: center.to_vec(),
            m,
            n,
        }
    }

    pub fn unique(center: &[i32], m: u32, n: u32) -> Self {
        EventSpec::F {
            center: center.to_vec(),
            m,
            n,
        }
    }

    /// `{center <-> S(center, n)}`, the one-arm event.
    pub fn one_arm(center: &[i32], n: u32) -> Self {
        EventSpec::Connect {
            x: SetSpec::Vertices {
                coords: vec![center.to_vec()],
            },
            y: SetSpec::Shell {
                center: center.to_vec(),
                r: n,
            },
            z: SetSpec::Ball {
                center: center.to_vec(),
                r: n,
            },
        }
    }

    /// Short label for result rows.
    pub fn label(&self) -> String {
        match self {
            EventSpec::Sure => "sure".into(),
            EventSpec::Impossible => "impossible".into(),
            EventSpec::E1 { m, n, .. } => format!("E1({m},{n})"),
            EventSpec::E2 { m, n, .. } => format!("E2({m},{n})"),
            EventSpec::F { m, n, .. } => format!("F({m},{n})"),
            EventSpec::Connect { .. } => "connect".into(),
            EventSpec::Cylinder { edges, .. } => format!("cylinder({})", edges.len()),
            EventSpec::Star { .. } => "star".into(),
            EventSpec::Circuit { m } => format!("circuit({m})"),
            EventSpec::And { events } => {
                let parts: Vec<String> = events.iter().map(|e| e.label()).collect();
                format!("and({})", parts.join(";"))
            }
            EventSpec::Not { event } => format!("not({})", event.label()),
        }
    }

    pub fn compile<'r>(&self, region: &'r Region) -> Result<CompiledEvent<'r>> {
        Ok(CompiledEvent {
            region,
            kind: compile_kind(self, region)?,
        })
    }
}

fn annulus_sets(region: &Region, center: &[i32], m: u32, n: u32) -> Result<(VertexSet, VertexSet, VertexSet)> {
    let s = metric_sets(region, center, m, n, metric_for(region))?;
    Ok((s.annulus, s.shell_m, s.shell_n))
}

fn compile_kind(spec: &EventSpec, region: &Region) -> Result<Kind> {
    Ok(match spec {
        EventSpec::Sure => Kind::Sure,
        EventSpec::Impossible => Kind::Impossible,
        EventSpec::E1 { center, m, n, z } => {
            let (ann, inner, outer) = annulus_sets(region, center, *m, *n)?;
            let z = match z {
                Some(z) => z.resolve(region)?,
                None => ann,
            };
            Kind::Connect { x: inner, y: outer, z }
        }
        EventSpec::E2 { center, m, n } => {
            let (annulus, inner, outer) = annulus_sets(region, center, *m, *n)?;
            Kind::Crossing {
                annulus,
                inner,
                outer,
                rule: CountRule::AtLeastTwo,
            }
        }
        EventSpec::F { center, m, n } => {
            let (annulus, inner, outer) = annulus_sets(region, center, *m, *n)?;
            Kind::Crossing {
                annulus,
                inner,
                outer,
                rule: CountRule::ExactlyOne,
            }
        }
        EventSpec::Connect { x, y, z } => Kind::Connect {
            x: x.resolve(region)?,
            y: y.resolve(region)?,
            z: z.resolve(region)?,
        },
        EventSpec::Cylinder { edges, states } => {
            let states = match states {
                Some(s) if s.len() != edges.len() => {
                    return input("cylinder states and edges differ in length");
                }
                Some(s) => s.clone(),
                None => vec![true; edges.len()],
            };
            let mut list = Vec::with_capacity(edges.len());
            for ((a, b), st) in edges.iter().zip(states) {
                let (a, b) = (region.require_index(a)?, region.require_index(b)?);
                let e = region
                    .edge_index(a, b)
                    .ok_or_else(|| Error::Input(format!("no edge between {a} and {b}")))?;
                list.push((e, st));
            }
            Kind::Cylinder(list)
        }
        EventSpec::Star { center } => {
            let v = region.require_index(center)?;
            let want = 2 * region.dim();
            let list: Vec<(usize, bool)> = region.neighbors(v).iter().map(|&(_, e)| (e as usize, true)).collect();
            if list.len() != want && region.spec().family == Family::Hypercubic {
                return input("star event needs every lattice edge at the center inside the region");
            }
            Kind::Cylinder(list)
        }
        EventSpec::Circuit { m } => Kind::Circuit(CircuitFinder::new(region, *m)?),
        EventSpec::And { events } => Kind::And(events.iter().map(|e| compile_kind(e, region)).collect::<Result<_>>()?),
        EventSpec::Not { event } => Kind::Not(Box::new(compile_kind(event, region)?)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CountRule {
    AtLeastTwo,
    ExactlyOne,
}

#[derive(Debug, Clone)]
enum Kind {
    Sure,
    Impossible,
    Connect { x: VertexSet, y: VertexSet, z: VertexSet },
    Crossing {
        annulus: VertexSet,
        inner: VertexSet,
        outer: VertexSet,
        rule: CountRule,
    },
    Cylinder(Vec<(usize, bool)>),
    Circuit(CircuitFinder),
    And(Vec<Kind>),
    Not(Box<Kind>),
}

/// Reusable buffers for event evaluation.
#[derive(Debug, Default)]
pub struct Scratch {
    pub explorer: Explorer,
    pub uf: Option<UnionFind>,
    pub winding: WindingUnionFind,
}

impl Scratch {
    pub fn new(region: &Region) -> Self {
        Self {
            explorer: Explorer::new(region.vertex_count()),
            uf: Some(UnionFind::new(region.vertex_count())),
            winding: WindingUnionFind::default(),
        }
    }
}

/// An event bound to a region, ready to evaluate on any edge-state source.
/// Monte Carlo and exact enumeration both go through [`CompiledEvent::holds`].
#[derive(Debug, Clone)]
pub struct CompiledEvent<'r> {
    region: &'r Region,
    kind: Kind,
}

impl<'r> CompiledEvent<'r> {
    pub fn region(&self) -> &'r Region {
        self.region
    }

    pub fn holds(&self, states: &impl EdgeStates, scratch: &mut Scratch) -> bool {
        eval(&self.kind, self.region, states, scratch)
    }

    pub fn holds_once(&self, states: &impl EdgeStates) -> bool {
        self.holds(states, &mut Scratch::new(self.region))
    }

    /// Whether the event is a plain cylinder requiring all its edges open.
    pub fn is_all_open_cylinder(&self) -> bool {
        matches!(&self.kind, Kind::Cylinder(l) if l.iter().all(|&(_, s)| s))
    }
}

fn eval(kind: &Kind, region: &Region, states: &impl EdgeStates, scratch: &mut Scratch) -> bool {
    match kind {
        Kind::Sure => true,
        Kind::Impossible => false,
        Kind::Connect { x, y, z } => scratch.explorer.search(
            region,
            states,
            x.iter(),
            |v| z.contains(v),
            |v| y.contains(v),
        ),
        Kind::Crossing {
            annulus,
            inner,
            outer,
            rule,
        } => {
            let uf = scratch.uf.get_or_insert_with(|| UnionFind::new(region.vertex_count()));
            let c = crossing_cluster_count_with(uf, region, states, annulus, inner, outer);
            match rule {
                CountRule::AtLeastTwo => c >= 2,
                CountRule::ExactlyOne => c == 1,
            }
        }
        Kind::Cylinder(list) => event_cylinder_indexed(states, list),
        Kind::Circuit(f) => f.exists(region, states, &mut scratch.winding),
        Kind::And(ks) => ks.iter().all(|k| eval(k, region, states, scratch)),
        Kind::Not(k) => !eval(k, region, states, scratch),
    }
}

fn annulus_or_default(region: &Region, v: &[i32], m: u32, n: u32, z: Option<&VertexSet>) -> Result<(VertexSet, VertexSet, VertexSet)> {
    let (ann, inner, outer) = annulus_sets(region, v, m, n)?;
    Ok((z.cloned().unwrap_or(ann), inner, outer))
}

/// `E1(v,m,n) = {S(v,m) <-> S(v,n) in Z}`; `Z` defaults to `A(v,m,n)`.
pub fn event_e1(region: &Region, states: &impl EdgeStates, v: &[i32], m: u32, n: u32, z: Option<&VertexSet>) -> Result<bool> {
    let (z, inner, outer) = annulus_or_default(region, v, m, n, z)?;
    Ok(crate::percolation::connected_in(region, states, &inner, &outer, &z))
}

/// `E2(v,m,n)`: at least two disjoint crossing clusters of `A(v,m,n)`.
pub fn event_e2(region: &Region, states: &impl EdgeStates, v: &[i32], m: u32, n: u32) -> Result<bool> {
    let (ann, inner, outer) = annulus_sets(region, v, m, n)?;
    Ok(crate::percolation::crossing_cluster_count(region, states, &ann, &inner, &outer) >= 2)
}

pub fn event_unique_crossing(
    region: &Region,
    states: &impl EdgeStates,
    annulus: &VertexSet,
    inner: &VertexSet,
    outer: &VertexSet,
) -> bool {
    crate::percolation::crossing_cluster_count(region, states, annulus, inner, outer) == 1
}

/// Every listed edge is in its required state.
pub fn event_cylinder(region: &Region, states: &impl EdgeStates, edges: &[usize], required: &[bool]) -> Result<bool> {
    if edges.len() != required.len() {
        return input("cylinder edges and states differ in length");
    }
    if let Some(&e) = edges.iter().find(|&&e| e >= region.edge_count()) {
        return input(format!("unknown edge {e}"));
    }
    let list: Vec<(usize, bool)> = edges.iter().copied().zip(required.iter().copied()).collect();
    Ok(event_cylinder_indexed(states, &list))
}

fn event_cylinder_indexed(states: &impl EdgeStates, list: &[(usize, bool)]) -> bool {
    list.iter().all(|&(e, s)| states.is_open(e) == s)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Union-find carrying the winding offset of each vertex relative to its root
/// and, per component, the gcd of all cycle windings seen so far.
#[derive(Debug, Default, Clone)]
pub struct WindingUnionFind {
    parent: Vec<u32>,
    offset: Vec<i64>,
    size: Vec<u32>,
    gcd: Vec<u64>,
}

impl WindingUnionFind {
    fn reset(&mut self, n: usize) {
        self.parent.clear();
        self.parent.extend(0..n as u32);
        self.offset.clear();
        self.offset.resize(n, 0);
        self.size.clear();
        self.size.resize(n, 1);
        self.gcd.clear();
        self.gcd.resize(n, 0);
    }

    /// Root of `x` and the winding from the root's lift to `x`'s lift.
    fn find(&mut self, x: usize) -> (usize, i64) {
        let mut path = Vec::new();
        let mut r = x;
        while self.parent[r] as usize != r {
            path.push(r);
            r = self.parent[r] as usize;
        }
        // Fold offsets from the top of the path down.
        let mut acc = 0i64;
        for &v in path.iter().rev() {
            acc += self.offset[v];
            self.offset[v] = acc;
            self.parent[v] = r as u32;
        }
        (r, if x == r { 0 } else { self.offset[x] })
    }

    /// Join `a` and `b` by an edge whose traversal `a -> b` changes the lift level by `w`.
    fn join(&mut self, a: usize, b: usize, w: i64) {
        let (ra, da) = self.find(a);
        let (rb, db) = self.find(b);
        if ra == rb {
            let cycle = (da + w - db).unsigned_abs();
            self.gcd[ra] = gcd(self.gcd[ra], cycle);
            return;
        }
        // level(rb) - level(ra) = da + w - db
        let delta = da + w - db;
        let (big, small, off) = if self.size[ra] >= self.size[rb] {
            (ra, rb, delta)
        } else {
            (rb, ra, -delta)
        };
        self.parent[small] = big as u32;
        self.offset[small] = off;
        self.size[big] += self.size[small];
        self.gcd[big] = gcd(self.gcd[big], self.gcd[small]);
    }
}

/// An open circuit around `Q(2m)` in `An(2m,3m)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitData {
    /// Closed vertex walk, first vertex repeated at the end.
    pub vertices: Vec<usize>,
    /// Edge indices in walk order.
    pub edges: Vec<usize>,
    pub m: u32,
    pub winding: i32,
}

impl CircuitData {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edge indices in increasing order; the secondary sort key of circuits.
    pub fn sorted_edges(&self) -> Vec<usize> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    pub fn vertex_set(&self, region: &Region) -> VertexSet {
        VertexSet::from_indices(region.vertex_count(), self.vertices.iter().copied())
    }

    /// Checks adjacency, openness, containment in `An(2m,3m)` and winding.
    pub fn validate(&self, region: &Region, states: &impl EdgeStates) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        if self.vertices.len() != self.edges.len() + 1 || self.vertices.first() != self.vertices.last() {
            return bad("circuit is not closed".into());
        }
        let (lo, hi) = (2 * self.m, 3 * self.m);
        let mut winding = 0i64;
        for (i, &e) in self.edges.iter().enumerate() {
            let (a, b) = (self.vertices[i], self.vertices[i + 1]);
            if region.edge_index(a, b) != Some(e) {
                return bad(format!("step {i} does not follow edge {e}"));
            }
            if !states.is_open(e) {
                return bad(format!("edge {e} is closed"));
            }
            winding += cut_weight(region, a, b);
        }
        for &v in &self.vertices {
            let r = plane_linf(region.coord(v));
            if r < lo || r > hi {
                return bad(format!("vertex {v} outside the annulus"));
            }
        }
        if winding.abs() != 1 || winding != self.winding as i64 {
            return bad(format!("winding {winding}, recorded {}", self.winding));
        }
        Ok(())
    }
}

/// Lift-level change along `a -> b`: crossing the cut between `x2 = 0` and
/// `x2 = 1` on the positive `x1` axis counts `+1` upward and `-1` downward.
fn cut_weight(region: &Region, a: usize, b: usize) -> i64 {
    let (ca, cb) = (region.coord(a), region.coord(b));
    if ca[0] <= 0 || ca[0] != cb[0] {
        return 0;
    }
    match (ca[1], cb[1]) {
        (0, 1) => 1,
        (1, 0) => -1,
        _ => 0,
    }
}

/// Detects and extracts open circuits around `Q(2m)` in a region containing `An(2m,3m)`.
#[derive(Debug, Clone)]
pub struct CircuitFinder {
    m: u32,
    annulus: VertexSet,
    /// Edges inside the annulus with their `lo -> hi` endpoint cut weight.
    edges: Vec<(u32, i8)>,
}

impl CircuitFinder {
    pub fn new(region: &Region, m: u32) -> Result<Self> {
        let spec = region.spec();
        let layers = match spec.family {
            Family::Slab { k } => (k as usize + 1).pow(spec.d as u32 - 2),
            Family::Hypercubic if spec.d == 2 => 1,
            _ => return input("circuits need a slab or planar region"),
        };
        if m == 0 {
            return input("circuit scale m must be positive");
        }
        let (lo, hi) = (2 * m, 3 * m);
        let annulus = region.plane_band(lo, hi);
        let side = |r: u32| (2 * r as usize + 1).pow(2);
        let expected = (side(hi) - side(lo - 1)) * layers;
        if annulus.count() != expected {
            return input(format!("region does not contain An({lo},{hi})"));
        }
        let edges = region
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| annulus.contains(a as usize) && annulus.contains(b as usize))
            .map(|(e, &(a, b))| (e as u32, cut_weight(region, a as usize, b as usize) as i8))
            .collect();
        Ok(Self { m, annulus, edges })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn annulus(&self) -> &VertexSet {
        &self.annulus
    }

    fn wind(&self, region: &Region, states: &impl EdgeStates, uf: &mut WindingUnionFind) {
        uf.reset(region.vertex_count());
        for &(e, w) in &self.edges {
            if states.is_open(e as usize) {
                let (a, b) = region.edge(e as usize);
                uf.join(a, b, w as i64);
            }
        }
    }

    /// Whether some open cluster of the annulus carries a closed walk of winding one.
    pub fn exists(&self, region: &Region, states: &impl EdgeStates, uf: &mut WindingUnionFind) -> bool {
        self.wind(region, states, uf);
        self.annulus.iter().any(|v| uf.parent[v] as usize == v && uf.gcd[v] == 1)
    }

    /// The minimal circuit under the order (length, sorted edge-index list).
    pub fn minimal(&self, region: &Region, states: &impl EdgeStates) -> Option<CircuitData> {
        let mut uf = WindingUnionFind::default();
        self.wind(region, states, &mut uf);
        let starts: Vec<usize> = self
            .annulus
            .iter()
            .filter(|&v| {
                let (r, _) = uf.find(v);
                uf.gcd[r] == 1
            })
            .collect();
        let mut best: Option<(usize, Vec<usize>, CircuitData)> = None;
        for s in starts {
            let limit = best.as_ref().map_or(usize::MAX, |b| b.0);
            let Some(c) = self.shortest_from(region, states, s, limit) else {
                continue;
            };
            let key = c.sorted_edges();
            let better = match &best {
                None => true,
                Some((len, k, _)) => (c.len(), &key) < (*len, k),
            };
            if better {
                best = Some((c.len(), key, c));
            }
        }
        best.map(|b| b.2)
    }

    /// Shortest walk from `(s, 0)` to `(s, 1)` in the cover, if shorter than or
    /// equal to `limit`. Neighbors are scanned in edge-index order.
    fn shortest_from(&self, region: &Region, states: &impl EdgeStates, s: usize, limit: usize) -> Option<CircuitData> {
        // State -> (parent state, edge, depth).
        let mut seen: HashMap<(u32, i32), ((u32, i32), u32, u32)> = HashMap::new();
        let start = (s as u32, 0i32);
        let target = (s as u32, 1i32);
        seen.insert(start, (start, u32::MAX, 0));
        let mut queue = VecDeque::from([start]);
        while let Some(st) = queue.pop_front() {
            let depth = seen[&st].2;
            if depth as usize >= limit {
                break;
            }
            let (x, lvl) = (st.0 as usize, st.1);
            for &(y, e) in region.neighbors(x) {
                if !self.annulus.contains(y as usize) || !states.is_open(e as usize) {
                    continue;
                }
                let next = (y, lvl + cut_weight(region, x, y as usize) as i32);
                if seen.contains_key(&next) {
                    continue;
                }
                seen.insert(next, (st, e, depth + 1));
                if next == target {
                    return Some(self.unwind(&seen, start, target));
                }
                queue.push_back(next);
            }
        }
        None
    }

    fn unwind(&self, seen: &HashMap<(u32, i32), ((u32, i32), u32, u32)>, start: (u32, i32), target: (u32, i32)) -> CircuitData {
        let mut vertices = vec![target.0 as usize];
        let mut edges = Vec::new();
        let mut cur = target;
        while cur != start {
            let (prev, e, _) = seen[&cur];
            edges.push(e as usize);
            vertices.push(prev.0 as usize);
            cur = prev;
        }
        vertices.reverse();
        edges.reverse();
        CircuitData {
            vertices,
            edges,
            m: self.m,
            winding: 1,
        }
    }
}

/// Minimal open circuit around `Q(2m)` in `An(2m,3m)`, if any.
pub fn minimal_open_circuit(region: &Region, states: &impl EdgeStates, m: u32) -> Result<Option<CircuitData>> {
    Ok(CircuitFinder::new(region, m)?.minimal(region, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::percolation::{sample_configuration, Configuration};
    use proptest::prelude::*;

    fn diamond() -> Region {
        Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 2).unwrap()
    }

    fn ring_edges(region: &Region, r: i32, layer: Option<i32>) -> Vec<usize> {
        (0..region.edge_count())
            .filter(|&e| {
                let (a, b) = region.edge(e);
                let (ca, cb) = (region.coord(a), region.coord(b));
                let on = |c: &[i32]| plane_linf(c) == r as u32 && layer.map_or(true, |l| c[2] == l);
                on(ca) && on(cb) && (ca[0] == cb[0] && ca[0].abs() == r || ca[1] == cb[1] && ca[1].abs() == r)
            })
            .collect()
    }

    #[test]
    fn e1_degenerate_and_empty() {
        let r = diamond();
        let closed = Configuration::all(r.edge_count(), false);
        assert!(event_e1(&r, &closed, &[0, 0], 1, 1, None).unwrap());
        assert!(!event_e1(&r, &closed, &[0, 0], 1, 2, None).unwrap());
        assert!(event_e1(&r, &closed, &[0, 0], 2, 1, None).is_err());
    }

    #[test]
    fn e2_two_opposite_edges() {
        let r = diamond();
        let idx = |c: &[i32]| r.require_index(c).unwrap();
        let e_right = r.edge_index(idx(&[1, 0]), idx(&[2, 0])).unwrap();
        let e_left = r.edge_index(idx(&[-1, 0]), idx(&[-2, 0])).unwrap();
        let c = Configuration::from_open_edges(r.edge_count(), [e_right, e_left]);
        assert!(event_e2(&r, &c, &[0, 0], 1, 2).unwrap());
        assert!(!event_e2(&r, &Configuration::all(r.edge_count(), true), &[0, 0], 1, 2).unwrap());
    }

    #[test]
    fn cylinder_basics() {
        let r = diamond();
        let c = Configuration::all(r.edge_count(), true);
        assert!(event_cylinder(&r, &c, &[], &[]).unwrap());
        assert!(event_cylinder(&r, &c, &[0, 3], &[true, true]).unwrap());
        assert!(!event_cylinder(&r, &c, &[0], &[false]).unwrap());
        assert!(event_cylinder(&r, &c, &[999], &[true]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let ev = EventSpec::And {
            events: vec![EventSpec::e1(&[0, 0], 1, 2), EventSpec::Not { event: Box::new(EventSpec::Circuit { m: 1 }) }],
        };
        let text = serde_json::to_string(&ev).unwrap();
        assert!(text.contains("\"kind\":\"e1\""));
        assert_eq!(serde_json::from_str::<EventSpec>(&text).unwrap(), ev);
    }

    #[test]
    fn full_plane_circuit_is_the_inner_ring() {
        let spec = LatticeSpec::slab(2, 0);
        let q = Region::slab_box(spec, 3).unwrap();
        let all = Configuration::all(q.edge_count(), true);
        let c = minimal_open_circuit(&q, &all, 1).unwrap().unwrap();
        assert_eq!(c.len(), 16);
        c.validate(&q, &all).unwrap();
        let mut ring = ring_edges(&q, 2, None);
        ring.sort_unstable();
        assert_eq!(c.sorted_edges(), ring);
        assert!(c.vertices.iter().all(|&v| plane_linf(q.coord(v)) == 2));

        let none = Configuration::all(q.edge_count(), false);
        assert!(minimal_open_circuit(&q, &none, 1).unwrap().is_none());
    }

    #[test]
    fn lone_ring_is_found_exactly() {
        let spec = LatticeSpec::slab(3, 1);
        let q = Region::slab_box(spec, 6).unwrap();
        let ring = ring_edges(&q, 4, Some(1));
        assert_eq!(ring.len(), 32);
        let cfg = Configuration::from_open_edges(q.edge_count(), ring.iter().copied());
        let c = minimal_open_circuit(&q, &cfg, 2).unwrap().unwrap();
        let mut sorted = ring.clone();
        sorted.sort_unstable();
        assert_eq!(c.sorted_edges(), sorted);
        c.validate(&q, &cfg).unwrap();
        // Remove one edge: no circuit.
        let mut broken = cfg.clone();
        broken.set(ring[3], false);
        assert!(minimal_open_circuit(&q, &broken, 2).unwrap().is_none());
    }

    #[test]
    fn small_region_rejected() {
        let q = Region::slab_box(LatticeSpec::slab(3, 1), 2).unwrap();
        let c = Configuration::all(q.edge_count(), true);
        assert!(minimal_open_circuit(&q, &c, 1).is_err());
        let cube = Region::ball(LatticeSpec::hypercubic(3), &[0, 0, 0], 2).unwrap();
        assert!(CircuitFinder::new(&cube, 1).is_err());
    }

    #[test]
    fn contractible_loop_is_not_a_circuit() {
        // A unit square of open edges inside the annulus winds zero times.
        let q = Region::slab_box(LatticeSpec::slab(2, 0), 3).unwrap();
        let idx = |c: &[i32]| q.require_index(c).unwrap();
        let sq = [[2, 0], [3, 0], [3, 1], [2, 1]];
        let edges: Vec<usize> = (0..4).map(|i| q.edge_index(idx(&sq[i]), idx(&sq[(i + 1) % 4])).unwrap()).collect();
        let cfg = Configuration::from_open_edges(q.edge_count(), edges);
        assert!(minimal_open_circuit(&q, &cfg, 1).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn unique_is_e1_without_e2(seed in any::<u64>(), p in 0.1f64..0.9) {
            let r = Region::ball(LatticeSpec::hypercubic(2), &[0, 0], 5).unwrap();
            let c = sample_configuration(&r, p, seed, 0).unwrap();
            let s = metric_sets(&r, &[0, 0], 2, 5, Metric::Ambient).unwrap();
            let f = event_unique_crossing(&r, &c, &s.annulus, &s.shell_m, &s.shell_n);
            let e1 = event_e1(&r, &c, &[0, 0], 2, 5, None).unwrap();
            let e2 = event_e2(&r, &c, &[0, 0], 2, 5).unwrap();
            prop_assert_eq!(f, e1 && !e2);
            let compiled = EventSpec::unique(&[0, 0], 2, 5).compile(&r).unwrap();
            prop_assert_eq!(compiled.holds_once(&c), f);
        }

        #[test]
        fn circuit_and_e1_are_increasing(seed in any::<u64>(), p in 0.4f64..0.8, flip in 0usize..10_000) {
            let q = Region::slab_box(LatticeSpec::slab(3, 1), 6).unwrap();
            let mut c = sample_configuration(&q, p, seed, 0).unwrap();
            let finder = CircuitFinder::new(&q, 2).unwrap();
            let mut wuf = WindingUnionFind::default();
            let before = finder.exists(&q, &c, &mut wuf);
            let found = finder.minimal(&q, &c);
            prop_assert_eq!(before, found.is_some());
            if let Some(circ) = &found {
                circ.validate(&q, &c).unwrap();
            }
            let e1_before = event_e1(&q, &c, &[0, 0, 0], 1, 5, None).unwrap();
            c.set(flip % q.edge_count(), true);
            if before {
                prop_assert!(finder.exists(&q, &c, &mut wuf));
            }
            if e1_before {
                prop_assert!(event_e1(&q, &c, &[0, 0, 0], 1, 5, None).unwrap());
            }
        }
    }
}
