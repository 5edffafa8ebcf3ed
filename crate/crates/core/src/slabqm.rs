//! Quasi-multiplicativity on slabs: circuit-conditioned case split, the
//! local modification maps and their checkable properties, and empirical
//! ratio constants.
//!
//! A configuration in the bad event (both `X` and `Y` reach the columns over
//! the minimal circuit `Γ`, but not each other) is classified by which of
//! `X`, `Y` already touch `Γ`. The map rewires the edges around one or two
//! columns so that `X <-> Y` holds, changing a bounded number of edges, in a
//! way that can be undone from the image alone.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, input, Error, Result};
use crate::estimators::{connection_ratio, QmRatio};
use crate::events::{CircuitData, CircuitFinder, WindingUnionFind};
use crate::exec::Exec;
use crate::lattice::{plane_linf, Coord, Family, LatticeSpec, Region, RegionDescriptor};
use crate::percolation::{Configuration, EdgeStates, Explorer, LazyConfiguration};
use crate::stats::{bernoulli_mean_stderr, Estimate};
use crate::vertex_set::VertexSet;

/// Which of `X`, `Y` touch `Γ`: (a) neither, (b) only `Y`, (c) only `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subevent {
    A,
    B,
    C,
}

/// Construction actually applied. Case (c) runs the (b) constructions with
/// `X` and `Y` exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// `u` and `v` in one column.
    A1,
    /// Disjoint attachment columns.
    A2,
    /// `Y` reaches `Γ` avoiding the column of `u`.
    B1,
    /// Every route from `Y` to `Γ` passes the column of `u`.
    B2,
}

impl CaseTag {
    pub fn name(&self) -> &'static str {
        match self {
            CaseTag::A1 => "a1",
            CaseTag::A2 => "a2",
            CaseTag::B1 => "b1",
            CaseTag::B2 => "b2",
        }
    }
}

/// Slab geometry for the modification maps: an ambient region, a connected
/// `Z` containing `An(2m,3m)`, `X ⊆ Z∩Q(2m)` and `Y ⊆ Z∖Q(3m)`.
#[derive(Debug, Clone)]
pub struct SlabProbe {
    pub m: u32,
    pub region: Region,
    pub z: VertexSet,
    pub x: VertexSet,
    pub y: VertexSet,
    finder: CircuitFinder,
    col_id: Vec<u32>,
    columns: Vec<Vec<usize>>,
}

impl SlabProbe {
    pub fn new(region: Region, m: u32, z: VertexSet, x: VertexSet, y: VertexSet) -> Result<Self> {
        if !region.spec().is_slab() {
            return input("slab probes need a slab region");
        }
        let finder = CircuitFinder::new(&region, m)?;
        if !finder.annulus().is_subset(&z) {
            return input(format!("Z must contain An({},{})", 2 * m, 3 * m));
        }
        if x.is_empty() || y.is_empty() {
            return input("X and Y must be non-empty");
        }
        if !x.is_subset(&z.intersection(&region.plane_band(0, 2 * m))) {
            return input(format!("X must lie in Z ∩ Q({})", 2 * m));
        }
        if !y.is_subset(&z) || y.intersects(&region.plane_band(0, 3 * m)) {
            return input(format!("Y must lie in Z outside Q({})", 3 * m));
        }
        let mut planes: Vec<(i32, i32)> = (0..region.vertex_count())
            .map(|v| {
                let c = region.coord(v);
                (c[0], c[1])
            })
            .collect();
        planes.sort_unstable();
        planes.dedup();
        let mut columns = vec![Vec::new(); planes.len()];
        let col_id = (0..region.vertex_count())
            .map(|v| {
                let c = region.coord(v);
                let id = planes.binary_search(&(c[0], c[1])).unwrap();
                columns[id].push(v);
                id as u32
            })
            .collect();
        Ok(Self {
            m,
            region,
            z,
            x,
            y,
            finder,
            col_id,
            columns,
        })
    }

    /// `Q(4m)` with `X = {(2m,1,0,..)}` on the inner face of the annulus,
    /// `Y = {(4m,-1,1,..)}` on the outer boundary (layer 0 when `k = 0`) and
    /// `Z = An(2m,4m) ∪ X`. Small `X`, `Y` and a holed `Z` make the bad
    /// event frequent enough to sample.
    pub fn standard(spec: LatticeSpec, m: u32) -> Result<Self> {
        let region = Region::slab_box(spec, 4 * m)?;
        let mut xc = vec![0; spec.d];
        xc[0] = 2 * m as i32;
        xc[1] = 1;
        let mut yc = vec![0; spec.d];
        yc[0] = 4 * m as i32;
        yc[1] = -1;
        if spec.d > 2 {
            yc[2] = spec.thickness().unwrap_or(0).min(1) as i32;
        }
        let x = region.set_of([xc.as_slice()])?;
        let y = region.set_of([yc.as_slice()])?;
        let z = region.plane_band(2 * m, 4 * m).union(&x);
        Self::new(region, m, z, x, y)
    }

    /// Same geometry with `X` and `Y` given by coordinates.
    pub fn with_sets(region: Region, m: u32, x: &[Coord], y: &[Coord]) -> Result<Self> {
        let z = region.all_vertices();
        let xs = region.set_of(x.iter().map(|c| c.as_slice()))?;
        let ys = region.set_of(y.iter().map(|c| c.as_slice()))?;
        Self::new(region, m, z, xs, ys)
    }

    pub fn spec(&self) -> LatticeSpec {
        self.region.spec()
    }

    /// `4d(k+1)^(d-2)`: edges touching two columns.
    pub fn d_bound(&self) -> usize {
        2 * self.column_bound()
    }

    /// `4d(k+1)k^(d-2)`, the variant printed once alongside the bound above.
    pub fn d_bound_as_printed(&self) -> usize {
        let spec = self.spec();
        let k = spec.thickness().unwrap_or(0) as usize;
        4 * spec.d * (k + 1) * k.pow(spec.d as u32 - 2)
    }

    /// `2d(k+1)^(d-2)`: edges touching one column.
    pub fn column_bound(&self) -> usize {
        let spec = self.spec();
        let k = spec.thickness().unwrap_or(0) as usize;
        2 * spec.d * (k + 1).pow(spec.d as u32 - 2)
    }

    fn column_coord(&self, c: u32) -> [i32; 2] {
        let v = self.columns[c as usize][0];
        let co = self.region.coord(v);
        [co[0], co[1]]
    }

    fn gamma_columns(&self, circuit: &CircuitData) -> BTreeSet<u32> {
        circuit.vertices.iter().map(|&v| self.col_id[v]).collect()
    }
}

/// Outcome of [`classify_case`] when the configuration lies in the bad event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub subevent: Subevent,
    pub circuit: CircuitData,
}

/// Returns the subevent when `E` holds, `X` and `Y` both reach `Γ̄` in `Z`
/// and `X` does not reach `Y`; `None` otherwise.
pub fn classify_case(probe: &SlabProbe, states: &impl EdgeStates) -> Result<Option<Classification>> {
    let mut ex = Explorer::new(probe.region.vertex_count());
    Ok(classify_with(probe, states, &mut ex))
}

fn classify_with(probe: &SlabProbe, states: &impl EdgeStates, ex: &mut Explorer) -> Option<Classification> {
    let (r, z) = (&probe.region, &probe.z);
    let in_z = |v: usize| z.contains(v);
    if ex.search(r, states, probe.x.iter(), in_z, |v| probe.y.contains(v)) {
        return None;
    }
    let ann = probe.finder.annulus();
    if !ex.search(r, states, probe.y.iter(), in_z, |v| ann.contains(v)) {
        return None;
    }
    let circuit = probe.finder.minimal(r, states)?;
    let cols = probe.gamma_columns(&circuit);
    let on_bar = |v: usize| cols.contains(&probe.col_id[v]);
    if !ex.search(r, states, probe.x.iter(), in_z, on_bar) || !ex.search(r, states, probe.y.iter(), in_z, on_bar) {
        return None;
    }
    let on_gamma = circuit.vertex_set(r);
    let xg = ex.search(r, states, probe.x.iter(), in_z, |v| on_gamma.contains(v));
    let yg = ex.search(r, states, probe.y.iter(), in_z, |v| on_gamma.contains(v));
    let subevent = match (xg, yg) {
        (false, false) => Subevent::A,
        (false, true) => Subevent::B,
        (true, false) => Subevent::C,
        // X and Y would meet through Γ.
        (true, true) => return None,
    };
    Some(Classification { subevent, circuit })
}

/// The image configuration and the choices that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Modification {
    pub case: CaseTag,
    /// `X` and `Y` were exchanged (subevent (c)).
    pub swapped: bool,
    pub u: usize,
    pub v: Option<usize>,
    /// In-plane coordinates of the modified columns, sorted.
    pub columns: Vec<[i32; 2]>,
    pub pi_u: Vec<usize>,
    pub pi_v: Vec<usize>,
    pub config: Configuration,
}

/// Per-sample record of the map's checkable properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationReport {
    pub case: CaseTag,
    pub swapped: bool,
    pub columns: Vec<[i32; 2]>,
    pub edits: usize,
    pub d_bound: usize,
    pub d_bound_as_printed: usize,
    pub target_holds: bool,
    pub reconstruction_ok: bool,
    /// Columns recovered from the image alone.
    pub reconstructed: Vec<[i32; 2]>,
    /// Every flipped edge touches a modified column.
    pub local: bool,
    pub pi_u: Vec<usize>,
    pub pi_v: Vec<usize>,
}

impl ModificationReport {
    pub fn passed(&self) -> bool {
        self.edits <= self.d_bound && self.target_holds && self.reconstruction_ok && self.local
    }
}

/// Sides of the construction after the (c) -> (b) exchange.
struct Sides<'a> {
    x: &'a VertexSet,
    y: &'a VertexSet,
}

impl<'a> Sides<'a> {
    fn of(probe: &'a SlabProbe, swapped: bool) -> Self {
        if swapped {
            Self { x: &probe.y, y: &probe.x }
        } else {
            Self { x: &probe.x, y: &probe.y }
        }
    }
}

/// Vertices `u ∈ Γ̄` joined to `src` in `Z` by an open path that avoids the
/// column of `u` after its first step, sorted by index.
fn attachment_points(probe: &SlabProbe, states: &impl EdgeStates, ex: &mut Explorer, src: &VertexSet, cols: &BTreeSet<u32>) -> Vec<usize> {
    let r = &probe.region;
    let mut out = Vec::new();
    for &c in cols {
        ex.search(r, states, src.iter(), |w| probe.z.contains(w) && probe.col_id[w] != c, |_| false);
        for &u in &probe.columns[c as usize] {
            if !probe.z.contains(u) {
                continue;
            }
            let hit = src.contains(u)
                || r
                    .neighbors(u)
                    .iter()
                    .any(|&(w, e)| ex.visited(w as usize) && states.is_open(e as usize));
            if hit {
                out.push(u);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Edge list of an open path from `u` to `src` leaving the column of `u` at
/// its first step; empty when `u ∈ src`.
fn column_avoiding_path(probe: &SlabProbe, states: &impl EdgeStates, ex: &mut Explorer, src: &VertexSet, u: usize) -> Result<Vec<usize>> {
    if src.contains(u) {
        return Ok(Vec::new());
    }
    let r = &probe.region;
    let c = probe.col_id[u];
    ex.search_with_parents(r, states, src.iter(), |w| probe.z.contains(w) && probe.col_id[w] != c);
    let Some(&(y, e0)) = r
        .neighbors(u)
        .iter()
        .find(|&&(w, e)| ex.visited(w as usize) && states.is_open(e as usize))
    else {
        return Err(Error::Invariant(format!("no open route from vertex {u} back to its source")));
    };
    let walk = ex.path_to_source(y as usize);
    let mut edges = vec![e0 as usize];
    edges.extend(walk.windows(2).map(|w| r.edge_index(w[0], w[1]).unwrap()));
    Ok(edges)
}

/// Shortest path inside column `c` from `s` to `targets`, scanning
/// neighbors in index order. Returns the edges and the vertices visited.
fn column_path(probe: &SlabProbe, s: usize, targets: &VertexSet) -> Result<(Vec<usize>, Vec<usize>)> {
    if targets.contains(s) {
        return Ok((Vec::new(), vec![s]));
    }
    let r = &probe.region;
    let c = probe.col_id[s];
    let mut ex = Explorer::new(r.vertex_count());
    ex.search_with_parents(r, &Configuration::all(r.edge_count(), true), [s], |w| probe.col_id[w] == c);
    let Some(&t) = probe.columns[c as usize].iter().filter(|&&w| targets.contains(w) && ex.visited(w)).min_by_key(|&&w| {
        let mut len = 0;
        let mut x = w;
        while ex.parent[x] as usize != x {
            x = ex.parent[x] as usize;
            len += 1;
        }
        (len, w)
    }) else {
        return Err(Error::Invariant(format!("column of vertex {s} does not reach its target")));
    };
    let mut verts = ex.path_to_source(t);
    verts.reverse();
    let edges = verts.windows(2).map(|w| r.edge_index(w[0], w[1]).unwrap()).collect();
    Ok((edges, verts))
}

/// Applies the local modification for a classified configuration.
pub fn apply_modification(probe: &SlabProbe, config: &Configuration, class: &Classification) -> Result<Modification> {
    let r = &probe.region;
    let n = r.vertex_count();
    let swapped = class.subevent == Subevent::C;
    let sides = Sides::of(probe, swapped);
    let circuit = &class.circuit;
    let cols = probe.gamma_columns(circuit);
    let mut ex = Explorer::new(n);
    let invariant = |msg: &str| Error::Invariant(msg.to_string());

    let us = attachment_points(probe, config, &mut ex, sides.x, &cols);
    let u_first = *us.first().ok_or_else(|| invariant("X reaches the columns over Γ but U is empty"))?;
    let (case, u, v) = match class.subevent {
        Subevent::A => {
            let vs = attachment_points(probe, config, &mut ex, sides.y, &cols);
            if vs.is_empty() {
                return Err(invariant("Y reaches the columns over Γ but V is empty"));
            }
            let shared = us.iter().find_map(|&u| {
                vs.iter()
                    .copied()
                    .find(|&v| probe.col_id[v] == probe.col_id[u])
                    .map(|v| (u, v))
            });
            match shared {
                Some((u, v)) => (CaseTag::A1, u, Some(v)),
                None => (CaseTag::A2, u_first, Some(vs[0])),
            }
        }
        Subevent::B | Subevent::C => {
            let on_gamma = circuit.vertex_set(r);
            let bypass = us.iter().copied().find(|&u| {
                let c = probe.col_id[u];
                ex.search(
                    r,
                    config,
                    sides.y.iter(),
                    |w| probe.z.contains(w) && probe.col_id[w] != c,
                    |w| on_gamma.contains(w),
                )
            });
            match bypass {
                Some(u) => (CaseTag::B1, u, None),
                None => {
                    let c = probe.col_id[u_first];
                    let single = BTreeSet::from([c]);
                    let vs = attachment_points(probe, config, &mut ex, sides.y, &single);
                    let v = *vs.first().ok_or_else(|| invariant("Y reaches Γ only through the column of u, yet no v found"))?;
                    (CaseTag::B2, u_first, Some(v))
                }
            }
        }
    };
    if Some(u) == v {
        return Err(invariant("u and v coincide, so X and Y were already connected"));
    }

    let pi_u = column_avoiding_path(probe, config, &mut ex, sides.x, u)?;
    let pi_v = match v {
        Some(v) => column_avoiding_path(probe, config, &mut ex, sides.y, v)?,
        None => Vec::new(),
    };
    let mut designated: BTreeSet<u32> = BTreeSet::from([probe.col_id[u]]);
    if case == CaseTag::A2 {
        designated.insert(probe.col_id[v.unwrap()]);
    }

    let mut keep: BTreeSet<usize> = circuit.edges.iter().copied().collect();
    keep.extend(pi_u.first().copied());
    keep.extend(pi_v.first().copied());
    let mut out = config.clone();
    for e in 0..r.edge_count() {
        let (a, b) = r.edge(e);
        let touches = designated.contains(&probe.col_id[a]) || designated.contains(&probe.col_id[b]);
        if touches && !keep.contains(&e) {
            out.set(e, false);
        }
    }
    let gamma = circuit.vertex_set(r);
    let (rho, rho_verts) = column_path(probe, u, &gamma)?;
    for &e in &rho {
        out.set(e, true);
    }
    if let Some(v) = v {
        let targets = if case == CaseTag::A2 {
            gamma.clone()
        } else {
            let mut t = gamma.clone();
            for &w in &rho_verts {
                t.insert(w);
            }
            t
        };
        let (path, _) = column_path(probe, v, &targets)?;
        for &e in &path {
            out.set(e, true);
        }
    }
    let mut columns: Vec<[i32; 2]> = designated.iter().map(|&c| probe.column_coord(c)).collect();
    columns.sort_unstable();
    Ok(Modification {
        case,
        swapped,
        u,
        v,
        columns,
        pi_u,
        pi_v,
        config: out,
    })
}

/// Columns of `Γ̄` through which `src` attaches to `Γ` in the image: the
/// columns of `Γ` vertices in `src` or adjacent by an open edge to the
/// cluster of `src` in `Z ∖ Γ`.
fn attachment_columns(probe: &SlabProbe, states: &impl EdgeStates, ex: &mut Explorer, gamma: &VertexSet, src: &VertexSet) -> BTreeSet<u32> {
    let r = &probe.region;
    ex.search(r, states, src.iter(), |w| probe.z.contains(w) && !gamma.contains(w), |_| false);
    gamma
        .iter()
        .filter(|&g| {
            src.contains(g)
                || r
                    .neighbors(g)
                    .iter()
                    .any(|&(w, e)| ex.visited(w as usize) && states.is_open(e as usize))
        })
        .map(|g| probe.col_id[g])
        .collect()
}

/// Recovers the modified columns from the image: recompute the minimal
/// circuit, then read off where `X` (and, in case (a), `Y`) attach to it.
/// Returns `None` when the circuit changed.
pub fn reconstruct_columns(probe: &SlabProbe, image: &Configuration, case: CaseTag, swapped: bool, circuit: &CircuitData) -> Option<Vec<[i32; 2]>> {
    let r = &probe.region;
    let again = probe.finder.minimal(r, image)?;
    if again.sorted_edges() != circuit.sorted_edges() {
        return None;
    }
    let gamma = again.vertex_set(r);
    let sides = Sides::of(probe, swapped);
    let mut ex = Explorer::new(r.vertex_count());
    let mut cols = attachment_columns(probe, image, &mut ex, &gamma, sides.x);
    if matches!(case, CaseTag::A1 | CaseTag::A2) {
        cols.extend(attachment_columns(probe, image, &mut ex, &gamma, sides.y));
    }
    let mut out: Vec<[i32; 2]> = cols.iter().map(|&c| probe.column_coord(c)).collect();
    out.sort_unstable();
    Some(out)
}

/// Applies the map to one classified configuration and checks its properties.
pub fn check_modification(probe: &SlabProbe, config: &Configuration, class: &Classification) -> Result<ModificationReport> {
    let r = &probe.region;
    let m = apply_modification(probe, config, class)?;
    let diff = config.diff(&m.config);
    let touched: BTreeSet<[i32; 2]> = m.columns.iter().copied().collect();
    let local = diff.iter().all(|&e| {
        let (a, b) = r.edge(e);
        [a, b].iter().any(|&w| {
            let c = r.coord(w);
            touched.contains(&[c[0], c[1]])
        })
    });
    let target_holds = {
        let mut ex = Explorer::new(r.vertex_count());
        ex.search(r, &m.config, probe.x.iter(), |w| probe.z.contains(w), |w| probe.y.contains(w))
    };
    let reconstructed = reconstruct_columns(probe, &m.config, m.case, m.swapped, &class.circuit);
    Ok(ModificationReport {
        case: m.case,
        swapped: m.swapped,
        reconstruction_ok: reconstructed.as_ref() == Some(&m.columns),
        reconstructed: reconstructed.unwrap_or_default(),
        columns: m.columns,
        edits: diff.len(),
        d_bound: probe.d_bound(),
        d_bound_as_printed: probe.d_bound_as_printed(),
        target_holds,
        local,
        pi_u: m.pi_u,
        pi_v: m.pi_v,
    })
}

/// Result of [`verify_modification`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub region: RegionDescriptor,
    pub m: u32,
    pub p: f64,
    pub seed: u64,
    pub samples: u64,
    /// Hits per case in the order a1, a2, b1, b2.
    pub case_counts: [u64; 4],
    /// Hits that came from subevent (c).
    pub swapped: u64,
    pub passed: u64,
    pub failed: u64,
    pub max_edits: usize,
    pub d_bound: usize,
    pub reports: Vec<ModificationReport>,
    /// Text dumps of failing configurations.
    pub failures: Vec<String>,
    pub wallclock: f64,
}

impl VerificationSummary {
    pub fn hits(&self) -> u64 {
        self.case_counts.iter().sum()
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.hits() > 0
    }
}

/// Samples configurations, keeps those in the bad event, applies the map and
/// checks edit distance, image event and reconstruction on each. Stops early
/// once `target_hits` classified samples have been seen.
pub fn verify_modification(probe: &SlabProbe, p: f64, budget: u64, target_hits: Option<u64>, seed: u64, exec: &Exec) -> Result<VerificationSummary> {
    check_probability(p)?;
    let t = Instant::now();
    let r = &probe.region;
    let edges = r.edge_count();
    type Part = Vec<(u64, std::result::Result<ModificationReport, String>)>;
    let eval = |range: std::ops::Range<u64>| -> Part {
        let mut ex = Explorer::new(r.vertex_count());
        let mut out = Vec::new();
        for i in range {
            let lazy = LazyConfiguration::new(p, seed, i);
            let Some(class) = classify_with(probe, &lazy, &mut ex) else {
                continue;
            };
            let cfg = Configuration::capture(edges, &lazy);
            let res = check_modification(probe, &cfg, &class).map_err(|e| e.to_string());
            out.push((i, res));
        }
        out
    };
    let mut acc: (Vec<(u64, std::result::Result<ModificationReport, String>)>, u64) = (Vec::new(), 0);
    let target = target_hits.unwrap_or(u64::MAX);
    let samples = exec.scan_until(
        0..budget,
        eval,
        &mut acc,
        |a, part| {
            a.1 += part.len() as u64;
            a.0.extend(part);
        },
        |a| a.1 >= target,
    );
    let mut s = VerificationSummary {
        region: r.descriptor().clone(),
        m: probe.m,
        p,
        seed,
        samples,
        case_counts: [0; 4],
        swapped: 0,
        passed: 0,
        failed: 0,
        max_edits: 0,
        d_bound: probe.d_bound(),
        reports: Vec::new(),
        failures: Vec::new(),
        wallclock: 0.0,
    };
    for (i, res) in acc.0 {
        match res {
            Ok(rep) => {
                s.case_counts[rep.case as usize] += 1;
                s.swapped += rep.swapped as u64;
                s.max_edits = s.max_edits.max(rep.edits);
                if rep.passed() {
                    s.passed += 1;
                } else {
                    s.failed += 1;
                    s.failures.push(dump(probe, p, seed, i)?);
                }
                s.reports.push(rep);
            }
            Err(msg) => {
                s.failed += 1;
                s.failures.push(format!("# error: {msg}\n{}", dump(probe, p, seed, i)?));
            }
        }
    }
    s.wallclock = t.elapsed().as_secs_f64();
    if s.hits() + s.failed == 0 {
        let partial = Estimate::new(0.0, 0.0, samples, 0, seed);
        return Err(Error::Starvation {
            accepted: 0,
            samples,
            required: 1,
            partial: Box::new(partial),
        });
    }
    Ok(s)
}

fn dump(probe: &SlabProbe, p: f64, seed: u64, i: u64) -> Result<String> {
    let cfg = Configuration::capture(probe.region.edge_count(), &LazyConfiguration::new(p, seed, i));
    let mut text = format!("# p: {p}\n# seed: {seed}\n# sample_index: {i}\n");
    text.push_str(&cfg.to_text(probe.region.descriptor())?);
    Ok(text)
}

/// One `(X, Y)` pair of a constant report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmProbe {
    pub label: String,
    pub x: Vec<Coord>,
    pub y: Vec<Coord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRatio {
    pub probe: QmProbe,
    pub ratio: QmRatio,
}

/// Empirical quasi-multiplicativity constants on a slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMConstantReport {
    pub p: f64,
    pub m: u32,
    pub z: RegionDescriptor,
    pub ratios: Vec<ProbeRatio>,
    /// Minimum ratio over conclusive probes.
    pub c_star: Option<f64>,
    /// `p - p_c` when a reference critical value is supplied.
    pub delta: Option<f64>,
}

/// Estimates `P[X<->Y in Z] / (P[X<->∂Q(2m) in Z] P[Y<->∂Q(2m) in Z])` for
/// each probe, with `Z` the whole region. Requires `Z ⊇ An(m,3m)`,
/// `X ⊆ Q(m)` and `Y` outside `Q(3m)`.
#[allow(clippy::too_many_arguments)]
pub fn qm_constant_report(
    region: &Region,
    p: f64,
    m: u32,
    probes: &[QmProbe],
    budget: u64,
    seed: u64,
    p_c: Option<f64>,
    exec: &Exec,
) -> Result<QMConstantReport> {
    if !region.spec().is_slab() {
        return input("slab constants need a slab region");
    }
    if m == 0 {
        return input("scale m must be positive");
    }
    let spec = region.spec();
    let layers = match spec.family {
        Family::Slab { k } => (k as usize + 1).pow(spec.d as u32 - 2),
        _ => 1,
    };
    let side = |r: u32| (2 * r as usize + 1).pow(2);
    if region.plane_band(m, 3 * m).count() != (side(3 * m) - side(m - 1)) * layers {
        return input(format!("Z must contain An({m},{})", 3 * m));
    }
    let z = region.all_vertices();
    let s = region.plane_band(2 * m, 2 * m);
    let mut ratios = Vec::new();
    for (i, probe) in probes.iter().enumerate() {
        let x = region.set_of(probe.x.iter().map(|c| c.as_slice()))?;
        let y = region.set_of(probe.y.iter().map(|c| c.as_slice()))?;
        if x.iter().any(|v| plane_linf(region.coord(v)) > m) {
            return input(format!("probe {}: X must lie in Q({m})", probe.label));
        }
        if y.iter().any(|v| plane_linf(region.coord(v)) <= 3 * m) {
            return input(format!("probe {}: Y must lie outside Q({})", probe.label, 3 * m));
        }
        let ratio = connection_ratio(region, p, &x, &y, &s, &z, budget, crate::rng::derive_seed(seed, i as u64), exec)?;
        ratios.push(ProbeRatio {
            probe: probe.clone(),
            ratio,
        });
    }
    let c_star = ratios
        .iter()
        .filter(|r| !r.ratio.inconclusive && r.ratio.ratio.mean.is_finite())
        .map(|r| r.ratio.ratio.mean)
        .reduce(f64::min);
    Ok(QMConstantReport {
        p,
        m,
        z: region.descriptor().clone(),
        ratios,
        c_star,
        delta: p_c.map(|pc| p - pc),
    })
}

/// Positive-correlation check behind the circuit conditioning:
/// `P[A∩B | E] >= P[A] P[B]` for `A = {X<->∂Q(3m) in Z}`,
/// `B = {Y<->∂Q(2m) in Z}` and `E` the circuit event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkgReport {
    pub p: f64,
    pub samples: u64,
    pub p_a: Estimate,
    pub p_b: Estimate,
    pub p_e: Estimate,
    pub p_ab_given_e: Estimate,
    pub product: f64,
    pub product_stderr: f64,
    /// `(P[A]P[B] - P[A∩B|E])` in combined standard errors; negative is consistent.
    pub violation_sigma: f64,
}

impl FkgReport {
    pub fn consistent(&self, k_sigma: f64) -> bool {
        self.violation_sigma <= k_sigma
    }
}

pub fn fkg_check(probe: &SlabProbe, p: f64, budget: u64, seed: u64, exec: &Exec) -> Result<FkgReport> {
    check_probability(p)?;
    if budget == 0 {
        return input("budget must be positive");
    }
    let r = &probe.region;
    let outer = r.plane_band(3 * probe.m, 3 * probe.m);
    let inner = r.plane_band(2 * probe.m, 2 * probe.m);
    let parts = exec.map_chunks(0..budget, |range| {
        let mut ex = Explorer::new(r.vertex_count());
        let mut uf = WindingUnionFind::default();
        // [A, B, E, A∩B∩E]
        let mut c = [0u64; 4];
        for i in range {
            let cfg = LazyConfiguration::new(p, seed, i);
            let a = ex.search(r, &cfg, probe.x.iter(), |w| probe.z.contains(w), |w| outer.contains(w));
            let b = ex.search(r, &cfg, probe.y.iter(), |w| probe.z.contains(w), |w| inner.contains(w));
            let e = probe.finder.exists(r, &cfg, &mut uf);
            c[0] += a as u64;
            c[1] += b as u64;
            c[2] += e as u64;
            c[3] += (a && b && e) as u64;
        }
        c
    });
    let mut c = [0u64; 4];
    for part in parts {
        for k in 0..4 {
            c[k] += part[k];
        }
    }
    let est = |hits, trials| Estimate::from_tally(hits, trials, budget, seed);
    let (p_a, p_b, p_e) = (est(c[0], budget), est(c[1], budget), est(c[2], budget));
    let p_ab_given_e = est(c[3], c[2]);
    let product = p_a.mean * p_b.mean;
    let product_stderr = (p_b.mean * p_a.stderr).hypot(p_a.mean * p_b.stderr);
    let (cond, cond_se) = if c[2] > 0 { bernoulli_mean_stderr(c[3], c[2]) } else { (0.0, 0.0) };
    let scale = cond_se.hypot(product_stderr);
    let gap = product - cond;
    let violation_sigma = if scale > 0.0 {
        gap / scale
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(FkgReport {
        p,
        samples: budget,
        p_a,
        p_b,
        p_e,
        p_ab_given_e,
        product,
        product_stderr,
        violation_sigma,
    })
}
