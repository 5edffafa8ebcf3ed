//! Multi-scale cluster explorations, the exact factorization check,
//! empirical transfer matrices and Hopf contraction diagnostics.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, input, Error, Result};
use crate::estimators::{estimate_conditional, ConditionalPlan};
use crate::events::{metric_for, EventSpec, Scratch};
use crate::exec::Exec;
use crate::lattice::{Coord, LatticeSpec, Metric, Region, NONE};
use crate::oracle::{bernstein, check_cap};
use crate::percolation::{EdgeStates, Explorer, LazyConfiguration, MaskStates};
use crate::rng::{bernoulli_at, derive_seed, mix64, stream_key, RngStream};
use crate::stats::{bernoulli_mean_stderr, Estimate, Moments};

/// Scales `N_0 < N_1 < ...` around a base vertex with the measured
/// decoupling error between consecutive scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub v: Coord,
    pub scales: Vec<u32>,
    /// `eps_hat[i]`: max over the p-grid of `P[E2 | E1]` on `A(v, N_i, N_{i+1})`.
    pub eps_hat: Vec<Option<f64>>,
    pub eps_target: Vec<Option<f64>>,
}

impl ScaleSchedule {
    /// Strictly increasing scales. Separation `N_{i+1} > 4 N_i` is checked
    /// separately so that desk-size schedules can be built and reported.
    pub fn new(v: &[i32], scales: Vec<u32>) -> Result<Self> {
        if scales.is_empty() {
            return input("empty scale schedule");
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return input(format!("scales must increase strictly: {scales:?}"));
        }
        let k = scales.len() - 1;
        Ok(Self {
            v: v.to_vec(),
            scales,
            eps_hat: vec![None; k],
            eps_target: vec![None; k],
        })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn n(&self, i: usize) -> u32 {
        self.scales[i]
    }

    /// Indices `i` with `N_{i+1} <= 4 N_i`.
    pub fn separation_violations(&self) -> Vec<usize> {
        (0..self.scales.len().saturating_sub(1))
            .filter(|&i| self.scales[i + 1] <= 4 * self.scales[i])
            .collect()
    }

    pub fn is_separated(&self) -> bool {
        self.separation_violations().is_empty()
    }
}

/// A ball `B(v, radius)` with distances from `v` and shells indexed by radius.
#[derive(Debug, Clone)]
pub struct Frame {
    region: Region,
    v: Coord,
    center: usize,
    dist: Vec<u32>,
    radius: u32,
    shells: Vec<Vec<u32>>,
}

impl Frame {
    pub fn ball(spec: LatticeSpec, v: &[i32], radius: u32) -> Result<Self> {
        let region = Region::ball(spec, v, radius)?;
        let dist = region.distances_from(v, Metric::Ambient)?;
        Self::build(region, v, dist)
    }

    /// Uses the region's own metric. Balls are only as large as the region
    /// allows; callers are responsible for the containment they need.
    pub fn from_region(region: Region, v: &[i32]) -> Result<Self> {
        let dist = region.distances_from(v, metric_for(&region))?;
        Self::build(region, v, dist)
    }

    fn build(region: Region, v: &[i32], dist: Vec<u32>) -> Result<Self> {
        let center = region.require_index(v)?;
        let radius = dist.iter().copied().filter(|&d| d != NONE).max().unwrap_or(0);
        let mut shells = vec![Vec::new(); radius as usize + 1];
        for (x, &d) in dist.iter().enumerate() {
            if d != NONE {
                shells[d as usize].push(x as u32);
            }
        }
        Ok(Self {
            region,
            v: v.to_vec(),
            center,
            dist,
            radius,
            shells,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn v(&self) -> &[i32] {
        &self.v
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    #[inline]
    pub fn dist(&self, x: usize) -> u32 {
        self.dist[x]
    }

    pub fn shell(&self, r: u32) -> &[u32] {
        self.shells.get(r as usize).map_or(&[], |s| s.as_slice())
    }

    /// Vertices of `B(v, r)`, nearest shells first.
    pub fn within(&self, r: u32) -> impl Iterator<Item = usize> + '_ {
        self.shells.iter().take(r as usize + 1).flatten().map(|&x| x as usize)
    }

    fn check_radius(&self, r: u32) -> Result<()> {
        if r > self.radius {
            return input(format!("region too small: need B(v,{r}), have radius {}", self.radius));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Inner,
    Outer,
}

/// A realized exploration: `(U, R)` from inside or `(X, Y)` from outside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationRecord {
    pub kind: RecordKind,
    /// `(N_i, N_next)` for inner records, `(N_prev, N_j)` for outer ones.
    pub radii: (u32, u32),
    /// `U` or `X`, as sorted vertex indices of the frame region.
    pub cluster: Vec<u32>,
    /// `R` or `Y`, sorted.
    pub boundary: Vec<u32>,
    /// Uniqueness of the crossing cluster of the record's annulus.
    pub unique: bool,
    /// Identity of `(kind, radii, cluster, boundary, unique)`.
    pub hash: u64,
    /// `hash` refined by the states of the edges inside the cluster that
    /// are not strictly inside the inner ball; see [`RecordSampler`].
    pub fine_hash: u64,
}

fn record_hash(kind: RecordKind, radii: (u32, u32), cluster: &[u32], boundary: &[u32], unique: bool) -> u64 {
    let mut h = mix64(kind as u64 + 1);
    for x in [radii.0 as u64, radii.1 as u64, unique as u64, cluster.len() as u64] {
        h = mix64(h ^ x);
    }
    for &x in cluster.iter().chain(boundary) {
        h = mix64(h ^ x as u64);
    }
    h
}

impl ExplorationRecord {
    fn new(
        frame: &Frame,
        states: &impl EdgeStates,
        kind: RecordKind,
        radii: (u32, u32),
        cluster: Vec<u32>,
        boundary: Vec<u32>,
        unique: bool,
        in_cluster: impl Fn(usize) -> bool,
    ) -> Self {
        let hash = record_hash(kind, radii, &cluster, &boundary, unique);
        let mut fine_hash = mix64(hash ^ 0x9f1e);
        for &x in &cluster {
            let x = x as usize;
            for &(y, e) in frame.region.neighbors(x) {
                let y = y as usize;
                if y > x && in_cluster(y) && is_interior(kind, radii.0, frame.dist[x], frame.dist[y]) && states.is_open(e as usize) {
                    fine_hash = mix64(fine_hash ^ e as u64);
                }
            }
        }
        Self {
            kind,
            radii,
            cluster,
            boundary,
            unique,
            hash,
            fine_hash,
        }
    }

    pub fn membership(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &x in &self.cluster {
            m[x as usize] = true;
        }
        m
    }
}

/// Edges inside an inner cluster that its record depends on: all but those
/// strictly inside `B(v, N_i)`. Every edge inside an outer cluster counts.
fn is_interior(kind: RecordKind, a: u32, dx: u32, dy: u32) -> bool {
    kind == RecordKind::Outer || dx.max(dy) > a || (dx == a && dy == a)
}

/// Two explorers, so crossing counts can run while a cluster is still marked.
#[derive(Debug, Default)]
pub struct FrameScratch {
    ex: Explorer,
    aux: Explorer,
}

impl FrameScratch {
    pub fn new(frame: &Frame) -> Self {
        let n = frame.region.vertex_count();
        Self {
            ex: Explorer::new(n),
            aux: Explorer::new(n),
        }
    }
}

/// Crossing clusters of `A(v,a,b)`, counted up to 2.
fn crossing_count(frame: &Frame, states: &impl EdgeStates, a: u32, b: u32, ex: &mut Explorer) -> usize {
    let dist = &frame.dist;
    ex.begin(frame.region.vertex_count());
    let mut count = 0;
    for &s in frame.shell(a) {
        let s = s as usize;
        if ex.visited(s) {
            continue;
        }
        let mut hit = false;
        ex.extend(
            &frame.region,
            states,
            [s],
            |x| dist[x] >= a && dist[x] <= b,
            |x| {
                hit |= dist[x] == b;
                false
            },
        );
        if hit {
            count += 1;
            if count == 2 {
                break;
            }
        }
    }
    count
}

pub fn explore_inner(frame: &Frame, states: &impl EdgeStates, n_i: u32, n_next: u32) -> Result<ExplorationRecord> {
    explore_inner_with(frame, states, n_i, n_next, &mut FrameScratch::new(frame))
}

/// `U = {x in B(v,N_next) : x <-> B(v,N_i) in B(v,N_next)}`,
/// `R = {y in S(v,N_next+1) : y has an open edge to U}`.
pub fn explore_inner_with(
    frame: &Frame,
    states: &impl EdgeStates,
    n_i: u32,
    n_next: u32,
    scratch: &mut FrameScratch,
) -> Result<ExplorationRecord> {
    if n_next <= n_i {
        return input(format!("need N_next > N_i, got {n_next} <= {n_i}"));
    }
    frame.check_radius(n_next + 1)?;
    let (region, dist) = (&frame.region, &frame.dist);
    let mut cluster = Vec::new();
    scratch.ex.search(
        region,
        states,
        frame.within(n_i),
        |x| dist[x] <= n_next,
        |x| {
            cluster.push(x as u32);
            false
        },
    );
    cluster.sort_unstable();
    let ex = &scratch.ex;
    let boundary: Vec<u32> = frame
        .shell(n_next + 1)
        .iter()
        .copied()
        .filter(|&y| {
            region
                .neighbors(y as usize)
                .iter()
                .any(|&(x, e)| dist[x as usize] <= n_next && ex.visited(x as usize) && states.is_open(e as usize))
        })
        .collect();
    let unique = crossing_count(frame, states, n_i, n_next, &mut scratch.aux) == 1;
    Ok(ExplorationRecord::new(
        frame,
        states,
        RecordKind::Inner,
        (n_i, n_next),
        cluster,
        boundary,
        unique,
        |y| dist[y] <= n_next && ex.visited(y),
    ))
}

pub fn explore_outer(frame: &Frame, states: &impl EdgeStates, n_prev: u32, n_j: u32) -> Result<ExplorationRecord> {
    explore_outer_with(frame, states, n_prev, n_j, &mut FrameScratch::new(frame))
}

/// `X = {x in A(v,N_prev,N_j) : x <-> S(v,N_j) in A(v,N_prev,N_j)}`,
/// `Y = {y in S(v,N_prev-1) : y has an open edge to X}`.
pub fn explore_outer_with(
    frame: &Frame,
    states: &impl EdgeStates,
    n_prev: u32,
    n_j: u32,
    scratch: &mut FrameScratch,
) -> Result<ExplorationRecord> {
    if n_prev == 0 || n_j <= n_prev {
        return input(format!("need 1 <= N_prev < N_j, got {n_prev}, {n_j}"));
    }
    frame.check_radius(n_j)?;
    let (region, dist) = (&frame.region, &frame.dist);
    let mut cluster = Vec::new();
    scratch.ex.search(
        region,
        states,
        frame.shell(n_j).iter().map(|&x| x as usize),
        |x| dist[x] >= n_prev && dist[x] <= n_j,
        |x| {
            cluster.push(x as u32);
            false
        },
    );
    cluster.sort_unstable();
    let ex = &scratch.ex;
    let boundary: Vec<u32> = frame
        .shell(n_prev - 1)
        .iter()
        .copied()
        .filter(|&y| {
            region
                .neighbors(y as usize)
                .iter()
                .any(|&(x, e)| dist[x as usize] >= n_prev && ex.visited(x as usize) && states.is_open(e as usize))
        })
        .collect();
    let unique = crossing_count(frame, states, n_prev, n_j, &mut scratch.aux) == 1;
    Ok(ExplorationRecord::new(
        frame,
        states,
        RecordKind::Outer,
        (n_prev, n_j),
        cluster,
        boundary,
        unique,
        |y| dist[y] >= n_prev && dist[y] <= n_j && ex.visited(y),
    ))
}

/// One p-grid point of a scale search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: f64,
    pub n: u32,
    /// `P[E2 | E1]`; `None` when the point was skipped.
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleChoice {
    pub m: u32,
    pub n: u32,
    pub eps_target: f64,
    /// Max over evaluated grid points of the estimated conditional probability.
    pub eps_hat: Option<f64>,
    /// Max over evaluated grid points of mean + 2 stderr.
    pub bound: Option<f64>,
    /// `(n, bound)` for every tested candidate.
    pub tested: Vec<(u32, Option<f64>)>,
    pub grid: Vec<GridPoint>,
    pub warnings: Vec<String>,
}

/// Candidates `4m+1, 8m, 16m, ...` up to `max_n`.
pub fn scale_candidates(m: u32, max_n: u32) -> Vec<u32> {
    let mut out = vec![4 * m + 1];
    let mut n = 8 * m.max(1);
    while n <= max_n {
        if n > out[out.len() - 1] {
            out.push(n);
        }
        n *= 2;
    }
    out.retain(|&n| n <= max_n);
    out
}

/// Smallest candidate `n > 4m` with `max_p P[E2(v,m,n) | E1(v,m,n)] + 2 stderr < eps_target`.
/// `budget` is the sample count per grid point.
#[allow(clippy::too_many_arguments)]
pub fn choose_scales(
    spec: LatticeSpec,
    v: &[i32],
    m: u32,
    eps_target: f64,
    p_grid: &[f64],
    budget: u64,
    max_n: u32,
    seed: u64,
    exec: &Exec,
) -> Result<ScaleChoice> {
    if !(eps_target > 0.0 && eps_target <= 1.0) {
        return input(format!("target {eps_target} outside (0,1]"));
    }
    if m == 0 {
        return input("scale search needs m >= 1");
    }
    for &p in p_grid {
        check_probability(p)?;
    }
    let candidates = scale_candidates(m, max_n);
    if candidates.is_empty() {
        return input(format!("max_n = {max_n} leaves no candidate above 4m = {}", 4 * m));
    }
    let mut choice = ScaleChoice {
        m,
        n: candidates[0],
        eps_target,
        eps_hat: None,
        bound: None,
        tested: Vec::new(),
        grid: Vec::new(),
        warnings: Vec::new(),
    };
    if eps_target >= 1.0 {
        choice.warnings.push("target 1 is vacuous; no sampling done".into());
        return Ok(choice);
    }
    let (e1, e2) = (EventSpec::e1(v, m, m), EventSpec::e2(v, m, m));
    let mut best: Option<(u32, f64)> = None;
    for &n in &candidates {
        let region = Region::ball(spec, v, n)?;
        let (e1, e2) = (retarget(&e1, n), retarget(&e2, n));
        let mut grid = Vec::new();
        let mut warnings = Vec::new();
        for (k, &p) in p_grid.iter().enumerate() {
            let s = derive_seed(seed, (n as u64) << 16 | k as u64);
            match estimate_conditional(&region, p, &e2, &e1, &ConditionalPlan::fixed(budget), s, exec) {
                Ok(est) => grid.push(GridPoint { p, n, estimate: Some(est) }),
                Err(Error::Starvation { accepted, samples, .. }) => {
                    warnings.push(format!(
                        "n={n}, p={p}: P[E1] too small ({accepted} of {samples} accepted); grid point skipped"
                    ));
                    grid.push(GridPoint { p, n, estimate: None });
                }
                Err(e) => return Err(e),
            }
        }
        let evaluated: Vec<&Estimate> = grid.iter().filter_map(|g| g.estimate.as_ref()).collect();
        let bound = evaluated.iter().map(|e| e.mean + 2.0 * e.stderr).fold(None, |a: Option<f64>, b| {
            Some(a.map_or(b, |a| a.max(b)))
        });
        let eps_hat = evaluated.iter().map(|e| e.mean).fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))));
        choice.tested.push((n, bound));
        choice.warnings.extend(warnings);
        if bound.unwrap_or(0.0) < eps_target {
            if evaluated.is_empty() {
                choice.warnings.push(format!("n={n}: no grid point evaluated; criterion vacuous"));
            }
            choice.n = n;
            choice.eps_hat = eps_hat;
            choice.bound = bound;
            choice.grid = grid;
            return Ok(choice);
        }
        let b = bound.unwrap_or(f64::INFINITY);
        if best.is_none_or(|(_, bb)| b < bb) {
            best = Some((n, b));
        }
    }
    let (best_n, best_bound) = best.unwrap_or((candidates[0], f64::NAN));
    Err(Error::ScaleSearchFailed {
        best_n,
        best_bound,
        target: eps_target,
    })
}

fn retarget(event: &EventSpec, n_new: u32) -> EventSpec {
    match event {
        EventSpec::E1 { center, m, z, .. } => EventSpec::E1 {
            center: center.clone(),
            m: *m,
            n: n_new,
            z: z.clone(),
        },
        EventSpec::E2 { center, m, .. } => EventSpec::e2(center, *m, n_new),
        other => other.clone(),
    }
}

/// Schedule `N_0 = n0` and one scale per target, each chosen by [`choose_scales`].
#[allow(clippy::too_many_arguments)]
pub fn build_schedule(
    spec: LatticeSpec,
    v: &[i32],
    n0: u32,
    targets: &[f64],
    p_grid: &[f64],
    budget: u64,
    max_n: u32,
    seed: u64,
    exec: &Exec,
) -> Result<(ScaleSchedule, Vec<ScaleChoice>)> {
    let mut scales = vec![n0];
    let mut choices = Vec::new();
    for (i, &eps) in targets.iter().enumerate() {
        let c = choose_scales(spec, v, scales[i], eps, p_grid, budget, max_n, derive_seed(seed, i as u64), exec)?;
        scales.push(c.n);
        choices.push(c);
    }
    let mut schedule = ScaleSchedule::new(v, scales)?;
    for (i, c) in choices.iter().enumerate() {
        schedule.eps_hat[i] = c.eps_hat;
        schedule.eps_target[i] = Some(c.eps_target);
    }
    Ok((schedule, choices))
}

/// Default p-grid of the exact factorization check.
pub const FACTORIZATION_GRID: [f64; 3] = [0.2, 0.5, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationPoint {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub points: Vec<FactorizationPoint>,
    pub max_abs_deviation: f64,
    /// Distinct `(U, R)` contributing to the right-hand side.
    pub records: usize,
    pub edges: usize,
}

type RecordKey = (u64, u64);

fn bitmask(xs: &[u32]) -> u64 {
    xs.iter().fold(0u64, |m, &x| m | 1 << x)
}

/// Exact check, by enumeration, of
/// `P[E, w <-> S(w,n), F_i] = sum_{(U,R)} P[E, w <-> S_next, F_i(U,R)] P[R <-> S(w,n) in B(w,n) \ U]`
/// with `F_i` the uniqueness event of `A(v, N_i, N_next)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_factorization_exact(
    region: &Region,
    v: &[i32],
    w: &[i32],
    n_i: u32,
    n_next: u32,
    n: u32,
    event: &EventSpec,
    p_grid: &[f64],
) -> Result<FactorizationReport> {
    let m = region.edge_count();
    check_cap(m)?;
    if region.vertex_count() > 64 {
        return input("factorization check needs at most 64 vertices");
    }
    for &p in p_grid {
        check_probability(p)?;
    }
    let frame = Frame::from_region(region.clone(), v)?;
    let wi = region.require_index(w)?;
    let dist_w = region.distances_from(w, metric_for(region))?;
    let compiled = event.compile(region)?;
    let nv = region.vertex_count();

    let total = 1u64 << m;
    let chunk = (total / 256).max(1 << 10);
    let parts: Vec<Result<(Vec<u64>, HashMap<RecordKey, Vec<u64>>)>> = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut fs = FrameScratch::new(&frame);
            let mut scratch = Scratch::new(region);
            let mut ex = Explorer::new(nv);
            let mut lhs = vec![0u64; m + 1];
            let mut map: HashMap<RecordKey, Vec<u64>> = HashMap::new();
            for mask in c * chunk..((c + 1) * chunk).min(total) {
                let s = MaskStates(mask);
                let rec = explore_inner_with(&frame, &s, n_i, n_next, &mut fs)?;
                if !rec.unique || !compiled.holds(&s, &mut scratch) {
                    continue;
                }
                let k = mask.count_ones() as usize;
                if ex.search(region, &s, [wi], |x| dist_w[x] <= n, |x| dist_w[x] == n) {
                    lhs[k] += 1;
                }
                if ex.search(region, &s, [wi], |x| frame.dist(x) <= n_next, |x| frame.dist(x) == n_next) {
                    map.entry((bitmask(&rec.cluster), bitmask(&rec.boundary)))
                        .or_insert_with(|| vec![0; m + 1])[k] += 1;
                }
            }
            Ok((lhs, map))
        })
        .collect();
    let mut lhs = vec![0u64; m + 1];
    let mut records: HashMap<RecordKey, Vec<u64>> = HashMap::new();
    for part in parts {
        let (l, map) = part?;
        lhs.iter_mut().zip(l).for_each(|(a, b)| *a += b);
        for (key, counts) in map {
            let slot = records.entry(key).or_insert_with(|| vec![0; m + 1]);
            slot.iter_mut().zip(counts).for_each(|(a, b)| *a += b);
        }
    }

    let mut keys: Vec<RecordKey> = records.keys().copied().collect();
    keys.sort_unstable();
    // Polynomial of P[R <-> S(w,n) in B(w,n) \ U] over the edges inside B(w,n) \ U.
    let gammas: Vec<Result<Vec<u64>>> = keys
        .par_iter()
        .map(|&(u, r)| {
            let inside = |x: usize| dist_w[x] <= n && u >> x & 1 == 0;
            let local: Vec<usize> = (0..m)
                .filter(|&e| {
                    let (a, b) = region.edge(e);
                    inside(a) && inside(b)
                })
                .collect();
            check_cap(local.len())?;
            let sources: Vec<usize> = (0..nv).filter(|&x| r >> x & 1 == 1).collect();
            let mut ex = Explorer::new(nv);
            let mut counts = vec![0u64; local.len() + 1];
            for sub in 0u64..1 << local.len() {
                let full = local
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &e)| acc | (sub >> i & 1) << e);
                if ex.search(region, &MaskStates(full), sources.iter().copied(), inside, |x| dist_w[x] == n) {
                    counts[sub.count_ones() as usize] += 1;
                }
            }
            Ok(counts)
        })
        .collect();
    let gammas = gammas.into_iter().collect::<Result<Vec<_>>>()?;

    let points: Vec<FactorizationPoint> = p_grid
        .iter()
        .map(|&p| FactorizationPoint {
            p,
            lhs: bernstein(&lhs, p),
            rhs: keys
                .iter()
                .zip(&gammas)
                .map(|(k, g)| bernstein(&records[k], p) * bernstein(g, p))
                .sum(),
        })
        .collect();
    let max_abs_deviation = points.iter().map(|q| (q.lhs - q.rhs).abs()).fold(0.0, f64::max);
    Ok(FactorizationReport {
        points,
        max_abs_deviation,
        records: keys.len(),
        edges: m,
    })
}

/// Budgets and truncation for transfer-matrix estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub top_k: usize,
    /// First-pass samples at the first scale of a chain.
    pub row_budget: u64,
    /// First-pass samples at every later scale.
    pub column_budget: u64,
    /// Conditional draws per retained record.
    pub sweeps: usize,
    /// Parametric bootstrap replicates for oscillation errors.
    pub bootstrap: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            top_k: 8,
            row_budget: 100_000,
            column_budget: 4_000,
            sweeps: 400,
            bootstrap: 200,
        }
    }
}

impl TransferConfig {
    fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.row_budget == 0 || self.column_budget == 0 || self.sweeps < 2 {
            return input("top_k, budgets and sweeps must be positive (sweeps >= 2)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    /// Refined record identity.
    pub hash: u64,
    /// Identity of `(U, R)` alone.
    pub coarse_hash: u64,
    pub count: u64,
    pub probability: f64,
    pub probability_stderr: f64,
    pub cluster_size: usize,
    pub boundary_size: usize,
    /// First-pass sample in which the record was first seen.
    pub sample_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub scale: usize,
    pub radii: (u32, u32),
    pub seed: u64,
    pub samples: u64,
    /// Distinct refined records with a unique crossing and nonempty boundary.
    pub distinct: usize,
    /// Fraction of samples yielding such a record.
    pub valid_mass: f64,
    /// Fraction of samples yielding a retained record.
    pub retained_mass: f64,
}

#[derive(Debug, Clone)]
struct RecordPool {
    summary: PoolSummary,
    records: Vec<(ExplorationRecord, RecordSummary)>,
}

#[allow(clippy::too_many_arguments)]
fn collect_records(
    frame: &Frame,
    p: f64,
    seed: u64,
    scale: usize,
    radii: (u32, u32),
    budget: u64,
    top_k: usize,
    exec: &Exec,
) -> Result<RecordPool> {
    let (a, b) = radii;
    if b <= a {
        return input(format!("need N_next > N_i, got {b} <= {a}"));
    }
    frame.check_radius(b + 1)?;
    let parts = exec.map_chunks(0..budget, |range| {
        let mut scratch = FrameScratch::new(frame);
        let mut map: HashMap<u64, (u64, u64)> = HashMap::new();
        for i in range {
            let cfg = LazyConfiguration::new(p, seed, i);
            let rec = explore_inner_with(frame, &cfg, a, b, &mut scratch).expect("radius checked");
            if rec.unique && !rec.boundary.is_empty() {
                map.entry(rec.fine_hash).or_insert((0, i)).0 += 1;
            }
        }
        map
    });
    let mut all: HashMap<u64, (u64, u64)> = HashMap::new();
    for part in parts {
        for (h, (c, i)) in part {
            let slot = all.entry(h).or_insert((0, i));
            slot.0 += c;
            slot.1 = slot.1.min(i);
        }
    }
    let valid: u64 = all.values().map(|v| v.0).sum();
    let distinct = all.len();
    let mut ranked: Vec<(u64, u64, u64)> = all.into_iter().map(|(h, (c, i))| (h, c, i)).collect();
    ranked.sort_unstable_by_key(|&(h, c, _)| (Reverse(c), h));
    ranked.truncate(top_k);
    let mut scratch = FrameScratch::new(frame);
    let mut records = Vec::new();
    let mut retained = 0;
    for (h, c, i) in ranked {
        let rec = explore_inner_with(frame, &LazyConfiguration::new(p, seed, i), a, b, &mut scratch)?;
        if rec.fine_hash != h {
            return Err(Error::Invariant("record changed on re-exploration".into()));
        }
        let (prob, se) = bernoulli_mean_stderr(c, budget);
        retained += c;
        let summary = RecordSummary {
            hash: h,
            coarse_hash: rec.hash,
            count: c,
            probability: prob,
            probability_stderr: se,
            cluster_size: rec.cluster.len(),
            boundary_size: rec.boundary.len(),
            sample_index: i,
        };
        records.push((rec, summary));
    }
    Ok(RecordPool {
        summary: PoolSummary {
            scale,
            radii,
            seed,
            samples: budget,
            distinct,
            valid_mass: valid as f64 / budget as f64,
            retained_mass: retained as f64 / budget as f64,
        },
        records,
    })
}

const CLOSED: u8 = 0;
const OPEN: u8 = 1;
const FREE: u8 = 2;
const GROUP: u8 = 3;

/// Exact sampler of the configuration conditioned on one refined inner
/// record: `(U, R)`, its uniqueness event, and the states of the edges
/// inside `U` outside the open ball `B(v, N_i)`.
///
/// Given the refined record the remaining edges are independent: edges from
/// `U` to the rest of `B(v, N_next)` are closed, each `y` in
/// `S(v, N_next + 1)` has its edges to `U` drawn conditioned on at least one
/// being open iff `y` is in `R`, and every other edge is a fresh Bernoulli
/// draw. Free edges are read lazily from a per-sweep counter stream, so a
/// sweep costs only what its observations touch.
struct RecordSampler<'f> {
    frame: &'f Frame,
    p: f64,
    class: Vec<u8>,
    groups: Vec<Vec<u32>>,
    group_state: Vec<bool>,
    seed: u64,
    sweep: u64,
    rng: RngStream,
}

/// Edge states of one sweep.
struct SweepStates<'a> {
    class: &'a [u8],
    group_state: &'a [bool],
    key: u64,
    p: f64,
}

impl EdgeStates for SweepStates<'_> {
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        match self.class[e] {
            CLOSED => false,
            OPEN => true,
            FREE => bernoulli_at(self.key, e as u64, self.p),
            _ => self.group_state[e],
        }
    }
}

impl<'f> RecordSampler<'f> {
    fn new(frame: &'f Frame, rec: &ExplorationRecord, p: f64, start: &impl EdgeStates, seed: u64) -> Result<Self> {
        let (a, b) = rec.radii;
        frame.check_radius(b + 1)?;
        if rec.kind != RecordKind::Inner || !rec.unique || rec.boundary.is_empty() || p <= 0.0 {
            return input("conditioning needs an inner unique-crossing record with nonempty boundary");
        }
        let region = &frame.region;
        let in_u = rec.membership(region.vertex_count());
        let mut in_r = vec![false; region.vertex_count()];
        for &y in &rec.boundary {
            in_r[y as usize] = true;
        }
        let mut class = vec![FREE; region.edge_count()];
        let mut group_of: HashMap<usize, usize> = HashMap::new();
        let mut groups: Vec<Vec<u32>> = Vec::new();
        for (e, slot) in class.iter_mut().enumerate() {
            let (x, y) = region.edge(e);
            let (dx, dy) = (frame.dist[x], frame.dist[y]);
            if dx.max(dy) > b + 1 {
                continue;
            }
            match (in_u[x], in_u[y]) {
                (false, false) => {}
                (true, true) => {
                    if is_interior(RecordKind::Inner, a, dx, dy) {
                        *slot = if start.is_open(e) { OPEN } else { CLOSED };
                    }
                }
                _ => {
                    let out = if in_u[x] { y } else { x };
                    if frame.dist[out] <= b || !in_r[out] {
                        if start.is_open(e) {
                            return Err(Error::Invariant("start state violates its record".into()));
                        }
                        *slot = CLOSED;
                    } else {
                        *slot = GROUP;
                        let next = groups.len();
                        let g = *group_of.entry(out).or_insert(next);
                        if g == groups.len() {
                            groups.push(Vec::new());
                        }
                        groups[g].push(e as u32);
                    }
                }
            }
        }
        Ok(Self {
            frame,
            p,
            class,
            groups,
            group_state: vec![false; region.edge_count()],
            seed,
            sweep: 0,
            rng: RngStream::new(seed, u64::MAX),
        })
    }

    fn next(&mut self) -> SweepStates<'_> {
        for g in &self.groups {
            loop {
                let mut any = false;
                for &e in g {
                    let o = self.rng.bernoulli(self.p);
                    self.group_state[e as usize] = o;
                    any |= o;
                }
                if any {
                    break;
                }
            }
        }
        let key = stream_key(self.seed, self.sweep);
        self.sweep += 1;
        SweepStates {
            class: &self.class,
            group_state: &self.group_state,
            key,
            p: self.p,
        }
    }
}

/// Runs `sweeps` independent draws and returns one series per statistic.
fn run_sampler<F>(mut sampler: RecordSampler<'_>, sweeps: usize, stats: usize, mut observe: F) -> Vec<Vec<f64>>
where
    F: FnMut(&SweepStates<'_>, &mut Explorer, &mut [f64]),
{
    let mut probe = Explorer::new(sampler.frame.region.vertex_count());
    let mut series = vec![Vec::with_capacity(sweeps); stats];
    let mut buf = vec![0.0; stats];
    for _ in 0..sweeps {
        let states = sampler.next();
        observe(&states, &mut probe, &mut buf);
        for (s, &x) in series.iter_mut().zip(&buf) {
            s.push(x);
        }
    }
    series
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let hits = xs.iter().filter(|&&x| x > 0.0).count() as u64;
    bernoulli_mean_stderr(hits, xs.len() as u64)
}

/// Empirical `M_p` between retained records at two scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub p: f64,
    pub seed: u64,
    pub scales: (usize, usize),
    pub radii: (u32, u32),
    pub rows: Vec<RecordSummary>,
    pub cols: Vec<RecordSummary>,
    /// `P[R <-> S_{j+1} in B_{j+1} \ U, F_{j-1} | refined column record]`.
    pub conditional: Vec<Vec<f64>>,
    pub conditional_stderr: Vec<Vec<f64>>,
    /// `conditional` times the column record's probability.
    pub entries: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Entries with no hit in any sweep.
    pub zero_entries: Vec<(usize, usize)>,
    /// `u'` (with the event `E`) and `u''` (without) over the rows; filled on
    /// the first matrix of a chain.
    pub u_prime: Vec<f64>,
    pub u_prime_stderr: Vec<f64>,
    pub u_second: Vec<f64>,
    pub u_second_stderr: Vec<f64>,
    /// `u'` and `u''` before multiplying by the row record probabilities.
    pub u_prime_conditional: Vec<f64>,
    pub u_prime_conditional_stderr: Vec<f64>,
    pub u_second_conditional: Vec<f64>,
    pub u_second_conditional_stderr: Vec<f64>,
    pub row_pool: PoolSummary,
    pub col_pool: PoolSummary,
    pub config: TransferConfig,
    pub wallclock: f64,
}

impl TransferMatrix {
    pub fn all_positive(&self) -> bool {
        !self.entries.is_empty() && self.zero_entries.is_empty() && self.entries.iter().flatten().all(|&x| x > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferChain {
    pub schedule: ScaleSchedule,
    pub indices: Vec<usize>,
    pub event: EventSpec,
    pub matrices: Vec<TransferMatrix>,
}

fn product_stderr(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    (a * sb).hypot(b * sa)
}

/// Transfer matrices between consecutive scale indices of `indices`, each
/// step needing `j > i + 2`. The boundary vectors use the event `event`
/// (supported in `B(v, N_{indices[0]})`) and the connection `v <-> S_{i+1}`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_transfer_chain(
    spec: LatticeSpec,
    schedule: &ScaleSchedule,
    indices: &[usize],
    p: f64,
    event: &EventSpec,
    cfg: &TransferConfig,
    seed: u64,
    exec: &Exec,
) -> Result<TransferChain> {
    check_probability(p)?;
    cfg.validate()?;
    if indices.len() < 2 {
        return input("a chain needs at least two scale indices");
    }
    if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0] + 2) {
        return input(format!("need j > i + 2 between chained scales, got i={}, j={}", w[0], w[1]));
    }
    let last = *indices.last().unwrap();
    if last + 1 >= schedule.len() {
        return input(format!("scale index {} needs N_{} in the schedule", last, last + 1));
    }
    let t0 = Instant::now();
    let frame = Frame::ball(spec, &schedule.v, schedule.n(last + 1) + 1)?;
    let region = frame.region();
    let compiled = event.compile(region)?;

    let pools: Vec<RecordPool> = indices
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let budget = if k == 0 { cfg.row_budget } else { cfg.column_budget };
            collect_records(
                &frame,
                p,
                derive_seed(seed, t as u64),
                t,
                (schedule.n(t), schedule.n(t + 1)),
                budget,
                cfg.top_k,
                exec,
            )
        })
        .collect::<Result<_>>()?;

    let sampler_for = |pool: &RecordPool, r: usize| -> Result<RecordSampler<'_>> {
        let (rec, sum) = &pool.records[r];
        let start = LazyConfiguration::new(p, pool.summary.seed, sum.sample_index);
        let key = stream_key(derive_seed(seed, 0x5a30_0000 + pool.summary.scale as u64), r as u64);
        RecordSampler::new(&frame, rec, p, &start, key)
    };

    // Boundary vectors at the first scale.
    let first = &pools[0];
    let (b0, center) = (first.summary.radii.1, frame.center());
    let boundary: Vec<Result<Vec<Vec<f64>>>> = exec.install(|| {
        (0..first.records.len())
            .into_par_iter()
            .map(|r| {
                let sampler = sampler_for(first, r)?;
                let mut scratch = Scratch::new(region);
                Ok(run_sampler(sampler, cfg.sweeps, 2, |state, ex, out| {
                    let conn = ex.search(region, state, [center], |x| frame.dist(x) <= b0, |x| frame.dist(x) == b0);
                    out[0] = (conn && compiled.holds(state, &mut scratch)) as u8 as f64;
                    out[1] = conn as u8 as f64;
                }))
            })
            .collect()
    });
    let boundary = boundary.into_iter().collect::<Result<Vec<_>>>()?;

    let mut matrices = Vec::new();
    for k in 0..indices.len() - 1 {
        let (rows, cols) = (&pools[k], &pools[k + 1]);
        let j = indices[k + 1];
        let (prev, nj, top) = (schedule.n(j - 1), schedule.n(j), schedule.n(j + 1));
        let members: Vec<Vec<bool>> = rows.records.iter().map(|(r, _)| r.membership(region.vertex_count())).collect();
        let columns: Vec<Result<Vec<Vec<f64>>>> = exec.install(|| {
            (0..cols.records.len())
                .into_par_iter()
                .map(|c| {
                    let sampler = sampler_for(cols, c)?;
                    let mut aux = Explorer::new(region.vertex_count());
                    Ok(run_sampler(sampler, cfg.sweeps, rows.records.len(), |state, ex, out| {
                        let f = crossing_count(&frame, state, prev, nj, &mut aux) == 1;
                        for (r, (rec, _)) in rows.records.iter().enumerate() {
                            let inside = &members[r];
                            out[r] = (f && ex.search(
                                region,
                                state,
                                rec.boundary.iter().map(|&y| y as usize),
                                |x| frame.dist(x) <= top && !inside[x],
                                |x| frame.dist(x) == top,
                            )) as u8 as f64;
                        }
                    }))
                })
                .collect()
        });
        let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
        let (nr, nc) = (rows.records.len(), cols.records.len());
        let mut m = TransferMatrix {
            p,
            seed,
            scales: (indices[k], j),
            radii: (schedule.n(indices[k]), nj),
            rows: rows.records.iter().map(|(_, s)| s.clone()).collect(),
            cols: cols.records.iter().map(|(_, s)| s.clone()).collect(),
            conditional: vec![vec![0.0; nc]; nr],
            conditional_stderr: vec![vec![0.0; nc]; nr],
            entries: vec![vec![0.0; nc]; nr],
            stderr: vec![vec![0.0; nc]; nr],
            zero_entries: Vec::new(),
            u_prime: Vec::new(),
            u_prime_stderr: Vec::new(),
            u_second: Vec::new(),
            u_second_stderr: Vec::new(),
            u_prime_conditional: Vec::new(),
            u_prime_conditional_stderr: Vec::new(),
            u_second_conditional: Vec::new(),
            u_second_conditional_stderr: Vec::new(),
            row_pool: rows.summary.clone(),
            col_pool: cols.summary.clone(),
            config: cfg.clone(),
            wallclock: 0.0,
        };
        for (c, series) in columns.iter().enumerate() {
            let col = &cols.records[c].1;
            for r in 0..nr {
                let (mean, se) = mean_and_stderr(&series[r]);
                m.conditional[r][c] = mean;
                m.conditional_stderr[r][c] = se;
                m.entries[r][c] = mean * col.probability;
                m.stderr[r][c] = product_stderr(mean, se, col.probability, col.probability_stderr);
                if mean == 0.0 {
                    m.zero_entries.push((r, c));
                }
            }
        }
        if k == 0 {
            for (r, series) in boundary.iter().enumerate() {
                let row = &rows.records[r].1;
                let (a, sa) = mean_and_stderr(&series[0]);
                let (b, sb) = mean_and_stderr(&series[1]);
                m.u_prime.push(a * row.probability);
                m.u_prime_stderr.push(product_stderr(a, sa, row.probability, row.probability_stderr));
                m.u_second.push(b * row.probability);
                m.u_second_stderr.push(product_stderr(b, sb, row.probability, row.probability_stderr));
                m.u_prime_conditional.push(a);
                m.u_prime_conditional_stderr.push(sa);
                m.u_second_conditional.push(b);
                m.u_second_conditional_stderr.push(sb);
            }
        }
        m.zero_entries.sort_unstable();
        matrices.push(m);
    }
    let secs = t0.elapsed().as_secs_f64();
    for m in &mut matrices {
        m.wallclock = secs;
    }
    Ok(TransferChain {
        schedule: schedule.clone(),
        indices: indices.to_vec(),
        event: event.clone(),
        matrices,
    })
}

/// Single matrix between scale indices `i` and `j`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_transfer_matrix(
    spec: LatticeSpec,
    schedule: &ScaleSchedule,
    i: usize,
    j: usize,
    p: f64,
    event: &EventSpec,
    cfg: &TransferConfig,
    seed: u64,
    exec: &Exec,
) -> Result<TransferMatrix> {
    let mut chain = estimate_transfer_chain(spec, schedule, &[i, j], p, event, cfg, seed, exec)?;
    Ok(chain.matrices.remove(0))
}

/// Cross ratios, contraction factor and oscillation of the boundary ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    /// Largest oriented cross ratio over all matrices.
    pub kappa_sq: f64,
    pub kappa: f64,
    /// `(kappa - 1) / (kappa + 1)`.
    pub contraction: f64,
    pub per_matrix_kappa_sq: Vec<f64>,
    /// `osc` of `(u' M_1 ... M_s) / (u'' M_1 ... M_s)` for `s = 0, 1, ...`.
    pub osc: Vec<f64>,
    pub osc_stderr: Vec<f64>,
    pub osc_nonincreasing: bool,
    /// Terminal ratio `sum(u' M...) / sum(u'' M...)`.
    pub xi_hat: Option<f64>,
    pub xi_stderr: Option<f64>,
    pub c_star: Option<f64>,
}

/// `max max(x, 1/x)` with `x = M_ac M_bd / (M_ad M_bc)` over row pairs `a<b`
/// and column pairs `c<d`.
pub fn max_cross_ratio(entries: &[Vec<f64>]) -> Result<f64> {
    if entries.iter().flatten().any(|&x| !(x > 0.0)) {
        return input("cross ratios need strictly positive entries");
    }
    let mut best: f64 = 1.0;
    for a in 0..entries.len() {
        for b in a + 1..entries.len() {
            let (ra, rb) = (&entries[a], &entries[b]);
            for c in 0..ra.len() {
                for d in c + 1..ra.len() {
                    let x = ra[c] * rb[d] / (ra[d] * rb[c]);
                    best = best.max(x.max(1.0 / x));
                }
            }
        }
    }
    Ok(best)
}

fn contraction_of(kappa_sq: f64) -> (f64, f64) {
    let kappa = kappa_sq.sqrt();
    (kappa, (kappa - 1.0) / (kappa + 1.0))
}

/// Report for one matrix without boundary vectors.
pub fn hopf_of_entries(entries: &[Vec<f64>]) -> Result<HopfReport> {
    let kappa_sq = max_cross_ratio(entries)?;
    let (kappa, contraction) = contraction_of(kappa_sq);
    Ok(HopfReport {
        kappa_sq,
        kappa,
        contraction,
        per_matrix_kappa_sq: vec![kappa_sq],
        osc: Vec::new(),
        osc_stderr: Vec::new(),
        osc_nonincreasing: true,
        xi_hat: None,
        xi_stderr: None,
        c_star: None,
    })
}

/// `max_c a_c/b_c / min_c a_c/b_c`.
pub fn oscillation(a: &[f64], b: &[f64]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let r = x / y;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    hi / lo
}

fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let cols = m.first().map_or(0, |r| r.len());
    (0..cols).map(|c| v.iter().zip(m).map(|(x, row)| x * row[c]).sum()).collect()
}

fn osc_sequence(u1: &[f64], u2: &[f64], mats: &[&[Vec<f64>]]) -> (Vec<f64>, f64) {
    let (mut a, mut b) = (u1.to_vec(), u2.to_vec());
    let mut osc = vec![oscillation(&a, &b)];
    for m in mats {
        a = vec_mat(&a, m);
        b = vec_mat(&b, m);
        osc.push(oscillation(&a, &b));
    }
    (osc, a.iter().sum::<f64>() / b.iter().sum::<f64>())
}

/// Draw of `x + se Z`, kept inside `(0, hi]`.
fn jitter(x: f64, se: f64, hi: f64, rng: &mut RngStream) -> f64 {
    (x + se * rng.normal()).min(hi).max(x * 1e-3).max(f64::MIN_POSITIVE)
}

/// Hopf diagnostics of a chain; errors on nonpositive entries.
/// Oscillation and terminal-ratio errors come from a parametric bootstrap
/// over the record probabilities and the conditional estimates.
pub fn hopf_of_chain(chain: &TransferChain, bootstrap: usize, seed: u64) -> Result<HopfReport> {
    let first = chain.matrices.first().ok_or_else(|| Error::Input("empty chain".into()))?;
    let per: Vec<f64> = chain.matrices.iter().map(|m| max_cross_ratio(&m.entries)).collect::<Result<_>>()?;
    let kappa_sq = per.iter().copied().fold(1.0, f64::max);
    let (kappa, contraction) = contraction_of(kappa_sq);
    if first.u_second.iter().any(|&x| !(x > 0.0)) || first.u_prime.iter().any(|&x| x < 0.0) {
        return input("boundary vector u'' needs strictly positive entries");
    }
    let mats: Vec<&[Vec<f64>]> = chain.matrices.iter().map(|m| m.entries.as_slice()).collect();
    let (osc, xi) = osc_sequence(&first.u_prime, &first.u_second, &mats);

    let mut rng = RngStream::new(seed, 0x0b00);
    let mut osc_m = vec![Moments::default(); osc.len()];
    let mut xi_m = Moments::default();
    for _ in 0..bootstrap {
        // Record probabilities are drawn once and shared by every quantity they scale.
        let (mut u1, mut u2) = (Vec::new(), Vec::new());
        for (r, row) in first.rows.iter().enumerate() {
            let pr = jitter(row.probability, row.probability_stderr, 1.0, &mut rng);
            let b = jitter(first.u_second_conditional[r], first.u_second_conditional_stderr[r], 1.0, &mut rng);
            let a = jitter(first.u_prime_conditional[r], first.u_prime_conditional_stderr[r], b, &mut rng);
            u1.push(pr * a);
            u2.push(pr * b);
        }
        let ms: Vec<Vec<Vec<f64>>> = chain
            .matrices
            .iter()
            .map(|m| {
                let pc: Vec<f64> = m
                    .cols
                    .iter()
                    .map(|c| jitter(c.probability, c.probability_stderr, 1.0, &mut rng))
                    .collect();
                m.conditional
                    .iter()
                    .zip(&m.conditional_stderr)
                    .map(|(row, se)| {
                        row.iter()
                            .zip(se)
                            .zip(&pc)
                            .map(|((&x, &s), &p)| p * jitter(x, s, 1.0, &mut rng))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[Vec<f64>]> = ms.iter().map(|m| m.as_slice()).collect();
        let (o, x) = osc_sequence(&u1, &u2, &refs);
        for (mm, v) in osc_m.iter_mut().zip(o) {
            if v.is_finite() {
                mm.push(v);
            }
        }
        if x.is_finite() {
            xi_m.push(x);
        }
    }
    let osc_stderr: Vec<f64> = osc_m.iter().map(|m| m.variance().sqrt()).collect();
    let osc_nonincreasing = (1..osc.len()).all(|s| osc[s] <= osc[s - 1] + 2.0 * osc_stderr[s].hypot(osc_stderr[s - 1]));
    Ok(HopfReport {
        kappa_sq,
        kappa,
        contraction,
        per_matrix_kappa_sq: per,
        osc,
        osc_stderr,
        osc_nonincreasing,
        xi_hat: Some(xi),
        xi_stderr: (bootstrap > 1).then(|| xi_m.variance().sqrt()),
        c_star: None,
    })
}

/// Hopf diagnostics of a single estimated matrix, including the boundary
/// oscillation when the matrix carries `u'` and `u''`.
pub fn cross_ratio_and_contraction(m: &TransferMatrix) -> Result<HopfReport> {
    if m.u_prime.is_empty() {
        return hopf_of_entries(&m.entries);
    }
    let chain = TransferChain {
        schedule: ScaleSchedule::new(&[0], vec![m.radii.0, m.radii.1])?,
        indices: vec![m.scales.0, m.scales.1],
        event: EventSpec::Sure,
        matrices: vec![m.clone()],
    };
    hopf_of_chain(&chain, m.config.bootstrap, m.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_ratio_examples() {
        let rank_one: Vec<Vec<f64>> = [1.0, 2.0, 5.0]
            .iter()
            .map(|a| [0.5, 3.0].iter().map(|b| a * b).collect())
            .collect();
        let h = hopf_of_entries(&rank_one).unwrap();
        assert!((h.kappa_sq - 1.0).abs() < 1e-12);
        assert!(h.contraction.abs() < 1e-12);

        let h = hopf_of_entries(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(h.kappa_sq, 4.0);
        assert_eq!(h.kappa, 2.0);
        assert!((h.contraction - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(max_cross_ratio(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), 1.0);
        assert!(max_cross_ratio(&[vec![1.0, 0.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn oscillation_of_proportional_vectors_is_one() {
        assert_eq!(oscillation(&[1.0, 2.0], &[2.0, 4.0]), 1.0);
        assert_eq!(oscillation(&[1.0, 2.0], &[1.0, 1.0]), 2.0);
    }

    #[test]
    fn candidates_start_above_4m() {
        assert_eq!(scale_candidates(4, 64), vec![17, 32, 64]);
        assert_eq!(scale_candidates(1, 4), Vec::<u32>::new());
        assert_eq!(scale_candidates(1, 5), vec![5]);
    }

    #[test]
    fn schedule_separation() {
        let s = ScaleSchedule::new(&[0, 0], vec![2, 9, 37]).unwrap();
        assert!(s.is_separated());
        let s = ScaleSchedule::new(&[0, 0], vec![2, 4, 8, 16]).unwrap();
        assert_eq!(s.separation_violations(), vec![0, 1, 2]);
        assert!(ScaleSchedule::new(&[0, 0], vec![3, 3]).is_err());
    }
}
