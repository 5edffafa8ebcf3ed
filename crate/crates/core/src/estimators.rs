//! Monte Carlo estimators: event frequencies, rejection-sampled
//! conditionals, quasi-multiplicativity ratios, the two incipient-infinite-
//! cluster limits, critical-point bisection and cluster censuses.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, input, Error, Result};
use crate::events::{CompiledEvent, EventSpec, Scratch};
use crate::exec::Exec;
use crate::lattice::{Coord, LatticeSpec, Region};
use crate::percolation::{crossing_cluster_count_with, LazyConfiguration, UnionFind};
use crate::rng::{derive_seed, stream_key, unit_f64, value_at};
use crate::stats::{bernoulli_mean_stderr, indicator_covariance, ratio3_delta, Estimate, Moments};
use crate::vertex_set::VertexSet;

/// Smallest accepted-sample count for which normal intervals are reported.
pub const MIN_ACCEPTED: u64 = 100;

/// Default vertex-count guard for census regions.
pub const DEFAULT_VERTEX_CAP: usize = 10_000_000;

fn check_budget(budget: u64) -> Result<()> {
    if budget < 100 {
        return input(format!("budget {budget} below the minimum of 100 samples"));
    }
    Ok(())
}

/// Counts of every joint outcome pattern of up to eight events over a shared sample stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    pub events: usize,
    pub samples: u64,
    /// `counts[mask]`: samples where exactly the events in `mask` held.
    pub counts: Vec<u64>,
}

impl JointCounts {
    /// Samples where every event in `all` held.
    pub fn count_all(&self, all: u32) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|(mask, _)| *mask as u32 & all == all)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn frequency(&self, all: u32) -> f64 {
        self.count_all(all) as f64 / self.samples as f64
    }
}

/// Evaluates `events` on samples `0..budget` of `stream(seed, i)` at parameter `p`.
pub fn joint_counts(region: &Region, p: f64, events: &[EventSpec], budget: u64, seed: u64, exec: &Exec) -> Result<JointCounts> {
    check_probability(p)?;
    if events.is_empty() || events.len() > 8 {
        return input("joint counts need between one and eight events");
    }
    let compiled: Vec<CompiledEvent> = events.iter().map(|e| e.compile(region)).collect::<Result<_>>()?;
    let k = compiled.len();
    let parts = exec.map_chunks(0..budget, |range| {
        let mut scratch = Scratch::new(region);
        let mut counts = vec![0u64; 1 << k];
        for i in range {
            let cfg = LazyConfiguration::new(p, seed, i);
            let mut mask = 0usize;
            for (j, ev) in compiled.iter().enumerate() {
                if ev.holds(&cfg, &mut scratch) {
                    mask |= 1 << j;
                }
            }
            counts[mask] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; 1 << k];
    for part in parts {
        counts.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    Ok(JointCounts {
        events: k,
        samples: budget,
        counts,
    })
}

/// Frequency of `event` over `budget` independent samples.
pub fn estimate_event_probability(region: &Region, p: f64, event: &EventSpec, budget: u64, seed: u64, exec: &Exec) -> Result<Estimate> {
    check_budget(budget)?;
    let t = Instant::now();
    let jc = joint_counts(region, p, std::slice::from_ref(event), budget, seed, exec)?;
    Ok(Estimate::from_tally(jc.counts[1], budget, budget, seed).with_wallclock(t.elapsed().as_secs_f64()))
}

/// Sample budget and stopping rule for rejection sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPlan {
    /// Maximum number of samples drawn.
    pub budget: u64,
    /// Fewer accepted samples than this is a starvation failure.
    pub min_accepted: u64,
    /// Stop early once this many samples are accepted.
    pub stop_at_accepted: Option<u64>,
}

impl ConditionalPlan {
    pub fn fixed(budget: u64) -> Self {
        Self {
            budget,
            min_accepted: MIN_ACCEPTED,
            stop_at_accepted: None,
        }
    }

    pub fn until_accepted(accepted: u64, max_samples: u64) -> Self {
        Self {
            budget: max_samples,
            min_accepted: MIN_ACCEPTED,
            stop_at_accepted: Some(accepted),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_accepted < MIN_ACCEPTED {
            return input(format!("min_accepted must be at least {MIN_ACCEPTED}"));
        }
        Ok(())
    }
}

/// Rejection-sampled `P[target | condition]`.
pub fn estimate_conditional(
    region: &Region,
    p: f64,
    target: &EventSpec,
    condition: &EventSpec,
    plan: &ConditionalPlan,
    seed: u64,
    exec: &Exec,
) -> Result<Estimate> {
    check_probability(p)?;
    plan.validate()?;
    let t = Instant::now();
    let target = target.compile(region)?;
    let condition = condition.compile(region)?;
    let (samples, accepted, hits) = scan_conditional(region, plan, exec, |i, scratch| {
        let cfg = LazyConfiguration::new(p, seed, i);
        if !condition.holds(&cfg, scratch) {
            return (false, false);
        }
        (true, target.holds(&cfg, scratch))
    });
    finish_conditional(samples, accepted, hits, plan, seed, t)
}

fn scan_conditional<F>(region: &Region, plan: &ConditionalPlan, exec: &Exec, per_sample: F) -> (u64, u64, u64)
where
    F: Fn(u64, &mut Scratch) -> (bool, bool) + Sync + Send,
{
    let mut acc = (0u64, 0u64);
    let stop = plan.stop_at_accepted.unwrap_or(u64::MAX);
    let consumed = exec.scan_until(
        0..plan.budget,
        |range| {
            let mut scratch = Scratch::new(region);
            let mut out = (0u64, 0u64);
            for i in range {
                let (a, h) = per_sample(i, &mut scratch);
                out.0 += a as u64;
                out.1 += h as u64;
            }
            out
        },
        &mut acc,
        |a, x| {
            a.0 += x.0;
            a.1 += x.1;
        },
        |a| a.0 >= stop,
    );
    (consumed, acc.0, acc.1)
}

fn finish_conditional(samples: u64, accepted: u64, hits: u64, plan: &ConditionalPlan, seed: u64, t: Instant) -> Result<Estimate> {
    let est = if accepted == 0 {
        Estimate::new(f64::NAN, f64::NAN, samples, 0, seed)
    } else {
        Estimate::from_tally(hits, accepted, samples, seed)
    }
    .with_wallclock(t.elapsed().as_secs_f64());
    if accepted < plan.min_accepted {
        return Err(Error::Starvation {
            accepted,
            samples,
            required: plan.min_accepted,
            partial: Box::new(est),
        });
    }
    Ok(est)
}

/// Quasi-multiplicativity ratio `P[X<->Y in Z] / (P[X<->S in Z] P[Y<->S in Z])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmRatio {
    pub ratio: Estimate,
    /// `P[X<->Y]`, `P[X<->S]`, `P[Y<->S]`.
    pub parts: [Estimate; 3],
    /// Some denominator's 95% interval reaches 0.
    pub inconclusive: bool,
}

/// Ratio of three connection probabilities sharing one sample stream, with a
/// delta-method standard error. `s` is the separating shell (`S(v,2m)` in the
/// graph-metric geometry, `dQ(2m)` in the slab geometry).
#[allow(clippy::too_many_arguments)]
pub fn connection_ratio(
    region: &Region,
    p: f64,
    x: &VertexSet,
    y: &VertexSet,
    s: &VertexSet,
    z: &VertexSet,
    budget: u64,
    seed: u64,
    exec: &Exec,
) -> Result<QmRatio> {
    check_probability(p)?;
    check_budget(budget)?;
    let t = Instant::now();
    let parts = exec.map_chunks(0..budget, |range| {
        let mut scratch = Scratch::new(region);
        let mut joint = [[0u64; 3]; 3];
        for i in range {
            let cfg = LazyConfiguration::new(p, seed, i);
            let ex = &mut scratch.explorer;
            let mut hit_y = false;
            let mut hit_s = false;
            ex.search(region, &cfg, x.iter(), |v| z.contains(v), |v| {
                hit_y |= y.contains(v);
                hit_s |= s.contains(v);
                hit_y && hit_s
            });
            let y_s = ex.search(region, &cfg, y.iter(), |v| z.contains(v), |v| s.contains(v));
            let ind = [hit_y, hit_s, y_s];
            for a in 0..3 {
                for b in 0..3 {
                    joint[a][b] += (ind[a] && ind[b]) as u64;
                }
            }
        }
        joint
    });
    let mut joint = [[0u64; 3]; 3];
    for part in parts {
        for a in 0..3 {
            for b in 0..3 {
                joint[a][b] += part[a][b];
            }
        }
    }
    let singles: Vec<Estimate> = (0..3).map(|a| Estimate::from_tally(joint[a][a], budget, budget, seed)).collect();
    let means = [singles[0].mean, singles[1].mean, singles[2].mean];
    let inconclusive = singles[1].ci95.0 <= 0.0 || singles[2].ci95.0 <= 0.0;
    let ratio = if means[1] > 0.0 && means[2] > 0.0 {
        let cov = indicator_covariance(&joint, budget);
        let (r, se) = ratio3_delta(means, cov, budget);
        Estimate::new(r, se, budget, budget, seed)
    } else {
        Estimate::new(f64::NAN, f64::NAN, budget, budget, seed)
    }
    .with_wallclock(t.elapsed().as_secs_f64());
    Ok(QmRatio {
        ratio,
        parts: [singles[0].clone(), singles[1].clone(), singles[2].clone()],
        inconclusive,
    })
}

/// Graph-metric quasi-multiplicativity ratio around `v` at scale `m`:
/// requires `Z ⊇ A(v,m,4m)`, `X ⊆ Z ∩ B(v,m)`, `Y ⊆ Z ∖ B(v,4m)`.
#[allow(clippy::too_many_arguments)]
pub fn qm_ratio(
    region: &Region,
    p: f64,
    v: &[i32],
    m: u32,
    z: &VertexSet,
    x: &VertexSet,
    y: &VertexSet,
    budget: u64,
    seed: u64,
    exec: &Exec,
) -> Result<QmRatio> {
    let dist = region.distances_from(v, Default::default())?;
    let ann = region.distance_band(&dist, m, 4 * m);
    if !ann.is_subset(z) {
        return input("Z must contain A(v,m,4m)");
    }
    if !x.is_subset(&region.distance_band(&dist, 0, m).intersection(z)) {
        return input("X must lie in Z ∩ B(v,m)");
    }
    if y.intersects(&region.distance_band(&dist, 0, 4 * m)) || !y.is_subset(z) {
        return input("Y must lie in Z outside B(v,4m)");
    }
    let s = region.distance_band(&dist, 2 * m, 2 * m);
    connection_ratio(region, p, x, y, &s, z, budget, seed, exec)
}

/// The shell probe used at scale `m` in the plane: `X = S(0,m/2)`,
/// `Y = S(0,6m)`, `Z = B(0,6m)`.
pub fn shell_probe(spec: LatticeSpec, m: u32) -> Result<(Region, VertexSet, VertexSet, VertexSet)> {
    let origin = vec![0; spec.d];
    let region = Region::ball(spec, &origin, 6 * m)?;
    let dist = region.distances_from(&origin, Default::default())?;
    let x = region.distance_band(&dist, m / 2, m / 2);
    let y = region.distance_band(&dist, 6 * m, 6 * m);
    let z = region.all_vertices();
    Ok((region, x, y, z))
}

/// Successive difference of a series with its propagated error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub value: f64,
    pub stderr: f64,
}

/// Estimates along an ordered parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub parameter: String,
    pub params: Vec<f64>,
    pub points: Vec<Estimate>,
    /// `|a_{k+1} - a_k|` with independent-error propagation.
    pub differences: Vec<Difference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Estimate>,
}

impl SeriesReport {
    pub fn new(parameter: &str, params: Vec<f64>, points: Vec<Estimate>) -> Self {
        let differences = points
            .windows(2)
            .map(|w| Difference {
                value: (w[1].mean - w[0].mean).abs(),
                stderr: w[0].stderr.hypot(w[1].stderr),
            })
            .collect();
        Self {
            parameter: parameter.to_string(),
            params,
            points,
            differences,
            summary: None,
        }
    }

    pub fn terminal(&self) -> Option<&Estimate> {
        self.points.last()
    }

    /// Whether `d_{k+1} <= d_k + k_sigma * sqrt(s_k^2 + s_{k+1}^2)` for all `k`.
    pub fn differences_nonincreasing(&self, k_sigma: f64) -> bool {
        self.differences
            .windows(2)
            .all(|w| w[1].value <= w[0].value + k_sigma * w[0].stderr.hypot(w[1].stderr))
    }
}

/// Checks that a cylinder-type event only involves edges of `B(w, r)`.
fn check_event_locality(spec: LatticeSpec, w: &[i32], event: &EventSpec, r: u32) -> Result<()> {
    let near = |c: &[i32]| spec.distance(w, c) <= r;
    match event {
        EventSpec::Cylinder { edges, .. } => {
            if edges.iter().all(|(a, b)| near(a) && near(b)) {
                return Ok(());
            }
        }
        EventSpec::Star { center } => {
            if spec.distance(w, center) < r {
                return Ok(());
            }
        }
        EventSpec::Sure => return Ok(()),
        _ => return input("IIC limits take a cylinder event"),
    }
    input(format!("event must be determined by edges within distance {r} of w"))
}

/// `P_p[E | w <-> S(w,n)]` for each `n`, each point on its own derived seed.
#[allow(clippy::too_many_arguments)]
pub fn iic_first_limit(
    spec: LatticeSpec,
    w: &[i32],
    event: &EventSpec,
    p: f64,
    n_list: &[u32],
    plan: &ConditionalPlan,
    seed: u64,
    exec: &Exec,
) -> Result<SeriesReport> {
    if n_list.is_empty() || n_list.windows(2).any(|x| x[0] >= x[1]) {
        return input("n_list must be nonempty and increasing");
    }
    check_event_locality(spec, w, event, n_list[0] / 4)?;
    let mut points = Vec::new();
    for &n in n_list {
        let region = Region::ball(spec, w, n)?;
        let est = estimate_conditional(
            &region,
            p,
            event,
            &EventSpec::one_arm(w, n),
            plan,
            derive_seed(seed, n as u64),
            exec,
        )?;
        points.push(est);
    }
    Ok(SeriesReport::new("n", n_list.iter().map(|&n| n as f64).collect(), points))
}

/// `P_p[E | w <-> S(w, proxy_n)]` for each `p` in a decreasing list above `pc`.
#[allow(clippy::too_many_arguments)]
pub fn iic_second_limit(
    spec: LatticeSpec,
    w: &[i32],
    event: &EventSpec,
    p_list: &[f64],
    pc: f64,
    proxy_n: u32,
    plan: &ConditionalPlan,
    seed: u64,
    exec: &Exec,
) -> Result<SeriesReport> {
    if p_list.is_empty() || p_list.windows(2).any(|x| x[0] <= x[1]) {
        return input("p_list must be nonempty and strictly decreasing");
    }
    if p_list.iter().any(|&p| p <= pc) {
        return input(format!("every p must exceed the critical estimate {pc}"));
    }
    check_event_locality(spec, w, event, proxy_n / 4)?;
    let region = Region::ball(spec, w, proxy_n)?;
    let cond = EventSpec::one_arm(w, proxy_n);
    let mut points = Vec::new();
    for (i, &p) in p_list.iter().enumerate() {
        points.push(estimate_conditional(&region, p, event, &cond, plan, derive_seed(seed, i as u64), exec)?);
    }
    Ok(SeriesReport::new("p", p_list.to_vec(), points))
}

/// The `(n+1) x n` crossing rectangle: columns `x = 0..=n`, rows `y = 0..n`,
/// every slab layer. Returns the region with its left and right faces.
pub fn crossing_rectangle(spec: LatticeSpec, n: u32) -> Result<(Region, VertexSet, VertexSet)> {
    if n == 0 {
        return input("rectangle size must be positive");
    }
    let mut lo = vec![0, 0];
    let mut hi = vec![n as i32, n as i32 - 1];
    for _ in 2..spec.d {
        lo.push(0);
        hi.push(spec.thickness().map_or(0, |k| k as i32));
    }
    if !spec.is_slab() && spec.d != 2 {
        return input("crossing rectangles need a planar or slab lattice");
    }
    let r = Region::rectangle(spec, &lo, &hi)?;
    let left = r.set_where(|c| c[0] == 0);
    let right = r.set_where(|c| c[0] == n as i32);
    Ok((r, left, right))
}

/// Critical-point estimate with its supporting crossing statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub estimate: Estimate,
    pub n: u32,
    pub bisection_width: f64,
    /// Finite-difference slope of the crossing probability at the estimate.
    pub slope: f64,
    pub crossing_below: Estimate,
    pub crossing_above: Estimate,
}

/// Sorted per-sample crossing thresholds: the smallest `p` at which sample
/// `i` crosses is the first edge label whose addition joins the two faces.
pub fn crossing_thresholds(region: &Region, left: &VertexSet, right: &VertexSet, budget: u64, seed: u64, exec: &Exec) -> Vec<f64> {
    let nv = region.vertex_count();
    let parts = exec.map_chunks(0..budget, |range| {
        let mut uf = UnionFind::new(nv + 2);
        let mut order: Vec<(u64, u32)> = Vec::with_capacity(region.edge_count());
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for i in range {
            let key = stream_key(seed, i);
            order.clear();
            order.extend((0..region.edge_count()).map(|e| (value_at(key, e as u64) >> 11, e as u32)));
            order.sort_unstable();
            uf.reset(nv + 2);
            for v in left.iter() {
                uf.union(v, nv);
            }
            for v in right.iter() {
                uf.union(v, nv + 1);
            }
            let mut t = 1.0;
            for &(_, e) in &order {
                let (a, b) = region.edge(e as usize);
                uf.union(a, b);
                if uf.same(nv, nv + 1) {
                    t = unit_f64(value_at(key, e as u64));
                    break;
                }
            }
            out.push(t);
        }
        out
    });
    let mut all: Vec<f64> = parts.into_iter().flatten().collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Fraction of samples crossing at `p` (edge open iff label `< p`).
fn crossing_fraction(thresholds: &[f64], p: f64) -> (u64, f64) {
    let hits = thresholds.partition_point(|&t| t < p) as u64;
    (hits, hits as f64 / thresholds.len() as f64)
}

/// Bisection on `p` for the left-right crossing probability of the
/// `(n+1) x n` rectangle to equal `1/2`, under common random numbers.
pub fn estimate_pc(spec: LatticeSpec, n: u32, tolerance: f64, budget: u64, seed: u64, exec: &Exec) -> Result<PcEstimate> {
    if n < 16 {
        return input("estimate_pc needs n >= 16");
    }
    if !(tolerance > 0.0 && tolerance < 0.5) {
        return input("tolerance must lie in (0, 0.5)");
    }
    check_budget(budget)?;
    let t0 = Instant::now();
    let (region, left, right) = crossing_rectangle(spec, n)?;
    let th = crossing_thresholds(&region, &left, &right, budget, seed, exec);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if crossing_fraction(&th, mid).1 < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pc = 0.5 * (lo + hi);
    let h = 0.01;
    let slope = (crossing_fraction(&th, pc + h).1 - crossing_fraction(&th, pc - h).1) / (2.0 * h);
    let sigma_f = (0.25 / budget as f64).sqrt();
    let mc = if slope > 0.0 { sigma_f / slope } else { 0.5 };
    let stderr = ((hi - lo) / 2.0).hypot(mc);
    let at = |p: f64| {
        let (hits, _) = crossing_fraction(&th, p.clamp(0.0, 1.0));
        Estimate::from_tally(hits, budget, budget, seed)
    };
    Ok(PcEstimate {
        estimate: Estimate::new(pc, stderr, budget, budget, seed).with_wallclock(t0.elapsed().as_secs_f64()),
        n,
        bisection_width: hi - lo,
        slope,
        crossing_below: at(pc - 0.05),
        crossing_above: at(pc + 0.05),
    })
}

/// What a census measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CensusMode {
    /// Distribution of the number of crossing clusters of `A(0,m,2m)`.
    CrossingCount,
    /// `P[0 <-> x]` for `x = (r, 0, ...)`, inside `B(0, max r + margin)`.
    TwoPoint { distances: Vec<u32>, margin: u32 },
}

/// Exploratory cluster statistics; reported, never gated.
#[allow(clippy::too_many_arguments)]
pub fn cluster_census(
    spec: LatticeSpec,
    m: u32,
    p: f64,
    mode: &CensusMode,
    budget: u64,
    seed: u64,
    vertex_cap: usize,
    exec: &Exec,
) -> Result<SeriesReport> {
    check_probability(p)?;
    check_budget(budget)?;
    let t0 = Instant::now();
    let origin: Coord = vec![0; spec.d];
    let radius = match mode {
        CensusMode::CrossingCount => 2 * m,
        CensusMode::TwoPoint { distances, margin } => distances.iter().copied().max().unwrap_or(0) + margin,
    };
    // |B(0,r)| in Z^d is at most (2r+1)^d.
    let approx = (2 * radius as usize + 1).pow(spec.d.min(2) as u32)
        * match spec.family {
            crate::lattice::Family::Slab { k } => (k as usize + 1).pow(spec.d as u32 - 2),
            _ => (2 * radius as usize + 1).pow(spec.d as u32 - 2),
        };
    if approx > vertex_cap {
        return input(format!("census region of about {approx} vertices exceeds cap {vertex_cap}"));
    }
    let region = Region::ball(spec, &origin, radius)?;
    match mode {
        CensusMode::CrossingCount => {
            let dist = region.distances_from(&origin, Default::default())?;
            let ann = region.distance_band(&dist, m, 2 * m);
            let inner = region.distance_band(&dist, m, m);
            let outer = region.distance_band(&dist, 2 * m, 2 * m);
            let parts = exec.map_chunks(0..budget, |range| {
                let mut uf = UnionFind::new(region.vertex_count());
                range
                    .map(|i| {
                        let cfg = LazyConfiguration::new(p, seed, i);
                        crossing_cluster_count_with(&mut uf, &region, &cfg, &ann, &inner, &outer)
                    })
                    .collect::<Vec<usize>>()
            });
            let mut hist: Vec<u64> = Vec::new();
            let mut mom = Moments::default();
            for c in parts.into_iter().flatten() {
                if hist.len() <= c {
                    hist.resize(c + 1, 0);
                }
                hist[c] += 1;
                mom.push(c as f64);
            }
            let points = hist.iter().map(|&h| Estimate::from_tally(h, budget, budget, seed)).collect();
            let mut rep = SeriesReport::new("crossing_count", (0..hist.len()).map(|c| c as f64).collect(), points);
            rep.summary = Some(Estimate::new(mom.mean(), mom.stderr(), budget, budget, seed).with_wallclock(t0.elapsed().as_secs_f64()));
            Ok(rep)
        }
        CensusMode::TwoPoint { distances, .. } => {
            let origin_set = region.set_of([origin.as_slice()])?;
            let targets: Vec<usize> = distances
                .iter()
                .map(|&r| {
                    let mut c = origin.clone();
                    c[0] = r as i32;
                    region.require_index(&c)
                })
                .collect::<Result<_>>()?;
            let all = region.all_vertices();
            let parts = exec.map_chunks(0..budget, |range| {
                let mut scratch = Scratch::new(&region);
                let mut hits = vec![0u64; targets.len()];
                for i in range {
                    let cfg = LazyConfiguration::new(p, seed, i);
                    let ex = &mut scratch.explorer;
                    ex.search(&region, &cfg, origin_set.iter(), |v| all.contains(v), |_| false);
                    for (h, &t) in hits.iter_mut().zip(&targets) {
                        *h += ex.visited(t) as u64;
                    }
                }
                hits
            });
            let mut hits = vec![0u64; targets.len()];
            for part in parts {
                hits.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
            let points = hits.iter().map(|&h| Estimate::from_tally(h, budget, budget, seed)).collect();
            Ok(SeriesReport::new("distance", distances.iter().map(|&r| r as f64).collect(), points))
        }
    }
}

/// Binomial mean and standard error helper re-exported for callers that tally by hand.
pub fn tally(hits: u64, trials: u64) -> (f64, f64) {
    bernoulli_mean_stderr(hits, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SetSpec;
    use crate::oracle::{exact_event_polynomial, exact_probability};

    fn plane() -> LatticeSpec {
        LatticeSpec::hypercubic(2)
    }

    fn corner() -> (Region, EventSpec) {
        let r = Region::rectangle(plane(), &[0, 0], &[1, 1]).unwrap();
        let ev = EventSpec::Connect {
            x: SetSpec::Vertices { coords: vec![vec![0, 0]] },
            y: SetSpec::Vertices { coords: vec![vec![1, 1]] },
            z: SetSpec::All,
        };
        (r, ev)
    }

    #[test]
    fn degenerate_probabilities() {
        let (r, ev) = corner();
        let one = estimate_event_probability(&r, 1.0, &ev, 1000, 3, &Exec::default()).unwrap();
        assert_eq!((one.mean, one.stderr), (1.0, 0.0));
        let zero = estimate_event_probability(&r, 0.0, &ev, 1000, 3, &Exec::default()).unwrap();
        assert_eq!(zero.mean, 0.0);
        assert!(estimate_event_probability(&r, 0.5, &ev, 10, 3, &Exec::default()).is_err());
    }

    #[test]
    fn corner_crossing_matches_closed_form() {
        let (r, ev) = corner();
        let e = estimate_event_probability(&r, 0.5, &ev, 100_000, 11, &Exec::default()).unwrap();
        assert!((e.mean - 0.4375).abs() < 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn sure_condition_equals_unconditional() {
        let (r, ev) = corner();
        let plain = estimate_event_probability(&r, 0.4, &ev, 5000, 5, &Exec::default()).unwrap();
        let cond = estimate_conditional(&r, 0.4, &ev, &EventSpec::Sure, &ConditionalPlan::fixed(5000), 5, &Exec::default()).unwrap();
        assert_eq!(plain.mean, cond.mean);
        assert_eq!(cond.n_accepted, 5000);
    }

    #[test]
    fn conditional_matches_ratio_and_oracle() {
        let r = Region::ball(plane(), &[0, 0], 2).unwrap();
        let e1 = EventSpec::e1(&[0, 0], 1, 2);
        let e2 = EventSpec::e2(&[0, 0], 1, 2);
        let exec = Exec::default();
        let cond = estimate_conditional(&r, 0.5, &e2, &e1, &ConditionalPlan::fixed(100_000), 8, &exec).unwrap();
        let jc = joint_counts(&r, 0.5, &[e1.clone(), e2.clone()], 100_000, 8, &exec).unwrap();
        let ratio = jc.count_all(0b11) as f64 / jc.count_all(0b01) as f64;
        assert!((cond.mean - ratio).abs() < 1e-12);
        let exact = exact_probability(&exact_event_polynomial(&r, &e2).unwrap(), 0.5).unwrap()
            / exact_probability(&exact_event_polynomial(&r, &e1).unwrap(), 0.5).unwrap();
        assert!((cond.mean - exact).abs() < 4.0 * cond.stderr);
    }

    #[test]
    fn starvation_is_reported() {
        let (r, ev) = corner();
        let err = estimate_conditional(&r, 0.0, &ev, &ev, &ConditionalPlan::fixed(1000), 1, &Exec::default()).unwrap_err();
        match err {
            Error::Starvation { accepted, partial, .. } => {
                assert_eq!(accepted, 0);
                assert_eq!(partial.n_samples, 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn early_stop_is_worker_invariant() {
        let r = Region::ball(plane(), &[0, 0], 2).unwrap();
        let plan = ConditionalPlan::until_accepted(500, 1_000_000);
        let run = |w| {
            estimate_conditional(&r, 0.5, &EventSpec::e2(&[0, 0], 1, 2), &EventSpec::e1(&[0, 0], 1, 2), &plan, 4, &Exec::new(w)).unwrap()
        };
        let (a, b) = (run(1), run(3));
        assert_eq!((a.mean, a.n_samples, a.n_accepted), (b.mean, b.n_samples, b.n_accepted));
        assert!(a.n_accepted >= 500 && a.n_samples < 1_000_000);
    }

    #[test]
    fn qm_ratio_extremes_and_geometry() {
        let (region, x, y, z) = shell_probe(plane(), 4).unwrap();
        let exec = Exec::default();
        let one = qm_ratio(&region, 1.0, &[0, 0], 4, &z, &x, &y, 200, 1, &exec).unwrap();
        assert_eq!(one.ratio.mean, 1.0);
        let zero = qm_ratio(&region, 0.0, &[0, 0], 4, &z, &x, &y, 200, 1, &exec).unwrap();
        assert!(zero.inconclusive && zero.ratio.mean.is_nan());
        assert!(qm_ratio(&region, 0.5, &[0, 0], 4, &z, &y, &x, 200, 1, &exec).is_err());
    }

    #[test]
    fn iic_trivial_cases() {
        let exec = Exec::default();
        let plan = ConditionalPlan::fixed(500);
        let sure = iic_first_limit(plane(), &[0, 0], &EventSpec::Sure, 0.5, &[8, 16], &plan, 1, &exec).unwrap();
        assert!(sure.points.iter().all(|e| e.mean == 1.0));
        let star = EventSpec::Star { center: vec![0, 0] };
        let single = iic_first_limit(plane(), &[0, 0], &star, 0.5, &[8], &plan, 1, &exec).unwrap();
        assert_eq!(single.points.len(), 1);
        let full = iic_second_limit(plane(), &[0, 0], &star, &[1.0], 0.5, 16, &plan, 1, &exec).unwrap();
        assert_eq!(full.points[0].mean, 1.0);
        assert!(iic_second_limit(plane(), &[0, 0], &star, &[0.6, 0.7], 0.5, 16, &plan, 1, &exec).is_err());
        assert!(iic_first_limit(plane(), &[0, 0], &EventSpec::Star { center: vec![3, 0] }, 0.5, &[8], &plan, 1, &exec).is_err());
    }

    #[test]
    fn rectangle_crossing_is_half_at_self_dual_point() {
        let (r, left, right) = crossing_rectangle(plane(), 2).unwrap();
        assert_eq!(r.vertex_count(), 6);
        assert_eq!(r.edge_count(), 7);
        let ev = crate::oracle::exact_event_polynomial(
            &r,
            &EventSpec::Connect {
                x: SetSpec::Vertices { coords: left.iter().map(|v| r.coord(v).to_vec()).collect() },
                y: SetSpec::Vertices { coords: right.iter().map(|v| r.coord(v).to_vec()).collect() },
                z: SetSpec::All,
            },
        )
        .unwrap();
        assert!((exact_probability(&ev, 0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn thresholds_agree_with_direct_crossing() {
        let (r, left, right) = crossing_rectangle(plane(), 6).unwrap();
        let th = crossing_thresholds(&r, &left, &right, 300, 9, &Exec::default());
        let mut sorted = Vec::new();
        for i in 0..300 {
            let cfg = LazyConfiguration::new(0.5, 9, i);
            sorted.push(crate::percolation::connected_in(&r, &cfg, &left, &right, &r.all_vertices()));
        }
        let direct = sorted.iter().filter(|&&b| b).count() as u64;
        assert_eq!(crossing_fraction(&th, 0.5).0, direct);
    }

    #[test]
    fn census_extremes() {
        let exec = Exec::default();
        let full = cluster_census(plane(), 4, 1.0, &CensusMode::CrossingCount, 200, 1, DEFAULT_VERTEX_CAP, &exec).unwrap();
        assert_eq!(full.summary.unwrap().mean, 1.0);
        let tp = CensusMode::TwoPoint { distances: vec![1, 3], margin: 2 };
        let none = cluster_census(plane(), 4, 0.0, &tp, 200, 1, DEFAULT_VERTEX_CAP, &exec).unwrap();
        assert!(none.points.iter().all(|e| e.mean == 0.0));
        assert!(cluster_census(plane(), 4, 0.5, &tp, 200, 1, 10, &exec).is_err());
    }

    #[test]
    fn series_differences() {
        let pts = [0.5, 0.3, 0.25, 0.24].iter().map(|&m| Estimate::new(m, 0.01, 100, 100, 0)).collect();
        let s = SeriesReport::new("n", vec![1.0, 2.0, 3.0, 4.0], pts);
        assert_eq!(s.differences.len(), 3);
        assert!(s.differences_nonincreasing(2.0));
        let pts = [0.5, 0.49, 0.2].iter().map(|&m| Estimate::new(m, 0.001, 100, 100, 0)).collect();
        assert!(!SeriesReport::new("n", vec![1.0, 2.0, 3.0], pts).differences_nonincreasing(2.0));
    }
}
