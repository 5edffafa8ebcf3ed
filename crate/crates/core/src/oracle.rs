//! Exact event probabilities on small regions by full enumeration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::events::{EventSpec, Scratch};
use crate::lattice::{Region, RegionDescriptor};
use crate::percolation::MaskStates;

/// Largest edge count accepted for enumeration.
pub const EDGE_CAP: usize = 24;

/// Tolerance for comparisons between exact probabilities.
pub const EXACT_TOL: f64 = 1e-12;

/// Reliability polynomial `P(p) = sum_k N_k p^k (1-p)^(|E|-k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPolynomial {
    pub region: RegionDescriptor,
    pub edges: usize,
    pub coeffs: Vec<u64>,
}

pub fn check_cap(edges: usize) -> Result<()> {
    if edges > EDGE_CAP {
        return Err(Error::CapExceeded { edges, cap: EDGE_CAP });
    }
    Ok(())
}

/// Counts satisfying configurations by open-edge count, for any predicate
/// on bitmask configurations of `edges` edges.
pub fn enumerate_counts<F>(region: &Region, edges: usize, pred: F) -> Result<Vec<u64>>
where
    F: Fn(MaskStates, &mut Scratch) -> bool + Sync,
{
    check_cap(edges)?;
    let total = 1u64 << edges;
    let chunk = (total / 64).max(1 << 10);
    let chunks = total.div_ceil(chunk);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Scratch::new(region);
            let mut out = vec![0u64; edges + 1];
            for mask in c * chunk..((c + 1) * chunk).min(total) {
                if pred(MaskStates(mask), &mut scratch) {
                    out[mask.count_ones() as usize] += 1;
                }
            }
            out
        })
        .reduce(
            || vec![0u64; edges + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts)
}

pub fn exact_event_polynomial(region: &Region, event: &EventSpec) -> Result<EventPolynomial> {
    check_cap(region.edge_count())?;
    let compiled = event.compile(region)?;
    let coeffs = enumerate_counts(region, region.edge_count(), |s, scratch| compiled.holds(&s, scratch))?;
    Ok(EventPolynomial {
        region: region.descriptor().clone(),
        edges: region.edge_count(),
        coeffs,
    })
}

/// Bernstein-form evaluation of `sum_k N_k p^k (1-p)^(n-k)`.
pub fn bernstein(coeffs: &[u64], p: f64) -> f64 {
    let n = coeffs.len() - 1;
    if p == 0.0 {
        return coeffs[0] as f64;
    }
    if p == 1.0 {
        return coeffs[n] as f64;
    }
    if n > 16 {
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        return coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| ((c as f64).ln() + k as f64 * lp + (n - k) as f64 * lq).exp())
            .sum();
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
        .sum()
}

pub fn exact_probability(poly: &EventPolynomial, p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(bernstein(&poly.coeffs, p))
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Slack of the chain `P[E2] <= P[E2|E1] <= sqrt(P[E2])` at one `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkMargin {
    pub p: f64,
    pub p_e1: f64,
    pub p_e2: f64,
    /// `None` when `P[E1] = 0`.
    pub conditional: Option<f64>,
    pub lower_slack: Option<f64>,
    pub upper_slack: Option<f64>,
    pub holds: Option<bool>,
}

/// Exact check of `P[E2] <= P[E2|E1] <= sqrt(P[E2])` on `A(v,m,n)`.
pub fn verify_bk_chain(region: &Region, v: &[i32], m: u32, n: u32, p_grid: &[f64]) -> Result<Vec<BkMargin>> {
    let e1 = exact_event_polynomial(region, &EventSpec::e1(v, m, n))?;
    let e2 = exact_event_polynomial(region, &EventSpec::e2(v, m, n))?;
    // E2 implies E1, so P[E2|E1] = P[E2]/P[E1].
    p_grid
        .iter()
        .map(|&p| {
            let (a, b) = (exact_probability(&e1, p)?, exact_probability(&e2, p)?);
            if a <= 0.0 {
                return Ok(BkMargin {
                    p,
                    p_e1: a,
                    p_e2: b,
                    conditional: None,
                    lower_slack: None,
                    upper_slack: None,
                    holds: None,
                });
            }
            let cond = b / a;
            let lower = cond - b;
            let upper = b.sqrt() - cond;
            Ok(BkMargin {
                p,
                p_e1: a,
                p_e2: b,
                conditional: Some(cond),
                lower_slack: Some(lower),
                upper_slack: Some(upper),
                holds: Some(lower >= -EXACT_TOL && upper >= -EXACT_TOL),
            })
        })
        .collect()
}

/// `(MC mean - exact) / stderr` for an event on an enumerable region.
pub fn oracle_mc_crosscheck(region: &Region, p: f64, event: &EventSpec, budget: u64, seed: u64) -> Result<f64> {
    let poly = exact_event_polynomial(region, event)?;
    let exact = exact_probability(&poly, p)?;
    let est = crate::estimators::estimate_event_probability(region, p, event, budget, seed, &Default::default())?;
    let diff = est.mean - exact;
    if est.stderr == 0.0 {
        if diff.abs() > EXACT_TOL {
            return Err(Error::Invariant(format!(
                "zero-variance estimate {} disagrees with exact {exact}",
                est.mean
            )));
        }
        return Ok(0.0);
    }
    Ok(diff / est.stderr)
}
