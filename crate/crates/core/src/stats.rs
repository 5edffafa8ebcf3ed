//! Monte Carlo estimates and error propagation.

use serde::{Deserialize, Serialize};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.96;

/// A Monte Carlo estimate with its sampling provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub n_samples: u64,
    /// Samples satisfying the conditioning event; equals `n_samples` when unconditional.
    pub n_accepted: u64,
    pub seed: u64,
    pub wallclock: f64,
}

impl Estimate {
    pub fn new(mean: f64, stderr: f64, n_samples: u64, n_accepted: u64, seed: u64) -> Self {
        Self {
            mean,
            stderr,
            ci95: (mean - Z95 * stderr, mean + Z95 * stderr),
            n_samples,
            n_accepted,
            seed,
            wallclock: 0.0,
        }
    }

    /// Bernoulli tally: `hits` successes out of `trials` accepted samples.
    pub fn from_tally(hits: u64, trials: u64, n_samples: u64, seed: u64) -> Self {
        let (mean, stderr) = bernoulli_mean_stderr(hits, trials);
        Self::new(mean, stderr, n_samples, trials, seed)
    }

    pub fn with_wallclock(mut self, secs: f64) -> Self {
        self.wallclock = secs;
        self
    }

    /// `|self - other|` measured in combined standard errors.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        let d = (self.mean - other.mean).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }
}

pub fn bernoulli_mean_stderr(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = hits as f64 / trials as f64;
    (m, (m * (1.0 - m) / trials as f64).sqrt())
}

/// Running sums for a real-valued sample mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n as f64 * m * m) / (self.n - 1) as f64).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Standard error of the mean of a correlated chain, by non-overlapping batch means.
pub fn batch_means_stderr(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(xs.len().max(2));
    let size = xs.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let mut m = Moments::default();
    for b in 0..batches {
        let chunk = &xs[b * size..(b + 1) * size];
        m.push(chunk.iter().sum::<f64>() / size as f64);
    }
    m.stderr()
}

/// Delta-method ratio `a / (b c)` for three means estimated on one sample
/// stream. `cov` is the 3x3 covariance matrix of the per-sample indicators
/// (divided by `n` by the caller's choice of `n`).
pub fn ratio3_delta(means: [f64; 3], cov: [[f64; 3]; 3], n: u64) -> (f64, f64) {
    let [a, b, c] = means;
    let r = a / (b * c);
    let grad = [1.0 / (b * c), -a / (b * b * c), -a / (b * c * c)];
    let mut var = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var += grad[i] * grad[j] * cov[i][j];
        }
    }
    (r, (var.max(0.0) / n as f64).sqrt())
}

/// Covariance of indicator columns from joint counts. `joint[i][j]` counts
/// samples where both indicators `i` and `j` hold; `joint[i][i]` is the marginal.
pub fn indicator_covariance<const K: usize>(joint: &[[u64; K]; K], n: u64) -> [[f64; K]; K] {
    let mut out = [[0.0; K]; K];
    let nf = n as f64;
    for i in 0..K {
        for j in 0..K {
            let pij = joint[i][j] as f64 / nf;
            let pi = joint[i][i] as f64 / nf;
            let pj = joint[j][j] as f64 / nf;
            out[i][j] = pij - pi * pj;
        }
    }
    out
}
