//! Result rows and their CSV files.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use perc_core::Estimate;
use serde::{Deserialize, Serialize};

/// Column order of every results file.
pub const HEADER: [&str; 18] = [
    "run_id",
    "graph",
    "d",
    "k",
    "geometry",
    "p",
    "m",
    "n",
    "event",
    "estimator",
    "mean",
    "stderr",
    "ci_lo",
    "ci_hi",
    "n_samples",
    "n_accepted",
    "seed",
    "wallclock_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub graph: String,
    pub d: usize,
    pub k: Option<u32>,
    pub geometry: String,
    pub p: Option<f64>,
    pub m: Option<u32>,
    pub n: Option<u32>,
    pub event: String,
    pub estimator: String,
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_samples: u64,
    pub n_accepted: u64,
    pub seed: u64,
    pub wallclock_s: f64,
}

impl ResultRow {
    /// Finite numbers and `ci_lo <= mean <= ci_hi`.
    pub fn check(&self) -> Result<(), String> {
        let nums = [self.mean, self.stderr, self.ci_lo, self.ci_hi, self.wallclock_s];
        if nums.iter().any(|x| !x.is_finite()) || self.p.is_some_and(|p| !p.is_finite()) {
            return Err(format!("non-finite value in row {} / {}", self.event, self.estimator));
        }
        if !(self.ci_lo <= self.mean && self.mean <= self.ci_hi) {
            return Err(format!("interval does not bracket the mean in row {} / {}", self.event, self.estimator));
        }
        Ok(())
    }

    /// The row without `run_id` and `wallclock_s`, the fields that legitimately
    /// differ between reruns.
    pub fn reproducible_fields(&self) -> String {
        let mut r = self.clone();
        r.run_id.clear();
        r.wallclock_s = 0.0;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(&r).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Fixed columns shared by the rows of one run.
#[derive(Debug, Clone)]
pub struct RowContext {
    pub run_id: String,
    pub graph: String,
    pub d: usize,
    pub k: Option<u32>,
    pub geometry: String,
    pub p: Option<f64>,
    pub m: Option<u32>,
    pub n: Option<u32>,
    pub seed: u64,
}

impl RowContext {
    pub fn estimate(&self, event: &str, estimator: &str, e: &Estimate) -> ResultRow {
        ResultRow {
            run_id: self.run_id.clone(),
            graph: self.graph.clone(),
            d: self.d,
            k: self.k,
            geometry: self.geometry.clone(),
            p: self.p,
            m: self.m,
            n: self.n,
            event: event.to_string(),
            estimator: estimator.to_string(),
            mean: e.mean,
            stderr: e.stderr,
            ci_lo: e.ci95.0,
            ci_hi: e.ci95.1,
            n_samples: e.n_samples,
            n_accepted: e.n_accepted,
            seed: e.seed,
            wallclock_s: e.wallclock,
        }
    }

    /// A value with a normal 95% interval.
    pub fn value(&self, event: &str, estimator: &str, mean: f64, stderr: f64, samples: u64) -> ResultRow {
        let mut e = Estimate::new(mean, stderr, samples, samples, self.seed);
        e.wallclock = 0.0;
        self.estimate(event, estimator, &e)
    }

    pub fn with_p(&self, p: Option<f64>) -> Self {
        Self { p, ..self.clone() }
    }

    pub fn with_m(&self, m: Option<u32>) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn with_n(&self, n: Option<u32>) -> Self {
        Self { n, ..self.clone() }
    }
}

/// Appends rows to `path`, writing the header only when the file is new or empty.
pub fn write_results(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if fresh {
        w.write_record(HEADER).map_err(io::Error::other)?;
    }
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    file.write_all(&bytes)?;
    file.flush()
}

pub fn read_results(path: &Path) -> io::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header: Vec<String> = r.headers().map_err(io::Error::other)?.iter().map(String::from).collect();
    if header != HEADER {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unexpected header {header:?}")));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(io::Error::other)
}
