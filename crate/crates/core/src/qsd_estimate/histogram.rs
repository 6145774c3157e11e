use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform binning of `[lo, hi)` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Binning {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Binning { lo, hi, n }
    }

    pub fn check(&self, what: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            errs.push(format!("{what}: binning needs finite lo < hi"));
        }
        if self.n == 0 {
            errs.push(format!("{what}: binning needs at least one bin"));
        }
        errs
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Cell index of `x`; values outside `[lo, hi)` fall in no cell.
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.n - 1))
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }
}

/// Raw counts over a binning, with the number of out-of-range values.
#[derive(Debug, Clone, PartialEq)]
pub struct Counts {
    pub bins: Binning,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl Counts {
    pub fn new(bins: Binning) -> Self {
        Counts {
            bins,
            counts: vec![0; bins.n],
            outside: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        match self.bins.index(x) {
            Some(i) => self.counts[i] += 1,
            None => self.outside += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    /// Normalized histogram. Out-of-range mass is reported separately so
    /// that in-range masses plus `outside` sum to one.
    pub fn histogram(&self) -> Histogram {
        let tot = self.total().max(1) as f64;
        Histogram {
            bins: self.bins,
            mass: self.counts.iter().map(|&c| c as f64 / tot).collect(),
            outside: self.outside as f64 / tot,
            n_samples: self.total(),
        }
    }
}

/// Probability masses over a binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Binning,
    pub mass: Vec<f64>,
    pub outside: f64,
    pub n_samples: u64,
}

impl Histogram {
    pub fn from_values<I: IntoIterator<Item = f64>>(bins: Binning, values: I) -> Self {
        let mut c = Counts::new(bins);
        for x in values {
            c.add(x);
        }
        c.histogram()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.outside
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,mass")?;
        for (i, m) in self.mass.iter().enumerate() {
            let (a, b) = self.bins.edges(i);
            writeln!(w, "{a},{b},{m:e}")?;
        }
        Ok(())
    }
}

/// Total variation on bins, `(1/2) sum |p_i - q_i|`, with the out-of-range
/// mass treated as one extra bin.
pub fn binned_tv(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bins != q.bins {
        return Err(Error::Usage("histograms use different binnings".into()));
    }
    let s: f64 = p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * (s + (p.outside - q.outside).abs()))
}

/// Expected binned TV between two independent empirical histograms of the
/// same law with `n1` and `n2` samples (large-sample approximation).
pub fn tv_noise_floor(p: &Histogram, n1: u64, n2: u64) -> f64 {
    let k = (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    let cells = p.mass.iter().chain(std::iter::once(&p.outside));
    0.5 * cells
        .map(|m| (m * (1.0 - m)).max(0.0).sqrt() * k * (2.0 / std::f64::consts::PI).sqrt())
        .sum::<f64>()
}
