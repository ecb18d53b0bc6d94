//! Exact, order-independent accumulators.
//!
//! Real values are summed in 2^-64 fixed point on `i128`, so merging is plain
//! integer addition: associative, commutative and bit-reproducible under any
//! sharding of an ensemble.

use serde::{Deserialize, Serialize};

const SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Fixed-point sum of reals with magnitude below 2^62.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactSum(i128);

impl ExactSum {
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite() && x.abs() < 4.6e18, "value out of fixed-point range: {x}");
        self.0 += (x * SCALE).round() as i128;
    }

    pub fn merge(&mut self, other: ExactSum) {
        self.0 += other.0;
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / SCALE
    }
}

/// Count, sum and sum of squares of a real-valued sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: ExactSum,
    pub sumsq: ExactSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.merge(other.sum);
        self.sumsq.merge(other.sumsq);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.sumsq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Anything that can absorb another partial result of the same kind.
pub trait Merge {
    fn merge_from(&mut self, other: Self);
}

impl Merge for Moments {
    fn merge_from(&mut self, other: Self) {
        self.merge(&other);
    }
}

impl<T: Merge> Merge for Vec<T> {
    fn merge_from(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "merging accumulators of different shapes");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge_from(b);
        }
    }
}

/// Success counts over a fixed list of thresholds, plus censored counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n: u64,
    pub hits: Vec<u64>,
    pub censored: Vec<u64>,
}

impl Counts {
    pub fn new(len: usize) -> Self {
        Counts { n: 0, hits: vec![0; len], censored: vec![0; len] }
    }
}

impl Merge for Counts {
    fn merge_from(&mut self, other: Self) {
        self.n += other.n;
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        for (a, b) in self.censored.iter_mut().zip(other.censored) {
            *a += b;
        }
    }
}
