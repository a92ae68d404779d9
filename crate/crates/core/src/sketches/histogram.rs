use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::gk::GkSketch;
use crate::error::{Error, Result};
use crate::value::Value;

/// Equi-height histogram whose inner borders are GK quantiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_count: usize,
    pub min: Value,
    pub max: Value,
    /// `bucket_count - 1` right borders, non-decreasing.
    pub boundaries: Vec<Value>,
    pub total: u64,
}

impl Histogram {
    pub fn from_sketch(sketch: &GkSketch, buckets: usize) -> Result<Self> {
        if sketch.is_empty() {
            return Err(Error::EmptySketch);
        }
        let buckets = buckets.max(1);
        let mut boundaries = Vec::with_capacity(buckets - 1);
        for i in 1..buckets {
            boundaries.push(sketch.quantile(i as f64 / buckets as f64)?.clone());
        }
        // quantile answers are individually correct but may interleave when
        // entries are tied; keep borders monotone
        for i in 1..boundaries.len() {
            if boundaries[i] < boundaries[i - 1] {
                boundaries[i] = boundaries[i - 1].clone();
            }
        }
        Ok(Histogram {
            bucket_count: buckets,
            min: sketch.quantile(0.0)?.clone(),
            max: sketch.quantile(1.0)?.clone(),
            boundaries,
            total: sketch.count(),
        })
    }

    fn edges(&self) -> impl Iterator<Item = (&Value, &Value)> {
        let lefts = std::iter::once(&self.min).chain(self.boundaries.iter());
        let rights = self.boundaries.iter().chain(std::iter::once(&self.max));
        lefts.zip(rights)
    }

    /// Estimated fraction of rows inside the range, interpolating uniformly
    /// within each bucket. Integer buckets are treated as half-open `(a, b]`
    /// runs of integers (the first as `[a, b]`).
    pub fn range_selectivity(&self, lo: Bound<&Value>, hi: Bound<&Value>) -> f64 {
        let per_bucket = 1.0 / self.bucket_count as f64;
        let mut total = 0.0;
        for (i, (a, b)) in self.edges().enumerate() {
            let frac = match (a.as_int(), b.as_int()) {
                (Some(a), Some(b)) => int_overlap(a, b, i == 0, lo, hi),
                _ => generic_overlap(a, b, lo, hi),
            };
            total += frac * per_bucket;
        }
        total.clamp(0.0, 1.0)
    }
}

fn int_bounds(lo: Bound<&Value>, hi: Bound<&Value>) -> Option<(f64, f64)> {
    // inclusive integer range [l, h]; None if a bound is a non-integer value
    let l = match lo {
        Bound::Unbounded => f64::NEG_INFINITY,
        Bound::Included(v) => v.as_int()? as f64,
        Bound::Excluded(v) => v.as_int()? as f64 + 1.0,
    };
    let h = match hi {
        Bound::Unbounded => f64::INFINITY,
        Bound::Included(v) => v.as_int()? as f64,
        Bound::Excluded(v) => v.as_int()? as f64 - 1.0,
    };
    Some((l, h))
}

fn int_overlap(a: i64, b: i64, first: bool, lo: Bound<&Value>, hi: Bound<&Value>) -> f64 {
    let Some((l, h)) = int_bounds(lo, hi) else {
        return 0.0;
    };
    if l > h {
        return 0.0;
    }
    let (a, b) = (a as f64, b as f64);
    let start = if first { a - 1.0 } else { a };
    if b <= start {
        // zero-width bucket: a point mass at b
        return if l <= b && b <= h { 1.0 } else { 0.0 };
    }
    let overlap = h.min(b) - (l - 1.0).max(start);
    (overlap / (b - start)).clamp(0.0, 1.0)
}

fn contains(v: &Value, lo: Bound<&Value>, hi: Bound<&Value>) -> bool {
    let above = match lo {
        Bound::Unbounded => true,
        Bound::Included(l) => v >= l,
        Bound::Excluded(l) => v > l,
    };
    let below = match hi {
        Bound::Unbounded => true,
        Bound::Included(h) => v <= h,
        Bound::Excluded(h) => v < h,
    };
    above && below
}

fn generic_overlap(a: &Value, b: &Value, lo: Bound<&Value>, hi: Bound<&Value>) -> f64 {
    match (contains(a, lo, hi), contains(b, lo, hi)) {
        (true, true) => 1.0,
        (false, false) => {
            // the range may still sit strictly inside the bucket
            let lo_inside = match lo {
                Bound::Included(l) | Bound::Excluded(l) => l > a && l < b,
                Bound::Unbounded => false,
            };
            if lo_inside {
                0.5
            } else {
                0.0
            }
        }
        _ => 0.5,
    }
}
