//! Greenwald-Khanna epsilon-approximate quantile summary.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::codec::{Decoder, Encoder, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::value::Value;

/// One summary entry: `g` is the rank gap to the predecessor, `delta` the
/// rank uncertainty of this entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GkTuple {
    pub value: Value,
    pub g: u64,
    pub delta: u64,
}

/// Rank error stays within `eps * n`; the summary holds at most
/// `2 / eps * log2(eps * n + 2)` tuples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GkSketch {
    epsilon: f64,
    tuples: Vec<GkTuple>,
    count: u64,
    #[serde(skip)]
    since_compress: u64,
}

impl PartialEq for GkSketch {
    fn eq(&self, other: &Self) -> bool {
        self.epsilon == other.epsilon && self.count == other.count && self.tuples == other.tuples
    }
}

impl GkSketch {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::SketchParameter(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        Ok(GkSketch { epsilon, tuples: Vec::new(), count: 0, since_compress: 0 })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn tuples(&self) -> &[GkTuple] {
        &self.tuples
    }

    fn threshold(&self) -> u64 {
        (2.0 * self.epsilon * self.count as f64).floor() as u64
    }

    fn compress_period(&self) -> u64 {
        ((1.0 / (2.0 * self.epsilon)).floor() as u64).max(1)
    }

    pub fn insert(&mut self, value: Value) {
        let idx = self.tuples.partition_point(|t| t.value <= value);
        let delta = if idx == 0 || idx == self.tuples.len() { 0 } else { self.threshold() };
        self.tuples.insert(idx, GkTuple { value, g: 1, delta });
        self.count += 1;
        self.since_compress += 1;
        if self.since_compress >= self.compress_period() {
            self.compress();
        }
    }

    /// Merges adjacent entries whose combined band stays within
    /// `floor(2 * epsilon * count)`. The first and last entries (exact min and
    /// max) are never absorbed.
    pub fn compress(&mut self) {
        self.since_compress = 0;
        let n = self.tuples.len();
        if n < 3 {
            return;
        }
        let threshold = self.threshold();
        let mut tuples = std::mem::take(&mut self.tuples);
        let first = tuples.remove(0);
        let mut out: Vec<GkTuple> = Vec::with_capacity(n);
        out.push(tuples.pop().expect("n >= 3"));
        for t in tuples.into_iter().rev() {
            let top = out.last_mut().expect("non-empty");
            if t.g + top.g + top.delta <= threshold {
                top.g += t.g;
            } else {
                out.push(t);
            }
        }
        out.push(first);
        out.reverse();
        self.tuples = out;
    }

    /// Returns a value whose rank is within the summary's error of
    /// `ceil(phi * count)`.
    pub fn quantile(&self, phi: f64) -> Result<&Value> {
        if self.tuples.is_empty() {
            return Err(Error::EmptySketch);
        }
        let phi = phi.clamp(0.0, 1.0);
        if phi <= 0.0 {
            return Ok(&self.tuples[0].value);
        }
        if phi >= 1.0 {
            return Ok(&self.tuples[self.tuples.len() - 1].value);
        }
        let target = ((phi * self.count as f64).ceil() as u64).clamp(1, self.count);
        let mut rmin = 0u64;
        let mut best = 0usize;
        let mut best_err = u64::MAX;
        for (i, t) in self.tuples.iter().enumerate() {
            rmin += t.g;
            let rmax = rmin + t.delta;
            let err = target.saturating_sub(rmin).max(rmax.saturating_sub(target));
            if err < best_err {
                best_err = err;
                best = i;
            }
            if rmin > target {
                break;
            }
        }
        Ok(&self.tuples[best].value)
    }

    /// Combines two summaries built over disjoint streams. Each entry's
    /// uncertainty grows by the rank gap of its successor in the other
    /// summary, then the union is compressed. The operands are ordered
    /// canonically, so `a.merge(b)` and `b.merge(a)` are identical.
    pub fn merge(&self, other: &GkSketch) -> Result<GkSketch> {
        if (self.epsilon - other.epsilon).abs() > 1e-12 {
            return Err(Error::EpsilonMismatch(self.epsilon, other.epsilon));
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let (a, b) = if canonical_cmp(self, other) == Ordering::Greater { (other, self) } else { (self, other) };
        let mut merged = Vec::with_capacity(a.tuples.len() + b.tuples.len());
        let (mut i, mut j) = (0, 0);
        while i < a.tuples.len() || j < b.tuples.len() {
            let take_a = j >= b.tuples.len() || (i < a.tuples.len() && a.tuples[i].value <= b.tuples[j].value);
            if take_a {
                let t = &a.tuples[i];
                // ties place `a` entries first, so the successor in `b` is the
                // first entry with value >= t.value, i.e. index j.
                let extra = b.tuples.get(j).map_or(0, |s| s.g + s.delta - 1);
                merged.push(GkTuple { value: t.value.clone(), g: t.g, delta: t.delta + extra });
                i += 1;
            } else {
                let t = &b.tuples[j];
                let extra = a.tuples.get(i).map_or(0, |s| s.g + s.delta - 1);
                merged.push(GkTuple { value: t.value.clone(), g: t.g, delta: t.delta + extra });
                j += 1;
            }
        }
        // first and last entries carry exact extreme ranks
        if let Some(t) = merged.first_mut() {
            t.delta = 0;
        }
        if let Some(t) = merged.last_mut() {
            t.delta = 0;
        }
        let mut out = GkSketch { epsilon: self.epsilon, tuples: merged, count: a.count + b.count, since_compress: 0 };
        out.compress();
        Ok(out)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u8(FORMAT_VERSION);
        enc.f64(self.epsilon);
        enc.u64(self.count);
        enc.u32(self.tuples.len() as u32);
        for t in &self.tuples {
            enc.value(&t.value);
            enc.u64(t.g);
            enc.u64(t.delta);
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        dec.version()?;
        let epsilon = dec.f64()?;
        let count = dec.u64()?;
        let n = dec.u32()? as usize;
        let mut tuples = Vec::with_capacity(n);
        for _ in 0..n {
            let value = dec.value()?;
            let g = dec.u64()?;
            let delta = dec.u64()?;
            tuples.push(GkTuple { value, g, delta });
        }
        let mut s = GkSketch::new(epsilon)?;
        if tuples.iter().map(|t| t.g).sum::<u64>() != count {
            return Err(Error::Codec("GK gap sum does not match count".into()));
        }
        s.tuples = tuples;
        s.count = count;
        Ok(s)
    }
}

fn canonical_cmp(a: &GkSketch, b: &GkSketch) -> Ordering {
    a.count
        .cmp(&b.count)
        .then_with(|| a.tuples.iter().map(|t| (&t.value, t.g, t.delta)).cmp(b.tuples.iter().map(|t| (&t.value, t.g, t.delta))))
}
