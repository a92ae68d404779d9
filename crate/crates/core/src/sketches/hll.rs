//! HyperLogLog distinct counter with linear-counting small-range correction.

use serde::{Deserialize, Serialize};

use super::codec::{Decoder, Encoder, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::value::Value;

/// Fixed salt so estimates are reproducible across runs and processes.
pub const HLL_SALT: u64 = 0x005e_ed0f_b10c_c0de;

pub const MIN_PRECISION: u8 = 4;
pub const MAX_PRECISION: u8 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HllSketch {
    precision: u8,
    registers: Vec<u8>,
}

impl HllSketch {
    pub fn new(precision: u8) -> Result<Self> {
        if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
            return Err(Error::SketchParameter(format!("HLL precision must lie in [{MIN_PRECISION},{MAX_PRECISION}], got {precision}")));
        }
        Ok(HllSketch { precision, registers: vec![0; 1 << precision] })
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    pub fn insert(&mut self, value: &Value) {
        self.insert_hash(value.hash64(HLL_SALT));
    }

    pub fn insert_hash(&mut self, hash: u64) {
        let p = u32::from(self.precision);
        let idx = (hash >> (64 - p)) as usize;
        let rest = hash << p;
        let rank = (rest.leading_zeros() + 1).min(64 - p + 1) as u8;
        let r = &mut self.registers[idx];
        if rank > *r {
            *r = rank;
        }
    }

    pub fn estimate(&self) -> f64 {
        let m = self.registers.len() as f64;
        let alpha = match self.registers.len() {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            _ => 0.7213 / (1.0 + 1.079 / m),
        };
        let mut sum = 0.0;
        let mut zeros = 0usize;
        for &r in &self.registers {
            sum += (-(f64::from(r))).exp2();
            if r == 0 {
                zeros += 1;
            }
        }
        let raw = alpha * m * m / sum;
        if raw <= 2.5 * m && zeros > 0 {
            m * (m / zeros as f64).ln()
        } else {
            raw
        }
    }

    pub fn merge(&self, other: &HllSketch) -> Result<HllSketch> {
        if self.precision != other.precision {
            return Err(Error::PrecisionMismatch(self.precision, other.precision));
        }
        let registers = self.registers.iter().zip(&other.registers).map(|(a, b)| *a.max(b)).collect();
        Ok(HllSketch { precision: self.precision, registers })
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u8(FORMAT_VERSION);
        enc.u8(self.precision);
        enc.u64(HLL_SALT);
        enc.bytes(&self.registers);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        dec.version()?;
        let precision = dec.u8()?;
        let salt = dec.u64()?;
        if salt != HLL_SALT {
            return Err(Error::Codec(format!("HLL salt {salt:#x} differs from build")));
        }
        let mut s = HllSketch::new(precision)?;
        let regs = dec.bytes(s.registers.len())?;
        let max_rank = 64 - precision + 1;
        if regs.iter().any(|&r| r > max_rank) {
            return Err(Error::Codec("HLL register out of range".into()));
        }
        s.registers.copy_from_slice(regs);
        Ok(s)
    }
}
