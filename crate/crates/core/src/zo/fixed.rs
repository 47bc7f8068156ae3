//! Saturating two's-complement Q-format with round-to-nearest-even.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ZoError;

/// `Qm.n` with `m + n = total_bits`; `m` counts the sign bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FixedPointFormat {
    pub const Q16_16: FixedPointFormat = FixedPointFormat { total_bits: 32, frac_bits: 16 };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, ZoError> {
        if !matches!(total_bits, 16 | 32) || frac_bits == 0 || frac_bits >= total_bits {
            return Err(ZoError::InvalidConfig(format!(
                "fixed-point format needs total_bits in {{16, 32}} and 0 < frac_bits < total_bits, got {total_bits}/{frac_bits}"
            )));
        }
        Ok(FixedPointFormat { total_bits, frac_bits })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Smallest representable step, `2^-frac_bits`.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        self.dequantize(self.min_raw())
    }

    pub fn max_value(&self) -> f64 {
        self.dequantize(self.max_raw())
    }

    /// Scales by `2^frac_bits`, rounds half to even and saturates. NaN maps to zero.
    pub fn quantize(&self, x: f64) -> i64 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        if scaled >= self.max_raw() as f64 {
            self.max_raw()
        } else if scaled <= self.min_raw() as f64 {
            self.min_raw()
        } else {
            scaled as i64
        }
    }

    pub fn dequantize(&self, q: i64) -> f64 {
        q as f64 * self.resolution()
    }

    /// `dequantize(quantize(x))`.
    pub fn round_trip(&self, x: f64) -> f64 {
        self.dequantize(self.quantize(x))
    }

    pub fn quantize_slice(&self, xs: &mut [f64]) {
        for x in xs {
            *x = self.round_trip(*x);
        }
    }
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        FixedPointFormat::Q16_16
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total_bits - self.frac_bits, self.frac_bits)
    }
}

impl FromStr for FixedPointFormat {
    type Err = ZoError;

    /// Accepts `Qm.n`, e.g. `Q16.16` or `Q8.8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ZoError::InvalidConfig(format!("unrecognized fixed-point format {s:?}"));
        let body = s.strip_prefix('Q').or_else(|| s.strip_prefix('q')).ok_or_else(bad)?;
        let (m, n) = body.split_once('.').ok_or_else(bad)?;
        let m: u32 = m.parse().map_err(|_| bad())?;
        let n: u32 = n.parse().map_err(|_| bad())?;
        FixedPointFormat::new(m + n, n)
    }
}
