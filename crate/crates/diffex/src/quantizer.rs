//! Finite-range probabilistic scalar quantizer.
//!
//! A rate budget of `R` bits per dimension buys `M = 2^R` uniformly spaced
//! grid levels spanning `[-U, +U]` with resolution `Delta = 2U / (2^R - 1)`.
//! Each coordinate rounds to one of the two enclosing levels with
//! probability proportional to its distance from the other, which makes the
//! output an unbiased estimate of the input with per-coordinate error
//! variance at most `Delta^2 / 4`. Inputs exceeding the dynamic range in
//! sup-norm *saturate*; saturation is reported as an outcome, never an
//! error, because the simulation engine turns it into a run-terminating
//! failure event.

use rand::Rng;
use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("rate must be at least 1 bit per dimension, got {0}")]
    InvalidRate(u32),
    #[error("dynamic range must be positive and finite, got {0}")]
    InvalidRange(f64),
}

/// A uniform grid of `2^R` levels over `[-U, +U]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    rate_bits: u32,
    dynamic_range: f64,
    resolution: f64,
}

/// Result of quantizing one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeOutcome {
    /// Per-coordinate grid levels. When `saturated`, out-of-range
    /// coordinates are clamped to the nearest end level; callers treat the
    /// whole value as unusable.
    pub value: Vector,
    /// True iff some input coordinate exceeded the dynamic range (strictly).
    pub saturated: bool,
}

impl QuantizerSpec {
    pub fn new(rate_bits: u32, dynamic_range: f64) -> Result<Self, QuantizerError> {
        if rate_bits == 0 || rate_bits > 52 {
            return Err(QuantizerError::InvalidRate(rate_bits));
        }
        if !dynamic_range.is_finite() || dynamic_range <= 0.0 {
            return Err(QuantizerError::InvalidRange(dynamic_range));
        }
        let levels = (1u64 << rate_bits) as f64;
        Ok(QuantizerSpec {
            rate_bits,
            dynamic_range,
            resolution: 2.0 * dynamic_range / (levels - 1.0),
        })
    }

    /// Bits per dimension `R`.
    pub fn rate_bits(&self) -> u32 {
        self.rate_bits
    }

    /// Dynamic range `U` (grid endpoints are `-U` and `+U`).
    pub fn dynamic_range(&self) -> f64 {
        self.dynamic_range
    }

    /// Grid size `M = 2^R`.
    pub fn levels(&self) -> u64 {
        1u64 << self.rate_bits
    }

    /// Resolution `Delta = 2U / (2^R - 1)`.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// The `i`-th grid level, `i` in `0..M`. Dividing last keeps the
    /// endpoints exactly `+-U` and the grid bitwise symmetric about zero.
    pub fn level(&self, i: u64) -> f64 {
        debug_assert!(i < self.levels());
        let m1 = (self.levels() - 1) as f64;
        self.dynamic_range * (2.0 * i as f64 - m1) / m1
    }

    /// Quantizes each coordinate independently with probabilistic rounding.
    ///
    /// A coordinate `v` in cell `[u_j, u_{j+1})` maps to `u_j` with
    /// probability `(u_{j+1} - v) / Delta` and to `u_{j+1}` otherwise;
    /// `v = +U` maps to the top level deterministically. Coordinates with
    /// `|v| > U` set the `saturated` flag.
    pub fn quantize<R: Rng + ?Sized>(&self, v: &Vector, rng: &mut R) -> QuantizeOutcome {
        let u = self.dynamic_range;
        let delta = self.resolution;
        let top_cell = self.levels() - 2;
        let mut saturated = false;
        let value = Vector::from_iterator(
            v.len(),
            v.iter().map(|&x| {
                if x.abs() > u || x.is_nan() {
                    saturated = true;
                }
                let clamped = x.clamp(-u, u);
                let cell = (((clamped + u) / delta).floor() as i64).clamp(0, top_cell as i64)
                    as u64;
                let lo = self.level(cell);
                let hi = self.level(cell + 1);
                let keep_lo = ((hi - clamped) / delta).clamp(0.0, 1.0);
                if rng.random::<f64>() < keep_lo {
                    lo
                } else {
                    hi
                }
            }),
        );
        QuantizeOutcome { value, saturated }
    }
}
