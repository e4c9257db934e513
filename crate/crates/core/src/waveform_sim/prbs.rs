//! Maximal-length pseudorandom binary sequences from a Fibonacci LFSR.

use crate::error::{Error, Result};

/// Feedback taps (1-based stage numbers) of the ITU-T PRBS polynomials
/// `x^order + x^tap + 1`.
fn tap_for(order: u32) -> Option<u32> {
    match order {
        7 => Some(6),
        9 => Some(5),
        10 => Some(7),
        11 => Some(9),
        15 => Some(14),
        23 => Some(18),
        31 => Some(28),
        _ => None,
    }
}

/// Fibonacci linear-feedback shift register.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u32,
    order: u32,
    tap: u32,
    mask: u32,
}

impl Lfsr {
    /// Creates a register for `x^order + x^tap + 1` starting from `seed`
    /// (only the low `order` bits are used; they must not all be zero).
    pub fn new(order: u32, seed: u32) -> Result<Self> {
        let tap = tap_for(order).ok_or_else(|| Error::validation(format!("unsupported PRBS order {order}")))?;
        let mask = (1u32 << order) - 1;
        let state = seed & mask;
        if state == 0 {
            return Err(Error::validation("PRBS seed must be non-zero"));
        }
        Ok(Self { state, order, tap, mask })
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Sequence period, `2^order − 1`.
    pub fn period(&self) -> u64 {
        (1u64 << self.order) - 1
    }

    /// Shifts once and returns the new bit.
    pub fn next_bit(&mut self) -> bool {
        let bit = ((self.state >> (self.order - 1)) ^ (self.state >> (self.tap - 1))) & 1;
        self.state = ((self.state << 1) | bit) & self.mask;
        bit == 1
    }
}

impl Iterator for Lfsr {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.next_bit())
    }
}

/// `n_bits` of the PRBS of the given order, repeating cyclically.
pub fn prbs_sequence(order: u32, seed: u32, n_bits: usize) -> Result<Vec<bool>> {
    Ok(Lfsr::new(order, seed)?.take(n_bits).collect())
}
