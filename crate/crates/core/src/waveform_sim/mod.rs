//! Time-domain Monte Carlo link simulation: PRBS source, bias-tee drive,
//! nonlinear LED dynamics, receiver with noise, discrete equalizer, slicer
//! and BER estimation.

mod ber;
mod filters;
mod prbs;
mod receiver;
mod transmitter;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ber::{
    ber_table_to_csv, eye_diagram, eye_to_csv, optimize_bias, run_ber, slice_and_count, BerRow, BiasOptimum,
    EyeSample, TRANSIENT_BITS,
};
pub use filters::FirstOrderIir;
pub use prbs::{prbs_sequence, Lfsr};
pub use receiver::{equalize_discrete, receive, Receiver};
pub use transmitter::{
    drive_waveform, input_time_constant, led_dynamic_transmit, modulation_gain, small_signal_bandwidth, LedTransmitter,
};

/// Decision threshold rule of the slicer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Midpoint of the noiseless steady-state one and zero levels.
    Midpoint,
    /// Level minimizing the counted errors over a 64-step grid.
    Optimal,
}

/// How the LED input RC stage time constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStage {
    /// Chosen so that the RC pole in cascade with the carrier pole has its
    /// −3 dB point at `f_led` of the bias point.
    MatchedBandwidth,
    /// `τ_c` of the bias point as is.
    Literal,
}

/// Settings of one waveform run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Bit rate, bit/s.
    pub data_rate: f64,
    pub prbs_order: u32,
    /// Initial LFSR state (non-zero).
    pub prbs_seed: u32,
    /// Peak-to-peak drive voltage, V.
    pub vpp: f64,
    /// DC bias current, A.
    pub i_dc: f64,
    pub samples_per_bit: usize,
    /// Counted bits (a transient of [`TRANSIENT_BITS`] is simulated on top).
    pub n_bits: usize,
    pub rng_seed: u64,
    /// Drive voltage to LED current conversion, A/V.
    pub drive_transconductance: f64,
    pub equalizer_enabled: bool,
    pub threshold_mode: ThresholdMode,
    pub input_stage: InputStage,
    /// Stop early once the Wilson interval width falls below this fraction
    /// of the BER estimate (`n_bits` stays the budget).
    pub ci_stop_ratio: Option<f64>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            data_rate: 60e6,
            prbs_order: 10,
            prbs_seed: 0x3ff,
            vpp: 2.5,
            i_dc: 0.51,
            samples_per_bit: 32,
            n_bits: 200_000,
            rng_seed: 0x5eed_1ed5,
            drive_transconductance: 0.2,
            equalizer_enabled: true,
            threshold_mode: ThresholdMode::Midpoint,
            input_stage: InputStage::MatchedBandwidth,
            ci_stop_ratio: None,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.data_rate > 0.0 && self.data_rate.is_finite()) {
            return Err(Error::validation("data_rate must be positive"));
        }
        if self.samples_per_bit < 8 {
            return Err(Error::validation("samples_per_bit must be at least 8"));
        }
        if !(self.i_dc >= 0.0 && self.i_dc.is_finite()) {
            return Err(Error::validation("i_dc must be non-negative"));
        }
        if !(self.vpp >= 0.0 && self.drive_transconductance >= 0.0) {
            return Err(Error::validation("vpp and drive_transconductance must be non-negative"));
        }
        if self.prbs_seed == 0 {
            return Err(Error::validation("PRBS seed must be non-zero"));
        }
        if let Some(r) = self.ci_stop_ratio {
            if !(r > 0.0) {
                return Err(Error::validation("ci_stop_ratio must be positive"));
            }
        }
        Ok(())
    }

    /// Simulation time step, s.
    pub fn dt(&self) -> f64 {
        1.0 / (self.data_rate * self.samples_per_bit as f64)
    }

    /// Current swing amplitude `g·vpp/2`, A.
    pub fn swing(&self) -> f64 {
        0.5 * self.drive_transconductance * self.vpp
    }

    /// Drive current for a zero and a one bit.
    pub fn levels(&self) -> (f64, f64) {
        (self.i_dc - self.swing(), self.i_dc + self.swing())
    }
}

/// BER estimate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Squared Q-factor `((μ1 − μ0)/(σ1 + σ0))²` of the decision samples.
    pub snr_estimate: f64,
}

impl BerResult {
    pub(crate) fn new(bits: u64, errors: u64, snr_estimate: f64) -> Self {
        let (lo, hi) = crate::numeric::wilson_interval(errors, bits, crate::numeric::Z95);
        let ber = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
        Self {
            bits,
            errors,
            ber,
            ci95_low: lo.min(ber),
            ci95_high: hi.max(ber),
            snr_estimate,
        }
    }
}
