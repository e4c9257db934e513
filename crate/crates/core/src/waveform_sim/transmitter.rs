//! Bias-tee drive and the nonlinear dynamic LED: an input RC stage followed by
//! the carrier rate equation, integrated with classical RK4.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::led_device::{
    differential_lifetime, equivalent_bandwidth, optical_power_from_density, solve_carrier_density, LedParams,
};

use super::{InputStage, WaveformConfig};

/// Rectangular NRZ current waveform `I_dc ± g·vpp/2`, `samples_per_bit` samples per bit.
pub fn drive_waveform(bits: &[bool], cfg: &WaveformConfig) -> Vec<f64> {
    let (lo, hi) = cfg.levels();
    bits.iter()
        .flat_map(|&b| std::iter::repeat_n(if b { hi } else { lo }, cfg.samples_per_bit))
        .collect()
}

/// Time constant of the input RC stage at bias `i_dc`, s.
///
/// `Literal` returns `τ_c`. `MatchedBandwidth` returns the `τ` for which
/// `(1 + ω²τ_d²)(1 + ω²τ²) = 2` at `ω = 2π·f_led`, where `τ_d` is the
/// differential lifetime of the rate equation; the cascade of both poles then
/// has its −3 dB point exactly at `f_led`.
pub fn input_time_constant(p: &LedParams, i_dc: f64, stage: InputStage) -> Result<f64> {
    let op = equivalent_bandwidth(i_dc, p)?;
    match stage {
        InputStage::Literal => Ok(op.tau_c),
        InputStage::MatchedBandwidth => {
            let tau_d = differential_lifetime(op.carrier_density, p)?;
            let w = 2.0 * PI * op.f_led;
            let x = 2.0 / (1.0 + (w * tau_d).powi(2)) - 1.0;
            if !(x >= 0.0) {
                return Err(Error::numerical(format!(
                    "carrier pole alone is slower than f_led at I = {i_dc:e} A"
                )));
            }
            Ok(x.sqrt() / w)
        }
    }
}

/// Streaming LED model. State: filtered drive current and carrier density.
#[derive(Debug, Clone)]
pub struct LedTransmitter {
    p: LedParams,
    tau_rc: f64,
    dt: f64,
    substeps: usize,
    inv_qv: f64,
    n_on: f64,
    i_f: f64,
    n: f64,
}

impl LedTransmitter {
    /// Starts in steady state at `i_dc` with sample interval `dt`.
    pub fn new(p: &LedParams, i_dc: f64, dt: f64, stage: InputStage) -> Result<Self> {
        p.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::validation("time step must be positive"));
        }
        let tau_rc = input_time_constant(p, i_dc, stage)?;
        let n = solve_carrier_density(i_dc, p)?;
        let tau_d = differential_lifetime(n, p)?;
        // Keep each internal step well inside the RK4 stability region.
        let fastest = if tau_rc > 0.0 { tau_rc.min(tau_d) } else { tau_d };
        let substeps = (dt / (0.5 * fastest)).ceil().max(1.0) as usize;
        Ok(Self {
            p: p.clone(),
            tau_rc,
            dt,
            substeps,
            inv_qv: 1.0 / p.charge_volume(),
            n_on: solve_carrier_density(p.turn_on_current, p)?,
            i_f: i_dc,
            n,
        })
    }

    pub fn tau_rc(&self) -> f64 {
        self.tau_rc
    }

    pub fn carrier_density(&self) -> f64 {
        self.n
    }

    pub fn filtered_current(&self) -> f64 {
        self.i_f
    }

    fn derivs(&self, u: f64, i_f: f64, n: f64) -> (f64, f64) {
        let di = if self.tau_rc > 0.0 { (u - i_f) / self.tau_rc } else { 0.0 };
        let p = &self.p;
        let rate = n * (p.srh_coeff + n * (p.radiative_coeff + n * p.auger_coeff));
        // The diode conducts no reverse current.
        (di, i_f.max(0.0) * self.inv_qv - rate)
    }

    /// Advances one sample with the drive current held at `u`; returns the
    /// optical power at the end of the sample, W.
    pub fn step(&mut self, u: f64) -> Result<f64> {
        if self.tau_rc == 0.0 {
            self.i_f = u;
        }
        let h = self.dt / self.substeps as f64;
        for _ in 0..self.substeps {
            let (i0, n0) = (self.i_f, self.n);
            let (k1i, k1n) = self.derivs(u, i0, n0);
            let (k2i, k2n) = self.derivs(u, i0 + 0.5 * h * k1i, n0 + 0.5 * h * k1n);
            let (k3i, k3n) = self.derivs(u, i0 + 0.5 * h * k2i, n0 + 0.5 * h * k2n);
            let (k4i, k4n) = self.derivs(u, i0 + h * k3i, n0 + h * k3n);
            self.i_f = i0 + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
            self.n = n0 + h / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n);
            if !(self.n >= 0.0) || !self.i_f.is_finite() {
                return Err(Error::numerical(format!(
                    "rate equation became unstable (N = {:e}); reduce dt",
                    self.n
                )));
            }
        }
        Ok(self.output())
    }

    /// Optical power of the current state. Zero while the carrier density is
    /// below the steady-state density at the turn-on current.
    pub fn output(&self) -> f64 {
        if self.n < self.n_on || self.n <= 0.0 {
            0.0
        } else {
            optical_power_from_density(self.n, &self.p)
        }
    }
}

/// Optical power waveform for a drive current waveform sampled every `dt`,
/// starting in steady state at `i_dc`.
pub fn led_dynamic_transmit(
    current: &[f64],
    p: &LedParams,
    dt: f64,
    i_dc: f64,
    stage: InputStage,
) -> Result<Vec<f64>> {
    let mut tx = LedTransmitter::new(p, i_dc, dt, stage)?;
    current.iter().map(|&u| tx.step(u)).collect()
}

const SAMPLES_PER_PERIOD: usize = 256;

/// Magnitude of the optical modulation per ampere of sinusoidal drive
/// modulation `depth·i_dc·sin(2πft)`, measured by lock-in on the nonlinear model.
pub fn modulation_gain(p: &LedParams, i_dc: f64, freq: f64, depth: f64, stage: InputStage) -> Result<f64> {
    if !(freq > 0.0 && depth > 0.0) {
        return Err(Error::validation("frequency and depth must be positive"));
    }
    let dt = 1.0 / (freq * SAMPLES_PER_PERIOD as f64);
    let mut tx = LedTransmitter::new(p, i_dc, dt, stage)?;
    let amp = depth * i_dc;
    let w = 2.0 * PI * freq;
    let settle_time = 20.0 * (tx.tau_rc() + differential_lifetime(tx.carrier_density(), p)?);
    let settle_periods = (settle_time * freq).ceil().max(2.0) as usize;
    let measure_periods = 8;
    let mut k = 0usize;
    for _ in 0..settle_periods * SAMPLES_PER_PERIOD {
        // Input held at its mid-step value.
        tx.step(i_dc + amp * (w * (k as f64 + 0.5) * dt).sin())?;
        k += 1;
    }
    let (mut re, mut im) = (0.0, 0.0);
    let m = measure_periods * SAMPLES_PER_PERIOD;
    for _ in 0..m {
        let y = tx.step(i_dc + amp * (w * (k as f64 + 0.5) * dt).sin())?;
        k += 1;
        let phase = w * k as f64 * dt;
        re += y * phase.sin();
        im += y * phase.cos();
    }
    Ok(2.0 / m as f64 * re.hypot(im) / amp)
}

/// −3 dB frequency of the nonlinear model under small-signal drive, found by
/// bisection on log-frequency against the gain at `f_led/100`.
pub fn small_signal_bandwidth(p: &LedParams, i_dc: f64, depth: f64, stage: InputStage) -> Result<f64> {
    let f_led = equivalent_bandwidth(i_dc, p)?.f_led;
    let reference = modulation_gain(p, i_dc, f_led / 100.0, depth, stage)?;
    let target = reference * FRAC_1_SQRT_2;
    let (mut lo, mut hi) = ((f_led / 10.0).ln(), (f_led * 10.0).ln());
    if modulation_gain(p, i_dc, hi.exp(), depth, stage)? > target {
        return Err(Error::BandwidthExceedsGrid { max_freq: hi.exp() });
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if modulation_gain(p, i_dc, mid.exp(), depth, stage)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
