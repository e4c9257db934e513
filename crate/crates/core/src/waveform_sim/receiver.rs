//! Photodiode, transimpedance stage with its noise, and the discrete equalizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::link_model::{Equalizer, LinkConfig};

use super::filters::FirstOrderIir;
use super::WaveformConfig;

/// Number of noise samples run through the filter before the first output.
const NOISE_WARMUP: usize = 256;

/// Streaming receiver: optical power in, voltage out.
///
/// Noise is white Gaussian at the filter input, scaled so its RMS after the
/// receiver pole equals `noise_rms`. When the receiver pole lies above
/// 0.45 of the sample rate the filter is bypassed and white noise of RMS
/// `noise_rms` is added directly.
#[derive(Debug, Clone)]
pub struct Receiver {
    gain: f64,
    lpf: Option<FirstOrderIir>,
    input_noise: f64,
    rng: ChaCha8Rng,
}

impl Receiver {
    pub fn new(cfg: &LinkConfig, dt: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let lpf = if cfg.pd_bandwidth * dt < 0.45 {
            FirstOrderIir::lowpass(cfg.pd_bandwidth, dt)
        } else {
            None
        };
        let input_noise = match &lpf {
            Some(f) => cfg.noise_rms / f.noise_gain().sqrt(),
            None => cfg.noise_rms,
        };
        Ok(Self {
            gain: cfg.optical_to_voltage_gain(),
            lpf,
            input_noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// DC volts per watt of received optical power at the LED.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Puts the receiver in steady state for constant optical input `p`,
    /// including a settled noise history.
    pub fn settle(&mut self, p: f64) {
        if let Some(f) = self.lpf.as_mut() {
            f.settle(self.gain * p);
        }
        if self.input_noise > 0.0 && self.lpf.is_some() {
            for _ in 0..NOISE_WARMUP {
                self.step(p);
            }
        }
    }

    #[inline]
    pub fn step(&mut self, p: f64) -> f64 {
        let noise = if self.input_noise > 0.0 {
            self.input_noise * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let x = self.gain * p + noise;
        match self.lpf.as_mut() {
            Some(f) => f.process(x),
            None => x,
        }
    }
}

/// Received voltage waveform for an optical power waveform, noise drawn from
/// `wcfg.rng_seed`.
pub fn receive(power: &[f64], cfg: &LinkConfig, wcfg: &WaveformConfig) -> Result<Vec<f64>> {
    let mut rx = Receiver::new(cfg, wcfg.dt(), wcfg.rng_seed)?;
    if let Some(&p0) = power.first() {
        rx.settle(p0);
    }
    Ok(power.iter().map(|&p| rx.step(p)).collect())
}

/// Applies the bilinear equalizer (identity when `eq` is `None`), starting in
/// steady state at the first sample.
pub fn equalize_discrete(v: &[f64], eq: Option<&Equalizer>, dt: f64) -> Vec<f64> {
    let Some(eq) = eq else {
        return v.to_vec();
    };
    let mut f = FirstOrderIir::equalizer(eq, dt);
    if let Some(&v0) = v.first() {
        f.settle(v0);
    }
    v.iter().map(|&x| f.process(x)).collect()
}
