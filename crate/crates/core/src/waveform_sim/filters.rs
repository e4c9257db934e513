//! First-order discrete filters obtained by the prewarped bilinear transform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::link_model::Equalizer;

/// `y[n] = b0·x[n] + b1·x[n−1] − a1·y[n−1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderIir {
    b0: f64,
    b1: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl FirstOrderIir {
    /// Single-pole low-pass with its −3 dB point prewarped to `cutoff`.
    /// Returns `None` when the cutoff is not below Nyquist.
    pub fn lowpass(cutoff: f64, dt: f64) -> Option<Self> {
        if !(cutoff * dt < 0.5) {
            return None;
        }
        let c = (PI * cutoff * dt).tan();
        let b0 = c / (1.0 + c);
        Some(Self {
            b0,
            b1: b0,
            a1: (c - 1.0) / (1.0 + c),
            x1: 0.0,
            y1: 0.0,
        })
    }

    /// Zero-pole equalizer prewarped at its zero frequency.
    pub fn equalizer(eq: &Equalizer, dt: f64) -> Self {
        let beta = 1.0 / (PI * eq.zero_freq() * dt).tan();
        let k = eq.pole_ratio;
        let a0 = 1.0 + beta / k;
        Self {
            b0: (1.0 + beta) / (k * a0),
            b1: (1.0 - beta) / (k * a0),
            a1: (1.0 - beta / k) / a0,
            x1: 0.0,
            y1: 0.0,
        }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1) / (1.0 + self.a1)
    }

    /// Sum of the squared impulse response: output variance per unit white input variance.
    pub fn noise_gain(&self) -> f64 {
        // h0 = b0, h_n = (b1 − a1·b0)·p^(n−1) with p = −a1.
        let p = -self.a1;
        let c = self.b1 + p * self.b0;
        self.b0 * self.b0 + c * c / (1.0 - p * p)
    }

    /// Puts the filter in steady state for a constant input `x`.
    pub fn settle(&mut self, x: f64) {
        self.x1 = x;
        self.y1 = x * self.dc_gain();
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    /// Frequency response at `f` for sample interval `dt`.
    pub fn response_at(&self, f: f64, dt: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
        (self.b0 + self.b1 * z1) / (1.0 + self.a1 * z1)
    }
}
