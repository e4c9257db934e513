//! Frequency-domain view of the link.
//!
//! Every block (LED, optical channel, photodiode/TIA, post-equalizer) is a
//! sampled complex transfer function on a shared frequency grid. Blocks are
//! cascaded by pointwise multiplication and the −3 dB bandwidth is read off
//! the first downward crossing, the way a network-analyzer trace is read.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::led_device::{equivalent_bandwidth, LedParams, OperatingPoint};
use crate::numeric::log_grid;

/// Sampled complex transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    freqs: Vec<f64>,
    gains: Vec<Complex64>,
    reference_gain: Complex64,
}

impl FrequencyResponse {
    /// Builds a response, using the gain at the lowest frequency as reference.
    pub fn new(freqs: Vec<f64>, gains: Vec<Complex64>) -> Result<Self> {
        let reference = *gains
            .first()
            .ok_or_else(|| Error::validation("frequency response is empty"))?;
        Self::with_reference(freqs, gains, reference)
    }

    pub fn with_reference(freqs: Vec<f64>, gains: Vec<Complex64>, reference_gain: Complex64) -> Result<Self> {
        if freqs.len() != gains.len() {
            return Err(Error::validation(format!(
                "{} frequencies but {} gains",
                freqs.len(),
                gains.len()
            )));
        }
        if freqs.is_empty() {
            return Err(Error::validation("frequency response is empty"));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) || !(freqs[0] >= 0.0) {
            return Err(Error::validation("frequencies must be non-negative and strictly increasing"));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::validation("gains must be finite"));
        }
        Ok(Self {
            freqs,
            gains,
            reference_gain,
        })
    }

    /// Evaluates a closed-form transfer function on a grid.
    pub fn from_fn(freqs: &[f64], mut h: impl FnMut(f64) -> Complex64, reference_gain: Complex64) -> Result<Self> {
        let gains = freqs.iter().map(|&f| h(f)).collect();
        Self::with_reference(freqs.to_vec(), gains, reference_gain)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn reference_gain(&self) -> Complex64 {
        self.reference_gain
    }

    /// Magnitudes relative to the reference gain, in dB.
    pub fn magnitude_db(&self) -> Vec<f64> {
        let r = self.reference_gain.norm();
        self.gains.iter().map(|g| 20.0 * (g.norm() / r).log10()).collect()
    }

    /// Phases in degrees.
    pub fn phase_deg(&self) -> Vec<f64> {
        self.gains.iter().map(|g| g.arg().to_degrees()).collect()
    }

    /// CSV with columns `freq_Hz,mag_dB,phase_deg` (magnitude relative to the reference gain).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_Hz,mag_dB,phase_deg\n");
        for ((f, m), ph) in self.freqs.iter().zip(self.magnitude_db()).zip(self.phase_deg()) {
            out.push_str(&format!("{f:.6e},{m:.6},{ph:.4}\n"));
        }
        out
    }
}

/// Default analysis grid: 100 kHz to 1 GHz, 50 points per decade.
pub fn default_frequency_grid() -> Vec<f64> {
    log_grid(1e5, 1e9, 50)
}

/// Line-of-sight optical channel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// A fixed DC channel gain.
    Scalar { gain: f64 },
    /// Lambertian emitter with normal incidence on the receiver.
    Lambertian {
        /// Transmitter half-power semi-angle, degrees.
        semi_angle_deg: f64,
        /// Photodetector active area, m².
        rx_area_m2: f64,
        /// Concentrator (lens) gain, dimensionless.
        lens_gain: f64,
    },
}

/// First-order zero-pole post-equalizer (RC shunt network).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equalizer {
    /// Ω
    pub resistance: f64,
    /// F
    pub capacitance: f64,
    /// Pole-to-zero frequency ratio (also the DC attenuation factor), > 1.
    pub pole_ratio: f64,
}

impl Equalizer {
    /// Zero frequency `1/(2πRC)`, Hz.
    pub fn zero_freq(&self) -> f64 {
        1.0 / (2.0 * PI * self.resistance * self.capacitance)
    }

    pub fn pole_freq(&self) -> f64 {
        self.pole_ratio * self.zero_freq()
    }

    /// Analog transfer function `(1/k)(1 + jf/f_z)/(1 + jf/(k f_z))`.
    pub fn gain_at(&self, f: f64) -> Complex64 {
        let fz = self.zero_freq();
        let k = self.pole_ratio;
        Complex64::new(1.0, f / fz) / Complex64::new(1.0, f / (k * fz)) / k
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resistance > 0.0 && self.capacitance > 0.0) {
            return Err(Error::validation("equalizer R and C must be positive"));
        }
        if !(self.pole_ratio > 1.0) {
            return Err(Error::validation("equalizer pole_ratio must exceed 1"));
        }
        Ok(())
    }
}

/// Equalizer pole ratio frozen so the equalized link reaches 40 MHz with
/// R = 1 kΩ, C = 30 pF (see `examples/tune_link_defaults.rs`).
pub const DEFAULT_POLE_RATIO: f64 = 5.0731;

/// Lens gain frozen so a 510 mA bias gives BER ≈ 4e-4 at 60 Mbit/s, the
/// fastest 10 Mbit/s step under 1e-3 (see `examples/tune_link_defaults.rs`).
pub const DEFAULT_LENS_GAIN: f64 = 702.2;

impl Default for Equalizer {
    fn default() -> Self {
        Self {
            resistance: 1e3,
            capacitance: 30e-12,
            pole_ratio: DEFAULT_POLE_RATIO,
        }
    }
}

/// Optical channel and receiver chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Link distance, m.
    pub distance: f64,
    pub channel: ChannelSpec,
    /// Photodiode responsivity, A/W.
    pub pd_responsivity: f64,
    /// Photodiode/receiver −3 dB bandwidth, Hz.
    pub pd_bandwidth: f64,
    /// Transimpedance gain, V/A.
    pub tia_gain: f64,
    /// Output-referred RMS noise after the receiver filter, V.
    pub noise_rms: f64,
    pub equalizer: Option<Equalizer>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            distance: 1.0,
            channel: ChannelSpec::Lambertian {
                semi_angle_deg: 60.0,
                rx_area_m2: 0.8e-6,
                lens_gain: DEFAULT_LENS_GAIN,
            },
            pd_responsivity: 0.45,
            pd_bandwidth: 150e6,
            tia_gain: 5e3,
            noise_rms: 1.5e-3,
            equalizer: Some(Equalizer::default()),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("distance", self.distance),
            ("pd_responsivity", self.pd_responsivity),
            ("pd_bandwidth", self.pd_bandwidth),
            ("tia_gain", self.tia_gain),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_rms >= 0.0) {
            return Err(Error::validation("noise_rms must be non-negative"));
        }
        match self.channel {
            ChannelSpec::Scalar { gain } if !(gain > 0.0) => {
                return Err(Error::validation("channel gain must be positive"))
            }
            ChannelSpec::Lambertian {
                semi_angle_deg,
                rx_area_m2,
                lens_gain,
            } => {
                if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
                    return Err(Error::validation("semi-angle must lie in (0, 90) degrees"));
                }
                if !(rx_area_m2 > 0.0 && lens_gain > 0.0) {
                    return Err(Error::validation("receiver area and lens gain must be positive"));
                }
            }
            _ => {}
        }
        if let Some(eq) = &self.equalizer {
            eq.validate()?;
        }
        Ok(())
    }

    /// Photocurrent-to-voltage DC gain per watt at the receiver input, V/W
    /// (channel × responsivity × transimpedance).
    pub fn optical_to_voltage_gain(&self) -> f64 {
        channel_gain(self) * self.pd_responsivity * self.tia_gain
    }
}

/// Lambertian mode number for a half-power semi-angle.
pub fn lambertian_order(semi_angle_deg: f64) -> f64 {
    -std::f64::consts::LN_2 / semi_angle_deg.to_radians().cos().ln()
}

/// DC optical channel gain. For a Lambertian source at normal incidence:
/// `(m+1)·A_rx·G_lens / (2π d²)`.
pub fn channel_gain(cfg: &LinkConfig) -> f64 {
    match cfg.channel {
        ChannelSpec::Scalar { gain } => gain,
        ChannelSpec::Lambertian {
            semi_angle_deg,
            rx_area_m2,
            lens_gain,
        } => {
            let m = lambertian_order(semi_angle_deg);
            (m + 1.0) * rx_area_m2 * lens_gain / (2.0 * PI * cfg.distance * cfg.distance)
        }
    }
}

/// LED small-signal block: a single real pole at `f_led` with DC gain dP/dI.
pub fn led_response(op: &OperatingPoint, freqs: &[f64]) -> Result<FrequencyResponse> {
    let f_led = op.f_led;
    let k = op.slope;
    FrequencyResponse::from_fn(freqs, |f| Complex64::new(k, 0.0) / Complex64::new(1.0, f / f_led), Complex64::new(k, 0.0))
}

/// Flat optical channel block.
pub fn channel_response(cfg: &LinkConfig, freqs: &[f64]) -> Result<FrequencyResponse> {
    let g = Complex64::new(channel_gain(cfg), 0.0);
    FrequencyResponse::from_fn(freqs, |_| g, g)
}

/// Photodiode + TIA: `R·G_tia / (1 + jf/B)`.
pub fn receiver_response(cfg: &LinkConfig, freqs: &[f64]) -> Result<FrequencyResponse> {
    let dc = cfg.pd_responsivity * cfg.tia_gain;
    let bw = cfg.pd_bandwidth;
    FrequencyResponse::from_fn(freqs, |f| Complex64::new(dc, 0.0) / Complex64::new(1.0, f / bw), Complex64::new(dc, 0.0))
}

/// Post-equalizer block.
pub fn equalizer_response(eq: &Equalizer, freqs: &[f64]) -> Result<FrequencyResponse> {
    eq.validate()?;
    FrequencyResponse::from_fn(freqs, |f| eq.gain_at(f), eq.gain_at(0.0))
}

/// Pointwise product of blocks sharing one grid.
pub fn cascade(blocks: &[FrequencyResponse]) -> Result<FrequencyResponse> {
    let (first, rest) = blocks
        .split_first()
        .ok_or_else(|| Error::validation("cascade needs at least one block"))?;
    let mut gains = first.gains.clone();
    let mut reference = first.reference_gain;
    for (i, b) in rest.iter().enumerate() {
        if b.freqs != first.freqs {
            return Err(Error::GridMismatch { index: i + 1 });
        }
        for (g, h) in gains.iter_mut().zip(&b.gains) {
            *g *= h;
        }
        reference *= b.reference_gain;
    }
    FrequencyResponse::with_reference(first.freqs.clone(), gains, reference)
}

/// First frequency where |H| falls below `|H(f_min)|/√2`, interpolated
/// linearly in dB against log-frequency between the bracketing samples.
pub fn extract_3db(resp: &FrequencyResponse) -> Result<f64> {
    let reference = resp.gains[0].norm();
    if !(reference > 0.0) {
        return Err(Error::validation("response has zero gain at the lowest frequency"));
    }
    let threshold = reference * FRAC_1_SQRT_2;
    let mags: Vec<f64> = resp.gains.iter().map(|g| g.norm()).collect();
    let k = mags
        .iter()
        .position(|&m| m < threshold)
        .ok_or(Error::BandwidthExceedsGrid {
            max_freq: *resp.freqs.last().unwrap(),
        })?;
    if k == 0 {
        return Ok(resp.freqs[0]);
    }
    let (f0, f1) = (resp.freqs[k - 1], resp.freqs[k]);
    let db = |m: f64| 20.0 * (m / reference).log10();
    let (d0, d1) = (db(mags[k - 1]), db(mags[k]));
    let target = db(threshold);
    let t = (target - d0) / (d1 - d0);
    if f0 > 0.0 {
        Ok((f0.ln() + t * (f1.ln() - f0.ln())).exp())
    } else {
        Ok(f0 + t * (f1 - f0))
    }
}

/// Which chain a bandwidth sweep measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScope {
    /// LED block only.
    Led,
    /// LED × channel × receiver.
    Link,
    /// LED × channel × receiver × equalizer.
    EqualizedLink,
}

/// One row of a bandwidth-versus-bias table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub current_a: f64,
    pub tau_s_s: f64,
    pub tau_c_s: f64,
    pub f3db_hz: f64,
}

/// Full electrical-optical-electrical response at one bias.
pub fn link_response(op: &OperatingPoint, cfg: &LinkConfig, scope: SweepScope, freqs: &[f64]) -> Result<FrequencyResponse> {
    let mut blocks = vec![led_response(op, freqs)?];
    if scope != SweepScope::Led {
        blocks.push(channel_response(cfg, freqs)?);
        blocks.push(receiver_response(cfg, freqs)?);
    }
    if scope == SweepScope::EqualizedLink {
        let eq = cfg
            .equalizer
            .as_ref()
            .ok_or_else(|| Error::validation("equalized sweep requested but no equalizer configured"))?;
        blocks.push(equalizer_response(eq, freqs)?);
    }
    cascade(&blocks)
}

/// 3-dB bandwidth for each bias current, sorted by current.
pub fn bandwidth_vs_bias_sweep(
    currents: &[f64],
    p: &LedParams,
    cfg: &LinkConfig,
    scope: SweepScope,
    freqs: &[f64],
) -> Result<Vec<BandwidthRow>> {
    let mut sorted = currents.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted
        .into_iter()
        .map(|i| {
            let op = equivalent_bandwidth(i, p)?;
            let resp = link_response(&op, cfg, scope, freqs)?;
            Ok(BandwidthRow {
                current_a: i,
                tau_s_s: op.tau_s,
                tau_c_s: op.tau_c,
                f3db_hz: extract_3db(&resp)?,
            })
        })
        .collect()
}

/// CSV with columns `current_A,f3db_Hz`.
pub fn sweep_to_csv(rows: &[BandwidthRow]) -> String {
    let mut out = String::from("current_A,f3db_Hz\n");
    for r in rows {
        out.push_str(&format!("{:.6},{:.6e}\n", r.current_a, r.f3db_hz));
    }
    out
}

pub fn sweep_to_json(rows: &[BandwidthRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pole_op(f_led: f64, slope: f64) -> OperatingPoint {
        OperatingPoint {
            i_dc: 0.5,
            carrier_density: 1e18,
            junction_voltage: 3.0,
            terminal_voltage: 3.2,
            tau_s: 1.0 / (2.0 * PI * f_led),
            tau_c: 0.0,
            f_led,
            slope,
        }
    }

    #[test]
    fn led_pole_examples() {
        let op = pole_op(7e6, 0.6);
        let r = led_response(&op, &[1.0, 7e6, 70e6]).unwrap();
        let g = r.gains();
        assert_relative_eq!(g[1].norm_sqr(), 0.5 * g[0].norm_sqr(), max_relative = 1e-9);
        assert_relative_eq!(g[0].norm(), 0.6, max_relative = 1e-9);
        let db = 20.0 * (g[2].norm() / 0.6).log10();
        assert!((db + 20.04).abs() < 0.01, "{db}");
    }

    #[test]
    fn lambertian_gain() {
        assert_relative_eq!(lambertian_order(60.0), 1.0, max_relative = 1e-12);
        let cfg = LinkConfig {
            channel: ChannelSpec::Lambertian {
                semi_angle_deg: 60.0,
                rx_area_m2: 0.8e-6,
                lens_gain: 1.0,
            },
            ..LinkConfig::default()
        };
        // (1+1)·0.8e-6 / (2π·1²) by hand
        assert_relative_eq!(channel_gain(&cfg), 2.546_479_089e-7, max_relative = 1e-9);
        let cfg = LinkConfig {
            channel: ChannelSpec::Scalar { gain: 1e-4 },
            ..LinkConfig::default()
        };
        assert_eq!(channel_gain(&cfg), 1e-4);
    }

    #[test]
    fn receiver_examples() {
        let cfg = LinkConfig::default();
        let r = receiver_response(&cfg, &[0.0, 150e6, 1e15]).unwrap();
        assert_relative_eq!(r.gains()[0].norm(), 0.45 * cfg.tia_gain);
        assert_relative_eq!(r.gains()[1].norm(), r.gains()[0].norm() * FRAC_1_SQRT_2, max_relative = 1e-12);
        assert!(r.gains()[2].norm() < 1e-3);
    }

    #[test]
    fn equalizer_examples() {
        let eq = Equalizer {
            resistance: 1e3,
            capacitance: 30e-12,
            pole_ratio: 8.0,
        };
        assert!((eq.zero_freq() - 5.305e6).abs() < 1e3);
        let r = equalizer_response(&eq, &[0.0, eq.zero_freq(), 1e15]).unwrap();
        assert_relative_eq!(r.gains()[0].norm() * 8.0, 1.0, max_relative = 1e-6);
        assert_relative_eq!(r.gains()[2].norm(), 1.0, max_relative = 1e-6);
        let expect = (1.0 / 8.0) * 2f64.sqrt() / (1.0 + 1.0 / 64.0f64).sqrt();
        assert_relative_eq!(r.gains()[1].norm(), expect, max_relative = 1e-12);
    }

    #[test]
    fn cascade_rules() {
        let grid = default_frequency_grid();
        let a = led_response(&pole_op(7e6, 1.0), &grid).unwrap();
        let b = equalizer_response(&Equalizer::default(), &grid).unwrap();
        assert_eq!(cascade(&[a.clone()]).unwrap(), a);
        assert_eq!(cascade(&[a.clone(), b.clone()]).unwrap(), cascade(&[b.clone(), a.clone()]).unwrap());
        let other = led_response(&pole_op(7e6, 1.0), &grid[1..]).unwrap();
        assert!(matches!(cascade(&[a, other]), Err(Error::GridMismatch { index: 1 })));
        assert!(cascade(&[]).is_err());
    }

    #[test]
    fn extract_single_pole() {
        let grid = log_grid(1e5, 1e8, 50);
        let r = led_response(&pole_op(7e6, 1.0), &grid).unwrap();
        let f = extract_3db(&r).unwrap();
        assert!((f / 7e6 - 1.0).abs() < 0.01, "{f}");
        let flat = FrequencyResponse::from_fn(&grid, |_| Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(extract_3db(&flat), Err(Error::BandwidthExceedsGrid { .. })));
    }

    #[test]
    fn equalizer_widens_bandwidth() {
        let grid = default_frequency_grid();
        let led = led_response(&pole_op(7e6, 1.0), &grid).unwrap();
        let eq = equalizer_response(&Equalizer::default(), &grid).unwrap();
        let plain = extract_3db(&led).unwrap();
        let boosted = extract_3db(&cascade(&[led, eq]).unwrap()).unwrap();
        assert!(boosted > plain);
    }

    #[test]
    fn response_rejects_bad_input() {
        assert!(FrequencyResponse::new(vec![1.0, 1.0], vec![Complex64::new(1.0, 0.0); 2]).is_err());
        assert!(FrequencyResponse::new(vec![1.0], vec![]).is_err());
        assert!(FrequencyResponse::new(vec![1.0], vec![Complex64::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn csv_shapes() {
        let grid = [1e5, 1e6];
        let r = led_response(&pole_op(7e6, 1.0), &grid).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("freq_Hz,mag_dB,phase_deg\n"));
        assert_eq!(csv.lines().count(), 3);
        let rows = [BandwidthRow {
            current_a: 0.25,
            tau_s_s: 1e-8,
            tau_c_s: 1e-8,
            f3db_hz: 7e6,
        }];
        assert_eq!(sweep_to_csv(&rows), "current_A,f3db_Hz\n0.250000,7.000000e6\n");
        let back: Vec<BandwidthRow> = serde_json::from_str(&sweep_to_json(&rows).unwrap()).unwrap();
        assert_eq!(back[0], rows[0]);
    }
}
