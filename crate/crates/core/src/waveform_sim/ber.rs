//! End-to-end BER runs, slicing and bias optimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::led_device::{static_optical_power, LedParams};
use crate::link_model::LinkConfig;

use super::filters::FirstOrderIir;
use super::prbs::Lfsr;
use super::receiver::Receiver;
use super::transmitter::LedTransmitter;
use super::{BerResult, ThresholdMode, WaveformConfig};

/// Leading bits discarded before counting.
pub const TRANSIENT_BITS: usize = 20;

/// Minimum number of counted bits.
const MIN_COUNTED_BITS: usize = 100;

/// Bits of the noiseless run used to pick the sampling delay.
const ALIGN_BITS: usize = 1023;

/// Largest sampling delay searched, in bits.
const MAX_DELAY_BITS: usize = 4;

/// Threshold levels searched in `Optimal` mode.
const THRESHOLD_GRID: usize = 64;

/// Counted bits between checks of the early-stop rule.
const CI_CHECK_INTERVAL: usize = 8192;

/// LED, receiver and optional equalizer in series.
struct Chain {
    tx: LedTransmitter,
    rx: Receiver,
    eq: Option<FirstOrderIir>,
}

impl Chain {
    fn new(wcfg: &WaveformConfig, p: &LedParams, cfg: &LinkConfig, seed: u64, noisy: bool) -> Result<Self> {
        let dt = wcfg.dt();
        let tx = LedTransmitter::new(p, wcfg.i_dc, dt, wcfg.input_stage)?;
        let rx_cfg = if noisy {
            cfg.clone()
        } else {
            LinkConfig {
                noise_rms: 0.0,
                ..cfg.clone()
            }
        };
        let mut rx = Receiver::new(&rx_cfg, dt, seed)?;
        let p0 = tx.output();
        rx.settle(p0);
        let eq = equalizer_filter(wcfg, cfg)?.map(|mut f| {
            f.settle(rx.gain() * p0);
            f
        });
        Ok(Self { tx, rx, eq })
    }

    #[inline]
    fn step(&mut self, u: f64) -> Result<f64> {
        let v = self.rx.step(self.tx.step(u)?);
        Ok(match self.eq.as_mut() {
            Some(f) => f.process(v),
            None => v,
        })
    }
}

fn equalizer_filter(wcfg: &WaveformConfig, cfg: &LinkConfig) -> Result<Option<FirstOrderIir>> {
    if !wcfg.equalizer_enabled {
        return Ok(None);
    }
    let eq = cfg
        .equalizer
        .as_ref()
        .ok_or_else(|| Error::validation("equalizer enabled but the link has none configured"))?;
    Ok(Some(FirstOrderIir::equalizer(eq, wcfg.dt())))
}

/// Noiseless steady-state output for a constant zero and a constant one.
fn steady_levels(wcfg: &WaveformConfig, p: &LedParams, cfg: &LinkConfig) -> Result<(f64, f64)> {
    let g = cfg.optical_to_voltage_gain() * equalizer_filter(wcfg, cfg)?.map_or(1.0, |f| f.dc_gain());
    let (lo, hi) = wcfg.levels();
    Ok((g * static_optical_power(lo.max(0.0), p), g * static_optical_power(hi, p)))
}

fn bit_source(wcfg: &WaveformConfig) -> Result<Lfsr> {
    Lfsr::new(wcfg.prbs_order, wcfg.prbs_seed)
}

/// Sampling delay (in samples, after the nominal bit centre) that maximizes
/// the Q-factor of a noiseless run, with the configured noise RMS added to
/// the intersymbol spread.
fn find_delay(wcfg: &WaveformConfig, p: &LedParams, cfg: &LinkConfig) -> Result<usize> {
    let spb = wcfg.samples_per_bit;
    let mut chain = Chain::new(wcfg, p, cfg, 0, false)?;
    let (lo, hi) = wcfg.levels();
    let total_bits = TRANSIENT_BITS + ALIGN_BITS + MAX_DELAY_BITS + 1;
    let bits: Vec<bool> = bit_source(wcfg)?.take(total_bits).collect();
    let mut v = Vec::with_capacity(total_bits * spb);
    for &b in &bits {
        let u = if b { hi } else { lo };
        for _ in 0..spb {
            v.push(chain.step(u)?);
        }
    }
    let sigma_n2 = cfg.noise_rms * cfg.noise_rms;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for d in 0..MAX_DELAY_BITS * spb {
        let mut stats = ClassStats::default();
        for (k, &b) in bits.iter().enumerate().skip(TRANSIENT_BITS).take(ALIGN_BITS) {
            stats.push(b, v[k * spb + spb / 2 + d]);
        }
        let q = stats.q_factor_with(sigma_n2);
        if q > best.0 {
            best = (q, d);
        }
    }
    Ok(best.1)
}

#[derive(Default)]
struct ClassStats {
    n: [f64; 2],
    sum: [f64; 2],
    sum2: [f64; 2],
}

impl ClassStats {
    fn push(&mut self, bit: bool, v: f64) {
        let c = bit as usize;
        self.n[c] += 1.0;
        self.sum[c] += v;
        self.sum2[c] += v * v;
    }

    fn moments(&self, c: usize) -> (f64, f64) {
        let m = self.sum[c] / self.n[c];
        (m, (self.sum2[c] / self.n[c] - m * m).max(0.0))
    }

    fn q_factor_with(&self, extra_var: f64) -> f64 {
        if self.n[0] == 0.0 || self.n[1] == 0.0 {
            return 0.0;
        }
        let (m0, v0) = self.moments(0);
        let (m1, v1) = self.moments(1);
        let s = (v0 + extra_var).sqrt() + (v1 + extra_var).sqrt();
        if s > 0.0 {
            (m1 - m0) / s
        } else if m1 > m0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn count_errors(samples: &[f64], bits: &[bool], threshold: f64) -> u64 {
    samples.iter().zip(bits).filter(|(&v, &b)| (v > threshold) != b).count() as u64
}

/// Decides every sample and tallies errors.
fn decide(samples: &[f64], bits: &[bool], mode: ThresholdMode, levels: (f64, f64)) -> BerResult {
    let mut stats = ClassStats::default();
    for (&v, &b) in samples.iter().zip(bits) {
        stats.push(b, v);
    }
    let q = stats.q_factor_with(0.0);
    let snr = if q.is_finite() { q * q } else { f64::INFINITY };
    let midpoint = 0.5 * (levels.0 + levels.1);
    let errors = match mode {
        ThresholdMode::Midpoint => count_errors(samples, bits, midpoint),
        ThresholdMode::Optimal => {
            let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut best = count_errors(samples, bits, midpoint);
            if hi > lo {
                let step = (hi - lo) / (THRESHOLD_GRID - 1) as f64;
                for j in 0..THRESHOLD_GRID {
                    best = best.min(count_errors(samples, bits, lo + step * j as f64));
                }
            }
            best
        }
    };
    BerResult::new(samples.len() as u64, errors, snr)
}

/// Samples `v` at bit centres, skips the first [`TRANSIENT_BITS`] bits and
/// counts decision errors against `bits`. `levels` are the noiseless
/// steady-state zero and one levels used by the midpoint threshold.
pub fn slice_and_count(v: &[f64], bits: &[bool], wcfg: &WaveformConfig, levels: (f64, f64)) -> Result<BerResult> {
    let spb = wcfg.samples_per_bit;
    let n = bits.len().min(v.len() / spb);
    if n < TRANSIENT_BITS + MIN_COUNTED_BITS {
        return Err(Error::validation(format!(
            "need at least {MIN_COUNTED_BITS} bits after the {TRANSIENT_BITS}-bit transient, got {}",
            n.saturating_sub(TRANSIENT_BITS)
        )));
    }
    let samples: Vec<f64> = (TRANSIENT_BITS..n).map(|k| v[k * spb + spb / 2]).collect();
    Ok(decide(&samples, &bits[TRANSIENT_BITS..n], wcfg.threshold_mode, levels))
}

/// Full pipeline: PRBS → drive → LED → channel and receiver → equalizer →
/// slicer. Deterministic for a fixed configuration and seed. Only decision
/// samples are stored, so long runs stream in constant memory per bit.
pub fn run_ber(wcfg: &WaveformConfig, p: &LedParams, cfg: &LinkConfig) -> Result<BerResult> {
    wcfg.validate()?;
    if wcfg.n_bits < MIN_COUNTED_BITS {
        return Err(Error::validation(format!("n_bits must be at least {MIN_COUNTED_BITS}")));
    }
    let spb = wcfg.samples_per_bit;
    let delay = find_delay(wcfg, p, cfg)?;
    let levels = steady_levels(wcfg, p, cfg)?;
    let midpoint = 0.5 * (levels.0 + levels.1);
    let mut chain = Chain::new(wcfg, p, cfg, wcfg.rng_seed, true)?;
    let (lo, hi) = wcfg.levels();

    let mut source = bit_source(wcfg)?;
    let mut history: Vec<bool> = Vec::with_capacity(TRANSIENT_BITS + wcfg.n_bits + MAX_DELAY_BITS + 1);
    let mut bits = Vec::with_capacity(wcfg.n_bits);
    let mut samples = Vec::with_capacity(wcfg.n_bits);
    let mut errors_mid = 0u64;
    let offset = spb / 2 + delay;
    let mut s = 0usize;
    'run: loop {
        let b = source.next_bit();
        history.push(b);
        let u = if b { hi } else { lo };
        for _ in 0..spb {
            let v = chain.step(u)?;
            if s >= offset && (s - offset) % spb == 0 {
                let k = (s - offset) / spb;
                if k >= TRANSIENT_BITS {
                    let truth = history[k];
                    bits.push(truth);
                    samples.push(v);
                    errors_mid += ((v > midpoint) != truth) as u64;
                    let counted = bits.len();
                    if counted == wcfg.n_bits {
                        break 'run;
                    }
                    if let Some(ratio) = wcfg.ci_stop_ratio {
                        if counted % CI_CHECK_INTERVAL == 0 && errors_mid > 0 {
                            let r = BerResult::new(counted as u64, errors_mid, 0.0);
                            if r.ci95_high - r.ci95_low < ratio * r.ber {
                                break 'run;
                            }
                        }
                    }
                }
            }
            s += 1;
        }
    }
    Ok(decide(&samples, &bits, wcfg.threshold_mode, levels))
}

/// One point of an eye diagram: position within the bit interval (0 to 1,
/// decision instant at 0.5) and received voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeSample {
    pub time_in_bit: f64,
    pub voltage: f64,
}

/// Received, equalized waveform folded onto one bit interval over `n_bits`
/// bits after the transient, aligned like [`run_ber`].
pub fn eye_diagram(wcfg: &WaveformConfig, p: &LedParams, cfg: &LinkConfig, n_bits: usize) -> Result<Vec<EyeSample>> {
    wcfg.validate()?;
    let spb = wcfg.samples_per_bit;
    let delay = find_delay(wcfg, p, cfg)?;
    let mut chain = Chain::new(wcfg, p, cfg, wcfg.rng_seed, true)?;
    let (lo, hi) = wcfg.levels();
    let mut out = Vec::with_capacity(n_bits * spb);
    let start = TRANSIENT_BITS * spb + delay;
    let end = start + n_bits * spb;
    let mut s = 0usize;
    for b in bit_source(wcfg)? {
        let u = if b { hi } else { lo };
        for _ in 0..spb {
            let v = chain.step(u)?;
            if s >= start {
                out.push(EyeSample {
                    time_in_bit: ((s - start) % spb) as f64 / spb as f64,
                    voltage: v,
                });
            }
            s += 1;
        }
        if s >= end {
            break;
        }
    }
    out.truncate(n_bits * spb);
    Ok(out)
}

pub fn eye_to_csv(eye: &[EyeSample]) -> String {
    let mut out = String::from("time_in_bit,voltage\n");
    for e in eye {
        out.push_str(&format!("{:.6},{:.9e}\n", e.time_in_bit, e.voltage));
    }
    out
}

/// One BER measurement in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub data_rate_bps: f64,
    pub current_a: f64,
    pub seed: u64,
    pub result: BerResult,
}

/// Outcome of a bias sweep at one data rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasOptimum {
    pub data_rate_bps: f64,
    /// Lowest current whose BER is statistically tied with the minimum.
    pub i_opt: f64,
    /// BER at `i_opt`.
    pub best: BerResult,
    /// Current with the lowest BER estimate (first one on exact ties).
    pub i_min_ber: f64,
    pub rows: Vec<BerRow>,
}

/// Runs [`run_ber`] at every grid current (concurrently, grid point `k` using
/// seed `template.rng_seed ^ k`) and picks the optimum bias.
///
/// Two estimates count as equal performance when their Wilson 95% intervals
/// overlap; among the currents tied with the lowest BER the lowest current
/// wins. Exactly equal BERs (for instance all zero) are always tied.
pub fn optimize_bias(
    data_rate: f64,
    current_grid: &[f64],
    template: &WaveformConfig,
    p: &LedParams,
    cfg: &LinkConfig,
) -> Result<BiasOptimum> {
    if current_grid.is_empty() {
        return Err(Error::validation("bias grid is empty"));
    }
    if current_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("bias grid must be strictly increasing"));
    }
    let rows: Vec<BerRow> = current_grid
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let seed = template.rng_seed ^ k as u64;
            let wcfg = WaveformConfig {
                data_rate,
                i_dc: i,
                rng_seed: seed,
                ..template.clone()
            };
            run_ber(&wcfg, p, cfg).map(|result| BerRow {
                data_rate_bps: data_rate,
                current_a: i,
                seed,
                result,
            })
        })
        .collect::<Result<_>>()?;
    let mut min = rows[0];
    for r in &rows[1..] {
        if r.result.ber < min.result.ber {
            min = *r;
        }
    }
    let chosen = rows
        .iter()
        .find(|r| r.result.ber == min.result.ber || r.result.ci95_low <= min.result.ci95_high)
        .copied()
        .unwrap_or(min);
    Ok(BiasOptimum {
        data_rate_bps: data_rate,
        i_opt: chosen.current_a,
        best: chosen.result,
        i_min_ber: min.current_a,
        rows,
    })
}

/// CSV with columns `data_rate_bps,current_A,ber,ci_low,ci_high,bits,errors,seed`.
pub fn ber_table_to_csv(rows: &[BerRow]) -> String {
    let mut out = String::from("data_rate_bps,current_A,ber,ci_low,ci_high,bits,errors,seed\n");
    for r in rows {
        let b = &r.result;
        out.push_str(&format!(
            "{:.6e},{:.6},{:.6e},{:.6e},{:.6e},{},{},{}\n",
            r.data_rate_bps, r.current_a, b.ber, b.ci95_low, b.ci95_high, b.bits, b.errors, r.seed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::led_device::tests::example_params;
    use crate::link_model::ChannelSpec;
    use crate::numeric::q_function;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn linear_wave(bits: &[bool], spb: usize, a: f64, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        bits.iter()
            .flat_map(|&b| std::iter::repeat_n(if b { a } else { -a }, spb))
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn small_cfg() -> WaveformConfig {
        WaveformConfig {
            samples_per_bit: 8,
            ..WaveformConfig::default()
        }
    }

    #[test]
    fn noiseless_linear_channel_is_error_free() {
        let wcfg = small_cfg();
        let bits = super::super::prbs_sequence(10, 1, 3000).unwrap();
        let v = linear_wave(&bits, 8, 1.0, 0.0, 1);
        let r = slice_and_count(&v, &bits, &wcfg, (-1.0, 1.0)).unwrap();
        assert_eq!(r.errors, 0);
        assert_eq!(r.bits, 2980);
        assert!(r.ci95_low <= r.ber && r.ber <= r.ci95_high);
    }

    #[test]
    fn linear_channel_matches_q_function_and_inverts() {
        let wcfg = small_cfg();
        let bits = super::super::prbs_sequence(10, 3, 200_020).unwrap();
        let v = linear_wave(&bits, 8, 3.0, 1.0, 2);
        let r = slice_and_count(&v, &bits, &wcfg, (-3.0, 3.0)).unwrap();
        let q = q_function(3.0);
        assert!(r.ci95_low <= q && q <= r.ci95_high, "{r:?}");
        let inv: Vec<f64> = v.iter().map(|x| -x).collect();
        let r = slice_and_count(&inv, &bits, &wcfg, (-3.0, 3.0)).unwrap();
        assert!(r.ci95_low <= 1.0 - q && 1.0 - q <= r.ci95_high, "{r:?}");
    }

    #[test]
    fn too_few_bits_rejected() {
        let wcfg = small_cfg();
        let bits = vec![true; 110];
        let v = vec![1.0; 110 * 8];
        assert!(slice_and_count(&v, &bits, &wcfg, (0.0, 1.0)).is_err());
    }

    #[test]
    fn optimal_never_worse_than_midpoint() {
        let bits = super::super::prbs_sequence(10, 3, 20_020).unwrap();
        let v: Vec<f64> = linear_wave(&bits, 8, 2.0, 1.0, 4).iter().map(|x| x + 0.7).collect();
        let mid = slice_and_count(&v, &bits, &small_cfg(), (-2.0, 2.0)).unwrap();
        let opt = slice_and_count(
            &v,
            &bits,
            &WaveformConfig {
                threshold_mode: ThresholdMode::Optimal,
                ..small_cfg()
            },
            (-2.0, 2.0),
        )
        .unwrap();
        assert!(opt.errors <= mid.errors);
    }

    fn quiet_link() -> LinkConfig {
        LinkConfig {
            channel: ChannelSpec::Scalar { gain: 1e-3 },
            ..LinkConfig::default()
        }
    }

    #[test]
    fn run_ber_is_deterministic() {
        let p = example_params();
        let wcfg = WaveformConfig {
            data_rate: 5e6,
            i_dc: 0.3,
            n_bits: 3000,
            samples_per_bit: 16,
            ..WaveformConfig::default()
        };
        let a = run_ber(&wcfg, &p, &quiet_link()).unwrap();
        let b = run_ber(&wcfg, &p, &quiet_link()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits, 3000);
    }

    #[test]
    fn optimize_ties_go_low_and_grid_validated() {
        let p = example_params();
        let cfg = LinkConfig {
            noise_rms: 0.0,
            ..quiet_link()
        };
        let wcfg = WaveformConfig {
            n_bits: 500,
            samples_per_bit: 16,
            ..WaveformConfig::default()
        };
        let r = optimize_bias(2e6, &[0.3, 0.4, 0.5], &wcfg, &p, &cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.result.errors == 0));
        assert_eq!(r.i_opt, 0.3);
        assert_eq!(r.rows[1].seed, wcfg.rng_seed ^ 1);
        let single = optimize_bias(2e6, &[0.4], &wcfg, &p, &cfg).unwrap();
        assert_eq!(single.i_opt, 0.4);
        assert!(optimize_bias(2e6, &[0.4, 0.3], &wcfg, &p, &cfg).is_err());
        assert!(optimize_bias(2e6, &[], &wcfg, &p, &cfg).is_err());
    }

    #[test]
    fn eye_is_folded_on_one_bit() {
        let p = example_params();
        let wcfg = WaveformConfig {
            data_rate: 5e6,
            i_dc: 0.3,
            samples_per_bit: 16,
            ..WaveformConfig::default()
        };
        let eye = eye_diagram(&wcfg, &p, &quiet_link(), 50).unwrap();
        assert_eq!(eye.len(), 50 * 16);
        assert!(eye.iter().all(|e| (0.0..1.0).contains(&e.time_in_bit)));
        assert!(eye_to_csv(&eye).starts_with("time_in_bit,voltage\n"));
    }
}
