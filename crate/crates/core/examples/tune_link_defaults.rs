//! Re-derives the two frozen link defaults: the equalizer pole ratio that puts
//! the equalized 3-dB bandwidth at 40 MHz, and the lens gain that leaves the
//! 510 mA link at BER ≈ 4e-4 when running at 60 Mbit/s.
//!
//! ```text
//! cargo run --release --example tune_link_defaults
//! ```

use vlcsim::calibration::default_card;
use vlcsim::led_device::equivalent_bandwidth;
use vlcsim::link_model::*;
use vlcsim::waveform_sim::run_ber;
use vlcsim::WaveformConfig;

const TARGET_BANDWIDTH: f64 = 40e6;
const BANDWIDTH_BIAS: f64 = 0.25;
const TARGET_BER: f64 = 4e-4;
const BER_BIAS: f64 = 0.51;
const BER_RATE: f64 = 60e6;

fn with_pole_ratio(k: f64) -> LinkConfig {
    LinkConfig {
        equalizer: Some(Equalizer { pole_ratio: k, ..Equalizer::default() }),
        ..LinkConfig::default()
    }
}

fn with_lens(cfg: &LinkConfig, lens_gain: f64) -> LinkConfig {
    LinkConfig {
        channel: ChannelSpec::Lambertian { semi_angle_deg: 60.0, rx_area_m2: 0.8e-6, lens_gain },
        ..cfg.clone()
    }
}

fn main() -> vlcsim::Result<()> {
    let p = default_card().params;
    let freqs = default_frequency_grid();
    let op = equivalent_bandwidth(BANDWIDTH_BIAS, &p)?;

    let bw = |k: f64| -> vlcsim::Result<f64> {
        extract_3db(&link_response(&op, &with_pole_ratio(k), SweepScope::EqualizedLink, &freqs)?)
    };
    let (mut lo, mut hi) = (1.01, 20.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bw(mid)? < TARGET_BANDWIDTH {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    println!("pole_ratio = {k:.4}  (equalized f3dB {:.2} MHz at {BANDWIDTH_BIAS} A)", bw(k)? / 1e6);

    let base = with_pole_ratio((k * 1e4).round() / 1e4);
    let wcfg = WaveformConfig { data_rate: BER_RATE, i_dc: BER_BIAS, n_bits: 1_000_000, ..WaveformConfig::default() };
    let ber = |lens: f64| run_ber(&wcfg, &p, &with_lens(&base, lens)).map(|r| r.ber);
    let (mut lo, mut hi) = (200.0f64, 3000.0f64);
    for _ in 0..14 {
        let mid = (lo * hi).sqrt();
        let b = ber(mid)?;
        println!("  lens {mid:8.2}  BER {b:.3e}");
        if b > TARGET_BER {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lens = (lo * hi).sqrt();
    println!("lens_gain = {lens:.1}  (V/W {:.3})", with_lens(&base, lens).optical_to_voltage_gain());
    Ok(())
}
