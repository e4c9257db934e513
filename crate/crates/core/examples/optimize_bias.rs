//! Optimum bias per data rate over the default six-point grid.
//! Uses 2e5 bits per point unless given; the CLI default is 1e6.
//!
//! cargo run --release --example optimize_bias [bits]

use vlcsim::calibration::default_card;
use vlcsim::cli::{DEFAULT_BIAS_GRID, DEFAULT_RATES};
use vlcsim::waveform_sim::optimize_bias;
use vlcsim::{LinkConfig, WaveformConfig};

fn main() -> vlcsim::Result<()> {
    let bits = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok()).unwrap_or(2e5) as usize;
    let p = default_card().params;
    let cfg = LinkConfig::default();
    let template = WaveformConfig { n_bits: bits, ..WaveformConfig::default() };
    for rate in DEFAULT_RATES {
        let o = optimize_bias(rate, &DEFAULT_BIAS_GRID, &template, &p, &cfg)?;
        let errors: Vec<String> = o.rows.iter().map(|r| r.result.errors.to_string()).collect();
        println!(
            "{:3} Mbit/s  I_opt {:.2} A  BER {:.2e}  (lowest estimate at {:.2} A; errors {})",
            rate / 1e6,
            o.i_opt,
            o.best.ber,
            o.i_min_ber,
            errors.join("/")
        );
    }
    Ok(())
}
