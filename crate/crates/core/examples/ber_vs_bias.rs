//! Monte Carlo BER against bias current at 60 Mbit/s.
//!
//! cargo run --release --example ber_vs_bias [bits]

use vlcsim::calibration::default_card;
use vlcsim::waveform_sim::run_ber;
use vlcsim::{LinkConfig, WaveformConfig};

fn main() -> vlcsim::Result<()> {
    let bits = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok()).unwrap_or(2e5) as usize;
    let p = default_card().params;
    let cfg = LinkConfig::default();
    println!("  I (A)   BER        95% CI                  errors");
    for i_dc in [0.1, 0.2, 0.3, 0.4, 0.51, 0.6, 0.68] {
        let wcfg = WaveformConfig { i_dc, n_bits: bits, ..WaveformConfig::default() };
        let r = run_ber(&wcfg, &p, &cfg)?;
        println!("{:7.3}  {:.3e}  [{:.3e}, {:.3e}]  {}", i_dc, r.ber, r.ci95_low, r.ci95_high, r.errors);
    }
    Ok(())
}
