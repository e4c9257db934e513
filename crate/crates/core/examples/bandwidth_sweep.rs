//! 3-dB bandwidth against bias for the LED alone, the raw link and the
//! equalized link.
//!
//! cargo run --example bandwidth_sweep

use vlcsim::calibration::default_card;
use vlcsim::link_model::{bandwidth_vs_bias_sweep, default_frequency_grid, LinkConfig, SweepScope};

fn main() -> vlcsim::Result<()> {
    let p = default_card().params;
    let cfg = LinkConfig::default();
    let freqs = default_frequency_grid();
    let currents = [0.05, 0.1, 0.15, 0.2, 0.25, 0.35, 0.45, 0.6, 0.8, 1.0];
    let led = bandwidth_vs_bias_sweep(&currents, &p, &cfg, SweepScope::Led, &freqs)?;
    let link = bandwidth_vs_bias_sweep(&currents, &p, &cfg, SweepScope::Link, &freqs)?;
    let eq = bandwidth_vs_bias_sweep(&currents, &p, &cfg, SweepScope::EqualizedLink, &freqs)?;
    println!("  I (A)   LED (MHz)  link (MHz)  equalized (MHz)");
    for ((a, b), c) in led.iter().zip(&link).zip(&eq) {
        println!("{:7.3}  {:9.3}  {:10.3}  {:15.3}", a.current_a, a.f3db_hz / 1e6, b.f3db_hz / 1e6, c.f3db_hz / 1e6);
    }
    Ok(())
}
