//! Builds the end-to-end response block by block at 250 mA and reads off the
//! 3-dB points with and without the post-equalizer.
//!
//! cargo run --example frequency_response [bias_A]

use vlcsim::calibration::default_card;
use vlcsim::led_device::equivalent_bandwidth;
use vlcsim::link_model::*;

fn main() -> vlcsim::Result<()> {
    let bias = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let p = default_card().params;
    let cfg = LinkConfig::default();
    let eq = cfg.equalizer.expect("default link has an equalizer");
    let freqs = default_frequency_grid();

    let op = equivalent_bandwidth(bias, &p)?;
    let led = led_response(&op, &freqs)?;
    let channel = channel_response(&cfg, &freqs)?;
    let rx = receiver_response(&cfg, &freqs)?;
    let raw = cascade(&[led.clone(), channel.clone(), rx.clone()])?;
    let equalized = cascade(&[led, channel, rx, equalizer_response(&eq, &freqs)?])?;

    println!("bias {bias} A, f_led {:.3} MHz, channel gain {:.3e}", op.f_led / 1e6, channel_gain(&cfg));
    println!("equalizer zero {:.3} MHz, pole {:.3} MHz", eq.zero_freq() / 1e6, eq.pole_freq() / 1e6);
    println!("raw 3 dB       {:.3} MHz", extract_3db(&raw)? / 1e6);
    println!("equalized 3 dB {:.3} MHz", extract_3db(&equalized)? / 1e6);

    let (raw_db, eq_db) = (raw.magnitude_db(), equalized.magnitude_db());
    println!("\n  f (MHz)   raw (dB)  equalized (dB)");
    for k in (0..freqs.len()).step_by(10).filter(|&k| freqs[k] <= 2e8) {
        println!("{:9.3}  {:9.2}  {:14.2}", freqs[k] / 1e6, raw_db[k], eq_db[k]);
    }
    Ok(())
}
