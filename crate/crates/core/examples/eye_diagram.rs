//! Folded receiver waveform at 60 Mbit/s, written as CSV for plotting, with
//! the eye opening at the centre of the bit.
//!
//! cargo run --release --example eye_diagram [bias_A] [out.csv]

use vlcsim::calibration::default_card;
use vlcsim::waveform_sim::{eye_diagram, eye_to_csv};
use vlcsim::{LinkConfig, WaveformConfig};

fn main() -> vlcsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let bias = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.51);
    let out = args.next().unwrap_or_else(|| "eye.csv".into());
    let p = default_card().params;
    let wcfg = WaveformConfig { i_dc: bias, ..WaveformConfig::default() };
    let eye = eye_diagram(&wcfg, &p, &LinkConfig::default(), 400)?;
    std::fs::write(&out, eye_to_csv(&eye))?;

    let centre: Vec<f64> = eye.iter().filter(|s| (s.time_in_bit - 0.5).abs() < 0.02).map(|s| s.voltage).collect();
    let mean = centre.iter().sum::<f64>() / centre.len() as f64;
    let low = centre.iter().filter(|&&v| v > mean).fold(f64::INFINITY, |a, &b| a.min(b));
    let high = centre.iter().filter(|&&v| v <= mean).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    println!("{} samples -> {out}", eye.len());
    println!("worst-case opening near mid-bit: {:.2} mV", (low - high) * 1e3);
    Ok(())
}
