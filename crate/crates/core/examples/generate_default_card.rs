//! Regenerates `cards/default_card.json` from the anchor operating points.
//!
//! cargo run --example generate_default_card

use vlcsim::calibration::{anchored_card, saturation_onset_current, Anchors};
use vlcsim::led_device::{equivalent_bandwidth, terminal_voltage};

fn main() -> vlcsim::Result<()> {
    let card = anchored_card(&Anchors::default())?;
    let p = &card.params;
    println!("I0 = {:.4e} A, n = {:.4}, Rs = {:.4} ohm", p.saturation_current, p.ideality, p.series_resistance);
    println!("V = {:.4e} cm^3, C0 = {:.4e} F, phi = {:.4} V, C = {:.4e} cm^6/s",
        p.active_volume, p.zero_bias_capacitance, p.built_in_potential, p.auger_coeff);
    for i in [0.02, 0.1, 0.25, 0.45, 0.51, 0.6, 0.68, 1.0] {
        let op = equivalent_bandwidth(i, p)?;
        println!(
            "I = {:5.3} A  V = {:.3} V  f_led = {:.3} MHz  tau_s = {:.2} ns  tau_c = {:.2} ns  dP/dI = {:.4} W/A",
            i,
            terminal_voltage(i, p)?,
            op.f_led / 1e6,
            op.tau_s * 1e9,
            op.tau_c * 1e9,
            op.slope
        );
    }
    println!("droop onset {:.4} A", saturation_onset_current(p)?);
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("cards/default_card.json");
    std::fs::write(&path, card.to_json()?)?;
    println!("wrote {}", path.display());
    Ok(())
}
