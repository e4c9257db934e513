//! Static and small-signal operating point of the default LED at a few biases,
//! plus the shape of its emission spectrum.
//!
//! cargo run --example operating_point

use vlcsim::calibration::default_card;
use vlcsim::led_device::{emission_spectrum, equivalent_bandwidth, internal_quantum_efficiency, static_optical_power};

fn main() -> vlcsim::Result<()> {
    let p = default_card().params;
    println!("  I (A)   N (cm^-3)   V (V)   IQE     P (W)    tau_s (ns)  tau_c (ns)  f_led (MHz)");
    for i in [0.05, 0.1, 0.25, 0.45, 0.51, 0.68, 1.0] {
        let op = equivalent_bandwidth(i, &p)?;
        println!(
            "{:7.3}  {:.3e}  {:6.3}  {:.3}  {:.4}  {:10.2}  {:10.2}  {:10.3}",
            i,
            op.carrier_density,
            op.terminal_voltage,
            internal_quantum_efficiency(op.carrier_density, &p)?,
            static_optical_power(i, &p),
            op.tau_s * 1e9,
            op.tau_c * 1e9,
            op.f_led / 1e6
        );
    }

    let energies: Vec<f64> = (0..400).map(|k| p.bandgap_ev + 0.0005 * k as f64).collect();
    let s = emission_spectrum(&energies, &p)?;
    let peak = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| energies[k]).unwrap();
    println!("\nspectrum peak at {peak:.4} eV (Eg + kT/2 = {:.4} eV)", p.bandgap_ev + p.lineshape_kt_ev / 2.0);
    Ok(())
}
