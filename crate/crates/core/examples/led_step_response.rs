//! Large-signal response of the rate-equation transmitter to a current step,
//! and its small-signal bandwidth measured at 1% modulation depth.
//!
//! cargo run --release --example led_step_response

use vlcsim::calibration::default_card;
use vlcsim::led_device::{equivalent_bandwidth, static_optical_power};
use vlcsim::waveform_sim::{led_dynamic_transmit, small_signal_bandwidth};
use vlcsim::waveform_sim::InputStage;

fn main() -> vlcsim::Result<()> {
    let p = default_card().params;
    let dt = 0.5e-9;
    let (i0, i1) = (0.25, 0.35);
    let current: Vec<f64> = (0..400).map(|k| if k < 40 { i0 } else { i1 }).collect();
    let power = led_dynamic_transmit(&current, &p, dt, i0, InputStage::MatchedBandwidth)?;
    let (p0, p1) = (static_optical_power(i0, &p), static_optical_power(i1, &p));
    let rise = |frac: f64| power.iter().position(|&x| x >= p0 + frac * (p1 - p0)).map(|k| (k as f64 - 40.0) * dt);
    if let (Some(t10), Some(t90)) = (rise(0.1), rise(0.9)) {
        println!("step {i0} -> {i1} A: 10-90% rise {:.2} ns", (t90 - t10) * 1e9);
    }

    for i_dc in [0.1, 0.25, 0.51] {
        let f_led = equivalent_bandwidth(i_dc, &p)?.f_led;
        let f_ode = small_signal_bandwidth(&p, i_dc, 0.01, InputStage::MatchedBandwidth)?;
        println!("I = {i_dc:4} A  f_led {:.3} MHz  measured {:.3} MHz", f_led / 1e6, f_ode / 1e6);
    }
    Ok(())
}
