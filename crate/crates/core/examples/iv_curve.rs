//! Model I-V curve of the default card, swept in voltage and in current.
//!
//! cargo run --example iv_curve

use vlcsim::calibration::default_card;
use vlcsim::cli::{cmd_iv, iv_to_csv, IvSweep};

fn main() -> vlcsim::Result<()> {
    let p = default_card().params;
    let by_voltage = cmd_iv(&p, &IvSweep::Voltage { start: 2.5, stop: 3.8, points: 14 })?;
    print!("{}", iv_to_csv(&by_voltage));

    let anchors = cmd_iv(&p, &IvSweep::Current { start: 0.01, stop: 1.1, points: 3 })?;
    println!();
    for r in anchors {
        println!("{:.3} A at {:.3} V", r.i_a, r.v_v);
    }
    Ok(())
}
