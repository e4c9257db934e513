//! Synthesizes noisy I-V, bandwidth and L-I curves from the default card,
//! fits them in sequence and compares the recovered card with the original.
//!
//! cargo run --release --example fit_curves

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vlcsim::calibration::*;
use vlcsim::led_device::{equivalent_bandwidth, static_optical_power, terminal_voltage};

fn noisy(rows: Vec<(f64, f64)>, rel: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    rows.into_iter()
        .map(|(x, y)| (x, y * (1.0 + rel * rng.sample::<f64, _>(StandardNormal))))
        .collect()
}

fn main() -> vlcsim::Result<()> {
    let truth = default_card();
    let p = &truth.params;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let iv: Vec<(f64, f64)> = (0..40)
        .map(|k| 1e-3 * 10f64.powf(3.0 * k as f64 / 39.0))
        .map(|i| terminal_voltage(i, p).map(|v| (v, i)))
        .collect::<vlcsim::Result<_>>()?;
    // Log spacing down to 1 mA, where the SRH term still shows.
    let bw: Vec<(f64, f64)> = (0..25)
        .map(|k| 1e-3 * 10f64.powf(3.0 * k as f64 / 24.0))
        .map(|i| equivalent_bandwidth(i, p).map(|op| (i, op.f_led)))
        .collect::<vlcsim::Result<_>>()?;
    // 0.5 mA steps through the knee, then 20 mA steps.
    let li_currents = (1..=60).map(|k| 0.0005 * k as f64).chain((2..=90).map(|k| 0.02 * k as f64));
    let li: Vec<(f64, f64)> = li_currents.map(|i| (i, static_optical_power(i, p))).collect();

    let iv = MeasuredCurve::new(CurveKind::Iv, p.series_chips, noisy(iv, 0.005, &mut rng))?;
    let bw = MeasuredCurve::new(CurveKind::Bw, p.series_chips, noisy(bw, 0.005, &mut rng))?;
    let li = MeasuredCurve::new(CurveKind::Li, p.series_chips, noisy(li, 0.005, &mut rng))?;

    let mut card = DeviceCard::new(truth.params.clone(), "refit of synthetic curves");
    let iv_fit = fit_iv(&iv)?;
    card.apply_iv(&iv_fit);
    let bw_fit = fit_bandwidth(&bw, card.params.saturation_current)?;
    card.apply_bandwidth(&bw_fit)?;
    let li_fit = fit_li(&li, &card.params)?;
    card.apply_li(&li_fit);

    let a = BandwidthAggregates::from_params(p);
    let rows = [
        ("I0 (A)", p.saturation_current, card.params.saturation_current),
        ("n", p.ideality, card.params.ideality),
        ("Rs (ohm)", p.series_resistance, card.params.series_resistance),
        ("theta_A", a.theta_a, bw_fit.theta_a),
        ("theta_B", a.theta_b, bw_fit.theta_b),
        ("theta_RC", a.theta_rc, bw_fit.theta_rc),
        ("theta_V", a.theta_v, bw_fit.theta_v),
        ("eta", p.optical_efficiency, li_fit.optical_efficiency),
        ("C (cm^6/s)", p.auger_coeff, li_fit.auger_coeff),
        ("I_on (A)", p.turn_on_current, li_fit.turn_on_current),
    ];
    println!("{:>11}  {:>12}  {:>12}  {:>8}", "", "true", "fitted", "error");
    for (name, t, f) in rows {
        println!("{name:>11}  {t:12.5e}  {f:12.5e}  {:7.2}%", 100.0 * (f - t) / t);
    }
    println!("\n{}", card.to_json()?);
    Ok(())
}
