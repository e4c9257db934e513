//! LED device physics.
//!
//! Carrier recombination follows the ABC model: the current through one chip is
//! `I = q·V·(A·N + B·N² + C·N³)` where `V` is the active volume (area times
//! total quantum-well thickness). From it follow the internal quantum
//! efficiency, the differential carrier lifetime `τ_s`, and the static optical
//! output. The electrical side is a Shockley junction with series resistance
//! `Rs` and an optional shunt `Rp`, plus a depletion capacitance
//! `C0·(1 − v_d/φ)^(-1/2)` charged through `Rs`, giving the time constant
//! `τ_c`. The equivalent modulation bandwidth is `1/(2π(τ_s + τ_c))`.
//!
//! Units: amperes, volts, seconds, and cm-based units for carrier densities
//! (cm⁻³) and recombination coefficients (s⁻¹, cm³/s, cm⁶/s).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::newton_bisect;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Thermal voltage kT/q at 300 K, V.
pub const THERMAL_VOLTAGE_300K: f64 = 0.025_852;

/// Relative step used by the numerical electro-optic slope.
const SLOPE_REL_STEP: f64 = 1e-4;

/// Device constants of one LED chip (and the number of identical chips in series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedParams {
    /// Shockley-Read-Hall coefficient A, s⁻¹.
    pub srh_coeff: f64,
    /// Radiative coefficient B, cm³/s.
    pub radiative_coeff: f64,
    /// Auger coefficient C, cm⁶/s.
    pub auger_coeff: f64,
    /// Active volume (area × total quantum-well thickness), cm³.
    pub active_volume: f64,
    /// Reverse saturation current I0, A.
    pub saturation_current: f64,
    /// Diode ideality factor n.
    pub ideality: f64,
    /// Thermal voltage kT/q, V.
    pub thermal_voltage: f64,
    /// Series resistance Rs per chip, Ω.
    pub series_resistance: f64,
    /// Shunt resistance Rp per chip, Ω. `None` means no shunt path.
    pub shunt_resistance: Option<f64>,
    /// Zero-bias space-charge capacitance C0, F.
    pub zero_bias_capacitance: f64,
    /// Junction built-in potential φ, V.
    pub built_in_potential: f64,
    /// Lumped extraction efficiency × photon energy / q, W/A.
    pub optical_efficiency: f64,
    /// Bandgap energy for the emission lineshape, eV.
    pub bandgap_ev: f64,
    /// Thermal energy for the emission lineshape, eV.
    pub lineshape_kt_ev: f64,
    /// Number of identical chips connected in series.
    pub series_chips: u32,
    /// Current below which the optical output is zero, A.
    pub turn_on_current: f64,
}

impl LedParams {
    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("srh_coeff", self.srh_coeff),
            ("radiative_coeff", self.radiative_coeff),
            ("active_volume", self.active_volume),
            ("saturation_current", self.saturation_current),
            ("ideality", self.ideality),
            ("thermal_voltage", self.thermal_voltage),
            ("zero_bias_capacitance", self.zero_bias_capacitance),
            ("built_in_potential", self.built_in_potential),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let non_negative = [
            ("auger_coeff", self.auger_coeff),
            ("series_resistance", self.series_resistance),
            ("optical_efficiency", self.optical_efficiency),
            ("turn_on_current", self.turn_on_current),
            ("lineshape_kt_ev", self.lineshape_kt_ev),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        if let Some(rp) = self.shunt_resistance {
            if !(rp > 0.0) {
                return Err(Error::validation(format!("shunt_resistance must be positive, got {rp}")));
            }
        }
        if self.series_chips == 0 {
            return Err(Error::validation("series_chips must be at least 1"));
        }
        Ok(())
    }

    /// `q·V`, the charge-volume product converting carrier rates to current, C·cm³.
    pub fn charge_volume(&self) -> f64 {
        ELEMENTARY_CHARGE * self.active_volume
    }

    /// `n·kT/q`, V.
    pub fn n_vt(&self) -> f64 {
        self.ideality * self.thermal_voltage
    }

    /// Shunt conductance 1/Rp, S (zero without a shunt).
    fn shunt_conductance(&self) -> f64 {
        self.shunt_resistance.map_or(0.0, |rp| 1.0 / rp)
    }

    /// Total recombination rate per unit volume `A·N + B·N² + C·N³`, cm⁻³ s⁻¹.
    fn recombination_rate(&self, n: f64) -> f64 {
        n * (self.srh_coeff + n * (self.radiative_coeff + n * self.auger_coeff))
    }

    /// d(rate)/dN = `A + 2B·N + 3C·N²`, s⁻¹.
    fn recombination_rate_slope(&self, n: f64) -> f64 {
        self.srh_coeff + n * (2.0 * self.radiative_coeff + 3.0 * n * self.auger_coeff)
    }
}

/// Derived quantities at a DC bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Bias current, A.
    pub i_dc: f64,
    /// Carrier density, cm⁻³.
    pub carrier_density: f64,
    /// Ideal junction voltage per chip, V.
    pub junction_voltage: f64,
    /// Terminal voltage across all series chips, V.
    pub terminal_voltage: f64,
    /// Differential carrier lifetime τ_s, s.
    pub tau_s: f64,
    /// Space-charge capacitance time constant τ_c, s.
    pub tau_c: f64,
    /// Equivalent 3-dB modulation bandwidth, Hz.
    pub f_led: f64,
    /// Small-signal electro-optic slope dP/dI, W/A.
    pub slope: f64,
}

impl OperatingPoint {
    /// Bandwidth due to the carrier lifetime alone, `1/(2π τ_s)`.
    pub fn f_s(&self) -> f64 {
        1.0 / (2.0 * PI * self.tau_s)
    }

    /// Bandwidth due to the space-charge capacitance alone, `1/(2π τ_c)`.
    pub fn f_c(&self) -> f64 {
        1.0 / (2.0 * PI * self.tau_c)
    }
}

/// Recombination current `q·V·(A·N + B·N² + C·N³)` for carrier density `n`.
pub fn recombination_current(n: f64, p: &LedParams) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("carrier density must be non-negative, got {n}")));
    }
    Ok(p.charge_volume() * p.recombination_rate(n))
}

/// Inverts the ABC cubic: the unique non-negative carrier density carrying `current`.
pub fn solve_carrier_density(current: f64, p: &LedParams) -> Result<f64> {
    if !(current >= 0.0) {
        return Err(Error::domain(format!("current must be non-negative, got {current}")));
    }
    if current == 0.0 {
        return Ok(0.0);
    }
    let target = current / p.charge_volume();
    // A·N ≤ target and B·N² ≤ target both bound the root from above.
    let mut hi = (target / p.srh_coeff).min((target / p.radiative_coeff).sqrt());
    let mut grow = 0;
    while p.recombination_rate(hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::numerical("carrier density bracket did not close"));
        }
    }
    newton_bisect(
        |n| (p.recombination_rate(n) - target, p.recombination_rate_slope(n)),
        0.0,
        hi,
        0.0,
        1e-15,
        400,
    )
}

/// Internal quantum efficiency `B·N² / (A·N + B·N² + C·N³)`.
pub fn internal_quantum_efficiency(n: f64, p: &LedParams) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::domain(format!("IQE needs a positive carrier density, got {n}")));
    }
    Ok(p.radiative_coeff * n / (p.srh_coeff + p.radiative_coeff * n + p.auger_coeff * n * n))
}

/// Differential carrier lifetime from `1/τ_s = A + 2B·N + 3C·N²`.
pub fn differential_lifetime(n: f64, p: &LedParams) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("carrier density must be non-negative, got {n}")));
    }
    Ok(1.0 / p.recombination_rate_slope(n))
}

/// Carrier lifetime from the bias current, `τ_s = 1/√(A² + 4B·I/(q·V))`.
///
/// Exact for the differential lifetime when the Auger term is negligible.
pub fn lifetime_from_current(current: f64, p: &LedParams) -> Result<f64> {
    if !(current >= 0.0) {
        return Err(Error::domain(format!("current must be non-negative, got {current}")));
    }
    let a = p.srh_coeff;
    Ok(1.0 / (a * a + 4.0 * p.radiative_coeff * current / p.charge_volume()).sqrt())
}

/// Ideal junction voltage per chip, `v_d = n·Vt·ln(I/I0)`.
pub fn junction_voltage(current: f64, p: &LedParams) -> Result<f64> {
    if !(current > 0.0) {
        return Err(Error::domain(format!("junction voltage needs a positive current, got {current}")));
    }
    Ok(p.n_vt() * (current / p.saturation_current).ln())
}

/// Diode voltage per chip (excluding the series drop) for a chip current,
/// accounting for the shunt path.
fn chip_diode_voltage(current: f64, p: &LedParams) -> Result<f64> {
    let g = p.shunt_conductance();
    if g == 0.0 {
        return junction_voltage(current, p);
    }
    // I − v_d·g = I0·exp(v_d/nVt), increasing in v_d on the right-hand side.
    let nvt = p.n_vt();
    let i0 = p.saturation_current;
    let h = |vd: f64| {
        let e = i0 * (vd / nvt).exp();
        (e + vd * g - current, e / nvt + g)
    };
    let mut lo = -1.0;
    while h(lo).0 > 0.0 {
        lo *= 2.0;
        if lo < -1e9 {
            return Err(Error::numerical("shunt voltage bracket did not close"));
        }
    }
    let mut hi = 1.0;
    while h(hi).0 < 0.0 {
        hi += 1.0;
        if hi > 1e3 {
            return Err(Error::numerical("diode voltage bracket did not close"));
        }
    }
    newton_bisect(h, lo, hi, 1e-15, 1e-15, 400)
}

/// Terminal voltage of the whole LED string at `current`, including series drops.
pub fn terminal_voltage(current: f64, p: &LedParams) -> Result<f64> {
    if !(current > 0.0) {
        return Err(Error::domain(format!("terminal voltage needs a positive current, got {current}")));
    }
    let per_chip = chip_diode_voltage(current, p)? + current * p.series_resistance;
    Ok(per_chip * p.series_chips as f64)
}

/// Solves the I-V characteristic with series and shunt resistance for the
/// string current at a terminal voltage. The voltage is split evenly across
/// the series chips.
pub fn solve_iv(v_terminal: f64, p: &LedParams) -> Result<f64> {
    if !v_terminal.is_finite() {
        return Err(Error::domain("terminal voltage must be finite"));
    }
    let v = v_terminal / p.series_chips as f64;
    let nvt = p.n_vt();
    let i0 = p.saturation_current;
    let rs = p.series_resistance;
    let g = p.shunt_conductance();
    // F(I) = I − g·(v − I·Rs) − I0·exp((v − I·Rs)/nVt), strictly increasing in I.
    let residual = |i: f64| {
        let vd = v - i * rs;
        let e = i0 * (vd / nvt).exp();
        (i - g * vd - e, 1.0 + g * rs + e * rs / nvt)
    };
    let mut lo = -1e-3;
    let mut steps = 0;
    while !(residual(lo).0 < 0.0) {
        lo *= 2.0;
        steps += 1;
        if steps > 200 {
            return Err(Error::numerical(format!("I-V bracket failed at v = {v_terminal} V")));
        }
    }
    let mut hi = 1e-3;
    steps = 0;
    while !(residual(hi).0 > 0.0) {
        hi *= 2.0;
        steps += 1;
        if steps > 200 || !hi.is_finite() {
            return Err(Error::numerical(format!("I-V bracket failed at v = {v_terminal} V")));
        }
    }
    newton_bisect(residual, lo, hi, 0.0, 1e-15, 500)
}

/// Space-charge time constant `τ_c = Rs·C0 / √(1 − v_d/φ)`.
pub fn capacitance_time_constant(current: f64, p: &LedParams) -> Result<f64> {
    let vd = junction_voltage(current, p)?;
    let phi = p.built_in_potential;
    if vd >= phi {
        return Err(Error::domain(format!(
            "bias beyond capacitance-model validity: v_d = {vd:.4} V >= phi = {phi:.4} V at I = {current:e} A"
        )));
    }
    Ok(p.series_resistance * p.zero_bias_capacitance / (1.0 - vd / phi).sqrt())
}

/// Computes the full operating point at bias `current`, including the
/// equivalent 3-dB modulation bandwidth `1/(2π(τ_s + τ_c))`.
pub fn equivalent_bandwidth(current: f64, p: &LedParams) -> Result<OperatingPoint> {
    let tau_s = lifetime_from_current(current, p)?;
    let tau_c = capacitance_time_constant(current, p)?;
    let carrier_density = solve_carrier_density(current, p)?;
    let slope = if current > p.turn_on_current {
        small_signal_slope(current, p)?
    } else {
        0.0
    };
    Ok(OperatingPoint {
        i_dc: current,
        carrier_density,
        junction_voltage: junction_voltage(current, p)?,
        terminal_voltage: terminal_voltage(current, p)?,
        tau_s,
        tau_c,
        f_led: 1.0 / (2.0 * PI * (tau_s + tau_c)),
        slope,
    })
}

/// Static optical output: zero below the turn-on current, otherwise
/// `η·IQE(N)·I`, which equals `η·q·V·B·N²`.
pub fn static_optical_power(current: f64, p: &LedParams) -> f64 {
    if !(current > 0.0) || current < p.turn_on_current {
        return 0.0;
    }
    match solve_carrier_density(current, p) {
        Ok(n) => optical_power_from_density(n, p),
        Err(_) => 0.0,
    }
}

/// Radiative output power for a carrier density, `η·q·V·B·N²`, W.
pub fn optical_power_from_density(n: f64, p: &LedParams) -> f64 {
    p.optical_efficiency * p.charge_volume() * p.radiative_coeff * n * n
}

/// Small-signal electro-optic slope dP/dI by central difference with a
/// relative step of 1e-4 (forward difference right at the turn-on edge).
pub fn small_signal_slope(current: f64, p: &LedParams) -> Result<f64> {
    small_signal_slope_with_step(current, SLOPE_REL_STEP, p)
}

pub(crate) fn small_signal_slope_with_step(current: f64, rel_step: f64, p: &LedParams) -> Result<f64> {
    if !(current > p.turn_on_current) || !(current > 0.0) {
        return Err(Error::domain(format!(
            "slope needs a current above turn-on ({:e} A), got {current:e}",
            p.turn_on_current
        )));
    }
    let h = rel_step * current;
    let hi = static_optical_power(current + h, p);
    if current - h < p.turn_on_current {
        let mid = static_optical_power(current, p);
        return Ok((hi - mid) / h);
    }
    let lo = static_optical_power(current - h, p);
    Ok((hi - lo) / (2.0 * h))
}

/// Emission lineshape `√(E − Eg)·exp(−E/kT)` on an energy grid (eV),
/// normalized so the largest sample equals 1.
pub fn emission_spectrum(energies: &[f64], p: &LedParams) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::domain("energy grid is empty"));
    }
    if energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("energy grid must be strictly increasing"));
    }
    let eg = p.bandgap_ev;
    let kt = p.lineshape_kt_ev;
    if !(kt > 0.0) {
        return Err(Error::domain("lineshape thermal energy must be positive"));
    }
    if !(*energies.last().unwrap() > eg) {
        return Err(Error::domain("energy grid must extend above the bandgap"));
    }
    // Factor exp(−Eg/kT) out to keep the exponent small.
    let raw: Vec<f64> = energies
        .iter()
        .map(|&e| if e > eg { (e - eg).sqrt() * (-(e - eg) / kt).exp() } else { 0.0 })
        .collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    Ok(raw.into_iter().map(|v| v / peak).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Parameters of the scalar examples: A=1e7, B=1e-10, C=1e-29, V=1e-5 cm³.
    pub(crate) fn example_params() -> LedParams {
        LedParams {
            srh_coeff: 1e7,
            radiative_coeff: 1e-10,
            auger_coeff: 1e-29,
            active_volume: 1e-5,
            saturation_current: 1e-25,
            ideality: 2.0,
            thermal_voltage: 0.02585,
            series_resistance: 0.5,
            shunt_resistance: None,
            zero_bias_capacitance: 1e-8,
            built_in_potential: 3.3,
            optical_efficiency: 0.8,
            bandgap_ev: 2.6,
            lineshape_kt_ev: 0.02585,
            series_chips: 1,
            turn_on_current: 0.0,
        }
    }

    #[test]
    fn recombination_current_examples() {
        let p = example_params();
        assert_eq!(recombination_current(0.0, &p).unwrap(), 0.0);
        // q·V·(1e25 + 1e26 + 1e25) = 1.602176634e-24 · 1.2e26
        let i = recombination_current(1e18, &p).unwrap();
        assert_relative_eq!(i, 192.261_196_08, max_relative = 1e-9);
        assert!(recombination_current(2e18, &p).unwrap() > i);
        assert!(matches!(recombination_current(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn carrier_density_inverse() {
        let p = example_params();
        assert_eq!(solve_carrier_density(0.0, &p).unwrap(), 0.0);
        let i = recombination_current(1e18, &p).unwrap();
        let n = solve_carrier_density(i, &p).unwrap();
        assert!((n - 1e18).abs() <= 1e8, "n = {n:e}");
        assert!(solve_carrier_density(-1e-3, &p).is_err());
    }

    #[test]
    fn carrier_density_against_bisection_oracle() {
        let p = example_params();
        let target = 192.261_196_08 / p.charge_volume();
        let (mut lo, mut hi) = (0.0f64, 1e20f64);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let r = 1e7 * mid + 1e-10 * mid * mid + 1e-29 * mid * mid * mid;
            if r < target {
                lo = mid
            } else {
                hi = mid
            }
        }
        let n = solve_carrier_density(192.261_196_08, &p).unwrap();
        assert_relative_eq!(n, 0.5 * (lo + hi), max_relative = 1e-10);
        assert_relative_eq!(n, 1e18, max_relative = 1e-9);
    }

    #[test]
    fn iqe_examples() {
        let mut p = example_params();
        let iqe = internal_quantum_efficiency(1e18, &p).unwrap();
        assert_relative_eq!(iqe, 1e8 / (2e7 + 1e8), max_relative = 1e-12);
        assert!(internal_quantum_efficiency(1e3, &p).unwrap() < 1e-6);
        assert!(internal_quantum_efficiency(0.0, &p).is_err());
        p.srh_coeff = f64::MIN_POSITIVE;
        p.auger_coeff = 0.0;
        assert_relative_eq!(internal_quantum_efficiency(5e17, &p).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn differential_lifetime_examples() {
        let mut p = example_params();
        assert_relative_eq!(differential_lifetime(0.0, &p).unwrap(), 1e-7);
        p.auger_coeff = 0.0;
        let tau = differential_lifetime(1e18, &p).unwrap();
        assert_relative_eq!(tau, 1.0 / 2.1e8, max_relative = 1e-12);
    }

    #[test]
    fn lifetime_from_current_example() {
        let mut p = example_params();
        // Choose V so that 4B/(qV) = 3e15 A⁻¹s⁻².
        p.active_volume = 4.0 * p.radiative_coeff / (3e15 * ELEMENTARY_CHARGE);
        let tau = lifetime_from_current(0.3, &p).unwrap();
        assert_relative_eq!(tau, 1.0 / 1e15f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(lifetime_from_current(0.0, &p).unwrap(), 1e-7);
        assert!(lifetime_from_current(-0.1, &p).is_err());
    }

    #[test]
    fn lifetime_paths_agree_without_auger() {
        let mut p = example_params();
        p.auger_coeff = 0.0;
        for k in 0..10 {
            let n = 10f64.powf(15.0 + 0.5 * k as f64);
            let i = recombination_current(n, &p).unwrap();
            assert_relative_eq!(
                lifetime_from_current(i, &p).unwrap(),
                differential_lifetime(n, &p).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn junction_voltage_examples() {
        let p = example_params();
        assert_eq!(junction_voltage(1e-25, &p).unwrap(), 0.0);
        let vd = junction_voltage(0.25, &p).unwrap();
        assert_relative_eq!(vd, 0.0517 * (2.5e24f64).ln(), max_relative = 1e-12);
        assert!((vd - 2.904).abs() < 1e-3);
        let step = junction_voltage(0.5, &p).unwrap() - vd;
        assert_relative_eq!(step, 0.0517 * 2f64.ln(), max_relative = 1e-10);
        assert!(junction_voltage(0.0, &p).is_err());
    }

    #[test]
    fn iv_reduces_to_shockley() {
        let mut p = example_params();
        p.series_resistance = 0.0;
        for v in [2.5, 2.8, 3.0] {
            let i = solve_iv(v, &p).unwrap();
            let shockley = 1e-25 * (v / 0.0517f64).exp();
            assert_relative_eq!(i, shockley, max_relative = 1e-12);
        }
    }

    #[test]
    fn iv_series_drop_and_inverse() {
        let p = example_params();
        let v = terminal_voltage(0.45, &p).unwrap();
        assert_relative_eq!(v, junction_voltage(0.45, &p).unwrap() + 0.45 * 0.5, max_relative = 1e-14);
        let i = solve_iv(v, &p).unwrap();
        assert_relative_eq!(i, 0.45, max_relative = 1e-12);
    }

    #[test]
    fn iv_with_shunt_residual() {
        let mut p = example_params();
        p.shunt_resistance = Some(1e4);
        for v in [0.5, 1.5, 2.6, 3.0, 3.2] {
            let i = solve_iv(v, &p).unwrap();
            let vd = v - i * 0.5;
            let res = i - vd / 1e4 - 1e-25 * (vd / 0.0517).exp();
            assert!(res.abs() <= 1e-12 * i.abs(), "v={v} i={i:e} res={res:e}");
            // Forward direction agrees.
            assert_relative_eq!(terminal_voltage(i, &p).unwrap(), v, max_relative = 1e-9);
        }
    }

    #[test]
    fn series_chips_double_voltage() {
        let mut p = example_params();
        let v1 = terminal_voltage(0.37, &p).unwrap();
        p.series_chips = 2;
        let v2 = terminal_voltage(0.37, &p).unwrap();
        assert_relative_eq!(v2, 2.0 * v1, max_relative = 1e-14);
        assert_relative_eq!(solve_iv(v2, &p).unwrap(), 0.37, max_relative = 1e-12);
    }

    #[test]
    fn capacitance_examples() {
        let mut p = example_params();
        p.zero_bias_capacitance = 5e-9 / p.series_resistance;
        let tau = capacitance_time_constant(1e-25, &p).unwrap();
        assert_relative_eq!(tau, 5e-9, max_relative = 1e-12);
        let tau = capacitance_time_constant(0.25, &p).unwrap();
        let vd = junction_voltage(0.25, &p).unwrap();
        assert_relative_eq!(tau, 5e-9 / (1.0 - vd / 3.3).sqrt(), max_relative = 1e-12);
        assert!((tau - 14.4e-9).abs() < 0.1e-9, "tau_c = {tau:e}");
        // v_d = 3.3 V at I = I0·exp(3.3/0.0517)
        let i_edge = 1e-25 * (3.3f64 / 0.0517).exp() * 1.01;
        assert!(matches!(capacitance_time_constant(i_edge, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn equivalent_bandwidth_example() {
        let mut p = example_params();
        p.active_volume = 4.0 * p.radiative_coeff / (3e15 * ELEMENTARY_CHARGE);
        p.zero_bias_capacitance = 1e-8;
        let op = equivalent_bandwidth(0.3, &p).unwrap();
        assert_relative_eq!(op.tau_s, 31.6228e-9, max_relative = 1e-4);
        let expected_tau_c = 5e-9 / (1.0 - junction_voltage(0.3, &p).unwrap() / 3.3).sqrt();
        assert_relative_eq!(op.tau_c, expected_tau_c, max_relative = 1e-12);
        assert_eq!(op.f_led, 1.0 / (2.0 * PI * (op.tau_s + op.tau_c)));
        // τ_s = 31.62 ns, τ_c = 14.4 ns → 3.46 MHz
        let f = 1.0 / (2.0 * PI * (31.62e-9 + 14.4e-9));
        assert!((f - 3.46e6).abs() < 0.01e6);
    }

    #[test]
    fn static_power_turn_on_and_droop() {
        let mut p = example_params();
        p.turn_on_current = 0.01;
        assert_eq!(static_optical_power(0.0, &p), 0.0);
        assert_eq!(static_optical_power(0.0099, &p), 0.0);
        assert!(static_optical_power(0.0101, &p) > 0.0);
        // Droop region: second difference negative.
        let p = example_params();
        for i in [200.0, 400.0, 800.0] {
            let h = 0.01 * i;
            let d2 = static_optical_power(i + h, &p) - 2.0 * static_optical_power(i, &p)
                + static_optical_power(i - h, &p);
            assert!(d2 < 0.0, "I = {i}: d2 = {d2:e}");
        }
    }

    #[test]
    fn slope_linear_region_and_convergence() {
        let mut p = example_params();
        p.srh_coeff = 1e-3;
        p.auger_coeff = 0.0;
        let s = small_signal_slope(0.5, &p).unwrap();
        assert_relative_eq!(s, p.optical_efficiency, max_relative = 1e-6);

        let p = example_params();
        let a = small_signal_slope_with_step(50.0, 1e-4, &p).unwrap();
        let b = small_signal_slope_with_step(50.0, 5e-5, &p).unwrap();
        assert!(((a - b) / a).abs() < 1e-6);
        assert!(small_signal_slope(0.0, &p).is_err());
    }

    #[test]
    fn spectrum_peak_and_support() {
        let p = example_params();
        let grid: Vec<f64> = (0..4000).map(|k| 2.55 + k as f64 * 5e-5).collect();
        let s = emission_spectrum(&grid, &p).unwrap();
        let (imax, _) = s.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((grid[imax] - (2.6 + 0.5 * 0.02585)).abs() <= 5e-5);
        for (e, v) in grid.iter().zip(&s) {
            if *e <= 2.6 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(emission_spectrum(&[], &p).is_err());
        assert!(emission_spectrum(&[2.0, 2.5], &p).is_err());
    }

    #[test]
    fn spectrum_fwhm_against_root_oracle() {
        // Oracle: half-maximum roots of √x·e^(−x) (x in units of kT) by bisection.
        let g = |x: f64| x.sqrt() * (-x).exp();
        let half = 0.5 * g(0.5);
        let bisect = |mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (g(mid) - half).signum() == (g(lo) - half).signum() {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            0.5 * (lo + hi)
        };
        let fwhm_kt = bisect(0.5, 10.0) - bisect(1e-12, 0.5);
        assert!((fwhm_kt - 1.8).abs() < 0.05, "oracle FWHM = {fwhm_kt} kT");

        let p = example_params();
        let kt = p.lineshape_kt_ev;
        let grid: Vec<f64> = (0..20000).map(|k| 2.6 + k as f64 * 1e-5).collect();
        let s = emission_spectrum(&grid, &p).unwrap();
        let above: Vec<f64> = grid.iter().zip(&s).filter(|(_, v)| **v >= 0.5).map(|(e, _)| *e).collect();
        let width = above.last().unwrap() - above.first().unwrap();
        assert!((width / kt - fwhm_kt).abs() < 2e-3, "{} vs {}", width / kt, fwhm_kt);
    }
}
