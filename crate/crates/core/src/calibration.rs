//! Parameter extraction from measured curves and the shipped device card.
//!
//! Three fits are provided. `fit_iv` extracts the Shockley parameters from
//! an I-V curve. `fit_bandwidth` extracts the four combinations of device
//! constants that the bandwidth-versus-bias relation actually depends on.
//! `fit_li` extracts the optical efficiency, turn-on current and Auger
//! coefficient from an L-I curve. All searches are deterministic
//! multi-start Powell descents.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::led_device::{
    junction_voltage, solve_carrier_density, solve_iv, LedParams, ELEMENTARY_CHARGE, THERMAL_VOLTAGE_300K,
};
use crate::numeric::{golden_section, newton_bisect, powell_minimize, PowellOptions};

/// Card format understood by this version.
pub const CARD_FORMAT_VERSION: u32 = 1;

/// Points needed by any fit.
const MIN_FIT_POINTS: usize = 5;

/// Relative RMS improvement required before a shunt resistance is kept.
const SHUNT_IMPROVEMENT: f64 = 0.8;
/// A shunt carrying less than this fraction of the lowest measured current is dropped.
const MIN_SHUNT_LEAK: f64 = 0.01;

/// Fraction of the peak optical power below which an L-I point counts as dark.
const DARK_FRACTION: f64 = 1e-3;

/// Turn-on current used when an L-I curve has no dark points, A.
const FALLBACK_TURN_ON: f64 = 0.01;

/// Scale of the Auger parametrization `C = (c · 1e-15)²`, cm⁶/s.
const AUGER_SCALE: f64 = 1e-15;

const DEFAULT_CARD_JSON: &str = include_str!("../cards/default_card.json");

/// Serialized, calibrated LED description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCard {
    pub format_version: u32,
    pub params: LedParams,
    /// RMS error of each fit that contributed, keyed by dataset.
    pub fit_residuals: BTreeMap<String, f64>,
    pub provenance: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DeviceCard {
    pub fn new(params: LedParams, provenance: impl Into<String>) -> Self {
        Self {
            format_version: CARD_FORMAT_VERSION,
            params,
            fit_residuals: BTreeMap::new(),
            provenance: provenance.into(),
            warnings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CARD_FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported card format_version {} (expected {CARD_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if let Some((k, v)) = self.fit_residuals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!("fit residual {k} is not finite ({v})")));
        }
        self.params.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let card: DeviceCard = serde_json::from_str(text)?;
        card.validate()?;
        Ok(card)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Copies the I-V fit into the card.
    pub fn apply_iv(&mut self, fit: &IvFit) {
        let p = &mut self.params;
        p.saturation_current = fit.saturation_current;
        p.ideality = fit.ideality;
        p.thermal_voltage = fit.thermal_voltage;
        p.series_resistance = fit.series_resistance;
        p.shunt_resistance = fit.shunt_resistance;
        p.series_chips = fit.chip_count;
        self.fit_residuals.insert("iv_rms_log_current".into(), fit.rms_log_residual);
    }

    /// Decomposes the bandwidth aggregates into device constants, keeping
    /// the card's radiative coefficient, ideality, thermal voltage and series
    /// resistance as the reference values.
    pub fn apply_bandwidth(&mut self, fit: &BandwidthFit) -> Result<()> {
        let p = &mut self.params;
        if !(p.series_resistance > 0.0) {
            return Err(Error::validation("series resistance must be known to split Rs·C0"));
        }
        p.srh_coeff = fit.theta_a.sqrt();
        p.active_volume = 4.0 * p.radiative_coeff / (ELEMENTARY_CHARGE * fit.theta_b);
        p.zero_bias_capacitance = fit.theta_rc / p.series_resistance;
        p.built_in_potential = p.n_vt() / fit.theta_v;
        p.saturation_current = fit.saturation_current;
        self.fit_residuals.insert("bw_rms_relative".into(), fit.rms_relative_residual);
        Ok(())
    }

    pub fn apply_li(&mut self, fit: &LiFit) {
        let p = &mut self.params;
        p.optical_efficiency = fit.optical_efficiency;
        p.turn_on_current = fit.turn_on_current;
        p.auger_coeff = fit.auger_coeff;
        self.fit_residuals.insert("li_rms_relative".into(), fit.rms_relative_residual);
        if fit.turn_on_defaulted {
            self.warnings.push(format!(
                "no turn-on knee in L-I data; turn_on_current defaulted to {FALLBACK_TURN_ON} A"
            ));
        }
    }
}

/// The card shipped with the crate.
pub fn default_card() -> DeviceCard {
    DeviceCard::from_json(DEFAULT_CARD_JSON).expect("embedded default card is valid")
}

/// Kind of a measured curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// Terminal voltage (V) against current (A).
    Iv,
    /// Current (A) against optical power (W or normalized).
    Li,
    /// Bias current (A) against 3-dB bandwidth (Hz).
    Bw,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Iv => "IV",
            CurveKind::Li => "LI",
            CurveKind::Bw => "BW",
        })
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IV" => Ok(CurveKind::Iv),
            "LI" => Ok(CurveKind::Li),
            "BW" => Ok(CurveKind::Bw),
            other => Err(Error::validation(format!("unknown curve kind '{other}' (IV, LI or BW)"))),
        }
    }
}

/// A measured curve in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    pub kind: CurveKind,
    pub chip_count: u32,
    pub rows: Vec<(f64, f64)>,
}

impl MeasuredCurve {
    pub fn new(kind: CurveKind, chip_count: u32, rows: Vec<(f64, f64)>) -> Result<Self> {
        let c = Self { kind, chip_count, rows };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chip_count == 0 {
            return Err(Error::validation("chip_count must be at least 1"));
        }
        if self.rows.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::validation("curve contains non-finite values"));
        }
        if let Some(k) = self.rows.windows(2).position(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation(format!("x values must be strictly increasing (row {})", k + 2)));
        }
        Ok(())
    }

    fn require(&self, kind: CurveKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::validation(format!("expected a {kind} curve, got {}", self.kind)));
        }
        if self.rows.len() < MIN_FIT_POINTS {
            return Err(Error::validation(format!(
                "need at least {MIN_FIT_POINTS} points, got {}",
                self.rows.len()
            )));
        }
        Ok(())
    }

    /// Parses the CSV format:
    ///
    /// ```text
    /// # comment
    /// kind,chip_count
    /// IV,1
    /// x,y
    /// 2.70,0.010
    /// ```
    ///
    /// The two column-name lines are optional. Errors carry 1-based line numbers.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut header: Option<(CurveKind, u32)> = None;
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            if fields.len() != 2 {
                return Err(parse_err(format!("expected 2 comma-separated fields, found {}", fields.len())));
            }
            if fields[0].eq_ignore_ascii_case("kind") && fields[1].eq_ignore_ascii_case("chip_count") {
                continue;
            }
            if fields[0].eq_ignore_ascii_case("x") && fields[1].eq_ignore_ascii_case("y") {
                if header.is_none() {
                    return Err(parse_err("column names before the kind,chip_count header".into()));
                }
                continue;
            }
            match header {
                None => {
                    let kind = fields[0]
                        .parse::<CurveKind>()
                        .map_err(|_| parse_err(format!("missing header: expected 'kind,chip_count', got '{line}'")))?;
                    let chips = fields[1]
                        .parse::<u32>()
                        .map_err(|_| parse_err(format!("chip_count '{}' is not a positive integer", fields[1])))?;
                    if chips == 0 {
                        return Err(parse_err("chip_count must be at least 1".into()));
                    }
                    header = Some((kind, chips));
                }
                Some(_) => {
                    let x = fields[0]
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("'{}' is not a number", fields[0])))?;
                    let y = fields[1]
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("'{}' is not a number", fields[1])))?;
                    if !x.is_finite() || !y.is_finite() {
                        return Err(parse_err("values must be finite".into()));
                    }
                    if let Some(&(px, _)) = rows.last() {
                        if !(x > px) {
                            return Err(parse_err(format!("x = {x} does not increase")));
                        }
                    }
                    rows.push((x, y));
                }
            }
        }
        let (kind, chip_count) = header.ok_or(Error::Parse {
            line: 1,
            message: "missing header 'kind,chip_count'".into(),
        })?;
        Self::new(kind, chip_count, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("kind,chip_count\n{},{}\nx,y\n", self.kind, self.chip_count);
        for (x, y) in &self.rows {
            out.push_str(&format!("{x:.12e},{y:.12e}\n"));
        }
        out
    }
}

/// Outcome of [`fit_iv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvFit {
    pub saturation_current: f64,
    pub ideality: f64,
    /// Thermal voltage the ideality refers to, V.
    pub thermal_voltage: f64,
    pub series_resistance: f64,
    pub shunt_resistance: Option<f64>,
    pub chip_count: u32,
    /// RMS of `ln I_model − ln I_measured`.
    pub rms_log_residual: f64,
    pub converged: bool,
}

/// Parameter set whose I-V fields are overwritten during the I-V search.
fn iv_template(chip_count: u32) -> LedParams {
    LedParams {
        srh_coeff: 1e7,
        radiative_coeff: 1e-11,
        auger_coeff: 0.0,
        active_volume: 1e-8,
        saturation_current: 1e-12,
        ideality: 2.0,
        thermal_voltage: THERMAL_VOLTAGE_300K,
        series_resistance: 0.0,
        shunt_resistance: None,
        zero_bias_capacitance: 1e-9,
        built_in_potential: 3.0,
        optical_efficiency: 1.0,
        bandgap_ev: 2.6,
        lineshape_kt_ev: THERMAL_VOLTAGE_300K,
        series_chips: chip_count,
        turn_on_current: 0.0,
    }
}

/// Unknowns: `[ln I0, ln nVt, √Rs]` and optionally `√(G_p / G_scale)`.
fn iv_params(x: &[f64], template: &LedParams, g_scale: f64) -> LedParams {
    let mut p = template.clone();
    p.saturation_current = x[0].exp();
    p.ideality = x[1].exp() / p.thermal_voltage;
    p.series_resistance = x[2] * x[2];
    p.shunt_resistance = x.get(3).map(|u| 1.0 / (u * u * g_scale)).filter(|r| r.is_finite());
    p
}

fn iv_rms(x: &[f64], curve: &MeasuredCurve, template: &LedParams, g_scale: f64) -> f64 {
    let p = iv_params(x, template, g_scale);
    let mut acc = 0.0;
    for &(v, i) in &curve.rows {
        match solve_iv(v, &p) {
            Ok(im) if im > 0.0 => acc += (im.ln() - i.ln()).powi(2),
            _ => return f64::INFINITY,
        }
    }
    (acc / curve.rows.len() as f64).sqrt()
}

/// Straight-line least squares `y = a + b·x`.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Fits `I − (v − I·Rs)/Rp = I0·exp((v − I·Rs)/(n·Vt))` to an I-V curve in
/// log-current space. The shunt is only kept when it lowers the RMS residual
/// by more than 20%.
pub fn fit_iv(curve: &MeasuredCurve) -> Result<IvFit> {
    curve.require(CurveKind::Iv)?;
    if curve.rows.iter().any(|&(_, i)| !(i > 0.0)) {
        return Err(Error::validation("I-V currents must be positive"));
    }
    let i_min = curve.rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let i_max = curve.rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if i_max / i_min < 100.0 {
        return Err(Error::validation(format!(
            "currents span {:.2} decades; at least 2 are needed",
            (i_max / i_min).log10()
        )));
    }
    let chips = curve.chip_count as f64;
    let template = iv_template(curve.chip_count);

    // Low-current decade: ln I against per-chip voltage is a straight line.
    let mut low: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .filter(|r| r.1 <= 10.0 * i_min)
        .map(|&(v, i)| (v / chips, i.ln()))
        .collect();
    if low.len() < 2 {
        low = curve.rows.iter().take(3).map(|&(v, i)| (v / chips, i.ln())).collect();
    }
    let (intercept, slope) = line_fit(&low);
    let nvt0 = if slope > 0.0 { 1.0 / slope } else { 0.05 };
    let ln_i0 = intercept;
    // High-current excess voltage over the ideal diode gives Rs.
    let top: Vec<f64> = curve
        .rows
        .iter()
        .rev()
        .take(3)
        .map(|&(v, i)| ((v / chips - nvt0 * (i.ln() - ln_i0)) / i).max(0.0))
        .collect();
    let rs0 = top.iter().sum::<f64>() / top.len() as f64;

    let opts = PowellOptions {
        initial_step: 0.05,
        ..PowellOptions::default()
    };
    let g_scale = i_min / (curve.rows[0].0 / chips).max(1e-3);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for rs_factor in [1.0, 0.3, 3.0] {
        let x0 = [ln_i0, nvt0.ln(), (rs0 * rs_factor).sqrt()];
        let m = powell_minimize(|x| iv_rms(x, curve, &template, g_scale), &x0, opts);
        if best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.x, m.value, m.converged));
        }
    }
    let (mut x, mut rms, mut converged) = best.unwrap();
    let mut shunt_x = x.clone();
    shunt_x.push(0.5);
    let m = powell_minimize(|x| iv_rms(x, curve, &template, g_scale), &shunt_x, opts);
    // u² is the shunt current at the lowest voltage relative to the measured one.
    let leak_fraction = m.x[3] * m.x[3];
    if m.value < SHUNT_IMPROVEMENT * rms && leak_fraction >= MIN_SHUNT_LEAK {
        x = m.x;
        rms = m.value;
        converged = m.converged;
    }
    if !rms.is_finite() {
        return Err(Error::numerical(format!("I-V fit diverged; best parameters so far {x:?}")));
    }
    let p = iv_params(&x, &template, g_scale);
    Ok(IvFit {
        saturation_current: p.saturation_current,
        ideality: p.ideality,
        thermal_voltage: p.thermal_voltage,
        series_resistance: p.series_resistance,
        shunt_resistance: p.shunt_resistance,
        chip_count: curve.chip_count,
        rms_log_residual: rms,
        converged,
    })
}

/// The four identifiable combinations behind the bandwidth-versus-bias curve:
/// `f(I) = 1 / (2π(τ_s + τ_c))`, `τ_s = 1/√(θ_A + θ_B·I)`,
/// `τ_c = θ_RC / √(1 − θ_V·ln(I/I0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthAggregates {
    /// `A²`, s⁻².
    pub theta_a: f64,
    /// `4B/(q·V)`, A⁻¹·s⁻².
    pub theta_b: f64,
    /// `Rs·C0`, s.
    pub theta_rc: f64,
    /// `n·Vt/φ`.
    pub theta_v: f64,
}

impl BandwidthAggregates {
    pub fn from_params(p: &LedParams) -> Self {
        Self {
            theta_a: p.srh_coeff * p.srh_coeff,
            theta_b: 4.0 * p.radiative_coeff / p.charge_volume(),
            theta_rc: p.series_resistance * p.zero_bias_capacitance,
            theta_v: p.n_vt() / p.built_in_potential,
        }
    }

    /// Modelled bandwidth at `current`, Hz (NaN outside the capacitance model).
    pub fn bandwidth(&self, current: f64, saturation_current: f64) -> f64 {
        let tau_s = 1.0 / (self.theta_a + self.theta_b * current).sqrt();
        let x = 1.0 - self.theta_v * (current / saturation_current).ln();
        if !(x > 0.0) {
            return f64::NAN;
        }
        let tau_c = self.theta_rc / x.sqrt();
        1.0 / (2.0 * PI * (tau_s + tau_c))
    }
}

/// Outcome of [`fit_bandwidth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthFit {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_rc: f64,
    pub theta_v: f64,
    /// I0 the junction-voltage term was evaluated with, A.
    pub saturation_current: f64,
    /// RMS relative bandwidth error.
    pub rms_relative_residual: f64,
    pub converged: bool,
}

impl BandwidthFit {
    pub fn aggregates(&self) -> BandwidthAggregates {
        BandwidthAggregates {
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            theta_rc: self.theta_rc,
            theta_v: self.theta_v,
        }
    }
}

fn bw_rms(x: &[f64], rows: &[(f64, f64)], i0: f64) -> f64 {
    let agg = BandwidthAggregates {
        theta_a: x[0].exp(),
        theta_b: x[1].exp(),
        theta_rc: x[2].exp(),
        theta_v: x[3].exp(),
    };
    let mut acc = 0.0;
    for &(i, f) in rows {
        let m = agg.bandwidth(i, i0);
        if !m.is_finite() {
            return f64::INFINITY;
        }
        acc += (m / f - 1.0).powi(2);
    }
    (acc / rows.len() as f64).sqrt()
}

/// Fits the bandwidth aggregates to bandwidth-versus-bias data. `I0` is not
/// identifiable from bandwidth data alone and must be supplied (typically
/// from [`fit_iv`]).
pub fn fit_bandwidth(curve: &MeasuredCurve, saturation_current: f64) -> Result<BandwidthFit> {
    curve.require(CurveKind::Bw)?;
    if !(saturation_current > 0.0) {
        return Err(Error::validation("saturation current must be positive"));
    }
    let rows = &curve.rows;
    if rows.iter().any(|&(i, f)| !(i > 0.0 && f > 0.0)) {
        return Err(Error::validation("bandwidth data must have positive currents and frequencies"));
    }
    let f_min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let f_max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if f_max / f_min < 1.01 {
        return Err(Error::validation(
            "bandwidth is flat over the data; the aggregates are not identifiable",
        ));
    }
    let i_first = rows[0].0;
    let i_last = rows[rows.len() - 1].0;
    let ln_span = (i_last / saturation_current).ln();
    if !(ln_span > 0.0) {
        return Err(Error::validation("currents must exceed the saturation current"));
    }
    let w_first = 2.0 * PI * rows[0].1;
    let (i_mid, f_mid) = rows[rows.len() / 2];
    let w_mid = 2.0 * PI * f_mid;

    let opts = PowellOptions {
        initial_step: 0.3,
        ..PowellOptions::default()
    };
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for a_frac in [0.1, 0.5] {
        for b_frac in [0.5, 1.0, 2.0] {
            for rc_frac in [0.1, 0.4] {
                for v_frac in [0.5, 0.9] {
                    let x0 = [
                        (a_frac * w_first * w_first).ln(),
                        (b_frac * w_mid * w_mid / i_mid).ln(),
                        (rc_frac / (2.0 * PI * f_max)).ln(),
                        (v_frac / ln_span).ln(),
                    ];
                    let m = powell_minimize(|x| bw_rms(x, rows, saturation_current), &x0, opts);
                    if best.as_ref().is_none_or(|b| m.value < b.1) {
                        best = Some((m.x, m.value, m.converged));
                    }
                }
            }
        }
    }
    let (x, rms, converged) = best.unwrap();
    if !rms.is_finite() {
        return Err(Error::numerical(format!(
            "bandwidth fit diverged between {i_first:e} and {i_last:e} A; best parameters so far {x:?}"
        )));
    }
    Ok(BandwidthFit {
        theta_a: x[0].exp(),
        theta_b: x[1].exp(),
        theta_rc: x[2].exp(),
        theta_v: x[3].exp(),
        saturation_current,
        rms_relative_residual: rms,
        converged,
    })
}

/// Outcome of [`fit_li`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiFit {
    pub optical_efficiency: f64,
    pub turn_on_current: f64,
    pub auger_coeff: f64,
    /// True when no dark points were found and the fallback turn-on was used.
    pub turn_on_defaulted: bool,
    /// RMS error relative to the peak measured power.
    pub rms_relative_residual: f64,
}

/// Radiative power per unit efficiency, `q·V·B·N²`, for each current.
fn li_shape(currents: &[f64], base: &LedParams, auger: f64) -> Option<Vec<f64>> {
    let mut p = base.clone();
    p.auger_coeff = auger;
    currents
        .iter()
        .map(|&i| solve_carrier_density(i, &p).ok().map(|n| p.charge_volume() * p.radiative_coeff * n * n))
        .collect()
}

/// Least-squares efficiency for a fixed shape and the resulting RMS residual.
fn li_efficiency(shape: &[f64], measured: &[f64], scale: f64) -> (f64, f64) {
    let sxy: f64 = shape.iter().zip(measured).map(|(s, m)| s * m).sum();
    let sxx: f64 = shape.iter().map(|s| s * s).sum();
    let eta = sxy / sxx;
    let rms = (shape.iter().zip(measured).map(|(s, m)| (eta * s - m).powi(2)).sum::<f64>() / shape.len() as f64)
        .sqrt()
        / scale;
    (eta, rms)
}

/// Fits an L-I curve using the recombination constants of `base`.
///
/// The turn-on current is the midpoint between the last dark point (below
/// 0.1% of the peak power) and the next point. The efficiency follows in
/// closed form for each trial Auger coefficient, which is found by
/// golden-section search.
pub fn fit_li(curve: &MeasuredCurve, base: &LedParams) -> Result<LiFit> {
    curve.require(CurveKind::Li)?;
    base.validate()?;
    let rows = &curve.rows;
    if rows.iter().any(|&(i, _)| !(i >= 0.0)) {
        return Err(Error::validation("L-I currents must be non-negative"));
    }
    let p_max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if !(p_max > 0.0) {
        return Err(Error::validation("L-I curve has no optical output"));
    }
    let last_dark = rows.iter().rposition(|r| r.1 <= DARK_FRACTION * p_max);
    let (turn_on, defaulted) = match last_dark {
        Some(k) if k + 1 < rows.len() => (0.5 * (rows[k].0 + rows[k + 1].0), false),
        Some(_) => return Err(Error::validation("L-I curve is dark at its last point")),
        None => (FALLBACK_TURN_ON, true),
    };
    let lit: Vec<(f64, f64)> = rows.iter().copied().filter(|r| r.0 >= turn_on && r.0 > 0.0).collect();
    if lit.len() < 3 {
        return Err(Error::validation("fewer than 3 L-I points above turn-on"));
    }
    let currents: Vec<f64> = lit.iter().map(|r| r.0).collect();
    let measured: Vec<f64> = lit.iter().map(|r| r.1).collect();
    let objective = |c: f64| -> f64 {
        match li_shape(&currents, base, (c * AUGER_SCALE).powi(2)) {
            Some(shape) => li_efficiency(&shape, &measured, p_max).1,
            None => f64::INFINITY,
        }
    };
    // c = 100 corresponds to C = 1e-26 cm⁶/s, far beyond any nitride LED.
    let (c, _) = golden_section(objective, 0.0, 100.0, 1e-9, 300);
    let auger = (c * AUGER_SCALE).powi(2);
    let shape = li_shape(&currents, base, auger).ok_or_else(|| Error::numerical("L-I model evaluation failed"))?;
    let (eta, rms) = li_efficiency(&shape, &measured, p_max);
    Ok(LiFit {
        optical_efficiency: eta,
        turn_on_current: turn_on,
        auger_coeff: auger,
        turn_on_defaulted: defaulted,
        rms_relative_residual: rms,
    })
}

/// Current at which droop has halved the electro-optic slope dP/dI relative
/// to its peak, A. The slope is `2ηB·N / (A + 2B·N + 3C·N²)`, which peaks at
/// `N* = √(A/3C)`; requires `C > 0`.
pub fn saturation_onset_current(p: &LedParams) -> Result<f64> {
    let (a, b, c) = (p.srh_coeff, p.radiative_coeff, p.auger_coeff);
    if !(c > 0.0) {
        return Err(Error::domain("no droop without an Auger term"));
    }
    let shape = |n: f64| 2.0 * b * n / (a + 2.0 * b * n + 3.0 * c * n * n);
    let n_peak = (a / (3.0 * c)).sqrt();
    let half = 0.5 * shape(n_peak);
    // 3·h·C·N² + 2B(h − 1)·N + h·A = 0, larger root.
    let qa = 3.0 * half * c;
    let qb = 2.0 * b * (half - 1.0);
    let qc = half * a;
    let disc = qb * qb - 4.0 * qa * qc;
    let n = (-qb + disc.max(0.0).sqrt()) / (2.0 * qa);
    Ok(p.charge_volume() * n * (a + n * (b + n * c)))
}

/// Operating points the shipped card is anchored to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    /// Three (terminal voltage V, current A) points of a single chip.
    pub iv_points: [(f64, f64); 3],
    pub thermal_voltage: f64,
    /// Bias current (A) and LED bandwidth (Hz) at the start of saturation.
    pub bandwidth_point: (f64, f64),
    /// Bias current where the bandwidth peaks, A.
    pub bandwidth_peak_current: f64,
    /// φ minus the junction voltage at the saturation-onset current, V.
    pub phi_margin: f64,
    /// Current where droop halves the electro-optic slope, A.
    pub saturation_onset: f64,
    pub srh_coeff: f64,
    pub radiative_coeff: f64,
    pub optical_efficiency: f64,
    pub turn_on_current: f64,
    pub bandgap_ev: f64,
    pub lineshape_kt_ev: f64,
}

impl Default for Anchors {
    fn default() -> Self {
        Self {
            iv_points: [(2.7, 0.010), (3.3, 0.450), (3.7, 1.100)],
            thermal_voltage: THERMAL_VOLTAGE_300K,
            bandwidth_point: (0.250, 7e6),
            bandwidth_peak_current: 0.450,
            phi_margin: 0.06,
            saturation_onset: 1.100,
            srh_coeff: 1e7,
            radiative_coeff: 1e-11,
            optical_efficiency: 0.8,
            turn_on_current: 0.010,
            bandgap_ev: 2.6,
            lineshape_kt_ev: THERMAL_VOLTAGE_300K,
        }
    }
}

/// Solves a 3×3 linear system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let k = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= k * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Builds a card that passes exactly through the anchor points.
///
/// The I-V anchors fix `I0`, `n` and `Rs` (three linear equations in
/// `n·Vt`, `n·Vt·ln I0` and `Rs`). φ sits `phi_margin` above the junction
/// voltage at the saturation-onset current. `θ_B` and `θ_RC` follow from the
/// bandwidth at the anchor current and a zero bandwidth slope at the peak
/// current; the active volume and C0 follow from them. Finally the Auger
/// coefficient places the droop onset at the anchor current.
pub fn anchored_card(anchors: &Anchors) -> Result<DeviceCard> {
    let rows = anchors.iv_points.map(|(v, i)| [1.0, i.ln(), i, v]);
    // v = −nVt·ln I0 + nVt·ln I + Rs·I
    let [c0, nvt, rs] = solve3(rows).ok_or_else(|| Error::numerical("singular I-V anchor system"))?;
    if !(nvt > 0.0 && rs >= 0.0) {
        return Err(Error::validation("I-V anchors imply a non-physical diode"));
    }
    let i0 = (-c0 / nvt).exp();
    let vd_onset = nvt * (anchors.saturation_onset / i0).ln();
    let phi = vd_onset + anchors.phi_margin;
    let theta_a = anchors.srh_coeff * anchors.srh_coeff;
    let theta_v = nvt / phi;
    let (i_anchor, f_anchor) = anchors.bandwidth_point;
    let total = 1.0 / (2.0 * PI * f_anchor);
    let x_anchor = 1.0 - theta_v * (i_anchor / i0).ln();

    // For a trial θ_B the anchor bandwidth fixes θ_RC; the peak condition fixes θ_B.
    let aggregates = |ln_theta_b: f64| -> BandwidthAggregates {
        let theta_b = ln_theta_b.exp();
        let tau_s = 1.0 / (theta_a + theta_b * i_anchor).sqrt();
        BandwidthAggregates {
            theta_a,
            theta_b,
            theta_rc: (total - tau_s) * x_anchor.sqrt(),
            theta_v,
        }
    };
    let i_peak = anchors.bandwidth_peak_current;
    let slope_at_peak = |ln_theta_b: f64| -> f64 {
        let agg = aggregates(ln_theta_b);
        let h = 1e-5 * i_peak;
        agg.bandwidth(i_peak + h, i0) - agg.bandwidth(i_peak - h, i0)
    };
    // Smallest θ_B still meeting the anchor bandwidth with θ_RC ≥ 0.
    let ln_b_min = ((1.0 / (total * total) - theta_a) / i_anchor).ln();
    let mut lo = ln_b_min + 1e-9;
    let mut hi = lo + 1.0;
    let mut tries = 0;
    while slope_at_peak(hi) > 0.0 {
        lo = hi;
        hi += 1.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::numerical("bandwidth anchors admit no peak"));
        }
    }
    let ln_theta_b = newton_bisect(|x| (-slope_at_peak(x), 1.0), lo, hi, 1e-13, 0.0, 300)?;
    let agg = aggregates(ln_theta_b);
    if !(agg.theta_rc > 0.0) {
        return Err(Error::numerical("bandwidth anchors imply a negative RC time constant"));
    }

    let mut params = LedParams {
        srh_coeff: anchors.srh_coeff,
        radiative_coeff: anchors.radiative_coeff,
        auger_coeff: 0.0,
        active_volume: 4.0 * anchors.radiative_coeff / (ELEMENTARY_CHARGE * agg.theta_b),
        saturation_current: i0,
        ideality: nvt / anchors.thermal_voltage,
        thermal_voltage: anchors.thermal_voltage,
        series_resistance: rs,
        shunt_resistance: None,
        zero_bias_capacitance: agg.theta_rc / rs,
        built_in_potential: phi,
        optical_efficiency: anchors.optical_efficiency,
        bandgap_ev: anchors.bandgap_ev,
        lineshape_kt_ev: anchors.lineshape_kt_ev,
        series_chips: 1,
        turn_on_current: anchors.turn_on_current,
    };
    // Onset current falls monotonically as C grows.
    let onset_err = |ln_c: f64, p: &mut LedParams| -> f64 {
        p.auger_coeff = ln_c.exp();
        saturation_onset_current(p).map_or(f64::NAN, |i| (i / anchors.saturation_onset).ln())
    };
    let mut work = params.clone();
    let ln_c = newton_bisect(|x| (-onset_err(x, &mut work), 1.0), (1e-40f64).ln(), (1e-20f64).ln(), 1e-12, 0.0, 400)?;
    params.auger_coeff = ln_c.exp();

    let mut card = DeviceCard::new(
        params,
        "Anchored to quoted operating points: 10 mA at 2.7 V, 450 mA at 3.3 V, 1.1 A at 3.7 V, \
         7 MHz LED bandwidth at 250 mA saturating by 450 mA, droop onset at 1.1 A. \
         A = 1e7 1/s and B = 1e-11 cm^3/s are assumed; only the aggregates are constrained.",
    );
    let p = &card.params;
    let iv_res: f64 = anchors
        .iv_points
        .iter()
        .map(|&(v, i)| {
            let im = solve_iv(v, p).unwrap_or(f64::NAN);
            (im.ln() - i.ln()).powi(2)
        })
        .sum::<f64>()
        / 3.0;
    let bw = BandwidthAggregates::from_params(p).bandwidth(i_anchor, i0);
    card.fit_residuals.insert("iv_rms_log_current".into(), iv_res.sqrt());
    card.fit_residuals.insert("bw_rms_relative".into(), (bw / f_anchor - 1.0).abs());
    junction_voltage(anchors.saturation_onset, p)?;
    card.validate()?;
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::led_device::{equivalent_bandwidth, static_optical_power, terminal_voltage};
    use approx::assert_relative_eq;

    #[test]
    fn embedded_card_matches_generator() {
        let generated = anchored_card(&Anchors::default()).unwrap();
        let shipped = default_card();
        assert_eq!(generated.to_json().unwrap(), shipped.to_json().unwrap());
    }

    #[test]
    fn anchored_card_hits_anchors() {
        let card = anchored_card(&Anchors::default()).unwrap();
        let p = &card.params;
        for (v, i) in Anchors::default().iv_points {
            assert_relative_eq!(terminal_voltage(i, p).unwrap(), v, max_relative = 1e-9);
        }
        assert_relative_eq!(equivalent_bandwidth(0.25, p).unwrap().f_led, 7e6, max_relative = 1e-9);
        let f = |i: f64| equivalent_bandwidth(i, p).unwrap().f_led;
        assert!(f(0.44) < f(0.45) && f(0.46) < f(0.45));
        assert_relative_eq!(saturation_onset_current(p).unwrap(), 1.1, max_relative = 1e-6);
    }

    #[test]
    fn card_json_round_trip_is_exact() {
        let card = default_card();
        let back = DeviceCard::from_json(&card.to_json().unwrap()).unwrap();
        assert_eq!(card, back);
    }

    #[test]
    fn card_version_checked() {
        let mut card = default_card();
        card.format_version = 2;
        let text = serde_json::to_string(&card).unwrap();
        assert!(DeviceCard::from_json(&text).is_err());
    }

    #[test]
    fn csv_parsing() {
        let text = "# bench data\nkind,chip_count\nIV,2\nx,y\n5.4,0.01\n6.0,0.1 # note\n";
        let c = MeasuredCurve::parse_csv(text).unwrap();
        assert_eq!(c.kind, CurveKind::Iv);
        assert_eq!(c.chip_count, 2);
        assert_eq!(c.rows, vec![(5.4, 0.01), (6.0, 0.1)]);
        assert_eq!(MeasuredCurve::parse_csv(&c.to_csv()).unwrap(), c);
        let bare = MeasuredCurve::parse_csv("BW,1\n0.1,5e6\n0.2,6e6\n").unwrap();
        assert_eq!(bare.rows.len(), 2);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        match MeasuredCurve::parse_csv("IV,1\n1.0,0.1\n1.1,abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match MeasuredCurve::parse_csv("1.0,0.1\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("header"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            MeasuredCurve::parse_csv("IV,1\n1.0,0.1\n0.9,0.2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(MeasuredCurve::parse_csv(""), Err(Error::Parse { .. })));
    }

    fn synthetic_iv(p: &LedParams) -> MeasuredCurve {
        let rows: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let i = 1e-3 * 10f64.powf(3.0 * k as f64 / 39.0);
                (terminal_voltage(i, p).unwrap(), i)
            })
            .collect();
        MeasuredCurve::new(CurveKind::Iv, p.series_chips, rows).unwrap()
    }

    #[test]
    fn iv_exact_recovery() {
        let p = default_card().params;
        let fit = fit_iv(&synthetic_iv(&p)).unwrap();
        assert_relative_eq!(fit.saturation_current, p.saturation_current, max_relative = 1e-3);
        assert_relative_eq!(fit.ideality, p.ideality, max_relative = 1e-4);
        assert_relative_eq!(fit.series_resistance, p.series_resistance, max_relative = 1e-3);
        assert!(fit.shunt_resistance.is_none());
    }

    #[test]
    fn iv_detects_real_shunt() {
        let mut p = default_card().params;
        let v_low = terminal_voltage(1e-3, &p).unwrap() / p.series_chips as f64;
        p.shunt_resistance = Some(v_low / 0.4e-3);
        let fit = fit_iv(&synthetic_iv(&p)).unwrap();
        let r = fit.shunt_resistance.expect("shunt should be kept");
        assert_relative_eq!(r, p.shunt_resistance.unwrap(), max_relative = 0.05);
    }

    #[test]
    fn iv_zero_series_resistance() {
        let mut p = default_card().params;
        p.series_resistance = 0.0;
        let fit = fit_iv(&synthetic_iv(&p)).unwrap();
        assert!(fit.series_resistance < 1e-3, "{}", fit.series_resistance);
    }

    #[test]
    fn iv_rejects_narrow_span() {
        let rows = (0..6).map(|k| (2.9 + 0.01 * k as f64, 0.1 + 0.01 * k as f64)).collect();
        let c = MeasuredCurve::new(CurveKind::Iv, 1, rows).unwrap();
        assert!(fit_iv(&c).is_err());
    }

    fn synthetic_bw(p: &LedParams) -> MeasuredCurve {
        let rows = (0..20)
            .map(|k| {
                let i = 1e-3 * 10f64.powf(3.0 * k as f64 / 19.0);
                (i, equivalent_bandwidth(i, p).unwrap().f_led)
            })
            .collect();
        MeasuredCurve::new(CurveKind::Bw, 1, rows).unwrap()
    }

    #[test]
    fn bandwidth_noiseless_recovery() {
        let p = default_card().params;
        let truth = BandwidthAggregates::from_params(&p);
        let fit = fit_bandwidth(&synthetic_bw(&p), p.saturation_current).unwrap();
        assert_relative_eq!(fit.theta_a, truth.theta_a, max_relative = 0.01);
        assert_relative_eq!(fit.theta_b, truth.theta_b, max_relative = 0.01);
        assert_relative_eq!(fit.theta_rc, truth.theta_rc, max_relative = 0.01);
        assert_relative_eq!(fit.theta_v, truth.theta_v, max_relative = 0.01);
    }

    #[test]
    fn bandwidth_rejects_flat_and_short_data() {
        let flat = MeasuredCurve::new(CurveKind::Bw, 1, (1..=6).map(|k| (0.1 * k as f64, 7e6)).collect()).unwrap();
        assert!(fit_bandwidth(&flat, 1e-13).is_err());
        let short = MeasuredCurve::new(CurveKind::Bw, 1, vec![(0.1, 5e6), (0.2, 6e6)]).unwrap();
        assert!(fit_bandwidth(&short, 1e-13).is_err());
    }

    #[test]
    fn bandwidth_decreasing_data_still_fits() {
        let rows = (1..=8).map(|k| (0.1 * k as f64, 9e6 - 0.3e6 * k as f64)).collect();
        let c = MeasuredCurve::new(CurveKind::Bw, 1, rows).unwrap();
        let fit = fit_bandwidth(&c, default_card().params.saturation_current).unwrap();
        assert!(fit.rms_relative_residual.is_finite());
    }

    fn synthetic_li(p: &LedParams) -> MeasuredCurve {
        let rows = (0..40).map(|k| {
            let i = 0.05 * k as f64 / 39.0 * 30.0;
            (i, static_optical_power(i, p))
        });
        MeasuredCurve::new(CurveKind::Li, 1, rows.collect()).unwrap()
    }

    #[test]
    fn li_recovers_efficiency_and_droop() {
        let p = default_card().params;
        let fit = fit_li(&synthetic_li(&p), &p).unwrap();
        assert_relative_eq!(fit.optical_efficiency, p.optical_efficiency, max_relative = 1e-3);
        assert_relative_eq!(fit.auger_coeff, p.auger_coeff, max_relative = 1e-3);
        assert!(!fit.turn_on_defaulted);
        assert!((fit.turn_on_current - p.turn_on_current).abs() < 0.04);
    }

    #[test]
    fn li_without_droop() {
        let mut p = default_card().params;
        p.auger_coeff = 0.0;
        let fit = fit_li(&synthetic_li(&p), &p).unwrap();
        assert!(fit.auger_coeff < 1e-32, "{}", fit.auger_coeff);
    }

    #[test]
    fn li_without_knee_defaults_turn_on() {
        let p = default_card().params;
        let rows = (1..=10).map(|k| (0.1 * k as f64, static_optical_power(0.1 * k as f64, &p))).collect();
        let c = MeasuredCurve::new(CurveKind::Li, 1, rows).unwrap();
        let fit = fit_li(&c, &p).unwrap();
        assert!(fit.turn_on_defaulted);
        assert_eq!(fit.turn_on_current, FALLBACK_TURN_ON);
        let mut card = default_card();
        card.apply_li(&fit);
        assert_eq!(card.warnings.len(), 1);
    }

    #[test]
    fn onset_needs_droop() {
        let mut p = default_card().params;
        p.auger_coeff = 0.0;
        assert!(saturation_onset_current(&p).is_err());
    }
}
