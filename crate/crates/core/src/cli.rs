//! Command layer behind the `vlcsim` binary.
//!
//! Every command has a library entry point (`cmd_*`) returning typed rows, a
//! CSV (or JSON) rendering, and a [`RunManifest`] recording the effective
//! configuration and its SHA-256 digest. [`run`] glues these to the argument
//! parser and the file system.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{default_card, fit_bandwidth, fit_iv, fit_li, CurveKind, DeviceCard, MeasuredCurve};
use crate::error::{Error, Result};
use crate::led_device::{junction_voltage, solve_iv, terminal_voltage, LedParams};
use crate::link_model::{
    bandwidth_vs_bias_sweep, extract_3db, link_response, BandwidthRow, ChannelSpec, Equalizer, FrequencyResponse,
    LinkConfig, SweepScope, DEFAULT_LENS_GAIN,
};
use crate::numeric::log_grid;
use crate::waveform_sim::{optimize_bias, BerRow, BiasOptimum, InputStage, ThresholdMode};
use crate::WaveformConfig;

/// Environment variable naming the device card used when `--card` is absent.
pub const CARD_ENV: &str = "VLCSIM_CARD";

/// Bias grid of the optimize command when none is given, A.
pub const DEFAULT_BIAS_GRID: [f64; 6] = [0.10, 0.20, 0.30, 0.40, 0.51, 0.68];
/// Data rates of the optimize command when none are given, bit/s.
pub const DEFAULT_RATES: [f64; 4] = [20e6, 32e6, 40e6, 60e6];
/// Bits per grid point of the optimize command unless configured otherwise.
pub const OPTIMIZE_BITS: usize = 1_000_000;

// ---------------------------------------------------------------- settings

/// Link and waveform settings after the config file has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub link: LinkConfig,
    pub waveform: WaveformConfig,
    /// Card path named in the config file.
    pub card: Option<PathBuf>,
    /// Keys the config file set explicitly.
    #[serde(skip)]
    pub explicit: Vec<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            waveform: WaveformConfig::default(),
            card: None,
            explicit: Vec::new(),
        }
    }
}

/// Keys accepted in a config file, with units.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("card", "path to a device card JSON"),
    ("distance", "link distance, m"),
    ("channel_gain", "fixed DC channel gain (replaces the Lambertian model)"),
    ("semi_angle_deg", "LED half-power semi-angle, degrees"),
    ("rx_area_m2", "photodiode area, m^2"),
    ("lens_gain", "concentrator gain"),
    ("pd_responsivity", "photodiode responsivity, A/W"),
    ("pd_bandwidth", "receiver -3 dB bandwidth, Hz"),
    ("tia_gain", "transimpedance, V/A"),
    ("noise_rms", "output-referred RMS noise, V"),
    ("equalizer", "true/false: include the post-equalizer in the link"),
    ("eq_resistance", "equalizer R, ohm"),
    ("eq_capacitance", "equalizer C, F"),
    ("eq_pole_ratio", "equalizer pole/zero ratio"),
    ("data_rate", "bit rate, bit/s"),
    ("prbs_order", "PRBS order (7, 9, 10, 11, 15, 23, 31)"),
    ("prbs_seed", "initial LFSR state"),
    ("vpp", "peak-to-peak drive, V"),
    ("i_dc", "DC bias current, A"),
    ("samples_per_bit", "simulation samples per bit"),
    ("n_bits", "counted bits per run"),
    ("rng_seed", "noise seed"),
    ("drive_transconductance", "drive voltage to LED current, A/V"),
    ("equalizer_enabled", "true/false: apply the equalizer in waveform runs"),
    ("threshold_mode", "midpoint | optimal"),
    ("input_stage", "matched_bandwidth | literal"),
    ("ci_stop_ratio", "early-stop CI width / BER ratio, or 'none'"),
];

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("'{v}' is not a number"))
}

fn parse_u64(v: &str) -> std::result::Result<u64, String> {
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => v.parse::<u64>().ok(),
    };
    parsed.ok_or_else(|| format!("'{v}' is not a non-negative integer"))
}

/// Integer that may be written in exponent form (`2e5`).
fn parse_count(v: &str) -> std::result::Result<usize, String> {
    if let Ok(n) = v.parse::<usize>() {
        return Ok(n);
    }
    let x = parse_f64(v)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(format!("'{v}' is not a whole number"))
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

impl Settings {
    fn lambertian(&mut self) -> (&mut f64, &mut f64, &mut f64) {
        if let ChannelSpec::Scalar { .. } = self.link.channel {
            self.link.channel = ChannelSpec::Lambertian {
                semi_angle_deg: 60.0,
                rx_area_m2: 0.8e-6,
                lens_gain: DEFAULT_LENS_GAIN,
            };
        }
        match &mut self.link.channel {
            ChannelSpec::Lambertian {
                semi_angle_deg,
                rx_area_m2,
                lens_gain,
            } => (semi_angle_deg, rx_area_m2, lens_gain),
            ChannelSpec::Scalar { .. } => unreachable!(),
        }
    }

    fn equalizer(&mut self) -> &mut Equalizer {
        self.link.equalizer.get_or_insert_with(Equalizer::default)
    }

    /// Sets one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let w = &mut self.waveform;
        match key {
            "card" => self.card = Some(PathBuf::from(value)),
            "distance" => self.link.distance = parse_f64(value)?,
            "channel_gain" => self.link.channel = ChannelSpec::Scalar { gain: parse_f64(value)? },
            "semi_angle_deg" => *self.lambertian().0 = parse_f64(value)?,
            "rx_area_m2" => *self.lambertian().1 = parse_f64(value)?,
            "lens_gain" => *self.lambertian().2 = parse_f64(value)?,
            "pd_responsivity" => self.link.pd_responsivity = parse_f64(value)?,
            "pd_bandwidth" => self.link.pd_bandwidth = parse_f64(value)?,
            "tia_gain" => self.link.tia_gain = parse_f64(value)?,
            "noise_rms" => self.link.noise_rms = parse_f64(value)?,
            "equalizer" => {
                if parse_bool(value)? {
                    self.equalizer();
                } else {
                    self.link.equalizer = None;
                }
            }
            "eq_resistance" => self.equalizer().resistance = parse_f64(value)?,
            "eq_capacitance" => self.equalizer().capacitance = parse_f64(value)?,
            "eq_pole_ratio" => self.equalizer().pole_ratio = parse_f64(value)?,
            "data_rate" => w.data_rate = parse_f64(value)?,
            "prbs_order" => w.prbs_order = parse_u64(value)? as u32,
            "prbs_seed" => {
                w.prbs_seed = u32::try_from(parse_u64(value)?).map_err(|_| "prbs_seed exceeds 32 bits".to_string())?
            }
            "vpp" => w.vpp = parse_f64(value)?,
            "i_dc" => w.i_dc = parse_f64(value)?,
            "samples_per_bit" => w.samples_per_bit = parse_count(value)?,
            "n_bits" => w.n_bits = parse_count(value)?,
            "rng_seed" => w.rng_seed = parse_u64(value)?,
            "drive_transconductance" => w.drive_transconductance = parse_f64(value)?,
            "equalizer_enabled" => w.equalizer_enabled = parse_bool(value)?,
            "threshold_mode" => {
                w.threshold_mode = match value {
                    "midpoint" => ThresholdMode::Midpoint,
                    "optimal" => ThresholdMode::Optimal,
                    _ => return Err(format!("threshold_mode '{value}' is not midpoint or optimal")),
                }
            }
            "input_stage" => {
                w.input_stage = match value {
                    "matched_bandwidth" => InputStage::MatchedBandwidth,
                    "literal" => InputStage::Literal,
                    _ => return Err(format!("input_stage '{value}' is not matched_bandwidth or literal")),
                }
            }
            "ci_stop_ratio" => {
                w.ci_stop_ratio = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        self.explicit.push(key.to_string());
        Ok(())
    }

    /// Applies a flat `key = value` file. `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let mut s = Self::default();
        s.apply_config(text)?;
        Ok(s)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.iter().any(|k| k == key)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.waveform.validate()
    }
}

// ---------------------------------------------------------------- manifest

/// Record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of `effective_config`.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub effective_config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, effective_config: serde_json::Value) -> Self {
        let canonical = serde_json::to_string(&effective_config).expect("JSON values serialize");
        Self {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            effective_config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Manifest path for an output file: `results.csv` → `results.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

// ---------------------------------------------------------------- commands

/// Re-tags an error with the sweep point that produced it.
fn at_point(e: Error, point: String) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{point}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{point}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{point}: {m}")),
        other => other,
    }
}

/// Sweep axis of the I-V command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IvSweep {
    /// Linearly spaced terminal voltages, V.
    Voltage { start: f64, stop: f64, points: usize },
    /// Logarithmically spaced currents, A.
    Current { start: f64, stop: f64, points: usize },
}

impl IvSweep {
    fn values(&self) -> Result<Vec<f64>> {
        let (start, stop, points) = match *self {
            IvSweep::Voltage { start, stop, points } | IvSweep::Current { start, stop, points } => {
                (start, stop, points)
            }
        };
        if points < 2 || !(stop > start) || !start.is_finite() || !stop.is_finite() {
            return Err(Error::validation("range needs start < stop and at least 2 points"));
        }
        let step = |k: usize| k as f64 / (points - 1) as f64;
        Ok(match self {
            IvSweep::Voltage { .. } => (0..points).map(|k| start + (stop - start) * step(k)).collect(),
            IvSweep::Current { .. } => {
                if !(start > 0.0) {
                    return Err(Error::validation("current range must be positive"));
                }
                (0..points).map(|k| start * (stop / start).powf(step(k))).collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvRow {
    pub v_v: f64,
    pub i_a: f64,
    pub vd_v: f64,
}

/// Model I-V curve. `vd` is the ideal junction voltage per chip.
pub fn cmd_iv(p: &LedParams, sweep: &IvSweep) -> Result<Vec<IvRow>> {
    p.validate()?;
    sweep
        .values()?
        .into_iter()
        .map(|x| match sweep {
            IvSweep::Voltage { .. } => {
                let i = solve_iv(x, p).map_err(|e| at_point(e, format!("v = {x} V")))?;
                let vd = junction_voltage(i, p).map_err(|e| at_point(e, format!("v = {x} V")))?;
                Ok(IvRow { v_v: x, i_a: i, vd_v: vd })
            }
            IvSweep::Current { .. } => {
                let v = terminal_voltage(x, p).map_err(|e| at_point(e, format!("i = {x} A")))?;
                Ok(IvRow {
                    v_v: v,
                    i_a: x,
                    vd_v: junction_voltage(x, p)?,
                })
            }
        })
        .collect()
}

pub fn iv_to_csv(rows: &[IvRow]) -> String {
    let mut out = String::from("v_V,i_A,vd_V\n");
    for r in rows {
        let _ = writeln!(out, "{:.9},{:.9e},{:.9}", r.v_v, r.i_a, r.vd_v);
    }
    out
}

/// Bandwidth against bias. Rows come back sorted by current.
pub fn cmd_bandwidth(p: &LedParams, currents: &[f64], link: &LinkConfig, scope: SweepScope) -> Result<Vec<BandwidthRow>> {
    if currents.is_empty() {
        return Err(Error::validation("no currents given"));
    }
    link.validate()?;
    bandwidth_vs_bias_sweep(currents, p, link, scope, &crate::link_model::default_frequency_grid())
}

pub fn bandwidth_to_csv(rows: &[BandwidthRow]) -> String {
    let mut out = String::from("current_A,tau_s_s,tau_c_s,f3db_Hz\n");
    for r in rows {
        let _ = writeln!(out, "{:.6},{:.6e},{:.6e},{:.6e}", r.current_a, r.tau_s_s, r.tau_c_s, r.f3db_hz);
    }
    out
}

/// Raw (and optionally equalized) end-to-end response at one bias.
#[derive(Debug, Clone)]
pub struct FreqRespReport {
    pub bias_a: f64,
    pub raw: FrequencyResponse,
    pub f3db_raw_hz: f64,
    pub equalized: Option<(FrequencyResponse, f64)>,
}

impl FreqRespReport {
    /// Columns `freq_Hz,mag_dB,phase_deg` plus `eq_mag_dB,eq_phase_deg` when
    /// equalized; each trace relative to its own lowest-frequency gain. The
    /// 3-dB points follow as `#` comment lines.
    pub fn to_csv(&self) -> String {
        let raw_db = self.raw.magnitude_db();
        let raw_ph = self.raw.phase_deg();
        let eq = self
            .equalized
            .as_ref()
            .map(|(r, _)| (normalized_db(r), r.phase_deg()));
        let mut out = String::from("freq_Hz,mag_dB,phase_deg");
        if eq.is_some() {
            out.push_str(",eq_mag_dB,eq_phase_deg");
        }
        out.push('\n');
        let raw_db0 = raw_db[0];
        for (k, f) in self.raw.freqs().iter().enumerate() {
            let _ = write!(out, "{f:.6e},{:.6},{:.4}", raw_db[k] - raw_db0, raw_ph[k]);
            if let Some((db, ph)) = &eq {
                let _ = write!(out, ",{:.6},{:.4}", db[k], ph[k]);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "# bias_A = {}", self.bias_a);
        let _ = writeln!(out, "# f3db_raw_Hz = {:.6e}", self.f3db_raw_hz);
        if let Some((_, f)) = &self.equalized {
            let _ = writeln!(out, "# f3db_equalized_Hz = {f:.6e}");
        }
        out
    }
}

fn normalized_db(r: &FrequencyResponse) -> Vec<f64> {
    let db = r.magnitude_db();
    let d0 = db[0];
    db.into_iter().map(|d| d - d0).collect()
}

pub fn cmd_freqresp(p: &LedParams, bias: f64, link: &LinkConfig, equalized: bool, freqs: &[f64]) -> Result<FreqRespReport> {
    link.validate()?;
    if equalized && link.equalizer.is_none() {
        return Err(Error::validation("--equalized needs an equalizer in the link configuration"));
    }
    let op = crate::led_device::equivalent_bandwidth(bias, p)?;
    let raw = link_response(&op, link, SweepScope::Link, freqs)?;
    let f3db_raw_hz = extract_3db(&raw)?;
    let equalized = if equalized {
        let r = link_response(&op, link, SweepScope::EqualizedLink, freqs)?;
        let f = extract_3db(&r)?;
        Some((r, f))
    } else {
        None
    };
    Ok(FreqRespReport {
        bias_a: bias,
        raw,
        f3db_raw_hz,
        equalized,
    })
}

/// BER at every (rate, bias) pair. Biases must be strictly increasing; grid
/// point `k` uses seed `wcfg.rng_seed ^ k`.
pub fn cmd_ber(p: &LedParams, link: &LinkConfig, wcfg: &WaveformConfig, rates: &[f64], biases: &[f64]) -> Result<Vec<BerRow>> {
    if rates.is_empty() {
        return Err(Error::validation("no data rates given"));
    }
    link.validate()?;
    let mut rows = Vec::new();
    for &rate in rates {
        rows.extend(optimize_bias(rate, biases, wcfg, p, link)?.rows);
    }
    Ok(rows)
}

/// Optimum bias per data rate.
pub fn cmd_optimize(
    p: &LedParams,
    link: &LinkConfig,
    wcfg: &WaveformConfig,
    rates: &[f64],
    grid: &[f64],
) -> Result<Vec<BiasOptimum>> {
    if rates.is_empty() {
        return Err(Error::validation("no data rates given"));
    }
    link.validate()?;
    rates.iter().map(|&r| optimize_bias(r, grid, wcfg, p, link)).collect()
}

pub fn optimum_to_csv(rows: &[BiasOptimum]) -> String {
    let mut out = String::from("data_rate_bps,i_opt_A,ber,ci_low,ci_high,i_min_ber_A\n");
    for o in rows {
        let _ = writeln!(
            out,
            "{:.6e},{:.6},{:.6e},{:.6e},{:.6e},{:.6}",
            o.data_rate_bps, o.i_opt, o.best.ber, o.best.ci95_low, o.best.ci95_high, o.i_min_ber
        );
    }
    out
}

/// Fits one measured curve and folds the result into `base`.
pub fn cmd_fit(kind: CurveKind, csv: &str, base: &DeviceCard, source: &str) -> Result<DeviceCard> {
    let curve = MeasuredCurve::parse_csv(csv)?;
    if curve.kind != kind {
        return Err(Error::validation(format!("file holds a {} curve, --kind asks for {kind}", curve.kind)));
    }
    let mut card = base.clone();
    match kind {
        CurveKind::Iv => card.apply_iv(&fit_iv(&curve)?),
        CurveKind::Bw => card.apply_bandwidth(&fit_bandwidth(&curve, base.params.saturation_current)?)?,
        CurveKind::Li => card.apply_li(&fit_li(&curve, &base.params)?),
    }
    card.provenance = format!("{}; {kind} fit from {source}", card.provenance);
    card.validate()?;
    Ok(card)
}

// ---------------------------------------------------------------- svg

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Minimal static line plot. Non-positive values are dropped on log axes.
fn svg_plot(title: &str, x_label: &str, y_label: &str, log_x: bool, log_y: bool, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| (!log_x || x > 0.0) && (!log_y || y > 0.0) && x.is_finite() && y.is_finite();
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let label = |v: f64, log: bool| if log { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.4}") };

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W / 2.0,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{y_label}</text>",
        H / 2.0,
        H / 2.0
    );
    for (v, anchor, x, y) in [
        (label(x0, log_x), "start", M, H - M + 15.0),
        (label(x1, log_x), "end", W - M, H - M + 15.0),
        (label(y0, log_y), "end", M - 4.0, H - M),
        (label(y1, log_y), "end", M - 4.0, M + 8.0),
    ] {
        let _ = writeln!(out, "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{v}</text>");
    }
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            W - M - 110.0,
            M + 15.0 + 14.0 * k as f64,
            s.name
        );
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------- arguments

/// Physical-layer simulator for white-LED visible light communication links.
#[derive(Debug, Parser, Serialize)]
#[command(name = "vlcsim", version, about)]
pub struct Cli {
    /// Device card JSON [default: $VLCSIM_CARD, else the built-in card]
    #[arg(long, global = true, value_name = "FILE")]
    pub card: Option<PathBuf>,

    /// Flat `key = value` config file mirroring the link and waveform settings (SI units)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output file [default: stdout]. The run manifest goes to <FILE stem>.manifest.json,
    /// or to stderr as one JSON line when writing to stdout
    #[arg(short, long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Also write a static line plot of CSV output to <FILE stem>.svg (needs --out)
    #[arg(long, global = true)]
    pub svg: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Model I-V curve of the LED string
    #[command(after_help = "Output columns:\n  v_V    terminal voltage of the string, V\n  \
                            i_A    LED current, A\n  vd_V   ideal junction voltage per chip, V")]
    Iv(IvArgs),

    /// 3-dB bandwidth against DC bias current
    #[command(after_help = "Output columns:\n  current_A  DC bias current, A\n  \
                            tau_s_s    differential carrier lifetime, s\n  \
                            tau_c_s    space-charge (RC) time constant, s\n  \
                            f3db_Hz    3-dB bandwidth of the selected scope, Hz")]
    Bandwidth(BandwidthArgs),

    /// End-to-end frequency response at one bias, raw and optionally equalized
    #[command(after_help = "Output columns:\n  freq_Hz      frequency, Hz\n  \
                            mag_dB       raw link magnitude relative to its lowest-frequency value, dB\n  \
                            phase_deg    raw link phase, degrees\n  \
                            eq_mag_dB    equalized magnitude relative to its lowest-frequency value, dB\n  \
                            eq_phase_deg equalized phase, degrees\n\
                            Footer comments give bias_A and the 3-dB frequencies in Hz.")]
    Freqresp(FreqrespArgs),

    /// Monte Carlo bit error rate at one or more (rate, bias) points
    #[command(after_help = "Output columns:\n  data_rate_bps  bit rate, bit/s\n  \
                            current_A      DC bias current, A\n  \
                            ber            error fraction\n  \
                            ci_low         Wilson 95% lower bound\n  \
                            ci_high        Wilson 95% upper bound\n  \
                            bits           counted bits\n  errors         counted errors\n  \
                            seed           noise seed of the row")]
    Ber(BerArgs),

    /// Optimum bias current per data rate
    #[command(after_help = "Output columns:\n  data_rate_bps  bit rate, bit/s\n  \
                            i_opt_A        lowest bias statistically tied with the best BER, A\n  \
                            ber            BER at i_opt_A\n  ci_low, ci_high  Wilson 95% bounds of that BER\n  \
                            i_min_ber_A    bias with the lowest BER estimate, A")]
    Optimize(OptimizeArgs),

    /// Fit a measured curve and write the updated device card (JSON)
    #[command(after_help = "Input CSV:\n  kind,chip_count   (header, e.g. IV,8)\n  x,y               (optional)\n  \
                            IV: terminal voltage V, current A\n  \
                            LI: current A, optical power W (or normalized)\n  \
                            BW: bias current A, 3-dB bandwidth Hz")]
    Fit(FitArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IvArgs {
    /// Linear voltage sweep START,STOP,POINTS in volts
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "i_range", value_name = "V")]
    pub v_range: Option<Vec<f64>>,

    /// Logarithmic current sweep START,STOP,POINTS in amperes [default: 1e-3,1,61]
    #[arg(long, value_delimiter = ',', value_name = "A")]
    pub i_range: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ScopeArg {
    /// LED only
    Led,
    /// LED, channel and receiver
    Link,
    /// LED, channel, receiver and equalizer
    Equalized,
}

impl From<ScopeArg> for SweepScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Led => SweepScope::Led,
            ScopeArg::Link => SweepScope::Link,
            ScopeArg::Equalized => SweepScope::EqualizedLink,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BandwidthArgs {
    /// Bias currents in amperes
    #[arg(long, value_delimiter = ',', value_name = "A",
          default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub currents: Vec<f64>,

    /// Which chain to measure
    #[arg(long, value_enum, default_value = "led")]
    pub scope: ScopeArg,
}

#[derive(Debug, Args, Serialize)]
pub struct FreqrespArgs {
    /// DC bias current in amperes [default: config i_dc]
    #[arg(long, value_name = "A")]
    pub bias: Option<f64>,

    /// Add the equalized trace
    #[arg(long)]
    pub equalized: bool,

    /// Lowest grid frequency, Hz
    #[arg(long, default_value_t = 1e5, value_name = "HZ")]
    pub f_min: f64,

    /// Highest grid frequency, Hz
    #[arg(long, default_value_t = 1e9, value_name = "HZ")]
    pub f_max: f64,

    /// Grid points per decade
    #[arg(long, default_value_t = 50)]
    pub per_decade: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BerArgs {
    /// Bit rates in bit/s [default: config data_rate]
    #[arg(long, value_delimiter = ',', value_name = "BPS")]
    pub rate: Vec<f64>,

    /// Single DC bias current, A [default: config i_dc]
    #[arg(long, conflicts_with = "bias_grid", value_name = "A")]
    pub bias: Option<f64>,

    /// Strictly increasing list of bias currents, A
    #[arg(long, value_delimiter = ',', value_name = "A")]
    pub bias_grid: Vec<f64>,

    /// Counted bits per point (exponent form allowed) [default: config n_bits]
    #[arg(long, value_parser = parse_count)]
    pub bits: Option<usize>,

    /// Noise seed [default: config rng_seed]
    #[arg(long, value_parser = parse_u64)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    /// Bit rates in bit/s
    #[arg(long, value_delimiter = ',', value_name = "BPS", default_value = "20e6,32e6,40e6,60e6")]
    pub rates: Vec<f64>,

    /// Strictly increasing bias grid, A
    #[arg(long, value_delimiter = ',', value_name = "A", default_value = "0.1,0.2,0.3,0.4,0.51,0.68")]
    pub grid: Vec<f64>,

    /// Counted bits per grid point [default: config n_bits if set, else 1e6]
    #[arg(long, value_parser = parse_count)]
    pub bits: Option<usize>,

    /// Noise seed [default: config rng_seed]
    #[arg(long, value_parser = parse_u64)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum KindArg {
    Iv,
    Li,
    Bw,
}

impl From<KindArg> for CurveKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Iv => CurveKind::Iv,
            KindArg::Li => CurveKind::Li,
            KindArg::Bw => CurveKind::Bw,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Curve kind
    #[arg(long, value_enum)]
    pub kind: KindArg,

    /// Measured curve CSV
    pub input: PathBuf,
}

// ---------------------------------------------------------------- execution

/// Result of a command before anything is written.
#[derive(Debug, Clone)]
pub struct Report {
    /// Primary output (CSV or card JSON).
    pub body: String,
    pub manifest: RunManifest,
    pub svg: Option<String>,
}

#[derive(Serialize)]
struct Effective<'a> {
    command: &'a Command,
    card: &'a DeviceCard,
    settings: &'a Settings,
    inputs: BTreeMap<String, String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn load_card(cli: &Cli, settings: &Settings) -> Result<(DeviceCard, Option<PathBuf>)> {
    let path = cli
        .card
        .clone()
        .or_else(|| settings.card.clone())
        .or_else(|| std::env::var_os(CARD_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    match path {
        Some(p) => Ok((DeviceCard::from_json(&read(&p)?)?, Some(p))),
        None => Ok((default_card(), None)),
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Runs a parsed command without touching the file system beyond reading inputs.
pub fn execute(cli: &Cli) -> Result<Report> {
    let mut inputs = BTreeMap::new();
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let text = read(path)?;
        settings.apply_config(&text)?;
        inputs.insert(path.display().to_string(), sha256_hex(&text));
    }
    let (card, card_path) = load_card(cli, &settings)?;
    if let Some(p) = &card_path {
        inputs.insert(p.display().to_string(), sha256_hex(&card.to_json()?));
    }
    let p = &card.params;

    let (name, body, svg) = match &cli.command {
        Command::Iv(a) => {
            let sweep = match (&a.v_range, &a.i_range) {
                (Some(v), _) => {
                    let (start, stop, points) = range_triple(v)?;
                    IvSweep::Voltage { start, stop, points }
                }
                (None, Some(i)) => {
                    let (start, stop, points) = range_triple(i)?;
                    IvSweep::Current { start, stop, points }
                }
                (None, None) => IvSweep::Current { start: 1e-3, stop: 1.0, points: 61 },
            };
            let rows = cmd_iv(p, &sweep)?;
            let svg = svg_plot(
                "I-V",
                "terminal voltage (V)",
                "current (A)",
                false,
                false,
                &[Series { name: "model".into(), points: rows.iter().map(|r| (r.v_v, r.i_a)).collect() }],
            );
            ("iv", iv_to_csv(&rows), Some(svg))
        }
        Command::Bandwidth(a) => {
            settings.link.validate()?;
            let rows = cmd_bandwidth(p, &a.currents, &settings.link, a.scope.into())?;
            let svg = svg_plot(
                "3-dB bandwidth vs bias",
                "bias current (A)",
                "f3dB (Hz)",
                false,
                false,
                &[Series { name: format!("{:?}", a.scope).to_lowercase(), points: rows.iter().map(|r| (r.current_a, r.f3db_hz)).collect() }],
            );
            ("bandwidth", bandwidth_to_csv(&rows), Some(svg))
        }
        Command::Freqresp(a) => {
            if a.per_decade == 0 || !(a.f_min > 0.0 && a.f_max > a.f_min) {
                return Err(Error::validation("frequency grid needs 0 < f_min < f_max and per_decade > 0"));
            }
            let bias = a.bias.unwrap_or(settings.waveform.i_dc);
            let freqs = log_grid(a.f_min, a.f_max, a.per_decade);
            let report = cmd_freqresp(p, bias, &settings.link, a.equalized, &freqs)?;
            let mut series = vec![Series {
                name: "raw".into(),
                points: freqs.iter().copied().zip(normalized_db(&report.raw)).collect(),
            }];
            if let Some((r, _)) = &report.equalized {
                series.push(Series { name: "equalized".into(), points: freqs.iter().copied().zip(normalized_db(r)).collect() });
            }
            let svg = svg_plot("EOE frequency response", "frequency (Hz)", "magnitude (dB)", true, false, &series);
            ("freqresp", report.to_csv(), Some(svg))
        }
        Command::Ber(a) => {
            let w = &mut settings.waveform;
            if let Some(b) = a.bits {
                w.n_bits = b;
            }
            if let Some(s) = a.seed {
                w.rng_seed = s;
            }
            let rates = if a.rate.is_empty() { vec![w.data_rate] } else { a.rate.clone() };
            let biases = match (a.bias, a.bias_grid.is_empty()) {
                (Some(b), _) => vec![b],
                (None, false) => a.bias_grid.clone(),
                (None, true) => vec![w.i_dc],
            };
            settings.validate()?;
            let rows = cmd_ber(p, &settings.link, &settings.waveform, &rates, &biases)?;
            let series: Vec<Series> = rates
                .iter()
                .map(|&r| Series {
                    name: format!("{} Mbit/s", r / 1e6),
                    points: rows.iter().filter(|x| x.data_rate_bps == r).map(|x| (x.current_a, x.result.ber)).collect(),
                })
                .collect();
            let svg = svg_plot("BER vs bias", "bias current (A)", "BER", false, true, &series);
            ("ber", crate::waveform_sim::ber_table_to_csv(&rows), Some(svg))
        }
        Command::Optimize(a) => {
            let w = &mut settings.waveform;
            w.n_bits = match a.bits {
                Some(b) => b,
                None if settings.explicit.iter().any(|k| k == "n_bits") => w.n_bits,
                None => OPTIMIZE_BITS,
            };
            if let Some(s) = a.seed {
                w.rng_seed = s;
            }
            settings.validate()?;
            let rows = cmd_optimize(p, &settings.link, &settings.waveform, &a.rates, &a.grid)?;
            let svg = svg_plot(
                "optimum bias vs data rate",
                "data rate (bit/s)",
                "I_opt (A)",
                false,
                false,
                &[Series { name: "I_opt".into(), points: rows.iter().map(|o| (o.data_rate_bps, o.i_opt)).collect() }],
            );
            ("optimize", optimum_to_csv(&rows), Some(svg))
        }
        Command::Fit(a) => {
            let text = read(&a.input)?;
            inputs.insert(a.input.display().to_string(), sha256_hex(&text));
            let source = a.input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let fitted = cmd_fit(a.kind.into(), &text, &card, &source)?;
            ("fit", fitted.to_json()?, None)
        }
    };

    let effective = Effective {
        command: &cli.command,
        card: &card,
        settings: &settings,
        inputs,
    };
    let manifest = RunManifest::new(name, settings.waveform.rng_seed, serde_json::to_value(&effective)?);
    Ok(Report { body, manifest, svg })
}

fn range_triple(v: &[f64]) -> Result<(f64, f64, usize)> {
    match *v {
        [start, stop, n] if n >= 2.0 && n.fract() == 0.0 => Ok((start, stop, n as usize)),
        [_, _, n] => Err(Error::validation(format!("point count must be a whole number >= 2, got {n}"))),
        _ => Err(Error::validation(format!("range needs START,STOP,POINTS, got {} values", v.len()))),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Executes and writes outputs: the body to `--out` (or stdout), the manifest
/// beside it (or to stderr) and the SVG when requested.
pub fn run(cli: &Cli) -> Result<()> {
    let mut report = execute(cli)?;
    match &cli.out {
        Some(out) => {
            let protected = [cli.card.as_deref(), cli.config.as_deref()];
            let input = match &cli.command {
                Command::Fit(a) => Some(a.input.as_path()),
                _ => None,
            };
            for path in protected.into_iter().chain([input]).flatten() {
                if same_file(out, path) {
                    return Err(Error::validation(format!("refusing to overwrite input {}", path.display())));
                }
            }
            std::fs::write(out, &report.body)?;
            report.manifest.outputs.push(out.display().to_string());
            if cli.svg {
                if let Some(svg) = &report.svg {
                    let path = out.with_extension("svg");
                    std::fs::write(&path, svg)?;
                    report.manifest.outputs.push(path.display().to_string());
                }
            }
            let mpath = manifest_path(out);
            report.manifest.outputs.push(mpath.display().to_string());
            std::fs::write(&mpath, report.manifest.to_json()?)?;
        }
        None => {
            if cli.svg {
                return Err(Error::validation("--svg needs --out"));
            }
            print!("{}", report.body);
            eprintln!("manifest: {}", serde_json::to_string(&report.manifest)?);
        }
    }
    Ok(())
}

/// Parses `args`, runs, and maps the outcome to a process exit code:
/// 0 success, 2 validation or input error, 3 numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
