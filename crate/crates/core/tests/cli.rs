//! End-to-end runs of the `vlcsim` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use vlcsim::calibration::{default_card, CurveKind, MeasuredCurve};
use vlcsim::led_device::terminal_voltage;

fn vlcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlcsim"))
        .args(args)
        .env_remove("VLCSIM_CARD")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows of a CSV body, comments and header dropped.
fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.trim().parse().unwrap()).collect())
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(vlcsim(&["iv"]).status.code(), Some(0));
    assert_eq!(vlcsim(&["bandwidth", "--currents", "-0.1"]).status.code(), Some(2));
    assert_eq!(vlcsim(&["nonsense"]).status.code(), Some(2));
    let o = vlcsim(&["iv", "--v-range", "0,500,3"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("250"));
}

#[test]
fn help_lists_units_for_every_command() {
    for cmd in ["iv", "bandwidth", "freqresp", "ber", "optimize", "fit"] {
        let o = vlcsim(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        assert!(text.contains(", A") || text.contains(" Hz") || text.contains(", V"), "{cmd}: {text}");
    }
}

#[test]
fn manifest_written_next_to_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bw.csv");
    let o = vlcsim(&["bandwidth", "--svg", "-o", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bw.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bandwidth");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.iter().any(|p| p.ends_with("bw.csv")));
    assert!(outputs.iter().any(|p| p.ends_with("bw.svg")));
    assert!(dir.path().join("bw.svg").exists());
}

#[test]
fn manifest_on_stderr_without_out() {
    let o = vlcsim(&["iv"]);
    let line = stderr(&o).lines().find(|l| l.starts_with("manifest: ")).unwrap().to_owned();
    let m: serde_json::Value = serde_json::from_str(&line["manifest: ".len()..]).unwrap();
    assert_eq!(m["command"], "iv");
    assert_eq!(vlcsim(&["iv", "--svg"]).status.code(), Some(2));
}

#[test]
fn iv_default_passes_operating_point() {
    let csv = stdout(&vlcsim(&["iv", "--i-range", "0.3,0.6,200"]));
    let r = rows(&csv);
    let k = r.iter().position(|row| row[1] >= 0.45).unwrap();
    let (lo, hi) = (&r[k - 1], &r[k]);
    let v = lo[0] + (0.45 - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]);
    assert!((v - 3.3).abs() < 0.1, "{v}");
}

#[test]
fn bandwidth_columns() {
    let r = rows(&stdout(&vlcsim(&["bandwidth"])));
    assert_eq!(r.len(), 15);
    assert!(r.windows(2).all(|w| w[1][1] < w[0][1]), "tau_s must fall with bias");
    assert!(r.windows(2).all(|w| w[1][2] > w[0][2]), "tau_c must rise with bias");
}

#[test]
fn ber_single_rate_single_row_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = ["ber", "--rate", "60e6", "--bias", "0.51", "--bits", "2e4", "--seed", "7", "-o"];
    for out in [&a, &b] {
        let mut v = args.to_vec();
        v.push(path_str(out));
        assert!(vlcsim(&v).status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(rows(&text).len(), 1);
}

#[test]
fn unsorted_bias_grid_rejected() {
    let o = vlcsim(&["optimize", "--rates", "60e6", "--grid", "0.3,0.2", "--bits", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let o = vlcsim(&["ber", "--rate", "60e6", "--bias-grid", "0.2,0.2", "--bits", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_reports_malformed_line() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "kind,chip_count\nIV,1\n2.7,0.01\n2.8,abc\n").unwrap();
    let o = vlcsim(&["fit", "--kind", "iv", path_str(&bad)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    std::fs::write(&bad, "2.7,0.01\n2.8,0.02\n").unwrap();
    let o = vlcsim(&["fit", "--kind", "iv", path_str(&bad)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("header"), "{}", stderr(&o));
}

#[test]
fn fit_round_trip_leaves_input_untouched() {
    let dir = TempDir::new().unwrap();
    let p = default_card().params;
    let rows: Vec<(f64, f64)> = (0..40)
        .map(|k| {
            let i = 1e-3 * 10f64.powf(3.0 * k as f64 / 39.0);
            (terminal_voltage(i, &p).unwrap(), i)
        })
        .collect();
    let input = dir.path().join("iv.csv");
    let text = MeasuredCurve::new(CurveKind::Iv, p.series_chips, rows).unwrap().to_csv();
    std::fs::write(&input, &text).unwrap();
    let card = dir.path().join("card.json");

    let o = vlcsim(&["fit", "--kind", "iv", path_str(&input), "-o", path_str(&card)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&input).unwrap(), text);
    let fitted = vlcsim::DeviceCard::load(&card).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(fitted.params.series_resistance, p.series_resistance) < 0.01);
    assert!(rel(fitted.params.ideality, p.ideality) < 0.01);

    let o = vlcsim(&["fit", "--kind", "li", path_str(&input)]);
    assert_eq!(o.status.code(), Some(2), "kind mismatch must be rejected");
    let o = vlcsim(&["fit", "--kind", "iv", path_str(&input), "-o", path_str(&input)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(&input).unwrap(), text);
}

#[test]
fn card_from_env_and_config() {
    let dir = TempDir::new().unwrap();
    let mut card = default_card();
    card.params.series_resistance *= 2.0;
    let card_path = dir.path().join("hot.json");
    std::fs::write(&card_path, card.to_json().unwrap()).unwrap();

    let base = stdout(&vlcsim(&["iv"]));
    let via_flag = stdout(&vlcsim(&["iv", "--card", path_str(&card_path)]));
    let via_env = Command::new(env!("CARGO_BIN_EXE_vlcsim"))
        .arg("iv")
        .env("VLCSIM_CARD", &card_path)
        .output()
        .unwrap();
    assert_ne!(base, via_flag);
    assert_eq!(stdout(&via_env), via_flag);

    let config = dir.path().join("run.cfg");
    std::fs::write(&config, format!("# hot card\ncard = {}\ni_dc = 0.3\n", card_path.display())).unwrap();
    assert_eq!(stdout(&vlcsim(&["iv", "--config", path_str(&config)])), via_flag);
    let fr = stdout(&vlcsim(&["freqresp", "--config", path_str(&config)]));
    assert!(fr.lines().any(|l| l.starts_with("# bias_A") && l.trim_end().ends_with("0.3")), "{fr}");

    std::fs::write(&config, "i_dc = 0.3\nbogus = 1\n").unwrap();
    let o = vlcsim(&["iv", "--config", path_str(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
