//! Drives the command layer from code: parses arguments as the binary would,
//! runs them without writing files, and prints the manifest digest.
//!
//! cargo run --example cli_library

use clap::Parser;
use vlcsim::cli::{execute, Cli, Settings};

fn main() -> vlcsim::Result<()> {
    let cli = Cli::parse_from(["vlcsim", "freqresp", "--bias", "0.25", "--equalized"]);
    let report = execute(&cli)?;
    for line in report.body.lines().filter(|l| l.starts_with('#')) {
        println!("{line}");
    }
    println!("config hash {}", report.manifest.config_hash);

    let settings = Settings::from_config("lens_gain = 650\nnoise_rms = 2e-3\nthreshold_mode = optimal\n")?;
    println!("V/W at the receiver with the edited config: {:.3}", settings.link.optical_to_voltage_gain());
    Ok(())
}
