//! Physical-layer simulator for white-LED visible light communication links.
//!
//! The LED is described by an ABC recombination model with a Shockley
//! junction and a bias-dependent space-charge capacitance, which together set
//! a bias-dependent modulation bandwidth. On top of that sit a frequency-domain
//! link model (LED, Lambertian channel, photoreceiver, first-order
//! post-equalizer), a time-domain Monte Carlo BER engine, curve-fitting
//! routines that produce device cards, and a small command layer.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod led_device;
pub mod link_model;
pub mod numeric;
pub mod waveform_sim;

pub use calibration::DeviceCard;
pub use error::{Error, Result};
pub use led_device::{LedParams, OperatingPoint};
pub use link_model::{Equalizer, LinkConfig};
pub use waveform_sim::{BerResult, WaveformConfig};
