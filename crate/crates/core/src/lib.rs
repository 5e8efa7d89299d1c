//! Spiking network with direct lateral inhibition, trained with an
//! enhanced timestep-based STDP rule, plus a fixed-point quantization
//! exploration and memory/energy-aware model selection.
//!
//! The pipeline is: [`encoding`] turns images into spike rasters,
//! [`network`] simulates the excitatory layer, [`learning`] and
//! [`training`] adapt its weights, [`quant`] explores fixed-point formats,
//! [`metrics`] prices each candidate in memory and energy, and
//! [`selection`] picks the deployable one.

pub mod cli;
pub mod config;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod fixedpoint;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod network;
pub mod quant;
pub mod selection;
pub mod training;

pub use error::{Error, Result};
pub use fixedpoint::{FixedPointFormat, ParamFormat, RoundingMode};
pub use network::{LayerParams, NetworkModel};
