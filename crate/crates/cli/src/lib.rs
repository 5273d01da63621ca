//! Command-line harness around `synccert`: config ingestion, command
//! dispatch and the end-to-end reproduction of the five-node example.

pub mod commands;
pub mod config;

/// The bundled five-node configuration.
pub const BUNDLED_K5: &str = include_str!("../fixtures/paper_k5.json");
