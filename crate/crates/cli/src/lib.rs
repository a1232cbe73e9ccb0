//! Command-line pipeline for `pabeam`: INI configuration, the simulate,
//! beamform and measure stages, and export of channel data, images, profiles
//! and metric reports.
//!
//! ```no_run
//! use pabeam_cli::{parse_config, run_pipeline};
//!
//! let config = parse_config("[beamform]\nmethod = DAS, EIBMV_DMAS\n[output]\ndirectory = out\n")?;
//! let manifest = run_pipeline(&config)?;
//! std::process::exit(manifest.exit_code());
//! # Ok::<(), pabeam_cli::CliError>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod export;
pub mod pipeline;
pub mod report;

pub use config::{parse_config, BandpassMode, GridPreset, RunConfig};
pub use error::{exit, CliError, ConfigError, FieldError};
pub use export::{
    export_image, format_sig6, parse_csv, pgm_level, render_csv, render_pgm, ImageFormat,
};
pub use pipeline::{
    read_report, run_beamform, run_metrics, run_pipeline, run_simulate, sha256_hex, Artifact,
    Manifest, MethodStatus, CHANNELS, MANIFEST, REPORT,
};
pub use report::{measure, write_report, DepthMetrics, MethodOutcome, Report};
