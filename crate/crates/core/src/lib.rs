//! Linear-array photoacoustic beamforming.
//!
//! The crate synthesizes channel data for spherical-absorber phantoms,
//! reconstructs images with delay-and-sum (DAS), delay-multiply-and-sum
//! (DMAS), minimum variance (MV), eigenspace-based MV (EIBMV) and the hybrid
//! EIBMV-DMAS beamformer, and measures the resulting point-spread functions.
//!
//! Scanlines are beamformed at the acquisition sampling rate, optionally
//! band-passed, envelope-detected and only then resampled onto the
//! [`ImagingGrid`].
//!
//! ```no_run
//! use pabeam_core::*;
//!
//! let geometry = ArrayGeometry::new(128, ArrayGeometry::DEFAULT_PITCH)?;
//! let acq = AcquisitionParams::default();
//! let clean = simulate_channels(&Phantom::paper_default(), &geometry, &acq, &Transducer::default())?;
//! let noisy = add_noise(&clean, &NoiseSpec { target_snr_db: 50.0, seed: 1 })?;
//! let grid = ImagingGrid::paper_region(ImagingGrid::COARSE_SPACING)?;
//! let config = BeamformConfig::paper_default(Method::EibmvDmas, 128);
//! let raw = reconstruct(&noisy, &grid, &config)?;
//! let db = log_compress(&raw.envelope_on_grid()?, config.dynamic_range)?;
//! # Ok::<(), pabeam_core::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod classic;
pub mod config;
pub mod delay;
pub mod dsp;
pub mod error;
pub mod geometry;
pub mod hybrid;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod synth;

pub use adaptive::{
    diagonal_load, eibmv_project, estimate_covariance, image_adaptive, mv_weights, subarray_output,
    sym_eig, CovarianceEstimate, EigenPair,
};
pub use classic::{
    das, dmas, dmas_terms, dmas_terms_with, expansion_identity_check, expansion_tolerance,
    image_classic, signed_root_product,
};
pub use config::{
    validate_config, Band, BeamformConfig, DmasSqrtMode, Interpolation, Method, TermNormalization,
    Violation,
};
pub use delay::{
    aligned_snapshot, aligned_window, propagation_delay, sample_at, AlignedSnapshot, AlignedWindow,
};
pub use dsp::{bandpass, envelope, log_compress, tukey_window};
pub use error::{Error, Result};
pub use geometry::{
    element_position, pixel_position, AcquisitionParams, ArrayGeometry, ChannelDataSet,
    ImagingGrid, Point,
};
pub use hybrid::{eibmv_dmas_line, image_eibmv_dmas, term_lines};
pub use image::{RfImage, RfLayout};
pub use metrics::{fwhm_minus6db, lateral_profile, sidelobe_level, snr_db, LateralProfile, Roi};
pub use synth::{
    add_noise, impulse_response, nwave_pressure, read_channel_file, simulate_channels,
    write_channel_file, Absorber, NoiseSpec, Phantom, Transducer,
};

/// Runs the beamformer selected by `config.method`.
pub fn reconstruct(
    channels: &ChannelDataSet,
    grid: &ImagingGrid,
    config: &BeamformConfig,
) -> Result<RfImage> {
    match config.method {
        Method::Das | Method::Dmas => image_classic(channels, grid, config),
        Method::Mv | Method::Eibmv => image_adaptive(channels, grid, config),
        Method::EibmvDmas => image_eibmv_dmas(channels, grid, config),
    }
}
