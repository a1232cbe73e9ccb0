//! Beamformer selection and adaptive parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::geometry::{AcquisitionParams, ArrayGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Das,
    Dmas,
    Mv,
    Eibmv,
    EibmvDmas,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Das,
        Method::Dmas,
        Method::Mv,
        Method::Eibmv,
        Method::EibmvDmas,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Das => "DAS",
            Method::Dmas => "DMAS",
            Method::Mv => "MV",
            Method::Eibmv => "EIBMV",
            Method::EibmvDmas => "EIBMV_DMAS",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Method::Mv | Method::Eibmv | Method::EibmvDmas)
    }

    /// DMAS and the hybrid, whose outputs carry the second harmonic.
    pub fn is_dmas_family(&self) -> bool {
        matches!(self, Method::Dmas | Method::EibmvDmas)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Domain(format!("unknown beamforming method '{s}'")))
    }
}

/// Where the sign/square-root correction goes inside a factorized DMAS row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DmasSqrtMode {
    /// `sign(x_i x_j) sqrt|x_i x_j|` per pair, then summed along the row.
    #[default]
    Pairwise,
    /// `sign(x_i s_i) sqrt|x_i s_i|` with `s_i` the row's plain sum of partners.
    RowProduct,
}

impl DmasSqrtMode {
    pub fn name(&self) -> &'static str {
        match self {
            DmasSqrtMode::Pairwise => "pairwise",
            DmasSqrtMode::RowProduct => "row_product",
        }
    }
}

impl FromStr for DmasSqrtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pairwise" => Ok(DmasSqrtMode::Pairwise),
            "row_product" => Ok(DmasSqrtMode::RowProduct),
            other => Err(Error::Domain(format!("unknown dmas_sqrt_mode '{other}'"))),
        }
    }
}

/// Gain applied to each factorized DMAS row before the hybrid's adaptive stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TermNormalization {
    /// Row `i` divided by its pair count `M - 1 - i`, so a focused source
    /// reaches every row with the same gain and the all-ones steering vector
    /// matches.
    #[default]
    PairMean,
    /// Rows kept as plain bracket sums; uniform weights then return DMAS / (M - 1).
    Sum,
}

impl TermNormalization {
    pub fn name(&self) -> &'static str {
        match self {
            TermNormalization::PairMean => "pair_mean",
            TermNormalization::Sum => "sum",
        }
    }
}

impl FromStr for TermNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pair_mean" => Ok(TermNormalization::PairMean),
            "sum" => Ok(TermNormalization::Sum),
            other => Err(Error::Domain(format!(
                "unknown term_normalization '{other}'"
            ))),
        }
    }
}

/// Fractional-delay interpolation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Interpolation::Linear => "linear",
            Interpolation::Nearest => "nearest",
        }
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Interpolation::Linear),
            "nearest" => Ok(Interpolation::Nearest),
            other => Err(Error::Domain(format!("unknown interpolation '{other}'"))),
        }
    }
}

/// Pass band of the post-beamforming filter (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformConfig {
    pub method: Method,
    /// Subarray length `L`.
    pub subarray_length: usize,
    /// Temporal half width `K`; the covariance window spans `2K + 1` samples.
    pub temporal_half_width: usize,
    /// Eigenvalue threshold relative to the largest eigenvalue.
    pub subspace_threshold: f64,
    /// Diagonal loading factor; the load is `loading_factor * trace(R)`.
    pub loading_factor: f64,
    pub band: Band,
    /// When false every band-pass stage is skipped.
    pub bandpass: bool,
    pub tukey_alpha: f64,
    /// Display dynamic range (dB).
    pub dynamic_range: f64,
    pub dmas_sqrt_mode: DmasSqrtMode,
    pub term_normalization: TermNormalization,
    pub interpolation: Interpolation,
}

impl BeamformConfig {
    /// Reference settings for an `num_elements` array: `L = M/2`, `K = 5`,
    /// `sigma = 0.5`, loading `1/(10 L)`, 60 dB display. The Tukey(0.5)
    /// 4-12 MHz band-pass is enabled for DMAS and EIBMV-DMAS only.
    pub fn paper_default(method: Method, num_elements: usize) -> Self {
        let subarray_length = (num_elements / 2).max(1);
        Self {
            method,
            subarray_length,
            temporal_half_width: 5,
            subspace_threshold: 0.5,
            loading_factor: 1.0 / (10.0 * subarray_length as f64),
            band: Band { lo: 4e6, hi: 12e6 },
            bandpass: method.is_dmas_family(),
            tukey_alpha: 0.5,
            dynamic_range: 60.0,
            dmas_sqrt_mode: DmasSqrtMode::Pairwise,
            term_normalization: TermNormalization::PairMean,
            interpolation: Interpolation::Linear,
        }
    }

    /// Number of signals the adaptive stage combines: the element count, or the
    /// `M - 1` factorized DMAS terms for the hybrid.
    pub fn channel_count(&self, num_elements: usize) -> usize {
        match self.method {
            Method::EibmvDmas => num_elements.saturating_sub(1),
            _ => num_elements,
        }
    }
}

/// A single violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn validate_config(
    config: &BeamformConfig,
    geometry: &ArrayGeometry,
    acq: &AcquisitionParams,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, message: String| out.push(Violation { field, message });

    let channels = config.channel_count(geometry.num_elements());
    if config.subarray_length < 1 || config.subarray_length > channels {
        push(
            "subarray_length",
            format!("L = {} must lie in [1, {channels}]", config.subarray_length),
        );
    }
    if !(0.0..=1.0).contains(&config.subspace_threshold) {
        push(
            "subspace_threshold",
            format!("sigma = {} must lie in [0, 1]", config.subspace_threshold),
        );
    }
    if !(config.loading_factor > 0.0 && config.loading_factor.is_finite()) {
        push(
            "loading_factor",
            format!("delta = {} must be positive", config.loading_factor),
        );
    }
    let nyquist = acq.sampling_rate / 2.0;
    let Band { lo, hi } = config.band;
    if !(lo > 0.0 && lo < hi && hi < nyquist) {
        push(
            "band",
            format!("band [{lo}, {hi}] Hz must satisfy 0 < lo < hi < {nyquist} Hz"),
        );
    }
    if !(0.0..=1.0).contains(&config.tukey_alpha) {
        push(
            "tukey_alpha",
            format!("alpha = {} must lie in [0, 1]", config.tukey_alpha),
        );
    }
    if !(config.dynamic_range > 0.0) {
        push(
            "dynamic_range",
            format!("dynamic range {} dB must be positive", config.dynamic_range),
        );
    }
    out
}
