//! INI run configuration: `[section]` headers, `key = value` lines, `#` or `;`
//! comments. Every key is optional; omitted keys take the reference values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use pabeam_core::{
    validate_config, Absorber, AcquisitionParams, ArrayGeometry, Band, BeamformConfig,
    DmasSqrtMode, ImagingGrid, Interpolation, Method, NoiseSpec, Phantom, Point, TermNormalization,
    Transducer,
};

use crate::error::{ConfigError, FieldError};
use crate::export::ImageFormat;

pub const SECTIONS: [&str; 6] = [
    "array",
    "acquisition",
    "phantom",
    "noise",
    "beamform",
    "output",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPreset {
    Coarse,
    Fine,
}

impl GridPreset {
    pub fn name(&self) -> &'static str {
        match self {
            GridPreset::Coarse => "coarse",
            GridPreset::Fine => "fine",
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            GridPreset::Coarse => ImagingGrid::COARSE_SPACING,
            GridPreset::Fine => ImagingGrid::FINE_SPACING,
        }
    }
}

impl FromStr for GridPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coarse" => Ok(GridPreset::Coarse),
            "fine" => Ok(GridPreset::Fine),
            other => Err(format!("expected coarse or fine, got '{other}'")),
        }
    }
}

/// Whether the 4-12 MHz band-pass runs: `auto` enables it for the DMAS family only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandpassMode {
    Auto,
    On,
    Off,
}

impl BandpassMode {
    pub fn name(&self) -> &'static str {
        match self {
            BandpassMode::Auto => "auto",
            BandpassMode::On => "on",
            BandpassMode::Off => "off",
        }
    }
}

impl FromStr for BandpassMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(BandpassMode::Auto),
            "on" | "true" => Ok(BandpassMode::On),
            "off" | "false" => Ok(BandpassMode::Off),
            other => Err(format!("expected auto, on or off, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArraySection {
    pub num_elements: usize,
    pub pitch: f64,
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSection {
    pub sampling_rate: f64,
    pub sound_speed: f64,
    pub num_samples: usize,
    /// Channel file to load instead of simulating.
    pub channels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSection {
    pub depths: Vec<f64>,
    pub lateral: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    /// `inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformSection {
    pub methods: Vec<Method>,
    pub subarray_length: usize,
    pub temporal_half_width: usize,
    pub sigma: f64,
    pub delta: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub tukey_alpha: f64,
    pub bandpass: BandpassMode,
    pub dynamic_range: f64,
    pub dmas_sqrt_mode: DmasSqrtMode,
    pub term_normalization: TermNormalization,
    pub interpolation: Interpolation,
    pub grid: GridPreset,
    pub lateral_extent: f64,
    pub axial_start: f64,
    pub axial_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<ImageFormat>,
    pub profile_depths: Vec<f64>,
    /// Floor of the dB map that profiles and sidelobes are read from.
    pub metrics_dynamic_range: f64,
    pub write_channels: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub array: ArraySection,
    pub acquisition: AcquisitionSection,
    pub phantom: PhantomSection,
    pub noise: NoiseSection,
    pub beamform: BeamformSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("reference configuration is valid")
    }
}

type Raw = BTreeMap<&'static str, BTreeMap<String, (usize, String)>>;

const KEYS: [(&str, &[&str]); 6] = [
    (
        "array",
        &[
            "elements",
            "pitch",
            "center_frequency",
            "fractional_bandwidth",
        ],
    ),
    (
        "acquisition",
        &["sampling_rate", "sound_speed", "samples", "channels"],
    ),
    ("phantom", &["depths", "lateral", "radius", "amplitude"]),
    ("noise", &["snr_db", "seed"]),
    (
        "beamform",
        &[
            "method",
            "subarray_length",
            "temporal_half_width",
            "sigma",
            "delta",
            "band_low",
            "band_high",
            "tukey_alpha",
            "bandpass",
            "dynamic_range",
            "dmas_sqrt_mode",
            "term_normalization",
            "interpolation",
            "grid",
            "lateral_extent",
            "axial_start",
            "axial_end",
        ],
    ),
    (
        "output",
        &[
            "directory",
            "formats",
            "profile_depths",
            "metrics_dynamic_range",
            "write_channels",
        ],
    ),
];

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut raw: Raw = BTreeMap::new();
    let mut section: Option<&'static str> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: lineno,
                message: "section header is missing ']'".into(),
            })?;
            let name = name.trim();
            section = Some(
                SECTIONS
                    .iter()
                    .copied()
                    .find(|s| *s == name)
                    .ok_or_else(|| ConfigError::UnknownSection {
                        line: lineno,
                        section: name.to_string(),
                    })?,
            );
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: lineno,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: lineno,
                message: "empty key".into(),
            });
        }
        let Some(sec) = section else {
            return Err(ConfigError::Syntax {
                line: lineno,
                message: format!("key '{key}' appears before any section"),
            });
        };
        let known = KEYS
            .iter()
            .find(|(s, _)| *s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line: lineno,
                section: sec.to_string(),
                key: key.to_string(),
            });
        }
        let entries = raw.entry(sec).or_default();
        if entries.contains_key(key) {
            return Err(ConfigError::Syntax {
                line: lineno,
                message: format!("duplicate key '{key}' in [{sec}]"),
            });
        }
        entries.insert(key.to_string(), (lineno, value.trim().to_string()));
    }
    Ok(raw)
}

struct Reader<'a> {
    raw: &'a Raw,
}

fn invalid(
    section: &str,
    key: &str,
    line: usize,
    value: &str,
    message: impl ToString,
) -> ConfigError {
    ConfigError::InvalidValue {
        line,
        key: format!("{section}.{key}"),
        value: value.to_string(),
        message: message.to_string(),
    }
}

impl Reader<'_> {
    fn value(&self, section: &'static str, key: &str) -> Option<&(usize, String)> {
        self.raw.get(section).and_then(|s| s.get(key))
    }

    fn get_or<T>(
        &self,
        section: &'static str,
        key: &str,
        default: impl FnOnce() -> T,
    ) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.value(section, key) {
            None => Ok(default()),
            Some((line, value)) => value
                .parse::<T>()
                .map_err(|e| invalid(section, key, *line, value, e)),
        }
    }

    fn list_or<T>(
        &self,
        section: &'static str,
        key: &str,
        default: impl FnOnce() -> Vec<T>,
    ) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.value(section, key) {
            None => Ok(default()),
            Some((line, value)) => value
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|e| invalid(section, key, *line, v, e))
                })
                .collect(),
        }
    }

    fn flag_or(
        &self,
        section: &'static str,
        key: &str,
        default: bool,
    ) -> Result<bool, ConfigError> {
        match self.value(section, key) {
            None => Ok(default),
            Some((line, value)) => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(invalid(
                    section,
                    key,
                    *line,
                    value,
                    "expected true or false",
                )),
            },
        }
    }
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = tokenize(text)?;
    let r = Reader { raw: &raw };

    let array = ArraySection {
        num_elements: r.get_or("array", "elements", || 128)?,
        pitch: r.get_or("array", "pitch", || ArrayGeometry::DEFAULT_PITCH)?,
        center_frequency: r.get_or("array", "center_frequency", || {
            Transducer::default().center_freq
        })?,
        fractional_bandwidth: r.get_or("array", "fractional_bandwidth", || {
            Transducer::default().fractional_bandwidth
        })?,
    };
    let acq = AcquisitionParams::default();
    let acquisition = AcquisitionSection {
        sampling_rate: r.get_or("acquisition", "sampling_rate", || acq.sampling_rate)?,
        sound_speed: r.get_or("acquisition", "sound_speed", || acq.sound_speed)?,
        num_samples: r.get_or("acquisition", "samples", || acq.num_samples)?,
        channels: r
            .value("acquisition", "channels")
            .map(|(_, v)| PathBuf::from(v))
            .filter(|p| !p.as_os_str().is_empty()),
    };
    let phantom = PhantomSection {
        depths: r.list_or("phantom", "depths", || {
            vec![25e-3, 30e-3, 35e-3, 40e-3, 45e-3]
        })?,
        lateral: r.get_or("phantom", "lateral", || 0.0)?,
        radius: r.get_or("phantom", "radius", || 0.1e-3)?,
        amplitude: r.get_or("phantom", "amplitude", || 1.0)?,
    };
    let noise = NoiseSection {
        snr_db: r.get_or("noise", "snr_db", || 50.0)?,
        seed: r.get_or("noise", "seed", || 1)?,
    };

    let methods = match r.value("beamform", "method") {
        None => Method::ALL.to_vec(),
        Some((line, value)) => {
            let mut out = Vec::new();
            for name in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                let m: Method = name.parse().map_err(|_| {
                    invalid("beamform", "method", *line, name, unknown_method(name))
                })?;
                if !out.contains(&m) {
                    out.push(m);
                }
            }
            out
        }
    };
    let reference = BeamformConfig::paper_default(Method::Eibmv, array.num_elements);
    let subarray_length: usize =
        r.get_or("beamform", "subarray_length", || reference.subarray_length)?;
    let beamform = BeamformSection {
        methods,
        subarray_length,
        temporal_half_width: r.get_or("beamform", "temporal_half_width", || {
            reference.temporal_half_width
        })?,
        sigma: r.get_or("beamform", "sigma", || reference.subspace_threshold)?,
        delta: r.get_or("beamform", "delta", || {
            1.0 / (10.0 * subarray_length as f64)
        })?,
        band_low: r.get_or("beamform", "band_low", || reference.band.lo)?,
        band_high: r.get_or("beamform", "band_high", || reference.band.hi)?,
        tukey_alpha: r.get_or("beamform", "tukey_alpha", || reference.tukey_alpha)?,
        bandpass: r.get_or("beamform", "bandpass", || BandpassMode::Auto)?,
        dynamic_range: r.get_or("beamform", "dynamic_range", || reference.dynamic_range)?,
        dmas_sqrt_mode: r.get_or("beamform", "dmas_sqrt_mode", || reference.dmas_sqrt_mode)?,
        term_normalization: r.get_or("beamform", "term_normalization", || {
            reference.term_normalization
        })?,
        interpolation: r.get_or("beamform", "interpolation", || reference.interpolation)?,
        grid: r.get_or("beamform", "grid", || GridPreset::Coarse)?,
        lateral_extent: r.get_or("beamform", "lateral_extent", || 20e-3)?,
        axial_start: r.get_or("beamform", "axial_start", || 0.0)?,
        axial_end: r.get_or("beamform", "axial_end", || 50e-3)?,
    };
    let output = OutputSection {
        directory: r.get_or("output", "directory", || PathBuf::from("pabeam-out"))?,
        formats: r.list_or("output", "formats", || {
            vec![ImageFormat::Pgm, ImageFormat::Csv]
        })?,
        profile_depths: r.list_or("output", "profile_depths", || vec![35e-3, 45e-3])?,
        metrics_dynamic_range: r.get_or("output", "metrics_dynamic_range", || 300.0)?,
        write_channels: r.flag_or("output", "write_channels", true)?,
    };

    let config = RunConfig {
        array,
        acquisition,
        phantom,
        noise,
        beamform,
        output,
    };
    config.validate()?;
    Ok(config)
}

fn unknown_method(name: &str) -> String {
    let known: Vec<&str> = Method::ALL.iter().map(Method::name).collect();
    format!(
        "unknown method '{name}', expected one of {}",
        known.join(", ")
    )
}

fn config_key(field: &str) -> &'static str {
    match field {
        "subarray_length" => "beamform.subarray_length",
        "subspace_threshold" => "beamform.sigma",
        "loading_factor" => "beamform.delta",
        "band" => "beamform.band_low/band_high",
        "tukey_alpha" => "beamform.tukey_alpha",
        "dynamic_range" => "beamform.dynamic_range",
        _ => "beamform",
    }
}

impl RunConfig {
    pub fn geometry(&self) -> pabeam_core::Result<ArrayGeometry> {
        ArrayGeometry::new(self.array.num_elements, self.array.pitch)
    }

    pub fn transducer(&self) -> Transducer {
        Transducer {
            center_freq: self.array.center_frequency,
            fractional_bandwidth: self.array.fractional_bandwidth,
        }
    }

    pub fn acquisition(&self) -> pabeam_core::Result<AcquisitionParams> {
        AcquisitionParams::new(
            self.acquisition.sampling_rate,
            self.acquisition.sound_speed,
            self.acquisition.num_samples,
        )
    }

    pub fn phantom(&self) -> Phantom {
        Phantom {
            absorbers: self
                .phantom
                .depths
                .iter()
                .map(|&z| Absorber {
                    center: Point::new(self.phantom.lateral, z),
                    radius: self.phantom.radius,
                    amplitude: self.phantom.amplitude,
                })
                .collect(),
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            target_snr_db: self.noise.snr_db,
            seed: self.noise.seed,
        }
    }

    pub fn grid(&self) -> pabeam_core::Result<ImagingGrid> {
        ImagingGrid::new(
            self.beamform.lateral_extent,
            self.beamform.axial_start,
            self.beamform.axial_end,
            self.beamform.grid.spacing(),
        )
    }

    /// Beamformer settings for one method.
    pub fn beamform_config(&self, method: Method) -> BeamformConfig {
        let b = &self.beamform;
        BeamformConfig {
            method,
            subarray_length: b.subarray_length,
            temporal_half_width: b.temporal_half_width,
            subspace_threshold: b.sigma,
            loading_factor: b.delta,
            band: Band {
                lo: b.band_low,
                hi: b.band_high,
            },
            bandpass: match b.bandpass {
                BandpassMode::Auto => method.is_dmas_family(),
                BandpassMode::On => true,
                BandpassMode::Off => false,
            },
            tukey_alpha: b.tukey_alpha,
            dynamic_range: b.dynamic_range,
            dmas_sqrt_mode: b.dmas_sqrt_mode,
            term_normalization: b.term_normalization,
            interpolation: b.interpolation,
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad: Vec<FieldError> = Vec::new();
        let mut push = |field: &str, message: String| bad.push(FieldError::new(field, message));

        let geometry = self
            .geometry()
            .map_err(|e| push("array.elements/pitch", e.to_string()))
            .ok();
        if !(self.array.center_frequency > 0.0 && self.array.center_frequency.is_finite()) {
            push("array.center_frequency", "must be positive".into());
        }
        if !(self.array.fractional_bandwidth > 0.0 && self.array.fractional_bandwidth.is_finite()) {
            push("array.fractional_bandwidth", "must be positive".into());
        }
        let acq = self
            .acquisition()
            .map_err(|e| {
                push(
                    "acquisition.sampling_rate/sound_speed/samples",
                    e.to_string(),
                )
            })
            .ok();
        if let Some(acq) = &acq {
            let nyquist = acq.sampling_rate / 2.0;
            if self.array.center_frequency >= nyquist {
                push(
                    "array.center_frequency",
                    format!("must lie below the Nyquist rate {nyquist} Hz"),
                );
            }
        }
        if self
            .phantom
            .depths
            .iter()
            .any(|z| !(z.is_finite() && *z > 0.0))
        {
            push("phantom.depths", "depths must be positive".into());
        }
        if !self.phantom.lateral.is_finite() {
            push("phantom.lateral", "must be finite".into());
        }
        if !(self.phantom.radius > 0.0 && self.phantom.radius.is_finite()) {
            push("phantom.radius", "must be positive".into());
        }
        if !self.phantom.amplitude.is_finite() {
            push("phantom.amplitude", "must be finite".into());
        }
        if !(self.noise.snr_db.is_finite() || self.noise.snr_db == f64::INFINITY) {
            push(
                "noise.snr_db",
                "must be finite, or inf for noise-free data".into(),
            );
        }
        if let (Some(geometry), Some(acq)) = (&geometry, &acq) {
            let mut seen = Vec::new();
            for &method in &self.beamform.methods {
                for v in validate_config(&self.beamform_config(method), geometry, acq) {
                    let entry = (config_key(v.field), v.message);
                    if !seen.contains(&entry) {
                        push(entry.0, entry.1.clone());
                        seen.push(entry);
                    }
                }
            }
        }
        match self.grid() {
            Err(e) => push(
                "beamform.lateral_extent/axial_start/axial_end",
                e.to_string(),
            ),
            Ok(grid) => {
                for &z in &self.output.profile_depths {
                    if grid.nearest_row(z).is_err() {
                        push(
                            "output.profile_depths",
                            format!("depth {z} m lies outside the imaging grid"),
                        );
                    }
                }
            }
        }
        if !(self.output.metrics_dynamic_range > 0.0) {
            push("output.metrics_dynamic_range", "must be positive".into());
        }
        if self.output.directory.as_os_str().is_empty() {
            push("output.directory", "must not be empty".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(bad))
        }
    }

    /// Every setting as `section -> key -> value` text, in the form
    /// [`parse_config`] reads back.
    pub fn entries(&self) -> Vec<(&'static str, Vec<(&'static str, String)>)> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let a = &self.array;
        let q = &self.acquisition;
        let p = &self.phantom;
        let n = &self.noise;
        let b = &self.beamform;
        let o = &self.output;
        let mut acquisition = vec![
            ("sampling_rate", q.sampling_rate.to_string()),
            ("sound_speed", q.sound_speed.to_string()),
            ("samples", q.num_samples.to_string()),
        ];
        if let Some(path) = &q.channels {
            acquisition.push(("channels", path.display().to_string()));
        }
        vec![
            (
                "array",
                vec![
                    ("elements", a.num_elements.to_string()),
                    ("pitch", a.pitch.to_string()),
                    ("center_frequency", a.center_frequency.to_string()),
                    ("fractional_bandwidth", a.fractional_bandwidth.to_string()),
                ],
            ),
            ("acquisition", acquisition),
            (
                "phantom",
                vec![
                    ("depths", list(&p.depths)),
                    ("lateral", p.lateral.to_string()),
                    ("radius", p.radius.to_string()),
                    ("amplitude", p.amplitude.to_string()),
                ],
            ),
            (
                "noise",
                vec![
                    ("snr_db", n.snr_db.to_string()),
                    ("seed", n.seed.to_string()),
                ],
            ),
            (
                "beamform",
                vec![
                    (
                        "method",
                        b.methods
                            .iter()
                            .map(Method::name)
                            .collect::<Vec<_>>()
                            .join(", "),
                    ),
                    ("subarray_length", b.subarray_length.to_string()),
                    ("temporal_half_width", b.temporal_half_width.to_string()),
                    ("sigma", b.sigma.to_string()),
                    ("delta", b.delta.to_string()),
                    ("band_low", b.band_low.to_string()),
                    ("band_high", b.band_high.to_string()),
                    ("tukey_alpha", b.tukey_alpha.to_string()),
                    ("bandpass", b.bandpass.name().to_string()),
                    ("dynamic_range", b.dynamic_range.to_string()),
                    ("dmas_sqrt_mode", b.dmas_sqrt_mode.name().to_string()),
                    (
                        "term_normalization",
                        b.term_normalization.name().to_string(),
                    ),
                    ("interpolation", b.interpolation.name().to_string()),
                    ("grid", b.grid.name().to_string()),
                    ("lateral_extent", b.lateral_extent.to_string()),
                    ("axial_start", b.axial_start.to_string()),
                    ("axial_end", b.axial_end.to_string()),
                ],
            ),
            (
                "output",
                vec![
                    ("directory", o.directory.display().to_string()),
                    (
                        "formats",
                        o.formats
                            .iter()
                            .map(ImageFormat::name)
                            .collect::<Vec<_>>()
                            .join(", "),
                    ),
                    ("profile_depths", list(&o.profile_depths)),
                    ("metrics_dynamic_range", o.metrics_dynamic_range.to_string()),
                    ("write_channels", o.write_channels.to_string()),
                ],
            ),
        ]
    }

    /// Renders the configuration as an INI document.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, (section, entries)) in self.entries().into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for (key, value) in entries {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }
}
