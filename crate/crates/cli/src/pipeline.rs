//! simulate -> beamform -> postprocess -> measure, with every written file
//! recorded in a digest manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use pabeam_core::{
    add_noise, log_compress, read_channel_file, reconstruct, simulate_channels, validate_config,
    write_channel_file, ChannelDataSet, ImagingGrid, Method,
};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{exit, CliError, ConfigError, FieldError};
use crate::export::{parse_csv, render_csv, render_pgm, render_profile, ImageFormat};
use crate::report::{depth_key, measure, MethodOutcome, Report};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const CHANNELS: &str = "channels.bin";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
    pub methods: Vec<(Method, MethodStatus)>,
}

impl Manifest {
    pub fn failed(&self) -> Vec<Method> {
        self.methods
            .iter()
            .filter(|(_, s)| matches!(s, MethodStatus::Failed(_)))
            .map(|(m, _)| *m)
            .collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed().is_empty() {
            exit::OK
        } else {
            exit::NUMERICAL
        }
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn to_json(&self) -> Value {
        let artifacts: Vec<Value> = self
            .artifacts
            .iter()
            .map(|a| json!({ "bytes": a.bytes, "path": a.path, "sha256": a.sha256 }))
            .collect();
        let methods: Map<String, Value> = self
            .methods
            .iter()
            .map(|(m, s)| {
                let v = match s {
                    MethodStatus::Ok => json!({ "status": "ok" }),
                    MethodStatus::Failed(e) => json!({ "error": e, "status": "failed" }),
                };
                (m.name().to_string(), v)
            })
            .collect();
        json!({
            "artifacts": artifacts,
            "command": self.command,
            "methods": methods,
            "seed": self.seed,
            "status": if self.failed().is_empty() { "ok" } else { "failed" },
        })
    }

    pub fn render(&self) -> Vec<u8> {
        let mut text =
            serde_json::to_string_pretty(&self.to_json()).expect("manifest is serializable");
        text.push('\n');
        text.into_bytes()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that records each file it writes.
pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    /// Creates the directory and removes any manifest left by an earlier run,
    /// so a failed run never leaves a manifest behind.
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let stale = dir.join(MANIFEST);
        match fs::remove_file(&stale) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(stale, e)),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(name, bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    /// Re-lists files named by the manifest text of an earlier command in the
    /// same directory, digesting their current contents.
    pub fn adopt(&mut self, previous: &str) -> Result<(), CliError> {
        let value: Value = serde_json::from_str(previous).map_err(|e| {
            CliError::io(
                self.dir.join(MANIFEST),
                io::Error::new(io::ErrorKind::InvalidData, e),
            )
        })?;
        let names = value["artifacts"].as_array().cloned().unwrap_or_default();
        for name in names.iter().filter_map(|a| a["path"].as_str()) {
            if name.contains("..") || Path::new(name).is_absolute() {
                continue;
            }
            let path = self.dir.join(name);
            match fs::read(&path) {
                Ok(bytes) => self.record(name, &bytes),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(CliError::io(path, e)),
            }
        }
        Ok(())
    }

    /// Writes the manifest last; it lists every other file in path order.
    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        methods: Vec<(Method, MethodStatus)>,
    ) -> Result<Manifest, CliError> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            artifacts: self.artifacts,
            methods,
        };
        let path = self.dir.join(MANIFEST);
        fs::write(&path, manifest.render()).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Simulated channel data: noise-free forward model plus seeded noise.
pub fn simulate(config: &RunConfig) -> Result<ChannelDataSet, CliError> {
    let clean = simulate_channels(
        &config.phantom(),
        &config.geometry()?,
        &config.acquisition()?,
        &config.transducer(),
    )?;
    Ok(add_noise(&clean, &config.noise())?)
}

pub fn load_channels(path: &Path) -> Result<ChannelDataSet, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_channel_file(file).map_err(|e| CliError::io(path, e))
}

/// Loads the configured channel file, or simulates when none is set.
pub fn acquire(config: &RunConfig) -> Result<(ChannelDataSet, bool), CliError> {
    match &config.acquisition.channels {
        Some(path) => {
            let data = load_channels(path)?;
            let mut bad = Vec::new();
            for &method in &config.beamform.methods {
                for v in
                    validate_config(&config.beamform_config(method), data.geometry(), data.acq())
                {
                    bad.push(FieldError::new(
                        format!("beamform ({method} on {})", path.display()),
                        v.to_string(),
                    ));
                }
            }
            if !bad.is_empty() {
                return Err(ConfigError::Validation(bad).into());
            }
            Ok((data, false))
        }
        None => Ok((simulate(config)?, true)),
    }
}

pub fn file_stem(method: Method) -> String {
    method.name().to_ascii_lowercase()
}

/// One method's images on the grid.
pub struct MethodImages {
    pub raw: Array2<f64>,
    pub envelope: Array2<f64>,
    pub db: Array2<f64>,
}

pub fn beamform_method(
    channels: &ChannelDataSet,
    grid: &ImagingGrid,
    config: &RunConfig,
    method: Method,
) -> pabeam_core::Result<MethodImages> {
    let bf = config.beamform_config(method);
    let rf = reconstruct(channels, grid, &bf)?;
    let envelope = rf.envelope_on_grid()?;
    if envelope.iter().any(|v| !v.is_finite()) {
        return Err(pabeam_core::Error::Numerical("non-finite envelope".into()));
    }
    let db = log_compress(&envelope, bf.dynamic_range)?;
    Ok(MethodImages {
        raw: rf.to_grid(),
        envelope,
        db,
    })
}

fn write_images(
    out: &mut Outputs,
    config: &RunConfig,
    method: Method,
    images: &MethodImages,
) -> Result<(), CliError> {
    let stem = file_stem(method);
    out.write(&format!("{stem}_raw.csv"), &render_csv(&images.raw))?;
    out.write(
        &format!("{stem}_envelope.csv"),
        &render_csv(&images.envelope),
    )?;
    for format in &config.output.formats {
        let bytes = match format {
            ImageFormat::Pgm => render_pgm(&images.db, config.beamform.dynamic_range),
            ImageFormat::Csv => render_csv(&images.db),
        };
        out.write(&format!("{stem}_db.{}", format.name()), &bytes)?;
    }
    Ok(())
}

/// Measures one method and writes its lateral profiles.
fn measure_method(
    out: &mut Outputs,
    config: &RunConfig,
    grid: &ImagingGrid,
    method: Method,
    envelope: &Array2<f64>,
) -> Result<MethodOutcome, CliError> {
    match measure(envelope, grid, config) {
        Ok((rows, profiles)) => {
            for p in &profiles {
                let name = format!("{}_profile_{}mm.csv", file_stem(method), depth_key(p.depth));
                out.write(&name, &render_profile(p))?;
            }
            Ok(MethodOutcome::Measured(rows))
        }
        Err(e) => {
            warn!("{method}: measurement failed: {e}");
            Ok(MethodOutcome::Failed(e.to_string()))
        }
    }
}

fn status(outcome: &MethodOutcome) -> MethodStatus {
    match outcome {
        MethodOutcome::Measured(_) => MethodStatus::Ok,
        MethodOutcome::Failed(e) => MethodStatus::Failed(e.clone()),
    }
}

/// `simulate`: writes the channel file.
pub fn run_simulate(config: &RunConfig) -> Result<Manifest, CliError> {
    let mut out = Outputs::create(&config.output.directory)?;
    let data = simulate(config)?;
    out.write(CHANNELS, &channel_bytes(&data))?;
    out.finish("simulate", config.noise.seed, Vec::new())
}

fn channel_bytes(data: &ChannelDataSet) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_channel_file(data, &mut bytes).expect("writing to memory");
    bytes
}

/// `beamform`: images for every configured method, no measurements.
pub fn run_beamform(config: &RunConfig) -> Result<Manifest, CliError> {
    let mut out = Outputs::create(&config.output.directory)?;
    let grid = config.grid()?;
    let (channels, simulated) = acquire(config)?;
    if simulated && config.output.write_channels {
        out.write(CHANNELS, &channel_bytes(&channels))?;
    }
    let mut methods = Vec::new();
    for &method in &config.beamform.methods {
        info!("beamforming {method}");
        match beamform_method(&channels, &grid, config, method) {
            Ok(images) => {
                write_images(&mut out, config, method, &images)?;
                methods.push((method, MethodStatus::Ok));
            }
            Err(e) => {
                warn!("{method} failed: {e}");
                methods.push((method, MethodStatus::Failed(e.to_string())));
            }
        }
    }
    out.finish("beamform", config.noise.seed, methods)
}

/// `metrics`: measures envelope images left by `beamform` in the output
/// directory and writes the report next to them.
pub fn run_metrics(config: &RunConfig) -> Result<Manifest, CliError> {
    let dir = &config.output.directory;
    let previous = fs::read_to_string(dir.join(MANIFEST)).ok();
    let mut out = Outputs::create(dir)?;
    if let Some(text) = previous {
        out.adopt(&text)?;
    }
    let grid = config.grid()?;
    let mut report = Report::new(config);
    let mut methods = Vec::new();
    for &method in &config.beamform.methods {
        let path = dir.join(format!("{}_envelope.csv", file_stem(method)));
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let envelope = parse_csv(&text)
            .map_err(|e| CliError::io(&path, io::Error::new(io::ErrorKind::InvalidData, e)))?;
        if envelope.dim() != (grid.num_rows(), grid.num_cols()) {
            let msg = format!(
                "image is {:?}, grid is {}x{}",
                envelope.dim(),
                grid.num_rows(),
                grid.num_cols()
            );
            return Err(CliError::io(
                &path,
                io::Error::new(io::ErrorKind::InvalidData, msg),
            ));
        }
        let outcome = measure_method(&mut out, config, &grid, method, &envelope)?;
        methods.push((method, status(&outcome)));
        report.methods.push((method, outcome));
    }
    out.write(REPORT, &report.render())?;
    out.finish("metrics", config.noise.seed, methods)
}

/// Full run: channel data, then images, profiles and metrics per method,
/// then the report and the manifest. Returns the manifest; a method that fails
/// numerically is marked failed there and the run continues.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, CliError> {
    let mut out = Outputs::create(&config.output.directory)?;
    let grid = config.grid()?;
    let (channels, simulated) = acquire(config)?;
    if simulated && config.output.write_channels {
        out.write(CHANNELS, &channel_bytes(&channels))?;
    }
    let mut report = Report::new(config);
    let mut methods = Vec::new();
    for &method in &config.beamform.methods {
        info!("beamforming {method}");
        let outcome = match beamform_method(&channels, &grid, config, method) {
            Ok(images) => {
                write_images(&mut out, config, method, &images)?;
                measure_method(&mut out, config, &grid, method, &images.envelope)?
            }
            Err(e) => {
                warn!("{method} failed: {e}");
                MethodOutcome::Failed(e.to_string())
            }
        };
        methods.push((method, status(&outcome)));
        report.methods.push((method, outcome));
    }
    out.write(REPORT, &report.render())?;
    out.finish("pipeline", config.noise.seed, methods)
}

/// Parses the report of a finished run.
pub fn read_report(dir: &Path) -> Result<Value, CliError> {
    let path = dir.join(REPORT);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::io(&path, io::Error::new(io::ErrorKind::InvalidData, e)))
}
