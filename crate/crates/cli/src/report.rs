//! Point-spread measurements and the JSON report.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use pabeam_core::{
    fwhm_minus6db, lateral_profile, log_compress, sidelobe_level, snr_db, ImagingGrid,
    LateralProfile, Method, Roi,
};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SIGNAL_ROI: f64 = 2e-3;
pub const NOISE_ROI: f64 = 4e-3;
pub const NOISE_OFFSET: f64 = 6e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMetrics {
    pub depth: f64,
    pub fwhm_mm: Option<f64>,
    pub snr_db: Option<f64>,
    pub sidelobe_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodOutcome {
    Measured(Vec<DepthMetrics>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: Vec<(&'static str, Vec<(&'static str, String)>)>,
    pub seed: u64,
    pub methods: Vec<(Method, MethodOutcome)>,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        let mut entries = config.entries();
        // the echo is a function of the run, not of where it was written
        for (section, keys) in &mut entries {
            if *section == "output" {
                keys.retain(|(k, _)| *k != "directory");
            }
        }
        Self {
            config: entries,
            seed: config.noise.seed,
            methods: Vec::new(),
        }
    }

    pub fn method(&self, method: Method) -> Option<&MethodOutcome> {
        self.methods
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, o)| o)
    }

    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(section, keys)| {
                let keys: Map<String, Value> = keys
                    .iter()
                    .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
                    .collect();
                (section.to_string(), Value::Object(keys))
            })
            .collect();
        let methods: Map<String, Value> = self
            .methods
            .iter()
            .map(|(m, outcome)| (m.name().to_string(), outcome_json(outcome)))
            .collect();
        json!({
            "config": config,
            "methods": methods,
            "seed": self.seed,
            "snr_definition": {
                "formula": "20 log10(peak envelope in signal ROI / population std of envelope in noise ROI)",
                "noise_roi_mm": [NOISE_ROI * 1e3, NOISE_ROI * 1e3],
                "noise_roi_lateral_offset_mm": NOISE_OFFSET * 1e3,
                "signal_roi_mm": [SIGNAL_ROI * 1e3, SIGNAL_ROI * 1e3],
            },
        })
    }

    pub fn render(&self) -> Vec<u8> {
        let mut text =
            serde_json::to_string_pretty(&self.to_json()).expect("report is serializable");
        text.push('\n');
        text.into_bytes()
    }
}

/// Depth key in millimetres, e.g. `"45.0"`.
pub fn depth_key(depth: f64) -> String {
    format!("{:.1}", depth * 1e3)
}

fn number(v: Option<f64>) -> Value {
    v.filter(|x| x.is_finite())
        .map_or(Value::Null, |x| json!(x))
}

fn outcome_json(outcome: &MethodOutcome) -> Value {
    match outcome {
        MethodOutcome::Failed(msg) => json!({ "error": msg, "status": "failed" }),
        MethodOutcome::Measured(rows) => {
            let pick = |f: fn(&DepthMetrics) -> Option<f64>| -> Map<String, Value> {
                rows.iter()
                    .map(|r| (depth_key(r.depth), number(f(r))))
                    .collect()
            };
            json!({
                "fwhm_mm": pick(|r| r.fwhm_mm),
                "sidelobe_db": pick(|r| r.sidelobe_db),
                "snr_db": pick(|r| r.snr_db),
                "status": "ok",
            })
        }
    }
}

/// Writes the report as JSON with sorted keys. Non-finite values (a sidelobe
/// level of `-inf` when nothing lies outside the mainlobe) become `null`.
pub fn write_report(report: &Report, path: &Path) -> Result<(), CliError> {
    fs::write(path, report.render()).map_err(|e| CliError::io(path, e))
}

/// The dB map metrics are read from.
pub fn metrics_map(envelope: &Array2<f64>, config: &RunConfig) -> pabeam_core::Result<Array2<f64>> {
    log_compress(envelope, config.output.metrics_dynamic_range)
}

/// Noise ROI center: beside the absorber, on whichever side stays in the grid.
fn noise_lateral(target: f64, grid: &ImagingGrid) -> f64 {
    let half = grid.lateral_extent() / 2.0;
    if target + NOISE_OFFSET + NOISE_ROI / 2.0 <= half {
        target + NOISE_OFFSET
    } else {
        target - NOISE_OFFSET
    }
}

/// Profiles at each configured depth plus their FWHM, SNR and sidelobe level.
/// A metric that cannot be taken on a profile is reported as missing.
pub fn measure(
    envelope: &Array2<f64>,
    grid: &ImagingGrid,
    config: &RunConfig,
) -> pabeam_core::Result<(Vec<DepthMetrics>, Vec<LateralProfile>)> {
    let db = metrics_map(envelope, config)?;
    let lateral = config.phantom.lateral;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for &depth in &config.output.profile_depths {
        let profile = lateral_profile(&db, grid, depth)?;
        let signal = Roi::centered(lateral, depth, SIGNAL_ROI, SIGNAL_ROI);
        let noise = Roi::centered(noise_lateral(lateral, grid), depth, NOISE_ROI, NOISE_ROI);
        rows.push(DepthMetrics {
            depth,
            fwhm_mm: fwhm_minus6db(&profile).ok().map(|w| w * 1e3),
            snr_db: snr_db(envelope, grid, &signal, &noise).ok(),
            sidelobe_db: sidelobe_level(&profile).ok(),
        });
        profiles.push(profile);
    }
    Ok((rows, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn empty_method_list_gives_a_valid_document() {
        let config = parse_config("[beamform]\nmethod =\n").unwrap();
        let report = Report::new(&config);
        let text = String::from_utf8(report.render()).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["methods"], json!({}));
        assert_eq!(v["seed"], json!(1));
    }

    #[test]
    fn keys_are_sorted_and_non_finite_values_are_null() {
        let config = parse_config("").unwrap();
        let mut report = Report::new(&config);
        report.methods.push((
            Method::Dmas,
            MethodOutcome::Measured(vec![DepthMetrics {
                depth: 45e-3,
                fwhm_mm: Some(0.9),
                snr_db: Some(60.0),
                sidelobe_db: Some(f64::NEG_INFINITY),
            }]),
        ));
        report
            .methods
            .push((Method::Das, MethodOutcome::Failed("singular".into())));
        let text = String::from_utf8(report.render()).unwrap();
        let order = [
            "\n  \"config\"",
            "\n  \"methods\"",
            "\n  \"seed\"",
            "\n  \"snr_definition\"",
        ];
        let pos: Vec<usize> = order.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert!(text.find("\"DAS\"").unwrap() < text.find("\"DMAS\"").unwrap());
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["methods"]["DMAS"]["fwhm_mm"]["45.0"], json!(0.9));
        assert_eq!(v["methods"]["DMAS"]["sidelobe_db"]["45.0"], Value::Null);
        assert_eq!(v["methods"]["DAS"]["status"], json!("failed"));
        assert!(v["config"]["output"].get("directory").is_none());
    }
}
