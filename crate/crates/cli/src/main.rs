use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pabeam_cli::{
    exit, parse_config, run_beamform, run_metrics, run_pipeline, run_simulate, CliError,
    GridPreset, Manifest, RunConfig,
};
use pabeam_core::Method;

#[derive(Parser)]
#[command(name = "pabeam", version, about = "Photoacoustic beamforming pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate channel data and write it to the output directory.
    Simulate(Common),
    /// Reconstruct raw, envelope and dB images for each method.
    Beamform(Common),
    /// Measure FWHM, SNR and sidelobe level on images from `beamform`.
    Metrics(Common),
    /// Run every stage and write images, profiles, report and manifest.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// INI configuration file; reference values apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated methods: DAS, DMAS, MV, EIBMV, EIBMV_DMAS.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_parser = ["fine", "coarse"])]
    grid: Option<String>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Channel file to beamform instead of simulating.
    #[arg(long)]
    channels: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
            None => String::new(),
        };
        let mut config = parse_config(&text)?;
        if let Some(dir) = &self.output {
            config.output.directory = dir.clone();
        }
        if let Some(methods) = &self.methods {
            config.beamform.methods = methods.clone();
        }
        if let Some(grid) = &self.grid {
            config.beamform.grid = grid
                .parse::<GridPreset>()
                .expect("clap restricts the values");
        }
        if let Some(seed) = self.seed {
            config.noise.seed = seed;
        }
        if let Some(path) = &self.channels {
            config.acquisition.channels = Some(path.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<Manifest, CliError> {
    match cli.command {
        Command::Simulate(c) => run_simulate(&c.resolve()?),
        Command::Beamform(c) => run_beamform(&c.resolve()?),
        Command::Metrics(c) => run_metrics(&c.resolve()?),
        Command::Pipeline(c) => run_pipeline(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = match run(Cli::parse()) {
        Ok(manifest) => {
            for method in manifest.failed() {
                eprintln!("error: {method} failed");
            }
            println!("{} artifacts written", manifest.artifacts.len());
            manifest.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(exit::NUMERICAL as u8))
}
