use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use privade_core::fixtures::{assemble_fixture, Fixture, FixtureSpec, ModelFile};
use privade_core::protocol::RunConfig;
use privade_core::selection::Dataset;
use serde::de::DeserializeOwned;

use crate::CliError;

/// Where the model, dataset and configuration come from: a fixture file,
/// or separate model and dataset files.
#[derive(Args, Debug)]
pub struct Inputs {
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long, conflicts_with = "fixture", requires = "dataset")]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "fixture", requires = "model")]
    pub dataset: Option<PathBuf>,
    /// Run configuration (JSON); `d` is calibrated when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for party randomness and the mixer.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Representative-set size when no config is given.
    #[arg(long)]
    pub k: Option<usize>,
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn load_fixture(inputs: &Inputs) -> Result<Fixture, CliError> {
    let config: Option<RunConfig> = match &inputs.config {
        Some(p) => {
            Some(RunConfig::from_json(&read_file(p)?).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let (spec, model, bands, dataset) = match (&inputs.fixture, &inputs.model, &inputs.dataset) {
        (Some(path), _, _) => {
            let fx: Fixture = parse(path)?;
            if config.is_none() && inputs.seed.is_none() && inputs.k.is_none() {
                return Ok(fx);
            }
            (fx.spec, fx.model, fx.split.bands, fx.dataset)
        }
        (None, Some(m), Some(d)) => {
            let file: ModelFile = parse(m)?;
            let dataset: Dataset = parse(d)?;
            let spec = FixtureSpec {
                arch: "custom".into(),
                n: dataset.len(),
                k: 20.min(dataset.len()),
                seed: 1,
                projection_dim: None,
            };
            (spec, file.model, file.split, dataset)
        }
        _ => {
            return Err(CliError::Usage(
                "give --fixture, or --model together with --dataset".into(),
            ))
        }
    };
    let spec = FixtureSpec {
        seed: inputs.seed.unwrap_or(spec.seed),
        k: inputs.k.unwrap_or(spec.k),
        ..spec
    };
    assemble_fixture(spec, model, bands, dataset, config).map_err(|e| CliError::Usage(e.to_string()))
}
