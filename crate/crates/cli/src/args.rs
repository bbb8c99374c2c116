use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use qngcert::montecarlo::{Detector, SamplingMode};
use qngcert::povm::{DiagonalPovmElement, SpadParameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Output format; each subcommand has its own default
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DetectorArgs {
    /// SPAD detection efficiency
    #[arg(long, default_value_t = 0.58)]
    pub eta: f64,
    /// SPAD dark-count probability per pulse
    #[arg(long, default_value_t = 1.44e-6)]
    pub dark: f64,
    /// JSON file with a photon-number-diagonal POVM element instead of a SPAD
    #[arg(long, value_name = "FILE", conflicts_with_all = ["eta", "dark"])]
    pub povm: Option<PathBuf>,
}

impl DetectorArgs {
    pub fn detector(&self) -> anyhow::Result<Detector> {
        match &self.povm {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading POVM file {}", path.display()))?;
                let povm: DiagonalPovmElement = serde_json::from_str(&text)
                    .with_context(|| format!("parsing POVM file {}", path.display()))?;
                Ok(Detector::Povm(povm))
            }
            None => Ok(Detector::Spad(SpadParameters::new(self.eta, self.dark)?)),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Pulses per probe setting
    #[arg(long, default_value_t = 1_000_000)]
    pub pulses: u64,
    /// Seed of the random streams
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Verdicts at k sigma are reported alongside the point verdicts
    #[arg(long, default_value_t = 3.0)]
    pub k_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// True probabilities, expected uncertainties at the given pulse count
    Exact,
    /// Binomially sampled click counts
    Sampled,
}

impl From<Mode> for SamplingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => SamplingMode::Exact,
            Mode::Sampled => SamplingMode::Sampled,
        }
    }
}
