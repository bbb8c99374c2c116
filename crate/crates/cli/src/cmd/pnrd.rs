use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Subcommand};
use qngcert::estimation::ProbeRole;
use qngcert::fock::{CutoffPolicy, PhotonNumberDistribution};
use qngcert::pnrd::{
    calibrate_nbar, eme_reconstruct, simulate_histogram, CalibrationOptions, CoincidenceHistogram,
    EmeOptions, HistogramMode, MultiplexResponse, DEFAULT_N_MAX,
};
use qngcert::text::number as num;
use serde::Serialize;

use crate::args::{Format, Mode, OutputArgs};
use crate::output;

#[derive(Subcommand, Debug)]
pub enum PnrdCommand {
    /// Export the response matrix P(D|n)
    Response(ResponseArgs),
    /// Coincidence histogram of a thermal input
    Simulate(SimulateArgs),
    /// Reconstruct photon statistics from a histogram
    Reconstruct(ReconstructArgs),
    /// Mean photon number of a thermal probe with a bootstrap interval
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ResponseArgs {
    /// Number of splitter outputs
    #[arg(long, default_value_t = 10)]
    pub channels: usize,
    /// Common channel efficiency, used unless --efficiencies is given
    #[arg(long, default_value_t = 0.5)]
    pub efficiency: f64,
    /// Per-channel efficiencies, comma separated
    #[arg(long, value_delimiter = ',')]
    pub efficiencies: Option<Vec<f64>>,
    /// Splitting weights, comma separated, summing to 1
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Dark-click probability per channel: one value or one per channel
    #[arg(long, value_delimiter = ',')]
    pub channel_dark: Option<Vec<f64>>,
    /// Largest photon number tabulated and reconstructed
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub cutoff: usize,
}

impl ResponseArgs {
    fn response(&self) -> anyhow::Result<MultiplexResponse> {
        let m = match (&self.efficiencies, &self.weights) {
            (Some(e), _) => e.len(),
            (None, Some(w)) => w.len(),
            (None, None) => self.channels,
        };
        if m == 0 {
            bail!("at least one channel is required");
        }
        let effs = self
            .efficiencies
            .clone()
            .unwrap_or_else(|| vec![self.efficiency; m]);
        let weights = self
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / m as f64; m]);
        let dark = match self.channel_dark.as_deref() {
            None => vec![0.0; m],
            Some([d]) => vec![*d; m],
            Some(d) => d.to_vec(),
        };
        Ok(MultiplexResponse::new(effs, weights, dark, self.cutoff)?)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub response: ResponseArgs,
    /// Mean photon number of the thermal input
    #[arg(long, default_value_t = 1.0)]
    pub nbar: f64,
    /// Number of shots
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Seed of the sampling stream
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampled counts or exact bin probabilities
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    pub mode: Mode,
}

#[derive(Args, Debug, Clone)]
pub struct EmeArgs {
    /// Entropy-regularization strength
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    /// Relative log-likelihood change that stops the iteration
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Iteration cap; hitting it is reported as a warning
    #[arg(long, default_value_t = 100_000)]
    pub max_iterations: usize,
}

impl EmeArgs {
    fn options(&self) -> EmeOptions {
        EmeOptions {
            lambda: self.lambda,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..EmeOptions::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct HistogramArgs {
    /// CSV with rows D,count
    #[arg(long, value_name = "FILE")]
    pub histogram: PathBuf,
    /// Sample size behind a histogram given as probabilities
    #[arg(long, default_value_t = 0)]
    pub samples: u64,
}

impl HistogramArgs {
    fn read(&self) -> anyhow::Result<CoincidenceHistogram> {
        let text = std::fs::read_to_string(&self.histogram)
            .with_context(|| format!("reading {}", self.histogram.display()))?;
        CoincidenceHistogram::from_csv(&text, self.samples)
            .with_context(|| format!("in histogram file {}", self.histogram.display()))
    }
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub response: ResponseArgs,
    #[command(flatten)]
    pub input: HistogramArgs,
    #[command(flatten)]
    pub eme: EmeArgs,
    /// Reconstruct the detected light (after loss) rather than the input
    #[arg(long)]
    pub detected: bool,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub response: ResponseArgs,
    #[command(flatten)]
    pub input: HistogramArgs,
    #[command(flatten)]
    pub eme: EmeArgs,
    /// Role of the calibrated probe: s or q
    #[arg(long, default_value = "s")]
    pub role: ProbeRole,
    /// Bootstrap resamples for the interval
    #[arg(long, default_value_t = 100)]
    pub resamples: u32,
    /// Two-sided coverage of the interval
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Seed of the bootstrap streams
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct CalibrationOutput {
    role: ProbeRole,
    nbar: f64,
    nbar_lo: f64,
    nbar_hi: f64,
    total_efficiency: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    detected: PhotonNumberDistribution,
}

pub fn run(cmd: &PnrdCommand, out: &OutputArgs) -> anyhow::Result<()> {
    match cmd {
        PnrdCommand::Response(a) => {
            let r = a.response()?;
            output::emit_as(out, Format::Json, &r, || {
                let mut s = String::from("D");
                for n in 0..=r.n_max() {
                    s.push_str(&format!(",n{n}"));
                }
                s.push('\n');
                for (d, row) in r.matrix().iter().enumerate() {
                    s.push_str(&d.to_string());
                    for x in row {
                        s.push_str(&format!(",{}", num(*x)));
                    }
                    s.push('\n');
                }
                s
            })
        }
        PnrdCommand::Simulate(a) => {
            let r = a.response.response()?;
            let input = PhotonNumberDistribution::thermal(a.nbar, CutoffPolicy::default())?;
            let mode = match a.mode {
                Mode::Exact => HistogramMode::Exact,
                Mode::Sampled => HistogramMode::Sampled,
            };
            let h = simulate_histogram(&input, &r, a.samples, a.seed, mode)?;
            output::emit_as(out, Format::Csv, &h, || h.to_csv())
        }
        PnrdCommand::Reconstruct(a) => {
            let mut r = a.response.response()?;
            if a.detected {
                r = r.lossless_equivalent()?;
            }
            let h = a.input.read()?;
            let rec = eme_reconstruct(&h, &r, &a.eme.options())?;
            if let Some(w) = &rec.warning {
                eprintln!("qng-cert: warning: {w}");
            }
            output::emit_as(out, Format::Json, &rec, || {
                let mut s = String::from("n,p\n");
                for (n, p) in rec.distribution.probs().iter().enumerate() {
                    s.push_str(&format!("{n},{}\n", num(*p)));
                }
                s
            })
        }
        PnrdCommand::Calibrate(a) => {
            let r = a.response.response()?;
            let h = a.input.read()?;
            let opts = CalibrationOptions {
                eme: a.eme.options(),
                resamples: a.resamples,
                confidence: a.confidence,
                seed: a.seed,
            };
            let cal = calibrate_nbar(&h, &r, a.role, &opts)?;
            if let Some(w) = &cal.reconstruction.warning {
                eprintln!("qng-cert: warning: {w}");
            }
            let result = CalibrationOutput {
                role: cal.probe.role,
                nbar: cal.probe.nbar,
                nbar_lo: cal.probe.nbar_lo,
                nbar_hi: cal.probe.nbar_hi,
                total_efficiency: cal.total_efficiency,
                iterations: cal.reconstruction.iterations,
                converged: cal.reconstruction.converged,
                warning: cal.reconstruction.warning.clone(),
                detected: cal.reconstruction.distribution.clone(),
            };
            output::emit_as(out, Format::Json, &result, || {
                format!(
                    "role,nbar,nbar_lo,nbar_hi\n{},{},{},{}\n",
                    result.role.as_str().to_lowercase(),
                    num(result.nbar),
                    num(result.nbar_lo),
                    num(result.nbar_hi)
                )
            })
        }
    }
}
