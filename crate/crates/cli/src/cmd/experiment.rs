use std::path::PathBuf;

use clap::{Args, Subcommand};
use qngcert::estimation::{plan_probes, ProbeRole, ThermalProbe};
use qngcert::montecarlo::{
    log_space, noise_threshold, run_experiment, sweep_nbar, sweep_noise, wigner_crossing,
    ExperimentPlan, SweepConfig, SweepResult,
};
use qngcert::text::number as num;
use serde::Serialize;

use crate::args::{DetectorArgs, Format, Mode, OutputArgs, RunArgs};
use crate::cmd::certify::record_csv;
use crate::{counts, output};

/// Bisection tolerance for the crossing searches.
const SEARCH_TOLERANCE: f64 = 1e-6;

#[derive(Subcommand, Debug)]
pub enum SweepCommand {
    /// One point per S-probe mean, Q at the largest safe mean
    Nbar(SweepNbarArgs),
    /// Fixed S-probe mean, Poissonian background with growing mean
    Noise(SweepNoiseArgs),
}

#[derive(Args, Debug)]
pub struct SweepShared {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Exact probabilities or sampled counts
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    /// Relative half-width of the S calibration interval
    #[arg(long, default_value_t = 0.0)]
    pub nbar_s_halfwidth: f64,
    /// Explicit ascending list of sweep values, comma separated
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
}

impl SweepShared {
    fn config(&self) -> SweepConfig {
        SweepConfig {
            n_pulses: self.run.pulses,
            seed: self.run.seed,
            mode: self.mode.into(),
            k_sigma: self.run.k_sigma,
            nbar_s_rel_halfwidth: self.nbar_s_halfwidth,
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepNbarArgs {
    #[command(flatten)]
    pub shared: SweepShared,
    /// Smallest S-probe mean
    #[arg(long, default_value_t = 0.0103)]
    pub from: f64,
    /// Largest S-probe mean
    #[arg(long, default_value_t = 5.04)]
    pub to: f64,
    /// Number of log-spaced points between --from and --to
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Also locate the S mean where the Wigner witness crosses 1/2
    #[arg(long)]
    pub crossing: bool,
}

#[derive(Args, Debug)]
pub struct SweepNoiseArgs {
    #[command(flatten)]
    pub shared: SweepShared,
    /// Mean of the S probe
    #[arg(long, default_value_t = 1.0)]
    pub nbar_s: f64,
    /// Largest background mean; the sweep is linear from 0
    #[arg(long, default_value_t = 20.0)]
    pub mu_max: f64,
    /// Number of background levels
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    /// Also locate the background mean where certification is lost
    #[arg(long)]
    pub threshold: bool,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    #[serde(flatten)]
    sweep: &'a SweepResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    wigner_crossing_nbar_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_noise_mu: Option<f64>,
}

fn emit_sweep(out: &OutputArgs, result: SweepOutput) -> anyhow::Result<()> {
    output::emit_as(out, Format::Csv, &result, || {
        let mut s = result.sweep.to_csv();
        if let Some(x) = result.wigner_crossing_nbar_s {
            s.push_str(&format!("# wigner_crossing_nbar_s,{}\n", num(x)));
        }
        if let Some(x) = result.threshold_noise_mu {
            s.push_str(&format!("# threshold_noise_mu,{}\n", num(x)));
        }
        s
    })
}

pub fn run_sweep(cmd: &SweepCommand, out: &OutputArgs) -> anyhow::Result<()> {
    match cmd {
        SweepCommand::Nbar(a) => {
            let detector = a.shared.detector.detector()?;
            let values = match &a.shared.values {
                Some(v) => v.clone(),
                None => log_space(a.from, a.to, a.points),
            };
            let sweep = sweep_nbar(&detector, &values, &a.shared.config())?;
            let crossing = if a.crossing {
                Some(wigner_crossing(&detector, a.from, a.to, SEARCH_TOLERANCE)?)
            } else {
                None
            };
            emit_sweep(
                out,
                SweepOutput {
                    sweep: &sweep,
                    wigner_crossing_nbar_s: crossing,
                    threshold_noise_mu: None,
                },
            )
        }
        SweepCommand::Noise(a) => {
            let detector = a.shared.detector.detector()?;
            let values = match &a.shared.values {
                Some(v) => v.clone(),
                None => linear(a.mu_max, a.points),
            };
            let sweep = sweep_noise(&detector, a.nbar_s, &values, &a.shared.config())?;
            let threshold = if a.threshold {
                Some(noise_threshold(
                    &detector,
                    a.nbar_s,
                    a.mu_max,
                    SEARCH_TOLERANCE,
                )?)
            } else {
                None
            };
            emit_sweep(
                out,
                SweepOutput {
                    sweep: &sweep,
                    wigner_crossing_nbar_s: None,
                    threshold_noise_mu: threshold,
                },
            )
        }
    }
}

fn linear(hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| hi * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Sampled counts or exact probabilities
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    pub mode: Mode,
    /// Nominal S-probe mean
    #[arg(long, default_value_t = 1.0)]
    pub nbar_s: f64,
    /// Lower end of the S calibration interval (default: nominal)
    #[arg(long)]
    pub nbar_s_lo: Option<f64>,
    /// Upper end of the S calibration interval (default: nominal)
    #[arg(long)]
    pub nbar_s_hi: Option<f64>,
    /// Q-probe mean (default: largest mean the safety condition admits)
    #[arg(long)]
    pub nbar_q: Option<f64>,
    /// Poissonian background, mean photons per pulse
    #[arg(long, default_value_t = 0.0)]
    pub noise_mu: f64,
    /// Also write the simulated counts in the certify input format
    #[arg(long, value_name = "PATH")]
    pub counts_out: Option<PathBuf>,
}

pub fn run_simulate(a: &SimulateArgs, out: &OutputArgs) -> anyhow::Result<()> {
    let s = ThermalProbe::new(
        ProbeRole::S,
        a.nbar_s,
        a.nbar_s_lo.unwrap_or(a.nbar_s),
        a.nbar_s_hi.unwrap_or(a.nbar_s),
    )?;
    let q_mean = match a.nbar_q {
        Some(q) => q,
        None => plan_probes(&s)?.max_nbar_q_hi,
    };
    let plan = ExperimentPlan {
        detector: a.detector.detector()?,
        probes: vec![
            ThermalProbe::vacuum(),
            ThermalProbe::exact(ProbeRole::Q, q_mean)?,
            s,
        ],
        noise_mu: a.noise_mu,
        n_pulses: a.run.pulses,
        seed: a.run.seed,
        mode: a.mode.into(),
        k_sigma: a.run.k_sigma,
    };
    let record = run_experiment(&plan)?;
    if let Some(path) = &a.counts_out {
        std::fs::write(path, counts::to_csv(&record.inputs))?;
    }
    output::emit_as(out, Format::Json, &record, || record_csv(&record))
}
