//! Simulated certification experiments.
//!
//! A run computes the true click probability of each probe (thermal light
//! superimposed with Poissonian background of mean `noise_mu` photons per
//! pulse), optionally samples finite click counts, and feeds the records to
//! [`estimation::certify`]. Sweeps fan out over rayon; each point draws from
//! its own random stream so results are independent of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::WIGNER_THRESHOLD;
use crate::error::{Error, Result};
use crate::estimation::{self, CertificationRecord, ProbeRecord, ProbeRole, ThermalProbe};
use crate::fock::{CutoffPolicy, PhotonNumberDistribution};
use crate::povm::{DiagonalPovmElement, SpadParameters};
use crate::rng;
use crate::text;

/// Pulses per probe when none are given: one second at 1 MHz.
pub const DEFAULT_PULSES: u64 = 1_000_000;

const EXPERIMENT_DOMAIN: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Spad(SpadParameters),
    Povm(DiagonalPovmElement),
}

impl Detector {
    pub fn povm(&self) -> DiagonalPovmElement {
        match self {
            Detector::Spad(p) => p.povm(),
            Detector::Povm(p) => p.clone(),
        }
    }

    /// `Tr[Pi (rho_th(nbar) * Poisson(mu))]` by explicit Fock summation.
    pub fn click_probability(&self, nbar: f64, noise_mu: f64) -> Result<f64> {
        let policy = CutoffPolicy::default();
        let probe = PhotonNumberDistribution::thermal(nbar, policy)?;
        let field = if noise_mu > 0.0 {
            probe.convolve(&PhotonNumberDistribution::poisson(noise_mu, policy)?)
        } else {
            probe
        };
        Ok(self.povm().click_probability(&field).value.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Use the true probabilities; uncertainties are the expected ones at
    /// `n_pulses`.
    Exact,
    /// Draw binomial click counts.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub detector: Detector,
    pub probes: Vec<ThermalProbe>,
    pub noise_mu: f64,
    pub n_pulses: u64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub k_sigma: f64,
}

/// Number of clicks in `n_pulses` Bernoulli trials.
pub fn simulate_clicks(prob: f64, n_pulses: u64, seed: u64) -> u64 {
    let mut stream = rng::stream(seed, 0);
    rng::binomial(&mut stream, n_pulses, prob)
}

fn probe_for(probes: &[ThermalProbe], role: ProbeRole) -> Result<ThermalProbe> {
    let mut it = probes.iter().filter(|p| p.role == role);
    match (it.next(), it.next()) {
        (Some(p), None) => Ok(*p),
        _ => Err(Error::PlanRejected(format!(
            "plan needs exactly one {} probe",
            role.as_str()
        ))),
    }
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<CertificationRecord> {
    run_indexed(plan, 0)
}

fn run_indexed(plan: &ExperimentPlan, index: u32) -> Result<CertificationRecord> {
    if plan.n_pulses == 0 {
        return Err(Error::PlanRejected("n_pulses must be >= 1".into()));
    }
    if !plan.noise_mu.is_finite() || plan.noise_mu < 0.0 {
        return Err(Error::domain("noise_mu", plan.noise_mu, "finite and >= 0"));
    }
    if plan.probes.len() != 3 {
        return Err(Error::PlanRejected(
            "plan needs the vacuum, Q and S probes".into(),
        ));
    }
    let probes = [
        probe_for(&plan.probes, ProbeRole::Vacuum)?,
        probe_for(&plan.probes, ProbeRole::Q)?,
        probe_for(&plan.probes, ProbeRole::S)?,
    ];
    estimation::check_safety(&probes[1], &probes[2])?;
    let mut records = Vec::with_capacity(3);
    for probe in probes {
        let p = plan.detector.click_probability(probe.nbar, plan.noise_mu)?;
        let rec = match plan.mode {
            SamplingMode::Exact => ProbeRecord::exact_with_pulses(probe, p, plan.n_pulses)?,
            SamplingMode::Sampled => {
                let id = rng::stream_id(EXPERIMENT_DOMAIN, index, probe.role.lane());
                let mut stream = rng::stream(plan.seed, id);
                let k = rng::binomial(&mut stream, plan.n_pulses, p);
                ProbeRecord::from_counts(probe, plan.n_pulses, k)?
            }
        };
        records.push(rec);
    }
    estimation::certify(&records[0], &records[1], &records[2], plan.k_sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_pulses: u64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub k_sigma: f64,
    /// Relative half-width of the S-probe calibration interval.
    pub nbar_s_rel_halfwidth: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_pulses: DEFAULT_PULSES,
            seed: 0,
            mode: SamplingMode::Exact,
            k_sigma: estimation::DEFAULT_K_SIGMA,
            nbar_s_rel_halfwidth: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub record: CertificationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "param,p0_primed,q0_primed,sigma_p0,sigma_q0,witness,qng,wigner";

    /// One row per point; `qng` and `wigner` are the point verdicts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let r = &p.record;
            let cells = [
                p.param,
                r.p0_primed,
                r.q0_primed,
                r.sigma_p0,
                r.sigma_q0,
                r.wigner.value,
            ];
            for c in cells {
                out.push_str(&text::number(c));
                out.push(',');
            }
            out.push_str(&format!("{},{}\n", r.qng.certified, r.wigner.certified));
        }
        out
    }
}

fn check_ascending(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::PlanRejected(format!("empty {name} list")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::PlanRejected(format!(
            "{name} list must be strictly ascending"
        )));
    }
    Ok(())
}

/// Probes for a given S mean: S interval from the relative half-width, Q at
/// the largest mean the safety condition admits.
pub fn probe_set(nbar_s: f64, rel_halfwidth: f64) -> Result<Vec<ThermalProbe>> {
    let h = rel_halfwidth.max(0.0);
    let s = ThermalProbe::new(
        ProbeRole::S,
        nbar_s,
        nbar_s * (1.0 - h).max(0.0),
        nbar_s * (1.0 + h),
    )?;
    let q = ThermalProbe::exact(ProbeRole::Q, estimation::plan_probes(&s)?.max_nbar_q_hi)?;
    Ok(vec![ThermalProbe::vacuum(), q, s])
}

fn run_sweep(
    parameter: &str,
    values: &[f64],
    plan_for: impl Fn(f64) -> Result<ExperimentPlan> + Sync,
) -> Result<SweepResult> {
    check_ascending(parameter, values)?;
    let points: Vec<Result<SweepPoint>> = values
        .par_iter()
        .enumerate()
        .map(|(i, &param)| {
            let plan = plan_for(param)?;
            let record = run_indexed(&plan, i as u32)?;
            Ok(SweepPoint { param, record })
        })
        .collect();
    Ok(SweepResult {
        parameter: parameter.to_string(),
        points: points.into_iter().collect::<Result<_>>()?,
    })
}

/// One experiment per S-probe mean, no background noise.
pub fn sweep_nbar(
    detector: &Detector,
    nbar_list: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    run_sweep("nbar_s", nbar_list, |nbar_s| {
        Ok(ExperimentPlan {
            detector: detector.clone(),
            probes: probe_set(nbar_s, cfg.nbar_s_rel_halfwidth)?,
            noise_mu: 0.0,
            n_pulses: cfg.n_pulses,
            seed: cfg.seed,
            mode: cfg.mode,
            k_sigma: cfg.k_sigma,
        })
    })
}

/// Fixed S-probe mean, growing Poissonian background.
pub fn sweep_noise(
    detector: &Detector,
    nbar_s: f64,
    mu_list: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let probes = probe_set(nbar_s, cfg.nbar_s_rel_halfwidth)?;
    run_sweep("noise_mu", mu_list, |mu| {
        Ok(ExperimentPlan {
            detector: detector.clone(),
            probes: probes.clone(),
            noise_mu: mu,
            n_pulses: cfg.n_pulses,
            seed: cfg.seed,
            mode: cfg.mode,
            k_sigma: cfg.k_sigma,
        })
    })
}

fn exact_record(detector: &Detector, nbar_s: f64, mu: f64) -> Result<CertificationRecord> {
    run_experiment(&ExperimentPlan {
        detector: detector.clone(),
        probes: probe_set(nbar_s, 0.0)?,
        noise_mu: mu,
        n_pulses: DEFAULT_PULSES,
        seed: 0,
        mode: SamplingMode::Exact,
        k_sigma: 0.0,
    })
}

/// Background level `mu*` at which the exact-mode non-Gaussianity margin
/// changes sign, searched on `(0, mu_max]`.
pub fn noise_threshold(detector: &Detector, nbar_s: f64, mu_max: f64, tol: f64) -> Result<f64> {
    let margin = |mu: f64| {
        exact_record(detector, nbar_s, mu)
            .map(|r| r.margins.qng)
            .unwrap_or(f64::NAN)
    };
    crate::criterion::bisect(margin, 0.0, mu_max, tol)
}

/// S-probe mean at which the exact-mode Wigner witness crosses one half.
pub fn wigner_crossing(detector: &Detector, nbar_lo: f64, nbar_hi: f64, tol: f64) -> Result<f64> {
    let excess = |n: f64| {
        exact_record(detector, n, 0.0)
            .map(|r| r.wigner.value - WIGNER_THRESHOLD)
            .unwrap_or(f64::NAN)
    };
    crate::criterion::bisect(excess, nbar_lo, nbar_hi, tol)
}

/// `count` points log-spaced over `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == count - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}
