//! Spatially multiplexed photon-number-resolving detector (PNRD) and its
//! inversion.
//!
//! Light is split 1-to-M; each channel ends in a click detector. A shot is
//! summarized by the number `D` of channels that clicked, so a run yields an
//! `M + 1` bin coincidence histogram. The photon-number statistics are
//! recovered by expectation-maximization with an entropy penalty (EME).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ProbeRole, ThermalProbe};
use crate::fock::{ln_factorials, PhotonNumberDistribution};
use crate::rng;
use crate::sum::compensated_sum;
use crate::text;

/// Default reconstruction cutoff.
pub const DEFAULT_N_MAX: usize = 30;

const CALIBRATION_DOMAIN: u8 = 0xCA;
const HISTOGRAM_DOMAIN: u8 = 0x4B;

/// Conditional probabilities `P(D | n)` of the multiplexed detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplexResponse {
    efficiencies: Vec<f64>,
    weights: Vec<f64>,
    dark: Vec<f64>,
    n_max: usize,
    /// `matrix[d][n]`, `d = 0..=M`, `n = 0..=n_max`.
    matrix: Vec<Vec<f64>>,
}

/// Response of a splitter with the given per-channel efficiencies and
/// splitting weights, tabulated for `n = 0..=n_max`.
pub fn build_response(
    efficiencies: &[f64],
    weights: &[f64],
    n_max: usize,
) -> Result<MultiplexResponse> {
    MultiplexResponse::new(
        efficiencies.to_vec(),
        weights.to_vec(),
        vec![0.0; efficiencies.len()],
        n_max,
    )
}

impl MultiplexResponse {
    pub fn new(
        efficiencies: Vec<f64>,
        weights: Vec<f64>,
        dark: Vec<f64>,
        n_max: usize,
    ) -> Result<Self> {
        let m = efficiencies.len();
        if m == 0 || weights.len() != m || dark.len() != m {
            return Err(Error::Dimension(format!(
                "{} efficiencies, {} weights, {} dark rates",
                m,
                weights.len(),
                dark.len()
            )));
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if let Some(e) = efficiencies.iter().find(|e| !unit(e)) {
            return Err(Error::domain("channel efficiency", *e, "[0, 1]"));
        }
        if let Some(w) = weights.iter().find(|w| !unit(w)) {
            return Err(Error::domain("splitting weight", *w, "[0, 1]"));
        }
        if let Some(d) = dark.iter().find(|d| !unit(d)) {
            return Err(Error::domain("channel dark probability", *d, "[0, 1]"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(
                "sum of splitting weights",
                total,
                "1 within 1e-9",
            ));
        }
        let mut r = Self {
            efficiencies,
            weights,
            dark,
            n_max,
            matrix: Vec::new(),
        };
        let columns: Vec<Vec<f64>> = (0..=n_max).map(|n| r.column(n)).collect();
        r.matrix = (0..=m)
            .map(|d| columns.iter().map(|c| c[d]).collect())
            .collect();
        Ok(r)
    }

    /// Equal weights and a common channel efficiency.
    pub fn balanced(channels: usize, efficiency: f64, n_max: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Dimension("at least one channel".into()));
        }
        build_response(
            &vec![efficiency; channels],
            &vec![1.0 / channels as f64; channels],
            n_max,
        )
    }

    pub fn with_dark_counts(&self, dark: Vec<f64>) -> Result<Self> {
        Self::new(
            self.efficiencies.clone(),
            self.weights.clone(),
            dark,
            self.n_max,
        )
    }

    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        Self::new(
            self.efficiencies.clone(),
            self.weights.clone(),
            self.dark.clone(),
            n_max,
        )
    }

    pub fn channels(&self) -> usize {
        self.efficiencies.len()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    /// Probability that a single photon is detected somewhere.
    pub fn total_efficiency(&self) -> f64 {
        compensated_sum(
            self.weights
                .iter()
                .zip(&self.efficiencies)
                .map(|(w, e)| w * e),
        )
    }

    /// Unit-efficiency response with weights `w_i eta_i / eta_total`. Since
    /// loss commutes with the splitter, it maps the loss-transformed input to
    /// the same histogram as `self` maps the original input.
    pub fn lossless_equivalent(&self) -> Result<Self> {
        let eta = self.total_efficiency();
        if !(eta > 0.0) {
            return Err(Error::domain("total efficiency", eta, "> 0"));
        }
        let weights = self
            .weights
            .iter()
            .zip(&self.efficiencies)
            .map(|(w, e)| w * e / eta)
            .collect();
        Self::new(
            vec![1.0; self.channels()],
            weights,
            self.dark.clone(),
            self.n_max,
        )
    }

    /// `P(D | n)` for `D = 0..=M`. Photons are routed channel by channel:
    /// given `r` photons not yet placed, channel `i` receives a binomial
    /// share with its conditional detection probability.
    pub fn column(&self, n: usize) -> Vec<f64> {
        let m = self.channels();
        let detect: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.efficiencies)
            .map(|(w, e)| w * e)
            .collect();
        let loss = (1.0 - detect.iter().sum::<f64>()).max(0.0);
        let ln_fact = ln_factorials(n);
        // state[r][d]: r photons still unplaced, d channels clicked so far
        let mut state = vec![vec![0.0; m + 1]; n + 1];
        state[n][0] = 1.0;
        let mut remaining_mass = loss + detect.iter().sum::<f64>();
        for (i, &p_i) in detect.iter().enumerate() {
            let cond = if remaining_mass > 0.0 {
                (p_i / remaining_mass).clamp(0.0, 1.0)
            } else {
                0.0
            };
            remaining_mass -= p_i;
            let mut next = vec![vec![0.0; m + 1]; n + 1];
            for r in 0..=n {
                for d in 0..=i {
                    let w = state[r][d];
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..=r {
                        let b = binomial_pmf(&ln_fact, r, j, cond);
                        if b == 0.0 {
                            continue;
                        }
                        if j == 0 {
                            next[r][d] += w * b * (1.0 - self.dark[i]);
                            next[r][d + 1] += w * b * self.dark[i];
                        } else {
                            next[r - j][d + 1] += w * b;
                        }
                    }
                }
            }
            state = next;
        }
        (0..=m)
            .map(|d| compensated_sum((0..=n).map(|r| state[r][d])))
            .collect()
    }

    /// Bin probabilities `sum_n P(D|n) p_n`.
    pub fn probabilities(&self, d: &PhotonNumberDistribution) -> Vec<f64> {
        let m = self.channels();
        let mut out = vec![0.0; m + 1];
        for (n, &p) in d.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let col = if n <= self.n_max {
                self.matrix.iter().map(|row| row[n]).collect()
            } else {
                self.column(n)
            };
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * p;
            }
        }
        out
    }
}

fn binomial_pmf(ln_fact: &[f64], n: usize, k: usize, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_fact[n] - ln_fact[k] - ln_fact[n - k] + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln())
        .exp()
}

/// Histogram over the number of coincident clicks `D = 0..=M`, either as
/// raw counts or as exact bin probabilities with a nominal sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    bins: Vec<f64>,
    total_samples: u64,
    exact: bool,
}

impl CoincidenceHistogram {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if counts.is_empty() || total == 0 {
            return Err(Error::InvalidDistribution("histogram has no counts".into()));
        }
        Ok(Self {
            bins: counts.iter().map(|&c| c as f64).collect(),
            total_samples: total,
            exact: false,
        })
    }

    pub fn from_probabilities(probs: Vec<f64>, nominal_samples: u64) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "negative or missing bin probability".into(),
            ));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "bin probabilities sum to {total}"
            )));
        }
        Ok(Self {
            bins: probs,
            total_samples: nominal_samples,
            exact: true,
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = compensated_sum(self.bins.iter().copied());
        self.bins.iter().map(|b| b / total).collect()
    }

    /// `D,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("D,count\n");
        for (d, b) in self.bins.iter().enumerate() {
            out.push_str(&format!("{d},{}\n", text::number(*b)));
        }
        out
    }

    /// Parses `D,count` rows. Integer counts give a counts histogram;
    /// otherwise the bins are read as probabilities with `nominal_samples`.
    pub fn from_csv(text: &str, nominal_samples: u64) -> Result<Self> {
        let mut bins: Vec<(usize, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("d,count") {
                continue;
            }
            let bad = || Error::InvalidDistribution(format!("line {}: '{line}'", lineno + 1));
            let (d, c) = line.split_once(',').ok_or_else(bad)?;
            let d: usize = d.trim().parse().map_err(|_| bad())?;
            let c: f64 = c.trim().parse().map_err(|_| bad())?;
            if !(c >= 0.0) || !c.is_finite() {
                return Err(bad());
            }
            bins.push((d, c));
        }
        if bins.iter().enumerate().any(|(i, (d, _))| *d != i) {
            return Err(Error::InvalidDistribution(
                "bins must be listed as D = 0, 1, 2, ...".into(),
            ));
        }
        let values: Vec<f64> = bins.into_iter().map(|(_, c)| c).collect();
        if !values.is_empty()
            && values.iter().all(|c| c.fract() == 0.0)
            && values.iter().sum::<f64>() > 1.0
        {
            let counts: Vec<u64> = values.iter().map(|&c| c as u64).collect();
            Self::from_counts(&counts)
        } else {
            Self::from_probabilities(values, nominal_samples)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    Exact,
    Sampled,
}

pub fn simulate_histogram(
    d: &PhotonNumberDistribution,
    r: &MultiplexResponse,
    n_samples: u64,
    seed: u64,
    mode: HistogramMode,
) -> Result<CoincidenceHistogram> {
    let probs = r.probabilities(d);
    match mode {
        HistogramMode::Exact => {
            CoincidenceHistogram::from_probabilities(normalize(&probs), n_samples)
        }
        HistogramMode::Sampled => {
            let mut stream = rng::stream(seed, rng::stream_id(HISTOGRAM_DOMAIN, 0, 0));
            CoincidenceHistogram::from_counts(&rng::multinomial(&mut stream, n_samples, &probs))
        }
    }
}

fn normalize(xs: &[f64]) -> Vec<f64> {
    let t = compensated_sum(xs.iter().copied());
    xs.iter().map(|x| x / t).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmeOptions {
    /// Entropy-regularization strength.
    pub lambda: f64,
    /// Stop when the relative change of the log-likelihood drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record the log-likelihood after every iteration.
    pub track_likelihood: bool,
    /// Starting point; uniform over `0..=n_max` when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for EmeOptions {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            tolerance: 1e-10,
            max_iterations: 100_000,
            track_likelihood: false,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmeReconstruction {
    pub distribution: PhotonNumberDistribution,
    pub iterations: usize,
    /// `sum_D f_D ln (A p)_D` at the returned iterate.
    pub log_likelihood: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub likelihood_trace: Vec<f64>,
}

fn log_likelihood(freq: &[f64], forward: &[f64]) -> f64 {
    compensated_sum(
        freq.iter()
            .zip(forward)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, a)| f * a.ln()),
    )
}

fn forward(matrix: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    matrix
        .iter()
        .map(|row| row.iter().zip(p).map(|(a, x)| a * x).sum())
        .collect()
}

/// EME reconstruction of the input photon statistics of `r`.
///
/// Each iteration applies
/// `p_n <- p_n [ sum_D f_D A_Dn / (A p)_D - lambda (ln p_n - sum_m p_m ln p_m) ]`,
/// the EM step followed by the normalization-preserving entropy gradient.
pub fn eme_reconstruct(
    h: &CoincidenceHistogram,
    r: &MultiplexResponse,
    options: &EmeOptions,
) -> Result<EmeReconstruction> {
    let freq = h.frequencies();
    if freq.len() != r.channels() + 1 {
        return Err(Error::Dimension(format!(
            "histogram has {} bins, response has {} channels",
            freq.len(),
            r.channels()
        )));
    }
    let size = r.n_max() + 1;
    let matrix = r.matrix();
    let mut p = match &options.initial {
        Some(init) => {
            let mut v = init.clone();
            v.resize(size, 0.0);
            normalize(&v)
        }
        None => vec![1.0 / size as f64; size],
    };
    let mut ax = forward(matrix, &p);
    let mut ll = log_likelihood(&freq, &ax);
    if !ll.is_finite() {
        return Err(Error::InvalidDistribution(
            "starting point gives zero probability to an observed bin".into(),
        ));
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut best = (ll, p.clone());
    while iterations < options.max_iterations {
        iterations += 1;
        let ratio: Vec<f64> = freq
            .iter()
            .zip(&ax)
            .map(|(f, a)| if *f > 0.0 && *a > 0.0 { f / a } else { 0.0 })
            .collect();
        let mean_ln = if options.lambda > 0.0 {
            compensated_sum(p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()))
        } else {
            0.0
        };
        let next: Vec<f64> = (0..size)
            .map(|n| {
                if p[n] == 0.0 {
                    return 0.0;
                }
                let em: f64 = (0..freq.len()).map(|d| ratio[d] * matrix[d][n]).sum();
                let entropy = if options.lambda > 0.0 {
                    options.lambda * (p[n].ln() - mean_ln)
                } else {
                    0.0
                };
                (p[n] * (em - entropy)).max(0.0)
            })
            .collect();
        p = normalize(&next);
        ax = forward(matrix, &p);
        let new_ll = log_likelihood(&freq, &ax);
        if options.track_likelihood {
            trace.push(new_ll);
        }
        if new_ll > best.0 || options.lambda > 0.0 {
            best = (new_ll, p.clone());
        }
        let change = (new_ll - ll).abs();
        ll = new_ll;
        if change == 0.0 || change <= options.tolerance * ll.abs() {
            converged = true;
            break;
        }
    }
    let (ll, p) = if converged { (ll, p) } else { best };
    let warning = (!converged)
        .then(|| format!("EME stopped after {iterations} iterations without reaching tolerance"));
    Ok(EmeReconstruction {
        distribution: PhotonNumberDistribution::new(p, 0.0)?,
        iterations,
        log_likelihood: ll,
        converged,
        warning,
        likelihood_trace: trace,
    })
}

/// Classical fidelity `(sum_n sqrt(a_n b_n))^2` of two diagonal states.
pub fn fidelity(a: &PhotonNumberDistribution, b: &PhotonNumberDistribution) -> f64 {
    let n = a.cutoff().max(b.cutoff());
    let overlap = compensated_sum((0..=n).map(|k| (a.get(k) * b.get(k)).sqrt()));
    (overlap * overlap).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub eme: EmeOptions,
    pub resamples: u32,
    /// Two-sided coverage of the percentile interval.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            eme: EmeOptions::default(),
            resamples: 100,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub probe: ThermalProbe,
    /// Statistics of the detected (loss-transformed) light.
    pub reconstruction: EmeReconstruction,
    pub total_efficiency: f64,
}

/// Mean photon number of the probe at the PNRD input.
///
/// Reconstructs the detected statistics through the lossless-equivalent
/// response, divides the mean by the total efficiency, and bounds it with a
/// percentile bootstrap over multinomially resampled histograms.
pub fn calibrate_nbar(
    h: &CoincidenceHistogram,
    r: &MultiplexResponse,
    role: ProbeRole,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    if !(options.confidence > 0.0 && options.confidence < 1.0) {
        return Err(Error::domain("confidence", options.confidence, "(0, 1)"));
    }
    let eta = r.total_efficiency();
    let detected = r.lossless_equivalent()?;
    let reconstruction = eme_reconstruct(h, &detected, &options.eme)?;
    let nbar = reconstruction.distribution.mean_photon().value / eta;
    let freq = h.frequencies();
    let (mut lo, mut hi) = (nbar, nbar);
    if options.resamples > 0 && h.total_samples() > 0 {
        let warm = EmeOptions {
            initial: Some(reconstruction.distribution.probs().to_vec()),
            track_likelihood: false,
            ..options.eme.clone()
        };
        let draws: Vec<Result<f64>> = (0..options.resamples)
            .into_par_iter()
            .map(|b| {
                let mut stream =
                    rng::stream(options.seed, rng::stream_id(CALIBRATION_DOMAIN, b, 0));
                let counts = rng::multinomial(&mut stream, h.total_samples(), &freq);
                let resampled = CoincidenceHistogram::from_counts(&counts)?;
                let rec = eme_reconstruct(&resampled, &detected, &warm)?;
                Ok(rec.distribution.mean_photon().value / eta)
            })
            .collect();
        let mut means = draws.into_iter().collect::<Result<Vec<f64>>>()?;
        means.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - options.confidence);
        lo = percentile(&means, tail).min(nbar);
        hi = percentile(&means, 1.0 - tail).max(nbar);
    }
    let probe = if role == ProbeRole::Vacuum {
        ThermalProbe::vacuum()
    } else {
        ThermalProbe::new(role, nbar, lo.max(0.0), hi)?
    };
    Ok(Calibration {
        probe,
        reconstruction,
        total_efficiency: eta,
    })
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}
