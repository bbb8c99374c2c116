//! Photon-number-space numerics.
//!
//! Every distribution is held as a finite vector of probabilities together
//! with a certified upper bound on the probability mass beyond the cutoff.
//! The library constructors pick the cutoff so that this bound is at most
//! [`DEFAULT_TAIL_TOLERANCE`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{compensated_sum, CompensatedSum};

/// Target for the truncated mass of constructed distributions.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Hard ceiling on the cutoff photon number.
pub const MAX_CUTOFF: usize = 4096;

/// Allowed slack on `sum(probs) + tail_bound = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffPolicy {
    pub tail_tolerance: f64,
    /// Smallest cutoff to use even when the tail is already below tolerance.
    pub min_cutoff: usize,
    pub max_cutoff: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self {
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            min_cutoff: 0,
            max_cutoff: MAX_CUTOFF,
        }
    }
}

impl CutoffPolicy {
    pub fn with_min_cutoff(min_cutoff: usize) -> Self {
        Self {
            min_cutoff,
            ..Self::default()
        }
    }
}

/// A value together with an upper bound on its absolute truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedValue {
    pub value: f64,
    pub error_bound: f64,
}

/// Truncated photon-number distribution `p_n`, `n = 0..=cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
    tail_bound: f64,
    /// Upper bound on `sum_{n > cutoff} n p_n`, when known.
    tail_mean_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    probs: Vec<f64>,
    tail_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail_mean_bound: Option<f64>,
}

impl TryFrom<DistributionRepr> for PhotonNumberDistribution {
    type Error = Error;

    fn try_from(repr: DistributionRepr) -> Result<Self> {
        let mut d = Self::new(repr.probs, repr.tail_bound)?;
        if repr.tail_mean_bound.is_some() {
            d.tail_mean_bound = repr.tail_mean_bound;
        }
        Ok(d)
    }
}

impl From<PhotonNumberDistribution> for DistributionRepr {
    fn from(d: PhotonNumberDistribution) -> Self {
        let explicit = if d.tail_bound == 0.0 && d.tail_mean_bound == Some(0.0) {
            None
        } else {
            d.tail_mean_bound
        };
        Self {
            probs: d.probs,
            tail_bound: d.tail_bound,
            tail_mean_bound: explicit,
        }
    }
}

impl PhotonNumberDistribution {
    /// Validates a user-supplied distribution. The first moment of the
    /// tail is unknown unless `tail_bound` is zero.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution(
                "empty probability vector".into(),
            ));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!("p_{n} = {p}")));
        }
        if !tail_bound.is_finite() || tail_bound < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "tail bound {tail_bound}"
            )));
        }
        let total = compensated_sum(probs.iter().copied()) + tail_bound;
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities plus tail sum to {total}"
            )));
        }
        let tail_mean_bound = (tail_bound == 0.0).then_some(0.0);
        Ok(Self {
            probs,
            tail_bound,
            tail_mean_bound,
        })
    }

    /// Normalizes non-negative weights into a distribution with no tail.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = compensated_sum(weights.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Self::new(weights.iter().map(|w| w / total).collect(), 0.0)
    }

    pub fn vacuum() -> Self {
        Self::fock(0)
    }

    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self {
            probs,
            tail_bound: 0.0,
            tail_mean_bound: Some(0.0),
        }
    }

    /// Bose-Einstein distribution with mean `nbar`.
    pub fn thermal(nbar: f64, policy: CutoffPolicy) -> Result<Self> {
        if !nbar.is_finite() || nbar < 0.0 {
            return Err(Error::domain("nbar", nbar, "finite and >= 0"));
        }
        if nbar == 0.0 {
            return Ok(padded_vacuum(policy.min_cutoff));
        }
        let ratio = nbar / (nbar + 1.0);
        // tail beyond N is ratio^(N+1)
        let needed = (policy.tail_tolerance.ln() / ratio.ln()).ceil().max(1.0) - 1.0;
        if needed > policy.max_cutoff as f64 {
            return Err(Error::TruncationUnreachable {
                tolerance: policy.tail_tolerance,
                ceiling: policy.max_cutoff,
            });
        }
        let cutoff = (needed as usize).max(policy.min_cutoff);
        let head = 1.0 / (nbar + 1.0);
        let probs: Vec<f64> = (0..=cutoff).map(|n| head * ratio.powi(n as i32)).collect();
        let m = (cutoff + 1) as f64;
        let tail_bound = ratio.powi(cutoff as i32 + 1);
        let tail_mean_bound = tail_bound * (m + nbar);
        Ok(Self {
            probs,
            tail_bound,
            tail_mean_bound: Some(tail_mean_bound),
        })
    }

    /// Poisson distribution with mean `mu`.
    pub fn poisson(mu: f64, policy: CutoffPolicy) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::domain("mu", mu, "finite and >= 0"));
        }
        if mu == 0.0 {
            return Ok(padded_vacuum(policy.min_cutoff));
        }
        let ln_mu = mu.ln();
        let mut ln_fact = 0.0;
        let mut probs = Vec::new();
        let mut n = 0usize;
        loop {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let p = (n as f64 * ln_mu - mu - ln_fact).exp();
            probs.push(p);
            // ratio bound: sum_{k > n} p_k <= p_{n+1} / (1 - mu/(n+2)) once n + 2 > mu
            let next = p * mu / (n as f64 + 1.0);
            let shrink = mu / (n as f64 + 2.0);
            if n >= policy.min_cutoff && shrink < 1.0 {
                let bound = next / (1.0 - shrink);
                if bound <= policy.tail_tolerance {
                    let tail_mean_bound = mu * (p + bound);
                    return Ok(Self {
                        probs,
                        tail_bound: bound,
                        tail_mean_bound: Some(tail_mean_bound),
                    });
                }
            }
            n += 1;
            if n > policy.max_cutoff {
                return Err(Error::TruncationUnreachable {
                    tolerance: policy.tail_tolerance,
                    ceiling: policy.max_cutoff,
                });
            }
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p_n`, zero beyond the cutoff.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tail_mean_bound(&self) -> Option<f64> {
        self.tail_mean_bound
    }

    pub fn with_tail_mean_bound(mut self, bound: f64) -> Self {
        self.tail_mean_bound = Some(bound);
        self
    }

    /// Retained probability mass.
    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// Exact discrete convolution, the photon statistics of two
    /// incoherently superimposed fields.
    pub fn convolve(&self, other: &Self) -> Self {
        let len = self.probs.len() + other.probs.len() - 1;
        let mut acc = vec![CompensatedSum::new(); len];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                acc[i + j].add(a * b);
            }
        }
        let probs = acc.iter().map(CompensatedSum::value).collect();
        // Missing mass: pairs where either factor lies beyond its cutoff.
        let tail_mean_bound = match (self.tail_mean_bound, other.tail_mean_bound) {
            (Some(ta), Some(tb)) => {
                let mean_a = self.mean_photon().value + ta;
                let mean_b = other.mean_photon().value + tb;
                Some(ta + tb + mean_a * other.tail_bound + mean_b * self.tail_bound)
            }
            _ => None,
        };
        Self {
            probs,
            tail_bound: self.tail_bound + other.tail_bound,
            tail_mean_bound,
        }
    }

    /// Binomial smearing through a lossy channel of intensity
    /// transmittance `t`.
    pub fn apply_loss(&self, t: TransmittanceFactor) -> Self {
        let t = t.intensity();
        if t == 1.0 {
            return self.clone();
        }
        let cutoff = self.cutoff();
        let mut acc = vec![CompensatedSum::new(); cutoff + 1];
        if t == 0.0 {
            acc[0] = self.probs.iter().copied().collect();
        } else {
            let ln_t = t.ln();
            let ln_r = (1.0 - t).ln();
            let ln_fact = ln_factorials(cutoff);
            for (n, &p) in self.probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (k, slot) in acc.iter_mut().enumerate().take(n + 1) {
                    let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
                    let w = (ln_binom + k as f64 * ln_t + (n - k) as f64 * ln_r).exp();
                    slot.add(w * p);
                }
            }
        }
        Self {
            probs: acc.iter().map(CompensatedSum::value).collect(),
            tail_bound: self.tail_bound,
            tail_mean_bound: self.tail_mean_bound.map(|m| t * m),
        }
    }

    /// `q0 = sum_n p_n / 2^n`, the vacuum probability behind a balanced
    /// beam splitter.
    pub fn vacuum_after_half_loss(&self) -> CertifiedValue {
        let value = compensated_sum(
            self.probs
                .iter()
                .enumerate()
                .map(|(n, p)| p * 0.5f64.powi(n as i32)),
        );
        CertifiedValue {
            value,
            error_bound: self.tail_bound * 0.5f64.powi(self.probs.len() as i32),
        }
    }

    /// Mean photon number of the retained part; the error bound is the tail
    /// moment bound (infinite when unknown).
    pub fn mean_photon(&self) -> CertifiedValue {
        let value = compensated_sum(self.probs.iter().enumerate().map(|(n, p)| n as f64 * p));
        CertifiedValue {
            value,
            error_bound: self.tail_mean_bound.unwrap_or(f64::INFINITY),
        }
    }
}

fn padded_vacuum(min_cutoff: usize) -> PhotonNumberDistribution {
    let mut probs = vec![0.0; min_cutoff + 1];
    probs[0] = 1.0;
    PhotonNumberDistribution {
        probs,
        tail_bound: 0.0,
        tail_mean_bound: Some(0.0),
    }
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Intensity,
    Amplitude,
}

/// Transmittance of a passive or noiseless attenuator, tagged by whether
/// `value` is an intensity `T` or an amplitude `nu` (`T = nu^2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceFactor {
    value: f64,
    kind: FactorKind,
}

impl TransmittanceFactor {
    pub fn intensity_factor(t: f64) -> Result<Self> {
        Self::new(t, FactorKind::Intensity)
    }

    pub fn amplitude_factor(nu: f64) -> Result<Self> {
        Self::new(nu, FactorKind::Amplitude)
    }

    /// Amplitude factor whose square is `nbar / (nbar + 1)`, matching a
    /// thermal probe of mean `nbar`.
    pub fn amplitude_for_thermal(nbar: f64) -> Result<Self> {
        if !nbar.is_finite() || nbar < 0.0 {
            return Err(Error::domain("nbar", nbar, "finite and >= 0"));
        }
        Self::amplitude_factor((nbar / (nbar + 1.0)).sqrt())
    }

    fn new(value: f64, kind: FactorKind) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::domain("transmittance", value, "[0, 1]"));
        }
        Ok(Self { value, kind })
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Intensity transmittance `T`.
    pub fn intensity(&self) -> f64 {
        match self.kind {
            FactorKind::Intensity => self.value,
            FactorKind::Amplitude => self.value * self.value,
        }
    }

    /// Amplitude transmittance `nu`.
    pub fn amplitude(&self) -> f64 {
        match self.kind {
            FactorKind::Intensity => self.value.sqrt(),
            FactorKind::Amplitude => self.value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn th(nbar: f64) -> PhotonNumberDistribution {
        PhotonNumberDistribution::thermal(nbar, CutoffPolicy::default()).unwrap()
    }

    fn poi(mu: f64) -> PhotonNumberDistribution {
        PhotonNumberDistribution::poisson(mu, CutoffPolicy::default()).unwrap()
    }

    fn t(x: f64) -> TransmittanceFactor {
        TransmittanceFactor::intensity_factor(x).unwrap()
    }

    fn assert_normalized(d: &PhotonNumberDistribution) {
        let total = d.total() + d.tail_bound();
        assert!(
            (total - 1.0).abs() <= NORMALIZATION_TOLERANCE,
            "total {total}"
        );
    }

    #[test]
    fn thermal_examples() {
        let v = th(0.0);
        assert_eq!(v.probs(), &[1.0]);
        let d = th(1.0);
        assert_eq!(d.get(0), 0.5);
        assert_eq!(d.get(1), 0.25);
        assert_eq!(d.get(2), 0.125);
        assert!(d.tail_bound() <= DEFAULT_TAIL_TOLERANCE);
        // direct sum of p_n 2^-n against 2 / (nbar + 2)
        let q0: f64 = (0..200).map(|n| 0.5f64.powi(n + 1) * 0.5f64.powi(n)).sum();
        assert_abs_diff_eq!(q0, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.vacuum_after_half_loss().value, q0, epsilon = 1e-12);
        assert_normalized(&d);
    }

    #[test]
    fn thermal_rejects_bad_mean() {
        assert!(matches!(
            PhotonNumberDistribution::thermal(-0.1, CutoffPolicy::default()),
            Err(Error::Domain { .. })
        ));
        assert!(PhotonNumberDistribution::thermal(f64::NAN, CutoffPolicy::default()).is_err());
        assert!(matches!(
            PhotonNumberDistribution::thermal(1e4, CutoffPolicy::default()),
            Err(Error::TruncationUnreachable { .. })
        ));
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poi(0.0).probs(), &[1.0]);
        let d = poi(1.0);
        assert_abs_diff_eq!(d.get(0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(0), 0.367879, epsilon = 1e-6);
        assert!(d.tail_bound() <= DEFAULT_TAIL_TOLERANCE);
        let m = d.mean_photon();
        assert!((m.value - 1.0).abs() <= m.error_bound + 1e-12);
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-9);
        assert!(PhotonNumberDistribution::poisson(-1.0, CutoffPolicy::default()).is_err());
    }

    #[test]
    fn convolution_examples() {
        let x = th(1.3);
        let c = x.convolve(&PhotonNumberDistribution::vacuum());
        assert_eq!(c.probs(), x.probs());

        let ab = poi(0.7).convolve(&poi(1.9));
        let direct = poi(2.6);
        for n in 0..60 {
            assert_abs_diff_eq!(ab.get(n), direct.get(n), epsilon = 1e-12);
        }
        assert!(ab.tail_bound() <= 2.0 * DEFAULT_TAIL_TOLERANCE);

        let mixed = th(1.0).convolve(&poi(1.0));
        assert_abs_diff_eq!(mixed.get(0), 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(mixed.get(0), 0.183940, epsilon = 1e-6);
        assert_normalized(&mixed);
    }

    #[test]
    fn loss_examples() {
        let d = th(2.0);
        assert_eq!(d.apply_loss(t(1.0)), d);
        let halved = d.apply_loss(t(0.5));
        let target = th(1.0);
        for n in 0..=d.cutoff() {
            assert_abs_diff_eq!(halved.get(n), target.get(n), epsilon = 1e-10);
        }
        let dark = d.apply_loss(t(0.0));
        assert_abs_diff_eq!(dark.get(0), 1.0, epsilon = 1e-11);
        assert!(dark.probs()[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn loss_matches_thermal_family() {
        for nbar in [0.1, 1.0, 5.0] {
            for tr in [0.25, 0.5, 0.9] {
                let lossy = th(nbar).apply_loss(t(tr));
                let target = th(tr * nbar);
                let n = lossy.cutoff().max(target.cutoff());
                for k in 0..=n {
                    assert_abs_diff_eq!(lossy.get(k), target.get(k), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn half_loss_vacuum_examples() {
        assert_eq!(
            PhotonNumberDistribution::vacuum()
                .vacuum_after_half_loss()
                .value,
            1.0
        );
        assert_eq!(
            PhotonNumberDistribution::fock(1)
                .vacuum_after_half_loss()
                .value,
            0.5
        );
    }

    #[test]
    fn mean_examples() {
        assert_eq!(PhotonNumberDistribution::vacuum().mean_photon().value, 0.0);
        let m = th(1.0).mean_photon();
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-9);
        assert!((m.value - 1.0).abs() <= m.error_bound + 1e-14);
        assert_abs_diff_eq!(poi(2.5).mean_photon().value, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn min_cutoff_pads() {
        let d = PhotonNumberDistribution::thermal(0.0, CutoffPolicy::with_min_cutoff(30)).unwrap();
        assert_eq!(d.cutoff(), 30);
        let d = PhotonNumberDistribution::thermal(0.01, CutoffPolicy::with_min_cutoff(30)).unwrap();
        assert_eq!(d.cutoff(), 30);
    }

    #[test]
    fn new_validates() {
        assert!(PhotonNumberDistribution::new(vec![0.5, 0.6], 0.0).is_err());
        assert!(PhotonNumberDistribution::new(vec![1.2, -0.2], 0.0).is_err());
        assert!(PhotonNumberDistribution::new(vec![], 0.0).is_err());
        assert!(PhotonNumberDistribution::new(vec![0.5, 0.5 - 1e-3], 1e-3).is_ok());
    }

    #[test]
    fn transmittance_squares_once() {
        let a = TransmittanceFactor::amplitude_factor(0.5).unwrap();
        assert_eq!(a.intensity(), 0.25);
        assert_eq!(a.amplitude(), 0.5);
        let i = TransmittanceFactor::intensity_factor(0.25).unwrap();
        assert_eq!(i.amplitude(), 0.5);
        assert_eq!(i.intensity(), 0.25);
        assert!(TransmittanceFactor::intensity_factor(1.1).is_err());
        assert!(TransmittanceFactor::amplitude_factor(-0.1).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        for d in [th(0.37), poi(3.3), th(1.0).convolve(&poi(0.2))] {
            let s = serde_json::to_string(&d).unwrap();
            assert!(s.starts_with("{\"probs\":["));
            let back: PhotonNumberDistribution = serde_json::from_str(&s).unwrap();
            assert_eq!(back, d);
        }
        let plain: PhotonNumberDistribution =
            serde_json::from_str(r#"{"probs": [0.25, 0.75], "tail_bound": 0}"#).unwrap();
        assert_eq!(plain.get(1), 0.75);
        assert_eq!(
            serde_json::to_string(&plain).unwrap(),
            r#"{"probs":[0.25,0.75],"tail_bound":0.0}"#
        );
        assert!(serde_json::from_str::<PhotonNumberDistribution>(
            r#"{"probs": [0.2], "tail_bound": 0}"#
        )
        .is_err());
    }
}
