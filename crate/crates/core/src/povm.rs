//! Photon-number-diagonal POVM elements.
//!
//! An element is stored as explicit click probabilities `pi_n` up to a
//! cutoff plus an analytic tail, so that geometric sums such as the trace of
//! the regularized element `W Pi W^dagger` are exact rather than truncated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CertifiedValue, CutoffPolicy, PhotonNumberDistribution, TransmittanceFactor};
use crate::sum::compensated_sum;

/// Closed form of `pi_n` beyond the explicit entries, before attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailShape {
    /// `pi_n = value`.
    Constant { value: f64 },
    /// `pi_n = 1 - scale * base^n`, the SPAD-like approach to certain click.
    GeometricToOne { scale: f64, base: f64 },
}

impl TailShape {
    fn at(&self, n: usize) -> f64 {
        match *self {
            TailShape::Constant { value } => value,
            TailShape::GeometricToOne { scale, base } => 1.0 - scale * base.powi(n as i32),
        }
    }
}

/// Tail descriptor: for `n > cutoff`, `pi_n = attenuation^n * shape(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmTail {
    #[serde(flatten)]
    pub shape: TailShape,
    #[serde(default = "unit", skip_serializing_if = "is_unit")]
    pub attenuation: f64,
}

fn unit() -> f64 {
    1.0
}

fn is_unit(x: &f64) -> bool {
    *x == 1.0
}

impl PovmTail {
    pub fn constant(value: f64) -> Self {
        Self {
            shape: TailShape::Constant { value },
            attenuation: 1.0,
        }
    }

    fn at(&self, n: usize) -> f64 {
        self.attenuation.powi(n as i32) * self.shape.at(n)
    }

    /// `sum_{n >= from} x^n pi_n` in closed form.
    fn weighted_sum_from(&self, x: f64, from: usize) -> Result<f64> {
        let y = x * self.attenuation;
        let geometric = |ratio: f64, coef: f64| -> Result<f64> {
            if coef == 0.0 || ratio == 0.0 {
                Ok(0.0)
            } else if ratio >= 1.0 {
                Err(Error::Divergent { nu_squared: x })
            } else {
                Ok(coef * ratio.powi(from as i32) / (1.0 - ratio))
            }
        };
        match self.shape {
            TailShape::Constant { value } => geometric(y, value),
            TailShape::GeometricToOne { scale, base } => {
                Ok(geometric(y, 1.0)? - geometric(y * base, scale)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PovmRepr", into = "PovmRepr")]
pub struct DiagonalPovmElement {
    pis: Vec<f64>,
    tail: PovmTail,
}

#[derive(Serialize, Deserialize)]
struct PovmRepr {
    pis: Vec<f64>,
    tail: PovmTail,
}

impl TryFrom<PovmRepr> for DiagonalPovmElement {
    type Error = Error;

    fn try_from(r: PovmRepr) -> Result<Self> {
        Self::with_tail(r.pis, r.tail)
    }
}

impl From<DiagonalPovmElement> for PovmRepr {
    fn from(p: DiagonalPovmElement) -> Self {
        Self {
            pis: p.pis,
            tail: p.tail,
        }
    }
}

impl DiagonalPovmElement {
    /// User-supplied element with a constant tail `pi_n = tail_value` for
    /// `n > cutoff`.
    pub fn new(pis: Vec<f64>, tail_value: f64) -> Result<Self> {
        Self::with_tail(pis, PovmTail::constant(tail_value))
    }

    pub fn with_tail(pis: Vec<f64>, tail: PovmTail) -> Result<Self> {
        if pis.is_empty() {
            return Err(Error::InvalidPovm("no explicit entries".into()));
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Some((n, p)) = pis.iter().enumerate().find(|(_, p)| !in_unit(**p)) {
            return Err(Error::InvalidPovm(format!("pi_{n} = {p}")));
        }
        let shape_ok = match tail.shape {
            TailShape::Constant { value } => in_unit(value),
            TailShape::GeometricToOne { scale, base } => in_unit(scale) && in_unit(base),
        };
        if !shape_ok || !in_unit(tail.attenuation) {
            return Err(Error::InvalidPovm(format!("tail {tail:?}")));
        }
        Ok(Self { pis, tail })
    }

    /// `Pi = I`: the detector always clicks.
    pub fn always_click() -> Self {
        Self {
            pis: vec![1.0],
            tail: PovmTail::constant(1.0),
        }
    }

    /// Diagonal of the coherent-state projector `|alpha><alpha|`, a Poisson
    /// distribution of mean `|alpha|^2` over `n`.
    pub fn coherent_projector_diagonal(alpha_squared: f64) -> Result<Self> {
        let d = PhotonNumberDistribution::poisson(alpha_squared, CutoffPolicy::default())?;
        Self::new(d.probs().to_vec(), 0.0)
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn tail(&self) -> &PovmTail {
        &self.tail
    }

    pub fn cutoff(&self) -> usize {
        self.pis.len() - 1
    }

    pub fn pi(&self, n: usize) -> f64 {
        match self.pis.get(n) {
            Some(&p) => p,
            None => self.tail.at(n),
        }
    }

    /// `sum_n x^n pi_n`, exact through the tail descriptor.
    pub fn geometric_sum(&self, x: f64) -> Result<f64> {
        let head = compensated_sum(
            self.pis
                .iter()
                .enumerate()
                .map(|(n, p)| x.powi(n as i32) * p),
        );
        Ok(head + self.tail.weighted_sum_from(x, self.pis.len())?)
    }

    /// The regularized element `W Pi W^dagger` with `W = sum_n nu^n |n><n|`.
    /// The result is unnormalized.
    pub fn attenuate(&self, nu: TransmittanceFactor) -> Self {
        let x = nu.intensity();
        Self {
            pis: self
                .pis
                .iter()
                .enumerate()
                .map(|(n, p)| x.powi(n as i32) * p)
                .collect(),
            tail: PovmTail {
                attenuation: self.tail.attenuation * x,
                ..self.tail
            },
        }
    }

    /// `S = Tr[W Pi W^dagger] = sum_n nu^(2n) pi_n`.
    pub fn trace_regularized(&self, nu: TransmittanceFactor) -> Result<f64> {
        self.geometric_sum(nu.intensity())
    }

    /// `Tr[rho Pi]` for a diagonal state.
    pub fn click_probability(&self, d: &PhotonNumberDistribution) -> CertifiedValue {
        let value = compensated_sum(d.probs().iter().enumerate().map(|(n, p)| self.pi(n) * p));
        CertifiedValue {
            value,
            error_bound: d.tail_bound(),
        }
    }

    /// State heralded on mode A of a two-mode squeezed vacuum with
    /// parameter `nu` when mode B yields this outcome: the normalized
    /// diagonal of `W Pi W^dagger`.
    pub fn heralded_distribution(
        &self,
        nu: TransmittanceFactor,
    ) -> Result<PhotonNumberDistribution> {
        let x = nu.intensity();
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain("nu", nu.amplitude(), "(0, 1)"));
        }
        let s = self.geometric_sum(x)?;
        if !(s > 0.0) {
            return Err(Error::NoClick);
        }
        let policy = CutoffPolicy::default();
        let y = x * self.tail.attenuation;
        let mut probs: Vec<f64> = Vec::new();
        let mut n = 0;
        loop {
            probs.push(x.powi(n as i32) * self.pi(n) / s);
            n += 1;
            if n >= self.pis.len() {
                let rest = self.tail.weighted_sum_from(x, n)? / s;
                if rest <= policy.tail_tolerance {
                    // pi_n <= attenuation^n, so the tail moment is bounded by
                    // the geometric moment of y.
                    let m = n as f64;
                    let moment =
                        y.powi(n as i32) * (m * (1.0 - y) + y) / ((1.0 - y) * (1.0 - y)) / s;
                    let d = PhotonNumberDistribution::new(probs, rest.max(0.0))?;
                    return Ok(d.with_tail_mean_bound(moment));
                }
            }
            if n > policy.max_cutoff {
                return Err(Error::TruncationUnreachable {
                    tolerance: policy.tail_tolerance,
                    ceiling: policy.max_cutoff,
                });
            }
        }
    }
}

/// Click detector with efficiency `eta` and dark-count probability `dark`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadParameters {
    eta: f64,
    dark: f64,
}

impl SpadParameters {
    pub fn new(eta: f64, dark: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain("eta", eta, "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&dark) {
            return Err(Error::domain("dark", dark, "[0, 1]"));
        }
        Ok(Self { eta, dark })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dark(&self) -> f64 {
        self.dark
    }

    /// `pi_n = 1 - (1 - dark)(1 - eta)^n`, stored exactly.
    pub fn povm(&self) -> DiagonalPovmElement {
        let scale = 1.0 - self.dark;
        let base = 1.0 - self.eta;
        DiagonalPovmElement {
            pis: vec![self.dark],
            tail: PovmTail {
                shape: TailShape::GeometricToOne { scale, base },
                attenuation: 1.0,
            },
        }
    }

    /// Click probability for a thermal probe of mean `nbar` superimposed
    /// with Poissonian noise of mean `mu`.
    pub fn click_probability_thermal_poisson(&self, nbar: f64, mu: f64) -> f64 {
        1.0 - (1.0 - self.dark) * (-self.eta * mu).exp() / (1.0 + self.eta * nbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn amp2(nu2: f64) -> TransmittanceFactor {
        TransmittanceFactor::amplitude_factor(nu2.sqrt()).unwrap()
    }

    fn th(nbar: f64) -> PhotonNumberDistribution {
        PhotonNumberDistribution::thermal(nbar, CutoffPolicy::default()).unwrap()
    }

    fn ideal() -> DiagonalPovmElement {
        SpadParameters::new(1.0, 0.0).unwrap().povm()
    }

    #[test]
    fn spad_entries() {
        let p = ideal();
        assert_eq!(p.pi(0), 0.0);
        assert!((1..50).all(|n| p.pi(n) == 1.0));
        let paper = SpadParameters::new(0.58, 1.44e-6).unwrap().povm();
        assert_eq!(paper.pi(0), 1.44e-6);
        let nodark = SpadParameters::new(0.58, 0.0).unwrap().povm();
        assert_abs_diff_eq!(nodark.pi(1), 0.58, epsilon = 1e-15);
        assert!(SpadParameters::new(1.2, 0.0).is_err());
        assert!(SpadParameters::new(0.5, 1.01).is_err());
    }

    #[test]
    fn attenuation_examples() {
        let p = ideal();
        let one = TransmittanceFactor::amplitude_factor(1.0).unwrap();
        let same = p.attenuate(one);
        assert!((0..20).all(|n| same.pi(n) == p.pi(n)));

        let half = p.attenuate(amp2(0.5));
        assert_abs_diff_eq!(half.pi(0), 0.0);
        assert_abs_diff_eq!(half.pi(1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half.pi(2), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(half.pi(3), 0.125, epsilon = 1e-15);

        let spad = SpadParameters::new(0.58, 1.44e-6).unwrap().povm();
        let nu = amp2(0.3);
        let direct: f64 = (0..400).map(|n| spad.attenuate(nu).pi(n)).sum();
        assert_abs_diff_eq!(
            spad.attenuate(nu).geometric_sum(1.0).unwrap(),
            direct,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(spad.trace_regularized(nu).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn attenuation_composes() {
        let spad = SpadParameters::new(0.3, 1e-3).unwrap().povm();
        let (a, b) = (0.8, 0.6);
        let twice = spad
            .attenuate(TransmittanceFactor::amplitude_factor(a).unwrap())
            .attenuate(TransmittanceFactor::amplitude_factor(b).unwrap());
        let once = spad.attenuate(TransmittanceFactor::amplitude_factor(a * b).unwrap());
        for n in 0..200 {
            assert_abs_diff_eq!(twice.pi(n), once.pi(n), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            twice.geometric_sum(1.0).unwrap(),
            once.geometric_sum(1.0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn trace_examples() {
        for nu2 in [0.1, 0.5, 0.9] {
            let s = ideal().trace_regularized(amp2(nu2)).unwrap();
            let oracle: f64 = (1..2000).map(|n| nu2.powi(n)).sum();
            assert_abs_diff_eq!(s, oracle, epsilon = 1e-12);
            assert_abs_diff_eq!(s, nu2 / (1.0 - nu2), epsilon = 1e-12);
        }
        let zero = DiagonalPovmElement::new(vec![0.0; 4], 0.0).unwrap();
        assert_eq!(zero.trace_regularized(amp2(0.5)).unwrap(), 0.0);
        assert_eq!(zero.trace_regularized(amp2(1.0)).unwrap(), 0.0);
        assert!(matches!(
            ideal().trace_regularized(amp2(1.0)),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn trace_from_thermal_probe() {
        for (eta, dark) in [(0.58, 1.44e-6), (0.1, 1e-2), (1.0, 0.0)] {
            let p = SpadParameters::new(eta, dark).unwrap().povm();
            for nbar_s in [0.0103, 1.0, 5.04] {
                let nu2 = nbar_s / (nbar_s + 1.0);
                let s = p.trace_regularized(amp2(nu2)).unwrap();
                let probe = p.click_probability(&th(nbar_s)).value / (1.0 - nu2);
                assert_abs_diff_eq!(s, probe, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn click_probability_examples() {
        let spad = SpadParameters::new(0.37, 4e-4).unwrap();
        let vac = spad
            .povm()
            .click_probability(&PhotonNumberDistribution::vacuum());
        assert_eq!(vac.value, 4e-4);
        assert_abs_diff_eq!(
            ideal().click_probability(&th(1.0)).value,
            0.5,
            epsilon = 1e-12
        );

        let paper = SpadParameters::new(0.58, 1.44e-6).unwrap();
        let direct = paper.povm().click_probability(&th(5.04)).value;
        let closed = 1.0 - (1.0 - 1.44e-6) / (1.0 + 0.58 * 5.04);
        assert_abs_diff_eq!(direct, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(direct, 0.745106, epsilon = 1e-6);
    }

    #[test]
    fn spad_closed_form_with_noise_matches_sums() {
        let policy = CutoffPolicy::default();
        for eta in [0.1, 0.58, 1.0] {
            for dark in [0.0, 1e-6, 1e-2] {
                let spad = SpadParameters::new(eta, dark).unwrap();
                for nbar in [0.0, 0.5, 2.0] {
                    for mu in [0.0, 0.3, 2.0] {
                        let d = PhotonNumberDistribution::thermal(nbar, policy)
                            .unwrap()
                            .convolve(&PhotonNumberDistribution::poisson(mu, policy).unwrap());
                        let sum = spad.povm().click_probability(&d).value;
                        let closed = spad.click_probability_thermal_poisson(nbar, mu);
                        assert_abs_diff_eq!(sum, closed, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn click_probability_is_monotone() {
        let spad = SpadParameters::new(0.58, 1.44e-6).unwrap().povm();
        let mut last = -1.0;
        for k in 0..40 {
            let r = spad.click_probability(&th(0.01 + 0.13 * k as f64)).value;
            assert!(r > last);
            last = r;
        }
        let mut last = -1.0;
        for k in 1..20 {
            let p = SpadParameters::new(k as f64 * 0.05, 1e-6).unwrap().povm();
            let r = p.click_probability(&th(0.8)).value;
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn heralding_examples() {
        let nu = amp2(0.5);
        let h = ideal().heralded_distribution(nu).unwrap();
        assert_abs_diff_eq!(h.get(0), 0.0);
        assert_abs_diff_eq!(h.get(1), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.get(2), 0.25, epsilon = 1e-12);
        assert!((h.total() + h.tail_bound() - 1.0).abs() < 1e-9);

        let always = DiagonalPovmElement::always_click()
            .heralded_distribution(nu)
            .unwrap();
        let target = th(0.5 / (1.0 - 0.5));
        for n in 0..60 {
            assert_abs_diff_eq!(always.get(n), target.get(n), epsilon = 1e-12);
        }

        let spad = SpadParameters::new(0.58, 1.44e-6).unwrap().povm();
        let nu = amp2(0.2);
        let h = spad.heralded_distribution(nu).unwrap();
        let s = spad.trace_regularized(nu).unwrap();
        let reg = spad.attenuate(nu);
        for n in 0..=h.cutoff() {
            assert_abs_diff_eq!(h.get(n), reg.pi(n) / s, epsilon = 1e-15);
        }

        let never = DiagonalPovmElement::new(vec![0.0], 0.0).unwrap();
        assert_eq!(never.heralded_distribution(nu), Err(Error::NoClick));
        assert!(ideal().heralded_distribution(amp2(1.0)).is_err());
    }

    #[test]
    fn validation_and_json() {
        assert!(DiagonalPovmElement::new(vec![0.2, 1.2], 1.0).is_err());
        assert!(DiagonalPovmElement::new(vec![0.2], 1.5).is_err());
        let spad = SpadParameters::new(0.58, 1.44e-6).unwrap().povm();
        let s = serde_json::to_string(&spad).unwrap();
        assert_eq!(
            s,
            r#"{"pis":[1.44e-6],"tail":{"kind":"geometric_to_one","scale":0.99999856,"base":0.42000000000000004}}"#
        );
        let back: DiagonalPovmElement = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spad);
        let reg = spad.attenuate(amp2(0.3));
        let back: DiagonalPovmElement =
            serde_json::from_str(&serde_json::to_string(&reg).unwrap()).unwrap();
        assert_eq!(back, reg);
        let user: DiagonalPovmElement =
            serde_json::from_str(r#"{"pis":[0.0,0.5],"tail":{"kind":"constant","value":1.0}}"#)
                .unwrap();
        assert_eq!(user.pi(7), 1.0);
    }
}
