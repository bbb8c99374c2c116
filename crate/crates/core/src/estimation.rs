//! From three probe click probabilities to the vacuum probabilities of the
//! regularized POVM element, with calibration-safe corrections,
//! uncertainties and verdicts.
//!
//! With `R_j = Tr[Pi rho_th(nbar_j)]`:
//!
//! ```text
//! P0  = R_vac / ((nbar_S + 1) R_S)
//! Q0  = (nbar_Q + 1) R_Q / ((nbar_S + 1) R_S),   nbar_Q = nbar_S / (nbar_S + 2)
//! ```
//!
//! The primed estimators replace `nbar_S` in the prefactor denominators with
//! the upper end of its confidence interval, which scales the pair towards
//! the origin and can only remove certifications.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{
    is_quantum_non_gaussian, wigner_negativity_witness, GaussianBoundary, WitnessPoint,
    WIGNER_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::fock::TransmittanceFactor;
use crate::povm::SpadParameters;
use crate::rng;

/// Default significance multiple for "certified at k sigma".
pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeRole {
    #[serde(rename = "vacuum")]
    Vacuum,
    Q,
    S,
}

impl ProbeRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeRole::Vacuum => "vacuum",
            ProbeRole::Q => "Q",
            ProbeRole::S => "S",
        }
    }

    pub(crate) fn lane(&self) -> u8 {
        match self {
            ProbeRole::Vacuum => 0,
            ProbeRole::Q => 1,
            ProbeRole::S => 2,
        }
    }
}

impl std::str::FromStr for ProbeRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vacuum" | "vac" | "0" => Ok(ProbeRole::Vacuum),
            "q" => Ok(ProbeRole::Q),
            "s" => Ok(ProbeRole::S),
            other => Err(Error::PlanRejected(format!("unknown probe role '{other}'"))),
        }
    }
}

/// Calibrated thermal probe: point estimate and confidence interval of the
/// mean photon number, treated as hard bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalProbe {
    pub role: ProbeRole,
    pub nbar: f64,
    pub nbar_lo: f64,
    pub nbar_hi: f64,
}

impl ThermalProbe {
    pub fn new(role: ProbeRole, nbar: f64, nbar_lo: f64, nbar_hi: f64) -> Result<Self> {
        for (name, x) in [("nbar", nbar), ("nbar_lo", nbar_lo), ("nbar_hi", nbar_hi)] {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::domain(name, x, "finite and >= 0"));
            }
        }
        if !(nbar_lo <= nbar && nbar <= nbar_hi) {
            return Err(Error::PlanRejected(format!(
                "interval [{nbar_lo}, {nbar_hi}] does not contain {nbar}"
            )));
        }
        if role == ProbeRole::Vacuum && nbar_hi != 0.0 {
            return Err(Error::PlanRejected(
                "vacuum probe must have nbar = 0".into(),
            ));
        }
        Ok(Self {
            role,
            nbar,
            nbar_lo,
            nbar_hi,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            role: ProbeRole::Vacuum,
            nbar: 0.0,
            nbar_lo: 0.0,
            nbar_hi: 0.0,
        }
    }

    /// Zero-width interval.
    pub fn exact(role: ProbeRole, nbar: f64) -> Result<Self> {
        Self::new(role, nbar, nbar, nbar)
    }
}

/// Measured (or exactly known) click probability for one probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: ThermalProbe,
    pub click_prob: f64,
    /// Trigger events; for exact records, the nominal pulse count used for
    /// expected uncertainties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clicks: Option<u64>,
}

impl ProbeRecord {
    pub fn from_counts(probe: ThermalProbe, n_pulses: u64, n_clicks: u64) -> Result<Self> {
        if n_pulses == 0 || n_clicks > n_pulses {
            return Err(Error::PlanRejected(format!(
                "{n_clicks} clicks out of {n_pulses} pulses"
            )));
        }
        Ok(Self {
            probe,
            click_prob: n_clicks as f64 / n_pulses as f64,
            n_pulses: Some(n_pulses),
            n_clicks: Some(n_clicks),
        })
    }

    pub fn exact(probe: ThermalProbe, click_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&click_prob) {
            return Err(Error::domain("click_prob", click_prob, "[0, 1]"));
        }
        Ok(Self {
            probe,
            click_prob,
            n_pulses: None,
            n_clicks: None,
        })
    }

    /// Exact probability that still carries a nominal pulse count.
    pub fn exact_with_pulses(probe: ThermalProbe, click_prob: f64, n_pulses: u64) -> Result<Self> {
        let mut r = Self::exact(probe, click_prob)?;
        r.n_pulses = Some(n_pulses);
        Ok(r)
    }

    /// Binomial standard error of `click_prob`.
    pub fn sigma(&self) -> Option<f64> {
        self.n_pulses
            .map(|n| (self.click_prob * (1.0 - self.click_prob) / n as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    /// `nbar_S / (nbar_S + 2)`.
    pub ideal_nbar_q: f64,
    /// Largest admissible upper calibration bound for the Q probe,
    /// `nbar_S^- / (nbar_S^- + 2)`.
    pub max_nbar_q_hi: f64,
}

pub fn plan_probes(s: &ThermalProbe) -> Result<ProbePlan> {
    if !(s.nbar_lo >= 0.0) {
        return Err(Error::domain("nbar_S^-", s.nbar_lo, ">= 0"));
    }
    Ok(ProbePlan {
        ideal_nbar_q: s.nbar / (s.nbar + 2.0),
        max_nbar_q_hi: s.nbar_lo / (s.nbar_lo + 2.0),
    })
}

/// Rejects Q probes whose calibration could produce a false positive.
pub fn check_safety(q: &ThermalProbe, s: &ThermalProbe) -> Result<()> {
    let plan = plan_probes(s)?;
    if q.nbar_hi > plan.max_nbar_q_hi {
        return Err(Error::PlanRejected(format!(
            "nbar_Q^+ = {} exceeds nbar_S^- / (nbar_S^- + 2) = {}",
            q.nbar_hi, plan.max_nbar_q_hi
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub p0: f64,
    pub q0: f64,
}

fn check_roles(vac: &ProbeRecord, q: &ProbeRecord, s: &ProbeRecord) -> Result<()> {
    let roles = [vac.probe.role, q.probe.role, s.probe.role];
    if roles != [ProbeRole::Vacuum, ProbeRole::Q, ProbeRole::S] {
        return Err(Error::PlanRejected(format!(
            "expected probes (vacuum, Q, S), got {roles:?}"
        )));
    }
    if !(s.click_prob > 0.0) {
        return Err(Error::UndefinedEstimator(
            "S-probe click probability is zero".into(),
        ));
    }
    Ok(())
}

fn estimate_with(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
    nbar_s: f64,
    nbar_q: f64,
) -> Result<PairEstimate> {
    check_roles(vac, q, s)?;
    let denom = (nbar_s + 1.0) * s.click_prob;
    Ok(PairEstimate {
        p0: vac.click_prob / denom,
        q0: (nbar_q + 1.0) * q.click_prob / denom,
    })
}

/// `(P0, Q0)` from point estimates of the probe means.
pub fn estimate_unprimed(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
) -> Result<PairEstimate> {
    estimate_with(vac, q, s, s.probe.nbar, q.probe.nbar)
}

/// `(P0', Q0')`, using `nbar_S^+` in the denominators and `nbar_Q^-` in the
/// Q prefactor.
///
/// `(nbar_Q + 1) R_Q = sum_n pi_n r^n` grows with the true Q mean, so the
/// lower end is the only prefactor that cannot overstate it when the true
/// mean lies anywhere in the Q interval. For zero-width intervals this is the
/// point estimate.
pub fn estimate_primed(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
) -> Result<PairEstimate> {
    estimate_with(vac, q, s, s.probe.nbar_hi, q.probe.nbar_lo)
}

/// Closed-form `(P0, Q0)` of the regularized SPAD element.
pub fn model_p0_q0(spad: &SpadParameters, nu: TransmittanceFactor) -> Result<PairEstimate> {
    let x = nu.intensity();
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain("nu", nu.amplitude(), "(0, 1)"));
    }
    let (eta, rd) = (spad.eta(), spad.dark());
    let denom = rd * (1.0 - x) + x * eta;
    if !(denom > 0.0) {
        return Err(Error::NoClick);
    }
    let p0 = rd * (1.0 - x) * (1.0 - x + x * eta) / denom;
    let q0 = 2.0 * (rd * (2.0 - x) + x * eta) / denom * (1.0 - x) * (1.0 - x + x * eta)
        / ((2.0 - x) * (2.0 - x + x * eta));
    Ok(PairEstimate { p0, q0 })
}

/// One-standard-deviation uncertainties of the primed pair and the derived
/// witness quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Uncertainty {
    pub sigma_p0: f64,
    pub sigma_q0: f64,
    pub sigma_witness: f64,
    pub sigma_qng_margin: f64,
}

/// Delta-method propagation of binomial errors on the three click
/// probabilities through the primed estimators.
pub fn propagate_uncertainty(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
) -> Result<Uncertainty> {
    let est = estimate_primed(vac, q, s)?;
    let sig = |r: &ProbeRecord| {
        r.sigma().ok_or_else(|| {
            Error::UndefinedEstimator(format!(
                "{} probe has no pulse count",
                r.probe.role.as_str()
            ))
        })
    };
    let (sv, sq, ss) = (sig(vac)?, sig(q)?, sig(s)?);
    let rs = s.click_prob;
    let a = 1.0 / ((s.probe.nbar_hi + 1.0) * rs);
    let b = (q.probe.nbar_lo + 1.0) * a;
    let slope = GaussianBoundary::standard().slope(est.p0);
    // gradients with respect to (R_vac, R_Q, R_S)
    let grad_p = [a, 0.0, -est.p0 / rs];
    let grad_q = [0.0, b, -est.q0 / rs];
    let combine = |gp: f64, gq: f64| {
        [
            gp * grad_p[0] + gq * grad_q[0],
            gp * grad_p[1] + gq * grad_q[1],
            gp * grad_p[2] + gq * grad_q[2],
        ]
    };
    let norm =
        |g: [f64; 3]| ((g[0] * sv).powi(2) + (g[1] * sq).powi(2) + (g[2] * ss).powi(2)).sqrt();
    Ok(Uncertainty {
        sigma_p0: norm(grad_p),
        sigma_q0: norm(grad_q),
        sigma_witness: norm(combine(-3.0, 4.0)),
        sigma_qng_margin: norm(combine(-slope, 1.0)),
    })
}

/// Parametric bootstrap: redraw all three counts from the observed
/// frequencies `resamples` times and take the sample standard deviation.
pub fn bootstrap_uncertainty(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
    resamples: u32,
    seed: u64,
) -> Result<Uncertainty> {
    check_roles(vac, q, s)?;
    let pulses = |r: &ProbeRecord| {
        r.n_pulses
            .ok_or_else(|| Error::UndefinedEstimator("bootstrap needs pulse counts".into()))
    };
    let n = [pulses(vac)?, pulses(q)?, pulses(s)?];
    let records = [vac, q, s];
    let boundary = GaussianBoundary::standard();
    let draws: Vec<Option<[f64; 4]>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut redrawn = [*vac, *q, *s];
            for (lane, (rec, &pulses)) in records.iter().zip(&n).enumerate() {
                let mut rng = rng::stream(seed, rng::stream_id(0xB0, b, lane as u8));
                let k = rng::binomial(&mut rng, pulses, rec.click_prob);
                redrawn[lane].click_prob = k as f64 / pulses as f64;
            }
            let e = estimate_primed(&redrawn[0], &redrawn[1], &redrawn[2]).ok()?;
            let margin = e.q0 - boundary.q0_threshold(e.p0.clamp(0.0, 1.0));
            Some([e.p0, e.q0, 4.0 * e.q0 - 3.0 * e.p0 - 1.0, margin])
        })
        .collect();
    let ok: Vec<[f64; 4]> = draws.into_iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::UndefinedEstimator(
            "too few valid bootstrap resamples".into(),
        ));
    }
    let sd = |i: usize| {
        let m = ok.iter().map(|d| d[i]).sum::<f64>() / ok.len() as f64;
        (ok.iter().map(|d| (d[i] - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    };
    Ok(Uncertainty {
        sigma_p0: sd(0),
        sigma_q0: sd(1),
        sigma_witness: sd(2),
        sigma_qng_margin: sd(3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QngReport {
    pub certified: bool,
    pub certified_at_k: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerReport {
    /// `4 Q0' - 3 P0' - 1`.
    pub value: f64,
    pub certified: bool,
    pub certified_at_k: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `Q0' - threshold(P0')`.
    pub qng: f64,
    pub qng_sigma: f64,
    /// `4 Q0' - 3 P0' - 1 - 1/2`.
    pub wigner: f64,
    pub wigner_sigma: f64,
    pub k_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRecord {
    pub p0_primed: f64,
    pub q0_primed: f64,
    pub sigma_p0: f64,
    pub sigma_q0: f64,
    pub qng: QngReport,
    pub wigner: WignerReport,
    pub margins: Margins,
    pub nu_squared: f64,
    pub inputs: [ProbeRecord; 3],
}

impl CertificationRecord {
    pub fn witness_point(&self) -> WitnessPoint {
        WitnessPoint::new(self.p0_primed, self.q0_primed).expect("validated at construction")
    }
}

/// Full certification from three probe records. Uncertainties are zero
/// when the records carry no pulse counts.
pub fn certify(
    vac: &ProbeRecord,
    q: &ProbeRecord,
    s: &ProbeRecord,
    k_sigma: f64,
) -> Result<CertificationRecord> {
    if !(k_sigma >= 0.0) {
        return Err(Error::domain("k_sigma", k_sigma, ">= 0"));
    }
    check_roles(vac, q, s)?;
    check_safety(&q.probe, &s.probe)?;
    let est = estimate_primed(vac, q, s)?;
    let point = WitnessPoint::new(est.p0, est.q0).map_err(|e| {
        Error::UndefinedEstimator(format!(
            "estimate ({}, {}) outside [0,1]^2: {e}",
            est.p0, est.q0
        ))
    })?;
    let unc = if [vac, q, s].iter().all(|r| r.n_pulses.is_some()) {
        propagate_uncertainty(vac, q, s)?
    } else {
        Uncertainty::default()
    };
    let qng = is_quantum_non_gaussian(point);
    let wig = wigner_negativity_witness(point);
    let wigner_margin = wig.value - WIGNER_THRESHOLD;
    Ok(CertificationRecord {
        p0_primed: est.p0,
        q0_primed: est.q0,
        sigma_p0: unc.sigma_p0,
        sigma_q0: unc.sigma_q0,
        qng: QngReport {
            certified: qng.certified,
            certified_at_k: qng.certified && qng.margin > k_sigma * unc.sigma_qng_margin,
        },
        wigner: WignerReport {
            value: wig.value,
            certified: wig.certified,
            certified_at_k: wig.certified && wigner_margin > k_sigma * unc.sigma_witness,
        },
        margins: Margins {
            qng: qng.margin,
            qng_sigma: unc.sigma_qng_margin,
            wigner: wigner_margin,
            wigner_sigma: unc.sigma_witness,
            k_sigma,
        },
        nu_squared: s.probe.nbar / (s.probe.nbar + 1.0),
        inputs: [*vac, *q, *s],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{CutoffPolicy, PhotonNumberDistribution};
    use crate::povm::DiagonalPovmElement;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn probes(nbar_s: f64) -> (ThermalProbe, ThermalProbe, ThermalProbe) {
        (
            ThermalProbe::vacuum(),
            ThermalProbe::exact(ProbeRole::Q, nbar_s / (nbar_s + 2.0)).unwrap(),
            ThermalProbe::exact(ProbeRole::S, nbar_s).unwrap(),
        )
    }

    fn records(rv: f64, rq: f64, rs: f64, nbar_s: f64) -> [ProbeRecord; 3] {
        let (v, q, s) = probes(nbar_s);
        [
            ProbeRecord::exact(v, rv).unwrap(),
            ProbeRecord::exact(q, rq).unwrap(),
            ProbeRecord::exact(s, rs).unwrap(),
        ]
    }

    /// Brute-force oracle: explicit Fock sums of the regularized element.
    fn fock_sum_oracle(spad: &SpadParameters, nu2: f64) -> (f64, f64) {
        let (mut s, mut q) = (0.0, 0.0);
        for n in 0..20_000 {
            let pi = 1.0 - (1.0 - spad.dark()) * (1.0 - spad.eta()).powi(n);
            let w = nu2.powi(n) * pi;
            s += w;
            q += w * 0.5f64.powi(n);
            if nu2.powi(n) < 1e-300 {
                break;
            }
        }
        (spad.dark() / s, q / s)
    }

    #[test]
    fn plan_examples() {
        let p = plan_probes(&ThermalProbe::exact(ProbeRole::S, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(p.ideal_nbar_q, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(p.ideal_nbar_q, p.max_nbar_q_hi);
        let p = plan_probes(&ThermalProbe::new(ProbeRole::S, 1.0, 0.99, 1.01).unwrap()).unwrap();
        assert_abs_diff_eq!(p.max_nbar_q_hi, 0.99 / 2.99, epsilon = 1e-15);
        assert_abs_diff_eq!(p.max_nbar_q_hi, 0.331104, epsilon = 1e-6);
        let p = plan_probes(&ThermalProbe::exact(ProbeRole::S, 0.0).unwrap()).unwrap();
        assert_eq!(p.ideal_nbar_q, 0.0);
        let bad = ThermalProbe {
            role: ProbeRole::S,
            nbar: 0.1,
            nbar_lo: -0.1,
            nbar_hi: 0.2,
        };
        assert!(plan_probes(&bad).is_err());
    }

    #[test]
    fn probe_validation() {
        assert!(ThermalProbe::new(ProbeRole::S, 1.0, 1.1, 1.2).is_err());
        assert!(ThermalProbe::new(ProbeRole::Vacuum, 0.1, 0.0, 0.2).is_err());
        assert!(ProbeRecord::from_counts(ThermalProbe::vacuum(), 10, 11).is_err());
        assert!(ProbeRecord::from_counts(ThermalProbe::vacuum(), 0, 0).is_err());
        assert_eq!("Q".parse::<ProbeRole>().unwrap(), ProbeRole::Q);
        assert_eq!("vacuum".parse::<ProbeRole>().unwrap(), ProbeRole::Vacuum);
        assert!("x".parse::<ProbeRole>().is_err());
    }

    #[test]
    fn unprimed_examples() {
        let [v, q, s] = records(0.0, 0.25, 0.5, 1.0);
        let e = estimate_unprimed(&v, &q, &s).unwrap();
        assert_abs_diff_eq!(e.p0, 0.0);
        assert_abs_diff_eq!(e.q0, 1.0 / 3.0, epsilon = 1e-15);

        let [v, q, s] = records(1.0, 1.0, 1.0, 1.0);
        let e = estimate_unprimed(&v, &q, &s).unwrap();
        assert_abs_diff_eq!(e.p0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.q0, 2.0 / 3.0, epsilon = 1e-15);
        assert!(!is_quantum_non_gaussian(WitnessPoint::new(e.p0, e.q0).unwrap()).certified);

        let nbar_s = 0.7;
        let [v, q, s] = records(0.2, 0.2, 0.2, nbar_s);
        let e = estimate_unprimed(&v, &q, &s).unwrap();
        assert_abs_diff_eq!(e.q0 / e.p0, nbar_s / (nbar_s + 2.0) + 1.0, epsilon = 1e-14);

        let [v, q, s] = records(0.0, 0.1, 0.0, 1.0);
        assert!(matches!(
            estimate_unprimed(&v, &q, &s),
            Err(Error::UndefinedEstimator(_))
        ));
        assert!(estimate_unprimed(&q, &v, &s).is_err());
    }

    #[test]
    fn primed_examples() {
        let [v, q, s] = records(0.01, 0.25, 0.5, 1.0);
        assert_eq!(
            estimate_primed(&v, &q, &s).unwrap(),
            estimate_unprimed(&v, &q, &s).unwrap()
        );

        let s_wide = ProbeRecord::exact(
            ThermalProbe::new(ProbeRole::S, 1.0, 0.99, 1.01).unwrap(),
            0.5,
        )
        .unwrap();
        let u = estimate_unprimed(&v, &q, &s_wide).unwrap();
        let p = estimate_primed(&v, &q, &s_wide).unwrap();
        assert_abs_diff_eq!(p.p0, u.p0 * 2.0 / 2.01, epsilon = 1e-15);
        assert_abs_diff_eq!(p.q0, u.q0 * 2.0 / 2.01, epsilon = 1e-15);

        let x = (0.0103 + 1.0) / (0.0109 + 1.0);
        assert_abs_diff_eq!(x, 0.999406, epsilon = 1e-6);
    }

    #[test]
    fn model_examples() {
        let nu = |x: f64| TransmittanceFactor::amplitude_factor(x.sqrt()).unwrap();
        let ideal = SpadParameters::new(1.0, 0.0).unwrap();
        let e = model_p0_q0(&ideal, nu(0.5)).unwrap();
        assert_abs_diff_eq!(e.p0, 0.0);
        assert_abs_diff_eq!(e.q0, 0.5 / 1.5, epsilon = 1e-15);

        // eta = 0 with certain dark click is the identity element
        let always = SpadParameters::new(0.0, 1.0).unwrap();
        let e = model_p0_q0(&always, nu(0.5)).unwrap();
        assert_abs_diff_eq!(e.p0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.q0, 2.0 / 3.0, epsilon = 1e-15);

        let paper = SpadParameters::new(0.58, 1.44e-6).unwrap();
        let nbar_s = 0.0103;
        let nu2 = nbar_s / (nbar_s + 1.0);
        let e = model_p0_q0(&paper, nu(nu2)).unwrap();
        let (p_ref, q_ref) = fock_sum_oracle(&paper, nu2);
        assert_abs_diff_eq!(e.p0, p_ref, epsilon = 1e-10);
        assert_abs_diff_eq!(e.q0, q_ref, epsilon = 1e-10);
        assert_abs_diff_eq!(e.q0, 0.4965, epsilon = 1e-4);
        assert_abs_diff_eq!(e.p0, 2.40e-4, epsilon = 1e-6);
        let w = wigner_negativity_witness(WitnessPoint::new(e.p0, e.q0).unwrap());
        assert_abs_diff_eq!(w.value, 0.985, epsilon = 1e-3);

        let never = SpadParameters::new(0.0, 0.0).unwrap();
        assert_eq!(model_p0_q0(&never, nu(0.5)), Err(Error::NoClick));
        assert!(model_p0_q0(&paper, nu(1.0)).is_err());
    }

    #[test]
    fn estimator_from_model_clicks_matches_closed_form() {
        for eta in [0.1, 0.58, 1.0] {
            for dark in [0.0, 1.44e-6, 1e-2] {
                let spad = SpadParameters::new(eta, dark).unwrap();
                for nbar_s in [0.0103, 0.1, 1.0, 5.04] {
                    let nbar_q = nbar_s / (nbar_s + 2.0);
                    let r = |n| spad.click_probability_thermal_poisson(n, 0.0);
                    let [v, q, s] = records(r(0.0), r(nbar_q), r(nbar_s), nbar_s);
                    let e = estimate_unprimed(&v, &q, &s).unwrap();
                    let nu = TransmittanceFactor::amplitude_for_thermal(nbar_s).unwrap();
                    let m = model_p0_q0(&spad, nu).unwrap();
                    assert_abs_diff_eq!(e.p0, m.p0, epsilon = 1e-10);
                    assert_abs_diff_eq!(e.q0, m.q0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn uncertainty_examples() {
        let s = |r: f64, n: u64| {
            ProbeRecord::exact_with_pulses(ThermalProbe::exact(ProbeRole::S, 1.0).unwrap(), r, n)
                .unwrap()
                .sigma()
                .unwrap()
        };
        assert_eq!(s(1.0, 1000), 0.0);
        assert_abs_diff_eq!(s(0.5, 1_000_000), 0.0005, epsilon = 1e-15);

        let [v, q, sr] = records(1e-6, 0.25, 0.5, 1.0);
        assert!(propagate_uncertainty(&v, &q, &sr).is_err());
    }

    #[test]
    fn bootstrap_agrees_with_delta_method() {
        let (pv, pq, ps) = probes(1.0);
        let n = 200_000;
        let rec = |p, k| ProbeRecord::from_counts(p, n, k).unwrap();
        let (v, q, s) = (rec(pv, 2_000), rec(pq, 40_000), rec(ps, 90_000));
        let delta = propagate_uncertainty(&v, &q, &s).unwrap();
        let boot = bootstrap_uncertainty(&v, &q, &s, 400, 11).unwrap();
        for (d, b) in [
            (delta.sigma_p0, boot.sigma_p0),
            (delta.sigma_q0, boot.sigma_q0),
            (delta.sigma_witness, boot.sigma_witness),
            (delta.sigma_qng_margin, boot.sigma_qng_margin),
        ] {
            assert!((b - d).abs() / d < 0.2, "delta {d} bootstrap {b}");
        }
        assert_eq!(boot, bootstrap_uncertainty(&v, &q, &s, 400, 11).unwrap());
    }

    #[test]
    fn certify_reports_verdicts() {
        let r = |n| {
            SpadParameters::new(1.0, 0.0)
                .unwrap()
                .click_probability_thermal_poisson(n, 0.0)
        };
        let [v, q, s] = records(r(0.0), r(1.0 / 3.0), r(1.0), 1.0);
        let rec = certify(&v, &q, &s, 3.0).unwrap();
        assert_abs_diff_eq!(rec.q0_primed, 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(rec.p0_primed, 0.0);
        assert!(rec.qng.certified && rec.qng.certified_at_k);
        assert_eq!(rec.sigma_p0, 0.0);

        let (pv, _, ps) = probes(1.0);
        let greedy = ThermalProbe::exact(ProbeRole::Q, 0.34).unwrap();
        let err = certify(
            &ProbeRecord::exact(pv, 0.0).unwrap(),
            &ProbeRecord::exact(greedy, 0.25).unwrap(),
            &ProbeRecord::exact(ps, 0.5).unwrap(),
            3.0,
        );
        assert!(matches!(err, Err(Error::PlanRejected(_))));

        let json = serde_json::to_value(&rec).unwrap();
        for key in [
            "p0_primed",
            "q0_primed",
            "sigma_p0",
            "sigma_q0",
            "qng",
            "wigner",
            "margins",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: CertificationRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn primed_estimators_are_monotone() {
        let mut last = (-1.0, -1.0);
        for k in 1..50 {
            let r = k as f64 * 0.01;
            let [v, q, s] = records(r, r, 0.6, 1.0);
            let e = estimate_primed(&v, &q, &s).unwrap();
            assert!(e.p0 > last.0 && e.q0 > last.1);
            last = (e.p0, e.q0);
        }
    }

    fn gaussian_elements() -> Vec<DiagonalPovmElement> {
        let mut out = vec![DiagonalPovmElement::always_click()];
        for a2 in [0.5, 1.0, 4.0] {
            out.push(DiagonalPovmElement::coherent_projector_diagonal(a2).unwrap());
        }
        out
    }

    /// True Q mean at the bottom of a wide Q interval: the point estimate in
    /// the Q prefactor would certify a coherent projector here.
    #[test]
    fn q_prefactor_uses_lower_bound() {
        let policy = CutoffPolicy::default();
        let s_probe = ThermalProbe::exact(ProbeRole::S, 4.3).unwrap();
        let q_hi = plan_probes(&s_probe).unwrap().max_nbar_q_hi;
        let q_probe = ThermalProbe::new(ProbeRole::Q, 0.75 * q_hi, 0.5 * q_hi, q_hi).unwrap();
        for povm in gaussian_elements() {
            let r = |n: f64| {
                povm.click_probability(&PhotonNumberDistribution::thermal(n, policy).unwrap())
                    .value
            };
            let v = ProbeRecord::exact(ThermalProbe::vacuum(), r(0.0)).unwrap();
            let q = ProbeRecord::exact(q_probe, r(0.5 * q_hi)).unwrap();
            let s = ProbeRecord::exact(s_probe, r(4.3)).unwrap();
            let rec = certify(&v, &q, &s, 0.0).unwrap();
            assert!(!rec.qng.certified, "margin {}", rec.margins.qng);
            let point = estimate_unprimed(&v, &q, &s).unwrap();
            assert_abs_diff_eq!(
                rec.q0_primed * (0.75 * q_hi + 1.0),
                point.q0 * (0.5 * q_hi + 1.0),
                epsilon = 1e-12
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Gaussian elements stay uncertified for any true means inside
        /// declared intervals obeying the safety condition.
        #[test]
        fn gaussian_elements_never_certified(
            nbar_s in 0.01f64..5.0,
            lo_frac in 0.0f64..0.1,
            hi_frac in 0.0f64..0.1,
            true_s_pos in 0.0f64..=1.0,
            q_shrink in 0.5f64..=1.0,
            true_q_pos in 0.0f64..=1.0,
        ) {
            let policy = CutoffPolicy::default();
            let s_lo = nbar_s * (1.0 - lo_frac);
            let s_hi = nbar_s * (1.0 + hi_frac);
            let s_probe = ThermalProbe::new(ProbeRole::S, nbar_s, s_lo, s_hi).unwrap();
            let q_hi = plan_probes(&s_probe).unwrap().max_nbar_q_hi;
            let q_lo = q_hi * q_shrink;
            let q_probe = ThermalProbe::new(ProbeRole::Q, 0.5 * (q_lo + q_hi), q_lo, q_hi).unwrap();
            let true_s = s_lo + true_s_pos * (s_hi - s_lo);
            let true_q = q_lo + true_q_pos * (q_hi - q_lo);
            for povm in gaussian_elements() {
                let r = |n: f64| povm.click_probability(&PhotonNumberDistribution::thermal(n, policy).unwrap()).value;
                let v = ProbeRecord::exact(ThermalProbe::vacuum(), r(0.0)).unwrap();
                let q = ProbeRecord::exact(q_probe, r(true_q)).unwrap();
                let s = ProbeRecord::exact(s_probe, r(true_s)).unwrap();
                let rec = certify(&v, &q, &s, 0.0).unwrap();
                prop_assert!(!rec.qng.certified, "{:?} margin {}", povm.pis().len(), rec.margins.qng);
                prop_assert!(!rec.wigner.certified);
            }
        }
    }
}
