use clap::Args;
use qngcert::criterion::{is_quantum_non_gaussian, wigner_negativity_witness, WitnessPoint};
use qngcert::estimation::model_p0_q0;
use qngcert::fock::TransmittanceFactor;
use qngcert::montecarlo::Detector;
use qngcert::povm::DiagonalPovmElement;
use qngcert::text::number as num;
use serde::Serialize;

use crate::args::{DetectorArgs, Format, OutputArgs};
use crate::output;

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("regularization").required(true).args(["nbar_s", "nu"])))]
pub struct ModelArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Mean of the thermal S probe; sets nu^2 = nbar/(nbar + 1)
    #[arg(long)]
    pub nbar_s: Option<f64>,
    /// Attenuation amplitude nu in (0, 1)
    #[arg(long)]
    pub nu: Option<f64>,
    /// Also report plain Fock sums truncated at this photon number
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Serialize)]
struct FockSum {
    cutoff: usize,
    p0: f64,
    q0: f64,
}

#[derive(Serialize)]
struct ModelOutput {
    nu_squared: f64,
    p0: f64,
    q0: f64,
    witness: f64,
    qng_margin: f64,
    qng: bool,
    wigner: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    fock_sum: Option<FockSum>,
}

fn truncated(povm: &DiagonalPovmElement, x: f64, cutoff: usize) -> FockSum {
    let (mut s, mut p, mut q) = (0.0, 0.0, 0.0);
    let mut xn = 1.0;
    for n in 0..=cutoff {
        let w = xn * povm.pi(n);
        s += w;
        if n == 0 {
            p = w;
        }
        q += w * 0.5f64.powi(n as i32);
        xn *= x;
    }
    FockSum {
        cutoff,
        p0: p / s,
        q0: q / s,
    }
}

pub fn run(args: &ModelArgs, out: &OutputArgs) -> anyhow::Result<()> {
    let nu = match (args.nbar_s, args.nu) {
        (Some(nbar), _) => TransmittanceFactor::amplitude_for_thermal(nbar)?,
        (None, Some(nu)) => TransmittanceFactor::amplitude_factor(nu)?,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let detector = args.detector.detector()?;
    let (p0, q0) = match &detector {
        Detector::Spad(spad) => {
            let e = model_p0_q0(spad, nu)?;
            (e.p0, e.q0)
        }
        Detector::Povm(povm) => {
            let d = povm.heralded_distribution(nu)?;
            (d.get(0), d.vacuum_after_half_loss().value)
        }
    };
    let x = nu.intensity();
    let point = WitnessPoint::new(p0, q0)?;
    let qng = is_quantum_non_gaussian(point);
    let wigner = wigner_negativity_witness(point);
    let result = ModelOutput {
        nu_squared: x,
        p0,
        q0,
        witness: wigner.value,
        qng_margin: qng.margin,
        qng: qng.certified,
        wigner: wigner.certified,
        fock_sum: args.cutoff.map(|c| truncated(&detector.povm(), x, c)),
    };
    output::emit_as(out, Format::Json, &result, || {
        let mut s = String::from("nu_squared,p0,q0,witness,qng_margin,qng,wigner\n");
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            num(result.nu_squared),
            num(result.p0),
            num(result.q0),
            num(result.witness),
            num(result.qng_margin),
            result.qng,
            result.wigner
        ));
        s
    })
}
