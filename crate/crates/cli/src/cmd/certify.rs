use std::path::PathBuf;

use clap::Args;
use qngcert::estimation::{certify, CertificationRecord};
use qngcert::montecarlo::{SweepPoint, SweepResult};

use crate::args::{Format, OutputArgs};
use crate::{counts, output};

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// CSV with header role,nbar,nbar_lo,nbar_hi,n_pulses,n_clicks
    #[arg(long, value_name = "FILE")]
    pub counts: PathBuf,
    /// Sigma multiple for the k-sigma verdicts
    #[arg(long, default_value_t = 3.0)]
    pub k_sigma: f64,
}

/// Single-row table in the sweep layout, with `param = nu^2`.
pub fn record_csv(record: &CertificationRecord) -> String {
    SweepResult {
        parameter: "nu_squared".into(),
        points: vec![SweepPoint {
            param: record.nu_squared,
            record: record.clone(),
        }],
    }
    .to_csv()
}

pub fn run(args: &CertifyArgs, out: &OutputArgs) -> anyhow::Result<()> {
    let [v, q, s] = counts::read(&args.counts)?;
    let record = certify(&v, &q, &s, args.k_sigma)?;
    output::emit_as(out, Format::Json, &record, || record_csv(&record))
}
