use clap::Args;
use qngcert::criterion::boundary_point;
use qngcert::montecarlo::log_space;
use qngcert::text::number as num;
use serde::Serialize;

use crate::args::{Format, OutputArgs};
use crate::output;

/// Smallest `V` in the exported curve.
const V_LO: f64 = 1e-6;

#[derive(Args, Debug)]
pub struct BoundaryArgs {
    /// Number of points, at least 2
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(2..))]
    pub samples: u32,
}

#[derive(Serialize)]
struct Row {
    v: f64,
    p0: f64,
    q0: f64,
}

pub fn run(args: &BoundaryArgs, out: &OutputArgs) -> anyhow::Result<()> {
    let rows = log_space(V_LO, 1.0, args.samples as usize)
        .into_iter()
        .map(|v| {
            let (p0, q0) = boundary_point(v)?;
            Ok(Row { v, p0, q0 })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    output::emit_as(out, Format::Csv, &rows, || {
        let mut s = String::from("V,p0,q0\n");
        for r in &rows {
            s.push_str(&format!("{},{},{}\n", num(r.v), num(r.p0), num(r.q0)));
        }
        s
    })
}
