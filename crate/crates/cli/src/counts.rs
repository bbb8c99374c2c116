//! Counts files: one CSV row per probe,
//! `role,nbar,nbar_lo,nbar_hi,n_pulses,n_clicks`.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use qngcert::estimation::{ProbeRecord, ProbeRole, ThermalProbe};
use qngcert::text::number as num;
use serde::Deserialize;

pub const HEADER: &str = "role,nbar,nbar_lo,nbar_hi,n_pulses,n_clicks";

#[derive(Debug, Deserialize)]
struct Row {
    role: String,
    nbar: f64,
    nbar_lo: f64,
    nbar_hi: f64,
    n_pulses: u64,
    n_clicks: u64,
}

/// Records for the vacuum, Q and S probes, in that order.
pub fn parse(text: &str) -> anyhow::Result<[ProbeRecord; 3]> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().context("reading header")?.clone();
    let expected: Vec<&str> = HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        bail!("line 1: header must be '{HEADER}'");
    }
    let mut slots: [Option<ProbeRecord>; 3] = [None, None, None];
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("line {line}: {e}")
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: Row = record
            .deserialize(Some(&header))
            .map_err(|e| anyhow!("line {line}: {e}"))?;
        let at = |e: qngcert::Error| anyhow!("line {line}: {e}");
        let role: ProbeRole = row
            .role
            .parse()
            .map_err(|_| anyhow!("line {line}: unknown role '{}'", row.role))?;
        let probe = ThermalProbe::new(role, row.nbar, row.nbar_lo, row.nbar_hi).map_err(at)?;
        let record = ProbeRecord::from_counts(probe, row.n_pulses, row.n_clicks).map_err(at)?;
        let slot = &mut slots[role_index(role)];
        if slot.is_some() {
            bail!("line {line}: duplicate {} row", role.as_str());
        }
        *slot = Some(record);
    }
    let [v, q, s] = slots;
    match (v, q, s) {
        (Some(v), Some(q), Some(s)) => Ok([v, q, s]),
        _ => bail!("counts file needs exactly one vacuum, one q and one s row"),
    }
}

fn role_index(role: ProbeRole) -> usize {
    match role {
        ProbeRole::Vacuum => 0,
        ProbeRole::Q => 1,
        ProbeRole::S => 2,
    }
}

pub fn read(path: &Path) -> anyhow::Result<[ProbeRecord; 3]> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in counts file {}", path.display()))
}

/// Exact-mode records carry no counts; their expected counts are written.
pub fn to_csv(records: &[ProbeRecord]) -> String {
    let mut out = format!("{HEADER}\n");
    for r in records {
        let p = &r.probe;
        let pulses = r.n_pulses.unwrap_or(0);
        let clicks = r
            .n_clicks
            .unwrap_or_else(|| (r.click_prob * pulses as f64).round() as u64);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.role.as_str().to_lowercase(),
            num(p.nbar),
            num(p.nbar_lo),
            num(p.nbar_hi),
            pulses,
            clicks
        ));
    }
    out
}
