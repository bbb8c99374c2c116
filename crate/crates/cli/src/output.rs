use std::io::Write;

use anyhow::Context;
use serde::Serialize;

use crate::args::{Format, OutputArgs};

/// Writes `text` to `--out` or stdout.
pub fn emit(out: &OutputArgs, text: &str) -> anyhow::Result<()> {
    match &out.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Renders with `csv` or `json` according to the requested format.
pub fn emit_as<T: Serialize>(
    out: &OutputArgs,
    default: Format,
    value: &T,
    csv: impl FnOnce() -> String,
) -> anyhow::Result<()> {
    let text = match out.format.unwrap_or(default) {
        Format::Json => json(value)?,
        Format::Csv => csv(),
    };
    emit(out, &text)
}
