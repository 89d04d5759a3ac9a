use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trial::{Aggregate, SweepResult, TrialRecord};
use super::HarnessError;

pub const CSV_HEADER: [&str; 9] = [
    "axis_value",
    "trial",
    "seed",
    "success",
    "rel_err_sq",
    "lambda2",
    "v_hat_size",
    "wall_ms",
    "fail_stage",
];

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_records<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.axis_value.map(format_real).unwrap_or_default(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.success.to_string(),
            format_real(r.rel_err_sq),
            format_real(r.lambda2),
            r.v_hat_size.to_string(),
            format_real(r.wall_ms),
            r.fail_stage.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Invalid(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    let parse_f = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| HarnessError::Invalid(format!("bad number {s:?}: {e}")))
    };
    let parse_u = |s: &str| {
        s.parse::<u64>()
            .map_err(|e| HarnessError::Invalid(format!("bad integer {s:?}: {e}")))
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        out.push(TrialRecord {
            axis_value: if field(0).is_empty() {
                None
            } else {
                Some(parse_f(field(0))?)
            },
            trial: parse_u(field(1))? as usize,
            seed: parse_u(field(2))?,
            success: field(3)
                .parse()
                .map_err(|_| HarnessError::Invalid(format!("bad success flag {:?}", field(3))))?,
            rel_err_sq: parse_f(field(4))?,
            lambda2: parse_f(field(5))?,
            v_hat_size: parse_u(field(6))? as usize,
            wall_ms: parse_f(field(7))?,
            fail_stage: if field(8).is_empty() {
                None
            } else {
                Some(field(8).to_string())
            },
        });
    }
    Ok(out)
}

/// Metadata written next to each CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub aggregates: Vec<Aggregate>,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_sweep(
    dir: &Path,
    stem: &str,
    cfg: &ExperimentConfig,
    result: &SweepResult,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_records(&result.records, BufWriter::new(File::create(&csv_path)?))?;
    let sidecar = Sidecar {
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: cfg.clone(),
        columns: CSV_HEADER.iter().map(|s| s.to_string()).collect(),
        aggregates: result.aggregates.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
    log::info!("wrote {}", csv_path.display());
    Ok(())
}
