//! Candidate report CSV.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fixedpoint::{ParamFormat, RoundingMode};
use crate::quant::{Groups, QuantConfig, Scheme};
use crate::selection::CandidateReport;

pub const HEADER: [&str; 14] = [
    "dataset",
    "scheme",
    "rounding",
    "wfmt",
    "vmemfmt",
    "vthfmt",
    "acc",
    "mem_bits",
    "mem_norm",
    "e_train_J",
    "e_infer_J",
    "mu",
    "reward",
    "selected",
];

/// Values written to the format columns: groups outside the enabled set
/// are reported as fp32.
fn record(c: &CandidateReport) -> [String; 14] {
    let tags = c.config.tags();
    [
        c.dataset.clone(),
        c.config.scheme.to_string(),
        c.config.rounding.as_str().to_string(),
        tags.weights.to_string(),
        tags.v_mem.to_string(),
        tags.v_thresh.to_string(),
        format!("{:?}", c.acc_q),
        c.mem_bits.to_string(),
        format!("{:?}", c.mem_norm()),
        format!("{:e}", c.energy_train),
        format!("{:e}", c.energy_infer),
        format!("{:?}", c.mu),
        format!("{:?}", c.reward),
        u8::from(c.selected).to_string(),
    ]
}

pub fn write_report(candidates: &[CandidateReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for c in candidates {
        w.write_record(record(c))?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or_default();
    raw.trim()
        .parse()
        .map_err(|_| Error::Report(format!("row {row}: cannot parse {} value {raw:?}", HEADER[idx])))
}

fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<CandidateReport> {
    let scheme: Scheme = field(rec, 1, row)?;
    let rounding: RoundingMode = field(rec, 2, row)?;
    let weights: ParamFormat = field(rec, 3, row)?;
    let v_mem: ParamFormat = field(rec, 4, row)?;
    let v_thresh: ParamFormat = field(rec, 5, row)?;
    let groups = if v_mem.is_quantized() || v_thresh.is_quantized() {
        Groups::QWN
    } else {
        Groups::QW
    };
    let mem_bits: u64 = field(rec, 7, row)?;
    let mem_norm: f64 = field(rec, 8, row)?;
    if !(mem_norm > 0.0 && mem_norm.is_finite()) {
        return Err(Error::Report(format!("row {row}: mem_norm must be positive, found {mem_norm}")));
    }
    let selected: u8 = field(rec, 13, row)?;
    Ok(CandidateReport {
        dataset: rec.get(0).unwrap_or_default().to_string(),
        config: QuantConfig {
            scheme,
            rounding,
            groups,
            weights,
            v_mem,
            v_thresh,
        },
        acc_q: field(rec, 6, row)?,
        mem_bits,
        mem_ref_bits: (mem_bits as f64 / mem_norm).round() as u64,
        energy_train: field(rec, 9, row)?,
        energy_infer: field(rec, 10, row)?,
        mu: field(rec, 11, row)?,
        reward: field(rec, 12, row)?,
        selected: selected != 0,
    })
}

/// Strict reader: the header must match exactly and every row must have
/// all fields.
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<CandidateReport>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::Report(format!(
            "unexpected header {:?}; expected {}",
            header.iter().collect::<Vec<_>>(),
            HEADER.join(",")
        )));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| parse_row(&rec?, i + 1))
        .collect()
}
