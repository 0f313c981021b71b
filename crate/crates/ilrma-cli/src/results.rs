//! Results CSV schema and the summarize aggregation.
//!
//! The schema is versioned by the first line of every results file; parsing
//! rejects files whose version it does not know. Per-source columns pack a
//! variable number of values into one field with `;` separators so the
//! column set stays fixed across channel counts. SDR columns are empty when
//! the input has no ground truth (WAV input).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// First line of every results CSV.
pub const SCHEMA_HEADER: &str = "# ilrma-results v1";
/// Column header line, directly after the schema line.
pub const COLUMNS: &str =
    "trial,seed,p,L,final_cost,trace_file,sdr_improvement,per_source_improvement,sdr_before,sdr_after";

/// One separation run: a (trial, basis count) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trial: usize,
    pub seed: u64,
    pub p: f64,
    pub basis_count: usize,
    pub final_cost: f64,
    pub trace_file: String,
    /// Mean SDR improvement over sources, dB; `None` without ground truth.
    pub sdr_improvement: Option<f64>,
    pub per_source_improvement: Vec<f64>,
    pub sdr_before: Vec<f64>,
    pub sdr_after: Vec<f64>,
}

fn join(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn split_joined(field: &str) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|part| {
            part.parse::<f64>()
                .map_err(|_| anyhow!("invalid numeric list entry {part:?}"))
        })
        .collect()
}

pub fn render(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_HEADER);
    out.push('\n');
    out.push_str(COLUMNS);
    out.push('\n');
    for row in rows {
        let improvement = row
            .sdr_improvement
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.trial,
            row.seed,
            row.p,
            row.basis_count,
            row.final_cost,
            row.trace_file,
            improvement,
            join(&row.per_source_improvement),
            join(&row.sdr_before),
            join(&row.sdr_after),
        );
    }
    out
}

pub fn parse(text: &str, origin: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow!("{origin}: empty results file"))?;
    if header.trim() != SCHEMA_HEADER {
        bail!("{origin}: unrecognized results schema {header:?} (expected {SCHEMA_HEADER:?})");
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') || line == COLUMNS {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            bail!(
                "{origin}: line {}: expected 10 fields, got {}",
                idx + 2,
                fields.len()
            );
        }
        let ctx = |what| format!("{origin}: line {}: invalid {what}", idx + 2);
        rows.push(ResultRow {
            trial: fields[0].parse().with_context(|| ctx("trial"))?,
            seed: fields[1].parse().with_context(|| ctx("seed"))?,
            p: fields[2].parse().with_context(|| ctx("p"))?,
            basis_count: fields[3].parse().with_context(|| ctx("L"))?,
            final_cost: fields[4].parse().with_context(|| ctx("final_cost"))?,
            trace_file: fields[5].to_string(),
            sdr_improvement: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().with_context(|| ctx("sdr_improvement"))?)
            },
            per_source_improvement: split_joined(fields[7])
                .with_context(|| ctx("per_source_improvement"))?,
            sdr_before: split_joined(fields[8]).with_context(|| ctx("sdr_before"))?,
            sdr_after: split_joined(fields[9]).with_context(|| ctx("sdr_after"))?,
        });
    }
    Ok(rows)
}

pub fn read_files(paths: &[impl AsRef<Path>]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        rows.extend(parse(&text, &path.display().to_string())?);
    }
    Ok(rows)
}

/// Right-closed p bins `(0, 0.25], (0.25, 0.5], (0.5, 0.75], (0.75, 1]`.
pub const P_BIN_LABELS: [&str; 4] = [
    "(0.00,0.25]",
    "(0.25,0.50]",
    "(0.50,0.75]",
    "(0.75,1.00]",
];

pub fn p_bin(p: f64) -> Option<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return None;
    }
    // right-closed: 0.25 falls in the first bin
    for (k, edge) in [0.25, 0.5, 0.75, 1.0].iter().enumerate() {
        if p <= *edge {
            return Some(k);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub basis_count: usize,
    pub bin: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

/// Groups rows by (basis count, p bin) and reports count, mean, and median
/// of the mean-over-sources SDR improvement. Rows without SDR data (no
/// ground truth) are skipped; an input with no usable rows is an error.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        bail!("no result rows to summarize");
    }
    let mut groups: Vec<((usize, usize), Vec<f64>)> = Vec::new();
    for row in rows {
        let Some(improvement) = row.sdr_improvement else {
            continue;
        };
        let Some(bin) = p_bin(row.p) else {
            bail!("row for trial {} has p = {} outside (0, 1]", row.trial, row.p);
        };
        let key = (row.basis_count, bin);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(improvement),
            None => groups.push((key, vec![improvement])),
        }
    }
    if groups.is_empty() {
        bail!("no rows carry SDR improvements (input without ground truth?)");
    }
    groups.sort_by_key(|((l, bin), _)| (*l, *bin));
    Ok(groups
        .into_iter()
        .map(|((basis_count, bin), mut values)| {
            values.sort_by(f64::total_cmp);
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let median = (values[(count - 1) / 2] + values[count / 2]) / 2.0;
            SummaryRow {
                basis_count,
                bin,
                count,
                mean,
                median,
            }
        })
        .collect())
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("# ilrma-summary v1\nL,p_bin,count,mean_improvement,median_improvement\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.basis_count, P_BIN_LABELS[row.bin], row.count, row.mean, row.median
        );
    }
    out
}
