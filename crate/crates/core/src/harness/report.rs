//! CSV/JSON persistence of grid results.
//!
//! Reals are written in fixed-point notation with 17 significant digits, which
//! round-trips every f64 exactly. NaN is written as `NaN`.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::CaseCoords;
use super::grid::{CaseResult, OutcomeClass, SweepSummary};
use crate::error::{ensure, Error, Result};

pub const CASES_FILE: &str = "cases.csv";
pub const CASE_SHIFTS_FILE: &str = "case_shifts.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LAMBDA_HIST_FILE: &str = "lambda_hist.csv";
pub const FSR_BY_FRACTION_FILE: &str = "fsr_by_fraction.csv";

const CASE_COLUMNS: [&str; 10] = [
    "classes",
    "mean_shift",
    "var_shift",
    "fraction",
    "fsr",
    "baseline_acc",
    "best_lambda",
    "best_acc",
    "improvement",
    "outcome_class",
];

const SHIFT_COLUMNS: [&str; 6] = [
    "case_index",
    "shift_train",
    "shift_full",
    "ln_shift_total",
    "gamma_shift",
    "beta_shift",
];

/// Fixed-point text with 17 significant digits.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return format!("{:.16}", v);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(1) as usize;
    format!("{:.*}", decimals, v)
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
}

/// Header of cases.csv for a given λ grid.
pub fn cases_header(lambda_grid: &[f64]) -> Vec<String> {
    CASE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(lambda_grid.iter().map(|l| format!("acc_lambda_{l:.1}")))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Parse(format!("csv buffer: {e}")))
}

fn case_row(r: &CaseResult) -> Vec<String> {
    let c = &r.coords;
    let mut row = vec![
        c.classes.to_string(),
        format_real(c.mean_shift),
        format_real(c.var_shift),
        format_real(c.fraction),
        format_real(r.fsr),
        format_real(r.baseline_accuracy),
        format_real(r.best_lambda),
        format_real(r.best_accuracy),
        format_real(r.improvement),
        r.outcome_class.to_string(),
    ];
    row.extend(r.accuracy_at_lambda.iter().map(|&a| format_real(a)));
    row
}

fn sorted(results: &[CaseResult]) -> Vec<&CaseResult> {
    let mut v: Vec<&CaseResult> = results.iter().collect();
    v.sort_by_key(|r| r.index);
    v
}

/// cases.csv contents, rows in case-index order.
pub fn cases_csv(results: &[CaseResult], lambda_grid: &[f64]) -> Result<Vec<u8>> {
    ensure!(
        results.iter().all(|r| r.accuracy_at_lambda.len() == lambda_grid.len()),
        "every case needs one accuracy per lambda"
    );
    csv_bytes(&cases_header(lambda_grid), sorted(results).into_iter().map(case_row))
}

fn shifts_csv(results: &[CaseResult]) -> Result<Vec<u8>> {
    let header: Vec<String> = SHIFT_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &header,
        sorted(results).into_iter().map(|r| {
            vec![
                r.index.to_string(),
                format_real(r.shift_train),
                format_real(r.shift_full),
                format_real(r.ln_shift_total),
                format_real(r.gamma_shift),
                format_real(r.beta_shift),
            ]
        }),
    )
}

fn opt_real(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x.is_finite() => serde_json::Value::String(format_real(x)),
        _ => serde_json::Value::Null,
    }
}

/// summary.json with reals as decimal strings.
pub fn summary_json(summary: &SweepSummary) -> Result<String> {
    use serde_json::json;
    let per_fraction: Vec<_> = summary
        .per_fraction
        .iter()
        .map(|f| {
            json!({
                "fraction": format_real(f.fraction),
                "cases": f.cases,
                "mean_fsr": opt_real(f.mean_fsr),
                "mean_best_lambda": opt_real(f.mean_best_lambda),
            })
        })
        .collect();
    let hist: Vec<_> = summary
        .best_lambda_histogram
        .iter()
        .map(|b| {
            json!({
                "lambda_lo": format_real(b.lambda_lo),
                "lambda_hi": format_real(b.lambda_hi),
                "count": b.count,
            })
        })
        .collect();
    let value = json!({
        "overall_cases": summary.overall_cases,
        "unchanged_cases": summary.unchanged_cases,
        "improved_cases": summary.improved_cases,
        "not_improved_cases": summary.not_improved_cases,
        "zero_accuracy_cases": summary.zero_accuracy_cases,
        "failed_cases": summary.failed_cases,
        "avg_improvement_of_improved": opt_real(summary.avg_improvement_of_improved),
        "spearman_fsr_vs_best_lambda": opt_real(summary.spearman_fsr_vs_best_lambda),
        "spearman_lnshift_vs_wasserstein": opt_real(summary.spearman_lnshift_vs_wasserstein),
        "per_fraction": per_fraction,
        "best_lambda_histogram": hist,
    });
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

/// Parse summary.json written by [`summary_json`].
pub fn parse_summary(text: &str) -> Result<SweepSummary> {
    use serde_json::Value;
    let v: Value = serde_json::from_str(text)?;
    let count = |v: &Value, k: &str| -> Result<usize> {
        v.get(k)
            .and_then(Value::as_u64)
            .map(|n| n as usize)
            .ok_or_else(|| Error::Parse(format!("summary: missing count `{k}`")))
    };
    let real = |v: &Value, k: &str| -> Result<Option<f64>> {
        match v.get(k) {
            Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => parse_real(s).map(Some),
            _ => Err(Error::Parse(format!("summary: missing real `{k}`"))),
        }
    };
    let array = |k: &str| -> Result<&Vec<Value>> {
        v.get(k)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse(format!("summary: missing array `{k}`")))
    };
    let per_fraction = array("per_fraction")?
        .iter()
        .map(|f| {
            Ok(super::grid::FractionStats {
                fraction: real(f, "fraction")?.unwrap_or(f64::NAN),
                cases: count(f, "cases")?,
                mean_fsr: real(f, "mean_fsr")?,
                mean_best_lambda: real(f, "mean_best_lambda")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_lambda_histogram = array("best_lambda_histogram")?
        .iter()
        .map(|b| {
            Ok(super::grid::HistogramBin {
                lambda_lo: real(b, "lambda_lo")?.unwrap_or(f64::NAN),
                lambda_hi: real(b, "lambda_hi")?.unwrap_or(f64::NAN),
                count: count(b, "count")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepSummary {
        overall_cases: count(&v, "overall_cases")?,
        unchanged_cases: count(&v, "unchanged_cases")?,
        improved_cases: count(&v, "improved_cases")?,
        not_improved_cases: count(&v, "not_improved_cases")?,
        zero_accuracy_cases: count(&v, "zero_accuracy_cases")?,
        failed_cases: count(&v, "failed_cases")?,
        avg_improvement_of_improved: real(&v, "avg_improvement_of_improved")?,
        spearman_fsr_vs_best_lambda: real(&v, "spearman_fsr_vs_best_lambda")?,
        spearman_lnshift_vs_wasserstein: real(&v, "spearman_lnshift_vs_wasserstein")?,
        per_fraction,
        best_lambda_histogram,
    })
}

/// Write every report file into `out_dir`, creating it if needed.
pub fn write_report(
    results: &[CaseResult],
    summary: &SweepSummary,
    lambda_grid: &[f64],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    ensure!(!results.is_empty(), "cannot report an empty result set");
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hist_header: Vec<String> = ["lambda_lo", "lambda_hi", "count"].map(String::from).to_vec();
    let hist = csv_bytes(
        &hist_header,
        summary.best_lambda_histogram.iter().map(|b| {
            vec![format_real(b.lambda_lo), format_real(b.lambda_hi), b.count.to_string()]
        }),
    )?;
    let frac_header: Vec<String> = ["fraction", "cases", "mean_fsr", "mean_best_lambda"]
        .map(String::from)
        .to_vec();
    let frac = csv_bytes(
        &frac_header,
        summary.per_fraction.iter().map(|f| {
            vec![
                format_real(f.fraction),
                f.cases.to_string(),
                format_real(f.mean_fsr.unwrap_or(f64::NAN)),
                format_real(f.mean_best_lambda.unwrap_or(f64::NAN)),
            ]
        }),
    )?;
    let files = [
        (CASES_FILE, cases_csv(results, lambda_grid)?),
        (CASE_SHIFTS_FILE, shifts_csv(results)?),
        (SUMMARY_FILE, summary_json(summary)?.into_bytes()),
        (LAMBDA_HIST_FILE, hist),
        (FSR_BY_FRACTION_FILE, frac),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Read cases.csv (and case_shifts.csv when present) from `dir`.
///
/// Returns the results and the λ grid recovered from the header.
pub fn read_results(dir: &Path) -> Result<(Vec<CaseResult>, Vec<f64>)> {
    let path = dir.join(CASES_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    ensure!(
        header.len() > CASE_COLUMNS.len()
            && header.iter().zip(CASE_COLUMNS).all(|(a, b)| a == b),
        "{} has an unexpected header",
        path.display()
    );
    let lambdas = header
        .iter()
        .skip(CASE_COLUMNS.len())
        .map(|h| {
            h.strip_prefix("acc_lambda_")
                .ok_or_else(|| Error::Parse(format!("bad column `{h}`")))
                .and_then(parse_real)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut results = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ensure!(rec.len() == header.len(), "row {} has {} fields", index + 1, rec.len());
        let real = |i: usize| parse_real(&rec[i]);
        let classes = rec[0]
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad class count `{}`", &rec[0])))?;
        let outcome_class: OutcomeClass = rec[9].parse()?;
        results.push(CaseResult {
            index,
            coords: CaseCoords {
                classes,
                mean_shift: real(1)?,
                var_shift: real(2)?,
                fraction: real(3)?,
            },
            fsr: real(4)?,
            shift_train: f64::NAN,
            shift_full: f64::NAN,
            accuracy_at_lambda: (CASE_COLUMNS.len()..rec.len())
                .map(real)
                .collect::<Result<_>>()?,
            baseline_accuracy: real(5)?,
            best_lambda: real(6)?,
            best_accuracy: real(7)?,
            improvement: real(8)?,
            outcome_class,
            ln_shift_total: f64::NAN,
            gamma_shift: f64::NAN,
            beta_shift: f64::NAN,
            error: None,
        });
    }

    let shifts = dir.join(CASE_SHIFTS_FILE);
    if shifts.exists() {
        let file = fs::File::open(&shifts).map_err(|e| Error::io(&shifts, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        for rec in rdr.records() {
            let rec = rec?;
            ensure!(rec.len() == SHIFT_COLUMNS.len(), "{}: bad row", shifts.display());
            let i = rec[0]
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad case index `{}`", &rec[0])))?;
            let r = results
                .get_mut(i)
                .ok_or_else(|| Error::Parse(format!("case index {i} out of range")))?;
            r.shift_train = parse_real(&rec[1])?;
            r.shift_full = parse_real(&rec[2])?;
            r.ln_shift_total = parse_real(&rec[3])?;
            r.gamma_shift = parse_real(&rec[4])?;
            r.beta_shift = parse_real(&rec[5])?;
        }
    }
    Ok((results, lambdas))
}
