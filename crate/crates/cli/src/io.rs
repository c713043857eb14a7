//! CSV artifacts. Floats are written with `Display`, which is the shortest string that
//! parses back to the same `f64`, so files are byte-stable and lossless.

use std::path::Path;

use nalgebra::DMatrix;
use rangeloc::experiment::EstimateRow;
use rangeloc::truth::{Model, TruthTrace};
use rangeloc::Vec3;

use crate::error::{io_error, CliError};

/// Relative slack when matching a file's time column against `k ts`.
const TIME_SLACK: f64 = 1e-9;

pub const FREE_TRACE_HEADER: [&str; 7] = ["k", "t", "x1", "x2", "x3", "y_clean", "y"];
pub const CURRENT_TRACE_HEADER: [&str; 10] =
    ["k", "t", "x1", "x2", "x3", "r1", "r2", "r3", "y_clean", "y"];

fn csv_error(path: &Path, err: impl std::fmt::Display) -> CliError {
    CliError::Csv {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn push3(row: &mut Vec<String>, v: &Vec3) {
    row.extend(v.iter().map(f64::to_string));
}

pub fn write_trace(path: &Path, model: Model, trace: &TruthTrace) -> Result<(), CliError> {
    let header: &[&str] = match model {
        Model::Free => &FREE_TRACE_HEADER,
        Model::Current => &CURRENT_TRACE_HEADER,
    };
    let rows = (0..trace.len()).map(|k| {
        let mut row = vec![k.to_string(), trace.time(k).to_string()];
        push3(&mut row, &trace.x[k]);
        if model == Model::Current {
            push3(&mut row, &trace.r[k]);
        }
        row.push(trace.y_clean[k].to_string());
        row.push(trace.y[k].to_string());
        row
    });
    write_rows(path, header, rows)
}

fn check_time(path: &Path, k: usize, t: f64, ts: f64) -> Result<(), CliError> {
    let want = k as f64 * ts;
    if (t - want).abs() > TIME_SLACK * want.abs().max(1.0) {
        return Err(csv_error(
            path,
            format!("row {k}: t = {t} does not match k*ts = {want}"),
        ));
    }
    Ok(())
}

fn parse_fields(
    path: &Path,
    record: &csv::StringRecord,
    line: usize,
) -> Result<Vec<f64>, CliError> {
    record
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| csv_error(path, format!("line {line}: {f:?}: {e}")))
        })
        .collect()
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(parse_fields(path, &rec, i + 2)?);
    }
    Ok((header, rows))
}

/// Reads a truth trace written by [`write_trace`]; the model is inferred from the header.
pub fn read_trace(path: &Path, ts: f64) -> Result<(Model, TruthTrace), CliError> {
    let (header, rows) = read_table(path)?;
    let model = if header == FREE_TRACE_HEADER {
        Model::Free
    } else if header == CURRENT_TRACE_HEADER {
        Model::Current
    } else {
        return Err(csv_error(path, format!("unrecognized header {header:?}")));
    };
    let mut trace = TruthTrace {
        ts,
        x: Vec::with_capacity(rows.len()),
        r: Vec::new(),
        y: Vec::with_capacity(rows.len()),
        y_clean: Vec::with_capacity(rows.len()),
        clamped: 0,
    };
    for (k, row) in rows.iter().enumerate() {
        if row[0] != k as f64 {
            return Err(csv_error(
                path,
                format!("row {k}: expected k = {k}, got {}", row[0]),
            ));
        }
        check_time(path, k, row[1], ts)?;
        trace.x.push(Vec3::new(row[2], row[3], row[4]));
        if model == Model::Current {
            trace.r.push(Vec3::new(row[5], row[6], row[7]));
        }
        let n = row.len();
        trace.y_clean.push(row[n - 2]);
        trace.y.push(row[n - 1]);
    }
    if trace.is_empty() {
        return Err(csv_error(path, "no rows"));
    }
    Ok((model, trace))
}

/// Body-frame velocity samples from `t,ux,uy,uz` rows at `t = k ts`.
pub fn read_input_csv(path: &Path, ts: f64) -> Result<Vec<Vec3>, CliError> {
    let (header, rows) = read_table(path)?;
    if header != ["t", "ux", "uy", "uz"] {
        return Err(csv_error(
            path,
            format!("expected header t,ux,uy,uz, got {header:?}"),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            check_time(path, k, row[0], ts)?;
            Ok(Vec3::new(row[1], row[2], row[3]))
        })
        .collect()
}

pub fn write_estimates(path: &Path, model: Model, rows: &[EstimateRow]) -> Result<(), CliError> {
    let mut header = vec!["k", "t", "xhat1", "xhat2", "xhat3", "err_norm", "trace_P"];
    if model == Model::Current {
        header.extend(["vfhat1", "vfhat2", "vfhat3"]);
    }
    let out = rows.iter().map(|r| {
        let mut row = vec![r.k.to_string(), r.t.to_string()];
        push3(&mut row, &r.xhat);
        row.push(r.err_norm.to_string());
        row.push(r.trace_p.to_string());
        if let Some(vf) = &r.vfhat {
            push3(&mut row, vf);
        }
        row
    });
    write_rows(path, &header, out)
}

pub fn write_errors(path: &Path, model: Model, rows: &[EstimateRow]) -> Result<(), CliError> {
    let mut header = vec!["k", "t", "err_norm"];
    if model == Model::Current {
        header.push("vf_err");
    }
    let out = rows.iter().map(|r| {
        let mut row = vec![r.k.to_string(), r.t.to_string(), r.err_norm.to_string()];
        if let Some(e) = r.vf_err {
            row.push(e.to_string());
        }
        row
    });
    write_rows(path, &header, out)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("c{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = m.row_iter().map(|r| r.iter().map(f64::to_string).collect());
    write_rows(path, &header, rows)
}
