//! CSV datasets and curves, JSON models and reports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::design::FunctionalDataset;
use crate::error::{Result, SflrError};
use crate::model::SflrModel;

fn data_err(line: usize, msg: impl std::fmt::Display) -> SflrError {
    SflrError::Data(format!("line {line}: {msg}"))
}

/// Reads a dataset file. The header is `t, t_1, …, t_n`; each further row is
/// `label, x(t_1), …, x(t_n)` with the label `0`, `1` or `NA`. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<FunctionalDataset> {
    let file = File::open(path.as_ref())?;
    parse_dataset(BufReader::new(file))
}

pub fn parse_dataset<R: BufRead>(reader: R) -> Result<FunctionalDataset> {
    let mut grid: Option<Vec<f64>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<Option<u8>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        match &grid {
            None => {
                if fields[0] != "t" {
                    return Err(data_err(line_no, format!("header must start with 't', found '{}'", fields[0])));
                }
                let mut g = Vec::with_capacity(fields.len() - 1);
                for (col, f) in fields.iter().enumerate().skip(1) {
                    let v: f64 = f
                        .parse()
                        .map_err(|_| data_err(line_no, format!("column {}: bad grid value '{f}'", col + 1)))?;
                    if let Some(&prev) = g.last() {
                        if !(v > prev) {
                            return Err(data_err(
                                line_no,
                                format!("column {}: grid not strictly increasing ({prev} then {v})", col + 1),
                            ));
                        }
                    }
                    g.push(v);
                }
                if g.len() < 2 {
                    return Err(data_err(line_no, "grid needs at least two points"));
                }
                grid = Some(g);
            }
            Some(g) => {
                if fields.len() != g.len() + 1 {
                    return Err(data_err(
                        line_no,
                        format!("expected {} fields, found {}", g.len() + 1, fields.len()),
                    ));
                }
                let label = match fields[0] {
                    "0" => Some(0),
                    "1" => Some(1),
                    "NA" | "na" | "" => None,
                    other => return Err(data_err(line_no, format!("column 1: bad label '{other}'"))),
                };
                labels.push(label);
                for (col, f) in fields.iter().enumerate().skip(1) {
                    let v: f64 = f
                        .parse()
                        .map_err(|_| data_err(line_no, format!("column {}: bad value '{f}'", col + 1)))?;
                    values.push(v);
                }
            }
        }
    }
    let grid = grid.ok_or_else(|| SflrError::Data("missing header row".into()))?;
    if labels.is_empty() {
        return Err(SflrError::EmptyDataset);
    }
    let n_known = labels.iter().filter(|l| l.is_some()).count();
    let labels = if n_known == labels.len() {
        Some(labels.into_iter().map(|l| l.unwrap()).collect())
    } else if n_known == 0 {
        None
    } else {
        let first_na = labels.iter().position(|l| l.is_none()).unwrap();
        return Err(SflrError::Data(format!(
            "data row {}: NA label mixed with known labels",
            first_na + 1
        )));
    };
    let n = labels.as_ref().map_or_else(|| values.len() / grid.len(), Vec::len);
    let x = DMatrix::from_row_slice(n, grid.len(), &values);
    FunctionalDataset::new(grid, x, labels)
}

/// Writes a dataset in the format read by [`read_dataset`]; floats are
/// written with round-trip precision.
pub fn write_dataset<W: Write>(mut out: W, data: &FunctionalDataset, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    write!(out, "t")?;
    for t in data.grid() {
        write!(out, ",{t:?}")?;
    }
    writeln!(out)?;
    for (i, row) in data.values().row_iter().enumerate() {
        match data.labels() {
            Some(l) => write!(out, "{}", l[i])?,
            None => write!(out, "NA")?,
        }
        for v in row.iter() {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_dataset_file(path: impl AsRef<Path>, data: &FunctionalDataset, comments: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, data, comments)?;
    w.flush()?;
    Ok(())
}

/// Writes a CSV with `#` comment lines, a header and numeric rows.
pub fn write_table<W: Write>(mut out: W, header: &[&str], rows: &[Vec<String>], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>], comments: &[String]) -> Result<()> {
    write_table(BufWriter::new(File::create(path)?), header, rows, comments)
}

/// Reads a two-column numeric CSV (e.g. `t, beta`), skipping `#` lines and a
/// non-numeric header.
pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = s.split(',').map(str::trim).collect();
        if f.len() < 2 {
            return Err(data_err(idx + 1, "expected at least two columns"));
        }
        match (f[0].parse::<f64>(), f[1].parse::<f64>()) {
            (Ok(t), Ok(v)) => out.push((t, v)),
            _ if out.is_empty() => continue,
            _ => return Err(data_err(idx + 1, format!("bad numeric pair '{s}'"))),
        }
    }
    if out.len() < 2 {
        return Err(SflrError::Data("curve needs at least two points".into()));
    }
    if out.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(SflrError::Data("curve abscissae must be strictly increasing".into()));
    }
    Ok(out)
}

/// Reads the named column of a CSV with a header, skipping `#` lines.
pub fn read_column(path: impl AsRef<Path>, name: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let col = r
        .headers()?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| SflrError::Data(format!("no column named '{name}'")))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = rec.get(col).unwrap_or("");
        out.push(
            f.parse()
                .map_err(|_| SflrError::Data(format!("data row {}: bad value '{f}' in '{name}'", i + 1)))?,
        );
    }
    Ok(out)
}

/// Piecewise-linear interpolation of a sorted curve; `None` outside its range.
pub fn interpolate(curve: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 <= t);
    if k == curve.len() {
        return Some(last.1);
    }
    let (t0, v0) = curve[k - 1];
    let (t1, v1) = curve[k];
    Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SflrModel> {
    SflrModel::from_json(&std::fs::read_to_string(path)?)
}

pub fn write_json(path: impl AsRef<Path>, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Formats an optional float as a CSV field (`NA` when undefined).
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}
