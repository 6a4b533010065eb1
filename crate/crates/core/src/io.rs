//! File formats: flat binary blobs for lattice fields and pixel images, the
//! CSV schemas shared by the analysis pipeline, and JSON for fit results and
//! table metadata.
//!
//! All binary values are little-endian. CSV floats are written with
//! shortest-roundtrip formatting (scientific notation outside a moderate
//! magnitude range), so identical data always serializes to identical bytes.
//! Correlation-map cells that are masked (missing or unusable) serialize
//! their value columns as NaN; the flag is recovered on read from the sample
//! count and value finiteness, so usability survives a round trip while the
//! untrusted numbers do not.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lattice::PhaseField;
use crate::observables::{CellFlag, CorrelationMap, ExponentPoint, ExponentSeries, MapKind, PointQuality};
use crate::scaling::{CollapsePoint, ScalingFit, ScalingFunctionTable, TableProvenance};

/// Shortest-roundtrip float formatting, stable across runs. Writers that
/// need byte-deterministic CSV output should format every float through
/// this.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Field blob: header (side: u64, spacing: f64, time: f64), payload side²
/// doubles row-major.
pub fn write_field_blob<W: Write>(field: &PhaseField, w: &mut W) -> Result<()> {
    w.write_all(&(field.side() as u64).to_le_bytes())?;
    w.write_all(&field.spacing().to_le_bytes())?;
    w.write_all(&field.time().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_blob<R: Read>(r: &mut R) -> Result<PhaseField> {
    let side = read_u64(r)?;
    if side > 1 << 16 {
        return Err(Error::Format(format!("implausible field side {side}")));
    }
    let side = side as usize;
    let spacing = read_f64(r)?;
    let time = read_f64(r)?;
    let values = read_f64_payload(r, side * side)?;
    PhaseField::from_values(side, spacing, time, values)
        .map_err(|e| Error::Format(format!("field blob failed validation: {e}")))
}

/// Debug CSV dump of a field: one `x,y,value` row per site, row-major.
pub fn write_field_csv<W: Write>(field: &PhaseField, w: &mut W) -> Result<()> {
    writeln!(w, "x,y,value")?;
    let l = field.side();
    for y in 0..l {
        for x in 0..l {
            writeln!(w, "{x},{y},{}", fmt_f64(field.get(x, y)))?;
        }
    }
    Ok(())
}

/// Image blob: header (width: u64, height: u64), payload width·height
/// doubles row-major.
pub fn write_image_blob<W: Write>(width: usize, height: usize, data: &[f64], w: &mut W) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Parameter(format!(
            "image payload length {} does not match {width}x{height}",
            data.len()
        )));
    }
    w.write_all(&(width as u64).to_le_bytes())?;
    w.write_all(&(height as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_image_blob<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<f64>)> {
    let width = read_u64(r)?;
    let height = read_u64(r)?;
    if width == 0 || height == 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(Error::Format(format!(
            "implausible image dimensions {width}x{height}"
        )));
    }
    let data = read_f64_payload(r, (width * height) as usize)?;
    Ok((width as usize, height as usize, data))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn parse_f64(raw: &str, column: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::Format(format!("bad float {raw:?} in column {column}")))
}

fn check_header(got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Format(format!(
            "unexpected header {:?}, want {}",
            got.iter().collect::<Vec<_>>().join(","),
            want.join(",")
        )));
    }
    Ok(())
}

const CORRELATION_HEADER: [&str; 7] = ["dr", "dt", "re_g1", "im_g1", "abs_g1", "stderr", "n_samples"];

/// Correlation-map CSV: one row per cell, Δt-major. Masked cells write NaN
/// value columns; their sample count is kept so missing (0 samples) and
/// unusable (samples present, value untrusted) stay distinguishable.
pub fn write_correlation_csv<W: Write>(map: &CorrelationMap, w: &mut W) -> Result<()> {
    writeln!(w, "{}", CORRELATION_HEADER.join(","))?;
    for (j, &dt) in map.dt_axis().iter().enumerate() {
        for (i, &dr) in map.dr_axis().iter().enumerate() {
            let (re, im, norm, se) = if map.flag(i, j) == CellFlag::Ok {
                let v = map.value(i, j);
                (v.re, v.im, v.norm(), map.stderr(i, j))
            } else {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(dr),
                fmt_f64(dt),
                fmt_f64(re),
                fmt_f64(im),
                fmt_f64(norm),
                fmt_f64(se),
                map.n_samples(i, j)
            )?;
        }
    }
    Ok(())
}

/// Reads a correlation-map CSV back. The rows must tile a full axis product
/// exactly once each, in any order; the map kind is not stored in the file
/// and must be supplied by the caller.
pub fn read_correlation_csv<R: Read>(kind: MapKind, r: &mut R) -> Result<CorrelationMap> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&rdr.headers().map_err(csv_err)?.clone(), &CORRELATION_HEADER)?;
    struct Row {
        dr: f64,
        dt: f64,
        value: Complex64,
        stderr: f64,
        n: u64,
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != CORRELATION_HEADER.len() {
            return Err(Error::Format(format!("row has {} fields, want 7", rec.len())));
        }
        let dr = parse_f64(&rec[0], "dr")?;
        let dt = parse_f64(&rec[1], "dt")?;
        if !dr.is_finite() || !dt.is_finite() {
            return Err(Error::Format(format!("non-finite axis value ({dr}, {dt})")));
        }
        let value = Complex64::new(parse_f64(&rec[2], "re_g1")?, parse_f64(&rec[3], "im_g1")?);
        parse_f64(&rec[4], "abs_g1")?;
        let stderr = parse_f64(&rec[5], "stderr")?;
        let n: u64 = rec[6]
            .parse()
            .map_err(|_| Error::Format(format!("bad sample count {:?}", &rec[6])))?;
        rows.push(Row { dr, dt, value, stderr, n });
    }
    let mut dr_axis: Vec<f64> = rows.iter().map(|r| r.dr).collect();
    dr_axis.sort_by(f64::total_cmp);
    dr_axis.dedup();
    let mut dt_axis: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    dt_axis.sort_by(f64::total_cmp);
    dt_axis.dedup();
    let n_cells = dr_axis.len() * dt_axis.len();
    if rows.len() != n_cells {
        return Err(Error::Format(format!(
            "{} rows do not tile the {}x{} axis grid",
            rows.len(),
            dr_axis.len(),
            dt_axis.len()
        )));
    }
    let mut values = vec![Complex64::new(f64::NAN, f64::NAN); n_cells];
    let mut stderr = vec![f64::NAN; n_cells];
    let mut n_samples = vec![0u64; n_cells];
    let mut flags = vec![CellFlag::Missing; n_cells];
    let mut seen = vec![false; n_cells];
    for row in &rows {
        let i = dr_axis.binary_search_by(|v| v.total_cmp(&row.dr)).unwrap();
        let j = dt_axis.binary_search_by(|v| v.total_cmp(&row.dt)).unwrap();
        let idx = j * dr_axis.len() + i;
        if seen[idx] {
            return Err(Error::Format(format!(
                "duplicate cell at (dr, dt) = ({}, {})",
                row.dr, row.dt
            )));
        }
        seen[idx] = true;
        n_samples[idx] = row.n;
        if row.n == 0 {
            continue;
        }
        if row.value.re.is_finite() && row.value.im.is_finite() && row.stderr.is_finite() {
            values[idx] = row.value;
            stderr[idx] = row.stderr;
            flags[idx] = CellFlag::Ok;
        } else {
            flags[idx] = CellFlag::Unusable;
        }
    }
    CorrelationMap::from_parts(kind, dr_axis, dt_axis, values, stderr, n_samples, flags)
        .map_err(|e| Error::Format(format!("correlation csv failed validation: {e}")))
}

const EXPONENT_HEADER: [&str; 4] = ["axis_value", "exponent", "stderr", "quality_flag"];

/// Running-exponent series CSV, one row per axis point in series order.
pub fn write_exponent_csv<W: Write>(series: &ExponentSeries, w: &mut W) -> Result<()> {
    writeln!(w, "{}", EXPONENT_HEADER.join(","))?;
    for p in &series.points {
        let quality = match p.quality {
            PointQuality::Interior => "interior",
            PointQuality::Edge => "edge",
        };
        writeln!(
            w,
            "{},{},{},{quality}",
            fmt_f64(p.axis_value),
            fmt_f64(p.exponent),
            fmt_f64(p.stderr)
        )?;
    }
    Ok(())
}

pub fn read_exponent_csv<R: Read>(r: &mut R) -> Result<ExponentSeries> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&rdr.headers().map_err(csv_err)?.clone(), &EXPONENT_HEADER)?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != EXPONENT_HEADER.len() {
            return Err(Error::Format(format!("row has {} fields, want 4", rec.len())));
        }
        let quality = match &rec[3] {
            "interior" => PointQuality::Interior,
            "edge" => PointQuality::Edge,
            other => return Err(Error::Format(format!("unknown quality flag {other:?}"))),
        };
        points.push(ExponentPoint {
            axis_value: parse_f64(&rec[0], "axis_value")?,
            exponent: parse_f64(&rec[1], "exponent")?,
            stderr: parse_f64(&rec[2], "stderr")?,
            quality,
        });
    }
    if points.is_empty() {
        return Err(Error::Format("exponent csv has no data rows".into()));
    }
    Ok(ExponentSeries { points })
}

/// JSON encoding for possibly non-finite floats: finite numbers stay
/// numbers, non-finite values become their display strings ("inf", "-inf",
/// "NaN") because JSON has no literal for them.
fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn f64_from_json(v: &Value, name: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Format(format!("{name} is not representable as f64"))),
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::Format(format!("{name} is not a float string: {s:?}"))),
        _ => Err(Error::Format(format!("{name} must be a number"))),
    }
}

fn field<'v>(v: &'v Value, name: &str) -> Result<&'v Value> {
    v.get(name)
        .ok_or_else(|| Error::Format(format!("missing field {name:?}")))
}

const TABLE_HEADER: [&str; 2] = ["y", "C_of_y"];

/// Scaling-function table CSV: the grid including the y = 0 anchor row.
pub fn write_scaling_table_csv<W: Write>(table: &ScalingFunctionTable, w: &mut W) -> Result<()> {
    writeln!(w, "{}", TABLE_HEADER.join(","))?;
    for (y, c) in table.y_grid().iter().zip(table.values()) {
        writeln!(w, "{},{}", fmt_f64(*y), fmt_f64(*c))?;
    }
    Ok(())
}

/// Table metadata JSON: the provenance block that, together with the CSV,
/// reconstructs the table exactly.
pub fn write_table_metadata_json<W: Write>(p: &TableProvenance, w: &mut W) -> Result<()> {
    let doc = json!({
        "beta": json_f64(p.beta),
        "chi": json_f64(p.chi),
        "window": {
            "dr": [json_f64(p.window.0 .0), json_f64(p.window.0 .1)],
            "dt": [json_f64(p.window.1 .0), json_f64(p.window.1 .1)],
        },
        "n_cells": p.n_cells,
        "tail_exponent": json_f64(p.tail_exponent),
        "source": p.source,
    });
    serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| Error::Format(format!("json: {e}")))?;
    writeln!(w)?;
    Ok(())
}

pub fn read_table_metadata_json<R: Read>(r: &mut R) -> Result<TableProvenance> {
    let doc: Value =
        serde_json::from_reader(r).map_err(|e| Error::Format(format!("json: {e}")))?;
    let pair = |v: &Value, name: &str| -> Result<(f64, f64)> {
        let arr = v
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::Format(format!("{name} must be a 2-element array")))?;
        Ok((
            f64_from_json(&arr[0], name)?,
            f64_from_json(&arr[1], name)?,
        ))
    };
    let window = field(&doc, "window")?;
    Ok(TableProvenance {
        beta: f64_from_json(field(&doc, "beta")?, "beta")?,
        chi: f64_from_json(field(&doc, "chi")?, "chi")?,
        window: (
            pair(field(window, "dr")?, "window.dr")?,
            pair(field(window, "dt")?, "window.dt")?,
        ),
        n_cells: field(&doc, "n_cells")?
            .as_u64()
            .ok_or_else(|| Error::Format("n_cells must be a non-negative integer".into()))?
            as usize,
        tail_exponent: f64_from_json(field(&doc, "tail_exponent")?, "tail_exponent")?,
        source: field(&doc, "source")?
            .as_str()
            .ok_or_else(|| Error::Format("source must be a string".into()))?
            .to_string(),
    })
}

/// Reconstructs a table from its CSV and metadata JSON.
pub fn read_scaling_table<R1: Read, R2: Read>(csv: &mut R1, meta: &mut R2) -> Result<ScalingFunctionTable> {
    let provenance = read_table_metadata_json(meta)?;
    let mut rdr = csv::Reader::from_reader(csv);
    check_header(&rdr.headers().map_err(csv_err)?.clone(), &TABLE_HEADER)?;
    let mut y_grid = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != TABLE_HEADER.len() {
            return Err(Error::Format(format!("row has {} fields, want 2", rec.len())));
        }
        y_grid.push(parse_f64(&rec[0], "y")?);
        values.push(parse_f64(&rec[1], "C_of_y")?);
    }
    ScalingFunctionTable::from_bins(y_grid, values, provenance)
        .map_err(|e| Error::Format(format!("table csv failed validation: {e}")))
}

/// Collapse-fit result JSON: every fit field, the full 4x4 covariance in
/// (β, χ, A, B) order, and the derived dynamical exponent.
pub fn write_scaling_fit_json<W: Write>(fit: &ScalingFit, w: &mut W) -> Result<()> {
    let covariance: Vec<Vec<Value>> = fit
        .covariance
        .iter()
        .map(|row| row.iter().map(|&c| json_f64(c)).collect())
        .collect();
    let doc = json!({
        "beta": json_f64(fit.beta),
        "chi": json_f64(fit.chi),
        "z": json_f64(fit.z()),
        "amplitude_a": json_f64(fit.amplitude_a),
        "amplitude_b": json_f64(fit.amplitude_b),
        "covariance": covariance,
        "covariance_order": ["beta", "chi", "amplitude_a", "amplitude_b"],
        "excluded_mask": fit.excluded_mask,
        "n_iterations": fit.n_iterations,
        "residual_rms": json_f64(fit.residual_rms),
    });
    serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| Error::Format(format!("json: {e}")))?;
    writeln!(w)?;
    Ok(())
}

const COLLAPSE_HEADER: [&str; 7] = ["x_rescaled", "y_rescaled", "err_x", "err_y", "excluded_flag", "dr", "dt"];

/// Collapse-plane CSV: rescaled coordinates, per-axis errors, the exclusion
/// flag (0/1), and the originating cell, one row per fit-usable cell.
pub fn write_collapse_csv<W: Write>(points: &[CollapsePoint], w: &mut W) -> Result<()> {
    writeln!(w, "{}", COLLAPSE_HEADER.join(","))?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.err_x),
            fmt_f64(p.err_y),
            u8::from(p.excluded),
            fmt_f64(p.dr),
            fmt_f64(p.dt)
        )?;
    }
    Ok(())
}

/// Debug CSV dump of a pixel image: one `x,y,value` row per pixel, row-major.
pub fn write_image_csv<W: Write>(width: usize, height: usize, data: &[f64], w: &mut W) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Parameter(format!(
            "image payload length {} does not match {width}x{height}",
            data.len()
        )));
    }
    writeln!(w, "x,y,value")?;
    for y in 0..height {
        for x in 0..width {
            writeln!(w, "{x},{y},{}", fmt_f64(data[y * width + x]))?;
        }
    }
    Ok(())
}

pub fn read_image_csv<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&rdr.headers().map_err(csv_err)?.clone(), &["x", "y", "value"])?;
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    let mut width = 0usize;
    let mut height = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("row has {} fields, want 3", rec.len())));
        }
        let x: usize = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad pixel x {:?}", &rec[0])))?;
        let y: usize = rec[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad pixel y {:?}", &rec[1])))?;
        width = width.max(x + 1);
        height = height.max(y + 1);
        rows.push((x, y, parse_f64(&rec[2], "value")?));
    }
    if rows.is_empty() {
        return Err(Error::Format("image csv has no pixels".into()));
    }
    let mut data = vec![0.0; width * height];
    let mut seen = vec![false; width * height];
    for (x, y, v) in rows {
        let idx = y * width + x;
        if seen[idx] {
            return Err(Error::Format(format!("duplicate pixel ({x}, {y})")));
        }
        seen[idx] = true;
        data[idx] = v;
    }
    if !seen.iter().all(|s| *s) {
        return Err(Error::Format(format!(
            "pixels do not tile a {width}x{height} frame"
        )));
    }
    Ok((width, height, data))
}
