//! Post-processing subcommands: correlators and running exponents from
//! stored field ensembles, scaling-function tabulation, collapse fitting,
//! and the finite-size roughness fit.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde_json::json;

use kpz2d::io::{
    fmt_f64, read_correlation_csv, read_field_blob, read_scaling_table, write_collapse_csv,
    write_correlation_csv, write_exponent_csv, write_scaling_fit_json, write_scaling_table_csv,
    write_table_metadata_json,
};
use kpz2d::lattice::PhaseField;
use kpz2d::observables::{
    connected_correlator, default_dr_grid, minus_log_g1, running_exponent_growth,
    running_exponent_roughness, CorrelationMap, MapKind,
};
use kpz2d::scaling::{
    collapse_points, finite_size_chi, odr_collapse_fit, sigma_exclusion, tabulate_scaling_function,
};
use kpz2d::{Error, Result};

use crate::config::{AnalyzeJob, Axis, CollapseJob, FiniteSizeJob, TabulateJob};

use super::write_buffered;

pub fn analyze(job: &AnalyzeJob, out: &Path) -> Result<Vec<String>> {
    let ensemble = load_field_ensemble(&job.input_dir)?;
    let first = ensemble
        .first()
        .and_then(|snaps| snaps.first())
        .ok_or_else(|| Error::InsufficientData("the field index lists no snapshots".into()))?;
    let mut grid = default_dr_grid(first.side(), first.spacing());
    if let Some(cap) = job.dr_max {
        grid.retain(|&c| c <= cap * (1.0 + 1e-12));
        if grid.is_empty() {
            return Err(Error::Parameter(format!(
                "dr_max = {cap} leaves no separation bins"
            )));
        }
    }
    let map = connected_correlator(&ensemble, &grid, &job.dt_grid, job.window)?;
    write_buffered(out, "correlations.csv", |buf| write_correlation_csv(&map, buf))?;
    let mut results = vec!["correlations.csv".to_string()];
    for axis in &job.exponent_axes {
        let (series, name) = match axis {
            Axis::Growth => (running_exponent_growth(&map)?, "exponents_dt.csv"),
            Axis::Roughness => (running_exponent_roughness(&map)?, "exponents_dr.csv"),
        };
        write_buffered(out, name, |buf| write_exponent_csv(&series, buf))?;
        results.push(name.to_string());
    }
    Ok(results)
}

/// Loads a field ensemble back from a simulate-kpz output directory via its
/// `fields_index.csv`. Realizations and snapshots are ordered by their index
/// columns; the snapshot times authoritative in the blobs themselves.
fn load_field_ensemble(dir: &Path) -> Result<Vec<Vec<PhaseField>>> {
    let index_path = dir.join(super::simulate::FIELDS_INDEX);
    let text = fs::read_to_string(&index_path).map_err(|e| {
        Error::Format(format!("cannot read field index {}: {e}", index_path.display()))
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some("realization,snapshot,time,path") => {}
        other => {
            return Err(Error::Format(format!(
                "unexpected field index header {other:?}"
            )))
        }
    }
    // (realization, snapshot) -> path, sorted by the integer indices.
    let mut rows: Vec<(usize, usize, String)> = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("malformed field index row {line:?}")));
        }
        let r: usize = cols[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad realization index {:?}", cols[0])))?;
        let s: usize = cols[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad snapshot index {:?}", cols[1])))?;
        rows.push((r, s, cols[3].to_string()));
    }
    rows.sort();
    let mut ensemble: Vec<Vec<PhaseField>> = Vec::new();
    for (r, _, rel) in rows {
        let path = dir.join(&rel);
        let file = File::open(&path)
            .map_err(|e| Error::Format(format!("cannot open field blob {}: {e}", path.display())))?;
        let field = read_field_blob(&mut BufReader::new(file))?;
        if r == ensemble.len() {
            ensemble.push(Vec::new());
        }
        let Some(snaps) = ensemble.get_mut(r) else {
            return Err(Error::Format(format!(
                "field index skips realization {}",
                ensemble.len()
            )));
        };
        snaps.push(field);
    }
    if ensemble.is_empty() {
        return Err(Error::InsufficientData("the field index lists no snapshots".into()));
    }
    Ok(ensemble)
}

fn load_map(path: &Path, kind: MapKind) -> Result<CorrelationMap> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open correlation csv {}: {e}", path.display())))?;
    read_correlation_csv(kind, &mut BufReader::new(file))
}

/// Coherence maps enter the scaling pipeline as −log|g⁽¹⁾|; correlator and
/// already-converted maps pass through.
fn to_positive_correlator(map: CorrelationMap) -> CorrelationMap {
    match map.kind() {
        MapKind::Coherence => minus_log_g1(&map),
        MapKind::Correlation | MapKind::MinusLogCoherence => map,
    }
}

pub fn tabulate(job: &TabulateJob, out: &Path) -> Result<Vec<String>> {
    let map = to_positive_correlator(load_map(&job.correlations, job.kind)?);
    let table = tabulate_scaling_function(&map, job.beta, job.chi, job.window)?;
    write_buffered(out, "table.csv", |buf| write_scaling_table_csv(&table, buf))?;
    write_buffered(out, "table_meta.json", |buf| {
        write_table_metadata_json(table.provenance(), buf)
    })?;
    Ok(vec!["table.csv".to_string(), "table_meta.json".to_string()])
}

pub fn collapse(job: &CollapseJob, out: &Path) -> Result<Vec<String>> {
    let data = to_positive_correlator(load_map(&job.correlations, job.kind)?);
    let csv_file = File::open(&job.table_csv)
        .map_err(|e| Error::Format(format!("cannot open table csv {}: {e}", job.table_csv.display())))?;
    let meta_file = File::open(&job.table_meta)
        .map_err(|e| Error::Format(format!("cannot open table metadata {}: {e}", job.table_meta.display())))?;
    let table = read_scaling_table(&mut BufReader::new(csv_file), &mut BufReader::new(meta_file))?;

    let first = odr_collapse_fit(&data, &table, job.mode)?;
    // A zero threshold skips the exclusion pass entirely.
    let fit = if job.exclusion_threshold > 0.0 {
        sigma_exclusion(&first, &data, &table, job.mode, job.exclusion_threshold)?.1
    } else {
        first
    };
    let points = collapse_points(&data, &fit);
    write_buffered(out, "fit.json", |buf| write_scaling_fit_json(&fit, buf))?;
    write_buffered(out, "collapse.csv", |buf| write_collapse_csv(&points, buf))?;
    Ok(vec!["fit.json".to_string(), "collapse.csv".to_string()])
}

pub fn finite_size(job: &FiniteSizeJob, out: &Path) -> Result<Vec<String>> {
    let mut inputs = job.inputs.clone();
    inputs.sort_by_key(|(side, _)| *side);
    let mut points = Vec::with_capacity(inputs.len());
    for (side, path) in &inputs {
        let (w_sat, err) = saturated_roughness(path, job.saturation_fraction)?;
        points.push((*side as f64, w_sat, err));
    }
    let (two_chi, stderr) = finite_size_chi(&points)?;
    write_buffered(out, "finite_size.csv", |buf| {
        use std::io::Write;
        writeln!(buf, "side,w_sat,stderr")?;
        for (side, w, e) in &points {
            writeln!(buf, "{},{},{}", fmt_f64(*side), fmt_f64(*w), fmt_f64(*e))?;
        }
        Ok(())
    })?;
    write_buffered(out, "finite_size.json", |buf| {
        use std::io::Write;
        let doc = json!({
            "two_chi": two_chi,
            "stderr": stderr,
            "n_sizes": points.len(),
            "saturation_fraction": job.saturation_fraction,
        });
        serde_json::to_writer_pretty(&mut *buf, &doc)
            .map_err(|e| Error::Format(format!("json: {e}")))?;
        writeln!(buf)?;
        Ok(())
    })?;
    Ok(vec!["finite_size.csv".to_string(), "finite_size.json".to_string()])
}

/// Mean roughness over the trailing `fraction` of a roughness.csv series.
/// The error is the mean of the per-row standard errors, not scaled down by
/// the window length: successive snapshots of one ensemble are strongly
/// correlated, so averaging them improves the estimate but not its error.
fn saturated_roughness(path: &Path, fraction: f64) -> Result<(f64, f64)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read roughness csv {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("time,w2,stderr") => {}
        other => return Err(Error::Format(format!("unexpected roughness header {other:?}"))),
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("malformed roughness row {line:?}")));
        }
        let parse = |raw: &str| -> Result<f64> {
            raw.parse()
                .map_err(|_| Error::Format(format!("bad float {raw:?} in roughness csv")))
        };
        rows.push((parse(cols[0])?, parse(cols[1])?, parse(cols[2])?));
    }
    let Some(&(t_last, _, _)) = rows.last() else {
        return Err(Error::InsufficientData(format!(
            "roughness csv {} has no rows",
            path.display()
        )));
    };
    let cut = t_last * (1.0 - fraction);
    let tail: Vec<&(f64, f64, f64)> = rows.iter().filter(|(t, _, _)| *t >= cut).collect();
    let w_sat = tail.iter().map(|(_, w, _)| w).sum::<f64>() / tail.len() as f64;
    let err = tail.iter().map(|(_, _, e)| e).sum::<f64>() / tail.len() as f64;
    Ok((w_sat, err))
}
