//! The two simulation subcommands: ensemble integration plus the artifacts
//! every downstream stage consumes (field blobs with an index, roughness and
//! density series, optional coherence maps).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use kpz2d::gpe::{g1_estimator, run_ensemble_fields};
use kpz2d::io::{fmt_f64, write_correlation_csv, write_field_blob};
use kpz2d::kpz::run_ensemble_snapshots;
use kpz2d::lattice::PhaseField;
use kpz2d::observables::{reflection_dr_grid, roughness};
use kpz2d::{Error, Result};

use crate::config::{GpeJob, KpzJob};

use super::{mean_and_stderr, write_buffered};

pub const FIELDS_INDEX: &str = "fields_index.csv";

pub fn simulate_kpz(job: &KpzJob, out: &Path) -> Result<Vec<String>> {
    let ensemble = run_ensemble_snapshots(&job.params)?;
    fs::create_dir_all(out.join("fields"))?;
    let mut index = String::from("realization,snapshot,time,path\n");
    for (r, snaps) in ensemble.iter().enumerate() {
        for (s, field) in snaps.iter().enumerate() {
            let rel = format!("fields/r{r:04}_s{s:03}.bin");
            let mut w = BufWriter::new(File::create(out.join(&rel))?);
            write_field_blob(field, &mut w)?;
            w.flush()?;
            index.push_str(&format!("{r},{s},{},{rel}\n", fmt_f64(field.time())));
        }
    }
    fs::write(out.join(FIELDS_INDEX), index)?;
    write_buffered(out, "roughness.csv", |buf| write_roughness(&ensemble, buf))?;
    Ok(vec![FIELDS_INDEX.to_string(), "roughness.csv".to_string()])
}

/// Ensemble roughness series: per snapshot time, the mean spatial variance
/// across realizations and its scatter-based standard error.
pub fn write_roughness(ensemble: &[Vec<PhaseField>], buf: &mut Vec<u8>) -> Result<()> {
    writeln!(buf, "time,w2,stderr")?;
    let n_snapshots = ensemble.first().map_or(0, Vec::len);
    for s in 0..n_snapshots {
        let values: Vec<f64> = ensemble.iter().map(|snaps| roughness(&snaps[s])).collect();
        let (mean, stderr) = mean_and_stderr(&values);
        writeln!(
            buf,
            "{},{},{}",
            fmt_f64(ensemble[0][s].time()),
            fmt_f64(mean),
            fmt_f64(stderr)
        )?;
    }
    Ok(())
}

pub fn simulate_gpe(job: &GpeJob, out: &Path) -> Result<Vec<String>> {
    let ensemble = run_ensemble_fields(&job.params)?;
    write_buffered(out, "density.csv", |buf| {
        writeln!(buf, "time,density,stderr")?;
        let n_snapshots = ensemble.first().map_or(0, Vec::len);
        for s in 0..n_snapshots {
            let values: Vec<f64> = ensemble
                .iter()
                .map(|snaps| {
                    let field = &snaps[s];
                    field.values().iter().map(|v| v.norm_sqr()).sum::<f64>()
                        / field.values().len() as f64
                })
                .collect();
            let (mean, stderr) = mean_and_stderr(&values);
            writeln!(
                buf,
                "{},{},{}",
                fmt_f64(ensemble[0][s].time()),
                fmt_f64(mean),
                fmt_f64(stderr)
            )?;
        }
        Ok(())
    })?;
    let mut results = vec!["density.csv".to_string()];

    if let Some(a) = &job.analysis {
        let mut grid = reflection_dr_grid(job.params.side, job.params.spacing);
        if let Some(cap) = a.dr_max {
            grid.retain(|&c| c <= cap * (1.0 + 1e-12));
            if grid.is_empty() {
                return Err(Error::Parameter(format!(
                    "dr_max = {cap} leaves no separation bins"
                )));
            }
        }
        let map = g1_estimator(&ensemble, &grid, &a.dt_grid, a.window)?;
        write_buffered(out, "coherence.csv", |buf| write_correlation_csv(&map, buf))?;
        results.push("coherence.csv".to_string());
    }
    Ok(results)
}
