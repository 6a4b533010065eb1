//! Canned end-to-end pipelines. `reproduce-beta` chains a growth run, the
//! zero-separation correlator, and the running growth exponent into a single
//! plateau estimate with an uncertainty, timing each stage for the manifest.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use kpz2d::io::{fmt_f64, write_correlation_csv, write_exponent_csv};
use kpz2d::kpz::run_ensemble_snapshots;
use kpz2d::observables::{connected_correlator, running_exponent_growth, ExponentSeries, PointQuality};
use kpz2d::{Error, Result};

use crate::commands::{simulate, write_buffered};
use crate::config::KpzJob;

pub struct StageTiming {
    pub name: String,
    pub wall_seconds: f64,
}

/// Minimum axis ratio a plateau window must span (one decade).
const PLATEAU_SPAN: f64 = 10.0;
/// Minimum number of exponent points inside the window.
const PLATEAU_MIN_POINTS: usize = 4;
/// Snapshot grids denser than this are kept as configured; sparser ones are
/// replaced with a log-spaced grid so the running exponent has support.
const MIN_RECIPE_SNAPSHOTS: usize = 8;
/// Snapshots per decade of the generated grid.
const SNAPSHOTS_PER_DECADE: f64 = 12.0;

pub fn reproduce_beta(job: &KpzJob, out: &Path) -> Result<(Vec<String>, Vec<StageTiming>)> {
    let mut params = job.params.clone();
    if params.snapshot_times.len() < MIN_RECIPE_SNAPSHOTS {
        if let Some(grid) = log_snapshot_grid(params.dt, params.t_max) {
            params.snapshot_times = grid;
        }
    }

    let mut stages = Vec::new();
    let clock = Instant::now();
    let ensemble = run_ensemble_snapshots(&params)?;
    write_buffered(out, "roughness.csv", |buf| simulate::write_roughness(&ensemble, buf))?;
    stages.push(StageTiming {
        name: "simulate-kpz".into(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    });

    // The engine rounds each requested snapshot time to its nearest step, so
    // the lag grid is read back from the fields rather than from the config.
    let clock = Instant::now();
    let dt_grid: Vec<f64> = ensemble[0]
        .iter()
        .map(|f| f.time())
        .filter(|&t| t > 0.0)
        .collect();
    let map = connected_correlator(&ensemble, &[0.0], &dt_grid, (0.0, 0.0))?;
    write_buffered(out, "correlations.csv", |buf| write_correlation_csv(&map, buf))?;
    stages.push(StageTiming {
        name: "analyze-correlations".into(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    });

    let clock = Instant::now();
    let series = running_exponent_growth(&map)?;
    write_buffered(out, "exponents_dt.csv", |buf| write_exponent_csv(&series, buf))?;
    let plateau = plateau_estimate(&series)?;
    write_buffered(out, "plateau.csv", |buf| {
        writeln!(buf, "axis_lo,axis_hi,n_points,plateau,stderr")?;
        writeln!(
            buf,
            "{},{},{},{},{}",
            fmt_f64(plateau.axis_lo),
            fmt_f64(plateau.axis_hi),
            plateau.n_points,
            fmt_f64(plateau.value),
            fmt_f64(plateau.stderr)
        )?;
        Ok(())
    })?;
    stages.push(StageTiming {
        name: "running-exponents".into(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    });

    Ok((
        vec![
            "roughness.csv".to_string(),
            "correlations.csv".to_string(),
            "exponents_dt.csv".to_string(),
            "plateau.csv".to_string(),
        ],
        stages,
    ))
}

/// Log-spaced snapshot times 0 ∪ [t_lo, t_max], t_lo chosen late enough that
/// adjacent times land on distinct integration steps. None when the horizon
/// is too short to fit such a grid.
fn log_snapshot_grid(dt: f64, t_max: f64) -> Option<Vec<f64>> {
    let t_lo = (20.0 * dt).max(t_max / 1000.0);
    if !(t_lo > 0.0) || t_lo >= t_max {
        return None;
    }
    let mut times = vec![0.0];
    let step = 10f64.powf(1.0 / SNAPSHOTS_PER_DECADE);
    let mut t = t_lo;
    while t < t_max * (1.0 - 1e-12) {
        times.push(t);
        t *= step;
    }
    times.push(t_max);
    Some(times)
}

#[derive(Debug)]
pub struct Plateau {
    pub axis_lo: f64,
    pub axis_hi: f64,
    pub n_points: usize,
    pub value: f64,
    pub stderr: f64,
}

/// Picks the flattest decade-wide window of a running-exponent series: among
/// all windows spanning at least a factor `PLATEAU_SPAN` in the axis with at
/// least `PLATEAU_MIN_POINTS` interior points, the one whose constant fit
/// has the smallest chi² per degree of freedom (ties prefer longer, then
/// earlier windows). The fit is inverse-variance weighted when every point
/// carries a positive error; the reported error is the weighted-mean error,
/// inflated by √(chi²/dof) when the scatter exceeds the nominal errors.
pub fn plateau_estimate(series: &ExponentSeries) -> Result<Plateau> {
    let pts: Vec<(f64, f64, f64)> = series
        .points
        .iter()
        .filter(|p| p.quality == PointQuality::Interior)
        .map(|p| (p.axis_value, p.exponent, p.stderr))
        .collect();
    let mut best: Option<(f64, usize, usize, Plateau)> = None;
    for i in 0..pts.len() {
        for j in i + PLATEAU_MIN_POINTS - 1..pts.len() {
            if pts[j].0 < PLATEAU_SPAN * pts[i].0 {
                continue;
            }
            let window = &pts[i..=j];
            let candidate = constant_fit(window);
            let metric = candidate.0;
            let len = j - i;
            let better = match &best {
                None => true,
                Some((m, l, start, _)) => {
                    (metric, std::cmp::Reverse(len), i) < (*m, std::cmp::Reverse(*l), *start)
                }
            };
            if better {
                best = Some((metric, len, i, candidate.1));
            }
        }
    }
    best.map(|(_, _, _, p)| p).ok_or_else(|| {
        Error::InsufficientData(format!(
            "no window of {PLATEAU_MIN_POINTS}+ interior exponent points spans a factor {PLATEAU_SPAN} in the axis"
        ))
    })
}

/// Constant fit over one candidate window: (chi² per dof, plateau).
fn constant_fit(window: &[(f64, f64, f64)]) -> (f64, Plateau) {
    let n = window.len() as f64;
    let weighted = window.iter().all(|&(_, _, s)| s > 0.0);
    let (value, stderr, metric);
    if weighted {
        let wsum: f64 = window.iter().map(|&(_, _, s)| s.powi(-2)).sum();
        value = window.iter().map(|&(_, y, s)| y / (s * s)).sum::<f64>() / wsum;
        let chi2: f64 = window
            .iter()
            .map(|&(_, y, s)| ((y - value) / s).powi(2))
            .sum();
        let chi2_dof = chi2 / (n - 1.0);
        metric = chi2_dof;
        stderr = wsum.powf(-0.5) * chi2_dof.sqrt().max(1.0);
    } else {
        value = window.iter().map(|&(_, y, _)| y).sum::<f64>() / n;
        let var = window
            .iter()
            .map(|&(_, y, _)| (y - value).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        metric = var;
        stderr = (var / n).sqrt();
    }
    (
        metric,
        Plateau {
            axis_lo: window[0].0,
            axis_hi: window[window.len() - 1].0,
            n_points: window.len(),
            value,
            stderr,
        },
    )
}
