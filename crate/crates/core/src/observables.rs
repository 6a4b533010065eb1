//! Correlation and roughness estimators over snapshot ensembles.
//!
//! The central type is [`CorrelationMap`], a (Δr, Δt) grid of cells holding a
//! complex value, a standard error from realization-to-realization scatter,
//! the number of contributing realizations, and a usability flag. Connected
//! phase correlators C(Δr, Δt) = ⟨d²⟩ − ⟨d⟩² (d = θ(r, t₀) − θ(r′, t₀+Δt))
//! and coherence maps share it.
//!
//! Distances are binned by Euclidean separation with bin width a/2 around
//! caller-supplied bin centers; periodic displacements use the minimum-image
//! distance. The connected correlator averages over every ordered site pair
//! at a binned separation via an FFT cross-correlation, over reference times
//! t₀ inside a stationary (or growth) window, and over realizations. The
//! per-pair mean subtraction removes both the deterministic drift of the
//! spatially averaged phase and its stochastic zero-mode wander.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::lattice::PhaseField;

/// Relative tolerance used when matching snapshot times to requested lags.
const TIME_TOL: f64 = 1e-9;

/// What the map's cells mean; fixes the exactness invariant at (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Connected correlator C; real cells, C(0,0) = 0.
    Correlation,
    /// First-order coherence g⁽¹⁾; complex cells, g⁽¹⁾(0,0) = 1.
    Coherence,
    /// −log|g⁽¹⁾|; real cells, 0 at (0,0).
    MinusLogCoherence,
}

/// Per-cell usability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    Ok,
    /// No samples landed in the cell.
    Missing,
    /// Value present but not trustworthy (e.g. |g⁽¹⁾| at or below its own
    /// standard error when taking logs).
    Unusable,
}

/// A (Δr, Δt) grid of correlation estimates.
///
/// `n_samples` counts the realizations contributing to a cell: the standard
/// error comes from realization scatter, so the realization is the sampling
/// unit. Cells are stored Δt-major: index = i_dt·n_dr + i_dr.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    kind: MapKind,
    dr_axis: Vec<f64>,
    dt_axis: Vec<f64>,
    values: Vec<Complex64>,
    stderr: Vec<f64>,
    n_samples: Vec<u64>,
    flags: Vec<CellFlag>,
}

impl CorrelationMap {
    /// Assembles a map from parallel cell arrays (Δt-major), validating the
    /// axes and the exactness invariant at (Δr, Δt) = (0, 0) when both axes
    /// contain zero.
    pub fn from_parts(
        kind: MapKind,
        dr_axis: Vec<f64>,
        dt_axis: Vec<f64>,
        values: Vec<Complex64>,
        stderr: Vec<f64>,
        n_samples: Vec<u64>,
        flags: Vec<CellFlag>,
    ) -> Result<Self> {
        for axis in [&dr_axis, &dt_axis] {
            if axis.is_empty() {
                return Err(Error::Parameter("correlation axes must be non-empty".into()));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("correlation axes must be finite".into()));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Parameter(
                    "correlation axes must be strictly increasing".into(),
                ));
            }
        }
        let n = dr_axis.len() * dt_axis.len();
        if values.len() != n || stderr.len() != n || n_samples.len() != n || flags.len() != n {
            return Err(Error::Parameter(format!(
                "cell arrays must have {n} entries"
            )));
        }
        if stderr.iter().any(|&s| s < 0.0) {
            return Err(Error::Parameter("stderr must be non-negative".into()));
        }
        let map = CorrelationMap {
            kind,
            dr_axis,
            dt_axis,
            values,
            stderr,
            n_samples,
            flags,
        };
        if let (Some(i), Some(j)) = (
            map.dr_axis.iter().position(|&v| v == 0.0),
            map.dt_axis.iter().position(|&v| v == 0.0),
        ) {
            if map.flag(i, j) == CellFlag::Ok {
                let v = map.value(i, j);
                let ok = match kind {
                    MapKind::Correlation | MapKind::MinusLogCoherence => v.norm() <= 1e-12,
                    MapKind::Coherence => (v - Complex64::new(1.0, 0.0)).norm() <= 1e-12,
                };
                if !ok {
                    return Err(Error::Parameter(format!(
                        "cell (0, 0) must be exact for {kind:?} maps, got {v}"
                    )));
                }
            }
        }
        Ok(map)
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn dr_axis(&self) -> &[f64] {
        &self.dr_axis
    }

    pub fn dt_axis(&self) -> &[f64] {
        &self.dt_axis
    }

    fn idx(&self, i_dr: usize, i_dt: usize) -> usize {
        debug_assert!(i_dr < self.dr_axis.len() && i_dt < self.dt_axis.len());
        i_dt * self.dr_axis.len() + i_dr
    }

    pub fn value(&self, i_dr: usize, i_dt: usize) -> Complex64 {
        self.values[self.idx(i_dr, i_dt)]
    }

    pub fn modulus(&self, i_dr: usize, i_dt: usize) -> f64 {
        self.value(i_dr, i_dt).norm()
    }

    pub fn stderr(&self, i_dr: usize, i_dt: usize) -> f64 {
        self.stderr[self.idx(i_dr, i_dt)]
    }

    pub fn n_samples(&self, i_dr: usize, i_dt: usize) -> u64 {
        self.n_samples[self.idx(i_dr, i_dt)]
    }

    pub fn flag(&self, i_dr: usize, i_dt: usize) -> CellFlag {
        self.flags[self.idx(i_dr, i_dt)]
    }

    pub fn is_usable(&self, i_dr: usize, i_dt: usize) -> bool {
        self.flag(i_dr, i_dt) == CellFlag::Ok
    }
}

/// Width of the Euclidean distance bins.
pub fn bin_width(spacing: f64) -> f64 {
    spacing / 2.0
}

/// Distance bin centers 0, a/2, a, … up to L·a/3, the range over which
/// periodic images do not bias the correlator.
pub fn default_dr_grid(side: usize, spacing: f64) -> Vec<f64> {
    let w = bin_width(spacing);
    let max = side as f64 * spacing / 3.0;
    (0..)
        .map(|i| i as f64 * w)
        .take_while(|&c| c <= max)
        .collect()
}

/// Distance bin centers for point-reflection separations |2r|, which reach
/// out to L·a/2 along the axes.
pub fn reflection_dr_grid(side: usize, spacing: f64) -> Vec<f64> {
    let w = bin_width(spacing);
    let max = side as f64 * spacing / 2.0;
    (0..)
        .map(|i| i as f64 * w)
        .take_while(|&c| c <= max)
        .collect()
}

/// Maps a distance to the index of the nearest bin center, if the distance
/// falls within half a bin width of it.
pub(crate) fn assign_bin(grid: &[f64], width: f64, d: f64) -> Option<usize> {
    let half = width / 2.0 * (1.0 + 1e-12);
    let i = grid.partition_point(|&c| c < d);
    let mut best = None;
    for j in [i.wrapping_sub(1), i] {
        if let Some(&c) = grid.get(j) {
            let gap = (d - c).abs();
            if gap <= half && best.map_or(true, |(_, g)| gap < g) {
                best = Some((j, gap));
            }
        }
    }
    best.map(|(j, _)| j)
}

pub(crate) fn validate_bin_grid(grid: &[f64], max_center: f64, what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter(format!("{what} grid must be non-empty")));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Parameter(format!(
            "{what} grid must be finite and non-negative"
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(format!(
            "{what} grid must be strictly increasing"
        )));
    }
    if *grid.last().unwrap() > max_center * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "{what} grid extends to {} but separations beyond {max_center} are biased or unreachable on this lattice",
            grid.last().unwrap()
        )));
    }
    Ok(())
}

pub(crate) fn validate_dt_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter("dt grid must be non-empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Parameter(
            "dt grid must be finite and non-negative".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("dt grid must be strictly increasing".into()));
    }
    Ok(())
}

pub(crate) fn validate_window(window: (f64, f64)) -> Result<()> {
    if !window.0.is_finite() || !window.1.is_finite() || window.1 < window.0 {
        return Err(Error::Parameter(format!(
            "reference window [{}, {}] is not a valid interval",
            window.0, window.1
        )));
    }
    Ok(())
}

/// Minimum-image Euclidean distance of the displacement with flat index
/// dy·L + dx.
fn min_image_distance(side: usize, spacing: f64, dx: usize, dy: usize) -> f64 {
    let fold = |d: usize| d.min(side - d) as f64;
    spacing * (fold(dx).powi(2) + fold(dy).powi(2)).sqrt()
}

/// (flat displacement index, bin) for every nonzero displacement that lands
/// in a bin.
fn displacement_bins(side: usize, spacing: f64, grid: &[f64]) -> Vec<(usize, usize)> {
    let w = bin_width(spacing);
    let mut out = Vec::new();
    for dy in 0..side {
        for dx in 0..side {
            if dx == 0 && dy == 0 {
                continue;
            }
            if let Some(b) = assign_bin(grid, w, min_image_distance(side, spacing, dx, dy)) {
                out.push((dy * side + dx, b));
            }
        }
    }
    out
}

/// Matches each requested Δt to snapshot index pairs (i, j) with t_i in the
/// window and t_j = t_i + Δt on the snapshot grid.
pub(crate) fn lag_pairs(times: &[f64], window: (f64, f64), dt: f64) -> Vec<(usize, usize)> {
    let tol = |t: f64| TIME_TOL * (1.0 + t.abs());
    let mut pairs = Vec::new();
    for (i, &t0) in times.iter().enumerate() {
        if t0 < window.0 - tol(t0) || t0 > window.1 + tol(t0) {
            continue;
        }
        let target = t0 + dt;
        if dt == 0.0 {
            pairs.push((i, i));
            continue;
        }
        let j = times.partition_point(|&t| t < target - tol(target));
        if let Some(&tj) = times.get(j) {
            if (tj - target).abs() <= tol(target) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Per-realization accumulation of the connected correlator: cell sums of
/// connected values over (t₀ pair, displacement) samples. Parts are combined
/// across realizations with [`combine_correlators`].
#[derive(Debug, Clone)]
pub struct CorrelatorAccumulator {
    dr_grid: Vec<f64>,
    dt_grid: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl CorrelatorAccumulator {
    /// Mean connected value per cell for this realization, where sampled.
    fn cell_mean(&self, idx: usize) -> Option<f64> {
        (self.counts[idx] > 0).then(|| self.sums[idx] / self.counts[idx] as f64)
    }
}

/// Accumulates one realization's snapshot history into per-cell connected
/// sums. Snapshots must be time-ordered; all lattice geometry must agree.
pub fn accumulate_correlator(
    snapshots: &[PhaseField],
    dr_grid: &[f64],
    dt_grid: &[f64],
    window: (f64, f64),
) -> Result<CorrelatorAccumulator> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InsufficientData("no snapshots supplied".into()))?;
    let side = first.side();
    let spacing = first.spacing();
    validate_bin_grid(dr_grid, side as f64 * spacing / 3.0, "dr")?;
    validate_dt_grid(dt_grid)?;
    validate_window(window)?;
    for s in snapshots {
        if s.side() != side || s.spacing() != spacing {
            return Err(Error::Parameter(
                "snapshots must share one lattice geometry".into(),
            ));
        }
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time()).collect();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "snapshots must be strictly time-ordered".into(),
        ));
    }

    let n_sites = (side * side) as f64;
    let zero_bin = assign_bin(dr_grid, bin_width(spacing), 0.0);
    let bins = displacement_bins(side, spacing, dr_grid);
    let n_dr = dr_grid.len();
    let mut acc = CorrelatorAccumulator {
        dr_grid: dr_grid.to_vec(),
        dt_grid: dt_grid.to_vec(),
        sums: vec![0.0; n_dr * dt_grid.len()],
        counts: vec![0; n_dr * dt_grid.len()],
    };

    // Per-snapshot caches, filled on first use: spatial mean, mean square,
    // and the FFT used for the cross-correlation over all displacements.
    let mut moments: Vec<Option<(f64, f64)>> = vec![None; snapshots.len()];
    let mut ffts: Vec<Option<Vec<Complex64>>> = vec![None; snapshots.len()];
    let mut fft = Fft2::square(side);
    let moment = |idx: usize, cache: &mut Vec<Option<(f64, f64)>>| {
        if cache[idx].is_none() {
            let vals = snapshots[idx].values();
            let m1 = vals.iter().sum::<f64>() / n_sites;
            let m2 = vals.iter().map(|v| v * v).sum::<f64>() / n_sites;
            cache[idx] = Some((m1, m2));
        }
        cache[idx].unwrap()
    };

    for (di, &dt) in dt_grid.iter().enumerate() {
        for (i, j) in lag_pairs(&times, window, dt) {
            // The zero-displacement column is computed in real space: exact
            // for i == j and free of FFT rounding otherwise.
            if let Some(b0) = zero_bin {
                let (va, vb) = (snapshots[i].values(), snapshots[j].values());
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for (x, y) in va.iter().zip(vb) {
                    let d = x - y;
                    sum += d;
                    sum_sq += d * d;
                }
                let mean = sum / n_sites;
                let idx = di * n_dr + b0;
                acc.sums[idx] += sum_sq / n_sites - mean * mean;
                acc.counts[idx] += 1;
            }
            if bins.is_empty() {
                continue;
            }
            let (m1a, m2a) = moment(i, &mut moments);
            let (m1b, m2b) = moment(j, &mut moments);
            for idx in [i, j] {
                if ffts[idx].is_none() {
                    let mut buf: Vec<Complex64> = snapshots[idx]
                        .values()
                        .iter()
                        .map(|&v| Complex64::new(v, 0.0))
                        .collect();
                    fft.forward(&mut buf);
                    ffts[idx] = Some(buf);
                }
            }
            // cross(δ) = Σ_r θ_i(r)·θ_j(r+δ) for every δ at once.
            let mut prod: Vec<Complex64> = ffts[i]
                .as_ref()
                .unwrap()
                .iter()
                .zip(ffts[j].as_ref().unwrap())
                .map(|(a, b)| a.conj() * b)
                .collect();
            fft.inverse(&mut prod);
            let mean_gap_sq = (m1a - m1b) * (m1a - m1b);
            for &(flat, b) in &bins {
                let cross = prod[flat].re / n_sites;
                let c = m2a + m2b - 2.0 * cross - mean_gap_sq;
                let idx = di * n_dr + b;
                acc.sums[idx] += c;
                acc.counts[idx] += 1;
            }
        }
    }
    Ok(acc)
}

/// Combines per-realization accumulators into a map: per cell, the mean of
/// the realization values, their scatter-based standard error, and the count
/// of contributing realizations.
pub fn combine_correlators(parts: &[CorrelatorAccumulator]) -> Result<CorrelationMap> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InsufficientData("no accumulators to combine".into()))?;
    for p in parts {
        if p.dr_grid != first.dr_grid || p.dt_grid != first.dt_grid {
            return Err(Error::Parameter(
                "accumulators were built on different grids".into(),
            ));
        }
    }
    let n_cells = first.sums.len();
    let mut values = vec![Complex64::default(); n_cells];
    let mut stderr = vec![0.0; n_cells];
    let mut n_samples = vec![0u64; n_cells];
    let mut flags = vec![CellFlag::Missing; n_cells];
    let mut any = false;
    for idx in 0..n_cells {
        let cell: Vec<f64> = parts.iter().filter_map(|p| p.cell_mean(idx)).collect();
        if cell.is_empty() {
            continue;
        }
        any = true;
        let n = cell.len();
        let mean = cell.iter().sum::<f64>() / n as f64;
        values[idx] = Complex64::new(mean, 0.0);
        n_samples[idx] = n as u64;
        flags[idx] = CellFlag::Ok;
        if n > 1 {
            let var = cell.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            stderr[idx] = (var / n as f64).sqrt();
        }
    }
    if !any {
        return Err(Error::InsufficientData(
            "no (t0, t0+dt) snapshot pairs landed in the reference window".into(),
        ));
    }
    CorrelationMap::from_parts(
        MapKind::Correlation,
        first.dr_grid.clone(),
        first.dt_grid.clone(),
        values,
        stderr,
        n_samples,
        flags,
    )
}

/// Connected two-point correlator over a materialized ensemble: one snapshot
/// history per realization, identical snapshot times throughout.
pub fn connected_correlator(
    ensemble: &[Vec<PhaseField>],
    dr_grid: &[f64],
    dt_grid: &[f64],
    window: (f64, f64),
) -> Result<CorrelationMap> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
    let times: Vec<f64> = first.iter().map(|s| s.time()).collect();
    for real in ensemble {
        let t: Vec<f64> = real.iter().map(|s| s.time()).collect();
        if t != times {
            return Err(Error::Parameter(
                "realizations must share identical snapshot times".into(),
            ));
        }
    }
    let parts = ensemble
        .iter()
        .map(|snaps| accumulate_correlator(snaps, dr_grid, dt_grid, window))
        .collect::<Result<Vec<_>>>()?;
    combine_correlators(&parts)
}

/// Spatial variance of the field: the roughness W(t). Ensemble averaging is
/// the caller's job.
pub fn roughness(field: &PhaseField) -> f64 {
    let mean = field.mean();
    field.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.values().len() as f64
}

/// How a running-exponent point was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointQuality {
    /// Centered 3-point stencil.
    Interior,
    /// One-sided stencil at a series endpoint; lower quality.
    Edge,
}

/// One running-exponent estimate: the log-log derivative of the correlator
/// at `axis_value` (2β̃ along Δt, 2χ̃ along Δr).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPoint {
    pub axis_value: f64,
    pub exponent: f64,
    pub stderr: f64,
    pub quality: PointQuality,
}

/// Running-exponent series along one axis of a correlation map.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentSeries {
    pub points: Vec<ExponentPoint>,
}

/// Log-log derivative series of usable positive (axis, value, stderr)
/// triples. Interior points use the 3-point stencil for uneven grids (exact
/// on pure power laws); endpoints fall back to one-sided slopes.
fn log_derivative_series(samples: &[(f64, f64, f64)]) -> Result<ExponentSeries> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "running exponent needs at least 2 usable positive cells, got {}",
            samples.len()
        )));
    }
    let pts: Vec<(f64, f64, f64, f64)> = samples
        .iter()
        .map(|&(x, v, s)| (x.ln(), v.ln(), s / v, x))
        .collect();
    let mut out = Vec::with_capacity(pts.len());
    let two_point = |a: &(f64, f64, f64, f64), b: &(f64, f64, f64, f64), at: &(f64, f64, f64, f64)| {
        let du = b.0 - a.0;
        ExponentPoint {
            axis_value: at.3,
            exponent: (b.1 - a.1) / du,
            stderr: (a.2.powi(2) + b.2.powi(2)).sqrt() / du.abs(),
            quality: PointQuality::Edge,
        }
    };
    out.push(two_point(&pts[0], &pts[1], &pts[0]));
    for w in pts.windows(3) {
        let (u0, v0, e0, _) = w[0];
        let (u1, v1, e1, x1) = w[1];
        let (u2, v2, e2, _) = w[2];
        let c0 = (u1 - u2) / ((u0 - u1) * (u0 - u2));
        let c1 = (2.0 * u1 - u0 - u2) / ((u1 - u0) * (u1 - u2));
        let c2 = (u1 - u0) / ((u2 - u0) * (u2 - u1));
        out.push(ExponentPoint {
            axis_value: x1,
            exponent: c0 * v0 + c1 * v1 + c2 * v2,
            stderr: ((c0 * e0).powi(2) + (c1 * e1).powi(2) + (c2 * e2).powi(2)).sqrt(),
            quality: PointQuality::Interior,
        });
    }
    if pts.len() > 2 {
        let n = pts.len();
        out.push(two_point(&pts[n - 2], &pts[n - 1], &pts[n - 1]));
    } else {
        out.push(two_point(&pts[0], &pts[1], &pts[1]));
    }
    Ok(ExponentSeries { points: out })
}

/// 2β̃(Δt) = d log C(0, Δt) / d log Δt from the Δr = 0 column. Cells that are
/// flagged, non-positive, or at Δt = 0 are masked out of the series.
pub fn running_exponent_growth(map: &CorrelationMap) -> Result<ExponentSeries> {
    let col = map
        .dr_axis()
        .iter()
        .position(|&v| v == 0.0)
        .ok_or_else(|| Error::InsufficientData("map has no Δr = 0 column".into()))?;
    if map.dt_axis().len() < 3 {
        return Err(Error::InsufficientData(
            "growth exponent needs at least 3 time lags".into(),
        ));
    }
    let samples: Vec<(f64, f64, f64)> = map
        .dt_axis()
        .iter()
        .enumerate()
        .filter(|&(j, &dt)| dt > 0.0 && map.is_usable(col, j) && map.value(col, j).re > 0.0)
        .map(|(j, &dt)| (dt, map.value(col, j).re, map.stderr(col, j)))
        .collect();
    log_derivative_series(&samples)
}

/// 2χ̃(Δr) = d log C(Δr, 0) / d log Δr from the Δt = 0 row, with the same
/// masking rules as the growth exponent.
pub fn running_exponent_roughness(map: &CorrelationMap) -> Result<ExponentSeries> {
    let row = map
        .dt_axis()
        .iter()
        .position(|&v| v == 0.0)
        .ok_or_else(|| Error::InsufficientData("map has no Δt = 0 row".into()))?;
    if map.dr_axis().len() < 3 {
        return Err(Error::InsufficientData(
            "roughness exponent needs at least 3 separations".into(),
        ));
    }
    let samples: Vec<(f64, f64, f64)> = map
        .dr_axis()
        .iter()
        .enumerate()
        .filter(|&(i, &dr)| dr > 0.0 && map.is_usable(i, row) && map.value(i, row).re > 0.0)
        .map(|(i, &dr)| (dr, map.value(i, row).re, map.stderr(i, row)))
        .collect();
    log_derivative_series(&samples)
}

/// Both running-exponent series: (2β̃ along Δt, 2χ̃ along Δr).
pub fn running_exponents(map: &CorrelationMap) -> Result<(ExponentSeries, ExponentSeries)> {
    Ok((
        running_exponent_growth(map)?,
        running_exponent_roughness(map)?,
    ))
}

/// Converts a coherence map to −log|g⁽¹⁾| with first-order error
/// propagation: stderr → stderr/|g⁽¹⁾|. Cells with |g⁽¹⁾| at or below their
/// standard error are flagged unusable, and |g⁽¹⁾| = 0 is masked outright.
pub fn minus_log_g1(map: &CorrelationMap) -> CorrelationMap {
    let n = map.values.len();
    let mut values = vec![Complex64::default(); n];
    let mut stderr = vec![0.0; n];
    let mut flags = vec![CellFlag::Missing; n];
    for idx in 0..n {
        if map.flags[idx] == CellFlag::Missing {
            continue;
        }
        let m = map.values[idx].norm();
        let s = map.stderr[idx];
        if m == 0.0 {
            values[idx] = Complex64::new(f64::NAN, 0.0);
            stderr[idx] = f64::NAN;
            flags[idx] = CellFlag::Unusable;
            continue;
        }
        values[idx] = Complex64::new(-m.ln(), 0.0);
        stderr[idx] = s / m;
        flags[idx] = if map.flags[idx] == CellFlag::Unusable || m <= s {
            CellFlag::Unusable
        } else {
            CellFlag::Ok
        };
    }
    CorrelationMap {
        kind: MapKind::MinusLogCoherence,
        dr_axis: map.dr_axis.clone(),
        dt_axis: map.dt_axis.clone(),
        values,
        stderr,
        n_samples: map.n_samples.clone(),
        flags,
    }
}
