//! Tabulation of the universal scaling function 𝒞(y).
//!
//! Correlator cells inside an analysis window are mapped to rescaled
//! coordinates (y, c) = (Δr·Δt^{−1/z}, C/(A₀·Δt^{2β})) with z = χ/β; the
//! amplitude A₀ comes from the Δr = 0 column, which anchors 𝒞(0) = 1
//! exactly. Points are pooled in logarithmic y bins, forced monotone
//! non-decreasing (𝒞 rises from the y→0 plateau into the y^{2χ} tail), and
//! interpolated with a monotone piecewise cubic in log-log space.

use crate::error::{Error, Result};
use crate::observables::CorrelationMap;
use crate::scaling::weighted_line_fit;

/// Logarithmic y-bin resolution of the tabulated scaling function.
const BINS_PER_DECADE: f64 = 8.0;

/// Relative errors of exact cells are floored here so weighted pooling
/// stays finite.
const REL_ERR_FLOOR: f64 = 1e-6;

/// Where a table came from: the exponents and window used to build it and
/// the shape of the tail, kept alongside the grid for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct TableProvenance {
    /// Growth exponent β used in the rescaling.
    pub beta: f64,
    /// Roughness exponent χ used in the rescaling.
    pub chi: f64,
    /// (Δr range, Δt range) of cells admitted to the tabulation.
    pub window: ((f64, f64), (f64, f64)),
    /// Number of correlator cells pooled.
    pub n_cells: usize,
    /// Fitted log-log slope over the last decade of y; the extrapolation
    /// exponent beyond the grid. Compatible tables have this near 2χ.
    pub tail_exponent: f64,
    /// Free-form description of the source data.
    pub source: String,
}

/// Tabulated universal scaling function: strictly positive y grid plus the
/// y = 0 anchor where 𝒞 = 1 exactly, monotone non-decreasing values, and a
/// monotone cubic interpolant between bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFunctionTable {
    y_grid: Vec<f64>,
    values: Vec<f64>,
    /// ln y, ln 𝒞, and interpolation tangents over the positive bins.
    ln_y: Vec<f64>,
    ln_v: Vec<f64>,
    tangents: Vec<f64>,
    provenance: TableProvenance,
}

impl ScalingFunctionTable {
    /// Builds a table from bin centers and values. The grid must start with
    /// the anchor (y=0, 𝒞=1), be strictly increasing, and the values must
    /// be positive and non-decreasing.
    pub fn from_bins(
        y_grid: Vec<f64>,
        values: Vec<f64>,
        provenance: TableProvenance,
    ) -> Result<Self> {
        if y_grid.len() != values.len() {
            return Err(Error::Parameter(
                "y grid and values must have equal length".into(),
            ));
        }
        if y_grid.len() < 3 {
            return Err(Error::InsufficientData(
                "scaling table needs the anchor plus at least 2 bins".into(),
            ));
        }
        if y_grid[0] != 0.0 || values[0] != 1.0 {
            return Err(Error::Parameter(
                "scaling table must start at the (y=0, C=1) anchor".into(),
            ));
        }
        if y_grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Parameter(
                "y grid must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parameter("table values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter(
                "table values must be monotone non-decreasing".into(),
            ));
        }
        if !provenance.tail_exponent.is_finite() || provenance.tail_exponent < 0.0 {
            return Err(Error::Parameter(
                "tail exponent must be finite and non-negative".into(),
            ));
        }
        let ln_y: Vec<f64> = y_grid[1..].iter().map(|y| y.ln()).collect();
        let ln_v: Vec<f64> = values[1..].iter().map(|v| v.ln()).collect();
        let tangents = monotone_tangents(&ln_y, &ln_v);
        Ok(ScalingFunctionTable {
            y_grid,
            values,
            ln_y,
            ln_v,
            tangents,
            provenance,
        })
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &TableProvenance {
        &self.provenance
    }

    /// ln 𝒞 at ln y, defined for every real argument: below the first bin
    /// the curve relaxes linearly (in y) onto the anchor plateau 𝒞 = 1,
    /// inside the grid a monotone cubic interpolates, and beyond the last
    /// bin the tail continues as a power law with the tabulated exponent.
    pub fn eval_ln(&self, ln_y: f64) -> f64 {
        let (first, last) = (self.ln_y[0], *self.ln_y.last().unwrap());
        // The negated comparison routes NaN input into the closed-form
        // branch, which propagates it instead of corrupting the bin search.
        if !(ln_y > first) {
            let frac = (ln_y - first).exp();
            return (1.0 + (self.values[1] - 1.0) * frac).ln();
        }
        if ln_y >= last {
            return self.ln_v.last().unwrap() + self.provenance.tail_exponent * (ln_y - last);
        }
        let i = self.ln_y.partition_point(|&u| u <= ln_y) - 1;
        let h = self.ln_y[i + 1] - self.ln_y[i];
        let t = (ln_y - self.ln_y[i]) / h;
        let (v0, v1) = (self.ln_v[i], self.ln_v[i + 1]);
        let (m0, m1) = (self.tangents[i] * h, self.tangents[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + v1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    /// 𝒞(y) for y ≥ 0; the y = 0 anchor returns exactly 1.
    pub fn eval(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 1.0;
        }
        self.eval_ln(y.ln()).exp()
    }
}

/// Fritsch–Carlson tangents for a monotone non-decreasing sequence: the
/// resulting cubic Hermite interpolant is monotone on every segment.
fn monotone_tangents(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    if n == 1 {
        return vec![0.0];
    }
    let secants: Vec<f64> = (0..n - 1)
        .map(|i| (v[i + 1] - v[i]) / (u[i + 1] - u[i]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for i in 1..n - 1 {
        m[i] = if secants[i - 1] * secants[i] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[i - 1] + secants[i])
        };
    }
    for i in 0..n - 1 {
        if secants[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / secants[i];
        let b = m[i + 1] / secants[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * secants[i];
            m[i + 1] = tau * b * secants[i];
        }
    }
    m
}

/// Weighted isotonic regression (pool adjacent violators) on values with
/// weights; returns the non-decreasing sequence closest in weighted L².
fn pool_adjacent_violators(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w));
        while blocks.len() > 1 {
            let last = blocks.len() - 1;
            if blocks[last - 1].0 <= blocks[last].0 {
                break;
            }
            let (v1, w1) = blocks[last - 1];
            let (v2, w2) = blocks[last];
            blocks.truncate(last - 1);
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    let mut i = 0;
    for &(v, w) in &blocks {
        // Recover the block extent from the accumulated weight by walking
        // the original weights.
        let mut acc = 0.0;
        while acc < w * (1.0 - 1e-12) && i < values.len() {
            acc += weights[i];
            out.push(v);
            i += 1;
        }
    }
    out
}

/// Tabulates the universal scaling function from a correlator map using the
/// exponents (β, χ). `window` is ((Δr min, Δr max), (Δt min, Δt max)); only
/// usable positive cells inside it participate. The Δr = 0 column fixes the
/// amplitude A₀ (weighted geometric mean of C(0,Δt)·Δt^{−2β}), positive-y
/// cells pool into logarithmic bins, and the result is forced monotone.
pub fn tabulate_scaling_function(
    map: &CorrelationMap,
    beta: f64,
    chi: f64,
    window: ((f64, f64), (f64, f64)),
) -> Result<ScalingFunctionTable> {
    if !(beta.is_finite() && beta > 0.0 && chi.is_finite() && chi > 0.0) {
        return Err(Error::Parameter(format!(
            "tabulation needs beta > 0 and chi > 0, got ({beta}, {chi})"
        )));
    }
    let ((dr_lo, dr_hi), (dt_lo, dt_hi)) = window;
    if !(dr_lo <= dr_hi && dt_lo <= dt_hi) || !dr_lo.is_finite() || !dt_hi.is_finite() {
        return Err(Error::Parameter("tabulation window is not an interval".into()));
    }
    let inv_z = beta / chi;

    // Anchor amplitude from the Δr = 0 column: ln A₀ as the error-weighted
    // mean of ln C − 2β ln Δt.
    let mut anchor: Vec<(f64, f64)> = Vec::new();
    let mut cells = 0usize;
    let zero_col = map.dr_axis().iter().position(|&v| v == 0.0);
    if let Some(i0) = zero_col {
        for (j, &dt) in map.dt_axis().iter().enumerate() {
            if dt <= 0.0 || dt < dt_lo || dt > dt_hi || !map.is_usable(i0, j) {
                continue;
            }
            let c = map.value(i0, j).re;
            if c <= 0.0 {
                continue;
            }
            let rel = (map.stderr(i0, j) / c).max(REL_ERR_FLOOR);
            anchor.push((c.ln() - 2.0 * beta * dt.ln(), 1.0 / (rel * rel)));
        }
    }
    if anchor.is_empty() {
        return Err(Error::InsufficientData(
            "no usable Δr = 0 cells to anchor the amplitude".into(),
        ));
    }
    let wsum: f64 = anchor.iter().map(|a| a.1).sum();
    let ln_a0 = anchor.iter().map(|a| a.0 * a.1).sum::<f64>() / wsum;
    cells += anchor.len();

    // Pool positive-separation cells into logarithmic y bins.
    use std::collections::BTreeMap;
    let mut bins: BTreeMap<i64, (f64, f64, f64)> = BTreeMap::new();
    for (i, &dr) in map.dr_axis().iter().enumerate() {
        if dr <= 0.0 || dr < dr_lo || dr > dr_hi {
            continue;
        }
        for (j, &dt) in map.dt_axis().iter().enumerate() {
            if dt <= 0.0 || dt < dt_lo || dt > dt_hi || !map.is_usable(i, j) {
                continue;
            }
            let c = map.value(i, j).re;
            if c <= 0.0 {
                continue;
            }
            let ln_y = dr.ln() - inv_z * dt.ln();
            let ln_c = c.ln() - ln_a0 - 2.0 * beta * dt.ln();
            let rel = (map.stderr(i, j) / c).max(REL_ERR_FLOOR);
            let w = 1.0 / (rel * rel);
            let key = (ln_y / std::f64::consts::LN_10 * BINS_PER_DECADE).floor() as i64;
            let e = bins.entry(key).or_insert((0.0, 0.0, 0.0));
            e.0 += w * ln_y;
            e.1 += w * ln_c;
            e.2 += w;
            cells += 1;
        }
    }
    if bins.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "scaling tabulation needs at least 5 populated y bins, got {}",
            bins.len()
        )));
    }

    let mut y_grid = vec![0.0];
    let mut ln_vals = vec![0.0];
    let mut weights = vec![f64::INFINITY; 1];
    for (_, (wy, wc, w)) in bins {
        y_grid.push((wy / w).exp());
        ln_vals.push(wc / w);
        weights.push(w);
    }
    // Force monotone non-decreasing in log space; the anchor's infinite
    // weight is realized as a post-PAVA clamp at ln 𝒞 = 0, the projection
    // onto {non-decreasing, 𝒞 ≥ 1}.
    let finite_w: Vec<f64> = weights[1..].to_vec();
    let mut iso = pool_adjacent_violators(&ln_vals[1..], &finite_w);
    for v in iso.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut values = vec![1.0];
    values.extend(iso.iter().map(|v| v.exp()));

    // Tail slope over the last decade of y bins (at least two bins).
    let last_ln_y = y_grid.last().unwrap().ln();
    let mut tail: Vec<(f64, f64, f64)> = y_grid[1..]
        .iter()
        .zip(&iso)
        .filter(|(y, _)| y.ln() >= last_ln_y - std::f64::consts::LN_10)
        .map(|(y, v)| (y.ln(), *v, 1.0))
        .collect();
    if tail.len() < 2 {
        let n = y_grid.len();
        tail = vec![
            (y_grid[n - 2].ln(), iso[n - 3], 1.0),
            (y_grid[n - 1].ln(), iso[n - 2], 1.0),
        ];
    }
    let (_, tail_slope, _, _) = weighted_line_fit(&tail)?;

    let provenance = TableProvenance {
        beta,
        chi,
        window,
        n_cells: cells,
        tail_exponent: tail_slope.max(0.0),
        source: format!(
            "tabulated from a {}x{} correlation map",
            map.dr_axis().len(),
            map.dt_axis().len()
        ),
    };
    ScalingFunctionTable::from_bins(y_grid, values, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{CellFlag, MapKind};
    use num_complex::Complex64;

    /// Smooth monotone reference curve with 𝒞(0) = 1 and tail y^{2χ}.
    fn reference_curve(y: f64, two_chi: f64) -> f64 {
        (1.0 + y * y).powf(two_chi / 2.0)
    }

    fn synthetic_map(a: f64, two_beta: f64, two_chi: f64) -> CorrelationMap {
        let z = two_chi / two_beta;
        // Wide ranges so the largest y bins sit deep in the power-law tail.
        let dr_axis: Vec<f64> = (0..48).map(|i| i as f64 * 0.5).collect();
        let dt_axis: Vec<f64> = (-8..12).map(|i| 2.0f64.powf(i as f64 / 2.0)).collect();
        let mut values = Vec::new();
        for &dt in &dt_axis {
            for &dr in &dr_axis {
                let y = dr * dt.powf(-1.0 / z);
                values.push(Complex64::new(
                    a * dt.powf(two_beta) * reference_curve(y, two_chi),
                    0.0,
                ));
            }
        }
        let n = values.len();
        CorrelationMap::from_parts(
            MapKind::Correlation,
            dr_axis,
            dt_axis,
            values,
            vec![0.0; n],
            vec![16; n],
            vec![CellFlag::Ok; n],
        )
        .unwrap()
    }

    fn full_window() -> ((f64, f64), (f64, f64)) {
        ((0.0, 1e9), (0.0, 1e9))
    }

    #[test]
    fn roundtrip_recovers_generating_curve() {
        let (two_beta, two_chi) = (0.446, 0.730);
        let map = synthetic_map(2.0, two_beta, two_chi);
        let table =
            tabulate_scaling_function(&map, two_beta / 2.0, two_chi / 2.0, full_window()).unwrap();
        assert_eq!(table.y_grid()[0], 0.0);
        assert_eq!(table.values()[0], 1.0);
        for (y, v) in table.y_grid()[1..].iter().zip(&table.values()[1..]) {
            let want = reference_curve(*y, two_chi);
            assert!(
                (v / want - 1.0).abs() < 0.02,
                "y = {y}: {v} vs {want} (ratio {})",
                v / want
            );
        }
        // Interpolated evaluation should track the curve between bins too.
        let y_min = table.y_grid()[1];
        let y_max = *table.y_grid().last().unwrap();
        let mut y = y_min * 1.07;
        while y < y_max {
            let got = table.eval(y);
            let want = reference_curve(y, two_chi);
            assert!((got / want - 1.0).abs() < 0.03, "y = {y}: {got} vs {want}");
            y *= 1.13;
        }
        let tail = table.provenance().tail_exponent;
        assert!((tail - two_chi).abs() < 0.05, "tail slope {tail}");
    }

    #[test]
    fn anchor_is_exact_regardless_of_amplitude() {
        for a in [0.1, 2.0, 300.0] {
            let map = synthetic_map(a, 0.446, 0.730);
            let t = tabulate_scaling_function(&map, 0.223, 0.365, full_window()).unwrap();
            assert_eq!(t.eval(0.0), 1.0);
        }
    }

    #[test]
    fn too_few_bins_is_insufficient_data() {
        let map = synthetic_map(1.0, 0.446, 0.730);
        // A sliver of a window leaves fewer than 5 populated y bins.
        let err = tabulate_scaling_function(&map, 0.223, 0.365, ((0.0, 0.6), (0.9, 1.1)));
        assert!(matches!(err, Err(Error::InsufficientData(_))), "{err:?}");
    }

    #[test]
    fn evaluation_is_monotone_and_extends_both_ways() {
        let map = synthetic_map(1.0, 0.446, 0.730);
        let table = tabulate_scaling_function(&map, 0.223, 0.365, full_window()).unwrap();
        let mut prev = 0.0;
        let mut y = 1e-4;
        while y < 1e4 {
            let v = table.eval(y);
            assert!(v >= prev - 1e-12, "dip at y = {y}: {v} < {prev}");
            prev = v;
            y *= 1.1;
        }
        // Small-y limit approaches the anchor plateau.
        assert!((table.eval(1e-9) - 1.0).abs() < 1e-6);
        // Large-y limit follows the tail power law.
        let tail = table.provenance().tail_exponent;
        let (y1, y2) = (1e5, 2e5);
        let slope = (table.eval(y2) / table.eval(y1)).ln() / (f64::ln(y2) - f64::ln(y1));
        assert!((slope - tail).abs() < 1e-9);
    }

    #[test]
    fn pava_pools_violators_with_weights() {
        let vals = [1.0, 3.0, 2.0, 5.0];
        let w = [1.0, 1.0, 1.0, 1.0];
        let out = pool_adjacent_violators(&vals, &w);
        assert_eq!(out, vec![1.0, 2.5, 2.5, 5.0]);
        let w2 = [1.0, 3.0, 1.0, 1.0];
        let out2 = pool_adjacent_violators(&vals, &w2);
        assert!((out2[1] - 2.75).abs() < 1e-12);
        assert_eq!(out2[1], out2[2]);
        // Already-monotone input is untouched.
        let sorted = [0.5, 0.5, 1.0, 2.0];
        assert_eq!(pool_adjacent_violators(&sorted, &w), sorted.to_vec());
    }

    #[test]
    fn from_bins_rejects_broken_invariants() {
        let prov = TableProvenance {
            beta: 0.223,
            chi: 0.365,
            window: full_window(),
            n_cells: 0,
            tail_exponent: 0.7,
            source: String::new(),
        };
        // Missing anchor.
        assert!(ScalingFunctionTable::from_bins(
            vec![0.1, 1.0, 2.0],
            vec![1.0, 1.5, 2.0],
            prov.clone()
        )
        .is_err());
        // Decreasing values.
        assert!(ScalingFunctionTable::from_bins(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 1.5, 1.2],
            prov.clone()
        )
        .is_err());
        // Valid table.
        assert!(ScalingFunctionTable::from_bins(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 1.5, 2.0],
            prov
        )
        .is_ok());
    }
}
