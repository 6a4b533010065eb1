//! Orthogonal-distance collapse fitting against a tabulated scaling
//! function, with iterated robust outlier exclusion.
//!
//! Correlator cells (Δr > 0, Δt > 0, positive value) are mapped into the
//! log-log collapse plane u = ln(Δr·Δt^{−1/z}), v = ln(value·Δt^{−2β}) and
//! fitted to the curve v = ln A + ln 𝒞(e^{ln B + u}). Each point's distance
//! to the curve is orthogonal in error-normalized coordinates: the Δr axis
//! carries the half-bin quantization error, the value axis the cell's
//! relative standard error. The optimizer is deterministic: a coarse grid
//! over ln B with the profiled (closed-form) ln A picks a starting point,
//! and damped Gauss–Newton refines it. Working in log space makes the fit
//! exactly equivariant under rescaling the data values (A picks up the
//! factor) or the Δr axis (B absorbs the inverse factor).

use crate::error::{Error, Result};
use crate::observables::CorrelationMap;
use crate::scaling::ScalingFunctionTable;

/// Relative-error floor for exact cells (mirrors the tabulation floor).
const REL_ERR_FLOOR: f64 = 1e-6;

/// Multi-start grid over ln B: this many steps of this size on both sides
/// of the median-matching center.
const GRID_HALF_STEPS: usize = 20;
const GRID_STEP: f64 = 0.1;

/// Damped Gauss–Newton iteration cap; exceeding it is a fit failure.
const MAX_ITERATIONS: usize = 120;

/// Robust-σ floor for exclusion: normalized residuals below this are
/// numerically "on the curve".
const RESIDUAL_FLOOR: f64 = 1e-6;

/// Exclusion rounds cap.
const MAX_EXCLUSION_ROUNDS: usize = 10;

/// Whether exponents are fitted or held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    /// Fit only the amplitudes (A, B) with (β, χ) pinned.
    AmplitudesOnly { beta: f64, chi: f64 },
    /// Fit (A, B, β, χ); the table's provenance exponents seed the start.
    FreeExponents,
}

/// Result of a collapse fit. The covariance is ordered (β, χ, A, B); rows
/// and columns of parameters that were held fixed are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub beta: f64,
    pub chi: f64,
    pub amplitude_a: f64,
    pub amplitude_b: f64,
    pub covariance: [[f64; 4]; 4],
    /// Per data point (in extraction order), true if excluded by
    /// sigma-exclusion. All false for a fresh fit.
    pub excluded_mask: Vec<bool>,
    /// Optimizer iterations of the accepted fit.
    pub n_iterations: usize,
    /// Root-mean-square of the normalized orthogonal residuals over the
    /// included points.
    pub residual_rms: f64,
}

impl ScalingFit {
    pub fn z(&self) -> f64 {
        self.chi / self.beta
    }
}

/// One cell in the collapse plane, in the coordinates of a given fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsePoint {
    pub dr: f64,
    pub dt: f64,
    /// Δr·Δt^{−1/z}.
    pub x: f64,
    /// value·Δt^{−2β}.
    pub y: f64,
    pub err_x: f64,
    pub err_y: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy)]
struct DataPoint {
    dr: f64,
    dt: f64,
    value: f64,
    /// Relative value error (floored).
    rel_err: f64,
    /// Error of ln Δr from distance binning.
    sigma_u: f64,
}

/// Extracts fit-usable cells in a fixed (Δt-major) order: usable flag,
/// Δr > 0, Δt > 0, positive value. The Δr quantization error is the
/// half-width uniform-bin deviation w/√12 taken relative to Δr.
fn extract_points(map: &CorrelationMap) -> Vec<DataPoint> {
    let bin_w = map
        .dr_axis()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let quant = if bin_w.is_finite() {
        bin_w / 12.0f64.sqrt()
    } else {
        0.0
    };
    let mut pts = Vec::new();
    for (j, &dt) in map.dt_axis().iter().enumerate() {
        if dt <= 0.0 {
            continue;
        }
        for (i, &dr) in map.dr_axis().iter().enumerate() {
            if dr <= 0.0 || !map.is_usable(i, j) {
                continue;
            }
            let value = map.value(i, j).re;
            if !(value.is_finite() && value > 0.0) {
                continue;
            }
            pts.push(DataPoint {
                dr,
                dt,
                value,
                rel_err: (map.stderr(i, j) / value).max(REL_ERR_FLOOR),
                sigma_u: quant / dr,
            });
        }
    }
    pts
}

/// Collapse-plane coordinates of a point for exponents (β, χ).
fn plane_coords(p: &DataPoint, beta: f64, chi: f64) -> (f64, f64) {
    let u = p.dr.ln() - (beta / chi) * p.dt.ln();
    let v = p.value.ln() - 2.0 * beta * p.dt.ln();
    (u, v)
}

/// Signed, error-normalized orthogonal distance from one point to the curve
/// v = ln A + ln 𝒞(e^{ln B + u}). With no abscissa error this is the
/// weighted vertical residual; otherwise the foot point is located by a
/// coarse scan plus golden-section refinement.
fn orthogonal_residual(
    table: &ScalingFunctionTable,
    ln_a: f64,
    ln_b: f64,
    beta: f64,
    chi: f64,
    p: &DataPoint,
) -> f64 {
    let (u, v) = plane_coords(p, beta, chi);
    let f = |s: f64| ln_a + table.eval_ln(ln_b + s);
    let sv = p.rel_err;
    if p.sigma_u == 0.0 {
        return (v - f(u)) / sv;
    }
    let su = p.sigma_u;
    let dist2 = |s: f64| {
        let du = (u - s) / su;
        let dv = (v - f(s)) / sv;
        du * du + dv * dv
    };
    // Bracket the foot point: it cannot be further from u than the point
    // where the abscissa term alone exceeds the vertical distance at u.
    // Degenerate trial parameters can push the vertical distance out of
    // range; fall back to the (possibly non-finite) vertical residual so
    // the optimizer rejects the step instead of searching a broken bracket.
    let vertical = (v - f(u)).abs() / sv;
    if !vertical.is_finite() {
        return (v - f(u)) / sv;
    }
    let half = su * (vertical + 1.0) * 1.5;
    let (mut lo, mut hi) = (u - half, u + half);
    let mut best_s = u;
    let mut best = dist2(u);
    let coarse = 24;
    for k in 0..=coarse {
        let s = lo + (hi - lo) * k as f64 / coarse as f64;
        let d = dist2(s);
        if d < best {
            best = d;
            best_s = s;
        }
    }
    let step = (hi - lo) / coarse as f64;
    lo = best_s - step;
    hi = best_s + step;
    // Golden-section contraction ratio 2 - φ = (3 - √5)/2.
    let inv_gold = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut c = a + inv_gold * (b - a);
    let mut d = b - inv_gold * (b - a);
    let (mut fc, mut fd) = (dist2(c), dist2(d));
    for _ in 0..64 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = a + inv_gold * (b - a);
            fc = dist2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = b - inv_gold * (b - a);
            fd = dist2(d);
        }
    }
    let s_star = 0.5 * (a + b);
    let d = dist2(s_star).min(best);
    d.sqrt() * (v - f(s_star)).signum()
}

#[derive(Debug, Clone, Copy)]
struct Params {
    ln_a: f64,
    ln_b: f64,
    beta: f64,
    chi: f64,
}

fn residual_vector(
    table: &ScalingFunctionTable,
    pts: &[DataPoint],
    include: &[bool],
    p: Params,
) -> Vec<f64> {
    pts.iter()
        .zip(include)
        .filter(|(_, inc)| **inc)
        .map(|(pt, _)| orthogonal_residual(table, p.ln_a, p.ln_b, p.beta, p.chi, pt))
        .collect()
}

fn objective(table: &ScalingFunctionTable, pts: &[DataPoint], include: &[bool], p: Params) -> f64 {
    residual_vector(table, pts, include, p)
        .iter()
        .map(|r| r * r)
        .sum()
}

/// Profiled ln A: the error-weighted mean vertical offset at fixed ln B and
/// exponents. Closed form, so the ln B grid scan stays cheap and the start
/// point inherits the exact rescale equivariance of the objective.
fn profiled_ln_a(
    table: &ScalingFunctionTable,
    pts: &[DataPoint],
    include: &[bool],
    ln_b: f64,
    beta: f64,
    chi: f64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (pt, inc) in pts.iter().zip(include) {
        if !inc {
            continue;
        }
        let (u, v) = plane_coords(pt, beta, chi);
        let w = 1.0 / (pt.rel_err * pt.rel_err);
        num += w * (v - table.eval_ln(ln_b + u));
        den += w;
    }
    num / den
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Solves the symmetric positive-definite system M·x = b by Gaussian
/// elimination with partial pivoting (systems here are at most 4×4).
fn solve_small(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= m[col][k] * x[k];
        }
        x[col] = s / m[col][col];
    }
    Some(x)
}

fn invert_small(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut out = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_small(m.to_vec(), e)?;
        for row in 0..n {
            out[row][col] = x[row];
        }
    }
    Some(out)
}

fn params_to_vec(p: Params, free: bool) -> Vec<f64> {
    if free {
        vec![p.ln_a, p.ln_b, p.beta, p.chi]
    } else {
        vec![p.ln_a, p.ln_b]
    }
}

fn vec_to_params(v: &[f64], base: Params) -> Params {
    match v.len() {
        2 => Params {
            ln_a: v[0],
            ln_b: v[1],
            ..base
        },
        4 => Params {
            ln_a: v[0],
            ln_b: v[1],
            beta: v[2],
            chi: v[3],
        },
        _ => unreachable!(),
    }
}

fn exponents_valid(p: Params) -> bool {
    p.beta > 0.02 && p.beta < 1.5 && p.chi > 0.02 && p.chi < 1.95 && p.ln_b.is_finite()
}

/// Core fit on the extracted points with an inclusion mask.
fn fit_included(
    table: &ScalingFunctionTable,
    pts: &[DataPoint],
    include: &[bool],
    mode: FitMode,
) -> Result<ScalingFit> {
    let n_inc = include.iter().filter(|b| **b).count();
    let free = matches!(mode, FitMode::FreeExponents);
    let n_par = if free { 4 } else { 2 };
    if n_inc < n_par + 1 {
        return Err(Error::InsufficientData(format!(
            "collapse fit needs more than {n_par} usable cells, got {n_inc}"
        )));
    }
    let (beta0, chi0) = match mode {
        FitMode::AmplitudesOnly { beta, chi } => {
            if !(beta > 0.0 && chi > 0.0 && beta.is_finite() && chi.is_finite()) {
                return Err(Error::Parameter(format!(
                    "fixed exponents must be positive, got ({beta}, {chi})"
                )));
            }
            (beta, chi)
        }
        FitMode::FreeExponents => (table.provenance().beta, table.provenance().chi),
    };

    // Multi-start over ln B, centered so the median data point lands at the
    // median of the table's grid; ln A is profiled at each grid node.
    let mut us: Vec<f64> = pts
        .iter()
        .zip(include)
        .filter(|(_, inc)| **inc)
        .map(|(p, _)| plane_coords(p, beta0, chi0).0)
        .collect();
    let u_med = median(&mut us);
    let mut grid_ln_y: Vec<f64> = table.y_grid()[1..].iter().map(|y| y.ln()).collect();
    let y_med = median(&mut grid_ln_y);
    let center = y_med - u_med;
    let mut best: Option<(f64, Params)> = None;
    for k in 0..=(2 * GRID_HALF_STEPS) {
        let ln_b = center + (k as f64 - GRID_HALF_STEPS as f64) * GRID_STEP;
        let ln_a = profiled_ln_a(table, pts, include, ln_b, beta0, chi0);
        let p = Params {
            ln_a,
            ln_b,
            beta: beta0,
            chi: chi0,
        };
        let obj = objective(table, pts, include, p);
        if obj.is_finite() && best.map_or(true, |(b, _)| obj < b) {
            best = Some((obj, p));
        }
    }
    let Some((mut best_obj, mut params)) = best else {
        return Err(Error::FitFailure(
            "no starting point yields a finite collapse objective".into(),
        ));
    };

    // Damped Gauss–Newton with a central-difference Jacobian.
    let mut damping = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let r0 = residual_vector(table, pts, include, params);
        let pv = params_to_vec(params, free);
        let mut jac: Vec<Vec<f64>> = vec![vec![0.0; pv.len()]; r0.len()];
        for j in 0..pv.len() {
            let h = 1e-5 * (1.0 + pv[j].abs());
            let mut plus = pv.clone();
            plus[j] += h;
            let mut minus = pv.clone();
            minus[j] -= h;
            let rp = residual_vector(table, pts, include, vec_to_params(&plus, params));
            let rm = residual_vector(table, pts, include, vec_to_params(&minus, params));
            for (i, row) in jac.iter_mut().enumerate() {
                row[j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![vec![0.0; pv.len()]; pv.len()];
        let mut jtr = vec![0.0; pv.len()];
        for (i, row) in jac.iter().enumerate() {
            for a in 0..pv.len() {
                jtr[a] += row[a] * r0[i];
                for b in 0..pv.len() {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += damping * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve_small(lhs, jtr.iter().map(|v| -v).collect()) else {
                damping *= 10.0;
                continue;
            };
            let trial_vec: Vec<f64> = pv.iter().zip(&step).map(|(p, s)| p + s).collect();
            if trial_vec.iter().any(|v| !v.is_finite()) {
                damping *= 10.0;
                continue;
            }
            let trial = vec_to_params(&trial_vec, params);
            if free && !exponents_valid(trial) {
                damping *= 10.0;
                continue;
            }
            let obj = objective(table, pts, include, trial);
            if obj.is_finite() && obj < best_obj {
                let gain = best_obj - obj;
                params = trial;
                best_obj = obj;
                damping = (damping / 5.0).max(1e-12);
                improved = true;
                if gain <= 1e-12 * (1.0 + best_obj) {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailure(format!(
            "collapse fit did not converge in {MAX_ITERATIONS} iterations; best iterate \
             A = {:.6e}, B = {:.6e}, beta = {:.4}, chi = {:.4}, objective = {:.6e}",
            params.ln_a.exp(),
            params.ln_b.exp(),
            params.beta,
            params.chi,
            best_obj
        )));
    }
    if !(params.chi / params.beta).is_finite() || params.chi / params.beta <= 0.0 {
        return Err(Error::FitFailure(format!(
            "fitted z = chi/beta = {} is not positive and finite",
            params.chi / params.beta
        )));
    }

    // Covariance from the final Jacobian: s²·(JᵀJ)⁻¹ on the active
    // parameters, widened to the fixed (β, χ, A, B) layout and transformed
    // from (ln A, ln B) to (A, B) by the delta method.
    let r_final = residual_vector(table, pts, include, params);
    let pv = params_to_vec(params, free);
    let mut jac: Vec<Vec<f64>> = vec![vec![0.0; pv.len()]; r_final.len()];
    for j in 0..pv.len() {
        let h = 1e-5 * (1.0 + pv[j].abs());
        let mut plus = pv.clone();
        plus[j] += h;
        let mut minus = pv.clone();
        minus[j] -= h;
        let rp = residual_vector(table, pts, include, vec_to_params(&plus, params));
        let rm = residual_vector(table, pts, include, vec_to_params(&minus, params));
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    let mut jtj = vec![vec![0.0; pv.len()]; pv.len()];
    for row in &jac {
        for a in 0..pv.len() {
            for b in 0..pv.len() {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    let dof = (r_final.len() as f64 - pv.len() as f64).max(1.0);
    let s2 = r_final.iter().map(|r| r * r).sum::<f64>() / dof;
    let cov_active = invert_small(&jtj)
        .ok_or_else(|| Error::FitFailure("singular normal equations at the optimum".into()))?;
    // Active layout: (ln A, ln B [, β, χ]) → output layout (β, χ, A, B).
    let a_val = params.ln_a.exp();
    let b_val = params.ln_b.exp();
    let act_to_out = |k: usize| match k {
        0 => 2usize,
        1 => 3,
        2 => 0,
        _ => 1,
    };
    let scale = |k: usize| match k {
        0 => a_val,
        1 => b_val,
        _ => 1.0,
    };
    let mut covariance = [[0.0; 4]; 4];
    for a in 0..pv.len() {
        for b in 0..pv.len() {
            covariance[act_to_out(a)][act_to_out(b)] = s2 * cov_active[a][b] * scale(a) * scale(b);
        }
    }

    Ok(ScalingFit {
        beta: params.beta,
        chi: params.chi,
        amplitude_a: a_val,
        amplitude_b: b_val,
        covariance,
        excluded_mask: include.iter().map(|inc| !inc).collect(),
        n_iterations: iterations,
        residual_rms: (best_obj / n_inc as f64).sqrt(),
    })
}

/// Fits the collapse curve value·Δt^{−2β} = A·𝒞(B·Δr·Δt^{−1/z}) to every
/// usable positive cell of the map (Δr > 0, Δt > 0).
pub fn odr_collapse_fit(
    data: &CorrelationMap,
    table: &ScalingFunctionTable,
    mode: FitMode,
) -> Result<ScalingFit> {
    let pts = extract_points(data);
    let include = vec![true; pts.len()];
    fit_included(table, &pts, &include, mode)
}

/// Iterates robust outlier exclusion from an initial fit: residuals are
/// compared against `threshold` times the robust scale (MAD × 1.4826,
/// floored numerically), the fit is repeated on survivors, and iteration
/// stops at a mask fixed point or after 10 rounds. Points stay in the
/// output, flagged via the returned mask.
pub fn sigma_exclusion(
    fit: &ScalingFit,
    data: &CorrelationMap,
    table: &ScalingFunctionTable,
    mode: FitMode,
    threshold: f64,
) -> Result<(Vec<bool>, ScalingFit)> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!(
            "exclusion threshold must be positive, got {threshold}"
        )));
    }
    let pts = extract_points(data);
    if fit.excluded_mask.len() != pts.len() {
        return Err(Error::Parameter(format!(
            "fit mask covers {} points but the map yields {}",
            fit.excluded_mask.len(),
            pts.len()
        )));
    }
    let mut mask = fit.excluded_mask.clone();
    let mut current = fit.clone();
    for _ in 0..MAX_EXCLUSION_ROUNDS {
        let params = Params {
            ln_a: current.amplitude_a.ln(),
            ln_b: current.amplitude_b.ln(),
            beta: current.beta,
            chi: current.chi,
        };
        let residuals: Vec<f64> = pts
            .iter()
            .map(|p| orthogonal_residual(table, params.ln_a, params.ln_b, params.beta, params.chi, p))
            .collect();
        let mut med_buf = residuals.clone();
        let med = median(&mut med_buf);
        let mut dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
        let sigma = (median(&mut dev) * 1.4826).max(RESIDUAL_FLOOR);
        let new_mask: Vec<bool> = residuals.iter().map(|r| r.abs() > threshold * sigma).collect();
        if new_mask.iter().all(|m| *m) {
            return Err(Error::FitFailure(
                "sigma exclusion removed every data point".into(),
            ));
        }
        if new_mask == mask {
            current.excluded_mask = mask.clone();
            return Ok((mask, current));
        }
        let include: Vec<bool> = new_mask.iter().map(|m| !m).collect();
        current = fit_included(table, &pts, &include, mode)?;
        mask = new_mask;
    }
    current.excluded_mask = mask.clone();
    Ok((mask, current))
}

/// Rescaled collapse coordinates of every fit-usable cell under the fit's
/// exponents, with propagated per-axis errors and the exclusion flag. Point
/// order matches the fit's mask.
pub fn collapse_points(data: &CorrelationMap, fit: &ScalingFit) -> Vec<CollapsePoint> {
    let pts = extract_points(data);
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let x = p.dr * p.dt.powf(-fit.beta / fit.chi);
            let y = p.value * p.dt.powf(-2.0 * fit.beta);
            CollapsePoint {
                dr: p.dr,
                dt: p.dt,
                x,
                y,
                err_x: x * p.sigma_u,
                err_y: y * p.rel_err,
                excluded: fit.excluded_mask.get(i).copied().unwrap_or(false),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{CellFlag, MapKind};
    use crate::scaling::TableProvenance;
    use num_complex::Complex64;

    fn reference_curve(y: f64, two_chi: f64) -> f64 {
        (1.0 + y * y).powf(two_chi / 2.0)
    }

    /// Table built directly from the reference curve on a log grid.
    fn reference_table(two_beta: f64, two_chi: f64) -> ScalingFunctionTable {
        let mut y_grid = vec![0.0];
        let mut values = vec![1.0];
        let mut y = 1e-3;
        while y < 1e3 {
            y_grid.push(y);
            values.push(reference_curve(y, two_chi));
            y *= 10f64.powf(1.0 / 8.0);
        }
        ScalingFunctionTable::from_bins(
            y_grid,
            values,
            TableProvenance {
                beta: two_beta / 2.0,
                chi: two_chi / 2.0,
                window: ((0.0, 1e9), (0.0, 1e9)),
                n_cells: 0,
                tail_exponent: two_chi,
                source: "reference curve".into(),
            },
        )
        .unwrap()
    }

    /// Map with values A·Δt^{2β}·𝒞(B·Δr·Δt^{−1/z}) evaluated from `table`,
    /// optionally perturbed multiplicatively.
    fn map_from_table(
        table: &ScalingFunctionTable,
        a: f64,
        b: f64,
        two_beta: f64,
        two_chi: f64,
        perturb: impl Fn(usize, f64) -> f64,
    ) -> CorrelationMap {
        let z = two_chi / two_beta;
        let dr_axis: Vec<f64> = (1..26).map(|i| i as f64 * 0.5).collect();
        let dt_axis: Vec<f64> = (0..14).map(|i| 2.0f64.powf(i as f64 / 2.0)).collect();
        let mut values = Vec::new();
        let mut stderr = Vec::new();
        let mut idx = 0;
        for &dt in &dt_axis {
            for &dr in &dr_axis {
                let x = dr * dt.powf(-1.0 / z);
                let clean = a * dt.powf(two_beta) * table.eval(b * x);
                let v = perturb(idx, clean);
                values.push(Complex64::new(v, 0.0));
                stderr.push(0.03 * v);
                idx += 1;
            }
        }
        let n = values.len();
        CorrelationMap::from_parts(
            MapKind::Correlation,
            dr_axis,
            dt_axis,
            values,
            stderr,
            vec![16; n],
            vec![CellFlag::Ok; n],
        )
        .unwrap()
    }

    #[test]
    fn amplitudes_recovered_exactly_on_clean_data() {
        let table = reference_table(0.446, 0.730);
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |_, v| v);
        let fit = odr_collapse_fit(
            &map,
            &table,
            FitMode::AmplitudesOnly {
                beta: 0.223,
                chi: 0.365,
            },
        )
        .unwrap();
        assert!((fit.amplitude_a - 2.0).abs() < 1e-4, "A = {}", fit.amplitude_a);
        assert!((fit.amplitude_b - 0.5).abs() < 1e-4, "B = {}", fit.amplitude_b);
        assert!(fit.residual_rms < 1e-4, "rms = {}", fit.residual_rms);
        assert!(fit.excluded_mask.iter().all(|m| !m));
        // Fixed-parameter covariance rows are zeroed.
        assert_eq!(fit.covariance[0][0], 0.0);
        assert_eq!(fit.covariance[1][1], 0.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let table = reference_table(0.446, 0.730);
        let map = map_from_table(&table, 1.3, 0.8, 0.446, 0.730, |i, v| {
            v * (1.0 + 0.02 * ((i * 2654435761) % 101) as f64 / 101.0 - 0.01)
        });
        let mode = FitMode::FreeExponents;
        let f1 = odr_collapse_fit(&map, &table, mode).unwrap();
        let f2 = odr_collapse_fit(&map, &table, mode).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn free_exponents_recovered_from_synthetic_collapse() {
        let (two_beta, two_chi) = (0.446, 0.730);
        let table = reference_table(two_beta, two_chi);
        // Deterministic ±2% multiplicative perturbation.
        let map = map_from_table(&table, 2.0, 0.5, two_beta, two_chi, |i, v| {
            v * (1.0 + 0.02 * ((((i * 2654435761) % 997) as f64 / 997.0) * 2.0 - 1.0))
        });
        let fit = odr_collapse_fit(&map, &table, FitMode::FreeExponents).unwrap();
        assert!(
            (fit.beta - two_beta / 2.0).abs() < 0.01,
            "beta = {}",
            fit.beta
        );
        assert!((fit.chi - two_chi / 2.0).abs() < 0.01, "chi = {}", fit.chi);
        assert!((fit.amplitude_a - 2.0).abs() < 0.1);
        assert!((fit.amplitude_b - 0.5).abs() < 0.05);
        // Covariance is symmetric with positive variances for all four.
        for i in 0..4 {
            assert!(fit.covariance[i][i] > 0.0);
            for j in 0..4 {
                assert!((fit.covariance[i][j] - fit.covariance[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_rescale_moves_only_amplitude_a() {
        let table = reference_table(0.446, 0.730);
        let base = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |i, v| {
            v * (1.0 + 0.015 * ((((i * 40503) % 211) as f64 / 211.0) * 2.0 - 1.0))
        });
        let c = 7.5;
        let scaled = {
            let values: Vec<Complex64> = (0..base.dt_axis().len())
                .flat_map(|j| {
                    (0..base.dr_axis().len()).map(move |i| (i, j))
                })
                .map(|(i, j)| base.value(i, j) * c)
                .collect();
            let stderr: Vec<f64> = (0..base.dt_axis().len())
                .flat_map(|j| (0..base.dr_axis().len()).map(move |i| (i, j)))
                .map(|(i, j)| base.stderr(i, j) * c)
                .collect();
            let n = values.len();
            CorrelationMap::from_parts(
                MapKind::Correlation,
                base.dr_axis().to_vec(),
                base.dt_axis().to_vec(),
                values,
                stderr,
                vec![16; n],
                vec![CellFlag::Ok; n],
            )
            .unwrap()
        };
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let f0 = odr_collapse_fit(&base, &table, mode).unwrap();
        let f1 = odr_collapse_fit(&scaled, &table, mode).unwrap();
        assert!((f1.amplitude_a / f0.amplitude_a - c).abs() < 1e-9);
        assert!((f1.amplitude_b - f0.amplitude_b).abs() < 1e-9);
        assert_eq!(f0.excluded_mask, f1.excluded_mask);
    }

    #[test]
    fn axis_rescale_moves_only_amplitude_b() {
        let table = reference_table(0.446, 0.730);
        let base = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |i, v| {
            v * (1.0 + 0.015 * ((((i * 40503) % 211) as f64 / 211.0) * 2.0 - 1.0))
        });
        let c = 2.0;
        let stretched = {
            let n = base.dr_axis().len() * base.dt_axis().len();
            let values: Vec<Complex64> = (0..base.dt_axis().len())
                .flat_map(|j| (0..base.dr_axis().len()).map(move |i| (i, j)))
                .map(|(i, j)| base.value(i, j))
                .collect();
            let stderr: Vec<f64> = (0..base.dt_axis().len())
                .flat_map(|j| (0..base.dr_axis().len()).map(move |i| (i, j)))
                .map(|(i, j)| base.stderr(i, j))
                .collect();
            CorrelationMap::from_parts(
                MapKind::Correlation,
                base.dr_axis().iter().map(|v| v * c).collect(),
                base.dt_axis().to_vec(),
                values,
                stderr,
                vec![16; n],
                vec![CellFlag::Ok; n],
            )
            .unwrap()
        };
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let f0 = odr_collapse_fit(&base, &table, mode).unwrap();
        let f1 = odr_collapse_fit(&stretched, &table, mode).unwrap();
        assert!((f1.amplitude_b * c / f0.amplitude_b - 1.0).abs() < 1e-9);
        assert!((f1.amplitude_a - f0.amplitude_a).abs() < 1e-9 * f0.amplitude_a);
        assert_eq!(f0.excluded_mask, f1.excluded_mask);
    }

    #[test]
    fn exclusion_on_clean_data_is_empty_and_idempotent() {
        let table = reference_table(0.446, 0.730);
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |_, v| v);
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let fit = odr_collapse_fit(&map, &table, mode).unwrap();
        let (mask, refit) = sigma_exclusion(&fit, &map, &table, mode, 3.0).unwrap();
        assert!(mask.iter().all(|m| !m));
        let (mask2, _) = sigma_exclusion(&refit, &map, &table, mode, 3.0).unwrap();
        assert_eq!(mask, mask2);
    }

    #[test]
    fn planted_outliers_are_exactly_masked() {
        let table = reference_table(0.446, 0.730);
        // 5% of points inflated by a factor 40 (far beyond 10σ of the
        // 1.5% multiplicative scatter).
        let planted: Vec<usize> = (0..350).filter(|i| i % 20 == 7).collect();
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |i, v| {
            let noise = 1.0 + 0.015 * ((((i * 48271) % 233) as f64 / 233.0) * 2.0 - 1.0);
            if i % 20 == 7 {
                v * 40.0 * noise
            } else {
                v * noise
            }
        });
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let fit = odr_collapse_fit(&map, &table, mode).unwrap();
        let (mask, refit) = sigma_exclusion(&fit, &map, &table, mode, 3.0).unwrap();
        let masked: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.then_some(i))
            .collect();
        assert_eq!(masked, planted);
        assert!((refit.amplitude_a - 2.0).abs() < 0.05);
    }

    #[test]
    fn infinite_threshold_excludes_nothing() {
        let table = reference_table(0.446, 0.730);
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |i, v| {
            if i % 7 == 0 {
                v * 3.0
            } else {
                v
            }
        });
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let fit = odr_collapse_fit(&map, &table, mode).unwrap();
        let (mask, _) = sigma_exclusion(&fit, &map, &table, mode, f64::INFINITY).unwrap();
        assert!(mask.iter().all(|m| !m));
    }

    #[test]
    fn degenerate_exclusion_is_an_error() {
        let table = reference_table(0.446, 0.730);
        // Alternating large offsets: every residual is far from the curve.
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |i, v| {
            if i % 2 == 0 {
                v * 50.0
            } else {
                v / 50.0
            }
        });
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let fit = odr_collapse_fit(&map, &table, mode).unwrap();
        let out = sigma_exclusion(&fit, &map, &table, mode, 1e-9);
        assert!(matches!(out, Err(Error::FitFailure(_))), "{out:?}");
    }

    #[test]
    fn collapse_points_align_with_mask_order() {
        let table = reference_table(0.446, 0.730);
        let map = map_from_table(&table, 2.0, 0.5, 0.446, 0.730, |_, v| v);
        let mode = FitMode::AmplitudesOnly {
            beta: 0.223,
            chi: 0.365,
        };
        let fit = odr_collapse_fit(&map, &table, mode).unwrap();
        let pts = collapse_points(&map, &fit);
        assert_eq!(pts.len(), fit.excluded_mask.len());
        for p in &pts {
            assert!(p.x > 0.0 && p.y > 0.0);
            assert!(!p.excluded);
            let x = p.dr * p.dt.powf(-fit.beta / fit.chi);
            assert!((p.x - x).abs() < 1e-12 * x);
        }
    }
}
