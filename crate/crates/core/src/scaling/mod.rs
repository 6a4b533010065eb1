//! Scaling analysis: universal-function tabulation, orthogonal-distance
//! collapse fits with iterated outlier exclusion, finite-size exponent
//! extraction, and the exact exponent relations.

mod odr;
mod table;

pub use odr::{
    collapse_points, odr_collapse_fit, sigma_exclusion, CollapsePoint, FitMode, ScalingFit,
};
pub use table::{tabulate_scaling_function, ScalingFunctionTable, TableProvenance};

use crate::error::{Error, Result};

/// Growth exponent from the roughness exponent via the Galilean (tilt)
/// invariance of the KPZ equation: β = χ/(2−χ).
pub fn galilean_beta(chi: f64) -> Result<f64> {
    if !(chi.is_finite() && chi > 0.0 && chi < 2.0) {
        return Err(Error::Parameter(format!(
            "galilean relation needs 0 < chi < 2, got {chi}"
        )));
    }
    Ok(chi / (2.0 - chi))
}

/// Dimensionless KPZ coupling λ²D/ν³ controlling how quickly nonlinear
/// scaling becomes visible.
pub fn kpz_coupling(nu: f64, lambda: f64, noise_d: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::Parameter(format!("nu must be > 0, got {nu}")));
    }
    if !lambda.is_finite() || !noise_d.is_finite() {
        return Err(Error::Parameter("lambda and D must be finite".into()));
    }
    Ok(lambda * lambda * noise_d / (nu * nu * nu))
}

/// Weighted least-squares line v = a + b·u. Returns (a, b, var_a, var_b).
/// With all weights equal the parameter variances are scaled by the
/// residual variance; otherwise weights are treated as 1/σ².
pub(crate) fn weighted_line_fit(pts: &[(f64, f64, f64)]) -> Result<(f64, f64, f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::InsufficientData(
            "line fit needs at least 2 points".into(),
        ));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let su: f64 = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let sv: f64 = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let suu: f64 = pts.iter().map(|p| p.2 * (p.0 - su).powi(2)).sum();
    if suu <= 0.0 {
        return Err(Error::InsufficientData(
            "line fit needs at least 2 distinct abscissas".into(),
        ));
    }
    let suv: f64 = pts.iter().map(|p| p.2 * (p.0 - su) * (p.1 - sv)).sum();
    let slope = suv / suu;
    let intercept = sv - slope * su;
    let equal_weights = pts.windows(2).all(|w| w[0].2 == w[1].2);
    let scale = if equal_weights {
        // Residual variance replaces the (arbitrary) common weight.
        if pts.len() == 2 {
            0.0
        } else {
            let ss: f64 = pts
                .iter()
                .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
                .sum();
            ss / (pts.len() - 2) as f64
        }
    } else {
        1.0
    };
    let var_slope = scale / suu;
    let var_intercept = scale * (1.0 / sw + su * su / suu);
    Ok((intercept, slope, var_intercept, var_slope))
}

/// Roughness exponent from saturated roughness values: the weighted
/// least-squares slope of log W_sat against log L, i.e. the estimate of 2χ
/// in W_sat ∝ L^{2χ}. Input rows are (L, W_sat, err); errors are used as
/// 1/σ² weights when all are positive, otherwise the fit is unweighted.
pub fn finite_size_chi(points: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "finite-size fit needs >= 3 distinct sizes, got {}",
            sizes.len()
        )));
    }
    for &(l, w, e) in points {
        if !(l.is_finite() && l > 0.0 && w.is_finite() && w > 0.0 && e.is_finite() && e >= 0.0) {
            return Err(Error::Parameter(format!(
                "finite-size rows need L > 0, W > 0, err >= 0; got ({l}, {w}, {e})"
            )));
        }
    }
    let weighted = points.iter().all(|p| p.2 > 0.0);
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(l, w, e)| {
            let weight = if weighted { (w / e).powi(2) } else { 1.0 };
            (l.ln(), w.ln(), weight)
        })
        .collect();
    let (_, slope, _, var_slope) = weighted_line_fit(&rows)?;
    Ok((slope, var_slope.sqrt()))
}
