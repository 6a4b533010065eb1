//! Power spectra binned by the discrete Laplacian eigenvalue.
//!
//! Normalization convention: θ̂_k = (1/L²) Σ_r θ(r) e^{−ik·r}, which makes
//! Parseval read Σ_k |θ̂_k|² = Σ_r θ(r)²/L². Each bin groups every mode
//! (m, n) sharing the eigenvalue k̂² = (2/a²)(2 − cos(2πm/L) − cos(2πn/L));
//! the zero mode is excluded. Under this convention the stationary
//! Edwards–Wilkinson spectrum is ⟨|θ̂_k|²⟩ = D/(ν·k̂²·L²) up to the discrete
//! time-stepping correction.

use num_complex::Complex64;
use std::collections::BTreeMap;

use super::PhaseField;
use crate::error::{Error, Result};
use crate::fft2::Fft2;

/// One group of Fourier modes sharing a discrete eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    /// Discrete eigenvalue k̂² shared by the modes in this bin.
    pub k2: f64,
    /// Mean of |θ̂_k|² over the bin's modes.
    pub mean_power: f64,
    /// Number of modes in the bin.
    pub n_modes: usize,
}

/// Eigenvalues closer than this (relatively) are treated as degenerate and
/// merged into one bin; distinct lattice eigenvalues are far wider apart.
const K2_MERGE_TOL: f64 = 1e-9;

/// Bins |θ̂_k|² of the field by discrete eigenvalue, zero mode excluded,
/// sorted by ascending k̂².
pub fn power_spectrum(field: &PhaseField) -> Result<Vec<SpectrumBin>> {
    let l = field.side();
    if l < 4 {
        return Err(Error::InvalidLattice(format!(
            "power spectrum needs side >= 4, got {l}"
        )));
    }
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    Fft2::square(l).forward(&mut data);

    // Group modes by the canonical frequency pair (p, q), p <= q, where
    // p and q are the folded frequencies min(m, L-m). All modes in a group
    // share k̂² exactly; accidental degeneracies across groups are merged
    // below after sorting.
    let norm = 1.0 / (l as f64).powi(4);
    let mut groups: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for n in 0..l {
        for m in 0..l {
            if m == 0 && n == 0 {
                continue;
            }
            let p = m.min(l - m);
            let q = n.min(l - n);
            let key = (p.min(q), p.max(q));
            let power = data[n * l + m].norm_sqr() * norm;
            let entry = groups.entry(key).or_insert((0.0, 0));
            entry.0 += power;
            entry.1 += 1;
        }
    }

    let a2 = field.spacing() * field.spacing();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut rows: Vec<(f64, f64, usize)> = groups
        .into_iter()
        .map(|((p, q), (power_sum, count))| {
            let k2 = (2.0 / a2)
                * (2.0 - (two_pi * p as f64 / l as f64).cos() - (two_pi * q as f64 / l as f64).cos());
            (k2, power_sum, count)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut bins: Vec<SpectrumBin> = Vec::with_capacity(rows.len());
    for (k2, power_sum, count) in rows {
        match bins.last_mut() {
            Some(last) if (k2 - last.k2).abs() <= K2_MERGE_TOL * (1.0 + k2) => {
                let total = last.mean_power * last.n_modes as f64 + power_sum;
                last.n_modes += count;
                last.mean_power = total / last.n_modes as f64;
            }
            _ => bins.push(SpectrumBin {
                k2,
                mean_power: power_sum / count as f64,
                n_modes: count,
            }),
        }
    }
    Ok(bins)
}

/// Coarsens eigenvalue bins into logarithmic shells (`shells_per_decade`
/// shells per factor of ten in k̂²), weighting by mode count. Useful when a
/// statistical test needs well-populated bins.
pub fn shell_average(bins: &[SpectrumBin], shells_per_decade: usize) -> Vec<SpectrumBin> {
    assert!(shells_per_decade > 0);
    let mut shells: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for b in bins {
        if b.k2 <= 0.0 {
            continue;
        }
        let shell = (b.k2.log10() * shells_per_decade as f64).floor() as i64;
        let e = shells.entry(shell).or_insert((0.0, 0.0, 0));
        e.0 += b.k2 * b.n_modes as f64;
        e.1 += b.mean_power * b.n_modes as f64;
        e.2 += b.n_modes;
    }
    shells
        .into_values()
        .map(|(k2_sum, power_sum, n)| SpectrumBin {
            k2: k2_sum / n as f64,
            mean_power: power_sum / n as f64,
            n_modes: n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::noise::{sample_noise_field, NoiseStream};

    #[test]
    fn rejects_side_below_four() {
        let f = PhaseField::flat(3, 1.0).unwrap();
        assert!(matches!(power_spectrum(&f), Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn constant_field_has_no_nonzero_mode_power() {
        let f = PhaseField::from_values(64, 1.0, 0.0, vec![2.5; 64 * 64]).unwrap();
        let bins = power_spectrum(&f).unwrap();
        assert!(!bins.is_empty());
        for b in &bins {
            assert_eq!(b.mean_power, 0.0, "k2 = {}", b.k2);
        }
    }

    #[test]
    fn single_sine_mode_lands_in_its_eigenvalue_bin() {
        let l = 64usize;
        let mut vals = vec![0.0; l * l];
        for y in 0..l {
            for x in 0..l {
                vals[y * l + x] = (2.0 * std::f64::consts::PI * x as f64 / l as f64).sin();
            }
        }
        let f = PhaseField::from_values(l, 1.0, 0.0, vals).unwrap();
        let bins = power_spectrum(&f).unwrap();

        let k2_fundamental = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / l as f64).cos());
        let total: f64 = bins.iter().map(|b| b.mean_power * b.n_modes as f64).sum();
        assert!((total - 0.5).abs() < 1e-12, "total power {total}");
        // The (±1, 0) modes carry 1/4 each; their bin also holds the two
        // empty (0, ±1) modes, so the mean over the 4-mode bin is 1/8.
        let fundamental = &bins[0];
        assert!((fundamental.k2 - k2_fundamental).abs() < 1e-12);
        assert_eq!(fundamental.n_modes, 4);
        assert!((fundamental.mean_power - 0.125).abs() < 1e-12);
        for b in &bins[1..] {
            assert!(b.mean_power < 1e-24, "k2 = {}", b.k2);
        }
    }

    #[test]
    fn matches_direct_summation_on_8x8() {
        let mut stream = NoiseStream::new(77, 0);
        let f = sample_noise_field(&mut stream, 8, 1.0, 1.0).unwrap();
        let l = 8usize;

        // Independent oracle: direct O(N²) transform and hand grouping.
        let mut grouped: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for n in 0..l {
            for m in 0..l {
                if m == 0 && n == 0 {
                    continue;
                }
                let mut acc = Complex64::default();
                for y in 0..l {
                    for x in 0..l {
                        let phase = -2.0 * std::f64::consts::PI
                            * (m as f64 * x as f64 + n as f64 * y as f64)
                            / l as f64;
                        acc += f.get(x, y) * Complex64::from_polar(1.0, phase);
                    }
                }
                let p = m.min(l - m);
                let q = n.min(l - n);
                let key = (p.min(q), p.max(q));
                let e = grouped.entry(key).or_insert((0.0, 0));
                e.0 += acc.norm_sqr() / (l as f64).powi(4);
                e.1 += 1;
            }
        }
        let mut rows: Vec<(f64, f64, usize)> = grouped
            .into_iter()
            .map(|((p, q), (sum, n))| {
                let k2 = 2.0
                    * (2.0
                        - (2.0 * std::f64::consts::PI * p as f64 / l as f64).cos()
                        - (2.0 * std::f64::consts::PI * q as f64 / l as f64).cos());
                (k2, sum, n)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Accidentally degenerate eigenvalues (e.g. modes (0,4), (1,3), (2,2)
        // all give k̂² = 4 on L=8) belong to a single bin.
        let mut expected: Vec<(f64, f64, usize)> = Vec::new();
        for (k2, sum, n) in rows {
            match expected.last_mut() {
                Some(last) if (k2 - last.0).abs() <= 1e-9 * (1.0 + k2) => {
                    last.1 += sum;
                    last.2 += n;
                }
                _ => expected.push((k2, sum, n)),
            }
        }
        let expected: Vec<(f64, f64, usize)> = expected
            .into_iter()
            .map(|(k2, sum, n)| (k2, sum / n as f64, n))
            .collect();

        let bins = power_spectrum(&f).unwrap();
        assert_eq!(bins.len(), expected.len());
        for (b, (k2, mean, n)) in bins.iter().zip(&expected) {
            assert!((b.k2 - k2).abs() < 1e-12);
            assert!((b.mean_power - mean).abs() < 1e-12 * mean.max(1.0));
            assert_eq!(b.n_modes, *n);
        }
    }

    #[test]
    fn parseval_identity_holds() {
        let mut stream = NoiseStream::new(5, 1);
        let f = sample_noise_field(&mut stream, 32, 1.0, 2.0).unwrap();
        let bins = power_spectrum(&f).unwrap();
        let l2 = (32 * 32) as f64;
        let spectral: f64 = bins.iter().map(|b| b.mean_power * b.n_modes as f64).sum();
        let zero_mode = f.mean() * f.mean();
        let direct: f64 = f.values().iter().map(|v| v * v).sum::<f64>() / l2;
        assert!(
            ((spectral + zero_mode) - direct).abs() < 1e-12 * direct,
            "spectral {spectral} + dc {zero_mode} vs direct {direct}"
        );
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let l = 32usize;
        let n_fields = 200;
        let mut sums: Option<Vec<(f64, f64, usize)>> = None;
        for i in 0..n_fields {
            let mut stream = NoiseStream::new(31337, i);
            let f = sample_noise_field(&mut stream, l, 1.0, 1.0).unwrap();
            let bins = power_spectrum(&f).unwrap();
            match &mut sums {
                None => {
                    sums = Some(bins.iter().map(|b| (b.k2, b.mean_power, b.n_modes)).collect())
                }
                Some(s) => {
                    for (acc, b) in s.iter_mut().zip(&bins) {
                        acc.1 += b.mean_power;
                    }
                }
            }
        }
        // Each mode of unit-variance white noise carries 1/L² on average.
        let expected = 1.0 / (l * l) as f64;
        for (k2, sum, n_modes) in sums.unwrap() {
            let mean = sum / n_fields as f64;
            let rel_sigma = 1.0 / ((n_modes * n_fields as usize) as f64).sqrt();
            assert!(
                (mean - expected).abs() < 5.0 * rel_sigma * expected + 1e-15,
                "k2 {k2}: mean {mean} vs {expected} (rel sigma {rel_sigma})"
            );
        }
    }

    #[test]
    fn shell_average_pools_modes() {
        let bins = vec![
            SpectrumBin { k2: 0.10, mean_power: 1.0, n_modes: 4 },
            SpectrumBin { k2: 0.12, mean_power: 2.0, n_modes: 4 },
            SpectrumBin { k2: 1.5, mean_power: 3.0, n_modes: 8 },
        ];
        let shells = shell_average(&bins, 1);
        assert_eq!(shells.len(), 2);
        assert_eq!(shells[0].n_modes, 8);
        assert!((shells[0].mean_power - 1.5).abs() < 1e-15);
        assert_eq!(shells[1].n_modes, 8);
    }
}
