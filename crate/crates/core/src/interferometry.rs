//! Synthetic carrier-wave interferometry: fringe-pattern generation from a
//! coherence map, Fourier-sideband demodulation back to g⁽¹⁾, and Poisson
//! shot-noise error maps via Monte-Carlo resampling.
//!
//! A two-arm image with per-pixel arm intensities I₁, I₂ and carrier k_c is
//!
//! I(p) = I₁(p) + I₂(p) + 2√(I₁I₂)·Re[g⁽¹⁾(p)·e^{i k_c·p}],
//!
//! so the fringe envelope carries the coherence. Demodulation multiplies by
//! e^{−i k_c·p} (an exact spectral shift for any carrier, bin-aligned or
//! not), applies a circular low-pass of radius r (default |k_c|/2) with a
//! raised-cosine edge, inverse transforms, and divides out the envelope
//! normalization; the factor two from keeping a single sideband cancels
//! against the 2√(I₁I₂) fringe amplitude, leaving a division by √(I₁I₂).

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::lattice::NoiseStream;
use crate::observables::{assign_bin, bin_width, CellFlag, CorrelationMap, MapKind};

/// Fraction of the sideband-window radius occupied by the raised-cosine
/// roll-off; inside the remaining radius the window is exactly one.
const WINDOW_EDGE_FRACTION: f64 = 0.2;

/// Pixels whose arm-intensity product falls below this fraction of the
/// image's peak product are masked: dividing by their envelope would only
/// amplify windowing leakage.
const PRODUCT_FLOOR_REL: f64 = 1e-12;

/// Fewest Monte-Carlo resamples accepted for a shot-noise map; below this
/// the per-pixel standard deviation is itself too noisy to quote as a σ.
pub const MIN_SHOT_NOISE_RESAMPLES: usize = 50;

/// A two-arm interference image with known arm profiles and carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    width: usize,
    height: usize,
    intensity: Vec<f64>,
    arm_one: Vec<f64>,
    arm_two: Vec<f64>,
    carrier: [f64; 2],
    counts_scale: f64,
}

impl Interferogram {
    /// Assembles an interferogram from raw pixel data, enforcing
    /// non-negative intensities and a carrier inside the demodulation
    /// validity window.
    pub fn from_parts(
        width: usize,
        height: usize,
        intensity: Vec<f64>,
        arm_one: Vec<f64>,
        arm_two: Vec<f64>,
        carrier: [f64; 2],
        counts_scale: f64,
    ) -> Result<Self> {
        if width < 8 || height < 8 {
            return Err(Error::Parameter(format!(
                "image must be at least 8x8 pixels, got {width}x{height}"
            )));
        }
        let n = width * height;
        for (name, data) in [
            ("intensity", &intensity),
            ("arm one", &arm_one),
            ("arm two", &arm_two),
        ] {
            if data.len() != n {
                return Err(Error::Parameter(format!(
                    "{name} has {} pixels, expected {n}",
                    data.len()
                )));
            }
            if !data.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and non-negative everywhere"
                )));
            }
        }
        validate_carrier(width, carrier)?;
        if !(counts_scale.is_finite() && counts_scale > 0.0) {
            return Err(Error::Parameter(format!(
                "counts_scale must be > 0, got {counts_scale}"
            )));
        }
        Ok(Self {
            width,
            height,
            intensity,
            arm_one,
            arm_two,
            carrier,
            counts_scale,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn arm_one(&self) -> &[f64] {
        &self.arm_one
    }

    pub fn arm_two(&self) -> &[f64] {
        &self.arm_two
    }

    pub fn carrier(&self) -> [f64; 2] {
        self.carrier
    }

    pub fn counts_scale(&self) -> f64 {
        self.counts_scale
    }
}

/// The carrier must be resolvable (several fringes across the frame) yet
/// slow enough that the sideband, its mirror image, and the baseband stay
/// separated after wrapping.
fn validate_carrier(width: usize, carrier: [f64; 2]) -> Result<()> {
    if !(carrier[0].is_finite() && carrier[1].is_finite()) {
        return Err(Error::Parameter("carrier components must be finite".into()));
    }
    let norm = carrier[0].hypot(carrier[1]);
    let lo = 4.0 * 2.0 * PI / width as f64;
    let hi = 0.8 * PI;
    if !(norm > lo && norm < hi) {
        return Err(Error::Parameter(format!(
            "carrier magnitude {norm} outside the validity window ({lo}, {hi})"
        )));
    }
    Ok(())
}

/// Builds the fringe pattern for a coherence map and two arm profiles.
/// Coherence magnitudes above one are a domain error; the result is
/// non-negative by construction (clamped at zero where perfect destructive
/// interference lands a rounding ulp below it).
pub fn synthesize(
    width: usize,
    height: usize,
    g1: &[Complex64],
    arm_one: &[f64],
    arm_two: &[f64],
    carrier: [f64; 2],
    counts_scale: f64,
) -> Result<Interferogram> {
    let n = width * height;
    if g1.len() != n {
        return Err(Error::Parameter(format!(
            "coherence map has {} pixels, expected {n}",
            g1.len()
        )));
    }
    for v in g1 {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Parameter("coherence map must be finite".into()));
        }
        if v.norm_sqr() > 1.0 + 1e-9 {
            return Err(Error::Parameter(format!(
                "coherence magnitude {} exceeds one",
                v.norm()
            )));
        }
    }
    let mut intensity = vec![0.0; n];
    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            let phase = carrier[0] * x as f64 + carrier[1] * y as f64;
            let fringe = (g1[idx] * Complex64::from_polar(1.0, phase)).re;
            let value = arm_one[idx]
                + arm_two[idx]
                + 2.0 * (arm_one[idx] * arm_two[idx]).sqrt() * fringe;
            intensity[idx] = value.max(0.0);
        }
    }
    Interferogram::from_parts(
        width,
        height,
        intensity,
        arm_one.to_vec(),
        arm_two.to_vec(),
        carrier,
        counts_scale,
    )
}

/// Complex coherence estimate per pixel plus its validity mask; masked
/// pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceImage {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
    valid: Vec<bool>,
}

impl CoherenceImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }
}

/// Angular frequency of DFT bin `index`, wrapped into (−π, π].
fn wrapped_freq(index: usize, size: usize) -> f64 {
    let frac = index as f64 / size as f64;
    2.0 * PI * if frac > 0.5 { frac - 1.0 } else { frac }
}

/// Circular low-pass weight: one inside the flat core, raised-cosine across
/// the outer edge fraction, zero beyond the radius.
fn window_weight(rho: f64, radius: f64) -> f64 {
    let flat = radius * (1.0 - WINDOW_EDGE_FRACTION);
    if rho <= flat {
        1.0
    } else if rho < radius {
        0.5 * (1.0 + (PI * (rho - flat) / (radius - flat)).cos())
    } else {
        0.0
    }
}

/// Shifts the sideband at the carrier to baseband and low-passes it with
/// the given window radius, returning the complex envelope √(I₁I₂)·g⁽¹⁾.
fn extract_sideband(ig: &Interferogram, radius: f64) -> Vec<Complex64> {
    let (w, h) = (ig.width, ig.height);
    let mut buf: Vec<Complex64> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let phase = -(ig.carrier[0] * x as f64 + ig.carrier[1] * y as f64);
            buf.push(ig.intensity[y * w + x] * Complex64::from_polar(1.0, phase));
        }
    }
    let mut fft = Fft2::new(w, h);
    fft.forward(&mut buf);
    for ky in 0..h {
        let fy = wrapped_freq(ky, h);
        for kx in 0..w {
            let fx = wrapped_freq(kx, w);
            buf[ky * w + kx] *= window_weight(fx.hypot(fy), radius);
        }
    }
    fft.inverse(&mut buf);
    buf
}

fn check_radius(ig: &Interferogram, radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Parameter(format!(
            "sideband radius must be > 0, got {radius}"
        )));
    }
    let kc = ig.carrier[0].hypot(ig.carrier[1]);
    if radius >= kc {
        return Err(Error::Parameter(format!(
            "sideband window radius {radius} reaches the baseband at distance {kc}"
        )));
    }
    Ok(())
}

/// Recovers the coherence map with the default sideband radius |k_c|/2.
pub fn demodulate(ig: &Interferogram) -> Result<CoherenceImage> {
    let kc = ig.carrier[0].hypot(ig.carrier[1]);
    demodulate_with_radius(ig, kc / 2.0)
}

/// Recovers the coherence map with an explicit sideband radius; a window
/// wide enough to reach the baseband is a configuration error.
pub fn demodulate_with_radius(ig: &Interferogram, radius: f64) -> Result<CoherenceImage> {
    check_radius(ig, radius)?;
    let sideband = extract_sideband(ig, radius);
    let peak = ig
        .arm_one
        .iter()
        .zip(&ig.arm_two)
        .map(|(a, b)| a * b)
        .fold(0.0f64, f64::max);
    let floor = peak * PRODUCT_FLOOR_REL;
    let n = ig.width * ig.height;
    let mut values = vec![Complex64::new(f64::NAN, f64::NAN); n];
    let mut valid = vec![false; n];
    for idx in 0..n {
        let product = ig.arm_one[idx] * ig.arm_two[idx];
        if product > floor {
            values[idx] = sideband[idx] / product.sqrt();
            valid[idx] = true;
        }
    }
    Ok(CoherenceImage {
        width: ig.width,
        height: ig.height,
        values,
        valid,
    })
}

/// Demodulation without arm knowledge: the envelope is estimated from the
/// image's own baseband, which equals (I₁+I₂)/2 per arm pair and matches
/// √(I₁I₂) only for balanced arms. Imbalance scales the recovered magnitude
/// down by the geometric-to-arithmetic mean ratio, so tolerances are looser
/// than in the known-arm path.
pub fn demodulate_blind(ig: &Interferogram) -> Result<CoherenceImage> {
    let kc = ig.carrier[0].hypot(ig.carrier[1]);
    let radius = kc / 2.0;
    check_radius(ig, radius)?;
    let sideband = extract_sideband(ig, radius);

    let (w, h) = (ig.width, ig.height);
    let mut baseband: Vec<Complex64> = ig.intensity.iter().map(|&v| v.into()).collect();
    let mut fft = Fft2::new(w, h);
    fft.forward(&mut baseband);
    for ky in 0..h {
        let fy = wrapped_freq(ky, h);
        for kx in 0..w {
            let fx = wrapped_freq(kx, w);
            baseband[ky * w + kx] *= window_weight(fx.hypot(fy), radius);
        }
    }
    fft.inverse(&mut baseband);

    let peak = baseband.iter().map(|v| v.re).fold(0.0f64, f64::max);
    let floor = peak * PRODUCT_FLOOR_REL.sqrt();
    let n = w * h;
    let mut values = vec![Complex64::new(f64::NAN, f64::NAN); n];
    let mut valid = vec![false; n];
    for idx in 0..n {
        let envelope = baseband[idx].re / 2.0;
        if envelope > floor {
            values[idx] = sideband[idx] / envelope;
            valid[idx] = true;
        }
    }
    Ok(CoherenceImage {
        width: w,
        height: h,
        values,
        valid,
    })
}

/// Per-pixel shot-noise σ of |g⁽¹⁾|: the intensity map is resampled n_mc
/// times as Poisson counts (mean = intensity·counts_scale), each resample
/// demodulated with the default window, and the standard deviation of the
/// recovered magnitude taken across resamples. Resample j draws from noise
/// stream (master_seed, j), so the map is reproducible for any worker
/// count. Masked pixels hold NaN.
pub fn shot_noise_mc(ig: &Interferogram, n_mc: usize, master_seed: u64) -> Result<Vec<f64>> {
    if n_mc < MIN_SHOT_NOISE_RESAMPLES {
        return Err(Error::InsufficientData(format!(
            "{n_mc} resamples cannot support a noise estimate; need at least {MIN_SHOT_NOISE_RESAMPLES}"
        )));
    }
    let moduli: Vec<Vec<f64>> = (0..n_mc as u64)
        .into_par_iter()
        .map(|resample| {
            let mut stream = NoiseStream::new(master_seed, resample);
            let mut noisy = ig.clone();
            for v in noisy.intensity.iter_mut() {
                let counts = stream.poisson(*v * ig.counts_scale);
                *v = counts as f64 / ig.counts_scale;
            }
            demodulate(&noisy).map(|img| img.values.iter().map(|v| v.norm()).collect())
        })
        .collect::<Result<_>>()?;

    let n = ig.width * ig.height;
    let samples = n_mc as f64;
    let mut sigma = vec![0.0; n];
    for idx in 0..n {
        let mean = moduli.iter().map(|m| m[idx]).sum::<f64>() / samples;
        let var = moduli
            .iter()
            .map(|m| (m[idx] - mean).powi(2))
            .sum::<f64>()
            / (samples - 1.0);
        sigma[idx] = var.sqrt();
    }
    Ok(sigma)
}

/// Bins a coherence image radially about a center point (the
/// point-reflection axis of the two arms), producing a single-Δt
/// correlation map on distance bins of half a pixel pitch. The center pixel
/// itself is excluded: it is the autocorrelation point, fixed by
/// normalization rather than signal. The per-bin error is the scatter of
/// pixel magnitudes within the annulus; neighboring pixels are correlated
/// after windowing, so it measures spread, not an independent-sample error.
pub fn radial_coherence(
    image: &CoherenceImage,
    center: (f64, f64),
    pitch: f64,
) -> Result<CorrelationMap> {
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(Error::Parameter(format!(
            "pixel pitch must be > 0, got {pitch}"
        )));
    }
    let (w, h) = (image.width as f64, image.height as f64);
    if !(center.0.is_finite() && center.1.is_finite())
        || center.0 < 0.0
        || center.0 > w - 1.0
        || center.1 < 0.0
        || center.1 > h - 1.0
    {
        return Err(Error::Parameter(format!(
            "center ({}, {}) lies outside the image",
            center.0, center.1
        )));
    }
    let edge = center
        .0
        .min(w - 1.0 - center.0)
        .min(center.1)
        .min(h - 1.0 - center.1);
    let width = bin_width(pitch);
    let n_bins = (edge * pitch / width).floor() as usize;
    if n_bins == 0 {
        return Err(Error::InsufficientData(
            "center too close to the image edge for any radial bin".into(),
        ));
    }
    let grid: Vec<f64> = (1..=n_bins).map(|k| k as f64 * width).collect();

    let mut sums = vec![Complex64::default(); n_bins];
    let mut mods: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for y in 0..image.height {
        for x in 0..image.width {
            if !image.valid[y * image.width + x] {
                continue;
            }
            let d = pitch * (x as f64 - center.0).hypot(y as f64 - center.1);
            if let Some(b) = assign_bin(&grid, width, d) {
                let v = image.values[y * image.width + x];
                sums[b] += v;
                mods[b].push(v.norm());
            }
        }
    }

    let mut values = vec![Complex64::default(); n_bins];
    let mut stderr = vec![0.0; n_bins];
    let mut n_samples = vec![0u64; n_bins];
    let mut flags = vec![CellFlag::Missing; n_bins];
    for b in 0..n_bins {
        let n = mods[b].len();
        if n == 0 {
            continue;
        }
        values[b] = sums[b] / n as f64;
        n_samples[b] = n as u64;
        flags[b] = CellFlag::Ok;
        if n > 1 {
            let mean = mods[b].iter().sum::<f64>() / n as f64;
            let var =
                mods[b].iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            stderr[b] = (var / n as f64).sqrt();
        }
    }
    CorrelationMap::from_parts(
        MapKind::Coherence,
        grid,
        vec![0.0],
        values,
        stderr,
        n_samples,
        flags,
    )
}
