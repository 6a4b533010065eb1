//! Fringe-pattern subcommands: synthetic interferogram scenes, sideband
//! demodulation back to a coherence map, and the shot-noise Monte Carlo
//! error map.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use serde_json::{json, Value};

use kpz2d::interferometry::{
    self, demodulate_blind, demodulate_with_radius, radial_coherence, shot_noise_mc, Interferogram,
};
use kpz2d::io::{read_image_blob, write_correlation_csv, write_image_blob, write_image_csv};
use kpz2d::{Error, Result};

use crate::config::{ArmsSource, DemodulateJob, G1Source, NoiseJob, SynthesizeJob};

use super::write_buffered;

/// Manifest tying an interferogram to its pixel blobs, written next to them.
pub const SCENE_FILE: &str = "scene.json";

fn load_pixels(path: &Path, width: usize, height: usize) -> Result<Vec<f64>> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open image blob {}: {e}", path.display())))?;
    let (w, h, data) = read_image_blob(&mut BufReader::new(file))?;
    if (w, h) != (width, height) {
        return Err(Error::Parameter(format!(
            "{} is {w}x{h}, expected {width}x{height}",
            path.display()
        )));
    }
    Ok(data)
}

fn build_g1(source: &G1Source, width: usize, height: usize) -> Result<Vec<Complex64>> {
    let n = width * height;
    match source {
        G1Source::Uniform { modulus, phase } => Ok(vec![Complex64::from_polar(*modulus, *phase); n]),
        G1Source::RadialExponential { length, phase_twist } => {
            if !(length.is_finite() && *length > 0.0) {
                return Err(Error::Parameter(format!(
                    "coherence length must be > 0, got {length}"
                )));
            }
            let cx = (width as f64 - 1.0) / 2.0;
            let cy = (height as f64 - 1.0) / 2.0;
            let mut vals = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let d = (x as f64 - cx).hypot(y as f64 - cy);
                    vals.push(Complex64::from_polar((-d / length).exp(), phase_twist * d));
                }
            }
            Ok(vals)
        }
        G1Source::Blobs { re, im } => {
            let re = load_pixels(re, width, height)?;
            let im = load_pixels(im, width, height)?;
            Ok(re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect())
        }
    }
}

fn build_arms(source: &ArmsSource, width: usize, height: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = width * height;
    match source {
        ArmsSource::Uniform { one, two } => Ok((vec![*one; n], vec![*two; n])),
        ArmsSource::Blobs { one, two } => Ok((
            load_pixels(one, width, height)?,
            load_pixels(two, width, height)?,
        )),
    }
}

pub fn synthesize(job: &SynthesizeJob, out: &Path) -> Result<Vec<String>> {
    let g1 = build_g1(&job.g1, job.width, job.height)?;
    let (arm_one, arm_two) = build_arms(&job.arms, job.width, job.height)?;
    let ig = interferometry::synthesize(
        job.width,
        job.height,
        &g1,
        &arm_one,
        &arm_two,
        job.carrier,
        job.counts_scale,
    )?;
    write_buffered(out, "interferogram.bin", |buf| {
        write_image_blob(ig.width(), ig.height(), ig.intensity(), buf)
    })?;
    write_buffered(out, "interferogram.csv", |buf| {
        write_image_csv(ig.width(), ig.height(), ig.intensity(), buf)
    })?;
    write_buffered(out, "arm_one.bin", |buf| {
        write_image_blob(ig.width(), ig.height(), ig.arm_one(), buf)
    })?;
    write_buffered(out, "arm_two.bin", |buf| {
        write_image_blob(ig.width(), ig.height(), ig.arm_two(), buf)
    })?;
    write_buffered(out, SCENE_FILE, |buf| {
        let doc = json!({
            "width": ig.width(),
            "height": ig.height(),
            "carrier": [ig.carrier()[0], ig.carrier()[1]],
            "counts_scale": ig.counts_scale(),
            "intensity": "interferogram.bin",
            "arm_one": "arm_one.bin",
            "arm_two": "arm_two.bin",
        });
        serde_json::to_writer_pretty(&mut *buf, &doc)
            .map_err(|e| Error::Format(format!("json: {e}")))?;
        writeln!(buf)?;
        Ok(())
    })?;
    Ok(vec![
        "interferogram.bin".to_string(),
        "interferogram.csv".to_string(),
        "arm_one.bin".to_string(),
        "arm_two.bin".to_string(),
        SCENE_FILE.to_string(),
    ])
}

/// Reads a scene manifest and the pixel blobs it references (paths relative
/// to the manifest's directory) back into an interferogram.
pub fn load_scene(path: &Path) -> Result<Interferogram> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read scene {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("scene {} is not valid json: {e}", path.display())))?;
    let get = |name: &str| -> Result<&Value> {
        doc.get(name)
            .ok_or_else(|| Error::Format(format!("scene is missing field {name:?}")))
    };
    let dim = |name: &str| -> Result<usize> {
        get(name)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::Format(format!("scene field {name:?} must be a non-negative integer")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let carrier_arr = get("carrier")?
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::Format("scene carrier must be a [kx, ky] pair".into()))?;
    let mut carrier = [0.0; 2];
    for (slot, v) in carrier.iter_mut().zip(carrier_arr) {
        *slot = v
            .as_f64()
            .ok_or_else(|| Error::Format("scene carrier components must be numbers".into()))?;
    }
    let counts_scale = get("counts_scale")?
        .as_f64()
        .ok_or_else(|| Error::Format("scene counts_scale must be a number".into()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let blob = |name: &str| -> Result<Vec<f64>> {
        let rel = get(name)?
            .as_str()
            .ok_or_else(|| Error::Format(format!("scene field {name:?} must be a path string")))?;
        load_pixels(&base.join(rel), width, height)
    };
    Interferogram::from_parts(
        width,
        height,
        blob("intensity")?,
        blob("arm_one")?,
        blob("arm_two")?,
        carrier,
        counts_scale,
    )
}

pub fn demodulate(job: &DemodulateJob, out: &Path) -> Result<Vec<String>> {
    let ig = load_scene(&job.scene)?;
    let image = if job.blind {
        demodulate_blind(&ig)?
    } else if let Some(radius) = job.window_radius {
        demodulate_with_radius(&ig, radius)?
    } else {
        interferometry::demodulate(&ig)?
    };
    let moduli: Vec<f64> = image.values().iter().map(|v| v.norm()).collect();
    let phases: Vec<f64> = image.values().iter().map(|v| v.arg()).collect();
    write_buffered(out, "g1_abs.bin", |buf| {
        write_image_blob(image.width(), image.height(), &moduli, buf)
    })?;
    write_buffered(out, "g1_phase.bin", |buf| {
        write_image_blob(image.width(), image.height(), &phases, buf)
    })?;
    let center = job.center.unwrap_or((
        (image.width() as f64 - 1.0) / 2.0,
        (image.height() as f64 - 1.0) / 2.0,
    ));
    let radial = radial_coherence(&image, center, job.pitch)?;
    write_buffered(out, "g1_radial.csv", |buf| write_correlation_csv(&radial, buf))?;
    Ok(vec![
        "g1_abs.bin".to_string(),
        "g1_phase.bin".to_string(),
        "g1_radial.csv".to_string(),
    ])
}

pub fn noise(job: &NoiseJob, out: &Path, master_seed: u64) -> Result<Vec<String>> {
    let ig = load_scene(&job.scene)?;
    let sigma = shot_noise_mc(&ig, job.n_resamples, master_seed)?;
    write_buffered(out, "sigma.bin", |buf| {
        write_image_blob(ig.width(), ig.height(), &sigma, buf)
    })?;
    let finite: Vec<f64> = sigma.iter().copied().filter(|v| v.is_finite()).collect();
    let masked = sigma.len() - finite.len();
    write_buffered(out, "noise_summary.json", |buf| {
        let stat = |v: f64| -> Value {
            if v.is_finite() {
                json!(v)
            } else {
                json!(v.to_string())
            }
        };
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let max = finite.iter().copied().fold(f64::NAN, f64::max);
        let doc = json!({
            "n_resamples": job.n_resamples,
            "counts_scale": ig.counts_scale(),
            "mean_sigma": stat(mean),
            "max_sigma": stat(max),
            "masked_pixels": masked,
        });
        serde_json::to_writer_pretty(&mut *buf, &doc)
            .map_err(|e| Error::Format(format!("json: {e}")))?;
        writeln!(buf)?;
        Ok(())
    })?;
    Ok(vec!["sigma.bin".to_string(), "noise_summary.json".to_string()])
}
