//! End-to-end tests of the kpz2d binary: exit codes, manifests, error
//! records, determinism of result files, and the subcommand pipelines
//! chained the way a shell script would run them.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use serde_json::{json, Value};

use kpz2d::io::{
    read_correlation_csv, read_image_blob, write_correlation_csv, write_scaling_table_csv,
    write_table_metadata_json,
};
use kpz2d::observables::{CellFlag, CorrelationMap, MapKind};
use kpz2d::scaling::{ScalingFunctionTable, TableProvenance};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_kpz2d")
}

/// Writes `config` into `dir/config.json` and runs the binary on it.
fn run_config(config: &Value, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    run_file(&path, extra)
}

fn run_file(config: &Path, extra: &[&str]) -> Output {
    Command::new(binary())
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// The machine-readable error record the binary prints on failure.
fn stderr_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap())
        .unwrap_or_else(|e| panic!("{} not JSON: {e}", path.display()))
}

fn kpz_doc(out_dir: &Path) -> Value {
    json!({
        "subcommand": "simulate-kpz",
        "output_dir": out_dir,
        "seed": 42,
        "params": {
            "lambda": 1.0,
            "dt": 0.05,
            "side": 16,
            "t_max": 1.0,
            "snapshot_times": [0.0, 0.25, 0.5, 1.0],
            "n_realizations": 3
        }
    })
}

#[test]
fn malformed_json_is_a_config_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, "{ not json").unwrap();
    let out_dir = dir.path().join("out");
    let out = run_file(&cfg, &["--output", out_dir.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(exit_code(&out), 2);
    let rec = stderr_record(&out);
    assert_eq!(rec["class"], "config-error");
    assert_eq!(rec["exit_code"], 2);
    assert!(!out_dir.exists(), "failed validation must not create output");
}

#[test]
fn empty_document_reports_every_missing_field_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&json!({}), dir.path(), &[]);
    assert_eq!(exit_code(&out), 2);
    let msg = stderr_record(&out)["message"].as_str().unwrap().to_string();
    for field in ["subcommand", "output_dir", "seed", "params"] {
        assert!(msg.contains(field), "missing {field} in: {msg}");
    }
}

#[test]
fn zero_horizon_run_leaves_a_manifest_and_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let doc = json!({
        "subcommand": "simulate-kpz",
        "output_dir": out_dir,
        "seed": 5,
        "params": {"lambda": 3.0, "dt": 0.05, "side": 16, "t_max": 0.0}
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["subcommand"], "simulate-kpz");
    assert_eq!(manifest["seed"], 5);
    let results: Vec<&str> = manifest["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(results, ["fields_index.csv", "roughness.csv"]);

    // Default snapshot grid is just t_max, here a single t = 0 frame of the
    // flat initial condition.
    let blobs: Vec<_> = fs::read_dir(out_dir.join("fields")).unwrap().collect();
    assert_eq!(blobs.len(), 1);
    let roughness = fs::read_to_string(out_dir.join("roughness.csv")).unwrap();
    assert_eq!(roughness, "time,w2,stderr\n0,0,0\n");
}

#[test]
fn identical_configs_reproduce_results_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, workers) in [("a", "2"), ("b", "2"), ("c", "1")] {
        let out_dir = dir.path().join(name);
        let out = run_config(&kpz_doc(&out_dir), dir.path(), &["--workers", workers]);
        assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out_dir);
    }
    // Same seed and worker count: byte-identical; different worker count:
    // still byte-identical, because noise streams are per-trajectory.
    for file in ["roughness.csv", "fields_index.csv", "fields/r0002_s003.bin"] {
        let a = fs::read(outputs[0].join(file)).unwrap();
        for other in &outputs[1..] {
            assert_eq!(a, fs::read(other.join(file)).unwrap(), "{file} differs");
        }
    }

    // The manifest echoes a config that reproduces the run exactly.
    let echoed = read_json(&outputs[0].join("manifest.json"))["config"].clone();
    let echo_path = dir.path().join("echo.json");
    fs::write(&echo_path, echoed.to_string()).unwrap();
    let replay_dir = dir.path().join("replay");
    let out = run_file(&echo_path, &["--output", replay_dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(outputs[0].join("roughness.csv")).unwrap(),
        fs::read(replay_dir.join("roughness.csv")).unwrap()
    );
}

#[test]
fn analysis_runs_on_stored_fields_and_emits_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let out = run_config(&kpz_doc(&sim_dir), dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let ana_dir = dir.path().join("ana");
    let doc = json!({
        "subcommand": "analyze-correlations",
        "output_dir": ana_dir,
        "seed": 1,
        "params": {
            "input_dir": sim_dir,
            "dt_grid": [0.25, 0.5, 1.0],
            "window": [0.0, 0.0],
            "exponent_axes": ["growth"]
        }
    });
    let out = run_config(&doc, &dir.path().join("."), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let file = fs::File::open(ana_dir.join("correlations.csv")).unwrap();
    let map = read_correlation_csv(MapKind::Correlation, &mut BufReader::new(file)).unwrap();
    assert_eq!(map.dt_axis(), [0.25, 0.5, 1.0]);
    assert_eq!(map.dr_axis()[0], 0.0);
    // Noise is on, so the zero-separation correlator (the squared width) is
    // strictly positive from the first lag.
    assert!(map.flag(0, 0) == CellFlag::Ok && map.value(0, 0).re > 0.0);

    let exponents = fs::read_to_string(ana_dir.join("exponents_dt.csv")).unwrap();
    assert!(exponents.starts_with("axis_value,exponent,stderr,quality_flag\n"));
    assert_eq!(exponents.lines().count(), 4, "3 lags give 3 exponent rows");
}

#[test]
fn gpe_run_pins_unit_coherence_at_the_origin() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gpe");
    let doc = json!({
        "subcommand": "simulate-gpe",
        "output_dir": out_dir,
        "seed": 9,
        "params": {
            "kappa": 0.1,
            "gamma": 1.0,
            "g": 0.1,
            "r_stim": 1.0,
            "gamma_r": 1.0,
            "pump": 2.0,
            "sigma_xi": 0.02,
            "dt": 0.02,
            "side": 8,
            "t_max": 0.2,
            "snapshot_times": [0.0, 0.2],
            "n_realizations": 2,
            "initial_condition": {"kind": "steady-state"},
            "analysis": {"dt_grid": [0.0, 0.2], "window": [0.0, 0.0]}
        }
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let density = fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert!(density.starts_with("time,density,stderr\n"));
    assert_eq!(density.lines().count(), 3);

    let file = fs::File::open(out_dir.join("coherence.csv")).unwrap();
    let map = read_correlation_csv(MapKind::Coherence, &mut BufReader::new(file)).unwrap();
    assert_eq!(map.value(0, 0), Complex64::new(1.0, 0.0));
    assert_eq!(map.flag(0, 0), CellFlag::Ok);
    // Even lattice: odd point-reflection separations never occur.
    let odd_bin = map.dr_axis().iter().position(|&c| c == 1.0).unwrap();
    assert_eq!(map.flag(odd_bin, 0), CellFlag::Missing);
}

#[test]
fn numerical_blow_up_exits_three_and_leaves_running_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let doc = json!({
        "subcommand": "simulate-kpz",
        "output_dir": out_dir,
        "seed": 3,
        "params": {"lambda": 100.0, "dt": 0.05, "side": 16, "t_max": 50.0}
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_record(&out)["class"], "numerical-blow-up");
    assert_eq!(read_json(&out_dir.join("error.json"))["exit_code"], 3);
    // The manifest was written before the run and never completed: the
    // documented marker of an aborted run.
    assert_eq!(read_json(&out_dir.join("manifest.json"))["status"], "running");
    assert!(!out_dir.join("roughness.csv").exists());
}

#[test]
fn too_few_lags_for_an_exponent_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let out = run_config(&kpz_doc(&sim_dir), dir.path(), &[]);
    assert_eq!(exit_code(&out), 0);

    let doc = json!({
        "subcommand": "analyze-correlations",
        "output_dir": dir.path().join("ana"),
        "seed": 1,
        "params": {
            "input_dir": sim_dir,
            "dt_grid": [0.5],
            "window": [0.0, 0.0],
            "exponent_axes": ["growth"]
        }
    });
    let out = run_config(&doc, &dir.path().join("."), &[]);
    assert_eq!(exit_code(&out), 4);
    assert_eq!(stderr_record(&out)["class"], "insufficient-data");
}

/// Correlator following A·Δt^{2β}·(1 + y²)^χ with y = B·Δr·Δt^{−β/χ}, the
/// same closed form the library's own fit tests use, plus deterministic
/// multiplicative jitter.
fn synthetic_map(jitter: f64) -> CorrelationMap {
    let (a, b, two_beta, two_chi) = (2.0, 0.5, 0.446, 0.730);
    // The Δr = 0 column anchors the tabulated amplitude.
    let dr_axis: Vec<f64> = (0..26).map(|i| i as f64 * 0.5).collect();
    let dt_axis: Vec<f64> = (0..14).map(|i| 2.0f64.powf(i as f64 / 2.0)).collect();
    let mut values = Vec::new();
    let mut stderr = Vec::new();
    let mut idx = 0u64;
    for &dt in &dt_axis {
        for &dr in &dr_axis {
            let y = b * dr * dt.powf(-two_beta / two_chi);
            let clean = a * dt.powf(two_beta) * (1.0 + y * y).powf(two_chi / 2.0);
            let wobble = 1.0 + jitter * (((idx * 2654435761) % 101) as f64 / 101.0 - 0.5);
            values.push(Complex64::new(clean * wobble, 0.0));
            stderr.push(0.03 * clean);
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

fn write_map_csv(map: &CorrelationMap, path: &Path) {
    let mut buf = Vec::new();
    write_correlation_csv(map, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn tabulate_then_collapse_recovers_the_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let corr = dir.path().join("correlations.csv");
    write_map_csv(&synthetic_map(0.02), &corr);

    let tab_dir = dir.path().join("tab");
    let doc = json!({
        "subcommand": "tabulate-scaling",
        "output_dir": tab_dir,
        "seed": 1,
        "params": {
            "correlations": corr,
            "kind": "correlation",
            "beta": 0.223,
            "chi": 0.365,
            "window": {"dr": [0.0, "inf"], "dt": [0.0, 1e9]}
        }
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tab_dir.join("table.csv").exists());
    let meta = read_json(&tab_dir.join("table_meta.json"));
    assert_eq!(meta["beta"], 0.223);

    let fit_dir = dir.path().join("fit");
    let doc = json!({
        "subcommand": "collapse-fit",
        "output_dir": fit_dir,
        "seed": 1,
        "params": {
            "correlations": corr,
            "kind": "correlation",
            "table_csv": tab_dir.join("table.csv"),
            "table_meta": tab_dir.join("table_meta.json"),
            "mode": "free"
        }
    });
    let out = run_config(&doc, &dir.path().join("."), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = read_json(&fit_dir.join("fit.json"));
    let beta = fit["beta"].as_f64().unwrap();
    let chi = fit["chi"].as_f64().unwrap();
    assert!((beta - 0.223).abs() < 0.05, "beta = {beta}");
    assert!((chi - 0.365).abs() < 0.05, "chi = {chi}");
    let collapse = fs::read_to_string(fit_dir.join("collapse.csv")).unwrap();
    assert!(collapse.starts_with("x_rescaled,y_rescaled,err_x,err_y,excluded_flag,dr,dt\n"));
    assert_eq!(collapse.lines().count(), 1 + 25 * 14);
}

#[test]
fn runaway_exclusion_is_a_fit_failure_exit_five() {
    let dir = tempfile::tempdir().unwrap();
    let corr = dir.path().join("correlations.csv");
    write_map_csv(&synthetic_map(0.02), &corr);

    // Clean reference table, written directly.
    let mut y_grid = vec![0.0];
    let mut vals = vec![1.0f64];
    let mut y = 1e-3f64;
    while y < 1e3 {
        y_grid.push(y);
        vals.push((1.0 + y * y).powf(0.730 / 2.0));
        y *= 10f64.powf(1.0 / 8.0);
    }
    let table = ScalingFunctionTable::from_bins(
        y_grid,
        vals,
        TableProvenance {
            beta: 0.223,
            chi: 0.365,
            window: ((0.0, f64::INFINITY), (0.0, f64::INFINITY)),
            n_cells: 0,
            tail_exponent: 0.730,
            source: "closed form".into(),
        },
    )
    .unwrap();
    let mut buf = Vec::new();
    write_scaling_table_csv(&table, &mut buf).unwrap();
    fs::write(dir.path().join("table.csv"), buf).unwrap();
    let mut buf = Vec::new();
    write_table_metadata_json(table.provenance(), &mut buf).unwrap();
    fs::write(dir.path().join("table_meta.json"), buf).unwrap();

    // A sigma threshold far below the jitter floor excludes every point.
    let doc = json!({
        "subcommand": "collapse-fit",
        "output_dir": dir.path().join("fit"),
        "seed": 1,
        "params": {
            "correlations": corr,
            "kind": "correlation",
            "table_csv": dir.path().join("table.csv"),
            "table_meta": dir.path().join("table_meta.json"),
            "mode": "free",
            "exclusion_threshold": 1e-9
        }
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_record(&out)["class"], "fit-failure");
}

#[test]
fn finite_size_fit_recovers_the_roughness_slope() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-written saturated series with W² ∝ L^0.8.
    let mut inputs = Vec::new();
    for side in [16usize, 32, 64] {
        let w = 0.1 * (side as f64).powf(0.8);
        let path = dir.path().join(format!("rough_{side}.csv"));
        let mut text = String::from("time,w2,stderr\n");
        for t in 0..10 {
            let value = if t < 5 { w * t as f64 / 5.0 } else { w };
            text.push_str(&format!("{t},{value},0.001\n"));
        }
        fs::write(&path, text).unwrap();
        inputs.push(json!({"side": side, "roughness_csv": path}));
    }
    let out_dir = dir.path().join("fss");
    let doc = json!({
        "subcommand": "finite-size",
        "output_dir": out_dir,
        "seed": 1,
        "params": {"inputs": inputs, "saturation_fraction": 0.4}
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&out_dir.join("finite_size.json"));
    let two_chi = summary["two_chi"].as_f64().unwrap();
    assert!((two_chi - 0.8).abs() < 1e-6, "two_chi = {two_chi}");
    assert_eq!(summary["n_sizes"], 3);
    let csv = fs::read_to_string(out_dir.join("finite_size.csv")).unwrap();
    assert!(csv.starts_with("side,w_sat,stderr\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn fringe_pipeline_synthesizes_demodulates_and_estimates_noise() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    // A carrier with an integer number of fringes per frame keeps the
    // sideband a single spectral line, so the uniform scene round-trips to
    // numerical precision.
    let carrier_x = 2.0 * std::f64::consts::PI * 12.0 / 64.0;
    let doc = json!({
        "subcommand": "fringe-synthesize",
        "output_dir": scene_dir,
        "seed": 1,
        "params": {
            "width": 64,
            "height": 64,
            "carrier": [carrier_x, 0.0],
            "counts_scale": 10000.0,
            "g1": {"kind": "uniform", "modulus": 0.8, "phase": 0.3},
            "arms": {"kind": "uniform", "one": 1.0, "two": 1.0}
        }
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let scene = scene_dir.join("scene.json");
    assert!(scene.exists());
    assert!(scene_dir.join("interferogram.bin").exists());

    let demod_dir = dir.path().join("demod");
    let doc = json!({
        "subcommand": "fringe-demodulate",
        "output_dir": demod_dir,
        "seed": 1,
        "params": {"scene": scene}
    });
    let out = run_config(&doc, &dir.path().join("."), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::File::open(demod_dir.join("g1_abs.bin")).unwrap();
    let (w, h, moduli) = read_image_blob(&mut BufReader::new(file)).unwrap();
    assert_eq!((w, h), (64, 64));
    let got = moduli[32 * w + 32];
    assert!((got - 0.8).abs() < 1e-6, "modulus {got} should be 0.8");
    let file = fs::File::open(demod_dir.join("g1_phase.bin")).unwrap();
    let (_, _, phases) = read_image_blob(&mut BufReader::new(file)).unwrap();
    let got = phases[32 * w + 32];
    assert!((got - 0.3).abs() < 1e-6, "phase {got} should be 0.3");
    let radial = fs::read_to_string(demod_dir.join("g1_radial.csv")).unwrap();
    assert!(radial.starts_with("dr,dt,re_g1,im_g1,abs_g1,stderr,n_samples\n"));
    let file = fs::File::open(demod_dir.join("g1_radial.csv")).unwrap();
    let radial_map = read_correlation_csv(MapKind::Coherence, &mut BufReader::new(file)).unwrap();
    let usable = (0..radial_map.dr_axis().len()).filter(|&i| radial_map.is_usable(i, 0));
    for i in usable {
        let v = radial_map.value(i, 0).norm();
        assert!((v - 0.8).abs() < 1e-6, "radial bin {i} holds {v}");
    }

    let noise_doc = |out: &Path| {
        json!({
            "subcommand": "fringe-noise",
            "output_dir": out,
            "seed": 77,
            "params": {"scene": scene, "n_resamples": 64}
        })
    };
    let noise_a = dir.path().join("noise_a");
    let out = run_config(&noise_doc(&noise_a), &dir.path().join("."), &[]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&noise_a.join("noise_summary.json"));
    assert!(summary["mean_sigma"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["masked_pixels"], 0);

    // Shot-noise resamples are seeded per resample id: same seed, same map.
    let noise_b = dir.path().join("noise_b");
    let out = run_config(&noise_doc(&noise_b), &dir.path().join("."), &["--workers", "1"]);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(
        fs::read(noise_a.join("sigma.bin")).unwrap(),
        fs::read(noise_b.join("sigma.bin")).unwrap()
    );
}

#[test]
fn blind_demodulation_rejects_an_explicit_window() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "subcommand": "fringe-demodulate",
        "output_dir": dir.path().join("out"),
        "seed": 1,
        "params": {"scene": dir.path().join("scene.json"), "blind": true, "window_radius": 0.3}
    });
    let out = run_config(&doc, dir.path(), &[]);
    assert_eq!(exit_code(&out), 2);
    let msg = stderr_record(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("window_radius"), "{msg}");
}

#[test]
fn beta_recipe_runs_all_stages_and_reports_a_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("recipe");
    let doc = json!({
        "subcommand": "simulate-kpz",
        "output_dir": out_dir,
        "seed": 11,
        "params": {"lambda": 2.0, "dt": 0.05, "side": 16, "t_max": 30.0, "n_realizations": 2}
    });
    let out = run_config(&doc, dir.path(), &["--recipe", "reproduce-beta"]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["recipe"], "reproduce-beta");
    let stages: Vec<&str> = manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["simulate-kpz", "analyze-correlations", "running-exponents"]);

    let plateau = fs::read_to_string(out_dir.join("plateau.csv")).unwrap();
    let mut lines = plateau.lines();
    assert_eq!(lines.next(), Some("axis_lo,axis_hi,n_points,plateau,stderr"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    let lo: f64 = row[0].parse().unwrap();
    let hi: f64 = row[1].parse().unwrap();
    assert!(hi >= 10.0 * lo, "window [{lo}, {hi}] under a decade");
    let estimate: f64 = row[3].parse().unwrap();
    assert!(estimate.is_finite());
    assert!(out_dir.join("exponents_dt.csv").exists());
    assert!(out_dir.join("correlations.csv").exists());

    // Unknown recipes are refused up front.
    let out = run_config(&doc, dir.path(), &["--recipe", "reproduce-gamma"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn output_flag_overrides_the_document_directory() {
    let dir = tempfile::tempdir().unwrap();
    let doc_dir = dir.path().join("from_doc");
    let flag_dir = dir.path().join("from_flag");
    let doc = json!({
        "subcommand": "simulate-kpz",
        "output_dir": doc_dir,
        "seed": 5,
        "params": {"lambda": 0.0, "dt": 0.05, "side": 16, "t_max": 0.0}
    });
    let out = run_config(&doc, dir.path(), &["--output", flag_dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert!(flag_dir.join("manifest.json").exists());
    assert!(!doc_dir.exists());
}

/// Relative paths in a config resolve against the config file's directory,
/// not the process working directory.
#[test]
fn relative_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "subcommand": "simulate-kpz",
        "output_dir": "nested/run",
        "seed": 5,
        "params": {"lambda": 0.0, "dt": 0.05, "side": 16, "t_max": 0.0}
    });
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, doc.to_string()).unwrap();
    let out = Command::new(binary())
        .arg("--config")
        .arg(&cfg)
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nested/run/manifest.json").exists());
}

/// PathBuf values in json! serialize through Display-compatible strings on
/// all platforms this crate targets; keep a guard so a refactor to
/// non-UTF-8-safe serialization trips loudly.
#[test]
fn config_paths_serialize_as_strings() {
    let p = PathBuf::from("/tmp/example");
    assert_eq!(json!(p), json!("/tmp/example"));
}
