//! Run-configuration documents: one JSON file names a subcommand and carries
//! its parameter block. Validation type-checks every field, materializes the
//! documented defaults explicitly, and reports the complete list of problems
//! instead of stopping at the first, so a bad config is fixable in one pass.
//!
//! Relative paths inside a document (input files, output directory) resolve
//! against the directory containing the config file; command-line overrides
//! resolve against the working directory. The normalized document echoed
//! into the manifest uses resolved absolute paths, so re-running from a
//! manifest works from any directory.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use kpz2d::gpe::{GpeInitialCondition, GpeParams};
use kpz2d::kpz::{InitialCondition, KpzParams};
use kpz2d::observables::MapKind;
use kpz2d::scaling::FitMode;

/// Flag-level overrides for fields that may also live in the document.
#[derive(Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// A validated run: the normalized parameter set plus the artifact plumbing.
#[derive(Debug)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Normalized document (defaults materialized, paths absolute); echoed
    /// into the manifest and accepted back by `validate_config`.
    pub echo: Value,
}

#[derive(Debug)]
pub enum Subcommand {
    SimulateKpz(KpzJob),
    SimulateGpe(GpeJob),
    AnalyzeCorrelations(AnalyzeJob),
    TabulateScaling(TabulateJob),
    CollapseFit(CollapseJob),
    FiniteSize(FiniteSizeJob),
    FringeSynthesize(SynthesizeJob),
    FringeDemodulate(DemodulateJob),
    FringeNoise(NoiseJob),
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::SimulateKpz(_) => "simulate-kpz",
            Subcommand::SimulateGpe(_) => "simulate-gpe",
            Subcommand::AnalyzeCorrelations(_) => "analyze-correlations",
            Subcommand::TabulateScaling(_) => "tabulate-scaling",
            Subcommand::CollapseFit(_) => "collapse-fit",
            Subcommand::FiniteSize(_) => "finite-size",
            Subcommand::FringeSynthesize(_) => "fringe-synthesize",
            Subcommand::FringeDemodulate(_) => "fringe-demodulate",
            Subcommand::FringeNoise(_) => "fringe-noise",
        }
    }
}

#[derive(Debug)]
pub struct KpzJob {
    pub params: KpzParams,
}

#[derive(Debug)]
pub struct GpeJob {
    pub params: GpeParams,
    /// Optional coherence estimation over the run's snapshots.
    pub analysis: Option<GpeAnalysis>,
}

#[derive(Debug)]
pub struct GpeAnalysis {
    /// Cap on the separation grid; `None` uses the full reflection range.
    pub dr_max: Option<f64>,
    pub dt_grid: Vec<f64>,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Growth,
    Roughness,
}

#[derive(Debug)]
pub struct AnalyzeJob {
    /// A simulate-kpz output directory holding `fields_index.csv`.
    pub input_dir: PathBuf,
    pub dr_max: Option<f64>,
    pub dt_grid: Vec<f64>,
    pub window: (f64, f64),
    /// Running-exponent series to emit alongside the correlator.
    pub exponent_axes: Vec<Axis>,
}

#[derive(Debug)]
pub struct TabulateJob {
    pub correlations: PathBuf,
    pub kind: MapKind,
    pub beta: f64,
    pub chi: f64,
    pub window: ((f64, f64), (f64, f64)),
}

#[derive(Debug)]
pub struct CollapseJob {
    pub correlations: PathBuf,
    pub kind: MapKind,
    pub table_csv: PathBuf,
    pub table_meta: PathBuf,
    pub mode: FitMode,
    pub exclusion_threshold: f64,
}

#[derive(Debug)]
pub struct FiniteSizeJob {
    /// (lattice side, roughness.csv path) per system size.
    pub inputs: Vec<(usize, PathBuf)>,
    /// Fraction of the time axis (from the end) averaged as the saturated
    /// roughness.
    pub saturation_fraction: f64,
}

#[derive(Debug)]
pub enum G1Source {
    Uniform { modulus: f64, phase: f64 },
    /// |g¹| = exp(−d/length), arg g¹ = phase_twist·d, d the distance to the
    /// frame center in pixels.
    RadialExponential { length: f64, phase_twist: f64 },
    Blobs { re: PathBuf, im: PathBuf },
}

#[derive(Debug)]
pub enum ArmsSource {
    Uniform { one: f64, two: f64 },
    Blobs { one: PathBuf, two: PathBuf },
}

#[derive(Debug)]
pub struct SynthesizeJob {
    pub width: usize,
    pub height: usize,
    pub carrier: [f64; 2],
    pub counts_scale: f64,
    pub g1: G1Source,
    pub arms: ArmsSource,
}

#[derive(Debug)]
pub struct DemodulateJob {
    /// A scene.json written by fringe-synthesize.
    pub scene: PathBuf,
    pub blind: bool,
    pub window_radius: Option<f64>,
    /// Point-reflection center for radial binning; default frame center.
    pub center: Option<(f64, f64)>,
    pub pitch: f64,
}

#[derive(Debug)]
pub struct NoiseJob {
    pub scene: PathBuf,
    pub n_resamples: usize,
}

/// JSON object wrapper that records every error and every consumed key, so
/// extraction keeps going past failures and typos surface as unknown-field
/// errors at the end.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: &'a str,
    errs: &'a mut Vec<String>,
    known: Vec<String>,
}

impl<'a> Obj<'a> {
    fn new(map: &'a Map<String, Value>, path: &'a str, errs: &'a mut Vec<String>) -> Self {
        Obj { map, path, errs, known: Vec::new() }
    }

    fn err(&mut self, key: &str, what: &str) {
        let path = if self.path.is_empty() { String::new() } else { format!("{}.", self.path) };
        self.errs.push(format!("{path}{key}: {what}"));
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.known.push(key.to_string());
        self.map.get(key)
    }

    fn f64_of(&mut self, key: &str, v: &Value) -> f64 {
        match v {
            Value::Number(n) if n.as_f64().is_some() => n.as_f64().unwrap(),
            Value::String(s) if s.parse::<f64>().is_ok() => s.parse().unwrap(),
            _ => {
                self.err(key, "must be a number");
                f64::NAN
            }
        }
    }

    fn req_f64(&mut self, key: &str) -> f64 {
        match self.take(key) {
            Some(v) => self.f64_of(key, v),
            None => {
                self.err(key, "missing required field");
                f64::NAN
            }
        }
    }

    fn opt_f64(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            Some(v) => self.f64_of(key, v),
            None => default,
        }
    }

    fn usize_of(&mut self, key: &str, v: &Value) -> usize {
        match v.as_u64() {
            Some(n) => n as usize,
            None => {
                self.err(key, "must be a non-negative integer");
                0
            }
        }
    }

    fn req_usize(&mut self, key: &str) -> usize {
        match self.take(key) {
            Some(v) => self.usize_of(key, v),
            None => {
                self.err(key, "missing required field");
                0
            }
        }
    }

    fn opt_usize(&mut self, key: &str, default: usize) -> usize {
        match self.take(key) {
            Some(v) => self.usize_of(key, v),
            None => default,
        }
    }

    fn opt_bool(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err(key, "must be a boolean");
                default
            }
            None => default,
        }
    }

    fn req_str(&mut self, key: &str) -> String {
        match self.take(key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.err(key, "must be a string");
                String::new()
            }
            None => {
                self.err(key, "missing required field");
                String::new()
            }
        }
    }

    fn opt_str(&mut self, key: &str, default: &str) -> String {
        match self.take(key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.err(key, "must be a string");
                default.to_string()
            }
            None => default.to_string(),
        }
    }

    fn f64_array_of(&mut self, key: &str, v: &Value) -> Vec<f64> {
        match v.as_array() {
            Some(arr) => arr.iter().map(|e| self.f64_of(key, e)).collect(),
            None => {
                self.err(key, "must be an array of numbers");
                Vec::new()
            }
        }
    }

    fn req_f64_array(&mut self, key: &str) -> Vec<f64> {
        match self.take(key) {
            Some(v) => self.f64_array_of(key, v),
            None => {
                self.err(key, "missing required field");
                Vec::new()
            }
        }
    }

    fn req_path(&mut self, key: &str, base: &Path) -> PathBuf {
        let s = self.req_str(key);
        resolve(base, &s)
    }

    /// Two-element [lo, hi] interval; "inf" strings are accepted for open
    /// window edges.
    fn req_interval(&mut self, key: &str) -> (f64, f64) {
        let arr = self.req_f64_array(key);
        if arr.len() != 2 {
            self.err(key, "must be a [lo, hi] pair");
            return (f64::NAN, f64::NAN);
        }
        (arr[0], arr[1])
    }

    /// Fails validation for every document key not consumed by the schema.
    fn finish(mut self) {
        let known = std::mem::take(&mut self.known);
        for key in self.map.keys() {
            if !known.iter().any(|k| k == key) {
                self.err(key, "unknown field");
            }
        }
    }
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() { p } else { base.join(p) }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Window edges may be infinite; JSON gets the display string instead.
fn edge(v: f64) -> Value {
    if v.is_finite() { json!(v) } else { json!(v.to_string()) }
}

const SUBCOMMANDS: [&str; 9] = [
    "simulate-kpz",
    "simulate-gpe",
    "analyze-correlations",
    "tabulate-scaling",
    "collapse-fit",
    "finite-size",
    "fringe-synthesize",
    "fringe-demodulate",
    "fringe-noise",
];

fn map_kind(obj: &mut Obj) -> MapKind {
    match obj.opt_str("kind", "correlation").as_str() {
        "correlation" => MapKind::Correlation,
        "coherence" => MapKind::Coherence,
        "minus-log-coherence" => MapKind::MinusLogCoherence,
        other => {
            obj.err(
                "kind",
                &format!("unknown map kind {other:?}; expected correlation, coherence, or minus-log-coherence"),
            );
            MapKind::Correlation
        }
    }
}

fn kind_name(kind: MapKind) -> &'static str {
    match kind {
        MapKind::Correlation => "correlation",
        MapKind::Coherence => "coherence",
        MapKind::MinusLogCoherence => "minus-log-coherence",
    }
}

/// Validates a parsed document against the run schema. `base_dir` anchors
/// relative paths (the config file's directory); `overrides` carry the
/// `--output` and `--seed` flags, which win over the document. On failure
/// every detected problem is returned.
pub fn validate_config(
    doc: &Value,
    base_dir: &Path,
    overrides: &Overrides,
) -> Result<RunConfig, Vec<String>> {
    let mut errs = Vec::new();
    let Some(map) = doc.as_object() else {
        return Err(vec!["config document must be a JSON object".to_string()]);
    };
    let mut top = Obj::new(map, "", &mut errs);

    let sub_name = top.req_str("subcommand");
    if !sub_name.is_empty() && !SUBCOMMANDS.contains(&sub_name.as_str()) {
        top.err(
            "subcommand",
            &format!("unknown subcommand {sub_name:?}; expected one of {}", SUBCOMMANDS.join(", ")),
        );
    }

    let output_dir = match &overrides.output {
        Some(p) => {
            top.take("output_dir");
            Some(p.clone())
        }
        None => match top.take("output_dir") {
            Some(Value::String(s)) => Some(resolve(base_dir, s)),
            Some(_) => {
                top.err("output_dir", "must be a string path");
                None
            }
            None => {
                top.err("output_dir", "missing required field (or pass --output)");
                None
            }
        },
    };

    let seed = match overrides.seed {
        Some(s) => {
            top.take("seed");
            Some(s)
        }
        None => match top.take("seed") {
            Some(v) => match v.as_u64() {
                Some(s) => Some(s),
                None => {
                    top.err("seed", "must be a non-negative integer");
                    None
                }
            },
            None => {
                top.err("seed", "missing required field (or pass --seed)");
                None
            }
        },
    };

    let params_value = top.take("params").cloned();
    if params_value.is_none() {
        top.err("params", "missing required field");
    }
    top.finish();

    let subcommand = match (&params_value, sub_name.as_str()) {
        (Some(pv), name) if SUBCOMMANDS.contains(&name) => match pv.as_object() {
            Some(pmap) => {
                let mut obj = Obj::new(pmap, "params", &mut errs);
                let job = extract_job(name, &mut obj, base_dir, seed.unwrap_or(0));
                obj.finish();
                job
            }
            None => {
                errs.push("params: must be a JSON object".to_string());
                None
            }
        },
        _ => None,
    };

    // Engine-level constraints only make sense on a shape-valid document;
    // they surface as one targeted message (e.g. the stability guard).
    if errs.is_empty() {
        if let Some(sub) = &subcommand {
            let engine_check = match sub {
                Subcommand::SimulateKpz(job) => job.params.validate(),
                Subcommand::SimulateGpe(job) => job.params.validate(),
                _ => Ok(()),
            };
            if let Err(e) = engine_check {
                errs.push(format!("params: {e}"));
            }
        }
    }

    if !errs.is_empty() {
        return Err(errs);
    }
    let subcommand = subcommand.expect("no errors implies a job was built");
    let output_dir = output_dir.expect("no errors implies output_dir present");
    let seed = seed.expect("no errors implies seed present");
    let echo = json!({
        "subcommand": subcommand.name(),
        "output_dir": path_str(&output_dir),
        "seed": seed,
        "params": echo_params(&subcommand),
    });
    Ok(RunConfig { subcommand, output_dir, seed, echo })
}

/// Parses the subcommand's parameter block. Missing or ill-typed fields have
/// already pushed errors through `obj`; the returned job then carries
/// placeholders and is discarded.
fn extract_job(name: &str, obj: &mut Obj, base: &Path, seed: u64) -> Option<Subcommand> {
    match name {
        "simulate-kpz" => {
            if obj.take("master_seed").is_some() {
                obj.err("master_seed", "the seed belongs at the document top level");
            }
            let t_max = obj.req_f64("t_max");
            let snapshot_times = match obj.take("snapshot_times") {
                Some(v) => {
                    let v = v.clone();
                    obj.f64_array_of("snapshot_times", &v)
                }
                None => vec![t_max],
            };
            match obj.take("initial_condition") {
                None => {}
                Some(Value::String(s)) if s == "flat" => {}
                Some(_) => obj.err("initial_condition", "only \"flat\" is available from configs"),
            }
            let params = KpzParams {
                nu: obj.opt_f64("nu", 1.0),
                lambda: obj.req_f64("lambda"),
                noise_d: obj.opt_f64("noise_d", 1.0),
                dt: obj.req_f64("dt"),
                side: obj.req_usize("side"),
                spacing: obj.opt_f64("spacing", 1.0),
                t_max,
                snapshot_times,
                n_realizations: obj.opt_usize("n_realizations", 1),
                master_seed: seed,
                initial_condition: InitialCondition::Flat,
            };
            Some(Subcommand::SimulateKpz(KpzJob { params }))
        }
        "simulate-gpe" => {
            if obj.take("master_seed").is_some() {
                obj.err("master_seed", "the seed belongs at the document top level");
            }
            let t_max = obj.req_f64("t_max");
            let snapshot_times = match obj.take("snapshot_times") {
                Some(v) => {
                    let v = v.clone();
                    obj.f64_array_of("snapshot_times", &v)
                }
                None => vec![t_max],
            };
            let initial_condition = match obj.take("initial_condition").cloned() {
                None => GpeInitialCondition::Vacuum,
                Some(v) => match v.as_object() {
                    Some(ic_map) => {
                        let mut ic = Obj::new(ic_map, "params.initial_condition", obj.errs);
                        let kind = ic.req_str("kind");
                        let out = match kind.as_str() {
                            "vacuum" => GpeInitialCondition::Vacuum,
                            "seeded-random" => GpeInitialCondition::SeededRandom {
                                amplitude: ic.req_f64("amplitude"),
                            },
                            "steady-state" => GpeInitialCondition::SteadyState,
                            other => {
                                ic.err(
                                    "kind",
                                    &format!("unknown initial condition {other:?}; expected vacuum, seeded-random, or steady-state"),
                                );
                                GpeInitialCondition::Vacuum
                            }
                        };
                        ic.finish();
                        out
                    }
                    None => {
                        obj.err("initial_condition", "must be an object with a \"kind\" field");
                        GpeInitialCondition::Vacuum
                    }
                },
            };
            let analysis = obj.take("analysis").cloned().and_then(|v| match v.as_object() {
                Some(a_map) => {
                    let mut a = Obj::new(a_map, "params.analysis", obj.errs);
                    let dr_max = a.take("dr_max").cloned().map(|v| a.f64_of("dr_max", &v));
                    let dt_grid = a.req_f64_array("dt_grid");
                    let window = a.req_interval("window");
                    a.finish();
                    Some(GpeAnalysis { dr_max, dt_grid, window })
                }
                None => {
                    obj.err("analysis", "must be a JSON object");
                    None
                }
            });
            let params = GpeParams {
                kappa: obj.req_f64("kappa"),
                gamma: obj.req_f64("gamma"),
                gamma2: obj.opt_f64("gamma2", 0.0),
                g: obj.req_f64("g"),
                g_r: obj.opt_f64("g_r", 0.0),
                r_stim: obj.req_f64("r_stim"),
                gamma_r: obj.req_f64("gamma_r"),
                pump: obj.req_f64("pump"),
                sigma_xi: obj.opt_f64("sigma_xi", 0.0),
                dt: obj.req_f64("dt"),
                side: obj.req_usize("side"),
                spacing: obj.opt_f64("spacing", 1.0),
                t_max,
                snapshot_times,
                n_realizations: obj.opt_usize("n_realizations", 1),
                master_seed: seed,
                initial_condition,
            };
            Some(Subcommand::SimulateGpe(GpeJob { params, analysis }))
        }
        "analyze-correlations" => {
            let input_dir = obj.req_path("input_dir", base);
            let dr_max = obj.take("dr_max").cloned().map(|v| obj.f64_of("dr_max", &v));
            let dt_grid = obj.req_f64_array("dt_grid");
            let window = obj.req_interval("window");
            let exponent_axes = match obj.take("exponent_axes").cloned() {
                None => Vec::new(),
                Some(v) => match v.as_array() {
                    Some(arr) => arr
                        .iter()
                        .filter_map(|e| match e.as_str() {
                            Some("growth") => Some(Axis::Growth),
                            Some("roughness") => Some(Axis::Roughness),
                            _ => {
                                obj.err("exponent_axes", "entries must be \"growth\" or \"roughness\"");
                                None
                            }
                        })
                        .collect(),
                    None => {
                        obj.err("exponent_axes", "must be an array");
                        Vec::new()
                    }
                },
            };
            Some(Subcommand::AnalyzeCorrelations(AnalyzeJob {
                input_dir,
                dr_max,
                dt_grid,
                window,
                exponent_axes,
            }))
        }
        "tabulate-scaling" => {
            let correlations = obj.req_path("correlations", base);
            let kind = map_kind(obj);
            let beta = obj.req_f64("beta");
            let chi = obj.req_f64("chi");
            let window = match obj.take("window").cloned() {
                Some(v) => match v.as_object() {
                    Some(w_map) => {
                        let mut w = Obj::new(w_map, "params.window", obj.errs);
                        let dr = w.req_interval("dr");
                        let dt = w.req_interval("dt");
                        w.finish();
                        (dr, dt)
                    }
                    None => {
                        obj.err("window", "must be an object with \"dr\" and \"dt\" intervals");
                        ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN))
                    }
                },
                None => {
                    obj.err("window", "missing required field");
                    ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN))
                }
            };
            Some(Subcommand::TabulateScaling(TabulateJob { correlations, kind, beta, chi, window }))
        }
        "collapse-fit" => {
            let correlations = obj.req_path("correlations", base);
            let kind = map_kind(obj);
            let table_csv = obj.req_path("table_csv", base);
            let table_meta = obj.req_path("table_meta", base);
            let mode = match obj.take("mode").cloned() {
                None => FitMode::FreeExponents,
                Some(Value::String(s)) if s == "free" => FitMode::FreeExponents,
                Some(v) => match v.as_object().and_then(|m| m.get("amplitudes_only")) {
                    Some(inner) => match inner.as_object() {
                        Some(m) => {
                            let mut am = Obj::new(m, "params.mode.amplitudes_only", obj.errs);
                            let beta = am.req_f64("beta");
                            let chi = am.req_f64("chi");
                            am.finish();
                            FitMode::AmplitudesOnly { beta, chi }
                        }
                        None => {
                            obj.err("mode", "amplitudes_only must be an object with beta and chi");
                            FitMode::FreeExponents
                        }
                    },
                    None => {
                        obj.err("mode", "must be \"free\" or {\"amplitudes_only\": {beta, chi}}");
                        FitMode::FreeExponents
                    }
                },
            };
            let exclusion_threshold = obj.opt_f64("exclusion_threshold", 3.0);
            Some(Subcommand::CollapseFit(CollapseJob {
                correlations,
                kind,
                table_csv,
                table_meta,
                mode,
                exclusion_threshold,
            }))
        }
        "finite-size" => {
            let inputs = match obj.take("inputs").cloned() {
                None => {
                    obj.err("inputs", "missing required field");
                    Vec::new()
                }
                Some(v) => match v.as_array() {
                    Some(arr) => arr
                        .iter()
                        .enumerate()
                        .filter_map(|(i, e)| match e.as_object() {
                            Some(m) => {
                                let label = format!("params.inputs[{i}]");
                                let mut row = Obj::new(m, &label, obj.errs);
                                let side = row.req_usize("side");
                                let path = row.req_path("roughness_csv", base);
                                row.finish();
                                Some((side, path))
                            }
                            None => {
                                obj.err("inputs", "entries must be objects with side and roughness_csv");
                                None
                            }
                        })
                        .collect(),
                    None => {
                        obj.err("inputs", "must be an array");
                        Vec::new()
                    }
                },
            };
            let saturation_fraction = obj.opt_f64("saturation_fraction", 0.5);
            if !(saturation_fraction > 0.0 && saturation_fraction <= 1.0) {
                obj.err("saturation_fraction", "must lie in (0, 1]");
            }
            Some(Subcommand::FiniteSize(FiniteSizeJob { inputs, saturation_fraction }))
        }
        "fringe-synthesize" => {
            let width = obj.req_usize("width");
            let height = obj.req_usize("height");
            let carrier = {
                let pair = obj.req_interval("carrier");
                [pair.0, pair.1]
            };
            let counts_scale = obj.opt_f64("counts_scale", 1.0);
            let g1 = match obj.take("g1").cloned().as_ref().and_then(|v| v.as_object().cloned()) {
                None => {
                    obj.err("g1", "missing required field (an object with a \"kind\")");
                    G1Source::Uniform { modulus: 0.0, phase: 0.0 }
                }
                Some(m) => {
                    let mut g = Obj::new(&m, "params.g1", obj.errs);
                    let out = match g.req_str("kind").as_str() {
                        "uniform" => G1Source::Uniform {
                            modulus: g.req_f64("modulus"),
                            phase: g.opt_f64("phase", 0.0),
                        },
                        "radial-exponential" => G1Source::RadialExponential {
                            length: g.req_f64("length"),
                            phase_twist: g.opt_f64("phase_twist", 0.0),
                        },
                        "blobs" => G1Source::Blobs {
                            re: g.req_path("re", base),
                            im: g.req_path("im", base),
                        },
                        other => {
                            g.err("kind", &format!("unknown g1 source {other:?}"));
                            G1Source::Uniform { modulus: 0.0, phase: 0.0 }
                        }
                    };
                    g.finish();
                    out
                }
            };
            let arms = match obj.take("arms").cloned().as_ref().and_then(|v| v.as_object().cloned()) {
                None => {
                    obj.err("arms", "missing required field (an object with a \"kind\")");
                    ArmsSource::Uniform { one: 0.0, two: 0.0 }
                }
                Some(m) => {
                    let mut a = Obj::new(&m, "params.arms", obj.errs);
                    let out = match a.req_str("kind").as_str() {
                        "uniform" => ArmsSource::Uniform {
                            one: a.req_f64("one"),
                            two: a.req_f64("two"),
                        },
                        "blobs" => ArmsSource::Blobs {
                            one: a.req_path("one", base),
                            two: a.req_path("two", base),
                        },
                        other => {
                            a.err("kind", &format!("unknown arms source {other:?}"));
                            ArmsSource::Uniform { one: 0.0, two: 0.0 }
                        }
                    };
                    a.finish();
                    out
                }
            };
            Some(Subcommand::FringeSynthesize(SynthesizeJob {
                width,
                height,
                carrier,
                counts_scale,
                g1,
                arms,
            }))
        }
        "fringe-demodulate" => {
            let scene = obj.req_path("scene", base);
            let blind = obj.opt_bool("blind", false);
            let window_radius = obj
                .take("window_radius")
                .cloned()
                .map(|v| obj.f64_of("window_radius", &v));
            let center = obj.take("center").cloned().map(|v| {
                let arr = obj.f64_array_of("center", &v);
                if arr.len() == 2 {
                    (arr[0], arr[1])
                } else {
                    obj.err("center", "must be an [x, y] pair");
                    (f64::NAN, f64::NAN)
                }
            });
            let pitch = obj.opt_f64("pitch", 1.0);
            if blind && window_radius.is_some() {
                obj.err(
                    "window_radius",
                    "cannot be combined with blind demodulation, which picks its own window",
                );
            }
            Some(Subcommand::FringeDemodulate(DemodulateJob {
                scene,
                blind,
                window_radius,
                center,
                pitch,
            }))
        }
        "fringe-noise" => {
            let scene = obj.req_path("scene", base);
            let n_resamples = obj.req_usize("n_resamples");
            Some(Subcommand::FringeNoise(NoiseJob { scene, n_resamples }))
        }
        _ => None,
    }
}

/// The normalized parameter block: every default written out, every path
/// absolute. Feeding this back through `validate_config` reproduces the job.
fn echo_params(sub: &Subcommand) -> Value {
    match sub {
        Subcommand::SimulateKpz(job) => {
            let p = &job.params;
            json!({
                "nu": p.nu,
                "lambda": p.lambda,
                "noise_d": p.noise_d,
                "dt": p.dt,
                "side": p.side,
                "spacing": p.spacing,
                "t_max": p.t_max,
                "snapshot_times": p.snapshot_times,
                "n_realizations": p.n_realizations,
                "initial_condition": "flat",
            })
        }
        Subcommand::SimulateGpe(job) => {
            let p = &job.params;
            let ic = match &p.initial_condition {
                GpeInitialCondition::Vacuum => json!({"kind": "vacuum"}),
                GpeInitialCondition::SeededRandom { amplitude } => {
                    json!({"kind": "seeded-random", "amplitude": amplitude})
                }
                GpeInitialCondition::SteadyState => json!({"kind": "steady-state"}),
                GpeInitialCondition::Supplied(_) => json!({"kind": "supplied"}),
            };
            let mut params = json!({
                "kappa": p.kappa,
                "gamma": p.gamma,
                "gamma2": p.gamma2,
                "g": p.g,
                "g_r": p.g_r,
                "r_stim": p.r_stim,
                "gamma_r": p.gamma_r,
                "pump": p.pump,
                "sigma_xi": p.sigma_xi,
                "dt": p.dt,
                "side": p.side,
                "spacing": p.spacing,
                "t_max": p.t_max,
                "snapshot_times": p.snapshot_times,
                "n_realizations": p.n_realizations,
                "initial_condition": ic,
            });
            if let Some(a) = &job.analysis {
                let mut block = json!({
                    "dt_grid": a.dt_grid,
                    "window": [a.window.0, a.window.1],
                });
                if let Some(m) = a.dr_max {
                    block["dr_max"] = json!(m);
                }
                params["analysis"] = block;
            }
            params
        }
        Subcommand::AnalyzeCorrelations(job) => {
            let mut params = json!({
                "input_dir": path_str(&job.input_dir),
                "dt_grid": job.dt_grid,
                "window": [job.window.0, job.window.1],
                "exponent_axes": job
                    .exponent_axes
                    .iter()
                    .map(|a| match a {
                        Axis::Growth => "growth",
                        Axis::Roughness => "roughness",
                    })
                    .collect::<Vec<_>>(),
            });
            if let Some(m) = job.dr_max {
                params["dr_max"] = json!(m);
            }
            params
        }
        Subcommand::TabulateScaling(job) => json!({
            "correlations": path_str(&job.correlations),
            "kind": kind_name(job.kind),
            "beta": job.beta,
            "chi": job.chi,
            "window": {
                "dr": [edge(job.window.0.0), edge(job.window.0.1)],
                "dt": [edge(job.window.1.0), edge(job.window.1.1)],
            },
        }),
        Subcommand::CollapseFit(job) => {
            let mode = match job.mode {
                FitMode::FreeExponents => json!("free"),
                FitMode::AmplitudesOnly { beta, chi } => {
                    json!({"amplitudes_only": {"beta": beta, "chi": chi}})
                }
            };
            json!({
                "correlations": path_str(&job.correlations),
                "kind": kind_name(job.kind),
                "table_csv": path_str(&job.table_csv),
                "table_meta": path_str(&job.table_meta),
                "mode": mode,
                "exclusion_threshold": job.exclusion_threshold,
            })
        }
        Subcommand::FiniteSize(job) => json!({
            "inputs": job
                .inputs
                .iter()
                .map(|(side, path)| json!({"side": side, "roughness_csv": path_str(path)}))
                .collect::<Vec<_>>(),
            "saturation_fraction": job.saturation_fraction,
        }),
        Subcommand::FringeSynthesize(job) => {
            let g1 = match &job.g1 {
                G1Source::Uniform { modulus, phase } => {
                    json!({"kind": "uniform", "modulus": modulus, "phase": phase})
                }
                G1Source::RadialExponential { length, phase_twist } => {
                    json!({"kind": "radial-exponential", "length": length, "phase_twist": phase_twist})
                }
                G1Source::Blobs { re, im } => {
                    json!({"kind": "blobs", "re": path_str(re), "im": path_str(im)})
                }
            };
            let arms = match &job.arms {
                ArmsSource::Uniform { one, two } => json!({"kind": "uniform", "one": one, "two": two}),
                ArmsSource::Blobs { one, two } => {
                    json!({"kind": "blobs", "one": path_str(one), "two": path_str(two)})
                }
            };
            json!({
                "width": job.width,
                "height": job.height,
                "carrier": job.carrier,
                "counts_scale": job.counts_scale,
                "g1": g1,
                "arms": arms,
            })
        }
        Subcommand::FringeDemodulate(job) => {
            let mut params = json!({
                "scene": path_str(&job.scene),
                "blind": job.blind,
                "pitch": job.pitch,
            });
            if let Some(r) = job.window_radius {
                params["window_radius"] = json!(r);
            }
            if let Some((x, y)) = job.center {
                params["center"] = json!([x, y]);
            }
            params
        }
        Subcommand::FringeNoise(job) => json!({
            "scene": path_str(&job.scene),
            "n_resamples": job.n_resamples,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PathBuf {
        PathBuf::from("/work")
    }

    fn minimal_kpz() -> Value {
        json!({
            "subcommand": "simulate-kpz",
            "output_dir": "out",
            "seed": 7,
            "params": {"lambda": 3.0, "dt": 0.05, "side": 16, "t_max": 1.0},
        })
    }

    #[test]
    fn empty_document_reports_every_required_field() {
        let errs = validate_config(&json!({}), &base(), &Overrides::default()).unwrap_err();
        let text = errs.join("\n");
        for needle in ["subcommand", "output_dir", "seed", "params"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn minimal_kpz_config_materializes_defaults() {
        let rc = validate_config(&minimal_kpz(), &base(), &Overrides::default()).unwrap();
        let Subcommand::SimulateKpz(job) = &rc.subcommand else {
            panic!("wrong subcommand");
        };
        assert_eq!(job.params.nu, 1.0);
        assert_eq!(job.params.noise_d, 1.0);
        assert_eq!(job.params.spacing, 1.0);
        assert_eq!(job.params.n_realizations, 1);
        assert_eq!(job.params.snapshot_times, vec![1.0]);
        assert_eq!(job.params.master_seed, 7);
        assert_eq!(rc.output_dir, PathBuf::from("/work/out"));
        // The echo spells the defaults out.
        assert_eq!(rc.echo["params"]["nu"], json!(1.0));
        assert_eq!(rc.echo["params"]["noise_d"], json!(1.0));
        assert_eq!(rc.echo["params"]["snapshot_times"], json!([1.0]));
    }

    #[test]
    fn echo_reparses_to_the_same_run() {
        let rc = validate_config(&minimal_kpz(), &base(), &Overrides::default()).unwrap();
        let rc2 = validate_config(&rc.echo, &base(), &Overrides::default()).unwrap();
        assert_eq!(rc.echo, rc2.echo);
    }

    #[test]
    fn stability_guard_violation_is_a_single_targeted_error() {
        let mut doc = minimal_kpz();
        doc["params"]["dt"] = json!(0.3);
        let errs = validate_config(&doc, &base(), &Overrides::default()).unwrap_err();
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].contains("0.25"), "{}", errs[0]);
    }

    #[test]
    fn typos_and_misplaced_seed_are_caught() {
        let mut doc = minimal_kpz();
        doc["params"]["lamda"] = json!(3.0);
        doc["params"]["master_seed"] = json!(9);
        let errs = validate_config(&doc, &base(), &Overrides::default()).unwrap_err();
        let text = errs.join("\n");
        assert!(text.contains("params.lamda: unknown field"), "{text}");
        assert!(text.contains("top level"), "{text}");
    }

    #[test]
    fn flag_overrides_beat_document_fields() {
        let over = Overrides { output: Some(PathBuf::from("/elsewhere")), seed: Some(99) };
        let rc = validate_config(&minimal_kpz(), &base(), &over).unwrap();
        assert_eq!(rc.output_dir, PathBuf::from("/elsewhere"));
        assert_eq!(rc.seed, 99);
        let Subcommand::SimulateKpz(job) = &rc.subcommand else {
            panic!("wrong subcommand");
        };
        assert_eq!(job.params.master_seed, 99);
    }

    #[test]
    fn gpe_config_with_analysis_block_roundtrips() {
        let doc = json!({
            "subcommand": "simulate-gpe",
            "output_dir": "out",
            "seed": 3,
            "params": {
                "kappa": 0.5, "gamma": 1.0, "g": 0.1, "r_stim": 0.5,
                "gamma_r": 2.0, "pump": 8.0, "dt": 0.02, "side": 12,
                "t_max": 2.0, "snapshot_times": [1.0, 1.5, 2.0],
                "sigma_xi": 0.05,
                "initial_condition": {"kind": "steady-state"},
                "analysis": {"dt_grid": [0.0, 0.5], "window": [1.0, 1.0], "dr_max": 4.0},
            },
        });
        let rc = validate_config(&doc, &base(), &Overrides::default()).unwrap();
        let Subcommand::SimulateGpe(job) = &rc.subcommand else {
            panic!("wrong subcommand");
        };
        assert_eq!(job.params.gamma2, 0.0);
        assert_eq!(job.params.g_r, 0.0);
        let a = job.analysis.as_ref().unwrap();
        assert_eq!(a.dt_grid, vec![0.0, 0.5]);
        assert_eq!(a.dr_max, Some(4.0));
        let rc2 = validate_config(&rc.echo, &base(), &Overrides::default()).unwrap();
        assert_eq!(rc.echo, rc2.echo);
    }

    #[test]
    fn tabulate_window_accepts_infinite_edges() {
        let doc = json!({
            "subcommand": "tabulate-scaling",
            "output_dir": "out",
            "seed": 0,
            "params": {
                "correlations": "corr.csv",
                "beta": 0.223, "chi": 0.365,
                "window": {"dr": [0.0, "inf"], "dt": [2.0, 50.0]},
            },
        });
        let rc = validate_config(&doc, &base(), &Overrides::default()).unwrap();
        let Subcommand::TabulateScaling(job) = &rc.subcommand else {
            panic!("wrong subcommand");
        };
        assert_eq!(job.window.0 .1, f64::INFINITY);
        assert_eq!(job.correlations, PathBuf::from("/work/corr.csv"));
        assert_eq!(job.kind, MapKind::Correlation);
        let rc2 = validate_config(&rc.echo, &base(), &Overrides::default()).unwrap();
        assert_eq!(rc.echo, rc2.echo);
    }

    #[test]
    fn multiple_problems_are_reported_together() {
        let doc = json!({
            "subcommand": "fringe-noise",
            "seed": 1,
            "params": {"n_resamples": "many"},
        });
        let errs = validate_config(&doc, &base(), &Overrides::default()).unwrap_err();
        let text = errs.join("\n");
        assert!(text.contains("output_dir"), "{text}");
        assert!(text.contains("params.scene"), "{text}");
        assert!(text.contains("params.n_resamples"), "{text}");
    }
}
