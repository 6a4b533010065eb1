//! Run manifests. The manifest is written as soon as the output directory
//! exists, with `"status": "running"`, and rewritten on success with
//! timings and the result-file list. Results are only ever written after the
//! first manifest write, so a manifest stuck at "running" marks an aborted
//! run, and a missing manifest means the run never started.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::recipe::StageTiming;

pub const MANIFEST_FILE: &str = "manifest.json";

pub struct Manifest {
    doc: Value,
    stages: Vec<StageTiming>,
}

impl Manifest {
    pub fn new(run: &RunConfig, recipe: Option<&str>, workers: usize) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let mut doc = json!({
            "cli_version": env!("CARGO_PKG_VERSION"),
            "engine_version": kpz2d::VERSION,
            "subcommand": run.subcommand.name(),
            "seed": run.seed,
            "workers": workers,
            "started_unix": started_unix,
            "status": "running",
            "config": run.echo,
        });
        if let Some(name) = recipe {
            doc["recipe"] = json!(name);
        }
        Manifest { doc, stages: Vec::new() }
    }

    pub fn set_stages(&mut self, stages: Vec<StageTiming>) {
        self.stages = stages;
    }

    fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.doc).expect("manifest is valid JSON");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn write_started(&self, dir: &Path) -> std::io::Result<()> {
        self.write(dir)
    }

    pub fn write_complete(
        &mut self,
        dir: &Path,
        wall_seconds: f64,
        results: &[String],
    ) -> std::io::Result<()> {
        self.doc["status"] = json!("complete");
        self.doc["wall_seconds"] = json!(wall_seconds);
        self.doc["results"] = json!(results);
        if !self.stages.is_empty() {
            self.doc["stages"] = json!(self
                .stages
                .iter()
                .map(|s| json!({"name": s.name, "wall_seconds": s.wall_seconds}))
                .collect::<Vec<_>>());
        }
        self.write(dir)
    }
}
