//! Euler–Maruyama integration of the 2D KPZ equation
//! ∂t θ = ν∇²θ + (λ/2)(∇θ)² + η on a periodic lattice, with deterministic
//! ensemble orchestration.
//!
//! Each trajectory is driven by its own noise stream keyed by
//! (master_seed, stream_id), so ensembles parallelize over realizations with
//! bit-stable results for any worker count. The field is non-compact: the
//! phase is evolved as an unbounded height variable and no vortex handling
//! is performed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::stencil::kpz_drift_into;
use crate::lattice::{NoiseStream, PhaseField, MIN_SIDE};

/// Explicit-diffusion stability bound on dt·ν/a².
pub const STABILITY_LIMIT: f64 = 0.25;

/// Starting field for a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// θ ≡ 0, the growth-from-flat protocol.
    Flat,
    /// Caller-provided field; its time stamp is reset to 0 at the start of
    /// each trajectory.
    Supplied(PhaseField),
}

/// Integration and ensemble parameters.
///
/// There is no physically preferred scale for ν and D here; configuration
/// defaults set ν = D = 1 so the dimensionless coupling λ²D/ν³ is fixed by
/// λ alone. Every engine entry point validates the full parameter set, so a
/// guard violation (dt·ν/a² ≥ 0.25) fails before any stepping happens.
#[derive(Debug, Clone)]
pub struct KpzParams {
    /// Diffusion constant ν > 0.
    pub nu: f64,
    /// Nonlinear coupling λ.
    pub lambda: f64,
    /// Noise strength D ≥ 0; per-site noise variance per step is 2D·dt/a².
    pub noise_d: f64,
    /// Time step.
    pub dt: f64,
    /// Lattice side L.
    pub side: usize,
    /// Lattice spacing a.
    pub spacing: f64,
    /// Integration horizon.
    pub t_max: f64,
    /// Strictly increasing snapshot times within [0, t_max]; each is mapped
    /// to the nearest integration step.
    pub snapshot_times: Vec<f64>,
    /// Ensemble size N; trajectories use stream ids 0..N-1.
    pub n_realizations: usize,
    /// Master seed shared by all trajectories' noise streams.
    pub master_seed: u64,
    pub initial_condition: InitialCondition,
}

impl KpzParams {
    /// Checks every documented parameter constraint, reporting the first
    /// violated one.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::Parameter(format!("nu must be > 0, got {}", self.nu)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Parameter("lambda must be finite".to_string()));
        }
        if !(self.noise_d.is_finite() && self.noise_d >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise strength D must be >= 0, got {}",
                self.noise_d
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.side < MIN_SIDE {
            return Err(Error::InvalidLattice(format!(
                "side {} is below the minimum {MIN_SIDE}",
                self.side
            )));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Parameter(format!(
                "spacing must be > 0, got {}",
                self.spacing
            )));
        }
        let guard = self.dt * self.nu / (self.spacing * self.spacing);
        if guard >= STABILITY_LIMIT {
            return Err(Error::Parameter(format!(
                "stability guard violated: dt*nu/a^2 = {guard} must be < {STABILITY_LIMIT}"
            )));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::Parameter(format!(
                "t_max must be >= 0, got {}",
                self.t_max
            )));
        }
        for pair in self.snapshot_times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Parameter(format!(
                    "snapshot times must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let (Some(first), Some(last)) =
            (self.snapshot_times.first(), self.snapshot_times.last())
        {
            if !first.is_finite() || !last.is_finite() || *first < 0.0 || *last > self.t_max {
                return Err(Error::Parameter(format!(
                    "snapshot times must lie within [0, {}]",
                    self.t_max
                )));
            }
        }
        if self.n_realizations < 1 {
            return Err(Error::Parameter(
                "n_realizations must be >= 1".to_string(),
            ));
        }
        if let InitialCondition::Supplied(f) = &self.initial_condition {
            if f.side() != self.side || f.spacing() != self.spacing {
                return Err(Error::Parameter(format!(
                    "supplied initial condition is {}x{} (a = {}), params want {}x{} (a = {})",
                    f.side(),
                    f.side(),
                    f.spacing(),
                    self.side,
                    self.side,
                    self.spacing
                )));
            }
        }
        Ok(())
    }

    /// Per-site variance of the noise increment, 2D·dt/a².
    pub fn noise_variance(&self) -> f64 {
        2.0 * self.noise_d * self.dt / (self.spacing * self.spacing)
    }

    fn initial_field(&self) -> PhaseField {
        match &self.initial_condition {
            InitialCondition::Flat => {
                PhaseField::flat(self.side, self.spacing).expect("validated geometry")
            }
            InitialCondition::Supplied(f) => {
                let mut f = f.clone();
                f.set_time(0.0);
                f
            }
        }
    }

    fn n_steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }

    fn snapshot_steps(&self) -> Vec<u64> {
        let n = self.n_steps();
        self.snapshot_times
            .iter()
            .map(|t| ((t / self.dt).round() as u64).min(n))
            .collect()
    }
}

/// In-place update shared by the step functions; noise (if any) must have
/// the same length as the field.
fn advance(state: &mut PhaseField, drift: &mut [f64], params: &KpzParams, noise: Option<&[f64]>) {
    kpz_drift_into(state, params.nu, params.lambda / 2.0, drift);
    let dt = params.dt;
    let values = state.values_mut();
    for (v, d) in values.iter_mut().zip(drift.iter()) {
        *v += dt * d;
    }
    if let Some(noise) = noise {
        for (v, n) in values.iter_mut().zip(noise.iter()) {
            *v += n;
        }
    }
    state.set_time(state.time() + dt);
}

fn blow_up(params: &KpzParams, state: &PhaseField, stream_id: u64) -> Error {
    Error::BlowUp {
        step: (state.time() / params.dt).round() as u64,
        time: state.time(),
        stream_id,
    }
}

/// One Euler–Maruyama step: θ' = θ + dt·(ν∇²θ + (λ/2)(∇θ)²) + noise, with
/// per-site noise variance 2D·dt/a² drawn from the stream in row-major
/// site order. D = 0 draws nothing.
pub fn kpz_step(
    field: &PhaseField,
    params: &KpzParams,
    stream: &mut NoiseStream,
) -> Result<PhaseField> {
    params.validate()?;
    if field.side() != params.side {
        return Err(Error::Parameter(format!(
            "field side {} does not match params side {}",
            field.side(),
            params.side
        )));
    }
    let mut state = field.clone();
    let mut drift = vec![0.0; field.values().len()];
    if params.noise_d > 0.0 {
        let mut noise = vec![0.0; field.values().len()];
        stream.fill_normal_scaled(params.noise_variance().sqrt(), &mut noise);
        advance(&mut state, &mut drift, params, Some(&noise));
    } else {
        advance(&mut state, &mut drift, params, None);
    }
    if !state.all_finite() {
        return Err(blow_up(params, &state, stream.stream_id()));
    }
    Ok(state)
}

/// Deterministic variant with caller-supplied noise increments (added
/// verbatim, no scaling), primarily for symmetry tests that need mirrored
/// noise; arithmetic matches `kpz_step` exactly.
pub fn kpz_step_with_noise(
    field: &PhaseField,
    params: &KpzParams,
    noise: &PhaseField,
) -> Result<PhaseField> {
    params.validate()?;
    if field.side() != params.side || noise.side() != params.side {
        return Err(Error::Parameter(
            "field and noise must match params side".to_string(),
        ));
    }
    let mut state = field.clone();
    let mut drift = vec![0.0; field.values().len()];
    advance(&mut state, &mut drift, params, Some(noise.values()));
    if !state.all_finite() {
        return Err(blow_up(params, &state, u64::MAX));
    }
    Ok(state)
}

/// Integrates one trajectory from t = 0 to t_max, returning one snapshot
/// per requested time (nearest-step convention: time t is emitted after
/// step round(t/dt), stamped with the actual integration time).
pub fn run_trajectory(params: &KpzParams, stream_id: u64) -> Result<Vec<PhaseField>> {
    params.validate()?;
    let mut stream = NoiseStream::new(params.master_seed, stream_id);
    let mut state = params.initial_field();
    let mut drift = vec![0.0; state.values().len()];
    let mut noise = vec![0.0; state.values().len()];
    let sigma = params.noise_variance().sqrt();
    let with_noise = params.noise_d > 0.0;

    let snapshot_steps = params.snapshot_steps();
    let mut snapshots: Vec<PhaseField> = Vec::with_capacity(snapshot_steps.len());
    let mut next = 0;
    while next < snapshot_steps.len() && snapshot_steps[next] == 0 {
        snapshots.push(state.clone());
        next += 1;
    }
    for step in 1..=params.n_steps() {
        if with_noise {
            stream.fill_normal_scaled(sigma, &mut noise);
            advance(&mut state, &mut drift, params, Some(&noise));
        } else {
            advance(&mut state, &mut drift, params, None);
        }
        if !state.all_finite() {
            return Err(Error::BlowUp {
                step,
                time: state.time(),
                stream_id,
            });
        }
        while next < snapshot_steps.len() && snapshot_steps[next] == step {
            snapshots.push(state.clone());
            next += 1;
        }
    }
    Ok(snapshots)
}

/// Runs N trajectories (stream ids 0..N-1) in parallel and reduces each
/// trajectory's snapshot list to a summary value. Results come back indexed
/// by stream id, so the subsequent combination is independent of worker
/// scheduling, and no more than one trajectory history per worker is alive
/// at a time.
pub fn run_ensemble<T, F>(params: &KpzParams, per_trajectory: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &[PhaseField]) -> T + Sync,
{
    params.validate()?;
    let results: Vec<Result<T>> = (0..params.n_realizations as u64)
        .into_par_iter()
        .map(|stream_id| run_trajectory(params, stream_id).map(|s| per_trajectory(stream_id, &s)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Materializes all snapshot histories of the ensemble, indexed by stream
/// id. Convenient at desk scale; for large runs prefer `run_ensemble` with
/// a reducing closure.
pub fn run_ensemble_snapshots(params: &KpzParams) -> Result<Vec<Vec<PhaseField>>> {
    run_ensemble(params, |_, snaps| snaps.to_vec())
}
