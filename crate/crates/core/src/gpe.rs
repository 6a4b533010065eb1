//! Split-step Fourier integration of the driven-dissipative
//! Gross–Pitaevskii equation coupled to an incoherent reservoir, plus the
//! point-reflection estimator of the first-order coherence g⁽¹⁾.
//!
//! The model (nondimensionalized, ħ = 1, κ = ħ/2m):
//!
//! ∂t ψ  = [iκ∇² − γ/2 + (γ₂/2)∇² − i(g|ψ|² + 2g_R n_R) + (R/2)n_R]ψ − iξ
//! ∂t n_R = P − (γ_R + R|ψ|²)·n_R
//!
//! with complex white noise ξ. The homogeneous zero-field state loses
//! stability at P_th = γ·γ_R/R; above it the uniform fixed point is
//! n_R* = γ/R, |ψ|²* = P/γ − γ_R/R.
//!
//! One step applies, in this fixed order: (i) the kinetic + loss part
//! exactly in Fourier space, ψ̂ ← ψ̂·exp(dt·(−iκk̂² − γ/2 − (γ₂/2)k̂²)) with
//! the discrete eigenvalue k̂²; (ii) the local part pointwise,
//! ψ ← ψ·exp(dt·(−i(g|ψ|² + 2g_R n_R) + (R/2)n_R)) with the coefficient
//! frozen at its pre-substep value; (iii) one explicit Euler step of the
//! reservoir rate equation using the post-(ii) density; (iv) the additive
//! noise. The ordering is an arbitrary but fixed choice; each substep is
//! exact or O(dt²), so one full step is accurate to O(dt²) and first order
//! globally. The circular noise ξ is invariant under the −i rotation, so
//! the increment is drawn directly as a complex Gaussian.
//!
//! Ensembles follow the same stream-per-trajectory layout as the KPZ
//! engine: trajectory j consumes the (master_seed, j) noise stream only, so
//! results are bit-stable for any worker count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{ComplexField, NoiseStream, MIN_SIDE};
use crate::observables::{
    assign_bin, bin_width, lag_pairs, validate_bin_grid, validate_dt_grid, validate_window,
    CellFlag, CorrelationMap, MapKind,
};

/// Accuracy guard on the kinetic scale dt·(κ + γ₂/2)/a². The Fourier-space
/// exponential is unconditionally stable, but beyond this bound the fastest
/// lattice mode advances its phase by more than ~4 rad per step and the
/// splitting error is no longer O(dt²)-small.
pub const KINETIC_LIMIT: f64 = 0.5;

/// Stability guard on the reservoir's explicit Euler step, dt·γ_R. The
/// remaining density dependence R|ψ|² is only known at runtime; undershoot
/// from it is caught by the clamp budget instead.
pub const RESERVOIR_LIMIT: f64 = 0.25;

/// Highest tolerated fraction of site-steps on which the reservoir had to
/// be clamped at zero; more means dt is too large for the pump dynamics.
pub const CLAMP_BUDGET: f64 = 1e-4;

/// Starting state of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum GpeInitialCondition {
    /// ψ = 0 and an empty reservoir; the pump fills it from scratch.
    Vacuum,
    /// Per-site complex Gaussian ψ (each component has standard deviation
    /// `amplitude`) over a reservoir pre-filled to its zero-field fixed
    /// point P/γ_R. The seed field is drawn from the trajectory's own noise
    /// stream, ahead of the dynamics.
    SeededRandom { amplitude: f64 },
    /// The homogeneous mean-field condensate (requires P > P_th) with
    /// uniform phase 0.
    SteadyState,
    /// Caller-provided state; its time and clamp diagnostics reset to 0 at
    /// the start of each trajectory.
    Supplied(CondensateState),
}

/// Integration and ensemble parameters.
#[derive(Debug, Clone)]
pub struct GpeParams {
    /// Kinetic coefficient κ = ħ/2m ≥ 0 (lattice units²/time).
    pub kappa: f64,
    /// Polariton loss rate γ ≥ 0.
    pub gamma: f64,
    /// Diffusion loss γ₂ ≥ 0 (momentum-dependent part of the loss).
    pub gamma2: f64,
    /// Self-interaction g.
    pub g: f64,
    /// Interaction with reservoir polaritons g_R.
    pub g_r: f64,
    /// Stimulated scattering rate R > 0.
    pub r_stim: f64,
    /// Reservoir loss rate γ_R > 0.
    pub gamma_r: f64,
    /// Pump power P ≥ 0.
    pub pump: f64,
    /// Noise amplitude σ_ξ ≥ 0; per-site complex variance per step is
    /// σ_ξ²·dt/a², split equally between real and imaginary parts.
    pub sigma_xi: f64,
    /// Time step.
    pub dt: f64,
    /// Lattice side L.
    pub side: usize,
    /// Lattice spacing a.
    pub spacing: f64,
    /// Integration horizon.
    pub t_max: f64,
    /// Strictly increasing snapshot times within [0, t_max].
    pub snapshot_times: Vec<f64>,
    /// Ensemble size N; trajectories use stream ids 0..N-1.
    pub n_realizations: usize,
    /// Master seed shared by all trajectories' noise streams.
    pub master_seed: u64,
    pub initial_condition: GpeInitialCondition,
}

impl GpeParams {
    /// Checks every documented parameter constraint, reporting the first
    /// violated one.
    pub fn validate(&self) -> Result<()> {
        for (name, v, strictly) in [
            ("kappa", self.kappa, false),
            ("gamma", self.gamma, false),
            ("gamma2", self.gamma2, false),
            ("r_stim", self.r_stim, true),
            ("gamma_r", self.gamma_r, true),
            ("pump", self.pump, false),
            ("sigma_xi", self.sigma_xi, false),
        ] {
            if !v.is_finite() || v < 0.0 || (strictly && v == 0.0) {
                let bound = if strictly { "> 0" } else { ">= 0" };
                return Err(Error::Parameter(format!("{name} must be {bound}, got {v}")));
            }
        }
        if !self.g.is_finite() || !self.g_r.is_finite() {
            return Err(Error::Parameter(
                "interaction strengths g and g_r must be finite".to_string(),
            ));
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
        let kinetic = self.dt * (self.kappa + self.gamma2 / 2.0) / (self.spacing * self.spacing);
        if kinetic >= KINETIC_LIMIT {
            return Err(Error::Parameter(format!(
                "kinetic guard violated: dt*(kappa + gamma2/2)/a^2 = {kinetic} must be < {KINETIC_LIMIT}"
            )));
        }
        let reservoir = self.dt * self.gamma_r;
        if reservoir >= RESERVOIR_LIMIT {
            return Err(Error::Parameter(format!(
                "reservoir guard violated: dt*gamma_r = {reservoir} must be < {RESERVOIR_LIMIT}"
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
        match &self.initial_condition {
            GpeInitialCondition::Vacuum => {}
            GpeInitialCondition::SeededRandom { amplitude } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    return Err(Error::Parameter(format!(
                        "seed amplitude must be > 0, got {amplitude}"
                    )));
                }
            }
            GpeInitialCondition::SteadyState => {
                steady_state_homogeneous(self)?;
            }
            GpeInitialCondition::Supplied(state) => {
                if state.side() != self.side || state.spacing() != self.spacing {
                    return Err(Error::Parameter(format!(
                        "supplied initial state is {}x{} (a = {}), params want {}x{} (a = {})",
                        state.side(),
                        state.side(),
                        state.spacing(),
                        self.side,
                        self.side,
                        self.spacing
                    )));
                }
            }
        }
        Ok(())
    }

    /// Variance of each noise component (real or imaginary) per site per
    /// step: σ_ξ²·dt/(2a²).
    pub fn noise_component_variance(&self) -> f64 {
        self.sigma_xi * self.sigma_xi * self.dt / (2.0 * self.spacing * self.spacing)
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

    fn initial_state(&self, stream: &mut NoiseStream) -> CondensateState {
        let n = self.side * self.side;
        match &self.initial_condition {
            GpeInitialCondition::Vacuum => CondensateState {
                psi: ComplexField::uniform(self.side, self.spacing, Complex64::default())
                    .expect("validated geometry"),
                n_r: vec![0.0; n],
                clamp_events: 0,
            },
            GpeInitialCondition::SeededRandom { amplitude } => {
                let mut components = vec![0.0; 2 * n];
                stream.fill_normal_scaled(*amplitude, &mut components);
                let values = components
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect();
                CondensateState {
                    psi: ComplexField::raw(self.side, self.spacing, 0.0, values),
                    n_r: vec![self.pump / self.gamma_r; n],
                    clamp_events: 0,
                }
            }
            GpeInitialCondition::SteadyState => {
                let (nr, density) =
                    steady_state_homogeneous(self).expect("validated above threshold");
                CondensateState {
                    psi: ComplexField::uniform(
                        self.side,
                        self.spacing,
                        Complex64::new(density.sqrt(), 0.0),
                    )
                    .expect("validated geometry"),
                    n_r: vec![nr; n],
                    clamp_events: 0,
                }
            }
            GpeInitialCondition::Supplied(state) => {
                let mut s = state.clone();
                s.psi.set_time(0.0);
                s.clamp_events = 0;
                s
            }
        }
    }
}

/// Pump power at which the homogeneous zero-field solution loses stability:
/// P_th = γ·γ_R/R. The linearized k = 0 growth rate about ψ = 0,
/// n_R = P/γ_R is −γ/2 + R·P/(2γ_R), which crosses zero exactly there.
pub fn threshold_power(params: &GpeParams) -> Result<f64> {
    for (name, v) in [
        ("gamma", params.gamma),
        ("gamma_r", params.gamma_r),
        ("r_stim", params.r_stim),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Parameter(format!(
                "threshold power needs {name} > 0, got {v}"
            )));
        }
    }
    Ok(params.gamma * params.gamma_r / params.r_stim)
}

/// Homogeneous noiseless fixed point above threshold: (n_R*, |ψ|²*) =
/// (γ/R, P/γ − γ_R/R). Below or at threshold the condensed fixed point does
/// not exist.
pub fn steady_state_homogeneous(params: &GpeParams) -> Result<(f64, f64)> {
    let p_th = threshold_power(params)?;
    if params.pump <= p_th {
        return Err(Error::BelowThreshold {
            p: params.pump,
            p_th,
        });
    }
    Ok((
        params.gamma / params.r_stim,
        params.pump / params.gamma - params.gamma_r / params.r_stim,
    ))
}

/// Condensate field ψ and reservoir density n_R on one lattice, with a
/// running count of reservoir clamp events for the dt diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensateState {
    psi: ComplexField,
    n_r: Vec<f64>,
    clamp_events: u64,
}

impl CondensateState {
    /// Builds a state from its two fields, validating that the reservoir
    /// matches the lattice and is finite and non-negative everywhere.
    pub fn new(psi: ComplexField, n_r: Vec<f64>) -> Result<Self> {
        if n_r.len() != psi.values().len() {
            return Err(Error::InvalidLattice(format!(
                "reservoir has {} entries for a {}-site lattice",
                n_r.len(),
                psi.values().len()
            )));
        }
        if !n_r.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Parameter(
                "reservoir density must be finite and non-negative".to_string(),
            ));
        }
        Ok(Self {
            psi,
            n_r,
            clamp_events: 0,
        })
    }

    /// Spatially uniform state at time 0.
    pub fn uniform(side: usize, spacing: f64, psi: Complex64, n_r: f64) -> Result<Self> {
        Self::new(
            ComplexField::uniform(side, spacing, psi)?,
            vec![n_r; side * side],
        )
    }

    pub fn psi(&self) -> &ComplexField {
        &self.psi
    }

    pub fn reservoir(&self) -> &[f64] {
        &self.n_r
    }

    pub fn time(&self) -> f64 {
        self.psi.time()
    }

    pub fn side(&self) -> usize {
        self.psi.side()
    }

    pub fn spacing(&self) -> f64 {
        self.psi.spacing()
    }

    /// Reservoir clamp events accumulated since the trajectory started.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Spatial mean of |ψ|².
    pub fn mean_density(&self) -> f64 {
        let v = self.psi.values();
        v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64
    }

    fn all_finite(&self) -> bool {
        self.psi.all_finite() && self.n_r.iter().all(|v| v.is_finite())
    }
}

/// Reusable per-trajectory integrator: FFT plans, the precomputed kinetic
/// factors, and the noise buffer.
struct Stepper {
    fft: crate::fft2::Fft2,
    kinetic_factor: Vec<Complex64>,
    noise: Vec<f64>,
}

impl Stepper {
    fn new(params: &GpeParams) -> Self {
        let l = params.side;
        let a2 = params.spacing * params.spacing;
        let mut kinetic_factor = Vec::with_capacity(l * l);
        for ky in 0..l {
            for kx in 0..l {
                let cos = |m: usize| (2.0 * std::f64::consts::PI * m as f64 / l as f64).cos();
                let k2 = (2.0 / a2) * (2.0 - cos(kx) - cos(ky));
                let decay = params.dt * (params.gamma / 2.0 + params.gamma2 / 2.0 * k2);
                let phase = -params.dt * params.kappa * k2;
                kinetic_factor.push(Complex64::from_polar((-decay).exp(), phase));
            }
        }
        Stepper {
            fft: crate::fft2::Fft2::square(l),
            kinetic_factor,
            noise: vec![0.0; 2 * l * l],
        }
    }

    /// One split step, in the documented substep order. Noise is drawn iff
    /// a stream is supplied (σ_ξ > 0), two components per site in row-major
    /// order.
    fn advance(
        &mut self,
        state: &mut CondensateState,
        params: &GpeParams,
        stream: Option<&mut NoiseStream>,
    ) {
        let dt = params.dt;
        let psi = state.psi.values_mut();

        self.fft.forward(psi);
        for (v, f) in psi.iter_mut().zip(&self.kinetic_factor) {
            *v *= f;
        }
        self.fft.inverse(psi);

        let mut clamped = 0u64;
        for (v, nr) in psi.iter_mut().zip(state.n_r.iter_mut()) {
            let rho = v.norm_sqr();
            let gain = 0.5 * params.r_stim * *nr;
            let phase = -(params.g * rho + 2.0 * params.g_r * *nr);
            *v *= Complex64::from_polar((dt * gain).exp(), dt * phase);
            let rho_new = v.norm_sqr();
            let next = *nr + dt * (params.pump - (params.gamma_r + params.r_stim * rho_new) * *nr);
            *nr = if next < 0.0 {
                clamped += 1;
                0.0
            } else {
                next
            };
        }

        if let Some(stream) = stream {
            let sigma = params.noise_component_variance().sqrt();
            stream.fill_normal_scaled(sigma, &mut self.noise);
            for (v, c) in psi.iter_mut().zip(self.noise.chunks_exact(2)) {
                *v += Complex64::new(c[0], c[1]);
            }
        }

        state.clamp_events += clamped;
        let t = state.psi.time();
        state.psi.set_time(t + dt);
    }
}

fn blow_up(params: &GpeParams, state: &CondensateState, stream_id: u64) -> Error {
    Error::BlowUp {
        step: (state.time() / params.dt).round() as u64,
        time: state.time(),
        stream_id,
    }
}

/// One split step of the coupled field + reservoir system; see the module
/// docs for the substep order. Noise is drawn from the stream only when
/// σ_ξ > 0.
pub fn gpe_step(
    state: &CondensateState,
    params: &GpeParams,
    stream: &mut NoiseStream,
) -> Result<CondensateState> {
    params.validate()?;
    if state.side() != params.side {
        return Err(Error::Parameter(format!(
            "state side {} does not match params side {}",
            state.side(),
            params.side
        )));
    }
    let mut next = state.clone();
    let mut stepper = Stepper::new(params);
    if params.sigma_xi > 0.0 {
        stepper.advance(&mut next, params, Some(stream));
    } else {
        stepper.advance(&mut next, params, None);
    }
    if !next.all_finite() {
        return Err(blow_up(params, &next, stream.stream_id()));
    }
    Ok(next)
}

/// Integrates one trajectory from t = 0 to t_max, returning one snapshot
/// per requested time (nearest-step convention as in the KPZ engine). The
/// run fails if reservoir clamping exceeded [`CLAMP_BUDGET`] of all
/// site-steps.
pub fn run_trajectory(params: &GpeParams, stream_id: u64) -> Result<Vec<CondensateState>> {
    params.validate()?;
    let mut stream = NoiseStream::new(params.master_seed, stream_id);
    let mut state = params.initial_state(&mut stream);
    let mut stepper = Stepper::new(params);
    let with_noise = params.sigma_xi > 0.0;

    let snapshot_steps = params.snapshot_steps();
    let mut snapshots: Vec<CondensateState> = Vec::with_capacity(snapshot_steps.len());
    let mut next = 0;
    while next < snapshot_steps.len() && snapshot_steps[next] == 0 {
        snapshots.push(state.clone());
        next += 1;
    }
    let n_steps = params.n_steps();
    for step in 1..=n_steps {
        if with_noise {
            stepper.advance(&mut state, params, Some(&mut stream));
        } else {
            stepper.advance(&mut state, params, None);
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
    let site_steps = n_steps.saturating_mul((params.side * params.side) as u64);
    if site_steps > 0 {
        let fraction = state.clamp_events as f64 / site_steps as f64;
        if fraction > CLAMP_BUDGET {
            return Err(Error::ReservoirClamp {
                fraction,
                budget: CLAMP_BUDGET,
                stream_id,
            });
        }
    }
    Ok(snapshots)
}

/// Runs N trajectories (stream ids 0..N-1) in parallel, reducing each
/// snapshot history to a summary value; results are indexed by stream id,
/// so downstream combination is independent of worker scheduling.
pub fn run_ensemble<T, F>(params: &GpeParams, per_trajectory: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &[CondensateState]) -> T + Sync,
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

/// Materializes the ψ snapshot histories of the whole ensemble, indexed by
/// stream id (reservoir fields are dropped; the coherence estimator needs
/// only ψ).
pub fn run_ensemble_fields(params: &GpeParams) -> Result<Vec<Vec<ComplexField>>> {
    run_ensemble(params, |_, snaps| {
        snaps.iter().map(|s| s.psi.clone()).collect()
    })
}

/// Per-realization accumulation of the g⁽¹⁾ estimator: pooled numerator
/// Σ ψ*(r, t₀)·ψ(−r, t₀+Δt) and the two density sums it is normalized by,
/// per (Δr, Δt) cell. Parts combine across realizations with
/// [`combine_coherence`].
#[derive(Debug, Clone)]
pub struct CoherenceAccumulator {
    dr_grid: Vec<f64>,
    dt_grid: Vec<f64>,
    num: Vec<Complex64>,
    den_a: Vec<f64>,
    den_b: Vec<f64>,
    counts: Vec<u64>,
}

impl CoherenceAccumulator {
    /// |g⁽¹⁾| of this realization alone, where sampled with nonzero density.
    fn cell_modulus(&self, idx: usize) -> Option<f64> {
        if self.counts[idx] == 0 {
            return None;
        }
        let den = normalizer(self.den_a[idx], self.den_b[idx]);
        (den > 0.0).then(|| self.num[idx].norm() / den)
    }
}

/// √(d_a·d_b), except that bitwise-equal density sums (the Δt = 0 diagonal
/// and the self-conjugate origin bin) bypass the root so the normalized
/// autocorrelation is exact.
fn normalizer(den_a: f64, den_b: f64) -> f64 {
    if den_a.to_bits() == den_b.to_bits() {
        den_a
    } else {
        (den_a * den_b).sqrt()
    }
}

/// (site, reflected site, bin) for every site whose point-reflection
/// separation |2r| (minimum image) lands in a bin. The reflected partner of
/// (x, y) is ((L−x) mod L, (L−y) mod L).
fn reflection_bins(side: usize, spacing: f64, grid: &[f64]) -> Vec<(usize, usize, usize)> {
    let w = bin_width(spacing);
    let fold = |d: usize| d.min(side - d) as f64;
    let mut out = Vec::new();
    for y in 0..side {
        for x in 0..side {
            let dx = (2 * x) % side;
            let dy = (2 * y) % side;
            let dist = spacing * (fold(dx).powi(2) + fold(dy).powi(2)).sqrt();
            if let Some(b) = assign_bin(grid, w, dist) {
                let neg = ((side - y) % side) * side + (side - x) % side;
                out.push((y * side + x, neg, b));
            }
        }
    }
    out
}

/// Accumulates one realization's ψ snapshots into pooled g⁽¹⁾ sums.
/// Snapshots must be time-ordered on one lattice geometry; `window` bounds
/// the reference times t₀ (callers pass a window past the transient).
pub fn accumulate_coherence(
    snapshots: &[ComplexField],
    dr_grid: &[f64],
    dt_grid: &[f64],
    window: (f64, f64),
) -> Result<CoherenceAccumulator> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InsufficientData("no snapshots supplied".into()))?;
    let side = first.side();
    let spacing = first.spacing();
    validate_bin_grid(dr_grid, side as f64 * spacing / 2.0, "dr")?;
    validate_dt_grid(dt_grid)?;
    validate_window(window)?;
    for s in snapshots {
        if s.side() != side || s.spacing() != spacing {
            return Err(Error::Parameter(
                "snapshots must share one lattice geometry".into(),
            ));
        }
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time()).collect();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "snapshots must be strictly time-ordered".into(),
        ));
    }

    let pairs_by_site = reflection_bins(side, spacing, dr_grid);
    let n_dr = dr_grid.len();
    let n_cells = n_dr * dt_grid.len();
    let mut acc = CoherenceAccumulator {
        dr_grid: dr_grid.to_vec(),
        dt_grid: dt_grid.to_vec(),
        num: vec![Complex64::default(); n_cells],
        den_a: vec![0.0; n_cells],
        den_b: vec![0.0; n_cells],
        counts: vec![0; n_cells],
    };
    for (di, &dt) in dt_grid.iter().enumerate() {
        for (i, j) in lag_pairs(&times, window, dt) {
            let (va, vb) = (snapshots[i].values(), snapshots[j].values());
            for &(site, neg, b) in &pairs_by_site {
                let idx = di * n_dr + b;
                acc.num[idx] += va[site].conj() * vb[neg];
                acc.den_a[idx] += va[site].norm_sqr();
                acc.den_b[idx] += vb[neg].norm_sqr();
                acc.counts[idx] += 1;
            }
        }
    }
    Ok(acc)
}

/// Combines per-realization accumulators into a coherence map. The cell
/// value pools numerator and densities across realizations (so |g⁽¹⁾| ≤ 1
/// holds exactly, by Cauchy–Schwarz); the standard error is the scatter of
/// the per-realization moduli. Cells sampled only with zero density are
/// unusable; unsampled cells are missing.
pub fn combine_coherence(parts: &[CoherenceAccumulator]) -> Result<CorrelationMap> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InsufficientData("no accumulators to combine".into()))?;
    for p in parts {
        if p.dr_grid != first.dr_grid || p.dt_grid != first.dt_grid {
            return Err(Error::Parameter(
                "accumulators were built on different grids".into(),
            ));
        }
    }
    let n_cells = first.num.len();
    let mut values = vec![Complex64::default(); n_cells];
    let mut stderr = vec![0.0; n_cells];
    let mut n_samples = vec![0u64; n_cells];
    let mut flags = vec![CellFlag::Missing; n_cells];
    let mut any = false;
    for idx in 0..n_cells {
        let sampled: Vec<&CoherenceAccumulator> =
            parts.iter().filter(|p| p.counts[idx] > 0).collect();
        if sampled.is_empty() {
            continue;
        }
        any = true;
        let num: Complex64 = sampled.iter().map(|p| p.num[idx]).sum();
        let den_a: f64 = sampled.iter().map(|p| p.den_a[idx]).sum();
        let den_b: f64 = sampled.iter().map(|p| p.den_b[idx]).sum();
        let den = normalizer(den_a, den_b);
        n_samples[idx] = sampled.len() as u64;
        if !(den > 0.0) {
            values[idx] = Complex64::new(f64::NAN, f64::NAN);
            flags[idx] = CellFlag::Unusable;
            continue;
        }
        values[idx] = num / den;
        flags[idx] = CellFlag::Ok;
        let moduli: Vec<f64> = sampled.iter().filter_map(|p| p.cell_modulus(idx)).collect();
        if moduli.len() > 1 {
            let n = moduli.len() as f64;
            let mean = moduli.iter().sum::<f64>() / n;
            let var = moduli.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
            stderr[idx] = (var / n).sqrt();
        }
    }
    if !any {
        return Err(Error::InsufficientData(
            "no (t0, t0+dt) snapshot pairs landed in the reference window".into(),
        ));
    }
    CorrelationMap::from_parts(
        MapKind::Coherence,
        first.dr_grid.clone(),
        first.dt_grid.clone(),
        values,
        stderr,
        n_samples,
        flags,
    )
}

/// First-order coherence g⁽¹⁾(Δr, Δt) over a materialized ensemble of ψ
/// snapshot histories, using the point-reflection convention: each site r
/// is correlated with −r, and the separation axis is the minimum-image
/// distance |2r|. On even lattices only even-coordinate separations occur,
/// so alternate Δr bins stay missing by construction.
pub fn g1_estimator(
    ensemble: &[Vec<ComplexField>],
    dr_grid: &[f64],
    dt_grid: &[f64],
    window: (f64, f64),
) -> Result<CorrelationMap> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
    let times: Vec<f64> = first.iter().map(|s| s.time()).collect();
    for real in ensemble {
        let t: Vec<f64> = real.iter().map(|s| s.time()).collect();
        if t != times {
            return Err(Error::Parameter(
                "realizations must share identical snapshot times".into(),
            ));
        }
    }
    let parts = ensemble
        .iter()
        .map(|snaps| accumulate_coherence(snaps, dr_grid, dt_grid, window))
        .collect::<Result<Vec<_>>>()?;
    combine_coherence(&parts)
}
