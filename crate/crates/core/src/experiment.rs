//! Experiment pipeline: synthesize a pulse for a random amplitude transfer,
//! propagate it with control noise to the first passage, and compare the
//! measured time and purity loss against the lower bounds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report_with_lambda, eigenstate_initial_condition, BoundReport, PhaseSearch};
use crate::error::{Error, Result};
use crate::grape::{auto_segments, synthesize, SynthesisConfig, SynthesisResult, TargetPhases};
use crate::lindblad::{fmt_f64, propagate_until_passage, pulse_statistics_until, ControlPulse, PropagationOptions, TrajectoryRecord};
use crate::spinalg::{double_well_model, lie_closure_rank, ModelSystem};
use crate::states::{
    random_transformation_in_band, spin_coherent_state, to_eigenbasis, AmplitudePhaseState, DensityMatrix, TransformationSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Slack allowed before a measured value counts as violating its bound.
pub const VIOLATION_SLACK: f64 = 1e-9;

/// Largest dimension for which `cmd model` computes the Lie closure rank.
pub const MAX_CLOSURE_DIM: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Drift eigenstate with index `N / 2` in ascending energy order.
    MidEigenstate,
    Eigenstate(usize),
    /// Equatorial spin-coherent state `theta = pi/2, phi = 0`.
    Coherent,
}

/// Pulse-synthesis settings. The duration is `t_total` if given, otherwise
/// `max(t_per_n * N, t_min)`; the segment count is `n_seg` if given,
/// otherwise the larger of `seg_per_dim * d` and the count that keeps
/// `dt * ||H0|| <= 0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    pub t_total: Option<f64>,
    pub t_per_n: f64,
    pub t_min: f64,
    pub n_seg: Option<usize>,
    pub seg_per_dim: usize,
    pub max_iter: usize,
    pub fidelity_goal: f64,
    pub amplitude_penalty: f64,
    pub u_init_scale: f64,
    pub target_phases: TargetPhases,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            t_total: None,
            t_per_n: 0.125,
            t_min: 0.5,
            n_seg: None,
            seg_per_dim: 2,
            max_iter: 300,
            fidelity_goal: 0.9999,
            amplitude_penalty: 0.0,
            u_init_scale: 0.01,
            target_phases: TargetPhases::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n_values: Vec<usize>,
    pub omega: f64,
    pub delta: f64,
    pub u_int: f64,
    pub eta_values: Vec<f64>,
    pub epsilon: f64,
    pub initial_state: InitialState,
    /// Target amplitudes sit `target_overshoot * epsilon` away from the
    /// initial ones so that the first passage at `epsilon` happens before the
    /// end of the pulse.
    pub target_overshoot: f64,
    /// Target perturbations are restricted to levels within this many
    /// indices of a populated level; `null` allows all levels.
    pub target_band: Option<usize>,
    /// One transfer per seed and grid point; the seed drives both the random
    /// target and the initial pulse.
    pub seeds: Vec<u64>,
    pub synthesis: SynthesisSettings,
    pub samples_per_segment: usize,
    pub substep_scale: f64,
    /// Record every `stride`-th sample in trajectory output.
    pub stride: usize,
    pub phase_search: PhaseSearch,
    /// Multiplies every `Lambda_k` entering the bounds. Anything but 1 feeds
    /// the checker wrong inputs and exists to test that violations are
    /// caught.
    pub lambda_scale: f64,
    /// Solve, per N, for the noise strength giving this purity loss.
    pub target_dp: Option<f64>,
    /// Pulse to propagate instead of synthesizing one (CSV as written by
    /// `synthesize`).
    pub pulse_csv: Option<String>,
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_values: vec![8],
            omega: 1.0,
            delta: 0.3,
            u_int: 1.7,
            eta_values: vec![1e-3],
            epsilon: 0.05,
            initial_state: InitialState::MidEigenstate,
            target_overshoot: 1.5,
            target_band: Some(2),
            seeds: vec![1],
            synthesis: SynthesisSettings::default(),
            samples_per_segment: 4,
            substep_scale: 1.0,
            stride: 1,
            phase_search: PhaseSearch::default(),
            lambda_scale: 1.0,
            target_dp: None,
            pulse_csv: None,
            jobs: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported schema_version {}; expected {SCHEMA_VERSION}", self.schema_version)));
        }
        if self.n_values.is_empty() || self.eta_values.is_empty() || self.seeds.is_empty() {
            return Err(invalid("n_values, eta_values and seeds must be non-empty"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 1) {
            return Err(invalid(format!("invalid N = {n}; need N >= 1")));
        }
        if let Some(&eta) = self.eta_values.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(invalid(format!("eta must be >= 0, got {eta}")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        let distance = self.target_overshoot * self.epsilon;
        if !(self.target_overshoot >= 1.0 && distance < 1.0) {
            return Err(invalid(format!("target_overshoot * epsilon must lie in [epsilon, 1), got {distance}")));
        }
        if self.samples_per_segment == 0 || self.stride == 0 || !(self.substep_scale > 0.0) {
            return Err(invalid("samples_per_segment, stride and substep_scale must be positive"));
        }
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            return Err(invalid(format!("lambda_scale must be positive, got {}", self.lambda_scale)));
        }
        if let Some(dp) = self.target_dp {
            if !(dp > 0.0 && dp < 1.0) {
                return Err(invalid(format!("target_dp must lie in (0, 1), got {dp}")));
            }
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs must be >= 1"));
        }
        let s = &self.synthesis;
        if s.t_total.is_some_and(|t| !(t > 0.0 && t.is_finite())) || !(s.t_per_n >= 0.0) || !(s.t_min > 0.0) {
            return Err(invalid("pulse durations must be positive"));
        }
        // the zero pulse already has infidelity about distance^2
        if !(s.fidelity_goal < 1.0 && 1.0 - s.fidelity_goal <= 0.1 * distance * distance) {
            return Err(invalid(format!(
                "fidelity_goal {} is too loose for a target at distance {distance}; need 1 - goal <= {:e}",
                s.fidelity_goal,
                0.1 * distance * distance
            )));
        }
        if s.n_seg == Some(0) || s.seg_per_dim == 0 {
            return Err(invalid("segment counts must be >= 1"));
        }
        Ok(())
    }

    pub fn model(&self, n: usize) -> Result<ModelSystem> {
        double_well_model(n, self.omega, self.delta, self.u_int)
    }

    pub fn initial_state(&self, model: &ModelSystem) -> Result<AmplitudePhaseState> {
        let n = model.size_param();
        match self.initial_state {
            InitialState::MidEigenstate => eigenstate_initial_condition(model, n / 2),
            InitialState::Eigenstate(i) => eigenstate_initial_condition(model, i),
            InitialState::Coherent => to_eigenbasis(&spin_coherent_state(n, std::f64::consts::FRAC_PI_2, 0.0)?, model),
        }
    }

    pub fn transformation(&self, model: &ModelSystem, seed: u64) -> Result<TransformationSpec> {
        let psi_i = self.initial_state(model)?;
        let psi_f = random_transformation_in_band(&psi_i, self.target_overshoot * self.epsilon, self.target_band, seed)?;
        TransformationSpec::new(psi_i, psi_f, self.epsilon)
    }

    pub fn synthesis_config(&self, model: &ModelSystem, seed: u64) -> SynthesisConfig {
        let s = &self.synthesis;
        let n = model.size_param() as f64;
        let t_total = s.t_total.unwrap_or((s.t_per_n * n).max(s.t_min));
        let n_seg = s.n_seg.unwrap_or_else(|| auto_segments(model, t_total, 0.0).max(s.seg_per_dim * model.dim()));
        SynthesisConfig {
            t_total,
            n_seg,
            max_iter: s.max_iter,
            fidelity_goal: s.fidelity_goal,
            amplitude_penalty: s.amplitude_penalty,
            seed,
            u_init_scale: s.u_init_scale,
            target_phases: s.target_phases,
            polish: false,
        }
    }

    pub fn propagation_options(&self) -> PropagationOptions {
        PropagationOptions {
            stride: self.stride,
            samples_per_segment: self.samples_per_segment,
            keep_states: false,
            substep_scale: self.substep_scale,
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            builder = builder.num_threads(j);
        }
        builder.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub converged: bool,
    pub fidelity: f64,
    pub iterations: usize,
    pub t_total: f64,
    pub n_seg: usize,
    /// First-passage time; `None` if synthesis failed or the distance was
    /// never reached.
    pub measured_t: Option<f64>,
    pub t_bound: Option<f64>,
    pub t_bound_scaled: Option<f64>,
    /// Purity lost up to the first passage.
    pub measured_dp: Option<f64>,
    pub dp_bound_general: f64,
    pub dp_bound_scaling: f64,
    /// `measured_dp / (eta * T * sum_k u_bar_k)`: purity lost per unit of
    /// noisy control action, a dynamical witness of the control variances.
    pub loss_per_action: Option<f64>,
    /// Time-averaged `|u_k|` up to the first passage.
    pub u_bar: Vec<f64>,
    pub min_variances: Vec<f64>,
    pub scaling_regime: bool,
    pub bound_violated: bool,
}

impl SweepRow {
    /// Whether the row enters pass/fail decisions and slope fits.
    pub fn is_valid(&self) -> bool {
        self.converged && self.measured_t.is_some()
    }

    pub fn time_bound_holds(&self) -> Option<bool> {
        match (self.measured_t, self.t_bound) {
            (Some(t), Some(b)) => Some(t >= b - VIOLATION_SLACK),
            (Some(_), None) => Some(true),
            _ => None,
        }
    }

    pub fn purity_bound_holds(&self) -> Option<bool> {
        self.measured_dp.map(|dp| dp >= self.dp_bound_general - VIOLATION_SLACK)
    }
}

/// Everything produced for one grid point.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub row: SweepRow,
    pub synthesis: Option<SynthesisResult>,
    pub trajectory: Option<TrajectoryRecord>,
    pub bounds: BoundReport,
}

/// Pulse for a grid point: read from `pulse_csv` if set, otherwise
/// synthesized.
pub fn pulse_for(cfg: &ExperimentConfig, model: &ModelSystem, spec: &TransformationSpec, seed: u64) -> Result<(ControlPulse, Option<SynthesisResult>)> {
    if let Some(path) = &cfg.pulse_csv {
        let file = std::fs::File::open(path)?;
        return Ok((ControlPulse::read_csv(file, None, 0.0)?, None));
    }
    let res = synthesize(model, spec.psi_i(), spec.psi_f(), &cfg.synthesis_config(model, seed))?;
    Ok((res.pulse.clone(), Some(res)))
}

/// Run the full pipeline for one `(N, eta, seed)`.
pub fn run_point(cfg: &ExperimentConfig, n: usize, eta: f64, seed: u64) -> Result<PointOutcome> {
    let model = cfg.model(n)?;
    let spec = cfg.transformation(&model, seed)?;
    let (pulse, synthesis) = pulse_for(cfg, &model, &spec, seed)?;
    let (converged, fidelity, iterations) = match &synthesis {
        Some(s) => (s.converged, s.fidelity, s.iterations),
        None => (true, f64::NAN, 0),
    };
    let lambda: Vec<f64> = model.lambda().iter().map(|l| l * cfg.lambda_scale).collect();

    let (trajectory, measured_t, measured_dp, window) = if converged {
        let noisy = pulse.with_eta(eta)?;
        let rho0 = DensityMatrix::pure(&spec.psi_i().to_vector(&model)?)?;
        let traj = propagate_until_passage(&model, &noisy, &rho0, &cfg.propagation_options(), &spec)?;
        let fp = traj.first_passage;
        let dp = fp.map(|t| traj.purity_loss_at(t).max(0.0));
        let window = fp.unwrap_or(pulse.t_total());
        (Some(traj), fp, dp, window)
    } else {
        (None, None, None, pulse.t_total())
    };
    let stats = pulse_statistics_until(&pulse, window);
    let bounds = bound_report_with_lambda(&spec, &model, &stats, eta, &cfg.phase_search, &lambda)?;
    let mut row = SweepRow {
        n,
        eta,
        epsilon: cfg.epsilon,
        seed,
        converged,
        fidelity,
        iterations,
        t_total: pulse.t_total(),
        n_seg: pulse.n_seg(),
        measured_t,
        t_bound: bounds.t_bound,
        t_bound_scaled: bounds.t_bound_scaled,
        measured_dp,
        dp_bound_general: bounds.dp_bound_general,
        dp_bound_scaling: bounds.dp_bound_scaling,
        loss_per_action: None,
        u_bar: stats.u_bar.clone(),
        min_variances: bounds.min_variances.clone(),
        scaling_regime: bounds.scaling_regime,
        bound_violated: false,
    };
    let action = window * stats.u_bar.iter().sum::<f64>();
    row.loss_per_action = match (measured_dp, measured_t) {
        (Some(dp), Some(_)) if eta > 0.0 && action > 0.0 => Some(dp / (eta * action)),
        _ => None,
    };
    row.bound_violated = row.is_valid() && (row.time_bound_holds() == Some(false) || row.purity_bound_holds() == Some(false));
    Ok(PointOutcome { row, synthesis, trajectory, bounds })
}

/// Single-point check: the first entry of every list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub row: SweepRow,
    pub bounds: BoundReport,
    pub time_bound_holds: Option<bool>,
    pub purity_bound_holds: Option<bool>,
    pub passed: bool,
    pub config: ExperimentConfig,
}

pub fn verify_bounds(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let out = run_point(cfg, cfg.n_values[0], cfg.eta_values[0], cfg.seeds[0])?;
    let row = out.row;
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        time_bound_holds: row.time_bound_holds(),
        purity_bound_holds: row.purity_bound_holds(),
        passed: row.is_valid() && !row.bound_violated,
        bounds: out.bounds,
        row,
        config: cfg.clone(),
    })
}

/// Least-squares fit of `log y` against `log N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub eta: f64,
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn log_log_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let logs: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    if logs.len() < 2 {
        return None;
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub n: usize,
    pub eta: f64,
    pub measured_dp: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaScaling {
    pub target_dp: f64,
    pub points: Vec<EtaPoint>,
    /// Slope of `log eta` against `log N`.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub rows: usize,
    pub valid_rows: usize,
    pub excluded_rows: Vec<(usize, f64, u64)>,
    pub fits: Vec<SlopeFit>,
    pub eta_scaling: Option<EtaScaling>,
    pub bound_violations: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

fn distinct_n(cfg: &ExperimentConfig) -> usize {
    let mut ns = cfg.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    ns.len()
}

/// Run every `(N, eta, seed)` point in a worker pool, then fit slopes.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if distinct_n(cfg) < 3 {
        return Err(invalid(format!("slope fit needs at least 3 distinct N values, got {}", distinct_n(cfg))));
    }
    let mut grid = Vec::new();
    for &n in &cfg.n_values {
        for &eta in &cfg.eta_values {
            for &seed in &cfg.seeds {
                grid.push((n, eta, seed));
            }
        }
    }
    let pool = cfg.thread_pool()?;
    let mut rows: Vec<SweepRow> =
        pool.install(|| grid.par_iter().map(|&(n, eta, seed)| run_point(cfg, n, eta, seed).map(|o| o.row)).collect::<Result<_>>())?;
    rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.eta.total_cmp(&b.eta)).then(a.seed.cmp(&b.seed)));

    let mut etas = cfg.eta_values.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let mut fits = Vec::new();
    for &eta in &etas {
        let at_eta: Vec<&SweepRow> = rows.iter().filter(|r| r.eta == eta).collect();
        let measured: Vec<(f64, f64)> =
            at_eta.iter().filter(|r| r.is_valid()).filter_map(|r| r.measured_dp.map(|dp| (r.n as f64, dp))).collect();
        let scaling: Vec<(f64, f64)> = at_eta.iter().map(|r| (r.n as f64, r.dp_bound_scaling)).collect();
        let per_action: Vec<(f64, f64)> =
            at_eta.iter().filter(|r| r.is_valid()).filter_map(|r| r.loss_per_action.map(|v| (r.n as f64, v))).collect();
        for (name, pts) in [("measured_dp", measured), ("dp_bound_scaling", scaling), ("loss_per_action", per_action)] {
            if let Some((slope, intercept)) = log_log_fit(&pts) {
                fits.push(SlopeFit { eta, quantity: name.into(), slope, intercept, points: pts.len() });
            }
        }
    }

    let eta_scaling = match cfg.target_dp {
        Some(target) => Some(pool.install(|| eta_scaling(cfg, target))?),
        None => None,
    };
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        rows: rows.len(),
        valid_rows: rows.iter().filter(|r| r.is_valid()).count(),
        excluded_rows: rows.iter().filter(|r| !r.is_valid()).map(|r| (r.n, r.eta, r.seed)).collect(),
        fits,
        eta_scaling,
        bound_violations: rows.iter().filter(|r| r.bound_violated).count(),
        config: cfg.clone(),
    };
    Ok(SweepOutput { rows, summary })
}

/// Purity loss at the first passage when `pulse` runs with noise `eta`.
fn dp_at_passage(cfg: &ExperimentConfig, model: &ModelSystem, spec: &TransformationSpec, pulse: &ControlPulse, eta: f64) -> Result<Option<f64>> {
    let rho0 = DensityMatrix::pure(&spec.psi_i().to_vector(model)?)?;
    let traj = propagate_until_passage(model, &pulse.with_eta(eta)?, &rho0, &cfg.propagation_options(), spec)?;
    Ok(traj.first_passage.map(|t| traj.purity_loss_at(t)))
}

/// Noise strength giving purity loss `target` at the first passage, by
/// bisection in `log eta` to relative tolerance `1e-3`, using the first
/// seed's transfer at every N.
pub fn eta_for_target(cfg: &ExperimentConfig, n: usize, target: f64) -> Result<EtaPoint> {
    let model = cfg.model(n)?;
    let seed = cfg.seeds[0];
    let spec = cfg.transformation(&model, seed)?;
    let (pulse, synthesis) = pulse_for(cfg, &model, &spec, seed)?;
    if synthesis.is_some_and(|s| !s.converged) {
        return Err(invalid(format!("synthesis did not converge for N = {n}")));
    }
    let mut evaluations = 0;
    let mut eval = |eta: f64| -> Result<f64> {
        evaluations += 1;
        dp_at_passage(cfg, &model, &spec, &pulse, eta)?.ok_or_else(|| invalid(format!("no first passage for N = {n}")))
    };
    let (mut lo, mut hi) = (1e-9f64, 1.0f64);
    if eval(lo)? > target || eval(hi)? < target {
        return Err(invalid(format!("target purity loss {target} not bracketed by eta in [{lo}, {hi}] for N = {n}")));
    }
    while (hi / lo).ln() > 1e-3 {
        let mid = (lo * hi).sqrt();
        if eval(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = (lo * hi).sqrt();
    let measured_dp = eval(eta)?;
    Ok(EtaPoint { n, eta, measured_dp, evaluations })
}

fn eta_scaling(cfg: &ExperimentConfig, target: f64) -> Result<EtaScaling> {
    let mut ns = cfg.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let points: Vec<EtaPoint> = ns.par_iter().map(|&n| eta_for_target(cfg, n, target)).collect::<Result<_>>()?;
    let slope = log_log_fit(&points.iter().map(|p| (p.n as f64, p.eta)).collect::<Vec<_>>()).map(|f| f.0);
    Ok(EtaScaling { target_dp: target, points, slope })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// CSV with columns `N, eta, epsilon, seed, converged, fidelity, iterations,
/// t_total, n_seg, measured_T, t_bound, t_bound_scaled, measured_dP,
/// dp_bound_general, dp_bound_scaling, loss_per_action, u_bar_1 .. u_bar_K,
/// bound_violated`.
/// Missing values are empty fields.
pub fn write_rows_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let k = rows.first().map_or(0, |r| r.u_bar.len());
    let mut header: Vec<String> = [
        "N", "eta", "epsilon", "seed", "converged", "fidelity", "iterations", "t_total", "n_seg", "measured_T", "t_bound",
        "t_bound_scaled", "measured_dP", "dp_bound_general", "dp_bound_scaling", "loss_per_action",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=k).map(|i| format!("u_bar_{i}")));
    header.push("bound_violated".into());
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            fmt_f64(r.eta),
            fmt_f64(r.epsilon),
            r.seed.to_string(),
            r.converged.to_string(),
            fmt_f64(r.fidelity),
            r.iterations.to_string(),
            fmt_f64(r.t_total),
            r.n_seg.to_string(),
            opt(r.measured_t),
            opt(r.t_bound),
            opt(r.t_bound_scaled),
            opt(r.measured_dp),
            fmt_f64(r.dp_bound_general),
            fmt_f64(r.dp_bound_scaling),
            opt(r.loss_per_action),
        ];
        rec.extend(r.u_bar.iter().map(|&v| fmt_f64(v)));
        rec.push(r.bound_violated.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub schema_version: u32,
    pub n: usize,
    pub dim: usize,
    pub omega: f64,
    pub delta: f64,
    pub u_int: f64,
    pub lambda: Vec<f64>,
    /// `None` above [`MAX_CLOSURE_DIM`].
    pub lie_closure_rank: Option<usize>,
    pub full_rank: usize,
    pub h0_spectrum: Vec<f64>,
    pub basis_id: u64,
}

pub fn model_summary(cfg: &ExperimentConfig, n: usize) -> Result<ModelSummary> {
    let model = cfg.model(n)?;
    let d = model.dim();
    Ok(ModelSummary {
        schema_version: SCHEMA_VERSION,
        n,
        dim: d,
        omega: cfg.omega,
        delta: cfg.delta,
        u_int: cfg.u_int,
        lambda: model.lambda().to_vec(),
        lie_closure_rank: (d <= MAX_CLOSURE_DIM).then(|| lie_closure_rank(&model)),
        full_rank: d * d - 1,
        h0_spectrum: model.eigen_values().to_vec(),
        basis_id: model.basis_id().0,
    })
}
