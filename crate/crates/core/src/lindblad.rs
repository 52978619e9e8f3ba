//! Propagation under the control-noise master equation
//!
//! ```text
//! d rho / dt = -i [H0 + sum_k u_k X_k, rho] - eta sum_k |u_k| [X_k, [X_k, rho]]
//! ```
//!
//! with piecewise-constant controls, and a stochastic unitary-kick unraveling
//! whose ensemble average reproduces it.
//!
//! The deterministic propagator applies the exponential of the Liouvillian
//! through its Taylor series on substeps short enough that the series
//! converges to machine precision, so no `d^2 x d^2` superoperator is ever
//! formed. All work happens in the drift eigenframe, where the recorded
//! amplitudes `r_n = sqrt(<n|rho|n>)` are read off the diagonal.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{adjoint, frobenius_norm, hermitian_part_x2, anti_hermitian_part_x2, vec_norm, CMat, CVec, HermitianEigen, C64};
use crate::spinalg::{BasisId, ModelSystem};
use crate::states::{amplitude_distance, DensityMatrix, TransformationSpec};

/// Piecewise-constant controls on a uniform grid plus the relative noise
/// strength `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    dt: f64,
    /// `n_seg x K`, one row per segment.
    values: Array2<f64>,
    eta: f64,
}

impl ControlPulse {
    pub fn new(dt: f64, values: Array2<f64>, eta: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("segment width must be positive, got {dt}")));
        }
        if values.nrows() < 1 || values.ncols() < 1 {
            return Err(Error::InvalidArgument("pulse needs at least one segment and one control".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pulse contains non-finite control values".into()));
        }
        Ok(Self { dt, values, eta })
    }

    /// The same control value on every segment.
    pub fn constant(n_seg: usize, dt: f64, u: &[f64], eta: f64) -> Result<Self> {
        let values = Array2::from_shape_fn((n_seg, u.len()), |(_, k)| u[k]);
        Self::new(dt, values, eta)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_seg(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.values.ncols()
    }

    pub fn t_total(&self) -> f64 {
        self.dt * self.n_seg() as f64
    }

    pub fn segment(&self, s: usize) -> ArrayView1<'_, f64> {
        self.values.row(s)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.dt, self.values.clone(), eta)
    }

    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(self.dt, values, self.eta)
    }

    /// CSV with columns `segment, t_start, u_1 .. u_K`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["segment".to_string(), "t_start".to_string()];
        header.extend((1..=self.n_controls()).map(|k| format!("u_{k}")));
        out.write_record(&header)?;
        for s in 0..self.n_seg() {
            let mut row = vec![s.to_string(), fmt_f64(s as f64 * self.dt)];
            row.extend(self.segment(s).iter().map(|&v| fmt_f64(v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`ControlPulse::write_csv`]; the grid width is
    /// taken from the `t_start` column and `total_time` fixes the last
    /// segment.
    pub fn read_csv<R: std::io::Read>(r: R, total_time: Option<f64>, eta: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut starts = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad pulse value {s:?}: {e}")))
            };
            if rec.len() < 3 {
                return Err(Error::InvalidArgument("pulse CSV rows need segment, t_start and u_k columns".into()));
            }
            starts.push(parse(&rec[1])?);
            rows.push(rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?);
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("pulse CSV has no segments".into()));
        }
        let dt = match (starts.len(), total_time) {
            (_, Some(t)) => t / rows.len() as f64,
            (n, None) if n >= 2 => starts[1] - starts[0],
            _ => return Err(Error::InvalidArgument("single-segment pulse CSV needs an explicit total time".into())),
        };
        let k = rows[0].len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("ragged pulse CSV".into()));
        }
        let values = Array2::from_shape_fn((rows.len(), k), |(s, c)| rows[s][c]);
        Self::new(dt, values, eta)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

/// Time-averaged control magnitudes `u_bar_k = (1/T) int_0^T |u_k| dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseStatistics {
    pub t_total: f64,
    pub u_bar: Vec<f64>,
}

pub fn pulse_statistics(pulse: &ControlPulse) -> PulseStatistics {
    pulse_statistics_until(pulse, pulse.t_total())
}

/// Statistics over `[0, t_end]`, integrating the partial last segment
/// exactly.
pub fn pulse_statistics_until(pulse: &ControlPulse, t_end: f64) -> PulseStatistics {
    let t_end = t_end.clamp(0.0, pulse.t_total());
    let k = pulse.n_controls();
    let mut integral = vec![0.0; k];
    for s in 0..pulse.n_seg() {
        let start = s as f64 * pulse.dt;
        if start >= t_end {
            break;
        }
        let width = (t_end - start).min(pulse.dt);
        for (acc, &u) in integral.iter_mut().zip(pulse.segment(s).iter()) {
            *acc += u.abs() * width;
        }
    }
    let u_bar = if t_end > 0.0 { integral.iter().map(|v| v / t_end).collect() } else { vec![0.0; k] };
    PulseStatistics { t_total: t_end, u_bar }
}

/// Recording and accuracy controls for [`propagate_lindblad`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    /// Record every `stride`-th sample point.
    pub stride: usize,
    /// Sample points per segment (1 records segment boundaries only).
    pub samples_per_segment: usize,
    /// Keep full density matrices in the record.
    pub keep_states: bool,
    /// Upper bound on `||L|| h` for each Taylor substep.
    pub substep_scale: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { stride: 1, samples_per_segment: 1, keep_states: true, substep_scale: 1.0 }
    }
}

/// Sampled output of a propagation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Option<Vec<DensityMatrix>>,
    pub purity_series: Vec<f64>,
    pub r_series: Vec<Vec<f64>>,
    pub first_passage: Option<f64>,
    pub basis_id: BasisId,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.as_ref().and_then(|s| s.last())
    }

    /// Purity at `t` by linear interpolation between samples.
    pub fn purity_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.purity_series, t)
    }

    /// `P(0) - P(t)`.
    pub fn purity_loss_at(&self, t: f64) -> f64 {
        self.purity_series[0] - self.purity_at(t)
    }

    /// CSV with columns `t, purity, r_0 .. r_{d-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.r_series.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string(), "purity".to_string()];
        header.extend((0..d).map(|n| format!("r_{n}")));
        out.write_record(&header)?;
        for ((t, p), r) in self.times.iter().zip(&self.purity_series).zip(&self.r_series) {
            let mut row = vec![fmt_f64(*t), fmt_f64(*p)];
            row.extend(r.iter().map(|&v| fmt_f64(v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self, pulse: &ControlPulse) -> TrajectorySummary {
        let t_end = self.first_passage.unwrap_or(*self.times.last().unwrap_or(&0.0));
        TrajectorySummary {
            schema_version: 1,
            first_passage: self.first_passage,
            delta_p: self.purity_loss_at(t_end),
            delta_p_final: self.purity_series[0] - self.purity_series.last().copied().unwrap_or(1.0),
            u_bar: pulse_statistics_until(pulse, t_end).u_bar,
        }
    }
}

/// JSON summary of a trajectory. `delta_p` and `u_bar` refer to the
/// interval up to the first passage when one was found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub schema_version: u32,
    pub first_passage: Option<f64>,
    pub delta_p: f64,
    pub delta_p_final: f64,
    pub u_bar: Vec<f64>,
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + w * (ys[i] - ys[i - 1]);
        }
    }
    *ys.last().unwrap()
}

/// Liouvillian of one constant segment, in the drift eigenframe.
struct SegmentGenerator<'a> {
    h: CMat,
    xs: &'a [CMat],
    gammas: Vec<f64>,
    norm_bound: f64,
}

impl<'a> SegmentGenerator<'a> {
    fn new(model: &'a ModelSystem, u: &[f64], eta: f64) -> Self {
        let h = model.hamiltonian_eigenframe(u);
        let gammas: Vec<f64> = u.iter().map(|v| eta * v.abs()).collect();
        // ||ad_H|| <= spread(H), ||ad_X^2|| = spread(X)^2
        let mut norm_bound = model.drift_eigen().spread();
        for ((spec, &uk), &g) in model.control_spectra().iter().zip(u).zip(&gammas) {
            let s = spec.spread();
            norm_bound += uk.abs() * s + g * s * s;
        }
        Self { h, xs: model.controls_eigenframe(), gammas, norm_bound }
    }

    /// `L(rho)` for Hermitian `rho`; the result is Hermitian again.
    fn apply(&self, rho: &CMat) -> CMat {
        let hr = self.h.dot(rho);
        let mut out = anti_hermitian_part_x2(&hr).mapv(|z| C64::new(z.im, -z.re));
        for (x, &g) in self.xs.iter().zip(&self.gammas) {
            if g == 0.0 {
                continue;
            }
            // [X, [X, rho]] = Z + Z^dagger with Z = X (X rho - (X rho)^dagger)
            let c = anti_hermitian_part_x2(&x.dot(rho));
            let z = x.dot(&c);
            out.scaled_add(C64::new(-g, 0.0), &hermitian_part_x2(&z));
        }
        out
    }

    /// `exp(t L) rho` via Taylor series on `ceil(t ||L|| / scale)` substeps.
    fn evolve(&self, rho: &CMat, t: f64, scale: f64) -> CMat {
        let n_sub = ((t * self.norm_bound / scale).ceil() as usize).max(1);
        let h = t / n_sub as f64;
        let mut state = rho.clone();
        for _ in 0..n_sub {
            let mut term = state.clone();
            let mut acc = state.clone();
            for n in 1..=80 {
                term = self.apply(&term).mapv(|z| z * (h / n as f64));
                acc += &term;
                if frobenius_norm(&term) < 1e-17 {
                    break;
                }
            }
            // remove round-off anti-Hermitian drift
            state = hermitian_part_x2(&acc).mapv(|z| z * 0.5);
        }
        state
    }
}

fn check_pulse(model: &ModelSystem, pulse: &ControlPulse) -> Result<()> {
    if pulse.n_controls() != model.n_controls() {
        return Err(Error::DimensionMismatch { expected: model.n_controls(), found: pulse.n_controls() });
    }
    Ok(())
}

fn populations_to_r(rho_e: &CMat) -> Vec<f64> {
    rho_e.diag().iter().map(|z| z.re.max(0.0).sqrt()).collect()
}

/// Integrate the master equation over the whole pulse starting from `rho0`.
pub fn propagate_lindblad(
    model: &ModelSystem,
    pulse: &ControlPulse,
    rho0: &DensityMatrix,
    opts: &PropagationOptions,
) -> Result<TrajectoryRecord> {
    propagate_impl(model, pulse, rho0, opts, None)
}

/// Integrate until the amplitudes first reach distance `epsilon` from those
/// of `spec`'s initial state, recording the interpolated first-passage time.
///
/// Every sample point is recorded regardless of `stride`, so the crossing is
/// bracketed by adjacent samples. Runs to the end of the pulse if the
/// distance is never reached.
pub fn propagate_until_passage(
    model: &ModelSystem,
    pulse: &ControlPulse,
    rho0: &DensityMatrix,
    opts: &PropagationOptions,
    spec: &TransformationSpec,
) -> Result<TrajectoryRecord> {
    if spec.basis_id() != model.basis_id() {
        return Err(Error::BasisMismatch);
    }
    let opts = PropagationOptions { stride: 1, ..*opts };
    let mut rec = propagate_impl(model, pulse, rho0, &opts, Some(spec))?;
    rec.first_passage = first_passage_time(&rec, spec)?;
    Ok(rec)
}

fn propagate_impl(
    model: &ModelSystem,
    pulse: &ControlPulse,
    rho0: &DensityMatrix,
    opts: &PropagationOptions,
    stop: Option<&TransformationSpec>,
) -> Result<TrajectoryRecord> {
    check_pulse(model, pulse)?;
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    if opts.stride == 0 || opts.samples_per_segment == 0 || !(opts.substep_scale > 0.0) {
        return Err(Error::InvalidArgument("stride, samples_per_segment and substep_scale must be positive".into()));
    }
    let v = model.eigen_basis();
    let vh = adjoint(&v.view());
    let mut rho = vh.dot(rho0.entries()).dot(v);

    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        states: opts.keep_states.then(Vec::new),
        purity_series: Vec::new(),
        r_series: Vec::new(),
        first_passage: None,
        basis_id: model.basis_id(),
    };
    let record = |t: f64, rho_e: &CMat, rec: &mut TrajectoryRecord| {
        rec.times.push(t);
        rec.purity_series.push(rho_e.iter().map(|z| z.norm_sqr()).sum());
        rec.r_series.push(populations_to_r(rho_e));
        if let Some(states) = rec.states.as_mut() {
            states.push(DensityMatrix::from_entries_unchecked(v.dot(rho_e).dot(&vh)));
        }
    };
    record(0.0, &rho, &mut rec);

    let m = opts.samples_per_segment;
    let h = pulse.dt / m as f64;
    let total = pulse.n_seg() * m;
    let mut sample = 0usize;
    for s in 0..pulse.n_seg() {
        let u = pulse.segment(s).to_vec();
        let gen = SegmentGenerator::new(model, &u, pulse.eta);
        for _ in 0..m {
            rho = gen.evolve(&rho, h, opts.substep_scale);
            sample += 1;
            if sample.is_multiple_of(opts.stride) || sample == total {
                record(sample as f64 * h, &rho, &mut rec);
            }
            if let Some(spec) = stop {
                let r = rec.r_series.last().expect("recorded");
                if amplitude_distance(r, spec.psi_i().r()) >= spec.epsilon() {
                    return Ok(rec);
                }
            }
        }
    }
    Ok(rec)
}

/// Propagate a pure state under the noiseless Hamiltonian, recording at
/// segment boundaries.
pub fn propagate_pure(model: &ModelSystem, pulse: &ControlPulse, psi0: &CVec) -> Result<Vec<CVec>> {
    check_pulse(model, pulse)?;
    let mut out = Vec::with_capacity(pulse.n_seg() + 1);
    let mut psi = psi0.clone();
    out.push(psi.clone());
    for s in 0..pulse.n_seg() {
        let h = model.hamiltonian(pulse.segment(s).as_slice().unwrap_or(&pulse.segment(s).to_vec()));
        psi = HermitianEigen::raw(&h)?.propagator(pulse.dt).dot(&psi);
        out.push(psi.clone());
    }
    Ok(out)
}

/// Step control for the stochastic integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticOptions {
    /// Requested step `h`; rounded down so that it divides `dt`.
    pub step: f64,
    /// Record every `stride`-th segment boundary.
    pub stride: usize,
}

/// Pure-state trajectory of the unitary-kick unraveling.
#[derive(Debug, Clone)]
pub struct PureTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVec>,
}

impl PureTrajectory {
    pub fn purity_series(&self) -> Vec<f64> {
        self.states.iter().map(|v| vec_norm(v).powi(4)).collect()
    }
}

struct KickPlan {
    substeps: usize,
    h: f64,
}

fn kick_plan(pulse: &ControlPulse, opts: &StochasticOptions) -> Result<KickPlan> {
    if !(opts.step > 0.0) || opts.step > pulse.dt * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "stochastic step {} must lie in (0, dt = {}]",
            opts.step, pulse.dt
        )));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let substeps = ((pulse.dt / opts.step) - 1e-9).ceil().max(1.0) as usize;
    Ok(KickPlan { substeps, h: pulse.dt / substeps as f64 })
}

fn kick(psi: &mut CVec, spectrum: &HermitianEigen, angle: f64) {
    let w = &spectrum.vectors;
    let coeffs = adjoint(&w.view()).dot(&*psi);
    let rotated: CVec = coeffs
        .iter()
        .zip(spectrum.values.iter())
        .map(|(c, &lam)| c * C64::from_polar(1.0, -angle * lam))
        .collect();
    *psi = w.dot(&rotated);
}

/// One unitary-kick trajectory: per step `exp(-i H h)` followed by
/// independent kicks `exp(-i dW_k X_k)`, `dW_k ~ Normal(0, 2 eta |u_k| h)`.
pub fn propagate_stochastic(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi0: &CVec,
    seed: u64,
    opts: &StochasticOptions,
) -> Result<PureTrajectory> {
    let plan = kick_plan(pulse, opts)?;
    let steps = segment_propagators(model, pulse, plan.h)?;
    Ok(run_kicked(model, pulse, psi0, &steps, &plan, opts.stride, ChaCha8Rng::seed_from_u64(seed)))
}

fn segment_propagators(model: &ModelSystem, pulse: &ControlPulse, h: f64) -> Result<Vec<CMat>> {
    check_pulse(model, pulse)?;
    (0..pulse.n_seg())
        .map(|s| {
            let h_seg = model.hamiltonian(&pulse.segment(s).to_vec());
            Ok(HermitianEigen::raw(&h_seg)?.propagator(h))
        })
        .collect()
}

fn run_kicked(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi0: &CVec,
    steps: &[CMat],
    plan: &KickPlan,
    stride: usize,
    mut rng: ChaCha8Rng,
) -> PureTrajectory {
    let mut psi = psi0.clone();
    let mut traj = PureTrajectory { times: vec![0.0], states: vec![psi.clone()] };
    for (s, u_step) in steps.iter().enumerate() {
        let widths: Vec<f64> = pulse.segment(s).iter().map(|u| (2.0 * pulse.eta * u.abs() * plan.h).sqrt()).collect();
        for _ in 0..plan.substeps {
            psi = u_step.dot(&psi);
            for (spectrum, &w) in model.control_spectra().iter().zip(&widths) {
                if w > 0.0 {
                    let g: f64 = rng.sample(StandardNormal);
                    kick(&mut psi, spectrum, w * g);
                }
            }
        }
        if (s + 1) % stride == 0 || s + 1 == steps.len() {
            traj.times.push((s + 1) as f64 * pulse.dt);
            traj.states.push(psi.clone());
        }
    }
    traj
}

/// Ensemble mean of `|psi><psi|` at the end of the pulse and its Monte-Carlo
/// standard error in Frobenius norm.
#[derive(Debug, Clone)]
pub struct EnsembleAverage {
    pub mean: CMat,
    pub standard_error: f64,
    pub trajectories: usize,
}

/// Average `n_traj` kicked trajectories. Trajectory `i` draws from stream `i`
/// of the generator seeded by `seed`, so results do not depend on
/// scheduling.
pub fn stochastic_ensemble(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi0: &CVec,
    seed: u64,
    n_traj: usize,
    opts: &StochasticOptions,
) -> Result<EnsembleAverage> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument("ensemble needs at least two trajectories".into()));
    }
    let plan = kick_plan(pulse, opts)?;
    let steps = segment_propagators(model, pulse, plan.h)?;
    let finals: Vec<CVec> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let t = run_kicked(model, pulse, psi0, &steps, &plan, pulse.n_seg(), rng);
            t.states.last().unwrap().clone()
        })
        .collect();
    let d = model.dim();
    let mut mean = Array2::<C64>::zeros((d, d));
    let mut second = Array2::<f64>::zeros((d, d));
    for psi in &finals {
        for i in 0..d {
            for j in 0..d {
                let e = psi[i] * psi[j].conj();
                mean[[i, j]] += e;
                second[[i, j]] += e.norm_sqr();
            }
        }
    }
    let m = n_traj as f64;
    mean.mapv_inplace(|z| z / m);
    let mut var_sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v = (second[[i, j]] / m - mean[[i, j]].norm_sqr()) * m / (m - 1.0);
            var_sum += v.max(0.0);
        }
    }
    Ok(EnsembleAverage { mean, standard_error: (var_sum / m).sqrt(), trajectories: n_traj })
}

/// Earliest time at which `|r(t) - r_i|` reaches `epsilon`, linearly
/// interpolated inside the bracketing sample interval.
pub fn first_passage_time(traj: &TrajectoryRecord, spec: &TransformationSpec) -> Result<Option<f64>> {
    if traj.basis_id != spec.basis_id() {
        return Err(Error::BasisMismatch);
    }
    let ri = spec.psi_i().r();
    let eps = spec.epsilon();
    let dist: Vec<f64> = traj.r_series.iter().map(|r| amplitude_distance(r, ri)).collect();
    Ok(first_crossing(&traj.times, &dist, eps))
}

pub(crate) fn first_crossing(times: &[f64], dist: &[f64], level: f64) -> Option<f64> {
    for k in 0..dist.len() {
        if dist[k] >= level {
            if k == 0 || dist[k] == level {
                return Some(times[k]);
            }
            let (d0, d1) = (dist[k - 1], dist[k]);
            let w = (level - d0) / (d1 - d0);
            return Some(times[k - 1] + w * (times[k] - times[k - 1]));
        }
    }
    None
}

/// Populations of `rho` in the drift eigenbasis, as amplitudes.
pub fn amplitudes_of(model: &ModelSystem, rho: &DensityMatrix) -> Vec<f64> {
    populations_to_r(&model.to_eigenframe(rho.entries()))
}

/// Segment boundary times `0, dt, .., T`.
pub fn segment_times(pulse: &ControlPulse) -> Array1<f64> {
    Array1::from_shape_fn(pulse.n_seg() + 1, |s| s as f64 * pulse.dt)
}
