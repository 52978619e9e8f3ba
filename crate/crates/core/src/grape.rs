//! State-to-state pulse synthesis by gradient ascent on the noiseless
//! transfer fidelity, with exact segment-exponential derivatives.

use std::cell::RefCell;
use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::ControlPulse;
use crate::linalg::{adjoint, CMat, CVec, HermitianEigen, C64};
use crate::optim::{minimize, LbfgsOptions, StopReason};
use crate::spinalg::ModelSystem;
use crate::states::AmplitudePhaseState;

/// Largest `dt * ||H||` used when choosing the segment count automatically.
pub const SEGMENT_NORM_STEP: f64 = 0.5;

/// How the target state's phases enter the fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPhases {
    /// `|<psi_f|U|psi_i>|^2` with the target phases as given.
    #[default]
    Fixed,
    /// Best overlap over all target phases, `(sum_n r_f,n |c_n(T)|)^2`; only
    /// the eigenbasis amplitudes of the target matter.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub t_total: f64,
    pub n_seg: usize,
    pub max_iter: usize,
    pub fidelity_goal: f64,
    pub amplitude_penalty: f64,
    pub seed: u64,
    pub u_init_scale: f64,
    pub target_phases: TargetPhases,
    /// Keep maximizing the penalized objective after the fidelity goal is
    /// met, until the gradient vanishes or `max_iter` is reached.
    pub polish: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            t_total: 1.0,
            n_seg: 20,
            max_iter: 500,
            fidelity_goal: 0.999,
            amplitude_penalty: 0.0,
            seed: 0,
            u_init_scale: 0.1,
            target_phases: TargetPhases::Fixed,
            polish: false,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_total > 0.0 && self.t_total.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_total must be positive, got {}", self.t_total)));
        }
        if self.n_seg < 1 {
            return Err(Error::InvalidArgument("n_seg must be >= 1".into()));
        }
        if !(self.fidelity_goal > 0.0 && self.fidelity_goal <= 1.0) {
            return Err(Error::InvalidArgument(format!("fidelity_goal must lie in (0, 1], got {}", self.fidelity_goal)));
        }
        if !(self.amplitude_penalty >= 0.0) {
            return Err(Error::InvalidArgument(format!("amplitude_penalty must be >= 0, got {}", self.amplitude_penalty)));
        }
        if !(self.u_init_scale >= 0.0 && self.u_init_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("u_init_scale must be >= 0, got {}", self.u_init_scale)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_total / self.n_seg as f64
    }
}

/// Smallest segment count with `dt * (||H0|| + sum_k u_max Lambda_k) <= 0.5`.
pub fn auto_segments(model: &ModelSystem, t_total: f64, u_max: f64) -> usize {
    let norm = model.drift_eigen().max_abs() + u_max.abs() * model.lambda().iter().sum::<f64>();
    ((t_total * norm / SEGMENT_NORM_STEP).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub pulse: ControlPulse,
    pub fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective `F - penalty * sum u^2 dt` after every accepted iteration.
    pub objective_history: Vec<f64>,
    pub config: SynthesisConfig,
}

impl SynthesisResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_inputs(model: &ModelSystem, pulse: &ControlPulse, psi_i: &AmplitudePhaseState, psi_f: &AmplitudePhaseState) -> Result<()> {
    if psi_i.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi_i.dim() });
    }
    if psi_f.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi_f.dim() });
    }
    if pulse.n_controls() != model.n_controls() {
        return Err(Error::DimensionMismatch { expected: model.n_controls(), found: pulse.n_controls() });
    }
    if psi_i.basis_id() != model.basis_id() || psi_f.basis_id() != model.basis_id() {
        return Err(Error::BasisMismatch);
    }
    Ok(())
}

fn segment_eigen(model: &ModelSystem, pulse: &ControlPulse, s: usize) -> Result<HermitianEigen> {
    let u: Vec<f64> = pulse.segment(s).to_vec();
    HermitianEigen::raw(&model.hamiltonian_eigenframe(&u))
}

/// Noiseless final state in the drift eigenbasis.
pub fn final_coefficients(model: &ModelSystem, pulse: &ControlPulse, psi_i: &AmplitudePhaseState) -> Result<CVec> {
    let mut c = psi_i.coefficients();
    for s in 0..pulse.n_seg() {
        c = segment_eigen(model, pulse, s)?.propagator(pulse.dt()).dot(&c);
    }
    Ok(c)
}

fn overlap(target: &CVec, c: &CVec) -> C64 {
    target.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Target amplitudes with the phases of `c`, which maximizes the overlap
/// over target phases.
fn phase_aligned_target(r_f: &[f64], c: &CVec) -> CVec {
    r_f.iter().zip(c.iter()).map(|(&r, z)| if z.norm() > 0.0 { z * (r / z.norm()) } else { C64::new(r, 0.0) }).collect()
}

/// `|<psi_f|U(T)|psi_i>|^2`.
pub fn fidelity(model: &ModelSystem, pulse: &ControlPulse, psi_i: &AmplitudePhaseState, psi_f: &AmplitudePhaseState) -> Result<f64> {
    fidelity_with(model, pulse, psi_i, psi_f, TargetPhases::Fixed)
}

pub fn fidelity_with(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi_i: &AmplitudePhaseState,
    psi_f: &AmplitudePhaseState,
    mode: TargetPhases,
) -> Result<f64> {
    check_inputs(model, pulse, psi_i, psi_f)?;
    let c = final_coefficients(model, pulse, psi_i)?;
    let target = match mode {
        TargetPhases::Fixed => psi_f.coefficients(),
        TargetPhases::Free => phase_aligned_target(psi_f.r(), &c),
    };
    Ok(overlap(&target, &c).norm_sqr().min(1.0))
}

/// `-i t e^{-i (a + b) t / 2} sinc((a - b) t / 2)`, the divided difference of
/// `e^{-i E t}` between `a` and `b`, stable as `a -> b`.
fn exp_divided_difference(a: f64, b: f64, t: f64) -> C64 {
    let x = 0.5 * (a - b) * t;
    let sinc = if x.abs() < 1e-4 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    C64::new(0.0, -t * sinc) * C64::from_polar(1.0, -0.5 * (a + b) * t)
}

/// Fidelity and its exact gradient with respect to every `u_{seg,k}`.
pub fn fidelity_and_gradient(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi_i: &AmplitudePhaseState,
    psi_f: &AmplitudePhaseState,
    mode: TargetPhases,
) -> Result<(f64, Array2<f64>)> {
    check_inputs(model, pulse, psi_i, psi_f)?;
    let dt = pulse.dt();
    let n_seg = pulse.n_seg();
    let eig: Vec<HermitianEigen> = (0..n_seg).map(|s| segment_eigen(model, pulse, s)).collect::<Result<_>>()?;
    let props: Vec<CMat> = eig.iter().map(|e| e.propagator(dt)).collect();

    // forward[s] is the state before segment s
    let mut forward = Vec::with_capacity(n_seg + 1);
    forward.push(psi_i.coefficients());
    for u in &props {
        let next = u.dot(forward.last().unwrap());
        forward.push(next);
    }
    let c = &forward[n_seg];
    let target = match mode {
        TargetPhases::Fixed => psi_f.coefficients(),
        TargetPhases::Free => phase_aligned_target(psi_f.r(), c),
    };
    let a = overlap(&target, c);

    let mut grad = Array2::zeros((n_seg, model.n_controls()));
    let mut chi = target;
    for s in (0..n_seg).rev() {
        let v = &eig[s].vectors;
        let vh = adjoint(&v.view());
        let chi_e = vh.dot(&chi);
        let phi_e = vh.dot(&forward[s]);
        let e = &eig[s].values;
        let d = e.len();
        for (k, x) in model.controls_eigenframe().iter().enumerate() {
            let xe = vh.dot(x).dot(v);
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..d {
                let mut row = C64::new(0.0, 0.0);
                for n in 0..d {
                    row += xe[[m, n]] * exp_divided_difference(e[m], e[n], dt) * phi_e[n];
                }
                acc += chi_e[m].conj() * row;
            }
            grad[[s, k]] = 2.0 * (a.conj() * acc).re;
        }
        chi = adjoint(&props[s].view()).dot(&chi);
    }
    Ok((a.norm_sqr().min(1.0), grad))
}

/// Gradient of [`fidelity`] with respect to every `u_{seg,k}`.
pub fn fidelity_gradient(
    model: &ModelSystem,
    pulse: &ControlPulse,
    psi_i: &AmplitudePhaseState,
    psi_f: &AmplitudePhaseState,
) -> Result<Array2<f64>> {
    Ok(fidelity_and_gradient(model, pulse, psi_i, psi_f, TargetPhases::Fixed)?.1)
}

/// Maximize `F - amplitude_penalty * sum u^2 dt` with L-BFGS from a small
/// random start, stopping as soon as `F >= fidelity_goal`.
///
/// The returned pulse carries `eta = 0`; use [`ControlPulse::with_eta`] to
/// propagate it with noise.
pub fn synthesize(
    model: &ModelSystem,
    psi_i: &AmplitudePhaseState,
    psi_f: &AmplitudePhaseState,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    let k = model.n_controls();
    let dt = cfg.dt();
    let zero = ControlPulse::new(dt, Array2::zeros((cfg.n_seg, k)), 0.0)?;
    let f0 = fidelity_with(model, &zero, psi_i, psi_f, cfg.target_phases)?;
    if f0 >= cfg.fidelity_goal {
        return Ok(SynthesisResult {
            pulse: zero,
            fidelity: f0,
            iterations: 0,
            converged: true,
            objective_history: vec![f0],
            config: cfg.clone(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0: Vec<f64> = (0..cfg.n_seg * k).map(|_| cfg.u_init_scale * rng.random_range(-1.0..1.0)).collect();
    let to_pulse = |x: &[f64]| -> Result<ControlPulse> {
        ControlPulse::new(dt, Array2::from_shape_vec((cfg.n_seg, k), x.to_vec()).expect("shape"), 0.0)
    };

    // fidelities at recently evaluated points, for the stop test
    let recent: RefCell<VecDeque<(Vec<f64>, f64)>> = RefCell::new(VecDeque::new());
    let mut failure: Option<Error> = None;
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let evaluated = to_pulse(x).and_then(|p| fidelity_and_gradient(model, &p, psi_i, psi_f, cfg.target_phases));
        match evaluated {
            Ok((f, g)) => {
                let mut r = recent.borrow_mut();
                if r.len() == 64 {
                    r.pop_front();
                }
                r.push_back((x.to_vec(), f));
                let penalty: f64 = cfg.amplitude_penalty * dt * x.iter().map(|v| v * v).sum::<f64>();
                let grad = g.iter().zip(x).map(|(gi, xi)| -(gi - 2.0 * cfg.amplitude_penalty * dt * xi)).collect();
                (-(f - penalty), grad)
            }
            Err(e) => {
                failure.get_or_insert(e);
                (f64::INFINITY, vec![0.0; x.len()])
            }
        }
    };
    let stop = |x: &[f64], _: f64| {
        !cfg.polish
            && recent.borrow().iter().rev().find(|(p, _)| p == x).is_some_and(|(_, f)| *f >= cfg.fidelity_goal)
    };
    let opts = LbfgsOptions { max_iter: cfg.max_iter, grad_tol: 1e-10, ..Default::default() };
    let m = minimize(x0, objective, &opts, stop);
    if let Some(e) = failure {
        return Err(e);
    }
    let pulse = to_pulse(&m.x)?;
    let fidelity = fidelity_with(model, &pulse, psi_i, psi_f, cfg.target_phases)?;
    Ok(SynthesisResult {
        pulse,
        fidelity,
        iterations: m.iterations,
        converged: fidelity >= cfg.fidelity_goal || m.reason == StopReason::Callback,
        objective_history: m.history.iter().map(|v| -v).collect(),
        config: cfg.clone(),
    })
}
