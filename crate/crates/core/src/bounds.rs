//! Lower bounds on the transformation time and on the purity lost while
//! changing the eigenbasis amplitudes of a pure state by at least `epsilon`.
//!
//! * time: `T >= eps^2 / (2 sum_k u_bar_k Lambda_k)`
//! * purity, general form:
//!   `dP >= 2 eps^2 eta min_l{ D_l(r_i) - 3 sqrt(2) Lambda_l^2 eps } / max_l Lambda_l`
//! * purity, scaling form: `dP >= 2 eps^2 eta N`
//!
//! `D_l(r)` is the variance of control `X_l` minimized over the phases of the
//! eigenbasis expansion at fixed amplitudes `r`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::PulseStatistics;
use crate::linalg::{CMat, CVec, C64};
use crate::optim::{minimize, LbfgsOptions};
use crate::spinalg::{ModelSystem, Operator};
use crate::states::{AmplitudePhaseState, TransformationSpec, AMPLITUDE_FLOOR};

/// `3 sqrt(2)`, the constant in the amplitude-gradient bound of the
/// phase-minimized variance.
pub const GRADIENT_BOUND_FACTOR: f64 = 3.0 * std::f64::consts::SQRT_2;

/// Multi-start settings for the phase minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSearch {
    /// Random starts, in addition to the all-zero start.
    pub starts: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for PhaseSearch {
    fn default() -> Self {
        Self { starts: 32, seed: 0x5eed, grad_tol: 1e-9, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMinimum {
    pub value: f64,
    /// Full phase vector (gauge component and empty components are zero).
    pub phases: Vec<f64>,
}

/// Variance of `X` as a function of the phases at fixed amplitudes, in the
/// drift eigenframe.
pub struct PhaseLandscape {
    x: CMat,
    r: Vec<f64>,
    /// Indices whose phases are optimized: populated components except the
    /// gauge-fixed first one.
    free: Vec<usize>,
}

impl PhaseLandscape {
    pub fn new(x: &Operator, r: &[f64], model: &ModelSystem) -> Result<Self> {
        if x.dim() != model.dim() || r.len() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: r.len() });
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        let populated: Vec<usize> = (0..r.len()).filter(|&n| r[n] > AMPLITUDE_FLOOR).collect();
        Ok(Self { x: model.to_eigenframe(x.entries()), r: r.to_vec(), free: populated.into_iter().skip(1).collect() })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn full_phases(&self, free: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.r.len()];
        for (&n, &p) in self.free.iter().zip(free) {
            phi[n] = p.rem_euclid(TAU);
        }
        phi
    }

    /// Variance and its gradient with respect to the free phases.
    pub fn evaluate(&self, free: &[f64]) -> (f64, Vec<f64>) {
        let phi = self.full_phases(free);
        let c: CVec = self.r.iter().zip(&phi).map(|(&a, &p)| C64::from_polar(a, p)).collect();
        let y = self.x.dot(&c);
        let z = self.x.dot(&y);
        let mean: f64 = c.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        let second: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        // d<X>/dphi_p = 2 Im(conj(c_p) (Xc)_p), d<X^2>/dphi_p = 2 Im(conj(c_p) (X^2 c)_p)
        let grad = self
            .free
            .iter()
            .map(|&p| {
                let cp = c[p].conj();
                2.0 * (cp * z[p]).im - 4.0 * mean * (cp * y[p]).im
            })
            .collect();
        (second - mean * mean, grad)
    }

    pub fn variance_at(&self, phi_full: &[f64]) -> f64 {
        let free: Vec<f64> = self.free.iter().map(|&n| phi_full[n]).collect();
        self.evaluate(&free).0.max(0.0)
    }

    fn descend(&self, start: Vec<f64>, search: &PhaseSearch) -> (f64, Vec<f64>) {
        let opts = LbfgsOptions { grad_tol: search.grad_tol, max_iter: search.max_iter, initial_step: 0.1, ..Default::default() };
        let m = minimize(start, |p| self.evaluate(p), &opts, |_, _| false);
        (m.value, m.x)
    }

    /// Multi-start minimization; ties go to the lowest start index.
    pub fn minimize(&self, search: &PhaseSearch) -> PhaseMinimum {
        if self.free.is_empty() {
            return PhaseMinimum { value: self.evaluate(&[]).0.max(0.0), phases: self.full_phases(&[]) };
        }
        let k = self.free.len();
        let results: Vec<(f64, Vec<f64>)> = (0..=search.starts)
            .into_par_iter()
            .map(|i| {
                let start = if i == 0 {
                    vec![0.0; k]
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
                    rng.set_stream(i as u64);
                    (0..k).map(|_| rng.random::<f64>() * TAU).collect()
                };
                self.descend(start, search)
            })
            .collect();
        let mut best = 0;
        for (i, (v, _)) in results.iter().enumerate() {
            if *v < results[best].0 {
                best = i;
            }
        }
        let (value, free) = &results[best];
        PhaseMinimum { value: value.max(0.0), phases: self.full_phases(free) }
    }

    /// Local descent from a given full phase vector.
    pub fn refine(&self, phi_full: &[f64], search: &PhaseSearch) -> PhaseMinimum {
        let start: Vec<f64> = self.free.iter().map(|&n| phi_full[n]).collect();
        let (value, free) = self.descend(start, search);
        PhaseMinimum { value: value.max(0.0), phases: self.full_phases(&free) }
    }
}

/// Minimum of `Var(X)` over the phases of `sum_n r_n e^{i phi_n} |n>`.
pub fn min_variance_over_phases(x: &Operator, r: &[f64], model: &ModelSystem) -> Result<PhaseMinimum> {
    min_variance_over_phases_with(x, r, model, &PhaseSearch::default())
}

pub fn min_variance_over_phases_with(
    x: &Operator,
    r: &[f64],
    model: &ModelSystem,
    search: &PhaseSearch,
) -> Result<PhaseMinimum> {
    Ok(PhaseLandscape::new(x, r, model)?.minimize(search))
}

/// Euclidean norm of the amplitude gradient of the phase-minimized variance,
/// by central differences with step `1e-5` on renormalized amplitudes.
///
/// The minimum at each displaced point is found by local descent from the
/// optimal phases at `r`, which keeps the difference quotient on one branch
/// of minimizers.
pub fn variance_gradient_bound_check(x: &Operator, r: &[f64], model: &ModelSystem) -> Result<f64> {
    variance_gradient_norm(x, r, model, &PhaseSearch::default(), 1e-5)
}

pub fn variance_gradient_norm(
    x: &Operator,
    r: &[f64],
    model: &ModelSystem,
    search: &PhaseSearch,
    step: f64,
) -> Result<f64> {
    if r.iter().any(|&v| v <= AMPLITUDE_FLOOR) {
        return Err(Error::NotDifferentiable);
    }
    let base = PhaseLandscape::new(x, r, model)?.minimize(search);
    let value_at = |n: usize, h: f64| -> Result<f64> {
        let mut shifted = r.to_vec();
        shifted[n] += h;
        let norm = shifted.iter().map(|v| v * v).sum::<f64>().sqrt();
        shifted.iter_mut().for_each(|v| *v /= norm);
        let land = PhaseLandscape::new(x, &shifted, model)?;
        Ok(land.refine(&base.phases, search).value)
    };
    let mut sq = 0.0;
    for n in 0..r.len() {
        let g = (value_at(n, step)? - value_at(n, -step)?) / (2.0 * step);
        sq += g * g;
    }
    Ok(sq.sqrt())
}

/// `3 sqrt(2) Lambda^2`.
pub fn gradient_bound(lambda: f64) -> f64 {
    GRADIENT_BOUND_FACTOR * lambda * lambda
}

/// `eps^2 / (2 sum_k u_bar_k Lambda_k)`.
pub fn time_lower_bound(spec: &TransformationSpec, model: &ModelSystem, stats: &PulseStatistics) -> Result<f64> {
    time_bound_from(spec.epsilon(), &stats.u_bar, model.lambda())
}

pub fn time_bound_from(epsilon: f64, u_bar: &[f64], lambda: &[f64]) -> Result<f64> {
    if u_bar.len() != lambda.len() {
        return Err(Error::DimensionMismatch { expected: lambda.len(), found: u_bar.len() });
    }
    let rate: f64 = u_bar.iter().zip(lambda).map(|(u, l)| u * l.abs()).sum();
    if rate <= 0.0 {
        return Err(Error::NoControlAction);
    }
    Ok(epsilon * epsilon / (2.0 * rate))
}

/// The `Lambda_k ~ N` form `eps^2 / (2 N sum_k u_bar_k)`.
pub fn time_lower_bound_scaled(epsilon: f64, u_bar: &[f64], n: usize) -> Result<f64> {
    let total: f64 = u_bar.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoControlAction);
    }
    Ok(epsilon * epsilon / (2.0 * n as f64 * total))
}

/// Upper bound `2 T sum_k u_bar_k Lambda_k` on the change of `<A>` over
/// `[0, T]`.
pub fn heisenberg_change_bound(stats: &PulseStatistics, lambda: &[f64]) -> f64 {
    2.0 * stats.t_total * stats.u_bar.iter().zip(lambda).map(|(u, l)| u * l.abs()).sum::<f64>()
}

/// Phase-minimized variances of every control at the initial amplitudes.
pub fn initial_min_variances(spec: &TransformationSpec, model: &ModelSystem, search: &PhaseSearch) -> Result<Vec<PhaseMinimum>> {
    if spec.basis_id() != model.basis_id() {
        return Err(Error::BasisMismatch);
    }
    model.controls().iter().map(|x| min_variance_over_phases_with(x, spec.psi_i().r(), model, search)).collect()
}

/// General purity bound from precomputed minimized variances, clamped at
/// zero when the bracket is negative.
pub fn purity_bound_from(epsilon: f64, eta: f64, min_variances: &[f64], lambda: &[f64]) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let bracket = min_variances
        .iter()
        .zip(lambda)
        .map(|(v, l)| v - GRADIENT_BOUND_FACTOR * l * l * epsilon)
        .fold(f64::INFINITY, f64::min);
    let lmax = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if lmax == 0.0 {
        return 0.0;
    }
    (2.0 * epsilon * epsilon * eta * bracket / lmax).max(0.0)
}

/// General purity-loss lower bound for the transformation.
pub fn purity_lower_bound(spec: &TransformationSpec, model: &ModelSystem, eta: f64, search: &PhaseSearch) -> Result<f64> {
    if eta < 0.0 {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let mins: Vec<f64> = initial_min_variances(spec, model, search)?.into_iter().map(|m| m.value).collect();
    Ok(purity_bound_from(spec.epsilon(), eta, &mins, model.lambda()))
}

/// `2 eps^2 eta N`.
pub fn scaling_bound(epsilon: f64, eta: f64, n: usize) -> f64 {
    2.0 * epsilon * epsilon * eta * n as f64
}

/// Largest `epsilon` for which the general bound's bracket stays at least
/// half of the smallest minimized variance: `D_min / (6 sqrt(2) Lambda_max^2)`.
pub fn small_epsilon_threshold(min_variances: &[f64], lambda: &[f64]) -> f64 {
    let dmin = min_variances.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    dmin / (2.0 * GRADIENT_BOUND_FACTOR * lmax * lmax)
}

/// Single drift eigenstate as an amplitude/phase state.
pub fn eigenstate_initial_condition(model: &ModelSystem, which: usize) -> Result<AmplitudePhaseState> {
    let d = model.dim();
    if which >= d {
        return Err(Error::InvalidArgument(format!("eigenstate index {which} out of range for dimension {d}")));
    }
    let mut r = vec![0.0; d];
    r[which] = 1.0;
    AmplitudePhaseState::from_amplitudes(r, model.basis_id())
}

/// Echo of every input that entered a [`BoundReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub eta: f64,
    pub u_bar: Vec<f64>,
    pub lambda: Vec<f64>,
    pub n: usize,
    pub t_window: f64,
    pub phase_search: PhaseSearch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    /// `None` when all controls vanish on the window (no finite bound).
    pub t_bound: Option<f64>,
    pub t_bound_scaled: Option<f64>,
    pub dp_bound_general: f64,
    pub dp_bound_scaling: f64,
    pub min_variances: Vec<f64>,
    pub phases_opt: Vec<Vec<f64>>,
    pub small_epsilon_threshold: f64,
    /// Whether `epsilon` is below [`small_epsilon_threshold`].
    pub scaling_regime: bool,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluate every bound for a transformation and a pulse window.
pub fn bound_report(
    spec: &TransformationSpec,
    model: &ModelSystem,
    stats: &PulseStatistics,
    eta: f64,
    search: &PhaseSearch,
) -> Result<BoundReport> {
    bound_report_with_lambda(spec, model, stats, eta, search, model.lambda())
}

/// As [`bound_report`] with explicit `Lambda_k`; used to test the checker
/// against deliberately wrong inputs.
pub fn bound_report_with_lambda(
    spec: &TransformationSpec,
    model: &ModelSystem,
    stats: &PulseStatistics,
    eta: f64,
    search: &PhaseSearch,
    lambda: &[f64],
) -> Result<BoundReport> {
    let eps = spec.epsilon();
    let n = model.size_param();
    let mins = initial_min_variances(spec, model, search)?;
    let min_variances: Vec<f64> = mins.iter().map(|m| m.value).collect();
    let threshold = small_epsilon_threshold(&min_variances, lambda);
    let t_bound = match time_bound_from(eps, &stats.u_bar, lambda) {
        Ok(v) => Some(v),
        Err(Error::NoControlAction) => None,
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        schema_version: 1,
        t_bound,
        t_bound_scaled: time_lower_bound_scaled(eps, &stats.u_bar, n).ok(),
        dp_bound_general: purity_bound_from(eps, eta, &min_variances, lambda),
        dp_bound_scaling: scaling_bound(eps, eta, n),
        min_variances,
        phases_opt: mins.into_iter().map(|m| m.phases).collect(),
        small_epsilon_threshold: threshold,
        scaling_regime: eps <= threshold,
        inputs: BoundInputs {
            epsilon: eps,
            eta,
            u_bar: stats.u_bar.clone(),
            lambda: lambda.to_vec(),
            n,
            t_window: stats.t_total,
            phase_search: *search,
        },
    })
}
