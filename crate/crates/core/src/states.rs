//! Pure states in amplitude/phase form, density matrices, and the
//! state-level quantities entering the purity-loss argument.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{adjoint, hermiticity_error, inner, trace, vec_norm, CMat, CVec, HermitianEigen, C64};
use crate::spinalg::{su2_generators, BasisId, ModelSystem, Operator};

pub const NORM_TOL: f64 = 1e-10;
/// Amplitudes at or below this are treated as zero for gauge fixing.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Relative population above which a level anchors the band of
/// [`random_transformation_in_band`].
pub const BAND_POPULATION: f64 = 1e-2;

/// Pure state `sum_n r_n e^{i phi_n} |n>` over the drift eigenbasis `|n>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudePhaseState {
    r: Vec<f64>,
    phi: Vec<f64>,
    basis_id: BasisId,
}

impl AmplitudePhaseState {
    /// Builds a canonical state: amplitudes must be nonnegative and unit-norm;
    /// phases are wrapped to `[0, 2pi)` relative to the first non-negligible
    /// amplitude.
    pub fn new(r: Vec<f64>, phi: Vec<f64>, basis_id: BasisId) -> Result<Self> {
        if r.len() != phi.len() {
            return Err(Error::DimensionMismatch { expected: r.len(), found: phi.len() });
        }
        if let Some(bad) = r.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude {bad} is not a nonnegative number")));
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let mut state = Self { r, phi, basis_id };
        state.fix_gauge();
        Ok(state)
    }

    /// Amplitudes only, all phases zero.
    pub fn from_amplitudes(r: Vec<f64>, basis_id: BasisId) -> Result<Self> {
        let phi = vec![0.0; r.len()];
        Self::new(r, phi, basis_id)
    }

    fn fix_gauge(&mut self) {
        let reference = self.r.iter().position(|&x| x > AMPLITUDE_FLOOR).map(|i| self.phi[i]).unwrap_or(0.0);
        for (p, &a) in self.phi.iter_mut().zip(&self.r) {
            *p = if a > AMPLITUDE_FLOOR { (*p - reference).rem_euclid(TAU) } else { 0.0 };
            if *p >= TAU {
                *p = 0.0;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    /// Coefficients `r_n e^{i phi_n}` in the drift eigenbasis.
    pub fn coefficients(&self) -> CVec {
        self.r.iter().zip(&self.phi).map(|(&a, &p)| C64::from_polar(a, p)).collect()
    }

    /// State vector in the computational basis.
    pub fn to_vector(&self, model: &ModelSystem) -> Result<CVec> {
        check_basis(self.basis_id, model.basis_id())?;
        Ok(model.eigen_basis().dot(&self.coefficients()))
    }
}

fn check_basis(a: BasisId, b: BasisId) -> Result<()> {
    if a != b {
        return Err(Error::BasisMismatch);
    }
    Ok(())
}

/// Expand a normalized vector in the model's drift eigenbasis.
pub fn to_eigenbasis(psi: &CVec, model: &ModelSystem) -> Result<AmplitudePhaseState> {
    if psi.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi.len() });
    }
    let norm = vec_norm(psi);
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm));
    }
    let c = adjoint(&model.eigen_basis().view()).dot(psi);
    let r: Vec<f64> = c.iter().map(|z| z.norm()).collect();
    let phi: Vec<f64> = c.iter().map(|z| z.arg()).collect();
    // `r` inherits the floating-point norm of `psi`; rescale to unit length.
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    AmplitudePhaseState::new(r.into_iter().map(|x| x / rn).collect(), phi, model.basis_id())
}

/// Validated density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMat,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = 1e-8;

    pub fn new(entries: CMat) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, found: c });
        }
        let herm = hermiticity_error(&entries);
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let rho = Self { entries };
        let tr = rho.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr} != 1")));
        }
        let min = rho.min_eigenvalue()?;
        if min < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidArgument(format!("density matrix has eigenvalue {min:e} < 0")));
        }
        Ok(rho)
    }

    /// Skips validation; used for propagated states whose invariants are
    /// checked separately.
    pub fn from_entries_unchecked(entries: CMat) -> Self {
        Self { entries }
    }

    pub fn pure(psi: &CVec) -> Result<Self> {
        let norm = vec_norm(psi);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let d = psi.len();
        let entries = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        Ok(Self { entries })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { entries: Array2::eye(d).mapv(|z: C64| z / d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        trace(&self.entries).re
    }

    pub fn trace_error(&self) -> f64 {
        (trace(&self.entries) - C64::new(1.0, 0.0)).norm()
    }

    pub fn hermiticity_drift(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        // symmetrize so that LAPACK sees an exactly Hermitian input
        let h = (&self.entries + &adjoint(&self.entries.view())).mapv(|z| z * 0.5);
        Ok(h.eigvalsh(UPLO::Upper)?[0])
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        purity(self)
    }

    /// `u rho u^dagger`.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        Self { entries: u.dot(&self.entries).dot(&adjoint(&u.view())) }
    }

    /// Populations `<n|rho|n>` in the model's drift eigenbasis.
    pub fn eigenbasis_populations(&self, model: &ModelSystem) -> Vec<f64> {
        let rho_e = model.to_eigenframe(&self.entries);
        rho_e.diag().iter().map(|z| z.re).collect()
    }
}

/// `Tr(rho^2)`, computed as the squared Frobenius norm of the Hermitian `rho`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.entries.iter().map(|z| z.norm_sqr()).sum()
}

/// `<psi|X^2|psi> - <psi|X|psi>^2` for Hermitian `X`, clamped at zero.
pub fn variance(x: &Operator, psi: &AmplitudePhaseState, model: &ModelSystem) -> Result<f64> {
    if x.dim() != model.dim() || psi.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x.dim().min(psi.dim()) });
    }
    let v = psi.to_vector(model)?;
    Ok(variance_of_vector(x.entries(), &v))
}

/// Variance of a Hermitian matrix in a normalized vector.
pub fn variance_of_vector(x: &CMat, psi: &CVec) -> f64 {
    let y = x.dot(psi);
    let mean = inner(psi, &y).re;
    let second = inner(&y, &y).re;
    (second - mean * mean).max(0.0)
}

/// Instantaneous purity-loss rate `4 eta sum_k |u_k| Var(X_k)` of a pure
/// state under the dephasing master equation.
pub fn purity_loss_rate(model: &ModelSystem, u: &[f64], psi: &AmplitudePhaseState, eta: f64) -> Result<f64> {
    if u.len() != model.n_controls() {
        return Err(Error::DimensionMismatch { expected: model.n_controls(), found: u.len() });
    }
    if eta < 0.0 {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let v = psi.to_vector(model)?;
    let mut rate = 0.0;
    for (x, &uk) in model.controls().iter().zip(u) {
        if uk != 0.0 {
            rate += uk.abs() * variance_of_vector(x.entries(), &v);
        }
    }
    Ok(4.0 * eta * rate)
}

/// Initial/final state pair with the minimal amplitude change `epsilon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformationSpec {
    psi_i: AmplitudePhaseState,
    psi_f: AmplitudePhaseState,
    epsilon: f64,
}

impl TransformationSpec {
    pub fn new(psi_i: AmplitudePhaseState, psi_f: AmplitudePhaseState, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        check_basis(psi_i.basis_id, psi_f.basis_id)?;
        let spec = Self { psi_i, psi_f, epsilon };
        let dr = delta_r_norm(&spec)?;
        if dr < epsilon {
            return Err(Error::InvalidArgument(format!("|dr| = {dr} is below epsilon = {epsilon}")));
        }
        if dr >= 1.0 {
            return Err(Error::InvalidArgument(format!("|dr| = {dr} is not small (>= 1)")));
        }
        Ok(spec)
    }

    pub fn psi_i(&self) -> &AmplitudePhaseState {
        &self.psi_i
    }

    pub fn psi_f(&self) -> &AmplitudePhaseState {
        &self.psi_f
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn basis_id(&self) -> BasisId {
        self.psi_i.basis_id
    }

    pub fn delta_r(&self) -> Vec<f64> {
        self.psi_f.r.iter().zip(&self.psi_i.r).map(|(f, i)| f - i).collect()
    }
}

/// Euclidean norm of `r_f - r_i`.
pub fn delta_r_norm(spec: &TransformationSpec) -> Result<f64> {
    check_basis(spec.psi_i.basis_id, spec.psi_f.basis_id)?;
    Ok(amplitude_distance(&spec.psi_i.r, &spec.psi_f.r))
}

pub fn amplitude_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Signs `s_n = sign(dr_n)` with `sign(0) = +1`.
pub fn aux_signs(spec: &TransformationSpec) -> Vec<f64> {
    spec.delta_r().into_iter().map(|d| if d < 0.0 { -1.0 } else { 1.0 }).collect()
}

/// `A = sum_n s_n |n><n|` in the computational basis. It commutes with `H0`
/// and `<A>_f - <A>_i >= |dr|^2`.
pub fn aux_operator(spec: &TransformationSpec, model: &ModelSystem) -> Result<Operator> {
    check_basis(spec.basis_id(), model.basis_id())?;
    let s = Array1::from(aux_signs(spec)).mapv(|x| C64::new(x, 0.0));
    Operator::new(model.drift_eigen().reconstruct_with(&s))
}

/// `<A>` for a state with amplitudes `r`, using the diagonal form of `A`.
pub fn aux_expectation(signs: &[f64], r: &[f64]) -> f64 {
    signs.iter().zip(r).map(|(s, a)| s * a * a).sum()
}

/// Random amplitude target at Euclidean distance `distance` from `r_i`.
///
/// A random direction is drawn (nonnegative on components where `r_i` is
/// zero so that amplitudes stay nonnegative), and its scale is bisected so
/// that the renormalized amplitudes sit exactly `distance` away. Phases of
/// populated components are inherited from `psi_i`.
pub fn random_transformation(psi_i: &AmplitudePhaseState, distance: f64, seed: u64) -> Result<AmplitudePhaseState> {
    random_transformation_in_band(psi_i, distance, None, seed)
}

/// As [`random_transformation`], with the direction restricted to levels
/// within `band` indices of a level holding at least [`BAND_POPULATION`]
/// times the largest population (`None` allows all levels).
///
/// Eigenstates far away in the spectrum are reached only through high-order
/// transitions, so a narrow band keeps targets cheap to synthesize at large
/// dimension.
pub fn random_transformation_in_band(
    psi_i: &AmplitudePhaseState,
    distance: f64,
    band: Option<usize>,
    seed: u64,
) -> Result<AmplitudePhaseState> {
    if !(distance > 0.0 && distance < 1.0) {
        return Err(Error::InvalidArgument(format!("target distance must lie in (0, 1), got {distance}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = psi_i.dim();
    let ri = &psi_i.r;
    let max_pop = ri.iter().fold(0.0f64, |m, a| m.max(a * a));
    let populated: Vec<usize> = (0..d).filter(|&n| ri[n] * ri[n] >= BAND_POPULATION * max_pop).collect();
    let in_band = |n: usize| band.is_none_or(|w| populated.iter().any(|&p| p.abs_diff(n) <= w));
    let dir: Vec<f64> = (0..d)
        .map(|n| {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            if !in_band(n) {
                0.0
            } else if ri[n] <= AMPLITUDE_FLOOR {
                g.abs()
            } else {
                g
            }
        })
        .collect();
    let candidate = |s: f64| -> Vec<f64> {
        let v: Vec<f64> = ri.iter().zip(&dir).map(|(a, b)| (a + s * b).abs()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    };
    let mut hi = 1e-3;
    while amplitude_distance(ri, &candidate(hi)) < distance {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidArgument(format!("cannot reach amplitude distance {distance}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if amplitude_distance(ri, &candidate(mid)) < distance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = candidate(hi);
    let phi = r
        .iter()
        .zip(ri.iter().zip(&psi_i.phi))
        .map(|(_, (&a, &p))| if a > AMPLITUDE_FLOOR { p } else { 0.0 })
        .collect();
    AmplitudePhaseState::new(r, phi, psi_i.basis_id)
}

/// Spin-coherent state `exp(-i phi Jz) exp(-i theta Jy) |j, j>` in the
/// `|j, m>` basis, `j = N/2`.
pub fn spin_coherent_state(n: usize, theta: f64, phi: f64) -> Result<CVec> {
    let (_, jy, jz) = su2_generators(n)?;
    let mut top = Array1::zeros(n + 1);
    top[0] = C64::new(1.0, 0.0);
    let rot_y = HermitianEigen::raw(jy.entries())?.propagator(theta);
    let v = rot_y.dot(&top);
    let phases: CVec = jz.entries().diag().mapv(|m| C64::from_polar(1.0, -m.re * phi));
    Ok(&v * &phases)
}

/// `(|j, j> + |j, -j>) / sqrt(2)`, whose `Jz` variance is `j^2`.
pub fn extremal_superposition(n: usize) -> CVec {
    let mut v = Array1::zeros(n + 1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v[0] = C64::new(s, 0.0);
    v[n] += C64::new(s, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::double_well_model;

    fn model() -> ModelSystem {
        double_well_model(4, 1.0, 0.3, 1.7).unwrap()
    }

    fn basis_vec(model: &ModelSystem, n: usize) -> CVec {
        model.eigen_basis().column(n).to_owned()
    }

    #[test]
    fn eigenvector_expands_to_unit_amplitude() {
        let m = model();
        let s = to_eigenbasis(&basis_vec(&m, 0), &m).unwrap();
        assert!((s.r()[0] - 1.0).abs() < 1e-12);
        assert!(s.r()[1..].iter().all(|&x| x < 1e-12));
        assert!(s.phi().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn two_level_superposition() {
        let m = model();
        let psi = (basis_vec(&m, 0) + basis_vec(&m, 1)).mapv(|z| z * std::f64::consts::FRAC_1_SQRT_2);
        let s = to_eigenbasis(&psi, &m).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.r()[0] - h).abs() < 1e-12 && (s.r()[1] - h).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let m = model();
        let psi = basis_vec(&m, 0).mapv(|z| z * 1.1);
        assert!(matches!(to_eigenbasis(&psi, &m), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn purity_examples() {
        let m = model();
        let rho = DensityMatrix::pure(&basis_vec(&m, 2)).unwrap();
        assert!((purity(&rho) - 1.0).abs() < 1e-14);
        assert!((purity(&DensityMatrix::maximally_mixed(4)) - 0.25).abs() < 1e-15);
        let mut e = Array2::zeros((2, 2));
        e[[0, 0]] = C64::new(0.7, 0.0);
        e[[1, 1]] = C64::new(0.3, 0.0);
        let rho = DensityMatrix::new(e).unwrap();
        assert!((purity(&rho) - 0.58).abs() < 1e-15);
    }

    #[test]
    fn density_matrix_validation() {
        let mut e = Array2::zeros((2, 2));
        e[[0, 0]] = C64::new(1.2, 0.0);
        e[[1, 1]] = C64::new(-0.2, 0.0);
        assert!(DensityMatrix::new(e).is_err());
        let mut e = Array2::zeros((2, 2));
        e[[0, 0]] = C64::new(0.5, 0.0);
        e[[1, 1]] = C64::new(0.4, 0.0);
        assert!(DensityMatrix::new(e).is_err());
    }

    #[test]
    fn variance_examples() {
        let n = 6;
        let (jx, _, jz) = su2_generators(n).unwrap();
        // H0 = Jz keeps the eigenbasis equal to the |j, m> basis up to ordering
        let m = ModelSystem::new(jz.clone(), vec![jx.clone(), jz.clone()]).unwrap();
        let mut top = Array1::zeros(n + 1);
        top[0] = C64::new(1.0, 0.0);
        let s = to_eigenbasis(&top, &m).unwrap();
        assert!(variance(&jz, &s, &m).unwrap() < 1e-14);

        let ghz = to_eigenbasis(&extremal_superposition(n), &m).unwrap();
        assert!((variance(&jz, &ghz, &m).unwrap() - 9.0).abs() < 1e-12);

        let coh = to_eigenbasis(&spin_coherent_state(n, std::f64::consts::FRAC_PI_2, 0.0).unwrap(), &m).unwrap();
        assert!((variance(&jz, &coh, &m).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn purity_loss_rate_examples() {
        let m = double_well_model(2, 1.0, 0.3, 1.7).unwrap();
        let mut top = Array1::zeros(3);
        top[0] = C64::new(1.0, 0.0);
        let s = to_eigenbasis(&top, &m).unwrap();
        assert_eq!(purity_loss_rate(&m, &[1.0, 2.0], &s, 0.0).unwrap(), 0.0);
        let rate = purity_loss_rate(&m, &[1.0, 0.0], &s, 0.01).unwrap();
        assert!((rate - 0.02).abs() < 1e-14, "{rate}");
        // |j, j> is a Jz eigenstate, so driving Jz alone costs nothing
        assert!(purity_loss_rate(&m, &[0.0, 3.0], &s, 0.5).unwrap() < 1e-14);
    }

    #[test]
    fn delta_r_examples() {
        let b = BasisId(7);
        let a = AmplitudePhaseState::from_amplitudes(vec![1.0, 0.0], b).unwrap();
        let c = AmplitudePhaseState::from_amplitudes(vec![0.0, 1.0], b).unwrap();
        assert!((amplitude_distance(a.r(), c.r()) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(amplitude_distance(a.r(), a.r()), 0.0);
        let i = AmplitudePhaseState::from_amplitudes(vec![0.8, 0.6], b).unwrap();
        let f = AmplitudePhaseState::from_amplitudes(vec![0.6, 0.8], b).unwrap();
        let spec = TransformationSpec::new(i, f, 0.2).unwrap();
        assert!((delta_r_norm(&spec).unwrap() - 0.08f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let a = AmplitudePhaseState::from_amplitudes(vec![0.8, 0.6], BasisId(1)).unwrap();
        let b = AmplitudePhaseState::from_amplitudes(vec![0.6, 0.8], BasisId(2)).unwrap();
        assert!(matches!(TransformationSpec::new(a, b, 0.1), Err(Error::BasisMismatch)));
    }

    #[test]
    fn aux_operator_three_level_example() {
        let m = double_well_model(2, 1.0, 0.3, 1.7).unwrap();
        let b = m.basis_id();
        let i = AmplitudePhaseState::from_amplitudes(vec![0.8, 0.6, 0.0], b).unwrap();
        let f = AmplitudePhaseState::from_amplitudes(vec![0.6, 0.8, 0.0], b).unwrap();
        let spec = TransformationSpec::new(i, f, 0.25).unwrap();
        assert_eq!(aux_signs(&spec), vec![-1.0, 1.0, 1.0]);
        let s = aux_signs(&spec);
        let change = aux_expectation(&s, spec.psi_f().r()) - aux_expectation(&s, spec.psi_i().r());
        assert!((change - 0.56).abs() < 1e-14);
        assert!(change >= 0.08);

        let a = aux_operator(&spec, &m).unwrap();
        let c = crate::spinalg::commutator(&a, m.h0()).unwrap();
        assert!(c.frobenius_norm() < 1e-10);
    }

    #[test]
    fn aux_operator_is_identity_for_positive_changes() {
        let m = double_well_model(1, 1.0, 0.3, 0.0).unwrap();
        let b = m.basis_id();
        // dr = (0, +) with sign(0) = +1
        let i = AmplitudePhaseState::from_amplitudes(vec![1.0, 0.0], b).unwrap();
        let f = AmplitudePhaseState::from_amplitudes(vec![1.0, 0.0], b).unwrap();
        assert_eq!(aux_signs(&TransformationSpec { psi_i: i, psi_f: f, epsilon: 0.1 }), vec![1.0, 1.0]);
    }

    #[test]
    fn random_transformation_hits_distance() {
        let m = model();
        let psi = to_eigenbasis(&basis_vec(&m, 2), &m).unwrap();
        for seed in 0..20 {
            let t = random_transformation(&psi, 0.075, seed).unwrap();
            assert!((amplitude_distance(psi.r(), t.r()) - 0.075).abs() < 1e-12);
            assert!(t.r().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn banded_transformation_stays_in_band() {
        let m = double_well_model(12, 1.0, 0.3, 1.7).unwrap();
        let psi = AmplitudePhaseState::from_amplitudes((0..13).map(|n| if n == 6 { 1.0 } else { 0.0 }).collect(), m.basis_id()).unwrap();
        for seed in 0..10 {
            let t = random_transformation_in_band(&psi, 0.075, Some(2), seed).unwrap();
            assert!((amplitude_distance(psi.r(), t.r()) - 0.075).abs() < 1e-12);
            for n in (0..4).chain(9..13) {
                assert_eq!(t.r()[n], 0.0);
            }
        }
    }
}
