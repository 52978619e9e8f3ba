//! su(2) generators, the double-well model and generic operator utilities.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{adjoint, frobenius_norm, hermiticity_error, CMat, HermitianEigen, C64, I};

/// Tolerance used when validating Hermitian operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Numerical rank threshold for Lie-closure detection (relative to the unit
/// norm of the orthonormalized basis elements).
pub const CLOSURE_RANK_TOL: f64 = 1e-9;

/// Dense square operator on a `dim`-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    entries: CMat,
}

impl Operator {
    pub fn new(entries: CMat) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, found: c });
        }
        if r < 2 {
            return Err(Error::InvalidArgument(format!("operator dimension must be >= 2, got {r}")));
        }
        Ok(Self { entries })
    }

    /// Like [`Operator::new`] but rejects non-Hermitian input.
    pub fn hermitian(entries: CMat) -> Result<Self> {
        let op = Self::new(entries)?;
        let err = hermiticity_error(&op.entries);
        if err > HERMITIAN_TOL {
            return Err(Error::NotHermitian(err));
        }
        Ok(op)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Array2::eye(dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(Array2::zeros((dim, dim)))
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

    pub fn is_hermitian(&self) -> bool {
        hermiticity_error(&self.entries) <= HERMITIAN_TOL
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator { entries: self.entries.mapv(|z| z * s) }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        check_dims(self, other)?;
        Ok(Operator { entries: &self.entries + &other.entries })
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        check_dims(self, other)?;
        Ok(Operator { entries: self.entries.dot(&other.entries) })
    }

    /// `u * self * u^dagger`.
    pub fn conjugate_by(&self, u: &CMat) -> Result<Operator> {
        if u.dim() != self.entries.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        Ok(Operator { entries: u.dot(&self.entries).dot(&adjoint(&u.view())) })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(&self.entries)
    }
}

fn check_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// `a b - b a`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims(a, b)?;
    Ok(Operator { entries: a.entries.dot(&b.entries) - b.entries.dot(&a.entries) })
}

/// Largest absolute eigenvalue of a Hermitian operator.
pub fn max_abs_eigenvalue(x: &Operator) -> Result<f64> {
    let err = hermiticity_error(x.entries());
    if err > HERMITIAN_TOL {
        return Err(Error::NotHermitian(err));
    }
    Ok(HermitianEigen::raw(x.entries())?.max_abs())
}

/// Spin-`N/2` angular momentum matrices `(Jx, Jy, Jz)` in the `|j, m>` basis
/// ordered `m = j, j-1, ..., -j`.
pub fn su2_generators(n: usize) -> Result<(Operator, Operator, Operator)> {
    if n < 1 {
        return Err(Error::InvalidArgument(format!("invalid N = {n}; need N >= 1")));
    }
    let d = n + 1;
    let j = n as f64 / 2.0;
    let m = |i: usize| j - i as f64;
    let mut jz = Array2::zeros((d, d));
    let mut jp = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        jz[[i, i]] = C64::new(m(i), 0.0);
    }
    // J+ |j, m> = sqrt(j(j+1) - m(m+1)) |j, m+1>, and |m+1> sits one row up.
    for i in 1..d {
        let mi = m(i);
        jp[[i - 1, i]] = C64::new((j * (j + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0);
    }
    let jm = adjoint(&jp.view());
    let jx = (&jp + &jm).mapv(|z| z * 0.5);
    let jy = (&jp - &jm).mapv(|z| z * C64::new(0.0, -0.5));
    Ok((Operator::new(jx)?, Operator::new(jy)?, Operator::new(jz)?))
}

/// Fingerprint of a model eigenbasis, used to reject amplitude vectors from
/// different bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BasisId(pub u64);

/// Drift Hamiltonian, control operators and the drift eigenbasis.
#[derive(Debug, Clone)]
pub struct ModelSystem {
    h0: Operator,
    controls: Vec<Operator>,
    lambda: Vec<f64>,
    eigen: HermitianEigen,
    basis_id: BasisId,
    // X_k expressed in the drift eigenbasis, V^dagger X_k V
    controls_eigenframe: Vec<CMat>,
    control_spectra: Vec<HermitianEigen>,
}

impl ModelSystem {
    pub fn new(h0: Operator, controls: Vec<Operator>) -> Result<Self> {
        if !h0.is_hermitian() {
            return Err(Error::NotHermitian(hermiticity_error(h0.entries())));
        }
        if controls.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one control operator".into()));
        }
        for x in &controls {
            check_dims(&h0, x)?;
            if !x.is_hermitian() {
                return Err(Error::NotHermitian(hermiticity_error(x.entries())));
            }
        }
        let eigen = HermitianEigen::new(h0.entries())?;
        let v = &eigen.vectors;
        let vh = adjoint(&v.view());
        let controls_eigenframe = controls.iter().map(|x| vh.dot(x.entries()).dot(v)).collect();
        let control_spectra = controls
            .iter()
            .map(|x| HermitianEigen::raw(x.entries()))
            .collect::<Result<Vec<_>>>()?;
        let lambda = control_spectra.iter().map(HermitianEigen::max_abs).collect();

        let mut hasher = DefaultHasher::new();
        for z in v.iter() {
            // quantize so that the fingerprint is insensitive to last-bit noise
            ((z.re * 1e9).round() as i64).hash(&mut hasher);
            ((z.im * 1e9).round() as i64).hash(&mut hasher);
        }
        Ok(Self {
            h0,
            controls,
            lambda,
            eigen,
            basis_id: BasisId(hasher.finish()),
            controls_eigenframe,
            control_spectra,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// `N = d - 1`, the representation size parameter.
    pub fn size_param(&self) -> usize {
        self.dim() - 1
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn controls(&self) -> &[Operator] {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn eigen_basis(&self) -> &CMat {
        &self.eigen.vectors
    }

    pub fn eigen_values(&self) -> &Array1<f64> {
        &self.eigen.values
    }

    pub fn drift_eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    pub fn controls_eigenframe(&self) -> &[CMat] {
        &self.controls_eigenframe
    }

    pub fn control_spectra(&self) -> &[HermitianEigen] {
        &self.control_spectra
    }

    /// Express an arbitrary operator in the drift eigenbasis.
    pub fn to_eigenframe(&self, x: &CMat) -> CMat {
        let v = &self.eigen.vectors;
        adjoint(&v.view()).dot(x).dot(v)
    }

    /// `H0 + sum_k u_k X_k`.
    pub fn hamiltonian(&self, u: &[f64]) -> CMat {
        let mut h = self.h0.entries().clone();
        for (x, &uk) in self.controls.iter().zip(u) {
            if uk != 0.0 {
                h.scaled_add(C64::new(uk, 0.0), x.entries());
            }
        }
        h
    }

    /// Same Hamiltonian expressed in the drift eigenbasis.
    pub fn hamiltonian_eigenframe(&self, u: &[f64]) -> CMat {
        let mut h = Array2::from_diag(&self.eigen.values.mapv(|e| C64::new(e, 0.0)));
        for (x, &uk) in self.controls_eigenframe.iter().zip(u) {
            if uk != 0.0 {
                h.scaled_add(C64::new(uk, 0.0), x);
            }
        }
        h
    }

    /// The same model with `H0` and every control conjugated by `u`.
    pub fn conjugated(&self, u: &CMat) -> Result<ModelSystem> {
        let h0 = self.h0.conjugate_by(u)?;
        let controls = self.controls.iter().map(|x| x.conjugate_by(u)).collect::<Result<Vec<_>>>()?;
        ModelSystem::new(h0, controls)
    }
}

/// Double-well Bose-Hubbard model in the Schwinger representation:
/// `H0 = -omega Jx + delta Jz + (U/N) Jz^2` with controls `[Jx, Jz]`.
pub fn double_well_model(n: usize, omega: f64, delta: f64, u_int: f64) -> Result<ModelSystem> {
    let (jx, _jy, jz) = su2_generators(n)?;
    let jz2 = jz.matmul(&jz)?;
    let h0 = jx.scale(-omega).add(&jz.scale(delta))?.add(&jz2.scale(u_int / n as f64))?;
    ModelSystem::new(h0, vec![jx, jz])
}

/// Dimension of the real Lie algebra generated by `i H0` and `i X_k`.
///
/// Identity components are projected out first since they only generate a
/// global phase, so full controllability shows up as `d^2 - 1`.
pub fn lie_closure_rank(model: &ModelSystem) -> usize {
    let mut generators = vec![model.h0().entries().clone()];
    generators.extend(model.controls().iter().map(|x| x.entries().clone()));
    lie_closure_rank_of(&generators)
}

/// Closure of the Hermitian generators under `(a, b) -> i[a, b]`, returning
/// the dimension of their real span after traceless projection.
pub fn lie_closure_rank_of(generators: &[CMat]) -> usize {
    let d = generators[0].nrows();
    let full = d * d - 1;
    let mut basis: Vec<CMat> = Vec::new();

    let mut frontier = Vec::new();
    for g in generators {
        let mut t = g.clone();
        let shift = crate::linalg::trace(&t) / d as f64;
        for i in 0..d {
            t[[i, i]] -= shift;
        }
        if try_extend(&mut basis, t) {
            frontier.push(basis.len() - 1);
        }
    }

    while !frontier.is_empty() && basis.len() < full {
        let mut next = Vec::new();
        for &a in &frontier {
            let mut b = 0;
            while b < basis.len() && basis.len() < full {
                let ab = basis[a].dot(&basis[b]);
                let ba = basis[b].dot(&basis[a]);
                let c = (ab - ba).mapv(|z| z * I);
                if try_extend(&mut basis, c) {
                    next.push(basis.len() - 1);
                }
                b += 1;
            }
        }
        frontier = next;
    }
    basis.len()
}

fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Orthonormalize `c` against `basis` (two Gram-Schmidt passes) and append it
/// if its residual is above the rank threshold.
fn try_extend(basis: &mut Vec<CMat>, mut c: CMat) -> bool {
    let n0 = frobenius_norm(&c);
    if n0 < 1e-14 {
        return false;
    }
    c.mapv_inplace(|z| z / n0);
    for _ in 0..2 {
        for b in basis.iter() {
            let p = real_inner(b, &c);
            c.scaled_add(C64::new(-p, 0.0), b);
        }
    }
    let n = frobenius_norm(&c);
    if n > CLOSURE_RANK_TOL {
        c.mapv_inplace(|z| z / n);
        basis.push(c);
        true
    } else {
        false
    }
}
