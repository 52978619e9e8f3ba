//! Dense complex matrix helpers shared by every module.
//!
//! Matrices are `ndarray` arrays of `Complex64`; products go through BLAS and
//! Hermitian eigendecompositions through LAPACK.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::Result;

pub type C64 = Complex64;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Relative gap below which neighbouring eigenvalues are treated as one
/// degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-9;

pub fn adjoint(a: &ArrayView2<C64>) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn identity(d: usize) -> CMat {
    Array2::eye(d)
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest elementwise deviation `|a - a^dagger|`.
pub fn hermiticity_error(a: &CMat) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// `a - a^dagger`. For Hermitian `h` and `rho`, `[h, rho]` is this applied
/// to the single product `h rho`.
pub fn anti_hermitian_part_x2(a: &CMat) -> CMat {
    a - &adjoint(&a.view())
}

/// `a + a^dagger`.
pub fn hermitian_part_x2(a: &CMat) -> CMat {
    a + &adjoint(&a.view())
}

pub fn matvec(a: &CMat, v: &CVec) -> CVec {
    a.dot(v)
}

pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `eigh` on a column-major copy. Row-major input reaches LAPACK as the
/// transpose, which for complex Hermitian matrices is the complex conjugate,
/// and the returned eigenvectors would belong to `conj(h)`.
fn eigh_checked(h: &CMat) -> Result<(Array1<f64>, CMat)> {
    let mut f = Array2::zeros(h.raw_dim().f());
    f.assign(h);
    Ok(f.eigh(UPLO::Upper)?)
}

/// Spectral data of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Array1<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    /// Eigendecomposition with a reproducible basis.
    ///
    /// Eigenvalues are ascending. Inside each numerically degenerate cluster
    /// the basis is rebuilt by Gram-Schmidt over projected canonical vectors,
    /// and each eigenvector is rotated so its dominant component is real and
    /// positive.
    pub fn new(h: &CMat) -> Result<Self> {
        let (values, vectors) = eigh_checked(h)?;
        let mut eig = Self { values, vectors };
        eig.canonicalize();
        Ok(eig)
    }

    /// Plain LAPACK output without canonicalization (for hot loops where the
    /// basis choice does not matter).
    pub fn raw(h: &CMat) -> Result<Self> {
        let (values, vectors) = eigh_checked(h)?;
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn spread(&self) -> f64 {
        self.values[self.dim() - 1] - self.values[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `exp(-i t H)`.
    pub fn propagator(&self, t: f64) -> CMat {
        let phases = self.values.mapv(|e| C64::from_polar(1.0, -e * t));
        self.reconstruct_with(&phases)
    }

    /// `V diag(f) V^dagger`.
    pub fn reconstruct_with(&self, diag: &CVec) -> CMat {
        let scaled = &self.vectors * &diag.view().insert_axis(Axis(0));
        scaled.dot(&adjoint(&self.vectors.view()))
    }

    fn clusters(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        let range = self.spread();
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=d {
            let split = i == d || self.values[i] - self.values[i - 1] >= DEGENERACY_GAP * range;
            if split {
                out.push((start, i));
                start = i;
            }
        }
        out
    }

    fn canonicalize(&mut self) {
        let d = self.dim();
        for (lo, hi) in self.clusters() {
            let k = hi - lo;
            if k > 1 {
                let q = self.vectors.slice(ndarray::s![.., lo..hi]).to_owned();
                let chosen = canonical_cluster_basis(&q);
                for (c, v) in chosen.into_iter().enumerate() {
                    self.vectors.column_mut(lo + c).assign(&v);
                }
                // Degenerate values are replaced by their mean so that the
                // recorded spectrum is consistent with the rebuilt basis.
                let mean = self.values.slice(ndarray::s![lo..hi]).sum() / k as f64;
                self.values.slice_mut(ndarray::s![lo..hi]).fill(mean);
            }
        }
        for c in 0..d {
            let mut col = self.vectors.column_mut(c);
            let max = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if let Some(pivot) = col.iter().position(|z| z.norm() >= max * (1.0 - 1e-8)) {
                let phase = col[pivot].conj() / col[pivot].norm();
                col.mapv_inplace(|z| z * phase);
            }
        }
    }
}

/// Deterministic orthonormal basis of the column space of `q` built from the
/// projections of `e_0, e_1, ...` onto it.
fn canonical_cluster_basis(q: &CMat) -> Vec<CVec> {
    let (d, k) = q.dim();
    let mut chosen: Vec<CVec> = Vec::with_capacity(k);
    for i in 0..d {
        if chosen.len() == k {
            break;
        }
        // P e_i = Q Q^dagger e_i = Q * conj(row i of Q)
        let coeffs: CVec = q.row(i).mapv(|z| z.conj());
        let mut v = q.dot(&coeffs);
        for _ in 0..2 {
            for u in &chosen {
                let p = inner(u, &v);
                v.scaled_add(-p, u);
            }
        }
        let n = vec_norm(&v);
        if n > 1e-3 {
            chosen.push(v.mapv(|z| z / n));
        }
    }
    let mut col = 0;
    while chosen.len() < k && col < k {
        let mut v = q.column(col).to_owned();
        for u in &chosen {
            let p = inner(u, &v);
            v.scaled_add(-p, u);
        }
        let n = vec_norm(&v);
        if n > 1e-8 {
            chosen.push(v.mapv(|z| z / n));
        }
        col += 1;
    }
    chosen
}
