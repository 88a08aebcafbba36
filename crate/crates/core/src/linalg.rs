//! Small dense symmetric linear algebra.
//!
//! Matrices here are m×m with m in the single or low double digits, so
//! everything is stored row-major in a flat `Vec<f64>` and the algorithms are
//! the textbook ones: Cholesky with a relative pivot floor, cyclic Jacobi for
//! the eigendecomposition.

use std::fmt;

use crate::error::{Error, Result};

/// Relative pivot floor: a pivot below `PIVOT_RTOL * max_diag` fails.
pub const PIVOT_RTOL: f64 = 1e-12;

const JACOBI_RTOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix. Writes go to both triangles.
#[derive(Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for row in self.data.chunks(self.dim) {
            list.entry(&row);
        }
        list.finish()
    }
}

impl SpdMatrix {
    pub fn zeros(dim: usize) -> Self {
        SpdMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            a.data[i * dim + i] = 1.0;
        }
        a
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut a = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            a.data[i * diag.len() + i] = d;
        }
        a
    }

    /// Builds a matrix from row-major entries. Only the lower triangle is
    /// read; it is mirrored into the upper one.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                a.set(i, j, entries[i * dim + j]);
            }
        }
        Ok(a)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// `self += alpha * f fᵀ`
    #[inline]
    pub fn add_outer(&mut self, alpha: f64, f: &[f64]) {
        let m = self.dim;
        debug_assert_eq!(f.len(), m);
        for i in 0..m {
            let ai = alpha * f[i];
            let row = &mut self.data[i * m..(i + 1) * m];
            for j in 0..=i {
                row[j] += ai * f[j];
            }
        }
        self.mirror_lower();
    }

    /// Copies the lower triangle onto the upper one.
    pub(crate) fn mirror_lower(&mut self) {
        let m = self.dim;
        for i in 0..m {
            for j in 0..i {
                self.data[j * m + i] = self.data[i * m + j];
            }
        }
    }

    /// Accumulates `alpha * f fᵀ` into the lower triangle only; call
    /// [`SpdMatrix::mirror_lower`] when done.
    #[inline]
    pub(crate) fn add_outer_lower(&mut self, alpha: f64, f: &[f64]) {
        let m = self.dim;
        for i in 0..m {
            let ai = alpha * f[i];
            let row = &mut self.data[i * m..i * m + i + 1];
            for (j, r) in row.iter_mut().enumerate() {
                *r += ai * f[j];
            }
        }
    }

    pub fn scaled(&self, c: f64) -> SpdMatrix {
        SpdMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SpdMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(m) {
            *o = dot(&self.data[i * m..(i + 1) * m], x);
        }
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let m = self.dim;
        (0..m)
            .map(|i| x[i] * dot(&self.data[i * m..(i + 1) * m], x))
            .sum()
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.dim;
        (0..m)
            .map(|i| x[i] * dot(&self.data[i * m..(i + 1) * m], y))
            .sum()
    }

    /// General (not necessarily symmetric) product, row-major.
    pub fn matmul(&self, other: &SpdMatrix) -> Vec<f64> {
        let m = self.dim;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                let a = self.get(i, k);
                for j in 0..m {
                    out[i * m + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// `S A S` for symmetric `S`, symmetrized.
    pub fn congruence(&self, s: &SpdMatrix) -> SpdMatrix {
        let m = self.dim;
        let sa = s.matmul(self);
        let mut out = SpdMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += sa[i * m + k] * s.get(k, j);
                }
                out.data[i * m + j] = acc;
            }
        }
        out.mirror_lower();
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Lower Cholesky factor `A = L Lᵀ` together with `ln det A`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
    logdet: f64,
}

/// Cholesky factorization with the relative pivot floor [`PIVOT_RTOL`].
pub fn spd_factorize(a: &SpdMatrix) -> Result<Cholesky> {
    let m = a.dim();
    let scale = a.max_diag();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NotPositiveDefinite {
            row: 0,
            pivot: scale,
        });
    }
    let floor = PIVOT_RTOL * scale;
    let mut l = vec![0.0; m * m];
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        logdet += d.ln();
        for i in j + 1..m {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / djj;
        }
    }
    Ok(Cholesky {
        dim: m,
        lower: l,
        logdet,
    })
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Row-major lower-triangular factor.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let m = self.dim;
        for i in 0..m {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * m + k] * b[k];
            }
            b[i] = s / self.lower[i * m + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let m = self.dim;
        for i in (0..m).rev() {
            let mut s = b[i];
            for k in i + 1..m {
                s -= self.lower[k * m + i] * b[k];
            }
            b[i] = s / self.lower[i * m + i];
        }
    }

    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    /// Explicit `L⁻¹`, row-major lower triangular.
    pub fn inverse_lower(&self) -> Vec<f64> {
        let m = self.dim;
        let mut inv = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.forward(&mut col);
            for i in 0..m {
                inv[i * m + j] = col[i];
            }
        }
        inv
    }

    pub fn inverse(&self) -> SpdMatrix {
        let m = self.dim;
        let li = self.inverse_lower();
        // A⁻¹ = L⁻ᵀ L⁻¹
        let mut out = SpdMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..m {
                    s += li[k * m + i] * li[k * m + j];
                }
                out.data[i * m + j] = s;
            }
        }
        out.mirror_lower();
        out
    }
}

pub fn spd_inverse(a: &SpdMatrix) -> Result<SpdMatrix> {
    Ok(spd_factorize(a)?.inverse())
}

/// `ln det A`, or an error if `A` fails the pivot floor.
pub fn logdet(a: &SpdMatrix) -> Result<f64> {
    Ok(spd_factorize(a)?.logdet())
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Row-major; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
}

impl SymEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let m = self.values.len();
        (0..m).map(|i| self.vectors[i * m + j]).collect()
    }

    /// `U f(Λ) Uᵀ`
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let m = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let mut out = SpdMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for (k, lam) in mapped.iter().enumerate() {
                    s += self.vectors[i * m + k] * lam * self.vectors[j * m + k];
                }
                out.data[i * m + j] = s;
            }
        }
        out.mirror_lower();
        out
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eigen(a: &SpdMatrix) -> Result<SymEigen> {
    let m = a.dim();
    let mut w = a.data.clone();
    let mut v = SpdMatrix::identity(m).data;
    let target = JACOBI_RTOL * a.frobenius();

    let off = |w: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += w[i * m + j] * w[i * m + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&w) <= target;
    let mut sweep = 0;
    while !converged {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::ConvergenceFailure {
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
        sweep += 1;
        for p in 0..m {
            for q in p + 1..m {
                let apq = w[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = w[p * m + p];
                let aqq = w[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = w[k * m + p];
                    let akq = w[k * m + q];
                    w[k * m + p] = c * akp - s * akq;
                    w[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = w[p * m + k];
                    let aqk = w[q * m + k];
                    w[p * m + k] = c * apk - s * aqk;
                    w[q * m + k] = s * apk + c * aqk;
                }
                w[p * m + q] = 0.0;
                w[q * m + p] = 0.0;
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&w) <= target;
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| w[i * m + i].total_cmp(&w[j * m + j]));
    let values = order.iter().map(|&i| w[i * m + i]).collect();
    let mut vectors = vec![0.0; m * m];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..m {
            vectors[k * m + new] = v[k * m + old];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// `A^{-1/2}` via the eigendecomposition.
pub fn inv_sqrt_spd(a: &SpdMatrix) -> Result<SpdMatrix> {
    spd_factorize(a)?;
    let eig = sym_eigen(a)?;
    let floor = PIVOT_RTOL * a.max_diag();
    if let Some((row, &pivot)) = eig
        .values
        .iter()
        .enumerate()
        .find(|(_, &l)| !(l > floor))
    {
        return Err(Error::NotPositiveDefinite { row, pivot });
    }
    Ok(eig.recompose(|l| 1.0 / l.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(rng: &mut impl Rng, m: usize) -> SpdMatrix {
        let mut a = SpdMatrix::zeros(m);
        let mut f = vec![0.0; m];
        for _ in 0..m + 2 {
            for x in f.iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
            a.add_outer(1.0, &f);
        }
        a
    }

    fn max_dev_from_identity(p: &[f64], m: usize) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let e = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((p[i * m + j] - e).abs());
            }
        }
        dev
    }

    #[test]
    fn factorize_examples() {
        assert_eq!(spd_factorize(&SpdMatrix::identity(2)).unwrap().logdet(), 0.0);
        let d = spd_factorize(&SpdMatrix::from_diag(&[2.0, 8.0])).unwrap();
        assert!((d.logdet() - 16f64.ln()).abs() < 1e-15);
        let bad = SpdMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            spd_factorize(&bad),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn singular_fails_pivot_floor() {
        let mut a = SpdMatrix::zeros(2);
        a.add_outer(1.0, &[1.0, 1.0]);
        assert!(spd_factorize(&a).is_err());
        assert!(spd_factorize(&SpdMatrix::zeros(3)).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(spd_inverse(&SpdMatrix::identity(3)).unwrap(), SpdMatrix::identity(3));
        let inv = spd_inverse(&SpdMatrix::from_diag(&[2.0, 4.0])).unwrap();
        let want = SpdMatrix::from_diag(&[0.5, 0.25]);
        for (x, y) in inv.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn eigen_examples() {
        let e = sym_eigen(&SpdMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let e = sym_eigen(&SpdMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn inv_sqrt_examples() {
        let s = inv_sqrt_spd(&SpdMatrix::identity(2)).unwrap();
        assert!(max_dev_from_identity(s.as_slice(), 2) < 1e-15);
        let s = inv_sqrt_spd(&SpdMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!((s.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((s.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn random_spd_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10_000 {
            let m = 2 + trial % 7;
            let a = random_spd(&mut rng, m);
            let chol = spd_factorize(&a).unwrap();
            let inv = chol.inverse();
            assert!(max_dev_from_identity(&a.matmul(&inv), m) <= 1e-12 * a.max_abs().max(1.0));

            let eig = sym_eigen(&a).unwrap();
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            let rec = eig.recompose(|x| x);
            let mut err: f64 = 0.0;
            for (x, y) in rec.as_slice().iter().zip(a.as_slice()) {
                err = err.max((x - y).abs());
            }
            assert!(err <= 1e-10 * a.max_abs());
            let tr: f64 = eig.values.iter().sum();
            assert!((tr - a.trace()).abs() <= 1e-10 * a.trace().abs());
            let logprod: f64 = eig.values.iter().map(|x| x.ln()).sum();
            assert!(((logprod - chol.logdet()).exp() - 1.0).abs() <= 1e-9);

            // interlacing sanity with the diagonal
            let dmin = (0..m).map(|i| a.get(i, i)).fold(f64::INFINITY, f64::min);
            let dmax = a.max_diag();
            assert!(eig.values[0] <= dmin + 1e-12 && dmax <= eig.values[m - 1] + 1e-12);

            let s = inv_sqrt_spd(&a).unwrap();
            assert!(max_dev_from_identity(a.congruence(&s).as_slice(), m) <= 1e-10);
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(&mut rng, 6);
        let e = sym_eigen(&a).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = dot(&e.vector(i), &e.vector(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
