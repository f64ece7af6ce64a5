//! Dense complex linear algebra for small Hermitian problems.
//!
//! Everything here is sized for matrices of order at most a few hundred:
//! products, adjoints, a cyclic Jacobi eigensolver for Hermitian matrices and
//! the PSD square root built on it. All routines are pure and deterministic;
//! the summation order of every reduction is fixed.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Global tolerance for "numerically PSD": eigenvalues in `[-PSD_TOL, 0)` are
/// treated as zero.
pub const PSD_TOL: f64 = 1e-9;

/// Maximum number of Jacobi sweeps before the eigensolver gives up.
pub const MAX_SWEEPS: usize = 100;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("ComplexMatrix::new"));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from separate row-major real and imaginary parts.
    pub fn from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "parts of length {}/{} for a {rows}x{cols} matrix",
                re.len(),
                im.len()
            )));
        }
        let data = re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect();
        Self::new(rows, cols, data)
    }

    pub fn from_real(rows: usize, cols: usize, re: &[f64]) -> Result<Self> {
        Self::from_parts(rows, cols, re, &vec![0.0; re.len()])
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product `u v†`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m[(i, j)] = a * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn re_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn im_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        let mut out = Self::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix product `a · b`.
///
/// Each output entry accumulates its terms in increasing inner index, so the
/// result is bit-reproducible.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out)?;
    Ok(out)
}

/// `out = a · b` without allocating.
pub fn matmul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) -> Result<()> {
    if a.cols != b.rows || out.rows != a.rows || out.cols != b.cols {
        return Err(Error::DimensionMismatch(format!(
            "matmul {}x{} · {}x{} -> {}x{}",
            a.rows, a.cols, b.rows, b.cols, out.rows, out.cols
        )));
    }
    let n = b.cols;
    out.data.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for i in 0..a.rows {
        let row = &mut out.data[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(())
}

/// `a · b†`, used for Gram products `L L†`.
pub fn matmul_adjoint_into(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    out: &mut ComplexMatrix,
) -> Result<()> {
    if a.cols != b.cols || out.rows != a.rows || out.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul_adjoint {}x{} · ({}x{})† -> {}x{}",
            a.rows, a.cols, b.rows, b.cols, out.rows, out.cols
        )));
    }
    let k = a.cols;
    for i in 0..a.rows {
        let ar = &a.data[i * k..(i + 1) * k];
        for j in 0..b.rows {
            let br = &b.data[j * k..(j + 1) * k];
            let mut s = C64::new(0.0, 0.0);
            for (x, y) in ar.iter().zip(br) {
                s += x * y.conj();
            }
            out.data[i * out.cols + j] = s;
        }
    }
    Ok(())
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.cols, a.rows);
    for i in 0..a.rows {
        for j in 0..a.cols {
            out[(j, i)] = a[(i, j)].conj();
        }
    }
    out
}

/// Spectrum of a Hermitian matrix, ascending, with unit-norm eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn eigenvector(&self, j: usize) -> Vec<C64> {
        self.eigenvectors.column(j)
    }

    /// `V · diag(f(λ)) · V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.rows;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for (k, &w) in fl.iter().enumerate() {
                    s += v[(i, k)] * v[(j, k)].conj() * w;
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Full eigendecomposition of a Hermitian matrix by cyclic complex Jacobi.
///
/// The input is symmetrized to `(A + A†)/2` first.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig> {
    let (values, vectors) = jacobi(a, true)?;
    let vectors = vectors.expect("vectors requested");
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = vectors[(r, src)];
        }
    }
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only (ascending); skips eigenvector accumulation.
pub fn hermitian_eigvals(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let (mut values, _) = jacobi(a, false)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn jacobi(a: &ComplexMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<ComplexMatrix>)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("hermitian_eig"));
    }
    let n = a.rows;
    let mut m = a.hermitian_part();
    for i in 0..n {
        m[(i, i)].im = 0.0;
    }
    let mut v = want_vectors.then(|| ComplexMatrix::identity(n));
    let norm = m.frobenius_norm();
    if n <= 1 || norm == 0.0 {
        let values = (0..n).map(|i| m[(i, i)].re).collect();
        return Ok((values, v));
    }
    let tol = 1e-15 * norm;
    let negligible = 1e-18 * norm;

    let off_norm = |m: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };

    for sweep in 0..MAX_SWEEPS {
        let off = off_norm(&m);
        if off <= tol {
            let values = (0..n).map(|i| m[(i, i)].re).collect();
            return Ok((values, v));
        }
        // Early sweeps only rotate the large entries.
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g <= negligible {
                    m[(p, q)] = C64::new(0.0, 0.0);
                    m[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                if g < threshold {
                    continue;
                }
                rotate(&mut m, v.as_mut(), p, q, apq, g);
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual: off_norm(&m),
    })
}

/// Annihilates `m[p][q]` with the unitary `W = diag(1, e^{-iφ}) · [[c, s], [-s, c]]`
/// acting on the (p, q) plane, `m <- W† m W`, `v <- v W`.
fn rotate(m: &mut ComplexMatrix, v: Option<&mut ComplexMatrix>, p: usize, q: usize, apq: C64, g: f64) {
    let n = m.rows;
    let phase = apq / g;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let theta = (aqq - app) / (2.0 * g);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let w_pp = C64::new(c, 0.0);
    let w_pq = C64::new(s, 0.0);
    let w_qp = -phase.conj() * s;
    let w_qq = phase.conj() * c;

    for k in 0..n {
        let akp = m.data[k * n + p];
        let akq = m.data[k * n + q];
        m.data[k * n + p] = akp * w_pp + akq * w_qp;
        m.data[k * n + q] = akp * w_pq + akq * w_qq;
    }
    for k in 0..n {
        let apk = m.data[p * n + k];
        let aqk = m.data[q * n + k];
        m.data[p * n + k] = w_pp.conj() * apk + w_qp.conj() * aqk;
        m.data[q * n + k] = w_pq.conj() * apk + w_qq.conj() * aqk;
    }
    m.data[p * n + q] = C64::new(0.0, 0.0);
    m.data[q * n + p] = C64::new(0.0, 0.0);
    m.data[p * n + p] = C64::new(app - t * g, 0.0);
    m.data[q * n + q] = C64::new(aqq + t * g, 0.0);

    if let Some(v) = v {
        for k in 0..n {
            let vkp = v.data[k * n + p];
            let vkq = v.data[k * n + q];
            v.data[k * n + p] = vkp * w_pp + vkq * w_qp;
            v.data[k * n + q] = vkp * w_pq + vkq * w_qq;
        }
    }
}

/// Magnitude below which an eigenvalue of a spectrum is indistinguishable
/// from rounding noise: `n · ε · max |λ|`.
pub fn roundoff_floor(eigenvalues: &[f64]) -> f64 {
    let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    eigenvalues.len() as f64 * f64::EPSILON * scale
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero; anything more negative
/// is rejected. Eigenvalues at rounding-noise level are treated as zero so a
/// rank-deficient input keeps its rank.
pub fn psd_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    if let Some(&lmin) = eig.eigenvalues.first() {
        if lmin < -PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: lmin });
        }
    }
    let floor = roundoff_floor(&eig.eigenvalues);
    Ok(eig
        .reconstruct_with(|l| if l > floor { l.sqrt() } else { 0.0 })
        .hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rng: &mut Xoshiro256PlusPlus, r: usize, cols: usize) -> ComplexMatrix {
        let data = (0..r * cols)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexMatrix::new(r, cols, data).unwrap()
    }

    fn random_hermitian(rng: &mut Xoshiro256PlusPlus, n: usize) -> ComplexMatrix {
        random_matrix(rng, n, n).hermitian_part()
    }

    #[test]
    fn identity_product() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let m = random_matrix(&mut rng, 4, 4);
        assert_eq!(matmul(&ComplexMatrix::identity(4), &m).unwrap(), m);
    }

    #[test]
    fn diagonal_product() {
        let a = ComplexMatrix::from_real_diag(&[2.0, 3.0]);
        let b = ComplexMatrix::from_real_diag(&[5.0, 7.0]);
        assert_eq!(
            matmul(&a, &b).unwrap(),
            ComplexMatrix::from_real_diag(&[10.0, 21.0])
        );
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn adjoint_examples() {
        let m = ComplexMatrix::new(2, 2, vec![c(0., 0.), c(0., 1.), c(0., 0.), c(0., 0.)]).unwrap();
        let expected =
            ComplexMatrix::new(2, 2, vec![c(0., 0.), c(0., 0.), c(0., -1.), c(0., 0.)]).unwrap();
        assert_eq!(adjoint(&m), expected);

        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let h = random_hermitian(&mut rng, 4);
        assert_eq!(adjoint(&h), h);
        let a = random_matrix(&mut rng, 3, 5);
        assert_eq!(adjoint(&adjoint(&a)), a);
    }

    #[test]
    fn eig_of_identity() {
        let e = hermitian_eig(&ComplexMatrix::identity(4)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 4]);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(hermitian_eig(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_residuals_and_orthonormality() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for n in [1, 2, 3, 4, 8, 16, 33] {
            let a = random_hermitian(&mut rng, n);
            let e = hermitian_eig(&a).unwrap();
            let scale = a.frobenius_norm().max(1.0);
            for w in e.eigenvalues.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for j in 0..n {
                let vj = e.eigenvector(j);
                let col = ComplexMatrix::new(n, 1, vj.clone()).unwrap();
                let av = matmul(&a, &col).unwrap();
                let res: f64 = (0..n)
                    .map(|i| (av[(i, 0)] - vj[i] * e.eigenvalues[j]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10 * scale, "n={n} j={j} residual {res}");
            }
            let vhv = matmul(&adjoint(&e.eigenvectors), &e.eigenvectors).unwrap();
            assert!(vhv.max_abs_diff(&ComplexMatrix::identity(n)) <= 1e-10);
            assert!(e.reconstruct().max_abs_diff(&a) <= 1e-10 * scale);
        }
    }

    #[test]
    fn eig_handles_degenerate_and_diagonal() {
        let d = ComplexMatrix::from_real_diag(&[3.0, -1.0, 3.0, 0.5]);
        let e = hermitian_eig(&d).unwrap();
        assert_eq!(e.eigenvalues, vec![-1.0, 0.5, 3.0, 3.0]);
        let z = hermitian_eig(&ComplexMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z.eigenvalues, vec![0.0; 3]);
    }

    #[test]
    fn sqrt_examples() {
        let i = ComplexMatrix::identity(4);
        assert!(psd_sqrt(&i).unwrap().max_abs_diff(&i) < 1e-15);
        let d = psd_sqrt(&ComplexMatrix::from_real_diag(&[4.0, 9.0])).unwrap();
        assert!(d.max_abs_diff(&ComplexMatrix::from_real_diag(&[2.0, 3.0])) < 1e-14);
    }

    #[test]
    fn sqrt_of_random_psd() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        for n in [2, 4, 7, 16] {
            let m = random_matrix(&mut rng, n, n);
            let p = matmul(&m, &adjoint(&m)).unwrap();
            let b = psd_sqrt(&p).unwrap();
            let bb = matmul(&b, &b).unwrap();
            let err = bb.sub(&p).unwrap().frobenius_norm();
            assert!(err <= 1e-8 * p.frobenius_norm().max(1.0));
            assert_eq!(adjoint(&b), b);
            let comm = matmul(&b, &p)
                .unwrap()
                .sub(&matmul(&p, &b).unwrap())
                .unwrap()
                .frobenius_norm();
            assert!(comm <= 1e-8);
        }
    }

    #[test]
    fn sqrt_rejects_negative() {
        let err = psd_sqrt(&ComplexMatrix::from_real_diag(&[1.0, -0.25])).unwrap_err();
        match err {
            Error::NotPsd { eigenvalue } => assert_eq!(eigenvalue, -0.25),
            other => panic!("unexpected {other}"),
        }
        // Within tolerance gets clamped.
        let b = psd_sqrt(&ComplexMatrix::from_real_diag(&[1.0, -5e-10])).unwrap();
        assert_eq!(b[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn rejects_non_finite() {
        let bad = ComplexMatrix {
            rows: 1,
            cols: 1,
            data: vec![c(f64::NAN, 0.0)],
        };
        assert!(matches!(hermitian_eig(&bad), Err(Error::NonFinite(_))));
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::INFINITY, 0.0)]).is_err());
    }
}
