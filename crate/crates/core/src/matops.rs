//! Dense complex linear algebra used by every optimizer in the crate.
//!
//! Decompositions are backed by `nalgebra`; the Cholesky factorization is
//! local so that a failed factorization can report the offending pivot.
//! No routine here forms an explicit inverse: closed forms of the type
//! `A^{-1} B` go through [`hermitian_solve`].

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex<f64>;

/// Working matrix type for all internal arithmetic.
pub type CMat = DMatrix<c64>;

/// Relative asymmetry accepted by the Hermitian routines.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues above `-PSD_CLAMP * max|λ|` are treated as zero.
pub const PSD_CLAMP: f64 = 1e-12;

const MAX_SWEEPS: usize = 10_000;

/// A finite complex matrix, serialized row-major with entries as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RowMajor", into = "RowMajor")]
pub struct ComplexMatrix(CMat);

#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl ComplexMatrix {
    pub fn new(inner: CMat) -> Result<Self> {
        if inner.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(Self(inner))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<c64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("matrix dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                name: "entries",
                expected: format!("{}", rows * cols),
                found: format!("{}", entries.len()),
            });
        }
        Self::new(CMat::from_row_slice(rows, cols, &entries))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(CMat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn row_major_entries(&self) -> Vec<c64> {
        let (r, c) = self.0.shape();
        (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .map(|(i, j)| self.0[(i, j)])
            .collect()
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

impl Deref for ComplexMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl From<ComplexMatrix> for RowMajor {
    fn from(m: ComplexMatrix) -> Self {
        RowMajor {
            rows: m.nrows(),
            cols: m.ncols(),
            entries: m.row_major_entries().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<RowMajor> for ComplexMatrix {
    type Error = Error;
    fn try_from(r: RowMajor) -> Result<Self> {
        let entries = r.entries.iter().map(|&[re, im]| c64::new(re, im)).collect();
        ComplexMatrix::from_row_major(r.rows, r.cols, entries)
    }
}

/// Wraps a matrix produced by a solver; non-finite entries are reported.
pub fn checked(m: CMat) -> Result<ComplexMatrix> {
    ComplexMatrix::new(m)
}

pub fn fro_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// `[a, b]`, horizontal concatenation.
pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Returns `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `‖A − A^H‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn hermitian_asymmetry(a: &CMat) -> f64 {
    let scale = fro_norm_sq(a).sqrt();
    if scale == 0.0 {
        return 0.0;
    }
    fro_norm_sq(&(a - a.adjoint())).sqrt() / scale
}

fn ensure_square_hermitian(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            name: "hermitian operand",
            expected: "square".into(),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let asymmetry = hermitian_asymmetry(a);
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok(())
}

/// Lower-triangular factor `L` with `A = L L^H` and a real positive diagonal.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMat,
}

impl Cholesky {
    pub fn factor(a: &CMat) -> Result<Self> {
        ensure_square_hermitian(a)?;
        let n = a.nrows();
        let mut l = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = if i == j { c64::new(a[(i, i)].re, 0.0) } else { (a[(i, j)] + a[(j, i)].conj()) * 0.5 };
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                if i == j {
                    let d = s.re;
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    l[(i, i)] = c64::new(d.sqrt(), 0.0);
                } else {
                    l[(i, j)] = s / l[(j, j)].re;
                }
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &CMat {
        &self.l
    }

    /// Solves `A X = B` by forward and back substitution.
    pub fn solve(&self, b: &CMat) -> CMat {
        let n = self.l.nrows();
        assert_eq!(b.nrows(), n, "right-hand side row mismatch");
        let mut x = b.clone();
        for col in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)].re;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)].re;
            }
        }
        x
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            name: "right-hand side",
            expected: format!("{} rows", a.nrows()),
            found: format!("{} rows", b.nrows()),
        });
    }
    Ok(Cholesky::factor(a)?.solve(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Natural,
    Two,
}

impl LogBase {
    fn convert(self, ln_value: f64) -> f64 {
        match self {
            LogBase::Natural => ln_value,
            LogBase::Two => ln_value / std::f64::consts::LN_2,
        }
    }
}

/// Log-determinant of a Hermitian positive definite matrix.
pub fn logdet_hermitian(a: &CMat, base: LogBase) -> Result<f64> {
    Ok(base.convert(Cholesky::factor(a)?.ln_det()))
}

#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Unitary matrix of eigenvectors, one per column.
    pub vectors: CMat,
    /// Nonnegative eigenvalues, descending.
    pub values: Vec<f64>,
}

/// Eigendecomposition of a Hermitian positive semidefinite matrix.
pub fn hermitian_eig(a: &CMat) -> Result<HermitianEig> {
    ensure_square_hermitian(a)?;
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(hermitian_part(a), f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NoConvergence { what: "Hermitian eigendecomposition" })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvalues[src];
        if v < 0.0 {
            if v < -PSD_CLAMP * scale {
                return Err(Error::NotPositiveSemidefinite { eigenvalue: v });
            }
            v = 0.0;
        }
        values.push(v);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig { vectors, values })
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m×m unitary.
    pub u: CMat,
    /// min(m, n) values, descending.
    pub singular_values: Vec<f64>,
    /// n×n unitary.
    pub v: CMat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> CMat {
        let k = self.singular_values.len();
        let mut us = self.u.columns(0, k).into_owned();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.columns(0, k).adjoint()
    }
}

/// Full singular value decomposition `A = U Σ V^H`.
pub fn svd(a: &CMat) -> Result<SvdResult> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (m, n) = a.shape();
    let k = m.min(n);
    let dec = SVD::try_new_unordered(a.clone(), true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NoConvergence { what: "singular value decomposition" })?;
    let u_thin = dec.u.ok_or(Error::NoConvergence { what: "left singular vectors" })?;
    let v_t = dec.v_t.ok_or(Error::NoConvergence { what: "right singular vectors" })?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let mut u_sorted = CMat::zeros(m, k);
    let mut v_sorted = CMat::zeros(n, k);
    let v_full_thin = v_t.adjoint();
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        singular_values.push(dec.singular_values[src].max(0.0));
        u_sorted.set_column(dst, &u_thin.column(src));
        v_sorted.set_column(dst, &v_full_thin.column(src));
    }
    Ok(SvdResult {
        u: complete_unitary(&u_sorted),
        singular_values,
        v: complete_unitary(&v_sorted),
    })
}

/// Extends orthonormal columns `q` (m×k) to an m×m unitary matrix.
fn complete_unitary(q: &CMat) -> CMat {
    let (m, k) = q.shape();
    let mut out = CMat::zeros(m, m);
    out.columns_mut(0, k).copy_from(q);
    for filled in k..m {
        let basis = out.columns(0, filled).into_owned();
        let mut best: Option<(f64, DVector<c64>)> = None;
        for j in 0..m {
            let mut r = DVector::<c64>::zeros(m);
            r[j] = c64::new(1.0, 0.0);
            for _ in 0..2 {
                let proj = basis.adjoint() * &r;
                r -= &basis * proj;
            }
            let norm = r.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("m > 0");
        out.set_column(filled, &r.unscale(norm));
    }
    out
}

/// The leading `k` columns of `m`.
pub fn leading_columns(m: &CMat, k: usize) -> CMat {
    m.columns(0, k).into_owned()
}

/// Scales column `j` of `m` by `d[j]`, i.e. `m · diag(d)`.
pub fn scale_columns(m: &CMat, d: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c64::new(re, im)
        })
    }

    fn rel_err(a: &CMat, b: &CMat) -> f64 {
        fro_norm_sq(&(a - b)).sqrt() / fro_norm_sq(b).sqrt().max(f64::MIN_POSITIVE)
    }

    fn diag(values: &[f64]) -> CMat {
        CMat::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| c64::new(v, 0.0))))
    }

    fn is_unitary(u: &CMat) -> bool {
        rel_err(&(u.adjoint() * u), &CMat::identity(u.ncols(), u.ncols())) < 1e-12
    }

    #[test]
    fn svd_of_identity() {
        let r = svd(&CMat::identity(2, 2)).unwrap();
        assert_eq!(r.singular_values, vec![1.0, 1.0]);
        assert!(is_unitary(&r.u) && is_unitary(&r.v));
        assert!(rel_err(&r.reconstruct(), &CMat::identity(2, 2)) < 1e-14);
    }

    #[test]
    fn svd_sorts_descending() {
        let a = diag(&[3.0, 4.0]);
        let r = svd(&a).unwrap();
        assert_relative_eq!(r.singular_values[0], 4.0, epsilon = 1e-14);
        assert_relative_eq!(r.singular_values[1], 3.0, epsilon = 1e-14);
        // the dominant right singular vector is the second axis
        assert_relative_eq!(r.v[(1, 0)].norm(), 1.0, epsilon = 1e-14);
        assert!(rel_err(&r.reconstruct(), &a) < 1e-14);
    }

    #[test]
    fn svd_reconstructs_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, n) in &[(2, 2), (2, 4), (4, 2), (4, 4)] {
            for _ in 0..100 {
                let a = random(m, n, &mut rng);
                let r = svd(&a).unwrap();
                assert!(rel_err(&r.reconstruct(), &a) <= 1e-10);
                assert_eq!((r.u.nrows(), r.u.ncols()), (m, m));
                assert_eq!((r.v.nrows(), r.v.ncols()), (n, n));
                assert!(is_unitary(&r.u) && is_unitary(&r.v));
                assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
                assert!(r.singular_values.iter().all(|&s| s >= 0.0));
            }
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = CMat::identity(2, 2);
        a[(0, 1)] = c64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::NonFinite)));
    }

    #[test]
    fn solve_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random(3, 2, &mut rng);
        assert!(rel_err(&hermitian_solve(&CMat::identity(3, 3), &b).unwrap(), &b) < 1e-15);
        let two = CMat::identity(2, 2).scale(2.0);
        let x = hermitian_solve(&two, &CMat::identity(2, 2)).unwrap();
        assert!(rel_err(&x, &CMat::identity(2, 2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn solve_residual_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &n in &[2, 4] {
            for _ in 0..100 {
                let g = random(n, n, &mut rng);
                let a = hermitian_part(&(&g * g.adjoint() + CMat::identity(n, n).scale(0.1)));
                let b = random(n, 3, &mut rng);
                let x = hermitian_solve(&a, &b).unwrap();
                assert!(rel_err(&(&a * &x), &b) <= 1e-10);
            }
        }
    }

    #[test]
    fn solve_reports_failing_pivot() {
        let a = diag(&[1.0, 2.0, -1.0]);
        match hermitian_solve(&a, &CMat::identity(3, 3)) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_rejects_non_hermitian() {
        let mut a = CMat::identity(2, 2);
        a[(0, 1)] = c64::new(0.5, 0.0);
        assert!(matches!(hermitian_solve(&a, &a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn logdet_cases() {
        assert_eq!(logdet_hermitian(&CMat::identity(3, 3), LogBase::Two).unwrap(), 0.0);
        assert_relative_eq!(logdet_hermitian(&diag(&[2.0, 2.0]), LogBase::Two).unwrap(), 2.0, epsilon = 1e-15);
        assert!(logdet_hermitian(&diag(&[1.0, 0.0]), LogBase::Natural).is_err());
    }

    #[test]
    fn logdet_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g = random(4, 4, &mut rng);
            let a = hermitian_part(&(&g * g.adjoint() + CMat::identity(4, 4)));
            // independent route: sum of log eigenvalues from nalgebra
            let eig = SymmetricEigen::new(a.clone());
            let oracle: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
            let ln = logdet_hermitian(&a, LogBase::Natural).unwrap();
            assert!((ln - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
            let two = logdet_hermitian(&a, LogBase::Two).unwrap();
            assert!((two - ln / std::f64::consts::LN_2).abs() <= 1e-12 * two.abs().max(1.0));
        }
    }

    #[test]
    fn eig_cases() {
        let e = hermitian_eig(&CMat::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = hermitian_eig(&diag(&[0.0, 5.0])).unwrap();
        assert_relative_eq!(e.values[0], 5.0);
        assert_eq!(e.values[1], 0.0);
    }

    #[test]
    fn eig_reconstructs_gram_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(n, r) in &[(2, 2), (2, 4), (4, 2), (4, 4)] {
            for _ in 0..100 {
                let g = random(n, r, &mut rng);
                let b = hermitian_part(&(&g * g.adjoint()));
                let e = hermitian_eig(&b).unwrap();
                let rec = scale_columns(&e.vectors, &e.values) * e.vectors.adjoint();
                assert!(rel_err(&rec, &b) <= 1e-10);
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
                assert!(is_unitary(&e.vectors));
            }
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let mut a = CMat::identity(2, 2);
        a[(1, 0)] = c64::new(0.0, 1e-3);
        assert!(matches!(hermitian_eig(&a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn complex_matrix_row_major_json() {
        let m = ComplexMatrix::from_row_major(
            2,
            2,
            vec![c64::new(1.0, 2.0), c64::new(3.0, 0.0), c64::new(0.0, -1.0), c64::new(4.0, 4.0)],
        )
        .unwrap();
        assert_eq!(m[(0, 1)], c64::new(3.0, 0.0));
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"rows":2,"cols":2,"entries":[[1.0,2.0],[3.0,0.0],[0.0,-1.0],[4.0,4.0]]}"#);
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn complex_matrix_rejects_bad_input() {
        assert!(ComplexMatrix::from_row_major(2, 2, vec![c64::new(0.0, 0.0); 3]).is_err());
        assert!(ComplexMatrix::from_row_major(1, 1, vec![c64::new(f64::INFINITY, 0.0)]).is_err());
        assert!(serde_json::from_str::<ComplexMatrix>(r#"{"rows":1,"cols":2,"entries":[[1.0,0.0]]}"#).is_err());
    }
}
