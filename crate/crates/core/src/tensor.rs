//! Dense row-major matrices and the Kronecker-family products.
//!
//! Index conventions are fixed crate-wide:
//!
//! * `kron(M, N)[(j0*r + j1, i0*s + i1)] = M[j0, i0] * N[j1, i1]` (first factor major),
//! * `rowwise_kron(U, V)[i, l1*k2 + l2] = U[i, l1] * V[i, l2]` (same pairing),
//! * `vec` stacks rows, so `vec(A1 X A2^T) = kron(A1, A2) vec(X)` holds exactly.

use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

fn checked_area(rows: usize, cols: usize) -> Result<usize> {
    rows.checked_mul(cols)
        .ok_or_else(|| Error::Sizing(format!("{rows} x {cols} overflows usize")))
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let area = checked_area(rows, cols)?;
        if data.len() != area {
            return Err(Error::Sizing(format!(
                "{rows} x {cols} matrix needs {area} entries, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Nested rows, as found in the instance file format.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Sizing(format!(
                "ragged rows: row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape("t_matmul", self.shape(), rhs.shape()));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rrow = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T`, i.e. all pairwise row inner products.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape("matmul_t", self.shape(), rhs.shape()));
        }
        Ok(Matrix::from_fn(self.rows, rhs.rows, |i, j| {
            dot(self.row(i), rhs.row(j))
        }))
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::shape("matvec", self.shape(), (v.len(), 1)));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    fn zip_with(
        &self,
        rhs: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape(op, self.shape(), rhs.shape()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `diag(s) * self`.
    pub fn scale_rows(&self, s: &[f64]) -> Result<Matrix> {
        if s.len() != self.rows {
            return Err(Error::shape("scale_rows", self.shape(), (s.len(), 1)));
        }
        let mut out = self.clone();
        for (i, &si) in s.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= si);
        }
        Ok(out)
    }

    /// `[self | rhs]`.
    pub fn hcat(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape("hcat", self.shape(), rhs.shape()));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Entrywise max norm, `max |m_ij|`.
    pub fn max_abs(&self) -> f64 {
        linf(&self.data)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, rhs: &Matrix) -> Result<f64> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("max_abs_diff", self.shape(), rhs.shape()));
        }
        Ok(linf_diff(&self.data, &rhs.data))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Owned real vector with finite entries.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Vector { data })
    }

    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        linf(&self.data)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.data
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn linf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Kronecker product, first factor major.
pub fn kron(m: &Matrix, n: &Matrix) -> Result<Matrix> {
    let (p, q) = m.shape();
    let (r, s) = n.shape();
    let rows = checked_area(p, r)?;
    let cols = checked_area(q, s)?;
    checked_area(rows, cols)?;
    let mut out = Matrix::zeros(rows, cols);
    for j0 in 0..p {
        for i0 in 0..q {
            let a = m[(j0, i0)];
            for j1 in 0..r {
                let dst = &mut out.row_mut(j0 * r + j1)[i0 * s..(i0 + 1) * s];
                for (o, &b) in dst.iter_mut().zip(n.row(j1)) {
                    *o = a * b;
                }
            }
        }
    }
    Ok(out)
}

/// Row-wise Kronecker product: row `i` of the result is `kron(U[i,:], V[i,:])`.
pub fn rowwise_kron(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    if u.rows() != v.rows() {
        return Err(Error::shape("rowwise_kron", u.shape(), v.shape()));
    }
    let (n, k1) = u.shape();
    let k2 = v.cols();
    let k = checked_area(k1, k2)?;
    checked_area(n, k)?;
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let vrow = v.row(i);
        let orow = out.row_mut(i);
        for (l1, &a) in u.row(i).iter().enumerate() {
            for (o, &b) in orow[l1 * k2..(l1 + 1) * k2].iter_mut().zip(vrow) {
                *o = a * b;
            }
        }
    }
    Ok(out)
}

/// Row-major vectorization.
pub fn vec(m: &Matrix) -> Vector {
    Vector::from_vec_unchecked(m.as_slice().to_vec())
}

pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<Matrix> {
    Matrix::new(rows, cols, v.to_vec())
}

pub fn hadamard(m: &Matrix, n: &Matrix) -> Result<Matrix> {
    m.hadamard(n)
}

/// `vec(A1 X A2^T)`, the left-hand side of the tensor trick.
pub fn tensor_trick(a1: &Matrix, x: &Matrix, a2: &Matrix) -> Result<Vector> {
    if a1.cols() != x.rows() || a2.cols() != x.cols() {
        return Err(Error::shape("tensor_trick", a1.shape(), x.shape()));
    }
    let prod = a1.matmul(x)?.matmul_t(a2)?;
    Ok(vec(&prod))
}

/// `kron(A1, A2) vec(X)`, the right-hand side of the tensor trick. Materializes the
/// `n^2 x d^2` Kronecker matrix, so it is only meant for checking small cases.
pub fn tensor_trick_kron(a1: &Matrix, x: &Matrix, a2: &Matrix) -> Result<Vector> {
    if a1.cols() != x.rows() || a2.cols() != x.cols() {
        return Err(Error::shape("tensor_trick_kron", a1.shape(), x.shape()));
    }
    let big = kron(a1, a2)?;
    Ok(Vector::from_vec_unchecked(big.matvec(x.as_slice())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn arb_matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-2.0f64..2.0, r * c)
                .prop_map(move |d| Matrix::new(r, c, d).unwrap())
        })
    }

    fn arb_with_shape(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0f64..2.0, r * c)
            .prop_map(move |d| Matrix::new(r, c, d).unwrap())
    }

    #[test]
    fn rejects_nan_and_bad_length() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0]),
            Err(Error::Sizing(_))
        ));
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn kron_identity_cases() {
        let x = m(&[&[1.0, -2.0, 0.5], &[3.0, 4.0, 5.0]]);
        assert_eq!(kron(&Matrix::identity(1), &x).unwrap(), x);

        let got = kron(&m(&[&[1.0, 2.0], &[3.0, 4.0]]), &Matrix::identity(2)).unwrap();
        let want = m(&[
            &[1.0, 0.0, 2.0, 0.0],
            &[0.0, 1.0, 0.0, 2.0],
            &[3.0, 0.0, 4.0, 0.0],
            &[0.0, 3.0, 0.0, 4.0],
        ]);
        assert_eq!(got, want);
    }

    #[test]
    fn kron_row_times_column_golden() {
        // out[(j0*r + j1, i0*s + i1)] = M[j0,i0] N[j1,i1] with r = 2, s = 1
        let got = kron(&m(&[&[1.0, 2.0]]), &m(&[&[3.0], &[4.0]])).unwrap();
        assert_eq!(got, m(&[&[3.0, 6.0], &[4.0, 8.0]]));
    }

    #[test]
    fn kron_reports_overflow() {
        let big = Matrix {
            rows: 1 << 33,
            cols: 0,
            data: vec![],
        };
        assert!(matches!(kron(&big, &big), Err(Error::Sizing(_))));
    }

    #[test]
    fn rowwise_kron_cases() {
        let got = rowwise_kron(&m(&[&[1.0, 2.0]]), &m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(got, m(&[&[3.0, 4.0, 6.0, 8.0]]));

        let u = m(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.0, 7.0]]);
        assert_eq!(rowwise_kron(&u, &Matrix::filled(3, 1, 1.0)).unwrap(), u);

        assert!(matches!(
            rowwise_kron(&u, &Matrix::zeros(2, 2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn vec_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(&*vec(&a), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&*vec(&m(&[&[7.5]])), &[7.5]);
        assert_eq!(unvec(&vec(&a), 2, 2).unwrap(), a);
    }

    #[test]
    fn hadamard_cases() {
        let a = m(&[&[1.0, -2.0], &[3.0, 4.0]]);
        assert_eq!(hadamard(&a, &Matrix::filled(2, 2, 1.0)).unwrap(), a);
        assert_eq!(
            hadamard(&a, &Matrix::zeros(2, 2)).unwrap(),
            Matrix::zeros(2, 2)
        );
        assert_eq!(
            hadamard(&m(&[&[1.0, 2.0]]), &m(&[&[3.0, 4.0]])).unwrap(),
            m(&[&[3.0, 8.0]])
        );
        assert!(hadamard(&a, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn tensor_trick_cases() {
        let a1 = m(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]]);
        let a2 = m(&[&[-1.0, 1.0], &[2.0, 2.0], &[0.0, 1.5]]);
        let zero = tensor_trick(&a1, &Matrix::zeros(2, 2), &a2).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let gram = tensor_trick(&a1, &Matrix::identity(2), &a1).unwrap();
        assert_eq!(&*gram, a1.matmul_t(&a1).unwrap().as_slice());

        let x = m(&[&[0.3, -1.2], &[2.0, 0.7]]);
        let lhs = tensor_trick(&a1, &x, &a2).unwrap();
        let rhs = tensor_trick_kron(&a1, &x, &a2).unwrap();
        assert!(linf_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn transposed_products_agree_with_plain() {
        let a = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]);
        let b = m(&[&[0.0, 1.0, -2.0], &[4.0, 1.0, 1.0]]);
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
    }

    proptest! {
        #[test]
        fn kron_mixed_product(
            (a, c) in (1usize..=4, 1usize..=4, 1usize..=4)
                .prop_flat_map(|(p, q, r)| (arb_with_shape(p, q), arb_with_shape(q, r))),
            (b, d) in (1usize..=4, 1usize..=4, 1usize..=4)
                .prop_flat_map(|(p, q, r)| (arb_with_shape(p, q), arb_with_shape(q, r))),
        ) {
            let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap()).unwrap();
            let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }

        #[test]
        fn rowwise_kron_hadamard_identity(
            (u1, v1, u2, v2) in (1usize..=16, 1usize..=4, 1usize..=4).prop_flat_map(|(n, k1, k2)| (
                arb_with_shape(n, k1), arb_with_shape(n, k1), arb_with_shape(n, k2), arb_with_shape(n, k2),
            ))
        ) {
            let lhs = u1.matmul_t(&v1).unwrap().hadamard(&u2.matmul_t(&v2).unwrap()).unwrap();
            let rhs = rowwise_kron(&u1, &u2).unwrap().matmul_t(&rowwise_kron(&v1, &v2).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }

        #[test]
        fn inner_product_identities(
            (a, b, c) in (1usize..=32).prop_flat_map(|n| (
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-3.0f64..3.0, n),
            ))
        ) {
            let ac: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x * y).collect();
            let bc: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x * y).collect();
            prop_assert!((dot(&ac, &b) - dot(&a, &bc)).abs() < 1e-12);

            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
            let n = a.len();
            let diag_a = Matrix::from_fn(n, n, |i, j| if i == j { a[i] } else { 0.0 });
            let quad = dot(&b, &diag_a.matvec(&c).unwrap());
            prop_assert!((dot(&ab, &c) - quad).abs() < 1e-12);
        }

        #[test]
        fn vec_unvec_round_trip(a in arb_matrix(6, 6)) {
            let back = unvec(&vec(&a), a.rows(), a.cols()).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
