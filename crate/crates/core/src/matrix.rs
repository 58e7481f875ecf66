//! Dense matrices over a scalar mode, plus the determinant routines used by
//! the curvature search (float LU) and the exact verifiers (fraction-free
//! elimination, arbitrary-precision integers).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_bigint::BigInt;
use num_traits::Zero;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        if rows.iter().any(|v| v.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc = acc.add(&self[(i, k)].mul(&other[(k, j)]));
            }
            acc
        }))
    }

    pub fn matvec(&self, v: &[S]) -> Result<Vec<S>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self[(i, k)].mul(&v[k]));
                }
                acc
            })
            .collect())
    }

    pub fn add_mat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension("matrix addition shape".into()));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].add(&other[(i, j)])))
    }

    pub fn sub_mat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension("matrix subtraction shape".into()));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].sub(&other[(i, j)])))
    }

    pub fn scale(&self, c: &S) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].mul(c))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_fn(self.rows * other.rows, self.cols * other.cols, |i, j| {
            self[(i / other.rows, j / other.cols)].mul(&other[(i % other.rows, j % other.cols)])
        })
    }

    /// Fraction-free (Bareiss) determinant. Exact when the scalar division is
    /// exact; used for the rational mode where pivoting by magnitude is moot.
    pub fn det_bareiss(&self) -> Result<S> {
        if !self.is_square() {
            return Err(Error::Dimension("determinant of non-square matrix".into()));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(S::one());
        }
        let mut a: Vec<Vec<S>> = (0..n).map(|i| self.row(i).to_vec()).collect();
        let mut sign = false;
        let mut prev = S::one();
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                    Some(i) => {
                        a.swap(k, i);
                        sign = !sign;
                    }
                    None => return Ok(S::zero()),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = a[i][j].mul(&a[k][k]).sub(&a[i][k].mul(&a[k][j]));
                    a[i][j] = t.div(&prev);
                }
                a[i][k] = S::zero();
            }
            prev = a[k][k].clone();
        }
        let det = a[n - 1][n - 1].clone();
        Ok(if sign { det.neg() } else { det })
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl Mat<f64> {
    /// Solve `self * x = b` by partial-pivot Gaussian elimination.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if !self.is_square() || b.len() != self.rows {
            return Err(Error::Dimension("solve needs a square system".into()));
        }
        let n = self.rows;
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = self.row(i).to_vec();
                row.push(b[i]);
                row
            })
            .collect();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            if a[piv][k] == 0.0 {
                return Err(Error::Precondition("singular system".into()));
            }
            a.swap(piv, k);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..=n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut acc = a[k][n];
            for j in k + 1..n {
                acc -= a[k][j] * x[j];
            }
            x[k] = acc / a[k][k];
        }
        Ok(x)
    }

    /// Determinant by partial-pivot Gaussian elimination. Values below 1e-12
    /// are reported as computed, never clamped.
    pub fn det_lu(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::Dimension("determinant of non-square matrix".into()));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(1.0);
        }
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| self.row(i).to_vec()).collect();
        let mut det = 1.0;
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            if a[piv][k] == 0.0 {
                return Ok(0.0);
            }
            if piv != k {
                a.swap(piv, k);
                det = -det;
            }
            det *= a[k][k];
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k + 1..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Ok(det)
    }
}

/// Square integer matrix used by the Hurwitz-Radon family machinery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMat {
    pub n: usize,
    data: Vec<i64>,
}

impl IntMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("integer matrix must be square".into()));
        }
        Ok(Self { n, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows_vec(&self) -> Vec<Vec<i64>> {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let v = self[(i, k)];
                if v == 0 {
                    continue;
                }
                for j in 0..self.n {
                    m[(i, j)] += v * other[(k, j)];
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        m
    }

    pub fn scale_add(&self, c: i64, acc: &mut Self) {
        assert_eq!(self.n, acc.n);
        for (a, b) in acc.data.iter_mut().zip(&self.data) {
            *a += c * b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let n = self.n * other.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] =
                    self[(i / other.n, j / other.n)] * other[(i % other.n, j % other.n)];
            }
        }
        m
    }

    /// Block-diagonal replication: `copies` copies of `self` down the diagonal.
    pub fn block_diag(&self, copies: usize) -> Self {
        let n = self.n * copies;
        let mut m = Self::zeros(n);
        for b in 0..copies {
            for i in 0..self.n {
                for j in 0..self.n {
                    m[(b * self.n + i, b * self.n + j)] = self[(i, j)];
                }
            }
        }
        m
    }

    pub fn to_mat<S: Scalar>(&self) -> Mat<S> {
        Mat::from_fn(self.n, self.n, |i, j| S::from_i64(self[(i, j)]))
    }

    /// Determinant modulo the Mersenne prime 2^61 - 1. A nonzero residue
    /// certifies a nonzero determinant; a zero residue decides nothing.
    pub fn det_mod_mersenne(&self) -> u64 {
        const P: u64 = (1 << 61) - 1;
        fn mulmod(a: u64, b: u64) -> u64 {
            ((a as u128 * b as u128) % ((1u128 << 61) - 1)) as u64
        }
        fn powmod(mut b: u64, mut e: u64) -> u64 {
            let mut acc = 1;
            while e > 0 {
                if e & 1 == 1 {
                    acc = mulmod(acc, b);
                }
                b = mulmod(b, b);
                e >>= 1;
            }
            acc
        }
        let n = self.n;
        let mut a: Vec<Vec<u64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let v = self[(i, j)] % P as i64;
                        if v < 0 {
                            (v + P as i64) as u64
                        } else {
                            v as u64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut det = 1u64;
        for k in 0..n {
            let Some(piv) = (k..n).find(|&i| a[i][k] != 0) else {
                return 0;
            };
            if piv != k {
                a.swap(piv, k);
                det = P - det;
                if det == P {
                    det = 0;
                }
            }
            det = mulmod(det, a[k][k]);
            let inv = powmod(a[k][k], P - 2);
            for i in k + 1..n {
                if a[i][k] == 0 {
                    continue;
                }
                let f = mulmod(a[i][k], inv);
                for j in k..n {
                    let sub = mulmod(f, a[k][j]);
                    a[i][j] = (a[i][j] + P - sub) % P;
                }
            }
        }
        det % P
    }

    /// Exact determinant by fraction-free elimination over `BigInt`.
    pub fn det_exact(&self) -> BigInt {
        let n = self.n;
        if n == 0 {
            return BigInt::from(1);
        }
        let mut a: Vec<Vec<BigInt>> = (0..n)
            .map(|i| (0..n).map(|j| BigInt::from(self[(i, j)])).collect())
            .collect();
        let mut sign = false;
        let mut prev = BigInt::from(1);
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                    Some(i) => {
                        a.swap(k, i);
                        sign = !sign;
                    }
                    None => return BigInt::from(0),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                    a[i][j] = t / &prev;
                }
                a[i][k] = BigInt::from(0);
            }
            prev = a[k][k].clone();
        }
        let det = a[n - 1][n - 1].clone();
        if sign {
            -det
        } else {
            det
        }
    }

    /// True iff the determinant is nonzero, decided exactly. The modular
    /// screen answers almost always; a zero residue falls back to `det_exact`.
    pub fn det_is_nonzero(&self) -> bool {
        if self.det_mod_mersenne() != 0 {
            return true;
        }
        !self.det_exact().is_zero()
    }
}

impl std::ops::Index<(usize, usize)> for IntMat {
    type Output = i64;
    fn index(&self, (i, j): (usize, usize)) -> &i64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i64 {
        &mut self.data[i * self.n + j]
    }
}
