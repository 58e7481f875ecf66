//! Bilinear maps `Q : R^n x R^n -> R^{n'}` stored as dense coefficient
//! tensors, and the algebraic primitives built on them: evaluation, the two
//! contractions, diagonal perturbation, adjoint, symmetrization, and the
//! inflation-map Jacobian.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::scalar::Scalar;

/// Coefficient tensor `coeffs[i][j][k]` of `Q(x,y)_i = sum_jk Q_ijk x_j y_k`,
/// stored flat. `n_in` is the x/t dimension, `n_out` the codimension.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearMap<S> {
    n_in: usize,
    n_out: usize,
    coeffs: Vec<S>,
}

/// Diagonal perturbation direction `u`; one entry per input coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationVector<S>(pub Vec<S>);

impl<S: Scalar> BilinearMap<S> {
    pub fn zero(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, coeffs: vec![S::zero(); n_out * n_in * n_in] }
    }

    /// Build from nested coefficients `coeffs[i][j][k]`, validating the shape.
    pub fn from_nested(n_in: usize, n_out: usize, coeffs: Vec<Vec<Vec<S>>>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        if coeffs.len() != n_out {
            return Err(Error::Dimension(format!(
                "coeffs has {} slices, expected n_out = {}",
                coeffs.len(),
                n_out
            )));
        }
        let mut flat = Vec::with_capacity(n_out * n_in * n_in);
        for (i, slice) in coeffs.into_iter().enumerate() {
            if slice.len() != n_in {
                return Err(Error::Dimension(format!(
                    "coeffs[{i}] has {} rows, expected n_in = {}",
                    slice.len(),
                    n_in
                )));
            }
            for (j, row) in slice.into_iter().enumerate() {
                if row.len() != n_in {
                    return Err(Error::Dimension(format!(
                        "coeffs[{i}][{j}] has {} entries, expected n_in = {}",
                        row.len(),
                        n_in
                    )));
                }
                flat.extend(row);
            }
        }
        Ok(Self { n_in, n_out, coeffs: flat })
    }

    pub fn from_fn(n_in: usize, n_out: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut coeffs = Vec::with_capacity(n_out * n_in * n_in);
        for i in 0..n_out {
            for j in 0..n_in {
                for k in 0..n_in {
                    coeffs.push(f(i, j, k));
                }
            }
        }
        Self { n_in, n_out, coeffs }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn is_square(&self) -> bool {
        self.n_in == self.n_out
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> &S {
        &self.coeffs[(i * self.n_in + j) * self.n_in + k]
    }

    pub fn coeff_mut(&mut self, i: usize, j: usize, k: usize) -> &mut S {
        &mut self.coeffs[(i * self.n_in + j) * self.n_in + k]
    }

    /// Slice `i` as the matrix `(Q_i)_{jk}`.
    pub fn slice(&self, i: usize) -> Mat<S> {
        Mat::from_fn(self.n_in, self.n_in, |j, k| self.coeff(i, j, k).clone())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> BilinearMap<T> {
        BilinearMap {
            n_in: self.n_in,
            n_out: self.n_out,
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    /// `Q(x, y)` componentwise.
    pub fn eval(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        if x.len() != self.n_in || y.len() != self.n_in {
            return Err(Error::Dimension(format!(
                "eval expects vectors of length {}, got {} and {}",
                self.n_in,
                x.len(),
                y.len()
            )));
        }
        let mut out = Vec::with_capacity(self.n_out);
        for i in 0..self.n_out {
            let mut acc = S::zero();
            for j in 0..self.n_in {
                if x[j].is_zero() {
                    continue;
                }
                let mut inner = S::zero();
                for k in 0..self.n_in {
                    inner = inner.add(&self.coeff(i, j, k).mul(&y[k]));
                }
                acc = acc.add(&x[j].mul(&inner));
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Matrix `N(v)` of the map `x -> Q(x, v)`: `N(v)[i][j] = sum_k Q_ijk v_k`.
    pub fn contract_right(&self, v: &[S]) -> Result<Mat<S>> {
        if v.len() != self.n_in {
            return Err(Error::Dimension(format!(
                "contract_right expects length {}, got {}",
                self.n_in,
                v.len()
            )));
        }
        Ok(Mat::from_fn(self.n_out, self.n_in, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.n_in {
                acc = acc.add(&self.coeff(i, j, k).mul(&v[k]));
            }
            acc
        }))
    }

    /// Matrix `M(lambda)[j][k] = sum_i lambda_i Q_ijk`, so that
    /// `x^T M(lambda) y = lambda . Q(x, y)`.
    pub fn contract_left(&self, lambda: &[S]) -> Result<Mat<S>> {
        if lambda.len() != self.n_out {
            return Err(Error::Dimension(format!(
                "contract_left expects length {}, got {}",
                self.n_out,
                lambda.len()
            )));
        }
        Ok(Mat::from_fn(self.n_in, self.n_in, |j, k| {
            let mut acc = S::zero();
            for i in 0..self.n_out {
                acc = acc.add(&lambda[i].mul(self.coeff(i, j, k)));
            }
            acc
        }))
    }

    /// Diagonal perturbation `Q_u(x,y) = Q(x,y) + (u_i x_i y_i)_i`.
    pub fn perturb(&self, u: &PerturbationVector<S>) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Precondition(
                "diagonal perturbation requires n_out = n_in".into(),
            ));
        }
        if u.0.len() != self.n_in {
            return Err(Error::Dimension(format!(
                "perturbation vector has length {}, expected {}",
                u.0.len(),
                self.n_in
            )));
        }
        let mut q = self.clone();
        for (i, ui) in u.0.iter().enumerate() {
            let c = q.coeff(i, i, i).add(ui);
            *q.coeff_mut(i, i, i) = c;
        }
        Ok(q)
    }

    /// `Q*(x, y) = Q(y, x)`.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n_in, self.n_out, |i, j, k| self.coeff(i, k, j).clone())
    }

    /// `(Q + Q*) / 2`; the result satisfies `Q(x,y) = Q(y,x)`.
    pub fn symmetrize(&self) -> Self {
        let two = S::from_i64(2);
        Self::from_fn(self.n_in, self.n_out, |i, j, k| {
            self.coeff(i, j, k).add(self.coeff(i, k, j)).div(&two)
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_out).all(|i| {
            (0..self.n_in)
                .all(|j| (0..self.n_in).all(|k| self.coeff(i, j, k) == self.coeff(i, k, j)))
        })
    }

    /// Matrix of `x -> (d/dx Phi)(x, t) - (d/dt Phi)(x, t)` applied to the
    /// respective slots: entry `(a, b)` is `sum_k Q_abk t_k - sum_j Q_ajb x_j`.
    fn deformation_block(&self, x: &[S], t: &[S]) -> Mat<S> {
        Mat::from_fn(self.n_out, self.n_in, |a, b| {
            let mut acc = S::zero();
            for k in 0..self.n_in {
                acc = acc.add(&self.coeff(a, b, k).mul(&t[k]));
            }
            for j in 0..self.n_in {
                acc = acc.sub(&self.coeff(a, j, b).mul(&x[j]));
            }
            acc
        })
    }

    /// |det| of the inflation-map Jacobian for base point `x` and the k
    /// sample points `ts`; requires `n_in = n_out * (k - 1)`.
    pub fn inflation_jacobian(&self, x: &[S], ts: &[Vec<S>]) -> Result<f64> {
        let k = ts.len();
        if k < 2 {
            return Err(Error::Precondition("inflation map needs k >= 2 points".into()));
        }
        if self.n_in != self.n_out * (k - 1) {
            return Err(Error::Dimension(format!(
                "inflation map needs n_in = n_out*(k-1); got n_in={}, n_out={}, k={k}",
                self.n_in, self.n_out
            )));
        }
        if x.len() != self.n_in || ts.iter().any(|t| t.len() != self.n_in) {
            return Err(Error::Dimension("inflation points must have length n_in".into()));
        }
        let np = self.n_out;
        let size = k * np;
        let mut big = Mat::<S>::zeros(size, size);
        for (i, t) in ts.iter().enumerate() {
            let block = self.deformation_block(x, t);
            for a in 0..np {
                for b in 0..self.n_in {
                    big[(i * np + a, b)] = block[(a, b)].clone();
                }
                big[(i * np + a, self.n_in + a)] = S::one();
            }
        }
        Ok(big.det_bareiss()?.to_f64_lossy().abs())
    }
}

impl BilinearMap<f64> {
    /// |det N(v)| evaluated without allocating, for the hot search loops.
    #[inline]
    pub fn abs_det_contract_right(&self, v: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let n = self.n_in;
        debug_assert_eq!(v.len(), n);
        debug_assert!(self.is_square());
        scratch.clear();
        scratch.resize(n * n, 0.0);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.coeff(i, j, k) * v[k];
                }
                scratch[i * n + j] = acc;
            }
        }
        abs_det_in_place(scratch, n)
    }

    /// |det M(lambda)| without allocating.
    #[inline]
    pub fn abs_det_contract_left(&self, lambda: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let n = self.n_in;
        debug_assert_eq!(lambda.len(), self.n_out);
        scratch.clear();
        scratch.resize(n * n, 0.0);
        for i in 0..self.n_out {
            let li = lambda[i];
            if li == 0.0 {
                continue;
            }
            for j in 0..n {
                for k in 0..n {
                    scratch[j * n + k] += li * self.coeff(i, j, k);
                }
            }
        }
        abs_det_in_place(scratch, n)
    }
}

/// In-place partial-pivot |det| of an n x n buffer.
pub(crate) fn abs_det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in k..n {
                a.swap(piv * n + j, k * n + j);
            }
        }
        let pivot = a[k * n + k];
        det *= pivot;
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    det.abs()
}

/// Complex-multiplication map on R^2: `Q(x,y) = (x1 y1 - x2 y2, x1 y2 + x2 y1)`.
pub fn complex_multiplication() -> BilinearMap<f64> {
    BilinearMap::from_nested(
        2,
        2,
        vec![
            vec![vec![1.0, 0.0], vec![0.0, -1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ],
    )
    .unwrap()
}

/// Product-type map on R^n: `Q(x,t) = (x_1 t_1, ..., x_n t_n)`.
pub fn product_type(n: usize) -> BilinearMap<f64> {
    BilinearMap::from_fn(n, n, |i, j, k| if i == j && j == k { 1.0 } else { 0.0 })
}
