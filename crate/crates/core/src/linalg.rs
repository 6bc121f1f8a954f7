//! Complex linear algebra where every elementary operation goes through the
//! emulated arithmetic of [`crate::fp`].
//!
//! All reductions use recursive summation in index order over the real
//! expansion of the complex products: the `i`-th term `x_i·y_i` contributes
//! `(Re x·Re y, −Im x·Im y)` to the real sum and `(Re x·Im y, Im x·Re y)` to
//! the imaginary sum, so an `n`-term complex dot product is two independent
//! `2n`-term real sums. In mixed mode each real sum is cut into blocks of `b`
//! terms, accumulated in the low format, and the block partials are combined
//! in the high format.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fp::{FloatFormat, RangeMode, Rounder, RoundingMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: {op} of {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("empty operand")]
    Empty,
    #[error("matrix is numerically not positive definite at this precision (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("zero diagonal entry at index {index}")]
    ZeroDiagonal { index: usize },
    #[error("invalid precision policy: {0}")]
    InvalidPolicy(String),
}

/// A complex column vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        ComplexVector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        ComplexVector(vec![Complex64::new(0.0, 0.0); n])
    }

    /// The `k`-th standard basis vector of length `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[k] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self, LinalgError> {
        if re.len() != im.len() {
            return Err(LinalgError::LengthMismatch {
                left: re.len(),
                right: im.len(),
            });
        }
        Ok(ComplexVector(
            re.iter()
                .zip(im)
                .map(|(&r, &i)| Complex64::new(r, i))
                .collect(),
        ))
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm2_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Entrywise difference in full precision.
    pub fn sub(&self, other: &ComplexVector) -> ComplexVector {
        ComplexVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: Complex64) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| z * s).collect())
    }
}

impl Deref for ComplexVector {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for ComplexVector {
    fn from(v: Vec<Complex64>) -> Self {
        ComplexVector(v)
    }
}

impl FromIterator<Complex64> for ComplexVector {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        ComplexVector(iter.into_iter().collect())
    }
}

/// A dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_row_major(
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    ) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if let Some(c) = columns.iter().find(|c| c.len() != rows) {
            return Err(LinalgError::LengthMismatch {
                left: c.len(),
                right: rows,
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Largest singular value, computed in full precision.
    pub fn spectral_norm(&self) -> f64 {
        self.to_nalgebra().singular_values().max()
    }

    /// Singular values in full precision, in no particular order.
    pub fn singular_values(&self) -> Vec<f64> {
        self.to_nalgebra()
            .singular_values()
            .iter()
            .copied()
            .collect()
    }

    /// Eigenvalues of `AᴴA` in full precision, ascending.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let a = self.to_nalgebra();
        let g = a.adjoint() * &a;
        let mut ev: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `κ₂(AᴴA)` of this matrix, in full precision.
    pub fn gram_condition_number(&self) -> f64 {
        let ev = self.gram_eigenvalues();
        ev[ev.len() - 1] / ev[0]
    }

    /// Spectral condition number `σ_max/σ_min`.
    pub fn condition_number(&self) -> f64 {
        let sv = self.to_nalgebra().singular_values();
        sv.max() / sv.min()
    }

    /// `(AᴴA)⁻¹` in full precision; `None` if singular.
    pub fn gram_inverse(&self) -> Option<ComplexMatrix> {
        let a = self.to_nalgebra();
        let g = a.adjoint() * &a;
        let inv = g.try_inverse()?;
        let (r, c) = inv.shape();
        Some(Self::from_fn(r, c, |i, j| inv[(i, j)]))
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.rows)
            .all(|i| (0..i.min(self.cols)).all(|j| self[(i, j)] == Complex64::new(0.0, 0.0)))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    UniformLow,
    UniformHigh,
    /// Blocked summation: low-precision blocks of this many real terms,
    /// combined in high precision.
    Mixed {
        block_size: usize,
    },
}

/// Which formats a computation uses and how it rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPolicy {
    pub low: FloatFormat,
    pub high: FloatFormat,
    pub mode: PolicyMode,
    pub rounding: RoundingMode,
    pub range: RangeMode,
}

impl PrecisionPolicy {
    /// Everything in one format, nearest-even, unbounded range.
    pub fn uniform(format: FloatFormat) -> Self {
        PrecisionPolicy {
            low: format,
            high: format,
            mode: PolicyMode::UniformLow,
            rounding: RoundingMode::NearestEven,
            range: RangeMode::Unbounded,
        }
    }

    pub fn full() -> Self {
        Self::uniform(FloatFormat::FP64)
    }

    pub fn mixed(low: FloatFormat, high: FloatFormat, block_size: usize) -> Self {
        PrecisionPolicy {
            low,
            high,
            mode: PolicyMode::Mixed { block_size },
            rounding: RoundingMode::NearestEven,
            range: RangeMode::Unbounded,
        }
    }

    pub fn with_rounding(mut self, rounding: RoundingMode) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_range(mut self, range: RangeMode) -> Self {
        self.range = range;
        self
    }

    /// Format of products, of uniform reductions, and of the factorization
    /// and triangular solves.
    pub fn working_format(&self) -> FloatFormat {
        match self.mode {
            PolicyMode::UniformHigh => self.high,
            _ => self.low,
        }
    }

    pub fn block_size(&self) -> Option<usize> {
        match self.mode {
            PolicyMode::Mixed { block_size } => Some(block_size),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        if let PolicyMode::Mixed { block_size } = self.mode {
            if block_size == 0 {
                return Err(LinalgError::InvalidPolicy(
                    "block size must be at least 1".into(),
                ));
            }
            if self.high.significand_bits() < self.low.significand_bits() {
                return Err(LinalgError::InvalidPolicy(format!(
                    "high format {} is narrower than low format {}",
                    self.high, self.low
                )));
            }
        }
        Ok(())
    }

    /// The stateful kernels for this policy.
    pub fn machine(&self) -> Result<FpMachine, LinalgError> {
        FpMachine::new(*self)
    }
}

/// Which triangular system [`FpMachine::trisolve`] solves with an upper
/// triangular `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangularSide {
    /// `Rᴴ·x = b` by forward substitution.
    LowerConjugate,
    /// `R·x = b` by back substitution.
    Upper,
}

/// Two parallel real reductions, cut into blocks when mixed.
struct Reduction {
    block: usize,
    pos: usize,
    partial: f64,
    total: Option<f64>,
}

impl Reduction {
    fn new(block: Option<usize>) -> Self {
        Reduction {
            block: block.unwrap_or(usize::MAX),
            pos: 0,
            partial: 0.0,
            total: None,
        }
    }

    #[inline]
    fn push(&mut self, term: f64, work: &mut Rounder, comb: &mut Option<&mut Rounder>) {
        if self.pos % self.block == 0 {
            if self.pos > 0 {
                self.fold(comb);
            }
            self.partial = term;
        } else {
            self.partial = work.add(self.partial, term);
        }
        self.pos += 1;
    }

    #[inline]
    fn fold(&mut self, comb: &mut Option<&mut Rounder>) {
        self.total = Some(match (self.total, comb) {
            (None, _) => self.partial,
            (Some(t), Some(h)) => h.add(t, self.partial),
            (Some(t), None) => t + self.partial,
        });
    }

    fn finish(mut self, comb: &mut Option<&mut Rounder>) -> f64 {
        if self.pos == 0 {
            return 0.0;
        }
        self.fold(comb);
        self.total.unwrap_or(0.0)
    }
}

/// Kernels bound to a [`PrecisionPolicy`], carrying the rounding streams.
#[derive(Debug, Clone)]
pub struct FpMachine {
    policy: PrecisionPolicy,
    low: Rounder,
    high: Rounder,
    store: Rounder,
}

const HIGH_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl FpMachine {
    pub fn new(policy: PrecisionPolicy) -> Result<Self, LinalgError> {
        policy.validate()?;
        let high_mode = match policy.rounding {
            RoundingMode::Stochastic { seed } => RoundingMode::Stochastic {
                seed: seed ^ HIGH_STREAM_SALT,
            },
            m => m,
        };
        Ok(FpMachine {
            policy,
            low: Rounder::new(policy.low, policy.rounding, policy.range),
            high: Rounder::new(policy.high, high_mode, policy.range),
            store: Rounder::new(
                policy.working_format(),
                RoundingMode::NearestEven,
                policy.range,
            ),
        })
    }

    pub fn policy(&self) -> &PrecisionPolicy {
        &self.policy
    }

    fn work(&mut self) -> &mut Rounder {
        match self.policy.mode {
            PolicyMode::UniformHigh => &mut self.high,
            _ => &mut self.low,
        }
    }

    /// Storage conversion into the working format. Always round-to-nearest,
    /// so it is idempotent; stochastic rounding applies to arithmetic only.
    pub fn round_scalar(&mut self, z: Complex64) -> Complex64 {
        self.store.round_complex(z)
    }

    /// One rounded complex product in the working format.
    pub fn cmul(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        self.work().cmul(a, b)
    }

    /// Rounds every component into the working format.
    pub fn round_vector(&mut self, v: &ComplexVector) -> ComplexVector {
        let w = &mut self.store;
        v.iter().map(|&z| w.round_complex(z)).collect()
    }

    pub fn round_matrix(&mut self, m: &ComplexMatrix) -> ComplexMatrix {
        let w = &mut self.store;
        ComplexMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&z| w.round_complex(z)).collect(),
        }
    }

    /// `Σ op(x_i)·y_i` with `op` the conjugate when `conj_x` is set, over
    /// already-representable operands.
    fn reduce<I>(&mut self, pairs: I, conj_x: bool) -> Complex64
    where
        I: Iterator<Item = (Complex64, Complex64)>,
    {
        let block = self.policy.block_size();
        let (work, mut comb) = match self.policy.mode {
            PolicyMode::UniformLow => (&mut self.low, None),
            PolicyMode::UniformHigh => (&mut self.high, None),
            PolicyMode::Mixed { .. } => (&mut self.low, Some(&mut self.high)),
        };
        let mut re = Reduction::new(block);
        let mut im = Reduction::new(block);
        for (x, y) in pairs {
            let xi = if conj_x { -x.im } else { x.im };
            let rr = work.mul(x.re, y.re);
            let ii = work.mul(xi, y.im);
            let ri = work.mul(x.re, y.im);
            let ir = work.mul(xi, y.re);
            re.push(rr, work, &mut comb);
            re.push(-ii, work, &mut comb);
            im.push(ri, work, &mut comb);
            im.push(ir, work, &mut comb);
        }
        Complex64::new(re.finish(&mut comb), im.finish(&mut comb))
    }

    /// `aᴴb` under the policy, inputs rounded first.
    pub fn dot(&mut self, a: &ComplexVector, b: &ComplexVector) -> Result<Complex64, LinalgError> {
        check_lengths(a, b)?;
        let a = self.round_vector(a);
        let b = self.round_vector(b);
        Ok(self.reduce(a.iter().copied().zip(b.iter().copied()), true))
    }

    /// `A·x`, one reduction per row.
    pub fn matvec(
        &mut self,
        a: &ComplexMatrix,
        x: &ComplexVector,
    ) -> Result<ComplexVector, LinalgError> {
        if a.cols != x.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "matvec",
                lhs: a.dims(),
                rhs: (x.len(), 1),
            });
        }
        let a = self.round_matrix(a);
        let x = self.round_vector(x);
        Ok((0..a.rows)
            .map(|i| self.reduce(a.row(i).iter().copied().zip(x.iter().copied()), false))
            .collect())
    }

    /// `Aᴴ·x` without materializing the adjoint.
    pub fn adjoint_matvec(
        &mut self,
        a: &ComplexMatrix,
        x: &ComplexVector,
    ) -> Result<ComplexVector, LinalgError> {
        if a.rows != x.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "adjoint_matvec",
                lhs: (a.cols, a.rows),
                rhs: (x.len(), 1),
            });
        }
        let a = self.round_matrix(a);
        let x = self.round_vector(x);
        Ok((0..a.cols)
            .map(|j| {
                let col = (0..a.rows).map(|i| a[(i, j)]);
                self.reduce(col.zip(x.iter().copied()), true)
            })
            .collect())
    }

    /// `A·B`, one reduction per entry.
    pub fn matmul(
        &mut self,
        a: &ComplexMatrix,
        b: &ComplexMatrix,
    ) -> Result<ComplexMatrix, LinalgError> {
        if a.cols != b.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                lhs: a.dims(),
                rhs: b.dims(),
            });
        }
        let a = self.round_matrix(a);
        let b = self.round_matrix(b);
        let mut out = ComplexMatrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let col = (0..b.rows).map(|k| b[(k, j)]);
                out[(i, j)] = self.reduce(a.row(i).iter().copied().zip(col), false);
            }
        }
        Ok(out)
    }

    /// `AᴴA`; entry `(i, j)` is the dot product of columns `i` and `j`.
    pub fn gram(&mut self, a: &ComplexMatrix) -> ComplexMatrix {
        let a = self.round_matrix(a);
        let n = a.cols;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let ci = (0..a.rows).map(|k| a[(k, i)]);
                let cj = (0..a.rows).map(|k| a[(k, j)]);
                out[(i, j)] = self.reduce(ci.zip(cj), true);
            }
        }
        out
    }

    /// Upper-triangular `R` with real positive diagonal and `RᴴR ≈ C`.
    ///
    /// Column-oriented: for column `j`, rows `i = 0..=j` are computed as
    /// `C_ij − Σ_{k<i} conj(R_ki)·R_kj`, accumulated left to right, then
    /// divided by `R_ii` (or square-rooted on the diagonal). Only the upper
    /// triangle of `C` is read.
    pub fn cholesky(&mut self, c: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        let n = c.rows;
        if n != c.cols {
            return Err(LinalgError::DimensionMismatch {
                op: "cholesky",
                lhs: c.dims(),
                rhs: c.dims(),
            });
        }
        let c = self.round_matrix(c);
        let w = self.work();
        let mut r = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut acc = c[(i, j)];
                for k in 0..i {
                    let p = w.cmul(r[(k, i)].conj(), r[(k, j)]);
                    acc = w.csub(acc, p);
                }
                if i < j {
                    let d = r[(i, i)].re;
                    r[(i, j)] = Complex64::new(w.div(acc.re, d), w.div(acc.im, d));
                } else {
                    // the diagonal accumulates |R_kj|² exactly in the imaginary part
                    let pivot = acc.re;
                    if pivot.is_nan() || pivot <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite {
                            pivot: j,
                            value: pivot,
                        });
                    }
                    r[(j, j)] = Complex64::new(w.sqrt(pivot), 0.0);
                }
            }
        }
        Ok(r)
    }

    /// Forward (`Rᴴx = b`) or back (`Rx = b`) substitution with upper `R`.
    pub fn trisolve(
        &mut self,
        r: &ComplexMatrix,
        rhs: &ComplexVector,
        side: TriangularSide,
    ) -> Result<ComplexVector, LinalgError> {
        let n = r.rows;
        if n != r.cols || n != rhs.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "trisolve",
                lhs: r.dims(),
                rhs: (rhs.len(), 1),
            });
        }
        if let Some(index) = (0..n).find(|&i| r[(i, i)] == Complex64::new(0.0, 0.0)) {
            return Err(LinalgError::ZeroDiagonal { index });
        }
        let r = self.round_matrix(r);
        let b = self.round_vector(rhs);
        let w = self.work();
        let mut x = ComplexVector::zeros(n);
        match side {
            TriangularSide::LowerConjugate => {
                for i in 0..n {
                    let mut acc = b[i];
                    for k in 0..i {
                        let p = w.cmul(r[(k, i)].conj(), x[k]);
                        acc = w.csub(acc, p);
                    }
                    x[i] = w.cdiv(acc, r[(i, i)].conj());
                }
            }
            TriangularSide::Upper => {
                for i in (0..n).rev() {
                    let mut acc = b[i];
                    for k in i + 1..n {
                        let p = w.cmul(r[(i, k)], x[k]);
                        acc = w.csub(acc, p);
                    }
                    x[i] = w.cdiv(acc, r[(i, i)]);
                }
            }
        }
        Ok(x)
    }

    /// Solves `(RᴴR)·x = b` with the two triangular sweeps.
    pub fn cholesky_solve(
        &mut self,
        r: &ComplexMatrix,
        rhs: &ComplexVector,
    ) -> Result<ComplexVector, LinalgError> {
        let q = self.trisolve(r, rhs, TriangularSide::LowerConjugate)?;
        self.trisolve(r, &q, TriangularSide::Upper)
    }
}

fn check_lengths(a: &ComplexVector, b: &ComplexVector) -> Result<(), LinalgError> {
    if a.is_empty() || b.is_empty() {
        return Err(LinalgError::Empty);
    }
    if a.len() != b.len() {
        return Err(LinalgError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn require_uniform(policy: &PrecisionPolicy) -> Result<(), LinalgError> {
    match policy.mode {
        PolicyMode::Mixed { .. } => Err(LinalgError::InvalidPolicy(
            "expected a uniform policy; use the blocked kernels for mixed precision".into(),
        )),
        _ => Ok(()),
    }
}

fn require_mixed(policy: &PrecisionPolicy) -> Result<(), LinalgError> {
    match policy.mode {
        PolicyMode::Mixed { .. } => Ok(()),
        _ => Err(LinalgError::InvalidPolicy("expected a mixed policy".into())),
    }
}

/// `aᴴb` in a single format with recursive summation.
pub fn inner_product_fp(
    a: &ComplexVector,
    b: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<Complex64, LinalgError> {
    require_uniform(policy)?;
    policy.machine()?.dot(a, b)
}

pub fn matvec_fp(
    a: &ComplexMatrix,
    x: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<ComplexVector, LinalgError> {
    require_uniform(policy)?;
    policy.machine()?.matvec(a, x)
}

pub fn matmul_fp(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    policy: &PrecisionPolicy,
) -> Result<ComplexMatrix, LinalgError> {
    require_uniform(policy)?;
    policy.machine()?.matmul(a, b)
}

pub fn cholesky_fp(
    c: &ComplexMatrix,
    policy: &PrecisionPolicy,
) -> Result<ComplexMatrix, LinalgError> {
    policy.machine()?.cholesky(c)
}

pub fn trisolve_fp(
    r: &ComplexMatrix,
    rhs: &ComplexVector,
    side: TriangularSide,
    policy: &PrecisionPolicy,
) -> Result<ComplexVector, LinalgError> {
    policy.machine()?.trisolve(r, rhs, side)
}

/// `aᴴd` with low-precision blocks combined in high precision.
pub fn blocked_inner_mixed(
    a: &ComplexVector,
    d: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<Complex64, LinalgError> {
    require_mixed(policy)?;
    policy.machine()?.dot(a, d)
}

pub fn blocked_matmul_mixed(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    policy: &PrecisionPolicy,
) -> Result<ComplexMatrix, LinalgError> {
    require_mixed(policy)?;
    policy.machine()?.matmul(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{gamma_deterministic, gamma_n, xi_bn};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
        let v = random_vector(rng, n);
        let s = v.norm2();
        v.iter().map(|z| z / s).collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(m, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Straightforward 64-bit expanded dot product in the same term order.
    fn reference_dot(x: &[Complex64], y: &[Complex64], conj_x: bool) -> Complex64 {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (a, b) in x.iter().zip(y) {
            let ai = if conj_x { -a.im } else { a.im };
            re += a.re * b.re;
            re += -(ai * b.im);
            im += a.re * b.im;
            im += ai * b.re;
        }
        c(re, im)
    }

    fn fp16() -> PrecisionPolicy {
        PrecisionPolicy::uniform(FloatFormat::FP16)
    }

    fn mixed32() -> PrecisionPolicy {
        PrecisionPolicy::mixed(FloatFormat::FP16, FloatFormat::FP32, 32)
    }

    #[test]
    fn basis_vector_picks_entry_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for fmt in FloatFormat::PRESETS {
            let p = PrecisionPolicy::uniform(fmt);
            let b = p
                .machine()
                .unwrap()
                .round_vector(&random_vector(&mut rng, 17));
            let got = inner_product_fp(&ComplexVector::basis(17, 0), &b, &p).unwrap();
            assert_eq!(got, b[0]);
        }
    }

    #[test]
    fn full_precision_matches_reference_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PrecisionPolicy::full();
        let a = random_vector(&mut rng, 300);
        let b = random_vector(&mut rng, 300);
        assert_eq!(
            inner_product_fp(&a, &b, &p).unwrap(),
            reference_dot(&a, &b, true)
        );

        let m = random_matrix(&mut rng, 7, 300);
        let y = matvec_fp(&m, &b, &p).unwrap();
        for i in 0..7 {
            assert_eq!(y[i], reference_dot(m.row(i), &b, false));
        }
        let bm = random_matrix(&mut rng, 300, 3);
        let prod = matmul_fp(&m, &bm, &p).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                assert_eq!(prod[(i, j)], reference_dot(m.row(i), &bm.column(j), false));
            }
        }
        // mixed fp64/fp64 degenerates to plain blocked 64-bit summation
        let mp = PrecisionPolicy::mixed(FloatFormat::FP64, FloatFormat::FP64, 600);
        assert_eq!(
            blocked_inner_mixed(&a, &b, &mp).unwrap(),
            reference_dot(&a, &b, true)
        );
    }

    #[test]
    fn length_and_dimension_errors() {
        let a = ComplexVector::zeros(3);
        let b = ComplexVector::zeros(4);
        assert!(matches!(
            inner_product_fp(&a, &b, &fp16()),
            Err(LinalgError::LengthMismatch { .. })
        ));
        assert!(matches!(
            blocked_inner_mixed(&a, &b, &mixed32()),
            Err(LinalgError::LengthMismatch { .. })
        ));
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            matvec_fp(&m, &b, &fp16()),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            matmul_fp(&m, &m, &fp16()),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            inner_product_fp(&a, &a, &mixed32()),
            Err(LinalgError::InvalidPolicy(_))
        ));
        assert!(matches!(
            blocked_inner_mixed(&a, &a, &fp16()),
            Err(LinalgError::InvalidPolicy(_))
        ));
        let bad = PrecisionPolicy::mixed(FloatFormat::FP16, FloatFormat::FP32, 0);
        assert!(bad.machine().is_err());
    }

    #[test]
    fn identity_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = fp16();
        let x = p
            .machine()
            .unwrap()
            .round_vector(&random_vector(&mut rng, 9));
        assert_eq!(matvec_fp(&ComplexMatrix::identity(9), &x, &p).unwrap(), x);
        let a = random_matrix(&mut rng, 5, 9);
        let ar = p.machine().unwrap().round_matrix(&a);
        assert_eq!(matmul_fp(&a, &ComplexMatrix::identity(9), &p).unwrap(), ar);
        assert_eq!(
            blocked_matmul_mixed(&a, &ComplexMatrix::identity(9), &mixed32()).unwrap(),
            ar
        );
    }

    #[test]
    fn single_row_reduces_to_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_vector(&mut rng, 50);
        let b = random_vector(&mut rng, 50);
        // a row of conj(a) times b is aᴴb
        let row =
            ComplexMatrix::from_row_major(1, 50, a.iter().map(|z| z.conj()).collect()).unwrap();
        let col = ComplexMatrix::from_row_major(50, 1, b.to_vec()).unwrap();
        for (p, ip) in [
            (fp16(), inner_product_fp(&a, &b, &fp16()).unwrap()),
            (mixed32(), blocked_inner_mixed(&a, &b, &mixed32()).unwrap()),
        ] {
            assert_eq!(p.machine().unwrap().matvec(&row, &b).unwrap()[0], ip);
            assert_eq!(p.machine().unwrap().matmul(&row, &col).unwrap()[(0, 0)], ip);
        }
    }

    #[test]
    fn inner_product_probabilistic_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = fp16();
        let u = FloatFormat::FP16.unit_roundoff();
        let n = 1000;
        let bound = 2f64.sqrt() * gamma_n(2 * n, u, 1.0).unwrap();
        let det = 2f64.sqrt() * gamma_deterministic(2 * n, u).unwrap();
        let trials = 10_000;
        let mut within = 0;
        for _ in 0..trials {
            let mut m = p.machine().unwrap();
            let a = m.round_vector(&unit_vector(&mut rng, n));
            let b = m.round_vector(&unit_vector(&mut rng, n));
            let err = (m.dot(&a, &b).unwrap() - reference_dot(&a, &b, true)).norm()
                / (a.norm2() * b.norm2());
            assert!(err <= det);
            if err <= bound {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.99 * trials as f64);
    }

    #[test]
    fn matvec_and_matmul_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = fp16();
        let u = FloatFormat::FP16.unit_roundoff();
        for _ in 0..50 {
            let mut m = p.machine().unwrap();
            let a = m.round_matrix(&random_matrix(&mut rng, 256, 4));
            let x = m.round_vector(&random_vector(&mut rng, 4));
            let y = m.matvec(&a, &x).unwrap();
            let exact: ComplexVector = (0..256)
                .map(|i| reference_dot(a.row(i), &x, false))
                .collect();
            let bound = (8f64).sqrt() * gamma_n(8, u, 1.0).unwrap() * a.spectral_norm() * x.norm2();
            assert!(y.sub(&exact).norm2() <= bound);

            let lhs = m.round_matrix(&random_matrix(&mut rng, 4, 256));
            let rhs = m.round_matrix(&random_matrix(&mut rng, 256, 4));
            let prod = m.matmul(&lhs, &rhs).unwrap();
            let exact = ComplexMatrix::from_fn(4, 4, |i, j| {
                reference_dot(lhs.row(i), &rhs.column(j), false)
            });
            let bound = 2.0
                * 4.0
                * gamma_n(512, u, 1.0).unwrap()
                * lhs.spectral_norm()
                * rhs.spectral_norm();
            assert!(prod.sub(&exact).spectral_norm() <= bound);
        }
    }

    #[test]
    fn blocked_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_vector(&mut rng, 40);
        let d = random_vector(&mut rng, 40);
        // one block covering the 80-term expansion is the uniform low kernel
        let single = PrecisionPolicy::mixed(FloatFormat::FP16, FloatFormat::FP32, 80);
        assert_eq!(
            blocked_inner_mixed(&a, &d, &single).unwrap(),
            inner_product_fp(&a, &d, &fp16()).unwrap()
        );
        // b = 1: products in fp16, every addition in fp32
        let ones = PrecisionPolicy::mixed(FloatFormat::FP16, FloatFormat::FP32, 1);
        let mut lo = Rounder::new(
            FloatFormat::FP16,
            RoundingMode::NearestEven,
            RangeMode::Unbounded,
        );
        let mut hi = Rounder::new(
            FloatFormat::FP32,
            RoundingMode::NearestEven,
            RangeMode::Unbounded,
        );
        let ar: Vec<Complex64> = a.iter().map(|&z| lo.round_complex(z)).collect();
        let dr: Vec<Complex64> = d.iter().map(|&z| lo.round_complex(z)).collect();
        let mut re_terms = vec![];
        let mut im_terms = vec![];
        for (x, y) in ar.iter().zip(&dr) {
            re_terms.push(lo.mul(x.re, y.re));
            re_terms.push(-lo.mul(-x.im, y.im));
            im_terms.push(lo.mul(x.re, y.im));
            im_terms.push(lo.mul(-x.im, y.re));
        }
        let mut sum = |ts: &[f64]| ts[1..].iter().fold(ts[0], |acc, &t| hi.add(acc, t));
        let want = c(sum(&re_terms), sum(&im_terms));
        assert_eq!(blocked_inner_mixed(&a, &d, &ones).unwrap(), want);
    }

    #[test]
    fn blocked_inner_error_within_mixed_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = mixed32();
        let ul = FloatFormat::FP16.unit_roundoff();
        let uh = FloatFormat::FP32.unit_roundoff();
        let xi = xi_bn(32, 1000, ul, uh, 1.0).unwrap();
        for _ in 0..1000 {
            let mut m = p.machine().unwrap();
            let a = m.round_vector(&unit_vector(&mut rng, 1000));
            let d = m.round_vector(&unit_vector(&mut rng, 1000));
            let err = (m.dot(&a, &d).unwrap() - reference_dot(&a, &d, true)).norm()
                / (a.norm2() * d.norm2());
            assert!(err < 4.5e-3);
            assert!(err <= 2f64.sqrt() * xi);
        }
    }

    #[test]
    fn blocked_gram_entrywise_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = mixed32();
        let ul = FloatFormat::FP16.unit_roundoff();
        let uh = FloatFormat::FP32.unit_roundoff();
        let xi = xi_bn(32, 1024, ul, uh, 1.0).unwrap();
        let mut m = p.machine().unwrap();
        let h = m.round_matrix(&random_matrix(&mut rng, 1024, 4));
        let hh = h.adjoint();
        let g = m.matmul(&hh, &h).unwrap();
        assert_eq!(g, m.gram(&h));
        for i in 0..4 {
            for j in 0..4 {
                let (ci, cj) = (h.column(i), h.column(j));
                let exact = reference_dot(&ci, &cj, true);
                assert!((g[(i, j)] - exact).norm() <= 2f64.sqrt() * xi * ci.norm2() * cj.norm2());
            }
        }
    }

    #[test]
    fn blocked_reassociation_only_changes_combination() {
        // permuting whole blocks of the expansion changes the result by at
        // most the high-precision combination error
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = PrecisionPolicy::mixed(FloatFormat::FP16, FloatFormat::FP32, 8);
        let uh = FloatFormat::FP32.unit_roundoff();
        let n = 64; // 128 terms per real sum, 16 blocks of 8 terms = 4 complex entries
        let mut m = p.machine().unwrap();
        let a = m.round_vector(&random_vector(&mut rng, n));
        let d = m.round_vector(&random_vector(&mut rng, n));
        let base = m.dot(&a, &d).unwrap();
        let order: Vec<usize> = (0..16).rev().collect();
        let permute = |v: &ComplexVector| -> ComplexVector {
            order
                .iter()
                .flat_map(|&blk| v[blk * 4..blk * 4 + 4].to_vec())
                .collect()
        };
        let swapped = m.dot(&permute(&a), &permute(&d)).unwrap();
        let abs_sum: f64 = a
            .iter()
            .zip(d.iter())
            .map(|(x, y)| (x.conj() * y).l1_norm())
            .sum();
        let tol = 2.0 * gamma_deterministic(16, uh).unwrap() * abs_sum * 1.01;
        assert!(
            (base - swapped).norm() <= tol,
            "{} > {tol}",
            (base - swapped).norm()
        );
    }

    #[test]
    fn cholesky_examples() {
        let p = fp16();
        let i3 = ComplexMatrix::identity(3);
        assert_eq!(cholesky_fp(&i3, &p).unwrap(), i3);
        let mut d = ComplexMatrix::zeros(2, 2);
        d[(0, 0)] = c(4.0, 0.0);
        d[(1, 1)] = c(9.0, 0.0);
        let r = cholesky_fp(&d, &p).unwrap();
        assert_eq!(r[(0, 0)], c(2.0, 0.0));
        assert_eq!(r[(1, 1)], c(3.0, 0.0));
        assert_eq!(r[(0, 1)], c(0.0, 0.0));
        let mut bad = ComplexMatrix::identity(2);
        bad[(1, 1)] = c(-1.0, 0.0);
        assert!(matches!(
            cholesky_fp(&bad, &p),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
        // singular: second pivot is exactly zero
        let g = ComplexMatrix::from_row_major(
            2,
            2,
            vec![c(4.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        assert!(matches!(
            cholesky_fp(&g, &p),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cholesky_backward_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = fp16();
        let u = FloatFormat::FP16.unit_roundoff();
        let k = 4;
        let g = gamma_deterministic(2 * k + 1, u).unwrap();
        let factor = 2.0 * k as f64 * g / (1.0 - 2.0 * k as f64 * g);
        for _ in 0..200 {
            let mut m = p.machine().unwrap();
            let h = m.round_matrix(&random_matrix(&mut rng, 256, k));
            let gram = m.gram(&h);
            let r = m.cholesky(&gram).unwrap();
            assert!(r.is_upper_triangular());
            for i in 0..k {
                assert_eq!(r[(i, i)].im, 0.0);
                assert!(r[(i, i)].re > 0.0);
            }
            let rr = ComplexMatrix::from_fn(k, k, |i, j| {
                (0..k).map(|l| r[(l, i)].conj() * r[(l, j)]).sum()
            });
            let resid = rr.sub(&gram).spectral_norm();
            assert!(resid <= factor * h.spectral_norm().powi(2), "{resid}");
        }
    }

    #[test]
    fn trisolve_examples_and_errors() {
        let p = fp16();
        let rhs = ComplexVector::new(vec![c(1.5, -2.0), c(0.25, 3.0)]);
        for side in [TriangularSide::Upper, TriangularSide::LowerConjugate] {
            assert_eq!(
                trisolve_fp(&ComplexMatrix::identity(2), &rhs, side, &p).unwrap(),
                rhs
            );
        }
        let two = ComplexMatrix::from_row_major(1, 1, vec![c(2.0, 0.0)]).unwrap();
        let six = ComplexVector::new(vec![c(6.0, 0.0)]);
        assert_eq!(
            trisolve_fp(&two, &six, TriangularSide::Upper, &p).unwrap()[0],
            c(3.0, 0.0)
        );
        let mut z = ComplexMatrix::identity(2);
        z[(1, 1)] = c(0.0, 0.0);
        assert!(matches!(
            trisolve_fp(&z, &rhs, TriangularSide::Upper, &p),
            Err(LinalgError::ZeroDiagonal { index: 1 })
        ));
        // complex diagonal
        let r = ComplexMatrix::from_row_major(
            2,
            2,
            vec![c(1.0, 1.0), c(0.5, 0.0), c(0.0, 0.0), c(2.0, -1.0)],
        )
        .unwrap();
        let x = trisolve_fp(&r, &rhs, TriangularSide::Upper, &PrecisionPolicy::full()).unwrap();
        let back = ComplexVector::new(vec![r[(0, 0)] * x[0] + r[(0, 1)] * x[1], r[(1, 1)] * x[1]]);
        assert!(back.sub(&rhs).norm2() < 1e-14);
        let y = trisolve_fp(
            &r,
            &rhs,
            TriangularSide::LowerConjugate,
            &PrecisionPolicy::full(),
        )
        .unwrap();
        let back = ComplexVector::new(vec![
            r[(0, 0)].conj() * y[0],
            r[(0, 1)].conj() * y[0] + r[(1, 1)].conj() * y[1],
        ]);
        assert!(back.sub(&rhs).norm2() < 1e-14);
    }

    #[test]
    fn normal_equation_solve_backward_error() {
        // (C + ΔC)x = c with ‖ΔC‖₂ bounded by the combined factorization and
        // two-solve factor, over random Gram systems of size up to 8
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = FloatFormat::FP16.unit_roundoff();
        for trial in 0..1000 {
            let k = 1 + trial % 8;
            let mut m = fp16().machine().unwrap();
            let h = m.round_matrix(&random_matrix(&mut rng, 64, k));
            let gram = m.gram(&h);
            let rhs = m.round_vector(&random_vector(&mut rng, k));
            let Ok(r) = m.cholesky(&gram) else { continue };
            let x = m.cholesky_solve(&r, &rhs).unwrap();
            // smallest backward perturbation: ‖Cx − c‖ / ‖x‖
            let cx: ComplexVector = (0..k)
                .map(|i| (0..k).map(|j| gram[(i, j)] * x[j]).sum::<Complex64>())
                .collect();
            let eta = cx.sub(&rhs).norm2() / x.norm2();
            let g1 = gamma_deterministic(2 * k + 1, u).unwrap();
            let g3 = gamma_deterministic(6 * k + 1, u).unwrap();
            let factor = 2.0 * k as f64 * g3 / (1.0 - 2.0 * k as f64 * g1);
            assert!(eta <= factor * h.spectral_norm().powi(2), "k={k} eta={eta}");
        }
    }

    #[test]
    fn reproducible_under_stochastic_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_vector(&mut rng, 200);
        let b = random_vector(&mut rng, 200);
        let p = fp16().with_rounding(RoundingMode::Stochastic { seed: 77 });
        let x = inner_product_fp(&a, &b, &p).unwrap();
        let y = inner_product_fp(&a, &b, &p).unwrap();
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
        let q = fp16().with_rounding(RoundingMode::Stochastic { seed: 78 });
        assert_ne!(inner_product_fp(&a, &b, &q).unwrap(), x);
    }

    #[test]
    fn full_precision_helpers() {
        let h = ComplexMatrix::from_row_major(
            3,
            2,
            vec![
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(2.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
            ],
        )
        .unwrap();
        assert!((h.spectral_norm() - 2.0).abs() < 1e-12);
        assert!((h.gram_condition_number() - 4.0).abs() < 1e-12);
        let inv = h.gram_inverse().unwrap();
        assert!((inv[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((inv[(1, 1)].re - 0.25).abs() < 1e-12);
        assert_eq!(h.adjoint().dims(), (2, 3));
        assert!(ComplexMatrix::from_row_major(0, 2, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn deterministic_bound_always_holds(seed in any::<u64>(), n in 1usize..300, fmt_idx in 0usize..3) {
            let fmt = FloatFormat::PRESETS[fmt_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = PrecisionPolicy::uniform(fmt);
            let mut m = p.machine().unwrap();
            let a = m.round_vector(&random_vector(&mut rng, n));
            let b = m.round_vector(&random_vector(&mut rng, n));
            let err = (m.dot(&a, &b).unwrap() - reference_dot(&a, &b, true)).norm();
            let det = gamma_deterministic(2 * n, fmt.unit_roundoff());
            prop_assume!(det.is_ok());
            let det = 2f64.sqrt() * det.unwrap();
            prop_assert!(err <= det * a.norm2() * b.norm2());
        }
    }
}
