//! Dense row-major matrices and the handful of operations the optimizers need.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Dense `rows x cols` matrix of `f64`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Parameter(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::Parameter(format!(
                "row {bad} has {} entries, expected {ncols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), ncols, rows.concat())
    }

    /// Entries uniform in `[lo, hi)`.
    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut RandomSource) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.uniform_range(lo, hi))
    }

    pub fn random_normal(rows: usize, cols: usize, sigma: f64, rng: &mut RandomSource) -> Self {
        Self::from_fn(rows, cols, |_, _| sigma * rng.normal())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Entrywise absolute sum.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self^T * rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (k, n, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &rhs.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self * rhs^T` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                out[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: m,
            data: out,
        })
    }

    fn check_same(&self, rhs: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_map(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_map(rhs, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_map(rhs, "hadamard", |a, b| a * b)
    }

    pub fn zip_map(
        &self,
        rhs: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        self.check_same(rhs, op)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        self.map(|x| c * x)
    }

    /// `self += alpha * rhs`
    pub fn axpy(&mut self, alpha: f64, rhs: &DenseMatrix) -> Result<()> {
        self.check_same(rhs, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Frobenius distance `||self - rhs||_F`.
    pub fn distance(&self, rhs: &DenseMatrix) -> Result<f64> {
        self.check_same(rhs, "distance")?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Columns rearranged so that output column `c` is input column `perm[c]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<DenseMatrix> {
        if perm.len() != self.cols {
            return Err(Error::Parameter(format!(
                "permutation of length {} for {} columns",
                perm.len(),
                self.cols
            )));
        }
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = &mut out.data[r * self.cols..(r + 1) * self.cols];
            for (d, &p) in dst.iter_mut().zip(perm) {
                *d = src[p];
            }
        }
        Ok(out)
    }

    /// Copy of columns `start..end`.
    pub fn column_block(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start < end && end <= self.cols);
        let w = end - start;
        let mut out = Self::zeros(self.rows, w);
        for r in 0..self.rows {
            out.data[r * w..(r + 1) * w].copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_column_block(&mut self, start: usize, block: &DenseMatrix) {
        assert!(block.rows == self.rows && start + block.cols <= self.cols);
        let w = block.cols;
        for r in 0..self.rows {
            let off = r * self.cols + start;
            self.data[off..off + w].copy_from_slice(block.row(r));
        }
    }
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.frobenius_norm()
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

/// Entrywise `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::Parameter(format!("soft threshold tau must be >= 0, got {tau}")));
    }
    Ok(m.map(|x| x.signum() * (x.abs() - tau).max(0.0)))
}

/// Solves `(A + ridge*I) X = B` for symmetric positive semi-definite `A`.
///
/// Falls back to an error carrying the eigenvalue condition estimate when the
/// damped system is still not positive definite.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix, ridge: f64) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Shape {
            op: "solve_spd",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut lhs = nalgebra::DMatrix::from_row_slice(n, n, a.data());
    for i in 0..n {
        lhs[(i, i)] += ridge;
    }
    let rhs = nalgebra::DMatrix::from_row_slice(n, b.cols(), b.data());
    match lhs.clone().cholesky() {
        Some(ch) => {
            let x = ch.solve(&rhs);
            let out = DenseMatrix::from_fn(n, b.cols(), |r, c| x[(r, c)]);
            if !out.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite solution, condition estimate {:.3e}",
                    condition_estimate(&lhs)
                )));
            }
            Ok(out)
        }
        None => Err(Error::Numerical(format!(
            "normal equations not positive definite after ridge {ridge:e}, condition estimate {:.3e}",
            condition_estimate(&lhs)
        ))),
    }
}

fn condition_estimate(m: &nalgebra::DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Closed interval `[lo, hi]` on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval1D {
    lo: f64,
    hi: f64,
}

impl Interval1D {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Parameter(format!("interval bounds out of order: [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Builds the interval spanned by two points in either order.
    pub fn spanning(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval1D) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(DenseMatrix::zeros(3, 3).frobenius_norm(), 0.0);
        assert_eq!(frobenius_norm(&DenseMatrix::identity(2)), 2f64.sqrt());
        assert_eq!(m(&[&[3.0, 4.0]]).frobenius_norm(), 5.0);
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[17.0], &[39.0]]));
        assert_eq!(a.matmul(&DenseMatrix::identity(2)).unwrap(), a);
        assert_eq!(a.matmul(&DenseMatrix::zeros(2, 3)).unwrap(), DenseMatrix::zeros(2, 3));
    }

    #[test]
    fn matmul_shape_error_names_both_operands() {
        let err = matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(err, Error::Shape { left: (2, 3), right: (2, 3), .. }));
    }

    #[test]
    fn transposed_products_agree_with_plain_matmul() {
        let mut rng = RandomSource::new(5);
        let a = DenseMatrix::random_uniform(4, 3, -1.0, 1.0, &mut rng);
        let b = DenseMatrix::random_uniform(4, 5, -1.0, 1.0, &mut rng);
        let c = DenseMatrix::random_uniform(6, 3, -1.0, 1.0, &mut rng);
        let lhs = a.t_matmul(&b).unwrap();
        let rhs = a.transpose().matmul(&b).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-14);
        let lhs = a.matmul_t(&c).unwrap();
        let rhs = a.matmul(&c.transpose()).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn soft_threshold_examples() {
        let a = m(&[&[0.5, 3.0, -3.0, -0.2]]);
        assert_eq!(soft_threshold(&a, 0.0).unwrap(), a);
        assert_eq!(soft_threshold(&a, 1.0).unwrap(), m(&[&[0.0, 2.0, -2.0, 0.0]]));
        assert!(matches!(soft_threshold(&a, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn new_rejects_bad_lengths() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn column_permutation_and_blocks() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let p = a.permute_columns(&[2, 0, 1]).unwrap();
        assert_eq!(p, m(&[&[3.0, 1.0, 2.0], &[6.0, 4.0, 5.0]]));
        let blk = a.column_block(1, 3);
        assert_eq!(blk, m(&[&[2.0, 3.0], &[5.0, 6.0]]));
        let mut z = DenseMatrix::zeros(2, 3);
        z.set_column_block(1, &blk);
        assert_eq!(z, m(&[&[0.0, 2.0, 3.0], &[0.0, 5.0, 6.0]]));
    }

    #[test]
    fn solve_spd_recovers_solution() {
        let a = m(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let x = m(&[&[1.0, -1.0], &[2.0, 0.5]]);
        let b = a.matmul(&x).unwrap();
        let got = solve_spd(&a, &b, 0.0).unwrap();
        assert!(got.distance(&x).unwrap() < 1e-12);
    }

    #[test]
    fn solve_spd_reports_condition_on_failure() {
        let a = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let err = solve_spd(&a, &DenseMatrix::identity(2), 1e-8).unwrap_err();
        assert!(err.to_string().contains("condition estimate"), "{err}");
    }

    #[test]
    fn interval_rules() {
        assert!(Interval1D::new(2.0, 1.0).is_err());
        let i = Interval1D::spanning(3.0, -1.0);
        assert_eq!((i.lo(), i.hi()), (-1.0, 3.0));
        assert!(Interval1D::new(0.0, 1.0).unwrap().is_subset_of(&i));
        assert!(i.contains(0.0) && !i.contains(3.5));
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |d| DenseMatrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(a in arb_matrix(3, 4), c in -5.0f64..5.0) {
            let lhs = a.scale(c).frobenius_norm();
            let rhs = c.abs() * a.frobenius_norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn triangle_inequality(a in arb_matrix(4, 4), b in arb_matrix(4, 4)) {
            let lhs = a.add(&b).unwrap().frobenius_norm();
            prop_assert!(lhs <= a.frobenius_norm() + b.frobenius_norm() + 1e-12);
        }

        #[test]
        fn matmul_is_associative(a in arb_matrix(8, 8), b in arb_matrix(8, 8), c in arb_matrix(8, 8)) {
            let lhs = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let rhs = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let rel = lhs.distance(&rhs).unwrap() / lhs.frobenius_norm().max(1e-300);
            prop_assert!(rel <= 1e-10);
        }

        #[test]
        fn soft_threshold_is_nonexpansive(a in arb_matrix(3, 5), b in arb_matrix(3, 5), tau in 0.0f64..3.0) {
            let pa = soft_threshold(&a, tau).unwrap();
            let pb = soft_threshold(&b, tau).unwrap();
            prop_assert!(pa.distance(&pb).unwrap() <= a.distance(&b).unwrap() + 1e-12);
        }
    }
}
