//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: a dense `(2kl + ku + 1) × n`
//! band where row `kl + ku + i - j` of column `j` holds `a[i][j]`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalars the factorization works over.
pub trait Scalar:
    Copy
    + Default
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
{
    fn abs(self) -> f64;
    fn zero() -> Self {
        Self::default()
    }
}

impl Scalar for f64 {
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    fn abs(self) -> f64 {
        self.norm()
    }
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    band: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, band: vec![T::zero(); ld * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.band[self.slot(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.band[s] += v;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl + 1).min(self.n);
            for (i, yi) in y.iter_mut().enumerate().take(hi).skip(lo) {
                *yi += self.band[self.slot(i, j)] * x[j];
            }
        }
        y
    }

    /// In-place factorization `PA = LU`.
    pub fn factor(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        let mut piv = vec![0usize; n];
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;
        let mut min_col = 0;
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.band[self.slot(j, j)].abs();
            for i in j + 1..=last {
                let v = self.band[self.slot(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[j] = p;
            if best == 0.0 {
                return Err(Error::SingularMatrix);
            }
            if best > max_pivot {
                max_pivot = best;
            }
            if best < min_pivot {
                min_pivot = best;
                min_col = j;
            }
            let jend = (j + kv).min(n - 1);
            if p != j {
                for c in j..=jend {
                    let (a, b) = (self.slot(j, c), self.slot(p, c));
                    self.band.swap(a, b);
                }
            }
            let d = self.band[self.slot(j, j)];
            for i in j + 1..=last {
                let s = self.slot(i, j);
                let l = self.band[s] / d;
                self.band[s] = l;
                for c in j + 1..=jend {
                    let u = self.band[self.slot(j, c)];
                    let t = self.slot(i, c);
                    self.band[t] -= l * u;
                }
            }
        }
        let estimate = if min_pivot > 0.0 { max_pivot / min_pivot } else { f64::INFINITY };
        let _ = ku;
        Ok(BandLu { m: self, piv, estimate, min_col })
    }
}

/// Factors produced by [`BandMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
    estimate: f64,
    min_col: usize,
}

impl<T: Scalar> BandLu<T> {
    /// Pivot-ratio estimate of the condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.estimate
    }

    /// Column holding the smallest pivot.
    pub fn weakest_column(&self) -> usize {
        self.min_col
    }

    pub fn check_condition(&self, limit: f64) -> Result<()> {
        if self.estimate > limit {
            return Err(Error::NearSingularSystem { column: Some(self.min_col), estimate: self.estimate });
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let n = m.n;
        let kv = m.kl + m.ku;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let last = (j + m.kl).min(n - 1);
            let bj = b[j];
            for (i, bi) in b.iter_mut().enumerate().take(last + 1).skip(j + 1) {
                *bi -= m.band[m.slot(i, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] = b[j] / m.band[m.slot(j, j)];
            let bj = b[j];
            let first = j.saturating_sub(kv);
            for (i, bi) in b.iter_mut().enumerate().take(j).skip(first) {
                *bi -= m.band[m.slot(i, j)] * bj;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
