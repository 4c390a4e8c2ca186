//! Banded LU factorization with partial pivoting.
//!
//! The Newton KKT systems here are block-tridiagonal (adjacent grid nodes
//! plus one chain multiplier per interval), so a general banded solver with
//! half-bandwidth around ten runs in time linear in the node count. Row
//! pivoting can push fill into `kl` extra superdiagonals, which the storage
//! accounts for up front.

use crate::error::{Error, Result};

pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage with `2*kl + ku + 1` rows per column;
    /// entry (i, j) lives at row `kl + ku + i - j`.
    data: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; ldab * n],
            ipiv: vec![0; n],
            factored: false,
        }
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        // Fill from row pivoting can reach `kl` diagonals above the original
        // upper band, hence the widened storage window.
        debug_assert!(
            i + self.kl + self.ku >= j && j + self.kl >= i,
            "({i},{j}) outside band storage"
        );
        j * self.ldab() + (self.kl + self.ku + i - j)
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
        self.factored = false;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.kl + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// In-place LU with partial pivoting (row swaps limited to the `kl`
    /// rows below the diagonal, so fill stays inside the working band).
    pub fn factorize(&mut self) -> Result<()> {
        assert!(!self.factored, "already factored");
        let n = self.n;
        let kl = self.kl;
        let work_ku = self.kl + self.ku;
        for j in 0..n {
            let pivot_rows = (j + kl).min(n - 1) - j;
            let mut best = j;
            let mut best_abs = self.get(j, j).abs();
            for di in 1..=pivot_rows {
                let a = self.get(j + di, j).abs();
                if a > best_abs {
                    best_abs = a;
                    best = j + di;
                }
            }
            self.ipiv[j] = best;
            if !(best_abs > 0.0) || !best_abs.is_finite() {
                return Err(Error::Numerical(format!(
                    "KKT factorization breakdown at column {j} (pivot {best_abs})"
                )));
            }
            if best != j {
                let hi = (j + work_ku).min(n - 1);
                for jj in j..=hi {
                    let a = self.idx(j, jj);
                    let b = self.idx(best, jj);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(j, j);
            let hi = (j + work_ku).min(n - 1);
            for i in (j + 1)..=(j + pivot_rows) {
                let l = self.get(i, j) / pivot;
                self.set(i, j, l);
                if l != 0.0 {
                    for jj in (j + 1)..=hi {
                        let u = self.get(j, jj);
                        if u != 0.0 {
                            self.add(i, jj, -l * u);
                        }
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` in place using the stored factors.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factorize first");
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let work_ku = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let hi = (j + kl).min(n - 1);
                for i in (j + 1)..=hi {
                    b[i] -= self.get(i, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let hi = (j + work_ku).min(n - 1);
            let mut s = b[j];
            for jj in (j + 1)..=hi {
                s -= self.get(j, jj) * b[jj];
            }
            b[j] = s / self.get(j, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &mut Vec<Vec<f64>>, b: &mut [f64]) {
        let n = b.len();
        for k in 0..n {
            let mut piv = k;
            for i in (k + 1)..n {
                if a[i][k].abs() > a[piv][k].abs() {
                    piv = i;
                }
            }
            a.swap(k, piv);
            b.swap(k, piv);
            for i in (k + 1)..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let bj = b[j];
                b[i] -= a[i][j] * bj;
            }
            b[i] /= a[i][i];
        }
    }

    #[test]
    fn matches_dense_elimination_on_random_bands() {
        let mut state = 0xfeedu64;
        let mut unit = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for trial in 0..20 {
            let n = 5 + (trial % 7) * 13;
            let kl = 1 + trial % 5;
            let ku = 1 + (trial / 2) % 4;
            let mut band = BandMatrix::new(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i + ku >= j && j + kl >= i {
                        let v = unit() + if i == j { 3.0 } else { 0.0 };
                        band.set(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| unit()).collect();
            let mut x_band = rhs.clone();
            band.factorize().unwrap();
            band.solve(&mut x_band);
            let mut x_dense = rhs.clone();
            dense_solve(&mut dense.clone(), &mut x_dense);
            for i in 0..n {
                assert!(
                    (x_band[i] - x_dense[i]).abs() < 1e-9 * (1.0 + x_dense[i].abs()),
                    "trial {trial} component {i}: {} vs {}",
                    x_band[i],
                    x_dense[i]
                );
            }
        }
    }

    #[test]
    fn handles_indefinite_systems_with_zero_diagonal() {
        // Saddle-point pattern: [[0, 1], [1, 2]] needs the row pivot.
        let mut band = BandMatrix::new(2, 1, 1);
        band.set(0, 0, 0.0);
        band.set(0, 1, 1.0);
        band.set(1, 0, 1.0);
        band.set(1, 1, 2.0);
        let mut b = vec![1.0, 0.0];
        band.factorize().unwrap();
        band.solve(&mut b);
        assert!((b[0] + 2.0).abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_singularity() {
        let mut band = BandMatrix::new(3, 1, 1);
        band.set(0, 0, 1.0);
        band.set(1, 1, 0.0);
        band.set(2, 2, 1.0);
        assert!(band.factorize().is_err());
    }
}
