//! Square banded matrix with equal lower and upper bandwidth and an in-place
//! LU factorization without pivoting (the FEM operators factored here are
//! dominated by their symmetric positive-definite elastic part).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    stride: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let stride = 2 * bw + 1;
        Self {
            n,
            bw,
            stride,
            data: vec![0.0; n * stride],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i},{j}) outside band {}", self.bw);
        i * self.stride + j + self.bw - i
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Replace row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.data[k] = if i == j { 1.0 } else { 0.0 };
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum();
        }
        y
    }

    pub fn factorize(&mut self) -> Result<()> {
        let (n, bw, st) = (self.n, self.bw, self.stride);
        for k in 0..n {
            let pivot = self.data[k * st + bw];
            if !(pivot.abs() > 0.0) || !pivot.is_finite() {
                return Err(Error::State(format!("zero or non-finite pivot at row {k}")));
            }
            let hi = (k + bw).min(n - 1);
            let len = hi - k;
            let (head, tail) = self.data.split_at_mut((k + 1) * st);
            let row_k = &head[k * st + bw + 1..k * st + bw + 1 + len];
            for i in k + 1..=hi {
                let base = (i - k - 1) * st;
                // Column k of row i sits at offset k + bw - i.
                let lik_pos = base + k + bw - i;
                let lik = tail[lik_pos] / pivot;
                tail[lik_pos] = lik;
                if lik == 0.0 {
                    continue;
                }
                let start = lik_pos + 1;
                for (a, b) in tail[start..start + len].iter_mut().zip(row_k) {
                    *a -= lik * b;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if !self.factored {
            return Err(Error::Usage("band matrix solved before factorization".into()));
        }
        let (n, bw, st) = (self.n, self.bw, self.stride);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * st..(i + 1) * st];
            let mut s = b[i];
            for j in lo..i {
                s -= row[j + bw - i] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &self.data[i * st..(i + 1) * st];
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= row[j + bw - i] * b[j];
            }
            b[i] = s / row[bw];
        }
        Ok(())
    }
}
