//! Symmetric banded matrices and their Cholesky factorization.

/// Lower band storage: `band[i][k]` holds `A[i][i-k]` for `k ≤ bandwidth`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, bandwidth: usize) -> Self {
        BandMatrix { n, bw: bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    #[cfg(test)]
    pub(crate) fn size(&self) -> usize {
        self.n
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`). Entries outside the
    /// band are a programming error.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        assert!(k <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        self.data[i * (self.bw + 1) + k] += v;
    }

    fn at(&self, i: usize, k: usize) -> f64 {
        self.data[i * (self.bw + 1) + k]
    }

    /// `y = A x`
    #[cfg(test)]
    pub(crate) fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in 0..=self.bw.min(i) {
                let a = self.at(i, k);
                let j = i - k;
                y[i] += a * x[j];
                if k > 0 {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place `A = L Lᵀ`; `None` if a pivot is not positive.
    pub(crate) fn cholesky(mut self) -> Option<Cholesky> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                let kmin = lo.max(j.saturating_sub(self.bw));
                for k in kmin..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Some(Cholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    l: BandMatrix,
}

impl Cholesky {
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 1..=l.bw.min(i) {
                s -= l.at(i, k) * y[i - k];
            }
            y[i] = s / l.at(i, 0);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in 1..=l.bw.min(n - 1 - i) {
                s -= l.at(i + k, k) * y[i + k];
            }
            y[i] = s / l.at(i, 0);
        }
        y
    }
}
