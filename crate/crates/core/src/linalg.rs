//! Small dense kernels used by the per-group wavelet blocks.
//!
//! Matrices are column-major `Vec<f64>` with an explicit row count.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
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
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        out.fill(0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                axpy(xc, self.col(c), out);
            }
        }
    }

    /// `out = selfᵀ * x`.
    pub fn mul_t_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(c), x);
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for c in 0..other.cols {
            self.mul_vec(other.col(c), out.col_mut(c));
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Column-pivoted Householder QR that returns the full orthogonal factor.
///
/// The first `rank` columns of the returned `m × m` matrix are an orthonormal
/// basis of the column space of `a`; the remaining columns span its orthogonal
/// complement. Elimination stops once the largest remaining column norm drops
/// to `rel_tol` times the largest original column norm.
pub fn pivoted_orthonormal_completion(a: &DenseMatrix, rel_tol: f64) -> (DenseMatrix, usize) {
    let m = a.rows;
    let n = a.cols;
    let mut work = a.clone();
    let scale = (0..n).map(|c| norm2(work.col(c))).fold(0.0, f64::max);
    let mut reflectors: Vec<Vec<f64>> = Vec::new();

    if scale > 0.0 {
        for k in 0..m.min(n) {
            // pivot: largest remaining norm over rows k..m
            let (best, best_norm) = (k..n)
                .map(|c| (c, norm2(&work.col(c)[k..])))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best_norm <= rel_tol * scale {
                break;
            }
            if best != k {
                for r in 0..m {
                    work.data.swap(k * m + r, best * m + r);
                }
            }
            let col = &work.col(k)[k..];
            let alpha = if col[0] >= 0.0 { -best_norm } else { best_norm };
            let mut v = col.to_vec();
            v[0] -= alpha;
            let vnorm = norm2(&v);
            if vnorm == 0.0 {
                reflectors.push(vec![0.0; m - k]);
                continue;
            }
            v.iter_mut().for_each(|x| *x /= vnorm);
            for c in k..n {
                let tail = &mut work.col_mut(c)[k..];
                let t = 2.0 * dot(&v, tail);
                axpy(-t, &v, tail);
            }
            reflectors.push(v);
        }
    }

    let rank = reflectors.len();
    let mut q = DenseMatrix::identity(m);
    for (k, v) in reflectors.iter().enumerate().rev() {
        for c in 0..m {
            let tail = &mut q.col_mut(c)[k..];
            let t = 2.0 * dot(v, tail);
            if t != 0.0 {
                axpy(-t, v, tail);
            }
        }
    }
    for c in 0..m {
        orient_column(q.col_mut(c));
    }
    (q, rank)
}

/// Flips the sign so the first significant entry is positive.
fn orient_column(col: &mut [f64]) {
    let peak = col.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if let Some(first) = col.iter().find(|x| x.abs() > 1e-8 * peak) {
        if *first < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
