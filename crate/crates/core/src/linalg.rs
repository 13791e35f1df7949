//! Small dense and banded linear-algebra helpers.

/// Strided matrix view: `(data, row_stride, col_stride)`.
pub(crate) type View<'a> = (&'a [f64], isize, isize);

/// `C = alpha · A B + beta · C` with `A: m×k`, `B: k×n`, `C: m×n`, all
/// row-major unless strides say otherwise.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_index = |rs: isize, cs: isize, r: usize, cc: usize| {
        (r.saturating_sub(1)) as isize * rs + (cc.saturating_sub(1)) as isize * cs
    };
    assert!(k == 0 || max_index(a.1, a.2, m, k) < a.0.len() as isize);
    assert!(k == 0 || max_index(b.1, b.2, k, n) < b.0.len() as isize);
    assert!(max_index(rsc, csc, m, n) < c.len() as isize);
    // SAFETY: bounds of all three operands checked above; strides are
    // non-negative at every call site.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Row-major `rows × cols` matrix view.
#[inline]
pub(crate) fn rm(data: &[f64], cols: usize) -> View<'_> {
    (data, cols as isize, 1)
}

/// Transposed view of a row-major `rows × cols` matrix.
#[inline]
pub(crate) fn tr(data: &[f64], cols: usize) -> View<'_> {
    (data, 1, cols as isize)
}

/// Banded matrix with equal lower and upper bandwidth, stored by rows.
///
/// Factorized in place by Gaussian elimination without pivoting, which is
/// stable for the symmetric positive definite systems assembled here.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// row `i`, column `j` lives at `i * (2 bw + 1) + (j + bw - i)`
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i},{j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                (lo..hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b`, consuming the matrix. Returns `None` on a zero or
    /// non-finite pivot.
    pub fn solve(self, b: &[f64]) -> Option<Vec<f64>> {
        self.factorize()?.solve(b)
    }

    /// In-place LU factorization without pivoting.
    pub fn factorize(mut self) -> Option<BandLu> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let piv = self.data[self.idx(k, k)];
            if !(piv.abs() > 0.0) || !piv.is_finite() {
                return None;
            }
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let t = self.idx(i, k);
                let f = self.data[t] / piv;
                // keep the multiplier in the eliminated slot
                self.data[t] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..hi {
                    let v = self.data[self.idx(k, j)];
                    let t = self.idx(i, j);
                    self.data[t] -= f * v;
                }
            }
        }
        Some(BandLu { m: self })
    }
}

/// Factorized band matrix, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let (n, bw, m) = (self.m.n, self.m.bw, &self.m);
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            let hi = (k + bw + 1).min(n);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..hi {
                    x[i] -= m.data[m.idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + bw + 1).min(n);
            let mut s = x[k];
            for j in k + 1..hi {
                s -= m.data[m.idx(k, j)] * x[j];
            }
            x[k] = s / m.data[m.idx(k, k)];
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}
