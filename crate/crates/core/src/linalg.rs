//! Small dense kernels used by the block solver: LU with partial pivoting
//! and row-major `n x n` block arithmetic.

/// Pivot magnitude below `PIVOT_RTOL * max|a_ij|` is treated as singular.
pub const PIVOT_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactor {
    /// Factors the row-major `n x n` matrix `a` as `P A = L U`.
    pub fn new(a: &[f64], n: usize) -> Result<Self, Singular> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Singular);
        }
        let tiny = PIVOT_RTOL * scale;
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot_abs) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot_abs <= tiny {
                return Err(Singular);
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for c in col + 1..n {
                        lu[r * n + c] -= factor * lu[col * n + c];
                    }
                }
            }
        }
        Ok(LuFactor { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` for a single right-hand side, in place.
    pub fn solve_vec(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = y[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * y[c];
            }
            y[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * y[c];
            }
            y[r] = s / self.lu[r * n + r];
        }
        b.copy_from_slice(&y);
    }

    /// Solves `A X = B` for a row-major `n x n` block `B`, in place.
    pub fn solve_block(&self, b: &mut [f64]) {
        let n = self.n;
        let mut col = vec![0.0; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = b[r * n + c];
            }
            self.solve_vec(&mut col);
            for r in 0..n {
                b[r * n + c] = col[r];
            }
        }
    }
}

/// `out -= a * b` for row-major `n x n` blocks.
pub(crate) fn sub_mat_mul(out: &mut [f64], a: &[f64], b: &[f64], n: usize) {
    for r in 0..n {
        for k in 0..n {
            let ark = a[r * n + k];
            if ark == 0.0 {
                continue;
            }
            for c in 0..n {
                out[r * n + c] -= ark * b[k * n + c];
            }
        }
    }
}

/// `out -= a * v` for a row-major `n x n` block and an `n`-vector.
pub(crate) fn sub_mat_vec(out: &mut [f64], a: &[f64], v: &[f64], n: usize) {
    for r in 0..n {
        let mut s = 0.0;
        for c in 0..n {
            s += a[r * n + c] * v[c];
        }
        out[r] -= s;
    }
}
