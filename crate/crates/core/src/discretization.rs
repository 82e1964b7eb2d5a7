//! Fully implicit finite-difference scheme on a space-time mesh.
//!
//! At every interior mesh point and time level `k >= 1`
//!
//! ```text
//! (U_k - U_{k-1}) / tau - E d2x U_k + A(x_j, t_k) U_k = f(x_j, t_k)
//! ```
//!
//! with one-sided Robin rows `U_0 - E_* (U_1 - U_0) / h_1 = phi_left(t_k)`
//! and `U_N + E_* (U_N - U_{N-1}) / h_N = phi_right(t_k)`. Each step is a
//! block-tridiagonal system with `N + 1` block rows of size `n x n`.

use std::io;

use thiserror::Error;

use crate::linalg::{sub_mat_mul, sub_mat_vec, LuFactor};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::problem::{ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular pivot block at block row {block_row}")]
    SingularPivot { block_row: usize },
    #[error("residual {residual:.3e} exceeds bound {bound:.3e} at time level {level}")]
    Residual {
        level: usize,
        residual: f64,
        bound: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Three-point second difference on a possibly nonuniform stencil, where
/// `h_minus = x_j - x_{j-1}` and `h_plus = x_{j+1} - x_j`.
pub fn second_difference(left: f64, centre: f64, right: f64, h_minus: f64, h_plus: f64) -> f64 {
    2.0 / (h_minus + h_plus) * ((right - centre) / h_plus - (centre - left) / h_minus)
}

/// Weights `(a, b, c)` with `d2x psi = a psi_{j-1} + b psi_{j+1} - c psi_j`.
pub fn second_difference_weights(h_minus: f64, h_plus: f64) -> (f64, f64, f64) {
    let a = 2.0 / ((h_minus + h_plus) * h_minus);
    let b = 2.0 / ((h_minus + h_plus) * h_plus);
    (a, b, a + b)
}

/// Block-tridiagonal linear system; blocks are row-major `n x n`.
/// `lower(0)` and `upper(rows - 1)` exist but are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    n: usize,
    rows: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

impl BlockTridiagonal {
    pub fn zeros(n: usize, rows: usize) -> Self {
        BlockTridiagonal {
            n,
            rows,
            lower: vec![0.0; rows * n * n],
            diag: vec![0.0; rows * n * n],
            upper: vec![0.0; rows * n * n],
            rhs: vec![0.0; rows * n],
        }
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn block_rows(&self) -> usize {
        self.rows
    }

    fn block(&self, j: usize) -> std::ops::Range<usize> {
        let nn = self.n * self.n;
        j * nn..(j + 1) * nn
    }

    pub fn lower(&self, j: usize) -> &[f64] {
        &self.lower[self.block(j)]
    }

    pub fn diag(&self, j: usize) -> &[f64] {
        &self.diag[self.block(j)]
    }

    pub fn upper(&self, j: usize) -> &[f64] {
        &self.upper[self.block(j)]
    }

    pub fn lower_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.block(j);
        &mut self.lower[r]
    }

    pub fn diag_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.block(j);
        &mut self.diag[r]
    }

    pub fn upper_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.block(j);
        &mut self.upper[r]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut [f64] {
        &mut self.rhs
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; self.rows * n];
        for j in 0..self.rows {
            let y = &mut out[j * n..(j + 1) * n];
            let mut acc = |block: &[f64], v: &[f64]| {
                for r in 0..n {
                    for c in 0..n {
                        y[r] += block[r * n + c] * v[c];
                    }
                }
            };
            if j > 0 {
                acc(self.lower(j), &x[(j - 1) * n..j * n]);
            }
            acc(self.diag(j), &x[j * n..(j + 1) * n]);
            if j + 1 < self.rows {
                acc(self.upper(j), &x[(j + 1) * n..(j + 2) * n]);
            }
        }
        out
    }

    /// `||A x - b||_inf`.
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(&self.rhs)
            .fold(0.0, |m, (ax, b)| m.max((ax - b).abs()))
    }

    /// Full row-major matrix of size `rows * n`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let size = self.rows * n;
        let mut m = vec![0.0; size * size];
        for j in 0..self.rows {
            let mut put = |col_block: usize, block: &[f64]| {
                for r in 0..n {
                    for c in 0..n {
                        m[(j * n + r) * size + col_block * n + c] = block[r * n + c];
                    }
                }
            };
            if j > 0 {
                put(j - 1, self.lower(j));
            }
            put(j, self.diag(j));
            if j + 1 < self.rows {
                put(j + 1, self.upper(j));
            }
        }
        m
    }

    /// Block Thomas elimination with a pivoted LU of each reduced diagonal
    /// block.
    pub fn solve(&self) -> Result<Vec<f64>, SolveError> {
        let n = self.n;
        let nn = n * n;
        let rows = self.rows;
        if rows == 0 {
            return Ok(Vec::new());
        }
        // c_j = S_j^{-1} U_j, g_j = S_j^{-1} (b_j - L_j g_{j-1})
        let mut c = vec![0.0; rows * nn];
        let mut g = self.rhs.clone();
        let mut s = vec![0.0; nn];
        for j in 0..rows {
            s.copy_from_slice(self.diag(j));
            if j > 0 {
                let (prev_c, _) = c.split_at(j * nn);
                sub_mat_mul(&mut s, self.lower(j), &prev_c[(j - 1) * nn..], n);
                let (prev_g, cur_g) = g.split_at_mut(j * n);
                sub_mat_vec(&mut cur_g[..n], self.lower(j), &prev_g[(j - 1) * n..], n);
            }
            let lu =
                LuFactor::new(&s, n).map_err(|_| SolveError::SingularPivot { block_row: j })?;
            lu.solve_vec(&mut g[j * n..(j + 1) * n]);
            if j + 1 < rows {
                let cj = &mut c[j * nn..(j + 1) * nn];
                cj.copy_from_slice(self.upper(j));
                lu.solve_block(cj);
            }
        }
        for j in (0..rows - 1).rev() {
            let (head, tail) = g.split_at_mut((j + 1) * n);
            sub_mat_vec(&mut head[j * n..], &c[j * nn..(j + 1) * nn], &tail[..n], n);
        }
        Ok(g)
    }

    /// Solves through a pivoted LU of the assembled full matrix. Intended
    /// for diagnostics; cost is cubic in `rows * n`.
    pub fn solve_dense(&self) -> Result<Vec<f64>, SolveError> {
        let size = self.rows * self.n;
        let lu = LuFactor::new(&self.to_dense(), size)
            .map_err(|_| SolveError::SingularPivot { block_row: 0 })?;
        let mut x = self.rhs.clone();
        lu.solve_vec(&mut x);
        Ok(x)
    }
}

/// Alias used where the system is the one assembled for a time step.
pub type StepSystem = BlockTridiagonal;

/// Discrete values indexed by time level `k`, mesh point `j` and component
/// `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    space: SpaceMesh,
    time: TimeMesh,
    n: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(space: SpaceMesh, time: TimeMesh, n: usize) -> Self {
        let len = (time.intervals() + 1) * (space.intervals() + 1) * n;
        GridFunction {
            space,
            time,
            n,
            values: vec![0.0; len],
        }
    }

    pub fn space(&self) -> &SpaceMesh {
        &self.space
    }

    pub fn time(&self) -> &TimeMesh {
        &self.time
    }

    pub fn components(&self) -> usize {
        self.n
    }

    fn row_len(&self) -> usize {
        (self.space.intervals() + 1) * self.n
    }

    pub fn get(&self, k: usize, j: usize, i: usize) -> f64 {
        self.values[k * self.row_len() + j * self.n + i]
    }

    pub fn set(&mut self, k: usize, j: usize, i: usize, value: f64) {
        let idx = k * self.row_len() + j * self.n + i;
        self.values[idx] = value;
    }

    /// All values at time level `k`, laid out `[j][i]`.
    pub fn level(&self, k: usize) -> &[f64] {
        let len = self.row_len();
        &self.values[k * len..(k + 1) * len]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.row_len();
        &mut self.values[k * len..(k + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes `t_k,x_j,u_1..u_n` rows, `k` outermost.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t_k".to_string(), "x_j".to_string()];
        header.extend((1..=self.n).map(|i| format!("u_{i}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n + 2);
        for (k, &t) in self.time.points().iter().enumerate() {
            for (j, &x) in self.space.points().iter().enumerate() {
                record.clear();
                record.push(format!("{t:e}"));
                record.push(format!("{x:e}"));
                record.extend((0..self.n).map(|i| format!("{:e}", self.get(k, j, i))));
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembles the system for time level `k >= 1` given the solution at
/// level `k - 1` (laid out `[j][i]`).
pub fn assemble_step(
    spec: &ProblemSpec,
    space: &SpaceMesh,
    time: &TimeMesh,
    k: usize,
    previous: &[f64],
) -> Result<StepSystem, SolveError> {
    let n = spec.n();
    let big_n = space.intervals();
    if k == 0 || k > time.intervals() {
        return Err(SolveError::Dimension(format!(
            "time level {k} outside 1..={}",
            time.intervals()
        )));
    }
    if previous.len() != (big_n + 1) * n {
        return Err(SolveError::Dimension(format!(
            "previous level has {} values, expected {}",
            previous.len(),
            (big_n + 1) * n
        )));
    }
    let x = space.points();
    let t = time.points()[k];
    let tau = t - time.points()[k - 1];
    let eps = spec.epsilons();
    let mut sys = BlockTridiagonal::zeros(n, big_n + 1);
    let mut a = vec![0.0; n * n];
    let mut f = vec![0.0; n];

    // x = 0: U_0 - E_* (U_1 - U_0) / h_1
    let h1 = space.step(1);
    for i in 0..n {
        let w = eps[i].sqrt() / h1;
        sys.diag_mut(0)[i * n + i] = 1.0 + w;
        sys.upper_mut(0)[i * n + i] = -w;
    }
    spec.phi_left_into(t, &mut sys.rhs_mut()[..n])?;

    for j in 1..big_n {
        let (wa, wb, wc) = second_difference_weights(space.step(j), space.step(j + 1));
        spec.coeff_matrix_into(x[j], t, &mut a)?;
        spec.source_into(x[j], t, &mut f)?;
        let diag = sys.diag_mut(j);
        diag.copy_from_slice(&a);
        for i in 0..n {
            diag[i * n + i] += 1.0 / tau + eps[i] * wc;
        }
        for i in 0..n {
            sys.lower_mut(j)[i * n + i] = -eps[i] * wa;
            sys.upper_mut(j)[i * n + i] = -eps[i] * wb;
        }
        let rhs = &mut sys.rhs_mut()[j * n..(j + 1) * n];
        for i in 0..n {
            rhs[i] = f[i] + previous[j * n + i] / tau;
        }
    }

    // x = 1: U_N + E_* (U_N - U_{N-1}) / h_N
    let hn = space.step(big_n);
    for i in 0..n {
        let w = eps[i].sqrt() / hn;
        sys.diag_mut(big_n)[i * n + i] = 1.0 + w;
        sys.lower_mut(big_n)[i * n + i] = -w;
    }
    spec.phi_right_into(t, &mut sys.rhs_mut()[big_n * n..])?;
    Ok(sys)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Solve each step through the dense full-matrix LU instead of block
    /// Thomas.
    pub dense_fallback: bool,
    /// Each step must satisfy `||A x - b|| <= tol (1 + ||b||)`.
    pub residual_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_fallback: false,
            residual_tolerance: 1e-10,
        }
    }
}

/// Solves the scheme on `space x time`, returning the full space-time
/// solution.
pub fn time_march(
    spec: &ProblemSpec,
    space: &SpaceMesh,
    time: &TimeMesh,
) -> Result<GridFunction, SolveError> {
    time_march_with(spec, space, time, &SolverOptions::default())
}

pub fn time_march_with(
    spec: &ProblemSpec,
    space: &SpaceMesh,
    time: &TimeMesh,
    options: &SolverOptions,
) -> Result<GridFunction, SolveError> {
    let n = spec.n();
    let mut grid = GridFunction::zeros(space.clone(), time.clone(), n);
    {
        let initial = grid.level_mut(0);
        for (j, &x) in space.points().iter().enumerate() {
            spec.phi_bottom_into(x, &mut initial[j * n..(j + 1) * n])?;
        }
    }
    for k in 1..=time.intervals() {
        let sys = assemble_step(spec, space, time, k, grid.level(k - 1))?;
        let solution = if options.dense_fallback {
            sys.solve_dense()?
        } else {
            sys.solve()?
        };
        let residual = sys.residual_inf(&solution);
        let b_norm = sys.rhs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = options.residual_tolerance * (1.0 + b_norm);
        if !(residual <= bound) {
            return Err(SolveError::Residual {
                level: k,
                residual,
                bound,
            });
        }
        grid.level_mut(k).copy_from_slice(&solution);
    }
    Ok(grid)
}

/// Applies the discrete operators to `grid`: level 0 holds the grid values
/// themselves, columns `j = 0` and `j = N` of later levels hold the Robin
/// operators, and interior points hold `D_t^- U - E d2x U + A U`.
///
/// For a computed solution this reproduces [`sample_data`] up to rounding.
pub fn apply_discrete_operator(
    spec: &ProblemSpec,
    grid: &GridFunction,
) -> Result<GridFunction, SolveError> {
    let n = spec.n();
    if grid.components() != n {
        return Err(SolveError::Dimension(format!(
            "grid has {} components, problem has {n}",
            grid.components()
        )));
    }
    let space = grid.space();
    let time = grid.time();
    let big_n = space.intervals();
    let x = space.points();
    let eps = spec.epsilons();
    let mut out = GridFunction::zeros(space.clone(), time.clone(), n);
    out.level_mut(0).copy_from_slice(grid.level(0));
    let mut a = vec![0.0; n * n];
    for k in 1..=time.intervals() {
        let t = time.points()[k];
        let tau = t - time.points()[k - 1];
        let (h1, hn) = (space.step(1), space.step(big_n));
        for i in 0..n {
            let se = eps[i].sqrt();
            let u = |j| grid.get(k, j, i);
            out.set(k, 0, i, u(0) - se * (u(1) - u(0)) / h1);
            out.set(k, big_n, i, u(big_n) + se * (u(big_n) - u(big_n - 1)) / hn);
        }
        for j in 1..big_n {
            spec.coeff_matrix_into(x[j], t, &mut a)?;
            let (hm, hp) = (space.step(j), space.step(j + 1));
            for i in 0..n {
                let d2 = second_difference(
                    grid.get(k, j - 1, i),
                    grid.get(k, j, i),
                    grid.get(k, j + 1, i),
                    hm,
                    hp,
                );
                let dt = (grid.get(k, j, i) - grid.get(k - 1, j, i)) / tau;
                let reaction: f64 = (0..n).map(|c| a[i * n + c] * grid.get(k, j, c)).sum();
                out.set(k, j, i, dt - eps[i] * d2 + reaction);
            }
        }
    }
    Ok(out)
}

/// The problem data laid out like [`apply_discrete_operator`]'s output:
/// `phi_bottom` at level 0, `phi_left`/`phi_right` on the boundary columns
/// and `f` at interior points.
pub fn sample_data(
    spec: &ProblemSpec,
    space: &SpaceMesh,
    time: &TimeMesh,
) -> Result<GridFunction, SolveError> {
    let n = spec.n();
    let big_n = space.intervals();
    let mut out = GridFunction::zeros(space.clone(), time.clone(), n);
    let mut buf = vec![0.0; n];
    for (j, &x) in space.points().iter().enumerate() {
        spec.phi_bottom_into(x, &mut buf)?;
        out.level_mut(0)[j * n..(j + 1) * n].copy_from_slice(&buf);
    }
    for (k, &t) in time.points().iter().enumerate().skip(1) {
        let level = out.level_mut(k);
        spec.phi_left_into(t, &mut level[..n])?;
        spec.phi_right_into(t, &mut level[big_n * n..])?;
        for (j, &x) in space.points().iter().enumerate().take(big_n).skip(1) {
            spec.source_into(x, t, &mut level[j * n..(j + 1) * n])?;
        }
    }
    Ok(out)
}
