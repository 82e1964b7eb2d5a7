//! Two-mesh estimation of parameter-uniform convergence orders.
//!
//! For each parameter value `eta` and resolution `r` the problem is solved
//! on a coarse grid and on the grid obtained by bisecting the studied axis
//! (the other axis is held fixed). `D_eta[r]` is the largest difference at
//! the coarse grid points, `D[r] = max_eta D_eta[r]`, and
//!
//! ```text
//! p[r]  = log2(D[r] / D[2r])        p* = min_r p[r]
//! C[r]  = D[r] r^{p*} / (1 - 2^{-p*})   C* = max_r C[r]
//! ```

use std::io;

use thiserror::Error;

use crate::discretization::{time_march_with, GridFunction, SolveError, SolverOptions};
use crate::exec::Execution;
use crate::mesh::{build_shishkin_mesh, build_time_mesh, MeshError, SpaceMesh, TimeMesh};
use crate::problem::{ProblemError, ProblemSpec};

/// Relative tolerance for matching coarse points inside a fine mesh.
pub const POINT_MATCH_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConvergenceError {
    #[error("{axis} points of the coarse grid are not contained in the fine grid")]
    NotNested { axis: &'static str },
    #[error("component counts differ: {coarse} vs {fine}")]
    Components { coarse: usize, fine: usize },
    #[error("two-mesh difference must be positive, got {value} at position {index}")]
    NonPositiveDifference { index: usize, value: f64 },
    #[error("resolutions must double and contain at least two entries: {0:?}")]
    Resolutions(Vec<usize>),
    #[error("no parameter values given")]
    NoParameters,
    #[error("cell eta = {eta:e}, resolution = {resolution}: {source}")]
    Cell {
        eta: f64,
        resolution: usize,
        #[source]
        source: CellError,
    },
}

#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Difference(Box<ConvergenceError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

impl Axis {
    /// Symbol of the resolution varied along this axis.
    pub fn symbol(self) -> &'static str {
        match self {
            Axis::Time => "M",
            Axis::Space => "N",
        }
    }

    /// Symbol of the resolution held fixed.
    pub fn fixed_symbol(self) -> &'static str {
        match self {
            Axis::Time => "N",
            Axis::Space => "M",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Space => "space",
        })
    }
}

fn embed(coarse: &[f64], fine: &[f64], axis: &'static str) -> Result<Vec<usize>, ConvergenceError> {
    let mut map = Vec::with_capacity(coarse.len());
    let mut f = 0;
    for &c in coarse {
        let tol = POINT_MATCH_RTOL * c.abs().max(1.0);
        while f < fine.len() && fine[f] < c - tol {
            f += 1;
        }
        if f == fine.len() || (fine[f] - c).abs() > tol {
            return Err(ConvergenceError::NotNested { axis });
        }
        map.push(f);
    }
    Ok(map)
}

/// Per-component maximum of `|coarse - fine|` over the coarse grid points.
pub fn two_mesh_difference_by_component(
    coarse: &GridFunction,
    fine: &GridFunction,
) -> Result<Vec<f64>, ConvergenceError> {
    let n = coarse.components();
    if fine.components() != n {
        return Err(ConvergenceError::Components {
            coarse: n,
            fine: fine.components(),
        });
    }
    let kmap = embed(coarse.time().points(), fine.time().points(), "time")?;
    let jmap = embed(coarse.space().points(), fine.space().points(), "space")?;
    let mut out = vec![0.0f64; n];
    for (k, &kf) in kmap.iter().enumerate() {
        for (j, &jf) in jmap.iter().enumerate() {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = slot.max((coarse.get(k, j, i) - fine.get(kf, jf, i)).abs());
            }
        }
    }
    Ok(out)
}

/// Largest difference over all coarse grid points and components.
pub fn two_mesh_difference(
    coarse: &GridFunction,
    fine: &GridFunction,
) -> Result<f64, ConvergenceError> {
    Ok(two_mesh_difference_by_component(coarse, fine)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    /// `p[r]` for every resolution but the last.
    pub orders: Vec<f64>,
    pub p_star: f64,
    pub constants: Vec<f64>,
    pub c_star: f64,
}

/// Orders and error constants from a row of two-mesh differences taken at
/// doubling resolutions.
pub fn estimate_orders(
    resolutions: &[usize],
    differences: &[f64],
) -> Result<OrderEstimate, ConvergenceError> {
    check_resolutions(resolutions)?;
    if differences.len() != resolutions.len() {
        return Err(ConvergenceError::Resolutions(resolutions.to_vec()));
    }
    if let Some((index, &value)) = differences
        .iter()
        .enumerate()
        .find(|(_, &d)| !(d > 0.0 && d.is_finite()))
    {
        return Err(ConvergenceError::NonPositiveDifference { index, value });
    }
    let orders: Vec<f64> = differences
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    let p_star = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let denom = 1.0 - 2f64.powf(-p_star);
    let constants: Vec<f64> = resolutions
        .iter()
        .zip(differences)
        .map(|(&r, &d)| d * (r as f64).powf(p_star) / denom)
        .collect();
    let c_star = constants.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OrderEstimate {
        orders,
        p_star,
        constants,
        c_star,
    })
}

fn check_resolutions(resolutions: &[usize]) -> Result<(), ConvergenceError> {
    if resolutions.len() < 2
        || resolutions[0] == 0
        || resolutions.windows(2).any(|w| w[1] != 2 * w[0])
    {
        return Err(ConvergenceError::Resolutions(resolutions.to_vec()));
    }
    Ok(())
}

/// Maps a sweep parameter to a concrete problem.
pub trait ProblemFamily: Sync {
    fn instantiate(&self, eta: f64) -> Result<ProblemSpec, ProblemError>;
}

impl<F> ProblemFamily for F
where
    F: Fn(f64) -> Result<ProblemSpec, ProblemError> + Sync,
{
    fn instantiate(&self, eta: f64) -> Result<ProblemSpec, ProblemError> {
        self(eta)
    }
}

/// `eps_i = ratio_i * eta` on top of a base problem.
#[derive(Debug, Clone)]
pub struct ScaledEpsilons {
    pub base: ProblemSpec,
    pub ratios: Vec<f64>,
}

impl ScaledEpsilons {
    /// `eps = (eta/16, eta/8)`.
    pub fn two_component(base: ProblemSpec) -> Self {
        ScaledEpsilons {
            base,
            ratios: vec![1.0 / 16.0, 1.0 / 8.0],
        }
    }
}

impl ProblemFamily for ScaledEpsilons {
    fn instantiate(&self, eta: f64) -> Result<ProblemSpec, ProblemError> {
        self.base
            .with_epsilons(self.ratios.iter().map(|r| r * eta).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepOptions {
    pub execution: Execution,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub axis: Axis,
    pub etas: Vec<f64>,
    pub resolutions: Vec<usize>,
    /// `N` for a time sweep, `M` for a space sweep.
    pub fixed_resolution: usize,
    /// `differences[e][r]`.
    pub differences: Vec<Vec<f64>>,
    /// `component_differences[e][r][i]`.
    pub component_differences: Vec<Vec<Vec<f64>>>,
    pub uniform: Vec<f64>,
    pub orders: Vec<f64>,
    pub p_star: f64,
    pub constants: Vec<f64>,
    pub c_star: f64,
}

/// A space mesh paired with a time mesh.
pub type Grid = (SpaceMesh, TimeMesh);

/// Coarse and fine grids for one sweep cell.
pub fn cell_meshes(
    spec: &ProblemSpec,
    axis: Axis,
    resolution: usize,
    fixed_resolution: usize,
) -> Result<(Grid, Grid), MeshError> {
    let (space_n, time_m) = match axis {
        Axis::Time => (fixed_resolution, resolution),
        Axis::Space => (resolution, fixed_resolution),
    };
    let space = build_shishkin_mesh(spec.epsilons(), spec.alpha(), space_n)?;
    let time = build_time_mesh(spec.horizon(), time_m)?;
    let fine = match axis {
        Axis::Time => (space.clone(), time.bisect()),
        Axis::Space => (space.bisect(), time.clone()),
    };
    Ok(((space, time), fine))
}

fn run_cell(
    family: &dyn ProblemFamily,
    eta: f64,
    axis: Axis,
    resolution: usize,
    fixed_resolution: usize,
    solver: &SolverOptions,
) -> Result<Vec<f64>, CellError> {
    let spec = family.instantiate(eta)?;
    let ((cs, ct), (fs, ft)) = cell_meshes(&spec, axis, resolution, fixed_resolution)?;
    let coarse = time_march_with(&spec, &cs, &ct, solver)?;
    let fine = time_march_with(&spec, &fs, &ft, solver)?;
    two_mesh_difference_by_component(&coarse, &fine).map_err(|e| CellError::Difference(Box::new(e)))
}

/// Runs the two-mesh sweep over `etas x resolutions`. Cells are independent
/// and run under `options.execution`; the report does not depend on it.
pub fn run_sweep(
    family: &dyn ProblemFamily,
    etas: &[f64],
    axis: Axis,
    resolutions: &[usize],
    fixed_resolution: usize,
    options: &SweepOptions,
) -> Result<ConvergenceReport, ConvergenceError> {
    if etas.is_empty() {
        return Err(ConvergenceError::NoParameters);
    }
    check_resolutions(resolutions)?;
    let cells: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|e| (0..resolutions.len()).map(move |r| (e, r)))
        .collect();
    let results = options.execution.map(&cells, |&(e, r)| {
        run_cell(
            family,
            etas[e],
            axis,
            resolutions[r],
            fixed_resolution,
            &options.solver,
        )
    });

    let mut component_differences = vec![Vec::with_capacity(resolutions.len()); etas.len()];
    for (&(e, r), result) in cells.iter().zip(results) {
        let per_component = result.map_err(|source| ConvergenceError::Cell {
            eta: etas[e],
            resolution: resolutions[r],
            source,
        })?;
        component_differences[e].push(per_component);
    }
    let differences: Vec<Vec<f64>> = component_differences
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| c.iter().copied().fold(0.0, f64::max))
                .collect()
        })
        .collect();
    let uniform: Vec<f64> = (0..resolutions.len())
        .map(|r| differences.iter().map(|row| row[r]).fold(0.0, f64::max))
        .collect();
    let est = estimate_orders(resolutions, &uniform)?;
    Ok(ConvergenceReport {
        axis,
        etas: etas.to_vec(),
        resolutions: resolutions.to_vec(),
        fixed_resolution,
        differences,
        component_differences,
        uniform,
        orders: est.orders,
        p_star: est.p_star,
        constants: est.constants,
        c_star: est.c_star,
    })
}

/// Three significant digits with a mantissa in `[0.1, 1)`, e.g.
/// `0.153E-01`.
pub fn format_table_value(value: f64) -> String {
    if value == 0.0 {
        return "0.000E+00".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    // `{:.2e}` rounds correctly to three digits: "1.53e-2".
    let s = format!("{:.2e}", value.abs());
    let (mantissa, exponent) = s.split_once('e').expect("scientific format");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let exponent: i32 = exponent.parse::<i32>().expect("exponent") + 1;
    let sign = if value < 0.0 { "-" } else { "" };
    let esign = if exponent < 0 { '-' } else { '+' };
    format!("{sign}0.{digits}E{esign}{:02}", exponent.abs())
}

impl ConvergenceReport {
    /// Writes the table layout: one row per `eta`, one column per
    /// resolution, then rows `D`, `p`, `C`, `p*`, `C*`. Each table column
    /// has a full-precision companion column.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let cols = self.resolutions.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![format!(
            "eta ({}={})",
            self.axis.fixed_symbol(),
            self.fixed_resolution
        )];
        header.extend(
            self.resolutions
                .iter()
                .map(|r| format!("{}={r}", self.axis.symbol())),
        );
        header.extend(
            self.resolutions
                .iter()
                .map(|r| format!("{}={r} full", self.axis.symbol())),
        );
        w.write_record(&header)?;

        let mut row = |label: String, values: &[f64]| -> Result<(), csv::Error> {
            let mut record = Vec::with_capacity(1 + 2 * cols);
            record.push(label);
            for c in 0..cols {
                record.push(
                    values
                        .get(c)
                        .map_or(String::new(), |v| format_table_value(*v)),
                );
            }
            for c in 0..cols {
                record.push(values.get(c).map_or(String::new(), |v| format!("{v:e}")));
            }
            w.write_record(&record)
        };
        for (eta, diffs) in self.etas.iter().zip(&self.differences) {
            row(format!("{eta:e}"), diffs)?;
        }
        row("D".into(), &self.uniform)?;
        row("p".into(), &self.orders)?;
        row("C".into(), &self.constants)?;
        row("p*".into(), &[self.p_star])?;
        row("C*".into(), &[self.c_star])?;
        w.flush()?;
        Ok(())
    }
}
