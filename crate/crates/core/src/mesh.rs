//! Piecewise-uniform Shishkin meshes in space, uniform meshes in time, and
//! the layer functions that motivate the transition points.
//!
//! For `n` components the unit interval is split into `2n + 1` bands:
//!
//! ```text
//! [0, s1] [s1, s2] ... [s_{n-1}, s_n] [s_n, 1 - s_n] [1 - s_n, 1 - s_{n-1}] ... [1 - s1, 1]
//! ```
//!
//! The outer band carries `N/2` intervals and every layer band `N/(4n)`.
//! Transition parameters are chosen top-down,
//! `s_n = min(1/4, 2 sqrt(eps_n / alpha) ln N)` and
//! `s_r = min(r s_{r+1} / (r+1), 2 sqrt(eps_r / alpha) ln N)`.

use std::io;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("N = {intervals} is not admissible for n = {components}: {reason}")]
    Resolution {
        intervals: usize,
        components: usize,
        reason: &'static str,
    },
    #[error("invalid mesh parameters: {0}")]
    Parameters(String),
    #[error("time mesh needs T > 0 and M >= 1 (got T = {horizon}, M = {intervals})")]
    TimeMesh { horizon: f64, intervals: usize },
    #[error("interesting point needs i < j, got i = {i}, j = {j}")]
    IndexOrder { i: usize, j: usize },
}

/// Relative tolerance for deciding whether the step changes at a point.
pub const STEP_CHANGE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMesh {
    points: Vec<f64>,
    sigmas: Vec<f64>,
    d_values: Vec<f64>,
    left_choice: Vec<bool>,
    /// Intervals per band on the left half, outer half-band last.
    band_intervals: Vec<usize>,
    change_set: Vec<usize>,
}

impl SpaceMesh {
    /// Number of mesh intervals `N`.
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `h_j = x_j - x_{j-1}` for `j = 1..=N`.
    pub fn step(&self, j: usize) -> f64 {
        self.points[j] - self.points[j - 1]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn d_values(&self) -> &[f64] {
        &self.d_values
    }

    /// Whether each `sigma_r` took the geometric ("left") branch of its min.
    pub fn left_choice(&self) -> &[bool] {
        &self.left_choice
    }

    /// True when every transition parameter took its left choice, in which
    /// case the mesh is uniform with step `1/N`.
    pub fn is_uniform_collapse(&self) -> bool {
        !self.left_choice.is_empty() && self.left_choice.iter().all(|&l| l)
    }

    /// Mesh indices at which the step size changes.
    pub fn change_set(&self) -> &[usize] {
        &self.change_set
    }

    /// Intervals per band across the whole mesh, left to right (`2n + 1`
    /// bands), or a single band for a mesh built from raw points.
    pub fn band_counts(&self) -> Vec<usize> {
        if self.band_intervals.is_empty() {
            return vec![self.intervals()];
        }
        let layers = &self.band_intervals[..self.band_intervals.len() - 1];
        let outer = 2 * self.band_intervals[self.band_intervals.len() - 1];
        layers
            .iter()
            .copied()
            .chain(std::iter::once(outer))
            .chain(layers.iter().rev().copied())
            .collect()
    }

    /// Indices of the points `sigma_1..sigma_n` followed by
    /// `1 - sigma_n..1 - sigma_1`.
    pub fn transition_indices(&self) -> Vec<usize> {
        let n = self.sigmas.len();
        let mut left = Vec::with_capacity(n);
        let mut acc = 0;
        for &m in &self.band_intervals[..n] {
            acc += m;
            left.push(acc);
        }
        let total = self.intervals();
        let right = left.iter().rev().map(|&j| total - j);
        left.iter().copied().chain(right).collect()
    }

    /// A general mesh from strictly increasing points on `[0, 1]`. It has no
    /// transition parameters; the change set is every interior point where
    /// the step changes.
    pub fn from_points(points: Vec<f64>) -> Result<Self, MeshError> {
        if points.len() < 2
            || points[0] != 0.0
            || *points.last().unwrap() != 1.0
            || points.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(MeshError::Parameters(
                "points must increase strictly from 0 to 1".into(),
            ));
        }
        let candidates: Vec<usize> = (1..points.len() - 1).collect();
        let change_set = step_changes(&points, &candidates);
        Ok(SpaceMesh {
            points,
            sigmas: Vec::new(),
            d_values: Vec::new(),
            left_choice: Vec::new(),
            band_intervals: Vec::new(),
            change_set,
        })
    }

    pub fn uniform(intervals: usize) -> Result<Self, MeshError> {
        if intervals == 0 {
            return Err(MeshError::Parameters("need at least one interval".into()));
        }
        let mut points: Vec<f64> = (0..=intervals)
            .map(|j| j as f64 / intervals as f64)
            .collect();
        points[intervals] = 1.0;
        Self::from_points(points)
    }

    /// Inserts the midpoint of every interval. Transition parameters are
    /// kept and every band gets twice as many intervals.
    pub fn bisect(&self) -> SpaceMesh {
        let mut points = Vec::with_capacity(2 * self.points.len() - 1);
        for w in self.points.windows(2) {
            points.push(w[0]);
            points.push(0.5 * (w[0] + w[1]));
        }
        points.push(*self.points.last().unwrap());
        if self.band_intervals.is_empty() {
            return Self::from_points(points).expect("bisection keeps points ordered");
        }
        let band_intervals: Vec<usize> = self.band_intervals.iter().map(|m| 2 * m).collect();
        let mut mesh = SpaceMesh {
            points,
            sigmas: self.sigmas.clone(),
            d_values: self.d_values.clone(),
            left_choice: self.left_choice.clone(),
            band_intervals,
            change_set: Vec::new(),
        };
        mesh.change_set = step_changes(&mesh.points, &mesh.transition_indices());
        mesh
    }

    /// Writes `j,x_j,h_j,in_J` rows; `h_0` is left empty.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["j", "x_j", "h_j", "in_J"])?;
        for (j, x) in self.points.iter().enumerate() {
            let h = if j == 0 {
                String::new()
            } else {
                format!("{:e}", self.step(j))
            };
            let in_j = self.change_set.binary_search(&j).is_ok();
            w.write_record([
                j.to_string(),
                format!("{x:e}"),
                h,
                u8::from(in_j).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn step_changes(points: &[f64], candidates: &[usize]) -> Vec<usize> {
    let mut set: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&j| j > 0 && j + 1 < points.len())
        .filter(|&j| {
            let minus = points[j] - points[j - 1];
            let plus = points[j + 1] - points[j];
            (plus - minus).abs() > STEP_CHANGE_RTOL * plus.max(minus)
        })
        .collect();
    set.sort_unstable();
    set.dedup();
    set
}

/// Transition parameters `sigma_1 < ... < sigma_n` and whether each took
/// its left (geometric) choice.
pub fn transition_parameters(
    epsilons: &[f64],
    alpha: f64,
    intervals: usize,
) -> Result<(Vec<f64>, Vec<bool>), MeshError> {
    let n = epsilons.len();
    if n == 0 {
        return Err(MeshError::Parameters("no perturbation parameters".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) || epsilons.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(MeshError::Parameters(format!(
            "perturbation parameters must increase strictly inside (0,1): {epsilons:?}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MeshError::Parameters(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let ln_n = (intervals as f64).ln();
    let fitted = |r: usize| 2.0 * (epsilons[r] / alpha).sqrt() * ln_n;
    let mut sigmas = vec![0.0; n];
    let mut left = vec![false; n];
    for r in (0..n).rev() {
        // 1-based index r + 1; the cap for the top parameter is 1/4.
        let cap = if r == n - 1 {
            0.25
        } else {
            (r + 1) as f64 * sigmas[r + 1] / (r + 2) as f64
        };
        let candidate = fitted(r);
        left[r] = cap <= candidate;
        sigmas[r] = cap.min(candidate);
    }
    Ok((sigmas, left))
}

/// Builds the Shishkin mesh with `intervals = N` intervals. `N` must be a
/// multiple of `4n` with at least three intervals per layer band.
pub fn build_shishkin_mesh(
    epsilons: &[f64],
    alpha: f64,
    intervals: usize,
) -> Result<SpaceMesh, MeshError> {
    let n = epsilons.len();
    if n == 0 {
        return Err(MeshError::Parameters("no perturbation parameters".into()));
    }
    if !intervals.is_multiple_of(4 * n) {
        return Err(MeshError::Resolution {
            intervals,
            components: n,
            reason: "must be a multiple of 4n",
        });
    }
    let per_layer = intervals / (4 * n);
    if per_layer < 3 {
        return Err(MeshError::Resolution {
            intervals,
            components: n,
            reason: "needs at least 3 intervals per layer band",
        });
    }
    let (sigmas, left_choice) = transition_parameters(epsilons, alpha, intervals)?;

    let mut band_intervals = vec![per_layer; n];
    band_intervals.push(intervals / 4);
    let mut edges = Vec::with_capacity(n + 2);
    edges.push(0.0);
    edges.extend_from_slice(&sigmas);
    edges.push(0.5);

    let half = intervals / 2;
    let mut points = vec![0.0; intervals + 1];
    let mut j = 0;
    for (b, &m) in band_intervals.iter().enumerate() {
        let (a, c) = (edges[b], edges[b + 1]);
        for k in 0..m {
            points[j] = a + (c - a) * k as f64 / m as f64;
            j += 1;
        }
    }
    debug_assert_eq!(j, half);
    points[half] = 0.5;
    for j in 0..half {
        points[intervals - j] = 1.0 - points[j];
    }

    let d_values = (0..n)
        .map(|r| {
            let next = if r + 1 < n { sigmas[r + 1] } else { 0.5 };
            let r1 = (r + 1) as f64;
            r1 * next / (r1 + 1.0) - sigmas[r]
        })
        .collect();

    let mut mesh = SpaceMesh {
        points,
        sigmas,
        d_values,
        left_choice,
        band_intervals,
        change_set: Vec::new(),
    };
    mesh.change_set = step_changes(&mesh.points, &mesh.transition_indices());
    Ok(mesh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    points: Vec<f64>,
    horizon: f64,
}

impl TimeMesh {
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn bisect(&self) -> TimeMesh {
        build_time_mesh(self.horizon, 2 * self.intervals()).expect("valid mesh bisects")
    }
}

pub fn build_time_mesh(horizon: f64, intervals: usize) -> Result<TimeMesh, MeshError> {
    if !(horizon > 0.0 && horizon.is_finite()) || intervals == 0 {
        return Err(MeshError::TimeMesh { horizon, intervals });
    }
    let mut points: Vec<f64> = (0..=intervals)
        .map(|k| k as f64 * horizon / intervals as f64)
        .collect();
    points[intervals] = horizon;
    Ok(TimeMesh { points, horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSide {
    Left,
    Right,
    Sum,
}

/// `B^L_i(x) = exp(-x sqrt(alpha / eps_i))`, its mirror `B^R_i(x) =
/// B^L_i(1 - x)`, or their sum. `i` is 0-based.
pub fn layer_function(i: usize, x: f64, side: LayerSide, epsilons: &[f64], alpha: f64) -> f64 {
    let rate = (alpha / epsilons[i]).sqrt();
    let left = |y: f64| (-y * rate).exp();
    match side {
        LayerSide::Left => left(x),
        LayerSide::Right => left(1.0 - x),
        LayerSide::Sum => left(x) + left(1.0 - x),
    }
}

/// The abscissa where `B^L_i(x) / eps_i^s == B^L_j(x) / eps_j^s`, for
/// 0-based `i < j` and `0 < s <= 3/2`.
pub fn interesting_point(
    i: usize,
    j: usize,
    s: f64,
    epsilons: &[f64],
    alpha: f64,
) -> Result<f64, MeshError> {
    if i >= j {
        return Err(MeshError::IndexOrder { i, j });
    }
    if j >= epsilons.len() {
        return Err(MeshError::Parameters(format!(
            "component index {j} out of range for {} components",
            epsilons.len()
        )));
    }
    if !(s > 0.0 && s <= 1.5) {
        return Err(MeshError::Parameters(format!(
            "s must lie in (0, 3/2], got {s}"
        )));
    }
    let (ei, ej) = (epsilons[i], epsilons[j]);
    Ok(s * (ej / ei).ln() / (alpha.sqrt() * (1.0 / ei.sqrt() - 1.0 / ej.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_mesh_parameters() {
        let eps = [2f64.powi(-15), 2f64.powi(-14)];
        let mesh = build_shishkin_mesh(&eps, 2.9, 128).unwrap();
        // Both branches of each min, evaluated directly.
        let ln = 128f64.ln();
        let fitted2 = 2.0 * eps[1].sqrt() / 2.9f64.sqrt() * ln;
        let fitted1 = 2.0 * eps[0].sqrt() / 2.9f64.sqrt() * ln;
        assert!(fitted2 < 0.25);
        assert!(fitted1 > fitted2 / 2.0);
        assert!((mesh.sigmas()[1] - fitted2).abs() < 1e-15);
        assert_eq!(mesh.sigmas()[0], mesh.sigmas()[1] / 2.0);
        assert_eq!(mesh.d_values()[0], 0.0);
        assert!((mesh.sigmas()[1] - 0.0445189106).abs() < 1e-9);
        assert!((mesh.sigmas()[0] - 0.0222594553).abs() < 1e-9);
        assert_eq!(mesh.left_choice(), &[true, false]);
        assert_eq!(mesh.band_counts(), vec![16, 16, 64, 16, 16]);
        // sigma_1 = sigma_2 / 2 gives equal steps on [0, sigma_2]: only
        // sigma_2 and 1 - sigma_2 change the step.
        assert_eq!(mesh.change_set(), &[32, 96]);
        assert_eq!(mesh.points()[16], mesh.sigmas()[0]);
        assert_eq!(mesh.points()[32], mesh.sigmas()[1]);
    }

    #[test]
    fn uniform_collapse() {
        let mesh = build_shishkin_mesh(&[0.04, 0.05], 2.9, 32).unwrap();
        assert_eq!(mesh.sigmas(), &[0.125, 0.25]);
        assert!(mesh.is_uniform_collapse());
        assert!(mesh.change_set().is_empty());
        for j in 1..=32 {
            assert!((mesh.step(j) - 1.0 / 32.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_resolutions() {
        let eps = [1e-4, 1e-3];
        assert!(matches!(
            build_shishkin_mesh(&eps, 2.9, 100),
            Err(MeshError::Resolution { .. })
        ));
        assert!(build_shishkin_mesh(&eps, 2.9, 16).is_err());
        assert!(build_shishkin_mesh(&eps, 2.9, 24).is_ok());
        assert!(build_shishkin_mesh(&[1e-3, 1e-4], 2.9, 32).is_err());
        assert!(build_shishkin_mesh(&eps, -1.0, 32).is_err());
    }

    #[test]
    fn time_mesh() {
        assert_eq!(
            build_time_mesh(1.0, 4).unwrap().points(),
            &[0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(build_time_mesh(2.0, 2).unwrap().points(), &[0.0, 1.0, 2.0]);
        assert!(build_time_mesh(1.0, 0).is_err());
        assert!(build_time_mesh(0.0, 4).is_err());
    }

    #[test]
    fn layer_function_values() {
        let eps = [1e-4, 1e-2];
        assert_eq!(layer_function(0, 0.0, LayerSide::Left, &eps, 2.9), 1.0);
        let n = 64.0f64;
        for (i, &e) in eps.iter().enumerate() {
            let x = 2.0 * e.sqrt() / 2.9f64.sqrt() * n.ln();
            let b = layer_function(i, x, LayerSide::Left, &eps, 2.9);
            assert!((b - n.powi(-2)).abs() <= 1e-12 * n.powi(-2));
            let s = layer_function(i, 0.3, LayerSide::Sum, &eps, 2.9);
            let m = layer_function(i, 0.7, LayerSide::Sum, &eps, 2.9);
            assert!((s - m).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn interesting_point_closed_form() {
        let eps = [1e-4, 1e-2];
        let x = interesting_point(0, 1, 1.0, &eps, 1.0).unwrap();
        // ln(100) / (100 - 10)
        assert!((x - 0.051168557).abs() < 1e-9, "{x}");
        let lhs = layer_function(0, x, LayerSide::Left, &eps, 1.0) / eps[0];
        let rhs = layer_function(1, x, LayerSide::Left, &eps, 1.0) / eps[1];
        assert!((lhs - rhs).abs() <= 1e-10 * lhs);
        assert!(x < 2.0 * eps[1].sqrt());
        assert_eq!(
            interesting_point(1, 1, 1.0, &eps, 1.0),
            Err(MeshError::IndexOrder { i: 1, j: 1 })
        );
        assert!(interesting_point(0, 1, 1.6, &eps, 1.0).is_err());
    }

    #[test]
    fn bisection_keeps_structure() {
        let uniform = build_shishkin_mesh(&[0.04, 0.05], 2.9, 32).unwrap();
        let fine = uniform.bisect();
        assert_eq!(fine.intervals(), 64);
        for j in 1..=64 {
            assert!((fine.step(j) - 1.0 / 64.0).abs() < 1e-15);
        }

        let coarse = build_shishkin_mesh(&[2f64.powi(-15), 2f64.powi(-14)], 2.9, 64).unwrap();
        let fine = coarse.bisect();
        assert_eq!(fine.sigmas(), coarse.sigmas());
        assert_eq!(fine.band_counts(), vec![16, 16, 64, 16, 16]);
        for (j, &x) in coarse.points().iter().enumerate() {
            assert_eq!(fine.points()[2 * j], x);
        }
        for &j in &fine.transition_indices()[..2] {
            assert!(fine.sigmas().contains(&fine.points()[j]));
        }
        assert_eq!(fine.change_set(), &[32, 96]);
    }

    #[test]
    fn general_n_mesh() {
        let eps = [1e-8, 1e-6, 1e-4];
        let mesh = build_shishkin_mesh(&eps, 1.0, 48).unwrap();
        assert_eq!(mesh.band_counts(), vec![4, 4, 4, 24, 4, 4, 4]);
        let s = mesh.sigmas();
        assert!(s[0] < s[1] && s[1] < s[2] && s[2] <= 0.25);
        assert!(mesh.d_values().iter().all(|&d| d >= 0.0));
        let uniform = build_shishkin_mesh(&[0.01, 0.02, 0.03], 1.0, 48).unwrap();
        assert!(uniform.is_uniform_collapse());
        for j in 1..=48 {
            assert!((uniform.step(j) - 1.0 / 48.0).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_dump() {
        let mesh = build_shishkin_mesh(&[2f64.powi(-15), 2f64.powi(-14)], 2.9, 32).unwrap();
        let mut buf = Vec::new();
        mesh.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 34);
        assert_eq!(lines[0], "j,x_j,h_j,in_J");
        assert_eq!(lines[1], "0,0e0,,0");
        assert!(lines[1 + 8].ends_with(",1"));
    }
}
