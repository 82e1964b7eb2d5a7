//! Continuous problem data and the structural checks it must satisfy.
//!
//! The system is `u_t - E u_xx + A u = f` on `(0,1) x (0,T]` with
//! `u - E_* u_x = phi_left` at `x = 0`, `u + E_* u_x = phi_right` at `x = 1`
//! and `u = phi_bottom` at `t = 0`, where `E = diag(eps)` and
//! `E_* = diag(sqrt(eps))`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::exec::Execution;
use crate::expr::{parse_expression, DomainError, Expr, ParseError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("perturbation parameters must be strictly increasing and lie in (0,1), got {0:?}")]
    InvalidEpsilons(Vec<f64>),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("time horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("{field} has {found} components, expected {expected}")]
    Dimension {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("evaluating {field} at (x={x}, t={t}): {source}")]
    Evaluation {
        field: &'static str,
        x: f64,
        t: f64,
        #[source]
        source: DomainError,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("config key `{key}`: {source}")]
    Expression {
        key: String,
        #[source]
        source: ParseError,
    },
}

type FieldFn = dyn Fn(f64, f64, &mut [f64]) -> Result<(), DomainError> + Send + Sync;

/// A vector- or matrix-valued function of `(x, t)`. Matrices are stored
/// row-major.
#[derive(Clone)]
pub struct Field {
    len: usize,
    eval: Arc<FieldFn>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("len", &self.len).finish()
    }
}

impl Field {
    pub fn new<F>(len: usize, eval: F) -> Self
    where
        F: Fn(f64, f64, &mut [f64]) -> Result<(), DomainError> + Send + Sync + 'static,
    {
        Field {
            len,
            eval: Arc::new(eval),
        }
    }

    /// Infallible closure form.
    pub fn from_fn<F>(len: usize, eval: F) -> Self
    where
        F: Fn(f64, f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(len, move |x, t, out| {
            eval(x, t, out);
            Ok(())
        })
    }

    pub fn constant(values: Vec<f64>) -> Self {
        Self::from_fn(values.len(), move |_, _, out| out.copy_from_slice(&values))
    }

    pub fn from_exprs(exprs: Vec<Expr>) -> Self {
        Self::new(exprs.len(), move |x, t, out| {
            for (slot, e) in out.iter_mut().zip(&exprs) {
                *slot = e.eval(x, t)?;
            }
            Ok(())
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn eval_into(&self, x: f64, t: f64, out: &mut [f64]) -> Result<(), DomainError> {
        debug_assert_eq!(out.len(), self.len);
        (self.eval)(x, t, out)
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<Vec<f64>, DomainError> {
        let mut out = vec![0.0; self.len];
        self.eval_into(x, t, &mut out)?;
        Ok(out)
    }
}

/// Coefficient data of the system, independent of the perturbation
/// parameters. `phi_left` and `phi_right` are evaluated at `x = 0` and
/// `x = 1`, `phi_bottom` at `t = 0`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub coeff_matrix: Field,
    pub source: Field,
    pub phi_left: Field,
    pub phi_right: Field,
    pub phi_bottom: Field,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    epsilons: Vec<f64>,
    alpha: f64,
    horizon: f64,
    coefficients: Coefficients,
}

fn check_epsilons(epsilons: &[f64]) -> Result<(), ProblemError> {
    let in_range = epsilons.iter().all(|&e| e > 0.0 && e < 1.0);
    let increasing = epsilons.windows(2).all(|w| w[0] < w[1]);
    if epsilons.is_empty() || !in_range || !increasing {
        return Err(ProblemError::InvalidEpsilons(epsilons.to_vec()));
    }
    Ok(())
}

impl ProblemSpec {
    pub fn new(
        coefficients: Coefficients,
        epsilons: Vec<f64>,
        alpha: f64,
        horizon: f64,
    ) -> Result<Self, ProblemError> {
        check_epsilons(&epsilons)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ProblemError::InvalidAlpha(alpha));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::InvalidHorizon(horizon));
        }
        let n = epsilons.len();
        let c = &coefficients;
        for (field, found, expected) in [
            ("A", c.coeff_matrix.len(), n * n),
            ("f", c.source.len(), n),
            ("phi_left", c.phi_left.len(), n),
            ("phi_right", c.phi_right.len(), n),
            ("phi_bottom", c.phi_bottom.len(), n),
        ] {
            if found != expected {
                return Err(ProblemError::Dimension {
                    field,
                    expected,
                    found,
                });
            }
        }
        Ok(ProblemSpec {
            epsilons,
            alpha,
            horizon,
            coefficients,
        })
    }

    pub fn with_epsilons(&self, epsilons: Vec<f64>) -> Result<Self, ProblemError> {
        Self::new(
            self.coefficients.clone(),
            epsilons,
            self.alpha,
            self.horizon,
        )
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ProblemError> {
        Self::new(
            self.coefficients.clone(),
            self.epsilons.clone(),
            alpha,
            self.horizon,
        )
    }

    pub fn n(&self) -> usize {
        self.epsilons.len()
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn coeff_matrix_into(&self, x: f64, t: f64, out: &mut [f64]) -> Result<(), ProblemError> {
        self.coefficients
            .coeff_matrix
            .eval_into(x, t, out)
            .map_err(|source| ProblemError::Evaluation {
                field: "A",
                x,
                t,
                source,
            })
    }

    pub fn source_into(&self, x: f64, t: f64, out: &mut [f64]) -> Result<(), ProblemError> {
        self.coefficients
            .source
            .eval_into(x, t, out)
            .map_err(|source| ProblemError::Evaluation {
                field: "f",
                x,
                t,
                source,
            })
    }

    pub fn phi_left_into(&self, t: f64, out: &mut [f64]) -> Result<(), ProblemError> {
        self.coefficients
            .phi_left
            .eval_into(0.0, t, out)
            .map_err(|source| ProblemError::Evaluation {
                field: "phi_left",
                x: 0.0,
                t,
                source,
            })
    }

    pub fn phi_right_into(&self, t: f64, out: &mut [f64]) -> Result<(), ProblemError> {
        self.coefficients
            .phi_right
            .eval_into(1.0, t, out)
            .map_err(|source| ProblemError::Evaluation {
                field: "phi_right",
                x: 1.0,
                t,
                source,
            })
    }

    pub fn phi_bottom_into(&self, x: f64, out: &mut [f64]) -> Result<(), ProblemError> {
        self.coefficients
            .phi_bottom
            .eval_into(x, 0.0, out)
            .map_err(|source| ProblemError::Evaluation {
                field: "phi_bottom",
                x,
                t: 0.0,
                source,
            })
    }

    pub fn coeff_matrix(&self, x: f64, t: f64) -> Result<Vec<f64>, ProblemError> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        self.coeff_matrix_into(x, t, &mut out)?;
        Ok(out)
    }

    pub fn source(&self, x: f64, t: f64) -> Result<Vec<f64>, ProblemError> {
        let mut out = vec![0.0; self.n()];
        self.source_into(x, t, &mut out)?;
        Ok(out)
    }

    pub fn phi_left(&self, t: f64) -> Result<Vec<f64>, ProblemError> {
        let mut out = vec![0.0; self.n()];
        self.phi_left_into(t, &mut out)?;
        Ok(out)
    }

    pub fn phi_right(&self, t: f64) -> Result<Vec<f64>, ProblemError> {
        let mut out = vec![0.0; self.n()];
        self.phi_right_into(t, &mut out)?;
        Ok(out)
    }

    pub fn phi_bottom(&self, x: f64) -> Result<Vec<f64>, ProblemError> {
        let mut out = vec![0.0; self.n()];
        self.phi_bottom_into(x, &mut out)?;
        Ok(out)
    }
}

/// The two-component test problem with `A = [[4+3t, -1], [-1, 4+3t]]`,
/// `f = 2 + exp(3t)`, `phi_left = phi_right = 1 + t^8`, `phi_bottom = 1`,
/// `T = 1` and `alpha = 2.9`.
pub fn builtin_example(epsilons: [f64; 2]) -> Result<ProblemSpec, ProblemError> {
    let coefficients = Coefficients {
        coeff_matrix: Field::from_fn(4, |_, t, a| {
            a.copy_from_slice(&[4.0 + 3.0 * t, -1.0, -1.0, 4.0 + 3.0 * t])
        }),
        source: Field::from_fn(2, |_, t, f| f.fill(2.0 + (3.0 * t).exp())),
        phi_left: Field::from_fn(2, |_, t, p| p.fill(1.0 + t.powi(8))),
        phi_right: Field::from_fn(2, |_, t, p| p.fill(1.0 + t.powi(8))),
        phi_bottom: Field::constant(vec![1.0, 1.0]),
    };
    ProblemSpec::new(coefficients, epsilons.to_vec(), 2.9, 1.0)
}

/// One structural check evaluated over the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst-case slack; the check passes iff this is positive (or
    /// nonnegative for the non-strict inequalities).
    pub margin: f64,
    /// Sample point `(x, t)` where the worst margin occurred.
    pub worst_at: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub pass: bool,
    pub diagonal_dominance: Check,
    pub off_diagonal_sign: Check,
    pub row_sum_exceeds_alpha: Check,
    pub epsilon_bound: Check,
    /// Minimum sampled row sum of `A`.
    pub min_row_sum: f64,
    pub samples_x: usize,
    pub samples_t: usize,
    pub evaluation_error: Option<String>,
}

impl ValidationReport {
    pub fn checks(&self) -> [&Check; 4] {
        [
            &self.diagonal_dominance,
            &self.off_diagonal_sign,
            &self.row_sum_exceeds_alpha,
            &self.epsilon_bound,
        ]
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks()
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "validation {} ({}x{} samples)",
            if self.pass { "PASS" } else { "FAIL" },
            self.samples_x,
            self.samples_t
        )?;
        for c in self.checks() {
            write!(
                f,
                "  {:<24} {} margin={:.6e}",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.margin
            )?;
            if let Some((x, t)) = c.worst_at {
                write!(f, " at (x={x}, t={t})")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "  min row sum = {:.6e}", self.min_row_sum)?;
        if let Some(e) = &self.evaluation_error {
            writeln!(f, "  evaluation error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Worst {
    value: f64,
    at: (f64, f64),
}

impl Worst {
    fn min(a: Option<Worst>, b: Option<Worst>) -> Option<Worst> {
        match (a, b) {
            (Some(a), Some(b)) => Some(if b.value < a.value { b } else { a }),
            (a, None) => a,
            (None, b) => b,
        }
    }
}

#[derive(Clone, Copy, Default)]
struct RowStats {
    dominance: Option<Worst>,
    off_diagonal: Option<Worst>,
    row_sum: Option<Worst>,
}

impl RowStats {
    fn merge(self, other: RowStats) -> RowStats {
        RowStats {
            dominance: Worst::min(self.dominance, other.dominance),
            off_diagonal: Worst::min(self.off_diagonal, other.off_diagonal),
            row_sum: Worst::min(self.row_sum, other.row_sum),
        }
    }
}

/// Checks diagonal dominance, nonpositive off-diagonals and
/// `min row sum > alpha` on a `samples_x x samples_t` tensor grid over
/// `[0,1] x [0,T]`, plus `sqrt(eps_n) <= sqrt(alpha)/6`.
pub fn validate_assumptions(
    spec: &ProblemSpec,
    samples_x: usize,
    samples_t: usize,
) -> ValidationReport {
    validate_assumptions_with(spec, samples_x, samples_t, Execution::default())
}

pub fn validate_assumptions_with(
    spec: &ProblemSpec,
    samples_x: usize,
    samples_t: usize,
    exec: Execution,
) -> ValidationReport {
    let samples_x = samples_x.max(2);
    let samples_t = samples_t.max(2);
    let n = spec.n();
    let alpha = spec.alpha();
    let t_rows: Vec<usize> = (0..samples_t).collect();

    let rows = exec.map(&t_rows, |&kt| -> Result<RowStats, ProblemError> {
        let t = spec.horizon() * kt as f64 / (samples_t - 1) as f64;
        let mut a = vec![0.0; n * n];
        let mut stats = RowStats::default();
        for kx in 0..samples_x {
            let x = kx as f64 / (samples_x - 1) as f64;
            spec.coeff_matrix_into(x, t, &mut a)?;
            for i in 0..n {
                let row = &a[i * n..(i + 1) * n];
                let off_abs: f64 = (0..n).filter(|&j| j != i).map(|j| row[j].abs()).sum();
                let sum: f64 = row.iter().sum();
                let at = (x, t);
                stats.dominance = Worst::min(
                    stats.dominance,
                    Some(Worst {
                        value: row[i] - off_abs,
                        at,
                    }),
                );
                stats.row_sum = Worst::min(stats.row_sum, Some(Worst { value: sum, at }));
                for (j, &aij) in row.iter().enumerate() {
                    if j != i {
                        stats.off_diagonal =
                            Worst::min(stats.off_diagonal, Some(Worst { value: -aij, at }));
                    }
                }
            }
        }
        Ok(stats)
    });

    let mut evaluation_error = None;
    let mut stats = RowStats::default();
    for row in rows {
        match row {
            Ok(s) => stats = stats.merge(s),
            Err(e) if evaluation_error.is_none() => evaluation_error = Some(e.to_string()),
            Err(_) => {}
        }
    }
    let ok = evaluation_error.is_none();

    let dominance = stats.dominance.unwrap_or(Worst {
        value: f64::NAN,
        at: (0.0, 0.0),
    });
    let diagonal_dominance = Check {
        name: "diagonal dominance",
        passed: ok && dominance.value > 0.0,
        margin: dominance.value,
        worst_at: stats.dominance.map(|w| w.at),
    };
    let off_diagonal_sign = match stats.off_diagonal {
        Some(w) => Check {
            name: "off-diagonal sign",
            passed: ok && w.value >= 0.0,
            margin: w.value,
            worst_at: Some(w.at),
        },
        None => Check {
            name: "off-diagonal sign",
            passed: ok,
            margin: f64::INFINITY,
            worst_at: None,
        },
    };
    let min_row_sum = stats.row_sum.map_or(f64::NAN, |w| w.value);
    let row_sum_exceeds_alpha = Check {
        name: "row sum exceeds alpha",
        passed: ok && min_row_sum - alpha > 0.0,
        margin: min_row_sum - alpha,
        worst_at: stats.row_sum.map(|w| w.at),
    };
    let eps_n = spec.epsilons()[n - 1];
    let eps_margin = alpha.sqrt() / 6.0 - eps_n.sqrt();
    let epsilon_bound = Check {
        name: "sqrt(eps_n) <= sqrt(alpha)/6",
        passed: eps_margin >= 0.0,
        margin: eps_margin,
        worst_at: None,
    };
    let pass = diagonal_dominance.passed
        && off_diagonal_sign.passed
        && row_sum_exceeds_alpha.passed
        && epsilon_bound.passed;
    ValidationReport {
        pass,
        diagonal_dominance,
        off_diagonal_sign,
        row_sum_exceeds_alpha,
        epsilon_bound,
        min_row_sum,
        samples_x,
        samples_t,
        evaluation_error,
    }
}

/// Default sampling resolution for [`validate_assumptions`].
pub const DEFAULT_VALIDATION_SAMPLES: usize = 257;

/// A problem loaded from a config file. Perturbation parameters are
/// optional there because sweeps derive them from a parameter list.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub coefficients: Coefficients,
    pub epsilons: Option<Vec<f64>>,
    pub alpha: f64,
    pub horizon: f64,
    pub n: usize,
}

impl ProblemConfig {
    pub fn into_spec(self, epsilons: Option<Vec<f64>>) -> Result<ProblemSpec, ProblemError> {
        let eps = epsilons.or(self.epsilons).ok_or_else(|| {
            ProblemError::Config("no perturbation parameters given (`epsilons`)".into())
        })?;
        if eps.len() != self.n {
            return Err(ProblemError::Dimension {
                field: "epsilons",
                expected: self.n,
                found: eps.len(),
            });
        }
        ProblemSpec::new(self.coefficients, eps, self.alpha, self.horizon)
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(inner) => flatten(&path, inner, out),
            other => {
                out.insert(path, other.clone());
            }
        }
    }
}

fn as_number(key: &str, value: &toml::Value) -> Result<f64, ProblemError> {
    match value {
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Float(f) => Ok(*f),
        toml::Value::String(s) => parse_expression(s)
            .map_err(|source| ProblemError::Expression {
                key: key.to_string(),
                source,
            })?
            .eval(0.0, 0.0)
            .map_err(|e| ProblemError::Config(format!("`{key}`: {e}"))),
        _ => Err(ProblemError::Config(format!("`{key}` must be a number"))),
    }
}

fn as_expr(key: &str, value: &toml::Value) -> Result<Expr, ProblemError> {
    match value {
        toml::Value::String(s) => parse_expression(s).map_err(|source| ProblemError::Expression {
            key: key.to_string(),
            source,
        }),
        toml::Value::Integer(_) | toml::Value::Float(_) => {
            Ok(Expr::constant(as_number(key, value)?))
        }
        _ => Err(ProblemError::Config(format!(
            "`{key}` must be an expression string or a number"
        ))),
    }
}

/// Parses a problem config. Keys: `n`, `alpha`, `T`, optional `epsilons`
/// (array), and expression entries `A.i.j`, `f.i`, `phi_left.i`,
/// `phi_right.i`, `phi_bottom.i` with 1-based indices.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ProblemError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ProblemError::Config(e.to_string()))?;
    let mut entries = BTreeMap::new();
    flatten("", &table, &mut entries);

    let mut take = |key: &str| entries.remove(key);
    let n_value = take("n").ok_or_else(|| ProblemError::Config("missing `n`".into()))?;
    let n = match n_value {
        toml::Value::Integer(i) if i >= 1 => i as usize,
        _ => {
            return Err(ProblemError::Config(
                "`n` must be a positive integer".into(),
            ))
        }
    };
    let alpha = as_number(
        "alpha",
        &take("alpha").ok_or_else(|| ProblemError::Config("missing `alpha`".into()))?,
    )?;
    let horizon = as_number(
        "T",
        &take("T").ok_or_else(|| ProblemError::Config("missing `T`".into()))?,
    )?;
    let epsilons = match take("epsilons") {
        None => None,
        Some(toml::Value::Array(items)) => Some(
            items
                .iter()
                .map(|v| as_number("epsilons", v))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(ProblemError::Config("`epsilons` must be an array".into())),
    };

    let mut vector = |name: &str| -> Result<Vec<Expr>, ProblemError> {
        (1..=n)
            .map(|i| {
                let key = format!("{name}.{i}");
                let v = entries
                    .remove(&key)
                    .ok_or_else(|| ProblemError::Config(format!("missing `{key}`")))?;
                as_expr(&key, &v)
            })
            .collect()
    };
    let source = vector("f")?;
    let phi_left = vector("phi_left")?;
    let phi_right = vector("phi_right")?;
    let phi_bottom = vector("phi_bottom")?;
    let mut matrix = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let key = format!("A.{i}.{j}");
            let v = entries
                .remove(&key)
                .ok_or_else(|| ProblemError::Config(format!("missing `{key}`")))?;
            matrix.push(as_expr(&key, &v)?);
        }
    }
    if let Some(extra) = entries.keys().next() {
        return Err(ProblemError::Config(format!("unknown key `{extra}`")));
    }
    if let Some(eps) = &epsilons {
        if eps.len() != n {
            return Err(ProblemError::Dimension {
                field: "epsilons",
                expected: n,
                found: eps.len(),
            });
        }
        check_epsilons(eps)?;
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ProblemError::InvalidAlpha(alpha));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ProblemError::InvalidHorizon(horizon));
    }
    Ok(ProblemConfig {
        coefficients: Coefficients {
            coeff_matrix: Field::from_exprs(matrix),
            source: Field::from_exprs(source),
            phi_left: Field::from_exprs(phi_left),
            phi_right: Field::from_exprs(phi_right),
            phi_bottom: Field::from_exprs(phi_bottom),
        },
        epsilons,
        alpha,
        horizon,
        n,
    })
}

/// Config text equivalent to [`builtin_example`].
pub const EXAMPLE1_CONFIG: &str = r#"n = 2
alpha = 2.9
T = 1

A.1.1 = "4+3*t"
A.1.2 = "-1"
A.2.1 = "-1"
A.2.2 = "4+3*t"

f.1 = "2+exp(3*t)"
f.2 = "2+exp(3*t)"

phi_left.1 = "1+t^8"
phi_left.2 = "1+t^8"
phi_right.1 = "1+t^8"
phi_right.2 = "1+t^8"
phi_bottom.1 = "1"
phi_bottom.2 = "1"
"#;
