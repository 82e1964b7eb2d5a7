//! Finite differences on piecewise-uniform Shishkin meshes for singularly
//! perturbed parabolic reaction-diffusion systems
//!
//! ```text
//! u_t - E u_xx + A(x,t) u = f(x,t),   0 < x < 1,  0 < t <= T,
//! u - E_* u_x = phi_left  (x = 0),   u + E_* u_x = phi_right  (x = 1),
//! u(x, 0) = phi_bottom(x),
//! ```
//!
//! with `E = diag(eps_1 < ... < eps_n)` and `E_* = diag(sqrt(eps))`, plus
//! the two-mesh machinery that measures parameter-uniform convergence.
//!
//! With the default `parallel` feature, sweep cells and validation sample
//! rows run on the rayon pool; [`Execution::Sequential`] or building without
//! the feature runs them on the calling thread.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod discretization;
pub mod exec;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod problem;

pub use convergence::{
    estimate_orders, run_sweep, two_mesh_difference, Axis, ConvergenceError, ConvergenceReport,
    ProblemFamily, ScaledEpsilons, SweepOptions,
};
pub use discretization::{
    apply_discrete_operator, assemble_step, sample_data, second_difference, time_march,
    time_march_with, BlockTridiagonal, GridFunction, SolveError, SolverOptions, StepSystem,
};
pub use exec::Execution;
pub use expr::{parse_expression, Expr};
pub use mesh::{
    build_shishkin_mesh, build_time_mesh, interesting_point, layer_function, LayerSide, MeshError,
    SpaceMesh, TimeMesh,
};
pub use problem::{
    builtin_example, parse_config, validate_assumptions, Coefficients, Field, ProblemConfig,
    ProblemError, ProblemSpec, ValidationReport,
};
