#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use shishkin::{
    build_shishkin_mesh, build_time_mesh, time_march, BlockTridiagonal, Coefficients, Field,
    ProblemSpec, SpaceMesh, TimeMesh,
};

/// A randomized problem satisfying diagonal dominance, nonpositive
/// off-diagonals, `row sum >= alpha + margin` and `sqrt(eps_n) <=
/// sqrt(alpha)/6`, with strictly positive data, together with a mesh.
pub struct RandomCase {
    pub spec: ProblemSpec,
    pub space: SpaceMesh,
    pub time: TimeMesh,
}

pub fn random_epsilons<R: Rng>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let top = alpha / 36.0 * rng.gen_range(1e-6..0.999f64);
    let mut eps = vec![top.min(0.999); n];
    for r in (0..n - 1).rev() {
        eps[r] = eps[r + 1] * 10f64.powf(-rng.gen_range(0.2..3.0));
    }
    eps
}

/// Coefficient matrix varying in `(x, t)` with the structural properties
/// above; `off[i][j]` scales the off-diagonal magnitudes.
pub fn random_matrix_field<R: Rng>(rng: &mut R, n: usize, alpha: f64) -> Field {
    let off: Vec<f64> = (0..n * n)
        .map(|idx| {
            if idx / n == idx % n || rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..2.0)
            }
        })
        .collect();
    let margin: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
    let growth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
    let wobble = rng.gen_range(0.0..1.0);
    Field::from_fn(n * n, move |x, t, a| {
        for i in 0..n {
            let mut bound = 0.0;
            for j in 0..n {
                if i != j {
                    let b = off[i * n + j];
                    // |a_ij| <= 1.5 b
                    a[i * n + j] = -b * (1.0 + 0.5 * wobble * (PI * x * t).sin().abs());
                    bound += 1.5 * b;
                }
            }
            a[i * n + i] = bound + alpha + margin[i] + growth[i] * x * t;
        }
    })
}

fn positive_field<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Field {
    let amp: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..scale)).collect();
    let wave: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.99)).collect();
    let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
    Field::from_fn(n, move |x, t, out| {
        for i in 0..n {
            out[i] = amp[i] * (1.0 + wave[i] * (freq[i] * PI * (x + 0.7 * t)).sin());
        }
    })
}

pub fn random_positive_spec<R: Rng>(rng: &mut R, n: usize) -> ProblemSpec {
    let alpha = rng.gen_range(0.3..3.0);
    let eps = random_epsilons(rng, n, alpha);
    let coefficients = Coefficients {
        coeff_matrix: random_matrix_field(rng, n, alpha),
        source: positive_field(rng, n, 5.0),
        phi_left: positive_field(rng, n, 3.0),
        phi_right: positive_field(rng, n, 3.0),
        phi_bottom: positive_field(rng, n, 3.0),
    };
    let horizon = rng.gen_range(0.2..2.0);
    ProblemSpec::new(coefficients, eps, alpha, horizon).expect("valid random spec")
}

pub fn random_case<R: Rng>(rng: &mut R) -> RandomCase {
    let n = rng.gen_range(1..=3);
    let spec = random_positive_spec(rng, n);
    let big_n = 4 * n * rng.gen_range(3..=8);
    let space = build_shishkin_mesh(spec.epsilons(), spec.alpha(), big_n).unwrap();
    let time = build_time_mesh(spec.horizon(), rng.gen_range(2..=16)).unwrap();
    RandomCase { spec, space, time }
}

/// `u_i(x, t) = t cos(pi x)` for every component, with matching source and
/// Robin data.
pub fn manufactured_spec(epsilons: Vec<f64>) -> ProblemSpec {
    let n = epsilons.len();
    let a = move |x: f64, t: f64, out: &mut [f64]| {
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = if i == j { 4.0 + t + x } else { -1.0 / n as f64 };
            }
        }
    };
    let eps = epsilons.clone();
    let source = move |x: f64, t: f64, out: &mut [f64]| {
        let mut am = vec![0.0; n * n];
        a(x, t, &mut am);
        let c = (PI * x).cos();
        for i in 0..n {
            let row: f64 = am[i * n..(i + 1) * n].iter().sum();
            out[i] = c * (1.0 + eps[i] * PI * PI * t) + row * t * c;
        }
    };
    let coefficients = Coefficients {
        coeff_matrix: Field::from_fn(n * n, a),
        source: Field::from_fn(n, source),
        // u - sqrt(eps) u_x at x = 0 is t; u + sqrt(eps) u_x at x = 1 is -t.
        phi_left: Field::from_fn(n, |_, t, out| out.fill(t)),
        phi_right: Field::from_fn(n, |_, t, out| out.fill(-t)),
        phi_bottom: Field::constant(vec![0.0; n]),
    };
    ProblemSpec::new(coefficients, epsilons, 2.9, 1.0).unwrap()
}

pub fn manufactured_exact(x: f64, t: f64) -> f64 {
    t * (PI * x).cos()
}

/// Dense LU solve of the assembled matrix, independent of the library's
/// own factorisation.
pub fn dense_solve(sys: &BlockTridiagonal) -> Vec<f64> {
    let size = sys.block_rows() * sys.block_size();
    let m = DMatrix::from_row_slice(size, size, &sys.to_dense());
    let b = DVector::from_column_slice(sys.rhs());
    m.lu().solve(&b).expect("oracle solve").as_slice().to_vec()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn random_system<R: Rng>(rng: &mut R, n: usize, rows: usize) -> BlockTridiagonal {
    let mut sys = BlockTridiagonal::zeros(n, rows);
    for j in 0..rows {
        let mut row_abs = vec![0.0; n];
        for (slot, present) in [(0usize, j > 0), (2, j + 1 < rows)] {
            if !present {
                continue;
            }
            let block: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for r in 0..n {
                row_abs[r] += block[r * n..(r + 1) * n]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
            }
            if slot == 0 {
                sys.lower_mut(j).copy_from_slice(&block);
            } else {
                sys.upper_mut(j).copy_from_slice(&block);
            }
        }
        let diag = sys.diag_mut(j);
        for r in 0..n {
            for c in 0..n {
                diag[r * n + c] = rng.gen_range(-1.0..1.0);
            }
        }
        for r in 0..n {
            let off: f64 = (0..n)
                .filter(|&c| c != r)
                .map(|c| diag[r * n + c].abs())
                .sum();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            diag[r * n + r] = sign * (row_abs[r] + off + rng.gen_range(0.1..2.0));
        }
    }
    for v in sys.rhs_mut() {
        *v = rng.gen_range(-10.0..10.0);
    }
    sys
}

/// Max nodal error of the manufactured problem on an `N x M` grid.
pub fn manufactured_max_error(big_n: usize, m: usize, eps: &[f64]) -> f64 {
    let spec = manufactured_spec(eps.to_vec());
    let space = build_shishkin_mesh(eps, spec.alpha(), big_n).unwrap();
    let time = build_time_mesh(spec.horizon(), m).unwrap();
    let u = time_march(&spec, &space, &time).unwrap();
    let mut err = 0.0f64;
    for (k, &t) in time.points().iter().enumerate() {
        for (j, &x) in space.points().iter().enumerate() {
            for i in 0..spec.n() {
                err = err.max((u.get(k, j, i) - manufactured_exact(x, t)).abs());
            }
        }
    }
    err
}
