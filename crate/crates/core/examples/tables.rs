//! Prints both convergence tables for the built-in two-component problem.

use shishkin::{builtin_example, run_sweep, Axis, ScaledEpsilons, SweepOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let family = ScaledEpsilons::two_component(builtin_example([1e-4, 2e-4])?);
    let etas: Vec<f64> = (7..=11).map(|k| 2f64.powi(-k)).collect();
    let resolutions = [32, 64, 128, 256];
    for (axis, fixed) in [(Axis::Time, 128), (Axis::Space, 32)] {
        let start = std::time::Instant::now();
        let report = run_sweep(
            &family,
            &etas,
            axis,
            &resolutions,
            fixed,
            &SweepOptions::default(),
        )?;
        report.write_csv(std::io::stdout())?;
        eprintln!("{axis} sweep: {:.2?}", start.elapsed());
    }
    Ok(())
}
