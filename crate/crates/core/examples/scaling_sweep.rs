//! Exponent-regression sweep: measures the squared channel norm and the
//! capacity bound over a range of n and fits log-log slopes.
//!
//! Run with: cargo run --release --example scaling_sweep

use losnet::config::SimulationConfig;
use losnet::scaling::{sweep, Quantity};

fn main() -> losnet::Result<()> {
    let grid: Vec<SimulationConfig> = [256usize, 512, 1024, 2048]
        .iter()
        .map(|&n| SimulationConfig {
            n,
            nu: 1.0,
            gamma: 0.5,
            seed: 1,
            ..Default::default()
        })
        .collect();
    let quantities = [
        Quantity::NormSq,
        Quantity::GainRatio,
        Quantity::Rate,
        Quantity::CapacityBound,
    ];
    let result = sweep(&grid, &quantities, 3)?;

    println!("{} rows, {} failed cells", result.rows.len(), result.failures.len());
    for (q, fit) in &result.fits {
        println!(
            "{:20} slope {:+.3}  intercept {:+.3}  r^2 {:.4}",
            q.as_str(),
            fit.slope,
            fit.intercept,
            fit.r_squared
        );
    }
    println!(
        "rate <= capacity bound in every cell: {}",
        result.ordering_violations == 0
    );
    Ok(())
}
