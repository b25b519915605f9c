//! Spectral norm of the line-of-sight channel matrix versus the analytic
//! piecewise prediction, and the induced capacity upper bound.
//!
//! Run with: cargo run --release --example spectral_bound

use losnet::channel::network_channel_matrix;
use losnet::config::SimulationConfig;
use losnet::netgeom::generate_network;
use losnet::spectral::{capacity_upper_bound, norm_bound_prediction, spectral_norm, DEFAULT_TOL};

fn main() -> losnet::Result<()> {
    for nu in [1.0, 3.0] {
        println!("nu = {nu}:  n    norm_sq    prediction  capacity_bound");
        for n in [256usize, 512, 1024, 2048] {
            let config = SimulationConfig {
                n,
                nu,
                seed: 1,
                ..Default::default()
            };
            let nodes = generate_network(&config)?;
            let h = network_channel_matrix(&nodes)?;
            let estimate = spectral_norm(&h, DEFAULT_TOL)?;
            let norm_sq = estimate.value * estimate.value;
            let prediction = norm_bound_prediction(n, nu, config.epsilon);
            let bound = capacity_upper_bound(config.power(), &estimate);
            println!("        {n:5}  {norm_sq:9.4}  {prediction:10.4}  {bound:12.6e}");
        }
    }
    Ok(())
}
