//! Block and scalar Gershgorin bounds on the channel matrix norm, and the
//! near/far recursive decomposition inequality.
//!
//! Run with: cargo run --release --example gershgorin_recursion

use losnet::channel::network_channel_matrix;
use losnet::config::SimulationConfig;
use losnet::netgeom::{generate_network, partition_clusters};
use losnet::spectral::{
    block_gershgorin_bound, scalar_gershgorin_bound, spectral_norm, verify_recursion_inequality,
    DEFAULT_TOL,
};

fn main() -> losnet::Result<()> {
    let config = SimulationConfig {
        n: 1024,
        nu: 1.0,
        seed: 7,
        ..Default::default()
    };
    let nodes = generate_network(&config)?;
    let h = network_channel_matrix(&nodes)?;
    let norm = spectral_norm(&h, DEFAULT_TOL)?.value;
    println!("||H||                = {norm:.4}");
    println!("scalar Gershgorin    = {:.4}", scalar_gershgorin_bound(&h));

    // 4x4 grid of recursion clusters.
    let cell = config.side() / 4.0;
    let layout = partition_clusters(&nodes, cell, cell)?;
    let partition: Vec<Vec<usize>> = layout
        .cells
        .iter()
        .filter(|m| !m.is_empty())
        .cloned()
        .collect();
    println!(
        "block Gershgorin     = {:.4}  ({} clusters)",
        block_gershgorin_bound(&h, &partition)?,
        partition.len()
    );

    let report = verify_recursion_inequality(&h, &layout, &config)?;
    println!("recursion inequality: ||H|| <= 9 max_j ||H(R_j)|| + far-field term");
    println!("  max neighborhood norm = {:.4}", report.max_neighborhood_norm);
    println!("  far field (measured)  = {:.4}", report.far_field_measured);
    println!("  far field (analytic)  = {:.4}", report.far_field_analytic);
    println!(
        "  rhs = {:.4}, slack = {:.4}, holds: {}",
        report.recursive_rhs, report.slack, report.holds_recursive
    );
    Ok(())
}
