//! Cluster layout and pairing schedule, plus the occupancy concentration
//! check: empirical cluster-count deviations versus the Chernoff bound.
//!
//! Run with: cargo run --release --example cluster_schedule

use losnet::config::SimulationConfig;
use losnet::netgeom::{
    build_pair_schedule, chernoff_deviation_bound, empirical_count_deviation, generate_network,
    partition_clusters,
};

fn main() -> losnet::Result<()> {
    let config = SimulationConfig {
        n: 4096,
        nu: 1.0,
        seed: 1,
        ..Default::default()
    };
    let nodes = generate_network(&config)?;
    let layout = partition_clusters(
        &nodes,
        config.cluster_long_side(),
        config.cluster_short_side(),
    )?;
    println!(
        "layout: {} cols x {} rows, cell {:.1} x {:.2}, nominal occupancy {:.1}",
        layout.cols,
        layout.rows,
        layout.cell_width,
        layout.cell_height,
        config.nominal_occupancy()
    );

    let schedule = build_pair_schedule(&layout, &config)?;
    println!(
        "schedule: {} pairs, vertical gap {:.1}, {} TDMA rounds (row stride {})",
        schedule.n_pairs, schedule.vertical_gap, schedule.rounds_total, schedule.row_stride
    );
    for round in 0..schedule.rounds_total.min(3) {
        println!("  round {round}: {} active pairs", schedule.pairs_in_round(round).len());
    }

    // Concentration of node counts in M-area squares.
    let m_area = 256.0;
    let delta = 0.5;
    let bound = chernoff_deviation_bound(m_area, config.n, config.nu, delta)?;
    let experiment = empirical_count_deviation(&config, m_area, delta, 500)?;
    println!(
        "occupancy deviation (M = {m_area}, delta = {delta}): empirical {} vs bound {:.3e}",
        experiment.frequency, bound
    );
    Ok(())
}
