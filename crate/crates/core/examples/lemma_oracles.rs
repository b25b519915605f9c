//! Numerical oracles for the supporting lemmas: the distance sandwich and
//! cosine gain bound, the oscillatory interference integral, and the
//! inter-cluster trace moments versus their closed-form bounds.
//!
//! Run with: cargo run --release --example lemma_oracles

use losnet::beamform::{
    compensated_gain, distance_sandwich_check, interference_expectation_bound,
    interference_integral_check,
};
use losnet::channel::pair_distance;
use losnet::config::SimulationConfig;
use losnet::netgeom::{build_pair_schedule, generate_network, partition_clusters};
use losnet::spectral::{
    expected_inverse_square_distance, moment_bound, trace_moment, ClusterPairGeometry,
};

fn main() -> losnet::Result<()> {
    let config = SimulationConfig {
        n: 4096,
        nu: 1.0,
        seed: 2,
        ..Default::default()
    };
    let nodes = generate_network(&config)?;
    let layout = partition_clusters(
        &nodes,
        config.cluster_long_side(),
        config.cluster_short_side(),
    )?;
    let schedule = build_pair_schedule(&layout, &config)?;

    // Distance sandwich and cosine lower bound on one scheduled pair.
    let cos_bound = (std::f64::consts::PI / (config.c1 * config.c1)).cos();
    let pair = schedule.pairs_in_round(0)[0];
    let tx = layout.members(pair.tx);
    let rx = layout.members(pair.rx);
    let j = rx[0];
    let report = distance_sandwich_check(&nodes, tx, j, schedule.d, config.c1)?;
    println!(
        "sandwich: deviations in [{:.3e}, {:.3e}], bound {:.3e}, conforming {}",
        report.min_deviation, report.max_deviation, report.bound, report.conforming
    );
    let gain = compensated_gain(&nodes, tx, j)?;
    let sum_inv: f64 = tx
        .iter()
        .map(|&k| 1.0 / pair_distance(nodes.positions[k], nodes.positions[j]))
        .sum();
    println!(
        "gain {gain:.4} vs cosine lower bound {:.4} (cos(pi/c1^2) = {cos_bound:.3})",
        cos_bound * sum_inv
    );

    // Oscillatory interference integral against the integration-by-parts bound.
    for l in [1usize, 2, 4] {
        let mut worst: f64 = 0.0;
        for trial in 0..200 {
            let chk = interference_integral_check(&config, l, trial)?;
            worst = worst.max(chk.integral_abs / chk.bound);
        }
        let expectation = interference_expectation_bound(
            l,
            config.c1,
            config.c2,
            config.n,
            config.nu,
            config.epsilon,
        )?;
        println!("l = {l}: worst integral/bound ratio {worst:.3}, expectation bound {expectation:.3e}");
    }

    // Trace moments of the inter-cluster channel matrix.
    for ell in [1usize, 2] {
        println!("trace moment ell = {ell}:");
        for m in [16usize, 64, 256] {
            let geometry = ClusterPairGeometry {
                m,
                area: m as f64,
                d: 3.0 * (m as f64).sqrt(),
            };
            let empirical = trace_moment(
                ClusterPairGeometry { ..geometry },
                ell,
                200,
                config.seed,
            )?;
            let bound = moment_bound(geometry, ell).max();
            println!("  m = {m:3}: E Tr = {empirical:9.4}, bound shape {bound:9.4}, ratio {:.3}", empirical / bound);
        }
    }
    let geometry = ClusterPairGeometry {
        m: 16,
        area: 16.0,
        d: 12.0,
    };
    println!(
        "ell = 1 quadrature cross-check: m^2 E(1/r^2) = {:.4}",
        256.0 * expected_inverse_square_distance(geometry)?
    );
    Ok(())
}
