//! End-to-end back-and-forth beamforming run: derives the scheme parameters
//! (t, amplification, slot spacing), simulates every TDMA round with exact
//! noise accounting, and reports the achieved aggregate broadcast rate.
//!
//! Run with: cargo run --release --example beamforming_run

use losnet::beamform::{achieved_broadcast_rate, derive_scheme_params, run_back_and_forth};
use losnet::config::SimulationConfig;
use losnet::netgeom::{build_pair_schedule, generate_network, partition_clusters};

fn main() -> losnet::Result<()> {
    let config = SimulationConfig {
        n: 2048,
        nu: 1.0,
        gamma: 0.5, // boundary power P = n^(3 nu/2 - 2) at nu = 1
        seed: 3,
        ..Default::default()
    };
    let nodes = generate_network(&config)?;
    let layout = partition_clusters(
        &nodes,
        config.cluster_long_side(),
        config.cluster_short_side(),
    )?;
    let schedule = build_pair_schedule(&layout, &config)?;
    println!(
        "schedule: {} pairs over {} TDMA rounds, d = {:.1}",
        schedule.n_pairs, schedule.rounds_total, schedule.d
    );

    let params = derive_scheme_params(&nodes, &layout, &schedule, &config)?;
    println!(
        "params: t = {}, tau = {}, A = {:.4}, snr_floor = {:.3e}, k1 = {:.3}, k2 = {:.3}",
        params.t, params.tau, params.amp_factor, params.snr_floor, params.k1, params.k2
    );
    if params.regime_violation {
        println!("warning: SNR floor below the validity threshold");
    }

    let trace = run_back_and_forth(&nodes, &layout, &schedule, &params, &config)?;
    let min_sinr = trace
        .final_sinr
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::INFINITY, f64::min);
    let mean_sinr: f64 = trace.final_sinr.iter().map(|&(_, s)| s).sum::<f64>()
        / trace.final_sinr.len() as f64;
    println!(
        "served {} receivers: min SINR {:.4}, mean SINR {:.4}",
        trace.final_sinr.len(),
        min_sinr,
        mean_sinr
    );
    println!(
        "max noise power {:.3} (budget 2(t+1) = {})",
        trace.max_noise_power,
        2 * (params.t + 1)
    );
    let rate = achieved_broadcast_rate(&trace, params.tau, schedule.rounds_total);
    println!("achieved aggregate broadcast rate: {rate:.6} bits/slot");
    Ok(())
}
