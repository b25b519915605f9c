//! Closed-form scaling laws: predicted broadcast rate and unicast
//! throughput, the throughput-rate duality identity, and the TDMA baseline
//! versus its single-source simulation.
//!
//! Run with: cargo run --release --example duality_baseline

use losnet::config::SimulationConfig;
use losnet::scaling::{
    duality_product, predicted_broadcast_rate, predicted_unicast_throughput,
    simulate_tdma_baseline, tdma_baseline_rate,
};

fn main() -> losnet::Result<()> {
    let n = 4096usize;
    let snr = 1e-4;
    println!("n = {n}, snr_s = {snr}:");
    println!("  area exp   T_n          R_n          (T/snr)(R/snr)");
    for area_exp in [1.0, 1.25, 1.5, 1.75, 2.0] {
        let area = (n as f64).powf(area_exp);
        let t = predicted_unicast_throughput(n, area, snr);
        let r = predicted_broadcast_rate(n, area, snr);
        let product = duality_product(n, area, snr)?;
        println!("  {area_exp:8.2}  {t:11.5e}  {r:11.5e}  {product:.3}");
    }

    let config = SimulationConfig {
        n: 1024,
        nu: 1.0,
        gamma: 1.0,
        seed: 4,
        ..Default::default()
    };
    let closed = tdma_baseline_rate(config.n, config.nu, config.power());
    let simulated = simulate_tdma_baseline(&config)?;
    println!(
        "TDMA baseline at n = {}: closed form {closed:.5e}, simulated {simulated:.5e}",
        config.n
    );
    Ok(())
}
