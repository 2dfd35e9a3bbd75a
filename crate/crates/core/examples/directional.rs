//! Mean final-chunk IoU per strategy over replicas of the reference setup.
//!
//! `cargo run --release --example directional -- [replicas] [key=value ...]`

use evistream::harness::{run_grid, ExperimentConfig};
use evistream::Strategy;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicas: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let mut config = ExperimentConfig::default();
    config.apply_text(&args.collect::<Vec<_>>().join(" "))?;
    config.validate()?;
    let start = std::time::Instant::now();
    let records = run_grid(&config, &Strategy::ALL, replicas)?;
    for s in Strategy::ALL {
        let ious: Vec<f64> = records
            .iter()
            .filter(|r| r.strategy == s)
            .map(|r| r.final_iou())
            .collect();
        let mean = ious.iter().sum::<f64>() / ious.len() as f64;
        println!("{:<20} mean final IoU {mean:.4}", s.as_str());
    }
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
