//! Experiment runner behind the CLI: configuration, camera trajectories,
//! metrics and result files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod trajectory;

use crate::error::Result;
use crate::exec;
use crate::stream::{run_stream, ChunkResult, Strategy};

pub use config::{parse_config, ExperimentConfig, OutputFormat};
pub use metrics::{compute_metrics, VoxelMetrics};
pub use output::{write_results, MetricsRow};
pub use trajectory::{synthesize_trajectory, Orbit};

/// One finished stream.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub replica: u64,
    pub chunks: Vec<ChunkResult>,
}

impl RunRecord {
    /// IoU of the last chunk's sample.
    pub fn final_iou(&self) -> f64 {
        self.chunks.last().map_or(0.0, |c| c.metrics["iou"])
    }

    pub fn rows(&self, label_strategy: bool, label_seed: bool, timing: bool) -> Vec<MetricsRow> {
        self.chunks
            .iter()
            .map(|c| MetricsRow {
                strategy: label_strategy.then_some(self.strategy),
                seed: label_seed.then_some(self.replica),
                chunk_index: c.chunk_index,
                iou: c.metrics["iou"],
                mse: c.metrics["mse"],
                bundle_size: c.bundle.len(),
                memory_scalars: c.memory_scalar_count,
                wall_ms: if timing {
                    c.wall_time.as_secs_f64() * 1e3
                } else {
                    0.0
                },
            })
            .collect()
    }
}

/// Runs every `(strategy, replica)` pair. Replica `r` uses the seed set
/// derived from the configured seeds, shared across strategies. Pairs are
/// independent and run concurrently under parallel execution.
pub fn run_grid(config: &ExperimentConfig, strategies: &[Strategy], replicas: u64) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| (0..replicas).map(move |r| (s, r)))
        .collect();
    exec::map_slice(config.stream.probe.execution, &jobs, |&(strategy, replica)| {
        let mut stream = config.stream.clone();
        stream.strategy = strategy;
        stream.seeds = stream.seeds.replica(replica);
        let scene = ExperimentConfig {
            stream: stream.clone(),
            ..config.clone()
        }
        .scene()?;
        Ok(RunRecord {
            strategy,
            replica,
            chunks: run_stream(&stream, &scene)?,
        })
    })
    .into_iter()
    .collect()
}

/// The `run` subcommand: the configured strategy over `replicas` seed sets.
pub fn run_experiment(config: &ExperimentConfig, replicas: u64, timing: bool) -> Result<Vec<MetricsRow>> {
    let records = run_grid(config, &[config.stream.strategy], replicas)?;
    Ok(records
        .iter()
        .flat_map(|r| r.rows(false, replicas > 1, timing))
        .collect())
}

/// The `compare` subcommand: every strategy on shared seeds, labelled.
pub fn compare(config: &ExperimentConfig, replicas: u64, timing: bool) -> Result<Vec<MetricsRow>> {
    let records = run_grid(config, &Strategy::ALL, replicas)?;
    Ok(records
        .iter()
        .flat_map(|r| r.rows(true, true, timing))
        .collect())
}
