//! Chunked streaming loop and the view-selection strategies it is compared
//! against.
//!
//! Per chunk, the evidential strategy runs a frozen-prior warmup probe over
//! the chunk, merges the scores into the [`EvidentialMemory`], picks the `K`
//! most-owned frames, probes that bundle again for fusion weights and samples
//! a fresh latent. Only frames that still own a memory slot are kept.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{EvidenceMode, EvidenceVector, FrameIndex};
use crate::fusion::{compute_fusion_weights, euler_sample, warmup_probe, SamplerConfig};
use crate::generator::{mix_seed, render_view, FrozenPrior, Latent, ProbeParams, Scene, ViewFrame};
use crate::harness::metrics::compute_metrics;
use crate::harness::trajectory::{synthesize_trajectory, Orbit};
use crate::memory::{EvidentialMemory, Footprint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Evidential,
    /// Generate from the chunk's last frame alone.
    SingleLastView,
    /// Condition on the current chunk only.
    LastChunk,
    /// `K` frames drawn uniformly from everything seen so far.
    RandomK,
    /// Every frame seen so far; state grows with the stream.
    FullHistoryOracle,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Evidential,
        Strategy::SingleLastView,
        Strategy::LastChunk,
        Strategy::RandomK,
        Strategy::FullHistoryOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Evidential => "evidential",
            Strategy::SingleLastView => "single_last_view",
            Strategy::LastChunk => "last_chunk",
            Strategy::RandomK => "random_k",
            Strategy::FullHistoryOracle => "full_history_oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub frozen_prior: u64,
    pub latent: u64,
    pub scene: u64,
    pub noise: u64,
}

impl Default for StreamSeeds {
    fn default() -> Self {
        Self {
            frozen_prior: 0,
            latent: 1,
            scene: 2,
            noise: 3,
        }
    }
}

impl StreamSeeds {
    /// Independent seed set for replica `r`; replica 0 is `self`.
    pub fn replica(self, r: u64) -> Self {
        if r == 0 {
            return self;
        }
        Self {
            frozen_prior: mix_seed(&[self.frozen_prior, r, 1]),
            latent: mix_seed(&[self.latent, r, 2]),
            scene: mix_seed(&[self.scene, r, 3]),
            noise: mix_seed(&[self.noise, r, 4]),
        }
    }
}

/// How synthetic frames are captured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureConfig {
    pub patch_grid: usize,
    pub hallucination_level: f64,
    pub orbit: Orbit,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            patch_grid: 4,
            hallucination_level: 0.3,
            orbit: Orbit::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamConfig {
    pub chunk_size: usize,
    pub stride: usize,
    pub depth: usize,
    pub bundle_size: usize,
    pub probe_step: u32,
    pub evidence_mode: EvidenceMode,
    pub strategy: Strategy,
    pub stream_length: usize,
    pub seeds: StreamSeeds,
    /// Query tokens allowed to vote, `start..end`; all tokens when `None`.
    pub token_range: Option<Range<usize>>,
    pub capture: CaptureConfig,
    pub probe: ProbeParams,
    pub sampler: SamplerConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            chunk_size: 8,
            stride: 4,
            depth: 5,
            bundle_size: 8,
            probe_step: 0,
            evidence_mode: EvidenceMode::Evidence,
            strategy: Strategy::Evidential,
            stream_length: 100,
            seeds: StreamSeeds::default(),
            token_range: None,
            capture: CaptureConfig::default(),
            probe: ProbeParams::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, key: &str, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::key(key, msg))
            }
        };
        need(self.stream_length >= 1, "stream_length", "must be at least 1".into())?;
        need(self.chunk_size >= 1, "chunk_size", "must be at least 1".into())?;
        need(
            self.stride >= 1 && self.stride <= self.chunk_size,
            "stride",
            format!("must lie in [1, chunk_size = {}], got {}", self.chunk_size, self.stride),
        )?;
        need(
            self.chunk_size <= self.stream_length,
            "chunk_size",
            format!(
                "must not exceed stream_length = {}, got {}",
                self.stream_length, self.chunk_size
            ),
        )?;
        need(self.depth >= 1, "depth", "must be at least 1".into())?;
        need(self.bundle_size >= 1, "bundle_size", "must be at least 1".into())?;
        need(self.capture.patch_grid >= 2, "patch_grid", "must be at least 2".into())?;
        need(
            (0.0..=1.0).contains(&self.capture.hallucination_level),
            "hallucination_level",
            "must lie in [0, 1]".into(),
        )?;
        need(
            self.probe.logit_noise_sigma.is_finite() && self.probe.logit_noise_sigma >= 0.0,
            "logit_noise_sigma",
            "must be finite and non-negative".into(),
        )?;
        need(
            self.probe.kappa_vis.is_finite() && self.probe.kappa_near.is_finite(),
            "kappa_vis",
            "logit levels must be finite".into(),
        )?;
        need(self.sampler.steps >= 1, "steps", "must be at least 1".into())?;
        need(
            self.sampler.epsilon > 0.0 && 1.0 / self.sampler.steps as f64 >= self.sampler.epsilon,
            "epsilon",
            "must be positive and at most 1 / steps".into(),
        )?;
        if let Some(r) = &self.token_range {
            need(r.start < r.end, "token_range", "must be a non-empty range".into())?;
        }
        self.capture.orbit.validate()
    }
}

/// Window start/end pairs: starts at `0, S, 2S, ...` while inside the
/// stream, each at most `C` long.
pub fn chunk_stream(stream_length: usize, chunk_size: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if stream_length == 0 {
        return Err(Error::key("stream_length", "stream is empty"));
    }
    if chunk_size == 0 {
        return Err(Error::key("chunk_size", "must be at least 1"));
    }
    if stride == 0 || stride > chunk_size {
        return Err(Error::key(
            "stride",
            format!("must lie in [1, chunk_size = {chunk_size}], got {stride}"),
        ));
    }
    Ok((0..stream_length)
        .step_by(stride)
        .map(|s| s..(s + chunk_size).min(stream_length))
        .collect())
}

/// Outcome of one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkResult {
    pub chunk_index: usize,
    /// Conditioning frames in fusion order.
    pub bundle: Vec<FrameIndex>,
    /// Slot counts behind the evidential choice; empty for baselines.
    pub ownership: BTreeMap<FrameIndex, usize>,
    pub latent: Latent,
    pub metrics: BTreeMap<String, f64>,
    /// Scalars carried across chunks by the strategy.
    pub memory_scalar_count: usize,
    /// Raw frames carried across chunks by the strategy.
    pub retained_frames: usize,
    pub wall_time: Duration,
}

/// Cross-chunk state of the evidential strategy: the frozen prior, the
/// memory, and the frames that still own at least one slot.
#[derive(Clone, Debug)]
pub struct EvidentialState {
    prior: FrozenPrior,
    memory: EvidentialMemory,
    frames: BTreeMap<FrameIndex, ViewFrame>,
}

impl EvidentialState {
    pub fn new(prior: FrozenPrior, q_count: usize, depth: usize) -> Result<Self> {
        Ok(Self {
            prior,
            memory: EvidentialMemory::new(q_count, depth)?,
            frames: BTreeMap::new(),
        })
    }

    pub fn memory(&self) -> &EvidentialMemory {
        &self.memory
    }

    pub fn prior(&self) -> FrozenPrior {
        self.prior
    }

    pub fn retained_frames(&self) -> impl Iterator<Item = FrameIndex> + '_ {
        self.frames.keys().copied()
    }

    pub fn footprint(&self) -> Footprint {
        self.memory.footprint()
    }
}

fn mask_tokens(candidates: &mut [EvidenceVector], range: &Option<Range<usize>>) {
    if let Some(r) = range {
        for c in candidates {
            for (q, s) in c.scores.iter_mut().enumerate() {
                if !r.contains(&q) {
                    *s = 0.0;
                }
            }
        }
    }
}

fn generate(
    bundle: &[&ViewFrame],
    prior: FrozenPrior,
    chunk_index: usize,
    config: &StreamConfig,
) -> Result<Latent> {
    let scores = warmup_probe(bundle, prior, config.probe_step, config.evidence_mode, &config.probe)?;
    let weights = compute_fusion_weights(&scores)?;
    let q_count = bundle[0].q_count();
    let z = Latent::gaussian(q_count, mix_seed(&[config.seeds.latent, chunk_index as u64]));
    euler_sample(z, bundle, &weights, &config.sampler)
}

/// One iteration of the evidential loop over `chunk`.
pub fn process_chunk(
    state: &mut EvidentialState,
    chunk: &[ViewFrame],
    chunk_index: usize,
    config: &StreamConfig,
) -> Result<ChunkResult> {
    let start = Instant::now();
    if chunk.is_empty() {
        return Err(Error::Config("chunk has no frames".into()));
    }
    let views: Vec<&ViewFrame> = chunk.iter().collect();
    let mut candidates = warmup_probe(
        &views,
        state.prior,
        config.probe_step,
        config.evidence_mode,
        &config.probe,
    )?;
    mask_tokens(&mut candidates, &config.token_range);

    let outcome = state.memory.update(&candidates)?;
    for f in &outcome.retained {
        if let Some(v) = chunk.iter().find(|v| v.global_index == *f) {
            state.frames.entry(*f).or_insert_with(|| v.clone());
        }
    }
    let resident = state.memory.resident_frames();
    state.frames.retain(|f, _| resident.contains(f));

    let selection = state.memory.select_bundle(config.bundle_size)?;
    let bundle: Vec<&ViewFrame> = if selection.is_empty() {
        let keep = chunk.len().min(config.bundle_size);
        views[chunk.len() - keep..].to_vec()
    } else {
        selection
            .frames
            .iter()
            .map(|f| &state.frames[f])
            .collect()
    };
    let latent = generate(&bundle, state.prior, chunk_index, config)?;

    Ok(ChunkResult {
        chunk_index,
        bundle: bundle.iter().map(|v| v.global_index).collect(),
        ownership: selection.ownership,
        latent,
        metrics: BTreeMap::new(),
        memory_scalar_count: state.memory.footprint().scalars,
        retained_frames: state.frames.len(),
        wall_time: start.elapsed(),
    })
}

/// Renders the whole stream of posed frames for `scene`.
pub fn capture_stream(config: &StreamConfig, scene: &Scene) -> Result<Vec<ViewFrame>> {
    let directions = synthesize_trajectory(
        config.stream_length,
        &config.capture.orbit,
        mix_seed(&[config.seeds.noise, 0x0EB1]),
    )?;
    directions
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            render_view(
                scene,
                d,
                config.capture.patch_grid,
                i as FrameIndex,
                mix_seed(&[config.seeds.noise, i as u64]),
                config.capture.hallucination_level,
            )
        })
        .collect()
}

/// Runs the configured strategy over a pre-rendered stream.
pub fn run_frames(config: &StreamConfig, scene: &Scene, frames: &[ViewFrame]) -> Result<Vec<ChunkResult>> {
    config.validate()?;
    if frames.len() != config.stream_length {
        return Err(Error::Dimension {
            what: "stream frames",
            expected: config.stream_length,
            actual: frames.len(),
        });
    }
    let prior = FrozenPrior {
        seed: config.seeds.frozen_prior,
    };
    let chunks = chunk_stream(frames.len(), config.chunk_size, config.stride)?;
    let mut results = Vec::with_capacity(chunks.len());
    let mut state = EvidentialState::new(prior, scene.q_count(), config.depth)?;

    for (k, range) in chunks.into_iter().enumerate() {
        let chunk = &frames[range.clone()];
        let mut result = match config.strategy {
            Strategy::Evidential => process_chunk(&mut state, chunk, k, config)?,
            baseline => baseline_chunk(baseline, frames, range, k, prior, config)?,
        };
        let m = compute_metrics(&result.latent, scene)?;
        result.metrics.insert("iou".into(), m.iou);
        result.metrics.insert("mse".into(), m.mse);
        results.push(result);
    }
    Ok(results)
}

fn baseline_chunk(
    strategy: Strategy,
    frames: &[ViewFrame],
    range: Range<usize>,
    chunk_index: usize,
    prior: FrozenPrior,
    config: &StreamConfig,
) -> Result<ChunkResult> {
    let start = Instant::now();
    let seen = &frames[..range.end];
    let bundle: Vec<&ViewFrame> = match strategy {
        Strategy::SingleLastView => vec![&frames[range.end - 1]],
        Strategy::LastChunk => frames[range].iter().collect(),
        Strategy::RandomK => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(&[config.seeds.noise, chunk_index as u64, 0xA4D]));
            let k = config.bundle_size.min(seen.len());
            let mut picked = index::sample(&mut rng, seen.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| &seen[i]).collect()
        }
        Strategy::FullHistoryOracle => seen.iter().collect(),
        Strategy::Evidential => {
            return Err(Error::Config("the evidential strategy is not a baseline".into()))
        }
    };
    let latent = generate(&bundle, prior, chunk_index, config)?;
    let retained = match strategy {
        Strategy::RandomK | Strategy::FullHistoryOracle => seen.len(),
        _ => 0,
    };
    Ok(ChunkResult {
        chunk_index,
        bundle: bundle.iter().map(|v| v.global_index).collect(),
        ownership: BTreeMap::new(),
        latent,
        metrics: BTreeMap::new(),
        memory_scalar_count: retained,
        retained_frames: retained,
        wall_time: start.elapsed(),
    })
}

/// Captures the stream for `scene` and runs the configured strategy.
pub fn run_stream(config: &StreamConfig, scene: &Scene) -> Result<Vec<ChunkResult>> {
    config.validate()?;
    let frames = capture_stream(config, scene)?;
    run_frames(config, scene, &frames)
}

/// Like [`run_stream`] but only for the comparison strategies.
pub fn run_baseline(config: &StreamConfig, scene: &Scene) -> Result<Vec<ChunkResult>> {
    if config.strategy == Strategy::Evidential {
        return Err(Error::Config(
            "run_baseline needs a non-evidential strategy".into(),
        ));
    }
    run_stream(config, scene)
}
