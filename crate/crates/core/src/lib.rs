//! Streaming view-conditioned generation with a constant-size evidential
//! memory.
//!
//! A frozen generator is run over a stream of posed views in overlapping
//! chunks. A one-step warmup probe scores how strongly and selectively every
//! query token attends to each view; a fixed `Q x D` memory keeps the best
//! scores per token; frames vote through the slots they own, and the top `K`
//! frames condition an evidence-weighted flow-matching sampler.
//!
//! The generator here is a deterministic voxel toy so every stage can be
//! checked against brute-force oracles.

pub mod error;
pub mod evidence;
pub mod exec;
pub mod fusion;
pub mod generator;
pub mod harness;
pub mod memory;
pub mod stream;

pub use error::{Error, Result};
pub use evidence::{
    evidence_scores, row_entropy, view_mass, AttentionBlock, EvidenceMode, EvidenceVector,
    FrameIndex, ViewSlot,
};
pub use exec::Execution;
pub use fusion::{
    compute_fusion_weights, euler_sample, fused_velocity, warmup_probe, FusionWeights,
    SamplerConfig,
};
pub use generator::{
    probe_attention, render_view, view_velocity, FrozenPrior, GeneratorProbe, Latent,
    ProbeParams, Scene, ShapeKind, ViewFrame,
};
pub use memory::{ConditioningBundle, EvidentialMemory, Footprint, MemorySnapshot};
pub use stream::{
    chunk_stream, process_chunk, run_baseline, run_stream, ChunkResult, StreamConfig, Strategy,
};
