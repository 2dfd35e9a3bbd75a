//! Evidence-weighted multi-view flow-matching fusion.
//!
//! Each token mixes the per-view velocities of the conditioning bundle with
//! weights proportional to that view's evidence for the token. The weights are
//! fixed for a whole sampling run.

use crate::error::{Error, Result};
use crate::evidence::{evidence_scores, EvidenceMode, EvidenceVector, FrameIndex};
use crate::exec::{self, Execution};
use crate::generator::{probe_attention, FrozenPrior, Latent, ProbeParams, ViewFrame};

/// Per-token convex weights over the bundle, row-major `Q x B`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    bundle_frames: Vec<FrameIndex>,
    q_count: usize,
    weights: Vec<f64>,
}

impl FusionWeights {
    pub fn bundle_frames(&self) -> &[FrameIndex] {
        &self.bundle_frames
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn bundle_len(&self) -> usize {
        self.bundle_frames.len()
    }

    pub fn row(&self, q: usize) -> &[f64] {
        let b = self.bundle_frames.len();
        &self.weights[q * b..(q + 1) * b]
    }

    /// Builds weights from an explicit matrix, checking convexity per row.
    pub fn from_rows(bundle_frames: Vec<FrameIndex>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let b = bundle_frames.len();
        if b == 0 {
            return Err(Error::Config("fusion needs at least one bundle view".into()));
        }
        let q_count = rows.len();
        let mut weights = Vec::with_capacity(q_count * b);
        for (q, row) in rows.into_iter().enumerate() {
            if row.len() != b {
                return Err(Error::Dimension {
                    what: "fusion weight row",
                    expected: b,
                    actual: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("fusion weights of token {q} are not convex")));
            }
            weights.extend(row);
        }
        Ok(Self {
            bundle_frames,
            q_count,
            weights,
        })
    }
}

/// Normalizes bundle evidence per token; tokens with no evidence anywhere
/// get uniform weights.
pub fn compute_fusion_weights(scores: &[EvidenceVector]) -> Result<FusionWeights> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Config("fusion needs at least one bundle view".into()))?;
    let q_count = first.scores.len();
    for s in scores {
        if s.scores.len() != q_count {
            return Err(Error::Dimension {
                what: "bundle evidence",
                expected: q_count,
                actual: s.scores.len(),
            });
        }
    }
    let b = scores.len();
    let uniform = 1.0 / b as f64;
    let mut weights = Vec::with_capacity(q_count * b);
    for q in 0..q_count {
        let total: f64 = scores.iter().map(|s| s.scores[q]).sum();
        if total > 0.0 {
            weights.extend(scores.iter().map(|s| s.scores[q] / total));
        } else {
            weights.extend(std::iter::repeat_n(uniform, b));
        }
    }
    Ok(FusionWeights {
        bundle_frames: scores.iter().map(|s| s.frame_index).collect(),
        q_count,
        weights,
    })
}

fn check_bundle(bundle: &[&ViewFrame], weights: &FusionWeights) -> Result<()> {
    let order_matches = bundle.len() == weights.bundle_len()
        && bundle
            .iter()
            .zip(&weights.bundle_frames)
            .all(|(v, &f)| v.global_index == f);
    if !order_matches {
        return Err(Error::Config(
            "bundle views do not match the order of the fusion weights".into(),
        ));
    }
    for v in bundle {
        if v.q_count() != weights.q_count {
            return Err(Error::Dimension {
                what: "bundle view tokens",
                expected: weights.q_count,
                actual: v.q_count(),
            });
        }
    }
    Ok(())
}

fn fused_token(z: f64, t: f64, q: usize, bundle: &[&ViewFrame], w: &[f64]) -> f64 {
    let scale = 1.0 / (1.0 - t);
    bundle
        .iter()
        .zip(w)
        .map(|(v, &wv)| wv * (v.target_latent[q] - z) * scale)
        .sum()
}

/// Evidence-weighted average of the bundle's per-view velocities.
pub fn fused_velocity(
    z: &[f64],
    t: f64,
    bundle: &[&ViewFrame],
    weights: &FusionWeights,
) -> Result<Vec<f64>> {
    check_bundle(bundle, weights)?;
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Config(format!("flow time must lie in [0, 1), got {t}")));
    }
    if z.len() != weights.q_count {
        return Err(Error::Dimension {
            what: "latent",
            expected: weights.q_count,
            actual: z.len(),
        });
    }
    Ok((0..z.len())
        .map(|q| fused_token(z[q], t, q, bundle, weights.row(q)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Smallest admissible `1 - t` on the time grid.
    pub epsilon: f64,
    pub execution: Execution,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 16,
            epsilon: 1e-6,
            execution: Execution::default(),
        }
    }
}

/// Forward Euler over `t_k = k / N`, `k = 0..N`. The final time `t = 1` is
/// never evaluated.
pub fn euler_sample(
    z_init: Latent,
    bundle: &[&ViewFrame],
    weights: &FusionWeights,
    config: &SamplerConfig,
) -> Result<Latent> {
    if config.steps == 0 {
        return Err(Error::key("steps", "sampler needs at least one step"));
    }
    if config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(Error::key("epsilon", "must be positive"));
    }
    let n = config.steps as f64;
    if 1.0 / n < config.epsilon {
        return Err(Error::key(
            "steps",
            format!("step size 1/{} falls below epsilon {}", config.steps, config.epsilon),
        ));
    }
    check_bundle(bundle, weights)?;
    if z_init.len() != weights.q_count {
        return Err(Error::Dimension {
            what: "initial latent",
            expected: weights.q_count,
            actual: z_init.len(),
        });
    }

    let dt = 1.0 / n;
    let mut z = z_init.into_inner();
    for k in 0..config.steps {
        let t = k as f64 / n;
        let z_ref = &z;
        let next = exec::map_indexed(config.execution, z.len(), |q| {
            z_ref[q] + dt * fused_token(z_ref[q], t, q, bundle, weights.row(q))
        });
        if let Some(q) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "euler step {k} at token {q} (t = {t})"
            )));
        }
        z = next;
    }
    Ok(Latent::new(z))
}

/// One frozen-prior warmup step over `views`, scored per token.
pub fn warmup_probe(
    views: &[&ViewFrame],
    prior: FrozenPrior,
    probe_step: u32,
    mode: EvidenceMode,
    params: &ProbeParams,
) -> Result<Vec<EvidenceVector>> {
    let probe = probe_attention(views, prior, probe_step, params)?;
    evidence_scores(&probe.attention, mode)
}
