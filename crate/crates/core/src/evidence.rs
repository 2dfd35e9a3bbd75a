//! Per-token entropy and per-view evidence scores from a cross-attention block.
//!
//! A block holds one chunk's row-stochastic attention from `Q` query tokens to
//! the concatenated patch tokens of every view in the chunk. For each view we
//! measure how much attention a token sends to it (mass) and how peaked that
//! attention is inside the view (one minus normalized entropy), and combine
//! the two into a score in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global position of a frame in the input stream.
pub type FrameIndex = u32;

/// Allowed deviation of an attention row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// One view's share of the key axis of an [`AttentionBlock`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewSlot {
    pub frame_index: FrameIndex,
    pub patches: usize,
}

/// Row-stochastic attention from query tokens to the patches of a chunk's views.
///
/// Column slices belong to views in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    q_count: usize,
    views: Vec<ViewSlot>,
    offsets: Vec<usize>,
    width: usize,
    weights: Vec<f64>,
}

impl AttentionBlock {
    /// Builds a block from row-major weights, checking every invariant.
    pub fn new(q_count: usize, views: Vec<ViewSlot>, weights: Vec<f64>) -> Result<Self> {
        if q_count == 0 {
            return Err(Error::Attention("block needs at least one query token".into()));
        }
        if views.is_empty() {
            return Err(Error::Attention("block needs at least one view".into()));
        }
        let mut offsets = Vec::with_capacity(views.len() + 1);
        let mut width = 0;
        for v in &views {
            if v.patches == 0 {
                return Err(Error::Attention(format!(
                    "view {} has no patch tokens",
                    v.frame_index
                )));
            }
            offsets.push(width);
            width += v.patches;
        }
        offsets.push(width);
        if weights.len() != q_count * width {
            return Err(Error::Dimension {
                what: "attention weights",
                expected: q_count * width,
                actual: weights.len(),
            });
        }
        for (q, row) in weights.chunks(width).enumerate() {
            let mut sum = 0.0;
            for &a in row {
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::Attention(format!("row {q} has entry {a}")));
                }
                sum += a;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Attention(format!("row {q} sums to {sum}")));
            }
        }
        Ok(Self {
            q_count,
            views,
            offsets,
            width,
            weights,
        })
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn views(&self) -> &[ViewSlot] {
        &self.views
    }

    /// Number of views in the chunk.
    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// Total number of key tokens across all views.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.weights[q * self.width..(q + 1) * self.width]
    }

    /// Attention of token `q` restricted to the patches of view `slot`.
    pub fn slice(&self, q: usize, slot: usize) -> &[f64] {
        let row = self.row(q);
        &row[self.offsets[slot]..self.offsets[slot + 1]]
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.views.len() {
            return Err(Error::Attention(format!(
                "view slot {slot} out of range for {} views",
                self.views.len()
            )));
        }
        Ok(())
    }
}

/// Which evidence formula to apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMode {
    /// Mass relative to the chunk mean, times peakedness.
    #[default]
    Evidence,
    /// Raw mass times peakedness, no mean-centering.
    EvidenceUnnormalized,
    /// Peakedness alone.
    EntropyOnly,
}

impl EvidenceMode {
    pub const ALL: [EvidenceMode; 3] = [
        EvidenceMode::Evidence,
        EvidenceMode::EvidenceUnnormalized,
        EvidenceMode::EntropyOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceMode::Evidence => "evidence",
            EvidenceMode::EvidenceUnnormalized => "evidence_unnormalized",
            EvidenceMode::EntropyOnly => "entropy_only",
        }
    }
}

impl fmt::Display for EvidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvidenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown evidence mode `{s}`"))
    }
}

/// Per-token evidence of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceVector {
    pub frame_index: FrameIndex,
    pub scores: Vec<f64>,
}

/// Normalized Shannon entropy of a non-negative slice, in `[0, 1]`.
///
/// The slice is renormalized first. `0 log 0` counts as zero and an all-zero
/// slice is maximally uncertain.
pub fn normalized_entropy(slice: &[f64]) -> f64 {
    debug_assert!(slice.len() >= 2);
    let total: f64 = slice.iter().sum();
    // Exactly flat attention is maximally uncertain; the log sum would
    // leave a rounding residue.
    if total <= 0.0 || slice.iter().all(|&a| a == slice[0]) {
        return 1.0;
    }
    let h: f64 = slice
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| {
            let p = a / total;
            -p * p.ln()
        })
        .sum();
    (h / (slice.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Normalized entropy of every token's attention inside view `slot`.
pub fn row_entropy(block: &AttentionBlock, slot: usize) -> Result<Vec<f64>> {
    block.check_slot(slot)?;
    let patches = block.views[slot].patches;
    if patches < 2 {
        return Err(Error::Config(format!(
            "entropy needs at least 2 patches per view, view {} has {patches}",
            block.views[slot].frame_index
        )));
    }
    Ok((0..block.q_count)
        .map(|q| normalized_entropy(block.slice(q, slot)))
        .collect())
}

/// Total attention every token sends to view `slot`.
pub fn view_mass(block: &AttentionBlock, slot: usize) -> Result<Vec<f64>> {
    block.check_slot(slot)?;
    Ok((0..block.q_count)
        .map(|q| block.slice(q, slot).iter().sum::<f64>().clamp(0.0, 1.0))
        .collect())
}

/// Combines one token's per-view masses and entropies into clamped scores.
pub fn combine_token_scores(masses: &[f64], entropies: &[f64], mode: EvidenceMode) -> Vec<f64> {
    assert_eq!(masses.len(), entropies.len());
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    masses
        .iter()
        .zip(entropies)
        .map(|(&m, &h)| {
            let peaked = 1.0 - h;
            let raw = match mode {
                EvidenceMode::Evidence => (1.0 + (m - mean)) * peaked,
                EvidenceMode::EvidenceUnnormalized => m * peaked,
                EvidenceMode::EntropyOnly => peaked,
            };
            raw.clamp(0.0, 1.0)
        })
        .collect()
}

/// Evidence of every view in the block for every token, one vector per view.
pub fn evidence_scores(block: &AttentionBlock, mode: EvidenceMode) -> Result<Vec<EvidenceVector>> {
    let n = block.view_count();
    let masses = (0..n)
        .map(|s| view_mass(block, s))
        .collect::<Result<Vec<_>>>()?;
    let entropies = (0..n)
        .map(|s| row_entropy(block, s))
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<EvidenceVector> = block
        .views
        .iter()
        .map(|v| EvidenceVector {
            frame_index: v.frame_index,
            scores: Vec::with_capacity(block.q_count),
        })
        .collect();
    let mut m = vec![0.0; n];
    let mut h = vec![0.0; n];
    for q in 0..block.q_count {
        for s in 0..n {
            m[s] = masses[s][q];
            h[s] = entropies[s][q];
        }
        for (s, score) in combine_token_scores(&m, &h, mode).into_iter().enumerate() {
            out[s].scores.push(score);
        }
    }
    Ok(out)
}
