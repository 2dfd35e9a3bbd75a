//! Fixed-size cross-chunk memory of the highest evidence scores per token.
//!
//! The memory is a pair of `Q x D` matrices: the `D` best evidence scores seen
//! so far for every query token, and the global frame index each score came
//! from. Frames vote for themselves through the slots they occupy; the
//! conditioning bundle is the `K` frames with the most slots.
//!
//! Ordering rules inside a row:
//! * scores are non-increasing, ties go to the larger (newer) frame index;
//! * a frame appears at most once per row, keeping its best score;
//! * empty slots hold score `0` and frame [`EMPTY_SLOT`], and only at the tail.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{EvidenceVector, FrameIndex};

/// Frame-index sentinel for an unused slot.
pub const EMPTY_SLOT: i32 = -1;

/// Width in bytes of one stored scalar (`f32` scores, `i32` frame indices).
pub const SCALAR_BYTES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub scalars: usize,
    pub bytes: usize,
}

/// Evidence memory `M` and frame-index memory `F`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidentialMemory {
    q_count: usize,
    depth: usize,
    scores: Vec<f32>,
    frames: Vec<i32>,
}

/// Result of merging a batch of candidates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    /// Candidate frames holding at least one slot after the merge.
    pub retained: Vec<FrameIndex>,
    /// Candidate frames that hold no slot anywhere and can be dropped.
    pub discarded: Vec<FrameIndex>,
}

/// Frames chosen to condition the generator, most-owned first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConditioningBundle {
    pub frames: Vec<FrameIndex>,
    /// Slot counts of every frame present in memory.
    pub ownership: BTreeMap<FrameIndex, usize>,
}

impl ConditioningBundle {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Descending by score, then by frame index.
fn slot_order(a: &(f32, i32), b: &(f32, i32)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.cmp(&a.1))
}

impl EvidentialMemory {
    pub fn new(q_count: usize, depth: usize) -> Result<Self> {
        if q_count == 0 || depth == 0 {
            return Err(Error::Config(format!(
                "memory dimensions must be positive, got Q={q_count} D={depth}"
            )));
        }
        Ok(Self {
            q_count,
            depth,
            scores: vec![0.0; q_count * depth],
            frames: vec![EMPTY_SLOT; q_count * depth],
        })
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn frames(&self) -> &[i32] {
        &self.frames
    }

    pub fn score_row(&self, q: usize) -> &[f32] {
        &self.scores[q * self.depth..(q + 1) * self.depth]
    }

    pub fn frame_row(&self, q: usize) -> &[i32] {
        &self.frames[q * self.depth..(q + 1) * self.depth]
    }

    /// Number of non-empty slots.
    pub fn occupied_slots(&self) -> usize {
        self.frames.iter().filter(|&&f| f != EMPTY_SLOT).count()
    }

    /// Distinct frames holding at least one slot.
    pub fn resident_frames(&self) -> BTreeSet<FrameIndex> {
        self.frames
            .iter()
            .filter(|&&f| f != EMPTY_SLOT)
            .map(|&f| f as FrameIndex)
            .collect()
    }

    /// Row-wise top-`D` merge of new candidates into the memory.
    ///
    /// Candidate scores are stored at `f32` precision. Non-positive scores
    /// carry no evidence and never occupy a slot.
    pub fn update(&mut self, candidates: &[EvidenceVector]) -> Result<UpdateOutcome> {
        let mut seen = BTreeSet::new();
        for c in candidates {
            if c.scores.len() != self.q_count {
                return Err(Error::Dimension {
                    what: "evidence vector",
                    expected: self.q_count,
                    actual: c.scores.len(),
                });
            }
            if c.frame_index > i32::MAX as FrameIndex {
                return Err(Error::Config(format!(
                    "frame index {} exceeds the storable range",
                    c.frame_index
                )));
            }
            if !seen.insert(c.frame_index) {
                return Err(Error::Config(format!(
                    "frame {} appears twice in one candidate batch",
                    c.frame_index
                )));
            }
            if c.scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("evidence of frame {}", c.frame_index)));
            }
        }

        let d = self.depth;
        let mut row: Vec<(f32, i32)> = Vec::with_capacity(d + candidates.len());
        for q in 0..self.q_count {
            row.clear();
            let base = q * d;
            for j in 0..d {
                let f = self.frames[base + j];
                if f != EMPTY_SLOT {
                    row.push((self.scores[base + j], f));
                }
            }
            for c in candidates {
                let s = c.scores[q] as f32;
                if s <= 0.0 {
                    continue;
                }
                let f = c.frame_index as i32;
                match row.iter_mut().find(|e| e.1 == f) {
                    Some(e) => {
                        if s > e.0 {
                            e.0 = s;
                        }
                    }
                    None => row.push((s, f)),
                }
            }
            row.sort_unstable_by(slot_order);
            for j in 0..d {
                let (s, f) = row.get(j).copied().unwrap_or((0.0, EMPTY_SLOT));
                self.scores[base + j] = s;
                self.frames[base + j] = f;
            }
        }

        let resident = self.resident_frames();
        let (retained, discarded) = candidates
            .iter()
            .map(|c| c.frame_index)
            .partition(|f| resident.contains(f));
        Ok(UpdateOutcome {
            retained,
            discarded,
        })
    }

    /// Number of `(token, rank)` slots each frame occupies.
    pub fn ownership_counts(&self) -> BTreeMap<FrameIndex, usize> {
        let mut counts = BTreeMap::new();
        for &f in &self.frames {
            if f != EMPTY_SLOT {
                *counts.entry(f as FrameIndex).or_insert(0) += 1;
            }
        }
        counts
    }

    /// The `k` frames owning the most slots; ties go to the newer frame.
    ///
    /// Returns fewer than `k` frames when memory holds fewer distinct frames,
    /// and an empty bundle for an empty memory.
    pub fn select_bundle(&self, k: usize) -> Result<ConditioningBundle> {
        if k == 0 {
            return Err(Error::Config("bundle size must be at least 1".into()));
        }
        let ownership = self.ownership_counts();
        let mut ranked: Vec<(FrameIndex, usize)> =
            ownership.iter().map(|(&f, &n)| (f, n)).collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
        let frames = ranked.into_iter().take(k).map(|(f, _)| f).collect();
        Ok(ConditioningBundle { frames, ownership })
    }

    /// Always `2 * Q * D` scalars.
    pub fn footprint(&self) -> Footprint {
        let scalars = self.scores.len() + self.frames.len();
        Footprint {
            scalars,
            bytes: scalars * SCALAR_BYTES,
        }
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            q_count: self.q_count,
            depth: self.depth,
            scores: self.scores.clone(),
            frames: self.frames.clone(),
        }
    }

    /// Rebuilds a memory from a snapshot, rejecting any that break the row
    /// invariants.
    pub fn from_snapshot(snap: MemorySnapshot) -> Result<Self> {
        let MemorySnapshot {
            q_count,
            depth,
            scores,
            frames,
        } = snap;
        let bad = |msg: String| Err(Error::Snapshot(msg));
        if q_count == 0 || depth == 0 {
            return bad(format!("dimensions Q={q_count} D={depth}"));
        }
        let n = q_count * depth;
        if scores.len() != n || frames.len() != n {
            return bad(format!(
                "expected {n} scores and frames, got {} and {}",
                scores.len(),
                frames.len()
            ));
        }
        for q in 0..q_count {
            let s = &scores[q * depth..(q + 1) * depth];
            let f = &frames[q * depth..(q + 1) * depth];
            let mut seen = BTreeSet::new();
            let mut in_tail = false;
            for j in 0..depth {
                if f[j] == EMPTY_SLOT {
                    if s[j] != 0.0 {
                        return bad(format!("row {q}: empty slot {j} has score {}", s[j]));
                    }
                    in_tail = true;
                    continue;
                }
                if in_tail {
                    return bad(format!("row {q}: occupied slot {j} after an empty one"));
                }
                if f[j] < 0 || !s[j].is_finite() || s[j] <= 0.0 {
                    return bad(format!("row {q}: slot {j} holds ({}, {})", s[j], f[j]));
                }
                if !seen.insert(f[j]) {
                    return bad(format!("row {q}: frame {} repeated", f[j]));
                }
                if j > 0 && slot_order(&(s[j - 1], f[j - 1]), &(s[j], f[j])) != Ordering::Less {
                    return bad(format!("row {q}: slot {j} out of order"));
                }
            }
        }
        Ok(Self {
            q_count,
            depth,
            scores,
            frames,
        })
    }

    /// Little-endian `u32 Q, u32 D, Q*D f32 scores, Q*D i32 frames`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.footprint().bytes);
        out.extend_from_slice(&(self.q_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.depth as u32).to_le_bytes());
        for s in &self.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for f in &self.frames {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 4]> {
            bytes
                .get(i * 4..i * 4 + 4)
                .map(|b| b.try_into().unwrap())
                .ok_or_else(|| Error::Snapshot(format!("truncated at word {i}")))
        };
        let q_count = u32::from_le_bytes(word(0)?) as usize;
        let depth = u32::from_le_bytes(word(1)?) as usize;
        let n = q_count
            .checked_mul(depth)
            .ok_or_else(|| Error::Snapshot("dimensions overflow".into()))?;
        if bytes.len() != 8 + 8 * n {
            return Err(Error::Snapshot(format!(
                "expected {} bytes, got {}",
                8 + 8 * n,
                bytes.len()
            )));
        }
        let scores = (0..n)
            .map(|i| word(2 + i).map(f32::from_le_bytes))
            .collect::<Result<_>>()?;
        let frames = (0..n)
            .map(|i| word(2 + n + i).map(i32::from_le_bytes))
            .collect::<Result<_>>()?;
        Self::from_snapshot(MemorySnapshot {
            q_count,
            depth,
            scores,
            frames,
        })
    }
}

/// Flat textual form of the memory: dimensions plus both matrices row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub q_count: usize,
    pub depth: usize,
    pub scores: Vec<f32>,
    pub frames: Vec<i32>,
}
