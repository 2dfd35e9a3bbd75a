//! Brute-force references and random instance builders shared by the
//! integration suites. Nothing here calls into the crate's own ranking,
//! entropy or sampling code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use evistream::{EvidenceVector, FrameIndex};
use rand::Rng;

pub const EMPTY: i32 = -1;

/// Row-major `(scores, frames)` of the global top-`depth` per token over
/// every candidate ever presented, keeping each frame's best score.
pub fn memory_oracle(q_count: usize, depth: usize, batches: &[Vec<EvidenceVector>]) -> (Vec<f32>, Vec<i32>) {
    let mut scores = Vec::with_capacity(q_count * depth);
    let mut frames = Vec::with_capacity(q_count * depth);
    for q in 0..q_count {
        let mut best: BTreeMap<i32, f32> = BTreeMap::new();
        for c in batches.iter().flatten() {
            let s = c.scores[q] as f32;
            if s > 0.0 {
                let e = best.entry(c.frame_index as i32).or_insert(s);
                if s > *e {
                    *e = s;
                }
            }
        }
        // Selection by repeated maximum rather than sorting.
        for _ in 0..depth {
            let top = best
                .iter()
                .map(|(&f, &s)| (s, f))
                .reduce(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 > a.1) { b } else { a });
            match top {
                Some((s, f)) => {
                    best.remove(&f);
                    scores.push(s);
                    frames.push(f);
                }
                None => {
                    scores.push(0.0);
                    frames.push(EMPTY);
                }
            }
        }
    }
    (scores, frames)
}

/// Slot count of every frame by direct scan per distinct frame.
pub fn ownership_oracle(frames: &[i32]) -> BTreeMap<FrameIndex, usize> {
    let mut distinct: Vec<i32> = frames.iter().copied().filter(|&f| f != EMPTY).collect();
    distinct.sort_unstable();
    distinct.dedup();
    distinct
        .into_iter()
        .map(|f| (f as FrameIndex, frames.iter().filter(|&&g| g == f).count()))
        .collect()
}

/// Picks `k` frames one at a time: most slots first, newer frame on ties.
pub fn bundle_oracle(frames: &[i32], k: usize) -> Vec<FrameIndex> {
    let mut remaining = ownership_oracle(frames);
    let mut out = Vec::new();
    while out.len() < k {
        let Some((&f, _)) = remaining
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        else {
            break;
        };
        remaining.remove(&f);
        out.push(f);
    }
    out
}

/// Shannon entropy in bits of the renormalized slice, divided by
/// `log2(len)`; an all-zero slice counts as maximally uncertain.
pub fn entropy_oracle(slice: &[f64]) -> f64 {
    let total: f64 = slice.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    let mut h = 0.0;
    for &a in slice {
        if a > 0.0 {
            let p = a / total;
            h -= p * p.log2();
        }
    }
    h / (slice.len() as f64).log2()
}

/// Per-view evidence of one token: `(1 + mass - mean mass) * (1 - H)`,
/// clamped to `[0, 1]`. `row` is split into consecutive view slices.
pub fn evidence_oracle(row: &[f64], patches: &[usize]) -> Vec<f64> {
    let mut start = 0;
    let mut masses = Vec::new();
    let mut peaks = Vec::new();
    for &p in patches {
        let slice = &row[start..start + p];
        start += p;
        masses.push(slice.iter().sum::<f64>());
        peaks.push(1.0 - entropy_oracle(slice));
    }
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    masses
        .iter()
        .zip(&peaks)
        .map(|(m, k)| ((1.0 + m - mean) * k).clamp(0.0, 1.0))
        .collect()
}

/// A score that is often exactly tied with others.
pub fn tie_prone_score<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0..=1 => 0.0,
        2..=4 => [0.25, 0.5, 0.75, 1.0][rng.random_range(0..4)],
        _ => rng.random::<f64>(),
    }
}

/// Random stream of candidate batches with overlapping frame windows, so
/// frames reappear across batches the way overlapping chunks do.
pub fn random_batches<R: Rng>(rng: &mut R, q_count: usize, updates: usize) -> Vec<Vec<EvidenceVector>> {
    let width = rng.random_range(1..=6usize);
    let stride = rng.random_range(1..=width);
    (0..updates)
        .map(|u| {
            (u * stride..u * stride + width)
                .map(|f| EvidenceVector {
                    frame_index: f as FrameIndex,
                    scores: (0..q_count).map(|_| tie_prone_score(rng)).collect(),
                })
                .collect()
        })
        .collect()
}

/// Row-stochastic weights over `width` keys, mixing dense, peaked, sparse
/// and perfectly uniform rows.
pub fn random_attention_row<R: Rng>(rng: &mut R, width: usize) -> Vec<f64> {
    let mut row: Vec<f64> = match rng.random_range(0..4) {
        0 => vec![1.0; width],
        1 => {
            let mut r = vec![0.0; width];
            r[rng.random_range(0..width)] = 1.0;
            r
        }
        2 => (0..width)
            .map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 })
            .collect(),
        _ => (0..width).map(|_| (4.0 * rng.random::<f64>()).exp()).collect(),
    };
    if row.iter().all(|&a| a == 0.0) {
        row[0] = 1.0;
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|a| *a /= total);
    row
}
