//! Deterministic view-conditioned toy generator.
//!
//! Scenes are voxel occupancy grids of `G^3` query tokens. Views are
//! orthographic: each occupied voxel projects onto a `p x p` patch grid and a
//! z-buffer keeps the voxel nearest the camera in every patch. Cross-attention
//! logits are synthesized from that visibility, and every view supplies a
//! rectified-flow velocity towards its own target latent, which matches the
//! ground truth where the view sees the object and hallucinates elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evidence::{AttentionBlock, FrameIndex, ViewSlot};
use crate::exec::{self, Execution};

/// Allowed deviation of a camera direction from unit length.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// SplitMix64 finalizer folded over several words. Used to derive
/// independent, order-free RNG substreams from structured keys.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Box,
    #[default]
    Composite,
}

impl ShapeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Composite => "composite",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(ShapeKind::Sphere),
            "box" => Ok(ShapeKind::Box),
            "composite" => Ok(ShapeKind::Composite),
            _ => Err(format!("unknown shape `{s}`")),
        }
    }
}

/// Voxel occupancy ground truth. Token `q` is voxel `(x, y, z)` with
/// `q = x + G * (y + G * z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    grid_size: usize,
    occupancy: Vec<bool>,
    shape_kind: ShapeKind,
    seed: u64,
}

impl Scene {
    /// Procedural scene. Spheres have radius `0.35 G` about the grid center;
    /// boxes have side `round(0.5 G)` at a seeded offset; composites join an
    /// off-center sphere with a smaller box sticking out of its far side.
    pub fn synthesize(shape_kind: ShapeKind, grid_size: usize, seed: u64) -> Result<Self> {
        if grid_size < 4 {
            return Err(Error::key("grid_size", format!("must be at least 4, got {grid_size}")));
        }
        let g = grid_size as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x5CE4E]));
        let half = g / 2.0;
        let mut occ = vec![false; grid_size.pow(3)];

        let box_side = |frac: f64| ((frac * g).round() as usize).clamp(1, grid_size);
        let mark_sphere = |occ: &mut [bool], center: [f64; 3], radius: f64| {
            for (q, cell) in occ.iter_mut().enumerate() {
                let p = voxel_center(grid_size, q);
                let d2: f64 = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum();
                if d2 <= radius * radius {
                    *cell = true;
                }
            }
        };
        let mark_box = |occ: &mut [bool], start: [usize; 3], side: usize| {
            for z in start[2]..start[2] + side {
                for y in start[1]..start[1] + side {
                    for x in start[0]..start[0] + side {
                        occ[x + grid_size * (y + grid_size * z)] = true;
                    }
                }
            }
        };

        match shape_kind {
            ShapeKind::Sphere => mark_sphere(&mut occ, [half; 3], 0.35 * g),
            ShapeKind::Box => {
                let side = box_side(0.5);
                let start = [(); 3].map(|_| rng.random_range(0..=grid_size - side));
                mark_box(&mut occ, start, side);
            }
            ShapeKind::Composite => {
                let shift = g / 8.0;
                mark_sphere(&mut occ, [half - shift, half, half], 0.35 * g);
                let side = box_side(0.375);
                let start = [
                    grid_size - side,
                    rng.random_range(0..=grid_size - side),
                    rng.random_range(0..=grid_size - side),
                ];
                mark_box(&mut occ, start, side);
            }
        }
        Self::from_occupancy(grid_size, occ, shape_kind, seed)
    }

    /// Wraps an explicit occupancy grid.
    pub fn from_occupancy(
        grid_size: usize,
        occupancy: Vec<bool>,
        shape_kind: ShapeKind,
        seed: u64,
    ) -> Result<Self> {
        if occupancy.len() != grid_size.pow(3) {
            return Err(Error::Dimension {
                what: "occupancy grid",
                expected: grid_size.pow(3),
                actual: occupancy.len(),
            });
        }
        if !occupancy.iter().any(|&o| o) {
            return Err(Error::Config("scene has no occupied voxel".into()));
        }
        Ok(Self {
            grid_size,
            occupancy,
            shape_kind,
            seed,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn q_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn shape_kind(&self) -> ShapeKind {
        self.shape_kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Occupancy as `0.0` / `1.0` values.
    pub fn ground_truth(&self) -> Vec<f64> {
        self.occupancy
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect()
    }
}

/// A sample on the voxel grid; occupancy in `[0, 1]` once sampling finishes.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent(Vec<f64>);

impl Latent {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Standard normal draw, the usual starting point of a flow sampler.
    pub fn gaussian(q_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self(
            (0..q_count)
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Center of voxel `q` in grid units, corners at `0` and `G`.
pub fn voxel_center(grid_size: usize, q: usize) -> [f64; 3] {
    let x = q % grid_size;
    let y = (q / grid_size) % grid_size;
    let z = q / (grid_size * grid_size);
    [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Orthographic camera looking at the grid center.
///
/// `direction` points from the object towards the camera, so a larger
/// projection onto it means nearer to the camera.
#[derive(Clone, Copy, Debug)]
pub struct Projector {
    direction: [f64; 3],
    right: [f64; 3],
    up: [f64; 3],
    grid_size: usize,
    patch_grid: usize,
}

impl Projector {
    pub fn new(direction: [f64; 3], grid_size: usize, patch_grid: usize) -> Result<Self> {
        let norm = dot(direction, direction).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Config(format!(
                "camera direction must be a unit vector, norm is {norm}"
            )));
        }
        if patch_grid == 0 {
            return Err(Error::key("patch_grid", "must be at least 1"));
        }
        let helper = if direction[2].abs() > 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let right = normalize(cross(helper, direction));
        let up = cross(direction, right);
        Ok(Self {
            direction,
            right,
            up,
            grid_size,
            patch_grid,
        })
    }

    fn cell(&self, coord: f64) -> usize {
        let g = self.grid_size as f64;
        let c = ((coord + g / 2.0) / g * self.patch_grid as f64).floor();
        c.clamp(0.0, (self.patch_grid - 1) as f64) as usize
    }

    /// Patch index `row * p + col` hit by voxel `q`.
    pub fn patch(&self, q: usize) -> usize {
        let rel = self.relative(q);
        self.cell(dot(rel, self.up)) * self.patch_grid + self.cell(dot(rel, self.right))
    }

    /// Signed distance towards the camera.
    pub fn nearness(&self, q: usize) -> f64 {
        dot(self.relative(q), self.direction)
    }

    fn relative(&self, q: usize) -> [f64; 3] {
        let p = voxel_center(self.grid_size, q);
        let h = self.grid_size as f64 / 2.0;
        [p[0] - h, p[1] - h, p[2] - h]
    }
}

/// One posed synthetic observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewFrame {
    pub global_index: FrameIndex,
    pub direction: [f64; 3],
    pub grid_size: usize,
    pub patch_grid: usize,
    /// Patch hit by every token's projection.
    pub patch_of: Vec<usize>,
    pub visibility: Vec<bool>,
    pub target_latent: Vec<f64>,
    pub noise_seed: u64,
}

impl ViewFrame {
    pub fn q_count(&self) -> usize {
        self.visibility.len()
    }

    pub fn patches(&self) -> usize {
        self.patch_grid * self.patch_grid
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|&&v| v).count()
    }
}

/// Renders `scene` from `direction` with a z-buffer per patch.
///
/// Unseen tokens get a seeded hallucinated occupancy, uniform on an interval
/// centered at `hallucination_level`.
pub fn render_view(
    scene: &Scene,
    direction: [f64; 3],
    patch_grid: usize,
    global_index: FrameIndex,
    noise_seed: u64,
    hallucination_level: f64,
) -> Result<ViewFrame> {
    if !(0.0..=1.0).contains(&hallucination_level) {
        return Err(Error::key(
            "hallucination_level",
            format!("must lie in [0, 1], got {hallucination_level}"),
        ));
    }
    let proj = Projector::new(direction, scene.grid_size, patch_grid)?;
    let q_count = scene.q_count();
    let patch_of: Vec<usize> = (0..q_count).map(|q| proj.patch(q)).collect();

    let mut nearest: Vec<Option<(f64, usize)>> = vec![None; patch_grid * patch_grid];
    for q in (0..q_count).filter(|&q| scene.occupancy[q]) {
        let depth = proj.nearness(q);
        let slot = &mut nearest[patch_of[q]];
        if slot.is_none_or(|(best, _)| depth > best) {
            *slot = Some((depth, q));
        }
    }
    let mut visibility = vec![false; q_count];
    for (_, q) in nearest.into_iter().flatten() {
        visibility[q] = true;
    }

    let spread = hallucination_level.min(1.0 - hallucination_level);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let target_latent = (0..q_count)
        .map(|q| {
            let guess = hallucination_level + spread * (2.0 * rng.random::<f64>() - 1.0);
            if visibility[q] {
                1.0
            } else {
                guess
            }
        })
        .collect();

    Ok(ViewFrame {
        global_index,
        direction,
        grid_size: scene.grid_size,
        patch_grid,
        patch_of,
        visibility,
        target_latent,
        noise_seed,
    })
}

/// Fixed noise prior shared by every warmup probe of a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenPrior {
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    /// Logit of the patch a visible token projects to.
    pub kappa_vis: f64,
    /// Logit of the four neighbors of that patch.
    pub kappa_near: f64,
    pub logit_noise_sigma: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            kappa_vis: 6.0,
            kappa_near: 2.0,
            logit_noise_sigma: 0.25,
            execution: Execution::default(),
        }
    }
}

/// Cross-attention captured from one warmup step.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorProbe {
    pub attention: AttentionBlock,
    pub probe_step: u32,
}

/// Synthesizes the cross-attention of every token over the views' patches.
///
/// Logit noise for token `q` against frame `f` is drawn from a substream
/// keyed by `(prior, probe_step, q, f)`, so the same frame under the same
/// prior always yields the same logits regardless of its chunk companions.
pub fn probe_attention(
    views: &[&ViewFrame],
    prior: FrozenPrior,
    probe_step: u32,
    params: &ProbeParams,
) -> Result<GeneratorProbe> {
    let first = views
        .first()
        .ok_or_else(|| Error::Config("probe needs at least one view".into()))?;
    let (q_count, p) = (first.q_count(), first.patch_grid);
    for v in views {
        if v.patch_grid != p {
            return Err(Error::Config(format!(
                "view {} has patch grid {} but view {} has {p}",
                v.global_index, v.patch_grid, first.global_index
            )));
        }
        if v.q_count() != q_count {
            return Err(Error::Dimension {
                what: "view token count",
                expected: q_count,
                actual: v.q_count(),
            });
        }
    }
    if !(params.logit_noise_sigma >= 0.0 && params.logit_noise_sigma.is_finite()) {
        return Err(Error::key("logit_noise_sigma", "must be finite and non-negative"));
    }
    let noise = Normal::new(0.0, params.logit_noise_sigma)
        .map_err(|e| Error::key("logit_noise_sigma", e.to_string()))?;

    let patches = p * p;
    let width = patches * views.len();
    let mut weights = vec![0.0; q_count * width];
    exec::for_each_row_mut(params.execution, &mut weights, width, |q, row| {
        for (v, logits) in views.iter().zip(row.chunks_mut(patches)) {
            if v.visibility[q] {
                let hit = v.patch_of[q];
                let (r, c) = (hit / p, hit % p);
                logits[hit] = params.kappa_vis;
                if r > 0 {
                    logits[hit - p] = params.kappa_near;
                }
                if r + 1 < p {
                    logits[hit + p] = params.kappa_near;
                }
                if c > 0 {
                    logits[hit - 1] = params.kappa_near;
                }
                if c + 1 < p {
                    logits[hit + 1] = params.kappa_near;
                }
            }
            if params.logit_noise_sigma > 0.0 {
                let key = [prior.seed, probe_step as u64, q as u64, v.global_index as u64];
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&key));
                for l in logits.iter_mut() {
                    *l += noise.sample(&mut rng);
                }
            }
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in row.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for l in row.iter_mut() {
            *l /= sum;
        }
    });

    let slots = views
        .iter()
        .map(|v| ViewSlot {
            frame_index: v.global_index,
            patches,
        })
        .collect();
    Ok(GeneratorProbe {
        attention: AttentionBlock::new(q_count, slots, weights)?,
        probe_step,
    })
}

/// Rectified-flow velocity pulling `z` towards the view's target.
pub fn view_velocity(z: &[f64], t: f64, view: &ViewFrame) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Config(format!("flow time must lie in [0, 1), got {t}")));
    }
    if z.len() != view.q_count() {
        return Err(Error::Dimension {
            what: "latent",
            expected: view.q_count(),
            actual: z.len(),
        });
    }
    let scale = 1.0 / (1.0 - t);
    Ok(z.iter()
        .zip(&view.target_latent)
        .map(|(&zq, &target)| (target - zq) * scale)
        .collect())
}
