//! Camera orbits around the object.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Circular orbit at a fixed elevation with per-frame angular jitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub elevation_deg: f64,
    pub jitter_sigma_deg: f64,
}

impl Default for Orbit {
    fn default() -> Self {
        Self {
            elevation_deg: 20.0,
            jitter_sigma_deg: 5.0,
        }
    }
}

impl Orbit {
    pub fn validate(&self) -> Result<()> {
        if !(self.elevation_deg.is_finite() && self.elevation_deg.abs() <= 90.0) {
            return Err(Error::key("elevation", "must lie in [-90, 90] degrees"));
        }
        if !(self.jitter_sigma_deg.is_finite() && self.jitter_sigma_deg >= 0.0) {
            return Err(Error::key("jitter_sigma", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Unit camera directions sweeping azimuth `0..360` degrees over
/// `frames` frames. Azimuth and elevation each get Gaussian jitter.
pub fn synthesize_trajectory(frames: usize, orbit: &Orbit, seed: u64) -> Result<Vec<[f64; 3]>> {
    if frames == 0 {
        return Err(Error::key("stream_length", "must be at least 1"));
    }
    orbit.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, orbit.jitter_sigma_deg)
        .map_err(|e| Error::key("jitter_sigma", e.to_string()))?;
    Ok((0..frames)
        .map(|i| {
            let (da, de) = if orbit.jitter_sigma_deg > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let az = (360.0 * i as f64 / frames as f64 + da).to_radians();
            let el = (orbit.elevation_deg + de).clamp(-90.0, 90.0).to_radians();
            let d = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            [d[0] / n, d[1] / n, d[2] / n]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_orbit_hits_quarter_turns() {
        let orbit = Orbit {
            elevation_deg: 0.0,
            jitter_sigma_deg: 0.0,
        };
        let dirs = synthesize_trajectory(4, &orbit, 0).unwrap();
        let az: Vec<f64> = dirs
            .iter()
            .map(|d| d[1].atan2(d[0]).to_degrees().rem_euclid(360.0))
            .collect();
        for (got, want) in az.iter().zip([0.0, 90.0, 180.0, 270.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn directions_are_unit_and_seeded() {
        let orbit = Orbit::default();
        let a = synthesize_trajectory(100, &orbit, 7).unwrap();
        for d in &a {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(a, synthesize_trajectory(100, &orbit, 7).unwrap());
        assert_ne!(a, synthesize_trajectory(100, &orbit, 8).unwrap());
        assert!(synthesize_trajectory(0, &orbit, 7).is_err());
    }
}
