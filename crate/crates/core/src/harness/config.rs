//! Flat `key=value` experiment configuration.
//!
//! Entries are separated by whitespace or newlines; `#` starts a comment.
//! Later entries override earlier ones, unknown keys are rejected, and every
//! error names the offending key.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::generator::{Scene, ShapeKind};
use crate::stream::StreamConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}`, expected csv or json")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamConfig,
    pub shape_kind: ShapeKind,
    pub grid_size: usize,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            stream: StreamConfig::default(),
            shape_kind: ShapeKind::Composite,
            grid_size: 8,
            output_path: None,
            format: OutputFormat::Csv,
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "shape_kind",
    "grid_size",
    "patch_grid",
    "stream_length",
    "chunk_size",
    "stride",
    "depth",
    "bundle_size",
    "probe_step",
    "evidence_mode",
    "strategy",
    "token_range",
    "elevation",
    "jitter_sigma",
    "hallucination_level",
    "logit_noise_sigma",
    "kappa_vis",
    "kappa_near",
    "steps",
    "epsilon",
    "seed_prior",
    "seed_latent",
    "seed_scene",
    "seed_noise",
    "execution",
    "output_path",
    "format",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::key(key, format!("cannot parse `{value}`: {e}")))
}

impl ExperimentConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `key=value` entries from `text` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for entry in line.split_whitespace() {
                let (key, value) = entry.split_once('=').ok_or_else(|| {
                    Error::Config(format!("entry `{entry}` is not of the form key=value"))
                })?;
                self.set(key, value)?;
            }
        }
        Ok(())
    }

    /// Sets a single key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.stream;
        match key {
            "shape_kind" => self.shape_kind = parse(key, value)?,
            "grid_size" => self.grid_size = parse(key, value)?,
            "patch_grid" => s.capture.patch_grid = parse(key, value)?,
            "stream_length" => s.stream_length = parse(key, value)?,
            "chunk_size" => s.chunk_size = parse(key, value)?,
            "stride" => s.stride = parse(key, value)?,
            "depth" => s.depth = parse(key, value)?,
            "bundle_size" => s.bundle_size = parse(key, value)?,
            "probe_step" => s.probe_step = parse(key, value)?,
            "evidence_mode" => s.evidence_mode = parse(key, value)?,
            "strategy" => s.strategy = parse(key, value)?,
            "token_range" => {
                s.token_range = if value == "all" {
                    None
                } else {
                    let (a, b) = value.split_once(':').ok_or_else(|| {
                        Error::key(key, format!("expected `start:end` or `all`, got `{value}`"))
                    })?;
                    Some(parse(key, a)?..parse(key, b)?)
                }
            }
            "elevation" => s.capture.orbit.elevation_deg = parse(key, value)?,
            "jitter_sigma" => s.capture.orbit.jitter_sigma_deg = parse(key, value)?,
            "hallucination_level" => s.capture.hallucination_level = parse(key, value)?,
            "logit_noise_sigma" => s.probe.logit_noise_sigma = parse(key, value)?,
            "kappa_vis" => s.probe.kappa_vis = parse(key, value)?,
            "kappa_near" => s.probe.kappa_near = parse(key, value)?,
            "steps" => s.sampler.steps = parse(key, value)?,
            "epsilon" => s.sampler.epsilon = parse(key, value)?,
            "seed_prior" => s.seeds.frozen_prior = parse(key, value)?,
            "seed_latent" => s.seeds.latent = parse(key, value)?,
            "seed_scene" => s.seeds.scene = parse(key, value)?,
            "seed_noise" => s.seeds.noise = parse(key, value)?,
            "execution" => {
                let exec = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(Error::key(key, format!("unknown execution `{value}`"))),
                };
                s.probe.execution = exec;
                s.sampler.execution = exec;
            }
            "output_path" => self.output_path = Some(PathBuf::from(value)),
            "format" => self.format = parse(key, value)?,
            _ => return Err(Error::key(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 4 {
            return Err(Error::key("grid_size", "must be at least 4"));
        }
        if let Some(r) = &self.stream.token_range {
            if r.end > self.grid_size.pow(3) {
                return Err(Error::key(
                    "token_range",
                    format!("end {} exceeds the {} query tokens", r.end, self.grid_size.pow(3)),
                ));
            }
        }
        self.stream.validate()
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::synthesize(self.shape_kind, self.grid_size, self.stream.seeds.scene)
    }

    fn value_of(&self, key: &str) -> String {
        let s = &self.stream;
        match key {
            "shape_kind" => self.shape_kind.to_string(),
            "grid_size" => self.grid_size.to_string(),
            "patch_grid" => s.capture.patch_grid.to_string(),
            "stream_length" => s.stream_length.to_string(),
            "chunk_size" => s.chunk_size.to_string(),
            "stride" => s.stride.to_string(),
            "depth" => s.depth.to_string(),
            "bundle_size" => s.bundle_size.to_string(),
            "probe_step" => s.probe_step.to_string(),
            "evidence_mode" => s.evidence_mode.to_string(),
            "strategy" => s.strategy.to_string(),
            "token_range" => match &s.token_range {
                None => "all".into(),
                Some(r) => format!("{}:{}", r.start, r.end),
            },
            "elevation" => s.capture.orbit.elevation_deg.to_string(),
            "jitter_sigma" => s.capture.orbit.jitter_sigma_deg.to_string(),
            "hallucination_level" => s.capture.hallucination_level.to_string(),
            "logit_noise_sigma" => s.probe.logit_noise_sigma.to_string(),
            "kappa_vis" => s.probe.kappa_vis.to_string(),
            "kappa_near" => s.probe.kappa_near.to_string(),
            "steps" => s.sampler.steps.to_string(),
            "epsilon" => s.sampler.epsilon.to_string(),
            "seed_prior" => s.seeds.frozen_prior.to_string(),
            "seed_latent" => s.seeds.latent.to_string(),
            "seed_scene" => s.seeds.scene.to_string(),
            "seed_noise" => s.seeds.noise.to_string(),
            "execution" => match s.probe.execution {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
            "output_path" => self
                .output_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "format" => self.format.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .filter(|k| **k != "output_path" || self.output_path.is_some())
            .map(|k| format!("{k}={}\n", self.value_of(k)))
            .collect()
    }

    /// Configuration echo for JSON output. Execution and output location do
    /// not affect results and are left out.
    pub fn echo(&self) -> Value {
        let mut map = Map::new();
        for &k in KEYS {
            if matches!(k, "execution" | "output_path" | "format") {
                continue;
            }
            let text = self.value_of(k);
            let v = text
                .parse::<u64>()
                .map(Value::from)
                .or_else(|_| text.parse::<f64>().map(|f| json!(f)))
                .unwrap_or(Value::String(text));
            map.insert(k.to_string(), v);
        }
        Value::Object(map)
    }
}

/// Parses configuration text, the entry point used by the CLI.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(text)
}
