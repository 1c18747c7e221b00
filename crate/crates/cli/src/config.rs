//! Experiment configuration: a versioned JSON document naming the
//! partition, the constraint and the run parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sandwich_core::constraints::{ConstraintSpec, DEFAULT_ENUMERATION_CAP};
use sandwich_core::graphspace::EdgePartition;
use sandwich_core::oracle::{OracleCaps, MAX_EXPLICIT_EDGES};
use sandwich_core::sampler::{McmcOptions, SamplerOptions, Strategy, DEFAULT_DP_CAP};
use sandwich_core::SolverOptions;

use crate::CliError;

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Where the edge partition comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionSource {
    /// A single part holding every edge.
    Trivial,
    /// `k` contiguous blocks of the canonical edge order.
    Balanced { k: usize },
    /// One part label per edge, in canonical edge order.
    Explicit { labels: Vec<usize> },
    /// A partition file in the `n <n> k <k>` / `e i` text format, relative
    /// to the config file.
    File { path: PathBuf },
    /// Per-edge costs binned geometrically with ratio `bin_ratio`.
    Costs { costs: Vec<f64>, bin_ratio: f64 },
    /// One 0-based group label per vertex; parts are the group pairs.
    Groups { groups: Vec<usize> },
}

/// Enumeration and table limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub enumeration: f64,
    pub dp: f64,
    pub explicit_edges: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            enumeration: DEFAULT_ENUMERATION_CAP,
            dp: DEFAULT_DP_CAP,
            explicit_edges: MAX_EXPLICIT_EDGES,
        }
    }
}

/// Sizes of the verify suite's randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub draws: u64,
    pub families: usize,
    pub permutations: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            draws: 100_000,
            families: 100,
            permutations: 100,
        }
    }
}

fn default_trials() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub n: usize,
    pub partition: PartitionSource,
    #[serde(default = "ConstraintSpec::unconstrained")]
    pub constraint: ConstraintSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub allow_approx: bool,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub mcmc: McmcOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    /// Output directory; not part of the content hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_strategy() -> Strategy {
    Strategy::Enumeration
}

impl ExperimentConfig {
    /// A config for `n` with the given partition and constraint and
    /// defaults everywhere else.
    pub fn new(n: usize, partition: PartitionSource, constraint: ConstraintSpec) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            n,
            partition,
            constraint,
            epsilon: None,
            trials: default_trials(),
            seed: 0,
            strategy: default_strategy(),
            allow_approx: false,
            caps: Caps::default(),
            solver: SolverOptions::default(),
            mcmc: McmcOptions::default(),
            verify: VerifyOptions::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        if config.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema: version {} is not supported (expected {SCHEMA_VERSION})",
                config.schema
            )));
        }
        Ok(config)
    }

    /// Read a config file; relative partition paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let PartitionSource::File { path: p } = &mut config.partition {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Serialization used for the content hash: compact, with the output
    /// directory removed.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn build_partition(&self) -> Result<EdgePartition, CliError> {
        let field = |e: sandwich_core::Error| CliError::Config(format!("partition: {e}"));
        let part = match &self.partition {
            PartitionSource::Trivial => EdgePartition::trivial(self.n).map_err(field)?,
            PartitionSource::Balanced { k } => EdgePartition::balanced(self.n, *k).map_err(field)?,
            PartitionSource::Explicit { labels } => EdgePartition::new(self.n, labels.clone()).map_err(field)?,
            PartitionSource::File { path } => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("partition: cannot read {}: {e}", path.display())))?;
                EdgePartition::from_text(&text).map_err(field)?
            }
            PartitionSource::Costs { costs, bin_ratio } => {
                EdgePartition::from_costs(self.n, costs, *bin_ratio).map_err(field)?
            }
            PartitionSource::Groups { groups } => EdgePartition::from_groups(groups).map_err(field)?.0,
        };
        if part.n() != self.n {
            return Err(CliError::Config(format!(
                "partition: built for n = {} but config says n = {}",
                part.n(),
                self.n
            )));
        }
        Ok(part)
    }

    /// The constraint, with empty spectral block indices filled in from a
    /// group partition, validated against `part`.
    pub fn build_constraint(&self, part: &EdgePartition) -> Result<ConstraintSpec, CliError> {
        let mut spec = self.constraint.clone();
        if let PartitionSource::Groups { groups } = &self.partition {
            let pairs = EdgePartition::from_groups(groups)
                .map_err(|e| CliError::Config(format!("partition: {e}")))?
                .1;
            fill_block_index(&mut spec, &pairs);
        }
        spec.validate(part)
            .map_err(|e| CliError::Config(format!("constraint: {e}")))?;
        Ok(spec)
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        match self.epsilon {
            Some(e) if e > 0.0 && e < 1.0 => Ok(e),
            Some(e) => Err(CliError::Config(format!("epsilon: {e} is outside (0, 1)"))),
            None => Err(CliError::Config("epsilon: required for this subcommand".into())),
        }
    }

    pub fn sampler_options(&self) -> SamplerOptions {
        SamplerOptions {
            enumeration_cap: self.caps.enumeration,
            dp_cap: self.caps.dp,
            mcmc: self.mcmc,
            solver: self.solver,
        }
    }

    pub fn oracle_caps(&self) -> OracleCaps {
        OracleCaps {
            max_explicit_edges: self.caps.explicit_edges,
            profile_cap: self.caps.enumeration,
        }
    }
}

fn fill_block_index(spec: &mut ConstraintSpec, pairs: &[(usize, usize)]) {
    match spec {
        ConstraintSpec::Spectral { block_index, .. } if block_index.is_empty() => {
            *block_index = pairs.to_vec();
        }
        ConstraintSpec::Intersection { members } => {
            for m in members {
                fill_block_index(m, pairs);
            }
        }
        _ => {}
    }
}
