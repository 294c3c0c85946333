//! Serializable experiment configuration.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rfield_core::fclt::{CollectionKind, VcSearch};
use rfield_core::verify::Standardization;
use rfield_core::{make_domain, Domain, DomainShape, IndexSet, LatticePoint, NoiseDistribution};

use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainSource {
    Shape(DomainShape),
    File(PathBuf),
}

impl DomainSource {
    pub fn load(&self) -> Result<Domain> {
        match self {
            DomainSource::Shape(s) => Ok(make_domain(s)?),
            DomainSource::File(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read domain file {}", p.display()))?;
                Domain::parse(&text).with_context(|| format!("domain file {}", p.display()))
            }
        }
    }
}

/// Weight vector for the moment inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    Ones,
    /// iid uniform on `[−1, 1]` from the given seed.
    Uniform(u64),
}

fn default_p() -> f64 {
    2.0
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    Simulate {
        #[serde(default)]
        replicate: u64,
    },
    Dependence {
        #[serde(default = "default_p")]
        p: f64,
        /// Orlicz norm with `β = 2q/(2 − q)` in place of `p`.
        #[serde(default)]
        orlicz_q: Option<f64>,
        /// Monte Carlo replicates per site; analytic when absent and available.
        #[serde(default)]
        replicates: Option<usize>,
    },
    Estimate {
        lags: Vec<LatticePoint>,
        replicates: usize,
        #[serde(default = "default_level")]
        level: f64,
    },
    VerifyClt {
        replicates: usize,
        #[serde(default)]
        mode: Option<Standardization>,
        tolerance: f64,
    },
    VerifyMoment {
        p: f64,
        replicates: usize,
        weights: Weights,
    },
    VerifyVariance {
        sizes: Vec<usize>,
    },
    VerifyTruncation {
        ms: Vec<u64>,
        replicates: usize,
    },
    VerifyAutocov {
        lag: LatticePoint,
        replicates: usize,
        tolerance: f64,
    },
    Fclt {
        n: usize,
        pairs: Vec<(IndexSet, IndexSet)>,
        #[serde(default)]
        gap_sets: Vec<IndexSet>,
        replicates: usize,
    },
    VcIndex {
        kind: CollectionKind,
        d: usize,
        #[serde(default)]
        search: VcSearch,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate { .. } => "simulate",
            Task::Dependence { .. } => "dependence",
            Task::Estimate { .. } => "estimate",
            Task::VerifyClt { .. } => "verify-clt",
            Task::VerifyMoment { .. } => "verify-moment",
            Task::VerifyVariance { .. } => "verify-variance",
            Task::VerifyTruncation { .. } => "verify-truncation",
            Task::VerifyAutocov { .. } => "verify-autocov",
            Task::Fclt { .. } => "fclt",
            Task::VcIndex { .. } => "vc-index",
        }
    }

    fn needs_domain(&self) -> bool {
        !matches!(self, Task::VerifyVariance { .. } | Task::Fclt { .. } | Task::VcIndex { .. })
    }

    fn needs_model(&self) -> bool {
        !matches!(self, Task::VcIndex { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default)]
    pub json: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub noise: NoiseDistribution,
    #[serde(default)]
    pub domain: Option<DomainSource>,
    /// Lattice dimension when no domain fixes it.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub mean: f64,
    pub seed: u64,
    pub task: Task,
    #[serde(default)]
    pub output: Outputs,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).context("malformed experiment config")?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &PathBuf) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.needs_model() && self.model.is_none() {
            bail!("{} needs --model", self.task.name());
        }
        if self.task.needs_domain() && self.domain.is_none() {
            bail!("{} needs --shape or --domain-file", self.task.name());
        }
        if let (Some(DomainSource::Shape(s)), Some(d)) = (&self.domain, self.dim) {
            if s.dim() != d {
                bail!("--dim {d} contradicts the {}-dimensional domain {s}", s.dim());
            }
        }
        if !self.mean.is_finite() {
            bail!("mean must be finite");
        }
        Ok(())
    }

    /// SHA-256 over the configuration (outputs excluded) and every input
    /// file it references.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output = Outputs::default();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&c)?);
        let mut files: Vec<PathBuf> = self.model.iter().flat_map(|m| m.files()).collect();
        if let Some(DomainSource::File(p)) = &self.domain {
            files.push(p.clone());
        }
        for p in files {
            let bytes = fs::read(&p).with_context(|| format!("cannot read {}", p.display()))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        Ok(hex::encode(h.finalize()))
    }
}
