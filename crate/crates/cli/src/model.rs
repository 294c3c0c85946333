//! Model descriptors.
//!
//! ```text
//! linear:identity | linear:2tap | linear:ma:1,0.5 | linear:<kernel file>
//! volterra:lag1 | volterra:<kernel file>
//! subordinated:<linear source>:K=abs|tanh
//! ```

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use rfield_core::{FieldModel, LinearKernel, LipschitzMap, NoiseSpec, VolterraKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LinearSource {
    Identity,
    /// `a_0 = a_{e_1} = 1`.
    TwoTap,
    MovingAverage(Vec<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Linear(LinearSource),
    Volterra(Option<PathBuf>),
    Subordinated(LinearSource, LipschitzMap),
}

impl LinearSource {
    fn kernel(&self, dim: usize) -> Result<LinearKernel> {
        Ok(match self {
            LinearSource::Identity => LinearKernel::identity(dim)?,
            LinearSource::TwoTap => LinearKernel::moving_average(dim, &[1.0, 1.0])?,
            LinearSource::MovingAverage(c) => LinearKernel::moving_average(dim, c)?,
            LinearSource::File(p) => {
                let k = LinearKernel::parse(&read(p)?).with_context(|| format!("kernel file {}", p.display()))?;
                check_dim(k.dim(), dim)?;
                k
            }
        })
    }

    fn file(&self) -> Option<&PathBuf> {
        match self {
            LinearSource::File(p) => Some(p),
            _ => None,
        }
    }
}

fn read(p: &PathBuf) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        bail!("kernel dimension {got} does not match the experiment dimension {want}");
    }
    Ok(())
}

impl ModelSpec {
    pub fn build(&self, dim: usize, noise: NoiseSpec, mean: f64) -> Result<FieldModel> {
        let model = match self {
            ModelSpec::Linear(src) => FieldModel::linear(src.kernel(dim)?, noise),
            ModelSpec::Volterra(None) => FieldModel::volterra(VolterraKernel::lag_one(dim)?, noise),
            ModelSpec::Volterra(Some(p)) => {
                let k = VolterraKernel::parse(&read(p)?).with_context(|| format!("kernel file {}", p.display()))?;
                check_dim(k.dim(), dim)?;
                FieldModel::volterra(k, noise)
            }
            ModelSpec::Subordinated(src, map) => FieldModel::subordinated(src.kernel(dim)?, *map, noise),
        };
        Ok(model.with_mean(mean))
    }

    /// Input files the model reads.
    pub fn files(&self) -> Vec<PathBuf> {
        match self {
            ModelSpec::Linear(src) | ModelSpec::Subordinated(src, _) => src.file().into_iter().cloned().collect(),
            ModelSpec::Volterra(p) => p.iter().cloned().collect(),
        }
    }
}

impl FromStr for LinearSource {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "" => bail!("empty linear kernel source"),
            "identity" => LinearSource::Identity,
            "2tap" => LinearSource::TwoTap,
            _ => match s.strip_prefix("ma:") {
                Some(c) => LinearSource::MovingAverage(
                    c.split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad coefficient {x:?}: {e}")))
                        .collect::<Result<_>>()?,
                ),
                None => LinearSource::File(PathBuf::from(s)),
            },
        })
    }
}

impl fmt::Display for LinearSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearSource::Identity => f.write_str("identity"),
            LinearSource::TwoTap => f.write_str("2tap"),
            LinearSource::MovingAverage(c) => {
                let c: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                write!(f, "ma:{}", c.join(","))
            }
            LinearSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| anyhow!("model {s:?} must look like <kind>:<source>"))?;
        Ok(match kind {
            "linear" => ModelSpec::Linear(rest.parse()?),
            "volterra" => match rest {
                "lag1" => ModelSpec::Volterra(None),
                "" => bail!("empty volterra kernel source"),
                path => ModelSpec::Volterra(Some(PathBuf::from(path))),
            },
            "subordinated" => {
                let (src, map) = rest
                    .rsplit_once(":K=")
                    .ok_or_else(|| anyhow!("subordinated model {s:?} needs a :K=<map> suffix"))?;
                ModelSpec::Subordinated(src.parse()?, map.parse()?)
            }
            other => bail!("unknown model kind {other:?}"),
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Linear(src) => write!(f, "linear:{src}"),
            ModelSpec::Volterra(None) => f.write_str("volterra:lag1"),
            ModelSpec::Volterra(Some(p)) => write!(f, "volterra:{}", p.display()),
            ModelSpec::Subordinated(src, map) => write!(f, "subordinated:{src}:K={map}"),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = anyhow::Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }

        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    };
}

string_serde!(LinearSource);
string_serde!(ModelSpec);
