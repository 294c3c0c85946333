//! Quadrants `[0, t]` and rectangles `[s, t]` in `[0, 1]^d`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::check_dim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IndexSet {
    Quadrant { t: Vec<f64> },
    Rectangle { s: Vec<f64>, t: Vec<f64> },
}

fn check_unit(v: &[f64]) -> Result<()> {
    check_dim(v.len())?;
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutOfRange(format!("corner coordinate {x} is outside [0, 1]")));
    }
    Ok(())
}

impl IndexSet {
    pub fn quadrant(t: Vec<f64>) -> Result<Self> {
        check_unit(&t)?;
        Ok(IndexSet::Quadrant { t })
    }

    pub fn rectangle(s: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        check_unit(&s)?;
        check_unit(&t)?;
        if s.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: t.len(),
            });
        }
        if s.iter().zip(&t).any(|(a, b)| a > b) {
            return Err(Error::InvalidShape("rectangle needs s ≤ t coordinatewise".into()));
        }
        Ok(IndexSet::Rectangle { s, t })
    }

    /// `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        IndexSet::Quadrant { t: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.upper().len()
    }

    pub fn lower(&self) -> Vec<f64> {
        match self {
            IndexSet::Quadrant { t } => vec![0.0; t.len()],
            IndexSet::Rectangle { s, .. } => s.clone(),
        }
    }

    pub fn upper(&self) -> &[f64] {
        match self {
            IndexSet::Quadrant { t } | IndexSet::Rectangle { t, .. } => t,
        }
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.lower().iter().zip(self.upper()).map(|(a, b)| b - a).product()
    }

    /// `λ(A ∩ B)`.
    pub fn intersection_measure(&self, other: &IndexSet) -> Result<f64> {
        self.same_dim(other)?;
        let (s1, s2) = (self.lower(), other.lower());
        Ok((0..self.dim())
            .map(|m| (self.upper()[m].min(other.upper()[m]) - s1[m].max(s2[m])).max(0.0))
            .product())
    }

    fn same_dim(&self, other: &IndexSet) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.lower();
        x.len() == self.dim() && (0..x.len()).all(|m| s[m] <= x[m] && x[m] <= self.upper()[m])
    }
}

/// `ρ(A, B) = √λ(A Δ B)`.
pub fn rho(a: &IndexSet, b: &IndexSet) -> Result<f64> {
    let inter = a.intersection_measure(b)?;
    Ok((a.measure() + b.measure() - 2.0 * inter).max(0.0).sqrt())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn parse_vec(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad coordinate {x:?}: {e}")))
        })
        .collect()
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexSet::Quadrant { t } => write!(f, "quadrant:t={}", join(t)),
            IndexSet::Rectangle { s, t } => write!(f, "rect:s={};t={}", join(s), join(t)),
        }
    }
}

impl FromStr for IndexSet {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("index set {text:?} lacks a kind prefix")))?;
        let mut s = None;
        let mut t = None;
        for part in rest.split(';') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in {part:?}")))?;
            match key.trim() {
                "s" => s = Some(parse_vec(value)?),
                "t" => t = Some(parse_vec(value)?),
                other => return Err(Error::Parse(format!("unknown index-set key {other:?}"))),
            }
        }
        let t = t.ok_or_else(|| Error::Parse(format!("index set {text:?} lacks t=")))?;
        match kind.trim() {
            "quadrant" if s.is_none() => IndexSet::quadrant(t),
            "rect" | "rectangle" => {
                let s = s.ok_or_else(|| Error::Parse(format!("rectangle {text:?} lacks s=")))?;
                IndexSet::rectangle(s, t)
            }
            other => Err(Error::Parse(format!("unknown index set {other:?}"))),
        }
    }
}

impl TryFrom<String> for IndexSet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IndexSet> for String {
    fn from(a: IndexSet) -> String {
        a.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_and_rho() {
        let a = IndexSet::quadrant(vec![0.2]).unwrap();
        let b = IndexSet::quadrant(vec![0.7]).unwrap();
        assert!((rho(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rho(&a, &a).unwrap(), 0.0);
        let r = IndexSet::rectangle(vec![0.1, 0.2], vec![0.5, 0.6]).unwrap();
        assert!((r.measure() - 0.16).abs() < 1e-15);
        let q = IndexSet::quadrant(vec![0.3, 1.0]).unwrap();
        assert!((r.intersection_measure(&q).unwrap() - 0.2 * 0.4).abs() < 1e-15);
        assert!(rho(&r, &IndexSet::quadrant(vec![0.3]).unwrap()).is_err());
    }

    #[test]
    fn validation() {
        assert!(IndexSet::quadrant(vec![1.2]).is_err());
        assert!(IndexSet::rectangle(vec![0.5], vec![0.4]).is_err());
        assert!(IndexSet::rectangle(vec![0.5], vec![0.6, 0.7]).is_err());
    }

    #[test]
    fn text_round_trip() {
        for text in ["quadrant:t=0.5,0.7", "rect:s=0.1,0.2;t=0.5,0.25"] {
            let a: IndexSet = text.parse().unwrap();
            assert_eq!(a.to_string(), text);
            assert_eq!(String::from(a.clone()), text);
        }
        assert!("quadrant:s=0.1;t=0.5".parse::<IndexSet>().is_err());
        assert!("disc:t=0.5".parse::<IndexSet>().is_err());
        assert!("rect:t=0.5".parse::<IndexSet>().is_err());
    }
}
