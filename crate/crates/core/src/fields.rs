//! Field models `X_k = g(ε_{k−s}; s ∈ Z^d)` with finite evaluation windows.
//!
//! Three families are available: linear moving averages, second-order
//! Volterra fields with zero diagonal, and Lipschitz transforms of a linear
//! field (centred so that `E X = 0`). Linear and Volterra models have
//! closed-form autocovariances; every model supports the m-dependent
//! truncation `X̄_k = E(X_k | ε_{k−s}, |s|_∞ ≤ m)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_dim, Domain, LatticePoint, MAX_DIM};
use crate::noise::{Innovations, NoiseField, NoiseSpec, AUX_STREAM};
use crate::rng;

/// Nodes per integrated coordinate in truncated subordinated evaluation.
pub const TRUNCATION_QUADRATURE_NODES: usize = 32;
/// Largest number of integrated coordinates handled by quadrature.
pub const TRUNCATION_QUADRATURE_MAX_COORDS: usize = 2;
/// Monte Carlo draws used beyond the quadrature cap.
pub const TRUNCATION_MC_DRAWS: usize = 10_000;

#[inline(always)]
fn shifted(buf: &mut [i64; MAX_DIM], k: &[i64], s: &[i64]) {
    for m in 0..k.len() {
        buf[m] = k[m] - s[m];
    }
}

/// Finitely supported coefficients `s ↦ a_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearKernel {
    dim: usize,
    support: Vec<LatticePoint>,
    coeffs: Vec<f64>,
}

impl LinearKernel {
    /// Merges repeated offsets and drops zero coefficients.
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (LatticePoint, f64)>) -> Result<Self> {
        check_dim(dim)?;
        let mut map: BTreeMap<LatticePoint, f64> = BTreeMap::new();
        for (s, a) in terms {
            s.expect_dim(dim)?;
            if !a.is_finite() {
                return Err(Error::InvalidKernel(format!("non-finite coefficient at {s}")));
            }
            *map.entry(s).or_insert(0.0) += a;
        }
        map.retain(|_, a| *a != 0.0);
        let (support, coeffs) = map.into_iter().unzip();
        Ok(Self { dim, support, coeffs })
    }

    /// `a_0 = 1`: the innovation field itself.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(dim, [(LatticePoint::origin(dim), 1.0)])
    }

    /// Moving average along the first axis: `a_{j e_1} = coeffs[j]`.
    pub fn moving_average(dim: usize, coeffs: &[f64]) -> Result<Self> {
        Self::new(
            dim,
            coeffs.iter().enumerate().map(|(j, &a)| {
                let mut c = vec![0; dim];
                c[0] = j as i64;
                (LatticePoint::new(c).expect("checked dim"), a)
            }),
        )
    }

    /// Builds a kernel from a coefficient law truncated at `|s|_∞ ≤ radius`,
    /// together with an estimate of the dropped mass `Σ_{|s|_∞ > radius} |a_s|`.
    ///
    /// The tail is summed shell by shell until a shell contributes less than
    /// `1e-14` of the running total or one million offsets have been visited.
    pub fn from_decay_law(
        dim: usize,
        radius: usize,
        law: impl Fn(&[i64]) -> f64,
    ) -> Result<(Self, f64)> {
        check_dim(dim)?;
        let mut terms = Vec::new();
        for s in cube(dim, radius as i64) {
            let a = law(&s);
            if a != 0.0 {
                terms.push((LatticePoint::new(s)?, a));
            }
        }
        let kernel = Self::new(dim, terms)?;
        let mut tail = 0.0;
        let mut visited = 0usize;
        let mut r = radius as i64 + 1;
        loop {
            let shell: f64 = cube(dim, r)
                .filter(|s| s.iter().map(|c| c.abs()).max() == Some(r))
                .map(|s| {
                    visited += 1;
                    law(&s).abs()
                })
                .sum();
            tail += shell;
            if shell <= 1e-14 * (tail + kernel.abs_sum()) || visited > 1_000_000 {
                break;
            }
            r += 1;
        }
        Ok((kernel, tail))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&LatticePoint, f64)> {
        self.support.iter().zip(self.coeffs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn coeff(&self, s: &LatticePoint) -> f64 {
        self.support
            .binary_search(s)
            .map(|n| self.coeffs[n])
            .unwrap_or(0.0)
    }

    /// `max |s|_∞` over the support (0 for the empty kernel).
    pub fn radius(&self) -> i64 {
        self.support.iter().map(|s| s.linf_norm()).max().unwrap_or(0)
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|a| a.abs()).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum()
    }

    /// Keeps the terms with `|s|_∞ ≤ m`.
    pub fn truncate(&self, m: u64) -> LinearKernel {
        self.filter(|s| s.linf_norm() as u64 <= m)
    }

    /// Keeps the terms with `|s|_∞ > m`.
    pub fn tail(&self, m: u64) -> LinearKernel {
        self.filter(|s| s.linf_norm() as u64 > m)
    }

    fn filter(&self, keep: impl Fn(&LatticePoint) -> bool) -> LinearKernel {
        let (support, coeffs) = self
            .terms()
            .filter(|(s, _)| keep(s))
            .map(|(s, a)| (s.clone(), a))
            .unzip();
        LinearKernel {
            dim: self.dim,
            support,
            coeffs,
        }
    }

    #[inline]
    pub fn eval<N: Innovations + ?Sized>(&self, noise: &N, k: &[i64]) -> f64 {
        let mut buf = [0i64; MAX_DIM];
        let d = self.dim;
        let mut acc = 0.0;
        for (s, a) in self.support.iter().zip(&self.coeffs) {
            shifted(&mut buf, k, s.coords());
            acc += a * noise.value(&buf[..d]);
        }
        acc
    }

    /// Parses lines `s_1,...,s_d : a`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut terms = Vec::new();
        for line in content_lines(text) {
            let (lhs, rhs) = split_coeff(line)?;
            let s: LatticePoint = lhs.parse()?;
            check_same_dim(&mut dim, s.dim())?;
            terms.push((s, rhs));
        }
        let dim = dim.ok_or_else(|| Error::InvalidKernel("kernel has no terms".into()))?;
        Self::new(dim, terms)
    }

    pub fn to_text(&self) -> String {
        self.terms()
            .map(|(s, a)| format!("{} : {a:?}\n", join_coords(s)))
            .collect()
    }
}

fn cube(dim: usize, r: i64) -> impl Iterator<Item = Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(dim as u32);
    (0..total).map(move |mut n| {
        let mut c = vec![0i64; dim];
        for slot in c.iter_mut().rev() {
            *slot = (n % side) as i64 - r;
            n /= side;
        }
        c
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn split_coeff(line: &str) -> Result<(&str, f64)> {
    let (lhs, rhs) = line
        .rsplit_once(':')
        .ok_or_else(|| Error::Parse(format!("kernel line {line:?} lacks `: coefficient`")))?;
    let a = rhs
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad coefficient in {line:?}: {e}")))?;
    Ok((lhs.trim(), a))
}

fn check_same_dim(dim: &mut Option<usize>, got: usize) -> Result<()> {
    match *dim {
        None => {
            *dim = Some(got);
            Ok(())
        }
        Some(d) if d == got => Ok(()),
        Some(d) => Err(Error::DimensionMismatch { expected: d, got }),
    }
}

fn join_coords(s: &LatticePoint) -> String {
    s.coords()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Second-order Volterra coefficients `(s_1, s_2) ↦ a_{s_1,s_2}` with
/// `a_{s,s} = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraKernel {
    dim: usize,
    pairs: Vec<(LatticePoint, LatticePoint)>,
    coeffs: Vec<f64>,
}

impl VolterraKernel {
    pub fn new(
        dim: usize,
        terms: impl IntoIterator<Item = ((LatticePoint, LatticePoint), f64)>,
    ) -> Result<Self> {
        check_dim(dim)?;
        let mut map: BTreeMap<(LatticePoint, LatticePoint), f64> = BTreeMap::new();
        for ((s1, s2), a) in terms {
            s1.expect_dim(dim)?;
            s2.expect_dim(dim)?;
            if s1 == s2 {
                return Err(Error::InvalidKernel(format!(
                    "diagonal coefficient a_({s1},{s2}) is not allowed"
                )));
            }
            if !a.is_finite() {
                return Err(Error::InvalidKernel(format!("non-finite coefficient at ({s1},{s2})")));
            }
            *map.entry((s1, s2)).or_insert(0.0) += a;
        }
        map.retain(|_, a| *a != 0.0);
        let (pairs, coeffs) = map.into_iter().unzip();
        Ok(Self { dim, pairs, coeffs })
    }

    /// `X_k = ε_k ε_{k − e_1}`.
    pub fn lag_one(dim: usize) -> Result<Self> {
        Self::new(dim, [((LatticePoint::origin(dim), LatticePoint::unit(dim, 0)), 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(LatticePoint, LatticePoint), f64)> {
        self.pairs.iter().zip(self.coeffs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn radius(&self) -> i64 {
        self.pairs
            .iter()
            .map(|(a, b)| a.linf_norm().max(b.linf_norm()))
            .max()
            .unwrap_or(0)
    }

    /// Keeps pairs with both offsets in the window `|s|_∞ ≤ m`.
    pub fn truncate(&self, m: u64) -> VolterraKernel {
        self.filter(m, true)
    }

    /// Keeps pairs with at least one offset outside the window.
    pub fn tail(&self, m: u64) -> VolterraKernel {
        self.filter(m, false)
    }

    fn filter(&self, m: u64, keep_inside: bool) -> VolterraKernel {
        let inside = |s: &LatticePoint| s.linf_norm() as u64 <= m;
        let (pairs, coeffs) = self
            .terms()
            .filter(|((a, b), _)| (inside(a) && inside(b)) == keep_inside)
            .map(|(p, c)| (p.clone(), c))
            .unzip();
        VolterraKernel {
            dim: self.dim,
            pairs,
            coeffs,
        }
    }

    #[inline]
    pub fn eval<N: Innovations + ?Sized>(&self, noise: &N, k: &[i64]) -> f64 {
        let mut buf = [0i64; MAX_DIM];
        let d = self.dim;
        let mut acc = 0.0;
        for ((s1, s2), a) in self.pairs.iter().zip(&self.coeffs) {
            shifted(&mut buf, k, s1.coords());
            let e1 = noise.value(&buf[..d]);
            shifted(&mut buf, k, s2.coords());
            acc += a * e1 * noise.value(&buf[..d]);
        }
        acc
    }

    /// Parses lines `s1 | s2 : a` where each offset is comma separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut terms = Vec::new();
        for line in content_lines(text) {
            let (lhs, a) = split_coeff(line)?;
            let (l, r) = lhs
                .split_once('|')
                .ok_or_else(|| Error::Parse(format!("Volterra line {line:?} lacks `s1 | s2`")))?;
            let s1: LatticePoint = l.parse()?;
            let s2: LatticePoint = r.parse()?;
            check_same_dim(&mut dim, s1.dim())?;
            check_same_dim(&mut dim, s2.dim())?;
            terms.push(((s1, s2), a));
        }
        let dim = dim.ok_or_else(|| Error::InvalidKernel("kernel has no terms".into()))?;
        Self::new(dim, terms)
    }

    pub fn to_text(&self) -> String {
        self.terms()
            .map(|((s1, s2), a)| format!("{} | {} : {a:?}\n", join_coords(s1), join_coords(s2)))
            .collect()
    }
}

/// Lipschitz maps available for subordination; both have constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipschitzMap {
    Abs,
    Tanh,
}

impl LipschitzMap {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            LipschitzMap::Abs => x.abs(),
            LipschitzMap::Tanh => x.tanh(),
        }
    }

    pub fn lipschitz_constant(self) -> f64 {
        1.0
    }

    fn is_odd(self) -> bool {
        matches!(self, LipschitzMap::Tanh)
    }
}

impl FromStr for LipschitzMap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "abs" => Ok(LipschitzMap::Abs),
            "tanh" => Ok(LipschitzMap::Tanh),
            other => Err(Error::Parse(format!("unknown Lipschitz map {other:?}"))),
        }
    }
}

impl fmt::Display for LipschitzMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LipschitzMap::Abs => "abs",
            LipschitzMap::Tanh => "tanh",
        })
    }
}

/// `X_k = K(Σ_s a_s ε_{k−s}) − E K(·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subordinated {
    pub base: LinearKernel,
    pub map: LipschitzMap,
    /// `E K(X_0)` of the underlying linear field.
    pub center: f64,
    /// Standard error of `center` (0 when computed exactly or by quadrature).
    pub center_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Linear(LinearKernel),
    Volterra(VolterraKernel),
    Subordinated(Subordinated),
}

/// A field model together with the innovation law it is driven by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub kind: ModelKind,
    pub noise: NoiseSpec,
    /// Constant added to every site; `E X_k = mean`.
    #[serde(default)]
    pub mean: f64,
}

/// How `X̄` is evaluated for a given truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMethod {
    /// Closed form (coefficient zeroing, or no coordinates integrated out).
    Exact,
    /// Tensor Gauss rule over the listed number of coordinates.
    Quadrature { coords: usize, nodes: usize },
    /// Averaging over independent draws of the out-of-window innovations.
    MonteCarlo { coords: usize, draws: usize },
}

const CENTER_MC_DRAWS: u64 = 1_000_000;
const CENTER_QUADRATURE_MAX_POINTS: usize = 1 << 20;

impl FieldModel {
    pub fn linear(kernel: LinearKernel, noise: NoiseSpec) -> Self {
        Self {
            kind: ModelKind::Linear(kernel),
            noise,
            mean: 0.0,
        }
    }

    pub fn volterra(kernel: VolterraKernel, noise: NoiseSpec) -> Self {
        Self {
            kind: ModelKind::Volterra(kernel),
            noise,
            mean: 0.0,
        }
    }

    /// Builds `K(X) − E K(X)`. The centring constant is exact for normal
    /// innovations and for odd maps of symmetric innovations; otherwise it
    /// is computed by tensor Gauss quadrature when the kernel is small, and
    /// by a fixed-seed Monte Carlo average with recorded standard error.
    pub fn subordinated(base: LinearKernel, map: LipschitzMap, noise: NoiseSpec) -> Self {
        let (center, center_se) = subordination_center(&base, map, noise);
        Self {
            kind: ModelKind::Subordinated(Subordinated {
                base,
                map,
                center,
                center_se,
            }),
            noise,
            mean: 0.0,
        }
    }

    /// The same model shifted by a constant.
    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Linear(_) => "linear",
            ModelKind::Volterra(_) => "volterra",
            ModelKind::Subordinated(_) => "subordinated",
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Linear(k) => k.dim(),
            ModelKind::Volterra(k) => k.dim(),
            ModelKind::Subordinated(s) => s.base.dim(),
        }
    }

    /// Window radius `R(g)`: `X_k` depends only on `ε_{k−s}` with `|s|_∞ ≤ R`.
    pub fn radius(&self) -> i64 {
        match &self.kind {
            ModelKind::Linear(k) => k.radius(),
            ModelKind::Volterra(k) => k.radius(),
            ModelKind::Subordinated(s) => s.base.radius(),
        }
    }

    /// Sites `i` at which `X_i` reads `ε_0`; outside this set `X_i = X_i*`.
    pub fn influence_set(&self) -> Vec<LatticePoint> {
        let mut out: Vec<LatticePoint> = match &self.kind {
            ModelKind::Linear(k) => k.support.clone(),
            ModelKind::Volterra(k) => k.pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect(),
            ModelKind::Subordinated(s) => s.base.support.clone(),
        };
        out.sort();
        out.dedup();
        out
    }

    #[inline]
    pub fn eval<N: Innovations + ?Sized>(&self, noise: &N, k: &[i64]) -> f64 {
        let x = match &self.kind {
            ModelKind::Linear(kern) => kern.eval(noise, k),
            ModelKind::Volterra(kern) => kern.eval(noise, k),
            ModelKind::Subordinated(s) => s.map.apply(s.base.eval(noise, k)) - s.center,
        };
        x + self.mean
    }

    pub fn eval_point<N: Innovations + ?Sized>(&self, noise: &N, k: &LatticePoint) -> Result<f64> {
        k.expect_dim(self.dim())?;
        Ok(self.eval(noise, k.coords()))
    }

    /// Field values over `domain`, in the domain's iteration order.
    pub fn eval_domain<N: Innovations + ?Sized>(&self, noise: &N, domain: &Domain) -> Result<Vec<f64>> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: domain.dim(),
            });
        }
        Ok(domain.iter().map(|k| self.eval(noise, k.coords())).collect())
    }

    /// The exact autocovariance `γ_k = cov(X_0, X_k)`.
    pub fn autocovariance_exact(&self, k: &LatticePoint) -> Result<f64> {
        k.expect_dim(self.dim())?;
        match &self.kind {
            ModelKind::Linear(kern) => Ok(linear_autocov(kern, self.noise, k)),
            ModelKind::Volterra(kern) => Ok(volterra_autocov(kern, self.noise, k)),
            ModelKind::Subordinated(_) => Err(Error::UnsupportedModel {
                model: "subordinated",
                operation: "exact autocovariance",
            }),
        }
    }

    /// All lags with `γ_k ≠ 0`, with their values.
    pub fn autocovariances(&self) -> Result<BTreeMap<LatticePoint, f64>> {
        let candidates: Vec<LatticePoint> = match &self.kind {
            ModelKind::Linear(kern) => {
                let mut c = Vec::new();
                for s in &kern.support {
                    for t in &kern.support {
                        c.push(t.sub(s));
                    }
                }
                c
            }
            ModelKind::Volterra(kern) => {
                let mut c = Vec::new();
                for (p1, p2) in &kern.pairs {
                    for (q1, q2) in &kern.pairs {
                        for q in [q1, q2] {
                            for p in [p1, p2] {
                                c.push(q.sub(p));
                            }
                        }
                    }
                }
                c
            }
            ModelKind::Subordinated(_) => {
                return Err(Error::UnsupportedModel {
                    model: "subordinated",
                    operation: "exact autocovariance",
                })
            }
        };
        let mut out = BTreeMap::new();
        for k in candidates {
            if out.contains_key(&k) {
                continue;
            }
            let g = self.autocovariance_exact(&k)?;
            if g != 0.0 {
                out.insert(k, g);
            }
        }
        Ok(out)
    }

    /// `σ² = Σ_k γ_k`.
    pub fn longrun_variance_exact(&self) -> Result<f64> {
        Ok(self.autocovariances()?.values().sum())
    }

    /// True when `σ²` vanishes relative to `Σ_k |γ_k|`.
    pub fn is_degenerate(&self) -> Result<bool> {
        let gammas = self.autocovariances()?;
        let total: f64 = gammas.values().sum();
        let scale: f64 = gammas.values().map(|g| g.abs()).sum();
        Ok(total.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE))
    }

    /// `Var(Σ_{i∈Γ} w_i X_i) = Σ_{i,j} w_i w_j γ_{j−i}`.
    pub fn weighted_variance_exact(&self, domain: &Domain, weights: &[f64]) -> Result<f64> {
        if weights.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for a domain of {} points",
                weights.len(),
                domain.len()
            )));
        }
        let gammas = self.autocovariances()?;
        let mut acc = 0.0;
        for (k, g) in &gammas {
            for (a, b) in domain.lag_pairs(k)? {
                acc += weights[a] * weights[b] * g;
            }
        }
        Ok(acc)
    }

    pub fn truncation_method(&self, m: u64) -> TruncationMethod {
        match &self.kind {
            ModelKind::Subordinated(s) => {
                let coords = s.base.tail(m).len();
                if coords == 0 {
                    TruncationMethod::Exact
                } else if coords <= TRUNCATION_QUADRATURE_MAX_COORDS {
                    TruncationMethod::Quadrature {
                        coords,
                        nodes: self.noise.gauss_rule(TRUNCATION_QUADRATURE_NODES).len(),
                    }
                } else {
                    TruncationMethod::MonteCarlo {
                        coords,
                        draws: TRUNCATION_MC_DRAWS,
                    }
                }
            }
            _ => TruncationMethod::Exact,
        }
    }
}

fn linear_autocov(kern: &LinearKernel, noise: NoiseSpec, k: &LatticePoint) -> f64 {
    noise.variance()
        * kern
            .terms()
            .map(|(s, a)| a * kern.coeff(&s.add(k)))
            .sum::<f64>()
}

/// `E Π ε_{sites}` for a small multiset of sites.
fn product_moment(noise: NoiseSpec, sites: &[LatticePoint]) -> f64 {
    let mut counts: HashMap<&LatticePoint, u32> = HashMap::new();
    for s in sites {
        *counts.entry(s).or_insert(0) += 1;
    }
    counts.values().map(|&c| noise.moment(c)).product()
}

fn volterra_autocov(kern: &VolterraKernel, noise: NoiseSpec, k: &LatticePoint) -> f64 {
    // γ_k = E X_0 X_k, expanded over pairs of terms. Every term has mean
    // zero because its two sites differ.
    let mut acc = 0.0;
    for ((p1, p2), a) in kern.terms() {
        let x0 = [p1.neg(), p2.neg()];
        for ((q1, q2), b) in kern.terms() {
            let sites = [x0[0].clone(), x0[1].clone(), k.sub(q1), k.sub(q2)];
            let m = product_moment(noise, &sites);
            if m != 0.0 {
                acc += a * b * m;
            }
        }
    }
    acc
}

fn subordination_center(base: &LinearKernel, map: LipschitzMap, noise: NoiseSpec) -> (f64, f64) {
    let v = noise.variance() * base.sum_sq();
    if base.is_empty() {
        return (map.apply(0.0), 0.0);
    }
    if map.is_odd() && noise.is_symmetric() {
        return (0.0, 0.0);
    }
    if noise.distribution == crate::noise::NoiseDistribution::Normal {
        return match map {
            LipschitzMap::Abs => ((2.0 * v / std::f64::consts::PI).sqrt(), 0.0),
            LipschitzMap::Tanh => (0.0, 0.0),
        };
    }
    let rule = noise.gauss_rule(TRUNCATION_QUADRATURE_NODES);
    let coeffs: Vec<f64> = base.coeffs.clone();
    if (rule.len() as f64).powi(coeffs.len() as i32) <= CENTER_QUADRATURE_MAX_POINTS as f64 {
        return (tensor_expectation(&rule, &coeffs, 0.0, map), 0.0);
    }
    // Sites spaced beyond the kernel width read disjoint innovations, so the
    // draws are independent.
    let field = NoiseField::with_stream(noise, 0xCE27E5, 0, AUX_STREAM);
    let width = 2 * base.radius() + 1;
    let mut c = vec![0i64; base.dim()];
    let (mut s1, mut s2) = (0.0, 0.0);
    for r in 0..CENTER_MC_DRAWS {
        c[0] = r as i64 * width;
        let x = map.apply(base.eval(&field, &c));
        s1 += x;
        s2 += x * x;
    }
    let n = CENTER_MC_DRAWS as f64;
    let mu = s1 / n;
    let var = (s2 / n - mu * mu).max(0.0) * n / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// `E K(offset + Σ_t c_t ε_t)` over independent innovations by a tensor rule.
fn tensor_expectation(rule: &crate::quadrature::GaussRule, coeffs: &[f64], offset: f64, map: LipschitzMap) -> f64 {
    let n = rule.len();
    let dims = coeffs.len();
    let total = n.pow(dims as u32);
    let mut acc = 0.0;
    for mut idx in 0..total {
        let mut x = offset;
        let mut w = 1.0;
        for c in coeffs {
            let j = idx % n;
            idx /= n;
            x += c * rule.nodes[j];
            w *= rule.weights[j];
        }
        acc += w * map.apply(x);
    }
    acc
}

/// The m-dependent approximation `X̄` of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedField {
    base: FieldModel,
    m: u64,
    inner: FieldModel,
    /// Out-of-window terms of a subordinated model.
    outer: Option<LinearKernel>,
    rule: Option<crate::quadrature::GaussRule>,
    /// `X − X̄` as a model, for linear and Volterra bases.
    remainder: Option<FieldModel>,
}

impl TruncatedField {
    pub fn new(base: FieldModel, m: u64) -> Self {
        let (inner, outer) = match &base.kind {
            ModelKind::Linear(k) => (FieldModel::linear(k.truncate(m), base.noise).with_mean(base.mean), None),
            ModelKind::Volterra(k) => (FieldModel::volterra(k.truncate(m), base.noise).with_mean(base.mean), None),
            ModelKind::Subordinated(s) => {
                let inner = FieldModel {
                    kind: ModelKind::Subordinated(Subordinated {
                        base: s.base.truncate(m),
                        map: s.map,
                        center: s.center,
                        center_se: s.center_se,
                    }),
                    noise: base.noise,
                    mean: base.mean,
                };
                let outer = s.base.tail(m);
                (inner, if outer.is_empty() { None } else { Some(outer) })
            }
        };
        let rule = outer
            .as_ref()
            .filter(|o| o.len() <= TRUNCATION_QUADRATURE_MAX_COORDS)
            .map(|_| base.noise.gauss_rule(TRUNCATION_QUADRATURE_NODES));
        let remainder = match &base.kind {
            ModelKind::Linear(k) => Some(FieldModel::linear(k.tail(m), base.noise)),
            ModelKind::Volterra(k) => Some(FieldModel::volterra(k.tail(m), base.noise)),
            ModelKind::Subordinated(_) => None,
        };
        Self {
            base,
            m,
            inner,
            outer,
            rule,
            remainder,
        }
    }

    pub fn base(&self) -> &FieldModel {
        &self.base
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn method(&self) -> TruncationMethod {
        self.base.truncation_method(self.m)
    }

    /// `X_k − X̄_k`, evaluated directly from the dropped terms for linear and
    /// Volterra models so that it vanishes exactly where they are absent.
    pub fn eval_remainder<N: Innovations + ?Sized>(&self, noise: &N, aux_key: u64, k: &[i64]) -> f64 {
        match &self.remainder {
            Some(r) => r.eval(noise, k),
            None => self.base.eval(noise, k) - self.eval(noise, aux_key, k),
        }
    }

    /// `X̄_k`. Auxiliary Monte Carlo draws (large subordinated gaps) are keyed
    /// by `aux_key` and the site, so the same conditional-expectation
    /// estimator is applied to a field and to its coupled version.
    pub fn eval<N: Innovations + ?Sized>(&self, noise: &N, aux_key: u64, k: &[i64]) -> f64 {
        let ModelKind::Subordinated(s) = &self.inner.kind else {
            return self.inner.eval(noise, k);
        };
        let shift = self.inner.mean - s.center;
        let inside = s.base.eval(noise, k);
        let Some(outer) = &self.outer else {
            return s.map.apply(inside) + shift;
        };
        if let Some(rule) = &self.rule {
            return tensor_expectation(rule, &outer.coeffs, inside, s.map) + shift;
        }
        let key = rng::fold_coords(rng::fold(aux_key, AUX_STREAM), k);
        let spec = self.base.noise;
        let mut acc = 0.0;
        let mut counter = 0u64;
        for _ in 0..TRUNCATION_MC_DRAWS {
            let mut x = inside;
            for a in &outer.coeffs {
                x += a * spec.draw(rng::fold(key, counter));
                counter += 1;
            }
            acc += s.map.apply(x);
        }
        acc / TRUNCATION_MC_DRAWS as f64 + shift
    }
}
