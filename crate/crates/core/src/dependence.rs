//! Physical dependence measures `δ_{i,p} = ‖X_i − X_i*‖_p`, where `X*` is the
//! field driven by innovations with `ε_0` replaced by an independent copy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldModel, LinearKernel, ModelKind, TruncatedField, VolterraKernel};
use crate::lattice::LatticePoint;
use crate::noise::{couple, NoiseDistribution, NoiseField, NoiseSpec};
use crate::rng;
use crate::stats;

/// Default Monte Carlo replicate count for dependence estimates.
pub const DEFAULT_REPLICATES: usize = 10_000;
/// Minimum replicate count for Orlicz-norm estimates.
pub const MIN_ORLICZ_REPLICATES: usize = 10_000;
const MIN_REPLICATES: usize = 100;

/// `ψ_β(x) = exp((x + h_β)^β) − exp(h_β^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrliczSpec {
    pub beta: f64,
}

impl OrliczSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("Orlicz exponent must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    /// The exponent `β(q) = 2q/(2 − q)` attached to `q ∈ (0, 2)`.
    pub fn for_q(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 2.0) {
            return Err(Error::InvalidArgument(format!("q must lie in (0, 2), got {q}")));
        }
        Self::new(2.0 * q / (2.0 - q))
    }

    /// Shift making `ψ_β` convex near zero when `β < 1`.
    pub fn h(&self) -> f64 {
        if self.beta < 1.0 {
            ((1.0 - self.beta) / self.beta).powf(1.0 / self.beta)
        } else {
            0.0
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        let h = self.h();
        ((x + h).powf(self.beta)).exp() - (h.powf(self.beta)).exp()
    }
}

/// Luxemburg norm `inf{c > 0 : mean ψ(|z|/c) ≤ 1}` of an empirical sample.
///
/// Bisection stops at relative width `1e-6`; the returned value is the
/// feasible end of the final bracket.
pub fn orlicz_norm(samples: &[f64], spec: OrliczSpec) -> Result<f64> {
    let abs: Vec<f64> = samples.iter().map(|z| z.abs()).collect();
    let top = abs.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let excess = |c: f64| abs.iter().map(|&z| spec.psi(z / c)).sum::<f64>() / abs.len() as f64 - 1.0;
    let mut hi = top;
    let mut doublings = 0;
    while !(excess(hi) <= 0.0) {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NonConvergence(
                "Orlicz norm bracket exceeded 2^60 times the sample maximum".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    while excess(lo) <= 0.0 {
        hi = lo;
        lo /= 2.0;
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub estimate: f64,
    pub se: f64,
    pub method: Method,
}

impl DeltaEstimate {
    fn zero(method: Method) -> Self {
        Self {
            estimate: 0.0,
            se: 0.0,
            method,
        }
    }
}

/// Norm in which a dependence measure is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormOrder {
    P(f64),
    Orlicz(OrliczSpec),
}

/// `δ_{i,p} = |a_i| ‖ε_0 − ε_0'‖_p` for a linear field.
pub fn delta_analytic_linear(kernel: &LinearKernel, noise: NoiseSpec, i: &LatticePoint, p: f64) -> Result<f64> {
    i.expect_dim(kernel.dim())?;
    let a = kernel.coeff(i);
    let d = noise.diff_norm(p)?;
    Ok(a.abs() * d)
}

fn check_mc(replicates: usize, p: f64) -> Result<()> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("Monte Carlo p must lie in [2, ∞), got {p}")));
    }
    Ok(())
}

/// Coupled differences `D(ε) − D(ε*)` for `replicates` independent couplings;
/// replicate `r` uses noise `(seed, r)`.
fn coupled_differences(
    model: &FieldModel,
    replicates: usize,
    seed: u64,
    f: impl Fn(&dyn Fn(&[i64]) -> f64, &dyn Fn(&[i64]) -> f64, u64) -> f64 + Sync + Send,
) -> Vec<f64> {
    let spec = model.noise;
    stats::replicates(replicates, |r| {
        let base = NoiseField::new(spec, seed, r as u64);
        let coupled = couple(&base, seed);
        let x = |k: &[i64]| model.eval(&base, k);
        let y = |k: &[i64]| model.eval(&coupled, k);
        f(&x, &y, base.key())
    })
}

fn pnorm_estimate(diffs: &[f64], p: f64) -> DeltaEstimate {
    let pow: Vec<f64> = diffs.iter().map(|d| d.abs().powf(p)).collect();
    let (estimate, se) = stats::pnorm_with_se(&pow, p);
    DeltaEstimate {
        estimate,
        se,
        method: Method::MonteCarlo,
    }
}

fn influences(model: &FieldModel, i: &LatticePoint) -> bool {
    i.linf_norm() <= model.radius() && model.influence_set().binary_search(i).is_ok()
}

/// Monte Carlo `δ_{i,p}` with jackknife standard error.
pub fn delta_monte_carlo(model: &FieldModel, i: &LatticePoint, p: f64, replicates: usize, seed: u64) -> Result<DeltaEstimate> {
    i.expect_dim(model.dim())?;
    check_mc(replicates, p)?;
    if !influences(model, i) {
        return Ok(DeltaEstimate::zero(Method::MonteCarlo));
    }
    let c = i.coords();
    let diffs = coupled_differences(model, replicates, seed, |x, y, _| x(c) - y(c));
    Ok(pnorm_estimate(&diffs, p))
}

/// Monte Carlo `δ_{i,ψ_β}` through the empirical Luxemburg norm.
pub fn delta_orlicz_monte_carlo(
    model: &FieldModel,
    i: &LatticePoint,
    spec: OrliczSpec,
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    i.expect_dim(model.dim())?;
    if replicates < MIN_ORLICZ_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "Orlicz norms need at least {MIN_ORLICZ_REPLICATES} replicates, got {replicates}"
        )));
    }
    if !influences(model, i) {
        return Ok(0.0);
    }
    let c = i.coords();
    let diffs = coupled_differences(model, replicates, seed, |x, y, _| x(c) - y(c));
    orlicz_norm(&diffs, spec)
}

/// `δ^{(m)}_{i,p} = ‖(X_i − X̄_i) − (X_i − X̄_i)*‖_p`.
pub fn delta_truncated(
    model: &FieldModel,
    m: u64,
    i: &LatticePoint,
    p: f64,
    replicates: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    i.expect_dim(model.dim())?;
    check_mc(replicates, p)?;
    let exact_at_window = !matches!(model.kind, ModelKind::Subordinated(_));
    if !influences(model, i) || (exact_at_window && m as i64 >= model.radius()) {
        return Ok(DeltaEstimate::zero(Method::MonteCarlo));
    }
    let trunc = TruncatedField::new(model.clone(), m);
    let spec = model.noise;
    let c = i.coords();
    let diffs = stats::replicates(replicates, |r| {
        let base = NoiseField::new(spec, seed, r as u64);
        let coupled = couple(&base, seed);
        let aux = base.key();
        trunc.eval_remainder(&base, aux, c) - trunc.eval_remainder(&coupled, aux, c)
    });
    Ok(pnorm_estimate(&diffs, p))
}

/// `|a_i| 1{|i|_∞ > m} ‖ε − ε'‖_p`: the truncated measure of a linear field.
pub fn delta_truncated_analytic_linear(
    kernel: &LinearKernel,
    noise: NoiseSpec,
    m: u64,
    i: &LatticePoint,
    p: f64,
) -> Result<f64> {
    if i.linf_norm() as u64 <= m {
        i.expect_dim(kernel.dim())?;
        return Ok(0.0);
    }
    delta_analytic_linear(kernel, noise, i, p)
}

/// `Δ` and its propagated standard error `√Σ se²`.
pub fn stability_sum<'a>(entries: impl IntoIterator<Item = &'a DeltaEstimate>) -> (f64, f64) {
    let (mut total, mut var) = (0.0, 0.0);
    for e in entries {
        total += e.estimate;
        var += e.se * e.se;
    }
    (total, var.sqrt())
}

/// How a profile's entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileMethod {
    Analytic,
    MonteCarlo { replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceProfile {
    pub model: String,
    pub order: NormOrder,
    /// Entries over the influence set; all other sites have `δ = 0`.
    pub entries: BTreeMap<LatticePoint, DeltaEstimate>,
    pub delta_sum: f64,
    pub delta_sum_se: f64,
}

impl DependenceProfile {
    /// `δ_i`, zero off the stored support.
    pub fn delta(&self, i: &LatticePoint) -> f64 {
        self.entries.get(i).map_or(0.0, |e| e.estimate)
    }
}

/// `δ_{i,p}` over the influence set of `model`, together with `Δ_p`.
///
/// Monte Carlo sites use seeds derived from the base seed and the site, so
/// entries are independent and the sum's standard error is `√Σ se²`.
pub fn dependence_profile(model: &FieldModel, order: NormOrder, method: ProfileMethod) -> Result<DependenceProfile> {
    let sites = model.influence_set();
    let mut entries = BTreeMap::new();
    for i in sites {
        let e = match (method, order) {
            (ProfileMethod::Analytic, NormOrder::P(p)) => match &model.kind {
                ModelKind::Linear(k) => DeltaEstimate {
                    estimate: delta_analytic_linear(k, model.noise, &i, p)?,
                    se: 0.0,
                    method: Method::Analytic,
                },
                _ => {
                    return Err(Error::UnsupportedModel {
                        model: model.kind_name(),
                        operation: "analytic dependence measures",
                    })
                }
            },
            (ProfileMethod::Analytic, NormOrder::Orlicz(_)) => {
                return Err(Error::UnsupportedModel {
                    model: model.kind_name(),
                    operation: "analytic Orlicz dependence measures",
                })
            }
            (ProfileMethod::MonteCarlo { replicates, seed }, NormOrder::P(p)) => {
                delta_monte_carlo(model, &i, p, replicates, site_seed(seed, &i))?
            }
            (ProfileMethod::MonteCarlo { replicates, seed }, NormOrder::Orlicz(spec)) => DeltaEstimate {
                estimate: delta_orlicz_monte_carlo(model, &i, spec, replicates, site_seed(seed, &i))?,
                se: f64::NAN,
                method: Method::MonteCarlo,
            },
        };
        entries.insert(i, e);
    }
    let (delta_sum, delta_sum_se) = stability_sum(entries.values());
    Ok(DependenceProfile {
        model: model.kind_name().to_string(),
        order,
        entries,
        delta_sum,
        delta_sum_se,
    })
}

/// Seed used for the Monte Carlo estimate at site `i`.
pub fn site_seed(seed: u64, i: &LatticePoint) -> u64 {
    rng::fold_coords(rng::derive_seed(seed, 0xDE17A), i.coords())
}

/// `Δ_p` analytically for linear fields, by Monte Carlo otherwise.
pub fn stability(model: &FieldModel, p: f64, replicates: usize, seed: u64) -> Result<(f64, f64)> {
    let method = match model.kind {
        ModelKind::Linear(_) => ProfileMethod::Analytic,
        _ => ProfileMethod::MonteCarlo { replicates, seed },
    };
    let prof = dependence_profile(model, NormOrder::P(p), method)?;
    Ok((prof.delta_sum, prof.delta_sum_se))
}

/// `(A_k, B_k)`: sums of `a²` and `|a|^p` over the stored pairs having `k`
/// as either offset.
pub fn volterra_rosenthal_terms(kernel: &VolterraKernel, k: &LatticePoint, p: f64) -> Result<(f64, f64)> {
    k.expect_dim(kernel.dim())?;
    let (mut a, mut b) = (0.0, 0.0);
    for ((s1, s2), c) in kernel.terms() {
        // A pair contributes once per slot occupied by k; the diagonal is
        // excluded, so at most one slot matches.
        if s1 == k || s2 == k {
            a += c * c;
            b += c.abs().powf(p);
        }
    }
    Ok((a, b))
}

/// Upper bounds `‖X_0‖_p (δ_{i+k,p} + δ_{i,p})` on `δ_{i,p/2}` of the product
/// field `Y_i = X_i X_{i+k}`, at every site where the bound is nonzero.
pub fn product_field_delta_bound(
    profile: &DependenceProfile,
    k: &LatticePoint,
    x0_norm: f64,
) -> BTreeMap<LatticePoint, f64> {
    let mut out = BTreeMap::new();
    for s in profile.entries.keys() {
        for i in [s.clone(), s.sub(k)] {
            if out.contains_key(&i) {
                continue;
            }
            let b = x0_norm * (profile.delta(&i.add(k)) + profile.delta(&i));
            out.insert(i, b);
        }
    }
    out.retain(|_, b| *b != 0.0);
    out
}

/// Monte Carlo `δ_{i,q}` of `Y_i = X_i X_{i+k}`.
pub fn product_field_delta_monte_carlo(
    model: &FieldModel,
    k: &LatticePoint,
    i: &LatticePoint,
    q: f64,
    replicates: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    i.expect_dim(model.dim())?;
    k.expect_dim(model.dim())?;
    check_mc(replicates, q.max(2.0))?;
    let ik = i.add(k);
    if !influences(model, i) && !influences(model, &ik) {
        return Ok(DeltaEstimate::zero(Method::MonteCarlo));
    }
    let (a, b) = (i.coords(), ik.coords());
    let diffs = coupled_differences(model, replicates, seed, |x, y, _| x(a) * x(b) - y(a) * y(b));
    Ok(pnorm_estimate(&diffs, q))
}

/// `‖X_0‖_p` in closed form where available: linear fields with normal
/// innovations, and single-term linear kernels.
pub fn field_norm_analytic(model: &FieldModel, p: f64) -> Option<f64> {
    let ModelKind::Linear(k) = &model.kind else {
        return None;
    };
    if model.mean != 0.0 {
        return None;
    }
    if model.noise.distribution == NoiseDistribution::Normal {
        return Some(k.sum_sq().sqrt() * model.noise.norm(p).ok()?);
    }
    if k.len() == 1 {
        return Some(k.abs_sum() * model.noise.norm(p).ok()?);
    }
    None
}

/// Monte Carlo `‖X_0‖_p` with jackknife standard error.
pub fn field_norm_monte_carlo(model: &FieldModel, p: f64, replicates: usize, seed: u64) -> Result<(f64, f64)> {
    check_mc(replicates, p)?;
    let origin = LatticePoint::origin(model.dim());
    let pow = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        model.eval(&f, origin.coords()).abs().powf(p)
    });
    Ok(stats::pnorm_with_se(&pow, p))
}
