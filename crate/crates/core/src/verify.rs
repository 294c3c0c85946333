//! Monte Carlo checks of the limit theory: normal approximation of
//! normalized sums (Kolmogorov and Lévy distances), the moment inequality
//! `‖Σ a_i X_i‖_p ≤ (2p Σ a_i²)^{1/2} Δ_p`, the variance limit, the
//! m-dependent approximation gap, and the normal limit of `γ̂_k`.

use serde::{Deserialize, Serialize};

use crate::dependence;
use crate::error::{Error, Result};
use crate::estimation::{variance_exact, LagPlan};
use crate::fields::{FieldModel, TruncatedField, TruncationMethod};
use crate::lattice::{make_domain, Domain, DomainShape, LatticePoint};
use crate::noise::NoiseField;
use crate::normal;
use crate::rng;
use crate::stats;

/// Points of the normal quantile grid used by the Lévy distance.
pub const LEVY_GRID: usize = 4096;
/// Bisection tolerance of the Lévy distance.
pub const LEVY_TOLERANCE: f64 = 1e-4;

/// Sorted replicate values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument("an empirical distribution needs at least two values".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("NaN in replicate values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F(x) = #{v ≤ x} / N`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    /// `F(x−) = #{v < x} / N`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v < x) as f64 / self.values.len() as f64
    }

    fn distinct(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(n, v)| *n == 0 || self.values[n - 1] != **v)
            .map(|(_, &v)| v)
    }
}

/// A normal law, or a point mass when `var = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    pub mean: f64,
    pub var: f64,
}

impl NormalLaw {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    fn cdf(&self, x: f64) -> f64 {
        normal::cdf_with(x, self.mean, self.var)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.var == 0.0 {
            if x > self.mean {
                1.0
            } else {
                0.0
            }
        } else {
            self.cdf(x)
        }
    }
}

/// `sup_x |F(x) − G(x)|`, evaluated on both sides of every jump of either
/// distribution function.
fn sup_distance(emp: &EmpiricalDistribution, law: NormalLaw) -> f64 {
    let mut d: f64 = 0.0;
    let mut check = |x: f64| {
        d = d
            .max((emp.cdf(x) - law.cdf(x)).abs())
            .max((emp.cdf_left(x) - law.cdf_left(x)).abs());
    };
    for x in emp.distinct() {
        check(x);
    }
    if law.var == 0.0 {
        check(law.mean);
    }
    d
}

/// Kolmogorov distance to `N(mean, var)`; requires `var > 0`.
pub fn kolmogorov_distance(emp: &EmpiricalDistribution, law: NormalLaw) -> Result<f64> {
    if !(law.var > 0.0) {
        return Err(Error::Degenerate(format!(
            "Kolmogorov distance needs a positive variance, got {}",
            law.var
        )));
    }
    Ok(sup_distance(emp, law))
}

/// Lévy distance `inf{ε : F(x−ε) − ε ≤ G(x) ≤ F(x+ε) + ε ∀x}`.
///
/// Feasibility of a given `ε` is checked at `x_j ± ε` and `x_j` for every
/// jump `x_j` of `F`, at the mean of `G`, and on a grid of normal quantiles,
/// using both values and left limits. The bisection starts from the sup
/// distance, which is always feasible, so the result never exceeds it.
pub fn levy_distance(emp: &EmpiricalDistribution, law: NormalLaw) -> Result<f64> {
    if !(law.var >= 0.0) {
        return Err(Error::InvalidArgument(format!("variance must be nonnegative, got {}", law.var)));
    }
    let mut points: Vec<f64> = emp.distinct().collect();
    points.push(law.mean);
    if law.var > 0.0 {
        let sd = law.var.sqrt();
        for j in 0..LEVY_GRID {
            points.push(law.mean + sd * normal::quantile((j as f64 + 0.5) / LEVY_GRID as f64)?);
        }
    }
    let jumps: Vec<f64> = emp.distinct().collect();
    let feasible = |eps: f64| -> bool {
        let ok = |x: f64| {
            let (g, gl) = (law.cdf(x), law.cdf_left(x));
            g <= emp.cdf(x + eps) + eps
                && gl <= emp.cdf_left(x + eps) + eps
                && g >= emp.cdf(x - eps) - eps
                && gl >= emp.cdf_left(x - eps) - eps
        };
        points.iter().all(|&x| ok(x)) && jumps.iter().all(|&x| ok(x - eps) && ok(x + eps))
    };
    let mut hi = sup_distance(emp, law).min(1.0);
    let mut lo = 0.0;
    if feasible(0.0) {
        return Ok(0.0);
    }
    while hi - lo > LEVY_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// How `S_Γ/√|Γ|` is compared with a normal law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardization {
    /// `N(0, σ_Γ²/|Γ|)` with the exact variance of the sum.
    ExactSigma,
    /// `N(0, σ²)` with the long-run variance.
    LongRun,
    /// `N(m, s²)` with the replicate mean and variance.
    Empirical,
}

impl std::str::FromStr for Standardization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-sigma" => Ok(Self::ExactSigma),
            "longrun" | "long-run" => Ok(Self::LongRun),
            "empirical" => Ok(Self::Empirical),
            other => Err(Error::Parse(format!("unknown standardization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub domain_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mode: Standardization,
    pub reference: NormalLaw,
    pub sample_mean: f64,
    pub sample_var: f64,
    pub kolmogorov: f64,
    pub levy: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Replicate statistics in replicate order.
    #[serde(skip)]
    pub statistics: Vec<f64>,
}

fn finish_clt(
    statistics: Vec<f64>,
    reference: NormalLaw,
    mode: Standardization,
    domain_size: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CltReport> {
    let emp = EmpiricalDistribution::new(statistics.clone())?;
    let kolmogorov = kolmogorov_distance(&emp, reference)?;
    let levy = levy_distance(&emp, reference)?;
    assert!(levy <= kolmogorov, "Lévy distance {levy} exceeds Kolmogorov {kolmogorov}");
    Ok(CltReport {
        domain_size,
        replicates: statistics.len(),
        seed,
        mode,
        reference,
        sample_mean: stats::mean(&statistics),
        sample_var: stats::variance(&statistics),
        kolmogorov,
        levy,
        tolerance,
        pass: kolmogorov < tolerance,
        statistics,
    })
}

/// Simulates `(S_Γ − |Γ| E X)/√|Γ|` over `replicates` independent noise fields
/// and measures its distance to the normal reference of `mode` (default:
/// exact when the model has closed-form autocovariances, else empirical).
pub fn clt_experiment(
    model: &FieldModel,
    domain: &Domain,
    replicates: usize,
    seed: u64,
    mode: Option<Standardization>,
    tolerance: f64,
) -> Result<CltReport> {
    if domain.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let mode = mode.unwrap_or(if model.autocovariances().is_ok() {
        Standardization::ExactSigma
    } else {
        Standardization::Empirical
    });
    let n = domain.len() as f64;
    let statistics = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let s: f64 = model.eval_domain(&f, domain).expect("dimension checked").iter().sum();
        (s - n * model.mean) / n.sqrt()
    });
    let reference = match mode {
        Standardization::ExactSigma => NormalLaw::new(0.0, variance_exact(model, domain)? / n),
        Standardization::LongRun => {
            if model.is_degenerate()? {
                return Err(Error::Degenerate("long-run variance is zero".into()));
            }
            NormalLaw::new(0.0, model.longrun_variance_exact()?)
        }
        Standardization::Empirical => NormalLaw::new(stats::mean(&statistics), stats::variance(&statistics)),
    };
    finish_clt(statistics, reference, mode, domain.len(), seed, tolerance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub domain_size: usize,
    pub weight_sq_sum: f64,
    /// Monte Carlo `‖Σ a_i X_i‖_p` and its standard error.
    pub estimate: f64,
    pub se: f64,
    /// Exact `‖Σ a_i X_i‖_2` when `p = 2` and the model has closed-form
    /// autocovariances.
    pub exact: Option<f64>,
    pub stability: f64,
    pub stability_se: f64,
    pub bound: f64,
    /// `(bound − lhs)/bound` with the exact left side when available.
    pub margin: f64,
    pub violation: bool,
}

/// Compares `‖Σ a_i X_i‖_p` with `(2p Σ a_i²)^{1/2} Δ_p`.
///
/// A violation is declared when the exact left side exceeds the bound, or,
/// without an exact value, when the estimate exceeds it by more than three
/// combined standard errors.
pub fn moment_inequality_check(
    model: &FieldModel,
    domain: &Domain,
    weights: &[f64],
    p: f64,
    replicates: usize,
    seed: u64,
) -> Result<MomentReport> {
    if weights.len() != domain.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} sites",
            weights.len(),
            domain.len()
        )));
    }
    let (stab, stab_se) = dependence::stability(model, p, replicates, rng::derive_seed(seed, 0xD5))?;
    let w2: f64 = weights.iter().map(|w| w * w).sum();
    let factor = (2.0 * p * w2).sqrt();
    let bound = factor * stab;
    let pow = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let s: f64 = domain
            .iter()
            .zip(weights)
            .map(|(i, w)| w * model.eval(&f, i.coords()))
            .sum();
        s.abs().powf(p)
    });
    let (estimate, se) = stats::pnorm_with_se(&pow, p);
    let exact = if p == 2.0 && model.mean == 0.0 {
        model.weighted_variance_exact(domain, weights).ok().map(|v| v.max(0.0).sqrt())
    } else {
        None
    };
    let lhs = exact.unwrap_or(estimate);
    let violation = match exact {
        Some(e) => e > bound,
        None => estimate - bound > 3.0 * se.hypot(factor * stab_se),
    };
    Ok(MomentReport {
        p,
        domain_size: domain.len(),
        weight_sq_sum: w2,
        estimate,
        se,
        exact,
        stability: stab,
        stability_se: stab_se,
        bound,
        margin: if bound > 0.0 { (bound - lhs) / bound } else { 0.0 },
        violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub size: usize,
    pub variance: f64,
    pub ratio: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceLimitReport {
    pub longrun_variance: f64,
    pub rows: Vec<VarianceRow>,
    /// Relative errors strictly decrease along the supplied sizes (or are all
    /// zero).
    pub decreasing: bool,
}

/// `σ_Γ²/|Γ|` on boxes of the given sides against `σ²`.
pub fn variance_limit_check(model: &FieldModel, sizes: &[usize]) -> Result<VarianceLimitReport> {
    if model.is_degenerate()? {
        return Err(Error::Degenerate("long-run variance is zero".into()));
    }
    let sigma2 = model.longrun_variance_exact()?;
    let mut rows = Vec::new();
    for &n in sizes {
        let domain = make_domain(&DomainShape::Box { n, d: model.dim() })?;
        let variance = variance_exact(model, &domain)?;
        let ratio = variance / domain.len() as f64;
        rows.push(VarianceRow {
            n,
            size: domain.len(),
            variance,
            ratio,
            relative_error: (ratio / sigma2 - 1.0).abs(),
        });
    }
    let all_zero = rows.iter().all(|r| r.relative_error == 0.0);
    let decreasing = all_zero || rows.windows(2).all(|w| w[1].relative_error < w[0].relative_error);
    Ok(VarianceLimitReport {
        longrun_variance: sigma2,
        rows,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub m: u64,
    /// `‖S_Γ − S̄_Γ‖_2 / σ_Γ`.
    pub gap: f64,
    pub se: f64,
    pub method: String,
    /// The remainder vanishes identically (window covers the support).
    pub exact_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub domain_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub radius: i64,
    /// `σ_Γ`, exact when available and otherwise estimated from the same
    /// replicates.
    pub sigma: f64,
    pub sigma_exact: bool,
    pub rows: Vec<TruncationRow>,
    /// Gaps are nonincreasing along increasing `m`.
    pub nonincreasing: bool,
    /// Every `m ≥ R(g)` row is exactly zero (linear and Volterra models).
    pub zero_beyond_window: bool,
    pub pass: bool,
}

/// `‖S_Γ − S̄_Γ‖_2/σ_Γ` for each `m`, all on the same noise replicates.
pub fn truncation_gap_check(
    model: &FieldModel,
    domain: &Domain,
    ms: &[u64],
    replicates: usize,
    seed: u64,
) -> Result<TruncationReport> {
    if domain.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let truncs: Vec<TruncatedField> = ms.iter().map(|&m| TruncatedField::new(model.clone(), m)).collect();
    let exact_sigma = variance_exact(model, domain).ok();
    let rows: Vec<(f64, Vec<f64>)> = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let s: f64 = domain.iter().map(|i| model.eval(&f, i.coords()) - model.mean).sum();
        let gaps = truncs
            .iter()
            .map(|t| domain.iter().map(|i| t.eval_remainder(&f, f.key(), i.coords())).sum())
            .collect();
        (s, gaps)
    });
    let sigma2 = exact_sigma.unwrap_or_else(|| stats::mean(&rows.iter().map(|r| r.0 * r.0).collect::<Vec<_>>()));
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate("variance of the sum is zero".into()));
    }
    let sigma = sigma2.sqrt();
    let radius = model.radius();
    let mut out = Vec::new();
    for (j, t) in truncs.iter().enumerate() {
        let sq: Vec<f64> = rows.iter().map(|r| r.1[j] * r.1[j]).collect();
        let (norm, se) = stats::pnorm_with_se(&sq, 2.0);
        let exact_zero = rows.iter().all(|r| r.1[j] == 0.0);
        out.push(TruncationRow {
            m: t.m(),
            gap: norm / sigma,
            se: se / sigma,
            method: match t.method() {
                TruncationMethod::Exact => "exact".into(),
                TruncationMethod::Quadrature { coords, nodes } => format!("quadrature({coords}x{nodes})"),
                TruncationMethod::MonteCarlo { coords, draws } => format!("monte-carlo({coords}x{draws})"),
            },
            exact_zero,
        });
    }
    let nonincreasing = out.windows(2).all(|w| w[1].gap <= w[0].gap);
    let closed_form = model.autocovariances().is_ok();
    let zero_beyond_window = !closed_form || out.iter().filter(|r| r.m as i64 >= radius).all(|r| r.gap == 0.0);
    Ok(TruncationReport {
        domain_size: domain.len(),
        replicates,
        seed,
        radius,
        sigma,
        sigma_exact: exact_sigma.is_some(),
        rows: out,
        nonincreasing,
        zero_beyond_window,
        pass: nonincreasing && zero_beyond_window,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovReport {
    pub lag: LatticePoint,
    /// `|Ξ|`.
    pub lag_set_size: usize,
    pub domain_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub gamma_exact: Option<f64>,
    pub gamma_hat_mean: f64,
    pub gamma_hat_se: f64,
    /// `|mean γ̂_k − γ_k| / SE`.
    pub z_score: Option<f64>,
    pub degenerate: bool,
    /// Distances of `√|Ξ|(γ̂_k − γ_k)` to `N(0, v̂)`, where `v̂` is the
    /// replicate variance (centred at the replicate mean when `γ_k` has no
    /// closed form).
    pub clt: Option<CltReport>,
    /// Distances to `N(m̂, v̂)` with both moments taken from the replicates.
    pub clt_empirical: Option<CltReport>,
}

/// Replicates `γ̂_k` on `domain` and studies the normal limit of
/// `√|Ξ|(γ̂_k − γ_k)`.
pub fn autocov_clt_experiment(
    model: &FieldModel,
    domain: &Domain,
    lag: &LatticePoint,
    replicates: usize,
    seed: u64,
    tolerance: f64,
) -> Result<AutocovReport> {
    let plan = LagPlan::new(domain, lag)?;
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let gamma_exact = model.autocovariance_exact(lag).ok();
    let estimates = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let values = model.eval_domain(&f, domain).expect("dimension checked");
        plan.estimate(&values)
    });
    let mean = stats::mean(&estimates);
    let se = stats::standard_error(&estimates);
    let center = gamma_exact.unwrap_or(mean);
    let root = (plan.len() as f64).sqrt();
    let statistics: Vec<f64> = estimates.iter().map(|g| root * (g - center)).collect();
    let var = stats::variance(&statistics);
    let degenerate = !(var > 0.0);
    let (clt, clt_empirical) = if degenerate {
        (None, None)
    } else {
        let mode = Standardization::Empirical;
        let ref0 = NormalLaw::new(if gamma_exact.is_some() { 0.0 } else { stats::mean(&statistics) }, var);
        let a = finish_clt(statistics.clone(), ref0, mode, domain.len(), seed, tolerance)?;
        let ref1 = NormalLaw::new(stats::mean(&statistics), var);
        let b = finish_clt(statistics, ref1, mode, domain.len(), seed, tolerance)?;
        (Some(a), Some(b))
    };
    Ok(AutocovReport {
        lag: lag.clone(),
        lag_set_size: plan.len(),
        domain_size: domain.len(),
        replicates,
        seed,
        gamma_exact,
        gamma_hat_mean: mean,
        gamma_hat_se: se,
        z_score: gamma_exact.filter(|_| se > 0.0).map(|g| (mean - g).abs() / se),
        degenerate,
        clt,
        clt_empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{LinearKernel, LipschitzMap, VolterraKernel};
    use crate::noise::{Innovations, NoiseDistribution, NoiseSpec};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let f = NoiseField::new(NoiseSpec::normal(), seed, 0);
        (0..n as i64).map(|i| f.value(&[i])).collect()
    }

    #[test]
    fn kolmogorov_against_own_law() {
        let emp = EmpiricalDistribution::new(normal_sample(1_000_000, 1)).unwrap();
        let d = kolmogorov_distance(&emp, NormalLaw::new(0.0, 1.0)).unwrap();
        // DKW: P(D > 0.002) ≤ 2 e^{−2·10⁶·0.002²} = 2e^{−8}.
        assert!(d < 0.002, "{d}");
    }

    #[test]
    fn kolmogorov_point_mass() {
        let emp = EmpiricalDistribution::new(vec![0.0; 10]).unwrap();
        assert!((kolmogorov_distance(&emp, NormalLaw::new(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(kolmogorov_distance(&emp, NormalLaw::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn kolmogorov_matches_brute_force() {
        let xs = normal_sample(300, 2);
        let emp = EmpiricalDistribution::new(xs.clone()).unwrap();
        let law = NormalLaw::new(0.1, 1.3);
        let d = kolmogorov_distance(&emp, law).unwrap();
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let brute = sorted
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let g = law.cdf(x);
                ((j + 1) as f64 / n - g).abs().max((g - j as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!((d - brute).abs() < 1e-15);
    }

    #[test]
    fn levy_point_masses() {
        let emp = EmpiricalDistribution::new(vec![0.0; 4]).unwrap();
        for a in [0.0, 0.05, 0.3, 0.9, 1.0, 2.5] {
            let l = levy_distance(&emp, NormalLaw::new(a, 0.0)).unwrap();
            let want = f64::min(a, 1.0);
            assert!((l - want).abs() <= LEVY_TOLERANCE, "a={a}: {l}");
        }
    }

    #[test]
    fn levy_bounded_by_kolmogorov() {
        for (seed, shift) in [(1, 0.0), (2, 0.3), (3, -1.0)] {
            let emp = EmpiricalDistribution::new(normal_sample(2000, seed)).unwrap();
            let law = NormalLaw::new(shift, 1.0);
            let k = kolmogorov_distance(&emp, law).unwrap();
            let l = levy_distance(&emp, law).unwrap();
            assert!(l <= k, "{l} {k}");
            if shift == 0.0 {
                assert!(l < 0.03);
            } else {
                assert!(l > 0.05);
            }
        }
    }

    #[test]
    fn levy_of_shifted_sample_is_small_multiple_of_shift() {
        // Shifting by h changes the Lévy distance to the sample's own law by at most h.
        let xs = normal_sample(3000, 4);
        let emp = EmpiricalDistribution::new(xs.iter().map(|x| x + 0.02).collect()).unwrap();
        let base = levy_distance(&EmpiricalDistribution::new(xs).unwrap(), NormalLaw::new(0.0, 1.0)).unwrap();
        let l = levy_distance(&emp, NormalLaw::new(0.0, 1.0)).unwrap();
        assert!(l <= base + 0.02 + LEVY_TOLERANCE);
    }

    fn iid() -> FieldModel {
        FieldModel::linear(LinearKernel::identity(2).unwrap(), NoiseSpec::normal())
    }

    #[test]
    fn clt_iid_field_at_noise_floor() {
        let g = make_domain(&DomainShape::RandomSubset { n: 20, d: 2, keep: 0.5, seed: 3 }).unwrap();
        let rep = clt_experiment(&iid(), &g, 4000, 7, None, 0.03).unwrap();
        assert_eq!(rep.mode, Standardization::ExactSigma);
        assert!((rep.reference.var - 1.0).abs() < 1e-15);
        assert!(rep.kolmogorov < 1.63 / (4000f64).sqrt(), "{}", rep.kolmogorov);
        assert!(rep.levy <= rep.kolmogorov);
    }

    #[test]
    fn clt_modes() {
        let m = FieldModel::linear(LinearKernel::moving_average(1, &[1.0, -1.0]).unwrap(), NoiseSpec::normal());
        let g = make_domain(&DomainShape::Box { n: 30, d: 1 }).unwrap();
        assert!(matches!(
            clt_experiment(&m, &g, 100, 1, Some(Standardization::LongRun), 0.03),
            Err(Error::Degenerate(_))
        ));
        let sub = FieldModel::subordinated(LinearKernel::identity(1).unwrap(), LipschitzMap::Abs, NoiseSpec::normal());
        let rep = clt_experiment(&sub, &g, 500, 1, None, 0.1).unwrap();
        assert_eq!(rep.mode, Standardization::Empirical);
    }

    #[test]
    fn moment_inequality_single_site() {
        let m = FieldModel::linear(LinearKernel::moving_average(2, &[1.0, 0.5]).unwrap(), NoiseSpec::normal());
        let g = Domain::new(2, vec![LatticePoint::origin(2)]).unwrap();
        let rep = moment_inequality_check(&m, &g, &[1.0], 2.0, 2000, 1).unwrap();
        let delta2 = 1.5 * 2f64.sqrt();
        assert!((rep.bound - 2.0 * delta2).abs() < 1e-12);
        assert!((rep.exact.unwrap() - 1.25f64.sqrt()).abs() < 1e-12);
        assert!(!rep.violation);
        let twice = moment_inequality_check(&m, &g, &[2.0], 2.0, 2000, 1).unwrap();
        assert!((twice.bound - 2.0 * rep.bound).abs() < 1e-12);
        assert!((twice.estimate - 2.0 * rep.estimate).abs() < 1e-12);
    }

    #[test]
    fn variance_limits() {
        let id = FieldModel::linear(LinearKernel::identity(1).unwrap(), NoiseSpec::normal());
        let rep = variance_limit_check(&id, &[3, 10, 40]).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio == 1.0) && rep.decreasing);
        let two = FieldModel::linear(LinearKernel::moving_average(1, &[1.0, 1.0]).unwrap(), NoiseSpec::normal());
        let rep = variance_limit_check(&two, &[8, 16, 32, 64]).unwrap();
        for r in &rep.rows {
            assert!((r.relative_error - 1.0 / (2.0 * r.n as f64)).abs() < 1e-12);
        }
        assert!(rep.decreasing);
        assert!(rep.rows[3].relative_error <= 0.05);
    }

    #[test]
    fn truncation_gaps() {
        let c = 0.8;
        let m = FieldModel::linear(LinearKernel::new(1, [(LatticePoint::from([0]), 1.0), (LatticePoint::from([2]), c)]).unwrap(), NoiseSpec::normal());
        let g = make_domain(&DomainShape::Box { n: 50, d: 1 }).unwrap();
        let rep = truncation_gap_check(&m, &g, &[0, 1, 2, 3], 4000, 3).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.rows[2].gap, 0.0);
        assert_eq!(rep.rows[3].gap, 0.0);
        // S − S̄ = c Σ_{i∈Γ} ε_{i−2} at m = 1.
        let want = (50.0 * c * c / variance_exact(&m, &g).unwrap()).sqrt();
        assert!((rep.rows[1].gap - want).abs() < 3.0 * rep.rows[1].se, "{:?} vs {want}", rep.rows[1]);
        let v = FieldModel::volterra(VolterraKernel::lag_one(1).unwrap(), NoiseSpec::normal());
        let rep = truncation_gap_check(&v, &g, &[0, 1], 500, 3).unwrap();
        assert!(rep.pass && rep.rows[1].exact_zero);
    }

    #[test]
    fn autocov_clt_iid() {
        let m = FieldModel::linear(LinearKernel::identity(1).unwrap(), NoiseSpec::normal());
        let g = make_domain(&DomainShape::Box { n: 2001, d: 1 }).unwrap();
        let rep = autocov_clt_experiment(&m, &g, &LatticePoint::from([1]), 5000, 2, 0.04).unwrap();
        assert_eq!(rep.lag_set_size, 2000);
        assert!(rep.clt.as_ref().unwrap().kolmogorov < 0.04);
        assert!(rep.z_score.unwrap() < 3.0);
        let zero = FieldModel::linear(LinearKernel::new(1, []).unwrap(), NoiseSpec::new(NoiseDistribution::Uniform));
        let rep = autocov_clt_experiment(&zero, &g, &LatticePoint::from([1]), 100, 2, 0.04).unwrap();
        assert!(rep.degenerate && rep.clt.is_none());
    }
}
