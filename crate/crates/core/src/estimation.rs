//! Sums over finite domains, the sample mean and autocovariance estimators,
//! exact variances of sums, and normal confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::lattice::{Domain, LatticePoint};
use crate::noise::{Innovations, NoiseField};
use crate::normal;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumStatistics {
    /// `S_Γ = Σ_{i∈Γ} X_i`.
    pub value: f64,
    /// `|Γ|`.
    pub size: usize,
    /// `σ_Γ² = E S_Γ²` when the model admits it.
    pub variance_exact: Option<f64>,
}

fn nonempty(domain: &Domain) -> Result<()> {
    if domain.is_empty() {
        Err(Error::EmptyDomain)
    } else {
        Ok(())
    }
}

/// `S_Γ` for one realization of the innovations.
pub fn partial_sum<N: Innovations + ?Sized>(model: &FieldModel, noise: &N, domain: &Domain) -> Result<SumStatistics> {
    nonempty(domain)?;
    let value = model.eval_domain(noise, domain)?.iter().sum();
    Ok(SumStatistics {
        value,
        size: domain.len(),
        variance_exact: variance_exact(model, domain).ok(),
    })
}

/// `σ_Γ² = Σ_k |Γ ∩ (Γ − k)| γ_k` over the lags with `γ_k ≠ 0`.
pub fn variance_exact(model: &FieldModel, domain: &Domain) -> Result<f64> {
    let gammas = model.autocovariances()?;
    let mut acc = 0.0;
    for (k, g) in &gammas {
        acc += domain.shift_overlap(k)? as f64 * g;
    }
    Ok(acc)
}

/// `μ̂ = S_Γ / |Γ|`.
pub fn sample_mean<N: Innovations + ?Sized>(model: &FieldModel, noise: &N, domain: &Domain) -> Result<f64> {
    nonempty(domain)?;
    let s: f64 = model.eval_domain(noise, domain)?.iter().sum();
    Ok(s / domain.len() as f64)
}

/// Precomputed index pairs for `γ̂_k` on a fixed domain.
#[derive(Debug, Clone)]
pub struct LagPlan {
    pub lag: LatticePoint,
    pairs: Vec<(usize, usize)>,
}

impl LagPlan {
    pub fn new(domain: &Domain, lag: &LatticePoint) -> Result<Self> {
        let pairs = domain.lag_pairs(lag)?;
        if pairs.is_empty() {
            return Err(Error::EmptyLagSet);
        }
        Ok(Self {
            lag: lag.clone(),
            pairs,
        })
    }

    /// `|Ξ|`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(1/|Ξ|) Σ_{i∈Ξ} X_i X_{i+k} − μ̂²`, where `values` are the field values
    /// in domain order and `μ̂` is the mean over the whole domain.
    pub fn estimate(&self, values: &[f64]) -> f64 {
        let mu = stats::mean(values);
        self.cross_moment(values) - mu * mu
    }

    /// `(1/|Ξ|) Σ_{i∈Ξ} X_i X_{i+k}`.
    pub fn cross_moment(&self, values: &[f64]) -> f64 {
        self.pairs.iter().map(|&(a, b)| values[a] * values[b]).sum::<f64>() / self.pairs.len() as f64
    }
}

/// `γ̂_k` for one realization.
pub fn sample_autocovariance<N: Innovations + ?Sized>(
    model: &FieldModel,
    noise: &N,
    domain: &Domain,
    k: &LatticePoint,
) -> Result<f64> {
    let plan = LagPlan::new(domain, k)?;
    let values = model.eval_domain(noise, domain)?;
    Ok(plan.estimate(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// The normal quantile `z_{(1+level)/2}`.
    pub z: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `estimate ± z σ / √size` with `z = Φ^{-1}((1 + level)/2)`.
pub fn confidence_interval(estimate: f64, longrun_variance: f64, size: usize, level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if !(longrun_variance > 0.0) {
        return Err(Error::Degenerate(format!(
            "long-run variance {longrun_variance} is not positive"
        )));
    }
    if size == 0 {
        return Err(Error::EmptyDomain);
    }
    let z = normal::quantile(0.5 * (1.0 + level))?;
    let half = z * (longrun_variance / size as f64).sqrt();
    Ok(Interval {
        lower: estimate - half,
        upper: estimate + half,
        level,
        z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub lag: LatticePoint,
    /// `|Ξ|`.
    pub lag_set_size: usize,
    /// Replicate mean of `γ̂_k`.
    pub mean: f64,
    pub se: f64,
    pub exact: Option<f64>,
    /// Normal interval for `E γ̂_k` from the replicate spread.
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub domain_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Replicate mean of `μ̂` and its standard error.
    pub mean: f64,
    pub mean_se: f64,
    /// Exact `E μ̂`.
    pub mean_exact: f64,
    /// Fraction of replicates whose long-run-variance interval covers the
    /// true mean; absent when `σ²` is unavailable or zero.
    pub coverage: Option<f64>,
    pub longrun_variance: Option<f64>,
    pub degenerate: bool,
    pub lags: Vec<LagEstimate>,
}

/// Replicated `μ̂` and `γ̂_k`; replicate `r` uses noise `(seed, r)`.
pub fn estimation_report(
    model: &FieldModel,
    domain: &Domain,
    lags: &[LatticePoint],
    replicates: usize,
    seed: u64,
    level: f64,
) -> Result<EstimationReport> {
    nonempty(domain)?;
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let plans = lags.iter().map(|k| LagPlan::new(domain, k)).collect::<Result<Vec<_>>>()?;
    let sigma2 = model.longrun_variance_exact().ok();
    let degenerate = model.is_degenerate().unwrap_or(false);
    let z = normal::quantile(0.5 * (1.0 + level))?;
    let n = domain.len() as f64;
    let rows: Vec<(f64, Vec<f64>)> = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let values = model.eval_domain(&f, domain).expect("dimension checked");
        let mu = values.iter().sum::<f64>() / n;
        (mu, plans.iter().map(|p| p.estimate(&values)).collect())
    });
    let means: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let coverage = match sigma2 {
        Some(s) if !degenerate && s > 0.0 => {
            let hits = means
                .iter()
                .filter(|&&m| confidence_interval(m, s, domain.len(), level).is_ok_and(|ci| ci.contains(model.mean)))
                .count();
            Some(hits as f64 / replicates as f64)
        }
        _ => None,
    };
    let mut lag_rows = Vec::new();
    for (j, plan) in plans.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
        let mean = stats::mean(&xs);
        let se = stats::standard_error(&xs);
        lag_rows.push(LagEstimate {
            lag: plan.lag.clone(),
            lag_set_size: plan.len(),
            mean,
            se,
            exact: model.autocovariance_exact(&plan.lag).ok(),
            interval: Interval {
                lower: mean - z * se,
                upper: mean + z * se,
                level,
                z,
            },
        });
    }
    Ok(EstimationReport {
        domain_size: domain.len(),
        replicates,
        seed,
        level,
        mean: stats::mean(&means),
        mean_se: stats::standard_error(&means),
        mean_exact: model.mean,
        coverage,
        longrun_variance: sigma2,
        degenerate,
        lags: lag_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{LinearKernel, VolterraKernel};
    use crate::lattice::{make_domain, DomainShape};
    use crate::noise::NoiseSpec;

    fn line(n: usize) -> Domain {
        make_domain(&DomainShape::Box { n, d: 1 }).unwrap()
    }

    fn two_tap(d: usize) -> FieldModel {
        FieldModel::linear(LinearKernel::moving_average(d, &[1.0, 1.0]).unwrap(), NoiseSpec::normal())
    }

    #[test]
    fn partial_sums() {
        let id = FieldModel::linear(LinearKernel::identity(2).unwrap(), NoiseSpec::normal());
        let g = make_domain(&DomainShape::LShape { arm: 6, width: 2 }).unwrap();
        let f = NoiseField::new(NoiseSpec::normal(), 1, 0);
        let s = partial_sum(&id, &f, &g).unwrap();
        let direct: f64 = g.iter().map(|p| f.sample(p)).sum();
        assert_eq!(s.value, direct);
        assert_eq!(s.variance_exact, Some(g.len() as f64));
        let one = Domain::new(2, vec![LatticePoint::from([3, 4])]).unwrap();
        assert_eq!(partial_sum(&id, &f, &one).unwrap().value, f.value(&[3, 4]));
        assert_eq!(partial_sum(&id, &f, &Domain::new(2, vec![]).unwrap()), Err(Error::EmptyDomain));
    }

    #[test]
    fn exact_variance_small_case() {
        // E(ε_1+ε_0 + ε_2+ε_1 + ε_3+ε_2)² = E(ε_0 + 2ε_1 + 2ε_2 + ε_3)² = 10.
        assert_eq!(variance_exact(&two_tap(1), &line(3)).unwrap(), 10.0);
        let v = FieldModel::volterra(VolterraKernel::lag_one(1).unwrap(), NoiseSpec::normal());
        assert_eq!(variance_exact(&v, &line(17)).unwrap(), 17.0);
    }

    #[test]
    fn exact_variance_matches_replicates() {
        let m = two_tap(2);
        let g = make_domain(&DomainShape::Box { n: 5, d: 2 }).unwrap();
        let exact = variance_exact(&m, &g).unwrap();
        let sums = stats::replicates(10_000, |r| {
            let f = NoiseField::new(m.noise, 77, r as u64);
            partial_sum(&m, &f, &g).unwrap().value
        });
        let sq: Vec<f64> = sums.iter().map(|s| s * s).collect();
        let (est, se) = (stats::mean(&sq), stats::standard_error(&sq));
        assert!((est - exact).abs() < 3.0 * se, "{est} ± {se} vs {exact}");
        assert!(stats::mean(&sums).abs() < 4.0 * stats::standard_error(&sums));
    }

    #[test]
    fn sample_means() {
        let mu = 2.5;
        let m = two_tap(1).with_mean(mu);
        let g = line(50);
        let xs = stats::replicates(2000, |r| sample_mean(&m, &NoiseField::new(m.noise, 3, r as u64), &g).unwrap());
        assert!((stats::mean(&xs) - mu).abs() < 4.0 * stats::standard_error(&xs));
        let one = line(1);
        let f = NoiseField::new(m.noise, 3, 0);
        assert_eq!(sample_mean(&m, &f, &one).unwrap(), m.eval(&f, &[1]));
        let zero = FieldModel::linear(LinearKernel::new(1, []).unwrap(), NoiseSpec::normal());
        assert_eq!(sample_mean(&zero, &f, &g).unwrap(), 0.0);
        assert_eq!(sample_autocovariance(&zero, &f, &g, &LatticePoint::from([2])).unwrap(), 0.0);
    }

    #[test]
    fn autocovariance_estimator() {
        let m = two_tap(1);
        let g = line(400);
        let f = NoiseField::new(m.noise, 4, 0);
        let values = m.eval_domain(&f, &g).unwrap();
        let mu = stats::mean(&values);
        let k = LatticePoint::from([2]);
        // Direct evaluation of the displayed estimator.
        let xi: Vec<usize> = (0..398).collect();
        let direct = xi.iter().map(|&i| values[i] * values[i + 2]).sum::<f64>() / 398.0 - mu * mu;
        assert!((sample_autocovariance(&m, &f, &g, &k).unwrap() - direct).abs() < 1e-12);
        assert_eq!(
            sample_autocovariance(&m, &f, &g, &LatticePoint::from([400])),
            Err(Error::EmptyLagSet)
        );
        // γ̂_0 approaches γ_0 = 2.
        let xs = stats::replicates(500, |r| {
            sample_autocovariance(&m, &NoiseField::new(m.noise, 5, r as u64), &line(2000), &LatticePoint::from([0])).unwrap()
        });
        assert!((stats::mean(&xs) - 2.0).abs() < 0.02);
    }

    #[test]
    fn autocovariance_is_symmetric_on_boxes() {
        let m = two_tap(2);
        let g = make_domain(&DomainShape::Box { n: 9, d: 2 }).unwrap();
        let f = NoiseField::new(m.noise, 6, 0);
        for k in [[1, 0], [0, 2], [1, -3], [4, 4]] {
            let k = LatticePoint::from(k);
            let a = sample_autocovariance(&m, &f, &g, &k).unwrap();
            let b = sample_autocovariance(&m, &f, &g, &k.neg()).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn intervals() {
        let ci = confidence_interval(0.0, 4.0, 100, 0.95).unwrap();
        assert!((ci.z - 1.959_963_984_540_054).abs() < 1e-10);
        assert!((ci.upper - 1.959_963_984_540_054 * 0.2).abs() < 1e-10);
        let mut last = 0.0;
        for level in [0.5, 0.9, 0.99, 0.999999] {
            let w = confidence_interval(0.0, 1.0, 10, level).unwrap().width();
            assert!(w > last);
            last = w;
        }
        assert!(matches!(confidence_interval(0.0, 0.0, 10, 0.95), Err(Error::Degenerate(_))));
        assert!(confidence_interval(0.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn report_coverage() {
        let m = two_tap(2);
        let g = make_domain(&DomainShape::Box { n: 48, d: 2 }).unwrap();
        let rep = estimation_report(&m, &g, &[LatticePoint::from([1, 0])], 2000, 11, 0.95).unwrap();
        let c = rep.coverage.unwrap();
        assert!((c - 0.95).abs() <= 0.02, "coverage {c}");
        assert_eq!(rep.lags[0].lag_set_size, 47 * 48);
        assert!(!rep.degenerate);
    }
}
