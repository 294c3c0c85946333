//! The iid innovation field and its single-site coupling.
//!
//! A [`NoiseField`] realizes `(ε_j)` lazily: the value at `j` is a pure
//! function of `(seed, replicate, stream, j)`, obtained by hashing those
//! words into a site key and transforming counter outputs of that key into a
//! draw from the innovation law. No noise array is ever stored, any subset of
//! sites can be evaluated in any order on any thread, and replacing a single
//! site (the coupling) leaves every other site bit-identical.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use libm::tgamma as gamma;

use crate::error::{Error, Result};
use crate::lattice::LatticePoint;
use crate::quadrature::GaussRule;
use crate::rng;

/// Stream tag of the base innovations.
pub const BASE_STREAM: u64 = 0;
/// Stream tag of the independent copy `ε_0'` used by the coupling.
pub const COUPLING_STREAM: u64 = 0xC0_0C1E;
/// Stream tag for auxiliary Monte Carlo draws (conditional expectations).
pub const AUX_STREAM: u64 = 0xA0_0A0A;

/// Law of the innovations. Every law is centred with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    /// Standard normal.
    Normal,
    /// Uniform on `{-1, +1}`.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// Exponential with rate 1, shifted by −1.
    Exponential,
}

impl NoiseDistribution {
    pub fn name(self) -> &'static str {
        match self {
            NoiseDistribution::Normal => "normal",
            NoiseDistribution::Rademacher => "rademacher",
            NoiseDistribution::Uniform => "uniform",
            NoiseDistribution::Exponential => "exponential",
        }
    }
}

impl fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" | "gaussian" => Ok(NoiseDistribution::Normal),
            "rademacher" => Ok(NoiseDistribution::Rademacher),
            "uniform" => Ok(NoiseDistribution::Uniform),
            "exponential" => Ok(NoiseDistribution::Exponential),
            other => Err(Error::Parse(format!("unknown noise distribution {other:?}"))),
        }
    }
}

/// Distribution of the iid innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
}

const SQRT_3: f64 = 1.732_050_807_568_877_2;

impl NoiseSpec {
    pub fn new(distribution: NoiseDistribution) -> Self {
        Self { distribution }
    }

    pub fn normal() -> Self {
        Self::new(NoiseDistribution::Normal)
    }

    pub fn variance(&self) -> f64 {
        1.0
    }

    pub fn is_symmetric(&self) -> bool {
        self.distribution != NoiseDistribution::Exponential
    }

    /// `sup |ε|`, infinite for unbounded laws.
    pub fn sup_abs(&self) -> f64 {
        match self.distribution {
            NoiseDistribution::Rademacher => 1.0,
            NoiseDistribution::Uniform => SQRT_3,
            _ => f64::INFINITY,
        }
    }

    /// Raw moment `E ε^k`.
    pub fn moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match self.distribution {
            NoiseDistribution::Normal => {
                if k % 2 == 1 {
                    0.0
                } else {
                    (1..k).step_by(2).map(|j| j as f64).product()
                }
            }
            NoiseDistribution::Rademacher => {
                if k % 2 == 1 {
                    0.0
                } else {
                    1.0
                }
            }
            NoiseDistribution::Uniform => {
                if k % 2 == 1 {
                    0.0
                } else {
                    SQRT_3.powi(k as i32) / (k as f64 + 1.0)
                }
            }
            NoiseDistribution::Exponential => {
                // E (E − 1)^k is the number of derangements of k items.
                let (mut prev, mut cur) = (1.0f64, 0.0f64);
                for j in 2..=k {
                    let next = (j as f64 - 1.0) * (cur + prev);
                    prev = cur;
                    cur = next;
                }
                cur
            }
        }
    }

    fn check_p(&self, p: f64) -> Result<()> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::UnsupportedNorm {
                p,
                distribution: self.distribution.name(),
            });
        }
        if p.is_infinite() && self.sup_abs().is_infinite() {
            return Err(Error::UnsupportedNorm {
                p,
                distribution: self.distribution.name(),
            });
        }
        Ok(())
    }

    /// `‖ε_0‖_p`.
    pub fn norm(&self, p: f64) -> Result<f64> {
        self.check_p(p)?;
        if p.is_infinite() {
            return Ok(self.sup_abs());
        }
        let m = match self.distribution {
            NoiseDistribution::Normal => normal_abs_moment(p),
            NoiseDistribution::Rademacher => 1.0,
            NoiseDistribution::Uniform => SQRT_3.powf(p) / (p + 1.0),
            NoiseDistribution::Exponential => {
                // E|E − 1|^p = ∫_0^1 (1 − x)^p e^{-x} dx + Γ(p + 1) / e.
                let head = GaussRule::legendre(64).integrate(0.0, 1.0, |x| (1.0 - x).powf(p) * (-x).exp());
                head + gamma(p + 1.0) / std::f64::consts::E
            }
        };
        Ok(m.powf(1.0 / p))
    }

    /// `‖ε_0 − ε_0'‖_p` for an independent copy `ε_0'`.
    pub fn diff_norm(&self, p: f64) -> Result<f64> {
        self.check_p(p)?;
        if p.is_infinite() {
            return Ok(2.0 * self.sup_abs());
        }
        let m = match self.distribution {
            // ε − ε' ~ N(0, 2).
            NoiseDistribution::Normal => 2f64.powf(p / 2.0) * normal_abs_moment(p),
            // 0 with probability 1/2, ±2 otherwise.
            NoiseDistribution::Rademacher => 2f64.powf(p) / 2.0,
            // Triangular on [−w, w] with w = 2√3.
            NoiseDistribution::Uniform => {
                let w = 2.0 * SQRT_3;
                2.0 * w.powf(p) / ((p + 1.0) * (p + 2.0))
            }
            // Standard Laplace.
            NoiseDistribution::Exponential => gamma(p + 1.0),
        };
        Ok(m.powf(1.0 / p))
    }

    /// Gauss rule for the innovation law with at most `n` nodes.
    pub fn gauss_rule(&self, n: usize) -> GaussRule {
        match self.distribution {
            NoiseDistribution::Normal => GaussRule::from_recurrence(n, |_| 0.0, |k| k as f64, 1.0),
            NoiseDistribution::Rademacher => GaussRule {
                nodes: vec![-1.0, 1.0],
                weights: vec![0.5, 0.5],
            },
            NoiseDistribution::Uniform => GaussRule::from_recurrence(
                n,
                |_| 0.0,
                |k| {
                    let k = k as f64;
                    3.0 * k * k / (4.0 * k * k - 1.0)
                },
                1.0,
            ),
            NoiseDistribution::Exponential => {
                GaussRule::from_recurrence(n, |k| 2.0 * k as f64, |k| (k * k) as f64, 1.0)
            }
        }
    }

    /// Transforms the counter outputs of a site key into one innovation.
    #[inline]
    pub fn draw(&self, key: u64) -> f64 {
        match self.distribution {
            NoiseDistribution::Normal => {
                // Box–Muller, cosine branch.
                let u1 = rng::unit_open(rng::draw(key, 0));
                let u2 = rng::unit_open(rng::draw(key, 1));
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            NoiseDistribution::Rademacher => {
                if rng::draw(key, 0) >> 63 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            NoiseDistribution::Uniform => SQRT_3 * (2.0 * rng::unit_open(rng::draw(key, 0)) - 1.0),
            NoiseDistribution::Exponential => -rng::unit_open(rng::draw(key, 0)).ln() - 1.0,
        }
    }
}

/// `E|Z|^p` for standard normal `Z`.
fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Read access to an innovation field.
pub trait Innovations: Sync {
    fn spec(&self) -> NoiseSpec;
    fn value(&self, j: &[i64]) -> f64;
}

/// Realization of `(ε_j)` for one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseField {
    spec: NoiseSpec,
    seed: u64,
    replicate: u64,
    stream: u64,
    key: u64,
}

impl NoiseField {
    pub fn new(spec: NoiseSpec, seed: u64, replicate: u64) -> Self {
        Self::with_stream(spec, seed, replicate, BASE_STREAM)
    }

    pub fn with_stream(spec: NoiseSpec, seed: u64, replicate: u64, stream: u64) -> Self {
        let key = rng::fold(rng::fold(rng::fold(0x0E75_11ED, seed), replicate), stream);
        Self {
            spec,
            seed,
            replicate,
            stream,
            key,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Key identifying this realization; auxiliary draws derive from it.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn sample(&self, j: &LatticePoint) -> f64 {
        self.value(j.coords())
    }
}

impl Innovations for NoiseField {
    fn spec(&self) -> NoiseSpec {
        self.spec
    }

    #[inline]
    fn value(&self, j: &[i64]) -> f64 {
        self.spec.draw(rng::fold_coords(self.key, j))
    }
}

/// `ε*`: equal to the base field off the origin, and an independent copy at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledNoise {
    base: NoiseField,
    fresh_draw: f64,
}

impl CoupledNoise {
    pub fn base(&self) -> &NoiseField {
        &self.base
    }

    /// The replacement value `ε_0'`.
    pub fn fresh_draw(&self) -> f64 {
        self.fresh_draw
    }
}

impl Innovations for CoupledNoise {
    fn spec(&self) -> NoiseSpec {
        self.base.spec
    }

    #[inline]
    fn value(&self, j: &[i64]) -> f64 {
        if j.iter().all(|&c| c == 0) {
            self.fresh_draw
        } else {
            self.base.value(j)
        }
    }
}

/// Couples `field` at the origin with a draw from the independent stream
/// `(fresh_seed, replicate, COUPLING_STREAM)`.
pub fn couple(field: &NoiseField, fresh_seed: u64) -> CoupledNoise {
    let fresh = NoiseField::with_stream(field.spec, fresh_seed, field.replicate, COUPLING_STREAM);
    CoupledNoise {
        base: *field,
        fresh_draw: field.spec.draw(fresh.key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [NoiseDistribution; 4] = [
        NoiseDistribution::Normal,
        NoiseDistribution::Rademacher,
        NoiseDistribution::Uniform,
        NoiseDistribution::Exponential,
    ];

    #[test]
    fn determinism_and_support() {
        let f = NoiseField::new(NoiseSpec::new(NoiseDistribution::Rademacher), 3, 0);
        let j = LatticePoint::from([4, -2]);
        assert_eq!(f.sample(&j), f.sample(&j));
        for x in -20..20 {
            let v = f.value(&[x, 7]);
            assert!(v == 1.0 || v == -1.0);
        }
        let g = NoiseField::new(NoiseSpec::normal(), 3, 0);
        assert_eq!(g.value(&[1, 2]).to_bits(), g.value(&[1, 2]).to_bits());
    }

    #[test]
    fn normal_sample_mean() {
        let f = NoiseField::new(NoiseSpec::normal(), 2024, 0);
        let n = 1_000_000i64;
        let mean: f64 = (0..n).map(|i| f.value(&[i % 1000, i / 1000])).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / 1000.0, "{mean}");
    }

    #[test]
    fn moments_match_monte_carlo() {
        for dist in ALL {
            let spec = NoiseSpec::new(dist);
            let f = NoiseField::new(spec, 99, 1);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|i| f.value(&[i])).collect();
            for k in 1..=4u32 {
                let vals: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
                let m = vals.iter().sum::<f64>() / n as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                let se = sd / (n as f64).sqrt();
                let tol = 4.0 * se + 1e-12;
                assert!((m - spec.moment(k)).abs() <= tol, "{dist} k={k}: {m} vs {}", spec.moment(k));
            }
        }
    }

    #[test]
    fn derangement_moments() {
        let s = NoiseSpec::new(NoiseDistribution::Exponential);
        assert_eq!(
            (0..=4).map(|k| s.moment(k)).collect::<Vec<_>>(),
            vec![1.0, 0.0, 1.0, 2.0, 9.0]
        );
    }

    #[test]
    fn diff_norms_at_p2_are_sqrt2() {
        for dist in ALL {
            let v = NoiseSpec::new(dist).diff_norm(2.0).unwrap();
            assert!((v - 2f64.sqrt()).abs() < 1e-12, "{dist}: {v}");
        }
    }

    #[test]
    fn rademacher_diff_norm_by_enumeration() {
        // Four equally likely sign pairs.
        for p in [2.0, 3.0, 4.0, 6.5] {
            let m: f64 = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                .iter()
                .map(|(a, b): &(f64, f64)| (a - b).abs().powf(p) / 4.0)
                .sum();
            let v = NoiseSpec::new(NoiseDistribution::Rademacher).diff_norm(p).unwrap();
            assert!((v - m.powf(1.0 / p)).abs() < 1e-12);
        }
    }

    #[test]
    fn norms_by_quadrature() {
        // Integrate |x|^p against each law's density on a fine Legendre grid.
        let legendre = GaussRule::legendre(200);
        let p = 4.0;
        let normal = 2.0 * legendre.integrate(0.0, 12.0, |x| x.powf(p) * crate::normal::pdf(x));
        assert!((NoiseSpec::normal().norm(p).unwrap() - normal.powf(0.25)).abs() < 1e-10);
        assert!((NoiseSpec::normal().norm(4.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-12);
        let uni = legendre.integrate(-SQRT_3, SQRT_3, |x| x.abs().powf(3.0) / (2.0 * SQRT_3));
        let got = NoiseSpec::new(NoiseDistribution::Uniform).norm(3.0).unwrap();
        assert!((got - uni.powf(1.0 / 3.0)).abs() < 1e-6);
        let e = NoiseSpec::new(NoiseDistribution::Exponential);
        // E(E−1)^4 = 9 for integer p.
        assert!((e.norm(4.0).unwrap() - 9f64.powf(0.25)).abs() < 1e-12);
        assert!(e.norm(f64::INFINITY).is_err());
        assert_eq!(NoiseSpec::new(NoiseDistribution::Uniform).diff_norm(f64::INFINITY).unwrap(), 2.0 * SQRT_3);
    }

    #[test]
    fn gauss_rules_integrate_moments() {
        for dist in ALL {
            let spec = NoiseSpec::new(dist);
            let rule = spec.gauss_rule(32);
            for k in 0..=4u32 {
                let m: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((m - spec.moment(k)).abs() < 1e-9, "{dist} k={k}: {m}");
            }
        }
    }

    #[test]
    fn coupling_changes_only_the_origin() {
        let f = NoiseField::new(NoiseSpec::normal(), 5, 17);
        let c = couple(&f, 6);
        for x in -5..=5 {
            for y in -5..=5 {
                if (x, y) != (0, 0) {
                    assert_eq!(c.value(&[x, y]).to_bits(), f.value(&[x, y]).to_bits());
                }
            }
        }
        assert_ne!(c.value(&[0, 0]), f.value(&[0, 0]));
        assert_eq!(c.value(&[0, 0]), c.fresh_draw());
        // Same seed still gives an independent draw: the stream differs.
        let same = couple(&f, 5);
        assert_ne!(same.value(&[0, 0]), f.value(&[0, 0]));
    }

    #[test]
    fn coupled_origin_is_uncorrelated() {
        let n = 100_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|r| {
                let f = NoiseField::new(NoiseSpec::normal(), 1, r);
                (f.value(&[0]), couple(&f, 2).value(&[0]))
            })
            .collect();
        let mean_prod = pairs.iter().map(|(a, b)| a * b).sum::<f64>() / n as f64;
        // Var(ε ε') = 1, so SE = 1 / sqrt(n).
        assert!(mean_prod.abs() < 4.0 / (n as f64).sqrt(), "{mean_prod}");
        let mean_fresh = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
        assert!(mean_fresh.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn neighbouring_sites_are_uncorrelated() {
        let f = NoiseField::new(NoiseSpec::new(NoiseDistribution::Uniform), 8, 0);
        let n = 200_000i64;
        let c: f64 = (0..n).map(|i| f.value(&[i]) * f.value(&[i + 1])).sum::<f64>() / n as f64;
        assert!(c.abs() < 4.0 / (n as f64).sqrt());
    }
}
