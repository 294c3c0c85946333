//! Brute-force VC index of quadrants and rectangles, and the covering-number
//! envelope derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionKind {
    Quadrant,
    Rectangle,
}

impl CollectionKind {
    /// `d + 1` for quadrants, `2d + 1` for rectangles.
    pub fn declared_index(self, d: usize) -> usize {
        match self {
            CollectionKind::Quadrant => d + 1,
            CollectionKind::Rectangle => 2 * d + 1,
        }
    }
}

impl std::str::FromStr for CollectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrant" | "quadrants" => Ok(CollectionKind::Quadrant),
            "rect" | "rectangle" | "rectangles" => Ok(CollectionKind::Rectangle),
            other => Err(Error::Parse(format!("unknown collection {other:?}"))),
        }
    }
}

/// Probe-point search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcSearch {
    /// Grid `{0, 1/G, …, 1}^d` searched exhaustively.
    pub grid: usize,
    /// Random point sets tried per cardinality after the grid.
    pub random_restarts: usize,
    pub seed: u64,
    /// Maximum number of candidate point sets examined overall.
    pub budget: u64,
}

impl Default for VcSearch {
    fn default() -> Self {
        Self {
            grid: 4,
            random_restarts: 2000,
            seed: 0x5EED,
            budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcResult {
    pub kind: CollectionKind,
    pub dim: usize,
    /// Smallest cardinality with no shattered probe set.
    pub index: usize,
    /// Largest shattered set found (cardinality `index − 1`).
    pub witness: Vec<Vec<f64>>,
    pub candidates_examined: u64,
}

/// Whether the subset `mask` of `points` is cut out by some member.
fn realizable(kind: CollectionKind, points: &[Vec<f64>], mask: u32) -> bool {
    let d = points[0].len();
    let chosen = |j: usize| mask >> j & 1 == 1;
    if mask == 0 {
        return match kind {
            // The smallest quadrant is {0}.
            CollectionKind::Quadrant => !points.iter().any(|p| p.iter().all(|&x| x == 0.0)),
            // A degenerate rectangle at any point off the set.
            CollectionKind::Rectangle => true,
        };
    }
    // The smallest member containing the subset: coordinatewise max for
    // quadrants, bounding box for rectangles. Any member containing the
    // subset contains this one, so the subset is realizable iff this
    // witness excludes every other point.
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (j, p) in points.iter().enumerate() {
        if chosen(j) {
            for m in 0..d {
                lo[m] = lo[m].min(p[m]);
                hi[m] = hi[m].max(p[m]);
            }
        }
    }
    if kind == CollectionKind::Quadrant {
        lo.iter_mut().for_each(|x| *x = 0.0);
    }
    points
        .iter()
        .enumerate()
        .filter(|(j, _)| !chosen(*j))
        .all(|(_, p)| (0..d).any(|m| p[m] < lo[m] || p[m] > hi[m]))
}

/// All `2^n` subsets are realizable.
pub fn shattered(kind: CollectionKind, points: &[Vec<f64>]) -> bool {
    if points.is_empty() {
        return true;
    }
    let n = points.len();
    assert!(n < 32);
    (0..1u32 << n).all(|mask| realizable(kind, points, mask))
}

fn grid_points(d: usize, g: usize) -> Vec<Vec<f64>> {
    let side = g + 1;
    (0..side.pow(d as u32))
        .map(|mut n| {
            let mut p = vec![0.0; d];
            for x in p.iter_mut() {
                *x = (n % side) as f64 / g as f64;
                n /= side;
            }
            p
        })
        .collect()
}

/// Calls `f` on every `k`-combination of `0..n` until it returns true.
fn any_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        let mut j = k;
        while j > 0 && idx[j - 1] == n - k + j - 1 {
            j -= 1;
        }
        if j == 0 {
            return false;
        }
        idx[j - 1] += 1;
        for m in j..k {
            idx[m] = idx[m - 1] + 1;
        }
    }
}

/// Smallest `n` such that no probed `n`-point set is shattered.
///
/// For each cardinality the search first tries every subset of the grid,
/// then `random_restarts` uniform random sets. When the budget runs out
/// before a cardinality is settled, the error carries the lower bound
/// established so far.
pub fn vc_index(kind: CollectionKind, d: usize, search: VcSearch) -> Result<VcResult> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if search.grid == 0 {
        return Err(Error::InvalidArgument("probe grid needs at least one step".into()));
    }
    let probes = grid_points(d, search.grid);
    let mut rng = CounterRng::new(search.seed);
    let mut examined = 0u64;
    let mut witness: Vec<Vec<f64>> = Vec::new();
    for n in 1.. {
        let mut found: Option<Vec<Vec<f64>>> = None;
        let mut exhausted = false;
        any_combination(probes.len(), n, |idx| {
            examined += 1;
            if examined > search.budget {
                exhausted = true;
                return true;
            }
            let pts: Vec<Vec<f64>> = idx.iter().map(|&j| probes[j].clone()).collect();
            if shattered(kind, &pts) {
                found = Some(pts);
                return true;
            }
            false
        });
        if found.is_none() && !exhausted {
            for _ in 0..search.random_restarts {
                examined += 1;
                if examined > search.budget {
                    exhausted = true;
                    break;
                }
                let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.next_unit()).collect()).collect();
                if shattered(kind, &pts) {
                    found = Some(pts);
                    break;
                }
            }
        }
        match found {
            Some(pts) => witness = pts,
            None if exhausted => return Err(Error::BudgetExhausted { lower_bound: n }),
            None => {
                return Ok(VcResult {
                    kind,
                    dim: d,
                    index: n,
                    witness,
                    candidates_examined: examined,
                })
            }
        }
    }
    unreachable!()
}

/// `V (4e)^V (1/ε)^{2(V−1)}`: the covering-number envelope with the
/// unspecified constant set to 1.
pub fn covering_number_bound(v: usize, eps: f64) -> Result<f64> {
    if v < 2 {
        return Err(Error::InvalidArgument(format!("VC index must be at least 2, got {v}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("ε must lie in (0, 1), got {eps}")));
    }
    Ok(log_bound(v, -eps.ln()).exp())
}

/// `ln N` at `ε = e^{−u}`.
fn log_bound(v: usize, u: f64) -> f64 {
    let v = v as f64;
    v.ln() + v * (4.0 * std::f64::consts::E).ln() + 2.0 * (v - 1.0) * u
}

/// `∫_0^1 H(ε)^a dε` with `H = ln N` from the envelope, computed as
/// `∫_0^∞ H(e^{−u})^a e^{−u} du` by 64-point Gauss–Laguerre.
pub fn entropy_integral(v: usize, a: f64) -> Result<f64> {
    covering_number_bound(v, 0.5)?;
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("exponent must be positive, got {a}")));
    }
    let rule = GaussRule::from_recurrence(64, |k| 2.0 * k as f64 + 1.0, |k| (k * k) as f64, 1.0);
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(u, w)| w * log_bound(v, *u).powf(a))
        .sum())
}

/// `∫_δ^1 H(ε)^a dε` by composite Gauss–Legendre in `u = −ln ε`.
pub fn entropy_integral_truncated(v: usize, a: f64, delta: f64) -> Result<f64> {
    covering_number_bound(v, 0.5)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("lower limit must lie in (0, 1), got {delta}")));
    }
    let top = -delta.ln();
    let rule = GaussRule::legendre(32);
    let panels = (top.ceil() as usize).max(1);
    let h = top / panels as f64;
    Ok((0..panels)
        .map(|j| {
            let (lo, hi) = (j as f64 * h, (j + 1) as f64 * h);
            rule.integrate(lo, hi, |u| log_bound(v, u).powf(a) * (-u).exp())
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_indices_found() {
        let s = VcSearch::default();
        for (kind, d, want) in [
            (CollectionKind::Quadrant, 1, 2),
            (CollectionKind::Quadrant, 2, 3),
            (CollectionKind::Rectangle, 1, 3),
            (CollectionKind::Rectangle, 2, 5),
        ] {
            let r = vc_index(kind, d, s).unwrap();
            assert_eq!(r.index, want, "{kind:?} d={d}");
            assert_eq!(r.index, kind.declared_index(d));
            assert_eq!(r.witness.len(), want - 1);
            assert!(shattered(kind, &r.witness));
        }
    }

    #[test]
    fn shatter_examples() {
        let q = CollectionKind::Quadrant;
        assert!(shattered(q, &[vec![0.5]]));
        assert!(!shattered(q, &[vec![0.0]]));
        assert!(!shattered(q, &[vec![0.2], vec![0.6]]));
        assert!(shattered(q, &[vec![0.2, 0.8], vec![0.8, 0.2]]));
        let r = CollectionKind::Rectangle;
        assert!(shattered(r, &[vec![0.2], vec![0.6]]));
        assert!(!shattered(r, &[vec![0.2], vec![0.4], vec![0.6]]));
        let diamond = [vec![0.5, 0.0], vec![0.0, 0.5], vec![1.0, 0.5], vec![0.5, 1.0]];
        assert!(shattered(r, &diamond));
    }

    #[test]
    fn budget_reports_lower_bound() {
        let s = VcSearch {
            budget: 30,
            ..VcSearch::default()
        };
        match vc_index(CollectionKind::Rectangle, 2, s) {
            Err(Error::BudgetExhausted { lower_bound }) => assert!(lower_bound >= 2),
            other => panic!("{other:?}"),
        }
        assert!(vc_index(CollectionKind::Quadrant, 3, VcSearch::default()).is_err());
    }

    #[test]
    fn covering_bound_values() {
        let e4 = 4.0 * std::f64::consts::E;
        let b = covering_number_bound(2, 0.5).unwrap();
        assert!((b - 2.0 * e4 * e4 * 4.0).abs() < 1e-9 * b);
        let mut last = f64::INFINITY;
        for eps in [0.01, 0.1, 0.3, 0.9] {
            let b = covering_number_bound(5, eps).unwrap();
            assert!(b < last);
            last = b;
        }
        assert!(covering_number_bound(1, 0.5).is_err());
        assert!(covering_number_bound(3, 1.0).is_err());
    }

    #[test]
    fn entropy_integrals_converge() {
        for v in [2, 3, 5, 9] {
            for a in [0.5, 1.0 / 3.0] {
                let full = entropy_integral(v, a).unwrap();
                let mut last = 0.0;
                for delta in [1e-2, 1e-4, 1e-8, 1e-16] {
                    let t = entropy_integral_truncated(v, a, delta).unwrap();
                    assert!(t > last && t < full + 1e-12);
                    last = t;
                }
                assert!((full - last).abs() < 1e-6 * full, "V={v} a={a}: {full} {last}");
            }
        }
    }
}
