//! Set-indexed smoothed partial sums `S_n(A) = Σ_{i∈{1..n}^d} λ(nA ∩ R_i) X_i`
//! with `R_i = ]i − 1, i]` coordinatewise, and checks of their Brownian
//! covariance structure.

mod sets;
mod vc;

pub use sets::{rho, IndexSet};
pub use vc::{
    covering_number_bound, entropy_integral, entropy_integral_truncated, shattered, vc_index, CollectionKind,
    VcResult, VcSearch,
};

use serde::{Deserialize, Serialize};

use crate::dependence;
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::lattice::LatticePoint;
use crate::noise::{Innovations, NoiseField};
use crate::rng;
use crate::stats;

/// A finite family of index sets of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCollection {
    pub kind: CollectionKind,
    pub dim: usize,
    pub sets: Vec<IndexSet>,
}

impl SetCollection {
    pub fn declared_index(&self) -> usize {
        self.kind.declared_index(self.dim)
    }
}

/// `|]i − 1, i] ∩ [lo, hi]|` clamped to `[0, 1]`.
#[inline]
fn overlap(lo: f64, hi: f64, i: i64) -> f64 {
    (hi.min(i as f64) - lo.max((i - 1) as f64)).clamp(0.0, 1.0)
}

/// `λ(nA ∩ R_i)` for `i ∈ {1..n}^d`.
pub fn cell_measure(a: &IndexSet, n: usize, i: &LatticePoint) -> Result<f64> {
    if i.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: i.dim(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if i.coords().iter().any(|&c| c < 1 || c > n as i64) {
        return Err(Error::OutOfRange(format!("cell {i} is outside {{1..{n}}}^{}", a.dim())));
    }
    let s = a.lower();
    let nf = n as f64;
    Ok((0..a.dim())
        .map(|m| overlap(nf * s[m], nf * a.upper()[m], i.coords()[m]))
        .product())
}

/// Per-axis weights `w_m(i) = λ_1(n[s_m, t_m] ∩ ]i − 1, i])`, `i = 1..n`.
fn axis_weights(a: &IndexSet, n: usize) -> Vec<Vec<f64>> {
    let s = a.lower();
    let nf = n as f64;
    (0..a.dim())
        .map(|m| (1..=n as i64).map(|i| overlap(nf * s[m], nf * a.upper()[m], i)).collect())
        .collect()
}

/// Per-axis indicators of `n s_m ≤ i ≤ n t_m`.
fn axis_indicators(a: &IndexSet, n: usize) -> Vec<Vec<f64>> {
    let s = a.lower();
    let nf = n as f64;
    (0..a.dim())
        .map(|m| {
            (1..=n)
                .map(|i| {
                    let i = i as f64;
                    if nf * s[m] <= i && i <= nf * a.upper()[m] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Dense product weights over `{1..n}^d`, first coordinate most significant.
fn tensor(axes: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for w in axes {
        let mut next = Vec::with_capacity(out.len() * w.len());
        for &o in &out {
            for &x in w {
                next.push(o * x);
            }
        }
        out = next;
    }
    out
}

/// Dense `λ(nA ∩ R_i)` over the grid.
pub fn cell_weights(a: &IndexSet, n: usize) -> Vec<f64> {
    tensor(&axis_weights(a, n))
}

/// Dense indicator of `Γ_n(A) = nA ∩ {1..n}^d`.
pub fn discrete_weights(a: &IndexSet, n: usize) -> Vec<f64> {
    tensor(&axis_indicators(a, n))
}

/// Grid point with dense index `idx`.
fn grid_point(idx: usize, n: usize, d: usize, out: &mut [i64]) {
    let mut r = idx;
    for m in (0..d).rev() {
        out[m] = (r % n) as i64 + 1;
        r /= n;
    }
}

/// Field values over `{1..n}^d` in dense order.
pub fn grid_values<N: Innovations + ?Sized>(model: &FieldModel, noise: &N, n: usize) -> Vec<f64> {
    let d = model.dim();
    let mut c = vec![0i64; d];
    (0..n.pow(d as u32))
        .map(|idx| {
            grid_point(idx, n, d, &mut c);
            model.eval(noise, &c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSum {
    pub n: usize,
    pub set: IndexSet,
    pub value: f64,
}

/// `S_n(A)`, visiting only the bounding box of cells with positive weight.
pub fn smoothed_sum<N: Innovations + ?Sized>(
    model: &FieldModel,
    noise: &N,
    a: &IndexSet,
    n: usize,
) -> Result<SmoothedSum> {
    if a.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: a.dim(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let axes = axis_weights(a, n);
    let ranges: Vec<(usize, usize)> = axes
        .iter()
        .map(|w| {
            let first = w.iter().position(|&x| x > 0.0);
            let last = w.iter().rposition(|&x| x > 0.0);
            match (first, last) {
                (Some(f), Some(l)) => (f, l + 1),
                _ => (0, 0),
            }
        })
        .collect();
    let d = a.dim();
    let mut value = 0.0;
    if ranges.iter().all(|(lo, hi)| hi > lo) {
        let counts: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo).collect();
        let total: usize = counts.iter().product();
        let mut c = vec![0i64; d];
        for mut idx in 0..total {
            let mut w = 1.0;
            for m in (0..d).rev() {
                let j = ranges[m].0 + idx % counts[m];
                idx /= counts[m];
                c[m] = j as i64 + 1;
                w *= axes[m][j];
            }
            value += w * model.eval(noise, &c);
        }
    }
    Ok(SmoothedSum {
        n,
        set: a.clone(),
        value,
    })
}

/// `Σ_i u_i v_{i+k}` over grid pairs with both ends in `{1..n}^d`.
fn grid_cross(u: &[f64], v: &[f64], n: usize, d: usize, k: &[i64]) -> f64 {
    let mut c = vec![0i64; d];
    let mut acc = 0.0;
    for (idx, &x) in u.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        grid_point(idx, n, d, &mut c);
        let mut j = 0usize;
        let mut inside = true;
        for m in 0..d {
            let t = c[m] + k[m];
            if t < 1 || t > n as i64 {
                inside = false;
                break;
            }
            j = j * n + (t - 1) as usize;
        }
        if inside {
            acc += x * v[j];
        }
    }
    acc
}

/// `E[(Σ u_i X_i)(Σ v_j X_j)]` from the exact autocovariances.
fn exact_cross(model: &FieldModel, u: &[f64], v: &[f64], n: usize) -> Result<f64> {
    let gammas = model.autocovariances()?;
    Ok(gammas
        .iter()
        .map(|(k, g)| g * grid_cross(u, v, n, model.dim(), k.coords()))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub a: IndexSet,
    pub b: IndexSet,
    /// `σ² λ(A ∩ B)`.
    pub target: f64,
    /// Exact `n^{−d} cov(S_n(A), S_n(B))` at this `n`.
    pub finite_n: f64,
    pub covariance: f64,
    pub se: f64,
    /// `|covariance − target| / se`.
    pub z: f64,
    pub within_3se: bool,
    /// `|covariance − finite_n| / se`.
    pub z_finite_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdCovarianceReport {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub longrun_variance: f64,
    pub rows: Vec<CovarianceRow>,
    pub pass: bool,
}

pub const MIN_FD_REPLICATES: usize = 2000;

/// Replicate covariances of `(n^{−d/2} S_n(A), n^{−d/2} S_n(B))` against the
/// Brownian limit `σ² λ(A ∩ B)`.
pub fn fd_covariance_check(
    model: &FieldModel,
    n: usize,
    pairs: &[(IndexSet, IndexSet)],
    replicates: usize,
    seed: u64,
) -> Result<FdCovarianceReport> {
    if replicates < MIN_FD_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_FD_REPLICATES} replicates, got {replicates}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let d = model.dim();
    for (a, b) in pairs {
        for s in [a, b] {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.dim(),
                });
            }
        }
    }
    if model.is_degenerate()? {
        return Err(Error::Degenerate("long-run variance is zero".into()));
    }
    let sigma2 = model.longrun_variance_exact()?;
    let weights: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|(a, b)| (cell_weights(a, n), cell_weights(b, n))).collect();
    let scale = (n as f64).powi(d as i32).sqrt();
    let sums: Vec<Vec<(f64, f64)>> = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let x = grid_values(model, &f, n);
        let dot = |w: &[f64]| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / scale;
        weights.iter().map(|(wa, wb)| (dot(wa), dot(wb))).collect()
    });
    let mut rows = Vec::new();
    for (j, ((a, b), (wa, wb))) in pairs.iter().zip(&weights).enumerate() {
        let xa: Vec<f64> = sums.iter().map(|s| s[j].0).collect();
        let xb: Vec<f64> = sums.iter().map(|s| s[j].1).collect();
        let (ma, mb) = (stats::mean(&xa), stats::mean(&xb));
        let prods: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let nr = replicates as f64;
        let covariance = stats::mean(&prods) * nr / (nr - 1.0);
        let se = stats::standard_error(&prods);
        let target = sigma2 * a.intersection_measure(b)?;
        let finite_n = exact_cross(model, wa, wb, n)? / (scale * scale);
        let z = (covariance - target).abs() / se;
        rows.push(CovarianceRow {
            a: a.clone(),
            b: b.clone(),
            target,
            finite_n,
            covariance,
            se,
            z,
            within_3se: z <= 3.0,
            z_finite_n: (covariance - finite_n).abs() / se,
        });
    }
    let pass = rows.iter().all(|r| r.within_3se);
    Ok(FdCovarianceReport {
        n,
        replicates,
        seed,
        longrun_variance: sigma2,
        rows,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedGapReport {
    pub set: IndexSet,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// `|W_n|`: cells meeting both `nA` and its complement.
    pub boundary_cells: usize,
    /// `|Γ_n(A)|`.
    pub discrete_size: usize,
    pub measure: f64,
    /// `||Γ_n(A)|/n^d − λ(A)| ≤ |W_n|/n^d`.
    pub count_within_boundary: bool,
    /// Monte Carlo `n^{−d/2} ‖S_n(A) − S_{Γ_n(A)}‖_2`.
    pub gap: f64,
    pub se: f64,
    /// Exact value when the model has closed-form autocovariances.
    pub gap_exact: Option<f64>,
    pub stability: f64,
    /// `2 Δ_2 √|W_n| / n^{d/2}`.
    pub bound: f64,
    pub pass: bool,
}

/// `|W_n|`, counted axis by axis: cells meeting `nA` minus cells inside it.
pub fn boundary_cell_count(a: &IndexSet, n: usize) -> usize {
    let s = a.lower();
    let nf = n as f64;
    let mut meets = 1usize;
    let mut inside = 1usize;
    for (&sm, &tm) in s.iter().zip(a.upper()) {
        let (lo, hi) = (nf * sm, nf * tm);
        let (mut mc, mut ic) = (0, 0);
        for i in 1..=n {
            let i = i as f64;
            if lo <= i && i - 1.0 < hi {
                mc += 1;
            }
            if lo <= i - 1.0 && i <= hi {
                ic += 1;
            }
        }
        meets *= mc;
        inside *= ic;
    }
    meets - inside
}

/// Compares the smoothed sum with the plain sum over `Γ_n(A)`.
pub fn discrete_smoothed_gap(
    model: &FieldModel,
    a: &IndexSet,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<SmoothedGapReport> {
    if a.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: a.dim(),
        });
    }
    if n == 0 || replicates < 2 {
        return Err(Error::InvalidArgument("need n ≥ 1 and at least two replicates".into()));
    }
    let d = a.dim();
    let smooth = cell_weights(a, n);
    let discrete = discrete_weights(a, n);
    let diff: Vec<f64> = smooth.iter().zip(&discrete).map(|(x, y)| x - y).collect();
    let grid = (n as f64).powi(d as i32);
    let scale = grid.sqrt();
    let sq = stats::replicates(replicates, |r| {
        let f = NoiseField::new(model.noise, seed, r as u64);
        let x = grid_values(model, &f, n);
        let g: f64 = diff.iter().zip(&x).map(|(w, v)| w * (v - model.mean)).sum();
        g * g
    });
    let (norm, se) = stats::pnorm_with_se(&sq, 2.0);
    let gap_exact = exact_cross(model, &diff, &diff, n).ok().map(|v| v.max(0.0).sqrt() / scale);
    let (stability, _) = dependence::stability(model, 2.0, replicates.max(1000), rng::derive_seed(seed, 0xD2))?;
    let boundary_cells = boundary_cell_count(a, n);
    let bound = 2.0 * stability * (boundary_cells as f64).sqrt() / scale;
    let discrete_size = discrete.iter().filter(|&&x| x == 1.0).count();
    let measure = a.measure();
    let gap = norm / scale;
    let se = se / scale;
    Ok(SmoothedGapReport {
        set: a.clone(),
        n,
        replicates,
        seed,
        boundary_cells,
        discrete_size,
        measure,
        count_within_boundary: (discrete_size as f64 / grid - measure).abs() <= boundary_cells as f64 / grid,
        gap,
        se,
        gap_exact,
        stability,
        bound,
        pass: gap <= bound + 3.0 * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::LinearKernel;
    use crate::lattice::{make_domain, DomainShape};
    use crate::noise::NoiseSpec;

    fn q(t: &[f64]) -> IndexSet {
        IndexSet::quadrant(t.to_vec()).unwrap()
    }

    #[test]
    fn cell_measure_examples() {
        let full = IndexSet::unit(2);
        assert_eq!(cell_measure(&full, 7, &LatticePoint::from([3, 5])).unwrap(), 1.0);
        let a = q(&[0.5]);
        assert_eq!(cell_measure(&a, 10, &LatticePoint::from([5])).unwrap(), 1.0);
        assert_eq!(cell_measure(&a, 10, &LatticePoint::from([6])).unwrap(), 0.0);
        let a = q(&[0.55]);
        assert!((cell_measure(&a, 10, &LatticePoint::from([6])).unwrap() - 0.5).abs() < 1e-12);
        assert!(cell_measure(&a, 10, &LatticePoint::from([0])).is_err());
        assert!(cell_measure(&a, 10, &LatticePoint::from([11])).is_err());
    }

    #[test]
    fn dense_weights_match_cell_measure() {
        let a = IndexSet::rectangle(vec![0.13, 0.4], vec![0.71, 0.92]).unwrap();
        let n = 9;
        let w = cell_weights(&a, n);
        let mut c = vec![0i64; 2];
        for (idx, &x) in w.iter().enumerate() {
            grid_point(idx, n, 2, &mut c);
            assert_eq!(x, cell_measure(&a, n, &LatticePoint::new(c.clone()).unwrap()).unwrap());
        }
        assert!((w.iter().sum::<f64>() - 81.0 * a.measure()).abs() < 1e-12);
    }

    #[test]
    fn smoothed_sums() {
        let m = FieldModel::linear(LinearKernel::moving_average(2, &[1.0, 1.0]).unwrap(), NoiseSpec::normal());
        let f = NoiseField::new(m.noise, 8, 0);
        let n = 12;
        let full = smoothed_sum(&m, &f, &IndexSet::unit(2), n).unwrap().value;
        let g = make_domain(&DomainShape::Box { n, d: 2 }).unwrap();
        let direct: f64 = m.eval_domain(&f, &g).unwrap().iter().sum();
        assert!((full - direct).abs() < 1e-10);
        let flat = IndexSet::rectangle(vec![0.2, 0.5], vec![0.7, 0.5]).unwrap();
        assert_eq!(smoothed_sum(&m, &f, &flat, n).unwrap().value, 0.0);
        // d = 1, iid field: weights from cell_measure, summed independently.
        let id = FieldModel::linear(LinearKernel::identity(1).unwrap(), NoiseSpec::normal());
        let a = q(&[0.437]);
        let s = smoothed_sum(&id, &f, &a, 40).unwrap().value;
        let oracle: f64 = (1..=40)
            .map(|i| cell_measure(&a, 40, &LatticePoint::from([i])).unwrap() * f.value(&[i]))
            .sum();
        assert!((s - oracle).abs() < 1e-12);
        // Additivity: S([0,t]) − S([0,s]) = S([s,t]).
        let (s0, t0) = (0.21, 0.86);
        let diff = smoothed_sum(&id, &f, &q(&[t0]), 40).unwrap().value - smoothed_sum(&id, &f, &q(&[s0]), 40).unwrap().value;
        let rect = smoothed_sum(&id, &f, &IndexSet::rectangle(vec![s0], vec![t0]).unwrap(), 40).unwrap().value;
        assert!((diff - rect).abs() < 1e-12);
    }

    #[test]
    fn fd_covariances() {
        let id = FieldModel::linear(LinearKernel::identity(1).unwrap(), NoiseSpec::normal());
        let pairs = vec![
            (q(&[0.3]), IndexSet::rectangle(vec![0.5], vec![0.9]).unwrap()),
            (IndexSet::unit(1), IndexSet::unit(1)),
        ];
        let rep = fd_covariance_check(&id, 64, &pairs, 4000, 3).unwrap();
        assert_eq!(rep.rows[0].target, 0.0);
        assert_eq!(rep.rows[0].finite_n, 0.0);
        assert!(rep.rows[0].within_3se, "{:?}", rep.rows[0]);
        assert!((rep.rows[1].finite_n - 1.0).abs() < 1e-12);
        assert!(fd_covariance_check(&id, 64, &pairs, 100, 3).is_err());
    }

    #[test]
    fn smoothed_gap() {
        let m = FieldModel::linear(LinearKernel::moving_average(2, &[1.0, 1.0]).unwrap(), NoiseSpec::normal());
        let full = discrete_smoothed_gap(&m, &IndexSet::unit(2), 8, 200, 1).unwrap();
        assert_eq!(full.gap, 0.0);
        assert_eq!(full.boundary_cells, 0);
        let a = q(&[0.5, 0.5]);
        let mut last = f64::INFINITY;
        for n in [8, 16, 32] {
            let rep = discrete_smoothed_gap(&m, &a, n, 1000, 2).unwrap();
            assert_eq!(rep.boundary_cells, 0, "cells align with nA at even n");
            assert!(rep.count_within_boundary && rep.pass);
            assert!(rep.gap <= last);
            last = rep.gap;
        }
        let b = q(&[0.53, 0.31]);
        for n in [8, 16, 32] {
            let rep = discrete_smoothed_gap(&m, &b, n, 2000, 2).unwrap();
            // One partial column and one partial row.
            let want = (n as f64 * 0.53).ceil() as usize + (n as f64 * 0.31).ceil() as usize - 1;
            assert_eq!(rep.boundary_cells, want, "n={n}");
            assert!(rep.count_within_boundary && rep.pass, "{rep:?}");
            assert!(rep.gap_exact.unwrap() <= rep.bound);
            assert!((rep.gap - rep.gap_exact.unwrap()).abs() < 4.0 * rep.se);
        }
    }
}
