//! Small summary-statistics helpers and the parallel replicate driver.

use rayon::prelude::*;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (`n − 1` denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// `(mean(|x|^p))^{1/p}` with its jackknife standard error.
pub fn pnorm_with_se(abs_pow: &[f64], p: f64) -> (f64, f64) {
    let n = abs_pow.len();
    let total: f64 = abs_pow.iter().sum();
    let est = (total / n as f64).powf(1.0 / p);
    if n < 2 {
        return (est, f64::NAN);
    }
    let loo: Vec<f64> = abs_pow
        .iter()
        .map(|v| ((total - v) / (n - 1) as f64).max(0.0).powf(1.0 / p))
        .collect();
    let bar = mean(&loo);
    let ss: f64 = loo.iter().map(|t| (t - bar) * (t - bar)).sum();
    (est, ((n - 1) as f64 / n as f64 * ss).sqrt())
}

/// Runs `f(0..n)` on the rayon pool; results come back in index order, so
/// any later sequential reduction is independent of the thread count.
pub fn replicates<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jackknife_of_p_equal_one_is_mean_se() {
        // For p = 1 the jackknife SE of the mean equals s / √n exactly.
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let (est, se) = pnorm_with_se(&xs, 1.0);
        assert!((est - mean(&xs)).abs() < 1e-12);
        assert!((se - standard_error(&xs)).abs() < 1e-12);
    }

    #[test]
    fn replicate_order_is_stable() {
        let v = replicates(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
    }
}
