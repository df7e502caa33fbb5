//! Small numerical helpers shared by the estimators, oracles and experiments.

/// Neumaier's variant of Kahan compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.extend(values);
    acc.total()
}

/// Mean and unbiased (divisor `n - 1`) sample variance, both accumulated with
/// compensated summation in slice order. A single value has variance 0.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|&x| (x - mean) * (x - mean)));
    (mean, ss / (n - 1) as f64)
}

/// Sample variance together with its standard error,
/// `sqrt((m4 - (n-3)/(n-1) m2^2) / n)` with central moments `m2`, `m4`.
/// The finite-sample term keeps the error positive for balanced two-point
/// data, where the asymptotic `m4 - m2^2` vanishes.
pub fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_and_variance(values);
    let n = values.len() as f64;
    if values.len() < 2 {
        return (var, 0.0);
    }
    let m2 = var * (n - 1.0) / n;
    let m4 = compensated_sum(values.iter().map(|&x| (x - mean).powi(4))) / n;
    let se = ((m4 - (n - 3.0) / (n - 1.0) * m2 * m2).max(0.0) / n).sqrt();
    (var, se)
}

/// Linear-interpolation quantile (Hyndman and Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial(n, p) probability mass for k = 0..=n, computed from log-space terms.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let lf = ln_factorials(n);
    (0..=n)
        .map(|k| {
            // 0 * ln(0) is taken as 0 so the boundary cases p = 0 and p = 1 are exact.
            let success = if k == 0 { 0.0 } else { k as f64 * p.ln() };
            let failure = if k == n { 0.0 } else { (n - k) as f64 * (-p).ln_1p() };
            (lf[n] - lf[k] - lf[n - k] + success + failure).exp()
        })
        .collect()
}

/// Smallest `lo` and largest `hi` such that a Binomial(n, p) count lies in
/// `[lo, hi]` with tail probability at most `alpha / 2` on each side.
pub fn binomial_interval(n: usize, p: f64, alpha: f64) -> (usize, usize) {
    let pmf = binomial_pmf(n, p);
    let tail = alpha / 2.0;
    let mut lo = 0;
    let mut below = 0.0;
    while lo < n && below + pmf[lo] <= tail {
        below += pmf[lo];
        lo += 1;
    }
    let mut hi = n;
    let mut above = 0.0;
    while hi > lo && above + pmf[hi] <= tail {
        above += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn variance_uses_n_minus_one() {
        let (m, v) = mean_and_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(mean_and_variance(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn variance_error_stays_positive_for_balanced_bernoulli() {
        let values: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let (var, se) = variance_with_se(&values);
        assert!((var - 0.25).abs() < 1e-4);
        let expected = 0.25 * 2f64.sqrt() / 10_000.0;
        assert!((se / expected - 1.0).abs() < 0.05, "{se} vs {expected}");
    }

    #[test]
    fn binomial_pmf_matches_direct_formula() {
        let pmf = binomial_pmf(5, 0.3);
        let direct = [0.16807, 0.36015, 0.3087, 0.1323, 0.02835, 0.00243];
        for (a, b) in pmf.iter().zip(direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(binomial_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(3, 1.0), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn binomial_interval_covers_mass() {
        let (lo, hi) = binomial_interval(100, 0.5, 0.05);
        let pmf = binomial_pmf(100, 0.5);
        let inside: f64 = pmf[lo..=hi].iter().sum();
        assert!(inside >= 0.95);
        assert!(lo > 35 && hi < 65);
        assert_eq!(binomial_interval(10, 0.0, 0.05), (0, 0));
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 / x).collect();
        assert!((loglog_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }
}
