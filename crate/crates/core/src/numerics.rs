//! Small numerical building blocks shared by the other modules: Gauss–Legendre
//! rules, Legendre recurrences, monotone cubic interpolation, log–log slope
//! fits and the Kolmogorov–Smirnov distribution.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in increasing order.
///
/// Newton iteration on the three-term recurrence, seeded with the
/// Tricomi-style asymptotic guess. Costs O(n²), which stays cheap for the
/// few-thousand-node rules the sphere grids need.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // i-th root from the right end maps to index n-1-i.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the Bonnet recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[lo, hi]`.
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

/// Values `P_0(x) ..= P_lmax(x)`.
pub fn legendre_table(x: f64, lmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(1.0);
    if lmax >= 1 {
        out.push(x);
    }
    for l in 2..=lmax {
        let lf = l as f64;
        let p = ((2.0 * lf - 1.0) * x * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
        out.push(p);
    }
    out
}

/// Associated Legendre function `P_l^m(x)` for `0 <= m <= l`, without the
/// Condon–Shortley phase.
pub fn associated_legendre(l: usize, m: usize, x: f64) -> f64 {
    assert!(m <= l);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= fact * s;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmm1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2 * ll - 1) as f64 * pmm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmm1;
        pmm1 = pll;
    }
    pll
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` must be strictly increasing and `ys` monotone.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = delta[0];
        slopes[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                slopes[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Self { xs, ys, slopes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Ordinary least-squares `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test: `(D, p-value)` for `samples` against
/// the continuous CDF `cdf`. `n_eff` replaces the sample size in the
/// asymptotic p-value (use the sample count for unweighted data).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, n_eff: f64) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    (d, ks_pvalue(d, n_eff))
}

/// Weighted variant: the empirical CDF puts mass `w_i / Σw` on sample `i`.
pub fn ks_test_weighted(samples: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let total: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = total * total / sq;
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for &i in &idx {
        let f = cdf(samples[i]);
        let lo = acc / total;
        acc += weights[i];
        let hi = acc / total;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    (d, ks_pvalue(d, n_eff))
}

fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Reduce `x` into `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed representative of `x` in `[-period/2, period/2)`.
pub fn wrap_signed(x: f64, period: f64) -> f64 {
    let r = wrap(x + 0.5 * period, period) - 0.5 * period;
    if r >= 0.5 * period {
        r - period
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn gauss_legendre_large_rule_is_sorted_and_positive() {
        let (x, w) = gauss_legendre(2000);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(w.iter().all(|&v| v > 0.0));
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let q: f64 = x.iter().zip(&w).map(|(a, b)| b * (3.0 * a).cos()).sum();
        assert!((q - 2.0 * 3f64.sin() / 3.0).abs() < 1e-13);
    }

    #[test]
    fn associated_legendre_matches_closed_forms() {
        let x: f64 = 0.3;
        let s = (1.0 - x * x).sqrt();
        assert!((associated_legendre(2, 0, x) - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-15);
        assert!((associated_legendre(2, 1, x) - 3.0 * x * s).abs() < 1e-15);
        assert!((associated_legendre(2, 2, x) - 3.0 * s * s).abs() < 1e-15);
        assert!((associated_legendre(3, 0, x) - legendre_table(x, 3)[3]).abs() < 1e-15);
    }

    #[test]
    fn monotone_cubic_reproduces_nodes_and_stays_monotone() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x + x).collect();
        let p = MonotoneCubic::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((p.eval(*x) - y).abs() < 1e-14);
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let v = p.eval(1.9 * i as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.0098.
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn wrap_helpers() {
        assert_eq!(wrap(-0.5, 2.0), 1.5);
        assert!((wrap_signed(1.5, 2.0) + 0.5).abs() < 1e-15);
        assert!((wrap_signed(-0.25, 2.0) + 0.25).abs() < 1e-15);
    }
}
