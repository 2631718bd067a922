//! Binomial confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// Result of a Monte Carlo proportion estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub level: f64,
}

impl McEstimate {
    pub fn new(hits: u64, trials: u64, level: f64, seed: u64) -> Self {
        let (ci_low, ci_high) = clopper_pearson(hits, trials, level);
        let p_hat = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
        McEstimate {
            hits,
            trials,
            p_hat,
            ci_low: ci_low.min(p_hat),
            ci_high: ci_high.max(p_hat),
            seed,
            level,
        }
    }

    pub fn covers(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    /// Binomial standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

/// Exact two-sided Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(k <= n, "hits exceed trials");
    assert!(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    if n == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    // P(X >= k | p) = I_p(k, n - k + 1), increasing in p.
    let low = if k == 0 {
        0.0
    } else {
        solve_increasing(|p| beta_reg(kf, nf - kf + 1.0, p), alpha / 2.0)
    };
    // P(X <= k | p) = 1 - I_p(k + 1, n - k), decreasing in p.
    let high = if k == n {
        1.0
    } else {
        solve_increasing(|p| beta_reg(kf + 1.0, nf - kf, p), 1.0 - alpha / 2.0)
    };
    (low, high)
}

fn solve_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct binomial tail by summing probabilities in log space.
    fn tail_ge(k: u64, n: u64, p: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        (k..=n)
            .map(|j| {
                let (j, nf) = (j as f64, n as f64);
                (ln_gamma(nf + 1.0) - ln_gamma(j + 1.0) - ln_gamma(nf - j + 1.0)
                    + j * p.ln()
                    + (nf - j) * (1.0 - p).ln())
                .exp()
            })
            .sum()
    }

    #[test]
    fn endpoints_solve_tail_equations() {
        let (k, n, level) = (7, 40, 0.99);
        let (lo, hi) = clopper_pearson(k, n, level);
        assert!((tail_ge(k, n, lo) - 0.005).abs() < 1e-9);
        assert!(((1.0 - tail_ge(k + 1, n, hi)) - 0.005).abs() < 1e-9);
    }

    #[test]
    fn known_value_zero_hits() {
        // k = 0: upper endpoint solves (1 - p)^n = alpha / 2.
        let (lo, hi) = clopper_pearson(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-12);
        let (lo, hi) = clopper_pearson(100, 100, 0.95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(0.01)).abs() < 1e-12);
    }

    #[test]
    fn estimate_ordering() {
        for (k, n) in [(0, 10), (3, 10), (10, 10), (12_711, 100_000)] {
            let e = McEstimate::new(k, n, 0.99, 1);
            assert!(e.ci_low <= e.p_hat && e.p_hat <= e.ci_high);
        }
    }
}
