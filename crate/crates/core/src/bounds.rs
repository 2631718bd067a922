//! Closed-form upper bounds on `P(dist(x, Z) ≤ ε)`.
//!
//! Every formula is evaluated in log space with `ln Γ` for binomials and
//! factorials, then exponentiated, so queries up to `n = 50` neither overflow
//! nor lose the small-ε regime to underflow.
//!
//! Values above one are kept: each entry carries the raw value and the value
//! clamped to `[0, 1]`.

use std::f64::consts::{E, PI};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::geometry::{sphere_volume, AmbientSpace};

pub mod names {
    pub const LOTZ: &str = "lotz";
    pub const AFFINE_SUM: &str = "affine_sum";
    pub const AFFINE_PRODUCT: &str = "affine_product";
    pub const AFFINE_SMALL_EPS: &str = "affine_small_eps";
    pub const COMTE_YOMDIN: &str = "comte_yomdin";
    pub const SPHERE_CI_PRODUCT: &str = "sphere_ci_product";
    pub const SPHERE_CI_SMALL_EPS: &str = "sphere_ci_small_eps";
    pub const SPHERE_PRODUCT: &str = "sphere_product";
    pub const SPHERE_SMALL_EPS: &str = "sphere_small_eps";
    pub const SPHERE_UNIFORM_PRODUCT: &str = "sphere_uniform_product";
    pub const SPHERE_UNIFORM_SMALL_EPS: &str = "sphere_uniform_small_eps";
    pub const CONDITION_TAIL: &str = "condition_tail";
}

/// `1 + 8π³/15`, the largest value of `1 + vol(S^n)/2` over all `n`.
pub fn uniform_sphere_constant() -> f64 {
    1.0 + 8.0 * PI.powi(3) / 15.0
}

/// The parameters every bound is a function of.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundQuery {
    pub n: usize,
    pub m: usize,
    pub delta: u32,
    pub eps: f64,
    pub sigma: f64,
    pub space: AmbientSpace,
}

impl BoundQuery {
    pub fn euclidean(n: usize, m: usize, delta: u32, eps: f64, sigma: f64) -> Self {
        BoundQuery {
            n,
            m,
            delta,
            eps,
            sigma,
            space: AmbientSpace::Euclidean(n),
        }
    }

    pub fn spherical(n: usize, m: usize, delta: u32, eps: f64, sigma: f64) -> Self {
        BoundQuery {
            n,
            m,
            delta,
            eps,
            sigma,
            space: AmbientSpace::Sphere(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.space.dim() != self.n {
            return Err(invalid(format!("query n = {} but space is {}", self.n, self.space)));
        }
        if self.m >= self.n {
            return Err(invalid(format!("need m < n, got m = {}, n = {}", self.m, self.n)));
        }
        if self.delta < 1 {
            return Err(invalid("degree bound must be at least 1"));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(invalid(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and > 0, got {}", self.sigma)));
        }
        if self.space.is_sphere() {
            let half = std::f64::consts::FRAC_PI_2;
            if self.sigma > half {
                return Err(invalid(format!("spherical sigma must lie in (0, π/2], got {}", self.sigma)));
            }
            if self.eps > half {
                return Err(invalid(format!("spherical eps must lie in [0, π/2], got {}", self.eps)));
            }
        }
        Ok(())
    }

    fn require_euclidean(&self, what: &str) -> Result<()> {
        self.validate()?;
        if self.space.is_sphere() {
            return Err(Error::WrongSpace(format!("{what} needs a Euclidean query")));
        }
        Ok(())
    }

    fn require_sphere(&self, what: &str) -> Result<()> {
        self.validate()?;
        if !self.space.is_sphere() {
            return Err(Error::WrongSpace(format!("{what} needs a spherical query")));
        }
        Ok(())
    }

    /// Codimension `n - m`.
    pub fn codim(&self) -> usize {
        self.n - self.m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Precondition {
    pub name: String,
    pub ok: bool,
}

/// One evaluated formula.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEntry {
    pub name: &'static str,
    pub raw: f64,
    pub clamped: f64,
    pub preconditions: Vec<Precondition>,
}

impl BoundEntry {
    fn new(name: &'static str, raw: f64) -> Self {
        BoundEntry {
            name,
            raw,
            clamped: raw.clamp(0.0, 1.0),
            preconditions: Vec::new(),
        }
    }

    fn with(mut self, name: impl Into<String>, ok: bool) -> Self {
        self.preconditions.push(Precondition { name: name.into(), ok });
        self
    }

    pub fn preconditions_ok(&self) -> bool {
        self.preconditions.iter().all(|p| p.ok)
    }
}

/// All applicable formulas for one query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub query: BoundQuery,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn merge(&mut self, other: BoundReport) {
        self.entries.extend(other.entries);
    }
}

/// `k · ln(base)` with the convention `0 · ln(0) = 0`.
fn ln_pow(base: f64, k: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * base.ln()
    }
}

fn ln_binom(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// `4 Σ_{i=0}^m C(n, n-m+i) (2 d r/s)^{n-m+i} (1 + r/s)^{m-i}`.
fn binomial_sum(n: usize, m: usize, d: f64, r: f64, s: f64) -> f64 {
    let a = 2.0 * d * r / s;
    let b = 1.0 + r / s;
    let sum: f64 = (0..=m)
        .map(|i| {
            let k = n - m + i;
            (ln_binom(n, k) + ln_pow(a, k as f64) + ln_pow(b, (m - i) as f64)).exp()
        })
        .sum();
    4.0 * sum
}

/// `ε ≤ σ / (c m)`, vacuous when `m = 0`.
fn small_radius_ok(eps: f64, sigma: f64, c: f64, m: usize) -> bool {
    m == 0 || eps <= sigma / (c * m as f64)
}

fn small_radius_flag(m: usize) -> &'static str {
    if m == 0 {
        "small_eps(vacuous:m=0)"
    } else {
        "small_eps"
    }
}

/// Bound for smooth complete intersections of dimension `m` cut out by
/// polynomials of degree `d = δ`, with `r = ε` and `s = σ`.
pub fn lotz_bound(q: &BoundQuery) -> Result<f64> {
    q.require_euclidean("lotz bound")?;
    Ok(binomial_sum(q.n, q.m, q.delta as f64, q.eps, q.sigma))
}

/// Sum, product and (when applicable) small-ε forms of the general affine
/// bound.
pub fn affine_bounds(q: &BoundQuery) -> Result<BoundReport> {
    q.require_euclidean("affine bounds")?;
    let (n, m, delta) = (q.n as f64, q.m as f64, q.delta as f64);
    let ratio = q.eps / q.sigma;
    let codim = q.codim() as f64;

    let sum = binomial_sum(q.n, q.m, 2.0 * delta, q.eps, q.sigma);
    let lead = ln_pow(4.0 * n * delta * ratio, codim);
    let product = 4.0 * (lead + ln_pow(1.0 + (4.0 * delta + 1.0) * ratio, m)).exp();

    let mut entries = vec![
        BoundEntry::new(names::AFFINE_SUM, sum),
        BoundEntry::new(names::AFFINE_PRODUCT, product),
    ];
    if small_radius_ok(q.eps, q.sigma, 4.0 * delta + 1.0, q.m) {
        entries.push(BoundEntry::new(names::AFFINE_SMALL_EPS, 4.0 * E * lead.exp()).with(small_radius_flag(q.m), true));
    }
    Ok(BoundReport { query: *q, entries })
}

/// The bound obtained from ε-ball covering numbers, with `c = n - m`.
pub fn comte_yomdin_bound(q: &BoundQuery) -> Result<f64> {
    q.require_euclidean("comte-yomdin bound")?;
    let (nf, mf, delta) = (q.n as f64, q.m as f64, q.delta as f64);
    let c = q.codim() as f64;
    let ratio = q.eps / q.sigma;
    let ln_prefactor = nf.ln()
        + (nf - 1.0) / 2.0 * PI.ln()
        + (nf + nf / 2.0) * 2f64.ln()
        + ln_gamma(nf + 1.0)
        + 0.5 * ln_gamma(nf + 2.0)
        + ln_gamma(c / 2.0);
    Ok((ln_prefactor + ln_pow(2.0 * delta * ratio, c) + ln_pow(1.0 + (4.0 * delta + 1.0) * ratio, mf)).exp())
}

/// Shared shape of the spherical bounds:
/// `lead · (a · sin ε / sin σ)^{n-m} · (1 + b · sin ε / sin σ)^m`, and the
/// small-ε form `small_lead · (a · sin ε / sin σ)^{n-m}`.
fn sphere_pair(
    q: &BoundQuery,
    lead: f64,
    small_lead: f64,
    a: f64,
    b: f64,
    product_name: &'static str,
    small_name: &'static str,
) -> Vec<BoundEntry> {
    let ratio = q.eps.sin() / q.sigma.sin();
    let ln_lead = ln_pow(a * ratio, q.codim() as f64);
    let product = lead * (ln_lead + ln_pow(1.0 + b * ratio, q.m as f64)).exp();
    let mut out = vec![BoundEntry::new(product_name, product)];
    if small_radius_ok(q.eps.sin(), q.sigma.sin(), b, q.m) {
        out.push(BoundEntry::new(small_name, small_lead * ln_lead.exp()).with(small_radius_flag(q.m), true));
    }
    out
}

/// Spherical bound for smooth complete intersections of degree `d = δ`.
pub fn spherical_ci_bounds(q: &BoundQuery) -> Result<BoundReport> {
    q.require_sphere("spherical complete-intersection bounds")?;
    let (n, d) = (q.n as f64, q.delta as f64);
    let lead = 2.0 * (1.0 + sphere_volume(q.n) / 2.0);
    let entries = sphere_pair(
        q,
        lead,
        E * lead,
        4.0 * n * d,
        4.0 * n * d + 4.0 * d + 1.0,
        names::SPHERE_CI_PRODUCT,
        names::SPHERE_CI_SMALL_EPS,
    );
    Ok(BoundReport { query: *q, entries })
}

/// Spherical bound for arbitrary algebraic sets, in both the
/// dimension-dependent constant `1 + vol(S^n)/2` and the uniform constant
/// `1 + 8π³/15`. Both uniform forms carry the lead `2e(1 + 8π³/15)`.
pub fn spherical_general_bounds(q: &BoundQuery) -> Result<BoundReport> {
    q.require_sphere("spherical bounds")?;
    let (n, delta) = (q.n as f64, q.delta as f64);
    let (a, b) = (8.0 * n * delta, 8.0 * n * delta + 8.0 * delta + 1.0);
    let lead = 2.0 * (1.0 + sphere_volume(q.n) / 2.0);
    let mut entries = sphere_pair(
        q,
        lead,
        E * lead,
        a,
        b,
        names::SPHERE_PRODUCT,
        names::SPHERE_SMALL_EPS,
    );
    let uniform = 2.0 * E * uniform_sphere_constant();
    entries.extend(sphere_pair(
        q,
        uniform,
        uniform,
        a,
        b,
        names::SPHERE_UNIFORM_PRODUCT,
        names::SPHERE_UNIFORM_SMALL_EPS,
    ));
    Ok(BoundReport { query: *q, entries })
}

/// Every formula that applies to `q`. Complete-intersection formulas are
/// included only when `smooth_ci` is set.
pub fn all_bounds(q: &BoundQuery, smooth_ci: bool) -> Result<BoundReport> {
    q.validate()?;
    if q.space.is_sphere() {
        let mut r = BoundReport {
            query: *q,
            entries: Vec::new(),
        };
        if smooth_ci {
            r.merge(spherical_ci_bounds(q)?);
        }
        r.merge(spherical_general_bounds(q)?);
        Ok(r)
    } else {
        let mut r = BoundReport {
            query: *q,
            entries: Vec::new(),
        };
        if smooth_ci {
            r.entries.push(BoundEntry::new(names::LOTZ, lotz_bound(q)?));
        }
        r.merge(affine_bounds(q)?);
        r.entries.push(BoundEntry::new(names::COMTE_YOMDIN, comte_yomdin_bound(q)?));
        Ok(r)
    }
}

/// Tail bound for the conic condition number
/// `P{C(x) ≥ t} ≤ 2e(1 + 8π³/15)(8nδ/(ut))^{n-m}` over `x ∈ B_sin(a, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub raw: f64,
    pub clamped: f64,
    pub threshold: f64,
}

/// Smallest admissible `t`: `m(8nδ + 8δ + 1)/u`.
pub fn condition_tail_threshold(n: usize, m: usize, delta: u32, u: f64) -> f64 {
    let (n, delta) = (n as f64, delta as f64);
    m as f64 * (8.0 * n * delta + 8.0 * delta + 1.0) / u
}

pub fn condition_tail_bound(n: usize, m: usize, delta: u32, u: f64, t: f64) -> Result<TailBound> {
    if m >= n || delta < 1 {
        return Err(invalid(format!("need m < n and delta >= 1, got n = {n}, m = {m}, delta = {delta}")));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(invalid(format!("u must lie in (0, 1], got {u}")));
    }
    let threshold = condition_tail_threshold(n, m, delta, u);
    let ok = if m == 0 { t > 0.0 } else { t >= threshold };
    if !ok || !t.is_finite() {
        return Err(Error::Precondition(format!(
            "condition tail bound needs t >= {threshold} (= m(8nδ+8δ+1)/u), got t = {t}"
        )));
    }
    let lead = 2.0 * E * uniform_sphere_constant();
    let raw = lead * ln_pow(8.0 * n as f64 * delta as f64 / (u * t), (n - m) as f64).exp();
    Ok(TailBound {
        raw,
        clamped: raw.clamp(0.0, 1.0),
        threshold,
    })
}

/// Betti number bound `2 (4d)^{n-m+i}`.
pub fn beta_bound(n: usize, m: usize, d: u64, i: usize) -> Result<u64> {
    if i > m || m > n {
        return Err(invalid(format!("need 0 <= i <= m <= n, got i = {i}, m = {m}, n = {n}")));
    }
    let exp = u32::try_from(n - m + i).map_err(|_| Error::Overflow("beta bound exponent".into()))?;
    d.checked_mul(4)
        .and_then(|b| b.checked_pow(exp))
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Error::Overflow(format!("2(4·{d})^{}", n - m + i)))
}

/// Queries with `n ≤ 8`, `m < n`, `δ ≤ 4`, `σ = 1` and
/// `ε ∈ {0.01, 0.02, 0.05, 0.1, 0.2, 0.5}`.
pub fn standard_grid() -> Vec<BoundQuery> {
    let mut out = Vec::new();
    for n in 1..=8 {
        for m in 0..n {
            for delta in 1..=4 {
                for eps in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5] {
                    out.push(BoundQuery::euclidean(n, m, delta, eps, 1.0));
                }
            }
        }
    }
    out
}

/// Row of the covering-number versus product-form comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComparisonRow {
    pub query: BoundQuery,
    pub comte_yomdin: f64,
    pub affine_product: f64,
    pub ratio: f64,
}

pub fn comte_yomdin_comparison(grid: &[BoundQuery]) -> Result<Vec<ComparisonRow>> {
    grid.iter()
        .map(|q| {
            let cy = comte_yomdin_bound(q)?;
            let product = affine_bounds(q)?
                .get(names::AFFINE_PRODUCT)
                .map(|e| e.raw)
                .unwrap_or(f64::NAN);
            Ok(ComparisonRow {
                query: *q,
                comte_yomdin: cy,
                affine_product: product,
                ratio: cy / product,
            })
        })
        .collect()
}
