//! Metrics, measures and samplers on `R^n` and `S^n`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_for, streams};

/// `R^n` or the unit sphere `S^n ⊂ R^{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "lowercase")]
pub enum AmbientSpace {
    Euclidean(usize),
    Sphere(usize),
}

impl AmbientSpace {
    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        match *self {
            AmbientSpace::Euclidean(n) | AmbientSpace::Sphere(n) => n,
        }
    }

    /// Number of coordinates of a point.
    pub fn coords(&self) -> usize {
        match *self {
            AmbientSpace::Euclidean(n) => n,
            AmbientSpace::Sphere(n) => n + 1,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, AmbientSpace::Sphere(_))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("ambient dimension must be at least 1"));
        }
        Ok(())
    }

    /// Checks that `x` is a point of this space.
    pub fn check_point(&self, x: &[f64], unit_tol: f64) -> Result<()> {
        if x.len() != self.coords() {
            return Err(Error::DimensionMismatch {
                expected: self.coords(),
                got: x.len(),
            });
        }
        if self.is_sphere() {
            let r = norm(x);
            if (r - 1.0).abs() > unit_tol {
                return Err(invalid(format!("point has norm {r}, expected a unit vector")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AmbientSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmbientSpace::Euclidean(n) => write!(f, "R^{n}"),
            AmbientSpace::Sphere(n) => write!(f, "S^{n}"),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Geodesic distance between unit vectors, without validation.
pub(crate) fn geodesic(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

pub(crate) fn metric(space: AmbientSpace, a: &[f64], b: &[f64]) -> f64 {
    if space.is_sphere() {
        geodesic(a, b)
    } else {
        euclid(a, b)
    }
}

/// Distance in the metric of `space`: Euclidean norm or arc length.
pub fn dist(space: AmbientSpace, a: &[f64], b: &[f64]) -> Result<f64> {
    space.check_point(a, 1e-9)?;
    space.check_point(b, 1e-9)?;
    Ok(metric(space, a, b))
}

/// Sine of the angle between two unit vectors.
pub fn d_sin(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if (na - 1.0).abs() > 1e-6 || (nb - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("d_sin needs unit vectors, got norms {na} and {nb}")));
    }
    // |a ∧ b| is invariant under a ↔ b and a ↦ -a term by term.
    let mut w = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let c = a[i] * b[j] - a[j] * b[i];
            w += c * c;
        }
    }
    Ok((w.sqrt() / (na * nb)).min(1.0))
}

/// `vol(S^n) = 2π^{(n+1)/2} / Γ((n+1)/2)`.
pub fn sphere_volume(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 16;
        let mut rule = Vec::with_capacity(N);
        for i in 0..N {
            let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn gl_fixed(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(c + h * x))
        .sum::<f64>()
}

fn gl_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gl_fixed(f, a, m), gl_fixed(f, m, b));
    if depth == 0 || (l + r - whole).abs() <= tol {
        return l + r;
    }
    gl_adaptive(f, a, m, l, 0.5 * tol, depth - 1) + gl_adaptive(f, m, b, r, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Legendre quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gl_fixed(&f, a, b);
    gl_adaptive(&f, a, b, whole, tol, 40)
}

/// `J_{n,k}(ε) = ∫_0^{min(ε, π/2)} sin^{k-1}θ cos^{n-k}θ dθ`, with
/// `J_{n,0} = 1`.
pub fn j_integral(n: usize, k: usize, eps: f64) -> Result<f64> {
    if k > n {
        return Err(invalid(format!("J needs k <= n, got k = {k}, n = {n}")));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(invalid(format!("J needs eps >= 0, got {eps}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let upper = eps.min(FRAC_PI_2);
    let (a, b) = ((k - 1) as i32, (n - k) as i32);
    Ok(integrate(|t| t.sin().powi(a) * t.cos().powi(b), 0.0, upper, 1e-13))
}

/// Volume of the geodesic cap `B(p, σ) ⊂ S^n`, `vol(S^{n-1}) J_{n,n}(σ)`.
pub fn cap_volume(n: usize, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= FRAC_PI_2) {
        return Err(invalid(format!("cap radius must lie in (0, π/2], got {sigma}")));
    }
    if n == 0 {
        return Err(invalid("cap volume needs n >= 1"));
    }
    Ok(sphere_volume(n - 1) * j_integral(n, n, sigma)?)
}

/// Probability that a uniformly rotated great subsphere `S^{n-m+i}` meets a
/// cap of radius `σ` in `S^n`.
pub fn subsphere_cap_prob(n: usize, m: usize, i: usize, sigma: f64) -> Result<f64> {
    if !(i <= m && m < n) {
        return Err(invalid(format!("need 0 <= i <= m < n, got i = {i}, m = {m}, n = {n}")));
    }
    if !(sigma > 0.0) {
        return Err(invalid(format!("cap radius must be positive, got {sigma}")));
    }
    if i == m || sigma >= FRAC_PI_2 {
        return Ok(1.0);
    }
    let (nf, k) = (n as f64, (m - i) as f64);
    let log_c = 2f64.ln() + ln_gamma((nf + 1.0) / 2.0)
        - ln_gamma((nf - k + 1.0) / 2.0)
        - ln_gamma(k / 2.0);
    Ok((log_c.exp() * j_integral(n, m - i, sigma)?).min(1.0))
}

/// A finite set of points of one ambient space.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    space: AmbientSpace,
    points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(space: AmbientSpace, points: Vec<Vec<f64>>) -> Result<Self> {
        for p in &points {
            space.check_point(p, 1e-9)?;
        }
        Ok(PointCloud { space, points })
    }

    pub fn empty(space: AmbientSpace) -> Self {
        PointCloud {
            space,
            points: Vec::new(),
        }
    }

    pub fn space(&self) -> AmbientSpace {
        self.space
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the nearest point of the cloud (`∞` if empty).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| metric(self.space, x, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// One point per line, coordinates comma separated.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{}", row.join(",")).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Symmetric Hausdorff distance together with both directed parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hausdorff {
    pub value: f64,
    /// `sup_{a ∈ A} dist(a, B)`.
    pub a_to_b: f64,
    /// `sup_{b ∈ B} dist(b, A)`.
    pub b_to_a: f64,
}

/// `sup_{a ∈ A} min_{b ∈ B} dist(a, b)`.
pub fn directed_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.space != b.space {
        return Err(Error::WrongSpace(format!("{} vs {}", a.space, b.space)));
    }
    if a.is_empty() || b.is_empty() {
        return Err(invalid("Hausdorff distance of an empty cloud"));
    }
    Ok(a.points
        .par_iter()
        .map(|p| b.distance_to(p))
        .reduce(|| 0.0, f64::max))
}

pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> Result<Hausdorff> {
    let a_to_b = directed_distance(a, b)?;
    let b_to_a = directed_distance(b, a)?;
    Ok(Hausdorff {
        value: a_to_b.max(b_to_a),
        a_to_b,
        b_to_a,
    })
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform point on the unit sphere of `R^n`.
pub(crate) fn unit_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vec(rng, n);
        let r = norm(&g);
        if r > 1e-300 {
            return g.into_iter().map(|v| v / r).collect();
        }
    }
}

/// One uniform point of the Euclidean ball `B(p, σ)`.
pub fn ball_point(rng: &mut impl Rng, p: &[f64], sigma: f64) -> Vec<f64> {
    let n = p.len();
    let dir = unit_vec(rng, n);
    let r = sigma * rng.random::<f64>().powf(1.0 / n as f64);
    p.iter().zip(dir).map(|(c, d)| c + r * d).collect()
}

/// `count` i.i.d. uniform points of `B(p, σ) ⊂ R^n`; point `i` depends only on
/// `(seed, i)`.
pub fn sample_ball(p: &[f64], sigma: f64, count: usize, seed: u64) -> Result<PointCloud> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("ball radius must be positive, got {sigma}")));
    }
    let points = (0..count)
        .into_par_iter()
        .map(|i| ball_point(&mut rng_for(seed, streams::BALL, i as u64), p, sigma))
        .collect();
    Ok(PointCloud {
        space: AmbientSpace::Euclidean(p.len()),
        points,
    })
}

/// Inverse-CDF sampler for uniform points of a geodesic cap in `S^n`.
#[derive(Clone, Debug)]
pub struct CapSampler {
    n: usize,
    sigma: f64,
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

const CAP_KNOTS: usize = 256;

impl CapSampler {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("cap sampling needs n >= 1"));
        }
        if !(sigma > 0.0 && sigma <= PI) {
            return Err(invalid(format!("cap radius must lie in (0, π], got {sigma}")));
        }
        let knots: Vec<f64> = (0..=CAP_KNOTS)
            .map(|j| sigma * j as f64 / CAP_KNOTS as f64)
            .collect();
        let mut cdf = Vec::with_capacity(knots.len());
        cdf.push(0.0);
        for w in knots.windows(2) {
            let prev = *cdf.last().unwrap();
            cdf.push(prev + gl_fixed(&|t: f64| Self::density(n, t), w[0], w[1]));
        }
        Ok(CapSampler { n, sigma, knots, cdf })
    }

    fn density(n: usize, t: f64) -> f64 {
        t.sin().powi(n as i32 - 1)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Unnormalized mass `∫_0^θ sin^{n-1}`, for `θ ∈ [0, σ]`.
    pub fn mass(&self, theta: f64) -> f64 {
        let theta = theta.clamp(0.0, self.sigma);
        let j = ((theta / self.sigma * CAP_KNOTS as f64) as usize).min(CAP_KNOTS - 1);
        self.cdf[j] + gl_fixed(&|t: f64| Self::density(self.n, t), self.knots[j], theta)
    }

    /// Normalized CDF of the polar angle.
    pub fn cdf(&self, theta: f64) -> f64 {
        self.mass(theta) / self.cdf[CAP_KNOTS]
    }

    /// Polar angle with density `∝ sin^{n-1}θ` on `[0, σ]`, from `u ∈ [0, 1)`.
    pub fn angle(&self, u: f64) -> f64 {
        let target = u * self.cdf[CAP_KNOTS];
        let j = self.cdf.partition_point(|&c| c <= target).clamp(1, CAP_KNOTS) - 1;
        let (mut lo, mut hi) = (self.knots[j], self.knots[j + 1]);
        let base = self.cdf[j];
        let f = |t: f64| base + gl_fixed(&|s: f64| Self::density(self.n, s), self.knots[j], t) - target;
        let mut t = 0.5 * (lo + hi);
        for _ in 0..60 {
            let v = f(t);
            if v > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if hi - lo < 1e-15 {
                break;
            }
            let d = Self::density(self.n, t);
            let newton = t - v / d;
            t = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }

    /// One uniform point of `B(p, σ) ⊂ S^n`.
    pub fn point(&self, rng: &mut impl Rng, p: &[f64]) -> Vec<f64> {
        let theta = self.angle(rng.random::<f64>());
        let u = tangent_direction(rng, p);
        let (c, s) = (theta.cos(), theta.sin());
        let mut x: Vec<f64> = p.iter().zip(&u).map(|(a, b)| c * a + s * b).collect();
        let r = norm(&x);
        x.iter_mut().for_each(|v| *v /= r);
        x
    }
}

/// Uniform unit vector orthogonal to the unit vector `p`.
pub(crate) fn tangent_direction(rng: &mut impl Rng, p: &[f64]) -> Vec<f64> {
    loop {
        let mut g = gaussian_vec(rng, p.len());
        let c = dot(&g, p);
        g.iter_mut().zip(p).for_each(|(v, q)| *v -= c * q);
        let r = norm(&g);
        if r > 1e-12 {
            return g.into_iter().map(|v| v / r).collect();
        }
    }
}

/// `count` i.i.d. uniform points of the cap `B(p, σ) ⊂ S^n`.
pub fn sample_cap(p: &[f64], sigma: f64, count: usize, seed: u64) -> Result<PointCloud> {
    let space = AmbientSpace::Sphere(p.len().saturating_sub(1));
    space.check_point(p, 1e-9)?;
    let sampler = CapSampler::new(space.dim(), sigma)?;
    let points = (0..count)
        .into_par_iter()
        .map(|i| sampler.point(&mut rng_for(seed, streams::CAP, i as u64), p))
        .collect();
    Ok(PointCloud { space, points })
}
