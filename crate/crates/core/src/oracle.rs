//! Distance to a real algebraic set, and Monte Carlo tube probabilities.
//!
//! Distances are certified from above only: a witness `y` with tiny residual
//! gives `dist(x, Z) ≤ dist(x, y)`. A Monte Carlo sample counts as a hit only
//! when such a witness lies within `ε`, so hit frequencies under-estimate the
//! true tube probability and the lower end of their confidence interval can be
//! compared directly against an upper bound.
//!
//! Interval arithmetic is used in the opposite direction, to prove that a box
//! contains no zero. That both prunes the multi-start search and settles most
//! misses without any Newton iterations.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{self, ball_point, euclid, geodesic, AmbientSpace, CapSampler, PointCloud};
use crate::interval::{eval_box, Interval};
use crate::poly::{PolySystem, SparsePoly};
use crate::rng::{rng_for, streams};
use crate::stats::McEstimate;

/// A real algebraic set with its declared dimension and degree bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct VarietySpec {
    pub system: PolySystem,
    pub space: AmbientSpace,
    /// Upper bound on the dimension of the zero set.
    pub m: usize,
    /// Upper bound on the degrees of the defining polynomials.
    pub delta: u32,
    /// The defining system is a smooth complete intersection, so the
    /// complete-intersection bounds apply with `d = δ`.
    pub smooth_ci: bool,
}

impl VarietySpec {
    pub fn new(system: PolySystem, space: AmbientSpace, m: usize, delta: u32, smooth_ci: bool) -> Result<Self> {
        let v = VarietySpec {
            system,
            space,
            m,
            delta,
            smooth_ci,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.system.is_empty() {
            return Err(Error::EmptyFamily);
        }
        if self.system.n_vars() != self.space.coords() {
            return Err(Error::DimensionMismatch {
                expected: self.space.coords(),
                got: self.system.n_vars(),
            });
        }
        if self.m >= self.space.dim() {
            return Err(invalid(format!("need m < n, got m = {}, n = {}", self.m, self.space.dim())));
        }
        if self.delta < self.system.max_degree() || self.delta == 0 {
            return Err(invalid(format!(
                "degree bound {} below the system degree {}",
                self.delta,
                self.system.max_degree()
            )));
        }
        if self.space.is_sphere() && !self.system.is_homogeneous() {
            return Err(Error::WrongSpace("polynomials on the sphere must be homogeneous".into()));
        }
        Ok(())
    }
}

/// A witness point and the distance bound it certifies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub point: Vec<f64>,
    /// `dist(x, point)` in the metric of the space.
    pub upper_bound: f64,
    /// `max_i |P_i(point)|`.
    pub residual: f64,
}

/// Search parameters for [`DistanceOracle::project`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions {
            restarts: 50,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Outcome of the tube membership test for one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TubeOutcome {
    /// A witness within `ε` was found.
    Hit(f64),
    /// Interval arithmetic proved that no zero lies within `ε`.
    Miss,
    /// Neither proved nor witnessed; counted as a miss.
    Undecided,
}

const EXCLUSION_BUDGET: usize = 4096;
const SEED_CELLS: usize = 16;

/// Prepared system with cached gradients.
#[derive(Clone, Debug)]
pub struct DistanceOracle {
    space: AmbientSpace,
    polys: Vec<SparsePoly>,
    grads: Vec<Vec<SparsePoly>>,
    anchors: Vec<Vec<f64>>,
}

impl DistanceOracle {
    pub fn new(v: &VarietySpec) -> Result<Self> {
        v.validate()?;
        Ok(Self::from_system(&v.system, v.space))
    }

    /// Oracle for `system` in `space` without the degree and dimension checks
    /// of [`VarietySpec`].
    pub fn from_system(system: &PolySystem, space: AmbientSpace) -> Self {
        let polys = system.polys().to_vec();
        let grads = polys
            .iter()
            .map(|p| (0..p.n_vars()).map(|i| p.partial(i)).collect())
            .collect();
        DistanceOracle {
            space,
            polys,
            grads,
            anchors: Vec::new(),
        }
    }

    /// Known points of the set, used as extra starting guesses.
    pub fn with_anchors(mut self, anchors: Vec<Vec<f64>>) -> Self {
        self.anchors = anchors;
        self
    }

    pub fn space(&self) -> AmbientSpace {
        self.space
    }

    fn sphere(&self) -> bool {
        self.space.is_sphere()
    }

    /// `max_i |P_i(y)|` over the defining polynomials only.
    pub fn residual(&self, y: &[f64]) -> f64 {
        self.polys
            .iter()
            .map(|p| p.eval_unchecked(y).abs())
            .fold(0.0, f64::max)
    }

    fn system_values(&self, y: &[f64]) -> DVector<f64> {
        let k = self.polys.len() + usize::from(self.sphere());
        let mut f = DVector::zeros(k);
        for (i, p) in self.polys.iter().enumerate() {
            f[i] = p.eval_unchecked(y);
        }
        if self.sphere() {
            f[k - 1] = y.iter().map(|v| v * v).sum::<f64>() - 1.0;
        }
        f
    }

    fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        let k = self.polys.len() + usize::from(self.sphere());
        let mut j = DMatrix::zeros(k, n);
        for (i, g) in self.grads.iter().enumerate() {
            for (c, d) in g.iter().enumerate() {
                j[(i, c)] = d.eval_unchecked(y);
            }
        }
        if self.sphere() {
            for c in 0..n {
                j[(k - 1, c)] = 2.0 * y[c];
            }
        }
        j
    }

    fn metric(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.sphere() {
            geodesic(a, b)
        } else {
            euclid(a, b)
        }
    }

    /// Minimum-norm least-squares Newton step `-J⁺ F`.
    fn newton_step(&self, y: &[f64], f: &DVector<f64>) -> Option<DVector<f64>> {
        let j = self.jacobian(y);
        let svd = j.svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return None;
        }
        svd.solve(&(-f), 1e-13 * smax).ok()
    }

    /// Gauss–Newton with Armijo backtracking on `|F|²`. Returns a point with
    /// residual at most `tol`, renormalized onto the sphere if needed.
    pub fn gauss_newton(&self, y0: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
        let mut y = y0.to_vec();
        let mut f = self.system_values(&y);
        let mut nf = f.norm_squared();
        for _ in 0..max_iter {
            if f.amax() <= 1e-15 {
                break;
            }
            let Some(step) = self.newton_step(&y, &f) else { break };
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-10 {
                let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
                let fc = self.system_values(&cand);
                let nc = fc.norm_squared();
                if nc.is_finite() && nc <= (1.0 - 1e-4 * alpha) * nf {
                    y = cand;
                    f = fc;
                    nf = nc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if self.sphere() {
            let r = geometry::norm(&y);
            if !(r > 0.0) {
                return None;
            }
            y.iter_mut().for_each(|v| *v /= r);
        }
        (self.residual(&y) <= tol && y.iter().all(|v| v.is_finite())).then_some(y)
    }

    /// Moves `y` along the set to reduce its distance to `x`: project `x - y`
    /// onto the kernel of the Jacobian, step, and correct back onto the set.
    fn tangential_descent(&self, x: &[f64], y: Vec<f64>, tol: f64, iters: usize) -> Vec<f64> {
        let mut y = y;
        let mut d = self.metric(x, &y);
        for _ in 0..iters {
            if d == 0.0 {
                break;
            }
            let j = self.jacobian(&y);
            let svd = j.svd(false, true);
            let vt = svd.v_t.expect("requested v_t");
            let smax = svd.singular_values.max();
            let mut g: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            for (r, &s) in svd.singular_values.iter().enumerate() {
                if s > 1e-10 * smax.max(1e-300) {
                    let row = vt.row(r);
                    let c: f64 = row.iter().zip(&g).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(row.iter()).for_each(|(v, a)| *v -= c * a);
                }
            }
            if geometry::norm(&g) <= 1e-15 * (1.0 + geometry::norm(&y)) {
                break;
            }
            let mut alpha = 1.0;
            let mut improved = false;
            while alpha >= 1.0 / 64.0 {
                let cand: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + alpha * b).collect();
                if let Some(z) = self.gauss_newton(&cand, tol, 30) {
                    let dz = self.metric(x, &z);
                    if dz < d * (1.0 - 1e-13) {
                        y = z;
                        d = dz;
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        y
    }

    fn refine(&self, x: &[f64], start: &[f64], opts: &ProjectOptions) -> Option<Projection> {
        let y = self.gauss_newton(start, opts.tol, opts.max_iter)?;
        let y = self.tangential_descent(x, y, opts.tol, 25);
        Some(Projection {
            upper_bound: self.metric(x, &y),
            residual: self.residual(&y),
            point: y,
        })
    }

    /// Half-width of the coordinate box enclosing the metric ball of
    /// radius `r` around a point.
    fn box_radius(&self, r: f64) -> f64 {
        if self.sphere() {
            2.0 * (0.5 * r.min(std::f64::consts::PI)).sin()
        } else {
            r
        }
    }

    fn box_excluded(&self, b: &[Interval]) -> bool {
        if self.sphere() {
            let s = Interval::sum_sq(b) - Interval::point(1.0);
            if !s.contains_zero() {
                return true;
            }
        }
        self.polys.iter().any(|p| !eval_box(p, b).contains_zero())
    }

    /// Subdivides the box around the ball `B(x, r)` and returns the centers of
    /// the cells that may still contain a zero, nearest first. `None` means
    /// the evaluation budget ran out; `Some(vec![])` proves `dist(x, Z) > r`.
    fn candidate_cells(&self, x: &[f64], r: f64, max_depth: usize) -> Option<Vec<Vec<f64>>> {
        let chord = self.box_radius(r);
        let root: Vec<Interval> = x.iter().map(|&c| Interval::centered(c, chord)).collect();
        let mut stack = vec![(root, 0usize)];
        let mut kept = Vec::new();
        let mut evals = 0;
        while let Some((b, depth)) = stack.pop() {
            evals += 1;
            if evals > EXCLUSION_BUDGET {
                return None;
            }
            // Distance from x to the box; boxes outside the ball are dropped.
            let gap: f64 = b
                .iter()
                .zip(x)
                .map(|(iv, &c)| {
                    let d = (iv.lo - c).max(c - iv.hi).max(0.0);
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            if gap > chord || self.box_excluded(&b) {
                continue;
            }
            if depth == max_depth {
                kept.push(b.iter().map(Interval::mid).collect::<Vec<f64>>());
                continue;
            }
            let (axis, _) = b
                .iter()
                .enumerate()
                .map(|(i, iv)| (i, iv.width()))
                .fold((0, -1.0), |acc, w| if w.1 > acc.1 { w } else { acc });
            let mid = b[axis].mid();
            let mut lo = b.clone();
            let mut hi = b;
            lo[axis] = Interval::new(lo[axis].lo, mid);
            hi[axis] = Interval::new(mid, hi[axis].hi);
            stack.push((lo, depth + 1));
            stack.push((hi, depth + 1));
        }
        kept.sort_by(|a, b| euclid(a, x).total_cmp(&euclid(b, x)));
        Some(kept)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, x: &[f64], scale: f64) -> Vec<f64> {
        let mut z = ball_point(rng, x, scale.max(1e-12));
        if self.sphere() {
            let r = geometry::norm(&z);
            z.iter_mut().for_each(|v| *v /= r);
        }
        z
    }

    /// Multi-start projection of `x` onto the set. Starts are `x` itself,
    /// the centers of interval cells that may meet the current best ball,
    /// anchors inside that ball, and random perturbations of `x`.
    pub fn project(&self, x: &[f64], opts: &ProjectOptions, rng: &mut ChaCha8Rng) -> Option<Projection> {
        let mut best: Option<Projection> = self.refine(x, x, opts);
        let better = |best: &mut Option<Projection>, cand: Option<Projection>| {
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.upper_bound < b.upper_bound) {
                    *best = Some(c);
                }
            }
        };

        let radius = |best: &Option<Projection>| best.as_ref().map(|b| b.upper_bound);
        let depth = 6 * x.len();
        // Starting at x can stall near singular points; seed from cells of
        // growing balls until something converges.
        let mut r = 0.25;
        while best.is_none() && r <= 16.0 {
            match self.candidate_cells(x, r, depth) {
                Some(cells) => {
                    for c in cells.iter().rev().take(SEED_CELLS) {
                        let cand = self.refine(x, c, opts);
                        better(&mut best, cand);
                    }
                }
                None => break,
            }
            r *= 2.0;
        }
        if let Some(r) = radius(&best) {
            if r > 0.0 {
                if let Some(cells) = self.candidate_cells(x, r * (1.0 + 1e-9), depth) {
                    for c in cells.iter().take(SEED_CELLS) {
                        let cand = self.refine(x, c, opts);
                        better(&mut best, cand);
                    }
                }
            }
        }
        let reach = radius(&best).unwrap_or(1.0);
        for a in &self.anchors {
            if self.metric(x, a) <= 2.0 * reach {
                let cand = self.refine(x, a, opts);
                better(&mut best, cand);
            }
        }
        for k in 0..opts.restarts {
            let scale = radius(&best).unwrap_or(1.0) * [0.25, 0.5, 1.0, 2.0][k % 4];
            let z = self.random_start(rng, x, scale);
            let cand = self.refine(x, &z, opts);
            better(&mut best, cand);
        }
        best
    }

    /// Decides whether `dist(x, Z) ≤ eps`, exiting as soon as a witness is
    /// found or interval arithmetic rules the ball out.
    pub fn tube_test(&self, x: &[f64], eps: f64, tol: f64, rng: &mut ChaCha8Rng) -> TubeOutcome {
        let chord = self.box_radius(eps);
        let root: Vec<Interval> = x.iter().map(|&c| Interval::centered(c, chord)).collect();
        if self.box_excluded(&root) {
            return TubeOutcome::Miss;
        }
        let opts = ProjectOptions {
            restarts: 0,
            tol,
            max_iter: 100,
        };
        let hit = |p: &Projection| p.upper_bound <= eps;
        if let Some(y) = self.gauss_newton(x, tol, opts.max_iter) {
            let d = self.metric(x, &y);
            if d <= eps {
                return TubeOutcome::Hit(d);
            }
            let y = self.tangential_descent(x, y, tol, 25);
            let d = self.metric(x, &y);
            if d <= eps {
                return TubeOutcome::Hit(d);
            }
        }
        let cells = match self.candidate_cells(x, eps, 6 * x.len()) {
            Some(c) if c.is_empty() => return TubeOutcome::Miss,
            Some(c) => c,
            None => Vec::new(),
        };
        for c in cells.iter().take(SEED_CELLS) {
            if let Some(p) = self.refine(x, c, &opts) {
                if hit(&p) {
                    return TubeOutcome::Hit(p.upper_bound);
                }
            }
        }
        for k in 0..8 {
            let z = self.random_start(rng, x, eps * [0.5, 1.0][k % 2]);
            if let Some(p) = self.refine(x, &z, &opts) {
                if hit(&p) {
                    return TubeOutcome::Hit(p.upper_bound);
                }
            }
        }
        TubeOutcome::Undecided
    }
}

/// Multi-start projection with default iteration limits.
pub fn project_to_variety(v: &VarietySpec, x: &[f64], restarts: usize, tol: f64, seed: u64) -> Result<Option<Projection>> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    v.space.check_point(x, 1e-9)?;
    let oracle = DistanceOracle::new(v)?;
    let opts = ProjectOptions {
        restarts,
        tol,
        ..ProjectOptions::default()
    };
    Ok(oracle.project(x, &opts, &mut rng_for(seed, streams::PROJECT, 0)))
}

/// Brute-force distance oracle on a grid of interval cells.
///
/// Cells of width at most `h` whose enclosures contain zero for every
/// polynomial are kept; the distance to the set is estimated by the distance
/// to the nearest kept cell center.
#[derive(Clone, Debug)]
pub struct GridOracle {
    space: AmbientSpace,
    centers: Vec<Vec<f64>>,
    h: f64,
}

impl GridOracle {
    /// Grid over `[-half_width, half_width]^N` (the unit cube for spheres).
    pub fn build(v: &VarietySpec, half_width: f64, h: f64) -> Result<Self> {
        v.validate()?;
        if v.space.coords() > 4 || v.space.dim() > 3 {
            return Err(invalid(format!("grid oracle supports n <= 3, got {}", v.space)));
        }
        if !(h > 0.0 && half_width > 0.0) {
            return Err(invalid("grid resolution and extent must be positive"));
        }
        let oracle = DistanceOracle::new(v)?;
        let half = if v.space.is_sphere() { 1.0 + h } else { half_width };
        let root: Vec<Interval> = (0..v.space.coords()).map(|_| Interval::new(-half, half)).collect();
        let mut centers = Vec::new();
        let mut stack = vec![root];
        while let Some(b) = stack.pop() {
            if oracle.box_excluded(&b) {
                continue;
            }
            let (axis, w) = b
                .iter()
                .enumerate()
                .map(|(i, iv)| (i, iv.width()))
                .fold((0, -1.0), |acc, w| if w.1 > acc.1 { w } else { acc });
            if w <= h {
                let mut c: Vec<f64> = b.iter().map(Interval::mid).collect();
                if v.space.is_sphere() {
                    let r = geometry::norm(&c);
                    if r == 0.0 {
                        continue;
                    }
                    c.iter_mut().for_each(|x| *x /= r);
                }
                centers.push(c);
                continue;
            }
            let mid = b[axis].mid();
            let mut lo = b.clone();
            let mut hi = b;
            lo[axis] = Interval::new(lo[axis].lo, mid);
            hi[axis] = Interval::new(mid, hi[axis].hi);
            stack.push(lo);
            stack.push(hi);
        }
        Ok(GridOracle {
            space: v.space,
            centers,
            h,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.h
    }

    pub fn cell_count(&self) -> usize {
        self.centers.len()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .map(|c| geometry::metric(self.space, x, c))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Grid estimate of `dist(x, Z)` over the box of half-width `half_width`.
pub fn grid_distance(v: &VarietySpec, x: &[f64], half_width: f64, h: f64) -> Result<f64> {
    v.space.check_point(x, 1e-9)?;
    Ok(GridOracle::build(v, half_width, h)?.distance(x))
}

/// Smallest singular value of the Jacobian of `s` at `x`, with the row `2x`
/// appended when `spherical` is set.
pub fn jacobian_min_sv(s: &PolySystem, x: &[f64], spherical: bool) -> Result<f64> {
    if x.len() != s.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: s.n_vars(),
            got: x.len(),
        });
    }
    let space = if spherical {
        AmbientSpace::Sphere(x.len() - 1)
    } else {
        AmbientSpace::Euclidean(x.len())
    };
    let j = DistanceOracle::from_system(s, space).jacobian(x);
    Ok(j.singular_values().min())
}

/// A ball in `R^n` or a cap in `S^n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Region {
    pub fn contains(&self, space: AmbientSpace, x: &[f64]) -> bool {
        geometry::metric(space, x, &self.center) <= self.radius
    }
}

/// Uniform sampler of a region, addressed by sample index.
pub(crate) enum RegionSampler {
    Ball(Vec<f64>, f64),
    Cap(Vec<f64>, CapSampler),
}

impl RegionSampler {
    pub(crate) fn new(space: AmbientSpace, region: &Region) -> Result<Self> {
        space.check_point(&region.center, 1e-9)?;
        if !(region.radius > 0.0) {
            return Err(invalid(format!("region radius must be positive, got {}", region.radius)));
        }
        Ok(if space.is_sphere() {
            RegionSampler::Cap(region.center.clone(), CapSampler::new(space.dim(), region.radius)?)
        } else {
            RegionSampler::Ball(region.center.clone(), region.radius)
        })
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            RegionSampler::Ball(p, r) => ball_point(rng, p, *r),
            RegionSampler::Cap(p, s) => s.point(rng, p),
        }
    }
}

/// Points of the set inside a region, with the number of attempts spent.
#[derive(Clone, Debug)]
pub struct VarietySample {
    pub cloud: PointCloud,
    pub requested: usize,
    pub attempts: usize,
}

impl VarietySample {
    pub fn achieved(&self) -> usize {
        self.cloud.len()
    }
}

/// Projects uniform region samples onto the set and keeps those that land
/// back in the region with residual at most `1e-8`.
pub fn sample_variety_points(v: &VarietySpec, region: &Region, count: usize, seed: u64) -> Result<VarietySample> {
    let oracle = DistanceOracle::new(v)?;
    sample_points_with(&oracle, region, count, seed, 1e-8)
}

pub(crate) fn sample_points_with(
    oracle: &DistanceOracle,
    region: &Region,
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<VarietySample> {
    let sampler = RegionSampler::new(oracle.space, region)?;
    let max_attempts = 20 * count.max(1);
    let batch = (2 * count).clamp(64, 8192);
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0;
    while points.len() < count && attempts < max_attempts {
        let hi = (attempts + batch).min(max_attempts);
        let found: Vec<Option<Vec<f64>>> = (attempts..hi)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, streams::VARIETY, i as u64);
                let x = sampler.sample(&mut rng);
                oracle
                    .gauss_newton(&x, tol * 1e-2, 100)
                    .filter(|y| region.contains(oracle.space, y) && oracle.residual(y) <= tol)
            })
            .collect();
        for y in found.into_iter().flatten() {
            if points.len() < count {
                points.push(y);
            }
        }
        attempts = hi;
    }
    Ok(VarietySample {
        cloud: PointCloud::new(oracle.space, points)?,
        requested: count,
        attempts,
    })
}

/// Monte Carlo run configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub level: f64,
    pub tol: f64,
    /// Wall-clock budget; trials stop at a chunk boundary once exceeded.
    pub budget: Option<Duration>,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        McConfig {
            trials,
            seed,
            level: 0.99,
            tol: 1e-10,
            budget: None,
        }
    }
}

/// A Monte Carlo tube estimate with its bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McRun {
    pub estimate: McEstimate,
    /// Samples neither witnessed nor excluded.
    pub undecided: u64,
    pub requested_trials: u64,
    /// Set when the budget cut the run short.
    pub reduced: bool,
    pub elapsed_secs: f64,
}

impl McRun {
    pub fn undecided_rate(&self) -> f64 {
        if self.estimate.trials == 0 {
            0.0
        } else {
            self.undecided as f64 / self.estimate.trials as f64
        }
    }
}

const MC_CHUNK: u64 = 1 << 14;

/// Runs `trials` independent indicator draws in deterministic chunks. The
/// closure returns `(hit, undecided)` for a sample index.
pub(crate) fn run_chunked(
    cfg: &McConfig,
    draw: impl Fn(u64) -> (bool, bool) + Sync,
) -> McRun {
    let start = Instant::now();
    let (mut hits, mut undecided, mut done) = (0u64, 0u64, 0u64);
    let mut reduced = false;
    while done < cfg.trials {
        if let Some(b) = cfg.budget {
            if done > 0 && start.elapsed() > b {
                reduced = true;
                break;
            }
        }
        let hi = (done + MC_CHUNK).min(cfg.trials);
        let (h, u) = (done..hi)
            .into_par_iter()
            .map(|i| {
                let (h, u) = draw(i);
                (u64::from(h), u64::from(u))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        hits += h;
        undecided += u;
        done = hi;
    }
    McRun {
        estimate: McEstimate::new(hits, done, cfg.level, cfg.seed),
        undecided,
        requested_trials: cfg.trials,
        reduced,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

/// Estimates `P(dist(x, Z) ≤ ε)` for `x` uniform in `B(p, σ)`.
pub fn tube_probability_mc(v: &VarietySpec, p: &[f64], sigma: f64, eps: f64, cfg: &McConfig) -> Result<McRun> {
    let oracle = DistanceOracle::new(v)?;
    tube_probability_with(&oracle, p, sigma, eps, cfg)
}

pub fn tube_probability_with(
    oracle: &DistanceOracle,
    p: &[f64],
    sigma: f64,
    eps: f64,
    cfg: &McConfig,
) -> Result<McRun> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be >= 0, got {eps}")));
    }
    let sampler = RegionSampler::new(
        oracle.space,
        &Region {
            center: p.to_vec(),
            radius: sigma,
        },
    )?;
    Ok(run_chunked(cfg, |i| {
        let x = sampler.sample(&mut rng_for(cfg.seed, streams::MC, i));
        let mut rng = rng_for(cfg.seed, streams::PROJECT, i);
        match oracle.tube_test(&x, eps, cfg.tol, &mut rng) {
            TubeOutcome::Hit(_) => (true, false),
            TubeOutcome::Miss => (false, false),
            TubeOutcome::Undecided => (false, true),
        }
    }))
}

/// Estimates `P{C(x) ≥ t}` for `x` uniform in `B_sin(a, u)`, where `C` is the
/// conic condition number with respect to the set `Σ = Z(P) ⊂ S^n`.
///
/// `B_sin(a, u)` is the union of the caps of radius `arcsin u` around `±a`,
/// and `C(x) ≥ t` exactly when `dist(x, Σ) ≤ arcsin(1/t)`, because `Σ` is
/// invariant under `x ↦ -x`.
pub fn condition_tail_mc(v: &VarietySpec, a: &[f64], u: f64, t: f64, cfg: &McConfig) -> Result<McRun> {
    if !v.space.is_sphere() {
        return Err(Error::WrongSpace("condition numbers live on the sphere".into()));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(invalid(format!("u must lie in (0, 1], got {u}")));
    }
    if !(t >= 1.0) {
        return Err(invalid(format!("t must be at least 1, got {t}")));
    }
    let oracle = DistanceOracle::new(v)?;
    v.space.check_point(a, 1e-9)?;
    let cap = CapSampler::new(v.space.dim(), u.asin())?;
    let eps = (1.0 / t).asin();
    Ok(run_chunked(cfg, |i| {
        let mut rng = rng_for(cfg.seed, streams::MC, i);
        let mut x = cap.point(&mut rng, a);
        if rng.random::<bool>() {
            x.iter_mut().for_each(|c| *c = -*c);
        }
        let mut prng = rng_for(cfg.seed, streams::PROJECT, i);
        match oracle.tube_test(&x, eps, cfg.tol, &mut prng) {
            TubeOutcome::Hit(_) => (true, false),
            TubeOutcome::Miss => (false, false),
            TubeOutcome::Undecided => (false, true),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn euclid_spec(polys: &[&str], n: usize, m: usize, delta: u32) -> VarietySpec {
        VarietySpec::new(PolySystem::parse(polys, n, 1).unwrap(), AmbientSpace::Euclidean(n), m, delta, false).unwrap()
    }

    fn line() -> VarietySpec {
        euclid_spec(&["X2"], 2, 1, 1)
    }
    fn circle() -> VarietySpec {
        euclid_spec(&["X1^2 + X2^2 - 1"], 2, 1, 2)
    }
    fn node() -> VarietySpec {
        euclid_spec(&["X1*X2"], 2, 1, 2)
    }
    fn cusp() -> VarietySpec {
        euclid_spec(&["X2^2 - X1^3"], 2, 1, 3)
    }
    fn origin() -> VarietySpec {
        euclid_spec(&["X1", "X2"], 2, 0, 1)
    }

    #[test]
    fn spec_validation() {
        let sys = PolySystem::parse(&["X1^2 - X2"], 2, 1).unwrap();
        assert!(VarietySpec::new(sys.clone(), AmbientSpace::Euclidean(2), 1, 1, false).is_err());
        assert!(VarietySpec::new(sys.clone(), AmbientSpace::Euclidean(2), 2, 2, false).is_err());
        assert!(VarietySpec::new(sys.clone(), AmbientSpace::Euclidean(3), 1, 2, false).is_err());
        let inhom = PolySystem::parse(&["X0^2 - X1"], 2, 0).unwrap();
        assert!(VarietySpec::new(inhom, AmbientSpace::Sphere(1), 0, 2, false).is_err());
    }

    #[test]
    fn grid_distance_examples() {
        let h = 1e-3;
        let d = grid_distance(&euclid_spec(&["X1"], 2, 1, 1), &[0.3, 0.7], 2.0, h).unwrap();
        assert!((d - 0.3).abs() <= 2e-3, "{d}");
        let d = grid_distance(&circle(), &[2.0, 0.0], 3.0, h).unwrap();
        assert!((d - 1.0).abs() <= 2e-3, "{d}");
        let d = grid_distance(&origin(), &[3.0, 4.0], 6.0, h).unwrap();
        assert!((d - 5.0).abs() <= 2e-3, "{d}");
        let big = euclid_spec(&["X1 + X2 + X3 + X4"], 4, 3, 1);
        assert!(grid_distance(&big, &[0.0; 4], 1.0, 0.1).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = project_to_variety(&circle(), &[2.0, 0.0], 50, 1e-10, 1).unwrap().unwrap();
        assert!((p.upper_bound - 1.0).abs() < 1e-6);
        assert!((p.point[0] - 1.0).abs() < 1e-6 && p.point[1].abs() < 1e-6);

        let p = project_to_variety(&cusp(), &[-1.0, 0.0], 50, 1e-10, 1).unwrap().unwrap();
        let g = grid_distance(&cusp(), &[-1.0, 0.0], 2.0, 1e-3).unwrap();
        assert!((p.upper_bound - 1.0).abs() < 1e-4, "{}", p.upper_bound);
        assert!((p.upper_bound - g).abs() < 5e-3);

        let p = project_to_variety(&circle(), &[0.6, 0.8], 50, 1e-10, 1).unwrap().unwrap();
        assert!(p.upper_bound <= 1e-6);
    }

    #[test]
    fn projection_escapes_the_far_branch() {
        // Two concentric circles of radii 1 and 3; the nearer one must be
        // reported wherever Gauss–Newton from x lands first.
        let inner = SparsePoly::parse("X1^2 + X2^2 - 1", 2, 1).unwrap();
        let outer = SparsePoly::parse("X1^2 + X2^2 - 9", 2, 1).unwrap();
        let v = VarietySpec::new(PolySystem::new(2, vec![&inner * &outer]).unwrap(), AmbientSpace::Euclidean(2), 1, 4, false).unwrap();
        for (x, expect) in [([2.2, 0.0], 0.8), ([1.8, 0.0], 0.8), ([0.0, 1.9], 0.9)] {
            let p = project_to_variety(&v, &x, 10, 1e-10, 5).unwrap().unwrap();
            assert!((p.upper_bound - expect).abs() < 1e-8, "{x:?}: {}", p.upper_bound);
        }
    }

    #[test]
    fn witnesses_have_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for v in [line(), circle(), node(), cusp(), origin()] {
            let o = DistanceOracle::new(&v).unwrap();
            for _ in 0..50 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let p = o.project(&x, &ProjectOptions::default(), &mut rng).unwrap_or_else(|| panic!("{:?} {x:?}", v.system.to_texts(1)));
                assert!(v.system.eval(&p.point).unwrap().iter().all(|r| r.abs() <= 1e-10));
                assert!((p.upper_bound - euclid(&x, &p.point)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let s = circle().system;
        assert!((jacobian_min_sv(&s, &[1.0, 0.0], false).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(jacobian_min_sv(&node().system, &[0.0, 0.0], false).unwrap(), 0.0);
        assert!((jacobian_min_sv(&origin().system, &[0.0, 0.0], false).unwrap() - 1.0).abs() < 1e-12);
        let gc = PolySystem::parse(&["X2"], 3, 0).unwrap();
        assert!((jacobian_min_sv(&gc, &[1.0, 0.0, 0.0], true).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variety_samples() {
        let region = Region {
            center: vec![0.0, 0.0],
            radius: 2.0,
        };
        let s = sample_variety_points(&circle(), &region, 300, 3).unwrap();
        assert_eq!(s.achieved(), 300);
        assert!(s.cloud.points().iter().all(|y| (geometry::norm(y) - 1.0).abs() < 1e-7));
        let s = sample_variety_points(&origin(), &region, 50, 3).unwrap();
        assert!(s.cloud.points().iter().all(|y| geometry::norm(y) < 1e-7));
        let s = sample_variety_points(&node(), &region, 300, 3).unwrap();
        assert!(s.cloud.points().iter().all(|y| y[0].abs() < 1e-7 || y[1].abs() < 1e-7));
        assert!(s.cloud.points().iter().all(|y| geometry::norm(y) <= 2.0));
    }

    #[test]
    fn tube_strip_probability() {
        let eps = 0.1f64;
        let truth = 2.0 * (eps * (1.0 - eps * eps).sqrt() + eps.asin()) / std::f64::consts::PI;
        let run = tube_probability_mc(&line(), &[0.0, 0.0], 1.0, eps, &McConfig::new(100_000, 7)).unwrap();
        assert!(run.estimate.covers(truth), "{truth} vs {:?}", run.estimate);
        assert_eq!(run.undecided, 0);
    }

    #[test]
    fn tube_empty_and_full() {
        let far = tube_probability_mc(&circle(), &[4.0, 0.0], 1.0, 0.5, &McConfig::new(5_000, 1)).unwrap();
        assert_eq!(far.estimate.hits, 0);
        let full = tube_probability_mc(&circle(), &[1.0, 0.0], 0.5, 2.0, &McConfig::new(5_000, 1)).unwrap();
        assert_eq!(full.estimate.p_hat, 1.0);
    }

    #[test]
    fn tube_estimate_is_deterministic_across_pools() {
        let cfg = McConfig::new(20_000, 11);
        let a = tube_probability_mc(&node(), &[0.2, 0.1], 1.0, 0.05, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| tube_probability_mc(&node(), &[0.2, 0.1], 1.0, 0.05, &cfg).unwrap());
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.undecided, b.undecided);
    }

    #[test]
    fn budget_reduces_trials() {
        let mut cfg = McConfig::new(10 * MC_CHUNK, 1);
        cfg.budget = Some(Duration::ZERO);
        let run = tube_probability_mc(&line(), &[0.0, 0.0], 1.0, 0.1, &cfg).unwrap();
        assert!(run.reduced);
        assert_eq!(run.estimate.trials, MC_CHUNK);
    }

    #[test]
    fn sphere_great_circle_projection() {
        let v = VarietySpec::new(PolySystem::parse(&["X2"], 3, 0).unwrap(), AmbientSpace::Sphere(2), 1, 1, true).unwrap();
        let x = [0.0, 0.6, 0.8];
        let p = project_to_variety(&v, &x, 10, 1e-10, 2).unwrap().unwrap();
        assert!((p.upper_bound - 0.8f64.asin()).abs() < 1e-9);
        assert!((geometry::norm(&p.point) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_tail_on_great_circle() {
        let v = VarietySpec::new(PolySystem::parse(&["X2"], 3, 0).unwrap(), AmbientSpace::Sphere(2), 1, 1, true).unwrap();
        let t = 4.0;
        let run = condition_tail_mc(&v, &[0.0, 0.0, 1.0], 1.0, t, &McConfig::new(50_000, 3)).unwrap();
        // |x_2| ≤ 1/t has probability 1/t on S^2.
        assert!(run.estimate.covers(1.0 / t), "{:?}", run.estimate);
    }
}
