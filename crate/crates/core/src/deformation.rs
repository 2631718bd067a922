//! Smooth complete intersections converging to a singular algebraic set.
//!
//! For `Z = Z(F)` with `deg F ≤ d`, let `Q = Σ P²` and let `G ≥ 1` have degree
//! `2d`. In generic coordinates the polar systems
//! `Cr_{n-m-1}((1 - t)Q - tG)` cut out smooth complete intersections `V_t` of
//! dimension `m` that converge to `Z` in the Hausdorff metric on bounded
//! balls as `t → 0`. Here `t` runs over a finite decreasing grid and every
//! claim is audited on samples.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{self, directed_distance, gaussian_vec, AmbientSpace, Hausdorff, PointCloud};
use crate::oracle::{jacobian_min_sv, sample_points_with, DistanceOracle, Region, RegionSampler, VarietySpec};
use crate::poly::{cr_set, cr_set_from, deformation_poly, rotate_coords, sum_of_squares, PolySystem, SparsePoly};
use crate::rng::{derive_seed, rng_for, streams};

/// Default `t` values, `10^-1` down to `10^-8`.
pub fn default_t_grid() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(-k)).collect()
}

/// Weight of the random squared forms added to `Σ X_i^{2d}`.
const RIDGE_WEIGHT: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct DeformationFamily {
    /// `Q` in the rotated frame, affine.
    pub q: SparsePoly,
    /// `G` in the rotated frame, affine, `G ≥ 1`.
    pub g: SparsePoly,
    /// Coordinates satisfy `x = R y`; `q` and `g` are functions of `y`.
    pub rotation: DMatrix<f64>,
    pub m: usize,
    /// Maximum degree of the input family.
    pub d: u32,
    pub t_grid: Vec<f64>,
    pub space: AmbientSpace,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn haar_rotation(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, streams::ROTATION, 0);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// All exponent vectors of total degree `d` in `n` variables.
fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    (0..=d)
        .rev()
        .flat_map(|a| {
            monomials(n - 1, d - a).into_iter().map(move |mut rest| {
                rest.insert(0, a);
                rest
            })
        })
        .collect()
}

/// `Σ_{i=0}^n X_i^{2d} + κ Σ_j L_j²` with random forms `L_j` of degree `d`,
/// in `n + 1` homogeneous variables.
fn ridge_form(n_affine: usize, d: u32, seed: u64) -> SparsePoly {
    let nh = n_affine + 1;
    let mut g = SparsePoly::zero(nh);
    for i in 0..nh {
        g = &g + &SparsePoly::var(nh, i).pow(2 * d);
    }
    let monos = monomials(nh, d);
    for j in 0..nh {
        let mut rng = rng_for(seed, streams::RIDGE, j as u64);
        let c = gaussian_vec(&mut rng, monos.len());
        let norm = geometry::norm(&c);
        let l = SparsePoly::from_terms(nh, monos.iter().cloned().zip(c.iter().map(|v| v / norm))).expect("monomials have the right length");
        g = &g + &(&l * &l).scale(RIDGE_WEIGHT);
    }
    g
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(invalid("t grid is empty"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(invalid("t grid values must lie in (0, 1)"));
    }
    if t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("t grid must be strictly decreasing"));
    }
    Ok(())
}

impl DeformationFamily {
    pub fn n(&self) -> usize {
        self.space.dim()
    }

    pub fn with_t_grid(mut self, t_grid: Vec<f64>) -> Result<Self> {
        check_grid(&t_grid)?;
        self.t_grid = t_grid;
        Ok(self)
    }

    /// `Cr_{n-m-1}(D(Q, G, t))` in the rotated frame. On the sphere the
    /// polynomials are homogenized and differentiated in `X_1..X_k`.
    pub fn family_system(&self, t: f64) -> Result<PolySystem> {
        if !(t > 0.0 && t < 1.0) {
            return Err(invalid(format!("t must lie in (0, 1), got {t}")));
        }
        let d = deformation_poly(&self.q, &self.g, t)?;
        let k = self.n() - self.m - 1;
        if self.space.is_sphere() {
            cr_set_from(&d.homogenize(), k, 1)
        } else {
            cr_set(&d, k)
        }
    }

    /// [`Self::family_system`] expressed in the input coordinates `x`.
    pub fn family_system_input(&self, t: f64) -> Result<PolySystem> {
        rotate_coords(&self.family_system(t)?, &self.rotation.transpose())
    }

    /// Minimum of `G` over the given points, in the rotated frame.
    pub fn audit_g(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|y| self.g.eval_unchecked(y))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Family for an affine system `F ⊂ R[X_1..X_n]` whose zero set has
/// dimension at most `m`.
pub fn build_family(f: &PolySystem, m: usize, seed: u64) -> Result<DeformationFamily> {
    let n = f.n_vars();
    if m >= n {
        return Err(invalid(format!("need m < n, got m = {m}, n = {n}")));
    }
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    // Q = Σ P^h² restricted to X0 = 1 is Σ P² for the affine family.
    let d = f.max_degree().max(1);
    let rotation = haar_rotation(n, derive_seed(seed, 1));
    let q_x = sum_of_squares(f)?;
    let q = rotate_coords(&PolySystem::new(n, vec![q_x])?, &rotation)?.polys()[0].clone();
    let g = ridge_form(n, d, derive_seed(seed, 2)).dehomogenize();
    Ok(DeformationFamily {
        q,
        g,
        rotation,
        m,
        d,
        t_grid: default_t_grid(),
        space: AmbientSpace::Euclidean(n),
    })
}

/// Family for a homogeneous system `P ⊂ R[X_0..X_n]` on `S^n`. A random
/// rotation moves a generic hyperplane to `{X_0 = 0}` and the construction
/// runs on the chart `X_0 = 1`.
pub fn spherical_family(p: &PolySystem, m: usize, seed: u64) -> Result<DeformationFamily> {
    if !p.is_homogeneous() {
        return Err(Error::WrongSpace("spherical family needs homogeneous polynomials".into()));
    }
    if p.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let nh = p.n_vars();
    let n = nh - 1;
    if m >= n {
        return Err(invalid(format!("need m < n, got m = {m}, n = {n}")));
    }
    let d = p.max_degree().max(1);
    let rotation = haar_rotation(nh, derive_seed(seed, 1));
    let chart = rotate_coords(p, &rotation)?.dehomogenize();
    let q = sum_of_squares(&chart)?;
    let g = ridge_form(n, d, derive_seed(seed, 2)).dehomogenize();
    Ok(DeformationFamily {
        q,
        g,
        rotation,
        m,
        d,
        t_grid: default_t_grid(),
        space: AmbientSpace::Sphere(n),
    })
}

/// One `t` row of a convergence experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    /// `None` when either cloud came out empty.
    pub hausdorff: Option<Hausdorff>,
    /// Smallest Jacobian singular value over the `V_t` samples.
    pub min_sv: f64,
    pub z_count: usize,
    pub vt_count: usize,
    /// Smoothness audit: every sampled Jacobian has full rank.
    pub kept: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Largest grid `t` whose audit passed.
    pub t0: Option<f64>,
}

/// Singular values below this fail the smoothness audit.
pub const AUDIT_MIN_SV: f64 = 1e-6;

/// Samples of the set and of each `V_t`, with their Hausdorff distance.
#[derive(Clone, Debug)]
pub struct Clouds {
    pub z: PointCloud,
    pub vt: PointCloud,
}

fn doubled(cloud: PointCloud) -> Result<PointCloud> {
    let space = cloud.space();
    let mut pts = cloud.into_points();
    let neg: Vec<Vec<f64>> = pts.iter().map(|y| y.iter().map(|v| -v).collect()).collect();
    pts.extend(neg);
    PointCloud::new(space, pts)
}

fn sampling_region(space: AmbientSpace, radius: f64) -> Region {
    if space.is_sphere() {
        let mut c = vec![0.0; space.coords()];
        c[0] = 1.0;
        Region {
            center: c,
            radius: std::f64::consts::PI,
        }
    } else {
        Region {
            center: vec![0.0; space.coords()],
            radius,
        }
    }
}

fn within(space: AmbientSpace, cloud: &PointCloud, radius: f64) -> Result<PointCloud> {
    if space.is_sphere() {
        return Ok(cloud.clone());
    }
    PointCloud::new(
        space,
        cloud
            .points()
            .iter()
            .filter(|y| geometry::norm(y) <= radius)
            .cloned()
            .collect(),
    )
}

/// Samples `Z` and `V_t` for one `t`. On the sphere the clouds are doubled
/// to `±y`; in `R^n` they cover `B(0, 1.05 R)`.
pub fn sample_clouds(fam: &DeformationFamily, z: &VarietySpec, t: f64, radius: f64, cloud_size: usize, seed: u64) -> Result<Clouds> {
    let region = sampling_region(fam.space, 1.05 * radius);
    let z_oracle = DistanceOracle::from_system(&z.system, z.space);
    let vt_oracle = DistanceOracle::from_system(&fam.family_system_input(t)?, fam.space);
    let zs = sample_points_with(&z_oracle, &region, cloud_size, derive_seed(seed, 10), 1e-8)?.cloud;
    let vs = sample_points_with(&vt_oracle, &region, cloud_size, derive_seed(seed, 11), 1e-8)?.cloud;
    if fam.space.is_sphere() {
        Ok(Clouds {
            z: doubled(zs)?,
            vt: doubled(vs)?,
        })
    } else {
        Ok(Clouds { z: zs, vt: vs })
    }
}

/// Hausdorff distance on `B(0, R)`: each directed part runs from the cloud's
/// points inside the ball to the whole of the other, inflated, cloud.
pub fn ball_hausdorff(a: &PointCloud, b: &PointCloud, radius: f64) -> Result<Hausdorff> {
    let space = a.space();
    let a_in = within(space, a, radius)?;
    let b_in = within(space, b, radius)?;
    let a_to_b = if a_in.is_empty() { 0.0 } else { directed_distance(&a_in, b)? };
    let b_to_a = if b_in.is_empty() { 0.0 } else { directed_distance(&b_in, a)? };
    Ok(Hausdorff {
        value: a_to_b.max(b_to_a),
        a_to_b,
        b_to_a,
    })
}

/// Runs every `t` of the family's grid. `z` describes the original set in the
/// input coordinates.
pub fn convergence_experiment(fam: &DeformationFamily, z: &VarietySpec, radius: f64, cloud_size: usize, seed: u64) -> Result<ConvergenceTable> {
    if !(radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    if z.space != fam.space {
        return Err(Error::WrongSpace(format!("{} vs {}", z.space, fam.space)));
    }
    let rows = fam
        .t_grid
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let row_seed = derive_seed(seed, 100 + k as u64);
            let clouds = sample_clouds(fam, z, t, radius, cloud_size, row_seed)?;
            let system = fam.family_system_input(t)?;
            let sphere = fam.space.is_sphere();
            let min_sv = clouds
                .vt
                .points()
                .iter()
                .map(|y| jacobian_min_sv(&system, y, sphere))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let hausdorff = if clouds.z.is_empty() || clouds.vt.is_empty() {
                None
            } else {
                Some(ball_hausdorff(&clouds.z, &clouds.vt, radius)?)
            };
            Ok(ConvergenceRow {
                t,
                hausdorff,
                min_sv,
                z_count: clouds.z.len(),
                vt_count: clouds.vt.len(),
                kept: !clouds.vt.is_empty() && min_sv > AUDIT_MIN_SV,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let t0 = rows.iter().find(|r| r.kept).map(|r| r.t);
    Ok(ConvergenceTable { rows, t0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InclusionReport {
    pub probes: usize,
    /// Probes within `ε` of the first cloud.
    pub in_tube: usize,
    /// Of those, probes farther than `ε + τ` from the second cloud.
    pub violations: usize,
}

/// Counts probes of `B(p, σ)` within `ε` of `z_cloud` but farther than
/// `ε + τ` from `zt_cloud`.
#[allow(clippy::too_many_arguments)]
pub fn tube_inclusion_check(
    z_cloud: &PointCloud,
    zt_cloud: &PointCloud,
    p: &[f64],
    sigma: f64,
    eps: f64,
    tau: f64,
    probe_count: usize,
    seed: u64,
) -> Result<InclusionReport> {
    let space = z_cloud.space();
    if zt_cloud.space() != space {
        return Err(Error::WrongSpace(format!("{} vs {}", space, zt_cloud.space())));
    }
    if !(tau >= 0.0 && eps >= 0.0) {
        return Err(invalid("eps and tau must be nonnegative"));
    }
    let sampler = RegionSampler::new(
        space,
        &Region {
            center: p.to_vec(),
            radius: sigma,
        },
    )?;
    let (in_tube, violations) = (0..probe_count)
        .into_par_iter()
        .map(|i| {
            let x = sampler.sample(&mut rng_for(seed, streams::PROBE, i as u64));
            if z_cloud.distance_to(&x) <= eps {
                (1usize, usize::from(zt_cloud.distance_to(&x) > eps + tau))
            } else {
                (0, 0)
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(InclusionReport {
        probes: probe_count,
        in_tube,
        violations,
    })
}
