//! Curvature of submanifolds of `S^n` cut out by polynomial equations.
//!
//! `M = {F = 0} ∩ S^n` with `c` constraints is treated as a smooth
//! submanifold of dimension `m = n - c`. Its Weingarten maps `L_x(ν)`, the
//! coefficients `ψ_i` of `det(I - tL_x(ν))` and the total absolute
//! curvatures `|K_i| = ∫_{N¹M} |ψ_i|` bound the volume of tubes around `M`
//! through `Σ J_{n,c+i}(ε) |K_i|`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{self, dot, j_integral, sphere_volume, AmbientSpace, CapSampler};
use crate::interval::{eval_box, Interval};
use crate::oracle::{DistanceOracle, ProjectOptions};
use crate::poly::{PolySystem, SparsePoly};
use crate::rng::{rng_for, streams};

/// Orthonormal splitting of `T_x S^n` into tangent and normal parts of `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalFrame {
    pub x: Vec<f64>,
    pub tangent_basis: Vec<Vec<f64>>,
    pub normal_basis: Vec<Vec<f64>>,
}

impl NormalFrame {
    pub fn dim(&self) -> usize {
        self.tangent_basis.len()
    }

    pub fn codim(&self) -> usize {
        self.normal_basis.len()
    }

    /// Unit normal `Σ a_j ν_j` for unit coefficients `a`.
    pub fn normal(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.x.len()];
        for (a, nu) in coeffs.iter().zip(&self.normal_basis) {
            v.iter_mut().zip(nu).for_each(|(s, n)| *s += a * n);
        }
        v
    }
}

fn axpy(v: &mut [f64], a: f64, w: &[f64]) {
    v.iter_mut().zip(w).for_each(|(s, t)| *s += a * t);
}

/// Gram–Schmidt of `v` against `basis`; `None` if the remainder is tiny
/// relative to `scale`.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>], scale: f64) -> Option<Vec<f64>> {
    for _ in 0..2 {
        for b in basis {
            let c = dot(&v, b);
            axpy(&mut v, -c, b);
        }
    }
    let r = geometry::norm(&v);
    (r > 1e-8 * scale.max(1e-300)).then(|| v.into_iter().map(|x| x / r).collect())
}

/// Frame of `M = Z(s) ∩ S^n` at `x`.
pub fn normal_frame(s: &PolySystem, x: &[f64]) -> Result<NormalFrame> {
    let n1 = s.n_vars();
    if x.len() != n1 {
        return Err(Error::DimensionMismatch { expected: n1, got: x.len() });
    }
    if (geometry::norm(x) - 1.0).abs() > 1e-8 {
        return Err(invalid("frame point must be a unit vector"));
    }
    let residual = s.eval(x)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if residual > 1e-8 {
        return Err(invalid(format!("frame point is off the manifold (residual {residual:e})")));
    }
    let xs = x.to_vec();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for p in s {
        let g: Vec<f64> = (0..n1).map(|i| p.partial(i).eval_unchecked(x)).collect();
        let scale = geometry::norm(&g);
        let mut basis = vec![xs.clone()];
        basis.extend(normals.iter().cloned());
        match orthonormalize(g, &basis, scale.max(1.0)) {
            Some(v) => normals.push(v),
            None => {
                return Err(Error::Singular {
                    rank: normals.len(),
                    expected: s.len(),
                })
            }
        }
    }
    let mut tangent: Vec<Vec<f64>> = Vec::new();
    let target = n1 - 1 - normals.len();
    for i in 0..n1 {
        if tangent.len() == target {
            break;
        }
        let mut e = vec![0.0; n1];
        e[i] = 1.0;
        let mut basis = vec![xs.clone()];
        basis.extend(normals.iter().cloned());
        basis.extend(tangent.iter().cloned());
        if let Some(v) = orthonormalize(e, &basis, 1e4) {
            tangent.push(v);
        }
    }
    if tangent.len() != target {
        return Err(invalid("could not complete the tangent basis"));
    }
    Ok(NormalFrame {
        x: xs,
        tangent_basis: tangent,
        normal_basis: normals,
    })
}

fn hessian(p: &SparsePoly, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let pi = p.partial(i);
        for j in i..n {
            let v = pi.partial(j).eval_unchecked(x);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Weingarten map `L_x(ν)` in the tangent basis of `frame`:
/// `⟨L u, v⟩ = ⟨II(u, v), ν⟩`.
///
/// The second fundamental form is the minimum-norm solution `z` of
/// `∇F_i · z = -uᵀ H_i v`, `x · z = -⟨u, v⟩`, with its `x` component removed.
pub fn weingarten(s: &PolySystem, frame: &NormalFrame, nu: &[f64]) -> Result<DMatrix<f64>> {
    let n1 = s.n_vars();
    if frame.x.len() != n1 || nu.len() != n1 {
        return Err(Error::DimensionMismatch { expected: n1, got: frame.x.len() });
    }
    if frame.codim() != s.len() {
        return Err(invalid(format!("frame has {} normals for {} constraints", frame.codim(), s.len())));
    }
    if (geometry::norm(nu) - 1.0).abs() > 1e-8 {
        return Err(invalid("ν must be a unit vector"));
    }
    let off_normal: f64 = {
        let mut r = nu.to_vec();
        for b in &frame.normal_basis {
            let c = dot(&r, b);
            axpy(&mut r, -c, b);
        }
        geometry::norm(&r)
    };
    if off_normal > 1e-8 {
        return Err(invalid("ν is not in the normal space"));
    }
    let x = &frame.x;
    let c = s.len();
    let mut a = DMatrix::zeros(c + 1, n1);
    let mut hs = Vec::with_capacity(c);
    for (i, p) in s.iter().enumerate() {
        for j in 0..n1 {
            a[(i, j)] = p.partial(j).eval_unchecked(x);
        }
        hs.push(hessian(p, x));
    }
    for j in 0..n1 {
        a[(c, j)] = x[j];
    }
    let gram = &a * a.transpose();
    let chol = gram
        .cholesky()
        .ok_or(Error::Singular { rank: c, expected: c + 1 })?;
    // ⟨II(u, v), ν⟩ = bᵀ (AAᵀ)⁻¹ A ν, and the x row contributes nothing
    // after ν ⟂ x, so only the coefficient vector y = (AAᵀ)⁻¹ A ν is needed.
    let y = chol.solve(&(&a * DVector::from_row_slice(nu)));
    let m = frame.dim();
    let t: Vec<DVector<f64>> = frame.tangent_basis.iter().map(|v| DVector::from_row_slice(v)).collect();
    let mut l = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in p..m {
            let mut val = 0.0;
            for (i, h) in hs.iter().enumerate() {
                val -= y[i] * (t[p].transpose() * h * &t[q])[(0, 0)];
            }
            val -= y[c] * t[p].dot(&t[q]);
            l[(p, q)] = val;
            l[(q, p)] = val;
        }
    }
    Ok(l)
}

/// Coefficients of `det(I - tL) = Σ t^i ψ_i`, by Faddeev–LeVerrier.
pub fn psi_coeffs(l: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !l.is_square() {
        return Err(invalid("psi coefficients need a square matrix"));
    }
    let m = l.nrows();
    let mut c = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(m, m);
    for k in 1..=m {
        mk = l * &mk + DMatrix::identity(m, m) * c[k - 1];
        let lm = l * &mk;
        c.push(-lm.trace() / k as f64);
    }
    Ok(c)
}

/// `Σ_i J_{n,c+i}(ε) K_i` for `K = (K_0, …, K_m)`, `m = n - c`.
pub fn weyl_tube_volume(k: &[f64], n: usize, c: usize, eps: f64) -> Result<f64> {
    if c == 0 || c > n {
        return Err(invalid(format!("codimension must lie in 1..={n}, got {c}")));
    }
    if k.len() != n - c + 1 {
        return Err(invalid(format!("expected {} curvature integrals, got {}", n - c + 1, k.len())));
    }
    k.iter()
        .enumerate()
        .map(|(i, ki)| Ok(j_integral(n, c + i, eps)? * ki))
        .sum()
}

/// Monte Carlo configuration for [`total_abs_curvature_mc`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureMc {
    pub trials: u64,
    /// Radius of the tube the ambient samples are drawn from; must stay below
    /// the reach of `M`.
    pub tube_radius: f64,
    pub normals_per_point: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Ambient samples that fell inside the tube.
    pub in_tube: u64,
    /// Samples whose foot point was singular or not found.
    pub skipped: u64,
    pub trials: u64,
}

/// Estimates `|K_i|(M)` for `M = Z(s) ∩ S^n`.
pub fn total_abs_curvature_mc(s: &PolySystem, i: usize, cfg: &CurvatureMc) -> Result<CurvatureEstimate> {
    let m = s.n_vars().saturating_sub(1).saturating_sub(s.len());
    if i > m {
        return Err(invalid(format!("curvature index {i} exceeds dim M = {m}")));
    }
    Ok(total_abs_curvatures_mc(s, cfg)?.swap_remove(i))
}

/// Estimates `|K_0|, …, |K_m|` from one set of samples.
///
/// Uniform points `x` of `S^n` within the tube of radius `h` are written as
/// `x = cos θ y + sin θ ν` with `y` the nearest point of `M`. The tube volume
/// element is `|det(I - tan θ L_y(ν))| cos^m θ sin^{c-1} θ dθ dν dy`, so
/// weighting each sample by the inverse determinant and dividing by
/// `J_{n,c}(h)` turns the tube average into an integral over `N¹M`. The
/// integrand `|ψ_i|` is averaged over fresh uniform normals at `y`.
pub fn total_abs_curvatures_mc(s: &PolySystem, cfg: &CurvatureMc) -> Result<Vec<CurvatureEstimate>> {
    let n1 = s.n_vars();
    let n = n1.saturating_sub(1);
    let c = s.len();
    if c == 0 || c > n {
        return Err(invalid("need between 1 and n constraints"));
    }
    let m = n - c;
    let h = cfg.tube_radius;
    if !(h > 0.0 && h < std::f64::consts::FRAC_PI_2) {
        return Err(invalid("tube radius must lie in (0, π/2)"));
    }
    if cfg.trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let space = AmbientSpace::Sphere(n);
    let oracle = DistanceOracle::from_system(s, space);
    let mut pole = vec![0.0; n1];
    pole[0] = 1.0;
    let whole = CapSampler::new(n, std::f64::consts::PI)?;
    let scale = sphere_volume(n) / j_integral(n, c, h)?;
    let chord = 2.0 * (0.5 * h).sin();
    let opts = ProjectOptions {
        restarts: 2,
        ..ProjectOptions::default()
    };
    let fibers = cfg.normals_per_point.max(1);

    // Per sample: contributions to each |K_i|, whether it was in the tube and
    // whether it had to be skipped.
    let sample = |k: u64| -> (Vec<f64>, u64, u64) {
        let none = (Vec::new(), 0, 0);
        let mut rng = rng_for(cfg.seed, streams::CURVATURE, k);
        let x = whole.point(&mut rng, &pole);
        let b: Vec<Interval> = x.iter().map(|&v| Interval::centered(v, chord)).collect();
        let sph = Interval::sum_sq(&b) - Interval::point(1.0);
        if !sph.contains_zero() || s.iter().any(|p| !eval_box(p, &b).contains_zero()) {
            return none;
        }
        let Some(proj) = oracle.project(&x, &opts, &mut rng) else {
            return (Vec::new(), 0, 1);
        };
        let theta = proj.upper_bound;
        if theta > h {
            return none;
        }
        let y = proj.point;
        let Ok(frame) = normal_frame(s, &y) else {
            return (Vec::new(), 1, 1);
        };
        // ν is the unit direction from y towards x inside the normal space.
        let dir: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - theta.cos() * b).collect();
        let nu = frame.normal(&frame.normal_basis.iter().map(|b| dot(&dir, b)).collect::<Vec<_>>());
        let nn = geometry::norm(&nu);
        if nn == 0.0 {
            return (Vec::new(), 1, 1);
        }
        let nu: Vec<f64> = nu.iter().map(|v| v / nn).collect();
        let Ok(l) = weingarten(s, &frame, &nu) else {
            return (Vec::new(), 1, 1);
        };
        let jac = (DMatrix::identity(m, m) - l * theta.tan()).determinant().abs();
        let mut avg = vec![0.0; m + 1];
        let mut frng = rng_for(cfg.seed, streams::FIBER, k);
        for _ in 0..fibers {
            let fresh = frame.normal(&geometry::unit_vec(&mut frng, c));
            let lf = weingarten(s, &frame, &fresh).expect("fresh normal lies in the normal space");
            let psi = psi_coeffs(&lf).expect("square");
            avg.iter_mut().zip(&psi).for_each(|(a, p)| *a += p.abs());
        }
        let w = scale / (jac * fibers as f64);
        (avg.into_iter().map(|a| a * w).collect(), 1, 0)
    };

    // Collected in index order and summed sequentially, so the result does
    // not depend on the thread count.
    let samples: Vec<(Vec<f64>, u64, u64)> = (0..cfg.trials).into_par_iter().map(sample).collect();
    let (mut sum, mut sum_sq) = (vec![0.0; m + 1], vec![0.0; m + 1]);
    let (mut in_tube, mut skipped) = (0u64, 0u64);
    for (y, t, sk) in samples {
        for (i, v) in y.iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
        in_tube += t;
        skipped += sk;
    }
    let nf = cfg.trials as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(s1, s2)| {
            let mean = s1 / nf;
            let var = (s2 / nf - mean * mean).max(0.0);
            CurvatureEstimate {
                value: mean,
                std_error: (var / nf).sqrt(),
                in_tube,
                skipped,
                trials: cfg.trials,
            }
        })
        .collect())
}

/// Exact curvature integrals of the great subsphere `S^m ⊂ S^n`:
/// `K_0 = vol(S^m) vol(S^{c-1})`, all others zero.
pub fn great_subsphere_curvatures(n: usize, m: usize) -> Vec<f64> {
    let mut k = vec![0.0; m + 1];
    k[0] = sphere_volume(m) * sphere_volume(n - m - 1);
    k
}

/// Exact curvature integrals of the circle of geodesic radius `ρ` in `S^2`:
/// `|K_0| = 4π sin ρ`, `|K_1| = 4π |cos ρ|`.
pub fn small_circle_curvatures(rho: f64) -> [f64; 2] {
    let four_pi = 4.0 * std::f64::consts::PI;
    [four_pi * rho.sin(), four_pi * rho.cos().abs()]
}

/// `{X_2 = cos ρ} ∩ S^2` in the variables `X_0, X_1, X_2`.
pub fn small_circle_system(rho: f64) -> PolySystem {
    let p = &SparsePoly::var(3, 2) - &SparsePoly::constant(3, rho.cos());
    PolySystem::new(3, vec![p]).expect("three variables")
}
