//! Sparse multivariate polynomials with real coefficients.
//!
//! A [`SparsePoly`] stores its terms in a map keyed by exponent vector under
//! graded lexicographic order, so two polynomials with the same terms always
//! compare and print identically. Zero coefficients are never stored; the zero
//! polynomial has no terms and degree 0.
//!
//! The text form is a sum of `coeff * X1^a1 * ... * Xn^an` terms. Variable
//! numbering starts at a caller-chosen index: affine polynomials use
//! `X1..Xn`, homogeneous ones (and everything living on a sphere) use
//! `X0..Xn`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Exponent vector ordered by total degree, then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial(exps)
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial in `n_vars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoly {
    n_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl SparsePoly {
    pub fn zero(n_vars: usize) -> Self {
        SparsePoly {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(vec![0; n_vars], c);
        p
    }

    /// The coordinate function `X_i` (0-based index).
    pub fn var(n_vars: usize, i: usize) -> Self {
        assert!(i < n_vars, "variable index {i} out of range for {n_vars} variables");
        let mut exps = vec![0; n_vars];
        exps[i] = 1;
        let mut p = Self::zero(n_vars);
        p.add_term(exps, 1.0);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging
    /// repeated exponent vectors and dropping zeros.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(n_vars);
        for (exps, c) in terms {
            if exps.len() != n_vars {
                return Err(Error::DimensionMismatch {
                    expected: n_vars,
                    got: exps.len(),
                });
            }
            p.add_term(exps, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let key = Monomial(exps);
        let slot = self.terms.entry(key.clone()).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded lexicographic order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&[u32], f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m.exps(), c))
    }

    pub fn coeff(&self, exps: &[u32]) -> f64 {
        self.terms
            .get(&Monomial(exps.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, Monomial::degree)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.keys().all(|m| m.degree() == d)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                expected: self.n_vars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the length check; `x` must have `n_vars` entries.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.exps()
                    .iter()
                    .zip(x)
                    .fold(c, |acc, (&a, &xi)| if a == 0 { acc } else { acc * xi.powi(a as i32) })
            })
            .sum()
    }

    pub fn scale(&self, s: f64) -> SparsePoly {
        let mut out = Self::zero(self.n_vars);
        for (m, &c) in &self.terms {
            out.add_term(m.0.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, k: u32) -> SparsePoly {
        let mut acc = Self::constant(self.n_vars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Partial derivative with respect to variable `i` (0-based).
    pub fn partial(&self, i: usize) -> SparsePoly {
        assert!(i < self.n_vars);
        let mut out = Self::zero(self.n_vars);
        for (m, &c) in &self.terms {
            let a = m.0[i];
            if a == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[i] -= 1;
            out.add_term(exps, c * a as f64);
        }
        out
    }

    pub fn gradient(&self) -> PolySystem {
        PolySystem {
            n_vars: self.n_vars,
            polys: (0..self.n_vars).map(|i| self.partial(i)).collect(),
        }
    }

    /// Adds a leading variable `X0` so that every term has total degree
    /// `deg(p)`. Variable `i` of the input becomes variable `i + 1`.
    pub fn homogenize(&self) -> SparsePoly {
        let d = self.degree();
        let mut out = Self::zero(self.n_vars + 1);
        for (m, &c) in &self.terms {
            let mut exps = Vec::with_capacity(self.n_vars + 1);
            exps.push(d - m.degree());
            exps.extend_from_slice(&m.0);
            out.add_term(exps, c);
        }
        out
    }

    /// Substitutes `X0 = 1` and drops the variable.
    pub fn dehomogenize(&self) -> SparsePoly {
        assert!(self.n_vars >= 1, "cannot dehomogenize a polynomial in zero variables");
        let mut out = Self::zero(self.n_vars - 1);
        for (m, &c) in &self.terms {
            out.add_term(m.0[1..].to_vec(), c);
        }
        out
    }

    /// Composition `x ↦ p(A x)` for a square matrix `A`. Coefficients below
    /// `1e-14 · max|coeff|` of the result are dropped.
    pub fn compose_linear(&self, a: &DMatrix<f64>) -> Result<SparsePoly> {
        let n = self.n_vars;
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.nrows(),
            });
        }
        let lin: Vec<SparsePoly> = (0..n)
            .map(|i| {
                let mut p = Self::zero(n);
                for j in 0..n {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    p.add_term(e, a[(i, j)]);
                }
                p
            })
            .collect();
        let mut powers: Vec<Vec<SparsePoly>> = lin.iter().map(|l| vec![Self::constant(n, 1.0), l.clone()]).collect();
        let mut out = Self::zero(n);
        for (m, &c) in &self.terms {
            let mut acc = Self::constant(n, c);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap() * &lin[i];
                    powers[i].push(next);
                }
                acc = &acc * &powers[i][e as usize];
            }
            out = &out + &acc;
        }
        Ok(out.pruned(1e-14))
    }

    /// Drops terms whose coefficient is below `rel · max|coeff|`.
    pub fn pruned(&self, rel: f64) -> SparsePoly {
        let cutoff = rel * self.max_abs_coeff();
        SparsePoly {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > cutoff)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Canonical text with variables numbered from `first_var`.
    pub fn to_text(&self, first_var: usize) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let neg = c < 0.0;
            let mag = c.abs();
            if k == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0)
                .map(|(i, &a)| {
                    if a == 1 {
                        format!("X{}", i + first_var)
                    } else {
                        format!("X{}^{}", i + first_var, a)
                    }
                })
                .collect();
            if vars.is_empty() {
                out.push_str(&fmt_coeff(mag));
            } else {
                if mag != 1.0 {
                    out.push_str(&fmt_coeff(mag));
                    out.push_str(" * ");
                }
                out.push_str(&vars.join(" * "));
            }
        }
        out
    }

    /// Parses the text form; variables are `X<k>` with
    /// `first_var <= k < first_var + n_vars`.
    pub fn parse(text: &str, n_vars: usize, first_var: usize) -> Result<SparsePoly> {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            n_vars,
            first_var,
        }
        .parse()
    }
}

fn fmt_coeff(c: f64) -> String {
    if c == c.trunc() && c.abs() < 1e15 {
        format!("{c}")
    } else if (1e-4..1e15).contains(&c.abs()) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

impl fmt::Display for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(1))
    }
}

impl Add for &SparsePoly {
    type Output = SparsePoly;
    fn add(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.n_vars, rhs.n_vars, "adding polynomials in different rings");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.0.clone(), c);
        }
        out
    }
}

impl Sub for &SparsePoly {
    type Output = SparsePoly;
    fn sub(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.n_vars, rhs.n_vars, "subtracting polynomials in different rings");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.0.clone(), -c);
        }
        out
    }
}

impl Mul for &SparsePoly {
    type Output = SparsePoly;
    fn mul(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.n_vars, rhs.n_vars, "multiplying polynomials in different rings");
        let mut out = SparsePoly::zero(self.n_vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                let exps = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }
}

impl Neg for &SparsePoly {
    type Output = SparsePoly;
    fn neg(self) -> SparsePoly {
        self.scale(-1.0)
    }
}

/// A finite family of polynomials over a common ring.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySystem {
    n_vars: usize,
    polys: Vec<SparsePoly>,
}

impl PolySystem {
    pub fn new(n_vars: usize, polys: Vec<SparsePoly>) -> Result<Self> {
        if let Some(p) = polys.iter().find(|p| p.n_vars != n_vars) {
            return Err(Error::DimensionMismatch {
                expected: n_vars,
                got: p.n_vars,
            });
        }
        Ok(PolySystem { n_vars, polys })
    }

    /// Parses one polynomial per entry of `texts`.
    pub fn parse<S: AsRef<str>>(texts: &[S], n_vars: usize, first_var: usize) -> Result<Self> {
        let polys = texts
            .iter()
            .map(|t| SparsePoly::parse(t.as_ref(), n_vars, first_var))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_vars, polys)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn polys(&self) -> &[SparsePoly] {
        &self.polys
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SparsePoly> {
        self.polys.iter()
    }

    pub fn max_degree(&self) -> u32 {
        self.polys.iter().map(SparsePoly::degree).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.polys.iter().all(SparsePoly::is_homogeneous)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.polys.iter().map(|p| p.eval(x)).collect()
    }

    pub fn homogenize(&self) -> PolySystem {
        PolySystem {
            n_vars: self.n_vars + 1,
            polys: self.polys.iter().map(SparsePoly::homogenize).collect(),
        }
    }

    pub fn dehomogenize(&self) -> PolySystem {
        PolySystem {
            n_vars: self.n_vars - 1,
            polys: self.polys.iter().map(SparsePoly::dehomogenize).collect(),
        }
    }

    pub fn to_texts(&self, first_var: usize) -> Vec<String> {
        self.polys.iter().map(|p| p.to_text(first_var)).collect()
    }
}

impl<'a> IntoIterator for &'a PolySystem {
    type Item = &'a SparsePoly;
    type IntoIter = std::slice::Iter<'a, SparsePoly>;
    fn into_iter(self) -> Self::IntoIter {
        self.polys.iter()
    }
}

/// `Q = Σ P_i²`.
pub fn sum_of_squares(family: &PolySystem) -> Result<SparsePoly> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(family
        .iter()
        .fold(SparsePoly::zero(family.n_vars), |acc, p| &acc + &(p * p)))
}

/// `(1 - t) Q - t G`.
pub fn deformation_poly(q: &SparsePoly, g: &SparsePoly, t: f64) -> Result<SparsePoly> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("deformation parameter t = {t} outside [0, 1]")));
    }
    if q.n_vars != g.n_vars {
        return Err(Error::DimensionMismatch {
            expected: q.n_vars,
            got: g.n_vars,
        });
    }
    Ok(&q.scale(1.0 - t) - &g.scale(t))
}

/// `{g, ∂g/∂X_1, …, ∂g/∂X_k}` where `X_1` is the first variable of `g`.
pub fn cr_set(g: &SparsePoly, k: usize) -> Result<PolySystem> {
    if k > g.n_vars {
        return Err(invalid(format!(
            "cr_set order {k} exceeds the number of variables {}",
            g.n_vars
        )));
    }
    let mut polys = Vec::with_capacity(k + 1);
    polys.push(g.clone());
    polys.extend((0..k).map(|i| g.partial(i)));
    PolySystem::new(g.n_vars, polys)
}

/// Same as [`cr_set`] but differentiating with respect to variables
/// `offset .. offset + k`; used for homogenized polynomials where `X0`
/// is the homogenizing variable.
pub fn cr_set_from(g: &SparsePoly, k: usize, offset: usize) -> Result<PolySystem> {
    if offset + k > g.n_vars {
        return Err(invalid(format!(
            "cr_set order {k} at offset {offset} exceeds {} variables",
            g.n_vars
        )));
    }
    let mut polys = Vec::with_capacity(k + 1);
    polys.push(g.clone());
    polys.extend((offset..offset + k).map(|i| g.partial(i)));
    PolySystem::new(g.n_vars, polys)
}

pub(crate) fn check_orthogonal(r: &DMatrix<f64>, tol: f64) -> Result<()> {
    if r.nrows() != r.ncols() {
        return Err(invalid("rotation matrix must be square"));
    }
    let n = r.nrows();
    let defect = (r.transpose() * r - DMatrix::<f64>::identity(n, n)).amax();
    if defect > tol {
        return Err(Error::NotOrthogonal(defect));
    }
    Ok(())
}

/// Composes every member of `s` with `x ↦ R x`.
pub fn rotate_coords(s: &PolySystem, r: &DMatrix<f64>) -> Result<PolySystem> {
    if r.nrows() != s.n_vars {
        return Err(Error::DimensionMismatch {
            expected: s.n_vars,
            got: r.nrows(),
        });
    }
    check_orthogonal(r, 1e-10)?;
    let polys = s
        .iter()
        .map(|p| p.compose_linear(r))
        .collect::<Result<Vec<_>>>()?;
    PolySystem::new(s.n_vars, polys)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n_vars: usize,
    first_var: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<SparsePoly> {
        let mut out = SparsePoly::zero(self.n_vars);
        let mut first = true;
        loop {
            let sign = match self.peek() {
                None if first => return self.err("empty polynomial"),
                None => break,
                Some(b'+') => {
                    self.pos += 1;
                    1.0
                }
                Some(b'-') => {
                    self.pos += 1;
                    -1.0
                }
                Some(_) if first => 1.0,
                Some(c) => return self.err(format!("expected '+' or '-', found '{}'", c as char)),
            };
            first = false;
            let (exps, c) = self.term()?;
            out.add_term(exps, sign * c);
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Vec<u32>, f64)> {
        let mut exps = vec![0u32; self.n_vars];
        let mut coeff = 1.0;
        loop {
            match self.peek() {
                Some(b'X') | Some(b'x') => {
                    self.pos += 1;
                    let idx = self.integer()? as usize;
                    if idx < self.first_var || idx >= self.first_var + self.n_vars {
                        return self.err(format!(
                            "variable X{idx} outside X{}..X{}",
                            self.first_var,
                            self.first_var + self.n_vars - 1
                        ));
                    }
                    let mut e = 1;
                    if self.peek() == Some(b'^') {
                        self.pos += 1;
                        self.skip_ws();
                        e = self.integer()? as u32;
                    }
                    exps[idx - self.first_var] += e;
                }
                Some(c) if c.is_ascii_digit() || c == b'.' => coeff *= self.number()?,
                Some(c) => return self.err(format!("unexpected '{}'", c as char)),
                None => return self.err("unexpected end of input"),
            }
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((exps, coeff))
    }

    fn integer(&mut self) -> Result<u64> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an integer");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse {
                pos: start,
                msg: format!("{e}"),
            })
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.src;
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let s = std::str::from_utf8(&bytes[start..self.pos]).unwrap();
        s.parse().map_err(|_| Error::Parse {
            pos: start,
            msg: format!("bad number `{s}`"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str, n: usize) -> SparsePoly {
        SparsePoly::parse(s, n, 1).unwrap()
    }

    fn random_poly(rng: &mut ChaCha8Rng, n: usize, deg: u32, terms: usize) -> SparsePoly {
        let ts = (0..terms).map(|_| {
            let mut e = vec![0u32; n];
            let mut left = rng.random_range(0..=deg);
            while left > 0 {
                e[rng.random_range(0..n)] += 1;
                left -= 1;
            }
            (e, rng.random_range(-2.0..2.0))
        });
        SparsePoly::from_terms(n, ts).unwrap()
    }

    /// Monomial-by-monomial summation, written independently of `eval`.
    fn oracle_eval(p: &SparsePoly, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, c) in p.terms() {
            let mut m = c;
            for (i, &a) in e.iter().enumerate() {
                for _ in 0..a {
                    m *= x[i];
                }
            }
            total += m;
        }
        total
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("X1^2 + X2^2", 2).eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(p("X1*X2", 2).eval(&[2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            p("X1", 2).eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn eval_matches_monomial_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_poly(&mut rng, 3, 3, 12);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = q.eval(&x).unwrap();
            let b = oracle_eval(&q, &x);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_examples() {
        let g = p("X1^2", 2).gradient();
        assert_eq!(g.polys()[0], p("2*X1", 2));
        assert!(g.polys()[1].is_zero());
        let g = p("X1*X2", 2).gradient();
        assert_eq!(g.polys()[0], p("X2", 2));
        assert_eq!(g.polys()[1], p("X1", 2));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 1 + trial % 6;
            let q = random_poly(&mut rng, n, 5, 10);
            let grad = q.gradient();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let h = 1e-6;
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (q.eval(&xp).unwrap() - q.eval(&xm).unwrap()) / (2.0 * h);
                let an = grad.polys()[i].eval(&x).unwrap();
                let scale = an.abs().max(1.0);
                assert!((fd - an).abs() <= 1e-5 * scale, "trial {trial} var {i}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn homogenize_examples() {
        let h = p("X1^2 + 1", 1).homogenize();
        assert_eq!(h, SparsePoly::parse("X1^2 + X0^2", 2, 0).unwrap());
        let h = p("X1 + X2^2", 2).homogenize();
        assert_eq!(h, SparsePoly::parse("X0*X1 + X2^2", 3, 0).unwrap());
        assert!(h.is_homogeneous());
    }

    #[test]
    fn dehomogenize_examples() {
        let d = SparsePoly::parse("X0^2 + X1^2", 2, 0).unwrap().dehomogenize();
        assert_eq!(d, p("1 + X1^2", 1));
        let d = SparsePoly::parse("X0*X1", 2, 0).unwrap().dehomogenize();
        assert_eq!(d, p("X1", 1));
    }

    #[test]
    fn homogenize_round_trip_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_poly(&mut rng, 3, 4, 8);
            let h = q.homogenize();
            assert_eq!(h.dehomogenize(), q);
            assert_eq!(h.degree(), q.degree());
            assert!(h.dehomogenize().degree() <= h.degree());
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lam: f64 = rng.random_range(0.2..2.0);
            let xs: Vec<f64> = x.iter().map(|v| v * lam).collect();
            let lhs = h.eval(&xs).unwrap();
            let rhs = lam.powi(h.degree() as i32) * h.eval(&x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-3));
        }
    }

    #[test]
    fn sum_of_squares_examples() {
        let f = PolySystem::parse(&["X1", "X2"], 2, 1).unwrap();
        assert_eq!(sum_of_squares(&f).unwrap(), p("X1^2 + X2^2", 2));
        let f = PolySystem::parse(&["X1*X2"], 2, 1).unwrap();
        assert_eq!(sum_of_squares(&f).unwrap(), p("X1^2*X2^2", 2));
        assert!(matches!(
            sum_of_squares(&PolySystem::new(2, vec![]).unwrap()),
            Err(Error::EmptyFamily)
        ));
    }

    #[test]
    fn sum_of_squares_zero_set_on_grid() {
        // Q = (X1 - 1)^2 + (X1*X2)^2 vanishes exactly at (1, 0).
        let f = PolySystem::parse(&["X1 - 1", "X1*X2"], 2, 1).unwrap();
        let q = sum_of_squares(&f).unwrap();
        assert_eq!(q.degree(), 2 * f.max_degree());
        for i in 0..50 {
            for j in 0..50 {
                let x = [-2.0 + 4.0 * i as f64 / 49.0, -2.0 + 4.0 * j as f64 / 49.0];
                let qv = q.eval(&x).unwrap();
                let all_zero = f.eval(&x).unwrap().iter().all(|v| *v == 0.0);
                assert!(qv >= 0.0);
                assert_eq!(qv == 0.0, all_zero, "at {x:?}");
            }
        }
    }

    #[test]
    fn deformation_examples() {
        let q = p("X1^2", 2);
        let g = p("X2^2", 2);
        assert_eq!(deformation_poly(&q, &g, 0.0).unwrap(), q);
        assert_eq!(deformation_poly(&q, &g, 1.0).unwrap(), -&g);
        assert_eq!(deformation_poly(&q, &g, 0.5).unwrap(), p("0.5*X1^2 - 0.5*X2^2", 2));
        assert!(deformation_poly(&q, &g, 1.5).is_err());
    }

    #[test]
    fn cr_set_examples() {
        let g = p("X1^2 + X2^2 + X3^2", 3);
        let c0 = cr_set(&g, 0).unwrap();
        assert_eq!(c0.polys(), &[g.clone()]);
        let c2 = cr_set(&g, 2).unwrap();
        assert_eq!(c2.polys(), &[g.clone(), p("2*X1", 3), p("2*X2", 3)]);
        for k in 0..=3 {
            assert_eq!(cr_set(&g, k).unwrap().len(), k + 1);
        }
        assert!(cr_set(&g, 4).is_err());
    }

    #[test]
    fn rotation_examples() {
        let s = PolySystem::parse(&["X1^2 + X2^2", "X1 - 3*X2"], 2, 1).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(rotate_coords(&s, &id).unwrap(), s);

        let th = 0.7_f64;
        let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let rs = rotate_coords(&s, &r).unwrap();
        let circle = &rs.polys()[0];
        assert_eq!(circle.num_terms(), 2);
        assert!((circle.coeff(&[2, 0]) - 1.0).abs() < 1e-12);
        assert!((circle.coeff(&[0, 2]) - 1.0).abs() < 1e-12);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(rotate_coords(&s, &bad), Err(Error::NotOrthogonal(_))));
    }

    #[test]
    fn rotation_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_poly(&mut rng, 3, 4, 10);
        let s = PolySystem::new(3, vec![q.clone()]).unwrap();
        let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let r = g.qr().q();
        let rs = rotate_coords(&s, &r).unwrap();
        assert_eq!(rs.polys()[0].degree(), q.degree());
        for _ in 0..100 {
            let x = nalgebra::DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let rx = &r * &x;
            let a = rs.polys()[0].eval(x.as_slice()).unwrap();
            let b = q.eval(rx.as_slice()).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn text_round_trip() {
        let q = p("3.5*X1^2*X2 - X2^3 + 0.25 - 1e-20*X1", 2);
        let text = q.to_text(1);
        assert_eq!(text, "3.5 * X1^2 * X2 - X2^3 - 1e-20 * X1 + 0.25");
        assert_eq!(p(&text, 2), q);
        assert_eq!(SparsePoly::zero(2).to_text(1), "0");
    }

    #[test]
    fn parse_errors() {
        assert!(SparsePoly::parse("X3", 2, 1).is_err());
        assert!(SparsePoly::parse("X1 +", 2, 1).is_err());
        assert!(SparsePoly::parse("", 2, 1).is_err());
        assert!(SparsePoly::parse("X1 X2", 2, 1).is_err());
        assert!(SparsePoly::parse("X0", 2, 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_poly(n: usize) -> impl Strategy<Value = SparsePoly> {
            prop::collection::vec((prop::collection::vec(0u32..4, n), -3.0f64..3.0), 0..8)
                .prop_map(move |ts| SparsePoly::from_terms(n, ts).unwrap())
        }

        proptest! {
            #[test]
            fn eval_is_linear(a in arb_poly(3), b in arb_poly(3),
                              x in prop::collection::vec(-2.0f64..2.0, 3)) {
                let lhs = (&a + &b).eval(&x).unwrap();
                let rhs = a.eval(&x).unwrap() + b.eval(&x).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }

            #[test]
            fn text_form_round_trips(a in arb_poly(3)) {
                prop_assert_eq!(SparsePoly::parse(&a.to_text(1), 3, 1).unwrap(), a);
            }

            #[test]
            fn sum_of_squares_is_nonnegative(a in arb_poly(2), b in arb_poly(2),
                                             x in prop::collection::vec(-3.0f64..3.0, 2)) {
                let f = PolySystem::new(2, vec![a, b]).unwrap();
                prop_assert!(sum_of_squares(&f).unwrap().eval(&x).unwrap() >= -1e-12);
            }

            #[test]
            fn cr_set_keeps_g_first(a in arb_poly(3), k in 0usize..=3) {
                let c = cr_set(&a, k).unwrap();
                prop_assert_eq!(c.len(), k + 1);
                prop_assert_eq!(&c.polys()[0], &a);
            }
        }
    }
}
