//! Outward-rounded interval arithmetic, used to prove that a polynomial has no
//! zero inside a box.

use std::ops::{Add, Mul, Sub};

use crate::poly::SparsePoly;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn centered(c: f64, r: f64) -> Self {
        Interval::new(c - r, c + r).widened()
    }

    fn widened(self) -> Self {
        Interval {
            lo: self.lo.next_down(),
            hi: self.hi.next_up(),
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn scale(self, c: f64) -> Self {
        let (a, b) = (self.lo * c, self.hi * c);
        Interval::new(a.min(b), a.max(b)).widened()
    }

    pub fn powi(self, k: u32) -> Self {
        match k {
            0 => Interval::point(1.0),
            1 => self,
            _ => {
                let (a, b) = (self.lo.powi(k as i32), self.hi.powi(k as i32));
                if k % 2 == 1 {
                    Interval::new(a, b).widened()
                } else if self.contains_zero() {
                    Interval::new(0.0, a.max(b)).widened()
                } else {
                    Interval::new(a.min(b), a.max(b)).widened()
                }
            }
        }
    }

    /// Encloses `x²` summed over a box; used for the sphere constraint.
    pub fn sum_sq(boxes: &[Interval]) -> Self {
        boxes
            .iter()
            .fold(Interval::point(0.0), |acc, &b| acc + b.powi(2))
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, r: Interval) -> Interval {
        Interval::new(self.lo + r.lo, self.hi + r.hi).widened()
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, r: Interval) -> Interval {
        Interval::new(self.lo - r.hi, self.hi - r.lo).widened()
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, r: Interval) -> Interval {
        let c = [self.lo * r.lo, self.lo * r.hi, self.hi * r.lo, self.hi * r.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi).widened()
    }
}

/// Encloses the range of `p` over the box `b`.
pub fn eval_box(p: &SparsePoly, b: &[Interval]) -> Interval {
    debug_assert_eq!(b.len(), p.n_vars());
    let mut acc = Interval::point(0.0);
    for (exps, c) in p.terms() {
        let mut term = Interval::point(1.0);
        for (i, &a) in exps.iter().enumerate() {
            if a > 0 {
                term = term * b[i].powi(a);
            }
        }
        acc = acc + term.scale(c);
    }
    acc
}
