//! Points and domains.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// A point of R^D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point<F, const D: usize>(pub [F; D]);

impl<F: Real, const D: usize> Point<F, D> {
    pub fn new(coords: [F; D]) -> Self {
        Point(coords)
    }

    pub fn origin() -> Self {
        Point([F::zero(); D])
    }

    pub fn coords(&self) -> &[F; D] {
        &self.0
    }

    pub fn norm(&self) -> F {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> F {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(F::zero(), |acc, (a, b)| acc + *a * *b)
    }

    pub fn dist(&self, other: &Self) -> F {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Lexicographic order on the coordinates. Total on finite points.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.partial_cmp(b) {
                Some(Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        Ordering::Equal
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        let mut c = self.0;
        for x in c.iter_mut() {
            *x = f(*x);
        }
        Point(c)
    }
}

impl<F: Real, const D: usize> Add for Point<F, D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(rhs.0) {
            *x = *x + y;
        }
        Point(c)
    }
}

impl<F: Real, const D: usize> Sub for Point<F, D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(rhs.0) {
            *x = *x - y;
        }
        Point(c)
    }
}

impl<F: Real, const D: usize> Mul<F> for Point<F, D> {
    type Output = Self;
    fn mul(self, s: F) -> Self {
        self.map(|x| x * s)
    }
}

/// An open region of R^D on which currents are measured.
///
/// Points on the topological boundary are *not* inside.
pub trait Domain<F: Real, const D: usize> {
    fn contains(&self, x: &Point<F, D>) -> bool;
    /// Distance from an interior point to the boundary.
    fn boundary_distance(&self, x: &Point<F, D>) -> F;
    /// A nearest boundary point of an interior point.
    fn boundary_foot(&self, x: &Point<F, D>) -> Point<F, D>;
    fn is_convex(&self) -> bool {
        true
    }
    /// An upper bound for the diameter.
    fn diameter(&self) -> F;
}

/// Axis-aligned open box `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain<F, const D: usize> {
    lo: Point<F, D>,
    hi: Point<F, D>,
}

impl<F: Real, const D: usize> BoxDomain<F, D> {
    pub fn new(lo: [F; D], hi: [F; D]) -> Result<Self> {
        if !lo.iter().zip(hi.iter()).all(|(a, b)| a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid("box needs finite lo < hi componentwise"));
        }
        Ok(BoxDomain { lo: Point(lo), hi: Point(hi) })
    }

    /// The cube `(0, side)^D`.
    pub fn cube(side: F) -> Result<Self> {
        Self::new([F::zero(); D], [side; D])
    }

    pub fn lo(&self) -> &Point<F, D> {
        &self.lo
    }

    pub fn hi(&self) -> &Point<F, D> {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> F {
        self.hi.0[axis] - self.lo.0[axis]
    }

    pub fn volume(&self) -> F {
        (0..D).fold(F::one(), |v, i| v * self.extent(i))
    }

    pub fn center(&self) -> Point<F, D> {
        (self.lo + self.hi) * F::of(0.5)
    }
}

impl<F: Real, const D: usize> Domain<F, D> for BoxDomain<F, D> {
    fn contains(&self, x: &Point<F, D>) -> bool {
        (0..D).all(|i| x.0[i] > self.lo.0[i] && x.0[i] < self.hi.0[i])
    }

    fn boundary_distance(&self, x: &Point<F, D>) -> F {
        (0..D).fold(F::infinity(), |d, i| {
            d.min(x.0[i] - self.lo.0[i]).min(self.hi.0[i] - x.0[i])
        })
    }

    /// Nearest face; ties go to the smallest axis index, lower face first.
    fn boundary_foot(&self, x: &Point<F, D>) -> Point<F, D> {
        let mut best = (F::infinity(), 0usize, false);
        for i in 0..D {
            let dl = x.0[i] - self.lo.0[i];
            if dl < best.0 {
                best = (dl, i, false);
            }
            let dh = self.hi.0[i] - x.0[i];
            if dh < best.0 {
                best = (dh, i, true);
            }
        }
        let mut foot = *x;
        foot.0[best.1] = if best.2 { self.hi.0[best.1] } else { self.lo.0[best.1] };
        foot
    }

    fn diameter(&self) -> F {
        self.hi.dist(&self.lo)
    }
}

/// Open ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball<F, const D: usize> {
    pub center: Point<F, D>,
    pub radius: F,
}

impl<F: Real, const D: usize> Ball<F, D> {
    pub fn new(center: [F; D], radius: F) -> Result<Self> {
        if !(radius > F::zero()) {
            return Err(invalid("ball radius must be positive"));
        }
        Ok(Ball { center: Point(center), radius })
    }
}

impl<F: Real, const D: usize> Domain<F, D> for Ball<F, D> {
    fn contains(&self, x: &Point<F, D>) -> bool {
        x.dist(&self.center) < self.radius
    }

    fn boundary_distance(&self, x: &Point<F, D>) -> F {
        self.radius - x.dist(&self.center)
    }

    fn boundary_foot(&self, x: &Point<F, D>) -> Point<F, D> {
        let v = *x - self.center;
        let r = v.norm();
        if r == F::zero() {
            let mut e = [F::zero(); D];
            e[0] = self.radius;
            return self.center + Point(e);
        }
        self.center + v * (self.radius / r)
    }

    fn diameter(&self) -> F {
        self.radius + self.radius
    }
}

/// Open annulus `r_in < |x - c| < r_out`. Not convex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annulus<F, const D: usize> {
    pub center: Point<F, D>,
    pub inner: F,
    pub outer: F,
}

impl<F: Real, const D: usize> Annulus<F, D> {
    pub fn new(center: [F; D], inner: F, outer: F) -> Result<Self> {
        if !(inner > F::zero() && inner < outer) {
            return Err(invalid("annulus needs 0 < inner < outer"));
        }
        Ok(Annulus { center: Point(center), inner, outer })
    }

    pub fn contains_radius(&self, r: F) -> bool {
        r > self.inner && r < self.outer
    }
}

impl<F: Real, const D: usize> Domain<F, D> for Annulus<F, D> {
    fn contains(&self, x: &Point<F, D>) -> bool {
        self.contains_radius(x.dist(&self.center))
    }

    fn boundary_distance(&self, x: &Point<F, D>) -> F {
        let r = x.dist(&self.center);
        (r - self.inner).min(self.outer - r)
    }

    fn boundary_foot(&self, x: &Point<F, D>) -> Point<F, D> {
        let v = *x - self.center;
        let r = v.norm();
        let target = if r - self.inner <= self.outer - r { self.inner } else { self.outer };
        self.center + v * (target / r)
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn diameter(&self) -> F {
        self.outer + self.outer
    }
}

/// JSON form of a box domain: `{"lo":[...],"hi":[...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxJson {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxJson {
    pub fn to_box<const D: usize>(&self) -> Result<BoxDomain<f64, D>> {
        let lo: [f64; D] = self
            .lo
            .clone()
            .try_into()
            .map_err(|_| invalid(format!("domain lo must have {D} coordinates")))?;
        let hi: [f64; D] = self
            .hi
            .clone()
            .try_into()
            .map_err(|_| invalid(format!("domain hi must have {D} coordinates")))?;
        BoxDomain::new(lo, hi)
    }

    pub fn from_box<const D: usize>(b: &BoxDomain<f64, D>) -> Self {
        BoxJson { lo: b.lo().0.to_vec(), hi: b.hi().0.to_vec() }
    }
}
