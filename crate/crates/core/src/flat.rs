//! Flat norm of 0-boundaries and the admissible-pair functional.
//!
//! For a 0-current `T` in a convex domain, the cheapest filling is a
//! transport plan: every unit of positive mass goes either to a unit of
//! negative mass or to the boundary, every unit of negative mass is reached
//! from a positive unit or from the boundary, and costs are Euclidean
//! lengths. The optimum is found exactly by a square assignment problem with
//! boundary dummies on both sides.

use std::cmp::Ordering;

use crate::assignment;
use crate::currents::{Atom, OneCurrent, ZeroCurrent};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::scalar::Real;

/// Maximal number of unit atoms accepted by [`flat_norm_zero`].
pub const MAX_UNITS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FlatNorm<F, const D: usize> {
    pub value: F,
    /// A 1-current with `boundary(witness) = T` and mass `value`.
    pub witness: OneCurrent<F, D>,
}

/// Unit atoms strictly inside the domain, split by sign.
fn expand_units<F: Real, const D: usize>(
    t: &ZeroCurrent<F, D>,
    domain: &impl Domain<F, D>,
) -> (Vec<Point<F, D>>, Vec<Point<F, D>>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for a in t.restrict(domain).atoms() {
        let bucket = if a.mult > 0 { &mut pos } else { &mut neg };
        for _ in 0..a.mult.unsigned_abs() {
            bucket.push(a.point);
        }
    }
    (pos, neg)
}

pub fn flat_norm_zero<F: Real, const D: usize>(
    t: &ZeroCurrent<F, D>,
    domain: &impl Domain<F, D>,
) -> Result<FlatNorm<F, D>> {
    if !domain.is_convex() {
        return Err(Error::NonConvexDomain);
    }
    let (pos, neg) = expand_units(t, domain);
    let units = pos.len() + neg.len();
    if units > MAX_UNITS {
        return Err(Error::SizeCap { units, cap: MAX_UNITS });
    }
    let (np, nn) = (pos.len(), neg.len());
    let dpos: Vec<F> = pos.iter().map(|x| domain.boundary_distance(x)).collect();
    let dneg: Vec<F> = neg.iter().map(|x| domain.boundary_distance(x)).collect();

    // rows: positives, then one boundary source per negative
    // cols: negatives, then one boundary sink per positive
    let cost = |i: usize, j: usize| -> F {
        match (i < np, j < nn) {
            (true, true) => pos[i].dist(&neg[j]),
            (true, false) => dpos[i],
            (false, true) => dneg[j],
            (false, false) => F::zero(),
        }
    };
    let assign = assignment::solve(units, cost);

    let mut witness = OneCurrent::zero();
    let mut value = F::zero();
    let mut neg_covered = vec![false; nn];
    for (i, &j) in assign.iter().enumerate().take(np) {
        if j < nn {
            witness.push(neg[j], pos[i], 1);
            value = value + pos[i].dist(&neg[j]);
            neg_covered[j] = true;
        } else {
            witness.push(domain.boundary_foot(&pos[i]), pos[i], 1);
            value = value + dpos[i];
        }
    }
    for (j, covered) in neg_covered.iter().enumerate() {
        if !covered {
            witness.push(neg[j], domain.boundary_foot(&neg[j]), 1);
            value = value + dneg[j];
        }
    }
    Ok(FlatNorm { value, witness: witness.merged() })
}

/// Flat distance `F(T1 - T2)`.
pub fn flat_distance<F: Real, const D: usize>(
    t1: &ZeroCurrent<F, D>,
    t2: &ZeroCurrent<F, D>,
    domain: &impl Domain<F, D>,
) -> Result<F> {
    Ok(flat_norm_zero(&t1.sub(t2), domain)?.value)
}

/// One side of an admissible pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Endpoint<F, const D: usize> {
    Atom(Point<F, D>),
    /// Boundary marker, realized at the given foot point.
    Boundary(Point<F, D>),
}

impl<F: Real, const D: usize> Endpoint<F, D> {
    pub fn point(&self) -> Point<F, D> {
        match self {
            Endpoint::Atom(p) | Endpoint::Boundary(p) => *p,
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Endpoint::Boundary(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinPair<F, const D: usize> {
    /// Positive atom or boundary.
    pub y: Endpoint<F, D>,
    /// Negative atom or boundary.
    pub z: Endpoint<F, D>,
    pub distance: F,
}

/// Minimizes `|y - z|` over `T+ x T-`, `T+ x boundary` and `boundary x T-`.
///
/// Same-sign pairs are never admissible. Ties are broken by the smallest
/// `(y, z)` in lexicographic coordinate order. Returns `None` for `T = 0`.
pub fn pair_min<F: Real, const D: usize>(
    t: &ZeroCurrent<F, D>,
    domain: &impl Domain<F, D>,
) -> Option<MinPair<F, D>> {
    let t = t.restrict(domain);
    let (pos, neg): (Vec<&Atom<F, D>>, Vec<&Atom<F, D>>) = t.atoms().iter().partition(|a| a.mult > 0);
    let mut best: Option<MinPair<F, D>> = None;
    let mut offer = |cand: MinPair<F, D>| {
        let better = match &best {
            None => true,
            Some(b) => match cand.distance.partial_cmp(&b.distance).unwrap_or(Ordering::Equal) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => {
                    cand.y.point().lex_cmp(&b.y.point()).then(cand.z.point().lex_cmp(&b.z.point()))
                        == Ordering::Less
                }
            },
        };
        if better {
            best = Some(cand);
        }
    };
    for y in &pos {
        for z in &neg {
            offer(MinPair {
                y: Endpoint::Atom(y.point),
                z: Endpoint::Atom(z.point),
                distance: y.point.dist(&z.point),
            });
        }
        offer(MinPair {
            y: Endpoint::Atom(y.point),
            z: Endpoint::Boundary(domain.boundary_foot(&y.point)),
            distance: domain.boundary_distance(&y.point),
        });
    }
    for z in &neg {
        offer(MinPair {
            y: Endpoint::Boundary(domain.boundary_foot(&z.point)),
            z: Endpoint::Atom(z.point),
            distance: domain.boundary_distance(&z.point),
        });
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Annulus, BoxDomain};

    fn p(x: f64, y: f64) -> Point<f64, 2> {
        Point([x, y])
    }

    fn om() -> BoxDomain<f64, 2> {
        BoxDomain::cube(10.0).unwrap()
    }

    #[test]
    fn dipole_prefers_direct_segment() {
        let t = ZeroCurrent::from_atoms([(p(2.0, 2.0), 1), (p(5.0, 6.0), -1)]);
        let f = flat_norm_zero(&t, &om()).unwrap();
        assert!((f.value - 5.0).abs() < 1e-12);
        assert!(f.witness.boundary(&om()).same_as(&t));
        assert!((f.witness.mass() - f.value).abs() < 1e-12);
    }

    #[test]
    fn single_atom_routes_to_boundary() {
        let t = ZeroCurrent::dirac(p(1.0, 5.0));
        let f = flat_norm_zero(&t, &om()).unwrap();
        assert_eq!(f.value, 1.0);
        assert!(f.witness.boundary(&om()).same_as(&t));
    }

    #[test]
    fn zero_current_has_zero_norm() {
        let f = flat_norm_zero(&ZeroCurrent::<f64, 2>::zero(), &om()).unwrap();
        assert_eq!(f.value, 0.0);
        assert!(f.witness.is_empty());
    }

    #[test]
    fn non_convex_domain_rejected() {
        let a = Annulus::new([0.0, 0.0], 0.5, 1.0).unwrap();
        let t = ZeroCurrent::dirac(p(0.7, 0.0));
        assert_eq!(flat_norm_zero(&t, &a), Err(Error::NonConvexDomain));
    }

    #[test]
    fn size_cap_enforced() {
        let t = ZeroCurrent::from_atoms([(p(5.0, 5.0), (MAX_UNITS + 1) as i64)]);
        assert!(matches!(flat_norm_zero(&t, &om()), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn multiplicity_expands_to_units() {
        // +2 at one point, two separate -1 atoms: co-located units match distinct partners
        let t = ZeroCurrent::from_atoms([(p(5.0, 5.0), 2), (p(5.0, 6.0), -1), (p(5.0, 4.0), -1)]);
        let f = flat_norm_zero(&t, &om()).unwrap();
        assert!((f.value - 2.0).abs() < 1e-12);
        assert!(f.witness.boundary(&om()).same_as(&t));
    }

    #[test]
    fn pair_min_examples() {
        let t = ZeroCurrent::from_atoms([(p(5.0, 5.0), 1), (p(5.0, 6.0), -1)]);
        let m = pair_min(&t, &om()).unwrap();
        assert_eq!(m.y, Endpoint::Atom(p(5.0, 5.0)));
        assert_eq!(m.z, Endpoint::Atom(p(5.0, 6.0)));
        assert_eq!(m.distance, 1.0);

        let t = ZeroCurrent::dirac(p(0.3, 5.0));
        let m = pair_min(&t, &om()).unwrap();
        assert_eq!(m.z, Endpoint::Boundary(p(0.0, 5.0)));
        assert_eq!(m.distance, 0.3);

        // two positives: never paired with each other
        let t = ZeroCurrent::from_atoms([(p(3.0, 3.0), 1), (p(3.5, 3.0), 1)]);
        let m = pair_min(&t, &om()).unwrap();
        assert_eq!(m.distance, 3.0);
        assert!(m.z.is_boundary());

        assert!(pair_min(&ZeroCurrent::<f64, 2>::zero(), &om()).is_none());
    }

    #[test]
    fn pair_min_tie_break_is_lexicographic() {
        let t = ZeroCurrent::from_atoms([(p(5.0, 5.0), 1), (p(4.0, 5.0), -1), (p(6.0, 5.0), -1)]);
        let m = pair_min(&t, &om()).unwrap();
        assert_eq!(m.z, Endpoint::Atom(p(4.0, 5.0)));
    }
}
