//! Integral 0-currents (signed atoms) and polyhedral 1-currents (segments).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Domain, Point};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom<F, const D: usize> {
    pub point: Point<F, D>,
    pub mult: i64,
}

/// A finite sum of integer-weighted Dirac masses.
///
/// Co-located atoms are kept as given until [`ZeroCurrent::merged`] is called;
/// every measurement merges first, so merging never changes a result.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroCurrent<F, const D: usize> {
    atoms: Vec<Atom<F, D>>,
}

impl<F: Real, const D: usize> Default for ZeroCurrent<F, D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<F: Real, const D: usize> ZeroCurrent<F, D> {
    pub fn zero() -> Self {
        ZeroCurrent { atoms: Vec::new() }
    }

    /// Builds a current, dropping zero multiplicities.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (Point<F, D>, i64)>) -> Self {
        ZeroCurrent {
            atoms: atoms
                .into_iter()
                .filter(|(_, m)| *m != 0)
                .map(|(point, mult)| Atom { point, mult })
                .collect(),
        }
    }

    pub fn dirac(point: Point<F, D>) -> Self {
        Self::from_atoms([(point, 1)])
    }

    pub fn push(&mut self, point: Point<F, D>, mult: i64) {
        if mult != 0 {
            self.atoms.push(Atom { point, mult });
        }
    }

    pub fn atoms(&self) -> &[Atom<F, D>] {
        &self.atoms
    }

    /// Canonical form: co-located atoms combined (bitwise coordinate
    /// equality), zeros dropped, atoms in lexicographic order.
    pub fn merged(&self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.point.lex_cmp(&b.point));
        let mut out: Vec<Atom<F, D>> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match out.last_mut() {
                Some(last) if last.point == a.point => last.mult += a.mult,
                _ => out.push(a),
            }
        }
        out.retain(|a| a.mult != 0);
        ZeroCurrent { atoms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.merged().atoms.is_empty()
    }

    /// Atoms strictly inside the domain.
    pub fn restrict(&self, domain: &impl Domain<F, D>) -> Self {
        ZeroCurrent {
            atoms: self.atoms.iter().filter(|a| domain.contains(&a.point)).copied().collect(),
        }
        .merged()
    }

    /// Total variation inside the domain.
    pub fn mass(&self, domain: &impl Domain<F, D>) -> F {
        F::of_i64(self.restrict(domain).total_mass())
    }

    /// Sum of |multiplicity| over all atoms after merging.
    pub fn total_mass(&self) -> i64 {
        self.merged().atoms.iter().map(|a| a.mult.abs()).sum()
    }

    /// Sum of signed multiplicities.
    pub fn total_charge(&self) -> i64 {
        self.atoms.iter().map(|a| a.mult).sum()
    }

    pub fn neg(&self) -> Self {
        ZeroCurrent {
            atoms: self.atoms.iter().map(|a| Atom { point: a.point, mult: -a.mult }).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        ZeroCurrent { atoms }.merged()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Equality as currents (after merging both sides).
    pub fn same_as(&self, other: &Self) -> bool {
        self.merged() == other.merged()
    }

    pub fn map_points<G: Real>(&self, f: impl Fn(&Point<F, D>) -> Point<G, D>) -> ZeroCurrent<G, D> {
        ZeroCurrent::from_atoms(self.atoms.iter().map(|a| (f(&a.point), a.mult)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<F, const D: usize> {
    pub a: Point<F, D>,
    pub b: Point<F, D>,
    pub mult: i64,
}

impl<F: Real, const D: usize> Segment<F, D> {
    pub fn length(&self) -> F {
        self.a.dist(&self.b)
    }
}

/// A finite sum of oriented, integer-weighted segments `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneCurrent<F, const D: usize> {
    segments: Vec<Segment<F, D>>,
}

impl<F: Real, const D: usize> Default for OneCurrent<F, D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<F: Real, const D: usize> OneCurrent<F, D> {
    pub fn zero() -> Self {
        OneCurrent { segments: Vec::new() }
    }

    /// Appends `mult * [a, b]`. Degenerate or zero-weight segments are the
    /// zero current and are skipped.
    pub fn push(&mut self, a: Point<F, D>, b: Point<F, D>, mult: i64) {
        if mult != 0 && a != b {
            self.segments.push(Segment { a, b, mult });
        }
    }

    pub fn from_segments(segs: impl IntoIterator<Item = (Point<F, D>, Point<F, D>, i64)>) -> Self {
        let mut c = Self::zero();
        for (a, b, m) in segs {
            c.push(a, b, m);
        }
        c
    }

    /// Closed polygon through the given vertices, unit multiplicity.
    pub fn polygon(vertices: &[Point<F, D>]) -> Self {
        let n = vertices.len();
        Self::from_segments((0..n).map(|i| (vertices[i], vertices[(i + 1) % n], 1)))
    }

    pub fn segments(&self) -> &[Segment<F, D>] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn mass(&self) -> F {
        self.segments
            .iter()
            .fold(F::zero(), |acc, s| acc + F::of_i64(s.mult.abs()) * s.length())
    }

    /// `sum m (delta_b - delta_a)`, counting only endpoints strictly inside
    /// the domain.
    pub fn boundary(&self, domain: &impl Domain<F, D>) -> ZeroCurrent<F, D> {
        let mut out = ZeroCurrent::zero();
        for s in &self.segments {
            if domain.contains(&s.b) {
                out.push(s.b, s.mult);
            }
            if domain.contains(&s.a) {
                out.push(s.a, -s.mult);
            }
        }
        out.merged()
    }

    /// Boundary in all of R^D.
    pub fn boundary_free(&self) -> ZeroCurrent<F, D> {
        let mut out = ZeroCurrent::zero();
        for s in &self.segments {
            out.push(s.b, s.mult);
            out.push(s.a, -s.mult);
        }
        out.merged()
    }

    pub fn reversed(&self) -> Self {
        OneCurrent {
            segments: self.segments.iter().map(|s| Segment { a: s.b, b: s.a, mult: s.mult }).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut segments = self.segments.clone();
        segments.extend_from_slice(&other.segments);
        OneCurrent { segments }.merged()
    }

    /// Canonical form: every segment oriented with `a < b` lexicographically,
    /// identical segments combined, zeros dropped, sorted.
    pub fn merged(&self) -> Self {
        let mut segs: Vec<Segment<F, D>> = self
            .segments
            .iter()
            .map(|s| {
                if s.a.lex_cmp(&s.b) == Ordering::Greater {
                    Segment { a: s.b, b: s.a, mult: -s.mult }
                } else {
                    *s
                }
            })
            .collect();
        segs.sort_by(|x, y| x.a.lex_cmp(&y.a).then(x.b.lex_cmp(&y.b)));
        let mut out: Vec<Segment<F, D>> = Vec::with_capacity(segs.len());
        for s in segs {
            match out.last_mut() {
                Some(last) if last.a == s.a && last.b == s.b => last.mult += s.mult,
                _ => out.push(s),
            }
        }
        out.retain(|s| s.mult != 0);
        OneCurrent { segments: out }
    }

    pub fn total_length(&self) -> F {
        self.segments.iter().fold(F::zero(), |acc, s| acc + s.length())
    }
}

/// JSON document holding a 0-current and/or a 1-current:
/// `{"dim":2,"atoms":[{"x":[2.0,2.0],"m":1}],"segments":[{"a":[..],"b":[..],"m":1}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentsJson {
    pub dim: usize,
    #[serde(default)]
    pub atoms: Vec<AtomJson>,
    #[serde(default)]
    pub segments: Vec<SegmentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomJson {
    pub x: Vec<f64>,
    pub m: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentJson {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub m: i64,
}

fn to_point<const D: usize>(v: &[f64]) -> Result<Point<f64, D>> {
    let c: [f64; D] = v
        .try_into()
        .map_err(|_| invalid(format!("expected {D} coordinates, got {}", v.len())))?;
    let p = Point(c);
    if !p.is_finite() {
        return Err(invalid("non-finite coordinate"));
    }
    Ok(p)
}

impl CurrentsJson {
    pub fn new<const D: usize>(zero: &ZeroCurrent<f64, D>, one: &OneCurrent<f64, D>) -> Self {
        CurrentsJson {
            dim: D,
            atoms: zero.atoms().iter().map(|a| AtomJson { x: a.point.0.to_vec(), m: a.mult }).collect(),
            segments: one
                .segments()
                .iter()
                .map(|s| SegmentJson { a: s.a.0.to_vec(), b: s.b.0.to_vec(), m: s.mult })
                .collect(),
            source: None,
        }
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = Some(source.to_string());
        self
    }

    fn check_dim<const D: usize>(&self) -> Result<()> {
        if self.dim != D {
            return Err(invalid(format!("current has dim {}, expected {D}", self.dim)));
        }
        Ok(())
    }

    pub fn zero_current<const D: usize>(&self) -> Result<ZeroCurrent<f64, D>> {
        self.check_dim::<D>()?;
        let mut t = ZeroCurrent::zero();
        for a in &self.atoms {
            if a.m == 0 {
                return Err(invalid("atom multiplicity must be nonzero"));
            }
            t.push(to_point::<D>(&a.x)?, a.m);
        }
        Ok(t)
    }

    pub fn one_current<const D: usize>(&self) -> Result<OneCurrent<f64, D>> {
        self.check_dim::<D>()?;
        let mut s = OneCurrent::zero();
        for seg in &self.segments {
            let (a, b) = (to_point::<D>(&seg.a)?, to_point::<D>(&seg.b)?);
            if a == b || seg.m == 0 {
                return Err(invalid("segments need distinct endpoints and nonzero multiplicity"));
            }
            s.push(a, b, seg.m);
        }
        Ok(s)
    }
}
