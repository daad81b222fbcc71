//! Cube grids `G(l, a) = {a + z l + [0, l]^d}`, their skeleta and dual
//! cells, and the deformation of polygonal 1-currents in R^3 onto the dual
//! 1-skeleton.
//!
//! Inside a cube `Q` the radial projection away from the 1-skeleton retracts
//! `Q` minus its edges onto the star joining the center of `Q` to the
//! centers of its six faces. The star is a tree, so the image of a transversal
//! curve is fixed by where the curve crosses the faces: the dual edge through
//! a face carries the signed number of crossings of that face. This is how
//! [`deform_to_dual`] evaluates the pushforward.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::currents::OneCurrent;
use crate::error::{invalid, Error, Result};
use crate::geometry::{BoxDomain, Domain, Point};
use crate::rng::task_rng;
use crate::scalar::Real;

/// Transversality margin relative to the cube side.
pub const MARGIN: f64 = 1e-3;
pub const PILOT_SHIFTS: usize = 64;
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<F, const D: usize> {
    pub ell: F,
    pub shift: Point<F, D>,
}

/// An `h`-cell `a + l (z + sum_{i in axes} [0, 1] e_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef<const D: usize> {
    pub index: [i64; D],
    /// Bit `i` set when the cell spans axis `i`.
    pub axes: u8,
}

impl<const D: usize> CellRef<D> {
    pub fn dim(&self) -> u32 {
        self.axes.count_ones()
    }

    /// The cell of the dual grid meeting this one at its center.
    pub fn dual(&self) -> CellRef<D> {
        let mut index = self.index;
        for (i, z) in index.iter_mut().enumerate() {
            if self.axes & (1 << i) == 0 {
                *z -= 1;
            }
        }
        CellRef { index, axes: !self.axes & ((1u16 << D) - 1) as u8 }
    }
}

/// A lattice 2-face `a + l(z + [0,1] e_u + [0,1] e_v)` with normal `e_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FaceRef {
    pub index: [i64; 3],
    pub normal: usize,
}

impl FaceRef {
    pub fn cell(&self) -> CellRef<3> {
        CellRef { index: self.index, axes: 0b111 & !(1 << self.normal) }
    }
}

impl<F: Real, const D: usize> GridSpec<F, D> {
    /// The shift is reduced into `[0, l)^d`.
    pub fn new(ell: F, shift: [F; D]) -> Result<Self> {
        if !(ell > F::zero()) || !ell.is_finite() {
            return Err(invalid("cube side must be positive"));
        }
        let shift = Point(shift.map(|s| {
            let r = s - (s / ell).floor() * ell;
            if r >= ell {
                F::zero()
            } else {
                r
            }
        }));
        if !shift.is_finite() {
            return Err(invalid("non-finite grid shift"));
        }
        Ok(GridSpec { ell, shift })
    }

    /// `G(l, a + l/2 (1, ..., 1))`, kept unreduced so that cell indices of
    /// [`CellRef::dual`] refer to it directly.
    pub fn dual(&self) -> GridSpec<F, D> {
        let half = self.ell / F::of(2.0);
        GridSpec { ell: self.ell, shift: self.shift.map(|s| s + half) }
    }

    /// Fractional cube coordinate `(x_i - a_i)/l`.
    fn coord(&self, x: &Point<F, D>, i: usize) -> F {
        (x.0[i] - self.shift.0[i]) / self.ell
    }

    pub fn cube_of(&self, x: &Point<F, D>) -> [i64; D] {
        std::array::from_fn(|i| self.coord(x, i).floor().to_i64().unwrap_or(i64::MAX))
    }

    pub fn cube_center(&self, z: [i64; D]) -> Point<F, D> {
        let half = F::of(0.5);
        Point(std::array::from_fn(|i| self.shift.0[i] + (F::of_i64(z[i]) + half) * self.ell))
    }

    pub fn lower_corner(&self, cell: &CellRef<D>) -> Point<F, D> {
        Point(std::array::from_fn(|i| self.shift.0[i] + F::of_i64(cell.index[i]) * self.ell))
    }

    /// Center of a cell.
    pub fn cell_center(&self, cell: &CellRef<D>) -> Point<F, D> {
        let half = self.ell / F::of(2.0);
        let lo = self.lower_corner(cell);
        Point(std::array::from_fn(|i| if cell.axes & (1 << i) != 0 { lo.0[i] + half } else { lo.0[i] }))
    }

    /// Distance from `x` to the union of all `h`-cells.
    pub fn skeleton_distance(&self, x: &Point<F, D>, h: usize) -> F {
        if h >= D {
            return F::zero();
        }
        let mut t: [F; D] = std::array::from_fn(|i| {
            let c = self.coord(x, i);
            (c - c.round()).abs() * self.ell
        });
        t.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        t[..D - h].iter().fold(F::zero(), |s, &v| s + v * v).sqrt()
    }
}

/// Signed crossing counts of a polygonal 1-current with the 2-faces of a
/// grid in R^3.
///
/// A segment crosses the plane `x_k = c` when its endpoints lie on different
/// sides, a point on the plane counting as the upper side; consecutive
/// segments of a polygon therefore never double count. Every crossing must
/// stay `MARGIN * l` away from the 1-skeleton.
pub fn intersection_numbers<F: Real>(curve: &OneCurrent<F, 3>, grid: &GridSpec<F, 3>) -> Result<BTreeMap<FaceRef, i64>> {
    let margin = F::of(MARGIN) * grid.ell;
    let mut out: BTreeMap<FaceRef, i64> = BTreeMap::new();
    for s in curve.segments() {
        for k in 0..3 {
            let ca = grid.coord(&s.a, k);
            let cb = grid.coord(&s.b, k);
            let (lo, hi) = if ca < cb { (ca, cb) } else { (cb, ca) };
            // planes j with lo < j <= hi (upper-side convention)
            let first = lo.floor().to_i64().unwrap_or(0) + 1;
            let last = hi.floor().to_i64().unwrap_or(0);
            let sign = if cb > ca { 1 } else { -1 };
            for j in first..=last {
                let t = (F::of_i64(j) - ca) / (cb - ca);
                let p = s.a + (s.b - s.a) * t;
                let mut index = grid.cube_of(&p);
                index[k] = j;
                for (u, &z) in index.iter().enumerate() {
                    if u == k {
                        continue;
                    }
                    let c = grid.coord(&p, u);
                    let gap = (c - F::of_i64(z)).min(F::of_i64(z + 1) - c) * grid.ell;
                    if gap < margin {
                        return Err(Error::NotTransversal(format!(
                            "crossing of plane {j} along axis {k} is {} from a cube edge",
                            gap.as_f64()
                        )));
                    }
                }
                *out.entry(FaceRef { index, normal: k }).or_insert(0) += sign * s.mult;
            }
        }
    }
    out.retain(|_, v| *v != 0);
    Ok(out)
}

/// Endpoints of the dual edge through a face: from the center of the cube
/// below it to the center of the cube above it along the normal.
pub fn dual_edge_of<F: Real>(grid: &GridSpec<F, 3>, face: &FaceRef) -> (Point<F, 3>, Point<F, 3>) {
    let mut below = face.index;
    below[face.normal] -= 1;
    (grid.cube_center(below), grid.cube_center(face.index))
}

/// Pushforward of a polygonal 1-current onto the dual 1-skeleton.
///
/// The curve must keep `MARGIN * l` from the 1-skeleton and `2 l sqrt(3)`
/// from the boundary of `v`.
pub fn deform_to_dual<F: Real>(
    curve: &OneCurrent<F, 3>,
    grid: &GridSpec<F, 3>,
    v: &BoxDomain<F, 3>,
) -> Result<OneCurrent<F, 3>> {
    let keep = F::of(2.0 * 3f64.sqrt()) * grid.ell;
    for s in curve.segments() {
        for p in [s.a, s.b] {
            if !v.contains(&p) || v.boundary_distance(&p) < keep {
                return Err(Error::TooClose(format!("curve point {:?} within 2l*sqrt(3) of the domain boundary", p.0)));
            }
        }
    }
    if curve_skeleton_distance(curve, grid) < F::of(MARGIN) * grid.ell {
        return Err(Error::NotTransversal("curve meets the 1-skeleton; re-shift the grid".into()));
    }
    let counts = intersection_numbers(curve, grid)?;
    let mut out = OneCurrent::zero();
    for (face, m) in &counts {
        let (a, b) = dual_edge_of(grid, face);
        out.push(a, b, *m);
    }
    Ok(out)
}

fn segment_samples<F: Real>(a: &Point<F, 3>, b: &Point<F, 3>, step: F) -> Vec<(Point<F, 3>, F)> {
    // three-point Gauss rule on pieces of length at most `step`
    let len = a.dist(b);
    let pieces = (len / step).ceil().to_usize().unwrap_or(1).max(1);
    let nodes = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    let mut out = Vec::with_capacity(3 * pieces);
    let dl = len / F::of(pieces as f64);
    for q in 0..pieces {
        for &(x, w) in &nodes {
            let t = (F::of(q as f64) + F::of(0.5 * (x + 1.0))) / F::of(pieces as f64);
            out.push((*a + (*b - *a) * t, dl * F::of(0.5 * w)));
        }
    }
    out
}

/// Minimum distance from the curve to the 1-skeleton, estimated on the
/// segment endpoints and a dense sampling of every segment.
pub fn curve_skeleton_distance<F: Real>(curve: &OneCurrent<F, 3>, grid: &GridSpec<F, 3>) -> F {
    let step = grid.ell / F::of(256.0);
    let mut best = F::infinity();
    for s in curve.segments() {
        best = best.min(grid.skeleton_distance(&s.a, 1)).min(grid.skeleton_distance(&s.b, 1));
        for (p, _) in segment_samples(&s.a, &s.b, step) {
            best = best.min(grid.skeleton_distance(&p, 1));
        }
    }
    best
}

/// `int_curve dist(x, R_1)^{-1} dH^1`.
pub fn inverse_distance_integral<F: Real>(curve: &OneCurrent<F, 3>, grid: &GridSpec<F, 3>) -> F {
    let step = grid.ell / F::of(64.0);
    let mut total = F::zero();
    for s in curve.segments() {
        for (p, w) in segment_samples(&s.a, &s.b, step) {
            total = total + w * F::of_i64(s.mult.abs()) / grid.skeleton_distance(&p, 1);
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftDiagnostics {
    pub pilot_mean: f64,
    pub threshold: f64,
    pub attempts: usize,
    pub margin_rejections: usize,
    pub integral_rejections: usize,
    pub accepted_integral: f64,
    pub acceptance_rate: f64,
    pub expected_rate_lower_bound: f64,
}

fn random_shift<F: Real>(rng: &mut impl Rng, ell: F) -> [F; 3] {
    std::array::from_fn(|_| F::of(rng.gen::<f64>()) * ell)
}

fn pilot_mean<F: Real>(curve: &OneCurrent<F, 3>, ell: F, seed: u64) -> Result<F> {
    let mut rng = task_rng(seed, 0);
    let mut sum = F::zero();
    for _ in 0..PILOT_SHIFTS {
        let g = GridSpec::new(ell, random_shift(&mut rng, ell))?;
        sum = sum + inverse_distance_integral(curve, &g);
    }
    Ok(sum / F::of(PILOT_SHIFTS as f64))
}

/// Outcome of testing one shift against the two acceptance criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftVerdict {
    Accepted,
    Margin,
    Integral,
}

fn judge<F: Real>(curve: &OneCurrent<F, 3>, grid: &GridSpec<F, 3>, threshold: F) -> (ShiftVerdict, F) {
    if curve_skeleton_distance(curve, grid) < F::of(MARGIN) * grid.ell {
        return (ShiftVerdict::Margin, F::infinity());
    }
    let i = inverse_distance_integral(curve, grid);
    (if i <= threshold { ShiftVerdict::Accepted } else { ShiftVerdict::Integral }, i)
}

/// Rejection-samples a grid shift.
///
/// A shift is accepted when the curve keeps `MARGIN * l` from the
/// 1-skeleton and `I(a) = int dist(x, R_1)^{-1}` is at most `2 mean(I) / delta`,
/// the mean taken over `PILOT_SHIFTS` pilot shifts. By Markov's inequality at
/// most a fraction `delta / 2` of shifts fail the integral test.
pub fn select_shift<F: Real>(
    curve: &OneCurrent<F, 3>,
    ell: F,
    delta: F,
    seed: u64,
) -> Result<(GridSpec<F, 3>, ShiftDiagnostics)> {
    if curve.is_empty() {
        return Err(invalid("empty curve"));
    }
    if !(delta > F::zero()) {
        return Err(invalid("delta must be positive"));
    }
    let mean = pilot_mean(curve, ell, seed)?;
    let threshold = F::of(2.0) * mean / delta;
    let mut rng = task_rng(seed, 1);
    let (mut margin, mut integral) = (0, 0);
    for attempt in 1..=MAX_REJECTIONS {
        let g = GridSpec::new(ell, random_shift(&mut rng, ell))?;
        match judge(curve, &g, threshold) {
            (ShiftVerdict::Accepted, i) => {
                let d = delta.as_f64();
                return Ok((
                    g,
                    ShiftDiagnostics {
                        pilot_mean: mean.as_f64(),
                        threshold: threshold.as_f64(),
                        attempts: attempt,
                        margin_rejections: margin,
                        integral_rejections: integral,
                        accepted_integral: i.as_f64(),
                        acceptance_rate: 1.0 / attempt as f64,
                        expected_rate_lower_bound: d / (2.0 + 2.0 * d),
                    },
                ));
            }
            (ShiftVerdict::Margin, _) => margin += 1,
            (ShiftVerdict::Integral, _) => integral += 1,
        }
    }
    Err(Error::ShiftRejected(MAX_REJECTIONS))
}

/// Fraction of `samples` uniform shifts accepted by the criteria of
/// [`select_shift`].
pub fn shift_acceptance_frequency<F: Real>(
    curve: &OneCurrent<F, 3>,
    ell: F,
    delta: F,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let threshold = F::of(2.0) * pilot_mean(curve, ell, seed)? / delta;
    let mut rng = task_rng(seed, 2);
    let mut hits = 0usize;
    for _ in 0..samples {
        let g = GridSpec::new(ell, random_shift(&mut rng, ell))?;
        hits += (judge(curve, &g, threshold).0 == ShiftVerdict::Accepted) as usize;
    }
    Ok(hits as f64 / samples as f64)
}

fn point_segment_distance<F: Real, const D: usize>(x: &Point<F, D>, a: &Point<F, D>, b: &Point<F, D>) -> F {
    let d = *b - *a;
    let dd = d.dot(&d);
    let t = if dd > F::zero() { ((*x - *a).dot(&d) / dd).max(F::zero()).min(F::one()) } else { F::zero() };
    x.dist(&(*a + d * t))
}

/// Monte-Carlo estimate of `int_{S_t} dist(x, S)^{-p} dx` for a union `S` of
/// segments (degenerate segments are points), with `S_t` the open
/// `t`-neighbourhood.
pub fn distance_integral_scaling<F: Real, const D: usize>(
    set: &[(Point<F, D>, Point<F, D>)],
    p: F,
    t: F,
    samples: usize,
    seed: u64,
) -> Result<F> {
    if set.is_empty() || !(t > F::zero()) {
        return Err(invalid("need a nonempty set and t > 0"));
    }
    let dim_s = if set.iter().any(|(a, b)| a != b) { 1 } else { 0 };
    if !(p < F::of((D - dim_s) as f64)) {
        return Err(invalid("p must be below the codimension"));
    }
    let mut lo = [F::infinity(); D];
    let mut hi = [F::neg_infinity(); D];
    for (a, b) in set {
        for i in 0..D {
            lo[i] = lo[i].min(a.0[i]).min(b.0[i]);
            hi[i] = hi[i].max(a.0[i]).max(b.0[i]);
        }
    }
    for i in 0..D {
        lo[i] = lo[i] - t;
        hi[i] = hi[i] + t;
    }
    let vol = (0..D).fold(F::one(), |v, i| v * (hi[i] - lo[i]));
    let mut rng = task_rng(seed, 3);
    let mut acc = 0.0f64;
    let mut hits = 0usize;
    for _ in 0..samples {
        let x = Point(std::array::from_fn(|i| lo[i] + F::of(rng.gen::<f64>()) * (hi[i] - lo[i])));
        let d = set.iter().map(|(a, b)| point_segment_distance(&x, a, b)).fold(F::infinity(), F::min);
        if d < t {
            hits += 1;
            acc += d.powf(-p).as_f64();
        }
    }
    if hits < 1000 {
        return Err(Error::SampleStarvation { hits });
    }
    Ok(F::of(acc / samples as f64) * vol)
}
