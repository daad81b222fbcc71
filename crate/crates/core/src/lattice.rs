//! Uniform lattices over boxes in R^2 and R^3 carrying S^1-valued or
//! R^2-valued node values, and the discrete p-energy.
//!
//! Nodes are indexed x-fastest. A cell is addressed by its lower corner node.
//! The energy uses forward differences along every active axis and a
//! one-point quadrature per cell:
//! `|grad u|^2 = sum_i |u(x + h e_i) - u(x)|^2 / h^2`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::BoxDomain;
use crate::scalar::{pairwise_sum, wrap_angle};

/// Geometry of a uniform lattice. Inactive axes have a single node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
}

impl Lattice {
    pub fn new(dims: &[usize], origin: &[f64], h: f64) -> Result<Self> {
        let dim = dims.len();
        if !(dim == 2 || dim == 3) || origin.len() != dim {
            return Err(invalid("lattices are 2-D or 3-D"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("spacing must be positive"));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(invalid("need at least 2 nodes per axis"));
        }
        let mut d = [1usize; 3];
        let mut o = [0.0; 3];
        d[..dim].copy_from_slice(dims);
        o[..dim].copy_from_slice(origin);
        Ok(Lattice { dim, dims: d, origin: o, h })
    }

    /// Lattice whose nodes span `domain` exactly; every extent must be a
    /// multiple of `h` (relative tolerance 1e-9).
    pub fn from_box<const D: usize>(domain: &BoxDomain<f64, D>, h: f64) -> Result<Self> {
        let mut dims = [0usize; D];
        for (a, n) in dims.iter_mut().enumerate() {
            let ext = domain.extent(a);
            let steps = (ext / h).round();
            if ((steps * h) - ext).abs() > 1e-9 * ext {
                return Err(invalid(format!("extent {ext} along axis {a} is not a multiple of h = {h}")));
            }
            *n = steps as usize + 1;
        }
        Lattice::new(&dims, &domain.lo().0, h)
    }

    /// Largest lattice with spacing `h` anchored at the lower corner of
    /// `domain` and contained in it.
    pub fn inside<const D: usize>(domain: &BoxDomain<f64, D>, h: f64) -> Result<Self> {
        let mut dims = [0usize; D];
        for (a, n) in dims.iter_mut().enumerate() {
            *n = (domain.extent(a) / h * (1.0 + 1e-12)).floor() as usize + 1;
        }
        Lattice::new(&dims, &domain.lo().0, h)
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_dims(&self) -> [usize; 3] {
        let mut c = [1usize; 3];
        for (a, n) in c.iter_mut().enumerate().take(self.dim) {
            *n = self.dims[a] - 1;
        }
        c
    }

    pub fn cell_count(&self) -> usize {
        self.cell_dims().iter().product()
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn index(&self, ix: [usize; 3]) -> usize {
        ix[0] + self.dims[0] * (ix[1] + self.dims[1] * ix[2])
    }

    pub fn unindex(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    pub fn cell_index(&self, ix: [usize; 3]) -> usize {
        let c = self.cell_dims();
        ix[0] + c[0] * (ix[1] + c[1] * ix[2])
    }

    pub fn position(&self, ix: [usize; 3]) -> [f64; 3] {
        let mut p = self.origin;
        for (a, v) in p.iter_mut().enumerate().take(self.dim) {
            *v += self.h * ix[a] as f64;
        }
        p
    }

    pub fn cell_center(&self, ix: [usize; 3]) -> [f64; 3] {
        let mut p = self.position(ix);
        for v in p.iter_mut().take(self.dim) {
            *v += 0.5 * self.h;
        }
        p
    }

    /// Node index containing the coordinate `x` along `axis` (floor).
    pub fn locate(&self, axis: usize, x: f64) -> f64 {
        (x - self.origin[axis]) / self.h
    }

    /// Whether `x` coincides with a node up to `tol * h` in every coordinate.
    pub fn on_node(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|a| {
            let s = self.locate(a, x[a]);
            (s - s.round()).abs() <= tol
        })
    }

    pub fn upper(&self) -> [f64; 3] {
        let mut p = self.origin;
        for (a, v) in p.iter_mut().enumerate().take(self.dim) {
            *v += self.h * (self.dims[a] - 1) as f64;
        }
        p
    }

    pub fn same_shape(&self, other: &Lattice) -> bool {
        self.dim == other.dim && self.dims == other.dims && self.h == other.h && self.origin == other.origin
    }

    /// Row keys `(j, k)` in order.
    fn rows(&self) -> Vec<(usize, usize)> {
        let c = self.cell_dims();
        (0..c[2]).flat_map(|k| (0..c[1]).map(move |j| (j, k))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Target {
    Circle,
    Plane,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    Phase(Vec<f64>),
    Vector(Vec<[f64; 2]>),
}

/// Anything that can produce node values row by row.
pub trait NodeSource: Sync {
    fn lattice(&self) -> &Lattice;

    fn value(&self, ix: [usize; 3]) -> [f64; 2];

    /// Whether the values are unit vectors.
    fn is_circle(&self) -> bool {
        true
    }

    /// Values of the nodes `(0..dims[0], j, k)`.
    fn row(&self, j: usize, k: usize, out: &mut Vec<[f64; 2]>) {
        out.clear();
        let n = self.lattice().dims[0];
        out.extend((0..n).map(|i| self.value([i, j, k])));
    }
}

/// Node values on a lattice. S^1 fields store phases in `(-pi, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    lattice: Lattice,
    values: Values,
}

fn unit(theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c, s]
}

impl LatticeField {
    pub fn from_phases(lattice: Lattice, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != lattice.node_count() {
            return Err(invalid("phase count does not match the lattice"));
        }
        if phases.iter().any(|t| !t.is_finite()) {
            return Err(invalid("non-finite phase"));
        }
        let phases = phases.into_iter().map(wrap_angle).collect();
        Ok(LatticeField { lattice, values: Values::Phase(phases) })
    }

    pub fn from_vectors(lattice: Lattice, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != lattice.node_count() {
            return Err(invalid("vector count does not match the lattice"));
        }
        Ok(LatticeField { lattice, values: Values::Vector(vectors) })
    }

    pub fn constant(lattice: Lattice, theta: f64) -> Self {
        LatticeField { lattice, values: Values::Phase(vec![wrap_angle(theta); lattice.node_count()]) }
    }

    /// Phase field sampled from `f` at every node.
    pub fn sample(lattice: Lattice, f: impl Fn([f64; 3]) -> f64 + Sync) -> Result<Self> {
        let phases = (0..lattice.node_count())
            .into_par_iter()
            .map(|i| f(lattice.position(lattice.unindex(i))))
            .collect();
        LatticeField::from_phases(lattice, phases)
    }

    /// Materializes any node source as an S^1 field.
    pub fn from_source(src: &impl NodeSource) -> Result<Self> {
        let l = *src.lattice();
        let phases = (0..l.node_count())
            .into_par_iter()
            .map(|i| {
                let v = src.value(l.unindex(i));
                v[1].atan2(v[0])
            })
            .collect();
        LatticeField::from_phases(l, phases)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn target(&self) -> Target {
        match self.values {
            Values::Phase(_) => Target::Circle,
            Values::Vector(_) => Target::Plane,
        }
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn phases(&self) -> Option<&[f64]> {
        match &self.values {
            Values::Phase(p) => Some(p),
            Values::Vector(_) => None,
        }
    }

    pub fn phases_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.values {
            Values::Phase(p) => Some(p),
            Values::Vector(_) => None,
        }
    }

    pub fn phase(&self, ix: [usize; 3]) -> Result<f64> {
        match &self.values {
            Values::Phase(p) => Ok(p[self.lattice.index(ix)]),
            Values::Vector(_) => Err(invalid("field is not S^1-valued")),
        }
    }

    pub fn vector_at(&self, i: usize) -> [f64; 2] {
        match &self.values {
            Values::Phase(p) => unit(p[i]),
            Values::Vector(v) => v[i],
        }
    }

    /// Global rotation of the target by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let values = match &self.values {
            Values::Phase(p) => Values::Phase(p.iter().map(|t| wrap_angle(t + angle)).collect()),
            Values::Vector(v) => {
                let (s, c) = angle.sin_cos();
                Values::Vector(v.iter().map(|w| [c * w[0] - s * w[1], s * w[0] + c * w[1]]).collect())
            }
        };
        LatticeField { lattice: self.lattice, values }
    }

    /// Complex conjugation `theta -> -theta`.
    pub fn conjugated(&self) -> Self {
        let values = match &self.values {
            Values::Phase(p) => Values::Phase(p.iter().map(|t| wrap_angle(-t)).collect()),
            Values::Vector(v) => Values::Vector(v.iter().map(|w| [w[0], -w[1]]).collect()),
        };
        LatticeField { lattice: self.lattice, values }
    }

    /// Same values on a lattice translated by `shift`.
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let mut l = self.lattice;
        for (a, o) in l.origin.iter_mut().enumerate() {
            *o += shift[a];
        }
        LatticeField { lattice: l, values: self.values.clone() }
    }
}

impl NodeSource for LatticeField {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn value(&self, ix: [usize; 3]) -> [f64; 2] {
        self.vector_at(self.lattice.index(ix))
    }

    fn is_circle(&self) -> bool {
        self.target() == Target::Circle
    }

    fn row(&self, j: usize, k: usize, out: &mut Vec<[f64; 2]>) {
        out.clear();
        let start = self.lattice.index([0, j, k]);
        let n = self.lattice.dims[0];
        match &self.values {
            Values::Phase(p) => out.extend(p[start..start + n].iter().map(|&t| unit(t))),
            Values::Vector(v) => out.extend_from_slice(&v[start..start + n]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub p: f64,
    pub variant: bool,
    /// Lattice estimate of `int |grad u|^p` (or of the variant integrand).
    pub total: f64,
    /// `(2 - p) * total`.
    pub rescaled: f64,
    /// Per-cell contributions in cell order; they sum to `total`.
    #[serde(skip)]
    pub density: Vec<f64>,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p < 2.0) {
        return Err(invalid(format!("p = {p} must lie in (1, 2)")));
    }
    Ok(())
}

/// Squared chord gradients of every cell in row `(j, k)`.
fn row_gradients(src: &impl NodeSource, j: usize, k: usize, out: &mut Vec<f64>) {
    let l = src.lattice();
    let n = l.dims[0];
    let inv = 1.0 / (l.h * l.h);
    let mut base = Vec::with_capacity(n);
    let mut up = Vec::with_capacity(n);
    src.row(j, k, &mut base);
    out.clear();
    out.extend((0..n - 1).map(|i| sq(base[i + 1], base[i])));
    src.row(j + 1, k, &mut up);
    for i in 0..n - 1 {
        out[i] += sq(up[i], base[i]);
    }
    if l.dim == 3 {
        src.row(j, k + 1, &mut up);
        for i in 0..n - 1 {
            out[i] += sq(up[i], base[i]);
        }
    }
    for g in out.iter_mut() {
        *g *= inv;
    }
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn integrand(g2: f64, p: f64, variant: bool) -> f64 {
    if variant {
        (1.0 + g2).powf(0.5 * p)
    } else if g2 == 0.0 {
        0.0
    } else {
        g2.powf(0.5 * p)
    }
}

/// Cell weight evaluated at the cell center.
pub type CellWeight<'a> = &'a (dyn Fn([f64; 3]) -> f64 + Sync);

fn energy_rows(
    src: &impl NodeSource,
    p: f64,
    variant: bool,
    weight: Option<CellWeight<'_>>,
    keep: bool,
) -> (f64, Vec<f64>) {
    let l = *src.lattice();
    let vol = l.cell_volume();
    let rows: Vec<(f64, Vec<f64>)> = l
        .rows()
        .into_par_iter()
        .map_init(Vec::new, |g, (j, k)| {
            row_gradients(src, j, k, g);
            let cells: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(i, &g2)| {
                    let w = weight.map_or(1.0, |w| w(l.cell_center([i, j, k])));
                    if w == 0.0 {
                        0.0
                    } else {
                        w * integrand(g2, p, variant) * vol
                    }
                })
                .collect();
            let s = pairwise_sum(&cells);
            (s, if keep { cells } else { Vec::new() })
        })
        .collect();
    let sums: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let density = if keep { rows.into_iter().flat_map(|r| r.1).collect() } else { Vec::new() };
    (pairwise_sum(&sums), density)
}

/// Fraction of the cell centered at `center` lying in `region`, estimated on
/// a `sub^d` grid of sample points.
pub fn cell_fraction(center: [f64; 3], h: f64, dim: usize, sub: usize, region: impl Fn([f64; 3]) -> bool) -> f64 {
    let zs = if dim == 3 { sub } else { 1 };
    let mut hits = 0usize;
    let step = h / sub as f64;
    for k in 0..zs {
        for j in 0..sub {
            for i in 0..sub {
                let mut x = center;
                x[0] += (i as f64 + 0.5) * step - 0.5 * h;
                x[1] += (j as f64 + 0.5) * step - 0.5 * h;
                if dim == 3 {
                    x[2] += (k as f64 + 0.5) * step - 0.5 * h;
                }
                hits += region(x) as usize;
            }
        }
    }
    hits as f64 / (sub * sub * zs) as f64
}

/// p-energy with per-cell density.
pub fn p_energy(src: &impl NodeSource, p: f64, variant: bool) -> Result<EnergyReport> {
    check_p(p)?;
    let (total, density) = energy_rows(src, p, variant, None, true);
    Ok(EnergyReport { p, variant, total, rescaled: (2.0 - p) * total, density })
}

/// p-energy without storing the density; suitable for implicit sources on
/// very fine lattices.
pub fn p_energy_total(src: &impl NodeSource, p: f64, variant: bool) -> Result<f64> {
    check_p(p)?;
    Ok(energy_rows(src, p, variant, None, false).0)
}

/// p-energy with every cell contribution multiplied by `weight(center)`.
pub fn p_energy_weighted(src: &impl NodeSource, p: f64, variant: bool, weight: CellWeight<'_>) -> Result<f64> {
    check_p(p)?;
    Ok(energy_rows(src, p, variant, Some(weight), false).0)
}

/// Splits the p-energy into `parts` pieces: `weights(center, w)` fills the
/// share `w[m]` of each cell assigned to piece `m`.
pub fn p_energy_parts(
    src: &impl NodeSource,
    p: f64,
    variant: bool,
    parts: usize,
    weights: &(dyn Fn([f64; 3], &mut [f64]) + Sync),
) -> Result<Vec<f64>> {
    check_p(p)?;
    let l = *src.lattice();
    let vol = l.cell_volume();
    let rows: Vec<Vec<f64>> = l
        .rows()
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![0.0; parts]),
            |(g, w), (j, k)| {
                row_gradients(src, j, k, g);
                let mut cells = vec![Vec::with_capacity(g.len()); parts];
                for (i, &g2) in g.iter().enumerate() {
                    w.iter_mut().for_each(|x| *x = 0.0);
                    weights(l.cell_center([i, j, k]), w);
                    let e = integrand(g2, p, variant) * vol;
                    for (m, c) in cells.iter_mut().enumerate() {
                        c.push(if w[m] == 0.0 { 0.0 } else { w[m] * e });
                    }
                }
                cells.iter().map(|c| pairwise_sum(c)).collect()
            },
        )
        .collect();
    Ok((0..parts).map(|m| pairwise_sum(&rows.iter().map(|r| r[m]).collect::<Vec<_>>())).collect())
}

/// Per-cell squared chord gradient, in cell order.
pub fn gradient_squared(src: &impl NodeSource) -> Vec<f64> {
    let l = *src.lattice();
    l.rows()
        .into_par_iter()
        .map_init(Vec::new, |g, (j, k)| {
            row_gradients(src, j, k, g);
            g.clone()
        })
        .flatten()
        .collect()
}

/// Discrete `L^q` norm `(sum_nodes |u|^q h^d)^(1/q)`.
pub fn lq_norm_nodes(values: &[f64], q: f64, h: f64, dim: usize) -> f64 {
    let t: Vec<f64> = values.iter().map(|v| v.abs().powf(q)).collect();
    (pairwise_sum(&t) * h.powi(dim as i32)).powf(1.0 / q)
}

/// Discrete `L^p` norm of the gradient, `(sum_cells |grad u|^p h^d)^(1/p)`.
pub fn gradient_lp_norm(src: &impl NodeSource, p: f64) -> f64 {
    let l = src.lattice();
    let g: Vec<f64> = gradient_squared(src).into_iter().map(|g2| integrand(g2, p, false)).collect();
    (pairwise_sum(&g) * l.cell_volume()).powf(1.0 / p)
}

/// Smooth radial kernel `exp(-1/(1 - |x|^2))` scaled to radius `eps`,
/// sampled on the lattice and normalized to unit discrete mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    pub eps: f64,
    pub h: f64,
    pub dim: usize,
    pub reach: usize,
    pub taps: Vec<([isize; 3], f64)>,
}

impl Mollifier {
    pub fn new(eps: f64, h: f64, dim: usize) -> Result<Self> {
        if !(eps >= 2.0 * h) {
            return Err(invalid("mollifier radius must be at least 2h"));
        }
        let reach = (eps / h).ceil() as usize;
        let r = reach as isize;
        let zr = if dim == 3 { r } else { 0 };
        let mut taps = Vec::new();
        for k in -zr..=zr {
            for j in -r..=r {
                for i in -r..=r {
                    let s2 = ((i * i + j * j + k * k) as f64) * h * h / (eps * eps);
                    if s2 < 1.0 {
                        taps.push(([i, j, k], (-1.0 / (1.0 - s2)).exp()));
                    }
                }
            }
        }
        let total = pairwise_sum(&taps.iter().map(|t| t.1).collect::<Vec<_>>());
        for t in &mut taps {
            t.1 /= total;
        }
        Ok(Mollifier { eps, h, dim, reach, taps })
    }

    /// Discrete integral `sum rho_eps h^d`, rescaled to volume units.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.taps.iter().map(|t| t.1).collect::<Vec<_>>())
    }
}

/// Convolution with the kernel on the nodes at distance `reach` from the
/// lattice boundary. The output lattice is the shrunk interior and its
/// values are R^2 vectors.
pub fn mollify(field: &LatticeField, eps: f64) -> Result<LatticeField> {
    let l = *field.lattice();
    let m = Mollifier::new(eps, l.h, l.dim)?;
    let r = m.reach;
    let mut dims = Vec::with_capacity(l.dim);
    let mut origin = Vec::with_capacity(l.dim);
    for a in 0..l.dim {
        if l.dims[a] < 2 * r + 2 {
            return Err(invalid("field too small for the mollifier margin"));
        }
        dims.push(l.dims[a] - 2 * r);
        origin.push(l.origin[a] + r as f64 * l.h);
    }
    let out = Lattice::new(&dims, &origin, l.h)?;
    let zoff = if l.dim == 3 { r } else { 0 };
    let vectors = (0..out.node_count())
        .into_par_iter()
        .map(|i| {
            let o = out.unindex(i);
            let c = [o[0] + r, o[1] + r, o[2] + zoff];
            let mut acc = [0.0; 2];
            for (off, w) in &m.taps {
                let ix = [
                    (c[0] as isize + off[0]) as usize,
                    (c[1] as isize + off[1]) as usize,
                    (c[2] as isize + off[2]) as usize,
                ];
                let v = field.vector_at(l.index(ix));
                acc[0] += w * v[0];
                acc[1] += w * v[1];
            }
            acc
        })
        .collect();
    LatticeField::from_vectors(out, vectors)
}

/// `pi_a(x) = a + t_a(x) (x - a)/|x - a|`, the radial projection from `a`
/// onto the unit circle.
pub fn radial_projection(x: [f64; 2], a: [f64; 2]) -> Result<[f64; 2]> {
    let d = [x[0] - a[0], x[1] - a[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n <= 1e-12 {
        return Err(Error::NonRegularCenter);
    }
    let e = [d[0] / n, d[1] / n];
    let ad = a[0] * e[0] + a[1] * e[1];
    let aa = a[0] * a[0] + a[1] * a[1];
    let t = -ad + (ad * ad + 1.0 - aa).sqrt();
    Ok([a[0] + t * e[0], a[1] + t * e[1]])
}

/// Applies `pi_a` node-wise; the result is stored as phases.
pub fn project_center(field: &LatticeField, a: [f64; 2]) -> Result<LatticeField> {
    if a[0].hypot(a[1]) >= 0.125 {
        return Err(invalid("projection center must lie in B(0, 1/8)"));
    }
    let l = *field.lattice();
    let phases = (0..l.node_count())
        .into_par_iter()
        .map(|i| radial_projection(field.vector_at(i), a).map(|y| y[1].atan2(y[0])))
        .collect::<Result<Vec<_>>>()?;
    LatticeField::from_phases(l, phases)
}

fn segment_point_distance(p: [f64; 2], q: [f64; 2], a: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let w = [a[0] - p[0], a[1] - p[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let t = if dd > 0.0 { ((w[0] * d[0] + w[1] * d[1]) / dd).clamp(0.0, 1.0) } else { 0.0 };
    (w[0] - t * d[0]).hypot(w[1] - t * d[1])
}

/// Winding number of the image quadrilateral of each 2-D cell around `a`,
/// summed in absolute value, and the smallest distance from `a` to an image
/// edge.
pub fn preimage_count(field: &LatticeField, a: [f64; 2]) -> Result<(u64, f64)> {
    let l = *field.lattice();
    if l.dim != 2 {
        return Err(invalid("preimage counting needs a 2-D field"));
    }
    let c = l.cell_dims();
    let rows: Vec<(u64, f64)> = (0..c[1])
        .into_par_iter()
        .map(|j| {
            let mut count = 0u64;
            let mut gap = f64::INFINITY;
            for i in 0..c[0] {
                let q = [
                    field.vector_at(l.index([i, j, 0])),
                    field.vector_at(l.index([i + 1, j, 0])),
                    field.vector_at(l.index([i + 1, j + 1, 0])),
                    field.vector_at(l.index([i, j + 1, 0])),
                ];
                let mut turn = 0.0;
                for e in 0..4 {
                    let (p0, p1) = (q[e], q[(e + 1) % 4]);
                    gap = gap.min(segment_point_distance(p0, p1, a));
                    let t0 = (p0[1] - a[1]).atan2(p0[0] - a[0]);
                    let t1 = (p1[1] - a[1]).atan2(p1[0] - a[0]);
                    turn += wrap_angle(t1 - t0);
                }
                count += (turn / std::f64::consts::TAU).round().abs() as u64;
            }
            (count, gap)
        })
        .collect();
    let count = rows.iter().map(|r| r.0).sum();
    let gap = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok((count, gap))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenterChoice {
    pub a: [f64; 2],
    pub preimage_count: u64,
    pub mean_count: f64,
    pub regular_samples: usize,
}

/// Samples `a` uniformly in `B(0, delta)` and returns the first regular
/// sample whose preimage count is at most three times the sample mean.
pub fn select_projection_center(
    field: &LatticeField,
    delta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<CenterChoice> {
    use rand::{Rng, SeedableRng};
    if !(delta > 0.0 && delta < 0.125) {
        return Err(invalid("delta must lie in (0, 1/8)"));
    }
    if sample_count == 0 {
        return Err(invalid("sample_count must be positive"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<[f64; 2]> = (0..sample_count)
        .map(|_| {
            let r = delta * rng.gen::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    let counts = samples.iter().map(|&a| preimage_count(field, a)).collect::<Result<Vec<_>>>()?;
    let regular: Vec<usize> = (0..samples.len()).filter(|&i| counts[i].1 > 1e-6).collect();
    if regular.is_empty() {
        return Err(Error::NoRegularCenter { samples: sample_count });
    }
    let mean = counts.iter().map(|c| c.0 as f64).sum::<f64>() / counts.len() as f64;
    let pick = regular
        .iter()
        .copied()
        .find(|&i| counts[i].0 as f64 <= 3.0 * mean)
        .ok_or(Error::NoRegularCenter { samples: sample_count })?;
    Ok(CenterChoice { a: samples[pick], preimage_count: counts[pick].0, mean_count: mean, regular_samples: regular.len() })
}

/// `prod_i ((x - a_i)/|x - a_i|)^{d_i}` evaluated implicitly on a 2-D lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductVortex {
    lattice: Lattice,
    centers: Vec<([f64; 2], i32)>,
}

impl ProductVortex {
    pub fn new(centers: Vec<([f64; 2], i32)>, lattice: Lattice) -> Result<Self> {
        if lattice.dim != 2 {
            return Err(invalid("product vortices live on 2-D lattices"));
        }
        let hi = lattice.upper();
        for (i, (c, _)) in centers.iter().enumerate() {
            if !(c[0] > lattice.origin[0] && c[0] < hi[0] && c[1] > lattice.origin[1] && c[1] < hi[1]) {
                return Err(invalid(format!("vortex center {c:?} outside the lattice")));
            }
            if lattice.on_node(c, 1e-9) {
                return Err(Error::SingularityOnNode(format!("{c:?}")));
            }
            if centers[..i].iter().any(|(o, _)| o == c) {
                return Err(invalid("vortex centers must be distinct"));
            }
        }
        Ok(ProductVortex { lattice, centers })
    }

    pub fn centers(&self) -> &[([f64; 2], i32)] {
        &self.centers
    }

    /// Unit vector of the map at an arbitrary point.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut z = [1.0, 0.0];
        for (c, d) in &self.centers {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            let r = dx.hypot(dy);
            let w = if *d >= 0 { [dx / r, dy / r] } else { [dx / r, -dy / r] };
            for _ in 0..d.unsigned_abs() {
                z = [z[0] * w[0] - z[1] * w[1], z[0] * w[1] + z[1] * w[0]];
            }
        }
        let n = z[0].hypot(z[1]);
        [z[0] / n, z[1] / n]
    }

    pub fn phase(&self, x: [f64; 2]) -> f64 {
        let v = self.eval(x);
        v[1].atan2(v[0])
    }

    pub fn materialize(&self) -> Result<LatticeField> {
        LatticeField::from_source(self)
    }
}

impl NodeSource for ProductVortex {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn value(&self, ix: [usize; 3]) -> [f64; 2] {
        let p = self.lattice.position(ix);
        self.eval([p[0], p[1]])
    }
}

/// `theta = sum_i d_i arg(x - a_i)` on the nodes of a 2-D lattice.
pub fn product_vortex(centers: &[([f64; 2], i32)], lattice: Lattice) -> Result<LatticeField> {
    ProductVortex::new(centers.to_vec(), lattice)?.materialize()
}

/// `x'/|x'|` around an axis-parallel line through `point` with direction
/// `e_axis`; the transverse coordinates are taken in cyclic order so the
/// winding is positive with respect to `+e_axis`.
pub fn axis_vortex_3d(point: [f64; 3], axis: usize, lattice: Lattice) -> Result<LatticeField> {
    if lattice.dim != 3 || axis > 2 {
        return Err(invalid("axis vortex needs a 3-D lattice and an axis in 0..3"));
    }
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let su = lattice.locate(u, point[u]);
    let sv = lattice.locate(v, point[v]);
    if (su - su.round()).abs() < 1e-9 && (sv - sv.round()).abs() < 1e-9 {
        return Err(Error::SingularityOnNode(format!("axis through {point:?}")));
    }
    LatticeField::sample(lattice, |x| (x[v] - point[v]).atan2(x[u] - point[u]))
}

/// Signed solid angle of the triangle `(p0, p1, p2)` seen from `x`.
pub fn triangle_solid_angle(x: [f64; 3], p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> f64 {
    let r = |p: [f64; 3]| [p[0] - x[0], p[1] - x[1], p[2] - x[2]];
    let (a, b, c) = (r(p0), r(p1), r(p2));
    let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let norm = |u: [f64; 3]| dot(u, u).sqrt();
    let cross = [b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2], b[0] * c[1] - b[1] * c[0]];
    let (la, lb, lc) = (norm(a), norm(b), norm(c));
    let num = dot(a, cross);
    let den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    2.0 * num.atan2(den)
}

/// Half the solid angle subtended by a closed polygonal curve, computed
/// through the cone over the length-weighted centroid of its segments.
#[derive(Clone, Debug, PartialEq)]
pub struct SolidAngleMap {
    apex: [f64; 3],
    segments: Vec<([f64; 3], [f64; 3], f64)>,
}

impl SolidAngleMap {
    pub fn new(curve: &crate::currents::OneCurrent<f64, 3>) -> Result<Self> {
        if curve.is_empty() {
            return Err(invalid("empty curve"));
        }
        if !curve.boundary_free().is_zero() {
            return Err(invalid("curve must be closed"));
        }
        let mut apex = [0.0; 3];
        let mut len = 0.0;
        let mut segments = Vec::new();
        for s in curve.segments() {
            let l = s.a.dist(&s.b);
            for (k, c) in apex.iter_mut().enumerate() {
                *c += 0.5 * (s.a.0[k] + s.b.0[k]) * l;
            }
            len += l;
            segments.push((s.a.0, s.b.0, s.mult as f64));
        }
        for c in &mut apex {
            *c /= len;
        }
        Ok(SolidAngleMap { apex, segments })
    }

    pub fn phase(&self, x: [f64; 3]) -> f64 {
        let omega: f64 = self.segments.iter().map(|(a, b, m)| m * triangle_solid_angle(x, self.apex, *a, *b)).sum();
        wrap_angle(0.5 * omega)
    }
}

/// S^1 field `exp(i Omega(x)/2)` around a closed polygonal curve.
pub fn solid_angle_vortex(curve: &crate::currents::OneCurrent<f64, 3>, lattice: Lattice) -> Result<LatticeField> {
    if lattice.dim != 3 {
        return Err(invalid("solid-angle vortices need a 3-D lattice"));
    }
    for s in curve.segments() {
        // a node on the curve would sit on the singular set
        let (a, b) = (s.a.0, s.b.0);
        for t in [0.0, 1.0] {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
            if lattice.on_node(&p, 1e-9) {
                return Err(Error::SingularityOnNode(format!("{p:?}")));
            }
        }
    }
    let map = SolidAngleMap::new(curve)?;
    LatticeField::sample(lattice, |x| map.phase(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn centered(half: f64, h: f64) -> Lattice {
        // nodes straddle the origin so that it is a plaquette center
        let n = (2.0 * half / h).round() as usize + 2;
        let o = -(n as f64 - 1.0) * h / 2.0;
        Lattice::new(&[n, n], &[o, o], h).unwrap()
    }

    #[test]
    fn lattice_indexing_round_trip() {
        let l = Lattice::new(&[4, 5, 6], &[0.0, 1.0, 2.0], 0.5).unwrap();
        for i in 0..l.node_count() {
            assert_eq!(l.index(l.unindex(i)), i);
        }
        assert_eq!(l.cell_count(), 3 * 4 * 5);
        assert_eq!(l.position([1, 2, 3]), [0.5, 2.0, 3.5]);
        assert!(Lattice::new(&[1, 5], &[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn from_box_requires_commensurate_extent() {
        let b = BoxDomain::new([0.0, 0.0], [1.0, 2.0]).unwrap();
        let l = Lattice::from_box(&b, 0.25).unwrap();
        assert_eq!(&l.dims[..2], &[5, 9]);
        assert!(Lattice::from_box(&b, 0.3).is_err());
    }

    #[test]
    fn constant_field_energy() {
        let l = Lattice::new(&[11, 11], &[0.0, 0.0], 0.1).unwrap();
        let f = LatticeField::constant(l, 0.3);
        assert_eq!(p_energy(&f, 1.5, false).unwrap().total, 0.0);
        let v = p_energy(&f, 1.5, true).unwrap();
        assert!((v.total - 1.0).abs() < 1e-12);
        assert!(p_energy(&f, 2.0, false).is_err());
        assert!(p_energy(&f, 1.0, false).is_err());
    }

    #[test]
    fn density_sums_to_total_and_variant_dominates() {
        let l = centered(0.5, 1.0 / 32.0);
        let f = product_vortex(&[([0.0, 0.0], 1)], l).unwrap();
        let e = p_energy(&f, 1.5, false).unwrap();
        let v = p_energy(&f, 1.5, true).unwrap();
        assert!((pairwise_sum(&e.density) - e.total).abs() < 1e-12 * e.total);
        assert!(e.density.iter().zip(&v.density).all(|(a, b)| b >= a));
        assert!((e.rescaled - 0.5 * e.total).abs() < 1e-15);
    }

    #[test]
    fn annulus_energy_matches_radial_integral() {
        let h = 1.0 / 256.0;
        let l = centered(1.0, h);
        let src = ProductVortex::new(vec![([0.0, 0.0], 1)], l).unwrap();
        for p in [1.5, 1.9] {
            let w = |c: [f64; 3]| {
                cell_fraction(c, h, 2, 16, |x| {
                    let r = x[0].hypot(x[1]);
                    r >= 4.0 * h && r < 1.0
                })
            };
            let e = p_energy_weighted(&src, p, false, &w).unwrap();
            let exact = TAU * (1.0 - (4.0 * h).powf(2.0 - p)) / (2.0 - p);
            assert!((e / exact - 1.0).abs() < 0.01, "p={p}: {e} vs {exact}");
        }
    }

    #[test]
    fn energy_invariances() {
        let l = centered(0.5, 1.0 / 32.0);
        let f = product_vortex(&[([0.1, 0.05], 1), ([-0.2, 0.0], -1)], l).unwrap();
        let e = p_energy(&f, 1.4, false).unwrap().total;
        let r = p_energy(&f.rotated(1.1), 1.4, false).unwrap().total;
        let t = p_energy(&f.translated([3.0 * l.h, -2.0 * l.h, 0.0]), 1.4, false).unwrap().total;
        assert!((e - r).abs() < 1e-10 * e);
        assert_eq!(e, t);
    }

    #[test]
    fn streamed_energy_matches_materialized() {
        let l = centered(0.5, 1.0 / 40.0);
        let pv = ProductVortex::new(vec![([0.1, 0.05], 2)], l).unwrap();
        let a = p_energy_total(&pv, 1.3, false).unwrap();
        let b = p_energy(&pv.materialize().unwrap(), 1.3, false).unwrap().total;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn product_vortex_gradient_matches_analytic() {
        // each forward difference samples its derivative at the edge midpoint
        let h = 1.0 / 128.0;
        let l = centered(0.5, h);
        let f = product_vortex(&[([0.0, 0.0], 2)], l).unwrap();
        let g = gradient_squared(&f);
        let c = l.cell_dims();
        for (i, g2) in g.iter().enumerate() {
            let x = l.position([i % c[0], i / c[0], 0]);
            let r = (x[0] + 0.5 * h).hypot(x[1] + 0.5 * h);
            if r >= 20.0 * h && r < 0.45 {
                let (x1, y1) = (x[0] + 0.5 * h, x[1]);
                let (x2, y2) = (x[0], x[1] + 0.5 * h);
                let exact = 4.0 * (y1 * y1 / (x1 * x1 + y1 * y1).powi(2) + x2 * x2 / (x2 * x2 + y2 * y2).powi(2));
                assert!((g2.sqrt() / exact.sqrt() - 1.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn singularity_on_node_rejected() {
        let l = Lattice::new(&[11, 11], &[0.0, 0.0], 0.1).unwrap();
        assert!(matches!(ProductVortex::new(vec![([0.5, 0.5], 1)], l), Err(Error::SingularityOnNode(_))));
        assert!(ProductVortex::new(vec![([0.55, 0.55], 1), ([0.55, 0.55], -1)], l).is_err());
        let l3 = Lattice::new(&[5, 5, 5], &[0.0; 3], 0.25).unwrap();
        assert!(axis_vortex_3d([0.5, 0.5, 0.1], 2, l3).is_err());
    }

    #[test]
    fn mollifier_normalized() {
        let m = Mollifier::new(0.1, 0.02, 2).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-8);
        assert!(m.taps.iter().all(|(o, _)| ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() * 0.02 <= 0.1 + 1e-12));
        assert!(Mollifier::new(0.03, 0.02, 2).is_err());
    }

    #[test]
    fn mollify_constant_and_vortex() {
        let l = Lattice::new(&[41, 41], &[0.0, 0.0], 0.025).unwrap();
        let c = mollify(&LatticeField::constant(l, 0.7), 0.1).unwrap();
        for i in 0..c.lattice().node_count() {
            let v = c.vector_at(i);
            assert!((v[0] - 0.7f64.cos()).abs() < 1e-12 && (v[1] - 0.7f64.sin()).abs() < 1e-12);
        }
        let l = centered(1.0, 1.0 / 64.0);
        let f = product_vortex(&[([0.0, 0.0], 1)], l).unwrap();
        let m = mollify(&f, 0.1).unwrap();
        let ml = *m.lattice();
        let mut near = 1.0f64;
        let mut far = 0.0f64;
        for i in 0..ml.node_count() {
            let x = ml.position(ml.unindex(i));
            let r = x[0].hypot(x[1]);
            let v = m.vector_at(i);
            let n = v[0].hypot(v[1]);
            assert!(n <= 1.0 + 1e-12);
            if r < 0.03 {
                near = near.min(1.0 - n);
            }
            if r > 0.5 {
                far = far.max(1.0 - n);
            }
        }
        assert!(near > 0.3);
        assert!(far < 0.01);
    }

    #[test]
    fn mollification_error_bound_on_smooth_field() {
        let h = 1.0 / 128.0;
        let l = Lattice::new(&[129, 129], &[0.0, 0.0], h).unwrap();
        let f = LatticeField::sample(l, |x| 2.0 * (3.0 * x[0]).sin() + x[1] * x[1]).unwrap();
        for eps in [0.05, 0.1] {
            let m = mollify(&f, eps).unwrap();
            let ml = *m.lattice();
            let r = ((ml.origin[0] - l.origin[0]) / h).round() as usize;
            let diff: Vec<f64> = (0..ml.node_count())
                .map(|i| {
                    let o = ml.unindex(i);
                    let a = m.vector_at(i);
                    let b = f.vector_at(l.index([o[0] + r, o[1] + r, 0]));
                    (a[0] - b[0]).hypot(a[1] - b[1])
                })
                .collect();
            let p = 1.5;
            let lhs = lq_norm_nodes(&diff, p, h, 2);
            let rhs = eps * gradient_lp_norm(&f, p);
            assert!(lhs <= 1.1 * rhs, "eps={eps}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn projection_fixes_circle_and_normalizes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)];
            let t = rng.gen_range(-PI..PI);
            let y = radial_projection([t.cos(), t.sin()], a).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-12 && (y[1] - t.sin()).abs() < 1e-12);
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if (x[0] - a[0]).hypot(x[1] - a[1]) > 1e-6 {
                let y = radial_projection(x, a).unwrap();
                assert!((y[0].hypot(y[1]) - 1.0).abs() < 1e-12);
            }
        }
        let y = radial_projection([0.3, 0.4], [0.0, 0.0]).unwrap();
        assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
        assert_eq!(radial_projection([0.01, 0.02], [0.01, 0.02]), Err(Error::NonRegularCenter));
    }

    #[test]
    fn mollify_then_project_reproduces_smooth_field() {
        let h = 1.0 / 128.0;
        let l = Lattice::new(&[129, 129], &[0.0, 0.0], h).unwrap();
        let f = LatticeField::sample(l, |x| (2.0 * x[0]).sin() + 0.5 * x[1]).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.08, 0.04] {
            let m = project_center(&mollify(&f, eps).unwrap(), [0.0, 0.0]).unwrap();
            let ml = *m.lattice();
            let r = ((ml.origin[0] - l.origin[0]) / h).round() as usize;
            let err = (0..ml.node_count())
                .map(|i| {
                    let o = ml.unindex(i);
                    wrap_angle(m.phases().unwrap()[i] - f.phases().unwrap()[l.index([o[0] + r, o[1] + r, 0])]).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < eps * eps);
            assert!(err < prev / 3.0);
            prev = err;
        }
    }

    #[test]
    fn preimage_counts() {
        let l = centered(0.5, 1.0 / 32.0);
        let c = LatticeField::constant(l, 0.0);
        assert_eq!(select_projection_center(&c, 0.1, 8, 1).unwrap().preimage_count, 0);

        let f = product_vortex(&[([0.0, 0.0], 1)], l).unwrap();
        let m = mollify(&f, 0.1).unwrap();
        assert_eq!(preimage_count(&m, [0.01, -0.02]).unwrap().0, 1);

        let l = centered(1.0, 1.0 / 32.0);
        let d = product_vortex(&[([-0.4, 0.0], 1), ([0.4, 0.0], -1)], l).unwrap();
        let m = mollify(&d, 0.1).unwrap();
        let choice = select_projection_center(&m, 0.05, 16, 3).unwrap();
        assert_eq!(choice.preimage_count, 2);
        assert!(choice.a[0].hypot(choice.a[1]) < 0.05);
    }

    #[test]
    fn solid_angle_of_square_seen_from_axis() {
        // unit square seen from its center: half of the sphere
        let sq = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let x = [0.5, 0.5, 1e-9];
        let apex = [0.5, 0.5, 0.0];
        let omega: f64 = (0..4).map(|i| triangle_solid_angle(x, apex, sq[i], sq[(i + 1) % 4])).sum();
        assert!((omega.abs() - TAU).abs() < 1e-6);
        let below: f64 = (0..4).map(|i| triangle_solid_angle([0.5, 0.5, -1e-9], apex, sq[i], sq[(i + 1) % 4])).sum();
        assert!((omega - below).abs() - 2.0 * TAU < 1e-6 || (omega - below).abs() > 2.0 * TAU - 1e-6);
        // antipodal probes: solid angles sum to 0 mod 4 pi
        let up: f64 = (0..4).map(|i| triangle_solid_angle([0.3, 0.2, 0.7], apex, sq[i], sq[(i + 1) % 4])).sum();
        let down: f64 = (0..4).map(|i| triangle_solid_angle([0.3, 0.2, -0.7], apex, sq[i], sq[(i + 1) % 4])).sum();
        let s = (up + down) / (2.0 * TAU);
        assert!((s - s.round()).abs() < 1e-12);
    }
}
