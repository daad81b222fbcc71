//! Distributional Jacobians of S^1-valued lattice fields as integer currents.
//!
//! The winding of a lattice ring is `(1/2pi) sum wrap(theta_{k+1} - theta_k)`,
//! with wrapped differences read off from the unit vectors as
//! `atan2(u_k x u_{k+1}, u_k . u_{k+1})`. The resulting currents are
//! `*Ju / gamma_2`, with integer multiplicities.

use rayon::prelude::*;
use serde::Serialize;

use crate::currents::{CurrentsJson, OneCurrent, ZeroCurrent};
use crate::error::{invalid, Error, Result};
use crate::flat::flat_distance;
use crate::geometry::{BoxDomain, Point};
use crate::lattice::{gradient_lp_norm, lq_norm_nodes, Lattice, LatticeField, NodeSource, Target};
use crate::scalar::pairwise_sum;

/// Guard band below `pi` for a single edge jump.
pub const JUMP_GUARD: f64 = 1e-9;

pub const SOURCE_TAG: &str = "plaquette_winding";

fn jump(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
}

fn guarded(a: [f64; 2], b: [f64; 2], location: [f64; 3]) -> Result<f64> {
    let j = jump(a, b);
    if j.abs() >= std::f64::consts::PI - JUMP_GUARD {
        return Err(Error::UnderResolved { jump: j, location: format!("{location:?}") });
    }
    Ok(j)
}

fn ring_winding(vals: &[[f64; 2]; 4], location: [f64; 3]) -> Result<i64> {
    let mut s = 0.0;
    for e in 0..4 {
        s += guarded(vals[e], vals[(e + 1) % 4], location)?;
    }
    Ok((s / std::f64::consts::TAU).round() as i64)
}

fn require_circle(src: &impl NodeSource) -> Result<()> {
    if !src.is_circle() {
        return Err(invalid("Jacobian extraction needs an S^1-valued field"));
    }
    Ok(())
}

/// One atom per plaquette with nonzero winding, at the plaquette center.
#[derive(Clone, Debug, PartialEq)]
pub struct VorticityCurrent2D {
    pub current: ZeroCurrent<f64, 2>,
}

impl VorticityCurrent2D {
    pub fn total(&self) -> i64 {
        self.current.total_charge()
    }

    pub fn to_json(&self) -> CurrentsJson {
        CurrentsJson::new(&self.current, &OneCurrent::zero()).with_source(SOURCE_TAG)
    }
}

/// One dual edge per lattice 2-face with nonzero winding.
#[derive(Clone, Debug, PartialEq)]
pub struct VorticityCurrent3D {
    pub current: OneCurrent<f64, 3>,
}

impl VorticityCurrent3D {
    pub fn to_json(&self) -> CurrentsJson {
        CurrentsJson::new(&ZeroCurrent::zero(), &self.current).with_source(SOURCE_TAG)
    }
}

/// Plaquette windings of a 2-D field given by any node source.
pub fn plaquette_vorticity(src: &impl NodeSource) -> Result<VorticityCurrent2D> {
    require_circle(src)?;
    let l = *src.lattice();
    if l.dim != 2 {
        return Err(invalid("plaquette vorticity needs a 2-D field"));
    }
    let c = l.cell_dims();
    let rows: Vec<Vec<([f64; 2], i64)>> = (0..c[1])
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(lo, hi), j| {
                src.row(j, 0, lo);
                src.row(j + 1, 0, hi);
                let mut out = Vec::new();
                for i in 0..c[0] {
                    let ring = [lo[i], lo[i + 1], hi[i + 1], hi[i]];
                    let ctr = l.cell_center([i, j, 0]);
                    let w = ring_winding(&ring, ctr)?;
                    if w != 0 {
                        out.push(([ctr[0], ctr[1]], w));
                    }
                }
                Ok(out)
            },
        )
        .collect::<Result<_>>()?;
    let atoms = rows.into_iter().flatten().map(|(x, m)| (Point(x), m));
    Ok(VorticityCurrent2D { current: ZeroCurrent::from_atoms(atoms) })
}

/// Face ring `(i, i+e_u, i+e_u+e_v, i+e_v)` with `u = k+1`, `v = k+2` (mod 3),
/// positively oriented with respect to the normal `e_k`.
fn face_ring(ix: [usize; 3], k: usize) -> [[usize; 3]; 4] {
    let (u, v) = ((k + 1) % 3, (k + 2) % 3);
    let step = |mut p: [usize; 3], a: usize| {
        p[a] += 1;
        p
    };
    [ix, step(ix, u), step(step(ix, u), v), step(ix, v)]
}

/// Face windings of a 3-D field; every nonzero face emits the dual edge of
/// length `h` through its center, oriented along `+e_k` times the winding.
pub fn face_vorticity_3d(field: &LatticeField) -> Result<VorticityCurrent3D> {
    if field.target() != Target::Circle {
        return Err(invalid("Jacobian extraction needs an S^1-valued field"));
    }
    let l = *field.lattice();
    if l.dim != 3 {
        return Err(invalid("face vorticity needs a 3-D field"));
    }
    let faces = face_windings(field)?;
    let mut s = OneCurrent::zero();
    for (ix, k, w) in faces {
        let (a, b) = dual_edge(&l, ix, k);
        s.push(Point(a), Point(b), w);
    }
    Ok(VorticityCurrent3D { current: s })
}

/// Nonzero face windings `(lower corner, normal axis, winding)` in
/// lexicographic order of `(k, z, y, x)`.
pub fn face_windings(field: &LatticeField) -> Result<Vec<([usize; 3], usize, i64)>> {
    let l = *field.lattice();
    let mut out = Vec::new();
    for k in 0..3 {
        let (u, v) = ((k + 1) % 3, (k + 2) % 3);
        // faces with normal k need one more node along u and v
        let mut lim = l.dims;
        lim[u] -= 1;
        lim[v] -= 1;
        let planes: Vec<Vec<([usize; 3], usize, i64)>> = (0..lim[2])
            .into_par_iter()
            .map(|z| {
                let mut row = Vec::new();
                for y in 0..lim[1] {
                    for x in 0..lim[0] {
                        let ix = [x, y, z];
                        let ring = face_ring(ix, k).map(|n| field.vector_at(l.index(n)));
                        let mut ctr = l.position(ix);
                        ctr[u] += 0.5 * l.h;
                        ctr[v] += 0.5 * l.h;
                        let w = ring_winding(&ring, ctr)?;
                        if w != 0 {
                            row.push((ix, k, w));
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        out.extend(planes.into_iter().flatten());
    }
    Ok(out)
}

/// Endpoints of the dual edge crossing face `(ix, k)`.
pub fn dual_edge(l: &Lattice, ix: [usize; 3], k: usize) -> ([f64; 3], [f64; 3]) {
    // cube centers from integer indices so adjacent faces share endpoints bitwise
    let center = |j: [i64; 3]| -> [f64; 3] { std::array::from_fn(|a| l.origin[a] + (j[a] as f64 + 0.5) * l.h) };
    let hi = ix.map(|i| i as i64);
    let mut lo = hi;
    lo[k] -= 1;
    (center(lo), center(hi))
}

/// Degree of the field along a closed cycle of adjacent nodes.
pub fn degree_loop(field: &LatticeField, cycle: &[[usize; 3]]) -> Result<i64> {
    let l = *field.lattice();
    if cycle.len() < 3 {
        return Err(invalid("a loop needs at least three nodes"));
    }
    let mut s = 0.0;
    for (t, &a) in cycle.iter().enumerate() {
        let b = cycle[(t + 1) % cycle.len()];
        let steps: usize = (0..3).map(|x| a[x].abs_diff(b[x])).sum();
        if steps != 1 || (0..3).any(|x| a[x] >= l.dims[x] || b[x] >= l.dims[x]) {
            return Err(invalid(format!("nodes {a:?} and {b:?} are not lattice neighbours")));
        }
        s += guarded(field.vector_at(l.index(a)), field.vector_at(l.index(b)), l.position(a))?;
    }
    Ok((s / std::f64::consts::TAU).round() as i64)
}

/// Counter-clockwise cycle through the boundary nodes of a 2-D lattice.
pub fn boundary_cycle(l: &Lattice) -> Vec<[usize; 3]> {
    let (nx, ny) = (l.dims[0], l.dims[1]);
    let mut c = Vec::with_capacity(2 * (nx + ny));
    c.extend((0..nx - 1).map(|i| [i, 0, 0]));
    c.extend((0..ny - 1).map(|j| [nx - 1, j, 0]));
    c.extend((1..nx).rev().map(|i| [i, ny - 1, 0]));
    c.extend((1..ny).rev().map(|j| [0, j, 0]));
    c
}

/// Largest `|ju| / |grad u|` over the cells of a 2-D field, with
/// `ju = u_1 grad u_2 - u_2 grad u_1` from forward differences at the lower
/// corner. Cells with vanishing gradient are skipped; a constant field
/// gives 0.
pub fn jform_bound_check(field: &LatticeField) -> Result<f64> {
    let l = *field.lattice();
    if l.dim != 2 {
        return Err(invalid("j-form check needs a 2-D field"));
    }
    let c = l.cell_dims();
    let rows: Vec<f64> = (0..c[1])
        .into_par_iter()
        .map(|j| {
            let mut m = 0.0f64;
            for i in 0..c[0] {
                let u = field.vector_at(l.index([i, j, 0]));
                let ux = field.vector_at(l.index([i + 1, j, 0]));
                let uy = field.vector_at(l.index([i, j + 1, 0]));
                let d = [[ux[0] - u[0], ux[1] - u[1]], [uy[0] - u[0], uy[1] - u[1]]];
                let g = (d[0][0].powi(2) + d[0][1].powi(2) + d[1][0].powi(2) + d[1][1].powi(2)).sqrt();
                if g == 0.0 {
                    continue;
                }
                let jx = u[0] * d[0][1] - u[1] * d[0][0];
                let jy = u[0] * d[1][1] - u[1] * d[1][0];
                m = m.max(jx.hypot(jy) / g);
            }
            m
        })
        .collect();
    Ok(rows.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContinuityRatio {
    pub flat_distance: f64,
    pub lq_distance: f64,
    pub grad_u: f64,
    pub grad_v: f64,
    pub ratio: f64,
}

/// `F(Ju - Jv) / (||u - v||_q (||grad u||_p + ||grad v||_p))` for two 2-D
/// S^1 fields on the same lattice, with `1/p + 1/q = 1`.
pub fn continuity_ratio(u: &LatticeField, v: &LatticeField, p: f64, q: f64) -> Result<ContinuityRatio> {
    let l = *u.lattice();
    if !l.same_shape(v.lattice()) || l.dim != 2 {
        return Err(invalid("fields must share one 2-D lattice"));
    }
    if !(p > 1.0 && p < 2.0) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-9 {
        return Err(invalid("exponents must satisfy 1/p + 1/q = 1 with p in (1, 2)"));
    }
    let diff: Vec<f64> = (0..l.node_count())
        .map(|i| {
            let a = u.vector_at(i);
            let b = v.vector_at(i);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .collect();
    let lq_distance = lq_norm_nodes(&diff, q, l.h, 2);
    let grad_u = gradient_lp_norm(u, p);
    let grad_v = gradient_lp_norm(v, p);
    let denom = lq_distance * (grad_u + grad_v);
    if denom < 1e-14 {
        return Err(Error::IdenticalFields(denom));
    }
    let ju = plaquette_vorticity(u)?;
    let jv = plaquette_vorticity(v)?;
    let hi = l.upper();
    let domain = BoxDomain::new([l.origin[0], l.origin[1]], [hi[0], hi[1]])?;
    let flat = flat_distance(&ju.current, &jv.current, &domain)?;
    Ok(ContinuityRatio { flat_distance: flat, lq_distance, grad_u, grad_v, ratio: flat / denom })
}

/// Sum of plaquette windings inside the disk `B(center, r)`.
pub fn enclosed_winding(vort: &VorticityCurrent2D, center: [f64; 2], r: f64) -> i64 {
    vort.current
        .atoms()
        .iter()
        .filter(|a| (a.point.0[0] - center[0]).hypot(a.point.0[1] - center[1]) < r)
        .map(|a| a.mult)
        .sum()
}

/// Gradient of the bilinear interpolant of the node vectors at `x`.
pub fn bilinear_gradient(field: &LatticeField, x: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    let l = *field.lattice();
    let s = [l.locate(0, x[0]), l.locate(1, x[1])];
    if s.iter().enumerate().any(|(a, &t)| t < 0.0 || t > (l.dims[a] - 1) as f64) {
        return Err(invalid(format!("point {x:?} outside the lattice")));
    }
    let i = (s[0].floor() as usize).min(l.dims[0] - 2);
    let j = (s[1].floor() as usize).min(l.dims[1] - 2);
    let (tx, ty) = (s[0] - i as f64, s[1] - j as f64);
    let v = |a: usize, b: usize| field.vector_at(l.index([i + a, j + b, 0]));
    let (u00, u10, u01, u11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
    let mut g = [[0.0; 2]; 2];
    for c in 0..2 {
        g[0][c] = ((1.0 - ty) * (u10[c] - u00[c]) + ty * (u11[c] - u01[c])) / l.h;
        g[1][c] = ((1.0 - tx) * (u01[c] - u00[c]) + tx * (u11[c] - u10[c])) / l.h;
    }
    Ok(g)
}

/// Trapezoidal line integral of `|grad u|^p` over the circle
/// `|x - center| = r`, using `n` equally spaced samples.
pub fn circle_energy(field: &LatticeField, center: [f64; 2], r: f64, p: f64, n: usize) -> Result<f64> {
    let dtheta = std::f64::consts::TAU / n as f64;
    let vals = (0..n)
        .map(|k| {
            let t = k as f64 * dtheta;
            let g = bilinear_gradient(field, [center[0] + r * t.cos(), center[1] + r * t.sin()])?;
            let g2 = g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2);
            Ok(g2.powf(0.5 * p) * r * dtheta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vals))
}
