//! Recovery sequences for the limsup inequality: vortex maps around a
//! prescribed singular set, their lattice energies and extracted Jacobians.

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{sphere_area, Constants};
use crate::currents::{OneCurrent, ZeroCurrent};
use crate::error::{invalid, Error, Result};
use crate::flat::flat_distance;
use crate::geometry::{BoxDomain, Domain, Point};
use crate::jacobian::{face_vorticity_3d, plaquette_vorticity};
use crate::lattice::{cell_fraction, p_energy_parts, solid_angle_vortex, Lattice, LatticeField, ProductVortex};
use crate::minimizer::{problem_energy, solve, Problem, SolveOptions};
use crate::scalar::pairwise_sum;

/// Largest materialized 3-D lattice accepted by [`limsup_sweep_3d`].
pub const MAX_NODES_3D: usize = 8_000_000;
/// Largest lattice accepted by [`prescribed_jacobian_min_energy_gap`].
pub const MAX_NODES_MIN: usize = 1_000_000;

/// `(n-1)^{p/2} omega_{n-1} area delta^{n-p} / (n-p)`: energy of the
/// flat vortex `x'/|x'|` in `B_delta^n x A`.
pub fn flat_vortex_energy(n: u32, p: f64, delta: f64, area: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    let nf = n as f64;
    if !(p > nf - 1.0 && p < nf) {
        return Err(invalid(format!("p = {p} must lie in (n-1, n)")));
    }
    if !(delta > 0.0) || !(area >= 0.0) {
        return Err(invalid("delta must be positive and area non-negative"));
    }
    Ok((nf - 1.0).powf(0.5 * p) * sphere_area::<f64>(n) * area * delta.powf(nf - p) / (nf - p))
}

/// `exp(-3/(n-p))/4`, fine enough to resolve the vortex cores.
pub fn core_resolving_h(n: u32, p: f64) -> f64 {
    (-3.0 / (n as f64 - p)).exp() / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "h")]
pub enum MeshRule {
    /// `h(p) = exp(-3/(2-p))/4`.
    CoreResolving,
    Fixed(f64),
}

impl MeshRule {
    pub fn h(&self, p: f64) -> f64 {
        match self {
            MeshRule::CoreResolving => core_resolving_h(2, p),
            MeshRule::Fixed(h) => *h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct RecoveryPlan {
    pub schedule: Vec<f64>,
    pub mesh: MeshRule,
    #[serde(default)]
    pub variant: bool,
    /// Tube radius around a 3-D curve.
    #[serde(default = "default_tube")]
    pub tube_radius: f64,
    /// Vertex balls have radius `tube_radius * sqrt(1 + gamma^-2)`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_tube() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    1.0
}

impl RecoveryPlan {
    pub fn new(schedule: Vec<f64>, mesh: MeshRule) -> Self {
        RecoveryPlan { schedule, mesh, variant: false, tube_radius: default_tube(), gamma: default_gamma() }
    }

    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(invalid("empty p schedule"));
        }
        if let Some(p) = self.schedule.iter().find(|p| !(**p > 1.0 && **p < 2.0)) {
            return Err(invalid(format!("p = {p} must lie in (1, 2)")));
        }
        if let MeshRule::Fixed(h) = self.mesh {
            if !(h > 0.0) {
                return Err(invalid("mesh size must be positive"));
            }
        }
        if !(self.tube_radius > 0.0) || !(self.gamma > 0.0) {
            return Err(invalid("tube radius and gamma must be positive"));
        }
        Ok(())
    }

    pub fn vertex_radius(&self) -> f64 {
        self.tube_radius * (1.0 + self.gamma.powi(-2)).sqrt()
    }
}

/// One row of a limsup sweep. Energies are rescaled by `(2 - p)`.
///
/// In 2-D, `tube` is the energy inside the truncation disks
/// `B(a_i, R_i)`, `R_i = min(dist(a_i, boundary), half the distance to the
/// nearest other atom)`, and `reference = 2 pi sum R_i^{2-p}` is the exact
/// value of a lone vortex there. In 3-D, `tube` is the energy within
/// `tube_radius` of the curve away from the vertex balls (`skeleton`), and
/// `reference` is the straight-line prediction for that region.
/// `ratio = tube / reference` in both cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub h: f64,
    pub rescaled_energy: f64,
    /// `2 pi M(Sigma)`.
    pub target: f64,
    pub ratio: f64,
    /// Flat distance from the extracted Jacobian to Sigma; not computed for
    /// 1-currents (NaN).
    pub flat_distance: f64,
    pub tube: f64,
    pub skeleton: f64,
    pub exterior: f64,
    pub reference: f64,
    /// `rescaled_energy / target`, without truncation correction.
    pub full_ratio: f64,
    /// 2-D: the Jacobian equals Sigma moved to the centers of the containing
    /// plaquettes. 3-D: the Jacobian is closed and lies within `sqrt(3) h`
    /// of Sigma.
    pub winding_exact: bool,
    /// Largest distance from the Jacobian's support to Sigma.
    pub support_distance: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "p,h,rescaled_energy,target,ratio,flat_distance,tube_part,skeleton_part,exterior_part";

    pub fn csv_fields(&self) -> [f64; 9] {
        [
            self.p,
            self.h,
            self.rescaled_energy,
            self.target,
            self.ratio,
            self.flat_distance,
            self.tube,
            self.skeleton,
            self.exterior,
        ]
    }
}

fn unit_atoms(sigma: &ZeroCurrent<f64, 2>, domain: &BoxDomain<f64, 2>) -> Result<Vec<([f64; 2], i32)>> {
    sigma
        .merged()
        .atoms()
        .iter()
        .map(|a| {
            if a.mult.abs() != 1 {
                return Err(invalid("multiplicities must be +1 or -1"));
            }
            if !(domain.boundary_distance(&a.point) > 0.0) {
                return Err(invalid(format!("atom {:?} is not interior", a.point.0)));
            }
            Ok((a.point.0, a.mult as i32))
        })
        .collect()
}

/// Truncation radii: distance to the boundary, capped at half the distance to
/// the nearest other atom.
pub fn truncation_radii(centers: &[([f64; 2], i32)], domain: &BoxDomain<f64, 2>) -> Vec<f64> {
    centers
        .iter()
        .enumerate()
        .map(|(i, (c, _))| {
            let b = domain.boundary_distance(&Point(*c));
            centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (o, _))| 0.5 * (c[0] - o[0]).hypot(c[1] - o[1]))
                .fold(b, f64::min)
        })
        .collect()
}

fn snap_to_plaquettes(sigma: &ZeroCurrent<f64, 2>, l: &Lattice) -> ZeroCurrent<f64, 2> {
    sigma.map_points(|x| {
        let i = l.locate(0, x.0[0]).floor() as usize;
        let j = l.locate(1, x.0[1]).floor() as usize;
        let c = l.cell_center([i, j, 0]);
        Point([c[0], c[1]])
    })
}

fn disk_share(x: [f64; 3], h: f64, disks: &[([f64; 2], f64)]) -> f64 {
    for (c, r) in disks {
        let d = (x[0] - c[0]).hypot(x[1] - c[1]);
        if d < r - h {
            return 1.0;
        }
        if d <= r + h {
            return cell_fraction(x, h, 2, 16, |y| (y[0] - c[0]).hypot(y[1] - c[1]) < *r);
        }
    }
    0.0
}

/// 2-D recovery of a 0-current with unit multiplicities by the product
/// vortex, evaluated implicitly so the finest lattices are never stored.
pub fn limsup_sweep_2d(
    sigma: &ZeroCurrent<f64, 2>,
    domain: &BoxDomain<f64, 2>,
    plan: &RecoveryPlan,
) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let centers = unit_atoms(sigma, domain)?;
    let radii = truncation_radii(&centers, domain);
    let disks: Vec<([f64; 2], f64)> = centers.iter().zip(&radii).map(|((c, _), r)| (*c, *r)).collect();
    let sigma = sigma.merged();
    let mass = centers.len() as f64;
    let target = Constants::<f64>::new(2).limit * mass;
    plan.schedule
        .iter()
        .map(|&p| {
            let h = plan.mesh.h(p);
            if let Some(r) = radii.iter().find(|r| **r < 4.0 * h) {
                return Err(Error::TooClose(format!("truncation radius {r} below 4h = {}", 4.0 * h)));
            }
            let l = Lattice::inside(domain, h)?;
            if centers.is_empty() {
                let parts = p_energy_parts(&LatticeField::constant(l, 0.0), p, plan.variant, 1, &|_, w| w[0] = 1.0)?;
                let e = (2.0 - p) * parts[0];
                return Ok(SweepRow {
                    p,
                    h: l.h,
                    rescaled_energy: e,
                    target: 0.0,
                    ratio: f64::NAN,
                    flat_distance: 0.0,
                    tube: 0.0,
                    skeleton: 0.0,
                    exterior: e,
                    reference: 0.0,
                    full_ratio: f64::NAN,
                    winding_exact: true,
                    support_distance: 0.0,
                });
            }
            let src = ProductVortex::new(centers.clone(), l)?;
            let parts = p_energy_parts(&src, p, plan.variant, 2, &|x, w| {
                w[0] = disk_share(x, h, &disks);
                w[1] = 1.0 - w[0];
            })?;
            let (tube, exterior) = ((2.0 - p) * parts[0], (2.0 - p) * parts[1]);
            let reference: f64 = radii.iter().map(|r| std::f64::consts::TAU * r.powf(2.0 - p)).sum();
            let vort = plaquette_vorticity(&src)?;
            let flat = flat_distance(&vort.current, &sigma, domain)?;
            let snapped = snap_to_plaquettes(&sigma, &l);
            let support_distance = vort
                .current
                .atoms()
                .iter()
                .map(|a| sigma.atoms().iter().map(|s| s.point.dist(&a.point)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            Ok(SweepRow {
                p,
                h: l.h,
                rescaled_energy: tube + exterior,
                target,
                ratio: tube / reference,
                flat_distance: flat,
                tube,
                skeleton: 0.0,
                exterior,
                reference,
                full_ratio: (tube + exterior) / target,
                winding_exact: vort.current.same_as(&snapped),
                support_distance,
            })
        })
        .collect()
}

fn point_segment_distance(x: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [x[0] - a[0], x[1] - a[1], x[2] - a[2]];
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let t = if dd == 0.0 { 0.0 } else { ((w[0] * d[0] + w[1] * d[1] + w[2] * d[2]) / dd).clamp(0.0, 1.0) };
    let q = [w[0] - t * d[0], w[1] - t * d[1], w[2] - t * d[2]];
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt()
}

fn curve_distance(x: [f64; 3], segs: &[([f64; 3], [f64; 3])]) -> f64 {
    segs.iter().map(|(a, b)| point_segment_distance(x, *a, *b)).fold(f64::INFINITY, f64::min)
}

/// `(2-p) int_{tube minus vertex balls} |x'|^{-p}` for straight segments:
/// at radius `rho` each segment keeps the length `L - 2 sqrt(r_v^2 - rho^2)`.
pub fn tube_prediction(lengths: &[f64], p: f64, delta: f64, vertex_radius: f64) -> f64 {
    // rho = delta * s^{1/(2-p)} turns rho^{1-p} d rho into delta^{2-p}/(2-p) ds
    let m = 4000;
    let cut: Vec<f64> = (0..m)
        .map(|k| {
            let s = (k as f64 + 0.5) / m as f64;
            let rho = delta * s.powf(1.0 / (2.0 - p));
            2.0 * (vertex_radius * vertex_radius - rho * rho).max(0.0).sqrt()
        })
        .collect();
    let mean_cut = pairwise_sum(&cut) / m as f64;
    let per_unit = std::f64::consts::TAU * delta.powf(2.0 - p);
    lengths.iter().map(|l| per_unit * (l - mean_cut).max(0.0)).sum()
}

/// 3-D recovery of a closed polygonal curve by the half-solid-angle map.
pub fn limsup_sweep_3d(
    curve: &OneCurrent<f64, 3>,
    domain: &BoxDomain<f64, 3>,
    plan: &RecoveryPlan,
) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    if curve.segments().iter().any(|s| s.mult.abs() != 1) {
        return Err(invalid("multiplicities must be +1 or -1"));
    }
    let segs: Vec<([f64; 3], [f64; 3])> = curve.segments().iter().map(|s| (s.a.0, s.b.0)).collect();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    for (a, b) in &segs {
        for v in [a, b] {
            if !vertices.contains(v) {
                vertices.push(*v);
            }
        }
    }
    let (delta, rv) = (plan.tube_radius, plan.vertex_radius());
    let lengths: Vec<f64> = curve.segments().iter().map(|s| s.length()).collect();
    let length: f64 = lengths.iter().sum();
    if segs.iter().flat_map(|(a, b)| [a, b]).any(|v| domain.boundary_distance(&Point(*v)) <= rv) {
        return Err(Error::TooClose("vertex balls must stay inside the domain".into()));
    }
    let target = Constants::<f64>::new(2).limit * length;
    let class = |x: [f64; 3]| -> usize {
        if vertices.iter().any(|v| ((x[0] - v[0]).powi(2) + (x[1] - v[1]).powi(2) + (x[2] - v[2]).powi(2)).sqrt() < rv) {
            1
        } else if curve_distance(x, &segs) < delta {
            0
        } else {
            2
        }
    };
    plan.schedule
        .iter()
        .map(|&p| {
            let h = plan.mesh.h(p);
            if delta < 4.0 * h {
                return Err(Error::TooClose(format!("tube radius {delta} below 4h = {}", 4.0 * h)));
            }
            let l = Lattice::inside(domain, h)?;
            if l.node_count() > MAX_NODES_3D {
                return Err(Error::SizeCap { units: l.node_count(), cap: MAX_NODES_3D });
            }
            let field = solid_angle_vortex(curve, l)?;
            let near = 0.9 * h;
            let parts = p_energy_parts(&field, p, plan.variant, 3, &|x, w| {
                let dv = vertices
                    .iter()
                    .map(|v| ((x[0] - v[0]).powi(2) + (x[1] - v[1]).powi(2) + (x[2] - v[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                let dc = curve_distance(x, &segs);
                if (dv - rv).abs() < near || (dc - delta).abs() < near {
                    let n = 4usize;
                    let step = h / n as f64;
                    let mut counts = [0usize; 3];
                    for k in 0..n {
                        for j in 0..n {
                            for i in 0..n {
                                let y = [
                                    x[0] + (i as f64 + 0.5) * step - 0.5 * h,
                                    x[1] + (j as f64 + 0.5) * step - 0.5 * h,
                                    x[2] + (k as f64 + 0.5) * step - 0.5 * h,
                                ];
                                counts[class(y)] += 1;
                            }
                        }
                    }
                    for m in 0..3 {
                        w[m] = counts[m] as f64 / (n * n * n) as f64;
                    }
                } else {
                    w[class(x)] = 1.0;
                }
            })?;
            let (tube, skeleton, exterior) = ((2.0 - p) * parts[0], (2.0 - p) * parts[1], (2.0 - p) * parts[2]);
            let reference = tube_prediction(&lengths, p, delta, rv);
            let vort = face_vorticity_3d(&field)?;
            let support_distance = vort
                .current
                .segments()
                .iter()
                .flat_map(|s| [s.a.0, s.b.0])
                .map(|x| curve_distance(x, &segs))
                .fold(0.0, f64::max);
            let closed = vort.current.boundary_free().is_zero();
            let rescaled = tube + skeleton + exterior;
            Ok(SweepRow {
                p,
                h: l.h,
                rescaled_energy: rescaled,
                target,
                ratio: tube / reference,
                flat_distance: f64::NAN,
                tube,
                skeleton,
                exterior,
                reference,
                full_ratio: rescaled / target,
                winding_exact: closed && support_distance <= 3f64.sqrt() * l.h + 1e-12,
                support_distance,
            })
        })
        .collect()
}

/// Rescaled p-energy `(2-p) int |grad u|^p` of the product vortex on a box,
/// from the exact core integrals `2 pi |d_i|^p R_i^{2-p}` over the
/// truncation disks plus midpoint quadrature of the analytic gradient
/// `|sum d_i (x - a_i)^perp / |x - a_i|^2|` outside them.
pub fn analytic_rescaled_energy(
    centers: &[([f64; 2], i32)],
    domain: &BoxDomain<f64, 2>,
    p: f64,
    quad_h: f64,
) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) || !(quad_h > 0.0) {
        return Err(invalid("need p in (1, 2) and a positive quadrature step"));
    }
    if centers.iter().any(|(c, _)| !(domain.boundary_distance(&Point(*c)) > 0.0)) {
        return Err(invalid("vortex centers must be interior"));
    }
    let radii = truncation_radii(centers, domain);
    if radii.iter().any(|r| *r < 2.0 * quad_h) {
        return Err(Error::TooClose("quadrature step too coarse for the vortex spacing".into()));
    }
    let core: f64 = centers
        .iter()
        .zip(&radii)
        .map(|((_, d), r)| std::f64::consts::TAU * (d.unsigned_abs() as f64).powf(p) * r.powf(2.0 - p))
        .sum();
    let lo = domain.lo().0;
    let nx = (domain.extent(0) / quad_h).ceil() as usize;
    let ny = (domain.extent(1) / quad_h).ceil() as usize;
    let (hx, hy) = (domain.extent(0) / nx as f64, domain.extent(1) / ny as f64);
    let disks: Vec<([f64; 2], f64)> = centers.iter().zip(&radii).map(|((c, _), r)| (*c, *r)).collect();
    let hm = hx.max(hy);
    let rows: Vec<f64> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let cells: Vec<f64> = (0..nx)
                .map(|i| {
                    let x = [lo[0] + (i as f64 + 0.5) * hx, lo[1] + (j as f64 + 0.5) * hy, 0.0];
                    let outside = 1.0 - disk_share(x, hm, &disks);
                    if outside == 0.0 {
                        return 0.0;
                    }
                    let mut g = [0.0, 0.0];
                    for (c, d) in centers {
                        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                        let r2 = dx * dx + dy * dy;
                        g[0] -= *d as f64 * dy / r2;
                        g[1] += *d as f64 * dx / r2;
                    }
                    outside * g[0].hypot(g[1]).powf(p) * hx * hy
                })
                .collect();
            pairwise_sum(&cells)
        })
        .collect();
    Ok(core + (2.0 - p) * pairwise_sum(&rows))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianGap {
    pub p: f64,
    pub h: f64,
    pub recovery_energy: f64,
    pub minimized_energy: f64,
    /// `(recovery - minimized) / recovery`.
    pub relative_gap: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimizes the p-energy among lattice maps with the product vortex's
/// boundary values and plaquette vorticity, starting from the product vortex.
pub fn prescribed_jacobian_min_energy_gap(
    sigma: &ZeroCurrent<f64, 2>,
    domain: &BoxDomain<f64, 2>,
    p: f64,
    h: Option<f64>,
    max_sweeps: usize,
) -> Result<JacobianGap> {
    let centers = unit_atoms(sigma, domain)?;
    let h = h.unwrap_or_else(|| core_resolving_h(2, p));
    let l = Lattice::inside(domain, h)?;
    if l.node_count() > MAX_NODES_MIN {
        return Err(Error::SizeCap { units: l.node_count(), cap: MAX_NODES_MIN });
    }
    let field = ProductVortex::new(centers, l)?.materialize()?;
    let pr = Problem::new(l, vec![true; l.node_count()], field.phases().expect("phase field").to_vec())?;
    let recovery = problem_energy(&pr, p, false);
    let mut opts = SolveOptions::new(p);
    opts.preserve_vorticity = true;
    opts.max_sweeps = max_sweeps;
    let sol = solve(&pr, &opts)?;
    let minimized = sol.report.total;
    Ok(JacobianGap {
        p,
        h: l.h,
        recovery_energy: recovery,
        minimized_energy: minimized,
        relative_gap: (recovery - minimized) / recovery,
        sweeps: sol.sweeps,
        converged: sol.converged,
    })
}
