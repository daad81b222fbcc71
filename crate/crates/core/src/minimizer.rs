//! Dirichlet-constrained p-energy minimization of S^1-valued maps on 2-D
//! lattices by coordinate descent on the phases.
//!
//! A node only enters the cells whose lower corner is the node itself, its
//! left neighbour or its lower neighbour, and it is a corner of the four
//! plaquettes around it. Nodes of equal parity `(i mod 2, j mod 2)` therefore
//! share neither cells nor plaquettes and are updated in parallel, one parity
//! class at a time.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::jacobian::{plaquette_vorticity, VorticityCurrent2D, JUMP_GUARD};
use crate::lattice::{EnergyReport, Lattice, LatticeField};
use crate::rng::task_rng;
use crate::scalar::{pairwise_sum, wrap_angle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Box,
}

/// Boundary phase `d * phi + wiggle * sin(phi)`, `phi = arg(x - c)`, on the
/// unit square sampled with `grid` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryDatum {
    pub degree: i32,
    pub shape: Shape,
    pub grid: usize,
    pub wiggle: f64,
}

impl BoundaryDatum {
    pub fn new(degree: i32, shape: Shape, grid: usize, wiggle: f64) -> Result<Self> {
        if grid < 32 {
            return Err(invalid("need at least 32 nodes per axis"));
        }
        if !wiggle.is_finite() || wiggle.abs() >= std::f64::consts::PI {
            return Err(invalid("wiggle amplitude must lie in (-pi, pi)"));
        }
        Ok(BoundaryDatum { degree, shape, grid, wiggle })
    }

    pub fn lattice(&self) -> Lattice {
        let h = 1.0 / (self.grid - 1) as f64;
        Lattice::new(&[self.grid, self.grid], &[0.0, 0.0], h).expect("valid grid")
    }

    /// `(1/2, 1/2)`, moved by `h/2` when it falls on a node.
    pub fn center(&self) -> [f64; 2] {
        let l = self.lattice();
        if l.on_node(&[0.5, 0.5], 1e-9) {
            [0.5 + 0.5 * l.h, 0.5 + 0.5 * l.h]
        } else {
            [0.5, 0.5]
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 - 0.5 * self.lattice().h
    }

    pub fn phase(&self, x: [f64; 2]) -> f64 {
        let c = self.center();
        let phi = (x[1] - c[1]).atan2(x[0] - c[0]);
        wrap_angle(self.degree as f64 * phi + self.wiggle * phi.sin())
    }

    pub fn problem(&self) -> Result<Problem> {
        let l = self.lattice();
        let c = self.center();
        let r = self.radius();
        let mask: Vec<bool> = (0..l.node_count())
            .map(|i| match self.shape {
                Shape::Box => true,
                Shape::Disk => {
                    let x = l.position(l.unindex(i));
                    (x[0] - c[0]).hypot(x[1] - c[1]) <= r
                }
            })
            .collect();
        let phases = (0..l.node_count())
            .map(|i| {
                let x = l.position(l.unindex(i));
                self.phase([x[0], x[1]])
            })
            .collect();
        Problem::new(l, mask, phases)
    }
}

/// A masked lattice with fixed boundary phases.
///
/// Free nodes are masked nodes whose eight neighbours are all masked; the
/// remaining masked nodes carry the Dirichlet datum. Active cells have all
/// four corners masked.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub lattice: Lattice,
    pub mask: Vec<bool>,
    pub free: Vec<bool>,
    pub active: Vec<bool>,
    pub phases: Vec<f64>,
}

impl Problem {
    pub fn new(lattice: Lattice, mask: Vec<bool>, phases: Vec<f64>) -> Result<Self> {
        if lattice.dim != 2 || mask.len() != lattice.node_count() || phases.len() != mask.len() {
            return Err(invalid("problem data must match a 2-D lattice"));
        }
        let (nx, ny) = (lattice.dims[0], lattice.dims[1]);
        let at = |i: isize, j: isize| -> bool {
            i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && mask[i as usize + nx * j as usize]
        };
        let mut free = vec![false; mask.len()];
        for j in 0..ny {
            for i in 0..nx {
                let (a, b) = (i as isize, j as isize);
                free[i + nx * j] = (-1..=1).all(|dj| (-1..=1).all(|di| at(a + di, b + dj)));
            }
        }
        let c = lattice.cell_dims();
        let mut active = vec![false; lattice.cell_count()];
        for j in 0..c[1] {
            for i in 0..c[0] {
                let (a, b) = (i as isize, j as isize);
                active[i + c[0] * j] = at(a, b) && at(a + 1, b) && at(a, b + 1) && at(a + 1, b + 1);
            }
        }
        let phases = phases.into_iter().map(wrap_angle).collect();
        Ok(Problem { lattice, mask, free, active, phases })
    }

    /// Replaces the free phases by those of `field`; fixed nodes keep the datum.
    pub fn warm_start(&mut self, field: &LatticeField) -> Result<()> {
        if !field.lattice().same_shape(&self.lattice) {
            return Err(invalid("warm-start field lives on a different lattice"));
        }
        let ph = field.phases().ok_or_else(|| invalid("warm-start field must be S^1-valued"))?;
        for (i, f) in self.free.iter().enumerate() {
            if *f {
                self.phases[i] = ph[i];
            }
        }
        Ok(())
    }

    pub fn field(&self) -> LatticeField {
        LatticeField::from_phases(self.lattice, self.phases.clone()).expect("finite phases")
    }
}

/// Node update rule. Both start from the exact golden-section minimizer
/// `t*` of the local energy; `Overrelaxed(w)` then moves to
/// `theta + w (t* - theta)` whenever that still lowers the local energy
/// below its value at `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScheme {
    Golden,
    Overrelaxed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SolveOptions {
    pub p: f64,
    pub variant: bool,
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the energy by less than `tol` relative.
    pub tol: f64,
    pub seed: u64,
    /// Reject updates that change any plaquette winding.
    pub preserve_vorticity: bool,
    pub scheme: UpdateScheme,
}

impl SolveOptions {
    pub fn new(p: f64) -> Self {
        SolveOptions { p, variant: false, max_sweeps: 4000, tol: 1e-7, seed: 0, preserve_vorticity: false, scheme: UpdateScheme::Golden }
    }

    fn validate(&self) -> Result<()> {
        if !(1.0..2.0).contains(&self.p) || self.p <= 1.0 {
            return Err(invalid("p must lie in (1, 2)"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if let UpdateScheme::Overrelaxed(w) = self.scheme {
            if !(w > 1.0 && w < 2.0) {
                return Err(invalid("over-relaxation factor must lie in (1, 2)"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    #[serde(skip)]
    pub field: LatticeField,
    pub report: EnergyReport,
    pub initial_energy: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
    pub rejected_updates: u64,
}

struct Workspace<'a> {
    pr: &'a Problem,
    u: Vec<[f64; 2]>,
    p: f64,
    variant: bool,
    inv_h2: f64,
    vol: f64,
}

fn unit(t: f64) -> [f64; 2] {
    let (s, c) = t.sin_cos();
    [c, s]
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn winding(ring: [[f64; 2]; 4]) -> Option<i64> {
    let mut s = 0.0;
    for e in 0..4 {
        let (a, b) = (ring[e], ring[(e + 1) % 4]);
        let j = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
        if j.abs() >= std::f64::consts::PI - JUMP_GUARD {
            return None;
        }
        s += j;
    }
    Some((s / std::f64::consts::TAU).round() as i64)
}

impl Workspace<'_> {
    fn integrand(&self, g2: f64) -> f64 {
        let g2 = g2 * self.inv_h2;
        let v = if self.variant {
            (1.0 + g2).powf(0.5 * self.p)
        } else if g2 == 0.0 {
            0.0
        } else {
            g2.powf(0.5 * self.p)
        };
        v * self.vol
    }

    fn cell(&self, i: usize, j: usize) -> f64 {
        let l = &self.pr.lattice;
        let c = l.cell_dims();
        if !self.pr.active[i + c[0] * j] {
            return 0.0;
        }
        let n = l.dims[0];
        let k = i + n * j;
        self.integrand(sq(self.u[k + 1], self.u[k]) + sq(self.u[k + n], self.u[k]))
    }

    /// Energy of the three cells touched by node `(i, j)` with value `v`.
    fn local(&self, i: usize, j: usize, v: [f64; 2]) -> f64 {
        let l = &self.pr.lattice;
        let (n, c) = (l.dims[0], l.cell_dims());
        let k = i + n * j;
        let mut e = 0.0;
        if i < c[0] && j < c[1] && self.pr.active[i + c[0] * j] {
            e += self.integrand(sq(self.u[k + 1], v) + sq(self.u[k + n], v));
        }
        if i > 0 && j < c[1] && self.pr.active[i - 1 + c[0] * j] {
            let m = k - 1;
            e += self.integrand(sq(v, self.u[m]) + sq(self.u[m + n], self.u[m]));
        }
        if j > 0 && i < c[0] && self.pr.active[i + c[0] * (j - 1)] {
            let m = k - n;
            e += self.integrand(sq(self.u[m + 1], self.u[m]) + sq(v, self.u[m]));
        }
        e
    }

    /// Windings of the four plaquettes having node `(i, j)` as a corner.
    fn windings(&self, i: usize, j: usize, v: [f64; 2]) -> Option<[i64; 4]> {
        let n = self.pr.lattice.dims[0];
        let k = i + n * j;
        let val = |m: usize| if m == k { v } else { self.u[m] };
        let mut out = [0i64; 4];
        for (q, (di, dj)) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            let (a, b) = (i - di, j - dj);
            let m = a + n * b;
            out[q] = winding([val(m), val(m + 1), val(m + 1 + n), val(m + n)])?;
        }
        Some(out)
    }

    fn total(&self) -> f64 {
        let c = self.pr.lattice.cell_dims();
        let rows: Vec<f64> = (0..c[1])
            .into_par_iter()
            .map(|j| pairwise_sum(&(0..c[0]).map(|i| self.cell(i, j)).collect::<Vec<_>>()))
            .collect();
        pairwise_sum(&rows)
    }

    fn density(&self) -> Vec<f64> {
        let c = self.pr.lattice.cell_dims();
        (0..c[1]).flat_map(|j| (0..c[0]).map(move |i| (i, j))).map(|(i, j)| self.cell(i, j)).collect()
    }

    /// Best phase for node `(i, j)`, or `None` when no strict improvement
    /// is found (or every improvement changes a winding).
    fn improve(&self, i: usize, j: usize, theta: f64, preserve: bool, scheme: UpdateScheme) -> (Option<f64>, bool) {
        let f = |t: f64| self.local(i, j, unit(t));
        let current = f(theta);
        let mut best = (current, theta);
        for s in 0..8 {
            let t = theta + (s as f64 + 1.0) * std::f64::consts::TAU / 9.0;
            let e = f(t);
            if e < best.0 {
                best = (e, t);
            }
        }
        // golden-section refinement around the best sample
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (best.1 - std::f64::consts::PI / 4.5, best.1 + std::f64::consts::PI / 4.5);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..20 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        for (e, t) in [(f1, x1), (f2, x2)] {
            if e < best.0 {
                best = (e, t);
            }
        }
        if !(best.0 < current) {
            return (None, false);
        }
        if let UpdateScheme::Overrelaxed(w) = scheme {
            let t = theta + w * wrap_angle(best.1 - theta);
            let e = f(t);
            if e < current {
                best = (e, t);
            }
        }
        let t = wrap_angle(best.1);
        if preserve {
            let before = self.windings(i, j, unit(theta));
            let after = self.windings(i, j, unit(t));
            if before.is_none() || before != after {
                return (None, true);
            }
        }
        (Some(t), false)
    }
}

fn parity_classes(pr: &Problem, seed: u64, sweep: usize) -> Vec<Vec<(usize, usize)>> {
    use rand::seq::SliceRandom;
    let n = pr.lattice.dims[0];
    let mut classes = vec![Vec::new(); 4];
    for (k, f) in pr.free.iter().enumerate() {
        if *f {
            let (i, j) = (k % n, k / n);
            classes[(i % 2) + 2 * (j % 2)].push((i, j));
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(&mut task_rng(seed, sweep as u64));
    order.iter().map(|&c| std::mem::take(&mut classes[c])).collect()
}

/// Coordinate descent from the problem's current phases.
pub fn solve(problem: &Problem, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    let mut pr = problem.clone();
    let l = pr.lattice;
    let mut ws = Workspace {
        pr: problem,
        u: pr.phases.iter().map(|&t| unit(t)).collect(),
        p: opts.p,
        variant: opts.variant,
        inv_h2: 1.0 / (l.h * l.h),
        vol: l.h * l.h,
    };
    let initial = ws.total();
    let mut energy = initial;
    let mut sweeps = 0;
    let mut converged = energy == 0.0 && !opts.variant;
    let mut rejected = 0u64;
    while !converged && sweeps < opts.max_sweeps {
        for class in parity_classes(problem, opts.seed, sweeps) {
            let updates: Vec<(usize, Option<f64>, bool)> = class
                .par_iter()
                .map(|&(i, j)| {
                    let k = i + l.dims[0] * j;
                    let (t, rej) = ws.improve(i, j, pr.phases[k], opts.preserve_vorticity, opts.scheme);
                    (k, t, rej)
                })
                .collect();
            for (k, t, rej) in updates {
                rejected += rej as u64;
                if let Some(t) = t {
                    pr.phases[k] = t;
                    ws.u[k] = unit(t);
                }
            }
        }
        sweeps += 1;
        let next = ws.total();
        if next > energy * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Internal(format!("energy increased from {energy} to {next} in sweep {sweeps}")));
        }
        converged = energy == 0.0 || (energy - next) / energy < opts.tol;
        energy = next;
    }
    let density = ws.density();
    let report = EnergyReport { p: opts.p, variant: opts.variant, total: energy, rescaled: (2.0 - opts.p) * energy, density };
    let field = pr.field();
    if opts.preserve_vorticity {
        let before = plaquette_vorticity(&problem.field())?;
        let after = plaquette_vorticity(&field)?;
        if !before.current.same_as(&after.current) {
            return Err(Error::Internal("an accepted update changed the vorticity".into()));
        }
    }
    Ok(Solution {
        field,
        report,
        initial_energy: initial,
        sweeps,
        converged,
        budget_exhausted: !converged,
        rejected_updates: rejected,
    })
}

/// Minimizes from the datum extended by its own formula, or from a warm
/// start.
pub fn minimize(datum: &BoundaryDatum, opts: &SolveOptions, warm: Option<&LatticeField>) -> Result<Solution> {
    let mut pr = datum.problem()?;
    if let Some(w) = warm {
        pr.warm_start(w)?;
    }
    solve(&pr, opts)
}

/// Energy of the problem's current phases over the active cells.
pub fn problem_energy(problem: &Problem, p: f64, variant: bool) -> f64 {
    let l = problem.lattice;
    let ws = Workspace {
        pr: problem,
        u: problem.phases.iter().map(|&t| unit(t)).collect(),
        p,
        variant,
        inv_h2: 1.0 / (l.h * l.h),
        vol: l.h * l.h,
    };
    ws.total()
}

/// Per-cell rescaled density `(2 - p) |grad u|^p h^2`.
pub fn energy_density_map(report: &EnergyReport) -> Vec<f64> {
    report.density.iter().map(|d| (2.0 - report.p) * d).collect()
}

/// Share of the energy in cells whose center lies within `radius` of an
/// atom of `vort`.
pub fn concentration_ratio(lattice: &Lattice, density: &[f64], vort: &VorticityCurrent2D, radius: f64) -> f64 {
    let c = lattice.cell_dims();
    let near: Vec<f64> = density
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let x = lattice.cell_center([k % c[0], k / c[0], 0]);
            let hit = vort.current.atoms().iter().any(|a| (a.point.0[0] - x[0]).hypot(a.point.0[1] - x[1]) < radius);
            if hit {
                d
            } else {
                0.0
            }
        })
        .collect();
    let total = pairwise_sum(density);
    if total == 0.0 {
        0.0
    } else {
        pairwise_sum(&near) / total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VortexRecord {
    pub p: f64,
    pub energy: f64,
    pub rescaled_energy: f64,
    pub vortices: Vec<([f64; 2], i64)>,
    pub total_vorticity: i64,
    pub concentration: f64,
    /// Flat distance to the Jacobian of the previous record.
    pub flat_to_previous: Option<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub const CONCENTRATION_RADIUS: f64 = 0.25;

/// Minimizes along `schedule`, warm-starting each p from the previous one.
pub fn vortex_sweep(
    datum: &BoundaryDatum,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<VortexRecord>, Vec<LatticeField>)> {
    use crate::flat::flat_distance;
    use crate::geometry::BoxDomain;
    let domain = BoxDomain::new([0.0, 0.0], [1.0, 1.0])?;
    let mut records: Vec<VortexRecord> = Vec::new();
    let mut fields: Vec<LatticeField> = Vec::new();
    let mut prev_jac: Option<VorticityCurrent2D> = None;
    for &p in schedule {
        if !(1.2..=1.9).contains(&p) {
            return Err(invalid("sweep exponents must lie in [1.2, 1.9]"));
        }
        let o = SolveOptions { p, ..*opts };
        let sol = minimize(datum, &o, fields.last())?;
        let vort = plaquette_vorticity(&sol.field)?;
        let conc = concentration_ratio(&sol.field.lattice().clone(), &sol.report.density, &vort, CONCENTRATION_RADIUS);
        let flat_to_previous = match &prev_jac {
            Some(j) => Some(flat_distance(&vort.current, &j.current, &domain)?),
            None => None,
        };
        records.push(VortexRecord {
            p,
            energy: sol.report.total,
            rescaled_energy: sol.report.rescaled,
            vortices: vort.current.atoms().iter().map(|a| (a.point.0, a.mult)).collect(),
            total_vorticity: vort.total(),
            concentration: conc,
            flat_to_previous,
            sweeps: sol.sweeps,
            converged: sol.converged,
        });
        prev_jac = Some(vort);
        fields.push(sol.field);
    }
    Ok((records, fields))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_datum_gives_zero_energy() {
        let d = BoundaryDatum::new(0, Shape::Box, 32, 0.0).unwrap();
        let s = minimize(&d, &SolveOptions::new(1.5), None).unwrap();
        assert_eq!(s.report.total, 0.0);
        assert!(s.converged);
    }

    #[test]
    fn datum_validation() {
        assert!(BoundaryDatum::new(1, Shape::Disk, 16, 0.0).is_err());
        assert!(BoundaryDatum::new(1, Shape::Disk, 64, 4.0).is_err());
        let d = BoundaryDatum::new(1, Shape::Disk, 64, 0.0).unwrap();
        let mut o = SolveOptions::new(2.0);
        assert!(minimize(&d, &o, None).is_err());
        o.p = 1.5;
        o.tol = 0.0;
        assert!(minimize(&d, &o, None).is_err());
    }

    #[test]
    fn descent_and_degree_on_small_disk() {
        let d = BoundaryDatum::new(1, Shape::Disk, 48, 0.0).unwrap();
        let mut o = SolveOptions::new(1.5);
        o.max_sweeps = 300;
        let s = minimize(&d, &o, None).unwrap();
        assert!(s.report.total <= s.initial_energy);
        let v = plaquette_vorticity(&s.field).unwrap();
        assert_eq!(v.total(), 1);
        assert_eq!(v.current.atoms().len(), 1);
        let a = v.current.atoms()[0].point.0;
        let h = d.lattice().h;
        assert!((a[0] - 0.5).hypot(a[1] - 0.5) <= 3.0 * h);
        assert!((pairwise_sum(&s.report.density) - s.report.total).abs() < 1e-12 * s.report.total);
    }

    #[test]
    fn wiggle_keeps_degree_zero() {
        let d = BoundaryDatum::new(0, Shape::Box, 32, 2.0).unwrap();
        let mut o = SolveOptions::new(1.5);
        o.max_sweeps = 200;
        let s = minimize(&d, &o, None).unwrap();
        assert_eq!(plaquette_vorticity(&s.field).unwrap().total(), 0);
        assert!(s.report.total < s.initial_energy);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let d = BoundaryDatum::new(1, Shape::Disk, 40, 0.3).unwrap();
        let mut o = SolveOptions::new(1.4);
        o.max_sweeps = 20;
        let run = |t: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| minimize(&d, &o, None).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.field, b.field);
        assert_eq!(a.report.total.to_bits(), b.report.total.to_bits());
    }

    #[test]
    fn vorticity_preserving_updates() {
        let l = Lattice::new(&[40, 40], &[0.0, 0.0], 1.0 / 39.0).unwrap();
        let f = crate::lattice::product_vortex(&[([0.3, 0.5], 1), ([0.7, 0.5], -1)], l).unwrap();
        let pr = Problem::new(l, vec![true; l.node_count()], f.phases().unwrap().to_vec()).unwrap();
        let mut o = SolveOptions::new(1.3);
        o.preserve_vorticity = true;
        o.max_sweeps = 100;
        let s = solve(&pr, &o).unwrap();
        assert!(s.report.total <= s.initial_energy);
        let v = plaquette_vorticity(&s.field).unwrap();
        assert!(v.current.same_as(&plaquette_vorticity(&f).unwrap().current));
    }

    #[test]
    fn density_map_and_concentration() {
        let d = BoundaryDatum::new(1, Shape::Box, 32, 0.0).unwrap();
        let pr = d.problem().unwrap();
        let f = pr.field();
        let r = crate::lattice::p_energy(&f, 1.5, false).unwrap();
        let m = energy_density_map(&r);
        assert!((pairwise_sum(&m) - r.rescaled).abs() < 1e-12 * r.rescaled);
        let rot = crate::lattice::p_energy(&f.rotated(0.7), 1.5, false).unwrap();
        assert!(m.iter().zip(energy_density_map(&rot)).all(|(a, b)| (a - b).abs() < 1e-12));
        let v = plaquette_vorticity(&f).unwrap();
        let c = concentration_ratio(f.lattice(), &r.density, &v, 0.25);
        assert!(c > 0.0 && c < 1.0);
        // density peaks next to the vortex
        let (k, _) = m.iter().enumerate().fold((0, 0.0), |b, (k, &x)| if x > b.1 { (k, x) } else { b });
        let cd = f.lattice().cell_dims();
        let x = f.lattice().cell_center([k % cd[0], k / cd[0], 0]);
        assert!((x[0] - 0.5).hypot(x[1] - 0.5) < 2.0 * f.lattice().h);
    }
}
