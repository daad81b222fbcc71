//! One runner per experiment kind. Each writes its outputs and checks the
//! structural invariants of the result; a failed check is reported as
//! [`CliError::Invariant`] after the outputs are on disk.

use std::path::Path;

use gammaflow_core::currents::{CurrentsJson, OneCurrent, ZeroCurrent};
use gammaflow_core::decomposition::{decompose, verify_bounds, DecompParams, DecompositionResult};
use gammaflow_core::flat::flat_norm_zero;
use gammaflow_core::geometry::BoxDomain;
use gammaflow_core::grid::{deform_to_dual, intersection_numbers, select_shift, FaceRef, GridSpec};
use gammaflow_core::io::{load_field, FieldMeta};
use gammaflow_core::jacobian::{face_vorticity_3d, plaquette_vorticity, VorticityCurrent2D};
use gammaflow_core::lattice::{
    axis_vortex_3d, p_energy, p_energy_total, solid_angle_vortex, EnergyReport, Lattice, LatticeField, NodeSource,
    ProductVortex,
};
use gammaflow_core::minimizer::{minimize, vortex_sweep, BoundaryDatum, SolveOptions, VortexRecord};
use gammaflow_core::recovery::{
    analytic_rescaled_energy, limsup_sweep_2d, limsup_sweep_3d, prescribed_jacobian_min_energy_gap, RecoveryPlan,
    SweepRow, MAX_NODES_3D,
};
use gammaflow_core::Error;
use serde_json::json;

use crate::config::{
    parse_json, resolve, CurrentSource, DecomposeParams, DeformParams, EnergyParams, EnergySpec, FieldSource,
    FlatnormParams, JacobianParams, MinimizeParams, RecoverParams, SweepParams,
};
use crate::output::{num, Csv, Outputs};
use crate::CliError;

/// Relative tolerance for sums that hold exactly up to rounding.
const SUM_TOL: f64 = 1e-9;

pub struct Ctx<'a> {
    /// Directory that relative input paths are resolved against.
    pub base: &'a Path,
    pub seed: u64,
    pub out: &'a mut Outputs,
}

fn invariant(predicate: &str, operands: String) -> CliError {
    CliError::Invariant(format!("{predicate}: {operands}"))
}

pub fn load_current(src: &CurrentSource, base: &Path) -> Result<CurrentsJson, CliError> {
    match src {
        CurrentSource::Inline(c) => Ok(c.clone()),
        CurrentSource::File(p) => {
            let path = resolve(base, p);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            parse_json(&text, &path.display().to_string())
        }
    }
}

enum Source {
    Field(LatticeField),
    Product(ProductVortex),
}

impl Source {
    fn lattice(&self) -> &Lattice {
        match self {
            Source::Field(f) => f.lattice(),
            Source::Product(v) => v.lattice(),
        }
    }
}

fn capped(l: Lattice) -> Result<Lattice, CliError> {
    if l.node_count() > MAX_NODES_3D {
        return Err(Error::SizeCap { units: l.node_count(), cap: MAX_NODES_3D }.into());
    }
    Ok(l)
}

fn build_field(src: &FieldSource, base: &Path) -> Result<Source, CliError> {
    Ok(match src {
        FieldSource::File(p) => Source::Field(load_field(&resolve(base, p))?),
        FieldSource::ProductVortex { centers, domain, h } => {
            let l = Lattice::inside(&domain.to_box::<2>()?, *h)?;
            Source::Product(ProductVortex::new(centers.iter().map(|c| (c.x, c.d)).collect(), l)?)
        }
        FieldSource::AxisVortex { point, axis, domain, h } => {
            let l = capped(Lattice::inside(&domain.to_box::<3>()?, *h)?)?;
            Source::Field(axis_vortex_3d(*point, *axis, l)?)
        }
        FieldSource::SolidAngle { curve, domain, h } => {
            let c = load_current(curve, base)?.one_current::<3>()?;
            let l = capped(Lattice::inside(&domain.to_box::<3>()?, *h)?)?;
            Source::Field(solid_angle_vortex(&c, l)?)
        }
    })
}

fn density_csv(l: &Lattice, density: &[f64]) -> Csv {
    let cd = l.cell_dims();
    let mut csv = if l.dim == 2 { Csv::new(&["x", "y", "density"]) } else { Csv::new(&["x", "y", "z", "density"]) };
    let mut i = 0;
    for k in 0..cd[2] {
        for j in 0..cd[1] {
            for a in 0..cd[0] {
                let c = l.cell_center([a, j, k]);
                let mut row: Vec<String> = c[..l.dim].iter().map(|x| num(*x)).collect();
                row.push(num(density[i]));
                csv.row(&row);
                i += 1;
            }
        }
    }
    csv
}

pub fn energy(p: &EnergyParams, ctx: &mut Ctx) -> Result<(), CliError> {
    if p.p.is_empty() {
        return Err(CliError::Usage("energy.p must list at least one exponent".into()));
    }
    let src = build_field(&p.field, ctx.base)?;
    let l = *src.lattice();
    if p.density {
        capped(l)?;
    }
    let mut csv = Csv::new(&["p", "variant", "h", "energy", "rescaled_energy"]);
    let mut reports = Vec::new();
    for (i, &e) in p.p.iter().enumerate() {
        let rep = if p.density {
            match &src {
                Source::Field(f) => p_energy(f, e, p.variant)?,
                Source::Product(v) => p_energy(v, e, p.variant)?,
            }
        } else {
            let total = match &src {
                Source::Field(f) => p_energy_total(f, e, p.variant)?,
                Source::Product(v) => p_energy_total(v, e, p.variant)?,
            };
            EnergyReport { p: e, variant: p.variant, total, rescaled: (2.0 - e) * total, density: Vec::new() }
        };
        csv.row(&[num(e), p.variant.to_string(), num(l.h), num(rep.total), num(rep.rescaled)]);
        if p.density {
            let sum: f64 = rep.density.iter().sum();
            if (sum - rep.total).abs() > SUM_TOL * rep.total.abs().max(1e-300) {
                return Err(invariant("density sums to the total", format!("sum {sum}, total {}", rep.total)));
            }
            ctx.out.csv(&format!("density_{i}.csv"), density_csv(&l, &rep.density))?;
        }
        reports.push(rep);
    }
    ctx.out.csv("energy.csv", csv)?;
    ctx.out.json("energy.json", &reports)
}

fn vortex_csv(v: &VorticityCurrent2D) -> Csv {
    let mut csv = Csv::new(&["x", "y", "multiplicity"]);
    for a in v.current.atoms() {
        csv.row(&[num(a.point.0[0]), num(a.point.0[1]), a.mult.to_string()]);
    }
    csv
}

pub fn jacobian(p: &JacobianParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let src = build_field(&p.field, ctx.base)?;
    let l = *src.lattice();
    if l.dim == 2 {
        let v = match &src {
            Source::Field(f) => plaquette_vorticity(f)?,
            Source::Product(v) => plaquette_vorticity(v)?,
        };
        ctx.out.json("vorticity.json", &v.to_json())?;
        ctx.out.csv("vorticity.csv", vortex_csv(&v))?;
        return ctx.out.json("summary.json", &json!({"dim": 2, "total": v.total(), "atoms": v.current.atoms().len()}));
    }
    let Source::Field(f) = &src else { unreachable!("3-D sources are materialized") };
    let v = face_vorticity_3d(f)?;
    let mut csv = Csv::new(&["ax", "ay", "az", "bx", "by", "bz", "multiplicity"]);
    for s in v.current.segments() {
        let mut row: Vec<String> = s.a.0.iter().chain(s.b.0.iter()).map(|x| num(*x)).collect();
        row.push(s.mult.to_string());
        csv.row(&row);
    }
    ctx.out.json("vorticity.json", &v.to_json())?;
    ctx.out.csv("vorticity.csv", csv)?;
    // the chain may only end in the outermost layer of cubes
    let ends = v.current.boundary_free();
    let lo = l.origin;
    let hi: [f64; 3] = std::array::from_fn(|a| l.origin[a] + (l.dims[a] - 1) as f64 * l.h);
    let interior_end = ends
        .atoms()
        .iter()
        .find(|a| (0..3).all(|k| a.point.0[k] - lo[k] > l.h && hi[k] - a.point.0[k] > l.h));
    ctx.out.json(
        "summary.json",
        &json!({"dim": 3, "edges": v.current.segments().len(), "open_ends": ends.atoms().len()}),
    )?;
    if let Some(a) = interior_end {
        return Err(invariant("vorticity chain is closed inside the lattice", format!("open end at {:?}", a.point.0)));
    }
    Ok(())
}

pub fn ledger_csv<const D: usize>(r: &DecompositionResult<f64, D>) -> Csv {
    let mut csv = Csv::new(&["k", "alpha_k", "e_k", "e_prime_k"]);
    for e in &r.ledger.entries {
        csv.row(&[e.k.to_string(), num(e.alpha_k), e.e.to_string(), e.e_prime.to_string()]);
    }
    csv
}

fn run_decompose<const D: usize>(
    t: &ZeroCurrent<f64, D>,
    dom: &BoxDomain<f64, D>,
    params: &DecompParams<f64>,
    energy: Option<f64>,
    ctx: &mut Ctx,
) -> Result<(), CliError> {
    let r = decompose(t, dom, params)?;
    let ledger: Vec<_> = r
        .ledger
        .entries
        .iter()
        .map(|e| json!({"k": e.k, "alpha_k": e.alpha_k, "e_k": e.e, "e_prime_k": e.e_prime}))
        .collect();
    ctx.out.json(
        "decomposition.json",
        &json!({
            "x": CurrentsJson::new(&r.x, &OneCurrent::zero()).with_source("decompose.x"),
            "s": CurrentsJson::new(&ZeroCurrent::zero(), &r.s).with_source("decompose.s"),
            "alpha1": r.alpha1,
            "steps": r.trace.len(),
            "ledger": ledger,
            "k_max": r.ledger.k_max,
            "k_max_prime": r.ledger.k_max_prime,
        }),
    )?;
    ctx.out.csv("ledger.csv", ledger_csv(&r))?;
    let mut trace = Csv::new(&["step", "distance", "scale", "y_boundary", "z_boundary"]);
    for (i, s) in r.trace.iter().enumerate() {
        trace.row(&[i.to_string(), num(s.distance), s.scale.to_string(), s.y.is_boundary().to_string(), s.z.is_boundary().to_string()]);
    }
    ctx.out.csv("trace.csv", trace)?;

    let rebuilt = r.x.add(&r.s.boundary(dom));
    if !rebuilt.same_as(t) {
        return Err(invariant(
            "X + dS = T",
            format!("input mass {}, X mass {}, segments {}", t.total_mass(), r.x.total_mass(), r.s.segments().len()),
        ));
    }
    if let Some(s) = r.s.segments().iter().find(|s| s.length() > r.alpha1) {
        return Err(invariant("segment length <= alpha_1", format!("{} > {}", s.length(), r.alpha1)));
    }
    if r.trace.len() as i64 > t.total_mass() {
        return Err(invariant("steps <= M(T)", format!("{} > {}", r.trace.len(), t.total_mass())));
    }
    if let Some(e) = energy {
        let b = verify_bounds(&r, t.mass(dom), e, params)?;
        ctx.out.json("bounds.json", &b)?;
        if !b.all_hold() {
            return Err(invariant(
                "M(X) <= C E, M(S) <= C alpha alpha^(1/(2(n-p))) E, sharp mass bound",
                format!(
                    "M(X) {} vs {}, M(S) {} vs {}, {} vs {}",
                    b.mass_x, b.mass_rhs, b.mass_s, b.flat_rhs, b.sharp_lhs, b.sharp_rhs
                ),
            ));
        }
    }
    Ok(())
}

pub fn unit_centers(t: &ZeroCurrent<f64, 2>) -> Result<Vec<([f64; 2], i32)>, CliError> {
    t.merged()
        .atoms()
        .iter()
        .map(|a| match a.mult {
            1 | -1 => Ok((a.point.0, a.mult as i32)),
            m => Err(CliError::Usage(format!("atom {:?} has multiplicity {m}; the energy oracle needs unit atoms", a.point.0))),
        })
        .collect()
}

pub fn decompose_cmd(p: &DecomposeParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let c = load_current(&p.current, ctx.base)?;
    let params = DecompParams::new(p.n, p.p, p.alpha)?;
    match c.dim {
        2 => {
            let t = c.zero_current::<2>()?;
            let dom = p.domain.to_box::<2>()?;
            let energy = match p.energy {
                None => None,
                Some(EnergySpec::Value(e)) => Some(e),
                Some(EnergySpec::Oracle { quad_h }) => {
                    if p.n != 2 {
                        return Err(CliError::Usage("the energy oracle is two-dimensional (n = 2)".into()));
                    }
                    Some(analytic_rescaled_energy(&unit_centers(&t)?, &dom, p.p, quad_h)?)
                }
            };
            run_decompose(&t, &dom, &params, energy, ctx)
        }
        3 => {
            let energy = match p.energy {
                None => None,
                Some(EnergySpec::Value(e)) => Some(e),
                Some(EnergySpec::Oracle { .. }) => {
                    return Err(CliError::Usage("the energy oracle is two-dimensional".into()))
                }
            };
            run_decompose(&c.zero_current::<3>()?, &p.domain.to_box::<3>()?, &params, energy, ctx)
        }
        d => Err(CliError::Usage(format!("currents of dimension {d} are not supported"))),
    }
}

pub fn flatnorm_csv(value: f64) -> Csv {
    let mut csv = Csv::new(&["flat_norm"]);
    csv.row(&[num(value)]);
    csv
}

fn run_flatnorm<const D: usize>(
    c: &CurrentsJson,
    other: Option<&CurrentsJson>,
    dom: &BoxDomain<f64, D>,
    ctx: &mut Ctx,
) -> Result<(), CliError> {
    let mut t = c.zero_current::<D>()?;
    if let Some(o) = other {
        t = t.sub(&o.zero_current::<D>()?);
    }
    let f = flat_norm_zero(&t, dom)?;
    ctx.out.json(
        "flatnorm.json",
        &json!({"value": f.value, "witness": CurrentsJson::new(&ZeroCurrent::zero(), &f.witness).with_source("flat_witness")}),
    )?;
    ctx.out.csv("flatnorm.csv", flatnorm_csv(f.value))?;
    if !f.witness.boundary(dom).same_as(&t.restrict(dom)) {
        return Err(invariant("boundary of the witness = input", format!("witness segments {}", f.witness.segments().len())));
    }
    if (f.witness.mass() - f.value).abs() > SUM_TOL * f.value.max(1e-300) {
        return Err(invariant("mass of the witness = flat norm", format!("{} vs {}", f.witness.mass(), f.value)));
    }
    Ok(())
}

pub fn flatnorm(p: &FlatnormParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let c = load_current(&p.current, ctx.base)?;
    let other = p.other.as_ref().map(|o| load_current(o, ctx.base)).transpose()?;
    if let Some(o) = &other {
        if o.dim != c.dim {
            return Err(CliError::Usage(format!("currents of dimension {} and {}", c.dim, o.dim)));
        }
    }
    match c.dim {
        2 => run_flatnorm(&c, other.as_ref(), &p.domain.to_box::<2>()?, ctx),
        3 => run_flatnorm(&c, other.as_ref(), &p.domain.to_box::<3>()?, ctx),
        d => Err(CliError::Usage(format!("currents of dimension {d} are not supported"))),
    }
}

pub fn crossings_csv(counts: &std::collections::BTreeMap<FaceRef, i64>) -> Csv {
    let mut csv = Csv::new(&["cell_ix", "cell_iy", "cell_iz", "normal_axis", "count"]);
    for (f, m) in counts {
        csv.row(&[f.index[0].to_string(), f.index[1].to_string(), f.index[2].to_string(), f.normal.to_string(), m.to_string()]);
    }
    csv
}

pub fn deform(p: &DeformParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let curve = load_current(&p.curve, ctx.base)?.one_current::<3>()?;
    let v = p.domain.to_box::<3>()?;
    let grid = match p.shift {
        Some(s) => GridSpec::new(p.ell, s)?,
        None => {
            let (g, diag) = select_shift(&curve, p.ell, p.delta, ctx.seed)?;
            ctx.out.json("shift.json", &diag)?;
            g
        }
    };
    let deformed = deform_to_dual(&curve, &grid, &v)?;
    let counts = intersection_numbers(&curve, &grid)?;
    ctx.out.json(
        "deformed.json",
        &CurrentsJson::new(&ZeroCurrent::zero(), &deformed).with_source("deform_to_dual"),
    )?;
    ctx.out.json("grid.json", &json!({"ell": grid.ell, "shift": grid.shift.0}))?;
    ctx.out.csv("crossings.csv", crossings_csv(&counts))?;
    if curve.boundary_free().is_zero() && !deformed.boundary_free().is_zero() {
        return Err(invariant("closed input deforms to a closed chain", format!("{} open ends", deformed.boundary_free().atoms().len())));
    }
    let total: i64 = counts.values().map(|m| m.abs()).sum();
    let carried: i64 = deformed.segments().iter().map(|s| s.mult.abs()).sum();
    if total != carried {
        return Err(invariant("dual-edge multiplicities = intersection numbers", format!("{carried} vs {total}")));
    }
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Csv {
    let header: Vec<&str> = SweepRow::CSV_HEADER.split(',').collect();
    let mut csv = Csv::new(&header);
    for r in rows {
        csv.row(&r.csv_fields().map(num));
    }
    csv
}

fn run_plan(target: &CurrentsJson, domain: &gammaflow_core::geometry::BoxJson, plan: &RecoveryPlan) -> Result<Vec<SweepRow>, CliError> {
    Ok(match target.dim {
        2 => limsup_sweep_2d(&target.zero_current::<2>()?, &domain.to_box::<2>()?, plan)?,
        3 => limsup_sweep_3d(&target.one_current::<3>()?, &domain.to_box::<3>()?, plan)?,
        d => return Err(CliError::Usage(format!("recovery targets live in 2-D or 3-D, got {d}"))),
    })
}

fn check_rows(rows: &[SweepRow]) -> Result<(), CliError> {
    for r in rows {
        let sum = r.tube + r.skeleton + r.exterior;
        if (sum - r.rescaled_energy).abs() > SUM_TOL * r.rescaled_energy.abs().max(1e-300) {
            return Err(invariant("tube + skeleton + exterior = total", format!("p {}: {sum} vs {}", r.p, r.rescaled_energy)));
        }
        if [r.tube, r.skeleton, r.exterior].iter().any(|x| *x < 0.0) {
            return Err(invariant("energy parts are nonnegative", format!("p {}: {} {} {}", r.p, r.tube, r.skeleton, r.exterior)));
        }
        if !r.winding_exact {
            return Err(invariant(
                "extracted Jacobian recovers the target",
                format!("p {}: flat distance {}, support distance {}", r.p, r.flat_distance, r.support_distance),
            ));
        }
    }
    Ok(())
}

/// `|ratio - 1|` does not increase as p decreases.
pub fn ratio_monotone(rows: &[SweepRow]) -> bool {
    let mut by_p: Vec<&SweepRow> = rows.iter().collect();
    by_p.sort_by(|a, b| b.p.total_cmp(&a.p));
    by_p.windows(2).all(|w| (w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs())
}

pub fn sweep(p: &SweepParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let target = load_current(&p.target, ctx.base)?;
    let plan = RecoveryPlan { schedule: p.schedule.clone(), mesh: p.mesh, variant: p.variant, tube_radius: p.tube_radius, gamma: p.gamma };
    let rows = run_plan(&target, &p.domain, &plan)?;
    ctx.out.csv("sweep.csv", sweep_csv(&rows))?;
    ctx.out.json(
        "sweep.json",
        &json!({
            "rows": rows,
            "ratio_monotone": ratio_monotone(&rows),
            "ratio_in_band": rows.iter().all(|r| (0.75..=1.05).contains(&r.ratio)),
        }),
    )?;
    check_rows(&rows)
}

pub fn recover(p: &RecoverParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let target = load_current(&p.target, ctx.base)?;
    let plan = RecoveryPlan { schedule: vec![p.p], mesh: p.mesh, variant: p.variant, tube_radius: p.tube_radius, gamma: p.gamma };
    let rows = run_plan(&target, &p.domain, &plan)?;
    ctx.out.csv("recover.csv", sweep_csv(&rows))?;
    ctx.out.json("recover.json", &rows[0])?;
    check_rows(&rows)?;
    if target.dim != 2 {
        if p.write_field || p.gap.is_some() {
            return Err(CliError::Usage("write_field and gap are available for 2-D targets only".into()));
        }
        return Ok(());
    }
    let sigma = target.zero_current::<2>()?;
    let dom = p.domain.to_box::<2>()?;
    if p.write_field {
        let l = capped(Lattice::inside(&dom, rows[0].h)?)?;
        let field = ProductVortex::new(unit_centers(&sigma)?, l)?.materialize()?;
        let meta = FieldMeta::new(&field, "product_vortex", serde_json::to_value(&target).map_err(|e| CliError::Internal(e.to_string()))?);
        ctx.out.field("recovery.sphf", &field, &meta)?;
    }
    if let Some(g) = &p.gap {
        let gap = prescribed_jacobian_min_energy_gap(&sigma, &dom, p.p, g.h, g.max_sweeps)?;
        ctx.out.json("gap.json", &gap)?;
        if gap.minimized_energy > gap.recovery_energy {
            return Err(invariant("minimized <= recovery", format!("{} > {}", gap.minimized_energy, gap.recovery_energy)));
        }
    }
    Ok(())
}

fn record_csv(records: &[VortexRecord]) -> Csv {
    let mut csv = Csv::new(&[
        "p",
        "energy",
        "rescaled_energy",
        "total_vorticity",
        "vortex_count",
        "concentration",
        "flat_to_previous",
        "sweeps",
        "converged",
    ]);
    for r in records {
        csv.row(&[
            num(r.p),
            num(r.energy),
            num(r.rescaled_energy),
            r.total_vorticity.to_string(),
            r.vortices.len().to_string(),
            num(r.concentration),
            r.flat_to_previous.map_or_else(String::new, num),
            r.sweeps.to_string(),
            r.converged.to_string(),
        ]);
    }
    csv
}

pub fn minimize_cmd(p: &MinimizeParams, ctx: &mut Ctx) -> Result<(), CliError> {
    let datum = BoundaryDatum::new(p.degree, p.shape, p.grid, p.wiggle)?;
    let opts = SolveOptions {
        p: p.p,
        variant: p.variant,
        max_sweeps: p.max_sweeps,
        tol: p.tol,
        seed: ctx.seed,
        preserve_vorticity: false,
        scheme: p.scheme,
    };
    let warm = p.warm_from.as_ref().map(|w| load_field(&resolve(ctx.base, w))).transpose()?;
    let params = serde_json::to_value(p).map_err(|e| CliError::Internal(e.to_string()))?;
    let (field, totals) = if let Some(schedule) = &p.schedule {
        if warm.is_some() {
            return Err(CliError::Usage("warm_from and schedule are exclusive".into()));
        }
        let (records, mut fields) = vortex_sweep(&datum, schedule, &opts)?;
        ctx.out.csv("vortex_sweep.csv", record_csv(&records))?;
        ctx.out.json("vortex_sweep.json", &records)?;
        (fields.pop().ok_or_else(|| CliError::Usage("empty schedule".into()))?, records.iter().map(|r| r.total_vorticity).collect())
    } else {
        let sol = minimize(&datum, &opts, warm.as_ref())?;
        ctx.out.json("energy.json", &sol)?;
        (sol.field, Vec::new())
    };
    let vort = plaquette_vorticity(&field)?;
    ctx.out.field("field.sphf", &field, &FieldMeta::new(&field, "minimize", params))?;
    ctx.out.csv("vortices.csv", vortex_csv(&vort))?;
    let degree = p.degree as i64;
    if let Some(t) = totals.iter().chain(std::iter::once(&vort.total())).find(|t| **t != degree) {
        return Err(invariant("total vorticity = boundary degree", format!("{t} vs {degree}")));
    }
    Ok(())
}
