//! Quick end-to-end checks with known answers, one per module.

use gammaflow_core::currents::{OneCurrent, ZeroCurrent};
use gammaflow_core::decomposition::{decompose, lemma_ai_check, DecompParams};
use gammaflow_core::flat::flat_norm_zero;
use gammaflow_core::geometry::{BoxDomain, Point};
use gammaflow_core::grid::{deform_to_dual, GridSpec};
use gammaflow_core::io::{read_field, write_field};
use gammaflow_core::jacobian::{face_vorticity_3d, plaquette_vorticity};
use gammaflow_core::lattice::{axis_vortex_3d, p_energy, product_vortex, Lattice, LatticeField};
use gammaflow_core::minimizer::{minimize, BoundaryDatum, Shape, SolveOptions};
use gammaflow_core::recovery::{flat_vortex_energy, limsup_sweep_2d, MeshRule, RecoveryPlan};
use gammaflow_core::Result;

use crate::output::{Csv, Outputs};
use crate::CliError;

type Check = (&'static str, fn() -> Result<bool>);

fn unit_square() -> Result<BoxDomain<f64, 2>> {
    BoxDomain::new([0.0, 0.0], [1.0, 1.0])
}

fn dipole() -> ZeroCurrent<f64, 2> {
    ZeroCurrent::from_atoms([(Point([0.4, 0.5]), 1), (Point([0.6, 0.5]), -1)])
}

fn flat_dipole() -> Result<bool> {
    Ok((flat_norm_zero(&dipole(), &unit_square()?)?.value - 0.2).abs() < 1e-12)
}

fn flat_single() -> Result<bool> {
    let t = ZeroCurrent::dirac(Point([0.3, 0.5]));
    Ok((flat_norm_zero(&t, &unit_square()?)?.value - 0.3).abs() < 1e-12)
}

fn decompose_dipole() -> Result<bool> {
    let dom = unit_square()?;
    let r = decompose(&dipole(), &dom, &DecompParams::new(2, 1.9, 0.9)?)?;
    Ok(r.x.is_zero() && r.s.segments().len() == 1 && r.s.boundary(&dom).same_as(&dipole()))
}

fn decompose_zero() -> Result<bool> {
    let r = decompose(&ZeroCurrent::<f64, 2>::zero(), &unit_square()?, &DecompParams::new(2, 1.9, 0.9)?)?;
    Ok(r.x.is_zero() && r.s.is_empty() && r.trace.is_empty())
}

fn partial_sums() -> Result<bool> {
    let (lhs, rhs) = lemma_ai_check(&[3, 1, 4], 1.5, 0.9)?;
    Ok(lhs >= rhs)
}

fn constant_energy() -> Result<bool> {
    let l = Lattice::new(&[17, 17], &[0.0, 0.0], 1.0 / 16.0)?;
    Ok(p_energy(&LatticeField::constant(l, 0.7), 1.5, false)?.total == 0.0)
}

fn vortex_winding() -> Result<bool> {
    let l = Lattice::new(&[33, 33], &[0.0, 0.0], 1.0 / 32.0)?;
    let v = plaquette_vorticity(&product_vortex(&[([0.5011, 0.4987], 1)], l)?)?;
    Ok(v.total() == 1 && v.current.atoms().len() == 1)
}

fn flat_vortex() -> Result<bool> {
    Ok((flat_vortex_energy(2, 1.5, 1.0, 1.0)? - 4.0 * std::f64::consts::PI).abs() < 1e-12)
}

fn empty_recovery() -> Result<bool> {
    let rows = limsup_sweep_2d(&ZeroCurrent::zero(), &unit_square()?, &RecoveryPlan::new(vec![1.5], MeshRule::Fixed(1.0 / 32.0)))?;
    Ok(rows.len() == 1 && rows[0].rescaled_energy == 0.0)
}

fn axis_chain() -> Result<bool> {
    let l = Lattice::new(&[9, 9, 9], &[0.0, 0.0, 0.0], 0.125)?;
    let v = face_vorticity_3d(&axis_vortex_3d([0.51, 0.52, 0.5], 2, l)?)?;
    let straight = v.current.segments().iter().all(|s| s.mult == 1 && s.a.0[..2] == s.b.0[..2] && s.b.0[2] > s.a.0[2]);
    Ok(straight && v.current.segments().len() == 9 && v.current.boundary_free().atoms().len() == 2)
}

fn square_loop() -> Result<bool> {
    let c = OneCurrent::polygon(&[
        Point([0.61, 0.63, 0.57]),
        Point([2.13, 0.63, 0.57]),
        Point([2.13, 2.17, 0.57]),
        Point([0.61, 2.17, 0.57]),
    ]);
    let g = GridSpec::new(0.5, [0.1, 0.2, 0.3])?;
    let v = BoxDomain::new([-3.0, -3.0, -3.0], [6.0, 6.0, 6.0])?;
    let d = deform_to_dual(&c, &g, &v)?;
    Ok(!d.is_empty() && d.boundary_free().is_zero())
}

fn field_round_trip() -> Result<bool> {
    let l = Lattice::new(&[5, 4], &[0.25, -0.5], 0.125)?;
    let f = LatticeField::sample(l, |x| (3.0 * x[0] - x[1]).sin())?;
    let mut buf = Vec::new();
    write_field(&f, &mut buf)?;
    Ok(read_field(&mut buf.as_slice())? == f)
}

fn constant_datum() -> Result<bool> {
    let d = BoundaryDatum::new(0, Shape::Box, 32, 0.0)?;
    let s = minimize(&d, &SolveOptions::new(1.5), None)?;
    Ok(s.report.total == 0.0 && s.converged)
}

pub fn checks() -> Vec<Check> {
    vec![
        ("flat norm of a dipole is its length", flat_dipole),
        ("flat norm of one atom is its boundary distance", flat_single),
        ("dipole decomposes into X = 0 and one segment", decompose_dipole),
        ("zero current decomposes into nothing", decompose_zero),
        ("partial-sum inequality on a sample", partial_sums),
        ("constant field has zero energy", constant_energy),
        ("product vortex winds once around one plaquette", vortex_winding),
        ("flat vortex energy at p = 1.5 is 4 pi", flat_vortex),
        ("empty target has zero recovery energy", empty_recovery),
        ("axis vortex yields a straight dual chain", axis_chain),
        ("square loop deforms to a closed dual loop", square_loop),
        ("field files round-trip bit-exactly", field_round_trip),
        ("constant boundary datum minimizes to zero energy", constant_datum),
    ]
}

pub fn run(out: &mut Outputs) -> Result<(), CliError> {
    let mut csv = Csv::new(&["check", "passed"]);
    let mut failed = Vec::new();
    for (name, f) in checks() {
        let ok = matches!(f(), Ok(true));
        if !ok {
            failed.push(name);
        }
        csv.row(&[name.to_string(), ok.to_string()]);
    }
    out.csv("selftest.csv", csv)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("selftest: failed checks: {}", failed.join("; "))))
    }
}
