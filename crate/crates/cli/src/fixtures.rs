//! Canonical inputs bundled with the binary and the golden CSVs they produce.

use gammaflow_core::currents::CurrentsJson;
use gammaflow_core::decomposition::{decompose, DecompParams};
use gammaflow_core::flat::flat_norm_zero;
use gammaflow_core::geometry::BoxDomain;
use gammaflow_core::grid::{intersection_numbers, GridSpec};
use gammaflow_core::recovery::{limsup_sweep_2d, MeshRule, RecoveryPlan};

use crate::config::{parse_json, ExperimentConfig};
use crate::experiments::{crossings_csv, flatnorm_csv, ledger_csv, sweep_csv};
use crate::output::{Csv, Outputs};
use crate::CliError;

pub const FIXTURES: &[(&str, &str)] = &[
    ("dipole.json", include_str!("../fixtures/dipole.json")),
    ("three_atom.json", include_str!("../fixtures/three_atom.json")),
    ("square_loop.json", include_str!("../fixtures/square_loop.json")),
    ("degree1.json", include_str!("../fixtures/degree1.json")),
    ("degree2.json", include_str!("../fixtures/degree2.json")),
];

pub const GOLDENS: &[(&str, &str)] = &[
    ("golden/dipole_ledger.csv", include_str!("../fixtures/golden/dipole_ledger.csv")),
    ("golden/three_atom_flatnorm.csv", include_str!("../fixtures/golden/three_atom_flatnorm.csv")),
    ("golden/square_loop_crossings.csv", include_str!("../fixtures/golden/square_loop_crossings.csv")),
    ("golden/three_atom_sweep.csv", include_str!("../fixtures/golden/three_atom_sweep.csv")),
];

/// Grid used for the square-loop crossing golden.
pub const SQUARE_LOOP_GRID: (f64, [f64; 3]) = (0.25, [0.0313, 0.0171, 0.0097]);

fn text(name: &str) -> Result<&'static str, CliError> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Usage(format!("no fixture named {name}")))
}

pub fn currents(name: &str) -> Result<CurrentsJson, CliError> {
    parse_json(text(name)?, name)
}

pub fn config(name: &str) -> Result<ExperimentConfig, CliError> {
    parse_json(text(name)?, name)
}

/// Recomputes every golden CSV from the fixtures.
pub fn compute_goldens() -> Result<Vec<(&'static str, String)>, CliError> {
    let square = BoxDomain::new([0.0, 0.0], [1.0, 1.0])?;
    let dipole = currents("dipole.json")?.zero_current::<2>()?;
    let three = currents("three_atom.json")?.zero_current::<2>()?;
    let ledger = decompose(&dipole, &square, &DecompParams::new(2, 1.9, 0.9)?)?;
    let flat = flat_norm_zero(&three, &square)?;
    let (ell, shift) = SQUARE_LOOP_GRID;
    let counts = intersection_numbers(&currents("square_loop.json")?.one_current::<3>()?, &GridSpec::new(ell, shift)?)?;
    let rows = limsup_sweep_2d(&three, &square, &RecoveryPlan::new(vec![1.5, 1.7], MeshRule::Fixed(1.0 / 128.0)))?;
    Ok(vec![
        (GOLDENS[0].0, ledger_csv(&ledger).into_string()),
        (GOLDENS[1].0, flatnorm_csv(flat.value).into_string()),
        (GOLDENS[2].0, crossings_csv(&counts).into_string()),
        (GOLDENS[3].0, sweep_csv(&rows).into_string()),
    ])
}

/// Writes the fixtures and freshly computed goldens; fails if any golden
/// differs from the bundled copy.
pub fn run(out: &mut Outputs) -> Result<(), CliError> {
    for (name, t) in FIXTURES {
        out.write(name, t.as_bytes())?;
    }
    let mut check = Csv::new(&["golden", "matches"]);
    let mut differ = Vec::new();
    for ((name, fresh), (_, bundled)) in compute_goldens()?.into_iter().zip(GOLDENS) {
        out.write(name, fresh.as_bytes())?;
        let ok = fresh == *bundled;
        if !ok {
            differ.push(name);
        }
        check.row(&[name.to_string(), ok.to_string()]);
    }
    out.csv("golden_check.csv", check)?;
    if differ.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("golden CSVs match the bundled copies: differing {}", differ.join(", "))))
    }
}
