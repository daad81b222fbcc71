//! Experiment configuration: one typed document per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use gammaflow_core::currents::CurrentsJson;
use gammaflow_core::geometry::BoxJson;
use gammaflow_core::minimizer::{Shape, UpdateScheme};
use gammaflow_core::recovery::MeshRule;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Energy,
    Jacobian,
    Decompose,
    Flatnorm,
    Deform,
    Recover,
    Minimize,
    Sweep,
    Selftest,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Energy => "energy",
            Kind::Jacobian => "jacobian",
            Kind::Decompose => "decompose",
            Kind::Flatnorm => "flatnorm",
            Kind::Deform => "deform",
            Kind::Recover => "recover",
            Kind::Minimize => "minimize",
            Kind::Sweep => "sweep",
            Kind::Selftest => "selftest",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<Kind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<JacobianParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompose: Option<DecomposeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatnorm: Option<FlatnormParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deform: Option<DeformParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recover: Option<RecoverParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimize: Option<MinimizeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepParams>,
}

/// A currents document, inline or in a file next to the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentSource {
    File(PathBuf),
    Inline(CurrentsJson),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexCenter {
    pub x: [f64; 2],
    pub d: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// An SPHF field file.
    File(PathBuf),
    ProductVortex { centers: Vec<VortexCenter>, domain: BoxJson, h: f64 },
    AxisVortex { point: [f64; 3], axis: usize, domain: BoxJson, h: f64 },
    /// Solid-angle phase of a closed polygon given as a 1-current.
    SolidAngle { curve: CurrentSource, domain: BoxJson, h: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    pub field: FieldSource,
    pub p: Vec<f64>,
    #[serde(default)]
    pub variant: bool,
    /// Also write the per-cell density for every exponent.
    #[serde(default)]
    pub density: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobianParams {
    pub field: FieldSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySpec {
    /// A known rescaled energy `(n-p) int |grad u|^p`.
    Value(f64),
    /// Analytic energy of the product vortex on the atoms of the input.
    Oracle { quad_h: f64 },
}

fn two() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeParams {
    pub current: CurrentSource,
    pub domain: BoxJson,
    #[serde(default = "two")]
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    #[serde(default)]
    pub energy: Option<EnergySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnormParams {
    pub current: CurrentSource,
    /// When present the flat distance between the two currents is computed.
    #[serde(default)]
    pub other: Option<CurrentSource>,
    pub domain: BoxJson,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformParams {
    pub curve: CurrentSource,
    pub ell: f64,
    /// Fixed grid shift; drawn by rejection sampling when absent.
    #[serde(default)]
    pub shift: Option<[f64; 3]>,
    #[serde(default = "half")]
    pub delta: f64,
    pub domain: BoxJson,
}

fn core_resolving() -> MeshRule {
    MeshRule::CoreResolving
}

fn tube() -> f64 {
    0.1
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapParams {
    #[serde(default)]
    pub h: Option<f64>,
    pub max_sweeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverParams {
    /// Unit atoms in 2-D or a closed polygon in 3-D.
    pub target: CurrentSource,
    pub domain: BoxJson,
    pub p: f64,
    #[serde(default = "core_resolving")]
    pub mesh: MeshRule,
    #[serde(default)]
    pub variant: bool,
    #[serde(default = "tube")]
    pub tube_radius: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Also write the recovery field (2-D only).
    #[serde(default)]
    pub write_field: bool,
    /// Compare with the vorticity-preserving minimizer (2-D only).
    #[serde(default)]
    pub gap: Option<GapParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub target: CurrentSource,
    pub domain: BoxJson,
    pub schedule: Vec<f64>,
    #[serde(default = "core_resolving")]
    pub mesh: MeshRule,
    #[serde(default)]
    pub variant: bool,
    #[serde(default = "tube")]
    pub tube_radius: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn disk() -> Shape {
    Shape::Disk
}

fn default_grid() -> usize {
    128
}

fn default_p() -> f64 {
    1.5
}

fn default_tol() -> f64 {
    1e-7
}

fn default_sweeps() -> usize {
    4000
}

fn golden() -> UpdateScheme {
    UpdateScheme::Golden
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeParams {
    pub degree: i32,
    #[serde(default = "disk")]
    pub shape: Shape,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub wiggle: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub variant: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "golden")]
    pub scheme: UpdateScheme,
    #[serde(default)]
    pub warm_from: Option<PathBuf>,
    /// Run a warm-started sweep over these exponents instead of a single p.
    #[serde(default)]
    pub schedule: Option<Vec<f64>>,
}

impl MinimizeParams {
    pub fn new(degree: i32) -> Self {
        MinimizeParams {
            degree,
            shape: disk(),
            grid: default_grid(),
            wiggle: 0.0,
            p: default_p(),
            variant: false,
            tol: default_tol(),
            max_sweeps: default_sweeps(),
            scheme: golden(),
            warm_from: None,
            schedule: None,
        }
    }
}

/// Parses JSON into `T`, reporting the offending field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("{origin}: at `{path}`: {}", e.into_inner()))
    })?;
    de.end().map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
    Ok(value)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

/// Resolves `path` against the directory of the config file.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_a_path() {
        let text = r#"{"experiment":"minimize","minimize":{"degree":1,"grdi":64}}"#;
        let err = parse_json::<ExperimentConfig>(text, "cfg.json").unwrap_err().to_string();
        assert!(err.contains("minimize"), "{err}");
        assert!(err.contains("grdi"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn nested_sources_reject_unknown_keys() {
        let text = r#"{"energy":{"p":[1.5],"field":{"product_vortex":{"centers":[],"domain":{"lo":[0,0],"hi":[1,1]},"h":0.1,"k":1}}}}"#;
        let err = parse_json::<ExperimentConfig>(text, "cfg.json").unwrap_err().to_string();
        assert!(err.contains("energy.field"), "{err}");
    }

    #[test]
    fn defaults_fill_in() {
        let c: ExperimentConfig = parse_json(r#"{"minimize":{"degree":2}}"#, "x").unwrap();
        assert_eq!(c.minimize, Some(MinimizeParams::new(2)));
        let back: ExperimentConfig = parse_json(&serde_json::to_string(&c).unwrap(), "x").unwrap();
        assert_eq!(back, c);
    }
}
