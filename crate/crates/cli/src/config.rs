//! JSON run configuration (`"schema": 1`) and its validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use riemdyn::hamilton::hamiltonian_from_lagrangian;
use riemdyn::manifold::chart_by_name;
use riemdyn::normal_shift::HProfile;
use riemdyn::{
    FiberwiseSymmetricLagrangian, ForceField, Hamiltonian, IntegratorConfig, Lagrangian, LegendreContext, ManifoldChart,
    NormalShiftForce, ScalarExpr,
};

pub const SCHEMA: u32 = 1;

/// Configuration problem, located by a JSON pointer into the document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(pointer: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub f: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Newton,
    Lagrange,
    Hamilton,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub family: String,
    /// Lagrangian family behind a `newton` system of family `euler-lagrange`.
    #[serde(default)]
    pub lagrangian: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub expressions: BTreeMap<String, String>,
}

/// Initial state: `{x, v}` on `TM` or `{x, p}` on `T*M`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec<f64>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// May contain `{i}` for the initial-state index.
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub chart: ChartSpec,
    pub system: SystemSpec,
    #[serde(default)]
    pub initial: Vec<InitialState>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub outputs: Option<Outputs>,
}

/// Settings for `verify -c`; command-line flags override them.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub schema: u32,
    pub suite: String,
    #[serde(default)]
    pub chart: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses `text`, reporting the JSON pointer of the first offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::at("", e))?;
    match value.get("schema") {
        None => return Err(ConfigError::at("/schema", "missing field `schema`")),
        Some(s) if s.as_u64() != Some(SCHEMA as u64) => {
            return Err(ConfigError::at("/schema", format!("unsupported schema {s}, expected {SCHEMA}")))
        }
        Some(_) => {}
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = pointer_of(e.path());
        ConfigError::at(pointer, e.into_inner())
    })
}

pub fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text)
}

impl ChartSpec {
    pub fn build(&self) -> Result<ManifoldChart, ConfigError> {
        let f = self
            .f
            .as_deref()
            .map(|src| ScalarExpr::parse(src).map_err(|e| ConfigError::at("/chart/f", e)))
            .transpose()?;
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let chart = chart_by_name(&self.name, &params, f.as_ref()).map_err(|e| ConfigError::at("/chart/name", e))?;
        if let Some(f) = &f {
            f.check_dim(chart.dim()).map_err(|e| ConfigError::at("/chart/f", e))?;
        }
        Ok(chart)
    }
}

/// The dynamical system a config describes.
pub enum System {
    Newton {
        force: ForceField,
        /// Lagrangian whose energy `h` the flow conserves, when there is one.
        lagrangian: Option<Lagrangian>,
        force_free: bool,
    },
    Lagrange(Lagrangian),
    Hamilton {
        hamiltonian: Hamiltonian,
        lagrangian: Lagrangian,
    },
}

impl System {
    pub fn label(&self) -> String {
        match self {
            System::Newton { force, .. } => format!("newton[{}]", force.label()),
            System::Lagrange(l) => format!("lagrange[{}]", l.label()),
            System::Hamilton { hamiltonian, .. } => format!("hamilton[{}]", hamiltonian.label()),
        }
    }

    pub fn lagrangian(&self) -> Option<&Lagrangian> {
        match self {
            System::Newton { lagrangian, .. } => lagrangian.as_ref(),
            System::Lagrange(l) => Some(l),
            System::Hamilton { lagrangian, .. } => Some(lagrangian),
        }
    }
}

impl SystemSpec {
    fn expr(&self, key: &str, dim: usize) -> Result<ScalarExpr, ConfigError> {
        let pointer = format!("/system/expressions/{key}");
        let src = self
            .expressions
            .get(key)
            .ok_or_else(|| ConfigError::at(&pointer, format!("family `{}` needs expression `{key}`", self.family)))?;
        let e = ScalarExpr::parse(src).map_err(|e| ConfigError::at(&pointer, e))?;
        e.check_dim(dim).map_err(|e| ConfigError::at(&pointer, e))?;
        Ok(e)
    }

    fn lagrangian_family(&self, family: &str, pointer: &str, dim: usize) -> Result<Lagrangian, ConfigError> {
        Ok(match family {
            "kinetic" => Lagrangian::kinetic(),
            "kinetic-minus-potential" => Lagrangian::kinetic_minus_potential(self.expr("U", dim)?),
            "conformal-kinetic" => Lagrangian::conformal_kinetic(self.expr("f", dim)?),
            "fiberwise" => {
                let phi = self
                    .expressions
                    .get("phi")
                    .ok_or_else(|| ConfigError::at("/system/expressions/phi", "family `fiberwise` needs expression `phi`"))?;
                let f = self.expr("f", dim)?;
                Lagrangian::fiberwise(
                    FiberwiseSymmetricLagrangian::new(phi, f).map_err(|e| ConfigError::at("/system/expressions/phi", e))?,
                )
            }
            other => {
                return Err(ConfigError::at(
                    pointer,
                    format!("unknown Lagrangian family `{other}` (kinetic, kinetic-minus-potential, conformal-kinetic, fiberwise)"),
                ))
            }
        })
    }

    pub fn build(&self, chart: &ManifoldChart) -> Result<System, ConfigError> {
        let dim = chart.dim();
        match self.kind {
            SystemKind::Lagrange => Ok(System::Lagrange(self.lagrangian_family(&self.family, "/system/family", dim)?)),
            SystemKind::Hamilton => {
                let lagrangian = self.lagrangian_family(&self.family, "/system/family", dim)?;
                let hamiltonian = hamiltonian_from_lagrangian(&LegendreContext::new(lagrangian.clone()), chart);
                Ok(System::Hamilton { hamiltonian, lagrangian })
            }
            SystemKind::Newton => {
                let (force, lagrangian) = match self.family.as_str() {
                    "geodesic" => (ForceField::zero(), Some(Lagrangian::kinetic())),
                    "potential" => {
                        let u = self.expr("U", dim)?;
                        (ForceField::potential(u.clone()), Some(Lagrangian::kinetic_minus_potential(u)))
                    }
                    "conformal" => {
                        let f = self.expr("f", dim)?;
                        (ForceField::conformal(f.clone()), Some(Lagrangian::conformal_kinetic(f)))
                    }
                    "fiberwise" => {
                        let l = self.lagrangian_family("fiberwise", "/system/family", dim)?;
                        let riemdyn::lagrange::LagrangianKind::FiberwiseSymmetric(sym) = l.kind() else {
                            unreachable!()
                        };
                        (ForceField::spherical(sym.clone()), Some(l))
                    }
                    "normal-shift" => {
                        let w = self
                            .expressions
                            .get("W")
                            .ok_or_else(|| ConfigError::at("/system/expressions/W", "family `normal-shift` needs expression `W`"))?;
                        let ns = match self.expressions.get("h") {
                            None => NormalShiftForce::basic(dim, w),
                            Some(h) => {
                                let h = HProfile::parse(h).map_err(|e| ConfigError::at("/system/expressions/h", e))?;
                                NormalShiftForce::general(dim, w, h)
                            }
                        }
                        .map_err(|e| ConfigError::at("/system/expressions/W", e))?;
                        (ForceField::normal_shift(ns), None)
                    }
                    "euler-lagrange" => {
                        let family = self.lagrangian.as_deref().ok_or_else(|| {
                            ConfigError::at("/system/lagrangian", "family `euler-lagrange` needs a `lagrangian` family")
                        })?;
                        let l = self.lagrangian_family(family, "/system/lagrangian", dim)?;
                        (ForceField::from_lagrangian(l.clone()), Some(l))
                    }
                    other => {
                        return Err(ConfigError::at(
                            "/system/family",
                            format!("unknown force family `{other}` (geodesic, potential, conformal, fiberwise, normal-shift, euler-lagrange)"),
                        ))
                    }
                };
                Ok(System::Newton {
                    force_free: self.family == "geodesic",
                    force,
                    lagrangian,
                })
            }
        }
    }
}

impl InitialState {
    /// Checks dimensions; exactly one of `v`, `p` must be present.
    pub fn validate(&self, index: usize, dim: usize) -> Result<(), ConfigError> {
        let base = format!("/initial/{index}");
        let check = |name: &str, len: usize| {
            if len != dim {
                Err(ConfigError::at(
                    format!("{base}/{name}"),
                    format!("expected {dim} components for the chart, got {len}"),
                ))
            } else {
                Ok(())
            }
        };
        check("x", self.x.len())?;
        match (&self.v, &self.p) {
            (Some(v), None) => check("v", v.len()),
            (None, Some(p)) => check("p", p.len()),
            _ => Err(ConfigError::at(base, "give exactly one of `v` and `p`")),
        }
    }
}

impl RunConfig {
    /// Kind-specific validation for `simulate`.
    pub fn validate_for_simulate(&self, chart: &ManifoldChart) -> Result<&Outputs, ConfigError> {
        if self.initial.is_empty() {
            return Err(ConfigError::at("/initial", "at least one initial state is required"));
        }
        for (i, s) in self.initial.iter().enumerate() {
            s.validate(i, chart.dim())?;
            if let Err(e) = chart.check_point(&s.x) {
                return Err(ConfigError::at(format!("/initial/{i}/x"), e));
            }
        }
        self.integrator.validate().map_err(|e| ConfigError::at("/integrator", e))?;
        self.outputs
            .as_ref()
            .ok_or_else(|| ConfigError::at("/outputs", "`simulate` needs an `outputs` section"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "schema": 1,
        "chart": {"name": "sphere2d", "params": {"radius": 1.0}},
        "system": {"kind": "newton", "family": "geodesic"},
        "initial": [{"x": [1.0, 0.0], "v": [0.0, 1.0]}],
        "integrator": {"method": "rk4", "dt": 0.01, "t_span": [0.0, 1.0]},
        "outputs": {"trajectory_path": "t.csv", "report_path": "r.json"}
    }"#;

    #[test]
    fn parses_a_complete_config() {
        let cfg: RunConfig = parse_json(GOOD).unwrap();
        let chart = cfg.chart.build().unwrap();
        assert_eq!(chart.name(), "sphere2d");
        assert!(cfg.validate_for_simulate(&chart).is_ok());
        assert!(matches!(cfg.system.build(&chart).unwrap(), System::Newton { force_free: true, .. }));
    }

    #[test]
    fn pointers_name_the_field() {
        let bad = GOOD.replace(r#""dt": 0.01"#, r#""dt": "fast""#);
        assert_eq!(parse_json::<RunConfig>(&bad).unwrap_err().pointer, "/integrator/dt");
        let bad = GOOD.replace(r#""kind": "newton""#, r#""kind": "quantum""#);
        assert_eq!(parse_json::<RunConfig>(&bad).unwrap_err().pointer, "/system/kind");
        let bad = GOOD.replace(r#""schema": 1"#, r#""schema": 2"#);
        assert_eq!(parse_json::<RunConfig>(&bad).unwrap_err().pointer, "/schema");
        let bad = GOOD.replace(r#""v": [0.0, 1.0]"#, r#""v": [0.0, 1.0, 2.0]"#);
        let cfg: RunConfig = parse_json(&bad).unwrap();
        let chart = cfg.chart.build().unwrap();
        assert_eq!(cfg.validate_for_simulate(&chart).unwrap_err().pointer, "/initial/0/v");
    }

    #[test]
    fn expression_errors_point_into_expressions() {
        let spec = SystemSpec {
            kind: SystemKind::Newton,
            family: "potential".into(),
            lagrangian: None,
            params: BTreeMap::new(),
            expressions: [("U".to_string(), "x1 +* 2".to_string())].into(),
        };
        let err = spec.build(&riemdyn::manifold::euclidean(2)).err().unwrap();
        assert_eq!(err.pointer, "/system/expressions/U");
    }

    #[test]
    fn pointer_escapes_keys() {
        let err = parse_json::<RunConfig>(&GOOD.replace(r#""radius": 1.0"#, r#""a/b": "x""#)).unwrap_err();
        assert_eq!(err.pointer, "/chart/params/a~1b");
    }
}
