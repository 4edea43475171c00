use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use riemdyn::hamilton::{energy_h, integrate_hamiltonian, legendre_forward, legendre_inverse};
use riemdyn::integrator::Status;
use riemdyn::lagrange::{a_matrix, integrate_lagrangian, regularity_of, LagrangianKind, RegularityReport};
use riemdyn::newton::integrate;
use riemdyn::verify::{run_suite, Suite};
use riemdyn::{CotangentPoint, Error, IntegratorConfig, Lagrangian, LegendreContext, ManifoldChart, SymMatrix, TangentPoint, Trajectory};

use crate::config::{self, ConfigError, InitialState, OutputFormat, RunConfig, System, VerifyConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("{0}")]
    Legendre(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Legendre(_) => 4,
            CliError::VerifyFailed(_) => 1,
        }
    }
}

fn legendre_error(e: Error) -> CliError {
    match e {
        Error::NonConvergence { iterations, residual } => CliError::Legendre(format!(
            "Legendre inverse did not converge after {iterations} iterations, residual {residual:e}"
        )),
        Error::SingularA { det, tolerance } => {
            CliError::Legendre(format!("singular Legendre map: det A = {det:e} (tolerance {tolerance:e})"))
        }
        Error::DegenerateLagrangian { d1, d2 } => {
            CliError::Legendre(format!("degenerate Lagrangian: L' = {d1:e}, L'' = {d2:e}"))
        }
        e @ (Error::SingularSet { .. } | Error::ZeroVelocity { .. }) => CliError::Legendre(format!("singular state: {e}")),
        e => CliError::Legendre(e.to_string()),
    }
}

fn trajectory_path(template: &Path, index: usize, count: usize) -> PathBuf {
    let s = template.to_string_lossy();
    if s.contains("{i}") {
        return PathBuf::from(s.replace("{i}", &index.to_string()));
    }
    if count == 1 {
        return template.to_path_buf();
    }
    let stem = template.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match template.extension() {
        Some(ext) => format!("{stem}_{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{index}"),
    };
    template.with_file_name(name)
}

fn write_file(path: &Path, contents: &str, pointer: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ConfigError::at(pointer, format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| ConfigError::at(pointer, format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum RunStatus {
    Completed,
    LeftChart,
    Failed,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory_path: Option<String>,
    status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speed_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h_drift: Option<f64>,
    #[serde(rename = "H_drift", skip_serializing_if = "Option::is_none")]
    hamiltonian_drift: Option<f64>,
}

impl RunSummary {
    fn failed(index: usize, error: String) -> Self {
        Self {
            index,
            trajectory_path: None,
            status: RunStatus::Failed,
            error: Some(error),
            samples: 0,
            t_final: None,
            speed_drift: None,
            h_drift: None,
            hamiltonian_drift: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    schema: u32,
    chart: &'a str,
    system: String,
    force_free: bool,
    integrator: &'a IntegratorConfig,
    runs: Vec<RunSummary>,
    max_h_drift: Option<f64>,
    #[serde(rename = "max_H_drift")]
    max_hamiltonian_drift: Option<f64>,
    max_speed_drift: Option<f64>,
    completed: bool,
}

fn tangent_start(chart: &ManifoldChart, system: &System, state: &InitialState, index: usize) -> Result<TangentPoint, CliError> {
    if let Some(v) = &state.v {
        return Ok(TangentPoint::new(state.x.clone(), v.clone()));
    }
    let p = state.p.as_ref().expect("validated initial state");
    let l = system.lagrangian().ok_or_else(|| {
        ConfigError::at(format!("/initial/{index}/p"), "this system has no Legendre map; give `v` instead")
    })?;
    let sol = legendre_inverse(&LegendreContext::new(l.clone()), chart, &state.x, p, None).map_err(legendre_error)?;
    Ok(TangentPoint::new(state.x.clone(), sol.v))
}

fn run_one(chart: &ManifoldChart, system: &System, state: &InitialState, index: usize, cfg: &IntegratorConfig) -> Result<Trajectory, CliError> {
    let integration = |e: Error| CliError::Integration(format!("initial state {index}: {e}"));
    let with_h = |mut tr: Trajectory, l: &Lagrangian| -> Result<Trajectory, CliError> {
        tr.attach_energy(|x, v| energy_h(chart, l, &TangentPoint::new(x.to_vec(), v.to_vec())))
            .map_err(integration)?;
        Ok(tr)
    };
    match system {
        System::Newton { force, lagrangian, .. } => {
            let q0 = tangent_start(chart, system, state, index)?;
            let tr = integrate(chart, force, &q0, cfg).map_err(integration)?;
            match lagrangian {
                Some(l) => with_h(tr, l),
                None => Ok(tr),
            }
        }
        System::Lagrange(l) => {
            let q0 = tangent_start(chart, system, state, index)?;
            integrate_lagrangian(chart, l, &q0, cfg).map_err(integration)
        }
        System::Hamilton { hamiltonian, lagrangian } => {
            let start = match (&state.p, &state.v) {
                (Some(p), _) => CotangentPoint::new(state.x.clone(), p.clone()),
                (None, Some(v)) => legendre_forward(chart, lagrangian, &TangentPoint::new(state.x.clone(), v.clone()))
                    .map_err(legendre_error)?,
                (None, None) => unreachable!("validated initial state"),
            };
            let mut tr = integrate_hamiltonian(chart, hamiltonian, &start, cfg).map_err(integration)?;
            tr.attach_speed(chart).map_err(integration)?;
            Ok(tr)
        }
    }
}

fn is_force_free(system: &System) -> bool {
    match system {
        System::Newton { force_free, .. } => *force_free,
        System::Lagrange(l) | System::Hamilton { lagrangian: l, .. } => matches!(l.kind(), LagrangianKind::Kinetic),
    }
}

fn max_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.flatten().reduce(f64::max)
}

pub fn simulate(config_path: &Path) -> Result<(), CliError> {
    let cfg: RunConfig = config::read(config_path)?;
    let chart = cfg.chart.build()?;
    let system = cfg.system.build(&chart)?;
    let outputs = cfg.validate_for_simulate(&chart)?;
    let force_free = is_force_free(&system);

    let hamiltonian = matches!(system, System::Hamilton { .. });
    let mut runs = Vec::new();
    for (i, state) in cfg.initial.iter().enumerate() {
        let tr = match run_one(&chart, &system, state, i, &cfg.integrator) {
            Ok(tr) => tr,
            Err(CliError::Integration(message)) => {
                runs.push(RunSummary::failed(i, message));
                continue;
            }
            Err(e) => return Err(e),
        };
        let path = trajectory_path(&outputs.trajectory_path, i, cfg.initial.len());
        let body = match outputs.format {
            OutputFormat::Csv => tr.to_csv(),
            OutputFormat::Json => serde_json::to_string_pretty(&tr).expect("trajectory serializes") + "\n",
        };
        write_file(&path, &body, "/outputs/trajectory_path")?;
        runs.push(RunSummary {
            index: i,
            trajectory_path: Some(path.to_string_lossy().into_owned()),
            status: match tr.status {
                Status::Completed => RunStatus::Completed,
                _ => RunStatus::LeftChart,
            },
            error: None,
            samples: tr.len(),
            t_final: Some(tr.last().t),
            speed_drift: if force_free { tr.speed_drift() } else { None },
            h_drift: if hamiltonian { None } else { tr.energy_drift() },
            hamiltonian_drift: if hamiltonian { tr.energy_drift() } else { None },
        });
    }
    let completed = runs.iter().all(|r| r.status == RunStatus::Completed);
    let report = RunReport {
        schema: config::SCHEMA,
        chart: chart.name(),
        system: system.label(),
        force_free,
        integrator: &cfg.integrator,
        max_h_drift: max_of(runs.iter().map(|r| r.h_drift)),
        max_hamiltonian_drift: max_of(runs.iter().map(|r| r.hamiltonian_drift)),
        max_speed_drift: max_of(runs.iter().map(|r| r.speed_drift)),
        completed,
        runs,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&outputs.report_path, &json, "/outputs/report_path")?;
    let problems: Vec<String> = report
        .runs
        .iter()
        .filter_map(|r| match r.status {
            RunStatus::Completed => None,
            RunStatus::LeftChart => Some(format!("initial state {} left the chart at t = {}", r.index, r.t_final.unwrap_or(f64::NAN))),
            RunStatus::Failed => r.error.clone(),
        })
        .collect();
    if !problems.is_empty() {
        return Err(CliError::Integration(problems.join("; ")));
    }
    Ok(())
}

pub struct VerifyArgs {
    pub config: Option<PathBuf>,
    pub suite: Option<String>,
    pub chart: Option<String>,
    pub seed: Option<u64>,
    pub report: Option<PathBuf>,
}

pub fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let file: Option<VerifyConfig> = args.config.as_deref().map(config::read).transpose()?;
    let suite_name = args
        .suite
        .or_else(|| file.as_ref().map(|f| f.suite.clone()))
        .ok_or_else(|| CliError::Usage("give --suite or a config with `suite`".into()))?;
    let suite: Suite = suite_name.parse().map_err(|e: Error| match &file {
        Some(_) => CliError::Config(ConfigError::at("/suite", e)),
        None => CliError::Usage(e.to_string()),
    })?;
    let chart = args.chart.or_else(|| file.as_ref().and_then(|f| f.chart.clone()));
    let seed = args.seed.or(file.as_ref().map(|f| f.seed)).unwrap_or(0);
    let report_path = args.report.or_else(|| file.as_ref().and_then(|f| f.report_path.clone()));

    let report = run_suite(suite, chart.as_deref(), seed).map_err(|e| match e {
        Error::InvalidConfig(msg) => CliError::Usage(msg),
        e => CliError::Integration(e.to_string()),
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(path) = &report_path {
        write_file(path, &json, "/report_path")?;
    }
    print!("{json}");
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::VerifyFailed(names.join(", ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Parses `"x1,..,xn; w1,..,wn"`.
pub fn parse_state(text: &str, dim: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let parts: Vec<&str> = text.split(';').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("state `{text}` must look like \"x1,..,xn; w1,..,wn\"")));
    }
    let nums = |s: &str, what: &str| -> Result<Vec<f64>, CliError> {
        let v = s
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Usage(format!("bad number in {what} part of state: {e}")))?;
        if v.len() != dim {
            return Err(CliError::Usage(format!("{what} part of state has {} components, chart has dimension {dim}", v.len())));
        }
        Ok(v)
    };
    Ok((nums(parts[0], "position")?, nums(parts[1], "fiber")?))
}

fn matrix_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] + 0.0).collect()).collect()
}

fn matrix_json(name: &str, m: &SymMatrix, r: &RegularityReport) -> serde_json::Value {
    json!({
        "matrix": name,
        "entries": matrix_rows(m),
        "det": r.det_a,
        "min_eigenvalue": r.min_eigenvalue,
        "max_eigenvalue": r.max_eigenvalue,
        "min_abs_eigenvalue": r.min_abs_eigenvalue,
    })
}

fn merge(mut a: serde_json::Value, b: serde_json::Value) -> serde_json::Value {
    if let (Some(a), serde_json::Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

pub fn legendre(config_path: &Path, direction: Direction, state: &str) -> Result<(), CliError> {
    let cfg: RunConfig = config::read(config_path)?;
    let chart = cfg.chart.build()?;
    let system = cfg.system.build(&chart)?;
    let l = system
        .lagrangian()
        .ok_or_else(|| ConfigError::at("/system/family", "this system has no Lagrangian, so no Legendre map"))?
        .clone();
    let (x, w) = parse_state(state, chart.dim())?;
    chart.check_point(&x).map_err(|e| CliError::Usage(e.to_string()))?;

    let out = match direction {
        Direction::Forward => {
            let q = TangentPoint::new(x.clone(), w.clone());
            let lam = legendre_forward(&chart, &l, &q).map_err(legendre_error)?;
            let a = a_matrix(&chart, &l, &q).map_err(legendre_error)?;
            let r = regularity_of(&a);
            let out = merge(
                json!({"direction": "forward", "x": x, "v": w, "p": lam.p, "regular": r.is_regular}),
                matrix_json("A", &a, &r),
            );
            if !r.is_regular {
                println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
                return Err(CliError::Legendre(format!(
                    "singular Legendre map: det A = {:e} (tolerance {:e}), min |eigenvalue| {:e}",
                    r.det_a, r.tolerance, r.min_abs_eigenvalue
                )));
            }
            out
        }
        Direction::Inverse => {
            let sol = legendre_inverse(&LegendreContext::new(l.clone()), &chart, &x, &w, None).map_err(legendre_error)?;
            let a = a_matrix(&chart, &l, &TangentPoint::new(x.clone(), sol.v.clone())).map_err(legendre_error)?;
            let b = a.clone().try_inverse().ok_or_else(|| CliError::Legendre("A is not invertible at the solution".into()))?;
            let r = regularity_of(&b);
            merge(
                json!({
                    "direction": "inverse",
                    "x": x,
                    "p": w,
                    "v": sol.v,
                    "iterations": sol.iterations,
                    "residual": sol.residual,
                }),
                matrix_json("B", &b, &r),
            )
        }
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_paths() {
        let p = Path::new("out/traj.csv");
        assert_eq!(trajectory_path(p, 0, 1), PathBuf::from("out/traj.csv"));
        assert_eq!(trajectory_path(p, 2, 3), PathBuf::from("out/traj_2.csv"));
        assert_eq!(trajectory_path(Path::new("out/run{i}.csv"), 4, 5), PathBuf::from("out/run4.csv"));
    }

    #[test]
    fn state_parsing() {
        assert_eq!(parse_state("1, 2; 3,4", 2).unwrap(), (vec![1.0, 2.0], vec![3.0, 4.0]));
        assert!(parse_state("1,2", 2).is_err());
        assert!(parse_state("1,2;3", 2).is_err());
        assert!(parse_state("1,a;3,4", 2).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(ConfigError::at("/x", "bad")).exit_code(), 2);
        assert_eq!(CliError::Integration("x".into()).exit_code(), 3);
        assert_eq!(legendre_error(Error::NonConvergence { iterations: 3, residual: 1.0 }).exit_code(), 4);
    }
}
