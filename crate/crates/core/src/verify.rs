//! Seeded numerical verification suites.
//!
//! Each suite samples states or curves from a seed, evaluates one family of
//! identities and records the worst residual per `(chart, system, check)`
//! against a fixed tolerance. Reports serialize to JSON.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::fields::{chain_rule_check, CotangentPoint, ExtendedField, Rep, TangentPoint};
use crate::hamilton::{
    covariant_cancellation_residual, hamiltonian_from_lagrangian, identity_suite, integrate_hamiltonian, legendre_forward,
    legendre_inverse, LegendreContext,
};
use crate::integrator::{IntegratorConfig, Status, Trajectory};
use crate::lagrange::{a_matrix_fd, classical_el_residual, el_residual, integrate_lagrangian, Lagrangian, LagrangianKind};
use crate::manifold::{chart_by_name, euclidean, polar2d, sphere2d, ManifoldChart, SymMatrix};
use crate::newton::{integrate, ForceField};
use crate::normal_shift::{
    conformal_geodesic_check, force_conformal, force_normal_shift, force_spherical, projectors, symmetric_a_matrix,
    symmetric_b_matrix, FiberwiseSymmetricLagrangian, NormalShiftForce,
};
use crate::sampling::StateSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Identities,
    EulerLagrange,
    ThreeWay,
    ConformalFlow,
    Projectors,
    Conservation,
    Legendre,
    Cancellation,
    ChainRules,
    Order,
    All,
}

impl Suite {
    /// Every concrete suite, in report order.
    pub const EACH: [Suite; 10] = [
        Suite::Identities,
        Suite::EulerLagrange,
        Suite::ThreeWay,
        Suite::ConformalFlow,
        Suite::Projectors,
        Suite::Conservation,
        Suite::Legendre,
        Suite::Cancellation,
        Suite::ChainRules,
        Suite::Order,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::EulerLagrange => "el",
            Suite::ThreeWay => "threeway",
            Suite::ConformalFlow => "theorem81",
            Suite::Projectors => "projectors",
            Suite::Conservation => "conservation",
            Suite::Legendre => "legendre",
            Suite::Cancellation => "cancellation",
            Suite::ChainRules => "chainrules",
            Suite::Order => "order",
            Suite::All => "all",
        }
    }

    /// Charts a suite runs on when none is selected.
    pub fn default_charts(self) -> Vec<ManifoldChart> {
        match self {
            Suite::ConformalFlow => vec![euclidean(2), sphere2d(1.0)],
            Suite::Cancellation => vec![polar2d(), sphere2d(1.0)],
            Suite::Order => vec![sphere2d(1.0)],
            _ => vec![euclidean(2), polar2d(), sphere2d(1.0)],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .iter()
            .chain([Suite::All].iter())
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::EACH.iter().map(|x| x.name()).collect();
                Error::InvalidConfig(format!("unknown suite `{s}` (expected one of {}, all)", names.join(", ")))
            })
    }
}

/// One compared quantity. Passes when `lower <= value < tolerance`;
/// checks without a tolerance are informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub charts: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64) -> Self {
        Self {
            suite: suite.name().to_string(),
            seed,
            charts: Vec::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    fn add_chart(&mut self, chart: &ManifoldChart) {
        if !self.charts.iter().any(|c| c == chart.name()) {
            self.charts.push(chart.name().to_string());
        }
    }

    fn push(&mut self, name: String, value: f64, lower: Option<f64>, tolerance: Option<f64>) {
        let passed = match tolerance {
            None => true,
            Some(tol) => value < tol && lower.is_none_or(|lo| value >= lo),
        };
        self.passed &= passed;
        self.checks.push(Check {
            name,
            value,
            lower,
            tolerance,
            passed,
        });
    }

    fn below(&mut self, name: String, value: f64, tolerance: f64) {
        // NaN compares false and fails
        let value = if value.is_nan() { f64::INFINITY } else { value };
        self.push(name, value, None, Some(tolerance));
    }

    fn info(&mut self, name: String, value: f64) {
        self.push(name, value, None, None);
    }

    fn merge(&mut self, other: SuiteReport) {
        for c in other.charts {
            if !self.charts.contains(&c) {
                self.charts.push(c);
            }
        }
        self.passed &= other.passed;
        self.checks.extend(other.checks);
    }

    /// Largest value among checks whose name starts with `prefix`.
    pub fn worst(&self, prefix: &str) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.value)
            .reduce(f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const IDENTITY_TOLERANCE: f64 = 1e-6;
pub const EL_TOLERANCE: f64 = 1e-5;
pub const THREEWAY_TOLERANCE: f64 = 1e-5;
pub const FORCE_TOLERANCE: f64 = 1e-10;
pub const CONFORMAL_FLAT_TOLERANCE: f64 = 1e-6;
pub const CONFORMAL_CURVED_TOLERANCE: f64 = 1e-5;
pub const PROJECTOR_TOLERANCE: f64 = 1e-12;
pub const INVERSE_TOLERANCE: f64 = 1e-10;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;
pub const ENERGY_DRIFT_TOLERANCE: f64 = 1e-6;
pub const SPEED_DRIFT_TOLERANCE: f64 = 1e-8;
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-9;
pub const MAX_NEWTON_ITERATIONS: usize = 10;
pub const CANCELLATION_TOLERANCE: f64 = 1e-8;
pub const CHAIN_RULE_TOLERANCE: f64 = 1e-5;
pub const ORDER_RANGE: (f64, f64) = (3.7, 4.3);

const IDENTITY_STATES: usize = 50;
const FORCE_STATES: usize = 100;
const PROJECTOR_STATES: usize = 50;
const LEGENDRE_STATES: usize = 100;
const CANCELLATION_STATES: usize = 50;
const CURVES: usize = 20;
const TRAJECTORIES: usize = 2;
/// Length and RK4 step of the random curves in the chain-rule suite.
pub const CURVE_SPAN: (f64, f64) = (0.2, 1e-3);

fn expr(src: &str) -> ScalarExpr {
    ScalarExpr::parse(src).expect("builtin expression parses")
}

/// Regular Lagrangians exercised by the suites.
pub fn catalog() -> Vec<Lagrangian> {
    vec![
        Lagrangian::kinetic(),
        Lagrangian::kinetic_minus_potential(expr("0.5*x1^2 + 0.2*sin(x2)")),
        Lagrangian::conformal_kinetic(expr("0.2*x1 - 0.1*x2")),
        Lagrangian::fiberwise(FiberwiseSymmetricLagrangian::quartic(expr("0.1*x1"))),
    ]
}

/// Fiberwise symmetric Lagrangians for the projector suite.
pub fn fiberwise_catalog() -> Vec<FiberwiseSymmetricLagrangian> {
    vec![
        FiberwiseSymmetricLagrangian::quadratic(expr("0.3*x1 - 0.2*x2")),
        FiberwiseSymmetricLagrangian::quartic(expr("0.1*x1")),
    ]
}

/// Seed for one `(suite, chart, system)` cell, independent of run order.
fn sub_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

fn sampler(seed: u64, tag: &str) -> StateSampler {
    StateSampler::new(sub_seed(seed, tag)).with_margin(0.05)
}

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |m, c| if c.is_nan() { f64::INFINITY } else { m.max(c.abs()) })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    max_abs(a.iter().zip(b).map(|(u, w)| u - w))
}

/// Resolves a chart selector: a catalog name, or `None` for the suite's
/// defaults.
pub fn select_charts(suite: Suite, chart: Option<&str>) -> Result<Vec<ManifoldChart>> {
    match chart {
        None | Some("default") => Ok(suite.default_charts()),
        Some(name) => Ok(vec![chart_by_name(name, &[], None)?]),
    }
}

/// Runs `suite` on the selected charts.
pub fn run_suite(suite: Suite, chart: Option<&str>, seed: u64) -> Result<SuiteReport> {
    if suite == Suite::All {
        let mut report = SuiteReport::new(Suite::All, seed);
        for s in Suite::EACH {
            report.merge(run_suite(s, chart, seed)?);
        }
        return Ok(report);
    }
    let charts = select_charts(suite, chart)?;
    run_on(suite, &charts, seed)
}

/// Runs `suite` on explicit charts.
pub fn run_on(suite: Suite, charts: &[ManifoldChart], seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(suite, seed);
    if suite == Suite::All {
        for s in Suite::EACH {
            report.merge(run_on(s, charts, seed)?);
        }
        return Ok(report);
    }
    if suite == Suite::Order {
        order(&mut report)?;
        return Ok(report);
    }
    for chart in charts {
        report.add_chart(chart);
        match suite {
            Suite::Identities => identities(&mut report, chart, seed)?,
            Suite::EulerLagrange => euler_lagrange(&mut report, chart, seed)?,
            Suite::ThreeWay => three_way(&mut report, chart, seed)?,
            Suite::ConformalFlow => conformal_flow(&mut report, chart, seed)?,
            Suite::Projectors => projector_suite(&mut report, chart, seed)?,
            Suite::Conservation => conservation(&mut report, chart, seed)?,
            Suite::Legendre => legendre_suite(&mut report, chart, seed)?,
            Suite::Cancellation => cancellation(&mut report, chart, seed)?,
            Suite::ChainRules => chain_rules(&mut report, chart, seed)?,
            Suite::Order | Suite::All => unreachable!(),
        }
    }
    Ok(report)
}

fn identities(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let systems = catalog()
        .into_iter()
        .filter(|l| !matches!(l.kind(), LagrangianKind::FiberwiseSymmetric(_)));
    for l in systems {
        let tag = format!("identities/{}/{}", chart.name(), l.label());
        let points = sampler(seed, &tag).regular_tangents(chart, &l, IDENTITY_STATES)?;
        let ctx = LegendreContext::new(l);
        let h = hamiltonian_from_lagrangian(&ctx, chart);
        let r = identity_suite(&ctx, &h, chart, &points)?;
        for res in r.residuals {
            report.below(format!("{tag}/{}", res.name), res.max_residual, IDENTITY_TOLERANCE);
        }
    }
    Ok(())
}

/// A regular initial state whose trajectories under every `run` stay in
/// the chart for the whole span.
fn trajectory_start<T>(
    sampler: &mut StateSampler,
    chart: &ManifoldChart,
    l: &Lagrangian,
    mut run: impl FnMut(&TangentPoint) -> Result<T>,
    completed: impl Fn(&T) -> bool,
) -> Result<(TangentPoint, T)> {
    for _ in 0..200 {
        let q0 = sampler.regular_tangent(chart, l)?;
        match run(&q0) {
            Ok(out) if completed(&out) => return Ok((q0, out)),
            Ok(_) | Err(Error::SingularA { .. }) | Err(Error::NonConvergence { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidConfig(format!(
        "no initial state keeps `{}` inside `{}`",
        l.label(),
        chart.name()
    )))
}

fn unit_span() -> IntegratorConfig {
    IntegratorConfig::rk4(1e-3, 1.0)
}

fn euler_lagrange(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let cfg = unit_span();
    for l in catalog() {
        let tag = format!("el/{}/{}", chart.name(), l.label());
        let mut s = sampler(seed, &tag).with_margin(0.2);
        let mut worst: f64 = 0.0;
        for _ in 0..TRAJECTORIES {
            let (_, tr) = trajectory_start(&mut s, chart, &l, |q| integrate_lagrangian(chart, &l, q, &cfg), |t| {
                t.status == Status::Completed
            })?;
            let samples = tr.curve_samples()?;
            let cov = el_residual(chart, &l, &samples)?;
            let cla = classical_el_residual(chart, &l, &samples)?;
            for (a, b) in cov.iter().zip(&cla) {
                worst = worst.max(max_diff(a, b));
            }
        }
        report.below(format!("{tag}/classical_vs_covariant"), worst, EL_TOLERANCE);
    }
    Ok(())
}

fn three_way(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let cfg = unit_span();
    for l in catalog() {
        let tag = format!("threeway/{}/{}", chart.name(), l.label());
        let ctx = LegendreContext::new(l.clone());
        let h = hamiltonian_from_lagrangian(&ctx, chart);
        let newton = ForceField::from_lagrangian(l.clone());
        let mut s = sampler(seed, &tag).with_margin(0.2);
        let (mut nl, mut nh, mut lh) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..TRAJECTORIES {
            let run = |q: &TangentPoint| -> Result<[Trajectory; 3]> {
                let a = integrate(chart, &newton, q, &cfg)?;
                let b = integrate_lagrangian(chart, &l, q, &cfg)?;
                let c = integrate_hamiltonian(chart, &h, &legendre_forward(chart, &l, q)?, &cfg)?;
                Ok([a, b, c])
            };
            let (_, [a, b, c]) = trajectory_start(&mut s, chart, &l, run, |t| t.iter().all(|t| t.status == Status::Completed))?;
            nl = nl.max(a.sup_distance(&b)?);
            nh = nh.max(a.sup_distance(&c)?);
            lh = lh.max(b.sup_distance(&c)?);
        }
        report.below(format!("{tag}/newton_vs_lagrange"), nl, THREEWAY_TOLERANCE);
        report.below(format!("{tag}/newton_vs_hamilton"), nh, THREEWAY_TOLERANCE);
        report.below(format!("{tag}/lagrange_vs_hamilton"), lh, THREEWAY_TOLERANCE);
    }
    Ok(())
}

fn conformal_flow(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let f = expr("x1");
    let tag = format!("theorem81/{}/f={f}", chart.name());
    let ns = NormalShiftForce::from_conformal_factor(chart.dim(), &f)?;
    let quad = FiberwiseSymmetricLagrangian::quadratic(f.clone());
    let mut s = sampler(seed, &format!("{tag}/forces"));
    let (mut ns_conf, mut sph_conf) = (0.0f64, 0.0f64);
    for _ in 0..FORCE_STATES {
        let q = s.tangent(chart)?;
        let conf = force_conformal(chart, &f, &q)?;
        ns_conf = ns_conf.max(max_diff(&force_normal_shift(chart, &ns, &q)?, &conf));
        sph_conf = sph_conf.max(max_diff(&force_spherical(chart, &quad, &q)?, &conf));
    }
    report.below(format!("{tag}/normal_shift_vs_conformal"), ns_conf, FORCE_TOLERANCE);
    report.below(format!("{tag}/spherical_quadratic_vs_conformal"), sph_conf, FORCE_TOLERANCE);

    let tolerance = if chart.name() == "euclidean2" {
        CONFORMAL_FLAT_TOLERANCE
    } else {
        CONFORMAL_CURVED_TOLERANCE
    };
    let cfg = unit_span();
    let mut s = sampler(seed, &format!("{tag}/flow")).with_margin(0.2);
    let l = Lagrangian::conformal_kinetic(f.clone());
    let (_, check) = trajectory_start(
        &mut s,
        chart,
        &l,
        |q| match conformal_geodesic_check(chart, &f, q, &cfg) {
            Ok(c) if c.samples == 1001 => Ok(Some(c)),
            // one of the two flows left the chart early
            Ok(_) | Err(Error::DimensionMismatch { .. }) => Ok(None),
            Err(e) => Err(e),
        },
        Option::is_some,
    )?;
    let check = check.expect("completed check");
    report.below(format!("{tag}/geodesic_sup_distance"), check.sup_distance, tolerance);
    report.info(format!("{tag}/parameter_discrepancy"), check.parameter_discrepancy);
    Ok(())
}

fn projector_suite(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let n = chart.dim();
    let id = SymMatrix::identity(n, n);
    for l in fiberwise_catalog() {
        let tag = format!("projectors/{}/{}", chart.name(), l.label());
        let lag = Lagrangian::fiberwise(l.clone());
        let mut s = sampler(seed, &tag);
        let (mut algebra, mut inverse, mut closed) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..PROJECTOR_STATES {
            let q = s.regular_tangent(chart, &lag)?;
            let (qm, pm) = projectors(chart, &q)?;
            let v = nalgebra::DVector::from_column_slice(&q.v);
            let residuals = [
                (&qm * &qm - &qm).amax(),
                (&pm * &pm - &pm).amax(),
                (&qm * &pm).amax(),
                (&pm * &qm).amax(),
                (&qm + &pm - &id).amax(),
                (&qm * &v - &v).amax(),
                (&pm * &v).amax(),
            ];
            algebra = algebra.max(max_abs(residuals));
            let a = symmetric_a_matrix(chart, &l, &q)?;
            let b = symmetric_b_matrix(chart, &l, &q)?;
            inverse = inverse.max((&a * &b - &id).amax());
            let fd = a_matrix_fd(chart, &lag, &q)?;
            closed = closed.max((&a - &fd).amax() / a.amax().max(1.0));
        }
        report.below(format!("{tag}/projector_algebra"), algebra, PROJECTOR_TOLERANCE);
        report.below(format!("{tag}/a_times_b"), inverse, INVERSE_TOLERANCE);
        report.below(format!("{tag}/closed_form_vs_hessian"), closed, CLOSED_FORM_TOLERANCE);
    }
    Ok(())
}

fn conservation(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let cfg = unit_span();
    let span = cfg.t_span.1 - cfg.t_span.0;
    for l in catalog() {
        let tag = format!("conservation/{}/{}", chart.name(), l.label());
        let ctx = LegendreContext::new(l.clone());
        let h = hamiltonian_from_lagrangian(&ctx, chart);
        let mut s = sampler(seed, &tag).with_margin(0.2);
        let (mut dh, mut dham) = (0.0f64, 0.0f64);
        for _ in 0..TRAJECTORIES {
            let run = |q: &TangentPoint| -> Result<[Trajectory; 2]> {
                let a = integrate_lagrangian(chart, &l, q, &cfg)?;
                let b = integrate_hamiltonian(chart, &h, &legendre_forward(chart, &l, q)?, &cfg)?;
                Ok([a, b])
            };
            let (_, [a, b]) = trajectory_start(&mut s, chart, &l, run, |t| t.iter().all(|t| t.status == Status::Completed))?;
            dh = dh.max(a.energy_drift().unwrap_or(f64::INFINITY) / span);
            dham = dham.max(b.energy_drift().unwrap_or(f64::INFINITY) / span);
        }
        report.below(format!("{tag}/h_drift_per_time"), dh, ENERGY_DRIFT_TOLERANCE);
        report.below(format!("{tag}/H_drift_per_time"), dham, ENERGY_DRIFT_TOLERANCE);
    }
    let tag = format!("conservation/{}/geodesic", chart.name());
    let mut s = sampler(seed, &tag).with_margin(0.2);
    let zero = ForceField::zero();
    let mut worst: f64 = 0.0;
    for _ in 0..TRAJECTORIES {
        let (_, tr) = trajectory_start(&mut s, chart, &Lagrangian::kinetic(), |q| integrate(chart, &zero, q, &cfg), |t| {
            t.status == Status::Completed
        })?;
        worst = worst.max(tr.speed_drift().unwrap_or(f64::INFINITY));
    }
    report.below(format!("{tag}/speed_drift"), worst, SPEED_DRIFT_TOLERANCE);
    Ok(())
}

fn legendre_suite(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    for l in catalog() {
        let tag = format!("legendre/{}/{}", chart.name(), l.label());
        let mut s = sampler(seed, &tag);
        let (mut tm, mut tstar, mut iterations) = (0.0f64, 0.0f64, 0usize);
        for _ in 0..LEGENDRE_STATES {
            // fresh contexts so every solve starts from the default guess
            let q = s.regular_tangent(chart, &l)?;
            let lam = legendre_forward(chart, &l, &q)?;
            let back = legendre_inverse(&LegendreContext::new(l.clone()), chart, &lam.x, &lam.p, None)?;
            tm = tm.max(max_diff(&back.v, &q.v));
            iterations = iterations.max(back.iterations);

            let p = s.cotangent(chart)?;
            let v = legendre_inverse(&LegendreContext::new(l.clone()), chart, &p.x, &p.p, None)?;
            iterations = iterations.max(v.iterations);
            let again = legendre_forward(chart, &l, &TangentPoint::new(p.x.clone(), v.v))?;
            tstar = tstar.max(max_diff(&again.p, &p.p));
        }
        report.below(format!("{tag}/round_trip_tm"), tm, ROUND_TRIP_TOLERANCE);
        report.below(format!("{tag}/round_trip_tstar"), tstar, ROUND_TRIP_TOLERANCE);
        report.below(
            format!("{tag}/max_newton_iterations"),
            iterations as f64,
            (MAX_NEWTON_ITERATIONS + 1) as f64,
        );
    }
    Ok(())
}

fn cancellation(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    for l in catalog() {
        let tag = format!("cancellation/{}/{}", chart.name(), l.label());
        let ctx = LegendreContext::new(l.clone());
        let h = hamiltonian_from_lagrangian(&ctx, chart);
        let mut s = sampler(seed, &tag);
        let mut worst: f64 = 0.0;
        for _ in 0..CANCELLATION_STATES {
            let q = s.regular_tangent(chart, &l)?;
            let CotangentPoint { x, p } = legendre_forward(chart, &l, &q)?;
            worst = worst.max(max_abs(covariant_cancellation_residual(chart, &h, &x, &p)?));
        }
        report.below(format!("{tag}/covariant_minus_plain"), worst, CANCELLATION_TOLERANCE);
    }
    Ok(())
}

/// Fields whose chain rule is checked along random curves.
pub fn chain_rule_fields() -> Vec<ExtendedField> {
    vec![
        ExtendedField::kinetic_energy(),
        ExtendedField::coordinate_scalar(expr("x1*x2 + cos(x1)"), Rep::Velocity),
        ExtendedField::lowered_velocity(),
    ]
}

fn chain_rules(report: &mut SuiteReport, chart: &ManifoldChart, seed: u64) -> Result<()> {
    let tag = format!("chainrules/{}", chart.name());
    let mut s = sampler(seed, &tag).with_margin(0.2);
    let fields = chain_rule_fields();
    let mut worst = vec![0.0f64; fields.len()];
    for _ in 0..CURVES {
        let curve = s.curve(chart, CURVE_SPAN.0, CURVE_SPAN.1)?;
        for (w, field) in worst.iter_mut().zip(&fields) {
            for r in chain_rule_check(chart, field, &curve)? {
                *w = w.max(max_abs(r.data.iter().copied()));
            }
        }
    }
    for (w, field) in worst.into_iter().zip(&fields) {
        report.below(format!("{tag}/{}", field.label()), w, CHAIN_RULE_TOLERANCE);
    }
    Ok(())
}

/// Endpoint errors of RK4 on the unit-speed great circle through
/// `(θ, φ) = (π/2, 0)` with embedded velocity `(0, 0.8, −0.6)`.
pub fn sphere_endpoint_errors(steps: &[f64], t1: f64) -> Result<Vec<f64>> {
    let chart = sphere2d(1.0);
    let q0 = TangentPoint::new([FRAC_PI_2, 0.0], [0.6, 0.8]);
    let (s, c) = t1.sin_cos();
    let exact = [c, 0.8 * s, -0.6 * s];
    steps
        .iter()
        .map(|&dt| {
            let tr = integrate(&chart, &ForceField::zero(), &q0, &IntegratorConfig::rk4(dt, t1))?;
            let x = &tr.last().x;
            let (st, ct) = x[0].sin_cos();
            let (sp, cp) = x[1].sin_cos();
            let got = [st * cp, st * sp, ct];
            Ok(max_diff(&got, &exact))
        })
        .collect()
}

/// Least-squares slope of `log e` against `log dt`.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn order(report: &mut SuiteReport) -> Result<()> {
    report.add_chart(&sphere2d(1.0));
    let steps = [0.1, 0.05, 0.025];
    let errors = sphere_endpoint_errors(&steps, 1.0)?;
    for (dt, e) in steps.iter().zip(&errors) {
        report.info(format!("order/sphere2d/endpoint_error/dt={dt}"), *e);
    }
    let p = convergence_order(&steps, &errors);
    report.push("order/sphere2d/rk4_exponent".into(), p, Some(ORDER_RANGE.0), Some(ORDER_RANGE.1));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.iter().chain([Suite::All].iter()) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sub_seeds_differ_by_tag() {
        assert_ne!(sub_seed(7, "a"), sub_seed(7, "b"));
        assert_eq!(sub_seed(7, "a"), sub_seed(7, "a"));
    }

    #[test]
    fn order_of_synthetic_errors() {
        let steps = [0.1, 0.05, 0.025];
        let errors: Vec<f64> = steps.iter().map(|d: &f64| 3.0 * d.powi(4)).collect();
        assert!((convergence_order(&steps, &errors) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn range_checks() {
        let mut r = SuiteReport::new(Suite::Order, 0);
        r.push("x".into(), 4.0, Some(3.7), Some(4.3));
        assert!(r.passed);
        r.push("y".into(), 3.0, Some(3.7), Some(4.3));
        assert!(!r.passed);
        r.below("z".into(), f64::NAN, 1.0);
        assert_eq!(r.failures().count(), 2);
    }

    #[test]
    fn projectors_on_sphere() {
        let r = run_on(Suite::Projectors, &[sphere2d(1.0)], 3).unwrap();
        assert!(r.passed, "{r:#?}");
    }
}
