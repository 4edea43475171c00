//! Legendre map, Hamilton function, Hamilton equations and the identities
//! tying the velocity and momentum pictures together.

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::fields::{
    spatial_gradient, velocity_gradient, velocity_gradient_lowered, CotangentPoint, ExtendedField, FieldPoint, Rep,
    TangentPoint,
};
use crate::integrator::{solve, IntegratorConfig, Trajectory};
use crate::lagrange::{a_matrix, regularity_of, solve_regular, Lagrangian, LagrangianKind};
use crate::manifold::{dot, mat_vec, ManifoldChart, Momentum, SymMatrix, Velocity};
use crate::numdiff;
use crate::tensor::Rank;

/// `λ(x, v) = (x, ∂L/∂v)`.
pub fn legendre_forward(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<CotangentPoint> {
    let p = l.grad_v(chart, &q.x, &q.v)?;
    Ok(CotangentPoint::new(q.x.clone(), p))
}

/// `h = v^k·∂L/∂v^k − L`.
pub fn energy_h(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<f64> {
    let p = l.grad_v(chart, &q.x, &q.v)?;
    Ok(dot(&q.v, &p) - l.value(chart, &q.x, &q.v)?)
}

/// Newton solver settings and warm-start cache for `λ⁻¹`.
pub struct LegendreContext {
    pub lagrangian: Lagrangian,
    pub max_iter: usize,
    /// Absolute tolerance on `|∂L/∂v − p|_∞`, scaled by `max(1, |p|_∞)`.
    pub solve_tolerance: f64,
    pub max_halvings: usize,
    cache: Mutex<Option<(Vec<f64>, Vec<f64>)>>,
}

impl fmt::Debug for LegendreContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LegendreContext")
            .field("lagrangian", &self.lagrangian.label())
            .field("max_iter", &self.max_iter)
            .field("solve_tolerance", &self.solve_tolerance)
            .finish()
    }
}

impl Clone for LegendreContext {
    /// The clone starts with an empty cache.
    fn clone(&self) -> Self {
        Self {
            lagrangian: self.lagrangian.clone(),
            max_iter: self.max_iter,
            solve_tolerance: self.solve_tolerance,
            max_halvings: self.max_halvings,
            cache: Mutex::new(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreSolution {
    pub v: Velocity,
    pub iterations: usize,
    pub residual: f64,
}

impl LegendreContext {
    pub fn new(lagrangian: Lagrangian) -> Self {
        Self {
            lagrangian,
            max_iter: 50,
            solve_tolerance: 1e-12,
            max_halvings: 20,
            cache: Mutex::new(None),
        }
    }

    /// Last solution `(p, v)`, used as a warm start when `p` is close.
    fn cached_guess(&self, x: &[f64], p: &[f64]) -> Option<Vec<f64>> {
        let cache = self.cache.lock().ok()?;
        let (cp, cv) = cache.as_ref()?;
        let close = cp.len() == p.len() && cp.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-2 * b.abs().max(1.0));
        (close && x.len() == cv.len()).then(|| cv.clone())
    }

    fn store(&self, p: &[f64], v: &[f64]) {
        if let Ok(mut cache) = self.cache.lock() {
            *cache = Some((p.to_vec(), v.to_vec()));
        }
    }
}

fn residual_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

/// `raise(p)` scaled by the factor minimizing `|∂L/∂v − p|` over a log grid
/// refined by golden-section search.
fn default_guess(chart: &ManifoldChart, l: &Lagrangian, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let up = chart.raise_index(x, p)?;
    if up.iter().all(|c| *c == 0.0) {
        return Ok(up.0);
    }
    let cost = |log_a: f64| -> f64 {
        let a = log_a.exp();
        let v: Vec<f64> = up.iter().map(|c| a * c).collect();
        match l.grad_v(chart, x, &v) {
            Ok(g) => g.iter().zip(p).map(|(u, w)| (u - w) * (u - w)).sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let grid: Vec<f64> = (-24..=24).map(|k| k as f64 * 0.25).collect();
    let costs: Vec<f64> = grid.iter().map(|g| cost(*g)).collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| costs[i].total_cmp(&costs[j]))
        .unwrap_or(24);
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..40 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = cost(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = cost(d);
        }
    }
    let a = (0.5 * (lo + hi)).exp();
    Ok(up.iter().map(|c| a * c).collect())
}

/// `λ⁻¹(x, p)`: damped Newton iteration on `∂L/∂v(x, v) = p` with
/// Jacobian `A`.
pub fn legendre_inverse(
    ctx: &LegendreContext,
    chart: &ManifoldChart,
    x: &[f64],
    p: &[f64],
    v_guess: Option<&[f64]>,
) -> Result<LegendreSolution> {
    chart.check_point(x)?;
    chart.check_fiber("momentum", p)?;
    let l = &ctx.lagrangian;
    let mut v = match v_guess {
        Some(g) => {
            chart.check_fiber("velocity", g)?;
            g.to_vec()
        }
        None => match ctx.cached_guess(x, p) {
            Some(g) => g,
            None => default_guess(chart, l, x, p)?,
        },
    };
    let tol = ctx.solve_tolerance * residual_norm(p).max(1.0);
    let resid = |v: &[f64]| -> Result<Vec<f64>> {
        Ok(l.grad_v(chart, x, v)?.iter().zip(p).map(|(a, b)| a - b).collect())
    };
    let mut r = resid(&v)?;
    let mut norm = residual_norm(&r);
    let mut iterations = 0;
    let newton_step = |v: &[f64], r: &[f64]| -> Result<Vec<f64>> {
        let a = a_matrix(chart, l, &TangentPoint::new(x.to_vec(), v.to_vec()))?;
        let neg: Vec<f64> = r.iter().map(|c| -c).collect();
        solve_regular(&a, &neg)
    };
    while norm >= tol {
        if iterations >= ctx.max_iter {
            return Err(Error::NonConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let dv = newton_step(&v, &r)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=ctx.max_halvings {
            let trial: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + scale * b).collect();
            if let Ok(rt) = resid(&trial) {
                let nt = residual_norm(&rt);
                if nt < norm {
                    v = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations, residual: norm });
        }
    }
    // polish towards machine precision; keep only improvements
    for _ in 0..2 {
        if norm == 0.0 {
            break;
        }
        let Ok(dv) = newton_step(&v, &r) else { break };
        let trial: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + b).collect();
        match resid(&trial) {
            Ok(rt) if residual_norm(&rt) < norm => {
                norm = residual_norm(&rt);
                r = rt;
                v = trial;
            }
            _ => break,
        }
    }
    let report = regularity_of(&a_matrix(chart, l, &TangentPoint::new(x.to_vec(), v.clone()))?);
    if !report.is_regular {
        return Err(Error::SingularA {
            det: report.det_a,
            tolerance: report.tolerance,
        });
    }
    ctx.store(p, &v);
    Ok(LegendreSolution {
        v: Velocity(v),
        iterations,
        residual: norm,
    })
}

/// Hamilton function families.
#[derive(Clone)]
pub enum HamiltonianKind {
    /// `½g^ij p_i p_j + U(x)`.
    Kinetic { potential: Option<ScalarExpr> },
    /// `½e^{2f}g^ij p_i p_j`.
    ConformalKinetic { f: ScalarExpr },
    /// `h∘λ⁻¹` evaluated through Newton solves; derivatives by FD.
    Legendre(Arc<LegendreContext>),
}

#[derive(Clone)]
pub struct Hamiltonian {
    kind: HamiltonianKind,
    label: String,
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hamiltonian({})", self.label)
    }
}

impl Hamiltonian {
    pub fn kinetic(potential: Option<ScalarExpr>) -> Self {
        let label = match &potential {
            Some(u) => format!("kinetic-plus-potential[U={u}]"),
            None => "kinetic".into(),
        };
        Self {
            kind: HamiltonianKind::Kinetic { potential },
            label,
        }
    }

    pub fn conformal_kinetic(f: ScalarExpr) -> Self {
        Self {
            label: format!("conformal-kinetic[f={f}]"),
            kind: HamiltonianKind::ConformalKinetic { f },
        }
    }

    pub fn legendre(ctx: LegendreContext) -> Self {
        Self {
            label: format!("legendre[{}]", ctx.lagrangian.label()),
            kind: HamiltonianKind::Legendre(Arc::new(ctx)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &HamiltonianKind {
        &self.kind
    }

    fn check(chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<()> {
        chart.check_point(x)?;
        chart.check_fiber("momentum", p)
    }

    pub fn value(&self, chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<f64> {
        Self::check(chart, x, p)?;
        match &self.kind {
            HamiltonianKind::Kinetic { potential } => {
                let k = 0.5 * dot(p, &chart.raise_index(x, p)?);
                Ok(k + potential.as_ref().map_or(Ok(0.0), |u| u.eval(x))?)
            }
            HamiltonianKind::ConformalKinetic { f } => Ok((2.0 * f.eval(x)?).exp() * 0.5 * dot(p, &chart.raise_index(x, p)?)),
            HamiltonianKind::Legendre(ctx) => {
                let sol = legendre_inverse(ctx, chart, x, p, None)?;
                energy_h(chart, &ctx.lagrangian, &TangentPoint::new(x.to_vec(), sol.v))
            }
        }
    }

    /// `∂H/∂p_k`.
    pub fn grad_p(&self, chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        Self::check(chart, x, p)?;
        match &self.kind {
            HamiltonianKind::Kinetic { .. } => Ok(chart.raise_index(x, p)?.0),
            HamiltonianKind::ConformalKinetic { f } => {
                let e = (2.0 * f.eval(x)?).exp();
                Ok(chart.raise_index(x, p)?.iter().map(|c| e * c).collect())
            }
            HamiltonianKind::Legendre(_) => {
                numdiff::jacobian(p, numdiff::first_step, |ps| Ok(vec![self.value(chart, x, ps)?]))
            }
        }
    }

    /// `∂H/∂x^q` at fixed `p`.
    pub fn grad_x(&self, chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        Self::check(chart, x, p)?;
        let kinetic = || -> Result<(Vec<f64>, f64)> {
            let up = chart.raise_index(x, p)?;
            let parts = chart
                .metric_partials_at(x)?
                .iter()
                .map(|d| -0.5 * dot(&up, &mat_vec(d, &up)))
                .collect();
            Ok((parts, 0.5 * dot(p, &up)))
        };
        match &self.kind {
            HamiltonianKind::Kinetic { potential } => {
                let (mut out, _) = kinetic()?;
                if let Some(u) = potential {
                    for (o, du) in out.iter_mut().zip(u.gradient(x)?) {
                        *o += du;
                    }
                }
                Ok(out)
            }
            HamiltonianKind::ConformalKinetic { f } => {
                let e = (2.0 * f.eval(x)?).exp();
                let (parts, k) = kinetic()?;
                Ok(parts
                    .iter()
                    .zip(f.gradient(x)?)
                    .map(|(d, df)| e * (d + 2.0 * df * k))
                    .collect())
            }
            HamiltonianKind::Legendre(_) => numdiff::jacobian(x, numdiff::first_step, |xs| {
                if !chart.in_domain(xs) {
                    return Err(Error::FdStep { x: x.to_vec() });
                }
                Ok(vec![self.value(chart, xs, p)?])
            }),
        }
    }

    /// `B^ij = ∂²H/∂p_i∂p_j`.
    pub fn b_matrix(&self, chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<SymMatrix> {
        Self::check(chart, x, p)?;
        match &self.kind {
            HamiltonianKind::Kinetic { .. } => chart.inverse_metric_at(x),
            HamiltonianKind::ConformalKinetic { f } => Ok(chart.inverse_metric_at(x)? * (2.0 * f.eval(x)?).exp()),
            HamiltonianKind::Legendre(_) => self.b_matrix_fd(chart, x, p),
        }
    }

    /// `B` by finite differences of the value, symmetrized.
    pub fn b_matrix_fd(&self, chart: &ManifoldChart, x: &[f64], p: &[f64]) -> Result<SymMatrix> {
        let n = x.len();
        let value = |ps: &[f64]| self.value(chart, x, ps);
        let f0 = value(p)?;
        let h: Vec<f64> = p.iter().map(|c| numdiff::second_step(*c)).collect();
        let at = |i: usize, di: f64, j: usize, dj: f64| {
            let mut q = p.to_vec();
            q[i] += di;
            q[j] += dj;
            value(&q)
        };
        let mut m = SymMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = (at(i, h[i], i, 0.0)? - 2.0 * f0 + at(i, -h[i], i, 0.0)?) / (h[i] * h[i]);
            for j in i + 1..n {
                let d = (at(i, h[i], j, h[j])? - at(i, h[i], j, -h[j])? - at(i, -h[i], j, h[j])? + at(i, -h[i], j, -h[j])?)
                    / (4.0 * h[i] * h[j]);
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        Ok(m)
    }

    /// `H` as a momentum-representation scalar field.
    pub fn as_field(&self) -> ExtendedField {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        ExtendedField::new(format!("H[{}]", self.label), Rank::SCALAR, Rep::Momentum, move |ch, x, p| {
            Ok(vec![a.value(ch, x, p)?])
        })
        .with_x_partials(move |ch, x, p| b.grad_x(ch, x, p))
        .with_fiber_partials(move |ch, x, p| c.grad_p(ch, x, p))
    }
}

/// Analytic `H` for the builtin families, a Newton-backed `h∘λ⁻¹` otherwise.
pub fn hamiltonian_from_lagrangian(ctx: &LegendreContext, _chart: &ManifoldChart) -> Hamiltonian {
    match ctx.lagrangian.kind() {
        LagrangianKind::Kinetic => Hamiltonian::kinetic(None),
        LagrangianKind::KineticMinusPotential { u } => Hamiltonian::kinetic(Some(u.clone())),
        LagrangianKind::ConformalKinetic { f } => Hamiltonian::conformal_kinetic(f.clone()),
        _ => Hamiltonian::legendre(ctx.clone()),
    }
}

/// `ẋ^k = ∂H/∂p_k`, `ṗ_k = −∂H/∂x^k`.
pub fn hamilton_rhs(chart: &ManifoldChart, h: &Hamiltonian, x: &[f64], p: &[f64]) -> Result<(Velocity, Momentum)> {
    let dx = h.grad_p(chart, x, p)?;
    let dp = h.grad_x(chart, x, p)?.iter().map(|c| -c).collect();
    Ok((Velocity(dx), Momentum(dp)))
}

/// `ṗ` from the covariant equations `∇_t p_k = −∇_k H` with `ẋ = ∇̃H`,
/// minus the plain `−∂H/∂x`. Vanishes because the Christoffel terms cancel.
pub fn covariant_cancellation_residual(chart: &ManifoldChart, h: &Hamiltonian, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let n = chart.dim();
    let point = CotangentPoint::new(x.to_vec(), p.to_vec());
    let field = h.as_field();
    let grad = spatial_gradient(chart, &field, &point)?;
    let xdot = velocity_gradient(chart, &field, &point)?;
    let gamma = chart.christoffel_at(x)?;
    let (_, plain) = hamilton_rhs(chart, h, x, p)?;
    Ok((0..n)
        .map(|k| {
            let transport: f64 = (0..n)
                .flat_map(|q| (0..n).map(move |b| (q, b)))
                .map(|(q, b)| gamma.get(b, q, k) * xdot.data[q] * p[b])
                .sum();
            -grad.data[k] + transport - plain[k]
        })
        .collect())
}

/// Integrates Hamilton's equations; samples carry `H`.
pub fn integrate_hamiltonian(chart: &ManifoldChart, h: &Hamiltonian, state0: &CotangentPoint, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let n = chart.dim();
    chart.check_fiber("momentum", &state0.p)?;
    let y0: Vec<f64> = state0.x.iter().chain(state0.p.iter()).copied().collect();
    let (raw, status) = solve(chart, &y0, cfg, |y: &[f64]| {
        let (dx, dp) = hamilton_rhs(chart, h, &y[..n], &y[n..])?;
        Ok(dx.0.into_iter().chain(dp.0).collect())
    })?;
    let mut tr = Trajectory::from_raw(Rep::Momentum, n, raw, status);
    tr.attach_energy(|x, p| h.value(chart, x, p))?;
    Ok(tr)
}

pub fn b_matrix(chart: &ManifoldChart, h: &Hamiltonian, x: &[f64], p: &[f64]) -> Result<SymMatrix> {
    h.b_matrix(chart, x, p)
}

/// Maximum residual of one identity and the point where it occurred.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub max_residual: f64,
    pub worst_point: Option<TangentPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub lagrangian: String,
    pub chart: String,
    pub points: usize,
    pub residuals: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.max_residual))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.max_residual)
    }
}

/// Identity names in report order.
pub const IDENTITIES: [&str; 7] = [
    "rep_commutation",
    "chain_rule_velocity",
    "chain_rule_spatial",
    "v_equals_dH_dp",
    "l_equals_L",
    "grad_H_plus_grad_L",
    "legendre_round_trip",
];

/// Test scalar `Y = Σ sin(x^k)·p_k + ½(Σ p_k)²` with exact partials.
pub fn test_scalar() -> ExtendedField {
    ExtendedField::new("sin(x).p + (sum p)^2/2", Rank::SCALAR, Rep::Momentum, |_, x, p| {
        let s: f64 = p.iter().sum();
        Ok(vec![x.iter().zip(p).map(|(a, b)| a.sin() * b).sum::<f64>() + 0.5 * s * s])
    })
    .with_x_partials(|_, x, p| Ok(x.iter().zip(p).map(|(a, b)| a.cos() * b).collect()))
    .with_fiber_partials(|_, x, p| {
        let s: f64 = p.iter().sum();
        Ok(x.iter().map(|a| a.sin() + s).collect())
    })
}

/// `X = Y∘λ` as a velocity-representation field.
fn compose_with_legendre(y: &ExtendedField, l: &Lagrangian) -> ExtendedField {
    let (y, l) = (y.clone(), l.clone());
    ExtendedField::new(format!("{}∘λ", y.label()), Rank::SCALAR, Rep::Velocity, move |c, x, v| {
        let p = l.grad_v(c, x, v)?;
        y.raw(c, x, &p)
    })
}

/// Evaluates every identity at each point and keeps the worst residuals.
pub fn identity_suite(
    ctx: &LegendreContext,
    h: &Hamiltonian,
    chart: &ManifoldChart,
    points: &[TangentPoint],
) -> Result<IdentityReport> {
    let n = chart.dim();
    let l = &ctx.lagrangian;
    let lfield = l.as_field();
    let z = l.momentum_field();
    let zc = z.clone();
    // W(x, p') = Z(x, g⁻¹p')
    let w = ExtendedField::new("Z(x, g^-1 p)", Rank::COVECTOR, Rep::Momentum, move |c, x, pp| {
        let v = c.raise_index(x, pp)?;
        zc.raw(c, x, &v)
    });
    let hfield = h.as_field();
    let ytest = test_scalar();
    let composites = [(hfield.clone(), compose_with_legendre(&hfield, l)), (ytest.clone(), compose_with_legendre(&ytest, l))];

    let mut worst: [(f64, Option<TangentPoint>); 7] = std::array::from_fn(|_| (0.0, None));
    let mut record = |i: usize, r: f64, q: &TangentPoint| {
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if r > worst[i].0 || worst[i].1.is_none() {
            worst[i] = (r.max(worst[i].0), Some(q.clone()));
        }
    };
    let maxdiff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (u, w)| m.max((u - w).abs()));

    for q in points {
        let lp = CotangentPoint::new(q.x.clone(), chart.lower_index(&q.x, &q.v)?);
        let lam = legendre_forward(chart, l, q)?;
        let a = a_matrix(chart, l, q)?;
        let grad_z = spatial_gradient(chart, &z, q)?;

        // representation commutation
        let r1 = maxdiff(&grad_z.data, &spatial_gradient(chart, &w, &lp)?.data);
        let r2 = maxdiff(&velocity_gradient(chart, &z, q)?.data, &velocity_gradient_lowered(chart, &w, &lp)?.data);
        record(0, r1.max(r2), q);

        // composite chain rules
        let (mut rv, mut rs) = (0.0f64, 0.0f64);
        for (y, x) in &composites {
            let dy = velocity_gradient(chart, y, &lam)?;
            let lhs = velocity_gradient(chart, x, q)?;
            let rhs: Vec<f64> = (0..n).map(|r| (0..n).map(|k| a[(r, k)] * dy.data[k]).sum()).collect();
            rv = rv.max(maxdiff(&lhs.data, &rhs));

            let gy = spatial_gradient(chart, y, &lam)?;
            let lhs = spatial_gradient(chart, x, q)?;
            let rhs: Vec<f64> = (0..n)
                .map(|r| gy.data[r] + (0..n).map(|k| grad_z.data[k * n + r] * dy.data[k]).sum::<f64>())
                .collect();
            rs = rs.max(maxdiff(&lhs.data, &rhs));
        }
        record(1, rv, q);
        record(2, rs, q);

        // v = ∇̃H
        let dh = velocity_gradient(chart, &hfield, &lam)?;
        record(3, maxdiff(&dh.data, &q.v), q);

        // l = p·∇̃H − H equals L
        let lval = dot(&lam.p, &dh.data) - h.value(chart, &lam.x, &lam.p)?;
        record(4, (lval - l.value(chart, &q.x, &q.v)?).abs(), q);

        // ∇H + ∇L = 0
        let gh = spatial_gradient(chart, &hfield, &lam)?;
        let gl = spatial_gradient(chart, &lfield, FieldPoint::Tangent(q))?;
        record(5, gh.data.iter().zip(&gl.data).fold(0.0f64, |m, (u, w)| m.max((u + w).abs())), q);

        let back = legendre_inverse(ctx, chart, &lam.x, &lam.p, None)?;
        record(6, maxdiff(&back.v, &q.v), q);
    }

    Ok(IdentityReport {
        lagrangian: l.label().to_string(),
        chart: chart.name().to_string(),
        points: points.len(),
        residuals: IDENTITIES
            .iter()
            .zip(worst)
            .map(|(name, (r, p))| IdentityResidual {
                name,
                max_residual: r,
                worst_point: p,
            })
            .collect(),
    })
}
