//! Lagrangian systems: velocity Hessian `A`, regularity, the covariant and
//! classical Euler–Lagrange equations, and the equivalent Newtonian force.

use nalgebra::{DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::fields::{covariant_time_derivative, spatial_gradient, time_derivative, CurveSample, ExtendedField, Rep, TangentPoint};
use crate::integrator::{solve, IntegratorConfig, Trajectory};
use crate::manifold::{dot, mat_vec, ManifoldChart, SymMatrix, Velocity};
use crate::normal_shift::FiberwiseSymmetricLagrangian;
use crate::numdiff;
use crate::tensor::{Rank, Tensor};

/// Builtin Lagrangian families.
#[derive(Debug, Clone)]
pub enum LagrangianKind {
    /// `½|v|²`.
    Kinetic,
    /// `½|v|² − U(x)`.
    KineticMinusPotential { u: ScalarExpr },
    /// `½e^{−2f}|v|²`.
    ConformalKinetic { f: ScalarExpr },
    /// `φ(e^{−f}|v|)`.
    FiberwiseSymmetric(FiberwiseSymmetricLagrangian),
    /// Any scalar velocity-representation field; derivatives by FD.
    Custom(ExtendedField),
}

#[derive(Debug, Clone)]
pub struct Lagrangian {
    kind: LagrangianKind,
    label: String,
}

impl Lagrangian {
    pub fn kinetic() -> Self {
        Self {
            kind: LagrangianKind::Kinetic,
            label: "kinetic".into(),
        }
    }

    pub fn kinetic_minus_potential(u: ScalarExpr) -> Self {
        Self {
            label: format!("kinetic-minus-potential[U={u}]"),
            kind: LagrangianKind::KineticMinusPotential { u },
        }
    }

    pub fn conformal_kinetic(f: ScalarExpr) -> Self {
        Self {
            label: format!("conformal-kinetic[f={f}]"),
            kind: LagrangianKind::ConformalKinetic { f },
        }
    }

    pub fn fiberwise(l: FiberwiseSymmetricLagrangian) -> Self {
        Self {
            label: format!("fiberwise[{}]", l.label()),
            kind: LagrangianKind::FiberwiseSymmetric(l),
        }
    }

    pub fn custom(field: ExtendedField) -> Result<Self> {
        if field.rank() != Rank::SCALAR || field.rep() != Rep::Velocity {
            return Err(Error::RankMismatch("a Lagrangian is a velocity-representation scalar".into()));
        }
        Ok(Self {
            label: format!("custom[{}]", field.label()),
            kind: LagrangianKind::Custom(field),
        })
    }

    pub fn kind(&self) -> &LagrangianKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn check(chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<()> {
        chart.check_point(x)?;
        chart.check_fiber("velocity", v)
    }

    pub fn value(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<f64> {
        Self::check(chart, x, v)?;
        let half_vv = |c: &ManifoldChart| -> Result<f64> { Ok(0.5 * dot(v, &c.lower_index(x, v)?)) };
        match &self.kind {
            LagrangianKind::Kinetic => half_vv(chart),
            LagrangianKind::KineticMinusPotential { u } => Ok(half_vv(chart)? - u.eval(x)?),
            LagrangianKind::ConformalKinetic { f } => Ok((-2.0 * f.eval(x)?).exp() * half_vv(chart)?),
            LagrangianKind::FiberwiseSymmetric(l) => l.value(chart, x, v),
            LagrangianKind::Custom(field) => Ok(field.raw(chart, x, v)?[0]),
        }
    }

    /// `∂L/∂x^q` at fixed `v`.
    pub fn grad_x(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Self::check(chart, x, v)?;
        let kinetic = || -> Result<Vec<f64>> {
            Ok(chart
                .metric_partials_at(x)?
                .iter()
                .map(|d| 0.5 * dot(v, &mat_vec(d, v)))
                .collect())
        };
        match &self.kind {
            LagrangianKind::Kinetic => kinetic(),
            LagrangianKind::KineticMinusPotential { u } => {
                Ok(kinetic()?.iter().zip(u.gradient(x)?).map(|(k, du)| k - du).collect())
            }
            LagrangianKind::ConformalKinetic { f } => {
                let e = (-2.0 * f.eval(x)?).exp();
                let vv = dot(v, &chart.lower_index(x, v)?);
                Ok(kinetic()?
                    .iter()
                    .zip(f.gradient(x)?)
                    .map(|(k, df)| e * (k - df * vv))
                    .collect())
            }
            LagrangianKind::FiberwiseSymmetric(l) => l.grad_x(chart, x, v),
            LagrangianKind::Custom(field) => field.raw_x_partials(chart, x, v),
        }
    }

    /// `∂L/∂v^k`, the momentum `p_k`.
    pub fn grad_v(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Self::check(chart, x, v)?;
        match &self.kind {
            LagrangianKind::Kinetic | LagrangianKind::KineticMinusPotential { .. } => Ok(chart.lower_index(x, v)?.0),
            LagrangianKind::ConformalKinetic { f } => {
                let e = (-2.0 * f.eval(x)?).exp();
                Ok(chart.lower_index(x, v)?.iter().map(|c| e * c).collect())
            }
            LagrangianKind::FiberwiseSymmetric(l) => l.grad_v(chart, x, v),
            LagrangianKind::Custom(field) => field.raw_fiber_partials(chart, x, v),
        }
    }

    /// `A_ij = ∂²L/∂v^i∂v^j`: closed form for the builtin families.
    pub fn hess_vv(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<SymMatrix> {
        Self::check(chart, x, v)?;
        match &self.kind {
            LagrangianKind::Kinetic | LagrangianKind::KineticMinusPotential { .. } => chart.metric_at(x),
            LagrangianKind::ConformalKinetic { f } => Ok(chart.metric_at(x)? * (-2.0 * f.eval(x)?).exp()),
            LagrangianKind::FiberwiseSymmetric(l) => l.a_closed(chart, x, v),
            LagrangianKind::Custom(_) => a_matrix_fd(chart, self, &TangentPoint::new(x.to_vec(), v.to_vec())),
        }
    }

    /// `∂²L/∂x^q∂v^k`, layout `[k][q]`.
    pub fn hess_xv(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Self::check(chart, x, v)?;
        let n = x.len();
        let kinetic = |scale: f64| -> Result<Vec<f64>> {
            let mut out = vec![0.0; n * n];
            for (q, d) in chart.metric_partials_at(x)?.iter().enumerate() {
                for (k, c) in mat_vec(d, v).iter().enumerate() {
                    out[k * n + q] = scale * c;
                }
            }
            Ok(out)
        };
        match &self.kind {
            LagrangianKind::Kinetic | LagrangianKind::KineticMinusPotential { .. } => kinetic(1.0),
            LagrangianKind::ConformalKinetic { f } => {
                let e = (-2.0 * f.eval(x)?).exp();
                let mut out = kinetic(e)?;
                let low = chart.lower_index(x, v)?;
                let df = f.gradient(x)?;
                for k in 0..n {
                    for q in 0..n {
                        out[k * n + q] -= 2.0 * e * df[q] * low[k];
                    }
                }
                Ok(out)
            }
            LagrangianKind::FiberwiseSymmetric(l) => l.hess_xv(chart, x, v),
            LagrangianKind::Custom(_) => numdiff::jacobian(x, numdiff::second_step, |xs| {
                if !chart.in_domain(xs) {
                    return Err(Error::FdStep { x: x.to_vec() });
                }
                self.grad_v(chart, xs, v)
            }),
        }
    }

    /// `L` as an extended scalar field with the partials above.
    pub fn as_field(&self) -> ExtendedField {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        ExtendedField::new(format!("L[{}]", self.label), Rank::SCALAR, Rep::Velocity, move |ch, x, v| {
            Ok(vec![a.value(ch, x, v)?])
        })
        .with_x_partials(move |ch, x, v| b.grad_x(ch, x, v))
        .with_fiber_partials(move |ch, x, v| c.grad_v(ch, x, v))
    }

    /// The covector field `p_k = ∇̃_k L`.
    pub fn momentum_field(&self) -> ExtendedField {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        ExtendedField::new(format!("dL/dv[{}]", self.label), Rank::COVECTOR, Rep::Velocity, move |ch, x, v| {
            a.grad_v(ch, x, v)
        })
        .with_x_partials(move |ch, x, v| b.hess_xv(ch, x, v))
        .with_fiber_partials(move |ch, x, v| {
            let m = c.hess_vv(ch, x, v)?;
            Ok(m.transpose().as_slice().to_vec())
        })
    }
}

/// `A` at `q`, from the Lagrangian's own Hessian.
pub fn a_matrix(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<SymMatrix> {
    l.hess_vv(chart, &q.x, &q.v)
}

/// `A` as the central-difference Jacobian of `∂L/∂v`, symmetrized.
pub fn a_matrix_fd(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<SymMatrix> {
    let n = chart.dim();
    let jac = match l.kind() {
        LagrangianKind::Custom(field) => {
            let field = field.clone();
            numdiff::jacobian(&q.v, numdiff::second_step, |vs| field.raw_fiber_partials(chart, &q.x, vs))?
        }
        _ => numdiff::jacobian(&q.v, numdiff::first_step, |vs| l.grad_v(chart, &q.x, vs))?,
    };
    let m = SymMatrix::from_row_slice(n, n, &jac);
    Ok((&m + m.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub det_a: f64,
    pub min_abs_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub tolerance: f64,
    pub is_regular: bool,
    pub is_positive: bool,
}

/// `1e-10·(max |A_ij|)^n`.
pub fn regularity_tolerance(a: &SymMatrix) -> f64 {
    1e-10 * a.amax().powi(a.nrows() as i32)
}

pub fn regularity_of(a: &SymMatrix) -> RegularityReport {
    let det_a = a.determinant();
    let tolerance = regularity_tolerance(a);
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let min_abs = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    let max_abs = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min_eig = eig.iter().fold(f64::INFINITY, |m, e| m.min(*e));
    let max_eig = eig.iter().fold(f64::NEG_INFINITY, |m, e| m.max(*e));
    let is_regular = det_a.abs() > tolerance;
    RegularityReport {
        det_a,
        min_abs_eigenvalue: min_abs,
        max_abs_eigenvalue: max_abs,
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        tolerance,
        is_regular,
        is_positive: is_regular && min_eig > 0.0,
    }
}

pub fn regularity(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<RegularityReport> {
    Ok(regularity_of(&a_matrix(chart, l, q)?))
}

/// Solves `A·y = b` by LU with partial pivoting after a regularity check.
pub(crate) fn solve_regular(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let tolerance = regularity_tolerance(a);
    let det = a.determinant();
    if !(det.abs() > tolerance) {
        return Err(Error::SingularA { det, tolerance });
    }
    let y = a
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or(Error::SingularA { det, tolerance })?;
    Ok(y.as_slice().to_vec())
}

/// Force `F^s` from `Σ_s A_ks F^s = ∇_k L − Σ_s (∇_s∇̃_k L)·v^s`.
pub fn force_from_lagrangian(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<Velocity> {
    let n = chart.dim();
    let grad_l = spatial_gradient(chart, &l.as_field(), q)?;
    // [k][s]: ∇_s of the covector ∇̃_k L
    let grad_p = spatial_gradient(chart, &l.momentum_field(), q)?;
    let rhs: Vec<f64> = (0..n)
        .map(|k| grad_l.data[k] - (0..n).map(|s| grad_p.data[k * n + s] * q.v[s]).sum::<f64>())
        .collect();
    let a = a_matrix(chart, l, q)?;
    Ok(Velocity(solve_regular(&a, &rhs)?))
}

/// Residual `∇_t(∇̃_k L) − ∇_k L` along a sampled natural lift.
pub fn el_residual(chart: &ManifoldChart, l: &Lagrangian, samples: &[CurveSample]) -> Result<Vec<Vec<f64>>> {
    let mfield = l.momentum_field();
    let lfield = l.as_field();
    let p: Vec<Tensor> = samples.iter().map(|s| mfield.eval(chart, &s.state)).collect::<Result<_>>()?;
    let dp = covariant_time_derivative(chart, samples, &p)?;
    samples
        .iter()
        .zip(&dp)
        .map(|(s, d)| {
            let g = spatial_gradient(chart, &lfield, &s.state)?;
            Ok(d.data.iter().zip(&g.data).map(|(a, b)| a - b).collect())
        })
        .collect()
}

/// Residual `d/dt(∂L/∂v^k) − ∂L/∂x^k` in plain coordinates.
pub fn classical_el_residual(chart: &ManifoldChart, l: &Lagrangian, samples: &[CurveSample]) -> Result<Vec<Vec<f64>>> {
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let p: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| l.grad_v(chart, &s.state.x, &s.state.v))
        .collect::<Result<_>>()?;
    let dp = time_derivative(&times, &p)?;
    samples
        .iter()
        .zip(&dp)
        .map(|(s, d)| {
            let gx = l.grad_x(chart, &s.state.x, &s.state.v)?;
            Ok(d.iter().zip(&gx).map(|(a, b)| a - b).collect())
        })
        .collect()
}

/// Plain acceleration from the expanded classical equations
/// `A·v̇ = ∂L/∂x − (∂²L/∂x∂v)·v`.
pub fn lagrangian_rhs(chart: &ManifoldChart, l: &Lagrangian, q: &TangentPoint) -> Result<(Velocity, Velocity)> {
    let n = chart.dim();
    let gx = l.grad_x(chart, &q.x, &q.v)?;
    let hxv = l.hess_xv(chart, &q.x, &q.v)?;
    let b: Vec<f64> = (0..n)
        .map(|k| gx[k] - (0..n).map(|s| hxv[k * n + s] * q.v[s]).sum::<f64>())
        .collect();
    let a = a_matrix(chart, l, q)?;
    Ok((q.v.clone(), Velocity(solve_regular(&a, &b)?)))
}

/// Integrates the classical Euler–Lagrange equations. Samples carry `|v|`
/// and the energy `h`.
pub fn integrate_lagrangian(chart: &ManifoldChart, l: &Lagrangian, q0: &TangentPoint, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let n = chart.dim();
    chart.check_fiber("velocity", &q0.v)?;
    let y0: Vec<f64> = q0.x.iter().chain(q0.v.iter()).copied().collect();
    let (raw, status) = solve(chart, &y0, cfg, |y: &[f64]| {
        let q = TangentPoint::new(y[..n].to_vec(), y[n..].to_vec());
        let (dx, dv) = lagrangian_rhs(chart, l, &q)?;
        Ok(dx.0.into_iter().chain(dv.0).collect())
    })?;
    let mut tr = Trajectory::from_raw(Rep::Velocity, n, raw, status);
    tr.attach_speed(chart)?;
    tr.attach_energy(|x, v| crate::hamilton::energy_h(chart, l, &TangentPoint::new(x.to_vec(), v.to_vec())))?;
    Ok(tr)
}
