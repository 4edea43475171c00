//! Newtonian systems `∇_t v = F(x, v)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::fields::TangentPoint;
use crate::integrator::{solve, IntegratorConfig, Trajectory};
use crate::lagrange::{force_from_lagrangian, Lagrangian};
use crate::manifold::{ManifoldChart, Momentum, Velocity};
use crate::normal_shift::{force_conformal, force_normal_shift, force_spherical, FiberwiseSymmetricLagrangian, NormalShiftForce};

/// Force value as returned by a field's evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceValue {
    Contravariant(Velocity),
    /// Lowered components `F_r`; raised on evaluation.
    Covariant(Momentum),
}

type ForceFn = Arc<dyn Fn(&ManifoldChart, &TangentPoint) -> Result<ForceValue> + Send + Sync>;

/// Extended vector field `F` of a Newtonian system.
#[derive(Clone)]
pub struct ForceField {
    label: String,
    eval_fn: ForceFn,
}

impl fmt::Debug for ForceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForceField").field("label", &self.label).finish()
    }
}

impl ForceField {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&ManifoldChart, &TangentPoint) -> Result<ForceValue> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            eval_fn: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `F = 0`.
    pub fn zero() -> Self {
        Self::new("geodesic", |c, _| Ok(ForceValue::Contravariant(Velocity(vec![0.0; c.dim()]))))
    }

    /// `F_r = −∂_r U`.
    pub fn potential(u: ScalarExpr) -> Self {
        Self::new(format!("potential[{u}]"), move |_, q| {
            Ok(ForceValue::Covariant(Momentum(u.gradient(&q.x)?.iter().map(|d| -d).collect())))
        })
    }

    /// Force of a regular Lagrangian, from the covariant Euler–Lagrange equations.
    pub fn from_lagrangian(l: Lagrangian) -> Self {
        Self::new(format!("lagrangian[{}]", l.label()), move |c, q| {
            Ok(ForceValue::Contravariant(force_from_lagrangian(c, &l, q)?))
        })
    }

    /// Closed-form force of a fiberwise spherically symmetric Lagrangian.
    pub fn spherical(l: FiberwiseSymmetricLagrangian) -> Self {
        Self::new(format!("spherical[{}]", l.label()), move |c, q| {
            Ok(ForceValue::Covariant(force_spherical(c, &l, q)?))
        })
    }

    /// `F_r = −|v|²∂_r f + 2(∂f·v)v_r`.
    pub fn conformal(f: ScalarExpr) -> Self {
        Self::new(format!("conformal[{f}]"), move |c, q| {
            Ok(ForceValue::Covariant(force_conformal(c, &f, q)?))
        })
    }

    pub fn normal_shift(ns: NormalShiftForce) -> Self {
        Self::new(format!("normal_shift[{}]", ns.label()), move |c, q| {
            Ok(ForceValue::Covariant(force_normal_shift(c, &ns, q)?))
        })
    }

    /// Contravariant components `F^k` at `q`.
    pub fn eval(&self, chart: &ManifoldChart, q: &TangentPoint) -> Result<Velocity> {
        chart.check_point(&q.x)?;
        chart.check_fiber("velocity", &q.v)?;
        let out = match (self.eval_fn)(chart, q)? {
            ForceValue::Contravariant(v) => v,
            ForceValue::Covariant(p) => {
                chart.check_fiber("force", &p)?;
                chart.raise_index(&q.x, &p)?
            }
        };
        if out.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                what: "force",
                expected: chart.dim(),
                got: out.len(),
            });
        }
        if out.iter().any(|c| !c.is_finite()) {
            return Err(Error::ForceSingular {
                x: q.x.to_vec(),
                reason: format!("`{}` is not finite", self.label),
            });
        }
        Ok(out)
    }

    /// Lowered components `F_r` at `q`.
    pub fn eval_covariant(&self, chart: &ManifoldChart, q: &TangentPoint) -> Result<Momentum> {
        let f = self.eval(chart, q)?;
        chart.lower_index(&q.x, &f)
    }
}

/// Right-hand side of `ẋ = v`, `v̇^k = F^k − Γ^k_ij v^i v^j`.
pub fn newtonian_rhs(chart: &ManifoldChart, force: &ForceField, q: &TangentPoint) -> Result<(Velocity, Velocity)> {
    let f = force.eval(chart, q)?;
    let gamma = chart.christoffel_at(&q.x)?;
    let gvv = gamma.contract_twice(&q.v, &q.v);
    let dv = f.iter().zip(&gvv).map(|(a, b)| a - b).collect::<Vec<_>>();
    Ok((q.v.clone(), Velocity(dv)))
}

/// The geodesic flow of `chart`: the zero force field.
pub fn geodesic_system(_chart: &ManifoldChart) -> ForceField {
    ForceField::zero()
}

/// Integrates the Newtonian system from `q0`. Samples carry `|v|` and the
/// covariant acceleration `∇_t v = F`.
pub fn integrate(chart: &ManifoldChart, force: &ForceField, q0: &TangentPoint, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let n = chart.dim();
    chart.check_fiber("velocity", &q0.v)?;
    let y0: Vec<f64> = q0.x.iter().chain(q0.v.iter()).copied().collect();
    let (raw, status) = solve(chart, &y0, cfg, |y: &[f64]| {
        let q = TangentPoint::new(y[..n].to_vec(), y[n..].to_vec());
        let (dx, dv) = newtonian_rhs(chart, force, &q)?;
        Ok(dx.0.into_iter().chain(dv.0).collect())
    })?;
    let mut tr = Trajectory::from_raw(crate::fields::Rep::Velocity, n, raw, status);
    tr.attach_speed(chart)?;
    tr.attach_accel(|x, v| Ok(force.eval(chart, &TangentPoint::new(x.to_vec(), v.to_vec()))?.0))?;
    Ok(tr)
}
