//! Fiberwise spherically symmetric Lagrangians and normal-shift force fields.
//!
//! A scalar is fiberwise spherically symmetric when it depends on `v` only
//! through `s = |v|`. Primes denote `∂/∂s`. With the projectors
//! `Q^i_k = v^i v_k/s²` and `P = δ − Q` the velocity Hessian of such an `L`
//! is `A = L''·Q + (L'/s)·P` (lowered), so `A⁻¹ = Q/L'' + (s/L')·P`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::fields::TangentPoint;
use crate::integrator::{IntegratorConfig, Trajectory};
use crate::manifold::{dot, mat_vec, speed_with, ManifoldChart, Momentum, SymMatrix};
use crate::newton::{integrate, ForceField};

/// Tolerance on `|L'|`, `|L''|` and `|W'|`.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

/// Smallest admissible `|v|` at `x`: `1e-8·max(1, |x|_∞)`.
pub fn v_min(x: &[f64]) -> f64 {
    1e-8 * x.iter().fold(1.0f64, |m, c| m.max(c.abs()))
}

fn checked_speed(g: &SymMatrix, x: &[f64], v: &[f64]) -> Result<f64> {
    let s = speed_with(g, v)?;
    let vmin = v_min(x);
    if !(s > vmin) {
        return Err(Error::ZeroVelocity { speed: s, v_min: vmin });
    }
    Ok(s)
}

/// `L(x, s)` with its `s`-derivatives and `x`-partials at fixed `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub l: f64,
    pub d1: f64,
    pub d2: f64,
    pub l_x: Vec<f64>,
    pub d1_x: Vec<f64>,
}

/// `L = φ(C(x)·|v|)` with `C = e^{−f}`; `φ` is an expression in `z`.
#[derive(Clone, PartialEq)]
pub struct FiberwiseSymmetricLagrangian {
    phi: ScalarExpr,
    f: ScalarExpr,
}

impl fmt::Debug for FiberwiseSymmetricLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FiberwiseSymmetricLagrangian({})", self.label())
    }
}

impl FiberwiseSymmetricLagrangian {
    pub fn new(phi: &str, f: ScalarExpr) -> Result<Self> {
        let phi = ScalarExpr::parse_with_aliases(phi, &[("z", 1)])?;
        if phi.arity() > 1 {
            return Err(Error::UnboundVariable {
                index: phi.arity(),
                dim: 1,
            });
        }
        Ok(Self { phi, f })
    }

    /// `φ(z) = z²/2`, i.e. `L = ½e^{−2f}|v|²`.
    pub fn quadratic(f: ScalarExpr) -> Self {
        Self::new("z^2/2", f).expect("builtin profile")
    }

    /// `φ(z) = z²/2 + z⁴`.
    pub fn quartic(f: ScalarExpr) -> Self {
        Self::new("z^2/2 + z^4", f).expect("builtin profile")
    }

    /// `φ(z) = z`: homogeneous of degree one, never regular.
    pub fn linear(f: ScalarExpr) -> Self {
        Self::new("z", f).expect("builtin profile")
    }

    pub fn label(&self) -> String {
        format!("phi[{}](exp(-({}))|v|)", self.phi, self.f)
    }

    pub fn f(&self) -> &ScalarExpr {
        &self.f
    }

    /// Profile values at `(x, s)`.
    pub fn profile(&self, x: &[f64], s: f64) -> Result<Profile> {
        let c = (-self.f.eval(x)?).exp();
        let dc: Vec<f64> = self.f.gradient(x)?.iter().map(|d| -c * d).collect();
        let (phi, dphi, ddphi) = self.phi.jet(&[c * s])?;
        let (p1, p2) = (dphi[0], ddphi[0]);
        Ok(Profile {
            l: phi,
            d1: c * p1,
            d2: c * c * p2,
            l_x: dc.iter().map(|d| p1 * s * d).collect(),
            d1_x: dc.iter().map(|d| d * (p1 + c * s * p2)).collect(),
        })
    }

    fn at(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<(SymMatrix, f64, Profile)> {
        chart.check_fiber("velocity", v)?;
        let g = chart.metric_at(x)?;
        let s = checked_speed(&g, x, v).map_err(|e| Error::SingularSet(e.to_string()))?;
        let prof = self.profile(x, s)?;
        Ok((g, s, prof))
    }

    pub fn value(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.at(chart, x, v)?.2.l)
    }

    /// `∂L/∂v^k = L'·v_k/s`.
    pub fn grad_v(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (g, s, prof) = self.at(chart, x, v)?;
        Ok(mat_vec(&g, v).iter().map(|vk| prof.d1 * vk / s).collect())
    }

    /// `∂L/∂x^q` at fixed `v` (so `s` moves with the metric).
    pub fn grad_x(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (_, s, prof) = self.at(chart, x, v)?;
        let dg = chart.metric_partials_at(x)?;
        Ok(dg
            .iter()
            .enumerate()
            .map(|(q, d)| prof.l_x[q] + prof.d1 * 0.5 * dot(v, &mat_vec(d, v)) / s)
            .collect())
    }

    /// `∂²L/∂x^q∂v^k`, layout `[k][q]`.
    pub fn hess_xv(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (g, s, prof) = self.at(chart, x, v)?;
        let n = x.len();
        let dg = chart.metric_partials_at(x)?;
        let low = mat_vec(&g, v);
        let mut out = vec![0.0; n * n];
        for (q, d) in dg.iter().enumerate() {
            let dlow = mat_vec(d, v);
            let ds = 0.5 * dot(v, &dlow) / s;
            let dd1 = prof.d1_x[q] + prof.d2 * ds;
            for k in 0..n {
                out[k * n + q] = dd1 * low[k] / s + prof.d1 / s * dlow[k] - prof.d1 * low[k] * ds / (s * s);
            }
        }
        Ok(out)
    }

    /// Closed-form `A = L''·Q + (L'/s)·P` (lowered), without a degeneracy check.
    pub fn a_closed(&self, chart: &ManifoldChart, x: &[f64], v: &[f64]) -> Result<SymMatrix> {
        let (g, s, prof) = self.at(chart, x, v)?;
        let low = mat_vec(&g, v);
        let n = x.len();
        Ok(SymMatrix::from_fn(n, n, |i, k| {
            let q = low[i] * low[k] / (s * s);
            prof.d2 * q + prof.d1 / s * (g[(i, k)] - q)
        }))
    }
}

/// Mixed projectors `(Q, P)` onto `span(v)` and its `g`-orthogonal complement.
pub fn projectors(chart: &ManifoldChart, q: &TangentPoint) -> Result<(SymMatrix, SymMatrix)> {
    chart.check_fiber("velocity", &q.v)?;
    let g = chart.metric_at(&q.x)?;
    let s = checked_speed(&g, &q.x, &q.v)?;
    let low = mat_vec(&g, &q.v);
    let n = chart.dim();
    let qm = SymMatrix::from_fn(n, n, |i, k| q.v[i] * low[k] / (s * s));
    let pm = SymMatrix::identity(n, n) - &qm;
    Ok((qm, pm))
}

fn check_degeneracy(prof: &Profile) -> Result<()> {
    if prof.d1.abs() < DEGENERACY_TOLERANCE || prof.d2.abs() < DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateLagrangian {
            d1: prof.d1,
            d2: prof.d2,
        });
    }
    Ok(())
}

/// Closed-form `A_sk`; errors when `L'` or `L''` vanish.
pub fn symmetric_a_matrix(chart: &ManifoldChart, l: &FiberwiseSymmetricLagrangian, q: &TangentPoint) -> Result<SymMatrix> {
    let (_, _, prof) = l.at(chart, &q.x, &q.v)?;
    check_degeneracy(&prof)?;
    l.a_closed(chart, &q.x, &q.v)
}

/// Closed-form `B^ik = Q^ik/L'' + (s/L')·P^ik`.
pub fn symmetric_b_matrix(chart: &ManifoldChart, l: &FiberwiseSymmetricLagrangian, q: &TangentPoint) -> Result<SymMatrix> {
    let (_, s, prof) = l.at(chart, &q.x, &q.v)?;
    check_degeneracy(&prof)?;
    let gi = chart.inverse_metric_at(&q.x)?;
    let n = chart.dim();
    Ok(SymMatrix::from_fn(n, n, |i, k| {
        let qq = q.v[i] * q.v[k] / (s * s);
        qq / prof.d2 + s / prof.d1 * (gi[(i, k)] - qq)
    }))
}

/// Spatial gradients `(∇_s L, ∇_s L')` of a fiberwise symmetric Lagrangian,
/// taken as `x`-partials at fixed `|v|`.
pub fn spherical_spatial_gradients(
    chart: &ManifoldChart,
    l: &FiberwiseSymmetricLagrangian,
    q: &TangentPoint,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, _, prof) = l.at(chart, &q.x, &q.v)?;
    Ok((prof.l_x, prof.d1_x))
}

/// Force `F_r` of a fiberwise symmetric Lagrangian in closed form:
///
/// `F_r = −(∇_sL'/L'' − ∇_sL/(s·L''))·v^s·v_r/s − s·(∇_sL/L')·(v^s v_r/s² − δ^s_r)`.
pub fn force_spherical(chart: &ManifoldChart, l: &FiberwiseSymmetricLagrangian, q: &TangentPoint) -> Result<Momentum> {
    chart.check_fiber("velocity", &q.v)?;
    let g = chart.metric_at(&q.x)?;
    let s = checked_speed(&g, &q.x, &q.v)?;
    let prof = l.profile(&q.x, s)?;
    check_degeneracy(&prof)?;
    let low = mat_vec(&g, &q.v);
    let radial: f64 = (0..q.v.len())
        .map(|j| (prof.d1_x[j] / prof.d2 - prof.l_x[j] / (s * prof.d2)) * q.v[j])
        .sum();
    let grad_dot_v: f64 = (0..q.v.len()).map(|j| prof.l_x[j] / prof.d1 * q.v[j]).sum();
    Ok(Momentum(
        (0..q.v.len())
            .map(|r| -radial * low[r] / s - s * (grad_dot_v * low[r] / (s * s) - prof.l_x[r] / prof.d1))
            .collect(),
    ))
}

/// The `h(W)` of the general normal-shift force.
#[derive(Debug, Clone, PartialEq)]
pub enum HProfile {
    Zero,
    W,
    WSquared,
    SinW,
    /// Expression in the variable `w`.
    Expr(ScalarExpr),
}

impl HProfile {
    /// Builtin names `0`, `w`, `w^2`, `sin(w)`; anything else parses as an
    /// expression in `w`.
    pub fn parse(source: &str) -> Result<Self> {
        Ok(match source.trim() {
            "0" | "zero" => HProfile::Zero,
            "w" => HProfile::W,
            "w^2" | "w2" => HProfile::WSquared,
            "sin(w)" | "sin" => HProfile::SinW,
            other => {
                let e = ScalarExpr::parse_with_aliases(other, &[("w", 1)])?;
                if e.arity() > 1 {
                    return Err(Error::UnboundVariable {
                        index: e.arity(),
                        dim: 1,
                    });
                }
                HProfile::Expr(e)
            }
        })
    }

    pub fn eval(&self, w: f64) -> Result<f64> {
        Ok(match self {
            HProfile::Zero => 0.0,
            HProfile::W => w,
            HProfile::WSquared => w * w,
            HProfile::SinW => w.sin(),
            HProfile::Expr(e) => e.eval(&[w])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShiftMode {
    /// `F_r = −s·(∇_sW/W')·(2v^s v_r/s² − δ^s_r)`.
    Basic,
    /// Basic force plus `(h(W)/W')·v_r/s`.
    General(HProfile),
    /// `F_r = −s²∂_r f + 2(∂f·v)v_r`.
    Conformal(ScalarExpr),
}

/// Normal-shift force field built from a profile `W(x, |v|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalShiftForce {
    dim: usize,
    w: ScalarExpr,
    mode: ShiftMode,
}

impl NormalShiftForce {
    /// `w_source` is an expression in `x1..xn` and `v` (the speed).
    pub fn new(dim: usize, w_source: &str, mode: ShiftMode) -> Result<Self> {
        let w = ScalarExpr::parse_with_aliases(w_source, &[("v", dim + 1)])?;
        if w.arity() > dim + 1 {
            return Err(Error::UnboundVariable {
                index: w.arity(),
                dim: dim + 1,
            });
        }
        Ok(Self { dim, w, mode })
    }

    pub fn basic(dim: usize, w_source: &str) -> Result<Self> {
        Self::new(dim, w_source, ShiftMode::Basic)
    }

    pub fn general(dim: usize, w_source: &str, h: HProfile) -> Result<Self> {
        Self::new(dim, w_source, ShiftMode::General(h))
    }

    /// Basic force with `W = |v|·e^{−f}`.
    pub fn from_conformal_factor(dim: usize, f: &ScalarExpr) -> Result<Self> {
        f.check_dim(dim)?;
        Self::basic(dim, &format!("v*exp(-({}))", f.source()))
    }

    /// Evaluates through the conformal closed form instead of `W`.
    pub fn conformal(dim: usize, f: ScalarExpr) -> Result<Self> {
        let w = format!("v*exp(-({}))", f.source());
        Self::new(dim, &w, ShiftMode::Conformal(f))
    }

    pub fn mode(&self) -> &ShiftMode {
        &self.mode
    }

    pub fn w(&self) -> &ScalarExpr {
        &self.w
    }

    pub fn label(&self) -> String {
        match &self.mode {
            ShiftMode::Basic => format!("W={}", self.w),
            ShiftMode::General(h) => format!("W={}, h={h:?}", self.w),
            ShiftMode::Conformal(f) => format!("conformal f={f}"),
        }
    }

    /// `(W, ∂W/∂x at fixed s, W')` at `(x, s)`.
    pub fn w_profile(&self, x: &[f64], s: f64) -> Result<(f64, Vec<f64>, f64)> {
        let mut xs = x.to_vec();
        xs.push(s);
        let w = self.w.eval(&xs)?;
        let mut grad = self.w.gradient(&xs)?;
        let dw = grad.pop().unwrap_or(0.0);
        Ok((w, grad, dw))
    }
}

/// `F_r = −|v|²·∂_r f + 2(∂_s f·v^s)·v_r`.
pub fn force_conformal(chart: &ManifoldChart, f: &ScalarExpr, q: &TangentPoint) -> Result<Momentum> {
    chart.check_fiber("velocity", &q.v)?;
    let g = chart.metric_at(&q.x)?;
    let df = f.gradient(&q.x)?;
    let low = mat_vec(&g, &q.v);
    let s2 = dot(&q.v, &low);
    let fv = dot(&df, &q.v);
    Ok(Momentum((0..q.v.len()).map(|r| -s2 * df[r] + 2.0 * fv * low[r]).collect()))
}

/// Normal-shift force `F_r` for the basic and general families.
pub fn force_normal_shift(chart: &ManifoldChart, ns: &NormalShiftForce, q: &TangentPoint) -> Result<Momentum> {
    if chart.dim() != ns.dim {
        return Err(Error::DimensionMismatch {
            what: "normal-shift force dimension",
            expected: chart.dim(),
            got: ns.dim,
        });
    }
    if let ShiftMode::Conformal(f) = &ns.mode {
        return force_conformal(chart, f, q);
    }
    chart.check_fiber("velocity", &q.v)?;
    let g = chart.metric_at(&q.x)?;
    let s = checked_speed(&g, &q.x, &q.v)?;
    let (w, grad, dw) = ns.w_profile(&q.x, s)?;
    if dw.abs() < DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateW { dw });
    }
    let low = mat_vec(&g, &q.v);
    let n = q.v.len();
    let along: f64 = (0..n).map(|j| grad[j] / dw * q.v[j]).sum();
    let mut out: Vec<f64> = (0..n)
        .map(|r| -s * (2.0 * along * low[r] / (s * s) - grad[r] / dw))
        .collect();
    if let ShiftMode::General(h) = &ns.mode {
        if *h != HProfile::Zero {
            let hw = h.eval(w)?;
            for r in 0..n {
                out[r] += hw / dw * low[r] / s;
            }
        }
    }
    Ok(Momentum(out))
}

/// Splits a lowered force into its `Q` (along `v`) and `P` (normal) parts.
pub fn split_force(chart: &ManifoldChart, q: &TangentPoint, force: &[f64]) -> Result<(Momentum, Momentum)> {
    let (qm, pm) = projectors(chart, q)?;
    // lowered covectors transform with the transpose of the mixed projector
    let fq = qm.transpose() * nalgebra::DVector::from_column_slice(force);
    let fp = pm.transpose() * nalgebra::DVector::from_column_slice(force);
    Ok((Momentum(fq.as_slice().to_vec()), Momentum(fp.as_slice().to_vec())))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalCheck {
    /// `max_t |x_F(t) − x_g̃(t)|_∞`.
    pub sup_distance: f64,
    /// Drift of the `g̃`-speed `e^{−f}|v|` along the force trajectory; zero
    /// when both flows share their time parametrization.
    pub parameter_discrepancy: f64,
    pub samples: usize,
}

/// Integrates the conformal force on `chart` and the geodesic flow of
/// `e^{−2f}·g` from the same `(x, v)` and compares the two.
pub fn conformal_geodesic_check(
    chart: &ManifoldChart,
    f: &ScalarExpr,
    q0: &TangentPoint,
    cfg: &IntegratorConfig,
) -> Result<ConformalCheck> {
    let forced = integrate(chart, &ForceField::conformal(f.clone()), q0, cfg)?;
    let scaled = chart.conformally_scaled(f.clone())?;
    let geodesic = integrate(&scaled, &ForceField::zero(), q0, cfg)?;
    let sup_distance = forced.sup_distance(&geodesic)?;
    let parameter_discrepancy = tilde_speed_drift(&scaled, &forced)?;
    Ok(ConformalCheck {
        sup_distance,
        parameter_discrepancy,
        samples: forced.len(),
    })
}

fn tilde_speed_drift(scaled: &ManifoldChart, tr: &Trajectory) -> Result<f64> {
    let s0 = scaled.speed(&tr.samples[0].x, &tr.samples[0].fiber)?;
    let mut worst: f64 = 0.0;
    for s in &tr.samples {
        worst = worst.max((scaled.speed(&s.x, &s.fiber)? - s0).abs());
    }
    Ok(worst)
}
