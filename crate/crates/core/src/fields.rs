//! Extended tensor fields on the tangent and cotangent bundles.
//!
//! An extended field assigns to each point `q = (x, v)` of `TM` (velocity
//! representation) or `q̃ = (x, p)` of `T*M` (momentum representation) a
//! tensor at the base point `x`. Two derivatives act on such fields:
//!
//! * the spatial gradient `∇`, a covariant derivative in base directions that
//!   corrects for the fiber variable moving under parallel transport;
//! * the velocity gradient `∇̃`, the plain fiber derivative.
//!
//! Derivative indices are appended as the *last* lower slot (or, for the
//! raised momentum form of `∇̃`, as the last upper slot).

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::manifold::{mat_vec, Christoffel, Coord, ManifoldChart, Momentum, Velocity};
use crate::numdiff;
use crate::tensor::{contract, Rank, Slot, Tensor};

/// Which bundle a field's fiber variable lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rep {
    /// Function of `(x, v)`, contravariant fiber components.
    Velocity,
    /// Function of `(x, p)`, covariant fiber components.
    Momentum,
}

impl Rep {
    fn name(self) -> &'static str {
        match self {
            Rep::Velocity => "v-rep",
            Rep::Momentum => "p-rep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentPoint {
    pub x: Coord,
    pub v: Velocity,
}

impl TangentPoint {
    pub fn new(x: impl Into<Coord>, v: impl Into<Velocity>) -> Self {
        Self {
            x: x.into(),
            v: v.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CotangentPoint {
    pub x: Coord,
    pub p: Momentum,
}

impl CotangentPoint {
    pub fn new(x: impl Into<Coord>, p: impl Into<Momentum>) -> Self {
        Self {
            x: x.into(),
            p: p.into(),
        }
    }
}

/// A point of either bundle; fields check it against their representation.
#[derive(Debug, Clone, Copy)]
pub enum FieldPoint<'a> {
    Tangent(&'a TangentPoint),
    Cotangent(&'a CotangentPoint),
}

impl<'a> From<&'a TangentPoint> for FieldPoint<'a> {
    fn from(q: &'a TangentPoint) -> Self {
        FieldPoint::Tangent(q)
    }
}

impl<'a> From<&'a CotangentPoint> for FieldPoint<'a> {
    fn from(q: &'a CotangentPoint) -> Self {
        FieldPoint::Cotangent(q)
    }
}

impl FieldPoint<'_> {
    fn rep(&self) -> Rep {
        match self {
            FieldPoint::Tangent(_) => Rep::Velocity,
            FieldPoint::Cotangent(_) => Rep::Momentum,
        }
    }

    fn parts(&self) -> (&[f64], &[f64]) {
        match self {
            FieldPoint::Tangent(q) => (&q.x, &q.v),
            FieldPoint::Cotangent(q) => (&q.x, &q.p),
        }
    }
}

/// Sample of a curve's natural lift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSample {
    pub t: f64,
    pub state: TangentPoint,
    /// Covariant acceleration `∇_t v`, when known.
    pub accel: Option<Velocity>,
}

/// `(chart, x, fiber) → components`.
pub type FieldFn = Arc<dyn Fn(&ManifoldChart, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Tensor-valued function on `TM` or `T*M`.
#[derive(Clone)]
pub struct ExtendedField {
    label: String,
    rank: Rank,
    rep: Rep,
    eval_fn: FieldFn,
    x_partials: Option<FieldFn>,
    fiber_partials: Option<FieldFn>,
}

impl fmt::Debug for ExtendedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtendedField")
            .field("label", &self.label)
            .field("rank", &self.rank)
            .field("rep", &self.rep)
            .field("analytic_x_partials", &self.x_partials.is_some())
            .field("analytic_fiber_partials", &self.fiber_partials.is_some())
            .finish()
    }
}

impl ExtendedField {
    pub fn new<F>(label: impl Into<String>, rank: Rank, rep: Rep, eval: F) -> Self
    where
        F: Fn(&ManifoldChart, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            rank,
            rep,
            eval_fn: Arc::new(eval),
            x_partials: None,
            fiber_partials: None,
        }
    }

    /// Analytic `∂X/∂x^q`, layout `[component][q]`.
    pub fn with_x_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&ManifoldChart, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        self.x_partials = Some(Arc::new(f));
        self
    }

    /// Analytic `∂X/∂v^q` (or `∂X/∂p_q`), layout `[component][q]`.
    pub fn with_fiber_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&ManifoldChart, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        self.fiber_partials = Some(Arc::new(f));
        self
    }

    /// Drops analytic partials so both derivatives go through FD.
    pub fn without_analytic_partials(&self) -> Self {
        Self {
            x_partials: None,
            fiber_partials: None,
            ..self.clone()
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn rep(&self) -> Rep {
        self.rep
    }

    /// Velocity-independent scalar `U(x)` with exact partials.
    pub fn coordinate_scalar(expr: ScalarExpr, rep: Rep) -> Self {
        let e1 = expr.clone();
        let e2 = expr.clone();
        Self::new(format!("scalar[{expr}]"), Rank::SCALAR, rep, move |_, x, _| {
            Ok(vec![expr.eval(x)?])
        })
        .with_x_partials(move |_, x, _| e1.gradient(x))
        .with_fiber_partials(move |_, x, _| {
            e2.check_dim(x.len())?;
            Ok(vec![0.0; x.len()])
        })
    }

    /// `½|v|²` in velocity representation.
    pub fn kinetic_energy() -> Self {
        Self::new("half_speed_squared", Rank::SCALAR, Rep::Velocity, |c, x, v| {
            let g = c.metric_at(x)?;
            Ok(vec![0.5 * crate::manifold::dot(v, &mat_vec(&g, v))])
        })
        .with_x_partials(|c, x, v| {
            let dg = c.metric_partials_at(x)?;
            Ok(dg
                .iter()
                .map(|d| 0.5 * crate::manifold::dot(v, &mat_vec(d, v)))
                .collect())
        })
        .with_fiber_partials(|c, x, v| Ok(c.lower_index(x, v)?.0))
    }

    /// `½ g^ij p_i p_j` in momentum representation.
    pub fn kinetic_energy_momentum() -> Self {
        Self::new("half_momentum_squared", Rank::SCALAR, Rep::Momentum, |c, x, p| {
            let gi = c.inverse_metric_at(x)?;
            Ok(vec![0.5 * crate::manifold::dot(p, &mat_vec(&gi, p))])
        })
        .with_x_partials(|c, x, p| {
            let gi = c.inverse_metric_at(x)?;
            let dg = c.metric_partials_at(x)?;
            let up = mat_vec(&gi, p);
            // ∂_q g^ij p_i p_j = −(g⁻¹p)ᵀ ∂_q g (g⁻¹p)
            Ok(dg
                .iter()
                .map(|d| -0.5 * crate::manifold::dot(&up, &mat_vec(d, &up)))
                .collect())
        })
        .with_fiber_partials(|c, x, p| Ok(c.raise_index(x, p)?.0))
    }

    /// The velocity itself, `X^k = v^k`.
    pub fn velocity() -> Self {
        Self::new("velocity", Rank::VECTOR, Rep::Velocity, |_, _, v| Ok(v.to_vec()))
            .with_x_partials(|_, x, _| Ok(vec![0.0; x.len() * x.len()]))
            .with_fiber_partials(|_, x, _| {
                let n = x.len();
                let mut d = vec![0.0; n * n];
                for k in 0..n {
                    d[k * n + k] = 1.0;
                }
                Ok(d)
            })
    }

    /// The lowered velocity `v_k = g_kj v^j`.
    pub fn lowered_velocity() -> Self {
        Self::new("lowered_velocity", Rank::COVECTOR, Rep::Velocity, |c, x, v| {
            Ok(c.lower_index(x, v)?.0)
        })
        .with_x_partials(|c, x, v| {
            let n = x.len();
            let dg = c.metric_partials_at(x)?;
            let mut out = vec![0.0; n * n];
            for (q, d) in dg.iter().enumerate() {
                let col = mat_vec(d, v);
                for k in 0..n {
                    out[k * n + q] = col[k];
                }
            }
            Ok(out)
        })
        .with_fiber_partials(|c, x, _| {
            let g = c.metric_at(x)?;
            let n = x.len();
            Ok((0..n * n).map(|i| g[(i / n, i % n)]).collect())
        })
    }

    /// The metric `g_ij` viewed as a velocity-independent field.
    pub fn metric(rep: Rep) -> Self {
        Self::new("metric", Rank::new(0, 2), rep, |c, x, _| {
            let g = c.metric_at(x)?;
            let n = x.len();
            Ok((0..n * n).map(|i| g[(i / n, i % n)]).collect())
        })
        .with_x_partials(|c, x, _| {
            let n = x.len();
            let dg = c.metric_partials_at(x)?;
            let mut out = vec![0.0; n * n * n];
            for (q, d) in dg.iter().enumerate() {
                for c in 0..n * n {
                    out[c * n + q] = d[(c / n, c % n)];
                }
            }
            Ok(out)
        })
        .with_fiber_partials(|_, x, _| Ok(vec![0.0; x.len().pow(3)]))
    }

    fn check_point(&self, chart: &ManifoldChart, point: FieldPoint<'_>) -> Result<()> {
        if point.rep() != self.rep {
            return Err(Error::RepMismatch {
                field: self.rep.name(),
                point: point.rep().name(),
            });
        }
        let (x, y) = point.parts();
        chart.check_point(x)?;
        chart.check_fiber("fiber", y)
    }

    pub fn eval<'a>(&self, chart: &ManifoldChart, point: impl Into<FieldPoint<'a>>) -> Result<Tensor> {
        let point = point.into();
        self.check_point(chart, point)?;
        let (x, y) = point.parts();
        Tensor::new(chart.dim(), self.rank, self.raw(chart, x, y)?)
    }

    pub(crate) fn raw(&self, chart: &ManifoldChart, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let out = (self.eval_fn)(chart, x, y)?;
        let expected = self.rank.components(chart.dim());
        if out.len() != expected {
            return Err(Error::RankMismatch(format!(
                "field `{}` returned {} components, expected {expected}",
                self.label,
                out.len()
            )));
        }
        Ok(out)
    }

    /// `∂X/∂x^q`, layout `[component][q]`.
    pub(crate) fn raw_x_partials(&self, chart: &ManifoldChart, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if let Some(f) = &self.x_partials {
            return f(chart, x, y);
        }
        numdiff::jacobian(x, numdiff::first_step, |xs| {
            if !chart.in_domain(xs) {
                return Err(Error::FdStep { x: x.to_vec() });
            }
            self.raw(chart, xs, y)
        })
    }

    /// Plain fiber partials, layout `[component][q]`.
    pub(crate) fn raw_fiber_partials(&self, chart: &ManifoldChart, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if let Some(f) = &self.fiber_partials {
            return f(chart, x, y);
        }
        numdiff::jacobian(y, numdiff::first_step, |ys| self.raw(chart, x, ys))
    }

    /// Largest gap between analytic partials and their FD counterparts at
    /// the given points; 0 when the field carries no analytic partials.
    pub fn spot_check(&self, chart: &ManifoldChart, points: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        let fd = self.without_analytic_partials();
        let mut worst: f64 = 0.0;
        for (x, y) in points {
            let pairs = [
                (self.x_partials.is_some(), self.raw_x_partials(chart, x, y)?, fd.raw_x_partials(chart, x, y)?),
                (
                    self.fiber_partials.is_some(),
                    self.raw_fiber_partials(chart, x, y)?,
                    fd.raw_fiber_partials(chart, x, y)?,
                ),
            ];
            for (present, a, b) in pairs {
                if present {
                    for (u, w) in a.iter().zip(&b) {
                        worst = worst.max((u - w).abs() / u.abs().max(1.0));
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Applies the tensor-index Christoffel terms shared by every covariant
/// derivative: `+Γ^{i_k}_{q a} X^{..a..}` per upper and `−Γ^b_{q j_k} X_{..b..}`
/// per lower index. `out[c*n + q]` accumulates.
fn add_index_terms(gamma: &Christoffel, rank: Rank, values: &[f64], weight: &[f64], out: &mut [f64]) {
    let n = gamma.dim();
    let probe = Tensor {
        dim: n,
        rank,
        data: Vec::new(),
    };
    let comps = rank.components(n);
    for c in 0..comps {
        let idx = probe.multi_index(c);
        for (slot, &i_slot) in idx.iter().enumerate() {
            let upper = slot < rank.upper;
            let mut shifted = idx.clone();
            for a in 0..n {
                shifted[slot] = a;
                let xa = values[probe.flat_index(&shifted)];
                if xa == 0.0 {
                    continue;
                }
                for q in 0..n {
                    if weight[q] == 0.0 {
                        continue;
                    }
                    let term = if upper {
                        gamma.get(i_slot, q, a) * xa
                    } else {
                        -gamma.get(a, q, i_slot) * xa
                    };
                    out[c * n + q] += weight[q] * term;
                }
            }
        }
    }
}

/// Spatial gradient `∇X`, rank `(r, s+1)` with the new index last.
///
/// Velocity representation:
/// `∇_q X = ∂_q X − v^a Γ^b_qa ∂X/∂v^b + Σ Γ^{i}_{qa} X^{..a..} − Σ Γ^b_{qj} X_{..b..}`;
/// momentum representation replaces the fiber term by `+p_a Γ^a_qb ∂X/∂p_b`.
pub fn spatial_gradient<'a>(
    chart: &ManifoldChart,
    field: &ExtendedField,
    point: impl Into<FieldPoint<'a>>,
) -> Result<Tensor> {
    let point = point.into();
    field.check_point(chart, point)?;
    let (x, y) = point.parts();
    let n = chart.dim();
    let gamma = chart.christoffel_at(x)?;
    let values = field.raw(chart, x, y)?;
    let mut out = field.raw_x_partials(chart, x, y)?;
    let fiber = field.raw_fiber_partials(chart, x, y)?;
    let comps = values.len();

    for c in 0..comps {
        for q in 0..n {
            let mut corr = 0.0;
            for a in 0..n {
                for b in 0..n {
                    corr += match field.rep {
                        Rep::Velocity => -y[a] * gamma.get(b, q, a) * fiber[c * n + b],
                        Rep::Momentum => y[a] * gamma.get(a, q, b) * fiber[c * n + b],
                    };
                }
            }
            out[c * n + q] += corr;
        }
    }
    add_index_terms(&gamma, field.rank, &values, &vec![1.0; n], &mut out);
    Tensor::new(n, Rank::new(field.rank.upper, field.rank.lower + 1), out)
}

/// Velocity gradient `∇̃X`.
///
/// Velocity representation: `∂X/∂v^q`, rank `(r, s+1)`. Momentum
/// representation: the raised form `∂X/∂p_q`, rank `(r+1, s)` with the new
/// upper index placed after the existing ones.
pub fn velocity_gradient<'a>(
    chart: &ManifoldChart,
    field: &ExtendedField,
    point: impl Into<FieldPoint<'a>>,
) -> Result<Tensor> {
    let point = point.into();
    field.check_point(chart, point)?;
    let (x, y) = point.parts();
    let n = chart.dim();
    let d = field.raw_fiber_partials(chart, x, y)?;
    match field.rep {
        Rep::Velocity => Tensor::new(n, Rank::new(field.rank.upper, field.rank.lower + 1), d),
        Rep::Momentum => {
            let rank = Rank::new(field.rank.upper + 1, field.rank.lower);
            let upper_block = n.pow(field.rank.upper as u32);
            let lower_block = n.pow(field.rank.lower as u32);
            let mut out = vec![0.0; d.len()];
            for u in 0..upper_block {
                for l in 0..lower_block {
                    let c = u * lower_block + l;
                    for q in 0..n {
                        out[(u * n + q) * lower_block + l] = d[c * n + q];
                    }
                }
            }
            Tensor::new(n, rank, out)
        }
    }
}

/// Lowered momentum-representation velocity gradient `g_qk ∂X/∂p_k`,
/// rank `(r, s+1)`.
pub fn velocity_gradient_lowered(
    chart: &ManifoldChart,
    field: &ExtendedField,
    point: &CotangentPoint,
) -> Result<Tensor> {
    field.check_point(chart, point.into())?;
    let n = chart.dim();
    let g = chart.metric_at(&point.x)?;
    let d = field.raw_fiber_partials(chart, &point.x, &point.p)?;
    let comps = d.len() / n;
    let mut out = vec![0.0; d.len()];
    for c in 0..comps {
        for q in 0..n {
            out[c * n + q] = (0..n).map(|k| g[(q, k)] * d[c * n + k]).sum();
        }
    }
    Tensor::new(n, Rank::new(field.rank.upper, field.rank.lower + 1), out)
}

/// `dY/dt` over uniformly spaced samples. With five or more samples the
/// stencils are fourth order: five-point central inside, five-point
/// one-sided for the first and last two samples. Three or four samples fall
/// back to second-order central and one-sided differences.
pub(crate) fn time_derivative(times: &[f64], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = times.len();
    if m < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: m });
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        let step = w[1] - w[0];
        if !(dt > 0.0) || (step - dt).abs() > 1e-8 * dt.abs().max(1e-300) {
            return Err(Error::NonUniformSamples { step, first: dt });
        }
    }
    // (offset of first stencil point, weights), divided by `den·dt`
    const C2: (f64, [f64; 3]) = (2.0, [-1.0, 0.0, 1.0]);
    const F2: (f64, [f64; 3]) = (2.0, [-3.0, 4.0, -1.0]);
    const C4: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    const F4_0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const F4_1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let len = values[0].len();
    let apply = |start: usize, w: &[f64], den: f64, sign: f64, c: usize| -> f64 {
        let acc: f64 = w
            .iter()
            .enumerate()
            .map(|(j, wj)| {
                let idx = if sign > 0.0 { start + j } else { start - j };
                wj * values[idx][c]
            })
            .sum();
        sign * acc / (den * dt)
    };
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let d: Vec<f64> = (0..len)
            .map(|c| {
                if m < 5 {
                    match i {
                        0 => apply(0, &F2.1, F2.0, 1.0, c),
                        _ if i == m - 1 => apply(m - 1, &F2.1, F2.0, -1.0, c),
                        _ => apply(i - 1, &C2.1, C2.0, 1.0, c),
                    }
                } else {
                    match i {
                        0 => apply(0, &F4_0, 12.0, 1.0, c),
                        1 => apply(0, &F4_1, 12.0, 1.0, c),
                        _ if i == m - 1 => apply(m - 1, &F4_0, 12.0, -1.0, c),
                        _ if i == m - 2 => apply(m - 1, &F4_1, 12.0, -1.0, c),
                        _ => apply(i - 2, &C4, 12.0, 1.0, c),
                    }
                }
            })
            .collect();
        out.push(d);
    }
    Ok(out)
}

/// Covariant derivative `∇_t X` of tensors given along a sampled curve:
/// `dX/dt` by finite differences plus Christoffel terms contracted with the
/// sampled velocity `ẋ`.
///
/// Values near the two ends use one-sided stencils and are less accurate.
pub fn covariant_time_derivative(
    chart: &ManifoldChart,
    samples: &[CurveSample],
    values: &[Tensor],
) -> Result<Vec<Tensor>> {
    if samples.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "tensor values along curve",
            expected: samples.len(),
            got: values.len(),
        });
    }
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    let rank = values[0].rank;
    let n = chart.dim();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let raw: Vec<Vec<f64>> = values.iter().map(|v| v.data.clone()).collect();
    let ddt = time_derivative(&times, &raw)?;

    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let gamma = chart.christoffel_at(&s.state.x)?;
        let comps = rank.components(n);
        let mut acc = vec![0.0; comps * n];
        add_index_terms(&gamma, rank, &values[i].data, &s.state.v, &mut acc);
        let data = (0..comps)
            .map(|c| ddt[i][c] + acc[c * n..(c + 1) * n].iter().sum::<f64>())
            .collect();
        out.push(Tensor::new(n, rank, data)?);
    }
    Ok(out)
}

/// Residual of the chain rule along a natural lift,
/// `∇_t X − [C(∇X ⊗ v) + C(∇̃X ⊗ ∇_t v)]`, per sample.
pub fn chain_rule_check(
    chart: &ManifoldChart,
    field: &ExtendedField,
    samples: &[CurveSample],
) -> Result<Vec<Tensor>> {
    if field.rep != Rep::Velocity {
        return Err(Error::RepMismatch {
            field: field.rep.name(),
            point: Rep::Velocity.name(),
        });
    }
    let values = samples
        .iter()
        .map(|s| field.eval(chart, &s.state))
        .collect::<Result<Vec<_>>>()?;
    let lhs = covariant_time_derivative(chart, samples, &values)?;
    let last = field.rank.lower;

    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let accel = s.accel.as_ref().ok_or(Error::MissingAccel { index: i })?;
        let grad = spatial_gradient(chart, field, &s.state)?;
        let vgrad = velocity_gradient(chart, field, &s.state)?;
        let along = contract(&grad, &Tensor::vector(&s.state.v), (Slot::Lower(last), Slot::Upper(0)))?;
        let fiber = contract(&vgrad, &Tensor::vector(accel), (Slot::Lower(last), Slot::Upper(0)))?;
        let rhs = along.add(&fiber)?;
        out.push(lhs[i].sub(&rhs)?);
    }
    Ok(out)
}
