//! Riemannian charts: metric, inverse metric, Christoffel symbols and the
//! index raising/lowering duality maps.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::numdiff;

/// Symmetric `n × n` matrix (metric components, `A`, `B`, projectors).
pub type SymMatrix = DMatrix<f64>;

macro_rules! component_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(v: [f64; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

component_vector!(
    /// Chart coordinates `x^1..x^n`.
    Coord
);
component_vector!(
    /// Contravariant components `v^k` of a tangent vector.
    Velocity
);
component_vector!(
    /// Covariant components `p_k` of a covector.
    Momentum
);

/// Christoffel symbols `Γ^k_ij`, stored `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    gamma: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            gamma: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.gamma[(k * self.dim + i) * self.dim + j] = value;
    }

    /// Sets `Γ^k_ij` and `Γ^k_ji`.
    pub fn set_sym(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.set(k, i, j, value);
        self.set(k, j, i, value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    /// `Σ_ij Γ^k_ij a^i b^j` for each `k`.
    pub fn contract_twice(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(k, i, j) * a[i] * b[j];
                    }
                }
                s
            })
            .collect()
    }

    /// Largest `|Γ^k_ij − Γ^k_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    /// Levi-Civita connection from the inverse metric and metric partials
    /// (`partials[q]` is `∂g/∂x^q`).
    pub fn from_metric_partials(inverse: &SymMatrix, partials: &[SymMatrix]) -> Self {
        let n = inverse.nrows();
        let mut out = Self::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += inverse[(k, l)]
                            * (partials[i][(l, j)] + partials[j][(l, i)] - partials[l][(i, j)]);
                    }
                    out.set_sym(k, i, j, 0.5 * s);
                }
            }
        }
        out
    }
}

type MetricFn = Arc<dyn Fn(&[f64]) -> Result<SymMatrix> + Send + Sync>;
type PartialsFn = Arc<dyn Fn(&[f64]) -> Result<Vec<SymMatrix>> + Send + Sync>;
type ChristoffelFn = Arc<dyn Fn(&[f64]) -> Result<Christoffel> + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// One coordinate chart of a Riemannian manifold.
///
/// Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct ManifoldChart {
    name: String,
    dim: usize,
    metric_fn: MetricFn,
    metric_partials_fn: Option<PartialsFn>,
    christoffel_fn: Option<ChristoffelFn>,
    domain_check: Option<DomainFn>,
    sampling_box: Vec<(f64, f64)>,
}

impl fmt::Debug for ManifoldChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_partials", &self.metric_partials_fn.is_some())
            .field("analytic_christoffel", &self.christoffel_fn.is_some())
            .finish()
    }
}

impl ManifoldChart {
    /// A chart from a metric function alone; derivatives fall back to FD.
    pub fn new<F>(name: impl Into<String>, dim: usize, metric: F) -> Self
    where
        F: Fn(&[f64]) -> Result<SymMatrix> + Send + Sync + 'static,
    {
        assert!(dim > 0, "chart dimension must be positive");
        Self {
            name: name.into(),
            dim,
            metric_fn: Arc::new(metric),
            metric_partials_fn: None,
            christoffel_fn: None,
            domain_check: None,
            sampling_box: vec![(-1.0, 1.0); dim],
        }
    }

    pub fn with_metric_partials<F>(mut self, partials: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<SymMatrix>> + Send + Sync + 'static,
    {
        self.metric_partials_fn = Some(Arc::new(partials));
        self
    }

    pub fn with_christoffel<F>(mut self, christoffel: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Christoffel> + Send + Sync + 'static,
    {
        self.christoffel_fn = Some(Arc::new(christoffel));
        self
    }

    pub fn with_domain<F>(mut self, check: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain_check = Some(Arc::new(check));
        self
    }

    /// Coordinate box that random test states are drawn from.
    pub fn with_sampling_box(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.dim);
        self.sampling_box = bounds;
        self
    }

    /// Same metric with analytic partials and Christoffel symbols dropped,
    /// so every derivative goes through finite differences.
    pub fn without_analytic_derivatives(&self) -> Self {
        Self {
            name: format!("{}[fd]", self.name),
            metric_partials_fn: None,
            christoffel_fn: None,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sampling_box(&self) -> &[(f64, f64)] {
        &self.sampling_box
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        self.christoffel_fn.is_some()
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.metric_partials_fn.is_some()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().all(|c| c.is_finite())
            && self.domain_check.as_ref().is_none_or(|check| check(x))
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "coordinates",
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.in_domain(x) {
            return Err(Error::ChartDomain {
                chart: self.name.clone(),
                x: x.to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_fiber(&self, what: &'static str, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dim,
                got: y.len(),
            });
        }
        Ok(())
    }

    fn det_tolerance(g: &SymMatrix) -> f64 {
        1e-12 * g.amax().powi(g.nrows() as i32)
    }

    /// Metric components `g_ij(x)`.
    pub fn metric_at(&self, x: &[f64]) -> Result<SymMatrix> {
        self.check_point(x)?;
        let g = (self.metric_fn)(x)?;
        let det = g.determinant();
        if !(det.abs() > Self::det_tolerance(&g)) {
            return Err(Error::SingularMetric { x: x.to_vec(), det });
        }
        Ok(g)
    }

    /// Inverse metric components `g^ij(x)`.
    pub fn inverse_metric_at(&self, x: &[f64]) -> Result<SymMatrix> {
        let g = self.metric_at(x)?;
        invert(&g, x)
    }

    /// `∂g/∂x^q` for each `q`: analytic when available, else central differences.
    pub fn metric_partials_at(&self, x: &[f64]) -> Result<Vec<SymMatrix>> {
        self.check_point(x)?;
        if let Some(partials) = &self.metric_partials_fn {
            return partials(x);
        }
        let n = self.dim;
        let mut out = Vec::with_capacity(n);
        let mut probe = x.to_vec();
        for q in 0..n {
            let h = numdiff::first_step(x[q]);
            probe[q] = x[q] + h;
            if !self.in_domain(&probe) {
                return Err(Error::FdStep { x: x.to_vec() });
            }
            let up = (self.metric_fn)(&probe)?;
            let hp = probe[q] - x[q];
            probe[q] = x[q] - h;
            if !self.in_domain(&probe) {
                return Err(Error::FdStep { x: x.to_vec() });
            }
            let down = (self.metric_fn)(&probe)?;
            let hm = x[q] - probe[q];
            probe[q] = x[q];
            out.push((up - down) / (hp + hm));
        }
        Ok(out)
    }

    /// `Γ^k_ij(x)`: analytic when available, otherwise the Levi-Civita
    /// formula applied to the metric partials.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<Christoffel> {
        if let Some(christoffel) = &self.christoffel_fn {
            self.check_point(x)?;
            return christoffel(x);
        }
        let inverse = self.inverse_metric_at(x)?;
        let partials = self.metric_partials_at(x)?;
        Ok(Christoffel::from_metric_partials(&inverse, &partials))
    }

    /// `v_a = g_ac v^c`.
    pub fn lower_index(&self, x: &[f64], v: &[f64]) -> Result<Momentum> {
        self.check_fiber("velocity", v)?;
        let g = self.metric_at(x)?;
        Ok(Momentum(mat_vec(&g, v)))
    }

    /// `v^c = g^ca v_a`.
    pub fn raise_index(&self, x: &[f64], p: &[f64]) -> Result<Velocity> {
        self.check_fiber("momentum", p)?;
        let gi = self.inverse_metric_at(x)?;
        Ok(Velocity(mat_vec(&gi, p)))
    }

    /// `|v| = sqrt(g_ij v^i v^j)`.
    pub fn speed(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_fiber("velocity", v)?;
        let g = self.metric_at(x)?;
        speed_with(&g, v)
    }

    /// Chart for the conformally rescaled metric `e^{−2f}·g`.
    pub fn conformally_scaled(&self, f: ScalarExpr) -> Result<Self> {
        f.check_dim(self.dim)?;
        let base = self.clone();
        let f_metric = f.clone();
        let metric = move |x: &[f64]| -> Result<SymMatrix> {
            let scale = (-2.0 * f_metric.eval(x)?).exp();
            Ok((base.metric_fn)(x)? * scale)
        };
        let base = self.clone();
        let partials = move |x: &[f64]| -> Result<Vec<SymMatrix>> {
            let scale = (-2.0 * f.eval(x)?).exp();
            let grad = f.gradient(x)?;
            let g = (base.metric_fn)(x)?;
            let dg = base.metric_partials_at(x)?;
            Ok(dg
                .into_iter()
                .zip(grad)
                .map(|(dgq, dfq)| (dgq - &g * (2.0 * dfq)) * scale)
                .collect())
        };
        let mut chart = Self::new(format!("{}*exp(-2f)", self.name), self.dim, metric)
            .with_metric_partials(partials)
            .with_sampling_box(self.sampling_box.clone());
        chart.domain_check = self.domain_check.clone();
        Ok(chart)
    }
}

pub(crate) fn invert(g: &SymMatrix, x: &[f64]) -> Result<SymMatrix> {
    g.clone().try_inverse().ok_or_else(|| Error::SingularMetric {
        x: x.to_vec(),
        det: g.determinant(),
    })
}

pub(crate) fn mat_vec(m: &SymMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const NORM_TOLERANCE: f64 = 1e-14;

pub(crate) fn speed_with(g: &SymMatrix, v: &[f64]) -> Result<f64> {
    let q = dot(v, &mat_vec(g, v));
    if q < -NORM_TOLERANCE * g.amax().max(1.0) * dot(v, v).max(1.0) {
        return Err(Error::NegativeNorm { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

fn diag(d: &[f64]) -> SymMatrix {
    SymMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(d))
}

/// `euclidean(n)`: identity metric in Cartesian coordinates.
pub fn euclidean(n: usize) -> ManifoldChart {
    ManifoldChart::new(format!("euclidean{n}"), n, move |_| Ok(SymMatrix::identity(n, n)))
        .with_metric_partials(move |_| Ok(vec![SymMatrix::zeros(n, n); n]))
        .with_christoffel(move |_| Ok(Christoffel::zeros(n)))
}

/// Polar coordinates `(r, θ)` on the plane, `g = diag(1, r²)`, `r > 0`.
pub fn polar2d() -> ManifoldChart {
    ManifoldChart::new("polar2d", 2, |x| {
        Ok(diag(&[1.0, x[0] * x[0]]))
    })
    .with_metric_partials(|x| {
        Ok(vec![
            diag(&[0.0, 2.0 * x[0]]),
            SymMatrix::zeros(2, 2),
        ])
    })
    .with_christoffel(|x| {
        let r = x[0];
        let mut c = Christoffel::zeros(2);
        c.set(0, 1, 1, -r);
        c.set_sym(1, 0, 1, 1.0 / r);
        Ok(c)
    })
    .with_domain(|x| x[0] > 0.0)
    .with_sampling_box(vec![(0.5, 3.0), (-PI, PI)])
}

/// Sphere of radius `R` in `(θ, φ)`, `g = R²·diag(1, sin²θ)`, `0 < θ < π`.
pub fn sphere2d(radius: f64) -> ManifoldChart {
    let r2 = radius * radius;
    ManifoldChart::new("sphere2d", 2, move |x| {
        let s = x[0].sin();
        Ok(diag(&[r2, r2 * s * s]))
    })
    .with_metric_partials(move |x| {
        let (s, c) = x[0].sin_cos();
        Ok(vec![
            diag(&[0.0, 2.0 * r2 * s * c]),
            SymMatrix::zeros(2, 2),
        ])
    })
    .with_christoffel(|x| {
        let (s, c) = x[0].sin_cos();
        let mut g = Christoffel::zeros(2);
        g.set(0, 1, 1, -s * c);
        g.set_sym(1, 0, 1, c / s);
        Ok(g)
    })
    .with_domain(|x| x[0] > 0.0 && x[0] < PI)
    .with_sampling_box(vec![(0.4, PI - 0.4), (0.0, 2.0 * PI)])
}

/// Poincaré upper half-plane `(x, y)`, `g = δ/y²`, `y > 0`.
pub fn hyperbolic_half_plane() -> ManifoldChart {
    ManifoldChart::new("hyperbolic", 2, |x| {
        let w = 1.0 / (x[1] * x[1]);
        Ok(diag(&[w, w]))
    })
    .with_metric_partials(|x| {
        let d = -2.0 / (x[1] * x[1] * x[1]);
        Ok(vec![
            SymMatrix::zeros(2, 2),
            diag(&[d, d]),
        ])
    })
    .with_christoffel(|x| {
        let y = x[1];
        let mut g = Christoffel::zeros(2);
        g.set_sym(0, 0, 1, -1.0 / y);
        g.set(1, 0, 0, 1.0 / y);
        g.set(1, 1, 1, -1.0 / y);
        Ok(g)
    })
    .with_domain(|x| x[1] > 0.0)
    .with_sampling_box(vec![(-1.0, 1.0), (0.5, 2.0)])
}

/// `e^{−2f}·δ` in Cartesian coordinates; Christoffel symbols come from the
/// exact metric partials.
pub fn conformally_flat(n: usize, f: ScalarExpr) -> Result<ManifoldChart> {
    let mut chart = euclidean(n).conformally_scaled(f)?;
    chart.name = format!("conformal{n}");
    Ok(chart)
}

/// Looks a builtin chart up by catalog name.
///
/// Names: `euclidean` (param `n`), `euclidean2`, `euclidean3`, `polar2d`,
/// `sphere2d` (param `radius`), `hyperbolic`, `conformal` (param `n`, needs `f`).
pub fn chart_by_name(
    name: &str,
    params: &[(&str, f64)],
    f: Option<&ScalarExpr>,
) -> Result<ManifoldChart> {
    let param = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let dim = |default: usize| param("n").map_or(default, |v| v as usize).max(1);
    Ok(match name {
        "euclidean" => euclidean(dim(2)),
        "euclidean2" => euclidean(2),
        "euclidean3" => euclidean(3),
        "polar2d" | "polar" => polar2d(),
        "sphere2d" | "sphere" => sphere2d(param("radius").unwrap_or(1.0)),
        "hyperbolic" | "half-plane" => hyperbolic_half_plane(),
        "conformal" | "conformally-flat" => {
            let f = f.ok_or_else(|| {
                Error::InvalidConfig("chart `conformal` needs an f expression".into())
            })?;
            conformally_flat(dim(2), f.clone())?
        }
        other => return Err(Error::InvalidConfig(format!("unknown chart `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn assert_mat(m: &SymMatrix, expected: &[f64]) {
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (m[(i, j)] - expected[i * n + j]).abs() < 1e-14,
                    "{m} vs {expected:?}"
                );
            }
        }
    }

    #[test]
    fn metric_examples() {
        assert_mat(&euclidean(2).metric_at(&[0.3, -1.2]).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
        assert_mat(&polar2d().metric_at(&[2.0, 0.5]).unwrap(), &[1.0, 0.0, 0.0, 4.0]);
        assert_mat(&sphere2d(1.0).metric_at(&[FRAC_PI_2, 1.0]).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(polar2d().metric_at(&[-1.0, 0.0]), Err(Error::ChartDomain { .. })));
        assert!(matches!(
            euclidean(2).metric_at(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let degenerate = ManifoldChart::new("degenerate", 2, |x| {
            Ok(diag(&[1.0, x[0]]))
        });
        assert!(matches!(degenerate.metric_at(&[0.0, 0.0]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn christoffel_examples() {
        let flat = euclidean(3).christoffel_at(&[0.1, 0.2, 0.3]).unwrap();
        assert!(flat.as_slice().iter().all(|&g| g == 0.0));

        // diag(1, r²): Γ^r_θθ = −r, Γ^θ_rθ = 1/r
        for chart in [polar2d(), polar2d().without_analytic_derivatives()] {
            let g = chart.christoffel_at(&[2.0, 0.5]).unwrap();
            let tol = if chart.has_analytic_christoffel() { 1e-15 } else { 1e-8 };
            assert!((g.get(0, 1, 1) + 2.0).abs() < tol);
            assert!((g.get(1, 0, 1) - 0.5).abs() < tol);
            assert!((g.get(1, 1, 0) - 0.5).abs() < tol);
            for (k, i, j) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
                assert!(g.get(k, i, j).abs() < tol);
            }
        }

        let t = PI / 3.0;
        for chart in [sphere2d(1.0), sphere2d(1.0).without_analytic_derivatives()] {
            let g = chart.christoffel_at(&[t, 0.0]).unwrap();
            assert!((g.get(0, 1, 1) + t.sin() * t.cos()).abs() < 1e-8);
            assert!((g.get(0, 1, 1) + 0.4330127).abs() < 1e-7);
            assert!((g.get(1, 0, 1) - 0.5773503).abs() < 1e-7);
        }
    }

    fn random_point(chart: &ManifoldChart, rng: &mut ChaCha8Rng) -> Vec<f64> {
        chart
            .sampling_box()
            .iter()
            .map(|&(a, b)| rng.random_range(a..b))
            .collect()
    }

    fn builtin_charts() -> Vec<ManifoldChart> {
        vec![
            euclidean(2),
            euclidean(3),
            polar2d(),
            sphere2d(1.5),
            hyperbolic_half_plane(),
            conformally_flat(2, ScalarExpr::parse("0.3*x1 + 0.2*x2^2").unwrap()).unwrap(),
            sphere2d(1.0)
                .conformally_scaled(ScalarExpr::parse("x1").unwrap())
                .unwrap(),
        ]
    }

    #[test]
    fn analytic_christoffel_matches_fd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for chart in builtin_charts() {
            let fd = chart.without_analytic_derivatives();
            for _ in 0..20 {
                let x = random_point(&chart, &mut rng);
                let a = chart.christoffel_at(&x).unwrap();
                let b = fd.christoffel_at(&x).unwrap();
                for (u, w) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((u - w).abs() < 1e-7, "{}: {u} vs {w}", chart.name());
                }
            }
        }
    }

    #[test]
    fn metric_compatibility_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fd_tolerance = 1e-8;
        for chart in builtin_charts() {
            let n = chart.dim();
            let fd = chart.without_analytic_derivatives();
            for _ in 0..50 {
                let x = random_point(&chart, &mut rng);
                let g = chart.metric_at(&x).unwrap();
                let gamma = chart.christoffel_at(&x).unwrap();
                assert_eq!(gamma.asymmetry(), 0.0);
                // FD metric partials, independent of the Christoffel route
                let dg = fd.metric_partials_at(&x).unwrap();
                for q in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut s = dg[q][(i, j)];
                            for b in 0..n {
                                s -= g[(b, j)] * gamma.get(b, q, i) + g[(i, b)] * gamma.get(b, q, j);
                            }
                            assert!(s.abs() < 10.0 * fd_tolerance * g.amax().max(1.0), "{}: {s}", chart.name());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn duality_maps() {
        let e = euclidean(2);
        assert_eq!(e.lower_index(&[0.0, 0.0], &[1.0, 2.0]).unwrap().0, vec![1.0, 2.0]);
        let p = polar2d().lower_index(&[2.0, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(p.0, vec![1.0, 4.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let charts = builtin_charts();
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let chart = &charts[k % charts.len()];
            let x = random_point(chart, &mut rng);
            let v: Vec<f64> = (0..chart.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = chart.lower_index(&x, &v).unwrap();
            let back = chart.raise_index(&x, &p).unwrap();
            let again = chart.lower_index(&x, &back).unwrap();
            for i in 0..v.len() {
                worst = worst.max((back[i] - v[i]).abs()).max((again[i] - p[i]).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn speed_examples() {
        assert_eq!(euclidean(2).speed(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(polar2d().speed(&[2.0, 0.5], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(sphere2d(1.0).speed(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        let indefinite = ManifoldChart::new("minkowski", 2, |_| {
            Ok(diag(&[-1.0, 1.0]))
        });
        assert!(matches!(
            indefinite.speed(&[0.0, 0.0], &[2.0, 1.0]),
            Err(Error::NegativeNorm { .. })
        ));
    }

    #[test]
    fn conformal_christoffel_formula() {
        // Γ̃^k_ij = Γ^k_ij − δ^k_i ∂_j f − δ^k_j ∂_i f + g_ij g^kl ∂_l f
        let f = ScalarExpr::parse("x1 + 0.3*sin(x2)").unwrap();
        let base = sphere2d(1.0);
        let scaled = base.conformally_scaled(f.clone()).unwrap();
        let x = [1.1, 0.4];
        let df = f.gradient(&x).unwrap();
        let g = base.metric_at(&x).unwrap();
        let gi = base.inverse_metric_at(&x).unwrap();
        let gamma = base.christoffel_at(&x).unwrap();
        let tilde = scaled.christoffel_at(&x).unwrap();
        let up = mat_vec(&gi, &df);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let expected = gamma.get(k, i, j) - d(k, i) * df[j] - d(k, j) * df[i]
                        + g[(i, j)] * up[k];
                    assert!((tilde.get(k, i, j) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn catalog_lookup() {
        assert_eq!(chart_by_name("euclidean", &[("n", 3.0)], None).unwrap().dim(), 3);
        assert!(chart_by_name("torus", &[], None).is_err());
        assert!(chart_by_name("conformal", &[], None).is_err());
        let f = ScalarExpr::parse("x1").unwrap();
        let c = chart_by_name("conformal", &[], Some(&f)).unwrap();
        assert!((c.metric_at(&[1.0, 0.0]).unwrap()[(0, 0)] - (-2.0f64).exp()).abs() < 1e-15);
    }
}
