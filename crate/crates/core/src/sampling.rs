//! Seeded random states and curves for the verification suites.
//!
//! Everything here is driven by a `ChaCha8Rng`, so a seed fixes the output
//! bit for bit on one platform.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{CotangentPoint, CurveSample, TangentPoint};
use crate::integrator::{IntegratorConfig, Status};
use crate::lagrange::{regularity, Lagrangian};
use crate::manifold::{Coord, ManifoldChart, Velocity};
use crate::newton::{integrate, ForceField, ForceValue};

/// Smallest sampled speed `|v|`.
pub const MIN_SPEED: f64 = 0.1;
/// Largest sampled speed `|v|`.
pub const MAX_SPEED: f64 = 1.2;

const MAX_TRIES: usize = 1000;

pub struct StateSampler {
    rng: ChaCha8Rng,
    /// Fraction of each sampling-box side trimmed from both ends.
    margin: f64,
}

impl StateSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            margin: 0.0,
        }
    }

    /// Keeps sampled points `margin·width` away from the box faces.
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin.clamp(0.0, 0.45);
        self
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn point(&mut self, chart: &ManifoldChart) -> Result<Coord> {
        for _ in 0..MAX_TRIES {
            let x: Vec<f64> = chart
                .sampling_box()
                .to_vec()
                .into_iter()
                .map(|(lo, hi)| {
                    let m = self.margin * (hi - lo);
                    self.rng.random_range(lo + m..hi - m)
                })
                .collect();
            if chart.in_domain(&x) {
                return Ok(Coord(x));
            }
        }
        Err(Error::InvalidConfig(format!("no sample point found in `{}`", chart.name())))
    }

    /// Uniform direction, `|v|` uniform in `[MIN_SPEED, MAX_SPEED]`.
    pub fn velocity(&mut self, chart: &ManifoldChart, x: &[f64]) -> Result<Velocity> {
        let n = chart.dim();
        loop {
            let dir: Vec<f64> = (0..n).map(|_| self.rng.random_range(-1.0..1.0)).collect();
            let s = chart.speed(x, &dir)?;
            if s > 1e-3 {
                let target = self.rng.random_range(MIN_SPEED..MAX_SPEED);
                return Ok(Velocity(dir.iter().map(|c| c * target / s).collect()));
            }
        }
    }

    pub fn tangent(&mut self, chart: &ManifoldChart) -> Result<TangentPoint> {
        let x = self.point(chart)?;
        let v = self.velocity(chart, &x)?;
        Ok(TangentPoint { x, v })
    }

    /// `(x, v♭)` for a random tangent state.
    pub fn cotangent(&mut self, chart: &ManifoldChart) -> Result<CotangentPoint> {
        let q = self.tangent(chart)?;
        let p = chart.lower_index(&q.x, &q.v)?;
        Ok(CotangentPoint { x: q.x, p })
    }

    /// A tangent state at which `l` is regular.
    pub fn regular_tangent(&mut self, chart: &ManifoldChart, l: &Lagrangian) -> Result<TangentPoint> {
        for _ in 0..MAX_TRIES {
            let q = self.tangent(chart)?;
            if regularity(chart, l, &q)?.is_regular {
                return Ok(q);
            }
        }
        Err(Error::InvalidConfig(format!("`{}` has no regular sample state", l.label())))
    }

    pub fn tangents(&mut self, chart: &ManifoldChart, count: usize) -> Result<Vec<TangentPoint>> {
        (0..count).map(|_| self.tangent(chart)).collect()
    }

    pub fn regular_tangents(&mut self, chart: &ManifoldChart, l: &Lagrangian, count: usize) -> Result<Vec<TangentPoint>> {
        (0..count).map(|_| self.regular_tangent(chart, l)).collect()
    }

    /// Random smooth force `F^k = a_k + Σ_j b_kj v^j + c_k·sin(x^k)`.
    pub fn force(&mut self, dim: usize) -> ForceField {
        let a: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim * dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        ForceField::new("random-smooth", move |_, q| {
            Ok(ForceValue::Contravariant(Velocity(
                (0..dim)
                    .map(|k| a[k] + (0..dim).map(|j| b[k * dim + j] * q.v[j]).sum::<f64>() + c[k] * q.x[k].sin())
                    .collect(),
            )))
        })
    }

    /// Natural lift of a Newtonian trajectory under a random smooth force,
    /// integrated over `[0, duration]` with RK4 step `dt`. Samples carry
    /// `∇_t v = F`. Redraws until the curve stays inside the chart.
    pub fn curve(&mut self, chart: &ManifoldChart, duration: f64, dt: f64) -> Result<Vec<CurveSample>> {
        let cfg = IntegratorConfig::rk4(dt, duration);
        for _ in 0..MAX_TRIES {
            let force = self.force(chart.dim());
            let q0 = self.tangent(chart)?;
            let tr = integrate(chart, &force, &q0, &cfg)?;
            if tr.status == Status::Completed {
                return tr.curve_samples();
            }
        }
        Err(Error::InvalidConfig(format!("no random curve stays inside `{}`", chart.name())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{polar2d, sphere2d};

    #[test]
    fn same_seed_same_states() {
        let chart = sphere2d(1.0);
        let a = StateSampler::new(7).tangents(&chart, 10).unwrap();
        let b = StateSampler::new(7).tangents(&chart, 10).unwrap();
        assert_eq!(a, b);
        let c = StateSampler::new(8).tangents(&chart, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn states_respect_box_and_speed() {
        let chart = polar2d();
        let mut s = StateSampler::new(1).with_margin(0.1);
        for q in s.tangents(&chart, 200).unwrap() {
            for (c, (lo, hi)) in q.x.iter().zip(chart.sampling_box()) {
                assert!(*c > *lo && *c < *hi);
            }
            let sp = chart.speed(&q.x, &q.v).unwrap();
            assert!((MIN_SPEED - 1e-12..=MAX_SPEED + 1e-12).contains(&sp));
        }
    }

    #[test]
    fn curves_carry_acceleration() {
        let chart = sphere2d(1.0);
        let curve = StateSampler::new(3).curve(&chart, 0.2, 1e-3).unwrap();
        assert_eq!(curve.len(), 201);
        assert!(curve.iter().all(|c| c.accel.is_some()));
    }
}
