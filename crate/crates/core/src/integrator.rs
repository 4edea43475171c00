//! Explicit Runge–Kutta integration of first-order systems on `TM` / `T*M`
//! and the sampled trajectories they produce.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CurveSample, Rep, TangentPoint};
use crate::manifold::{ManifoldChart, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with fixed step `dt`.
    Rk4,
    /// Dormand–Prince 5(4) with local error control.
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4; initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_span: (f64, f64),
    /// Record one sample every this many (accepted) steps.
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            rtol: 1e-10,
            atol: 1e-12,
            dt_min: 1e-12,
            dt_max: 0.1,
            t_span: (0.0, 1.0),
            record_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t1: f64) -> Self {
        Self {
            dt,
            t_span: (0.0, t1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.t_span;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return bad("t_span must satisfy t1 > t0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if self.method == Method::Rk45 {
            if !(self.rtol > 0.0 && self.atol > 0.0) {
                return bad("rtol and atol must be positive");
            }
            if !(self.dt_min > 0.0 && self.dt_max >= self.dt_min) {
                return bad("need 0 < dt_min <= dt_max");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// A stage or step left the chart domain; the trajectory ends at the
    /// last valid sample.
    LeftChart,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Vec<f64>,
    /// `v` for tangent trajectories, `p` for cotangent ones.
    pub fiber: Vec<f64>,
    /// Covariant acceleration `∇_t v` where the system defines it.
    pub accel: Option<Vec<f64>>,
    pub speed: Option<f64>,
    /// `h` on `TM`, `H` on `T*M`.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub rep: Rep,
    pub dim: usize,
    pub samples: Vec<TrajectorySample>,
    pub status: Status,
}

/// One RK stage evaluation of an autonomous system `ẏ = f(y)`.
pub(crate) trait Rhs {
    fn eval(&mut self, y: &[f64]) -> Result<Vec<f64>>;
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> Rhs for F {
    fn eval(&mut self, y: &[f64]) -> Result<Vec<f64>> {
        self(y)
    }
}

fn leaves_chart(e: &Error) -> bool {
    matches!(e, Error::ChartDomain { .. } | Error::FdStep { .. })
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k.iter()) {
                *o += h * c * ki;
            }
        }
    }
    out
}

fn rk4_step(f: &mut impl Rhs, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = f.eval(y)?;
    let k2 = f.eval(&axpy(y, h, &[(0.5, &k1)]))?;
    let k3 = f.eval(&axpy(y, h, &[(0.5, &k2)]))?;
    let k4 = f.eval(&axpy(y, h, &[(1.0, &k3)]))?;
    Ok(axpy(
        y,
        h,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
    ))
}

// Dormand–Prince tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Returns the fifth-order solution and the scaled error norm.
fn dopri_step(f: &mut impl Rhs, y: &[f64], h: f64, cfg: &IntegratorConfig) -> Result<(Vec<f64>, f64)> {
    let mut k: Vec<Vec<f64>> = vec![f.eval(y)?];
    for row in A.iter() {
        let terms: Vec<(f64, &[f64])> = row.iter().zip(&k).map(|(a, ki)| (*a, ki.as_slice())).collect();
        k.push(f.eval(&axpy(y, h, &terms))?);
    }
    let y5 = axpy(y, h, &B5.iter().zip(&k).map(|(b, ki)| (*b, ki.as_slice())).collect::<Vec<_>>());
    let y4 = axpy(y, h, &B4.iter().zip(&k).map(|(b, ki)| (*b, ki.as_slice())).collect::<Vec<_>>());
    let mut acc = 0.0;
    for i in 0..y.len() {
        let scale = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
        acc += ((y5[i] - y4[i]) / scale).powi(2);
    }
    Ok((y5, (acc / y.len() as f64).sqrt()))
}

/// Integrates `ẏ = f(y)` with `y = (x, fiber)`. Returns the recorded
/// `(t, y)` pairs and the termination status.
pub(crate) fn solve(
    chart: &ManifoldChart,
    y0: &[f64],
    cfg: &IntegratorConfig,
    mut f: impl Rhs,
) -> Result<(Vec<(f64, Vec<f64>)>, Status)> {
    cfg.validate()?;
    let n = chart.dim();
    if y0.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: 2 * n,
            got: y0.len(),
        });
    }
    chart.check_point(&y0[..n])?;
    let (t0, t1) = cfg.t_span;
    let mut out = vec![(t0, y0.to_vec())];
    let mut y = y0.to_vec();

    match cfg.method {
        Method::Rk4 => {
            let steps = ((t1 - t0) / cfg.dt - 1e-9).ceil().max(1.0) as usize;
            for i in 1..=steps {
                let t_prev = t0 + (i - 1) as f64 * cfg.dt;
                let t = if i == steps { t1 } else { t0 + i as f64 * cfg.dt };
                let next = match rk4_step(&mut f, &y, t - t_prev) {
                    Ok(next) => next,
                    Err(e) if leaves_chart(&e) => return Ok((out, Status::LeftChart)),
                    Err(e) => return Err(e),
                };
                if !chart.in_domain(&next[..n]) {
                    return Ok((out, Status::LeftChart));
                }
                y = next;
                if i % cfg.record_every == 0 || i == steps {
                    out.push((t, y.clone()));
                }
            }
        }
        Method::Rk45 => {
            let mut t = t0;
            let mut h = cfg.dt.min(cfg.dt_max);
            let mut accepted = 0usize;
            while t < t1 {
                let last = t + h >= t1;
                let step = if last { t1 - t } else { h };
                let (next, err) = match dopri_step(&mut f, &y, step, cfg) {
                    Ok(r) => r,
                    Err(e) if leaves_chart(&e) => (Vec::new(), f64::INFINITY),
                    Err(e) => return Err(e),
                };
                let finite = !next.is_empty() && next.iter().all(|c| c.is_finite());
                let left = next.is_empty() || (finite && !chart.in_domain(&next[..n]));
                if finite && !left && err <= 1.0 {
                    t = if last { t1 } else { t + step };
                    y = next;
                    accepted += 1;
                    if accepted % cfg.record_every == 0 || t >= t1 {
                        out.push((t, y.clone()));
                    }
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = (step * grow).min(cfg.dt_max);
                } else {
                    let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.25 };
                    h = step * shrink;
                    if h < cfg.dt_min {
                        if left {
                            return Ok((out, Status::LeftChart));
                        }
                        return Err(Error::StepSizeUnderflow { t, dt_min: cfg.dt_min });
                    }
                }
            }
        }
    }
    Ok((out, Status::Completed))
}

impl Trajectory {
    pub(crate) fn from_raw(rep: Rep, dim: usize, raw: Vec<(f64, Vec<f64>)>, status: Status) -> Self {
        let samples = raw
            .into_iter()
            .map(|(t, y)| TrajectorySample {
                t,
                x: y[..dim].to_vec(),
                fiber: y[dim..].to_vec(),
                accel: None,
                speed: None,
                energy: None,
            })
            .collect();
        Self {
            rep,
            dim,
            samples,
            status,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory holds the initial sample")
    }

    /// Fills `speed` with `|v|` (tangent) or `|p|` (cotangent).
    pub fn attach_speed(&mut self, chart: &ManifoldChart) -> Result<()> {
        for s in &mut self.samples {
            s.speed = Some(match self.rep {
                Rep::Velocity => chart.speed(&s.x, &s.fiber)?,
                Rep::Momentum => chart.speed(&s.x, &chart.raise_index(&s.x, &s.fiber)?)?,
            });
        }
        Ok(())
    }

    pub fn attach_energy(&mut self, mut energy: impl FnMut(&[f64], &[f64]) -> Result<f64>) -> Result<()> {
        for s in &mut self.samples {
            s.energy = Some(energy(&s.x, &s.fiber)?);
        }
        Ok(())
    }

    pub fn attach_accel(&mut self, mut accel: impl FnMut(&[f64], &[f64]) -> Result<Vec<f64>>) -> Result<()> {
        for s in &mut self.samples {
            s.accel = Some(accel(&s.x, &s.fiber)?);
        }
        Ok(())
    }

    fn drift(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let mut first = None;
        let mut worst: f64 = 0.0;
        for v in values {
            let v = v?;
            let f = *first.get_or_insert(v);
            worst = worst.max((v - f).abs());
        }
        first.map(|_| worst)
    }

    /// `max |speed(t) − speed(t0)|`, if speeds are attached.
    pub fn speed_drift(&self) -> Option<f64> {
        Self::drift(self.samples.iter().map(|s| s.speed))
    }

    /// `max |energy(t) − energy(t0)|`, if energies are attached.
    pub fn energy_drift(&self) -> Option<f64> {
        Self::drift(self.samples.iter().map(|s| s.energy))
    }

    /// Largest coordinate distance `max_t |x(t) − y(t)|_∞` between two
    /// trajectories recorded at the same times.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.samples.len() != other.samples.len() {
            return Err(Error::DimensionMismatch {
                what: "trajectory samples",
                expected: self.samples.len(),
                got: other.samples.len(),
            });
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.samples.iter().zip(&other.samples) {
            if (a.t - b.t).abs() > 1e-12 * a.t.abs().max(1.0) {
                return Err(Error::NonUniformSamples { step: b.t, first: a.t });
            }
            for (u, w) in a.x.iter().zip(&b.x) {
                worst = worst.max((u - w).abs());
            }
        }
        Ok(worst)
    }

    /// Tangent samples as a natural lift, with `∇_t v` where attached.
    pub fn curve_samples(&self) -> Result<Vec<CurveSample>> {
        if self.rep != Rep::Velocity {
            return Err(Error::RepMismatch {
                field: "v-rep",
                point: "p-rep",
            });
        }
        Ok(self
            .samples
            .iter()
            .map(|s| CurveSample {
                t: s.t,
                state: TangentPoint::new(s.x.clone(), s.fiber.clone()),
                accel: s.accel.clone().map(Velocity),
            })
            .collect())
    }

    /// CSV with header `t,x1..xn,v1..vn,speed[,h]` (tangent) or
    /// `t,x1..xn,p1..pn,H` (cotangent); numbers carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.dim;
        let mut out = String::from("t");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        let fiber = if self.rep == Rep::Velocity { 'v' } else { 'p' };
        for i in 1..=n {
            write!(out, ",{fiber}{i}").unwrap();
        }
        let with_energy = self.samples.iter().all(|s| s.energy.is_some());
        match self.rep {
            Rep::Velocity => {
                out.push_str(",speed");
                if with_energy {
                    out.push_str(",h");
                }
            }
            Rep::Momentum => out.push_str(",H"),
        }
        out.push('\n');
        for s in &self.samples {
            write!(out, "{:.16e}", s.t).unwrap();
            for v in s.x.iter().chain(&s.fiber) {
                write!(out, ",{v:.16e}").unwrap();
            }
            if self.rep == Rep::Velocity {
                write!(out, ",{:.16e}", s.speed.unwrap_or(f64::NAN)).unwrap();
                if with_energy {
                    write!(out, ",{:.16e}", s.energy.unwrap_or(f64::NAN)).unwrap();
                }
            } else {
                write!(out, ",{:.16e}", s.energy.unwrap_or(f64::NAN)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{euclidean, polar2d};

    fn oscillator(y: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![y[1], -y[0]])
    }

    #[test]
    fn rk4_harmonic_oscillator_is_fourth_order() {
        let chart = euclidean(1);
        let err = |dt: f64| {
            let (raw, status) = solve(&chart, &[1.0, 0.0], &IntegratorConfig::rk4(dt, 1.0), oscillator).unwrap();
            assert_eq!(status, Status::Completed);
            let (t, y) = raw.last().unwrap();
            assert_eq!(*t, 1.0);
            (y[0] - 1f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio.log2() - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn rk45_meets_tolerance() {
        let chart = euclidean(1);
        let cfg = IntegratorConfig {
            method: Method::Rk45,
            dt: 0.1,
            t_span: (0.0, 10.0),
            rtol: 1e-10,
            atol: 1e-12,
            ..IntegratorConfig::default()
        };
        let (raw, _) = solve(&chart, &[1.0, 0.0], &cfg, oscillator).unwrap();
        let (t, y) = raw.last().unwrap();
        assert_eq!(*t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        assert!(raw.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn record_every_thins_samples() {
        let chart = euclidean(1);
        let cfg = IntegratorConfig {
            record_every: 10,
            ..IntegratorConfig::rk4(0.01, 1.0)
        };
        let (raw, _) = solve(&chart, &[1.0, 0.0], &cfg, oscillator).unwrap();
        assert_eq!(raw.len(), 11);
        assert!((raw[3].0 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn leaving_the_chart_stops_integration() {
        // radial motion towards r = 0
        let chart = polar2d();
        let (raw, status) = solve(&chart, &[0.5, 0.0, -1.0, 0.0], &IntegratorConfig::rk4(1e-2, 1.0), |y: &[f64]| {
            Ok(vec![y[2], y[3], 0.0, 0.0])
        })
        .unwrap();
        assert_eq!(status, Status::LeftChart);
        assert!(raw.iter().all(|(_, y)| y[0] > 0.0));
        assert!(raw.len() < 60);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            IntegratorConfig { dt: 0.0, ..Default::default() },
            IntegratorConfig { t_span: (1.0, 1.0), ..Default::default() },
            IntegratorConfig { record_every: 0, ..Default::default() },
            IntegratorConfig { method: Method::Rk45, rtol: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn underflow_is_reported() {
        let chart = euclidean(1);
        let cfg = IntegratorConfig {
            method: Method::Rk45,
            dt: 0.1,
            dt_min: 1e-3,
            rtol: 1e-14,
            atol: 1e-14,
            t_span: (0.0, 2.0),
            ..Default::default()
        };
        // blows up at t = 1
        let r = solve(&chart, &[1.0, 0.0], &cfg, |y: &[f64]| Ok(vec![y[0] * y[0], 0.0]));
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. })));
    }

    #[test]
    fn csv_layout() {
        let mut tr = Trajectory::from_raw(
            Rep::Velocity,
            2,
            vec![(0.0, vec![0.0, 1.0, 3.0, 4.0]), (0.5, vec![1.5, 3.0, 3.0, 4.0])],
            Status::Completed,
        );
        tr.attach_speed(&euclidean(2)).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,v1,v2,speed"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[5], "5.0000000000000000e0");
        assert_eq!(tr.speed_drift(), Some(0.0));
        tr.attach_energy(|_, v| Ok(0.5 * (v[0] * v[0] + v[1] * v[1]))).unwrap();
        assert!(tr.to_csv().starts_with("t,x1,x2,v1,v2,speed,h\n"));

        let tr = Trajectory::from_raw(Rep::Momentum, 1, vec![(0.0, vec![0.0, 1.0])], Status::Completed);
        assert!(tr.to_csv().starts_with("t,x1,p1,H\n"));
    }
}
