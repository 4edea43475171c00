use proptest::prelude::*;

use riemdyn::fields::{spatial_gradient, velocity_gradient};
use riemdyn::hamilton::{legendre_forward, legendre_inverse};
use riemdyn::lagrange::a_matrix;
use riemdyn::manifold::{euclidean, hyperbolic_half_plane, polar2d, sphere2d};
use riemdyn::normal_shift::{force_conformal, force_normal_shift, force_spherical, split_force};
use riemdyn::sampling::StateSampler;
use riemdyn::verify::{catalog, run_suite, Suite};
use riemdyn::*;

fn charts() -> Vec<ManifoldChart> {
    vec![euclidean(2), euclidean(3), polar2d(), sphere2d(1.0), sphere2d(2.5), hyperbolic_half_plane()]
}

fn e(src: &str) -> ScalarExpr {
    ScalarExpr::parse(src).unwrap()
}

const CORPUS: [&str; 8] = [
    "x1*x2 + cos(x1)",
    "exp(-x1^2) * sin(3*x2)",
    "log(1 + x1^2 + x2^2)",
    "sqrt(2 + x1*x1) / (1.5 + sin(x2))",
    "sinh(x1 - 2*x2) + x2^3",
    "0.2*x1 - 0.1*x2",
    "cosh(0.3*x1) * tan(0.5*x2)",
    "(x1 - x2)^4 / 24",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn duality_maps_invert_each_other(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in charts() {
            let q = s.tangent(&chart).unwrap();
            let p = chart.lower_index(&q.x, &q.v).unwrap();
            let back = chart.raise_index(&q.x, &p).unwrap();
            for (a, b) in back.iter().zip(q.v.iter()) {
                prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
            let again = chart.lower_index(&q.x, &back).unwrap();
            for (a, b) in again.iter().zip(p.iter()) {
                prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in charts() {
            let x = s.point(&chart).unwrap();
            prop_assert_eq!(chart.christoffel_at(&x).unwrap().asymmetry(), 0.0);
            let fd = chart.without_analytic_derivatives();
            prop_assert!(fd.christoffel_at(&x).unwrap().asymmetry() < 1e-8);
        }
    }

    #[test]
    fn metric_compatibility(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in charts() {
            let n = chart.dim();
            let x = s.point(&chart).unwrap();
            let g = chart.metric_at(&x).unwrap();
            let dg = chart.metric_partials_at(&x).unwrap();
            let gamma = chart.christoffel_at(&x).unwrap();
            for q in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut r = dg[q][(i, j)];
                        for b in 0..n {
                            r -= g[(b, j)] * gamma.get(b, q, i) + g[(i, b)] * gamma.get(b, q, j);
                        }
                        prop_assert!(r.abs() < 1e-7 * g.amax().max(1.0), "{}: {}", chart.name(), r);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_partials_match_finite_differences(k in 0usize..CORPUS.len(), x1 in -1.5f64..1.5, x2 in -1.5f64..1.5) {
        let f = e(CORPUS[k]);
        let x = [x1, x2];
        for q in 0..2 {
            let exact = f.partial(&x, q).unwrap();
            let fd = f.partial_fd(&x, q).unwrap();
            prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{}: {} vs {}", CORPUS[k], exact, fd);
        }
    }

    #[test]
    fn expression_eval_is_deterministic(k in 0usize..CORPUS.len(), x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
        let a = e(CORPUS[k]).eval(&[x1, x2]).unwrap();
        let b = e(CORPUS[k]).eval(&[x1, x2]).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn a_matrix_is_symmetric(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in [polar2d(), sphere2d(1.0)] {
            for l in catalog() {
                let q = s.regular_tangent(&chart, &l).unwrap();
                let a = a_matrix(&chart, &l, &q).unwrap();
                prop_assert!((&a - a.transpose()).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_gradients_commute(seed in any::<u64>()) {
        // ∇_q ∇̃_k L = ∇̃_k ∇_q L when Γ = 0
        let chart = euclidean(2);
        let mut s = StateSampler::new(seed);
        for l in catalog() {
            let q = s.regular_tangent(&chart, &l).unwrap();
            let a = spatial_gradient(&chart, &l.momentum_field(), &q).unwrap();
            let lf = l.as_field();
            let grad_l = ExtendedField::new("grad L", Rank::COVECTOR, Rep::Velocity, move |c, x, v| {
                Ok(spatial_gradient(c, &lf, &TangentPoint::new(x.to_vec(), v.to_vec()))?.data)
            });
            let b = velocity_gradient(&chart, &grad_l, &q).unwrap();
            // a is [k][q], b is [q][k]
            for k in 0..2 {
                for j in 0..2 {
                    prop_assert!((a.data[k * 2 + j] - b.data[j * 2 + k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn legendre_round_trips(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in [euclidean(2), polar2d(), sphere2d(1.0)] {
            for l in catalog() {
                let ctx = LegendreContext::new(l.clone());
                let q = s.regular_tangent(&chart, &l).unwrap();
                let lam = legendre_forward(&chart, &l, &q).unwrap();
                let back = legendre_inverse(&ctx, &chart, &lam.x, &lam.p, None).unwrap();
                for (a, b) in back.v.iter().zip(q.v.iter()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn normal_part_of_force_is_orthogonal_to_velocity(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        for chart in [euclidean(2), polar2d(), sphere2d(1.0)] {
            let q = s.tangent(&chart).unwrap();
            let ns = NormalShiftForce::basic(2, "v*exp(-0.3*x1) + 0.1*v^2").unwrap();
            let f = force_normal_shift(&chart, &ns, &q).unwrap();
            let (fq, fp) = split_force(&chart, &q, &f).unwrap();
            let along: f64 = fp.iter().zip(q.v.iter()).map(|(a, b)| a * b).sum();
            prop_assert!(along.abs() < 1e-12 * f.iter().fold(1.0f64, |m, c| m.max(c.abs())));
            for r in 0..2 {
                prop_assert!((fq[r] + fp[r] - f[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conformal_force_chain(seed in any::<u64>()) {
        let mut s = StateSampler::new(seed);
        let f = e("0.4*x1 - 0.2*x2");
        for chart in [euclidean(2), polar2d(), sphere2d(1.0)] {
            let q = s.tangent(&chart).unwrap();
            let conf = chart.raise_index(&q.x, &force_conformal(&chart, &f, &q).unwrap()).unwrap();
            // φ(z) = z²/2: all four forces agree
            let quad = FiberwiseSymmetricLagrangian::quadratic(f.clone());
            let ns = NormalShiftForce::from_conformal_factor(2, &f).unwrap();
            let forces = [
                ForceField::from_lagrangian(Lagrangian::fiberwise(quad.clone())).eval(&chart, &q).unwrap(),
                chart.raise_index(&q.x, &force_spherical(&chart, &quad, &q).unwrap()).unwrap(),
                chart.raise_index(&q.x, &force_normal_shift(&chart, &ns, &q).unwrap()).unwrap(),
            ];
            for other in &forces {
                for k in 0..2 {
                    prop_assert!((other[k] - conf[k]).abs() < 1e-5, "{}: {:?} vs {:?}", chart.name(), other, conf);
                }
            }
            // general admissible φ: Lagrangian, spherical and conformal forces agree
            let quartic = FiberwiseSymmetricLagrangian::quartic(f.clone());
            let forces = [
                ForceField::from_lagrangian(Lagrangian::fiberwise(quartic.clone())).eval(&chart, &q).unwrap(),
                chart.raise_index(&q.x, &force_spherical(&chart, &quartic, &q).unwrap()).unwrap(),
            ];
            for other in &forces {
                for k in 0..2 {
                    prop_assert!((other[k] - conf[k]).abs() < 1e-5);
                }
            }
        }
    }
}

#[test]
fn speed_is_conserved_under_normal_forces() {
    let chart = sphere2d(1.0);
    let ns = NormalShiftForce::basic(2, "v*exp(-0.3*x1) + 0.1*v^2").unwrap();
    let normal = ForceField::new("normal part", move |c, q| {
        let f = riemdyn::normal_shift::force_normal_shift(c, &ns, q)?;
        Ok(riemdyn::newton::ForceValue::Covariant(split_force(c, q, &f)?.1))
    });
    let q0 = TangentPoint::new([1.2, 0.4], [0.3, 0.5]);
    let tr = riemdyn::newton::integrate(&chart, &normal, &q0, &IntegratorConfig::rk4(1e-3, 1.0)).unwrap();
    assert_eq!(tr.status, riemdyn::integrator::Status::Completed);
    assert!(tr.speed_drift().unwrap() < 1e-9, "{:?}", tr.speed_drift());
}

#[test]
fn polar_and_cartesian_oscillators_agree() {
    // U = ½|x|² in both charts
    let cart = riemdyn::newton::integrate(
        &euclidean(2),
        &ForceField::potential(e("0.5*(x1^2 + x2^2)")),
        &TangentPoint::new([1.0, 0.5], [-0.2, 0.7]),
        &IntegratorConfig::rk4(1e-3, 1.0),
    )
    .unwrap();
    let (x, y, vx, vy) = (1.0f64, 0.5f64, -0.2, 0.7);
    let r = x.hypot(y);
    let q0 = TangentPoint::new([r, y.atan2(x)], [(x * vx + y * vy) / r, (x * vy - y * vx) / (r * r)]);
    let polar = riemdyn::newton::integrate(&polar2d(), &ForceField::potential(e("0.5*x1^2")), &q0, &IntegratorConfig::rk4(1e-3, 1.0)).unwrap();
    for (a, b) in cart.samples.iter().zip(&polar.samples) {
        let (px, py) = (b.x[0] * b.x[1].cos(), b.x[0] * b.x[1].sin());
        assert!((a.x[0] - px).abs() < 1e-6 && (a.x[1] - py).abs() < 1e-6);
    }
}

#[test]
fn suites_are_deterministic() {
    for suite in [Suite::Identities, Suite::ChainRules, Suite::ConformalFlow] {
        let a = run_suite(suite, Some("sphere2d"), 11).unwrap();
        let b = run_suite(suite, Some("sphere2d"), 11).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn trajectories_are_reproducible() {
    let chart = sphere2d(1.0);
    let q0 = TangentPoint::new([1.0, 0.2], [0.4, -0.3]);
    let cfg = IntegratorConfig::rk4(1e-2, 1.0);
    let a = riemdyn::newton::integrate(&chart, &ForceField::conformal(e("x1")), &q0, &cfg).unwrap();
    let b = riemdyn::newton::integrate(&chart, &ForceField::conformal(e("x1")), &q0, &cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}
