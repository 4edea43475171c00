//! Dynamics on Riemannian charts in the language of extended tensor fields.
//!
//! The crate covers three equivalent descriptions of a mechanical system on
//! a chart of a Riemannian manifold:
//!
//! * Newtonian: `∇_t v = F(x, v)` for an extended force field `F`;
//! * Lagrangian: `∇_t(∇̃L) − ∇L = 0` for an extended scalar `L`;
//! * Hamiltonian: `ẋ = ∇̃H`, `∇_t p = −∇H` on the cotangent bundle;
//!
//! together with the Legendre map between them, the spatial and velocity
//! gradients `∇`, `∇̃` of extended tensor fields, and the force fields of
//! fiberwise spherically symmetric Lagrangians and normal-shift systems.
//! The [`verify`] module turns the identities relating all of these into
//! seeded numerical checks.

pub mod error;
pub mod expression;
pub mod fields;
pub mod hamilton;
pub mod integrator;
pub mod lagrange;
pub mod manifold;
pub mod newton;
pub mod normal_shift;
pub mod numdiff;
pub mod sampling;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use expression::ScalarExpr;
pub use fields::{CotangentPoint, CurveSample, ExtendedField, Rep, TangentPoint};
pub use hamilton::{Hamiltonian, LegendreContext};
pub use integrator::{IntegratorConfig, Method, Trajectory};
pub use lagrange::Lagrangian;
pub use manifold::{Christoffel, Coord, ManifoldChart, Momentum, SymMatrix, Velocity};
pub use newton::ForceField;
pub use normal_shift::{FiberwiseSymmetricLagrangian, NormalShiftForce};
pub use tensor::{Rank, Tensor};
