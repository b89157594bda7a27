//! Multi-index algebra, truncated multivariate Taylor arithmetic and tensor
//! Gauss–Legendre quadrature.
//!
//! Space–time variables are ordered `(x_1, .., x_d, t)`: time is always the
//! last variable of a multi-index, jet or quadrature point.

mod jet;
mod multi_index;
mod quadrature;
mod scalar;

pub use jet::{JetOp, TaylorJet};
pub use multi_index::{binomial, monomial_set, MonomialSet, MultiIndex, MAX_VARS};
pub use quadrature::{gauss_legendre, gauss_rule, gauss_rule_composite, QuadratureRule};
pub use scalar::Field;
