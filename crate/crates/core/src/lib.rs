//! Symbolic core for verifying symmetries, conservation laws, Bäcklund
//! transformations and Lax pairs of scalar and matrix field equations.
//!
//! Everything here runs without `std`; arithmetic is exact over the rationals.
//! Expressions are kept in a canonical normal form so that equality of
//! normal forms decides equality under the implemented rules.
#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod algebra;
pub mod calculus;
pub mod compat;
pub mod error;
pub mod expr;
pub mod parse;
pub mod reduce;
pub mod render;
pub mod report;
pub mod symbol;
pub mod system;

pub use calculus::{lie_apply, lie_bracket, partial_jet, total_derivative, total_derivative_multi, Characteristic};
pub use error::{Error, Result};
pub use expr::{Expr, Func, MatrixAtom, Monomial, ScalarAtom};
pub use num_rational::BigRational as Rational;
pub use report::{CheckReport, Status};
pub use symbol::{Class, MultiIndex, Symbol};
pub use system::{Dependent, EquationSystem, JetContext};
