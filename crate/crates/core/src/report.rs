use alloc::format;
use alloc::string::{String, ToString};

use crate::error::Error;
use crate::expr::Expr;
use crate::reduce::Reduced;
use crate::system::EquationSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Zero,
    Residual,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Zero => "zero",
            Status::Residual => "residual",
            Status::Error => "error",
        }
    }
}

/// Outcome of one verification.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub check_id: String,
    pub status: Status,
    pub residual: Expr,
    pub residual_text: String,
    pub passes: usize,
    pub message: Option<String>,
}

impl CheckReport {
    pub fn from_reduction(id: &str, r: Reduced, system: &EquationSystem) -> Self {
        let residual_text = system.render(&r.residual);
        let (status, message) = if r.exhausted {
            (Status::Error, Some(format!("pass limit {} exceeded", r.passes)))
        } else if r.residual.is_zero() {
            (Status::Zero, None)
        } else {
            (Status::Residual, None)
        };
        CheckReport { check_id: id.to_string(), status, residual: r.residual, residual_text, passes: r.passes, message }
    }

    pub fn from_expr(id: &str, residual: Expr, system: &EquationSystem) -> Self {
        CheckReport::from_reduction(id, Reduced { residual, passes: 0, exhausted: false }, system)
    }

    /// A check that compares two things rather than reducing one.
    pub fn verdict(id: &str, ok: bool, detail: String) -> Self {
        CheckReport {
            check_id: id.to_string(),
            status: if ok { Status::Zero } else { Status::Residual },
            residual: Expr::zero(),
            residual_text: if ok { String::from("0") } else { detail.clone() },
            passes: 0,
            message: if detail.is_empty() { None } else { Some(detail) },
        }
    }

    pub fn failure(id: &str, err: &Error) -> Self {
        CheckReport {
            check_id: id.to_string(),
            status: Status::Error,
            residual: Expr::zero(),
            residual_text: String::new(),
            passes: 0,
            message: Some(err.to_string()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.status == Status::Zero
    }
}
