//! Rule language: grammar, canonical formatting and three-valued evaluation.
//!
//! ```text
//! formula := implies
//! implies := or ("IMPLIES" implies)?
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | "(" formula ")" | "TRUE" | "FALSE" | identifier
//! ```

mod ast;
mod eval;
mod parser;
mod tribool;

pub use ast::{format_formula, Formula};
pub use eval::{eval_formula, Assignment, EvalError};
pub use parser::{is_identifier, parse_formula, ParseError, MAX_DEPTH};
pub use tribool::{ParseTriBoolError, TriBool};

use std::collections::BTreeSet;

pub fn free_variables(formula: &Formula) -> BTreeSet<String> {
    formula.free_variables()
}
