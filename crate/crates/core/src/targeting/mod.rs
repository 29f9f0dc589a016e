//! Advertiser targeting: predicate trees over KPI vectors and the per-subscriber
//! eligibility bit-signatures derived from them.

mod parser;
mod signature;

use std::fmt;

use thiserror::Error;

use crate::domain::{CategoryId, KpiKind, KpiSchema, KpiValue, KpiVector};

pub use parser::{parse_predicate, ParseError, ParseErrorKind};
pub use signature::{eligibility_signature, signatures, EligibilitySignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn is_ordering(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// A literal as written in the predicate. Categorical literals keep their text
/// so the predicate prints back verbatim; `id` is `None` when no subscriber
/// carries that value, in which case it equals nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Category {
        text: String,
        id: Option<CategoryId>,
    },
}

impl Literal {
    fn kind(&self) -> KpiKind {
        match self {
            Literal::Number(_) => KpiKind::Numeric,
            Literal::Category { .. } => KpiKind::Categorical,
        }
    }

    fn matches(&self, value: &KpiValue) -> bool {
        match (self, value) {
            (Literal::Number(lit), KpiValue::Numeric(v)) => v == lit,
            (Literal::Category { id: Some(lit), .. }, KpiValue::Categorical(v)) => v == lit,
            _ => false,
        }
    }
}

/// Reference to a schema column by position, keeping the name for printing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrRef {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetPredicate {
    True,
    Compare {
        attr: AttrRef,
        op: CmpOp,
        value: Literal,
    },
    In {
        attr: AttrRef,
        values: Vec<Literal>,
    },
    And(Box<TargetPredicate>, Box<TargetPredicate>),
    Or(Box<TargetPredicate>, Box<TargetPredicate>),
    Not(Box<TargetPredicate>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateCheckError {
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {name:?} is {actual}, literal is {literal}")]
    KindMismatch {
        name: String,
        actual: KpiKind,
        literal: KpiKind,
    },
    #[error("ordering operator {op} on categorical attribute {name:?}")]
    OrderingOnCategorical { name: String, op: &'static str },
}

impl TargetPredicate {
    pub fn and(a: TargetPredicate, b: TargetPredicate) -> Self {
        TargetPredicate::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: TargetPredicate, b: TargetPredicate) -> Self {
        TargetPredicate::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: TargetPredicate) -> Self {
        TargetPredicate::Not(Box::new(a))
    }

    /// Standard boolean semantics with exact float comparison.
    pub fn evaluate(&self, kpis: &KpiVector) -> bool {
        match self {
            TargetPredicate::True => true,
            TargetPredicate::Compare { attr, op, value } => match (kpis.get(attr.index), value) {
                (Some(KpiValue::Numeric(v)), Literal::Number(lit)) => match op {
                    CmpOp::Lt => v < lit,
                    CmpOp::Le => v <= lit,
                    CmpOp::Gt => v > lit,
                    CmpOp::Ge => v >= lit,
                    CmpOp::Eq => v == lit,
                    CmpOp::Ne => v != lit,
                },
                (Some(v @ KpiValue::Categorical(_)), lit @ Literal::Category { .. }) => match op {
                    CmpOp::Eq => lit.matches(v),
                    CmpOp::Ne => !lit.matches(v),
                    _ => false,
                },
                _ => false,
            },
            TargetPredicate::In { attr, values } => match kpis.get(attr.index) {
                Some(v) => values.iter().any(|lit| lit.matches(v)),
                None => false,
            },
            TargetPredicate::And(a, b) => a.evaluate(kpis) && b.evaluate(kpis),
            TargetPredicate::Or(a, b) => a.evaluate(kpis) || b.evaluate(kpis),
            TargetPredicate::Not(a) => !a.evaluate(kpis),
        }
    }

    /// Re-validates attribute references and literal kinds against `schema`.
    pub fn check(&self, schema: &KpiSchema) -> Result<(), PredicateCheckError> {
        let check_attr = |attr: &AttrRef, literal: &Literal| {
            let column = schema
                .attributes()
                .get(attr.index)
                .filter(|a| a.name == attr.name)
                .ok_or_else(|| PredicateCheckError::UnknownAttribute(attr.name.clone()))?;
            if column.kind != literal.kind() {
                return Err(PredicateCheckError::KindMismatch {
                    name: attr.name.clone(),
                    actual: column.kind,
                    literal: literal.kind(),
                });
            }
            Ok(())
        };
        match self {
            TargetPredicate::True => Ok(()),
            TargetPredicate::Compare { attr, op, value } => {
                check_attr(attr, value)?;
                if op.is_ordering() && value.kind() == KpiKind::Categorical {
                    return Err(PredicateCheckError::OrderingOnCategorical {
                        name: attr.name.clone(),
                        op: op.symbol(),
                    });
                }
                Ok(())
            }
            TargetPredicate::In { attr, values } => {
                values.iter().try_for_each(|v| check_attr(attr, v))
            }
            TargetPredicate::And(a, b) | TargetPredicate::Or(a, b) => {
                a.check(schema)?;
                b.check(schema)
            }
            TargetPredicate::Not(a) => a.check(schema),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            TargetPredicate::Or(..) => 1,
            TargetPredicate::And(..) => 2,
            TargetPredicate::Not(..) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(x) => write!(f, "{x}"),
            Literal::Category { text, .. } => {
                f.write_str("\"")?;
                for ch in text.chars() {
                    if ch == '"' || ch == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{ch}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

/// Prints in the concrete grammar accepted by [`parse_predicate`], with the
/// minimum parentheses needed to parse back to the same tree.
impl fmt::Display for TargetPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetPredicate::True => f.write_str("TRUE"),
            TargetPredicate::Compare { attr, op, value } => {
                write!(f, "{} {} {value}", attr.name, op.symbol())
            }
            TargetPredicate::In { attr, values } => {
                write!(f, "{} IN {{", attr.name)?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            // Binary chains parse left-associatively, so a right child of the
            // same operator needs parentheses.
            TargetPredicate::And(a, b) => {
                a.fmt_child(f, 2)?;
                f.write_str(" AND ")?;
                b.fmt_child(f, 3)
            }
            TargetPredicate::Or(a, b) => {
                a.fmt_child(f, 1)?;
                f.write_str(" OR ")?;
                b.fmt_child(f, 2)
            }
            TargetPredicate::Not(a) => {
                f.write_str("NOT ")?;
                a.fmt_child(f, 3)
            }
        }
    }
}
