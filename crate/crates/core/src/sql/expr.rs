use std::fmt;

use serde::Serialize;

use super::nl::ColumnRef;
use super::Span;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinaryOp {
    And,
    Or,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq
                | BinaryOp::NotEq
                | BinaryOp::Lt
                | BinaryOp::LtEq
                | BinaryOp::Gt
                | BinaryOp::GtEq
        )
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
            BinaryOp::Modulo => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnaryOp {
    Not,
    Neg,
}

/// Scalar expression. `Sem` only appears in the parsed AST; bound
/// relational predicates never contain it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Value),
    Sem { text: String, span: Span },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary { op: UnaryOp, expr: Box<Expr> },
    IsNull { expr: Box<Expr>, negated: bool },
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    Function {
        name: String,
        args: Vec<Expr>,
        star: bool,
        span: Span,
    },
}

pub const AGGREGATES: [&str; 6] = ["count", "sum", "avg", "min", "max", "sem_agg"];

impl Expr {
    pub fn column(qualifier: Option<&str>, name: &str) -> Expr {
        Expr::Column(ColumnRef::new(qualifier, name))
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Joins predicates with AND; `None` for an empty list.
    pub fn conjunction(mut parts: Vec<Expr>) -> Option<Expr> {
        let first = if parts.is_empty() {
            return None;
        } else {
            parts.remove(0)
        };
        Some(
            parts
                .into_iter()
                .fold(first, |acc, p| Expr::binary(BinaryOp::And, acc, p)),
        )
    }

    /// Splits a predicate into its top-level AND conjuncts.
    pub fn conjuncts(self) -> Vec<Expr> {
        match self {
            Expr::Binary {
                op: BinaryOp::And,
                left,
                right,
            } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            other => vec![other],
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::Sem { .. } => vec![],
            Expr::Binary { left, right, .. } => vec![left, right],
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => vec![expr],
            Expr::Like { expr, pattern, .. } => vec![expr, pattern],
            Expr::InList { expr, list, .. } => std::iter::once(&**expr).chain(list).collect(),
            Expr::Between {
                expr, low, high, ..
            } => vec![expr, low, high],
            Expr::Function { args, .. } => args.iter().collect(),
        }
    }

    /// Rebuilds the expression bottom-up, letting `f` replace any node.
    /// Returning `None` from `f` aborts the rewrite.
    pub fn try_transform(&self, f: &mut dyn FnMut(&Expr) -> Option<Option<Expr>>) -> Option<Expr> {
        if let Some(replacement) = f(self) {
            return replacement;
        }
        let mut rec = |e: &Expr| e.try_transform(f).map(Box::new);
        Some(match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::Sem { .. } => self.clone(),
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: rec(left)?,
                right: rec(right)?,
            },
            Expr::Unary { op, expr } => Expr::Unary {
                op: *op,
                expr: rec(expr)?,
            },
            Expr::IsNull { expr, negated } => Expr::IsNull {
                expr: rec(expr)?,
                negated: *negated,
            },
            Expr::Like {
                expr,
                pattern,
                negated,
            } => Expr::Like {
                expr: rec(expr)?,
                pattern: rec(pattern)?,
                negated: *negated,
            },
            Expr::InList {
                expr,
                list,
                negated,
            } => Expr::InList {
                expr: rec(expr)?,
                list: list
                    .iter()
                    .map(|e| rec(e).map(|b| *b))
                    .collect::<Option<_>>()?,
                negated: *negated,
            },
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => Expr::Between {
                expr: rec(expr)?,
                low: rec(low)?,
                high: rec(high)?,
                negated: *negated,
            },
            Expr::Function {
                name,
                args,
                star,
                span,
            } => Expr::Function {
                name: name.clone(),
                args: args
                    .iter()
                    .map(|e| rec(e).map(|b| *b))
                    .collect::<Option<_>>()?,
                star: *star,
                span: *span,
            },
        })
    }

    pub fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        pred(self) || self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn contains_sem(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Sem { .. }))
    }

    pub fn is_aggregate_call(&self) -> bool {
        matches!(self, Expr::Function { name, .. } if AGGREGATES.contains(&name.to_ascii_lowercase().as_str()))
    }

    pub fn contains_aggregate(&self) -> bool {
        self.any(&|e| e.is_aggregate_call())
    }

    pub fn column_refs(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a ColumnRef>) {
            if let Expr::Column(c) = e {
                out.push(c);
            }
            for c in e.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Sem { text, .. } => write!(f, "s'{}'", text.replace('\'', "''")),
            Expr::Binary { op, left, right } => {
                let wrap = |e: &Expr| match e {
                    Expr::Binary { op: inner, .. }
                        if matches!(inner, BinaryOp::And | BinaryOp::Or) && inner != op =>
                    {
                        format!("({e})")
                    }
                    _ => e.to_string(),
                };
                write!(f, "{} {} {}", wrap(left), op.symbol(), wrap(right))
            }
            Expr::Unary { op: UnaryOp::Not, expr } => write!(f, "NOT ({expr})"),
            Expr::Unary { op: UnaryOp::Neg, expr } => write!(f, "-{expr}"),
            Expr::IsNull { expr, negated } => {
                write!(f, "{expr} IS {}NULL", if *negated { "NOT " } else { "" })
            }
            Expr::Like {
                expr,
                pattern,
                negated,
            } => write!(f, "{expr} {}LIKE {pattern}", if *negated { "NOT " } else { "" }),
            Expr::InList {
                expr,
                list,
                negated,
            } => {
                let items: Vec<String> = list.iter().map(ToString::to_string).collect();
                write!(
                    f,
                    "{expr} {}IN ({})",
                    if *negated { "NOT " } else { "" },
                    items.join(", ")
                )
            }
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => write!(
                f,
                "{expr} {}BETWEEN {low} AND {high}",
                if *negated { "NOT " } else { "" }
            ),
            Expr::Function {
                name, args, star, ..
            } => {
                if *star {
                    write!(f, "{name}(*)")
                } else {
                    let items: Vec<String> = args.iter().map(ToString::to_string).collect();
                    write!(f, "{name}({})", items.join(", "))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjunct_round_trip() {
        let a = Expr::binary(BinaryOp::Eq, Expr::column(None, "a"), Expr::lit(1i64));
        let b = Expr::binary(BinaryOp::Gt, Expr::column(None, "b"), Expr::lit(2i64));
        let both = Expr::conjunction(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(both.to_string(), "a = 1 AND b > 2");
        assert_eq!(both.conjuncts(), vec![a, b]);
    }

    #[test]
    fn or_inside_and_is_parenthesised() {
        let or = Expr::binary(BinaryOp::Or, Expr::column(None, "x"), Expr::column(None, "y"));
        let and = Expr::binary(BinaryOp::And, or, Expr::column(None, "z"));
        assert_eq!(and.to_string(), "(x OR y) AND z");
    }
}
