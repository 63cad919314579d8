//! Scalar expression evaluation with SQL three-valued logic.

use std::cmp::Ordering;

use regex::Regex;

use crate::catalog::{Chunk, Schema};
use crate::sql::{BinaryOp, Expr, UnaryOp};
use crate::value::Value;
use crate::{Error, Result};

/// Access to the values of one row, possibly spread over two chunks.
pub trait RowRef {
    fn get(&self, column: usize) -> &Value;
}

pub struct ChunkRow<'a>(pub &'a Chunk, pub usize);

impl RowRef for ChunkRow<'_> {
    fn get(&self, column: usize) -> &Value {
        self.0.value(column, self.1)
    }
}

/// A row of a join: left columns first, then right.
pub struct PairRow<'a> {
    pub left: &'a Chunk,
    pub l: usize,
    pub right: &'a Chunk,
    pub r: usize,
}

impl RowRef for PairRow<'_> {
    fn get(&self, column: usize) -> &Value {
        let nl = self.left.columns.len();
        if column < nl {
            self.left.value(column, self.l)
        } else {
            self.right.value(column - nl, self.r)
        }
    }
}

/// An expression with column references resolved to positions.
#[derive(Debug, Clone)]
pub enum Compiled {
    Col(usize),
    Lit(Value),
    Bin(BinaryOp, Box<Compiled>, Box<Compiled>),
    Not(Box<Compiled>),
    Neg(Box<Compiled>),
    IsNull(Box<Compiled>, bool),
    Like {
        expr: Box<Compiled>,
        pattern: LikePattern,
        negated: bool,
    },
    In(Box<Compiled>, Vec<Compiled>, bool),
    Between(Box<Compiled>, Box<Compiled>, Box<Compiled>, bool),
    Func(String, Vec<Compiled>),
}

#[derive(Debug, Clone)]
pub enum LikePattern {
    Static(Regex),
    Dynamic(Box<Compiled>),
}

fn like_regex(pattern: &str) -> Regex {
    let mut re = String::from("(?s)^");
    for c in pattern.chars() {
        match c {
            '%' => re.push_str(".*"),
            '_' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped LIKE pattern is a valid regex")
}

pub fn compile(e: &Expr, schema: &Schema) -> Result<Compiled> {
    let rec = |e: &Expr| compile(e, schema).map(Box::new);
    Ok(match e {
        Expr::Column(c) => Compiled::Col(
            schema
                .index_of(c.table_alias.as_deref(), &c.column)
                .ok_or_else(|| Error::execution("expression", format!("column {c} is not available")))?,
        ),
        Expr::Literal(v) => Compiled::Lit(v.clone()),
        Expr::Sem { .. } => {
            return Err(Error::execution(
                "expression",
                "natural-language expression in a relational context",
            ))
        }
        Expr::Binary { op, left, right } => Compiled::Bin(*op, rec(left)?, rec(right)?),
        Expr::Unary { op: UnaryOp::Not, expr } => Compiled::Not(rec(expr)?),
        Expr::Unary { op: UnaryOp::Neg, expr } => Compiled::Neg(rec(expr)?),
        Expr::IsNull { expr, negated } => Compiled::IsNull(rec(expr)?, *negated),
        Expr::Like {
            expr,
            pattern,
            negated,
        } => Compiled::Like {
            expr: rec(expr)?,
            pattern: match &**pattern {
                Expr::Literal(Value::Text(p)) => LikePattern::Static(like_regex(p)),
                other => LikePattern::Dynamic(rec(other)?),
            },
            negated: *negated,
        },
        Expr::InList {
            expr,
            list,
            negated,
        } => Compiled::In(
            rec(expr)?,
            list.iter().map(|x| compile(x, schema)).collect::<Result<_>>()?,
            *negated,
        ),
        Expr::Between {
            expr,
            low,
            high,
            negated,
        } => Compiled::Between(rec(expr)?, rec(low)?, rec(high)?, *negated),
        Expr::Function { name, args, .. } => Compiled::Func(
            name.clone(),
            args.iter().map(|x| compile(x, schema)).collect::<Result<_>>()?,
        ),
    })
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    }
}

fn opt_bool(b: Option<bool>) -> Value {
    b.map_or(Value::Null, Value::Bool)
}

fn arith(op: BinaryOp, a: &Value, b: &Value) -> Value {
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            BinaryOp::Plus => x.checked_add(*y),
            BinaryOp::Minus => x.checked_sub(*y),
            BinaryOp::Multiply => x.checked_mul(*y),
            BinaryOp::Modulo => x.checked_rem(*y),
            _ => None,
        };
        if let Some(r) = r {
            return Value::Int(r);
        }
        if op != BinaryOp::Divide {
            return Value::Null;
        }
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Value::Null;
    };
    let r = match op {
        BinaryOp::Plus => x + y,
        BinaryOp::Minus => x - y,
        BinaryOp::Multiply => x * y,
        BinaryOp::Divide if y == 0.0 => return Value::Null,
        BinaryOp::Divide => x / y,
        BinaryOp::Modulo if y == 0.0 => return Value::Null,
        BinaryOp::Modulo => x % y,
        _ => unreachable!(),
    };
    Value::Float(r)
}

pub fn eval(c: &Compiled, row: &dyn RowRef) -> Value {
    match c {
        Compiled::Col(i) => row.get(*i).clone(),
        Compiled::Lit(v) => v.clone(),
        Compiled::Bin(BinaryOp::And, a, b) => {
            let x = truth(&eval(a, row));
            if x == Some(false) {
                return Value::Bool(false);
            }
            match (x, truth(&eval(b, row))) {
                (_, Some(false)) => Value::Bool(false),
                (Some(true), Some(true)) => Value::Bool(true),
                _ => Value::Null,
            }
        }
        Compiled::Bin(BinaryOp::Or, a, b) => {
            let x = truth(&eval(a, row));
            if x == Some(true) {
                return Value::Bool(true);
            }
            match (x, truth(&eval(b, row))) {
                (_, Some(true)) => Value::Bool(true),
                (Some(false), Some(false)) => Value::Bool(false),
                _ => Value::Null,
            }
        }
        Compiled::Bin(op, a, b) if op.is_comparison() => {
            let ord = eval(a, row).sql_cmp(&eval(b, row));
            opt_bool(ord.map(|o| match op {
                BinaryOp::Eq => o == Ordering::Equal,
                BinaryOp::NotEq => o != Ordering::Equal,
                BinaryOp::Lt => o == Ordering::Less,
                BinaryOp::LtEq => o != Ordering::Greater,
                BinaryOp::Gt => o == Ordering::Greater,
                BinaryOp::GtEq => o != Ordering::Less,
                _ => unreachable!(),
            }))
        }
        Compiled::Bin(op, a, b) => arith(*op, &eval(a, row), &eval(b, row)),
        Compiled::Not(a) => opt_bool(truth(&eval(a, row)).map(|b| !b)),
        Compiled::Neg(a) => match eval(a, row) {
            Value::Int(i) => i.checked_neg().map_or(Value::Null, Value::Int),
            Value::Float(f) => Value::Float(-f),
            _ => Value::Null,
        },
        Compiled::IsNull(a, negated) => Value::Bool(eval(a, row).is_null() != *negated),
        Compiled::Like {
            expr,
            pattern,
            negated,
        } => {
            let v = eval(expr, row);
            let Some(s) = v.as_str() else {
                return Value::Null;
            };
            let m = match pattern {
                LikePattern::Static(re) => re.is_match(s),
                LikePattern::Dynamic(p) => match eval(p, row).as_str() {
                    Some(p) => like_regex(p).is_match(s),
                    None => return Value::Null,
                },
            };
            Value::Bool(m != *negated)
        }
        Compiled::In(a, list, negated) => {
            let v = eval(a, row);
            if v.is_null() {
                return Value::Null;
            }
            let mut saw_null = false;
            for item in list {
                match v.sql_cmp(&eval(item, row)) {
                    Some(Ordering::Equal) => return Value::Bool(!*negated),
                    None => saw_null = true,
                    _ => {}
                }
            }
            if saw_null {
                Value::Null
            } else {
                Value::Bool(*negated)
            }
        }
        Compiled::Between(a, lo, hi, negated) => {
            let v = eval(a, row);
            let (l, h) = (v.sql_cmp(&eval(lo, row)), v.sql_cmp(&eval(hi, row)));
            match (l, h) {
                (Some(l), Some(h)) => {
                    Value::Bool((l != Ordering::Less && h != Ordering::Greater) != *negated)
                }
                _ => Value::Null,
            }
        }
        Compiled::Func(name, args) => {
            let vals: Vec<Value> = args.iter().map(|a| eval(a, row)).collect();
            scalar_function(name, &vals)
        }
    }
}

fn scalar_function(name: &str, args: &[Value]) -> Value {
    let first = args.first().cloned().unwrap_or(Value::Null);
    match name {
        "length" => match &first {
            Value::Text(s) => Value::Int(s.chars().count() as i64),
            Value::Null => Value::Null,
            other => Value::Int(other.render().chars().count() as i64),
        },
        "lower" => first.as_str().map_or(Value::Null, |s| Value::Text(s.to_lowercase())),
        "upper" => first.as_str().map_or(Value::Null, |s| Value::Text(s.to_uppercase())),
        "trim" => first.as_str().map_or(Value::Null, |s| Value::Text(s.trim().to_string())),
        "coalesce" => args.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null),
        "abs" => match first {
            Value::Int(i) => i.checked_abs().map_or(Value::Null, Value::Int),
            Value::Float(f) => Value::Float(f.abs()),
            _ => Value::Null,
        },
        "round" => {
            let digits = args.get(1).and_then(Value::as_f64).unwrap_or(0.0) as i32;
            match first.as_f64() {
                Some(f) => {
                    let m = 10f64.powi(digits);
                    Value::Float((f * m).round() / m)
                }
                None => Value::Null,
            }
        }
        _ => Value::Null,
    }
}

/// Evaluates a predicate over every row of a chunk; only `true` passes.
pub fn predicate_mask(c: &Compiled, chunk: &Chunk) -> Vec<bool> {
    (0..chunk.len())
        .map(|i| eval(c, &ChunkRow(chunk, i)).is_true())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Column, Field};
    use crate::sql::parse_expr;
    use crate::value::DataType;
    use std::sync::Arc;

    fn chunk() -> Chunk {
        let schema = Arc::new(Schema::new(vec![
            Field::new(Some("t"), "a", DataType::Int64),
            Field::new(Some("t"), "s", DataType::Text),
        ]));
        Chunk::new(
            schema,
            vec![
                Column::new(DataType::Int64, vec![Value::Int(1), Value::Null, Value::Int(7)]),
                Column::new(
                    DataType::Text,
                    vec!["nan".into(), "Good app".into(), Value::Null],
                ),
            ],
            0,
        )
    }

    fn mask(src: &str) -> Vec<bool> {
        let c = chunk();
        predicate_mask(&compile(&parse_expr(src).unwrap(), &c.schema).unwrap(), &c)
    }

    #[test]
    fn three_valued_logic() {
        assert_eq!(mask("a > 0"), [true, false, true]);
        assert_eq!(mask("NOT (a > 0)"), [false, false, false]);
        assert_eq!(mask("a > 0 OR s = 'Good app'"), [true, true, true]);
        assert_eq!(mask("a IS NULL"), [false, true, false]);
        assert_eq!(mask("s != 'nan'"), [false, true, false]);
        assert_eq!(mask("a IN (7, NULL)"), [false, false, true]);
    }

    #[test]
    fn like_and_functions() {
        assert_eq!(mask("s LIKE 'Good%'"), [false, true, false]);
        assert_eq!(mask("s NOT LIKE '_an'"), [false, true, false]);
        assert_eq!(mask("length(s) > 3"), [false, true, false]);
        assert_eq!(mask("a BETWEEN 2 AND 7"), [false, false, true]);
        assert_eq!(mask("a + 1 = 2"), [true, false, false]);
        assert_eq!(mask("a / 2 = 0.5"), [true, false, false]);
    }
}
