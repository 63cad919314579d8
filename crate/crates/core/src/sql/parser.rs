use super::ast::{FromClause, JoinClause, JoinKind, OrderItem, Query, SelectItem, TableRef};
use super::expr::{BinaryOp, Expr, UnaryOp};
use super::lexer::{tokenize, Tok, Token};
use super::nl::ColumnRef;
use super::{ParseError, Span};
use crate::value::Value;

/// Words that end an expression or an implicit alias.
const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "order", "limit", "join", "inner",
    "semi", "left", "right", "full", "outer", "cross", "on", "and", "or", "not", "as", "union",
    "asc", "desc", "is", "null", "in", "like", "between", "distinct", "with", "true", "false",
    "intersect", "except", "offset", "window", "over",
];

pub fn parse_query(src: &str) -> Result<Query, ParseError> {
    let mut p = Parser::new(src)?;
    let q = p.query()?;
    p.eat(&Tok::Semicolon);
    p.expect_eof()?;
    Ok(q)
}

/// Parses a standalone scalar expression, such as a deduced predicate.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            tokens: tokenize(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&self, what: &str) -> ParseError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Eof => "end of input".to_string(),
            Tok::Ident { name, .. } => format!("'{name}'"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Sem(_) => "natural-language expression".to_string(),
            other => format!("{other:?}"),
        };
        ParseError::new(format!("expected {what}, found {found}"), t.span)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, ParseError> {
        if self.peek().tok == tok {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(what))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Span, ParseError> {
        if self.peek().is_keyword(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(&kw.to_ascii_uppercase()))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if self.peek().tok == Tok::Eof {
            Ok(())
        } else {
            Err(self.error_here("end of query"))
        }
    }

    fn is_reserved(t: &Token) -> bool {
        matches!(&t.tok, Tok::Ident { name, quoted: false }
            if RESERVED.contains(&name.to_ascii_lowercase().as_str()))
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident { name, quoted } if *quoted || !Self::is_reserved(&t) => {
                self.bump();
                Ok((name.clone(), t.span))
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<String>, ParseError> {
        if self.eat_kw("as") {
            return Ok(Some(self.ident("alias")?.0));
        }
        let t = self.peek();
        if matches!(t.tok, Tok::Ident { .. }) && !Self::is_reserved(t) {
            return Ok(Some(self.ident("alias")?.0));
        }
        Ok(None)
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        let start = self.peek().span.start;
        if self.peek().is_keyword("with") {
            return Err(ParseError::new(
                "common table expressions are not supported",
                self.peek().span,
            ));
        }
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        let mut items = vec![self.select_item()?];
        while self.eat(&Tok::Comma) {
            items.push(self.select_item()?);
        }
        let from = if self.eat_kw("from") {
            Some(self.from_clause()?)
        } else {
            None
        };
        let where_clause = if self.eat_kw("where") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            group_by.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let having = if self.eat_kw("having") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let s = self.peek().span.start;
                let expr = self.expr()?;
                let descending = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                order_by.push(OrderItem {
                    expr,
                    descending,
                    span: Span::new(s, self.prev_end()),
                });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let limit = if self.eat_kw("limit") {
            match self.bump() {
                Token {
                    tok: Tok::Int(n), ..
                } if n >= 0 => Some(n as u64),
                t => return Err(ParseError::new("expected a non-negative LIMIT count", t.span)),
            }
        } else {
            None
        };
        for kw in ["union", "intersect", "except", "offset", "window"] {
            if self.peek().is_keyword(kw) {
                return Err(ParseError::new(
                    format!("{} is not supported", kw.to_ascii_uppercase()),
                    self.peek().span,
                ));
            }
        }
        Ok(Query {
            distinct,
            items,
            from,
            where_clause,
            group_by,
            having,
            order_by,
            limit,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        let start = self.peek().span.start;
        if self.peek().tok == Tok::Star {
            let span = self.bump().span;
            return Ok(SelectItem::Wildcard {
                qualifier: None,
                span,
            });
        }
        if matches!(self.peek().tok, Tok::Ident { .. })
            && self.peek_at(1).tok == Tok::Dot
            && self.peek_at(2).tok == Tok::Star
        {
            let (q, _) = self.ident("table alias")?;
            self.bump();
            self.bump();
            return Ok(SelectItem::Wildcard {
                qualifier: Some(q),
                span: Span::new(start, self.prev_end()),
            });
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr {
            expr,
            alias,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn from_clause(&mut self) -> Result<FromClause, ParseError> {
        let base = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let start = self.peek().span.start;
            let kind = if self.eat(&Tok::Comma) {
                JoinKind::Cross
            } else if self.eat_kw("join") {
                JoinKind::Inner
            } else if self.peek().is_keyword("inner") {
                self.bump();
                self.expect_kw("join")?;
                JoinKind::Inner
            } else if self.peek().is_keyword("semi") {
                self.bump();
                self.expect_kw("join")?;
                JoinKind::Semi
            } else if self.peek().is_keyword("cross") {
                self.bump();
                self.expect_kw("join")?;
                JoinKind::Cross
            } else if ["left", "right", "full", "outer", "anti"]
                .iter()
                .any(|k| self.peek().is_keyword(k))
            {
                return Err(ParseError::new(
                    "only INNER, SEMI and CROSS joins are supported",
                    self.peek().span,
                ));
            } else {
                break;
            };
            let table = self.table_ref()?;
            let on = if kind != JoinKind::Cross {
                self.expect_kw("on")?;
                Some(self.expr()?)
            } else {
                None
            };
            joins.push(JoinClause {
                kind,
                table,
                on,
                span: Span::new(start, self.prev_end()),
            });
        }
        Ok(FromClause { base, joins })
    }

    fn table_ref(&mut self) -> Result<TableRef, ParseError> {
        let start = self.peek().span.start;
        if self.eat(&Tok::LParen) {
            let query = self.query()?;
            self.expect(Tok::RParen, "')' closing the subquery")?;
            let alias = self.optional_alias()?;
            return Ok(TableRef::Subquery {
                query: Box::new(query),
                alias,
                span: Span::new(start, self.prev_end()),
            });
        }
        let (mut name, _) = self.ident("table name")?;
        while self.peek().tok == Tok::Dot {
            self.bump();
            let (part, _) = self.ident("table name")?;
            name = format!("{name}.{part}");
        }
        let name_end = self.prev_end();
        let alias = self.optional_alias()?;
        Ok(TableRef::Named {
            name,
            alias,
            span: Span::new(start, name_end),
        })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            let right = self.and_expr()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.not_expr()?;
        while self.eat_kw("and") {
            let right = self.not_expr()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") {
            let e = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(e),
            });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, ParseError> {
        let left = self.additive()?;
        let op = match self.peek().tok {
            Tok::Eq => Some(BinaryOp::Eq),
            Tok::NotEq => Some(BinaryOp::NotEq),
            Tok::Lt => Some(BinaryOp::Lt),
            Tok::LtEq => Some(BinaryOp::LtEq),
            Tok::Gt => Some(BinaryOp::Gt),
            Tok::GtEq => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let right = self.additive()?;
            return Ok(Expr::binary(op, left, right));
        }
        if self.eat_kw("is") {
            let negated = self.eat_kw("not");
            self.expect_kw("null")?;
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            });
        }
        let negated = if self.peek().is_keyword("not")
            && ["like", "in", "between"]
                .iter()
                .any(|k| self.peek_at(1).is_keyword(k))
        {
            self.bump();
            true
        } else {
            false
        };
        if self.eat_kw("like") {
            let pattern = self.additive()?;
            return Ok(Expr::Like {
                expr: Box::new(left),
                pattern: Box::new(pattern),
                negated,
            });
        }
        if self.eat_kw("in") {
            let close = if self.eat(&Tok::LParen) {
                Tok::RParen
            } else if self.eat(&Tok::LBracket) {
                Tok::RBracket
            } else {
                return Err(self.error_here("'(' or '[' after IN"));
            };
            if self.peek().is_keyword("select") {
                return Err(ParseError::new(
                    "subqueries in IN are not supported",
                    self.peek().span,
                ));
            }
            let mut list = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                list.push(self.expr()?);
            }
            self.expect(close, "closing bracket of the IN list")?;
            return Ok(Expr::InList {
                expr: Box::new(left),
                list,
                negated,
            });
        }
        if self.eat_kw("between") {
            let low = self.additive()?;
            self.expect_kw("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between {
                expr: Box::new(left),
                low: Box::new(low),
                high: Box::new(high),
                negated,
            });
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinaryOp::Plus,
                Tok::Minus => BinaryOp::Minus,
                _ => break,
            };
            self.bump();
            let right = self.multiplicative()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinaryOp::Multiply,
                Tok::Slash => BinaryOp::Divide,
                Tok::Percent => BinaryOp::Modulo,
                _ => break,
            };
            self.bump();
            let right = self.unary()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Expr::Literal(Value::Int(i)) => Expr::Literal(Value::Int(-i)),
                Expr::Literal(Value::Float(f)) => Expr::Literal(Value::Float(-f)),
                e => Expr::Unary {
                    op: UnaryOp::Neg,
                    expr: Box::new(e),
                },
            });
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Literal(Value::Int(*i)))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Literal(Value::Float(*f)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Value::Text(s.clone())))
            }
            Tok::Sem(text) => {
                self.bump();
                Ok(Expr::Sem {
                    text: text.clone(),
                    span: t.span,
                })
            }
            Tok::LParen => {
                self.bump();
                if self.peek().is_keyword("select") {
                    return Err(ParseError::new(
                        "scalar subqueries are not supported",
                        self.peek().span,
                    ));
                }
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident { quoted: false, .. } if t.is_keyword("null") => {
                self.bump();
                Ok(Expr::Literal(Value::Null))
            }
            Tok::Ident { quoted: false, .. } if t.is_keyword("true") => {
                self.bump();
                Ok(Expr::Literal(Value::Bool(true)))
            }
            Tok::Ident { quoted: false, .. } if t.is_keyword("false") => {
                self.bump();
                Ok(Expr::Literal(Value::Bool(false)))
            }
            Tok::Ident { name, quoted } => {
                if !quoted && Self::is_reserved(&t) {
                    return Err(self.error_here("an expression"));
                }
                self.bump();
                if !quoted && self.peek().tok == Tok::LParen {
                    return self.function(name.clone(), t.span);
                }
                if self.eat(&Tok::Dot) {
                    let (col, _) = self.ident("column name")?;
                    return Ok(Expr::Column(ColumnRef::new(Some(name), &col)));
                }
                Ok(Expr::Column(ColumnRef::bare(name)))
            }
            _ => Err(self.error_here("an expression")),
        }
    }

    fn function(&mut self, name: String, name_span: Span) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        let mut star = false;
        if self.eat(&Tok::Star) {
            star = true;
        } else if self.peek().is_keyword("distinct") {
            return Err(ParseError::new(
                "DISTINCT inside function calls is not supported",
                self.peek().span,
            ));
        } else if self.peek().tok != Tok::RParen {
            args.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen, "')' closing the argument list")?;
        if self.peek().is_keyword("over") {
            return Err(ParseError::new(
                "window functions are not supported",
                self.peek().span,
            ));
        }
        Ok(Expr::Function {
            name: name.to_ascii_lowercase(),
            args,
            star,
            span: Span::new(name_span.start, self.prev_end()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_example_shape() {
        let q = parse_query(
            "SELECT ur.app, COUNT(*) AS positive_and_valid_count
             FROM user_reviews AS ur INNER JOIN playstore AS p ON ur.app = p.app
             WHERE p.category = 'ART_AND_DESIGN' AND p.type = 'Free'
               AND s'{translated_review} is a valid user review'
               AND s'{translated_review} is a positive user review'
             GROUP BY ur.app;",
        )
        .unwrap();
        assert_eq!(q.items.len(), 2);
        let from = q.from.unwrap();
        assert_eq!(from.joins.len(), 1);
        assert_eq!(from.joins[0].kind, JoinKind::Inner);
        let conj = q.where_clause.unwrap().conjuncts();
        assert_eq!(conj.len(), 4);
        assert!(conj[2].contains_sem() && conj[3].contains_sem());
        assert_eq!(q.group_by.len(), 1);
    }

    #[test]
    fn precedence() {
        let e = parse_expr("a = 1 OR b = 2 AND NOT c < 3 + 4 * 5").unwrap();
        assert_eq!(e.to_string(), "a = 1 OR (b = 2 AND NOT (c < 3 + 4 * 5))");
    }

    #[test]
    fn predicates_of_the_deduction_grammar() {
        assert!(parse_expr("Translated_Review != 'nan'").is_ok());
        assert!(parse_expr("name NOT LIKE '%x%'").is_ok());
        assert!(parse_expr("x IN ['a', 'b']").is_ok());
        assert!(parse_expr("x IS NOT NULL AND y BETWEEN 1 AND 2").is_ok());
    }

    #[test]
    fn subquery_and_semi_join() {
        let q = parse_query(
            "SELECT plot FROM (SELECT s'Summarize {overview}' AS plot FROM movie m
               SEMI JOIN movie_languages ml ON m.movie_id = ml.movie_id) sub",
        )
        .unwrap();
        match q.from.unwrap().base {
            TableRef::Subquery { query, alias, .. } => {
                assert_eq!(alias.as_deref(), Some("sub"));
                assert_eq!(query.from.unwrap().joins[0].kind, JoinKind::Semi);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_carry_spans() {
        let err = parse_query("SELECT a FROM t WHERE").unwrap_err();
        assert_eq!(err.span.start, 21);
        let err = parse_query("SELECT a FROM t LEFT JOIN u ON t.a = u.a").unwrap_err();
        assert!(err.message.contains("INNER"));
        assert!(parse_query("WITH x AS (SELECT 1) SELECT * FROM x").is_err());
    }

    #[test]
    fn qualified_table_name() {
        let q = parse_query("SELECT COUNT(*) FROM chicago_crime.IUCR").unwrap();
        assert!(matches!(q.from.unwrap().base, TableRef::Named { name, .. } if name == "chicago_crime.IUCR"));
    }
}
