//! Natural-language expressions and their `{column}` placeholders.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ParseError, Span};

/// A column mention, optionally qualified by a table alias.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table_alias: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table_alias: Option<&str>, column: &str) -> Self {
        ColumnRef {
            table_alias: table_alias.map(str::to_string),
            column: column.to_string(),
        }
    }

    pub fn bare(column: &str) -> Self {
        Self::new(None, column)
    }

    /// Case-insensitive identity used when comparing mentions.
    pub fn same_as(&self, other: &ColumnRef) -> bool {
        self.column.eq_ignore_ascii_case(&other.column)
            && match (&self.table_alias, &other.table_alias) {
                (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
                _ => true,
            }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table_alias {
            Some(a) => write!(f, "{a}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    /// Byte offset of the opening brace within the template.
    pub offset: usize,
    /// Length in bytes of the whole `{...}` mention.
    pub len: usize,
    /// The mention as written.
    pub written: ColumnRef,
    /// The column the mention was bound to; equal to `written` until the
    /// binder resolves it against a schema.
    pub bound: ColumnRef,
}

/// A natural-language template such as `{review} is positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlExpr {
    pub template: String,
    pub placeholders: Vec<Placeholder>,
    /// Source span of the literal the template came from.
    pub span: Span,
}

impl NlExpr {
    /// Parses a template. Offsets in errors are relative to the template.
    pub fn parse(template: &str) -> Result<NlExpr, ParseError> {
        Self::parse_at(template, Span::new(0, template.len()), 0)
    }

    /// Parses a template taken from the literal at `span` of a larger source
    /// whose body begins at `body_start`; error spans are translated into
    /// source offsets.
    pub fn parse_at(template: &str, span: Span, body_start: usize) -> Result<NlExpr, ParseError> {
        if template.trim().is_empty() {
            return Err(ParseError::new("natural-language expression is empty", span));
        }
        let raw = scan(template).map_err(|e| {
            ParseError::new(
                e.message,
                Span::new(body_start + e.span.start, body_start + e.span.end),
            )
        })?;
        let placeholders = raw
            .into_iter()
            .map(|(offset, len, r)| Placeholder {
                offset,
                len,
                written: r.clone(),
                bound: r,
            })
            .collect();
        Ok(NlExpr {
            template: template.to_string(),
            placeholders,
            span,
        })
    }

    /// Distinct bound columns in order of first mention.
    pub fn columns(&self) -> Vec<ColumnRef> {
        let mut out: Vec<ColumnRef> = Vec::new();
        for p in &self.placeholders {
            if !out.iter().any(|c| c.same_as(&p.bound)) {
                out.push(p.bound.clone());
            }
        }
        out
    }

    pub fn mentions(&self, col: &ColumnRef) -> bool {
        self.placeholders.iter().any(|p| p.bound.same_as(col))
    }

    /// Substitutes every placeholder with `value(bound column)` and turns
    /// `{{`/`}}` back into single braces.
    pub fn render(&self, mut value: impl FnMut(&ColumnRef) -> String) -> String {
        let mut out = String::with_capacity(self.template.len() + 32);
        let mut pos = 0;
        for p in &self.placeholders {
            out.push_str(&unescape(&self.template[pos..p.offset]));
            out.push_str(&value(&p.bound));
            pos = p.offset + p.len;
        }
        out.push_str(&unescape(&self.template[pos..]));
        out
    }
}

impl fmt::Display for NlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "'{}'", self.template.replace('\'', "''"))
    }
}

fn unescape(s: &str) -> String {
    s.replace("{{", "{").replace("}}", "}")
}

/// Lists placeholders in a template, left to right, as `(offset, column)`.
/// `{a.b}` yields an alias-qualified mention; `{{` and `}}` are literal
/// braces.
pub fn extract_placeholders(template: &str) -> Result<Vec<(usize, ColumnRef)>, ParseError> {
    Ok(scan(template)?
        .into_iter()
        .map(|(offset, _, r)| (offset, r))
        .collect())
}

fn scan(template: &str) -> Result<Vec<(usize, usize, ColumnRef)>, ParseError> {
    let bytes = template.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => i += 2,
            b'}' if bytes.get(i + 1) == Some(&b'}') => i += 2,
            b'}' => {
                return Err(ParseError::new(
                    "unbalanced '}' in natural-language expression",
                    Span::new(i, i + 1),
                ))
            }
            b'{' => {
                let close = template[i + 1..]
                    .find(['}', '{'])
                    .map(|p| p + i + 1)
                    .filter(|&p| bytes[p] == b'}')
                    .ok_or_else(|| {
                        ParseError::new("unclosed placeholder", Span::new(i, template.len()))
                    })?;
                let inner = template[i + 1..close].trim();
                if inner.is_empty() {
                    return Err(ParseError::new("empty placeholder", Span::new(i, close + 1)));
                }
                let r = parse_mention(inner).ok_or_else(|| {
                    ParseError::new(
                        format!("placeholder {{{inner}}} is not a column mention"),
                        Span::new(i, close + 1),
                    )
                })?;
                out.push((i, close + 1 - i, r));
                i = close + 1;
            }
            _ => i += 1,
        }
    }
    Ok(out)
}

fn parse_mention(inner: &str) -> Option<ColumnRef> {
    fn ident(s: &str) -> Option<String> {
        let s = s.trim();
        if let Some(q) = s.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
            return (!q.is_empty() && !q.contains('"')).then(|| q.to_string());
        }
        let mut chars = s.chars();
        let first = chars.next()?;
        (first.is_ascii_alphabetic() || first == '_')
            .then_some(())
            .filter(|_| chars.all(|c| c.is_ascii_alphanumeric() || c == '_'))
            .map(|_| s.to_string())
    }
    if !inner.starts_with('"') {
        if let Some((alias, col)) = inner.split_once('.') {
            return Some(ColumnRef::new(Some(&ident(alias)?), &ident(col)?));
        }
    }
    ident(inner).map(|c| ColumnRef::bare(&c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leading_placeholder() {
        let p = extract_placeholders("{translated_review} is valid").unwrap();
        assert_eq!(p, vec![(0, ColumnRef::bare("translated_review"))]);
    }

    #[test]
    fn qualified_mentions_in_order() {
        let p = extract_placeholders("the topic of {a.headline} is related to {b.title}").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].1, ColumnRef::new(Some("a"), "headline"));
        assert_eq!(p[1].1, ColumnRef::new(Some("b"), "title"));
        assert!(p[0].0 < p[1].0);
    }

    #[test]
    fn no_placeholders() {
        assert!(extract_placeholders("no placeholders here").unwrap().is_empty());
    }

    #[test]
    fn escaped_braces_are_literal() {
        let e = NlExpr::parse("json like {{\"k\": {v}}}").unwrap();
        assert_eq!(e.placeholders.len(), 1);
        assert_eq!(e.render(|_| "1".into()), "json like {\"k\": 1}");
    }

    #[test]
    fn malformed_placeholders() {
        assert!(extract_placeholders("{c is open").is_err());
        assert!(extract_placeholders("{} empty").is_err());
        assert!(extract_placeholders("stray } brace").is_err());
        assert!(extract_placeholders("{two words}").is_err());
        assert!(extract_placeholders("{a{b}").is_err());
    }

    #[test]
    fn quoted_mentions() {
        let p = extract_placeholders("classify {\"Product Name\"}").unwrap();
        assert_eq!(p[0].1, ColumnRef::bare("Product Name"));
    }

    #[test]
    fn render_substitutes_repeats() {
        let e = NlExpr::parse("{d} and again {d}").unwrap();
        assert_eq!(e.render(|c| c.column.to_uppercase()), "D and again D");
        assert_eq!(e.columns().len(), 1);
    }

    #[test]
    fn blank_template_rejected() {
        assert!(NlExpr::parse("   ").is_err());
    }
}
