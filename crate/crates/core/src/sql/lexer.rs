use super::{ParseError, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare or double-quoted identifier. Keywords are bare identifiers too.
    Ident { name: String, quoted: bool },
    Str(String),
    /// `s'...'` natural-language literal; `''` already unescaped.
    Sem(String),
    Int(i64),
    Float(f64),
    Comma,
    Dot,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Ident { name, quoted: false } if name.eq_ignore_ascii_case(kw))
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let single = |tok: Tok| Token {
            tok,
            span: Span::new(start, start + 1),
        };
        match c {
            b',' => out.push(single(Tok::Comma)),
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => out.push(single(Tok::Dot)),
            b'(' => out.push(single(Tok::LParen)),
            b')' => out.push(single(Tok::RParen)),
            b'[' => out.push(single(Tok::LBracket)),
            b']' => out.push(single(Tok::RBracket)),
            b'*' => out.push(single(Tok::Star)),
            b'+' => out.push(single(Tok::Plus)),
            b'-' => out.push(single(Tok::Minus)),
            b'/' => out.push(single(Tok::Slash)),
            b'%' => out.push(single(Tok::Percent)),
            b';' => out.push(single(Tok::Semicolon)),
            b'=' => out.push(single(Tok::Eq)),
            b'!' | b'<' | b'>' => {
                let next = bytes.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    (b'!', Some(b'=')) => (Tok::NotEq, 2),
                    (b'<', Some(b'>')) => (Tok::NotEq, 2),
                    (b'<', Some(b'=')) => (Tok::LtEq, 2),
                    (b'>', Some(b'=')) => (Tok::GtEq, 2),
                    (b'<', _) => (Tok::Lt, 1),
                    (b'>', _) => (Tok::Gt, 1),
                    _ => {
                        return Err(ParseError::new(
                            "unexpected character '!'",
                            Span::new(start, start + 1),
                        ))
                    }
                };
                out.push(Token {
                    tok,
                    span: Span::new(start, start + len),
                });
                i += len;
                continue;
            }
            b'\'' => {
                let (text, end) = quoted(src, i, b'\'')?;
                out.push(Token {
                    tok: Tok::Str(text),
                    span: Span::new(start, end),
                });
                i = end;
                continue;
            }
            b'"' => {
                let (text, end) = quoted(src, i, b'"')?;
                out.push(Token {
                    tok: Tok::Ident {
                        name: text,
                        quoted: true,
                    },
                    span: Span::new(start, end),
                });
                i = end;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                let mut end = i;
                let mut seen_dot = false;
                while end < bytes.len()
                    && (bytes[end].is_ascii_digit() || (bytes[end] == b'.' && !seen_dot))
                {
                    seen_dot |= bytes[end] == b'.';
                    end += 1;
                }
                let text = &src[i..end];
                let span = Span::new(start, end);
                let tok = if seen_dot {
                    Tok::Float(text.parse().map_err(|_| ParseError::new("bad number", span))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| ParseError::new("integer out of range", span))?)
                };
                out.push(Token { tok, span });
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                // s'...' opens a natural-language literal.
                if (c == b's' || c == b'S') && bytes.get(i + 1) == Some(&b'\'') {
                    let (text, end) = quoted(src, i + 1, b'\'')?;
                    out.push(Token {
                        tok: Tok::Sem(text),
                        span: Span::new(start, end),
                    });
                    i = end;
                    continue;
                }
                let mut end = i;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                out.push(Token {
                    tok: Tok::Ident {
                        name: src[i..end].to_string(),
                        quoted: false,
                    },
                    span: Span::new(start, end),
                });
                i = end;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap();
                return Err(ParseError::new(
                    format!("unexpected character {ch:?}"),
                    Span::new(start, start + ch.len_utf8()),
                ));
            }
        }
        i += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(src.len(), src.len()),
    });
    Ok(out)
}

/// Reads a literal delimited by `quote` starting at `open`; a doubled quote
/// is an escaped quote. Returns the unescaped text and the end offset.
fn quoted(src: &str, open: usize, quote: u8) -> Result<(String, usize), ParseError> {
    let bytes = src.as_bytes();
    let mut text = String::new();
    let mut i = open + 1;
    let mut run = i;
    while i < bytes.len() {
        if bytes[i] == quote {
            text.push_str(&src[run..i]);
            if bytes.get(i + 1) == Some(&quote) {
                text.push(quote as char);
                i += 2;
                run = i;
                continue;
            }
            return Ok((text, i + 1));
        }
        i += 1;
    }
    Err(ParseError::new(
        "unterminated quoted literal",
        Span::new(open, src.len()),
    ))
}
