use serde_json::Value;

use super::{Item, Parsed, ResponseFormat, Scalar};

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    body.strip_suffix("```").unwrap_or(body).trim()
}

/// Accepts `true`/`false` in any case, optionally quoted or followed by
/// punctuation, or a reply containing exactly one such token.
pub fn parse_bool(text: &str) -> Option<bool> {
    let cleaned = strip_fences(text)
        .trim_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'' || c == '`' || c == '.' || c == '!');
    match cleaned.to_ascii_lowercase().as_str() {
        "true" => return Some(true),
        "false" => return Some(false),
        _ => {}
    }
    let mut found = None;
    for w in cleaned.split(|c: char| !c.is_ascii_alphabetic()) {
        let v = match w.to_ascii_lowercase().as_str() {
            "true" => true,
            "false" => false,
            _ => continue,
        };
        if found.is_some_and(|f| f != v) {
            return None;
        }
        found = Some(v);
    }
    found
}

fn json_value(text: &str, open: char, close: char) -> Option<Value> {
    let t = strip_fences(text);
    if let Ok(v) = serde_json::from_str(t) {
        return Some(v);
    }
    let (a, b) = (t.find(open)?, t.rfind(close)?);
    if b <= a {
        return None;
    }
    serde_json::from_str(&t[a..=b]).ok()
}

fn scalar(v: &Value, kind: Scalar) -> Result<Parsed, String> {
    match (kind, v) {
        (_, Value::Null) => Ok(Parsed::Null),
        (Scalar::Bool, Value::Bool(b)) => Ok(Parsed::Bool(*b)),
        (Scalar::Bool, Value::String(s)) => parse_bool(s)
            .map(Parsed::Bool)
            .ok_or_else(|| format!("expected a boolean, got {s:?}")),
        (Scalar::Bool, other) => Err(format!("expected a boolean, got {other}")),
        (Scalar::Text, Value::String(s)) => Ok(Parsed::Text(s.clone())),
        (Scalar::Text, Value::Array(_) | Value::Object(_)) => Err(format!("expected a string, got {v}")),
        (Scalar::Text, other) => Ok(Parsed::Text(other.to_string())),
    }
}

fn pair(v: &Value, a: Scalar, b: Scalar) -> Result<Parsed, String> {
    let obj = v.as_object().ok_or_else(|| format!("expected an object, got {v}"))?;
    let first = obj.get("first").ok_or("missing \"first\"")?;
    let second = obj.get("second").unwrap_or(&Value::Null);
    let first = scalar(first, a)?;
    if first == Parsed::Null {
        return Err("\"first\" is null".into());
    }
    Ok(Parsed::Pair(Box::new(first), Box::new(scalar(second, b)?)))
}

/// Validates model text against the requested format. `Ok(None)` for free
/// text.
pub fn parse_response(text: &str, format: &ResponseFormat) -> Result<Option<Parsed>, String> {
    let parsed = match format {
        ResponseFormat::FreeText => return Ok(None),
        ResponseFormat::JsonBool => {
            let b = parse_bool(text).or_else(|| match json_value(text, '{', '}') {
                Some(Value::Object(o)) => o.values().find_map(Value::as_bool),
                _ => None,
            });
            Parsed::Bool(b.ok_or("expected true or false")?)
        }
        ResponseFormat::JsonPair(a, b) => {
            let v = json_value(text, '{', '}').ok_or("not a JSON object")?;
            pair(&v, *a, *b)?
        }
        ResponseFormat::JsonArray { len, item } => {
            let v = json_value(text, '[', ']').ok_or("not a JSON array")?;
            let arr = v.as_array().ok_or("not a JSON array")?;
            if arr.len() != *len {
                return Err(format!("expected {len} items, got {}", arr.len()));
            }
            let items = arr
                .iter()
                .map(|x| match item {
                    Item::Scalar(s) => match scalar(x, *s)? {
                        Parsed::Null => Err("null item".to_string()),
                        p => Ok(p),
                    },
                    Item::Pair(a, b) => pair(x, *a, *b),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Parsed::List(items)
        }
        ResponseFormat::JsonStringList => {
            let v = json_value(text, '[', ']')
                .or_else(|| json_value(text, '{', '}'))
                .ok_or("not a JSON array")?;
            let arr = match &v {
                Value::Array(a) => a,
                Value::Object(o) => o
                    .get("predicates")
                    .and_then(Value::as_array)
                    .ok_or("object without a \"predicates\" array")?,
                _ => return Err("not a JSON array".into()),
            };
            Parsed::List(
                arr.iter()
                    .map(|x| match x {
                        Value::String(s) => Ok(Parsed::Text(s.clone())),
                        other => Err(format!("expected a string, got {other}")),
                    })
                    .collect::<Result<_, _>>()?,
            )
        }
    };
    Ok(Some(parsed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn booleans() {
        for (t, want) in [
            ("true", Some(true)),
            ("False", Some(false)),
            ("TRUE.", Some(true)),
            ("\"false\"", Some(false)),
            ("```\ntrue\n```", Some(true)),
            ("The answer is true", Some(true)),
            ("true or false", None),
            ("maybe", None),
        ] {
            assert_eq!(parse_bool(t), want, "{t}");
        }
    }

    #[test]
    fn arrays_are_length_checked() {
        let f = ResponseFormat::JsonArray {
            len: 3,
            item: Item::Scalar(Scalar::Bool),
        };
        assert_eq!(
            parse_response("[true,false,true]", &f).unwrap(),
            Some(Parsed::List(vec![Parsed::Bool(true), Parsed::Bool(false), Parsed::Bool(true)]))
        );
        let err = parse_response("[true,false]", &f).unwrap_err();
        assert!(err.contains("expected 3"), "{err}");
    }

    #[test]
    fn pairs_allow_a_missing_second_verdict() {
        let f = ResponseFormat::JsonPair(Scalar::Bool, Scalar::Bool);
        assert_eq!(
            parse_response(r#"{"first": false}"#, &f).unwrap(),
            Some(Parsed::Pair(Box::new(Parsed::Bool(false)), Box::new(Parsed::Null)))
        );
        assert!(parse_response(r#"{"second": true}"#, &f).is_err());
    }

    #[test]
    fn string_lists_accept_the_marked_object() {
        let got = parse_response(
            r#"Output: {"predicates": ["a != 'nan'"], "entire": true}"#,
            &ResponseFormat::JsonStringList,
        )
        .unwrap();
        assert_eq!(got, Some(Parsed::List(vec![Parsed::Text("a != 'nan'".into())])));
    }
}
