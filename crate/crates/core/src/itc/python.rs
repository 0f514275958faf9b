//! Just enough Python reading to pull fenced code blocks and function
//! signatures out of model replies.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use crate::tool_hub::{ParamSpec, ParamType};

/// Fenced code blocks in order, with the byte offset where each fence opens.
pub fn code_blocks(text: &str) -> Vec<(usize, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```").expect("static regex"));
    re.captures_iter(text)
        .map(|c| (c.get(0).expect("match").start(), c[1].trim_end().to_owned()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PySignature {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub returns: ParamType,
}

impl PySignature {
    pub fn render(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
        format!("{}({}) -> {}", self.name, params.join(", "), self.returns)
    }
}

fn def_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?ms)^[ \t]*def[ \t]+([A-Za-z_][A-Za-z0-9_]*)[ \t]*\((.*?)\)[ \t]*(?:->[ \t]*([^:\n]+?))?[ \t]*:")
            .expect("static regex")
    })
}

/// Split on commas that are not nested inside brackets or quotes.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, '[' | '(' | '{') => depth += 1,
            (None, ']' | ')' | '}') => depth -= 1,
            (None, ',') if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn python_literal(s: &str) -> Option<Value> {
    let s = s.trim();
    match s {
        "True" => return Some(Value::Bool(true)),
        "False" => return Some(Value::Bool(false)),
        _ => {}
    }
    if let Ok(i) = s.parse::<i64>() {
        return Some(Value::from(i));
    }
    if let Ok(f) = s.parse::<f64>() {
        return f.is_finite().then(|| Value::from(f));
    }
    let unquoted = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .or_else(|| s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')))?;
    Some(Value::String(unquoted.to_owned()))
}

/// Parse the first `def` in `code`. Every parameter and the return value
/// must carry a recognized type annotation.
pub fn parse_def(code: &str) -> Result<PySignature, String> {
    let c = def_pattern().captures(code).ok_or("no function definition found")?;
    let name = c[1].to_owned();
    let mut params = Vec::new();
    for raw in split_top_level(&c[2]) {
        if raw.starts_with('*') || raw == "/" {
            return Err(format!("{name}: variadic or positional-only parameter `{raw}` is not supported"));
        }
        let (head, default) = match raw.split_once('=') {
            Some((h, d)) => (h.trim(), Some(d.trim())),
            None => (raw, None),
        };
        let (pname, annotation) = head
            .split_once(':')
            .map(|(n, a)| (n.trim(), a.trim()))
            .ok_or_else(|| format!("{name}: parameter `{head}` lacks a type annotation"))?;
        let ty = ParamType::from_annotation(annotation)
            .ok_or_else(|| format!("{name}: unsupported annotation `{annotation}` on `{pname}`"))?;
        let spec = match default {
            None => ParamSpec::required(pname, ty, ""),
            Some("None") => ParamSpec {
                required: false,
                ..ParamSpec::required(pname, ty, "")
            },
            Some(d) => {
                let v = python_literal(d).ok_or_else(|| format!("{name}: unsupported default `{d}` for `{pname}`"))?;
                ParamSpec::optional(pname, ty, v, "")
            }
        };
        params.push(spec);
    }
    let ret = c.get(3).map(|m| m.as_str().trim()).ok_or_else(|| format!("{name}: missing return annotation"))?;
    let returns = ParamType::from_annotation(ret).ok_or_else(|| format!("{name}: unsupported return annotation `{ret}`"))?;
    Ok(PySignature { name, params, returns })
}

/// First line of the function's docstring, if any.
pub fn docstring(code: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"(?s):\s*\n\s*(?:"""|''')\s*(.*?)(?:"""|''')"#).expect("static regex"));
    re.captures(code)
        .and_then(|c| c[1].lines().next().map(|l| l.trim().to_owned()))
        .filter(|s| !s.is_empty())
}
