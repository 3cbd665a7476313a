use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Text extracted from a completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub text: String,
    /// Set when no JSON object keyed by the speaker could be recovered and
    /// `text` is the raw completion.
    pub unparsed: bool,
}

pub(crate) fn strip_code_fences(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

fn value_text(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn from_object(map: &Map<String, Value>, speaker: &str) -> Option<String> {
    if let Some(v) = map.get(speaker) {
        return value_text(v);
    }
    let key = speaker.trim().to_lowercase();
    if let Some((_, v)) = map.iter().find(|(k, _)| k.trim().to_lowercase() == key) {
        return value_text(v);
    }
    match map.len() {
        1 => map.values().next().and_then(value_text),
        _ => None,
    }
}

fn from_json(s: &str, speaker: &str) -> Option<String> {
    match serde_json::from_str::<Value>(s).ok()? {
        Value::Object(map) => from_object(&map, speaker),
        _ => None,
    }
}

fn unquote(s: &str) -> &str {
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// `{Name: text}`, `{'Name': 'text'}` and similar single-pair objects that
/// are not valid JSON.
fn from_loose_pair(inner: &str, speaker: &str) -> Option<String> {
    let (key, value) = inner.split_once(':')?;
    let key = unquote(key.trim()).trim();
    if !key.eq_ignore_ascii_case(speaker.trim()) {
        return None;
    }
    let value = unescape(unquote(value.trim().trim_end_matches(',').trim()));
    let value = value.trim();
    (!value.is_empty()).then(|| value.to_string())
}

/// Extracts the response keyed by `speaker` from a completion formatted as
/// `{"speaker": "response"}`.
///
/// One repair pass trims text around the outermost braces and tolerates
/// single quotes or an unquoted key. When that also fails the completion
/// itself (without code fences) is returned, flagged `unparsed`.
pub fn parse_json_response(completion: &str, speaker: &str) -> ParsedResponse {
    let body = strip_code_fences(completion);
    let parsed = from_json(body, speaker).or_else(|| {
        let start = body.find('{')?;
        let end = body.rfind('}')?;
        if start >= end {
            return None;
        }
        let slice = &body[start..=end];
        from_json(slice, speaker)
            .or_else(|| from_loose_pair(&slice[1..slice.len() - 1], speaker))
            .or_else(|| from_json(&slice.replace('\'', "\""), speaker))
    });
    match parsed {
        Some(text) => ParsedResponse {
            text,
            unparsed: false,
        },
        None => ParsedResponse {
            text: body.to_string(),
            unparsed: true,
        },
    }
}
