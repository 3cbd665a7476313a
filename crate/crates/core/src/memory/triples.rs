//! Personal-knowledge triples: extraction from a session, parsing of the
//! extractor's JSON, and verbalization into memory sentences.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::MemoryError;
use crate::dialogue::SessionTranscript;
use crate::pipeline::prompts;
use crate::providers::{ChatProvider, ChatRequest};

/// A `(name, relation, object)` fact. Fields are trimmed and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersonaTriple {
    name: String,
    relation: String,
    object: String,
}

impl PersonaTriple {
    pub fn new(
        name: impl AsRef<str>,
        relation: impl AsRef<str>,
        object: impl AsRef<str>,
    ) -> Result<Self, MemoryError> {
        let (name, relation, object) = (
            name.as_ref().trim(),
            relation.as_ref().trim(),
            object.as_ref().trim(),
        );
        if name.is_empty() {
            return Err(MemoryError::InvalidTriple("name"));
        }
        if relation.is_empty() {
            return Err(MemoryError::InvalidTriple("relation"));
        }
        if object.is_empty() {
            return Err(MemoryError::InvalidTriple("object"));
        }
        Ok(Self {
            name: name.into(),
            relation: relation.into(),
            object: object.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn verbalize(&self) -> String {
        format!("{} {} {}.", self.name, self.relation, self.object)
    }

    /// Inverse of [`verbalize`](Self::verbalize) given the name and relation
    /// the sentence was built from.
    pub fn parse_sentence(sentence: &str, name: &str, relation: &str) -> Option<Self> {
        let body = sentence.strip_suffix('.')?;
        let object = body
            .strip_prefix(name)?
            .strip_prefix(' ')?
            .strip_prefix(relation)?
            .strip_prefix(' ')?;
        Self::new(name, relation, object).ok()
    }
}

/// `"{name} {relation} {object}."`
pub fn verbalize_triple(t: &PersonaTriple) -> String {
    t.verbalize()
}

fn strip_code_fences(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    // Drop the info string (e.g. "json") on the opening fence line.
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

fn triple_from_value(v: &Value) -> Option<PersonaTriple> {
    match v {
        Value::Object(map) => {
            let field = |keys: &[&str]| {
                keys.iter()
                    .find_map(|k| map.get(*k).and_then(Value::as_str))
            };
            PersonaTriple::new(
                field(&["name", "subject"])?,
                field(&["relation", "predicate"])?,
                field(&["object"])?,
            )
            .ok()
        }
        Value::Array(items) if items.len() == 3 => PersonaTriple::new(
            items[0].as_str()?,
            items[1].as_str()?,
            items[2].as_str()?,
        )
        .ok(),
        _ => None,
    }
}

fn triples_from_value(v: &Value) -> Option<Vec<PersonaTriple>> {
    let items = match v {
        Value::Array(items) => items.as_slice(),
        Value::Object(map) => match map.get("triples") {
            Some(Value::Array(items)) => items.as_slice(),
            _ => std::slice::from_ref(v),
        },
        _ => return None,
    };
    Some(items.iter().filter_map(triple_from_value).collect())
}

/// Parses extractor output into triples, dropping invalid elements.
///
/// Accepts a JSON list of `{name, relation, object}` objects or 3-element
/// arrays, optionally wrapped in `{"triples": [...]}` or a code fence. One
/// repair pass trims any non-JSON prefix and suffix. Empty output is an
/// empty list; anything else that still fails to parse is an error.
pub fn parse_triples(output: &str) -> Result<Vec<PersonaTriple>, MemoryError> {
    let body = strip_code_fences(output);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    if let Ok(v) = serde_json::from_str::<Value>(body) {
        if let Some(t) = triples_from_value(&v) {
            return Ok(t);
        }
    }
    let repaired = [('[', ']'), ('{', '}')].iter().find_map(|&(open, close)| {
        let start = body.find(open)?;
        let end = body.rfind(close)?;
        (start < end)
            .then(|| serde_json::from_str::<Value>(&body[start..=end]).ok())
            .flatten()
            .and_then(|v| triples_from_value(&v))
    });
    repaired.ok_or_else(|| {
        let mut snippet: String = body.chars().take(80).collect();
        if body.chars().count() > 80 {
            snippet.push('…');
        }
        MemoryError::Parse(snippet)
    })
}

/// Prompts `extractor` for the personal facts stated in `session`.
pub async fn extract_triples(
    session: &SessionTranscript,
    extractor: &dyn ChatProvider,
) -> Result<Vec<PersonaTriple>, MemoryError> {
    if session.is_empty() {
        return Err(MemoryError::EmptySession);
    }
    let prompt = prompts::render_extraction_prompt(session);
    let output = extractor.complete(&ChatRequest::new(prompt)).await?;
    parse_triples(&output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: &str, r: &str, o: &str) -> PersonaTriple {
        PersonaTriple::new(n, r, o).unwrap()
    }

    #[test]
    fn verbalization() {
        assert_eq!(
            t("Rajiv", "is learning", "guitar basics").verbalize(),
            "Rajiv is learning guitar basics."
        );
        assert_eq!(
            verbalize_triple(&t("Francisco", "plans to collaborate with", "Abigail Chen")),
            "Francisco plans to collaborate with Abigail Chen."
        );
        assert_eq!(t("A", "likes", "B").verbalize(), "A likes B.");
    }

    #[test]
    fn empty_fields_rejected() {
        assert!(matches!(
            PersonaTriple::new(" ", "likes", "B"),
            Err(MemoryError::InvalidTriple("name"))
        ));
        assert!(matches!(
            PersonaTriple::new("A", "", "B"),
            Err(MemoryError::InvalidTriple("relation"))
        ));
        assert!(matches!(
            PersonaTriple::new("A", "likes", "\t"),
            Err(MemoryError::InvalidTriple("object"))
        ));
    }

    #[test]
    fn parse_variants() {
        let expected = vec![t("Rajiv", "is learning", "guitar basics")];
        for raw in [
            r#"[{"name":"Rajiv","relation":"is learning","object":"guitar basics"}]"#,
            r#"[["Rajiv","is learning","guitar basics"]]"#,
            r#"{"triples":[{"name":"Rajiv","relation":"is learning","object":"guitar basics"}]}"#,
            "```json\n[{\"name\":\"Rajiv\",\"relation\":\"is learning\",\"object\":\"guitar basics\"}]\n```",
            "Here you go: [[\"Rajiv\",\"is learning\",\"guitar basics\"]] Hope that helps!",
        ] {
            assert_eq!(parse_triples(raw).unwrap(), expected, "input: {raw}");
        }
    }

    #[test]
    fn parse_empty_and_partial() {
        assert!(parse_triples("").unwrap().is_empty());
        assert!(parse_triples("  \n").unwrap().is_empty());
        assert!(parse_triples("[]").unwrap().is_empty());
        let got = parse_triples(
            r#"[{"name":"A","relation":"likes","object":"B"},{"name":"","relation":"x","object":"y"}, 7]"#,
        )
        .unwrap();
        assert_eq!(got, vec![t("A", "likes", "B")]);
    }

    #[test]
    fn parse_failure_after_repair() {
        assert!(matches!(
            parse_triples("no facts here, sorry"),
            Err(MemoryError::Parse(_))
        ));
        assert!(matches!(parse_triples("[oops"), Err(MemoryError::Parse(_))));
    }
}
