//! Fixture files for the scripted mocks.
//!
//! Chat fixture: a JSON object mapping prompt to completion.
//! NLI fixture: a JSON object mapping premise to an object mapping
//! hypothesis to label (`entail` / `neutral` / `contradict`).

use std::collections::HashMap;
use std::path::Path;

use super::mock::{ScriptedChat, ScriptedNli};
use super::NliLabel;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing fixture {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown NLI label {label:?} for premise {premise:?}")]
    Label { premise: String, label: String },
}

fn read(path: &Path) -> Result<String, FixtureError> {
    std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_chat_fixture(json: &str) -> Result<HashMap<String, String>, serde_json::Error> {
    serde_json::from_str(json)
}

pub fn load_chat_fixture(path: &Path, default: &str) -> Result<ScriptedChat, FixtureError> {
    let table = parse_chat_fixture(&read(path)?).map_err(|source| FixtureError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ScriptedChat::with_table(table, default))
}

pub fn parse_nli_fixture(
    json: &str,
) -> Result<HashMap<(String, String), NliLabel>, FixtureError> {
    let nested: HashMap<String, HashMap<String, String>> =
        serde_json::from_str(json).map_err(|source| FixtureError::Parse {
            path: "<inline>".into(),
            source,
        })?;
    let mut table = HashMap::new();
    for (premise, row) in nested {
        for (hypothesis, label) in row {
            let parsed = NliLabel::parse(&label).ok_or_else(|| FixtureError::Label {
                premise: premise.clone(),
                label: label.clone(),
            })?;
            table.insert((premise.clone(), hypothesis), parsed);
        }
    }
    Ok(table)
}

pub fn load_nli_fixture(path: &Path) -> Result<ScriptedNli, FixtureError> {
    let table = parse_nli_fixture(&read(path)?).map_err(|e| match e {
        FixtureError::Parse { source, .. } => FixtureError::Parse {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })?;
    Ok(ScriptedNli::with_table(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ChatProvider, ChatRequest, NliProvider};

    #[tokio::test]
    async fn chat_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chat.json");
        std::fs::write(&path, r#"{"P1": "R1"}"#).unwrap();
        let chat = load_chat_fixture(&path, "dflt").unwrap();
        assert_eq!(chat.complete(&ChatRequest::new("P1")).await.unwrap(), "R1");
        assert_eq!(chat.complete(&ChatRequest::new("P2")).await.unwrap(), "dflt");
    }

    #[tokio::test]
    async fn nli_fixture_labels() {
        let table =
            parse_nli_fixture(r#"{"Rajiv plays guitar.": {"I play guitar.": "entailment"}}"#)
                .unwrap();
        let nli = ScriptedNli::with_table(table);
        let v = nli
            .classify("Rajiv plays guitar.", "I play guitar.")
            .await
            .unwrap();
        assert_eq!(v.label, NliLabel::Entail);
        assert!(matches!(
            parse_nli_fixture(r#"{"p": {"h": "perhaps"}}"#),
            Err(FixtureError::Label { .. })
        ));
    }
}
