//! Turns, dialogue contexts and session transcripts.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DialogueError {
    #[error("turn {index} has an empty {field}")]
    EmptyField { index: usize, field: &'static str },
    #[error("dialogue context has no turns")]
    NoTurns,
    #[error("speaker and interlocutor must differ (both {0:?})")]
    SameSpeaker(String),
    #[error("last turn must come from {expected:?}, found {found:?}")]
    WrongLastSpeaker { expected: String, found: String },
    #[error("turn {index} speaker {speaker:?} is not a participant")]
    UnknownSpeaker { index: usize, speaker: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }

    fn check(&self, index: usize) -> Result<(), DialogueError> {
        if self.speaker.trim().is_empty() {
            return Err(DialogueError::EmptyField {
                index,
                field: "speaker",
            });
        }
        if self.text.trim().is_empty() {
            return Err(DialogueError::EmptyField {
                index,
                field: "text",
            });
        }
        Ok(())
    }
}

/// Renders turns as `{speaker}: {text}` lines.
pub fn render_turns(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The current session as seen by the responding speaker: the last turn is
/// always the interlocutor's, so `speaker` replies next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawContext")]
pub struct DialogueContext {
    speaker: String,
    other: String,
    turns: Vec<Turn>,
}

#[derive(Deserialize)]
struct RawContext {
    speaker: String,
    other: String,
    turns: Vec<Turn>,
}

impl TryFrom<RawContext> for DialogueContext {
    type Error = DialogueError;

    fn try_from(raw: RawContext) -> Result<Self, Self::Error> {
        Self::new(raw.speaker, raw.other, raw.turns)
    }
}

impl DialogueContext {
    pub fn new(
        speaker: impl Into<String>,
        other: impl Into<String>,
        turns: Vec<Turn>,
    ) -> Result<Self, DialogueError> {
        let speaker = speaker.into();
        let other = other.into();
        if speaker == other {
            return Err(DialogueError::SameSpeaker(speaker));
        }
        for (i, t) in turns.iter().enumerate() {
            t.check(i)?;
        }
        let last = turns.last().ok_or(DialogueError::NoTurns)?;
        if last.speaker != other {
            return Err(DialogueError::WrongLastSpeaker {
                expected: other,
                found: last.speaker.clone(),
            });
        }
        Ok(Self {
            speaker,
            other,
            turns,
        })
    }

    pub fn speaker(&self) -> &str {
        &self.speaker
    }

    pub fn other(&self) -> &str {
        &self.other
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// The dialogue block used inside prompts.
    pub fn render_dialogue(&self) -> String {
        render_turns(&self.turns)
    }

    /// Utterance texts joined by newlines; the context retrieval query.
    pub fn concatenated_text(&self) -> String {
        self.turns
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A finished (or in-progress) session between two speakers. May be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub speakers: [String; 2],
    pub turns: Vec<Turn>,
}

impl SessionTranscript {
    pub fn new(speakers: [String; 2], turns: Vec<Turn>) -> Result<Self, DialogueError> {
        if speakers[0] == speakers[1] {
            return Err(DialogueError::SameSpeaker(speakers[0].clone()));
        }
        for (i, t) in turns.iter().enumerate() {
            t.check(i)?;
            if !speakers.contains(&t.speaker) {
                return Err(DialogueError::UnknownSpeaker {
                    index: i,
                    speaker: t.speaker.clone(),
                });
            }
        }
        Ok(Self { speakers, turns })
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn render_dialogue(&self) -> String {
        render_turns(&self.turns)
    }

    /// The other participant, if `speaker` is one of the two.
    pub fn interlocutor(&self, speaker: &str) -> Option<&str> {
        match speaker {
            s if s == self.speakers[0] => Some(&self.speakers[1]),
            s if s == self.speakers[1] => Some(&self.speakers[0]),
            _ => None,
        }
    }
}
