//! Multi-session dialogue corpora: schema, loading and a synthetic
//! generator for offline runs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{SessionTranscript, Turn};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is not valid: {message} (line {line}, column {column})")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("corpus schema violation at {location}: {message}")]
    Schema { location: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub dialogues: Vec<MultiSessionDialogue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSessionDialogue {
    pub dialogue_id: String,
    pub speakers: [String; 2],
    #[serde(rename = "personas", default)]
    pub predefined_personas: BTreeMap<String, Vec<String>>,
    pub sessions: Vec<Vec<Turn>>,
}

impl MultiSessionDialogue {
    pub fn personas(&self, speaker: &str) -> &[String] {
        self.predefined_personas
            .get(speaker)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn transcript(&self, session: usize) -> Option<SessionTranscript> {
        let turns = self.sessions.get(session)?;
        SessionTranscript::new(self.speakers.clone(), turns.clone()).ok()
    }

    pub fn other(&self, speaker: &str) -> Option<&str> {
        match speaker {
            s if s == self.speakers[0] => Some(&self.speakers[1]),
            s if s == self.speakers[1] => Some(&self.speakers[0]),
            _ => None,
        }
    }
}

fn violation(location: String, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        location,
        message: message.into(),
    }
}

impl Corpus {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut ids = std::collections::HashSet::new();
        for (di, d) in self.dialogues.iter().enumerate() {
            let at = |rest: &str| format!("dialogues[{di}]{rest}");
            if d.dialogue_id.trim().is_empty() {
                return Err(violation(at(".dialogue_id"), "empty dialogue id"));
            }
            if !ids.insert(d.dialogue_id.as_str()) {
                return Err(violation(
                    at(".dialogue_id"),
                    format!("duplicate dialogue id {:?}", d.dialogue_id),
                ));
            }
            for (i, s) in d.speakers.iter().enumerate() {
                if s.trim().is_empty() {
                    return Err(violation(at(&format!(".speakers[{i}]")), "empty speaker"));
                }
            }
            if d.speakers[0] == d.speakers[1] {
                return Err(violation(at(".speakers"), "speakers must differ"));
            }
            for (speaker, sentences) in &d.predefined_personas {
                if !d.speakers.contains(speaker) {
                    return Err(violation(
                        at(&format!(".personas.{speaker}")),
                        "persona owner is not a speaker",
                    ));
                }
                if let Some(i) = sentences.iter().position(|s| s.trim().is_empty()) {
                    return Err(violation(
                        at(&format!(".personas.{speaker}[{i}]")),
                        "empty persona sentence",
                    ));
                }
            }
            if d.sessions.is_empty() {
                return Err(violation(at(".sessions"), "dialogue has no sessions"));
            }
            for (si, session) in d.sessions.iter().enumerate() {
                for (ti, t) in session.iter().enumerate() {
                    let loc = || at(&format!(".sessions[{si}][{ti}]"));
                    if !d.speakers.contains(&t.speaker) {
                        return Err(violation(
                            format!("{}.speaker", loc()),
                            format!("{:?} is not one of the dialogue's speakers", t.speaker),
                        ));
                    }
                    if t.text.trim().is_empty() {
                        return Err(violation(format!("{}.text", loc()), "empty utterance"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let corpus: Corpus = serde_json::from_str(text).map_err(|e| CorpusError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus always serializes")
    }
}

/// Reads and validates a corpus file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json(&text)
}

/// Shape of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockCorpusConfig {
    pub dialogues: usize,
    pub sessions: usize,
    pub turns_per_session: usize,
    pub personas_per_speaker: usize,
}

impl Default for MockCorpusConfig {
    fn default() -> Self {
        Self {
            dialogues: 5,
            sessions: 3,
            turns_per_session: 6,
            personas_per_speaker: 3,
        }
    }
}

const NAMES: [&str; 12] = [
    "Ava", "Bruno", "Chloe", "Dmitri", "Elena", "Farid", "Grace", "Hiro", "Imani", "Jonas", "Keiko",
    "Luis",
];

const HOBBIES: [&str; 16] = [
    "painting",
    "hiking",
    "guitar",
    "baking",
    "gardening",
    "chess",
    "swimming",
    "photography",
    "poetry",
    "birdwatching",
    "pottery",
    "cycling",
    "jazz",
    "astronomy",
    "knitting",
    "surfing",
];

const TRAITS: [&str; 8] = [
    "an early riser",
    "a night owl",
    "a big coffee drinker",
    "a teacher",
    "a nurse",
    "an engineer",
    "a dog person",
    "a cat person",
];

const PLACES: [&str; 6] = [
    "the park",
    "the library",
    "the lake",
    "the market",
    "the museum",
    "the beach",
];

fn statement(rng: &mut ChaCha8Rng, hobby: &str, trait_: &str) -> String {
    match rng.random_range(0..5) {
        0 => format!("I love {hobby}."),
        1 => format!("I'm {trait_}."),
        2 => format!("I practice {hobby} every weekend."),
        3 => format!("Yesterday I went to {}.", PLACES.choose(rng).unwrap()),
        _ => format!("Lately {hobby} keeps me busy."),
    }
}

fn question(rng: &mut ChaCha8Rng, other_hobby: &str) -> String {
    match rng.random_range(0..3) {
        0 => format!("Do you still enjoy {other_hobby}?"),
        1 => format!("How is your {other_hobby}?"),
        _ => format!("Any news about your {other_hobby}?"),
    }
}

/// Deterministic synthetic corpus: each speaker has a few hobbies stated as
/// personas, and sessions alternate first-person statements with questions
/// about the interlocutor's hobbies.
pub fn generate_mock_corpus(cfg: &MockCorpusConfig, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogues = Vec::with_capacity(cfg.dialogues);
    for d in 0..cfg.dialogues {
        let mut names = NAMES.to_vec();
        names.shuffle(&mut rng);
        let speakers = [names[0].to_string(), names[1].to_string()];
        let mut hobbies = HOBBIES.to_vec();
        hobbies.shuffle(&mut rng);
        let per = cfg.personas_per_speaker.max(1);
        let own: [Vec<&str>; 2] = [
            hobbies[..per].to_vec(),
            hobbies[per..2 * per].to_vec(),
        ];
        let traits = [*TRAITS.choose(&mut rng).unwrap(), *TRAITS.choose(&mut rng).unwrap()];
        let mut personas = BTreeMap::new();
        for (i, s) in speakers.iter().enumerate() {
            let sentences = own[i]
                .iter()
                .enumerate()
                .map(|(j, h)| match j % 3 {
                    0 => format!("{s} loves {h}."),
                    1 => format!("{s} practices {h} every weekend."),
                    _ => format!("{s} enjoys {h}."),
                })
                .collect();
            personas.insert(s.clone(), sentences);
        }
        let mut sessions = Vec::with_capacity(cfg.sessions);
        for _ in 0..cfg.sessions {
            let mut turns = Vec::with_capacity(cfg.turns_per_session);
            for t in 0..cfg.turns_per_session {
                let who = t % 2;
                let hobby = *own[who].choose(&mut rng).unwrap();
                let other_hobby = *own[1 - who].choose(&mut rng).unwrap();
                let mut text = statement(&mut rng, hobby, traits[who]);
                if rng.random_bool(0.75) {
                    text.push(' ');
                    text.push_str(&question(&mut rng, other_hobby));
                }
                turns.push(Turn::new(speakers[who].clone(), text));
            }
            sessions.push(turns);
        }
        dialogues.push(MultiSessionDialogue {
            dialogue_id: format!("mock-{d:03}"),
            speakers,
            predefined_personas: personas,
            sessions,
        });
    }
    Corpus { dialogues }
}
