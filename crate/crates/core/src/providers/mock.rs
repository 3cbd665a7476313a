//! Deterministic offline providers.
//!
//! Every mock here is a pure function of its input and its fixture, so
//! repeated calls return byte-identical output.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;

use super::{
    ChatProvider, ChatRequest, EmbeddingProvider, NliLabel, NliProvider, NliVerdict,
    ProviderError, ProviderResult,
};
use crate::text::{normalize_for_dedup, stopwords, tokenize};

pub const DEFAULT_MOCK_DIMENSION: usize = 64;

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

// ---------------------------------------------------------------- chat

/// Prompt-to-completion lookup table with a fallback string.
///
/// Entries keyed by `(prompt, seed)` take precedence over prompt-only
/// entries, which lets over-sampling strategies script distinct candidates.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    table: HashMap<String, String>,
    seeded: HashMap<(String, u64), String>,
    default: String,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(default: impl Into<String>) -> Self {
        Self {
            default: default.into(),
            ..Self::default()
        }
    }

    pub fn with_table(table: HashMap<String, String>, default: impl Into<String>) -> Self {
        Self {
            table,
            default: default.into(),
            ..Self::default()
        }
    }

    pub fn script(mut self, prompt: impl Into<String>, completion: impl Into<String>) -> Self {
        self.table.insert(prompt.into(), completion.into());
        self
    }

    pub fn script_seeded(
        mut self,
        prompt: impl Into<String>,
        seed: u64,
        completion: impl Into<String>,
    ) -> Self {
        self.seeded
            .insert((prompt.into(), seed), completion.into());
        self
    }

    /// Requests received so far, in call order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().clone()
    }
}

#[async_trait]
impl ChatProvider for ScriptedChat {
    fn name(&self) -> String {
        "scripted-chat".into()
    }

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String> {
        req.validate()?;
        self.calls.lock().push(req.clone());
        if let Some(seed) = req.seed {
            if let Some(hit) = self.seeded.get(&(req.prompt.clone(), seed)) {
                return Ok(hit.clone());
            }
        }
        Ok(self
            .table
            .get(&req.prompt)
            .cloned()
            .unwrap_or_else(|| self.default.clone()))
    }
}

/// Wraps a chat provider and injects failures.
pub struct FailingChat {
    inner: Arc<dyn ChatProvider>,
    fail_first: AtomicUsize,
    fail_marker: Option<String>,
    outage: AtomicBool,
    attempts: AtomicUsize,
}

impl FailingChat {
    /// Fails the first `n` calls with a transport error, then delegates.
    pub fn fail_first(n: usize, inner: Arc<dyn ChatProvider>) -> Self {
        Self {
            inner,
            fail_first: AtomicUsize::new(n),
            fail_marker: None,
            outage: AtomicBool::new(false),
            attempts: AtomicUsize::new(0),
        }
    }

    /// Fails every call whose prompt contains `marker`.
    pub fn fail_when_contains(marker: impl Into<String>, inner: Arc<dyn ChatProvider>) -> Self {
        Self {
            fail_marker: Some(marker.into()),
            ..Self::fail_first(0, inner)
        }
    }

    /// Toggles a full outage: every call fails while set.
    pub fn set_outage(&self, down: bool) {
        self.outage.store(down, Ordering::SeqCst);
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ChatProvider for FailingChat {
    fn name(&self) -> String {
        format!("failing({})", self.inner.name())
    }

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        if self.outage.load(Ordering::SeqCst) {
            return Err(ProviderError::Transport("simulated outage".into()));
        }
        if self
            .fail_first
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ProviderError::Transport("simulated failure".into()));
        }
        if let Some(marker) = &self.fail_marker {
            if req.prompt.contains(marker.as_str()) {
                return Err(ProviderError::Transport("simulated failure".into()));
            }
        }
        self.inner.complete(req).await
    }
}

/// Offline chat model that recognizes the crate's own prompt templates and
/// answers each kind by rule:
///
/// - generation prompts get a generic, persona-free reply built from the last
///   utterance (the seed picks the opener, so over-sampling yields variety);
/// - refinement prompts get the general response followed by every listed
///   memory sentence, i.e. a refiner that injects what it retrieved;
/// - extraction prompts get triples mined from first-person statements
///   ("I love X", "I'm Y");
/// - summary prompts get a one-paragraph digest of the session.
#[derive(Debug, Default, Clone)]
pub struct RuleBasedChat;

const OPENERS: [&str; 8] = [
    "That's interesting!",
    "Oh, really?",
    "I see what you mean.",
    "Sounds good to me.",
    "Hmm, good question.",
    "Nice, thanks for sharing.",
    "Honestly, I agree.",
    "Well, that's a fair point.",
];

const FOLLOW_UPS: [&str; 4] = [
    "Tell me more about {topic}.",
    "What do you like most about {topic}?",
    "I have been thinking about {topic} too.",
    "How did you get into {topic}?",
];

struct PromptHead<'a> {
    speaker: &'a str,
    other: &'a str,
}

fn parse_head(prompt: &str) -> Option<PromptHead<'_>> {
    let first = prompt.lines().next()?;
    let (speaker, rest) = first.split_once(" is chatting with ")?;
    let other = rest.trim_end().trim_end_matches('.');
    Some(PromptHead { speaker, other })
}

/// Lines of the block that follows the first line ending in `header_suffix`,
/// up to the next blank line.
fn block_after<'a>(prompt: &'a str, header_suffix: &str) -> Vec<&'a str> {
    let mut lines = prompt.lines();
    for line in lines.by_ref() {
        if line.trim_end().ends_with(header_suffix) {
            break;
        }
    }
    lines.take_while(|l| !l.trim().is_empty()).collect()
}

fn json_reply(speaker: &str, text: &str) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert(speaker.to_string(), serde_json::Value::String(text.to_string()));
    serde_json::Value::Object(obj).to_string()
}

fn third_person(verb: &str) -> String {
    match verb {
        "have" => "has".into(),
        "am" => "is".into(),
        v if v.ends_with('s') || v.ends_with("sh") || v.ends_with("ch") || v.ends_with('x') => {
            format!("{v}es")
        }
        v => format!("{v}s"),
    }
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

impl RuleBasedChat {
    fn generate(&self, prompt: &str, seed: u64) -> Option<String> {
        let head = parse_head(prompt)?;
        let dialogue = block_after(prompt, "is as follows:");
        let last = dialogue
            .last()
            .and_then(|l| l.split_once(": "))
            .map(|(_, t)| t)
            .unwrap_or("");
        let stop = stopwords();
        let content: Vec<String> = tokenize(last)
            .tokens()
            .iter()
            .filter(|t| !stop.contains(t.as_str()) && t.len() > 2)
            .cloned()
            .collect();
        let topic = content.last().cloned().unwrap_or_else(|| "that".into());
        let h = fnv1a64(last.as_bytes()).wrapping_add(seed);
        let opener = OPENERS[(h % OPENERS.len() as u64) as usize];
        let follow = FOLLOW_UPS[((h / 8) % FOLLOW_UPS.len() as u64) as usize];
        let reply = format!("{opener} {}", follow.replace("{topic}", &topic));
        Some(json_reply(head.speaker, &reply))
    }

    fn refine(&self, prompt: &str) -> Option<String> {
        let head = parse_head(prompt)?;
        let marker = format!("{} was about to reply: ", head.speaker);
        let quoted = prompt
            .lines()
            .find_map(|l| l.strip_prefix(marker.as_str()))?;
        // The quoted slot uses JSON string escaping.
        let general: String = serde_json::from_str(quoted).ok()?;
        let memory: Vec<&str> = block_after(prompt, "with the following information:")
            .into_iter()
            .filter_map(|l| l.strip_prefix("- "))
            .collect();
        let mut out = general;
        for m in memory {
            out.push(' ');
            out.push_str(m);
        }
        Some(json_reply(head.speaker, &out))
    }

    fn extract(&self, prompt: &str) -> String {
        let mut triples = Vec::new();
        for line in block_after(prompt, ":").into_iter() {
            let Some((name, text)) = line.split_once(": ") else {
                continue;
            };
            for s in sentences(text) {
                let words: Vec<&str> = s.split_whitespace().collect();
                let (relation, object) = match words.as_slice() {
                    ["I'm", rest @ ..] | ["I", "am", rest @ ..] if !rest.is_empty() => {
                        ("is".to_string(), rest.join(" "))
                    }
                    ["I", verb, rest @ ..] if !rest.is_empty() => {
                        (third_person(&verb.to_lowercase()), rest.join(" "))
                    }
                    _ => continue,
                };
                let object = object.trim_end_matches([',', ';']).to_string();
                triples.push(serde_json::json!({
                    "name": name,
                    "relation": relation,
                    "object": object,
                }));
            }
        }
        serde_json::Value::Array(triples).to_string()
    }

    fn summarize(&self, prompt: &str) -> Option<String> {
        let head = parse_head(prompt)?;
        let dialogue = block_after(prompt, "is as follows:");
        let mut parts = vec![format!("{} talked with {}.", head.speaker, head.other)];
        for line in dialogue {
            if let Some((name, text)) = line.split_once(": ") {
                if let Some(first) = sentences(text).next() {
                    parts.push(format!("{name} said: {first}."));
                }
            }
        }
        Some(parts.join(" "))
    }
}

#[async_trait]
impl ChatProvider for RuleBasedChat {
    fn name(&self) -> String {
        "rule-based-mock-chat".into()
    }

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String> {
        req.validate()?;
        let p = req.prompt.as_str();
        let out = if p.contains(" was about to reply: \"") {
            self.refine(p)
        } else if p.contains("# Task: Extract personal facts") {
            Some(self.extract(p))
        } else if p.contains("# Task: Summarize") {
            self.summarize(p)
        } else if p.contains("# Task: Output") {
            self.generate(p, req.seed.unwrap_or(0))
        } else {
            None
        };
        Ok(out.unwrap_or_else(|| "OK".to_string()))
    }
}

// ----------------------------------------------------------- embedding

/// Hashed bag-of-words embedder: each token increments bucket
/// `fnv1a64(token) % dimension`, then the vector is L2-normalized.
/// Similarity therefore tracks lexical overlap.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_MOCK_DIMENSION)
    }
}

impl HashedEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize
    }

    /// Un-normalized token counts per bucket.
    pub fn token_counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            // Punctuation-only input still gets a non-zero vector.
            v[self.bucket(text.trim())] += 1.0;
        } else {
            for t in tokens.tokens() {
                v[self.bucket(t)] += 1.0;
            }
        }
        v
    }
}

#[async_trait]
impl EmbeddingProvider for HashedEmbedder {
    fn name(&self) -> String {
        format!("hashed-bow-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let mut v = self.token_counts(text);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

// ----------------------------------------------------------------- NLI

/// Table-driven NLI mock. Unscripted pairs are neutral, except that a
/// premise identical to its hypothesis always entails. With the optional
/// containment rule, a hypothesis that contains the premise verbatim
/// (ignoring case, spacing and the final period) also entails.
#[derive(Debug, Default, Clone)]
pub struct ScriptedNli {
    table: HashMap<(String, String), NliLabel>,
    containment: bool,
}

impl ScriptedNli {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_table(table: HashMap<(String, String), NliLabel>) -> Self {
        Self {
            table,
            containment: false,
        }
    }

    pub fn script(
        mut self,
        premise: impl Into<String>,
        hypothesis: impl Into<String>,
        label: NliLabel,
    ) -> Self {
        self.table.insert((premise.into(), hypothesis.into()), label);
        self
    }

    pub fn with_containment_rule(mut self, on: bool) -> Self {
        self.containment = on;
        self
    }
}

#[async_trait]
impl NliProvider for ScriptedNli {
    fn name(&self) -> String {
        if self.containment {
            "scripted-nli+containment".into()
        } else {
            "scripted-nli".into()
        }
    }

    async fn classify(&self, premise: &str, hypothesis: &str) -> ProviderResult<NliVerdict> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        if let Some(label) = self
            .table
            .get(&(premise.to_string(), hypothesis.to_string()))
        {
            return Ok(NliVerdict::new(*label, 1.0));
        }
        if premise == hypothesis {
            return Ok(NliVerdict::new(NliLabel::Entail, 1.0));
        }
        if self.containment {
            let p = normalize_for_dedup(premise);
            let p = p.trim_end_matches('.');
            if !p.is_empty() && normalize_for_dedup(hypothesis).contains(p) {
                return Ok(NliVerdict::new(NliLabel::Entail, 1.0));
            }
        }
        Ok(NliVerdict::new(NliLabel::Neutral, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn scripted_lookup_and_default() {
        let chat = ScriptedChat::new("fallback").script("P1", "R1");
        assert_eq!(chat.complete(&ChatRequest::new("P1")).await.unwrap(), "R1");
        assert_eq!(
            chat.complete(&ChatRequest::new("other")).await.unwrap(),
            "fallback"
        );
        assert_eq!(chat.calls().len(), 2);
    }

    #[tokio::test]
    async fn scripted_seed_entries_take_precedence() {
        let chat = ScriptedChat::new("d")
            .script("P", "plain")
            .script_seeded("P", 3, "seeded");
        let req = ChatRequest::new("P");
        assert_eq!(chat.complete(&req).await.unwrap(), "plain");
        assert_eq!(
            chat.complete(&req.clone().with_seed(Some(3))).await.unwrap(),
            "seeded"
        );
        assert_eq!(
            chat.complete(&req.with_seed(Some(4))).await.unwrap(),
            "plain"
        );
    }

    #[tokio::test]
    async fn failing_chat_recovers() {
        let chat = FailingChat::fail_first(2, Arc::new(ScriptedChat::new("ok")));
        let req = ChatRequest::new("x");
        assert!(chat.complete(&req).await.is_err());
        assert!(chat.complete(&req).await.is_err());
        assert_eq!(chat.complete(&req).await.unwrap(), "ok");
        chat.set_outage(true);
        assert!(chat.complete(&req).await.is_err());
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn token_counts_accumulate() {
        let e = HashedEmbedder::new(16);
        let one = e.token_counts("a");
        let two = e.token_counts("a a");
        let doubled: Vec<f64> = one.iter().map(|x| 2.0 * x).collect();
        assert_eq!(two, doubled);
    }

    #[tokio::test]
    async fn embedding_is_normalized_and_deterministic() {
        let e = HashedEmbedder::new(16);
        let a = e.embed("Rajiv is learning guitar").await.unwrap();
        let b = e.embed("Rajiv is learning guitar").await.unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(e.embed("a a").await.unwrap(), e.embed("a").await.unwrap());
        assert!(matches!(e.embed("  ").await, Err(ProviderError::EmptyInput)));
        assert!(e.embed("!!!").await.is_ok());
    }

    #[tokio::test]
    async fn nli_rules() {
        let nli = ScriptedNli::new().script("p", "h", NliLabel::Entail);
        let v = nli.classify("p", "h").await.unwrap();
        assert_eq!(v.label, NliLabel::Entail);
        assert_eq!(v.confidence, 1.0);
        assert_eq!(nli.classify("p", "x").await.unwrap().label, NliLabel::Neutral);
        assert_eq!(
            nli.classify("same", "same").await.unwrap().label,
            NliLabel::Entail
        );
        assert_eq!(
            nli.classify("Rajiv likes tea.", "Hi. rajiv likes  tea. Bye")
                .await
                .unwrap()
                .label,
            NliLabel::Neutral
        );
        let nli = nli.with_containment_rule(true);
        assert_eq!(
            nli.classify("Rajiv likes tea.", "Hi. rajiv likes  tea. Bye")
                .await
                .unwrap()
                .label,
            NliLabel::Entail
        );
    }

    #[tokio::test]
    async fn rule_based_extraction() {
        let prompt = "The following is a conversation between A and B:\nA: I love hiking. I'm a painter.\nB: Cool.\n\n# Task: Extract personal facts about each speaker as (name, relation, object) triples.";
        let out = RuleBasedChat
            .complete(&ChatRequest::new(prompt))
            .await
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(
            v,
            serde_json::json!([
                {"name": "A", "relation": "loves", "object": "hiking"},
                {"name": "A", "relation": "is", "object": "a painter"}
            ])
        );
    }
}
