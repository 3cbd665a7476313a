//! Response-level and corpus-level evaluation metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::providers::{NliProvider, ProviderError};
pub use crate::text::{tokenize, TokenSequence};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("corpus has no {0}-grams")]
    NoNgrams(usize),
    #[error("n-gram order must be between 1 and 3, got {0}")]
    InvalidOrder(usize),
    #[error("no responses to aggregate")]
    EmptyCorpus,
    #[error("c-score needs at least one persona sentence")]
    NoPersona,
    #[error("nli provider failed: {0}")]
    Provider(#[from] ProviderError),
}

pub const DEFAULT_NGRAM_ORDER: usize = 2;

/// Shannon entropy (bits) of the n-gram distribution pooled over `corpus`.
pub fn ngram_entropy(corpus: &[TokenSequence], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidOrder(n));
    }
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    let mut total = 0u64;
    for seq in corpus {
        for gram in seq.tokens().windows(n) {
            *counts.entry(gram).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoNgrams(n));
    }
    // Summed in a fixed order so the result does not depend on hash seeds.
    let mut freqs: Vec<u64> = counts.into_values().collect();
    freqs.sort_unstable();
    let total = total as f64;
    let h = freqs
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

fn multiset<'a>(tokens: impl IntoIterator<Item = &'a String>) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

fn f1(matched: usize, predicted: usize, expected: usize) -> f64 {
    if matched == 0 || predicted == 0 || expected == 0 {
        return 0.0;
    }
    let p = matched as f64 / predicted as f64;
    let r = matched as f64 / expected as f64;
    2.0 * p * r / (p + r)
}

/// Unigram F1 between the response and the union of persona facts, both
/// without stopwords, using multiset intersection.
pub fn persona_f1(response: &TokenSequence, persona_facts: &[TokenSequence]) -> f64 {
    let response = response.without_stopwords();
    let facts: Vec<TokenSequence> = persona_facts.iter().map(|f| f.without_stopwords()).collect();
    let resp = multiset(response.tokens());
    let union = multiset(facts.iter().flat_map(|f| f.tokens()));
    let matched = resp
        .iter()
        .map(|(t, &c)| c.min(union.get(t).copied().unwrap_or(0)))
        .sum();
    f1(matched, response.len(), union.values().sum())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over the longest common token subsequence.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    f1(lcs, candidate.len(), reference.len())
}

/// Mean NLI label weight (entail +1, neutral 0, contradict -1) with each
/// persona sentence as premise and the response as hypothesis.
pub async fn c_score<S: AsRef<str>>(
    response: &str,
    persona_sentences: &[S],
    nli: &dyn NliProvider,
) -> Result<f64, MetricsError> {
    if persona_sentences.is_empty() {
        return Err(MetricsError::NoPersona);
    }
    let mut sum = 0.0;
    for s in persona_sentences {
        sum += nli.classify(s.as_ref(), response).await?.label.weight();
    }
    Ok(sum / persona_sentences.len() as f64)
}

/// Scores of one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMeasurement {
    pub c_score: f64,
    pub persona_f1: f64,
    pub rouge_l: f64,
    pub tokens: TokenSequence,
}

/// Scores `response` against its reference and the speaker's persona.
/// C-Score and Persona-F1 are 0 when there are no persona sentences;
/// ROUGE-L is 0 when the reference is empty.
pub async fn score_response<S: AsRef<str>>(
    response: &str,
    reference: &str,
    persona_sentences: &[S],
    nli: &dyn NliProvider,
) -> Result<ResponseMeasurement, MetricsError> {
    let tokens = tokenize(response);
    let c = if persona_sentences.is_empty() {
        0.0
    } else {
        c_score(response, persona_sentences, nli).await?
    };
    let facts: Vec<TokenSequence> = persona_sentences.iter().map(|s| tokenize(s.as_ref())).collect();
    Ok(ResponseMeasurement {
        c_score: c,
        persona_f1: persona_f1(&tokens, &facts),
        rouge_l: rouge_l(&tokens, &tokenize(reference)),
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c_score: f64,
    pub persona_f1: f64,
    pub entropy: f64,
    pub rouge_l: f64,
    pub n_responses: usize,
}

/// Means of the per-response scores plus entropy over the pooled
/// responses. A corpus without any n-gram has entropy 0.
pub fn aggregate(rows: &[ResponseMeasurement], n: usize) -> Result<MetricReport, MetricsError> {
    if !(1..=3).contains(&n) {
        return Err(MetricsError::InvalidOrder(n));
    }
    if rows.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let len = rows.len() as f64;
    let mean = |f: fn(&ResponseMeasurement) -> f64| rows.iter().map(f).sum::<f64>() / len;
    let corpus: Vec<TokenSequence> = rows.iter().map(|r| r.tokens.clone()).collect();
    let entropy = match ngram_entropy(&corpus, n) {
        Ok(h) => h,
        Err(MetricsError::NoNgrams(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        c_score: mean(|r| r.c_score),
        persona_f1: mean(|r| r.persona_f1),
        entropy,
        rouge_l: mean(|r| r.rouge_l),
        n_responses: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{NliLabel, ScriptedNli};

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(ngram_entropy(&[seq(&["a", "a", "a", "a"])], 1).unwrap(), 0.0);
        let h = ngram_entropy(&[seq(&["a", "b", "a", "b"])], 2).unwrap();
        assert!((h - 0.9182958340544896).abs() < 1e-12);
        let h = ngram_entropy(&[seq(&["the", "cat", "sat"])], 1).unwrap();
        assert!((h - 3f64.log2()).abs() < 1e-12);
        assert!(matches!(
            ngram_entropy(&[seq(&["a"])], 2),
            Err(MetricsError::NoNgrams(2))
        ));
        assert!(matches!(ngram_entropy(&[], 0), Err(MetricsError::InvalidOrder(0))));
    }

    #[test]
    fn persona_f1_cases() {
        assert_eq!(persona_f1(&seq(&[]), &[seq(&["likes"])]), 0.0);
        assert_eq!(persona_f1(&seq(&["likes", "hiking"]), &[seq(&["likes", "hiking"])]), 1.0);
        let f = persona_f1(
            &seq(&["likes", "hiking", "today"]),
            &[seq(&["likes", "hiking"]), seq(&["mountains", "guitar"])],
        );
        assert!((f - 0.5714285714285715).abs() < 1e-12);
        assert_eq!(persona_f1(&seq(&["the", "a"]), &[seq(&["the"])]), 0.0);
        assert_eq!(persona_f1(&seq(&["x"]), &[]), 0.0);
    }

    #[test]
    fn rouge_cases() {
        let r = seq(&["the", "cat", "ate", "food"]);
        assert_eq!(rouge_l(&r, &r), 1.0);
        assert_eq!(rouge_l(&seq(&["x", "y"]), &r), 0.0);
        assert_eq!(rouge_l(&seq(&[]), &r), 0.0);
        let f = rouge_l(&seq(&["the", "cat", "sat"]), &r);
        assert!((f - 0.5714285714285715).abs() < 1e-12);
    }

    #[tokio::test]
    async fn c_score_cases() {
        let facts = ["f1", "f2", "f3", "f4"];
        let nli = ScriptedNli::default()
            .script("f1", "r", NliLabel::Entail)
            .script("f2", "r", NliLabel::Entail)
            .script("f3", "r", NliLabel::Contradict);
        assert_eq!(c_score("r", &facts, &nli).await.unwrap(), 0.25);
        assert_eq!(c_score("other", &facts, &ScriptedNli::default()).await.unwrap(), 0.0);
        assert!(matches!(
            c_score::<&str>("r", &[], &nli).await,
            Err(MetricsError::NoPersona)
        ));
    }

    #[test]
    fn aggregate_means_and_pooled_entropy() {
        let row = |rouge: f64, toks: &[&str]| ResponseMeasurement {
            c_score: 0.0,
            persona_f1: 0.0,
            rouge_l: rouge,
            tokens: seq(toks),
        };
        let one = aggregate(&[row(0.0, &["a", "b", "c", "a"])], 2).unwrap();
        let two = aggregate(&[row(0.0, &["a", "b", "c", "a"]), row(1.0, &["a", "b", "c", "a"])], 2)
            .unwrap();
        assert_eq!(two.rouge_l, 0.5);
        assert!((one.entropy - two.entropy).abs() < 1e-12);
        assert!((one.entropy - 1.584962500721156).abs() < 1e-12);
        assert_eq!(two.n_responses, 2);
        assert!(matches!(aggregate(&[], 2), Err(MetricsError::EmptyCorpus)));
        assert_eq!(aggregate(&[row(1.0, &["x"])], 2).unwrap().entropy, 0.0);
    }
}
