//! Cosine similarity and exact threshold-filtered top-k search.

use std::sync::Arc;

use super::{MemoryEntry, MemoryError, RetrievalResult};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MemoryError> {
    if a.len() != b.len() {
        return Err(MemoryError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Exact scan over `entries` (in insertion order). Keeps scores strictly
/// above `theta`, sorts descending with earlier entries winning ties, and
/// truncates to `k`. A zero query matches nothing; zero-norm entries are
/// skipped.
pub fn retrieve_top_k<'a, I>(
    entries: I,
    dimension: usize,
    query: &[f64],
    k: usize,
    theta: f64,
) -> Result<Vec<RetrievalResult>, MemoryError>
where
    I: IntoIterator<Item = &'a Arc<MemoryEntry>>,
{
    if query.len() != dimension {
        return Err(MemoryError::DimensionMismatch {
            expected: dimension,
            got: query.len(),
        });
    }
    let qn = norm(query);
    if qn == 0.0 || k == 0 {
        return Ok(Vec::new());
    }
    let mut hits: Vec<RetrievalResult> = entries
        .into_iter()
        .filter_map(|entry| {
            let en = norm(&entry.embedding);
            if en == 0.0 {
                return None;
            }
            let score = (dot(query, &entry.embedding) / (qn * en)).clamp(-1.0, 1.0);
            (score > theta).then(|| RetrievalResult {
                entry: Arc::clone(entry),
                score,
            })
        })
        .collect();
    // Stable sort keeps insertion order among equal scores.
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    hits.truncate(k);
    Ok(hits)
}
