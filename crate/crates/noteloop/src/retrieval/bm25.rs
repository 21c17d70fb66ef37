//! Okapi BM25 over a local JSONL corpus.
//!
//! k1 = 1.2, b = 0.75, idf = ln((N - df + 0.5) / (df + 0.5) + 1).
//! Tokenization lowercases and splits on non-alphanumeric runs. Ranking
//! ties break by ascending document id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::retrieval::RetrievalError;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// Per-term document frequencies plus per-document lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub doc_freq: BTreeMap<String, usize>,
    pub doc_lengths: BTreeMap<String, usize>,
    pub avg_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<CorpusDoc>,
    pub index_stats: IndexStats,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Builds the index. Fails on an empty corpus or duplicate ids.
pub fn bm25_build(documents: Vec<CorpusDoc>) -> Result<Corpus, RetrievalError> {
    if documents.is_empty() {
        return Err(RetrievalError::Corpus("corpus is empty".into()));
    }
    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut doc_lengths: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_len = 0usize;

    for doc in &documents {
        if doc_lengths.contains_key(&doc.id) {
            return Err(RetrievalError::Corpus(format!("duplicate document id: {}", doc.id)));
        }
        let tokens = tokenize(&doc.text);
        total_len += tokens.len();
        doc_lengths.insert(doc.id.clone(), tokens.len());
        let mut seen: Vec<&String> = Vec::new();
        for token in &tokens {
            if !seen.contains(&token) {
                seen.push(token);
                *doc_freq.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }

    let doc_count = documents.len();
    let avg_length = total_len as f64 / doc_count as f64;
    Ok(Corpus {
        documents,
        index_stats: IndexStats { doc_count, doc_freq, doc_lengths, avg_length },
    })
}

fn idf(corpus: &Corpus, term: &str) -> f64 {
    let n = corpus.index_stats.doc_count as f64;
    let df = corpus.index_stats.doc_freq.get(term).copied().unwrap_or(0) as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// BM25 score of one document against a query.
pub fn bm25_score(corpus: &Corpus, query: &str, doc_id: &str) -> Result<f64, RetrievalError> {
    let doc = corpus
        .documents
        .iter()
        .find(|d| d.id == doc_id)
        .ok_or_else(|| RetrievalError::Corpus(format!("unknown document id: {doc_id}")))?;
    let doc_tokens = tokenize(&doc.text);
    let dl = doc_tokens.len() as f64;
    let avgdl = corpus.index_stats.avg_length;

    let mut score = 0.0;
    for term in tokenize(query) {
        let tf = doc_tokens.iter().filter(|t| **t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let tf_norm = (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl));
        score += idf(corpus, &term) * tf_norm;
    }
    Ok(score)
}

/// Top-k documents by score, descending; equal scores order by ascending id.
pub fn bm25_search(corpus: &Corpus, query: &str, k: usize) -> Vec<(&CorpusDoc, f64)> {
    let mut scored: Vec<(&CorpusDoc, f64)> = corpus
        .documents
        .iter()
        .map(|doc| {
            let score = bm25_score(corpus, query, &doc.id).expect("id comes from the corpus");
            (doc, score)
        })
        .filter(|(_, score)| *score > 0.0)
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.id.cmp(&b.0.id))
    });
    scored.truncate(k);
    scored
}
