//! Dense retrieval adapter over an embeddings endpoint.
//!
//! Corpus documents are cut into word-bounded chunks, embedded once at
//! construction, and ranked by cosine similarity against the embedded
//! query. This is an adapter for modest corpora, not a vector database.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use crate::retrieval::bm25::CorpusDoc;
use crate::retrieval::shape::chunk;
use crate::retrieval::transport::{HttpTransport, BODY_PARAM};
use crate::retrieval::RetrievalError;
use crate::types::{DocumentSource, RetrievedDocument};

pub const DEFAULT_EMBED_MODEL: &str = "ef-base-v2";
const CHUNK_WORDS: usize = 120;
const EMBED_BATCH: usize = 32;

struct EmbeddedChunk {
    title: String,
    text: String,
    vector: Vec<f64>,
}

pub struct DenseIndex {
    transport: Arc<dyn HttpTransport>,
    embed_url: String,
    model: String,
    chunks: Vec<EmbeddedChunk>,
}

impl DenseIndex {
    /// Chunks and embeds the corpus up front.
    pub fn build(
        transport: Arc<dyn HttpTransport>,
        base_url: impl AsRef<str>,
        model: impl Into<String>,
        documents: &[CorpusDoc],
    ) -> Result<Self, RetrievalError> {
        let base = base_url.as_ref().trim_end_matches('/');
        let mut index = Self {
            transport,
            embed_url: format!("{base}/embeddings"),
            model: model.into(),
            chunks: Vec::new(),
        };
        let mut pending: Vec<(String, String)> = Vec::new();
        for doc in documents {
            let carrier = RetrievedDocument {
                title: doc.title.clone(),
                source: DocumentSource::DenseCorpus,
                body_markdown: doc.text.clone(),
                rank: 1,
                fetch_url: None,
            };
            for piece in chunk(&carrier, CHUNK_WORDS) {
                pending.push((doc.title.clone(), piece));
            }
        }
        for batch in pending.chunks(EMBED_BATCH) {
            let texts: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
            let vectors = index.embed(&texts)?;
            if vectors.len() != batch.len() {
                return Err(RetrievalError::Parse(format!(
                    "embeddings endpoint returned {} vectors for {} inputs",
                    vectors.len(),
                    batch.len()
                )));
            }
            for ((title, text), vector) in batch.iter().cloned().zip(vectors) {
                index.chunks.push(EmbeddedChunk { title, text, vector });
            }
        }
        Ok(index)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let body = json!({ "model": self.model, "input": texts }).to_string();
        let params = BTreeMap::from([(BODY_PARAM.to_string(), body)]);
        let reply = self
            .transport
            .request(&self.embed_url, &params)
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        if reply.status != 200 {
            return Err(RetrievalError::Transport(format!(
                "embeddings endpoint returned status {}",
                reply.status
            )));
        }
        let parsed: EmbeddingsResponse = serde_json::from_str(&reply.body)
            .map_err(|e| RetrievalError::Parse(format!("embeddings response: {e}")))?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    /// Top-k chunks by cosine similarity, deduplicated by title.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::Precondition("query is empty".into()));
        }
        let query_vec = self
            .embed(&[query])?
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::Parse("no embedding for query".into()))?;
        let mut scored: Vec<(usize, f64)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (i, cosine(&query_vec, &c.vector)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
        });

        let mut out = Vec::new();
        let mut seen_titles = Vec::new();
        for (i, _) in scored {
            let c = &self.chunks[i];
            if seen_titles.contains(&&c.title) {
                continue;
            }
            seen_titles.push(&c.title);
            out.push(RetrievedDocument {
                title: c.title.clone(),
                source: DocumentSource::DenseCorpus,
                body_markdown: c.text.clone(),
                rank: out.len() + 1,
                fetch_url: None,
            });
            if out.len() == k {
                break;
            }
        }
        Ok(out)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::transport::{FixtureTransport, HttpReply, TransportError};

    /// Deterministic fake embedder: maps known words onto axis-aligned vectors.
    struct FakeEmbedder;

    impl HttpTransport for FakeEmbedder {
        fn request(
            &self,
            _url: &str,
            params: &BTreeMap<String, String>,
        ) -> Result<HttpReply, TransportError> {
            let body: serde_json::Value =
                serde_json::from_str(params.get(BODY_PARAM).unwrap()).unwrap();
            let inputs = body["input"].as_array().unwrap();
            let data: Vec<serde_json::Value> = inputs
                .iter()
                .map(|t| {
                    let text = t.as_str().unwrap().to_lowercase();
                    let v = vec![
                        text.contains("cat") as i32 as f64,
                        text.contains("dog") as i32 as f64,
                        text.contains("fish") as i32 as f64,
                    ];
                    json!({"embedding": v})
                })
                .collect();
            Ok(HttpReply { status: 200, body: json!({ "data": data }).to_string() })
        }
    }

    fn corpus() -> Vec<CorpusDoc> {
        vec![
            CorpusDoc { id: "1".into(), title: "Cats".into(), text: "all about the cat".into() },
            CorpusDoc { id: "2".into(), title: "Dogs".into(), text: "all about the dog".into() },
            CorpusDoc { id: "3".into(), title: "Fish".into(), text: "all about the fish".into() },
        ]
    }

    #[test]
    fn ranks_by_cosine_similarity() {
        let index =
            DenseIndex::build(Arc::new(FakeEmbedder), "http://embed", "fake", &corpus()).unwrap();
        let hits = index.search("my dog barks", 2).unwrap();
        assert_eq!(hits[0].title, "Dogs");
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[1].rank, 2);
    }

    #[test]
    fn rejects_empty_query() {
        let index =
            DenseIndex::build(Arc::new(FakeEmbedder), "http://embed", "fake", &corpus()).unwrap();
        assert!(matches!(index.search("  ", 2), Err(RetrievalError::Precondition(_))));
    }

    #[test]
    fn missing_fixture_surfaces_as_transport_error() {
        let transport = Arc::new(FixtureTransport::empty());
        let err = DenseIndex::build(transport, "http://embed", "fake", &corpus()).unwrap_err();
        assert!(matches!(err, RetrievalError::Transport(_)));
    }
}
