//! The retrieval primitive: Wikipedia live search, local BM25, and an
//! optional dense-embeddings backend, plus the document shaping helpers the
//! baseline loops use.

pub mod bm25;
pub mod dense;
pub mod markdown;
pub mod shape;
pub mod transport;
mod wikipedia;

pub use bm25::{bm25_build, bm25_score, bm25_search, tokenize, Corpus, CorpusDoc};
pub use dense::{DenseIndex, DEFAULT_EMBED_MODEL};
pub use markdown::html_to_markdown;
pub use shape::{chunk, first_paragraph, lookup, paragraphs};
pub use transport::{
    FixtureRecorder, FixtureTransport, HttpTransport, LiveTransport, TransportError,
};
pub use wikipedia::{WikipediaClient, DEFAULT_WIKIPEDIA_BASE};

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::types::{DocumentSource, RetrievedDocument};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Which backend serves `ret(q)` and how it is parameterized.
#[derive(Debug, Clone)]
pub struct RetrieverSpec {
    pub backend: DocumentSource,
    pub k: usize,
    pub corpus_path: Option<PathBuf>,
    pub embed_model: Option<String>,
    pub wikipedia_base: String,
    pub embed_base: Option<String>,
}

impl RetrieverSpec {
    pub fn wikipedia(k: usize) -> Self {
        Self {
            backend: DocumentSource::WikipediaApi,
            k,
            corpus_path: None,
            embed_model: None,
            wikipedia_base: DEFAULT_WIKIPEDIA_BASE.to_string(),
            embed_base: None,
        }
    }

    pub fn bm25(k: usize, corpus_path: impl Into<PathBuf>) -> Self {
        Self {
            backend: DocumentSource::Bm25Corpus,
            k,
            corpus_path: Some(corpus_path.into()),
            embed_model: None,
            wikipedia_base: DEFAULT_WIKIPEDIA_BASE.to_string(),
            embed_base: None,
        }
    }
}

/// A retrieval backend: at most k documents, ranks ascending from 1, titles
/// deduplicated, empty result is not an error.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str) -> Result<Vec<RetrievedDocument>, RetrievalError>;

    fn k(&self) -> usize;
}

pub fn build_retriever(
    spec: &RetrieverSpec,
    transport: Arc<dyn HttpTransport>,
) -> Result<Box<dyn Retriever>, RetrievalError> {
    if spec.k == 0 {
        return Err(RetrievalError::Precondition("k must be at least 1".into()));
    }
    match spec.backend {
        DocumentSource::WikipediaApi => Ok(Box::new(WikipediaRetriever {
            client: WikipediaClient::new(transport, &spec.wikipedia_base),
            k: spec.k,
        })),
        DocumentSource::Bm25Corpus => {
            let path = spec.corpus_path.as_ref().ok_or_else(|| {
                RetrievalError::Precondition("bm25 backend requires corpus_path".into())
            })?;
            let corpus = bm25_build(load_corpus(path)?)?;
            Ok(Box::new(Bm25Retriever { corpus, k: spec.k }))
        }
        DocumentSource::DenseCorpus => {
            let path = spec.corpus_path.as_ref().ok_or_else(|| {
                RetrievalError::Precondition("dense backend requires corpus_path".into())
            })?;
            let base = spec.embed_base.as_ref().ok_or_else(|| {
                RetrievalError::Precondition("dense backend requires an embeddings base url".into())
            })?;
            let model = spec.embed_model.clone().unwrap_or_else(|| DEFAULT_EMBED_MODEL.to_string());
            let documents = load_corpus(path)?;
            let index = DenseIndex::build(transport, base, model, &documents)?;
            Ok(Box::new(DenseRetriever { index, k: spec.k }))
        }
    }
}

/// Loads a `{id, title, text}` JSONL corpus.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusDoc>, RetrievalError> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| RetrievalError::Corpus(format!("{}: {e}", path.as_ref().display())))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc = serde_json::from_str(line)
            .map_err(|e| RetrievalError::Corpus(format!("line {}: {e}", i + 1)))?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(RetrievalError::Corpus("corpus file has no documents".into()));
    }
    Ok(docs)
}

/// Where the persisted BM25 index lives for a given corpus file.
pub fn index_path(corpus_path: &Path) -> PathBuf {
    let mut name = corpus_path.file_name().unwrap_or_default().to_os_string();
    name.push(".bm25.json");
    corpus_path.with_file_name(name)
}

struct WikipediaRetriever {
    client: WikipediaClient,
    k: usize,
}

impl Retriever for WikipediaRetriever {
    fn retrieve(&self, query: &str) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::Precondition("query is empty".into()));
        }
        let titles = self.client.search_titles(query, self.k)?;
        let mut out: Vec<RetrievedDocument> = Vec::new();
        for title in titles {
            if out.iter().any(|d| d.title == title) {
                continue;
            }
            match self.client.fetch_page_markdown(&title) {
                Ok(mut doc) => {
                    if out.iter().any(|d| d.title == doc.title) {
                        continue; // redirect resolved to an already-fetched page
                    }
                    doc.rank = out.len() + 1;
                    out.push(doc);
                }
                Err(RetrievalError::NotFound(reason)) => {
                    log::warn!("dropping page: {reason}");
                }
                Err(other) => return Err(other),
            }
            if out.len() == self.k {
                break;
            }
        }
        Ok(out)
    }

    fn k(&self) -> usize {
        self.k
    }
}

struct Bm25Retriever {
    corpus: Corpus,
    k: usize,
}

impl Retriever for Bm25Retriever {
    fn retrieve(&self, query: &str) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::Precondition("query is empty".into()));
        }
        let mut out: Vec<RetrievedDocument> = Vec::new();
        for (doc, _score) in bm25_search(&self.corpus, query, self.corpus.documents.len()) {
            if out.iter().any(|d| d.title == doc.title) {
                continue;
            }
            out.push(RetrievedDocument {
                title: doc.title.clone(),
                source: DocumentSource::Bm25Corpus,
                body_markdown: doc.text.clone(),
                rank: out.len() + 1,
                fetch_url: None,
            });
            if out.len() == self.k {
                break;
            }
        }
        Ok(out)
    }

    fn k(&self) -> usize {
        self.k
    }
}

struct DenseRetriever {
    index: DenseIndex,
    k: usize,
}

impl Retriever for DenseRetriever {
    fn retrieve(&self, query: &str) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        self.index.search(query, self.k)
    }

    fn k(&self) -> usize {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bm25_retriever_caps_and_dedupes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let lines = [
            r#"{"id":"1","title":"Banana","text":"banana banana"}"#,
            r#"{"id":"2","title":"Banana","text":"banana split"}"#,
            r#"{"id":"3","title":"Cherry","text":"banana cherry"}"#,
        ];
        fs::write(&path, lines.join("\n")).unwrap();
        let spec = RetrieverSpec::bm25(2, &path);
        let retriever =
            build_retriever(&spec, Arc::new(FixtureTransport::empty())).unwrap();
        let docs = retriever.retrieve("banana").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].rank, 1);
        assert_eq!(docs[1].rank, 2);
        let titles: Vec<&str> = docs.iter().map(|d| d.title.as_str()).collect();
        assert_eq!(titles.iter().filter(|t| **t == "Banana").count(), 1);
    }

    #[test]
    fn empty_query_is_a_precondition_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        fs::write(&path, r#"{"id":"1","title":"A","text":"a"}"#).unwrap();
        let retriever =
            build_retriever(&RetrieverSpec::bm25(2, &path), Arc::new(FixtureTransport::empty()))
                .unwrap();
        assert!(matches!(retriever.retrieve(""), Err(RetrievalError::Precondition(_))));
    }

    #[test]
    fn no_hits_is_an_empty_list_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        fs::write(&path, r#"{"id":"1","title":"A","text":"alpha"}"#).unwrap();
        let retriever =
            build_retriever(&RetrieverSpec::bm25(2, &path), Arc::new(FixtureTransport::empty()))
                .unwrap();
        assert!(retriever.retrieve("zeta").unwrap().is_empty());
    }

    #[test]
    fn corpus_loader_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        fs::write(&path, "{\"id\":\"1\",\"title\":\"A\",\"text\":\"a\"}\nnot json").unwrap();
        match load_corpus(&path) {
            Err(RetrievalError::Corpus(message)) => assert!(message.contains("line 2")),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
