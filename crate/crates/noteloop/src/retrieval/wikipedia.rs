//! MediaWiki search and page fetch.
//!
//! Title search goes through `action=query&list=search`; page bodies come
//! from `action=parse` as HTML and are normalized to Markdown.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::retrieval::markdown::html_to_markdown;
use crate::retrieval::transport::HttpTransport;
use crate::retrieval::RetrievalError;
use crate::types::{DocumentSource, RetrievedDocument};

pub const DEFAULT_WIKIPEDIA_BASE: &str = "https://en.wikipedia.org";

pub struct WikipediaClient {
    transport: Arc<dyn HttpTransport>,
    api_url: String,
}

impl WikipediaClient {
    pub fn new(transport: Arc<dyn HttpTransport>, base_url: impl AsRef<str>) -> Self {
        let base = base_url.as_ref().trim_end_matches('/');
        Self { transport, api_url: format!("{base}/w/api.php") }
    }

    fn call(&self, params: BTreeMap<String, String>) -> Result<String, RetrievalError> {
        let reply = self
            .transport
            .request(&self.api_url, &params)
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        if reply.status != 200 {
            return Err(RetrievalError::Transport(format!(
                "wikipedia api returned status {}",
                reply.status
            )));
        }
        Ok(reply.body)
    }

    /// Ordered page titles from the search endpoint.
    pub fn search_titles(&self, query: &str, k: usize) -> Result<Vec<String>, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::Precondition("search query is empty".into()));
        }
        if k == 0 {
            return Err(RetrievalError::Precondition("k must be at least 1".into()));
        }
        let params = BTreeMap::from([
            ("action".to_string(), "query".to_string()),
            ("list".to_string(), "search".to_string()),
            ("srsearch".to_string(), query.to_string()),
            ("srlimit".to_string(), k.to_string()),
            ("format".to_string(), "json".to_string()),
            ("formatversion".to_string(), "2".to_string()),
        ]);
        let body = self.call(params)?;
        let parsed: SearchResponse = serde_json::from_str(&body)
            .map_err(|e| RetrievalError::Parse(format!("search response: {e}")))?;
        Ok(parsed.query.search.into_iter().map(|hit| hit.title).collect())
    }

    /// Fetches a page and converts it to Markdown.
    pub fn fetch_page_markdown(&self, title: &str) -> Result<RetrievedDocument, RetrievalError> {
        if title.trim().is_empty() {
            return Err(RetrievalError::Precondition("page title is empty".into()));
        }
        let params = BTreeMap::from([
            ("action".to_string(), "parse".to_string()),
            ("page".to_string(), title.to_string()),
            ("prop".to_string(), "text".to_string()),
            ("redirects".to_string(), "1".to_string()),
            ("format".to_string(), "json".to_string()),
            ("formatversion".to_string(), "2".to_string()),
        ]);
        let body = self.call(params)?;
        let parsed: ParseResponse = serde_json::from_str(&body)
            .map_err(|e| RetrievalError::Parse(format!("parse response: {e}")))?;
        if let Some(error) = parsed.error {
            return Err(RetrievalError::NotFound(format!("{title}: {}", error.code)));
        }
        let page = parsed
            .parse
            .ok_or_else(|| RetrievalError::NotFound(format!("{title}: no parse payload")))?;
        let markdown = html_to_markdown(&page.text);
        if markdown.is_empty() {
            return Err(RetrievalError::NotFound(format!("{title}: page body is empty")));
        }
        let resolved = if page.title.is_empty() { title.to_string() } else { page.title };
        let fetch_url = format!("{}?action=parse&page={}", self.api_url, resolved.replace(' ', "_"));
        Ok(RetrievedDocument {
            title: resolved,
            source: DocumentSource::WikipediaApi,
            body_markdown: markdown,
            rank: 1,
            fetch_url: Some(fetch_url),
        })
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    query: SearchQuery,
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    search: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    title: String,
}

#[derive(Deserialize)]
struct ParseResponse {
    #[serde(default)]
    parse: Option<ParsePayload>,
    #[serde(default)]
    error: Option<ApiError>,
}

#[derive(Deserialize)]
struct ParsePayload {
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct ApiError {
    code: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::transport::FixtureTransport;

    fn client_with(fixture_lines: &str) -> WikipediaClient {
        let transport = Arc::new(FixtureTransport::parse(fixture_lines).unwrap());
        WikipediaClient::new(transport, "https://en.wikipedia.org")
    }

    fn search_fixture(query: &str, k: usize, titles: &[&str]) -> String {
        let hits: Vec<serde_json::Value> =
            titles.iter().map(|t| serde_json::json!({"title": t})).collect();
        serde_json::json!({
            "url": "https://en.wikipedia.org/w/api.php",
            "params": {
                "action": "query", "list": "search", "srsearch": query,
                "srlimit": k.to_string(), "format": "json", "formatversion": "2"
            },
            "response_body": serde_json::json!({"query": {"search": hits}}).to_string(),
            "status": 200
        })
        .to_string()
    }

    #[test]
    fn search_returns_ordered_titles() {
        let client = client_with(&search_fixture(
            "Vampire Academy cast",
            5,
            &["Vampire Academy (film)", "Vampire Academy"],
        ));
        let titles = client.search_titles("Vampire Academy cast", 5).unwrap();
        assert_eq!(titles[0], "Vampire Academy (film)");
        assert_eq!(titles.len(), 2);
    }

    #[test]
    fn search_rejects_blank_query_and_zero_k() {
        let client = client_with("");
        assert!(matches!(
            client.search_titles("   ", 5),
            Err(RetrievalError::Precondition(_))
        ));
        assert!(matches!(
            client.search_titles("x", 0),
            Err(RetrievalError::Precondition(_))
        ));
    }

    fn parse_fixture(title: &str, html: &str) -> String {
        serde_json::json!({
            "url": "https://en.wikipedia.org/w/api.php",
            "params": {
                "action": "parse", "page": title, "prop": "text",
                "redirects": "1", "format": "json", "formatversion": "2"
            },
            "response_body": serde_json::json!({"parse": {"title": title, "text": html}}).to_string(),
            "status": 200
        })
        .to_string()
    }

    #[test]
    fn fetch_converts_html_to_markdown() {
        let client = client_with(&parse_fixture("Diego Costa", "<h1>Diego Costa</h1><p>Footballer.</p>"));
        let doc = client.fetch_page_markdown("Diego Costa").unwrap();
        assert_eq!(doc.body_markdown, "# Diego Costa\n\nFootballer.");
        assert_eq!(doc.source, DocumentSource::WikipediaApi);
    }

    #[test]
    fn missing_page_is_not_found() {
        let line = serde_json::json!({
            "url": "https://en.wikipedia.org/w/api.php",
            "params": {
                "action": "parse", "page": "Nopage", "prop": "text",
                "redirects": "1", "format": "json", "formatversion": "2"
            },
            "response_body": serde_json::json!({"error": {"code": "missingtitle"}}).to_string(),
            "status": 200
        })
        .to_string();
        let client = client_with(&line);
        assert!(matches!(
            client.fetch_page_markdown("Nopage"),
            Err(RetrievalError::NotFound(_))
        ));
    }

    #[test]
    fn empty_page_body_is_not_found() {
        let client = client_with(&parse_fixture("Blank", "<div> </div>"));
        assert!(matches!(
            client.fetch_page_markdown("Blank"),
            Err(RetrievalError::NotFound(_))
        ));
    }
}
