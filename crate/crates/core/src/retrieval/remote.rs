//! Client for a remote search endpoint.
//!
//! Wire contract: `GET <endpoint>?q=<query>&k=<k>` answered by a JSON array of
//! `{id, title, text, score}`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Url;
use serde::{Deserialize, Serialize};

use super::{DocumentSource, EvidenceSource, RetrievalError, RetrievedDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSearchConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    10
}

impl RemoteSearchConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), timeout_secs: default_timeout_secs() }
    }
}

#[derive(Deserialize)]
struct WireDoc {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    score: f64,
}

pub struct RemoteSearchClient {
    client: Client,
    url: Url,
}

impl RemoteSearchClient {
    pub fn new(config: &RemoteSearchConfig) -> Result<Self, RetrievalError> {
        let url = Url::parse(&config.endpoint)
            .map_err(|e| RetrievalError::Remote(format!("bad endpoint `{}`: {e}", config.endpoint)))?;
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| RetrievalError::Remote(e.to_string()))?;
        Ok(Self { client, url })
    }

    /// One GET per call. Results with empty text are dropped.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut url = self.url.clone();
        url.query_pairs_mut().append_pair("q", query).append_pair("k", &k.to_string());
        let resp = self
            .client
            .get(url)
            .send()
            .map_err(|e| RetrievalError::Remote(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(RetrievalError::Remote(format!("status {status}")));
        }
        let docs: Vec<WireDoc> = resp
            .json()
            .map_err(|e| RetrievalError::Remote(format!("bad payload: {e}")))?;
        Ok(docs
            .into_iter()
            .filter(|d| !d.text.trim().is_empty())
            .take(k)
            .map(|d| RetrievedDocument {
                id: d.id,
                title: d.title,
                text: d.text,
                source: DocumentSource::Remote,
                score: d.score,
            })
            .collect())
    }
}

impl EvidenceSource for RemoteSearchClient {
    fn kind(&self) -> DocumentSource {
        DocumentSource::Remote
    }

    fn name(&self) -> &str {
        "remote"
    }

    fn retrieve(&self, _term: &str, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        self.search(query, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};
    use std::thread;

    fn stub(status: u16, body: &'static str) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}/search", server.server_addr().to_ip().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let h = thread::spawn(move || {
            if let Ok(req) = server.recv() {
                log.lock().unwrap().push(req.url().to_string());
                let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(status));
            }
        });
        (url, seen, h)
    }

    #[test]
    fn maps_results() {
        let (url, seen, h) = stub(
            200,
            r#"[{"id": "r1", "title": "Phin", "text": "A Vietnamese drip filter.", "score": 3.5},
                {"id": "r2", "title": "empty", "text": "", "score": 1.0}]"#,
        );
        let client = RemoteSearchClient::new(&RemoteSearchConfig::new(url)).unwrap();
        let docs = client.search("phin coffee", 3).unwrap();
        h.join().unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].source, DocumentSource::Remote);
        assert_eq!(docs[0].score, 3.5);
        let url = &seen.lock().unwrap()[0];
        assert!(url.contains("q=phin+coffee") || url.contains("q=phin%20coffee"), "{url}");
        assert!(url.contains("k=3"));
    }

    #[test]
    fn error_status() {
        let (url, _, h) = stub(503, "busy");
        let client = RemoteSearchClient::new(&RemoteSearchConfig::new(url)).unwrap();
        assert!(matches!(client.search("x", 2), Err(RetrievalError::Remote(_))));
        h.join().unwrap();
    }

    #[test]
    fn zero_k_makes_no_request() {
        let client = RemoteSearchClient::new(&RemoteSearchConfig::new("http://127.0.0.1:9/none")).unwrap();
        assert!(client.search("x", 0).unwrap().is_empty());
    }
}
