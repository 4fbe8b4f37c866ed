//! Minimal HTTP transport abstraction so backends can be exercised offline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use crate::error::{Error, Result};

pub trait HttpTransport: Send + Sync {
    /// POSTs a JSON body and returns the response body. Non-2xx statuses are
    /// transport errors carrying the response text verbatim.
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<String>;
}

/// Blocking reqwest-backed transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<String> {
        let mut req = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string());
        for (name, value) in headers {
            req = req.header(name, value);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        Ok(text)
    }
}

/// In-process transport driven by a handler function. Counts calls, which
/// lets tests assert that replay mode never touches the network.
pub struct ScriptedTransport {
    handler: Box<dyn Fn(&str, &str) -> Result<String> + Send + Sync>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(handler: impl Fn(&str, &str) -> Result<String> + Send + Sync + 'static) -> Self {
        ScriptedTransport {
            handler: Box::new(handler),
            calls: AtomicUsize::new(0),
        }
    }

    /// A transport that fails every request; for asserting zero network use.
    pub fn refusing() -> Self {
        Self::new(|url, _| {
            Err(Error::Transport(format!(
                "unexpected network call to {url}"
            )))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl HttpTransport for ScriptedTransport {
    fn post_json(&self, url: &str, _headers: &[(String, String)], body: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.handler)(url, body)
    }
}
