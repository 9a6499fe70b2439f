//! HTTP transport shared by the SPARQL client and the remote model providers.
//!
//! Kept behind a trait so tests can substitute an in-process endpoint or a
//! transport that refuses every call.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

pub trait HttpTransport: Send + Sync {
    /// GET `url` with query parameters; returns the response body.
    fn get(&self, url: &str, params: &[(&str, &str)], accept: &str) -> Result<String>;

    /// POST a JSON body and decode a JSON reply.
    fn post_json(&self, url: &str, body: &Value) -> Result<Value>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("dtkg/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::transport(e.to_string(), false))?;
        Ok(Self { client })
    }
}

fn map_reqwest(e: reqwest::Error) -> Error {
    let retryable = e.is_timeout() || e.status().is_some_and(|s| s.is_server_error());
    Error::transport(e.to_string(), retryable)
}

fn check_status(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp)
    } else {
        Err(Error::transport(
            format!("HTTP {status} from {}", resp.url()),
            status.is_server_error(),
        ))
    }
}

impl HttpTransport for ReqwestTransport {
    fn get(&self, url: &str, params: &[(&str, &str)], accept: &str) -> Result<String> {
        let resp = self
            .client
            .get(url)
            .query(params)
            .header(reqwest::header::ACCEPT, accept)
            .send()
            .map_err(map_reqwest)?;
        check_status(resp)?.text().map_err(map_reqwest)
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<Value> {
        let resp = self
            .client
            .post(url)
            .json(body)
            .send()
            .map_err(map_reqwest)?;
        check_status(resp)?
            .json()
            .map_err(|e| Error::MalformedResponse(e.to_string()))
    }
}

/// A transport that fails every request and counts the attempts.
///
/// Used for offline runs: any code path that would reach the network surfaces
/// as a non-retryable transport error instead.
#[derive(Debug, Default)]
pub struct DenyTransport {
    attempts: AtomicUsize,
}

impl DenyTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    fn refuse(&self, url: &str) -> Error {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Error::transport(format!("network access disabled (request to {url})"), false)
    }
}

impl HttpTransport for DenyTransport {
    fn get(&self, url: &str, _params: &[(&str, &str)], _accept: &str) -> Result<String> {
        Err(self.refuse(url))
    }

    fn post_json(&self, url: &str, _body: &Value) -> Result<Value> {
        Err(self.refuse(url))
    }
}
