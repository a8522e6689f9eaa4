//! HTTP translation provider for back-translation.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use medforge_core::perturb::Translator;
use serde::{Deserialize, Serialize};

use crate::backend::{http_agent, post_json, Failure};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub text: String,
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub text: String,
}

/// Translates `source -> pivot -> source` through `POST {url}/translate`.
/// At most `max_in_flight` requests are outstanding at once.
#[derive(Debug)]
pub struct HttpTranslator {
    url: String,
    agent: ureq::Agent,
    source: String,
    pivot: String,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl HttpTranslator {
    pub fn new(url: &str, source: &str, pivot: &str, timeout: Duration, max_in_flight: usize) -> Self {
        HttpTranslator {
            url: url.trim_end_matches('/').to_string(),
            agent: http_agent(timeout),
            source: source.to_string(),
            pivot: pivot.to_string(),
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String, String> {
        let body = serde_json::to_string(&TranslateRequest {
            text: text.to_string(),
            src: src.to_string(),
            dst: dst.to_string(),
        })
        .map_err(|e| e.to_string())?;
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.max_in_flight {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        let result = post_json(&self.agent, &format!("{}/translate", self.url), &body);
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        let text = result.map_err(|f| match f {
            Failure::Transport(m) | Failure::Malformed(m) => m,
            Failure::Status { status, body } => format!("HTTP {}: {}", status, body),
        })?;
        serde_json::from_str::<TranslateResponse>(&text)
            .map(|r| r.text)
            .map_err(|e| format!("malformed translation response: {}", e))
    }
}

impl Translator for HttpTranslator {
    fn forward(&self, text: &str) -> Result<String, String> {
        self.translate(text, &self.source, &self.pivot)
    }

    fn backward(&self, text: &str) -> Result<String, String> {
        self.translate(text, &self.pivot, &self.source)
    }
}
