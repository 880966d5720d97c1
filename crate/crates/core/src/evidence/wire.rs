//! Request/response plumbing shared by the literature search client and the
//! claim and hypothesis backends.
//!
//! Every outbound call is a [`WireRequest`]. Its key is a sha256 over the
//! service name, parameters and body, and fixture directories store the
//! verbatim response under `<dir>/<service>/<key>.<ext>` next to a
//! `<key>.request` copy of what was sent.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};
use std::cell::Cell;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Esearch,
    Efetch,
    Claims,
    Hypotheses,
}

impl Service {
    pub fn name(self) -> &'static str {
        match self {
            Service::Esearch => "esearch",
            Service::Efetch => "efetch",
            Service::Claims => "claims",
            Service::Hypotheses => "hypotheses",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Service::Efetch => "xml",
            _ => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub service: Service,
    /// Query parameters, in send order.
    pub params: Vec<(String, String)>,
    /// JSON body for POST services, empty for searches.
    pub body: String,
}

impl WireRequest {
    pub fn get(service: Service, params: &[(&str, String)]) -> Self {
        Self {
            service,
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            body: String::new(),
        }
    }

    pub fn post(service: Service, body: String) -> Self {
        Self { service, params: Vec::new(), body }
    }

    /// Canonical text the key is computed from.
    pub fn canonical(&self) -> String {
        let mut s = format!("{}\n", self.service.name());
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push('\n');
        s.push_str(&self.body);
        s
    }

    pub fn key(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..16])
    }

    pub fn fixture_path(&self, dir: &Path) -> PathBuf {
        dir.join(self.service.name()).join(format!("{}.{}", self.key(), self.service.extension()))
    }
}

pub trait Transport {
    fn send(&self, req: &WireRequest) -> Result<String>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, req: &WireRequest) -> Result<String> {
        (**self).send(req)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, req: &WireRequest) -> Result<String> {
        (**self).send(req)
    }
}

/// Offline replay; a request without a stored response is an error.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    pub dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Transport for FixtureTransport {
    fn send(&self, req: &WireRequest) -> Result<String> {
        let path = req.fixture_path(&self.dir);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::FixtureMissing {
                key: format!("{}/{}", req.service.name(), req.key()),
                dir: self.dir.clone(),
            }),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

/// Serves stored responses when present, otherwise forwards to `inner` and
/// stores what comes back. Doubles as the on-disk cache for live calls and
/// as the recorder that produces fixture directories.
pub struct CachedTransport<T> {
    pub inner: T,
    pub dir: PathBuf,
}

impl<T: Transport> CachedTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl<T: Transport> Transport for CachedTransport<T> {
    fn send(&self, req: &WireRequest) -> Result<String> {
        let path = req.fixture_path(&self.dir);
        if let Ok(s) = fs::read_to_string(&path) {
            return Ok(s);
        }
        let body = self.inner.send(req)?;
        let parent = path.parent().expect("fixture path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        fs::write(&path, &body).map_err(|e| Error::io(&path, e))?;
        let req_path = path.with_extension("request");
        fs::write(&req_path, req.canonical()).map_err(|e| Error::io(&req_path, e))?;
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub eutils_base: String,
    pub api_key: Option<String>,
    pub claims_url: Option<String>,
    pub hypotheses_url: Option<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            eutils_base: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils".into(),
            api_key: None,
            claims_url: None,
            hypotheses_url: None,
            retries: 3,
            backoff_ms: 500,
            timeout_s: 30,
        }
    }
}

/// Live HTTP client. E-utilities allows 3 requests/s without a key and 10
/// with one; calls are spaced accordingly.
pub struct HttpTransport {
    cfg: HttpConfig,
    agent: ureq::Agent,
    last_call: Cell<Option<Instant>>,
}

impl HttpTransport {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .build()
            .into();
        Self { cfg, agent, last_call: Cell::new(None) }
    }

    fn throttle(&self) {
        let gap = Duration::from_millis(if self.cfg.api_key.is_some() { 100 } else { 340 });
        if let Some(prev) = self.last_call.get() {
            let elapsed = prev.elapsed();
            if elapsed < gap {
                sleep(gap - elapsed);
            }
        }
        self.last_call.set(Some(Instant::now()));
    }

    fn once(&self, req: &WireRequest) -> std::result::Result<String, ureq::Error> {
        self.throttle();
        match req.service {
            Service::Esearch | Service::Efetch => {
                let url = format!("{}/{}.fcgi", self.cfg.eutils_base.trim_end_matches('/'), req.service.name());
                let mut call = self.agent.get(&url).query_pairs(req.params.iter().map(|(k, v)| (k.as_str(), v.as_str())));
                if let Some(key) = &self.cfg.api_key {
                    call = call.query("api_key", key);
                }
                call.call()?.body_mut().read_to_string()
            }
            Service::Claims | Service::Hypotheses => {
                let url = if req.service == Service::Claims { &self.cfg.claims_url } else { &self.cfg.hypotheses_url };
                let url = url.as_deref().expect("checked by send");
                self.agent
                    .post(url)
                    .header("Content-Type", "application/json")
                    .send(req.body.as_str())?
                    .body_mut()
                    .read_to_string()
            }
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest) -> Result<String> {
        let configured = match req.service {
            Service::Claims => self.cfg.claims_url.is_some(),
            Service::Hypotheses => self.cfg.hypotheses_url.is_some(),
            _ => true,
        };
        if !configured {
            return Err(Error::BackendUnavailable(format!("no endpoint for {}", req.service.name())));
        }
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            match self.once(req) {
                Ok(body) => {
                    debug!("{} {} ok", req.service.name(), req.key());
                    return Ok(body);
                }
                Err(e) => {
                    warn!("{} attempt {} failed: {e}", req.service.name(), attempt + 1);
                    last = e.to_string();
                    if attempt < self.cfg.retries {
                        sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Network(last))
    }
}
