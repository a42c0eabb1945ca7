//! Endpoint resolution: turns a descriptor's endpoint into a live twin handle.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::http::HttpTwinClient;
use crate::twin::{ShellDescriptor, TwinAccess, DEFAULT_INVOKE_TIMEOUT};

pub trait TwinConnector: Send + Sync {
    fn connect(&self, descriptor: &ShellDescriptor) -> Result<Arc<dyn TwinAccess>>;
}

/// In-process twins by `local://` endpoint; `http(s)://` endpoints get an HTTP client.
pub struct TwinDirectory {
    local: RwLock<BTreeMap<String, Arc<dyn TwinAccess>>>,
    timeout: Duration,
}

impl Default for TwinDirectory {
    fn default() -> Self {
        Self {
            local: RwLock::new(BTreeMap::new()),
            timeout: DEFAULT_INVOKE_TIMEOUT,
        }
    }
}

impl TwinDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn attach(&self, endpoint: impl Into<String>, twin: Arc<dyn TwinAccess>) {
        self.local.write().unwrap().insert(endpoint.into(), twin);
    }

    pub fn detach(&self, endpoint: &str) {
        self.local.write().unwrap().remove(endpoint);
    }
}

impl TwinConnector for TwinDirectory {
    fn connect(&self, descriptor: &ShellDescriptor) -> Result<Arc<dyn TwinAccess>> {
        if let Some(twin) = self.local.read().unwrap().get(&descriptor.endpoint) {
            return Ok(Arc::clone(twin));
        }
        if descriptor.endpoint.starts_with("http://") || descriptor.endpoint.starts_with("https://") {
            return Ok(Arc::new(HttpTwinClient::new(
                descriptor.id.clone(),
                &descriptor.endpoint,
                self.timeout,
            )));
        }
        Err(Error::TwinUnavailable(descriptor.id.clone()))
    }
}
