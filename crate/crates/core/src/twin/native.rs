//! In-process request/response transport for vendor-native systems.
//!
//! Each native system is addressed like an HTTP origin and answers
//! `(method, path, body)` requests with `(status, body)`; what the payloads
//! look like is entirely up to the vendor.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct NativeRequest {
    pub method: String,
    pub path: String,
    pub body: Value,
}

impl NativeRequest {
    pub fn new(method: &str, path: &str, body: Value) -> Self {
        Self {
            method: method.to_ascii_uppercase(),
            path: path.to_owned(),
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeResponse {
    pub status: u16,
    pub body: Value,
}

impl NativeResponse {
    pub fn ok(body: Value) -> Self {
        Self { status: 200, body }
    }

    pub fn error(status: u16, message: impl Into<String>) -> Self {
        Self {
            status,
            body: serde_json::json!({ "error": message.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NativeError {
    #[error("native endpoint {0} unreachable")]
    Unreachable(String),
    #[error("protocol error {status}: {message}")]
    Protocol { status: u16, message: String },
}

pub trait NativeService: Send + Sync {
    fn handle(&self, request: &NativeRequest) -> NativeResponse;
}

struct Attachment {
    service: Arc<dyn NativeService>,
    online: bool,
}

/// Address book of native systems with stop/start control.
#[derive(Default)]
pub struct NativeNetwork {
    services: RwLock<BTreeMap<String, Attachment>>,
}

impl NativeNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&self, address: impl Into<String>, service: Arc<dyn NativeService>) {
        self.services
            .write()
            .unwrap()
            .insert(address.into(), Attachment { service, online: true });
    }

    pub fn set_online(&self, address: &str, online: bool) -> bool {
        match self.services.write().unwrap().get_mut(address) {
            Some(a) => {
                a.online = online;
                true
            }
            None => false,
        }
    }

    pub fn is_online(&self, address: &str) -> bool {
        self.services
            .read()
            .unwrap()
            .get(address)
            .is_some_and(|a| a.online)
    }

    pub fn call(&self, address: &str, request: &NativeRequest) -> Result<Value, NativeError> {
        let service = {
            let services = self.services.read().unwrap();
            match services.get(address) {
                Some(a) if a.online => Arc::clone(&a.service),
                _ => return Err(NativeError::Unreachable(address.to_owned())),
            }
        };
        let response = service.handle(request);
        if (200..300).contains(&response.status) {
            Ok(response.body)
        } else {
            let message = response
                .body
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("native error")
                .to_owned();
            Err(NativeError::Protocol {
                status: response.status,
                message,
            })
        }
    }
}

/// Reads a dot-separated path (`robot.reservoir.level_ml`, numeric segments index arrays).
pub fn json_get<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(value);
    }
    path.split('.').try_fold(value, |v, seg| match v {
        Value::Object(map) => map.get(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

/// Writes `new` at a dot-separated object path, creating intermediate objects.
pub fn json_set(target: &mut Value, path: &str, new: Value) {
    let mut cursor = target;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if !cursor.is_object() {
            *cursor = Value::Object(Default::default());
        }
        let map = cursor.as_object_mut().expect("object");
        if i == segments.len() - 1 {
            map.insert((*seg).to_owned(), new);
            return;
        }
        cursor = map.entry((*seg).to_owned()).or_insert_with(|| Value::Object(Default::default()));
    }
}
