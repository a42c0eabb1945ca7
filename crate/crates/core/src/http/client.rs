use std::collections::BTreeMap;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::{FieldReading, FieldSeed, FieldStore, JobRecord, ProcessTrigger};
use crate::hub::{Registry, RegistryEntry, Scalar, TwinQuery};
use crate::mediator::{ExchangeCommand, ExchangeReceipt, Grant};
use crate::orchestrator::{Recipe, RoleBindings, RunStatus, TriggerOutcome};
use crate::twin::{
    Args, ElementPath, InboxEntry, Property, SemanticId, ShellDescriptor, Timestamp, TwinAccess, TwinId, TypedValue,
    DEFAULT_INVOKE_TIMEOUT,
};
use crate::vocabulary::ConceptDescription;

pub(crate) fn enc(s: &str) -> String {
    urlencoding::encode(s).into_owned()
}

/// Why a call did not produce a response body.
enum Failure {
    /// The server answered with an error document.
    Api(Error),
    /// No usable answer: connection refused, timeout, garbage.
    Transport(String),
}

/// Thin JSON-over-HTTP caller shared by the typed clients.
#[derive(Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    base: String,
}

impl JsonClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            base: base.trim_end_matches('/').to_owned(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn call_raw(&self, method: &str, path: &str, body: Option<Vec<u8>>) -> Result<Value, Failure> {
        let url = format!("{}{}", self.base, path);
        let req = self.agent.request(method, &url).set("Content-Type", "application/json");
        let res = match body {
            Some(b) => req.send_bytes(&b),
            None => req.call(),
        };
        match res {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| Failure::Transport(e.to_string()))?;
                if text.is_empty() {
                    Ok(Value::Null)
                } else {
                    serde_json::from_str(&text).map_err(|e| Failure::Transport(format!("{url}: {e}")))
                }
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                match serde_json::from_str::<Error>(&text) {
                    Ok(e) => Err(Failure::Api(e)),
                    Err(_) => Err(Failure::Transport(format!("{url}: HTTP {code}: {text}"))),
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Transport(format!("{url}: {t}"))),
        }
    }

    fn call<T: DeserializeOwned>(&self, method: &str, path: &str, body: Option<&impl Serialize>) -> Result<T> {
        let bytes = body.map(serde_json::to_vec).transpose()?;
        match self.call_raw(method, path, bytes) {
            Ok(v) => Ok(serde_json::from_value(v)?),
            Err(Failure::Api(e)) => Err(e),
            Err(Failure::Transport(m)) => Err(Error::Transport(m)),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call(
            "GET",
            path,
            None::<&()>,
        )
    }

    pub fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T> {
        self.call("POST", path, Some(body))
    }

    pub fn put<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T> {
        self.call("PUT", path, Some(body))
    }

    pub fn delete<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call("DELETE", path, None::<&()>)
    }

    pub fn post_bytes<T: DeserializeOwned>(&self, path: &str, body: Vec<u8>) -> Result<T> {
        match self.call_raw("POST", path, Some(body)) {
            Ok(v) => Ok(serde_json::from_value(v)?),
            Err(Failure::Api(e)) => Err(e),
            Err(Failure::Transport(m)) => Err(Error::Transport(m)),
        }
    }
}

/// A twin reached over HTTP at its descriptor endpoint. Transport failures
/// surface as `TwinUnavailable`.
pub struct HttpTwinClient {
    id: TwinId,
    http: JsonClient,
}

impl HttpTwinClient {
    pub fn new(id: TwinId, endpoint: &str, timeout: Duration) -> Self {
        Self {
            id,
            http: JsonClient::new(endpoint, timeout),
        }
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Transport(m) => {
                log::debug!("{}: {m}", self.id);
                Error::TwinUnavailable(self.id.clone())
            }
            other => other,
        })
    }

    fn element_path(path: &ElementPath) -> String {
        format!("/submodels/{}/elements/{}", enc(&path.submodel), enc(&path.element))
    }

    pub fn stop(&self) -> Result<()> {
        self.wrap(self.http.post::<Value>("/admin/stop", &json!({})).map(|_| ()))
    }

    pub fn start(&self) -> Result<()> {
        self.wrap(self.http.post::<Value>("/admin/start", &json!({})).map(|_| ()))
    }
}

impl TwinAccess for HttpTwinClient {
    fn twin_id(&self) -> TwinId {
        self.id.clone()
    }

    fn describe(&self) -> Result<ShellDescriptor> {
        self.wrap(self.http.get("/shell"))
    }

    fn get_property(&self, path: &ElementPath) -> Result<Property> {
        self.wrap(self.http.get(&Self::element_path(path)))
    }

    fn set_property(&self, path: &ElementPath, value: TypedValue, at: Timestamp) -> Result<bool> {
        let out: Value = self.wrap(
            self.http
                .put(&Self::element_path(path), &json!({ "value": value, "at": at })),
        )?;
        Ok(out["accepted"].as_bool().unwrap_or(false))
    }

    fn invoke_operation(&self, path: &ElementPath, args: &Args) -> Result<Args> {
        let url = format!("/submodels/{}/operations/{}/invoke", enc(&path.submodel), enc(&path.element));
        let out: Value = self.wrap(self.http.post(&url, &json!({ "args": args })))?;
        Ok(serde_json::from_value(out["outputs"].clone())?)
    }

    fn inbox_put(&self, entry: InboxEntry) -> Result<bool> {
        let url = format!("/inbox/{}", enc(entry.semantic_id.as_str()));
        let out: Value = self.wrap(self.http.put(&url, &entry))?;
        Ok(out["accepted"].as_bool().unwrap_or(false))
    }
}

/// Client for a remote hub: registry, vocabulary and field-twin routes.
#[derive(Clone)]
pub struct HubClient {
    http: JsonClient,
}

impl HubClient {
    pub fn new(base: &str) -> Self {
        Self::with_timeout(base, DEFAULT_INVOKE_TIMEOUT)
    }

    pub fn with_timeout(base: &str, timeout: Duration) -> Self {
        Self {
            http: JsonClient::new(base, timeout),
        }
    }

    pub fn base(&self) -> &str {
        self.http.base()
    }

    pub fn health(&self) -> Result<Value> {
        self.http.get("/health")
    }

    pub fn entries(&self) -> Result<Vec<RegistryEntry>> {
        self.http.get("/registry/twins")
    }

    pub fn entry(&self, id: &TwinId) -> Result<RegistryEntry> {
        self.http.get(&format!("/registry/twins/{}", enc(id.as_str())))
    }

    pub fn register(&self, descriptor: &ShellDescriptor, tags: &BTreeMap<SemanticId, Scalar>) -> Result<()> {
        self.http
            .post::<Value>("/registry/twins", &json!({ "descriptor": descriptor, "tags": tags }))
            .map(|_| ())
    }

    pub fn deregister(&self, id: &TwinId) -> Result<()> {
        self.http
            .delete::<Value>(&format!("/registry/twins/{}", enc(id.as_str())))
            .map(|_| ())
    }

    pub fn host_field(&self, seed: &FieldSeed) -> Result<String> {
        let out: Value = self.http.post("/fields", seed)?;
        Ok(out["endpoint"].as_str().unwrap_or_default().to_owned())
    }

    pub fn work_history(&self, field: &TwinId) -> Result<Vec<JobRecord>> {
        self.http.get(&format!("/fields/{}/history", enc(field.as_str())))
    }

    pub fn set_target(&self, field: &TwinId, id: &SemanticId, target: f64) -> Result<ProcessTrigger> {
        self.http.post(
            &format!("/fields/{}/target", enc(field.as_str())),
            &json!({ "semanticId": id, "targetValue": target }),
        )
    }

    pub fn concept(&self, id: &SemanticId) -> Result<ConceptDescription> {
        self.http.get(&format!("/concepts/{}", enc(id.as_str())))
    }

    pub fn concepts(&self) -> Result<Vec<ConceptDescription>> {
        self.http.get("/concepts")
    }

    pub fn twin(&self, id: &TwinId) -> HttpTwinClient {
        HttpTwinClient::new(
            id.clone(),
            &format!("{}/twins/{}", self.http.base(), enc(id.as_str())),
            DEFAULT_INVOKE_TIMEOUT,
        )
    }
}

impl FieldStore for HubClient {
    fn read_field_data(&self, field: &TwinId, ids: &[SemanticId]) -> Result<BTreeMap<SemanticId, FieldReading>> {
        self.http
            .post(&format!("/fields/{}/read", enc(field.as_str())), &json!({ "semanticIds": ids }))
    }

    fn record_work(&self, field: &TwinId, record: &JobRecord) -> Result<()> {
        self.http
            .post::<Value>(&format!("/fields/{}/history", enc(field.as_str())), record)
            .map(|_| ())
    }
}

impl Registry for HubClient {
    fn lookup(&self, id: &TwinId) -> Result<ShellDescriptor> {
        self.entry(id).map(|e| e.descriptor)
    }

    fn query(&self, query: &TwinQuery) -> Result<Vec<TwinId>> {
        self.http.post("/registry/query", query)
    }
}

#[derive(Clone)]
pub struct MediatorClient {
    http: JsonClient,
}

impl MediatorClient {
    pub fn new(base: &str) -> Self {
        Self {
            http: JsonClient::new(base, DEFAULT_INVOKE_TIMEOUT * 2),
        }
    }

    pub fn register_grant(&self, grant: &Grant) -> Result<String> {
        let out: Value = self.http.post("/grants", grant)?;
        Ok(out["grantId"].as_str().unwrap_or_default().to_owned())
    }

    pub fn submit(&self, cmd: &ExchangeCommand) -> Result<ExchangeReceipt> {
        self.http.post("/exchange", cmd)
    }

    pub fn receipt(&self, command_id: &str) -> Result<ExchangeReceipt> {
        self.http.get(&format!("/exchange/{}", enc(command_id)))
    }
}

#[derive(Clone)]
pub struct OrchestratorClient {
    http: JsonClient,
}

impl OrchestratorClient {
    pub fn new(base: &str) -> Self {
        Self {
            http: JsonClient::new(base, std::time::Duration::from_secs(60)),
        }
    }

    pub fn upload_recipe(&self, definition: Vec<u8>) -> Result<Recipe> {
        self.http.post_bytes("/recipes", definition)
    }

    pub fn submit_run(&self, recipe: &str, bindings: &RoleBindings, field: &TwinId) -> Result<(String, RunStatus)> {
        let out: Value = self.http.post(
            "/runs",
            &json!({ "recipe": recipe, "bindings": bindings, "field": field }),
        )?;
        let id = out["runId"].as_str().unwrap_or_default().to_owned();
        Ok((id, serde_json::from_value(out["run"].clone())?))
    }

    pub fn run_status(&self, id: &str) -> Result<RunStatus> {
        self.http.get(&format!("/runs/{}", enc(id)))
    }

    pub fn handle_trigger(&self, trigger: &ProcessTrigger) -> Result<TriggerOutcome> {
        self.http.post("/triggers", trigger)
    }
}
