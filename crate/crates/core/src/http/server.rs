use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::error::{Error, Result};
use crate::field::{FieldSeed, FieldService, FieldTwinModel, ProcessTrigger};
use crate::hub::{Scalar, TwinHub, TwinQuery};
use crate::mediator::{ExchangeCommand, Grant, Mediator};
use crate::orchestrator::{Orchestrator, RoleBindings};
use crate::twin::{Args, ElementPath, InboxEntry, SemanticId, ShellDescriptor, Timestamp, TwinAccess, TwinId, TypedValue};
use crate::vocabulary::{ConceptDescription, Vocabulary};

const WORKERS: usize = 8;

/// Components mounted on one server. Absent components answer 404.
#[derive(Default)]
pub struct Services {
    pub vocabulary: Option<Arc<Vocabulary>>,
    pub hub: Option<Arc<TwinHub>>,
    pub fields: Option<Arc<FieldService>>,
    pub mediator: Option<Arc<Mediator>>,
    pub orchestrator: Option<Arc<Orchestrator>>,
    /// Twins served in addition to the hub's hosted ones (system twins).
    pub twins: RwLock<BTreeMap<TwinId, Arc<dyn TwinAccess>>>,
}

impl Services {
    pub fn serve_twin(&self, twin: Arc<dyn TwinAccess>) {
        self.twins.write().unwrap().insert(twin.twin_id(), twin);
    }

    fn twin(&self, id: &TwinId) -> Result<Arc<dyn TwinAccess>> {
        if let Some(hub) = &self.hub {
            if let Ok(t) = hub.hosted_twin(id) {
                return Ok(t);
            }
        }
        self.twins
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("twin {id}")))
    }
}

/// A running HTTP server; stops when dropped.
pub struct ApiServer {
    server: Arc<Server>,
    addr: SocketAddr,
    stopping: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ApiServer {
    /// Binds `addr` (`host:port`, port 0 picks a free one) and starts serving.
    pub fn bind(addr: &str, services: Arc<Services>) -> Result<Self> {
        let server = Server::http(addr).map_err(|e| {
            let msg = e.to_string();
            if e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::AddrInUse)
                || msg.contains("in use")
            {
                Error::PortInUse(addr.to_owned())
            } else {
                Error::BadConfig(format!("{addr}: {msg}"))
            }
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::BadConfig(format!("{addr} is not an IP address")))?;
        let server = Arc::new(server);
        let stopping = Arc::new(AtomicBool::new(false));
        let workers = (0..WORKERS)
            .map(|_| {
                let server = server.clone();
                let services = services.clone();
                let stopping = stopping.clone();
                std::thread::spawn(move || loop {
                    match server.recv() {
                        Ok(req) => handle(&services, req),
                        Err(_) if stopping.load(Ordering::SeqCst) => break,
                        Err(e) => log::warn!("accept failed: {e}"),
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr,
            stopping,
            workers,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.stopping.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn handle(services: &Services, mut req: Request) {
    let method = req.method().clone();
    let url = req.url().to_owned();
    let mut body = Vec::new();
    let (status, value) = match req.as_reader().read_to_end(&mut body) {
        Err(e) => (400, json!({ "code": "ParseError", "detail": e.to_string() })),
        Ok(_) => match route(services, &method, &url, &body) {
            Ok((status, v)) => (status, v),
            Err(e) => (e.http_status(), serde_json::to_value(&e).unwrap_or(Value::Null)),
        },
    };
    log::debug!("{method} {url} -> {status}");
    let bytes = serde_json::to_vec(&value).unwrap_or_default();
    let response = Response::from_data(bytes)
        .with_status_code(status)
        .with_header(Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header"));
    if let Err(e) = req.respond(response) {
        log::debug!("respond failed: {e}");
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::ParseError(e.to_string()))
}

fn ok(v: impl serde::Serialize) -> Result<(u16, Value)> {
    Ok((200, serde_json::to_value(v)?))
}

fn component<'a, T>(c: &'a Option<Arc<T>>, name: &str) -> Result<&'a Arc<T>> {
    c.as_ref().ok_or_else(|| Error::NotFound(format!("no {name} on this server")))
}

fn twin_id(s: &str) -> Result<TwinId> {
    s.parse()
}

#[derive(Deserialize)]
struct WriteBody {
    value: TypedValue,
    at: Timestamp,
}

#[derive(Deserialize)]
struct InvokeBody {
    #[serde(default)]
    args: Args,
}

#[derive(Deserialize)]
struct RegisterBody {
    descriptor: ShellDescriptor,
    #[serde(default)]
    tags: BTreeMap<SemanticId, Scalar>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ReadingBody {
    semantic_id: SemanticId,
    value: TypedValue,
    unit: String,
    at: Timestamp,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TargetBody {
    semantic_id: SemanticId,
    target_value: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ReadBody {
    semantic_ids: Vec<SemanticId>,
}

#[derive(Deserialize)]
struct RunBody {
    recipe: String,
    bindings: RoleBindings,
    field: TwinId,
}

fn route(s: &Services, method: &Method, url: &str, body: &[u8]) -> Result<(u16, Value)> {
    let path = url.split('?').next().unwrap_or_default();
    let segs: Vec<String> = path
        .split('/')
        .filter(|p| !p.is_empty())
        .map(|p| urlencoding::decode(p).map(|c| c.into_owned()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::ParseError(e.to_string()))?;
    let segs: Vec<&str> = segs.iter().map(String::as_str).collect();
    use Method::*;
    match (method, segs.as_slice()) {
        (Get, ["health"]) => ok(json!({ "status": "ok" })),

        (Get, ["concepts"]) => ok(component(&s.vocabulary, "vocabulary")?.concepts()),
        (Get, ["concepts", id]) => ok(component(&s.vocabulary, "vocabulary")?.lookup(&id.parse()?)?),
        (Post, ["concepts"]) => {
            let c: ConceptDescription = parse(body)?;
            component(&s.vocabulary, "vocabulary")?.register_concept(c.clone())?;
            Ok((201, serde_json::to_value(c)?))
        }

        (Get, ["registry", "twins"]) => ok(component(&s.hub, "hub")?.entries()),
        (Post, ["registry", "twins"]) => {
            let b: RegisterBody = parse(body)?;
            let id = b.descriptor.id.clone();
            component(&s.hub, "hub")?.register_twin(b.descriptor, b.tags)?;
            Ok((201, json!({ "id": id })))
        }
        (Get, ["registry", "twins", id]) => ok(component(&s.hub, "hub")?.entry(&twin_id(id)?)?),
        (Delete, ["registry", "twins", id]) => {
            component(&s.hub, "hub")?.deregister_twin(&twin_id(id)?)?;
            ok(json!({ "deregistered": id }))
        }
        (Post, ["registry", "query"]) => {
            let q: TwinQuery = parse(body)?;
            ok(component(&s.hub, "hub")?.query(&q)?)
        }

        (Post, ["fields"]) => {
            let seed: FieldSeed = parse(body)?;
            let fields = component(&s.fields, "field service")?;
            let model = FieldTwinModel::from_seed(&seed, Vec::new());
            let endpoint = fields.host(&model, fields.hub().clock().now())?;
            Ok((201, json!({ "id": seed.id, "endpoint": endpoint })))
        }
        (Get, ["fields", id, "history"]) => ok(component(&s.fields, "field service")?.work_history(&twin_id(id)?)?),
        (Post, ["fields", id, "history"]) => {
            let record: crate::field::JobRecord = parse(body)?;
            component(&s.fields, "field service")?.record_work(&twin_id(id)?, &record)?;
            Ok((201, json!({ "recorded": record.job_id })))
        }
        (Post, ["fields", id, "read"]) => {
            let r: ReadBody = parse(body)?;
            ok(component(&s.fields, "field service")?.read_field_data(&twin_id(id)?, &r.semantic_ids)?)
        }
        (Post, ["fields", id, "readings"]) => {
            let r: ReadingBody = parse(body)?;
            let accepted = component(&s.fields, "field service")?.ingest_sensor_reading(
                &twin_id(id)?,
                &r.semantic_id,
                r.value,
                &r.unit,
                r.at,
            )?;
            ok(json!({ "accepted": accepted }))
        }
        (Post, ["fields", id, "target"]) => {
            let t: TargetBody = parse(body)?;
            ok(component(&s.fields, "field service")?.set_target(&twin_id(id)?, &t.semantic_id, t.target_value)?)
        }

        (Get, ["twins", id, "shell"]) => ok(s.twin(&twin_id(id)?)?.describe()?),
        (Get, ["twins", id, "submodels", sm, "elements", el]) => {
            ok(s.twin(&twin_id(id)?)?.get_property(&ElementPath::new(*sm, *el))?)
        }
        (Put, ["twins", id, "submodels", sm, "elements", el]) => {
            let w: WriteBody = parse(body)?;
            let accepted = s.twin(&twin_id(id)?)?.set_property(&ElementPath::new(*sm, *el), w.value, w.at)?;
            ok(json!({ "accepted": accepted }))
        }
        (Post, ["twins", id, "submodels", sm, "operations", op, "invoke"]) => {
            let b: InvokeBody = parse(body)?;
            let outputs = s.twin(&twin_id(id)?)?.invoke_operation(&ElementPath::new(*sm, *op), &b.args)?;
            ok(json!({ "outputs": outputs }))
        }
        (Put, ["twins", id, "inbox", sid]) => {
            let entry: InboxEntry = parse(body)?;
            if entry.semantic_id.as_str() != *sid {
                return Err(Error::InvalidValue(format!(
                    "inbox path {sid} does not match entry {}",
                    entry.semantic_id
                )));
            }
            ok(json!({ "accepted": s.twin(&twin_id(id)?)?.inbox_put(entry)? }))
        }
        (Post, ["twins", id, "admin", "stop"]) => {
            component(&s.hub, "hub")?.stop_twin(&twin_id(id)?)?;
            ok(json!({ "online": false }))
        }
        (Post, ["twins", id, "admin", "start"]) => {
            component(&s.hub, "hub")?.start_twin(&twin_id(id)?)?;
            ok(json!({ "online": true }))
        }

        (Post, ["grants"]) => {
            let g: Grant = parse(body)?;
            let id = component(&s.mediator, "mediator")?.register_grant(g)?;
            Ok((201, json!({ "grantId": id })))
        }
        (Get, ["grants", id]) => ok(component(&s.mediator, "mediator")?.grant(id)?),
        (Post, ["exchange"]) => {
            let cmd: ExchangeCommand = parse(body)?;
            ok(component(&s.mediator, "mediator")?.submit_exchange(&cmd)?)
        }
        (Get, ["exchange", id]) => ok(component(&s.mediator, "mediator")?.receipt(id)?),
        (Get, ["sources", id, "catalog"]) => {
            let catalog = component(&s.mediator, "mediator")?.introspect_source(&twin_id(id)?)?;
            ok(catalog
                .into_iter()
                .map(|(sid, path)| json!({ "semanticId": sid, "path": path }))
                .collect::<Vec<_>>())
        }

        (Get, ["recipes"]) => ok(component(&s.orchestrator, "orchestrator")?.recipe_names()),
        (Post, ["recipes"]) => {
            let r = component(&s.orchestrator, "orchestrator")?.load_recipe(body)?;
            Ok((201, serde_json::to_value(&*r)?))
        }
        (Get, ["recipes", name]) => ok(&*component(&s.orchestrator, "orchestrator")?.recipe(name)?),
        (Post, ["runs"]) => {
            let r: RunBody = parse(body)?;
            let (id, run) = component(&s.orchestrator, "orchestrator")?.submit_run(&r.recipe, &r.bindings, &r.field)?;
            Ok((201, json!({ "runId": id, "run": run })))
        }
        (Get, ["runs", id]) => ok(component(&s.orchestrator, "orchestrator")?.run_status(id)?),
        (Post, ["triggers"]) => {
            let t: ProcessTrigger = parse(body)?;
            ok(component(&s.orchestrator, "orchestrator")?.handle_trigger(&t)?)
        }

        _ => Err(Error::NotFound(format!("{method} {path}"))),
    }
}
