//! `agrictl`: serve components, inspect twins, issue exchanges, run recipes
//! and scenarios. Exit codes: 0 success, 1 failure, 2 usage or not found.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args as ClapArgs, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::clock::{Clock, SystemClock};
use crate::directory::TwinDirectory;
use crate::error::{Error, Result};
use crate::field::{FieldOperations, FieldService, FieldStore, ProcessTrigger, TriggerSink};
use crate::http::{ApiServer, HubClient, MediatorClient, OrchestratorClient, Services};
use crate::hub::{Comparator, GeoBox, HubOptions, Predicate, Registry, Scalar, TwinHub, TwinQuery, DATA_DIR_ENV};
use crate::mediator::{ExchangeCommand, Grant, GrantScope, Mediator, ReceiptStatus};
use crate::orchestrator::{bundled, Orchestrator, RoleBindings, RunStatus};
use crate::sim::{self, ScenarioSpec};
use crate::twin::{SemanticId, TwinId, TwinKind};
use crate::vocabulary::Vocabulary;

pub const HUB_URL_ENV: &str = "AGRITWIN_HUB_URL";
pub const DEFAULT_HUB_URL: &str = "http://127.0.0.1:7700";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Human,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "agrictl", version, about = "Operate agricultural digital twins")]
pub struct Cli {
    /// Base URL of the hub (or a simfarm serving everything).
    #[arg(long, global = true, env = HUB_URL_ENV, default_value = DEFAULT_HUB_URL)]
    pub hub_url: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a component until interrupted.
    Serve(ServeArgs),
    #[command(subcommand)]
    Twin(TwinCmd),
    #[command(subcommand)]
    Exchange(ExchangeCmd),
    #[command(subcommand)]
    Recipe(RecipeCmd),
    #[command(subcommand)]
    Scenario(ScenarioCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Component {
    Hub,
    Mediator,
    Orchestrator,
    Simfarm,
}

#[derive(Debug, ClapArgs)]
pub struct ServeArgs {
    pub component: Component,
    #[arg(long, default_value_t = 7700)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Snapshot directory of the hub; created when missing.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    /// Vocabulary seed file replacing the bundled one.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    /// Extra recipe definitions for the orchestrator.
    #[arg(long = "recipe")]
    pub recipes: Vec<PathBuf>,
    /// Orchestrator receiving the hub's process triggers.
    #[arg(long)]
    pub orchestrator_url: Option<String>,
    /// Scenario world served by simfarm.
    #[arg(long, default_value = "closedloop")]
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum TwinCmd {
    /// All registry entries.
    List,
    Show { id: String },
    /// Ids of twins matching every condition.
    Query {
        /// `concept=value`, also `<`, `<=`, `>`, `>=`; concepts may be short names.
        #[arg(long = "where")]
        conditions: Vec<String>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// `lonMin,latMin,lonMax,latMax` around the field centroid.
        #[arg(long)]
        bbox: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Field,
    System,
}

#[derive(Debug, Subcommand)]
pub enum ExchangeCmd {
    /// Record the owner's consent for `subject` to copy items from a twin.
    Grant {
        #[arg(long)]
        grantor: String,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        twin: String,
        #[arg(long, value_delimiter = ',')]
        items: Vec<String>,
        #[arg(long)]
        standing: bool,
        #[arg(long)]
        mediator_url: Option<String>,
    },
    Submit {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, value_delimiter = ',')]
        items: Vec<String>,
        /// Principal the grant was issued to.
        #[arg(long = "as", default_value = "operator")]
        principal: String,
        #[arg(long)]
        command_id: Option<String>,
        #[arg(long)]
        mediator_url: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecipeCmd {
    /// Upload a definition file.
    Upload {
        path: PathBuf,
        #[arg(long)]
        orchestrator_url: Option<String>,
    },
    Run {
        name: String,
        /// `role=twinId`, once per role.
        #[arg(long = "bind")]
        bindings: Vec<String>,
        #[arg(long)]
        field: String,
        #[arg(long)]
        orchestrator_url: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    Run {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario spec file replacing the bundled one.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Report file; defaults to `reports/<name>-seed<seed>.json` under the data dir.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
}

/// Exit code for an error: 2 for usage and lookup problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotFound(_)
        | Error::PathNotFound(_)
        | Error::ScenarioUnknown(_)
        | Error::UnknownSystem(_)
        | Error::InvalidId(_)
        | Error::BadConfig(_)
        | Error::PortInUse(_)
        | Error::UnresolvableSemanticId(_)
        | Error::InvalidCommand(_)
        | Error::ParseError(_) => 2,
        _ => 1,
    }
}

/// Runs one command, writing results to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let format = cli.format;
    let result = match cli.command {
        Command::Serve(args) => serve(&args, out),
        Command::Twin(cmd) => twin(&cli.hub_url, cmd, format, out),
        Command::Exchange(cmd) => exchange(&cli.hub_url, cmd, format, out),
        Command::Recipe(cmd) => recipe(&cli.hub_url, cmd, format, out),
        Command::Scenario(cmd) => scenario(cmd, format, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::Transport(format!("stdout: {e}")))
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(value)?)
}

fn twin_id(s: &str) -> Result<TwinId> {
    s.parse()
}

fn semantic_ids(items: &[String]) -> Result<Vec<SemanticId>> {
    items.iter().map(|i| SemanticId::expand(i.trim())).collect()
}

fn load_vocabulary(path: Option<&Path>) -> Result<Arc<Vocabulary>> {
    Ok(Arc::new(match path {
        Some(p) => Vocabulary::from_seed_file(p)?,
        None => Vocabulary::standard(),
    }))
}

/// Hands hub triggers to a remote orchestrator, or just logs them.
struct ForwardTriggers(Option<OrchestratorClient>);

impl TriggerSink for ForwardTriggers {
    fn deliver(&self, trigger: ProcessTrigger) {
        log::info!(
            "trigger {} for {} on {} (target {})",
            trigger.trigger_id,
            trigger.process_kind,
            trigger.field_id,
            trigger.target_value
        );
        if let Some(client) = self.0.clone() {
            // The orchestrator writes back to this hub, so never block the caller.
            std::thread::spawn(move || match client.handle_trigger(&trigger) {
                Ok(o) => log::info!("trigger {} handled in {} passes", o.trigger_id, o.records.len()),
                Err(e) => log::warn!("trigger {} failed: {e}", trigger.trigger_id),
            });
        }
    }
}

fn wait_for_signal() -> Result<()> {
    let (tx, rx) = std::sync::mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| Error::BadConfig(format!("signal handler: {e}")))?;
    let _ = rx.recv();
    Ok(())
}

fn serve(args: &ServeArgs, out: &mut dyn Write) -> Result<i32> {
    let addr = format!("{}:{}", args.bind, args.port);
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let vocabulary = load_vocabulary(args.vocabulary.as_deref())?;
    let directory = Arc::new(TwinDirectory::new());
    let hub_url = std::env::var(HUB_URL_ENV).unwrap_or_else(|_| DEFAULT_HUB_URL.to_owned());

    // The world must outlive the server in simfarm mode.
    let mut world = None;
    let server = match args.component {
        Component::Hub => {
            let options = HubOptions {
                data_dir: args.data_dir.clone(),
                ..HubOptions::default()
            };
            let hub = Arc::new(TwinHub::new(vocabulary.clone(), clock.clone(), options)?.with_directory(directory));
            let operations = Arc::new(FieldOperations::new(
                clock,
                Arc::new(ForwardTriggers(args.orchestrator_url.as_deref().map(OrchestratorClient::new))),
            ));
            let fields = Arc::new(FieldService::new(hub.clone(), operations));
            let restored = hub.restore()?;
            if !restored.is_empty() {
                log::info!("restored {} twins from snapshots", restored.len());
            }
            let server = ApiServer::bind(
                &addr,
                Arc::new(Services {
                    vocabulary: Some(vocabulary),
                    hub: Some(hub.clone()),
                    fields: Some(fields),
                    ..Services::default()
                }),
            )?;
            hub.set_public_base(Some(server.url()));
            server
        }
        Component::Mediator => {
            let registry: Arc<dyn Registry> = Arc::new(HubClient::new(&hub_url));
            let mediator = Arc::new(Mediator::new(registry, directory, vocabulary.clone(), clock));
            ApiServer::bind(
                &addr,
                Arc::new(Services {
                    vocabulary: Some(vocabulary),
                    mediator: Some(mediator),
                    ..Services::default()
                }),
            )?
        }
        Component::Orchestrator => {
            let hub = Arc::new(HubClient::new(&hub_url));
            let registry: Arc<dyn Registry> = hub.clone();
            let fields: Arc<dyn FieldStore> = hub;
            let orchestrator = Arc::new(Orchestrator::new(registry, directory, fields, clock));
            for def in [bundled::WEED_CONTROL_POTATO, bundled::WEED_CONTROL_SUGAR_BEET, bundled::FERTILIZATION] {
                orchestrator.load_recipe(def.as_bytes())?;
            }
            for path in &args.recipes {
                let bytes = std::fs::read(path).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
                orchestrator.load_recipe(&bytes)?;
            }
            ApiServer::bind(
                &addr,
                Arc::new(Services {
                    vocabulary: Some(vocabulary),
                    orchestrator: Some(orchestrator),
                    ..Services::default()
                }),
            )?
        }
        Component::Simfarm => {
            let mut spec = sim::bundled_spec(&args.scenario)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let w = sim::start_world(spec)?;
            let server = w.serve(&addr)?;
            world = Some(w);
            server
        }
    };
    emit(out, &format!("serving {:?} on {}", args.component, server.url()).to_lowercase())?;
    out.flush().ok();
    wait_for_signal()?;
    server.shutdown();
    drop(world);
    Ok(0)
}

/// Parses `concept<op>value`; numbers compare numerically, anything else as text.
pub fn parse_condition(s: &str) -> Result<Predicate> {
    let (pos, op, len) = ["<=", ">=", "=", "<", ">"]
        .iter()
        .filter_map(|op| s.find(op).map(|p| (p, *op, op.len())))
        .min_by_key(|(p, op, _)| (*p, std::cmp::Reverse(op.len())))
        .ok_or_else(|| Error::BadConfig(format!("condition '{s}' has no comparator")))?;
    let key = s[..pos].trim();
    let raw = s[pos + len..].trim();
    if key.is_empty() || raw.is_empty() {
        return Err(Error::BadConfig(format!("condition '{s}' is incomplete")));
    }
    let op = match op {
        "=" => Comparator::Eq,
        "<" => Comparator::Lt,
        "<=" => Comparator::Le,
        ">" => Comparator::Gt,
        _ => Comparator::Ge,
    };
    let value = match raw.parse::<f64>() {
        Ok(n) => Scalar::Number(n),
        Err(_) if raw == "true" || raw == "false" => Scalar::Boolean(raw == "true"),
        Err(_) => Scalar::Text(raw.to_owned()),
    };
    Ok(Predicate {
        semantic_id: SemanticId::expand(key)?,
        op,
        value,
    })
}

fn parse_bbox(s: &str) -> Result<GeoBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::BadConfig(format!("bbox: {e}")))?;
    match v[..] {
        [lon_min, lat_min, lon_max, lat_max] => Ok(GeoBox {
            lon_min,
            lat_min,
            lon_max,
            lat_max,
        }),
        _ => Err(Error::BadConfig("bbox needs four numbers".into())),
    }
}

fn twin(hub_url: &str, cmd: TwinCmd, format: Format, out: &mut dyn Write) -> Result<i32> {
    let hub = HubClient::new(hub_url);
    match cmd {
        TwinCmd::List => {
            let entries = hub.entries()?;
            match format {
                Format::Json => emit_json(out, &entries)?,
                Format::Human => {
                    for e in &entries {
                        let tags: Vec<String> = e
                            .tags
                            .iter()
                            .map(|(k, v)| format!("{}={}", short(k), scalar_text(v)))
                            .collect();
                        emit(
                            out,
                            &format!(
                                "{:<16} {:<11} {}  {}",
                                e.descriptor.id.to_string(),
                                format!("{:?}", e.descriptor.kind),
                                e.descriptor.endpoint,
                                tags.join(" ")
                            ),
                        )?;
                    }
                }
            }
        }
        TwinCmd::Show { id } => {
            let entry = hub.entry(&twin_id(&id)?)?;
            match format {
                Format::Json => emit_json(out, &entry.descriptor)?,
                Format::Human => {
                    let d = &entry.descriptor;
                    emit(out, &format!("{} ({:?})", d.id, d.kind))?;
                    emit(out, &format!("  endpoint   {}", d.endpoint))?;
                    emit(out, &format!("  registered {}", entry.registered_at))?;
                    emit(out, &format!("  digest     {}", d.structure_digest))?;
                    for sm in &d.submodels {
                        emit(out, &format!("  {} [{}]", sm.short_name, short(&sm.semantic_id)))?;
                        for el in &sm.elements {
                            emit(out, &format!("    {}", serde_json::to_string(el)?))?;
                        }
                    }
                }
            }
        }
        TwinCmd::Query { conditions, kind, bbox } => {
            let query = TwinQuery {
                kind: kind.map(|k| match k {
                    KindArg::Field => TwinKind::FieldTwin,
                    KindArg::System => TwinKind::SystemTwin,
                }),
                predicates: conditions.iter().map(|c| parse_condition(c)).collect::<Result<_>>()?,
                geo_box: bbox.as_deref().map(parse_bbox).transpose()?,
            };
            let ids = Registry::query(&hub, &query)?;
            match format {
                Format::Json => emit_json(out, &ids)?,
                Format::Human => {
                    for id in &ids {
                        emit(out, id.as_str())?;
                    }
                }
            }
        }
    }
    Ok(0)
}

fn short(id: &SemanticId) -> &str {
    id.as_str().strip_prefix(crate::vocabulary::NAMESPACE).unwrap_or(id.as_str())
}

fn scalar_text(s: &Scalar) -> String {
    match s {
        Scalar::Text(t) => t.clone(),
        Scalar::Number(n) => n.to_string(),
        Scalar::Boolean(b) => b.to_string(),
    }
}

fn exchange(hub_url: &str, cmd: ExchangeCmd, format: Format, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        ExchangeCmd::Grant {
            grantor,
            subject,
            twin,
            items,
            standing,
            mediator_url,
        } => {
            let mediator = MediatorClient::new(mediator_url.as_deref().unwrap_or(hub_url));
            let scope = if standing { GrantScope::Standing } else { GrantScope::OneTime };
            let id = mediator.register_grant(&Grant::new(&grantor, &subject, twin_id(&twin)?, semantic_ids(&items)?, scope))?;
            match format {
                Format::Json => emit_json(out, &serde_json::json!({ "grantId": id }))?,
                Format::Human => emit(out, &id)?,
            }
            Ok(0)
        }
        ExchangeCmd::Submit {
            from,
            to,
            items,
            principal,
            command_id,
            mediator_url,
        } => {
            let mediator = MediatorClient::new(mediator_url.as_deref().unwrap_or(hub_url));
            let command_id = command_id.unwrap_or_else(|| format!("cli-{}", chrono::Utc::now().timestamp_micros()));
            let receipt = mediator.submit(&ExchangeCommand::copy(
                command_id,
                twin_id(&from)?,
                twin_id(&to)?,
                semantic_ids(&items)?,
                principal,
            ))?;
            match format {
                Format::Json => emit_json(out, &receipt)?,
                Format::Human => {
                    emit(out, &format!("{} {:?}", receipt.command_id, receipt.status))?;
                    for item in &receipt.per_item {
                        emit(out, &format!("  {}", serde_json::to_string(item)?))?;
                    }
                }
            }
            Ok(if receipt.status == ReceiptStatus::Delivered { 0 } else { 1 })
        }
    }
}

fn parse_bindings(bindings: &[String]) -> Result<RoleBindings> {
    bindings
        .iter()
        .map(|b| {
            let (role, id) = b
                .split_once('=')
                .ok_or_else(|| Error::BadConfig(format!("binding '{b}' is not role=twinId")))?;
            Ok((role.trim().to_owned(), twin_id(id.trim())?))
        })
        .collect()
}

fn recipe(hub_url: &str, cmd: RecipeCmd, format: Format, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        RecipeCmd::Upload { path, orchestrator_url } => {
            let client = OrchestratorClient::new(orchestrator_url.as_deref().unwrap_or(hub_url));
            let bytes = std::fs::read(&path).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
            let recipe = client.upload_recipe(bytes)?;
            match format {
                Format::Json => emit_json(out, &recipe)?,
                Format::Human => emit(out, &format!("{} {}", recipe.name, recipe.definition_digest))?,
            }
            Ok(0)
        }
        RecipeCmd::Run {
            name,
            bindings,
            field,
            orchestrator_url,
        } => {
            let client = OrchestratorClient::new(orchestrator_url.as_deref().unwrap_or(hub_url));
            let (run_id, status) = client.submit_run(&name, &parse_bindings(&bindings)?, &twin_id(&field)?)?;
            match format {
                Format::Json => emit_json(out, &serde_json::json!({ "runId": run_id, "run": status }))?,
                Format::Human => match &status {
                    RunStatus::Completed { record } => {
                        emit(out, &format!("{run_id} completed: {} by {}", record.job_id, record.executed_by))?;
                        emit(out, &format!("  covered {} ha", record.covered_area_ha))?;
                        for (k, v) in &record.outputs {
                            emit(out, &format!("  {} = {}", short(k), v.to_json()))?;
                        }
                    }
                    RunStatus::Failed { error } => emit(out, &format!("{run_id} failed [{}]: {error}", error.code()))?,
                },
            }
            Ok(match status {
                RunStatus::Completed { .. } => 0,
                RunStatus::Failed { .. } => 1,
            })
        }
    }
}

fn default_report_path(name: &str, seed: u64) -> PathBuf {
    let base = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    base.join("reports").join(format!("{name}-seed{seed}.json"))
}

fn scenario(cmd: ScenarioCmd, format: Format, out: &mut dyn Write) -> Result<i32> {
    let ScenarioCmd::Run {
        name,
        seed,
        spec,
        report_out,
    } = cmd;
    let mut spec = match spec {
        Some(path) => {
            let bytes = std::fs::read(&path).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
            let spec = ScenarioSpec::from_json(&bytes)?;
            if spec.name != name {
                return Err(Error::BadConfig(format!("spec file is for '{}', not '{name}'", spec.name)));
            }
            spec
        }
        None => sim::bundled_spec(&name)?,
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let report = sim::run_scenario(&spec)?;
    let path = report_out.unwrap_or_else(|| default_report_path(&name, spec.seed));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::BadConfig(format!("{}: {e}", dir.display())))?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
    match format {
        Format::Json => emit(out, &json)?,
        Format::Human => {
            emit(
                out,
                &format!(
                    "{} seed {}: {}",
                    report.scenario,
                    report.seed,
                    if report.pass { "PASS" } else { "FAIL" }
                ),
            )?;
            for c in &report.clauses {
                emit(out, &format!("  [{}] {}", if c.pass { "ok" } else { "FAIL" }, c.clause))?;
                if !c.pass {
                    emit(out, &format!("      expected {}\n      observed {}", c.expected, c.observed))?;
                }
            }
            emit(out, &format!("report written to {}", path.display()))?;
        }
    }
    Ok(if report.pass { 0 } else { 1 })
}
