//! Recipe engine: binds roles to twins by interface conformance and runs
//! process steps through the standardized twin access API.

mod recipe;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

pub use recipe::{bundled, definition_digest, Binding, Recipe, RecordSpec, RoleSpec, Step};

use crate::clock::Clock;
use crate::directory::TwinConnector;
use crate::error::{Error, Result};
use crate::field::{FieldReading, FieldStore, JobRecord, ProcessKind, ProcessTrigger};
use crate::hub::Registry;
use crate::twin::{Args, ElementPath, SemanticId, ShellDescriptor, TwinId, TypedValue};

pub const DEFAULT_MAX_PASSES: u32 = 100;

pub type RoleBindings = BTreeMap<String, TwinId>;

/// A recipe whose roles are bound to conformant twins.
#[derive(Debug, Clone)]
pub struct BoundRecipe {
    pub recipe: Arc<Recipe>,
    pub bindings: RoleBindings,
    descriptors: BTreeMap<String, ShellDescriptor>,
}

impl BoundRecipe {
    pub fn descriptor(&self, role: &str) -> Option<&ShellDescriptor> {
        self.descriptors.get(role)
    }
}

/// Submodel semantic ids `role` requires that `descriptor` lacks.
pub fn missing_submodels(role: &RoleSpec, descriptor: &ShellDescriptor) -> Vec<SemanticId> {
    let have: BTreeSet<&SemanticId> = descriptor.submodel_semantic_ids().collect();
    role.requires.iter().filter(|id| !have.contains(id)).cloned().collect()
}

/// Called after every pass of a trigger-driven process.
pub trait PassObserver: Send + Sync {
    fn after_pass(&self, trigger: &ProcessTrigger, record: &JobRecord);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriggerOutcome {
    pub trigger_id: String,
    pub records: Vec<JobRecord>,
    pub final_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum RunStatus {
    Completed { record: JobRecord },
    Failed { error: Error },
}

pub struct Orchestrator {
    registry: Arc<dyn Registry>,
    connector: Arc<dyn TwinConnector>,
    fields: Arc<dyn FieldStore>,
    clock: Arc<dyn Clock>,
    max_passes: u32,
    recipes: RwLock<BTreeMap<String, Arc<Recipe>>>,
    processes: RwLock<BTreeMap<ProcessKind, (String, RoleBindings)>>,
    twin_locks: Mutex<HashMap<TwinId, Arc<Mutex<()>>>>,
    jobs: AtomicU64,
    runs: Mutex<BTreeMap<String, RunStatus>>,
    handled: Mutex<BTreeMap<String, TriggerOutcome>>,
    observer: RwLock<Option<Arc<dyn PassObserver>>>,
}

impl Orchestrator {
    pub fn new(
        registry: Arc<dyn Registry>,
        connector: Arc<dyn TwinConnector>,
        fields: Arc<dyn FieldStore>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            registry,
            connector,
            fields,
            clock,
            max_passes: DEFAULT_MAX_PASSES,
            recipes: RwLock::new(BTreeMap::new()),
            processes: RwLock::new(BTreeMap::new()),
            twin_locks: Mutex::new(HashMap::new()),
            jobs: AtomicU64::new(0),
            runs: Mutex::new(BTreeMap::new()),
            handled: Mutex::new(BTreeMap::new()),
            observer: RwLock::new(None),
        }
    }

    pub fn with_max_passes(mut self, max_passes: u32) -> Self {
        self.max_passes = max_passes;
        self
    }

    pub fn set_observer(&self, observer: Arc<dyn PassObserver>) {
        *self.observer.write().unwrap() = Some(observer);
    }

    pub fn load_recipe(&self, definition: &[u8]) -> Result<Arc<Recipe>> {
        let recipe = Arc::new(Recipe::load(definition)?);
        self.recipes
            .write()
            .unwrap()
            .insert(recipe.name.clone(), recipe.clone());
        Ok(recipe)
    }

    pub fn recipe(&self, name: &str) -> Result<Arc<Recipe>> {
        self.recipes
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("recipe {name}")))
    }

    pub fn recipe_names(&self) -> Vec<String> {
        self.recipes.read().unwrap().keys().cloned().collect()
    }

    /// Runs `recipe` with `bindings` for every trigger of `kind`.
    pub fn register_process(&self, kind: ProcessKind, recipe: &str, bindings: RoleBindings) -> Result<()> {
        self.recipe(recipe)?;
        self.processes
            .write()
            .unwrap()
            .insert(kind, (recipe.to_owned(), bindings));
        Ok(())
    }

    pub fn bind_roles(&self, recipe: &Arc<Recipe>, bindings: &RoleBindings) -> Result<BoundRecipe> {
        let mut descriptors = BTreeMap::new();
        for role in &recipe.roles {
            let twin = bindings
                .get(&role.name)
                .ok_or_else(|| Error::UnboundRole(role.name.clone()))?;
            let descriptor = self.registry.lookup(twin)?;
            let missing = missing_submodels(role, &descriptor);
            if !missing.is_empty() {
                return Err(Error::NonconformantTwin {
                    role: role.name.clone(),
                    twin: twin.clone(),
                    missing,
                });
            }
            descriptors.insert(role.name.clone(), descriptor);
        }
        Ok(BoundRecipe {
            recipe: recipe.clone(),
            bindings: bindings.clone(),
            descriptors,
        })
    }

    fn lock_for(&self, twin: &TwinId) -> Arc<Mutex<()>> {
        self.twin_locks
            .lock()
            .unwrap()
            .entry(twin.clone())
            .or_default()
            .clone()
    }

    /// Executes the steps in order and writes the work record back to `field`.
    /// Any failing step aborts the run before anything is written.
    pub fn run(&self, bound: &BoundRecipe, field: &TwinId) -> Result<JobRecord> {
        // Sorted and deduplicated, so concurrent runs acquire locks in one global order.
        let twins: BTreeSet<&TwinId> = bound.bindings.values().collect();
        let locks: Vec<_> = twins.iter().map(|t| self.lock_for(t)).collect();
        let _guards: Vec<_> = locks.iter().map(|l| l.lock().unwrap()).collect();

        let recipe = &bound.recipe;
        let started_at = self.clock.now();
        let mut outputs: Vec<Args> = Vec::with_capacity(recipe.steps.len());
        for (i, step) in recipe.steps.iter().enumerate() {
            let descriptor = bound
                .descriptor(&step.role)
                .ok_or_else(|| Error::UnboundRole(step.role.clone()))?;
            let op = resolve_operation(descriptor, &step.op).map_err(|e| Error::StepArgumentError {
                step: i,
                reason: e.to_string(),
            })?;
            let mut args = Args::new();
            for (name, b) in &step.args {
                let value = self.evaluate(b, &outputs, field).map_err(|e| Error::StepArgumentError {
                    step: i,
                    reason: format!("argument '{name}': {e}"),
                })?;
                args.insert(name.clone(), value);
            }
            let unavailable = |e: Error| Error::StepDownstreamUnavailable {
                step: i,
                reason: e.to_string(),
            };
            let twin = self.connector.connect(descriptor).map_err(unavailable)?;
            let out = twin.invoke_operation(&op, &args).map_err(|e| match e {
                Error::DownstreamUnavailable(_) | Error::TwinUnavailable(_) | Error::Transport(_) => unavailable(e),
                other => Error::StepArgumentError {
                    step: i,
                    reason: other.to_string(),
                },
            })?;
            log::debug!("{}: step {i} ({}) done", recipe.name, step.op);
            outputs.push(out);
        }

        let spec = &recipe.record;
        let record_arg = |b: &Binding| {
            self.evaluate(b, &outputs, field).map_err(|e| Error::StepArgumentError {
                step: recipe.steps.len(),
                reason: e.to_string(),
            })
        };
        let covered = record_arg(&spec.covered_area)?;
        let covered_area_ha = covered.as_f64().ok_or_else(|| Error::StepArgumentError {
            step: recipe.steps.len(),
            reason: "covered area is not numeric".into(),
        })?;
        let mut record_outputs = BTreeMap::new();
        for (id, b) in &spec.outputs {
            record_outputs.insert(id.clone(), record_arg(b)?);
        }
        let n = self.jobs.fetch_add(1, Ordering::SeqCst) + 1;
        let record = JobRecord {
            job_id: format!("job-{n:06}"),
            field_id: field.clone(),
            process_kind: recipe.process_kind,
            executed_by: bound.bindings[&spec.executor].clone(),
            started_at,
            finished_at: self.clock.now(),
            covered_area_ha,
            outputs: record_outputs,
        };
        self.fields.record_work(field, &record)?;
        Ok(record)
    }

    fn evaluate(&self, binding: &Binding, outputs: &[Args], field: &TwinId) -> Result<TypedValue> {
        match binding {
            Binding::Literal(v) => Ok(v.clone()),
            Binding::FromStep { step, output } => outputs
                .get(*step)
                .and_then(|o| o.get(output))
                .cloned()
                .ok_or_else(|| Error::NotFound(format!("output '{output}' of step {step}"))),
            Binding::Field(id) => self.field_value(field, id),
        }
    }

    fn field_value(&self, field: &TwinId, id: &SemanticId) -> Result<TypedValue> {
        let mut read = self.fields.read_field_data(field, std::slice::from_ref(id))?;
        match read.remove(id) {
            Some(FieldReading::Present { value, .. }) => Ok(value),
            Some(FieldReading::Empty) => Err(Error::NotFound(format!("{id} has no value on {field}"))),
            _ => Err(Error::NotFound(format!("{id} on {field}"))),
        }
    }

    /// Loads, binds and runs a registered recipe, remembering the outcome
    /// under a run id.
    pub fn submit_run(&self, recipe: &str, bindings: &RoleBindings, field: &TwinId) -> Result<(String, RunStatus)> {
        let recipe = self.recipe(recipe)?;
        let bound = self.bind_roles(&recipe, bindings)?;
        let status = match self.run(&bound, field) {
            Ok(record) => RunStatus::Completed { record },
            Err(error) => RunStatus::Failed { error },
        };
        let mut runs = self.runs.lock().unwrap();
        let id = format!("run-{:04}", runs.len() + 1);
        runs.insert(id.clone(), status.clone());
        Ok((id, status))
    }

    pub fn run_status(&self, id: &str) -> Result<RunStatus> {
        self.runs
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("run {id}")))
    }

    /// Runs the process registered for the trigger's kind until the field
    /// value reaches the target. Repeated triggers return the first outcome.
    pub fn handle_trigger(&self, trigger: &ProcessTrigger) -> Result<TriggerOutcome> {
        if let Some(done) = self.handled.lock().unwrap().get(&trigger.trigger_id) {
            return Ok(done.clone());
        }
        let (recipe, bindings) = self
            .processes
            .read()
            .unwrap()
            .get(&trigger.process_kind)
            .cloned()
            .ok_or_else(|| Error::NoRecipeForProcess(trigger.process_kind.to_string()))?;
        let bound = self.bind_roles(&self.recipe(&recipe)?, &bindings)?;
        let field = &trigger.field_id;
        let current = |s: &Self| -> Result<f64> {
            s.field_value(field, &trigger.target_semantic_id)?
                .as_f64()
                .ok_or_else(|| Error::InvalidValue(format!("{} is not numeric", trigger.target_semantic_id)))
        };
        let mut records = Vec::new();
        let mut value = current(self)?;
        while value < trigger.target_value {
            if records.len() as u32 >= self.max_passes {
                return Err(Error::TargetUnreachable {
                    passes: self.max_passes,
                    target: trigger.target_value,
                });
            }
            let record = self.run(&bound, field)?;
            let observer = self.observer.read().unwrap().clone();
            if let Some(obs) = observer {
                obs.after_pass(trigger, &record);
            }
            records.push(record);
            value = current(self)?;
        }
        let outcome = TriggerOutcome {
            trigger_id: trigger.trigger_id.clone(),
            records,
            final_value: value,
        };
        self.handled
            .lock()
            .unwrap()
            .insert(trigger.trigger_id.clone(), outcome.clone());
        Ok(outcome)
    }
}

/// `op` is either a `submodel/operation` path or an operation semantic id.
fn resolve_operation(descriptor: &ShellDescriptor, op: &str) -> Result<ElementPath> {
    if op.contains(':') {
        let id: SemanticId = op.parse()?;
        descriptor
            .resolve(&id)
            .into_iter()
            .find(|p| matches!(descriptor.element(p), Some(crate::twin::ElementSignature::Operation { .. })))
            .ok_or(Error::UnresolvableSemanticId(id))
    } else {
        let path = ElementPath::parse(op)?;
        descriptor
            .element(&path)
            .map(|_| path.clone())
            .ok_or_else(|| Error::PathNotFound(op.to_owned()))
    }
}
