use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use super::descriptor::ShellDescriptor;
use super::shell::{Args, ElementPath, InboxEntry, Property, TwinShell};
use super::value::{SemanticId, Timestamp, TwinId, TypedValue};
use crate::error::{Error, Result};

/// Default bound on a synchronous operation call.
pub const DEFAULT_INVOKE_TIMEOUT: Duration = Duration::from_secs(5);

/// The reflective access API every twin exposes, wherever it lives.
pub trait TwinAccess: Send + Sync {
    fn twin_id(&self) -> TwinId;
    fn describe(&self) -> Result<ShellDescriptor>;
    fn get_property(&self, path: &ElementPath) -> Result<Property>;
    fn set_property(&self, path: &ElementPath, value: TypedValue, at: Timestamp) -> Result<bool>;
    fn invoke_operation(&self, path: &ElementPath, args: &Args) -> Result<Args>;
    fn inbox_put(&self, entry: InboxEntry) -> Result<bool>;

    fn resolve_by_semantic_id(&self, id: &SemanticId) -> Result<Vec<ElementPath>> {
        Ok(self.describe()?.resolve(id))
    }
}

/// Implementation bound to the operations of a [`LocalTwin`].
pub trait OperationHandler: Send + Sync {
    fn invoke(&self, twin: &LocalTwin, operation: &ElementPath, args: &Args) -> Result<Args>;
}

/// Notified after a local twin changes. Called without any twin lock held.
pub trait TwinObserver: Send + Sync {
    fn property_written(&self, twin: &TwinId, path: &ElementPath, property: &Property);
    fn structure_changed(&self, _twin: &TwinShell) {}
}

/// An in-process twin: a shell behind a per-shell reader/writer lock.
pub struct LocalTwin {
    id: TwinId,
    shell: RwLock<TwinShell>,
    endpoint: RwLock<String>,
    handler: Option<Arc<dyn OperationHandler>>,
    observers: RwLock<Vec<Arc<dyn TwinObserver>>>,
    online: AtomicBool,
}

impl std::fmt::Debug for LocalTwin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalTwin").field("id", &self.id).finish_non_exhaustive()
    }
}

impl LocalTwin {
    pub fn new(shell: TwinShell) -> Self {
        Self {
            id: shell.id.clone(),
            endpoint: RwLock::new(format!("local://{}", shell.id)),
            shell: RwLock::new(shell),
            handler: None,
            observers: RwLock::new(Vec::new()),
            online: AtomicBool::new(true),
        }
    }

    pub fn with_handler(mut self, handler: Arc<dyn OperationHandler>) -> Self {
        self.handler = Some(handler);
        self
    }

    pub fn set_endpoint(&self, endpoint: impl Into<String>) {
        *self.endpoint.write().unwrap() = endpoint.into();
    }

    pub fn endpoint(&self) -> String {
        self.endpoint.read().unwrap().clone()
    }

    pub fn add_observer(&self, observer: Arc<dyn TwinObserver>) {
        self.observers.write().unwrap().push(observer);
    }

    /// Takes the twin off-line: every access fails with `TwinUnavailable`.
    pub fn stop(&self) {
        self.online.store(false, Ordering::SeqCst);
    }

    pub fn start(&self) {
        self.online.store(true, Ordering::SeqCst);
    }

    pub fn is_online(&self) -> bool {
        self.online.load(Ordering::SeqCst)
    }

    fn ensure_online(&self) -> Result<()> {
        if self.is_online() {
            Ok(())
        } else {
            Err(Error::TwinUnavailable(self.id.clone()))
        }
    }

    /// Copy of the full shell including values.
    pub fn snapshot(&self) -> TwinShell {
        self.shell.read().unwrap().clone()
    }

    /// Mutates the shell under the write lock, bypassing the online check.
    /// Used by the hosting side (field-twin engine, persistence).
    pub fn with_shell_mut<R>(&self, f: impl FnOnce(&mut TwinShell) -> R) -> R {
        let result = f(&mut self.shell.write().unwrap());
        let shell = self.snapshot();
        for obs in self.observers.read().unwrap().iter() {
            obs.structure_changed(&shell);
        }
        result
    }

    /// Read-modify-write of one property under the shell's write lock.
    /// `f` sees the current value and returns the replacement; the
    /// currentness policy applies to `at`.
    pub fn update_property(
        &self,
        path: &ElementPath,
        at: Timestamp,
        f: impl FnOnce(Option<&TypedValue>) -> Result<TypedValue>,
    ) -> Result<bool> {
        self.ensure_online()?;
        let accepted = {
            let mut shell = self.shell.write().unwrap();
            let next = f(shell.get_property(path)?.value.as_ref())?;
            shell.set_property(path, next, at)?
        };
        if accepted {
            self.notify_write(path);
        }
        Ok(accepted)
    }

    fn notify_write(&self, path: &ElementPath) {
        let observers = self.observers.read().unwrap();
        if observers.is_empty() {
            return;
        }
        let prop = match self.shell.read().unwrap().get_property(path) {
            Ok(p) => p.clone(),
            Err(_) => return,
        };
        for obs in observers.iter() {
            obs.property_written(&self.id, path, &prop);
        }
    }
}

impl TwinAccess for LocalTwin {
    fn twin_id(&self) -> TwinId {
        self.id.clone()
    }

    fn describe(&self) -> Result<ShellDescriptor> {
        self.ensure_online()?;
        let shell = self.shell.read().unwrap();
        Ok(ShellDescriptor::of(&shell, self.endpoint()))
    }

    fn get_property(&self, path: &ElementPath) -> Result<Property> {
        self.ensure_online()?;
        self.shell.read().unwrap().get_property(path).cloned()
    }

    fn set_property(&self, path: &ElementPath, value: TypedValue, at: Timestamp) -> Result<bool> {
        self.ensure_online()?;
        let accepted = self.shell.write().unwrap().set_property(path, value, at)?;
        if accepted {
            self.notify_write(path);
        }
        Ok(accepted)
    }

    fn invoke_operation(&self, path: &ElementPath, args: &Args) -> Result<Args> {
        self.ensure_online()?;
        let op = self.shell.read().unwrap().get_operation(path)?.clone();
        op.check_args(args, false)?;
        let handler = self
            .handler
            .as_ref()
            .ok_or_else(|| Error::DownstreamUnavailable(format!("no implementation bound for {path}")))?;
        let outputs = handler.invoke(self, path, args)?;
        op.check_args(&outputs, true)?;
        Ok(outputs)
    }

    fn inbox_put(&self, entry: InboxEntry) -> Result<bool> {
        self.ensure_online()?;
        let (accepted, created) = {
            let mut shell = self.shell.write().unwrap();
            let before = shell.submodels.iter().map(|s| s.elements.len()).sum::<usize>();
            let accepted = shell.inbox_put(entry.clone())?;
            let after = shell.submodels.iter().map(|s| s.elements.len()).sum::<usize>();
            (accepted, after != before)
        };
        if created {
            let shell = self.snapshot();
            for obs in self.observers.read().unwrap().iter() {
                obs.structure_changed(&shell);
            }
        }
        if accepted {
            self.notify_write(&ElementPath::new(super::shell::INBOX_SUBMODEL, entry.semantic_id.as_str()));
        }
        Ok(accepted)
    }
}
