//! Twin metamodel, reflective access API and the adapter framework that
//! wraps vendor-native systems as standardized twins.

mod access;
pub mod adapter;
mod descriptor;
pub mod native;
mod shell;
mod value;

pub use access::{LocalTwin, OperationHandler, TwinAccess, TwinObserver, DEFAULT_INVOKE_TIMEOUT};
pub use adapter::{AdaptedTwin, AdapterSpec, FieldMapping, NativeCall, OperationMapping, wrap_native_system};
pub use descriptor::{ElementSignature, ShellDescriptor, SubmodelSignature};
pub use native::{NativeError, NativeNetwork, NativeRequest, NativeResponse, NativeService};
pub use shell::{
    Args, ElementPath, InboxEntry, Operation, Parameter, Property, Submodel, SubmodelElement, TwinKind,
    TwinShell, INBOX_SUBMODEL,
};
pub use value::{Datatype, Sample, SemanticId, Timestamp, TwinId, TypedValue};
