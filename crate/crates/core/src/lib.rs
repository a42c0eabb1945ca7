//! Digital twins for agricultural data spaces.
//!
//! The crate provides the twin metamodel and adapter framework ([`twin`]), a
//! shared concept vocabulary ([`vocabulary`]), a hub hosting digital field
//! twins ([`hub`], [`field`]), a semantic data-exchange mediator
//! ([`mediator`]), a recipe orchestrator ([`orchestrator`]), an HTTP transport
//! ([`http`]) and a deterministic farm simulation ([`sim`]) with scenario
//! harness.

pub mod cli;
pub mod clock;
pub mod directory;
pub mod error;
pub mod field;
pub mod geo;
pub mod http;
pub mod hub;
pub mod mediator;
pub mod orchestrator;
pub mod sim;
pub mod twin;
pub mod vocabulary;

pub use error::{Error, Result};
