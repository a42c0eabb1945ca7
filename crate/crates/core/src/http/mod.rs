//! JSON-over-HTTP transport: one server that mounts whichever components a
//! process runs, and typed clients for each of them.

mod client;
mod server;

pub use client::{HttpTwinClient, HubClient, JsonClient, MediatorClient, OrchestratorClient};
pub use server::{ApiServer, Services};
