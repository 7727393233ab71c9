//! Runs complete lessons against an in-process relay: a behavior node, one
//! scripted client per participant and a recorder, all connected over TCP
//! and stepped by a virtual clock. Writes the session artifacts and checks
//! end-to-end invariants; [`replay`] recomputes the metrics from the logs.

mod nodes;
mod replay;
mod run;
pub mod scenario;

use std::path::PathBuf;

use mirrorboard_client::ClientError;
use mirrorboard_core::board::BoardError;
use mirrorboard_core::gaze::GazeError;
use mirrorboard_core::session::SessionError;
use mirrorboard_server::ServerError;
use thiserror::Error;

pub use replay::{replay, ReplayOutcome};
pub use run::{run_scenario, Check, ClientReport, PanObservation, Report, RunOutput, ARTIFACTS};
pub use scenario::{ParticipantKind, ParticipantSpec, ScenarioConfig, Trajectories};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("relay port unavailable: {0}")]
    PortInUse(ServerError),
    #[error("lecture script: {0}")]
    ScriptParse(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("relay: {0}")]
    Relay(#[from] ServerError),
    #[error("node {node}: {source}")]
    Client {
        node: String,
        #[source]
        source: ClientError,
    },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("artifact {path}: {message}")]
    SchemaMismatch { path: PathBuf, message: String },
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("node task failed: {0}")]
    Task(String),
}

impl HarnessError {
    fn client(node: &str) -> impl FnOnce(ClientError) -> HarnessError + '_ {
        move |source| HarnessError::Client {
            node: node.to_owned(),
            source,
        }
    }
}
