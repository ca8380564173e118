use thiserror::Error;

use crate::gridworld::{ObjectId, ReceptacleId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate scenario config: {0}")]
    DegenerateConfig(String),
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    #[error("no receptacle can host the swap pair footprints")]
    InfeasibleSwap,

    #[error("object {0} is not reachable from the agent")]
    UnreachableObject(ObjectId),
    #[error("destination for object {0} is occupied")]
    DestOccupied(ObjectId),
    #[error("object {0} is inside a closed receptacle")]
    NotAccessible(ObjectId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),

    #[error("receptacle {0} cannot be opened")]
    NotOpenable(ReceptacleId),
    #[error("agent is not adjacent to receptacle {0}")]
    NotAdjacent(ReceptacleId),

    #[error("labels must be non-empty")]
    EmptyLabel,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("prior table is degenerate: {0}")]
    DegenerateTable(String),
    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("no feasible buffer cell")]
    NoFeasibleCell,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward pass called without a cached forward pass")]
    MissingCache,

    #[error("no valid action")]
    EmptyValidSet,
    #[error("replay buffer holds {have} transitions, need {need}")]
    BufferUnderfull { have: usize, need: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing model: {0}")]
    MissingModel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
