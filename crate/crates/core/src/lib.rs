//! Action-aware zero-shot navigation harness: scenes and planners, episode
//! sampling, instruction decomposition, navigators, rewards and metrics.

pub mod episode;
pub mod fixtures;
pub mod geometry;
pub mod llm;
pub mod metrics;
pub mod nav;
pub mod par;
pub mod parser;
pub mod planner;
pub mod plot;
pub mod reward;
pub mod scene;

pub use episode::{ActionKind, Episode};
pub use geometry::{GridPoint, Pose, WorldPoint};
pub use nav::{execute_instruction, ExecutorConfig, PolicyKind, Trajectory};
pub use parser::SubTask;
pub use scene::Scene;
