//! Longitudinal driving world: towns, traffic, signals, the rule-based
//! expert and the bird-eye renderer.

mod episode;
mod expert;
mod render;
mod town;
mod world;

use thiserror::Error;

pub use episode::{run_episode, run_expert_episode, EpisodeLog, EpisodeMeta, Factors, TickRecord};
pub use expert::{expert_target_speed, rule_target_speed};
pub use render::{
    agent_region_mask, render, render_frame, CarBox, Frame, LightMark, Observation, CAR_INTENSITY, EGO_INTENSITY,
    GREEN_INTENSITY, NUISANCE_INTENSITY, RED_INTENSITY, ROAD_INTENSITY,
};
pub use town::{LightCycle, RenderConfig, SimParams, TaskSpec, TownConfig};
pub use world::{
    init_world, intervals_overlap, step, Behavior, ControlCommand, Ego, Nuisance, Side, StepEvents, StopPhase, Vehicle,
    WorldState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid town config: {0}")]
    InvalidConfig(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("expert collided (seed {seed}, tick {tick}); simulator bug")]
    ExpertCollision { seed: u64, tick: u64 },
    #[error("episode log format: {0}")]
    Format(String),
    #[error("policy failure: {0}")]
    Policy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
