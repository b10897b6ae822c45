//! Longitudinal controller and the reference route plan.
//!
//! The controller turns a desired speed into throttle or brake with a
//! proportional accelerator signal `U = clamp(K_p * |e|, 0, 1)`; throttle is
//! applied when the speed error is positive and brake otherwise.

use serde::{Deserialize, Serialize};

use crate::simworld::{ControlCommand, TaskSpec};

mod agent;

pub use agent::{drive_tick, LatentHistory, SpeedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_p: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { k_p: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub s: f64,
    /// Offset from the lane centre; always zero on the single-lane route.
    pub lateral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePlan {
    pub waypoints: Vec<Waypoint>,
}

/// Waypoints every metre along the lane centre from start to goal, always
/// ending exactly at the goal.
pub fn plan_reference(task: &TaskSpec) -> ReferencePlan {
    let mut waypoints = Vec::new();
    let mut s = task.start_s;
    while s < task.goal_s - 1e-9 {
        waypoints.push(Waypoint { s, lateral: 0.0 });
        s += 1.0;
    }
    waypoints.push(Waypoint { s: task.goal_s, lateral: 0.0 });
    ReferencePlan { waypoints }
}

/// Signed forward speed error: predicted minus current.
pub fn speed_error(predicted: f64, current: f64) -> f64 {
    predicted - current
}

pub fn longitudinal_control(error: f64, gains: &ControllerGains) -> ControlCommand {
    let u = (gains.k_p * error.abs()).clamp(0.0, 1.0);
    if error > 0.0 {
        ControlCommand { throttle: u, brake: 0.0 }
    } else {
        ControlCommand { throttle: 0.0, brake: u }
    }
}
