use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::outcome::{classify_default, MetricsReport, TaskOutcome, STALL_FRACTION};
use super::tasks::trial_task;
use crate::control::{drive_tick, longitudinal_control, speed_error, ControllerGains, LatentHistory};
use crate::perception::VaeWeights;
use crate::simworld::{run_episode, run_expert_episode, EpisodeLog, SimError, TaskSpec};
use crate::speedpred::PredictorWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Constant cruise speed along the reference plan.
    Cs,
    Cim,
    CimMlp,
    CimEntangled,
    /// The rule-based expert itself, as a sanity reference.
    Expert,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cs => "cs",
            Variant::Cim => "cim",
            Variant::CimMlp => "cim_mlp",
            Variant::CimEntangled => "cim_entangled",
            Variant::Expert => "expert",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Variant::Cs, Variant::Cim, Variant::CimMlp, Variant::CimEntangled, Variant::Expert]
            .into_iter()
            .find(|v| v.name() == s.replace('-', "_"))
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Variant::Cim | Variant::CimMlp | Variant::CimEntangled)
    }
}

/// Everything a driver needs at test time.
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Cs,
    Expert,
    Learned { vae: &'a VaeWeights, predictor: &'a PredictorWeights },
}

/// Roll one task out under `driver`.
pub fn run_driver(task: &TaskSpec, driver: Driver, gains: &ControllerGains) -> Result<EpisodeLog, SimError> {
    match driver {
        Driver::Expert => run_expert_episode(task),
        Driver::Cs => {
            let cruise = task.town.cruise_speed;
            run_episode(task, "cs", |w| Ok((cruise, longitudinal_control(speed_error(cruise, w.ego.v), gains))))
        }
        Driver::Learned { vae, predictor } => {
            let mut history = LatentHistory::new();
            run_episode(task, "learned", |w| {
                drive_tick(w, vae, predictor, &mut history, gains).map_err(|e| SimError::Policy(e.to_string()))
            })
        }
    }
}

/// Whether the expert, on this exact task and world seed, comes to a stop
/// close behind another car.
pub fn expert_stops_behind_lead(task: &TaskSpec) -> Result<bool, SimError> {
    let log = run_expert_episode(task)?;
    let p = &task.town.params;
    let v_eps = STALL_FRACTION * task.town.cruise_speed;
    Ok(log
        .records
        .iter()
        .any(|r| r.ego_v < v_eps && r.factors.gap_to_lead.is_some_and(|g| g <= p.d_min + p.car_length)))
}

/// Run every task × trial under `driver` and aggregate. Runs execute in
/// parallel; results are folded in task order.
pub fn evaluate(
    variant: Variant,
    driver: Driver,
    tasks: &[TaskSpec],
    trials: usize,
    seed: u64,
    gains: &ControllerGains,
    config_fingerprint: &str,
) -> Result<MetricsReport, SimError> {
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|i| (0..trials).map(move |t| (i, t))).collect();
    let outcomes: Vec<TaskOutcome> = jobs
        .par_iter()
        .map(|&(i, trial)| {
            let task = trial_task(&tasks[i], trial);
            let log = run_driver(&task, driver, gains)?;
            Ok(TaskOutcome {
                task: i,
                trial,
                label: classify_default(&log),
                ticks: log.len(),
                final_s: log.records.last().map_or(task.start_s, |r| r.ego_s),
                lead_stop: expert_stops_behind_lead(&task)?,
            })
        })
        .collect::<Result<_, SimError>>()?;
    let town = tasks.first().map_or_else(String::new, |t| t.town.town_id.clone());
    Ok(MetricsReport::new(variant.name(), &town, seed, config_fingerprint, tasks.len(), trials, outcomes))
}
