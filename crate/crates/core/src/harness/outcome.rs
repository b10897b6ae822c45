use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::simworld::EpisodeLog;

/// Fraction of the cruise speed below which the ego counts as stalled.
pub const STALL_FRACTION: f64 = 0.05;
/// Seconds of continuous stall before the timeout that make an inertia failure.
pub const INERTIA_WINDOW_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Success,
    Collision,
    Inertia,
    OtherTimeout,
}

/// Collision first, then inertia (stalled up to the timeout), then arrival.
pub fn classify_outcome(log: &EpisodeLog, v_eps: f64, inertia_ticks: usize) -> Label {
    if log.records.iter().any(|r| r.events.collided) {
        return Label::Collision;
    }
    let last = log.final_events();
    if last.timed_out {
        let stalled = log.records.iter().rev().take_while(|r| r.ego_v < v_eps).count();
        if stalled >= inertia_ticks {
            return Label::Inertia;
        }
    }
    if last.arrived {
        Label::Success
    } else {
        Label::OtherTimeout
    }
}

/// Label with the default stall threshold and window for the log's town.
pub fn classify_default(log: &EpisodeLog) -> Label {
    let v_eps = STALL_FRACTION * log.town.cruise_speed;
    let ticks = (INERTIA_WINDOW_S / log.meta.dt).round() as usize;
    classify_outcome(log, v_eps, ticks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: usize,
    pub trial: usize,
    pub label: Label,
    pub ticks: usize,
    pub final_s: f64,
    /// The expert had to stop behind a lead car on this task and trial.
    pub lead_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub runs: usize,
    pub inertia_rate: f64,
    pub collision_rate: f64,
    pub error_rate: f64,
    pub success_rate: f64,
    pub other_timeout_rate: f64,
}

impl Rates {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut counts = [0usize; 4];
        for l in labels {
            counts[*l as usize] += 1;
        }
        let runs: usize = counts.iter().sum();
        let pct = |c: usize| if runs == 0 { 0.0 } else { 100.0 * c as f64 / runs as f64 };
        let inertia_rate = pct(counts[Label::Inertia as usize]);
        let collision_rate = pct(counts[Label::Collision as usize]);
        Rates {
            runs,
            inertia_rate,
            collision_rate,
            error_rate: inertia_rate + collision_rate,
            success_rate: pct(counts[Label::Success as usize]),
            other_timeout_rate: pct(counts[Label::OtherTimeout as usize]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub town: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub tasks: usize,
    pub trials: usize,
    pub overall: Rates,
    /// Rates restricted to runs where the expert stopped behind a lead car.
    pub lead_stop: Rates,
    pub outcomes: Vec<TaskOutcome>,
}

impl MetricsReport {
    pub fn new(
        variant: &str,
        town: &str,
        seed: u64,
        config_fingerprint: &str,
        tasks: usize,
        trials: usize,
        outcomes: Vec<TaskOutcome>,
    ) -> Self {
        let overall = Rates::from_labels(outcomes.iter().map(|o| &o.label));
        let lead_stop = Rates::from_labels(outcomes.iter().filter(|o| o.lead_stop).map(|o| &o.label));
        Self {
            variant: variant.into(),
            town: town.into(),
            seed,
            config_fingerprint: config_fingerprint.into(),
            tasks,
            trials,
            overall,
            lead_stop,
            outcomes,
        }
    }

    pub fn inertia_rate(&self) -> f64 {
        self.overall.inertia_rate
    }

    pub fn collision_rate(&self) -> f64 {
        self.overall.collision_rate
    }

    pub fn error_rate(&self) -> f64 {
        self.overall.error_rate
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Plain-text table, one row per report.
pub fn metrics_table(reports: &[&MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>10} {:>10} {:>8} {:>10} {:>14}",
        "variant", "runs", "collision%", "inertia%", "error%", "success%", "lead-stop coll%"
    );
    for r in reports {
        let o = &r.overall;
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10.1} {:>10.1} {:>8.1} {:>10.1} {:>14.1}",
            r.variant,
            o.runs,
            o.collision_rate,
            o.inertia_rate,
            o.error_rate,
            o.success_rate,
            r.lead_stop.collision_rate
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{init_world, ControlCommand, StepEvents, TaskSpec, TownConfig};

    fn log_from(speeds: &[f64], last: StepEvents, collide_at: Option<usize>) -> EpisodeLog {
        let task = TaskSpec { town: TownConfig::town_a(), start_s: 20.0, goal_s: 270.0, timeout: 120.0, seed: 1 };
        let mut world = init_world(&task).unwrap();
        let mut log = EpisodeLog::new(&task, &world, "test");
        for (i, &v) in speeds.iter().enumerate() {
            world.ego.v = v;
            let mut ev = if i + 1 == speeds.len() { last } else { StepEvents::default() };
            if collide_at == Some(i) {
                ev.collided = true;
            }
            log.push(&world, v, ControlCommand::default(), ev);
            world.tick += 1;
        }
        log
    }

    const TIMED_OUT: StepEvents = StepEvents { collided: false, arrived: false, timed_out: true };
    const ARRIVED: StepEvents = StepEvents { collided: false, arrived: true, timed_out: false };

    #[test]
    fn stalled_to_timeout_is_inertia() {
        assert_eq!(classify_default(&log_from(&[0.0; 1200], TIMED_OUT, None)), Label::Inertia);
    }

    #[test]
    fn long_stop_then_arrival_is_success() {
        let mut v = vec![0.0; 140];
        v.extend([5.0; 20]);
        assert_eq!(classify_default(&log_from(&v, ARRIVED, None)), Label::Success);
    }

    #[test]
    fn collision_beats_stall() {
        let log = log_from(&[0.0; 400], TIMED_OUT, Some(40));
        assert_eq!(classify_default(&log), Label::Collision);
    }

    #[test]
    fn short_stall_before_timeout_is_other() {
        let mut v = vec![5.0; 300];
        v.extend([0.0; 149]);
        assert_eq!(classify_default(&log_from(&v, TIMED_OUT, None)), Label::OtherTimeout);
        v.push(0.0);
        assert_eq!(classify_default(&log_from(&v, TIMED_OUT, None)), Label::Inertia);
    }

    #[test]
    fn recovered_stall_is_not_inertia() {
        let mut v = vec![0.0; 300];
        v.extend([3.0; 10]);
        assert_eq!(classify_default(&log_from(&v, TIMED_OUT, None)), Label::OtherTimeout);
    }

    #[test]
    fn rates_add_up() {
        let labels = [Label::Success, Label::Collision, Label::Inertia, Label::Inertia, Label::OtherTimeout];
        let r = Rates::from_labels(labels.iter());
        assert_eq!(r.runs, 5);
        assert_eq!(r.error_rate, r.inertia_rate + r.collision_rate);
        assert!((r.inertia_rate - 40.0).abs() < 1e-12);
        let total = r.success_rate + r.collision_rate + r.inertia_rate + r.other_timeout_rate;
        assert!((total - 100.0).abs() < 1e-9);
    }
}
