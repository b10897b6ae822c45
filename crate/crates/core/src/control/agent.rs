use std::collections::VecDeque;

use crate::perception::{encode, VaeWeights};
use crate::simworld::{render, ControlCommand, WorldState};
use crate::speedpred::{predict_speed, PredictorWeights, SpeedError, WINDOW};

use super::{longitudinal_control, speed_error, ControllerGains};

/// The newest encoded frames, oldest first. The first push fills every slot
/// so a fresh episode has full windows from its first tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatentHistory {
    frames: VecDeque<Vec<f64>>,
}

impl LatentHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, code: Vec<f64>) {
        if self.frames.is_empty() {
            for _ in 1..WINDOW {
                self.frames.push_back(code.clone());
            }
        }
        self.frames.push_back(code);
        while self.frames.len() > WINDOW {
            self.frames.pop_front();
        }
    }

    /// Windows of the given coordinates, oldest value first.
    pub fn windows(&self, inputs: &[usize]) -> Vec<[f64; WINDOW]> {
        assert_eq!(self.frames.len(), WINDOW, "history not primed");
        inputs.iter().map(|&i| std::array::from_fn(|l| self.frames[l][i])).collect()
    }
}

/// Maps windows of latent coordinates to a desired speed.
pub trait SpeedPolicy {
    fn inputs(&self) -> &[usize];
    fn predict(&self, windows: &[[f64; WINDOW]]) -> Result<f64, SpeedError>;
}

impl SpeedPolicy for PredictorWeights {
    fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    fn predict(&self, windows: &[[f64; WINDOW]]) -> Result<f64, SpeedError> {
        predict_speed(self, windows)
    }
}

/// One control step of the learned driver: render, encode, update the
/// history, predict the speed and track it. Returns the predicted speed and
/// the command.
pub fn drive_tick<P: SpeedPolicy + ?Sized>(
    world: &WorldState,
    vae: &VaeWeights,
    policy: &P,
    history: &mut LatentHistory,
    gains: &ControllerGains,
) -> Result<(f64, ControlCommand), SpeedError> {
    history.push(encode(vae, &render(world)));
    let predicted = policy.predict(&history.windows(policy.inputs()))?;
    let cmd = longitudinal_control(speed_error(predicted, world.ego.v), gains);
    Ok((predicted, cmd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::VaeConfig;
    use crate::simworld::{init_world, step, TaskSpec, TownConfig};

    struct Fixed<F: Fn() -> f64>(Vec<usize>, F);

    impl<F: Fn() -> f64> SpeedPolicy for Fixed<F> {
        fn inputs(&self) -> &[usize] {
            &self.0
        }
        fn predict(&self, _: &[[f64; WINDOW]]) -> Result<f64, SpeedError> {
            Ok((self.1)())
        }
    }

    fn small_vae() -> VaeWeights {
        VaeWeights::init(&VaeConfig { hidden: vec![16], latent_dim: 4, ..VaeConfig::default() }).unwrap()
    }

    fn world() -> WorldState {
        init_world(&TaskSpec { town: TownConfig::town_a(), start_s: 30.0, goal_s: 280.0, timeout: 60.0, seed: 2 })
            .unwrap()
    }

    #[test]
    fn cold_start_repeats_first_frame() {
        let mut h = LatentHistory::new();
        h.push(vec![1.0, 2.0]);
        assert_eq!(h.len(), WINDOW);
        assert_eq!(h.windows(&[1]), vec![[2.0, 2.0, 2.0]]);
        h.push(vec![3.0, 4.0]);
        h.push(vec![5.0, 6.0]);
        h.push(vec![7.0, 8.0]);
        assert_eq!(h.windows(&[0, 1]), vec![[3.0, 5.0, 7.0], [4.0, 6.0, 8.0]]);
    }

    #[test]
    fn matching_current_speed_gives_idle_command() {
        let vae = small_vae();
        let mut w = world();
        w.ego.v = 4.2;
        let v = w.ego.v;
        let policy = Fixed(vec![0, 2], move || v);
        let mut h = LatentHistory::new();
        for _ in 0..5 {
            let (_, cmd) = drive_tick(&w, &vae, &policy, &mut h, &ControllerGains::default()).unwrap();
            assert_eq!(cmd, ControlCommand { throttle: 0.0, brake: 0.0 });
        }
    }

    #[test]
    fn v_max_from_rest_saturates_throttle() {
        let vae = small_vae();
        let mut w = world();
        w.ego.v = 0.0;
        let policy = Fixed(vec![1], || 12.0);
        let mut h = LatentHistory::new();
        let (_, cmd) = drive_tick(&w, &vae, &policy, &mut h, &ControllerGains::default()).unwrap();
        assert_eq!(cmd, ControlCommand { throttle: 1.0, brake: 0.0 });
    }

    #[test]
    fn deterministic_given_state() {
        let vae = small_vae();
        let pred =
            crate::speedpred::PredictorWeights::init(&crate::speedpred::PredictorConfig::cim(), vec![0, 3]).unwrap();
        let mut w = world();
        let (mut h1, mut h2) = (LatentHistory::new(), LatentHistory::new());
        for _ in 0..20 {
            let a = drive_tick(&w, &vae, &pred, &mut h1, &ControllerGains::default()).unwrap();
            let b = drive_tick(&w, &vae, &pred, &mut h2, &ControllerGains::default()).unwrap();
            assert_eq!(a, b);
            w = step(&w, a.1).0;
        }
        assert_eq!(h1, h2);
    }
}
