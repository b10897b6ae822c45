use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::seeds::derive_seed;
use crate::simworld::{TaskSpec, TownConfig};

pub const DEFAULT_TIMEOUT: f64 = 120.0;

/// `n` navigation tasks in `town`, each 250–300 m long with its own world seed.
pub fn task_suite(town: &TownConfig, n: usize, seed: u64) -> Vec<TaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("tasks/{}", town.town_id)));
    (0..n)
        .map(|i| {
            let length = rng.random_range(250.0..300.0);
            let start_s = rng.random_range(10.0..(town.route_length - length - 20.0).max(10.5));
            TaskSpec {
                town: town.clone(),
                start_s,
                goal_s: start_s + length,
                timeout: DEFAULT_TIMEOUT,
                seed: derive_seed(seed, &format!("task/{}/{i}", town.town_id)),
            }
        })
        .collect()
}

/// The same task replayed with a trial-specific world seed.
pub fn trial_task(task: &TaskSpec, trial: usize) -> TaskSpec {
    TaskSpec { seed: derive_seed(task.seed, &format!("trial/{trial}")), ..task.clone() }
}
