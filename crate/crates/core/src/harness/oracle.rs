use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::seeds::derive_seed;
use super::tasks::task_suite;
use crate::causesel::{PanelEpisode, SeriesPanel, DEFAULT_LAG};
use crate::simworld::{run_expert_episode, EpisodeLog, SimError, TownConfig};

pub const NOISE_DIMS: usize = 6;
pub const ORACLE_GAP: usize = 0;
pub const ORACLE_LIGHT: usize = 1;
pub const ORACLE_REAR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Distances beyond this are reported as this value.
    pub cap: f64,
    /// AR(1) coefficient of the scenery noise series.
    pub noise_ar: f64,
    pub episodes: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { cap: 20.0, noise_ar: 0.0, episodes: 6 }
    }
}

/// Ground-truth factor panel of one expert log: gap to lead, distance to the
/// nearest red light, rear gap, then independent AR(1) scenery noise.
pub fn oracle_episode(log: &EpisodeLog, opts: &OracleOptions, rng: &mut ChaCha8Rng) -> PanelEpisode {
    let capped = |v: Option<f64>| v.map_or(opts.cap, |d| d.clamp(0.0, opts.cap));
    let t = log.len();
    let width = 3 + NOISE_DIMS;
    let mut latents = Array2::zeros((t, width));
    let mut noise = [0.0; NOISE_DIMS];
    for (row, rec) in log.records.iter().enumerate() {
        latents[[row, ORACLE_GAP]] = capped(rec.factors.gap_to_lead);
        latents[[row, ORACLE_LIGHT]] = capped(rec.factors.red_light_distance);
        latents[[row, ORACLE_REAR]] = capped(rec.factors.rear_gap);
        for (j, n) in noise.iter_mut().enumerate() {
            *n = opts.noise_ar * *n + rng.sample::<f64, _>(StandardNormal);
            latents[[row, 3 + j]] = *n;
        }
    }
    PanelEpisode { latents, speed: log.speeds() }
}

/// Panel from `opts.episodes` expert runs in `town`.
pub fn oracle_panel(town: &TownConfig, opts: &OracleOptions, seed: u64) -> Result<SeriesPanel, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "oracle/noise"));
    let mut episodes = Vec::with_capacity(opts.episodes);
    for task in task_suite(town, opts.episodes, derive_seed(seed, "oracle/tasks")) {
        let log = run_expert_episode(&task)?;
        episodes.push(oracle_episode(&log, opts, &mut rng));
    }
    Ok(SeriesPanel::new(episodes, DEFAULT_LAG).expect("oracle panel is well formed"))
}
