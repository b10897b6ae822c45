use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, Driver, Variant};
use super::outcome::MetricsReport;
use super::pipeline::{HarnessError, RunConfig};
use super::seeds::derive_seed;
use super::tasks::task_suite;
use crate::perception::VaeWeights;
use crate::simworld::{run_expert_episode, EpisodeLog, TaskSpec};
use crate::speedpred::{evaluate_mse, finetune, make_dataset, InputSelection, PredictorWeights, SpeedSample};

/// Target-town expert episodes drawn per seed; the adaptation samples are a
/// random subset of their windows and the rest is held out.
pub const FEWSHOT_EPISODES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedRun {
    pub mse_before: f64,
    pub mse_after: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewshotSeed {
    pub index: usize,
    pub seed: u64,
    pub samples: usize,
    pub held_out: usize,
    pub cim: AdaptedRun,
    pub cim_mlp: AdaptedRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewshotReport {
    pub town: String,
    pub n_samples: usize,
    pub before_cim: MetricsReport,
    pub before_cim_mlp: MetricsReport,
    pub seeds: Vec<FewshotSeed>,
    pub median_error_cim: f64,
    pub median_error_cim_mlp: f64,
    pub median_mse_cim: f64,
    pub median_mse_cim_mlp: f64,
}

impl FewshotReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "few-shot adaptation to {} with {} samples", self.town, self.n_samples);
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>12} {:>10} {:>10}",
            "seed", "cim error%", "mlp error%", "cim mse", "mlp mse"
        );
        let _ = writeln!(
            out,
            "{:<10} {:>12.1} {:>12.1} {:>10} {:>10}",
            "before",
            self.before_cim.error_rate(),
            self.before_cim_mlp.error_rate(),
            "-",
            "-"
        );
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{:<10} {:>12.1} {:>12.1} {:>10.3} {:>10.3}",
                s.index,
                s.cim.report.error_rate(),
                s.cim_mlp.report.error_rate(),
                s.cim.mse_after,
                s.cim_mlp.mse_after
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>12.1} {:>12.1} {:>10.3} {:>10.3}",
            "median", self.median_error_cim, self.median_error_cim_mlp, self.median_mse_cim, self.median_mse_cim_mlp
        );
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// The evaluation suite of the target town, shared by every seed so that
/// before and after numbers are paired.
pub fn target_tasks(config: &RunConfig) -> Result<Vec<TaskSpec>, HarnessError> {
    let town = config.town(&config.target_town)?;
    Ok(task_suite(&town, config.eval_tasks, derive_seed(config.seed, "fewshot/eval")))
}

fn split_samples(all: Vec<SpeedSample>, order: &[usize], n: usize) -> (Vec<SpeedSample>, Vec<SpeedSample>) {
    let mut slots: Vec<Option<SpeedSample>> = all.into_iter().map(Some).collect();
    let mut pick = |ix: &[usize]| ix.iter().filter_map(|&i| slots[i].take()).collect::<Vec<_>>();
    let adapt = pick(&order[..n.min(order.len())]);
    let rest = pick(&order[n.min(order.len())..]);
    (adapt, rest)
}

/// Finetune both Town-A predictors on `n_samples` target-town windows for
/// each of `seeds` draws and evaluate them on the target suite.
pub fn fewshot_experiment(
    config: &RunConfig,
    vae: &VaeWeights,
    cim: &PredictorWeights,
    cim_mlp: &PredictorWeights,
    n_samples: usize,
    seeds: usize,
) -> Result<FewshotReport, HarnessError> {
    let town = config.town(&config.target_town)?;
    let tasks = target_tasks(config)?;
    let fp = config.fingerprint();
    let run = |variant: Variant, p: &PredictorWeights| {
        evaluate(variant, Driver::Learned { vae, predictor: p }, &tasks, config.trials, config.seed, &config.gains, &fp)
    };
    let before_cim = run(Variant::Cim, cim)?;
    let before_cim_mlp = run(Variant::CimMlp, cim_mlp)?;

    let mut rows = Vec::with_capacity(seeds);
    for index in 0..seeds {
        let seed = derive_seed(config.seed, &format!("fewshot/{index}"));
        let episodes = task_suite(&town, FEWSHOT_EPISODES, seed);
        let logs: Vec<EpisodeLog> = episodes.par_iter().map(run_expert_episode).collect::<Result<_, _>>()?;
        let pool_cim = make_dataset(&logs, vae, &InputSelection::Indices(&cim.inputs))?;
        let pool_mlp = make_dataset(&logs, vae, &InputSelection::Indices(&cim_mlp.inputs))?;
        let mut order: Vec<usize> = (0..pool_cim.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "draw")));
        let adapt = |p: &PredictorWeights, pool: Vec<SpeedSample>, variant: Variant| -> Result<_, HarnessError> {
            let (train, held) = split_samples(pool, &order, n_samples);
            let tuned = finetune(p, &train, derive_seed(seed, variant.name()))?;
            let mse_before = evaluate_mse(p, &held)?;
            let mse_after = evaluate_mse(&tuned, &held)?;
            Ok((AdaptedRun { mse_before, mse_after, report: run(variant, &tuned)? }, train.len(), held.len()))
        };
        let (cim_run, samples, held_out) = adapt(cim, pool_cim, Variant::Cim)?;
        let (mlp_run, _, _) = adapt(cim_mlp, pool_mlp, Variant::CimMlp)?;
        rows.push(FewshotSeed { index, seed, samples, held_out, cim: cim_run, cim_mlp: mlp_run });
    }

    let med = |f: &dyn Fn(&FewshotSeed) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(FewshotReport {
        town: town.town_id,
        n_samples,
        median_error_cim: med(&|s| s.cim.report.error_rate()),
        median_error_cim_mlp: med(&|s| s.cim_mlp.report.error_rate()),
        median_mse_cim: med(&|s| s.cim.mse_after),
        median_mse_cim_mlp: med(&|s| s.cim_mlp.mse_after),
        before_cim,
        before_cim_mlp,
        seeds: rows,
    })
}
