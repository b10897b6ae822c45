use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::evaluate::{evaluate, Driver, Variant};
use super::outcome::MetricsReport;
use super::seeds::derive_seed;
use super::tasks::task_suite;
use crate::causesel::{
    select_causes_among, CauseError, CauseSet, PanelEpisode, SeriesPanel, DEFAULT_ALPHA, DEFAULT_LAG,
};
use crate::control::ControllerGains;
use crate::perception::{
    encode_batch, informative_units, stack_observations, train_vae, write_training_csv, EpochStats, PerceptionError,
    VaeConfig, VaeWeights,
};
use crate::simworld::{run_expert_episode, EpisodeLog, Observation, SimError, TownConfig};
use crate::speedpred::{make_dataset, train_predictor, InputSelection, PredictorConfig, PredictorWeights, SpeedError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown town {0:?}")]
    UnknownTown(String),
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("no latent passed the causality test\n{report}")]
    NoCauses { report: String },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Cause(#[from] CauseError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Nn(#[from] crate::nncore::NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train_town: String,
    pub target_town: String,
    /// Expert demonstrations collected in the training town.
    pub demo_tasks: usize,
    pub train_fraction: f64,
    pub eval_tasks: usize,
    pub trials: usize,
    pub variant: Variant,
    /// Every n-th demonstration frame is used to fit the β-VAE.
    pub frame_stride: usize,
    pub vae: VaeConfig,
    /// β used on the entangled path.
    pub entangled_beta: f64,
    pub cim_predictor: PredictorConfig,
    pub mlp_predictor: PredictorConfig,
    pub alpha: f64,
    pub lag: usize,
    /// Only latents that carry more signal than posterior noise are tested.
    pub screen_uninformative: bool,
    pub gains: ControllerGains,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_town: "town-a".into(),
            target_town: "town-c".into(),
            demo_tasks: 100,
            train_fraction: 0.8,
            eval_tasks: 60,
            trials: 3,
            variant: Variant::Cim,
            frame_stride: 3,
            vae: VaeConfig::default(),
            entangled_beta: 1.0,
            cim_predictor: PredictorConfig::cim(),
            mlp_predictor: PredictorConfig::cim_mlp(),
            alpha: DEFAULT_ALPHA,
            lag: DEFAULT_LAG,
            screen_uninformative: true,
            gains: ControllerGains::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 || self.demo_tasks < 2 || self.eval_tasks == 0 || self.frame_stride == 0 {
            return Err(HarnessError::Config("counts must be positive (at least two demonstrations)".into()));
        }
        if !(0.0..1.0).contains(&self.train_fraction) || self.train_fraction == 0.0 {
            return Err(HarnessError::Config("train_fraction must lie in (0, 1)".into()));
        }
        self.town(&self.train_town)?;
        self.town(&self.target_town)?;
        Ok(())
    }

    pub fn town(&self, name: &str) -> Result<TownConfig, HarnessError> {
        TownConfig::preset(name).ok_or_else(|| HarnessError::UnknownTown(name.into()))
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// β-VAE config for a variant with its derived seed.
    pub fn vae_for(&self, variant: Variant) -> VaeConfig {
        let entangled = variant == Variant::CimEntangled;
        VaeConfig {
            beta: if entangled { self.entangled_beta } else { self.vae.beta },
            seed: derive_seed(self.seed, if entangled { "vae/entangled" } else { "vae" }),
            ..self.vae.clone()
        }
    }

    pub fn predictor_for(&self, variant: Variant) -> PredictorConfig {
        let (base, label) = match variant {
            Variant::CimMlp => (&self.mlp_predictor, "predictor/mlp"),
            Variant::CimEntangled => (&self.cim_predictor, "predictor/entangled"),
            _ => (&self.cim_predictor, "predictor/cim"),
        };
        PredictorConfig { seed: derive_seed(self.seed, label), ..base.clone() }
    }
}

/// Expert logs with a recorded train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstrations {
    pub logs: Vec<EpisodeLog>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub town: String,
    pub seed: u64,
    pub task_seeds: Vec<u64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Demonstrations {
    pub fn train_logs(&self) -> Vec<EpisodeLog> {
        self.train.iter().map(|&i| self.logs[i].clone()).collect()
    }

    pub fn test_logs(&self) -> Vec<EpisodeLog> {
        self.test.iter().map(|&i| self.logs[i].clone()).collect()
    }

    pub fn manifest(&self, seed: u64) -> SplitManifest {
        SplitManifest {
            town: self.logs.first().map_or_else(String::new, |l| l.meta.town_id.clone()),
            seed,
            task_seeds: self.logs.iter().map(|l| l.meta.seed).collect(),
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

/// `n` expert episodes; the first `round(train_fraction · n)` form the
/// training split.
pub fn collect_demonstrations(
    town: &TownConfig,
    n: usize,
    seed: u64,
    train_fraction: f64,
) -> Result<Demonstrations, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("need at least one demonstration".into()));
    }
    let tasks = task_suite(town, n, derive_seed(seed, "collect"));
    let logs: Vec<EpisodeLog> = tasks.par_iter().map(run_expert_episode).collect::<Result<_, _>>()?;
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    Ok(Demonstrations { logs, train: (0..n_train).collect(), test: (n_train..n).collect() })
}

pub fn training_frames(logs: &[EpisodeLog], stride: usize) -> Vec<Observation> {
    logs.iter().flat_map(|l| (0..l.len()).step_by(stride.max(1)).map(move |t| l.observation(t))).collect()
}

/// Encoded latent series of each log, paired with its speed series.
pub fn encode_panel(logs: &[EpisodeLog], vae: &VaeWeights, lag: usize) -> Result<SeriesPanel, HarnessError> {
    let episodes = logs
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let obs: Vec<Observation> = (0..l.len()).map(|t| l.observation(t)).collect();
            PanelEpisode { latents: encode_batch(vae, stack_observations(&obs).view()), speed: l.speeds() }
        })
        .collect();
    Ok(SeriesPanel::new(episodes, lag)?)
}

/// Granger selection for `vae` over the latent series of `logs`.
pub fn select_latent_causes(
    config: &RunConfig,
    logs: &[EpisodeLog],
    vae: &VaeWeights,
) -> Result<CauseSet, HarnessError> {
    let panel = encode_panel(logs, vae, config.lag)?;
    let candidates = if config.screen_uninformative {
        let frames = training_frames(logs, 1);
        informative_units(vae, stack_observations(&frames).view())
    } else {
        (0..vae.latent_dim()).collect()
    };
    if candidates.is_empty() {
        return Err(HarnessError::NoCauses { report: "no informative latent".into() });
    }
    Ok(select_causes_among(&panel, &candidates, config.alpha)?)
}

/// Trained artifacts of one pipeline variant.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub variant: Variant,
    pub vae: VaeWeights,
    pub vae_history: Vec<EpochStats>,
    pub causes: Option<CauseSet>,
    pub predictor: PredictorWeights,
}

impl Bundle {
    pub fn driver(&self) -> Driver<'_> {
        Driver::Learned { vae: &self.vae, predictor: &self.predictor }
    }
}

pub fn train_perception(
    demos: &Demonstrations,
    config: &VaeConfig,
    stride: usize,
) -> Result<(VaeWeights, Vec<EpochStats>), HarnessError> {
    let frames = training_frames(&demos.train_logs(), stride);
    Ok(train_vae(stack_observations(&frames).view(), config)?)
}

/// Cause selection (skipped for the all-latent variant) and predictor
/// training on top of a trained perception model.
pub fn train_head(
    config: &RunConfig,
    variant: Variant,
    demos: &Demonstrations,
    vae: VaeWeights,
    vae_history: Vec<EpochStats>,
) -> Result<Bundle, HarnessError> {
    let train_logs = demos.train_logs();
    let causes = if variant == Variant::CimMlp {
        None
    } else {
        let set = select_latent_causes(config, &demos.test_logs(), &vae)?;
        if set.is_empty() {
            return Err(HarnessError::NoCauses { report: set.to_json() });
        }
        Some(set)
    };
    let selection = causes.as_ref().map_or(InputSelection::All, InputSelection::Causes);
    let samples = make_dataset(&train_logs, &vae, &selection)?;
    let inputs = selection.indices(vae.latent_dim())?;
    let (mut predictor, _) = train_predictor(&samples, inputs, &config.predictor_for(variant))?;
    if let Some(c) = &causes {
        predictor = predictor.with_causes(c);
    }
    Ok(Bundle { variant, vae, vae_history, causes, predictor })
}

/// Collect, train and return a bundle for `variant` without evaluating it.
pub fn train_variant(config: &RunConfig, variant: Variant, demos: &Demonstrations) -> Result<Bundle, HarnessError> {
    if !variant.is_learned() {
        return Err(HarnessError::Config(format!("{} has nothing to train", variant.name())));
    }
    let (vae, hist) = train_perception(demos, &config.vae_for(variant), config.frame_stride)?;
    train_head(config, variant, demos, vae, hist)
}

/// Evaluate a variant on the training town's task suite.
pub fn evaluate_variant(
    config: &RunConfig,
    variant: Variant,
    bundle: Option<&Bundle>,
    town: &TownConfig,
) -> Result<MetricsReport, HarnessError> {
    let tasks = task_suite(town, config.eval_tasks, derive_seed(config.seed, "eval"));
    let driver = match (variant, bundle) {
        (Variant::Cs, _) => Driver::Cs,
        (Variant::Expert, _) => Driver::Expert,
        (_, Some(b)) => b.driver(),
        (_, None) => return Err(HarnessError::MissingArtifact(format!("{} bundle", variant.name()))),
    };
    Ok(evaluate(variant, driver, &tasks, config.trials, config.seed, &config.gains, &config.fingerprint())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub variant: Variant,
    pub seed: u64,
    pub config_fingerprint: String,
    /// Seeds of each stage, derived from the master seed by label.
    pub derived_seeds: Vec<(String, u64)>,
    /// In dependency order.
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub bundle: Bundle,
    pub report: MetricsReport,
    pub manifest: PipelineManifest,
}

fn write_artifact(out: &Path, name: &str, file: &str, bytes: &[u8]) -> Result<ArtifactEntry, HarnessError> {
    let path = out.join(file);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, bytes)?;
    Ok(ArtifactEntry { name: name.into(), path: file.into(), sha256: hex::encode(Sha256::digest(bytes)) })
}

/// Write each log as `demonstrations/episode_NNNN.bin` plus the split
/// manifest. The entry hash covers every file.
pub fn save_demonstrations(out: &Path, demos: &Demonstrations, seed: u64) -> Result<ArtifactEntry, HarnessError> {
    fs::create_dir_all(out.join("demonstrations"))?;
    let mut digest = Vec::new();
    for (i, log) in demos.logs.iter().enumerate() {
        let mut buf = Vec::new();
        log.write_binary(&mut buf)?;
        fs::write(out.join(format!("demonstrations/episode_{i:04}.bin")), &buf)?;
        digest.extend_from_slice(&Sha256::digest(&buf));
    }
    let split = serde_json::to_vec_pretty(&demos.manifest(seed))?;
    let mut entry = write_artifact(out, "demonstrations", "demonstrations/split.json", &split)?;
    digest.extend_from_slice(&split);
    entry.sha256 = hex::encode(Sha256::digest(&digest));
    Ok(entry)
}

/// Read back what [`save_demonstrations`] wrote under `out`.
pub fn load_demonstrations(out: &Path) -> Result<Demonstrations, HarnessError> {
    let split_path = out.join("demonstrations/split.json");
    let split: SplitManifest = serde_json::from_slice(
        &fs::read(&split_path).map_err(|_| HarnessError::MissingArtifact(split_path.display().to_string()))?,
    )?;
    let logs = (0..split.task_seeds.len())
        .map(|i| {
            let f = fs::File::open(out.join(format!("demonstrations/episode_{i:04}.bin")))?;
            Ok(EpisodeLog::read_binary(std::io::BufReader::new(f))?)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(Demonstrations { logs, train: split.train, test: split.test })
}

/// Full flow for `config.variant`: collect, fit perception, select causes,
/// fit the predictor, evaluate, and write every artifact plus a manifest
/// under `out`.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<PipelineRun, HarnessError> {
    config.validate()?;
    let variant = config.variant;
    if !variant.is_learned() {
        return Err(HarnessError::Config(format!("{} is a reference variant; use evaluate", variant.name())));
    }
    let town = config.town(&config.train_town)?;
    fs::create_dir_all(out)?;
    let demos = collect_demonstrations(&town, config.demo_tasks, config.seed, config.train_fraction)?;
    let mut artifacts = vec![save_demonstrations(out, &demos, config.seed)?];

    let bundle = {
        let b = train_variant(config, variant, &demos)?;
        let mut buf = Vec::new();
        b.vae.to_file().write_to(&mut buf)?;
        artifacts.push(write_artifact(out, "perception", "perception.cimw", &buf)?);
        let mut csv = Vec::new();
        write_training_csv(&mut csv, &b.vae_history)?;
        fs::write(out.join("perception_training.csv"), csv)?;

        let panel = encode_panel(&demos.test_logs(), &b.vae, config.lag)?;
        let mut panel_csv = Vec::new();
        write_panel_csv(&mut panel_csv, &panel)?;
        artifacts.push(write_artifact(out, "latent_panel", "latent_panel.csv", &panel_csv)?);

        if let Some(c) = &b.causes {
            artifacts.push(write_artifact(out, "causes", "causes.json", c.to_json().as_bytes())?);
        }
        let mut buf = Vec::new();
        b.predictor.to_file().write_to(&mut buf)?;
        artifacts.push(write_artifact(out, "predictor", "predictor.cimw", &buf)?);
        b
    };

    let report = evaluate_variant(config, variant, Some(&bundle), &town)?;
    artifacts.push(write_artifact(out, "metrics", "metrics.json", report.to_json().as_bytes())?);
    fs::write(out.join("metrics.txt"), super::outcome::metrics_table(&[&report]))?;

    let manifest = PipelineManifest {
        variant,
        seed: config.seed,
        config_fingerprint: config.fingerprint(),
        derived_seeds: ["collect", "vae", "vae/entangled", "predictor/cim", "predictor/mlp", "eval"]
            .iter()
            .map(|l| (l.to_string(), derive_seed(config.seed, l)))
            .collect(),
        artifacts,
    };
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(config)?)?;
    fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(PipelineRun { bundle, report, manifest })
}

/// Long-format latent panel: episode, t, speed, z0..z{k-1}.
pub fn write_panel_csv<W: std::io::Write>(out: W, panel: &SeriesPanel) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let k = panel.n_series();
    let mut header = vec!["episode".to_string(), "t".into(), "speed".into()];
    header.extend((0..k).map(|i| format!("z{i}")));
    w.write_record(&header).map_err(std::io::Error::other)?;
    for (e, ep) in panel.episodes.iter().enumerate() {
        for t in 0..ep.speed.len() {
            let mut row = vec![e.to_string(), t.to_string(), format!("{:?}", ep.speed[t])];
            row.extend((0..k).map(|i| format!("{:?}", ep.latents[[t, i]])));
            w.write_record(&row).map_err(std::io::Error::other)?;
        }
    }
    w.flush()?;
    Ok(())
}
