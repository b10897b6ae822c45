//! Shallow speed predictor. Each input variable's last three values pass
//! through their own linear encoder and ReLU; the concatenated features feed
//! a small fully connected head whose output is the next-step speed.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causesel::CauseSet;
use crate::nncore::{
    backward, forward, update, Activation, LayerSpec, NnError, OptimizerConfig, OptimizerState, ParameterBundle,
    WeightFile,
};
use crate::perception::{encode_batch, stack_observations, VaeWeights};
use crate::simworld::EpisodeLog;

pub const WINDOW: usize = 3;
pub const FEWSHOT_BUDGET: usize = 100;

#[derive(Debug, Error)]
pub enum SpeedError {
    #[error("predictor expects {expected} variables, got {found}")]
    VariableCount { expected: usize, found: usize },
    #[error("empty cause set")]
    EmptyCauses,
    #[error("empty dataset")]
    Empty,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("few-shot set has {found} samples, budget is {budget}")]
    Budget { found: usize, budget: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorVariant {
    Cim,
    CimMlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub variant: PredictorVariant,
    pub encoder_width: usize,
    pub window: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub fewshot_budget: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
}

impl PredictorConfig {
    pub fn cim() -> Self {
        Self {
            variant: PredictorVariant::Cim,
            encoder_width: 16,
            window: WINDOW,
            head_hidden: 32,
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            fewshot_budget: FEWSHOT_BUDGET,
            finetune_epochs: 50,
            finetune_lr: 1e-3,
        }
    }

    /// All-latent ablation: narrower encoders, wider head.
    pub fn cim_mlp() -> Self {
        Self { variant: PredictorVariant::CimMlp, encoder_width: 8, head_hidden: 64, ..Self::cim() }
    }

    pub fn for_variant(variant: PredictorVariant) -> Self {
        match variant {
            PredictorVariant::Cim => Self::cim(),
            PredictorVariant::CimMlp => Self::cim_mlp(),
        }
    }

    pub fn validate(&self) -> Result<(), SpeedError> {
        if self.window != WINDOW {
            return Err(SpeedError::Config(format!("window must be {WINDOW}")));
        }
        if self.encoder_width == 0 || self.head_hidden == 0 || self.batch_size == 0 {
            return Err(SpeedError::Config("widths must be positive".into()));
        }
        Ok(())
    }

    fn encoder_specs(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::new(self.window, self.encoder_width, Activation::Relu)]
    }

    fn head_specs(&self, m: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(m * self.encoder_width, self.head_hidden, Activation::Relu),
            LayerSpec::new(self.head_hidden, 1, Activation::Identity),
        ]
    }
}

/// Windows of `m` variables, oldest value first, and the speed one tick ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub windows: Vec<[f64; WINDOW]>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub config: PredictorConfig,
    /// Latent coordinates read, in encoder order.
    pub inputs: Vec<usize>,
    /// Fingerprint of the cause set the inputs came from, if any.
    pub causes_fingerprint: Option<String>,
    pub encoders: Vec<ParameterBundle>,
    pub head: ParameterBundle,
}

impl PredictorWeights {
    pub fn init(config: &PredictorConfig, inputs: Vec<usize>) -> Result<Self, SpeedError> {
        config.validate()?;
        if inputs.is_empty() {
            return Err(SpeedError::EmptyCauses);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let enc_specs = config.encoder_specs();
        let encoders =
            (0..inputs.len()).map(|j| ParameterBundle::init(&enc_specs, &format!("enc{j}."), &mut rng)).collect();
        let head = ParameterBundle::init(&config.head_specs(inputs.len()), "head.", &mut rng);
        Ok(Self { config: config.clone(), inputs, causes_fingerprint: None, encoders, head })
    }

    pub fn with_causes(mut self, causes: &CauseSet) -> Self {
        self.causes_fingerprint = Some(causes.fingerprint());
        self
    }

    pub fn n_vars(&self) -> usize {
        self.inputs.len()
    }

    pub fn param_count(&self) -> usize {
        self.encoders.iter().map(ParameterBundle::len).sum::<usize>() + self.head.len()
    }

    /// Every tensor, encoders first, then the head.
    pub fn parameters(&self) -> ParameterBundle {
        let mut parts = self.encoders.clone();
        parts.push(self.head.clone());
        ParameterBundle::concat(parts)
    }

    /// Inverse of [`Self::parameters`].
    pub fn set_parameters(&mut self, all: ParameterBundle) {
        let mut counts = vec![2; self.encoders.len()];
        counts.push(4);
        let mut parts = all.split(&counts);
        self.head = parts.pop().expect("head");
        self.encoders = parts;
    }

    pub fn to_file(&self) -> WeightFile {
        WeightFile::new("speed-predictor", self.parameters())
            .with_meta("config", serde_json::to_value(&self.config).expect("config"))
            .with_meta("inputs", serde_json::to_value(&self.inputs).expect("inputs"))
            .with_meta("window", serde_json::json!(self.config.window))
            .with_meta("causes_fingerprint", serde_json::to_value(&self.causes_fingerprint).expect("fingerprint"))
    }

    pub fn from_file(file: WeightFile) -> Result<Self, SpeedError> {
        let meta = |key: &str| {
            file.manifest.meta.get(key).cloned().ok_or_else(|| SpeedError::Config(format!("missing {key}")))
        };
        let config: PredictorConfig =
            serde_json::from_value(meta("config")?).map_err(|e| SpeedError::Config(e.to_string()))?;
        let inputs: Vec<usize> =
            serde_json::from_value(meta("inputs")?).map_err(|e| SpeedError::Config(e.to_string()))?;
        let fingerprint: Option<String> = serde_json::from_value(meta("causes_fingerprint").unwrap_or_default())
            .map_err(|e| SpeedError::Config(e.to_string()))?;
        let mut w = Self::init(&config, inputs)?;
        if !w.parameters().congruent(&file.params) {
            return Err(SpeedError::Config("tensor shapes do not match config".into()));
        }
        w.set_parameters(file.params);
        w.causes_fingerprint = fingerprint;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<(), SpeedError> {
        Ok(crate::nncore::save_weights(path, &self.to_file())?)
    }

    pub fn load(path: &Path) -> Result<Self, SpeedError> {
        Self::from_file(crate::nncore::load_weights(path)?)
    }
}

struct Pass {
    enc_tapes: Vec<crate::nncore::Tape>,
    head_tape: crate::nncore::Tape,
    out: Array1<f64>,
}

/// `x` is `n × (m·window)`, variable-major.
fn forward_batch(w: &PredictorWeights, x: ArrayView2<f64>) -> Pass {
    let cfg = &w.config;
    let (win, width) = (cfg.window, cfg.encoder_width);
    let enc_specs = cfg.encoder_specs();
    let mut features = Array2::zeros((x.nrows(), w.n_vars() * width));
    let mut enc_tapes = Vec::with_capacity(w.n_vars());
    for (j, enc) in w.encoders.iter().enumerate() {
        let (h, tape) = forward(enc, &enc_specs, x.slice(s![.., j * win..(j + 1) * win]));
        features.slice_mut(s![.., j * width..(j + 1) * width]).assign(&h);
        enc_tapes.push(tape);
    }
    let (out, head_tape) = forward(&w.head, &cfg.head_specs(w.n_vars()), features.view());
    Pass { enc_tapes, head_tape, out: out.column(0).to_owned() }
}

fn backward_batch(w: &PredictorWeights, pass: &Pass, dout: &Array1<f64>) -> ParameterBundle {
    let cfg = &w.config;
    let width = cfg.encoder_width;
    let upstream = dout.view().insert_axis(Axis(1));
    let (g_head, d_feat) = backward(&w.head, &cfg.head_specs(w.n_vars()), &pass.head_tape, upstream);
    let enc_specs = cfg.encoder_specs();
    let mut parts: Vec<ParameterBundle> = w
        .encoders
        .iter()
        .enumerate()
        .map(|(j, enc)| {
            backward(enc, &enc_specs, &pass.enc_tapes[j], d_feat.slice(s![.., j * width..(j + 1) * width])).0
        })
        .collect();
    parts.push(g_head);
    ParameterBundle::concat(parts)
}

/// Design matrix (one row of concatenated windows per sample) and targets.
pub fn sample_matrix(samples: &[SpeedSample], m: usize) -> Result<(Array2<f64>, Array1<f64>), SpeedError> {
    let mut x = Array2::zeros((samples.len(), m * WINDOW));
    let mut y = Array1::zeros(samples.len());
    for (i, smp) in samples.iter().enumerate() {
        if smp.windows.len() != m {
            return Err(SpeedError::VariableCount { expected: m, found: smp.windows.len() });
        }
        for (j, win) in smp.windows.iter().enumerate() {
            for (l, &v) in win.iter().enumerate() {
                x[[i, j * WINDOW + l]] = v;
            }
        }
        y[i] = smp.target;
    }
    Ok((x, y))
}

/// Raw network output before the non-negativity clamp, one per row.
pub fn predict_raw(w: &PredictorWeights, x: ArrayView2<f64>) -> Array1<f64> {
    forward_batch(w, x).out
}

pub fn predict_speed(w: &PredictorWeights, windows: &[[f64; WINDOW]]) -> Result<f64, SpeedError> {
    if windows.len() != w.n_vars() {
        return Err(SpeedError::VariableCount { expected: w.n_vars(), found: windows.len() });
    }
    let flat: Vec<f64> = windows.iter().flatten().copied().collect();
    let x = ArrayView2::from_shape((1, flat.len()), &flat).expect("row");
    Ok(predict_raw(w, x)[0].max(0.0))
}

pub fn predict_batch(w: &PredictorWeights, samples: &[SpeedSample]) -> Result<Vec<f64>, SpeedError> {
    let (x, _) = sample_matrix(samples, w.n_vars())?;
    Ok(predict_raw(w, x.view()).iter().map(|v| v.max(0.0)).collect())
}

/// Mean squared error of the unclamped output and its gradient.
pub fn mse_loss_and_grad(w: &PredictorWeights, x: ArrayView2<f64>, y: &Array1<f64>) -> (f64, ParameterBundle) {
    let pass = forward_batch(w, x);
    let n = y.len() as f64;
    let resid = &pass.out - y;
    let loss = resid.mapv(|r| r * r).sum() / n;
    let dout = resid.mapv(|r| 2.0 * r / n);
    (loss, backward_batch(w, &pass, &dout))
}

/// Mean squared error of clamped predictions.
pub fn evaluate_mse(w: &PredictorWeights, samples: &[SpeedSample]) -> Result<f64, SpeedError> {
    if samples.is_empty() {
        return Err(SpeedError::Empty);
    }
    let pred = predict_batch(w, samples)?;
    Ok(pred.iter().zip(samples).map(|(p, s)| (p - s.target).powi(2)).sum::<f64>() / samples.len() as f64)
}

/// Which latent coordinates feed the predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSelection<'a> {
    Causes(&'a CauseSet),
    Indices(&'a [usize]),
    All,
}

impl InputSelection<'_> {
    pub fn indices(&self, k: usize) -> Result<Vec<usize>, SpeedError> {
        match self {
            InputSelection::Causes(c) if c.selected.is_empty() => Err(SpeedError::EmptyCauses),
            InputSelection::Causes(c) => Ok(c.selected.clone()),
            InputSelection::Indices([]) => Err(SpeedError::EmptyCauses),
            InputSelection::Indices(ix) if ix.iter().any(|&i| i >= k) => {
                Err(SpeedError::Config(format!("input index out of range for {k} latents")))
            }
            InputSelection::Indices(ix) => Ok(ix.to_vec()),
            InputSelection::All => Ok((0..k).collect()),
        }
    }
}

/// Samples from one already-encoded episode: latents `T × k`, speeds `T`.
pub fn samples_from_series(latents: ArrayView2<f64>, speeds: &[f64], inputs: &[usize]) -> Vec<SpeedSample> {
    let t_len = latents.nrows().min(speeds.len());
    (WINDOW - 1..t_len.saturating_sub(1))
        .map(|t| SpeedSample {
            windows: inputs.iter().map(|&i| std::array::from_fn(|l| latents[[t + 1 + l - WINDOW, i]])).collect(),
            target: speeds[t + 1],
        })
        .collect()
}

/// Encode every log with `vae` and cut windows of the selected coordinates.
pub fn make_dataset(
    logs: &[EpisodeLog],
    vae: &VaeWeights,
    selection: &InputSelection,
) -> Result<Vec<SpeedSample>, SpeedError> {
    let inputs = selection.indices(vae.latent_dim())?;
    let mut out = Vec::new();
    for log in logs {
        let obs: Vec<_> = (0..log.len()).map(|t| log.observation(t)).collect();
        if obs.is_empty() {
            continue;
        }
        let latents = encode_batch(vae, stack_observations(&obs).view());
        out.extend(samples_from_series(latents.view(), &log.speeds(), &inputs));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorEpoch {
    pub epoch: usize,
    pub mse: f64,
}

fn fit(
    mut w: PredictorWeights,
    samples: &[SpeedSample],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(PredictorWeights, Vec<PredictorEpoch>), SpeedError> {
    let (x, y) = sample_matrix(samples, w.n_vars())?;
    let mut params = w.parameters();
    let mut opt = OptimizerState::new(OptimizerConfig::adam(lr), &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(w.config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, grads) = mse_loss_and_grad(&w, xb.view(), &yb);
            if !loss.is_finite() {
                return Err(SpeedError::Divergence { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            update(&mut params, &grads, &mut opt);
            w.set_parameters(params.clone());
        }
        let mse = total / samples.len() as f64;
        log::debug!("predictor epoch {epoch}: mse {mse:.4}");
        history.push(PredictorEpoch { epoch, mse });
    }
    Ok((w, history))
}

pub fn train_predictor(
    samples: &[SpeedSample],
    inputs: Vec<usize>,
    config: &PredictorConfig,
) -> Result<(PredictorWeights, Vec<PredictorEpoch>), SpeedError> {
    if samples.is_empty() {
        return Err(SpeedError::Empty);
    }
    let mut w = PredictorWeights::init(config, inputs)?;
    let mean = samples.iter().map(|s| s.target).sum::<f64>() / samples.len() as f64;
    w.head.tensors[3].data[0] = mean;
    fit(w, samples, config.epochs, config.lr, config.seed ^ 0x5eed_5bee_d000)
}

/// Continue training on a small target-domain set. Inputs and the cause set
/// stay fixed; an empty set returns the weights unchanged.
pub fn finetune(w: &PredictorWeights, samples: &[SpeedSample], seed: u64) -> Result<PredictorWeights, SpeedError> {
    let budget = w.config.fewshot_budget;
    if samples.len() > budget {
        return Err(SpeedError::Budget { found: samples.len(), budget });
    }
    if samples.is_empty() {
        return Ok(w.clone());
    }
    let cfg = &w.config;
    Ok(fit(w.clone(), samples, cfg.finetune_epochs, cfg.finetune_lr, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use rand::Rng;

    fn random_samples(n: usize, m: usize, seed: u64, target: impl Fn(&[[f64; 3]]) -> f64) -> Vec<SpeedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let windows: Vec<[f64; 3]> =
                    (0..m).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
                let target = target(&windows);
                SpeedSample { windows, target }
            })
            .collect()
    }

    #[test]
    fn zero_net_predicts_zero() {
        let mut w = PredictorWeights::init(&PredictorConfig::cim(), vec![0, 1]).unwrap();
        for t in w.encoders.iter_mut().chain(std::iter::once(&mut w.head)).flat_map(|b| b.tensors.iter_mut()) {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(predict_speed(&w, &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap(), 0.0);
    }

    #[test]
    fn variable_count_checked() {
        let w = PredictorWeights::init(&PredictorConfig::cim(), vec![3, 9]).unwrap();
        assert!(matches!(predict_speed(&w, &[[0.0; 3]]), Err(SpeedError::VariableCount { expected: 2, found: 1 })));
    }

    #[test]
    fn output_never_negative() {
        let w = PredictorWeights::init(&PredictorConfig::cim(), vec![0, 1, 2]).unwrap();
        let samples = random_samples(500, 3, 4, |_| 0.0);
        let x = sample_matrix(&samples, 3).unwrap().0 * 50.0;
        assert!(predict_raw(&w, x.view()).iter().any(|&v| v < 0.0));
        let big: Vec<SpeedSample> = samples
            .iter()
            .map(|s| SpeedSample { windows: s.windows.iter().map(|w| w.map(|v| v * 50.0)).collect(), target: 0.0 })
            .collect();
        assert!(predict_batch(&w, &big).unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let mut cfg = PredictorConfig::cim();
        cfg.encoder_width = 4;
        cfg.head_hidden = 5;
        let w = PredictorWeights::init(&cfg, vec![0, 1]).unwrap();
        let samples = random_samples(12, 2, 9, |ws| 3.0 + ws[0][2] - ws[1][0]);
        let (x, y) = sample_matrix(&samples, 2).unwrap();
        let err = grad_check(&w.parameters(), 1e-6, 1, |p| {
            let mut probe = w.clone();
            probe.set_parameters(p.clone());
            mse_loss_and_grad(&probe, x.view(), &y)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn learns_identity_of_first_window_value() {
        let train = random_samples(2000, 2, 1, |ws| 4.0 + 3.0 * ws[0][0]);
        let held = random_samples(300, 2, 2, |ws| 4.0 + 3.0 * ws[0][0]);
        let mut cfg = PredictorConfig::cim();
        cfg.epochs = 60;
        let (w, hist) = train_predictor(&train, vec![0, 1], &cfg).unwrap();
        assert!(hist.last().unwrap().mse < hist[0].mse);
        let mse = evaluate_mse(&w, &held).unwrap();
        assert!(mse < 0.01, "held-out mse {mse}");
    }

    #[test]
    fn shuffled_targets_learn_nothing() {
        let mut train = random_samples(2000, 2, 5, |ws| 4.0 + 3.0 * ws[0][0]);
        let mut targets: Vec<f64> = train.iter().map(|s| s.target).collect();
        targets.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
        train.iter_mut().zip(targets).for_each(|(s, t)| s.target = t);
        let held = random_samples(1000, 2, 7, |ws| 4.0 + 3.0 * ws[0][0]);
        let mean = held.iter().map(|s| s.target).sum::<f64>() / held.len() as f64;
        let var = held.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / held.len() as f64;
        let (w, _) = train_predictor(&train, vec![0, 1], &PredictorConfig::cim()).unwrap();
        let mse = evaluate_mse(&w, &held).unwrap();
        assert!(mse > 0.9 * var, "mse {mse} vs variance {var}");
    }

    #[test]
    fn constant_target_is_recovered() {
        let train = random_samples(1000, 2, 11, |_| 6.5);
        let held = random_samples(200, 2, 12, |_| 6.5);
        let (w, _) = train_predictor(&train, vec![0, 1], &PredictorConfig::cim()).unwrap();
        for p in predict_batch(&w, &held).unwrap() {
            assert!((p - 6.5).abs() < 0.1, "{p}");
        }
    }

    #[test]
    fn cim_is_much_smaller_than_mlp() {
        let cim = PredictorWeights::init(&PredictorConfig::cim(), vec![3, 9]).unwrap();
        let mlp = PredictorWeights::init(&PredictorConfig::cim_mlp(), (0..16).collect()).unwrap();
        assert!(mlp.param_count() >= 4 * cim.param_count(), "{} vs {}", mlp.param_count(), cim.param_count());
    }

    #[test]
    fn series_windows_and_counts() {
        let lat = Array2::from_shape_fn((10, 16), |(t, i)| (t * 100 + i) as f64);
        let speeds: Vec<f64> = (0..10).map(|t| t as f64).collect();
        let samples = samples_from_series(lat.view(), &speeds, &[3, 9]);
        assert_eq!(samples.len(), 7);
        assert_eq!(samples[0].windows, vec![[3.0, 103.0, 203.0], [9.0, 109.0, 209.0]]);
        assert_eq!(samples[0].target, 3.0);
        let all = samples_from_series(lat.view(), &speeds, &(0..16).collect::<Vec<_>>());
        assert!(all.iter().all(|s| s.windows.len() == 16));
    }

    #[test]
    fn empty_cause_set_rejected() {
        let set = CauseSet {
            selected: vec![],
            results: vec![],
            alpha: 0.05,
            correction: "bonferroni".into(),
            lag: 3,
            panel_fingerprint: String::new(),
        };
        assert!(matches!(InputSelection::Causes(&set).indices(16), Err(SpeedError::EmptyCauses)));
    }

    #[test]
    fn finetune_edge_cases() {
        let train = random_samples(300, 2, 1, |ws| 2.0 + ws[1][2]);
        let (w, _) = train_predictor(&train, vec![0, 1], &PredictorConfig::cim()).unwrap();
        assert_eq!(finetune(&w, &[], 3).unwrap(), w);
        assert!(matches!(finetune(&w, &train[..101], 3), Err(SpeedError::Budget { .. })));
        let shifted = random_samples(100, 2, 8, |ws| 5.0 + ws[1][2]);
        let before = evaluate_mse(&w, &shifted).unwrap();
        let after = evaluate_mse(&finetune(&w, &shifted, 3).unwrap(), &shifted).unwrap();
        assert!(after < before);
    }

    #[test]
    fn weights_round_trip_and_determinism() {
        let train = random_samples(200, 2, 1, |ws| ws[0][0].abs());
        let (a, _) = train_predictor(&train, vec![4, 7], &PredictorConfig::cim()).unwrap();
        let (b, _) = train_predictor(&train, vec![4, 7], &PredictorConfig::cim()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.to_file().write_to(&mut buf).unwrap();
        let back = PredictorWeights::from_file(WeightFile::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
