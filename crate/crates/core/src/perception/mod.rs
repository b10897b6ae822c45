//! β-VAE perception: compresses rendered observations into a latent code and
//! decodes latent traversals for inspection.

mod traversal;

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::{
    backward, forward, update, Activation, LayerSpec, NnError, OptimizerConfig, OptimizerState, ParameterBundle,
    WeightFile,
};
use crate::simworld::Observation;

pub use traversal::{traverse, write_pgm_strip, DEFAULT_TRAVERSAL};

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty dataset")]
    Empty,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("latent index {index} out of range for k = {k}")]
    Index { index: usize, k: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub grid_side: usize,
    pub latent_dim: usize,
    pub beta: f64,
    /// Multiplier on the reconstruction term of the training objective.
    #[serde(default = "default_recon_weight")]
    pub recon_weight: f64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            grid_side: 32,
            latent_dim: 16,
            beta: 6.0,
            recon_weight: default_recon_weight(),
            hidden: vec![256, 128],
            epochs: 15,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

fn default_recon_weight() -> f64 {
    6.0
}

impl VaeConfig {
    /// Full-size profile: 64x64 input and 128 latents.
    pub fn paper_scale() -> Self {
        Self { grid_side: 64, latent_dim: 128, hidden: vec![1024, 512], ..Self::default() }
    }

    pub fn input_dim(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.latent_dim < 2 {
            return Err(PerceptionError::Config("latent_dim must be at least 2".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(PerceptionError::Config("beta must be non-negative".into()));
        }
        if !(self.recon_weight > 0.0) {
            return Err(PerceptionError::Config("recon_weight must be positive".into()));
        }
        if self.grid_side == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(PerceptionError::Config("sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden);
        let mut specs: Vec<LayerSpec> =
            dims.windows(2).map(|w| LayerSpec::new(w[0], w[1], Activation::LeakyRelu)).collect();
        specs.push(LayerSpec::new(*dims.last().expect("nonempty"), 2 * self.latent_dim, Activation::Identity));
        specs
    }

    /// Mirrored decoder ending in logits; probabilities are their sigmoid.
    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let mut dims = vec![self.latent_dim];
        dims.extend(self.hidden.iter().rev());
        let mut specs: Vec<LayerSpec> =
            dims.windows(2).map(|w| LayerSpec::new(w[0], w[1], Activation::LeakyRelu)).collect();
        specs.push(LayerSpec::new(*dims.last().expect("nonempty"), self.input_dim(), Activation::Identity));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeWeights {
    pub config: VaeConfig,
    pub encoder: ParameterBundle,
    pub decoder: ParameterBundle,
}

impl VaeWeights {
    pub fn init(config: &VaeConfig) -> Result<Self, PerceptionError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = ParameterBundle::init(&config.encoder_specs(), "enc.", &mut rng);
        let decoder = ParameterBundle::init(&config.decoder_specs(), "dec.", &mut rng);
        Ok(Self { config: config.clone(), encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn to_file(&self) -> WeightFile {
        let n_enc = self.encoder.tensors.len();
        WeightFile::new("beta-vae", ParameterBundle::concat(vec![self.encoder.clone(), self.decoder.clone()]))
            .with_meta("config", serde_json::to_value(&self.config).expect("config serializes"))
            .with_meta("encoder_tensors", n_enc.into())
    }

    pub fn from_file(file: WeightFile) -> Result<Self, PerceptionError> {
        let config: VaeConfig = file
            .manifest
            .meta
            .get("config")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| PerceptionError::Config("weight file lacks a vae config".into()))?;
        let n_enc = config.encoder_specs().len() * 2;
        let n_dec = config.decoder_specs().len() * 2;
        if file.params.tensors.len() != n_enc + n_dec {
            return Err(PerceptionError::Config("tensor count does not match config".into()));
        }
        let mut parts = file.params.split(&[n_enc, n_dec]).into_iter();
        let encoder = parts.next().expect("encoder");
        let decoder = parts.next().expect("decoder");
        Ok(Self { config, encoder, decoder })
    }

    pub fn save(&self, path: &Path) -> Result<(), PerceptionError> {
        Ok(crate::nncore::save_weights(path, &self.to_file())?)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        Self::from_file(crate::nncore::load_weights(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Stack observations into an n x side² matrix.
pub fn stack_observations(obs: &[Observation]) -> Array2<f64> {
    let width = obs.first().map_or(0, |o| o.pixels.len());
    crate::nncore::stack_rows(obs.iter().map(|o| o.pixels.as_slice()), width)
}

fn encode_rows(w: &VaeWeights, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, crate::nncore::Tape) {
    let k = w.latent_dim();
    let (out, tape) = forward(&w.encoder, &w.config.encoder_specs(), x);
    let mu = out.slice(s![.., ..k]).to_owned();
    let logvar = out.slice(s![.., k..]).to_owned();
    (mu, logvar, tape)
}

fn decode_logits(w: &VaeWeights, z: ArrayView2<f64>) -> (Array2<f64>, crate::nncore::Tape) {
    forward(&w.decoder, &w.config.decoder_specs(), z)
}

fn reparameterize(mu: &Array2<f64>, logvar: &Array2<f64>, noise: &Array2<f64>) -> Array2<f64> {
    let mut z = mu.clone();
    ndarray::Zip::from(&mut z).and(logvar).and(noise).for_each(|z, &lv, &e| *z += (0.5 * lv).exp() * e);
    z
}

/// Encode, reparameterize with the caller's noise and decode one observation.
pub fn vae_forward(w: &VaeWeights, obs: &Observation, noise: &[f64]) -> (LatentVector, Observation) {
    let x = ArrayView2::from_shape((1, obs.pixels.len()), &obs.pixels).expect("row");
    let (mu, logvar, _) = encode_rows(w, x);
    let eps = Array2::from_shape_vec((1, noise.len()), noise.to_vec()).expect("noise row");
    let z = reparameterize(&mu, &logvar, &eps);
    let (logits, _) = decode_logits(w, z.view());
    let pixels = logits.iter().map(|&l| crate::nncore::sigmoid(l)).collect();
    let latent = LatentVector { mu: mu.row(0).to_vec(), logvar: logvar.row(0).to_vec(), z: z.row(0).to_vec() };
    (latent, Observation { side: obs.side, pixels })
}

pub fn kl_term(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}

/// Pixelwise binary cross-entropy summed over the grid plus β-weighted KL.
pub fn vae_loss(obs: &Observation, recon: &Observation, mu: &[f64], logvar: &[f64], beta: f64) -> LossTerms {
    const FLOOR: f64 = 1e-12;
    let recon_term = obs
        .pixels
        .iter()
        .zip(&recon.pixels)
        .map(|(&x, &p)| {
            let p = p.clamp(FLOOR, 1.0 - FLOOR);
            -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
        })
        .sum::<f64>();
    let kl = kl_term(mu, logvar);
    LossTerms { total: recon_term + beta * kl, recon: recon_term, kl }
}

/// `softplus(l) - x*l`, the cross-entropy of logit `l` against target `x`.
fn bce_logit(x: f64, l: f64) -> f64 {
    l.max(0.0) - x * l + (-l.abs()).exp().ln_1p()
}

/// Mean of `recon_weight · recon + beta · kl` over a batch and its gradient
/// with respect to all weights.
pub fn batch_loss_and_grad(
    w: &VaeWeights,
    x: ArrayView2<f64>,
    noise: &Array2<f64>,
    beta: f64,
    recon_weight: f64,
) -> (LossTerms, ParameterBundle, ParameterBundle) {
    let n = x.nrows() as f64;
    let k = w.latent_dim();
    let (mu, logvar, enc_tape) = encode_rows(w, x);
    let z = reparameterize(&mu, &logvar, noise);
    let (logits, dec_tape) = decode_logits(w, z.view());

    let mut recon = 0.0;
    let mut d_logits = logits.clone();
    ndarray::Zip::from(&mut d_logits).and(&x).for_each(|d, &xi| {
        let l = *d;
        recon += bce_logit(xi, l);
        *d = recon_weight * (crate::nncore::sigmoid(l) - xi) / n;
    });
    let kl: f64 =
        ndarray::Zip::from(&mu).and(&logvar).fold(0.0, |acc, &m, &lv| acc + 0.5 * (m * m + lv.exp() - 1.0 - lv));
    let (dec_grad, dz) = backward(&w.decoder, &w.config.decoder_specs(), &dec_tape, d_logits.view());

    let mut d_enc = Array2::zeros((x.nrows(), 2 * k));
    for r in 0..x.nrows() {
        for j in 0..k {
            let (m, lv, e) = (mu[[r, j]], logvar[[r, j]], noise[[r, j]]);
            let sd = (0.5 * lv).exp();
            d_enc[[r, j]] = dz[[r, j]] + beta * m / n;
            d_enc[[r, k + j]] = dz[[r, j]] * e * 0.5 * sd + beta * 0.5 * (lv.exp() - 1.0) / n;
        }
    }
    let (enc_grad, _) = backward(&w.encoder, &w.config.encoder_specs(), &enc_tape, d_enc.view());
    let terms = LossTerms { total: (recon_weight * recon + beta * kl) / n, recon: recon / n, kl: kl / n };
    (terms, enc_grad, dec_grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Minibatch Adam on the mean β-VAE loss. Rows of `data` are flattened
/// observations with values in [0, 1].
pub fn train_vae(data: ArrayView2<f64>, config: &VaeConfig) -> Result<(VaeWeights, Vec<EpochStats>), PerceptionError> {
    train_vae_from(VaeWeights::init(config)?, data)
}

/// Continue training existing weights with their stored config.
pub fn train_vae_from(
    mut w: VaeWeights,
    data: ArrayView2<f64>,
) -> Result<(VaeWeights, Vec<EpochStats>), PerceptionError> {
    let config = w.config.clone();
    if data.nrows() == 0 {
        return Err(PerceptionError::Empty);
    }
    if data.ncols() != config.input_dim() {
        return Err(PerceptionError::Config(format!(
            "rows have {} pixels, config expects {}",
            data.ncols(),
            config.input_dim()
        )));
    }
    let k = config.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e_ed0f_7a1e);
    let mut opt_enc = OptimizerState::new(OptimizerConfig::adam(config.lr), &w.encoder);
    let mut opt_dec = OptimizerState::new(OptimizerConfig::adam(config.lr), &w.decoder);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let noise = Array2::from_shape_fn((chunk.len(), k), |_| rng.sample::<f64, _>(StandardNormal));
            let (terms, g_enc, g_dec) = batch_loss_and_grad(&w, batch.view(), &noise, config.beta, config.recon_weight);
            if !terms.total.is_finite() {
                return Err(PerceptionError::Divergence { epoch, loss: terms.total });
            }
            let m = chunk.len() as f64;
            sums.0 += terms.recon * m;
            sums.1 += terms.kl * m;
            sums.2 += terms.total * m;
            update(&mut w.encoder, &g_enc, &mut opt_enc);
            update(&mut w.decoder, &g_dec, &mut opt_dec);
        }
        let n = data.nrows() as f64;
        let stats = EpochStats { epoch, recon: sums.0 / n, kl: sums.1 / n, total: sums.2 / n };
        log::info!("vae epoch {epoch}: recon {:.3} kl {:.3} total {:.3}", stats.recon, stats.kl, stats.total);
        if !w.encoder.is_finite() || !w.decoder.is_finite() {
            return Err(PerceptionError::Divergence { epoch, loss: stats.total });
        }
        history.push(stats);
    }
    Ok((w, history))
}

pub fn write_training_csv<W: Write>(mut out: W, history: &[EpochStats]) -> std::io::Result<()> {
    writeln!(out, "epoch,recon,kl,total")?;
    for h in history {
        writeln!(out, "{},{},{},{}", h.epoch, h.recon, h.kl, h.total)?;
    }
    Ok(())
}

/// Posterior means and log-variances for a batch of flattened observations.
pub fn encode_posterior_batch(w: &VaeWeights, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (mu, logvar, _) = encode_rows(w, x);
    (mu, logvar)
}

/// Latent coordinates whose posterior mean varies across `x` more than the
/// posterior noise: Var(μ_j) > mean σ_j².
pub fn informative_units(w: &VaeWeights, x: ArrayView2<f64>) -> Vec<usize> {
    if x.nrows() == 0 {
        return Vec::new();
    }
    let (mu, logvar) = encode_posterior_batch(w, x);
    let spread = mu.var_axis(ndarray::Axis(0), 0.0);
    let noise = logvar.mapv(f64::exp).mean_axis(ndarray::Axis(0)).expect("non-empty");
    (0..mu.ncols()).filter(|&j| spread[j] > noise[j]).collect()
}

/// Posterior means for a batch of flattened observations.
pub fn encode_batch(w: &VaeWeights, x: ArrayView2<f64>) -> Array2<f64> {
    encode_rows(w, x).0
}

/// Noise-free latent code (the posterior mean) of one observation.
pub fn encode(w: &VaeWeights, obs: &Observation) -> Vec<f64> {
    let x = ArrayView2::from_shape((1, obs.pixels.len()), &obs.pixels).expect("row");
    encode_batch(w, x).row(0).to_vec()
}

/// Decoder probabilities for one latent code.
pub fn decode(w: &VaeWeights, z: &[f64]) -> Observation {
    let row = Array1::from(z.to_vec());
    let (logits, _) = decode_logits(w, crate::nncore::row(&row));
    Observation { side: w.config.grid_side, pixels: logits.iter().map(|&l| crate::nncore::sigmoid(l)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;

    fn tiny() -> VaeConfig {
        VaeConfig { grid_side: 4, latent_dim: 3, hidden: vec![6], epochs: 1, batch_size: 4, ..VaeConfig::default() }
    }

    fn random_obs(side: usize, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observation { side, pixels: (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect() }
    }

    #[test]
    fn kl_spot_values() {
        assert_eq!(kl_term(&[0.0; 5], &[0.0; 5]), 0.0);
        assert!((kl_term(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn beta_weights_only_kl() {
        let w = VaeWeights::init(&tiny()).unwrap();
        let obs = random_obs(4, 1);
        let (lat, rec) = vae_forward(&w, &obs, &[0.3, -0.1, 0.7]);
        let zero = vae_loss(&obs, &rec, &lat.mu, &lat.logvar, 0.0);
        assert_eq!(zero.total, zero.recon);
        let one = vae_loss(&obs, &rec, &lat.mu, &lat.logvar, 1.0);
        assert_eq!(one.total, one.recon + one.kl);
    }

    #[test]
    fn zero_noise_gives_mean() {
        let w = VaeWeights::init(&tiny()).unwrap();
        let obs = random_obs(4, 2);
        let (lat, rec) = vae_forward(&w, &obs, &[0.0; 3]);
        assert_eq!(lat.z, lat.mu);
        assert_eq!(lat.mu, encode(&w, &obs));
        assert!(rec.pixels.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(vae_forward(&w, &obs, &[0.0; 3]), (lat, rec));
    }

    #[test]
    fn logit_loss_matches_probability_loss() {
        let w = VaeWeights::init(&tiny()).unwrap();
        let obs = random_obs(4, 3);
        let noise = [0.5, -1.0, 0.25];
        let (lat, rec) = vae_forward(&w, &obs, &noise);
        let reference = vae_loss(&obs, &rec, &lat.mu, &lat.logvar, 6.0);
        let x = Array2::from_shape_vec((1, 16), obs.pixels.clone()).unwrap();
        let eps = Array2::from_shape_vec((1, 3), noise.to_vec()).unwrap();
        let (terms, _, _) = batch_loss_and_grad(&w, x.view(), &eps, 6.0, 1.0);
        assert!((terms.total - reference.total).abs() < 1e-9);
    }

    #[test]
    fn gradient_passes_check() {
        let cfg = tiny();
        let w = VaeWeights::init(&cfg).unwrap();
        let x = Array2::from_shape_fn((3, 16), |(r, c)| ((r * 16 + c) as f64 * 0.37).sin().abs());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Array2::from_shape_fn((3, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let n_enc = w.encoder.tensors.len();
        let joint = ParameterBundle::concat(vec![w.encoder.clone(), w.decoder.clone()]);
        let err = grad_check(&joint, 1e-6, 0, |p| {
            let mut parts = p.clone().split(&[n_enc, p.tensors.len() - n_enc]).into_iter();
            let probe =
                VaeWeights { config: cfg.clone(), encoder: parts.next().unwrap(), decoder: parts.next().unwrap() };
            let (t, ge, gd) = batch_loss_and_grad(&probe, x.view(), &noise, 6.0, 2.5);
            (t.total, ParameterBundle::concat(vec![ge, gd]))
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let cfg = VaeConfig { epochs: 30, ..tiny() };
        let data = Array2::from_shape_fn((12, 16), |(r, c)| if (r + c) % 3 == 0 { 1.0 } else { 0.0 });
        let (a, hist) = train_vae(data.view(), &cfg).unwrap();
        let (b, _) = train_vae(data.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(hist.last().unwrap().total < hist[0].total);
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        a.to_file().write_to(&mut bytes_a).unwrap();
        b.to_file().write_to(&mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(VaeWeights::from_file(a.to_file()).unwrap(), a);
    }

    #[test]
    fn informative_units_follow_beta() {
        let data = Array2::from_shape_fn((16, 16), |(r, c)| if (r % 2 == 0) == (c < 8) { 1.0 } else { 0.0 });
        let fit = |beta| train_vae(data.view(), &VaeConfig { epochs: 150, beta, ..tiny() }).unwrap().0;
        assert!(!informative_units(&fit(0.1), data.view()).is_empty());
        assert!(informative_units(&fit(500.0), data.view()).is_empty());
        assert!(informative_units(&fit(0.1), data.slice(ndarray::s![..0, ..])).is_empty());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(VaeWeights::init(&VaeConfig { latent_dim: 1, ..tiny() }).is_err());
        assert!(VaeWeights::init(&VaeConfig { beta: -1.0, ..tiny() }).is_err());
        assert!(matches!(train_vae(Array2::zeros((0, 16)).view(), &tiny()), Err(PerceptionError::Empty)));
    }

    #[test]
    fn all_zero_observation_encodes_finitely() {
        let w = VaeWeights::init(&VaeConfig::default()).unwrap();
        let code = encode(&w, &Observation::zeros(32));
        assert_eq!(code.len(), 16);
        assert!(code.iter().all(|v| v.is_finite()));
    }
}
