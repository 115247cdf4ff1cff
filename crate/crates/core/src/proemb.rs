//! Proxy embeddings: a variational autoencoder over the concatenated proxies
//! `[Z | Zngb]`, with an adversarial discriminator that tries to predict the
//! treatment from the latent code and a balance penalty that pushes its
//! predictions toward 1/2.
//!
//! Each minibatch runs three updates in order:
//!
//! 1. VAE step on encoder, heads and decoder (reconstruction + KL);
//! 2. discriminator step (cross-entropy against the labels, latent codes frozen);
//! 3. balance step on encoder and heads, `λ · mean (D(ẑ) − 1/2)²`, discriminator frozen.
//!
//! The three updates keep separate Adam moments.

use crate::error::{dims, Error, Result};
use crate::neural::{
    bce, bce_grad, minibatches, Activation, AdamConfig, AdamState, DenseNet, Gradients, Input,
};
use crate::numerics::{sample_gaussian, shuffle, tol, Mat, RngStream, SparseRows};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// How the reconstruction error is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconLoss {
    /// Squared error summed over a row's entries, averaged over rows.
    NodeSum,
    /// Squared error averaged over all entries.
    EntryMean,
}

/// What the discriminator is asked to predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscLabel {
    /// `T_i = h(Y_ngb)`.
    Treatment,
    /// The ego's own previous activation `Y_{i,t-1}`.
    OwnPrevious,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// VAE, discriminator, then balance update on every minibatch.
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub lambda_rb: f64,
    pub batch: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub disc_hidden: usize,
    pub disc_layers: usize,
    pub recon: ReconLoss,
    pub disc_label: DiscLabel,
    /// Weight the discriminator's cross-entropy so both classes count equally.
    pub balance_classes: bool,
    /// Turn the discriminator and balance steps off entirely (plain VAE).
    pub adversarial: bool,
    /// Fraction of nodes held out of the gradient steps to monitor balance.
    pub holdout_frac: f64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            lambda_rb: 1.0,
            batch: 128,
            latent_dim: 20,
            hidden: 100,
            disc_hidden: 100,
            disc_layers: 4,
            recon: ReconLoss::NodeSum,
            disc_label: DiscLabel::Treatment,
            balance_classes: true,
            adversarial: true,
            holdout_frac: 0.1,
            schedule: Schedule::Alternating,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lambda_rb >= 0.0) {
            return bad("lambda_rb must be >= 0");
        }
        if self.epochs == 0 || self.batch == 0 || self.latent_dim == 0 || self.hidden == 0 {
            return bad("epochs, batch, latent_dim and hidden must be >= 1");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return bad("holdout_frac must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Column standardization of a proxy matrix (zero mean, unit variance;
/// constant columns map to zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &SparseRows) -> Self {
        let n = x.rows().max(1) as f64;
        let cols = x.cols();
        let mut s1 = vec![0.0; cols];
        let mut s2 = vec![0.0; cols];
        for r in 0..x.rows() {
            for (c, v) in x.row(r) {
                s1[c] += v;
                s2[c] += v * v;
            }
        }
        let bg = x.background();
        let mut mean = vec![0.0; cols];
        let mut scale = vec![0.0; cols];
        for c in 0..cols {
            // offsets around the background value
            let m_off = s1[c] / n;
            let var = (s2[c] / n - m_off * m_off).max(0.0);
            mean[c] = bg[c] + m_off;
            let sd = libm::sqrt(var);
            scale[c] = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &SparseRows) -> Result<SparseRows> {
        x.affine_columns(&self.mean, &self.scale)
    }
}

/// Reconstruction, KL and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// VAE objective for a batch: reconstruction error plus
/// `KL(N(μ, e^{logvar}) ‖ N(0, I))`, both averaged over rows.
pub fn vae_loss(x: &Mat, recon: &Mat, mu: &Mat, logvar: &Mat, reduction: ReconLoss) -> Result<VaeLoss> {
    recon.check_shape("vae_loss reconstruction", x.rows(), x.cols())?;
    logvar.check_shape("vae_loss logvar", mu.rows(), mu.cols())?;
    dims("vae_loss batch", x.rows(), mu.rows())?;
    let b = x.rows().max(1) as f64;
    let sq: f64 = x
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, r)| (r - a) * (r - a))
        .sum();
    let rec = match reduction {
        ReconLoss::NodeSum => sq / b,
        ReconLoss::EntryMean => sq / (b * x.cols().max(1) as f64),
    };
    let kl = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| 0.5 * (libm::exp(lv) + m * m - 1.0 - lv))
        .sum::<f64>()
        / b;
    Ok(VaeLoss {
        total: rec + kl,
        recon: rec,
        kl,
    })
}

/// `ẑ = μ + exp(logvar / 2) ⊙ η`.
pub fn reparameterize(mu: &Mat, logvar: &Mat, eta: &Mat) -> Result<Mat> {
    logvar.check_shape("reparameterize logvar", mu.rows(), mu.cols())?;
    eta.check_shape("reparameterize noise", mu.rows(), mu.cols())?;
    let mut z = mu.clone();
    for ((z, &lv), &e) in z.data_mut().iter_mut().zip(logvar.data()).zip(eta.data()) {
        *z += libm::exp(0.5 * lv) * e;
    }
    Ok(z)
}

/// Standard-normal noise of the given shape.
pub fn standard_noise(rows: usize, cols: usize, rng: &mut RngStream) -> Mat {
    Mat::from_fn(rows, cols, |_, _| sample_gaussian(rng, 0.0, 1.0).expect("unit variance"))
}

/// Draws `ẑ ~ N(μ, exp(logvar))` by reparameterization.
pub fn sample_latent(mu: &Mat, logvar: &Mat, rng: &mut RngStream) -> Result<Mat> {
    let eta = standard_noise(mu.rows(), mu.cols(), rng);
    reparameterize(mu, logvar, &eta)
}

/// Gradients of the VAE objective for the four VAE sub-networks.
#[derive(Clone, Debug)]
pub struct VaeGrads {
    pub encoder: Gradients,
    pub mu_head: Gradients,
    pub logvar_head: Gradients,
    pub decoder: Gradients,
}

/// Encoder-side gradients of the balance penalty.
#[derive(Clone, Debug)]
pub struct BalanceGrads {
    pub encoder: Gradients,
    pub mu_head: Gradients,
    pub logvar_head: Gradients,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProEmbModel {
    pub encoder: DenseNet,
    pub mu_head: DenseNet,
    pub logvar_head: DenseNet,
    pub decoder: DenseNet,
    pub discriminator: DenseNet,
    trained: bool,
}

impl ProEmbModel {
    /// Fresh model for `input_dim`-wide proxies. The VAE and the
    /// discriminator draw their initial weights from separate streams.
    pub fn new(input_dim: usize, config: &TrainConfig, rng: &RngStream) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let d = config.latent_dim;
        let mut vae_rng = rng.derive(1);
        let mut disc_rng = rng.derive(2);
        let encoder = DenseNet::init(&[input_dim, h, h, h], Activation::Relu, Activation::Relu, &mut vae_rng)?;
        let mu_head = DenseNet::init(&[h, d], Activation::Linear, Activation::Linear, &mut vae_rng)?;
        let logvar_head = DenseNet::init(&[h, d], Activation::Linear, Activation::Linear, &mut vae_rng)?;
        let decoder = DenseNet::init(&[d, h, h, h, input_dim], Activation::Relu, Activation::Linear, &mut vae_rng)?;
        let mut widths = vec![d];
        widths.extend(core::iter::repeat_n(config.disc_hidden, config.disc_layers));
        widths.push(1);
        let discriminator = DenseNet::init(&widths, Activation::Linear, Activation::Sigmoid, &mut disc_rng)?;
        Ok(Self {
            encoder,
            mu_head,
            logvar_head,
            decoder,
            discriminator,
            trained: false,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.out_dim()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Posterior mean and clamped log-variance.
    pub fn encode<'a>(&self, x: impl Into<Input<'a>>) -> Result<(Mat, Mat)> {
        let h = self.encoder.predict(x)?;
        let mu = self.mu_head.predict(&h)?;
        let lv = self.logvar_head.predict(&h)?.map(clamp_logvar);
        Ok((mu, lv))
    }

    pub fn decode(&self, zhat: &Mat) -> Result<Mat> {
        self.decoder.predict(zhat)
    }

    /// Discriminator probabilities, one per row.
    pub fn discriminate(&self, zhat: &Mat) -> Result<Vec<f64>> {
        Ok(self.discriminator.predict(zhat)?.into_vec())
    }

    /// Mean cross-entropy of the discriminator against 0/1 labels.
    pub fn disc_loss(&self, zhat: &Mat, labels: &[f64]) -> Result<f64> {
        dims("disc_loss labels", zhat.rows(), labels.len())?;
        check_labels(labels)?;
        Ok(bce(&self.discriminate(zhat)?, labels))
    }

    /// `mean (D(ẑ) − 1/2)²`.
    pub fn balance_loss(&self, zhat: &Mat) -> Result<f64> {
        let p = self.discriminate(zhat)?;
        Ok(balance_penalty(&p))
    }

    /// Deterministic embedding: the posterior mean `μ`.
    pub fn embed<'a>(&self, x: impl Into<Input<'a>>) -> Result<Mat> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        Ok(self.encode(x)?.0)
    }

    /// Loss and gradients of the VAE objective with frozen noise `eta`.
    pub fn vae_objective<'a>(
        &self,
        x: impl Into<Input<'a>>,
        eta: &Mat,
        reduction: ReconLoss,
    ) -> Result<(VaeLoss, VaeGrads, Mat)> {
        let x = x.into();
        let target = match x {
            Input::Dense(m) => m.clone(),
            Input::Sparse(s) => s.to_dense(),
        };
        let (h, enc_cache) = self.encoder.forward(x)?;
        let (mu, mu_cache) = self.mu_head.forward(&h)?;
        let (lv_raw, lv_cache) = self.logvar_head.forward(&h)?;
        let lv = lv_raw.map(clamp_logvar);
        let zhat = reparameterize(&mu, &lv, eta)?;
        let (recon, dec_cache) = self.decoder.forward(&zhat)?;
        let b = target.rows().max(1) as f64;
        let denom = match reduction {
            ReconLoss::NodeSum => b,
            ReconLoss::EntryMean => b * target.cols().max(1) as f64,
        };
        // loss and its gradient in one pass over the reconstruction
        let mut sq = 0.0;
        let mut d_recon = recon;
        for (r, &t) in d_recon.data_mut().iter_mut().zip(target.data()) {
            let e = *r - t;
            sq += e * e;
            *r = 2.0 * e / denom;
        }
        let kl = mu
            .data()
            .iter()
            .zip(lv.data())
            .map(|(&m, &l)| 0.5 * (libm::exp(l) + m * m - 1.0 - l))
            .sum::<f64>()
            / b;
        let loss = VaeLoss {
            total: sq / denom + kl,
            recon: sq / denom,
            kl,
        };
        let (decoder, d_zhat) = self.decoder.backward_with_input_owned(&dec_cache, d_recon)?;
        let (mut d_mu, mut d_lv) = through_sampler(&d_zhat, &lv_raw, &lv, eta);
        for ((dm, dl), (&m, &l)) in d_mu
            .data_mut()
            .iter_mut()
            .zip(d_lv.data_mut().iter_mut())
            .zip(mu.data().iter().zip(lv.data()))
        {
            *dm += m / b;
            if in_clamp(l) {
                *dl += 0.5 * (libm::exp(l) - 1.0) / b;
            }
        }
        let (mu_head, dh_mu) = self.mu_head.backward_with_input(&mu_cache, &d_mu)?;
        let (logvar_head, dh_lv) = self.logvar_head.backward_with_input(&lv_cache, &d_lv)?;
        let mut dh = dh_mu;
        dh.axpy(1.0, &dh_lv)?;
        let encoder = self.encoder.backward(&enc_cache, &dh)?;
        Ok((
            loss,
            VaeGrads {
                encoder,
                mu_head,
                logvar_head,
                decoder,
            },
            zhat,
        ))
    }

    /// Weighted cross-entropy of the discriminator and its parameter gradients.
    pub fn disc_objective(&self, zhat: &Mat, labels: &[f64], weights: [f64; 2]) -> Result<(f64, Gradients)> {
        dims("disc_objective labels", zhat.rows(), labels.len())?;
        let (p, cache) = self.discriminator.forward(zhat)?;
        let p = p.into_vec();
        let w: Vec<f64> = labels.iter().map(|&y| if y > 0.5 { weights[1] } else { weights[0] }).collect();
        let per = bce_grad(&p, labels);
        let n = p.len().max(1) as f64;
        let loss = p
            .iter()
            .zip(labels)
            .zip(&w)
            .map(|((&pi, &y), &wi)| wi * bce(&[pi], &[y]))
            .sum::<f64>()
            / n;
        let g: Vec<f64> = per.iter().zip(&w).map(|(g, wi)| g * wi).collect();
        let grads = self.discriminator.backward(&cache, &Mat::column(&g))?;
        Ok((loss, grads))
    }

    /// `λ · mean (D(ẑ) − 1/2)²` with frozen noise, and its encoder-side gradients.
    pub fn balance_objective<'a>(
        &self,
        x: impl Into<Input<'a>>,
        eta: &Mat,
        lambda: f64,
    ) -> Result<(f64, BalanceGrads)> {
        let (h, enc_cache) = self.encoder.forward(x)?;
        let (mu, mu_cache) = self.mu_head.forward(&h)?;
        let (lv_raw, lv_cache) = self.logvar_head.forward(&h)?;
        let lv = lv_raw.map(clamp_logvar);
        let zhat = reparameterize(&mu, &lv, eta)?;
        let (p, d_cache) = self.discriminator.forward(&zhat)?;
        let b = p.rows().max(1) as f64;
        let loss = lambda * balance_penalty(p.data());
        let dp = p.map(|v| 2.0 * lambda * (v - 0.5) / b);
        let (_, d_zhat) = self.discriminator.backward_with_input_owned(&d_cache, dp)?;
        let (d_mu, d_lv) = through_sampler(&d_zhat, &lv_raw, &lv, eta);
        let (mu_head, dh_mu) = self.mu_head.backward_with_input(&mu_cache, &d_mu)?;
        let (logvar_head, dh_lv) = self.logvar_head.backward_with_input(&lv_cache, &d_lv)?;
        let mut dh = dh_mu;
        dh.axpy(1.0, &dh_lv)?;
        let encoder = self.encoder.backward(&enc_cache, &dh)?;
        Ok((
            loss,
            BalanceGrads {
                encoder,
                mu_head,
                logvar_head,
            },
        ))
    }
}

fn clamp_logvar(v: f64) -> f64 {
    v.clamp(tol::LOGVAR_MIN, tol::LOGVAR_MAX)
}

fn in_clamp(raw: f64) -> bool {
    (tol::LOGVAR_MIN..=tol::LOGVAR_MAX).contains(&raw)
}

/// Splits `∂L/∂ẑ` into `∂L/∂μ` and `∂L/∂logvar_raw` (zero where clamped).
fn through_sampler(d_zhat: &Mat, lv_raw: &Mat, lv: &Mat, eta: &Mat) -> (Mat, Mat) {
    let d_mu = d_zhat.clone();
    let mut d_lv = d_zhat.clone();
    for (((d, &raw), &l), &e) in d_lv
        .data_mut()
        .iter_mut()
        .zip(lv_raw.data())
        .zip(lv.data())
        .zip(eta.data())
    {
        *d = if in_clamp(raw) {
            *d * e * 0.5 * libm::exp(0.5 * l)
        } else {
            0.0
        };
    }
    (d_mu, d_lv)
}

fn balance_penalty(p: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    p.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>() / p.len() as f64
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Optimizer state for the three alternating updates.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    vae: [AdamState; 4],
    disc: AdamState,
    bal: [AdamState; 3],
    class_weights: [f64; 2],
}

impl Trainer {
    pub fn new(model: &ProEmbModel, config: TrainConfig) -> Self {
        let adam = AdamConfig::with_lr(config.lr);
        Self {
            vae: [
                AdamState::new(&model.encoder, adam),
                AdamState::new(&model.mu_head, adam),
                AdamState::new(&model.logvar_head, adam),
                AdamState::new(&model.decoder, adam),
            ],
            disc: AdamState::new(&model.discriminator, adam),
            bal: [
                AdamState::new(&model.encoder, adam),
                AdamState::new(&model.mu_head, adam),
                AdamState::new(&model.logvar_head, adam),
            ],
            class_weights: [1.0, 1.0],
            config,
        }
    }

    /// Cross-entropy class weights; `[1, 1]` is the plain mean.
    pub fn set_class_weights(&mut self, weights: [f64; 2]) {
        self.class_weights = weights;
    }

    /// One VAE update. Returns the batch loss and the sampled codes.
    pub fn vae_step<'a>(
        &mut self,
        model: &mut ProEmbModel,
        x: impl Into<Input<'a>>,
        eta: &Mat,
    ) -> Result<(VaeLoss, Mat)> {
        let (loss, g, zhat) = model.vae_objective(x, eta, self.config.recon)?;
        self.vae[0].step(&mut model.encoder, &g.encoder)?;
        self.vae[1].step(&mut model.mu_head, &g.mu_head)?;
        self.vae[2].step(&mut model.logvar_head, &g.logvar_head)?;
        self.vae[3].step(&mut model.decoder, &g.decoder)?;
        Ok((loss, zhat))
    }

    /// One discriminator update on fixed codes.
    pub fn disc_step(&mut self, model: &mut ProEmbModel, zhat: &Mat, labels: &[f64]) -> Result<f64> {
        let (loss, g) = model.disc_objective(zhat, labels, self.class_weights)?;
        self.disc.step(&mut model.discriminator, &g)?;
        Ok(loss)
    }

    /// One balance update of encoder and heads.
    pub fn balance_step<'a>(
        &mut self,
        model: &mut ProEmbModel,
        x: impl Into<Input<'a>>,
        eta: &Mat,
    ) -> Result<f64> {
        let (loss, g) = model.balance_objective(x, eta, self.config.lambda_rb)?;
        self.bal[0].step(&mut model.encoder, &g.encoder)?;
        self.bal[1].step(&mut model.mu_head, &g.mu_head)?;
        self.bal[2].step(&mut model.logvar_head, &g.logvar_head)?;
        Ok(loss)
    }
}

/// Per-epoch diagnostics. Losses are means over the epoch's minibatches
/// (epoch 0: the whole training set before any update).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub vae: VaeLoss,
    pub disc_loss: f64,
    /// `λ · L_rb`.
    pub balance_loss: f64,
    /// Held-out mean `|D(μ) − 1/2|` at the end of the epoch.
    pub holdout_imbalance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<EpochStats>,
    /// VAE loss on the whole training set before and after training, with the
    /// same frozen noise.
    pub initial_vae: VaeLoss,
    pub final_vae: VaeLoss,
    /// Discriminator and balance updates were skipped (single-class labels or
    /// adversarial training switched off).
    pub adversary_skipped: bool,
    pub holdout: Vec<usize>,
}

impl TrainReport {
    pub fn initial(&self) -> &EpochStats {
        &self.trace[0]
    }

    pub fn last(&self) -> &EpochStats {
        self.trace.last().expect("trace holds the initial entry")
    }
}

/// Trains `model` on standardized proxies `x` with discriminator labels.
pub fn train(
    model: &mut ProEmbModel,
    x: &SparseRows,
    labels: &[u8],
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<TrainReport> {
    config.validate()?;
    dims("train input width", model.input_dim(), x.cols())?;
    dims("train labels", x.rows(), labels.len())?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two rows to train on".into()));
    }
    let d = model.latent_dim();
    let labels_f: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    check_labels(&labels_f)?;

    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut rng.derive(6), &mut order);
    let n_hold = (libm::ceil((n as f64) * config.holdout_frac) as usize).min(n - 1);
    let (hold, fit) = order.split_at(n_hold);
    let mut holdout = hold.to_vec();
    holdout.sort_unstable();
    let mut fit_idx = fit.to_vec();
    fit_idx.sort_unstable();
    let monitor = if holdout.is_empty() { &fit_idx } else { &holdout };

    let positives = fit_idx.iter().filter(|&&i| labels[i] == 1).count();
    let negatives = fit_idx.len() - positives;
    let degenerate = positives == 0 || negatives == 0;
    if degenerate && config.adversarial {
        log::warn!(
            "discriminator labels are all {}; skipping adversarial updates",
            (positives > 0) as u8
        );
    }
    let adversarial = config.adversarial && !degenerate;

    let mut trainer = Trainer::new(model, config.clone());
    if config.balance_classes && adversarial {
        let m = fit_idx.len() as f64;
        trainer.set_class_weights([m / (2.0 * negatives as f64), m / (2.0 * positives as f64)]);
    }

    let x_fit = x.select_rows(&fit_idx);
    let x_mon = x.select_rows(monitor);
    let fit_labels: Vec<f64> = fit_idx.iter().map(|&i| labels_f[i]).collect();
    let eval_eta = standard_noise(fit_idx.len(), d, &mut rng.derive(5));
    let mut shuffle_rng = rng.derive(3);
    let mut noise_rng = rng.derive(4);

    let (initial_vae, initial) = evaluate(model, &trainer, &x_fit, &fit_labels, &eval_eta, &x_mon)?;
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(initial);
    let local: Vec<usize> = (0..fit_idx.len()).collect();
    for epoch in 1..=config.epochs {
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for batch in minibatches(&local, config.batch, &mut shuffle_rng) {
            let xb = x_fit.select_rows(&batch);
            let eta = standard_noise(batch.len(), d, &mut noise_rng);
            let (vae, zhat) = trainer.vae_step(model, &xb, &eta)?;
            sums[0] += vae.total;
            sums[1] += vae.recon;
            sums[2] += vae.kl;
            if adversarial {
                let yb: Vec<f64> = batch.iter().map(|&i| fit_labels[i]).collect();
                sums[3] += trainer.disc_step(model, &zhat, &yb)?;
                if config.lambda_rb > 0.0 {
                    sums[4] += trainer.balance_step(model, &xb, &eta)?;
                }
            }
            batches += 1;
        }
        let k = batches.max(1) as f64;
        trace.push(EpochStats {
            epoch,
            vae: VaeLoss {
                total: sums[0] / k,
                recon: sums[1] / k,
                kl: sums[2] / k,
            },
            disc_loss: sums[3] / k,
            balance_loss: sums[4] / k,
            holdout_imbalance: imbalance(model, &x_mon)?,
        });
    }
    if !model.encoder.is_finite() || !model.decoder.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "training diverged (lr = {})",
            config.lr
        )));
    }
    let (final_vae, _) = evaluate(model, &trainer, &x_fit, &fit_labels, &eval_eta, &x_mon)?;
    model.trained = true;
    Ok(TrainReport {
        trace,
        initial_vae,
        final_vae,
        adversary_skipped: !adversarial,
        holdout,
    })
}

/// Mean `|D(μ) − 1/2|` over the rows of `x`.
fn imbalance(model: &ProEmbModel, x: &SparseRows) -> Result<f64> {
    let mu = model.encode(x)?.0;
    let p = model.discriminate(&mu)?;
    Ok(p.iter().map(|v| (v - 0.5).abs()).sum::<f64>() / p.len().max(1) as f64)
}

fn evaluate(
    model: &ProEmbModel,
    trainer: &Trainer,
    x_fit: &SparseRows,
    labels: &[f64],
    eta: &Mat,
    x_mon: &SparseRows,
) -> Result<(VaeLoss, EpochStats)> {
    let (mu, lv) = model.encode(x_fit)?;
    let zhat = reparameterize(&mu, &lv, eta)?;
    let recon = model.decode(&zhat)?;
    let vae = vae_loss(&x_fit.to_dense(), &recon, &mu, &lv, trainer.config.recon)?;
    let p = model.discriminate(&zhat)?;
    let w = trainer.class_weights;
    let disc_loss = p
        .iter()
        .zip(labels)
        .map(|(&pi, &y)| (if y > 0.5 { w[1] } else { w[0] }) * bce(&[pi], &[y]))
        .sum::<f64>()
        / p.len().max(1) as f64;
    let stats = EpochStats {
        epoch: 0,
        vae,
        disc_loss,
        balance_loss: trainer.config.lambda_rb * balance_penalty(&p),
        holdout_imbalance: imbalance(model, x_mon)?,
    };
    Ok((vae, stats))
}
