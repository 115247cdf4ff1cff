//! Seeded experiments: for every run, simulate a panel, apply every configured
//! method and aggregate the estimates into an RMSE table.

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_ace, fit_naive_ols, fit_tlearner, fit_tsls, standardize_columns, BaseLearnerSpec,
    BoostParams, EstimateReport, MlpParams,
};
use crate::graphgen::{gen_dyads, gen_homophily_ba, EgoNetwork};
use crate::numerics::{sample_gaussian, Mat, RngStream};
use crate::proemb::{train, DiscLabel, ProEmbModel, ReconLoss, Standardizer, TrainConfig};
use crate::simdata::{
    apply_peer_activation, gen_baseline_activation, gen_confounders, gen_outcomes, gen_proxies,
    treatments, true_ace, Aggregation, ConfounderSet, OutcomeCoeffs, OutcomePanel, ProxyPanel,
};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Dyads,
    Network,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Lr,
    Gb,
    Mlp,
}

impl BaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lr => "lr",
            Self::Gb => "gb",
            Self::Mlp => "mlp",
        }
    }
}

/// An estimation method, written `oracle`, `zero`, `tsls`, `ols`,
/// `t-{lr,gb,mlp}` (raw proxies) or `pe-{lr,gb,mlp}` (ProEmb embeddings).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Reads the counterfactual outcomes.
    Oracle,
    /// Always estimates zero.
    Zero,
    Tsls,
    Ols,
    TLearner(BaseKind),
    ProEmb(BaseKind),
}

impl Method {
    pub fn is_proemb(self) -> bool {
        matches!(self, Self::ProEmb(_))
    }

    /// Base learner of the T-learner methods.
    pub fn base(self) -> Option<BaseKind> {
        match self {
            Self::TLearner(b) | Self::ProEmb(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Zero => f.write_str("zero"),
            Self::Tsls => f.write_str("tsls"),
            Self::Ols => f.write_str("ols"),
            Self::TLearner(b) => write!(f, "t-{}", b.as_str()),
            Self::ProEmb(b) => write!(f, "pe-{}", b.as_str()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let base = |b: &str| match b {
            "lr" => Some(BaseKind::Lr),
            "gb" => Some(BaseKind::Gb),
            "mlp" => Some(BaseKind::Mlp),
            _ => None,
        };
        let lower = s.trim().to_ascii_lowercase();
        let m = match lower.as_str() {
            "oracle" => Some(Self::Oracle),
            "zero" => Some(Self::Zero),
            "tsls" => Some(Self::Tsls),
            "ols" => Some(Self::Ols),
            other => match other.split_once('-') {
                Some(("t", b)) => base(b).map(Self::TLearner),
                Some(("pe", b)) => base(b).map(Self::ProEmb),
                _ => None,
            },
        };
        m.ok_or_else(|| Error::UnknownMethod(s.into()))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every knob of an experiment. Rendered as flat `key = value` pairs by
/// [`ExperimentConfig::entries`] and set by name with [`ExperimentConfig::set`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: String,
    pub seed: u64,
    pub runs: usize,
    pub n: usize,
    pub d: usize,
    pub vocab: usize,
    pub doc_len: usize,
    pub graph: GraphKind,
    pub m0: usize,
    pub m: usize,
    pub h: Aggregation,
    pub peer_activation: f64,
    pub tau: f64,
    pub beta_y: f64,
    pub beta_u_mean: f64,
    pub beta_u_var: f64,
    pub alpha_u_mean: f64,
    pub alpha_u_var: f64,
    pub noise_sd: f64,
    pub methods: Vec<Method>,
    pub sweep_dims: Vec<usize>,
    /// Embedding width for the ProEmb methods; 0 means `d`.
    pub embed_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lambda_rb: f64,
    pub recon: ReconLoss,
    pub disc_label: DiscLabel,
    pub balance_classes: bool,
    pub holdout_frac: f64,
    pub ridge: f64,
    pub tsls_ridge: f64,
    pub gb_trees: usize,
    pub gb_depth: usize,
    pub gb_shrinkage: f64,
    pub mlp_epochs: usize,
    pub mlp_lr: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let gb = BoostParams::default();
        let mlp = MlpParams::default();
        Self {
            setting: "default".into(),
            seed: 0,
            runs: 10,
            n: 2000,
            d: 20,
            vocab: crate::simdata::DEFAULT_VOCAB,
            doc_len: crate::simdata::DEFAULT_DOC_LEN,
            graph: GraphKind::Network,
            m0: 3,
            m: 3,
            h: Aggregation::Max,
            peer_activation: crate::simdata::DEFAULT_PEER_ACTIVATION,
            tau: 1.0,
            beta_y: crate::simdata::DEFAULT_BETA_Y,
            beta_u_mean: 0.0,
            beta_u_var: 3.0,
            alpha_u_mean: 0.0,
            alpha_u_var: 1.0,
            noise_sd: 1.0,
            methods: vec![
                Method::Tsls,
                Method::TLearner(BaseKind::Gb),
                Method::ProEmb(BaseKind::Gb),
            ],
            sweep_dims: vec![20, 100, 500, 2000],
            embed_dim: 0,
            lr: train.lr,
            epochs: train.epochs,
            batch: train.batch,
            lambda_rb: train.lambda_rb,
            recon: train.recon,
            disc_label: train.disc_label,
            balance_classes: train.balance_classes,
            holdout_frac: train.holdout_frac,
            ridge: crate::estimators::DEFAULT_RIDGE,
            tsls_ridge: 0.0,
            gb_trees: gb.trees,
            gb_depth: gb.depth,
            gb_shrinkage: gb.shrinkage,
            mlp_epochs: mlp.epochs,
            mlp_lr: mlp.lr,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value {value:?} for key {key:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad boolean {value:?} for key {key:?}"))),
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn split_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// All keys accepted by [`ExperimentConfig::set`], in rendering order.
    pub const KEYS: &'static [&'static str] = &[
        "setting", "seed", "runs", "n", "d", "vocab", "doc_len", "graph", "m0", "m", "h",
        "peer_activation", "tau", "beta_y", "beta_u_mean", "beta_u_var", "alpha_u_mean",
        "alpha_u_var", "noise_sd", "methods", "sweep_dims", "embed_dim", "lr", "epochs", "batch",
        "lambda_rb", "recon", "disc_label", "balance_classes", "holdout_frac", "ridge",
        "tsls_ridge", "gb_trees", "gb_depth", "gb_shrinkage", "mlp_epochs", "mlp_lr",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "setting" => self.setting = v.into(),
            "seed" => self.seed = parse(key, v)?,
            "runs" => self.runs = parse(key, v)?,
            "n" => self.n = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "vocab" => self.vocab = parse(key, v)?,
            "doc_len" => self.doc_len = parse(key, v)?,
            "graph" => {
                self.graph = match v {
                    "dyads" => GraphKind::Dyads,
                    "network" => GraphKind::Network,
                    _ => return Err(Error::InvalidParameter(format!("graph must be dyads or network, got {v:?}"))),
                }
            }
            "m0" => self.m0 = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "h" => {
                self.h = match v {
                    "max" => Aggregation::Max,
                    "mean" => Aggregation::Mean,
                    _ => return Err(Error::InvalidParameter(format!("h must be max or mean, got {v:?}"))),
                }
            }
            "peer_activation" => self.peer_activation = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "beta_y" => self.beta_y = parse(key, v)?,
            "beta_u_mean" => self.beta_u_mean = parse(key, v)?,
            "beta_u_var" => self.beta_u_var = parse(key, v)?,
            "alpha_u_mean" => self.alpha_u_mean = parse(key, v)?,
            "alpha_u_var" => self.alpha_u_var = parse(key, v)?,
            "noise_sd" => self.noise_sd = parse(key, v)?,
            "methods" => self.methods = split_list(key, v)?,
            "sweep_dims" => self.sweep_dims = split_list(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "lambda_rb" => self.lambda_rb = parse(key, v)?,
            "recon" => {
                self.recon = match v {
                    "node_sum" => ReconLoss::NodeSum,
                    "entry_mean" => ReconLoss::EntryMean,
                    _ => return Err(Error::InvalidParameter(format!("recon must be node_sum or entry_mean, got {v:?}"))),
                }
            }
            "disc_label" => {
                self.disc_label = match v {
                    "treatment" => DiscLabel::Treatment,
                    "own_previous" => DiscLabel::OwnPrevious,
                    _ => return Err(Error::InvalidParameter(format!("disc_label must be treatment or own_previous, got {v:?}"))),
                }
            }
            "balance_classes" => self.balance_classes = parse_bool(key, v)?,
            "holdout_frac" => self.holdout_frac = parse(key, v)?,
            "ridge" => self.ridge = parse(key, v)?,
            "tsls_ridge" => self.tsls_ridge = parse(key, v)?,
            "gb_trees" => self.gb_trees = parse(key, v)?,
            "gb_depth" => self.gb_depth = parse(key, v)?,
            "gb_shrinkage" => self.gb_shrinkage = parse(key, v)?,
            "mlp_epochs" => self.mlp_epochs = parse(key, v)?,
            "mlp_lr" => self.mlp_lr = parse(key, v)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in [`ExperimentConfig::KEYS`] order; feeding them
    /// back through [`ExperimentConfig::set`] reproduces the config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = |v: &dyn fmt::Display| v.to_string();
        let graph = match self.graph {
            GraphKind::Dyads => "dyads",
            GraphKind::Network => "network",
        };
        let h = match self.h {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        };
        let recon = match self.recon {
            ReconLoss::NodeSum => "node_sum",
            ReconLoss::EntryMean => "entry_mean",
        };
        let disc = match self.disc_label {
            DiscLabel::Treatment => "treatment",
            DiscLabel::OwnPrevious => "own_previous",
        };
        let values = [
            self.setting.clone(),
            s(&self.seed),
            s(&self.runs),
            s(&self.n),
            s(&self.d),
            s(&self.vocab),
            s(&self.doc_len),
            graph.into(),
            s(&self.m0),
            s(&self.m),
            h.into(),
            s(&self.peer_activation),
            s(&self.tau),
            s(&self.beta_y),
            s(&self.beta_u_mean),
            s(&self.beta_u_var),
            s(&self.alpha_u_mean),
            s(&self.alpha_u_var),
            s(&self.noise_sd),
            join(&self.methods),
            join(&self.sweep_dims),
            s(&self.embed_dim),
            s(&self.lr),
            s(&self.epochs),
            s(&self.batch),
            s(&self.lambda_rb),
            recon.into(),
            disc.into(),
            s(&self.balance_classes),
            s(&self.holdout_frac),
            s(&self.ridge),
            s(&self.tsls_ridge),
            s(&self.gb_trees),
            s(&self.gb_depth),
            s(&self.gb_shrinkage),
            s(&self.mlp_epochs),
            s(&self.mlp_lr),
        ];
        Self::KEYS.iter().copied().zip(values).collect()
    }

    /// FNV-1a digest of the rendered entries, as 16 hex digits.
    pub fn digest(&self) -> String {
        let mut h = Fnv::new();
        for (k, v) in self.entries() {
            h.bytes(k.as_bytes());
            h.bytes(b"=");
            h.bytes(v.as_bytes());
            h.bytes(b"\n");
        }
        h.hex()
    }

    pub fn embedding_dim(&self) -> usize {
        if self.embed_dim == 0 {
            self.d
        } else {
            self.embed_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.n < 2 || self.d < 2 {
            return bad("n and d must be >= 2".into());
        }
        if self.vocab < self.d {
            return bad(format!("vocab ({}) must be >= d ({})", self.vocab, self.d));
        }
        if self.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if self.sweep_dims.contains(&0) {
            return bad("sweep dims must be >= 1".into());
        }
        if !(self.beta_u_var >= 0.0 && self.alpha_u_var >= 0.0 && self.noise_sd >= 0.0) {
            return bad("variances must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.peer_activation) {
            return bad("peer_activation must lie in [0, 1]".into());
        }
        self.train_config(self.embedding_dim()).validate()?;
        for b in [BaseKind::Lr, BaseKind::Gb, BaseKind::Mlp] {
            self.base_spec(b).validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, latent_dim: usize) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            lambda_rb: self.lambda_rb,
            batch: self.batch,
            latent_dim,
            recon: self.recon,
            disc_label: self.disc_label,
            balance_classes: self.balance_classes,
            holdout_frac: self.holdout_frac,
            ..TrainConfig::default()
        }
    }

    pub fn base_spec(&self, base: BaseKind) -> BaseLearnerSpec {
        match base {
            BaseKind::Lr => BaseLearnerSpec::LinearRidge { ridge: self.ridge },
            BaseKind::Gb => BaseLearnerSpec::GradBoost(BoostParams {
                trees: self.gb_trees,
                depth: self.gb_depth,
                shrinkage: self.gb_shrinkage,
            }),
            BaseKind::Mlp => BaseLearnerSpec::Mlp(MlpParams {
                epochs: self.mlp_epochs,
                lr: self.mlp_lr,
                ..MlpParams::default()
            }),
        }
    }
}

/// 64-bit FNV-1a.
#[derive(Clone, Copy, Debug)]
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    pub fn bytes(&mut self, b: &[u8]) {
        for &x in b {
            self.0 ^= x as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.bytes(&x.to_bits().to_le_bytes());
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

fn tag(name: &str) -> u64 {
    let mut h = Fnv::new();
    h.bytes(name.as_bytes());
    h.finish()
}

/// One simulated dataset.
#[derive(Clone, Debug)]
pub struct Panel {
    /// Known for simulated panels, absent for panels read back from files.
    pub confounders: Option<ConfounderSet>,
    pub graph: EgoNetwork,
    pub proxies: ProxyPanel,
    pub outcomes: OutcomePanel,
}

impl Panel {
    /// FNV-1a digest over graph, proxies and outcomes.
    pub fn digest(&self) -> String {
        let mut h = Fnv::new();
        for (a, b) in self.graph.edges() {
            h.bytes(&(a as u64).to_le_bytes());
            h.bytes(&(b as u64).to_le_bytes());
        }
        h.f64s(self.proxies.z.data());
        h.bytes(&self.outcomes.treat);
        h.bytes(&self.outcomes.y_prev);
        h.f64s(&self.outcomes.y_fact);
        h.f64s(&self.outcomes.y_cf);
        h.hex()
    }
}

/// The random stream of run `run` under the config's master seed.
pub fn run_stream(config: &ExperimentConfig, run: usize) -> RngStream {
    RngStream::new(config.seed, run as u64)
}

fn gaussian_vec(len: usize, mean: f64, var: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    (0..len).map(|_| sample_gaussian(rng, mean, var)).collect()
}

/// Simulates the panel of run `run`.
pub fn generate_panel(config: &ExperimentConfig, run: usize) -> Result<Panel> {
    let rng = run_stream(config, run);
    let conf = gen_confounders(config.n, config.d, &mut rng.derive(tag("confounders")))?;
    let mut graph_rng = rng.derive(tag("graph"));
    let graph = match config.graph {
        GraphKind::Dyads => gen_dyads(&conf.u, &mut graph_rng)?,
        GraphKind::Network => gen_homophily_ba(&conf.u, config.m0, config.m, &mut graph_rng)?,
    };
    let mut coef_rng = rng.derive(tag("coefficients"));
    let alpha_u = gaussian_vec(config.d, config.alpha_u_mean, config.alpha_u_var, &mut coef_rng)?;
    let beta_u = gaussian_vec(config.d, config.beta_u_mean, config.beta_u_var, &mut coef_rng)?;
    let mut act_rng = rng.derive(tag("activation"));
    let mut y_prev = gen_baseline_activation(&conf, &alpha_u, 1.0, &mut act_rng)?;
    if config.graph == GraphKind::Network && config.peer_activation > 0.0 {
        y_prev = apply_peer_activation(&graph, &y_prev, config.peer_activation, &mut act_rng)?;
    }
    let treat = treatments(&graph, &y_prev, config.h)?;
    let proxies = gen_proxies(&conf, &graph, config.vocab, config.doc_len, &mut rng.derive(tag("proxies")))?;
    let coeffs = OutcomeCoeffs {
        alpha_u,
        beta_u,
        beta_y: config.beta_y,
    };
    let outcomes = gen_outcomes(
        &conf,
        &y_prev,
        &treat,
        &coeffs,
        config.tau,
        config.noise_sd,
        &mut rng.derive(tag("outcomes")),
    )?;
    Ok(Panel {
        confounders: Some(conf),
        graph,
        proxies,
        outcomes,
    })
}

/// A trained ProEmb model with the embeddings of every node.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub model: ProEmbModel,
    pub standardizer: Standardizer,
    pub report: crate::proemb::TrainReport,
    pub mu: Mat,
}

/// Trains ProEmb with `latent_dim` on the panel's proxies and embeds every node.
pub fn fit_embedding(config: &ExperimentConfig, panel: &Panel, run: usize, latent_dim: usize) -> Result<Embedding> {
    let vocab2 = 2 * panel.proxies.vocab();
    if latent_dim == 0 || latent_dim > vocab2 {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension {latent_dim} outside 1..={vocab2}"
        )));
    }
    let raw = panel.proxies.ztilde_sparse();
    let standardizer = Standardizer::fit(&raw);
    let x = standardizer.apply(&raw)?;
    let tc = config.train_config(latent_dim);
    let labels = match tc.disc_label {
        DiscLabel::Treatment => &panel.outcomes.treat,
        DiscLabel::OwnPrevious => &panel.outcomes.y_prev,
    };
    let rng = run_stream(config, run).derive(tag("proemb"));
    let mut model = ProEmbModel::new(x.cols(), &tc, &rng)?;
    let report = train(&mut model, &x, labels, &tc, &rng)?;
    let mu = model.embed(&x)?;
    Ok(Embedding {
        model,
        standardizer,
        report,
        mu,
    })
}

/// Full result of one method on one panel.
#[derive(Clone, Debug)]
pub struct Detailed {
    pub report: EstimateReport,
    /// Present for the `pe-*` methods.
    pub embedding: Option<Embedding>,
}

/// Runs `method` on `panel` and returns its report with per-node effects
/// where the method produces them.
pub fn estimate_detailed(config: &ExperimentConfig, panel: &Panel, run: usize, method: Method) -> Result<Detailed> {
    let out = &panel.outcomes;
    let n = out.n();
    let vocab = panel.proxies.vocab();
    let rng = run_stream(config, run).derive(tag(&method.to_string()));
    let mut embedding = None;
    let mut report = match method {
        Method::Oracle => {
            let ite: Vec<f64> = (0..n).map(|i| out.y1(i) - out.y0(i)).collect();
            let mut r = EstimateReport::scalar("oracle", true_ace(out), n, 0);
            r.ite = ite;
            r
        }
        Method::Zero => EstimateReport::scalar("zero", 0.0, n, 0),
        Method::Tsls => {
            let fit = fit_tsls(&out.y_fact, &out.treat, &panel.proxies.z, &panel.proxies.zngb, config.tsls_ridge)?;
            EstimateReport::scalar("tsls", fit.theta, n, vocab)
        }
        Method::Ols => {
            let theta = fit_naive_ols(&out.y_fact, &out.treat, &panel.proxies.z, config.tsls_ridge)?;
            EstimateReport::scalar("ols", theta, n, vocab)
        }
        Method::TLearner(b) => {
            let x = standardize_columns(&panel.proxies.ztilde());
            let model = fit_tlearner(&x, &out.treat, &out.y_fact, &config.base_spec(b), &rng)?;
            estimate_ace(&model, &x)?
        }
        Method::ProEmb(b) => {
            let emb = fit_embedding(config, panel, run, config.embedding_dim())?;
            let r = embedding_report(config, panel, run, b, &emb.mu)?;
            embedding = Some(emb);
            r
        }
    };
    report.method = method.to_string();
    report.seed = config.seed;
    report.config_digest = config.digest();
    Ok(Detailed { report, embedding })
}

/// Point estimate of one method on a panel.
pub fn estimate(config: &ExperimentConfig, panel: &Panel, run: usize, method: Method) -> Result<f64> {
    Ok(estimate_detailed(config, panel, run, method)?.report.ace_hat)
}

fn embedding_report(config: &ExperimentConfig, panel: &Panel, run: usize, base: BaseKind, mu: &Mat) -> Result<EstimateReport> {
    let out = &panel.outcomes;
    let rng = run_stream(config, run).derive(tag(&Method::ProEmb(base).to_string()));
    let model = fit_tlearner(mu, &out.treat, &out.y_fact, &config.base_spec(base), &rng)?;
    estimate_ace(&model, mu)
}

/// T-learner estimate on precomputed embeddings.
pub fn estimate_on_embedding(config: &ExperimentConfig, panel: &Panel, run: usize, base: BaseKind, mu: &Mat) -> Result<f64> {
    Ok(embedding_report(config, panel, run, base, mu)?.ace_hat)
}

/// Estimates of every configured method on run `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub digest: String,
    pub estimates: Vec<(Method, core::result::Result<f64, String>)>,
}

/// Runs every configured method on one simulated panel. ProEmb is trained
/// once and shared by all `pe-*` methods.
pub fn run_single(config: &ExperimentConfig, run: usize) -> Result<RunResult> {
    let panel = generate_panel(config, run)?;
    let digest = panel.digest();
    let mut embedding: Option<core::result::Result<Mat, String>> = None;
    let mut estimates = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let est = match method {
            Method::ProEmb(b) => {
                let mu = embedding.get_or_insert_with(|| {
                    fit_embedding(config, &panel, run, config.embedding_dim())
                        .map(|e| e.mu)
                        .map_err(|e| e.to_string())
                });
                match mu {
                    Ok(mu) => estimate_on_embedding(config, &panel, run, b, mu).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                }
            }
            m => estimate(config, &panel, run, m).map_err(|e| e.to_string()),
        };
        if let Err(e) = &est {
            log::warn!("run {run}: {method} failed: {e}");
        }
        estimates.push((method, est));
    }
    Ok(RunResult { run, digest, estimates })
}

/// Aggregate of one method under one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub setting: String,
    /// `None` when no run succeeded.
    pub rmse: Option<f64>,
    pub mean: Option<f64>,
    /// Population standard deviation of the estimates, so `rmse² = bias² + std²`.
    pub std: Option<f64>,
    /// Per-run estimates; `None` marks a failed run.
    pub estimates: Vec<Option<f64>>,
}

impl MethodSummary {
    pub fn from_estimates(method: Method, setting: &str, tau: f64, estimates: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let (rmse, mean, std) = if ok.is_empty() {
            (None, None, None)
        } else {
            let k = ok.len() as f64;
            let mse = ok.iter().map(|e| (e - tau) * (e - tau)).sum::<f64>() / k;
            let mean = ok.iter().sum::<f64>() / k;
            let var = ok.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / k;
            (Some(libm::sqrt(mse)), Some(mean), Some(libm::sqrt(var)))
        };
        Self {
            method,
            setting: setting.into(),
            rmse,
            mean,
            std,
            estimates,
        }
    }

    pub fn successes(&self) -> usize {
        self.estimates.iter().flatten().count()
    }

    /// Every run produced an estimate.
    pub fn complete(&self) -> bool {
        self.successes() == self.estimates.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub setting: String,
    pub run: usize,
    pub digest: String,
}

/// RMSE of every (method, setting) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseTable {
    pub tau: f64,
    pub settings: Vec<String>,
    pub rows: Vec<MethodSummary>,
    pub digests: Vec<RunDigest>,
    pub config_digest: String,
}

impl RmseTable {
    pub fn get(&self, method: Method, setting: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method && r.setting == setting)
    }

    /// Distinct methods in first-seen order.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    /// Appends the settings of `other`; the config digest becomes a digest of both.
    pub fn merge(&mut self, other: RmseTable) -> Result<()> {
        if self.tau != other.tau {
            return Err(Error::InvalidParameter("cannot merge tables with different tau".into()));
        }
        if let Some(s) = other.settings.iter().find(|s| self.settings.contains(s)) {
            return Err(Error::InvalidParameter(format!("setting {s:?} present in both tables")));
        }
        self.settings.extend(other.settings);
        self.rows.extend(other.rows);
        self.digests.extend(other.digests);
        let mut h = Fnv::new();
        h.bytes(self.config_digest.as_bytes());
        h.bytes(other.config_digest.as_bytes());
        self.config_digest = h.hex();
        Ok(())
    }
}

/// Runs `config.runs` seeded runs and aggregates every method.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RmseTable> {
    config.validate()?;
    let mut per_method: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(config.runs); config.methods.len()];
    let mut digests = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        log::info!("{}: run {}/{}", config.setting, run + 1, config.runs);
        let res = run_single(config, run)?;
        for (slot, (_, est)) in per_method.iter_mut().zip(res.estimates) {
            slot.push(est.ok());
        }
        digests.push(RunDigest {
            setting: config.setting.clone(),
            run,
            digest: res.digest,
        });
    }
    let rows = config
        .methods
        .iter()
        .zip(per_method)
        .map(|(&m, est)| MethodSummary::from_estimates(m, &config.setting, config.tau, est))
        .collect();
    Ok(RmseTable {
        tau: config.tau,
        settings: vec![config.setting.clone()],
        rows,
        digests,
        config_digest: config.digest(),
    })
}

/// Setting label of an embedding-dimension sweep column.
pub fn dim_setting(dim: usize) -> String {
    format!("dim={dim}")
}

/// Retrains ProEmb at every dimension on the same panels. Rows cover the
/// configured `pe-*` methods (`pe-gb` if none is configured), one setting per
/// dimension.
pub fn sweep_embedding_dim(config: &ExperimentConfig, dims: &[usize]) -> Result<RmseTable> {
    config.validate()?;
    if dims.is_empty() {
        return Err(Error::InvalidParameter("no sweep dimensions".into()));
    }
    let max = 2 * config.vocab;
    if let Some(&bad) = dims.iter().find(|&&d| d == 0 || d > max) {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension {bad} outside 1..={max}"
        )));
    }
    let mut bases: Vec<BaseKind> = config
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::ProEmb(b) => Some(*b),
            _ => None,
        })
        .collect();
    if bases.is_empty() {
        bases.push(BaseKind::Gb);
    }
    // estimates[dim][base][run]
    let mut est = vec![vec![Vec::with_capacity(config.runs); bases.len()]; dims.len()];
    let mut digests = Vec::new();
    for run in 0..config.runs {
        let panel = generate_panel(config, run)?;
        let digest = panel.digest();
        for (di, &dim) in dims.iter().enumerate() {
            log::info!("sweep: run {}/{}, dim {dim}", run + 1, config.runs);
            let emb = fit_embedding(config, &panel, run, dim);
            for (bi, &b) in bases.iter().enumerate() {
                let e = match &emb {
                    Ok(emb) => estimate_on_embedding(config, &panel, run, b, &emb.mu),
                    Err(e) => Err(e.clone()),
                };
                if let Err(e) = &e {
                    log::warn!("sweep run {run} dim {dim}: {} failed: {e}", Method::ProEmb(b));
                }
                est[di][bi].push(e.ok());
            }
            digests.push(RunDigest {
                setting: dim_setting(dim),
                run,
                digest: digest.clone(),
            });
        }
    }
    let mut rows = Vec::new();
    for (di, &dim) in dims.iter().enumerate() {
        for (bi, &b) in bases.iter().enumerate() {
            rows.push(MethodSummary::from_estimates(
                Method::ProEmb(b),
                &dim_setting(dim),
                config.tau,
                core::mem::take(&mut est[di][bi]),
            ));
        }
    }
    Ok(RmseTable {
        tau: config.tau,
        settings: dims.iter().map(|&d| dim_setting(d)).collect(),
        rows,
        digests,
        config_digest: config.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            runs: 2,
            n: 40,
            d: 3,
            vocab: 12,
            doc_len: 20,
            epochs: 2,
            gb_trees: 5,
            methods: vec![Method::Oracle, Method::Zero, Method::Tsls, Method::ProEmb(BaseKind::Lr)],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_tags_round_trip() {
        for s in ["oracle", "zero", "tsls", "ols", "t-lr", "t-gb", "t-mlp", "pe-lr", "pe-gb", "pe-mlp"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!(matches!("pe-xx".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn entries_round_trip() {
        let mut c = tiny();
        c.h = Aggregation::Mean;
        c.graph = GraphKind::Dyads;
        c.beta_u_mean = 5.0;
        let mut back = ExperimentConfig::default();
        for (k, v) in c.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert!(back.set("bogus", "1").is_err());
    }

    #[test]
    fn oracle_and_zero_rows() {
        let t = run_experiment(&tiny()).unwrap();
        let oracle = t.get(Method::Oracle, "default").unwrap();
        assert!(oracle.rmse.unwrap() < 1e-12);
        let zero = t.get(Method::Zero, "default").unwrap();
        assert_eq!(zero.rmse, Some(1.0));
        for r in &t.rows {
            if let (Some(rmse), Some(mean)) = (r.rmse, r.mean) {
                assert!(rmse + 1e-12 >= (mean - t.tau).abs());
            }
        }
    }

    #[test]
    fn single_dim_sweep_matches_experiment() {
        let c = tiny();
        let table = run_experiment(&c).unwrap();
        let sweep = sweep_embedding_dim(&c, &[c.d]).unwrap();
        let m = Method::ProEmb(BaseKind::Lr);
        assert_eq!(
            table.get(m, "default").unwrap().estimates,
            sweep.get(m, &dim_setting(c.d)).unwrap().estimates
        );
        assert!(sweep_embedding_dim(&c, &[2 * c.vocab + 1]).is_err());
    }
}
