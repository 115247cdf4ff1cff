//! Semi-synthetic panels with known contagion effect.
//!
//! Latent topic mixtures play the unobserved homophilic attributes. Each node
//! "writes" a bag-of-words document from its mixture, giving a sparse count
//! proxy; the neighbor-averaged counts give the second proxy. Outcomes at two
//! time steps follow a linear model with shared noise across the two
//! potential outcomes, so the true average effect is exactly `tau`.

use crate::error::{dims, Error, Result};
use crate::graphgen::EgoNetwork;
use crate::numerics::{
    dot, sample_bernoulli, sample_dirichlet, sample_gaussian, sample_multinomial,
    sample_poisson, sigmoid, tol, Mat, RngStream, SparseRows,
};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub const TOPIC_CONCENTRATION: f64 = 0.1;
pub const WORD_CONCENTRATION: f64 = 0.01;
pub const DEFAULT_VOCAB: usize = 2000;
pub const DEFAULT_DOC_LEN: usize = 50;
pub const DEFAULT_PEER_ACTIVATION: f64 = 0.3;
pub const DEFAULT_BETA_Y: f64 = 0.2;

/// Per-node latent topic proportions (rows on the simplex).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSet {
    pub u: Mat,
}

impl ConfounderSet {
    pub fn new(u: Mat) -> Result<Self> {
        for (i, r) in u.iter_rows().enumerate() {
            let s: f64 = r.iter().sum();
            if r.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > tol::SIMPLEX {
                return Err(Error::InvalidParameter(format!(
                    "confounder row {i} is not a probability vector"
                )));
            }
        }
        Ok(Self { u })
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    pub fn d(&self) -> usize {
        self.u.cols()
    }
}

pub fn gen_confounders(n: usize, d: usize, rng: &mut RngStream) -> Result<ConfounderSet> {
    gen_confounders_with(n, d, TOPIC_CONCENTRATION, rng)
}

/// Rows drawn from a symmetric `Dirichlet(concentration)`.
pub fn gen_confounders_with(
    n: usize,
    d: usize,
    concentration: f64,
    rng: &mut RngStream,
) -> Result<ConfounderSet> {
    if n < 2 || d < 2 {
        return Err(Error::InvalidParameter(format!(
            "confounders need n >= 2 and d >= 2, got n={n}, d={d}"
        )));
    }
    let alpha = vec![concentration; d];
    let mut u = Mat::zeros(n, d);
    for i in 0..n {
        let row = sample_dirichlet(rng, &alpha)?;
        u.row_mut(i).copy_from_slice(&row);
    }
    Ok(ConfounderSet { u })
}

/// Negative-control proxies: own word counts and the neighbor-averaged counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyPanel {
    /// `n × V` word counts of each node's own document.
    pub z: Mat,
    /// `n × V` mean of the neighbors' rows of `z`.
    pub zngb: Mat,
}

impl ProxyPanel {
    /// Builds the panel from counts, deriving the neighbor means from `g`.
    pub fn from_counts(z: Mat, g: &EgoNetwork) -> Result<Self> {
        let zngb = neighbor_mean(&z, g)?;
        Ok(Self { z, zngb })
    }

    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn vocab(&self) -> usize {
        self.z.cols()
    }

    /// `[Z | Zngb]`, `n × 2V`.
    pub fn ztilde(&self) -> Mat {
        Mat::hcat(&[&self.z, &self.zngb]).expect("proxy blocks share row count")
    }

    /// `[Z | Zngb]` in sparse form.
    pub fn ztilde_sparse(&self) -> SparseRows {
        SparseRows::from_dense(&self.ztilde())
    }
}

/// Row `i` of the result is the arithmetic mean of `z` over the neighbors of `i`.
pub fn neighbor_mean(z: &Mat, g: &EgoNetwork) -> Result<Mat> {
    dims("neighbor_mean", g.n(), z.rows())?;
    let mut out = Mat::zeros(z.rows(), z.cols());
    for i in 0..g.n() {
        let nb = g.neighbors(i);
        if nb.is_empty() {
            return Err(Error::IsolatedNode(i));
        }
        let row = out.row_mut(i);
        for &j in nb {
            for (a, b) in row.iter_mut().zip(z.row(j)) {
                *a += b;
            }
        }
        let k = nb.len() as f64;
        row.iter_mut().for_each(|a| *a /= k);
    }
    Ok(out)
}

/// Topic–word matrix `Φ` (`d × V`), rows drawn from `Dirichlet(0.01)`.
pub fn gen_topic_words(d: usize, vocab: usize, rng: &mut RngStream) -> Result<Mat> {
    let alpha = vec![WORD_CONCENTRATION; vocab];
    let mut phi = Mat::zeros(d, vocab);
    for k in 0..d {
        let row = sample_dirichlet(rng, &alpha)?;
        phi.row_mut(k).copy_from_slice(&row);
    }
    Ok(phi)
}

/// Draws a fresh topic–word matrix, then documents from it.
pub fn gen_proxies(
    conf: &ConfounderSet,
    g: &EgoNetwork,
    vocab: usize,
    doc_len: usize,
    rng: &mut RngStream,
) -> Result<ProxyPanel> {
    if vocab < conf.d() {
        return Err(Error::InvalidParameter(format!(
            "vocabulary ({vocab}) smaller than latent dimension ({})",
            conf.d()
        )));
    }
    let phi = gen_topic_words(conf.d(), vocab, rng)?;
    gen_proxies_from_topics(conf, g, &phi, doc_len, rng)
}

/// Document of node `i`: length `Poisson(doc_len)`, words `Multinomial(Φᵀ U_i)`.
pub fn gen_proxies_from_topics(
    conf: &ConfounderSet,
    g: &EgoNetwork,
    phi: &Mat,
    doc_len: usize,
    rng: &mut RngStream,
) -> Result<ProxyPanel> {
    dims("gen_proxies topics", conf.d(), phi.rows())?;
    dims("gen_proxies nodes", conf.n(), g.n())?;
    if let Some(i) = (0..g.n()).find(|&i| g.degree(i) == 0) {
        return Err(Error::IsolatedNode(i));
    }
    let vocab = phi.cols();
    let mut z = Mat::zeros(conf.n(), vocab);
    let mut p = vec![0.0; vocab];
    for i in 0..conf.n() {
        p.iter_mut().for_each(|x| *x = 0.0);
        for (k, &w) in conf.u.row(i).iter().enumerate() {
            if w > 0.0 {
                for (a, b) in p.iter_mut().zip(phi.row(k)) {
                    *a += w * b;
                }
            }
        }
        let len = sample_poisson(rng, doc_len as f64)?;
        let counts = sample_multinomial(rng, len, &p)?;
        for (a, c) in z.row_mut(i).iter_mut().zip(counts) {
            *a = c as f64;
        }
    }
    ProxyPanel::from_counts(z, g)
}

/// Previous-step activations `Bernoulli(sigmoid(α·U_i + ε))`, `ε ~ N(0, noise_sd²)`.
pub fn gen_baseline_activation(
    conf: &ConfounderSet,
    alpha_u: &[f64],
    noise_sd: f64,
    rng: &mut RngStream,
) -> Result<Vec<u8>> {
    dims("gen_baseline_activation", conf.d(), alpha_u.len())?;
    let var = noise_sd * noise_sd;
    conf.u
        .iter_rows()
        .map(|r| {
            let eps = sample_gaussian(rng, 0.0, var)?;
            let p = sigmoid(dot(alpha_u, r) + eps);
            Ok(sample_bernoulli(rng, p)? as u8)
        })
        .collect()
}

/// One synchronous pass: every inactive node with at least one active
/// neighbor becomes active with probability `p`.
pub fn apply_peer_activation(
    g: &EgoNetwork,
    y_prev: &[u8],
    p: f64,
    rng: &mut RngStream,
) -> Result<Vec<u8>> {
    dims("apply_peer_activation", g.n(), y_prev.len())?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "peer activation probability must lie in [0, 1], got {p}"
        )));
    }
    let mut out = y_prev.to_vec();
    for i in 0..g.n() {
        if y_prev[i] == 0 && g.neighbors(i).iter().any(|&j| y_prev[j] == 1) {
            out[i] = sample_bernoulli(rng, p)? as u8;
        }
    }
    Ok(out)
}

/// Maps neighbors' binary activations to the ego's binary treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Treated iff any neighbor is active.
    Max,
    /// Treated iff strictly more than half the neighbors are active.
    Mean,
}

pub fn h_max(neighbor_outcomes: &[u8]) -> Result<u8> {
    if neighbor_outcomes.is_empty() {
        return Err(Error::DegenerateInput("h over an empty neighborhood".into()));
    }
    Ok(neighbor_outcomes.iter().any(|&y| y == 1) as u8)
}

pub fn h_mean(neighbor_outcomes: &[u8]) -> Result<u8> {
    if neighbor_outcomes.is_empty() {
        return Err(Error::DegenerateInput("h over an empty neighborhood".into()));
    }
    let active = neighbor_outcomes.iter().filter(|&&y| y == 1).count();
    // mean > 0.5  ⇔  2·active > k
    Ok((2 * active > neighbor_outcomes.len()) as u8)
}

impl Aggregation {
    pub fn apply(self, neighbor_outcomes: &[u8]) -> Result<u8> {
        match self {
            Aggregation::Max => h_max(neighbor_outcomes),
            Aggregation::Mean => h_mean(neighbor_outcomes),
        }
    }
}

/// `T_i = h(Y_ngb)` for every node.
pub fn treatments(g: &EgoNetwork, y_prev: &[u8], h: Aggregation) -> Result<Vec<u8>> {
    dims("treatments", g.n(), y_prev.len())?;
    let mut buf = Vec::new();
    (0..g.n())
        .map(|i| {
            buf.clear();
            buf.extend(g.neighbors(i).iter().map(|&j| y_prev[j]));
            h.apply(&buf).map_err(|_| Error::IsolatedNode(i))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCoeffs {
    pub alpha_u: Vec<f64>,
    pub beta_u: Vec<f64>,
    pub beta_y: f64,
}

/// Observed and counterfactual outcomes with ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomePanel {
    pub y_prev: Vec<u8>,
    pub treat: Vec<u8>,
    pub y_fact: Vec<f64>,
    pub y_cf: Vec<f64>,
    pub tau: f64,
    pub coeffs: OutcomeCoeffs,
}

impl OutcomePanel {
    pub fn n(&self) -> usize {
        self.treat.len()
    }

    /// Outcome under treatment for node `i`.
    pub fn y1(&self, i: usize) -> f64 {
        if self.treat[i] == 1 {
            self.y_fact[i]
        } else {
            self.y_cf[i]
        }
    }

    pub fn y0(&self, i: usize) -> f64 {
        if self.treat[i] == 1 {
            self.y_cf[i]
        } else {
            self.y_fact[i]
        }
    }
}

/// `Y^F = β_u·U + β_y Y_prev + τ T + ε` and `Y^CF` with `1 − T`, sharing `ε`.
pub fn gen_outcomes(
    conf: &ConfounderSet,
    y_prev: &[u8],
    treat: &[u8],
    coeffs: &OutcomeCoeffs,
    tau: f64,
    noise_sd: f64,
    rng: &mut RngStream,
) -> Result<OutcomePanel> {
    let n = conf.n();
    dims("gen_outcomes y_prev", n, y_prev.len())?;
    dims("gen_outcomes treat", n, treat.len())?;
    dims("gen_outcomes beta_u", conf.d(), coeffs.beta_u.len())?;
    if treat.iter().chain(y_prev).any(|&t| t > 1) {
        return Err(Error::InvalidParameter("binary vectors must hold 0/1".into()));
    }
    let var = noise_sd * noise_sd;
    let mut y_fact = Vec::with_capacity(n);
    let mut y_cf = Vec::with_capacity(n);
    for i in 0..n {
        let eps = sample_gaussian(rng, 0.0, var)?;
        let base = dot(&coeffs.beta_u, conf.u.row(i)) + coeffs.beta_y * y_prev[i] as f64 + eps;
        let t = treat[i] as f64;
        y_fact.push(base + tau * t);
        y_cf.push(base + tau * (1.0 - t));
    }
    Ok(OutcomePanel {
        y_prev: y_prev.to_vec(),
        treat: treat.to_vec(),
        y_fact,
        y_cf,
        tau,
        coeffs: coeffs.clone(),
    })
}

/// Average over nodes of `Y(T=1) − Y(T=0)`.
pub fn true_ace(panel: &OutcomePanel) -> f64 {
    let n = panel.n();
    if n == 0 {
        return 0.0;
    }
    (0..n).map(|i| panel.y1(i) - panel.y0(i)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{gen_dyads, GraphModel};

    fn star(leaves: usize) -> EgoNetwork {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        EgoNetwork::from_edges(leaves + 1, &edges, GraphModel::HomophilyBa { m0: 1, m: 1 }).unwrap()
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_max(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(h_mean(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(h_max(&[0, 1, 0]).unwrap(), 1);
        assert_eq!(h_mean(&[0, 1, 0]).unwrap(), 0);
        assert_eq!(h_max(&[1, 1]).unwrap(), 1);
        assert_eq!(h_mean(&[1, 1]).unwrap(), 1);
        assert_eq!(h_mean(&[1, 0]).unwrap(), 0);
        assert!(h_max(&[]).is_err());
        assert!(h_mean(&[]).is_err());
    }

    #[test]
    fn confounders_on_simplex() {
        let c = gen_confounders(50, 2, &mut RngStream::new(0, 0)).unwrap();
        for r in c.u.iter_rows() {
            assert!(r.iter().all(|&x| x >= 0.0));
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(gen_confounders(1, 5, &mut RngStream::new(0, 0)).is_err());
        assert!(gen_confounders(5, 1, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn degenerate_topic_puts_all_mass_on_one_word() {
        let u = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let conf = ConfounderSet::new(u.clone()).unwrap();
        let g = gen_dyads(&u, &mut RngStream::new(0, 0)).unwrap();
        let phi = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let p = gen_proxies_from_topics(&conf, &g, &phi, 30, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(p.z.get(0, 0), 0.0);
        assert_eq!(p.z.get(0, 1), 0.0);
        assert!(p.z.get(0, 2) > 0.0);
        // dyad: the neighbor mean is the partner's row
        assert_eq!(p.zngb.row(0), p.z.row(1));
        assert_eq!(p.zngb.row(1), p.z.row(0));
        let zt = p.ztilde();
        assert_eq!(zt.cols(), 6);
        assert_eq!(&zt.row(1)[3..], p.z.row(0));
    }

    #[test]
    fn isolated_node_rejected() {
        let u = Mat::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        let conf = ConfounderSet::new(u).unwrap();
        let g = EgoNetwork::from_edges(3, &[(0, 1)], GraphModel::Dyadic).unwrap();
        let err = gen_proxies(&conf, &g, 5, 10, &mut RngStream::new(0, 0)).unwrap_err();
        assert_eq!(err, Error::IsolatedNode(2));
    }

    #[test]
    fn activation_saturates() {
        let conf = gen_confounders(200, 4, &mut RngStream::new(0, 0)).unwrap();
        let y = gen_baseline_activation(&conf, &[50.0; 4], 0.0, &mut RngStream::new(1, 0)).unwrap();
        assert!(y.iter().all(|&v| v == 1));
        assert!(gen_baseline_activation(&conf, &[1.0; 3], 1.0, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn peer_activation_edges() {
        let g = star(5);
        let y = [1, 0, 0, 0, 0, 0];
        let mut r = RngStream::new(0, 0);
        assert_eq!(apply_peer_activation(&g, &y, 0.0, &mut r).unwrap(), y.to_vec());
        assert_eq!(apply_peer_activation(&g, &y, 1.0, &mut r).unwrap(), vec![1; 6]);
        // nobody active: nothing can flip
        let quiet = [0u8; 6];
        assert_eq!(apply_peer_activation(&g, &quiet, 1.0, &mut r).unwrap(), quiet.to_vec());
        assert!(apply_peer_activation(&g, &y, 1.5, &mut r).is_err());
    }

    fn coeffs(d: usize, bu: f64, by: f64) -> OutcomeCoeffs {
        OutcomeCoeffs {
            alpha_u: vec![0.0; d],
            beta_u: vec![bu; d],
            beta_y: by,
        }
    }

    #[test]
    fn outcome_identities() {
        let conf = gen_confounders(100, 3, &mut RngStream::new(0, 0)).unwrap();
        let mut r = RngStream::new(1, 0);
        let yp: Vec<u8> = (0..100).map(|i| (i % 3 == 0) as u8).collect();
        let t: Vec<u8> = (0..100).map(|i| (i % 2 == 0) as u8).collect();

        let p0 = gen_outcomes(&conf, &yp, &t, &coeffs(3, 1.0, 0.2), 0.0, 1.0, &mut r).unwrap();
        assert_eq!(p0.y_fact, p0.y_cf);
        assert_eq!(true_ace(&p0), 0.0);

        let p1 = gen_outcomes(&conf, &yp, &t, &coeffs(3, 1.0, 0.2), 1.0, 1.0, &mut r).unwrap();
        for i in 0..100 {
            let want = if t[i] == 1 { 1.0 } else { -1.0 };
            assert!((p1.y_fact[i] - p1.y_cf[i] - want).abs() < 1e-12);
        }
        assert!((true_ace(&p1) - 1.0).abs() < 1e-12);

        let pt = gen_outcomes(&conf, &yp, &t, &coeffs(3, 0.0, 0.0), 1.0, 0.0, &mut r).unwrap();
        for i in 0..100 {
            assert_eq!(pt.y_fact[i], t[i] as f64);
        }
        assert!(gen_outcomes(&conf, &yp[..5], &t, &coeffs(3, 0.0, 0.0), 1.0, 0.0, &mut r).is_err());
    }
}
