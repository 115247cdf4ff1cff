//! Ego-networks whose ties form by latent homophily.
//!
//! Two generators: perfect matchings biased toward similar latent vectors,
//! and preferential attachment where the degree weight of each candidate is
//! multiplied by its cosine similarity to the arriving node.

use crate::error::{Error, Result};
use crate::numerics::{norm, shuffle, Mat, RngStream};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphModel {
    Dyadic,
    HomophilyBa { m0: usize, m: usize },
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoNetwork {
    adjacency: Vec<Vec<usize>>,
    model: GraphModel,
}

impl EgoNetwork {
    /// Builds a graph from an undirected edge list. Rejects self-loops,
    /// duplicates and out-of-range ids.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], model: GraphModel) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (i, adj) in adjacency.iter_mut().enumerate() {
            adj.sort_unstable();
            let before = adj.len();
            adj.dedup();
            if adj.len() != before {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge at node {i}"
                )));
            }
        }
        Ok(Self { adjacency, model })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn model(&self) -> GraphModel {
        self.model
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(src, dst)` with `src < dst`, in
    /// lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }
}

/// Unit-normalized rows; fails on zero rows.
fn unit_rows(u: &Mat) -> Result<Mat> {
    let mut out = u.clone();
    for i in 0..u.rows() {
        let nrm = norm(u.row(i));
        if !(nrm > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "latent vector of node {i} has zero norm"
            )));
        }
        out.row_mut(i).iter_mut().for_each(|x| *x /= nrm);
    }
    Ok(out)
}

#[inline]
fn cos_unit(units: &Mat, a: usize, b: usize) -> f64 {
    crate::numerics::dot(units.row(a), units.row(b)).clamp(-1.0, 1.0)
}

/// Index drawn with probability proportional to `w` (`total` = sum of `w`, > 0).
fn weighted_pick(rng: &mut RngStream, w: &[f64], total: f64) -> usize {
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last = i;
            if acc > target {
                return i;
            }
        }
    }
    // rounding left target at the very top of the range
    last
}

/// Softening added to clamped cosines during dyadic matching.
pub const DYAD_EPSILON: f64 = 1e-6;

/// Random perfect matching biased toward similar latent vectors.
///
/// Unmatched nodes are visited in random order; each picks a partner among
/// the still-unmatched nodes with weight `max(cos, 0) + epsilon`.
pub fn gen_dyads(u: &Mat, rng: &mut RngStream) -> Result<EgoNetwork> {
    gen_dyads_with(u, DYAD_EPSILON, rng)
}

pub fn gen_dyads_with(u: &Mat, epsilon: f64, rng: &mut RngStream) -> Result<EgoNetwork> {
    let n = u.rows();
    if n % 2 == 1 {
        return Err(Error::OddNodeCount(n));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dyad softening must be >= 0, got {epsilon}"
        )));
    }
    let units = unit_rows(u)?;
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut order);
    let mut matched = vec![false; n];
    let mut edges = Vec::with_capacity(n / 2);
    let mut w = vec![0.0; n];
    for &i in &order {
        if matched[i] {
            continue;
        }
        matched[i] = true;
        let mut total = 0.0;
        let mut open = 0;
        for j in 0..n {
            w[j] = if matched[j] {
                0.0
            } else {
                open += 1;
                cos_unit(&units, i, j).max(0.0) + epsilon
            };
            total += w[j];
        }
        debug_assert!(open > 0);
        let j = if total > 0.0 {
            weighted_pick(rng, &w, total)
        } else {
            // epsilon = 0 and every remaining candidate is orthogonal
            let k = rng.below(open);
            (0..n).filter(|&j| !matched[j]).nth(k).unwrap()
        };
        matched[j] = true;
        edges.push((i.min(j), i.max(j)));
    }
    EgoNetwork::from_edges(n, &edges, GraphModel::Dyadic)
}

/// Attachment distribution `π(k_i | j)` over existing nodes `0..j` for an
/// arriving node `j`: clamped cosine times current degree, normalized.
///
/// Falls back to plain degree weights when every clamped cosine vanishes,
/// and to uniform weights when every degree is zero as well.
pub fn attachment_weights(units: &Mat, degrees: &[usize], j: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..j)
        .map(|i| cos_unit(units, i, j).max(0.0) * degrees[i] as f64)
        .collect();
    normalize_or_fallback(&mut w, |i| degrees[i] as f64);
    w
}

fn normalize_or_fallback(w: &mut [f64], fallback: impl Fn(usize) -> f64) {
    let mut s: f64 = w.iter().sum();
    if !(s > 0.0) {
        for (i, x) in w.iter_mut().enumerate() {
            *x = fallback(i);
        }
        s = w.iter().sum();
    }
    if !(s > 0.0) {
        let k = w.len() as f64;
        w.iter_mut().for_each(|x| *x = 1.0 / k);
        return;
    }
    w.iter_mut().for_each(|x| *x /= s);
}

/// Homophily-weighted preferential attachment.
///
/// Starts from a clique on `m0` nodes; every later node attaches to `m`
/// distinct earlier nodes drawn without replacement from
/// [`attachment_weights`], renormalizing after each pick.
pub fn gen_homophily_ba(u: &Mat, m0: usize, m: usize, rng: &mut RngStream) -> Result<EgoNetwork> {
    let n = u.rows();
    if !(m >= 1 && m0 >= m && n >= m0) {
        return Err(Error::InvalidParameter(format!(
            "preferential attachment needs n >= m0 >= m >= 1, got n={n}, m0={m0}, m={m}"
        )));
    }
    let units = unit_rows(u)?;
    let mut degrees = vec![0usize; n];
    let mut edges = Vec::with_capacity(m0 * (m0 - 1) / 2 + m * (n - m0));
    for a in 0..m0 {
        for b in a + 1..m0 {
            edges.push((a, b));
            degrees[a] += 1;
            degrees[b] += 1;
        }
    }
    for j in m0..n {
        let mut w = attachment_weights(&units, &degrees, j);
        let mut chosen = Vec::with_capacity(m);
        for _ in 0..m {
            let total: f64 = w.iter().sum();
            let pick = if total > 0.0 {
                weighted_pick(rng, &w, total)
            } else {
                // every positive-weight candidate is taken: degree, then uniform
                let mut fb: Vec<f64> = (0..j)
                    .map(|i| if chosen.contains(&i) { 0.0 } else { degrees[i] as f64 })
                    .collect();
                let s: f64 = fb.iter().sum();
                if s > 0.0 {
                    weighted_pick(rng, &fb, s)
                } else {
                    fb = (0..j)
                        .map(|i| if chosen.contains(&i) { 0.0 } else { 1.0 })
                        .collect();
                    let s: f64 = fb.iter().sum();
                    weighted_pick(rng, &fb, s)
                }
            };
            w[pick] = 0.0;
            chosen.push(pick);
        }
        for &i in &chosen {
            edges.push((i, j));
            degrees[i] += 1;
            degrees[j] += 1;
        }
    }
    EgoNetwork::from_edges(n, &edges, GraphModel::HomophilyBa { m0, m })
}
