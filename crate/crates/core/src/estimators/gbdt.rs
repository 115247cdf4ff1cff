//! Gradient-boosted regression trees, squared-error loss, exact greedy splits
//! grown level by level over presorted features.

use crate::error::{dims, Error, Result};
use crate::numerics::Mat;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub trees: usize,
    pub depth: usize,
    pub shrinkage: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            trees: 100,
            depth: 3,
            shrinkage: 0.1,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.depth == 0 {
            return Err(Error::InvalidParameter("trees and depth must be >= 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidParameter("shrinkage must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let n = &self.nodes[k];
            if n.feature == LEAF {
                return n.value;
            }
            k = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub base: f64,
    pub params: BoostParams,
    trees: Vec<Tree>,
    features: usize,
}

/// Features presorted once per fit; constant columns are dropped.
struct Presorted {
    n: usize,
    /// column-major copy of the design
    xt: Vec<f64>,
    usable: Vec<usize>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &Mat) -> Self {
        let (n, p) = x.shape();
        let mut xt = vec![0.0; n * p];
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                xt[j * n + i] = v;
            }
        }
        let mut usable = Vec::new();
        let mut order = Vec::new();
        for j in 0..p {
            let col = &xt[j * n..(j + 1) * n];
            if col.iter().all(|&v| v == col[0]) {
                continue;
            }
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            usable.push(j);
            order.push(idx);
        }
        Self { n, xt, usable, order }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.xt[j * self.n..(j + 1) * self.n]
    }
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn grow_tree(data: &Presorted, resid: &[f64], depth: usize, shrinkage: f64, node_of: &mut [u32]) -> Tree {
    let n = data.n;
    node_of.iter_mut().for_each(|k| *k = 0);
    let mut nodes = vec![Node {
        feature: LEAF,
        threshold: 0.0,
        left: LEAF,
        right: LEAF,
        value: 0.0,
    }];
    // nodes still eligible for splitting at the current level
    let mut frontier: Vec<u32> = vec![0];
    for _ in 0..depth {
        if frontier.is_empty() {
            break;
        }
        // map global node id -> slot in frontier
        let mut slot = vec![u32::MAX; nodes.len()];
        for (s, &k) in frontier.iter().enumerate() {
            slot[k as usize] = s as u32;
        }
        let f = frontier.len();
        let mut sum = vec![0.0; f];
        let mut cnt = vec![0usize; f];
        for i in 0..n {
            let s = slot[node_of[i] as usize];
            if s != u32::MAX {
                sum[s as usize] += resid[i];
                cnt[s as usize] += 1;
            }
        }
        let mut best: Vec<Option<Best>> = vec![None; f];
        let mut l_sum = vec![0.0; f];
        let mut l_cnt = vec![0usize; f];
        let mut last = vec![0.0; f];
        for (fi, &j) in data.usable.iter().enumerate() {
            let col = data.col(j);
            l_sum.iter_mut().for_each(|v| *v = 0.0);
            l_cnt.iter_mut().for_each(|v| *v = 0);
            for &r in &data.order[fi] {
                let r = r as usize;
                let s = slot[node_of[r] as usize];
                if s == u32::MAX {
                    continue;
                }
                let s = s as usize;
                let v = col[r];
                if l_cnt[s] > 0 && v > last[s] {
                    let nl = l_cnt[s] as f64;
                    let nr = (cnt[s] - l_cnt[s]) as f64;
                    let sl = l_sum[s];
                    let sr = sum[s] - sl;
                    let gain = sl * sl / nl + sr * sr / nr - sum[s] * sum[s] / cnt[s] as f64;
                    if best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Best {
                            gain,
                            feature: j,
                            threshold: 0.5 * (last[s] + v),
                        });
                    }
                }
                l_sum[s] += resid[r];
                l_cnt[s] += 1;
                last[s] = v;
            }
        }
        let mut next = Vec::new();
        for (s, &k) in frontier.iter().enumerate() {
            let Some(b) = best[s] else { continue };
            if !(b.gain > 1e-12 * (1.0 + sum[s].abs())) {
                continue;
            }
            let left = nodes.len() as u32;
            for _ in 0..2 {
                nodes.push(Node {
                    feature: LEAF,
                    threshold: 0.0,
                    left: LEAF,
                    right: LEAF,
                    value: 0.0,
                });
            }
            let node = &mut nodes[k as usize];
            node.feature = b.feature as u32;
            node.threshold = b.threshold;
            node.left = left;
            node.right = left + 1;
            next.push(left);
            next.push(left + 1);
        }
        for i in 0..n {
            let node = &nodes[node_of[i] as usize];
            if node.feature != LEAF {
                node_of[i] = if data.col(node.feature as usize)[i] <= node.threshold {
                    node.left
                } else {
                    node.right
                };
            }
        }
        frontier = next;
    }
    let mut sum = vec![0.0; nodes.len()];
    let mut cnt = vec![0usize; nodes.len()];
    for i in 0..n {
        sum[node_of[i] as usize] += resid[i];
        cnt[node_of[i] as usize] += 1;
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if node.feature == LEAF && cnt[k] > 0 {
            node.value = shrinkage * sum[k] / cnt[k] as f64;
        }
    }
    Tree { nodes }
}

impl BoostModel {
    pub fn fit(x: &Mat, y: &[f64], params: BoostParams) -> Result<Self> {
        params.validate()?;
        dims("BoostModel::fit targets", x.rows(), y.len())?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidParameter("no rows to fit".into()));
        }
        let base = y.iter().sum::<f64>() / n as f64;
        let data = Presorted::new(x);
        let mut pred = vec![base; n];
        let mut resid = vec![0.0; n];
        let mut node_of = vec![0u32; n];
        let mut trees = Vec::with_capacity(params.trees);
        for _ in 0..params.trees {
            for i in 0..n {
                resid[i] = y[i] - pred[i];
            }
            let tree = grow_tree(&data, &resid, params.depth, params.shrinkage, &mut node_of);
            for i in 0..n {
                pred[i] += tree.nodes[node_of[i] as usize].value;
            }
            trees.push(tree);
        }
        Ok(Self {
            base,
            params,
            trees,
            features: x.cols(),
        })
    }

    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        dims("BoostModel::predict width", self.features, x.cols())?;
        Ok(x.iter_rows()
            .map(|r| self.base + self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>())
            .collect())
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
