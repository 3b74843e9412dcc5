//! Synthetic streams with known, regime-dependent causal structure.
//!
//! Each cluster id owns a random DAG with weights drawn from
//! `U(-hi, -lo) ∪ U(lo, hi)`. Within a segment every sample solves the
//! linear SEM `x = B x + e`, where the exogenous `e_i` are Laplace with a
//! log-variance that follows an AR(1) process.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::causal::{CausalAdjacency, CausalDigraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub d: usize,
    pub edge_density: f64,
    /// Edge weights are drawn from `(-hi, -lo) ∪ (lo, hi)`.
    pub weight_range: (f64, f64),
    pub segment_len: usize,
    pub sequence: Vec<usize>,
    pub ar_coeff_range: (f64, f64),
    pub ar_noise_var_range: (f64, f64),
    /// Draw fresh AR parameters for every segment instead of once per cluster.
    pub redraw_ar_per_segment: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            d: 5,
            edge_density: 0.5,
            weight_range: (0.5, 2.0),
            segment_len: 500,
            sequence: vec![1, 2, 1],
            ar_coeff_range: (0.8, 0.998),
            ar_noise_var_range: (0.01, 0.1),
            redraw_ar_per_segment: false,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d == 0 {
            return bad("d must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad("edge_density must lie in [0, 1]");
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi > lo) {
            return bad("weight range needs 0 < low < high");
        }
        if self.segment_len == 0 {
            return bad("segment_len must be > 0");
        }
        if self.sequence.is_empty() || self.sequence.iter().any(|&c| c == 0) {
            return bad("sequence needs at least one cluster id, all >= 1");
        }
        let (a, b) = self.ar_coeff_range;
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return bad("ar_coeff_range must be an ordered finite interval");
        }
        let (a, b) = self.ar_noise_var_range;
        if !(0.0 <= a && a <= b) || !b.is_finite() {
            return bad("ar_noise_var_range must be an ordered non-negative interval");
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.segment_len * self.sequence.len()
    }
}

/// Log-variance AR(1) parameters of one exogenous signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArParams {
    pub coeff: f64,
    pub noise_var: f64,
}

/// A contiguous run of samples, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub clusters: BTreeMap<usize, CausalAdjacency>,
    pub segments: Vec<Segment>,
    /// Exogenous draws, `d x T`, equal to `x - B x` per sample.
    pub exogenous: DMatrix<f64>,
}

impl GroundTruth {
    /// Cluster active at 1-based time `t`.
    pub fn cluster_at(&self, t: usize) -> Option<usize> {
        self.segments.iter().find(|s| s.start <= t && t <= s.end).map(|s| s.cluster)
    }

    pub fn adjacency_at(&self, t: usize) -> Option<&CausalAdjacency> {
        self.cluster_at(t).and_then(|c| self.clusters.get(&c))
    }
}

/// Erdős-Rényi DAG: random order, each forward pair kept with probability `density`.
pub fn sample_dag<R: Rng>(d: usize, density: f64, rng: &mut R) -> CausalDigraph {
    let mut order: Vec<usize> = (0..d).collect();
    // Fisher-Yates
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut g = CausalDigraph::empty(d);
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.random::<f64>() < density {
                g.set_edge(order[a], order[b], true);
            }
        }
    }
    g
}

/// Edge weights uniform on `(-hi, -lo) ∪ (lo, hi)`, each half with probability 1/2.
pub fn sample_weights<R: Rng>(dag: &CausalDigraph, range: (f64, f64), rng: &mut R) -> CausalAdjacency {
    let d = dag.dim();
    let (lo, hi) = range;
    let mut b = DMatrix::zeros(d, d);
    for to in 0..d {
        for from in 0..d {
            if dag.has_edge(from, to) {
                let mag = rng.random_range(lo..hi);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                b[(to, from)] = sign * mag;
            }
        }
    }
    CausalAdjacency(b)
}

pub fn draw_ar_params<R: Rng>(cfg: &GenConfig, rng: &mut R) -> ArParams {
    let draw = |rng: &mut R, (a, b): (f64, f64)| if a == b { a } else { rng.random_range(a..b) };
    ArParams { coeff: draw(rng, cfg.ar_coeff_range), noise_var: draw(rng, cfg.ar_noise_var_range) }
}

/// One Laplace draw with location 0 and the given variance.
pub fn laplace<R: Rng>(variance: f64, rng: &mut R) -> f64 {
    let scale = (variance / 2.0).sqrt();
    // u in (-1/2, 1/2); the open lower end avoids ln(0).
    let mut u: f64 = rng.random::<f64>() - 0.5;
    while u == -0.5 {
        u = rng.random::<f64>() - 0.5;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Laplace samples whose log-variance follows `h_t = φ h_{t-1} + η_t`, `h_0 = 0`.
pub fn sample_exogenous<R: Rng>(length: usize, params: ArParams, rng: &mut R) -> Vec<f64> {
    let noise = Normal::new(0.0, params.noise_var.sqrt()).expect("non-negative variance");
    let mut log_var = 0.0;
    (0..length)
        .map(|_| {
            log_var = params.coeff * log_var + noise.sample(rng);
            laplace(log_var.exp(), rng)
        })
        .collect()
}

/// Generate a `d x T` stream and its ground truth.
pub fn generate_stream(cfg: &GenConfig) -> Result<(DMatrix<f64>, GroundTruth)> {
    cfg.validate()?;
    let d = cfg.d;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut clusters: BTreeMap<usize, CausalAdjacency> = BTreeMap::new();
    let mut orders: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut ar: BTreeMap<usize, Vec<ArParams>> = BTreeMap::new();
    for &c in &cfg.sequence {
        if clusters.contains_key(&c) {
            continue;
        }
        let dag = sample_dag(d, cfg.edge_density, &mut rng);
        let b = sample_weights(&dag, cfg.weight_range, &mut rng);
        orders.insert(c, dag.topological_order().expect("sampled DAG is acyclic"));
        clusters.insert(c, b);
        ar.insert(c, (0..d).map(|_| draw_ar_params(cfg, &mut rng)).collect());
    }

    let total = cfg.total_len();
    let mut x = DMatrix::zeros(d, total);
    let mut exogenous = DMatrix::zeros(d, total);
    let mut segments = Vec::with_capacity(cfg.sequence.len());
    for (s, &c) in cfg.sequence.iter().enumerate() {
        let start = s * cfg.segment_len;
        let params: Vec<ArParams> = if cfg.redraw_ar_per_segment {
            (0..d).map(|_| draw_ar_params(cfg, &mut rng)).collect()
        } else {
            ar[&c].clone()
        };
        let draws: Vec<Vec<f64>> = params.iter().map(|p| sample_exogenous(cfg.segment_len, *p, &mut rng)).collect();
        let b = &clusters[&c].0;
        let order = &orders[&c];
        for k in 0..cfg.segment_len {
            let t = start + k;
            // Solve x = B x + e by substitution in causal order.
            for &i in order {
                let mut v = draws[i][k];
                for j in 0..d {
                    if b[(i, j)] != 0.0 {
                        v += b[(i, j)] * x[(j, t)];
                    }
                }
                x[(i, t)] = v;
            }
            for i in 0..d {
                let mut bx = 0.0;
                for j in 0..d {
                    bx += b[(i, j)] * x[(j, t)];
                }
                exogenous[(i, t)] = x[(i, t)] - bx;
            }
        }
        segments.push(Segment { start: start + 1, end: start + cfg.segment_len, cluster: c });
    }
    Ok((x, GroundTruth { clusters, segments, exogenous }))
}
