//! Scores for discovered graphs (SHD, SID) and for forecasts (RMSE, MAE).

use serde::Serialize;

use crate::causal::CausalDigraph;
use crate::error::{Error, Result};

/// Structural Hamming distance: unordered pairs whose edge state differs
/// (missing, extra or reversed each cost one).
pub fn shd(truth: &CausalDigraph, est: &CausalDigraph) -> Result<usize> {
    let d = truth.dim();
    if est.dim() != d {
        return Err(Error::DimensionMismatch(format!("graphs of size {d} and {}", est.dim())));
    }
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            let t = (truth.has_edge(i, j), truth.has_edge(j, i));
            let e = (est.has_edge(i, j), est.has_edge(j, i));
            if t != e {
                count += 1;
            }
        }
    }
    Ok(count)
}

fn descendants(g: &CausalDigraph, node: usize) -> Vec<bool> {
    let mut seen = vec![false; g.dim()];
    let mut stack = vec![node];
    seen[node] = true;
    while let Some(v) = stack.pop() {
        for c in g.children_of(v) {
            if !seen[c] {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    seen
}

fn ancestors(g: &CausalDigraph, nodes: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; g.dim()];
    let mut stack = nodes.to_vec();
    for &n in nodes {
        seen[n] = true;
    }
    while let Some(v) = stack.pop() {
        for p in g.parents_of(v) {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// `a ⊥ b | given` in `g`, via the moral graph of the ancestral set.
pub fn d_separated(g: &CausalDigraph, a: usize, b: usize, given: &[usize]) -> bool {
    let d = g.dim();
    let mut seeds = vec![a, b];
    seeds.extend_from_slice(given);
    let keep = ancestors(g, &seeds);
    let mut adj = vec![vec![false; d]; d];
    for v in (0..d).filter(|&v| keep[v]) {
        let ps: Vec<usize> = g.parents_of(v).filter(|&p| keep[p]).collect();
        for &p in &ps {
            adj[p][v] = true;
            adj[v][p] = true;
        }
        for (x, &p) in ps.iter().enumerate() {
            for &q in &ps[x + 1..] {
                adj[p][q] = true;
                adj[q][p] = true;
            }
        }
    }
    let mut blocked = vec![false; d];
    for &z in given {
        blocked[z] = true;
    }
    let mut seen = vec![false; d];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(v) = stack.pop() {
        if v == b {
            return false;
        }
        for w in 0..d {
            if adj[v][w] && keep[w] && !blocked[w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    true
}

/// Whether `z` is a valid adjustment set for the effect of `x` on `y` in `g`.
pub fn is_valid_adjustment(g: &CausalDigraph, x: usize, y: usize, z: &[usize]) -> bool {
    let d = g.dim();
    let de_x = descendants(g, x);
    let an_y = ancestors(g, &[y]);
    // Nodes other than x on directed paths x -> ... -> y.
    let on_causal: Vec<usize> = (0..d).filter(|&w| w != x && de_x[w] && an_y[w]).collect();
    let mut forbidden = vec![false; d];
    for &w in &on_causal {
        for (v, f) in descendants(g, w).into_iter().enumerate() {
            forbidden[v] |= f;
        }
    }
    if z.iter().any(|&v| forbidden[v] || v == x) {
        return false;
    }
    // Remove the first edge of every proper causal path.
    let mut pruned = g.clone();
    for &w in &on_causal {
        if pruned.has_edge(x, w) {
            pruned.set_edge(x, w, false);
        }
    }
    d_separated(&pruned, x, y, z)
}

/// Structural intervention distance: ordered pairs `(i, j)` whose
/// interventional distribution `p(x_j | do(x_i))` is misestimated when the
/// estimated graph's parents of `i` are used as the adjustment set.
pub fn sid(truth: &CausalDigraph, est: &CausalDigraph) -> Result<usize> {
    let d = truth.dim();
    if est.dim() != d {
        return Err(Error::DimensionMismatch(format!("graphs of size {d} and {}", est.dim())));
    }
    if !truth.is_acyclic() || !est.is_acyclic() {
        return Err(Error::Cyclic);
    }
    let mut count = 0;
    for i in 0..d {
        let parents: Vec<usize> = est.parents_of(i).collect();
        let de_i = descendants(truth, i);
        for j in (0..d).filter(|&j| j != i) {
            let wrong = if parents.contains(&j) {
                // The estimate implies no effect of i on j.
                de_i[j]
            } else {
                !is_valid_adjustment(truth, i, j, &parents)
            };
            if wrong {
                count += 1;
            }
        }
    }
    Ok(count)
}

fn check_pairs(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<usize> {
    if pred.is_empty() {
        return Err(Error::InvalidInput("no forecasts to score".into()));
    }
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!("{} forecasts vs {} actuals", pred.len(), actual.len())));
    }
    let mut n = 0;
    for (p, a) in pred.iter().zip(actual) {
        if p.len() != a.len() {
            return Err(Error::DimensionMismatch("forecast and actual dimensions differ".into()));
        }
        n += p.len();
    }
    if n == 0 {
        return Err(Error::InvalidInput("zero-dimensional forecasts".into()));
    }
    Ok(n)
}

/// Root mean squared error pooled over all dimensions and time points.
pub fn rmse(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    let n = check_pairs(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).flat_map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).powi(2))).sum();
    Ok((sse / n as f64).sqrt())
}

/// Mean absolute error pooled over all dimensions and time points.
pub fn mae(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    let n = check_pairs(pred, actual)?;
    let sae: f64 = pred.iter().zip(actual).flat_map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).abs())).sum();
    Ok(sae / n as f64)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SegmentMetrics {
    pub cluster: usize,
    pub start: usize,
    pub end: usize,
    pub shd: f64,
    pub sid: f64,
    pub causal_samples: usize,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub forecast_samples: usize,
}

/// Means over evaluation ticks (graphs) and pooled errors (forecasts).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricReport {
    pub shd: f64,
    pub sid: f64,
    pub causal_samples: usize,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub forecast_samples: usize,
    pub segments: Vec<SegmentMetrics>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shd_examples() {
        let g = CausalDigraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(shd(&g, &g).unwrap(), 0);
        let t = CausalDigraph::from_edges(2, &[(0, 1)]);
        let e = CausalDigraph::from_edges(2, &[(1, 0)]);
        assert_eq!(shd(&t, &e).unwrap(), 1);
        let t = CausalDigraph::empty(3);
        let e = CausalDigraph::from_edges(3, &[(0, 1), (0, 2)]);
        assert_eq!(shd(&t, &e).unwrap(), 2);
        assert!(shd(&t, &CausalDigraph::empty(2)).is_err());
    }

    #[test]
    fn sid_examples() {
        let g = CausalDigraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(sid(&g, &g).unwrap(), 0);
        let t = CausalDigraph::from_edges(2, &[(0, 1)]);
        assert_eq!(sid(&t, &CausalDigraph::empty(2)).unwrap(), 1);
        let cyc = CausalDigraph::from_edges(2, &[(0, 1), (1, 0)]);
        assert_eq!(sid(&cyc, &t), Err(Error::Cyclic));
    }

    #[test]
    fn sid_chain_vs_reversed() {
        // truth 0 -> 1 -> 2, estimate 2 -> 1 -> 0
        let t = CausalDigraph::from_edges(3, &[(0, 1), (1, 2)]);
        let e = CausalDigraph::from_edges(3, &[(2, 1), (1, 0)]);
        // Every parent set either contains a true descendant or leaves the
        // chain path open.
        let v = sid(&t, &e).unwrap();
        assert_eq!(v, 6);
    }

    #[test]
    fn error_examples() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x - 1.5).collect()).collect();
        assert!((rmse(&shifted, &a).unwrap() - 1.5).abs() < 1e-15);
        assert!((mae(&shifted, &a).unwrap() - 1.5).abs() < 1e-15);
        let z = vec![vec![0.0]; 4];
        let e = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
        assert_eq!(rmse(&e, &z).unwrap(), 1.0);
        assert_eq!(mae(&e, &z).unwrap(), 1.0);
        let z2 = vec![vec![0.0]; 2];
        let e2 = vec![vec![0.0], vec![2.0]];
        assert!((rmse(&e2, &z2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&e2, &z2).unwrap(), 1.0);
        assert!(rmse(&[], &[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rmse_dominates_mae(vals in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)) {
            let p: Vec<Vec<f64>> = vals.iter().map(|v| vec![v.0]).collect();
            let a: Vec<Vec<f64>> = vals.iter().map(|v| vec![v.1]).collect();
            proptest::prop_assert!(rmse(&p, &a).unwrap() + 1e-12 >= mae(&p, &a).unwrap());
        }

        #[test]
        fn graph_distance_bounds(bits_t in proptest::collection::vec(proptest::bool::ANY, 10), bits_e in proptest::collection::vec(proptest::bool::ANY, 10)) {
            // upper-triangular edge sets on 5 nodes are always acyclic
            let mk = |bits: &[bool]| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..5 { for j in (i + 1)..5 { if bits[k] { edges.push((i, j)); } k += 1; } }
                CausalDigraph::from_edges(5, &edges)
            };
            let (t, e) = (mk(&bits_t), mk(&bits_e));
            proptest::prop_assert_eq!(shd(&t, &t).unwrap(), 0);
            proptest::prop_assert_eq!(sid(&t, &t).unwrap(), 0);
            proptest::prop_assert!(shd(&t, &e).unwrap() <= 10);
            proptest::prop_assert!(sid(&t, &e).unwrap() <= 20);
            proptest::prop_assert_eq!(shd(&t, &e).unwrap(), shd(&e, &t).unwrap());
        }
    }
}
