//! From a demixing matrix to a causal adjacency matrix.
//!
//! Row order and row scale of `W` are arbitrary after ICA. The rows are
//! permuted so the diagonal has no zeros, scaled to a unit diagonal and
//! subtracted from the identity; a causal order is then found that makes the
//! result as close to strictly lower triangular as possible, and the entries
//! that contradict that order are removed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Exhaustive searches are used up to this many variables.
pub const EXACT_SEARCH_CAP: usize = 10;

/// `b[(i, j)]` is the direct effect of variable `j` on variable `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalAdjacency(pub DMatrix<f64>);

impl CausalAdjacency {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn binarize(&self, edge_threshold: f64) -> CausalDigraph {
        let d = self.dim();
        CausalDigraph::from_fn(d, |to, from| to != from && self.0[(to, from)].abs() > edge_threshold)
    }
}

/// Directed graph; `parents[i][j]` is true iff the edge `j -> i` exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDigraph {
    parents: Vec<Vec<bool>>,
}

impl CausalDigraph {
    pub fn empty(d: usize) -> Self {
        Self { parents: vec![vec![false; d]; d] }
    }

    /// Build from a predicate `(to, from) -> has edge from -> to`.
    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let parents = (0..d).map(|to| (0..d).map(|from| f(to, from)).collect()).collect();
        Self { parents }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(d);
        for &(from, to) in edges {
            g.parents[to][from] = true;
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.parents.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to][from]
    }

    pub fn set_edge(&mut self, from: usize, to: usize, present: bool) {
        self.parents[to][from] = present;
    }

    pub fn parents_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents[node].iter().enumerate().filter(|(_, &p)| p).map(|(j, _)| j)
    }

    pub fn children_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&c| self.parents[c][node])
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().flatten().filter(|&&p| p).count()
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.dim();
        let mut indeg: Vec<usize> = (0..d).map(|i| self.parents_of(i).count()).collect();
        let mut ready: Vec<usize> = (0..d).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(v) = ready.pop() {
            order.push(v);
            for c in self.children_of(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == d).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }
}

/// Whether a permutation search was exact or fell back to a greedy heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchKind {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowPermutation {
    pub w_tilde: DMatrix<f64>,
    /// `w_tilde.row(i) == w.row(perm[i])`
    pub perm: Vec<usize>,
    pub search: SearchKind,
}

/// Row permutation of `w` maximising `Π |diag|`.
pub fn permute_nonzero_diagonal(w: &DMatrix<f64>) -> Result<RowPermutation> {
    let d = w.nrows();
    if d != w.ncols() || d == 0 {
        return Err(Error::DimensionMismatch("demixing matrix must be square and non-empty".into()));
    }
    let logs = DMatrix::from_fn(d, d, |r, c| {
        let v = w[(r, c)].abs();
        if v > 0.0 && v.is_finite() { v.ln() } else { f64::NEG_INFINITY }
    });
    let (perm, search) = if d <= EXACT_SEARCH_CAP {
        (best_assignment(&logs), SearchKind::Exact)
    } else {
        (greedy_assignment(&logs), SearchKind::Greedy)
    };
    let perm = perm.ok_or(Error::StructurallySingular)?;
    if (0..d).any(|i| w[(perm[i], i)] == 0.0) {
        return Err(Error::StructurallySingular);
    }
    let w_tilde = DMatrix::from_fn(d, d, |r, c| w[(perm[r], c)]);
    Ok(RowPermutation { w_tilde, perm, search })
}

/// Exact max-sum assignment of rows to diagonal positions by subset DP.
/// Among optimal assignments, the lexicographically smallest is returned.
fn best_assignment(logs: &DMatrix<f64>) -> Option<Vec<usize>> {
    let d = logs.nrows();
    let full = (1usize << d) - 1;
    // best[used] = best score for positions popcount(used)..d using unused rows.
    let mut best = vec![f64::NEG_INFINITY; 1 << d];
    best[full] = 0.0;
    for used in (0..full).rev() {
        let pos = used.count_ones() as usize;
        let mut acc = f64::NEG_INFINITY;
        for row in 0..d {
            if used & (1 << row) == 0 {
                let cand = logs[(row, pos)] + best[used | (1 << row)];
                if cand > acc {
                    acc = cand;
                }
            }
        }
        best[used] = acc;
    }
    if best[0] == f64::NEG_INFINITY {
        return None;
    }
    let mut perm = Vec::with_capacity(d);
    let mut used = 0usize;
    for pos in 0..d {
        let target = best[used];
        let tol = 1e-12 * (1.0 + target.abs());
        let row = (0..d)
            .filter(|r| used & (1 << r) == 0)
            .find(|&r| logs[(r, pos)] + best[used | (1 << r)] >= target - tol)?;
        perm.push(row);
        used |= 1 << row;
    }
    Some(perm)
}

fn greedy_assignment(logs: &DMatrix<f64>) -> Option<Vec<usize>> {
    let d = logs.nrows();
    let mut perm = vec![usize::MAX; d];
    let mut row_used = vec![false; d];
    for _ in 0..d {
        let mut pick: Option<(usize, usize, f64)> = None;
        for r in (0..d).filter(|&r| !row_used[r]) {
            for c in (0..d).filter(|&c| perm[c] == usize::MAX) {
                let v = logs[(r, c)];
                if pick.is_none_or(|(_, _, b)| v > b) {
                    pick = Some((r, c, v));
                }
            }
        }
        let (r, c, v) = pick?;
        if v == f64::NEG_INFINITY {
            return None;
        }
        perm[c] = r;
        row_used[r] = true;
    }
    Some(perm)
}

/// Scale each row to a unit diagonal.
pub fn normalize_diagonal(w_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = w_tilde.nrows();
    let mut out = w_tilde.clone();
    for i in 0..d {
        let diag = w_tilde[(i, i)];
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::Degenerate(format!("zero diagonal entry at row {i}")));
        }
        out.row_mut(i).scale_mut(1.0 / diag);
    }
    Ok(out)
}

/// `B̂ = I − W̃′`
pub fn to_adjacency(w_prime: &DMatrix<f64>) -> CausalAdjacency {
    let d = w_prime.nrows();
    let mut b = DMatrix::identity(d, d) - w_prime;
    for i in 0..d {
        b[(i, i)] = 0.0;
    }
    CausalAdjacency(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalOrdering {
    /// `order[i]` is the variable placed at position `i`; `K B̂ Kᵀ` has
    /// entry `(i, j)` equal to `B̂[order[i], order[j]]`.
    pub order: Vec<usize>,
    /// Permuted matrix with its upper triangle removed.
    pub b_tilde: CausalAdjacency,
    /// Sum of the squared upper-triangular entries before removal.
    pub upper_cost: f64,
    pub search: SearchKind,
}

/// Sum of squared entries on and above the diagonal of `K B̂ Kᵀ`.
pub fn upper_triangular_cost(b_hat: &DMatrix<f64>, order: &[usize]) -> f64 {
    let d = order.len();
    let mut cost = 0.0;
    for i in 0..d {
        for j in i..d {
            cost += b_hat[(order[i], order[j])].powi(2);
        }
    }
    cost
}

/// Causal order minimising the squared upper-triangular mass.
pub fn order_causally(b_hat: &CausalAdjacency) -> CausalOrdering {
    let b = &b_hat.0;
    let d = b.nrows();
    let (order, search) = if d <= EXACT_SEARCH_CAP {
        (best_order(b), SearchKind::Exact)
    } else {
        (greedy_order(b), SearchKind::Greedy)
    };
    let upper_cost = upper_triangular_cost(b, &order);
    let b_tilde = DMatrix::from_fn(d, d, |i, j| if j < i { b[(order[i], order[j])] } else { 0.0 });
    CausalOrdering { order, b_tilde: CausalAdjacency(b_tilde), upper_cost, search }
}

/// Exact minimiser by subset DP; lexicographically smallest among ties.
fn best_order(b: &DMatrix<f64>) -> Vec<usize> {
    let d = b.nrows();
    let full = (1usize << d) - 1;
    // Placing `v` first among the remaining set `rest` costs Σ_{u ∈ rest} b[v,u]²
    // (plus the diagonal term b[v,v]², which is zero for adjacency matrices).
    let place = |v: usize, rest: usize| -> f64 {
        let mut c = b[(v, v)].powi(2);
        for u in 0..d {
            if rest & (1 << u) != 0 && u != v {
                c += b[(v, u)].powi(2);
            }
        }
        c
    };
    let mut best = vec![0.0f64; 1 << d];
    for set in 1..=full {
        let mut acc = f64::INFINITY;
        for v in 0..d {
            if set & (1 << v) != 0 {
                let cand = place(v, set) + best[set & !(1 << v)];
                if cand < acc {
                    acc = cand;
                }
            }
        }
        best[set] = acc;
    }
    let mut order = Vec::with_capacity(d);
    let mut set = full;
    while set != 0 {
        let target = best[set];
        let tol = 1e-12 * (1.0 + target.abs());
        let v = (0..d)
            .filter(|v| set & (1 << v) != 0)
            .find(|&v| place(v, set) + best[set & !(1 << v)] <= target + tol)
            .expect("DP minimum is attained");
        order.push(v);
        set &= !(1 << v);
    }
    order
}

fn greedy_order(b: &DMatrix<f64>) -> Vec<usize> {
    let d = b.nrows();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    while !remaining.is_empty() {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, remaining.iter().map(|&u| b[(v, u)].powi(2)).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });
        order.push(remaining.remove(idx));
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalEstimate {
    /// Adjacency in the original variable order, already pruned.
    pub adjacency: CausalAdjacency,
    pub digraph: CausalDigraph,
    pub order: Vec<usize>,
    pub row_perm: Vec<usize>,
    pub exact: bool,
}

/// Full pipeline from a demixing matrix to a pruned adjacency and digraph.
pub fn identify_causality(w: &DMatrix<f64>, edge_threshold: f64) -> Result<CausalEstimate> {
    if edge_threshold < 0.0 || !edge_threshold.is_finite() {
        return Err(Error::InvalidInput("edge threshold must be a finite non-negative number".into()));
    }
    let rows = permute_nonzero_diagonal(w)?;
    let w_prime = normalize_diagonal(&rows.w_tilde)?;
    let b_hat = to_adjacency(&w_prime);
    let ordering = order_causally(&b_hat);
    let d = w.nrows();
    let mut b = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            b[(ordering.order[i], ordering.order[j])] = ordering.b_tilde.0[(i, j)];
        }
    }
    let adjacency = CausalAdjacency(b);
    let digraph = adjacency.binarize(edge_threshold);
    Ok(CausalEstimate {
        adjacency,
        digraph,
        order: ordering.order,
        row_perm: rows.perm,
        exact: rows.search == SearchKind::Exact && ordering.search == SearchKind::Exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(d: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(d, d, v)
    }

    #[test]
    fn permutation_examples() {
        let p = permute_nonzero_diagonal(&m(2, &[0.0, 2.0, 1.0, 0.0])).unwrap();
        assert_eq!(p.w_tilde, m(2, &[1.0, 0.0, 0.0, 2.0]));
        assert_eq!(p.perm, vec![1, 0]);
        let p = permute_nonzero_diagonal(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(p.perm, vec![0, 1, 2]);
        assert_eq!(
            permute_nonzero_diagonal(&m(2, &[0.0, 1.0, 0.0, 2.0])),
            Err(Error::StructurallySingular)
        );
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_diagonal(&m(2, &[2.0, 0.0, 1.0, 4.0])).unwrap(), m(2, &[1.0, 0.0, 0.25, 1.0]));
        assert_eq!(normalize_diagonal(&DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(2, 2));
        let n = normalize_diagonal(&m(2, &[-1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(n, m(2, &[1.0, 0.0, 0.0, 1.0]));
        assert!(normalize_diagonal(&m(2, &[0.0, 1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(to_adjacency(&m(2, &[1.0, 0.0, -0.5, 1.0])).0, m(2, &[0.0, 0.0, 0.5, 0.0]));
        assert_eq!(to_adjacency(&DMatrix::identity(3, 3)).0, DMatrix::zeros(3, 3));
        assert_eq!(to_adjacency(&m(2, &[1.0, -2.0, 0.0, 1.0])).0, m(2, &[0.0, 2.0, 0.0, 0.0]));
    }

    #[test]
    fn ordering_examples() {
        let o = order_causally(&CausalAdjacency(m(2, &[0.0, 0.001, 0.9, 0.0])));
        assert_eq!(o.order, vec![0, 1]);
        assert!((o.upper_cost - 1e-6).abs() < 1e-15);
        assert!((upper_triangular_cost(&m(2, &[0.0, 0.001, 0.9, 0.0]), &[1, 0]) - 0.81).abs() < 1e-12);
        assert_eq!(o.b_tilde.0, m(2, &[0.0, 0.0, 0.9, 0.0]));

        let z = order_causally(&CausalAdjacency(DMatrix::zeros(4, 4)));
        assert_eq!(z.order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn identification_examples() {
        let est = identify_causality(&m(2, &[1.0, 0.0, -0.5, 1.0]), 0.3).unwrap();
        assert!((est.adjacency.0.clone() - m(2, &[0.0, 0.0, 0.5, 0.0])).amax() < 1e-15);
        assert!(est.digraph.has_edge(0, 1));
        assert_eq!(est.digraph.edge_count(), 1);

        let est = identify_causality(&m(3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5]), 0.3).unwrap();
        assert_eq!(est.adjacency.0, DMatrix::zeros(3, 3));
        assert_eq!(est.digraph.edge_count(), 0);
    }

    #[test]
    fn scrambled_sem_demixing_is_recovered() {
        // x1 -> x0 (0.8), x0 -> x2 (-1.5), x1 -> x2 (0.7)
        let b = m(3, &[0.0, 0.8, 0.0, 0.0, 0.0, 0.0, -1.5, 0.7, 0.0]);
        let w = DMatrix::identity(3, 3) - &b;
        // shuffle rows and rescale them
        let scrambled = DMatrix::from_fn(3, 3, |r, c| {
            let src = [2, 0, 1][r];
            w[(src, c)] * [3.0, -0.5, 1.7][r]
        });
        let est = identify_causality(&scrambled, 0.3).unwrap();
        assert!((est.adjacency.0 - &b).amax() < 1e-12);
        assert!(est.digraph.is_acyclic());
    }

    #[test]
    fn topological_order_detects_cycles() {
        let dag = CausalDigraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(dag.is_acyclic());
        let cyc = CausalDigraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(!cyc.is_acyclic());
    }
}
