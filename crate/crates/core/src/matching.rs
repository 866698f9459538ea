//! Bipartite matching kernels shared by the scheduling policies.
//!
//! Left vertices are the demand side (queues or packets), right vertices are
//! servers. All routines are deterministic: candidates are scanned in
//! ascending index order and free servers are preferred over re-routing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BipartiteGraph {
    left: usize,
    right: usize,
    adj: Vec<bool>,
}

impl BipartiteGraph {
    pub fn new(left: usize, right: usize, adj: Vec<bool>) -> Result<Self> {
        if adj.len() != left * right {
            return Err(Error::DimensionMismatch { left, right });
        }
        Ok(Self { left, right, adj })
    }

    pub fn empty(left: usize, right: usize) -> Self {
        Self {
            left,
            right,
            adj: vec![false; left * right],
        }
    }

    pub fn complete(left: usize, right: usize) -> Self {
        Self {
            left,
            right,
            adj: vec![true; left * right],
        }
    }

    /// Builds a graph from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let left = rows.len();
        let right = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != right) {
            return Err(Error::DimensionMismatch { left, right });
        }
        Ok(Self {
            left,
            right,
            adj: rows.concat(),
        })
    }

    pub fn left_count(&self) -> usize {
        self.left
    }

    pub fn right_count(&self) -> usize {
        self.right
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.right + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.adj[i * self.right + j] = on;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.adj[i * self.right..(i + 1) * self.right]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Disjoint `(left, right)` edges.
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }
}

/// Maximum-cardinality matching by repeated augmenting paths.
pub fn max_cardinality_matching(g: &BipartiteGraph) -> Matching {
    let mut owner: Vec<Option<usize>> = vec![None; g.right];
    let mut visited = vec![false; g.right];
    for u in 0..g.left {
        visited.iter_mut().for_each(|v| *v = false);
        augment_unit(g, u, &mut owner, &mut visited);
    }
    let mut pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(s, o)| o.map(|u| (u, s)))
        .collect();
    pairs.sort_unstable();
    Matching { pairs }
}

pub fn has_perfect_matching(g: &BipartiteGraph) -> Result<bool> {
    if g.left != g.right {
        return Err(Error::DimensionMismatch {
            left: g.left,
            right: g.right,
        });
    }
    Ok(max_cardinality_matching(g).size() == g.left)
}

/// Finds a server for left vertex `u`, re-routing current owners along an
/// augmenting path when no adjacent server is free.
fn augment_unit(
    g: &BipartiteGraph,
    u: usize,
    owner: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    let row = g.row(u);
    for s in 0..g.right {
        if row[s] && owner[s].is_none() {
            owner[s] = Some(u);
            visited[s] = true;
            return true;
        }
    }
    for s in 0..g.right {
        if row[s] && !visited[s] {
            visited[s] = true;
            let o = owner[s].expect("non-free server");
            if augment_unit(g, o, owner, visited) {
                owner[s] = Some(u);
                return true;
            }
        }
    }
    false
}

/// Incremental capacitated assignment: queues request one more server at a
/// time; each server carries at most one unit.
///
/// Once a request for queue `i` fails, every later request for `i` fails too
/// (no augmenting path can reappear after further augmentations).
#[derive(Debug, Clone)]
pub struct ServeSet<'g> {
    g: &'g BipartiteGraph,
    owner: Vec<Option<usize>>,
    visited: Vec<bool>,
    load: Vec<usize>,
}

impl<'g> ServeSet<'g> {
    pub fn new(g: &'g BipartiteGraph) -> Self {
        Self {
            g,
            owner: vec![None; g.right],
            visited: vec![false; g.right],
            load: vec![0; g.left],
        }
    }

    pub fn try_add(&mut self, queue: usize) -> bool {
        self.visited.iter_mut().for_each(|v| *v = false);
        let ok = augment_unit(self.g, queue, &mut self.owner, &mut self.visited);
        if ok {
            self.load[queue] += 1;
        }
        ok
    }

    pub fn load(&self, queue: usize) -> usize {
        self.load[queue]
    }

    pub fn total(&self) -> usize {
        self.load.iter().sum()
    }

    /// Queue owning each server, if any.
    pub fn owners(&self) -> &[Option<usize>] {
        &self.owner
    }
}

/// Whether queue `i` can be given `demands[i]` distinct ON servers, with each
/// server used at most once.
pub fn feasible_serve_set(demands: &[usize], connectivity: &BipartiteGraph) -> bool {
    serve_assignment(demands, connectivity).is_some()
}

/// A server-to-queue assignment meeting every demand, if one exists.
pub fn serve_assignment(
    demands: &[usize],
    connectivity: &BipartiteGraph,
) -> Option<Vec<Option<usize>>> {
    assert_eq!(demands.len(), connectivity.left, "one demand per queue");
    let total: usize = demands.iter().sum();
    if total > connectivity.right {
        return None;
    }
    let mut set = ServeSet::new(connectivity);
    for (q, &d) in demands.iter().enumerate() {
        for _ in 0..d {
            if !set.try_add(q) {
                return None;
            }
        }
    }
    Some(set.owner)
}

/// Rectangular max-weight assignment instance. `None` marks a forbidden edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAssignmentProblem {
    rows: usize,
    cols: usize,
    weights: Vec<Option<f64>>,
}

impl WeightedAssignmentProblem {
    pub fn new(rows: usize, cols: usize, weights: Vec<Option<f64>>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                left: rows,
                right: cols,
            });
        }
        if weights.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPolicy(
                "assignment weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            weights,
        })
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch { left: r, right: c });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.weights[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs over allowed edges only.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Maximum-weight (not necessarily perfect) matching over allowed edges.
///
/// Solved as a min-cost perfect assignment on the padded square instance with
/// cost `-w` on allowed edges and `0` elsewhere; zero-cost padding pairs are
/// dropped from the result.
pub fn max_weight_matching(p: &WeightedAssignmentProblem) -> Assignment {
    if p.rows == 0 || p.cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    let transpose = p.rows > p.cols;
    let (n, m) = if transpose {
        (p.cols, p.rows)
    } else {
        (p.rows, p.cols)
    };
    let cost = |i: usize, j: usize| -> f64 {
        let w = if transpose { p.weight(j, i) } else { p.weight(i, j) };
        w.map_or(0.0, |w| -w)
    };
    let row_to_col = hungarian_min(n, m, cost);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, j) in row_to_col.into_iter().enumerate() {
        let (r, c) = if transpose { (j, i) } else { (i, j) };
        if let Some(w) = p.weight(r, c) {
            if w > 0.0 {
                pairs.push((r, c));
                total += w;
            }
        }
    }
    pairs.sort_unstable();
    Assignment { pairs, total }
}

/// Shortest augmenting path Hungarian method for an `n x m` cost matrix with
/// `n <= m`. Returns the column assigned to each row.
fn hungarian_min(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-indexed potentials; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(rows: &[&[u8]]) -> BipartiteGraph {
        let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|b| *b == 1).collect()).collect();
        BipartiteGraph::from_rows(&rows).unwrap()
    }

    fn assert_valid(g: &BipartiteGraph, m: &Matching) {
        let mut l = vec![false; g.left_count()];
        let mut r = vec![false; g.right_count()];
        for &(u, s) in &m.pairs {
            assert!(g.get(u, s));
            assert!(!l[u] && !r[s]);
            l[u] = true;
            r[s] = true;
        }
    }

    #[test]
    fn cardinality_examples() {
        let g = BipartiteGraph::complete(3, 3);
        assert_eq!(max_cardinality_matching(&g).size(), 3);
        let g = BipartiteGraph::empty(3, 3);
        assert_eq!(max_cardinality_matching(&g).size(), 0);
        // Greedy on row order would take (0,0) and strand row 1.
        let g = graph(&[&[1, 1], &[1, 0]]);
        let m = max_cardinality_matching(&g);
        assert_eq!(m.size(), 2);
        assert_valid(&g, &m);
    }

    #[test]
    fn perfect_matching_examples() {
        let mut id = BipartiteGraph::empty(4, 4);
        for i in 0..4 {
            id.set(i, i, true);
        }
        assert!(has_perfect_matching(&id).unwrap());
        let g = graph(&[&[0, 0, 0], &[1, 1, 1], &[1, 1, 1]]);
        assert!(!has_perfect_matching(&g).unwrap());
        let g = BipartiteGraph::complete(2, 3);
        assert!(matches!(
            has_perfect_matching(&g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weight_examples() {
        let p = WeightedAssignmentProblem::from_rows(&[
            vec![Some(5.0), Some(1.0)],
            vec![Some(1.0), Some(5.0)],
        ])
        .unwrap();
        let a = max_weight_matching(&p);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total, 10.0);

        let mut rows = vec![vec![None; 3]; 3];
        rows[1][2] = Some(7.0);
        let a = max_weight_matching(&WeightedAssignmentProblem::from_rows(&rows).unwrap());
        assert_eq!(a.total, 7.0);
        assert_eq!(a.pairs, vec![(1, 2)]);
    }

    #[test]
    fn rectangular_weight_instances() {
        // More rows than columns: only two rows can be matched.
        let p = WeightedAssignmentProblem::from_rows(&[
            vec![Some(3.0), Some(1.0)],
            vec![Some(4.0), None],
            vec![None, Some(2.0)],
        ])
        .unwrap();
        let a = max_weight_matching(&p);
        assert_eq!(a.total, 6.0);
        assert_eq!(a.pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn serve_set_examples() {
        let g = graph(&[&[1, 1, 0], &[0, 0, 1], &[0, 0, 1]]);
        assert!(feasible_serve_set(&[2, 0, 0], &g));
        let g = graph(&[&[1, 0, 0], &[0, 1, 1], &[0, 1, 1]]);
        assert!(!feasible_serve_set(&[2, 0, 0], &g));
        assert!(!feasible_serve_set(&[2, 1, 1], &BipartiteGraph::complete(3, 3)));
        assert!(feasible_serve_set(&[0, 0, 0], &BipartiteGraph::empty(3, 3)));
    }

    #[test]
    fn serve_assignment_meets_demands() {
        let g = graph(&[&[1, 1, 0, 0], &[1, 0, 1, 0], &[0, 0, 1, 1], &[0, 0, 0, 1]]);
        let demands = [1, 1, 1, 1];
        let owners = serve_assignment(&demands, &g).unwrap();
        let mut got = [0usize; 4];
        for (s, o) in owners.iter().enumerate() {
            if let Some(q) = o {
                assert!(g.get(*q, s));
                got[*q] += 1;
            }
        }
        assert_eq!(got, demands);
    }
}
