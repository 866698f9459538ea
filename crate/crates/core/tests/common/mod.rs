#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use rfsched::matching::{BipartiteGraph, WeightedAssignmentProblem};

/// Largest matching by trying every choice for each left vertex.
pub fn brute_cardinality(g: &BipartiteGraph) -> usize {
    fn go(g: &BipartiteGraph, i: usize, used: &mut Vec<bool>) -> usize {
        if i == g.left_count() {
            return 0;
        }
        let mut best = go(g, i + 1, used);
        for j in 0..g.right_count() {
            if g.get(i, j) && !used[j] {
                used[j] = true;
                best = best.max(1 + go(g, i + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(g, 0, &mut vec![false; g.right_count()])
}

/// Heaviest matching weight by exhaustive search.
pub fn brute_weight(p: &WeightedAssignmentProblem) -> f64 {
    fn go(p: &WeightedAssignmentProblem, i: usize, used: &mut Vec<bool>) -> f64 {
        if i == p.rows() {
            return 0.0;
        }
        let mut best = go(p, i + 1, used);
        for j in 0..p.cols() {
            if let (Some(w), false) = (p.weight(i, j), used[j]) {
                used[j] = true;
                best = best.max(w + go(p, i + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(p, 0, &mut vec![false; p.cols()])
}

/// Random queue state at slot 30 with up to `max_len` packets per queue.
pub fn random_state<R: Rng>(rng: &mut R, n: usize, max_len: usize, p_on: f64) -> (Vec<VecDeque<u64>>, BipartiteGraph) {
    let queues = (0..n)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            let mut v: Vec<u64> = (0..len).map(|_| rng.random_range(0..=30)).collect();
            v.sort_unstable();
            v.into_iter().collect()
        })
        .collect();
    let mut g = BipartiteGraph::empty(n, n);
    for i in 0..n {
        for j in 0..n {
            g.set(i, j, rng.random_bool(p_on));
        }
    }
    (queues, g)
}
