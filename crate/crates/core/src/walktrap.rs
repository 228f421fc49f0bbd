//! Walktrap community detection on small weighted undirected graphs.
//!
//! Each vertex gets a self-loop weighing the mean of its incident edge
//! weights (1 when isolated). With `P = D^-1 A` and walk length `t`, the
//! distance between communities is `r^2 = sum_k (P^t_C1k - P^t_C2k)^2 / d(k)`
//! and merging `C1`, `C2` costs
//! `dsigma = (1/n) * |C1||C2| / (|C1| + |C2|) * r^2`. Only adjacent
//! communities merge; the cheapest pair goes first, ties broken by the lowest
//! community indices. The dendrogram is cut at the level with the highest
//! weighted modularity on the original graph (earliest level on ties).

use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_WALK_LENGTH: usize = 4;

/// Undirected graph with non-negative weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<BTreeMap<usize, f64>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![BTreeMap::new(); n],
        }
    }

    /// Non-positive weights and self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        if a == b || w.is_nan() || w <= 0.0 {
            return;
        }
        *self.adj[a].entry(b).or_insert(0.0) += w;
        *self.adj[b].entry(a).or_insert(0.0) += w;
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &BTreeMap<usize, f64> {
        &self.adj[v]
    }

    pub fn strength(&self, v: usize) -> f64 {
        self.adj[v].values().sum()
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.len()).map(|v| self.strength(v)).sum::<f64>() / 2.0
    }
}

/// Newman weighted modularity of `membership` (community id per vertex).
/// An edgeless graph scores 0.
pub fn modularity(g: &WeightedGraph, membership: &[usize]) -> f64 {
    let m = g.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let k = membership.iter().copied().max().map_or(0, |x| x + 1);
    let mut inside = vec![0.0; k];
    let mut strength = vec![0.0; k];
    for v in 0..g.len() {
        let c = membership[v];
        strength[c] += g.strength(v);
        for (&u, &w) in g.neighbors(v) {
            if membership[u] == c {
                inside[c] += w;
            }
        }
    }
    // `inside` counted every internal edge twice
    (0..k)
        .map(|c| inside[c] / (2.0 * m) - (strength[c] / (2.0 * m)).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalktrapResult {
    /// Community id per vertex, numbered in order of first appearance.
    pub membership: Vec<usize>,
    pub modularity: f64,
    /// Modularity after 0, 1, 2, ... merges.
    pub levels: Vec<f64>,
    /// Merged community indices per step; the merged community gets index `n + step`.
    pub merges: Vec<(usize, usize)>,
}

impl WalktrapResult {
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let k = self.membership.iter().copied().max().map_or(0, |x| x + 1);
        let mut out = vec![Vec::new(); k];
        for (v, &c) in self.membership.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

struct Community {
    size: usize,
    probs: Vec<f64>,
    neighbors: BTreeSet<usize>,
}

fn distance_cost(a: &Community, b: &Community, degree: &[f64], n: usize) -> f64 {
    let r2: f64 = a
        .probs
        .iter()
        .zip(&b.probs)
        .zip(degree)
        .map(|((p, q), d)| (p - q) * (p - q) / d)
        .sum();
    let (sa, sb) = (a.size as f64, b.size as f64);
    sa * sb / (sa + sb) * r2 / n as f64
}

fn relabel(raw: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    raw.iter()
        .map(|r| {
            let next = map.len();
            *map.entry(*r).or_insert(next)
        })
        .collect()
}

pub fn walktrap(g: &WeightedGraph, t: usize) -> WalktrapResult {
    let n = g.len();
    // Self-loop weights and degrees of the augmented graph.
    let loops: Vec<f64> = (0..n)
        .map(|v| {
            let nb = g.neighbors(v);
            if nb.is_empty() {
                1.0
            } else {
                nb.values().sum::<f64>() / nb.len() as f64
            }
        })
        .collect();
    let degree: Vec<f64> = (0..n).map(|v| g.strength(v) + loops[v]).collect();

    let step = |row: &[f64]| -> Vec<f64> {
        let mut next = vec![0.0; n];
        for (i, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let share = p / degree[i];
            next[i] += share * loops[i];
            for (&j, &w) in g.neighbors(i) {
                next[j] += share * w;
            }
        }
        next
    };

    let mut communities: BTreeMap<usize, Community> = BTreeMap::new();
    for v in 0..n {
        let mut probs = vec![0.0; n];
        probs[v] = 1.0;
        for _ in 0..t {
            probs = step(&probs);
        }
        communities.insert(
            v,
            Community {
                size: 1,
                probs,
                neighbors: g.neighbors(v).keys().copied().collect(),
            },
        );
    }

    let mut costs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&a, ca) in &communities {
        for &b in ca.neighbors.range(a + 1..) {
            costs.insert((a, b), distance_cost(ca, &communities[&b], &degree, n));
        }
    }

    let mut raw: Vec<usize> = (0..n).collect();
    let mut levels = vec![modularity(g, &raw)];
    let mut merges = Vec::new();
    let mut best = (levels[0], raw.clone());

    while let Some((&(a, b), _)) = costs
        .iter()
        .min_by(|x, y| x.1.total_cmp(y.1).then_with(|| x.0.cmp(y.0)))
    {
        let ca = communities.remove(&a).expect("live community");
        let cb = communities.remove(&b).expect("live community");
        let id = n + merges.len();
        merges.push((a, b));
        costs.retain(|&(x, y), _| x != a && x != b && y != a && y != b);

        let size = ca.size + cb.size;
        let (wa, wb) = (ca.size as f64 / size as f64, cb.size as f64 / size as f64);
        let probs = ca.probs.iter().zip(&cb.probs).map(|(p, q)| wa * p + wb * q).collect();
        let mut neighbors: BTreeSet<usize> = ca.neighbors.union(&cb.neighbors).copied().collect();
        neighbors.remove(&a);
        neighbors.remove(&b);
        for &nb in &neighbors {
            let c = communities.get_mut(&nb).expect("neighbor is live");
            c.neighbors.remove(&a);
            c.neighbors.remove(&b);
            c.neighbors.insert(id);
        }
        let merged = Community {
            size,
            probs,
            neighbors,
        };
        for &nb in &merged.neighbors {
            costs.insert((nb, id), distance_cost(&communities[&nb], &merged, &degree, n));
        }
        communities.insert(id, merged);

        for r in raw.iter_mut() {
            if *r == a || *r == b {
                *r = id;
            }
        }
        let q = modularity(g, &relabel(&raw));
        levels.push(q);
        if q > best.0 {
            best = (q, raw.clone());
        }
    }

    WalktrapResult {
        membership: relabel(&best.1),
        modularity: best.0,
        levels,
        merges,
    }
}
