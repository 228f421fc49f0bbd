//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use textpond_core::engine::{Engine, EngineConfig, IngestReport};
use textpond_core::synth::{self, FixtureDocument};
use textpond_core::DocumentId;

pub struct Pond {
    pub dir: tempfile::TempDir,
    pub engine: Engine,
    pub docs: Vec<FixtureDocument>,
    pub report: IngestReport,
    /// Fixture document behind each ingested id.
    pub by_id: BTreeMap<DocumentId, FixtureDocument>,
}

impl Pond {
    pub fn pond_root(&self) -> PathBuf {
        self.dir.path().join("pond")
    }

    pub fn store_root(&self) -> PathBuf {
        self.dir.path().join("store")
    }
}

pub fn ingest(docs: Vec<FixtureDocument>) -> Pond {
    let dir = tempfile::tempdir().expect("tempdir");
    let pond = dir.path().join("pond");
    synth::write_pond(&pond, &docs).expect("write pond");
    let engine = Engine::open(EngineConfig::new(dir.path().join("store"))).expect("open store");
    let report = engine.ingest(&pond).expect("ingest");
    let by_path: BTreeMap<PathBuf, &FixtureDocument> = docs.iter().map(|d| (pond.join(&d.path), d)).collect();
    let by_id = report
        .ingested
        .iter()
        .map(|i| (i.id.clone(), by_path[&i.source].clone()))
        .collect();
    Pond {
        dir,
        engine,
        docs,
        report,
        by_id,
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn dense(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> (Vec<f64>, Vec<f64>) {
    let vocab: BTreeSet<&String> = u.keys().chain(v.keys()).collect();
    let get = |m: &BTreeMap<String, f64>, t: &String| m.get(t).copied().unwrap_or(0.0);
    (
        vocab.iter().map(|t| get(u, t)).collect(),
        vocab.iter().map(|t| get(v, t)).collect(),
    )
}

pub fn cosine_oracle(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> f64 {
    let (x, y) = dense(u, v);
    let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / nx / ny
}

pub fn chi_square_oracle(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> f64 {
    let (x, y) = dense(u, v);
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let mut chi = 0.0;
    for i in 0..x.len() {
        let (p, q) = (x[i] / sx, y[i] / sy);
        if p + q > 0.0 {
            chi += (p - q).powi(2) / (p + q);
        }
    }
    1.0 / (1.0 + chi)
}

/// Rank of each value: number of smaller values plus the mean position
/// among equal ones.
fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let less = x.iter().filter(|b| *b < a).count() as f64;
            let equal = x.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> f64 {
    let (x, y) = dense(u, v);
    let (rx, ry) = (counting_ranks(&x), counting_ranks(&y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// `Q = 1/(2m) sum_ij [A_ij - k_i k_j / (2m)] [c_i == c_j]` on a dense
/// symmetric weight matrix with zero diagonal.
pub fn modularity_oracle(adj: &[Vec<f64>], membership: &[usize]) -> f64 {
    let k: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..adj.len() {
        for j in 0..adj.len() {
            if membership[i] == membership[j] {
                q += adj[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=k {
            cur.push(c);
            rec(i + 1, n, cur, k.max(c + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Dense matrix for cliques of `sizes` chained by single edges of weight
/// `bridge` (last node of one clique to first node of the next).
pub fn planted_cliques(sizes: &[usize], bridge: f64) -> Vec<Vec<f64>> {
    let n: usize = sizes.iter().sum();
    let mut adj = vec![vec![0.0; n]; n];
    let mut start = 0;
    for (c, &s) in sizes.iter().enumerate() {
        for (i, row) in adj.iter_mut().enumerate().skip(start).take(s) {
            for (j, w) in row.iter_mut().enumerate().skip(start).take(s) {
                if i != j {
                    *w = 1.0;
                }
            }
        }
        if c > 0 {
            adj[start - 1][start] = bridge;
            adj[start][start - 1] = bridge;
        }
        start += s;
    }
    adj
}

pub fn planted_membership(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect()
}
