//! MaxCut instances, the logical QAOA circuit, cut values, brute-force optima
//! and the distribution metrics built on them.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{Gate, PhysicalCircuit, Role};
use crate::par::ExecPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QaoaError {
    #[error("a 3-regular graph needs an even vertex count of at least 4, got {0}")]
    RegularSize(usize),
    #[error("density must lie in [0, 1], got {0}")]
    Density(f64),
    #[error("no simple 3-regular pairing found after {0} attempts")]
    PairingFailed(usize),
    #[error("edge ({0}, {1}) is a self-loop, duplicate or out of range")]
    BadEdge(usize, usize),
    #[error("brute force is limited to {max} vertices, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error("parameter lists must both have length p = {p}; got {gammas} gammas and {betas} betas")]
    ParamLength { p: usize, gammas: usize, betas: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Regular3,
    ErdosRenyi,
    Custom,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Regular3 => "REGULAR_3",
            GraphKind::ErdosRenyi => "ERDOS_RENYI",
            GraphKind::Custom => "CUSTOM",
        }
    }

    /// Accepts the canonical names and the short forms `regular3`, `er`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "regular_3" | "regular3" | "3_regular" => Some(GraphKind::Regular3),
            "erdos_renyi" | "er" => Some(GraphKind::ErdosRenyi),
            "custom" => Some(GraphKind::Custom),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: i64,
}

/// Vertices are `0..k`; vertex `v` is logical qubit `v + 1` once encoded.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemGraph {
    pub k: usize,
    pub edges: Vec<Edge>,
    pub kind: GraphKind,
    pub seed: Option<u64>,
}

impl ProblemGraph {
    pub fn new(k: usize, pairs: &[(usize, usize)]) -> Result<Self, QaoaError> {
        let edges = pairs.iter().map(|&(u, v)| Edge { u, v, w: 1 }).collect();
        Self::from_edges(k, edges, GraphKind::Custom, None)
    }

    pub fn from_edges(k: usize, edges: Vec<Edge>, kind: GraphKind, seed: Option<u64>) -> Result<Self, QaoaError> {
        let mut seen = std::collections::HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            let (u, v) = (e.u.min(e.v), e.u.max(e.v));
            if u == v || v >= k || !seen.insert((u, v)) {
                return Err(QaoaError::BadEdge(e.u, e.v));
            }
            norm.push(Edge { u, v, w: e.w });
        }
        Ok(ProblemGraph { k, edges: norm, kind, seed })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.k];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    pub fn is_unweighted(&self) -> bool {
        self.edges.iter().all(|e| e.w == 1)
    }

    pub fn total_weight(&self) -> i64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, i64)>> {
        let mut adj = vec![Vec::new(); self.k];
        for e in &self.edges {
            adj[e.u].push((e.v, e.w));
            adj[e.v].push((e.u, e.w));
        }
        adj
    }

    /// `graph k m` header followed by `edge u v [w]` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("graph {} {}\n", self.k, self.edges.len());
        for e in &self.edges {
            if e.w == 1 {
                let _ = writeln!(s, "edge {} {}", e.u, e.v);
            } else {
                let _ = writeln!(s, "edge {} {} {}", e.u, e.v, e.w);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, QaoaError> {
        let err = |line: usize, msg: &str| QaoaError::Parse { line, msg: msg.to_string() };
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            let num = |t: &str| t.parse::<usize>().map_err(|_| err(line, "expected a non-negative integer"));
            match toks[0] {
                "graph" if toks.len() == 3 && header.is_none() => header = Some((num(toks[1])?, num(toks[2])?)),
                "edge" if toks.len() == 3 || toks.len() == 4 => {
                    let w = match toks.get(3) {
                        Some(t) => t.parse::<i64>().map_err(|_| err(line, "weight must be an integer"))?,
                        None => 1,
                    };
                    edges.push(Edge { u: num(toks[1])?, v: num(toks[2])?, w });
                }
                _ => return Err(err(line, "expected `graph k m` or `edge u v [w]`")),
            }
        }
        let (k, m) = header.ok_or_else(|| err(1, "missing `graph k m` header"))?;
        if m != edges.len() {
            return Err(err(0, &format!("header announces {m} edges, found {}", edges.len())));
        }
        Self::from_edges(k, edges, GraphKind::Custom, None)
    }
}

pub fn generate_instance(kind: GraphKind, k: usize, density: Option<f64>, seed: u64) -> Result<ProblemGraph, QaoaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        GraphKind::Regular3 => random_regular3(k, &mut rng, seed),
        GraphKind::ErdosRenyi => {
            let p = density.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&p) {
                return Err(QaoaError::Density(p));
            }
            let mut edges = Vec::new();
            for u in 0..k {
                for v in u + 1..k {
                    if rng.random::<f64>() < p {
                        edges.push(Edge { u, v, w: 1 });
                    }
                }
            }
            ProblemGraph::from_edges(k, edges, GraphKind::ErdosRenyi, Some(seed))
        }
        GraphKind::Custom => ProblemGraph::from_edges(k, Vec::new(), GraphKind::Custom, Some(seed)),
    }
}

/// Configuration (pairing) model, rejecting pairings with loops or multi-edges.
fn random_regular3(k: usize, rng: &mut ChaCha8Rng, seed: u64) -> Result<ProblemGraph, QaoaError> {
    if k < 4 || k % 2 == 1 {
        return Err(QaoaError::RegularSize(k));
    }
    const ATTEMPTS: usize = 10_000;
    let mut points: Vec<usize> = (0..3 * k).map(|p| p / 3).collect();
    'attempt: for _ in 0..ATTEMPTS {
        points.shuffle(rng);
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(3 * k / 2);
        for pair in points.chunks(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'attempt;
            }
            edges.push(Edge { u, v, w: 1 });
        }
        edges.sort_by_key(|e| (e.u, e.v));
        return ProblemGraph::from_edges(k, edges, GraphKind::Regular3, Some(seed));
    }
    Err(QaoaError::PairingFailed(ATTEMPTS))
}

/// Fixed QAOA angles; `p` is the common length.
#[derive(Clone, Debug, PartialEq)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self, QaoaError> {
        if gammas.len() != betas.len() {
            return Err(QaoaError::ParamLength { p: gammas.len(), gammas: gammas.len(), betas: betas.len() });
        }
        Ok(QaoaParams { gammas, betas })
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }

    /// Uniform random angles in `[-π, π)`.
    pub fn random(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        let mut draw = |_| rng.random_range(-pi..pi);
        let gammas = (0..p).map(&mut draw).collect();
        let betas = (0..p).map(&mut draw).collect();
        QaoaParams { gammas, betas }
    }

    /// Tree-optimal fixed angles for 3-regular graphs (p ≤ 3), published in the
    /// `exp(-iγC) exp(-iβB)` convention and converted to the `RZZ`/`RX`
    /// convention used here: `γ ↦ -γ/2`, `β` unchanged.
    pub fn fixed_regular3(p: usize) -> Option<Self> {
        let (gammas, betas): (&[f64], &[f64]) = match p {
            1 => (&[0.6155], &[0.3927]),
            2 => (&[0.4877, 0.8979], &[0.5550, 0.2921]),
            3 => (&[0.4173, 0.7924, 0.9752], &[0.6089, 0.4622, 0.2346]),
            _ => return None,
        };
        Some(QaoaParams { gammas: gammas.iter().map(|g| -g / 2.0).collect(), betas: betas.to_vec() })
    }

    pub fn to_text(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        format!("p: {}\ngammas: [{}]\nbetas: [{}]\n", self.p(), list(&self.gammas), list(&self.betas))
    }

    pub fn from_text(text: &str) -> Result<Self, QaoaError> {
        let kv = crate::kv::parse(text).map_err(|(line, msg)| QaoaError::Parse { line, msg })?;
        let perr = |msg: String| QaoaError::Parse { line: 0, msg };
        let p: usize = kv.scalar("p").map_err(perr)?;
        let gammas = kv.list("gammas").map_err(perr)?;
        let betas = kv.list("betas").map_err(perr)?;
        if gammas.len() != p || betas.len() != p {
            return Err(QaoaError::ParamLength { p, gammas: gammas.len(), betas: betas.len() });
        }
        Ok(QaoaParams { gammas, betas })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogicalLayer {
    /// `exp(-i θ Z̄_u Z̄_v)` per term, `θ = γ w`.
    Phase(Vec<(usize, usize, f64)>),
    /// `exp(-i β X̄_v)` on every vertex.
    Mixer(f64),
}

/// Logical `|+⟩^k` preparation followed by alternating layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalCircuit {
    pub k: usize,
    pub layers: Vec<LogicalLayer>,
}

impl LogicalCircuit {
    pub fn p(&self) -> usize {
        self.layers.len() / 2
    }

    pub fn phase_gate_count(&self) -> usize {
        self.layers.iter().map(|l| if let LogicalLayer::Phase(t) = l { t.len() } else { 0 }).sum()
    }

    pub fn mixer_gate_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LogicalLayer::Mixer(_))).count() * self.k
    }
}

pub fn build_qaoa(graph: &ProblemGraph, params: &QaoaParams) -> LogicalCircuit {
    let mut layers = Vec::with_capacity(2 * params.p());
    for (&gamma, &beta) in params.gammas.iter().zip(&params.betas) {
        layers.push(LogicalLayer::Phase(graph.edges.iter().map(|e| (e.u, e.v, gamma * e.w as f64)).collect()));
        layers.push(LogicalLayer::Mixer(beta));
    }
    LogicalCircuit { k: graph.k, layers }
}

/// Unencoded reference: qubit `v` holds vertex `v`, read into bit `v`.
pub fn unencoded_circuit(logical: &LogicalCircuit) -> PhysicalCircuit {
    let k = logical.k;
    let mut c = PhysicalCircuit::new(k, k);
    c.declare(0, Role::Init);
    for v in 0..k {
        c.push(Gate::h(v));
    }
    for (i, layer) in logical.layers.iter().enumerate() {
        let id = i + 1;
        match layer {
            LogicalLayer::Phase(terms) => {
                c.declare(id, Role::PhaseLayer);
                for &(u, v, theta) in terms {
                    c.push(Gate::rzz(u, v, theta).in_component(id));
                }
            }
            LogicalLayer::Mixer(beta) => {
                c.declare(id, Role::MixerLayer);
                for v in 0..k {
                    c.push(Gate::rx(v, *beta).in_component(id));
                }
            }
        }
    }
    let fin = logical.layers.len() + 1;
    c.declare(fin, Role::FinalMeas);
    for v in 0..k {
        c.push(Gate::mz(v, v).in_component(fin));
    }
    c.logicals = (0..k).map(|v| vec![v]).collect();
    c
}

pub fn cut_value(graph: &ProblemGraph, x: u64) -> i64 {
    graph.edges.iter().filter(|e| (x >> e.u ^ x >> e.v) & 1 == 1).map(|e| e.w).sum()
}

pub fn energy(graph: &ProblemGraph, x: u64) -> i64 {
    -cut_value(graph, x)
}

/// `⟨x| Σ w Z_u Z_v |x⟩ = W − 2·cut`.
pub fn hamiltonian_value(graph: &ProblemGraph, x: u64) -> i64 {
    graph.total_weight() - 2 * cut_value(graph, x)
}

pub const BRUTE_FORCE_MAX: usize = 30;

pub fn brute_force_optimum(graph: &ProblemGraph) -> Result<i64, QaoaError> {
    brute_force_optimum_with(graph, ExecPolicy::default())
}

/// Gray-code enumeration of the `2^(k-1)` cuts with the last vertex fixed to
/// 0 (flipping every bit leaves the cut unchanged), split into chunks by the
/// top free bits.
pub fn brute_force_optimum_with(graph: &ProblemGraph, policy: ExecPolicy) -> Result<i64, QaoaError> {
    let k = graph.k;
    if k > BRUTE_FORCE_MAX {
        return Err(QaoaError::TooLarge { got: k, max: BRUTE_FORCE_MAX });
    }
    if k <= 1 {
        return Ok(0);
    }
    let free = k - 1;
    let chunk_bits = free.min(6);
    let inner = free - chunk_bits;
    let adj = graph.neighbors();
    let best = policy.map_range(1 << chunk_bits, |chunk| {
        let mut x = (chunk as u64) << inner;
        let mut cut = cut_value(graph, x);
        let mut best = cut;
        for i in 1u64..(1 << inner) {
            let v = i.trailing_zeros() as usize;
            let side = x >> v & 1;
            for &(u, w) in &adj[v] {
                cut += if x >> u & 1 == side { w } else { -w };
            }
            x ^= 1 << v;
            best = best.max(cut);
        }
        best
    });
    Ok(best.into_iter().max().unwrap_or(0))
}

pub fn expected_cut<I: IntoIterator<Item = (u64, f64)>>(dist: I, graph: &ProblemGraph) -> f64 {
    dist.into_iter().map(|(x, p)| p * cut_value(graph, x) as f64).sum()
}

/// `E[cut] / f_max`, equivalently `(W − ⟨C⟩) / (2 f_max)`.
pub fn approximation_ratio<I: IntoIterator<Item = (u64, f64)>>(dist: I, graph: &ProblemGraph, f_max: i64) -> f64 {
    if f_max == 0 {
        return 1.0;
    }
    expected_cut(dist, graph) / f_max as f64
}

/// Probability mass on optimal cuts.
pub fn success_probability<I: IntoIterator<Item = (u64, f64)>>(dist: I, graph: &ProblemGraph, f_max: i64) -> f64 {
    dist.into_iter().filter(|&(x, _)| cut_value(graph, x) == f_max).map(|(_, p)| p).sum()
}

/// Iterates a dense distribution over `0..2^k` as `(bitstring, probability)`.
pub fn dense_iter(probs: &[f64]) -> impl Iterator<Item = (u64, f64)> + '_ {
    probs.iter().enumerate().map(|(x, &p)| (x as u64, p))
}
