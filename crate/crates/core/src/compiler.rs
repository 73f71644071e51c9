//! Encoded-circuit compilation: the naive baseline, and a layer-by-layer
//! best-first search that co-schedules algorithmic rotations with the gadgets.
//!
//! Physical layout: `t = 0`, logical qubit `i` (vertex `i - 1`) on qubit `i`,
//! `b = k + 1`, then the two ancillas.

use std::cmp::Reverse;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::convert::Infallible;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use fixedbitset::FixedBitSet;
use petgraph::graph::{NodeIndex, UnGraph};
use thiserror::Error;

use crate::circuit::{two_qubit_depth, CircuitError, Gate, PhysicalCircuit, Role};
use crate::gadgets::{syndrome_new, syndrome_new_step_source, syndrome_new_x_slots, Gadget, GadgetError, GadgetKind, IcebergLayout};
use crate::qaoa::{LogicalCircuit, LogicalLayer, ProblemGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GadgetSet {
    Old,
    New,
}

impl GadgetSet {
    pub fn init(self) -> GadgetKind {
        match self {
            GadgetSet::Old => GadgetKind::InitOld,
            GadgetSet::New => GadgetKind::InitNew,
        }
    }

    pub fn syndrome(self) -> GadgetKind {
        match self {
            GadgetSet::Old => GadgetKind::SyndromeOld,
            GadgetSet::New => GadgetKind::SyndromeNew,
        }
    }

    pub fn final_meas(self) -> GadgetKind {
        match self {
            GadgetSet::Old => GadgetKind::FinalOld,
            GadgetSet::New => GadgetKind::FinalNew,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GadgetSet::Old => "old",
            GadgetSet::New => "new",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "old" => Some(GadgetSet::Old),
            "new" => Some(GadgetSet::New),
            _ => None,
        }
    }
}

/// How the merged ancilla vertex enters the heuristic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeuristicRule {
    /// Ancilla load divided by two: both ancillas work in parallel.
    Halved,
    /// Ancilla load taken as is.
    Merged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Baseline,
    /// Search without gadget resynthesis or the bottom-anchored mixer.
    Search,
    Resynth,
    Z2,
    ResynthZ2,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Baseline, Mode::Search, Mode::Resynth, Mode::Z2, Mode::ResynthZ2];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Search => "search",
            Mode::Resynth => "resynth",
            Mode::Z2 => "z2",
            Mode::ResynthZ2 => "resynth+z2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// `(resynthesize, use_z2)` for search modes.
    pub fn flags(self) -> Option<(bool, bool)> {
        match self {
            Mode::Baseline => None,
            Mode::Search => Some((false, false)),
            Mode::Resynth => Some((true, false)),
            Mode::Z2 => Some((false, true)),
            Mode::ResynthZ2 => Some((true, true)),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fence {
    None,
    Before,
    After,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileConfig {
    pub num_syndromes: usize,
    pub gadget_set: GadgetSet,
    pub use_z2: bool,
    pub resynthesize: bool,
    pub expansion_width: usize,
    /// States kept per layer by the rollout that seeds the search; 1 is greedy.
    pub beam_width: usize,
    /// Node expansions before the search stops and keeps its best rollout.
    pub queue_cap: usize,
    pub heuristic: HeuristicRule,
    /// Baseline only: full-register barriers around each gadget.
    pub fence: Fence,
}

pub const DEFAULT_QUEUE_CAP: usize = 2_000;

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            num_syndromes: 3,
            gadget_set: GadgetSet::New,
            use_z2: true,
            resynthesize: true,
            expansion_width: 3,
            beam_width: 8,
            queue_cap: DEFAULT_QUEUE_CAP,
            heuristic: HeuristicRule::Halved,
            fence: Fence::None,
        }
    }
}

impl CompileConfig {
    /// Reference naive compiler: original gadgets, each fenced in front.
    pub fn baseline() -> Self {
        CompileConfig {
            gadget_set: GadgetSet::Old,
            use_z2: false,
            resynthesize: false,
            fence: Fence::Before,
            ..Default::default()
        }
    }

    /// Sets the search flags of `mode`; the baseline keeps them untouched.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        if let Some((r, z)) = mode.flags() {
            self.resynthesize = r;
            self.use_z2 = z;
        }
        self
    }

    pub fn search_mode(&self) -> Mode {
        match (self.resynthesize, self.use_z2) {
            (false, false) => Mode::Search,
            (true, false) => Mode::Resynth,
            (false, true) => Mode::Z2,
            (true, true) => Mode::ResynthZ2,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("expansion width must be at least 1")]
    Width,
    #[error("k = {0} needs more than 64 physical qubits")]
    TooWide(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchStats {
    pub h_source: usize,
    /// Layers of the plan before the final measurement was appended.
    pub planned_layers: usize,
    pub expansions: usize,
    pub budget_exhausted: bool,
    /// The search schedule was deeper than the baseline, which was kept instead.
    pub fell_back_to_baseline: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileStats {
    pub mode: Mode,
    pub gadget_set: GadgetSet,
    pub k: usize,
    pub p: usize,
    pub num_syndromes: usize,
    pub two_qubit_gates: usize,
    /// Encoded logical two-qubit rotations (the phase-layer RZZs).
    pub algorithmic_two_qubit_gates: usize,
    pub depth_2q: usize,
    pub area: usize,
    pub wall_time_s: f64,
    pub search: Option<SearchStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileResult {
    pub circuit: PhysicalCircuit,
    pub stats: CompileStats,
}

/// Where each component of the encoded circuit goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Init,
    /// Index into the logical layers.
    Algo(usize),
    Syndrome,
    Final,
}

/// Splits the algorithmic components into `s + 1` chunks of balanced gate
/// count; syndromes sit at the component boundaries nearest to `i T / (s + 1)`.
pub fn plan_layout(logical: &LogicalCircuit, num_syndromes: usize) -> Vec<Slot> {
    let counts: Vec<usize> = logical
        .layers
        .iter()
        .map(|l| match l {
            LogicalLayer::Phase(t) => t.len(),
            LogicalLayer::Mixer(_) => logical.k,
        })
        .collect();
    let total: usize = counts.iter().sum();
    let mut cum = vec![0usize];
    for c in &counts {
        cum.push(cum.last().unwrap() + c);
    }
    let mut at = vec![0usize; cum.len()];
    for i in 1..=num_syndromes {
        let target = (i * total) as f64 / (num_syndromes + 1) as f64;
        let dist = |b: usize| (cum[b] as f64 - target).abs();
        let best = (0..cum.len()).min_by(|&x, &y| dist(x).total_cmp(&dist(y))).unwrap();
        at[best] += 1;
    }
    let mut slots = vec![Slot::Init];
    for (b, &n) in at.iter().enumerate() {
        slots.extend(std::iter::repeat_n(Slot::Syndrome, n));
        if b < counts.len() {
            slots.push(Slot::Algo(b));
        }
    }
    slots.push(Slot::Final);
    slots
}

fn layout_for(k: usize) -> Result<IcebergLayout, CompileError> {
    let layout = IcebergLayout::new(k)?;
    if layout.num_qubits() > 64 {
        return Err(CompileError::TooWide(k));
    }
    Ok(layout)
}

fn check_syndromes(layout: IcebergLayout, cfg: &CompileConfig) -> Result<(), CompileError> {
    if cfg.num_syndromes > 0 && cfg.gadget_set == GadgetSet::New && !layout.supports_new_syndrome() {
        return Err(GadgetError::Divisibility(layout.k).into());
    }
    Ok(())
}

fn algo_role(layer: &LogicalLayer) -> Role {
    match layer {
        LogicalLayer::Phase(_) => Role::PhaseLayer,
        LogicalLayer::Mixer(_) => Role::MixerLayer,
    }
}

fn shifted(g: &Gate, comp: usize, offset: usize) -> Gate {
    let mut g = g.clone().in_component(comp);
    if let Some(c) = g.clbit.as_mut() {
        *c += offset;
    }
    g
}

/// Copies the fragment's checks (and decode map, if any) with shifted bits.
fn absorb_bookkeeping(out: &mut PhysicalCircuit, frag: &PhysicalCircuit, offset: usize) {
    for c in &frag.checks {
        let mut c = c.clone();
        c.bits.iter_mut().for_each(|b| *b += offset);
        out.checks.push(c);
    }
    if !frag.logicals.is_empty() {
        out.logicals = frag.logicals.iter().map(|l| l.iter().map(|b| b + offset).collect()).collect();
    }
}

fn finish_stats(
    circuit: &PhysicalCircuit,
    logical: &LogicalCircuit,
    cfg: &CompileConfig,
    mode: Mode,
    start: Instant,
    search: Option<SearchStats>,
) -> Result<CompileStats, CompileError> {
    let depth = two_qubit_depth(circuit)?;
    let algorithmic = circuit
        .gates
        .iter()
        .filter(|g| g.is_two_qubit() && circuit.role_of(g) == Some(Role::PhaseLayer))
        .count();
    Ok(CompileStats {
        mode,
        gadget_set: cfg.gadget_set,
        k: logical.k,
        p: logical.p(),
        num_syndromes: cfg.num_syndromes,
        two_qubit_gates: circuit.two_qubit_gate_count(),
        algorithmic_two_qubit_gates: algorithmic,
        depth_2q: depth,
        area: (logical.k + 2) * depth,
        wall_time_s: start.elapsed().as_secs_f64(),
        search,
    })
}

/// Naive insertion: default-order gadgets, every logical X rotation anchored
/// on the top qubit, gates emitted in program order and layered ASAP.
pub fn compile_baseline(logical: &LogicalCircuit, cfg: &CompileConfig) -> Result<CompileResult, CompileError> {
    let start = Instant::now();
    let layout = layout_for(logical.k)?;
    check_syndromes(layout, cfg)?;
    let order = layout.default_order();
    let slots = plan_layout(logical, cfg.num_syndromes);
    let gadgets = slots
        .iter()
        .map(|s| match s {
            Slot::Init => cfg.gadget_set.init().build(layout, &order).map(Some),
            Slot::Syndrome => cfg.gadget_set.syndrome().build(layout, &order).map(Some),
            Slot::Final => cfg.gadget_set.final_meas().build(layout, &order).map(Some),
            Slot::Algo(_) => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let clbits = gadgets.iter().flatten().map(|g| g.fragment.num_clbits).sum();
    let mut c = PhysicalCircuit::new(layout.num_qubits(), clbits);
    let mut offset = 0;
    for (id, (slot, gadget)) in slots.iter().zip(&gadgets).enumerate() {
        match (slot, gadget) {
            (Slot::Algo(j), _) => {
                let layer = &logical.layers[*j];
                c.declare(id, algo_role(layer));
                match layer {
                    LogicalLayer::Phase(terms) => {
                        for &(u, v, theta) in terms {
                            c.push(Gate::rzz(u + 1, v + 1, theta).in_component(id));
                        }
                    }
                    LogicalLayer::Mixer(beta) => {
                        for i in 1..=logical.k {
                            c.push(Gate::rxx(layout.top(), i, *beta).in_component(id));
                        }
                    }
                }
            }
            (_, Some(g)) => {
                c.declare(id, g.kind.role());
                if matches!(cfg.fence, Fence::Before | Fence::Both) {
                    c.push(Gate::barrier(Vec::new()).in_component(id));
                }
                for gate in &g.fragment.gates {
                    c.push(shifted(gate, id, offset));
                }
                if matches!(cfg.fence, Fence::After | Fence::Both) {
                    c.push(Gate::barrier(Vec::new()).in_component(id));
                }
                absorb_bookkeeping(&mut c, &g.fragment, offset);
                offset += g.fragment.num_clbits;
            }
            (_, None) => unreachable!("gadget slots always carry a gadget"),
        }
    }
    let stats = finish_stats(&c, logical, cfg, Mode::Baseline, start, None)?;
    Ok(CompileResult { circuit: c, stats })
}

/// Vertex degrees as seen by the phase layers.
fn degrees_of(logical: &LogicalCircuit) -> Vec<usize> {
    let mut nbrs = vec![std::collections::BTreeSet::new(); logical.k];
    for layer in &logical.layers {
        if let LogicalLayer::Phase(terms) = layer {
            for &(u, v, _) in terms {
                nbrs[u].insert(v);
                nbrs[v].insert(u);
            }
        }
    }
    nbrs.iter().map(|s| s.len()).collect()
}

/// Init order putting high-degree vertices where the gadget releases qubits
/// first: right after `t` for the staircase, alternating between the two
/// branches (after the roots `t` and `b`) for the two-branch gadget.
pub fn predetermine_init_order(graph: &ProblemGraph, kind: GadgetKind) -> Vec<usize> {
    init_order_from_degrees(&graph.degrees(), kind)
}

fn init_order_from_degrees(degrees: &[usize], kind: GadgetKind) -> Vec<usize> {
    let k = degrees.len();
    let n = k + 2;
    let mut verts: Vec<usize> = (0..k).collect();
    verts.sort_by_key(|&v| (Reverse(degrees[v]), v));
    let phys = verts.iter().map(|v| v + 1);
    match kind {
        GadgetKind::InitNew => {
            let mut order = vec![0; n];
            order[n - 1] = k + 1;
            let slots = (1..n - 1).map(|j| if j % 2 == 1 { j.div_ceil(2) } else { n - 1 - j / 2 });
            for (pos, q) in slots.zip(phys) {
                order[pos] = q;
            }
            order
        }
        _ => std::iter::once(0).chain(phys).chain(std::iter::once(k + 1)).collect(),
    }
}

enum Comp {
    /// Physical `(u, v, θ)` per remaining RZZ.
    Phase(Vec<(usize, usize, f64)>),
    /// One `RXX(anchor, i)` per logical qubit; `z2` allows `b` as anchor.
    Mixer { beta: f64, z2: bool },
    /// A gadget in a fixed order; units are its 2Q gates.
    Fixed { gadget: Gadget, two_q: Vec<usize>, pairs: Vec<(usize, usize)>, preds: Vec<Vec<usize>> },
    /// Depth-reduced syndrome whose qubit order is chosen while scheduling.
    DynSyndrome,
}

impl Comp {
    fn fixed(gadget: Gadget) -> Self {
        let two_q: Vec<usize> = (0..gadget.fragment.gates.len()).filter(|&i| gadget.fragment.gates[i].is_two_qubit()).collect();
        let pairs: Vec<(usize, usize)> = two_q.iter().map(|&i| (gadget.fragment.gates[i].qubits[0], gadget.fragment.gates[i].qubits[1])).collect();
        let mut last: HashMap<usize, usize> = HashMap::new();
        let mut preds = Vec::with_capacity(pairs.len());
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let mut p: Vec<usize> = [a, b].iter().filter_map(|q| last.get(q).copied()).collect();
            p.dedup();
            preds.push(p);
            last.insert(a, j);
            last.insert(b, j);
        }
        Comp::Fixed { gadget, two_q, pairs, preds }
    }

    fn is_gadget(&self) -> bool {
        matches!(self, Comp::Fixed { .. } | Comp::DynSyndrome)
    }
}

#[derive(Clone, Debug, Default, Hash)]
struct SynState {
    step: usize,
    /// Qubit at each position, `usize::MAX` while unassigned.
    order: Vec<usize>,
    pos: Vec<usize>,
}

/// Search state after `g` layers.
#[derive(Clone)]
struct State {
    g: usize,
    cursor: usize,
    done: Vec<FixedBitSet>,
    remaining: Vec<usize>,
    /// Remaining gates per (component, qubit).
    pend: Vec<u16>,
    pmask: Vec<u64>,
    load: Vec<u32>,
    a_load: u32,
    /// First layer in which each qubit can take a two-qubit gate.
    ready: Vec<usize>,
    syn: Vec<SynState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Act {
    /// Phase edge, mixer qubit (`idx = i - 1`, with its anchor) or fixed-gadget gate.
    Unit { comp: usize, idx: usize, anchor: usize },
    /// One step of a dynamic syndrome: `CX(v → a_z)` and `CX(a_x → u)`.
    Block { comp: usize, v: usize, u: usize },
}

struct Node {
    state: State,
    h: usize,
    rec: usize,
}

struct Rec {
    parent: usize,
    acts: Vec<Act>,
}

/// Public view of a search node.
pub struct SearchNode {
    state: State,
}

impl SearchNode {
    pub fn g(&self) -> usize {
        self.state.g
    }
}

/// Weighted multigraph of the remaining work; vertex `num_qubits - 2` stands
/// for both ancillas.
#[derive(Clone, Debug, PartialEq)]
pub struct UncompiledGraph {
    pub num_vertices: usize,
    pub merged_ancilla: usize,
    pub edges: BTreeMap<(usize, usize), u32>,
    /// Weighted degree per vertex; bottom-anchored mixer layers count
    /// `⌈r/2⌉` on both `t` and `b`.
    pub degree: Vec<u32>,
}

impl UncompiledGraph {
    /// No remaining work over `n` code qubits.
    pub fn empty(n: usize) -> Self {
        UncompiledGraph { num_vertices: n + 1, merged_ancilla: n, edges: BTreeMap::new(), degree: vec![0; n + 1] }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: u32) {
        *self.edges.entry((a.min(b), a.max(b))).or_default() += w;
        self.degree[a] += w;
        self.degree[b] += w;
    }

    /// Every code qubit meets the ancillas twice.
    pub fn add_syndrome(&mut self) {
        for q in 0..self.merged_ancilla {
            self.add_edge(q, self.merged_ancilla, 2);
        }
    }

    pub fn heuristic(&self, rule: HeuristicRule) -> usize {
        let a = self.degree[self.merged_ancilla];
        let a = match rule {
            HeuristicRule::Halved => a.div_ceil(2),
            HeuristicRule::Merged => a,
        };
        self.degree[..self.merged_ancilla].iter().copied().max().unwrap_or(0).max(a) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecKind {
    Gate,
    SyndromeBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecEdge {
    pub a: usize,
    pub b: usize,
    pub weight: u32,
    pub kind: ExecKind,
}

pub struct Compiler {
    layout: IcebergLayout,
    k: usize,
    n: usize,
    nq: usize,
    comps: Vec<Comp>,
    roles: Vec<Role>,
    final_kind: GadgetKind,
    cfg: CompileConfig,
    x_slots: Vec<usize>,
    anc: [usize; 2],
    /// Two-qubit gates on the busiest qubit of the final gadget.
    final_chain: usize,
}

impl Compiler {
    pub fn new(logical: &LogicalCircuit, cfg: &CompileConfig) -> Result<Self, CompileError> {
        if cfg.expansion_width == 0 {
            return Err(CompileError::Width);
        }
        let layout = layout_for(logical.k)?;
        check_syndromes(layout, cfg)?;
        let set = cfg.gadget_set;
        let init_order = if cfg.resynthesize {
            init_order_from_degrees(&degrees_of(logical), set.init())
        } else {
            layout.default_order()
        };
        let mut comps = Vec::new();
        let mut roles = Vec::new();
        for slot in plan_layout(logical, cfg.num_syndromes) {
            let comp = match slot {
                Slot::Init => Comp::fixed(set.init().build(layout, &init_order)?),
                Slot::Algo(j) => match &logical.layers[j] {
                    LogicalLayer::Phase(terms) => Comp::Phase(terms.iter().map(|&(u, v, t)| (u + 1, v + 1, t)).collect()),
                    LogicalLayer::Mixer(beta) => Comp::Mixer { beta: *beta, z2: cfg.use_z2 },
                },
                Slot::Syndrome if cfg.resynthesize && set == GadgetSet::New => Comp::DynSyndrome,
                Slot::Syndrome => Comp::fixed(set.syndrome().build(layout, &layout.default_order())?),
                Slot::Final => continue,
            };
            roles.push(match slot {
                Slot::Init => Role::Init,
                Slot::Algo(j) => algo_role(&logical.layers[j]),
                _ => Role::Syndrome,
            });
            comps.push(comp);
        }
        let n = layout.n();
        let fin = set.final_meas().build(layout, &layout.default_order())?;
        let mut per_qubit = vec![0usize; layout.num_qubits()];
        for g in fin.fragment.gates.iter().filter(|g| g.is_two_qubit()) {
            per_qubit[g.qubits[0]] += 1;
            per_qubit[g.qubits[1]] += 1;
        }
        Ok(Compiler {
            layout,
            k: logical.k,
            n,
            nq: layout.num_qubits(),
            comps,
            roles,
            final_kind: set.final_meas(),
            cfg: cfg.clone(),
            x_slots: if layout.supports_new_syndrome() { syndrome_new_x_slots(n) } else { Vec::new() },
            anc: layout.ancillas(),
            final_chain: per_qubit.into_iter().max().unwrap_or(0),
        })
    }

    fn is_ancilla(&self, q: usize) -> bool {
        q >= self.n
    }

    fn units(&self, c: usize) -> usize {
        match &self.comps[c] {
            Comp::Phase(g) => g.len(),
            Comp::Mixer { .. } => self.k,
            Comp::Fixed { pairs, .. } => pairs.len(),
            Comp::DynSyndrome => self.n,
        }
    }

    fn source_state(&self) -> State {
        let (nq, nc) = (self.nq, self.comps.len());
        let (t, b) = (self.layout.top(), self.layout.bottom());
        let mut pend = vec![0u16; nc * nq];
        let mut load = vec![0u32; nq];
        for (c, comp) in self.comps.iter().enumerate() {
            let p = &mut pend[c * nq..(c + 1) * nq];
            match comp {
                Comp::Phase(gs) => gs.iter().for_each(|&(u, v, _)| {
                    p[u] += 1;
                    p[v] += 1;
                }),
                Comp::Mixer { z2, .. } => {
                    (1..=self.k).for_each(|i| p[i] += 1);
                    p[t] += self.k as u16;
                    if *z2 {
                        p[b] += self.k as u16;
                    }
                }
                Comp::Fixed { pairs, .. } => pairs.iter().for_each(|&(x, y)| {
                    p[x] += 1;
                    p[y] += 1;
                }),
                Comp::DynSyndrome => {
                    (0..self.n).for_each(|q| p[q] += 2);
                    self.anc.iter().for_each(|&a| p[a] += self.n as u16);
                }
            }
            for q in 0..self.n {
                load[q] += match comp {
                    Comp::Mixer { z2: true, .. } if q == t || q == b => self.k.div_ceil(2) as u32,
                    _ => p[q] as u32,
                };
            }
        }
        let a_load = (0..nc).map(|c| self.anc.iter().map(|&a| pend[c * nq + a] as u32).sum::<u32>()).sum();
        let pmask = (0..nc)
            .map(|c| (0..nq).filter(|&q| pend[c * nq + q] > 0).fold(0u64, |m, q| m | 1 << q))
            .collect();
        let syn = self
            .comps
            .iter()
            .map(|comp| match comp {
                Comp::DynSyndrome => SynState { step: 0, order: vec![usize::MAX; self.n], pos: vec![usize::MAX; nq] },
                _ => SynState::default(),
            })
            .collect();
        let mut st = State {
            g: 0,
            cursor: 0,
            done: (0..nc).map(|c| FixedBitSet::with_capacity(self.units(c))).collect(),
            remaining: (0..nc).map(|c| self.units(c)).collect(),
            pend,
            pmask,
            load,
            a_load,
            ready: vec![0; nq],
            syn,
        };
        advance_cursor(&mut st);
        st
    }

    fn h(&self, st: &State) -> usize {
        let mut h = 0;
        for q in 0..self.n {
            h = h.max(st.load[q] as usize + st.ready[q].saturating_sub(st.g));
        }
        if st.a_load > 0 {
            let a = match self.cfg.heuristic {
                HeuristicRule::Halved => st.a_load.div_ceil(2),
                HeuristicRule::Merged => st.a_load,
            } as usize;
            let wait = st.ready[self.anc[0]].min(st.ready[self.anc[1]]).saturating_sub(st.g);
            h = h.max(a + wait);
        }
        h
    }

    /// Lower bound on the remaining depth including the final gadget: its
    /// serial chain cannot start before some data qubit is finished.
    fn h_total(&self, st: &State) -> usize {
        let first_free = (0..self.n).map(|q| st.load[q] as usize + st.ready[q].saturating_sub(st.g)).min().unwrap_or(0);
        self.h(st).max(first_free + self.final_chain)
    }

    /// Data qubit that would start the final gadget's chain, once that chain
    /// dominates the remaining depth.
    fn final_root(&self, st: &State) -> Option<usize> {
        let (r, free) = (0..self.n)
            .map(|q| (q, st.load[q] as usize + st.ready[q].saturating_sub(st.g)))
            .min_by_key(|&(q, f)| (f, q))?;
        (st.load[r] > 0 && free + self.final_chain >= self.h(st)).then_some(r)
    }

    /// Search-layer depth of the goal state once the final gadget is placed.
    fn total_depth(&self, st: &State) -> usize {
        match self.place_final(st) {
            Ok((_, layers)) => layers.into_iter().flatten().map(|l| l + 1).max().unwrap_or(st.g).max(st.g),
            Err(_) => usize::MAX,
        }
    }

    fn vertex_weight(&self, st: &State, q: usize) -> u32 {
        if self.is_ancilla(q) {
            st.a_load.div_ceil(2)
        } else {
            st.load[q]
        }
    }

    fn act_qubits(&self, act: Act) -> (usize, usize) {
        match act {
            Act::Unit { comp, idx, anchor } => match &self.comps[comp] {
                Comp::Phase(gs) => (gs[idx].0, gs[idx].1),
                Comp::Mixer { .. } => (anchor, idx + 1),
                Comp::Fixed { pairs, .. } => pairs[idx],
                Comp::DynSyndrome => unreachable!("syndrome steps are blocks"),
            },
            Act::Block { v, u, .. } => (v, u),
        }
    }

    /// Executable gates (as pool edges) and the syndrome blocks on offer.
    fn candidates(&self, st: &State) -> (Vec<Act>, Vec<Act>) {
        let (t, b) = (self.layout.top(), self.layout.bottom());
        let mut avail: u64 = if self.nq == 64 { u64::MAX } else { (1u64 << self.nq) - 1 };
        let mut pool = Vec::new();
        let mut blocks = Vec::new();
        for c in st.cursor..self.comps.len() {
            if st.remaining[c] > 0 {
                let ok = |q: usize| avail >> q & 1 == 1 && st.ready[q] <= st.g;
                match &self.comps[c] {
                    Comp::Phase(gs) => {
                        for idx in st.done[c].zeroes() {
                            if ok(gs[idx].0) && ok(gs[idx].1) {
                                pool.push(Act::Unit { comp: c, idx, anchor: 0 });
                            }
                        }
                    }
                    Comp::Mixer { z2, .. } => {
                        for idx in st.done[c].zeroes() {
                            if !ok(idx + 1) {
                                continue;
                            }
                            if ok(t) {
                                pool.push(Act::Unit { comp: c, idx, anchor: t });
                            }
                            if *z2 && ok(b) {
                                pool.push(Act::Unit { comp: c, idx, anchor: b });
                            }
                        }
                    }
                    Comp::Fixed { pairs, preds, .. } => {
                        for idx in st.done[c].zeroes() {
                            let (x, y) = pairs[idx];
                            if ok(x) && ok(y) && preds[idx].iter().all(|&p| st.done[c].contains(p)) {
                                pool.push(Act::Unit { comp: c, idx, anchor: 0 });
                            }
                        }
                    }
                    Comp::DynSyndrome => {
                        if ok(self.anc[0]) && ok(self.anc[1]) {
                            blocks = self.block_options(st, c, &ok);
                        }
                    }
                }
            }
            avail &= !st.pmask[c];
            if avail == 0 {
                break;
            }
        }
        (pool, blocks)
    }

    fn block_options(&self, st: &State, c: usize, ok: &dyn Fn(usize) -> bool) -> Vec<Act> {
        let syn = &st.syn[c];
        let s = syn.step;
        match syndrome_new_step_source(self.n, s) {
            Some(src) => {
                let (v, u) = (syn.order[s], syn.order[src]);
                if ok(v) && ok(u) {
                    vec![Act::Block { comp: c, v, u }]
                } else {
                    Vec::new()
                }
            }
            None => {
                let mut fresh: Vec<usize> = (0..self.n).filter(|&q| syn.pos[q] == usize::MAX && ok(q)).collect();
                fresh.sort_by_key(|&q| (Reverse(st.load[q]), q));
                [(0, 1), (0, 2), (1, 2)]
                    .iter()
                    .filter(|&&(_, j)| j < fresh.len())
                    .map(|&(i, j)| Act::Block { comp: c, v: fresh[i], u: fresh[j] })
                    .collect()
            }
        }
    }

    /// Up to `count` matchings: each drops the heaviest edge of the previous one.
    fn matchings(&self, st: &State, pool: &[Act], count: usize, focus: Option<usize>) -> Vec<Vec<Act>> {
        let bonus = |q: usize| if Some(q) == focus { 1 << 16 } else { 0 };
        let weight = |a: Act| {
            let (x, y) = self.act_qubits(a);
            self.vertex_weight(st, x) + self.vertex_weight(st, y) + 1 + bonus(x) + bonus(y)
        };
        let mut banned = vec![false; pool.len()];
        let mut out: Vec<Vec<Act>> = Vec::new();
        for _ in 0..count {
            let mut best: HashMap<(usize, usize), usize> = HashMap::new();
            for (j, &a) in pool.iter().enumerate().filter(|(j, _)| !banned[*j]) {
                let (x, y) = self.act_qubits(a);
                let key = (x.min(y), x.max(y));
                match best.get(&key) {
                    Some(&o) if weight(pool[o]) >= weight(a) => {}
                    _ => {
                        best.insert(key, j);
                    }
                }
            }
            let mut graph: UnGraph<(), usize> = UnGraph::with_capacity(self.nq, best.len());
            (0..self.nq).for_each(|_| {
                graph.add_node(());
            });
            let mut keys: Vec<_> = best.into_iter().collect();
            keys.sort();
            for ((x, y), j) in keys {
                graph.add_edge(NodeIndex::new(x), NodeIndex::new(y), j);
            }
            let m = rustworkx_core::max_weight_matching::max_weight_matching(
                &graph,
                false,
                |e: petgraph::graph::EdgeReference<usize>| Ok::<i128, Infallible>(weight(pool[*e.weight()]) as i128),
                false,
            )
            .unwrap_or_else(|e| match e {});
            let mut chosen: Vec<usize> = m
                .into_iter()
                .map(|(x, y)| *graph.edge_weight(graph.find_edge(NodeIndex::new(x), NodeIndex::new(y)).unwrap()).unwrap())
                .collect();
            chosen.sort_unstable();
            let acts: Vec<Act> = chosen.iter().map(|&j| pool[j]).collect();
            if out.contains(&acts) {
                break;
            }
            let heaviest = chosen.iter().copied().max_by_key(|&j| (weight(pool[j]), Reverse(j)));
            out.push(acts);
            match heaviest {
                Some(j) => banned[j] = true,
                None => break,
            }
        }
        out
    }

    fn children(&self, st: &State, width: usize) -> Vec<(State, Vec<Act>)> {
        if st.cursor == self.comps.len() {
            return Vec::new();
        }
        let (pool, blocks) = self.candidates(st);
        let bs: Vec<Option<Act>> = if blocks.is_empty() { vec![None] } else { blocks.into_iter().map(Some).collect() };
        // Block qubits never appear in the pool: the gadget masks them for later components.
        let mut ms = self.matchings(st, &pool, width, None);
        if let Some(r) = self.final_root(st) {
            if let Some(m) = self.matchings(st, &pool, 1, Some(r)).pop() {
                if !ms.contains(&m) {
                    ms.insert(ms.len().min(1), m);
                }
            }
        }
        let ms = if ms.is_empty() { vec![Vec::new()] } else { ms };
        let mut combos = Vec::new();
        for sum in 0..bs.len() + ms.len() {
            for bi in 0..=sum {
                let mj = sum - bi;
                if bi < bs.len() && mj < ms.len() && combos.len() < width {
                    combos.push((bi, mj));
                }
            }
        }
        combos
            .into_iter()
            .map(|(bi, mj)| {
                let mut next = st.clone();
                let layer = st.g;
                let acts: Vec<Act> = ms[mj].iter().chain(bs[bi].iter()).copied().collect();
                for &a in &acts {
                    self.apply(&mut next, a, layer);
                }
                next.g = layer + 1;
                advance_cursor(&mut next);
                (next, acts)
            })
            .collect()
    }

    fn dec(&self, st: &mut State, c: usize, q: usize, layer: usize) {
        let i = c * self.nq + q;
        st.pend[i] -= 1;
        if st.pend[i] == 0 {
            st.pmask[c] &= !(1 << q);
            if self.is_ancilla(q) && self.comps[c].is_gadget() {
                // measurement, then the next gadget's reset
                st.ready[q] = layer + 3;
            }
        }
    }

    fn apply(&self, st: &mut State, act: Act, layer: usize) {
        let (t, b) = (self.layout.top(), self.layout.bottom());
        let (x, y) = self.act_qubits(act);
        for q in [x, y] {
            st.ready[q] = layer + 1;
        }
        match act {
            Act::Unit { comp: c, idx, anchor } => {
                st.done[c].insert(idx);
                st.remaining[c] -= 1;
                match &self.comps[c] {
                    Comp::Mixer { z2: true, .. } => {
                        let r = st.remaining[c];
                        let drop = ((r + 1).div_ceil(2) - r.div_ceil(2)) as u32;
                        st.load[t] -= drop;
                        st.load[b] -= drop;
                        st.load[idx + 1] -= 1;
                        self.dec(st, c, t, layer);
                        self.dec(st, c, b, layer);
                        self.dec(st, c, idx + 1, layer);
                        let _ = anchor;
                    }
                    _ => {
                        for q in [x, y] {
                            if self.is_ancilla(q) {
                                st.a_load -= 1;
                            } else {
                                st.load[q] -= 1;
                            }
                            self.dec(st, c, q, layer);
                        }
                    }
                }
            }
            Act::Block { comp: c, v, u } => {
                let s = st.syn[c].step;
                if syndrome_new_step_source(self.n, s).is_none() {
                    let xs = self.x_slots[s];
                    let syn = &mut st.syn[c];
                    syn.order[s] = v;
                    syn.pos[v] = s;
                    syn.order[xs] = u;
                    syn.pos[u] = xs;
                }
                st.syn[c].step += 1;
                st.remaining[c] -= 1;
                for q in [v, u] {
                    st.load[q] -= 1;
                    self.dec(st, c, q, layer);
                }
                st.a_load -= 2;
                for a in self.anc {
                    st.ready[a] = layer + 1;
                    self.dec(st, c, a, layer);
                }
            }
        }
    }

    fn state_key(&self, st: &State) -> u64 {
        let mut h = DefaultHasher::new();
        st.cursor.hash(&mut h);
        for d in &st.done[st.cursor.min(st.done.len())..] {
            d.as_slice().hash(&mut h);
        }
        st.syn.hash(&mut h);
        for &r in &st.ready {
            r.saturating_sub(st.g).hash(&mut h);
        }
        h.finish()
    }

    pub fn source(&self) -> SearchNode {
        SearchNode { state: self.source_state() }
    }

    /// Source state with the initialization gadget already laid out ASAP.
    pub fn after_init(&self) -> SearchNode {
        let mut st = self.source_state();
        if let Comp::Fixed { pairs, .. } = &self.comps[0] {
            let mut free = vec![0usize; self.nq];
            for (idx, &(a, b)) in pairs.iter().enumerate() {
                let l = free[a].max(free[b]);
                free[a] = l + 1;
                free[b] = l + 1;
                self.apply(&mut st, Act::Unit { comp: 0, idx, anchor: 0 }, l);
                st.g = st.g.max(l + 1);
            }
        }
        advance_cursor(&mut st);
        SearchNode { state: st }
    }

    pub fn is_goal(&self, node: &SearchNode) -> bool {
        node.state.cursor == self.comps.len()
    }

    pub fn heuristic_cost(&self, node: &SearchNode) -> usize {
        self.h(&node.state)
    }

    pub fn expand(&self, node: &SearchNode) -> Vec<SearchNode> {
        self.children(&node.state, self.cfg.expansion_width).into_iter().map(|(state, _)| SearchNode { state }).collect()
    }

    pub fn uncompiled_graph(&self, node: &SearchNode) -> UncompiledGraph {
        let st = &node.state;
        let (t, b) = (self.layout.top(), self.layout.bottom());
        let a = self.n;
        let mut edges: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        let mut add = |x: usize, y: usize, w: u32| {
            let (x, y) = (x.min(a), y.min(a));
            *edges.entry((x.min(y), x.max(y))).or_default() += w;
        };
        for c in st.cursor..self.comps.len() {
            match &self.comps[c] {
                Comp::Phase(gs) => st.done[c].zeroes().for_each(|i| add(gs[i].0, gs[i].1, 1)),
                Comp::Mixer { z2, .. } => {
                    for (j, idx) in st.done[c].zeroes().enumerate() {
                        let anchor = if *z2 && j % 2 == 1 { b } else { t };
                        add(anchor, idx + 1, 1);
                    }
                }
                Comp::Fixed { pairs, .. } => st.done[c].zeroes().for_each(|i| add(pairs[i].0, pairs[i].1, 1)),
                Comp::DynSyndrome => {
                    for q in 0..self.n {
                        let left = st.pend[c * self.nq + q] as u32;
                        if left > 0 {
                            add(q, a, left);
                        }
                    }
                }
            }
        }
        let mut degree = st.load[..self.n].to_vec();
        degree.push(st.a_load);
        UncompiledGraph { num_vertices: self.n + 1, merged_ancilla: a, edges, degree }
    }

    pub fn executable_graph(&self, node: &SearchNode) -> Vec<ExecEdge> {
        let st = &node.state;
        let (pool, blocks) = self.candidates(st);
        let mut out: Vec<ExecEdge> = pool
            .iter()
            .map(|&act| {
                let (a, b) = self.act_qubits(act);
                ExecEdge { a, b, weight: self.vertex_weight(st, a) + self.vertex_weight(st, b), kind: ExecKind::Gate }
            })
            .collect();
        // Free steps may pair any two fresh qubits, not only the ranked options.
        let mut seen = std::collections::HashSet::new();
        if let Some(Act::Block { comp, .. }) = blocks.first() {
            let forced = syndrome_new_step_source(self.n, st.syn[*comp].step).is_some();
            let fresh: Vec<usize> = if forced {
                blocks.iter().flat_map(|&bk| { let (v, u) = self.act_qubits(bk); [v, u] }).collect()
            } else {
                (0..self.n).filter(|&q| st.syn[*comp].pos[q] == usize::MAX && st.ready[q] <= st.g).filter(|q| {
                    let earlier: u64 = st.pmask[st.cursor..*comp].iter().fold(0, |m, x| m | x);
                    earlier >> q & 1 == 0
                }).collect()
            };
            for (i, &v) in fresh.iter().enumerate() {
                for &u in &fresh[i + 1..] {
                    if seen.insert((v.min(u), v.max(u))) {
                        out.push(ExecEdge { a: v, b: u, weight: st.load[v] + st.load[u], kind: ExecKind::SyndromeBlock });
                    }
                }
            }
        }
        out
    }

    fn greedy_rollout(&self, mut st: State, recs: &mut Vec<Rec>, mut rec: usize) -> (State, usize) {
        while st.cursor < self.comps.len() {
            let (next, acts) = self.children(&st, 1).pop().expect("non-goal states always have a child");
            recs.push(Rec { parent: rec, acts });
            rec = recs.len() - 1;
            st = next;
        }
        (st, rec)
    }

    /// Layer-synchronous beam: keeps the `beam` children with the lowest `H`,
    /// ties going to less total remaining work.
    fn beam_rollout(&self, root: State, beam: usize, recs: &mut Vec<Rec>) -> (State, usize) {
        let mut frontier = vec![(root, 0usize)];
        loop {
            if frontier.iter().any(|(s, _)| s.cursor == self.comps.len()) {
                return frontier
                    .into_iter()
                    .filter(|(s, _)| s.cursor == self.comps.len())
                    .min_by_key(|(s, r)| (self.total_depth(s), *r))
                    .unwrap();
            }
            let mut next: Vec<(usize, u64, State, usize)> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (st, rec) in &frontier {
                for (child, acts) in self.children(st, self.cfg.expansion_width) {
                    if !seen.insert(self.state_key(&child)) {
                        continue;
                    }
                    recs.push(Rec { parent: *rec, acts });
                    let work = child.load.iter().map(|&l| l as u64).sum::<u64>() + child.a_load as u64;
                    next.push((self.h_total(&child), work, child, recs.len() - 1));
                }
            }
            next.sort_by_key(|(h, w, _, rec)| (*h, *w, *rec));
            next.truncate(beam);
            frontier = next.into_iter().map(|(_, _, s, r)| (s, r)).collect();
        }
    }

    /// Best-first search over layers with `F = G + H`, seeded by a beam
    /// rollout whose depth prunes the queue.
    fn search(&self) -> (State, Vec<Vec<Act>>, SearchStats) {
        let root = self.source_state();
        let h_source = self.h(&root);
        let mut recs = vec![Rec { parent: usize::MAX, acts: Vec::new() }];
        let (mut best, mut best_rec) = if self.cfg.beam_width > 1 {
            self.beam_rollout(root.clone(), self.cfg.beam_width, &mut recs)
        } else {
            self.greedy_rollout(root.clone(), &mut recs, 0)
        };
        let mut best_total = self.total_depth(&best);
        let mut heap = BinaryHeap::new();
        let mut nodes: Vec<Option<Node>> = Vec::new();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        let push = |node: Node, heap: &mut BinaryHeap<_>, nodes: &mut Vec<Option<Node>>| {
            let key = (node.state.g + node.h, node.h, Reverse(node.state.g), nodes.len());
            heap.push(Reverse(key));
            nodes.push(Some(node));
        };
        push(Node { h: self.h_total(&root), state: root, rec: 0 }, &mut heap, &mut nodes);
        let mut expansions = 0;
        let mut exhausted = false;
        while let Some(Reverse((f, _, _, id))) = heap.pop() {
            if f >= best_total {
                continue;
            }
            let node = nodes[id].take().unwrap();
            if node.state.cursor == self.comps.len() {
                let total = self.total_depth(&node.state);
                if total < best_total {
                    best_total = total;
                    best = node.state;
                    best_rec = node.rec;
                }
                continue;
            }
            if expansions >= self.cfg.queue_cap {
                // Keep the most promising frontier node alive for a final rollout.
                nodes[id] = Some(node);
                heap.push(Reverse((f, 0, Reverse(0), id)));
                exhausted = true;
                break;
            }
            expansions += 1;
            for (child, acts) in self.children(&node.state, self.cfg.expansion_width) {
                let key = self.state_key(&child);
                if seen.get(&key).is_some_and(|&g| g <= child.g) {
                    continue;
                }
                seen.insert(key, child.g);
                let h = self.h_total(&child);
                if child.g + h >= best_total {
                    continue;
                }
                recs.push(Rec { parent: node.rec, acts });
                push(Node { h, state: child, rec: recs.len() - 1 }, &mut heap, &mut nodes);
            }
        }
        if exhausted {
            if let Some(Reverse((_, _, _, id))) = heap.pop() {
                let node = nodes[id].take().unwrap();
                let (st, rec) = self.greedy_rollout(node.state, &mut recs, node.rec);
                if self.total_depth(&st) < best_total {
                    best = st;
                    best_rec = rec;
                }
            }
        }
        let mut layers = Vec::new();
        let mut r = best_rec;
        while r != 0 {
            layers.push(std::mem::take(&mut recs[r].acts));
            r = recs[r].parent;
        }
        layers.reverse();
        let stats = SearchStats {
            h_source,
            planned_layers: best.g,
            expansions,
            budget_exhausted: exhausted,
            fell_back_to_baseline: false,
        };
        (best, layers, stats)
    }

    /// Final gadget over the goal state: order by release time when
    /// resynthesizing, gates placed ASAP in gadget order.
    fn place_final(&self, st: &State) -> Result<(Gadget, Vec<Option<usize>>), CompileError> {
        let order = if self.cfg.resynthesize {
            let mut o: Vec<usize> = (0..self.n).collect();
            o.sort_by_key(|&q| (st.ready[q], q));
            o
        } else {
            self.layout.default_order()
        };
        let gadget = self.final_kind.build(self.layout, &order)?;
        let mut avail = st.ready.clone();
        let layers = gadget
            .fragment
            .gates
            .iter()
            .map(|g| {
                g.is_two_qubit().then(|| {
                    let (a, b) = (g.qubits[0], g.qubits[1]);
                    let l = avail[a].max(avail[b]);
                    avail[a] = l + 1;
                    avail[b] = l + 1;
                    l
                })
            })
            .collect();
        Ok((gadget, layers))
    }

    fn emit(&self, goal: &State, layers: &[Vec<Act>]) -> Result<PhysicalCircuit, CompileError> {
        // unit layers per component, and block layers per dynamic syndrome step
        let mut unit_layer: Vec<HashMap<usize, (usize, usize)>> = vec![HashMap::new(); self.comps.len()];
        let mut step_layer: Vec<Vec<usize>> = vec![Vec::new(); self.comps.len()];
        for (l, acts) in layers.iter().enumerate() {
            for &a in acts {
                match a {
                    Act::Unit { comp, idx, anchor } => {
                        unit_layer[comp].insert(idx, (l, anchor));
                    }
                    Act::Block { comp, .. } => step_layer[comp].push(l),
                }
            }
        }
        let mut planned: Vec<(i64, usize, usize, Gate)> = Vec::new();
        let mut fragments: Vec<(usize, Gadget, Vec<Option<usize>>)> = Vec::new();
        for (c, comp) in self.comps.iter().enumerate() {
            match comp {
                Comp::Phase(gs) => {
                    for (idx, &(u, v, theta)) in gs.iter().enumerate() {
                        let (l, _) = unit_layer[c][&idx];
                        planned.push((l as i64 + 1, c, idx, Gate::rzz(u, v, theta).in_component(c)));
                    }
                }
                Comp::Mixer { beta, .. } => {
                    for idx in 0..self.k {
                        let (l, anchor) = unit_layer[c][&idx];
                        planned.push((l as i64 + 1, c, idx, Gate::rxx(anchor, idx + 1, *beta).in_component(c)));
                    }
                }
                Comp::Fixed { gadget, two_q, .. } => {
                    let mut fl = vec![None; gadget.fragment.gates.len()];
                    for (j, &gi) in two_q.iter().enumerate() {
                        fl[gi] = Some(unit_layer[c][&j].0);
                    }
                    fragments.push((c, gadget.clone(), fl));
                }
                Comp::DynSyndrome => {
                    let gadget = syndrome_new(self.layout, &goal.syn[c].order)?;
                    let mut fl = vec![None; gadget.fragment.gates.len()];
                    let mut k2 = 0;
                    for (gi, g) in gadget.fragment.gates.iter().enumerate() {
                        if g.is_two_qubit() {
                            fl[gi] = Some(step_layer[c][k2 / 2]);
                            k2 += 1;
                        }
                    }
                    fragments.push((c, gadget, fl));
                }
            }
        }
        let (fin, fin_layers) = self.place_final(goal)?;
        let final_id = self.comps.len();
        fragments.push((final_id, fin, fin_layers));
        let clbits = fragments.iter().map(|(_, g, _)| g.fragment.num_clbits).sum();
        let mut out = PhysicalCircuit::new(self.nq, clbits);
        for (c, role) in self.roles.iter().enumerate() {
            out.declare(c, *role);
        }
        out.declare(final_id, Role::FinalMeas);
        let mut offset = 0;
        for (c, gadget, fl) in &fragments {
            for (seq, (l, g)) in plan_fragment(&gadget.fragment, fl).into_iter().enumerate() {
                planned.push((l, *c, seq + 1, shifted(&g, *c, offset)));
            }
            for (l, fence) in ancilla_pins(&gadget.fragment, fl, self.n) {
                planned.push((l, *c, 0, Gate::barrier(fence).in_component(*c)));
            }
            absorb_bookkeeping(&mut out, &gadget.fragment, offset);
            offset += gadget.fragment.num_clbits;
        }
        planned.sort_by_key(|(l, c, seq, _)| (*l, *c, *seq));
        for (_, _, _, g) in planned {
            out.push(g);
        }
        out.validate()?;
        Ok(out)
    }
}

fn advance_cursor(st: &mut State) {
    while st.cursor < st.remaining.len() && st.remaining[st.cursor] == 0 {
        st.cursor += 1;
    }
}

/// Barriers that keep each ancilla's first CNOT in its planned layer: the
/// ancilla is synchronized with the other qubits the gadget uses in that
/// layer, so a freshly prepared ancilla cannot drift early and sit idle.
fn ancilla_pins(frag: &PhysicalCircuit, two_q_layer: &[Option<usize>], first_ancilla: usize) -> Vec<(i64, Vec<usize>)> {
    let mut out = Vec::new();
    for a in first_ancilla..frag.num_qubits {
        let first = (0..frag.gates.len()).find(|&i| two_q_layer[i].is_some() && frag.gates[i].qubits.contains(&a));
        if let Some(l) = first.and_then(|i| two_q_layer[i]) {
            let mut fence: Vec<usize> = (0..frag.gates.len())
                .filter(|&i| two_q_layer[i] == Some(l))
                .flat_map(|i| frag.gates[i].qubits.iter().copied())
                .collect();
            fence.sort_unstable();
            fence.dedup();
            if fence.len() > 2 {
                out.push((l as i64 + 1, fence));
            }
        }
    }
    out
}

/// Emitted layer of every fragment gate (search layer + 1 for 2Q gates):
/// single-qubit gates sit right before the first, or right after the last,
/// two-qubit gate on their qubit.
fn plan_fragment(frag: &PhysicalCircuit, two_q_layer: &[Option<usize>]) -> Vec<(i64, Gate)> {
    let gates = &frag.gates;
    let mut out = Vec::with_capacity(gates.len());
    for (j, g) in gates.iter().enumerate() {
        if let Some(l) = two_q_layer[j] {
            out.push((l as i64 + 1, g.clone()));
            continue;
        }
        let q = g.qubits[0];
        let on_q = |i: &usize| gates[*i].qubits.contains(&q);
        let prev = (0..j).rev().filter(on_q).find(|&i| two_q_layer[i].is_some());
        let layer = match prev {
            Some(p) => two_q_layer[p].unwrap() as i64 + 1 + (p + 1..=j).filter(on_q).count() as i64,
            None => match (j + 1..gates.len()).filter(on_q).find(|&i| two_q_layer[i].is_some()) {
                Some(nx) => two_q_layer[nx].unwrap() as i64 + 1 - (j..nx).filter(on_q).count() as i64,
                None => 0,
            },
        };
        out.push((layer, g.clone()));
    }
    out
}

/// Baseline for `Mode::Baseline`, search with the mode's flags otherwise.
pub fn compile(logical: &LogicalCircuit, mode: Mode, cfg: &CompileConfig) -> Result<CompileResult, CompileError> {
    match mode {
        Mode::Baseline => compile_baseline(logical, cfg),
        m => compile_cooptimized(logical, &cfg.clone().with_mode(m)),
    }
}

/// Search compilation; the mode recorded in the stats follows the config flags.
pub fn compile_cooptimized(logical: &LogicalCircuit, cfg: &CompileConfig) -> Result<CompileResult, CompileError> {
    let start = Instant::now();
    let compiler = Compiler::new(logical, cfg)?;
    let (goal, layers, mut search) = compiler.search();
    let circuit = compiler.emit(&goal, &layers)?;
    let baseline = compile_baseline(logical, cfg)?;
    let mode = cfg.search_mode();
    if two_qubit_depth(&circuit)? > baseline.stats.depth_2q {
        search.fell_back_to_baseline = true;
        let stats = finish_stats(&baseline.circuit, logical, cfg, mode, start, Some(search))?;
        return Ok(CompileResult { circuit: baseline.circuit, stats });
    }
    let stats = finish_stats(&circuit, logical, cfg, mode, start, Some(search))?;
    Ok(CompileResult { circuit, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::init_old;
    use crate::qaoa::{build_qaoa, generate_instance, GraphKind, QaoaParams};

    fn regular(k: usize, p: usize, seed: u64) -> LogicalCircuit {
        let g = generate_instance(GraphKind::Regular3, k, None, seed).unwrap();
        build_qaoa(&g, &QaoaParams::random(p, seed))
    }

    #[test]
    fn layout_spreads_syndromes_between_layers() {
        let slots = plan_layout(&regular(22, 10, 1), 3);
        assert_eq!(slots[0], Slot::Init);
        assert_eq!(*slots.last().unwrap(), Slot::Final);
        assert_eq!(slots.iter().filter(|s| **s == Slot::Syndrome).count(), 3);
        let algo: Vec<usize> = slots.iter().filter_map(|s| if let Slot::Algo(j) = s { Some(*j) } else { None }).collect();
        assert_eq!(algo, (0..20).collect::<Vec<_>>());
        assert!(slots.windows(2).all(|w| !(w[0] == Slot::Syndrome && w[1] == Slot::Syndrome)));
        assert_eq!(plan_layout(&regular(6, 1, 1), 0), vec![Slot::Init, Slot::Algo(0), Slot::Algo(1), Slot::Final]);
    }

    #[test]
    fn baseline_gate_counts_follow_gadget_formulas() {
        for (k, algo, total) in [(22, 330, 744), (34, 510, 1140)] {
            let cfg = CompileConfig { gadget_set: GadgetSet::New, ..Default::default() };
            let r = compile_baseline(&regular(k, 10, 3), &cfg).unwrap();
            assert_eq!(r.stats.algorithmic_two_qubit_gates, algo);
            assert_eq!(r.stats.two_qubit_gates, total);
        }
    }

    #[test]
    fn degree_sorted_init_shortens_star_prefix() {
        let graph = ProblemGraph::new(6, &[(5, 0), (5, 1), (5, 2), (5, 3), (5, 4)]).unwrap();
        let layout = IcebergLayout::new(6).unwrap();
        let order = predetermine_init_order(&graph, GadgetKind::InitOld);
        assert_eq!(order, vec![0, 6, 1, 2, 3, 4, 5, 7]);
        let depth = |order: &[usize]| {
            let mut c = init_old(layout, order).unwrap().fragment;
            c.declare(1, Role::PhaseLayer);
            for e in &graph.edges {
                c.push(Gate::rzz(e.u + 1, e.v + 1, 0.3).in_component(1));
            }
            two_qubit_depth(&c).unwrap()
        };
        assert_eq!(depth(&layout.default_order()), 12);
        assert_eq!(depth(&order), 9);
    }

    #[test]
    fn init_orders_for_regular_graphs_and_branches() {
        let graph = generate_instance(GraphKind::Regular3, 6, None, 2).unwrap();
        let layout = IcebergLayout::new(6).unwrap();
        assert_eq!(predetermine_init_order(&graph, GadgetKind::InitOld), layout.default_order());
        // hub first on one branch, next vertex on the other
        let star = ProblemGraph::new(6, &[(5, 0), (5, 1), (5, 2), (5, 3), (5, 4), (0, 1)]).unwrap();
        let order = predetermine_init_order(&star, GadgetKind::InitNew);
        assert_eq!(order, vec![0, 6, 2, 4, 5, 3, 1, 7]);
    }

    #[test]
    fn uncompiled_graph_after_init_weights_the_ancilla_vertex() {
        let graph = ProblemGraph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        let logical = build_qaoa(&graph, &QaoaParams::new(vec![0.4], vec![0.2]).unwrap());
        let cfg = CompileConfig {
            num_syndromes: 1,
            gadget_set: GadgetSet::Old,
            use_z2: false,
            resynthesize: false,
            heuristic: HeuristicRule::Merged,
            ..Default::default()
        };
        let compiler = Compiler::new(&logical, &cfg).unwrap();
        let node = compiler.after_init();
        let ug = compiler.uncompiled_graph(&node);
        assert_eq!(ug.degree[ug.merged_ancilla], 16);
        assert_eq!(ug.heuristic(HeuristicRule::Merged), 16);
        assert_eq!(ug.heuristic(HeuristicRule::Halved), 8);
        assert_eq!(compiler.heuristic_cost(&node), 16);
        // top qubit: six mixer gates and two syndrome touches
        assert_eq!(ug.degree[0], 8);
    }

    #[test]
    fn five_vertex_example_estimates_fourteen() {
        // cycle on five vertices, one phase layer, one mixer, one syndrome, seven code qubits
        let mut ug = UncompiledGraph::empty(7);
        for (u, v) in [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)] {
            ug.add_edge(u, v, 1);
        }
        for i in 1..=5 {
            ug.add_edge(0, i, 1);
        }
        ug.add_syndrome();
        assert_eq!(ug.heuristic(HeuristicRule::Merged), 14);
        assert_eq!(ug.degree[0], 7);
    }

    #[test]
    fn only_the_first_init_gate_is_executable_at_the_source() {
        let compiler = Compiler::new(&regular(6, 1, 4), &CompileConfig::default()).unwrap();
        let edges = compiler.executable_graph(&compiler.source());
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].a, edges[0].b), (7, 0));
    }

    #[test]
    fn search_is_valid_conserves_gates_and_beats_baseline() {
        for seed in 0..4 {
            let logical = regular(6, 2, seed);
            for set in [GadgetSet::Old, GadgetSet::New] {
                let base_cfg = CompileConfig { gadget_set: set, ..Default::default() };
                let base = compile_baseline(&logical, &base_cfg).unwrap();
                for mode in [Mode::Search, Mode::Resynth, Mode::Z2, Mode::ResynthZ2] {
                    let r = compile_cooptimized(&logical, &base_cfg.clone().with_mode(mode)).unwrap();
                    r.circuit.validate().unwrap();
                    assert!(r.stats.depth_2q <= base.stats.depth_2q, "{mode} {set:?} seed {seed}");
                    assert_eq!(r.stats.two_qubit_gates, base.stats.two_qubit_gates);
                    assert_eq!(r.circuit.checks.len(), base.circuit.checks.len());
                    assert_eq!(r.circuit.logicals.len(), 6);
                    let s = r.stats.search.unwrap();
                    assert!(s.h_source <= s.planned_layers);
                    assert_eq!(r.stats.mode, mode);
                }
            }
        }
    }

    #[test]
    fn z2_mixers_use_both_anchors() {
        let r = compile_cooptimized(&regular(10, 2, 1), &CompileConfig::default()).unwrap();
        let anchors: std::collections::BTreeSet<usize> = r
            .circuit
            .gates
            .iter()
            .filter(|g| g.kind == crate::circuit::GateKind::Rxx)
            .map(|g| g.qubits[0])
            .collect();
        assert_eq!(anchors, [0, 11].into_iter().collect());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let logical = regular(4, 1, 0);
        let cfg = CompileConfig { expansion_width: 0, ..Default::default() };
        assert_eq!(compile_cooptimized(&logical, &cfg).unwrap_err(), CompileError::Width);
        let cfg = CompileConfig { num_syndromes: 1, ..Default::default() };
        assert!(matches!(compile_baseline(&logical, &cfg), Err(CompileError::Gadget(_))));
        let cfg = CompileConfig { num_syndromes: 0, ..Default::default() };
        assert!(compile_cooptimized(&logical, &cfg).is_ok());
    }
}
