//! Dense state-vector simulation: exact outcome distributions with branching
//! on mid-circuit measurements, seeded Pauli-noise trajectories, decoding and
//! post-selection, and the energy-distribution metrics.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{layered_schedule, parity_of, CircuitError, Gate, GateKind, PhysicalCircuit};
use crate::ft::{FaultLocation, FaultSlot, PauliString};
use crate::par::ExecPolicy;
use crate::qaoa::{energy, ProblemGraph};

pub const MAX_QUBITS: usize = 16;
pub const DEFAULT_BRANCH_CAP: usize = 256;
/// Outcome probabilities below this are treated as impossible.
const EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("circuit has {got} qubits, simulator cap is {max}")]
    TooWide { got: usize, max: usize },
    #[error("circuit has {0} classical bits, at most 64 are supported")]
    TooManyClbits(usize),
    #[error("exact simulation needs more than {0} measurement branches")]
    Branches(usize),
    #[error("noise model: {0}")]
    Noise(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a unitary gate; measurements, resets and barriers are ignored.
    pub fn apply(&mut self, g: &Gate) {
        let theta = g.angle.unwrap_or(0.0);
        match g.kind {
            GateKind::Rzz => {
                let m = 1usize << g.qubits[0] | 1 << g.qubits[1];
                let even = Complex64::from_polar(1.0, -theta);
                let odd = even.conj();
                for (x, a) in self.amps.iter_mut().enumerate() {
                    *a *= if (x & m).count_ones() % 2 == 0 { even } else { odd };
                }
            }
            GateKind::Rxx => self.rotate_x(1 << g.qubits[0], 1 << g.qubits[0] | 1 << g.qubits[1], theta),
            GateKind::Rx => self.rotate_x(1 << g.qubits[0], 1 << g.qubits[0], theta),
            GateKind::Cnot => {
                let (c, t) = (1usize << g.qubits[0], 1usize << g.qubits[1]);
                for x in 0..self.amps.len() {
                    if x & c != 0 && x & t == 0 {
                        self.amps.swap(x, x | t);
                    }
                }
            }
            GateKind::H => {
                let b = 1usize << g.qubits[0];
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for x in (0..self.amps.len()).filter(|x| x & b == 0) {
                    let (u, v) = (self.amps[x], self.amps[x | b]);
                    self.amps[x] = (u + v) * s;
                    self.amps[x | b] = (u - v) * s;
                }
            }
            GateKind::X => self.apply_pauli(&PauliString::x_on(1 << g.qubits[0])),
            GateKind::Z => self.apply_pauli(&PauliString::z_on(1 << g.qubits[0])),
            GateKind::MeasureZ | GateKind::MeasureX | GateKind::Reset | GateKind::ResetX | GateKind::Barrier => {}
        }
    }

    /// `exp(-i θ X^mask)`; `pivot` is one bit of `mask` used to enumerate pairs once.
    fn rotate_x(&mut self, pivot: usize, mask: usize, theta: f64) {
        let (c, s) = (theta.cos(), Complex64::new(0.0, -theta.sin()));
        for x in (0..self.amps.len()).filter(|x| x & pivot == 0) {
            let y = x ^ mask;
            let (u, v) = (self.amps[x], self.amps[y]);
            self.amps[x] = u * c + v * s;
            self.amps[y] = v * c + u * s;
        }
    }

    /// Applies `X^x Z^z` (global phase dropped).
    pub fn apply_pauli(&mut self, p: &PauliString) {
        let (xm, zm) = (p.x as usize, p.z as usize);
        if zm != 0 {
            for (x, a) in self.amps.iter_mut().enumerate() {
                if (x & zm).count_ones() % 2 == 1 {
                    *a = -*a;
                }
            }
        }
        if xm != 0 {
            for x in 0..self.amps.len() {
                let y = x ^ xm;
                if x < y {
                    self.amps.swap(x, y);
                }
            }
        }
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let b = 1usize << q;
        self.amps.iter().enumerate().filter(|(x, _)| x & b != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Projects qubit `q` onto `outcome` and renormalizes by `prob` of that outcome.
    pub fn collapse(&mut self, q: usize, outcome: bool, prob: f64) {
        let b = 1usize << q;
        let scale = 1.0 / prob.sqrt();
        for (x, a) in self.amps.iter_mut().enumerate() {
            if (x & b != 0) == outcome {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Samples a full computational-basis outcome.
    fn sample_basis<R: Rng>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>() * self.norm_sqr();
        for (x, a) in self.amps.iter().enumerate() {
            u -= a.norm_sqr();
            if u < 0.0 {
                return x;
            }
        }
        self.amps.iter().rposition(|a| a.norm_sqr() > 0.0).unwrap_or(0)
    }
}

fn check_size(c: &PhysicalCircuit) -> Result<(), SimError> {
    if c.num_qubits > MAX_QUBITS {
        return Err(SimError::TooWide { got: c.num_qubits, max: MAX_QUBITS });
    }
    if c.num_clbits > 64 {
        return Err(SimError::TooManyClbits(c.num_clbits));
    }
    Ok(())
}

/// Measurements after which their qubit is never touched again; they are
/// deferred and read jointly from the final state.
fn terminal_measurements(c: &PhysicalCircuit) -> Vec<bool> {
    let mut touched_later = vec![false; c.num_qubits];
    let mut terminal = vec![false; c.gates.len()];
    for (i, g) in c.gates.iter().enumerate().rev() {
        if g.kind == GateKind::Barrier {
            continue;
        }
        if g.kind.is_measurement() && !touched_later[g.qubits[0]] {
            terminal[i] = true;
        }
        for &q in &g.qubits {
            touched_later[q] = true;
        }
    }
    terminal
}

/// Reads the deferred measurements out of basis state `x`.
fn deferred_word(deferred: &[(usize, usize)], x: usize) -> u64 {
    deferred.iter().fold(0, |w, &(q, c)| w | ((x >> q & 1) as u64) << c)
}

#[derive(Clone)]
struct Branch {
    state: StateVector,
    word: u64,
    weight: f64,
}

/// Exact distribution over classical words, sorted by word.
pub fn simulate_exact(circuit: &PhysicalCircuit) -> Result<Vec<(u64, f64)>, SimError> {
    simulate_exact_with_faults(circuit, &[], DEFAULT_BRANCH_CAP)
}

/// Final state of a circuit without measurements or resets.
pub fn final_state(circuit: &PhysicalCircuit) -> Result<StateVector, SimError> {
    check_size(circuit)?;
    circuit.validate()?;
    let mut s = StateVector::zero(circuit.num_qubits);
    for g in &circuit.gates {
        s.apply(g);
    }
    Ok(s)
}

/// Exact simulation with deterministic Pauli faults injected at the given
/// locations. Random mid-circuit outcomes (and resets of entangled qubits)
/// split the state into weighted branches, capped at `branch_cap`.
pub fn simulate_exact_with_faults(
    circuit: &PhysicalCircuit,
    faults: &[FaultLocation],
    branch_cap: usize,
) -> Result<Vec<(u64, f64)>, SimError> {
    check_size(circuit)?;
    circuit.validate()?;
    let terminal = terminal_measurements(circuit);
    let mut before: HashMap<usize, Vec<PauliString>> = HashMap::new();
    let mut after: HashMap<usize, Vec<PauliString>> = HashMap::new();
    let mut flips = 0u64;
    for f in faults {
        match f.slot {
            FaultSlot::BeforeFirstUse => before.entry(f.gate).or_default().push(f.pauli),
            FaultSlot::AfterGate => after.entry(f.gate).or_default().push(f.pauli),
            FaultSlot::MeasurementFlip => {
                flips ^= 1 << circuit.gates[f.gate].clbit.expect("measurement has a clbit");
            }
        }
    }
    let mut branches = vec![Branch { state: StateVector::zero(circuit.num_qubits), word: 0, weight: 1.0 }];
    let mut deferred = Vec::new();
    for (i, g) in circuit.gates.iter().enumerate() {
        for p in before.get(&i).into_iter().flatten() {
            branches.iter_mut().for_each(|b| b.state.apply_pauli(p));
        }
        if terminal[i] {
            let q = g.qubits[0];
            if g.kind == GateKind::MeasureX {
                branches.iter_mut().for_each(|b| b.state.apply(&Gate::h(q)));
            }
            deferred.push((q, g.clbit.expect("measurement has a clbit")));
            continue;
        }
        match g.kind {
            GateKind::MeasureZ | GateKind::MeasureX | GateKind::Reset | GateKind::ResetX => {
                let mut next = Vec::with_capacity(branches.len());
                for b in branches {
                    next.extend(split_on(b, g));
                }
                if next.len() > branch_cap {
                    return Err(SimError::Branches(branch_cap));
                }
                branches = next;
            }
            _ => branches.iter_mut().for_each(|b| b.state.apply(g)),
        }
        for p in after.get(&i).into_iter().flatten() {
            branches.iter_mut().for_each(|b| b.state.apply_pauli(p));
        }
    }
    let mut dist: BTreeMap<u64, f64> = BTreeMap::new();
    for b in &branches {
        for (x, a) in b.state.amps.iter().enumerate() {
            let p = a.norm_sqr() * b.weight;
            if p > EPS * EPS {
                *dist.entry((b.word | deferred_word(&deferred, x)) ^ flips).or_default() += p;
            }
        }
    }
    Ok(dist.into_iter().collect())
}

/// Measurement or reset on one branch, yielding one or two weighted branches.
fn split_on(mut b: Branch, g: &Gate) -> Vec<Branch> {
    let q = g.qubits[0];
    if g.kind == GateKind::MeasureX {
        b.state.apply(&Gate::h(q));
    }
    let p1 = b.state.prob_one(q);
    let outcomes: Vec<(bool, f64)> =
        [(false, 1.0 - p1), (true, p1)].into_iter().filter(|&(_, p)| p > EPS).collect();
    let single = outcomes.len() == 1;
    outcomes
        .into_iter()
        .map(|(o, p)| {
            let mut nb = if single { b.clone() } else { Branch { weight: b.weight * p, ..b.clone() } };
            nb.state.collapse(q, o, p);
            finish_measurement(&mut nb.state, &mut nb.word, g, o);
            nb
        })
        .collect()
}

/// Post-collapse bookkeeping shared by the exact and sampled paths.
fn finish_measurement(state: &mut StateVector, word: &mut u64, g: &Gate, outcome: bool) {
    let q = g.qubits[0];
    match g.kind {
        GateKind::MeasureZ => *word |= (outcome as u64) << g.clbit.unwrap(),
        GateKind::MeasureX => {
            *word |= (outcome as u64) << g.clbit.unwrap();
            state.apply(&Gate::h(q));
        }
        GateKind::Reset | GateKind::ResetX => {
            if outcome {
                state.apply_pauli(&PauliString::x_on(1 << q));
            }
            if g.kind == GateKind::ResetX {
                state.apply(&Gate::h(q));
            }
        }
        _ => unreachable!("not a measurement or reset"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub p2: f64,
    pub p1: f64,
    pub p_idle: f64,
    pub p_meas: f64,
    pub scale: f64,
}

impl Default for NoiseModel {
    /// Synthetic, non-calibrated rates.
    fn default() -> Self {
        NoiseModel { p2: 1.3e-3, p1: 3e-5, p_idle: 5e-4, p_meas: 1e-3, scale: 1.0 }
    }
}

/// Rates after applying the scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveRates {
    pub p2: f64,
    pub p1: f64,
    pub p_idle: f64,
    pub p_meas: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { scale: 0.0, ..Self::default() }
    }

    pub fn scaled(self, scale: f64) -> Self {
        NoiseModel { scale, ..self }
    }

    pub fn effective(&self) -> Result<EffectiveRates, SimError> {
        if !(self.scale >= 0.0) {
            return Err(SimError::Noise(format!("scale must be non-negative, got {}", self.scale)));
        }
        let fix = |name: &str, p: f64| {
            let q = p * self.scale;
            if (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q) {
                Ok(q)
            } else {
                Err(SimError::Noise(format!("{name} = {p} leaves [0, 1] at scale {}", self.scale)))
            }
        };
        Ok(EffectiveRates {
            p2: fix("p2", self.p2)?,
            p1: fix("p1", self.p1)?,
            p_idle: fix("p_idle", self.p_idle)?,
            p_meas: fix("p_meas", self.p_meas)?,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "p2: {}\np1: {}\np_idle: {}\np_meas: {}\nscale: {}\n",
            self.p2, self.p1, self.p_idle, self.p_meas, self.scale
        )
    }

    /// Missing keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self, SimError> {
        let kv = crate::kv::parse(text).map_err(|(l, m)| SimError::Noise(format!("line {l}: {m}")))?;
        let known = ["p2", "p1", "p_idle", "p_meas", "scale"];
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(SimError::Noise(format!("unknown key `{k}`")));
        }
        let d = Self::default();
        let m = NoiseModel {
            p2: kv.scalar_or("p2", d.p2).map_err(SimError::Noise)?,
            p1: kv.scalar_or("p1", d.p1).map_err(SimError::Noise)?,
            p_idle: kv.scalar_or("p_idle", d.p_idle).map_err(SimError::Noise)?,
            p_meas: kv.scalar_or("p_meas", d.p_meas).map_err(SimError::Noise)?,
            scale: kv.scalar_or("scale", d.scale).map_err(SimError::Noise)?,
        };
        m.effective()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub raw: u64,
    pub checks: Vec<bool>,
    pub accepted: bool,
    /// Bit `i` is logical qubit `i`, i.e. vertex `i`.
    pub logical: Option<u64>,
}

pub fn decode_shot(circuit: &PhysicalCircuit, raw: u64) -> ShotRecord {
    let checks: Vec<bool> = circuit.checks.iter().map(|c| c.holds(raw)).collect();
    let accepted = checks.iter().all(|&c| c);
    let logical = accepted.then(|| {
        circuit.logicals.iter().enumerate().fold(0u64, |w, (i, bits)| w | (parity_of(bits, raw) as u64) << i)
    });
    ShotRecord { raw, checks, accepted, logical }
}

#[derive(Clone, Debug)]
enum Op {
    Gate(usize),
    /// Idle qubits after a layer that contains a two-qubit gate.
    Idle(Vec<usize>),
}

#[derive(Clone, Debug)]
enum Event {
    Pauli(PauliString),
    Flip(usize),
}

/// Snapshot of the noiseless run just before `ops[op]`.
struct Checkpoint {
    op: usize,
    state: StateVector,
    word: u64,
    deferred: usize,
}

/// Budget for checkpoint snapshots, in bytes.
const CHECKPOINT_BYTES: usize = 128 << 20;

/// Seeded trajectory sampler for one circuit and noise model. Shots whose
/// trajectories draw no Pauli fault are sampled from the cached noiseless
/// distribution; the others resume from the latest noiseless checkpoint
/// preceding their first fault.
pub struct Sampler<'c> {
    circuit: &'c PhysicalCircuit,
    rates: EffectiveRates,
    ops: Vec<Op>,
    terminal: Vec<bool>,
    /// Deferred (qubit, clbit) pairs in op order.
    deferred: Vec<(usize, usize)>,
    exact_cdf: Option<(Vec<u64>, Vec<f64>)>,
    checkpoints: Vec<Checkpoint>,
}

impl<'c> Sampler<'c> {
    pub fn new(circuit: &'c PhysicalCircuit, noise: &NoiseModel) -> Result<Self, SimError> {
        check_size(circuit)?;
        let rates = noise.effective()?;
        let sched = layered_schedule(circuit)?;
        let alive = live_ranges(circuit, &sched.layers);
        let mut ops = Vec::new();
        for (l, layer) in sched.layers.iter().enumerate() {
            ops.extend(layer.iter().map(|&g| Op::Gate(g)));
            if layer.iter().any(|&g| circuit.gates[g].is_two_qubit()) {
                let busy: Vec<usize> = layer.iter().flat_map(|&g| circuit.gates[g].qubits.clone()).collect();
                let idle: Vec<usize> = (0..circuit.num_qubits)
                    .filter(|q| !busy.contains(q) && alive[*q].iter().any(|&(a, b)| a <= l && l <= b))
                    .collect();
                if !idle.is_empty() {
                    ops.push(Op::Idle(idle));
                }
            }
        }
        let terminal = terminal_measurements(circuit);
        let deferred = ops
            .iter()
            .filter_map(|op| match op {
                Op::Gate(g) if terminal[*g] => Some((circuit.gates[*g].qubits[0], circuit.gates[*g].clbit.unwrap())),
                _ => None,
            })
            .collect();
        let exact_cdf = match simulate_exact(circuit) {
            Ok(dist) => {
                let words = dist.iter().map(|&(w, _)| w).collect();
                let mut acc = 0.0;
                let cum = dist.iter().map(|&(_, p)| {
                    acc += p;
                    acc
                });
                Some((words, cum.collect()))
            }
            Err(SimError::Branches(_)) => None,
            Err(e) => return Err(e),
        };
        let mut s = Sampler { circuit, rates, ops, terminal, deferred, exact_cdf, checkpoints: Vec::new() };
        s.build_checkpoints();
        Ok(s)
    }

    /// Noiseless pass storing snapshots until the first random mid-circuit outcome.
    fn build_checkpoints(&mut self) {
        let snap = 16usize << self.circuit.num_qubits;
        let max = (CHECKPOINT_BYTES / snap).max(1);
        let stride = self.ops.len().div_ceil(max).max(1);
        let mut state = StateVector::zero(self.circuit.num_qubits);
        let (mut word, mut deferred) = (0u64, 0usize);
        for i in 0..self.ops.len() {
            if i % stride == 0 {
                self.checkpoints.push(Checkpoint { op: i, state: state.clone(), word, deferred });
            }
            if let Op::Gate(g) = self.ops[i] {
                let gate = &self.circuit.gates[g];
                if self.terminal[g] {
                    if gate.kind == GateKind::MeasureX {
                        state.apply(&Gate::h(gate.qubits[0]));
                    }
                    deferred += 1;
                } else if is_nonunitary(gate.kind) {
                    let q = gate.qubits[0];
                    if gate.kind == GateKind::MeasureX {
                        state.apply(&Gate::h(q));
                    }
                    let p1 = state.prob_one(q);
                    if p1 > EPS && p1 < 1.0 - EPS {
                        return;
                    }
                    let o = p1 >= 0.5;
                    state.collapse(q, o, if o { p1 } else { 1.0 - p1 });
                    finish_measurement(&mut state, &mut word, gate, o);
                } else {
                    state.apply(gate);
                }
            }
        }
    }

    fn draw_events(&self, rng: &mut ChaCha8Rng) -> Vec<(usize, Event)> {
        let r = &self.rates;
        let mut events = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            match op {
                Op::Gate(g) => {
                    let gate = &self.circuit.gates[*g];
                    if gate.kind.is_measurement() {
                        if rng.random::<f64>() < r.p_meas {
                            events.push((i, Event::Flip(gate.clbit.unwrap())));
                        }
                    } else {
                        let p = if gate.is_two_qubit() { r.p2 } else { r.p1 };
                        if rng.random::<f64>() < p {
                            events.push((i, Event::Pauli(random_pauli(&gate.qubits, rng))));
                        }
                    }
                }
                Op::Idle(qs) => {
                    for &q in qs {
                        if rng.random::<f64>() < r.p_idle {
                            events.push((i, Event::Pauli(random_pauli(&[q], rng))));
                        }
                    }
                }
            }
        }
        events
    }

    pub fn shot(&self, seed: u64, index: u64) -> ShotRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let events = self.draw_events(&mut rng);
        let flips = events.iter().fold(0u64, |w, (_, e)| if let Event::Flip(c) = e { w ^ 1 << c } else { w });
        let first_pauli = events.iter().find(|(_, e)| matches!(e, Event::Pauli(_))).map(|(i, _)| *i);
        let raw = match (first_pauli, &self.exact_cdf) {
            (None, Some((words, cum))) => {
                let u = rng.random::<f64>() * cum.last().copied().unwrap_or(1.0);
                words[cum.partition_point(|&c| c <= u).min(words.len() - 1)]
            }
            (first, _) => self.trajectory(first.unwrap_or(0), &events, &mut rng),
        };
        decode_shot(self.circuit, raw ^ flips)
    }

    fn trajectory(&self, first_fault: usize, events: &[(usize, Event)], rng: &mut ChaCha8Rng) -> u64 {
        let start = self.checkpoints.iter().rev().find(|c| c.op <= first_fault).expect("checkpoint at op 0");
        let mut state = start.state.clone();
        let mut word = start.word;
        let mut deferred = start.deferred;
        let mut ev = events.iter().skip_while(|(i, _)| *i < start.op).peekable();
        for i in start.op..self.ops.len() {
            if let Op::Gate(g) = self.ops[i] {
                let gate = &self.circuit.gates[g];
                if self.terminal[g] {
                    if gate.kind == GateKind::MeasureX {
                        state.apply(&Gate::h(gate.qubits[0]));
                    }
                    deferred += 1;
                } else if is_nonunitary(gate.kind) {
                    let q = gate.qubits[0];
                    if gate.kind == GateKind::MeasureX {
                        state.apply(&Gate::h(q));
                    }
                    let p1 = state.prob_one(q);
                    let o = rng.random::<f64>() < p1;
                    state.collapse(q, o, if o { p1 } else { 1.0 - p1 });
                    finish_measurement(&mut state, &mut word, gate, o);
                } else {
                    state.apply(gate);
                }
            }
            while let Some((_, e)) = ev.next_if(|(j, _)| *j == i) {
                if let Event::Pauli(p) = e {
                    state.apply_pauli(p);
                }
            }
        }
        debug_assert_eq!(deferred, self.deferred.len());
        word | deferred_word(&self.deferred, state.sample_basis(rng))
    }
}

fn is_nonunitary(kind: GateKind) -> bool {
    matches!(kind, GateKind::MeasureZ | GateKind::MeasureX | GateKind::Reset | GateKind::ResetX)
}

/// Layer intervals in which each qubit holds state that matters: from its
/// first two-qubit gate after preparation up to its measurement (or last
/// use). Preparations and leading single-qubit gates count as just in time.
fn live_ranges(c: &PhysicalCircuit, layers: &[Vec<usize>]) -> Vec<Vec<(usize, usize)>> {
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); c.num_qubits];
    let mut open: Vec<Option<(usize, usize)>> = vec![None; c.num_qubits];
    for (l, layer) in layers.iter().enumerate() {
        for &g in layer {
            let gate = &c.gates[g];
            for &q in &gate.qubits {
                match gate.kind {
                    GateKind::Reset | GateKind::ResetX => out[q].extend(open[q].take()),
                    GateKind::MeasureZ | GateKind::MeasureX => {
                        if let Some((a, _)) = open[q].take() {
                            out[q].push((a, l));
                        }
                    }
                    _ if gate.is_two_qubit() => open[q] = Some(open[q].map_or((l, l), |(a, _)| (a, l))),
                    _ => {
                        if let Some(r) = open[q].as_mut() {
                            r.1 = l;
                        }
                    }
                }
            }
        }
    }
    for (q, r) in open.into_iter().enumerate() {
        out[q].extend(r);
    }
    out
}

/// Uniformly random non-identity Pauli on `qubits`.
fn random_pauli<R: Rng>(qubits: &[usize], rng: &mut R) -> PauliString {
    let code = rng.random_range(1..1usize << (2 * qubits.len()));
    let mut p = PauliString::default();
    for (j, &q) in qubits.iter().enumerate() {
        let c = code >> (2 * j) & 3;
        // 1 = X, 2 = Y, 3 = Z
        if c == 1 || c == 2 {
            p.x |= 1 << q;
        }
        if c == 2 || c == 3 {
            p.z |= 1 << q;
        }
    }
    p
}

/// Shot `i` uses stream `i` of the seeded generator, so results do not
/// depend on the execution policy.
pub fn sample_shots(
    circuit: &PhysicalCircuit,
    noise: &NoiseModel,
    shots: usize,
    seed: u64,
    policy: ExecPolicy,
) -> Result<Vec<ShotRecord>, SimError> {
    let sampler = Sampler::new(circuit, noise)?;
    Ok(policy.map_range(shots, |i| sampler.shot(seed, i as u64)))
}

pub fn post_selection_rate(records: &[ShotRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.accepted).count() as f64 / records.len() as f64
}

/// Accepted logical distribution (renormalized) and the acceptance probability.
pub fn logical_distribution(circuit: &PhysicalCircuit, exact: &[(u64, f64)]) -> (BTreeMap<u64, f64>, f64) {
    let mut dist = BTreeMap::new();
    let mut accepted = 0.0;
    for &(w, p) in exact {
        if let Some(l) = decode_shot(circuit, w).logical {
            *dist.entry(l).or_insert(0.0) += p;
            accepted += p;
        }
    }
    if accepted > 0.0 {
        dist.values_mut().for_each(|p| *p /= accepted);
    }
    (dist, accepted)
}

/// Empirical logical distribution over accepted shots.
pub fn empirical_logical(records: &[ShotRecord]) -> BTreeMap<u64, f64> {
    let mut dist = BTreeMap::new();
    let acc: Vec<u64> = records.iter().filter_map(|r| r.logical).collect();
    for &l in &acc {
        *dist.entry(l).or_insert(0.0) += 1.0 / acc.len() as f64;
    }
    dist
}

pub type EnergyDistribution = BTreeMap<i64, f64>;

pub fn energy_distribution<I: IntoIterator<Item = (u64, f64)>>(dist: I, graph: &ProblemGraph) -> EnergyDistribution {
    let mut out = BTreeMap::new();
    let mut total = 0.0;
    for (x, p) in dist {
        *out.entry(energy(graph, x)).or_insert(0.0) += p;
        total += p;
    }
    if total > 0.0 {
        out.values_mut().for_each(|p| *p /= total);
    }
    out
}

pub fn energy_distribution_from_records(records: &[ShotRecord], graph: &ProblemGraph) -> EnergyDistribution {
    energy_distribution(records.iter().filter_map(|r| r.logical).map(|l| (l, 1.0)), graph)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    /// Keep energies `<= e`.
    Energy(i64),
    /// Keep energies up to the smallest `e` whose cumulative mass reaches `q`.
    Quantile(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truncated {
    pub dist: EnergyDistribution,
    /// Every energy lay above the cutoff, so the input was returned unchanged.
    pub all_removed: bool,
}

pub fn postprocess_truncate(dist: &EnergyDistribution, cutoff: Cutoff) -> Truncated {
    let bound = match cutoff {
        Cutoff::Energy(e) => e,
        Cutoff::Quantile(q) => {
            let mut acc = 0.0;
            let total: f64 = dist.values().sum();
            dist.iter().find(|(_, &p)| {
                acc += p;
                acc >= q * total
            })
            .map_or(i64::MAX, |(&e, _)| e)
        }
    };
    let kept: EnergyDistribution = dist.range(..=bound).map(|(&e, &p)| (e, p)).filter(|&(_, p)| p > 0.0).collect();
    let mass: f64 = kept.values().sum();
    if mass <= 0.0 {
        return Truncated { dist: dist.clone(), all_removed: true };
    }
    Truncated { dist: kept.into_iter().map(|(e, p)| (e, p / mass)).collect(), all_removed: false }
}

pub fn total_variation<K: Ord + Copy>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<K> = p.keys().chain(q.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Delta-method standard error of `TV(P̂, Q)` for `P̂` built from `n` samples
/// and an exact `Q`: `½ sqrt(Var_{e~P̂}[sign(P̂(e) − Q(e))] / n)`.
pub fn tv_standard_error<K: Ord + Copy>(p_hat: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let sign = |k: &K, p: f64| (p - q.get(k).unwrap_or(&0.0)).signum();
    let mean: f64 = p_hat.iter().map(|(k, &p)| p * sign(k, p)).sum();
    let second: f64 = p_hat.iter().map(|(k, &p)| p * sign(k, p).powi(2)).sum();
    0.5 * ((second - mean * mean).max(0.0) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Role;

    fn circuit(n: usize, nc: usize, gates: Vec<Gate>) -> PhysicalCircuit {
        let mut c = PhysicalCircuit::new(n, nc);
        c.declare(0, Role::Init);
        gates.into_iter().for_each(|g| c.push(g));
        c
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn bell_state_amplitudes() {
        let s = final_state(&circuit(2, 0, vec![Gate::h(0), Gate::cx(0, 1)])).unwrap();
        let a = s.amplitudes();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(a[0].re, r) && close(a[3].re, r) && a[1].norm() < 1e-12 && a[2].norm() < 1e-12);
    }

    #[test]
    fn rotations_match_closed_forms() {
        let t = 0.3;
        let s = final_state(&circuit(2, 0, vec![Gate::rxx(0, 1, t)])).unwrap();
        assert!(close(s.amplitudes()[0].re, t.cos()) && close(s.amplitudes()[3].im, -t.sin()));
        let s = final_state(&circuit(1, 0, vec![Gate::rx(0, t)])).unwrap();
        assert!(close(s.amplitudes()[1].im, -t.sin()));
        let s = final_state(&circuit(2, 0, vec![Gate::x(0), Gate::rzz(0, 1, t)])).unwrap();
        assert!(close(s.amplitudes()[1].arg(), t));
    }

    #[test]
    fn exact_distributions() {
        let c = circuit(2, 2, vec![Gate::h(0), Gate::cx(0, 1), Gate::mz(0, 0), Gate::mz(1, 1)]);
        let d = simulate_exact(&c).unwrap();
        assert_eq!(d.len(), 2);
        assert!(close(d[0].1, 0.5) && d[0].0 == 0 && d[1].0 == 3);
        // Mid-circuit measurement of a |+⟩ qubit splits into two branches, then reuse.
        let c = circuit(1, 2, vec![Gate::h(0), Gate::mz(0, 0), Gate::reset(0), Gate::x(0), Gate::mz(0, 1)]);
        let d = simulate_exact(&c).unwrap();
        assert_eq!(d.iter().map(|x| x.0).collect::<Vec<_>>(), [0b10, 0b11]);
        assert!(d.iter().all(|x| close(x.1, 0.5)));
        let c = circuit(1, 1, vec![Gate::reset_x(0), Gate::mx(0, 0)]);
        let d = simulate_exact(&c).unwrap();
        assert!(d.len() == 1 && d[0].0 == 0 && close(d[0].1, 1.0));
        let many: Vec<Gate> = (0..10).flat_map(|i| [Gate::h(0), Gate::mz(0, i)]).collect();
        assert_eq!(simulate_exact_with_faults(&circuit(1, 10, many), &[], 8), Err(SimError::Branches(8)));
    }

    #[test]
    fn injected_faults_flip_outcomes() {
        let c = circuit(2, 2, vec![Gate::cx(0, 1), Gate::mz(0, 0), Gate::mz(1, 1)]);
        let f = FaultLocation { gate: 0, slot: FaultSlot::BeforeFirstUse, pauli: PauliString::x_on(1) };
        assert_eq!(simulate_exact_with_faults(&c, &[f], 8).unwrap(), vec![(0b11, 1.0)]);
        let flip = FaultLocation { gate: 2, slot: FaultSlot::MeasurementFlip, pauli: PauliString::default() };
        assert_eq!(simulate_exact_with_faults(&c, &[flip], 8).unwrap(), vec![(0b10, 1.0)]);
    }

    #[test]
    fn noiseless_sampling_matches_exact_and_accepts_everything() {
        let mut c = circuit(3, 3, vec![Gate::h(0), Gate::cx(0, 1), Gate::cx(1, 2)]);
        (0..3).for_each(|q| c.push(Gate::mz(q, q)));
        c.checks.push(crate::circuit::ParityCheck::zero(vec![0, 1]));
        let recs = sample_shots(&c, &NoiseModel::noiseless(), 2000, 7, ExecPolicy::Sequential).unwrap();
        assert_eq!(post_selection_rate(&recs), 1.0);
        let ones = recs.iter().filter(|r| r.raw == 0b111).count() as f64 / 2000.0;
        assert!((ones - 0.5).abs() < 0.05);
        assert!(recs.iter().all(|r| r.raw == 0 || r.raw == 0b111));
    }

    #[test]
    fn sampling_is_seeded_and_policy_independent() {
        let mut c = circuit(3, 3, vec![Gate::h(0), Gate::cx(0, 1), Gate::cx(1, 2), Gate::rzz(0, 2, 0.4)]);
        (0..3).for_each(|q| c.push(Gate::mz(q, q)));
        let noise = NoiseModel::default().scaled(50.0);
        let a = sample_shots(&c, &noise, 300, 11, ExecPolicy::Sequential).unwrap();
        let b = sample_shots(&c, &noise, 300, 11, ExecPolicy::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_shots(&c, &noise, 300, 12, ExecPolicy::Sequential).unwrap());
    }

    #[test]
    fn noise_file_round_trip_and_validation() {
        let m = NoiseModel { p2: 0.01, p1: 0.0, p_idle: 0.002, p_meas: 0.0, scale: 0.5 };
        assert_eq!(NoiseModel::from_text(&m.to_text()).unwrap(), m);
        assert_eq!(NoiseModel::from_text("").unwrap(), NoiseModel::default());
        assert!(NoiseModel::from_text("p2: 0.6\nscale: 2\n").is_err());
        assert!(NoiseModel::from_text("bogus: 1\n").is_err());
        assert!(NoiseModel::default().scaled(-1.0).effective().is_err());
    }

    #[test]
    fn truncation_and_tv_examples() {
        let d: EnergyDistribution = [(-4, 0.5), (0, 0.5)].into();
        assert_eq!(postprocess_truncate(&d, Cutoff::Energy(-1)).dist, [(-4, 1.0)].into());
        assert_eq!(postprocess_truncate(&d, Cutoff::Energy(3)).dist, d);
        let gone = postprocess_truncate(&d, Cutoff::Energy(-10));
        assert!(gone.all_removed && gone.dist == d);
        assert_eq!(postprocess_truncate(&d, Cutoff::Quantile(0.4)).dist, [(-4, 1.0)].into());
        let p: BTreeMap<i64, f64> = [(0, 0.5), (1, 0.5)].into();
        let q: BTreeMap<i64, f64> = [(0, 1.0)].into();
        assert!(close(total_variation(&p, &q), 0.5));
        assert!(close(total_variation(&p, &p), 0.0));
        assert!(close(total_variation(&q, &[(5, 1.0)].into()), 1.0));
    }

    #[test]
    fn energy_distribution_of_uniform_c4() {
        let g = ProblemGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let e = energy_distribution((0..16).map(|x| (x, 1.0 / 16.0)), &g);
        let want: EnergyDistribution = [(-4, 2.0 / 16.0), (-2, 12.0 / 16.0), (0, 2.0 / 16.0)].into();
        assert_eq!(e.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        assert!(e.iter().all(|(k, p)| close(*p, want[k])));
        assert_eq!(energy_distribution([(0b0101, 1.0)], &g), [(-4, 1.0)].into());
    }

    proptest::proptest! {
        #[test]
        fn unitaries_preserve_norm(ops in proptest::collection::vec((0usize..6, 0usize..4, 1usize..4, -3.0f64..3.0), 1..40)) {
            let mut s = StateVector::zero(4);
            for (kind, a, d, t) in ops {
                let b = (a + d) % 4;
                let g = match kind {
                    0 => Gate::rzz(a, b, t),
                    1 => Gate::rxx(a, b, t),
                    2 => Gate::rx(a, t),
                    3 => Gate::cx(a, b),
                    4 => Gate::h(a),
                    _ => Gate::z(a),
                };
                s.apply(&g);
                proptest::prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }
    }
}
