//! Single-fault Pauli propagation: certifies gadget fault tolerance and
//! classifies faults in whole compiled circuits.
//!
//! Frames are tracked as X/Z bit masks (at most 64 qubits and 64 classical
//! bits). Clifford gates map a frame exactly. A rotation whose generator
//! anticommutes with the frame splits it into the frame and the frame times
//! the generator; every branch is followed and must be safe.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::circuit::{parity_of, GateKind, ParityCheck, PhysicalCircuit, Role};
use crate::gadgets::{Gadget, IcebergLayout};
use crate::par::ExecPolicy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FtError {
    #[error("fault propagation supports at most 64 qubits and 64 classical bits")]
    TooWide,
    #[error("gate {0} does not exist or cannot host this fault")]
    BadLocation(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli1 {
    I,
    X,
    Y,
    Z,
}

impl Pauli1 {
    pub const NONTRIVIAL: [Pauli1; 3] = [Pauli1::X, Pauli1::Y, Pauli1::Z];
    pub const ALL: [Pauli1; 4] = [Pauli1::I, Pauli1::X, Pauli1::Y, Pauli1::Z];

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli1::I => (false, false),
            Pauli1::X => (true, false),
            Pauli1::Y => (true, true),
            Pauli1::Z => (false, true),
        }
    }

    fn letter(self) -> char {
        match self {
            Pauli1::I => 'I',
            Pauli1::X => 'X',
            Pauli1::Y => 'Y',
            Pauli1::Z => 'Z',
        }
    }
}

/// Pauli operator up to sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub fn on(qubits: &[usize], paulis: &[Pauli1]) -> Self {
        let mut p = PauliString::default();
        for (&q, &s) in qubits.iter().zip(paulis) {
            let (x, z) = s.bits();
            p.x |= u64::from(x) << q;
            p.z |= u64::from(z) << q;
        }
        p
    }

    pub fn x_on(mask: u64) -> Self {
        PauliString { x: mask, z: 0 }
    }

    pub fn z_on(mask: u64) -> Self {
        PauliString { x: 0, z: mask }
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn mul(self, other: Self) -> Self {
        PauliString { x: self.x ^ other.x, z: self.z ^ other.z }
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    pub fn restrict(&self, mask: u64) -> Self {
        PauliString { x: self.x & mask, z: self.z & mask }
    }

    pub fn get(&self, q: usize) -> Pauli1 {
        match (self.x >> q & 1, self.z >> q & 1) {
            (0, 0) => Pauli1::I,
            (1, 0) => Pauli1::X,
            (1, 1) => Pauli1::Y,
            _ => Pauli1::Z,
        }
    }

    /// Letters over the given qubits, e.g. `XZ`.
    pub fn label_on(&self, qubits: &[usize]) -> String {
        qubits.iter().map(|&q| self.get(q).letter()).collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("I");
        }
        let mut first = true;
        for q in 0..64 {
            let p = self.get(q);
            if p != Pauli1::I {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{}{}", p.letter(), q)?;
                first = false;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaultSlot {
    /// Pauli right after the gate, on the gate's support.
    AfterGate,
    /// Pauli on a qubit before its first operation (preparation or incoming error).
    BeforeFirstUse,
    /// Classical readout flip of a measurement.
    MeasurementFlip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaultLocation {
    pub gate: usize,
    pub slot: FaultSlot,
    pub pauli: PauliString,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    DetectedByCheck,
    StabilizerEquivalent,
    LogicalError,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::DetectedByCheck => "DETECTED_BY_CHECK",
            Classification::StabilizerEquivalent => "STABILIZER_EQUIVALENT",
            Classification::LogicalError => "LOGICAL_ERROR",
        }
    }
}

/// Frame left at the end of the circuit together with the flipped classical bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Terminal {
    pub pauli: PauliString,
    pub flips: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultReport {
    pub location: FaultLocation,
    pub branch: usize,
    pub terminal: Terminal,
    pub classification: Classification,
}

fn check_width(c: &PhysicalCircuit) -> Result<(), FtError> {
    if c.num_qubits > 64 || c.num_clbits > 64 {
        return Err(FtError::TooWide);
    }
    Ok(())
}

fn step(frame: &mut Terminal, gate_kind: GateKind, qubits: &[usize], clbit: Option<usize>) -> Option<PauliString> {
    let p = &mut frame.pauli;
    let bit = |m: u64, q: usize| m >> q & 1;
    match gate_kind {
        GateKind::Cnot => {
            let (c, t) = (qubits[0], qubits[1]);
            p.x ^= bit(p.x, c) << t;
            p.z ^= bit(p.z, t) << c;
        }
        GateKind::H => {
            let q = qubits[0];
            let (x, z) = (bit(p.x, q), bit(p.z, q));
            p.x = p.x & !(1 << q) | z << q;
            p.z = p.z & !(1 << q) | x << q;
        }
        GateKind::X | GateKind::Z | GateKind::Barrier => {}
        GateKind::Reset | GateKind::ResetX => {
            p.x &= !(1 << qubits[0]);
            p.z &= !(1 << qubits[0]);
        }
        GateKind::MeasureZ => {
            let q = qubits[0];
            frame.flips ^= bit(p.x, q) << clbit.expect("measurement has a clbit");
            p.z &= !(1 << q);
        }
        GateKind::MeasureX => {
            let q = qubits[0];
            frame.flips ^= bit(p.z, q) << clbit.expect("measurement has a clbit");
            p.x &= !(1 << q);
        }
        GateKind::Rzz | GateKind::Rxx | GateKind::Rx => {
            let mask: u64 = qubits.iter().map(|&q| 1u64 << q).sum();
            let generator = if gate_kind == GateKind::Rzz { PauliString::z_on(mask) } else { PauliString::x_on(mask) };
            if !p.commutes_with(&generator) {
                return Some(p.mul(generator));
            }
        }
    }
    None
}

/// Pushes one fault to the end of the circuit. Returns every branch, or
/// `None` when more than `max_branches` distinct frames arise.
pub fn propagate(
    circuit: &PhysicalCircuit,
    fault: &FaultLocation,
    max_branches: usize,
) -> Result<Option<Vec<Terminal>>, FtError> {
    check_width(circuit)?;
    let gate = circuit.gates.get(fault.gate).ok_or(FtError::BadLocation(fault.gate))?;
    let (start, init) = match fault.slot {
        FaultSlot::AfterGate => (fault.gate + 1, Terminal { pauli: fault.pauli, flips: 0 }),
        FaultSlot::BeforeFirstUse => (fault.gate, Terminal { pauli: fault.pauli, flips: 0 }),
        FaultSlot::MeasurementFlip => {
            let c = gate.clbit.ok_or(FtError::BadLocation(fault.gate))?;
            (fault.gate + 1, Terminal { pauli: PauliString::default(), flips: 1 << c })
        }
    };
    let mut frames = vec![init];
    let mut seen: HashSet<Terminal> = HashSet::new();
    for g in &circuit.gates[start..] {
        let mut extra = Vec::new();
        for f in frames.iter_mut() {
            if let Some(other) = step(f, g.kind, &g.qubits, g.clbit) {
                extra.push(Terminal { pauli: other, flips: f.flips });
            }
        }
        if !extra.is_empty() {
            frames.extend(extra);
            seen.clear();
            frames.retain(|f| seen.insert(*f));
            if frames.len() > max_branches {
                return Ok(None);
            }
        }
    }
    Ok(Some(frames))
}

/// What the data register is supposed to hold right after the fragment under test.
#[derive(Clone, Debug)]
pub enum FtContext {
    /// Logical `|+⟩^k`: stabilized by `S_z` and every `X_i X_j` on data.
    PlusState(IcebergLayout),
    /// A generic code state, followed by perfect stabilizer checks.
    CodeState(IcebergLayout),
    /// Everything is measured; only check and decode bits matter.
    Measured { checks: Vec<ParityCheck>, logicals: Vec<Vec<usize>> },
}

fn data_mask(layout: &IcebergLayout) -> u64 {
    (1u64 << layout.n()) - 1
}

/// Classifies one branch's terminal frame in the given context.
pub fn classify_terminal(term: &Terminal, checks: &[ParityCheck], ctx: &FtContext) -> Classification {
    if checks.iter().any(|c| parity_of(&c.bits, term.flips)) {
        return Classification::DetectedByCheck;
    }
    match ctx {
        FtContext::Measured { logicals, .. } => {
            if logicals.iter().any(|l| parity_of(l, term.flips)) {
                Classification::LogicalError
            } else {
                Classification::StabilizerEquivalent
            }
        }
        FtContext::PlusState(layout) | FtContext::CodeState(layout) => {
            let all = data_mask(layout);
            let p = term.pauli.restrict(all);
            let sx = PauliString::x_on(all);
            let sz = PauliString::z_on(all);
            if !p.commutes_with(&sx) || !p.commutes_with(&sz) {
                return Classification::DetectedByCheck;
            }
            let trivial_z = p.z == 0 || p.z == all;
            let trivial = match ctx {
                // Even-weight X parts are products of X_i X_j stabilizers.
                FtContext::PlusState(_) => trivial_z,
                _ => trivial_z && (p.x == 0 || p.x == all),
            };
            if trivial {
                Classification::StabilizerEquivalent
            } else {
                Classification::LogicalError
            }
        }
    }
}

/// Every single fault location of a circuit: all nontrivial Paulis after each
/// unitary or reset, a readout flip per measurement, and single-qubit Paulis
/// before each qubit's first operation.
pub fn enumerate_faults(circuit: &PhysicalCircuit) -> Vec<FaultLocation> {
    let mut out = Vec::new();
    let mut used = vec![false; circuit.num_qubits];
    for (i, g) in circuit.gates.iter().enumerate() {
        if g.kind == GateKind::Barrier {
            continue;
        }
        for &q in &g.qubits {
            if !used[q] {
                used[q] = true;
                for p in Pauli1::NONTRIVIAL {
                    out.push(FaultLocation { gate: i, slot: FaultSlot::BeforeFirstUse, pauli: PauliString::on(&[q], &[p]) });
                }
            }
        }
        if g.kind.is_measurement() {
            out.push(FaultLocation { gate: i, slot: FaultSlot::MeasurementFlip, pauli: PauliString::default() });
            continue;
        }
        let arity = g.qubits.len() as u32;
        for code in 1..4usize.pow(arity) {
            let paulis: Vec<Pauli1> = (0..arity).map(|j| Pauli1::ALL[code / 4usize.pow(j) % 4]).collect();
            out.push(FaultLocation { gate: i, slot: FaultSlot::AfterGate, pauli: PauliString::on(&g.qubits, &paulis) });
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct FtSummary {
    pub locations: usize,
    pub branches: usize,
    pub detected: usize,
    pub stabilizer_equivalent: usize,
    pub logical_errors: usize,
    /// Locations whose branch count exceeded the cap.
    pub unresolved: usize,
    pub reports: Vec<FaultReport>,
}

impl FtSummary {
    fn absorb(&mut self, reports: Option<Vec<FaultReport>>) {
        self.locations += 1;
        match reports {
            None => self.unresolved += 1,
            Some(reports) => {
                for r in reports {
                    self.branches += 1;
                    match r.classification {
                        Classification::DetectedByCheck => self.detected += 1,
                        Classification::StabilizerEquivalent => self.stabilizer_equivalent += 1,
                        Classification::LogicalError => self.logical_errors += 1,
                    }
                    self.reports.push(r);
                }
            }
        }
    }

    pub fn is_fault_tolerant(&self) -> bool {
        self.logical_errors == 0 && self.unresolved == 0
    }
}

/// Classifies every single fault of `circuit` against `checks` and `ctx`.
pub fn analyze_faults(
    circuit: &PhysicalCircuit,
    checks: &[ParityCheck],
    ctx: &FtContext,
    max_branches: usize,
    policy: ExecPolicy,
) -> Result<FtSummary, FtError> {
    check_width(circuit)?;
    let faults = enumerate_faults(circuit);
    let per_fault = policy.map_slice(&faults, |f| {
        propagate(circuit, f, max_branches).map(|branches| {
            branches.map(|bs| {
                bs.into_iter()
                    .enumerate()
                    .map(|(branch, terminal)| FaultReport {
                        location: *f,
                        branch,
                        terminal,
                        classification: classify_terminal(&terminal, checks, ctx),
                    })
                    .collect::<Vec<_>>()
            })
        })
    });
    let mut summary = FtSummary::default();
    for r in per_fault {
        summary.absorb(r?);
    }
    Ok(summary)
}

/// Exhaustive single-fault check of a gadget in an ideal encoded context.
pub fn check_gadget_ft(gadget: &Gadget, policy: ExecPolicy) -> Result<FtSummary, FtError> {
    let ctx = match gadget.kind.role() {
        Role::Init => FtContext::PlusState(gadget.layout),
        Role::Syndrome => FtContext::CodeState(gadget.layout),
        _ => FtContext::Measured {
            checks: gadget.fragment.checks.clone(),
            logicals: gadget.fragment.logicals.clone(),
        },
    };
    analyze_faults(&gadget.fragment, &gadget.fragment.checks, &ctx, 1, policy)
}

/// All single faults of a compiled, fully measured circuit.
pub fn check_circuit_faults(circuit: &PhysicalCircuit, max_branches: usize, policy: ExecPolicy) -> Result<FtSummary, FtError> {
    let ctx = FtContext::Measured { checks: circuit.checks.clone(), logicals: circuit.logicals.clone() };
    analyze_faults(circuit, &circuit.checks, &ctx, max_branches, policy)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationFaultPartition {
    /// Two-letter labels (anchor qubit first) that commute with both stabilizers.
    pub undetectable: Vec<String>,
    pub detected: Vec<String>,
}

/// Splits the 15 two-qubit Paulis after an encoded X rotation on
/// `(anchor, logical)` into those the stabilizers catch and those they miss.
pub fn classify_rotation_faults(layout: &IcebergLayout, logical: usize, bottom_anchor: bool) -> RotationFaultPartition {
    let all = data_mask(layout);
    let (sx, sz) = (PauliString::x_on(all), PauliString::z_on(all));
    let anchor = if bottom_anchor { layout.bottom() } else { layout.top() };
    let mut part = RotationFaultPartition { undetectable: Vec::new(), detected: Vec::new() };
    for a in Pauli1::ALL {
        for b in Pauli1::ALL {
            if a == Pauli1::I && b == Pauli1::I {
                continue;
            }
            let p = PauliString::on(&[anchor, logical], &[a, b]);
            let label = p.label_on(&[anchor, logical]);
            if p.commutes_with(&sx) && p.commutes_with(&sz) {
                part.undetectable.push(label);
            } else {
                part.detected.push(label);
            }
        }
    }
    part.undetectable.sort();
    part.detected.sort();
    part
}
