//! Iceberg-code layout, the initialization / syndrome / final-measurement
//! gadgets (original and depth-reduced variants), qubit-order resynthesis and
//! the encoding of logical rotations.
//!
//! Physical indexing: data qubits `t = 0`, logical `i` at `i` (1..=k),
//! `b = k + 1`; ancillas `k + 2` and `k + 3`. Logical operators are
//! `X̄_i = X_t X_i` and `Z̄_i = Z_i Z_b`.

use std::fmt;

use thiserror::Error;

use crate::circuit::{Gate, ParityCheck, PhysicalCircuit, Role};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GadgetError {
    #[error("k must be even and at least 2, got {0}")]
    BadK(usize),
    #[error("the depth-reduced syndrome gadget needs k + 2 divisible by 4, got k = {0}")]
    Divisibility(usize),
    #[error("implicit order must be a permutation of the {0} data qubits")]
    BadOrder(usize),
    #[error("logical index {0} outside 1..={1}")]
    LogicalIndex(usize, usize),
    #[error("bottom-anchored mixer rotations need the Z2 symmetry to be enabled")]
    Z2NotEnabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IcebergLayout {
    pub k: usize,
}

impl IcebergLayout {
    pub fn new(k: usize) -> Result<Self, GadgetError> {
        if k < 2 || k % 2 == 1 {
            return Err(GadgetError::BadK(k));
        }
        Ok(IcebergLayout { k })
    }

    /// Number of data qubits.
    pub fn n(&self) -> usize {
        self.k + 2
    }

    pub fn top(&self) -> usize {
        0
    }

    pub fn bottom(&self) -> usize {
        self.k + 1
    }

    pub fn ancillas(&self) -> [usize; 2] {
        [self.k + 2, self.k + 3]
    }

    pub fn num_qubits(&self) -> usize {
        self.k + 4
    }

    /// `[t, 1, ..., k, b]`.
    pub fn default_order(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    pub fn supports_new_syndrome(&self) -> bool {
        self.n() % 4 == 0
    }

    fn check_order(&self, order: &[usize]) -> Result<(), GadgetError> {
        let mut seen = vec![false; self.n()];
        if order.len() != self.n() {
            return Err(GadgetError::BadOrder(self.n()));
        }
        for &q in order {
            if q >= self.n() || seen[q] {
                return Err(GadgetError::BadOrder(self.n()));
            }
            seen[q] = true;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GadgetKind {
    InitOld,
    InitNew,
    SyndromeOld,
    SyndromeNew,
    FinalOld,
    FinalNew,
}

impl GadgetKind {
    pub const ALL: [GadgetKind; 6] = [
        GadgetKind::InitOld,
        GadgetKind::InitNew,
        GadgetKind::SyndromeOld,
        GadgetKind::SyndromeNew,
        GadgetKind::FinalOld,
        GadgetKind::FinalNew,
    ];

    pub fn role(self) -> Role {
        match self {
            GadgetKind::InitOld | GadgetKind::InitNew => Role::Init,
            GadgetKind::SyndromeOld | GadgetKind::SyndromeNew => Role::Syndrome,
            GadgetKind::FinalOld | GadgetKind::FinalNew => Role::FinalMeas,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GadgetKind::InitOld => "init_old",
            GadgetKind::InitNew => "init_new",
            GadgetKind::SyndromeOld => "syndrome_old",
            GadgetKind::SyndromeNew => "syndrome_new",
            GadgetKind::FinalOld => "final_old",
            GadgetKind::FinalNew => "final_new",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn build(self, layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
        match self {
            GadgetKind::InitOld => init_old(layout, order),
            GadgetKind::InitNew => init_new(layout, order),
            GadgetKind::SyndromeOld => syndrome_old(layout, order),
            GadgetKind::SyndromeNew => syndrome_new(layout, order),
            GadgetKind::FinalOld => final_old(layout, order),
            GadgetKind::FinalNew => final_new(layout, order),
        }
    }
}

impl fmt::Display for GadgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A gadget fragment over the `k + 4` physical qubits, with classical bits
/// numbered locally from 0. Checks live in `fragment.checks`; final gadgets
/// also fill `fragment.logicals` (one entry per logical qubit 1..=k).
#[derive(Clone, Debug, PartialEq)]
pub struct Gadget {
    pub kind: GadgetKind,
    pub layout: IcebergLayout,
    pub order: Vec<usize>,
    pub fragment: PhysicalCircuit,
}

impl Gadget {
    fn start(kind: GadgetKind, layout: IcebergLayout, order: &[usize], num_clbits: usize) -> Self {
        let mut fragment = PhysicalCircuit::new(layout.num_qubits(), num_clbits);
        fragment.declare(0, kind.role());
        Gadget { kind, layout, order: order.to_vec(), fragment }
    }

    fn push(&mut self, g: Gate) {
        self.fragment.push(g);
    }

    pub fn checks(&self) -> &[ParityCheck] {
        &self.fragment.checks
    }

    pub fn decode_map(&self) -> &[Vec<usize>] {
        &self.fragment.logicals
    }

    pub fn two_qubit_gates(&self) -> impl Iterator<Item = &Gate> {
        self.fragment.gates.iter().filter(|g| g.is_two_qubit())
    }
}

/// Staircase GHZ preparation in the X basis, checked by one ancilla that
/// compares both ends of the staircase.
pub fn init_old(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    layout.check_order(order)?;
    let n = layout.n();
    let a = layout.ancillas()[0];
    let mut g = Gadget::start(GadgetKind::InitOld, layout, order, 1);
    g.push(Gate::reset_x(a));
    for &q in &order[1..] {
        g.push(Gate::h(q));
    }
    for j in 1..n {
        g.push(Gate::cx(order[j], order[j - 1]));
    }
    g.push(Gate::cx(a, order[n - 1]));
    g.push(Gate::cx(a, order[0]));
    g.push(Gate::mx(a, 0));
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    Ok(g)
}

/// Two-branch GHZ preparation: both branches grow from `order[0]` and the
/// ancilla checks the parity of the two branch ends.
pub fn init_new(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    layout.check_order(order)?;
    let n = layout.n();
    let a = layout.ancillas()[0];
    let mut g = Gadget::start(GadgetKind::InitNew, layout, order, 1);
    g.push(Gate::reset_x(a));
    for &q in &order[1..] {
        g.push(Gate::h(q));
    }
    g.push(Gate::cx(order[n - 1], order[0]));
    for s in 2..=n / 2 {
        g.push(Gate::cx(order[s - 1], order[s - 2]));
        g.push(Gate::cx(order[n - s], order[n - s + 1]));
    }
    g.push(Gate::cx(a, order[n / 2 - 1]));
    g.push(Gate::cx(a, order[n / 2]));
    g.push(Gate::mx(a, 0));
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    Ok(g)
}

/// Both ancillas sweep the data qubits in `order`; the X-check ancilla goes
/// first on the second and the last qubit, which keeps both outcomes
/// deterministic and hook errors detectable.
pub fn syndrome_old(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    layout.check_order(order)?;
    let n = layout.n();
    let [az, ax] = layout.ancillas();
    let mut g = Gadget::start(GadgetKind::SyndromeOld, layout, order, 2);
    g.push(Gate::reset(az));
    g.push(Gate::reset_x(ax));
    for (j, &q) in order.iter().enumerate() {
        let z_first = !(j == 1 || j == n - 1);
        if z_first {
            g.push(Gate::cx(q, az));
            g.push(Gate::cx(ax, q));
        } else {
            g.push(Gate::cx(ax, q));
            g.push(Gate::cx(q, az));
        }
    }
    g.push(Gate::mz(az, 0));
    g.push(Gate::mx(ax, 1));
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    g.fragment.checks.push(ParityCheck::zero(vec![1]));
    Ok(g)
}

/// Slot touched by the X-check ancilla at each step of the depth-reduced
/// syndrome gadget (the Z-check ancilla touches slot `s` at step `s`).
pub fn syndrome_new_x_slots(n: usize) -> Vec<usize> {
    let mut slots = vec![1, 0];
    for block in 0..(n - 4) / 4 {
        let s0 = 2 + 4 * block;
        slots.extend([s0 + 2, s0 + 3, s0, s0 + 1]);
    }
    slots.extend([n - 1, n - 2]);
    slots
}

/// Whether step `s` of the depth-reduced syndrome gadget picks fresh qubits
/// (`None`) or repeats an earlier step with the roles swapped (`Some(step)`).
pub fn syndrome_new_step_source(n: usize, s: usize) -> Option<usize> {
    if s == 1 || s == n - 1 {
        Some(s - 1)
    } else if s == 0 || s == n - 2 || (s - 2) % 4 < 2 {
        None
    } else {
        Some(s - 2)
    }
}

/// Depth `n` syndrome measurement: at step `s` the Z-check ancilla collects
/// `order[s]` and the X-check ancilla hits `order[x_slots[s]]`.
pub fn syndrome_new(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    if !layout.supports_new_syndrome() {
        return Err(GadgetError::Divisibility(layout.k));
    }
    layout.check_order(order)?;
    let n = layout.n();
    let [az, ax] = layout.ancillas();
    let mut g = Gadget::start(GadgetKind::SyndromeNew, layout, order, 2);
    g.push(Gate::reset(az));
    g.push(Gate::reset_x(ax));
    for (s, x) in syndrome_new_x_slots(n).into_iter().enumerate() {
        g.push(Gate::cx(order[s], az));
        g.push(Gate::cx(ax, order[x]));
    }
    g.push(Gate::mz(az, 0));
    g.push(Gate::mx(ax, 1));
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    g.fragment.checks.push(ParityCheck::zero(vec![1]));
    Ok(g)
}

/// A `|+⟩` ancilla collects `S_x` while a flag qubit, touched right after the
/// first and right before the last data CNOT, catches ancilla faults in
/// between; all data qubits are then read out in the Z basis.
/// Bits: `c0` = S_x ancilla, `c1` = flag, `c(2 + q)` = data qubit `q`.
pub fn final_old(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    layout.check_order(order)?;
    let n = layout.n();
    let [a, f] = layout.ancillas();
    let mut g = Gadget::start(GadgetKind::FinalOld, layout, order, n + 2);
    g.push(Gate::reset_x(a));
    g.push(Gate::reset(f));
    g.push(Gate::cx(a, order[0]));
    g.push(Gate::cx(a, f));
    for &q in &order[1..n - 1] {
        g.push(Gate::cx(a, q));
    }
    g.push(Gate::cx(a, f));
    g.push(Gate::cx(a, order[n - 1]));
    g.push(Gate::mx(a, 0));
    g.push(Gate::mz(f, 1));
    for &q in order {
        g.push(Gate::mz(q, 2 + q));
    }
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    g.fragment.checks.push(ParityCheck::zero(vec![1]));
    g.fragment.checks.push(ParityCheck::zero((2..n + 2).collect()));
    let b = layout.bottom();
    g.fragment.logicals = (1..=layout.k).map(|i| vec![2 + i, 2 + b]).collect();
    Ok(g)
}

/// The first data qubit of `order` doubles as the `S_x` collector: it fans out
/// CNOTs to every other data qubit (and twice to the flag), is read out in the
/// X basis, and the targets then carry `Z_r Z_j` parities.
/// Bits: `c0` = root (S_x), `c1` = flag, then the targets in ascending index.
pub fn final_new(layout: IcebergLayout, order: &[usize]) -> Result<Gadget, GadgetError> {
    layout.check_order(order)?;
    let n = layout.n();
    let r = order[0];
    let f = layout.ancillas()[0];
    let mut g = Gadget::start(GadgetKind::FinalNew, layout, order, n + 1);
    g.push(Gate::reset(f));
    g.push(Gate::cx(r, f));
    for &q in &order[1..n - 1] {
        g.push(Gate::cx(r, q));
    }
    g.push(Gate::cx(r, f));
    g.push(Gate::cx(r, order[n - 1]));
    g.push(Gate::mx(r, 0));
    g.push(Gate::mz(f, 1));
    let mut bit_of = vec![None; n];
    for (j, q) in (0..n).filter(|&q| q != r).enumerate() {
        bit_of[q] = Some(2 + j);
    }
    for &q in &order[1..] {
        g.push(Gate::mz(q, bit_of[q].unwrap()));
    }
    g.fragment.checks.push(ParityCheck::zero(vec![0]));
    g.fragment.checks.push(ParityCheck::zero(vec![1]));
    g.fragment.checks.push(ParityCheck::zero((2..n + 1).collect()));
    // Z_i Z_b = (Z_r Z_i)(Z_r Z_b); a parity involving r itself is one target bit.
    let b = layout.bottom();
    g.fragment.logicals = (1..=layout.k)
        .map(|i| [bit_of[i], bit_of[b]].into_iter().flatten().collect())
        .collect();
    Ok(g)
}

/// Rebuilds the gadget over the data-qubit order `order[pi[j]]`; the check and
/// decode maps follow from the new structure.
pub fn permute_gadget(g: &Gadget, pi: &[usize]) -> Result<Gadget, GadgetError> {
    g.layout.check_order(pi)?;
    let order: Vec<usize> = pi.iter().map(|&j| g.order[j]).collect();
    g.kind.build(g.layout, &order)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogicalPauli {
    /// `X̄_i`.
    X(usize),
    /// `Z̄_i Z̄_j`.
    ZZ(usize, usize),
}

/// Maps logical Pauli rotations to single physical two-qubit rotations.
#[derive(Clone, Copy, Debug)]
pub struct RotationEncoder {
    pub layout: IcebergLayout,
    pub z2: bool,
}

impl RotationEncoder {
    pub fn encode(&self, pauli: LogicalPauli, theta: f64, use_bottom: bool) -> Result<Gate, GadgetError> {
        let k = self.layout.k;
        let check = |i: usize| if (1..=k).contains(&i) { Ok(i) } else { Err(GadgetError::LogicalIndex(i, k)) };
        match pauli {
            LogicalPauli::X(i) => {
                let i = check(i)?;
                if use_bottom && !self.z2 {
                    return Err(GadgetError::Z2NotEnabled);
                }
                let anchor = if use_bottom { self.layout.bottom() } else { self.layout.top() };
                Ok(Gate::rxx(anchor, i, theta))
            }
            LogicalPauli::ZZ(i, j) => {
                let (i, j) = (check(i)?, check(j)?);
                if i == j {
                    return Err(GadgetError::LogicalIndex(j, k));
                }
                Ok(Gate::rzz(i, j, theta))
            }
        }
    }
}
