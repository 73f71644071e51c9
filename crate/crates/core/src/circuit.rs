//! Physical circuits: gates tagged with components, ASAP layering, depth and
//! area metrics, and the line-oriented text format.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rzz,
    Rxx,
    /// Single-qubit `exp(-i θ X)`; only used by unencoded reference circuits.
    Rx,
    Cnot,
    H,
    X,
    Z,
    MeasureZ,
    MeasureX,
    Reset,
    /// Prepares `|+⟩`.
    ResetX,
    Barrier,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
        GateKind::Rzz,
        GateKind::Rxx,
        GateKind::Rx,
        GateKind::Cnot,
        GateKind::H,
        GateKind::X,
        GateKind::Z,
        GateKind::MeasureZ,
        GateKind::MeasureX,
        GateKind::Reset,
        GateKind::ResetX,
        GateKind::Barrier,
    ];

    /// Required number of qubits, `None` for barriers.
    pub fn arity(self) -> Option<usize> {
        match self {
            GateKind::Rzz | GateKind::Rxx | GateKind::Cnot => Some(2),
            GateKind::Barrier => None,
            _ => Some(1),
        }
    }

    pub fn is_two_qubit(self) -> bool {
        self.arity() == Some(2)
    }

    pub fn has_angle(self) -> bool {
        matches!(self, GateKind::Rzz | GateKind::Rxx | GateKind::Rx)
    }

    pub fn is_measurement(self) -> bool {
        matches!(self, GateKind::MeasureZ | GateKind::MeasureX)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            GateKind::Rzz => "rzz",
            GateKind::Rxx => "rxx",
            GateKind::Rx => "rx",
            GateKind::Cnot => "cx",
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::MeasureZ => "mz",
            GateKind::MeasureX => "mx",
            GateKind::Reset => "reset",
            GateKind::ResetX => "reset_x",
            GateKind::Barrier => "barrier",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.mnemonic() == s)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// What a component of the encoded circuit is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Init,
    PhaseLayer,
    MixerLayer,
    Syndrome,
    FinalMeas,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Init => "INIT",
            Role::PhaseLayer => "PHASE_LAYER",
            Role::MixerLayer => "MIXER_LAYER",
            Role::Syndrome => "SYNDROME",
            Role::FinalMeas => "FINAL_MEAS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Role::Init, Role::PhaseLayer, Role::MixerLayer, Role::Syndrome, Role::FinalMeas]
            .into_iter()
            .find(|r| r.name() == s)
    }

    pub fn is_gadget(self) -> bool {
        matches!(self, Role::Init | Role::Syndrome | Role::FinalMeas)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub angle: Option<f64>,
    pub clbit: Option<usize>,
    pub component: usize,
}

impl Gate {
    fn new(kind: GateKind, qubits: Vec<usize>) -> Self {
        Gate { kind, qubits, angle: None, clbit: None, component: 0 }
    }

    fn rotation(kind: GateKind, qubits: Vec<usize>, theta: f64) -> Self {
        Gate { angle: Some(theta), ..Gate::new(kind, qubits) }
    }

    pub fn rzz(a: usize, b: usize, theta: f64) -> Self {
        Gate::rotation(GateKind::Rzz, vec![a, b], theta)
    }

    pub fn rxx(a: usize, b: usize, theta: f64) -> Self {
        Gate::rotation(GateKind::Rxx, vec![a, b], theta)
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Gate::rotation(GateKind::Rx, vec![q], theta)
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Gate::new(GateKind::Cnot, vec![control, target])
    }

    pub fn h(q: usize) -> Self {
        Gate::new(GateKind::H, vec![q])
    }

    pub fn x(q: usize) -> Self {
        Gate::new(GateKind::X, vec![q])
    }

    pub fn z(q: usize) -> Self {
        Gate::new(GateKind::Z, vec![q])
    }

    pub fn mz(q: usize, c: usize) -> Self {
        Gate { clbit: Some(c), ..Gate::new(GateKind::MeasureZ, vec![q]) }
    }

    pub fn mx(q: usize, c: usize) -> Self {
        Gate { clbit: Some(c), ..Gate::new(GateKind::MeasureX, vec![q]) }
    }

    pub fn reset(q: usize) -> Self {
        Gate::new(GateKind::Reset, vec![q])
    }

    pub fn reset_x(q: usize) -> Self {
        Gate::new(GateKind::ResetX, vec![q])
    }

    /// Empty `qubits` fences the whole register.
    pub fn barrier(qubits: Vec<usize>) -> Self {
        Gate::new(GateKind::Barrier, qubits)
    }

    pub fn in_component(mut self, component: usize) -> Self {
        self.component = component;
        self
    }

    pub fn is_two_qubit(&self) -> bool {
        self.kind.is_two_qubit()
    }
}

/// XOR of the listed classical bits must equal `expected` for a shot to be kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheck {
    pub bits: Vec<usize>,
    pub expected: bool,
}

impl ParityCheck {
    pub fn zero(bits: Vec<usize>) -> Self {
        ParityCheck { bits, expected: false }
    }

    pub fn holds(&self, word: u64) -> bool {
        parity_of(&self.bits, word) == self.expected
    }
}

/// XOR of the selected bits of a classical register packed into a word.
pub fn parity_of(bits: &[usize], word: u64) -> bool {
    bits.iter().fold(false, |acc, &b| acc ^ (word >> b & 1 == 1))
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PhysicalCircuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub gates: Vec<Gate>,
    /// Component id to role; ids also give the logical execution order.
    pub components: BTreeMap<usize, Role>,
    pub checks: Vec<ParityCheck>,
    /// `logicals[i]` lists the classical bits whose XOR is logical bit `i`.
    pub logicals: Vec<Vec<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("gate {index}: {kind} takes {expected} qubit(s), got {got}")]
    Arity { index: usize, kind: GateKind, expected: usize, got: usize },
    #[error("gate {index}: qubit {qubit} out of range for {num_qubits} qubits")]
    QubitRange { index: usize, qubit: usize, num_qubits: usize },
    #[error("gate {index}: qubit {qubit} repeated")]
    DuplicateQubit { index: usize, qubit: usize },
    #[error("gate {index}: {kind} needs a finite angle and nothing else does")]
    Angle { index: usize, kind: GateKind },
    #[error("gate {index}: classical target missing, misplaced or out of range")]
    Clbit { index: usize },
    #[error("gate {index}: component {component} is not declared")]
    UnknownComponent { index: usize, component: usize },
    #[error("gate {index}: qubit {qubit} runs component {later} before component {earlier} is finished")]
    ComponentOrder { index: usize, qubit: usize, earlier: usize, later: usize },
    #[error("classical bit {bit} referenced by a check or logical is out of range")]
    ClbitRange { bit: usize },
}

impl PhysicalCircuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        PhysicalCircuit { num_qubits, num_clbits, ..Default::default() }
    }

    pub fn declare(&mut self, component: usize, role: Role) {
        self.components.insert(component, role);
    }

    pub fn push(&mut self, gate: Gate) {
        self.gates.push(gate);
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }

    pub fn role_of(&self, gate: &Gate) -> Option<Role> {
        self.components.get(&gate.component).copied()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        // Last component seen on each qubit, for the cross-component ordering rule.
        let mut last_component: Vec<Option<usize>> = vec![None; self.num_qubits];
        for (index, g) in self.gates.iter().enumerate() {
            if let Some(expected) = g.kind.arity() {
                if g.qubits.len() != expected {
                    return Err(CircuitError::Arity { index, kind: g.kind, expected, got: g.qubits.len() });
                }
            }
            for (pos, &q) in g.qubits.iter().enumerate() {
                if q >= self.num_qubits {
                    return Err(CircuitError::QubitRange { index, qubit: q, num_qubits: self.num_qubits });
                }
                if g.qubits[..pos].contains(&q) {
                    return Err(CircuitError::DuplicateQubit { index, qubit: q });
                }
            }
            let angle_ok = match (g.kind.has_angle(), g.angle) {
                (true, Some(a)) => a.is_finite(),
                (false, None) => true,
                _ => false,
            };
            if !angle_ok {
                return Err(CircuitError::Angle { index, kind: g.kind });
            }
            let clbit_ok = match (g.kind.is_measurement(), g.clbit) {
                (true, Some(c)) => c < self.num_clbits,
                (false, None) => true,
                _ => false,
            };
            if !clbit_ok {
                return Err(CircuitError::Clbit { index });
            }
            if g.kind == GateKind::Barrier {
                continue;
            }
            if !self.components.contains_key(&g.component) {
                return Err(CircuitError::UnknownComponent { index, component: g.component });
            }
            for &q in &g.qubits {
                match last_component[q] {
                    Some(prev) if prev > g.component => {
                        return Err(CircuitError::ComponentOrder {
                            index,
                            qubit: q,
                            earlier: g.component,
                            later: prev,
                        });
                    }
                    _ => last_component[q] = Some(g.component),
                }
            }
        }
        let referenced = self.checks.iter().flat_map(|c| c.bits.iter()).chain(self.logicals.iter().flatten());
        for &bit in referenced {
            if bit >= self.num_clbits {
                return Err(CircuitError::ClbitRange { bit });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSchedule {
    /// Gate indices per layer; barriers are not placed in any layer.
    pub layers: Vec<Vec<usize>>,
    pub depth_all: usize,
    pub depth_2q: usize,
}

impl LayerSchedule {
    /// Layer index of every gate, `None` for barriers.
    pub fn layer_of(&self, num_gates: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_gates];
        for (l, layer) in self.layers.iter().enumerate() {
            for &g in layer {
                out[g] = Some(l);
            }
        }
        out
    }
}

/// Greedy ASAP layering in program order. Validation rejects circuits whose
/// program order on some qubit would run a later component before an earlier one.
pub fn layered_schedule(circuit: &PhysicalCircuit) -> Result<LayerSchedule, CircuitError> {
    circuit.validate()?;
    let mut next_free = vec![0usize; circuit.num_qubits];
    let mut layers: Vec<Vec<usize>> = Vec::new();
    for (i, g) in circuit.gates.iter().enumerate() {
        if g.kind == GateKind::Barrier {
            let fenced: Vec<usize> =
                if g.qubits.is_empty() { (0..circuit.num_qubits).collect() } else { g.qubits.clone() };
            let fence = fenced.iter().map(|&q| next_free[q]).max().unwrap_or(0);
            for q in fenced {
                next_free[q] = fence;
            }
            continue;
        }
        let layer = g.qubits.iter().map(|&q| next_free[q]).max().unwrap_or(0);
        if layer == layers.len() {
            layers.push(Vec::new());
        }
        layers[layer].push(i);
        for &q in &g.qubits {
            next_free[q] = layer + 1;
        }
    }
    let depth_2q =
        layers.iter().filter(|l| l.iter().any(|&g| circuit.gates[g].is_two_qubit())).count();
    Ok(LayerSchedule { depth_all: layers.len(), depth_2q, layers })
}

pub fn two_qubit_depth(circuit: &PhysicalCircuit) -> Result<usize, CircuitError> {
    Ok(layered_schedule(circuit)?.depth_2q)
}

/// `(k + 2) * 2Q depth`; ancillas are not counted in the width.
pub fn space_time_area(circuit: &PhysicalCircuit, k: usize) -> Result<usize, CircuitError> {
    Ok((k + 2) * two_qubit_depth(circuit)?)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid circuit: {0}")]
    Invalid(#[from] CircuitError),
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

pub fn write_circuit(circuit: &PhysicalCircuit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "qubits {} clbits {}", circuit.num_qubits, circuit.num_clbits);
    let mut current: Option<usize> = None;
    for g in &circuit.gates {
        if g.kind != GateKind::Barrier && current != Some(g.component) {
            let role = circuit.components.get(&g.component).map_or("UNKNOWN", |r| r.name());
            let _ = writeln!(out, "component {} {}", g.component, role);
            current = Some(g.component);
        }
        out.push_str(g.kind.mnemonic());
        for q in &g.qubits {
            let _ = write!(out, " {q}");
        }
        if let Some(a) = g.angle {
            let _ = write!(out, " {a}");
        }
        if let Some(c) = g.clbit {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    let used: std::collections::BTreeSet<usize> =
        circuit.gates.iter().filter(|g| g.kind != GateKind::Barrier).map(|g| g.component).collect();
    for (id, role) in &circuit.components {
        if !used.contains(id) {
            let _ = writeln!(out, "component {id} {role}");
        }
    }
    for check in &circuit.checks {
        out.push_str("check");
        for b in &check.bits {
            let _ = write!(out, " c{b}");
        }
        let _ = writeln!(out, " = {}", u8::from(check.expected));
    }
    for (i, bits) in circuit.logicals.iter().enumerate() {
        let terms: Vec<String> = bits.iter().map(|b| format!("c{b}")).collect();
        let _ = writeln!(out, "logical {} = {}", i + 1, terms.join(" ^ "));
    }
    out
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, ParseError> {
    tok.parse().map_err(|_| syntax(line, format!("expected a non-negative integer, got `{tok}`")))
}

fn parse_bit(tok: &str, line: usize) -> Result<usize, ParseError> {
    let digits = tok.strip_prefix('c').ok_or_else(|| syntax(line, format!("expected c<index>, got `{tok}`")))?;
    parse_usize(digits, line)
}

/// Parses one gate line (no comments, no component or header lines).
pub fn parse_gate_line(text: &str, line: usize) -> Result<Gate, ParseError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let (&name, args) = toks.split_first().ok_or_else(|| syntax(line, "empty gate line"))?;
    let kind = GateKind::from_mnemonic(name).ok_or_else(|| syntax(line, format!("unknown gate `{name}`")))?;
    let tail = usize::from(kind.has_angle() || kind.is_measurement());
    let nq = match kind.arity() {
        Some(a) => a,
        None => args.len(),
    };
    if args.len() != nq + tail {
        return Err(syntax(line, format!("`{name}` takes {} argument(s), got {}", nq + tail, args.len())));
    }
    let qubits = args[..nq].iter().map(|t| parse_usize(t, line)).collect::<Result<Vec<_>, _>>()?;
    for (i, q) in qubits.iter().enumerate() {
        if qubits[..i].contains(q) {
            return Err(syntax(line, format!("qubit {q} repeated")));
        }
    }
    let mut gate = Gate::new(kind, qubits);
    if kind.has_angle() {
        let a: f64 = args[nq].parse().map_err(|_| syntax(line, format!("bad angle `{}`", args[nq])))?;
        if !a.is_finite() {
            return Err(syntax(line, "angle must be finite"));
        }
        gate.angle = Some(a);
    }
    if kind.is_measurement() {
        gate.clbit = Some(parse_usize(args[nq], line)?);
    }
    Ok(gate)
}

pub fn read_circuit(text: &str) -> Result<PhysicalCircuit, ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut circuit = PhysicalCircuit::default();
    let mut current: Option<usize> = None;
    let mut logicals: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match toks[0] {
            "qubits" => {
                if toks.len() != 4 || toks[2] != "clbits" {
                    return Err(syntax(line, "header must read `qubits N clbits M`"));
                }
                if header.is_some() || !circuit.gates.is_empty() {
                    return Err(syntax(line, "header must come first and only once"));
                }
                header = Some((parse_usize(toks[1], line)?, parse_usize(toks[3], line)?));
            }
            "component" => {
                if toks.len() != 3 {
                    return Err(syntax(line, "expected `component ID ROLE`"));
                }
                let id = parse_usize(toks[1], line)?;
                let role = Role::parse(toks[2]).ok_or_else(|| syntax(line, format!("unknown role `{}`", toks[2])))?;
                if let Some(prev) = circuit.components.insert(id, role) {
                    if prev != role {
                        return Err(syntax(line, format!("component {id} redeclared as {role}, was {prev}")));
                    }
                }
                current = Some(id);
            }
            "check" => {
                let eq = toks.iter().position(|&t| t == "=").ok_or_else(|| syntax(line, "check needs `= 0|1`"))?;
                if eq + 2 != toks.len() {
                    return Err(syntax(line, "check must end with `= 0` or `= 1`"));
                }
                let bits = toks[1..eq].iter().filter(|&&t| t != "^").map(|t| parse_bit(t, line)).collect::<Result<_, _>>()?;
                let expected = match toks[eq + 1] {
                    "0" => false,
                    "1" => true,
                    other => return Err(syntax(line, format!("check value must be 0 or 1, got `{other}`"))),
                };
                circuit.checks.push(ParityCheck { bits, expected });
            }
            "logical" => {
                if toks.len() < 4 || toks[2] != "=" {
                    return Err(syntax(line, "expected `logical I = cA ^ cB ...`"));
                }
                let i = parse_usize(toks[1], line)?;
                if i == 0 {
                    return Err(syntax(line, "logical indices start at 1"));
                }
                let bits = toks[3..].iter().filter(|&&t| t != "^").map(|t| parse_bit(t, line)).collect::<Result<_, _>>()?;
                if logicals.insert(i - 1, bits).is_some() {
                    return Err(syntax(line, format!("logical {i} defined twice")));
                }
            }
            _ => {
                let mut gate = parse_gate_line(body, line)?;
                if gate.kind != GateKind::Barrier {
                    gate.component = current.ok_or_else(|| syntax(line, "gate appears before any `component` line"))?;
                }
                circuit.gates.push(gate);
            }
        }
    }
    for (pos, (&i, _)) in logicals.iter().enumerate() {
        if i != pos {
            return Err(syntax(0, format!("logical {} missing", pos + 1)));
        }
    }
    circuit.logicals = logicals.into_values().collect();
    let (nq, nc) = header.unwrap_or_else(|| {
        let nq = circuit.gates.iter().flat_map(|g| g.qubits.iter()).max().map_or(0, |q| q + 1);
        let nc = circuit
            .gates
            .iter()
            .filter_map(|g| g.clbit)
            .chain(circuit.checks.iter().flat_map(|c| c.bits.iter().copied()))
            .chain(circuit.logicals.iter().flatten().copied())
            .max()
            .map_or(0, |c| c + 1);
        (nq, nc)
    });
    circuit.num_qubits = nq;
    circuit.num_clbits = nc;
    circuit.validate()?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(role: Role, gates: Vec<Gate>, nq: usize) -> PhysicalCircuit {
        let mut c = PhysicalCircuit::new(nq, 0);
        c.declare(0, role);
        c.gates = gates;
        c
    }

    #[test]
    fn single_rzz_has_depth_one() {
        let c = single(Role::PhaseLayer, vec![Gate::rzz(0, 1, 0.3)], 2);
        assert_eq!(two_qubit_depth(&c).unwrap(), 1);
    }

    #[test]
    fn disjoint_gates_share_a_layer() {
        let c = single(Role::PhaseLayer, vec![Gate::rzz(0, 1, 0.3), Gate::rzz(2, 3, 0.3)], 4);
        assert_eq!(two_qubit_depth(&c).unwrap(), 1);
    }

    #[test]
    fn shared_qubit_serializes() {
        let c = single(Role::PhaseLayer, vec![Gate::rzz(0, 1, 0.3), Gate::rzz(1, 2, 0.3)], 3);
        assert_eq!(two_qubit_depth(&c).unwrap(), 2);
        assert_eq!(two_qubit_depth(&PhysicalCircuit::default()).unwrap(), 0);
    }

    #[test]
    fn single_qubit_gates_occupy_layers_but_not_2q_depth() {
        let c = single(Role::Init, vec![Gate::h(0), Gate::cx(0, 1), Gate::h(1)], 2);
        let s = layered_schedule(&c).unwrap();
        assert_eq!(s.depth_all, 3);
        assert_eq!(s.depth_2q, 1);
    }

    #[test]
    fn barriers_fence_listed_or_all_qubits() {
        let gates = vec![Gate::rzz(0, 1, 0.1), Gate::barrier(vec![]), Gate::rzz(2, 3, 0.1)];
        assert_eq!(two_qubit_depth(&single(Role::PhaseLayer, gates, 4)).unwrap(), 2);
        let gates = vec![Gate::rzz(0, 1, 0.1), Gate::barrier(vec![1, 2]), Gate::rzz(2, 3, 0.1)];
        assert_eq!(two_qubit_depth(&single(Role::PhaseLayer, gates, 4)).unwrap(), 2);
        let gates = vec![Gate::rzz(0, 1, 0.1), Gate::barrier(vec![0, 1]), Gate::rzz(2, 3, 0.1)];
        assert_eq!(two_qubit_depth(&single(Role::PhaseLayer, gates, 4)).unwrap(), 1);
    }

    #[test]
    fn component_order_is_enforced_per_qubit() {
        let mut c = PhysicalCircuit::new(3, 0);
        c.declare(0, Role::PhaseLayer);
        c.declare(1, Role::MixerLayer);
        c.gates = vec![Gate::rxx(0, 1, 0.2).in_component(1), Gate::rzz(1, 2, 0.1).in_component(0)];
        assert!(matches!(layered_schedule(&c), Err(CircuitError::ComponentOrder { .. })));
        c.gates = vec![Gate::rxx(0, 1, 0.2).in_component(1), Gate::rzz(2, 1, 0.1).in_component(1)];
        assert!(layered_schedule(&c).is_ok());
        c.gates = vec![Gate::rzz(0, 2, 0.1).in_component(0), Gate::rxx(1, 0, 0.2).in_component(1)];
        assert_eq!(two_qubit_depth(&c).unwrap(), 2);
    }

    #[test]
    fn single_qubit_gates_can_split_2q_layers() {
        let mut a = PhysicalCircuit::new(4, 0);
        a.declare(0, Role::Init);
        a.gates = vec![Gate::h(0)];
        let mut b = a.clone();
        b.gates = vec![Gate::cx(0, 1), Gate::cx(2, 3)];
        let mut joined = a.clone();
        joined.gates.extend(b.gates.iter().cloned());
        assert_eq!(two_qubit_depth(&a).unwrap() + two_qubit_depth(&b).unwrap(), 1);
        assert_eq!(two_qubit_depth(&joined).unwrap(), 2);
    }

    #[test]
    fn area_scales_depth_by_data_width() {
        let c = single(Role::PhaseLayer, vec![Gate::rzz(0, 1, 0.3), Gate::rzz(1, 2, 0.3)], 3);
        assert_eq!(space_time_area(&c, 22).unwrap(), 48);
        assert_eq!(space_time_area(&PhysicalCircuit::default(), 22).unwrap(), 0);
    }

    #[test]
    fn parses_gate_lines() {
        assert_eq!(parse_gate_line("rzz 0 1 0.5", 1).unwrap(), Gate::rzz(0, 1, 0.5));
        assert_eq!(parse_gate_line("cx 3 0", 1).unwrap(), Gate::cx(3, 0));
        assert_eq!(parse_gate_line("mx 4 7", 1).unwrap(), Gate::mx(4, 7));
        assert_eq!(parse_gate_line("barrier", 1).unwrap(), Gate::barrier(vec![]));
        assert!(parse_gate_line("rzz 0 0 0.5", 3).is_err());
        assert!(parse_gate_line("foo 1", 3).is_err());
        assert!(parse_gate_line("cx 1", 3).is_err());
        assert!(parse_gate_line("rzz 0 1 nan", 3).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = read_circuit("qubits 2 clbits 0\ncomponent 0 INIT\n\nh 0\nrzz 0 0 1.0\n").unwrap_err();
        assert_eq!(err, ParseError::Syntax { line: 5, msg: "qubit 0 repeated".into() });
        assert!(read_circuit("h 0\n").is_err());
        assert!(matches!(read_circuit("qubits 1 clbits 0\ncomponent 0 INIT\nh 3\n"), Err(ParseError::Invalid(_))));
    }

    #[test]
    fn reads_checks_logicals_and_comments() {
        let text = "# demo\ncomponent 0 FINAL_MEAS\nmz 0 0 # data\nmz 1 1\nmz 2 2\ncheck c0 c1 c2 = 0\nlogical 1 = c0 ^ c2\n";
        let c = read_circuit(text).unwrap();
        assert_eq!((c.num_qubits, c.num_clbits), (3, 3));
        assert_eq!(c.checks, vec![ParityCheck::zero(vec![0, 1, 2])]);
        assert_eq!(c.logicals, vec![vec![0, 2]]);
        assert!(c.checks[0].holds(0b011));
        assert!(!c.checks[0].holds(0b001));
    }

    fn arb_gate(nq: usize, nc: usize, ncomp: usize) -> impl Strategy<Value = Gate> {
        let pair = (0..nq, 1..nq).prop_map(move |(a, d)| (a, (a + d) % nq));
        let angle = -10.0f64..10.0;
        prop_oneof![
            (pair.clone(), angle.clone()).prop_map(|((a, b), t)| Gate::rzz(a, b, t)),
            (pair.clone(), angle.clone()).prop_map(|((a, b), t)| Gate::rxx(a, b, t)),
            (0..nq, angle).prop_map(|(q, t)| Gate::rx(q, t)),
            pair.prop_map(|(a, b)| Gate::cx(a, b)),
            (0..nq).prop_map(Gate::h),
            (0..nq).prop_map(Gate::x),
            (0..nq).prop_map(Gate::z),
            (0..nq, 0..nc).prop_map(|(q, c)| Gate::mz(q, c)),
            (0..nq, 0..nc).prop_map(|(q, c)| Gate::mx(q, c)),
            (0..nq).prop_map(Gate::reset),
            (0..nq).prop_map(Gate::reset_x),
        ]
        .prop_flat_map(move |g| (Just(g), 0..ncomp))
        .prop_map(|(g, c)| g.in_component(c))
    }

    fn arb_circuit() -> impl Strategy<Value = PhysicalCircuit> {
        (2usize..7, 1usize..5, 1usize..4)
            .prop_flat_map(|(nq, nc, ncomp)| {
                (
                    Just((nq, nc, ncomp)),
                    proptest::collection::vec(arb_gate(nq, nc, ncomp), 0..40),
                    proptest::collection::vec(proptest::collection::vec(0..nc, 1..4), 0..3),
                    proptest::collection::vec(proptest::collection::vec(0..nc, 1..3), 0..3),
                )
            })
            .prop_map(|((nq, nc, ncomp), mut gates, checks, logicals)| {
                // Sorting by component keeps cross-component order valid.
                gates.sort_by_key(|g| g.component);
                let mut c = PhysicalCircuit::new(nq, nc);
                let roles = [Role::Init, Role::PhaseLayer, Role::MixerLayer, Role::Syndrome, Role::FinalMeas];
                for id in 0..ncomp {
                    c.declare(id, roles[id % roles.len()]);
                }
                c.gates = gates;
                c.checks = checks.into_iter().enumerate().map(|(i, b)| ParityCheck { bits: b, expected: i % 2 == 1 }).collect();
                c.logicals = logicals;
                c
            })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_identity(c in arb_circuit()) {
            let text = write_circuit(&c);
            prop_assert_eq!(read_circuit(&text).unwrap(), c);
        }

        #[test]
        fn layers_never_share_qubits(c in arb_circuit()) {
            let s = layered_schedule(&c).unwrap();
            for layer in &s.layers {
                let mut seen = vec![false; c.num_qubits];
                for &g in layer {
                    for &q in &c.gates[g].qubits {
                        prop_assert!(!seen[q]);
                        seen[q] = true;
                    }
                }
            }
            let placed: usize = s.layers.iter().map(Vec::len).sum();
            prop_assert_eq!(placed, c.gates.len());
        }

        #[test]
        fn depth_is_subadditive_under_concatenation(a in arb_circuit(), b in arb_circuit()) {
            let mut joined = a.clone();
            joined.num_qubits = a.num_qubits.max(b.num_qubits);
            joined.num_clbits = a.num_clbits.max(b.num_clbits);
            let offset = a.components.keys().next_back().map_or(0, |k| k + 1);
            for (id, role) in &b.components {
                joined.declare(id + offset, *role);
            }
            joined.gates.extend(b.gates.iter().cloned().map(|g| { let c = g.component + offset; g.in_component(c) }));
            let depth_all = |c: &PhysicalCircuit| layered_schedule(c).unwrap().depth_all;
            prop_assert!(depth_all(&joined) <= depth_all(&a) + depth_all(&b));
            // With single-qubit gates present, 2Q layers can split apart after
            // concatenation (see `single_qubit_gates_can_split_2q_layers`).
            let strip = |c: &PhysicalCircuit| {
                let mut c = c.clone();
                c.gates.retain(|g| g.is_two_qubit());
                c
            };
            let (a2, b2, j2) = (strip(&a), strip(&b), strip(&joined));
            prop_assert!(two_qubit_depth(&j2).unwrap() <= two_qubit_depth(&a2).unwrap() + two_qubit_depth(&b2).unwrap());
        }
    }
}
