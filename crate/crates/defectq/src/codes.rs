//! Small codes for encoded Bell pairs, the deformation-code reference patch, tableau traces of
//! the deformation-code protocols, and closed-form resource counts.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::circuit::GateEvent;
use crate::error::{Error, Result};
use crate::pauli::{CliffordGate, Pauli, PauliString};
use crate::tableau::{symplectic_rank, Sign, StabilizerTableau};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeDef {
    pub name: String,
    /// Data qubits of one block.
    pub n: usize,
    /// Qubits charged to the block in KQ, including check ancillas that the encoder leaves idle.
    pub layout_qubits: usize,
    /// Wire that carries the state to encode; every other wire starts in |0⟩.
    pub input_wire: usize,
    pub generators: Vec<PauliString>,
    pub logical_x: PauliString,
    pub logical_z: PauliString,
    /// Gates by column; `slot` is the column index.
    pub encoding_circuit: Vec<GateEvent>,
}

fn ps(s: &str) -> PauliString {
    PauliString::parse(s).expect("literal Pauli string")
}

fn events(columns: &[&[CliffordGate]]) -> Vec<GateEvent> {
    columns
        .iter()
        .enumerate()
        .flat_map(|(slot, gates)| gates.iter().map(move |&gate| GateEvent { gate, slot }))
        .collect()
}

use CliffordGate::{Cnot, H};

/// Steane [[7,1,3]] code; the input sits on wire 3.
pub fn steane_code() -> CodeDef {
    let circuit = events(&[
        &[H(4), H(5), H(6), Cnot(3, 1)],
        &[Cnot(3, 2), Cnot(4, 0)],
        &[Cnot(4, 2), Cnot(5, 0)],
        &[Cnot(4, 3), Cnot(5, 1), Cnot(6, 0)],
        &[Cnot(5, 3), Cnot(6, 1)],
        &[Cnot(6, 2)],
    ]);
    CodeDef {
        name: "steane".into(),
        n: 7,
        layout_qubits: 7,
        input_wire: 3,
        generators: [
            "ZIIIZZZ", "IZIZZIZ", "IIZZIZZ", "XIXXXII", "XXIXIXI", "XXXIIIX",
        ]
        .map(ps)
        .to_vec(),
        logical_x: ps("IXXXIII"),
        logical_z: ps("IIIZZZI"),
        encoding_circuit: circuit,
    }
}

/// Distance-3 planar code on 13 data qubits, numbered row-major over the data sites of a
/// 5×5 grid (rows of 3, 2, 3, 2, 3). Logical X runs down the left column and logical Z
/// along the top row. The 12 check ancillas of the 25-qubit layout are charged in KQ.
pub fn surface_d3_code() -> CodeDef {
    let circuit = events(&[
        &[H(0), H(2), H(5), H(7), H(10), H(12), Cnot(11, 1)],
        &[Cnot(11, 6), Cnot(2, 4), Cnot(10, 8), Cnot(5, 3), Cnot(7, 9)],
        &[
            Cnot(10, 11),
            Cnot(0, 1),
            Cnot(5, 8),
            Cnot(7, 6),
            Cnot(12, 9),
        ],
        &[Cnot(12, 11), Cnot(2, 1), Cnot(5, 6), Cnot(0, 3), Cnot(7, 4)],
    ]);
    let plaquette = |letter: char, qs: &[usize]| {
        let s: String = (0..13)
            .map(|q| if qs.contains(&q) { letter } else { 'I' })
            .collect();
        ps(&s)
    };
    let mut generators = Vec::new();
    for qs in [
        &[0, 3, 5][..],
        &[1, 3, 4, 6],
        &[2, 4, 7],
        &[5, 8, 10],
        &[6, 8, 9, 11],
        &[7, 9, 12],
    ] {
        generators.push(plaquette('Z', qs));
    }
    for qs in [
        &[0, 1, 3][..],
        &[1, 2, 4],
        &[3, 5, 6, 8],
        &[4, 6, 7, 9],
        &[8, 10, 11],
        &[9, 11, 12],
    ] {
        generators.push(plaquette('X', qs));
    }
    CodeDef {
        name: "surface3".into(),
        n: 13,
        layout_qubits: 25,
        input_wire: 11,
        generators,
        logical_x: plaquette('X', &[0, 5, 10]),
        logical_z: plaquette('Z', &[0, 1, 2]),
        encoding_circuit: circuit,
    }
}

/// One bare qubit: no checks, no encoder.
pub fn physical_code() -> CodeDef {
    CodeDef {
        name: "physical".into(),
        n: 1,
        layout_qubits: 1,
        input_wire: 0,
        generators: Vec::new(),
        logical_x: ps("X"),
        logical_z: ps("Z"),
        encoding_circuit: Vec::new(),
    }
}

impl CodeDef {
    pub fn by_name(name: &str) -> Result<CodeDef> {
        match name {
            "steane" => Ok(steane_code()),
            "surface3" => Ok(surface_d3_code()),
            "physical" => Ok(physical_code()),
            other => Err(Error::InvalidParameter(format!("unknown code {other:?}"))),
        }
    }

    pub fn is_physical(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.encoding_circuit
            .iter()
            .map(|e| e.slot + 1)
            .max()
            .unwrap_or(0)
    }

    /// Qubits × steps of the encoder.
    pub fn encoding_kq(&self) -> usize {
        self.layout_qubits * self.depth()
    }

    /// Abelian, independent generators; logicals commute with them and anticommute with each other.
    pub fn check(&self) -> Result<()> {
        let mut t = StabilizerTableau::from_generators(self.n, self.generators.clone())?;
        t.add_logical("X", self.logical_x.clone())?;
        t.add_logical("Z", self.logical_z.clone())?;
        if self.logical_x.commutes(&self.logical_z)? {
            return Err(Error::InvalidParameter(format!(
                "{}: logical X and Z commute",
                self.name
            )));
        }
        if self.generators.len() + 1 != self.n {
            return Err(Error::InvalidParameter(format!(
                "{}: expected one logical qubit",
                self.name
            )));
        }
        Ok(())
    }

    /// Runs the encoder on a tableau with a free input wire. The encoded stabilizer group must
    /// equal the declared one, and the input's X and Z must land on the declared logicals.
    pub fn verify_encoder(&self) -> Result<bool> {
        let gens: Vec<PauliString> = (0..self.n)
            .filter(|&q| q != self.input_wire)
            .map(|q| PauliString::single(self.n, q, Pauli::Z))
            .collect();
        let mut t = StabilizerTableau::from_generators(self.n, gens)?;
        t.add_logical("X", PauliString::single(self.n, self.input_wire, Pauli::X))?;
        t.add_logical("Z", PauliString::single(self.n, self.input_wire, Pauli::Z))?;
        for e in &self.encoding_circuit {
            t.apply_gate(&e.gate)?;
        }
        if !self.generators.iter().all(|g| t.contains(g)) {
            return Ok(false);
        }
        for (label, declared) in [("X", &self.logical_x), ("Z", &self.logical_z)] {
            let image = t.logical(label).expect("logical kept");
            if !t.contains(&image.multiply(declared)?) && !self.generators.is_empty() {
                return Ok(false);
            }
            if self.generators.is_empty() && image != declared {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Bitmask of a Pauli's X part (bit q set when qubit q carries X or Y).
    pub fn x_mask(p: &PauliString) -> u64 {
        p.x_bits().ones().fold(0, |m, q| m | 1 << q)
    }

    pub fn z_mask(p: &PauliString) -> u64 {
        p.z_bits().ones().fold(0, |m, q| m | 1 << q)
    }

    /// Supports of the Z-type generators, which detect X errors.
    pub fn z_checks(&self) -> Vec<u64> {
        self.generators
            .iter()
            .filter(|g| g.x_bits().is_zero())
            .map(Self::z_mask)
            .collect()
    }

    /// Supports of the X-type generators, which detect Z errors.
    pub fn x_checks(&self) -> Vec<u64> {
        self.generators
            .iter()
            .filter(|g| g.z_bits().is_zero())
            .map(Self::x_mask)
            .collect()
    }
}

/// Counts for the distance-3 deformation-code reference patch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCounts {
    pub data_qubits: usize,
    pub z_stabilizers: usize,
    pub x_stabilizers: usize,
    pub x_independent: usize,
    pub degrees_of_freedom: usize,
    /// 2^(degrees of freedom).
    pub code_space_dimension: u64,
    /// Dropping any one X generator leaves an independent set.
    pub any_x_redundant: bool,
    pub z_superstabilizer_weight: usize,
    pub x_superstabilizer_weight: usize,
}

/// Builds the patch as a 5×6 vertex grid with qubits on edges, Z checks on faces and X checks
/// on vertices, then removes the central edge: its two faces merge into a Z superstabilizer
/// and its two end vertices into an X superstabilizer.
pub fn deformation_patch(d: usize) -> Result<(Vec<PauliString>, Vec<PauliString>, usize)> {
    if d != 3 {
        return Err(Error::InvalidParameter(format!(
            "reference patch exists for d = 3 only, got {d}"
        )));
    }
    let (rows, cols) = (5usize, 6usize);
    let mut edges: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(((r, c), (r, c + 1)));
            }
            if r + 1 < rows {
                edges.push(((r, c), (r + 1, c)));
            }
        }
    }
    let removed = ((rows / 2, cols / 2 - 1), (rows / 2, cols / 2));
    edges.retain(|&e| e != removed);
    let n = edges.len();
    let edge_index = |a: (usize, usize), b: (usize, usize)| {
        edges.iter().position(|&e| e == (a, b) || e == (b, a))
    };

    let mut x_sets: Vec<Vec<usize>> = Vec::new();
    let mut merged_vertex = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = (r, c);
            let set: Vec<usize> = (0..n)
                .filter(|&i| edges[i].0 == v || edges[i].1 == v)
                .collect();
            if v == removed.0 || v == removed.1 {
                merged_vertex.extend(set);
            } else {
                x_sets.push(set);
            }
        }
    }
    x_sets.push(merged_vertex);

    let mut z_sets: Vec<Vec<usize>> = Vec::new();
    let mut merged_face = Vec::new();
    let (rr, rc) = removed.0;
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let sides = [
                ((r, c), (r, c + 1)),
                ((r + 1, c), (r + 1, c + 1)),
                ((r, c), (r + 1, c)),
                ((r, c + 1), (r + 1, c + 1)),
            ];
            let set: Vec<usize> = sides
                .iter()
                .filter_map(|&(a, b)| edge_index(a, b))
                .collect();
            let touches_removed = c == rc && (r == rr || r + 1 == rr);
            if touches_removed {
                merged_face.extend(set);
            } else {
                z_sets.push(set);
            }
        }
    }
    z_sets.push(merged_face);

    let to_pauli = |p: Pauli, set: &[usize]| PauliString::uniform(n, set, p);
    let z: Vec<PauliString> = z_sets.iter().map(|s| to_pauli(Pauli::Z, s)).collect();
    let x: Vec<PauliString> = x_sets.iter().map(|s| to_pauli(Pauli::X, s)).collect();
    Ok((z, x, n))
}

pub fn deformation_patch_counts(d: usize) -> Result<PatchCounts> {
    let (z, x, n) = deformation_patch(d)?;
    let z_rank = symplectic_rank(&z);
    let x_rank = symplectic_rank(&x);
    let all: Vec<PauliString> = z.iter().chain(&x).cloned().collect();
    let s = symplectic_rank(&all);
    if z_rank != z.len() || s != z_rank + x_rank {
        return Err(Error::InvalidParameter(
            "patch checks are inconsistent".into(),
        ));
    }
    let any_x_redundant = (0..x.len()).all(|i| {
        let rest: Vec<PauliString> = x
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, p)| p.clone())
            .collect();
        symplectic_rank(&rest) == rest.len()
    });
    let dof = n - s;
    Ok(PatchCounts {
        data_qubits: n,
        z_stabilizers: z.len(),
        x_stabilizers: x.len(),
        x_independent: x_rank,
        degrees_of_freedom: dof,
        code_space_dimension: 1u64 << dof,
        any_x_redundant,
        z_superstabilizer_weight: z.last().map_or(0, |p| p.weight()),
        x_superstabilizer_weight: x.last().map_or(0, |p| p.weight()),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub label: String,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub name: String,
    pub steps: Vec<TraceStep>,
}

impl TraceReport {
    fn new(name: &str) -> Self {
        TraceReport {
            name: name.into(),
            steps: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.steps.push(TraceStep {
            label: label.into(),
            ok,
        });
    }

    pub fn passed(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.ok)
    }
}

/// Named qubits for hand-written traces.
struct Register {
    names: Vec<&'static str>,
}

impl Register {
    fn new(names: &[&'static str]) -> Self {
        Register {
            names: names.to_vec(),
        }
    }

    fn n(&self) -> usize {
        self.names.len()
    }

    fn idx(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|&n| n == name)
            .unwrap_or_else(|| panic!("unknown qubit {name}"))
    }

    /// `op("Z", "2 4 5 7")`, optionally prefixed with `-`.
    fn op(&self, letter: &str, qubits: &str) -> PauliString {
        let (minus, letter) = match letter.strip_prefix('-') {
            Some(l) => (true, l),
            None => (false, letter),
        };
        let p = match letter {
            "X" => Pauli::X,
            "Z" => Pauli::Z,
            "Y" => Pauli::Y,
            other => panic!("bad letter {other}"),
        };
        let qs: Vec<usize> = qubits.split_whitespace().map(|q| self.idx(q)).collect();
        let s = PauliString::uniform(self.n(), &qs, p);
        if minus {
            s.negated()
        } else {
            s
        }
    }
}

fn contains_all(t: &StabilizerTableau, ops: &[PauliString]) -> bool {
    ops.iter().all(|p| t.contains(p))
}

fn same_group(a: &StabilizerTableau, b: &StabilizerTableau) -> bool {
    a.generators().len() == b.generators().len() && contains_all(a, b.generators())
}

/// Conversion of a two-defect qubit into a deformation-based qubit on the nine-qubit fragment.
/// Runs the `+1` branch for every random outcome and checks the stabilizer tables after each
/// step; the `−1` corrections for the first X measurement are checked separately.
pub fn verify_state_injection_trace() -> Result<TraceReport> {
    let reg = Register::new(&["1", "2", "3", "4", "5", "6", "7", "8", "9"]);
    let mut rep = TraceReport::new("state injection");
    let start = vec![
        reg.op("X", "1 2 3 5"),
        reg.op("X", "5 7 8 9"),
        reg.op("Z", "2 4 5 7"),
        reg.op("Z", "3 5 6 8"),
    ];

    let mut t = StabilizerTableau::from_generators(reg.n(), start.clone())?;
    t.measure(&reg.op("X", "5"), Some(Sign::Plus))?;
    rep.check(
        "X5 measured: X1X2X3, X7X8X9, X5 and Z2Z3Z4Z6Z7Z8",
        contains_all(
            &t,
            &[
                reg.op("X", "1 2 3"),
                reg.op("X", "7 8 9"),
                reg.op("X", "5"),
                reg.op("Z", "2 3 4 6 7 8"),
            ],
        ),
    );

    let mut minus = StabilizerTableau::from_generators(reg.n(), start)?;
    minus.measure(&reg.op("X", "5"), Some(Sign::Minus))?;
    rep.check(
        "X5 = -1 leaves -X1X2X3",
        minus.contains(&reg.op("-X", "1 2 3")),
    );
    let mut alt = minus.clone();
    minus.apply_pauli(&reg.op("Z", "2 4 5 7"))?;
    alt.apply_pauli(&reg.op("Z", "3 5 6 8"))?;
    rep.check(
        "either correction restores +X1X2X3 and +X7X8X9",
        contains_all(&minus, &[reg.op("X", "1 2 3"), reg.op("X", "7 8 9")])
            && contains_all(&alt, &[reg.op("X", "1 2 3"), reg.op("X", "7 8 9")])
            && same_group(&minus, &alt),
    );

    // Rotating qubit 5 to an arbitrary state: keep X1X2X3, X7X8X9 and the product Z check,
    // and carry qubit 5 as a logical degree of freedom.
    let mut t = StabilizerTableau::from_generators(
        reg.n(),
        vec![
            reg.op("X", "1 2 3"),
            reg.op("X", "7 8 9"),
            reg.op("Z", "2 3 4 6 7 8"),
        ],
    )?;
    t.add_logical("Z", reg.op("Z", "5"))?;
    t.add_logical("X", reg.op("X", "5"))?;
    t.measure(&reg.op("Z", "2 4 5 7"), Some(Sign::Plus))?;
    t.measure(&reg.op("Z", "3 5 6 8"), Some(Sign::Plus))?;
    rep.check(
        "two-defect qubit: X1X2X3X7X8X9, Z2Z4Z5Z7, Z3Z5Z6Z8",
        contains_all(
            &t,
            &[
                reg.op("X", "1 2 3 7 8 9"),
                reg.op("Z", "2 4 5 7"),
                reg.op("Z", "3 5 6 8"),
            ],
        ),
    );
    rep.check(
        "logical Z still Z5",
        t.logical("Z") == Some(&reg.op("Z", "5")),
    );

    t.measure(&reg.op("X", "5"), Some(Sign::Plus))?;
    rep.check(
        "X5 again: superstabilizer Z2Z3Z4Z6Z7Z8 with X5",
        contains_all(
            &t,
            &[
                reg.op("X", "5"),
                reg.op("Z", "2 3 4 6 7 8"),
                reg.op("X", "1 2 3 7 8 9"),
            ],
        ),
    );
    let lz = t.logical("Z").cloned().expect("logical Z kept");
    let z247 = reg.op("Z", "2 4 7");
    let z368 = reg.op("Z", "3 6 8");
    rep.check(
        "logical Z is Z2Z4Z7, equivalently Z3Z6Z8",
        t.contains(&lz.multiply(&z247)?) && t.contains(&lz.multiply(&z368)?),
    );
    let lx = t.logical("X").cloned().expect("logical X kept");
    rep.check(
        "logical X equivalent to X1X2X3",
        t.contains(&lx.multiply(&reg.op("X", "1 2 3"))?),
    );
    Ok(rep)
}

/// Merge of an intermediate and a target deformation qubit on the 17-qubit fragment, for all
/// four logical basis combinations, plus the abstract three-qubit protocol.
pub fn verify_lattice_surgery_cnot_trace() -> Result<TraceReport> {
    let reg = Register::new(&[
        "1", "2", "3", "4", "5", "6", "7", "8", "9", "S", "a", "b", "c", "d", "e", "f", "g",
    ]);
    let mut rep = TraceReport::new("lattice-surgery CNOT");

    for (si, st) in [(false, false), (false, true), (true, false), (true, true)] {
        let sign = |minus: bool, p: PauliString| if minus { p.negated() } else { p };
        let gens = vec![
            reg.op("Z", "1 2 3 5 6 7"),
            reg.op("X", "2 3 4 5 6 S"),
            reg.op("Z", "a b c e f g"),
            reg.op("X", "S b c d e f"),
            reg.op("Z", "3 8 S b"),
            reg.op("Z", "6 9 S e"),
            sign(si, reg.op("Z", "5 6 7")),
            sign(st, reg.op("Z", "e f g")),
        ];
        let tag = format!(
            "[{}{}]",
            if si { '1' } else { '0' },
            if st { '1' } else { '0' }
        );
        let mut t = StabilizerTableau::from_generators(reg.n(), gens)?;

        let mut minus = t.clone();
        t.measure(&reg.op("Z", "S"), Some(Sign::Plus))?;
        if !si && !st {
            rep.check(
                "ZS measured: X2..X6XbXcXdXeXf, Z3Z8Zb, Z6Z9Ze",
                contains_all(
                    &t,
                    &[
                        reg.op("X", "2 3 4 5 6 b c d e f"),
                        reg.op("Z", "3 8 b"),
                        reg.op("Z", "6 9 e"),
                        reg.op("Z", "S"),
                    ],
                ),
            );
            minus.measure(&reg.op("Z", "S"), Some(Sign::Minus))?;
            let mut alt = minus.clone();
            minus.apply_pauli(&reg.op("X", "2 3 4 5 6 S"))?;
            alt.apply_pauli(&reg.op("X", "b c d e f S"))?;
            rep.check(
                "ZS = -1 corrected by either X chain through S",
                contains_all(
                    &minus,
                    &[
                        reg.op("Z", "3 8 b"),
                        reg.op("Z", "S"),
                        reg.op("X", "2 3 4 5 6 b c d e f"),
                    ],
                ) && same_group(&minus, &alt),
            );
        }

        t.measure(&reg.op("X", "3"), Some(Sign::Plus))?;
        t.measure(&reg.op("X", "b"), Some(Sign::Plus))?;
        if !si && !st {
            rep.check(
                "X3, Xb measured: Z1Z2Z5Z6Z7Z8ZaZcZeZfZg and X2X4X5X6XcXdXeXf",
                contains_all(
                    &t,
                    &[
                        reg.op("Z", "1 2 5 6 7 8 a c e f g"),
                        reg.op("X", "2 4 5 6 c d e f"),
                    ],
                ),
            );
        }
        t.measure(&reg.op("X", "6"), Some(Sign::Plus))?;
        t.measure(&reg.op("X", "e"), Some(Sign::Plus))?;
        let merged = reg.op("Z", "5 7 9 f g");
        let expected = if si != st { merged.negated() } else { merged };
        rep.check(
            format!("{tag} merged stabilizers and logical Z5Z7Z9ZfZg sign"),
            contains_all(
                &t,
                &[
                    reg.op("Z", "1 2 5 7 8 9 a c f g"),
                    reg.op("X", "2 4 5 c d f"),
                    expected,
                ],
            ),
        );
    }

    // The protocol on three bare qubits (control, intermediate, target). After ZZ and XX
    // measurements with corrections, the pair (I, T) holds one qubit with Z_m = Z_I Z_T and
    // X_m = X_T, and the (C, m) state must equal CNOT applied to the input.
    let inputs: [(&str, PauliString); 4] = [
        ("+Z", ps("Z")),
        ("-Z", ps("-Z")),
        ("+X", ps("X")),
        ("-X", ps("-X")),
    ];
    let mut all_ok = true;
    let mut plus_plus_ok = false;
    for (_, c_in) in &inputs {
        for (_, t_in) in &inputs {
            for m1 in [Sign::Plus, Sign::Minus] {
                for m2 in [Sign::Plus, Sign::Minus] {
                    let embed = |p: &PauliString, q: usize| {
                        let mut s = PauliString::single(3, q, p.get(0));
                        if p.phase() == 2 {
                            s = s.negated();
                        }
                        s
                    };
                    let mut t = StabilizerTableau::from_generators(
                        3,
                        vec![embed(c_in, 0), ps("IXI"), embed(t_in, 2)],
                    )?;
                    if t.measure(&ps("ZZI"), Some(m1))?.is_minus() {
                        t.apply_pauli(&ps("IXI"))?;
                    }
                    if t.measure(&ps("IXX"), Some(m2))?.is_minus() {
                        t.apply_pauli(&ps("ZZI"))?;
                    }
                    // Expected: CNOT on (C, m), written back on three qubits.
                    let mut direct = StabilizerTableau::from_generators(
                        2,
                        vec![
                            {
                                let mut s = PauliString::single(2, 0, c_in.get(0));
                                if c_in.phase() == 2 {
                                    s = s.negated();
                                }
                                s
                            },
                            {
                                let mut s = PauliString::single(2, 1, t_in.get(0));
                                if t_in.phase() == 2 {
                                    s = s.negated();
                                }
                                s
                            },
                        ],
                    )?;
                    direct.apply_gate(&CliffordGate::Cnot(0, 1))?;
                    let lift = |p: &PauliString| -> Result<PauliString> {
                        let mut out = if p.phase() == 2 {
                            ps("-III")
                        } else {
                            ps("III")
                        };
                        match p.get(0) {
                            Pauli::X => out = out.multiply(&ps("XII"))?,
                            Pauli::Z => out = out.multiply(&ps("ZII"))?,
                            Pauli::Y => out = out.multiply(&ps("YII"))?,
                            Pauli::I => {}
                        }
                        let (x, z) = p.get(1).bits();
                        if x {
                            out = out.multiply(&ps("IIX"))?;
                        }
                        if z {
                            out = out.multiply(&ps("IZZ"))?;
                        }
                        Ok(out)
                    };
                    let mut ok = t.contains(&ps("IXX"));
                    for g in direct.generators() {
                        ok &= t.contains(&lift(g)?);
                    }
                    all_ok &= ok;
                    if c_in == &ps("X") && t_in == &ps("X") && m1 == Sign::Plus && m2 == Sign::Plus
                    {
                        plus_plus_ok = ok && t.contains(&ps("XII")) && t.contains(&ps("IIX"));
                    }
                }
            }
        }
    }
    rep.check(
        "abstract protocol matches CNOT on all basis inputs and branches",
        all_ok,
    );
    rep.check("|+>|+> input ends stabilized by X_C and X_m", plus_plus_ok);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatReport {
    pub n: usize,
    pub branches_checked: usize,
    pub stabilizers_ok: bool,
    pub z_flips_parity: bool,
    pub preparation_depth: usize,
    pub check_cycle_depth: usize,
    pub linear_cycles: usize,
    pub circular_cycles: usize,
}

/// Cat qubits sit on even wires, the ZZ-check ancillas between them on odd wires.
pub fn cat_preparation_circuit(n: usize) -> Vec<GateEvent> {
    let wires = 2 * n - 1;
    let mut ev = Vec::new();
    for q in 0..wires {
        ev.push(GateEvent {
            gate: CliffordGate::InitZ(q),
            slot: 0,
        });
    }
    for k in 0..n {
        ev.push(GateEvent {
            gate: CliffordGate::H(2 * k),
            slot: 1,
        });
    }
    for k in 0..n - 1 {
        ev.push(GateEvent {
            gate: CliffordGate::Cnot(2 * k, 2 * k + 1),
            slot: 2,
        });
        ev.push(GateEvent {
            gate: CliffordGate::Cnot(2 * k + 2, 2 * k + 1),
            slot: 3,
        });
        ev.push(GateEvent {
            gate: CliffordGate::MeasureZ(2 * k + 1),
            slot: 4,
        });
    }
    ev
}

/// One repetition of the neighbouring ZZ checks on an existing cat state.
pub fn cat_check_cycle(n: usize) -> Vec<GateEvent> {
    let mut ev = Vec::new();
    for k in 0..n - 1 {
        let a = 2 * k + 1;
        ev.push(GateEvent {
            gate: CliffordGate::InitZ(a),
            slot: 0,
        });
        ev.push(GateEvent {
            gate: CliffordGate::Cnot(2 * k, a),
            slot: 1,
        });
        ev.push(GateEvent {
            gate: CliffordGate::Cnot(2 * k + 2, a),
            slot: 2,
        });
        ev.push(GateEvent {
            gate: CliffordGate::MeasureZ(a),
            slot: 3,
        });
    }
    ev
}

fn depth_of(ev: &[GateEvent]) -> usize {
    ev.iter().map(|e| e.slot + 1).max().unwrap_or(0)
}

pub fn cat_state_check(n: usize, cycles: usize) -> Result<CatReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "cat state needs n >= 2, got {n}"
        )));
    }
    let wires = 2 * n - 1;
    let prep = cat_preparation_circuit(n);
    let cat_op = |letter: Pauli, ks: &[usize]| {
        let qs: Vec<usize> = ks.iter().map(|k| 2 * k).collect();
        PauliString::uniform(wires, &qs, letter)
    };
    let all: Vec<usize> = (0..n).collect();
    let branches = 1usize << (n - 1).min(12);
    let mut ok = true;
    let mut z_flip = true;
    for b in 0..branches {
        let mut t = StabilizerTableau::zero_state(wires);
        for e in &prep {
            match e.gate {
                CliffordGate::InitZ(_) => {}
                CliffordGate::MeasureZ(a) => {
                    let k = a / 2;
                    let forced = Sign::from_bool_minus((b >> k) & 1 == 1);
                    let got = t.measure(&PauliString::single(wires, a, Pauli::Z), Some(forced))?;
                    if got.is_minus() {
                        let right: Vec<usize> = (k + 1..n).collect();
                        t.apply_pauli(&cat_op(Pauli::X, &right))?;
                        t.apply_pauli(&PauliString::single(wires, a, Pauli::X))?;
                    }
                }
                g => t.apply_gate(&g)?,
            }
        }
        for k in 0..n - 1 {
            ok &= t.contains(&cat_op(Pauli::Z, &[k, k + 1]));
        }
        ok &= t.contains(&cat_op(Pauli::X, &all));
        for k in 0..n {
            let mut flipped = t.clone();
            flipped.apply_pauli(&cat_op(Pauli::Z, &[k]))?;
            z_flip &= flipped.contains(&cat_op(Pauli::X, &all).negated());
        }
    }
    Ok(CatReport {
        n,
        branches_checked: branches,
        stabilizers_ok: ok,
        z_flips_parity: z_flip,
        preparation_depth: depth_of(&prep),
        check_cycle_depth: depth_of(&cat_check_cycle(n)),
        linear_cycles: cycles,
        circular_cycles: cycles.div_ceil(2),
    })
}

/// Teleportation out of a deformation-code memory through a ZZ check: input qubit q, Bell
/// pair (b0, b1), ancilla a. Every basis input, every outcome branch.
pub fn verify_zz_teleportation_trace() -> Result<TraceReport> {
    let reg = Register::new(&["q", "b0", "b1", "a"]);
    let mut rep = TraceReport::new("ZZ teleportation");
    for (label, input_letter) in [("|0>", "Z"), ("|1>", "-Z"), ("|+>", "X"), ("|->", "-X")] {
        let mut finals: Vec<StabilizerTableau> = Vec::new();
        for branch in 0..8u32 {
            let mut t = StabilizerTableau::from_generators(
                reg.n(),
                vec![
                    reg.op(input_letter, "q"),
                    reg.op("X", "b0 b1"),
                    reg.op("Z", "b0 b1"),
                    reg.op("Z", "a"),
                ],
            )?;
            t.apply_gate(&CliffordGate::Cnot(reg.idx("q"), reg.idx("a")))?;
            t.apply_gate(&CliffordGate::Cnot(reg.idx("b0"), reg.idx("a")))?;
            let forced = |bit: u32| Some(Sign::from_bool_minus((branch >> bit) & 1 == 1));
            if t.measure(&reg.op("Z", "a"), forced(0))?.is_minus() {
                t.apply_pauli(&reg.op("X", "b0 b1"))?;
            }
            if t.measure(&reg.op("X", "q"), forced(1))?.is_minus() {
                t.apply_pauli(&reg.op("Z", "b1"))?;
            }
            if t.measure(&reg.op("X", "b0"), forced(2))?.is_minus() {
                t.apply_pauli(&reg.op("Z", "b1"))?;
            }
            // Reset the spent qubits to +1 so that branches differ only in what b1 holds.
            for (bit, obs, flip) in [
                (0, ("Z", "a"), ("X", "a")),
                (1, ("X", "q"), ("Z", "q")),
                (2, ("X", "b0"), ("Z", "b0")),
            ] {
                if (branch >> bit) & 1 == 1 {
                    t.apply_pauli(&reg.op(flip.0, flip.1))?;
                }
                debug_assert!(t.contains(&reg.op(obs.0, obs.1)));
            }
            finals.push(t);
        }
        let target = reg.op(input_letter, "b1");
        rep.check(
            format!("{label} arrives on b1 in every branch"),
            finals.iter().all(|t| t.contains(&target)),
        );
        rep.check(
            format!("{label}: all 8 branches end in the same state"),
            finals.iter().all(|t| same_group(t, &finals[0])),
        );
    }
    Ok(rep)
}

/// Closed-form space and time costs at code distance `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub d: i64,
    pub effective_distance: i64,
    pub shortened_distance: i64,
    pub outer_distance: i64,
    pub planar_qubits_per_logical: Ratio<i64>,
    pub deformation_qubits_per_logical: Ratio<i64>,
    pub rotated_qubits_per_logical: Ratio<i64>,
    pub deformation_to_planar: Ratio<i64>,
    pub superstabilizer_steps: i64,
    /// Re-derived from the cat-state circuits in this module.
    pub superstabilizer_steps_from_circuit: i64,
    pub superstabilizer_steps_interior_cat: i64,
    pub braiding_cnot_steps: i64,
    pub deformation_surgery_cnot_steps: i64,
    pub planar_surgery_cnot_steps: i64,
    pub redundant_operators_deformation: Ratio<i64>,
    pub redundant_operators_planar: i64,
}

pub fn resource_formulas(d: i64) -> Result<ResourceReport> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "distance must be at least 3, got {d}"
        )));
    }
    let r = |n: i64, den: i64| Ratio::new(n, den);
    let planar = r((4 * d - 2).pow(2), 1);
    let deformation = r((5 * d + 17).pow(2), 4);
    let prep = depth_of(&cat_preparation_circuit(3)) as i64;
    let cycle = depth_of(&cat_check_cycle(3)) as i64;
    // cat preparation and d - 1 check cycles, one Hadamard, two propagation steps, one readout
    let derived = prep + cycle * (d - 1) + 1 + 2 + 1;
    Ok(ResourceReport {
        d,
        effective_distance: d,
        shortened_distance: d + 2,
        outer_distance: d + 3,
        planar_qubits_per_logical: planar,
        deformation_qubits_per_logical: deformation,
        rotated_qubits_per_logical: r(2 * d * d - 1, 1),
        deformation_to_planar: deformation / planar,
        superstabilizer_steps: 4 * d + 5,
        superstabilizer_steps_from_circuit: derived,
        superstabilizer_steps_interior_cat: 4 * d + 9,
        braiding_cnot_steps: 32 * d,
        deformation_surgery_cnot_steps: 4 * d * d + 9 * d,
        planar_surgery_cnot_steps: 24 * d,
        redundant_operators_deformation: r(d.pow(3) - 11 * d * d + 35 * d - 25, 8),
        redundant_operators_planar: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_pass_their_own_checks() {
        for c in [steane_code(), surface_d3_code(), physical_code()] {
            if !c.is_physical() {
                c.check().unwrap();
            }
            assert!(c.verify_encoder().unwrap(), "{}", c.name);
        }
    }

    #[test]
    fn encoder_kq() {
        assert_eq!(steane_code().encoding_kq(), 42);
        assert_eq!(steane_code().depth(), 6);
        assert_eq!(surface_d3_code().depth(), 4);
        assert_eq!(surface_d3_code().generators.len(), 12);
    }

    #[test]
    fn encoder_columns_are_disjoint() {
        for c in [steane_code(), surface_d3_code()] {
            for slot in 0..c.depth() {
                let mut used: Vec<usize> = c
                    .encoding_circuit
                    .iter()
                    .filter(|e| e.slot == slot)
                    .flat_map(|e| e.gate.qubits())
                    .collect();
                let len = used.len();
                used.sort_unstable();
                used.dedup();
                assert_eq!(used.len(), len, "{} column {slot}", c.name);
            }
        }
    }

    #[test]
    fn mangled_encoder_is_rejected() {
        let mut c = surface_d3_code();
        c.encoding_circuit
            .retain(|e| e.gate != CliffordGate::Cnot(7, 6));
        assert!(!c.verify_encoder().unwrap());
    }

    #[test]
    fn patch_counts() {
        let p = deformation_patch_counts(3).unwrap();
        assert_eq!(
            (p.data_qubits, p.z_stabilizers, p.x_independent),
            (48, 19, 28)
        );
        assert_eq!(p.x_stabilizers, 29);
        assert_eq!(p.degrees_of_freedom, 1);
        assert_eq!(p.code_space_dimension, 2);
        assert!(p.any_x_redundant);
        assert_eq!(
            (p.z_superstabilizer_weight, p.x_superstabilizer_weight),
            (6, 6)
        );
        assert!(deformation_patch_counts(5).is_err());
    }

    #[test]
    fn traces_pass() {
        for rep in [
            verify_state_injection_trace().unwrap(),
            verify_lattice_surgery_cnot_trace().unwrap(),
            verify_zz_teleportation_trace().unwrap(),
        ] {
            for s in &rep.steps {
                assert!(s.ok, "{}: {}", rep.name, s.label);
            }
        }
    }

    #[test]
    fn cat_states() {
        let r = cat_state_check(3, 5).unwrap();
        assert!(r.stabilizers_ok && r.z_flips_parity);
        assert_eq!(r.branches_checked, 4);
        assert_eq!(r.circular_cycles, 3);
        assert_eq!((r.preparation_depth, r.check_cycle_depth), (5, 4));
        for n in 2..7 {
            assert!(cat_state_check(n, 3).unwrap().stabilizers_ok);
        }
        assert!(cat_state_check(1, 3).is_err());
    }

    #[test]
    fn resource_values() {
        let r3 = resource_formulas(3).unwrap();
        assert_eq!(r3.planar_qubits_per_logical, Ratio::from_integer(100));
        assert_eq!(r3.deformation_qubits_per_logical, Ratio::from_integer(256));
        let r5 = resource_formulas(5).unwrap();
        assert_eq!(r5.braiding_cnot_steps, 160);
        assert_eq!(r5.deformation_surgery_cnot_steps, 145);
        assert_eq!(r5.outer_distance, 8);
        assert_eq!(
            r5.superstabilizer_steps,
            r5.superstabilizer_steps_from_circuit
        );
        let r25 = resource_formulas(25).unwrap();
        assert_eq!(r25.deformation_to_planar, Ratio::new(5041, 9604));
        assert!(resource_formulas(2).is_err());
    }
}
