//! Bell-pair generation, physical and encoded purification, and resource ledgers.
//!
//! Errors are tracked as Pauli frames relative to the ideal state: one (x, z) bitmask pair per
//! block, bit i for data qubit i. A pair's discrepancy is judged by perfect extraction: each
//! block is decoded with a minimum-weight lookup table and the logical flips of the two halves
//! are compared.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::CodeDef;
use crate::error::{Error, Result};
use crate::pauli::CliffordGate;
use crate::rng::stream;

pub const CSV_HEADER: &str =
    "#purification,X error rate,Z error rate,Merged error rate,Phys Bell Pair Ineff,KQ,#single qubit gate,#two qubit gate";

/// Steps one half of a raw pair spends in the ledger window.
const RAW_WINDOW_STEPS: u64 = 44;
/// Noisy memory steps per qubit between generation and first use.
const RAW_MEMORY_STEPS: usize = 2;
/// Purification attempts in a retry loop before giving up.
pub const DEFAULT_RETRY_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Physical pairs only, no encoding.
    Physical,
    /// Purify physical pairs, then encode each half.
    Before,
    /// Encode each half, then purify at the logical level.
    After,
    /// As `After`, also discarding on any −1 stabilizer parity in a measured block.
    AfterStrict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Optical link delivering pairs at fidelity 0.85.
    Optical,
    /// Two initialisations, H, identity and CNOT on local qubits.
    Local,
}

/// Single-sided discrepancy distribution over (I, X, Y, Z) on an ideal Φ⁺.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPairModel {
    pub probs: [f64; 4],
}

impl RawPairModel {
    pub fn new(probs: [f64; 4]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&q| q < 0.0 || q.is_nan()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "discrepancy probabilities {probs:?} must be >= 0 and sum to 1"
            )));
        }
        Ok(RawPairModel { probs })
    }

    /// Φ⁺ 0.85, Ψ⁺ 0.055, Ψ⁻ 0.055, Φ⁻ 0.04.
    pub fn optical() -> Self {
        RawPairModel {
            probs: [0.85, 0.055, 0.055, 0.04],
        }
    }

    pub fn werner(f: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!(
                "fidelity {f} outside [0, 1]"
            )));
        }
        let e = (1.0 - f) / 3.0;
        Self::new([f, e, e, e])
    }

    pub fn perfect() -> Self {
        RawPairModel {
            probs: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn fidelity(&self) -> f64 {
        self.probs[0]
    }

    /// Index into (I, X, Y, Z).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &q) in self.probs.iter().enumerate() {
            acc += q;
            if u < acc {
                return k;
            }
        }
        self.probs.iter().rposition(|&q| q > 0.0).unwrap_or(0)
    }
}

/// (x, z) components of a Pauli index in (I, X, Y, Z).
fn xz(k: usize) -> (bool, bool) {
    (k == 1 || k == 2, k == 2 || k == 3)
}

fn pauli_index(x: bool, z: bool) -> usize {
    match (x, z) {
        (false, false) => 0,
        (true, false) => 1,
        (true, true) => 2,
        (false, true) => 3,
    }
}

/// Calls `f` for every faulty location among `n`, each faulty with probability `p`,
/// jumping between faults with geometric gaps.
fn for_each_fault<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    mut f: impl FnMut(usize, &mut R),
) {
    if p <= 0.0 || n == 0 {
        return;
    }
    if p >= 1.0 {
        for i in 0..n {
            f(i, rng);
        }
        return;
    }
    let ln_q = (1.0 - p).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = rng.gen();
        let gap = (1.0 - u).ln() / ln_q;
        if gap >= (n - i) as f64 {
            return;
        }
        i += gap as usize;
        f(i, rng);
        i += 1;
        if i >= n {
            return;
        }
    }
}

/// Pauli on each qubit of a location for a non-identity outcome; the second entry is only
/// meaningful for two-qubit locations.
fn fault_paulis(two_qubit: bool, outcome: usize) -> [usize; 2] {
    if two_qubit {
        let k = outcome + 1;
        [k / 4, k % 4]
    } else {
        [outcome + 1, 0]
    }
}

fn apply_gate_to_frame(g: &CliffordGate, x: &mut u64, z: &mut u64) {
    match *g {
        CliffordGate::H(q) => {
            let (bx, bz) = ((*x >> q) & 1, (*z >> q) & 1);
            *x = (*x & !(1 << q)) | bz << q;
            *z = (*z & !(1 << q)) | bx << q;
        }
        CliffordGate::Cnot(c, t) => {
            *x ^= ((*x >> c) & 1) << t;
            *z ^= ((*z >> t) & 1) << c;
        }
        CliffordGate::Swap(a, b) => {
            for m in [x, z] {
                let (ba, bb) = ((*m >> a) & 1, (*m >> b) & 1);
                *m = (*m & !(1 << a) & !(1 << b)) | ba << b | bb << a;
            }
        }
        CliffordGate::InitZ(_) | CliffordGate::MeasureZ(_) | CliffordGate::Identity(_) => {}
    }
}

/// A small Clifford circuit with every location's faults pre-propagated to the output frame.
/// Each initialised wire gets one location after its preparation; in every column each gate
/// is one location and each wire without a gate gets a memory location.
#[derive(Clone, Debug)]
pub struct FaultCircuit {
    columns: Vec<Vec<CliffordGate>>,
    /// Output frame (x, z) for every non-identity outcome of every location.
    effects: Vec<Vec<(u64, u64)>>,
    pub single_locations: u64,
    pub two_locations: u64,
}

impl FaultCircuit {
    pub fn build(
        n_wires: usize,
        init_wires: &[usize],
        columns: Vec<Vec<CliffordGate>>,
    ) -> Result<Self> {
        if n_wires > 64 {
            return Err(Error::Dimension(n_wires, 64));
        }
        let mut fc = FaultCircuit {
            columns,
            effects: Vec::new(),
            single_locations: 0,
            two_locations: 0,
        };
        let one_qubit = |fc: &FaultCircuit, q: usize, from: usize| -> Vec<(u64, u64)> {
            (0..3)
                .map(|o| {
                    let (x, z) = xz(fault_paulis(false, o)[0]);
                    fc.propagate(from, (x as u64) << q, (z as u64) << q)
                })
                .collect()
        };
        let mut effects = Vec::new();
        for &q in init_wires {
            effects.push(one_qubit(&fc, q, 0));
        }
        for c in 0..fc.columns.len() {
            let mut busy = 0u64;
            for g in &fc.columns[c] {
                let qs = g.qubits();
                for &q in &qs {
                    if q >= n_wires {
                        return Err(Error::Index {
                            index: q,
                            n: n_wires,
                        });
                    }
                    busy |= 1 << q;
                }
                if qs.len() == 2 {
                    let eff = (0..15)
                        .map(|o| {
                            let ps = fault_paulis(true, o);
                            let (x0, z0) = xz(ps[0]);
                            let (x1, z1) = xz(ps[1]);
                            let x = (x0 as u64) << qs[0] | (x1 as u64) << qs[1];
                            let z = (z0 as u64) << qs[0] | (z1 as u64) << qs[1];
                            fc.propagate(c + 1, x, z)
                        })
                        .collect();
                    effects.push(eff);
                } else {
                    effects.push(one_qubit(&fc, qs[0], c + 1));
                }
            }
            for q in 0..n_wires {
                if busy >> q & 1 == 0 {
                    effects.push(one_qubit(&fc, q, c + 1));
                }
            }
        }
        fc.two_locations = effects.iter().filter(|e| e.len() == 15).count() as u64;
        fc.single_locations = effects.len() as u64 - fc.two_locations;
        fc.effects = effects;
        Ok(fc)
    }

    /// Pushes a frame through columns `from..`.
    pub fn propagate(&self, from: usize, mut x: u64, mut z: u64) -> (u64, u64) {
        for col in self.columns.iter().skip(from) {
            for g in col {
                apply_gate_to_frame(g, &mut x, &mut z);
            }
        }
        (x, z)
    }

    pub fn locations(&self) -> usize {
        self.effects.len()
    }

    /// Output frame contributed by the circuit's own faults.
    pub fn sample_faults<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> (u64, u64) {
        let (mut x, mut z) = (0u64, 0u64);
        for_each_fault(self.effects.len(), p, rng, |i, rng| {
            let eff = &self.effects[i];
            let (dx, dz) = eff[rng.gen_range(0..eff.len())];
            x ^= dx;
            z ^= dz;
        });
        (x, z)
    }
}

/// Minimum-weight correction for each syndrome of one check type.
#[derive(Clone, Debug)]
pub struct LookupDecoder {
    checks: Vec<u64>,
    table: Vec<u64>,
}

impl LookupDecoder {
    pub fn new(checks: Vec<u64>, n: usize) -> Self {
        let mut table = vec![u64::MAX; 1 << checks.len()];
        let mut patterns: Vec<u64> = (0..1u64 << n).collect();
        patterns.sort_by_key(|m| m.count_ones());
        let mut filled = 0;
        for e in patterns {
            let s = syndrome_of(&checks, e);
            if table[s] == u64::MAX {
                table[s] = e;
                filled += 1;
                if filled == table.len() {
                    break;
                }
            }
        }
        LookupDecoder { checks, table }
    }

    pub fn syndrome(&self, e: u64) -> usize {
        syndrome_of(&self.checks, e)
    }

    /// The error times its correction; trivial syndrome guaranteed.
    pub fn corrected(&self, e: u64) -> u64 {
        e ^ self.table[self.syndrome(e)]
    }
}

fn syndrome_of(checks: &[u64], e: u64) -> usize {
    checks.iter().enumerate().fold(0, |s, (i, c)| {
        s | (((c & e).count_ones() & 1) as usize) << i
    })
}

/// A code prepared for frame simulation.
#[derive(Clone, Debug)]
pub struct Block {
    pub code: CodeDef,
    /// Decodes X errors from Z-check outcomes.
    z_decoder: LookupDecoder,
    /// Decodes Z errors from X-check outcomes.
    x_decoder: LookupDecoder,
    logical_x_support: u64,
    logical_z_support: u64,
    encoder: FaultCircuit,
    input_x_image: (u64, u64),
    input_z_image: (u64, u64),
}

impl Block {
    pub fn new(code: CodeDef) -> Result<Self> {
        if code.n > 20 {
            return Err(Error::Dimension(code.n, 20));
        }
        let mut columns = vec![Vec::new(); code.depth()];
        for e in &code.encoding_circuit {
            columns[e.slot].push(e.gate);
        }
        let init: Vec<usize> = (0..code.n).filter(|&q| q != code.input_wire).collect();
        let encoder = FaultCircuit::build(code.n, &init, columns)?;
        let input_x_image = encoder.propagate(0, 1 << code.input_wire, 0);
        let input_z_image = encoder.propagate(0, 0, 1 << code.input_wire);
        Ok(Block {
            z_decoder: LookupDecoder::new(code.z_checks(), code.n),
            x_decoder: LookupDecoder::new(code.x_checks(), code.n),
            logical_x_support: CodeDef::x_mask(&code.logical_x),
            logical_z_support: CodeDef::z_mask(&code.logical_z),
            encoder,
            input_x_image,
            input_z_image,
            code,
        })
    }

    pub fn n(&self) -> usize {
        self.code.n
    }

    /// Logical X flip of an X-error pattern after lookup correction.
    pub fn logical_x_flip(&self, x: u64) -> bool {
        (self.z_decoder.corrected(x) & self.logical_z_support).count_ones() & 1 == 1
    }

    pub fn logical_z_flip(&self, z: u64) -> bool {
        (self.x_decoder.corrected(z) & self.logical_x_support).count_ones() & 1 == 1
    }

    /// Encodes a physical half carrying Pauli (x, z), adding the encoder's own faults.
    fn encode<R: Rng + ?Sized>(&self, x: bool, z: bool, p: f64, rng: &mut R) -> (u64, u64) {
        let (mut ox, mut oz) = self.encoder.sample_faults(p, rng);
        if x {
            ox ^= self.input_x_image.0;
            oz ^= self.input_x_image.1;
        }
        if z {
            ox ^= self.input_z_image.0;
            oz ^= self.input_z_image.1;
        }
        (ox, oz)
    }

    fn encode_ledger(&self) -> Ledger {
        if self.code.is_physical() {
            return Ledger::default();
        }
        Ledger {
            raw_pairs: 0,
            kq: self.code.encoding_kq() as u64,
            single_qubit_gates: self.encoder.single_locations,
            two_qubit_gates: self.encoder.two_locations,
        }
    }
}

/// Residual error frame of a (possibly encoded) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFrame {
    pub ax: u64,
    pub az: u64,
    pub bx: u64,
    pub bz: u64,
}

impl PairFrame {
    /// Physical pair with one-sided discrepancy `k` in (I, X, Y, Z) on half B.
    pub fn physical(k: usize) -> Self {
        let (x, z) = xz(k);
        PairFrame {
            bx: x as u64,
            bz: z as u64,
            ..Default::default()
        }
    }

    /// Discrepancy of a physical pair as an index in (I, X, Y, Z).
    pub fn physical_discrepancy(&self) -> usize {
        pauli_index((self.ax ^ self.bx) & 1 == 1, (self.az ^ self.bz) & 1 == 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub raw_pairs: u64,
    pub kq: u64,
    pub single_qubit_gates: u64,
    pub two_qubit_gates: u64,
}

impl std::ops::AddAssign for Ledger {
    fn add_assign(&mut self, o: Ledger) {
        self.raw_pairs += o.raw_pairs;
        self.kq += o.kq;
        self.single_qubit_gates += o.single_qubit_gates;
        self.two_qubit_gates += o.two_qubit_gates;
    }
}

impl Ledger {
    /// Charged for every raw pair generated, delivered or not.
    fn raw() -> Ledger {
        Ledger {
            raw_pairs: 1,
            two_qubit_gates: 1,
            ..Default::default()
        }
    }

    /// The delivered pair's storage window, charged once per delivered pair.
    fn window(source: Source) -> Ledger {
        Ledger {
            raw_pairs: 0,
            kq: 2 * RAW_WINDOW_STEPS,
            single_qubit_gates: match source {
                Source::Optical => 2 * RAW_WINDOW_STEPS - 2,
                Source::Local => 2 * RAW_WINDOW_STEPS + 2,
            },
            two_qubit_gates: 0,
        }
    }

    /// One purification attempt on blocks of `na` and `nb` qubits: four blocks for two steps.
    fn attempt(na: usize, nb: usize) -> Ledger {
        let q = 2 * (na + nb) as u64;
        Ledger {
            raw_pairs: 0,
            kq: 2 * q,
            single_qubit_gates: q,
            two_qubit_gates: q / 2,
        }
    }
}

/// Pair sources.
#[derive(Clone, Debug)]
pub struct PairSource {
    pub kind: Source,
    pub model: RawPairModel,
    local: FaultCircuit,
}

impl PairSource {
    pub fn new(kind: Source, model: RawPairModel) -> Result<Self> {
        let mut columns = vec![
            vec![CliffordGate::H(0), CliffordGate::Identity(1)],
            vec![CliffordGate::Cnot(0, 1)],
        ];
        columns.extend(std::iter::repeat_with(Vec::new).take(RAW_MEMORY_STEPS));
        Ok(PairSource {
            kind,
            model,
            local: FaultCircuit::build(2, &[0, 1], columns)?,
        })
    }

    pub fn optical() -> Self {
        Self::new(Source::Optical, RawPairModel::optical()).expect("fixed circuit")
    }

    pub fn local() -> Self {
        Self::new(Source::Local, RawPairModel::perfect()).expect("fixed circuit")
    }

    /// One physical pair: a discrepancy from the model followed by memory steps for the
    /// optical source, or the noisy local-gate circuit.
    pub fn make<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> PairFrame {
        match self.kind {
            Source::Optical => {
                let mut f = PairFrame::physical(self.model.sample(rng));
                for_each_fault(2 * RAW_MEMORY_STEPS, p, rng, |i, rng| {
                    let (x, z) = xz(rng.gen_range(1..4));
                    if i < RAW_MEMORY_STEPS {
                        f.ax ^= x as u64;
                        f.az ^= z as u64;
                    } else {
                        f.bx ^= x as u64;
                        f.bz ^= z as u64;
                    }
                });
                f
            }
            Source::Local => {
                let (x, z) = self.local.sample_faults(p, rng);
                PairFrame {
                    ax: x & 1,
                    az: z & 1,
                    bx: x >> 1 & 1,
                    bz: z >> 1 & 1,
                }
            }
        }
    }
}

/// One side of a bilateral round: `kept` and `sac` are that side's halves of the two input
/// pairs. Returns the decoded logical outcome of the sacrificed block and whether its
/// same-basis stabilizer parities were all +1.
#[allow(clippy::too_many_arguments)]
fn side_round<R: Rng + ?Sized>(
    block: &Block,
    kept: (&mut u64, &mut u64),
    sac: (u64, u64),
    detect_x: bool,
    hadamard: bool,
    p: f64,
    rng: &mut R,
) -> (bool, bool) {
    let n = block.n();
    let (kx, kz) = kept;
    let (mut sx, mut sz) = sac;
    if detect_x {
        // CNOT kept -> sacrificed
        sx ^= *kx;
        *kz ^= sz;
    } else {
        *kx ^= sx;
        sz ^= *kz;
    }
    for_each_fault(n, p, rng, |i, rng| {
        let ps = fault_paulis(true, rng.gen_range(0..15));
        let (a, b) = (xz(ps[0]), xz(ps[1]));
        *kx ^= (a.0 as u64) << i;
        *kz ^= (a.1 as u64) << i;
        sx ^= (b.0 as u64) << i;
        sz ^= (b.1 as u64) << i;
    });
    if hadamard {
        std::mem::swap(kx, kz);
    }
    // second step: a readout location on each sacrificed qubit, and an H or memory location
    // on each kept one
    for_each_fault(2 * n, p, rng, |i, rng| {
        let (x, z) = xz(rng.gen_range(1..4));
        if i < n {
            sx ^= (x as u64) << i;
            sz ^= (z as u64) << i;
        } else {
            *kx ^= (x as u64) << (i - n);
            *kz ^= (z as u64) << (i - n);
        }
    });
    if detect_x {
        (block.logical_x_flip(sx), block.z_decoder.syndrome(sx) == 0)
    } else {
        (block.logical_z_flip(sz), block.x_decoder.syndrome(sz) == 0)
    }
}

/// Bilateral purification of two pairs; `None` when the pair is discarded.
#[allow(clippy::too_many_arguments)]
pub fn purify_round<R: Rng + ?Sized>(
    a: &Block,
    b: &Block,
    kept: PairFrame,
    sac: PairFrame,
    detect_x: bool,
    hadamard: bool,
    strict: bool,
    p: f64,
    rng: &mut R,
) -> Option<PairFrame> {
    let mut out = kept;
    let (fa, ca) = side_round(
        a,
        (&mut out.ax, &mut out.az),
        (sac.ax, sac.az),
        detect_x,
        hadamard,
        p,
        rng,
    );
    let (fb, cb) = side_round(
        b,
        (&mut out.bx, &mut out.bz),
        (sac.bx, sac.bz),
        detect_x,
        hadamard,
        p,
        rng,
    );
    let accept = fa == fb && (!strict || (ca && cb));
    accept.then_some(out)
}

/// The physical round: bilateral CNOT, Hadamard on both kept qubits, Z readout of both
/// sacrificed qubits and comparison. It detects X discrepancies; the Hadamards exchange the
/// roles of X and Z for the next round.
pub fn purify_physical<R: Rng + ?Sized>(
    kept: PairFrame,
    sac: PairFrame,
    p: f64,
    rng: &mut R,
) -> Option<PairFrame> {
    let phys = physical_block();
    purify_round(&phys, &phys, kept, sac, true, true, false, p, rng)
}

fn physical_block() -> Block {
    Block::new(crate::codes::physical_code()).expect("physical block")
}

/// Encodes both halves of a physical pair.
pub fn encode_pair<R: Rng + ?Sized>(
    a: &Block,
    b: &Block,
    pair: PairFrame,
    p: f64,
    rng: &mut R,
) -> PairFrame {
    let (ax, az) = a.encode(pair.ax & 1 == 1, pair.az & 1 == 1, p, rng);
    let (bx, bz) = b.encode(pair.bx & 1 == 1, pair.bz & 1 == 1, p, rng);
    PairFrame { ax, az, bx, bz }
}

/// Logical (X, Z) discrepancy of a pair under perfect extraction.
pub fn judge(a: &Block, b: &Block, f: &PairFrame) -> (bool, bool) {
    (
        a.logical_x_flip(f.ax) ^ b.logical_x_flip(f.bx),
        a.logical_z_flip(f.az) ^ b.logical_z_flip(f.bz),
    )
}

#[derive(Clone, Debug)]
pub struct SchemeSetup {
    pub scheme: Scheme,
    pub a: Block,
    pub b: Block,
    pub phys: Block,
    pub source: PairSource,
    pub p: f64,
    pub rounds: usize,
    pub retry_cap: u64,
}

impl SchemeSetup {
    pub fn new(
        scheme: Scheme,
        code_a: CodeDef,
        code_b: CodeDef,
        source: PairSource,
        p: f64,
        rounds: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "error probability {p} outside [0, 1]"
            )));
        }
        if scheme == Scheme::Physical && !(code_a.is_physical() && code_b.is_physical()) {
            return Err(Error::InvalidParameter(
                "the physical scheme takes physical halves only".into(),
            ));
        }
        Ok(SchemeSetup {
            scheme,
            a: Block::new(code_a)?,
            b: Block::new(code_b)?,
            phys: physical_block(),
            source,
            p,
            rounds,
            retry_cap: DEFAULT_RETRY_CAP,
        })
    }

    fn encoded_rounds(&self) -> bool {
        matches!(self.scheme, Scheme::After | Scheme::AfterStrict)
    }

    /// Delivers one pair purified `level` times, retrying failed rounds.
    fn produce<R: Rng + ?Sized>(
        &self,
        level: usize,
        ledger: &mut Ledger,
        rng: &mut R,
    ) -> Result<PairFrame> {
        if level == 0 {
            *ledger += Ledger::raw();
            let raw = self.source.make(self.p, rng);
            if self.encoded_rounds() {
                *ledger += self.a.encode_ledger();
                *ledger += self.b.encode_ledger();
                return Ok(encode_pair(&self.a, &self.b, raw, self.p, rng));
            }
            return Ok(raw);
        }
        let (a, b) = if self.encoded_rounds() {
            (&self.a, &self.b)
        } else {
            (&self.phys, &self.phys)
        };
        for _ in 0..self.retry_cap {
            let kept = self.produce(level - 1, ledger, rng)?;
            let sac = self.produce(level - 1, ledger, rng)?;
            *ledger += Ledger::attempt(a.n(), b.n());
            let out = if self.encoded_rounds() {
                // odd rounds compare Z-basis outcomes, even rounds X-basis outcomes
                let strict = self.scheme == Scheme::AfterStrict;
                purify_round(a, b, kept, sac, level % 2 == 1, false, strict, self.p, rng)
            } else {
                purify_round(a, b, kept, sac, true, true, false, self.p, rng)
            };
            if let Some(f) = out {
                return Ok(f);
            }
        }
        Err(Error::RetryCap(self.retry_cap))
    }

    /// One delivered pair, judged.
    pub fn trial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(bool, bool, Ledger)> {
        let mut ledger = Ledger::window(self.source.kind);
        let mut f = self.produce(self.rounds, &mut ledger, rng)?;
        if self.scheme == Scheme::Before {
            ledger += self.a.encode_ledger();
            ledger += self.b.encode_ledger();
            f = encode_pair(&self.a, &self.b, f, self.p, rng);
        }
        let (x, z) = judge(&self.a, &self.b, &f);
        Ok((x, z, ledger))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeCounts {
    pub delivered: u64,
    pub x_errors: u64,
    pub z_errors: u64,
    pub merged_errors: u64,
    pub ledger: Ledger,
}

impl SchemeCounts {
    fn merge(mut self, o: SchemeCounts) -> SchemeCounts {
        self.delivered += o.delivered;
        self.x_errors += o.x_errors;
        self.z_errors += o.z_errors;
        self.merged_errors += o.merged_errors;
        self.ledger += o.ledger;
        self
    }
}

/// One table row: rates and per-delivered-pair ledger averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeRow {
    pub rounds: usize,
    pub x_rate: f64,
    pub z_rate: f64,
    pub merged_rate: f64,
    pub inefficiency: f64,
    pub kq: f64,
    pub single_qubit_gates: f64,
    pub two_qubit_gates: f64,
    pub delivered: u64,
}

impl SchemeRow {
    fn from_counts(rounds: usize, c: &SchemeCounts) -> Self {
        let t = c.delivered.max(1) as f64;
        SchemeRow {
            rounds,
            x_rate: c.x_errors as f64 / t,
            z_rate: c.z_errors as f64 / t,
            merged_rate: c.merged_errors as f64 / t,
            inefficiency: c.ledger.raw_pairs as f64 / t,
            kq: c.ledger.kq as f64 / t,
            single_qubit_gates: c.ledger.single_qubit_gates as f64 / t,
            two_qubit_gates: c.ledger.two_qubit_gates as f64 / t,
            delivered: c.delivered,
        }
    }

    /// Binomial standard error of the merged rate.
    pub fn merged_stderr(&self) -> f64 {
        (self.merged_rate * (1.0 - self.merged_rate) / self.delivered.max(1) as f64).sqrt()
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.3e},{:.3e},{:.3e},{:.3},{:.0},{:.0},{:.0}",
            self.rounds,
            self.x_rate,
            self.z_rate,
            self.merged_rate,
            self.inefficiency,
            self.kq,
            self.single_qubit_gates,
            self.two_qubit_gates
        )
    }
}

const CHUNK: u64 = 2048;

/// Monte Carlo over `trials` delivered pairs. Chunks have their own seeded streams, so the
/// result does not depend on the thread count.
pub fn run_scheme(setup: &SchemeSetup, trials: u64, seed: u64) -> Result<SchemeRow> {
    let chunks = trials.div_ceil(CHUNK);
    let pool = crate::parallel::worker_pool()?;
    let counts = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|ci| -> Result<SchemeCounts> {
                let mut rng = stream(seed, setup.rounds as u64, ci);
                let mut c = SchemeCounts::default();
                for _ in ci * CHUNK..((ci + 1) * CHUNK).min(trials) {
                    let (x, z, l) = setup.trial(&mut rng)?;
                    c.delivered += 1;
                    c.x_errors += x as u64;
                    c.z_errors += z as u64;
                    c.merged_errors += (x || z) as u64;
                    c.ledger += l;
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let total = counts
        .into_iter()
        .fold(SchemeCounts::default(), SchemeCounts::merge);
    Ok(SchemeRow::from_counts(setup.rounds, &total))
}

/// Rows for rounds `0..=max_rounds`.
#[allow(clippy::too_many_arguments)]
pub fn run_table(
    scheme: Scheme,
    code_a: &CodeDef,
    code_b: &CodeDef,
    source: &PairSource,
    p: f64,
    max_rounds: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<SchemeRow>> {
    (0..=max_rounds)
        .map(|r| {
            let setup =
                SchemeSetup::new(scheme, code_a.clone(), code_b.clone(), source.clone(), p, r)?;
            run_scheme(&setup, trials, seed)
        })
        .collect()
}

pub fn table_csv(rows: &[SchemeRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

pub fn write_table_csv(path: &Path, rows: &[SchemeRow]) -> Result<()> {
    std::fs::write(path, table_csv(rows))
        .map_err(|e| Error::InvalidParameter(format!("writing {}: {e}", path.display())))
}

/// Exact recursion for the physical round without gate errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Discrepancy distribution over (I, X, Y, Z) after the last round.
    pub distribution: [f64; 4],
    pub fidelity: f64,
    /// Success probability of each round, first round first.
    pub success: Vec<f64>,
    /// Expected raw pairs per delivered pair: 2^n / ∏ success.
    pub inefficiency: f64,
}

/// One noiseless physical round on two pairs drawn from `d`.
pub fn oracle_round(d: &[f64; 4]) -> ([f64; 4], f64) {
    let mut out = [0.0; 4];
    let mut s = 0.0;
    for (k1, &p1) in d.iter().enumerate() {
        for (k2, &p2) in d.iter().enumerate() {
            let ((x1, z1), (x2, z2)) = (xz(k1), xz(k2));
            if x1 != x2 {
                continue;
            }
            // frame before the Hadamards is (x1, z1 ^ z2); they exchange the components
            out[pauli_index(z1 ^ z2, x1)] += p1 * p2;
            s += p1 * p2;
        }
    }
    if s > 0.0 {
        for v in &mut out {
            *v /= s;
        }
    }
    (out, s)
}

pub fn exact_purification_oracle(model: &RawPairModel, rounds: usize) -> OracleResult {
    let mut d = model.probs;
    let mut success = Vec::with_capacity(rounds);
    let mut ineff = 1.0;
    for _ in 0..rounds {
        let (next, s) = oracle_round(&d);
        success.push(s);
        ineff = 2.0 * ineff / s;
        d = next;
    }
    OracleResult {
        distribution: d,
        fidelity: d[0],
        success,
        inefficiency: ineff,
    }
}

/// Single-round success for a Werner input: F² + 2F(1−F)/3 + 5((1−F)/3)².
pub fn werner_round_success(f: f64) -> f64 {
    let e = (1.0 - f) / 3.0;
    f * f + 2.0 * f * e + 5.0 * e * e
}

/// Two-round fidelity approximation F² / (F² + (1−F)²).
pub fn two_round_fidelity_approximation(f: f64) -> f64 {
    f * f / (f * f + (1.0 - f) * (1.0 - f))
}

/// Physical-only Monte Carlo with perfect gates, for comparison with the oracle.
pub fn monte_carlo_physical(
    model: &RawPairModel,
    rounds: usize,
    trials: u64,
    seed: u64,
) -> Result<SchemeRow> {
    let source = PairSource::new(Source::Optical, *model)?;
    let phys = crate::codes::physical_code();
    let setup = SchemeSetup::new(Scheme::Physical, phys.clone(), phys, source, 0.0, rounds)?;
    run_scheme(&setup, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{steane_code, surface_d3_code};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fault_skipping_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = vec![0u32; 10];
        for _ in 0..100_000 {
            for_each_fault(10, 0.1, &mut rng, |i, _| hits[i] += 1);
        }
        for h in hits {
            assert!((h as f64 - 10_000.0).abs() < 500.0, "{h}");
        }
    }

    #[test]
    fn lookup_corrects_single_errors() {
        for code in [steane_code(), surface_d3_code()] {
            let b = Block::new(code).unwrap();
            for q in 0..b.n() {
                assert!(!b.logical_x_flip(1 << q));
                assert!(!b.logical_z_flip(1 << q));
            }
            assert!(b.logical_x_flip(b.logical_x_support));
            assert!(b.logical_z_flip(b.logical_z_support));
        }
    }

    #[test]
    fn noiseless_encoding_keeps_bell_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (
            Block::new(steane_code()).unwrap(),
            Block::new(surface_d3_code()).unwrap(),
        );
        for k in 0..4 {
            let f = encode_pair(&a, &b, PairFrame::physical(k), 0.0, &mut rng);
            let (x, z) = xz(k);
            assert_eq!(judge(&a, &b, &f), (x, z));
        }
    }

    #[test]
    fn oracle_round_table() {
        // both Z-discrepant: not detected, and the Hadamards leave no discrepancy
        let (d, s) = oracle_round(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s, 1.0);
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0]);
        // one X-discrepant input is always discarded
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(purify_physical(
            PairFrame::physical(1),
            PairFrame::physical(0),
            0.0,
            &mut rng
        )
        .is_none());
        assert!(purify_physical(
            PairFrame::physical(0),
            PairFrame::physical(3),
            0.0,
            &mut rng
        )
        .is_some());
    }

    #[test]
    fn werner_values() {
        let r = exact_purification_oracle(&RawPairModel::werner(0.85).unwrap(), 2);
        assert!((r.success[0] - 0.82).abs() < 1e-12);
        assert!((werner_round_success(0.85) - 0.82).abs() < 1e-12);
        assert!((two_round_fidelity_approximation(0.85) - 0.7225 / 0.745).abs() < 1e-12);
        let p = exact_purification_oracle(&RawPairModel::perfect(), 3);
        assert_eq!((p.fidelity, p.inefficiency), (1.0, 8.0));
    }

    #[test]
    fn csv_round_trip_shape() {
        let row = SchemeRow {
            rounds: 1,
            x_rate: 0.1,
            z_rate: 0.02,
            merged_rate: 0.11,
            inefficiency: 2.5,
            kq: 98.0,
            single_qubit_gates: 91.0,
            two_qubit_gates: 5.0,
            delivered: 10,
        };
        let csv = table_csv(&[row]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 8);
    }
}
