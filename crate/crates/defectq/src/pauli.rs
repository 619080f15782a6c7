//! Pauli strings in symplectic form, Clifford conjugation and Pauli frames.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length packed bit vector.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_indices(len: usize, idx: &[usize]) -> Self {
        let mut b = Bits::zeros(len);
        for &i in idx {
            b.flip(i);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let m = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= m;
        } else {
            self.words[i >> 6] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    pub fn xor_assign(&mut self, other: &Bits) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Parity of the bitwise AND with `other`.
    pub fn dot(&self, other: &Bits) -> bool {
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + t)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// n-qubit Pauli operator `i^phase * P_0 ⊗ ... ⊗ P_{n-1}` with (x,z)=(1,1) read as Y.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct PauliString {
    n: usize,
    x: Bits,
    z: Bits,
    phase: u8,
}

/// Exponent of i picked up by the single-qubit product P1·P2.
#[inline]
fn g(x1: bool, z1: bool, x2: bool, z2: bool) -> i32 {
    let (x2i, z2i) = (x2 as i32, z2 as i32);
    match (x1, z1) {
        (false, false) => 0,
        (true, true) => z2i - x2i,
        (true, false) => z2i * (2 * x2i - 1),
        (false, true) => x2i * (1 - 2 * z2i),
    }
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString {
            n,
            x: Bits::zeros(n),
            z: Bits::zeros(n),
            phase: 0,
        }
    }

    pub fn from_bits(x: Bits, z: Bits, phase: u8) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::Dimension(x.len(), z.len()));
        }
        Ok(PauliString {
            n: x.len(),
            x,
            z,
            phase: phase & 3,
        })
    }

    pub fn single(n: usize, q: usize, p: Pauli) -> Self {
        Self::from_sparse(n, &[(q, p)])
    }

    /// Builds a Pauli from (qubit, letter) pairs; repeated qubits are multiplied in order.
    pub fn from_sparse(n: usize, terms: &[(usize, Pauli)]) -> Self {
        let mut out = PauliString::identity(n);
        for &(q, p) in terms {
            let mut t = PauliString::identity(n);
            let (x, z) = p.bits();
            t.x.set(q, x);
            t.z.set(q, z);
            out = out.mul_unchecked(&t);
        }
        out
    }

    /// Tensor power of one letter on `qubits`.
    pub fn uniform(n: usize, qubits: &[usize], p: Pauli) -> Self {
        let terms: Vec<_> = qubits.iter().map(|&q| (q, p)).collect();
        Self::from_sparse(n, &terms)
    }

    /// Parses strings like `"+XIZ"`, `"-iYY"` or `"XZ"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (mut phase, mut rest) = (0u8, s);
        if let Some(r) = rest.strip_prefix('-') {
            phase = 2;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r;
        }
        if let Some(r) = rest.strip_prefix('i') {
            phase = (phase + 1) & 3;
            rest = r;
        }
        let n = rest.chars().count();
        let mut p = PauliString::identity(n);
        for (q, c) in rest.chars().enumerate() {
            let letter = match c {
                'I' | '_' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "bad Pauli letter {other:?}"
                    )))
                }
            };
            let (x, z) = letter.bits();
            p.x.set(q, x);
            p.z.set(q, z);
        }
        p.phase = phase;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_bits(&self) -> &Bits {
        &self.x
    }

    pub fn z_bits(&self) -> &Bits {
        &self.z
    }

    /// Power of i in front of the tensor product.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn with_phase(mut self, phase: u8) -> Self {
        self.phase = phase & 3;
        self
    }

    pub fn negated(mut self) -> Self {
        self.phase = (self.phase + 2) & 3;
        self
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x.get(q), self.z.get(q))
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero() && self.phase == 0
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase & 1 == 0
    }

    pub fn weight(&self) -> usize {
        let mut w = 0;
        for (a, b) in self.x.words().iter().zip(self.z.words()) {
            w += (a | b).count_ones() as usize;
        }
        w
    }

    /// Same operator content ignoring the phase.
    pub fn same_support(&self, other: &PauliString) -> bool {
        self.x == other.x && self.z == other.z
    }

    fn check_dim(&self, other: &PauliString) -> Result<()> {
        if self.n != other.n {
            Err(Error::Dimension(self.n, other.n))
        } else {
            Ok(())
        }
    }

    fn mul_unchecked(&self, other: &PauliString) -> PauliString {
        let mut e = self.phase as i32 + other.phase as i32;
        let support = {
            let mut s = self.x.clone();
            for (w, zw) in s.words.iter_mut().zip(self.z.words()) {
                *w |= zw;
            }
            s
        };
        for q in support.ones() {
            e += g(self.x.get(q), self.z.get(q), other.x.get(q), other.z.get(q));
        }
        let mut x = self.x.clone();
        x.xor_assign(&other.x);
        let mut z = self.z.clone();
        z.xor_assign(&other.z);
        PauliString {
            n: self.n,
            x,
            z,
            phase: e.rem_euclid(4) as u8,
        }
    }

    /// Operator product `self · other` with exact phase.
    pub fn multiply(&self, other: &PauliString) -> Result<PauliString> {
        self.check_dim(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self.commutes_unchecked(other))
    }

    pub(crate) fn commutes_unchecked(&self, other: &PauliString) -> bool {
        self.x.dot(&other.z) == self.z.dot(&other.x)
    }

    /// Returns `g · self · g†`.
    pub fn conjugate(&self, gate: &CliffordGate) -> Result<PauliString> {
        gate.validate(self.n)?;
        let mut p = self.clone();
        p.conjugate_in_place(gate);
        Ok(p)
    }

    pub(crate) fn conjugate_in_place(&mut self, gate: &CliffordGate) {
        match *gate {
            CliffordGate::H(q) => {
                let (x, z) = (self.x.get(q), self.z.get(q));
                if x && z {
                    self.phase = (self.phase + 2) & 3;
                }
                self.x.set(q, z);
                self.z.set(q, x);
            }
            CliffordGate::Cnot(c, t) => {
                let (xc, zc, xt, zt) = (self.x.get(c), self.z.get(c), self.x.get(t), self.z.get(t));
                if xc && zt && (xt == zc) {
                    self.phase = (self.phase + 2) & 3;
                }
                self.x.set(t, xt ^ xc);
                self.z.set(c, zc ^ zt);
            }
            CliffordGate::Swap(a, b) => {
                let (xa, za) = (self.x.get(a), self.z.get(a));
                self.x.set(a, self.x.get(b));
                self.z.set(a, self.z.get(b));
                self.x.set(b, xa);
                self.z.set(b, za);
            }
            CliffordGate::InitZ(_) | CliffordGate::MeasureZ(_) | CliffordGate::Identity(_) => {}
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for q in 0..self.n {
            write!(f, "{}", self.get(q).letter())?;
        }
        Ok(())
    }
}

/// Gate alphabet of the syndrome-extraction circuits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum CliffordGate {
    InitZ(usize),
    H(usize),
    Cnot(usize, usize),
    Swap(usize, usize),
    MeasureZ(usize),
    Identity(usize),
}

/// Gate kind without operands.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum GateKind {
    InitZ,
    H,
    Cnot,
    Swap,
    MeasureZ,
    Identity,
}

impl CliffordGate {
    pub fn cnot(c: usize, t: usize) -> Result<Self> {
        if c == t {
            return Err(Error::InvalidGate(format!("CNOT on identical qubits {c}")));
        }
        Ok(CliffordGate::Cnot(c, t))
    }

    pub fn swap(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidGate(format!("SWAP on identical qubits {a}")));
        }
        Ok(CliffordGate::Swap(a, b))
    }

    pub fn kind(&self) -> GateKind {
        match self {
            CliffordGate::InitZ(_) => GateKind::InitZ,
            CliffordGate::H(_) => GateKind::H,
            CliffordGate::Cnot(..) => GateKind::Cnot,
            CliffordGate::Swap(..) => GateKind::Swap,
            CliffordGate::MeasureZ(_) => GateKind::MeasureZ,
            CliffordGate::Identity(_) => GateKind::Identity,
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            CliffordGate::Cnot(a, b) | CliffordGate::Swap(a, b) => vec![a, b],
            CliffordGate::InitZ(q)
            | CliffordGate::H(q)
            | CliffordGate::MeasureZ(q)
            | CliffordGate::Identity(q) => vec![q],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, CliffordGate::Cnot(..) | CliffordGate::Swap(..))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        for &q in &qs {
            if q >= n {
                return Err(Error::Index { index: q, n });
            }
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::InvalidGate(format!(
                "{self:?} needs distinct qubits"
            )));
        }
        Ok(())
    }

    /// Same gate with every qubit index passed through `f`.
    pub fn remap(&self, f: impl Fn(usize) -> usize) -> CliffordGate {
        match *self {
            CliffordGate::InitZ(q) => CliffordGate::InitZ(f(q)),
            CliffordGate::H(q) => CliffordGate::H(f(q)),
            CliffordGate::Cnot(a, b) => CliffordGate::Cnot(f(a), f(b)),
            CliffordGate::Swap(a, b) => CliffordGate::Swap(f(a), f(b)),
            CliffordGate::MeasureZ(q) => CliffordGate::MeasureZ(f(q)),
            CliffordGate::Identity(q) => CliffordGate::Identity(f(q)),
        }
    }
}

impl fmt::Display for CliffordGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliffordGate::InitZ(q) => write!(f, "INIT {q}"),
            CliffordGate::H(q) => write!(f, "H {q}"),
            CliffordGate::Cnot(c, t) => write!(f, "CNOT {c} {t}"),
            CliffordGate::Swap(a, b) => write!(f, "SWAP {a} {b}"),
            CliffordGate::MeasureZ(q) => write!(f, "MEASURE {q}"),
            CliffordGate::Identity(q) => write!(f, "I {q}"),
        }
    }
}

/// Pending Pauli corrections tracked classically, one X and one Z bit per qubit.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PauliFrame {
    pub x: Bits,
    pub z: Bits,
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        PauliFrame {
            x: Bits::zeros(n),
            z: Bits::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    pub fn compose(&mut self, other: &PauliFrame) {
        self.x.xor_assign(&other.x);
        self.z.xor_assign(&other.z);
    }

    pub fn to_pauli(&self) -> PauliString {
        PauliString::from_bits(self.x.clone(), self.z.clone(), 0).expect("equal lengths")
    }

    /// Applies the frame to a Pauli error, ignoring the global phase.
    pub fn apply_to(&self, p: &PauliString) -> PauliString {
        let mut x = p.x_bits().clone();
        x.xor_assign(&self.x);
        let mut z = p.z_bits().clone();
        z.xor_assign(&self.z);
        PauliString::from_bits(x, z, 0).expect("equal lengths")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_times_z_is_minus_i_y() {
        let x = PauliString::parse("X").unwrap();
        let z = PauliString::parse("Z").unwrap();
        let p = x.multiply(&z).unwrap();
        assert_eq!(p.to_string(), "-iY");
    }

    #[test]
    fn xx_is_identity() {
        let x = PauliString::parse("X").unwrap();
        assert!(x.multiply(&x).unwrap().is_identity());
    }

    #[test]
    fn length_mismatch_is_reported() {
        let a = PauliString::parse("XX").unwrap();
        let b = PauliString::parse("X").unwrap();
        assert_eq!(a.multiply(&b), Err(Error::Dimension(2, 1)));
        assert!(a.commutes(&b).is_err());
    }

    #[test]
    fn textbook_conjugations() {
        let c = CliffordGate::cnot(0, 1).unwrap();
        assert_eq!(
            PauliString::parse("XI")
                .unwrap()
                .conjugate(&c)
                .unwrap()
                .to_string(),
            "+XX"
        );
        assert_eq!(
            PauliString::parse("IZ")
                .unwrap()
                .conjugate(&c)
                .unwrap()
                .to_string(),
            "+ZZ"
        );
        assert_eq!(
            PauliString::parse("Z")
                .unwrap()
                .conjugate(&CliffordGate::H(0))
                .unwrap()
                .to_string(),
            "+X"
        );
        assert_eq!(
            PauliString::parse("Y")
                .unwrap()
                .conjugate(&CliffordGate::H(0))
                .unwrap()
                .to_string(),
            "-Y"
        );
        let s = CliffordGate::swap(0, 1).unwrap();
        assert_eq!(
            PauliString::parse("XZ")
                .unwrap()
                .conjugate(&s)
                .unwrap()
                .to_string(),
            "+ZX"
        );
        assert!(CliffordGate::cnot(1, 1).is_err());
    }

    #[test]
    fn bits_iterate_set_positions() {
        let b = Bits::from_indices(130, &[0, 63, 64, 129]);
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(b.count_ones(), 4);
    }

    #[test]
    fn frame_twice_is_identity() {
        let mut f = PauliFrame::new(5);
        f.x.flip(2);
        f.z.flip(4);
        let g = f.clone();
        f.compose(&g);
        assert!(f.is_identity());
    }
}
