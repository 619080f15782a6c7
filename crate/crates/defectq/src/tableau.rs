//! Stabilizer tableau over a possibly partial generator set, with labeled logicals.

use crate::error::{Error, Result};
use crate::pauli::{Bits, CliffordGate, PauliString};

/// Measurement outcome sign.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_bool_minus(minus: bool) -> Sign {
        if minus {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn is_minus(self) -> bool {
        self == Sign::Minus
    }

    fn phase(self) -> u8 {
        if self.is_minus() {
            2
        } else {
            0
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilizerTableau {
    n: usize,
    generators: Vec<PauliString>,
    logicals: Vec<(String, PauliString)>,
}

impl StabilizerTableau {
    /// Tableau with no generators: the maximally mixed state on `n` qubits.
    pub fn empty(n: usize) -> Self {
        StabilizerTableau {
            n,
            generators: Vec::new(),
            logicals: Vec::new(),
        }
    }

    /// |0...0⟩.
    pub fn zero_state(n: usize) -> Self {
        let mut t = Self::empty(n);
        for q in 0..n {
            t.generators
                .push(PauliString::single(n, q, crate::pauli::Pauli::Z));
        }
        t
    }

    /// Builds from explicit generators, checking commutation and independence.
    pub fn from_generators(n: usize, generators: Vec<PauliString>) -> Result<Self> {
        for g in &generators {
            if g.n() != n {
                return Err(Error::Dimension(g.n(), n));
            }
            if !g.is_hermitian() {
                return Err(Error::InvalidObservable(g.to_string()));
            }
        }
        let t = StabilizerTableau {
            n,
            generators,
            logicals: Vec::new(),
        };
        if !t.is_abelian() {
            return Err(Error::InvalidParameter("generators do not commute".into()));
        }
        if !t.is_independent() {
            return Err(Error::InvalidParameter("generators are dependent".into()));
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn logicals(&self) -> &[(String, PauliString)] {
        &self.logicals
    }

    pub fn logical(&self, label: &str) -> Option<&PauliString> {
        self.logicals
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| p)
    }

    pub fn add_logical(&mut self, label: &str, p: PauliString) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::Dimension(p.n(), self.n));
        }
        if self.generators.iter().any(|g| !g.commutes_unchecked(&p)) {
            return Err(Error::InvalidParameter(format!(
                "logical {label} anticommutes with a generator"
            )));
        }
        self.logicals.push((label.to_string(), p));
        Ok(())
    }

    pub fn is_abelian(&self) -> bool {
        let g = &self.generators;
        (0..g.len()).all(|i| (i + 1..g.len()).all(|j| g[i].commutes_unchecked(&g[j])))
    }

    pub fn is_independent(&self) -> bool {
        symplectic_rank(&self.generators) == self.generators.len()
    }

    pub fn logicals_commute(&self) -> bool {
        self.logicals
            .iter()
            .all(|(_, l)| self.generators.iter().all(|g| g.commutes_unchecked(l)))
    }

    /// Expresses `p` (ignoring phase) as a product of generators; returns the product.
    fn decompose(&self, p: &PauliString) -> Option<PauliString> {
        let m = self.generators.len();
        let words = 2 * self.n;
        let mut rows: Vec<(Bits, Bits)> = self
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| (concat(g), Bits::from_indices(m, &[i])))
            .collect();
        let mut target = concat(p);
        let mut combo = Bits::zeros(m);
        let mut pivot_row = 0;
        for col in 0..words {
            let Some(r) = (pivot_row..rows.len()).find(|&r| rows[r].0.get(col)) else {
                continue;
            };
            rows.swap(pivot_row, r);
            let (pv, pc) = rows[pivot_row].clone();
            for (rr, row) in rows.iter_mut().enumerate() {
                if rr != pivot_row && row.0.get(col) {
                    row.0.xor_assign(&pv);
                    row.1.xor_assign(&pc);
                }
            }
            if target.get(col) {
                target.xor_assign(&pv);
                combo.xor_assign(&pc);
            }
            pivot_row += 1;
        }
        if !target.is_zero() {
            return None;
        }
        let mut prod = PauliString::identity(self.n);
        for i in combo.ones() {
            prod = prod.multiply(&self.generators[i]).expect("same n");
        }
        Some(prod)
    }

    /// Sign with which ±p lies in the stabilizer group, if it does.
    pub fn sign_of(&self, p: &PauliString) -> Option<Sign> {
        let prod = self.decompose(p)?;
        Some(Sign::from_bool_minus(prod.phase() != p.phase()))
    }

    /// True iff `p` itself, with its sign, is in the stabilizer group.
    pub fn contains(&self, p: &PauliString) -> bool {
        p.n() == self.n && p.is_hermitian() && self.sign_of(p) == Some(Sign::Plus)
    }

    /// Measures the observable. Random outcomes take `forced` (default +1); determined
    /// outcomes ignore it.
    pub fn measure(&mut self, obs: &PauliString, forced: Option<Sign>) -> Result<Sign> {
        if obs.n() != self.n {
            return Err(Error::Dimension(obs.n(), self.n));
        }
        if !obs.is_hermitian() {
            return Err(Error::InvalidObservable(obs.to_string()));
        }
        let anti: Vec<usize> = (0..self.generators.len())
            .filter(|&i| !self.generators[i].commutes_unchecked(obs))
            .collect();
        let outcome = forced.unwrap_or(Sign::Plus);
        let new_gen = obs.clone().with_phase((obs.phase() + outcome.phase()) & 3);
        if let Some(&k) = anti.first() {
            let gk = self.generators[k].clone();
            for &j in &anti[1..] {
                self.generators[j] = self.generators[j].multiply(&gk)?;
            }
            for (_, l) in self.logicals.iter_mut() {
                if !l.commutes_unchecked(obs) {
                    *l = l.multiply(&gk)?;
                }
            }
            self.generators[k] = new_gen;
            return Ok(outcome);
        }
        if let Some(s) = self.sign_of(obs) {
            return Ok(s);
        }
        self.logicals.retain(|(_, l)| l.commutes_unchecked(obs));
        self.generators.push(new_gen);
        Ok(outcome)
    }

    /// Conjugates every generator and logical by a Clifford gate.
    pub fn apply_gate(&mut self, gate: &CliffordGate) -> Result<()> {
        gate.validate(self.n)?;
        for g in self.generators.iter_mut() {
            g.conjugate_in_place(gate);
        }
        for (_, l) in self.logicals.iter_mut() {
            l.conjugate_in_place(gate);
        }
        Ok(())
    }

    /// Applies a Pauli operator to the state: anticommuting generators flip sign.
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::Dimension(p.n(), self.n));
        }
        for g in self.generators.iter_mut() {
            if !g.commutes_unchecked(p) {
                *g = g.clone().negated();
            }
        }
        for (_, l) in self.logicals.iter_mut() {
            if !l.commutes_unchecked(p) {
                *l = l.clone().negated();
            }
        }
        Ok(())
    }

    /// Drops the generator with the same support as `p`, if present.
    pub fn discard_generator_equal(&mut self, p: &PauliString) -> bool {
        if let Some(i) = self.generators.iter().position(|g| g.same_support(p)) {
            self.generators.remove(i);
            true
        } else {
            false
        }
    }
}

fn concat(p: &PauliString) -> Bits {
    let n = p.n();
    let mut b = Bits::zeros(2 * n);
    for q in p.x_bits().ones() {
        b.set(q, true);
    }
    for q in p.z_bits().ones() {
        b.set(n + q, true);
    }
    b
}

/// GF(2) rank of the symplectic vectors.
pub fn symplectic_rank(ps: &[PauliString]) -> usize {
    let mut rows: Vec<Bits> = ps.iter().map(concat).collect();
    let cols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(r) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(rank, r);
        let pv = rows[rank].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != rank && row.get(col) {
                row.xor_assign(&pv);
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PauliString {
        PauliString::parse(s).unwrap()
    }

    #[test]
    fn measuring_a_stabilizer_is_deterministic() {
        let mut t = StabilizerTableau::zero_state(1);
        assert_eq!(t.measure(&p("Z"), Some(Sign::Minus)).unwrap(), Sign::Plus);
        assert_eq!(t.generators().len(), 1);
    }

    #[test]
    fn repeated_measurement_repeats() {
        let mut t = StabilizerTableau::zero_state(2);
        assert_eq!(t.measure(&p("XX"), Some(Sign::Minus)).unwrap(), Sign::Minus);
        assert_eq!(t.measure(&p("XX"), None).unwrap(), Sign::Minus);
        assert!(t.contains(&p("-XX")));
        assert!(t.contains(&p("ZZ")));
    }

    #[test]
    fn membership_respects_sign() {
        let t = StabilizerTableau::from_generators(3, vec![p("ZZI"), p("IZZ")]).unwrap();
        assert!(t.contains(&p("ZIZ")));
        assert!(!t.contains(&p("-ZIZ")));
        assert!(!t.contains(&p("XII")));
        let t1 = StabilizerTableau::from_generators(2, vec![p("ZZ")]).unwrap();
        assert!(!t1.contains(&p("XI")));
    }

    #[test]
    fn non_hermitian_observable_rejected() {
        let mut t = StabilizerTableau::zero_state(1);
        assert!(matches!(
            t.measure(&p("iZ"), None),
            Err(Error::InvalidObservable(_))
        ));
    }

    #[test]
    fn dependent_generators_rejected() {
        assert!(StabilizerTableau::from_generators(2, vec![p("ZZ"), p("ZZ")]).is_err());
        assert!(StabilizerTableau::from_generators(1, vec![p("Z"), p("X")]).is_err());
    }
}
