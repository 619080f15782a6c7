//! Pauli algebra and tableau updates checked against dense matrices on up to four qubits.

use defectq::pauli::{CliffordGate, Pauli, PauliString};
use defectq::tableau::{Sign, StabilizerTableau};
use num_complex::Complex64 as C;
use proptest::prelude::*;

type Mat = Vec<Vec<C>>;

fn letter(p: Pauli) -> [[C; 2]; 2] {
    let (o, l, i) = (C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0));
    match p {
        Pauli::I => [[l, o], [o, l]],
        Pauli::X => [[o, l], [l, o]],
        Pauli::Y => [[o, -i], [i, o]],
        Pauli::Z => [[l, o], [o, -l]],
    }
}

fn kron(a: &Mat, b: &[[C; 2]; 2]) -> Mat {
    let n = a.len();
    let mut out = vec![vec![C::new(0.0, 0.0); 2 * n]; 2 * n];
    for r in 0..n {
        for c in 0..n {
            for i in 0..2 {
                for j in 0..2 {
                    out[2 * r + i][2 * c + j] = a[r][c] * b[i][j];
                }
            }
        }
    }
    out
}

/// Qubit 0 is the most significant tensor factor.
fn dense(p: &PauliString) -> Mat {
    let mut m = vec![vec![C::new(1.0, 0.0)]];
    for q in 0..p.n() {
        m = kron(&m, &letter(p.get(q)));
    }
    let ph = C::new(0.0, 1.0).powu(p.phase() as u32);
    m.iter()
        .map(|row| row.iter().map(|&v| v * ph).collect())
        .collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| (0..n).map(|k| a[r][k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

fn dagger(a: &Mat) -> Mat {
    let n = a.len();
    (0..n)
        .map(|r| (0..n).map(|c| a[c][r].conj()).collect())
        .collect()
}

fn close(a: &Mat, b: &Mat) -> bool {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .all(|(x, y)| (x - y).norm() < 1e-9)
}

fn bit(i: usize, q: usize, n: usize) -> usize {
    i >> (n - 1 - q) & 1
}

fn unitary(g: &CliffordGate, n: usize) -> Mat {
    let dim = 1 << n;
    let mut u = vec![vec![C::new(0.0, 0.0); dim]; dim];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for col in 0..dim {
        match *g {
            CliffordGate::H(q) => {
                let m = 1 << (n - 1 - q);
                let sign = if bit(col, q, n) == 1 { -h } else { h };
                u[col & !m][col] += C::new(h, 0.0);
                u[col | m][col] += C::new(sign, 0.0);
            }
            CliffordGate::Cnot(c, t) => {
                let row = if bit(col, c, n) == 1 {
                    col ^ (1 << (n - 1 - t))
                } else {
                    col
                };
                u[row][col] = C::new(1.0, 0.0);
            }
            CliffordGate::Swap(a, b) => {
                let (ba, bb) = (bit(col, a, n), bit(col, b, n));
                let mut row = col & !(1 << (n - 1 - a)) & !(1 << (n - 1 - b));
                row |= bb << (n - 1 - a) | ba << (n - 1 - b);
                u[row][col] = C::new(1.0, 0.0);
            }
            _ => u[col][col] = C::new(1.0, 0.0),
        }
    }
    u
}

fn pauli_strategy(n: usize) -> impl Strategy<Value = PauliString> {
    (prop::collection::vec(0u8..4, n), 0u8..4).prop_map(move |(ls, ph)| {
        let terms: Vec<(usize, Pauli)> = ls
            .iter()
            .enumerate()
            .map(|(q, &l)| (q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][l as usize]))
            .collect();
        PauliString::from_sparse(n, &terms).with_phase(ph)
    })
}

fn gate_strategy(n: usize) -> impl Strategy<Value = CliffordGate> {
    (0u8..3, 0..n, 0..n).prop_filter_map("distinct qubits", |(k, a, b)| match k {
        0 => Some(CliffordGate::H(a)),
        1 if a != b => Some(CliffordGate::Cnot(a, b)),
        2 if a != b => Some(CliffordGate::Swap(a, b)),
        _ => None,
    })
}

fn apply(u: &Mat, v: &[C]) -> Vec<C> {
    u.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

proptest! {
    #[test]
    fn product_matches_dense(a in pauli_strategy(3), b in pauli_strategy(3)) {
        let ab = a.multiply(&b).unwrap();
        prop_assert!(close(&dense(&ab), &matmul(&dense(&a), &dense(&b))));
    }

    #[test]
    fn commutation_matches_dense(a in pauli_strategy(3), b in pauli_strategy(3)) {
        let (ma, mb) = (dense(&a), dense(&b));
        prop_assert_eq!(a.commutes(&b).unwrap(), close(&matmul(&ma, &mb), &matmul(&mb, &ma)));
        prop_assert_eq!(a.commutes(&b).unwrap(), b.commutes(&a).unwrap());
    }

    #[test]
    fn product_is_associative(a in pauli_strategy(4), b in pauli_strategy(4), c in pauli_strategy(4)) {
        let l = a.multiply(&b).unwrap().multiply(&c).unwrap();
        let r = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        prop_assert_eq!(l, r);
    }

    #[test]
    fn conjugation_matches_dense(p in pauli_strategy(3), g in gate_strategy(3)) {
        let u = unitary(&g, 3);
        let want = matmul(&matmul(&u, &dense(&p)), &dagger(&u));
        prop_assert!(close(&dense(&p.conjugate(&g).unwrap()), &want), "{} under {}", p, g);
    }

    #[test]
    fn conjugation_preserves_commutation(a in pauli_strategy(4), b in pauli_strategy(4), g in gate_strategy(4)) {
        let (ca, cb) = (a.conjugate(&g).unwrap(), b.conjugate(&g).unwrap());
        prop_assert_eq!(a.commutes(&b).unwrap(), ca.commutes(&cb).unwrap());
    }

    #[test]
    fn display_parse_round_trip(p in pauli_strategy(4)) {
        prop_assert_eq!(PauliString::parse(&p.to_string()).unwrap(), p);
    }

    /// Every generator of the tableau stabilizes the dense state after a random circuit.
    #[test]
    fn tableau_tracks_the_state_vector(gates in prop::collection::vec(gate_strategy(3), 0..12), obs in pauli_strategy(3)) {
        let n = 3;
        let mut t = StabilizerTableau::zero_state(n);
        let mut psi = vec![C::new(0.0, 0.0); 1 << n];
        psi[0] = C::new(1.0, 0.0);
        for g in &gates {
            t.apply_gate(g).unwrap();
            psi = apply(&unitary(g, n), &psi);
        }
        prop_assert!(t.is_abelian() && t.is_independent());
        prop_assert_eq!(t.generators().len(), n);
        for s in t.generators() {
            let v = apply(&dense(s), &psi);
            prop_assert!(v.iter().zip(&psi).all(|(a, b)| (a - b).norm() < 1e-9));
        }
        // Determined measurement outcomes agree with the expectation value.
        if obs.is_hermitian() {
            let e: C = psi.iter().zip(apply(&dense(&obs), &psi)).map(|(a, b)| a.conj() * b).sum();
            if let Some(sign) = t.sign_of(&obs) {
                let want = if sign == Sign::Plus { 1.0 } else { -1.0 };
                prop_assert!((e.re - want).abs() < 1e-9);
            } else {
                prop_assert!(e.norm() < 1e-9);
            }
        }
    }
}

#[test]
fn measurement_collapses_and_repeats() {
    let mut t = StabilizerTableau::zero_state(2);
    t.apply_gate(&CliffordGate::H(0)).unwrap();
    let x0 = PauliString::parse("XI").unwrap();
    assert_eq!(t.measure(&x0, None).unwrap(), Sign::Plus);
    let z0 = PauliString::parse("ZI").unwrap();
    assert_eq!(t.measure(&z0, Some(Sign::Minus)).unwrap(), Sign::Minus);
    assert_eq!(t.measure(&z0, Some(Sign::Plus)).unwrap(), Sign::Minus);
    assert!(t.contains(&PauliString::parse("-ZI").unwrap()));
}

#[test]
fn hadamard_matrix_is_correct() {
    let h = unitary(&CliffordGate::H(0), 1);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!(close(
        &h,
        &vec![
            vec![C::new(r, 0.0), C::new(r, 0.0)],
            vec![C::new(r, 0.0), C::new(-r, 0.0)]
        ]
    ));
}
