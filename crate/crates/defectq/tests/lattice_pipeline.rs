//! Reconfiguration, composition and scheduling on random defective lattices.

use defectq::circuit::{compose_all, held_karp, replay_measured_operator, tsp_heuristic};
use defectq::lattice::{encodability_check, reconfigure, Lattice, StabKind};
use defectq::metrics::Chip;
use defectq::noise::{run_trial, ErrorModel, FaultTable};
use defectq::pauli::{Pauli, PauliString};
use defectq::rng::stream;
use defectq::scheduler::{dump, mean_ec_cycle, schedule, verify_whole_circuit};
use defectq::Error;
use proptest::prelude::*;

fn lattice(d: usize, y: f64, seed: u64) -> Lattice {
    Lattice::generate_perfect(d)
        .unwrap()
        .apply_yield(y, seed)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn layout_is_a_commuting_cover_of_working_data(seed in any::<u64>(), y in 0.85f64..1.0) {
        let l = lattice(5, y, seed);
        let layout = reconfigure(&l);
        prop_assert!(layout.is_abelian());
        let n = l.n_sites();
        for s in &layout.stabilizers {
            prop_assert!(!s.data_members.is_empty());
            prop_assert!(s.data_members.iter().all(|&q| l.is_working(q) && l.is_data(q)));
            let op = s.operator(n);
            prop_assert!(op.weight() == s.data_members.len());
        }
        let enc = encodability_check(&layout);
        prop_assert_eq!(enc.encodable, layout.logical_ops().is_some());
        if let Some(ops) = layout.logical_ops() {
            let xl = PauliString::uniform(n, &ops.x_chain, Pauli::X);
            let zl = PauliString::uniform(n, &ops.z_chain, Pauli::Z);
            let zj = PauliString::uniform(n, &ops.z_judge.ones().collect::<Vec<_>>(), Pauli::Z);
            let xj = PauliString::uniform(n, &ops.x_judge.ones().collect::<Vec<_>>(), Pauli::X);
            prop_assert!(!xl.commutes(&zj).unwrap());
            prop_assert!(!zl.commutes(&xj).unwrap());
            for s in &layout.stabilizers {
                let op = s.operator(n);
                for p in [&xl, &zl, &zj, &xj] {
                    prop_assert!(op.commutes(p).unwrap(), "stabilizer {}", s.id);
                }
            }
            prop_assert!(enc.reduced_distance() <= 5);
        }
    }

    #[test]
    fn composed_circuits_measure_their_stabilizer(seed in any::<u64>(), y in 0.85f64..1.0) {
        let l = lattice(5, y, seed);
        let layout = reconfigure(&l);
        let n = l.n_sites();
        // A stabilizer no connected ancilla set can reach is reported, not composed.
        let circuits = match compose_all(&layout) {
            Ok(c) => c,
            Err(Error::Uncoverable(_)) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        for c in circuits {
            let s = &layout.stabilizers[c.stabilizer_id];
            let measured = replay_measured_operator(&c, n).unwrap();
            prop_assert!(measured.same_support(&s.operator(n)), "stabilizer {}", s.id);
            for e in &c.events {
                for q in e.gate.qubits() {
                    prop_assert!(l.is_working(q), "circuit touches faulty site {}", q);
                }
            }
        }
    }

    #[test]
    fn schedules_are_valid_and_deterministic(seed in any::<u64>(), y in 0.9f64..1.0) {
        let l = lattice(5, y, seed);
        let Ok(chip) = Chip::build(&l) else { return Ok(()) };
        verify_whole_circuit(&chip.whole, &chip.layout).unwrap();
        let again = schedule(&chip.layout, &chip.circuits, chip.whole.horizon).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&dump(&again, true)).unwrap(),
            serde_json::to_string(&dump(&chip.whole, true)).unwrap()
        );
        prop_assert!(mean_ec_cycle(&chip.whole) >= 8.0 - 1e-9);
    }

    #[test]
    fn fault_table_matches_frame_sweep(seed in any::<u64>(), p in 0.001f64..0.05) {
        let l = lattice(3, 0.95, seed);
        let Ok(chip) = Chip::build(&l) else { return Ok(()) };
        let m = ErrorModel::lattice(p).unwrap();
        let table = FaultTable::build(&chip.whole, &m, &l.working_data_sites());
        for t in 0..4 {
            let a = run_trial(&chip.whole, &m, &mut stream(seed, 1, t));
            let b = table.sample(&mut stream(seed, 1, t));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn lattice_file_round_trip(seed in any::<u64>(), y in 0.5f64..1.0) {
        let l = lattice(5, y, seed);
        let text = serde_json::to_string(&l.to_file()).unwrap();
        let back = Lattice::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        prop_assert_eq!(back.faulty_sites(), l.faulty_sites());
        prop_assert_eq!(back.seed(), l.seed());
    }

    #[test]
    fn held_karp_is_optimal(pts in prop::collection::vec((0i64..8, 0i64..8), 1..7)) {
        let dist: Vec<Vec<usize>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).abs() + (a.1 - b.1).abs()) as usize).collect())
            .collect();
        let (cost, order) = held_karp(&dist);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..pts.len()).collect::<Vec<_>>());
        prop_assert_eq!(cost, order.windows(2).map(|w| dist[w[0]][w[1]]).sum::<usize>());
        // Brute force over permutations.
        let mut best = usize::MAX;
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        permute(&mut perm, 0, &mut |p| best = best.min(p.windows(2).map(|w| dist[w[0]][w[1]]).sum()));
        prop_assert_eq!(cost, best);
        prop_assert!(tsp_heuristic(&dist).0 >= cost);
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn perfect_layout_counts() {
    for d in [3, 5, 7] {
        let layout = reconfigure(&Lattice::generate_perfect(d).unwrap());
        assert_eq!(layout.of_kind(StabKind::Z).count(), d * (d - 1));
        assert_eq!(layout.of_kind(StabKind::X).count(), d * (d - 1));
        assert_eq!(encodability_check(&layout).reduced_distance(), d);
    }
}
