//! Purification: the closed-form round against a dense two-pair simulation, Monte Carlo
//! against both, and the table format.

use approx::assert_abs_diff_eq;
use defectq::codes::{physical_code, steane_code, surface_d3_code, CodeDef};
use defectq::purification::{
    exact_purification_oracle, monte_carlo_physical, oracle_round, run_scheme, run_table,
    table_csv, werner_round_success, PairSource, RawPairModel, Scheme, SchemeSetup, CSV_HEADER,
};
use proptest::prelude::*;

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Bell states in (I, X, Y, Z) discrepancy order, basis |ab⟩ with a the high bit.
fn bell(k: usize) -> [f64; 4] {
    match k {
        0 => [S, 0.0, 0.0, S],
        1 => [0.0, S, S, 0.0],
        2 => [0.0, S, -S, 0.0],
        _ => [S, 0.0, 0.0, -S],
    }
}

/// One noiseless round on four qubits (a1, b1, a2, b2): bilateral CNOT from pair 1 to
/// pair 2, Z readout of pair 2, keep on equal outcomes, then Hadamard on both kept halves.
#[allow(clippy::needless_range_loop)]
fn dense_round(p: &[f64; 4]) -> ([f64; 4], f64) {
    let mut rho = [[0.0f64; 4]; 4];
    for k1 in 0..4 {
        for k2 in 0..4 {
            let w = p[k1] * p[k2];
            if w == 0.0 {
                continue;
            }
            let (b1, b2) = (bell(k1), bell(k2));
            let mut psi = [0.0f64; 16];
            for i in 0..4 {
                for j in 0..4 {
                    // index bits: a1 b1 a2 b2
                    let (a1, bb1, a2, bb2) = (i >> 1, i & 1, j >> 1, j & 1);
                    let (a2, bb2) = (a2 ^ a1, bb2 ^ bb1);
                    psi[a1 << 3 | bb1 << 2 | a2 << 1 | bb2] += b1[i] * b2[j];
                }
            }
            for m in [0usize, 3] {
                let mut v = [0.0f64; 4];
                for (r, slot) in v.iter_mut().enumerate() {
                    *slot = psi[r << 2 | m];
                }
                let h = [
                    (v[0] + v[1] + v[2] + v[3]) / 2.0,
                    (v[0] - v[1] + v[2] - v[3]) / 2.0,
                    (v[0] + v[1] - v[2] - v[3]) / 2.0,
                    (v[0] - v[1] - v[2] + v[3]) / 2.0,
                ];
                for r in 0..4 {
                    for c in 0..4 {
                        rho[r][c] += w * h[r] * h[c];
                    }
                }
            }
        }
    }
    let tr: f64 = (0..4).map(|i| rho[i][i]).sum();
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let b = bell(k);
        let mut e = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                e += b[r] * rho[r][c] * b[c];
            }
        }
        *o = e / tr;
    }
    (out, tr)
}

#[test]
fn werner_085_two_rounds_frozen() {
    let m = RawPairModel::werner(0.85).unwrap();
    let o = exact_purification_oracle(&m, 2);
    assert_abs_diff_eq!(o.success[0], 0.82, epsilon = 1e-12);
    assert_abs_diff_eq!(werner_round_success(0.85), 0.82, epsilon = 1e-12);
    // Frozen from the dense four-qubit simulation below.
    assert_abs_diff_eq!(o.fidelity, 0.971_627, epsilon = 1e-6);
    let (d1, s1) = dense_round(&m.probs);
    let (d2, _) = dense_round(&d1);
    assert_abs_diff_eq!(s1, 0.82, epsilon = 1e-12);
    assert_abs_diff_eq!(d2[0], o.fidelity, epsilon = 1e-12);
}

#[test]
fn monte_carlo_matches_oracle_without_gate_errors() {
    let m = RawPairModel::werner(0.85).unwrap();
    let o = exact_purification_oracle(&m, 2);
    let n = 200_000;
    let row = monte_carlo_physical(&m, 2, n, 5).unwrap();
    let sigma = (o.fidelity * (1.0 - o.fidelity) / n as f64).sqrt();
    assert!(
        (1.0 - row.merged_rate - o.fidelity).abs() < 4.0 * sigma,
        "{} vs {}",
        1.0 - row.merged_rate,
        o.fidelity
    );
    assert!(
        (row.inefficiency - o.inefficiency).abs() / o.inefficiency < 0.01,
        "{} vs {}",
        row.inefficiency,
        o.inefficiency
    );
}

#[test]
fn perfect_pairs_stay_perfect() {
    let o = exact_purification_oracle(&RawPairModel::perfect(), 3);
    assert_eq!(o.fidelity, 1.0);
    assert_eq!(o.inefficiency, 8.0);
    let row = monte_carlo_physical(&RawPairModel::perfect(), 3, 5_000, 1).unwrap();
    assert_eq!(row.merged_rate, 0.0);
    assert_abs_diff_eq!(row.inefficiency, 8.0, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn closed_form_round_equals_dense(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
        let s = a + b + c + d;
        prop_assume!(s > 1e-6);
        let p = [a / s, b / s, c / s, d / s];
        let (o1, s1) = oracle_round(&p);
        let (o2, s2) = dense_round(&p);
        prop_assert!((s1 - s2).abs() < 1e-12);
        for k in 0..4 {
            prop_assert!((o1[k] - o2[k]).abs() < 1e-12);
        }
        prop_assert!((o1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn werner_above_half_improves(f in 0.55f64..0.99) {
        let o = exact_purification_oracle(&RawPairModel::werner(f).unwrap(), 2);
        prop_assert!(o.fidelity > f);
        prop_assert!(o.success.iter().all(|&s| s > 0.0 && s <= 1.0));
        prop_assert!((werner_round_success(f) - o.success[0]).abs() < 1e-12);
    }
}

#[test]
fn csv_header_and_rows() {
    assert_eq!(
        CSV_HEADER,
        "#purification,X error rate,Z error rate,Merged error rate,Phys Bell Pair Ineff,KQ,#single qubit gate,#two qubit gate"
    );
    let rows = run_table(
        Scheme::Physical,
        &physical_code(),
        &physical_code(),
        &PairSource::optical(),
        1e-3,
        2,
        4_000,
        9,
    )
    .unwrap();
    let text = table_csv(&rows);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        CSV_HEADER
    );
    let parsed: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(parsed.len(), 3);
    for (row, p) in rows.iter().zip(&parsed) {
        assert_eq!(p[0] as usize, row.rounds);
        assert!((p[3] - row.merged_rate).abs() <= 5e-4 * row.merged_rate.max(1e-9));
        assert_eq!(p[5], row.kq.round());
    }
    assert_eq!(rows[0].kq, 88.0);
    assert_eq!(
        table_csv(&rows),
        table_csv(
            &run_table(
                Scheme::Physical,
                &physical_code(),
                &physical_code(),
                &PairSource::optical(),
                1e-3,
                2,
                4_000,
                9
            )
            .unwrap()
        )
    );
}

#[test]
fn encoded_round_zero_ledgers() {
    assert_eq!(steane_code().encoding_kq(), 42);
    assert_eq!(surface_d3_code().encoding_kq(), 100);
    for (a, b) in [
        (steane_code(), steane_code()),
        (surface_d3_code(), surface_d3_code()),
        (steane_code(), surface_d3_code()),
    ] {
        let setup = SchemeSetup::new(
            Scheme::After,
            a.clone(),
            b.clone(),
            PairSource::optical(),
            1e-3,
            0,
        )
        .unwrap();
        let row = run_scheme(&setup, 2_000, 3).unwrap();
        // One raw pair's window plus both encoders; round 0 has no checks to retry.
        let want = 88 + a.encoding_kq() + b.encoding_kq();
        assert_eq!(row.kq, want as f64);
        assert_eq!(row.inefficiency, 1.0);
        assert!(row.merged_rate < 0.25);
    }
}

#[test]
fn unknown_code_is_rejected() {
    assert!(CodeDef::by_name("golay").is_err());
}
