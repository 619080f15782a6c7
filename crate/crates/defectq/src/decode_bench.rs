//! Oracle-equivalence suites for the matching decoder.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{
    assess_logical, exhaustive_matching, min_weight_matching, spatial_graph, weight_of, Pipeline,
    BOUNDARY,
};
use crate::error::{Error, Result};
use crate::lattice::{reconfigure, Lattice, StabKind};
use crate::noise::TrialState;
use crate::pauli::{Bits, Pauli, PauliFrame, PauliString};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Distinct (location, outcome) faults decoded.
    pub faults: usize,
    pub logical_failures: usize,
    /// (event index, outcome) of the first few failing faults.
    pub examples: Vec<(usize, usize)>,
}

/// Decodes every single fault of the pipeline's circuit on its own.
pub fn single_fault_sweep(pipe: &Pipeline) -> Result<SweepReport> {
    let table = &pipe.table;
    let jobs: Vec<(usize, usize)> = table
        .locations
        .iter()
        .enumerate()
        .flat_map(|(li, loc)| (0..loc.effects.len()).map(move |k| (li, k)))
        .collect();
    let pool = crate::parallel::worker_pool()?;
    let failures: Vec<(usize, usize)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(li, k)| -> Result<Option<(usize, usize)>> {
                let loc = &table.locations[li];
                let eff = &loc.effects[k];
                let mut outcomes = vec![false; table.n_instances];
                for &o in &eff.outcomes {
                    outcomes[o as usize] ^= true;
                }
                let mut x = Bits::zeros(table.n_sites);
                let mut z = Bits::zeros(table.n_sites);
                for &q in &eff.residual_x {
                    x.flip(q as usize);
                }
                for &q in &eff.residual_z {
                    z.flip(q as usize);
                }
                let t = TrialState {
                    outcomes,
                    residual: PauliString::from_bits(x, z, 0)?,
                };
                let frame = pipe.nest.decode(&t)?;
                let out = assess_logical(&t.residual, &frame, pipe.layout)?;
                Ok(out.merged().then_some((loc.event, k + 1)))
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;
    Ok(SweepReport {
        faults: jobs.len(),
        logical_failures: failures.len(),
        examples: failures.into_iter().take(5).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingBench {
    pub instances: usize,
    pub agreements: usize,
    /// Instances with no perfect matching, where both matchers agree there is none.
    pub infeasible: usize,
}

/// Blossom against subset-DP matching on random instances of 1..=`max_events` events.
pub fn matching_oracle_bench(
    instances: usize,
    max_events: usize,
    seed: u64,
) -> Result<MatchingBench> {
    if max_events == 0 || max_events > 12 {
        return Err(Error::InvalidParameter(format!(
            "max_events {max_events} outside 1..=12"
        )));
    }
    let mut r = stream(seed, 0, 0);
    let mut agreements = 0;
    let mut infeasible = 0;
    for _ in 0..instances {
        let k = r.gen_range(1..=max_events);
        let w: Vec<Vec<Option<f64>>> = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        r.gen_bool(0.85)
                            .then(|| r.gen_range(1..5000) as f64 / 1000.0)
                    })
                    .collect()
            })
            .collect();
        let bw: Vec<Option<f64>> = (0..k)
            .map(|_| {
                r.gen_bool(0.7)
                    .then(|| r.gen_range(1..5000) as f64 / 1000.0)
            })
            .collect();
        let pair = |i: usize, j: usize| w[i.min(j)][i.max(j)];
        let bnd = |i: usize| bw[i];
        let ex = exhaustive_matching(k, &pair, &bnd);
        match (min_weight_matching(k, &pair, &bnd), ex) {
            (Ok(m), Some(e)) if (m.weight - e).abs() < 1e-6 => agreements += 1,
            (Err(Error::Disconnected(_)), None) => {
                agreements += 1;
                infeasible += 1;
            }
            (Err(e @ Error::InvalidParameter(_)), _) => return Err(e),
            _ => {}
        }
    }
    Ok(MatchingBench {
        instances,
        agreements,
        infeasible,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScenario {
    pub distance_between: f64,
    pub distance_to_boundary: (f64, f64),
    /// Both events matched to the boundary rather than to each other.
    pub matched_to_boundary: bool,
    /// The resulting correction completes a logical operator.
    pub logical_failure: bool,
}

/// Two events four steps apart in a d = 7 column, one and two steps from opposite
/// edges: the cheaper explanation is two boundary chains, which turns the true
/// four-qubit chain into a logical X.
pub fn boundary_miscorrection_scenario() -> Result<BoundaryScenario> {
    let layout = reconfigure(&Lattice::generate_perfect(7)?);
    let ops = layout
        .logical_ops()
        .ok_or_else(|| Error::InvalidParameter("no logical qubit".into()))?;
    let (g, index) = spatial_graph(&layout, StabKind::Z, &ops.z_judge);
    let l = &layout.lattice;
    let id_at = |r, c| {
        layout
            .of_kind(StabKind::Z)
            .find(|s| s.plaquettes == vec![l.site(r, c)])
            .map(|s| s.id)
            .ok_or_else(|| Error::InvalidParameter(format!("no Z plaquette at ({r}, {c})")))
    };
    let (a, b) = (index[id_at(1, 4)?], index[id_at(9, 4)?]);
    let unit = weight_of(0.1);
    let m = g.mwpm(&[a, b])?;
    let chain: Vec<usize> = [2, 4, 6, 8].iter().map(|&r| l.site(r, 4)).collect();
    let n = l.n_sites();
    let mut frame = PauliFrame::new(n);
    for (i, j) in &m.pairs {
        let ev = [a, b];
        let (bits, _) = g.path_correction(ev[*i], j.map_or(BOUNDARY, |j| ev[j]), n);
        frame.x.xor_assign(&bits);
    }
    let out = assess_logical(&PauliString::uniform(n, &chain, Pauli::X), &frame, &layout)?;
    Ok(BoundaryScenario {
        distance_between: g.distance(a, b) / unit,
        distance_to_boundary: (
            g.distance(a, BOUNDARY) / unit,
            g.distance(b, BOUNDARY) / unit,
        ),
        matched_to_boundary: m.pairs.iter().all(|(_, j)| j.is_none()),
        logical_failure: out.x_error,
    })
}
