//! Weaves stabilizer circuits into one asynchronous whole circuit.
//!
//! Each stabilizer repeats back to back. Gates are placed greedily into a slot table;
//! a busy data device makes the instance wait, while a collision on a device the instance
//! is holding (syndrome variable, displaced data) restarts the whole instance after the
//! blocking instance ends. X and Z instances that overlap in time must interleave their
//! gathers on shared qubits with even parity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{gate_name, StabilizerCircuit};
use crate::error::{Error, Result};
use crate::lattice::{StabKind, StabilizerLayout};
use crate::pauli::CliffordGate;

const FREE: u32 = u32::MAX;
const RETRY_CAP: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub slot: usize,
    pub gate: CliffordGate,
    pub stabilizer_id: usize,
    pub instance: usize,
    /// Explicit wait on a held device; carries no error by default.
    pub wait: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub stabilizer_id: usize,
    pub kind: StabKind,
    pub start: usize,
    pub end: usize,
    pub measure_slot: usize,
    pub measure_site: usize,
    pub gathers: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WholeCircuit {
    pub n_sites: usize,
    pub horizon: usize,
    /// Sorted by slot, then instance.
    pub events: Vec<ScheduledEvent>,
    /// Sorted by measurement slot.
    pub instances: Vec<Instance>,
    /// Per stabilizer id, the measurement slots in order.
    pub measurements: Vec<Vec<usize>>,
    pub kinds: Vec<StabKind>,
    /// Working data devices; everything else is scratch space for the circuits.
    pub data_sites: Vec<usize>,
}

struct Table {
    occ: Vec<Vec<u32>>,
}

impl Table {
    fn get(&self, dev: usize, t: usize) -> u32 {
        self.occ[dev].get(t).copied().unwrap_or(FREE)
    }

    fn set(&mut self, dev: usize, t: usize, who: u32) {
        let row = &mut self.occ[dev];
        if row.len() <= t {
            row.resize(t + 1, FREE);
        }
        row[t] = who;
    }
}

struct Placement {
    slots: Vec<usize>,
    waits: Vec<(usize, usize)>,
}

enum Attempt {
    Placed(Placement),
    Blocked(u32),
}

struct Builder<'a> {
    circuits: &'a [StabilizerCircuit],
    table: Table,
    instances: Vec<Instance>,
    placements: Vec<Placement>,
    by_member: HashMap<usize, Vec<u32>>,
    next_start: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn try_place(&self, c: &StabilizerCircuit, start: usize) -> Attempt {
        let mut last: HashMap<usize, (usize, bool)> = HashMap::new();
        let mut slots = Vec::with_capacity(c.events.len());
        let mut waits = Vec::new();
        // Waiting shifts every later gate by the same amount.
        let mut delay = 0;
        for (ei, e) in c.events.iter().enumerate() {
            let qs = e.gate.qubits();
            let mut t = qs
                .iter()
                .map(|q| last.get(q).map_or(start, |&(s, _)| s + 1))
                .max()
                .unwrap_or(start);
            t = t.max(start + e.slot + delay);
            'search: loop {
                for &q in &qs {
                    if let Some(&(s, true)) = last.get(&q) {
                        for u in s + 1..=t {
                            let who = self.table.get(q, u);
                            if who != FREE {
                                return Attempt::Blocked(who);
                            }
                        }
                    }
                }
                for &q in &qs {
                    if self.table.get(q, t) != FREE {
                        t += 1;
                        continue 'search;
                    }
                }
                break;
            }
            for (k, &q) in qs.iter().enumerate() {
                if let Some(&(s, true)) = last.get(&q) {
                    waits.extend((s + 1..t).map(|u| (q, u)));
                }
                last.insert(q, (t, c.holds_after[ei][k]));
            }
            delay = delay.max(t - (start + e.slot));
            slots.push(t);
        }
        Attempt::Placed(Placement { slots, waits })
    }

    /// First overlapping opposite-type instance whose gathers interleave with odd parity.
    fn parity_violation(
        &self,
        c: &StabilizerCircuit,
        gathers: &[(usize, usize)],
        start: usize,
        end: usize,
    ) -> Option<u32> {
        let mut seen: Vec<u32> = Vec::new();
        for &(q, _) in gathers {
            for &j in self.by_member.get(&q).map(|v| v.as_slice()).unwrap_or(&[]) {
                if seen.contains(&j) {
                    continue;
                }
                seen.push(j);
                let other = &self.instances[j as usize];
                if other.kind == c.kind || other.end < start || other.start > end {
                    continue;
                }
                let mut x_first = 0;
                for &(q1, t1) in gathers {
                    if let Some(&(_, t2)) = other.gathers.iter().find(|g| g.0 == q1) {
                        let (tz, tx) = if c.kind == StabKind::Z {
                            (t1, t2)
                        } else {
                            (t2, t1)
                        };
                        if tx < tz {
                            x_first += 1;
                        }
                    }
                }
                if x_first % 2 == 1 {
                    return Some(j);
                }
            }
        }
        None
    }

    /// Places the next instance of circuit `ci`; returns its ceiling (last slot + 1).
    fn schedule(&mut self, ci: usize) -> Result<usize> {
        let c = &self.circuits[ci];
        let mut start = self.next_start[ci];
        for _ in 0..RETRY_CAP {
            match self.try_place(c, start) {
                Attempt::Blocked(who) => start = start.max(self.instances[who as usize].end + 1),
                Attempt::Placed(p) => {
                    let first = *p.slots.iter().min().expect("non-empty circuit");
                    let end = *p.slots.iter().max().expect("non-empty circuit");
                    let gathers: Vec<(usize, usize)> = c
                        .gathers
                        .iter()
                        .map(|&(q, s)| {
                            let ei = c
                                .events
                                .iter()
                                .position(|e| e.slot == s && e.gate.qubits().contains(&q))
                                .expect("gather event exists");
                            (q, p.slots[ei])
                        })
                        .collect();
                    if let Some(j) = self.parity_violation(c, &gathers, first, end) {
                        start = start.max(self.instances[j as usize].end + 1);
                        continue;
                    }
                    let id = self.instances.len() as u32;
                    for (e, &t) in c.events.iter().zip(&p.slots) {
                        for q in e.gate.qubits() {
                            self.table.set(q, t, id);
                        }
                    }
                    for &(q, u) in &p.waits {
                        self.table.set(q, u, id);
                    }
                    for &(q, _) in &gathers {
                        self.by_member.entry(q).or_default().push(id);
                    }
                    let mi = c
                        .events
                        .iter()
                        .rposition(|e| matches!(e.gate, CliffordGate::MeasureZ(_)))
                        .expect("measure");
                    self.instances.push(Instance {
                        stabilizer_id: c.stabilizer_id,
                        kind: c.kind,
                        start: first,
                        end,
                        measure_slot: p.slots[mi],
                        measure_site: c.measure_site(),
                        gathers,
                    });
                    self.placements.push(p);
                    self.next_start[ci] = end + 1;
                    return Ok(end + 1);
                }
            }
        }
        Err(Error::RetryCap(RETRY_CAP))
    }
}

/// Deepest-first scheduling until the deepest stabilizer passes `max_steps`; instances
/// that do not finish inside `max_steps` are dropped.
pub fn schedule(
    layout: &StabilizerLayout,
    circuits: &[StabilizerCircuit],
    max_steps: usize,
) -> Result<WholeCircuit> {
    let n = layout.n_sites();
    let n_stabs = layout.stabilizers.len();
    if circuits.is_empty() {
        return Err(Error::InvalidParameter("no circuits to schedule".into()));
    }
    let mut order: Vec<usize> = (0..circuits.len()).collect();
    let key = |i: usize| {
        let s = &layout.stabilizers[circuits[i].stabilizer_id];
        let (r, c) = layout.lattice.coords(s.min_site());
        (std::cmp::Reverse(circuits[i].depth), r, c, s.kind)
    };
    order.sort_by_key(|&i| key(i));
    let mut b = Builder {
        circuits,
        table: Table {
            occ: vec![Vec::new(); n],
        },
        instances: Vec::new(),
        placements: Vec::new(),
        by_member: HashMap::new(),
        next_start: vec![0; circuits.len()],
    };
    let deepest = order[0];
    let rest = &order[1..];
    let mut ceil = vec![0usize; circuits.len()];
    let mut whole_ceil = 0;
    while whole_ceil <= max_steps {
        whole_ceil = b.schedule(deepest)?;
        ceil[deepest] = whole_ceil;
        for &s in rest {
            ceil[s] = b.schedule(s)?;
        }
        while rest.iter().any(|&s| ceil[s] <= whole_ceil) {
            for &s in rest {
                if ceil[s] <= whole_ceil {
                    ceil[s] = b.schedule(s)?;
                }
            }
        }
    }

    let mut events = Vec::new();
    let mut instances = Vec::new();
    for (inst, p) in b.instances.iter().zip(&b.placements) {
        if inst.end >= max_steps {
            continue;
        }
        let idx = instances.len();
        let c = circuits
            .iter()
            .find(|c| c.stabilizer_id == inst.stabilizer_id)
            .expect("circuit");
        for (e, &t) in c.events.iter().zip(&p.slots) {
            events.push(ScheduledEvent {
                slot: t,
                gate: e.gate,
                stabilizer_id: inst.stabilizer_id,
                instance: idx,
                wait: false,
            });
        }
        for &(q, u) in &p.waits {
            events.push(ScheduledEvent {
                slot: u,
                gate: CliffordGate::Identity(q),
                stabilizer_id: inst.stabilizer_id,
                instance: idx,
                wait: true,
            });
        }
        instances.push(inst.clone());
    }
    // Renumber instances by measurement time.
    let mut perm: Vec<usize> = (0..instances.len()).collect();
    perm.sort_by_key(|&i| (instances[i].measure_slot, instances[i].stabilizer_id));
    let mut new_id = vec![0; instances.len()];
    for (k, &i) in perm.iter().enumerate() {
        new_id[i] = k;
    }
    for e in events.iter_mut() {
        e.instance = new_id[e.instance];
    }
    let instances: Vec<Instance> = perm.iter().map(|&i| instances[i].clone()).collect();
    events.sort_by_key(|e| (e.slot, e.instance, e.wait));

    let mut measurements = vec![Vec::new(); n_stabs];
    for inst in &instances {
        measurements[inst.stabilizer_id].push(inst.measure_slot);
    }
    if layout
        .stabilizers
        .iter()
        .find(|s| measurements[s.id].is_empty()).is_some()
    {
        return Err(Error::Horizon(max_steps));
    }
    Ok(WholeCircuit {
        n_sites: n,
        horizon: max_steps,
        events,
        instances,
        measurements,
        kinds: layout.stabilizers.iter().map(|s| s.kind).collect(),
        data_sites: layout.lattice.working_data_sites(),
    })
}

/// Default horizon: room for `d + 2` error-correction cycles of the given estimated length.
pub fn default_horizon(d: usize, est_cycle: usize) -> usize {
    (d + 2) * est_cycle.max(1)
}

/// Mean interval between consecutive measurements of one stabilizer.
pub fn cycle_of(w: &WholeCircuit, stabilizer_id: usize) -> Result<f64> {
    let m = w.measurements.get(stabilizer_id).ok_or(Error::Index {
        index: stabilizer_id,
        n: w.measurements.len(),
    })?;
    if m.len() < 2 {
        return Err(Error::InsufficientHorizon(stabilizer_id));
    }
    Ok((m[m.len() - 1] - m[0]) as f64 / (m.len() - 1) as f64)
}

/// Round boundaries: each closes one slot after every stabilizer has been measured
/// at least once since the previous boundary.
pub fn ec_boundaries(w: &WholeCircuit) -> Vec<usize> {
    let mut out = vec![0];
    loop {
        let prev = *out.last().unwrap();
        let mut next = 0;
        for m in &w.measurements {
            match m.iter().find(|&&t| t >= prev) {
                Some(&t) => next = next.max(t + 1),
                None => return out,
            }
        }
        out.push(next);
    }
}

/// Length of the first error-correction cycle.
pub fn error_correction_cycle(w: &WholeCircuit) -> usize {
    let b = ec_boundaries(w);
    if b.len() >= 2 {
        b[1] - b[0]
    } else {
        w.horizon
    }
}

/// Average error-correction cycle over all complete cycles.
pub fn mean_ec_cycle(w: &WholeCircuit) -> f64 {
    let b = ec_boundaries(w);
    if b.len() < 2 {
        return w.horizon as f64;
    }
    (b[b.len() - 1] - b[0]) as f64 / (b.len() - 1) as f64
}

/// Z measurements per step.
pub fn z_throughput(w: &WholeCircuit) -> f64 {
    let z = w.instances.iter().filter(|i| i.kind == StabKind::Z).count();
    z as f64 / w.horizon as f64
}

/// Replays every instance's measurement back to the start of the circuit and checks
/// that it measures exactly the declared stabilizer, with no dependence on other
/// outcomes and no X component reaching an initialisation.
pub fn verify_whole_circuit(w: &WholeCircuit, layout: &StabilizerLayout) -> Result<()> {
    let ops: Vec<_> = layout
        .stabilizers
        .iter()
        .map(|s| s.operator(w.n_sites))
        .collect();
    let mut by_slot: Vec<Vec<&ScheduledEvent>> = vec![Vec::new(); w.horizon];
    for e in &w.events {
        if !e.wait {
            by_slot[e.slot].push(e);
        }
    }
    for (k, inst) in w.instances.iter().enumerate() {
        // device -> (x, z)
        let mut p: HashMap<usize, (bool, bool)> =
            HashMap::from([(inst.measure_site, (false, true))]);
        let bad = |what: &str| {
            Error::InvalidGate(format!(
                "instance {k} of stabilizer {}: {what}",
                inst.stabilizer_id
            ))
        };
        for t in (0..=inst.measure_slot).rev() {
            for e in by_slot[t].iter().rev() {
                if t == inst.measure_slot && e.instance == k {
                    continue;
                }
                match e.gate {
                    CliffordGate::InitZ(q) => {
                        if let Some((x, _)) = p.remove(&q) {
                            if x {
                                return Err(bad("X component reaches an initialisation"));
                            }
                        }
                    }
                    CliffordGate::MeasureZ(q) => {
                        if let Some(&(x, z)) = p.get(&q) {
                            if x {
                                return Err(bad("anticommutes with an earlier measurement"));
                            }
                            if z {
                                return Err(bad("depends on an earlier outcome"));
                            }
                        }
                    }
                    CliffordGate::H(q) => {
                        if let Some(v) = p.get_mut(&q) {
                            *v = (v.1, v.0);
                        }
                    }
                    CliffordGate::Swap(a, b2) => {
                        let va = p.remove(&a);
                        let vb = p.remove(&b2);
                        if let Some(v) = va {
                            p.insert(b2, v);
                        }
                        if let Some(v) = vb {
                            p.insert(a, v);
                        }
                    }
                    CliffordGate::Cnot(c, tq) => {
                        let (xc, zc) = p.get(&c).copied().unwrap_or((false, false));
                        let (xt, zt) = p.get(&tq).copied().unwrap_or((false, false));
                        let nc = (xc, zc ^ zt);
                        let nt = (xt ^ xc, zt);
                        p.insert(c, nc);
                        p.insert(tq, nt);
                    }
                    CliffordGate::Identity(_) => {}
                }
            }
            p.retain(|_, v| v.0 || v.1);
        }
        let want = &ops[inst.stabilizer_id];
        for (&q, &(x, z)) in &p {
            let wx = want.x_bits().get(q);
            let wz = want.z_bits().get(q);
            if (x, z) != (wx, wz) {
                return Err(bad(&format!("measured operator differs at site {q}")));
            }
        }
        let support = want.x_bits().count_ones().max(want.z_bits().count_ones());
        if p.len() != support {
            return Err(bad("measured operator misses declared support"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WholeRecord {
    pub slot: usize,
    pub gate: String,
    pub qubits: Vec<usize>,
    pub stabilizer_id: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WholeDump {
    pub horizon: usize,
    pub events: Vec<WholeRecord>,
}

pub fn dump(w: &WholeCircuit, include_waits: bool) -> WholeDump {
    WholeDump {
        horizon: w.horizon,
        events: w
            .events
            .iter()
            .filter(|e| include_waits || !e.wait)
            .map(|e| WholeRecord {
                slot: e.slot,
                gate: gate_name(&e.gate).into(),
                qubits: e.gate.qubits(),
                stabilizer_id: e.stabilizer_id,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::compose_all;
    use crate::lattice::{reconfigure, Lattice};

    fn build(l: &Lattice, steps: usize) -> (StabilizerLayout, WholeCircuit) {
        let lay = reconfigure(l);
        let cs = compose_all(&lay).unwrap();
        let w = schedule(&lay, &cs, steps).unwrap();
        (lay, w)
    }

    #[test]
    fn perfect_lattice_cycle_is_eight() {
        let (lay, w) = build(&Lattice::generate_perfect(5).unwrap(), 120);
        assert_eq!(error_correction_cycle(&w), 8);
        let m = mean_ec_cycle(&w);
        assert!((7.9..=8.2).contains(&m), "{m}");
        verify_whole_circuit(&w, &lay).unwrap();
    }

    #[test]
    fn single_fault_schedule_is_valid() {
        let l = Lattice::generate_perfect(5).unwrap();
        let (lay, w) = build(&l.with_faults(&[l.center()]), 200);
        verify_whole_circuit(&w, &lay).unwrap();
        let m = mean_ec_cycle(&w);
        assert!(m > 8.0, "{m}");
    }

    #[test]
    fn single_stabilizer_repeats_back_to_back() {
        let lay = reconfigure(&Lattice::generate_perfect(3).unwrap());
        let cs = compose_all(&lay).unwrap();
        let one = vec![cs[0].clone()];
        let mut solo = lay.clone();
        solo.stabilizers.truncate(1);
        let w = schedule(&solo, &one, 30).unwrap();
        assert_eq!(cycle_of(&w, 0).unwrap(), cs[0].depth as f64);
        assert_eq!(error_correction_cycle(&w), cs[0].depth);
    }

    #[test]
    fn too_short_horizon_errors() {
        let lay = reconfigure(&Lattice::generate_perfect(3).unwrap());
        let cs = compose_all(&lay).unwrap();
        assert!(matches!(schedule(&lay, &cs, 3), Err(Error::Horizon(3))));
    }
}
