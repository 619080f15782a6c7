//! Circuit-level Pauli noise on a scheduled whole circuit.
//!
//! Two equivalent samplers share one draw order: [`run_trial`] sweeps a Pauli frame through
//! the gates, while [`FaultTable::sample`] looks up each drawn fault's precomputed effect.
//! Given the same rng they return identical trials.

use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::StabKind;
use crate::pauli::{Bits, CliffordGate, Pauli, PauliString};
use crate::scheduler::{ScheduledEvent, WholeCircuit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Gate, preparation and readout errors; waiting devices are noiseless.
    Lattice,
    /// As `Lattice`, plus a memory error on every working device left idle in a slot.
    Purification,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub p: f64,
    pub idle: bool,
}

impl ErrorModel {
    pub fn new(p: f64, idle: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "error probability {p} outside [0, 1]"
            )));
        }
        Ok(ErrorModel { p, idle })
    }

    pub fn lattice(p: f64) -> Result<Self> {
        Self::new(p, false)
    }

    pub fn preset(preset: Preset, p: f64) -> Result<Self> {
        Self::new(p, preset == Preset::Purification)
    }

    /// Channel attached to a scheduled gate, if any.
    pub fn channel(&self, gate: &CliffordGate, wait: bool) -> Option<Channel> {
        match gate {
            CliffordGate::InitZ(_) => Some(Channel::InitFlip),
            CliffordGate::MeasureZ(_) => Some(Channel::ReadoutFlip),
            CliffordGate::Cnot(..) | CliffordGate::Swap(..) => Some(Channel::TwoQubit),
            CliffordGate::H(_) => Some(Channel::OneQubit),
            CliffordGate::Identity(_) => (wait && self.idle).then_some(Channel::OneQubit),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    OneQubit,
    TwoQubit,
    InitFlip,
    ReadoutFlip,
}

impl Channel {
    /// Number of non-identity outcomes.
    pub fn outcomes(self) -> usize {
        match self {
            Channel::OneQubit => 3,
            Channel::TwoQubit => 15,
            Channel::InitFlip | Channel::ReadoutFlip => 1,
        }
    }

    /// Probability of each individual non-identity outcome.
    pub fn outcome_prob(self, p: f64) -> f64 {
        p / self.outcomes() as f64
    }

    /// Draws one outcome: 0 is no error, `1..=outcomes()` index the Paulis.
    pub fn draw<R: Rng + ?Sized>(self, p: f64, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        if u >= p {
            return 0;
        }
        let k = self.outcomes();
        ((u / p * k as f64) as usize).min(k - 1) + 1
    }

    /// Pauli on each gate qubit for an outcome index.
    pub fn paulis(self, outcome: usize) -> [Pauli; 2] {
        const ORDER: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        match self {
            _ if outcome == 0 => [Pauli::I, Pauli::I],
            Channel::OneQubit => [ORDER[outcome], Pauli::I],
            Channel::TwoQubit => [ORDER[outcome / 4], ORDER[outcome % 4]],
            Channel::InitFlip | Channel::ReadoutFlip => [Pauli::X, Pauli::I],
        }
    }
}

/// Samples the error following `gate` as a Pauli string on the gate's own qubits.
pub fn sample_channel<R: Rng + ?Sized>(
    gate: &CliffordGate,
    m: &ErrorModel,
    rng: &mut R,
) -> PauliString {
    let n = gate.qubits().len();
    let Some(ch) = m.channel(gate, true) else {
        return PauliString::identity(n);
    };
    let ps = ch.paulis(ch.draw(m.p, rng));
    let terms: Vec<(usize, Pauli)> = (0..n).map(|i| (i, ps[i])).collect();
    PauliString::from_sparse(n, &terms)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialState {
    /// Per instance (in `WholeCircuit::instances` order), true for a −1 outcome.
    pub outcomes: Vec<bool>,
    /// Error left on the lattice after the last slot.
    pub residual: PauliString,
}

impl TrialState {
    pub fn noiseless(w: &WholeCircuit) -> Self {
        TrialState {
            outcomes: vec![false; w.instances.len()],
            residual: PauliString::identity(w.n_sites),
        }
    }

    /// Per stabilizer, the ordered (slot, is_minus) measurement record.
    pub fn syndrome_log(&self, w: &WholeCircuit) -> Vec<Vec<(usize, bool)>> {
        let mut log = vec![Vec::new(); w.measurements.len()];
        for (inst, &o) in w.instances.iter().zip(&self.outcomes) {
            log[inst.stabilizer_id].push((inst.measure_slot, o));
        }
        log
    }
}

/// Copy of `w` with an explicit wait on every working device and slot without a gate,
/// so that a model with `idle` set charges memory errors there.
pub fn fill_idle(w: &WholeCircuit, working: &[bool]) -> WholeCircuit {
    let mut busy = vec![vec![false; w.horizon]; w.n_sites];
    for e in &w.events {
        for q in e.gate.qubits() {
            busy[q][e.slot] = true;
        }
    }
    let mut out = w.clone();
    for (q, row) in busy.iter().enumerate() {
        if !working[q] {
            continue;
        }
        for (t, &b) in row.iter().enumerate() {
            if !b {
                out.events.push(ScheduledEvent {
                    slot: t,
                    gate: CliffordGate::Identity(q),
                    stabilizer_id: usize::MAX,
                    instance: usize::MAX,
                    wait: true,
                });
            }
        }
    }
    out.events.sort_by_key(|e| e.slot);
    out
}

/// An error placed by hand just before the event with the given index executes.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub before_event: usize,
    pub site: usize,
    pub pauli: Pauli,
}

/// Frame simulation of one trial.
pub fn run_trial<R: Rng + ?Sized>(w: &WholeCircuit, m: &ErrorModel, rng: &mut R) -> TrialState {
    run_trial_injected(w, m, rng, &[])
}

pub fn run_trial_injected<R: Rng + ?Sized>(
    w: &WholeCircuit,
    m: &ErrorModel,
    rng: &mut R,
    injections: &[Injection],
) -> TrialState {
    let n = w.n_sites;
    let mut fx = vec![false; n];
    let mut fz = vec![false; n];
    let mut outcomes = vec![false; w.instances.len()];
    let mut inj = injections.to_vec();
    inj.sort_by_key(|i| i.before_event);
    let mut next_inj = 0;
    for (idx, e) in w.events.iter().enumerate() {
        while next_inj < inj.len() && inj[next_inj].before_event <= idx {
            let (x, z) = inj[next_inj].pauli.bits();
            fx[inj[next_inj].site] ^= x;
            fz[inj[next_inj].site] ^= z;
            next_inj += 1;
        }
        let ch = m.channel(&e.gate, e.wait);
        let outcome = ch.map_or(0, |c| c.draw(m.p, rng));
        let qs = e.gate.qubits();
        match e.gate {
            CliffordGate::InitZ(q) => {
                fx[q] = outcome != 0;
                fz[q] = false;
                continue;
            }
            CliffordGate::MeasureZ(q) => {
                outcomes[e.instance] = fx[q] ^ (outcome != 0);
                continue;
            }
            CliffordGate::H(q) => std::mem::swap(&mut fx[q], &mut fz[q]),
            CliffordGate::Cnot(c, t) => {
                fx[t] ^= fx[c];
                fz[c] ^= fz[t];
            }
            CliffordGate::Swap(a, b) => {
                fx.swap(a, b);
                fz.swap(a, b);
            }
            CliffordGate::Identity(_) => {}
        }
        if let Some(c) = ch {
            let ps = c.paulis(outcome);
            for (i, &q) in qs.iter().enumerate() {
                let (x, z) = ps[i].bits();
                fx[q] ^= x;
                fz[q] ^= z;
            }
        }
    }
    for i in &inj[next_inj..] {
        let (x, z) = i.pauli.bits();
        fx[i.site] ^= x;
        fz[i.site] ^= z;
    }
    // Only data devices carry state past the last slot; ancillas are never read again.
    let mut data = vec![false; n];
    for &q in &w.data_sites {
        data[q] = true;
    }
    let x = Bits::from_indices(n, &(0..n).filter(|&q| fx[q] && data[q]).collect::<Vec<_>>());
    let z = Bits::from_indices(n, &(0..n).filter(|&q| fz[q] && data[q]).collect::<Vec<_>>());
    TrialState {
        outcomes,
        residual: PauliString::from_bits(x, z, 0).expect("equal lengths"),
    }
}

/// What one fault does: which outcomes it flips and what it leaves on the data at the end.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub outcomes: Vec<u32>,
    pub residual_x: Vec<u32>,
    pub residual_z: Vec<u32>,
}

impl Effect {
    pub fn is_trivial(&self) -> bool {
        self.outcomes.is_empty() && self.residual_x.is_empty() && self.residual_z.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Location {
    pub event: usize,
    pub channel: Channel,
    /// Indexed by outcome − 1.
    pub effects: Vec<Effect>,
}

/// Effect of every possible single fault, obtained by propagating each outcome and each
/// final single-qubit data observable backwards through the circuit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaultTable {
    pub n_sites: usize,
    pub n_instances: usize,
    pub model: ErrorModel,
    pub locations: Vec<Location>,
    /// Event index -> location index, for events that carry a channel.
    pub location_of: HashMap<usize, usize>,
}

/// Sensitivity of one observable at one event: (x, z) on the event's first and second qubit.
type Mask = u8;

fn mask_of(a: (bool, bool), b: (bool, bool)) -> Mask {
    (a.0 as u8) | (a.1 as u8) << 1 | (b.0 as u8) << 2 | (b.1 as u8) << 3
}

fn anticommutes(mask: Mask, ps: [Pauli; 2]) -> bool {
    let mut odd = false;
    for (i, p) in ps.iter().enumerate() {
        let (ex, ez) = p.bits();
        let ox = mask >> (2 * i) & 1 == 1;
        let oz = mask >> (2 * i + 1) & 1 == 1;
        odd ^= (ex && oz) ^ (ez && ox);
    }
    odd
}

impl FaultTable {
    pub fn build(w: &WholeCircuit, m: &ErrorModel, data_sites: &[usize]) -> Self {
        let n_inst = w.instances.len();
        let mut per_device: Vec<Vec<usize>> = vec![Vec::new(); w.n_sites];
        for (i, e) in w.events.iter().enumerate() {
            for q in e.gate.qubits() {
                per_device[q].push(i);
            }
        }
        let mut measure_event = vec![usize::MAX; n_inst];
        for (i, e) in w.events.iter().enumerate() {
            if let CliffordGate::MeasureZ(_) = e.gate {
                measure_event[e.instance] = i;
            }
        }
        // Observables: every outcome, then Z and X on each data site after the last slot.
        let mut sens: Vec<Vec<(u32, Mask)>> = vec![Vec::new(); w.events.len()];
        let nd = data_sites.len();
        for obs in 0..n_inst + 2 * nd {
            let (start, site, pauli) = if obs < n_inst {
                (
                    measure_event[obs],
                    w.instances[obs].measure_site,
                    (false, true),
                )
            } else if obs < n_inst + nd {
                (w.events.len(), data_sites[obs - n_inst], (false, true))
            } else {
                (w.events.len(), data_sites[obs - n_inst - nd], (true, false))
            };
            back_propagate(w, &per_device, start, site, pauli, |e, mask| {
                sens[e].push((obs as u32, mask))
            });
        }
        let mut locations = Vec::new();
        let mut location_of = HashMap::new();
        for (i, e) in w.events.iter().enumerate() {
            let Some(ch) = m.channel(&e.gate, e.wait) else {
                continue;
            };
            let effects = (1..=ch.outcomes())
                .map(|k| {
                    let mut eff = Effect::default();
                    if ch == Channel::ReadoutFlip {
                        eff.outcomes.push(e.instance as u32);
                        return eff;
                    }
                    let ps = ch.paulis(k);
                    for &(obs, mask) in &sens[i] {
                        if !anticommutes(mask, ps) {
                            continue;
                        }
                        let obs = obs as usize;
                        if obs < n_inst {
                            eff.outcomes.push(obs as u32);
                        } else if obs < n_inst + nd {
                            eff.residual_x.push(data_sites[obs - n_inst] as u32);
                        } else {
                            eff.residual_z.push(data_sites[obs - n_inst - nd] as u32);
                        }
                    }
                    eff.outcomes.sort_unstable();
                    eff.residual_x.sort_unstable();
                    eff.residual_z.sort_unstable();
                    eff
                })
                .collect();
            location_of.insert(i, locations.len());
            locations.push(Location {
                event: i,
                channel: ch,
                effects,
            });
        }
        FaultTable {
            n_sites: w.n_sites,
            n_instances: n_inst,
            model: *m,
            locations,
            location_of,
        }
    }

    /// Draws one trial; consumes the rng exactly as [`run_trial`] does.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialState {
        let mut outcomes = vec![false; self.n_instances];
        let mut x = Bits::zeros(self.n_sites);
        let mut z = Bits::zeros(self.n_sites);
        for loc in &self.locations {
            let k = loc.channel.draw(self.model.p, rng);
            if k == 0 {
                continue;
            }
            let eff = &loc.effects[k - 1];
            for &o in &eff.outcomes {
                outcomes[o as usize] ^= true;
            }
            for &q in &eff.residual_x {
                x.flip(q as usize);
            }
            for &q in &eff.residual_z {
                z.flip(q as usize);
            }
        }
        TrialState {
            outcomes,
            residual: PauliString::from_bits(x, z, 0).expect("equal lengths"),
        }
    }
}

/// Walks the Heisenberg-picture operator of one observable backwards from event `start`
/// (exclusive), reporting its (x, z) content on the qubits of each event it meets.
fn back_propagate(
    w: &WholeCircuit,
    per_device: &[Vec<usize>],
    start: usize,
    site: usize,
    pauli: (bool, bool),
    mut record: impl FnMut(usize, Mask),
) {
    let prev_on = |dev: usize, before: usize| -> Option<usize> {
        let v = &per_device[dev];
        let pos = v.partition_point(|&e| e < before);
        pos.checked_sub(1).map(|p| v[p])
    };
    let mut support: HashMap<usize, (bool, bool)> = HashMap::from([(site, pauli)]);
    let mut heap = BinaryHeap::new();
    if let Some(e) = prev_on(site, start) {
        heap.push(e);
    }
    let mut last = usize::MAX;
    while let Some(e) = heap.pop() {
        if e == last {
            continue;
        }
        last = e;
        let ev = &w.events[e];
        let qs = ev.gate.qubits();
        let get = |s: &HashMap<usize, (bool, bool)>, q: usize| {
            s.get(&q).copied().unwrap_or((false, false))
        };
        let a = get(&support, qs[0]);
        let b = if qs.len() > 1 {
            get(&support, qs[1])
        } else {
            (false, false)
        };
        let mask = mask_of(a, b);
        if mask != 0 && !matches!(ev.gate, CliffordGate::MeasureZ(_)) {
            record(e, mask);
        }
        match ev.gate {
            CliffordGate::InitZ(q) => {
                support.remove(&q);
            }
            CliffordGate::H(q) => {
                support.insert(q, (a.1, a.0));
            }
            CliffordGate::Cnot(c, t) => {
                support.insert(c, (a.0, a.1 ^ b.1));
                support.insert(t, (b.0 ^ a.0, b.1));
            }
            CliffordGate::Swap(p, q) => {
                support.insert(p, b);
                support.insert(q, a);
            }
            CliffordGate::MeasureZ(_) | CliffordGate::Identity(_) => {}
        }
        for &q in &qs {
            match support.get(&q) {
                Some(&(false, false)) => {
                    support.remove(&q);
                }
                Some(_) => {
                    if let Some(p) = prev_on(q, e) {
                        heap.push(p);
                    }
                }
                None => {}
            }
        }
    }
}

/// Stabilizer kind measured by each instance.
pub fn instance_kinds(w: &WholeCircuit) -> Vec<StabKind> {
    w.instances.iter().map(|i| i.kind).collect()
}
