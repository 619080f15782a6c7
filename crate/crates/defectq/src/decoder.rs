//! Matching decoder over the asynchronous detection graph.
//!
//! Detectors compare consecutive outcomes of one stabilizer; a final detector per
//! stabilizer compares its last outcome with a noiseless readout of the data at the end.
//! Z-type detectors see X errors and X-type detectors see Z errors; the two graphs are
//! decoded independently.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LogicalOps, StabKind, StabilizerLayout};
use crate::noise::{Effect, FaultTable, TrialState};
use crate::pauli::{Bits, PauliFrame};
use crate::scheduler::{ec_boundaries, WholeCircuit};

/// Endpoint index standing for the code boundary.
pub const BOUNDARY: usize = usize::MAX;

/// Edge probability used for weights when the model itself is noiseless.
const FALLBACK_P: f64 = 1e-3;
const MIN_P: f64 = 1e-12;
const SCALE: f64 = 1000.0;
const EXHAUSTIVE_LIMIT: usize = 12;
const HYPER_SEARCH_LIMIT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub stabilizer_id: usize,
    /// Measurement index; equal to the number of measurements for the final detector.
    pub index: usize,
    pub slot: usize,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestEdge {
    pub a: usize,
    /// Second endpoint or [`BOUNDARY`].
    pub b: usize,
    pub p: f64,
    pub weight: f64,
    /// Data sites whose error this edge explains.
    pub correction: Vec<u32>,
    /// Whether that error flips the logical judged by this graph.
    pub logical: bool,
}

#[derive(Clone, Debug)]
struct Sssp {
    dist: Vec<f64>,
    via: Vec<u32>,
}

#[derive(Debug)]
pub struct DetectorGraph {
    pub kind: StabKind,
    pub detectors: Vec<Detector>,
    pub edges: Vec<NestEdge>,
    adj: Vec<Vec<u32>>,
    cache: RwLock<HashMap<usize, Arc<Sssp>>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64, usize);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Dist {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

pub fn weight_of(p: f64) -> f64 {
    let p = p.clamp(MIN_P, 0.5);
    ((1.0 - p) / p).ln().max(0.0)
}

/// Probability that exactly one of two independent mechanisms fires.
pub fn merge_prob(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

impl DetectorGraph {
    pub fn new(kind: StabKind, detectors: Vec<Detector>, edges: Vec<NestEdge>) -> Self {
        let n = detectors.len();
        let mut adj = vec![Vec::new(); n + 1];
        for (i, e) in edges.iter().enumerate() {
            adj[e.a].push(i as u32);
            let b = if e.b == BOUNDARY { n } else { e.b };
            adj[b].push(i as u32);
        }
        DetectorGraph {
            kind,
            detectors,
            edges,
            adj,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn n(&self) -> usize {
        self.detectors.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    fn node(&self, v: usize) -> usize {
        if v == BOUNDARY {
            self.n()
        } else {
            v
        }
    }

    fn other(&self, e: &NestEdge, from: usize) -> usize {
        let b = self.node(e.b);
        if e.a == from {
            b
        } else {
            e.a
        }
    }

    fn sssp(&self, src: usize) -> Arc<Sssp> {
        if let Some(s) = self.cache.read().expect("cache lock").get(&src) {
            return s.clone();
        }
        let n = self.n() + 1;
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![u32::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Dist(0.0, src));
        while let Some(Dist(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            // Paths do not pass through the boundary.
            if u == self.n() && u != src {
                continue;
            }
            for &ei in &self.adj[u] {
                let e = &self.edges[ei as usize];
                let v = self.other(e, u);
                let nd = d + e.weight;
                if nd < dist[v] {
                    dist[v] = nd;
                    via[v] = ei;
                    heap.push(Dist(nd, v));
                }
            }
        }
        let s = Arc::new(Sssp { dist, via });
        self.cache
            .write()
            .expect("cache lock")
            .insert(src, s.clone());
        s
    }

    /// Shortest distance between detectors (or to the boundary).
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.sssp(a).dist[self.node(b)]
    }

    /// XOR of edge corrections along the shortest path from `a` to `b`.
    pub fn path_correction(&self, a: usize, b: usize, n_sites: usize) -> (Bits, bool) {
        let s = self.sssp(a);
        let mut bits = Bits::zeros(n_sites);
        let mut logical = false;
        let mut cur = self.node(b);
        while cur != a {
            let ei = s.via[cur];
            assert!(ei != u32::MAX, "no path");
            let e = &self.edges[ei as usize];
            for &q in &e.correction {
                bits.flip(q as usize);
            }
            logical ^= e.logical;
            cur = self.other(e, cur);
        }
        (bits, logical)
    }

    /// Minimum-weight matching of the given detectors, each optionally to the boundary.
    pub fn mwpm(&self, events: &[usize]) -> Result<Matching> {
        let d = |i: usize, j: usize| {
            Some(self.distance(events[i], events[j])).filter(|w| w.is_finite())
        };
        let b = |i: usize| Some(self.distance(events[i], BOUNDARY)).filter(|w| w.is_finite());
        min_weight_matching(events.len(), &d, &b).map_err(|i| match i {
            Error::Disconnected(k) => Error::Disconnected(events[k]),
            e => e,
        })
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            kind: self.kind,
            vertices: self
                .detectors
                .iter()
                .map(|d| (d.stabilizer_id, d.index))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDump {
                    a: e.a,
                    b: (e.b != BOUNDARY).then_some(e.b),
                    p: e.p,
                    weight: e.weight,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Event index pairs; `None` pairs an event with the boundary.
    pub pairs: Vec<(usize, Option<usize>)>,
    pub weight: f64,
}

fn scaled(w: f64) -> i64 {
    // Even integers keep the blossom duals integral.
    2 * (w * SCALE).round() as i64
}

/// Minimum-weight perfect matching where each of `k` events pairs with another event or
/// with its own boundary copy; boundary copies pair among themselves for free.
pub fn min_weight_matching(
    k: usize,
    pair: &dyn Fn(usize, usize) -> Option<f64>,
    boundary: &dyn Fn(usize) -> Option<f64>,
) -> Result<Matching> {
    if k == 0 {
        return Ok(Matching {
            pairs: Vec::new(),
            weight: 0.0,
        });
    }
    let mut raw: Vec<(usize, usize, i64)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if let Some(w) = pair(i, j) {
                raw.push((i, j, scaled(w)));
            }
        }
        if let Some(w) = boundary(i) {
            raw.push((i, k + i, scaled(w)));
        }
    }
    for i in 0..k {
        if !raw.iter().any(|&(a, b, _)| a == i || b == i) {
            return Err(Error::Disconnected(i));
        }
    }
    let big = raw.iter().map(|e| e.2).max().unwrap_or(0) + 2;
    if big.saturating_mul(k as i64) > i32::MAX as i64 / 2 {
        return Err(Error::InvalidParameter("matching weights overflow".into()));
    }
    let mut edges: Vec<(usize, usize, i32)> = raw
        .iter()
        .map(|&(a, b, w)| (a, b, (big - w) as i32))
        .collect();
    for i in 0..k {
        for j in i + 1..k {
            edges.push((k + i, k + j, big as i32));
        }
    }
    let mate = mwmatching::Matching::new(edges).max_cardinality().solve();
    let mut pairs = Vec::new();
    let mut weight = 0.0;
    for i in 0..k {
        let m = *mate.get(i).unwrap_or(&mwmatching::SENTINEL);
        if m == mwmatching::SENTINEL {
            return Err(Error::Disconnected(i));
        }
        if m >= k {
            pairs.push((i, None));
            weight += boundary(i).expect("matched edge exists");
        } else if i < m {
            pairs.push((i, Some(m)));
            weight += pair(i, m).expect("matched edge exists");
        }
    }
    Ok(Matching { pairs, weight })
}

/// Exhaustive minimum matching by subset dynamic programming; for cross-checks.
pub fn exhaustive_matching(
    k: usize,
    pair: &dyn Fn(usize, usize) -> Option<f64>,
    boundary: &dyn Fn(usize) -> Option<f64>,
) -> Option<f64> {
    assert!(
        k <= EXHAUSTIVE_LIMIT,
        "exhaustive matching is limited to {EXHAUSTIVE_LIMIT} events"
    );
    let full = (1usize << k) - 1;
    let mut best = vec![f64::INFINITY; 1 << k];
    best[0] = 0.0;
    for mask in 1..=full {
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut b = boundary(i).map_or(f64::INFINITY, |w| w + best[rest]);
        for j in i + 1..k {
            if rest >> j & 1 == 1 {
                if let Some(w) = pair(i, j) {
                    b = b.min(w + best[rest & !(1 << j)]);
                }
            }
        }
        best[mask] = b;
    }
    best[full].is_finite().then_some(best[full])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDump {
    pub a: usize,
    pub b: Option<usize>,
    pub p: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDump {
    pub kind: StabKind,
    pub vertices: Vec<(usize, usize)>,
    pub edges: Vec<EdgeDump>,
}

/// A fault that lit more than two detectors of one graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperRecord {
    pub event: usize,
    pub outcome: usize,
    pub kind: StabKind,
    pub detectors: Vec<usize>,
    /// True when split into existing edges; false when paired off in time order.
    pub matched_existing: bool,
}

pub struct Nest {
    pub z: DetectorGraph,
    pub x: DetectorGraph,
    /// Retained rounds per matching window.
    pub window: usize,
    pub n_rounds: usize,
    pub n_sites: usize,
    pub hyperedges: Vec<HyperRecord>,
    /// Single faults that flip a logical without lighting any detector.
    pub silent_logical: usize,
    /// Per stabilizer, the vertex id of its first detector in its kind's graph.
    offset: Vec<usize>,
    kinds: Vec<StabKind>,
    counts: Vec<usize>,
    members: Vec<Vec<usize>>,
    instance_index: Vec<(usize, usize)>,
    logical: LogicalOps,
}

#[derive(Default)]
struct EdgeAcc {
    p: f64,
    best: f64,
    correction: Vec<u32>,
    logical: bool,
}

/// Z graph first, X graph second.
fn slot_of(kind: StabKind) -> usize {
    match kind {
        StabKind::Z => 0,
        StabKind::X => 1,
    }
}

fn toggle(set: &mut Vec<usize>) {
    set.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(set.len());
    for &v in set.iter() {
        if out.last() == Some(&v) {
            out.pop();
        } else {
            out.push(v);
        }
    }
    *set = out;
}

fn parity(sites: &[u32], judge: &Bits) -> bool {
    sites.iter().filter(|&&q| judge.get(q as usize)).count() % 2 == 1
}

impl Nest {
    /// Builds both detector graphs from the fault table of a scheduled circuit.
    pub fn build(
        w: &WholeCircuit,
        layout: &StabilizerLayout,
        table: &FaultTable,
        window: usize,
    ) -> Result<Nest> {
        let logical = layout
            .logical_ops()
            .ok_or_else(|| Error::InvalidParameter("layout has no logical qubit".into()))?;
        let bounds = ec_boundaries(w);
        let round_of = |slot: usize| bounds[1..].iter().filter(|&&b| b <= slot).count();
        let last_round = round_of(w.horizon.saturating_sub(1)) + 1;
        let n_stab = layout.stabilizers.len();
        let kinds: Vec<StabKind> = layout.stabilizers.iter().map(|s| s.kind).collect();
        let mut offset = vec![0; n_stab];
        let mut dets: [Vec<Detector>; 2] = [Vec::new(), Vec::new()];
        for s in 0..n_stab {
            let g = &mut dets[slot_of(kinds[s])];
            offset[s] = g.len();
            for (j, &slot) in w.measurements[s].iter().enumerate() {
                g.push(Detector {
                    stabilizer_id: s,
                    index: j,
                    slot,
                    round: round_of(slot),
                });
            }
            g.push(Detector {
                stabilizer_id: s,
                index: w.measurements[s].len(),
                slot: w.horizon,
                round: last_round,
            });
        }
        let mut seen = vec![0usize; n_stab];
        let instance_index: Vec<(usize, usize)> = w
            .instances
            .iter()
            .map(|i| {
                let j = seen[i.stabilizer_id];
                seen[i.stabilizer_id] += 1;
                (i.stabilizer_id, j)
            })
            .collect();
        let mut nest = Nest {
            z: DetectorGraph::new(StabKind::Z, Vec::new(), Vec::new()),
            x: DetectorGraph::new(StabKind::X, Vec::new(), Vec::new()),
            window: window.max(1),
            n_rounds: last_round + 1,
            n_sites: w.n_sites,
            hyperedges: Vec::new(),
            silent_logical: 0,
            offset,
            counts: w.measurements.iter().map(|m| m.len()).collect(),
            kinds,
            members: layout
                .stabilizers
                .iter()
                .map(|s| s.data_members.clone())
                .collect(),
            instance_index,
            logical,
        };
        let p = if table.model.p > 0.0 {
            table.model.p
        } else {
            FALLBACK_P
        };
        let mut acc: [HashMap<(usize, usize), EdgeAcc>; 2] = [HashMap::new(), HashMap::new()];
        #[allow(clippy::type_complexity)]
        let mut hyper: Vec<(usize, usize, usize, Vec<usize>, Vec<u32>, bool, f64)> = Vec::new();
        for loc in &table.locations {
            let q = loc.channel.outcome_prob(p);
            for (k, eff) in loc.effects.iter().enumerate() {
                for kind in [StabKind::Z, StabKind::X] {
                    let (dv, corr, lg) = nest.flipped(eff, kind);
                    if dv.is_empty() {
                        nest.silent_logical += lg as usize;
                        continue;
                    }
                    if dv.len() <= 2 {
                        let key = (dv[0], *dv.get(1).unwrap_or(&BOUNDARY));
                        let e = acc[slot_of(kind)].entry(key).or_default();
                        e.p = merge_prob(e.p, q);
                        if q > e.best {
                            e.best = q;
                            e.correction = corr;
                            e.logical = lg;
                        }
                    } else {
                        hyper.push((loc.event, k + 1, slot_of(kind), dv, corr, lg, q));
                    }
                }
            }
        }
        for (event, outcome, ki, dv, corr, lg, q) in hyper {
            let graph_dets = &dets[ki];
            let mut order = dv.clone();
            order.sort_by_key(|&v| (graph_dets[v].slot, v));
            let split = split_existing(&order, &acc[ki], lg);
            let matched_existing = split.is_some();
            let parts: Vec<(usize, usize)> = split.unwrap_or_else(|| {
                order
                    .chunks(2)
                    .map(|c| (c[0], *c.get(1).unwrap_or(&BOUNDARY)))
                    .collect()
            });
            for (i, key) in parts.into_iter().enumerate() {
                let e = acc[ki].entry(key).or_default();
                e.p = merge_prob(e.p, q);
                if e.best == 0.0 {
                    e.best = q;
                    if i == 0 {
                        e.correction = corr.clone();
                        e.logical = lg;
                    }
                }
            }
            let kind = if ki == 0 { StabKind::Z } else { StabKind::X };
            nest.hyperedges.push(HyperRecord {
                event,
                outcome,
                kind,
                detectors: dv,
                matched_existing,
            });
        }
        let [zd, xd] = dets;
        let [za, xa] = acc;
        nest.z = DetectorGraph::new(StabKind::Z, zd, finish_edges(za));
        nest.x = DetectorGraph::new(StabKind::X, xd, finish_edges(xa));
        Ok(nest)
    }

    pub fn graph(&self, kind: StabKind) -> &DetectorGraph {
        match kind {
            StabKind::Z => &self.z,
            StabKind::X => &self.x,
        }
    }

    pub fn vertex(&self, stabilizer_id: usize, index: usize) -> usize {
        self.offset[stabilizer_id] + index
    }

    /// Detectors of one graph lit by a fault, with the data error and logical flip it leaves.
    fn flipped(&self, eff: &Effect, kind: StabKind) -> (Vec<usize>, Vec<u32>, bool) {
        let mut dv = Vec::new();
        for &o in &eff.outcomes {
            let (s, j) = self.instance_index[o as usize];
            if self.kinds[s] == kind {
                dv.push(self.offset[s] + j);
                dv.push(self.offset[s] + j + 1);
            }
        }
        let (res, judge) = match kind {
            StabKind::Z => (&eff.residual_x, &self.logical.z_judge),
            StabKind::X => (&eff.residual_z, &self.logical.x_judge),
        };
        dv.extend(self.final_flips(res, kind));
        toggle(&mut dv);
        (dv, res.clone(), parity(res, judge))
    }

    /// Final detectors lit by a data error of the type `kind` stabilizers detect.
    fn final_flips(&self, res: &[u32], kind: StabKind) -> Vec<usize> {
        if res.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (s, m) in self.members.iter().enumerate() {
            if self.kinds[s] == kind
                && res
                    .iter()
                    .filter(|&&q| m.binary_search(&(q as usize)).is_ok())
                    .count()
                    % 2
                    == 1
            {
                out.push(self.offset[s] + self.counts[s]);
            }
        }
        out
    }

    /// Lit detectors of one kind for a trial, including the noiseless final readout.
    pub fn extract_events(&self, t: &TrialState, kind: StabKind) -> Vec<usize> {
        let mut last = vec![false; self.kinds.len()];
        let mut out = Vec::new();
        for (o, &(s, j)) in self.instance_index.iter().enumerate() {
            if self.kinds[s] != kind {
                continue;
            }
            if t.outcomes[o] != last[s] {
                out.push(self.offset[s] + j);
            }
            last[s] = t.outcomes[o];
        }
        let res: Vec<u32> = match kind {
            StabKind::Z => t.residual.x_bits().ones().map(|q| q as u32).collect(),
            StabKind::X => t.residual.z_bits().ones().map(|q| q as u32).collect(),
        };
        let mut fin = vec![false; self.kinds.len()];
        for v in self.final_flips(&res, kind) {
            let d = &self.graph(kind).detectors[v];
            fin[d.stabilizer_id] = true;
        }
        for s in 0..self.kinds.len() {
            if self.kinds[s] == kind && fin[s] != last[s] {
                out.push(self.offset[s] + self.counts[s]);
            }
        }
        out.sort_unstable();
        out
    }

    /// Decodes one graph with a sliding window of `self.window` rounds. An event in the
    /// oldest round is committed once its partner is the boundary or is itself due to
    /// retire; otherwise it stays for the next window.
    pub fn decode_kind(&self, events: &[usize], kind: StabKind) -> Result<(Bits, bool)> {
        let g = self.graph(kind);
        let mut frame = Bits::zeros(self.n_sites);
        let mut logical = false;
        let mut by_round: Vec<Vec<usize>> = vec![Vec::new(); self.n_rounds];
        for &v in events {
            by_round[g.detectors[v].round].push(v);
        }
        let mut active: Vec<usize> = Vec::new();
        let mut added = 0;
        let mut start = 0;
        loop {
            let end = (start + self.window).min(self.n_rounds);
            while added < end {
                active.extend(&by_round[added]);
                added += 1;
            }
            let last = end >= self.n_rounds;
            let m = g.mwpm(&active)?;
            let round = |i: usize| g.detectors[active[i]].round;
            let mut done = vec![false; active.len()];
            for &(i, j) in &m.pairs {
                let commit = last
                    || match j {
                        None => round(i) <= start,
                        Some(j) => round(i) <= start && round(j) <= start,
                    };
                if !commit {
                    continue;
                }
                let (bits, lg) =
                    g.path_correction(active[i], j.map_or(BOUNDARY, |j| active[j]), self.n_sites);
                frame.xor_assign(&bits);
                logical ^= lg;
                done[i] = true;
                if let Some(j) = j {
                    done[j] = true;
                }
            }
            active = active
                .iter()
                .zip(&done)
                .filter(|(_, &d)| !d)
                .map(|(&v, _)| v)
                .collect();
            if last {
                break;
            }
            start += 1;
        }
        Ok((frame, logical))
    }

    /// Pauli frame correcting the trial's X errors (from Z detectors) and Z errors (from X detectors).
    pub fn decode(&self, t: &TrialState) -> Result<PauliFrame> {
        let (fx, _) = self.decode_kind(&self.extract_events(t, StabKind::Z), StabKind::Z)?;
        let (fz, _) = self.decode_kind(&self.extract_events(t, StabKind::X), StabKind::X)?;
        Ok(PauliFrame { x: fx, z: fz })
    }
}

fn finish_edges(acc: HashMap<(usize, usize), EdgeAcc>) -> Vec<NestEdge> {
    let mut keys: Vec<_> = acc.into_iter().collect();
    keys.sort_by_key(|(k, _)| *k);
    keys.into_iter()
        .map(|((a, b), e)| {
            let p = e.p.clamp(MIN_P, 0.5);
            NestEdge {
                a,
                b,
                p,
                weight: weight_of(p),
                correction: e.correction,
                logical: e.logical,
            }
        })
        .collect()
}

/// Splits a lit set into pairs or boundary singletons that are all existing edges and
/// whose logical flips add up to the fault's own.
fn split_existing(
    order: &[usize],
    acc: &HashMap<(usize, usize), EdgeAcc>,
    logical: bool,
) -> Option<Vec<(usize, usize)>> {
    if order.len() > HYPER_SEARCH_LIMIT {
        return None;
    }
    fn go(
        rest: &[usize],
        acc: &HashMap<(usize, usize), EdgeAcc>,
        want: bool,
        out: &mut Vec<(usize, usize)>,
    ) -> bool {
        let Some((&first, tail)) = rest.split_first() else {
            return !want;
        };
        if let Some(e) = acc.get(&(first, BOUNDARY)) {
            out.push((first, BOUNDARY));
            if go(tail, acc, want ^ e.logical, out) {
                return true;
            }
            out.pop();
        }
        for (i, &v) in tail.iter().enumerate() {
            let key = (first.min(v), first.max(v));
            if let Some(e) = acc.get(&key) {
                let mut t2 = tail.to_vec();
                t2.remove(i);
                out.push(key);
                if go(&t2, acc, want ^ e.logical, out) {
                    return true;
                }
                out.pop();
            }
        }
        false
    }
    let mut out = Vec::new();
    go(order, acc, logical, &mut out).then_some(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalOutcome {
    pub x_error: bool,
    pub z_error: bool,
}

impl LogicalOutcome {
    pub fn merged(&self) -> bool {
        self.x_error || self.z_error
    }
}

/// Data-only matching graph for one noiseless extraction: vertices are the stabilizers of
/// `kind`, each working data qubit is an edge between the stabilizers containing it.
pub fn spatial_graph(
    layout: &StabilizerLayout,
    kind: StabKind,
    judge: &Bits,
) -> (DetectorGraph, Vec<usize>) {
    let mut index = vec![usize::MAX; layout.stabilizers.len()];
    let mut dets = Vec::new();
    for s in layout.of_kind(kind) {
        index[s.id] = dets.len();
        dets.push(Detector {
            stabilizer_id: s.id,
            index: 0,
            slot: 0,
            round: 0,
        });
    }
    let mut acc: HashMap<(usize, usize), NestEdge> = HashMap::new();
    for q in layout.lattice.working_data_sites() {
        let mut on: Vec<usize> = layout
            .of_kind(kind)
            .filter(|s| s.data_members.contains(&q))
            .map(|s| index[s.id])
            .collect();
        on.sort_unstable();
        let key = match on.as_slice() {
            [a] => (*a, BOUNDARY),
            [a, b] => (*a, *b),
            _ => continue,
        };
        acc.entry(key).or_insert(NestEdge {
            a: key.0,
            b: key.1,
            p: 0.1,
            weight: weight_of(0.1),
            correction: vec![q as u32],
            logical: judge.get(q),
        });
    }
    let mut edges: Vec<NestEdge> = acc.into_values().collect();
    edges.sort_by_key(|e| (e.a, e.b));
    (DetectorGraph::new(kind, dets, edges), index)
}

/// Applies the frame, cleans any leftover syndrome with one noiseless extraction and a
/// spatial matching, then tests the remainder against the logical judges.
pub fn assess_logical(
    residual: &crate::pauli::PauliString,
    frame: &PauliFrame,
    layout: &StabilizerLayout,
) -> Result<LogicalOutcome> {
    let ops = layout
        .logical_ops()
        .ok_or_else(|| Error::InvalidParameter("layout has no logical qubit".into()))?;
    let r = frame.apply_to(residual);
    let n = layout.n_sites();
    let mut out = [false; 2];
    for (i, (kind, err, judge)) in [
        (StabKind::Z, r.x_bits(), &ops.z_judge),
        (StabKind::X, r.z_bits(), &ops.x_judge),
    ]
    .into_iter()
    .enumerate()
    {
        let (g, index) = spatial_graph(layout, kind, judge);
        let lit: Vec<usize> = layout
            .of_kind(kind)
            .filter(|s| s.data_members.iter().filter(|&&q| err.get(q)).count() % 2 == 1)
            .map(|s| index[s.id])
            .collect();
        let m = g.mwpm(&lit)?;
        let mut fixed = err.clone();
        for (a, b) in m.pairs {
            let (bits, _) = g.path_correction(lit[a], b.map_or(BOUNDARY, |b| lit[b]), n);
            fixed.xor_assign(&bits);
        }
        out[i] = fixed.dot(judge);
    }
    Ok(LogicalOutcome {
        x_error: out[0],
        z_error: out[1],
    })
}

/// Events from a plain sequence of outcomes (true = −1), comparing the first with +1.
pub fn events_in_sequence(outcomes: &[bool]) -> Vec<usize> {
    let mut last = false;
    let mut out = Vec::new();
    for (i, &o) in outcomes.iter().enumerate() {
        if o != last {
            out.push(i);
        }
        last = o;
    }
    out
}

/// Fault table, nest and circuit bundled for repeated trials.
pub struct Pipeline<'a> {
    pub w: std::borrow::Cow<'a, WholeCircuit>,
    pub layout: &'a StabilizerLayout,
    pub table: FaultTable,
    pub nest: Nest,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        w: &'a WholeCircuit,
        layout: &'a StabilizerLayout,
        m: &crate::noise::ErrorModel,
    ) -> Result<Self> {
        let w = if m.idle {
            let working: Vec<bool> = (0..w.n_sites)
                .map(|q| layout.lattice.is_working(q))
                .collect();
            std::borrow::Cow::Owned(crate::noise::fill_idle(w, &working))
        } else {
            std::borrow::Cow::Borrowed(w)
        };
        let table = FaultTable::build(&w, m, &layout.lattice.working_data_sites());
        let window = layout.lattice.distance();
        let nest = Nest::build(&w, layout, &table, window)?;
        Ok(Pipeline {
            w,
            layout,
            table,
            nest,
        })
    }

    pub fn run<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<LogicalOutcome> {
        let t = self.table.sample(rng);
        let frame = self.nest.decode(&t)?;
        assess_logical(&t.residual, &frame, self.layout)
    }
}
