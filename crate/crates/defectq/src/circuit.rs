//! Per-stabilizer syndrome-extraction circuits with a single travelling ancilla variable.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Dir, StabKind, StabilizerLayout, StabilizerSpec};
use crate::pauli::{CliffordGate, Pauli, PauliString};

/// Above this many candidate subsets of one size the cover search turns greedy.
const COVER_COMBINATION_LIMIT: u128 = 200_000;
/// Largest ancilla set solved exactly by dynamic programming.
const EXACT_TSP_LIMIT: usize = 12;
/// Largest set whose optimal orders are all enumerated for the route tie-break.
const ENUMERATE_LIMIT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEvent {
    pub gate: CliffordGate,
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerCircuit {
    pub stabilizer_id: usize,
    pub kind: StabKind,
    pub data_members: Vec<usize>,
    /// Ordered by slot, then by emission order.
    pub events: Vec<GateEvent>,
    pub depth: usize,
    /// Covering ancilla set chosen by the search.
    pub ancilla_set: Vec<usize>,
    /// Every site the ancilla variable visits, endpoints included.
    pub ancilla_path: Vec<usize>,
    /// For each event and each of its qubits: whether this circuit keeps the device
    /// locked from this event until its next event on the same device.
    pub holds_after: Vec<[bool; 2]>,
    /// (data site, slot) of each syndrome-propagating CNOT.
    pub gathers: Vec<(usize, usize)>,
    pub tsp_heuristic: bool,
    pub cover_heuristic: bool,
}

impl StabilizerCircuit {
    pub fn init_site(&self) -> usize {
        self.ancilla_path[0]
    }

    pub fn measure_site(&self) -> usize {
        *self.ancilla_path.last().expect("non-empty path")
    }

    pub fn qubits_touched(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.events.iter().flat_map(|e| e.gate.qubits()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Distinct qubits touched times depth.
pub fn circuit_kq(c: &StabilizerCircuit) -> usize {
    c.qubits_touched().len() * c.depth
}

/// Distinct data qubits touched times depth.
pub fn circuit_kdq(c: &StabilizerCircuit, layout: &StabilizerLayout) -> usize {
    let l = &layout.lattice;
    c.qubits_touched()
        .into_iter()
        .filter(|&q| l.is_data(q))
        .count()
        * c.depth
}

fn gather_order(kind: StabKind) -> [Dir; 4] {
    match kind {
        StabKind::Z => [Dir::Down, Dir::Left, Dir::Up, Dir::Right],
        StabKind::X => [Dir::Left, Dir::Down, Dir::Right, Dir::Up],
    }
}

/// BFS hop counts from `src` over working sites.
fn bfs(layout: &StabilizerLayout, src: usize) -> Vec<usize> {
    let l = &layout.lattice;
    let mut dist = vec![usize::MAX; l.n_sites()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in l.neighbors(u) {
            if l.is_working(v) && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Lexicographically greatest shortest path from `a` to `b`, endpoints included.
fn greatest_path(layout: &StabilizerLayout, a: usize, b: usize, to_b: &[usize]) -> Vec<usize> {
    let l = &layout.lattice;
    let mut path = vec![a];
    let mut cur = a;
    while cur != b {
        let next = l
            .neighbors(cur)
            .into_iter()
            .filter(|&v| l.is_working(v) && to_b[v] != usize::MAX && to_b[v] + 1 == to_b[cur])
            .max()
            .expect("a shortest path exists");
        path.push(next);
        cur = next;
    }
    path
}

/// Open-path TSP: optimal cost and visiting order (indices into `dist`).
pub fn held_karp(dist: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let k = dist.len();
    if k <= 1 {
        return (0, (0..k).collect());
    }
    let full = 1usize << k;
    let inf = usize::MAX / 4;
    let mut dp = vec![inf; full * k];
    let mut parent = vec![usize::MAX; full * k];
    for i in 0..k {
        dp[(1 << i) * k + i] = 0;
    }
    for mask in 1..full {
        for j in 0..k {
            let cur = dp[mask * k + j];
            if cur >= inf || mask & (1 << j) == 0 {
                continue;
            }
            for n in 0..k {
                if mask & (1 << n) != 0 {
                    continue;
                }
                let nm = mask | (1 << n);
                let c = cur + dist[j][n];
                if c < dp[nm * k + n] {
                    dp[nm * k + n] = c;
                    parent[nm * k + n] = j;
                }
            }
        }
    }
    let last = full - 1;
    let end = (0..k)
        .min_by_key(|&j| (dp[last * k + j], j))
        .expect("k > 0");
    let cost = dp[last * k + end];
    let mut order = vec![end];
    let (mut mask, mut j) = (last, end);
    while parent[mask * k + j] != usize::MAX {
        let p = parent[mask * k + j];
        mask &= !(1 << j);
        j = p;
        order.push(j);
    }
    order.reverse();
    (cost, order)
}

/// Nearest-neighbour start followed by 2-opt on the open path.
pub fn tsp_heuristic(dist: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let k = dist.len();
    let cost_of = |o: &[usize]| o.windows(2).map(|w| dist[w[0]][w[1]]).sum::<usize>();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for start in 0..k {
        let mut order = vec![start];
        let mut used = vec![false; k];
        used[start] = true;
        while order.len() < k {
            let u = *order.last().unwrap();
            let v = (0..k)
                .filter(|&v| !used[v])
                .min_by_key(|&v| (dist[u][v], v))
                .unwrap();
            used[v] = true;
            order.push(v);
        }
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..k.saturating_sub(1) {
                for j in i + 1..k {
                    let mut cand = order.clone();
                    cand[i..=j].reverse();
                    if cost_of(&cand) < cost_of(&order) {
                        order = cand;
                        improved = true;
                    }
                }
            }
        }
        let c = cost_of(&order);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, order));
        }
    }
    best.unwrap_or((0, Vec::new()))
}

/// Every optimal open-path order, by exhaustive permutation search.
fn optimal_orders(dist: &[Vec<usize>]) -> (usize, Vec<Vec<usize>>) {
    fn rec(
        dist: &[Vec<usize>],
        order: &mut Vec<usize>,
        used: &mut Vec<bool>,
        cost: usize,
        best: &mut (usize, Vec<Vec<usize>>),
    ) {
        if cost > best.0 {
            return;
        }
        if order.len() == dist.len() {
            if cost < best.0 {
                *best = (cost, Vec::new());
            }
            best.1.push(order.clone());
            return;
        }
        for v in 0..dist.len() {
            if used[v] {
                continue;
            }
            let add = order.last().map_or(0, |&u| dist[u][v]);
            used[v] = true;
            order.push(v);
            rec(dist, order, used, cost + add, best);
            order.pop();
            used[v] = false;
        }
    }
    let mut best = (usize::MAX, Vec::new());
    rec(
        dist,
        &mut Vec::new(),
        &mut vec![false; dist.len()],
        0,
        &mut best,
    );
    best
}

struct Route {
    cost: usize,
    sites: Vec<usize>,
    heuristic: bool,
}

fn best_route(
    layout: &StabilizerLayout,
    set: &[usize],
    dists: &HashMap<usize, Vec<usize>>,
) -> Route {
    let k = set.len();
    let dist: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..k).map(|j| dists[&set[j]][set[i]]).collect())
        .collect();
    let expand = |order: &[usize]| -> Vec<usize> {
        let mut sites = vec![set[order[0]]];
        for w in order.windows(2) {
            let leg = greatest_path(layout, set[w[0]], set[w[1]], &dists[&set[w[1]]]);
            sites.extend_from_slice(&leg[1..]);
        }
        sites
    };
    if k <= ENUMERATE_LIMIT {
        let (cost, orders) = optimal_orders(&dist);
        let sites = orders
            .iter()
            .map(|o| expand(o))
            .max()
            .expect("at least one order");
        Route {
            cost,
            sites,
            heuristic: false,
        }
    } else if k <= EXACT_TSP_LIMIT {
        let (cost, order) = held_karp(&dist);
        Route {
            cost,
            sites: expand(&order),
            heuristic: false,
        }
    } else {
        let (cost, order) = tsp_heuristic(&dist);
        Route {
            cost,
            sites: expand(&order),
            heuristic: true,
        }
    }
}

fn combinations(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Algorithm: smallest covering ancilla set, shortest open route through it, then gates
/// emitted along the route and packed as early as device order allows.
pub fn compose_stabilizer_circuit(
    layout: &StabilizerLayout,
    s: &StabilizerSpec,
) -> Result<StabilizerCircuit> {
    let l = &layout.lattice;
    if s.data_members.is_empty() {
        return Err(Error::Uncoverable(s.id));
    }
    let mut candidates: Vec<usize> = s
        .data_members
        .iter()
        .flat_map(|&q| l.neighbors(q))
        .filter(|&a| !l.is_data(a) && l.is_working(a))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let adj: Vec<Vec<usize>> = candidates
        .iter()
        .map(|&a| {
            s.data_members
                .iter()
                .enumerate()
                .filter(|(_, &q)| l.neighbors(a).contains(&q))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let m = s.data_members.len();
    if (0..m).any(|i| !adj.iter().any(|a| a.contains(&i))) {
        return Err(Error::Uncoverable(s.id));
    }
    let dists: HashMap<usize, Vec<usize>> =
        candidates.iter().map(|&a| (a, bfs(layout, a))).collect();
    let covers = |idx: &[usize]| {
        let mut hit = vec![false; m];
        for &i in idx {
            for &j in &adj[i] {
                hit[j] = true;
            }
        }
        hit.into_iter().all(|h| h)
    };
    let connected = |idx: &[usize]| {
        idx.iter().all(|&i| {
            idx.iter()
                .all(|&j| dists[&candidates[i]][candidates[j]] != usize::MAX)
        })
    };

    let mut best: Option<(Route, Vec<usize>)> = None;
    let mut cover_heuristic = false;
    for size in 1..=candidates.len() {
        if combinations(candidates.len(), size) > COVER_COMBINATION_LIMIT {
            cover_heuristic = true;
            let set = greedy_cover(&adj, m, &candidates);
            let route = best_route(layout, &set, &dists);
            best = Some((route, set));
            break;
        }
        for_each_combination(candidates.len(), size, |idx| {
            if !covers(idx) || !connected(idx) {
                return;
            }
            let set: Vec<usize> = idx.iter().map(|&i| candidates[i]).collect();
            let route = best_route(layout, &set, &dists);
            let better = match &best {
                None => true,
                Some((r, bset)) => (route.cost, &set) < (r.cost, bset),
            };
            if better {
                best = Some((route, set));
            }
        });
        if best.is_some() {
            break;
        }
    }
    let (route, set) = best.ok_or(Error::Uncoverable(s.id))?;
    let mut c = emit(layout, s, &route.sites)?;
    c.ancilla_set = set;
    c.tsp_heuristic = route.heuristic;
    c.cover_heuristic = cover_heuristic;
    Ok(c)
}

fn greedy_cover(adj: &[Vec<usize>], m: usize, candidates: &[usize]) -> Vec<usize> {
    let mut hit = vec![false; m];
    let mut set = Vec::new();
    while hit.iter().any(|h| !h) {
        let i = (0..adj.len())
            .max_by_key(|&i| {
                (
                    adj[i].iter().filter(|&&j| !hit[j]).count(),
                    std::cmp::Reverse(i),
                )
            })
            .expect("coverable");
        for &j in &adj[i] {
            hit[j] = true;
        }
        set.push(candidates[i]);
    }
    set.sort_unstable();
    set
}

/// Emits gates along `path` and packs them into slots.
fn emit(
    layout: &StabilizerLayout,
    s: &StabilizerSpec,
    path: &[usize],
) -> Result<StabilizerCircuit> {
    let l = &layout.lattice;
    let mut gates: Vec<CliffordGate> = Vec::new();
    let mut gathered: Vec<usize> = Vec::new();
    let mut gather_gate: Vec<(usize, usize)> = Vec::new();
    // A single-stop circuit keeps one slot per direction, idle where a neighbor is absent,
    // so boundary plaquettes stay in step with interior ones.
    let mut earliest: HashMap<usize, usize> = HashMap::new();
    let first_gather = if s.kind == StabKind::X { 2 } else { 1 };
    gates.push(CliffordGate::InitZ(path[0]));
    if s.kind == StabKind::X {
        gates.push(CliffordGate::H(path[0]));
    }
    for (i, &q) in path.iter().enumerate() {
        if !l.is_data(q) {
            for (k, dir) in gather_order(s.kind).into_iter().enumerate() {
                let Some(d) = l.step(q, dir) else { continue };
                if s.data_members.binary_search(&d).is_ok() && !gathered.contains(&d) {
                    if path.len() == 1 {
                        earliest.insert(gates.len(), first_gather + k);
                    }
                    gathered.push(d);
                    gather_gate.push((d, gates.len()));
                    gates.push(match s.kind {
                        StabKind::Z => CliffordGate::cnot(d, q)?,
                        StabKind::X => CliffordGate::cnot(q, d)?,
                    });
                }
            }
        }
        if let Some(&next) = path.get(i + 1) {
            gates.push(CliffordGate::swap(q, next)?);
        }
        if l.is_data(q) {
            gates.push(CliffordGate::swap(path[i - 1], q)?);
        }
    }
    let last = *path.last().expect("non-empty path");
    let mut tail = first_gather + 4;
    if s.kind == StabKind::X {
        if path.len() == 1 {
            earliest.insert(gates.len(), tail);
        }
        gates.push(CliffordGate::H(last));
        tail += 1;
    }
    if path.len() == 1 {
        earliest.insert(gates.len(), tail);
    }
    gates.push(CliffordGate::MeasureZ(last));
    if gathered.len() != s.data_members.len() {
        return Err(Error::Uncoverable(s.id));
    }

    // Pack as early as each device allows.
    let mut free_at: HashMap<usize, usize> = HashMap::new();
    let mut slots = Vec::with_capacity(gates.len());
    for (gi, g) in gates.iter().enumerate() {
        let t = g
            .qubits()
            .iter()
            .map(|q| free_at.get(q).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let t = t.max(earliest.get(&gi).copied().unwrap_or(0));
        for q in g.qubits() {
            free_at.insert(q, t + 1);
        }
        slots.push(t);
    }
    let depth = slots.iter().max().map_or(0, |&t| t + 1);
    let holds = hold_flags(layout, path[0], &gates);

    let mut order: Vec<usize> = (0..gates.len()).collect();
    order.sort_by_key(|&i| (slots[i], i));
    let mut rank = vec![0; gates.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let events = order
        .iter()
        .map(|&i| GateEvent {
            gate: gates[i],
            slot: slots[i],
        })
        .collect();
    let holds_after = order.iter().map(|&i| holds[i]).collect();
    let gathers = gather_gate.iter().map(|&(d, gi)| (d, slots[gi])).collect();
    Ok(StabilizerCircuit {
        stabilizer_id: s.id,
        kind: s.kind,
        data_members: s.data_members.clone(),
        events,
        depth,
        ancilla_set: Vec::new(),
        ancilla_path: path.to_vec(),
        holds_after,
        gathers,
        tsp_heuristic: false,
        cover_heuristic: false,
    })
}

/// Tracks which variable sits on each device. A device stays locked after a gate while it
/// holds the syndrome variable or a data variable away from home, or while a data
/// device is missing its own variable.
fn hold_flags(
    layout: &StabilizerLayout,
    syndrome_home: usize,
    gates: &[CliffordGate],
) -> Vec<[bool; 2]> {
    let l = &layout.lattice;
    let mut content: HashMap<usize, usize> = HashMap::new();
    let var_at =
        |content: &HashMap<usize, usize>, dev: usize| content.get(&dev).copied().unwrap_or(dev);
    let locked = |content: &HashMap<usize, usize>, dev: usize| {
        let v = var_at(content, dev);
        v == syndrome_home || (l.is_data(v) && v != dev) || (l.is_data(dev) && v != dev)
    };
    let mut out = Vec::with_capacity(gates.len());
    for g in gates {
        if let CliffordGate::Swap(a, b) = *g {
            let (va, vb) = (var_at(&content, a), var_at(&content, b));
            content.insert(a, vb);
            content.insert(b, va);
        }
        let qs = g.qubits();
        let mut h = [false; 2];
        for (k, &q) in qs.iter().enumerate() {
            h[k] = !matches!(g, CliffordGate::MeasureZ(_)) && locked(&content, q);
        }
        out.push(h);
    }
    out
}

/// Heisenberg replay of the final measurement back to the start of the circuit.
/// Fails if the observable would pick up an X component on a freshly initialised device.
pub fn replay_measured_operator(c: &StabilizerCircuit, n: usize) -> Result<PauliString> {
    let mut p = PauliString::single(n, c.measure_site(), Pauli::Z);
    for e in c.events.iter().rev() {
        match e.gate {
            CliffordGate::MeasureZ(q) if q == c.measure_site() => {}
            CliffordGate::InitZ(q) => {
                if p.x_bits().get(q) {
                    return Err(Error::InvalidGate(format!(
                        "X component reaches INIT on {q}"
                    )));
                }
                let mut z = p.z_bits().clone();
                z.set(q, false);
                p = PauliString::from_bits(p.x_bits().clone(), z, p.phase())?;
            }
            g => p.conjugate_in_place(&g),
        }
    }
    Ok(p)
}

/// Circuits for every stabilizer of the layout, in layout order.
pub fn compose_all(layout: &StabilizerLayout) -> Result<Vec<StabilizerCircuit>> {
    layout
        .stabilizers
        .iter()
        .map(|s| compose_stabilizer_circuit(layout, s))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateRecord {
    pub slot: usize,
    pub gate: String,
    pub qubits: Vec<usize>,
}

pub fn gate_name(g: &CliffordGate) -> &'static str {
    match g {
        CliffordGate::InitZ(_) => "INIT_Z",
        CliffordGate::H(_) => "H",
        CliffordGate::Cnot(..) => "CNOT",
        CliffordGate::Swap(..) => "SWAP",
        CliffordGate::MeasureZ(_) => "MEASURE_Z",
        CliffordGate::Identity(_) => "IDENTITY",
    }
}

pub fn dump_events(c: &StabilizerCircuit) -> Vec<GateRecord> {
    c.events
        .iter()
        .map(|e| GateRecord {
            slot: e.slot,
            gate: gate_name(&e.gate).into(),
            qubits: e.gate.qubits(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{reconfigure, Lattice};

    fn center_layout() -> StabilizerLayout {
        let l = Lattice::generate_perfect(5).unwrap();
        reconfigure(&l.with_faults(&[l.center()]))
    }

    #[test]
    fn normal_plaquettes() {
        let lay = reconfigure(&Lattice::generate_perfect(5).unwrap());
        for s in &lay.stabilizers {
            let c = compose_stabilizer_circuit(&lay, s).unwrap();
            let w = s.data_members.len();
            match s.kind {
                StabKind::Z => {
                    assert_eq!(c.events.len(), w + 2);
                    assert_eq!(c.depth, 6);
                }
                StabKind::X => assert_eq!(c.depth, 8),
            }
            assert_eq!(
                replay_measured_operator(&c, lay.n_sites()).unwrap(),
                s.operator(lay.n_sites())
            );
        }
    }

    #[test]
    fn center_superunit_route() {
        let lay = center_layout();
        let z = lay
            .of_kind(StabKind::Z)
            .find(|s| s.merged_from == 2)
            .unwrap();
        let c = compose_stabilizer_circuit(&lay, z).unwrap();
        assert_eq!(c.ancilla_set, vec![31, 49]);
        assert_eq!(c.ancilla_path, vec![49, 50, 41, 32, 31]);
        assert_eq!(c.depth, 12);
        let first: Vec<usize> = c.gathers.iter().take(3).map(|g| g.0).collect();
        assert_eq!(first, vec![58, 48, 50]);
        let mut rest: Vec<usize> = c.gathers.iter().skip(3).map(|g| g.0).collect();
        rest.sort_unstable();
        assert_eq!(rest, vec![22, 30, 32]);
        assert_eq!(
            replay_measured_operator(&c, lay.n_sites()).unwrap(),
            z.operator(lay.n_sites())
        );

        let x = lay
            .of_kind(StabKind::X)
            .find(|s| s.merged_from == 2)
            .unwrap();
        let cx = compose_stabilizer_circuit(&lay, x).unwrap();
        assert_eq!(cx.ancilla_path, vec![41, 50, 49, 48, 39]);
        assert_eq!(cx.depth, 14);
        assert_eq!(
            replay_measured_operator(&cx, lay.n_sites()).unwrap(),
            x.operator(lay.n_sites())
        );
    }

    #[test]
    fn kq_metrics() {
        let lay = center_layout();
        let z = lay
            .of_kind(StabKind::Z)
            .find(|s| s.merged_from == 2)
            .unwrap();
        let c = compose_stabilizer_circuit(&lay, z).unwrap();
        assert_eq!(circuit_kdq(&c, &lay), 6 * 12);
        let plain = lay
            .of_kind(StabKind::Z)
            .find(|s| s.data_members.len() == 4)
            .unwrap();
        let cp = compose_stabilizer_circuit(&lay, plain).unwrap();
        assert_eq!(circuit_kq(&cp), 5 * 6);
        assert!(circuit_kq(&c) > circuit_kq(&cp));
    }

    #[test]
    fn held_karp_matches_enumeration() {
        let pts = [(0i64, 0i64), (3, 1), (1, 4), (5, 5), (2, 2), (6, 0)];
        let dist: Vec<Vec<usize>> = pts
            .iter()
            .map(|a| {
                pts.iter()
                    .map(|b| ((a.0 - b.0).abs() + (a.1 - b.1).abs()) as usize)
                    .collect()
            })
            .collect();
        assert_eq!(held_karp(&dist).0, optimal_orders(&dist).0);
        assert!(tsp_heuristic(&dist).0 >= held_karp(&dist).0);
    }
}
