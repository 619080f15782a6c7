//! Planar-code lattice with permanently faulty devices, superunit reconfiguration,
//! encodability and logical operators.
//!
//! Site `(r, c)` of the `(2d-1)×(2d-1)` grid has index `r * (2d-1) + c`. Data sites have
//! `r + c` even, Z ancillas sit at odd rows and X ancillas at even rows. Logical X runs
//! north to south, logical Z runs west to east.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Bits, Pauli, PauliString};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize, PartialOrd, Ord)]
pub enum StabKind {
    X,
    Z,
}

impl StabKind {
    pub fn pauli(self) -> Pauli {
        match self {
            StabKind::X => Pauli::X,
            StabKind::Z => Pauli::Z,
        }
    }

    pub fn other(self) -> StabKind {
        match self {
            StabKind::X => StabKind::Z,
            StabKind::Z => StabKind::X,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Role {
    Data,
    Ancilla(StabKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    distance: usize,
    size: usize,
    faulty: Vec<bool>,
    seed: Option<u64>,
}

impl Lattice {
    pub fn generate_perfect(d: usize) -> Result<Self> {
        if d < 3 || d.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "distance must be odd and >= 3, got {d}"
            )));
        }
        let size = 2 * d - 1;
        Ok(Lattice {
            distance: d,
            size,
            faulty: vec![false; size * size],
            seed: None,
        })
    }

    /// Marks each site faulty independently with probability `1 - y`.
    pub fn apply_yield(&self, y: f64, seed: u64) -> Result<Self> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "yield must lie in (0, 1], got {y}"
            )));
        }
        let mut rng = crate::rng::stream(seed, 0x1a77, 0);
        let mut out = self.clone();
        for f in out.faulty.iter_mut() {
            let u: f64 = rng.gen();
            *f = *f || u >= y;
        }
        out.seed = Some(seed);
        Ok(out)
    }

    pub fn with_faults(&self, sites: &[usize]) -> Self {
        let mut out = self.clone();
        for &s in sites {
            out.faulty[s] = true;
        }
        out
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_sites(&self) -> usize {
        self.size * self.size
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn site(&self, r: usize, c: usize) -> usize {
        r * self.size + c
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.size, s % self.size)
    }

    pub fn center(&self) -> usize {
        self.site(self.size / 2, self.size / 2)
    }

    pub fn role(&self, s: usize) -> Role {
        let (r, c) = self.coords(s);
        if (r + c) % 2 == 0 {
            Role::Data
        } else if r % 2 == 1 {
            Role::Ancilla(StabKind::Z)
        } else {
            Role::Ancilla(StabKind::X)
        }
    }

    pub fn is_data(&self, s: usize) -> bool {
        self.role(s) == Role::Data
    }

    pub fn is_faulty(&self, s: usize) -> bool {
        self.faulty[s]
    }

    pub fn is_working(&self, s: usize) -> bool {
        !self.faulty[s]
    }

    pub fn faulty_sites(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&s| self.faulty[s]).collect()
    }

    pub fn data_sites(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&s| self.is_data(s)).collect()
    }

    pub fn working_data_sites(&self) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&s| self.is_data(s) && self.is_working(s))
            .collect()
    }

    pub fn ancilla_sites(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&s| !self.is_data(s)).collect()
    }

    /// Grid neighbors in the order down, left, up, right.
    pub fn neighbors(&self, s: usize) -> Vec<usize> {
        [Dir::Down, Dir::Left, Dir::Up, Dir::Right]
            .into_iter()
            .filter_map(|d| self.step(s, d))
            .collect()
    }

    pub fn step(&self, s: usize, dir: Dir) -> Option<usize> {
        let (r, c) = self.coords(s);
        let (dr, dc): (isize, isize) = match dir {
            Dir::Up => (-1, 0),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
            Dir::Right => (0, 1),
        };
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.size as isize || nc >= self.size as isize {
            None
        } else {
            Some(self.site(nr as usize, nc as usize))
        }
    }

    /// Data sites of the plaquette whose ancilla is `anc`.
    pub fn plaquette(&self, anc: usize) -> Vec<usize> {
        let mut v = self.neighbors(anc);
        v.sort_unstable();
        v
    }

    pub fn to_file(&self) -> LatticeFile {
        let sites = (0..self.n_sites())
            .map(|s| {
                let (r, c) = self.coords(s);
                SiteRecord {
                    x: c,
                    y: r,
                    role: match self.role(s) {
                        Role::Data => "data".into(),
                        Role::Ancilla(StabKind::X) => "ancilla_x".into(),
                        Role::Ancilla(StabKind::Z) => "ancilla_z".into(),
                    },
                    status: if self.faulty[s] {
                        "faulty".into()
                    } else {
                        "working".into()
                    },
                }
            })
            .collect();
        LatticeFile {
            distance: self.distance,
            grid_rows: self.size,
            sites,
            seed: self.seed,
        }
    }

    pub fn from_file(f: &LatticeFile) -> Result<Self> {
        let mut l = Lattice::generate_perfect(f.distance)?;
        if f.grid_rows != l.size || f.sites.len() != l.n_sites() {
            return Err(Error::InvalidParameter(
                "lattice file dimensions disagree with distance".into(),
            ));
        }
        for rec in &f.sites {
            if rec.x >= l.size || rec.y >= l.size {
                return Err(Error::InvalidParameter(format!(
                    "site ({}, {}) out of range",
                    rec.x, rec.y
                )));
            }
            let s = l.site(rec.y, rec.x);
            l.faulty[s] = rec.status == "faulty";
        }
        l.seed = f.seed;
        Ok(l)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub x: usize,
    pub y: usize,
    pub role: String,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeFile {
    pub distance: usize,
    pub grid_rows: usize,
    pub sites: Vec<SiteRecord>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerSpec {
    pub id: usize,
    pub kind: StabKind,
    /// Working data sites, sorted.
    pub data_members: Vec<usize>,
    /// Working ancilla sites of the merged plaquettes.
    pub ancilla_pool: Vec<usize>,
    /// Ancilla sites naming the original plaquettes.
    pub plaquettes: Vec<usize>,
    pub merged_from: usize,
}

impl StabilizerSpec {
    pub fn operator(&self, n: usize) -> PauliString {
        PauliString::uniform(n, &self.data_members, self.kind.pauli())
    }

    pub fn min_site(&self) -> usize {
        self.data_members
            .iter()
            .chain(&self.plaquettes)
            .copied()
            .min()
            .unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Side {
    North,
    South,
    West,
    East,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub side: Side,
    /// Type of the weight-3 stabilizers lining this side.
    pub lined_by: StabKind,
    /// Plaquettes absorbed into this side by fault removal.
    pub absorbed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerLayout {
    pub lattice: Lattice,
    pub stabilizers: Vec<StabilizerSpec>,
    pub boundaries: Vec<Boundary>,
    /// Boundary plaquettes deleted because a fault left them without a merge partner.
    pub removed: Vec<(StabKind, usize)>,
    pub policy: MergePolicy,
    pub order_note: String,
}

/// How faulty data qubits are handled per stabilizer type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergePolicy {
    /// Both types merge into superunits.
    #[default]
    Superunit,
    /// The given type keeps its broken plaquettes as triangles; the other type merges.
    Triangular(StabKind),
}

impl MergePolicy {
    fn merges(self, kind: StabKind) -> bool {
        self != MergePolicy::Triangular(kind)
    }
}

/// Union-find over plaquettes of one type plus two virtual boundary nodes.
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, a: usize) -> usize {
        let mut r = a;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut x = a;
        while self.parent[x] != r {
            let nx = self.parent[x];
            self.parent[x] = r;
            x = nx;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Slot structure for one stabilizer type: each data site lies in two slots, which are
/// plaquettes of that type or one of two virtual boundary nodes.
struct TypeSlots {
    plaquettes: Vec<usize>,
    /// Node ids of the two virtual boundaries: `plaquettes.len()` and `+1`.
    slots: HashMap<usize, [usize; 2]>,
}

impl TypeSlots {
    fn build(l: &Lattice, kind: StabKind) -> Self {
        let plaquettes: Vec<usize> = (0..l.n_sites())
            .filter(|&s| l.role(s) == Role::Ancilla(kind))
            .collect();
        let index: HashMap<usize, usize> = plaquettes
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i))
            .collect();
        let (b0, b1) = (plaquettes.len(), plaquettes.len() + 1);
        let mut slots = HashMap::new();
        for q in l.data_sites() {
            let (r, c) = l.coords(q);
            let mut v: Vec<usize> = l
                .neighbors(q)
                .into_iter()
                .filter(|a| l.role(*a) == Role::Ancilla(kind))
                .map(|a| index[&a])
                .collect();
            let last = l.size() - 1;
            match kind {
                StabKind::Z => {
                    if r == 0 {
                        v.push(b0);
                    }
                    if r == last {
                        v.push(b1);
                    }
                }
                StabKind::X => {
                    if c == 0 {
                        v.push(b0);
                    }
                    if c == last {
                        v.push(b1);
                    }
                }
            }
            debug_assert_eq!(v.len(), 2, "data site {q} must have two {kind:?} slots");
            slots.insert(q, [v[0], v[1]]);
        }
        TypeSlots { plaquettes, slots }
    }

    fn n_nodes(&self) -> usize {
        self.plaquettes.len() + 2
    }

    fn boundary_nodes(&self) -> (usize, usize) {
        (self.plaquettes.len(), self.plaquettes.len() + 1)
    }

    /// Each faulty data site fuses its two slots. Absorption into a boundary node and
    /// interior merging are both unions, so the result is independent of order.
    fn merged(&self, l: &Lattice, merge: bool) -> Dsu {
        let mut dsu = Dsu::new(self.n_nodes());
        if !merge {
            return dsu;
        }
        for q in l.data_sites().into_iter().filter(|&q| l.is_faulty(q)) {
            let [a, b] = self.slots[&q];
            dsu.union(a, b);
        }
        dsu
    }
}

/// Rebuilds the stabilizer set around faulty devices with superunits on both types.
pub fn reconfigure(l: &Lattice) -> StabilizerLayout {
    build_layout(l, MergePolicy::Superunit)
}

/// Like [`reconfigure`], but falls back to superunits when the requested triangular
/// policy would leave anticommuting stabilizers.
pub fn reconfigure_with(l: &Lattice, policy: MergePolicy) -> StabilizerLayout {
    let lay = build_layout(l, policy);
    if policy != MergePolicy::Superunit && !lay.is_abelian() {
        return build_layout(l, MergePolicy::Superunit);
    }
    lay
}

fn build_layout(l: &Lattice, policy: MergePolicy) -> StabilizerLayout {
    let mut stabs = Vec::new();
    let mut removed = Vec::new();
    let mut boundaries = Vec::new();
    for kind in [StabKind::Z, StabKind::X] {
        let ts = TypeSlots::build(l, kind);
        let mut dsu = ts.merged(l, policy.merges(kind));
        let (b0, b1) = ts.boundary_nodes();
        let (rb0, rb1) = (dsu.find(b0), dsu.find(b1));
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut absorbed0 = Vec::new();
        let mut absorbed1 = Vec::new();
        for (i, &p) in ts.plaquettes.iter().enumerate() {
            let r = dsu.find(i);
            if r == rb0 {
                absorbed0.push(p);
                removed.push((kind, p));
            } else if r == rb1 {
                absorbed1.push(p);
                removed.push((kind, p));
            } else {
                groups.entry(r).or_default().push(p);
            }
        }
        for plaqs in groups.into_values() {
            let mut members = Bits::zeros(l.n_sites());
            for &p in &plaqs {
                for q in l.plaquette(p) {
                    if l.is_working(q) {
                        members.flip(q);
                    }
                }
            }
            let data_members: Vec<usize> = members.ones().collect();
            if data_members.is_empty() {
                continue;
            }
            let ancilla_pool = plaqs.iter().copied().filter(|&a| l.is_working(a)).collect();
            stabs.push(StabilizerSpec {
                id: 0,
                kind,
                data_members,
                ancilla_pool,
                merged_from: plaqs.len(),
                plaquettes: plaqs,
            });
        }
        let (s0, s1, lined) = match kind {
            StabKind::Z => (Side::North, Side::South, StabKind::X),
            StabKind::X => (Side::West, Side::East, StabKind::Z),
        };
        boundaries.push(Boundary {
            side: s0,
            lined_by: lined,
            absorbed: absorbed0,
        });
        boundaries.push(Boundary {
            side: s1,
            lined_by: lined,
            absorbed: absorbed1,
        });
    }
    stabs.sort_by_key(|s| (s.min_site(), s.kind));
    for (i, s) in stabs.iter_mut().enumerate() {
        s.id = i;
    }
    StabilizerLayout {
        lattice: l.clone(),
        stabilizers: stabs,
        boundaries,
        removed,
        policy,
        order_note: "boundary-removal-then-merge".into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encodability {
    pub encodable: bool,
    /// Fewest data qubits in an undetectable north-south X chain.
    pub reduced_d_x: usize,
    /// Fewest data qubits in an undetectable west-east Z chain.
    pub reduced_d_z: usize,
}

impl Encodability {
    pub fn reduced_distance(&self) -> usize {
        self.reduced_d_x.min(self.reduced_d_z)
    }
}

/// Shortest boundary-to-boundary chain in the merged graph of one type; returns its data sites.
fn shortest_chain(l: &Lattice, kind: StabKind, merge: bool) -> Option<Vec<usize>> {
    let ts = TypeSlots::build(l, kind);
    let mut dsu = ts.merged(l, merge);
    let (b0, b1) = ts.boundary_nodes();
    let (src, dst) = (dsu.find(b0), dsu.find(b1));
    if src == dst {
        return Some(Vec::new());
    }
    let mut adj: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    let mut data: Vec<usize> = ts
        .slots
        .keys()
        .copied()
        .filter(|&q| l.is_working(q))
        .collect();
    data.sort_unstable();
    for q in data {
        let [a, b] = ts.slots[&q];
        let (ra, rb) = (dsu.find(a), dsu.find(b));
        if ra != rb {
            adj.entry(ra).or_default().push((rb, q));
            adj.entry(rb).or_default().push((ra, q));
        }
    }
    let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut queue = VecDeque::from([src]);
    let mut seen = std::collections::HashSet::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            break;
        }
        for &(v, q) in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
            if seen.insert(v) {
                prev.insert(v, (u, q));
                queue.push_back(v);
            }
        }
    }
    if !seen.contains(&dst) {
        return None;
    }
    let mut chain = Vec::new();
    let mut cur = dst;
    while cur != src {
        let (p, q) = prev[&cur];
        chain.push(q);
        cur = p;
    }
    chain.sort_unstable();
    Some(chain)
}

/// Reduced distances. A chain of zero length means the boundaries fused through faults.
pub fn encodability_check(layout: &StabilizerLayout) -> Encodability {
    let l = &layout.lattice;
    // X chains are detected by Z stabilizers and vice versa.
    let dx =
        shortest_chain(l, StabKind::Z, layout.policy.merges(StabKind::Z)).map_or(0, |c| c.len());
    let dz =
        shortest_chain(l, StabKind::X, layout.policy.merges(StabKind::X)).map_or(0, |c| c.len());
    Encodability {
        encodable: dx >= 1 && dz >= 1,
        reduced_d_x: dx,
        reduced_d_z: dz,
    }
}

/// Representative logical chains plus the operators used to judge residual errors.
#[derive(Clone, Debug)]
pub struct LogicalOps {
    pub x_chain: Vec<usize>,
    pub z_chain: Vec<usize>,
    /// Z-type support testing residual X errors.
    pub z_judge: Bits,
    /// X-type support testing residual Z errors.
    pub x_judge: Bits,
}

/// Solves `A v = b` over GF(2); rows are (coefficients, rhs).
pub fn solve_gf2(rows: &[(Bits, bool)], nvars: usize) -> Option<Bits> {
    let mut m: Vec<(Bits, bool)> = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..nvars {
        let Some(p) = (r..m.len()).find(|&i| m[i].0.get(col)) else {
            continue;
        };
        m.swap(r, p);
        let pivot = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && row.0.get(col) {
                row.0.xor_assign(&pivot.0);
                row.1 ^= pivot.1;
            }
        }
        pivots.push(col);
        r += 1;
    }
    if m[r..].iter().any(|row| row.1) {
        return None;
    }
    let mut v = Bits::zeros(nvars);
    for (i, &col) in pivots.iter().enumerate() {
        v.set(col, m[i].1);
    }
    Some(v)
}

impl StabilizerLayout {
    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn of_kind(&self, kind: StabKind) -> impl Iterator<Item = &StabilizerSpec> {
        self.stabilizers.iter().filter(move |s| s.kind == kind)
    }

    pub fn is_abelian(&self) -> bool {
        let n = self.n_sites();
        let ops: Vec<PauliString> = self.stabilizers.iter().map(|s| s.operator(n)).collect();
        (0..ops.len()).all(|i| (i + 1..ops.len()).all(|j| ops[i].commutes_unchecked(&ops[j])))
    }

    /// Per data site, how many stabilizers of `kind` contain it.
    pub fn membership_counts(&self, kind: StabKind) -> Vec<usize> {
        let mut cnt = vec![0; self.n_sites()];
        for s in self.of_kind(kind) {
            for &q in &s.data_members {
                cnt[q] += 1;
            }
        }
        cnt
    }

    pub fn logical_ops(&self) -> Option<LogicalOps> {
        let l = &self.lattice;
        let x_chain = shortest_chain(l, StabKind::Z, self.policy.merges(StabKind::Z))?;
        let z_chain = shortest_chain(l, StabKind::X, self.policy.merges(StabKind::X))?;
        if x_chain.is_empty() || z_chain.is_empty() {
            return None;
        }
        let z_judge = self.judge(StabKind::X, &x_chain)?;
        let x_judge = self.judge(StabKind::Z, &z_chain)?;
        Some(LogicalOps {
            x_chain,
            z_chain,
            z_judge,
            x_judge,
        })
    }

    /// Operator of the type opposite to `kind` commuting with every `kind` stabilizer and
    /// junk operator while anticommuting with `chain`.
    fn judge(&self, kind: StabKind, chain: &[usize]) -> Option<Bits> {
        let n = self.n_sites();
        let l = &self.lattice;
        let other: Vec<&StabilizerSpec> = self.of_kind(kind.other()).collect();
        let mut rows: Vec<(Bits, bool)> = Vec::new();
        for s in self.of_kind(kind) {
            rows.push((Bits::from_indices(n, &s.data_members), false));
            if s.merged_from > 1 {
                for &p in &s.plaquettes {
                    let half: Vec<usize> = l
                        .plaquette(p)
                        .into_iter()
                        .filter(|&q| l.is_working(q))
                        .collect();
                    let hb = Bits::from_indices(n, &half);
                    if other
                        .iter()
                        .all(|o| !Bits::from_indices(n, &o.data_members).dot(&hb))
                    {
                        rows.push((hb, false));
                    }
                }
            }
        }
        let counts = self.membership_counts(kind.other());
        for q in l.data_sites() {
            if l.is_working(q) && counts[q] == 0 {
                rows.push((Bits::from_indices(n, &[q]), false));
            }
        }
        for q in l.faulty_sites() {
            rows.push((Bits::from_indices(n, &[q]), false));
        }
        for q in l.ancilla_sites() {
            rows.push((Bits::from_indices(n, &[q]), false));
        }
        rows.push((Bits::from_indices(n, chain), true));
        // Unknown ranges over all sites; ancilla and faulty sites are pinned to zero above.
        let mut v = solve_gf2(&rows, n)?;
        for q in l.faulty_sites() {
            v.set(q, false);
        }
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_counts() {
        let l = Lattice::generate_perfect(3).unwrap();
        assert_eq!(l.n_sites(), 25);
        assert_eq!(l.data_sites().len(), 13);
        assert_eq!(l.ancilla_sites().len(), 12);
        assert!(Lattice::generate_perfect(4).is_err());
        assert!(Lattice::generate_perfect(1).is_err());
    }

    #[test]
    fn perfect_layout_is_plain() {
        let l = Lattice::generate_perfect(5).unwrap();
        let lay = reconfigure(&l);
        assert_eq!(lay.of_kind(StabKind::Z).count(), 20);
        assert_eq!(lay.of_kind(StabKind::X).count(), 20);
        assert!(lay.stabilizers.iter().all(|s| s.merged_from == 1));
        assert!(lay.removed.is_empty());
        let e = encodability_check(&lay);
        assert_eq!((e.encodable, e.reduced_d_x, e.reduced_d_z), (true, 5, 5));
    }

    #[test]
    fn center_fault_merges_both_types() {
        let l = Lattice::generate_perfect(5).unwrap();
        let l = l.with_faults(&[l.center()]);
        let lay = reconfigure(&l);
        assert_eq!(lay.stabilizers.len(), 38);
        let z: Vec<_> = lay.of_kind(StabKind::Z).collect();
        assert_eq!(z.len(), 19);
        let big = z.iter().find(|s| s.merged_from == 2).unwrap();
        assert_eq!(big.data_members, vec![22, 30, 32, 48, 50, 58]);
        assert_eq!(big.ancilla_pool, vec![31, 49]);
        let x = lay
            .of_kind(StabKind::X)
            .find(|s| s.merged_from == 2)
            .unwrap();
        assert_eq!(x.data_members, vec![30, 32, 38, 42, 48, 50]);
        assert_eq!(encodability_check(&lay).reduced_distance(), 4);
        assert!(lay.is_abelian());
    }

    #[test]
    fn boundary_fault_removes_plaquette() {
        let l = Lattice::generate_perfect(5).unwrap();
        let q = l.site(0, 4);
        let lay = reconfigure(&l.with_faults(&[q]));
        assert_eq!(lay.removed, vec![(StabKind::Z, l.site(1, 4))]);
        assert_eq!(lay.of_kind(StabKind::Z).count(), 19);
        assert_eq!(lay.of_kind(StabKind::X).count(), 19);
        let e = encodability_check(&lay);
        assert_eq!(e.reduced_d_x, 4);
        assert!(lay.is_abelian());
    }

    #[test]
    fn spanning_fault_chain_is_unencodable() {
        let l = Lattice::generate_perfect(3).unwrap();
        let row: Vec<usize> = (0..5).map(|c| l.site(2, c)).collect();
        let lay = reconfigure(&l.with_faults(&row));
        assert!(!encodability_check(&lay).encodable);
    }

    #[test]
    fn judges_anticommute_with_chains() {
        let l = Lattice::generate_perfect(5).unwrap();
        for lat in [l.clone(), l.with_faults(&[l.center()])] {
            let lay = reconfigure(&lat);
            let ops = lay.logical_ops().unwrap();
            let n = lat.n_sites();
            assert!(ops.z_judge.dot(&Bits::from_indices(n, &ops.x_chain)));
            assert!(ops.x_judge.dot(&Bits::from_indices(n, &ops.z_chain)));
            for s in lay.of_kind(StabKind::X) {
                assert!(!ops.z_judge.dot(&Bits::from_indices(n, &s.data_members)));
            }
        }
    }

    #[test]
    fn triangular_policy_on_one_type() {
        let l = Lattice::generate_perfect(5).unwrap();
        let l = l.with_faults(&[l.center()]);
        let lay = reconfigure_with(&l, MergePolicy::Triangular(StabKind::Z));
        assert_eq!(lay.policy, MergePolicy::Triangular(StabKind::Z));
        assert_eq!(lay.of_kind(StabKind::Z).count(), 20);
        assert_eq!(lay.of_kind(StabKind::X).count(), 19);
        assert!(lay.is_abelian());
        assert!(lay.of_kind(StabKind::Z).all(|s| s.data_members.len() <= 4));
    }

    #[test]
    fn json_round_trip() {
        let l = Lattice::generate_perfect(5)
            .unwrap()
            .apply_yield(0.9, 11)
            .unwrap();
        let back = Lattice::from_file(&l.to_file()).unwrap();
        assert_eq!(l, back);
    }
}
