//! Forward switchings (remove one good loop) and backward switchings (create
//! one), acting directly on permutations.
//!
//! A forward switching picks a good loop `f = v v x_1 .. x_{k-2}` and an
//! ordered pair of proper blocks `e1`, `e2` vertex-disjoint from `f`, plus
//! `y* in e1 \ e2` and `z* in e2 \ e1`. The leftmost copy of `v` in `f` is
//! swapped with `y*`, the other copy with `z*`. A backward switching picks a
//! vertex `v`, an ordered pair of distinct proper blocks containing `v`, a
//! third proper block `e3` and a pair `{a, b}` of its vertices; `min(a, b)`
//! trades places with the `v` of the first block, `max(a, b)` with the `v`
//! of the second.
//!
//! Forward ops are addressed through a raw sample space of size
//! `l * m^2 * k^2` (loop index, two block indices, two positions); backward
//! ops through `n * d(d-1) * m * C(k,2)` raw tuples. Both spaces have exactly
//! the size of the uniform upper bounds `F_l` and `B`.

use num_bigint::BigUint;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{int_rational, rational, uint_rational};
use crate::model::{classify_edge, EdgeKind, PermSeq, Vertex};
use crate::params::{LPolicy, Params};

/// A forward switching on a permutation in `E_l`, `l >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForwardOp {
    pub loop_block: usize,
    pub e1_block: usize,
    pub e2_block: usize,
    pub y_star: Vertex,
    pub z_star: Vertex,
}

/// A backward switching. `pair.0 < pair.1`; `pair.0` moves into `e1_block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackwardOp {
    pub v: Vertex,
    pub e1_block: usize,
    pub e2_block: usize,
    pub e3_block: usize,
    pub pair: (Vertex, Vertex),
}

/// One point of the forward raw sample space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawForward {
    /// Index into the loop blocks, in block order.
    pub loop_index: usize,
    pub block1: usize,
    pub block2: usize,
    pub pos1: usize,
    pub pos2: usize,
}

impl RawForward {
    /// Mixed-radix code over `[l] x [m] x [m] x [k] x [k]`.
    pub fn encode(&self, params: Params) -> u64 {
        let (m, k) = (params.m as u64, params.k as u64);
        (((self.loop_index as u64 * m + self.block1 as u64) * m + self.block2 as u64) * k
            + self.pos1 as u64)
            * k
            + self.pos2 as u64
    }

    pub fn decode(code: u64, params: Params) -> Self {
        let (m, k) = (params.m as u64, params.k as u64);
        let pos2 = (code % k) as usize;
        let code = code / k;
        let pos1 = (code % k) as usize;
        let code = code / k;
        let block2 = (code % m) as usize;
        let code = code / m;
        let block1 = (code % m) as usize;
        RawForward {
            loop_index: (code / m) as usize,
            block1,
            block2,
            pos1,
            pos2,
        }
    }
}

/// `F_l = d^2 n^2 l`.
pub fn forward_bound(params: Params, l: usize) -> Result<BigUint> {
    if l == 0 {
        return Err(Error::ZeroLevel);
    }
    let (n, d) = (BigUint::from(params.n), BigUint::from(params.d));
    Ok(&d * &d * &n * &n * BigUint::from(l))
}

/// `B = (k-1)/2 * n^2 d^2 (d-1)`, exact.
pub fn backward_bound(params: Params) -> BigRational {
    let (n, d, k) = (params.n as u64, params.d as u64, params.k as u64);
    let num = uint_rational(BigUint::from(k - 1) * n * n * d * d * (d - 1));
    num / int_rational(2)
}

/// Explicit pre-asymptotic `delta_1` with the loop index at its maximum `L`:
/// `C(k,2) (2kLdm + L n d(d-1) + 2k^2 n d^4) / B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delta1 {
    pub value: BigRational,
    pub valid_regime: bool,
}

pub fn delta1_formula(params: Params, loop_cap: usize) -> Delta1 {
    let (n, d, k, m) = (
        params.n as u64,
        params.d as u64,
        params.k as u64,
        params.m as u64,
    );
    let cap = loop_cap as u64;
    let b = backward_bound(params);
    if d < 2 {
        // no loops exist when d = 1, so no switching ever happens
        return Delta1 {
            value: rational(0, 1),
            valid_regime: true,
        };
    }
    let pairs = BigUint::from(k * (k - 1) / 2);
    let sum = BigUint::from(2 * k * cap * d * m)
        + BigUint::from(cap * n * d * (d - 1))
        + BigUint::from(2 * k * k * n) * BigUint::from(d).pow(4);
    let value = uint_rational(pairs * sum) / b;
    let valid_regime = value < rational(1, 1);
    Delta1 { value, valid_regime }
}

/// Per-permutation data for the switching enumerations. Reused across many
/// permutations of the same shape.
#[derive(Debug, Clone)]
pub struct Switcher {
    params: Params,
    loop_cap: usize,
    seq: Vec<Vertex>,
    sorted: Vec<Vertex>,
    kinds: Vec<EdgeKind>,
    /// Doubled vertex of each good loop block, 0 otherwise.
    doubled: Vec<Vertex>,
    /// Block indices ordered by block content.
    order: Vec<u32>,
    loops: Vec<usize>,
    /// Positions of vertex `v` at `occ[(v-1)*d ..][..d]`.
    occ: Vec<u32>,
    fill: Vec<usize>,
    level: Option<usize>,
    lambda: usize,
    scratch: [Vec<Vertex>; 3],
}

fn replace_sorted(src: &[Vertex], remove: &[Vertex], add: &[Vertex], out: &mut Vec<Vertex>) {
    out.clear();
    out.extend_from_slice(src);
    for r in remove {
        let i = out.iter().position(|x| x == r).expect("removed vertex present");
        out.remove(i);
    }
    out.extend_from_slice(add);
    out.sort_unstable();
}

fn disjoint(a: &[Vertex], b: &[Vertex]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

fn intersection_size(a: &[Vertex], b: &[Vertex]) -> usize {
    let (mut i, mut j, mut s) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += 1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

impl Switcher {
    pub fn new(params: Params, policy: LPolicy) -> Self {
        Switcher {
            params,
            loop_cap: params.loop_cap(policy),
            seq: Vec::with_capacity(params.len()),
            sorted: Vec::with_capacity(params.len()),
            kinds: Vec::with_capacity(params.m),
            doubled: Vec::with_capacity(params.m),
            order: Vec::with_capacity(params.m),
            loops: Vec::new(),
            occ: vec![0; params.len()],
            fill: vec![0; params.n],
            level: None,
            lambda: 0,
            scratch: Default::default(),
        }
    }

    /// Load a sequence known to be a permutation of the right shape.
    /// Returns its level `l` if it lies in `E_l`.
    pub fn load(&mut self, seq: &[Vertex]) -> Option<usize> {
        let (k, d) = (self.params.k, self.params.d);
        debug_assert_eq!(seq.len(), self.params.len());
        self.seq.clear();
        self.seq.extend_from_slice(seq);
        self.sorted.clear();
        self.sorted.extend_from_slice(seq);
        self.kinds.clear();
        self.doubled.clear();
        self.loops.clear();
        let mut bad = false;
        for (i, block) in self.sorted.chunks_mut(k).enumerate() {
            block.sort_unstable();
            let kind = classify_edge(block);
            let dv = if kind == EdgeKind::GoodLoop {
                block.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]).unwrap_or(0)
            } else {
                0
            };
            if kind.is_loop() {
                self.loops.push(i);
            }
            bad |= matches!(kind, EdgeKind::BadLoop(_));
            self.kinds.push(kind);
            self.doubled.push(dv);
        }
        self.order.clear();
        self.order.extend(0..self.params.m as u32);
        let sorted = &self.sorted;
        self.order
            .sort_unstable_by(|&a, &b| sorted[a as usize * k..][..k].cmp(&sorted[b as usize * k..][..k]));
        let multi = self
            .order
            .windows(2)
            .any(|w| sorted[w[0] as usize * k..][..k] == sorted[w[1] as usize * k..][..k]);
        self.fill.fill(0);
        for (pos, &v) in seq.iter().enumerate() {
            let slot = v as usize - 1;
            self.occ[slot * d + self.fill[slot]] = pos as u32;
            self.fill[slot] += 1;
        }
        self.lambda = self.loops.len();
        self.level = (!multi && !bad && self.lambda <= self.loop_cap).then_some(self.lambda);
        self.level
    }

    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn loop_cap(&self) -> usize {
        self.loop_cap
    }

    pub fn params(&self) -> Params {
        self.params
    }

    fn block_sorted(&self, i: usize) -> &[Vertex] {
        let k = self.params.k;
        &self.sorted[i * k..(i + 1) * k]
    }

    /// Number of blocks whose multiset equals `edge` (sorted).
    fn count_equal(&self, edge: &[Vertex]) -> usize {
        let k = self.params.k;
        let block = |i: u32| &self.sorted[i as usize * k..(i as usize + 1) * k];
        let lo = self.order.partition_point(|&i| block(i) < edge);
        self.order[lo..].partition_point(|&i| block(i) == edge)
    }

    /// True if `edge` would not repeat any block other than those in `replaced`.
    fn is_fresh(&self, edge: &[Vertex], replaced: [usize; 3]) -> bool {
        let same_replaced = replaced
            .iter()
            .filter(|&&b| self.block_sorted(b) == edge)
            .count();
        self.count_equal(edge) == same_replaced
    }

    fn forward_len(&self) -> u64 {
        let (m, k) = (self.params.m as u64, self.params.k as u64);
        self.loops.len() as u64 * m * m * k * k
    }

    /// Decode a raw tuple into a valid forward op, or `None`.
    pub fn decode_forward(&mut self, raw: RawForward) -> Option<ForwardOp> {
        let (k, m) = (self.params.k, self.params.m);
        if self.level.is_none()
            || raw.loop_index >= self.loops.len()
            || raw.block1 >= m
            || raw.block2 >= m
            || raw.pos1 >= k
            || raw.pos2 >= k
        {
            return None;
        }
        let f = self.loops[raw.loop_index];
        let (b1, b2) = (raw.block1, raw.block2);
        if b1 == b2 || self.kinds[b1] != EdgeKind::Proper || self.kinds[b2] != EdgeKind::Proper {
            return None;
        }
        let v = self.doubled[f];
        if v == 0 {
            return None;
        }
        let blk = |i: usize| &self.sorted[i * k..(i + 1) * k];
        let (fs, s1, s2) = (blk(f), blk(b1), blk(b2));
        if !disjoint(s1, fs) || !disjoint(s2, fs) {
            return None;
        }
        let y_star = self.seq[b1 * k + raw.pos1];
        let z_star = self.seq[b2 * k + raw.pos2];
        if s2.binary_search(&y_star).is_ok() || s1.binary_search(&z_star).is_ok() {
            return None;
        }
        if intersection_size(s1, s2) > k - 2 {
            return None;
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        let [n1, n2, n3] = &mut scratch;
        replace_sorted(s1, &[y_star], &[v], n1);
        replace_sorted(s2, &[z_star], &[v], n2);
        replace_sorted(fs, &[v, v], &[y_star, z_star], n3);
        debug_assert!([&*n1, &*n2, &*n3].iter().all(|e| classify_edge(e) == EdgeKind::Proper));
        let replaced = [f, b1, b2];
        let ok = n1 != n2
            && n1 != n3
            && n2 != n3
            && self.is_fresh(n1, replaced)
            && self.is_fresh(n2, replaced)
            && self.is_fresh(n3, replaced);
        self.scratch = scratch;
        ok.then_some(ForwardOp {
            loop_block: f,
            e1_block: b1,
            e2_block: b2,
            y_star,
            z_star,
        })
    }

    /// Visit every valid forward op in raw-code order.
    pub fn for_each_forward(&mut self, mut visit: impl FnMut(RawForward, ForwardOp)) {
        if self.level.is_none() {
            return;
        }
        let (m, k) = (self.params.m, self.params.k);
        for loop_index in 0..self.loops.len() {
            for block1 in 0..m {
                if self.kinds[block1] != EdgeKind::Proper {
                    continue;
                }
                for block2 in 0..m {
                    if block2 == block1 || self.kinds[block2] != EdgeKind::Proper {
                        continue;
                    }
                    for pos1 in 0..k {
                        for pos2 in 0..k {
                            let raw = RawForward {
                                loop_index,
                                block1,
                                block2,
                                pos1,
                                pos2,
                            };
                            if let Some(op) = self.decode_forward(raw) {
                                visit(raw, op);
                            }
                        }
                    }
                }
            }
        }
    }

    /// `F(y)`.
    pub fn count_forward(&mut self) -> u64 {
        let mut c = 0;
        self.for_each_forward(|_, _| c += 1);
        c
    }

    fn backward_candidate(&mut self, v: Vertex, i: usize, j: usize, b3: usize, p: usize, q: usize) -> Option<BackwardOp> {
        let (k, d) = (self.params.k, self.params.d);
        let base = (v as usize - 1) * d;
        let e1 = self.occ[base + i] as usize / k;
        let e2 = self.occ[base + j] as usize / k;
        if e1 == e2
            || b3 == e1
            || b3 == e2
            || self.kinds[e1] != EdgeKind::Proper
            || self.kinds[e2] != EdgeKind::Proper
            || self.kinds[b3] != EdgeKind::Proper
        {
            return None;
        }
        let blk = |i: usize| &self.sorted[i * k..(i + 1) * k];
        let (s1, s2, s3) = (blk(e1), blk(e2), blk(b3));
        if s3.binary_search(&v).is_ok() {
            return None;
        }
        let (x, y) = (self.seq[b3 * k + p], self.seq[b3 * k + q]);
        let (lo, hi) = (x.min(y), x.max(y));
        // e1 = s1 - v + lo and e2 = s2 - v + hi must be proper, lo only in e1, hi only in e2
        if s1.binary_search(&lo).is_ok()
            || s2.binary_search(&lo).is_ok()
            || s1.binary_search(&hi).is_ok()
            || s2.binary_search(&hi).is_ok()
        {
            return None;
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        let [n1, n2, nf] = &mut scratch;
        replace_sorted(s1, &[v], &[lo], n1);
        replace_sorted(s2, &[v], &[hi], n2);
        replace_sorted(s3, &[lo, hi], &[v, v], nf);
        let rest_of_f = nf.iter().copied().filter(|&w| w != v);
        let mut ok = true;
        for w in rest_of_f {
            if n1.binary_search(&w).is_ok() || n2.binary_search(&w).is_ok() {
                ok = false;
                break;
            }
        }
        let replaced = [e1, e2, b3];
        ok = ok
            && intersection_size(n1, n2) <= k - 2
            && n1 != n2
            && self.is_fresh(n1, replaced)
            && self.is_fresh(n2, replaced)
            && self.is_fresh(nf, replaced);
        debug_assert!(!ok || classify_edge(nf) == EdgeKind::GoodLoop);
        self.scratch = scratch;
        ok.then_some(BackwardOp {
            v,
            e1_block: e1,
            e2_block: e2,
            e3_block: b3,
            pair: (lo, hi),
        })
    }

    /// Visit every valid backward op, ordered by `(v, occurrence pair, e3, position pair)`.
    pub fn for_each_backward(&mut self, mut visit: impl FnMut(BackwardOp)) -> Result<()> {
        let level = self.level.ok_or(Error::NotInE)?;
        if level + 1 > self.loop_cap {
            return Err(Error::AboveLoopCap {
                level,
                cap: self.loop_cap,
            });
        }
        let (n, d, m, k) = (self.params.n, self.params.d, self.params.m, self.params.k);
        for v in 1..=n as Vertex {
            for i in 0..d {
                for j in 0..d {
                    if i == j {
                        continue;
                    }
                    for b3 in 0..m {
                        for p in 0..k {
                            for q in p + 1..k {
                                if let Some(op) = self.backward_candidate(v, i, j, b3, p, q) {
                                    visit(op);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `B(z)`.
    pub fn count_backward(&mut self) -> Result<u64> {
        let mut c = 0;
        self.for_each_backward(|_| c += 1)?;
        Ok(c)
    }

    /// The loaded permutation's multigraph as a flat key: blocks sorted
    /// internally and then among themselves.
    pub fn multigraph_key(&self, out: &mut Vec<Vertex>) {
        out.clear();
        for &i in &self.order {
            out.extend_from_slice(self.block_sorted(i as usize));
        }
    }

    /// Size of the forward raw space for the loaded permutation, `l m^2 k^2`.
    pub fn forward_space(&self) -> u64 {
        self.forward_len()
    }
}

fn level_of(y: &PermSeq, policy: LPolicy) -> (Switcher, Option<usize>) {
    let mut sw = Switcher::new(y.params(), policy);
    let level = sw.load(y.as_slice());
    (sw, level)
}

/// All valid forward ops of `y in E_l`, `l >= 1`, in raw-code order. `F(y)` is the length.
pub fn enumerate_forward(y: &PermSeq, policy: LPolicy) -> Result<Vec<ForwardOp>> {
    let (mut sw, level) = level_of(y, policy);
    match level {
        Some(l) if l >= 1 => {
            let mut ops = Vec::new();
            sw.for_each_forward(|_, op| ops.push(op));
            Ok(ops)
        }
        Some(_) => Err(Error::NoLoops),
        None => Err(Error::NotInE),
    }
}

/// All valid backward ops of `y in E_l` with `l + 1 <= L`. `B(y)` is the length.
pub fn enumerate_backward(y: &PermSeq, policy: LPolicy) -> Result<Vec<BackwardOp>> {
    let (mut sw, _) = level_of(y, policy);
    let mut ops = Vec::new();
    sw.for_each_backward(|op| ops.push(op))?;
    Ok(ops)
}

/// Decode a raw forward tuple against `y`; `Ok(None)` marks an invalid tuple.
pub fn decode_raw_forward(y: &PermSeq, policy: LPolicy, raw: RawForward) -> Result<Option<ForwardOp>> {
    let (mut sw, level) = level_of(y, policy);
    match level {
        Some(l) if l >= 1 => Ok(sw.decode_forward(raw)),
        Some(_) => Err(Error::NoLoops),
        None => Err(Error::NotInE),
    }
}

fn position_in_block(y: &PermSeq, block: usize, v: Vertex) -> Option<usize> {
    y.block(block).iter().position(|&x| x == v)
}

/// The raw tuple addressing `op` on `y`, if `op` is structurally addressable.
fn raw_for(y: &PermSeq, op: &ForwardOp) -> Option<RawForward> {
    let k = y.params().k;
    let m = y.params().m;
    if op.loop_block >= m || op.e1_block >= m || op.e2_block >= m {
        return None;
    }
    let loop_index = (0..op.loop_block)
        .filter(|&b| classify_edge(&sorted(y.block(b))).is_loop())
        .count();
    if !classify_edge(&sorted(y.block(op.loop_block))).is_loop() {
        return None;
    }
    let pos1 = position_in_block(y, op.e1_block, op.y_star)?;
    let pos2 = position_in_block(y, op.e2_block, op.z_star)?;
    debug_assert!(pos1 < k && pos2 < k);
    Some(RawForward {
        loop_index,
        block1: op.e1_block,
        block2: op.e2_block,
        pos1,
        pos2,
    })
}

fn sorted(block: &[Vertex]) -> Vec<Vertex> {
    let mut b = block.to_vec();
    b.sort_unstable();
    b
}

/// Apply a forward switching: the leftmost `v` of the loop block trades places
/// with `y*` in `e1`, the rightmost with `z*` in `e2`.
pub fn apply_forward(y: &PermSeq, policy: LPolicy, op: &ForwardOp) -> Result<PermSeq> {
    let raw = raw_for(y, op).ok_or(Error::InvalidSwitching)?;
    let (mut sw, level) = level_of(y, policy);
    if !matches!(level, Some(l) if l >= 1) {
        return Err(Error::NoLoops);
    }
    if sw.decode_forward(raw) != Some(*op) {
        return Err(Error::InvalidSwitching);
    }
    Ok(apply_forward_unchecked(y, op))
}

pub(crate) fn apply_forward_unchecked(y: &PermSeq, op: &ForwardOp) -> PermSeq {
    let k = y.params().k;
    let f = y.block(op.loop_block);
    let v = {
        let s = sorted(f);
        s.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]).expect("good loop")
    };
    let left = f.iter().position(|&x| x == v).expect("v in loop");
    let right = f.iter().rposition(|&x| x == v).expect("v in loop");
    let p1 = position_in_block(y, op.e1_block, op.y_star).expect("y* in e1");
    let p2 = position_in_block(y, op.e2_block, op.z_star).expect("z* in e2");
    let mut z = y.clone();
    z.swap(op.loop_block * k + left, op.e1_block * k + p1);
    z.swap(op.loop_block * k + right, op.e2_block * k + p2);
    z
}

/// Apply a backward switching: `pair.0` trades places with the `v` in
/// `e1_block`, `pair.1` with the `v` in `e2_block`.
pub fn apply_backward(y: &PermSeq, policy: LPolicy, op: &BackwardOp) -> Result<PermSeq> {
    if !enumerate_backward(y, policy)?.contains(op) {
        return Err(Error::InvalidSwitching);
    }
    Ok(apply_backward_unchecked(y, op))
}

pub(crate) fn apply_backward_unchecked(y: &PermSeq, op: &BackwardOp) -> PermSeq {
    let k = y.params().k;
    let q1 = position_in_block(y, op.e1_block, op.v).expect("v in e1");
    let q2 = position_in_block(y, op.e2_block, op.v).expect("v in e2");
    let pa = position_in_block(y, op.e3_block, op.pair.0).expect("pair in e3");
    let pb = position_in_block(y, op.e3_block, op.pair.1).expect("pair in e3");
    let mut z = y.clone();
    z.swap(op.e1_block * k + q1, op.e3_block * k + pa);
    z.swap(op.e2_block * k + q2, op.e3_block * k + pb);
    z
}

/// The backward op on `apply_forward(y, op)` that restores `y`.
pub fn inverse_of_forward(y: &PermSeq, op: &ForwardOp) -> BackwardOp {
    let s = sorted(y.block(op.loop_block));
    let v = s.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]).expect("good loop");
    let (e1_block, e2_block) = if op.y_star < op.z_star {
        (op.e1_block, op.e2_block)
    } else {
        (op.e2_block, op.e1_block)
    };
    BackwardOp {
        v,
        e1_block,
        e2_block,
        e3_block: op.loop_block,
        pair: (op.y_star.min(op.z_star), op.y_star.max(op.z_star)),
    }
}

/// The forward op on `apply_backward(z, op)` that restores `z`.
pub fn inverse_of_backward(z: &PermSeq, op: &BackwardOp) -> ForwardOp {
    let pa = position_in_block(z, op.e3_block, op.pair.0).expect("pair in e3");
    let pb = position_in_block(z, op.e3_block, op.pair.1).expect("pair in e3");
    if pa < pb {
        ForwardOp {
            loop_block: op.e3_block,
            e1_block: op.e1_block,
            e2_block: op.e2_block,
            y_star: op.pair.0,
            z_star: op.pair.1,
        }
    } else {
        ForwardOp {
            loop_block: op.e3_block,
            e1_block: op.e2_block,
            e2_block: op.e1_block,
            y_star: op.pair.1,
            z_star: op.pair.0,
        }
    }
}

/// Per-level totals from an exhaustive scan of `P`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSwitchStats {
    pub level: usize,
    pub size: u64,
    /// Sum of `F(y)` over `E_l` (zero at level 0).
    pub sum_forward: u64,
    pub min_forward: Option<u64>,
    pub max_forward: Option<u64>,
    /// Sum of `B(z)` over `E_l`; `None` at `l = L`, where no backward op is defined.
    pub sum_backward: Option<u64>,
    pub min_backward: Option<u64>,
    pub max_backward: Option<u64>,
    pub forward_bound_violations: u64,
    pub backward_bound_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchScan {
    pub params: Params,
    pub loop_cap: usize,
    pub permutations: u64,
    pub levels: Vec<LevelSwitchStats>,
}

impl SwitchScan {
    /// `(l, sum F over E_l, sum B over E_{l-1})` for `1 <= l <= L`.
    pub fn double_counting(&self) -> Vec<(usize, u64, u64)> {
        (1..=self.loop_cap)
            .map(|l| {
                let f = self.levels[l].sum_forward;
                let b = self.levels[l - 1].sum_backward.unwrap_or(0);
                (l, f, b)
            })
            .collect()
    }

    pub fn bound_violations(&self) -> u64 {
        self.levels
            .iter()
            .map(|s| s.forward_bound_violations + s.backward_bound_violations)
            .sum()
    }
}

fn bump(min: &mut Option<u64>, max: &mut Option<u64>, x: u64) {
    *min = Some(min.map_or(x, |m| m.min(x)));
    *max = Some(max.map_or(x, |m| m.max(x)));
}

/// Scan every permutation of `P`, computing `F(y)` and `B(y)` directly for
/// each member of `E`.
pub fn exhaustive_switch_scan(
    params: Params,
    policy: LPolicy,
    guard: crate::params::CostGuard,
) -> Result<SwitchScan> {
    crate::enumeration::check_permutation_guard(params, guard)?;
    let cap = params.loop_cap(policy);
    let mut levels: Vec<LevelSwitchStats> = (0..=cap)
        .map(|level| LevelSwitchStats {
            level,
            sum_backward: (level < cap).then_some(0),
            ..Default::default()
        })
        .collect();
    let b_bound = backward_bound(params);
    let f_bounds: Vec<u64> = (0..=cap)
        .map(|l| {
            if l == 0 {
                0
            } else {
                u64::try_from(forward_bound(params, l).expect("l >= 1")).unwrap_or(u64::MAX)
            }
        })
        .collect();
    let mut sw = Switcher::new(params, policy);
    let mut total = 0u64;
    let mut err = None;
    crate::model::for_each_permutation(params, |seq| {
        total += 1;
        let Some(l) = sw.load(seq) else { return };
        let st = &mut levels[l];
        st.size += 1;
        if l >= 1 {
            let f = sw.count_forward();
            st.sum_forward += f;
            bump(&mut st.min_forward, &mut st.max_forward, f);
            if f > f_bounds[l] {
                st.forward_bound_violations += 1;
            }
        }
        if l < cap {
            match sw.count_backward() {
                Ok(b) => {
                    *st.sum_backward.get_or_insert(0) += b;
                    bump(&mut st.min_backward, &mut st.max_backward, b);
                    if int_rational(b) > b_bound {
                        st.backward_bound_violations += 1;
                    }
                }
                Err(e) => err = Some(e),
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(SwitchScan {
        params,
        loop_cap: cap,
        permutations: total,
        levels,
    })
}

/// Count, over every `y in E` with loops, the forward ops whose output
/// coincides with the output of another op on the same `y`.
pub fn forward_injectivity_violations(
    params: Params,
    policy: LPolicy,
    guard: crate::params::CostGuard,
) -> Result<u64> {
    crate::enumeration::check_permutation_guard(params, guard)?;
    let mut sw = Switcher::new(params, policy);
    let mut outputs: rustc_hash::FxHashSet<Vec<Vertex>> = Default::default();
    let mut ops = Vec::new();
    let mut collisions = 0u64;
    crate::model::for_each_permutation(params, |seq| {
        match sw.load(seq) {
            Some(l) if l >= 1 => {}
            _ => return,
        }
        ops.clear();
        sw.for_each_forward(|_, op| ops.push(op));
        outputs.clear();
        let y = PermSeq::from_raw_unchecked(params, seq.to_vec());
        for op in &ops {
            if !outputs.insert(apply_forward_unchecked(&y, op).into_vec()) {
                collisions += 1;
            }
        }
    });
    Ok(collisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify_perm, sample_permutation};
    use crate::rng::stream_rng;

    fn p(n: usize, d: usize, k: usize) -> Params {
        Params::new(n, d, k).unwrap()
    }

    /// Blocks (1,1,2),(3,4,5),(6,7,8),(2,3,6),(4,7,9),(5,8,9) at n=9, d=2, k=3.
    fn worked_example() -> PermSeq {
        PermSeq::new(
            p(9, 2, 3),
            vec![1, 1, 2, 3, 4, 5, 6, 7, 8, 2, 3, 6, 4, 7, 9, 5, 8, 9],
        )
        .unwrap()
    }

    #[test]
    fn constants() {
        assert_eq!(forward_bound(p(4, 3, 3), 1).unwrap(), BigUint::from(144u32));
        assert_eq!(forward_bound(p(4, 3, 3), 0), Err(Error::ZeroLevel));
        assert_eq!(backward_bound(p(4, 3, 3)), int_rational(288));
        assert_eq!(backward_bound(p(500, 3, 3)), int_rational(4_500_000));
        assert_eq!(backward_bound(p(6, 1, 3)), int_rational(0));
        // 320 000 = d^2 n^2 l for n = 100, d = 4, l = 2; that triple is not a
        // valid instance for k = 3, so check the same arithmetic at k = 4.
        assert_eq!(forward_bound(p(100, 4, 4), 2).unwrap(), BigUint::from(320_000u32));
    }

    #[test]
    fn forward_bound_equals_k2_m2_l() {
        for (n, d, k) in [(4, 3, 3), (6, 2, 3), (8, 1, 4), (10, 6, 5), (500, 3, 3)] {
            let params = p(n, d, k);
            for l in 1..4 {
                let alt = BigUint::from(k * k * params.m * params.m * l);
                assert_eq!(forward_bound(params, l).unwrap(), alt);
            }
        }
    }

    #[test]
    fn bound_ratio_is_exact() {
        for (n, d, k) in [(4, 3, 3), (6, 2, 3), (9, 2, 3), (10, 6, 5), (500, 3, 3)] {
            let params = p(n, d, k);
            for l in 1..5usize {
                let ratio = backward_bound(params) / uint_rational(forward_bound(params, l).unwrap());
                let want = rational(((k - 1) * (d - 1)) as i64, (2 * l) as i64);
                assert_eq!(ratio, want);
            }
        }
    }

    #[test]
    fn delta1_examples() {
        let d = delta1_formula(p(500, 3, 3), 38);
        assert_eq!(d.value, rational(3_555_000, 4_500_000));
        assert!(d.valid_regime);
        let d = delta1_formula(p(6, 2, 3), 3);
        assert_eq!(d.value, rational(5724, 144));
        assert!(!d.valid_regime);
        let mut last = None;
        for n in [1_000usize, 10_000, 100_000] {
            let params = p(n, 3, 3);
            let v = delta1_formula(params, params.loop_cap(LPolicy::SqrtNd)).value;
            if let Some(prev) = last {
                assert!(v < prev);
            }
            last = Some(v);
        }
    }

    #[test]
    fn worked_forward_example() {
        let y = worked_example();
        let pol = LPolicy::SqrtNd;
        assert_eq!(classify_perm(&y, pol).level, Some(1));
        let bad = ForwardOp {
            loop_block: 0,
            e1_block: 1,
            e2_block: 2,
            y_star: 3,
            z_star: 6,
        };
        assert_eq!(apply_forward(&y, pol, &bad), Err(Error::InvalidSwitching));
        let good = ForwardOp { y_star: 4, ..bad };
        let ops = enumerate_forward(&y, pol).unwrap();
        assert!(ops.contains(&good));
        assert!(!ops.contains(&bad));
        let z = apply_forward(&y, pol, &good).unwrap();
        assert_eq!(
            z.as_slice(),
            &[4, 6, 2, 3, 1, 5, 1, 7, 8, 2, 3, 6, 4, 7, 9, 5, 8, 9]
        );
        assert_eq!(classify_perm(&z, pol).level, Some(0));

        // the mirrored ordering of the same configuration gives a different permutation
        let mirrored = ForwardOp {
            loop_block: 0,
            e1_block: 2,
            e2_block: 1,
            y_star: 6,
            z_star: 4,
        };
        let z2 = apply_forward(&y, pol, &mirrored).unwrap();
        assert_ne!(z, z2);

        let back = inverse_of_forward(&y, &good);
        assert_eq!(back.pair, (4, 6));
        assert_eq!(back.v, 1);
        assert!(enumerate_backward(&z, pol).unwrap().contains(&back));
        let restored = apply_backward(&z, pol, &back).unwrap();
        assert_eq!(restored, y);
        assert_eq!(classify_perm(&restored, pol).lambda, 1);
        assert_eq!(inverse_of_backward(&z, &back), good);
    }

    #[test]
    fn raw_decoding() {
        let y = worked_example();
        let pol = LPolicy::SqrtNd;
        // block1 is the loop block itself
        let raw = RawForward {
            loop_index: 0,
            block1: 0,
            block2: 2,
            pos1: 0,
            pos2: 0,
        };
        assert_eq!(decode_raw_forward(&y, pol, raw).unwrap(), None);
        // y* shared between e1 and e2: blocks (3,4,5) and (4,7,9) share 4
        let raw = RawForward {
            loop_index: 0,
            block1: 1,
            block2: 4,
            pos1: 1,
            pos2: 0,
        };
        assert_eq!(decode_raw_forward(&y, pol, raw).unwrap(), None);
        let raw = RawForward {
            loop_index: 0,
            block1: 1,
            block2: 2,
            pos1: 1,
            pos2: 0,
        };
        assert!(decode_raw_forward(&y, pol, raw).unwrap().is_some());
        let params = y.params();
        for code in [0u64, 17, 323, 1295] {
            assert_eq!(RawForward::decode(code, params).encode(params), code);
        }
        let z = PermSeq::canonical(p(6, 1, 3));
        assert_eq!(decode_raw_forward(&z, pol, raw), Err(Error::NoLoops));
    }

    #[test]
    fn raw_count_matches_enumeration() {
        let params = p(9, 2, 3);
        let pol = LPolicy::SqrtNd;
        let mut rng = stream_rng(21, 0);
        let mut checked = 0;
        while checked < 40 {
            let y = sample_permutation(params, &mut rng);
            let mut sw = Switcher::new(params, pol);
            match sw.load(y.as_slice()) {
                Some(l) if l >= 1 => {}
                _ => continue,
            }
            let space = sw.forward_space();
            let valid = (0..space)
                .filter(|&c| sw.decode_forward(RawForward::decode(c, params)).is_some())
                .count();
            assert_eq!(valid, enumerate_forward(&y, pol).unwrap().len());
            checked += 1;
        }
    }

    #[test]
    fn degree_one_has_no_backward_ops() {
        let params = p(6, 1, 3);
        let mut rng = stream_rng(3, 0);
        for _ in 0..20 {
            let y = sample_permutation(params, &mut rng);
            assert!(enumerate_backward(&y, LPolicy::SqrtNd).unwrap().is_empty());
        }
    }

    #[test]
    fn backward_errors() {
        // two good loops, level 2 = L
        let params = p(3, 2, 3);
        let y = PermSeq::new(params, vec![1, 1, 2, 3, 3, 2]).unwrap();
        assert_eq!(
            enumerate_backward(&y, LPolicy::SqrtNd),
            Err(Error::AboveLoopCap { level: 2, cap: 2 })
        );
        let y = PermSeq::new(params, vec![1, 2, 3, 3, 2, 1]).unwrap();
        assert_eq!(enumerate_backward(&y, LPolicy::SqrtNd), Err(Error::NotInE));
        assert_eq!(enumerate_forward(&y, LPolicy::SqrtNd), Err(Error::NotInE));
        let y = PermSeq::new(p(6, 1, 3), vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(enumerate_forward(&y, LPolicy::SqrtNd), Err(Error::NoLoops));
    }

    #[test]
    fn backward_ops_create_one_loop() {
        let params = p(9, 2, 3);
        let pol = LPolicy::SqrtNd;
        let mut rng = stream_rng(8, 0);
        let mut seen = 0;
        while seen < 30 {
            let z = sample_permutation(params, &mut rng);
            let Some(l) = classify_perm(&z, pol).level else { continue };
            if l + 1 > params.loop_cap(pol) {
                continue;
            }
            for op in enumerate_backward(&z, pol).unwrap() {
                let y = apply_backward(&z, pol, &op).unwrap();
                assert_eq!(classify_perm(&y, pol).level, Some(l + 1));
                let fwd = inverse_of_backward(&z, &op);
                assert_eq!(apply_forward(&y, pol, &fwd).unwrap(), z);
                assert_eq!(inverse_of_forward(&y, &fwd), op);
            }
            seen += 1;
        }
    }

    #[test]
    fn tiny_instance_has_no_forward_ops() {
        // At n=3, d=2 every member of E is two good loops; nothing proper to switch with.
        let params = p(3, 2, 3);
        crate::model::for_each_permutation(params, |seq| {
            let y = PermSeq::new(params, seq.to_vec()).unwrap();
            if let Some(l) = classify_perm(&y, LPolicy::SqrtNd).level {
                assert_eq!(l, 2);
                assert!(enumerate_forward(&y, LPolicy::SqrtNd).unwrap().is_empty());
            }
        });
    }
}
