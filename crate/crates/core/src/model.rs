//! The permutation model: a permutation of the multiset with `d` copies of
//! each label in `1..=n`, read as `m` consecutive blocks of size `k`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LPolicy, Params};

pub type Vertex = u32;

/// A permutation of `(1^d, 2^d, ..., n^d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermSeq {
    params: Params,
    seq: Vec<Vertex>,
}

impl PermSeq {
    /// Validates length and label counts.
    pub fn new(params: Params, seq: Vec<Vertex>) -> Result<Self> {
        if seq.len() != params.len() {
            return Err(Error::LengthMismatch {
                got: seq.len(),
                expected: params.len(),
            });
        }
        let mut counts = vec![0usize; params.n + 1];
        for &v in &seq {
            if v == 0 || v as usize > params.n {
                return Err(Error::LabelOutOfRange { label: v, n: params.n });
            }
            counts[v as usize] += 1;
        }
        if let Some((label, &count)) = counts.iter().enumerate().skip(1).find(|(_, &c)| c != params.d) {
            return Err(Error::LabelCount {
                label: label as Vertex,
                count,
                d: params.d,
            });
        }
        Ok(PermSeq { params, seq })
    }

    /// `(1,..,1, 2,..,2, ..., n,..,n)`, the lexicographically first permutation.
    pub fn canonical(params: Params) -> Self {
        let seq = (1..=params.n as Vertex)
            .flat_map(|v| std::iter::repeat_n(v, params.d))
            .collect();
        PermSeq { params, seq }
    }

    pub(crate) fn from_raw_unchecked(params: Params, seq: Vec<Vertex>) -> Self {
        debug_assert_eq!(seq.len(), params.len());
        PermSeq { params, seq }
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn as_slice(&self) -> &[Vertex] {
        &self.seq
    }

    pub fn into_vec(self) -> Vec<Vertex> {
        self.seq
    }

    pub fn block(&self, i: usize) -> &[Vertex] {
        let k = self.params.k;
        &self.seq[i * k..(i + 1) * k]
    }

    pub fn blocks(&self) -> std::slice::Chunks<'_, Vertex> {
        self.seq.chunks(self.params.k)
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize) {
        self.seq.swap(a, b);
    }

    /// JSON array of the `nd` labels, no whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.seq).expect("vector of integers serializes")
    }
}

/// Uniform draw from the `(nd)!/(d!)^n` distinct permutations, by an unbiased
/// Fisher-Yates shuffle of the canonical sequence.
pub fn sample_permutation<R: Rng + ?Sized>(params: Params, rng: &mut R) -> PermSeq {
    let mut y = PermSeq::canonical(params);
    y.seq.shuffle(rng);
    y
}

/// A `k`-element vertex multiset, stored as a sorted tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiEdge(Vec<Vertex>);

impl MultiEdge {
    pub fn from_block(block: &[Vertex]) -> Self {
        let mut v = block.to_vec();
        v.sort_unstable();
        MultiEdge(v)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.0
    }

    pub fn kind(&self) -> EdgeKind {
        classify_edge(&self.0)
    }
}

impl fmt::Display for MultiEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BadLoopReason {
    /// Some vertex appears three or more times.
    MultiplicityAtLeast3,
    /// At least two distinct vertices each appear twice.
    TwoRepeated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Proper,
    /// Exactly one vertex doubled, `k - 1` distinct vertices.
    GoodLoop,
    BadLoop(BadLoopReason),
}

impl EdgeKind {
    pub fn is_loop(self) -> bool {
        self != EdgeKind::Proper
    }
}

/// Classify a sorted block.
pub fn classify_edge(sorted: &[Vertex]) -> EdgeKind {
    let mut doubled = 0;
    let mut run = 1;
    let mut max_run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run == 2 {
                doubled += 1;
            }
            max_run = max_run.max(run);
            run = 1;
        }
    }
    if run == 2 {
        doubled += 1;
    }
    max_run = max_run.max(run);
    match (max_run, doubled) {
        (1, _) => EdgeKind::Proper,
        (2, 1) => EdgeKind::GoodLoop,
        (2, _) => EdgeKind::BadLoop(BadLoopReason::TwoRepeated),
        _ => EdgeKind::BadLoop(BadLoopReason::MultiplicityAtLeast3),
    }
}

/// The `k`-multigraph `H(y)`: the sorted multiset of its `m` edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multigraph {
    params: Params,
    edges: Vec<MultiEdge>,
}

impl Multigraph {
    pub fn from_edges(params: Params, mut edges: Vec<MultiEdge>) -> Self {
        edges.sort_unstable();
        Multigraph { params, edges }
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn edges(&self) -> &[MultiEdge] {
        &self.edges
    }

    /// Degree of every vertex counted with multiplicity; index 0 unused.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.params.n + 1];
        for e in &self.edges {
            for &v in e.vertices() {
                deg[v as usize] += 1;
            }
        }
        deg
    }

    pub fn is_regular(&self) -> bool {
        self.degrees().iter().skip(1).all(|&c| c == self.params.d)
    }

    /// No loops and no repeated edges.
    pub fn is_simple(&self) -> bool {
        self.edges.iter().all(|e| e.kind() == EdgeKind::Proper)
            && self.edges.windows(2).all(|w| w[0] != w[1])
    }

    /// One JSON-lines record, `{"n":..,"d":..,"k":..,"edges":[[..],..]}`,
    /// without the trailing newline.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            n: usize,
            d: usize,
            k: usize,
            edges: &'a [MultiEdge],
        }
        serde_json::to_string(&Record {
            n: self.params.n,
            d: self.params.d,
            k: self.params.k,
            edges: &self.edges,
        })
        .expect("record serializes")
    }
}

/// `H(y)`: cut `y` into blocks and sort.
pub fn build_multigraph(y: &PermSeq) -> Multigraph {
    let edges = y.blocks().map(MultiEdge::from_block).collect();
    Multigraph::from_edges(y.params, edges)
}

/// Like [`build_multigraph`], checking the sequence against `params` first.
pub fn build_multigraph_checked(seq: &[Vertex], params: Params) -> Result<Multigraph> {
    let y = PermSeq::new(params, seq.to_vec())?;
    Ok(build_multigraph(&y))
}

/// Membership of a permutation in `P`, `E` and `E_l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    /// Number of good loops. Inside `E` every loop is good.
    pub lambda: usize,
    /// Number of loop blocks, good or bad.
    pub loops_total: usize,
    pub has_multi_edge: bool,
    pub has_bad_loop: bool,
    /// Blocks with a vertex of multiplicity at least 3.
    pub mult3_blocks: usize,
    /// Blocks with two or more doubled vertices and no tripled one.
    pub double2_blocks: usize,
    /// `Some(l)` iff the permutation lies in `E_l`.
    pub level: Option<usize>,
    pub loop_cap: usize,
}

impl Classification {
    pub fn in_e(&self) -> bool {
        self.level.is_some()
    }
}

/// Reusable scratch space for classifying many permutations of one shape.
#[derive(Debug, Clone)]
pub struct Classifier {
    k: usize,
    loop_cap: usize,
    sorted: Vec<Vertex>,
    order: Vec<u32>,
}

impl Classifier {
    pub fn new(params: Params, policy: LPolicy) -> Self {
        Classifier {
            k: params.k,
            loop_cap: params.loop_cap(policy),
            sorted: Vec::with_capacity(params.len()),
            order: Vec::with_capacity(params.m),
        }
    }

    pub fn loop_cap(&self) -> usize {
        self.loop_cap
    }

    pub fn classify(&mut self, seq: &[Vertex]) -> Classification {
        let k = self.k;
        self.sorted.clear();
        self.sorted.extend_from_slice(seq);
        let mut lambda = 0;
        let mut mult3_blocks = 0;
        let mut double2_blocks = 0;
        for block in self.sorted.chunks_mut(k) {
            block.sort_unstable();
            match classify_edge(block) {
                EdgeKind::Proper => {}
                EdgeKind::GoodLoop => lambda += 1,
                EdgeKind::BadLoop(BadLoopReason::MultiplicityAtLeast3) => mult3_blocks += 1,
                EdgeKind::BadLoop(BadLoopReason::TwoRepeated) => double2_blocks += 1,
            }
        }
        let m = seq.len() / k;
        self.order.clear();
        self.order.extend(0..m as u32);
        let sorted = &self.sorted;
        let block = |i: u32| &sorted[i as usize * k..(i as usize + 1) * k];
        self.order.sort_unstable_by(|&a, &b| block(a).cmp(block(b)));
        let has_multi_edge = self.order.windows(2).any(|w| block(w[0]) == block(w[1]));
        let has_bad_loop = mult3_blocks + double2_blocks > 0;
        let level = (!has_multi_edge && !has_bad_loop && lambda <= self.loop_cap).then_some(lambda);
        Classification {
            lambda,
            loops_total: lambda + mult3_blocks + double2_blocks,
            has_multi_edge,
            has_bad_loop,
            mult3_blocks,
            double2_blocks,
            level,
            loop_cap: self.loop_cap,
        }
    }
}

pub fn classify_perm(y: &PermSeq, policy: LPolicy) -> Classification {
    Classifier::new(y.params, policy).classify(&y.seq)
}

/// Lexicographic successor among the distinct permutations of a multiset.
/// Returns `false` (leaving `seq` unchanged) at the last permutation.
pub fn next_multiset_permutation(seq: &mut [Vertex]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut i = seq.len() - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = seq.len() - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

/// Visit every permutation in `P` in lexicographic order.
pub fn for_each_permutation(params: Params, mut f: impl FnMut(&[Vertex])) {
    let mut seq = PermSeq::canonical(params).seq;
    loop {
        f(&seq);
        if !next_multiset_permutation(&mut seq) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn p(n: usize, d: usize, k: usize) -> Params {
        Params::new(n, d, k).unwrap()
    }

    #[test]
    fn sampled_sequences_have_right_shape() {
        let params = p(3, 2, 3);
        let y = sample_permutation(params, &mut stream_rng(1, 0));
        assert_eq!(y.as_slice().len(), 6);
        assert_eq!(y.as_slice().iter().filter(|&&v| v == 1).count(), 2);

        let params = p(6, 1, 3);
        let mut v = sample_permutation(params, &mut stream_rng(2, 0)).into_vec();
        v.sort_unstable();
        assert_eq!(v, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = p(9, 2, 3);
        let a = sample_permutation(params, &mut stream_rng(11, 4));
        let b = sample_permutation(params, &mut stream_rng(11, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn permseq_validation() {
        let params = p(3, 2, 3);
        assert!(PermSeq::new(params, vec![1, 1, 2, 3, 3, 2]).is_ok());
        assert_eq!(
            PermSeq::new(params, vec![1, 1, 2, 3, 3]),
            Err(Error::LengthMismatch { got: 5, expected: 6 })
        );
        assert!(matches!(
            PermSeq::new(params, vec![1, 1, 1, 2, 3, 3]),
            Err(Error::LabelCount { .. })
        ));
        assert!(matches!(
            PermSeq::new(params, vec![1, 1, 4, 2, 3, 3]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn multigraph_from_blocks() {
        let params = p(3, 2, 3);
        let h = build_multigraph_checked(&[3, 3, 2, 1, 2, 1], params).unwrap();
        let edges: Vec<_> = h.edges().iter().map(|e| e.vertices().to_vec()).collect();
        assert_eq!(edges, vec![vec![1, 1, 2], vec![2, 3, 3]]);
        assert!(h.is_regular());

        let params = p(6, 1, 3);
        let h = build_multigraph_checked(&[1, 2, 3, 4, 5, 6], params).unwrap();
        assert_eq!(h.to_json(), r#"{"n":6,"d":1,"k":3,"edges":[[1,2,3],[4,5,6]]}"#);
        assert!(h.is_simple());

        assert!(matches!(
            build_multigraph_checked(&[1, 2, 3], params),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn block_order_does_not_matter() {
        let params = p(6, 1, 3);
        let a = build_multigraph_checked(&[1, 2, 3, 4, 5, 6], params).unwrap();
        let b = build_multigraph_checked(&[6, 4, 5, 2, 1, 3], params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_kinds() {
        assert_eq!(classify_edge(&[3, 4, 5]), EdgeKind::Proper);
        assert_eq!(classify_edge(&[5, 5, 7]), EdgeKind::GoodLoop);
        assert_eq!(
            classify_edge(&[5, 5, 5]),
            EdgeKind::BadLoop(BadLoopReason::MultiplicityAtLeast3)
        );
        assert_eq!(
            classify_edge(&[1, 1, 2, 2]),
            EdgeKind::BadLoop(BadLoopReason::TwoRepeated)
        );
        assert_eq!(classify_edge(&[1, 2, 2, 3]), EdgeKind::GoodLoop);
        assert_eq!(
            classify_edge(&[1, 1, 1, 2, 2]),
            EdgeKind::BadLoop(BadLoopReason::MultiplicityAtLeast3)
        );
    }

    #[test]
    fn permutation_classes() {
        let params = p(3, 2, 3);
        let c = classify_perm(&PermSeq::new(params, vec![1, 1, 2, 3, 3, 2]).unwrap(), LPolicy::SqrtNd);
        assert_eq!(c.loop_cap, 2);
        assert_eq!(c.lambda, 2);
        assert_eq!(c.level, Some(2));

        let bad = PermSeq::new(p(4, 3, 3), vec![1, 1, 1, 2, 2, 3, 3, 3, 2, 4, 4, 4]).unwrap();
        let c = classify_perm(&bad, LPolicy::SqrtNd);
        assert!(c.has_bad_loop);
        assert_eq!(c.mult3_blocks, 2);
        assert_eq!((c.lambda, c.loops_total), (2, 4));
        assert_eq!(c.level, None);

        let c = classify_perm(&PermSeq::new(params, vec![1, 2, 3, 1, 2, 3]).unwrap(), LPolicy::SqrtNd);
        assert!(c.has_multi_edge);
        assert_eq!(c.lambda, 0);
        assert_eq!(c.level, None);
    }

    #[test]
    fn identical_loops_count_as_multi_edge() {
        let params = p(3, 4, 3);
        let y = PermSeq::new(params, vec![1, 1, 2, 1, 1, 2, 2, 3, 3, 3, 3, 2]).unwrap();
        let c = classify_perm(&y, LPolicy::SqrtNd);
        assert_eq!(c.lambda, 4);
        assert!(!c.has_bad_loop);
        assert!(c.has_multi_edge);
        assert_eq!(c.level, None);
    }

    #[test]
    fn successor_enumerates_all_distinct() {
        let params = p(3, 2, 3);
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(params, |s| {
            assert!(seen.insert(s.to_vec()));
        });
        assert_eq!(seen.len(), 90);
        let mut last = vec![3, 3, 2, 2, 1, 1];
        assert!(!next_multiset_permutation(&mut last));
        assert_eq!(last, vec![3, 3, 2, 2, 1, 1]);
    }

    proptest! {
        #[test]
        fn sample_invariants(seed in any::<u64>(), n in 3usize..12, d in 1usize..5) {
            prop_assume!((n * d) % 3 == 0);
            let params = p(n, d, 3);
            let y = sample_permutation(params, &mut stream_rng(seed, 0));
            prop_assert!(PermSeq::new(params, y.as_slice().to_vec()).is_ok());
            let h = build_multigraph(&y);
            prop_assert!(h.is_regular());
            let c = classify_perm(&y, LPolicy::SqrtNd);
            let loops = y.blocks().filter(|b| MultiEdge::from_block(b).kind().is_loop()).count();
            prop_assert_eq!(c.loops_total, loops);
            if let Some(l) = c.level {
                prop_assert_eq!(l, c.lambda);
                prop_assert!(!c.has_multi_edge && !c.has_bad_loop && l <= c.loop_cap);
            }
        }
    }
}
