//! Uniform generation of simple `d`-regular `k`-graphs by the permutation
//! model followed by loop-removing switchings.
//!
//! Each attempt draws `y` uniformly from `P` and restarts unless `y` is in
//! `E`. While `y` has `l > 0` loops, a point of the forward raw space (size
//! `F_l`) is drawn uniformly; an invalid point restarts the attempt
//! (f-rejection). Otherwise the switching produces `z`, and the attempt
//! restarts with probability `1 - (1 - delta1) B / B(z)` (b-rejection). In
//! exact mode this makes every step land uniformly on `E_{l-1}`, so the
//! output is uniform over the simple hypergraphs.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{bernoulli_exact, int_rational, rational_string, to_f64};
use crate::model::{build_multigraph, sample_permutation, Multigraph, PermSeq, Vertex};
use crate::params::{CostGuard, LPolicy, Params};
use crate::switching::{
    apply_forward_unchecked, backward_bound, delta1_formula, enumerate_forward, RawForward, Switcher,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    /// No f- or b-rejections: close to, but not exactly, uniform.
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Delta1Source {
    #[default]
    Formula,
    /// Tight value from an exhaustive scan of `P`; tiny instances only.
    ExhaustiveOracle,
    Override(BigRational),
}

impl Delta1Source {
    pub fn name(&self) -> &'static str {
        match self {
            Delta1Source::Formula => "formula",
            Delta1Source::ExhaustiveOracle => "exhaustive",
            Delta1Source::Override(_) => "override",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub l_policy: LPolicy,
    pub delta1_source: Delta1Source,
    pub mode: Mode,
    /// Budget on full restarts.
    pub max_attempts: u64,
    pub guard: CostGuard,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            l_policy: LPolicy::SqrtNd,
            delta1_source: Delta1Source::Formula,
            mode: Mode::Exact,
            max_attempts: 1_000_000,
            guard: CostGuard::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    NotInE,
    FRejection,
    BRejection,
    Success,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AttemptRecord {
    /// Loop count of the initial permutation when it lies in `E`.
    pub initial_lambda: Option<usize>,
    pub switch_steps: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenTrace {
    pub attempts: Vec<AttemptRecord>,
    pub not_in_e: u64,
    pub f_rejections: u64,
    pub b_rejections: u64,
}

impl GenTrace {
    fn record(&mut self, rec: AttemptRecord) {
        match rec.outcome {
            Outcome::NotInE => self.not_in_e += 1,
            Outcome::FRejection => self.f_rejections += 1,
            Outcome::BRejection => self.b_rejections += 1,
            Outcome::Success => {}
        }
        self.attempts.push(rec);
    }

    pub fn restarts(&self) -> u64 {
        self.attempts.len().saturating_sub(1) as u64
    }

    pub fn success(&self) -> Option<&AttemptRecord> {
        self.attempts.last().filter(|a| a.outcome == Outcome::Success)
    }
}

/// Tight `delta_1` from an exhaustive scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveDelta1 {
    pub value: BigRational,
    /// `min B(z)` over the levels that count, see [`delta1_exhaustive`].
    pub min_backward: Option<u64>,
    /// The relevant set was empty and `value` was defined as 0.
    pub degenerate: bool,
    pub scan: LevelExtremes,
}

fn serialize_rational<S: Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(q))
}

/// The `delta_1` actually used by a generator, with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta1Used {
    #[serde(serialize_with = "serialize_rational")]
    pub value: BigRational,
    pub value_f64: f64,
    pub source: &'static str,
    pub degenerate: bool,
}

/// Per-level extremes of `F` and `B` over `E_0 .. E_L`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LevelExtremes {
    /// `min B(z)` over `E_l`, for `l < L`.
    pub min_backward: Vec<Option<u64>>,
    /// `max F(y)` over `E_l`; `None` for empty levels and for `l = 0`.
    pub max_forward: Vec<Option<u64>>,
}

/// Scan `P` for the per-level extremes of `F` and `B`. With `cache`, both
/// counts are computed once per distinct multigraph: neither depends on the
/// order of blocks or of labels inside a block.
pub fn level_extremes(p: Params, policy: LPolicy, guard: CostGuard, cache: bool) -> Result<LevelExtremes> {
    crate::enumeration::check_permutation_guard(p, guard)?;
    let mut sw = Switcher::new(p, policy);
    let cap = sw.loop_cap();
    let mut out = LevelExtremes {
        min_backward: vec![None; cap],
        max_forward: vec![None; cap + 1],
    };
    let mut seen: FxHashMap<Box<[Vertex]>, (u64, u64)> = FxHashMap::default();
    let mut key = Vec::with_capacity(p.len());
    let mut err = None;
    crate::model::for_each_permutation(p, |seq| {
        let Some(l) = sw.load(seq) else { return };
        let counts = |sw: &mut Switcher| -> Result<(u64, u64)> {
            let f = if l >= 1 { sw.count_forward() } else { 0 };
            let b = if l < cap { sw.count_backward()? } else { 0 };
            Ok((f, b))
        };
        let found = if cache {
            sw.multigraph_key(&mut key);
            match seen.get(key.as_slice()) {
                Some(&fb) => Ok(fb),
                None => counts(&mut sw).inspect(|&fb| {
                    seen.insert(key.clone().into_boxed_slice(), fb);
                }),
            }
        } else {
            counts(&mut sw)
        };
        let (f, b) = match found {
            Ok(fb) => fb,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        if l >= 1 {
            let slot = &mut out.max_forward[l];
            *slot = Some(slot.map_or(f, |x| x.max(f)));
        }
        if l < cap {
            let slot = &mut out.min_backward[l];
            *slot = Some(slot.map_or(b, |x| x.min(b)));
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `1 - min{B(z)/B : z in E_l}` over the levels `0 <= l <= L-1` that a
/// switching can reach, i.e. where some `y in E_{l+1}` has `F(y) > 0`. States
/// on other levels are only ever output directly, so their `B(z)` never
/// enters an acceptance probability. When no level qualifies the value is 0
/// and `degenerate` is set.
pub fn delta1_exhaustive(p: Params, policy: LPolicy, guard: CostGuard) -> Result<ExhaustiveDelta1> {
    let scan = level_extremes(p, policy, guard, true)?;
    let min_backward = scan
        .min_backward
        .iter()
        .enumerate()
        .filter(|(l, _)| scan.max_forward[l + 1].is_some_and(|f| f > 0))
        .filter_map(|(_, b)| *b)
        .min();
    let b = backward_bound(p);
    let (value, degenerate) = match min_backward {
        Some(min) if !b.is_zero() => (BigRational::one() - int_rational(min) / &b, false),
        _ => (BigRational::zero(), true),
    };
    Ok(ExhaustiveDelta1 {
        value,
        min_backward,
        degenerate,
        scan,
    })
}

/// A configured generator for one instance; `delta_1` is resolved once.
#[derive(Debug, Clone)]
pub struct Generator {
    params: Params,
    config: GenConfig,
    delta1: Delta1Used,
    /// `(1 - delta1) * B`, the floor every `B(z)` must clear.
    floor: BigRational,
}

/// Cap on redraws of invalid raw tuples in approximate mode before falling
/// back to enumerating the valid ops directly.
const APPROX_REDRAWS: usize = 4096;

impl Generator {
    pub fn new(params: Params, config: GenConfig) -> Result<Self> {
        let cap = params.loop_cap(config.l_policy);
        let (value, degenerate) = match &config.delta1_source {
            Delta1Source::Formula => (delta1_formula(params, cap).value, false),
            Delta1Source::ExhaustiveOracle => {
                let e = delta1_exhaustive(params, config.l_policy, config.guard)?;
                (e.value, e.degenerate)
            }
            Delta1Source::Override(q) => (q.clone(), false),
        };
        if config.mode == Mode::Exact && value >= BigRational::one() {
            return Err(Error::Delta1TooLarge(rational_string(&value)));
        }
        let floor = (BigRational::one() - &value) * backward_bound(params);
        Ok(Generator {
            params,
            delta1: Delta1Used {
                value_f64: to_f64(&value),
                value,
                source: config.delta1_source.name(),
                degenerate,
            },
            config,
            floor,
        })
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn delta1(&self) -> &Delta1Used {
        &self.delta1
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Multigraph, GenTrace)> {
        let mut sw = Switcher::new(self.params, self.config.l_policy);
        let mut trace = GenTrace::default();
        for _ in 0..self.config.max_attempts {
            let (rec, out) = match self.config.mode {
                Mode::Exact => self.attempt_exact(&mut sw, rng)?,
                Mode::Approximate => self.attempt_approx(&mut sw, rng),
            };
            trace.record(rec);
            if let Some(y) = out {
                let h = build_multigraph(&y);
                debug_assert!(h.is_simple() && h.is_regular());
                return Ok((h, trace));
            }
        }
        Err(Error::BudgetExhausted(self.config.max_attempts))
    }

    fn draw_raw<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> RawForward {
        let (m, k) = (self.params.m, self.params.k);
        RawForward {
            loop_index: rng.random_range(0..l),
            block1: rng.random_range(0..m),
            block2: rng.random_range(0..m),
            pos1: rng.random_range(0..k),
            pos2: rng.random_range(0..k),
        }
    }

    fn attempt_exact<R: Rng + ?Sized>(
        &self,
        sw: &mut Switcher,
        rng: &mut R,
    ) -> Result<(AttemptRecord, Option<PermSeq>)> {
        let mut y = sample_permutation(self.params, rng);
        let Some(initial) = sw.load(y.as_slice()) else {
            return Ok((
                AttemptRecord {
                    initial_lambda: None,
                    switch_steps: 0,
                    outcome: Outcome::NotInE,
                },
                None,
            ));
        };
        let mut rec = AttemptRecord {
            initial_lambda: Some(initial),
            switch_steps: 0,
            outcome: Outcome::Success,
        };
        let mut l = initial;
        while l > 0 {
            let raw = self.draw_raw(l, rng);
            let Some(op) = sw.decode_forward(raw) else {
                rec.outcome = Outcome::FRejection;
                return Ok((rec, None));
            };
            let z = apply_forward_unchecked(&y, &op);
            let level = sw.load(z.as_slice());
            debug_assert_eq!(level, Some(l - 1));
            let bz = sw.count_backward()?;
            let bz = int_rational(bz);
            if bz < self.floor {
                return Err(Error::Delta1Violated {
                    found: rational_string(&bz),
                    floor: rational_string(&self.floor),
                });
            }
            let accept = &self.floor / &bz;
            if !bernoulli_exact(&accept, rng) {
                rec.outcome = Outcome::BRejection;
                return Ok((rec, None));
            }
            y = z;
            l -= 1;
            rec.switch_steps += 1;
        }
        Ok((rec, Some(y)))
    }

    fn attempt_approx<R: Rng + ?Sized>(&self, sw: &mut Switcher, rng: &mut R) -> (AttemptRecord, Option<PermSeq>) {
        let mut y = sample_permutation(self.params, rng);
        let Some(initial) = sw.load(y.as_slice()) else {
            return (
                AttemptRecord {
                    initial_lambda: None,
                    switch_steps: 0,
                    outcome: Outcome::NotInE,
                },
                None,
            );
        };
        let mut rec = AttemptRecord {
            initial_lambda: Some(initial),
            switch_steps: 0,
            outcome: Outcome::Success,
        };
        let mut l = initial;
        while l > 0 {
            let mut chosen = None;
            for _ in 0..APPROX_REDRAWS {
                let raw = self.draw_raw(l, rng);
                if let Some(op) = sw.decode_forward(raw) {
                    chosen = Some(op);
                    break;
                }
            }
            if chosen.is_none() {
                // same distribution as redrawing forever: uniform over valid ops
                let ops = enumerate_forward(&y, self.config.l_policy).unwrap_or_default();
                if ops.is_empty() {
                    rec.outcome = Outcome::FRejection;
                    return (rec, None);
                }
                chosen = Some(ops[rng.random_range(0..ops.len())]);
            }
            let op = chosen.expect("op chosen");
            y = apply_forward_unchecked(&y, &op);
            sw.load(y.as_slice());
            l -= 1;
            rec.switch_steps += 1;
        }
        (rec, Some(y))
    }
}

/// One-shot generation; see [`Generator`].
pub fn generate<R: Rng + ?Sized>(p: Params, cfg: &GenConfig, rng: &mut R) -> Result<(Multigraph, GenTrace)> {
    Generator::new(p, GenConfig { mode: Mode::Exact, ..cfg.clone() })?.generate(rng)
}

/// One-shot approximate generation: no f- or b-rejections.
pub fn generate_approx<R: Rng + ?Sized>(p: Params, cfg: &GenConfig, rng: &mut R) -> Result<(Multigraph, GenTrace)> {
    Generator::new(p, GenConfig { mode: Mode::Approximate, ..cfg.clone() })?.generate(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational;
    use crate::rng::stream_rng;

    fn p(n: usize, d: usize, k: usize) -> Params {
        Params::new(n, d, k).unwrap()
    }

    #[test]
    fn degree_one_outputs_two_disjoint_triples() {
        let params = p(6, 1, 3);
        let cfg = GenConfig::default();
        let mut rng = stream_rng(7, 0);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..400 {
            let (h, trace) = generate(params, &cfg, &mut rng).unwrap();
            assert!(h.is_simple() && h.is_regular());
            assert_eq!(trace.attempts.len(), 1);
            assert_eq!(trace.success().unwrap().switch_steps, 0);
            seen.insert(h);
        }
        assert_eq!(seen.len(), 10);
        let (h, _) = generate_approx(params, &cfg, &mut rng).unwrap();
        assert!(h.is_simple());
    }

    #[test]
    fn empty_class_exhausts_budget() {
        let params = p(3, 2, 3);
        let cfg = GenConfig {
            delta1_source: Delta1Source::ExhaustiveOracle,
            max_attempts: 10_000,
            ..GenConfig::default()
        };
        let err = generate(params, &cfg, &mut stream_rng(1, 0)).unwrap_err();
        assert_eq!(err, Error::BudgetExhausted(10_000));
        assert!(err.is_resource_limit());
    }

    #[test]
    fn formula_delta_too_large_for_tiny_instance() {
        let err = Generator::new(p(6, 2, 3), GenConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Delta1TooLarge(_)));
        // approximate mode does not care
        assert!(Generator::new(
            p(6, 2, 3),
            GenConfig {
                mode: Mode::Approximate,
                ..GenConfig::default()
            }
        )
        .is_ok());
    }

    #[test]
    fn degenerate_exhaustive_delta() {
        let e = delta1_exhaustive(p(3, 2, 3), LPolicy::SqrtNd, CostGuard::default()).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.value, rational(0, 1));
        assert_eq!(e.min_backward, None);
    }

    /// The cache key in `level_extremes` relies on this.
    #[test]
    fn counts_ignore_block_and_label_order() {
        use rand::seq::SliceRandom;
        let params = p(9, 2, 3);
        let mut sw = Switcher::new(params, LPolicy::SqrtNd);
        let cap = sw.loop_cap();
        let mut rng = stream_rng(21, 0);
        let mut checked = 0;
        while checked < 60 {
            let y = sample_permutation(params, &mut rng);
            let Some(l) = sw.load(y.as_slice()) else { continue };
            let f = sw.count_forward();
            let b = (l < cap).then(|| sw.count_backward().unwrap());
            let mut key = Vec::new();
            sw.multigraph_key(&mut key);
            let mut blocks: Vec<Vec<Vertex>> = y.blocks().map(<[Vertex]>::to_vec).collect();
            blocks.shuffle(&mut rng);
            for block in &mut blocks {
                block.shuffle(&mut rng);
            }
            assert_eq!(sw.load(&blocks.concat()), Some(l));
            assert_eq!(sw.count_forward(), f);
            assert_eq!((l < cap).then(|| sw.count_backward().unwrap()), b);
            let mut key2 = Vec::new();
            sw.multigraph_key(&mut key2);
            assert_eq!(key, key2);
            checked += 1;
        }
    }

    #[test]
    fn cached_and_direct_scans_agree() {
        let params = p(4, 3, 3);
        let g = CostGuard::default();
        let a = level_extremes(params, LPolicy::SqrtNd, g, true).unwrap();
        let b = level_extremes(params, LPolicy::SqrtNd, g, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.min_backward.len(), 3);
    }

    #[test]
    fn too_small_override_is_caught() {
        // a delta1 of 0 demands B(z) >= B everywhere, which fails quickly
        let params = p(9, 2, 3);
        let cfg = GenConfig {
            delta1_source: Delta1Source::Override(rational(0, 1)),
            max_attempts: 100_000,
            ..GenConfig::default()
        };
        let gen = Generator::new(params, cfg).unwrap();
        let mut rng = stream_rng(2, 0);
        let mut violated = false;
        for _ in 0..50 {
            if let Err(Error::Delta1Violated { .. }) = gen.generate(&mut rng) {
                violated = true;
                break;
            }
        }
        assert!(violated);
    }

    #[test]
    fn deterministic_given_seed() {
        let params = p(9, 2, 3);
        let cfg = GenConfig {
            mode: Mode::Approximate,
            ..GenConfig::default()
        };
        let a = generate_approx(params, &cfg, &mut stream_rng(99, 3)).unwrap();
        let b = generate_approx(params, &cfg, &mut stream_rng(99, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn approx_mode_switches_loops_away() {
        let params = p(500, 3, 3);
        let cfg = GenConfig {
            mode: Mode::Approximate,
            ..GenConfig::default()
        };
        let mut rng = stream_rng(4, 0);
        for _ in 0..5 {
            let (h, trace) = generate_approx(params, &cfg, &mut rng).unwrap();
            assert!(h.is_simple() && h.is_regular());
            let ok = trace.success().unwrap();
            assert_eq!(Some(ok.switch_steps), ok.initial_lambda);
            assert!(ok.switch_steps <= params.loop_cap(LPolicy::SqrtNd));
            assert!(trace.restarts() < 50);
        }
    }
}
