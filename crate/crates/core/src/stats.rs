//! Exact loop and collision probabilities for a uniform `Y in P`, Monte-Carlo
//! and exhaustive estimators of the class statistics, the level-ratio table
//! and a chi-square uniformity test.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{factorial, falling, int_rational, multinomial, rational, to_f64, uint_rational};
use crate::json;
use crate::model::{sample_permutation, Classification, Classifier, Multigraph};
use crate::params::{CostGuard, LPolicy, Params};
use crate::rng::{par_replicas, stream_rng};
use crate::switching::{backward_bound, exhaustive_switch_scan, forward_bound};

/// Probability that a given block of `Y` is a good loop.
pub fn exact_loop_indicator(p: Params) -> BigRational {
    let (n, d, k) = (p.n as u64, p.d as u64, p.k as u64);
    let num = crate::exact::binomial(k, 2) * falling(n, k - 1) * falling(d, 2) * BigUint::from(d).pow((k - 2) as u32);
    uint_rational(num) / uint_rational(falling(n * d, k))
}

/// Expected number of loops, `m` times the indicator.
pub fn exact_lambda_mean(p: Params) -> BigRational {
    exact_loop_indicator(p) * int_rational(p.m as i64)
}

/// Partitions of `k` into positive parts of size at most `max_part`, at most
/// `max_len` of them, in non-increasing order.
fn partitions(k: usize, max_part: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, cap: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for part in (1..=cap.min(rest)).rev() {
            cur.push(part);
            rec(rest - part, part, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, max_part, max_len, &mut Vec::new(), &mut out);
    out
}

/// Probability that two given blocks of `Y` are equal as multisets.
///
/// Sums over the part sizes `k_i` of a shared block (each label used `2 k_i`
/// times), weighted by the number of ways to put labels on the parts.
pub fn exact_pair_collision(p: Params) -> BigRational {
    let (n, d, k) = (p.n, p.d, p.k);
    if p.m < 2 {
        return BigRational::zero();
    }
    let mut total = BigUint::zero();
    for parts in partitions(k, d / 2, n) {
        let r = parts.len();
        let mut assignments = falling(n as u64, r as u64);
        let mut run = 1u64;
        for w in parts.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                assignments /= factorial(run);
                run = 1;
            }
        }
        assignments /= factorial(run);
        let parts64: Vec<u64> = parts.iter().map(|&x| x as u64).collect();
        let shape = multinomial(&parts64);
        let mut term = assignments * &shape * &shape;
        for &ki in &parts64 {
            term *= falling(d as u64, 2 * ki);
        }
        total += term;
    }
    let nd = (n * d) as u64;
    // (nd - 2k)! / (nd)!
    uint_rational(total) / uint_rational(falling(nd, 2 * k as u64))
}

/// A sample proportion with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub value: f64,
    pub se: f64,
}

impl Rate {
    fn from_count(hits: u64, n: u64) -> Self {
        let v = hits as f64 / n as f64;
        Rate {
            value: v,
            se: (v * (1.0 - v) / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRate {
    pub policy: String,
    pub cap: usize,
    /// Fraction of samples with `lambda > cap`.
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub params: Params,
    pub policy: String,
    pub loop_cap: usize,
    pub samples: u64,
    pub fraction_in_e: Rate,
    pub lambda_mean: f64,
    pub lambda_mean_se: f64,
    pub lambda_variance: f64,
    /// Samples with a block whose label appears at least 3 times.
    pub bad_loop_rate_mult3: Rate,
    /// Samples with a block holding two doubled labels.
    pub bad_loop_rate_double2: Rate,
    /// Samples with two equal blocks.
    pub multi_edge_pair_rate: Rate,
    pub tail_exceed_rate: Vec<TailRate>,
    /// Reference values from the exact formulas.
    #[serde(serialize_with = "json::rational")]
    pub exact_lambda_mean: BigRational,
    pub exact_lambda_mean_f64: f64,
    /// `(k-1)(d-1)/2`.
    pub lambda_asymptote: f64,
}

/// Running sums over classified samples; merges are order-independent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Accum {
    n: u64,
    in_e: u64,
    lambda_sum: u64,
    lambda_sq: u64,
    mult3: u64,
    double2: u64,
    multi: u64,
    tail: Vec<u64>,
}

impl Accum {
    fn new(tails: usize) -> Self {
        Accum {
            tail: vec![0; tails],
            ..Default::default()
        }
    }

    fn add(&mut self, c: &Classification, caps: &[usize]) {
        self.n += 1;
        self.in_e += c.in_e() as u64;
        let l = c.lambda as u64;
        self.lambda_sum += l;
        self.lambda_sq += l * l;
        self.mult3 += (c.mult3_blocks > 0) as u64;
        self.double2 += (c.double2_blocks > 0) as u64;
        self.multi += c.has_multi_edge as u64;
        for (t, &cap) in self.tail.iter_mut().zip(caps) {
            *t += (c.lambda > cap) as u64;
        }
    }

    fn merge(&mut self, o: &Accum) {
        self.n += o.n;
        self.in_e += o.in_e;
        self.lambda_sum += o.lambda_sum;
        self.lambda_sq += o.lambda_sq;
        self.mult3 += o.mult3;
        self.double2 += o.double2;
        self.multi += o.multi;
        for (a, b) in self.tail.iter_mut().zip(&o.tail) {
            *a += b;
        }
    }
}

fn summarize(p: Params, policy: LPolicy, tails: &[LPolicy], a: &Accum) -> McSummary {
    let n = a.n.max(1) as f64;
    let mean = a.lambda_sum as f64 / n;
    let var = if a.n > 1 {
        ((a.lambda_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let exact = exact_lambda_mean(p);
    McSummary {
        params: p,
        policy: policy.to_string(),
        loop_cap: p.loop_cap(policy),
        samples: a.n,
        fraction_in_e: Rate::from_count(a.in_e, a.n),
        lambda_mean: mean,
        lambda_mean_se: (var / n).sqrt(),
        lambda_variance: var,
        bad_loop_rate_mult3: Rate::from_count(a.mult3, a.n),
        bad_loop_rate_double2: Rate::from_count(a.double2, a.n),
        multi_edge_pair_rate: Rate::from_count(a.multi, a.n),
        tail_exceed_rate: tails
            .iter()
            .zip(&a.tail)
            .map(|(t, &hits)| TailRate {
                policy: t.to_string(),
                cap: p.loop_cap(*t),
                rate: Rate::from_count(hits, a.n),
            })
            .collect(),
        exact_lambda_mean_f64: to_f64(&exact),
        exact_lambda_mean: exact,
        lambda_asymptote: (p.k - 1) as f64 * (p.d - 1) as f64 / 2.0,
    }
}

fn tail_policies(policy: LPolicy, extra: &[LPolicy]) -> Vec<LPolicy> {
    let mut out = vec![policy];
    for t in extra {
        if !out.contains(t) {
            out.push(*t);
        }
    }
    out
}

/// Monte-Carlo summary from `samples` draws of `rng`. Tail rates are reported
/// for `policy` and every policy in `tails`.
pub fn mc_summary<R: Rng + ?Sized>(
    p: Params,
    samples: u64,
    policy: LPolicy,
    tails: &[LPolicy],
    rng: &mut R,
) -> McSummary {
    let tails = tail_policies(policy, tails);
    let caps: Vec<usize> = tails.iter().map(|t| p.loop_cap(*t)).collect();
    let mut cls = Classifier::new(p, policy);
    let mut acc = Accum::new(tails.len());
    for _ in 0..samples {
        let y = sample_permutation(p, rng);
        acc.add(&cls.classify(y.as_slice()), &caps);
    }
    summarize(p, policy, &tails, &acc)
}

/// Samples per replica stream in [`mc_summary_par`].
pub const MC_CHUNK: u64 = 10_000;

/// Replica-parallel [`mc_summary`]: chunk `i` uses stream `i` of `seed`, so the
/// result depends on `seed` but not on `jobs`.
pub fn mc_summary_par(
    p: Params,
    samples: u64,
    policy: LPolicy,
    tails: &[LPolicy],
    seed: u64,
    jobs: usize,
) -> McSummary {
    let tails = tail_policies(policy, tails);
    let caps: Vec<usize> = tails.iter().map(|t| p.loop_cap(*t)).collect();
    let chunks = samples.div_ceil(MC_CHUNK) as usize;
    let parts = par_replicas(chunks, jobs, |i| {
        let count = MC_CHUNK.min(samples - i as u64 * MC_CHUNK);
        let mut rng = stream_rng(seed, i as u64);
        let mut cls = Classifier::new(p, policy);
        let mut acc = Accum::new(tails.len());
        for _ in 0..count {
            let y = sample_permutation(p, &mut rng);
            acc.add(&cls.classify(y.as_slice()), &caps);
        }
        acc
    });
    let mut acc = Accum::new(tails.len());
    for part in &parts {
        acc.merge(part);
    }
    summarize(p, policy, &tails, &acc)
}

/// Exact frequencies over all of `P`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExhaustiveSummary {
    pub params: Params,
    pub policy: String,
    pub loop_cap: usize,
    pub permutations: u64,
    #[serde(serialize_with = "json::rational")]
    pub fraction_in_e: BigRational,
    #[serde(serialize_with = "json::rational")]
    pub lambda_mean: BigRational,
    /// Population variance.
    #[serde(serialize_with = "json::rational")]
    pub lambda_variance: BigRational,
    #[serde(serialize_with = "json::rational")]
    pub bad_loop_rate_mult3: BigRational,
    #[serde(serialize_with = "json::rational")]
    pub bad_loop_rate_double2: BigRational,
    #[serde(serialize_with = "json::rational")]
    pub multi_edge_pair_rate: BigRational,
    /// Fraction whose `lambda` exceeds the cap.
    #[serde(serialize_with = "json::rational")]
    pub tail_exceed_rate: BigRational,
    /// Fraction whose first block is a good loop.
    #[serde(serialize_with = "json::rational")]
    pub first_block_good_loop: BigRational,
    /// Fraction whose first two blocks are equal as multisets.
    #[serde(serialize_with = "json::rational")]
    pub first_pair_collision: BigRational,
}

pub fn exhaustive_summary(p: Params, policy: LPolicy, guard: CostGuard) -> Result<ExhaustiveSummary> {
    crate::enumeration::check_permutation_guard(p, guard)?;
    let cap = p.loop_cap(policy);
    let mut cls = Classifier::new(p, policy);
    let mut acc = Accum::new(1);
    let (mut first_loop, mut first_pair) = (0u64, 0u64);
    let k = p.k;
    let mut a = vec![0; k];
    let mut b = vec![0; k];
    crate::model::for_each_permutation(p, |seq| {
        acc.add(&cls.classify(seq), &[cap]);
        a.copy_from_slice(&seq[..k]);
        a.sort_unstable();
        if crate::model::classify_edge(&a) == crate::model::EdgeKind::GoodLoop {
            first_loop += 1;
        }
        if p.m >= 2 {
            b.copy_from_slice(&seq[k..2 * k]);
            b.sort_unstable();
            first_pair += (a == b) as u64;
        }
    });
    let n = acc.n as i64;
    let q = |x: u64| rational(x as i64, n);
    let mean = q(acc.lambda_sum);
    let var = q(acc.lambda_sq) - &mean * &mean;
    Ok(ExhaustiveSummary {
        params: p,
        policy: policy.to_string(),
        loop_cap: cap,
        permutations: acc.n,
        fraction_in_e: q(acc.in_e),
        lambda_mean: mean,
        lambda_variance: var,
        bad_loop_rate_mult3: q(acc.mult3),
        bad_loop_rate_double2: q(acc.double2),
        multi_edge_pair_rate: q(acc.multi),
        tail_exceed_rate: q(acc.tail[0]),
        first_block_good_loop: q(first_loop),
        first_pair_collision: q(first_pair),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub classes: usize,
    pub samples: u64,
    pub observed: Vec<u64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit against the uniform distribution on `classes`.
/// Every sample must be one of the classes.
pub fn chi_square_uniformity(samples: &[Multigraph], classes: &[Multigraph]) -> Result<ChiSquareResult> {
    if classes.is_empty() {
        return Err(Error::EmptyClasses);
    }
    let index: rustc_hash::FxHashMap<&Multigraph, usize> = classes.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut observed = vec![0u64; classes.len()];
    for s in samples {
        let &i = index.get(s).ok_or(Error::UnknownClass)?;
        observed[i] += 1;
    }
    Ok(chi_square_counts(observed))
}

/// Pearson statistic of `observed` against equal expected counts.
pub fn chi_square_counts(observed: Vec<u64>) -> ChiSquareResult {
    let c = observed.len();
    let n: u64 = observed.iter().sum();
    let expected = n as f64 / c as f64;
    let statistic = if n == 0 {
        0.0
    } else {
        observed
            .iter()
            .map(|&o| {
                let diff = o as f64 - expected;
                diff * diff / expected
            })
            .sum()
    };
    let df = c.saturating_sub(1);
    let p_value = if df == 0 || statistic <= 0.0 {
        1.0
    } else {
        statrs::function::gamma::gamma_ur(df as f64 / 2.0, statistic / 2.0)
    };
    ChiSquareResult {
        classes: c,
        samples: n,
        observed,
        statistic,
        df,
        p_value,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioRow {
    pub level: usize,
    pub size: u64,
    pub size_below: u64,
    /// `|E_l| / |E_{l-1}|`.
    #[serde(serialize_with = "json::opt_rational")]
    pub ratio: Option<BigRational>,
    /// `(k-1)(d-1)/(2l)`, equal to `B / F_l`.
    #[serde(serialize_with = "json::rational")]
    pub reference: BigRational,
    pub min_forward: Option<u64>,
    pub max_forward: Option<u64>,
    /// `B(z)` extremes over `E_{l-1}`.
    pub min_backward: Option<u64>,
    pub max_backward: Option<u64>,
    /// `max(1 - min F / F_l, 1 - min B / B)`.
    #[serde(serialize_with = "json::opt_rational")]
    pub delta_star: Option<BigRational>,
    #[serde(serialize_with = "json::opt_rational")]
    pub lower: Option<BigRational>,
    /// Absent when `delta_star >= 1`.
    #[serde(serialize_with = "json::opt_rational")]
    pub upper: Option<BigRational>,
    /// `|E_l| * sum F / |E_l| == |E_{l-1}| * sum B / |E_{l-1}|`, i.e. the sums agree.
    pub identity_holds: bool,
    pub within_bounds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioTable {
    pub params: Params,
    pub loop_cap: usize,
    pub rows: Vec<RatioRow>,
}

/// Level ratios from an exhaustive scan of `P`, with the sandwich bounds
/// implied by the observed spread of `F` and `B`. Empty when `d = 1`.
pub fn ratio_table(p: Params, policy: LPolicy, guard: CostGuard) -> Result<RatioTable> {
    let cap = p.loop_cap(policy);
    if p.d == 1 {
        return Ok(RatioTable {
            params: p,
            loop_cap: cap,
            rows: Vec::new(),
        });
    }
    let scan = exhaustive_switch_scan(p, policy, guard)?;
    let b = backward_bound(p);
    let one = BigRational::one();
    let mut rows = Vec::new();
    for l in 1..=cap {
        let hi = &scan.levels[l];
        let lo = &scan.levels[l - 1];
        let f_l = uint_rational(forward_bound(p, l)?);
        let reference = &b / &f_l;
        let ratio = (lo.size > 0).then(|| rational(hi.size as i64, lo.size as i64));
        let delta_star = match (hi.min_forward, lo.min_backward) {
            (Some(f), Some(bz)) => {
                let df = &one - int_rational(f) / &f_l;
                let db = &one - int_rational(bz) / &b;
                Some(if df > db { df } else { db })
            }
            _ => None,
        };
        let lower = delta_star.as_ref().map(|ds| (&one - ds) * &reference);
        let upper = delta_star
            .as_ref()
            .filter(|ds| **ds < one)
            .map(|ds| &reference / (&one - ds));
        let within_bounds = match (&ratio, &lower) {
            (Some(r), Some(lb)) => Some(r >= lb && upper.as_ref().is_none_or(|ub| r <= ub)),
            _ => None,
        };
        rows.push(RatioRow {
            level: l,
            size: hi.size,
            size_below: lo.size,
            ratio,
            reference,
            min_forward: hi.min_forward,
            max_forward: hi.max_forward,
            min_backward: lo.min_backward,
            max_backward: lo.max_backward,
            delta_star,
            lower,
            upper,
            identity_holds: Some(hi.sum_forward) == lo.sum_backward,
            within_bounds,
        });
    }
    Ok(RatioTable {
        params: p,
        loop_cap: cap,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, d: usize, k: usize) -> Params {
        Params::new(n, d, k).unwrap()
    }

    #[test]
    fn loop_indicator_values() {
        assert_eq!(exact_loop_indicator(p(4, 3, 3)), rational(27, 55));
        assert_eq!(exact_lambda_mean(p(4, 3, 3)), rational(108, 55));
        assert!(exact_loop_indicator(p(6, 1, 3)).is_zero());
        // n * indicator -> 3(d-1)/d
        for d in [2usize, 3, 5] {
            let v = to_f64(&exact_loop_indicator(p(999_999, d, 3))) * 999_999.0;
            let want = 3.0 * (d - 1) as f64 / d as f64;
            assert!((v / want - 1.0).abs() < 0.01, "d={d}: {v}");
        }
    }

    #[test]
    fn partitions_listed() {
        assert_eq!(partitions(4, 4, 4), vec![vec![4], vec![3, 1], vec![2, 2], vec![2, 1, 1], vec![1, 1, 1, 1]]);
        assert_eq!(partitions(3, 1, 2), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn pair_collision_values() {
        assert_eq!(exact_pair_collision(p(4, 3, 3)), rational(18, 385));
        assert!(exact_pair_collision(p(6, 1, 3)).is_zero());
        // (3,3,2): two blocks each {1,2,3}: 6 * 6 orderings... checked against a scan
        let ex = exhaustive_summary(p(3, 2, 3), LPolicy::SqrtNd, CostGuard::default()).unwrap();
        assert_eq!(exact_pair_collision(p(3, 2, 3)), ex.first_pair_collision);
    }

    /// Brute-force: the probability that two blocks coincide, by direct
    /// enumeration of the first `2k` positions weighted by completions.
    #[test]
    fn pair_collision_matches_scan_elsewhere() {
        for params in [p(4, 2, 4), p(6, 2, 3), p(4, 3, 3)] {
            let ex = exhaustive_summary(params, LPolicy::SqrtNd, CostGuard::default()).unwrap();
            assert_eq!(exact_pair_collision(params), ex.first_pair_collision, "{params}");
            assert_eq!(exact_loop_indicator(params), ex.first_block_good_loop, "{params}");
            assert_eq!(exact_lambda_mean(params), ex.lambda_mean, "{params}");
        }
    }

    #[test]
    fn mc_summary_is_sane_and_deterministic() {
        let params = p(30, 3, 3);
        let tails = [LPolicy::KdOmega { omega: 0 }];
        let a = mc_summary_par(params, 25_000, LPolicy::SqrtNd, &tails, 11, 1);
        let b = mc_summary_par(params, 25_000, LPolicy::SqrtNd, &tails, 11, 3);
        assert_eq!(a, b);
        assert_eq!(a.samples, 25_000);
        assert_eq!(a.tail_exceed_rate.len(), 2);
        let z = (a.lambda_mean - a.exact_lambda_mean_f64) / a.lambda_mean_se;
        assert!(z.abs() < 5.0, "z = {z}");
        assert!(a.lambda_variance >= 0.0);
        for r in [a.fraction_in_e, a.bad_loop_rate_mult3, a.bad_loop_rate_double2, a.multi_edge_pair_rate] {
            assert!((0.0..=1.0).contains(&r.value));
        }
        let mut rng = stream_rng(1, 0);
        let s = mc_summary(params, 1000, LPolicy::SqrtNd, &[], &mut rng);
        assert_eq!(s.tail_exceed_rate.len(), 1);
    }

    #[test]
    fn chi_square_edges() {
        let r = chi_square_counts(vec![50, 50, 50, 50]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 3);
        let r = chi_square_counts(vec![10_000, 0, 0]);
        assert!(r.p_value < 1e-6);
        // 2 classes, statistic 4 on 1 df: p = erfc(sqrt(2)) ~ 0.0455
        let r = chi_square_counts(vec![60, 40]);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.04550026389635842).abs() < 1e-9);
    }

    #[test]
    fn chi_square_is_order_invariant_and_rejects_strangers() {
        let params = p(6, 1, 3);
        let classes = crate::enumeration::all_hypergraphs(params, CostGuard::default()).unwrap();
        let samples: Vec<Multigraph> = classes.iter().cycle().take(37).cloned().collect();
        let a = chi_square_uniformity(&samples, &classes).unwrap();
        let mut rev = classes.clone();
        rev.reverse();
        let b = chi_square_uniformity(&samples, &rev).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.samples, 37);
        let err = chi_square_uniformity(&samples, &classes[..5]).unwrap_err();
        assert_eq!(err, Error::UnknownClass);
    }

    #[test]
    fn ratio_table_small() {
        let t = ratio_table(p(4, 3, 3), LPolicy::SqrtNd, CostGuard::default()).unwrap();
        assert_eq!(t.rows.len(), 3);
        let r1 = &t.rows[0];
        assert_eq!(r1.reference, rational(2, 1));
        assert!(r1.ratio.is_some());
        for r in &t.rows {
            assert!(r.identity_holds, "level {}", r.level);
            assert_ne!(r.within_bounds, Some(false));
        }
        assert!(ratio_table(p(6, 1, 3), LPolicy::SqrtNd, CostGuard::default())
            .unwrap()
            .rows
            .is_empty());
    }
}
