//! Exact counting: edge-set backtracking over `H^(k)(n,d)`, exhaustive scans
//! of the permutation classes, and the asymptotic count formula.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{
    binomial, exp_neg, factorial, int_rational, rational, sci_string, to_f64, uint_rational,
};
use crate::json;
use crate::model::{for_each_permutation, Classifier, MultiEdge, Multigraph, Vertex};
use crate::params::{CostGuard, LPolicy, Params};

/// `|P| = (nd)! / (d!)^n`.
pub fn permutation_count(p: Params) -> BigUint {
    factorial(p.len() as u64) / factorial(p.d as u64).pow(p.n as u32)
}

/// Permutations in `E_0` per simple hypergraph: `m! (k!)^m`.
pub fn permutations_per_hypergraph(p: Params) -> BigUint {
    factorial(p.m as u64) * factorial(p.k as u64).pow(p.m as u32)
}

pub(crate) fn check_permutation_guard(p: Params, guard: CostGuard) -> Result<()> {
    let size = permutation_count(p);
    if size > BigUint::from(guard.max_permutations) {
        return Err(Error::CostGuard {
            what: "|P|",
            size: size.to_string(),
            limit: guard.max_permutations,
        });
    }
    Ok(())
}

fn check_subset_guard(p: Params, guard: CostGuard) -> Result<()> {
    let size = binomial(p.n as u64, p.k as u64);
    if size > BigUint::from(guard.max_subsets) {
        return Err(Error::CostGuard {
            what: "C(n,k)",
            size: size.to_string(),
            limit: guard.max_subsets,
        });
    }
    Ok(())
}

/// Backtracking state. Vertices are processed in increasing order; all edges
/// whose minimum is the current vertex are chosen together, as a set of
/// `(k-1)`-subsets of the later vertices in lexicographic order.
struct Backtrack<'a> {
    p: Params,
    remaining: Vec<usize>,
    /// `(k-1)`-subsets of `{v+1..n}` for each `v`, lexicographic.
    tails: Vec<Vec<Vec<Vertex>>>,
    edges: Vec<MultiEdge>,
    emit: Option<&'a mut dyn FnMut(&Multigraph)>,
    memo: FxHashMap<(usize, Vec<u16>), BigUint>,
}

fn subsets(from: Vertex, to: Vertex, size: usize) -> Vec<Vec<Vertex>> {
    fn rec(next: Vertex, to: Vertex, size: usize, cur: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        let need = (size - cur.len()) as Vertex;
        let mut v = next;
        while v + need - 1 <= to {
            cur.push(v);
            rec(v + 1, to, size, cur, out);
            cur.pop();
            v += 1;
        }
    }
    let mut out = Vec::new();
    if size == 0 {
        out.push(Vec::new());
    } else if from <= to {
        rec(from, to, size, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

impl Backtrack<'_> {
    /// Count completions given that vertices `< v` are saturated.
    fn count_from(&mut self, v: usize) -> BigUint {
        let n = self.p.n;
        let mut v = v;
        while v <= n && self.remaining[v] == 0 {
            v += 1;
        }
        if v > n {
            if let Some(emit) = self.emit.as_mut() {
                let h = Multigraph::from_edges(self.p, self.edges.clone());
                emit(&h);
            }
            return BigUint::one();
        }
        let key = if self.emit.is_none() {
            let key = (v, self.remaining[v..].iter().map(|&r| r as u16).collect::<Vec<_>>());
            if let Some(c) = self.memo.get(&key) {
                return c.clone();
            }
            Some(key)
        } else {
            None
        };
        let need = self.remaining[v];
        self.remaining[v] = 0;
        let count = self.choose(v, 0, need);
        self.remaining[v] = need;
        if let Some(key) = key {
            self.memo.insert(key, count.clone());
        }
        count
    }

    /// Choose `need` more tails for vertex `v`, starting at tail index `start`.
    fn choose(&mut self, v: usize, start: usize, need: usize) -> BigUint {
        if need == 0 {
            return self.count_from(v + 1);
        }
        let mut total = BigUint::zero();
        let count = self.tails[v].len();
        for t in start..count {
            if count - t < need {
                break;
            }
            let fits = self.tails[v][t].iter().all(|&w| self.remaining[w as usize] > 0);
            if !fits {
                continue;
            }
            let tail = std::mem::take(&mut self.tails[v][t]);
            for &w in &tail {
                self.remaining[w as usize] -= 1;
            }
            if self.emit.is_some() {
                let mut e = Vec::with_capacity(self.p.k);
                e.push(v as Vertex);
                e.extend_from_slice(&tail);
                self.edges.push(MultiEdge::from_block(&e));
            }
            total += self.choose(v, t + 1, need - 1);
            if self.emit.is_some() {
                self.edges.pop();
            }
            for &w in &tail {
                self.remaining[w as usize] += 1;
            }
            self.tails[v][t] = tail;
        }
        total
    }
}

/// Exact `|H^(k)(n,d)|` by backtracking over distinct `k`-subsets with
/// per-vertex remaining-degree pruning. With `emit`, every hypergraph is
/// streamed in lexicographic order of its edge list.
pub fn brute_force_count(
    p: Params,
    guard: CostGuard,
    emit: Option<&mut dyn FnMut(&Multigraph)>,
) -> Result<BigUint> {
    check_subset_guard(p, guard)?;
    let n = p.n as Vertex;
    let tails = (0..=p.n)
        .map(|v| {
            if v == 0 {
                Vec::new()
            } else {
                subsets(v as Vertex + 1, n, p.k - 1)
            }
        })
        .collect();
    let mut bt = Backtrack {
        p,
        remaining: std::iter::once(0).chain(std::iter::repeat_n(p.d, p.n)).collect(),
        tails,
        edges: Vec::with_capacity(p.m),
        emit,
        memo: FxHashMap::default(),
    };
    Ok(bt.count_from(1))
}

/// Every simple hypergraph of the instance, in lexicographic order.
pub fn all_hypergraphs(p: Params, guard: CostGuard) -> Result<Vec<Multigraph>> {
    let mut out = Vec::new();
    let mut sink = |h: &Multigraph| out.push(h.clone());
    brute_force_count(p, guard, Some(&mut sink))?;
    Ok(out)
}

/// The asymptotic count: exact leading term times `exp(-(k-1)(d-1)/2)`.
#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub params: Params,
    #[serde(serialize_with = "json::opt_big_uint")]
    pub exact_count: Option<BigUint>,
    /// `(nd)! / ((nd/k)! (k!)^{nd/k} (d!)^n)`.
    #[serde(serialize_with = "json::rational")]
    pub formula_leading: BigRational,
    pub formula_leading_decimal: String,
    /// `exp(-(k-1)(d-1)/2)` to `precision` significant digits.
    pub correction: String,
    pub estimate: String,
    pub estimate_f64: f64,
    /// `exact_count / estimate`.
    pub ratio: Option<f64>,
    /// `sqrt(d/n) + d^2/n`, for context only.
    pub error_scale: f64,
    pub precision: u32,
    #[serde(skip)]
    pub correction_exact: BigRational,
    #[serde(skip)]
    pub estimate_exact: BigRational,
}

pub fn formula_estimate(p: Params, precision: u32) -> CountReport {
    let (n, d, k, m) = (p.n as u64, p.d as u64, p.k as u64, p.m as u64);
    let num = factorial(n * d);
    let den = factorial(m) * factorial(k).pow(m as u32) * factorial(d).pow(n as u32);
    let leading = BigRational::new(num.into(), den.into());
    let exponent = rational(((k - 1) * (d - 1)) as i64, 2);
    let correction = exp_neg(&exponent, precision);
    let estimate = &leading * &correction;
    let nf = n as f64;
    let df = d as f64;
    CountReport {
        params: p,
        exact_count: None,
        formula_leading_decimal: sci_string(&leading, precision),
        formula_leading: leading,
        correction: sci_string(&correction, precision),
        estimate: sci_string(&estimate, precision),
        estimate_f64: to_f64(&estimate),
        ratio: None,
        error_scale: (df / nf).sqrt() + df * df / nf,
        precision,
        correction_exact: correction,
        estimate_exact: estimate,
    }
}

/// Sizes of `P`, `E` and `E_l`, by scanning every permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassSizes {
    pub params: Params,
    pub loop_cap: usize,
    /// `|P|` as counted by the scan.
    pub permutations: u64,
    /// `|P|` from factorials.
    #[serde(serialize_with = "json::big_uint")]
    pub permutations_formula: BigUint,
    pub e_size: u64,
    /// `|E_l|` for `l = 0..=L`.
    pub levels: Vec<u64>,
    /// Permutations with two equal blocks.
    pub with_multi_edge: u64,
    /// Permutations with a bad loop.
    pub with_bad_loop: u64,
    /// Permutations without multiple edges or bad loops but more than `L` loops.
    pub over_cap: u64,
}

pub fn exhaustive_class_sizes(p: Params, policy: LPolicy, guard: CostGuard) -> Result<ClassSizes> {
    check_permutation_guard(p, guard)?;
    let mut classifier = Classifier::new(p, policy);
    let cap = classifier.loop_cap();
    let mut sizes = ClassSizes {
        params: p,
        loop_cap: cap,
        permutations: 0,
        permutations_formula: permutation_count(p),
        e_size: 0,
        levels: vec![0; cap + 1],
        with_multi_edge: 0,
        with_bad_loop: 0,
        over_cap: 0,
    };
    for_each_permutation(p, |seq| {
        sizes.permutations += 1;
        let c = classifier.classify(seq);
        match c.level {
            Some(l) => {
                sizes.e_size += 1;
                sizes.levels[l] += 1;
            }
            None => {
                if c.has_multi_edge {
                    sizes.with_multi_edge += 1;
                }
                if c.has_bad_loop {
                    sizes.with_bad_loop += 1;
                }
                if !c.has_multi_edge && !c.has_bad_loop {
                    sizes.over_cap += 1;
                }
            }
        }
    });
    Ok(sizes)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRatio {
    pub level: usize,
    /// `|E_l| / |E_{l-1}|`, absent when `E_{l-1}` is empty.
    #[serde(serialize_with = "json::opt_rational")]
    pub ratio: Option<BigRational>,
    pub ratio_f64: Option<f64>,
    /// `(k-1)(d-1)/(2l)`.
    #[serde(serialize_with = "json::rational")]
    pub reference: BigRational,
}

/// Oracle count and formula side by side.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    #[serde(flatten)]
    pub report: CountReport,
    pub class_sizes: Option<ClassSizes>,
    /// Why class sizes are missing, if they are.
    pub class_sizes_skipped: Option<String>,
    /// `|P| / |E_0|`.
    #[serde(serialize_with = "json::opt_rational")]
    pub p_over_e0: Option<BigRational>,
    pub log_p_over_e0: Option<f64>,
    /// `(k-1)(d-1)/2`.
    #[serde(serialize_with = "json::rational")]
    pub half_exponent: BigRational,
    pub level_ratios: Vec<LevelRatio>,
    /// `|E_0| == exact_count * m! (k!)^m`, when both sides exist.
    pub e0_identity_holds: Option<bool>,
}

/// `ln x` for a positive big integer, keeping the top 60 bits.
fn ln_big(x: &num_bigint::BigInt) -> f64 {
    let shift = x.bits().saturating_sub(60);
    (x >> shift).to_f64().unwrap_or(f64::NAN).ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn compare(p: Params, policy: LPolicy, guard: CostGuard, precision: u32) -> Result<Comparison> {
    let exact = brute_force_count(p, guard, None)?;
    let mut report = formula_estimate(p, precision);
    report.ratio = Some(to_f64(&(uint_rational(exact.clone()) / &report.estimate_exact)));
    report.exact_count = Some(exact.clone());

    let (d, k) = (p.d as i64, p.k as i64);
    let half_exponent = rational((k - 1) * (d - 1), 2);
    let (class_sizes, skipped) = match exhaustive_class_sizes(p, policy, guard) {
        Ok(c) => (Some(c), None),
        Err(e @ Error::CostGuard { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let mut level_ratios = Vec::new();
    let mut p_over_e0 = None;
    let mut e0_identity_holds = None;
    if let Some(c) = &class_sizes {
        for l in 1..=c.loop_cap {
            let ratio = (c.levels[l - 1] > 0).then(|| rational(c.levels[l] as i64, c.levels[l - 1] as i64));
            level_ratios.push(LevelRatio {
                level: l,
                ratio_f64: ratio.as_ref().map(to_f64),
                ratio,
                reference: rational((k - 1) * (d - 1), 2 * l as i64),
            });
        }
        if c.levels[0] > 0 {
            p_over_e0 = Some(uint_rational(c.permutations_formula.clone()) / int_rational(c.levels[0]));
        }
        e0_identity_holds = Some(BigUint::from(c.levels[0]) == &exact * permutations_per_hypergraph(p));
    } else {
        let e0 = &exact * permutations_per_hypergraph(p);
        if !e0.is_zero() {
            p_over_e0 = Some(uint_rational(permutation_count(p)) / uint_rational(e0));
        }
    }
    let log_p_over_e0 = p_over_e0.as_ref().map(|q| ln_big(q.numer()) - ln_big(q.denom()));
    Ok(Comparison {
        report,
        class_sizes,
        class_sizes_skipped: skipped,
        p_over_e0,
        log_p_over_e0,
        half_exponent,
        level_ratios,
        e0_identity_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn p(n: usize, d: usize, k: usize) -> Params {
        Params::new(n, d, k).unwrap()
    }

    /// Independent oracle: all `m`-subsets of the `k`-subsets with every degree `d`.
    fn naive_count(p: Params) -> (u64, BTreeSet<Vec<Vec<Vertex>>>) {
        fn rec(
            all: &[Vec<Vertex>],
            start: usize,
            chosen: &mut Vec<usize>,
            p: Params,
            found: &mut BTreeSet<Vec<Vec<Vertex>>>,
        ) {
            if chosen.len() == p.m {
                let mut deg = vec![0; p.n + 1];
                for &i in chosen.iter() {
                    for &v in &all[i] {
                        deg[v as usize] += 1;
                    }
                }
                if deg[1..].iter().all(|&x| x == p.d) {
                    found.insert(chosen.iter().map(|&i| all[i].clone()).collect());
                }
                return;
            }
            for i in start..all.len() {
                chosen.push(i);
                rec(all, i + 1, chosen, p, found);
                chosen.pop();
            }
        }
        let all = subsets(1, p.n as Vertex, p.k);
        let mut found = BTreeSet::new();
        rec(&all, 0, &mut Vec::new(), p, &mut found);
        (found.len() as u64, found)
    }

    #[test]
    fn backtracking_matches_naive_oracle() {
        for (n, d, k) in [(6, 1, 3), (6, 2, 3), (4, 3, 3), (9, 1, 3), (8, 1, 4), (5, 3, 3), (6, 3, 3), (5, 4, 4)] {
            let params = p(n, d, k);
            let (want, classes) = naive_count(params);
            let got = brute_force_count(params, CostGuard::default(), None).unwrap();
            assert_eq!(got, BigUint::from(want), "{params}");
            let listed: BTreeSet<Vec<Vec<Vertex>>> = all_hypergraphs(params, CostGuard::default())
                .unwrap()
                .iter()
                .map(|h| h.edges().iter().map(|e| e.vertices().to_vec()).collect())
                .collect();
            assert_eq!(listed, classes, "{params}");
        }
    }

    #[test]
    fn known_counts() {
        let g = CostGuard::default();
        assert_eq!(brute_force_count(p(6, 1, 3), g, None).unwrap(), BigUint::from(10u32));
        assert_eq!(brute_force_count(p(4, 3, 3), g, None).unwrap(), BigUint::from(1u32));
        assert_eq!(brute_force_count(p(9, 1, 3), g, None).unwrap(), BigUint::from(280u32));
        assert_eq!(brute_force_count(p(3, 2, 3), g, None).unwrap(), BigUint::zero());
        // 6!/(2! 3!^2) and 9!/(3! 6^3)
        assert_eq!(factorial(6) / (factorial(2) * factorial(3).pow(2)), BigUint::from(10u32));
        assert_eq!(factorial(9) / (factorial(3) * BigUint::from(216u32)), BigUint::from(280u32));
    }

    #[test]
    fn emitted_hypergraphs_are_simple_regular_and_sorted() {
        let hs = all_hypergraphs(p(6, 2, 3), CostGuard::default()).unwrap();
        assert!(hs.windows(2).all(|w| w[0] < w[1]));
        assert!(hs.iter().all(|h| h.is_simple() && h.is_regular()));
    }

    #[test]
    fn subset_guard() {
        let tight = CostGuard {
            max_subsets: 10,
            ..CostGuard::default()
        };
        assert!(matches!(
            brute_force_count(p(6, 1, 3), tight, None),
            Err(Error::CostGuard { what: "C(n,k)", .. })
        ));
    }

    #[test]
    fn formula_at_degree_one_is_exact() {
        let r = formula_estimate(p(6, 1, 3), 50);
        assert_eq!(r.formula_leading, int_rational(10));
        assert_eq!(r.correction_exact, BigRational::one());
        assert_eq!(r.estimate_exact, int_rational(10));
        let r = formula_estimate(p(8, 1, 4), 50);
        assert_eq!(r.formula_leading, int_rational(35));
        let r = formula_estimate(p(9, 1, 3), 50);
        assert_eq!(r.estimate_exact, int_rational(280));
    }

    #[test]
    fn formula_leading_term_at_4_3_3() {
        let r = formula_estimate(p(4, 3, 3), 50);
        assert_eq!(r.formula_leading, rational(479_001_600, 40_310_784));
        assert!((to_f64(&r.correction_exact) - (-2.0f64).exp()).abs() < 1e-15);
        assert!(r.correction.starts_with("1.353352832366126918939994949724844034076315459095"));
    }

    #[test]
    fn class_sizes_small() {
        let c = exhaustive_class_sizes(p(3, 2, 3), LPolicy::SqrtNd, CostGuard::default()).unwrap();
        assert_eq!(c.permutations, 90);
        assert_eq!(c.permutations_formula, BigUint::from(90u32));
        assert_eq!(c.levels, vec![0, 0, 54]);
        assert_eq!(c.e_size, 54);

        let c = exhaustive_class_sizes(p(6, 1, 3), LPolicy::SqrtNd, CostGuard::default()).unwrap();
        assert_eq!(c.permutations, 720);
        assert_eq!(c.levels[0], 720);
    }

    #[test]
    fn permutation_guard() {
        let tight = CostGuard {
            max_permutations: 89,
            ..CostGuard::default()
        };
        assert!(matches!(
            exhaustive_class_sizes(p(3, 2, 3), LPolicy::SqrtNd, tight),
            Err(Error::CostGuard { what: "|P|", .. })
        ));
    }

    #[test]
    fn comparison_at_degree_one() {
        let c = compare(p(6, 1, 3), LPolicy::SqrtNd, CostGuard::default(), 50).unwrap();
        assert_eq!(c.report.ratio, Some(1.0));
        assert_eq!(c.e0_identity_holds, Some(true));
        assert!(c.level_ratios.is_empty() || c.level_ratios.iter().all(|r| r.ratio.is_none() || r.ratio == Some(rational(0, 1))));
    }
}
