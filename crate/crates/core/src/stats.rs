//! Rank correlations, partial rank correlation, OLS trend tests,
//! Kruskal–Wallis and Dunn post-hoc comparisons with Holm adjustment.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("input is constant")]
    Constant,
    #[error("correlation matrix is singular (collinear variables)")]
    Singular,
    #[error("need at least two non-empty groups")]
    Groups,
}

/// Largest n for which Spearman's p is taken from the exact permutation null.
pub const SPEARMAN_EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// ρ for correlations, slope for OLS, H for Kruskal–Wallis.
    pub effect: Option<f64>,
    pub n: usize,
}

impl TestResult {
    /// No detectable association (used when an input series is flat).
    pub fn null(n: usize) -> Self {
        TestResult {
            statistic: 0.0,
            p_value: 1.0,
            effect: Some(0.0),
            n,
        }
    }
}

fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

fn check_pair(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(StatsError::TooFew { need, got: x.len() });
    }
    Ok(())
}

/// Average ranks (1-based) with ties sharing their mid-rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

/// Tie group sizes of a sample.
fn tie_sizes(x: &[f64]) -> Vec<usize> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p of a correlation coefficient via t on `df` degrees of freedom.
pub fn correlation_t_p(r: f64, df: f64) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    clamp_p(2.0 * dist.sf(t.abs()))
}

/// Spearman's ρ with a two-sided p: exact permutation null for
/// n ≤ [`SPEARMAN_EXACT_MAX_N`], t-approximation on n−2 df above.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    check_pair(x, y, 4)?;
    let (rx, ry) = (ranks(x), ranks(y));
    let rho = pearson(&rx, &ry)?;
    let n = x.len();
    let p = if n <= SPEARMAN_EXACT_MAX_N {
        exact_permutation_p(&rx, &ry, rho)
    } else {
        correlation_t_p(rho, (n - 2) as f64)
    };
    Ok(TestResult {
        statistic: rho,
        p_value: p,
        effect: Some(rho),
        n,
    })
}

/// Spearman's ρ with the t-approximation regardless of n.
pub fn spearman_t_approx(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    check_pair(x, y, 4)?;
    let rho = pearson(&ranks(x), &ranks(y))?;
    Ok(TestResult {
        statistic: rho,
        p_value: correlation_t_p(rho, (x.len() - 2) as f64),
        effect: Some(rho),
        n: x.len(),
    })
}

/// Share of rank permutations of `ry` whose |ρ| reaches the observed |ρ|.
fn exact_permutation_p(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut c = vec![0usize; n];
    let target = rho.abs() - 1e-12;
    let (mut hits, mut total) = (0u64, 0u64);
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).map(f64::abs).unwrap_or(0.0) >= target {
            hits += 1;
        }
    };
    // Heap's algorithm
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Partial Spearman correlation of `target` and `focal` given `controls`:
/// partial Pearson on mid-ranks through the precision matrix of the joint
/// rank-correlation matrix, p via t on n−2−k df.
pub fn partial_spearman(target: &[f64], focal: &[f64], controls: &[&[f64]]) -> Result<TestResult, StatsError> {
    if controls.is_empty() {
        return spearman(target, focal);
    }
    check_pair(target, focal, 1)?;
    let n = target.len();
    for c in controls {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(n, c.len()));
        }
    }
    let k = controls.len();
    if n <= k + 2 {
        return Err(StatsError::TooFew { need: k + 3, got: n });
    }
    let vars: Vec<Vec<f64>> = std::iter::once(target)
        .chain(std::iter::once(focal))
        .chain(controls.iter().copied())
        .map(ranks)
        .collect();
    let m = vars.len();
    let mut corr = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let r = pearson(&vars[i], &vars[j])?;
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    let eig = SymmetricEigen::new(corr.clone());
    let (min, max) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min <= 1e-10 * max {
        return Err(StatsError::Singular);
    }
    let precision = corr.try_inverse().ok_or(StatsError::Singular)?;
    let r = (-precision[(0, 1)] / (precision[(0, 0)] * precision[(1, 1)]).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2 - k) as f64;
    Ok(TestResult {
        statistic: r,
        p_value: correlation_t_p(r, df),
        effect: Some(r),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub test: TestResult,
}

/// Least-squares slope of y on x with a two-sided t-test on n−2 df.
pub fn ols_slope_test(x: &[f64], y: &[f64]) -> Result<OlsFit, StatsError> {
    check_pair(x, y, 3)?;
    let n = x.len();
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 1e-300 {
        return Err(StatsError::Constant);
    }
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let sumsq: f64 = y.iter().map(|b| b * b).sum();
    if syy <= 1e-28 * sumsq.max(1e-300) {
        return Ok(OlsFit {
            slope: 0.0,
            intercept: my,
            test: TestResult::null(n),
        });
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let df = (n - 2) as f64;
    let se = (sse / df / sxx).sqrt();
    let (t, p) = if se <= 1e-14 * slope.abs() {
        (f64::INFINITY.copysign(slope), 0.0)
    } else {
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (t, clamp_p(2.0 * dist.sf(t.abs())))
    };
    Ok(OlsFit {
        slope,
        intercept,
        test: TestResult {
            statistic: t,
            p_value: p,
            effect: Some(slope),
            n,
        },
    })
}

struct Pooled {
    /// Mid-ranks of the pooled sample, split back by group.
    group_ranks: Vec<Vec<f64>>,
    n_total: usize,
    /// Σ(t³ − t) over tie groups.
    tie_sum: f64,
}

fn pool(groups: &[Vec<f64>]) -> Result<Pooled, StatsError> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(StatsError::Groups);
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n_total = all.len();
    if n_total < 5 {
        return Err(StatsError::TooFew { need: 5, got: n_total });
    }
    let r = ranks(&all);
    let mut group_ranks = Vec::with_capacity(groups.len());
    let mut at = 0;
    for g in groups {
        group_ranks.push(r[at..at + g.len()].to_vec());
        at += g.len();
    }
    let tie_sum: f64 = tie_sizes(&all)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let nf = n_total as f64;
    if (1.0 - tie_sum / (nf * nf * nf - nf)).abs() < 1e-12 {
        return Err(StatsError::Constant);
    }
    Ok(Pooled {
        group_ranks,
        n_total,
        tie_sum,
    })
}

/// Kruskal–Wallis H with tie correction; p from χ² on g−1 df.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    let pooled = pool(groups)?;
    let nf = pooled.n_total as f64;
    let sum: f64 = pooled
        .group_ranks
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            s * s / r.len() as f64
        })
        .sum();
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let h = h_raw / (1.0 - pooled.tie_sum / (nf * nf * nf - nf));
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("df > 0").sf(h.max(0.0));
    Ok(TestResult {
        statistic: h,
        p_value: clamp_p(p),
        effect: Some(h),
        n: pooled.n_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub group_a: usize,
    pub group_b: usize,
    /// Mean rank of a minus mean rank of b.
    pub mean_rank_diff: f64,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let adj = ((m - rank) as f64 * p[i]).min(1.0);
        running = running.max(adj);
        out[i] = running;
    }
    out
}

/// Dunn's pairwise z-tests on pooled mid-ranks (two-sided normal p),
/// Holm-adjusted over all pairs. Pairs are ordered (0,1), (0,2), …, (1,2), ….
pub fn dunn_holm(groups: &[Vec<f64>]) -> Result<Vec<PairwiseTest>, StatsError> {
    let pooled = pool(groups)?;
    let nf = pooled.n_total as f64;
    let var_base = nf * (nf + 1.0) / 12.0 - pooled.tie_sum / (12.0 * (nf - 1.0));
    let mean_ranks: Vec<f64> = pooled.group_ranks.iter().map(|r| mean(r)).collect();
    let normal = Normal::standard();
    let mut tests = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let diff = mean_ranks[a] - mean_ranks[b];
            let se = (var_base * (1.0 / groups[a].len() as f64 + 1.0 / groups[b].len() as f64)).sqrt();
            let z = diff / se;
            tests.push(PairwiseTest {
                group_a: a,
                group_b: b,
                mean_rank_diff: diff,
                z,
                p_raw: clamp_p(2.0 * normal.sf(z.abs())),
                p_adjusted: 0.0,
            });
        }
    }
    let raw: Vec<f64> = tests.iter().map(|t| t.p_raw).collect();
    for (t, adj) in tests.iter_mut().zip(holm_adjust(&raw)) {
        t.p_adjusted = adj;
    }
    Ok(tests)
}

/// Spearman trend that maps a flat series to ρ = 0, p = 1 instead of failing.
pub fn spearman_trend(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    match spearman(x, y) {
        Err(StatsError::Constant) => Ok(TestResult::null(x.len())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mid_ranks() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]).unwrap().statistic, 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().statistic, -1.0);
        let big: Vec<f64> = (0..20).map(f64::from).collect();
        let r = spearman(&big, &big).unwrap();
        assert_eq!((r.statistic, r.p_value), (1.0, 0.0));
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).unwrap_err(),
            StatsError::Constant
        );
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Err(StatsError::TooFew { .. })));
        assert!(matches!(spearman(&[1.0; 5], &[1.0; 4]), Err(StatsError::LengthMismatch(5, 4))));
    }

    #[test]
    fn spearman_n5_example() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!(close(r.statistic, 0.8, 1e-12));
        // 8 of 120 rank permutations have Σd² ≤ 4; two-sided doubles it
        assert!(close(r.p_value, 16.0 / 120.0, 1e-12));
    }

    #[test]
    fn t_approximation_is_loose_at_small_n() {
        let r = spearman_t_approx(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!(close(r.p_value, 0.1041, 1e-3), "{}", r.p_value);
        assert!((r.p_value - 16.0 / 120.0).abs() > 0.02);
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols_slope_test(&x, &y).unwrap();
        assert!(close(f.slope, 2.0, 1e-12));
        assert!(close(f.intercept, 1.0, 1e-12));
        assert_eq!(f.test.p_value, 0.0);
        let flat = ols_slope_test(&x, &[3.3; 10]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert_eq!(flat.test.p_value, 1.0);
        assert_eq!(ols_slope_test(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap_err(), StatsError::Constant);
    }

    #[test]
    fn kruskal_wallis_hand_example() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let r = kruskal_wallis(&g).unwrap();
        assert!(close(r.statistic, 7.2, 1e-12));
        assert!(close(r.p_value, (-3.6f64).exp(), 1e-12));
    }

    #[test]
    fn kruskal_wallis_interleaved_and_separated() {
        let r = kruskal_wallis(&[vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]).unwrap();
        // R = (9, 12): H = 12/42 * (27 + 48) - 21 = 3/7
        assert!(close(r.statistic, 3.0 / 7.0, 1e-12));
        assert!(r.p_value > 0.5);
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![10.0, 11.0, 12.0]]).unwrap();
        assert!(r.p_value < 0.05);
        assert_eq!(kruskal_wallis(&[vec![2.0; 3], vec![2.0; 3]]).unwrap_err(), StatsError::Constant);
        assert_eq!(kruskal_wallis(&[vec![1.0, 2.0, 3.0]]).unwrap_err(), StatsError::Groups);
        assert_eq!(kruskal_wallis(&[vec![1.0], vec![]]).unwrap_err(), StatsError::Groups);
    }

    #[test]
    fn holm_step_down() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        let want = [0.03, 0.06, 0.06];
        for (a, w) in adj.iter().zip(want) {
            assert!(close(*a, w, 1e-15), "{adj:?}");
        }
        assert_eq!(holm_adjust(&[0.5, 0.9]), vec![1.0, 1.0]);
    }

    #[test]
    fn dunn_identical_groups_and_outlier() {
        let same = dunn_holm(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(same[0].p_adjusted, 1.0);
        let g = vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![3.0, 5.0, 1.0, 4.0, 2.0],
            vec![100.0, 101.0, 102.0, 103.0, 104.0],
        ];
        let d = dunn_holm(&g).unwrap();
        let pairs: Vec<(usize, usize, bool)> = d.iter().map(|t| (t.group_a, t.group_b, t.p_adjusted < 0.05)).collect();
        assert_eq!(pairs, vec![(0, 1, false), (0, 2, true), (1, 2, true)]);
        // mean ranks (5.5, 5.5, 13); N = 15 with five ties of size 2
        let var = 15.0 * 16.0 / 12.0 - 5.0 * 6.0 / (12.0 * 14.0);
        let z = (5.5 - 13.0) / (var * 0.4f64).sqrt();
        assert!(close(d[1].z, z, 1e-12));
    }

    #[test]
    fn partial_without_controls_is_spearman() {
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0, 5.5, 3.5];
        let y = [2.0, 7.0, 1.0, 8.0, 2.5, 8.5, 1.8, 2.8, 4.5, 9.0];
        assert_eq!(partial_spearman(&x, &y, &[]).unwrap(), spearman(&x, &y).unwrap());
    }

    #[test]
    fn partial_with_duplicated_focal_is_singular() {
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.5, 8.5, 1.8, 2.8];
        assert_eq!(partial_spearman(&x, &y, &[&y]).unwrap_err(), StatsError::Singular);
    }

    proptest! {
        #[test]
        fn spearman_symmetric_and_rank_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 10..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
                prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let c = spearman(&neg, &y).unwrap();
                prop_assert!((a.statistic + c.statistic).abs() < 1e-12);
                let by_rank = spearman(&ranks(&x), &y).unwrap();
                prop_assert!((a.statistic - by_rank.statistic).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&a.p_value));
            }
        }

        #[test]
        fn kruskal_invariant_under_monotone_transform(
            g in prop::collection::vec(prop::collection::vec(0u8..20, 2..8), 3)
        ) {
            let groups: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|&x| f64::from(x)).collect()).collect();
            let moved: Vec<Vec<f64>> = groups.iter().map(|v| v.iter().map(|x| x * x * x + 7.0).collect()).collect();
            match (kruskal_wallis(&groups), kruskal_wallis(&moved)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.statistic - b.statistic).abs() < 1e-9);
                    prop_assert!((0.0..=1.0).contains(&a.p_value));
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "transform changed the outcome"),
            }
        }

        #[test]
        fn holm_dominates_and_is_monotone(p in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let adj = holm_adjust(&p);
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r);
                prop_assert!(*a <= 1.0);
            }
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
        }
    }
}
