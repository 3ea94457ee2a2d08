//! Simulation and closed-form oracles for the Markov and statistics kernels.

use commedia_core::markov::{
    block_variance_oracle, cf_two_state, estimate_four_state, estimate_two_state, simulate_four_state, simulate_two_state,
    stationary_distribution, FourStateModel, TwoStateModel,
};
use commedia_core::stats::partial_spearman;
use commedia_core::vc::Symbol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn two_state_round_trip_at_one_million() {
    let m = TwoStateModel::new(0.22, 0.71).unwrap();
    let e = estimate_two_state(&simulate_two_state(&m, 1_000_000, 21).unwrap()).unwrap();
    assert!((e.p1 - m.p1).abs() < 0.005 && (e.p0 - m.p0).abs() < 0.005, "{e:?}");
}

#[test]
fn four_state_round_trip_at_one_million() {
    let m = FourStateModel::new([0.18, 0.74, 0.33, 0.62]).unwrap();
    let e = estimate_four_state(&simulate_four_state(&m, 1_000_000, 22).unwrap()).unwrap();
    for (got, want) in e.p.iter().zip(m.p) {
        assert!((got - want).abs() < 0.005, "{:?} vs {:?}", e.p, m.p);
    }
}

#[test]
fn stationary_law_matches_empirical_pair_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let m = FourStateModel::new([0; 4].map(|_| rng.random_range(0.1..0.9))).unwrap();
    let pi = stationary_distribution(&m).unwrap();
    let seq = simulate_four_state(&m, 10_000_000, 24).unwrap();
    let mut freq = [0f64; 4];
    for w in seq.windows(2) {
        let bit = |s: Symbol| usize::from(s == Symbol::C);
        freq[2 * bit(w[0]) + bit(w[1])] += 1.0;
    }
    let total = (seq.len() - 1) as f64;
    for i in 0..4 {
        assert!((freq[i] / total - pi[i]).abs() < 0.003, "state {i}: {} vs {}", freq[i] / total, pi[i]);
    }
}

#[test]
fn alternation_dominated_block_variance() {
    let m = TwoStateModel::new(0.2, 0.7).unwrap();
    let cf = cf_two_state(&m).unwrap();
    assert!((cf - 1.0 / 3.0).abs() < 1e-15);
    let ratio = block_variance_oracle(&simulate_two_state(&m, 10_000_000, 25).unwrap(), 500).unwrap();
    assert!((ratio / cf - 1.0).abs() < 0.02, "{ratio} vs {cf}");
}

/// Long blocks: 10^4 symbols per block needs 10^8 symbols for a sampling
/// error near 1.4%.
#[test]
fn long_block_convergence() {
    let m = TwoStateModel::new(0.35, 0.6).unwrap();
    let cf = cf_two_state(&m).unwrap();
    let ratio = block_variance_oracle(&simulate_two_state(&m, 100_000_000, 26).unwrap(), 10_000).unwrap();
    assert!((ratio / cf - 1.0).abs() < 0.05, "{ratio} vs {cf}");
}

fn rank(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Residuals of `y` after least squares on an intercept and `xs`, by normal
/// equations solved with Gaussian elimination.
fn residuals(y: &[f64], xs: &[Vec<f64>]) -> Vec<f64> {
    let n = y.len();
    let cols: Vec<Vec<f64>> = std::iter::once(vec![1.0; n]).chain(xs.iter().cloned()).collect();
    let m = cols.len();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m).map(|j| (0..n).map(|t| cols[i][t] * cols[j][t]).sum()).collect();
            row.push((0..n).map(|t| cols[i][t] * y[t]).sum());
            row
        })
        .collect();
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
    (0..n).map(|t| y[t] - (0..m).map(|j| beta[j] * cols[j][t]).sum::<f64>()).collect()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn partial_spearman_equals_correlation_of_rank_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..10 {
        let n = 60;
        let z1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let z2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|i| z1[i] + 0.5 * z2[i] + rng.random_range(0.0..0.5)).collect();
        let y: Vec<f64> = (0..n).map(|i| -z1[i] + rng.random_range(0.0..0.8)).collect();
        let got = partial_spearman(&y, &x, &[&z1, &z2]).unwrap();
        let controls = vec![rank(&z1), rank(&z2)];
        let want = corr(&residuals(&rank(&y), &controls), &residuals(&rank(&x), &controls));
        assert!((got.statistic - want).abs() < 1e-10, "{} vs {want}", got.statistic);
        assert_eq!(got.n, n);
    }
}
