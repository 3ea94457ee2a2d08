//! Two-state and overlapping-pair (four-state) Markov chains over V/C
//! symbols, their dispersion coefficients, and simulation oracles.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{Matrix4, Vector4};
#[cfg(test)]
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vc::Symbol;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("sequence too short: need {need} symbols, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("symbol {0:?} never occurs as a transition source")]
    MissingSource(Symbol),
    #[error("pair state {0} never observed")]
    UnobservedState(&'static str),
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("degenerate two-state chain (p1 = 1, p0 = 0)")]
    Absorbing,
    #[error("pair chain is reducible")]
    Reducible,
    #[error("linear solve failed: {0}")]
    Solve(&'static str),
    #[error("sequence contains a single symbol type")]
    SingleSymbol,
}

/// Pair states in fixed order.
pub const PAIR_STATES: [&str; 4] = ["VV", "VC", "CV", "CC"];

fn bit(s: Symbol) -> usize {
    match s {
        Symbol::V => 0,
        Symbol::C => 1,
    }
}

fn pair_index(a: Symbol, b: Symbol) -> usize {
    2 * bit(a) + bit(b)
}

fn check_prob(name: &'static str, value: f64) -> Result<(), MarkovError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MarkovError::Probability { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateModel {
    /// P(V | previous V).
    pub p1: f64,
    /// P(V | previous C).
    pub p0: f64,
    /// `counts[from][to]`, index 0 = V, 1 = C.
    pub counts: [[u64; 2]; 2],
    pub n: usize,
}

impl TwoStateModel {
    /// Model with given probabilities and no observed counts.
    pub fn new(p1: f64, p0: f64) -> Result<Self, MarkovError> {
        check_prob("p1", p1)?;
        check_prob("p0", p0)?;
        Ok(TwoStateModel {
            p1,
            p0,
            counts: [[0; 2]; 2],
            n: 0,
        })
    }

    /// Lag-one autocorrelation p1 − p0.
    pub fn r(&self) -> f64 {
        self.p1 - self.p0
    }

    /// Stationary P(V).
    pub fn stationary_vowel(&self) -> Result<f64, MarkovError> {
        let denom = 1.0 - self.r();
        if denom <= 0.0 {
            return Err(MarkovError::Absorbing);
        }
        Ok(self.p0 / denom)
    }
}

pub fn estimate_two_state(seq: &[Symbol]) -> Result<TwoStateModel, MarkovError> {
    if seq.len() < 2 {
        return Err(MarkovError::TooShort { need: 2, got: seq.len() });
    }
    let mut counts = [[0u64; 2]; 2];
    for w in seq.windows(2) {
        counts[bit(w[0])][bit(w[1])] += 1;
    }
    let rate = |row: [u64; 2], s: Symbol| {
        let total = row[0] + row[1];
        if total == 0 {
            Err(MarkovError::MissingSource(s))
        } else {
            Ok(row[0] as f64 / total as f64)
        }
    };
    Ok(TwoStateModel {
        p1: rate(counts[0], Symbol::V)?,
        p0: rate(counts[1], Symbol::C)?,
        counts,
        n: seq.len(),
    })
}

/// Trigram counts by leading pair state, `[state][next]` with next 0 = V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts(pub [[u64; 2]; 4]);

impl PairCounts {
    pub fn from_symbols(seq: &[Symbol]) -> Self {
        let mut c = [[0u64; 2]; 4];
        for w in seq.windows(3) {
            c[pair_index(w[0], w[1])][bit(w[2])] += 1;
        }
        PairCounts(c)
    }

    /// P(next = V | pair state), `None` when the state was never observed.
    pub fn conditional(&self, state: usize) -> Option<f64> {
        let [v, c] = self.0[state];
        (v + c > 0).then(|| v as f64 / (v + c) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourStateModel {
    /// P(next = V | pair state) in the order of [`PAIR_STATES`].
    pub p: [f64; 4],
    pub counts: PairCounts,
    pub n: usize,
}

impl FourStateModel {
    pub fn new(p: [f64; 4]) -> Result<Self, MarkovError> {
        for (name, &v) in PAIR_STATES.iter().zip(&p) {
            check_prob(name, v)?;
        }
        Ok(FourStateModel {
            p,
            counts: PairCounts::default(),
            n: 0,
        })
    }

    /// The order-one chain embedded as a pair chain.
    pub fn from_two_state(m: &TwoStateModel) -> Self {
        FourStateModel {
            p: [m.p1, m.p0, m.p1, m.p0],
            counts: PairCounts::default(),
            n: m.n,
        }
    }

    pub fn p_vv(&self) -> f64 {
        self.p[0]
    }
    pub fn p_vc(&self) -> f64 {
        self.p[1]
    }
    pub fn p_cv(&self) -> f64 {
        self.p[2]
    }
    pub fn p_cc(&self) -> f64 {
        self.p[3]
    }
    /// Self-persistence of vowels (trigram VVV).
    pub fn p11(&self) -> f64 {
        self.p[0]
    }
    /// Self-persistence of consonants (trigram CCC).
    pub fn q00(&self) -> f64 {
        1.0 - self.p[3]
    }

    /// Pair-transition matrix: (a,b) moves to (b,V) or (b,C).
    pub fn transition_matrix(&self) -> Matrix4<f64> {
        let mut q = Matrix4::zeros();
        for (i, &pv) in self.p.iter().enumerate() {
            let b = i & 1;
            q[(i, 2 * b)] += pv;
            q[(i, 2 * b + 1)] += 1.0 - pv;
        }
        q
    }
}

pub fn estimate_four_state(seq: &[Symbol]) -> Result<FourStateModel, MarkovError> {
    if seq.len() < 3 {
        return Err(MarkovError::TooShort { need: 3, got: seq.len() });
    }
    let counts = PairCounts::from_symbols(seq);
    let mut p = [0.0; 4];
    for (i, slot) in p.iter_mut().enumerate() {
        *slot = counts.conditional(i).ok_or(MarkovError::UnobservedState(PAIR_STATES[i]))?;
    }
    Ok(FourStateModel { p, counts, n: seq.len() })
}

fn strongly_connected(q: &Matrix4<f64>) -> bool {
    let reach = |forward: bool| {
        let mut seen = [false; 4];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..4 {
                let w = if forward { q[(u, v)] } else { q[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Solves πQ = π, Σπ = 1 by LU with partial pivoting.
pub fn stationary_distribution(model: &FourStateModel) -> Result<Vector4<f64>, MarkovError> {
    let q = model.transition_matrix();
    if !strongly_connected(&q) {
        return Err(MarkovError::Reducible);
    }
    let mut a = (Matrix4::identity() - q).transpose();
    for j in 0..4 {
        a[(3, j)] = 1.0;
    }
    let rhs = Vector4::new(0.0, 0.0, 0.0, 1.0);
    let pi = a.lu().solve(&rhs).ok_or(MarkovError::Solve("stationary system singular"))?;
    let residual = (pi.transpose() * q - pi.transpose()).amax().max((pi.sum() - 1.0).abs());
    if residual > 1e-12 {
        return Err(MarkovError::Solve("stationary residual above 1e-12"));
    }
    Ok(pi)
}

/// (1 + r)/(1 − r): asymptotic vowel-count variance over the binomial one.
pub fn cf_two_state(model: &TwoStateModel) -> Result<f64, MarkovError> {
    let r = model.r();
    if r >= 1.0 {
        return Err(MarkovError::Absorbing);
    }
    Ok((1.0 + r) / (1.0 - r))
}

/// Long-run variance rate of the "ends in V" indicator under the pair chain,
/// via the fundamental matrix Z = (I − Q + Π)⁻¹, divided by p(1 − p):
/// σ² = 2 Σ πᵢ ĝᵢ (Zĝ)ᵢ − Σ πᵢ ĝᵢ², ĝ = f − p.
pub fn cf_four_state(model: &FourStateModel) -> Result<f64, MarkovError> {
    let pi = stationary_distribution(model)?;
    let q = model.transition_matrix();
    let f = Vector4::new(1.0, 0.0, 1.0, 0.0);
    let p = pi.dot(&f);
    if p <= 0.0 || p >= 1.0 {
        return Err(MarkovError::SingleSymbol);
    }
    let big_pi = Matrix4::from_fn(|_, j| pi[j]);
    let m = Matrix4::identity() - q + big_pi;
    let lu = m.lu();
    let g = f.add_scalar(-p);
    let zg = lu.solve(&g).ok_or(MarkovError::Solve("fundamental matrix singular"))?;
    if (m * zg - g).amax() > 1e-12 {
        return Err(MarkovError::Solve("fundamental residual above 1e-12"));
    }
    let pg = pi.component_mul(&g);
    let sigma2 = 2.0 * pg.dot(&zg) - pg.dot(&g);
    Ok(sigma2 / (p * (1.0 - p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub a: f64,
    pub b: f64,
}

impl Default for Rescale {
    fn default() -> Self {
        Rescale { a: -1.0, b: 1.0 }
    }
}

pub fn memory_depth(cf: f64, rescale: Rescale) -> f64 {
    rescale.a * cf + rescale.b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyIndex {
    pub cf_simple: f64,
    pub cf: f64,
    pub md_simple: f64,
    pub md: f64,
    pub rescale: Rescale,
}

impl DependencyIndex {
    pub fn compute(two: &TwoStateModel, four: &FourStateModel, rescale: Rescale) -> Result<Self, MarkovError> {
        let cf_simple = cf_two_state(two)?;
        let cf = cf_four_state(four)?;
        Ok(DependencyIndex {
            cf_simple,
            cf,
            md_simple: memory_depth(cf_simple, rescale),
            md: memory_depth(cf, rescale),
            rescale,
        })
    }
}

/// Uniform draw in [0, 1) from the top 53 bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw(rng: &mut ChaCha8Rng, p_vowel: f64) -> Symbol {
    if unit(rng) < p_vowel {
        Symbol::V
    } else {
        Symbol::C
    }
}

/// Simulates `length` symbols starting from `start`.
pub fn simulate_two_state_from(model: &TwoStateModel, length: usize, start: Symbol, seed: u64) -> Vec<Symbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(length);
    let mut cur = start;
    for _ in 0..length {
        out.push(cur);
        cur = draw(&mut rng, if cur == Symbol::V { model.p1 } else { model.p0 });
    }
    out
}

/// Simulates `length` symbols with the first drawn from the stationary law.
pub fn simulate_two_state(model: &TwoStateModel, length: usize, seed: u64) -> Result<Vec<Symbol>, MarkovError> {
    let pv = model.stationary_vowel()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = draw(&mut rng, pv);
    Ok(simulate_two_state_from(model, length, start, rng.next_u64()))
}

/// Simulates `length` symbols with the first pair drawn from the stationary law.
pub fn simulate_four_state(model: &FourStateModel, length: usize, seed: u64) -> Result<Vec<Symbol>, MarkovError> {
    if length < 3 {
        return Err(MarkovError::TooShort { need: 3, got: length });
    }
    let pi = stationary_distribution(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = unit(&mut rng);
    let mut acc = 0.0;
    let mut state = 3;
    for (i, &w) in pi.iter().enumerate() {
        acc += w;
        if u < acc {
            state = i;
            break;
        }
    }
    let sym = |b: usize| if b == 0 { Symbol::V } else { Symbol::C };
    let mut out = Vec::with_capacity(length);
    out.push(sym(state >> 1));
    out.push(sym(state & 1));
    while out.len() < length {
        let next = draw(&mut rng, model.p[state]);
        out.push(next);
        state = 2 * (state & 1) + bit(next);
    }
    Ok(out)
}

/// Sample variance of vowel counts over disjoint blocks divided by
/// `block_len · p̂(1 − p̂)`.
pub fn block_variance_oracle(seq: &[Symbol], block_len: usize) -> Result<f64, MarkovError> {
    if block_len < 100 {
        return Err(MarkovError::TooShort { need: 100, got: block_len });
    }
    let need = 100 * block_len;
    if seq.len() < need {
        return Err(MarkovError::TooShort { need, got: seq.len() });
    }
    let blocks: Vec<f64> = seq
        .chunks_exact(block_len)
        .map(|b| b.iter().filter(|&&s| s == Symbol::V).count() as f64)
        .collect();
    let used = (blocks.len() * block_len) as f64;
    let p_hat = blocks.iter().sum::<f64>() / used;
    if p_hat <= 0.0 || p_hat >= 1.0 {
        return Err(MarkovError::SingleSymbol);
    }
    let mean = blocks.iter().sum::<f64>() / blocks.len() as f64;
    let var = blocks.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (blocks.len() - 1) as f64;
    Ok(var / (block_len as f64 * p_hat * (1.0 - p_hat)))
}

/// Fitted chains and indices for one canto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantoDependency {
    /// 1-based reading-order index.
    pub global_index: usize,
    pub cantica: String,
    pub two: TwoStateModel,
    pub four: FourStateModel,
    pub index: DependencyIndex,
}

pub fn fit_canto(global_index: usize, cantica: &str, seq: &[Symbol], rescale: Rescale) -> Result<CantoDependency, MarkovError> {
    let two = estimate_two_state(seq)?;
    let four = estimate_four_state(seq)?;
    let index = DependencyIndex::compute(&two, &four, rescale)?;
    Ok(CantoDependency {
        global_index,
        cantica: cantica.to_string(),
        two,
        four,
        index,
    })
}

pub fn write_markov_csv<W: Write>(out: W, rows: &[CantoDependency]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "global_index", "cantica", "p1", "p0", "p_VV", "p_VC", "p_CV", "p_CC", "cf_simple", "cf", "md_simple", "md",
    ])?;
    for r in rows {
        let nums = [
            r.two.p1,
            r.two.p0,
            r.four.p[0],
            r.four.p[1],
            r.four.p[2],
            r.four.p[3],
            r.index.cf_simple,
            r.index.cf,
            r.index.md_simple,
            r.index.md,
        ];
        let mut rec = vec![r.global_index.to_string(), r.cantica.clone()];
        rec.extend(nums.iter().map(|v| format!("{v:.10}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Asymptotic variance rate of `f` under a general chain from the lag sum
/// Σ_{k≥1} Qᵏ = (I − Q + Π)⁻¹ Q − Π.
#[cfg(test)]
fn variance_rate_dense(q: &DMatrix<f64>, f: &DVector<f64>) -> Option<f64> {
    let n = q.nrows();
    let mut a = (DMatrix::identity(n, n) - q).transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs)?;
    let mean = pi.dot(f);
    let g = f.add_scalar(-mean);
    // Σ_k≥1 cov_k = πĝ · Σ_k≥1 Qᵏĝ = πĝ · (I − Q + Π)⁻¹ Qĝ
    let big_pi = DMatrix::from_fn(n, n, |_, j| pi[j]);
    let qg = q * &g;
    let tail = (DMatrix::identity(n, n) - q + big_pi).lu().solve(&qg)?;
    let pg = pi.component_mul(&g);
    Some(pg.dot(&g) + 2.0 * pg.dot(&tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(s: &str) -> Vec<Symbol> {
        Symbol::parse_seq(s)
    }

    #[test]
    fn two_state_hand_counts() {
        let m = estimate_two_state(&seq("VCVCVCVC")).unwrap();
        assert_eq!((m.p1, m.p0), (0.0, 1.0));
        let m = estimate_two_state(&seq("VVVVCCCC")).unwrap();
        assert_eq!(m.counts, [[3, 1], [0, 3]]);
        assert_eq!((m.p1, m.p0), (0.75, 0.0));
        assert_eq!(estimate_two_state(&seq("VVVV")).unwrap_err(), MarkovError::MissingSource(Symbol::C));
        assert!(matches!(estimate_two_state(&seq("V")), Err(MarkovError::TooShort { .. })));
    }

    #[test]
    fn four_state_alternation_and_missing_states() {
        let c = PairCounts::from_symbols(&seq("VCVCVCVC"));
        assert_eq!(c.conditional(1), Some(1.0));
        assert_eq!(c.conditional(2), Some(0.0));
        assert_eq!(c.conditional(0), None);
        assert_eq!(estimate_four_state(&seq("VVVVVV")).unwrap_err(), MarkovError::UnobservedState("VC"));
    }

    #[test]
    fn transition_matrix_rows() {
        let m = FourStateModel::new([0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = m.transition_matrix();
        for i in 0..4 {
            assert_eq!(q.row(i).iter().filter(|&&v| v > 0.0).count(), 2);
            assert!((q.row(i).sum() - 1.0).abs() < 1e-15);
        }
        assert_eq!(q[(0, 0)], 0.1); // VV -> VV
        assert_eq!(q[(1, 2)], 0.2); // VC -> CV
        assert_eq!(q[(3, 3)], 0.6); // CC -> CC
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&FourStateModel::new([0.5; 4]).unwrap()).unwrap();
        for v in pi.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let alt = FourStateModel::new([0.1, 0.9, 0.1, 0.9]).unwrap();
        let pi = stationary_distribution(&alt).unwrap();
        assert!(pi[1] + pi[2] > pi[0] + pi[3]);
        let absorbing = FourStateModel::new([1.0, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(stationary_distribution(&absorbing).unwrap_err(), MarkovError::Reducible);
    }

    #[test]
    fn cf_closed_forms() {
        assert_eq!(cf_two_state(&TwoStateModel::new(0.4, 0.4).unwrap()).unwrap(), 1.0);
        assert_eq!(cf_two_state(&TwoStateModel::new(0.0, 1.0).unwrap()).unwrap(), 0.0);
        let m = TwoStateModel::new(0.2, 0.7).unwrap();
        assert!((cf_two_state(&m).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cf_two_state(&TwoStateModel::new(1.0, 0.0).unwrap()).unwrap_err(), MarkovError::Absorbing);
        let fair = cf_four_state(&FourStateModel::new([0.5; 4]).unwrap()).unwrap();
        assert!((fair - 1.0).abs() < 1e-12);
    }

    #[test]
    fn memory_depth_rescale() {
        assert_eq!(memory_depth(1.0, Rescale::default()), 0.0);
        assert!((memory_depth(0.22, Rescale::default()) - 0.78).abs() < 1e-15);
        assert_eq!(memory_depth(0.37, Rescale { a: 1.0, b: 0.0 }), 0.37);
    }

    #[test]
    fn absorbing_simulation_from_v() {
        let m = TwoStateModel::new(1.0, 0.0).unwrap();
        assert!(simulate_two_state_from(&m, 50, Symbol::V, 3).iter().all(|&s| s == Symbol::V));
    }

    #[test]
    fn simulation_is_seeded() {
        let m = FourStateModel::new([0.3, 0.6, 0.2, 0.7]).unwrap();
        assert_eq!(simulate_four_state(&m, 1000, 9).unwrap(), simulate_four_state(&m, 1000, 9).unwrap());
        assert_ne!(simulate_four_state(&m, 1000, 9).unwrap(), simulate_four_state(&m, 1000, 10).unwrap());
    }

    #[test]
    fn iid_two_state_round_trip() {
        let m = TwoStateModel::new(0.47, 0.47).unwrap();
        let s = simulate_two_state(&m, 1_000_000, 11).unwrap();
        let e = estimate_two_state(&s).unwrap();
        assert!((e.p1 - 0.47).abs() < 0.01 && (e.p0 - 0.47).abs() < 0.01);
    }

    #[test]
    fn block_oracle_iid_and_alternating() {
        let m = TwoStateModel::new(0.5, 0.5).unwrap();
        let s = simulate_two_state(&m, 2_000_000, 5).unwrap();
        let r = block_variance_oracle(&s, 200).unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
        let alt = seq(&"VC".repeat(10_000));
        assert_eq!(block_variance_oracle(&alt, 100).unwrap(), 0.0);
        assert!(matches!(block_variance_oracle(&alt, 1000), Err(MarkovError::TooShort { .. })));
        assert!(matches!(block_variance_oracle(&alt, 50), Err(MarkovError::TooShort { .. })));
    }

    #[test]
    fn dense_variance_matches_closed_form() {
        let m = FourStateModel::new([0.15, 0.8, 0.35, 0.6]).unwrap();
        let q = m.transition_matrix();
        let qd = DMatrix::from_fn(4, 4, |i, j| q[(i, j)]);
        let f = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let pi = stationary_distribution(&m).unwrap();
        let p = pi[0] + pi[2];
        let dense = variance_rate_dense(&qd, &f).unwrap() / (p * (1.0 - p));
        assert!((dense - cf_four_state(&m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fit_canto_and_csv() {
        let s = seq("VCCVCVVCCCVCVVCVCCVVCVCCCVVC");
        let row = fit_canto(1, "Inferno", &s, Rescale::default()).unwrap();
        assert_eq!(row.index.md, 1.0 - row.index.cf);
        let mut buf = Vec::new();
        write_markov_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("global_index,cantica,p1,p0,p_VV,p_VC,p_CV,p_CC,cf_simple,cf,md_simple,md\n1,Inferno,"));
    }

    fn interior() -> impl Strategy<Value = f64> {
        0.02f64..0.98
    }

    proptest! {
        #[test]
        fn nesting_identity(p1 in interior(), p0 in interior()) {
            let two = TwoStateModel::new(p1, p0).unwrap();
            let four = FourStateModel::from_two_state(&two);
            let a = cf_two_state(&two).unwrap();
            let b = cf_four_state(&four).unwrap();
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }

        #[test]
        fn relabelling_invariance(bits in prop::collection::vec(any::<bool>(), 60..300)) {
            let s: Vec<Symbol> = bits.iter().map(|&b| if b { Symbol::V } else { Symbol::C }).collect();
            let flipped: Vec<Symbol> = s.iter().map(|x| x.flip()).collect();
            if let (Ok(a), Ok(b)) = (estimate_two_state(&s), estimate_two_state(&flipped)) {
                if let (Ok(x), Ok(y)) = (cf_two_state(&a), cf_two_state(&b)) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
            if let (Ok(a), Ok(b)) = (estimate_four_state(&s), estimate_four_state(&flipped)) {
                if let (Ok(x), Ok(y)) = (cf_four_state(&a), cf_four_state(&b)) {
                    prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
                }
            }
        }

        #[test]
        fn cf_positive_for_interior_models(p in prop::array::uniform4(interior())) {
            let m = FourStateModel::new(p).unwrap();
            prop_assert!(cf_four_state(&m).unwrap() > 0.0);
            let pi = stationary_distribution(&m).unwrap();
            prop_assert!((pi.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn memory_depth_decreasing(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            prop_assume!(a < b);
            prop_assert!(memory_depth(a, Rescale::default()) > memory_depth(b, Rescale::default()));
        }

        #[test]
        fn two_state_counts_sum(bits in prop::collection::vec(any::<bool>(), 2..200)) {
            let s: Vec<Symbol> = bits.iter().map(|&b| if b { Symbol::V } else { Symbol::C }).collect();
            if let Ok(m) = estimate_two_state(&s) {
                let total: u64 = m.counts.iter().flatten().sum();
                prop_assert_eq!(total as usize, s.len() - 1);
                prop_assert!((0.0..=1.0).contains(&m.p1) && (0.0..=1.0).contains(&m.p0));
            }
        }
    }
}
