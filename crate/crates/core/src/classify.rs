//! Bag-of-words cantica classification with elastic-net multinomial
//! logistic regression, Monte Carlo validation and term rankings.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{ols_slope_test, spearman_trend, OlsFit, StatsError, TestResult};
use crate::tokenizer::{StopwordList, Token};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("vocabulary has {0} terms after filtering, need at least 10")]
    SmallVocabulary(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no items")]
    Empty,
    #[error("need at least two classes in the training data, found {0}")]
    Classes(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("fold {fold} has no training rows of class {class}")]
    FoldMissingClass { fold: usize, class: usize },
    #[error("tuning grid is empty")]
    EmptyGrid,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("objective is not finite")]
    NonFinite,
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

type Result<T> = std::result::Result<T, ClassifyError>;

/// Term frequencies of one canto with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDoc {
    pub global_index: usize,
    /// Canto number within its cantica (1-based).
    pub number: usize,
    pub label: usize,
    pub terms: BTreeMap<String, u64>,
}

impl LabeledDoc {
    pub fn from_tokens(global_index: usize, number: usize, label: usize, tokens: &[Token]) -> Self {
        let mut terms = BTreeMap::new();
        for t in tokens {
            *terms.entry(t.surface.clone()).or_insert(0) += 1;
        }
        LabeledDoc {
            global_index,
            number,
            label,
            terms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtmParams {
    pub top_k: usize,
    pub min_len: usize,
}

impl Default for DtmParams {
    fn default() -> Self {
        DtmParams { top_k: 500, min_len: 3 }
    }
}

/// Most frequent admissible terms over `docs`, ties broken lexicographically.
pub fn select_vocabulary(docs: &[&LabeledDoc], stopwords: &StopwordList, params: &DtmParams) -> Result<Vec<String>> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for d in docs {
        for (term, &c) in &d.terms {
            if term.chars().count() >= params.min_len && !stopwords.contains(term) {
                *freq.entry(term.as_str()).or_insert(0) += c;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(params.top_k);
    if ranked.len() < 10 {
        return Err(ClassifyError::SmallVocabulary(ranked.len()));
    }
    Ok(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTermMatrix {
    pub row_ids: Vec<usize>,
    pub vocabulary: Vec<String>,
    /// Row-major raw term counts.
    pub counts: Vec<f64>,
    pub params: DtmParams,
}

impl DocumentTermMatrix {
    pub fn with_vocabulary(docs: &[&LabeledDoc], vocabulary: Vec<String>, params: DtmParams) -> Self {
        let p = vocabulary.len();
        let mut counts = vec![0.0; docs.len() * p];
        for (i, d) in docs.iter().enumerate() {
            for (j, term) in vocabulary.iter().enumerate() {
                if let Some(&c) = d.terms.get(term) {
                    counts[i * p + j] = c as f64;
                }
            }
        }
        DocumentTermMatrix {
            row_ids: docs.iter().map(|d| d.global_index).collect(),
            vocabulary,
            counts,
            params,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_terms();
        &self.counts[i * p..(i + 1) * p]
    }
}

/// Vocabulary from `docs` alone, then their count matrix.
pub fn build_dtm(docs: &[&LabeledDoc], stopwords: &StopwordList, params: DtmParams) -> Result<DocumentTermMatrix> {
    let vocab = select_vocabulary(docs, stopwords, &params)?;
    Ok(DocumentTermMatrix::with_vocabulary(docs, vocab, params))
}

/// Per-feature training mean and population standard deviation (0 → 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &[f64], n: usize, p: usize) -> Self {
        let mut means = vec![0.0; p];
        for row in x.chunks_exact(p) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut sds = vec![0.0; p];
        for row in x.chunks_exact(p) {
            for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in sds.iter_mut() {
            *s = (*s / n as f64).sqrt();
            if *s <= 0.0 {
                *s = 1.0;
            }
        }
        Standardization { means, sds }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.means.len();
        let mut out = x.to_vec();
        for row in out.chunks_exact_mut(p) {
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.sds) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub record_history: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 10_000,
            tol: 1e-8,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnMnlrModel {
    pub n_classes: usize,
    pub n_features: usize,
    /// Row-major classes × features, in standardized units.
    pub coefficients: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub standardization: Standardization,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Penalized objective after each iteration, when requested.
    pub history: Vec<f64>,
}

impl EnMnlrModel {
    pub fn coefficient(&self, class: usize, feature: usize) -> f64 {
        self.coefficients[class * self.n_features + feature]
    }

    /// Linear class scores for a raw count row.
    pub fn scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(ClassifyError::Dimension {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let z: Vec<f64> = row
            .iter()
            .zip(&self.standardization.means)
            .zip(&self.standardization.sds)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        Ok((0..self.n_classes)
            .map(|k| self.intercepts[k] + dot(&self.coefficients[k * self.n_features..(k + 1) * self.n_features], &z))
            .collect())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.scores(row)?;
        softmax_in_place(&mut s);
        Ok(s)
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Returns log Σ exp(s) and overwrites `s` with softmax(s).
fn softmax_in_place(s: &mut [f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in s.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in s.iter_mut() {
        *v /= sum;
    }
    m + sum.ln()
}

/// Standardized training data with the penalty setting.
struct Problem<'a> {
    x: &'a [f64],
    y: &'a [usize],
    n: usize,
    p: usize,
    k: usize,
    lambda: f64,
    alpha: f64,
}

impl Problem<'_> {
    /// Mean cross-entropy plus the ridge part; fills gradients when given.
    fn smooth(&self, w: &[f64], b: &[f64], grad: Option<(&mut [f64], &mut [f64])>) -> f64 {
        let (n, p, k) = (self.n, self.p, self.k);
        let mut loss = 0.0;
        let mut resid = vec![0.0; n * k];
        let mut s = vec![0.0; k];
        for i in 0..n {
            let row = &self.x[i * p..(i + 1) * p];
            for c in 0..k {
                s[c] = b[c] + dot(&w[c * p..(c + 1) * p], row);
            }
            let label_score = s[self.y[i]];
            let lse = softmax_in_place(&mut s);
            loss += lse - label_score;
            for c in 0..k {
                resid[i * k + c] = s[c] - f64::from(u8::from(c == self.y[i]));
            }
        }
        let inv_n = 1.0 / n as f64;
        let ridge = self.lambda * (1.0 - self.alpha);
        let value = loss * inv_n + 0.5 * ridge * w.iter().map(|v| v * v).sum::<f64>();
        if let Some((gw, gb)) = grad {
            gb.iter_mut().for_each(|g| *g = 0.0);
            for (g, &wv) in gw.iter_mut().zip(w) {
                *g = ridge * wv;
            }
            for i in 0..n {
                let row = &self.x[i * p..(i + 1) * p];
                for c in 0..k {
                    let r = resid[i * k + c] * inv_n;
                    gb[c] += r;
                    for (g, xv) in gw[c * p..(c + 1) * p].iter_mut().zip(row) {
                        *g += r * xv;
                    }
                }
            }
        }
        value
    }

    fn l1(&self, w: &[f64]) -> f64 {
        self.lambda * self.alpha * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Smooth objective and its gradient (coefficients, intercepts) on
/// standardized inputs; exposed for derivative checks.
pub fn smooth_objective_gradient(
    x: &[f64],
    y: &[usize],
    n_classes: usize,
    w: &[f64],
    b: &[f64],
    lambda: f64,
    alpha: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let p = x.len() / n;
    let prob = Problem {
        x,
        y,
        n,
        p,
        k: n_classes,
        lambda,
        alpha,
    };
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    let v = prob.smooth(w, b, Some((&mut gw, &mut gb)));
    (v, gw, gb)
}

/// Full penalized objective on standardized inputs.
pub fn penalized_objective(x: &[f64], y: &[usize], n_classes: usize, w: &[f64], b: &[f64], lambda: f64, alpha: f64) -> f64 {
    let n = y.len();
    let prob = Problem {
        x,
        y,
        n,
        p: x.len() / n,
        k: n_classes,
        lambda,
        alpha,
    };
    prob.smooth(w, b, None) + prob.l1(w)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct RawFit {
    w: Vec<f64>,
    b: Vec<f64>,
    converged: bool,
    iterations: usize,
    objective: f64,
    history: Vec<f64>,
}

/// Monotone accelerated proximal gradient with backtracking. Momentum is
/// reset whenever the extrapolated step fails to lower the objective.
fn optimize(prob: &Problem, w0: Vec<f64>, b0: Vec<f64>, opts: &FitOptions) -> Result<RawFit> {
    let (p, k) = (prob.p, prob.k);
    let l1_weight = prob.lambda * prob.alpha;
    let mut xw = w0;
    let mut xb = b0;
    let mut f_x = prob.smooth(&xw, &xb, None) + prob.l1(&xw);
    if !f_x.is_finite() {
        return Err(ClassifyError::NonFinite);
    }
    let mut yw = xw.clone();
    let mut yb = xb.clone();
    let mut t = 1.0f64;
    let mut restarted = true;
    let mut lip = 1e-2f64;
    let mut gw = vec![0.0; k * p];
    let mut gb = vec![0.0; k];
    let mut zw = vec![0.0; k * p];
    let mut zb = vec![0.0; k];
    let mut history = Vec::new();
    if opts.record_history {
        history.push(f_x);
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let fy = prob.smooth(&yw, &yb, Some((&mut gw, &mut gb)));
        let fz = loop {
            let step = 1.0 / lip;
            for i in 0..k * p {
                zw[i] = soft_threshold(yw[i] - step * gw[i], step * l1_weight);
            }
            for c in 0..k {
                zb[c] = yb[c] - step * gb[c];
            }
            let fz = prob.smooth(&zw, &zb, None);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..k * p {
                let d = zw[i] - yw[i];
                lin += gw[i] * d;
                sq += d * d;
            }
            for c in 0..k {
                let d = zb[c] - yb[c];
                lin += gb[c] * d;
                sq += d * d;
            }
            if !fz.is_finite() && lip < 1e300 {
                lip *= 2.0;
                continue;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() {
                break fz;
            }
            lip *= 2.0;
            if lip > 1e300 {
                return Err(ClassifyError::NonFinite);
            }
        };
        let f_z = fz + prob.l1(&zw);
        if !f_z.is_finite() {
            return Err(ClassifyError::NonFinite);
        }
        if f_z <= f_x {
            let rel = (f_x - f_z) / f_x.abs().max(f64::MIN_POSITIVE);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for i in 0..k * p {
                yw[i] = zw[i] + mom * (zw[i] - xw[i]);
            }
            for c in 0..k {
                yb[c] = zb[c] + mom * (zb[c] - xb[c]);
            }
            std::mem::swap(&mut xw, &mut zw);
            std::mem::swap(&mut xb, &mut zb);
            f_x = f_z;
            t = t_next;
            restarted = false;
            if opts.record_history {
                history.push(f_x);
            }
            if rel < opts.tol {
                converged = true;
                break;
            }
        } else {
            if opts.record_history {
                history.push(f_x);
            }
            if restarted {
                // a plain proximal step from the current iterate did not descend
                converged = true;
                break;
            }
            yw.copy_from_slice(&xw);
            yb.copy_from_slice(&xb);
            t = 1.0;
            restarted = true;
        }
    }
    Ok(RawFit {
        w: xw,
        b: xb,
        converged,
        iterations,
        objective: f_x,
        history,
    })
}

fn check_inputs(n: usize, p: usize, x_len: usize, y: &[usize], n_classes: usize, lambda: f64, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(ClassifyError::Empty);
    }
    if y.len() != n {
        return Err(ClassifyError::LengthMismatch(n, y.len()));
    }
    if x_len != n * p {
        return Err(ClassifyError::Dimension {
            expected: n * p,
            got: x_len,
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifyError::Label { label, n_classes });
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&l| present[l] = true);
    let distinct = present.iter().filter(|&&b| b).count();
    if distinct < 2 {
        return Err(ClassifyError::Classes(distinct));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ClassifyError::Param(format!("lambda = {lambda}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ClassifyError::Param(format!("alpha = {alpha}")));
    }
    Ok(())
}

/// Shifts coefficients and intercepts so each feature (and the intercept)
/// sums to zero over classes; class probabilities are unchanged.
fn center_classes(w: &mut [f64], b: &mut [f64], k: usize, p: usize) {
    for j in 0..p {
        let mean = (0..k).map(|c| w[c * p + j]).sum::<f64>() / k as f64;
        (0..k).for_each(|c| w[c * p + j] -= mean);
    }
    let mean = b.iter().sum::<f64>() / k as f64;
    b.iter_mut().for_each(|v| *v -= mean);
}

/// Fits a penalty path on raw count rows, warm-starting each λ from the next
/// larger one. Models are returned in the order of `lambdas`.
pub fn fit_path(
    x_raw: &[f64],
    p: usize,
    y: &[usize],
    n_classes: usize,
    lambdas: &[f64],
    alpha: f64,
    opts: &FitOptions,
) -> Result<Vec<EnMnlrModel>> {
    let n = y.len();
    for &l in lambdas {
        check_inputs(n, p, x_raw.len(), y, n_classes, l, alpha)?;
    }
    let standardization = Standardization::fit(x_raw, n, p);
    let x = standardization.apply(x_raw);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut w = vec![0.0; n_classes * p];
    let mut b = vec![0.0; n_classes];
    let mut out: Vec<Option<EnMnlrModel>> = vec![None; lambdas.len()];
    for idx in order {
        let prob = Problem {
            x: &x,
            y,
            n,
            p,
            k: n_classes,
            lambda: lambdas[idx],
            alpha,
        };
        let fit = optimize(&prob, w, b, opts)?;
        let mut cw = fit.w.clone();
        let mut cb = fit.b.clone();
        center_classes(&mut cw, &mut cb, n_classes, p);
        out[idx] = Some(EnMnlrModel {
            n_classes,
            n_features: p,
            coefficients: cw,
            intercepts: cb,
            lambda: lambdas[idx],
            alpha,
            standardization: standardization.clone(),
            converged: fit.converged,
            iterations: fit.iterations,
            objective: fit.objective,
            history: fit.history,
        });
        w = fit.w;
        b = fit.b;
    }
    Ok(out.into_iter().map(|m| m.expect("every lambda fitted")).collect())
}

pub fn fit_enmnlr(x_raw: &[f64], p: usize, y: &[usize], n_classes: usize, lambda: f64, alpha: f64, opts: &FitOptions) -> Result<EnMnlrModel> {
    Ok(fit_path(x_raw, p, y, n_classes, &[lambda], alpha, opts)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lambdas: (0..7).map(|e| 10f64.powi(e - 6)).collect(),
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing the deal across classes.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut assign = vec![0; y.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(rng);
        for i in idx {
            assign[i] = next % folds;
            next += 1;
        }
    }
    assign
}

fn select_rows(x: &[f64], p: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * p);
    for &r in rows {
        out.extend_from_slice(&x[r * p..(r + 1) * p]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    pub alpha: f64,
    pub cv_accuracy: f64,
    /// Mean CV accuracy per (λ, α) in grid order.
    pub table: Vec<(f64, f64, f64)>,
}

/// Inner stratified k-fold CV over the grid; maximizes mean accuracy with
/// ties going to larger λ, then larger α.
pub fn tune(
    x_raw: &[f64],
    p: usize,
    y: &[usize],
    n_classes: usize,
    grid: &Grid,
    folds: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<TuneResult> {
    if grid.lambdas.is_empty() || grid.alphas.is_empty() {
        return Err(ClassifyError::EmptyGrid);
    }
    if folds < 2 {
        return Err(ClassifyError::Param(format!("folds = {folds}")));
    }
    check_inputs(y.len(), p, x_raw.len(), y, n_classes, grid.lambdas[0], grid.alphas[0])?;
    if grid.lambdas.len() == 1 && grid.alphas.len() == 1 {
        return Ok(TuneResult {
            lambda: grid.lambdas[0],
            alpha: grid.alphas[0],
            cv_accuracy: f64::NAN,
            table: vec![],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assign = stratified_folds(y, n_classes, folds, &mut rng);
    let present: Vec<bool> = (0..n_classes).map(|c| y.contains(&c)).collect();
    let mut correct = vec![vec![0usize; grid.alphas.len()]; grid.lambdas.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != fold).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == fold).collect();
        for (c, &is_present) in present.iter().enumerate() {
            if is_present && !train.iter().any(|&i| y[i] == c) {
                return Err(ClassifyError::FoldMissingClass { fold, class: c });
            }
        }
        let xt = select_rows(x_raw, p, &train);
        let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            let models = fit_path(&xt, p, &yt, n_classes, &grid.lambdas, alpha, opts)?;
            for (li, m) in models.iter().enumerate() {
                for &i in &test {
                    if m.predict(&x_raw[i * p..(i + 1) * p])? == y[i] {
                        correct[li][ai] += 1;
                    }
                }
            }
        }
    }
    let n = y.len() as f64;
    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for (li, &lambda) in grid.lambdas.iter().enumerate() {
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            let acc = correct[li][ai] as f64 / n;
            table.push((lambda, alpha, acc));
            let better = match best {
                None => true,
                Some((bl, ba, bacc)) => acc > bacc || (acc == bacc && (lambda > bl || (lambda == bl && alpha > ba))),
            };
            if better {
                best = Some((lambda, alpha, acc));
            }
        }
    }
    let (lambda, alpha, cv_accuracy) = best.expect("grid non-empty");
    Ok(TuneResult {
        lambda,
        alpha,
        cv_accuracy,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
    pub mcc: f64,
}

/// `m[truth][predicted]` counts.
pub fn confusion(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(ClassifyError::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for &l in &[t, p] {
            if l >= n_classes {
                return Err(ClassifyError::Label { label: l, n_classes });
            }
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn metrics_from_confusion(m: &[Vec<u64>]) -> Metrics {
    let k = m.len();
    let s: f64 = m.iter().flatten().sum::<u64>() as f64;
    let diag: Vec<f64> = (0..k).map(|i| m[i][i] as f64).collect();
    let true_tot: Vec<f64> = (0..k).map(|i| m[i].iter().sum::<u64>() as f64).collect();
    let pred_tot: Vec<f64> = (0..k).map(|j| m.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let c: f64 = diag.iter().sum();
    let recalls: Vec<f64> = (0..k).filter(|&i| true_tot[i] > 0.0).map(|i| diag[i] / true_tot[i]).collect();
    let f1: f64 = (0..k)
        .map(|i| {
            let denom = true_tot[i] + pred_tot[i];
            if denom > 0.0 {
                2.0 * diag[i] / denom
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / k as f64;
    let cov_tp = c * s - dot(&pred_tot, &true_tot);
    let denom = ((s * s - dot(&pred_tot, &pred_tot)) * (s * s - dot(&true_tot, &true_tot))).sqrt();
    Metrics {
        accuracy: c / s,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        macro_f1: f1,
        mcc: if denom > 0.0 { cov_tp / denom } else { 0.0 },
    }
}

pub fn metrics(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(ClassifyError::Empty);
    }
    Ok(metrics_from_confusion(&confusion(truth, predicted, n_classes)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub runs: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub grid: Grid,
    pub inner_folds: usize,
    pub dtm: DtmParams,
    pub fit: FitOptions,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            runs: 100,
            test_fraction: 0.2,
            seed: 20240611,
            grid: Grid::default(),
            inner_folds: 5,
            dtm: DtmParams::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Generator for run `run` of a master seed; independent of run order.
pub fn child_rng(master: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run + 1);
    rng
}

/// Stratified split: `round(fraction · n_c)` test rows per class.
pub fn stratified_split(labels: &[usize], n_classes: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        let n_test = (fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub metrics: Metrics,
    pub lambda: f64,
    pub alpha: f64,
    pub confusion: Vec<Vec<u64>>,
    pub converged: bool,
    pub test_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub runs: Vec<RunResult>,
    pub mean: Metrics,
    pub sd: Metrics,
    /// Pooled confusion with each true-class row summing to 1.
    pub confusion_normalized: Vec<Vec<f64>>,
    pub non_converged_runs: usize,
}

fn one_run(docs: &[LabeledDoc], n_classes: usize, stopwords: &StopwordList, params: &McParams, run: usize) -> Result<RunResult> {
    let mut rng = child_rng(params.seed, run as u64);
    let labels: Vec<usize> = docs.iter().map(|d| d.label).collect();
    let (train, test) = stratified_split(&labels, n_classes, params.test_fraction, &mut rng);
    let train_docs: Vec<&LabeledDoc> = train.iter().map(|&i| &docs[i]).collect();
    let dtm = build_dtm(&train_docs, stopwords, params.dtm)?;
    let p = dtm.n_terms();
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let inner_seed = rand::RngCore::next_u64(&mut rng);
    let tuned = tune(&dtm.counts, p, &y, n_classes, &params.grid, params.inner_folds, inner_seed, &params.fit)?;
    let model = fit_enmnlr(&dtm.counts, p, &y, n_classes, tuned.lambda, tuned.alpha, &params.fit)?;
    let test_docs: Vec<&LabeledDoc> = test.iter().map(|&i| &docs[i]).collect();
    let test_dtm = DocumentTermMatrix::with_vocabulary(&test_docs, dtm.vocabulary.clone(), params.dtm);
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let predicted = (0..test.len()).map(|r| model.predict(test_dtm.row(r))).collect::<Result<Vec<_>>>()?;
    let confusion = confusion(&truth, &predicted, n_classes)?;
    Ok(RunResult {
        run,
        metrics: metrics_from_confusion(&confusion),
        lambda: tuned.lambda,
        alpha: tuned.alpha,
        confusion,
        converged: model.converged,
        test_rows: test.iter().map(|&i| docs[i].global_index).collect(),
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Repeated stratified splits with vocabulary, standardization and tuning
/// computed on each training split only. Runs execute in parallel.
pub fn monte_carlo_validate(docs: &[LabeledDoc], n_classes: usize, stopwords: &StopwordList, params: &McParams) -> Result<ValidationReport> {
    if params.runs == 0 {
        return Err(ClassifyError::Param("runs = 0".into()));
    }
    let runs = (0..params.runs)
        .into_par_iter()
        .map(|r| one_run(docs, n_classes, stopwords, params, r))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&Metrics) -> f64| mean_sd(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let (acc, acc_sd) = pick(|m| m.accuracy);
    let (bal, bal_sd) = pick(|m| m.balanced_accuracy);
    let (f1, f1_sd) = pick(|m| m.macro_f1);
    let (mcc, mcc_sd) = pick(|m| m.mcc);
    let mut pooled = vec![vec![0u64; n_classes]; n_classes];
    for r in &runs {
        for (pr, rr) in pooled.iter_mut().zip(&r.confusion) {
            for (a, b) in pr.iter_mut().zip(rr) {
                *a += b;
            }
        }
    }
    let confusion_normalized = pooled
        .iter()
        .map(|row| {
            let tot: u64 = row.iter().sum();
            row.iter().map(|&v| if tot > 0 { v as f64 / tot as f64 } else { 0.0 }).collect()
        })
        .collect();
    Ok(ValidationReport {
        non_converged_runs: runs.iter().filter(|r| !r.converged).count(),
        runs,
        mean: Metrics {
            accuracy: acc,
            balanced_accuracy: bal,
            macro_f1: f1,
            mcc,
        },
        sd: Metrics {
            accuracy: acc_sd,
            balanced_accuracy: bal_sd,
            macro_f1: f1_sd,
            mcc: mcc_sd,
        },
        confusion_normalized,
    })
}

/// Model fitted on every document with hyperparameters tuned on all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullFit {
    pub dtm: DocumentTermMatrix,
    pub model: EnMnlrModel,
    pub tuning: TuneResult,
}

pub fn fit_full(docs: &[LabeledDoc], n_classes: usize, stopwords: &StopwordList, params: &McParams) -> Result<FullFit> {
    let refs: Vec<&LabeledDoc> = docs.iter().collect();
    let dtm = build_dtm(&refs, stopwords, params.dtm)?;
    let y: Vec<usize> = docs.iter().map(|d| d.label).collect();
    let p = dtm.n_terms();
    let tuning = tune(&dtm.counts, p, &y, n_classes, &params.grid, params.inner_folds, params.seed, &params.fit)?;
    let model = fit_enmnlr(&dtm.counts, p, &y, n_classes, tuning.lambda, tuning.alpha, &params.fit)?;
    Ok(FullFit { dtm, model, tuning })
}

/// Per class, the `k` terms with the largest coefficients (ties by term).
pub type TermRanking = Vec<Vec<(String, f64)>>;

pub fn top_terms(fit: &FullFit, k: usize) -> TermRanking {
    (0..fit.model.n_classes)
        .map(|c| {
            let mut terms: Vec<(String, f64)> = fit
                .dtm
                .vocabulary
                .iter()
                .enumerate()
                .map(|(j, t)| (t.clone(), fit.model.coefficient(c, j)))
                .collect();
            terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            terms.truncate(k);
            terms
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progression {
    pub canto_numbers: Vec<usize>,
    /// P(toward class) − P(away class) per canto.
    pub diffs: Vec<f64>,
    pub ols: OlsFit,
    pub spearman: TestResult,
}

/// Signed probability difference `toward − away` for every document of
/// `class`, with trends against canto number.
pub fn progression(
    model: &EnMnlrModel,
    vocabulary: &[String],
    docs: &[LabeledDoc],
    class: usize,
    toward: usize,
    away: usize,
) -> Result<Progression> {
    let mut members: Vec<&LabeledDoc> = docs.iter().filter(|d| d.label == class).collect();
    members.sort_by_key(|d| d.number);
    let dtm = DocumentTermMatrix::with_vocabulary(&members, vocabulary.to_vec(), DtmParams::default());
    let mut diffs = Vec::with_capacity(members.len());
    for r in 0..members.len() {
        let pr = model.predict_proba(dtm.row(r))?;
        diffs.push(pr[toward] - pr[away]);
    }
    let numbers: Vec<usize> = members.iter().map(|d| d.number).collect();
    let x: Vec<f64> = numbers.iter().map(|&v| v as f64).collect();
    Ok(Progression {
        ols: ols_slope_test(&x, &diffs)?,
        spearman: spearman_trend(&x, &diffs)?,
        canto_numbers: numbers,
        diffs,
    })
}

pub fn write_runs_csv<W: Write>(out: W, report: &ValidationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "accuracy", "balanced_accuracy", "macro_f1", "mcc", "lambda", "alpha", "converged"])?;
    for r in &report.runs {
        w.write_record([
            r.run.to_string(),
            format!("{:.6}", r.metrics.accuracy),
            format!("{:.6}", r.metrics.balanced_accuracy),
            format!("{:.6}", r.metrics.macro_f1),
            format!("{:.6}", r.metrics.mcc),
            format!("{:e}", r.lambda),
            r.alpha.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_confusion_csv<W: Write>(out: W, report: &ValidationReport, class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["truth", "predicted", "share"])?;
    for (t, row) in report.confusion_normalized.iter().enumerate() {
        for (p, v) in row.iter().enumerate() {
            w.write_record([class_names[t].as_str(), class_names[p].as_str(), &format!("{v:.6}")])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_top_terms_csv<W: Write>(out: W, ranking: &TermRanking, class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "rank", "term", "coefficient"])?;
    for (c, terms) in ranking.iter().enumerate() {
        for (r, (term, coef)) in terms.iter().enumerate() {
            w.write_record([class_names[c].as_str(), &(r + 1).to_string(), term, &format!("{coef:.6}")])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_progression_csv<W: Write>(out: W, prog: &Progression) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canto_number", "diff"])?;
    for (n, d) in prog.canto_numbers.iter().zip(&prog.diffs) {
        w.write_record([n.to_string(), format!("{d:.8}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
