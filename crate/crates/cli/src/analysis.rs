//! Canto-level trend tests and the sensitivity of the memory-depth index to
//! the transition probabilities it is computed from.

use anyhow::Result;
use commedia_core::markov::CantoDependency;
use commedia_core::stats::{dunn_holm, kruskal_wallis, ols_slope_test, partial_spearman, spearman_trend, StatsError, TestResult};
use commedia_core::tokenizer::TokenStats;
use serde::{Deserialize, Serialize};

/// One hypothesis test in long format. `group_a`/`group_b` are empty except
/// for pairwise comparisons; `controls` lists partialled-out variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub test: String,
    pub y: String,
    pub x: String,
    pub controls: String,
    pub group_a: String,
    pub group_b: String,
    pub statistic: f64,
    pub effect: Option<f64>,
    pub p_value: f64,
    pub p_adjusted: Option<f64>,
    pub n: usize,
}

impl StatRow {
    fn from_test(test: &str, y: &str, x: &str, r: &TestResult) -> Self {
        StatRow {
            test: test.into(),
            y: y.into(),
            x: x.into(),
            controls: String::new(),
            group_a: String::new(),
            group_b: String::new(),
            statistic: r.statistic,
            effect: r.effect,
            p_value: r.p_value,
            p_adjusted: None,
            n: r.n,
        }
    }
}

/// Per-canto series keyed by name, in reading order.
pub struct Series {
    pub cantica: Vec<usize>,
    pub columns: Vec<(&'static str, Vec<f64>)>,
}

impl Series {
    pub fn get(&self, name: &str) -> &[f64] {
        &self.columns.iter().find(|(n, _)| *n == name).unwrap_or_else(|| panic!("unknown series {name}")).1
    }

    fn groups(&self, name: &str, n_groups: usize) -> Vec<Vec<f64>> {
        let mut g = vec![Vec::new(); n_groups];
        for (&c, &v) in self.cantica.iter().zip(self.get(name)) {
            g[c].push(v);
        }
        g
    }
}

pub const TRANSITIONS: [&str; 6] = ["p1", "p0", "p_vv", "p_vc", "p_cv", "p_cc"];

pub fn markov_series(rows: &[CantoDependency], names: &[String]) -> Series {
    let col = |f: &dyn Fn(&CantoDependency) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    Series {
        cantica: rows
            .iter()
            .map(|r| names.iter().position(|n| *n == r.cantica).expect("cantica name from the same document"))
            .collect(),
        columns: vec![
            ("canto", col(&|r| r.global_index as f64)),
            ("p1", col(&|r| r.two.p1)),
            ("p0", col(&|r| r.two.p0)),
            ("p_vv", col(&|r| r.four.p_vv())),
            ("p_vc", col(&|r| r.four.p_vc())),
            ("p_cv", col(&|r| r.four.p_cv())),
            ("p_cc", col(&|r| r.four.p_cc())),
            ("q00", col(&|r| r.four.q00())),
            ("md_simple", col(&|r| r.index.md_simple)),
            ("md", col(&|r| r.index.md)),
        ],
    }
}

fn group_tests(out: &mut Vec<StatRow>, s: &Series, y: &str, names: &[String]) -> Result<()> {
    let groups = s.groups(y, names.len());
    match kruskal_wallis(&groups) {
        Ok(kw) => out.push(StatRow::from_test("kruskal_wallis", y, "cantica", &kw)),
        Err(StatsError::Constant) => out.push(StatRow::from_test("kruskal_wallis", y, "cantica", &TestResult::null(s.cantica.len()))),
        Err(e) => return Err(e.into()),
    }
    if let Ok(pairs) = dunn_holm(&groups) {
        for p in pairs {
            out.push(StatRow {
                test: "dunn_holm".into(),
                y: y.into(),
                x: "cantica".into(),
                controls: String::new(),
                group_a: names[p.group_a].clone(),
                group_b: names[p.group_b].clone(),
                statistic: p.z,
                effect: Some(p.mean_rank_diff),
                p_value: p.p_raw,
                p_adjusted: Some(p.p_adjusted),
                n: s.cantica.len(),
            });
        }
    }
    Ok(())
}

fn trend_pair(out: &mut Vec<StatRow>, y_name: &str, x_name: &str, x: &[f64], y: &[f64]) -> Result<()> {
    let ols = ols_slope_test(x, y)?;
    let mut row = StatRow::from_test("ols_slope", y_name, x_name, &ols.test);
    row.statistic = ols.slope;
    row.effect = Some(ols.test.statistic);
    out.push(row);
    out.push(StatRow::from_test("spearman", y_name, x_name, &spearman_trend(x, y)?));
    Ok(())
}

/// Trend tests on lexical and Markov series against reading order, plus
/// cantica-level group comparisons of both memory-depth indices.
/// OLS rows carry the slope as `statistic` and its t value as `effect`.
pub fn trends(stats: &[TokenStats], markov: &[CantoDependency], names: &[String]) -> Result<Vec<StatRow>> {
    let canto: Vec<f64> = stats.iter().map(|s| s.canto as f64).collect();
    let rate: Vec<f64> = stats.iter().map(|s| s.apostrophe_rate_per_100).collect();
    let len: Vec<f64> = stats.iter().map(|s| s.mean_token_length).collect();
    let chars: Vec<f64> = stats.iter().map(|s| s.alphabetic_chars as f64).collect();
    let mut out = Vec::new();
    trend_pair(&mut out, "apostrophe_rate", "canto", &canto, &rate)?;
    trend_pair(&mut out, "mean_token_length", "canto", &canto, &len)?;
    trend_pair(&mut out, "alphabetic_chars", "canto", &canto, &chars)?;
    out.push(StatRow::from_test("spearman", "mean_token_length", "apostrophe_rate", &spearman_trend(&rate, &len)?));
    let s = markov_series(markov, names);
    for y in ["md_simple", "md"] {
        out.push(StatRow::from_test("spearman", y, "canto", &spearman_trend(s.get("canto"), s.get(y))?));
        group_tests(&mut out, &s, y, names)?;
    }
    Ok(out)
}

/// Variables partialled out when correlating an index with `focal`: every
/// other transition probability, and for `q00` also its complement `p_cc`.
pub fn sensitivity_controls(focal: &str) -> Vec<&'static str> {
    TRANSITIONS
        .iter()
        .copied()
        .filter(|&v| v != focal && !(focal == "q00" && v == "p_cc"))
        .collect()
}

/// Partial Spearman of each index against each transition probability, then
/// cantica-level Kruskal-Wallis and Dunn-Holm for every series involved.
pub fn sensitivity(markov: &[CantoDependency], names: &[String]) -> Result<Vec<StatRow>> {
    let s = markov_series(markov, names);
    let mut out = Vec::new();
    for y in ["md_simple", "md"] {
        for focal in TRANSITIONS.iter().copied().chain(["q00"]) {
            let controls = sensitivity_controls(focal);
            let cols: Vec<&[f64]> = controls.iter().map(|c| s.get(c)).collect();
            let r = match partial_spearman(s.get(y), s.get(focal), &cols) {
                Ok(r) => r,
                Err(StatsError::Constant | StatsError::Singular) => TestResult::null(s.cantica.len()),
                Err(e) => return Err(e.into()),
            };
            let mut row = StatRow::from_test("partial_spearman", y, focal, &r);
            row.controls = controls.join(";");
            out.push(row);
        }
    }
    for y in TRANSITIONS.iter().copied().chain(["md_simple", "md"]) {
        group_tests(&mut out, &s, y, names)?;
    }
    Ok(out)
}

pub fn write_stat_rows<W: std::io::Write>(out: W, rows: &[StatRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["test", "y", "x", "controls", "group_a", "group_b", "statistic", "effect", "p_value", "p_adjusted", "n"])?;
    let f = |v: f64| format!("{v:.10e}");
    for r in rows {
        w.write_record([
            r.test.clone(),
            r.y.clone(),
            r.x.clone(),
            r.controls.clone(),
            r.group_a.clone(),
            r.group_b.clone(),
            f(r.statistic),
            r.effect.map(f).unwrap_or_default(),
            f(r.p_value),
            r.p_adjusted.map(f).unwrap_or_default(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First row matching test, y, x and (for pairwise rows) the unordered group pair.
pub fn find<'a>(rows: &'a [StatRow], test: &str, y: &str, x: &str) -> Option<&'a StatRow> {
    rows.iter().find(|r| r.test == test && r.y == y && r.x == x && r.group_a.is_empty())
}

pub fn find_pair<'a>(rows: &'a [StatRow], y: &str, a: &str, b: &str) -> Option<&'a StatRow> {
    rows.iter()
        .find(|r| r.test == "dunn_holm" && r.y == y && ((r.group_a == a && r.group_b == b) || (r.group_a == b && r.group_b == a)))
}
