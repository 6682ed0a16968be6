//! Aggregation over pairs and the CSV report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::scalar::Real;

use super::rows::MetricsRow;
use super::stats::{mean_ci, ols_fit, spearman, stars, CellStats, OlsFit};
use super::MetricsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    NWords,
    NTurns,
    NUtterances,
    DurationS,
    NReWords,
    NReWordsRaw,
    LexicalOverlap,
    Jaccard,
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::Accuracy,
        Metric::NWords,
        Metric::NTurns,
        Metric::NUtterances,
        Metric::DurationS,
        Metric::NReWords,
        Metric::NReWordsRaw,
        Metric::LexicalOverlap,
        Metric::Jaccard,
        Metric::RougeL,
    ];

    /// Rows of the slope grid.
    pub const HEADLINE: [Metric; 5] = [
        Metric::Accuracy,
        Metric::NWords,
        Metric::NTurns,
        Metric::NReWords,
        Metric::LexicalOverlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::NWords => "n_words",
            Metric::NTurns => "n_turns",
            Metric::NUtterances => "n_utterances",
            Metric::DurationS => "duration_s",
            Metric::NReWords => "n_re_words",
            Metric::NReWordsRaw => "n_re_words_raw",
            Metric::LexicalOverlap => "lexical_overlap",
            Metric::Jaccard => "jaccard",
            Metric::RougeL => "rouge_l",
        }
    }

    /// Overlap metrics are undefined in a pair's first round.
    pub fn is_overlap(self) -> bool {
        matches!(self, Metric::LexicalOverlap | Metric::Jaccard | Metric::RougeL)
    }

    pub fn value<T: Real>(self, row: &MetricsRow<T>) -> Option<T> {
        let count = |n: usize| Some(T::from_count(n));
        match self {
            Metric::Accuracy => row.accuracy_pct,
            Metric::NWords => count(row.n_words),
            Metric::NTurns => count(row.n_turns),
            Metric::NUtterances => count(row.n_utterances),
            Metric::DurationS => Some(row.duration_s),
            Metric::NReWords => row.n_re_words.map(T::from_count),
            Metric::NReWordsRaw => row.n_re_words_raw.map(T::from_count),
            Metric::LexicalOverlap => row.rlo,
            Metric::Jaccard => row.jaccard,
            Metric::RougeL => row.rouge_l,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundCell<T> {
    pub label: String,
    pub metric: Metric,
    pub round: u32,
    pub stats: CellStats<T>,
    /// Value fixed by convention rather than measured (first-round overlap).
    pub conventional: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendFit<T> {
    pub label: String,
    pub metric: Metric,
    pub slope: T,
    pub intercept: T,
    pub std_err: Option<T>,
    pub t_stat: Option<T>,
    pub p_value: Option<T>,
    pub n_points: usize,
}

impl<T: Real> TrendFit<T> {
    pub fn from_fit(label: &str, metric: Metric, fit: OlsFit<T>) -> Self {
        TrendFit {
            label: label.to_string(),
            metric,
            slope: fit.slope,
            intercept: fit.intercept,
            std_err: fit.std_err,
            t_stat: fit.t_stat,
            p_value: fit.p_value,
            n_points: fit.n_points,
        }
    }

    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }

    /// Slope to one decimal followed by its stars, e.g. `-5.2*`.
    pub fn cell(&self) -> String {
        let s = format!("{:.1}", self.slope.as_f64());
        let s = if s == "-0.0" { "0.0".to_string() } else { s };
        format!("{s}{}", self.stars())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates<T> {
    pub labels: Vec<String>,
    pub cells: Vec<RoundCell<T>>,
    pub fits: Vec<TrendFit<T>>,
    pub rows: Vec<MetricsRow<T>>,
}

impl<T: Real> Aggregates<T> {
    pub fn fit(&self, label: &str, metric: Metric) -> Option<&TrendFit<T>> {
        self.fits.iter().find(|f| f.label == label && f.metric == metric)
    }

    pub fn cell(&self, label: &str, metric: Metric, round: u32) -> Option<&RoundCell<T>> {
        self.cells
            .iter()
            .find(|c| c.label == label && c.metric == metric && c.round == round)
    }

    pub fn rounds(&self) -> Vec<u32> {
        self.cells.iter().map(|c| c.round).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

/// Known condition codes first in grid order, then any other labels alphabetically.
pub fn order_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    const FIXED: [&str; 4] = ["HH", "AA", "AH", "HA"];
    let set: BTreeSet<&str> = labels.into_iter().collect();
    let mut out: Vec<String> = FIXED.iter().filter(|l| set.contains(*l)).map(|l| l.to_string()).collect();
    out.extend(set.iter().filter(|l| !FIXED.contains(l)).map(|l| l.to_string()));
    out
}

/// Per-label, per-round means with 95% CIs and per-label trend fits that pool every
/// pair-round point. Aborted rounds are left out.
pub fn aggregate<T: Real>(rows: &[MetricsRow<T>]) -> Result<Aggregates<T>, MetricsError> {
    let kept: Vec<&MetricsRow<T>> = rows.iter().filter(|r| !r.aborted).collect();
    if kept.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let labels = order_labels(kept.iter().map(|r| r.label.as_str()));
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    for label in &labels {
        let mine: Vec<&&MetricsRow<T>> = kept.iter().filter(|r| &r.label == label).collect();
        let rounds: BTreeSet<u32> = mine.iter().map(|r| r.round).collect();
        for metric in Metric::ALL {
            let mut points = Vec::new();
            for &round in &rounds {
                let values: Vec<T> = mine
                    .iter()
                    .filter(|r| r.round == round)
                    .filter_map(|r| metric.value(r))
                    .collect();
                let x = T::from_count(round as usize);
                points.extend(values.iter().map(|v| (x, *v)));
                let first_round = rounds.first() == Some(&round);
                if values.is_empty() && metric.is_overlap() && first_round {
                    let has_res = mine.iter().any(|r| r.round == round && r.n_re_words.is_some());
                    if has_res {
                        cells.push(RoundCell {
                            label: label.clone(),
                            metric,
                            round,
                            stats: CellStats { n: 0, mean: T::one(), sd: None, ci: None },
                            conventional: true,
                        });
                    }
                    continue;
                }
                if let Ok(stats) = mean_ci(&values) {
                    cells.push(RoundCell {
                        label: label.clone(),
                        metric,
                        round,
                        stats,
                        conventional: false,
                    });
                }
            }
            if let Ok(fit) = ols_fit(&points) {
                fits.push(TrendFit::from_fit(label, metric, fit));
            }
        }
    }
    Ok(Aggregates {
        labels,
        cells,
        fits,
        rows: rows.to_vec(),
    })
}

fn opt<V: Display>(v: Option<V>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_csv(path: &Path, header: &[String], records: &[Vec<String>]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| MetricsError::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| MetricsError::Io(e.to_string()))?;
    for r in records {
        w.write_record(r).map_err(|e| MetricsError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| MetricsError::Io(e.to_string()))?;
    Ok(())
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Slope grid: one row per headline metric, one column per label.
pub fn slope_grid<T: Real>(agg: &Aggregates<T>) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["metric".to_string()];
    header.extend(agg.labels.iter().cloned());
    let records = Metric::HEADLINE
        .iter()
        .map(|m| {
            let mut rec = vec![m.name().to_string()];
            rec.extend(agg.labels.iter().map(|l| agg.fit(l, *m).map_or_else(String::new, TrendFit::cell)));
            rec
        })
        .collect();
    (header, records)
}

pub fn write_rows_csv<T: Real>(path: &Path, rows: &[MetricsRow<T>]) -> Result<(), MetricsError> {
    let header = strings([
        "pair_id",
        "label",
        "condition",
        "round",
        "aborted",
        "accuracy_pct",
        "n_words",
        "n_turns",
        "n_utterances",
        "duration_s",
        "n_re_words",
        "n_re_words_raw",
        "rlo",
        "jaccard",
        "rouge_l",
        "sbert_cosine",
    ]);
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.pair_id.clone(),
                r.label.clone(),
                r.condition.clone(),
                r.round.to_string(),
                r.aborted.to_string(),
                opt(r.accuracy_pct),
                r.n_words.to_string(),
                r.n_turns.to_string(),
                r.n_utterances.to_string(),
                r.duration_s.to_string(),
                opt(r.n_re_words),
                opt(r.n_re_words_raw),
                opt(r.rlo),
                opt(r.jaccard),
                opt(r.rouge_l),
                opt(r.sbert_cosine),
            ]
        })
        .collect();
    write_csv(path, &header, &records)
}

fn followup_table<T: Real>(agg: &Aggregates<T>, metrics: &[Metric]) -> (Vec<String>, Vec<Vec<String>>) {
    let rounds = agg.rounds();
    let mut header = strings(["label", "metric"]);
    header.extend(rounds.iter().map(|r| format!("round_{r}")));
    header.extend(strings(["delta_first_last", "slope"]));
    let mut records = Vec::new();
    for label in &agg.labels {
        for &m in metrics {
            let means: Vec<Option<T>> = rounds
                .iter()
                .map(|r| agg.cell(label, m, *r).map(|c| c.stats.mean))
                .collect();
            if means.iter().all(Option::is_none) {
                continue;
            }
            let mut rec = vec![label.clone(), m.name().to_string()];
            rec.extend(means.iter().map(|v| v.map_or_else(String::new, |v| format!("{:.1}", v.as_f64()))));
            let measured: Vec<T> = rounds
                .iter()
                .filter_map(|r| agg.cell(label, m, *r).filter(|c| !c.conventional).map(|c| c.stats.mean))
                .collect();
            let delta = match (measured.first(), measured.last()) {
                (Some(a), Some(b)) if measured.len() > 1 => format!("{:+.1}", (*b - *a).as_f64()),
                _ => String::new(),
            };
            rec.push(delta);
            rec.push(agg.fit(label, m).map_or_else(String::new, TrendFit::cell));
            records.push(rec);
        }
    }
    (header, records)
}

/// Writes every report table into `out_dir` and returns the paths written.
pub fn emit_reports<T: Real>(agg: &Aggregates<T>, out_dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    if agg.labels.is_empty() || agg.cells.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    fs::create_dir_all(out_dir).map_err(|e| MetricsError::Io(e.to_string()))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: Vec<String>, records: Vec<Vec<String>>| -> Result<(), MetricsError> {
        let path = out_dir.join(name);
        write_csv(&path, &header, &records)?;
        written.push(path);
        Ok(())
    };

    let (header, records) = slope_grid(agg);
    emit("trend_slopes.csv", header, records)?;

    let fits = agg
        .fits
        .iter()
        .map(|f| {
            vec![
                f.label.clone(),
                f.metric.name().to_string(),
                f.n_points.to_string(),
                f.slope.to_string(),
                f.intercept.to_string(),
                opt(f.std_err),
                opt(f.t_stat),
                opt(f.p_value),
                f.stars().to_string(),
            ]
        })
        .collect();
    emit(
        "trend_fits.csv",
        strings(["label", "metric", "n_points", "slope", "intercept", "std_err", "t_stat", "p_value", "stars"]),
        fits,
    )?;

    let means = agg
        .cells
        .iter()
        .map(|c| {
            vec![
                c.label.clone(),
                c.metric.name().to_string(),
                c.round.to_string(),
                c.stats.n.to_string(),
                c.stats.mean.to_string(),
                opt(c.stats.ci.map(|ci| ci.0)),
                opt(c.stats.ci.map(|ci| ci.1)),
                c.conventional.to_string(),
            ]
        })
        .collect();
    emit(
        "round_means.csv",
        strings(["label", "metric", "round", "n", "mean", "ci_low", "ci_high", "conventional"]),
        means,
    )?;

    let (h, r) = followup_table(agg, &[Metric::Accuracy]);
    emit("followup_accuracy.csv", h, r)?;
    let (h, r) = followup_table(agg, &[Metric::NWords, Metric::NTurns, Metric::NUtterances, Metric::DurationS]);
    emit("followup_effort.csv", h, r)?;
    let (h, r) = followup_table(
        agg,
        &[Metric::NReWords, Metric::NReWordsRaw, Metric::LexicalOverlap, Metric::Jaccard, Metric::RougeL],
    );
    emit("followup_entrainment.csv", h, r)?;

    let (h, r) = effort_correlations(agg);
    emit("effort_correlations.csv", h, r)?;

    drop(emit);
    let rows_path = out_dir.join("metrics_rows.csv");
    write_rows_csv(&rows_path, &agg.rows)?;
    written.push(rows_path);
    Ok(written)
}

/// Spearman correlations of the effort measures with word and turn counts,
/// over all labels and per label.
fn effort_correlations<T: Real>(agg: &Aggregates<T>) -> (Vec<String>, Vec<Vec<String>>) {
    let effort = [Metric::NWords, Metric::NTurns, Metric::NUtterances, Metric::DurationS];
    let mut groups: BTreeMap<String, Vec<&MetricsRow<T>>> = BTreeMap::new();
    for r in agg.rows.iter().filter(|r| !r.aborted) {
        groups.entry("all".into()).or_default().push(r);
        groups.entry(r.label.clone()).or_default().push(r);
    }
    let mut records = Vec::new();
    let mut order = vec!["all".to_string()];
    order.extend(agg.labels.iter().cloned());
    for g in order {
        let Some(rows) = groups.get(&g) else { continue };
        for m in effort {
            let xs: Vec<T> = rows.iter().filter_map(|r| m.value(r)).collect();
            let corr = |other: Metric| {
                let ys: Vec<T> = rows.iter().filter_map(|r| other.value(r)).collect();
                spearman(&xs, &ys)
                    .ok()
                    .flatten()
                    .map_or_else(String::new, |v| format!("{:.2}", v.as_f64()))
            };
            records.push(vec![g.clone(), m.name().to_string(), corr(Metric::NWords), corr(Metric::NTurns)]);
        }
    }
    (strings(["group", "metric", "n_words", "n_turns"]), records)
}
