//! Daily factor series: mention frequency, per-class frequency, their
//! squared variants, and buzzword frequencies.
//!
//! Every frequency divides by the day's total comment volume across the
//! whole subreddit. A day with zero volume yields 0 for every series.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{local_date, Corpus};
use crate::stats::pearson;
use crate::text::Vectorizer;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("class {class} is out of range for k = {k}")]
    UnknownClass { class: usize, k: usize },
    #[error("comment {0} mentions the stock but has no class assignment")]
    MissingClass(String),
    #[error("lag must be at least one day")]
    InvalidLag,
    #[error("series `{name}` has {len} dates, too short for a lag of {lag}")]
    SeriesTooShort { name: String, len: usize, lag: usize },
    #[error("need at least {need} buzzword candidates, have {have}")]
    InsufficientCandidates { have: usize, need: usize },
    #[error("candidate series and returns share {have} dates, need at least {need}")]
    InsufficientOverlap { have: usize, need: usize },
    #[error("factor panel line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dated series for one stock. Frequency series hold one value per
/// calendar day of the configured span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    pub name: String,
    pub stock: String,
    pub values: BTreeMap<NaiveDate, f64>,
}

impl FactorSeries {
    pub fn new(name: impl Into<String>, stock: impl Into<String>, values: BTreeMap<NaiveDate, f64>) -> Self {
        Self { name: name.into(), stock: stock.into(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.values.get(&date).copied()
    }

    /// Keeps only dates present in `calendar`.
    pub fn restrict_to(&self, calendar: &[NaiveDate]) -> FactorSeries {
        let values = calendar.iter().filter_map(|d| self.values.get(d).map(|v| (*d, *v))).collect();
        FactorSeries { name: self.name.clone(), stock: self.stock.clone(), values }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

pub const ALL: &str = "f_all";
pub const ALL_SQ: &str = "f_all_sq";
const CANDIDATE_PREFIX: &str = "ngram:";

pub fn class_series_name(c: usize) -> String {
    format!("f_c{c}")
}

pub fn class_sq_series_name(c: usize) -> String {
    format!("f_c{c}_sq")
}

pub fn buzzword_series_name(i: usize) -> String {
    format!("w_{i}")
}

pub fn lagged_name(name: &str, k: usize) -> String {
    format!("{name}_lag{k}")
}

/// Panel name of the daily frequency series for a candidate n-gram.
pub fn candidate_series_name(term: &str) -> String {
    format!("{CANDIDATE_PREFIX}{term}")
}

/// Inverse of [`candidate_series_name`].
pub fn candidate_term(series_name: &str) -> Option<&str> {
    series_name.strip_prefix(CANDIDATE_PREFIX)
}

fn ratio(count: f64, volume: u64) -> f64 {
    if volume == 0 {
        0.0
    } else {
        count / volume as f64
    }
}

/// `mentions / volume`.
pub fn mention_frequency(mentions: u64, volume: u64) -> f64 {
    ratio(mentions as f64, volume)
}

/// Share of the day's comments that mention the stock and fall in `class`.
pub fn class_frequency(class_counts: &[u64], class: usize, volume: u64) -> Result<f64, FactorError> {
    let count = class_counts.get(class).ok_or(FactorError::UnknownClass { class, k: class_counts.len() })?;
    Ok(ratio(*count as f64, volume))
}

/// `count² / volume`. Only the numerator is squared.
pub fn squared_frequency(count: u64, volume: u64) -> f64 {
    let c = count as f64;
    ratio(c * c, volume)
}

/// Occurrences of a term in the day's stock-mentioning comments over volume.
pub fn buzzword_frequency(occurrences: u64, volume: u64) -> f64 {
    ratio(occurrences as f64, volume)
}

/// Per-day mention counts for one stock, split by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyCounts {
    pub stock: String,
    pub k: usize,
    /// One entry per calendar day of the span.
    pub class_counts: BTreeMap<NaiveDate, Vec<u64>>,
}

impl DailyCounts {
    pub fn mentions(&self, date: NaiveDate) -> u64 {
        self.class_counts.get(&date).map_or(0, |c| c.iter().sum())
    }
}

/// Tallies the stock's mentioning comments per local day and class.
pub fn count_mentions(
    corpus: &Corpus,
    stock: &str,
    classes: &HashMap<String, usize>,
    k: usize,
    (start, end): (NaiveDate, NaiveDate),
    tz: Tz,
) -> Result<DailyCounts, FactorError> {
    let mut class_counts: BTreeMap<NaiveDate, Vec<u64>> =
        start.iter_days().take_while(|d| *d <= end).map(|d| (d, vec![0; k])).collect();
    for c in corpus.mentioning(stock) {
        let class = *classes.get(&c.id).ok_or_else(|| FactorError::MissingClass(c.id.clone()))?;
        if class >= k {
            return Err(FactorError::UnknownClass { class, k });
        }
        if let Some(day) = class_counts.get_mut(&local_date(c.created_utc, tz)) {
            day[class] += 1;
        }
    }
    Ok(DailyCounts { stock: stock.to_string(), k, class_counts })
}

/// `f_all`, `f_all_sq`, then `f_c{i}` and `f_c{i}_sq` for every class.
pub fn stock_factors(counts: &DailyCounts, volume: &BTreeMap<NaiveDate, u64>) -> Vec<FactorSeries> {
    let vol = |d: &NaiveDate| volume.get(d).copied().unwrap_or(0);
    let build = |name: String, f: &dyn Fn(&NaiveDate, &[u64]) -> f64| {
        let values = counts.class_counts.iter().map(|(d, c)| (*d, f(d, c))).collect();
        FactorSeries::new(name, counts.stock.clone(), values)
    };
    let mut out = vec![
        build(ALL.into(), &|d, c| mention_frequency(c.iter().sum(), vol(d))),
        build(ALL_SQ.into(), &|d, c| squared_frequency(c.iter().sum(), vol(d))),
    ];
    for i in 0..counts.k {
        out.push(build(class_series_name(i), &|d, c| ratio(c[i] as f64, vol(d))));
    }
    for i in 0..counts.k {
        out.push(build(class_sq_series_name(i), &|d, c| squared_frequency(c[i], vol(d))));
    }
    out
}

/// The `limit` most frequent analyzer terms across `bodies`, by total
/// occurrence count; count ties go to the lexicographically smaller term.
pub fn top_ngrams<S: AsRef<str>>(bodies: &[S], vectorizer: &Vectorizer, limit: usize) -> Vec<(String, u64)> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for b in bodies {
        for t in vectorizer.analyze(b.as_ref()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(limit);
    ranked
}

/// Daily frequency series for each term, counted inside the stock's
/// mentioning comments. Every repetition within a comment counts.
pub fn term_series(
    corpus: &Corpus,
    stock: &str,
    terms: &[String],
    vectorizer: &Vectorizer,
    volume: &BTreeMap<NaiveDate, u64>,
    tz: Tz,
) -> Vec<FactorSeries> {
    let index: HashMap<&str, usize> = terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut counts: Vec<BTreeMap<NaiveDate, u64>> =
        vec![volume.keys().map(|d| (*d, 0)).collect(); terms.len()];
    for c in corpus.mentioning(stock) {
        let day = local_date(c.created_utc, tz);
        if !volume.contains_key(&day) {
            continue;
        }
        for t in vectorizer.analyze(&c.body) {
            if let Some(&i) = index.get(t.as_str()) {
                *counts[i].get_mut(&day).expect("day in span") += 1;
            }
        }
    }
    terms
        .iter()
        .zip(counts)
        .map(|(term, daily)| {
            let values = daily.into_iter().map(|(d, n)| (d, buzzword_frequency(n, volume[&d]))).collect();
            FactorSeries::new(candidate_series_name(term), stock, values)
        })
        .collect()
}

/// The selected buzzwords for one stock, strongest correlation first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuzzwordSet {
    pub stock: String,
    pub terms: Vec<String>,
    /// Pearson correlation with the stock's daily returns; 0 for a
    /// zero-variance series.
    pub correlations: Vec<f64>,
}

pub const MIN_OVERLAP: usize = 3;

/// Picks the `n` candidates whose daily frequency correlates most strongly
/// (in absolute value) with `returns` over their shared dates.
///
/// Zero-variance candidates get ρ = 0 and rank after every candidate with a
/// defined correlation. Ties go to the lexicographically smaller term, so
/// the result does not depend on candidate order.
pub fn select_buzzwords(
    stock: &str,
    candidates: &[(String, FactorSeries)],
    returns: &FactorSeries,
    n: usize,
) -> Result<BuzzwordSet, FactorError> {
    if candidates.len() < n {
        return Err(FactorError::InsufficientCandidates { have: candidates.len(), need: n });
    }
    let mut scored: Vec<(bool, f64, &str)> = Vec::with_capacity(candidates.len());
    for (term, series) in candidates {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            series.values.iter().filter_map(|(d, x)| returns.get(*d).map(|y| (*x, y))).unzip();
        if xs.len() < MIN_OVERLAP {
            return Err(FactorError::InsufficientOverlap { have: xs.len(), need: MIN_OVERLAP });
        }
        match pearson(&xs, &ys) {
            Some(r) => scored.push((false, r, term)),
            None => scored.push((true, 0.0, term)),
        }
    }
    scored.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| b.1.abs().total_cmp(&a.1.abs())).then_with(|| a.2.cmp(b.2))
    });
    scored.truncate(n);
    Ok(BuzzwordSet {
        stock: stock.to_string(),
        terms: scored.iter().map(|s| s.2.to_string()).collect(),
        correlations: scored.iter().map(|s| s.1).collect(),
    })
}

/// Shifts values `k` positions forward along the series' own dates: the
/// value at date `t` becomes the one from `k` dates earlier and the first
/// `k` dates are dropped. Restrict to the trading calendar first so that
/// Friday feeds Monday.
pub fn lag_series(s: &FactorSeries, k: usize) -> Result<FactorSeries, FactorError> {
    if k == 0 {
        return Err(FactorError::InvalidLag);
    }
    if k >= s.len() {
        return Err(FactorError::SeriesTooShort { name: s.name.clone(), len: s.len(), lag: k });
    }
    let dates: Vec<NaiveDate> = s.values.keys().copied().collect();
    let vals: Vec<f64> = s.values.values().copied().collect();
    let values = dates[k..].iter().zip(&vals).map(|(d, v)| (*d, *v)).collect();
    Ok(FactorSeries::new(lagged_name(&s.name, k), s.stock.clone(), values))
}

/// Writes the long-format panel `date,stock,series_name,value`.
pub fn write_panel<W: Write>(out: W, series: &[FactorSeries]) -> Result<(), FactorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "stock", "series_name", "value"])?;
    for s in series {
        for (d, v) in &s.values {
            w.write_record([d.to_string(), s.stock.clone(), s.name.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_panel`]; series keep their order of
/// first appearance.
pub fn read_panel<R: Read>(input: R) -> Result<Vec<FactorSeries>, FactorError> {
    let mut r = csv::Reader::from_reader(input);
    let mut order: Vec<(String, String)> = Vec::new();
    let mut by_key: HashMap<(String, String), BTreeMap<NaiveDate, f64>> = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| FactorError::Parse { line, message };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let date: NaiveDate = rec[0].parse().map_err(|e| bad(format!("date `{}`: {e}", &rec[0])))?;
        let value: f64 = rec[3].parse().map_err(|e| bad(format!("value `{}`: {e}", &rec[3])))?;
        let key = (rec[1].to_string(), rec[2].to_string());
        let entry = by_key.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            BTreeMap::new()
        });
        entry.insert(date, value);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let values = by_key.remove(&key).expect("key recorded");
            FactorSeries::new(key.1, key.0, values)
        })
        .collect())
}

/// `stock,rank,term,count` for the top n-gram lists.
pub fn write_top_ngrams<W: Write>(out: W, lists: &[(String, Vec<(String, u64)>)]) -> Result<(), FactorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stock", "rank", "term", "count"])?;
    for (stock, terms) in lists {
        for (rank, (term, count)) in terms.iter().enumerate() {
            w.write_record([stock.clone(), rank.to_string(), term.clone(), count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `stock,rank,term,correlation`.
pub fn write_buzzwords<W: Write>(out: W, sets: &[BuzzwordSet]) -> Result<(), FactorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stock", "rank", "term", "correlation"])?;
    for s in sets {
        for (rank, (term, rho)) in s.terms.iter().zip(&s.correlations).enumerate() {
            w.write_record([s.stock.clone(), rank.to_string(), term.clone(), rho.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
