//! Fama-French three-factor regressions extended with reddit factors.
//!
//! Every fit puts the intercept `alpha` in the first design column, then
//! `Rm`, `HML`, `SMB`, then the reddit regressors. The extended models are
//! tested against the three-factor model refit on the same rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    buzzword_series_name, class_series_name, class_sq_series_name, lag_series, FactorError, FactorSeries, ALL,
    ALL_SQ,
};
use crate::linalg::{norm, HouseholderQr, Matrix};
use crate::stats::{f_survival, student_t_two_sided_p};

/// Columns are dropped as collinear when `|R_ii|` falls below this fraction
/// of the largest column norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub const INTERCEPT: &str = "alpha";
pub const MARKET: &str = "Rm";
pub const HML: &str = "HML";
pub const SMB: &str = "SMB";

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("{n_obs} observations cannot identify {n_regressors} coefficients")]
    InsufficientObservations { n_obs: usize, n_regressors: usize },
    #[error("design is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },
    #[error("response and regressors share no dates")]
    EmptyIntersection,
    #[error("fits are not nested: {0}")]
    NotNested(String),
    #[error("fits use different observations: {0}")]
    ObservationMismatch(String),
    #[error("p-value {0} is outside [0, 1]")]
    PValueDomain(f64),
    #[error("missing series `{0}`")]
    MissingSeries(String),
    #[error("returns file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Daily return columns keyed by header name, values in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    columns: BTreeMap<String, Vec<Option<f64>>>,
}

impl ReturnsPanel {
    /// Parses CSV with a `date` column followed by one column per series.
    /// Empty, `NA` and `NaN` cells are missing.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, RegressError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("date") {
            return Err(RegressError::Parse { line: 1, message: "first column must be `date`".into() });
        }
        let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for n in &names {
            if columns.insert(n.clone(), Vec::new()).is_some() {
                return Err(RegressError::Parse { line: 1, message: format!("duplicate column `{n}`") });
            }
        }
        let mut dates = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |message: String| RegressError::Parse { line, message };
            let date: NaiveDate = rec[0].trim().parse().map_err(|e| bad(format!("date `{}`: {e}", &rec[0])))?;
            if dates.last().is_some_and(|last| *last >= date) {
                return Err(bad(format!("dates must be strictly increasing at {date}")));
            }
            dates.push(date);
            for (j, name) in names.iter().enumerate() {
                let cell = rec.get(j + 1).unwrap_or("").trim();
                let value = match cell {
                    "" | "NA" | "NaN" | "nan" => None,
                    s => Some(s.parse::<f64>().map_err(|e| bad(format!("column `{name}` value `{s}`: {e}")))?),
                };
                columns.get_mut(name).expect("column registered").push(value.filter(|v| v.is_finite()));
            }
        }
        Ok(Self { dates, columns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// The column as a series over the dates where it is present.
    pub fn series(&self, column: &str, stock: &str) -> Result<FactorSeries, RegressError> {
        let col = self.columns.get(column).ok_or_else(|| RegressError::MissingSeries(column.to_string()))?;
        let values = self.dates.iter().zip(col).filter_map(|(d, v)| v.map(|v| (*d, v))).collect();
        Ok(FactorSeries::new(column, stock, values))
    }

    /// `column − risk_free` where both are present.
    pub fn excess_series(&self, column: &str, risk_free: Option<&str>, stock: &str) -> Result<FactorSeries, RegressError> {
        let mut s = self.series(column, stock)?;
        if let Some(rf) = risk_free {
            let rf = self.series(rf, stock)?;
            s.values = s.values.into_iter().filter_map(|(d, v)| rf.get(d).map(|r| (d, v - r))).collect();
        }
        Ok(s)
    }

    /// Dates on which every listed column has a value.
    pub fn complete_dates(&self, required: &[&str]) -> Result<Vec<NaiveDate>, RegressError> {
        let cols: Vec<&Vec<Option<f64>>> = required
            .iter()
            .map(|c| self.columns.get(*c).ok_or_else(|| RegressError::MissingSeries(c.to_string())))
            .collect::<Result<_, _>>()?;
        Ok((0..self.dates.len()).filter(|&i| cols.iter().all(|c| c[i].is_some())).map(|i| self.dates[i]).collect())
    }
}

/// Response and regressors on their common dates, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl DesignTable {
    /// A design with only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<DesignTable, RegressError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.names.iter().position(|m| m == n).ok_or_else(|| RegressError::MissingSeries(n.to_string())))
            .collect::<Result<_, _>>()?;
        let cols: Vec<&[f64]> = idx.iter().map(|&i| self.x.column(i)).collect();
        Ok(DesignTable {
            dates: self.dates.clone(),
            names: names.iter().map(|s| s.to_string()).collect(),
            x: Matrix::from_columns(&cols),
            y: self.y.clone(),
        })
    }
}

/// Inner join of the response and regressors on date. Each regressor
/// column is named after its series.
pub fn align_panel(response: &FactorSeries, regressors: &[FactorSeries]) -> Result<DesignTable, RegressError> {
    let dates: Vec<NaiveDate> = response
        .values
        .keys()
        .filter(|d| regressors.iter().all(|r| r.values.contains_key(d)))
        .copied()
        .collect();
    if dates.is_empty() {
        return Err(RegressError::EmptyIntersection);
    }
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; dates.len()]];
    for r in regressors {
        cols.push(dates.iter().map(|d| r.values[d]).collect());
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(regressors.iter().map(|r| r.name.clone()));
    Ok(DesignTable {
        y: dates.iter().map(|d| response.values[d]).collect(),
        x: Matrix::from_columns(&cols),
        names,
        dates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub y_mean: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.p_values[i])
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Least squares by Householder QR with classical standard errors.
pub fn ols_fit(design: &DesignTable) -> Result<RegressionFit, RegressError> {
    let (n, p) = (design.x.rows(), design.x.cols());
    if n <= p {
        return Err(RegressError::InsufficientObservations { n_obs: n, n_regressors: p });
    }
    let max_norm = (0..p).map(|j| norm(design.x.column(j))).fold(0.0, f64::max);
    let qr = HouseholderQr::new(design.x.clone());
    for (i, r) in qr.r_diagonal().iter().enumerate() {
        if !(r.abs() >= RANK_TOLERANCE * max_norm) || max_norm == 0.0 {
            return Err(RegressError::RankDeficient { column: design.names[i].clone() });
        }
    }
    let mut qty = design.y.clone();
    qr.apply_qt(&mut qty);
    let beta = qr.solve_r(&qty);

    let residuals: Vec<f64> = (0..n)
        .map(|i| design.y[i] - (0..p).map(|j| design.x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n - p;
    let sigma2 = rss / df_resid as f64;
    let cov = qr.inverse_gram();
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * cov[(j, j)]).max(0.0).sqrt()).collect();
    let t_stats: Vec<f64> = beta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| match (*se == 0.0, *b == 0.0) {
            (true, true) => 0.0,
            (true, false) => f64::INFINITY.copysign(*b),
            _ => b / se,
        })
        .collect();
    let p_values = t_stats.iter().map(|t| student_t_two_sided_p(*t, df_resid as f64)).collect();
    let y_mean = design.y.iter().sum::<f64>() / n as f64;
    let tss: f64 = design.y.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if tss > 0.0 {
        1.0 - rss / tss
    } else if rss == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(RegressionFit {
        names: design.names.clone(),
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        rss,
        tss,
        y_mean,
        n_obs: n,
        df_resid,
        r_squared,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedFTest {
    pub f_stat: f64,
    pub q: usize,
    pub df_denominator: usize,
    pub p_value: f64,
    pub rss_restricted: f64,
    pub rss_full: f64,
}

/// `F = ((RSS_r − RSS_f) / q) / (RSS_f / df_f)` with `q` added regressors.
pub fn nested_f_test(restricted: &RegressionFit, full: &RegressionFit) -> Result<NestedFTest, RegressError> {
    if restricted.n_obs != full.n_obs {
        return Err(RegressError::ObservationMismatch(format!("{} vs {} rows", restricted.n_obs, full.n_obs)));
    }
    let scale = full.tss.abs().max(full.y_mean.abs()).max(1.0);
    if (restricted.tss - full.tss).abs() > 1e-9 * scale || (restricted.y_mean - full.y_mean).abs() > 1e-12 * scale {
        return Err(RegressError::ObservationMismatch("responses differ".into()));
    }
    let full_names: BTreeSet<&str> = full.names.iter().map(String::as_str).collect();
    if let Some(extra) = restricted.names.iter().find(|n| !full_names.contains(n.as_str())) {
        return Err(RegressError::NotNested(format!("`{extra}` is not in the full model")));
    }
    if full.names.len() <= restricted.names.len() {
        return Err(RegressError::NotNested("full model adds no regressors".into()));
    }
    let q = full.names.len() - restricted.names.len();
    let df = full.df_resid;
    let gain = (restricted.rss - full.rss).max(0.0);
    let (f_stat, p_value) = if full.rss > 0.0 {
        let f = (gain / q as f64) / (full.rss / df as f64);
        (f, f_survival(f, q as f64, df as f64))
    } else if gain > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(NestedFTest { f_stat, q, df_denominator: df, p_value, rss_restricted: restricted.rss, rss_full: full.rss })
}

/// Significance stars: `***` at 0.01, `**` at 0.05, `*` at 0.1.
pub fn stars(p: f64) -> Result<&'static str, RegressError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RegressError::PValueDomain(p));
    }
    Ok(if p <= 0.01 {
        "***"
    } else if p <= 0.05 {
        "**"
    } else if p <= 0.1 {
        "*"
    } else {
        ""
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Market,
    Etf,
}

impl Benchmark {
    pub const ALL: [Benchmark; 2] = [Benchmark::Market, Benchmark::Etf];

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Market => "market",
            Benchmark::Etf => "etf",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BaseFf3,
    AllFreq,
    ClassFreq,
    AllFreqSq,
    ClassFreqSq,
    Buzzwords,
}

/// The ten published model families: `a`–`e` unlagged, `f`–`j` the same
/// variants with every reddit regressor lagged one trading day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Family(char);

impl Family {
    pub fn all() -> impl Iterator<Item = Family> {
        ('a'..='j').map(Family)
    }

    pub fn new(letter: char) -> Option<Family> {
        ('a'..='j').contains(&letter).then_some(Family(letter))
    }

    pub fn letter(self) -> char {
        self.0
    }

    pub fn variant(self) -> Variant {
        match (self.0 as u8 - b'a') % 5 {
            0 => Variant::AllFreq,
            1 => Variant::ClassFreq,
            2 => Variant::AllFreqSq,
            3 => Variant::ClassFreqSq,
            _ => Variant::Buzzwords,
        }
    }

    pub fn lag(self) -> usize {
        usize::from(self.0 >= 'f')
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub stock: String,
    pub benchmark: Benchmark,
    pub variant: Variant,
    pub lag: usize,
}

impl ModelSpec {
    pub fn for_family(stock: &str, benchmark: Benchmark, family: Family) -> Self {
        Self { stock: stock.to_string(), benchmark, variant: family.variant(), lag: family.lag() }
    }

    pub fn family(&self) -> Option<Family> {
        let offset = match self.variant {
            Variant::BaseFf3 => return None,
            Variant::AllFreq => 0,
            Variant::ClassFreq => 1,
            Variant::AllFreqSq => 2,
            Variant::ClassFreqSq => 3,
            Variant::Buzzwords => 4,
        };
        match self.lag {
            0 => Family::new((b'a' + offset) as char),
            1 => Family::new((b'f' + offset) as char),
            _ => None,
        }
    }

    /// Unlagged reddit series this variant adds, for a stock with `k`
    /// classes and `n_buzzwords` selected buzzwords.
    pub fn reddit_series(&self, k: usize, n_buzzwords: usize) -> Vec<String> {
        match self.variant {
            Variant::BaseFf3 => vec![],
            Variant::AllFreq => vec![ALL.into()],
            Variant::AllFreqSq => vec![ALL.into(), ALL_SQ.into()],
            Variant::ClassFreq => (0..k).map(class_series_name).collect(),
            Variant::ClassFreqSq => (0..k).map(class_series_name).chain((0..k).map(class_sq_series_name)).collect(),
            Variant::Buzzwords => (0..n_buzzwords).map(buzzword_series_name).collect(),
        }
    }
}

/// Everything one stock's regressions need, restricted to its trading
/// calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct StockInputs {
    pub stock: String,
    pub k: usize,
    pub n_buzzwords: usize,
    pub calendar: Vec<NaiveDate>,
    pub excess_return: FactorSeries,
    pub market: FactorSeries,
    pub etf: FactorSeries,
    pub hml: FactorSeries,
    pub smb: FactorSeries,
    /// Unlagged reddit series by name (`f_all`, `f_c0`, `w_3`, ...).
    pub reddit: BTreeMap<String, FactorSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub spec: ModelSpec,
    pub fit: RegressionFit,
    /// Absent for the base model.
    pub f_test: Option<NestedFTest>,
}

/// Fits the model for `spec` and tests it against the three-factor model
/// on the same rows.
pub fn run_model_suite(spec: &ModelSpec, inputs: &StockInputs) -> Result<SuiteResult, RegressError> {
    let rm = match spec.benchmark {
        Benchmark::Market => &inputs.market,
        Benchmark::Etf => &inputs.etf,
    };
    let mut regressors = vec![
        rm.restrict_to(&inputs.calendar).renamed(MARKET),
        inputs.hml.restrict_to(&inputs.calendar).renamed(HML),
        inputs.smb.restrict_to(&inputs.calendar).renamed(SMB),
    ];
    for name in spec.reddit_series(inputs.k, inputs.n_buzzwords) {
        let s = inputs.reddit.get(&name).ok_or_else(|| RegressError::MissingSeries(name.clone()))?;
        let s = s.restrict_to(&inputs.calendar);
        regressors.push(if spec.lag > 0 { lag_series(&s, spec.lag)? } else { s });
    }
    let design = align_panel(&inputs.excess_return, &regressors)?;
    let fit = ols_fit(&design)?;
    let f_test = if design.names.len() > 4 {
        let base = ols_fit(&design.select(&[INTERCEPT, MARKET, HML, SMB])?)?;
        Some(nested_f_test(&base, &fit)?)
    } else {
        None
    };
    Ok(SuiteResult { spec: spec.clone(), fit, f_test })
}

/// Display label for a fitted regressor name, dropping any lag suffix.
pub fn row_label(name: &str) -> String {
    let base = name.split("_lag").next().unwrap_or(name);
    if base == ALL {
        return "f_{all}".into();
    }
    if base == ALL_SQ {
        return "f_{all}^2".into();
    }
    if let Some(rest) = base.strip_prefix("f_c") {
        return match rest.strip_suffix("_sq") {
            Some(i) => format!("f_{i}^2"),
            None => format!("f_{rest}"),
        };
    }
    base.to_string()
}

/// Row order: alpha, the benchmark block, reddit rows; buzzword models list
/// their words before the benchmark block.
fn row_rank(label: &str, buzzwords_first: bool) -> (u8, usize) {
    let bench = |i: u8| if buzzwords_first { 2 + i } else { 1 + i };
    let index = |s: &str| s.parse::<usize>().unwrap_or(usize::MAX);
    match label {
        INTERCEPT => (0, 0),
        MARKET => (bench(0), 0),
        HML => (bench(1), 0),
        SMB => (bench(2), 0),
        "f_{all}" => (10, 0),
        "f_{all}^2" => (11, 0),
        _ => {
            if let Some(i) = label.strip_prefix("w_") {
                (if buzzwords_first { 1 } else { 14 }, index(i))
            } else if let Some(i) = label.strip_prefix("f_").and_then(|s| s.strip_suffix("^2")) {
                (13, index(i))
            } else if let Some(i) = label.strip_prefix("f_") {
                (12, index(i))
            } else {
                (15, 0)
            }
        }
    }
}

/// One column of a rendered table. `result` is `None` when the stock's fit
/// failed; its cells are then blank.
#[derive(Debug, Clone, PartialEq)]
pub struct TableColumn<'a> {
    pub stock: String,
    pub k: usize,
    pub n_buzzwords: usize,
    pub result: Option<&'a SuiteResult>,
}

/// A coefficient table: one row per regressor plus `F`, one column per stock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub stocks: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

fn cell(value: f64, p: f64) -> Result<String, RegressError> {
    Ok(format!("{value:.2}{}", stars(p)?))
}

/// Lays out one model family across stocks. Cells show the estimate to two
/// decimals followed by its stars; regressors a stock lacks stay blank.
pub fn render_table(variant: Variant, lag: usize, columns: &[TableColumn<'_>]) -> Result<Table, RegressError> {
    let buzz = variant == Variant::Buzzwords;
    let spec = |c: &TableColumn<'_>| ModelSpec { stock: c.stock.clone(), benchmark: Benchmark::Market, variant, lag };
    let mut labels: BTreeSet<((u8, usize), String)> = BTreeSet::new();
    for c in columns {
        let names = [INTERCEPT, MARKET, HML, SMB].into_iter().map(String::from).chain(spec(c).reddit_series(c.k, c.n_buzzwords));
        for n in names {
            let label = row_label(&n);
            labels.insert((row_rank(&label, buzz), label));
        }
    }
    let mut rows = Vec::new();
    for (_, label) in labels {
        let cells = columns
            .iter()
            .map(|c| {
                let Some(r) = c.result else { return Ok(String::new()) };
                match r.fit.names.iter().position(|n| row_label(n) == label) {
                    Some(i) => cell(r.fit.coefficients[i], r.fit.p_values[i]),
                    None => Ok(String::new()),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((label, cells));
    }
    if variant != Variant::BaseFf3 {
        let cells = columns
            .iter()
            .map(|c| match c.result.and_then(|r| r.f_test.as_ref()) {
                Some(f) => cell(f.f_stat, f.p_value),
                None => Ok(String::new()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(("F".into(), cells));
    }
    Ok(Table { stocks: columns.iter().map(|c| c.stock.clone()).collect(), rows })
}

impl Table {
    /// Tab-separated text: a header row of stock symbols, then one row per
    /// regressor.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.stocks {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            out.push_str(label);
            for c in cells {
                out.push('\t');
                out.push_str(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("").chain(self.stocks.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory csv");
        for (label, cells) in &self.rows {
            let rec: Vec<&str> = std::iter::once(label.as_str()).chain(cells.iter().map(String::as_str)).collect();
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }
}
