//! Pipeline configuration: a single TOML file, versioned by
//! `schema_version`.
//!
//! ```toml
//! schema_version = 1
//! subreddit = "wallstreetbets"
//! start = "2018-06-01"
//! end = "2019-02-21"
//! output_dir = "out"
//!
//! [[tickers]]
//! symbol = "WMT"
//! aliases = ["walmart"]
//! etf = "XRT"
//!
//! [ingest]
//! source = "endpoint"
//! endpoint = "https://api.pushshift.io/reddit/comment/search"
//!
//! [regress]
//! returns_csv = "returns.csv"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{GridConfig, KMeansConfig};
use crate::ingest::TickerSpec;
use crate::text::{NgramRange, StopWords, Vectorizer};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ENDPOINT: &str = "https://api.pushshift.io/reddit/comment/search";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{0}")]
    Invalid(ValidationErrors),
}

/// Every violation found, one per line as `field: problem`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<(String, String)>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (field, problem)) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {field}: {problem}")?;
        }
        Ok(())
    }
}

impl ValidationErrors {
    pub fn fields(&self) -> Vec<&str> {
        self.0.iter().map(|(f, _)| f.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickerConfig {
    pub symbol: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Industry benchmark ETF column in the returns file.
    pub etf: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestSource {
    /// Query the archive API.
    Endpoint,
    /// Read raw records (JSONL with `id`, `created_utc`, `body`) from `path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub source: IngestSource,
    pub endpoint: String,
    pub path: Option<PathBuf>,
    pub parallelism: usize,
    pub requests_per_second: f64,
    pub max_attempts: u32,
    /// Keep the text of comments that mention no tracked ticker.
    pub keep_unmentioned_bodies: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            source: IngestSource::Endpoint,
            endpoint: DEFAULT_ENDPOINT.into(),
            path: None,
            parallelism: 4,
            requests_per_second: 1.0,
            max_attempts: 5,
            keep_unmentioned_bodies: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    /// One word per line; the bundled English list when absent.
    pub stopwords: Option<PathBuf>,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub min_df: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { stopwords: None, ngram_min: 1, ngram_max: 2, min_df: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub j_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        Self { j_values: g.j_values, k_values: g.k_values, seed: g.seed, restarts: g.kmeans.restarts, max_iter: g.kmeans.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorsConfig {
    pub top_ngrams: usize,
    pub buzzwords: usize,
}

impl Default for FactorsConfig {
    fn default() -> Self {
        Self { top_ngrams: 100, buzzwords: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressConfig {
    /// Daily returns in percent: `date` then one column per series. Stock
    /// and ETF columns are named by symbol.
    pub returns_csv: Option<PathBuf>,
    /// Market excess return column.
    pub market_column: String,
    pub hml_column: String,
    pub smb_column: String,
    /// When set, subtracted from stock and ETF columns.
    pub risk_free_column: Option<String>,
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self {
            returns_csv: None,
            market_column: "MKT".into(),
            hml_column: "HML".into(),
            smb_column: "SMB".into(),
            risk_free_column: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub subreddit: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "default_timezone")]
    pub timezone: String,
    pub output_dir: PathBuf,
    pub tickers: Vec<TickerConfig>,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub factors: FactorsConfig,
    #[serde(default)]
    pub regress: RegressConfig,
}

fn default_timezone() -> String {
    "America/New_York".into()
}

impl Default for PipelineConfig {
    /// The five stocks and benchmark ETFs studied, over the original
    /// collection window.
    fn default() -> Self {
        let t = |symbol: &str, alias: &str, etf: &str| TickerConfig {
            symbol: symbol.into(),
            aliases: vec![alias.into()],
            etf: Some(etf.into()),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            subreddit: "wallstreetbets".into(),
            start: NaiveDate::from_ymd_opt(2018, 6, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2019, 2, 21).expect("valid date"),
            timezone: default_timezone(),
            output_dir: PathBuf::from("out"),
            tickers: vec![
                t("WMT", "walmart", "XRT"),
                t("MSFT", "microsoft", "IYW"),
                t("NKE", "nike", "VDC"),
                t("PFE", "pfizer", "XPH"),
                t("TSLA", "tesla", "LIT"),
            ],
            ingest: IngestConfig::default(),
            text: TextConfig::default(),
            classify: ClassifyConfig::default(),
            factors: FactorsConfig::default(),
            regress: RegressConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads, parses and validates a config file, resolving relative paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse { path: path.display().to_string(), message })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    /// Parses TOML without validating.
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.ingest.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.text.stopwords.as_mut() {
            fix(p);
        }
        if let Some(p) = self.regress.returns_csv.as_mut() {
            fix(p);
        }
    }

    /// Checks every constraint and reports all violations together.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errs: Vec<(String, String)> = Vec::new();
        let mut err = |field: &str, problem: String| errs.push((field.to_string(), problem));
        if self.schema_version != SCHEMA_VERSION {
            err("schema_version", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.subreddit.trim().is_empty() {
            err("subreddit", "must not be empty".into());
        }
        if self.start >= self.end {
            err("start", format!("start {} must be before end {}", self.start, self.end));
        }
        if self.timezone.parse::<Tz>().is_err() {
            err("timezone", format!("unknown time zone `{}`", self.timezone));
        }
        if self.tickers.is_empty() {
            err("tickers", "at least one ticker is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, t) in self.tickers.iter().enumerate() {
            let field = format!("tickers[{i}]");
            if let Err(e) = TickerSpec::from_parts(t.symbol.clone(), t.aliases.clone()) {
                err(&format!("{field}.symbol"), e.to_string());
            }
            if !seen.insert(t.symbol.to_lowercase()) {
                err(&format!("{field}.symbol"), format!("duplicate ticker `{}`", t.symbol));
            }
            match &t.etf {
                Some(e) if !e.trim().is_empty() => {}
                _ => err(&format!("{field}.etf"), format!("ticker `{}` needs a benchmark ETF", t.symbol)),
            }
        }
        match self.ingest.source {
            IngestSource::Endpoint if self.ingest.endpoint.trim().is_empty() => {
                err("ingest.endpoint", "required when source = \"endpoint\"".into())
            }
            IngestSource::File if self.ingest.path.is_none() => {
                err("ingest.path", "required when source = \"file\"".into())
            }
            _ => {}
        }
        if self.ingest.parallelism == 0 {
            err("ingest.parallelism", "must be at least 1".into());
        }
        if self.ingest.max_attempts == 0 {
            err("ingest.max_attempts", "must be at least 1".into());
        }
        if !(self.ingest.requests_per_second >= 0.0) {
            err("ingest.requests_per_second", "must be non-negative".into());
        }
        if NgramRange::new(self.text.ngram_min, self.text.ngram_max).is_err() {
            err("text.ngram_min", format!("invalid range ({}, {})", self.text.ngram_min, self.text.ngram_max));
        }
        if self.text.min_df == 0 {
            err("text.min_df", "must be at least 1".into());
        }
        if self.classify.j_values.is_empty() || self.classify.j_values.contains(&0) {
            err("classify.j_values", "must be a non-empty list of positive ranks".into());
        }
        if self.classify.k_values.is_empty() || self.classify.k_values.iter().any(|&k| k < 2) {
            err("classify.k_values", "must be a non-empty list of cluster counts >= 2".into());
        }
        if self.classify.restarts == 0 {
            err("classify.restarts", "must be at least 1".into());
        }
        if self.classify.max_iter == 0 {
            err("classify.max_iter", "must be at least 1".into());
        }
        if self.factors.buzzwords == 0 || self.factors.buzzwords > self.factors.top_ngrams {
            err("factors.buzzwords", format!("must be in 1..={}", self.factors.top_ngrams));
        }
        for (field, v) in [
            ("regress.market_column", &self.regress.market_column),
            ("regress.hml_column", &self.regress.hml_column),
            ("regress.smb_column", &self.regress.smb_column),
        ] {
            if v.trim().is_empty() {
                err(field, "must not be empty".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errs))
        }
    }

    pub fn tz(&self) -> Tz {
        self.timezone.parse().unwrap_or(chrono_tz::America::New_York)
    }

    /// Ticker specs with lowercase symbols, in config order.
    pub fn ticker_specs(&self) -> Vec<TickerSpec> {
        self.tickers
            .iter()
            .filter_map(|t| TickerSpec::from_parts(t.symbol.clone(), t.aliases.clone()).ok())
            .collect()
    }

    pub fn vectorizer(&self) -> std::io::Result<Vectorizer> {
        let stopwords = match &self.text.stopwords {
            Some(p) => StopWords::from_file(p).map_err(std::io::Error::other)?,
            None => StopWords::english(),
        };
        let range = NgramRange::new(self.text.ngram_min, self.text.ngram_max).map_err(std::io::Error::other)?;
        Vectorizer::new(stopwords, range, self.text.min_df).map_err(std::io::Error::other)
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            j_values: self.classify.j_values.clone(),
            k_values: self.classify.k_values.clone(),
            seed: self.classify.seed,
            kmeans: KMeansConfig { restarts: self.classify.restarts, max_iter: self.classify.max_iter },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
subreddit = "wallstreetbets"
start = "2018-06-01"
end = "2018-07-01"
output_dir = "out"

[[tickers]]
symbol = "WMT"
aliases = ["walmart"]
etf = "XRT"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.classify.j_values, (2..=10).collect::<Vec<_>>());
        assert_eq!(cfg.ingest.endpoint, DEFAULT_ENDPOINT);
        assert_eq!(cfg.ticker_specs()[0].symbol(), "wmt");
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let etfs: Vec<_> = cfg.tickers.iter().map(|t| t.etf.clone().unwrap()).collect();
        assert_eq!(etfs, ["XRT", "IYW", "VDC", "XPH", "LIT"]);
    }

    #[test]
    fn all_violations_reported_together() {
        let text = MINIMAL.replace("end = \"2018-07-01\"", "end = \"2018-05-01\"").replace("etf = \"XRT\"", "");
        let cfg = PipelineConfig::parse(&text).unwrap();
        let errs = cfg.validate().unwrap_err();
        assert_eq!(errs.fields(), ["start", "tickers[0].etf"]);
    }

    #[test]
    fn mutation_suite() {
        let base = PipelineConfig::parse(MINIMAL).unwrap();
        let cases: Vec<(&str, Box<dyn Fn(&mut PipelineConfig)>)> = vec![
            ("schema_version", Box::new(|c| c.schema_version = 2)),
            ("subreddit", Box::new(|c| c.subreddit.clear())),
            ("start", Box::new(|c| c.end = c.start)),
            ("timezone", Box::new(|c| c.timezone = "Mars/Olympus".into())),
            ("tickers", Box::new(|c| c.tickers.clear())),
            ("tickers[0].etf", Box::new(|c| c.tickers[0].etf = Some(" ".into()))),
            ("tickers[1].symbol", Box::new(|c| c.tickers.push(c.tickers[0].clone()))),
            ("ingest.path", Box::new(|c| c.ingest.source = IngestSource::File)),
            ("classify.k_values", Box::new(|c| c.classify.k_values = vec![1])),
            ("classify.j_values", Box::new(|c| c.classify.j_values.clear())),
            ("factors.buzzwords", Box::new(|c| c.factors.buzzwords = 200)),
            ("text.min_df", Box::new(|c| c.text.min_df = 0)),
        ];
        for (field, mutate) in cases {
            let mut cfg = base.clone();
            mutate(&mut cfg);
            let errs = cfg.validate().unwrap_err();
            assert!(errs.fields().contains(&field), "{field}: {errs}");
        }
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        assert!(PipelineConfig::parse(&format!("{MINIMAL}\ncolour = 1\n")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = PipelineConfig::parse(&format!("{MINIMAL}\n[regress]\nreturns_csv = \"r.csv\"\n")).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.output_dir, PathBuf::from("/data/run/out"));
        assert_eq!(cfg.regress.returns_csv, Some(PathBuf::from("/data/run/r.csv")));
    }
}
