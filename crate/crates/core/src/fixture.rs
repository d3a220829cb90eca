//! Synthetic corpus and returns with planted structure.
//!
//! Each stock's mentioning comments are drawn from a fixed number of topics
//! with disjoint pseudo-word vocabularies, and each stock's daily excess
//! return loads on its own `f_all` with a known coefficient. The generator
//! is deterministic in its seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use chrono_tz::Tz;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{IngestSource, PipelineConfig, TickerConfig};
use crate::ingest::{day_span_utc, RawComment};
use crate::text::StopWords;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedStock {
    pub symbol: String,
    pub alias: String,
    pub etf: String,
    pub topics: usize,
    /// Mean share of daily comments that mention the stock.
    pub mention_rate: f64,
    /// Coefficient of same-day `f_all` in the stock's excess return.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub comments_per_day: usize,
    pub words_per_topic: usize,
    pub seed: u64,
    pub stocks: Vec<PlantedStock>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let s = |symbol: &str, alias: &str, etf: &str, topics, mention_rate, loading| PlantedStock {
            symbol: symbol.into(),
            alias: alias.into(),
            etf: etf.into(),
            topics,
            mention_rate,
            loading,
        };
        Self {
            start: NaiveDate::from_ymd_opt(2018, 6, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2018, 11, 30).expect("valid date"),
            comments_per_day: 150,
            words_per_topic: 20,
            seed: 2018,
            stocks: vec![
                s("WMT", "walmart", "XRT", 4, 0.06, 60.0),
                s("MSFT", "microsoft", "IYW", 3, 0.05, 0.0),
                s("NKE", "nike", "VDC", 3, 0.04, 0.0),
                s("PFE", "pfizer", "XPH", 3, 0.04, 0.0),
                s("TSLA", "tesla", "LIT", 5, 0.08, 30.0),
            ],
        }
    }
}

/// What the generator planted, for checking recovery.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlantedTruth {
    /// Comment id → (lowercase stock symbol, topic index).
    pub topic_of: HashMap<String, (String, usize)>,
    /// Lowercase symbol → date → mentioning comments that day.
    pub mentions: BTreeMap<String, BTreeMap<NaiveDate, u64>>,
    /// Date → total comments that day.
    pub volume: BTreeMap<NaiveDate, u64>,
    pub vocabularies: BTreeMap<String, Vec<Vec<String>>>,
}

impl PlantedTruth {
    /// Daily `mentions / volume` for a stock.
    pub fn f_all(&self, symbol: &str) -> BTreeMap<NaiveDate, f64> {
        let m = &self.mentions[&symbol.to_lowercase()];
        self.volume
            .iter()
            .map(|(d, v)| (*d, if *v == 0 { 0.0 } else { m.get(d).copied().unwrap_or(0) as f64 / *v as f64 }))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    /// Raw records in generation order, including a few duplicates and
    /// records just outside the span.
    pub comments: Vec<RawComment>,
    pub truth: PlantedTruth,
    pub calendar: Vec<NaiveDate>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const STOPWORD_SPRINKLE: &[&str] = &["the", "is", "and", "to", "it", "of", "my", "this", "just", "all"];
const NOISE: &[&str] = &["🚀", "💎🙌", "café", "naïve", "!!!", "...", "🤡"];

/// Pronounceable pseudo-words, unique across the whole fixture.
struct WordSource {
    used: BTreeSet<String>,
    stopwords: StopWords,
}

impl WordSource {
    fn new(reserved: impl IntoIterator<Item = String>) -> Self {
        Self { used: reserved.into_iter().collect(), stopwords: StopWords::english() }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
            }
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            if !self.stopwords.contains(&w) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn vocabulary(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.fresh(rng)).collect()
    }
}

fn decorate(words: &mut Vec<String>, rng: &mut ChaCha8Rng) {
    for _ in 0..rng.gen_range(0..=3) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, STOPWORD_SPRINKLE.choose(rng).expect("non-empty").to_string());
    }
    for w in words.iter_mut() {
        if rng.gen_bool(0.08) {
            *w = w.to_uppercase();
        }
    }
    if rng.gen_bool(0.15) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, NOISE.choose(rng).expect("non-empty").to_string());
    }
}

/// US equity market holidays for the years the default fixture spans.
const HOLIDAYS: &[(i32, u32, u32)] = &[
    (2018, 1, 1),
    (2018, 1, 15),
    (2018, 2, 19),
    (2018, 3, 30),
    (2018, 5, 28),
    (2018, 7, 4),
    (2018, 9, 3),
    (2018, 11, 22),
    (2018, 12, 5),
    (2018, 12, 25),
    (2019, 1, 1),
    (2019, 1, 21),
    (2019, 2, 18),
    (2019, 4, 19),
    (2019, 5, 27),
    (2019, 7, 4),
    (2019, 9, 2),
    (2019, 11, 28),
    (2019, 12, 25),
];

/// Weekdays in `start..=end` that are not market holidays.
pub fn trading_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let holidays: BTreeSet<NaiveDate> =
        HOLIDAYS.iter().filter_map(|&(y, m, d)| NaiveDate::from_ymd_opt(y, m, d)).collect();
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !holidays.contains(d))
        .collect()
}

/// Generates the comment stream.
pub fn generate(spec: &FixtureSpec, tz: Tz) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reserved = spec.stocks.iter().flat_map(|s| [s.symbol.to_lowercase(), s.alias.to_lowercase()]);
    let mut words = WordSource::new(reserved);
    let chatter = words.vocabulary(60, &mut rng);
    let mut truth = PlantedTruth::default();
    for s in &spec.stocks {
        let vocabs: Vec<Vec<String>> = (0..s.topics).map(|_| words.vocabulary(spec.words_per_topic, &mut rng)).collect();
        truth.vocabularies.insert(s.symbol.to_lowercase(), vocabs);
        truth.mentions.insert(s.symbol.to_lowercase(), BTreeMap::new());
    }
    // Slow, stock-specific swings in attention.
    let phases: Vec<(f64, f64)> = spec
        .stocks
        .iter()
        .map(|_| (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(9.0..31.0)))
        .collect();

    let mut comments = Vec::new();
    let mut next_id = 0u64;
    let days: Vec<NaiveDate> = spec.start.iter_days().take_while(|d| *d <= spec.end).collect();
    for (t, day) in days.iter().enumerate() {
        let (lo, hi) = day_span_utc(*day, *day, tz);
        let n = ((spec.comments_per_day as f64) * rng.gen_range(0.8..1.2)).round() as u64;
        truth.volume.insert(*day, n);
        let rates: Vec<f64> = spec
            .stocks
            .iter()
            .zip(&phases)
            .map(|(s, (phase, period))| {
                let swing = 1.0 + 0.6 * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                (s.mention_rate * swing * rng.gen_range(0.7..1.3)).max(0.0)
            })
            .collect();
        for _ in 0..n {
            let id = format!("c{next_id:07}");
            next_id += 1;
            let created_utc = rng.gen_range(lo..hi);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut picked = None;
            for (i, r) in rates.iter().enumerate() {
                acc += r;
                if u < acc {
                    picked = Some(i);
                    break;
                }
            }
            let body = match picked {
                Some(i) => {
                    let s = &spec.stocks[i];
                    let sym = s.symbol.to_lowercase();
                    let topic = rng.gen_range(0..s.topics);
                    let vocab = &truth.vocabularies[&sym][topic];
                    let mut ws: Vec<String> =
                        (0..rng.gen_range(5..=9)).map(|_| vocab.choose(&mut rng).expect("non-empty").clone()).collect();
                    decorate(&mut ws, &mut rng);
                    let mention = match rng.gen_range(0..4) {
                        0 => s.symbol.clone(),
                        1 => format!("${sym}"),
                        2 => capitalize(&s.alias),
                        _ => sym.clone(),
                    };
                    let at = rng.gen_range(0..=ws.len());
                    ws.insert(at, mention);
                    *truth.mentions.get_mut(&sym).expect("stock registered").entry(*day).or_default() += 1;
                    truth.topic_of.insert(id.clone(), (sym, topic));
                    ws.join(" ")
                }
                None => {
                    let mut ws: Vec<String> =
                        (0..rng.gen_range(4..=10)).map(|_| chatter.choose(&mut rng).expect("non-empty").clone()).collect();
                    decorate(&mut ws, &mut rng);
                    ws.join(" ")
                }
            };
            comments.push(RawComment { id, created_utc, body });
        }
    }
    // Archive quirks: repeated records and records outside the window.
    let dupes: Vec<RawComment> = comments.iter().step_by(97).cloned().collect();
    comments.extend(dupes);
    let (span_lo, span_hi) = day_span_utc(spec.start, spec.end, tz);
    comments.push(RawComment { id: "early".into(), created_utc: span_lo - 1, body: "tsla before the window".into() });
    comments.push(RawComment { id: "late".into(), created_utc: span_hi, body: "wmt after the window".into() });

    Fixture { spec: spec.clone(), comments, truth, calendar: trading_days(spec.start, spec.end) }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Column names of the generated returns file.
pub const MARKET_COLUMN: &str = "MKT";
pub const HML_COLUMN: &str = "HML";
pub const SMB_COLUMN: &str = "SMB";

/// Three-factor returns plus each stock's planted `f_all` loading, in
/// percent, on the trading calendar. `loadings` replaces the per-stock
/// loadings from the fixture spec.
pub fn returns_csv(fixture: &Fixture, loadings: Option<&[f64]>, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).expect("valid normal");
    let loadings: Vec<f64> = match loadings {
        Some(l) => l.to_vec(),
        None => fixture.spec.stocks.iter().map(|s| s.loading).collect(),
    };
    let f_all: Vec<BTreeMap<NaiveDate, f64>> = fixture.spec.stocks.iter().map(|s| fixture.truth.f_all(&s.symbol)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string(), MARKET_COLUMN.into(), HML_COLUMN.into(), SMB_COLUMN.into()];
    for s in &fixture.spec.stocks {
        header.push(s.symbol.clone());
        header.push(s.etf.clone());
    }
    w.write_record(&header).expect("in-memory csv");
    for d in &fixture.calendar {
        let mkt = 0.05 + z.sample(&mut rng);
        let hml = 0.5 * z.sample(&mut rng);
        let smb = 0.5 * z.sample(&mut rng);
        let mut row = vec![d.to_string(), fmt(mkt), fmt(hml), fmt(smb)];
        for (i, _) in fixture.spec.stocks.iter().enumerate() {
            let beta = 0.8 + 0.1 * i as f64;
            let stock = 0.02 + beta * mkt + 0.3 * hml - 0.2 * smb + loadings[i] * f_all[i][d] + 1.5 * z.sample(&mut rng);
            let etf = 0.9 * mkt + 0.6 * z.sample(&mut rng);
            row.push(fmt(stock));
            row.push(fmt(etf));
        }
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

/// A pipeline config that reads the fixture files written next to it.
pub fn fixture_config(spec: &FixtureSpec) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        start: spec.start,
        end: spec.end,
        output_dir: PathBuf::from("out"),
        tickers: spec
            .stocks
            .iter()
            .map(|s| TickerConfig { symbol: s.symbol.clone(), aliases: vec![s.alias.clone()], etf: Some(s.etf.clone()) })
            .collect(),
        ..PipelineConfig::default()
    };
    cfg.ingest.source = IngestSource::File;
    cfg.ingest.path = Some(PathBuf::from("comments.jsonl"));
    cfg.regress.returns_csv = Some(PathBuf::from("returns.csv"));
    cfg.regress.market_column = MARKET_COLUMN.into();
    cfg.regress.hml_column = HML_COLUMN.into();
    cfg.regress.smb_column = SMB_COLUMN.into();
    cfg
}

/// Writes `comments.jsonl`, `returns.csv` and `config.toml` into `dir` and
/// returns the config path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let cfg = fixture_config(spec);
    let fixture = generate(spec, cfg.tz());
    let mut jsonl = String::new();
    for c in &fixture.comments {
        jsonl.push_str(&serde_json::to_string(c).map_err(io::Error::other)?);
        jsonl.push('\n');
    }
    std::fs::write(dir.join("comments.jsonl"), jsonl)?;
    std::fs::write(dir.join("returns.csv"), returns_csv(&fixture, None, spec.seed ^ 0xfac7))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml())?;
    Ok(path)
}

/// A single-stock corpus of `n_docs` comments over `topics` disjoint
/// vocabularies of `words_per_topic` words. Every comment also carries the
/// ticker token. Returns `(id, body)` pairs and the planted topic labels.
pub fn planted_topic_corpus(
    topics: usize,
    n_docs: usize,
    words_per_topic: usize,
    ticker: &str,
    seed: u64,
) -> (Vec<(String, String)>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordSource::new([ticker.to_lowercase()]);
    let vocabs: Vec<Vec<String>> = (0..topics).map(|_| words.vocabulary(words_per_topic, &mut rng)).collect();
    let mut docs = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let topic = i % topics;
        let mut ws: Vec<String> =
            (0..rng.gen_range(6..=10)).map(|_| vocabs[topic].choose(&mut rng).expect("non-empty").clone()).collect();
        let at = rng.gen_range(0..=ws.len());
        ws.insert(at, ticker.to_lowercase());
        docs.push((format!("d{i:04}"), ws.join(" ")));
        labels.push(topic);
    }
    (docs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{detect_mentions, normalize_text, TickerSpec};
    use chrono_tz::America::New_York;

    fn small() -> FixtureSpec {
        FixtureSpec { end: NaiveDate::from_ymd_opt(2018, 6, 20).unwrap(), ..FixtureSpec::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(), New_York);
        let b = generate(&small(), New_York);
        assert_eq!(a.comments, b.comments);
        assert_eq!(returns_csv(&a, None, 1), returns_csv(&b, None, 1));
    }

    #[test]
    fn planted_mentions_are_detected() {
        let spec = small();
        let fx = generate(&spec, New_York);
        let universe: Vec<TickerSpec> =
            spec.stocks.iter().map(|s| TickerSpec::new(&s.symbol.to_lowercase(), &[&s.alias]).unwrap()).collect();
        let mut seen = HashMap::new();
        for c in &fx.comments {
            if seen.insert(c.id.clone(), ()).is_some() || c.id == "early" || c.id == "late" {
                continue;
            }
            let m = detect_mentions(&normalize_text(&c.body), &universe);
            match fx.truth.topic_of.get(&c.id) {
                Some((sym, _)) => assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![sym.clone()], "{}", c.body),
                None => assert!(m.is_empty(), "{}", c.body),
            }
        }
    }

    #[test]
    fn calendar_skips_weekends_and_holidays() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let days = trading_days(d("2018-06-29"), d("2018-07-09"));
        assert_eq!(days, [d("2018-06-29"), d("2018-07-02"), d("2018-07-03"), d("2018-07-05"), d("2018-07-06"), d("2018-07-09")]);
    }

    #[test]
    fn topic_corpus_labels() {
        let (docs, labels) = planted_topic_corpus(3, 30, 20, "tsla", 1);
        assert_eq!(docs.len(), 30);
        assert_eq!(labels[..4], [0, 1, 2, 0]);
        assert!(docs.iter().all(|(_, b)| b.split(' ').any(|w| w == "tsla")));
    }
}
