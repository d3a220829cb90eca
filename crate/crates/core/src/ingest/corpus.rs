use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::normalize::{detect_mentions, normalize_text, TickerSpec};
use super::IngestError;

/// A comment as delivered by the archive API, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub created_utc: i64,
    pub body: String,
}

/// One normalized comment. `mentions` holds lowercase ticker symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub created_utc: i64,
    pub body: String,
    pub mentions: BTreeSet<String>,
}

impl Comment {
    pub fn mentions(&self, symbol: &str) -> bool {
        self.mentions.contains(symbol)
    }
}

/// Counters reported by [`Corpus::assemble`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub input_records: usize,
    pub duplicates: usize,
    pub out_of_span: usize,
    pub mentioning: usize,
}

/// Comments sorted by `(created_utc, id)` with unique ids, all inside the
/// half-open span `[start_utc, end_utc)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    comments: Vec<Comment>,
    start_utc: i64,
    end_utc: i64,
}

impl Corpus {
    /// Normalizes raw records, tags ticker mentions, drops records outside
    /// the span and deduplicates by id (first occurrence wins).
    ///
    /// Unless `keep_unmentioned_bodies` is set, comments that mention no
    /// tracked ticker keep only their id and timestamp; they still count
    /// toward daily volume.
    pub fn assemble(
        records: impl IntoIterator<Item = RawComment>,
        universe: &[TickerSpec],
        (start_utc, end_utc): (i64, i64),
        keep_unmentioned_bodies: bool,
    ) -> Result<(Corpus, AssemblyStats), IngestError> {
        if start_utc >= end_utc {
            return Err(IngestError::EmptyRange { start: start_utc, end: end_utc });
        }
        let mut stats = AssemblyStats::default();
        let mut seen = HashSet::new();
        let mut comments = Vec::new();
        for raw in records {
            stats.input_records += 1;
            if !(start_utc..end_utc).contains(&raw.created_utc) {
                stats.out_of_span += 1;
                continue;
            }
            if !seen.insert(raw.id.clone()) {
                stats.duplicates += 1;
                continue;
            }
            let body = normalize_text(&raw.body);
            let mentions = detect_mentions(&body, universe);
            if !mentions.is_empty() {
                stats.mentioning += 1;
            }
            let body = if mentions.is_empty() && !keep_unmentioned_bodies { String::new() } else { body };
            comments.push(Comment { id: raw.id, created_utc: raw.created_utc, body, mentions });
        }
        comments.sort_by(|a, b| a.created_utc.cmp(&b.created_utc).then_with(|| a.id.cmp(&b.id)));
        Ok((Corpus { comments, start_utc, end_utc }, stats))
    }

    /// Wraps already-normalized comments, checking the corpus invariants.
    pub fn from_comments(mut comments: Vec<Comment>, (start_utc, end_utc): (i64, i64)) -> Result<Self, IngestError> {
        if start_utc >= end_utc {
            return Err(IngestError::EmptyRange { start: start_utc, end: end_utc });
        }
        let mut ids = HashSet::new();
        for c in &comments {
            if !(start_utc..end_utc).contains(&c.created_utc) {
                return Err(IngestError::MalformedPayload(format!(
                    "comment {} at {} lies outside [{start_utc}, {end_utc})",
                    c.id, c.created_utc
                )));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(IngestError::MalformedPayload(format!("duplicate comment id {}", c.id)));
            }
        }
        comments.sort_by(|a, b| a.created_utc.cmp(&b.created_utc).then_with(|| a.id.cmp(&b.id)));
        Ok(Corpus { comments, start_utc, end_utc })
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn span(&self) -> (i64, i64) {
        (self.start_utc, self.end_utc)
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    /// Comments mentioning `symbol`, in corpus order.
    pub fn mentioning<'a>(&'a self, symbol: &'a str) -> impl Iterator<Item = &'a Comment> + 'a {
        self.comments.iter().filter(move |c| c.mentions(symbol))
    }
}

/// Calendar date of an epoch timestamp in `tz`.
pub fn local_date(ts: i64, tz: Tz) -> NaiveDate {
    let utc = DateTime::from_timestamp(ts, 0).expect("timestamp in chrono range");
    utc.with_timezone(&tz).date_naive()
}

/// UTC span covering local dates `start..=end` in `tz`, from midnight of
/// `start` to midnight after `end`.
pub fn day_span_utc(start: NaiveDate, end: NaiveDate, tz: Tz) -> (i64, i64) {
    let midnight = |d: NaiveDate| {
        let naive = d.and_hms_opt(0, 0, 0).expect("valid midnight");
        tz.from_local_datetime(&naive).earliest().expect("midnight exists in tz").timestamp()
    };
    (midnight(start), midnight(end.checked_add_days(Days::new(1)).expect("date in range")))
}

/// Number of comments per local date for every date in `start..=end`;
/// dates without comments map to zero.
pub fn daily_volume(corpus: &Corpus, (start, end): (NaiveDate, NaiveDate), tz: Tz) -> BTreeMap<NaiveDate, u64> {
    let mut volume: BTreeMap<NaiveDate, u64> = start.iter_days().take_while(|d| *d <= end).map(|d| (d, 0)).collect();
    for c in corpus.comments() {
        if let Some(n) = volume.get_mut(&local_date(c.created_utc, tz)) {
            *n += 1;
        }
    }
    volume
}

/// Writes one JSON object per line.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), IngestError> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in corpus.comments() {
        serde_json::to_writer(&mut out, c).map_err(|source| IngestError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IngestError> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|source| IngestError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(items)
}

pub fn read_corpus(path: &Path, span: (i64, i64)) -> Result<Corpus, IngestError> {
    Corpus::from_comments(read_jsonl(path)?, span)
}

/// Reads raw archive records (JSONL with `id`, `created_utc`, `body`).
pub fn read_raw_comments(path: &Path) -> Result<Vec<RawComment>, IngestError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono_tz::America::New_York;

    fn raw(id: &str, ts: i64, body: &str) -> RawComment {
        RawComment { id: id.into(), created_utc: ts, body: body.into() }
    }

    fn universe() -> Vec<TickerSpec> {
        vec![TickerSpec::new("TSLA", &["tesla"]).unwrap(), TickerSpec::new("WMT", &["walmart"]).unwrap()]
    }

    #[test]
    fn assemble_dedups_sorts_and_strips() {
        let records = vec![
            raw("b", 20, "Bless you TSLA!"),
            raw("a", 10, "nothing here"),
            raw("b", 20, "Bless you TSLA!"),
            raw("c", 99, "out of span walmart"),
        ];
        let (corpus, stats) = Corpus::assemble(records, &universe(), (0, 50), false).unwrap();
        assert_eq!(stats, AssemblyStats { input_records: 4, duplicates: 1, out_of_span: 1, mentioning: 1 });
        let ids: Vec<_> = corpus.comments().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(corpus.comments()[0].body, "");
        assert_eq!(corpus.comments()[1].body, "bless you tsla!");
        assert_eq!(corpus.mentioning("tsla").count(), 1);
    }

    #[test]
    fn reingest_same_windows_keeps_id_set() {
        let records = vec![raw("x", 1, "tsla"), raw("y", 2, "wmt")];
        let doubled: Vec<_> = records.iter().chain(records.iter()).cloned().collect();
        let (a, _) = Corpus::assemble(records, &universe(), (0, 10), true).unwrap();
        let (b, _) = Corpus::assemble(doubled, &universe(), (0, 10), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn daily_volume_uses_eastern_days() {
        let start = NaiveDate::from_ymd_opt(2018, 6, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2018, 6, 3).unwrap();
        let span = day_span_utc(start, end, New_York);
        // 2018-06-01 00:00 EDT = 04:00 UTC
        assert_eq!(span.0, 1_527_825_600);
        assert_eq!(span.1 - span.0, 3 * 86_400);

        let empty = Corpus::from_comments(vec![], span).unwrap();
        assert!(daily_volume(&empty, (start, end), New_York).values().all(|&v| v == 0));

        let at = |ts: i64, id: &str| Comment { id: id.into(), created_utc: ts, body: String::new(), mentions: BTreeSet::new() };
        // 03:30 UTC on June 2 is still June 1 in New York.
        let june2_0330utc = span.0 + 86_400 - 1800;
        let corpus = Corpus::from_comments(
            vec![at(june2_0330utc, "a"), at(span.0 + 86_400 + 10, "b"), at(span.0 + 86_400 + 20, "c"), at(span.0 + 86_400 + 30, "d")],
            span,
        )
        .unwrap();
        let vol = daily_volume(&corpus, (start, end), New_York);
        assert_eq!(vol[&start], 1);
        assert_eq!(vol[&start.succ_opt().unwrap()], 3);
        assert_eq!(vol[&end], 0);
        assert_eq!(vol.values().sum::<u64>() as usize, corpus.len());
    }

    #[test]
    fn corpus_roundtrips_through_jsonl() {
        let (corpus, _) = Corpus::assemble(
            vec![raw("1", 5, "TSLA to the moon 🚀"), raw("2", 6, "walmart earnings")],
            &universe(),
            (0, 10),
            false,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&path, &corpus).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"id":"1","created_utc":5,"body":"tsla to the moon","mentions":["tsla"]}"#
        );
        assert_eq!(read_corpus(&path, (0, 10)).unwrap(), corpus);
    }

    #[test]
    fn from_comments_rejects_duplicates() {
        let c = Comment { id: "a".into(), created_utc: 1, body: String::new(), mentions: BTreeSet::new() };
        assert!(Corpus::from_comments(vec![c.clone(), c], (0, 10)).is_err());
    }
}
