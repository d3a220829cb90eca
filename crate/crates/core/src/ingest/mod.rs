//! Comment retrieval, normalization, ticker detection and corpus storage.

mod client;
mod corpus;
mod normalize;
mod schedule;

pub use client::{fetch_range, FetchReport, PushshiftClient, RateLimiter, RetryPolicy, WindowFetch};
pub use corpus::{
    daily_volume, day_span_utc, local_date, read_corpus, read_raw_comments, write_corpus, AssemblyStats,
    Comment, Corpus, RawComment,
};
pub use normalize::{detect_mentions, normalize_text, TickerSpec};
pub use schedule::{chunk_schedule, split_window, FetchWindow, CHUNK_SECONDS, MAX_SIZE_CAP, SUB_WINDOWS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("empty time range: start {start} is not before end {end}")]
    EmptyRange { start: i64, end: i64 },
    #[error("invalid fetch window [{after}, {before}): {reason}")]
    InvalidWindow { after: i64, before: i64, reason: String },
    #[error("request to {url} failed after {attempts} attempts: {message}")]
    Transport { url: String, attempts: u32, message: String },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("invalid ticker spec: {0}")]
    InvalidTicker(String),
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
