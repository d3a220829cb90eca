//! Blocking client for a Pushshift-compatible comment search endpoint.
//!
//! Query: `GET <endpoint>?subreddit=<name>&after=<a>&before=<b>&size=<cap>`.
//! The archive treats `after`/`before` as exclusive bounds, so a half-open
//! window `[after_utc, before_utc)` is requested as `after = after_utc - 1`.
//! The response is either a JSON array of comment objects or an object whose
//! `data` field is that array.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::corpus::RawComment;
use super::schedule::{chunk_schedule, split_window, FetchWindow, CHUNK_SECONDS};
use super::IngestError;

/// Bounded exponential backoff for transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Global minimum spacing between request starts, shared by all workers.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    /// `requests_per_second <= 0` disables limiting.
    pub fn new(requests_per_second: f64) -> Self {
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        Self { min_interval, next_slot: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Records returned for one window plus the count of records skipped as
/// malformed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowFetch {
    pub records: Vec<RawComment>,
    pub malformed: usize,
}

impl WindowFetch {
    /// The window came back full, so it may have been truncated.
    pub fn is_saturated(&self, window: &FetchWindow) -> bool {
        self.records.len() + self.malformed >= window.size_cap() as usize
    }
}

pub struct PushshiftClient {
    agent: ureq::Agent,
    endpoint: String,
    subreddit: String,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl PushshiftClient {
    pub fn new(endpoint: &str, subreddit: &str, retry: RetryPolicy, limiter: RateLimiter) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .user_agent(concat!("redfactor/", env!("CARGO_PKG_VERSION")))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.to_string(),
            subreddit: subreddit.to_string(),
            retry,
            limiter,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Fetches one window, retrying transport failures with backoff.
    pub fn fetch_window(&self, w: &FetchWindow) -> Result<WindowFetch, IngestError> {
        if self.subreddit.is_empty() {
            return Err(IngestError::MalformedPayload("empty subreddit name".into()));
        }
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            self.limiter.acquire();
            match self.request_once(w) {
                Ok(body) => return parse_payload(&body, w),
                Err(e) => {
                    last_error = e;
                    debug!("attempt {attempt} for [{}, {}) failed: {last_error}", w.after_utc(), w.before_utc());
                    if attempt < self.retry.max_attempts {
                        thread::sleep(self.retry.delay(attempt));
                    }
                }
            }
        }
        Err(IngestError::Transport {
            url: self.endpoint.clone(),
            attempts: self.retry.max_attempts,
            message: last_error,
        })
    }

    fn request_once(&self, w: &FetchWindow) -> Result<String, String> {
        let response = self
            .agent
            .get(&self.endpoint)
            .query("subreddit", &self.subreddit)
            .query("after", (w.after_utc() - 1).to_string())
            .query("before", w.before_utc().to_string())
            .query("size", w.size_cap().to_string())
            .call()
            .map_err(|e| e.to_string())?;
        response.into_body().read_to_string().map_err(|e| e.to_string())
    }
}

fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f.floor() as i64)),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn parse_record(v: &Value) -> Option<RawComment> {
    let obj = v.as_object()?;
    let id = match obj.get("id")? {
        Value::String(s) if !s.is_empty() => s.clone(),
        _ => return None,
    };
    let created_utc = parse_timestamp(obj.get("created_utc")?)?;
    let body = obj.get("body")?.as_str()?.to_string();
    Some(RawComment { id, created_utc, body })
}

/// Parses a response body; records that lack fields or fall outside the
/// window are skipped and counted.
fn parse_payload(body: &str, w: &FetchWindow) -> Result<WindowFetch, IngestError> {
    let value: Value = serde_json::from_str(body).map_err(|e| IngestError::MalformedPayload(e.to_string()))?;
    let items = match &value {
        Value::Array(items) => items,
        Value::Object(obj) => match obj.get("data") {
            Some(Value::Array(items)) => items,
            _ => return Err(IngestError::MalformedPayload("object without a `data` array".into())),
        },
        _ => return Err(IngestError::MalformedPayload("expected a JSON array".into())),
    };
    let mut out = WindowFetch::default();
    for item in items {
        match parse_record(item) {
            Some(r) if w.contains(r.created_utc) => out.records.push(r),
            _ => out.malformed += 1,
        }
    }
    Ok(out)
}

/// Outcome of fetching a whole range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchReport {
    #[serde(skip)]
    pub records: Vec<RawComment>,
    pub windows: usize,
    pub split_windows: usize,
    pub requests: usize,
    pub malformed: usize,
    /// Windows that came back full but could not be split further.
    pub saturated_unsplit: usize,
}

/// Fetches every comment in `[start_utc, end_utc)` using the 50-minute
/// schedule; full windows are refetched as five 10-minute windows.
///
/// Windows are fetched on a pool of `parallelism` threads; results are merged
/// in schedule order, so output order does not depend on scheduling.
pub fn fetch_range(
    client: &PushshiftClient,
    start_utc: i64,
    end_utc: i64,
    parallelism: usize,
) -> Result<FetchReport, IngestError> {
    let schedule = chunk_schedule(start_utc, end_utc)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| IngestError::Io(std::io::Error::other(e)))?;

    let per_window: Vec<Result<FetchReport, IngestError>> =
        pool.install(|| schedule.par_iter().map(|w| fetch_with_split(client, w)).collect());

    let mut report = FetchReport { windows: schedule.len(), ..Default::default() };
    for part in per_window {
        let part = part?;
        report.records.extend(part.records);
        report.split_windows += part.split_windows;
        report.requests += part.requests;
        report.malformed += part.malformed;
        report.saturated_unsplit += part.saturated_unsplit;
    }
    Ok(report)
}

fn fetch_with_split(client: &PushshiftClient, w: &FetchWindow) -> Result<FetchReport, IngestError> {
    let first = client.fetch_window(w)?;
    let mut report = FetchReport { requests: 1, ..Default::default() };
    if !first.is_saturated(w) {
        report.malformed = first.malformed;
        report.records = first.records;
        return Ok(report);
    }
    if w.duration() != CHUNK_SECONDS {
        warn!("short window [{}, {}) is saturated and cannot be split", w.after_utc(), w.before_utc());
        report.saturated_unsplit = 1;
        report.malformed = first.malformed;
        report.records = first.records;
        return Ok(report);
    }
    report.split_windows = 1;
    for sub in split_window(w)? {
        let part = client.fetch_window(&sub)?;
        report.requests += 1;
        if part.is_saturated(&sub) {
            warn!("10-minute window [{}, {}) is still saturated", sub.after_utc(), sub.before_utc());
            report.saturated_unsplit += 1;
        }
        report.malformed += part.malformed;
        report.records.extend(part.records);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_accepts_array_and_data_object() {
        let w = FetchWindow::new(0, 100, 10).unwrap();
        let arr = r#"[{"id":"a","created_utc":5,"body":"x"},{"id":"b","created_utc":6.7,"body":"y"}]"#;
        let got = parse_payload(arr, &w).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[1].created_utc, 6);
        let obj = r#"{"data":[{"id":"a","created_utc":"5","body":"x"}]}"#;
        assert_eq!(parse_payload(obj, &w).unwrap().records.len(), 1);
    }

    #[test]
    fn payload_counts_malformed_records() {
        let w = FetchWindow::new(0, 100, 10).unwrap();
        let body = r#"[{"id":"a","created_utc":5},{"created_utc":5,"body":"x"},{"id":"c","created_utc":500,"body":"late"},{"id":"d","created_utc":1,"body":"ok"}]"#;
        let got = parse_payload(body, &w).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.malformed, 3);
        assert!(parse_payload("not json", &w).is_err());
        assert!(parse_payload("{\"x\":1}", &w).is_err());
    }

    #[test]
    fn backoff_is_bounded_exponential() {
        let p = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(700) };
        let delays: Vec<_> = (1..=5).map(|a| p.delay(a).as_millis()).collect();
        assert_eq!(delays, vec![100, 200, 400, 700, 700]);
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(200.0);
        let start = Instant::now();
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(19));
    }
}
