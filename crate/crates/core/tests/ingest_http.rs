use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use redfactor::ingest::{fetch_range, FetchWindow, IngestError, PushshiftClient, RateLimiter, RetryPolicy};

/// Serves the scripted `(status, body)` responses in order, then closes.
/// Returns the endpoint URL, the recorded request lines and the server
/// thread.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/comment/search", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in script {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            log.lock().unwrap().push(line.trim().to_string());
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn client(url: &str, attempts: u32) -> PushshiftClient {
    let retry = RetryPolicy { max_attempts: attempts, base_delay: Duration::from_millis(5), max_delay: Duration::from_millis(10) };
    PushshiftClient::new(url, "wallstreetbets", retry, RateLimiter::new(500.0))
}

const T0: i64 = 1_541_000_000;

#[test]
fn query_carries_window_bounds_and_cap() {
    let (url, seen, h) = serve(vec![(200, r#"{"data": []}"#.into())]);
    let w = FetchWindow::new(T0, T0 + 3000, 5000).unwrap();
    let got = client(&url, 1).fetch_window(&w).unwrap();
    h.join().unwrap();
    assert!(got.records.is_empty());
    let line = &seen.lock().unwrap()[0];
    assert!(line.contains("subreddit=wallstreetbets"), "{line}");
    assert!(line.contains(&format!("after={}", T0 - 1)), "{line}");
    assert!(line.contains(&format!("before={}", T0 + 3000)), "{line}");
    assert!(line.contains("size=5000"), "{line}");
}

#[test]
fn server_errors_are_retried() {
    let ok = format!(r#"{{"data": [{{"id": "a", "created_utc": {T0}, "body": "hi"}}]}}"#);
    let (url, seen, h) = serve(vec![(503, "busy".into()), (500, "oops".into()), (200, ok)]);
    let w = FetchWindow::new(T0, T0 + 600, 5000).unwrap();
    let got = client(&url, 3).fetch_window(&w).unwrap();
    h.join().unwrap();
    assert_eq!(got.records.len(), 1);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_transport_error() {
    let (url, _, h) = serve(vec![(502, String::new()), (502, String::new())]);
    let w = FetchWindow::new(T0, T0 + 600, 5000).unwrap();
    let err = client(&url, 2).fetch_window(&w).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, IngestError::Transport { attempts: 2, .. }), "{err}");
}

#[test]
fn malformed_and_stray_records_are_counted_not_kept() {
    let body = format!(
        r#"[{{"id": "a", "created_utc": {}, "body": "x"}},
            {{"id": "b", "created_utc": "{}", "body": "y"}},
            {{"id": "", "created_utc": {T0}, "body": "z"}},
            {{"id": "c", "body": "no time"}},
            {{"id": "d", "created_utc": {}, "body": "outside"}}]"#,
        T0 + 1,
        T0 + 2,
        T0 + 10_000
    );
    let (url, _, h) = serve(vec![(200, body)]);
    let w = FetchWindow::new(T0, T0 + 600, 5000).unwrap();
    let got = client(&url, 1).fetch_window(&w).unwrap();
    h.join().unwrap();
    let ids: Vec<&str> = got.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(got.malformed, 3);
}

#[test]
fn non_json_payload_is_an_error() {
    let (url, _, h) = serve(vec![(200, "<html>".into())]);
    let w = FetchWindow::new(T0, T0 + 600, 5000).unwrap();
    let err = client(&url, 1).fetch_window(&w).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, IngestError::MalformedPayload(_)));
}

#[test]
fn saturated_window_is_refetched_in_five_parts() {
    let full: Vec<String> = (0..5000)
        .map(|i| format!(r#"{{"id": "f{i}", "created_utc": {}, "body": "x"}}"#, T0 + i % 3000))
        .collect();
    let mut script = vec![(200, format!("[{}]", full.join(",")))];
    for part in 0..5 {
        script.push((200, format!(r#"[{{"id": "p{part}", "created_utc": {}, "body": "x"}}]"#, T0 + 600 * part)));
    }
    let (url, seen, h) = serve(script);
    let report = fetch_range(&client(&url, 1), T0, T0 + 3000, 1).unwrap();
    h.join().unwrap();
    assert_eq!(report.split_windows, 1);
    assert_eq!(report.requests, 6);
    let ids: Vec<&str> = report.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["p0", "p1", "p2", "p3", "p4"]);
    let lines = seen.lock().unwrap();
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.contains(&format!("after={}", T0 + 600 * i as i64 - 1)), "{line}");
        assert!(line.contains(&format!("before={}", T0 + 600 * (i as i64 + 1))), "{line}");
    }
}
