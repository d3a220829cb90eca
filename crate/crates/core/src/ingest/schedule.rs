use serde::{Deserialize, Serialize};

use super::IngestError;

/// Length of a top-level request window.
pub const CHUNK_SECONDS: i64 = 50 * 60;
/// Number of sub-windows a saturated 50-minute window is split into.
pub const SUB_WINDOWS: usize = 5;
/// Upper bound the archive API places on records per request.
pub const MAX_SIZE_CAP: u32 = 5000;

/// Half-open request window `[after_utc, before_utc)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FetchWindow {
    after_utc: i64,
    before_utc: i64,
    size_cap: u32,
}

impl FetchWindow {
    pub fn new(after_utc: i64, before_utc: i64, size_cap: u32) -> Result<Self, IngestError> {
        if after_utc >= before_utc {
            return Err(IngestError::InvalidWindow {
                after: after_utc,
                before: before_utc,
                reason: "after must precede before".into(),
            });
        }
        if size_cap == 0 || size_cap > MAX_SIZE_CAP {
            return Err(IngestError::InvalidWindow {
                after: after_utc,
                before: before_utc,
                reason: format!("size cap {size_cap} outside 1..={MAX_SIZE_CAP}"),
            });
        }
        Ok(Self { after_utc, before_utc, size_cap })
    }

    pub fn after_utc(&self) -> i64 {
        self.after_utc
    }

    pub fn before_utc(&self) -> i64 {
        self.before_utc
    }

    pub fn size_cap(&self) -> u32 {
        self.size_cap
    }

    pub fn duration(&self) -> i64 {
        self.before_utc - self.after_utc
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.after_utc <= ts && ts < self.before_utc
    }
}

/// Tiles `[start_utc, end_utc)` with consecutive 50-minute windows; the last
/// one may be shorter.
pub fn chunk_schedule(start_utc: i64, end_utc: i64) -> Result<Vec<FetchWindow>, IngestError> {
    if start_utc >= end_utc {
        return Err(IngestError::EmptyRange { start: start_utc, end: end_utc });
    }
    let mut windows = Vec::with_capacity(((end_utc - start_utc) / CHUNK_SECONDS + 1) as usize);
    let mut after = start_utc;
    while after < end_utc {
        let before = (after + CHUNK_SECONDS).min(end_utc);
        windows.push(FetchWindow::new(after, before, MAX_SIZE_CAP)?);
        after = before;
    }
    Ok(windows)
}

/// Splits a full 50-minute window into five 10-minute windows.
pub fn split_window(w: &FetchWindow) -> Result<Vec<FetchWindow>, IngestError> {
    if w.duration() != CHUNK_SECONDS {
        return Err(IngestError::InvalidWindow {
            after: w.after_utc,
            before: w.before_utc,
            reason: format!("expected a {CHUNK_SECONDS}s window, got {}s", w.duration()),
        });
    }
    let step = CHUNK_SECONDS / SUB_WINDOWS as i64;
    (0..SUB_WINDOWS as i64)
        .map(|i| FetchWindow::new(w.after_utc + i * step, w.after_utc + (i + 1) * step, w.size_cap))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds(ws: &[FetchWindow]) -> Vec<(i64, i64)> {
        ws.iter().map(|w| (w.after_utc(), w.before_utc())).collect()
    }

    #[test]
    fn single_full_window() {
        assert_eq!(bounds(&chunk_schedule(0, 3000).unwrap()), vec![(0, 3000)]);
    }

    #[test]
    fn three_full_windows() {
        let ws = chunk_schedule(0, 9000).unwrap();
        assert_eq!(bounds(&ws), vec![(0, 3000), (3000, 6000), (6000, 9000)]);
        assert!(ws.iter().all(|w| w.size_cap() == 5000));
    }

    #[test]
    fn short_tail_window() {
        assert_eq!(bounds(&chunk_schedule(0, 4000).unwrap()), vec![(0, 3000), (3000, 4000)]);
    }

    #[test]
    fn empty_range_rejected() {
        assert!(matches!(chunk_schedule(10, 10), Err(IngestError::EmptyRange { .. })));
        assert!(matches!(chunk_schedule(10, 5), Err(IngestError::EmptyRange { .. })));
    }

    #[test]
    fn split_into_ten_minute_windows() {
        let w = FetchWindow::new(0, 3000, 5000).unwrap();
        assert_eq!(
            bounds(&split_window(&w).unwrap()),
            vec![(0, 600), (600, 1200), (1200, 1800), (1800, 2400), (2400, 3000)]
        );
        let w = FetchWindow::new(3000, 6000, 5000).unwrap();
        let subs = split_window(&w).unwrap();
        for (i, s) in subs.iter().enumerate() {
            assert_eq!(s.after_utc(), 3000 + 600 * i as i64);
            assert_eq!(s.duration(), 600);
        }
    }

    #[test]
    fn split_rejects_wrong_duration() {
        let w = FetchWindow::new(0, 2400, 5000).unwrap();
        assert!(matches!(split_window(&w), Err(IngestError::InvalidWindow { .. })));
    }

    #[test]
    fn window_validation() {
        assert!(FetchWindow::new(5, 5, 10).is_err());
        assert!(FetchWindow::new(0, 5, 5001).is_err());
        assert!(FetchWindow::new(0, 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn schedule_tiles_range(start in -1_000_000i64..1_000_000, len in 1i64..200_000) {
            let ws = chunk_schedule(start, start + len).unwrap();
            prop_assert_eq!(ws[0].after_utc(), start);
            prop_assert_eq!(ws.last().unwrap().before_utc(), start + len);
            for pair in ws.windows(2) {
                prop_assert_eq!(pair[0].before_utc(), pair[1].after_utc());
            }
            prop_assert!(ws.iter().all(|w| w.duration() > 0 && w.duration() <= CHUNK_SECONDS));
            let total: i64 = ws.iter().map(FetchWindow::duration).sum();
            prop_assert_eq!(total, len);
        }
    }
}
