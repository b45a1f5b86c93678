use chrono::{DateTime, TimeZone, Utc};

/// Source of timestamps. Mock runs use [`FixedClock`] so that every artifact
/// they write is byte-reproducible.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    /// 2023-01-01T00:00:00Z.
    pub fn epoch() -> Self {
        FixedClock(Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}
