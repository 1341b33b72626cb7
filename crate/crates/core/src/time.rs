//! Wall-clock and virtual-clock time.
//!
//! Every component reads time through a [`Clock`], so the simulator and the
//! tests can run monitoring hours in seconds of real time.

use std::fmt;
use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn from_secs(s: i64) -> Self {
        Timestamp(s * 1000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1000.0).round() as i64)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    /// Whole seconds, rounded toward negative infinity.
    pub const fn secs(self) -> i64 {
        self.0.div_euclid(1000)
    }

    pub fn secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Signed distance `self - earlier` in seconds.
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 / 1000.0
    }

    pub fn plus_secs(self, s: u64) -> Self {
        Timestamp(self.0 + s as i64 * 1000)
    }

    /// `YYYY-MM-DDTHH:MM:SSZ`
    pub fn to_iso8601(self) -> String {
        match chrono::DateTime::from_timestamp_millis(self.0) {
            Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            None => format!("@{}", self.0),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso8601())
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, d: Duration) -> Timestamp {
        Timestamp(self.0 + d.as_millis() as i64)
    }
}

impl Sub<Duration> for Timestamp {
    type Output = Timestamp;

    fn sub(self, d: Duration) -> Timestamp {
        Timestamp(self.0 - d.as_millis() as i64)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Real time that elapses while `virtual_span` passes on this clock.
    fn real_duration(&self, virtual_span: Duration) -> Duration {
        virtual_span
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let d = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(d.as_millis() as i64)
    }
}

/// Virtual time advancing `speed` times faster than real time from `origin`.
#[derive(Debug, Clone)]
pub struct ScaledClock {
    origin: Timestamp,
    started: Instant,
    speed: f64,
}

impl ScaledClock {
    pub fn new(origin: Timestamp, speed: f64) -> Self {
        assert!(speed > 0.0, "speed factor must be positive");
        ScaledClock {
            origin,
            started: Instant::now(),
            speed,
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }
}

impl Clock for ScaledClock {
    fn now(&self) -> Timestamp {
        let real = self.started.elapsed().as_secs_f64();
        Timestamp(self.origin.0 + (real * self.speed * 1000.0) as i64)
    }

    fn real_duration(&self, virtual_span: Duration) -> Duration {
        virtual_span.div_f64(self.speed)
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicI64>);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        ManualClock(Arc::new(AtomicI64::new(start.0)))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t.0, Ordering::SeqCst);
    }

    pub fn advance(&self, d: Duration) {
        self.0.fetch_add(d.as_millis() as i64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_format() {
        assert_eq!(
            Timestamp::from_secs(1058400000).to_iso8601(),
            "2003-07-17T00:00:00Z"
        );
    }

    #[test]
    fn secs_floor_negative() {
        assert_eq!(Timestamp(-1).secs(), -1);
        assert_eq!(Timestamp(1999).secs(), 1);
    }

    #[test]
    fn manual_clock_moves_only_on_request() {
        let c = ManualClock::new(Timestamp::from_secs(10));
        assert_eq!(c.now(), Timestamp::from_secs(10));
        c.advance(Duration::from_secs(5));
        assert_eq!(c.now(), Timestamp::from_secs(15));
    }

    #[test]
    fn scaled_clock_runs_fast() {
        let c = ScaledClock::new(Timestamp::from_secs(0), 1000.0);
        std::thread::sleep(Duration::from_millis(20));
        assert!(c.now() >= Timestamp::from_secs(19));
        assert_eq!(
            c.real_duration(Duration::from_secs(10)),
            Duration::from_millis(10)
        );
    }
}
