//! Scenario time: a nanosecond [`Timestamp`] and the shared [`VirtualClock`].
//!
//! In virtual mode time advances only through explicit [`VirtualClock::advance`]
//! calls, which is what makes headless runs reproducible. Realtime mode maps
//! `now` onto the wall clock and exists for interactive inspection only.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

/// Nanoseconds since the scenario epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_nanos(ns: u64) -> Self {
        Timestamp(ns)
    }

    pub fn from_millis(ms: u64) -> Self {
        Timestamp(ms * 1_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e9).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: Timestamp) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add<Duration> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0 + rhs.as_nanos() as u64)
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error)]
pub enum ClockError {
    /// `advance` was called on a clock that follows the wall clock.
    #[error("clock is in realtime mode; virtual advance is not available")]
    RealtimeMode,
}

/// Identifies a registered timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimerId(u64);

/// A timer that fired during an [`VirtualClock::advance`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiredTimer {
    pub id: TimerId,
    pub deadline: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Virtual,
    Realtime,
}

struct ClockInner {
    mode: Mode,
    now: Timestamp,
    origin: Instant,
    // Keyed by (deadline, registration order) so equal deadlines fire in
    // registration order.
    timers: BTreeMap<(Timestamp, u64), TimerId>,
    next_reg: u64,
}

/// Shared clock handle. Clones refer to the same timeline.
#[derive(Clone)]
pub struct VirtualClock {
    inner: Arc<Mutex<ClockInner>>,
}

impl VirtualClock {
    /// A clock in virtual mode, starting at t = 0.
    pub fn new_virtual() -> Self {
        Self::with_mode(Mode::Virtual)
    }

    /// A clock that follows the wall clock, anchored at construction time.
    pub fn new_realtime() -> Self {
        Self::with_mode(Mode::Realtime)
    }

    fn with_mode(mode: Mode) -> Self {
        VirtualClock {
            inner: Arc::new(Mutex::new(ClockInner {
                mode,
                now: Timestamp::ZERO,
                origin: Instant::now(),
                timers: BTreeMap::new(),
                next_reg: 0,
            })),
        }
    }

    pub fn is_virtual(&self) -> bool {
        self.inner.lock().unwrap().mode == Mode::Virtual
    }

    pub fn now(&self) -> Timestamp {
        let inner = self.inner.lock().unwrap();
        match inner.mode {
            Mode::Virtual => inner.now,
            Mode::Realtime => Timestamp(inner.origin.elapsed().as_nanos() as u64),
        }
    }

    /// Registers a one-shot timer. Timers with deadlines at or before the
    /// current time fire on the next `advance` call.
    pub fn register_timer(&self, deadline: Timestamp) -> TimerId {
        let mut inner = self.inner.lock().unwrap();
        let id = TimerId(inner.next_reg);
        let reg = inner.next_reg;
        inner.next_reg += 1;
        inner.timers.insert((deadline, reg), id);
        id
    }

    pub fn cancel_timer(&self, id: TimerId) {
        let mut inner = self.inner.lock().unwrap();
        inner.timers.retain(|_, v| *v != id);
    }

    /// Moves virtual time forward by `dt` and returns the timers whose
    /// deadline is now due, ordered by (deadline, registration order).
    pub fn advance(&self, dt: Duration) -> Result<Vec<FiredTimer>, ClockError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.mode != Mode::Virtual {
            return Err(ClockError::RealtimeMode);
        }
        inner.now = Timestamp(inner.now.0 + dt.as_nanos() as u64);
        let now = inner.now;
        let mut fired = Vec::new();
        while let Some((&(deadline, reg), &id)) = inner.timers.iter().next() {
            if deadline > now {
                break;
            }
            inner.timers.remove(&(deadline, reg));
            fired.push(FiredTimer { id, deadline });
        }
        Ok(fired)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timer_fires_once_within_advance_window() {
        let clock = VirtualClock::new_virtual();
        let id = clock.register_timer(Timestamp::from_millis(5));
        let fired = clock.advance(Duration::from_millis(10)).unwrap();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].id, id);
        assert_eq!(fired[0].deadline, Timestamp::from_millis(5));
        // Already consumed.
        assert!(clock.advance(Duration::from_millis(10)).unwrap().is_empty());
    }

    #[test]
    fn equal_deadlines_fire_in_registration_order() {
        let clock = VirtualClock::new_virtual();
        let a = clock.register_timer(Timestamp::from_millis(3));
        let b = clock.register_timer(Timestamp::from_millis(3));
        let fired = clock.advance(Duration::from_millis(5)).unwrap();
        assert_eq!(fired.iter().map(|f| f.id).collect::<Vec<_>>(), vec![a, b]);
    }

    #[test]
    fn zero_advance_changes_nothing() {
        let clock = VirtualClock::new_virtual();
        clock.register_timer(Timestamp::from_millis(1));
        let fired = clock.advance(Duration::ZERO).unwrap();
        assert!(fired.is_empty());
        assert_eq!(clock.now(), Timestamp::ZERO);
    }

    #[test]
    fn realtime_mode_rejects_advance() {
        let clock = VirtualClock::new_realtime();
        assert!(matches!(
            clock.advance(Duration::from_millis(1)),
            Err(ClockError::RealtimeMode)
        ));
    }

    #[test]
    fn cancel_removes_timer() {
        let clock = VirtualClock::new_virtual();
        let id = clock.register_timer(Timestamp::from_millis(1));
        clock.cancel_timer(id);
        assert!(clock.advance(Duration::from_millis(5)).unwrap().is_empty());
    }

    #[test]
    fn virtual_now_tracks_advances_exactly() {
        let clock = VirtualClock::new_virtual();
        clock.advance(Duration::from_micros(2500)).unwrap();
        clock.advance(Duration::from_micros(7500)).unwrap();
        assert_eq!(clock.now(), Timestamp::from_millis(10));
    }
}
