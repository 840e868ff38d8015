//! Token-bucket call ceiling with a swappable clock.
//!
//! The bucket holds at most `capacity` tokens and refills continuously at
//! `refill_per_sec`. Over any window of length T the limiter admits at
//! most `capacity + refill_per_sec * T` calls. Tests drive it with a
//! virtual clock so the contract is checked without real sleeping.

use std::sync::Mutex;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, d: Duration);
}

/// Wall clock; `sleep` really sleeps.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly.
pub struct TestClock {
    base: Instant,
    offset: Mutex<Duration>,
}

impl TestClock {
    pub fn new() -> TestClock {
        TestClock {
            base: Instant::now(),
            offset: Mutex::new(Duration::ZERO),
        }
    }

    pub fn advance(&self, d: Duration) {
        *self.offset.lock().unwrap() += d;
    }

    pub fn elapsed(&self) -> Duration {
        *self.offset.lock().unwrap()
    }
}

impl Default for TestClock {
    fn default() -> Self {
        TestClock::new()
    }
}

impl Clock for TestClock {
    fn now(&self) -> Instant {
        self.base + *self.offset.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

struct BucketState {
    tokens: f64,
    last: Instant,
}

pub struct RateLimiter {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<Option<BucketState>>,
}

impl RateLimiter {
    pub fn new(capacity: f64, refill_per_sec: f64) -> RateLimiter {
        assert!(capacity >= 1.0 && refill_per_sec > 0.0);
        RateLimiter {
            capacity,
            refill_per_sec,
            state: Mutex::new(None),
        }
    }

    /// Ceiling of `n` calls per minute: burst capacity `n`, refill `n`/60
    /// per second.
    pub fn per_minute(n: u32) -> RateLimiter {
        RateLimiter::new(n as f64, n as f64 / 60.0)
    }

    fn refill(&self, state: &mut BucketState, now: Instant) {
        let elapsed = now.saturating_duration_since(state.last).as_secs_f64();
        state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        state.last = now;
    }

    /// Take a token if one is available right now.
    pub fn try_acquire(&self, clock: &dyn Clock) -> bool {
        let mut guard = self.state.lock().unwrap();
        let now = clock.now();
        let state = guard.get_or_insert_with(|| BucketState {
            tokens: self.capacity,
            last: now,
        });
        self.refill(state, now);
        if state.tokens >= 1.0 {
            state.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Block (via `clock.sleep`) until a token is available, then take it.
    pub fn acquire(&self, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut guard = self.state.lock().unwrap();
                let now = clock.now();
                let state = guard.get_or_insert_with(|| BucketState {
                    tokens: self.capacity,
                    last: now,
                });
                self.refill(state, now);
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_ceiling_holds() {
        // 60/min ceiling: over a 60 s window at most burst 60 + refill 60.
        let limiter = RateLimiter::per_minute(60);
        let clock = TestClock::new();
        let mut issued = 0;
        while clock.elapsed() <= Duration::from_secs(60) {
            if limiter.try_acquire(&clock) {
                issued += 1;
            } else {
                clock.advance(Duration::from_millis(100));
            }
        }
        assert!(issued <= 121, "issued {issued} calls in one minute window");
        assert!(issued >= 100, "limiter too strict: {issued}");
    }

    #[test]
    fn acquire_blocks_until_refill() {
        let limiter = RateLimiter::new(1.0, 1.0);
        let clock = TestClock::new();
        limiter.acquire(&clock);
        let before = clock.elapsed();
        limiter.acquire(&clock);
        let waited = clock.elapsed() - before;
        assert!(waited >= Duration::from_millis(990), "waited {waited:?}");
    }
}
