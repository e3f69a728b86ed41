//! Per-key token buckets refilled continuously at `per_minute / 60` tokens
//! per second.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};

#[derive(Debug, Clone, Copy)]
struct Bucket {
    tokens: f64,
    last: DateTime<Utc>,
}

#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        Self {
            per_minute: per_minute.max(1),
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub fn per_minute(&self) -> u32 {
        self.per_minute
    }

    /// Takes one token for `key` at `now`. A clock that steps backwards
    /// refills nothing.
    pub fn try_acquire(&self, key: &str, now: DateTime<Utc>) -> bool {
        let cap = self.per_minute as f64;
        let mut buckets = self.buckets.lock().unwrap_or_else(|e| e.into_inner());
        let b = buckets
            .entry(key.to_string())
            .or_insert(Bucket { tokens: cap, last: now });
        let elapsed = (now - b.last).num_milliseconds().max(0) as f64 / 1000.0;
        b.tokens = (b.tokens + elapsed * cap / 60.0).min(cap);
        if now > b.last {
            b.last = now;
        }
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use chrono::Duration;

    use super::*;

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    #[test]
    fn budget_boundary() {
        let rl = RateLimiter::new(100);
        let granted = (0..101).filter(|_| rl.try_acquire("k", t0())).count();
        assert_eq!(granted, 100);
        assert!(!rl.try_acquire("k", t0()));
        assert!(rl.try_acquire("other", t0()));
    }

    #[test]
    fn refills_with_time() {
        let rl = RateLimiter::new(60);
        for _ in 0..60 {
            assert!(rl.try_acquire("k", t0()));
        }
        assert!(!rl.try_acquire("k", t0() + Duration::milliseconds(500)));
        assert!(rl.try_acquire("k", t0() + Duration::seconds(1)));
        assert!(!rl.try_acquire("k", t0() + Duration::seconds(1)));
        // a full minute restores the whole budget and no more
        let later = t0() + Duration::minutes(10);
        assert_eq!((0..100).filter(|_| rl.try_acquire("k", later)).count(), 60);
    }

    #[test]
    fn backwards_clock_does_not_refill() {
        let rl = RateLimiter::new(1);
        assert!(rl.try_acquire("k", t0()));
        assert!(!rl.try_acquire("k", t0() - Duration::hours(1)));
        assert!(!rl.try_acquire("k", t0()));
    }
}
