//! Token-bucket admission control for request rate limiting.

use super::clock::Clock;
use std::sync::{Arc, Mutex};
use std::time::Duration;

struct BucketState {
    tokens: f64,
    last_refill: Duration,
}

/// Classic token bucket: refills at `rate` tokens per second with burst
/// capacity `ceil(rate)`, starting full. `admit` blocks (via the injected
/// clock) until a token is available, so the long-run admitted rate never
/// exceeds the configured rate.
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    clock: Arc<dyn Clock>,
    state: Mutex<BucketState>,
}

impl TokenBucket {
    pub fn new(rate: f64, clock: Arc<dyn Clock>) -> TokenBucket {
        assert!(rate > 0.0, "rate limit must be positive");
        let capacity = rate.ceil();
        let now = clock.now();
        TokenBucket {
            rate,
            capacity,
            clock,
            state: Mutex::new(BucketState { tokens: capacity, last_refill: now }),
        }
    }

    /// Blocks until one token is admitted.
    pub fn admit(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock poisoned");
                let now = self.clock.now();
                if now > state.last_refill {
                    let elapsed = (now - state.last_refill).as_secs_f64();
                    state.tokens = (state.tokens + elapsed * self.rate).min(self.capacity);
                    state.last_refill = now;
                }
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.rate)
            };
            self.clock.sleep(wait);
        }
    }

    /// True when a token is available right now (non-blocking probe).
    pub fn would_admit(&self) -> bool {
        let mut state = self.state.lock().expect("bucket lock poisoned");
        let now = self.clock.now();
        if now > state.last_refill {
            let elapsed = (now - state.last_refill).as_secs_f64();
            state.tokens = (state.tokens + elapsed * self.rate).min(self.capacity);
            state.last_refill = now;
        }
        state.tokens >= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serving::clock::VirtualClock;

    #[test]
    fn burst_capacity_admits_without_delay() {
        let clock = Arc::new(VirtualClock::new());
        let bucket = TokenBucket::new(10.0, clock.clone());
        for _ in 0..10 {
            bucket.admit();
        }
        assert_eq!(clock.elapsed(), Duration::ZERO);
    }

    #[test]
    fn hundred_requests_at_ten_per_second_take_nine_seconds() {
        let clock = Arc::new(VirtualClock::new());
        let bucket = TokenBucket::new(10.0, clock.clone());
        for _ in 0..100 {
            bucket.admit();
        }
        // 10-token burst, then 90 refills at 0.1 s each.
        let elapsed = clock.elapsed().as_secs_f64();
        assert!((8.1..=9.9).contains(&elapsed), "elapsed {elapsed}");
    }

    #[test]
    fn fractional_rates_refill_slowly() {
        let clock = Arc::new(VirtualClock::new());
        let bucket = TokenBucket::new(0.5, clock.clone());
        bucket.admit();
        bucket.admit();
        // Capacity ceil(0.5) = 1, so the second admit waits 2 s.
        assert!((clock.elapsed().as_secs_f64() - 2.0).abs() < 1e-9);
    }
}
