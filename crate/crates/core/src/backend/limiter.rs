use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        TokenBucket {
            capacity,
            per_second: f64::from(per_minute.max(1)) / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes a token at `now`, or returns how long to wait for one.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("limiter lock");
        let (tokens, last) = &mut *state;
        let elapsed = now.saturating_duration_since(*last).as_secs_f64();
        *tokens = (*tokens + elapsed * self.per_second).min(self.capacity);
        *last = now.max(*last);
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - *tokens) / self.per_second))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut current = self.current.lock().expect("in-flight lock");
        while *current >= self.max {
            current = self.freed.wait(current).expect("in-flight lock");
        }
        *current += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().expect("in-flight lock")
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.current.lock().expect("in-flight lock") -= 1;
        self.limiter.freed.notify_one();
    }
}
