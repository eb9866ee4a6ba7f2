//! Shared HTTP plumbing: retry schedule, per-endpoint rate limiting and a
//! blocking request helper that applies both.

use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Fast schedule for tests against local mock servers.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::from_millis(1),
            factor: 2.0,
            max_delay: Duration::from_millis(10),
        }
    }

    /// Delay before retry `n` (1-based: the wait after the n-th failure).
    pub fn delay(&self, n: u32) -> Duration {
        let exp = self.factor.max(1.0).powi(n.saturating_sub(1) as i32);
        let d = self.base_delay.as_secs_f64() * exp;
        Duration::from_secs_f64(d.min(self.max_delay.as_secs_f64()))
    }

    /// The full schedule of waits between attempts (`max_attempts - 1` values).
    pub fn delays(&self) -> impl Iterator<Item = Duration> + '_ {
        (1..self.max_attempts).map(|n| self.delay(n))
    }
}

/// Token bucket: `capacity` burst, refilled at `per_second`.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_second: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        RateLimiter {
            capacity,
            per_second,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, 1.0)
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        if self.per_second.is_infinite() {
            return;
        }
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.per_second).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Outcome of a request after the retry loop.
#[derive(Debug)]
pub enum Outcome {
    Done(HttpResponse),
    /// Every attempt was answered with 429 (or an equivalent throttle reply).
    RateLimited { attempts: u32 },
    /// Every attempt failed with a transport error or 5xx; the last is kept.
    Failed { attempts: u32, last: String },
}

pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Runs `send` under the limiter and retry policy. `throttled` lets callers
/// flag 200 responses that are really throttle notices (the explorer API
/// does this).
pub fn with_retries(
    policy: &RetryPolicy,
    limiter: &RateLimiter,
    mut send: impl FnMut() -> Result<HttpResponse, String>,
    throttled: impl Fn(&HttpResponse) -> bool,
    mut on_attempt: impl FnMut(u32),
) -> Outcome {
    let attempts = policy.max_attempts.max(1);
    let mut last_error = String::new();
    let mut all_throttled = true;
    for attempt in 1..=attempts {
        limiter.acquire();
        on_attempt(attempt);
        match send() {
            Ok(resp) if resp.status == 429 || throttled(&resp) => {
                last_error = format!("HTTP {} (throttled)", resp.status);
            }
            Ok(resp) if is_retryable(resp.status) => {
                all_throttled = false;
                last_error = format!("HTTP {}: {}", resp.status, truncate(&resp.body, 200));
            }
            Ok(resp) => return Outcome::Done(resp),
            Err(e) => {
                all_throttled = false;
                last_error = e;
            }
        }
        if attempt < attempts {
            let d = policy.delay(attempt);
            log::debug!("attempt {attempt}/{attempts} failed ({last_error}); retrying in {d:?}");
            std::thread::sleep(d);
        }
    }
    if all_throttled {
        Outcome::RateLimited { attempts }
    } else {
        Outcome::Failed { attempts, last: last_error }
    }
}

pub fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub fn read_response(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<HttpResponse, String> {
    let mut resp = resp.map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    Ok(HttpResponse { status, body })
}
