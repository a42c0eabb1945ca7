use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};

use crate::twin::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// Discrete simulation clock: `base + step × step_length`.
#[derive(Debug, Clone)]
pub struct SimClock {
    base: Timestamp,
    step_seconds: i64,
    step: Arc<AtomicI64>,
}

impl SimClock {
    pub fn new(base: Timestamp, step_seconds: i64) -> Self {
        Self {
            base,
            step_seconds,
            step: Arc::new(AtomicI64::new(0)),
        }
    }

    /// 2024-04-01T06:00:00Z, one-hour steps.
    pub fn standard() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 4, 1, 6, 0, 0).unwrap(), 3600)
    }

    pub fn step(&self) -> i64 {
        self.step.load(Ordering::SeqCst)
    }

    /// Advances one step and returns the new step number.
    pub fn advance(&self) -> i64 {
        self.step.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn at_step(&self, step: i64) -> Timestamp {
        self.base + Duration::seconds(step * self.step_seconds)
    }
}

impl Clock for SimClock {
    fn now(&self) -> Timestamp {
        self.at_step(self.step())
    }
}
