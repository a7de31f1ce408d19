//! Wall-clock adapter for the replay and bench paths.

use std::time::Instant;

use stiffsense_core::pipeline::MonotonicClock;

#[derive(Debug, Clone, Copy, Default)]
pub struct StdClock;

impl MonotonicClock for StdClock {
    type Instant = Instant;

    fn now(&self) -> Instant {
        Instant::now()
    }

    fn elapsed_ms(&self, since: Instant) -> f64 {
        since.elapsed().as_secs_f64() * 1e3
    }
}
