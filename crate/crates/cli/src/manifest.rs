use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config: Value,
    pub graph_source: Value,
    /// `sha256("blob <len>\0" ‖ bytes)` of the graph JSON, as git hashes objects.
    pub input_hash: String,
    pub timings: Timings,
}

#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub total_ms: f64,
    pub phases_ms: BTreeMap<String, f64>,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Wall-clock stopwatch with named phases.
pub struct Clock {
    start: Instant,
    lap: Instant,
    timings: Timings,
}

impl Clock {
    pub fn start() -> Self {
        let now = Instant::now();
        Clock {
            start: now,
            lap: now,
            timings: Timings::default(),
        }
    }

    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        let ms = (now - self.lap).as_secs_f64() * 1e3;
        *self.timings.phases_ms.entry(name.to_string()).or_default() += ms;
        self.lap = now;
    }

    pub fn finish(mut self) -> Timings {
        self.timings.total_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.timings
    }
}
