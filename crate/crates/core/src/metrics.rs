//! Process-wide serving counters.

use std::fmt::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
pub struct Metrics {
    /// Candidate generations issued against the remote generator (one per
    /// cold cache key, however many HTTP attempts it took).
    pub remote_calls: AtomicU64,
    /// Individual HTTP requests, retries included.
    pub remote_requests: AtomicU64,
    pub cache_hits_l1: AtomicU64,
    pub cache_hits_l2: AtomicU64,
    pub fallbacks: AtomicU64,
    pub rate_limit_errors: AtomicU64,
    pub selections_total: AtomicU64,
    pub selections_generated: AtomicU64,
    pub selections_rule: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub remote_calls: u64,
    pub remote_requests: u64,
    pub cache_hits_l1: u64,
    pub cache_hits_l2: u64,
    pub fallbacks: u64,
    pub rate_limit_errors: u64,
    pub selections_total: u64,
    pub selections_generated: u64,
    pub selections_rule: u64,
}

impl Metrics {
    pub fn incr(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        MetricsSnapshot {
            remote_calls: get(&self.remote_calls),
            remote_requests: get(&self.remote_requests),
            cache_hits_l1: get(&self.cache_hits_l1),
            cache_hits_l2: get(&self.cache_hits_l2),
            fallbacks: get(&self.fallbacks),
            rate_limit_errors: get(&self.rate_limit_errors),
            selections_total: get(&self.selections_total),
            selections_generated: get(&self.selections_generated),
            selections_rule: get(&self.selections_rule),
        }
    }
}

impl MetricsSnapshot {
    /// `name value` lines.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (name, value) in [
            ("remote_calls", self.remote_calls),
            ("remote_requests", self.remote_requests),
            ("cache_hits_l1", self.cache_hits_l1),
            ("cache_hits_l2", self.cache_hits_l2),
            ("fallbacks", self.fallbacks),
            ("rate_limit_errors", self.rate_limit_errors),
            ("selections_total", self.selections_total),
            ("selections_generated", self.selections_generated),
            ("selections_rule", self.selections_rule),
        ] {
            let _ = writeln!(out, "{name} {value}");
        }
        out
    }

    pub fn parse_text(text: &str) -> Option<MetricsSnapshot> {
        let mut s = MetricsSnapshot::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, value) = line.split_once(' ')?;
            let value: u64 = value.trim().parse().ok()?;
            match name {
                "remote_calls" => s.remote_calls = value,
                "remote_requests" => s.remote_requests = value,
                "cache_hits_l1" => s.cache_hits_l1 = value,
                "cache_hits_l2" => s.cache_hits_l2 = value,
                "fallbacks" => s.fallbacks = value,
                "rate_limit_errors" => s.rate_limit_errors = value,
                "selections_total" => s.selections_total = value,
                "selections_generated" => s.selections_generated = value,
                "selections_rule" => s.selections_rule = value,
                _ => {}
            }
        }
        Some(s)
    }
}
