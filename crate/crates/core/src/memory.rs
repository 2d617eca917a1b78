//! Per-question store of high-reward trials.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::reward::Trial;

pub const DEFAULT_CAPACITY: usize = 10;

/// Bounded per-question buffer. A trial is admitted when its adaptive reward
/// strictly beats the greedy baseline and its token sequence is not already
/// stored; once full, a uniformly chosen stored trial is overwritten.
#[derive(Clone, Debug)]
pub struct MemoryBuffer {
    capacity: usize,
    store: BTreeMap<String, Vec<Trial>>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    capacity: usize,
    store: BTreeMap<String, Vec<Trial>>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        Self {
            capacity,
            store: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn maybe_admit(&mut self, question: &str, trial: Trial, r_greedy: f64) -> bool {
        if trial.adaptive_reward <= r_greedy {
            return false;
        }
        let slots = self.store.entry(question.to_owned()).or_default();
        if slots.iter().any(|t| t.tokens == trial.tokens) {
            return false;
        }
        if slots.len() < self.capacity {
            slots.push(trial);
        } else {
            let victim = self.rng.gen_range(0..slots.len());
            slots[victim] = trial;
        }
        true
    }

    pub fn trials_for(&self, question: &str) -> &[Trial] {
        self.store.get(question).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let snap = Snapshot {
            capacity: self.capacity,
            store: self.store.clone(),
        };
        let json = serde_json::to_string(&snap)?;
        std::fs::write(path, json)
    }

    /// Restores stored trials; the replacement RNG is reseeded.
    pub fn load(path: &Path, seed: u64) -> std::io::Result<Self> {
        let snap: Snapshot = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut buf = Self::new(snap.capacity.max(1), seed);
        buf.store = snap.store;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: usize, reward: f64) -> Trial {
        Trial {
            tokens: vec![format!("t{id}"), "EOQ".into()],
            adaptive_reward: reward,
            log_prob: -1.0,
        }
    }

    #[test]
    fn admission_threshold_is_strict() {
        let mut m = MemoryBuffer::new(3, 0);
        assert!(m.maybe_admit("q", trial(0, 0.9), 0.5));
        assert_eq!(m.trials_for("q").len(), 1);
        assert!(!m.maybe_admit("q", trial(1, 0.5), 0.5));
        assert!(!m.maybe_admit("q", trial(0, 0.9), 0.5), "duplicate tokens");
        assert!(m.trials_for("unseen").is_empty());
        assert_eq!(m.trials_for("q")[0], trial(0, 0.9));
    }

    #[test]
    fn full_buffer_replaces_exactly_one() {
        let c = 4;
        let mut m = MemoryBuffer::new(c, 11);
        for i in 0..c {
            assert!(m.maybe_admit("q", trial(i, 1.0), 0.0));
        }
        let before: Vec<_> = m.trials_for("q").to_vec();
        assert!(m.maybe_admit("q", trial(99, 1.0), 0.0));
        let after = m.trials_for("q");
        assert_eq!(after.len(), c);
        let gone = before.iter().filter(|t| !after.contains(t)).count();
        assert_eq!(gone, 1);
        assert!(after.contains(&trial(99, 1.0)));
    }

    #[test]
    fn more_admits_than_capacity() {
        let (c, k) = (5, 7);
        let mut m = MemoryBuffer::new(c, 3);
        let admitted: Vec<_> = (0..c + k).map(|i| trial(i, 1.0)).collect();
        for t in &admitted {
            m.maybe_admit("q", t.clone(), 0.0);
        }
        let stored = m.trials_for("q");
        assert_eq!(stored.len(), c);
        assert!(stored.iter().all(|t| admitted.contains(t)));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut m = MemoryBuffer::new(2, 0);
        m.maybe_admit("a", trial(1, 0.7), 0.1);
        m.maybe_admit("b", trial(2, 0.8), 0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.json");
        m.save(&path).unwrap();
        let r = MemoryBuffer::load(&path, 0).unwrap();
        assert_eq!(r.capacity(), 2);
        assert_eq!(r.trials_for("a"), m.trials_for("a"));
        assert_eq!(r.trials_for("b"), m.trials_for("b"));
    }
}
