//! Adaptive answer reward, curriculum-scheduled memory bonus, and their sum.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::Answer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub epsilon: f64,
    /// Weight granted for a correctly typed answer.
    pub w1: f64,
    /// Weight on answer similarity.
    pub w2: f64,
    /// Scale of the memory bonus.
    pub alpha: f64,
    /// Novelty offset.
    pub beta: f64,
    /// Curriculum pace.
    pub eta: f64,
    /// Initial proximity weight.
    pub lambda0: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.001,
            w1: 0.2,
            w2: 0.8,
            alpha: 0.1,
            beta: 1.0,
            eta: 0.08,
            lambda0: 0.1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = [
            ("w1", self.w1),
            ("w2", self.w2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("lambda0", self.lambda0),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.epsilon <= 0.0 {
            return Err("epsilon must be positive".into());
        }
        if (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(format!("w1 + w2 = {} must equal 1", self.w1 + self.w2));
        }
        Ok(())
    }
}

/// A decoded token sequence with its rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub tokens: Vec<String>,
    pub adaptive_reward: f64,
    pub log_prob: f64,
}

impl Trial {
    pub fn new(tokens: Vec<String>, log_prob: f64) -> Self {
        Self {
            tokens,
            adaptive_reward: 0.0,
            log_prob,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("answer variants differ")]
pub struct TypeMismatch;

/// Levenshtein distance over arbitrary item sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `1 - lev(g, o) / max(|g|, |o|)`; two empty lists are identical.
pub fn edit_similarity<T: PartialEq>(gold: &[T], out: &[T]) -> f64 {
    let longest = gold.len().max(out.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(gold, out) as f64 / longest as f64
}

pub fn f1<T: Ord>(gold: &BTreeSet<T>, out: &BTreeSet<T>) -> f64 {
    if gold.is_empty() && out.is_empty() {
        return 1.0;
    }
    let hit = gold.intersection(out).count();
    if hit == 0 {
        return 0.0;
    }
    let precision = hit as f64 / out.len() as f64;
    let recall = hit as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn sim(out: &Answer, gold: &Answer, cfg: &RewardConfig) -> Result<f64, TypeMismatch> {
    match (out, gold) {
        (Answer::Number(o), Answer::Number(g)) => {
            let (o, g) = (*o as f64, *g as f64);
            Ok(1.0 - (g - o).abs() / (g + o + cfg.epsilon).abs())
        }
        (Answer::Booleans(o), Answer::Booleans(g)) => Ok(edit_similarity(g, o)),
        (Answer::EntitySet(o), Answer::EntitySet(g)) => Ok(f1(g, o)),
        _ => Err(TypeMismatch),
    }
}

/// Adaptive reward: zero for failed execution or a wrong answer type, otherwise
/// `w1 + w2 * sim`.
pub fn arf<E>(out: &Result<Answer, E>, gold: &Answer, cfg: &RewardConfig) -> f64 {
    match out {
        Ok(a) => match sim(a, gold, cfg) {
            Ok(s) => cfg.w1 + cfg.w2 * s,
            Err(TypeMismatch) => 0.0,
        },
        Err(_) => 0.0,
    }
}

/// Proximity weight after `epoch` completed epochs: `min(1, (1 + eta)^epoch * lambda0)`.
pub fn lambda_schedule(epoch: u32, cfg: &RewardConfig) -> f64 {
    ((1.0 + cfg.eta).powi(epoch as i32) * cfg.lambda0).min(1.0)
}

pub fn crb_with_lambda<S: AsRef<str> + PartialEq>(
    tokens: &[S],
    memory: &[Trial],
    lambda: f64,
    cfg: &RewardConfig,
) -> f64 {
    if memory.is_empty() {
        return 0.0;
    }
    let sims: Vec<f64> = memory
        .iter()
        .map(|m| {
            let stored: Vec<&str> = m.tokens.iter().map(String::as_str).collect();
            let ours: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
            edit_similarity(&ours, &stored)
        })
        .collect();
    let prox = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let novel = cfg.beta - sims.iter().sum::<f64>() / sims.len() as f64;
    cfg.alpha * (lambda * prox + (1.0 - lambda) * novel)
}

/// Curriculum-guided bonus of a trial against the stored trials of its question.
pub fn crb<S: AsRef<str> + PartialEq>(
    tokens: &[S],
    memory: &[Trial],
    epoch: u32,
    cfg: &RewardConfig,
) -> f64 {
    crb_with_lambda(tokens, memory, lambda_schedule(epoch, cfg), cfg)
}

pub fn cumulative_reward<S: AsRef<str> + PartialEq, E>(
    tokens: &[S],
    out: &Result<Answer, E>,
    gold: &Answer,
    memory: &[Trial],
    epoch: u32,
    cfg: &RewardConfig,
) -> f64 {
    crb(tokens, memory, epoch, cfg) + arf(out, gold, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::EntityId;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_set(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    fn ents(ids: &[u32]) -> Answer {
        Answer::EntitySet(ids.iter().map(|&i| EntityId(i)).collect())
    }

    /// Full-matrix recursion-style DP, kept separate from the rolling-row version.
    fn levenshtein_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
        let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in m.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            m[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                m[i][j] = (m[i - 1][j] + 1)
                    .min(m[i][j - 1] + 1)
                    .min(m[i - 1][j - 1] + cost);
            }
        }
        m[a.len()][b.len()]
    }

    #[test]
    fn sim_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(
            sim(&Answer::Number(5), &Answer::Number(5), &cfg).unwrap(),
            1.0
        );
        assert_eq!(
            sim(
                &Answer::Booleans(vec![true, false]),
                &Answer::Booleans(vec![true, true]),
                &cfg
            )
            .unwrap(),
            0.5
        );
        let s = sim(&ents(&[1, 2]), &ents(&[1, 2, 3, 4]), &cfg).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            sim(&Answer::Number(1), &ents(&[1]), &cfg),
            Err(TypeMismatch)
        );
        let s = sim(&Answer::Number(3), &Answer::Number(5), &cfg).unwrap();
        assert!((s - (1.0 - 2.0 / 8.001)).abs() < 1e-15);
    }

    #[test]
    fn edit_similarity_examples() {
        assert_eq!(edit_similarity(&[true], &[true]), 1.0);
        assert!((edit_similarity(&[true, false, true], &[false]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(edit_similarity::<bool>(&[], &[true]), 0.0);
        assert_eq!(edit_similarity::<bool>(&[], &[]), 1.0);
        assert_eq!(levenshtein_oracle(&[true, false, true], &[false]), 2);
    }

    #[test]
    fn f1_examples() {
        let s = |v: &[u32]| to_set(v);
        assert_eq!(f1(&s(&[1, 2]), &s(&[1, 2])), 1.0);
        assert_eq!(f1(&s(&[1, 2]), &s(&[3])), 0.0);
        assert!((f1(&s(&[1, 2, 3, 4]), &s(&[1, 2])) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1(&s(&[]), &s(&[])), 1.0);
        assert_eq!(f1(&s(&[1]), &s(&[])), 0.0);
    }

    #[test]
    fn arf_examples() {
        let cfg = RewardConfig::default();
        let gold = ents(&[1, 2]);
        assert_eq!(arf::<()>(&Ok(ents(&[1, 2])), &gold, &cfg), 1.0);
        assert!((arf::<()>(&Ok(ents(&[9])), &gold, &cfg) - 0.2).abs() < 1e-15);
        assert_eq!(arf(&Err("semantic"), &gold, &cfg), 0.0);
        assert_eq!(arf::<()>(&Ok(Answer::Number(2)), &gold, &cfg), 0.0);
    }

    #[test]
    fn lambda_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(lambda_schedule(0, &cfg), 0.1);
        assert!((lambda_schedule(1, &cfg) - 0.108).abs() < 1e-15);
        // 1.08^30 = 10.0627 > 10
        assert!(1.08f64.powi(30) > 10.0);
        assert_eq!(lambda_schedule(30, &cfg), 1.0);
        let mut prev = 0.0;
        for g in 0..100 {
            let l = lambda_schedule(g, &cfg);
            assert!(l >= prev && l <= 1.0);
            prev = l;
        }
    }

    #[test]
    fn crb_examples() {
        let cfg = RewardConfig::default();
        let t = |v: &[&str]| Trial::new(v.iter().map(|s| s.to_string()).collect(), 0.0);
        let stored = t(&["Select", "<E1>", "<P1>", "<T1>", "EOQ"]);
        assert_eq!(crb(&stored.tokens, &[], 0, &cfg), 0.0);
        let same = crb(&stored.tokens, std::slice::from_ref(&stored), 50, &cfg);
        assert!((same - 0.1).abs() < 1e-15);
        let disjoint = ["Count", "ArgMax", "GetKeys", "ArgMin", "Bool"];
        let d = crb(&disjoint, std::slice::from_ref(&stored), 0, &cfg);
        assert!((d - 0.09).abs() < 1e-15, "{d}");
    }

    #[test]
    fn cumulative_examples() {
        let cfg = RewardConfig::default();
        let gold = ents(&[1]);
        let toks = ["Select", "<E1>", "<P1>", "<T1>", "EOQ"];
        assert_eq!(
            cumulative_reward::<_, ()>(&toks, &Ok(ents(&[1])), &gold, &[], 0, &cfg),
            1.0
        );
        assert_eq!(cumulative_reward(&toks, &Err(()), &gold, &[], 0, &cfg), 0.0);
        let mem = [Trial::new(
            toks.iter().map(|s| s.to_string()).collect(),
            0.0,
        )];
        let r = cumulative_reward(&toks, &Err(()), &gold, &mem, 40, &cfg);
        assert!((r - 0.1).abs() < 1e-15);
    }

    #[test]
    fn edit_similarity_matches_dp_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let la = rng.gen_range(0..12);
            let lb = rng.gen_range(0..12);
            let a: Vec<u8> = (0..la).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b));
        }
    }

    proptest! {
        #[test]
        fn reward_ranges(o in proptest::collection::btree_set(0u32..8, 0..6),
                         g in proptest::collection::btree_set(0u32..8, 0..6),
                         n in 0i64..50, m in 0i64..50,
                         bo in proptest::collection::vec(any::<bool>(), 0..5),
                         bg in proptest::collection::vec(any::<bool>(), 1..5)) {
            let cfg = RewardConfig::default();
            let so = Answer::EntitySet(o.iter().map(|&i| EntityId(i)).collect());
            let sg = Answer::EntitySet(g.iter().map(|&i| EntityId(i)).collect());
            for (a, b) in [(so.clone(), sg.clone()), (Answer::Number(n), Answer::Number(m)),
                           (Answer::Booleans(bo.clone()), Answer::Booleans(bg.clone()))] {
                let r = arf::<()>(&Ok(a.clone()), &b, &cfg);
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert_eq!(sim(&a, &a, &cfg).unwrap(), 1.0);
                let mem = [Trial::new(vec!["EOQ".into()], 0.0)];
                let c = cumulative_reward::<_, ()>(&["Count", "EOQ"], &Ok(a.clone()), &b, &mem, 3, &cfg);
                prop_assert!(c >= 0.0 && c <= 1.0 + cfg.alpha * cfg.beta.max(1.0) + 1e-12);
            }
            prop_assert_eq!(sim(&so, &sg, &cfg).unwrap(), sim(&sg, &so, &cfg).unwrap());
            let (a, b) = (Answer::Booleans(bo), Answer::Booleans(bg));
            prop_assert_eq!(sim(&a, &b, &cfg).unwrap(), sim(&b, &a, &cfg).unwrap());
        }

        #[test]
        fn crb_is_continuous_in_lambda(l in 0.0f64..1.0, d in 0.0f64..1e-6) {
            let cfg = RewardConfig::default();
            let mem = [Trial::new(vec!["Count".into(), "EOQ".into()], 0.0),
                       Trial::new(vec!["ArgMax".into(), "EOQ".into()], 0.0)];
            let t = ["Count", "ArgMin", "EOQ"];
            let a = crb_with_lambda(&t, &mem, l, &cfg);
            let b = crb_with_lambda(&t, &mem, l + d, &cfg);
            prop_assert!((a - b).abs() <= cfg.alpha * 2.0 * d + 1e-15);
        }
    }
}
