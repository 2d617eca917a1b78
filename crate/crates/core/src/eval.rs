//! Answer scoring and per-category macro / micro reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answer::Answer;
use crate::dataset::{Category, Example};
use crate::dsl::{parse_tokens, MaskTable};
use crate::executor::{execute, ExecutorConfig};
use crate::kb::KnowledgeBase;
use crate::policy::Policy;
use crate::reward::{arf, f1, RewardConfig};

/// Parses, grounds and executes a decoded token sequence.
pub fn run_tokens<S: AsRef<str>>(
    tokens: &[S],
    table: &MaskTable,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> Result<Answer, String> {
    let seq = parse_tokens(tokens).map_err(|e| e.to_string())?;
    let grounded = table.unmask(&seq).map_err(|e| e.to_string())?;
    execute(&grounded, kb, cfg).map_err(|e| e.to_string())
}

/// Exact-match accuracy for the accuracy categories, set F1 otherwise.
pub fn score_example<E>(predicted: &Result<Answer, E>, gold: &Answer, category: Category) -> f64 {
    let Ok(out) = predicted else {
        return 0.0;
    };
    if !category.uses_accuracy() {
        if let (Answer::EntitySet(o), Answer::EntitySet(g)) = (out, gold) {
            return f1(g, o);
        }
    }
    if out == gold {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<Category, CategoryScore>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

impl EvalReport {
    pub fn from_scores(scores: impl IntoIterator<Item = (Category, f64)>) -> Self {
        let mut sums: BTreeMap<Category, (usize, f64)> = BTreeMap::new();
        for (c, s) in scores {
            let e = sums.entry(c).or_default();
            e.0 += 1;
            e.1 += s;
        }
        let per_category: BTreeMap<Category, CategoryScore> = sums
            .into_iter()
            .map(|(c, (n, s))| (c, CategoryScore { n, mean: s / n as f64 }))
            .collect();
        let (macro_f1, micro_f1) = Self::aggregates(&per_category);
        Self {
            per_category,
            macro_f1,
            micro_f1,
        }
    }

    fn aggregates(per: &BTreeMap<Category, CategoryScore>) -> (f64, f64) {
        if per.is_empty() {
            return (0.0, 0.0);
        }
        let macro_f1 = per.values().map(|c| c.mean).sum::<f64>() / per.len() as f64;
        let n: usize = per.values().map(|c| c.n).sum();
        let micro_f1 = per.values().map(|c| c.n as f64 * c.mean).sum::<f64>() / n as f64;
        (macro_f1, micro_f1)
    }

    /// Whether macro and micro agree with the per-category entries.
    pub fn identities_hold(&self) -> bool {
        let (ma, mi) = Self::aggregates(&self.per_category);
        (ma - self.macro_f1).abs() < 1e-12 && (mi - self.micro_f1).abs() < 1e-12
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>6} {:>8}", "category", "n", "score");
        for (c, v) in &self.per_category {
            let _ = writeln!(s, "{:<20} {:>6} {:>8.4}", c.name(), v.n, v.mean);
        }
        let _ = writeln!(s, "{:<20} {:>6} {:>8.4}", "macro", "", self.macro_f1);
        let _ = writeln!(s, "{:<20} {:>6} {:>8.4}", "micro", "", self.micro_f1);
        s
    }
}

/// Where predicted programs come from.
#[derive(Clone, Copy)]
pub enum EvalMode<'a> {
    /// Top beam of the policy.
    Policy {
        policy: &'a Policy,
        beam_width: usize,
        max_len: usize,
    },
    /// First pseudo-gold program of each example.
    Oracle,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub question_id: String,
    pub category: Category,
    pub program: Option<String>,
    pub answer: Result<crate::answer::AnswerSpec, String>,
    pub score: f64,
}

/// Highest-scoring beam, as tokens.
pub fn top_beam(
    policy: &Policy,
    ex: &Example,
    beam_width: usize,
    max_len: usize,
) -> Option<Vec<String>> {
    let enc = policy.encode(&ex.tokens).ok()?;
    policy
        .beam_search(&enc, 1, beam_width, max_len)
        .into_iter()
        .next()
        .map(|t| t.tokens)
}

fn predict_one(
    mode: EvalMode<'_>,
    ex: &Example,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> (Option<Vec<String>>, Result<Answer, String>) {
    let tokens = match mode {
        EvalMode::Policy {
            policy,
            beam_width,
            max_len,
        } => top_beam(policy, ex, beam_width, max_len),
        EvalMode::Oracle => ex.pseudo_gold.first().map(|p| p.token_strings()),
    };
    let answer = match &tokens {
        Some(t) => run_tokens(t, &ex.mask_table, kb, cfg),
        None => Err("no program".to_owned()),
    };
    (tokens, answer)
}

pub fn predict(
    mode: EvalMode<'_>,
    examples: &[Example],
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> Vec<Prediction> {
    examples
        .par_iter()
        .map(|ex| {
            let (tokens, answer) = predict_one(mode, ex, kb, cfg);
            let score = score_example(&answer, &ex.gold, ex.category);
            Prediction {
                question_id: ex.question_id.clone(),
                category: ex.category,
                program: tokens.map(|t| t.join(" ")),
                answer: answer.map(|a| a.to_spec(kb)),
                score,
            }
        })
        .collect()
}

pub fn evaluate(
    mode: EvalMode<'_>,
    examples: &[Example],
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> EvalReport {
    EvalReport::from_scores(
        predict(mode, examples, kb, cfg)
            .into_iter()
            .map(|p| (p.category, p.score)),
    )
}

/// Mean adaptive reward of the top beam.
pub fn mean_reward(
    policy: &Policy,
    examples: &[Example],
    kb: &KnowledgeBase,
    reward_cfg: &RewardConfig,
    exec_cfg: &ExecutorConfig,
    beam_width: usize,
    max_len: usize,
) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let mode = EvalMode::Policy {
        policy,
        beam_width,
        max_len,
    };
    let total: f64 = examples
        .par_iter()
        .map(|ex| arf(&predict_one(mode, ex, kb, exec_cfg).1, &ex.gold, reward_cfg))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / examples.len() as f64
}
