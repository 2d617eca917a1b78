//! Question datasets as JSON lines, and the train / held-out split.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{Answer, AnswerSpec};
use crate::dsl::{ActionSequence, MaskTable, MaskTableSpec, MaskToken};
use crate::kb::KnowledgeBase;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Simple,
    Logical,
    Quantitative,
    Comparative,
    Verification,
    QuantitativeCount,
    ComparativeCount,
    #[default]
    Other,
}

impl Category {
    pub const QUESTION_TYPES: [Category; 7] = [
        Category::Simple,
        Category::Logical,
        Category::Quantitative,
        Category::Comparative,
        Category::Verification,
        Category::QuantitativeCount,
        Category::ComparativeCount,
    ];

    /// Categories scored by exact-match accuracy rather than set F1.
    pub fn uses_accuracy(self) -> bool {
        matches!(
            self,
            Category::Verification | Category::QuantitativeCount | Category::ComparativeCount
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Simple => "simple",
            Category::Logical => "logical",
            Category::Quantitative => "quantitative",
            Category::Comparative => "comparative",
            Category::Verification => "verification",
            Category::QuantitativeCount => "quantitative_count",
            Category::ComparativeCount => "comparative_count",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Json {
        path: String,
        line: usize,
        message: String,
    },
    #[error("question {question_id}: {message}")]
    Invalid {
        question_id: String,
        message: String,
    },
}

/// One dataset line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub question_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub mask_table: MaskTableSpec,
    pub gold: AnswerSpec,
    #[serde(default)]
    pub category: Category,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pseudo_gold: Vec<String>,
}

/// Oracle output line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub question_id: String,
    pub programs: Vec<String>,
}

/// A question resolved against a KB.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub question_id: String,
    pub tokens: Vec<String>,
    pub mask_table: MaskTable,
    pub gold: Answer,
    pub category: Category,
    pub pseudo_gold: Vec<ActionSequence>,
}

impl Example {
    pub fn from_record(rec: &Record, kb: &KnowledgeBase) -> Result<Self, DatasetError> {
        let invalid = |message: String| DatasetError::Invalid {
            question_id: rec.question_id.clone(),
            message,
        };
        if rec.tokens.is_empty() {
            return Err(invalid("no tokens".into()));
        }
        let mask_table = rec
            .mask_table
            .resolve(kb)
            .map_err(|e| invalid(e.to_string()))?;
        for tok in &rec.tokens {
            if let Ok(m) = tok.parse::<MaskToken>() {
                if !mask_bound(&mask_table, m) {
                    return Err(invalid(format!("mask {m} is not in the mask table")));
                }
            }
        }
        let gold = rec.gold.resolve(kb).map_err(invalid)?;
        let pseudo_gold = rec
            .pseudo_gold
            .iter()
            .map(|p| {
                p.parse::<ActionSequence>()
                    .map_err(|e| invalid(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            question_id: rec.question_id.clone(),
            tokens: rec.tokens.clone(),
            mask_table,
            gold,
            category: rec.category,
            pseudo_gold,
        })
    }

    pub fn to_record(&self, kb: &KnowledgeBase) -> Record {
        Record {
            question_id: self.question_id.clone(),
            tokens: self.tokens.clone(),
            mask_table: MaskTableSpec::from_table(&self.mask_table, kb),
            gold: self.gold.to_spec(kb),
            category: self.category,
            pseudo_gold: self.pseudo_gold.iter().map(ToString::to_string).collect(),
        }
    }
}

fn mask_bound(t: &MaskTable, m: MaskToken) -> bool {
    t.entities().contains_key(&m)
        || t.numbers().contains_key(&m)
        || t.predicates().contains_key(&m)
        || t.types().contains_key(&m)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: p.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: p.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::Json {
            path: p.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_examples(path: &Path, kb: &KnowledgeBase) -> Result<Vec<Example>, DatasetError> {
    read_jsonl::<Record>(path)?
        .iter()
        .map(|r| Example::from_record(r, kb))
        .collect()
}

pub fn save_examples(
    path: &Path,
    examples: &[Example],
    kb: &KnowledgeBase,
) -> Result<(), DatasetError> {
    let recs: Vec<Record> = examples.iter().map(|e| e.to_record(kb)).collect();
    write_jsonl(path, &recs)
}

/// Replaces each example's pseudo-gold programs with the oracle's, where present.
pub fn attach_pseudo_gold(
    examples: &mut [Example],
    oracle: &[OracleRecord],
) -> Result<(), DatasetError> {
    let by_id: std::collections::HashMap<&str, &OracleRecord> =
        oracle.iter().map(|r| (r.question_id.as_str(), r)).collect();
    for ex in examples {
        if let Some(r) = by_id.get(ex.question_id.as_str()) {
            ex.pseudo_gold = r
                .programs
                .iter()
                .map(|p| {
                    p.parse()
                        .map_err(|e: crate::dsl::DslError| DatasetError::Invalid {
                            question_id: ex.question_id.clone(),
                            message: e.to_string(),
                        })
                })
                .collect::<Result<_, _>>()?;
        }
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable 20% held-out assignment by question id.
pub fn is_heldout(question_id: &str) -> bool {
    fnv1a(question_id.as_bytes()) % 5 == 0
}

/// `(train, heldout)`, each in input order.
pub fn split(examples: &[Example]) -> (Vec<Example>, Vec<Example>) {
    examples
        .iter()
        .cloned()
        .partition(|e| !is_heldout(&e.question_id))
}
