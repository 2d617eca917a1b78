use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{EntitySet, KnowledgeBase};

/// Denotation of a program: exactly one of the three answer shapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Answer {
    EntitySet(EntitySet),
    Number(i64),
    Booleans(Vec<bool>),
}

impl Answer {
    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::EntitySet(_) => AnswerKind::EntitySet,
            Answer::Number(_) => AnswerKind::Number,
            Answer::Booleans(_) => AnswerKind::Booleans,
        }
    }

    pub fn to_spec(&self, kb: &KnowledgeBase) -> AnswerSpec {
        match self {
            Answer::EntitySet(s) => {
                AnswerSpec::Entities(kb.entity_labels(s).map(str::to_owned).collect())
            }
            Answer::Number(n) => AnswerSpec::Number(*n),
            Answer::Booleans(b) => AnswerSpec::Booleans(b.clone()),
        }
    }

    pub fn display<'a>(&'a self, kb: &'a KnowledgeBase) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Answer, &'a KnowledgeBase);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self.0 {
                    Answer::EntitySet(s) => {
                        let labels: Vec<&str> = self.1.entity_labels(s).collect();
                        write!(f, "{{{}}}", labels.join(", "))
                    }
                    Answer::Number(n) => write!(f, "{n}"),
                    Answer::Booleans(b) => {
                        let words: Vec<&str> =
                            b.iter().map(|&x| if x { "YES" } else { "NO" }).collect();
                        write!(f, "[{}]", words.join(", "))
                    }
                }
            }
        }
        D(self, kb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnswerKind {
    EntitySet,
    Number,
    Booleans,
}

/// Label-level answer as stored in dataset files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AnswerSpec {
    Entities(Vec<String>),
    Number(i64),
    Booleans(Vec<bool>),
}

impl AnswerSpec {
    pub fn resolve(&self, kb: &KnowledgeBase) -> Result<Answer, String> {
        Ok(match self {
            AnswerSpec::Entities(labels) => Answer::EntitySet(
                labels
                    .iter()
                    .map(|l| kb.entity(l).ok_or_else(|| format!("unknown entity `{l}`")))
                    .collect::<Result<_, _>>()?,
            ),
            AnswerSpec::Number(n) => Answer::Number(*n),
            AnswerSpec::Booleans(b) => Answer::Booleans(b.clone()),
        })
    }
}
