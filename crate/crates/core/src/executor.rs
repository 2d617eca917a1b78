//! Deterministic interpreter for grounded programs.
//!
//! Execution threads a key-value dictionary through the actions. Keys are
//! anchor entities (or the reserved `key` slot written by `GetKeys`), values
//! are entity sets. Two side slots hold the boolean list written by `Bool`
//! and the number written by `Count`.
//!
//! The focus flag decides what `Count` and the final answer read: the union
//! of the value sets (after single-anchor retrieval) or the set of keys
//! (after aggregate and comparison operators).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::Answer;
use crate::dsl::{GroundedAction, GroundedProgram};
use crate::kb::{EntityId, EntitySet, KnowledgeBase};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    /// `Almost(n)` uses the small tolerance when `n` is at most this value.
    pub almost_small_threshold: i64,
    pub almost_small_tol: i64,
    pub almost_large_tol: i64,
    /// Use `>` / `<` instead of `>=` / `<=` in `GreaterThan` / `LessThan`.
    pub comparison_strict: bool,
    /// Drop the anchor entry itself after `GreaterThan` / `LessThan`.
    pub exclude_anchor: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            almost_small_threshold: 5,
            almost_small_tol: 1,
            almost_large_tol: 5,
            comparison_strict: false,
            exclude_anchor: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("{0}")]
    Semantic(String),
}

fn semantic<T>(msg: impl Into<String>) -> Result<T, ExecError> {
    Err(ExecError::Semantic(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DictKey {
    Entity(EntityId),
    /// Reserved slot written by `GetKeys`.
    Keys,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Values,
    Keys,
}

/// Intermediate result threaded through execution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WorkingDict {
    entries: BTreeMap<DictKey, EntitySet>,
    bool_list: Vec<bool>,
    number: Option<i64>,
    focus: Option<Focus>,
}

impl WorkingDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &BTreeMap<DictKey, EntitySet> {
        &self.entries
    }

    pub fn bool_list(&self) -> &[bool] {
        &self.bool_list
    }

    pub fn number(&self) -> Option<i64> {
        self.number
    }

    pub fn focus(&self) -> Option<Focus> {
        self.focus
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.bool_list.is_empty() && self.number.is_none()
    }

    fn union_of_values(&self) -> EntitySet {
        self.entries.values().flatten().copied().collect()
    }

    fn entity_keys(&self) -> EntitySet {
        self.entries
            .keys()
            .filter_map(|k| match k {
                DictKey::Entity(e) => Some(*e),
                DictKey::Keys => None,
            })
            .collect()
    }

    fn focused_set(&self) -> EntitySet {
        match self.focus {
            Some(Focus::Keys) => self.entity_keys(),
            _ => self.union_of_values(),
        }
    }

    /// Entry-writing operators are invalid once a number or booleans are committed.
    fn require_open(&self, what: &str) -> Result<(), ExecError> {
        if self.number.is_some() {
            return semantic(format!("{what} after Count"));
        }
        if !self.bool_list.is_empty() {
            return semantic(format!("{what} after Bool"));
        }
        Ok(())
    }

    fn require_entries(&self, what: &str) -> Result<(), ExecError> {
        self.require_open(what)?;
        if self.entries.is_empty() {
            return semantic(format!("{what} on an empty dictionary"));
        }
        Ok(())
    }

    fn retain_by_size(&mut self, keep: impl Fn(usize) -> bool) {
        self.entries.retain(|_, v| keep(v.len()));
        self.focus = Some(Focus::Keys);
    }

    /// Label-level view for traces.
    pub fn to_trace(&self, kb: &KnowledgeBase) -> DictTrace {
        DictTrace {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| {
                    let key = match k {
                        DictKey::Entity(e) => kb.entity_label(*e).to_owned(),
                        DictKey::Keys => "key".to_owned(),
                    };
                    (key, kb.entity_labels(v).map(str::to_owned).collect())
                })
                .collect(),
            bool: self.bool_list.clone(),
            num: self.number,
            focus: self.focus,
        }
    }
}

/// Applies one action to the dictionary.
pub fn step(
    action: &GroundedAction,
    d: &WorkingDict,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> Result<WorkingDict, ExecError> {
    use GroundedAction as G;
    let mut d = d.clone();
    match *action {
        G::Select { e, r, t } => {
            d.require_open("Select")?;
            d.entries
                .entry(DictKey::Entity(e))
                .or_default()
                .extend(kb.select_targets(e, r, t));
            d.focus = Some(Focus::Values);
        }
        G::SelectAll { et, r, t } => {
            d.require_open("SelectAll")?;
            for &e1 in kb.members_of(et) {
                let targets = kb.select_targets(e1, r, t);
                if !targets.is_empty() {
                    d.entries
                        .entry(DictKey::Entity(e1))
                        .or_default()
                        .extend(targets);
                }
            }
            d.focus = Some(Focus::Keys);
        }
        G::Bool(e) => {
            if d.number.is_some() {
                return semantic("Bool after Count");
            }
            if d.entries.is_empty() {
                return semantic("Bool on an empty dictionary");
            }
            let present = d.entries.values().any(|v| v.contains(&e));
            d.bool_list.push(present);
        }
        G::ArgMin | G::ArgMax => {
            d.require_entries("ArgMin/ArgMax")?;
            let sizes = d.entries.values().map(BTreeSet::len);
            let target = if matches!(action, G::ArgMin) {
                sizes.min()
            } else {
                sizes.max()
            };
            let target = target.unwrap_or(0);
            d.retain_by_size(|n| n == target);
        }
        G::GreaterThan(e) | G::LessThan(e) => {
            d.require_entries("GreaterThan/LessThan")?;
            let anchor = match d.entries.get(&DictKey::Entity(e)) {
                Some(v) => v.len(),
                None => return semantic("comparison anchor is not a key of the dictionary"),
            };
            let greater = matches!(action, G::GreaterThan(_));
            let strict = cfg.comparison_strict;
            d.retain_by_size(|n| match (greater, strict) {
                (true, false) => n >= anchor,
                (true, true) => n > anchor,
                (false, false) => n <= anchor,
                (false, true) => n < anchor,
            });
            if cfg.exclude_anchor {
                d.entries.remove(&DictKey::Entity(e));
            }
        }
        G::Inter { e, r, t } | G::Diff { e, r, t } => {
            d.require_entries("Inter/Diff")?;
            let s = kb.select_targets(e, r, t);
            let inter = matches!(action, G::Inter { .. });
            for v in d.entries.values_mut() {
                if inter {
                    v.retain(|x| s.contains(x));
                } else {
                    v.retain(|x| !s.contains(x));
                }
            }
        }
        G::Union { e, r, t } => {
            d.require_open("Union")?;
            let s = kb.select_targets(e, r, t);
            if d.entries.is_empty() {
                d.entries.insert(DictKey::Entity(e), s);
                d.focus = Some(Focus::Values);
            } else {
                for v in d.entries.values_mut() {
                    v.extend(s.iter().copied());
                }
            }
        }
        G::Count => {
            d.require_open("Count")?;
            if d.focus.is_none() {
                return semantic("Count before any selection");
            }
            let n = d.focused_set().len() as i64;
            d.entries.clear();
            d.number = Some(n);
        }
        G::AtLeast(n) | G::AtMost(n) | G::EqualsTo(n) | G::Almost(n) => {
            d.require_entries("numeric filter")?;
            let tol = if n <= cfg.almost_small_threshold {
                cfg.almost_small_tol
            } else {
                cfg.almost_large_tol
            };
            let keep = |size: usize| {
                let size = size as i64;
                match action {
                    G::AtLeast(_) => size >= n,
                    G::AtMost(_) => size <= n,
                    G::EqualsTo(_) => size == n,
                    _ => (size - n).abs() <= tol,
                }
            };
            d.retain_by_size(keep);
        }
        G::GetKeys => {
            d.require_entries("GetKeys")?;
            let keys = d.entity_keys();
            d.entries.clear();
            d.entries.insert(DictKey::Keys, keys);
            d.focus = Some(Focus::Values);
        }
        G::Eoq => {}
    }
    Ok(d)
}

/// Reads the final answer out of a post-EOQ dictionary.
pub fn answer_of(d: &WorkingDict) -> Result<Answer, ExecError> {
    if !d.bool_list.is_empty() {
        return Ok(Answer::Booleans(d.bool_list.clone()));
    }
    if let Some(n) = d.number {
        return Ok(Answer::Number(n));
    }
    if d.focus.is_none() {
        return semantic("empty dictionary at EOQ");
    }
    Ok(Answer::EntitySet(d.focused_set()))
}

/// Runs a program from an empty dictionary and returns its answer.
pub fn execute(
    program: &GroundedProgram,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> Result<Answer, ExecError> {
    let mut d = WorkingDict::new();
    for action in &program.actions {
        if *action == GroundedAction::Eoq {
            return answer_of(&d);
        }
        d = step(action, &d, kb, cfg)?;
    }
    semantic("program has no EOQ")
}

/// Like [`execute`] but also returns the dictionary after every action.
pub fn execute_traced(
    program: &GroundedProgram,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> (Result<Answer, ExecError>, Vec<WorkingDict>) {
    let mut states = Vec::new();
    let mut d = WorkingDict::new();
    for action in &program.actions {
        if *action == GroundedAction::Eoq {
            states.push(d.clone());
            return (answer_of(&d), states);
        }
        match step(action, &d, kb, cfg) {
            Ok(next) => {
                d = next;
                states.push(d.clone());
            }
            Err(e) => return (Err(e), states),
        }
    }
    (semantic("program has no EOQ"), states)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DictTrace {
    pub entries: BTreeMap<String, Vec<String>>,
    pub bool: Vec<bool>,
    pub num: Option<i64>,
    pub focus: Option<Focus>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    step: usize,
    action: String,
    dict: &'a DictTrace,
}

/// Writes one JSON line per executed action.
pub fn write_trace(
    program: &GroundedProgram,
    states: &[WorkingDict],
    kb: &KnowledgeBase,
    mut out: impl Write,
) -> std::io::Result<()> {
    for (i, (a, d)) in program.actions.iter().zip(states).enumerate() {
        let dict = d.to_trace(kb);
        let line = TraceLine {
            step: i + 1,
            action: a.display(kb).to_string(),
            dict: &dict,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fx {
        kb: KnowledgeBase,
    }

    impl Fx {
        fn rivers() -> Self {
            Self {
                kb: KnowledgeBase::parse(
                    include_str!("../fixtures/rivers.triples.tsv"),
                    "t",
                    include_str!("../fixtures/rivers.types.tsv"),
                    "y",
                )
                .unwrap(),
            }
        }
        fn e(&self, s: &str) -> EntityId {
            self.kb.entity(s).unwrap()
        }
        fn set(&self, xs: &[&str]) -> EntitySet {
            xs.iter().map(|s| self.e(s)).collect()
        }
        fn dict(&self, entries: &[(&str, &[&str])], focus: Focus) -> WorkingDict {
            WorkingDict {
                entries: entries
                    .iter()
                    .map(|(k, v)| (DictKey::Entity(self.e(k)), self.set(v)))
                    .collect(),
                focus: Some(focus),
                ..Default::default()
            }
        }
        fn select(&self, e: &str) -> GroundedAction {
            GroundedAction::Select {
                e: self.e(e),
                r: self.kb.predicate("flow").unwrap(),
                t: self.kb.type_id("river").unwrap(),
            }
        }
        fn diff(&self, e: &str) -> GroundedAction {
            GroundedAction::Diff {
                e: self.e(e),
                r: self.kb.predicate("flow").unwrap(),
                t: self.kb.type_id("river").unwrap(),
            }
        }
        fn select_all(&self) -> GroundedAction {
            GroundedAction::SelectAll {
                et: self.kb.type_id("country").unwrap(),
                r: self.kb.predicate("flow").unwrap(),
                t: self.kb.type_id("river").unwrap(),
            }
        }
    }

    const CFG: ExecutorConfig = ExecutorConfig {
        almost_small_threshold: 5,
        almost_small_tol: 1,
        almost_large_tol: 5,
        comparison_strict: false,
        exclude_anchor: false,
    };

    #[test]
    fn select_all_then_argmax_keeps_russia() {
        let fx = Fx::rivers();
        let d1 = step(&fx.select_all(), &WorkingDict::new(), &fx.kb, &CFG).unwrap();
        assert_eq!(
            d1,
            fx.dict(
                &[
                    ("China", &["Indus", "Satluj"]),
                    ("India", &["Indus", "Satluj", "Godavari"]),
                    ("Russia", &["Volga", "Moskva", "Neva", "Ob"]),
                    ("USA", &["Mississippi", "Colorado", "Rio Grande"]),
                ],
                Focus::Keys
            )
        );
        let d2 = step(&GroundedAction::ArgMax, &d1, &fx.kb, &CFG).unwrap();
        assert_eq!(
            d2,
            fx.dict(
                &[("Russia", &["Volga", "Moskva", "Neva", "Ob"])],
                Focus::Keys
            )
        );
        assert_eq!(
            answer_of(&d2).unwrap(),
            Answer::EntitySet(fx.set(&["Russia"]))
        );
    }

    #[test]
    fn diff_step_and_program() {
        let fx = Fx::rivers();
        let d = fx.dict(
            &[("India", &["Indus", "Satluj", "Godavari"])],
            Focus::Values,
        );
        let d2 = step(&fx.diff("China"), &d, &fx.kb, &CFG).unwrap();
        assert_eq!(d2, fx.dict(&[("India", &["Godavari"])], Focus::Values));
        assert_eq!(
            answer_of(&d2).unwrap(),
            Answer::EntitySet(fx.set(&["Godavari"]))
        );

        let prog = GroundedProgram {
            actions: vec![fx.select("India"), fx.diff("China"), GroundedAction::Eoq],
        };
        assert_eq!(
            execute(&prog, &fx.kb, &CFG).unwrap(),
            Answer::EntitySet(fx.set(&["Godavari"]))
        );
    }

    #[test]
    fn count_uses_focus() {
        let fx = Fx::rivers();
        let keys = fx.dict(
            &[
                ("China", &["Indus"]),
                ("India", &["Indus"]),
                ("USA", &["Ob"]),
            ],
            Focus::Keys,
        );
        let d = step(&GroundedAction::Count, &keys, &fx.kb, &CFG).unwrap();
        assert_eq!(d.number(), Some(3));
        assert!(d.entries().is_empty());
        let mut values = keys.clone();
        values.focus = Some(Focus::Values);
        let d = step(&GroundedAction::Count, &values, &fx.kb, &CFG).unwrap();
        assert_eq!(d.number(), Some(2));
    }

    #[test]
    fn bool_accumulates_and_preserves_entries() {
        let fx = Fx::rivers();
        let d = fx.dict(&[("India", &["Indus", "Godavari"])], Focus::Values);
        let d1 = step(&GroundedAction::Bool(fx.e("Indus")), &d, &fx.kb, &CFG).unwrap();
        let d2 = step(&GroundedAction::Bool(fx.e("Volga")), &d1, &fx.kb, &CFG).unwrap();
        assert_eq!(d2.entries(), d.entries());
        assert_eq!(answer_of(&d2).unwrap(), Answer::Booleans(vec![true, false]));
    }

    #[test]
    fn invalid_contexts_are_semantic_errors() {
        let fx = Fx::rivers();
        let empty = WorkingDict::new();
        for a in [
            GroundedAction::ArgMax,
            GroundedAction::ArgMin,
            GroundedAction::Count,
            GroundedAction::GetKeys,
            GroundedAction::Bool(fx.e("Ob")),
            GroundedAction::AtLeast(1),
            GroundedAction::GreaterThan(fx.e("India")),
            fx.diff("India"),
        ] {
            assert!(step(&a, &empty, &fx.kb, &CFG).is_err(), "{a:?}");
        }
        assert!(answer_of(&empty).is_err());
        let d = fx.dict(&[("India", &["Indus"])], Focus::Keys);
        assert!(step(
            &GroundedAction::GreaterThan(fx.e("China")),
            &d,
            &fx.kb,
            &CFG
        )
        .is_err());
        let counted = step(&GroundedAction::Count, &d, &fx.kb, &CFG).unwrap();
        assert!(step(&fx.select("India"), &counted, &fx.kb, &CFG).is_err());
        assert!(step(&GroundedAction::Count, &counted, &fx.kb, &CFG).is_err());
    }

    #[test]
    fn comparison_switches() {
        let fx = Fx::rivers();
        let d1 = step(&fx.select_all(), &WorkingDict::new(), &fx.kb, &CFG).unwrap();
        let gt = GroundedAction::GreaterThan(fx.e("India"));
        let keys = |d: &WorkingDict| d.entity_keys();
        assert_eq!(
            keys(&step(&gt, &d1, &fx.kb, &CFG).unwrap()),
            fx.set(&["India", "Russia", "USA"])
        );
        let strict = ExecutorConfig {
            comparison_strict: true,
            ..CFG
        };
        assert_eq!(
            keys(&step(&gt, &d1, &fx.kb, &strict).unwrap()),
            fx.set(&["Russia"])
        );
        let excl = ExecutorConfig {
            exclude_anchor: true,
            ..CFG
        };
        assert_eq!(
            keys(&step(&gt, &d1, &fx.kb, &excl).unwrap()),
            fx.set(&["Russia", "USA"])
        );
        let lt = GroundedAction::LessThan(fx.e("India"));
        assert_eq!(
            keys(&step(&lt, &d1, &fx.kb, &CFG).unwrap()),
            fx.set(&["China", "India", "USA"])
        );
    }

    #[test]
    fn numeric_filters_and_almost_tolerance() {
        let fx = Fx::rivers();
        let d1 = step(&fx.select_all(), &WorkingDict::new(), &fx.kb, &CFG).unwrap();
        let keys = |a: GroundedAction| step(&a, &d1, &fx.kb, &CFG).unwrap().entity_keys();
        assert_eq!(
            keys(GroundedAction::AtLeast(3)),
            fx.set(&["India", "Russia", "USA"])
        );
        assert_eq!(keys(GroundedAction::AtMost(2)), fx.set(&["China"]));
        assert_eq!(keys(GroundedAction::EqualsTo(4)), fx.set(&["Russia"]));
        // n <= 5: interval [n-1, n+1]
        assert_eq!(keys(GroundedAction::Almost(5)), fx.set(&["Russia"]));
        assert_eq!(keys(GroundedAction::Almost(1)), fx.set(&["China"]));
        // n > 5: interval [n-5, n+5]
        assert_eq!(
            keys(GroundedAction::Almost(7)),
            fx.set(&["China", "India", "Russia", "USA"])
        );
        assert_eq!(
            keys(GroundedAction::Almost(8)),
            fx.set(&["India", "Russia", "USA"])
        );
    }

    #[test]
    fn get_keys_moves_keys_into_reserved_slot() {
        let fx = Fx::rivers();
        let d1 = step(&fx.select_all(), &WorkingDict::new(), &fx.kb, &CFG).unwrap();
        let d2 = step(&GroundedAction::AtLeast(3), &d1, &fx.kb, &CFG).unwrap();
        let d3 = step(&GroundedAction::GetKeys, &d2, &fx.kb, &CFG).unwrap();
        assert_eq!(d3.entries().len(), 1);
        assert_eq!(
            answer_of(&d3).unwrap(),
            Answer::EntitySet(fx.set(&["India", "Russia", "USA"]))
        );
    }

    #[test]
    fn set_ops_stay_within_value_and_retrieved_sets() {
        let fx = Fx::rivers();
        let d = fx.dict(
            &[
                ("India", &["Indus", "Godavari"]),
                ("USA", &["Ob", "Colorado"]),
            ],
            Focus::Values,
        );
        let s = fx.set(&["Indus", "Satluj"]);
        let flow = fx.kb.predicate("flow").unwrap();
        let river = fx.kb.type_id("river").unwrap();
        let e = fx.e("China");
        for a in [
            GroundedAction::Inter {
                e,
                r: flow,
                t: river,
            },
            GroundedAction::Union {
                e,
                r: flow,
                t: river,
            },
            GroundedAction::Diff {
                e,
                r: flow,
                t: river,
            },
        ] {
            let out = step(&a, &d, &fx.kb, &CFG).unwrap();
            for (k, v) in out.entries() {
                let before = &d.entries()[k];
                assert!(v.iter().all(|x| before.contains(x) || s.contains(x)));
            }
        }
    }

    #[test]
    fn trace_lines_are_json() {
        let fx = Fx::rivers();
        let prog = GroundedProgram {
            actions: vec![fx.select("India"), fx.diff("China"), GroundedAction::Eoq],
        };
        let (ans, states) = execute_traced(&prog, &fx.kb, &CFG);
        assert_eq!(ans.unwrap(), Answer::EntitySet(fx.set(&["Godavari"])));
        let mut buf = Vec::new();
        write_trace(&prog, &states, &fx.kb, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[1]["dict"]["entries"]["India"],
            serde_json::json!(["Godavari"])
        );
    }
}
