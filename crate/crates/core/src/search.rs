//! Breadth-first program search for pseudo-gold programs.
//!
//! Candidate actions are every operator applied to every kind-compatible
//! combination of the question's masks. Programs are enumerated shortest
//! first and kept when their denotation equals the gold answer.

use std::collections::HashSet;

use crate::answer::Answer;
use crate::dsl::{Action, ActionSequence, GroundedAction, MaskTable, Operator};
use crate::executor::{answer_of, step, ExecutorConfig, WorkingDict};
use crate::kb::KnowledgeBase;

pub const DEFAULT_LIMIT: usize = 20;

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Maximum program length, counting the final `EOQ`.
    pub n_max: usize,
    /// Maximum number of programs returned.
    pub limit: usize,
    /// Drop no-op actions, invalid openers and revisited dictionary states.
    pub prune: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_max: crate::dsl::DEFAULT_MAX_ACTIONS,
            limit: DEFAULT_LIMIT,
            prune: true,
        }
    }
}

/// A program found by search together with the dictionary it ends in.
#[derive(Clone, Debug)]
pub struct Found {
    pub program: ActionSequence,
    pub final_state: WorkingDict,
}

/// Every single action expressible over the mask table, in a fixed order.
pub fn candidate_actions(table: &MaskTable) -> Vec<(Action, GroundedAction)> {
    let eoq = Action::new(Operator::Eoq, vec![]).expect("EOQ has no arguments");
    let mut out = Vec::new();
    for op in Operator::ALL {
        if op == Operator::Eoq {
            continue;
        }
        let mut combos: Vec<Vec<_>> = vec![vec![]];
        for &slot in op.slots() {
            let cands = table.candidates(slot);
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    cands.iter().map(move |&m| {
                        let mut p = prefix.clone();
                        p.push(m);
                        p
                    })
                })
                .collect();
        }
        for args in combos {
            let action = Action::new(op, args).expect("slot kinds respected");
            let seq =
                ActionSequence::new(vec![action.clone(), eoq.clone()]).expect("terminated by EOQ");
            if let Ok(g) = table.unmask(&seq) {
                out.push((action, g.actions[0]));
            }
        }
    }
    out
}

pub fn bfs_search(
    table: &MaskTable,
    kb: &KnowledgeBase,
    gold: &Answer,
    n_max: usize,
    limit: usize,
    cfg: &ExecutorConfig,
) -> Vec<ActionSequence> {
    let opts = SearchOptions {
        n_max,
        limit,
        prune: true,
    };
    search(table, kb, gold, &opts, cfg)
        .into_iter()
        .map(|f| f.program)
        .collect()
}

pub fn search(
    table: &MaskTable,
    kb: &KnowledgeBase,
    gold: &Answer,
    opts: &SearchOptions,
    cfg: &ExecutorConfig,
) -> Vec<Found> {
    let mut found = Vec::new();
    if opts.n_max < 2 || opts.limit == 0 {
        return found;
    }
    let candidates = candidate_actions(table);
    let eoq = Action::new(Operator::Eoq, vec![]).expect("EOQ has no arguments");

    let mut seen: HashSet<WorkingDict> = HashSet::new();
    seen.insert(WorkingDict::new());
    let mut frontier: Vec<(Vec<usize>, WorkingDict)> = vec![(Vec::new(), WorkingDict::new())];

    for depth in 1..opts.n_max {
        let mut next = Vec::new();
        for (path, d) in &frontier {
            for (i, (action, grounded)) in candidates.iter().enumerate() {
                if opts.prune
                    && depth == 1
                    && matches!(
                        action.op(),
                        Operator::Count | Operator::Bool | Operator::GetKeys
                    )
                {
                    continue;
                }
                let Ok(nd) = step(grounded, d, kb, cfg) else {
                    continue;
                };
                if opts.prune && (nd == *d || !seen.insert(nd.clone())) {
                    continue;
                }
                let mut p = path.clone();
                p.push(i);
                next.push((p, nd));
            }
        }
        for (path, d) in &next {
            if answer_of(d).as_ref() == Ok(gold) {
                let mut actions: Vec<Action> =
                    path.iter().map(|&i| candidates[i].0.clone()).collect();
                actions.push(eoq.clone());
                found.push(Found {
                    program: ActionSequence::new(actions).expect("terminated by EOQ"),
                    final_state: d.clone(),
                });
                if found.len() >= opts.limit {
                    return found;
                }
            }
        }
        frontier = next;
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::MaskToken;
    use crate::executor::execute;
    use crate::reward::{arf, RewardConfig};

    fn rivers() -> KnowledgeBase {
        KnowledgeBase::parse(
            include_str!("../fixtures/rivers.triples.tsv"),
            "t",
            include_str!("../fixtures/rivers.types.tsv"),
            "y",
        )
        .unwrap()
    }

    fn table(kb: &KnowledgeBase) -> MaskTable {
        let mut t = MaskTable::new();
        t.bind_entity(MaskToken::entity(1), kb.entity("India").unwrap())
            .unwrap();
        t.bind_entity(MaskToken::entity(2), kb.entity("China").unwrap())
            .unwrap();
        t.bind_predicate(MaskToken::predicate(1), kb.predicate("flow").unwrap())
            .unwrap();
        t.bind_type(MaskToken::ty(1), kb.type_id("river").unwrap())
            .unwrap();
        t
    }

    #[test]
    fn finds_the_diff_program() {
        let kb = rivers();
        let t = table(&kb);
        let gold = Answer::EntitySet([kb.entity("Godavari").unwrap()].into());
        let cfg = ExecutorConfig::default();
        let progs = bfs_search(&t, &kb, &gold, 5, 20, &cfg);
        let want: ActionSequence = "Select(<E1>,<P1>,<T1>) | Diff(<E2>,<P1>,<T1>) | EOQ"
            .parse()
            .unwrap();
        assert!(progs.contains(&want), "{progs:?}");
        let rc = RewardConfig::default();
        for p in &progs {
            let ans = execute(&t.unmask(p).unwrap(), &kb, &cfg);
            assert_eq!(arf(&ans, &gold, &rc), 1.0);
        }
    }

    #[test]
    fn single_select_is_found_first() {
        let kb = rivers();
        let t = table(&kb);
        let india = kb.entity("India").unwrap();
        let gold = Answer::EntitySet(kb.select_targets(
            india,
            kb.predicate("flow").unwrap(),
            kb.type_id("river").unwrap(),
        ));
        let progs = bfs_search(&t, &kb, &gold, 5, 20, &ExecutorConfig::default());
        assert_eq!(progs[0].to_string(), "Select(<E1>,<P1>,<T1>) | EOQ");
        for w in progs.windows(2) {
            assert!(w[0].len() <= w[1].len());
        }
    }

    #[test]
    fn no_program_gives_empty_result() {
        let kb = rivers();
        let t = table(&kb);
        let gold = Answer::Number(42);
        assert!(bfs_search(&t, &kb, &gold, 4, 20, &ExecutorConfig::default()).is_empty());
    }

    #[test]
    fn limit_is_respected() {
        let kb = rivers();
        let t = table(&kb);
        let gold = Answer::Booleans(vec![false]);
        let progs = bfs_search(&t, &kb, &gold, 4, 3, &ExecutorConfig::default());
        assert_eq!(progs.len(), 3);
    }
}
