//! Synthetic knowledge base and templated question corpus.
//!
//! Every question is produced from a template program over masked slots, so
//! at least one short program is guaranteed to reach its gold answer.
//! Instances where some action of the template can be dropped without
//! changing the answer are rejected.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::answer::Answer;
use crate::dataset::{Category, Example};
use crate::dsl::{ActionSequence, MaskTable, MaskToken};
use crate::executor::{execute, ExecutorConfig};
use crate::kb::{EntityId, KnowledgeBase, PredicateId, TypeId};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub countries: usize,
    pub rivers: usize,
    pub cities: usize,
    pub languages: usize,
    pub organizations: usize,
    pub persons: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            countries: 12,
            rivers: 30,
            cities: 30,
            languages: 10,
            organizations: 6,
            persons: 16,
            seed: 0,
        }
    }
}

/// `(predicate, subject type, object type)`
const SCHEMA: [(&str, &str, &str); 6] = [
    ("flow", "country", "river"),
    ("contain", "country", "city"),
    ("speak", "country", "language"),
    ("border", "country", "country"),
    ("join", "country", "organization"),
    ("visit", "person", "country"),
];

pub fn generate_kb(cfg: &SynthConfig) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = |prefix: &str, n: usize| -> Vec<String> {
        (0..n).map(|i| format!("{prefix}_{i}")).collect()
    };
    let countries = pool("country", cfg.countries);
    let rivers = pool("river", cfg.rivers);
    let cities = pool("city", cfg.cities);
    let languages = pool("language", cfg.languages);
    let orgs = pool("org", cfg.organizations);
    let persons = pool("person", cfg.persons);

    let mut triples: Vec<(String, &str, String)> = Vec::new();
    let mut link = |rng: &mut ChaCha8Rng,
                    s: &str,
                    p: &'static str,
                    targets: &[String],
                    lo: usize,
                    hi: usize| {
        let n = rng.gen_range(lo..=hi).min(targets.len());
        for o in targets.choose_multiple(rng, n) {
            if o != s {
                triples.push((s.to_owned(), p, o.clone()));
            }
        }
    };
    for c in &countries {
        link(&mut rng, c, "flow", &rivers, 1, 6);
        link(&mut rng, c, "contain", &cities, 1, 5);
        link(&mut rng, c, "speak", &languages, 1, 4);
        link(&mut rng, c, "border", &countries, 1, 4);
        link(&mut rng, c, "join", &orgs, 0, 4);
    }
    for p in &persons {
        link(&mut rng, p, "visit", &countries, 1, 6);
    }

    let mut b = KnowledgeBase::builder();
    for (s, p, o) in &triples {
        b.triple(s, p, o);
    }
    // only entities that occur in some triple are typed, as the file loader requires
    let linked: std::collections::BTreeSet<&str> = triples
        .iter()
        .flat_map(|(s, _, o)| [s.as_str(), o.as_str()])
        .collect();
    for (items, ty) in [
        (&countries, "country"),
        (&rivers, "river"),
        (&cities, "city"),
        (&languages, "language"),
        (&orgs, "organization"),
        (&persons, "person"),
    ] {
        for e in items.iter().filter(|e| linked.contains(e.as_str())) {
            b.member(e, ty);
        }
    }
    b.build()
}

/// Template slots: `S` subject entities, `O` object entities, `N` numbers,
/// `P` the predicate, `T` the object type, `U` the subject type.
struct Template {
    category: Category,
    words: &'static str,
    program: &'static str,
}

const fn t(category: Category, words: &'static str, program: &'static str) -> Template {
    Template {
        category,
        words,
        program,
    }
}

const TEMPLATES: &[Template] = &[
    t(
        Category::Simple,
        "which {T0} does {S0} {P0} ?",
        "Select({S0},{P0},{T0})",
    ),
    t(
        Category::Simple,
        "list the {T0} that {S0} {P0}",
        "Select({S0},{P0},{T0})",
    ),
    t(
        Category::Logical,
        "which {T0} does {S0} or {S1} {P0} ?",
        "Select({S0},{P0},{T0}) | Union({S1},{P0},{T0})",
    ),
    t(
        Category::Logical,
        "which {T0} do both {S0} and {S1} {P0} ?",
        "Select({S0},{P0},{T0}) | Inter({S1},{P0},{T0})",
    ),
    t(
        Category::Logical,
        "which {T0} does {S0} {P0} but not {S1} ?",
        "Select({S0},{P0},{T0}) | Diff({S1},{P0},{T0})",
    ),
    t(
        Category::Quantitative,
        "which {U0} {P0} the most {T0} ?",
        "SelectAll({U0},{P0},{T0}) | ArgMax",
    ),
    t(
        Category::Quantitative,
        "which {U0} {P0} the fewest {T0} ?",
        "SelectAll({U0},{P0},{T0}) | ArgMin",
    ),
    t(
        Category::Quantitative,
        "which {U0} {P0} at least {N0} {T0} ?",
        "SelectAll({U0},{P0},{T0}) | AtLeast({N0})",
    ),
    t(
        Category::Quantitative,
        "which {U0} {P0} at most {N0} {T0} ?",
        "SelectAll({U0},{P0},{T0}) | AtMost({N0})",
    ),
    t(
        Category::Comparative,
        "which {U0} {P0} more {T0} than {S0} ?",
        "SelectAll({U0},{P0},{T0}) | GreaterThan({S0})",
    ),
    t(
        Category::Comparative,
        "which {U0} {P0} fewer {T0} than {S0} ?",
        "SelectAll({U0},{P0},{T0}) | LessThan({S0})",
    ),
    t(
        Category::Verification,
        "does {S0} {P0} the {T0} {O0} ?",
        "Select({S0},{P0},{T0}) | Bool({O0})",
    ),
    t(
        Category::Verification,
        "does {S0} {P0} the {T0} {O0} and {O1} ?",
        "Select({S0},{P0},{T0}) | Bool({O0}) | Bool({O1})",
    ),
    t(
        Category::QuantitativeCount,
        "how many {T0} does {S0} {P0} ?",
        "Select({S0},{P0},{T0}) | Count",
    ),
    t(
        Category::QuantitativeCount,
        "how many {T0} do {S0} or {S1} {P0} ?",
        "Select({S0},{P0},{T0}) | Union({S1},{P0},{T0}) | Count",
    ),
    t(
        Category::ComparativeCount,
        "how many {U0} {P0} more {T0} than {S0} ?",
        "SelectAll({U0},{P0},{T0}) | GreaterThan({S0}) | Count",
    ),
    t(
        Category::ComparativeCount,
        "how many {U0} {P0} fewer {T0} than {S0} ?",
        "SelectAll({U0},{P0},{T0}) | LessThan({S0}) | Count",
    ),
];

#[derive(Clone, Copy)]
enum Value {
    Entity(EntityId),
    Number(i64),
    Predicate(PredicateId),
    Type(TypeId),
}

fn slot_names(s: &str) -> impl Iterator<Item = &str> {
    s.split('{')
        .skip(1)
        .filter_map(|r| r.split_once('}').map(|(n, _)| n))
}

/// Chooses values for every slot of a template, or `None` if the draw is unusable.
fn draw(
    tpl: &Template,
    kb: &KnowledgeBase,
    rng: &mut ChaCha8Rng,
) -> Option<BTreeMap<String, Value>> {
    let &(pred, subj_ty, obj_ty) = SCHEMA.choose(rng)?;
    let p = kb.predicate(pred)?;
    let (u, ty) = (kb.type_id(subj_ty)?, kb.type_id(obj_ty)?);
    let subjects: Vec<EntityId> = kb
        .members_of(u)
        .iter()
        .copied()
        .filter(|&s| !kb.select_targets(s, p, ty).is_empty())
        .collect();
    let objects: Vec<EntityId> = kb.members_of(ty).iter().copied().collect();

    let mut vals = BTreeMap::new();
    let mut used: Vec<EntityId> = Vec::new();
    let mut names: Vec<&str> = slot_names(tpl.words).collect();
    // subjects first: object draws depend on S0
    names.sort_by_key(|n| (!n.starts_with('S'), *n));
    names.dedup();
    for name in names {
        let v = match &name[..1] {
            "P" => Value::Predicate(p),
            "T" => Value::Type(ty),
            "U" => Value::Type(u),
            "N" => Value::Number(rng.gen_range(1..=4)),
            "S" => {
                let free: Vec<_> = subjects.iter().filter(|e| !used.contains(e)).collect();
                let e = **free.choose(rng)?;
                used.push(e);
                Value::Entity(e)
            }
            "O" => {
                let anchor = vals.get("S0").and_then(|v| match v {
                    Value::Entity(e) => Some(*e),
                    _ => None,
                })?;
                let inside = kb.select_targets(anchor, p, ty);
                let want_in = rng.gen_bool(0.5);
                let free: Vec<_> = objects
                    .iter()
                    .filter(|e| !used.contains(e) && inside.contains(e) == want_in)
                    .collect();
                let e = **free.choose(rng)?;
                used.push(e);
                Value::Entity(e)
            }
            _ => return None,
        };
        vals.insert(name.to_owned(), v);
    }
    Some(vals)
}

/// Builds the masked question and program, numbering masks by first appearance.
fn render(
    tpl: &Template,
    vals: &BTreeMap<String, Value>,
) -> Option<(Vec<String>, MaskTable, ActionSequence)> {
    let mut table = MaskTable::new();
    let mut masks: BTreeMap<&str, MaskToken> = BTreeMap::new();
    let (mut ne, mut np, mut nt) = (0, 0, 0);
    let mut tokens = Vec::new();
    for word in tpl.words.split_whitespace() {
        let Some(name) = word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) else {
            tokens.push(word.to_owned());
            continue;
        };
        if let Some(m) = masks.get(name) {
            tokens.push(m.to_string());
            continue;
        }
        let m = match vals.get(name)? {
            Value::Entity(e) => {
                ne += 1;
                let m = MaskToken::entity(ne);
                table.bind_entity(m, *e).ok()?;
                m
            }
            Value::Number(n) => {
                ne += 1;
                let m = MaskToken::entity(ne);
                table.bind_number(m, *n).ok()?;
                m
            }
            Value::Predicate(p) => {
                np += 1;
                let m = MaskToken::predicate(np);
                table.bind_predicate(m, *p).ok()?;
                m
            }
            Value::Type(t) => {
                nt += 1;
                let m = MaskToken::ty(nt);
                table.bind_type(m, *t).ok()?;
                m
            }
        };
        masks.insert(name, m);
        tokens.push(m.to_string());
    }
    let mut text = format!("{} | EOQ", tpl.program);
    for (name, m) in &masks {
        text = text.replace(&format!("{{{name}}}"), &m.to_string());
    }
    let program = text.parse().ok()?;
    Some((tokens, table, program))
}

fn run(program: &ActionSequence, table: &MaskTable, kb: &KnowledgeBase) -> Option<Answer> {
    let grounded = table.unmask(program).ok()?;
    execute(&grounded, kb, &ExecutorConfig::default()).ok()
}

/// True when the answer is non-empty and every action of the program matters.
fn informative(
    program: &ActionSequence,
    table: &MaskTable,
    kb: &KnowledgeBase,
    ans: &Answer,
) -> bool {
    match ans {
        Answer::EntitySet(s) if s.is_empty() => return false,
        Answer::Number(0) => return false,
        _ => {}
    }
    let body = &program.actions()[..program.len() - 1];
    if body.len() < 2 {
        return true;
    }
    (0..body.len()).all(|skip| {
        let mut actions: Vec<_> = program.actions().to_vec();
        actions.remove(skip);
        let Ok(shorter) = ActionSequence::new(actions) else {
            return true;
        };
        run(&shorter, table, kb).as_ref() != Some(ans)
    })
}

/// A question with the template program that generated it.
#[derive(Clone, Debug)]
pub struct SynthQuestion {
    pub example: Example,
    pub program: ActionSequence,
}

/// Generates `n` questions cycling through the seven categories.
pub fn generate_questions(kb: &KnowledgeBase, n: usize, seed: u64) -> Vec<SynthQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut out = Vec::with_capacity(n);
    let cats = Category::QUESTION_TYPES;
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(
            attempts < 1000 * (n + 1),
            "knowledge base too sparse for the templates"
        );
        let cat = cats[out.len() % cats.len()];
        let choices: Vec<&Template> = TEMPLATES.iter().filter(|t| t.category == cat).collect();
        let tpl = *choices
            .choose(&mut rng)
            .expect("every category has templates");
        let Some(vals) = draw(tpl, kb, &mut rng) else {
            continue;
        };
        let Some((tokens, table, program)) = render(tpl, &vals) else {
            continue;
        };
        let Some(gold) = run(&program, &table, kb) else {
            continue;
        };
        if !informative(&program, &table, kb, &gold) {
            continue;
        }
        out.push(SynthQuestion {
            example: Example {
                question_id: format!("syn{seed}-{:04}", out.len()),
                tokens,
                mask_table: table,
                gold,
                category: cat,
                pseudo_gold: Vec::new(),
            },
            program,
        });
    }
    out
}

pub fn generate_corpus(kb: &KnowledgeBase, n: usize, seed: u64) -> Vec<Example> {
    generate_questions(kb, n, seed)
        .into_iter()
        .map(|q| q.example)
        .collect()
}
