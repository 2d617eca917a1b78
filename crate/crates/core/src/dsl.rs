//! The 17-operator action language.
//!
//! Programs are written over mask tokens (`<E1>`, `<P1>`, `<T1>`) and
//! linearized into a flat token stream for the decoder: each action
//! contributes its operator token followed by its argument masks. Arity is
//! implied by the operator, so no punctuation tokens are needed.
//!
//! Numeric arguments (for `AtLeast`, `AtMost`, `EqualsTo`, `Almost`) use
//! entity-style masks whose value lives in the mask table's number map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{EntityId, KnowledgeBase, PredicateId, TypeId};

pub const DEFAULT_MAX_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    Select,
    SelectAll,
    Bool,
    ArgMin,
    ArgMax,
    GreaterThan,
    LessThan,
    Inter,
    Union,
    Diff,
    Count,
    AtLeast,
    AtMost,
    EqualsTo,
    GetKeys,
    Almost,
    Eoq,
}

/// Kind of value an operator slot takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Entity,
    Predicate,
    Type,
    Number,
}

impl SlotKind {
    /// Mask kind that may fill this slot. Numbers are carried by entity-style masks.
    pub fn mask_kind(self) -> MaskKind {
        match self {
            SlotKind::Entity | SlotKind::Number => MaskKind::Entity,
            SlotKind::Predicate => MaskKind::Predicate,
            SlotKind::Type => MaskKind::Type,
        }
    }
}

use SlotKind as S;

impl Operator {
    pub const ALL: [Operator; 17] = [
        Operator::Select,
        Operator::SelectAll,
        Operator::Bool,
        Operator::ArgMin,
        Operator::ArgMax,
        Operator::GreaterThan,
        Operator::LessThan,
        Operator::Inter,
        Operator::Union,
        Operator::Diff,
        Operator::Count,
        Operator::AtLeast,
        Operator::AtMost,
        Operator::EqualsTo,
        Operator::GetKeys,
        Operator::Almost,
        Operator::Eoq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Select => "Select",
            Operator::SelectAll => "SelectAll",
            Operator::Bool => "Bool",
            Operator::ArgMin => "ArgMin",
            Operator::ArgMax => "ArgMax",
            Operator::GreaterThan => "GreaterThan",
            Operator::LessThan => "LessThan",
            Operator::Inter => "Inter",
            Operator::Union => "Union",
            Operator::Diff => "Diff",
            Operator::Count => "Count",
            Operator::AtLeast => "AtLeast",
            Operator::AtMost => "AtMost",
            Operator::EqualsTo => "EqualsTo",
            Operator::GetKeys => "GetKeys",
            Operator::Almost => "Almost",
            Operator::Eoq => "EOQ",
        }
    }

    pub fn from_name(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.name() == s)
    }

    /// Argument slots, in order.
    pub fn slots(self) -> &'static [SlotKind] {
        match self {
            Operator::Select | Operator::Inter | Operator::Union | Operator::Diff => {
                &[S::Entity, S::Predicate, S::Type]
            }
            Operator::SelectAll => &[S::Type, S::Predicate, S::Type],
            Operator::Bool | Operator::GreaterThan | Operator::LessThan => &[S::Entity],
            Operator::AtLeast | Operator::AtMost | Operator::EqualsTo | Operator::Almost => {
                &[S::Number]
            }
            Operator::ArgMin
            | Operator::ArgMax
            | Operator::Count
            | Operator::GetKeys
            | Operator::Eoq => &[],
        }
    }

    pub fn arity(self) -> usize {
        self.slots().len()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaskKind {
    Entity,
    Predicate,
    Type,
}

impl MaskKind {
    fn letter(self) -> char {
        match self {
            MaskKind::Entity => 'E',
            MaskKind::Predicate => 'P',
            MaskKind::Type => 'T',
        }
    }
}

/// Placeholder standing in for a KB artifact, spelled `<E{i}>`, `<P{i}>` or `<T{i}>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MaskToken {
    pub kind: MaskKind,
    pub index: u32,
}

impl MaskToken {
    pub fn entity(index: u32) -> Self {
        Self::new(MaskKind::Entity, index)
    }

    pub fn predicate(index: u32) -> Self {
        Self::new(MaskKind::Predicate, index)
    }

    pub fn ty(index: u32) -> Self {
        Self::new(MaskKind::Type, index)
    }

    pub fn new(kind: MaskKind, index: u32) -> Self {
        assert!(index >= 1, "mask indexes start at 1");
        Self { kind, index }
    }
}

impl fmt::Display for MaskToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}{}>", self.kind.letter(), self.index)
    }
}

impl FromStr for MaskToken {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DslError::UnknownToken(s.to_owned());
        let inner = s
            .strip_prefix('<')
            .and_then(|r| r.strip_suffix('>'))
            .ok_or_else(bad)?;
        let mut chars = inner.chars();
        let kind = match chars.next() {
            Some('E') => MaskKind::Entity,
            Some('P') => MaskKind::Predicate,
            Some('T') => MaskKind::Type,
            _ => return Err(bad()),
        };
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let index: u32 = digits.parse().map_err(|_| bad())?;
        if index == 0 {
            return Err(bad());
        }
        Ok(MaskToken { kind, index })
    }
}

/// One element of a linearized program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Op(Operator),
    Mask(MaskToken),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Op(op) => op.fmt(f),
            Token::Mask(m) => m.fmt(f),
        }
    }
}

impl FromStr for Token {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(op) = Operator::from_name(s) {
            Ok(Token::Op(op))
        } else {
            s.parse().map(Token::Mask)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("mask {0} is not resolvable in the mask table")]
    UnresolvedMask(MaskToken),
    #[error("mask table: {0}")]
    MaskTable(String),
}

fn malformed(msg: impl Into<String>) -> DslError {
    DslError::Malformed(msg.into())
}

/// An operator with its argument masks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    op: Operator,
    args: Vec<MaskToken>,
}

impl Action {
    pub fn new(op: Operator, args: Vec<MaskToken>) -> Result<Self, DslError> {
        let slots = op.slots();
        if args.len() != slots.len() {
            return Err(malformed(format!(
                "{op} takes {} argument(s), got {}",
                slots.len(),
                args.len()
            )));
        }
        for (i, (slot, arg)) in slots.iter().zip(&args).enumerate() {
            if slot.mask_kind() != arg.kind {
                return Err(malformed(format!(
                    "{op} argument {} expects a {:?} mask, got {arg}",
                    i + 1,
                    slot
                )));
            }
        }
        Ok(Self { op, args })
    }

    pub fn op(&self) -> Operator {
        self.op
    }

    pub fn args(&self) -> &[MaskToken] {
        &self.args
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.op)?;
        if !self.args.is_empty() {
            let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
            write!(f, "({})", args.join(","))?;
        }
        Ok(())
    }
}

/// A complete program: non-empty, ending in exactly one `EOQ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionSequence {
    actions: Vec<Action>,
}

impl ActionSequence {
    pub fn new(actions: Vec<Action>) -> Result<Self, DslError> {
        match actions.iter().position(|a| a.op == Operator::Eoq) {
            None => Err(malformed("missing EOQ")),
            Some(i) if i + 1 != actions.len() => Err(malformed("action after EOQ")),
            Some(_) => Ok(Self { actions }),
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokenize(&self) -> Vec<Token> {
        let mut out = Vec::new();
        for a in &self.actions {
            out.push(Token::Op(a.op));
            out.extend(a.args.iter().copied().map(Token::Mask));
        }
        out
    }

    pub fn token_strings(&self) -> Vec<String> {
        self.tokenize().iter().map(Token::to_string).collect()
    }

    pub fn masks(&self) -> impl Iterator<Item = MaskToken> + '_ {
        self.actions.iter().flat_map(|a| a.args.iter().copied())
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            a.fmt(f)?;
        }
        Ok(())
    }
}

impl FromStr for ActionSequence {
    type Err = DslError;

    /// Parses the text form `Select(<E1>,<P1>,<T1>) | Diff(<E2>,<P1>,<T1>) | EOQ`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut actions = Vec::new();
        for part in s.split('|') {
            let part = part.trim();
            let (name, args) = match part.find('(') {
                Some(open) => {
                    let inner = part[open + 1..]
                        .strip_suffix(')')
                        .ok_or_else(|| malformed(format!("unbalanced parentheses in `{part}`")))?;
                    (part[..open].trim(), inner)
                }
                None => (part, ""),
            };
            let op =
                Operator::from_name(name).ok_or_else(|| DslError::UnknownToken(name.to_owned()))?;
            let args = args
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(str::parse)
                .collect::<Result<Vec<MaskToken>, _>>()?;
            actions.push(Action::new(op, args)?);
        }
        ActionSequence::new(actions)
    }
}

/// Reassembles a program from its linearized tokens.
pub fn parse_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<ActionSequence, DslError> {
    let parsed = tokens
        .iter()
        .map(|t| t.as_ref().parse::<Token>())
        .collect::<Result<Vec<_>, _>>()?;
    parse_token_stream(&parsed)
}

pub fn parse_token_stream(tokens: &[Token]) -> Result<ActionSequence, DslError> {
    let mut actions = Vec::new();
    let mut it = tokens.iter().peekable();
    while let Some(tok) = it.next() {
        let op = match tok {
            Token::Op(op) => *op,
            Token::Mask(m) => return Err(malformed(format!("expected an operator, got {m}"))),
        };
        if op == Operator::Eoq && it.peek().is_some() {
            return Err(malformed("token after EOQ"));
        }
        let mut args = Vec::with_capacity(op.arity());
        for _ in 0..op.arity() {
            match it.next() {
                Some(Token::Mask(m)) => args.push(*m),
                Some(Token::Op(o)) => {
                    return Err(malformed(format!("{op} expects an argument, got {o}")))
                }
                None => return Err(malformed(format!("{op} truncated"))),
            }
        }
        actions.push(Action::new(op, args)?);
    }
    ActionSequence::new(actions)
}

/// Per-question mapping from masks to KB ids and integers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskTable {
    entities: BTreeMap<MaskToken, EntityId>,
    predicates: BTreeMap<MaskToken, PredicateId>,
    types: BTreeMap<MaskToken, TypeId>,
    numbers: BTreeMap<MaskToken, i64>,
}

impl MaskTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_free(&self, mask: MaskToken, kind: MaskKind) -> Result<(), DslError> {
        if mask.kind != kind {
            return Err(DslError::MaskTable(format!("{mask} has the wrong kind")));
        }
        let taken = match kind {
            MaskKind::Entity => {
                self.entities.contains_key(&mask) || self.numbers.contains_key(&mask)
            }
            MaskKind::Predicate => self.predicates.contains_key(&mask),
            MaskKind::Type => self.types.contains_key(&mask),
        };
        if taken {
            return Err(DslError::MaskTable(format!("{mask} bound twice")));
        }
        Ok(())
    }

    pub fn bind_entity(&mut self, mask: MaskToken, e: EntityId) -> Result<&mut Self, DslError> {
        self.check_free(mask, MaskKind::Entity)?;
        if self.entities.values().any(|&x| x == e) {
            return Err(DslError::MaskTable(format!("{e} already masked")));
        }
        self.entities.insert(mask, e);
        Ok(self)
    }

    pub fn bind_predicate(
        &mut self,
        mask: MaskToken,
        p: PredicateId,
    ) -> Result<&mut Self, DslError> {
        self.check_free(mask, MaskKind::Predicate)?;
        if self.predicates.values().any(|&x| x == p) {
            return Err(DslError::MaskTable(format!("{p} already masked")));
        }
        self.predicates.insert(mask, p);
        Ok(self)
    }

    pub fn bind_type(&mut self, mask: MaskToken, t: TypeId) -> Result<&mut Self, DslError> {
        self.check_free(mask, MaskKind::Type)?;
        if self.types.values().any(|&x| x == t) {
            return Err(DslError::MaskTable(format!("{t} already masked")));
        }
        self.types.insert(mask, t);
        Ok(self)
    }

    pub fn bind_number(&mut self, mask: MaskToken, n: i64) -> Result<&mut Self, DslError> {
        self.check_free(mask, MaskKind::Entity)?;
        if self.numbers.values().any(|&x| x == n) {
            return Err(DslError::MaskTable(format!("number {n} already masked")));
        }
        self.numbers.insert(mask, n);
        Ok(self)
    }

    pub fn entities(&self) -> &BTreeMap<MaskToken, EntityId> {
        &self.entities
    }

    pub fn predicates(&self) -> &BTreeMap<MaskToken, PredicateId> {
        &self.predicates
    }

    pub fn types(&self) -> &BTreeMap<MaskToken, TypeId> {
        &self.types
    }

    pub fn numbers(&self) -> &BTreeMap<MaskToken, i64> {
        &self.numbers
    }

    /// Masks that may fill a slot of the given kind, in index order.
    pub fn candidates(&self, slot: SlotKind) -> Vec<MaskToken> {
        match slot {
            SlotKind::Entity => self.entities.keys().copied().collect(),
            SlotKind::Predicate => self.predicates.keys().copied().collect(),
            SlotKind::Type => self.types.keys().copied().collect(),
            SlotKind::Number => self.numbers.keys().copied().collect(),
        }
    }

    fn resolve(&self, slot: SlotKind, m: MaskToken) -> Result<GroundArg, DslError> {
        let missing = || DslError::UnresolvedMask(m);
        Ok(match slot {
            SlotKind::Entity => GroundArg::Entity(*self.entities.get(&m).ok_or_else(missing)?),
            SlotKind::Predicate => {
                GroundArg::Predicate(*self.predicates.get(&m).ok_or_else(missing)?)
            }
            SlotKind::Type => GroundArg::Type(*self.types.get(&m).ok_or_else(missing)?),
            SlotKind::Number => GroundArg::Number(*self.numbers.get(&m).ok_or_else(missing)?),
        })
    }

    fn reverse(&self, arg: GroundArg) -> Option<MaskToken> {
        fn find<V: PartialEq>(map: &BTreeMap<MaskToken, V>, v: &V) -> Option<MaskToken> {
            map.iter().find(|(_, x)| *x == v).map(|(m, _)| *m)
        }
        match arg {
            GroundArg::Entity(e) => find(&self.entities, &e),
            GroundArg::Predicate(p) => find(&self.predicates, &p),
            GroundArg::Type(t) => find(&self.types, &t),
            GroundArg::Number(n) => find(&self.numbers, &n),
        }
    }

    /// Substitutes KB ids for masks.
    pub fn unmask(&self, seq: &ActionSequence) -> Result<GroundedProgram, DslError> {
        let actions = seq
            .actions
            .iter()
            .map(|a| {
                let args =
                    a.op.slots()
                        .iter()
                        .zip(&a.args)
                        .map(|(&slot, &m)| self.resolve(slot, m))
                        .collect::<Result<Vec<_>, _>>()?;
                Ok(GroundedAction::from_parts(a.op, &args))
            })
            .collect::<Result<Vec<_>, DslError>>()?;
        Ok(GroundedProgram { actions })
    }

    /// Inverse of [`unmask`](Self::unmask); `None` if some artifact has no mask.
    pub fn mask(&self, program: &GroundedProgram) -> Option<ActionSequence> {
        let actions = program
            .actions
            .iter()
            .map(|g| {
                let args = g
                    .args()
                    .into_iter()
                    .map(|a| self.reverse(a))
                    .collect::<Option<Vec<_>>>()?;
                Action::new(g.op(), args).ok()
            })
            .collect::<Option<Vec<_>>>()?;
        ActionSequence::new(actions).ok()
    }
}

/// Label-level mask table as stored in dataset files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTableSpec {
    #[serde(default)]
    pub entities: BTreeMap<String, String>,
    #[serde(default)]
    pub predicates: BTreeMap<String, String>,
    #[serde(default)]
    pub types: BTreeMap<String, String>,
    #[serde(default)]
    pub numbers: BTreeMap<String, i64>,
}

impl MaskTableSpec {
    pub fn resolve(&self, kb: &KnowledgeBase) -> Result<MaskTable, DslError> {
        let unknown = |what: &str, l: &str| DslError::MaskTable(format!("unknown {what} `{l}`"));
        let mut table = MaskTable::new();
        for (m, label) in &self.entities {
            let e = kb.entity(label).ok_or_else(|| unknown("entity", label))?;
            table.bind_entity(m.parse()?, e)?;
        }
        for (m, label) in &self.predicates {
            let p = kb
                .predicate(label)
                .ok_or_else(|| unknown("predicate", label))?;
            table.bind_predicate(m.parse()?, p)?;
        }
        for (m, label) in &self.types {
            let t = kb.type_id(label).ok_or_else(|| unknown("type", label))?;
            table.bind_type(m.parse()?, t)?;
        }
        for (m, &n) in &self.numbers {
            table.bind_number(m.parse()?, n)?;
        }
        Ok(table)
    }

    pub fn from_table(table: &MaskTable, kb: &KnowledgeBase) -> Self {
        Self {
            entities: table
                .entities
                .iter()
                .map(|(m, &e)| (m.to_string(), kb.entity_label(e).to_owned()))
                .collect(),
            predicates: table
                .predicates
                .iter()
                .map(|(m, &p)| (m.to_string(), kb.predicate_label(p).to_owned()))
                .collect(),
            types: table
                .types
                .iter()
                .map(|(m, &t)| (m.to_string(), kb.type_label(t).to_owned()))
                .collect(),
            numbers: table
                .numbers
                .iter()
                .map(|(m, &n)| (m.to_string(), n))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroundArg {
    Entity(EntityId),
    Predicate(PredicateId),
    Type(TypeId),
    Number(i64),
}

/// An action whose arguments are KB ids and integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroundedAction {
    Select {
        e: EntityId,
        r: PredicateId,
        t: TypeId,
    },
    SelectAll {
        et: TypeId,
        r: PredicateId,
        t: TypeId,
    },
    Bool(EntityId),
    ArgMin,
    ArgMax,
    GreaterThan(EntityId),
    LessThan(EntityId),
    Inter {
        e: EntityId,
        r: PredicateId,
        t: TypeId,
    },
    Union {
        e: EntityId,
        r: PredicateId,
        t: TypeId,
    },
    Diff {
        e: EntityId,
        r: PredicateId,
        t: TypeId,
    },
    Count,
    AtLeast(i64),
    AtMost(i64),
    EqualsTo(i64),
    GetKeys,
    Almost(i64),
    Eoq,
}

impl GroundedAction {
    /// `args` must already match the operator's slot kinds.
    fn from_parts(op: Operator, args: &[GroundArg]) -> Self {
        use GroundArg as A;
        use GroundedAction as G;
        match (op, args) {
            (Operator::Select, &[A::Entity(e), A::Predicate(r), A::Type(t)]) => {
                G::Select { e, r, t }
            }
            (Operator::SelectAll, &[A::Type(et), A::Predicate(r), A::Type(t)]) => {
                G::SelectAll { et, r, t }
            }
            (Operator::Bool, &[A::Entity(e)]) => G::Bool(e),
            (Operator::ArgMin, []) => G::ArgMin,
            (Operator::ArgMax, []) => G::ArgMax,
            (Operator::GreaterThan, &[A::Entity(e)]) => G::GreaterThan(e),
            (Operator::LessThan, &[A::Entity(e)]) => G::LessThan(e),
            (Operator::Inter, &[A::Entity(e), A::Predicate(r), A::Type(t)]) => G::Inter { e, r, t },
            (Operator::Union, &[A::Entity(e), A::Predicate(r), A::Type(t)]) => G::Union { e, r, t },
            (Operator::Diff, &[A::Entity(e), A::Predicate(r), A::Type(t)]) => G::Diff { e, r, t },
            (Operator::Count, []) => G::Count,
            (Operator::AtLeast, &[A::Number(n)]) => G::AtLeast(n),
            (Operator::AtMost, &[A::Number(n)]) => G::AtMost(n),
            (Operator::EqualsTo, &[A::Number(n)]) => G::EqualsTo(n),
            (Operator::GetKeys, []) => G::GetKeys,
            (Operator::Almost, &[A::Number(n)]) => G::Almost(n),
            (Operator::Eoq, []) => G::Eoq,
            (op, args) => unreachable!("slot kinds checked before grounding: {op} {args:?}"),
        }
    }

    pub fn op(&self) -> Operator {
        use GroundedAction as G;
        match self {
            G::Select { .. } => Operator::Select,
            G::SelectAll { .. } => Operator::SelectAll,
            G::Bool(_) => Operator::Bool,
            G::ArgMin => Operator::ArgMin,
            G::ArgMax => Operator::ArgMax,
            G::GreaterThan(_) => Operator::GreaterThan,
            G::LessThan(_) => Operator::LessThan,
            G::Inter { .. } => Operator::Inter,
            G::Union { .. } => Operator::Union,
            G::Diff { .. } => Operator::Diff,
            G::Count => Operator::Count,
            G::AtLeast(_) => Operator::AtLeast,
            G::AtMost(_) => Operator::AtMost,
            G::EqualsTo(_) => Operator::EqualsTo,
            G::GetKeys => Operator::GetKeys,
            G::Almost(_) => Operator::Almost,
            G::Eoq => Operator::Eoq,
        }
    }

    pub fn args(&self) -> Vec<GroundArg> {
        use GroundArg as A;
        use GroundedAction as G;
        match *self {
            G::Select { e, r, t }
            | G::Inter { e, r, t }
            | G::Union { e, r, t }
            | G::Diff { e, r, t } => {
                vec![A::Entity(e), A::Predicate(r), A::Type(t)]
            }
            G::SelectAll { et, r, t } => vec![A::Type(et), A::Predicate(r), A::Type(t)],
            G::Bool(e) | G::GreaterThan(e) | G::LessThan(e) => vec![A::Entity(e)],
            G::AtLeast(n) | G::AtMost(n) | G::EqualsTo(n) | G::Almost(n) => vec![A::Number(n)],
            G::ArgMin | G::ArgMax | G::Count | G::GetKeys | G::Eoq => vec![],
        }
    }

    pub fn display<'a>(&'a self, kb: &'a KnowledgeBase) -> impl fmt::Display + 'a {
        struct D<'a>(&'a GroundedAction, &'a KnowledgeBase);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0.op())?;
                let args = self.0.args();
                if args.is_empty() {
                    return Ok(());
                }
                let parts: Vec<String> = args
                    .into_iter()
                    .map(|a| match a {
                        GroundArg::Entity(e) => self.1.entity_label(e).to_owned(),
                        GroundArg::Predicate(p) => self.1.predicate_label(p).to_owned(),
                        GroundArg::Type(t) => self.1.type_label(t).to_owned(),
                        GroundArg::Number(n) => n.to_string(),
                    })
                    .collect();
                write!(f, "({})", parts.join(", "))
            }
        }
        D(self, kb)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroundedProgram {
    pub actions: Vec<GroundedAction>,
}

impl GroundedProgram {
    pub fn display<'a>(&'a self, kb: &'a KnowledgeBase) -> String {
        self.actions
            .iter()
            .map(|a| a.display(kb).to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rivers() -> KnowledgeBase {
        KnowledgeBase::parse(
            include_str!("../fixtures/rivers.triples.tsv"),
            "t",
            include_str!("../fixtures/rivers.types.tsv"),
            "y",
        )
        .unwrap()
    }

    fn diff_program() -> ActionSequence {
        "Select(<E1>,<P1>,<T1>) | Diff(<E2>,<P1>,<T1>) | EOQ"
            .parse()
            .unwrap()
    }

    fn rivers_table(kb: &KnowledgeBase) -> MaskTable {
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
    fn tokenize_linearizes_without_punctuation() {
        let toks = diff_program().token_strings();
        assert_eq!(
            toks,
            ["Select", "<E1>", "<P1>", "<T1>", "Diff", "<E2>", "<P1>", "<T1>", "EOQ"]
        );
        let eoq = ActionSequence::new(vec![Action::new(Operator::Eoq, vec![]).unwrap()]).unwrap();
        assert_eq!(eoq.token_strings(), ["EOQ"]);
    }

    #[test]
    fn masking_the_grounded_diff_program() {
        let kb = rivers();
        let table = rivers_table(&kb);
        let e = |s| kb.entity(s).unwrap();
        let flow = kb.predicate("flow").unwrap();
        let river = kb.type_id("river").unwrap();
        let grounded = GroundedProgram {
            actions: vec![
                GroundedAction::Select {
                    e: e("India"),
                    r: flow,
                    t: river,
                },
                GroundedAction::Diff {
                    e: e("China"),
                    r: flow,
                    t: river,
                },
                GroundedAction::Eoq,
            ],
        };
        assert_eq!(table.mask(&grounded).unwrap(), diff_program());
        assert_eq!(table.unmask(&diff_program()).unwrap(), grounded);
        assert_eq!(
            grounded.display(&kb),
            "Select(India, flow, river), Diff(China, flow, river), EOQ"
        );
    }

    #[test]
    fn parse_token_examples() {
        assert!(matches!(
            parse_tokens(&["Select", "<E1>", "<P1>"]),
            Err(DslError::Malformed(_))
        ));
        assert_eq!(parse_tokens(&["Count", "EOQ"]).unwrap().len(), 2);
        assert!(parse_tokens(&["EOQ", "Count"]).is_err());
        assert!(parse_tokens(&["Count"]).is_err());
        assert!(parse_tokens(&["Bool", "<P1>", "EOQ"]).is_err());
        assert!(parse_tokens(&["what", "EOQ"]).is_err());
        assert!(parse_tokens::<&str>(&[]).is_err());
    }

    #[test]
    fn unmask_examples() {
        let kb = rivers();
        let table = rivers_table(&kb);
        let argmax: ActionSequence = "ArgMax | EOQ".parse().unwrap();
        let g = table.unmask(&argmax).unwrap();
        assert_eq!(g.actions, vec![GroundedAction::ArgMax, GroundedAction::Eoq]);
        let bad: ActionSequence = "Bool(<E3>) | EOQ".parse().unwrap();
        assert_eq!(
            table.unmask(&bad),
            Err(DslError::UnresolvedMask(MaskToken::entity(3)))
        );
    }

    #[test]
    fn number_masks_resolve_through_number_map() {
        let mut t = MaskTable::new();
        t.bind_number(MaskToken::entity(3), 14).unwrap();
        let seq: ActionSequence = "Almost(<E3>) | EOQ".parse().unwrap();
        assert_eq!(
            t.unmask(&seq).unwrap().actions[0],
            GroundedAction::Almost(14)
        );
        // an entity-slot use of a number mask does not resolve
        let seq: ActionSequence = "Bool(<E3>) | EOQ".parse().unwrap();
        assert!(t.unmask(&seq).is_err());
        assert!(t.bind_entity(MaskToken::entity(3), EntityId(0)).is_err());
    }

    #[test]
    fn mask_table_is_injective_per_kind() {
        let mut t = MaskTable::new();
        t.bind_entity(MaskToken::entity(1), EntityId(4)).unwrap();
        assert!(t.bind_entity(MaskToken::entity(2), EntityId(4)).is_err());
        assert!(t.bind_entity(MaskToken::entity(1), EntityId(5)).is_err());
        assert!(t.bind_type(MaskToken::entity(1), TypeId(0)).is_err());
    }

    #[test]
    fn mask_token_spelling() {
        assert_eq!(MaskToken::entity(12).to_string(), "<E12>");
        assert_eq!("<T3>".parse::<MaskToken>().unwrap(), MaskToken::ty(3));
        for bad in ["<E0>", "<X1>", "E1", "<E>", "<E1a>", "<P-1>"] {
            assert!(bad.parse::<MaskToken>().is_err(), "{bad}");
        }
    }

    #[test]
    fn text_form_accepts_empty_parens() {
        let a: ActionSequence = "SelectAll(<T1>,<P1>,<T2>) | ArgMax() | EOQ"
            .parse()
            .unwrap();
        assert_eq!(a.to_string(), "SelectAll(<T1>,<P1>,<T2>) | ArgMax | EOQ");
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        let body: Vec<Operator> = Operator::ALL
            .into_iter()
            .filter(|&o| o != Operator::Eoq)
            .collect();
        (
            proptest::sample::select(body),
            proptest::collection::vec(1u32..6, 3),
        )
            .prop_map(|(op, idx)| {
                let args = op
                    .slots()
                    .iter()
                    .zip(idx)
                    .map(|(s, i)| MaskToken::new(s.mask_kind(), i))
                    .collect();
                Action::new(op, args).unwrap()
            })
    }

    fn arb_sequence() -> impl Strategy<Value = ActionSequence> {
        proptest::collection::vec(arb_action(), 0..DEFAULT_MAX_ACTIONS).prop_map(|mut v| {
            v.push(Action::new(Operator::Eoq, vec![]).unwrap());
            ActionSequence::new(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tokenize_parse_round_trip(seq in arb_sequence()) {
            prop_assert_eq!(&parse_token_stream(&seq.tokenize()).unwrap(), &seq);
            prop_assert_eq!(&parse_tokens(&seq.token_strings()).unwrap(), &seq);
            prop_assert_eq!(&seq.to_string().parse::<ActionSequence>().unwrap(), &seq);
        }

        #[test]
        fn unmask_preserves_operators(seq in arb_sequence()) {
            let mut t = MaskTable::new();
            for i in 1..6u32 {
                t.bind_entity(MaskToken::entity(i), EntityId(i)).unwrap();
                t.bind_predicate(MaskToken::predicate(i), PredicateId(i)).unwrap();
                t.bind_type(MaskToken::ty(i), TypeId(i)).unwrap();
            }
            // number slots resolve only through the number map, so rewrite those masks
            let mut t2 = t.clone();
            t2.entities.clear();
            for i in 1..6u32 {
                t2.bind_number(MaskToken::entity(i), i as i64 * 10).unwrap();
            }
            let uses_numbers = seq.actions().iter().any(|a| a.op().slots().contains(&SlotKind::Number));
            let uses_entities = seq.actions().iter().any(|a| a.op().slots().contains(&SlotKind::Entity));
            let table = if uses_numbers && !uses_entities { &t2 } else { &t };
            if let Ok(g) = table.unmask(&seq) {
                prop_assert_eq!(g.actions.len(), seq.len());
                for (ga, a) in g.actions.iter().zip(seq.actions()) {
                    prop_assert_eq!(ga.op(), a.op());
                    prop_assert_eq!(ga.args().len(), a.op().arity());
                }
            } else {
                prop_assert!(uses_numbers);
            }
        }
    }
}
