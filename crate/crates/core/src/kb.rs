//! In-memory knowledge base: relational triples plus entity-type declarations.
//!
//! Labels are interned into dense integer ids on load. The store is read-only
//! once built; both indexes are derived from the triple list and the type
//! declarations and can be rebuilt at any time for consistency checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}#{}", stringify!($name), self.0)
            }
        }
    };
}

id_type!(
    /// Interned entity label.
    EntityId
);
id_type!(
    /// Interned relation label.
    PredicateId
);
id_type!(
    /// Interned type (class) label.
    TypeId
);

pub type EntitySet = BTreeSet<EntityId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: type declaration for unknown entity `{entity}`")]
    DanglingType {
        file: String,
        line: usize,
        entity: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Bidirectional label <-> dense id map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Immutable triple store with subject-predicate and type-membership indexes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: Interner,
    predicates: Interner,
    types: Interner,
    triples: BTreeSet<Triple>,
    type_decls: BTreeSet<(EntityId, TypeId)>,
    sp_index: BTreeMap<(EntityId, PredicateId), EntitySet>,
    type_members: BTreeMap<TypeId, EntitySet>,
}

static EMPTY: EntitySet = BTreeSet::new();

impl KnowledgeBase {
    pub fn builder() -> KbBuilder {
        KbBuilder::default()
    }

    /// Parses the tab-separated triples and types files.
    pub fn load(triples_path: &Path, types_path: &Path) -> Result<Self, KbError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| KbError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let triples = read(triples_path)?;
        let types = read(types_path)?;
        Self::parse(
            &triples,
            &triples_path.display().to_string(),
            &types,
            &types_path.display().to_string(),
        )
    }

    pub fn parse(
        triples_src: &str,
        triples_name: &str,
        types_src: &str,
        types_name: &str,
    ) -> Result<Self, KbError> {
        let mut b = KbBuilder::default();
        for (line, fields) in data_lines(triples_src) {
            match fields.as_slice() {
                [s, p, o] => b.triple(s, p, o),
                _ => {
                    return Err(KbError::Parse {
                        file: triples_name.to_owned(),
                        line,
                        message: format!(
                            "expected `subject<TAB>predicate<TAB>object`, got {} field(s)",
                            fields.len()
                        ),
                    })
                }
            };
        }
        for (line, fields) in data_lines(types_src) {
            match fields.as_slice() {
                [e, t] => {
                    if b.kb.entities.get(e).is_none() {
                        return Err(KbError::DanglingType {
                            file: types_name.to_owned(),
                            line,
                            entity: (*e).to_owned(),
                        });
                    }
                    b.member(e, t);
                }
                _ => {
                    return Err(KbError::Parse {
                        file: types_name.to_owned(),
                        line,
                        message: format!(
                            "expected `entity<TAB>type`, got {} field(s)",
                            fields.len()
                        ),
                    })
                }
            }
        }
        Ok(b.build())
    }

    /// A1 retrieval: objects of `(e, r, ·)` that belong to type `t`.
    pub fn select_targets(&self, e: EntityId, r: PredicateId, t: TypeId) -> EntitySet {
        let objects = self.sp_index.get(&(e, r)).unwrap_or(&EMPTY);
        let members = self.members_of(t);
        objects.intersection(members).copied().collect()
    }

    pub fn members_of(&self, t: TypeId) -> &EntitySet {
        self.type_members.get(&t).unwrap_or(&EMPTY)
    }

    pub fn objects(&self, e: EntityId, r: PredicateId) -> &EntitySet {
        self.sp_index.get(&(e, r)).unwrap_or(&EMPTY)
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn predicate(&self, label: &str) -> Option<PredicateId> {
        self.predicates.get(label).map(PredicateId)
    }

    pub fn type_id(&self, label: &str) -> Option<TypeId> {
        self.types.get(label).map(TypeId)
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0).unwrap_or("?")
    }

    pub fn predicate_label(&self, id: PredicateId) -> &str {
        self.predicates.label(id.0).unwrap_or("?")
    }

    pub fn type_label(&self, id: TypeId) -> &str {
        self.types.label(id.0).unwrap_or("?")
    }

    pub fn entity_labels<'a>(&'a self, set: &'a EntitySet) -> impl Iterator<Item = &'a str> + 'a {
        set.iter().map(|&e| self.entity_label(e))
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    /// Number of types with at least one declared member.
    pub fn num_types(&self) -> usize {
        self.type_members.len()
    }

    pub fn sp_index(&self) -> &BTreeMap<(EntityId, PredicateId), EntitySet> {
        &self.sp_index
    }

    pub fn type_members(&self) -> &BTreeMap<TypeId, EntitySet> {
        &self.type_members
    }

    /// Serializes to the `(triples, types)` file formats accepted by [`Self::parse`].
    pub fn to_tsv(&self) -> (String, String) {
        let mut triples = String::new();
        for t in &self.triples {
            triples.push_str(&format!(
                "{}\t{}\t{}\n",
                self.entity_label(t.subject),
                self.predicate_label(t.predicate),
                self.entity_label(t.object)
            ));
        }
        let mut types = String::new();
        for &(e, t) in &self.type_decls {
            types.push_str(&format!(
                "{}\t{}\n",
                self.entity_label(e),
                self.type_label(t)
            ));
        }
        (triples, types)
    }

    /// Recomputes both indexes from the raw triples and declarations.
    pub fn rebuild_indexes(
        &self,
    ) -> (
        BTreeMap<(EntityId, PredicateId), EntitySet>,
        BTreeMap<TypeId, EntitySet>,
    ) {
        let mut sp: BTreeMap<(EntityId, PredicateId), EntitySet> = BTreeMap::new();
        for t in &self.triples {
            sp.entry((t.subject, t.predicate))
                .or_default()
                .insert(t.object);
        }
        let mut members: BTreeMap<TypeId, EntitySet> = BTreeMap::new();
        for &(e, t) in &self.type_decls {
            members.entry(t).or_default().insert(e);
        }
        (sp, members)
    }
}

fn data_lines(src: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    src.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

/// Incremental construction of a [`KnowledgeBase`] from labels.
#[derive(Default)]
pub struct KbBuilder {
    kb: KnowledgeBase,
}

impl KbBuilder {
    pub fn triple(&mut self, subject: &str, predicate: &str, object: &str) -> &mut Self {
        let t = Triple {
            subject: EntityId(self.kb.entities.intern(subject)),
            predicate: PredicateId(self.kb.predicates.intern(predicate)),
            object: EntityId(self.kb.entities.intern(object)),
        };
        self.kb.triples.insert(t);
        self
    }

    /// Declares `entity` a member of `ty`, interning the entity if needed.
    pub fn member(&mut self, entity: &str, ty: &str) -> &mut Self {
        let e = EntityId(self.kb.entities.intern(entity));
        let t = TypeId(self.kb.types.intern(ty));
        self.kb.type_decls.insert((e, t));
        self
    }

    /// Interns a type label without members, so it resolves to an empty set.
    pub fn declare_type(&mut self, ty: &str) -> &mut Self {
        self.kb.types.intern(ty);
        self
    }

    pub fn build(&mut self) -> KnowledgeBase {
        let mut kb = std::mem::take(&mut self.kb);
        let (sp, members) = kb.rebuild_indexes();
        kb.sp_index = sp;
        kb.type_members = members;
        kb
    }
}
