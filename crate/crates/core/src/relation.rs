//! Relation table: the ten KB relations of the event-event source data, the
//! surface phrases used in fact sentences, and the question template for each.
//!
//! The table is plain data (`data/relations.json`). A custom table with the
//! same schema can be loaded with [`RelationTable::from_json`].

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_RELATIONS: &str = include_str!("../data/relations.json");

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("relation `{relation}` has no fact phrases")]
    NoPhrases { relation: String },
    #[error("invalid relation table: {0}")]
    InvalidTable(#[from] serde_json::Error),
}

/// General entity category of a relation's objects.
///
/// Variant order is the canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "person")]
    Person,
    #[serde(rename = "team")]
    Team,
    #[serde(rename = "position")]
    Position,
    #[serde(rename = "school")]
    School,
    #[serde(rename = "employer")]
    Employer,
    #[serde(rename = "political party")]
    PoliticalParty,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Person,
        EntityType::Team,
        EntityType::Position,
        EntityType::School,
        EntityType::Employer,
        EntityType::PoliticalParty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Team => "team",
            EntityType::Position => "position",
            EntityType::School => "school",
            EntityType::Employer => "employer",
            EntityType::PoliticalParty => "political party",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = RelationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace('_', " ");
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| RelationError::UnknownEntityType(s.to_string()))
    }
}

/// Temporal direction of an event-event query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Before,
    After,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Before => "before",
            Direction::After => "after",
        }
    }

    /// The one-to-one form used in generated queries: "right before" / "right after".
    pub fn restricted(self) -> &'static str {
        match self {
            Direction::Before => "right before",
            Direction::After => "right after",
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Before => Direction::After,
            Direction::After => Direction::Before,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// One row of the relation table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    /// Human-readable relation name, e.g. `employer`.
    pub name: String,
    /// Knowledge-base property code, e.g. `P108`.
    pub code: String,
    /// Fact-sentence phrases; the first one is used when rendering.
    pub phrases: Vec<String>,
    /// Question template with `<subject>`, `<direction>` and `<object>` slots.
    pub template: String,
    pub entity_type: EntityType,
}

impl RelationSpec {
    pub fn canonical_phrase(&self) -> &str {
        &self.phrases[0]
    }
}

#[derive(Debug, Clone)]
pub struct RelationTable {
    relations: Vec<RelationSpec>,
}

impl RelationTable {
    pub fn from_json(json: &str) -> Result<Self, RelationError> {
        let relations: Vec<RelationSpec> = serde_json::from_str(json)?;
        if let Some(bad) = relations.iter().find(|r| r.phrases.is_empty()) {
            return Err(RelationError::NoPhrases {
                relation: bad.name.clone(),
            });
        }
        Ok(Self { relations })
    }

    /// The built-in ten-relation table.
    pub fn builtin() -> &'static RelationTable {
        static TABLE: OnceLock<RelationTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            RelationTable::from_json(BUILTIN_RELATIONS).expect("built-in relation table is valid")
        })
    }

    /// Look a relation up by name (`employer`) or code (`P108`), case-insensitively.
    pub fn lookup(&self, key: &str) -> Result<&RelationSpec, RelationError> {
        let key = key.trim();
        self.relations
            .iter()
            .find(|r| r.name.eq_ignore_ascii_case(key) || r.code.eq_ignore_ascii_case(key))
            .ok_or_else(|| RelationError::UnknownRelation(key.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationSpec> {
        self.relations.iter()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_has_ten_relations() {
        let table = RelationTable::builtin();
        assert_eq!(table.len(), 10);
        let employer = table.lookup("P108").unwrap();
        assert_eq!(employer.name, "employer");
        assert_eq!(employer.canonical_phrase(), "worked for");
        assert_eq!(table.lookup("Member of Sports Team").unwrap().code, "P54");
        assert!(matches!(
            table.lookup("spouse"),
            Err(RelationError::UnknownRelation(_))
        ));
    }

    #[test]
    fn every_entity_type_is_covered() {
        let table = RelationTable::builtin();
        for ty in EntityType::ALL {
            assert!(table.iter().any(|r| r.entity_type == ty), "{ty}");
        }
    }

    #[test]
    fn entity_type_parse_and_order() {
        assert_eq!(
            "political_party".parse::<EntityType>().unwrap(),
            EntityType::PoliticalParty
        );
        let mut sorted = EntityType::ALL;
        sorted.sort();
        assert_eq!(sorted, EntityType::ALL);
        assert_eq!(
            serde_json::to_string(&EntityType::PoliticalParty).unwrap(),
            "\"political party\""
        );
    }
}
