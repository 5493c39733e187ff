//! Experience memory: seeded with hand-written experiences, recalled by exact
//! cosine similarity, grown by reflection, and persisted as JSON Lines.
//!
//! File layout: a header line `{"schema":1,"dim":D}` followed by one
//! experience per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EmbeddingVector;
use crate::reasoning::decode_action;
use crate::sim::MetaAction;

pub const SCHEMA_VERSION: u32 = 1;

/// The five hand-written seed experiences shipped with the crate.
pub const DEFAULT_SEEDS: &str = include_str!("../assets/seed_experiences.txt");

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("embedding dimension mismatch: store has {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate experience id {0:?}")]
    DuplicateId(String),
    #[error("experience {id:?}: reasoning does not decode to {action}")]
    Inconsistent { id: String, action: MetaAction },
    #[error("unsupported memory schema version {0}")]
    SchemaMismatch(u32),
    #[error("corrupt memory file at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("malformed seed template: {0}")]
    Template(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperienceKind {
    Init,
    Success,
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Sim,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub id: String,
    pub key: EmbeddingVector,
    pub description: String,
    pub reasoning: String,
    pub action: MetaAction,
    pub kind: ExperienceKind,
    pub created_at: DateTime<Utc>,
    pub source: Source,
}

impl Experience {
    /// A new experience whose action is read from the reasoning's decision line.
    pub fn from_reasoning(
        key: EmbeddingVector,
        description: impl Into<String>,
        reasoning: impl Into<String>,
        kind: ExperienceKind,
    ) -> Result<Self, MemoryError> {
        let reasoning = reasoning.into();
        let id = uuid::Uuid::new_v4().to_string();
        let action = decode_action(&reasoning).map_err(|_| MemoryError::Inconsistent {
            id: id.clone(),
            action: MetaAction::Idle,
        })?;
        Ok(Self {
            id,
            key,
            description: description.into(),
            reasoning,
            action,
            kind,
            created_at: Utc::now(),
            source: Source::Sim,
        })
    }

    fn check_consistent(&self) -> Result<(), MemoryError> {
        match decode_action(&self.reasoning) {
            Ok(a) if a == self.action => Ok(()),
            _ => Err(MemoryError::Inconsistent {
                id: self.id.clone(),
                action: self.action,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub experience: Experience,
    pub similarity: f64,
}

/// What `store_experience` did with the new item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreOutcome {
    Appended,
    /// An item with a byte-equal description was replaced in place.
    Replaced { superseded: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    dim: usize,
    items: Vec<Experience>,
    path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    dim: usize,
}

impl MemoryStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            items: Vec::new(),
            path: None,
        }
    }

    /// Builds a store from seed experiences, all marked as initial.
    pub fn init(seeds: Vec<Experience>, dim: usize) -> Result<Self, MemoryError> {
        let mut store = Self::new(dim);
        for mut exp in seeds {
            exp.kind = ExperienceKind::Init;
            store.check_new(&exp)?;
            if store.items.iter().any(|e| e.id == exp.id) {
                return Err(MemoryError::DuplicateId(exp.id));
            }
            store.items.push(exp);
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Experience] {
        &self.items
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn count_kind(&self, kind: ExperienceKind) -> usize {
        self.items.iter().filter(|e| e.kind == kind).count()
    }

    fn check_dim(&self, found: usize) -> Result<(), MemoryError> {
        if found != self.dim {
            return Err(MemoryError::DimMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    fn check_new(&self, exp: &Experience) -> Result<(), MemoryError> {
        self.check_dim(exp.key.dim())?;
        exp.check_consistent()
    }

    /// Top `k` experiences by cosine similarity, exhaustive search. Ties keep
    /// insertion order.
    pub fn recall(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RecallResult>, MemoryError> {
        self.check_dim(query.dim())?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, f64)> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, e)| (i, query.cosine(&e.key)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, similarity)| RecallResult {
                experience: self.items[i].clone(),
                similarity,
            })
            .collect())
    }

    /// Appends `exp`, or replaces the item whose description is byte-equal.
    pub fn store_experience(&mut self, exp: Experience) -> Result<StoreOutcome, MemoryError> {
        self.check_new(&exp)?;
        let same = self.items.iter().position(|e| e.description == exp.description);
        if self
            .items
            .iter()
            .enumerate()
            .any(|(i, e)| e.id == exp.id && Some(i) != same)
        {
            return Err(MemoryError::DuplicateId(exp.id));
        }
        match same {
            Some(i) => {
                let old = std::mem::replace(&mut self.items[i], exp);
                Ok(StoreOutcome::Replaced { superseded: old.id })
            }
            None => {
                self.items.push(exp);
                Ok(StoreOutcome::Appended)
            }
        }
    }

    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &Header { schema: SCHEMA_VERSION, dim: self.dim }).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for exp in &self.items {
            serde_json::to_writer(&mut out, exp).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        self.path = Some(path.to_path_buf());
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let corrupt = |line: usize, reason: String| MemoryError::Corrupt { line: line + 1, reason };

        let (n, header) = lines.next().ok_or_else(|| corrupt(0, "missing header".into()))?;
        let header: Header = serde_json::from_str(&header?).map_err(|e| corrupt(n, e.to_string()))?;
        if header.schema != SCHEMA_VERSION {
            return Err(MemoryError::SchemaMismatch(header.schema));
        }
        let mut store = Self::new(header.dim);
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let exp: Experience = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
            if exp.key.dim() != store.dim {
                return Err(corrupt(
                    n,
                    format!("key has {} values, header says {}", exp.key.dim(), store.dim),
                ));
            }
            if !exp.key.is_finite() {
                return Err(corrupt(n, "non-finite key value".into()));
            }
            exp.check_consistent()?;
            if store.items.iter().any(|e| e.id == exp.id) {
                return Err(MemoryError::DuplicateId(exp.id));
            }
            store.items.push(exp);
        }
        store.path = Some(path.to_path_buf());
        Ok(store)
    }
}

/// One hand-authored experience from a seed template file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedEntry {
    pub description: String,
    pub reasoning: String,
}

const SCENARIO_TAG: &str = "Scenario:";
const REASONING_TAG: &str = "Reasoning:";
const SEPARATOR: &str = "---";

/// Parses the plain-text seed format:
///
/// ```text
/// # comment
/// Scenario:
/// <scenario description>
/// Reasoning:
/// <step-by-step reasoning>
/// decision: IDLE
/// ---
/// ```
pub fn parse_seed_template(text: &str) -> Result<Vec<SeedEntry>, MemoryError> {
    let mut entries = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut flush = |block: &mut Vec<&str>| -> Result<(), MemoryError> {
        if block.iter().all(|l| l.trim().is_empty()) {
            block.clear();
            return Ok(());
        }
        let body = block.join("\n");
        block.clear();
        let s = body
            .find(SCENARIO_TAG)
            .ok_or_else(|| MemoryError::Template("block without Scenario:".into()))?;
        let r = body
            .find(REASONING_TAG)
            .filter(|&r| r > s)
            .ok_or_else(|| MemoryError::Template("block without Reasoning: after Scenario:".into()))?;
        let description = body[s + SCENARIO_TAG.len()..r].trim().to_string();
        let reasoning = body[r + REASONING_TAG.len()..].trim().to_string();
        if description.is_empty() || reasoning.is_empty() {
            return Err(MemoryError::Template("empty scenario or reasoning".into()));
        }
        if decode_action(&reasoning).is_err() {
            return Err(MemoryError::Template(format!(
                "reasoning has no decision line: {reasoning:?}"
            )));
        }
        entries.push(SeedEntry { description, reasoning });
        Ok(())
    };
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        if line.trim() == SEPARATOR {
            flush(&mut block)?;
        } else {
            block.push(line);
        }
    }
    flush(&mut block)?;
    Ok(entries)
}

/// Renders experiences in the seed template format.
pub fn render_seed_template(items: &[Experience]) -> String {
    items
        .iter()
        .map(|e| {
            format!(
                "{SCENARIO_TAG}\n{}\n{REASONING_TAG}\n{}\n",
                e.description.trim(),
                e.reasoning.trim()
            )
        })
        .collect::<Vec<_>>()
        .join(&format!("{SEPARATOR}\n"))
}
