//! The genus list: 43 named coral genera plus the `Hybrid` category.

use std::path::Path;

use thiserror::Error;

const BUNDLED: &str = include_str!("../data/taxonomy.txt");

/// Number of entries in the bundled list (43 genera + Hybrid).
pub const TAXONOMY_SIZE: usize = 44;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy file unreadable: {0}")]
    Io(#[from] std::io::Error),
    #[error("taxonomy is empty")]
    Empty,
    #[error("duplicate genus {0:?} in taxonomy")]
    Duplicate(String),
    #[error("line {line}: invalid genus name {name:?}")]
    InvalidName { line: usize, name: String },
}

/// A sorted, duplicate-free genus list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    names: Vec<String>,
}

impl Taxonomy {
    /// Parses one genus name per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let mut names = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let name = raw.trim();
            if name.is_empty() || name.starts_with('#') {
                continue;
            }
            if name.chars().any(|c| c.is_control() || c == ',' || c == '\t') {
                return Err(TaxonomyError::InvalidName {
                    line: i + 1,
                    name: name.to_string(),
                });
            }
            names.push(name.to_string());
        }
        if names.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(TaxonomyError::Duplicate(w[0].clone()));
        }
        Ok(Self { names })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, genus: &str) -> bool {
        self.names.binary_search_by(|n| n.as_str().cmp(genus)).is_ok()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }
}

/// The bundled genus list, sorted lexicographically.
pub fn canonical_taxonomy() -> Result<Taxonomy, TaxonomyError> {
    Taxonomy::parse(BUNDLED)
}
