use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExtractError;

const BUILTIN: &str = include_str!("../../data/taxonomy.json");

/// A category label (`group/leaf`) and the keywords that evidence it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDef {
    pub label: String,
    pub keywords: BTreeSet<String>,
}

impl CategoryDef {
    /// Top-level group of a two-level label.
    pub fn group(&self) -> &str {
        self.label.split('/').next().unwrap_or(&self.label)
    }
}

/// Category keyword table, sorted by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    categories: Vec<CategoryDef>,
}

impl Taxonomy {
    pub fn new(mut categories: Vec<CategoryDef>) -> Result<Self, ExtractError> {
        if categories.is_empty() {
            return Err(ExtractError::EmptyTaxonomy);
        }
        categories.sort_by(|a, b| a.label.cmp(&b.label));
        if let Some(w) = categories.windows(2).find(|w| w[0].label == w[1].label) {
            return Err(ExtractError::InvalidTaxonomy(format!("duplicate label `{}`", w[0].label)));
        }
        if let Some(c) = categories.iter().find(|c| c.keywords.is_empty()) {
            return Err(ExtractError::InvalidTaxonomy(format!("label `{}` has no keywords", c.label)));
        }
        Ok(Self { categories })
    }

    /// The 40-category, two-level table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("built-in taxonomy is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ExtractError> {
        let parsed: Taxonomy = serde_json::from_str(text).map_err(|e| ExtractError::InvalidTaxonomy(e.to_string()))?;
        Self::new(parsed.categories)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ExtractError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn categories(&self) -> &[CategoryDef] {
        &self.categories
    }

    pub fn get(&self, label: &str) -> Option<&CategoryDef> {
        self.categories.binary_search_by(|c| c.label.as_str().cmp(label)).ok().map(|i| &self.categories[i])
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_shape() {
        let t = Taxonomy::builtin();
        assert_eq!(t.len(), 40);
        assert!(t.categories().iter().all(|c| c.keywords.len() == 10));
        assert_eq!(t.get("apparel/footwear").unwrap().group(), "apparel");
        assert!(t.get("apparel/missing").is_none());
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(Taxonomy::new(vec![]), Err(ExtractError::EmptyTaxonomy)));
    }
}
