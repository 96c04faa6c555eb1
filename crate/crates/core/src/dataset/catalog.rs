use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogItem {
    pub id: usize,
    /// Corpus subdirectory holding this item's images.
    pub dir: String,
    pub name: String,
    /// Price in minor currency units.
    pub unit_price: u64,
}

/// Item list with dense ids `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub currency: String,
    pub items: Vec<CatalogItem>,
}

impl Catalog {
    pub fn new(currency: impl Into<String>, mut items: Vec<CatalogItem>) -> Result<Self, DatasetError> {
        items.sort_by_key(|i| i.id);
        let c = Self {
            currency: currency.into(),
            items,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.items.is_empty() {
            return Err(DatasetError::Config("catalog has no items".into()));
        }
        if self.currency.trim().is_empty() {
            return Err(DatasetError::Config("catalog currency is empty".into()));
        }
        let mut dirs = HashSet::new();
        for (i, item) in self.items.iter().enumerate() {
            if item.id != i {
                return Err(DatasetError::Config(format!(
                    "item ids must be dense 0..{}; found {} at position {i}",
                    self.items.len(),
                    item.id
                )));
            }
            if item.dir.is_empty() || !dirs.insert(item.dir.as_str()) {
                return Err(DatasetError::Config(format!(
                    "duplicate or empty directory {:?}",
                    item.dir
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let c: Catalog = serde_json::from_str(text).map_err(|e| DatasetError::Config(format!("catalog: {e}")))?;
        Catalog::new(c.currency, c.items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| DatasetError::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&CatalogItem> {
        self.items.get(id)
    }

    pub fn by_dir(&self, dir: &str) -> Option<&CatalogItem> {
        self.items.iter().find(|i| i.dir == dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_shape() {
        let c = Catalog::from_json(
            r#"{"currency":"INR","items":[{"id":1,"dir":"b","name":"B","unit_price":330},
                {"id":0,"dir":"a","name":"A","unit_price":1250}]}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(0).unwrap().unit_price, 1250);
        assert_eq!(c.by_dir("b").unwrap().id, 1);
        assert_eq!(Catalog::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_catalogs() {
        for bad in [
            r#"{"currency":"INR","items":[]}"#,
            r#"{"currency":"INR","items":[{"id":1,"dir":"a","name":"A","unit_price":1}]}"#,
            r#"{"currency":"INR","items":[{"id":0,"dir":"a","name":"A","unit_price":1},{"id":1,"dir":"a","name":"B","unit_price":1}]}"#,
            r#"{"currency":"INR","items":[{"id":0,"dir":"a","name":"A","unit_price":-5}]}"#,
            r#"{"currency":"","items":[{"id":0,"dir":"a","name":"A","unit_price":5}]}"#,
        ] {
            assert!(matches!(Catalog::from_json(bad), Err(DatasetError::Config(_))), "{bad}");
        }
    }
}
