//! The item space: every recommendable item with its external id and title.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_index: usize,
    pub external_id: String,
    pub title: String,
}

/// Ordered item list; position `i` holds the item with `item_index == i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemCatalog {
    items: Vec<Item>,
    by_external: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CatalogRecord {
    external_id: String,
    title: String,
}

impl ItemCatalog {
    /// Build a catalog from `(external_id, title)` pairs; indices follow input order.
    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut catalog = ItemCatalog::default();
        for (ext, title) in pairs {
            let ext = ext.into();
            if catalog.by_external.contains_key(&ext) {
                return Err(Error::invalid(format!("duplicate external_id {ext:?}")));
            }
            catalog.push_new(ext, title.into());
        }
        Ok(catalog)
    }

    /// Insert `external_id` if unseen and return its index either way.
    pub fn intern(&mut self, external_id: &str, title: &str) -> usize {
        if let Some(&idx) = self.by_external.get(external_id) {
            return idx;
        }
        self.push_new(external_id.to_string(), title.to_string())
    }

    fn push_new(&mut self, external_id: String, title: String) -> usize {
        let item_index = self.items.len();
        self.by_external.insert(external_id.clone(), item_index);
        self.items.push(Item {
            item_index,
            external_id,
            title,
        });
        item_index
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&Item> {
        self.items.get(index).ok_or(Error::OutOfRange {
            what: "item",
            index,
            size: self.items.len(),
        })
    }

    pub fn title(&self, index: usize) -> Result<&str> {
        self.get(index).map(|it| it.title.as_str())
    }

    pub fn index_of(&self, external_id: &str) -> Option<usize> {
        self.by_external.get(external_id).copied()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|it| it.title.as_str())
    }

    /// Read a JSON-lines catalog (`external_id`, `title` per line).
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut catalog = ItemCatalog::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CatalogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            if catalog.by_external.contains_key(&rec.external_id) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("duplicate external_id {:?}", rec.external_id),
                });
            }
            catalog.push_new(rec.external_id, rec.title);
        }
        Ok(catalog)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for it in &self.items {
            let rec = CatalogRecord {
                external_id: it.external_id.clone(),
                title: it.title.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_contiguous() {
        let c = ItemCatalog::from_pairs([("x", "a b"), ("y", "c"), ("z", "d")]).unwrap();
        assert_eq!(c.len(), 3);
        for (i, it) in c.items().iter().enumerate() {
            assert_eq!(it.item_index, i);
        }
        assert_eq!(c.index_of("y"), Some(1));
        assert!(c.get(3).is_err());
    }

    #[test]
    fn duplicate_external_id_rejected() {
        assert!(ItemCatalog::from_pairs([("x", "a"), ("x", "b")]).is_err());
    }

    #[test]
    fn intern_deduplicates() {
        let mut c = ItemCatalog::default();
        assert_eq!(c.intern("a", "t1"), 0);
        assert_eq!(c.intern("b", "t2"), 1);
        assert_eq!(c.intern("a", "other"), 0);
        assert_eq!(c.title(0).unwrap(), "t1");
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("catalog.jsonl");
        let c = ItemCatalog::from_pairs([("x", "star game"), ("y", "moon")]).unwrap();
        c.write_jsonl(&p).unwrap();
        assert_eq!(ItemCatalog::read_jsonl(&p).unwrap(), c);
    }
}
