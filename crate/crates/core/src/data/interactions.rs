use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::ItemCatalog;
use crate::error::{Error, Result};

/// One line of an interaction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub external_item_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

/// A user's chronological item history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub user_id: String,
    pub items: Vec<usize>,
}

/// Parse a JSON-lines interaction log.
///
/// Items are indexed by first appearance. A user's records are ordered by
/// timestamp when every one of them carries one, otherwise by file order.
/// Users with fewer than two interactions are dropped.
pub fn load_interactions(path: &Path) -> Result<(ItemCatalog, Vec<InteractionSequence>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut catalog = ItemCatalog::default();
    let mut order: Vec<String> = Vec::new();
    let mut per_user: HashMap<String, Vec<(Option<i64>, usize)>> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InteractionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let item = catalog.intern(&rec.external_item_id, &rec.title);
        let events = per_user.entry(rec.user_id.clone()).or_insert_with(|| {
            order.push(rec.user_id.clone());
            Vec::new()
        });
        events.push((rec.timestamp, item));
    }

    let mut sequences = Vec::with_capacity(order.len());
    for user in order {
        let mut events = per_user.remove(&user).expect("user recorded");
        if events.iter().all(|(ts, _)| ts.is_some()) {
            events.sort_by_key(|(ts, _)| *ts);
        }
        if events.len() < 2 {
            log::warn!("dropping user {user:?}: {} interaction(s)", events.len());
            continue;
        }
        sequences.push(InteractionSequence {
            user_id: user,
            items: events.into_iter().map(|(_, i)| i).collect(),
        });
    }
    Ok((catalog, sequences))
}

/// Write sequences in the log schema, timestamps counting up per user.
pub fn write_interactions(
    path: &Path,
    catalog: &ItemCatalog,
    sequences: &[InteractionSequence],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for seq in sequences {
        for (t, &i) in seq.items.iter().enumerate() {
            let item = catalog.get(i)?;
            let rec = InteractionRecord {
                user_id: seq.user_id.clone(),
                external_item_id: item.external_id.clone(),
                title: item.title.clone(),
                timestamp: Some(t as i64),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
