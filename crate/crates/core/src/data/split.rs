use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::interactions::InteractionSequence;
use crate::error::{Error, Result};
use crate::prompt::PromptSample;
use crate::seed;

pub const DEFAULT_MAX_HISTORY: usize = 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<PromptSample>,
    pub validation: Vec<PromptSample>,
    pub test: Vec<PromptSample>,
}

fn window(items: &[usize], end: usize, max_history: usize) -> PromptSample {
    PromptSample {
        history: items[end.saturating_sub(max_history)..end].to_vec(),
        target: items[end],
    }
}

/// Each sequence's final item becomes a test target; every earlier position
/// with at least one predecessor becomes a training sample. Histories keep the
/// most recent `max_history` items. The training samples of a seeded
/// `val_fraction` of sequences go to validation instead.
pub fn leave_last_out_split(
    sequences: &[InteractionSequence],
    max_history: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if max_history == 0 {
        return Err(Error::invalid("max_history must be at least 1"));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.shuffle(&mut seed::rng(seed, "split/validation"));
    let n_val = (sequences.len() as f64 * val_fraction).round() as usize;
    let mut is_val = vec![false; sequences.len()];
    for &s in &order[..n_val] {
        is_val[s] = true;
    }

    let mut split = DatasetSplit::default();
    for (s, seq) in sequences.iter().enumerate() {
        let items = &seq.items;
        if items.len() < 2 {
            return Err(Error::invalid(format!(
                "sequence for {:?} has {} item(s)",
                seq.user_id,
                items.len()
            )));
        }
        let last = items.len() - 1;
        let bucket = if is_val[s] {
            &mut split.validation
        } else {
            &mut split.train
        };
        bucket.extend((1..last).map(|end| window(items, end, max_history)));
        split.test.push(window(items, last, max_history));
    }
    Ok(split)
}

pub fn write_samples(path: &Path, samples: &[PromptSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<PromptSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(items: &[usize]) -> InteractionSequence {
        InteractionSequence {
            user_id: "u".into(),
            items: items.to_vec(),
        }
    }

    #[test]
    fn three_items() {
        let split = leave_last_out_split(&[seq(&[0, 1, 2])], 20, 0.0, 0).unwrap();
        assert_eq!(split.test, vec![PromptSample { history: vec![0, 1], target: 2 }]);
        assert_eq!(split.train, vec![PromptSample { history: vec![0], target: 1 }]);
        assert!(split.validation.is_empty());
    }

    #[test]
    fn history_window() {
        let split = leave_last_out_split(&[seq(&[4, 5, 6, 7])], 1, 0.0, 0).unwrap();
        assert!(split.train.iter().chain(&split.test).all(|s| s.history.len() == 1));
        assert_eq!(split.test[0].history, vec![6]);
    }

    #[test]
    fn bad_arguments() {
        assert!(leave_last_out_split(&[seq(&[1, 2])], 0, 0.0, 0).is_err());
        assert!(leave_last_out_split(&[seq(&[1, 2])], 3, 1.0, 0).is_err());
        assert!(leave_last_out_split(&[seq(&[1])], 3, 0.0, 0).is_err());
    }
}
