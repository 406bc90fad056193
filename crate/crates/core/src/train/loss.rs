use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::float::Float;
use crate::model::cross_entropy;
use crate::tokenizer::TokenId;

/// Mean cross-entropy of `tokens[t]` under `logits[t - 1]` over positions
/// where `mask[t]` is set. The softmax spans every column of `logits`.
pub fn next_token_loss<F: Float>(logits: ArrayView2<F>, tokens: &[TokenId], mask: &[bool]) -> Result<f64> {
    if logits.nrows() != tokens.len() || mask.len() != tokens.len() {
        return Err(Error::Shape(format!(
            "{} logit rows, {} tokens, {} mask entries",
            logits.nrows(),
            tokens.len(),
            mask.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 1..tokens.len() {
        if !mask[t] {
            continue;
        }
        let target = tokens[t] as usize;
        if target >= logits.ncols() {
            return Err(Error::OutOfRange {
                what: "token",
                index: target,
                size: logits.ncols(),
            });
        }
        sum += cross_entropy(logits.row(t - 1), target);
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("loss mask covers no position"));
    }
    Ok(sum / count as f64)
}
