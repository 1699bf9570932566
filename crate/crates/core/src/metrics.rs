//! ROUGE-L and top-k accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Lowercase, whitespace-split tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_len(candidate, reference) as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { lcs / n as f64 };
    let recall = ratio(reference.len());
    let precision = ratio(candidate.len());
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    RougeScore {
        recall,
        precision,
        f1,
    }
}

/// [`rouge_l`] over [`tokenize`]d strings.
pub fn rouge_l_text(candidate: &str, reference: &str) -> RougeScore {
    rouge_l(&tokenize(candidate), &tokenize(reference))
}

/// Fraction of rows whose gold label is among the first `k` predictions.
pub fn topk_accuracy<S: AsRef<str>, G: AsRef<str>>(
    predictions: &[Vec<S>],
    gold: &[G],
    k: usize,
) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} prediction rows for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.iter().take(k).any(|x| x.as_ref() == g.as_ref()))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}
