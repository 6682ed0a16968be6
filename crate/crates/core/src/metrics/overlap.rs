//! Lexical overlap between referring expressions: RLO, Jaccard and ROUGE-L.

use crate::scalar::Real;

use super::text::{rouge_tokens, tokenize_content};
use super::MetricsError;

/// Share of the current RE's content tokens that also occur in the previous RE
/// (multiset intersection over `|Tok(curr)|`).
pub fn rlo<T: Real>(prev_re: &str, curr_re: &str) -> Result<T, MetricsError> {
    let prev = tokenize_content(prev_re);
    let curr = tokenize_content(curr_re);
    if curr.is_empty() {
        return Err(MetricsError::EmptyCurrentRe);
    }
    Ok(T::from_count(prev.intersection_len(&curr)) / T::from_count(curr.len()))
}

/// Jaccard index of the two REs' content-token sets.
pub fn jaccard<T: Real>(prev_re: &str, curr_re: &str) -> Result<T, MetricsError> {
    let a = tokenize_content(prev_re);
    let b = tokenize_content(curr_re);
    let (a, b) = (a.distinct(), b.distinct());
    let union = a.union(&b).count();
    if union == 0 {
        return Err(MetricsError::EmptyRes);
    }
    let inter = a.intersection(&b).count();
    Ok(T::from_count(inter) / T::from_count(union))
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
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

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeScore<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// ROUGE-L of `candidate` against `reference` on already-tokenized input.
pub fn rouge_l_tokens<T: Real, S: PartialEq>(reference: &[S], candidate: &[S]) -> RougeScore<T> {
    let lcs = lcs_len(reference, candidate);
    if lcs == 0 {
        return RougeScore {
            precision: T::zero(),
            recall: T::zero(),
            f1: T::zero(),
        };
    }
    let l = T::from_count(lcs);
    let precision = l / T::from_count(candidate.len());
    let recall = l / T::from_count(reference.len());
    let f1 = T::lit(2.0) * precision * recall / (precision + recall);
    RougeScore { precision, recall, f1 }
}

/// ROUGE-L of `candidate` against `reference` (lowercase, stopwords kept).
pub fn rouge_l<T: Real>(reference: &str, candidate: &str) -> RougeScore<T> {
    rouge_l_tokens(&rouge_tokens(reference), &rouge_tokens(candidate))
}

pub fn rouge_l_f1<T: Real>(a: &str, b: &str) -> T {
    rouge_l::<T>(a, b).f1
}
