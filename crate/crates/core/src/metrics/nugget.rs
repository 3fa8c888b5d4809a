use crate::matcher::{MatchMatrix, MatchMode};
use crate::scalar::Scalar;

/// Share of gold nuggets covered; `None` when there are no gold nuggets.
pub fn recall<F: Scalar>(matrix: &MatchMatrix) -> Option<F> {
    let total = matrix.gold_ids.len();
    (total > 0).then(|| F::ratio(matrix.covered_gold().len(), total))
}

pub fn recall_ntn<F: Scalar>(matrix: &MatchMatrix) -> Option<F> {
    debug_assert_eq!(matrix.mode, MatchMode::Ntn);
    recall(matrix)
}

pub fn recall_ntr<F: Scalar>(matrix: &MatchMatrix) -> Option<F> {
    debug_assert_ne!(matrix.mode, MatchMode::Ntn);
    recall(matrix)
}

/// Share of extracted nuggets that cover some gold nugget. An empty
/// extracted set scores 0 and is reported through the second value.
pub fn precision_ntn<F: Scalar>(matrix: &MatchMatrix) -> (F, bool) {
    let total = matrix.extracted_ids.len();
    if total == 0 {
        return (F::zero(), true);
    }
    let covering = matrix.covering_extracted().map_or(0, |s| s.len());
    (F::ratio(covering, total), false)
}
