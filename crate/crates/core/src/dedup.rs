//! Entailment-based duplicate removal within one nugget set.
//!
//! Candidates are visited longest first (ties by original index). A
//! candidate is dropped when a nugget already retained entails it, or when
//! a nugget still to be visited entails it without being entailed back.
//! The second clause lets a strictly more general nugget win even when it
//! is shorter; under mutual entailment the longest nugget survives.

use thiserror::Error;

use crate::corpus::NuggetSet;
use crate::gateway::{EntailmentQuery, Gateway, GatewayError};

#[derive(Debug, Error)]
#[error("deduplication of turn `{}` aborted: {source}", .input.turn_id)]
pub struct DedupError {
    /// The set as it was passed in.
    pub input: NuggetSet,
    #[source]
    pub source: GatewayError,
}

/// Visiting order: text length in characters descending, then index.
pub fn canonical_order(set: &NuggetSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(set.nuggets[i].text.chars().count()), i));
    order
}

/// Retained indices given a full entailment matrix, `e[a][b]` meaning
/// nugget `a` entails nugget `b`. The diagonal is ignored.
pub fn select_survivors(order: &[usize], e: &[Vec<bool>]) -> Vec<usize> {
    let mut retained: Vec<usize> = Vec::new();
    for (pos, &n) in order.iter().enumerate() {
        let by_retained = retained.iter().any(|&r| e[r][n]);
        let by_later = order[pos + 1..].iter().any(|&l| e[l][n] && !e[n][l]);
        if !(by_retained || by_later) {
            retained.push(n);
        }
    }
    retained.sort_unstable();
    retained
}

pub fn deduplicate(gateway: &Gateway, set: NuggetSet) -> Result<NuggetSet, DedupError> {
    let n = set.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let verdicts = gateway.fan_out(&pairs, |&(a, b)| {
        gateway.entail(&EntailmentQuery::new(&set.nuggets[a].text, &set.nuggets[b].text))
    });
    let mut e = vec![vec![false; n]; n];
    for (&(a, b), v) in pairs.iter().zip(verdicts) {
        match v {
            Ok(v) => e[a][b] = v.entails(),
            Err(source) => return Err(DedupError { input: set, source }),
        }
    }
    let keep = select_survivors(&canonical_order(&set), &e);
    let before = set.len();
    let mut out = set;
    out.nuggets = keep.into_iter().map(|i| out.nuggets[i].clone()).collect();
    out.deduplicated = true;
    log::debug!("turn {}: {} -> {} nuggets after dedup", out.turn_id, before, out.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Nugget, NuggetSource};
    use crate::gateway::mock::*;
    use std::collections::BTreeSet;
    use std::sync::Mutex;

    fn set(texts: &[&str]) -> NuggetSet {
        let nuggets = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Nugget {
                nugget_id: format!("t:{i}"),
                turn_id: "t".into(),
                text: t.to_string(),
                source_passage_id: None,
                source: NuggetSource::Llm,
                char_span: None,
            })
            .collect();
        NuggetSet { turn_id: "t".into(), nuggets, deduplicated: false }
    }

    fn texts(s: &NuggetSet) -> Vec<&str> {
        s.iter().map(|n| n.text.as_str()).collect()
    }

    fn gw(b: impl crate::gateway::EntailmentBackend + 'static) -> Gateway {
        Gateway::builder().entailment(b).build()
    }

    #[test]
    fn reflexive_only_keeps_everything() {
        let out = deduplicate(&gw(ExactMatchEntailment), set(&["a", "bb", "c"])).unwrap();
        assert_eq!(texts(&out), ["a", "bb", "c"]);
        assert!(out.deduplicated);
    }

    #[test]
    fn one_way_entailment_keeps_entailer_either_length() {
        let e = |p: &str, h: &str| p.starts_with('A') && h.starts_with('B');
        assert_eq!(texts(&deduplicate(&gw(entailment_from("ab", e)), set(&["A long", "B"])).unwrap()), ["A long"]);
        assert_eq!(texts(&deduplicate(&gw(entailment_from("ab", e)), set(&["A", "B longer"])).unwrap()), ["A"]);
    }

    #[test]
    fn mutual_entailment_keeps_longest() {
        let all = entailment_from("all", |_, _| true);
        assert_eq!(texts(&deduplicate(&gw(all), set(&["bb", "cccc", "a"])).unwrap()), ["cccc"]);
        let all = entailment_from("all", |_, _| true);
        assert_eq!(texts(&deduplicate(&gw(all), set(&["xx", "yy", "z"])).unwrap()), ["xx"]);
    }

    #[test]
    fn never_queries_self_pairs() {
        let seen = std::sync::Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let b = FnEntailment::new("spy", move |q: &EntailmentQuery| {
            log.lock().unwrap().push((q.premise.clone(), q.hypothesis.clone()));
            Ok(crate::gateway::EntailmentVerdict::neutral(0.0))
        });
        deduplicate(&gw(b), set(&["a", "b", "c"])).unwrap();
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 6);
        assert!(seen.iter().all(|(p, h)| p != h));
    }

    #[test]
    fn failure_returns_input() {
        let b = FnEntailment::new("down", |_: &EntailmentQuery| Err(GatewayError::Mock("down".into())));
        let input = set(&["a", "b"]);
        let err = deduplicate(&gw(b), input.clone()).unwrap_err();
        assert_eq!(err.input, input);
    }

    #[test]
    fn substring_backend_properties() {
        let g = gw(SubstringEntailment);
        let input = set(&["red", "the red fox", "fox", "blue sky", "sky", "the red fox"]);
        let once = deduplicate(&g, input.clone()).unwrap();
        assert_eq!(texts(&once), ["the red fox", "blue sky"]);
        let twice = deduplicate(&g, once.clone()).unwrap();
        assert_eq!(texts(&twice), texts(&once));
        let ids: BTreeSet<_> = input.iter().map(|n| &n.nugget_id).collect();
        assert!(once.iter().all(|n| ids.contains(&n.nugget_id)));
    }

    #[test]
    fn empty_set() {
        assert!(deduplicate(&gw(ExactMatchEntailment), set(&[])).unwrap().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn survivors_are_a_nonempty_antichain(n in 1usize..8, bits in proptest::collection::vec(proptest::bool::ANY, 64)) {
            let e: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i != j && bits[i * 8 + j]).collect()).collect();
            let order: Vec<usize> = (0..n).collect();
            let kept = select_survivors(&order, &e);
            proptest::prop_assert!(!kept.is_empty());
            for &a in &kept {
                for &b in &kept {
                    proptest::prop_assert!(a == b || !e[a][b]);
                }
            }
        }
    }
}
