use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Qrels, RetrievalRun};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    #[default]
    Linear,
    Exponential,
}

impl Gain {
    fn of<F: Scalar>(self, grade: u8) -> F {
        match self {
            Gain::Linear => F::from_u8(grade).unwrap(),
            Gain::Exponential => F::from_u32((1u32 << grade) - 1).unwrap(),
        }
    }
}

/// Discounted cumulative gain of a graded list, discount `1/log2(rank+1)`.
pub fn dcg<F: Scalar>(grades: impl IntoIterator<Item = u8>, gain: Gain) -> F {
    grades
        .into_iter()
        .enumerate()
        .map(|(i, g)| gain.of::<F>(g) / F::from_usize_exact(i + 2).log2())
        .fold(F::zero(), |a, b| a + b)
}

fn grade_of(judged: &BTreeMap<String, u8>, pid: &str) -> u8 {
    judged.get(pid).copied().unwrap_or(0)
}

/// `None` when no judged passage has a positive grade.
pub fn ndcg_at<F: Scalar>(ranking: &[&str], judged: &BTreeMap<String, u8>, k: usize, gain: Gain) -> Option<F> {
    let mut ideal: Vec<u8> = judged.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: F = dcg(ideal.into_iter().take(k), gain);
    let got: F = dcg(ranking.iter().take(k).map(|p| grade_of(judged, p)), gain);
    Some(got / idcg)
}

fn is_rel(judged: &BTreeMap<String, u8>, pid: &str, threshold: u8) -> bool {
    grade_of(judged, pid) >= threshold
}

/// Relevant passages in the top `k`, divided by `k`.
pub fn precision_at<F: Scalar>(ranking: &[&str], judged: &BTreeMap<String, u8>, k: usize, threshold: u8) -> F {
    let hits = ranking.iter().take(k).filter(|p| is_rel(judged, p, threshold)).count();
    F::ratio(hits, k)
}

/// `None` when the turn has no relevant passage.
pub fn recall_at<F: Scalar>(ranking: &[&str], judged: &BTreeMap<String, u8>, k: usize, threshold: u8) -> Option<F> {
    let total = judged.values().filter(|&&g| g >= threshold).count();
    (total > 0).then(|| F::ratio(ranking.iter().take(k).filter(|p| is_rel(judged, p, threshold)).count(), total))
}

/// Average precision over the first `depth` ranks; `None` when the turn
/// has no relevant passage.
pub fn average_precision<F: Scalar>(ranking: &[&str], judged: &BTreeMap<String, u8>, depth: usize, threshold: u8) -> Option<F> {
    let total = judged.values().filter(|&&g| g >= threshold).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = F::zero();
    for (i, p) in ranking.iter().take(depth).enumerate() {
        if is_rel(judged, p, threshold) {
            hits += 1;
            sum = sum + F::ratio(hits, i + 1);
        }
    }
    Some(sum / F::from_usize_exact(total))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub ndcg_ks: Vec<usize>,
    pub cutoffs: Vec<usize>,
    pub depth: usize,
    pub threshold: u8,
    pub gain: Gain,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { ndcg_ks: vec![3, 5], cutoffs: vec![20], depth: 1000, threshold: 1, gain: Gain::Linear }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RetrievalScores<F: Scalar> {
    pub run_tag: String,
    pub per_turn: BTreeMap<String, BTreeMap<String, F>>,
    pub means: BTreeMap<String, F>,
    /// Turns left out of some metric's mean, with the reason.
    pub excluded: BTreeMap<String, String>,
}

/// Scores every judged turn. A turn missing from the run scores 0; a turn
/// with no relevant passage is left out of nDCG, recall and MAP.
pub fn evaluate_retrieval<F: Scalar>(run: &RetrievalRun, qrels: &Qrels, cfg: &RetrievalConfig) -> RetrievalScores<F> {
    let mut per_turn = BTreeMap::new();
    let mut excluded = BTreeMap::new();
    for (turn_id, judged) in &qrels.judgments {
        let ranking: Vec<&str> = run.passage_ids(turn_id).collect();
        if ranking.is_empty() {
            log::warn!("run {}: turn {turn_id} missing, scored 0", run.run_tag);
        }
        let mut m = BTreeMap::new();
        for &k in &cfg.ndcg_ks {
            match ndcg_at::<F>(&ranking, judged, k, cfg.gain) {
                Some(v) => {
                    m.insert(format!("ndcg@{k}"), v);
                }
                None => {
                    excluded.insert(turn_id.clone(), "no relevant passage".to_string());
                }
            }
        }
        for &k in &cfg.cutoffs {
            m.insert(format!("P@{k}"), precision_at::<F>(&ranking, judged, k, cfg.threshold));
            if let Some(r) = recall_at::<F>(&ranking, judged, k, cfg.threshold) {
                m.insert(format!("R@{k}"), r);
            } else {
                excluded.insert(turn_id.clone(), "no relevant passage".to_string());
            }
        }
        if let Some(ap) = average_precision::<F>(&ranking, judged, cfg.depth, cfg.threshold) {
            m.insert("map".to_string(), ap);
        }
        per_turn.insert(turn_id.clone(), m);
    }
    for turn in excluded.keys() {
        log::warn!("run {}: turn {turn} has no relevant passage; excluded from rank-based means", run.run_tag);
    }
    let names: std::collections::BTreeSet<String> = per_turn.values().flat_map(|m| m.keys().cloned()).collect();
    let means = names
        .into_iter()
        .filter_map(|n| mean(per_turn.values().filter_map(|m| m.get(&n).copied())).map(|v| (n, v)))
        .collect();
    RetrievalScores { run_tag: run.run_tag.clone(), per_turn, means, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_qrels, parse_trec_run, ParseMode};

    fn judged(pairs: &[(&str, u8)]) -> BTreeMap<String, u8> {
        pairs.iter().map(|(p, g)| (p.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_examples() {
        let j = judged(&[("d1", 3)]);
        assert_eq!(ndcg_at::<f64>(&["d1", "x"], &j, 5, Gain::Linear), Some(1.0));
        let j = judged(&[("d1", 3), ("d2", 1)]);
        let v = ndcg_at::<f64>(&["d2", "d1"], &j, 2, Gain::Linear).unwrap();
        let oracle = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.7967).abs() < 1e-4);
        assert_eq!(ndcg_at::<f64>(&["x", "y"], &j, 2, Gain::Linear), Some(0.0));
        assert_eq!(ndcg_at::<f64>(&["x"], &judged(&[("d", 0)]), 2, Gain::Linear), None);
        let e = ndcg_at::<f64>(&["d2", "d1"], &j, 2, Gain::Exponential).unwrap();
        assert!((e - (1.0 + 7.0 / 3f64.log2()) / (7.0 + 1.0 / 3f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn binary_examples() {
        let j = judged(&[("a", 1), ("b", 2)]);
        assert_eq!(precision_at::<f64>(&["a", "b"], &j, 2, 1), 1.0);
        assert_eq!(precision_at::<f64>(&["a"], &j, 4, 1), 0.25);
        assert_eq!(average_precision::<f64>(&["a"], &judged(&[("a", 1)]), 1000, 1), Some(1.0));
        assert_eq!(average_precision::<f64>(&["x", "a", "y", "b"], &j, 1000, 1), Some(0.5));
        assert_eq!(average_precision::<f64>(&["x", "a", "y", "b"], &j, 3, 1), Some(0.25));
        assert_eq!(recall_at::<f64>(&["x", "b"], &j, 2, 2), Some(1.0));
        assert_eq!(recall_at::<f64>(&["x"], &judged(&[("a", 0)]), 2, 1), None);
    }

    #[test]
    fn run_level() {
        let qrels = parse_qrels("1 0 a 2\n1 0 b 0\n2 0 c 1\n3 0 d 0\n").unwrap();
        let run = parse_trec_run("1 Q0 b 1 2.0 r\n1 Q0 a 2 1.0 r\n", ParseMode::Strict).unwrap();
        let cfg = RetrievalConfig { ndcg_ks: vec![1], cutoffs: vec![2], ..Default::default() };
        let s = evaluate_retrieval::<f64>(&run, &qrels, &cfg);
        assert_eq!(s.per_turn["1"]["P@2"], 0.5);
        assert_eq!(s.per_turn["2"]["P@2"], 0.0);
        assert_eq!(s.per_turn["2"]["ndcg@1"], 0.0);
        assert!(!s.per_turn["3"].contains_key("ndcg@1"));
        assert!(s.excluded.contains_key("3"));
        assert_eq!(s.means["P@2"], 0.5 / 3.0);
        assert_eq!(s.means["map"], 0.25);
        assert_eq!(s.means["ndcg@1"], 0.0);
    }
}
