//! System rankings, rank correlation and label agreement.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("rankings cover different runs (only in one: {0:?})")]
    MismatchedRuns(Vec<String>),
    #[error("need at least 2 runs, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: a ranking has no variation")]
    ZeroVariance,
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label vectors disagree on the key at position {0}")]
    KeyMismatch(usize),
    #[error("kappa undefined: chance agreement is 1 but observed agreement is not")]
    DegenerateKappa,
    #[error("empty label vector")]
    Empty,
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("no majority for item {0:?}")]
    NoMajority((String, String)),
    #[error("run `{0}` has a non-finite score")]
    NonFinite(String),
    #[error("duplicate run `{0}`")]
    DuplicateRun(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Runs ordered by score, best first; equal scores are ordered by tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SystemRanking<F: Scalar> {
    pub metric_name: String,
    pub entries: Vec<(String, F)>,
}

impl<F: Scalar> SystemRanking<F> {
    pub fn new<S: Into<String>>(metric_name: impl Into<String>, scores: impl IntoIterator<Item = (S, F)>) -> Result<Self> {
        let mut entries: Vec<(String, F)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (tag, score) in scores {
            let tag = tag.into();
            if !score.is_finite() {
                return Err(AnalysisError::NonFinite(tag));
            }
            if !seen.insert(tag.clone()) {
                return Err(AnalysisError::DuplicateRun(tag));
            }
            entries.push((tag, score));
        }
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        Ok(SystemRanking { metric_name: metric_name.into(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, run_tag: &str) -> Option<F> {
        self.entries.iter().find(|(t, _)| t == run_tag).map(|(_, s)| *s)
    }

    /// 1-based ranks, tied runs sharing the mean of their positions.
    pub fn ranks(&self) -> BTreeMap<String, F> {
        let scores: Vec<F> = self.entries.iter().map(|(_, s)| -*s).collect();
        self.entries.iter().map(|(t, _)| t.clone()).zip(average_ranks(&scores)).collect()
    }
}

/// Ascending 1-based ranks with ties averaged.
pub fn average_ranks<F: Scalar>(values: &[F]) -> Vec<F> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![F::zero(); values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j, 1-based mean is (i + j)/2 + 1
        let r = F::from_usize_exact(i + j + 2) / F::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn aligned<F: Scalar>(a: &SystemRanking<F>, b: &SystemRanking<F>) -> Result<(Vec<F>, Vec<F>)> {
    let sa: BTreeMap<&str, F> = a.entries.iter().map(|(t, s)| (t.as_str(), *s)).collect();
    let sb: BTreeMap<&str, F> = b.entries.iter().map(|(t, s)| (t.as_str(), *s)).collect();
    let only: Vec<String> = sa
        .keys()
        .filter(|k| !sb.contains_key(*k))
        .chain(sb.keys().filter(|k| !sa.contains_key(*k)))
        .map(|k| k.to_string())
        .collect();
    if !only.is_empty() {
        return Err(AnalysisError::MismatchedRuns(only));
    }
    if sa.len() < 2 {
        return Err(AnalysisError::TooFew(sa.len()));
    }
    Ok(sa.iter().map(|(k, &x)| (x, sb[k])).unzip())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauVariant {
    A,
    #[default]
    B,
}

/// Kendall's tau over the runs both rankings share.
pub fn kendall_tau<F: Scalar>(a: &SystemRanking<F>, b: &SystemRanking<F>, variant: TauVariant) -> Result<F> {
    let (x, y) = aligned(a, b)?;
    kendall_tau_scores(&x, &y, variant)
}

pub fn kendall_tau_scores<F: Scalar>(x: &[F], y: &[F], variant: TauVariant) -> Result<F> {
    let n = x.len();
    if n != y.len() {
        return Err(AnalysisError::LengthMismatch(n, y.len()));
    }
    if n < 2 {
        return Err(AnalysisError::TooFew(n));
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                tied_x += 1;
            }
            if dy == Equal {
                tied_y += 1;
            }
            if dx != Equal && dy != Equal {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let num = F::from_i64(concordant - discordant).unwrap();
    let den = match variant {
        TauVariant::A => F::from_i64(n0).unwrap(),
        TauVariant::B => (F::from_i64(n0 - tied_x).unwrap() * F::from_i64(n0 - tied_y).unwrap()).sqrt(),
    };
    if den == F::zero() {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(num / den)
}

/// Pearson correlation of the average-tie ranks.
pub fn spearman_rho<F: Scalar>(a: &SystemRanking<F>, b: &SystemRanking<F>) -> Result<F> {
    let (x, y) = aligned(a, b)?;
    spearman_rho_scores(&x, &y)
}

pub fn spearman_rho_scores<F: Scalar>(x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFew(x.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson<F: Scalar>(x: &[F], y: &[F]) -> Result<F> {
    let n = F::from_usize_exact(x.len());
    let mx = x.iter().copied().sum::<F>() / n;
    let my = y.iter().copied().sum::<F>() / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-F::one()).min(F::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Human,
    Model,
}

/// Binary labels keyed by `(response_id, nugget_id)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub source: LabelSource,
    pub labels: Vec<((String, String), bool)>,
}

impl LabelVector {
    pub fn new(source: LabelSource, labels: Vec<((String, String), bool)>) -> Self {
        LabelVector { source, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Agreement<F: Scalar> {
    pub accuracy: F,
    pub kappa: F,
    pub n: usize,
}

/// Accuracy and Cohen's kappa between two label vectors over the same keys.
pub fn agreement<F: Scalar>(human: &LabelVector, model: &LabelVector) -> Result<Agreement<F>> {
    if human.len() != model.len() {
        return Err(AnalysisError::LengthMismatch(human.len(), model.len()));
    }
    if human.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if let Some(i) = human.labels.iter().zip(&model.labels).position(|(a, b)| a.0 != b.0) {
        return Err(AnalysisError::KeyMismatch(i));
    }
    let a: Vec<bool> = human.labels.iter().map(|l| l.1).collect();
    let b: Vec<bool> = model.labels.iter().map(|l| l.1).collect();
    agreement_labels(&a, &b)
}

pub fn agreement_labels<F: Scalar>(a: &[bool], b: &[bool]) -> Result<Agreement<F>> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    let equal = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let a1 = a.iter().filter(|&&x| x).count();
    let b1 = b.iter().filter(|&&x| x).count();
    let p_o = F::ratio(equal, n);
    let (pa, pb) = (F::ratio(a1, n), F::ratio(b1, n));
    let p_e = pa * pb + (F::one() - pa) * (F::one() - pb);
    let kappa = if p_e == F::one() {
        if equal == n {
            F::one()
        } else {
            return Err(AnalysisError::DegenerateKappa);
        }
    } else {
        (p_o - p_e) / (F::one() - p_e)
    };
    Ok(Agreement { accuracy: p_o, kappa, n })
}

/// Average-tie rank of `target` and the number of ranked runs.
pub fn rank_submission<F: Scalar>(target: &str, ranking: &SystemRanking<F>) -> Result<(F, usize)> {
    let ranks = ranking.ranks();
    let r = ranks.get(target).copied().ok_or_else(|| AnalysisError::UnknownRun(target.to_string()))?;
    Ok((r, ranking.len()))
}

/// Per-item majority over annotator labels.
pub fn majority_vote(items: &[((String, String), Vec<bool>)]) -> Result<LabelVector> {
    let mut labels = Vec::with_capacity(items.len());
    for (key, votes) in items {
        let yes = votes.iter().filter(|&&v| v).count();
        let no = votes.len() - yes;
        if yes == no {
            return Err(AnalysisError::NoMajority(key.clone()));
        }
        labels.push((key.clone(), yes > no));
    }
    Ok(LabelVector::new(LabelSource::Human, labels))
}
