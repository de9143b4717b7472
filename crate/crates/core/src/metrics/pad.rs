//! Presentation-attack detection metrics over scored samples.
//!
//! Scores are oriented so that higher means more likely bona fide, and a
//! sample is classified live iff `score ≥ τ`.

use crate::error::{invalid, Error, Result};
use crate::image::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct PadTrialSet {
    scores: Vec<f32>,
    labels: Vec<Label>,
}

impl PadTrialSet {
    pub fn new(scores: Vec<f32>, labels: Vec<Label>) -> Result<Self> {
        if scores.is_empty() {
            return Err(invalid("PAD trial set is empty"));
        }
        if scores.len() != labels.len() {
            return Err(invalid("PAD trial set: score and label counts differ"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("PAD trial set contains a non-finite score".into()));
        }
        Ok(Self { scores, labels })
    }

    /// Builds a set from separate bona fide and attack score lists.
    pub fn from_classes(live: &[f32], attack: &[f32]) -> Result<Self> {
        let scores = live.iter().chain(attack).copied().collect();
        let labels = std::iter::repeat(Label::Live)
            .take(live.len())
            .chain(std::iter::repeat(Label::Spoof).take(attack.len()))
            .collect();
        Self::new(scores, labels)
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let (live, attack) = (self.count(Label::Live), self.count(Label::Spoof));
        if live == 0 || attack == 0 {
            return Err(Error::Data(format!(
                "PAD metrics need both classes (bona fide {live}, attack {attack})"
            )));
        }
        Ok((live, attack))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadRates {
    pub accuracy: f64,
    pub bpcer: f64,
    pub apcer: f64,
}

pub fn pad_rates(trials: &PadTrialSet, tau: f32) -> Result<PadRates> {
    if !tau.is_finite() {
        return Err(invalid("threshold must be finite"));
    }
    let (n_live, n_attack) = trials.require_both()?;
    let mut rejected_live = 0usize;
    let mut accepted_attack = 0usize;
    for (&s, &l) in trials.scores.iter().zip(&trials.labels) {
        match l {
            Label::Live if s < tau => rejected_live += 1,
            Label::Spoof if s >= tau => accepted_attack += 1,
            _ => {}
        }
    }
    let n = trials.len();
    Ok(PadRates {
        accuracy: (n - rejected_live - accepted_attack) as f64 / n as f64,
        bpcer: rejected_live as f64 / n_live as f64,
        apcer: accepted_attack as f64 / n_attack as f64,
    })
}

/// Probability that a random bona fide sample outscores a random attack
/// sample, ties counting one half (midrank Mann-Whitney statistic).
pub fn auc(trials: &PadTrialSet) -> Result<f64> {
    let (n_live, n_attack) = trials.require_both()?;
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.scores[a].total_cmp(&trials.scores[b]));
    let mut live_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && trials.scores[order[j + 1]] == trials.scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let live_here = order[i..=j]
            .iter()
            .filter(|&&k| trials.labels[k] == Label::Live)
            .count();
        live_rank_sum += mid * live_here as f64;
        i = j + 1;
    }
    let nl = n_live as f64;
    Ok((live_rank_sum - nl * (nl + 1.0) / 2.0) / (nl * n_attack as f64))
}

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f32,
    pub bpcer: f64,
    pub apcer: f64,
}

/// Operating points at every distinct score plus one rejecting everything,
/// in increasing threshold order. Usable for ROC (1−bpcer vs apcer) and DET plots.
pub fn roc_points(trials: &PadTrialSet) -> Result<Vec<OperatingPoint>> {
    trials.require_both()?;
    let mut thresholds: Vec<f32> = trials.scores.clone();
    thresholds.sort_by(f32::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().unwrap();
    let above = next_up(top);
    thresholds.push(above);
    thresholds
        .into_iter()
        .map(|t| {
            let r = pad_rates(trials, t)?;
            Ok(OperatingPoint {
                threshold: t,
                bpcer: r.bpcer,
                apcer: r.apcer,
            })
        })
        .collect()
}

fn next_up(x: f32) -> f32 {
    if x == f32::MAX {
        return x;
    }
    let bits = x.to_bits();
    let next = if x >= 0.0 {
        bits + 1
    } else if x == -0.0 {
        1
    } else {
        bits - 1
    };
    f32::from_bits(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Highest PAD accuracy; ties go to the smallest threshold.
    MaxAccuracy,
    /// Smallest threshold whose APCER does not exceed the target.
    BpcerAtApcer(f64),
}

/// Candidate thresholds: the lowest score (accept all) and the midpoint of
/// every gap between consecutive distinct scores. Each candidate accepts at
/// least one sample; a midpoint that rounds onto the lower score is
/// replaced by the upper score, which induces the same partition.
pub fn candidate_thresholds(scores: &[f32]) -> Vec<f32> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f32::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len());
    out.push(sorted[0]);
    for w in sorted.windows(2) {
        let mid = ((w[0] as f64 + w[1] as f64) / 2.0) as f32;
        out.push(if mid > w[0] && mid <= w[1] { mid } else { w[1] });
    }
    out
}

pub fn choose_threshold(trials: &PadTrialSet, policy: ThresholdPolicy) -> Result<f32> {
    trials.require_both()?;
    let candidates = candidate_thresholds(&trials.scores);
    match policy {
        ThresholdPolicy::MaxAccuracy => {
            let mut best = (f64::NEG_INFINITY, candidates[0]);
            for &t in &candidates {
                let acc = pad_rates(trials, t)?.accuracy;
                if acc > best.0 {
                    best = (acc, t);
                }
            }
            Ok(best.1)
        }
        ThresholdPolicy::BpcerAtApcer(target) => {
            if !(0.0..=1.0).contains(&target) {
                return Err(invalid(format!("APCER target {target} outside [0,1]")));
            }
            for &t in &candidates {
                if pad_rates(trials, t)?.apcer <= target {
                    return Ok(t);
                }
            }
            Err(Error::Data(format!(
                "APCER target {target} is unattainable on this set"
            )))
        }
    }
}
