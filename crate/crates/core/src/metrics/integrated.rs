//! Integrated match-plus-liveness rates over comparison trials.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialKind {
    /// Same finger, bona fide presentation.
    Genuine,
    /// Different finger, bona fide presentation.
    Impostor,
    /// Presentation attack against the template's finger.
    Attack,
}

impl TrialKind {
    pub const ALL: [TrialKind; 3] = [TrialKind::Genuine, TrialKind::Impostor, TrialKind::Attack];

    pub fn name(self) -> &'static str {
        match self {
            TrialKind::Genuine => "genuine",
            TrialKind::Impostor => "impostor",
            TrialKind::Attack => "attack",
        }
    }

    /// Whether the integrated system should accept this kind of trial.
    pub fn should_accept(self) -> bool {
        self == TrialKind::Genuine
    }
}

impl fmt::Display for TrialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown trial type {s:?}")))
    }
}

/// Scores of one query-versus-template comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTrial {
    pub trial_id: String,
    pub kind: TrialKind,
    pub match_score: f32,
    pub compare_liveness: f32,
    pub normal_liveness: f32,
}

/// Accept/reject decision applied to each comparison trial.
pub trait AcceptRule {
    fn accept(&self, trial: &ComparisonTrial) -> bool;
}

impl<F: Fn(&ComparisonTrial) -> bool> AcceptRule for F {
    fn accept(&self, trial: &ComparisonTrial) -> bool {
        self(trial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedRates {
    pub fnmr: f64,
    pub iapar: f64,
    pub im_accuracy: f64,
    /// Impostor acceptance rate; `None` when the set has no impostor trials.
    pub fmr: Option<f64>,
}

pub fn integrated_rates(trials: &[ComparisonTrial], rule: &dyn AcceptRule) -> Result<IntegratedRates> {
    let mut total = [0usize; 3];
    let mut accepted = [0usize; 3];
    for t in trials {
        let k = t.kind as usize;
        total[k] += 1;
        if rule.accept(t) {
            accepted[k] += 1;
        }
    }
    let [n_gen, n_imp, n_att] = total;
    if n_gen == 0 {
        return Err(Error::Data("FNMR needs at least one genuine trial".into()));
    }
    if n_att == 0 {
        return Err(Error::Data("IAPAR needs at least one attack trial".into()));
    }
    let [a_gen, a_imp, a_att] = accepted;
    let correct = a_gen + (n_imp - a_imp) + (n_att - a_att);
    Ok(IntegratedRates {
        fnmr: (n_gen - a_gen) as f64 / n_gen as f64,
        iapar: a_att as f64 / n_att as f64,
        im_accuracy: correct as f64 / trials.len() as f64,
        fmr: (n_imp > 0).then(|| a_imp as f64 / n_imp as f64),
    })
}
