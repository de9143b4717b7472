//! Metric reports and the table layouts used for benchmark summaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::integrated::IntegratedRates;
use crate::metrics::pad::{PadRates, PadTrialSet};

/// PAD rates at one threshold together with how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct PadOperating {
    pub policy: String,
    pub threshold: f32,
    pub rates: PadRates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedOperating {
    pub match_threshold: f32,
    pub im_threshold: f32,
    pub rates: IntegratedRates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub n_live: usize,
    pub n_attack: usize,
    pub auc: f64,
    pub pad: Vec<PadOperating>,
    pub integrated: Option<IntegratedOperating>,
}

impl MetricReport {
    pub fn new(trials: &PadTrialSet, auc: f64, pad: Vec<PadOperating>) -> Self {
        Self {
            n_live: trials.count(crate::image::Label::Live),
            n_attack: trials.count(crate::image::Label::Spoof),
            auc,
            pad,
            integrated: None,
        }
    }

    /// Range checks and the accuracy/BPCER/APCER identity.
    pub fn check(&self) -> Result<()> {
        let n = (self.n_live + self.n_attack) as f64;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.auc) {
            return Err(Error::Numerical(format!("AUC {} outside [0,1]", self.auc)));
        }
        for op in &self.pad {
            let r = op.rates;
            if ![r.accuracy, r.bpcer, r.apcer].into_iter().all(in_unit) {
                return Err(Error::Numerical(format!("{}: PAD rate outside [0,1]", op.policy)));
            }
            let implied = 1.0 - (r.bpcer * self.n_live as f64 + r.apcer * self.n_attack as f64) / n;
            if (implied - r.accuracy).abs() > 1e-9 {
                return Err(Error::Numerical(format!(
                    "{}: accuracy {} inconsistent with BPCER/APCER ({implied})",
                    op.policy, r.accuracy
                )));
            }
        }
        if let Some(im) = &self.integrated {
            let r = im.rates;
            let mut all = vec![r.fnmr, r.iapar, r.im_accuracy];
            all.extend(r.fmr);
            if !all.into_iter().all(in_unit) {
                return Err(Error::Numerical("integrated rate outside [0,1]".into()));
            }
        }
        Ok(())
    }

    /// `metric,value` rows in a fixed order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(s, "{k},{v}");
        };
        row("n_live", self.n_live.to_string());
        row("n_attack", self.n_attack.to_string());
        row("auc", fmt_f64(self.auc));
        for op in &self.pad {
            let p = &op.policy;
            row(&format!("{p}.threshold"), op.threshold.to_string());
            row(&format!("{p}.pad_accuracy"), fmt_f64(op.rates.accuracy));
            row(&format!("{p}.bpcer"), fmt_f64(op.rates.bpcer));
            row(&format!("{p}.apcer"), fmt_f64(op.rates.apcer));
        }
        if let Some(im) = &self.integrated {
            row("im.match_threshold", im.match_threshold.to_string());
            row("im.im_threshold", im.im_threshold.to_string());
            row("im.fnmr", fmt_f64(im.rates.fnmr));
            row("im.iapar", fmt_f64(im.rates.iapar));
            row("im.im_accuracy", fmt_f64(im.rates.im_accuracy));
            if let Some(fmr) = im.rates.fmr {
                row("im.fmr_extra", fmt_f64(fmr));
            }
        }
        s
    }

    pub fn to_markdown(&self, algorithm: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "AUC: {:.4} ({} bona fide, {} attack)\n",
            self.auc, self.n_live, self.n_attack
        );
        s.push_str("| Threshold policy | τ | PAD Acc[%] | BPCER[%] | APCER[%] |\n|---|---|---|---|---|\n");
        for op in &self.pad {
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.2} | {:.2} | {:.2} |",
                op.policy,
                op.threshold,
                pct(op.rates.accuracy),
                pct(op.rates.bpcer),
                pct(op.rates.apcer)
            );
        }
        if let Some(im) = &self.integrated {
            let pad_acc = self.pad.first().map(|o| o.rates.accuracy).unwrap_or(f64::NAN);
            s.push('\n');
            s.push_str(&accuracy_table(&[AccuracyRow {
                algorithm: algorithm.to_string(),
                pad_accuracy: pad_acc,
                im_accuracy: im.rates.im_accuracy,
            }]));
            let _ = writeln!(
                s,
                "\nFNMR {:.2}% | IAPAR {:.2}% | τ_match {:.4} | τ_im {:.4}",
                pct(im.rates.fnmr),
                pct(im.rates.iapar),
                im.match_threshold,
                im.im_threshold
            );
            if let Some(fmr) = im.rates.fmr {
                let _ = writeln!(s, "FMR (extra) {:.2}%", pct(fmr));
            }
        }
        s
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.12}")
}

fn pct(v: f64) -> f64 {
    v * 100.0
}

/// One row of the extraction benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub algorithm: String,
    pub time_ms: f64,
    pub feat_size: usize,
    pub accuracy: Option<f64>,
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("| Algo | Overall Time[ms] | Feat size | Acc[%] |\n|---|---|---|---|\n");
    for r in rows {
        let acc = r.accuracy.map_or_else(|| "-".to_string(), |a| format!("{:.2}", pct(a)));
        let _ = writeln!(s, "| {} | {:.2} | {} | {} |", r.algorithm, r.time_ms, r.feat_size, acc);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub algorithm: String,
    pub pad_accuracy: f64,
    pub im_accuracy: f64,
}

pub fn accuracy_table(rows: &[AccuracyRow]) -> String {
    let mut s = String::from("| Algorithm | Overall PAD Accuracy [%] | Overall IM Accuracy [%] |\n|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} |",
            r.algorithm,
            pct(r.pad_accuracy),
            pct(r.im_accuracy)
        );
    }
    s
}

/// One recipe's validation AUC in the ablation overview.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub recipe: String,
    pub mode: String,
    pub val_auc: f64,
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("| Recipe | Mode | Val AUC[%] |\n|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} | {:.2} |", r.recipe, r.mode, pct(r.val_auc));
    }
    s
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("recipe,mode,val_auc\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.recipe, r.mode, fmt_f64(r.val_auc));
    }
    s
}
