//! Cross-entropy, KL divergence, mutual-learning and distillation losses.
//!
//! Each loss exists twice: a plain f64 evaluation on probability rows and a
//! graph builder used during training. The graph builders return both the
//! scalar node to differentiate and the bookkeeping [`LossValue`].

use std::collections::BTreeMap;

use autodiff::{log_softmax_rows, softmax_rows, Graph, Tensor, Var};

use crate::error::{invalid, Error, Result};

/// Probability rows must sum to one within this tolerance.
pub const DIST_TOL: f64 = 1e-5;
/// Clamp applied inside logarithms of probabilities.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponent {
    pub weight: f32,
    pub value: f32,
}

/// A scalar loss and its named, weighted parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub total: f32,
    pub components: BTreeMap<&'static str, LossComponent>,
}

impl LossValue {
    pub fn single(name: &'static str, value: f32) -> Self {
        Self::from_parts(&[(name, 1.0, value)])
    }

    pub fn from_parts(parts: &[(&'static str, f32, f32)]) -> Self {
        let mut components = BTreeMap::new();
        let mut total = 0.0f64;
        for &(name, weight, value) in parts {
            total += weight as f64 * value as f64;
            components.insert(name, LossComponent { weight, value });
        }
        Self {
            total: total as f32,
            components,
        }
    }

    pub fn component(&self, name: &str) -> Option<f32> {
        self.components.get(name).map(|c| c.value)
    }

    /// Recomputed weighted sum of the components.
    pub fn weighted_sum(&self) -> f64 {
        self.components.values().map(|c| c.weight as f64 * c.value as f64).sum()
    }
}

/// Training target of one sample: class probabilities, index 0 = live.
pub type Target = [f32; 2];

fn check_distribution(p: &[f32], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = p.iter().map(|&v| v as f64).sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(invalid(format!("{what}: entries sum to {s}, expected 1")));
    }
    Ok(())
}

/// `−Σ t_k log softmax(logits)_k` for one sample.
pub fn cross_entropy(logits: &[f32], target: &[f32]) -> Result<LossValue> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(invalid("cross_entropy: logits and target lengths differ"));
    }
    check_distribution(target, "cross_entropy target")?;
    let logp = log_softmax_f64(logits);
    let ce: f64 = target.iter().zip(&logp).map(|(&t, &lp)| -(t as f64) * lp).sum();
    Ok(LossValue::single("ce", ce as f32))
}

fn log_softmax_f64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = logits.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&v| v as f64 - lse).collect()
}

/// `Σ p_k log(p_k / q_k)` with both logs clamped at 1e-12; terms with
/// `p_k = 0` vanish.
pub fn kl_div(p: &[f32], q: &[f32]) -> Result<f32> {
    if p.len() != q.len() || p.is_empty() {
        return Err(invalid("kl_div: length mismatch"));
    }
    check_distribution(p, "kl_div p")?;
    check_distribution(q, "kl_div q")?;
    let mut kl = 0.0f64;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk > 0.0 {
            let (pk, qk) = (pk as f64, qk as f64);
            kl += pk * (pk.max(LOG_EPS).ln() - qk.max(LOG_EPS).ln());
        }
    }
    Ok(kl.max(0.0) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f32,
    pub alpha: f32,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 5.0,
            alpha: 0.5,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "distillation temperature {} must be > 0",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "distillation alpha {} outside [0,1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Weight of the KL term, `α·T²`.
    pub fn kl_weight(&self) -> f32 {
        self.alpha * self.temperature * self.temperature
    }
}

/// Single-sample distillation loss:
/// `(1−α)·CE(student, y) + α·T²·KL(softmax(teacher/T) ‖ softmax(student/T))`.
pub fn distill_loss(student: &[f32], teacher: &[f32], target: &[f32], cfg: &DistillConfig) -> Result<LossValue> {
    cfg.validate()?;
    if student.len() != teacher.len() {
        return Err(invalid("distill_loss: student and teacher logits differ in length"));
    }
    let ce = cross_entropy(student, target)?.total;
    let t = cfg.temperature;
    let soft = |l: &[f32]| softmax_rows(&l.iter().map(|v| v / t).collect::<Vec<_>>(), l.len());
    let kl = kl_div(&soft(teacher), &soft(student))?;
    Ok(LossValue::from_parts(&[
        ("ce", 1.0 - cfg.alpha, ce),
        ("kl-distill", cfg.kl_weight(), kl),
    ]))
}

// ---------------------------------------------------------------------------
// graph builders

fn targets_tensor(targets: &[Target]) -> Result<Tensor> {
    for t in targets {
        check_distribution(t, "training target")?;
    }
    Ok(Tensor::new(
        vec![targets.len(), 2],
        targets.iter().flatten().copied().collect(),
    )?)
}

fn scalar(g: &Graph, v: Var) -> f32 {
    g.value(v).data()[0]
}

/// Batch-mean cross-entropy of `[N,2]` logits against soft or one-hot targets.
pub fn cross_entropy_graph(g: &mut Graph, logits: Var, targets: &[Target]) -> Result<(Var, f32)> {
    let n = check_batch(g, logits, targets.len())?;
    let t = g.constant(targets_tensor(targets)?);
    let logp = g.log_softmax(logits)?;
    let prod = g.mul(logp, t)?;
    let s = g.sum(prod)?;
    let loss = g.scale(s, -1.0 / n as f32)?;
    Ok((loss, scalar(g, loss)))
}

fn check_batch(g: &Graph, logits: Var, n: usize) -> Result<usize> {
    let shape = g.shape(logits);
    if shape.len() != 2 || shape[1] != 2 || shape[0] != n || n == 0 {
        return Err(invalid(format!("expected [{n},2] logits, got {shape:?}")));
    }
    Ok(n)
}

/// Batch-mean `KL(p ‖ softmax(logits/T))` where `p = softmax(reference/T)`
/// is a constant. The constant's log-probabilities come from the same
/// routine as the graph's, so equal inputs give exactly zero.
pub fn kl_to_constant_graph(g: &mut Graph, reference: &[f32], logits: Var, temperature: f32) -> Result<(Var, f32)> {
    let n = check_batch(g, logits, reference.len() / 2)?;
    if reference.len() != 2 * n {
        return Err(invalid("reference logits must have two entries per sample"));
    }
    let scaled_ref: Vec<f32> = if temperature == 1.0 {
        reference.to_vec()
    } else {
        // same arithmetic as the graph's scale op below
        let inv = 1.0 / temperature;
        reference.iter().map(|v| v * inv).collect()
    };
    let log_p = log_softmax_rows(&scaled_ref, 2);
    let p: Vec<f32> = log_p.iter().map(|v| v.exp()).collect();
    let log_p = g.constant(Tensor::new(vec![n, 2], log_p)?);
    let p = g.constant(Tensor::new(vec![n, 2], p)?);
    let z = if temperature == 1.0 {
        logits
    } else {
        g.scale(logits, 1.0 / temperature)?
    };
    let log_q = g.log_softmax(z)?;
    let diff = g.sub(log_p, log_q)?;
    let terms = g.mul(p, diff)?;
    let s = g.sum(terms)?;
    let loss = g.scale(s, 1.0 / n as f32)?;
    let value = scalar(g, loss);
    Ok((loss, value))
}

/// One peer's mutual-learning objective: `CE(own, y) + KL(p_peer ‖ p_own)`
/// with the peer's prediction entering as a constant.
pub fn mutual_objective(g: &mut Graph, own: Var, peer: Var, targets: &[Target]) -> Result<(Var, LossValue)> {
    let peer_logits = g.value(peer).data().to_vec();
    let (ce, ce_v) = cross_entropy_graph(g, own, targets)?;
    let (kl, kl_v) = kl_to_constant_graph(g, &peer_logits, own, 1.0)?;
    let total = g.add(ce, kl)?;
    Ok((
        total,
        LossValue::from_parts(&[("ce", 1.0, ce_v), ("kl-mutual", 1.0, kl_v)]),
    ))
}

/// Batch distillation objective; `teacher` holds constant `[N,2]` logits.
pub fn distill_objective(
    g: &mut Graph,
    student: Var,
    teacher: &[f32],
    targets: &[Target],
    cfg: &DistillConfig,
) -> Result<(Var, LossValue)> {
    cfg.validate()?;
    let (ce, ce_v) = cross_entropy_graph(g, student, targets)?;
    let (kl, kl_v) = kl_to_constant_graph(g, teacher, student, cfg.temperature)?;
    let ce_w = g.scale(ce, 1.0 - cfg.alpha)?;
    let kl_w = g.scale(kl, cfg.kl_weight())?;
    let total = g.add(ce_w, kl_w)?;
    Ok((
        total,
        LossValue::from_parts(&[("ce", 1.0 - cfg.alpha, ce_v), ("kl-distill", cfg.kl_weight(), kl_v)]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln2() {
        let l = cross_entropy(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((l.total - std::f32::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_div(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f32::consts::LN_2).abs() < 1e-7);
        assert!(kl_div(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_div(&[1.5, -0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn invalid_soft_target() {
        assert!(cross_entropy(&[0.0, 1.0], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn distill_config_checks() {
        let bad_t = DistillConfig {
            temperature: 0.0,
            alpha: 0.5,
        };
        let bad_a = DistillConfig {
            temperature: 5.0,
            alpha: 1.5,
        };
        assert!(distill_loss(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &bad_t).is_err());
        assert!(distill_loss(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &bad_a).is_err());
    }
}
