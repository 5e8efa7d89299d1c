//! Reward-based model selection under memory and energy budgets.
//!
//! `R = acc_q - mu * M_q / M_0`. Budgets are hard filters applied before
//! ranking; ties on `R` go to the smaller model, then the cheaper
//! inference, then the earlier candidate.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::metrics::normalized_memory;
use crate::quant::QuantConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub dataset: String,
    pub config: QuantConfig,
    pub acc_q: f64,
    pub mem_bits: u64,
    /// Memory of the fp32 reference model.
    pub mem_ref_bits: u64,
    pub energy_train: f64,
    pub energy_infer: f64,
    pub mu: f64,
    pub reward: f64,
    pub selected: bool,
}

impl CandidateReport {
    pub fn mem_norm(&self) -> f64 {
        self.mem_bits as f64 / self.mem_ref_bits as f64
    }

    /// Recomputes `reward` for `mu`.
    pub fn rescore(&mut self, mu: f64) -> Result<()> {
        self.reward = reward(self.acc_q, self.mem_bits, self.mem_ref_bits, mu)?;
        self.mu = mu;
        Ok(())
    }
}

pub fn reward(acc_q: f64, m_q: u64, m_0: u64, mu: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "trade-off coefficient mu = {mu} must be a non-negative real"
        )));
    }
    Ok(acc_q - mu * normalized_memory(m_q, m_0)?)
}

/// Picks the feasible candidate with the highest reward at `mu` and
/// returns its index.
pub fn select_model(
    candidates: &[CandidateReport],
    mu: f64,
    mem_budget: Option<u64>,
    energy_budget: Option<f64>,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let fits = |c: &CandidateReport| {
        mem_budget.is_none_or(|b| c.mem_bits <= b) && energy_budget.is_none_or(|b| c.energy_infer <= b)
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !fits(c) {
            continue;
        }
        let r = reward(c.acc_q, c.mem_bits, c.mem_ref_bits, mu)?;
        let better = match best {
            None => true,
            Some((b, br)) => {
                let other = &candidates[b];
                r.partial_cmp(&br)
                    .unwrap_or(Ordering::Equal)
                    .then(other.mem_bits.cmp(&c.mem_bits))
                    .then(
                        other
                            .energy_infer
                            .partial_cmp(&c.energy_infer)
                            .unwrap_or(Ordering::Equal),
                    )
                    == Ordering::Greater
            }
        };
        if better {
            best = Some((i, r));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::NoFeasibleModel(tightest_violation(candidates, mem_budget, energy_budget)))
}

fn tightest_violation(c: &[CandidateReport], mem: Option<u64>, energy: Option<f64>) -> String {
    let min_mem = c.iter().map(|c| c.mem_bits).min().unwrap_or(0);
    let min_e = c.iter().map(|c| c.energy_infer).fold(f64::INFINITY, f64::min);
    let mem_ratio = mem.map(|b| min_mem as f64 / b.max(1) as f64);
    let e_ratio = energy.map(|b| if b > 0.0 { min_e / b } else { f64::INFINITY });
    let mem_msg = |b: u64| format!("memory budget {b} bits (smallest candidate needs {min_mem} bits)");
    let e_msg = |b: f64| format!("inference energy budget {b:e} J (cheapest candidate needs {min_e:e} J)");
    match (mem, energy) {
        (Some(m), Some(e)) if mem_ratio > Some(1.0) && e_ratio > Some(1.0) => {
            if mem_ratio >= e_ratio {
                format!("{}; also violated: {}", mem_msg(m), e_msg(e))
            } else {
                format!("{}; also violated: {}", e_msg(e), mem_msg(m))
            }
        }
        (Some(m), _) if mem_ratio > Some(1.0) => mem_msg(m),
        (_, Some(e)) if e_ratio > Some(1.0) => e_msg(e),
        _ => "no candidate satisfies the memory and energy budgets jointly".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::Scheme;

    fn cand(acc: f64, mem: u64) -> CandidateReport {
        CandidateReport {
            dataset: "t".into(),
            config: QuantConfig::fp32(Scheme::Ptq),
            acc_q: acc,
            mem_bits: mem,
            mem_ref_bits: 400,
            energy_train: 0.0,
            energy_infer: mem as f64,
            mu: 0.0,
            reward: 0.0,
            selected: false,
        }
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(0.8, 100, 400, 0.0).unwrap(), 0.8);
        assert!((reward(0.92, 100, 400, 0.1).unwrap() - 0.895).abs() < 1e-15);
        assert!((reward(0.7, 400, 400, 0.3).unwrap() - 0.4).abs() < 1e-15);
        assert!(reward(0.7, 400, 400, -0.1).is_err());
        assert!(reward(0.7, 400, 0, 0.1).is_err());
    }

    #[test]
    fn regime_flip() {
        let c = [cand(0.92, 400), cand(0.90, 100)];
        assert_eq!(select_model(&c, 0.01, None, None).unwrap(), 0);
        assert_eq!(select_model(&c, 0.1, None, None).unwrap(), 1);
    }

    #[test]
    fn single_candidate_always_wins() {
        let c = [cand(0.1, 400)];
        for mu in [0.0, 1.0, 100.0] {
            assert_eq!(select_model(&c, mu, None, None).unwrap(), 0);
        }
    }

    #[test]
    fn budgets_filter() {
        let c = [cand(0.92, 400), cand(0.90, 100)];
        assert_eq!(select_model(&c, 0.0, Some(200), None).unwrap(), 1);
        let err = select_model(&c, 0.0, Some(50), None).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleModel(ref m) if m.contains("memory budget 50")));
        let err = select_model(&c, 0.0, None, Some(10.0)).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleModel(ref m) if m.contains("energy")));
    }

    #[test]
    fn ties_prefer_smaller_then_cheaper_then_first() {
        let mut a = cand(0.9, 200);
        let b = cand(0.9, 100);
        assert_eq!(select_model(&[a.clone(), b.clone()], 0.0, None, None).unwrap(), 1);
        a.mem_bits = 100;
        a.energy_infer = 50.0;
        assert_eq!(select_model(&[b.clone(), a.clone()], 0.0, None, None).unwrap(), 1);
        assert_eq!(select_model(&[b.clone(), b], 0.0, None, None).unwrap(), 0);
    }
}
