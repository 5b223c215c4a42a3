//! Replicated execution with unanimity (2oo2, 3oo3) or majority (2oo3)
//! voting, under independent and common-mode replica corruption.
//!
//! Diversity between replicas is expressed only through the common-mode
//! rate `q`: heterogeneous redundancy is a smaller `q`.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{trial_rng, uniform_below};
use crate::stats::Rate;

const DOMAIN: u64 = 0xC0DE_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Unanimity,
    Majority,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Unanimity => "unanimity",
            Policy::Majority => "majority",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unanimity" | "2oo2" => Ok(Policy::Unanimity),
            "majority" | "2oo3" => Ok(Policy::Majority),
            _ => Err(format!("unknown voting policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VoteResult {
    Agreed(i64),
    SafeHalt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultSource {
    None,
    Independent,
    CommonMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaOutcome {
    pub value: i64,
    pub faulted: bool,
    pub source: FaultSource,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoteError {
    #[error("{policy} voting needs {expected} replicas, got {found}")]
    ReplicaCount {
        policy: Policy,
        expected: &'static str,
        found: usize,
    },
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub n: usize,
    pub policy: Policy,
    /// Independent corruption probability per replica per cycle.
    pub p: f64,
    /// Common-mode corruption probability per cycle.
    pub q: f64,
}

fn check_count(policy: Policy, n: usize) -> Result<(), VoteError> {
    let ok = match policy {
        Policy::Unanimity => n == 2 || n == 3,
        Policy::Majority => n == 3,
    };
    if ok {
        Ok(())
    } else {
        Err(VoteError::ReplicaCount {
            policy,
            expected: if policy == Policy::Majority { "3" } else { "2 or 3" },
            found: n,
        })
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<(), VoteError> {
        check_count(self.policy, self.n)?;
        for (name, value) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(VoteError::Probability { name, value });
            }
        }
        Ok(())
    }
}

pub fn vote(outputs: &[i64], policy: Policy) -> Result<VoteResult, VoteError> {
    check_count(policy, outputs.len())?;
    Ok(match policy {
        Policy::Unanimity => {
            if outputs.iter().all(|&v| v == outputs[0]) {
                VoteResult::Agreed(outputs[0])
            } else {
                VoteResult::SafeHalt
            }
        }
        Policy::Majority => {
            let (a, b, c) = (outputs[0], outputs[1], outputs[2]);
            if a == b || a == c {
                VoteResult::Agreed(a)
            } else if b == c {
                VoteResult::Agreed(b)
            } else {
                VoteResult::SafeHalt
            }
        }
    })
}

/// Closed-form outcome probabilities, neglecting accidental agreement of
/// independent random values (order `p²/2^32`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPrediction {
    pub correct: f64,
    pub safe_halt: f64,
    pub undetected_wrong: f64,
}

pub fn analytic_prediction(cfg: &VoteConfig) -> AnalyticPrediction {
    let (p, q) = (cfg.p, cfg.q);
    let n = cfg.n as i32;
    // Probability that the vote still agrees on the uncorrupted value (or
    // the common-mode value), i.e. that too few replicas were overridden.
    let survives = match cfg.policy {
        Policy::Unanimity => (1.0 - p).powi(n),
        Policy::Majority => (1.0 - p).powi(3) + 3.0 * p * (1.0 - p).powi(2),
    };
    AnalyticPrediction {
        correct: (1.0 - q) * survives,
        safe_halt: 1.0 - survives,
        undetected_wrong: q * survives,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub config: VoteConfig,
    pub trials: u64,
    pub seed: u64,
    pub correct: u64,
    pub safe_halt: u64,
    pub undetected_wrong: u64,
    pub rate_correct: Rate,
    pub rate_safehalt: Rate,
    pub rate_undetected_wrong: Rate,
    pub analytic_predictions: AnalyticPrediction,
}

fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform 32-bit value different from `reference`.
fn wrong_value<R: RngCore + ?Sized>(rng: &mut R, reference: u32) -> i64 {
    let r = uniform_below(rng, u32::MAX as u64) as u32;
    (if r >= reference { r + 1 } else { r }) as i64
}

/// Replica outcomes of one cycle.
///
/// Every draw is taken whether or not it is used, so a trial's outcome is
/// monotone in `p` and `q` for a fixed seed.
pub fn simulate_replicas<R: RngCore + ?Sized>(cfg: &VoteConfig, reference: u32, rng: &mut R) -> Vec<ReplicaOutcome> {
    let common = unit(rng) < cfg.q;
    let shared = wrong_value(rng, reference);
    (0..cfg.n)
        .map(|_| {
            let hit = unit(rng) < cfg.p;
            let own = wrong_value(rng, reference);
            if hit {
                ReplicaOutcome {
                    value: own,
                    faulted: true,
                    source: FaultSource::Independent,
                }
            } else if common {
                ReplicaOutcome {
                    value: shared,
                    faulted: true,
                    source: FaultSource::CommonMode,
                }
            } else {
                ReplicaOutcome {
                    value: reference as i64,
                    faulted: false,
                    source: FaultSource::None,
                }
            }
        })
        .collect()
}

pub fn redundancy_campaign(cfg: &VoteConfig, trials: u64, seed: u64) -> Result<RedundancyReport, VoteError> {
    cfg.validate()?;
    let (correct, safe_halt, wrong) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, DOMAIN, i);
            let reference = rng.next_u32();
            let values: Vec<i64> = simulate_replicas(cfg, reference, &mut rng)
                .iter()
                .map(|r| r.value)
                .collect();
            match vote(&values, cfg.policy).expect("replica count validated") {
                VoteResult::Agreed(v) if v == reference as i64 => (1u64, 0u64, 0u64),
                VoteResult::Agreed(_) => (0, 0, 1),
                VoteResult::SafeHalt => (0, 1, 0),
            }
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(RedundancyReport {
        config: *cfg,
        trials,
        seed,
        correct,
        safe_halt,
        undetected_wrong: wrong,
        rate_correct: Rate::new(correct, trials),
        rate_safehalt: Rate::new(safe_halt, trials),
        rate_undetected_wrong: Rate::new(wrong, trials),
        analytic_predictions: analytic_prediction(cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::within_sigmas;

    fn cfg(n: usize, policy: Policy, p: f64, q: f64) -> VoteConfig {
        VoteConfig { n, policy, p, q }
    }

    #[test]
    fn examples() {
        assert_eq!(vote(&[5, 5, 9], Policy::Majority), Ok(VoteResult::Agreed(5)));
        assert_eq!(vote(&[5, 9, 7], Policy::Majority), Ok(VoteResult::SafeHalt));
        assert_eq!(vote(&[5, 5], Policy::Unanimity), Ok(VoteResult::Agreed(5)));
        assert_eq!(vote(&[5, 6], Policy::Unanimity), Ok(VoteResult::SafeHalt));
        assert!(vote(&[5, 5], Policy::Majority).is_err());
        assert!(vote(&[5], Policy::Unanimity).is_err());
    }

    /// Counting oracle over every triple of a 3-letter alphabet.
    #[test]
    fn exhaustive_truth_tables() {
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let t = [a, b, c];
                    let best = (0..3).max_by_key(|v| t.iter().filter(|&&x| x == *v).count()).unwrap();
                    let count = t.iter().filter(|&&x| x == best).count();
                    let majority = if count >= 2 {
                        VoteResult::Agreed(best)
                    } else {
                        VoteResult::SafeHalt
                    };
                    assert_eq!(vote(&t, Policy::Majority), Ok(majority), "{t:?}");
                    let unanimity = if count == 3 {
                        VoteResult::Agreed(a)
                    } else {
                        VoteResult::SafeHalt
                    };
                    assert_eq!(vote(&t, Policy::Unanimity), Ok(unanimity), "{t:?}");
                }
                let pair = if a == b {
                    VoteResult::Agreed(a)
                } else {
                    VoteResult::SafeHalt
                };
                assert_eq!(vote(&[a, b], Policy::Unanimity), Ok(pair));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(2, Policy::Majority, 0.0, 0.0).validate().is_err());
        assert!(cfg(3, Policy::Majority, 1.5, 0.0).validate().is_err());
        assert!(cfg(2, Policy::Unanimity, 0.0, -0.1).validate().is_err());
        assert!(cfg(3, Policy::Unanimity, 1.0, 1.0).validate().is_ok());
    }

    #[test]
    fn fault_free_is_always_correct() {
        let r = redundancy_campaign(&cfg(3, Policy::Majority, 0.0, 0.0), 10_000, 1).unwrap();
        assert_eq!(r.correct, 10_000);
        assert_eq!(r.rate_correct.rate, 1.0);
    }

    #[test]
    fn faulted_flag_matches_value() {
        let c = cfg(3, Policy::Majority, 0.3, 0.3);
        let mut rng = trial_rng(9, 0, 0);
        for _ in 0..10_000 {
            let reference = rng.next_u32();
            for r in simulate_replicas(&c, reference, &mut rng) {
                assert_eq!(r.faulted, r.value != reference as i64);
                assert_eq!(r.faulted, r.source != FaultSource::None);
            }
        }
    }

    #[test]
    fn campaign_matches_analytic_prediction() {
        for c in [
            cfg(3, Policy::Majority, 0.1, 0.05),
            cfg(2, Policy::Unanimity, 0.1, 0.05),
            cfg(3, Policy::Unanimity, 0.2, 0.1),
        ] {
            let trials = 200_000;
            let r = redundancy_campaign(&c, trials, 4).unwrap();
            let a = r.analytic_predictions;
            assert!((a.correct + a.safe_halt + a.undetected_wrong - 1.0).abs() < 1e-12);
            assert_eq!(r.correct + r.safe_halt + r.undetected_wrong, trials);
            assert!(within_sigmas(r.rate_correct.rate, a.correct, trials, 4.0), "{c:?}");
            assert!(within_sigmas(r.rate_safehalt.rate, a.safe_halt, trials, 4.0), "{c:?}");
            assert!(
                within_sigmas(r.rate_undetected_wrong.rate, a.undetected_wrong, trials, 4.0),
                "{c:?}"
            );
        }
    }

    #[test]
    fn undetected_wrong_is_monotone_in_q() {
        let mut last = 0;
        for q in [0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0] {
            let r = redundancy_campaign(&cfg(3, Policy::Majority, 0.05, q), 50_000, 8).unwrap();
            assert!(r.undetected_wrong >= last, "q={q}");
            last = r.undetected_wrong;
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let c = cfg(3, Policy::Majority, 0.01, 0.01);
        assert_eq!(redundancy_campaign(&c, 10_000, 3), redundancy_campaign(&c, 10_000, 3));
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("2oo3".parse::<Policy>(), Ok(Policy::Majority));
        assert_eq!("Unanimity".parse::<Policy>(), Ok(Policy::Unanimity));
        assert!("plurality".parse::<Policy>().is_err());
    }
}
