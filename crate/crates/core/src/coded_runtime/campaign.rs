use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inject_fault, CheckPolicy, CycleVerdict, Executor, FaultSpec, RuntimeError};
use crate::coded_core::CodeKey;
use crate::rng::{trial_rng, uniform_below};
use crate::sigtool::{CodedProgram, ProgramIR, SignatureTable, VarKind};
use crate::stats::Rate;

const DOMAIN: u64 = 0xC0DE_0001;
const MAX_INPUT_DRAWS: usize = 64;

/// Source of per-trial input data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputGenerator {
    /// Each input uniform in `[lo, hi]`.
    Uniform {
        lo: i64,
        hi: i64,
    },
    Fixed(BTreeMap<String, i64>),
}

impl Default for InputGenerator {
    fn default() -> Self {
        InputGenerator::Uniform {
            lo: -(1 << 20),
            hi: 1 << 20,
        }
    }
}

impl InputGenerator {
    pub fn generate<R: RngCore + ?Sized>(&self, ir: &ProgramIR, rng: &mut R) -> BTreeMap<String, i64> {
        match self {
            InputGenerator::Fixed(m) => m.clone(),
            InputGenerator::Uniform { lo, hi } => {
                let span = (*hi as i128 - *lo as i128 + 1) as u128;
                ir.vars
                    .iter()
                    .filter(|v| v.kind == VarKind::Input)
                    .map(|v| {
                        let off = if span > u64::MAX as u128 {
                            rng.next_u64()
                        } else {
                            uniform_below(rng, span as u64)
                        };
                        (v.name.clone(), (*lo as i128 + off as i128) as i64)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub trials: u64,
    pub seed: u64,
    /// One spec is drawn uniformly per trial; empty runs fault-free trials.
    pub faults: Vec<FaultSpec>,
    pub inputs: InputGenerator,
    /// Fixed cycle number, or `None` for a random cycle per trial.
    pub cycle: Option<u64>,
    pub policy: CheckPolicy,
}

impl CampaignConfig {
    pub fn new(trials: u64, seed: u64, faults: Vec<FaultSpec>) -> Self {
        CampaignConfig {
            trials,
            seed,
            faults,
            inputs: InputGenerator::default(),
            cycle: None,
            policy: CheckPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialOutcome {
    /// A check rejected or the cycle halted.
    Detected,
    /// Accepted with outputs differing from the reference.
    UndetectedWrongOutput,
    /// Accepted with reference outputs; the fault was masked.
    Benign,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCounts {
    pub trials: u64,
    pub detected: u64,
    pub undetected_wrong_output: u64,
    pub benign: u64,
}

impl ModelCounts {
    fn record(&mut self, outcome: TrialOutcome) {
        self.trials += 1;
        match outcome {
            TrialOutcome::Detected => self.detected += 1,
            TrialOutcome::UndetectedWrongOutput => self.undetected_wrong_output += 1,
            TrialOutcome::Benign => self.benign += 1,
        }
    }

    fn merge(&mut self, other: &ModelCounts) {
        self.trials += other.trials;
        self.detected += other.detected;
        self.undetected_wrong_output += other.undetected_wrong_output;
        self.benign += other.benign;
    }

    /// Faults that changed something observable: detected or wrong output.
    pub fn activated(&self) -> u64 {
        self.detected + self.undetected_wrong_output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub key: u64,
    pub seed: u64,
    pub trials: u64,
    pub detected: u64,
    pub undetected_wrong_output: u64,
    pub benign: u64,
    /// Fault-free reruns of the same trials that did not accept cleanly.
    pub false_alarms: u64,
    pub per_model: BTreeMap<String, ModelCounts>,
    pub undetected_rate: Rate,
    /// Undetected among activated faults.
    pub undetected_given_activated: Rate,
}

#[derive(Default)]
struct Tally {
    per_model: BTreeMap<String, ModelCounts>,
    false_alarms: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in &other.per_model {
            self.per_model.entry(k.clone()).or_default().merge(v);
        }
        self.false_alarms += other.false_alarms;
        self
    }
}

fn run_trial(
    exec: &Executor<'_>,
    cfg: &CampaignConfig,
    index: u64,
) -> Result<(String, TrialOutcome, bool), RuntimeError> {
    let ir = &exec.program().ir;
    let key = exec.key();
    let mut rng = trial_rng(cfg.seed, DOMAIN, index);
    let (inputs, reference) = (0..MAX_INPUT_DRAWS)
        .find_map(|_| {
            let inputs = cfg.inputs.generate(ir, &mut rng);
            ir.evaluate(&inputs).ok().map(|r| (inputs, r))
        })
        .ok_or_else(|| RuntimeError::UnresolvableTarget("input generator keeps overflowing the program".into()))?;
    let cycle = cfg
        .cycle
        .unwrap_or_else(|| (1 << 16) + uniform_below(&mut rng, (1 << 32) - (1 << 16)));
    let date = key.date(cycle);

    let clean = exec.execute(&inputs, date, None)?;
    let false_alarm = clean.verdict != CycleVerdict::Accept || clean.outputs != reference;

    if cfg.faults.is_empty() {
        return Ok(("baseline".into(), TrialOutcome::Benign, false_alarm));
    }
    let spec = &cfg.faults[uniform_below(&mut rng, cfg.faults.len() as u64) as usize];
    let mutation = inject_fault(exec, &inputs, date, spec, &mut rng)?;
    let faulty = exec.execute(&inputs, date, Some(&mutation))?;
    let outcome = match faulty.verdict {
        CycleVerdict::Accept if faulty.outputs == reference => TrialOutcome::Benign,
        CycleVerdict::Accept => TrialOutcome::UndetectedWrongOutput,
        _ => TrialOutcome::Detected,
    };
    Ok((spec.model.to_string(), outcome, false_alarm))
}

/// Runs `cfg.trials` independent single-fault trials in parallel.
///
/// Each trial derives its own generator from `(seed, trial index)`, so the
/// report does not depend on thread scheduling.
pub fn run_campaign(
    program: &CodedProgram,
    table: &SignatureTable,
    key: &CodeKey,
    cfg: &CampaignConfig,
) -> Result<InjectionReport, RuntimeError> {
    let exec = Executor::new(program, table, key)?.with_policy(cfg.policy);
    let tally = (0..cfg.trials)
        .into_par_iter()
        .try_fold(Tally::default, |mut acc, i| {
            let (model, outcome, false_alarm) = run_trial(&exec, cfg, i)?;
            acc.per_model.entry(model).or_default().record(outcome);
            acc.false_alarms += false_alarm as u64;
            Ok::<_, RuntimeError>(acc)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;

    let mut total = ModelCounts::default();
    for counts in tally.per_model.values() {
        total.merge(counts);
    }
    Ok(InjectionReport {
        key: key.modulus(),
        seed: cfg.seed,
        trials: total.trials,
        detected: total.detected,
        undetected_wrong_output: total.undetected_wrong_output,
        benign: total.benign,
        false_alarms: tally.false_alarms,
        undetected_rate: Rate::new(total.undetected_wrong_output, total.trials),
        undetected_given_activated: Rate::new(total.undetected_wrong_output, total.activated()),
        per_model: tally.per_model,
    })
}
