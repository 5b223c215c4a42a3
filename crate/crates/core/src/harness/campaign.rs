use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack::{apply_attack, brute_force_frame, AttackKind, AttackSpec};
use super::config::{CampaignConfig, ConfigError, Threat};
use super::noise::apply_channel_noise;
use super::telegram::{
    decode_frame, protect_telegram, verify_telegram, Freshness, ProtectionScheme, Secrets, Telegram, TelegramVerdict,
};
use crate::rng::{derive_seed, trial_rng, uniform_below};
use crate::stats::Rate;

const DOMAIN: u64 = 0xC0DE_0003;

/// Outcome counts of one scheme × threat cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellCounts {
    pub delivered: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub corrected: u64,
    /// Accepted with content differing from what the sender sent.
    pub accepted_but_wrong: u64,
    /// Corrected to content differing from what the sender sent.
    pub corrected_but_wrong: u64,
    pub reject_reasons: BTreeMap<String, u64>,
}

impl CellCounts {
    fn record(&mut self, verdict: TelegramVerdict, sent: &Telegram) {
        self.delivered += 1;
        match verdict {
            TelegramVerdict::Accept(t) => {
                self.accepted += 1;
                self.accepted_but_wrong += (t != *sent) as u64;
            }
            TelegramVerdict::Corrected(t) => {
                self.corrected += 1;
                self.corrected_but_wrong += (t != *sent) as u64;
            }
            TelegramVerdict::Reject(r) => {
                self.rejected += 1;
                *self.reject_reasons.entry(format!("{r:?}")).or_default() += 1;
            }
        }
    }

    fn merge(mut self, other: CellCounts) -> CellCounts {
        self.delivered += other.delivered;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.corrected += other.corrected;
        self.accepted_but_wrong += other.accepted_but_wrong;
        self.corrected_but_wrong += other.corrected_but_wrong;
        for (k, v) in other.reject_reasons {
            *self.reject_reasons.entry(k).or_default() += v;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scheme: String,
    pub threat: String,
    #[serde(flatten)]
    pub counts: CellCounts,
    pub accepted_rate: Rate,
    pub rejected_rate: Rate,
    pub corrected_rate: Rate,
    pub accepted_but_wrong_rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub trials: u64,
    /// The configuration, with inline key material redacted.
    pub config: CampaignConfig,
    pub cells: Vec<CellReport>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    threat: &'a str,
    delivered: u64,
    accepted: u64,
    rejected: u64,
    corrected: u64,
    accepted_but_wrong: u64,
    corrected_but_wrong: u64,
    accepted_but_wrong_rate: f64,
    accepted_but_wrong_lower: f64,
    accepted_but_wrong_upper: f64,
}

impl CampaignReport {
    pub fn cell(&self, scheme: &str, threat: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scheme == scheme && c.threat == threat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// One row per scheme × threat cell.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(CsvRow {
                scheme: &c.scheme,
                threat: &c.threat,
                delivered: c.counts.delivered,
                accepted: c.counts.accepted,
                rejected: c.counts.rejected,
                corrected: c.counts.corrected,
                accepted_but_wrong: c.counts.accepted_but_wrong,
                corrected_but_wrong: c.counts.corrected_but_wrong,
                accepted_but_wrong_rate: c.accepted_but_wrong_rate.rate,
                accepted_but_wrong_lower: c.accepted_but_wrong_rate.lower,
                accepted_but_wrong_upper: c.accepted_but_wrong_rate.upper,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn random_payload<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Vec<u8> {
    let mut p = vec![0u8; len];
    rng.fill_bytes(&mut p);
    p
}

fn send(t: &Telegram, scheme: &ProtectionScheme, secrets: &Secrets) -> Vec<u8> {
    protect_telegram(t, scheme, secrets).expect("configuration validated")
}

/// Runs one trial of one cell, feeding every delivered frame to `counts`.
fn run_trial(
    scheme: &ProtectionScheme,
    threat: &Threat,
    secrets: &Secrets,
    payload_len: usize,
    seed: u64,
    index: u64,
    counts: &mut CellCounts,
) {
    let mut rng = trial_rng(seed, DOMAIN, index);
    let sent = Telegram {
        seq: 1024 + uniform_below(&mut rng, 1 << 30) as u32,
        date: 1024 + uniform_below(&mut rng, 1 << 30) as u32,
        payload: random_payload(&mut rng, payload_len),
    };
    let expected = Freshness {
        min_seq: sent.seq,
        current_date: sent.date,
    };
    let wire = send(&sent, scheme, secrets);
    let deliver = |frame: &[u8], counts: &mut CellCounts| {
        counts.record(verify_telegram(frame, scheme, secrets, &expected), &sent);
    };
    let forged: Vec<u8> = sent.payload.iter().map(|b| !b).collect();

    if let Some(noise) = threat.noise() {
        deliver(&apply_channel_noise(&wire, &noise, &mut rng), counts);
        return;
    }
    let attack = match threat {
        Threat::ForgePayload => AttackKind::ForgePayload(forged),
        Threat::Replay { age } => {
            let old = Telegram {
                seq: sent.seq - age,
                date: sent.date - age,
                payload: random_payload(&mut rng, payload_len),
            };
            AttackKind::Replay(send(&old, scheme, secrets))
        }
        Threat::SpliceSignature => {
            let donor = Telegram {
                seq: sent.seq - 1,
                date: sent.date - 1,
                payload: random_payload(&mut rng, payload_len),
            };
            AttackKind::SpliceSignature(send(&donor, scheme, secrets))
        }
        Threat::BruteForceTag { attempts } => {
            // Streamed rather than collected: attempt counts can be large.
            let victim = decode_frame(&wire).expect("own frame decodes");
            for _ in 0..*attempts {
                deliver(&brute_force_frame(&victim, &forged, &mut rng), counts);
            }
            return;
        }
        _ => unreachable!("noise threats handled above"),
    };
    let frames =
        apply_attack(&wire, &AttackSpec::new(attack), scheme, &mut rng).expect("attacker never requests the key");
    for f in frames {
        deliver(&f, counts);
    }
}

/// Executes every scheme × threat cell of `cfg` with the given secrets.
pub fn run_channel_campaign_with(cfg: &CampaignConfig, secrets: &Secrets) -> Result<CampaignReport, ConfigError> {
    cfg.validate()?;
    let schemes = cfg.protection_schemes()?;
    if schemes.iter().any(|s| !s.is_keyless()) && secrets.mac_key.is_none() {
        return Err(ConfigError::Mac(crate::mac::MacError::MissingKey));
    }
    let mut cells = Vec::new();
    for (si, scheme) in schemes.iter().enumerate() {
        for (ti, threat) in cfg.threats.iter().enumerate() {
            let cell_seed = derive_seed(cfg.seed, si as u64, ti as u64);
            let counts = (0..cfg.trials)
                .into_par_iter()
                .fold(CellCounts::default, |mut acc, i| {
                    run_trial(scheme, threat, secrets, cfg.payload_len, cell_seed, i, &mut acc);
                    acc
                })
                .reduce(CellCounts::default, CellCounts::merge);
            let d = counts.delivered;
            cells.push(CellReport {
                scheme: scheme.name(),
                threat: threat.name(),
                accepted_rate: Rate::new(counts.accepted, d),
                rejected_rate: Rate::new(counts.rejected, d),
                corrected_rate: Rate::new(counts.corrected, d),
                accepted_but_wrong_rate: Rate::new(counts.accepted_but_wrong, d),
                counts,
            });
        }
    }
    Ok(CampaignReport {
        seed: cfg.seed,
        trials: cfg.trials,
        config: cfg.redacted(),
        cells,
    })
}

/// Executes the campaign, resolving the MAC key from config and environment.
pub fn run_channel_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, ConfigError> {
    let secrets = cfg.secrets_from_env()?;
    run_channel_campaign_with(cfg, &secrets)
}
