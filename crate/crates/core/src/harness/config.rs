//! JSON campaign configuration.
//!
//! ```json
//! {
//!   "schemes": ["parity", "crc8-atm", "crc32-ieee", "hamming74", "coded-sig", "hmac-32"],
//!   "threats": [{"kind": "random_corruption"}, {"kind": "forge_payload"}],
//!   "trials": 10000,
//!   "seed": 1,
//!   "key_a": 251,
//!   "mac_key_ref": "env:VITALCODE_MAC_KEY"
//! }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::noise::NoiseModel;
use super::telegram::{ProtectionScheme, Secrets, MAX_PAYLOAD};
use crate::channel_codes::{CrcParams, CRC32_IEEE, CRC8_ATM};
use crate::coded_core::{CodeKey, CAMPAIGN_KEY};
use crate::mac::{MacError, MacKey, TagLength, MAC_KEY_ENV};
use crate::rng::{derive_seed, uniform_below};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config MAC key: {0}")]
    Mac(#[from] MacError),
}

/// One threat applied to every scheme of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Threat {
    BitErrorRate {
        epsilon: f64,
    },
    Burst {
        length: usize,
        rate: f64,
    },
    RandomCorruption,
    SingleBitPerCodeword,
    ForgePayload,
    Replay {
        #[serde(default = "one")]
        age: u32,
    },
    SpliceSignature,
    BruteForceTag {
        attempts: u64,
    },
}

fn one() -> u32 {
    1
}

impl Threat {
    pub fn noise(&self) -> Option<NoiseModel> {
        Some(match *self {
            Threat::BitErrorRate { epsilon } => NoiseModel::BitErrorRate { epsilon },
            Threat::Burst { length, rate } => NoiseModel::Burst { length, rate },
            Threat::RandomCorruption => NoiseModel::RandomCorruption,
            Threat::SingleBitPerCodeword => NoiseModel::SingleBitPerCodeword,
            _ => return None,
        })
    }

    pub fn name(&self) -> String {
        if let Some(n) = self.noise() {
            return n.name();
        }
        match self {
            Threat::ForgePayload => "forge-payload".into(),
            Threat::Replay { age } => format!("replay({age})"),
            Threat::SpliceSignature => "splice-signature".into(),
            Threat::BruteForceTag { attempts } => format!("brute-force-tag({attempts})"),
            _ => unreachable!(),
        }
    }
}

fn default_key_a() -> u64 {
    CAMPAIGN_KEY
}

fn default_payload_len() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schemes: Vec<String>,
    pub threats: Vec<Threat>,
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_key_a")]
    pub key_a: u64,
    /// Static signature of coded-signature telegrams; drawn from the seed
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<u64>,
    /// Parameter set used by the scheme named `"crc"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crc_params: Option<CrcParams>,
    /// `"hex:<key>"` or `"env:<VAR>"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_key_ref: Option<String>,
    #[serde(default = "default_payload_len")]
    pub payload_len: usize,
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: CampaignConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.schemes.is_empty() || self.threats.is_empty() {
            return invalid("at least one scheme and one threat are required".into());
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.payload_len == 0 || self.payload_len > MAX_PAYLOAD {
            return invalid(format!("payload_len must be in 1..={MAX_PAYLOAD}"));
        }
        for t in &self.threats {
            if let Some(n) = t.noise() {
                n.validate().map_err(ConfigError::Invalid)?;
            }
            if let Threat::Replay { age: 0 } = t {
                return invalid("replay age must be at least 1".into());
            }
        }
        let key = CodeKey::new(self.key_a).map_err(|e| ConfigError::Invalid(format!("key_a: {e}")))?;
        if let Some(s) = self.signature {
            key.signature(s)
                .map_err(|e| ConfigError::Invalid(format!("signature: {e}")))?;
        }
        for name in &self.schemes {
            self.scheme(name, &key)?;
        }
        Ok(())
    }

    pub fn code_key(&self) -> Result<CodeKey, ConfigError> {
        CodeKey::new(self.key_a).map_err(|e| ConfigError::Invalid(format!("key_a: {e}")))
    }

    fn scheme(&self, name: &str, key: &CodeKey) -> Result<ProtectionScheme, ConfigError> {
        let hmac = |t: usize| -> Result<ProtectionScheme, ConfigError> {
            Ok(ProtectionScheme::Hmac {
                tag_len: TagLength::try_from(t)?,
            })
        };
        Ok(match name {
            "none" => ProtectionScheme::None,
            "parity" => ProtectionScheme::Parity,
            "crc8" | "crc8-atm" => ProtectionScheme::Crc(CRC8_ATM),
            "crc32" | "crc32-ieee" => ProtectionScheme::Crc(CRC32_IEEE),
            "crc" => {
                let p = self
                    .crc_params
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("scheme `crc` needs crc_params".into()))?;
                p.validate()
                    .map_err(|e| ConfigError::Invalid(format!("crc_params: {e}")))?;
                ProtectionScheme::Crc(p)
            }
            "hamming74" => ProtectionScheme::Hamming74,
            "coded-sig" => {
                let value = self.signature.unwrap_or_else(|| {
                    let mut rng = crate::rng::trial_rng(derive_seed(self.seed, 0x5160, 0), 0, 0);
                    uniform_below(&mut rng, key.modulus())
                });
                ProtectionScheme::CodedSig {
                    key: *key,
                    signature: key
                        .signature(value)
                        .map_err(|e| ConfigError::Invalid(format!("signature: {e}")))?,
                }
            }
            "hmac" => hmac(32)?,
            other => match other.strip_prefix("hmac-").map(str::parse::<usize>) {
                Some(Ok(t)) => hmac(t)?,
                _ => return Err(ConfigError::Invalid(format!("unknown scheme `{other}`"))),
            },
        })
    }

    pub fn protection_schemes(&self) -> Result<Vec<ProtectionScheme>, ConfigError> {
        let key = self.code_key()?;
        self.schemes.iter().map(|n| self.scheme(n, &key)).collect()
    }

    /// MAC key from the environment override, else from `mac_key_ref`.
    ///
    /// `env_override` is the value of `VITALCODE_MAC_KEY`, passed in so
    /// callers control the environment.
    pub fn resolve_secrets(&self, env_override: Option<&str>) -> Result<Secrets, ConfigError> {
        let needs_key = self.protection_schemes()?.iter().any(|s| !s.is_keyless());
        let hex = match (env_override, self.mac_key_ref.as_deref()) {
            (Some(v), _) => Some(v.to_owned()),
            (None, Some(r)) => Some(if let Some(h) = r.strip_prefix("hex:") {
                h.to_owned()
            } else if let Some(var) = r.strip_prefix("env:") {
                std::env::var(var)
                    .map_err(|_| ConfigError::Invalid(format!("environment variable {var} is not set")))?
            } else {
                return Err(ConfigError::Invalid(
                    "mac_key_ref must start with `hex:` or `env:`".into(),
                ));
            }),
            (None, None) => None,
        };
        match hex {
            Some(h) => Ok(Secrets::with_mac_key(MacKey::from_hex(&h)?)),
            None if needs_key => Err(ConfigError::Mac(MacError::MissingKey)),
            None => Ok(Secrets::none()),
        }
    }

    /// Loads secrets honouring `VITALCODE_MAC_KEY`.
    pub fn secrets_from_env(&self) -> Result<Secrets, ConfigError> {
        let env = std::env::var(MAC_KEY_ENV).ok();
        self.resolve_secrets(env.as_deref())
    }

    /// The configuration with any inline key material removed.
    pub fn redacted(&self) -> CampaignConfig {
        let mut c = self.clone();
        if let Some(r) = &c.mac_key_ref {
            if r.starts_with("hex:") {
                c.mac_key_ref = Some("hex:<redacted>".into());
            }
        }
        c
    }
}
