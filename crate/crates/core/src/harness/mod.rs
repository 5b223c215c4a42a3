//! Telegram channel simulator: protection schemes, accidental noise, an
//! attacker that knows every algorithm but no key, and campaigns that
//! tabulate which protection stops which threat.
//!
//! The coded-signature telegram transposes the in-processor code
//! `c = x + B + D (mod A)` to a message: `x` is the payload read as a
//! base-256 integer.

mod attack;
mod campaign;
mod config;
mod noise;
mod telegram;

pub use attack::{apply_attack, brute_force_frame, forge, AttackError, AttackKind, AttackSpec, KeyAccess};
pub use campaign::{run_channel_campaign, run_channel_campaign_with, CampaignReport, CellCounts, CellReport};
pub use config::{CampaignConfig, ConfigError, Threat};
pub use noise::{apply_channel_noise, NoiseModel};
pub use telegram::{
    coded_residue, compute_tag, decode_frame, encode_frame, hamming_tag_byte, mac_message, payload_fold,
    protect_telegram, verify_telegram, Frame, Freshness, ProtectError, ProtectionScheme, RejectReason, Secrets,
    Telegram, TelegramVerdict, DATE_WINDOW, HEADER_LEN, MAX_PAYLOAD, WIRE_MAGIC,
};
