//! Scripted forgery: an attacker who knows every algorithm but no key
//! rewrites a wayside command in transit.
//!
//! `cargo run -p vitalcode --example forged_command`

use vitalcode::channel_codes::{CRC32_IEEE, CRC8_ATM};
use vitalcode::coded_core::CodeKey;
use vitalcode::harness::{
    apply_attack, protect_telegram, verify_telegram, AttackKind, AttackSpec, Freshness, ProtectionScheme, Secrets,
    Telegram, TelegramVerdict,
};
use vitalcode::mac::{MacKey, TagLength};
use vitalcode::rng::trial_rng;

fn main() {
    let key = CodeKey::new(251).unwrap();
    let schemes = [
        ProtectionScheme::Parity,
        ProtectionScheme::Crc(CRC8_ATM),
        ProtectionScheme::Crc(CRC32_IEEE),
        ProtectionScheme::Hamming74,
        ProtectionScheme::CodedSig {
            key,
            signature: key.signature(17).unwrap(),
        },
        ProtectionScheme::Hmac {
            tag_len: TagLength::Bytes16,
        },
    ];
    let secrets = Secrets::with_mac_key(MacKey::new(b"shared wayside key".to_vec()));
    let sent = Telegram {
        seq: 812,
        date: 4096,
        payload: b"POINT 7 LEFT".to_vec(),
    };
    let forged = b"POINT 7 RIGHT".to_vec();
    let now = Freshness {
        min_seq: 812,
        current_date: 4096,
    };
    let attack = AttackSpec::new(AttackKind::ForgePayload(forged.clone()));
    let mut rng = trial_rng(0, 0, 0);

    println!("sent:   {}", String::from_utf8_lossy(&sent.payload));
    println!("forged: {}", String::from_utf8_lossy(&forged));
    for scheme in &schemes {
        let wire = protect_telegram(&sent, scheme, &secrets).unwrap();
        let frames = apply_attack(&wire, &attack, scheme, &mut rng).unwrap();
        let verdict = match verify_telegram(&frames[0], scheme, &secrets, &now) {
            TelegramVerdict::Accept(t) | TelegramVerdict::Corrected(t) => {
                format!("ACCEPTED \"{}\"", String::from_utf8_lossy(&t.payload))
            }
            TelegramVerdict::Reject(r) => format!("rejected ({r:?})"),
        };
        println!("{:>12}: {verdict}", scheme.name());
    }
}
