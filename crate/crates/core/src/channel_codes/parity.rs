use crate::coded_core::Verdict;

/// Even parity: XOR of every payload bit.
pub fn parity_bit(payload: &[u8]) -> u8 {
    (payload.iter().fold(0u8, |acc, b| acc ^ b).count_ones() & 1) as u8
}

pub fn parity_check(payload: &[u8], bit: u8) -> Verdict {
    if parity_bit(payload) == bit {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parity_bit(&[0b0000_1011]), 1);
        assert_eq!(parity_bit(&[]), 0);
        let payload = b"signal 4 clear".to_vec();
        let p = parity_bit(&payload);
        let mut one = payload.clone();
        one[3] ^= 0x10;
        assert_eq!(parity_check(&one, p), Verdict::Reject);
        let mut two = one.clone();
        two[7] ^= 0x01;
        assert_eq!(parity_check(&two, p), Verdict::Accept);
    }

    #[test]
    fn detects_exactly_odd_weight_errors_on_one_byte() {
        for byte in 0..=255u8 {
            let p = parity_bit(&[byte]);
            for err in 1..=255u8 {
                let detected = parity_check(&[byte ^ err], p) == Verdict::Reject;
                assert_eq!(detected, err.count_ones() % 2 == 1);
            }
        }
    }
}
