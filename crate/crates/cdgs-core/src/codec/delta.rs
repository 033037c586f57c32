//! Ring-difference coding of quantized channels.
//!
//! Each value is replaced with its difference from the previous one,
//! wrapped modulo the quantizer's level count. Spatially ordered data
//! concentrates the residuals near zero (and, for negative steps, near
//! the modulus), which the adaptive entropy model exploits.

/// Residuals with an implicit starting predictor of zero.
pub fn delta_encode(values: &[u16], modulus: u32) -> Vec<u16> {
    debug_assert!(modulus >= 2 && modulus <= 1 << 16);
    let mut prev = 0u32;
    values
        .iter()
        .map(|&v| {
            debug_assert!((v as u32) < modulus);
            let r = ((v as u32 + modulus - prev) % modulus) as u16;
            prev = v as u32;
            r
        })
        .collect()
}

pub fn delta_decode(residuals: &[u16], modulus: u32) -> Vec<u16> {
    let mut prev = 0u32;
    residuals
        .iter()
        .map(|&r| {
            prev = (prev + r as u32) % modulus;
            prev as u16
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp_residuals_are_small() {
        let values: Vec<u16> = (0..1000u16).map(|i| i * 3 % 4096).collect();
        let res = delta_encode(&values, 4096);
        // After the first step every residual is +3 or the wrap value.
        assert!(res[1..].iter().all(|&r| r == 3 || r as u32 >= 4096 - 3));
        assert_eq!(delta_decode(&res, 4096), values);
    }

    #[test]
    fn eight_bit_wraparound_roundtrips() {
        let values = vec![250u16, 3, 128, 0, 255, 254, 1];
        let res = delta_encode(&values, 256);
        assert_eq!(delta_decode(&res, 256), values);
    }

    proptest! {
        #[test]
        fn roundtrip_16bit(values in proptest::collection::vec(0u16..u16::MAX, 0..300)) {
            let res = delta_encode(&values, 1 << 16);
            prop_assert_eq!(delta_decode(&res, 1 << 16), values);
        }

        #[test]
        fn roundtrip_8bit(values in proptest::collection::vec(0u16..256, 0..300)) {
            let res = delta_encode(&values, 256);
            prop_assert_eq!(delta_decode(&res, 256), values);
        }
    }
}
