//! Byte-oriented range coder with an adaptive frequency model.
//!
//! The coder keeps a 32-bit range and a 64-bit low accumulator whose
//! 33rd bit is the pending carry; byte output is delayed through a cache
//! so carries can propagate through runs of 0xFF. The companion model is
//! a Fenwick tree over symbol frequencies that both sides update in
//! lockstep, so no table is transmitted.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
/// Rescale threshold for the adaptive model; keeps `range / total` > 0.
const MAX_TOTAL: u32 = 1 << 16;
const INCREMENT: u32 = 32;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            // The first shifted byte is a dummy the decoder skips.
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Narrow the interval to `[cum, cum + freq) / total`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= MAX_TOTAL);
        let r = self.range / total;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || self.low >> 32 != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    /// Flush the remaining state; the output fully determines the stream.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        if input.len() < 5 {
            return Err(Error::Format("range-coded stream too short".into()));
        }
        // Skip the encoder's dummy first byte, then prime the code register.
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            input,
            pos: 1,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> u8 {
        // Reads past the end return zero: the encoder's five-byte flush
        // guarantees every meaningful bit was emitted.
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative frequency of the next symbol; pair with `decode_update`.
    pub fn decode_freq(&mut self, total: u32) -> u32 {
        self.range /= total;
        (self.code / self.range).min(total - 1)
    }

    pub fn decode_update(&mut self, cum: u32, freq: u32) {
        self.code = self.code.wrapping_sub(cum.wrapping_mul(self.range));
        self.range = self.range.wrapping_mul(freq);
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }
}

/// One-based Fenwick tree over symbol frequencies.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn with_uniform(n: usize) -> Self {
        let mut f = Fenwick {
            tree: vec![0; n + 1],
        };
        for i in 0..n {
            f.add(i, 1);
        }
        f
    }

    fn add(&mut self, sym: usize, delta: u32) {
        let mut i = sym + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of frequencies of symbols `< sym`.
    fn prefix(&self, sym: usize) -> u32 {
        let mut i = sym;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Largest symbol whose prefix sum is `<= target`.
    fn find(&self, mut target: u32) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut mask = n.next_power_of_two();
        while mask > 0 {
            let next = pos + mask;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            mask >>= 1;
        }
        pos
    }
}

/// Adaptive order-0 model shared by encoder and decoder.
pub struct AdaptiveModel {
    fen: Fenwick,
    freq: Vec<u32>,
    total: u32,
}

impl AdaptiveModel {
    pub fn new(n_symbols: usize) -> Self {
        assert!(
            (1..=1 << 15).contains(&n_symbols),
            "alphabet size {n_symbols} out of range"
        );
        AdaptiveModel {
            fen: Fenwick::with_uniform(n_symbols),
            freq: vec![1; n_symbols],
            total: n_symbols as u32,
        }
    }

    pub fn encode_symbol(&mut self, enc: &mut RangeEncoder, sym: usize) {
        enc.encode(self.fen.prefix(sym), self.freq[sym], self.total);
        self.bump(sym);
    }

    pub fn decode_symbol(&mut self, dec: &mut RangeDecoder) -> usize {
        let target = dec.decode_freq(self.total);
        let sym = self.fen.find(target);
        dec.decode_update(self.fen.prefix(sym), self.freq[sym]);
        self.bump(sym);
        sym
    }

    fn bump(&mut self, sym: usize) {
        self.fen.add(sym, INCREMENT);
        self.freq[sym] += INCREMENT;
        self.total += INCREMENT;
        if self.total >= MAX_TOTAL {
            self.rescale();
        }
    }

    fn rescale(&mut self) {
        let n = self.freq.len();
        self.fen = Fenwick {
            tree: vec![0; n + 1],
        };
        self.total = 0;
        for sym in 0..n {
            self.freq[sym] = (self.freq[sym] + 1) >> 1;
            self.fen.add(sym, self.freq[sym]);
            self.total += self.freq[sym];
        }
    }
}

/// Encode `symbols` (each `< n_symbols`) as a self-contained byte stream.
pub fn entropy_code(symbols: &[u16], n_symbols: usize) -> Vec<u8> {
    let mut model = AdaptiveModel::new(n_symbols);
    let mut enc = RangeEncoder::new();
    for &s in symbols {
        debug_assert!((s as usize) < n_symbols);
        model.encode_symbol(&mut enc, s as usize);
    }
    enc.finish()
}

/// Inverse of [`entropy_code`]; `count` symbols are read back.
pub fn entropy_decode(bytes: &[u8], count: usize, n_symbols: usize) -> Result<Vec<u16>> {
    let mut model = AdaptiveModel::new(n_symbols);
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(model.decode_symbol(&mut dec) as u16);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skewed_stream_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let symbols: Vec<u16> = (0..20_000)
            .map(|_| {
                let r: f64 = rng.gen();
                // Geometric-ish skew over a 17-symbol alphabet.
                ((-r.ln() * 2.0) as u16).min(16)
            })
            .collect();
        let coded = entropy_code(&symbols, 17);
        let decoded = entropy_decode(&coded, symbols.len(), 17).unwrap();
        assert_eq!(symbols, decoded);
        assert!(coded.len() < 2 * symbols.len());
    }

    #[test]
    fn constant_stream_compresses_hard() {
        let symbols = vec![3u16; 10_000];
        let coded = entropy_code(&symbols, 256);
        assert!(coded.len() < 100, "constant stream took {} bytes", coded.len());
        assert_eq!(entropy_decode(&coded, 10_000, 256).unwrap(), symbols);
    }

    #[test]
    fn uniform_bytes_stay_near_raw_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let symbols: Vec<u16> = (0..10_000).map(|_| rng.gen_range(0..256)).collect();
        let coded = entropy_code(&symbols, 256);
        assert!(coded.len() >= 9_900, "impossible compression: {}", coded.len());
        assert!(coded.len() <= 10_400, "overhead too large: {}", coded.len());
        assert_eq!(entropy_decode(&coded, 10_000, 256).unwrap(), symbols);
    }

    #[test]
    fn empty_stream_roundtrips() {
        let coded = entropy_code(&[], 256);
        assert_eq!(entropy_decode(&coded, 0, 256).unwrap(), Vec::<u16>::new());
    }

    #[test]
    fn heavily_skewed_long_stream_exercises_carry_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let symbols: Vec<u16> = (0..50_000)
            .map(|_| u16::from(rng.gen_bool(0.001)))
            .collect();
        let coded = entropy_code(&symbols, 2);
        assert!(coded.len() < 2_000);
        assert_eq!(entropy_decode(&coded, symbols.len(), 2).unwrap(), symbols);
    }

    #[test]
    fn truncated_stream_errors() {
        assert!(entropy_decode(&[1, 2, 3], 4, 16).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_streams_roundtrip(symbols in proptest::collection::vec(0u16..1024, 0..500)) {
            let coded = entropy_code(&symbols, 1024);
            prop_assert_eq!(entropy_decode(&coded, symbols.len(), 1024).unwrap(), symbols);
        }
    }
}
