//! Per-channel uniform scalar quantization.

/// Inclusive value range and bit depth for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub min: f32,
    pub max: f32,
    pub bits: u8,
}

impl ChannelSpec {
    /// Fit a spec to the finite values of an iterator. An empty or
    /// single-valued channel collapses to a constant spec.
    pub fn fit(values: impl Iterator<Item = f32>, bits: u8) -> Self {
        assert!((1..=16).contains(&bits));
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            (lo, hi) = (0.0, 0.0);
        }
        ChannelSpec { min: lo, max: hi, bits }
    }

    pub fn levels(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    /// Reconstruction spacing between adjacent levels.
    pub fn step(&self) -> f32 {
        if self.is_constant() {
            0.0
        } else {
            (self.max - self.min) / self.levels() as f32
        }
    }

    /// Round-to-nearest level; out-of-range values clamp.
    pub fn quantize(&self, v: f32) -> u16 {
        if self.is_constant() {
            return 0;
        }
        let t = (v as f64 - self.min as f64) / (self.max as f64 - self.min as f64);
        let q = (t * self.levels() as f64).round();
        q.clamp(0.0, self.levels() as f64) as u16
    }

    pub fn dequantize(&self, q: u16) -> f32 {
        if self.is_constant() {
            return self.min;
        }
        let t = q as f64 / self.levels() as f64;
        (self.min as f64 + t * (self.max as f64 - self.min as f64)) as f32
    }
}
