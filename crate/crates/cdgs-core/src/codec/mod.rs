//! Compact two-branch stream format for trained Gaussian sets.
//!
//! Static and dynamic Gaussians are compressed separately. Each branch
//! is reordered by a KD traversal of its positions, split into scalar
//! channels, quantized (16-bit for position-family channels, 8-bit for
//! the rest), difference-coded along the traversal, and entropy-coded
//! byte-plane by byte-plane. Extreme values bypass quantization and are
//! stored as raw floats. The decoder rebuilds rows in stream order —
//! statics first, then dynamics — so decompressing is canonical: the
//! kind multiset is preserved but not the original interleaving.

mod delta;
mod kd;
mod outlier;
mod quant;
mod rc;

pub use kd::kd_reorder;
pub use quant::ChannelSpec;
pub use rc::{entropy_code, entropy_decode};

use crate::error::{Error, Result};
use crate::scene::{DynamicExtras, Extras, GaussianCore, GaussianSet, Kind, StaticExtras};
use delta::{delta_decode, delta_encode};
use nalgebra::{Vector3, Vector4};
use outlier::{channel_outliers, pack_square, position_outliers, unpack_square};
use std::path::Path;

pub const STREAM_MAGIC: [u8; 4] = *b"CDGC";
pub const STREAM_VERSION: u32 = 1;

const POSITION_BITS: u8 = 16;
const ATTRIBUTE_BITS: u8 = 8;
/// Fraction of dynamic rows allowed to bypass quantization per channel.
const DYNAMIC_OUTLIER_FRACTION: f64 = 0.05;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("compressed stream truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// One scalar channel scheduled for encoding.
struct Channel {
    values: Vec<f32>,
    bits: u8,
    /// Rows stored raw instead of quantized, ascending.
    outliers: Vec<u32>,
}

fn encode_channel(ch: &Channel, w: &mut Writer) {
    let n = ch.values.len();
    let is_outlier = {
        let mut mask = vec![false; n];
        for &i in &ch.outliers {
            mask[i as usize] = true;
        }
        mask
    };
    let spec = ChannelSpec::fit(
        ch.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !is_outlier[*i])
            .map(|(_, &v)| v),
        ch.bits,
    );
    w.f32(spec.min);
    w.f32(spec.max);
    w.u8(spec.bits);

    w.u32(ch.outliers.len() as u32);
    for &i in &ch.outliers {
        w.u32(i);
    }
    let raw: Vec<f32> = ch.outliers.iter().map(|&i| ch.values[i as usize]).collect();
    let (side, plane) = pack_square(&raw);
    w.u32(side);
    for v in plane {
        w.f32(v);
    }

    if spec.is_constant() {
        return;
    }
    let quantized: Vec<u16> = ch.values.iter().map(|&v| spec.quantize(v)).collect();
    let residuals = delta_encode(&quantized, 1u32 << spec.bits);
    for plane in byte_planes(&residuals, spec.bits) {
        let coded = entropy_code(&plane.1, plane.0);
        w.u32(coded.len() as u32);
        w.bytes(&coded);
    }
}

fn decode_channel(n: usize, r: &mut Reader) -> Result<Vec<f32>> {
    let spec = ChannelSpec {
        min: r.f32()?,
        max: r.f32()?,
        bits: r.u8()?,
    };
    if !(1..=16).contains(&spec.bits) {
        return Err(Error::Format(format!("bad channel depth {}", spec.bits)));
    }
    let m = r.u32()? as usize;
    if m > n {
        return Err(Error::Format("more outliers than rows".into()));
    }
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let i = r.u32()?;
        if i as usize >= n {
            return Err(Error::Format("outlier index out of range".into()));
        }
        indices.push(i);
    }
    let side = r.u32()? as usize;
    if side * side < m {
        return Err(Error::Format("outlier plane smaller than count".into()));
    }
    let mut plane = Vec::with_capacity(side * side);
    for _ in 0..side * side {
        plane.push(r.f32()?);
    }

    let mut values = if spec.is_constant() {
        vec![spec.min; n]
    } else {
        let mut residuals: Option<Vec<u16>> = None;
        for (alphabet, shift) in plane_layout(spec.bits) {
            let len = r.u32()? as usize;
            let coded = r.take(len)?;
            let decoded = entropy_decode(coded, n, alphabet)?;
            residuals = Some(match residuals {
                None => decoded.iter().map(|&v| v << shift).collect(),
                Some(mut acc) => {
                    for (a, &v) in acc.iter_mut().zip(&decoded) {
                        *a |= v << shift;
                    }
                    acc
                }
            });
        }
        let quantized = delta_decode(&residuals.unwrap_or_default(), 1u32 << spec.bits);
        quantized.iter().map(|&q| spec.dequantize(q)).collect()
    };
    for (&i, &v) in indices.iter().zip(unpack_square(&plane, m)) {
        values[i as usize] = v;
    }
    Ok(values)
}

/// Split residuals into entropy-coder planes: `(alphabet, symbols)`.
fn byte_planes(residuals: &[u16], bits: u8) -> Vec<(usize, Vec<u16>)> {
    plane_layout(bits)
        .into_iter()
        .map(|(alphabet, shift)| {
            let mask = (alphabet - 1) as u16;
            (
                alphabet,
                residuals.iter().map(|&v| (v >> shift) & mask).collect(),
            )
        })
        .collect()
}

/// Plane decomposition `(alphabet, bit shift)`, most significant first.
fn plane_layout(bits: u8) -> Vec<(usize, u8)> {
    if bits <= 8 {
        vec![(1usize << bits, 0)]
    } else {
        vec![(1usize << (bits - 8), 8), (256, 0)]
    }
}

/// Channel count for one static row given the color coefficient count.
fn static_channel_count(coeffs: usize) -> usize {
    3 + 3 + 4 + 3 + 1 + coeffs
}

fn dynamic_channel_count(k: usize, coeffs: usize) -> usize {
    3 * k + 4 * k + 3 + 3 + 1 + coeffs
}

fn static_channels(set: &GaussianSet, rows: &[usize]) -> Vec<Channel> {
    let coeffs = set.color_coeffs();
    let positions: Vec<Vector3<f32>> = rows.iter().map(|&r| set.cores[r].position).collect();
    let pos_outliers = position_outliers(&positions);
    let mut channels = Vec::with_capacity(static_channel_count(coeffs));
    let col = |f: &dyn Fn(usize) -> f32| -> Vec<f32> { rows.iter().map(|&r| f(r)).collect() };
    for ax in 0..3 {
        channels.push(Channel {
            values: col(&|r| set.cores[r].position[ax]),
            bits: POSITION_BITS,
            outliers: pos_outliers.clone(),
        });
    }
    for ax in 0..3 {
        let values = col(&|r| match &set.extras[r] {
            Extras::Static(s) => s.global_translation[ax],
            Extras::Dynamic(_) => unreachable!("static branch"),
        });
        channels.push(Channel {
            values,
            bits: POSITION_BITS,
            outliers: Vec::new(),
        });
    }
    for k in 0..4 {
        channels.push(Channel {
            values: col(&|r| set.cores[r].rotation[k]),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    for ax in 0..3 {
        channels.push(Channel {
            values: col(&|r| set.cores[r].log_scale[ax]),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    channels.push(Channel {
        values: col(&|r| set.cores[r].opacity_logit),
        bits: ATTRIBUTE_BITS,
        outliers: Vec::new(),
    });
    for c in 0..coeffs {
        channels.push(Channel {
            values: col(&|r| set.cores[r].color[c]),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    channels
}

fn dynamic_channels(set: &GaussianSet, rows: &[usize]) -> Vec<Channel> {
    let coeffs = set.color_coeffs();
    let k = set.traj_points as usize;
    let n = rows.len();
    let m_out = (DYNAMIC_OUTLIER_FRACTION * n as f64).floor() as usize;
    let dyn_of = |r: usize| -> &DynamicExtras {
        match &set.extras[r] {
            Extras::Dynamic(d) => d,
            Extras::Static(_) => unreachable!("dynamic branch"),
        }
    };
    let mut channels = Vec::with_capacity(dynamic_channel_count(k, coeffs));
    let col = |f: &dyn Fn(usize) -> f32| -> Vec<f32> { rows.iter().map(|&r| f(r)).collect() };
    for kk in 0..k {
        for ax in 0..3 {
            let values = col(&|r| dyn_of(r).traj_pos[kk][ax]);
            let outliers = channel_outliers(&values, m_out);
            channels.push(Channel {
                values,
                bits: POSITION_BITS,
                outliers,
            });
        }
    }
    for kk in 0..k {
        for ax in 0..4 {
            channels.push(Channel {
                values: col(&|r| dyn_of(r).traj_rot[kk][ax]),
                bits: ATTRIBUTE_BITS,
                outliers: Vec::new(),
            });
        }
    }
    for f in [
        &(|r| dyn_of(r).window_start) as &dyn Fn(usize) -> f32,
        &|r| dyn_of(r).window_end,
        &|r| dyn_of(r).window_sharpness,
    ] {
        channels.push(Channel {
            values: col(f),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    for ax in 0..3 {
        channels.push(Channel {
            values: col(&|r| set.cores[r].log_scale[ax]),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    channels.push(Channel {
        values: col(&|r| set.cores[r].opacity_logit),
        bits: ATTRIBUTE_BITS,
        outliers: Vec::new(),
    });
    for c in 0..coeffs {
        channels.push(Channel {
            values: col(&|r| set.cores[r].color[c]),
            bits: ATTRIBUTE_BITS,
            outliers: Vec::new(),
        });
    }
    channels
}

/// Compress a set into a self-contained stream.
pub fn compress(set: &GaussianSet) -> Result<Vec<u8>> {
    set.validate()?;
    let mut w = Writer::new();
    w.bytes(&STREAM_MAGIC);
    w.u32(STREAM_VERSION);
    w.u32(set.sh_degree);
    w.u32(set.traj_points);

    let static_rows: Vec<usize> = (0..set.len())
        .filter(|&i| set.kind(i) == Kind::Static)
        .collect();
    let dynamic_rows: Vec<usize> = (0..set.len())
        .filter(|&i| set.kind(i) == Kind::Dynamic)
        .collect();
    w.u32(static_rows.len() as u32);
    w.u32(dynamic_rows.len() as u32);

    let static_pos: Vec<Vector3<f32>> =
        static_rows.iter().map(|&r| set.cores[r].position).collect();
    let perm = kd_reorder(&static_pos);
    let ordered: Vec<usize> = perm.iter().map(|&p| static_rows[p]).collect();
    for ch in static_channels(set, &ordered) {
        encode_channel(&ch, &mut w);
    }

    let dyn_pos: Vec<Vector3<f32>> = dynamic_rows
        .iter()
        .map(|&r| match &set.extras[r] {
            Extras::Dynamic(d) => {
                d.traj_pos.iter().sum::<Vector3<f32>>() / d.traj_pos.len() as f32
            }
            Extras::Static(_) => unreachable!(),
        })
        .collect();
    let perm = kd_reorder(&dyn_pos);
    let ordered: Vec<usize> = perm.iter().map(|&p| dynamic_rows[p]).collect();
    for ch in dynamic_channels(set, &ordered) {
        encode_channel(&ch, &mut w);
    }

    let crc = crc32(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

/// Decompress a stream produced by [`compress`].
pub fn decompress(bytes: &[u8]) -> Result<GaussianSet> {
    if bytes.len() < 8 || bytes[..4] != STREAM_MAGIC {
        return Err(Error::Format("not a compressed Gaussian stream".into()));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32(body) != stored {
        return Err(Error::Format("stream checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != STREAM_VERSION {
        return Err(Error::Format(format!("unsupported stream version {version}")));
    }
    let sh_degree = r.u32()?;
    let traj_points = r.u32()?;
    if sh_degree > 1 || !(2..=16).contains(&traj_points) {
        return Err(Error::Format("implausible stream header".into()));
    }
    let n_static = r.u32()? as usize;
    let n_dynamic = r.u32()? as usize;

    let mut set = GaussianSet::new(sh_degree, traj_points);
    let coeffs = set.color_coeffs();
    let k = traj_points as usize;

    let mut cols = Vec::with_capacity(static_channel_count(coeffs));
    for _ in 0..static_channel_count(coeffs) {
        cols.push(decode_channel(n_static, &mut r)?);
    }
    for row in 0..n_static {
        let mut it = cols.iter().map(|c| c[row]);
        let mut next = || it.next().expect("channel layout fixed");
        let position = Vector3::new(next(), next(), next());
        let global_translation = Vector3::new(next(), next(), next());
        let rotation = Vector4::new(next(), next(), next(), next());
        let log_scale = Vector3::new(next(), next(), next());
        let opacity_logit = next();
        // Keep the dequantized rotation as-is; the renderer normalizes at use,
        // and re-compressing a decoded set must reproduce the same stream.
        let mut g = GaussianCore::new(position);
        g.rotation = rotation;
        g.log_scale = log_scale;
        g.opacity_logit = opacity_logit;
        for c in 0..coeffs {
            g.color[c] = next();
        }
        g.importance_raw = 1.0;
        g.gate_activation = 1.0;
        set.push(g, Extras::Static(StaticExtras { global_translation }));
    }

    let mut cols = Vec::with_capacity(dynamic_channel_count(k, coeffs));
    for _ in 0..dynamic_channel_count(k, coeffs) {
        cols.push(decode_channel(n_dynamic, &mut r)?);
    }
    for row in 0..n_dynamic {
        let mut it = cols.iter().map(|c| c[row]);
        let mut next = || it.next().expect("channel layout fixed");
        let mut traj_pos = Vec::with_capacity(k);
        for _ in 0..k {
            traj_pos.push(Vector3::new(next(), next(), next()));
        }
        let mut traj_rot = Vec::with_capacity(k);
        for _ in 0..k {
            traj_rot.push(Vector4::new(next(), next(), next(), next()));
        }
        let window_start = next();
        // Quantization can nudge a near-empty window out of order.
        let window_end = next().max(window_start);
        let window_sharpness = next();
        let log_scale = Vector3::new(next(), next(), next());
        let opacity_logit = next();
        let mean: Vector3<f32> = traj_pos.iter().sum::<Vector3<f32>>() / k as f32;
        let mut g = GaussianCore::new(mean);
        g.rotation = traj_rot[k / 2];
        g.log_scale = log_scale;
        g.opacity_logit = opacity_logit;
        for c in 0..coeffs {
            g.color[c] = next();
        }
        g.importance_raw = 1.0;
        g.gate_activation = 1.0;
        set.push(
            g,
            Extras::Dynamic(DynamicExtras {
                traj_pos,
                traj_rot,
                window_start,
                window_end,
                window_sharpness,
            }),
        );
    }

    set.validate()?;
    Ok(set)
}

pub fn save_stream(set: &GaussianSet, path: &Path) -> Result<()> {
    let bytes = compress(set)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_stream(path: &Path) -> Result<GaussianSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decompress(&bytes)
}

/// CRC-32 (IEEE 802.3, reflected) of `data`.
pub fn crc32(data: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}
