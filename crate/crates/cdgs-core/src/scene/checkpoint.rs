//! Binary checkpoint format for [`GaussianSet`].
//!
//! Layout (all integers and floats little-endian; see `docs/formats.md`):
//! magic, version, counts, then field-major f32 arrays over all Gaussians,
//! a kind-tag byte array, and kind-specific side arrays in ascending index
//! order. Serialization is a pure function of the set, so identical sets
//! produce identical bytes.

use super::{DynamicExtras, Extras, GaussianCore, GaussianSet, Kind, StaticExtras};
use crate::error::{Error, Result};
use nalgebra::{Vector3, Vector4};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CDGS";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn v3(&mut self, v: &Vector3<f32>) {
        for k in 0..3 {
            self.f32(v[k]);
        }
    }
    fn v4(&mut self, v: &Vector4<f32>) {
        for k in 0..4 {
            self.f32(v[k]);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn v3(&mut self) -> Result<Vector3<f32>> {
        Ok(Vector3::new(self.f32()?, self.f32()?, self.f32()?))
    }
    fn v4(&mut self) -> Result<Vector4<f32>> {
        Ok(Vector4::new(self.f32()?, self.f32()?, self.f32()?, self.f32()?))
    }
}

/// Serialize a set to its canonical checkpoint bytes.
pub fn serialize_checkpoint(set: &GaussianSet) -> Vec<u8> {
    let n = set.len();
    let cc = set.color_coeffs();
    let mut w = Writer {
        buf: Vec::with_capacity(32 + n * (cc + 13) * 4),
    };
    w.buf.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(n as u64);
    w.u64(set.n_static() as u64);
    w.u64(set.n_dynamic() as u64);
    w.u32(set.traj_points);
    w.u32(set.sh_degree);
    for c in &set.cores {
        w.v3(&c.position);
    }
    for c in &set.cores {
        w.v4(&c.rotation);
    }
    for c in &set.cores {
        w.v3(&c.log_scale);
    }
    for c in &set.cores {
        w.f32(c.opacity_logit);
    }
    for c in &set.cores {
        for k in 0..cc {
            w.f32(c.color[k]);
        }
    }
    for c in &set.cores {
        w.f32(c.importance_raw);
    }
    for c in &set.cores {
        w.f32(c.gate_activation);
    }
    for e in &set.extras {
        w.buf.push(match e.kind() {
            Kind::Static => 0,
            Kind::Dynamic => 1,
        });
    }
    for e in &set.extras {
        if let Extras::Static(s) = e {
            w.v3(&s.global_translation);
        }
    }
    for e in &set.extras {
        if let Extras::Dynamic(d) = e {
            for p in &d.traj_pos {
                w.v3(p);
            }
        }
    }
    for e in &set.extras {
        if let Extras::Dynamic(d) = e {
            for q in &d.traj_rot {
                w.v4(q);
            }
        }
    }
    for e in &set.extras {
        if let Extras::Dynamic(d) = e {
            w.f32(d.window_start);
            w.f32(d.window_end);
            w.f32(d.window_sharpness);
        }
    }
    w.buf
}

/// Parse checkpoint bytes back into a set.
pub fn deserialize_checkpoint(bytes: &[u8]) -> Result<GaussianSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let n = r.u64()? as usize;
    let n_static = r.u64()? as usize;
    let n_dynamic = r.u64()? as usize;
    if n_static + n_dynamic != n {
        return Err(Error::Format("checkpoint counts inconsistent".into()));
    }
    let traj_points = r.u32()?;
    let sh_degree = r.u32()?;
    if sh_degree > 1 {
        return Err(Error::Format(format!("unsupported color degree {sh_degree}")));
    }
    if traj_points < 2 {
        return Err(Error::Format("trajectory control points must be >= 2".into()));
    }
    let cc = if sh_degree == 0 { 3 } else { 12 };

    let mut cores: Vec<GaussianCore> = (0..n)
        .map(|_| GaussianCore::new(Vector3::zeros()))
        .collect();
    for c in cores.iter_mut() {
        c.position = r.v3()?;
    }
    for c in cores.iter_mut() {
        c.rotation = r.v4()?;
    }
    for c in cores.iter_mut() {
        c.log_scale = r.v3()?;
    }
    for c in cores.iter_mut() {
        c.opacity_logit = r.f32()?;
    }
    for c in cores.iter_mut() {
        for k in 0..cc {
            c.color[k] = r.f32()?;
        }
    }
    for c in cores.iter_mut() {
        c.importance_raw = r.f32()?;
    }
    for c in cores.iter_mut() {
        c.gate_activation = r.f32()?;
    }
    let kinds: Vec<u8> = r.take(n)?.to_vec();
    let k = traj_points as usize;
    let mut extras: Vec<Extras> = Vec::with_capacity(n);
    for &tag in &kinds {
        match tag {
            0 => extras.push(Extras::Static(StaticExtras::default())),
            1 => extras.push(Extras::Dynamic(DynamicExtras {
                traj_pos: vec![Vector3::zeros(); k],
                traj_rot: vec![Vector4::zeros(); k],
                window_start: 0.0,
                window_end: 1.0,
                window_sharpness: super::DEFAULT_WINDOW_SHARPNESS,
            })),
            other => return Err(Error::Format(format!("unknown kind tag {other}"))),
        }
    }
    if extras.iter().filter(|e| e.kind() == Kind::Static).count() != n_static {
        return Err(Error::Format("kind tags disagree with header counts".into()));
    }
    for e in extras.iter_mut() {
        if let Extras::Static(s) = e {
            s.global_translation = r.v3()?;
        }
    }
    for e in extras.iter_mut() {
        if let Extras::Dynamic(d) = e {
            for p in d.traj_pos.iter_mut() {
                *p = r.v3()?;
            }
        }
    }
    for e in extras.iter_mut() {
        if let Extras::Dynamic(d) = e {
            for q in d.traj_rot.iter_mut() {
                *q = r.v4()?;
            }
        }
    }
    for e in extras.iter_mut() {
        if let Extras::Dynamic(d) = e {
            d.window_start = r.f32()?;
            d.window_end = r.f32()?;
            d.window_sharpness = r.f32()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    let set = GaussianSet {
        cores,
        extras,
        sh_degree,
        traj_points,
    };
    set.validate()?;
    Ok(set)
}

pub fn save_checkpoint(set: &GaussianSet, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_checkpoint(set)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize_checkpoint(&bytes)
}
