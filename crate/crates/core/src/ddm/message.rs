//! Rays crossing sub-domain interfaces and their fixed little-endian wire
//! layout.

use super::DdmError;
use crate::math::Vec3;
use crate::render::RayKind;

/// Throughput samples carried on the wire.
pub const WIRE_SAMPLES: usize = 81;
/// entry 3xf64, direction 3xf64, depth u32, pixel u64, kind u8,
/// partial_t f64, throughput 81xf32.
pub const WIRE_SIZE: usize = 24 + 24 + 4 + 8 + 1 + 8 + 4 * WIRE_SAMPLES;

#[derive(Debug, Clone, PartialEq)]
pub struct RayMessage {
    pub entry_point: Vec3,
    pub direction: Vec3,
    pub throughput: [f32; WIRE_SAMPLES],
    pub depth: u32,
    pub pixel_id: u64,
    pub kind: RayKind,
    /// Distance already traveled from the ray origin.
    pub partial_t: f64,
}

impl RayMessage {
    pub fn encode(&self) -> [u8; WIRE_SIZE] {
        let mut out = [0u8; WIRE_SIZE];
        let mut w = Writer { buf: &mut out, pos: 0 };
        for v in [self.entry_point, self.direction] {
            for x in v.to_array() {
                w.put(&x.to_le_bytes());
            }
        }
        w.put(&self.depth.to_le_bytes());
        w.put(&self.pixel_id.to_le_bytes());
        w.put(&[self.kind as u8]);
        w.put(&self.partial_t.to_le_bytes());
        for t in self.throughput {
            w.put(&t.to_le_bytes());
        }
        debug_assert_eq!(w.pos, WIRE_SIZE);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<RayMessage, DdmError> {
        if bytes.len() != WIRE_SIZE {
            return Err(DdmError::Codec(format!("expected {WIRE_SIZE} bytes, got {}", bytes.len())));
        }
        let mut r = Reader { buf: bytes, pos: 0 };
        let vec3 = |r: &mut Reader| Vec3::new(r.f64(), r.f64(), r.f64());
        let entry_point = vec3(&mut r);
        let direction = vec3(&mut r);
        let depth = u32::from_le_bytes(r.take());
        let pixel_id = u64::from_le_bytes(r.take());
        let [k] = r.take::<1>();
        let kind = RayKind::from_u8(k).ok_or_else(|| DdmError::Codec(format!("unknown ray kind {k}")))?;
        let partial_t = r.f64();
        let mut throughput = [0f32; WIRE_SAMPLES];
        for t in &mut throughput {
            *t = f32::from_le_bytes(r.take());
        }
        Ok(RayMessage { entry_point, direction, throughput, depth, pixel_id, kind, partial_t })
    }
}

struct Writer<'a> {
    buf: &'a mut [u8],
    pos: usize,
}

impl Writer<'_> {
    fn put(&mut self, b: &[u8]) {
        self.buf[self.pos..self.pos + b.len()].copy_from_slice(b);
        self.pos += b.len();
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

/// Wire throughput from a spectrum; missing samples are zero.
pub fn throughput_to_wire(values: &[f64]) -> [f32; WIRE_SAMPLES] {
    let mut out = [0f32; WIRE_SAMPLES];
    for (o, v) in out.iter_mut().zip(values) {
        *o = *v as f32;
    }
    out
}
