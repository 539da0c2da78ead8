//! Memoization of individual integrals with symmetry-aware keys and an
//! optional binary persistence format.
//!
//! File layout (little-endian): the 8-byte magic `STURMIC1`, a `u32`
//! format version, a `u64` record count, then fixed-size records of
//! `kind u8`, bra and ket as `(u32 n, u32 l, i32 m)`, seven `i64` values
//! (R1, R2 and p0 quantized on a 1e-12 grid), tolerance `f64` and value
//! `f64`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use crate::basis::QuantumNumbers;
use crate::error::{Error, Result};
use crate::integrals::{one_center, three_center, two_center_bra, two_center_ket, QuadratureSpec};

const MAGIC: &[u8; 8] = b"STURMIC1";
const VERSION: u32 = 1;
const QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntegralKind {
    OneCenter,
    TwoCenterBra,
    TwoCenterKet,
    ThreeCenter,
}

impl IntegralKind {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [Self::OneCenter, Self::TwoCenterBra, Self::TwoCenterKet, Self::ThreeCenter]
            .get(c as usize)
            .copied()
    }
}

/// Integral request. `r1` displaces the ket orbital, `r2` the Coulomb
/// center; unused displacements must be zero for the lower kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralKey {
    pub kind: IntegralKind,
    pub bra: QuantumNumbers,
    pub ket: QuantumNumbers,
    pub r1: [f64; 3],
    pub r2: [f64; 3],
    pub p0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Canonical {
    kind: IntegralKind,
    bra: (u32, u32, i32),
    ket: (u32, u32, i32),
    coords: [i64; 7],
}

fn quantize(v: f64) -> i64 {
    (v / QUANTUM).round() as i64
}

fn qn_tuple(q: QuantumNumbers) -> (u32, u32, i32) {
    (q.n, q.l, q.m)
}

fn on_z_axis(v: [i64; 3]) -> bool {
    v[0] == 0 && v[1] == 0
}

impl IntegralKey {
    pub fn validate(&self) -> Result<()> {
        let zero = |v: [f64; 3]| v.iter().all(|c| c.abs() < QUANTUM);
        let ok = match self.kind {
            IntegralKind::OneCenter => zero(self.r1) && zero(self.r2),
            IntegralKind::TwoCenterBra => zero(self.r2),
            IntegralKind::TwoCenterKet => zero(self.r1),
            IntegralKind::ThreeCenter => true,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("displacements inconsistent with {:?}", self.kind)));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::InvalidArgument(format!("p0 must be positive, got {}", self.p0)));
        }
        Ok(())
    }

    fn canonical(&self) -> Canonical {
        let q = |v: [f64; 3]| [quantize(v[0]), quantize(v[1]), quantize(v[2])];
        let (r1, r2) = (q(self.r1), q(self.r2));
        let mut bra = qn_tuple(self.bra);
        let mut ket = qn_tuple(self.ket);
        let mut r1 = r1;
        let mut r2 = r2;
        match self.kind {
            IntegralKind::TwoCenterKet => {
                if ket < bra {
                    std::mem::swap(&mut bra, &mut ket);
                }
            }
            IntegralKind::ThreeCenter => {
                // shifting the origin to the ket center swaps the orbitals
                let alt_r1 = [-r1[0], -r1[1], -r1[2]];
                let alt_r2 = [r2[0] - r1[0], r2[1] - r1[1], r2[2] - r1[2]];
                if (ket, bra, alt_r1, alt_r2) < (bra, ket, r1, r2) {
                    std::mem::swap(&mut bra, &mut ket);
                    r1 = alt_r1;
                    r2 = alt_r2;
                }
            }
            _ => {}
        }
        // reflection through the xz plane followed by a rotation about z:
        // flipping both m signs leaves axial integrals unchanged
        if on_z_axis(r1) && on_z_axis(r2) && bra.2 < 0 {
            bra.2 = -bra.2;
            ket.2 = -ket.2;
        }
        Canonical {
            kind: self.kind,
            bra,
            ket,
            coords: [r1[0], r1[1], r1[2], r2[0], r2[1], r2[2], quantize(self.p0)],
        }
    }

    fn evaluate(&self, spec: &QuadratureSpec) -> Result<f64> {
        match self.kind {
            IntegralKind::OneCenter => Ok(one_center(self.bra, self.ket, self.p0)),
            IntegralKind::TwoCenterBra => two_center_bra(self.bra, self.ket, self.r1, self.p0, spec),
            IntegralKind::TwoCenterKet => two_center_ket(self.bra, self.ket, self.r2, self.p0, spec),
            IntegralKind::ThreeCenter => three_center(self.bra, self.ket, self.r1, self.r2, self.p0, spec),
        }
    }
}

/// Concurrent integral memo: shared reads, exclusive inserts.
#[derive(Debug, Default)]
pub struct IntegralCache {
    map: RwLock<HashMap<Canonical, (f64, f64)>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl IntegralCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached value when computed at an equal or tighter tolerance,
    /// otherwise a fresh evaluation that is then stored.
    pub fn get_or_compute(&self, key: &IntegralKey, spec: &QuadratureSpec) -> Result<f64> {
        key.validate()?;
        let c = key.canonical();
        if let Some(&(tol, value)) = self.map.read().unwrap().get(&c) {
            if tol <= spec.tolerance {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(value);
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = key.evaluate(spec)?;
        let mut map = self.map.write().unwrap();
        let slot = map.entry(c).or_insert((spec.tolerance, value));
        if spec.tolerance < slot.0 {
            *slot = (spec.tolerance, value);
        }
        Ok(value)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.map.read().unwrap();
        let mut entries: Vec<_> = map.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut buf = Vec::with_capacity(24 + entries.len() * 105);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (k, (tol, value)) in entries {
            buf.push(k.kind.code());
            for (n, l, m) in [k.bra, k.ket] {
                buf.extend_from_slice(&n.to_le_bytes());
                buf.extend_from_slice(&l.to_le_bytes());
                buf.extend_from_slice(&m.to_le_bytes());
            }
            for c in k.coords {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            buf.extend_from_slice(&tol.to_le_bytes());
            buf.extend_from_slice(&value.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        f.write_all(&buf).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
    }

    /// Merge records from a file written by [`Self::save`].
    pub fn load(&self, path: &Path) -> Result<usize> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let mut map = self.map.write().unwrap();
        for _ in 0..count {
            let kind = IntegralKind::from_code(r.take(1)?[0]).ok_or_else(|| Error::Cache("bad kind".into()))?;
            let mut qns = [(0u32, 0u32, 0i32); 2];
            for q in &mut qns {
                *q = (r.u32()?, r.u32()?, r.i32()?);
            }
            let mut coords = [0i64; 7];
            for c in &mut coords {
                *c = r.i64()?;
            }
            let tol = r.f64()?;
            let value = r.f64()?;
            let key = Canonical { kind, bra: qns[0], ket: qns[1], coords };
            let slot = map.entry(key).or_insert((tol, value));
            if tol < slot.0 {
                *slot = (tol, value);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Cache("trailing bytes".into()));
        }
        Ok(count)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qn(n: u32, l: u32, m: i32) -> QuantumNumbers {
        QuantumNumbers::new(n, l, m).unwrap()
    }

    fn ket_key(bra: QuantumNumbers, ket: QuantumNumbers) -> IntegralKey {
        IntegralKey { kind: IntegralKind::TwoCenterKet, bra, ket, r1: [0.0; 3], r2: [0.3, 1.0, -0.5], p0: 1.1 }
    }

    #[test]
    fn repeated_key_hits() {
        let cache = IntegralCache::new();
        let spec = QuadratureSpec::default();
        let k = ket_key(qn(2, 1, 0), qn(1, 0, 0));
        let a = cache.get_or_compute(&k, &spec).unwrap();
        let b = cache.get_or_compute(&k, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }

    #[test]
    fn transposed_ket_key_shares_entry() {
        let cache = IntegralCache::new();
        let spec = QuadratureSpec::default();
        let a = cache.get_or_compute(&ket_key(qn(2, 1, 0), qn(1, 0, 0)), &spec).unwrap();
        let b = cache.get_or_compute(&ket_key(qn(1, 0, 0), qn(2, 1, 0)), &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.hits(), 1);
        let direct = two_center_ket(qn(1, 0, 0), qn(2, 1, 0), [0.3, 1.0, -0.5], 1.1, &spec).unwrap();
        assert!((direct - a).abs() <= 1e-9 * a.abs().max(1e-3));
    }

    #[test]
    fn looser_entry_is_recomputed() {
        let cache = IntegralCache::new();
        let loose = QuadratureSpec { tolerance: 1e-6, ..Default::default() };
        let k = ket_key(qn(1, 0, 0), qn(1, 0, 0));
        cache.get_or_compute(&k, &loose).unwrap();
        cache.get_or_compute(&k, &QuadratureSpec::default()).unwrap();
        assert_eq!(cache.misses(), 2);
        cache.get_or_compute(&k, &loose).unwrap();
        assert_eq!(cache.hits(), 1);
    }

    #[test]
    fn three_center_origin_shift_is_a_hit() {
        let cache = IntegralCache::new();
        let spec = QuadratureSpec { radial_points: 24, angular_points: 12, tolerance: 1e-5, max_refinements: 3 };
        let (a, b) = (qn(1, 0, 0), qn(2, 0, 0));
        let (r1, r2) = ([0.0, 0.0, 1.5], [0.0, 0.0, 3.0]);
        let k1 = IntegralKey { kind: IntegralKind::ThreeCenter, bra: a, ket: b, r1, r2, p0: 1.0 };
        let k2 = IntegralKey { kind: IntegralKind::ThreeCenter, bra: b, ket: a, r1: [0.0, 0.0, -1.5], r2: [0.0, 0.0, 1.5], p0: 1.0 };
        let v1 = cache.get_or_compute(&k1, &spec).unwrap();
        let v2 = cache.get_or_compute(&k2, &spec).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(cache.hits(), 1);
    }

    #[test]
    fn axial_m_flip_is_a_hit_and_correct() {
        let cache = IntegralCache::new();
        let spec = QuadratureSpec { tolerance: 1e-10, ..Default::default() };
        let key = |m: i32| IntegralKey {
            kind: IntegralKind::TwoCenterBra,
            bra: qn(2, 1, m),
            ket: qn(3, 2, m),
            r1: [0.0, 0.0, 2.2],
            r2: [0.0; 3],
            p0: 0.9,
        };
        let plus = cache.get_or_compute(&key(1), &spec).unwrap();
        let minus = cache.get_or_compute(&key(-1), &spec).unwrap();
        assert_eq!(plus, minus);
        assert_eq!(cache.hits(), 1);
        let direct = two_center_bra(qn(2, 1, -1), qn(3, 2, -1), [0.0, 0.0, 2.2], 0.9, &spec).unwrap();
        assert!((direct - plus).abs() < 1e-9 * plus.abs().max(1e-3));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("integrals.bin");
        let cache = IntegralCache::new();
        let spec = QuadratureSpec::default();
        let k = ket_key(qn(2, 0, 0), qn(1, 0, 0));
        let v = cache.get_or_compute(&k, &spec).unwrap();
        cache.save(&path).unwrap();
        let fresh = IntegralCache::new();
        assert_eq!(fresh.load(&path).unwrap(), 1);
        assert_eq!(fresh.get_or_compute(&k, &spec).unwrap(), v);
        assert_eq!(fresh.hits(), 1);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(matches!(fresh.load(&path), Err(Error::Cache(_))));
    }

    #[test]
    fn inconsistent_key_is_rejected() {
        let mut k = ket_key(qn(1, 0, 0), qn(1, 0, 0));
        k.r1 = [1.0, 0.0, 0.0];
        assert!(IntegralCache::new().get_or_compute(&k, &QuadratureSpec::default()).is_err());
    }
}
