//! Channel knowledge map: line-of-sight and single-bounce specular paths
//! between every endpoint pair the optimizers need, plus a binary cache.
//!
//! Cache layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes   "IRSCKM\0\0"
//! version      u32       currently 1
//! frequency    f64       Hz
//! scene_hash   32 bytes  SHA-256 of the scene and sampled points
//! n_endpoints  u32
//!   tag u8 (0 BS, 1 site, 2 SP, 3 CP) | index u32 | x y z f64
//! n_pairs      u32
//!   a: tag u8, index u32 | b: tag u8, index u32 | n_records u32
//!     kind u8 (0 LoS, 1 reflected) | length f64 | gain re f64, im f64
//!     aod xyz f64 | aoa xyz f64 | has_bounce u8 | bounce xyz f64
//! checksum     32 bytes  SHA-256 of everything above
//! ```
//!
//! Pairs are stored once, oriented from the smaller to the larger endpoint id.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::{Obstacle, PointSet, Scene, Vec3};

const MAGIC: &[u8; 8] = b"IRSCKM\0\0";
const VERSION: u32 = 1;
const SEGMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndpointId {
    Bs,
    Site(usize),
    Sp(usize),
    Cp(usize),
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointId::Bs => write!(f, "bs"),
            EndpointId::Site(k) => write!(f, "site{k}"),
            EndpointId::Sp(p) => write!(f, "sp{p}"),
            EndpointId::Cp(q) => write!(f, "cp{q}"),
        }
    }
}

impl std::str::FromStr for EndpointId {
    type Err = String;

    /// Parses the display form: `bs`, `site3`, `sp0`, `cp12`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        let index = |rest: &str| rest.parse::<usize>().map_err(|_| format!("bad endpoint index in `{s}`"));
        if s == "bs" {
            Ok(EndpointId::Bs)
        } else if let Some(rest) = s.strip_prefix("site") {
            Ok(EndpointId::Site(index(rest)?))
        } else if let Some(rest) = s.strip_prefix("sp") {
            Ok(EndpointId::Sp(index(rest)?))
        } else if let Some(rest) = s.strip_prefix("cp") {
            Ok(EndpointId::Cp(index(rest)?))
        } else {
            Err(format!("unknown endpoint `{s}` (expected bs, siteK, spP or cpQ)"))
        }
    }
}

impl EndpointId {
    fn tag(&self) -> (u8, u32) {
        match *self {
            EndpointId::Bs => (0, 0),
            EndpointId::Site(k) => (1, k as u32),
            EndpointId::Sp(p) => (2, p as u32),
            EndpointId::Cp(q) => (3, q as u32),
        }
    }

    fn from_tag(tag: u8, index: u32) -> Option<Self> {
        let i = index as usize;
        match tag {
            0 => Some(EndpointId::Bs),
            1 => Some(EndpointId::Site(i)),
            2 => Some(EndpointId::Sp(i)),
            3 => Some(EndpointId::Cp(i)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    LoS,
    Reflected,
}

/// One propagation path. `aod` points from the transmitter toward its first
/// hop, `aoa` from the receiver toward its last hop.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub kind: PathKind,
    pub length: f64,
    pub gain: Complex64,
    pub aod: Vec3,
    pub aoa: Vec3,
    pub bounce: Option<Vec3>,
}

impl PathRecord {
    /// The same path seen from the other end.
    pub fn reversed(&self) -> Self {
        Self { aod: self.aoa, aoa: self.aod, ..self.clone() }
    }
}

#[derive(Debug, Error)]
pub enum CkmError {
    #[error("transmitter and receiver coincide")]
    SameEndpoints,
    #[error("{0} endpoint lies inside obstacle {1}")]
    InsideObstacle(&'static str, usize),
    #[error("pair ({a}, {b}): {source}")]
    Pair { a: EndpointId, b: EndpointId, source: Box<CkmError> },
    #[error("pair ({0}, {1}) is not in the map")]
    MissingPair(EndpointId, EndpointId),
    #[error("scene hash mismatch: file has {found}, scene gives {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("corrupt map file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed-box slab test against the open segment `a → b`. Touching an edge,
/// corner or face counts as blocked.
pub fn segment_blocked(obstacles: &[Obstacle], a: &Vec3, b: &Vec3) -> bool {
    let d = b - a;
    obstacles.iter().any(|o| {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for ax in 0..3 {
            if d[ax] == 0.0 {
                if a[ax] < o.min[ax] || a[ax] > o.max[ax] {
                    return false;
                }
            } else {
                let ta = (o.min[ax] - a[ax]) / d[ax];
                let tb = (o.max[ax] - a[ax]) / d[ax];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        t0 <= t1 && t1 >= SEGMENT_EPS && t0 <= 1.0 - SEGMENT_EPS
    })
}

fn friis(wavelength: f64, length: f64, coefficient: f64) -> Complex64 {
    let amp = coefficient * wavelength / (4.0 * PI * length);
    Complex64::from_polar(amp, -2.0 * PI * length / wavelength)
}

fn trace_oriented(obstacles: &[Obstacle], wavelength: f64, tx: &Vec3, rx: &Vec3) -> Vec<PathRecord> {
    let mut out = Vec::new();
    if !segment_blocked(obstacles, tx, rx) {
        let length = (rx - tx).norm();
        let dir = (rx - tx) / length;
        out.push(PathRecord {
            kind: PathKind::LoS,
            length,
            gain: friis(wavelength, length, 1.0),
            aod: dir,
            aoa: -dir,
            bounce: None,
        });
    }
    for o in obstacles {
        for ax in 0..3 {
            for positive in [false, true] {
                let (plane, sign) = if positive { (o.max[ax], 1.0) } else { (o.min[ax], -1.0) };
                let d1 = sign * (tx[ax] - plane);
                let d2 = sign * (rx[ax] - plane);
                if !(d1 > 0.0 && d2 > 0.0) {
                    continue;
                }
                let mut image = *rx;
                image[ax] = 2.0 * plane - rx[ax];
                let t = d1 / (d1 + d2);
                let mut p = tx + (image - tx) * t;
                p[ax] = plane;
                let inside = (0..3).filter(|&a| a != ax).all(|a| p[a] > o.min[a] && p[a] < o.max[a]);
                if !inside {
                    continue;
                }
                if segment_blocked(obstacles, tx, &p) || segment_blocked(obstacles, &p, rx) {
                    continue;
                }
                let length = (image - tx).norm();
                out.push(PathRecord {
                    kind: PathKind::Reflected,
                    length,
                    gain: friis(wavelength, length, o.reflect.face(ax, positive)),
                    aod: (p - tx).normalize(),
                    aoa: (p - rx).normalize(),
                    bounce: Some(p),
                });
            }
        }
    }
    out.sort_by(|a, b| a.length.total_cmp(&b.length));
    out
}

fn lexicographic_less(a: &Vec3, b: &Vec3) -> bool {
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// LoS and single-bounce paths from `tx` to `rx`, sorted by length.
///
/// The computation always runs from the lexicographically smaller endpoint,
/// so swapping the arguments yields the same records with `aod`/`aoa`
/// exchanged, bit for bit.
pub fn trace_paths(scene: &Scene, tx: &Vec3, rx: &Vec3) -> Result<Vec<PathRecord>, CkmError> {
    if (tx - rx).norm() == 0.0 {
        return Err(CkmError::SameEndpoints);
    }
    for (i, o) in scene.obstacles.iter().enumerate() {
        if o.contains(tx) {
            return Err(CkmError::InsideObstacle("transmit", i));
        }
        if o.contains(rx) {
            return Err(CkmError::InsideObstacle("receive", i));
        }
    }
    let wl = scene.wavelength();
    if lexicographic_less(rx, tx) {
        Ok(trace_oriented(&scene.obstacles, wl, rx, tx).iter().map(PathRecord::reversed).collect())
    } else {
        Ok(trace_oriented(&scene.obstacles, wl, tx, rx))
    }
}

/// Location-indexed path table.
#[derive(Debug, Clone, PartialEq)]
pub struct Ckm {
    pub frequency_hz: f64,
    pub scene_hash: [u8; 32],
    endpoints: BTreeMap<EndpointId, Vec3>,
    paths: BTreeMap<(EndpointId, EndpointId), Vec<PathRecord>>,
}

impl Ckm {
    /// Records for `a → b`, reoriented if the pair is stored the other way.
    pub fn paths(&self, a: EndpointId, b: EndpointId) -> Result<Vec<PathRecord>, CkmError> {
        if a <= b {
            self.paths.get(&(a, b)).cloned().ok_or(CkmError::MissingPair(a, b))
        } else {
            self.paths
                .get(&(b, a))
                .map(|r| r.iter().map(PathRecord::reversed).collect())
                .ok_or(CkmError::MissingPair(a, b))
        }
    }

    pub fn endpoint(&self, id: EndpointId) -> Option<Vec3> {
        self.endpoints.get(&id).copied()
    }

    pub fn endpoints(&self) -> impl Iterator<Item = (&EndpointId, &Vec3)> {
        self.endpoints.iter()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(EndpointId, EndpointId), &Vec<PathRecord>)> {
        self.paths.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.paths.len()
    }

    pub fn record_count(&self) -> usize {
        self.paths.values().map(Vec::len).sum()
    }

    /// Builds a map from explicit parts; used for synthetic tables.
    pub fn from_parts(
        frequency_hz: f64,
        scene_hash: [u8; 32],
        endpoints: BTreeMap<EndpointId, Vec3>,
        pairs: Vec<((EndpointId, EndpointId), Vec<PathRecord>)>,
    ) -> Self {
        let mut paths = BTreeMap::new();
        for ((a, b), recs) in pairs {
            if a <= b {
                paths.insert((a, b), recs);
            } else {
                paths.insert((b, a), recs.iter().map(PathRecord::reversed).collect());
            }
        }
        Self { frequency_hz, scene_hash, endpoints, paths }
    }
}

/// SHA-256 over the canonical JSON of the scene followed by every sampled
/// point coordinate.
pub fn scene_hash(scene: &Scene, points: &PointSet) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(scene).expect("scene serializes"));
    for p in points.sensing.iter().chain(points.comm.iter()) {
        for c in p.iter() {
            h.update(c.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Endpoint pairs consumed by channel assembly.
pub fn required_pairs(k: usize, p: usize, q: usize) -> Vec<(EndpointId, EndpointId)> {
    let mut out = Vec::with_capacity(k * (1 + p + q) + q);
    for s in 0..k {
        out.push((EndpointId::Bs, EndpointId::Site(s)));
        out.extend((0..p).map(|i| (EndpointId::Site(s), EndpointId::Sp(i))));
        out.extend((0..q).map(|i| (EndpointId::Site(s), EndpointId::Cp(i))));
    }
    out.extend((0..q).map(|i| (EndpointId::Bs, EndpointId::Cp(i))));
    out
}

pub fn build_ckm(scene: &Scene, points: &PointSet) -> Result<Ckm, CkmError> {
    let mut endpoints = BTreeMap::new();
    endpoints.insert(EndpointId::Bs, scene.bs_position());
    for (k, s) in scene.sites.iter().enumerate() {
        endpoints.insert(EndpointId::Site(k), s.position());
    }
    for (i, p) in points.sensing.iter().enumerate() {
        endpoints.insert(EndpointId::Sp(i), *p);
    }
    for (i, p) in points.comm.iter().enumerate() {
        endpoints.insert(EndpointId::Cp(i), *p);
    }
    let pairs = required_pairs(scene.sites.len(), points.sensing.len(), points.comm.len());
    let traced: Result<Vec<_>, CkmError> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let recs = trace_paths(scene, &endpoints[&a], &endpoints[&b])
                .map_err(|e| CkmError::Pair { a, b, source: Box::new(e) })?;
            Ok(((a, b), recs))
        })
        .collect();
    Ok(Ckm::from_parts(scene.frequency_hz, scene_hash(scene, points), endpoints, traced?))
}

fn put_vec(buf: &mut Vec<u8>, v: &Vec3) {
    for c in v.iter() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
}

fn put_id(buf: &mut Vec<u8>, id: EndpointId) {
    let (tag, idx) = id.tag();
    buf.push(tag);
    buf.extend_from_slice(&idx.to_le_bytes());
}

pub fn encode_ckm(ckm: &Ckm) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ckm.frequency_hz.to_le_bytes());
    buf.extend_from_slice(&ckm.scene_hash);
    buf.extend_from_slice(&(ckm.endpoints.len() as u32).to_le_bytes());
    for (id, p) in &ckm.endpoints {
        put_id(&mut buf, *id);
        put_vec(&mut buf, p);
    }
    buf.extend_from_slice(&(ckm.paths.len() as u32).to_le_bytes());
    for ((a, b), recs) in &ckm.paths {
        put_id(&mut buf, *a);
        put_id(&mut buf, *b);
        buf.extend_from_slice(&(recs.len() as u32).to_le_bytes());
        for r in recs {
            buf.push(match r.kind {
                PathKind::LoS => 0,
                PathKind::Reflected => 1,
            });
            buf.extend_from_slice(&r.length.to_le_bytes());
            buf.extend_from_slice(&r.gain.re.to_le_bytes());
            buf.extend_from_slice(&r.gain.im.to_le_bytes());
            put_vec(&mut buf, &r.aod);
            put_vec(&mut buf, &r.aoa);
            buf.push(u8::from(r.bounce.is_some()));
            put_vec(&mut buf, &r.bounce.unwrap_or_else(Vec3::zeros));
        }
    }
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);
    buf
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| CkmError::Corrupt("unexpected end of data".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CkmError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CkmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CkmError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec3(&mut self) -> Result<Vec3, CkmError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn id(&mut self) -> Result<EndpointId, CkmError> {
        let tag = self.u8()?;
        let idx = self.u32()?;
        EndpointId::from_tag(tag, idx).ok_or_else(|| CkmError::Corrupt(format!("unknown endpoint tag {tag}")))
    }
}

pub fn decode_ckm(data: &[u8]) -> Result<Ckm, CkmError> {
    if data.len() < MAGIC.len() + 32 {
        return Err(CkmError::Corrupt("file too short".into()));
    }
    let (body, checksum) = data.split_at(data.len() - 32);
    let digest: [u8; 32] = Sha256::digest(body).into();
    if digest.as_slice() != checksum {
        return Err(CkmError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { data: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CkmError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CkmError::Corrupt(format!("unsupported version {version}")));
    }
    let frequency_hz = r.f64()?;
    let scene_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let mut endpoints = BTreeMap::new();
    for _ in 0..r.u32()? {
        let id = r.id()?;
        endpoints.insert(id, r.vec3()?);
    }
    let mut paths = BTreeMap::new();
    for _ in 0..r.u32()? {
        let a = r.id()?;
        let b = r.id()?;
        let n = r.u32()? as usize;
        let mut recs = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let kind = match r.u8()? {
                0 => PathKind::LoS,
                1 => PathKind::Reflected,
                t => return Err(CkmError::Corrupt(format!("unknown path kind {t}"))),
            };
            let length = r.f64()?;
            let gain = Complex64::new(r.f64()?, r.f64()?);
            let aod = r.vec3()?;
            let aoa = r.vec3()?;
            let has_bounce = r.u8()? != 0;
            let bounce = r.vec3()?;
            recs.push(PathRecord { kind, length, gain, aod, aoa, bounce: has_bounce.then_some(bounce) });
        }
        paths.insert((a, b), recs);
    }
    if r.pos != body.len() {
        return Err(CkmError::Corrupt("trailing bytes".into()));
    }
    Ok(Ckm { frequency_hz, scene_hash, endpoints, paths })
}

pub fn save_ckm(ckm: &Ckm, path: &Path) -> Result<(), CkmError> {
    std::fs::write(path, encode_ckm(ckm))?;
    Ok(())
}

/// Reads a cache file without checking it against a scene.
pub fn read_ckm(path: &Path) -> Result<Ckm, CkmError> {
    decode_ckm(&std::fs::read(path)?)
}

/// Reads a cache file and rejects it unless it was built from `scene`/`points`.
pub fn load_ckm(path: &Path, scene: &Scene, points: &PointSet) -> Result<Ckm, CkmError> {
    let ckm = read_ckm(path)?;
    let expected = scene_hash(scene, points);
    if ckm.scene_hash != expected {
        return Err(CkmError::HashMismatch { expected: hex::encode(expected), found: hex::encode(ckm.scene_hash) });
    }
    Ok(ckm)
}
