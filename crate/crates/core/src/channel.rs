//! Channel synthesis from path records.
//!
//! Conventions: `H0k[k]` is the M×N_t matrix from the BS to site k. The vector
//! channels are stored as column vectors whose conjugate transpose is the
//! received row, so `y = h0q[q]ᴴ x` for the direct link and the cascaded link
//! through site k reads `hkq[k][q]ᴴ Θ_k H0k[k] x`. Phases are stacked in one
//! vector of length K·M with `Θ_kᴴ = diag(v_k)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ckm::{Ckm, CkmError, EndpointId, PathKind, PathRecord};
use crate::scene::{PointSet, Scene, Vec3};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("{0} is not a unit vector")]
    NotUnit(&'static str),
    #[error("array must have at least one element")]
    EmptyArray,
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("non-finite channel entry in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Ckm(#[from] CkmError),
}

/// A sensing point or a communication point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Sp(usize),
    Cp(usize),
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Sp(p) => write!(f, "SP{p}"),
            Target::Cp(q) => write!(f, "CP{q}"),
        }
    }
}

/// Uniform linear array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeom {
    pub axis: Vec3,
    pub n: usize,
    pub spacing: f64,
}

impl ArrayGeom {
    pub fn new(axis: Vec3, n: usize, spacing: f64) -> Self {
        Self { axis, n, spacing }
    }

    /// Isotropic single-element receiver.
    pub fn single() -> Self {
        Self { axis: Vec3::x(), n: 1, spacing: 0.5 }
    }
}

/// `a_i = exp(j·2π·spacing·i·⟨direction, axis⟩)`, referenced to element 0.
pub fn array_response(direction: &Vec3, axis: &Vec3, n: usize, spacing: f64) -> Result<CVector, ChannelError> {
    if n == 0 {
        return Err(ChannelError::EmptyArray);
    }
    if (direction.norm() - 1.0).abs() > UNIT_TOL {
        return Err(ChannelError::NotUnit("direction"));
    }
    if (axis.norm() - 1.0).abs() > UNIT_TOL {
        return Err(ChannelError::NotUnit("axis"));
    }
    let phase = 2.0 * std::f64::consts::PI * spacing * direction.dot(axis);
    Ok(CVector::from_fn(n, |i, _| Complex64::from_polar(1.0, phase * i as f64)))
}

/// `Σ gain · a_rx(aoa) · a_tx(aod)ᴴ` over the records.
pub fn synthesize_channel(records: &[PathRecord], tx: &ArrayGeom, rx: &ArrayGeom) -> Result<CMatrix, ChannelError> {
    let mut h = CMatrix::zeros(rx.n, tx.n);
    for r in records {
        let at = array_response(&r.aod, &tx.axis, tx.n, tx.spacing)?;
        let ar = array_response(&r.aoa, &rx.axis, rx.n, rx.spacing)?;
        h += (ar * r.gain) * at.adjoint();
    }
    Ok(h)
}

/// Cascaded blocks seen by one target: `blocks[k] = H0kᴴ·diag(c_k)` where
/// `c_k` is the site-to-target vector, plus the direct vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBlocks {
    pub blocks: Vec<CMatrix>,
    pub direct: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h0k: Vec<CMatrix>,
    pub h0q: Vec<CVector>,
    pub hkq: Vec<Vec<CVector>>,
    pub gkp: Vec<Vec<CVector>>,
    k: usize,
    m: usize,
    nt: usize,
    p: usize,
    q: usize,
    targets: Vec<TargetBlocks>,
}

impl ChannelSet {
    /// Checks dimensions and finiteness, then precomputes the per-target blocks.
    pub fn new(
        h0k: Vec<CMatrix>,
        h0q: Vec<CVector>,
        hkq: Vec<Vec<CVector>>,
        gkp: Vec<Vec<CVector>>,
    ) -> Result<Self, ChannelError> {
        let k = h0k.len();
        if k == 0 {
            return Err(ChannelError::Dimension("no candidate sites".into()));
        }
        let (m, nt) = h0k[0].shape();
        let q = h0q.len();
        let p = gkp.first().map_or(0, Vec::len);
        let dim_err = |what: &str| Err(ChannelError::Dimension(what.to_string()));
        if h0k.iter().any(|h| h.shape() != (m, nt)) {
            return dim_err("H0k shapes differ");
        }
        if h0q.iter().any(|h| h.len() != nt) {
            return dim_err("h0q length differs from N_t");
        }
        if hkq.len() != k || hkq.iter().any(|r| r.len() != q || r.iter().any(|h| h.len() != m)) {
            return dim_err("hkq must be K×Q vectors of length M");
        }
        if gkp.len() != k || gkp.iter().any(|r| r.len() != p || r.iter().any(|g| g.len() != m)) {
            return dim_err("gkp must be K×P vectors of length M");
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !h0k.iter().all(|h| h.iter().all(finite)) {
            return Err(ChannelError::NonFinite("H0k"));
        }
        if !h0q.iter().all(|h| h.iter().all(finite)) {
            return Err(ChannelError::NonFinite("h0q"));
        }
        if !hkq.iter().flatten().all(|h| h.iter().all(finite)) {
            return Err(ChannelError::NonFinite("hkq"));
        }
        if !gkp.iter().flatten().all(|h| h.iter().all(finite)) {
            return Err(ChannelError::NonFinite("gkp"));
        }
        let cascade = |s: usize, c: &CVector| h0k[s].adjoint() * CMatrix::from_diagonal(c);
        let mut targets = Vec::with_capacity(p + q);
        for i in 0..p {
            targets.push(TargetBlocks {
                blocks: (0..k).map(|s| cascade(s, &gkp[s][i])).collect(),
                direct: CVector::zeros(nt),
            });
        }
        for i in 0..q {
            targets.push(TargetBlocks {
                blocks: (0..k).map(|s| cascade(s, &hkq[s][i])).collect(),
                direct: h0q[i].clone(),
            });
        }
        Ok(Self { h0k, h0q, hkq, gkp, k, m, nt, p, q, targets })
    }

    /// (K, M, N_t, P, Q)
    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        (self.k, self.m, self.nt, self.p, self.q)
    }

    pub fn num_sites(&self) -> usize {
        self.k
    }

    pub fn elements(&self) -> usize {
        self.m
    }

    pub fn num_tx(&self) -> usize {
        self.nt
    }

    pub fn num_sp(&self) -> usize {
        self.p
    }

    pub fn num_cp(&self) -> usize {
        self.q
    }

    /// All targets, sensing points first.
    pub fn targets(&self) -> Vec<Target> {
        (0..self.p).map(Target::Sp).chain((0..self.q).map(Target::Cp)).collect()
    }

    pub fn target_index(&self, t: Target) -> usize {
        match t {
            Target::Sp(p) => p,
            Target::Cp(q) => self.p + q,
        }
    }

    pub fn blocks(&self, t: Target) -> &TargetBlocks {
        &self.targets[self.target_index(t)]
    }

    /// `u = Σ_k β_k·blocks_k·v_k + direct` for stacked phases `v` (length K·M).
    pub fn effective(&self, beta: &[f64], v: &CVector, t: Target) -> CVector {
        let tb = self.blocks(t);
        let mut u = tb.direct.clone();
        for (s, b) in tb.blocks.iter().enumerate() {
            if beta[s] != 0.0 {
                u += b * v.rows(s * self.m, self.m) * Complex64::from(beta[s]);
            }
        }
        u
    }

    /// Copy with every site-to-point channel replaced by `f`. Used by tests.
    pub fn map_site_links(&self, f: impl Fn(&CVector) -> CVector) -> Result<Self, ChannelError> {
        let hkq = self.hkq.iter().map(|r| r.iter().map(&f).collect()).collect();
        let gkp = self.gkp.iter().map(|r| r.iter().map(&f).collect()).collect();
        Self::new(self.h0k.clone(), self.h0q.clone(), hkq, gkp)
    }

    /// Complex entries as `[re, im]` pairs for external checking.
    pub fn to_json(&self) -> Value {
        let c = |z: &Complex64| json!([z.re, z.im]);
        let vecj = |v: &CVector| Value::Array(v.iter().map(c).collect());
        let matj = |h: &CMatrix| {
            Value::Array((0..h.nrows()).map(|i| Value::Array(h.row(i).iter().map(c).collect())).collect())
        };
        json!({
            "dims": {"K": self.k, "M": self.m, "N_t": self.nt, "P": self.p, "Q": self.q},
            "H0k": self.h0k.iter().map(matj).collect::<Vec<_>>(),
            "h0q": self.h0q.iter().map(vecj).collect::<Vec<_>>(),
            "hkq": self.hkq.iter().map(|r| r.iter().map(vecj).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "gkp": self.gkp.iter().map(|r| r.iter().map(vecj).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

fn row_to_vector(h: &CMatrix) -> CVector {
    CVector::from_iterator(h.ncols(), h.row(0).iter().map(|z| z.conj()))
}

pub fn assemble_channel_set(ckm: &Ckm, scene: &Scene, points: &PointSet) -> Result<ChannelSet, ChannelError> {
    let a = &scene.array;
    let bs = ArrayGeom::new(Vec3::from(a.bs_axis), a.n_tx, a.spacing_wavelengths);
    let sites: Vec<ArrayGeom> = scene
        .sites
        .iter()
        .map(|s| ArrayGeom::new(Vec3::from(s.axis), a.n_elements, a.spacing_wavelengths))
        .collect();
    let point = ArrayGeom::single();
    let los_only = |r: Vec<PathRecord>| r.into_iter().filter(|p| p.kind == PathKind::LoS).collect::<Vec<_>>();

    let mut h0k = Vec::with_capacity(sites.len());
    let mut hkq = Vec::with_capacity(sites.len());
    let mut gkp = Vec::with_capacity(sites.len());
    for (k, site) in sites.iter().enumerate() {
        let sid = EndpointId::Site(k);
        h0k.push(synthesize_channel(&ckm.paths(EndpointId::Bs, sid)?, &bs, site)?);
        let mut row = Vec::with_capacity(points.comm.len());
        for q in 0..points.comm.len() {
            let h = synthesize_channel(&ckm.paths(sid, EndpointId::Cp(q))?, site, &point)?;
            row.push(row_to_vector(&h));
        }
        hkq.push(row);
        let mut row = Vec::with_capacity(points.sensing.len());
        for p in 0..points.sensing.len() {
            let h = synthesize_channel(&los_only(ckm.paths(sid, EndpointId::Sp(p))?), site, &point)?;
            row.push(row_to_vector(&h));
        }
        gkp.push(row);
    }
    let mut h0q = Vec::with_capacity(points.comm.len());
    for q in 0..points.comm.len() {
        let h = synthesize_channel(&ckm.paths(EndpointId::Bs, EndpointId::Cp(q))?, &bs, &point)?;
        h0q.push(row_to_vector(&h));
    }
    ChannelSet::new(h0k, h0q, hkq, gkp)
}
