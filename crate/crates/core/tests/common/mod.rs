#![allow(dead_code)]

use irs_planner::channel::{assemble_channel_set, CMatrix, CVector, ChannelSet};
use irs_planner::ckm::build_ckm;
use irs_planner::demo::{seeded_desk_scene, DESK_REQUIREMENTS};
use irs_planner::metrics::Requirements;
use irs_planner::scene::{PointSet, Scene};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cgauss(rng: &mut impl Rng, scale: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (scale / 2f64.sqrt())
}

pub fn cvec(rng: &mut impl Rng, n: usize, scale: f64) -> CVector {
    CVector::from_fn(n, |_, _| cgauss(rng, scale))
}

pub fn cmat(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| cgauss(rng, scale))
}

pub fn unit_phases(rng: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
}

/// Rayleigh channels with K sites, M elements, N_t antennas, P SPs and Q CPs.
/// Cascaded links have unit-order gain; the direct links are scaled by `direct`.
pub fn random_channels(rng: &mut impl Rng, k: usize, m: usize, nt: usize, p: usize, q: usize, direct: f64) -> ChannelSet {
    let h0k = (0..k).map(|_| cmat(rng, m, nt, 1.0)).collect();
    let h0q = (0..q).map(|_| cvec(rng, nt, direct)).collect();
    let hkq = (0..k).map(|_| (0..q).map(|_| cvec(rng, m, 1.0)).collect()).collect();
    let gkp = (0..k).map(|_| (0..p).map(|_| cvec(rng, m, 1.0)).collect()).collect();
    ChannelSet::new(h0k, h0q, hkq, gkp).unwrap()
}

/// Thresholds loose enough that full deployment is feasible for the
/// unit-gain random channels above.
pub fn loose_requirements() -> Requirements {
    Requirements::new(0.5, 1.0, 0.5, 10.0).unwrap()
}

pub fn desk_requirements() -> Requirements {
    let r = DESK_REQUIREMENTS;
    Requirements::from_db(r.ps_dbm, r.gc_db, r.sigma2_dbm, r.p0_max_dbm).unwrap()
}

pub struct Desk {
    pub scene: Scene,
    pub points: PointSet,
    pub channels: ChannelSet,
}

pub fn desk(seed: u64) -> Desk {
    let scene = seeded_desk_scene(seed);
    let points = scene.sample().unwrap();
    let ckm = build_ckm(&scene, &points).unwrap();
    let channels = assemble_channel_set(&ckm, &scene, &points).unwrap();
    Desk { scene, points, channels }
}
