//! Built-in demo house.
//!
//! A 10 m × 8 m single-storey floor plan. The BS sits in the west room. A
//! partition at x = 5 m separates it from the east half, with a doorway at
//! y ∈ [5.5, 6.5] m. A second wall at y = 4 m splits the east half into a
//! sensing entry (south, no line of sight to the BS) and a communication room
//! (north, reachable through the doorway and by reflections). Both interior
//! walls stop at 2.4 m, so surfaces mounted at 2.7 m see over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{ArraySpec, Obstacle, PointSpec, Region, SampleMode, Scene, Site};

pub const CARRIER_HZ: f64 = 3.5e9;
const MOUNT_Z: f64 = 2.7;
const WALL_REFLECT: f64 = 0.6;
const FLOOR_REFLECT: f64 = 0.4;

fn site(x: f64, y: f64, z: f64, normal: [f64; 3], axis: [f64; 3]) -> Site {
    Site { center: [x, y, z], normal, axis }
}

const EAST: [f64; 3] = [1.0, 0.0, 0.0];
const WEST: [f64; 3] = [-1.0, 0.0, 0.0];
const NORTH: [f64; 3] = [0.0, 1.0, 0.0];
const SOUTH: [f64; 3] = [0.0, -1.0, 0.0];
const DOWN: [f64; 3] = [0.0, 0.0, -1.0];

fn house_obstacles() -> Vec<Obstacle> {
    vec![
        // floor and ceiling
        Obstacle::new([-0.2, -0.2, -0.2], [10.2, 8.2, 0.0], FLOOR_REFLECT),
        Obstacle::new([-0.2, -0.2, 3.0], [10.2, 8.2, 3.2], FLOOR_REFLECT),
        // outer walls
        Obstacle::new([-0.2, -0.2, 0.0], [0.0, 8.2, 3.0], WALL_REFLECT),
        Obstacle::new([10.0, -0.2, 0.0], [10.2, 8.2, 3.0], WALL_REFLECT),
        Obstacle::new([0.0, -0.2, 0.0], [10.0, 0.0, 3.0], WALL_REFLECT),
        Obstacle::new([0.0, 8.0, 0.0], [10.0, 8.2, 3.0], WALL_REFLECT),
        // partition with doorway
        Obstacle::new([5.0, 0.0, 0.0], [5.2, 5.5, 2.4], WALL_REFLECT),
        Obstacle::new([5.0, 6.5, 0.0], [5.2, 8.0, 2.4], WALL_REFLECT),
        // wall between the sensing entry and the communication room
        Obstacle::new([5.2, 3.8, 0.0], [10.0, 4.0, 2.4], WALL_REFLECT),
    ]
}

/// All sixteen candidate mounts. The first six form the desk profile.
fn all_sites() -> Vec<Site> {
    vec![
        site(5.1, 1.5, MOUNT_Z, EAST, NORTH),
        site(5.1, 3.0, MOUNT_Z, EAST, NORTH),
        site(7.5, 3.9, MOUNT_Z, NORTH, EAST),
        site(5.1, 7.0, MOUNT_Z, EAST, NORTH),
        site(0.3, 0.3, MOUNT_Z, EAST, NORTH),
        site(2.5, 7.8, MOUNT_Z, SOUTH, EAST),
        site(6.0, 3.9, MOUNT_Z, NORTH, EAST),
        site(9.0, 3.9, MOUNT_Z, NORTH, EAST),
        site(9.8, 2.0, MOUNT_Z, WEST, NORTH),
        site(9.8, 6.0, MOUNT_Z, WEST, NORTH),
        site(7.5, 0.2, MOUNT_Z, NORTH, EAST),
        site(7.5, 7.8, MOUNT_Z, SOUTH, EAST),
        site(2.5, 0.2, MOUNT_Z, NORTH, EAST),
        site(0.2, 6.0, MOUNT_Z, EAST, NORTH),
        site(5.1, 4.5, MOUNT_Z, EAST, NORTH),
        site(3.0, 4.0, 2.9, DOWN, EAST),
    ]
}

fn house(sites: Vec<Site>, points: PointSpec, array: ArraySpec) -> Scene {
    Scene {
        bs: [0.5, 4.0, 2.0],
        sites,
        obstacles: house_obstacles(),
        sensing_region: Region::new([6.0, 0.5, 1.0], [9.5, 3.3, 1.0]),
        comm_region: Region::new([5.5, 4.5, 1.0], [9.5, 7.5, 1.0]),
        frequency_hz: CARRIER_HZ,
        points,
        array,
    }
}

/// K = 6, M = 8, N_t = 4, P = Q = 10.
pub fn desk_scene() -> Scene {
    house(
        all_sites().into_iter().take(6).collect(),
        PointSpec { mode: SampleMode::Grid, p: 10, q: 10, seed: 0 },
        ArraySpec { n_tx: 4, n_elements: 8, bs_axis: NORTH, spacing_wavelengths: 0.5 },
    )
}

/// Desk scene with site mounts jittered by up to ±0.2 m horizontally and
/// randomly drawn points, both from `seed`.
pub fn seeded_desk_scene(seed: u64) -> Scene {
    let mut scene = desk_scene();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in &mut scene.sites {
        s.center[0] += rng.gen_range(-0.2..=0.2);
        s.center[1] += rng.gen_range(-0.2..=0.2);
    }
    scene.points = PointSpec { mode: SampleMode::Random, p: 10, q: 10, seed };
    scene
}

/// K = 16, M = 64, N_t = 8, P = Q = 50.
pub fn paper_scene() -> Scene {
    house(
        all_sites(),
        PointSpec { mode: SampleMode::Grid, p: 50, q: 50, seed: 0 },
        ArraySpec { n_tx: 8, n_elements: 64, bs_axis: NORTH, spacing_wavelengths: 0.5 },
    )
}

/// Default thresholds for the demo profiles, in interface units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoRequirements {
    pub ps_dbm: f64,
    pub gc_db: f64,
    pub sigma2_dbm: f64,
    pub p0_max_dbm: f64,
}

pub const DESK_REQUIREMENTS: DemoRequirements =
    DemoRequirements { ps_dbm: -72.0, gc_db: 6.0, sigma2_dbm: -80.0, p0_max_dbm: 30.0 };
