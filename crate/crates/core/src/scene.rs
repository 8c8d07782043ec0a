//! Scenario geometry: base station, candidate surface sites, slab obstacles
//! and the sampled sensing/communication points.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scenario parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("sample count must be at least 1")]
    ZeroCount,
}

/// Amplitude reflection coefficient of a slab, either shared by all faces or
/// given per face in the order `[-x, +x, -y, +y, -z, +z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reflect {
    Uniform(f64),
    PerFace([f64; 6]),
}

impl Default for Reflect {
    fn default() -> Self {
        Reflect::Uniform(0.6)
    }
}

impl Reflect {
    pub fn face(&self, axis: usize, positive: bool) -> f64 {
        match self {
            Reflect::Uniform(r) => *r,
            Reflect::PerFace(r) => r[2 * axis + usize::from(positive)],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Reflect::Uniform(r) => vec![*r],
            Reflect::PerFace(r) => r.to_vec(),
        }
    }

    /// Same slab with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Reflect::Uniform(r) => Reflect::Uniform(r * factor),
            Reflect::PerFace(r) => Reflect::PerFace(r.map(|v| v * factor)),
        }
    }
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub reflect: Reflect,
}

impl Obstacle {
    pub fn new(min: [f64; 3], max: [f64; 3], reflect: f64) -> Self {
        Self { min, max, reflect: Reflect::Uniform(reflect) }
    }

    pub fn lo(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn hi(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    fn extent(&self, a: usize) -> f64 {
        self.max[a] - self.min[a]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub mode: SampleMode,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Array geometry shared by all sites and the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArraySpec {
    pub n_tx: usize,
    pub n_elements: usize,
    pub bs_axis: [f64; 3],
    pub spacing_wavelengths: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self { n_tx: 4, n_elements: 8, bs_axis: [0.0, 1.0, 0.0], spacing_wavelengths: 0.5 }
    }
}

/// Candidate surface location. `axis` is the direction of the element line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub axis: [f64; 3],
}

impl Site {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bs: [f64; 3],
    pub sites: Vec<Site>,
    pub obstacles: Vec<Obstacle>,
    pub sensing_region: Region,
    pub comm_region: Region,
    pub frequency_hz: f64,
    pub points: PointSpec,
    #[serde(default)]
    pub array: ArraySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub sensing: Vec<Vec3>,
    pub comm: Vec<Vec3>,
}

impl Scene {
    pub fn bs_position(&self) -> Vec3 {
        Vec3::from(self.bs)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// Checks every invariant and reports all failures at once.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut errs = Vec::new();
        let finite = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        let unit = |v: &[f64; 3]| (Vec3::from(*v).norm() - 1.0).abs() <= UNIT_TOL;

        if !finite(&self.bs) {
            errs.push("bs: non-finite coordinate".to_string());
        }
        if self.sites.is_empty() {
            errs.push("sites: at least one candidate site is required".into());
        }
        for (k, s) in self.sites.iter().enumerate() {
            if !finite(&s.center) || !finite(&s.normal) || !finite(&s.axis) {
                errs.push(format!("sites[{k}]: non-finite vector"));
                continue;
            }
            if !unit(&s.normal) {
                errs.push(format!("sites[{k}].normal: not unit length"));
            }
            if !unit(&s.axis) {
                errs.push(format!("sites[{k}].axis: not unit length"));
            }
            if Vec3::from(s.normal).dot(&Vec3::from(s.axis)).abs() > UNIT_TOL {
                errs.push(format!("sites[{k}]: normal and axis are not orthogonal"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !finite(&o.min) || !finite(&o.max) {
                errs.push(format!("obstacles[{i}]: non-finite corner"));
                continue;
            }
            if (0..3).any(|a| o.max[a] <= o.min[a]) {
                errs.push(format!("obstacles[{i}]: extent must be positive along every axis"));
            }
            if o.reflect.values().iter().any(|r| !(0.0..=1.0).contains(r)) {
                errs.push(format!("obstacles[{i}].reflect: coefficients must lie in [0, 1]"));
            }
            if o.contains(&self.bs_position()) {
                errs.push(format!("bs lies inside obstacles[{i}]"));
            }
            for (k, s) in self.sites.iter().enumerate() {
                if o.contains(&s.position()) {
                    errs.push(format!("sites[{k}] lies inside obstacles[{i}]"));
                }
            }
        }
        for (name, r) in [("sensing_region", &self.sensing_region), ("comm_region", &self.comm_region)] {
            if !finite(&r.min) || !finite(&r.max) || (0..3).any(|a| r.max[a] < r.min[a]) {
                errs.push(format!("{name}: min must not exceed max"));
            }
        }
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            errs.push("frequency_hz: must be positive".into());
        }
        if self.points.p == 0 {
            errs.push("points.P: must be at least 1".into());
        }
        if self.points.q == 0 {
            errs.push("points.Q: must be at least 1".into());
        }
        if self.array.n_tx == 0 {
            errs.push("array.n_tx: must be at least 1".into());
        }
        if self.array.n_elements == 0 {
            errs.push("array.n_elements: must be at least 1".into());
        }
        if !unit(&self.array.bs_axis) {
            errs.push("array.bs_axis: not unit length".into());
        }
        if !(self.array.spacing_wavelengths.is_finite() && self.array.spacing_wavelengths > 0.0) {
            errs.push("array.spacing_wavelengths: must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SceneError::Invalid(errs))
        }
    }

    /// Samples both point sets according to `points`.
    pub fn sample(&self) -> Result<PointSet, SceneError> {
        let spec = &self.points;
        let sensing = sample_points(&self.sensing_region, spec.p, spec.mode, spec.seed)?;
        let comm = sample_points(&self.comm_region, spec.q, spec.mode, spec.seed.wrapping_add(1))?;
        Ok(PointSet { sensing, comm })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Parses and validates a scenario document, then samples its points.
pub fn load_scenario(text: &str) -> Result<(Scene, PointSet), SceneError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scene: Scene = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SceneError::Parse { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    scene.validate()?;
    let points = scene.sample()?;
    Ok((scene, points))
}

/// Points inside `region`.
///
/// Grid mode lays an `nx × ny` lattice over the x–y extent at cell centres,
/// with `nx · ny = count` and the aspect ratio as close to the region's as the
/// divisors of `count` allow; z is the region's mid-height and `seed` is
/// ignored. Random mode draws uniformly over the whole box.
pub fn sample_points(region: &Region, count: usize, mode: SampleMode, seed: u64) -> Result<Vec<Vec3>, SceneError> {
    if count == 0 {
        return Err(SceneError::ZeroCount);
    }
    let lerp = |a: usize, t: f64| region.min[a] + t * region.extent(a);
    let out = match mode {
        SampleMode::Grid => {
            let (lx, ly) = (region.extent(0), region.extent(1));
            let target = if ly <= 0.0 {
                count as f64
            } else if lx <= 0.0 {
                1.0
            } else {
                (count as f64 * lx / ly).sqrt()
            };
            let nx = (1..=count)
                .filter(|d| count % d == 0)
                .min_by(|a, b| (*a as f64 - target).abs().total_cmp(&(*b as f64 - target).abs()))
                .unwrap_or(1);
            let ny = count / nx;
            let z = lerp(2, 0.5);
            let mut pts = Vec::with_capacity(count);
            for j in 0..ny {
                for i in 0..nx {
                    let x = lerp(0, (i as f64 + 0.5) / nx as f64);
                    let y = lerp(1, (j as f64 + 0.5) / ny as f64);
                    pts.push(Vec3::new(x, y, z));
                }
            }
            pts
        }
        SampleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let t: [f64; 3] = rng.gen();
                    Vec3::new(lerp(0, t[0]), lerp(1, t[1]), lerp(2, t[2]))
                })
                .collect()
        }
    };
    Ok(out)
}
