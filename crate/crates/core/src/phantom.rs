//! Synthetic organ/lesion phantoms.
//!
//! A phantom is an ellipsoidal organ (label 1) containing spherical lesions
//! (label 2) on a background (label 0). Intensities are the per-class mean
//! plus i.i.d. Gaussian noise. Lesion centers are integer voxel coordinates
//! and radii are integer voxel counts, so the lesion geometry can be checked
//! exactly.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Error, Result};
use crate::rng::{self, SeededRng};
use crate::volume::{Volume, VolumeShape};

const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PhantomSpec {
    /// `[D, H, W]`.
    pub shape: [usize; 3],
    /// Organ ellipsoid center `[z, y, x]` in voxels.
    pub organ_center: [f64; 3],
    /// Organ ellipsoid semi-axes `[rz, ry, rx]` in voxels.
    pub organ_radii: [f64; 3],
    pub lesion_count: usize,
    /// Inclusive lesion radius range in voxels.
    pub lesion_radius: [u32; 2],
    /// Mean intensity for background, organ and lesion.
    pub means: [f32; 3],
    pub noise_std: f32,
    pub spacing: [f32; 3],
    pub seed: u64,
}

impl Default for PhantomSpec {
    /// Desk-scale 16×64×64 phantom.
    fn default() -> Self {
        Self {
            shape: [16, 64, 64],
            organ_center: [7.5, 31.5, 31.5],
            organ_radii: [6.5, 20.0, 24.0],
            lesion_count: 3,
            lesion_radius: [3, 5],
            means: [-60.0, 80.0, 20.0],
            noise_std: 15.0,
            spacing: [2.5, 0.8, 0.8],
            seed: 0,
        }
    }
}

/// A placed lesion sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lesion {
    pub center: [i64; 3],
    pub radius: u32,
}

impl Lesion {
    pub fn contains(&self, z: i64, y: i64, x: i64) -> bool {
        let (dz, dy, dx) = (z - self.center[0], y - self.center[1], x - self.center[2]);
        let r = i64::from(self.radius);
        dz * dz + dy * dy + dx * dx <= r * r
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|&d| d < 8) {
            bail!(Config, "phantom shape components must be >= 8, got {:?}", self.shape);
        }
        if self.organ_radii.iter().any(|r| !(*r > 0.0)) {
            bail!(Config, "organ radii must be positive, got {:?}", self.organ_radii);
        }
        let [rmin, rmax] = self.lesion_radius;
        if rmin == 0 || rmin > rmax {
            bail!(Config, "lesion radius range must satisfy 1 <= min <= max, got {:?}", self.lesion_radius);
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            bail!(Config, "noise standard deviation must be finite and >= 0");
        }
        if self.spacing.iter().any(|s| !(*s > 0.0)) {
            bail!(Config, "spacing components must be positive");
        }
        Ok(())
    }

    pub fn volume_shape(&self) -> VolumeShape {
        VolumeShape::new(self.shape[0], self.shape[1], self.shape[2])
    }

    fn in_organ(&self, z: f64, y: f64, x: f64) -> bool {
        let c = self.organ_center;
        let r = self.organ_radii;
        let q = sq((z - c[0]) / r[0]) + sq((y - c[1]) / r[1]) + sq((x - c[2]) / r[2]);
        q <= 1.0
    }

    /// A geometric variation of `self`: center shifted by up to 10% of each
    /// radius, radii scaled by `[0.85, 1.15]`, lesion count drawn from
    /// `1..=lesion_count` and a fresh noise seed. Used to build cohorts of
    /// distinct phantoms from one template.
    pub fn jittered(&self, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut out = self.clone();
        for axis in 0..3 {
            let r = self.organ_radii[axis];
            out.organ_center[axis] += rng.random_range(-0.1..=0.1) * r;
            out.organ_radii[axis] = r * rng.random_range(0.85..=1.15);
        }
        if self.lesion_count > 0 {
            out.lesion_count = rng.random_range(1..=self.lesion_count);
        }
        out.seed = rng.random();
        out
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

/// Lesions for `spec`, drawn from its seed. Each center is an integer voxel
/// such that the whole sphere lies inside the organ ellipsoid.
pub fn place_lesions(spec: &PhantomSpec, rng: &mut SeededRng) -> Result<Vec<Lesion>> {
    let mut lesions = Vec::with_capacity(spec.lesion_count);
    let [rmin, rmax] = spec.lesion_radius;
    for _ in 0..spec.lesion_count {
        let radius = rng.random_range(rmin..=rmax);
        let r = f64::from(radius);
        let shrunk = spec.organ_radii.map(|a| a - r);
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            if shrunk.iter().any(|a| *a <= 0.0) {
                break;
            }
            let mut center = [0i64; 3];
            for axis in 0..3 {
                let lo = libm::ceil(spec.organ_center[axis] - shrunk[axis]);
                let hi = libm::floor(spec.organ_center[axis] + shrunk[axis]);
                if lo > hi {
                    break;
                }
                center[axis] = rng.random_range(lo as i64..=hi as i64);
            }
            let c = spec.organ_center;
            let q = sq((center[0] as f64 - c[0]) / shrunk[0])
                + sq((center[1] as f64 - c[1]) / shrunk[1])
                + sq((center[2] as f64 - c[2]) / shrunk[2]);
            if q < 1.0 {
                placed = Some(Lesion { center, radius });
                break;
            }
        }
        match placed {
            Some(lesion) => lesions.push(lesion),
            None => return Err(Error::Placement { attempts: PLACEMENT_ATTEMPTS }),
        }
    }
    Ok(lesions)
}

/// Renders the phantom described by `spec`. Deterministic for a fixed seed.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    generate_phantom_with_lesions(spec).map(|(v, _)| v)
}

/// As [`generate_phantom`], also returning the placed lesions.
pub fn generate_phantom_with_lesions(spec: &PhantomSpec) -> Result<(Volume, Vec<Lesion>)> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let lesions = place_lesions(spec, &mut rng)?;
    let shape = spec.volume_shape();
    let mut labels = alloc::vec![0u8; shape.voxels()];
    for z in 0..shape.depth {
        for y in 0..shape.height {
            for x in 0..shape.width {
                let (zi, yi, xi) = (z as i64, y as i64, x as i64);
                let label = if lesions.iter().any(|l| l.contains(zi, yi, xi)) {
                    2
                } else if spec.in_organ(z as f64, y as f64, x as f64) {
                    1
                } else {
                    0
                };
                labels[shape.index(z, y, x)] = label;
            }
        }
    }
    let intensities = if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0f32, spec.noise_std)
            .map_err(|_| Error::Config(alloc::string::String::from("invalid noise distribution")))?;
        labels.iter().map(|&l| spec.means[l as usize] + noise.sample(&mut rng)).collect()
    } else {
        labels.iter().map(|&l| spec.means[l as usize]).collect()
    };
    let volume = Volume::new(shape, intensities, Some(labels), spec.spacing)?;
    Ok((volume, lesions))
}
