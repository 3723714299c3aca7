//! Deterministic point-cloud generators for experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::PointCloud;

/// Unit square with non-overlapping circular holes.
#[derive(Debug, Clone, PartialEq)]
pub struct HoledSquare {
    pub holes: usize,
    pub radius: (f64, f64),
    pub seed: u64,
}

impl Default for HoledSquare {
    fn default() -> Self {
        Self {
            holes: 6,
            radius: (0.04, 0.12),
            seed: 2015,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hole {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        dx * dx + dy * dy < self.radius * self.radius
    }
}

const HOLE_ATTEMPTS: usize = 10_000;

impl HoledSquare {
    /// Places the holes fully inside the square without overlap.
    pub fn place_holes(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Hole>> {
        let (rmin, rmax) = self.radius;
        if !(rmin > 0.0 && rmin <= rmax && rmax < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "hole radius range ({rmin}, {rmax}) must satisfy 0 < min ≤ max < 0.5"
            )));
        }
        let mut holes: Vec<Hole> = Vec::with_capacity(self.holes);
        let mut attempts = 0;
        while holes.len() < self.holes {
            attempts += 1;
            if attempts > HOLE_ATTEMPTS {
                return Err(Error::InfeasibleHoles(HOLE_ATTEMPTS));
            }
            let radius = rng.gen_range(rmin..=rmax);
            let center = [
                rng.gen_range(radius..1.0 - radius),
                rng.gen_range(radius..1.0 - radius),
            ];
            let clear = holes.iter().all(|h| {
                let d =
                    ((h.center[0] - center[0]).powi(2) + (h.center[1] - center[1]).powi(2)).sqrt();
                d > h.radius + radius
            });
            if clear {
                holes.push(Hole { center, radius });
            }
        }
        Ok(holes)
    }
}

/// Rejection-samples exactly `n_target` uniform points in the holed square.
pub fn gen_holed_mesh(n_target: usize, domain: &HoledSquare) -> Result<PointCloud> {
    if n_target == 0 {
        return Err(Error::EmptyPointSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(domain.seed);
    let holes = domain.place_holes(&mut rng)?;
    let mut coords = Vec::with_capacity(2 * n_target);
    while coords.len() < 2 * n_target {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        if holes.iter().all(|h| !h.contains(x, y)) {
            coords.extend([x, y]);
        }
    }
    PointCloud::new(2, coords)
}

/// Uniform points in a cylinder of radius 1/2 and height 1 along z, ordered
/// by height so that contiguous index ranges are horizontal slabs.
pub fn gen_cylinder(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyPointSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    while pts.len() < n {
        let x = rng.gen_range(-0.5..0.5);
        let y = rng.gen_range(-0.5..0.5);
        if x * x + y * y < 0.25 {
            pts.push([x, y, rng.gen()]);
        }
    }
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    PointCloud::from_points(&pts)
}

/// Uniform points in the unit cube `[0,1]^dim`.
pub fn gen_uniform(n: usize, dim: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(dim, (0..n * dim).map(|_| rng.gen()).collect())
}
