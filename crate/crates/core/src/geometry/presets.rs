use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_perforated_mesh, BlockShape, Circle, CoarsePartition, FineMesh, PerforationSet};
use crate::{Error, Result};

/// Seeded perforation layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// One small circle near the incenter of every triangular coarse block.
    SmallInclusions,
    /// Rectangular blocks holding either one large circle or a few small ones.
    MultiSize,
}

impl Preset {
    pub fn block_shape(self) -> BlockShape {
        match self {
            Preset::SmallInclusions => BlockShape::Triangular,
            Preset::MultiSize => BlockShape::Rectangular,
        }
    }

    /// Circles for a coarse grid of size `coarse_h` refined `refinement` times.
    ///
    /// Every circle keeps a distance of at least one fine cell from the coarse
    /// block edges, so blocks stay connected after perforation.
    pub fn circles(self, coarse_h: f64, refinement: usize, seed: u64) -> Result<PerforationSet> {
        let n = (1.0 / coarse_h).round() as usize;
        if n == 0 || refinement < 2 {
            return Err(Error::InvalidInput("preset needs a valid coarse grid".into()));
        }
        let h = coarse_h / refinement as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut circles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (x0, y0) = (i as f64 * coarse_h, j as f64 * coarse_h);
                match self {
                    Preset::SmallInclusions => {
                        let rho = coarse_h * (2.0 - 2f64.sqrt()) / 2.0;
                        let incenters = [[x0 + coarse_h - rho, y0 + rho], [x0 + rho, y0 + coarse_h - rho]];
                        for c in incenters {
                            let r = rho * rng.random_range(0.45..0.55);
                            let slack = (rho - r - h).max(0.0);
                            let angle = rng.random_range(0.0..std::f64::consts::TAU);
                            let dist = slack * rng.random::<f64>().sqrt();
                            circles.push(Circle::new([c[0] + dist * angle.cos(), c[1] + dist * angle.sin()], r));
                        }
                    }
                    Preset::MultiSize => {
                        if rng.random_bool(0.4) {
                            let r = (0.5 * coarse_h - h) * rng.random_range(0.7..0.9);
                            let lo = h + r;
                            let hi = coarse_h - h - r;
                            let cx = x0 + rng.random_range(lo..hi);
                            let cy = y0 + rng.random_range(lo..hi);
                            circles.push(Circle::new([cx, cy], r));
                        } else {
                            let count = rng.random_range(0..=3usize);
                            let mut placed: Vec<Circle> = Vec::new();
                            for _ in 0..count {
                                let r = h * rng.random_range(1.05..1.2);
                                for _attempt in 0..50 {
                                    let lo = h + r;
                                    let hi = coarse_h - h - r;
                                    let c = Circle::new(
                                        [x0 + rng.random_range(lo..hi), y0 + rng.random_range(lo..hi)],
                                        r,
                                    );
                                    let clear = placed
                                        .iter()
                                        .all(|p| p.distance_to_center(c.center) - p.radius - c.radius >= 2.0 * h);
                                    if clear {
                                        placed.push(c);
                                        break;
                                    }
                                }
                            }
                            circles.extend(placed);
                        }
                    }
                }
            }
        }
        PerforationSet::new(circles)
    }

    /// Generates the perforations and the fitted mesh in one step.
    pub fn generate(self, coarse_h: f64, refinement: usize, seed: u64) -> Result<(FineMesh, CoarsePartition)> {
        let perforations = self.circles(coarse_h, refinement, seed)?;
        generate_perforated_mesh(&perforations, coarse_h, refinement, self.block_shape())
    }
}
