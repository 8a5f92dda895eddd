use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let r = Self { lower, upper };
        r.validate()?;
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidMeasure(
                "box corners must have the same positive dimension".into(),
            ));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(a, b)| !(a < b && a.is_finite() && b.is_finite()))
        {
            return Err(Error::InvalidMeasure(
                "box needs lower < upper on every axis".into(),
            ));
        }
        Ok(())
    }

    fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Uniform,
    /// `intercept + slope . x`
    Affine {
        intercept: f64,
        slope: Vec<f64>,
    },
    /// Unnormalized isotropic Gaussian bump.
    Gaussian {
        mean: Vec<f64>,
        std: f64,
    },
}

impl Density {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::Affine { intercept, slope } => {
                intercept + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
            Density::Gaussian { mean, std } => {
                let r2: f64 = mean.iter().zip(x).map(|(m, y)| (y - m).powi(2)).sum();
                (-0.5 * r2 / (std * std)).exp()
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let got = match self {
            Density::Uniform => return Ok(()),
            Density::Affine { slope, .. } => slope.len(),
            Density::Gaussian { mean, std } => {
                if !(*std > 0.0) {
                    return Err(Error::InvalidMeasure(format!(
                        "gaussian std must be positive, got {std}"
                    )));
                }
                mean.len()
            }
        };
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
        Ok(())
    }
}

/// Cell-centred quadrature of `density` on `n^d` cells of `region`,
/// renormalised to `mass`. Cells with zero density are dropped.
pub fn discretize_density(
    density: &Density,
    region: &Region,
    n: usize,
    mass: f64,
) -> Result<DiscreteMeasure> {
    region.validate()?;
    let d = region.dim();
    density.check_dim(d)?;
    if n == 0 {
        return Err(Error::InvalidMeasure(
            "resolution must be at least 1".into(),
        ));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidMeasure(format!(
            "mass must be positive, got {mass}"
        )));
    }
    let cell = region.volume() / (n as f64).powi(d as i32);
    let cells = n
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidMeasure("too many cells".into()))?;
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for k in 0..cells {
        // last axis varies fastest
        let mut rem = k;
        let mut center = vec![0.0; d];
        for a in (0..d).rev() {
            let idx = rem % n;
            rem /= n;
            let h = (region.upper[a] - region.lower[a]) / n as f64;
            center[a] = region.lower[a] + (idx as f64 + 0.5) * h;
        }
        let rho = density.eval(&center);
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "density is {rho} at {center:?}"
            )));
        }
        if rho > 0.0 {
            positions.push(center);
            weights.push(rho * cell);
        }
    }
    let total: f64 = weights.iter().sum();
    if positions.is_empty() || total <= 0.0 {
        return Err(Error::InvalidMeasure(
            "density vanishes on every cell centre".into(),
        ));
    }
    weights.iter_mut().for_each(|w| *w *= mass / total);
    DiscreteMeasure::new(positions, weights)
}

/// `count` independent uniform points in `region`, equal weights.
pub fn sample_uniform(
    region: &Region,
    count: usize,
    mass: f64,
    seed: u64,
) -> Result<DiscreteMeasure> {
    region.validate()?;
    if count == 0 {
        return Err(Error::InvalidMeasure(
            "sample count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..count)
        .map(|_| {
            region
                .lower
                .iter()
                .zip(&region.upper)
                .map(|(&a, &b)| rng.gen_range(a..b))
                .collect()
        })
        .collect();
    DiscreteMeasure::uniform(positions, mass)
}
