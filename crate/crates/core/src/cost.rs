//! Relativistic cost functions `c_t(x, y) = h((y - x) / t)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{BodyKind, BodySpec, ConvexBody, BOUNDARY_TOL};
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    Brenier,
    QuadraticBall,
    FiniteSlopeDemo,
    Custom,
}

impl CostFamily {
    pub fn name(self) -> &'static str {
        match self {
            CostFamily::Brenier => "brenier",
            CostFamily::QuadraticBall => "quadratic_ball",
            CostFamily::FiniteSlopeDemo => "finite_slope_demo",
            CostFamily::Custom => "custom",
        }
    }
}

impl fmt::Display for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brenier" => Ok(CostFamily::Brenier),
            "quadratic_ball" => Ok(CostFamily::QuadraticBall),
            "finite_slope_demo" => Ok(CostFamily::FiniteSlopeDemo),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

pub type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    /// `1 - (1 - g^2)^q`; `q = 1/2` is the relativistic heat cost.
    Barrier {
        q: f64,
    },
    /// `|z|^2`
    Quadratic,
    /// `g^p`
    GaugePower {
        p: f64,
    },
    Closure(CostFn),
}

/// The convex function `h`: finite on the body, `+inf` outside, `h(0) = 0`.
#[derive(Clone)]
pub struct CostModel {
    body: ConvexBody,
    profile: Profile,
    family: CostFamily,
    h_sup: f64,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("family", &self.family)
            .field("body", &self.body)
            .field("h_sup", &self.h_sup)
            .finish()
    }
}

/// Default body for the finite-slope demonstration family: an ellipsoid
/// whose first semi-axis is 1 and the others 0.6.
pub fn demo_body(dim: usize) -> Result<ConvexBody> {
    if dim == 0 {
        return Err(Error::InvalidBody("dimension must be positive".into()));
    }
    ConvexBody::ellipsoid((0..dim).map(|i| if i == 0 { 1.0 } else { 0.6 }).collect())
}

impl CostModel {
    /// Built-in family on its default body.
    pub fn named(name: &str, dim: usize) -> Result<Self> {
        let family: CostFamily = name.parse()?;
        let body = match family {
            CostFamily::FiniteSlopeDemo => demo_body(dim)?,
            _ => ConvexBody::unit_ball(dim)?,
        };
        Self::with_body(family, body)
    }

    pub fn brenier(dim: usize) -> Result<Self> {
        Self::with_body(CostFamily::Brenier, ConvexBody::unit_ball(dim)?)
    }

    pub fn quadratic_ball(dim: usize) -> Result<Self> {
        Self::with_body(CostFamily::QuadraticBall, ConvexBody::unit_ball(dim)?)
    }

    pub fn finite_slope_demo(dim: usize) -> Result<Self> {
        Self::with_body(CostFamily::FiniteSlopeDemo, demo_body(dim)?)
    }

    /// Built-in family on an arbitrary body. Brenier becomes
    /// `1 - sqrt(1 - g(z)^2)`, the demo family `g(z)^2`.
    pub fn with_body(family: CostFamily, body: ConvexBody) -> Result<Self> {
        let profile = match family {
            CostFamily::Brenier => Profile::Barrier { q: 0.5 },
            CostFamily::QuadraticBall => Profile::Quadratic,
            CostFamily::FiniteSlopeDemo => Profile::GaugePower { p: 2.0 },
            CostFamily::Custom => {
                return Err(Error::InvalidCost(
                    "use CostModel::custom for custom costs".into(),
                ))
            }
        };
        Ok(Self::from_profile(body, profile, family))
    }

    /// `1 - (1 - g(z)^2)^q` with `0 < q < 1`: infinite boundary slope.
    pub fn barrier(body: ConvexBody, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidCost(format!(
                "barrier exponent must lie in (0, 1), got {q}"
            )));
        }
        Ok(Self::from_profile(
            body,
            Profile::Barrier { q },
            CostFamily::Custom,
        ))
    }

    /// `g(z)^p` with `p > 1`: finite boundary slope.
    pub fn gauge_power(body: ConvexBody, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidCost(format!(
                "power exponent must exceed 1, got {p}"
            )));
        }
        Ok(Self::from_profile(
            body,
            Profile::GaugePower { p },
            CostFamily::Custom,
        ))
    }

    /// Arbitrary `h` on the body. `h` is only evaluated at points of the
    /// body; its maximum is estimated by sampling the boundary.
    pub fn custom(body: ConvexBody, h: CostFn) -> Result<Self> {
        let zero = vec![0.0; body.dim()];
        let h0 = h(&zero);
        if h0.abs() > 1e-12 {
            return Err(Error::InvalidCost(format!("h(0) must be 0, got {h0}")));
        }
        Ok(Self::from_profile(
            body,
            Profile::Closure(h),
            CostFamily::Custom,
        ))
    }

    fn from_profile(body: ConvexBody, profile: Profile, family: CostFamily) -> Self {
        let mut model = Self {
            body,
            profile,
            family,
            h_sup: 0.0,
        };
        model.h_sup = model.estimate_sup();
        model
    }

    fn estimate_sup(&self) -> f64 {
        match self.profile {
            Profile::Barrier { .. } | Profile::GaugePower { .. } => return 1.0,
            // The outer radius of the non-custom bodies is attained.
            Profile::Quadratic if self.body.kind() != BodyKind::Custom => {
                return self.body.outer_radius().powi(2)
            }
            _ => {}
        }
        // Convex with h(0) = 0, so the maximum sits on the boundary.
        let d = self.body.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x4a5);
        let axes = (0..d).flat_map(|i| {
            [1.0, -1.0].map(|s| {
                let mut e = vec![0.0; d];
                e[i] = s;
                e
            })
        });
        let random = (0..4096)
            .map(|_| vector::random_unit(&mut rng, d))
            .collect::<Vec<_>>();
        axes.chain(random)
            .map(|u| {
                let g = self.body.gauge_unchecked(&u);
                self.eval_inside(&vector::scale(&u, 1.0 / g), 1.0)
            })
            .fold(0.0, f64::max)
    }

    fn eval_inside(&self, z: &[f64], g: f64) -> f64 {
        match &self.profile {
            Profile::Barrier { q } => 1.0 - (1.0 - g * g).max(0.0).powf(*q),
            Profile::Quadratic => z.iter().map(|x| x * x).sum(),
            Profile::GaugePower { p } => g.powf(*p),
            Profile::Closure(f) => f(z),
        }
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn family(&self) -> CostFamily {
        self.family
    }

    /// The maximum of `h` over the body.
    pub fn h_sup(&self) -> f64 {
        self.h_sup
    }

    pub fn h(&self, z: &[f64]) -> Result<ExtReal> {
        self.body.check_dim(z)?;
        Ok(self.h_unchecked(z))
    }

    pub(crate) fn h_unchecked(&self, z: &[f64]) -> ExtReal {
        let g = self.body.gauge_unchecked(z);
        if g > 1.0 + BOUNDARY_TOL {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(self.eval_inside(z, g))
        }
    }

    /// `c_t(x, y) = h((y - x) / t)`.
    pub fn cost(&self, t: f64, x: &[f64], y: &[f64]) -> Result<ExtReal> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        self.body.check_dim(x)?;
        self.body.check_dim(y)?;
        Ok(self.cost_unchecked(t, x, y))
    }

    pub(crate) fn cost_unchecked(&self, t: f64, x: &[f64], y: &[f64]) -> ExtReal {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| (b - a) / t).collect();
        self.h_unchecked(&z)
    }

    pub fn to_spec(&self) -> Option<CostSpec> {
        let body = self.body.to_spec()?;
        let parameters = match (&self.profile, self.family) {
            (Profile::Closure(_), _) => return None,
            (_, CostFamily::Custom) => match self.profile {
                Profile::Barrier { q } => CostParams::Barrier { exponent: q, body },
                Profile::GaugePower { p } => CostParams::GaugePower { exponent: p, body },
                _ => return None,
            },
            (_, CostFamily::Brenier) => CostParams::Brenier { body: Some(body) },
            (_, CostFamily::QuadraticBall) => CostParams::QuadraticBall { body: Some(body) },
            (_, CostFamily::FiniteSlopeDemo) => CostParams::FiniteSlopeDemo { body: Some(body) },
        };
        Some(CostSpec {
            dimension: self.dim(),
            parameters,
        })
    }
}

/// JSON description of a cost: `{"kind": ..., "dimension": d, "parameters": {...}}`.
///
/// Built-in kinds take an optional `body`; `barrier` and `gauge_power`
/// take an `exponent` and a required `body`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub dimension: usize,
    #[serde(flatten)]
    pub parameters: CostParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum CostParams {
    Brenier {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
    },
    QuadraticBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
    },
    FiniteSlopeDemo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
    },
    Barrier {
        exponent: f64,
        body: BodySpec,
    },
    GaugePower {
        exponent: f64,
        body: BodySpec,
    },
}

impl CostSpec {
    pub fn named(name: &str, dimension: usize) -> Result<Self> {
        let parameters = match name.parse::<CostFamily>()? {
            CostFamily::Brenier => CostParams::Brenier { body: None },
            CostFamily::QuadraticBall => CostParams::QuadraticBall { body: None },
            CostFamily::FiniteSlopeDemo => CostParams::FiniteSlopeDemo { body: None },
            CostFamily::Custom => unreachable!("custom is not a parseable name"),
        };
        Ok(Self {
            dimension,
            parameters,
        })
    }

    pub fn build(&self) -> Result<CostModel> {
        let body_of = |spec: &BodySpec| -> Result<ConvexBody> {
            if spec.dimension != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: spec.dimension,
                });
            }
            spec.build()
        };
        let builtin = |family: CostFamily, body: &Option<BodySpec>| match body {
            Some(b) => CostModel::with_body(family, body_of(b)?),
            None => CostModel::named(family.name(), self.dimension),
        };
        match &self.parameters {
            CostParams::Brenier { body } => builtin(CostFamily::Brenier, body),
            CostParams::QuadraticBall { body } => builtin(CostFamily::QuadraticBall, body),
            CostParams::FiniteSlopeDemo { body } => builtin(CostFamily::FiniteSlopeDemo, body),
            CostParams::Barrier { exponent, body } => CostModel::barrier(body_of(body)?, *exponent),
            CostParams::GaugePower { exponent, body } => {
                CostModel::gauge_power(body_of(body)?, *exponent)
            }
        }
    }
}
