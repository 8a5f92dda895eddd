//! Convex bodies described by their gauge (Minkowski functional).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector;

/// Absolute tolerance on gauge values for membership: `v` is in the body
/// when `gauge(v) <= 1 + BOUNDARY_TOL`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Tolerance used by classification entry points to decide that a point
/// lies on the boundary: `|gauge(v) - 1| <= ON_BOUNDARY_TOL`.
pub const ON_BOUNDARY_TOL: f64 = 1e-6;

pub type GaugeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Ball,
    Ellipsoid,
    Box,
    Custom,
}

#[derive(Clone)]
enum Shape {
    Ball { radius: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    Box { half_widths: Vec<f64> },
    Lp { p: f64, radius: f64 },
    Closure(GaugeFn),
}

/// A closed bounded convex set with the origin in its interior.
///
/// `inner_radius` (A) and `outer_radius` (B) satisfy
/// `A * gauge(v) <= |v| <= B * gauge(v)`, so the body contains the ball of
/// radius A and is contained in the ball of radius B.
#[derive(Clone)]
pub struct ConvexBody {
    dim: usize,
    shape: Shape,
    inner_radius: f64,
    outer_radius: f64,
}

impl fmt::Debug for ConvexBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexBody")
            .field("dim", &self.dim)
            .field("kind", &self.kind())
            .field("inner_radius", &self.inner_radius)
            .field("outer_radius", &self.outer_radius)
            .finish()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidBody("dimension must be positive".into()));
    }
    Ok(())
}

fn check_positive(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::InvalidBody(format!(
            "{name} must be finite and positive"
        )));
    }
    Ok(())
}

impl ConvexBody {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        check_positive("radius", &[radius])?;
        Ok(Self {
            dim,
            shape: Shape::Ball { radius },
            inner_radius: radius,
            outer_radius: radius,
        })
    }

    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::ball(dim, 1.0)
    }

    pub fn ellipsoid(semi_axes: Vec<f64>) -> Result<Self> {
        check_positive("semi-axes", &semi_axes)?;
        let lo = semi_axes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = semi_axes.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            dim: semi_axes.len(),
            shape: Shape::Ellipsoid { semi_axes },
            inner_radius: lo,
            outer_radius: hi,
        })
    }

    /// The box `prod [-b_i, b_i]`.
    pub fn cuboid(half_widths: Vec<f64>) -> Result<Self> {
        check_positive("half-widths", &half_widths)?;
        let lo = half_widths.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = half_widths.iter().map(|b| b * b).sum::<f64>().sqrt();
        Ok(Self {
            dim: half_widths.len(),
            shape: Shape::Box { half_widths },
            inner_radius: lo,
            outer_radius: hi,
        })
    }

    /// The l^p ball `{ |v|_p <= radius }` for `p >= 1`.
    pub fn lp_ball(dim: usize, p: f64, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        check_positive("radius", &[radius])?;
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidBody(format!(
                "l^p exponent must be >= 1, got {p}"
            )));
        }
        // |v|_2 and |v|_p differ by at most d^{|1/2 - 1/p|}.
        let spread = (dim as f64).powf((0.5 - 1.0 / p).abs());
        let (inner, outer) = if p >= 2.0 {
            (radius, radius * spread)
        } else {
            (radius / spread, radius)
        };
        Ok(Self {
            dim,
            shape: Shape::Lp { p, radius },
            inner_radius: inner,
            outer_radius: outer,
        })
    }

    /// A body given by an arbitrary gauge. The radii are checked against the
    /// gauge on a fixed set of random directions.
    pub fn custom(
        dim: usize,
        gauge: GaugeFn,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        check_dim(dim)?;
        check_positive("radii", &[inner_radius, outer_radius])?;
        if inner_radius > outer_radius {
            return Err(Error::InvalidBody(
                "inner radius exceeds outer radius".into(),
            ));
        }
        let body = Self {
            dim,
            shape: Shape::Closure(gauge),
            inner_radius,
            outer_radius,
        };
        if body.gauge_unchecked(&vec![0.0; dim]) != 0.0 {
            return Err(Error::InvalidBody("gauge of the origin must be 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            let v = vector::random_unit(&mut rng, dim);
            let scale = rng.gen_range(0.1..10.0);
            let v: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let g = body.gauge_unchecked(&v);
            let n = vector::norm(&v);
            let tol = 1e-9 * n;
            if !(g.is_finite() && g > 0.0)
                || inner_radius * g > n + tol
                || n > outer_radius * g + tol
            {
                return Err(Error::InvalidBody(format!(
                    "gauge {g} at |v| = {n} violates the declared radii [{inner_radius}, {outer_radius}]"
                )));
            }
        }
        Ok(body)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn kind(&self) -> BodyKind {
        match self.shape {
            Shape::Ball { .. } => BodyKind::Ball,
            Shape::Ellipsoid { .. } => BodyKind::Ellipsoid,
            Shape::Box { .. } => BodyKind::Box,
            Shape::Lp { .. } | Shape::Closure(_) => BodyKind::Custom,
        }
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn gauge(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.gauge_unchecked(v))
    }

    /// Gauge without the dimension check; callers guarantee `v.len() == dim`.
    pub(crate) fn gauge_unchecked(&self, v: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => vector::norm(v) / radius,
            Shape::Ellipsoid { semi_axes } => v
                .iter()
                .zip(semi_axes)
                .map(|(x, a)| (x / a) * (x / a))
                .sum::<f64>()
                .sqrt(),
            Shape::Box { half_widths } => v
                .iter()
                .zip(half_widths)
                .map(|(x, b)| x.abs() / b)
                .fold(0.0, f64::max),
            Shape::Lp { p, radius } => {
                v.iter()
                    .map(|x| x.abs().powf(*p))
                    .sum::<f64>()
                    .powf(1.0 / p)
                    / radius
            }
            Shape::Closure(f) => f(v),
        }
    }

    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        Ok(self.gauge(v)? <= 1.0 + BOUNDARY_TOL)
    }

    /// Membership in the scaled body `(1 - shrink) C`.
    pub fn contains_scaled(&self, v: &[f64], shrink: f64) -> Result<bool> {
        Ok(self.gauge(v)? <= 1.0 - shrink)
    }

    pub fn on_boundary(&self, v: &[f64]) -> Result<bool> {
        Ok((self.gauge(v)? - 1.0).abs() <= ON_BOUNDARY_TOL)
    }

    /// Radial projection `v / gauge(v)` onto the boundary. `None` for `v = 0`.
    pub fn project_to_boundary(&self, v: &[f64]) -> Result<Option<Vec<f64>>> {
        let g = self.gauge(v)?;
        if g == 0.0 {
            return Ok(None);
        }
        Ok(Some(v.iter().map(|x| x / g).collect()))
    }

    pub fn to_spec(&self) -> Option<BodySpec> {
        let params = match &self.shape {
            Shape::Ball { radius } => BodyParams::Ball { radius: *radius },
            Shape::Ellipsoid { semi_axes } => BodyParams::Ellipsoid {
                semi_axes: semi_axes.clone(),
            },
            Shape::Box { half_widths } => BodyParams::Box {
                half_widths: half_widths.clone(),
            },
            Shape::Lp { p, radius } => BodyParams::Lp {
                p: *p,
                radius: *radius,
            },
            Shape::Closure(_) => return None,
        };
        Some(BodySpec {
            dimension: self.dim,
            params,
        })
    }
}

/// JSON description of a body: `{"kind": ..., "dimension": d, "parameters": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub dimension: usize,
    #[serde(flatten)]
    pub params: BodyParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum BodyParams {
    Ball { radius: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    Box { half_widths: Vec<f64> },
    Lp { p: f64, radius: f64 },
}

impl BodySpec {
    pub fn build(&self) -> Result<ConvexBody> {
        let check_len = |n: usize| {
            if n != self.dimension {
                Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: n,
                })
            } else {
                Ok(())
            }
        };
        match &self.params {
            BodyParams::Ball { radius } => ConvexBody::ball(self.dimension, *radius),
            BodyParams::Ellipsoid { semi_axes } => {
                check_len(semi_axes.len())?;
                ConvexBody::ellipsoid(semi_axes.clone())
            }
            BodyParams::Box { half_widths } => {
                check_len(half_widths.len())?;
                ConvexBody::cuboid(half_widths.clone())
            }
            BodyParams::Lp { p, radius } => ConvexBody::lp_ball(self.dimension, *p, *radius),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn linf_oracle(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn gauge_examples() {
        let ball = ConvexBody::unit_ball(3).unwrap();
        assert_eq!(ball.gauge(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(ball.gauge(&[0.5, 0.0, 0.0]).unwrap(), 0.5);

        let square = ConvexBody::cuboid(vec![1.0, 1.0]).unwrap();
        let v = [0.5, -1.0];
        assert_eq!(square.gauge(&v).unwrap(), linf_oracle(&v));
        assert_eq!(square.gauge(&v).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ball = ConvexBody::unit_ball(2).unwrap();
        assert!(matches!(
            ball.gauge(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn rejects_degenerate_bodies() {
        assert!(ConvexBody::ball(0, 1.0).is_err());
        assert!(ConvexBody::ball(2, -1.0).is_err());
        assert!(ConvexBody::ellipsoid(vec![1.0, 0.0]).is_err());
        assert!(ConvexBody::lp_ball(2, 0.5, 1.0).is_err());
        let wrong: GaugeFn = Arc::new(|v: &[f64]| vector::norm(v));
        assert!(ConvexBody::custom(2, wrong, 2.0, 3.0).is_err());
    }

    #[test]
    fn scaled_membership() {
        let ball = ConvexBody::unit_ball(2).unwrap();
        assert!(ball.contains_scaled(&[0.5, 0.0], 0.05).unwrap());
        assert!(!ball.contains_scaled(&[0.99, 0.0], 0.05).unwrap());
        assert!(ball.contains(&[1.0 + 1e-10, 0.0]).unwrap());
        assert!(!ball.contains(&[1.0 + 1e-8, 0.0]).unwrap());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"kind":"ellipsoid","dimension":2,"parameters":{"semi_axes":[1.0,0.5]}}"#;
        let spec: BodySpec = serde_json::from_str(json).unwrap();
        let body = spec.build().unwrap();
        assert_eq!(body.kind(), BodyKind::Ellipsoid);
        assert_eq!(body.inner_radius(), 0.5);
        assert_eq!(body.to_spec().unwrap(), spec);
        let bad = r#"{"kind":"box","dimension":3,"parameters":{"half_widths":[1.0,0.5]}}"#;
        assert!(serde_json::from_str::<BodySpec>(bad)
            .unwrap()
            .build()
            .is_err());
    }

    fn bodies() -> Vec<ConvexBody> {
        vec![
            ConvexBody::ball(2, 1.5).unwrap(),
            ConvexBody::ellipsoid(vec![1.0, 0.4, 2.0]).unwrap(),
            ConvexBody::cuboid(vec![1.0, 0.3]).unwrap(),
            ConvexBody::lp_ball(3, 3.0, 1.0).unwrap(),
            ConvexBody::lp_ball(2, 1.0, 0.8).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn gauge_is_a_sublinear_functional(
            seed in any::<u64>(),
            lambda in 0.0f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for body in bodies() {
                let d = body.dim();
                let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let (gu, gv) = (body.gauge(&u).unwrap(), body.gauge(&v).unwrap());
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                prop_assert!(body.gauge(&sum).unwrap() <= (gu + gv) * (1.0 + 1e-9));
                for k in [0.0, 1.0, 2.0] {
                    let scaled: Vec<f64> = u.iter().map(|x| k * x).collect();
                    let g = body.gauge(&scaled).unwrap();
                    prop_assert!((g - k * gu).abs() <= 1e-12 * (k * gu).max(1e-300));
                }
                let scaled: Vec<f64> = u.iter().map(|x| lambda * x).collect();
                prop_assert!((body.gauge(&scaled).unwrap() - lambda * gu).abs() <= 1e-9 * (1.0 + lambda * gu));
                let n = vector::norm(&u);
                if n > 0.0 {
                    prop_assert!(body.inner_radius() * gu <= n * (1.0 + 1e-12));
                    prop_assert!(n <= body.outer_radius() * gu * (1.0 + 1e-12));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        /// Points of a thin outer shell of the body, moved by a short
        /// displacement and rescaled by a time close to 1, stay inside.
        #[test]
        fn shell_moves_stay_inside(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let all = bodies();
            let body = &all[rng.gen_range(0..all.len())];
            let (d, a) = (body.dim(), body.inner_radius());
            let shell = rng.gen_range(0.05..0.3);
            let r_plus = rng.gen_range(1e-6..1.0) * shell * a / (10.0 * (d as f64).sqrt());
            let eta = rng.gen_range(1e-9..=1.0) * 2.0 * r_plus / a;
            let t = 1.0 + rng.gen_range(-0.5..0.5) * eta * (1.0 - 1e-12);
            let dir = vector::random_unit(&mut rng, d);
            let g = rng.gen_range(1.0 - shell..=1.0);
            let v = vector::scale(&dir, g / body.gauge(&dir).unwrap());
            let w = vector::axpy(&v, r_plus * (d as f64).sqrt() * rng.gen::<f64>(), &vector::random_unit(&mut rng, d));
            let moved: Vec<f64> = v.iter().zip(&w).map(|(x, y)| (x - eta * y) / t).collect();
            prop_assert!(body.gauge(&moved).unwrap() <= 1.0);
        }
    }
}
