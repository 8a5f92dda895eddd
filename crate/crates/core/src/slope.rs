//! One-sided directional derivatives of `h` and the classification of
//! boundary directions with infinite slope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{ConvexBody, ON_BOUNDARY_TOL};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::extended::{ExtReal, Slope};
use crate::vector;

/// Difference quotients below `-NEG_INF_THRESHOLD` that are still falling
/// are classified as `-inf`.
pub const NEG_INF_THRESHOLD: f64 = 1e3;

/// Relative stabilization tolerance for a finite limit.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// The classification compares the last quotient with the one this many
/// steps earlier.
pub const COMPARISON_LAG: usize = 4;

/// Allowed increase between consecutive quotients before the sequence is
/// declared non-monotone, on top of the rounding error of the quotient.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Strictly decreasing positive step sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule(Vec<f64>);

impl Schedule {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.len() <= COMPARISON_LAG {
            return Err(Error::InvalidSchedule(format!(
                "need at least {} steps, got {}",
                COMPARISON_LAG + 1,
                steps.len()
            )));
        }
        if steps.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::InvalidSchedule(
                "steps must be finite and positive".into(),
            ));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSchedule(
                "steps must be strictly decreasing".into(),
            ));
        }
        Ok(Self(steps))
    }

    /// `eps_k = first * 2^-k` for `k = 0..count`.
    pub fn geometric(first: f64, count: usize) -> Result<Self> {
        Self::new((0..count).map(|k| first * 0.5f64.powi(k as i32)).collect())
    }

    pub fn steps(&self) -> &[f64] {
        &self.0
    }

    pub fn smallest(&self) -> f64 {
        *self.0.last().expect("schedule is never empty")
    }
}

impl Default for Schedule {
    /// `1e-2 * 2^-k`, `k = 0..=24`.
    fn default() -> Self {
        Self::geometric(1e-2, 25).expect("default schedule is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Converged,
    Diverging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeClassification {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    /// `Finite(last quotient)` unless the sequence diverges to `-inf`.
    pub slope: Slope,
    pub confidence: Confidence,
    /// `(eps, quotient)` pairs, largest step first. Steps at which the probe
    /// left the body are omitted.
    pub differences: Vec<(f64, f64)>,
    pub monotone: bool,
}

impl SlopeClassification {
    pub fn is_neg_infinite(&self) -> bool {
        self.confidence == Confidence::Diverging
    }

    pub fn is_finite(&self) -> bool {
        self.confidence == Confidence::Converged
    }
}

/// Estimates `D_v h(P) = lim_{eps -> 0+} (h(P + eps v) - h(P)) / eps` from
/// the quotients along `schedule`.
pub fn directional_slope(
    model: &CostModel,
    point: &[f64],
    direction: &[f64],
    schedule: &Schedule,
) -> Result<SlopeClassification> {
    let body = model.body();
    body.check_dim(point)?;
    body.check_dim(direction)?;
    let h_p = match model.h_unchecked(point) {
        ExtReal::Finite(x) => x,
        ExtReal::Infinite => {
            return Err(Error::NotInternal(format!(
                "point has gauge {} and lies outside the body",
                body.gauge_unchecked(point)
            )))
        }
    };
    let direction = vector::normalize(direction)
        .ok_or_else(|| Error::NotInternal("direction is the zero vector".into()))?;

    let probe = vector::axpy(point, schedule.smallest(), &direction);
    let g = body.gauge_unchecked(&probe);
    if !(g < 1.0) {
        return Err(Error::NotInternal(format!(
            "P + eps v has gauge {g} at the smallest step {:e}",
            schedule.smallest()
        )));
    }

    // Large steps may overshoot the far side of the body; by convexity only
    // a leading run of steps can do so.
    let mut differences = Vec::with_capacity(schedule.steps().len());
    let mut slack = Vec::with_capacity(schedule.steps().len());
    for &eps in schedule.steps() {
        if let ExtReal::Finite(h_q) = model.h_unchecked(&vector::axpy(point, eps, &direction)) {
            differences.push((eps, (h_q - h_p) / eps));
            slack.push(4.0 * f64::EPSILON * (model.h_sup() + h_q.abs() + h_p.abs()) / eps);
        }
    }
    if differences.len() <= COMPARISON_LAG {
        return Err(Error::NotInternal(format!(
            "only {} schedule steps stay inside the body",
            differences.len()
        )));
    }

    let monotone = differences
        .windows(2)
        .zip(slack.windows(2))
        .all(|(w, s)| w[1].1 <= w[0].1 + MONOTONE_TOL + s[0] + s[1]);

    let last = differences[differences.len() - 1].1;
    let earlier = differences[differences.len() - 1 - COMPARISON_LAG].1;
    let confidence = if !monotone {
        Confidence::Inconclusive
    } else if (last - earlier).abs() < CONVERGENCE_TOL * (1.0 + last.abs()) {
        Confidence::Converged
    } else if last < -NEG_INF_THRESHOLD && last < earlier - 1.0 {
        Confidence::Diverging
    } else {
        Confidence::Inconclusive
    };
    let slope = match confidence {
        Confidence::Diverging => Slope::NegInfinite,
        _ => Slope::Finite(last),
    };
    Ok(SlopeClassification {
        point: point.to_vec(),
        direction,
        slope,
        confidence,
        differences,
        monotone,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaVerdict {
    Theta,
    NotTheta,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCheck {
    pub verdict: ThetaVerdict,
    pub classification: SlopeClassification,
}

impl ThetaCheck {
    pub fn is_theta(&self) -> bool {
        self.verdict == ThetaVerdict::Theta
    }
}

/// Whether the boundary vector `v` has `D_{-v} h(v) = -inf`.
///
/// `v` must satisfy `|gauge(v) - 1| <= ON_BOUNDARY_TOL`; it is projected
/// radially onto the boundary before probing.
pub fn is_theta_direction(model: &CostModel, v: &[f64]) -> Result<ThetaCheck> {
    let body = model.body();
    let g = body.gauge(v)?;
    if (g - 1.0).abs() > ON_BOUNDARY_TOL {
        return Err(Error::NotOnBoundary(g));
    }
    theta_check_unchecked(model, v, g)
}

pub(crate) fn theta_check_unchecked(model: &CostModel, v: &[f64], g: f64) -> Result<ThetaCheck> {
    let point = vector::scale(v, 1.0 / g);
    let inward = vector::scale(v, -1.0 / vector::norm(v));
    let classification = directional_slope(model, &point, &inward, &Schedule::default())?;
    let verdict = match classification.confidence {
        Confidence::Diverging => ThetaVerdict::Theta,
        Confidence::Converged => ThetaVerdict::NotTheta,
        Confidence::Inconclusive => ThetaVerdict::Inconclusive,
    };
    Ok(ThetaCheck {
        verdict,
        classification,
    })
}

/// A uniformly random boundary point (radial projection of a random unit vector).
pub fn sample_boundary_point<R: Rng + ?Sized>(body: &ConvexBody, rng: &mut R) -> Vec<f64> {
    let u = vector::random_unit(rng, body.dim());
    let g = body.gauge_unchecked(&u);
    vector::scale(&u, 1.0 / g)
}

/// A random internal direction at a boundary point: the unit vector from
/// `point` towards a random point of the ball of radius `A/2`.
pub fn sample_internal_direction<R: Rng + ?Sized>(
    body: &ConvexBody,
    point: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let radius = 0.5 * body.inner_radius() * rng.gen::<f64>().powf(1.0 / body.dim() as f64);
    let target = vector::scale(&vector::random_unit(rng, body.dim()), radius);
    vector::normalize(&vector::sub(&target, point))
        .expect("boundary point is away from the inner ball")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlyRelativisticReport {
    pub highly_relativistic: bool,
    pub samples: usize,
    /// Samples classified with a finite slope.
    pub finite: Vec<SlopeClassification>,
    pub inconclusive: Vec<SlopeClassification>,
}

const SAMPLER_SEED: u64 = 0x7e7a;

/// Probes `boundary_samples` boundary points, each along one random internal
/// direction; the cost is reported highly relativistic when every probe
/// diverges to `-inf`.
pub fn is_highly_relativistic(
    model: &CostModel,
    boundary_samples: usize,
) -> Result<HighlyRelativisticReport> {
    if boundary_samples == 0 {
        return Err(Error::InvalidSchedule(
            "need at least one boundary sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLER_SEED);
    let schedule = Schedule::default();
    let body = model.body();
    let mut finite = Vec::new();
    let mut inconclusive = Vec::new();
    for _ in 0..boundary_samples {
        let point = sample_boundary_point(body, &mut rng);
        let dir = sample_internal_direction(body, &point, &mut rng);
        let c = directional_slope(model, &point, &dir, &schedule)?;
        match c.confidence {
            Confidence::Diverging => {}
            Confidence::Converged => finite.push(c),
            Confidence::Inconclusive => inconclusive.push(c),
        }
    }
    Ok(HighlyRelativisticReport {
        highly_relativistic: finite.is_empty() && inconclusive.is_empty(),
        samples: boundary_samples,
        finite,
        inconclusive,
    })
}
