//! Exact discrete optimal transport under relativistic costs.
//!
//! Pairs with infinite cost are absent from the flow network. A time `t`
//! is feasible when the remaining bipartite graph carries all of the mass;
//! the critical time is the bottleneck value `min over couplings of the
//! largest displacement gauge`, found by bisection over the finite set of
//! pairwise gauges.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::BOUNDARY_TOL;
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::flow;
use crate::measure::DiscreteMeasure;
use crate::plan::TransportPlan;
use crate::slope::{theta_check_unchecked, ThetaVerdict};
use crate::vector;

/// Relative tolerance on the mass balance of an instance and on the
/// saturation test of the feasibility max-flow.
pub const MASS_TOL: f64 = 1e-9;

/// Default width of the boundary band used by [`theta_mass`].
pub const DEFAULT_BAND: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct OtInstance {
    mu: Arc<DiscreteMeasure>,
    nu: Arc<DiscreteMeasure>,
    cost: CostModel,
    /// `gauge(y_j - x_i)`, row-major.
    gauges: Vec<f64>,
}

impl OtInstance {
    pub fn new(
        mu: Arc<DiscreteMeasure>,
        nu: Arc<DiscreteMeasure>,
        cost: CostModel,
    ) -> Result<Self> {
        let d = cost.dim();
        for m in [&mu, &nu] {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.dim(),
                });
            }
        }
        let (a, b) = (mu.total_mass(), nu.total_mass());
        if (a - b).abs() > MASS_TOL * a.max(b) {
            return Err(Error::InvalidInstance(format!(
                "total masses differ: {a} vs {b}"
            )));
        }
        let body = cost.body();
        let gauges = mu
            .positions()
            .iter()
            .flat_map(|x| nu.positions().iter().map(move |y| (x, y)))
            .map(|(x, y)| body.gauge_unchecked(&vector::sub(y, x)))
            .collect();
        Ok(Self {
            mu,
            nu,
            cost,
            gauges,
        })
    }

    pub fn mu(&self) -> &Arc<DiscreteMeasure> {
        &self.mu
    }

    pub fn nu(&self) -> &Arc<DiscreteMeasure> {
        &self.nu
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    /// `gauge(y_j - x_i)`.
    pub fn displacement_gauge(&self, i: usize, j: usize) -> f64 {
        self.gauges[i * self.nu.len() + j]
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.mu.len()).flat_map(move |i| (0..self.nu.len()).map(move |j| (i, j)))
    }

    fn scaled_gauge(&self, t: f64, i: usize, j: usize) -> f64 {
        let z: Vec<f64> = self
            .mu
            .position(i)
            .iter()
            .zip(self.nu.position(j))
            .map(|(a, b)| (b - a) / t)
            .collect();
        self.cost.body().gauge_unchecked(&z)
    }

    fn saturates(&self, edges: &[(usize, usize)]) -> bool {
        let flow = flow::max_flow(self.mu.weights(), self.nu.weights(), edges);
        let total = self.mu.total_mass();
        flow >= total * (1.0 - MASS_TOL)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(())
}

/// Whether some coupling uses only pairs with `gauge((y - x) / t) <= 1 + tol`.
pub fn feasible(instance: &OtInstance, t: f64) -> Result<bool> {
    check_time(t)?;
    let edges: Vec<_> = instance
        .pairs()
        .filter(|&(i, j)| instance.scaled_gauge(t, i, j) <= 1.0 + BOUNDARY_TOL)
        .collect();
    Ok(instance.saturates(&edges))
}

/// The least `t` at which a finite-cost coupling exists: the smallest
/// pairwise gauge `g(y_j - x_i)` whose sublevel edge set carries all mass.
pub fn critical_time(instance: &OtInstance) -> f64 {
    let mut candidates = instance.gauges.clone();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let feasible_at = |level: f64| {
        let edges: Vec<_> = instance
            .pairs()
            .filter(|&(i, j)| instance.displacement_gauge(i, j) <= level)
            .collect();
        instance.saturates(&edges)
    };
    // The full edge set always carries everything; find the first feasible level.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible_at(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Dual potentials: `c_t(x_i, y_j) - u_i - v_j >= 0` on finite-cost pairs,
/// with equality on the support of the plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub t: f64,
    pub value: ExtReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<TransportPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potentials: Option<Potentials>,
}

impl SolveResult {
    fn infinite(t: f64) -> Self {
        Self {
            t,
            value: ExtReal::Infinite,
            plan: None,
            potentials: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// An optimal plan at time `t` with dual potentials, or `Infinite` when no
/// finite-cost coupling exists.
pub fn solve(instance: &OtInstance, t: f64) -> Result<SolveResult> {
    check_time(t)?;
    let mut edges = Vec::new();
    for (i, j) in instance.pairs() {
        if let ExtReal::Finite(c) =
            instance
                .cost
                .cost_unchecked(t, instance.mu.position(i), instance.nu.position(j))
        {
            edges.push((i, j, c));
        }
    }
    let plain: Vec<_> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
    if !instance.saturates(&plain) {
        return Ok(SolveResult::infinite(t));
    }
    let sol = flow::min_cost_transport(instance.mu.weights(), instance.nu.weights(), &edges);
    if sol.unrouted > MASS_TOL * instance.mu.total_mass() {
        return Ok(SolveResult::infinite(t));
    }
    let entries: Vec<_> = edges
        .iter()
        .zip(&sol.flows)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&(i, j, _), &f)| (i, j, f))
        .collect();
    let value = edges.iter().zip(&sol.flows).map(|(e, f)| f * e.2).sum();
    let plan = TransportPlan::new(instance.mu.clone(), instance.nu.clone(), entries, false)?;
    Ok(SolveResult {
        t,
        value: ExtReal::Finite(value),
        plan: Some(plan),
        potentials: Some(Potentials { u: sol.u, v: sol.v }),
    })
}

/// Checks a finite result against the instance: marginals, the reported
/// value, and complementary slackness with tolerance `slack_tol`. Returns
/// the violated conditions.
pub fn verify_optimality(
    instance: &OtInstance,
    result: &SolveResult,
    slack_tol: f64,
) -> Vec<String> {
    let mut bad = Vec::new();
    let (Some(plan), Some(pot), ExtReal::Finite(value)) =
        (&result.plan, &result.potentials, result.value)
    else {
        bad.push("result is not finite".into());
        return bad;
    };
    let t = result.t;
    let (rows, cols) = plan.marginals();
    for (r, w) in rows
        .iter()
        .zip(instance.mu.weights())
        .chain(cols.iter().zip(instance.nu.weights()))
    {
        if (r - w).abs() > MASS_TOL * w {
            bad.push(format!("marginal {r} differs from weight {w}"));
        }
    }
    let mut recomputed = 0.0;
    for e in plan.entries() {
        match instance
            .cost
            .cost_unchecked(t, instance.mu.position(e.i), instance.nu.position(e.j))
        {
            ExtReal::Finite(c) => {
                recomputed += e.mass * c;
                let slack = c - pot.u[e.i] - pot.v[e.j];
                if slack.abs() > slack_tol {
                    bad.push(format!("entry ({}, {}) has reduced cost {slack}", e.i, e.j));
                }
            }
            ExtReal::Infinite => bad.push(format!("entry ({}, {}) has infinite cost", e.i, e.j)),
        }
    }
    if (recomputed - value).abs() > MASS_TOL * recomputed.abs().max(1e-300)
        && (recomputed - value).abs() > 1e-15
    {
        bad.push(format!(
            "value {value} differs from recomputed {recomputed}"
        ));
    }
    for (i, j) in instance.pairs() {
        if let ExtReal::Finite(c) =
            instance
                .cost
                .cost_unchecked(t, instance.mu.position(i), instance.nu.position(j))
        {
            let slack = c - pot.u[i] - pot.v[j];
            if slack < -slack_tol {
                bad.push(format!("pair ({i}, {j}) has negative reduced cost {slack}"));
            }
        }
    }
    bad
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(t_min: f64, t_max: f64, steps: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 steps, got {steps}"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            steps,
        })
    }

    /// Evenly spaced points including both ends.
    pub fn points(&self) -> Vec<f64> {
        let h = (self.t_max - self.t_min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.t_max
                } else {
                    self.t_min + k as f64 * h
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub t: f64,
    pub value: ExtReal,
    pub feasible: bool,
}

/// Sampled `t -> C(t)` with the exact critical time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub critical_time: f64,
    pub samples: Vec<CurveSample>,
    pub grid: GridSpec,
}

impl CostCurve {
    pub fn feasible_samples(&self) -> impl Iterator<Item = &CurveSample> {
        self.samples.iter().filter(|s| s.feasible)
    }

    /// Violations of: infinite below `T`, finite from `T` on, values
    /// non-increasing over feasible samples within `tol`.
    pub fn invariant_violations(&self, tol: f64) -> Vec<String> {
        let mut bad = Vec::new();
        for s in &self.samples {
            let below = s.t < self.critical_time;
            if below == s.value.is_finite() || s.feasible != s.value.is_finite() {
                bad.push(format!(
                    "t = {}: value {} inconsistent with T = {}",
                    s.t, s.value, self.critical_time
                ));
            }
        }
        let values: Vec<(f64, f64)> = self
            .feasible_samples()
            .filter_map(|s| s.value.finite().map(|v| (s.t, v)))
            .collect();
        for w in values.windows(2) {
            if w[1].1 > w[0].1 + tol {
                bad.push(format!(
                    "C({}) = {} exceeds C({}) = {}",
                    w[1].0, w[1].1, w[0].0, w[0].1
                ));
            }
        }
        bad
    }

    /// `t,value,feasible` rows with `inf` for infinite values.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "value", "feasible"])?;
        for s in &self.samples {
            wtr.write_record([s.t.to_string(), s.value.to_string(), s.feasible.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Solves on the grid plus the critical time (when positive). Grid points
/// are evaluated in parallel; samples come back in increasing `t`.
pub fn cost_curve(
    instance: &OtInstance,
    t_min: f64,
    t_max: f64,
    steps: usize,
) -> Result<CostCurve> {
    let grid = GridSpec::new(t_min, t_max, steps)?;
    let critical = critical_time(instance);
    let mut ts = grid.points();
    if critical > 0.0 {
        ts.push(critical);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let samples = ts
        .into_par_iter()
        .map(|t| {
            if t < critical {
                return Ok(CurveSample {
                    t,
                    value: ExtReal::Infinite,
                    feasible: false,
                });
            }
            let r = solve(instance, t)?;
            Ok(CurveSample {
                t,
                value: r.value,
                feasible: r.value.is_finite(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostCurve {
        critical_time: critical,
        samples,
        grid,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
    /// `gauge((y - x) / t)`
    pub gauge: f64,
    pub verdict: ThetaVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaMass {
    pub t: f64,
    pub band: f64,
    /// Plan mass on pairs with `gauge((y - x) / t) >= 1 - band`.
    pub boundary_mass: f64,
    /// Part of the boundary mass whose radial projection is a `-inf` slope direction.
    pub theta_mass: f64,
    /// Part of the boundary mass whose classification was inconclusive.
    pub inconclusive_mass: f64,
    pub breakdown: Vec<ThetaEntry>,
}

/// Plan mass near the boundary of the body, and the part of it moving along
/// directions with infinite slope.
pub fn theta_mass(result: &SolveResult, cost: &CostModel, band: f64) -> Result<ThetaMass> {
    let plan = result.plan.as_ref().ok_or(Error::Infeasible(result.t))?;
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::InvalidGrid(format!(
            "band must lie in (0, 1), got {band}"
        )));
    }
    let t = result.t;
    let (src, tgt) = (plan.source(), plan.target());
    let mut out = ThetaMass {
        t,
        band,
        boundary_mass: 0.0,
        theta_mass: 0.0,
        inconclusive_mass: 0.0,
        breakdown: Vec::new(),
    };
    for e in plan.entries() {
        let z: Vec<f64> = src
            .position(e.i)
            .iter()
            .zip(tgt.position(e.j))
            .map(|(a, b)| (b - a) / t)
            .collect();
        let g = cost.body().gauge(&z)?;
        if g < 1.0 - band {
            continue;
        }
        let verdict = theta_check_unchecked(cost, &z, g)?.verdict;
        out.boundary_mass += e.mass;
        match verdict {
            ThetaVerdict::Theta => out.theta_mass += e.mass,
            ThetaVerdict::Inconclusive => out.inconclusive_mass += e.mass,
            ThetaVerdict::NotTheta => {}
        }
        out.breakdown.push(ThetaEntry {
            i: e.i,
            j: e.j,
            mass: e.mass,
            gauge: g,
            verdict,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], weights: &[f64]) -> Arc<DiscreteMeasure> {
        Arc::new(
            DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec())
                .unwrap(),
        )
    }

    fn bottleneck_1d(cost: CostModel) -> OtInstance {
        OtInstance::new(
            line(&[0.0, 1.0], &[0.5, 0.5]),
            line(&[1.0, 3.0], &[0.5, 0.5]),
            cost,
        )
        .unwrap()
    }

    fn single_pair(cost: CostModel, y: Vec<f64>) -> OtInstance {
        let d = y.len();
        OtInstance::new(
            Arc::new(DiscreteMeasure::dirac(vec![0.0; d], 1.0).unwrap()),
            Arc::new(DiscreteMeasure::dirac(y, 1.0).unwrap()),
            cost,
        )
        .unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let inst = single_pair(CostModel::brenier(2).unwrap(), vec![2.0, 0.0]);
        assert!(!feasible(&inst, 1.0).unwrap());
        assert!(feasible(&inst, 2.0).unwrap());
        let inst = bottleneck_1d(CostModel::brenier(1).unwrap());
        // Both matchings contain a step of length >= 2.
        assert!(!feasible(&inst, 1.5).unwrap());
        assert!(matches!(
            feasible(&inst, 0.0),
            Err(Error::NonPositiveTime(_))
        ));
    }

    #[test]
    fn critical_time_examples() {
        let inst = single_pair(CostModel::brenier(2).unwrap(), vec![2.0, 0.0]);
        assert_eq!(critical_time(&inst), 2.0);
        // matchings {0->1, 1->3}: max 2 ; {0->3, 1->1}: max 3
        assert_eq!(
            critical_time(&bottleneck_1d(CostModel::brenier(1).unwrap())),
            2.0
        );
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let same = OtInstance::new(mu.clone(), mu, CostModel::brenier(1).unwrap()).unwrap();
        assert_eq!(critical_time(&same), 0.0);
    }

    #[test]
    fn solve_forced_matching() {
        let inst = bottleneck_1d(CostModel::brenier(1).unwrap());
        let r = solve(&inst, 2.0).unwrap();
        let h = |z: f64| 1.0 - (1.0 - z * z).sqrt();
        let expected = 0.5 * h(0.5) + 0.5 * h(1.0);
        assert!((r.value.finite().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5670).abs() < 1e-4);
        assert!(verify_optimality(&inst, &r, 1e-7).is_empty());
        let r = solve(&inst, 1.5).unwrap();
        assert_eq!(r.value, ExtReal::Infinite);
        assert!(r.plan.is_none() && r.potentials.is_none());
    }

    #[test]
    fn solve_tends_to_zero() {
        let inst = bottleneck_1d(CostModel::brenier(1).unwrap());
        let mut prev = f64::INFINITY;
        for t in [4.0, 16.0, 64.0, 256.0, 1024.0] {
            let v = solve(&inst, t).unwrap().value.finite().unwrap();
            // plan mass times the largest pairwise cost
            let bound = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| {
                    inst.cost
                        .cost_unchecked(t, inst.mu.position(i), inst.nu.position(j))
                        .finite()
                        .unwrap()
                })
                .fold(0.0, f64::max);
            assert!(v <= bound + 1e-15 && v <= prev);
            prev = v;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn curve_single_pair_closed_form() {
        let inst = single_pair(CostModel::brenier(2).unwrap(), vec![1.0, 0.0]);
        let curve = cost_curve(&inst, 0.5, 4.0, 15).unwrap();
        assert_eq!(curve.critical_time, 1.0);
        for s in &curve.samples {
            if s.t < 1.0 {
                assert_eq!(s.value, ExtReal::Infinite);
            } else {
                let exact = 1.0 - (1.0 - 1.0 / (s.t * s.t)).sqrt();
                assert!((s.value.finite().unwrap() - exact).abs() < 1e-12);
            }
        }
        assert!(curve.invariant_violations(1e-9).is_empty());
        let t_next = 1.0 + 1e-6 * 3.0;
        assert!(solve(&inst, t_next).unwrap().is_finite());
    }

    #[test]
    fn curve_identical_measures_is_zero() {
        let mu = line(&[0.0, 0.3, 2.0], &[0.2, 0.3, 0.5]);
        let inst = OtInstance::new(mu.clone(), mu, CostModel::brenier(1).unwrap()).unwrap();
        let curve = cost_curve(&inst, 0.01, 3.0, 10).unwrap();
        assert_eq!(curve.samples.len(), 10);
        assert!(curve
            .samples
            .iter()
            .all(|s| s.value == ExtReal::Finite(0.0)));
    }

    #[test]
    fn curve_csv_renders_infinity() {
        let inst = single_pair(CostModel::brenier(1).unwrap(), vec![1.0]);
        let curve = cost_curve(&inst, 0.5, 2.0, 2).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,value,feasible\n0.5,inf,false\n1,1,true\n2,0.1339745962155614,true\n"
        );
    }

    #[test]
    fn grid_errors() {
        let inst = single_pair(CostModel::brenier(1).unwrap(), vec![1.0]);
        assert!(cost_curve(&inst, 0.0, 1.0, 5).is_err());
        assert!(cost_curve(&inst, 2.0, 1.0, 5).is_err());
        assert!(cost_curve(&inst, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn theta_mass_examples() {
        let e1 = vec![1.0, 0.0];
        let brenier = CostModel::brenier(2).unwrap();
        let inst = single_pair(brenier.clone(), e1.clone());
        let r = solve(&inst, 1.0).unwrap();
        let tm = theta_mass(&r, &brenier, DEFAULT_BAND).unwrap();
        assert_eq!((tm.boundary_mass, tm.theta_mass), (1.0, 1.0));

        let quad = CostModel::quadratic_ball(2).unwrap();
        let inst = single_pair(quad.clone(), e1);
        let r = solve(&inst, 1.0).unwrap();
        let tm = theta_mass(&r, &quad, DEFAULT_BAND).unwrap();
        assert_eq!((tm.boundary_mass, tm.theta_mass), (1.0, 0.0));

        // all displacements deep inside
        let r = solve(&inst, 10.0).unwrap();
        let tm = theta_mass(&r, &quad, DEFAULT_BAND).unwrap();
        assert_eq!((tm.boundary_mass, tm.theta_mass), (0.0, 0.0));
        assert!(tm.breakdown.is_empty());

        let infeasible = solve(&inst, 0.5).unwrap();
        assert!(matches!(
            theta_mass(&infeasible, &quad, DEFAULT_BAND),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn instance_validation() {
        let c = CostModel::brenier(1).unwrap();
        assert!(OtInstance::new(line(&[0.0], &[1.0]), line(&[1.0], &[2.0]), c.clone()).is_err());
        let planar = Arc::new(DiscreteMeasure::dirac(vec![0.0, 0.0], 1.0).unwrap());
        assert!(OtInstance::new(planar, line(&[1.0], &[1.0]), c).is_err());
    }

    #[test]
    fn result_json_round_trip() {
        let inst = bottleneck_1d(CostModel::brenier(1).unwrap());
        for t in [1.0, 2.5] {
            let r = solve(&inst, t).unwrap();
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<SolveResult>(&json).unwrap(), r);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud(points: Vec<Vec<f64>>, shift: f64) -> Arc<DiscreteMeasure> {
            let positions = points
                .into_iter()
                .map(|p| p.into_iter().map(|x| x + shift).collect())
                .collect();
            Arc::new(DiscreteMeasure::uniform(positions, 1.0).unwrap())
        }

        fn instance() -> impl Strategy<Value = OtInstance> {
            (1usize..=2, 1usize..=5).prop_flat_map(|(d, n)| {
                let pts = proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, d), n);
                (pts.clone(), pts, 0.0..1.5f64).prop_map(move |(xs, ys, shift)| {
                    OtInstance::new(
                        cloud(xs, 0.0),
                        cloud(ys, shift),
                        CostModel::brenier(d).unwrap(),
                    )
                    .unwrap()
                })
            })
        }

        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![Vec::new()];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for k in 0..n {
                    let mut q = p.clone();
                    q.insert(k, n - 1);
                    out.push(q);
                }
            }
            out
        }

        /// Cheapest permutation matching; uniform weights make one optimal.
        fn brute_force(inst: &OtInstance, t: f64) -> ExtReal {
            let n = inst.mu().len();
            let w = 1.0 / n as f64;
            permutations(n)
                .into_iter()
                .filter_map(|p| {
                    p.iter().enumerate().try_fold(0.0, |acc, (i, &j)| {
                        inst.cost()
                            .cost(t, inst.mu().position(i), inst.nu().position(j))
                            .unwrap()
                            .finite()
                            .map(|c| acc + w * c)
                    })
                })
                .min_by(f64::total_cmp)
                .map_or(ExtReal::Infinite, ExtReal::Finite)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn matches_permutation_oracle(inst in instance(), t in 0.2..3.0f64) {
                let r = solve(&inst, t).unwrap();
                match (r.value, brute_force(&inst, t)) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b),
                    (a, b) => prop_assert_eq!(a, b),
                }
                if r.is_finite() {
                    let bad = verify_optimality(&inst, &r, 1e-7);
                    prop_assert!(bad.is_empty(), "{:?}", bad);
                }
            }

            #[test]
            fn feasibility_is_monotone(inst in instance(), t1 in 0.1..3.0f64, dt in 0.0..1.0f64) {
                if feasible(&inst, t1).unwrap() {
                    prop_assert!(feasible(&inst, t1 + dt).unwrap());
                }
            }

            #[test]
            fn critical_time_is_sharp(inst in instance()) {
                let t = critical_time(&inst);
                if t > 0.0 {
                    prop_assert!(feasible(&inst, t).unwrap());
                    prop_assert!(!feasible(&inst, t * (1.0 - 1e-6)).unwrap());
                    prop_assert!(solve(&inst, t).unwrap().is_finite());
                }
            }

            #[test]
            fn curve_invariants_hold(inst in instance()) {
                let curve = cost_curve(&inst, 0.1, 4.0, 12).unwrap();
                let bad = curve.invariant_violations(1e-9);
                prop_assert!(bad.is_empty(), "{:?}", bad);
            }

            #[test]
            fn solving_is_deterministic(inst in instance(), t in 0.5..3.0f64) {
                let a = serde_json::to_string(&solve(&inst, t).unwrap()).unwrap();
                let b = serde_json::to_string(&solve(&inst, t).unwrap()).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
