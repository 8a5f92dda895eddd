//! Refinement experiments: discretize source and target at increasing
//! resolution, then track how the cost curve and the boundary mass of
//! optimal plans behave.

mod discretize;
mod report;

pub use discretize::{discretize_density, sample_uniform, Density, Region};
pub use report::{emit_report, write_csv, ReportFormat};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, CostSpec};
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::measure::{Atom, DiscreteMeasure};
use crate::solver::{self, CostCurve, GridSpec, OtInstance};

/// Dead-band on the least-squares slope of a metric against `ln(level)`.
pub const TREND_DEADBAND: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Cell-centred discretization with `level` cells per axis.
    Density {
        region: Region,
        density: Density,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    /// `level^d` seeded uniform samples.
    Sampled {
        region: Region,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    /// Fixed atoms, independent of the level.
    Atoms { atoms: Vec<Atom> },
    /// Sum of the component measures.
    Mixture { components: Vec<MeasureSpec> },
}

fn unit_mass() -> f64 {
    1.0
}

impl MeasureSpec {
    pub fn build(&self, level: usize, seed: u64) -> Result<DiscreteMeasure> {
        match self {
            MeasureSpec::Density {
                region,
                density,
                mass,
            } => discretize_density(density, region, level, *mass),
            MeasureSpec::Sampled { region, mass } => {
                let count = level
                    .checked_pow(region.dim() as u32)
                    .ok_or_else(|| Error::InvalidConfig("sample count overflows".into()))?;
                sample_uniform(region, count, *mass, seed)
            }
            MeasureSpec::Atoms { atoms } => DiscreteMeasure::from_atoms(atoms.clone()),
            MeasureSpec::Mixture { components } => {
                let mut atoms = Vec::new();
                for (k, c) in components.iter().enumerate() {
                    atoms.extend(c.build(level, seed.wrapping_add(k as u64 + 1))?.atoms());
                }
                DiscreteMeasure::from_atoms(atoms)
            }
        }
    }
}

/// A time either given directly or as an offset above the critical time of
/// the coarsest level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSpec {
    Absolute(f64),
    AboveCritical(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cost: CostSpec,
    pub source: MeasureSpec,
    pub target: MeasureSpec,
    pub levels: Vec<usize>,
    pub t_grid: GridSpec,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default)]
    pub theta_times: Vec<TimeSpec>,
    pub seed: u64,
}

fn default_band() -> f64 {
    solver::DEFAULT_BAND
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.contains(&0) || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "levels must be positive and strictly increasing: {:?}",
                self.levels
            )));
        }
        GridSpec::new(self.t_grid.t_min, self.t_grid.t_max, self.t_grid.steps)?;
        if !(self.band > 0.0 && self.band < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "band must lie in (0, 1), got {}",
                self.band
            )));
        }
        for t in &self.theta_times {
            match *t {
                TimeSpec::Absolute(v) | TimeSpec::AboveCritical(v) if !(v.is_finite()) => {
                    return Err(Error::InvalidConfig(format!("time {v} is not finite")))
                }
                TimeSpec::Absolute(v) if v <= 0.0 => return Err(Error::NonPositiveTime(v)),
                TimeSpec::AboveCritical(v) if v <= 0.0 => {
                    return Err(Error::InvalidConfig(format!(
                        "offset above the critical time must be positive, got {v}"
                    )))
                }
                _ => {}
            }
        }
        self.cost.build()?;
        Ok(())
    }

    fn instance(&self, cost: &CostModel, level: usize) -> Result<OtInstance> {
        let seed = self
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(level as u64);
        let mu = self.source.build(level, seed)?;
        let nu = self.target.build(level, seed ^ 0x5555_5555)?;
        OtInstance::new(Arc::new(mu), Arc::new(nu), cost.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Flat,
    Increasing,
}

/// Sign of the least-squares slope of `metric` against `ln(level)`, with
/// `|slope| < TREND_DEADBAND` reported as flat. `None` with fewer than two
/// points.
pub fn trend(points: &[(usize, f64)]) -> Option<Trend> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (x - mx) * (p.1 - my))
        .sum();
    let slope = sxy / sxx;
    Some(if slope.abs() < TREND_DEADBAND {
        Trend::Flat
    } else if slope < 0.0 {
        Trend::Decreasing
    } else {
        Trend::Increasing
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub size: f64,
    pub from: f64,
    pub to: f64,
}

/// Largest `|C(t_{k+1}) - C(t_k)|` between consecutive feasible samples.
pub fn max_jump(curve: &CostCurve) -> Option<Jump> {
    let pts: Vec<(f64, f64)> = curve
        .samples
        .iter()
        .filter_map(|s| s.value.finite().map(|v| (s.t, v)))
        .collect();
    pts.windows(2)
        .map(|w| Jump {
            size: (w[1].1 - w[0].1).abs(),
            from: w[0].0,
            to: w[1].0,
        })
        .fold(None, |best: Option<Jump>, j| match best {
            Some(b) if b.size >= j.size => Some(b),
            _ => Some(j),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThetaSample {
    Measured {
        t: f64,
        value: f64,
        boundary_mass: f64,
        theta_mass: f64,
        inconclusive_mass: f64,
    },
    /// The requested time is not above this level's critical time.
    Skipped { t: f64 },
}

impl ThetaSample {
    pub fn t(&self) -> f64 {
        match *self {
            ThetaSample::Measured { t, .. } | ThetaSample::Skipped { t } => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub source_atoms: usize,
    pub target_atoms: usize,
    pub critical_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CostCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jump: Option<Jump>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<ThetaSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Continuity,
    Theta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub levels: Vec<LevelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_trend: Option<Trend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_trend: Option<Trend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_trend: Option<Trend>,
}

impl RefinementReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Max jump per level, in level order.
    pub fn jumps(&self) -> Vec<(usize, f64)> {
        self.levels
            .iter()
            .filter_map(|l| l.max_jump.as_ref().map(|j| (l.level, j.size)))
            .collect()
    }

    /// `(level, boundary_mass, theta_mass)` at the `k`-th requested time,
    /// for levels where it was measured.
    pub fn theta_series(&self, k: usize) -> Vec<(usize, f64, f64)> {
        self.levels
            .iter()
            .filter_map(|l| match l.theta.get(k) {
                Some(&ThetaSample::Measured {
                    boundary_mass,
                    theta_mass,
                    ..
                }) => Some((l.level, boundary_mass, theta_mass)),
                _ => None,
            })
            .collect()
    }
}

fn levels_in_parallel<F>(config: &ExperimentConfig, f: F) -> Result<Vec<LevelReport>>
where
    F: Fn(&CostModel, usize) -> Result<LevelReport> + Sync,
{
    config.validate()?;
    let cost = config.cost.build()?;
    config
        .levels
        .par_iter()
        .map(|&level| f(&cost, level))
        .collect()
}

/// For each level: exact critical time, cost curve on the grid plus `T`,
/// and the largest jump between consecutive feasible samples.
pub fn run_continuity_experiment(config: &ExperimentConfig) -> Result<RefinementReport> {
    let g = &config.t_grid;
    let levels = levels_in_parallel(config, |cost, level| {
        let inst = config.instance(cost, level)?;
        let curve = solver::cost_curve(&inst, g.t_min, g.t_max, g.steps)?;
        Ok(LevelReport {
            level,
            source_atoms: inst.mu().len(),
            target_atoms: inst.nu().len(),
            critical_time: curve.critical_time,
            max_jump: max_jump(&curve),
            curve: Some(curve),
            theta: Vec::new(),
        })
    })?;
    let mut report = RefinementReport {
        experiment: ExperimentKind::Continuity,
        config: config.clone(),
        levels,
        jump_trend: None,
        boundary_trend: None,
        theta_trend: None,
    };
    report.jump_trend = trend(&report.jumps());
    Ok(report)
}

/// For each level and requested time: boundary-band mass and Θ mass of an
/// optimal plan. Trends are taken over the first requested time.
pub fn run_theta_experiment(config: &ExperimentConfig) -> Result<RefinementReport> {
    config.validate()?;
    if config.theta_times.is_empty() {
        return Err(Error::InvalidConfig(
            "theta experiment needs at least one time".into(),
        ));
    }
    let cost = config.cost.build()?;
    let coarsest_t = match config.levels.first() {
        Some(&l)
            if config
                .theta_times
                .iter()
                .any(|t| matches!(t, TimeSpec::AboveCritical(_))) =>
        {
            solver::critical_time(&config.instance(&cost, l)?)
        }
        _ => 0.0,
    };
    let times: Vec<f64> = config
        .theta_times
        .iter()
        .map(|t| match *t {
            TimeSpec::Absolute(v) => v,
            TimeSpec::AboveCritical(dt) => coarsest_t + dt,
        })
        .collect();
    let levels = levels_in_parallel(config, |cost, level| {
        let inst = config.instance(cost, level)?;
        let critical = solver::critical_time(&inst);
        let theta = times
            .iter()
            .map(|&t| {
                if t <= critical {
                    return Ok(ThetaSample::Skipped { t });
                }
                let r = solver::solve(&inst, t)?;
                let ExtReal::Finite(value) = r.value else {
                    return Ok(ThetaSample::Skipped { t });
                };
                let tm = solver::theta_mass(&r, cost, config.band)?;
                Ok(ThetaSample::Measured {
                    t,
                    value,
                    boundary_mass: tm.boundary_mass,
                    theta_mass: tm.theta_mass,
                    inconclusive_mass: tm.inconclusive_mass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LevelReport {
            level,
            source_atoms: inst.mu().len(),
            target_atoms: inst.nu().len(),
            critical_time: critical,
            curve: None,
            max_jump: None,
            theta,
        })
    })?;
    let mut report = RefinementReport {
        experiment: ExperimentKind::Theta,
        config: config.clone(),
        levels,
        jump_trend: None,
        boundary_trend: None,
        theta_trend: None,
    };
    let series = report.theta_series(0);
    report.boundary_trend = trend(&series.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>());
    report.theta_trend = trend(&series.iter().map(|s| (s.0, s.2)).collect::<Vec<_>>());
    Ok(report)
}

/// Runs the experiment the configuration asks for: Θ if it lists times,
/// continuity otherwise.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RefinementReport> {
    if config.theta_times.is_empty() {
        run_continuity_experiment(config)
    } else {
        run_theta_experiment(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(a: f64, b: f64) -> MeasureSpec {
        MeasureSpec::Density {
            region: Region::new(vec![a], vec![b]).unwrap(),
            density: Density::Uniform,
            mass: 1.0,
        }
    }

    fn shift_config(levels: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            cost: CostSpec::named("brenier", 1).unwrap(),
            source: interval(0.0, 1.0),
            target: interval(2.0, 3.0),
            levels,
            t_grid: GridSpec::new(1.0, 4.0, 10).unwrap(),
            band: 1e-3,
            theta_times: Vec::new(),
            seed: 1,
        }
    }

    #[test]
    fn trend_verdicts() {
        assert_eq!(trend(&[(4, 1.0)]), None);
        assert_eq!(
            trend(&[(4, 1.0), (8, 0.5), (16, 0.25)]),
            Some(Trend::Decreasing)
        );
        assert_eq!(trend(&[(4, 0.1), (8, 0.101)]), Some(Trend::Flat));
        assert_eq!(trend(&[(4, 0.0), (8, 1.0)]), Some(Trend::Increasing));
    }

    #[test]
    fn continuity_report_shape() {
        let report = run_continuity_experiment(&shift_config(vec![2, 4])).unwrap();
        assert_eq!(
            report.levels.iter().map(|l| l.level).collect::<Vec<_>>(),
            [2, 4]
        );
        for l in &report.levels {
            assert_eq!(l.critical_time, 2.0);
            let curve = l.curve.as_ref().unwrap();
            assert!(curve.invariant_violations(1e-9).is_empty());
            assert_eq!(curve.samples.len(), 10); // T = 2 lies on the grid
            let j = l.max_jump.as_ref().unwrap();
            assert_eq!(j.from, 2.0); // the steepest drop sits right after T
        }
    }

    #[test]
    fn identical_measures_have_no_jumps() {
        let mut config = shift_config(vec![2, 3]);
        config.target = config.source.clone();
        let report = run_continuity_experiment(&config).unwrap();
        assert!(report.jumps().iter().all(|&(_, j)| j == 0.0));
        assert_eq!(report.jump_trend, Some(Trend::Flat));
    }

    #[test]
    fn theta_far_in_the_future_is_zero() {
        let mut config = shift_config(vec![2, 4, 8]);
        config.theta_times = vec![TimeSpec::Absolute(100.0), TimeSpec::AboveCritical(0.2)];
        let report = run_theta_experiment(&config).unwrap();
        for l in &report.levels {
            match l.theta[0] {
                ThetaSample::Measured {
                    boundary_mass,
                    theta_mass,
                    ..
                } => assert_eq!((boundary_mass, theta_mass), (0.0, 0.0)),
                ref s => panic!("unexpected {s:?}"),
            }
            assert!((l.theta[1].t() - 2.2).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_skips_subcritical_times() {
        let mut config = shift_config(vec![2]);
        config.theta_times = vec![TimeSpec::Absolute(1.5)];
        let report = run_theta_experiment(&config).unwrap();
        assert_eq!(
            report.levels[0].theta,
            vec![ThetaSample::Skipped { t: 1.5 }]
        );
    }

    #[test]
    fn config_validation() {
        let mut c = shift_config(vec![4, 4]);
        assert!(c.validate().is_err());
        c.levels = vec![4, 8];
        c.band = 0.0;
        assert!(c.validate().is_err());
        c.band = 1e-3;
        c.theta_times = vec![TimeSpec::Absolute(-1.0)];
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&shift_config(vec![4])).unwrap();
        assert_eq!(
            ExperimentConfig::from_json(&json).unwrap(),
            shift_config(vec![4])
        );
    }

    #[test]
    fn measure_specs() {
        let dirac = MeasureSpec::Atoms {
            atoms: vec![Atom {
                position: vec![0.0],
                weight: 0.5,
            }],
        };
        let half = MeasureSpec::Density {
            region: Region::new(vec![1.0], vec![2.0]).unwrap(),
            density: Density::Uniform,
            mass: 0.5,
        };
        let mix = MeasureSpec::Mixture {
            components: vec![dirac, half],
        };
        let m = mix.build(4, 0).unwrap();
        assert_eq!(m.len(), 5);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let sampled = MeasureSpec::Sampled {
            region: Region::new(vec![0.0; 2], vec![1.0; 2]).unwrap(),
            mass: 1.0,
        };
        assert_eq!(sampled.build(3, 9).unwrap().len(), 9);
        assert_eq!(sampled.build(3, 9).unwrap(), sampled.build(3, 9).unwrap());
    }
}
