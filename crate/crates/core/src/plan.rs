//! Sparse couplings between two discrete measures.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, DiscreteMeasure};

/// Relative tolerance on marginal sums.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// A nonnegative coupling stored as `(source atom, target atom, mass)`
/// entries sorted by `(i, j)`, each with positive mass.
///
/// A full plan has marginals equal to the source and target weights; a
/// partial plan only needs them bounded by those weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PlanJson", try_from = "PlanJson")]
pub struct TransportPlan {
    source: Arc<DiscreteMeasure>,
    target: Arc<DiscreteMeasure>,
    entries: Vec<Entry>,
    partial: bool,
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= MARGINAL_TOL * scale.max(f64::MIN_POSITIVE)
}

impl TransportPlan {
    pub fn new(
        source: Arc<DiscreteMeasure>,
        target: Arc<DiscreteMeasure>,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        partial: bool,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, mass) in entries {
            if i >= source.len() || j >= target.len() {
                return Err(Error::InvalidPlan(format!("entry ({i}, {j}) out of range")));
            }
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::InvalidPlan(format!(
                    "entry ({i}, {j}) has mass {mass}"
                )));
            }
            if map.insert((i, j), mass).is_some() {
                return Err(Error::InvalidPlan(format!("duplicate entry ({i}, {j})")));
            }
        }
        let plan = Self {
            source,
            target,
            entries: map
                .into_iter()
                .map(|((i, j), mass)| Entry { i, j, mass })
                .collect(),
            partial,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Drops non-positive masses and merges repeated pairs before validating.
    pub(crate) fn accumulate(
        source: Arc<DiscreteMeasure>,
        target: Arc<DiscreteMeasure>,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        partial: bool,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, m) in entries {
            *map.entry((i, j)).or_default() += m;
        }
        Self::new(
            source,
            target,
            map.into_iter()
                .filter(|&(_, m)| m > 0.0)
                .map(|((i, j), m)| (i, j, m)),
            partial,
        )
    }

    fn validate(&self) -> Result<()> {
        let (rows, cols) = self.marginals();
        let scale = self.source.total_mass().max(self.target.total_mass());
        for (k, (&r, &w)) in rows.iter().zip(self.source.weights()).enumerate() {
            let ok = if self.partial {
                r <= w + MARGINAL_TOL * scale
            } else {
                close(r, w, w)
            };
            if !ok {
                return Err(Error::InvalidPlan(format!(
                    "source atom {k}: row sum {r} vs weight {w}"
                )));
            }
        }
        for (k, (&c, &w)) in cols.iter().zip(self.target.weights()).enumerate() {
            let ok = if self.partial {
                c <= w + MARGINAL_TOL * scale
            } else {
                close(c, w, w)
            };
            if !ok {
                return Err(Error::InvalidPlan(format!(
                    "target atom {k}: column sum {c} vs weight {w}"
                )));
            }
        }
        Ok(())
    }

    /// The diagonal coupling of `measure` with itself.
    pub fn identity(measure: Arc<DiscreteMeasure>) -> Self {
        let entries = measure
            .weights()
            .iter()
            .enumerate()
            .map(|(i, &w)| Entry { i, j: i, mass: w })
            .collect();
        Self {
            source: measure.clone(),
            target: measure,
            entries,
            partial: false,
        }
    }

    /// `source ⊗ target / |source|`; requires equal total masses.
    pub fn product(source: Arc<DiscreteMeasure>, target: Arc<DiscreteMeasure>) -> Result<Self> {
        let total = source.total_mass();
        let entries: Vec<_> = (0..source.len())
            .flat_map(|i| (0..target.len()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, source.weight(i) * target.weight(j) / total))
            .collect();
        Self::new(source, target, entries, false)
    }

    pub fn source(&self) -> &Arc<DiscreteMeasure> {
        &self.source
    }

    pub fn target(&self) -> &Arc<DiscreteMeasure> {
        &self.target
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Mass on `(i, j)`, zero when absent.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.i, e.j).cmp(&(i, j)))
            .map(|k| self.entries[k].mass)
            .unwrap_or(0.0)
    }

    /// Row and column sums as weight vectors on the source and target atoms.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; self.source.len()];
        let mut cols = vec![0.0; self.target.len()];
        for e in &self.entries {
            rows[e.i] += e.mass;
            cols[e.j] += e.mass;
        }
        (rows, cols)
    }

    /// Keeps the entries whose atom pair `(x, y)` satisfies `keep`; the
    /// result is always flagged partial.
    pub fn restrict<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&[f64], &[f64]) -> bool,
    {
        self.restrict_indices(|i, j| keep(self.source.position(i), self.target.position(j)))
    }

    pub fn restrict_indices<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(usize, usize) -> bool,
    {
        Self {
            source: self.source.clone(),
            target: self.target.clone(),
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| keep(e.i, e.j))
                .collect(),
            partial: true,
        }
    }

    /// Same entries, flagged full. Fails unless the marginals match.
    pub fn into_full(self) -> Result<Self> {
        let plan = Self {
            partial: false,
            ..self
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `other <= self` entrywise (within `tol`), on the same atom registries.
    pub fn dominates(&self, other: &TransportPlan, tol: f64) -> bool {
        self.same_registries(other)
            && other
                .entries
                .iter()
                .all(|e| e.mass <= self.mass(e.i, e.j) + tol)
    }

    pub fn same_registries(&self, other: &TransportPlan) -> bool {
        same_atoms(&self.source, &other.source) && same_atoms(&self.target, &other.target)
    }

    /// Entrywise `self - other`, dropping entries that cancel to within `tol`.
    pub fn difference(&self, other: &TransportPlan, tol: f64) -> Result<Self> {
        if !self.same_registries(other) {
            return Err(Error::InvalidPlan(
                "plans live on different atom registries".into(),
            ));
        }
        let mut map: BTreeMap<(usize, usize), f64> =
            self.entries.iter().map(|e| ((e.i, e.j), e.mass)).collect();
        for e in &other.entries {
            *map.entry((e.i, e.j)).or_default() -= e.mass;
        }
        if let Some((&(i, j), &m)) = map.iter().find(|(_, &m)| m < -tol) {
            return Err(Error::InvalidPlan(format!(
                "difference is negative at ({i}, {j}): {m}"
            )));
        }
        Ok(Self {
            source: self.source.clone(),
            target: self.target.clone(),
            entries: map
                .into_iter()
                .filter(|&(_, m)| m > tol)
                .map(|((i, j), mass)| Entry { i, j, mass })
                .collect(),
            partial: true,
        })
    }

    pub fn to_json_value(&self) -> PlanJson {
        PlanJson {
            source_atoms: self.source.atoms(),
            target_atoms: self.target.atoms(),
            entries: self.entries.iter().map(|e| (e.i, e.j, e.mass)).collect(),
            partial: self.partial,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<PlanJson>(text)?.into_plan()
    }
}

pub(crate) fn same_atoms(a: &Arc<DiscreteMeasure>, b: &Arc<DiscreteMeasure>) -> bool {
    Arc::ptr_eq(a, b) || (a.len() == b.len() && a.positions() == b.positions())
}

/// Wire format: `{source_atoms, target_atoms, entries: [[i, j, mass], ...], partial}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub source_atoms: Vec<Atom>,
    pub target_atoms: Vec<Atom>,
    pub entries: Vec<(usize, usize, f64)>,
    pub partial: bool,
}

impl PlanJson {
    pub fn into_plan(self) -> Result<TransportPlan> {
        let source = Arc::new(DiscreteMeasure::from_atoms(self.source_atoms)?);
        let target = Arc::new(DiscreteMeasure::from_atoms(self.target_atoms)?);
        TransportPlan::new(source, target, self.entries, self.partial)
    }
}

impl From<TransportPlan> for PlanJson {
    fn from(plan: TransportPlan) -> Self {
        plan.to_json_value()
    }
}

impl TryFrom<PlanJson> for TransportPlan {
    type Error = Error;

    fn try_from(raw: PlanJson) -> Result<Self> {
        raw.into_plan()
    }
}

/// Glues `first: mu -> alpha` and `second: alpha -> nu` through the common
/// middle marginal: `mass(i, k) = sum_j first(i, j) second(j, k) / alpha(j)`.
pub fn compose(first: &TransportPlan, second: &TransportPlan) -> Result<TransportPlan> {
    if !same_atoms(first.target(), second.source()) {
        return Err(Error::InvalidPlan("middle atom registries differ".into()));
    }
    let (_, alpha) = first.marginals();
    let (beta, _) = second.marginals();
    let scale = first.total_mass().max(second.total_mass());
    for (j, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
        if (a - b).abs() > MARGINAL_TOL * scale {
            return Err(Error::MarginalMismatch {
                index: j,
                left: a,
                right: b,
            });
        }
    }
    let mut by_middle: Vec<Vec<Entry>> = vec![Vec::new(); alpha.len()];
    for e in second.entries() {
        by_middle[e.i].push(*e);
    }
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in first.entries() {
        let ratio = e.mass / alpha[e.j];
        for f in &by_middle[e.j] {
            *acc.entry((e.i, f.j)).or_default() += ratio * f.mass;
        }
    }
    Ok(TransportPlan {
        source: first.source().clone(),
        target: second.target().clone(),
        entries: acc
            .into_iter()
            .map(|((i, j), mass)| Entry { i, j, mass })
            .collect(),
        partial: first.is_partial() || second.is_partial(),
    })
}
