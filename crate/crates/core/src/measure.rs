//! Finitely supported nonnegative measures.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this (Euclidean distance) are merged at construction.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: Vec<f64>,
    pub weight: f64,
}

/// A weighted atom cloud with distinct positions and positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    positions: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl DiscreteMeasure {
    /// Builds a measure, merging atoms within `MERGE_TOL` of an earlier atom
    /// (the earlier position is kept). Atom order is otherwise preserved.
    pub fn new(positions: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        let dim = positions
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidMeasure("no atoms".into()))?;
        if dim == 0 {
            return Err(Error::InvalidMeasure(
                "atoms must have positive dimension".into(),
            ));
        }
        let mut kept_pos: Vec<Vec<f64>> = Vec::with_capacity(positions.len());
        let mut kept_w: Vec<f64> = Vec::with_capacity(positions.len());
        for (p, w) in positions.into_iter().zip(weights) {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite coordinate".into()));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "weight must be positive and finite, got {w}"
                )));
            }
            let dup = kept_pos.iter().position(|q| {
                q.iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    <= MERGE_TOL
            });
            match dup {
                Some(k) => kept_w[k] += w,
                None => {
                    kept_pos.push(p);
                    kept_w.push(w);
                }
            }
        }
        let total_mass = kept_w.iter().sum();
        Ok(Self {
            dim,
            positions: kept_pos,
            weights: kept_w,
            total_mass,
        })
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        let (positions, weights) = atoms.into_iter().map(|a| (a.position, a.weight)).unzip();
        Self::new(positions, weights)
    }

    pub fn dirac(position: Vec<f64>, mass: f64) -> Result<Self> {
        Self::new(vec![position], vec![mass])
    }

    /// Equal weights summing to `total_mass`.
    pub fn uniform(positions: Vec<Vec<f64>>, total_mass: f64) -> Result<Self> {
        let n = positions.len() as f64;
        let w = vec![total_mass / n; positions.len()];
        Self::new(positions, w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn atoms(&self) -> Vec<Atom> {
        self.positions
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| Atom {
                position: p.clone(),
                weight: w,
            })
            .collect()
    }

    /// Same atoms with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.positions.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }

    /// Reads `x_1,...,x_d,weight` rows; the header is required.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d = headers
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::InvalidMeasure("header must be x_1,...,x_d,weight".into()))?;
        let expected: Vec<String> = (1..=d)
            .map(|k| format!("x_{k}"))
            .chain(["weight".to_string()])
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::InvalidMeasure(format!(
                "header must be {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut positions = Vec::new();
        let mut weights = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidMeasure(format!("row {}: {e}", line + 1)))?;
            weights.push(values[d]);
            positions.push(values[..d].to_vec());
        }
        Self::new(positions, weights)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.dim)
            .map(|k| format!("x_{k}"))
            .chain(["weight".to_string()])
            .collect();
        wtr.write_record(&header)?;
        for (p, w) in self.positions.iter().zip(&self.weights) {
            wtr.write_record(p.iter().chain(std::iter::once(w)).map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicates_and_sums_mass() {
        let m = DiscreteMeasure::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1e-13]],
            vec![0.25, 0.5, 0.25],
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteMeasure::new(vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m =
            DiscreteMeasure::new(vec![vec![0.5, -1.25], vec![3.0, 0.1]], vec![0.3, 0.7]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,weight\n"));
        assert_eq!(DiscreteMeasure::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn csv_requires_header() {
        assert!(DiscreteMeasure::read_csv("0.0,1.0\n".as_bytes()).is_err());
        assert!(DiscreteMeasure::read_csv("x_1,mass\n0.0,1.0\n".as_bytes()).is_err());
        assert!(DiscreteMeasure::read_csv("x_1,weight\n0.0,abc\n".as_bytes()).is_err());
        let m = DiscreteMeasure::read_csv("x_1, weight\n0.0, 1.0\n2.0,1.0\n".as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
    }
}
