//! Structured-text description of a set, as used in experiment configs.
//!
//! ```toml
//! kind = "hpolyhedron"
//! dimension = 2
//! rows = [ { normal = [1.0, 1.0], offset = 1.0 },
//!          { normal = [-1.0, 0.0], offset = 0.0 },
//!          { normal = [0.0, -1.0], offset = 0.0 } ]
//! ```
//!
//! Other kinds: `ball` (`center`, `radius`), `box` (`lower`, `upper`) and
//! `intersection` (`members`, a list of set tables).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ConvexSet, SetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Hpolyhedron {
        dimension: usize,
        rows: Vec<RowSpec>,
    },
    Ball {
        dimension: usize,
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        dimension: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Intersection {
        dimension: usize,
        members: Vec<SetSpec>,
    },
}

fn dim_check(declared: usize, found: usize) -> Result<(), SetError> {
    if declared != found {
        return Err(SetError::DimensionMismatch {
            expected: declared,
            found,
        });
    }
    Ok(())
}

impl SetSpec {
    pub fn dimension(&self) -> usize {
        match self {
            SetSpec::Hpolyhedron { dimension, .. }
            | SetSpec::Ball { dimension, .. }
            | SetSpec::Box { dimension, .. }
            | SetSpec::Intersection { dimension, .. } => *dimension,
        }
    }

    pub fn build(&self) -> Result<ConvexSet, SetError> {
        let dim = self.dimension();
        let set = match self {
            SetSpec::Hpolyhedron { rows, .. } => {
                for r in rows {
                    dim_check(dim, r.normal.len())?;
                }
                ConvexSet::polyhedron(rows.iter().map(|r| (DVector::from_vec(r.normal.clone()), r.offset)).collect())?
            }
            SetSpec::Ball { center, radius, .. } => {
                dim_check(dim, center.len())?;
                ConvexSet::ball(DVector::from_vec(center.clone()), *radius)?
            }
            SetSpec::Box { lower, upper, .. } => {
                dim_check(dim, lower.len())?;
                dim_check(dim, upper.len())?;
                ConvexSet::axis_box(DVector::from_vec(lower.clone()), DVector::from_vec(upper.clone()))?
            }
            SetSpec::Intersection { members, .. } => {
                ConvexSet::intersection(members.iter().map(|m| m.build()).collect::<Result<_, _>>()?)?
            }
        };
        dim_check(dim, set.dim())?;
        Ok(set)
    }
}
