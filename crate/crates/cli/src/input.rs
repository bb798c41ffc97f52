//! JSON descriptions of bodies and matrices.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use symcap::bodies::ConvexBody;
use symcap::{Error, Result};

/// A convex body as written in a JSON file. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyInput {
    Ball {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    /// `{ <S z, z> / 2 < 1 }`.
    Ellipsoid { s: Vec<Vec<f64>> },
    EllipsoidAxes { semi_axes: Vec<f64> },
    Polytope { vertices: Vec<Vec<f64>> },
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    Cuboid { half_widths: Vec<f64> },
    Product { left: Box<BodyInput>, right: Box<BodyInput> },
    /// Factors placed in the symplectic planes `(q_i, p_i)`.
    PlanarProduct { factors: Vec<BodyInput> },
    PSum { left: Box<BodyInput>, right: Box<BodyInput>, p: f64 },
    Scaled { body: Box<BodyInput>, factor: f64 },
    Translated { body: Box<BodyInput>, offset: Vec<f64> },
    Rounded { body: Box<BodyInput>, eps: f64 },
    Linear { body: Box<BodyInput>, matrix: Vec<Vec<f64>> },
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    let c = rows[0].len();
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::DimensionMismatch { expected: c, got: bad.len() });
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vec_of(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

impl BodyInput {
    pub fn build(&self) -> Result<ConvexBody> {
        match self {
            BodyInput::Ball { radius, center, dim } => {
                let c = match (center, dim) {
                    (Some(c), Some(d)) if c.len() != *d => {
                        return Err(Error::DimensionMismatch { expected: *d, got: c.len() })
                    }
                    (Some(c), _) => vec_of(c),
                    (None, Some(d)) => DVector::zeros(*d),
                    (None, None) => return Err(Error::InvalidInput("ball needs a center or a dim".into())),
                };
                ConvexBody::ball(*radius, c)
            }
            BodyInput::Ellipsoid { s } => ConvexBody::ellipsoid(matrix_from_rows(s)?),
            BodyInput::EllipsoidAxes { semi_axes } => ConvexBody::ellipsoid_axes(semi_axes),
            BodyInput::Polytope { vertices } => ConvexBody::polytope(vertices.iter().map(|v| vec_of(v)).collect()),
            BodyInput::Halfspaces { normals, offsets } => {
                let ns: Vec<DVector<f64>> = normals.iter().map(|v| vec_of(v)).collect();
                ConvexBody::from_halfspaces(&ns, offsets)
            }
            BodyInput::Cuboid { half_widths } => ConvexBody::cuboid(half_widths),
            BodyInput::Product { left, right } => Ok(ConvexBody::product(left.build()?, right.build()?)),
            BodyInput::PlanarProduct { factors } => {
                ConvexBody::planar_product(factors.iter().map(|f| f.build()).collect::<Result<_>>()?)
            }
            BodyInput::PSum { left, right, p } => ConvexBody::p_sum(left.build()?, right.build()?, *p),
            BodyInput::Scaled { body, factor } => body.build()?.scaled(*factor),
            BodyInput::Translated { body, offset } => body.build()?.translated(vec_of(offset)),
            BodyInput::Rounded { body, eps } => body.build()?.rounded(*eps),
            BodyInput::Linear { body, matrix } => body.build()?.linear_image(matrix_from_rows(matrix)?),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("body description: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("body description serializes")
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn read_body(path: &Path) -> Result<ConvexBody> {
    BodyInput::from_json(&read(path)?)?.build()
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&read(path)?)
        .map_err(|e| Error::InvalidInput(format!("{}: expected nested array of numbers: {e}", path.display())))?;
    matrix_from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_round_trip() {
        let text = r#"{"kind":"rounded","eps":0.1,"body":{"kind":"p_sum","p":2.0,
            "left":{"kind":"polytope","vertices":[[1,0],[0,1],[-1,-1]]},
            "right":{"kind":"ellipsoid_axes","semi_axes":[1.0,0.5]}}}"#;
        let a = BodyInput::from_json(text).unwrap();
        let b = BodyInput::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.build().unwrap().dim(), 2);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(BodyInput::from_json(r#"{"kind":"cuboid","half_widths":[1],"extra":1}"#).is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix_from_rows(&[vec![1.0, 0.0], vec![1.0]]).is_err());
    }
}
