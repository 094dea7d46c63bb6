//! Image-plane to ground-plane projection via a planar homography.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_DET: f64 = 1e-9;
const MIN_W: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevCalibration {
    /// Row-major 3×3 homography from pixel coordinates to ground feet.
    pub homography: [f64; 9],
    #[serde(default = "default_lane_width")]
    pub lane_width_ft: f64,
    #[serde(default = "default_marking_length")]
    pub lane_marking_length_ft: f64,
}

fn default_lane_width() -> f64 {
    12.0
}

fn default_marking_length() -> f64 {
    10.0
}

impl BevCalibration {
    pub fn new(homography: [f64; 9]) -> Result<Self> {
        let calib = Self {
            homography,
            lane_width_ft: default_lane_width(),
            lane_marking_length_ft: default_marking_length(),
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn validate(&self) -> Result<()> {
        let det = self.matrix().determinant();
        if !(det.abs() > MIN_DET) {
            return Err(Error::Config(format!("homography is singular (det = {det:e})")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let calib: Self = serde_json::from_str(text)?;
        calib.validate()?;
        Ok(calib)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.homography)
    }

    /// Estimates the homography from four pixel/ground correspondences, e.g.
    /// the corners of lane markings of known width and length.
    pub fn from_correspondences(pixels: [(f64, f64); 4], ground_ft: [(f64, f64); 4]) -> Result<Self> {
        // h33 fixed to 1: eight unknowns, two equations per point.
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for (i, ((u, v), (x, y))) in pixels.iter().zip(ground_ft.iter()).enumerate() {
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[*u, *v, 1.0, 0.0, 0.0, 0.0, -u * x, -v * x]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, *u, *v, 1.0, -u * y, -v * y]);
            b[r] = *x;
            b[r + 1] = *y;
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Config("degenerate calibration points".into()))?;
        Self::new([h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0])
    }

    /// Ground-plane position of pixel `(u, v)`.
    pub fn project(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        apply(&self.matrix(), u, v)
    }

    /// Pixel position of ground point `(x, y)`.
    pub fn inverse_project(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::Config("homography is singular".into()))?;
        apply(&inv, x, y)
    }
}

fn apply(h: &Matrix3<f64>, u: f64, v: f64) -> Result<(f64, f64)> {
    let p = h * Vector3::new(u, v, 1.0);
    if !(p.z.abs() > MIN_W) {
        return Err(Error::Projection(format!("point ({u}, {v}) maps to the horizon")));
    }
    Ok((p.x / p.z, p.y / p.z))
}
