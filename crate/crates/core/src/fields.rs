//! Analytic test fields evaluated on point clouds.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::PointCloud;

/// High-frequency field `48 sin(8πx) sin(7πy) sin(6πx)`.
pub fn field_f(x: f64, y: f64) -> f64 {
    48.0 * (8.0 * PI * x).sin() * (7.0 * PI * y).sin() * (6.0 * PI * x).sin()
}

/// Low-frequency field `12 sin(2πx) (4 sin(2πx) − 4 sin(2πy))`.
pub fn field_g(x: f64, y: f64) -> f64 {
    let sx = (2.0 * PI * x).sin();
    12.0 * sx * (4.0 * sx - 4.0 * (2.0 * PI * y).sin())
}

fn require_2d(cloud: &PointCloud) -> Result<()> {
    if cloud.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "field needs 2D points, cloud is {}D",
            cloud.dim()
        )));
    }
    Ok(())
}

pub fn eval_field_f(cloud: &PointCloud) -> Result<Vec<f64>> {
    require_2d(cloud)?;
    Ok(cloud.points().map(|p| field_f(p[0], p[1])).collect())
}

pub fn eval_field_g(cloud: &PointCloud) -> Result<Vec<f64>> {
    require_2d(cloud)?;
    Ok(cloud.points().map(|p| field_g(p[0], p[1])).collect())
}

/// `(1 + x − 2y + z/2)^degree` in any dimension; missing axes read as zero.
pub fn eval_polynomial(cloud: &PointCloud, degree: u32) -> Vec<f64> {
    const WEIGHTS: [f64; 3] = [1.0, -2.0, 0.5];
    cloud
        .points()
        .map(|p| {
            let lin: f64 = 1.0 + p.iter().zip(WEIGHTS).map(|(x, w)| x * w).sum::<f64>();
            lin.powi(degree as i32)
        })
        .collect()
}

/// Smooth temperature-like field for 3D clouds: a warm core that cools
/// toward the mantle, modulated along the axis.
pub fn eval_smooth_3d(cloud: &PointCloud) -> Vec<f64> {
    cloud
        .points()
        .map(|p| {
            let x = p[0];
            let y = p.get(1).copied().unwrap_or(0.0);
            let z = p.get(2).copied().unwrap_or(0.0);
            let r2 = x * x + y * y;
            300.0 + 80.0 * (-4.0 * r2).exp() * (0.5 + 0.5 * (PI * z).cos()) + 20.0 * z
        })
        .collect()
}
