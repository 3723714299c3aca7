use crate::error::{Error, Result};
use crate::linalg::{pivoted_orthonormal_completion, DenseMatrix};
use crate::mesh::PointCloud;

/// Relative column-norm threshold below which Vandermonde directions are
/// treated as numerically dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Polynomials of total degree at most `order - 1` in `dim` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialSpace {
    order: usize,
    dim: usize,
    exponents: Vec<[u8; 3]>,
}

impl PolynomialSpace {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidArgument(
                "wavelet order must be at least 1".into(),
            ));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        let max_degree = order - 1;
        let mut exponents = Vec::new();
        for degree in 0..=max_degree {
            for a in (0..=degree).rev() {
                if dim == 1 {
                    if a == degree {
                        exponents.push([a as u8, 0, 0]);
                    }
                    continue;
                }
                for b in (0..=degree - a).rev() {
                    let c = degree - a - b;
                    if dim == 2 && c != 0 {
                        continue;
                    }
                    exponents.push([a as u8, b as u8, c as u8]);
                }
            }
        }
        Ok(Self {
            order,
            dim,
            exponents,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of monomials, `C(order - 1 + dim, dim)`.
    pub fn q(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[[u8; 3]] {
        &self.exponents
    }

    /// Leaf capacity that leaves room for a full scaling space plus details.
    pub fn leaf_capacity(&self) -> usize {
        2 * self.q()
    }

    /// Monomials evaluated at `rows`, with coordinates centered on the box
    /// midpoint and scaled by its half-widths.
    pub fn vandermonde(
        &self,
        cloud: &PointCloud,
        rows: &[usize],
        bbox: &[(f64, f64)],
    ) -> DenseMatrix {
        let (center, inv_half): (Vec<f64>, Vec<f64>) = bbox
            .iter()
            .map(|&(lo, hi)| {
                let half = 0.5 * (hi - lo);
                (0.5 * (hi + lo), if half > 0.0 { 1.0 / half } else { 1.0 })
            })
            .unzip();
        let mut v = DenseMatrix::zeros(rows.len(), self.q());
        let mut powers = vec![[1.0f64; 3]; self.order];
        for (r, &idx) in rows.iter().enumerate() {
            let p = cloud.point(idx);
            for (axis, (&x, (&c, &s))) in p.iter().zip(center.iter().zip(&inv_half)).enumerate() {
                let t = (x - c) * s;
                for k in 1..self.order {
                    powers[k][axis] = powers[k - 1][axis] * t;
                }
            }
            for (col, e) in self.exponents.iter().enumerate() {
                let mut val = 1.0;
                for axis in 0..self.dim {
                    val *= powers[e[axis] as usize][axis];
                }
                v.set(r, col, val);
            }
        }
        v
    }

    /// Orthonormal block for a group: the first `rank` columns span the
    /// group's polynomial space, the rest its orthogonal complement.
    pub fn local_scaling_block(
        &self,
        cloud: &PointCloud,
        rows: &[usize],
        bbox: &[(f64, f64)],
    ) -> (DenseMatrix, usize) {
        let v = self.vandermonde(cloud, rows, bbox);
        pivoted_orthonormal_completion(&v, RANK_TOLERANCE)
    }
}
